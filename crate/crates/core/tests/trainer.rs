use longtail_core::attributes::{compute_dataset_attributes, AttributeConfig, AttributeVector};
use longtail_core::contrastive::{AmclConfig, FdclConfig, NegativeQueue};
use longtail_core::geom::Vec2;
use longtail_core::model::{Model, ModelConfig, ModelInput};
use longtail_core::nn::{max_relative_error, Checkpoint, ParamSet};
use longtail_core::trainer::{
    batch_objective, plan_batch, run_training, write_log, SampleTargets, TrainConfig, TrainError, TrainedModel,
};
use longtail_core::trajdata::{generate_synthetic_dataset, Scene, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(n: usize, seed: u64) -> (Vec<Scene>, Vec<AttributeVector>) {
    let scenes = generate_synthetic_dataset(&SynthConfig {
        n,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    let attrs = compute_dataset_attributes(&scenes, &AttributeConfig::default()).unwrap();
    (scenes, attrs)
}

fn short_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        clusters: 3,
        kmeans_restarts: 3,
        model: ModelConfig::micro(),
        amcl: AmclConfig {
            n_neg: 4,
            queue_size: 24,
            ..AmclConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// `L_total` of a two-scene batch against a held-fixed plan: keys, queue
/// negatives, pseudo-labels and all detached weights do not move with the
/// parameters.
#[test]
fn total_objective_gradient_matches_finite_differences() {
    let (scenes, attrs) = dataset(2, 11);
    let (model, ps) = Model::new(ModelConfig::micro(), scenes[0].t_p, 5).unwrap();
    let (_, key_ps) = Model::new(ModelConfig::micro(), scenes[0].t_p, 6).unwrap();
    let mc = model.cfg;
    let inputs: Vec<ModelInput> = scenes
        .iter()
        .map(|s| ModelInput::from_scene(s, None, mc.max_neighbors, mc.position_scale))
        .collect();
    let truths: Vec<Vec<Vec2>> = scenes.iter().map(ModelInput::local_future).collect();
    let keys: Vec<Vec<f64>> = inputs.iter().map(|x| model.contrast_feature(&key_ps, x)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let amcl = AmclConfig {
        n_neg: 3,
        queue_size: 4,
        ..AmclConfig::default()
    };
    let fdcl = FdclConfig::default();
    let mut queue = NegativeQueue::new(amcl.queue_size);
    for _ in 0..4 {
        queue.push(unit(&mut rng, mc.embed_dim)).unwrap();
    }
    let labels = [Some(0), Some(1)];
    let targets: Vec<SampleTargets> = (0..2)
        .map(|i| SampleTargets {
            truth: &truths[i],
            attrs: attrs[i].as_array(),
            key: &keys[i],
            label: labels[i],
        })
        .collect();
    let lambda = [1.0, 1.0, 0.1];

    let outs_at = |p: &ParamSet| inputs.iter().map(|x| model.forward(p, x)).collect::<Vec<_>>();
    let base = outs_at(&ps);
    let contrasts: Vec<Vec<f64>> = base.iter().map(|(o, _)| o.contrast.clone()).collect();
    let plan = plan_batch(&contrasts, &targets, &queue, &amcl, &fdcl);
    assert!(plan.amcl.iter().all(Option::is_some) && plan.fdcl.iter().all(Option::is_some));

    let total = |p: &ParamSet| {
        let outs: Vec<_> = outs_at(p).into_iter().map(|(o, _)| o).collect();
        batch_objective(&outs, &targets, &plan, lambda, &amcl, &fdcl).unwrap().0.l_total
    };
    let outs: Vec<_> = base.iter().map(|(o, _)| o.clone()).collect();
    let (parts, out_grads) = batch_objective(&outs, &targets, &plan, lambda, &amcl, &fdcl).unwrap();
    assert!(parts.l_amcl > 0.0 && parts.l_fdcl > 0.0);
    let mut grads = ps.zeros_like();
    for ((o, c), g) in base.iter().zip(&out_grads) {
        model.backward(&ps, o, c, g, &mut grads);
    }

    let h = 1e-5;
    let mut probe = ps.clone();
    for ti in 0..ps.len() {
        let mut numeric = vec![0.0; ps.tensors()[ti].len()];
        for (k, nk) in numeric.iter_mut().enumerate() {
            let orig = ps.tensors()[ti].data()[k];
            probe.tensors_mut()[ti].data_mut()[k] = orig + h;
            let up = total(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = orig - h;
            let down = total(&probe);
            probe.tensors_mut()[ti].data_mut()[k] = orig;
            *nk = (up - down) / (2.0 * h);
        }
        let err = max_relative_error(grads.tensors()[ti].data(), &numeric);
        assert!(err <= 1e-4, "{}: {err}", ps.iter().nth(ti).unwrap().0);
    }
}

#[test]
fn short_run_keeps_identities_and_schedule() {
    let (scenes, attrs) = dataset(48, 3);
    let cfg = short_config(20);
    let out = run_training(&scenes, &attrs, &cfg).unwrap();
    assert_eq!(out.log.len(), 20);
    for r in &out.log {
        assert!(r.losses.identity_error(cfg.lambda) <= 1e-12, "epoch {}", r.epoch);
        assert!(r.queue_len <= cfg.amcl.queue_size);
        if r.epoch <= cfg.warmup_epochs {
            assert_eq!(r.losses.l_fdcl, 0.0, "epoch {}", r.epoch);
        }
    }
    assert!(out.log.iter().any(|r| r.losses.l_fdcl > 0.0));
    assert!(out.log.iter().any(|r| r.losses.l_amcl > 0.0));
    let clustered: Vec<usize> = out.log.iter().filter(|r| r.clustered).map(|r| r.epoch).collect();
    assert_eq!(clustered, vec![10, 15, 20]);
    assert_eq!(out.rounds.iter().map(|r| r.epoch).collect::<Vec<_>>(), clustered);
    assert!(out.log[9].ari_prev.is_none() && out.log[14].ari_prev.is_some());
    assert_eq!(out.bank.labels.as_ref().unwrap().len(), 48);
}

#[test]
fn training_is_deterministic() {
    let (scenes, attrs) = dataset(24, 4);
    let cfg = short_config(12);
    let a = run_training(&scenes, &attrs, &cfg).unwrap();
    let b = run_training(&scenes, &attrs, &cfg).unwrap();
    assert_eq!(a.checkpoint().encode(), b.checkpoint().encode());
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    write_log(&a.log, &mut la).unwrap();
    write_log(&b.log, &mut lb).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let (scenes, attrs) = dataset(16, 5);
    let out = run_training(&scenes, &attrs, &short_config(2)).unwrap();
    let ckpt = Checkpoint::decode(&out.checkpoint().encode()).unwrap();
    assert_eq!(ckpt.get("queue").unwrap().shape(), &[out.queue.len(), 8][..]);
    let tm = TrainedModel::from_checkpoint(&ckpt).unwrap();
    assert_eq!(tm.meta, out.meta);
    for s in &scenes {
        assert_eq!(tm.model.predict(&tm.params, &tm.input(s)), out.model.predict(&out.params, &tm.input(s)));
    }
}

#[test]
fn nan_future_is_reported() {
    let (mut scenes, attrs) = dataset(8, 6);
    let target = scenes[3].target_id.clone();
    let t = scenes[3].tracks.iter_mut().find(|t| t.agent_id == target).unwrap();
    let last = t.states.len() - 1;
    t.states[last].pos.x = f64::NAN;
    let err = run_training(&scenes, &attrs, &short_config(2)).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { epoch: 1, .. }), "{err}");
}

#[test]
fn rejects_bad_inputs() {
    let (scenes, attrs) = dataset(4, 7);
    assert!(matches!(run_training(&scenes, &attrs[..3], &short_config(2)), Err(TrainError::InvalidInput(_))));
    let cfg = TrainConfig {
        clusters: 5,
        ..short_config(2)
    };
    assert!(matches!(run_training(&scenes, &attrs, &cfg), Err(TrainError::InvalidConfig(_))));
}
