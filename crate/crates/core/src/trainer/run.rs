use super::batch::{batch_objective, plan_batch, SampleTargets};
use super::losses::{AttributeScaler, LossBreakdown};
use super::{TrainConfig, TrainError};
use crate::attributes::AttributeVector;
use crate::augment::{apply_policy, AugmentationPolicy, Strategy, StrategyGenerator};
use crate::contrastive::{adjusted_rand_index, cosine_momentum, kmeans_fit_assign, momentum_update, MemoryBank, NegativeQueue};
use crate::geom::Vec2;
use crate::model::{Model, ModelInput};
use crate::nn::{Adam, Checkpoint, ParamSet, Tensor};
use crate::trajdata::Scene;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

// Independent seed streams derived from the configured seed.
const SHUFFLE_SALT: u64 = 0x5348_5546;
const AUGMENT_SALT: u64 = 0x4155_474d;
const KMEANS_SALT: u64 = 0x4b4d_4e53;
const GENERATOR_SALT: u64 = 0x4745_4e52;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub momentum: f64,
    /// Sample-weighted means over the epoch's batches.
    pub losses: LossBreakdown,
    pub clustered: bool,
    /// ARI between this round's pseudo-labels and the previous round's.
    pub ari_prev: Option<f64>,
    pub queue_len: usize,
}

pub const LOG_HEADER: &str =
    "epoch,momentum,l_target,l_reg,l_cls,l_task,l_attr,l_amcl,l_fdcl,l_total,clustered,ari_prev,queue_len";

/// Writes the log as comma-separated text with [`LOG_HEADER`].
pub fn write_log(log: &[EpochRecord], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in log {
        let l = &r.losses;
        let ari = r.ari_prev.map(|a| a.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.momentum,
            l.l_target,
            l.l_reg,
            l.l_cls,
            l.l_task,
            l.l_attr,
            l.l_amcl,
            l.l_fdcl,
            l.l_total,
            r.clustered as u8,
            ari,
            r.queue_len
        )?;
    }
    Ok(())
}

/// Pseudo-labels from one clustering round, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRound {
    pub epoch: usize,
    pub labels: Vec<usize>,
}

/// Everything besides tensors that a checkpoint needs to rebuild the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub obs_len: usize,
    pub horizon: usize,
    pub scaler: AttributeScaler,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub params: ParamSet,
    pub key_params: ParamSet,
    pub queue: NegativeQueue,
    pub bank: MemoryBank,
    pub log: Vec<EpochRecord>,
    pub rounds: Vec<LabelRound>,
    pub meta: TrainMeta,
}

impl TrainOutcome {
    /// Query and key parameters, the negative queue (`[len, D]`) and the
    /// metadata as JSON.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for (n, t) in self.params.iter() {
            tensors.push((format!("query/{n}"), t.clone()));
        }
        for (n, t) in self.key_params.iter() {
            tensors.push((format!("key/{n}"), t.clone()));
        }
        let d = self.model.cfg.embed_dim;
        let flat: Vec<f64> = self.queue.iter().flatten().copied().collect();
        tensors.push((
            "queue".into(),
            Tensor::matrix(self.queue.len(), d, flat).expect("queue rows have width D"),
        ));
        Checkpoint {
            meta: serde_json::to_string(&self.meta).expect("meta serializes"),
            tensors,
        }
    }
}

/// Model, query parameters and metadata restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub params: ParamSet,
    pub meta: TrainMeta,
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, TrainError> {
        let meta: TrainMeta = serde_json::from_str(&ckpt.meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let (model, mut params) = Model::new(meta.config.model, meta.horizon, meta.config.seed)?;
        for id in params.ids().collect::<Vec<_>>() {
            let name = format!("query/{}", params.name(id));
            let t = ckpt.get(&name).ok_or_else(|| TrainError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != params.get(id).shape() {
                return Err(TrainError::Checkpoint(format!("tensor {name} has shape {:?}", t.shape())));
            }
            *params.get_mut(id) = t.clone();
        }
        Ok(Self { model, params, meta })
    }

    /// Input for `scene` under this model's settings.
    pub fn input(&self, scene: &Scene) -> ModelInput {
        let c = &self.model.cfg;
        ModelInput::from_scene(scene, None, c.max_neighbors, c.position_scale)
    }
}

fn random_policy(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> AugmentationPolicy {
    let b = cfg.augment.bounds;
    let pick = rng.gen_range(0..4);
    AugmentationPolicy::forcing(
        Strategy::ALL[pick],
        rng.gen_range(0.0..=b.eps_rdp_max),
        rng.gen_range(0.0..=b.eps_max),
        b.eps_max,
        rng.gen_range(b.rho_min..=1.0),
        rng.gen_range(b.gamma_min..=1.0),
    )
}

/// Augmentation policy of every scene: the seeded generator applied to the
/// standardized attributes. Fixed for the whole run.
pub fn training_policies(attrs: &[AttributeVector], cfg: &TrainConfig) -> Vec<AugmentationPolicy> {
    let scaler = AttributeScaler::fit(attrs);
    let generator = StrategyGenerator::new(cfg.augment.generator_hidden, cfg.augment.bounds, cfg.seed ^ GENERATOR_SALT);
    attrs
        .iter()
        .map(|a| {
            let t = scaler.apply(a);
            generator.generate_policy(&AttributeVector { y_e: t[0], y_r: t[1], y_s: t[2] })
        })
        .collect()
}

fn check_scenes(scenes: &[Scene], attrs: &[AttributeVector]) -> Result<(usize, usize), TrainError> {
    let first = scenes.first().ok_or_else(|| TrainError::InvalidInput("no scenes".into()))?;
    if attrs.len() != scenes.len() {
        return Err(TrainError::InvalidInput(format!("{} attribute rows for {} scenes", attrs.len(), scenes.len())));
    }
    if let Some(s) = scenes.iter().find(|s| s.t_o != first.t_o || s.t_p != first.t_p) {
        return Err(TrainError::InvalidInput(format!("scene {} has a different window length", s.scene_id)));
    }
    if let Some(a) = attrs.iter().position(|a| !a.is_valid()) {
        return Err(TrainError::InvalidInput(format!("attributes of scene {a} are not finite and nonnegative")));
    }
    Ok((first.t_o, first.t_p))
}

/// Staged training: task and attribute losses throughout, the queue
/// contrastive loss once the queue holds `n_neg` keys, and the pseudo-label
/// loss after the first clustering round (end of epoch `warmup_epochs`, then
/// every `cluster_interval` epochs).
pub fn run_training(scenes: &[Scene], attrs: &[AttributeVector], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let (obs_len, horizon) = check_scenes(scenes, attrs)?;
    let n = scenes.len();
    if cfg.clusters > n {
        return Err(TrainError::InvalidConfig(format!("{} clusters for {n} scenes", cfg.clusters)));
    }
    let (model, mut params) = Model::new(cfg.model, horizon, cfg.seed)?;
    let mut key_params = params.clone();
    let mut adam = Adam::new(cfg.adam, &params);
    let scaler = AttributeScaler::fit(attrs);
    let mc = &cfg.model;

    let inputs: Vec<ModelInput> = scenes
        .par_iter()
        .map(|s| ModelInput::from_scene(s, None, mc.max_neighbors, mc.position_scale))
        .collect();
    let truths: Vec<Vec<Vec2>> = scenes.iter().map(ModelInput::local_future).collect();
    let attr_targets: Vec<[f64; 3]> = attrs.iter().map(|a| scaler.apply(a)).collect();
    let policies = training_policies(attrs, cfg);

    let mut queue = NegativeQueue::new(cfg.amcl.queue_size);
    let mut bank = MemoryBank::new(n);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut rounds: Vec<LabelRound> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        let m = cosine_momentum(epoch as f64, cfg.momentum_base, cfg.momentum_final, cfg.epochs as f64)?;
        let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
        shuffle.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut shuffle);

        let mut sums = LossBreakdown::default();
        for (batch_id, batch) in order.chunks(cfg.batch_size).enumerate() {
            // Per-scene work fans out; each scene owns a seeded stream.
            let work: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AUGMENT_SALT);
                    rng.set_stream((epoch * n + i) as u64);
                    let policy = if cfg.augment.random {
                        random_policy(cfg, &mut rng)
                    } else {
                        policies[i]
                    };
                    let view = apply_policy(&scenes[i], &policy, &mut rng);
                    let key_input = ModelInput::from_scene(&scenes[i], Some(&view.slice), mc.max_neighbors, mc.position_scale);
                    let key = model.contrast_feature(&key_params, &key_input);
                    let (out, cache) = model.forward(&params, &inputs[i]);
                    (key, out, cache)
                })
                .collect();
            let contrasts: Vec<Vec<f64>> = work.iter().map(|w| w.1.contrast.clone()).collect();
            let targets: Vec<SampleTargets> = batch
                .iter()
                .zip(&work)
                .map(|(&i, w)| SampleTargets {
                    truth: &truths[i],
                    attrs: attr_targets[i],
                    key: &w.0,
                    label: bank.label(i),
                })
                .collect();
            let plan = plan_batch(&contrasts, &targets, &queue, &cfg.amcl, &cfg.fdcl);
            let outs: Vec<_> = work.iter().map(|w| w.1.clone()).collect();
            let (parts, out_grads) = batch_objective(&outs, &targets, &plan, cfg.lambda, &cfg.amcl, &cfg.fdcl)?;
            if !parts.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch_id });
            }

            let per_scene: Vec<ParamSet> = work
                .par_iter()
                .zip(&out_grads)
                .map(|((_, out, cache), g)| {
                    let mut grads = params.zeros_like();
                    model.backward(&params, out, cache, g, &mut grads);
                    grads
                })
                .collect();
            let mut grads = params.zeros_like();
            for g in &per_scene {
                grads.add_scaled(g, 1.0)?;
            }
            adam.step(&mut params, &grads)?;
            momentum_update(&mut key_params, &params, m)?;
            for (key, _, _) in work {
                queue.push(key)?;
            }

            let w = batch.len() as f64;
            sums.l_target += w * parts.l_target;
            sums.l_reg += w * parts.l_reg;
            sums.l_cls += w * parts.l_cls;
            sums.l_task += w * parts.l_task;
            sums.l_attr += w * parts.l_attr;
            sums.l_amcl += w * parts.l_amcl;
            sums.l_fdcl += w * parts.l_fdcl;
            sums.l_total += w * parts.l_total;
        }
        let inv = 1.0 / n as f64;
        let losses = LossBreakdown {
            l_target: sums.l_target * inv,
            l_reg: sums.l_reg * inv,
            l_cls: sums.l_cls * inv,
            l_task: sums.l_task * inv,
            l_attr: sums.l_attr * inv,
            l_amcl: sums.l_amcl * inv,
            l_fdcl: sums.l_fdcl * inv,
            l_total: sums.l_total * inv,
        };

        let feats: Vec<Vec<f64>> = inputs.par_iter().map(|x| model.representation(&key_params, x)).collect();
        for (i, f) in feats.into_iter().enumerate() {
            bank.set(i, f)?;
        }
        let clustered = cfg.is_cluster_epoch(epoch);
        let mut ari_prev = None;
        if clustered {
            let points = bank.features().expect("bank refreshed");
            let km = kmeans_fit_assign(
                &points,
                cfg.clusters,
                cfg.kmeans_max_iters,
                cfg.kmeans_restarts,
                (cfg.seed ^ KMEANS_SALT).wrapping_add(epoch as u64),
            )?;
            if let Some(prev) = rounds.last() {
                ari_prev = Some(adjusted_rand_index(&prev.labels, &km.labels)?);
            }
            bank.labels = Some(km.labels.clone());
            bank.epoch = Some(epoch);
            rounds.push(LabelRound { epoch, labels: km.labels });
        }
        log.push(EpochRecord {
            epoch,
            momentum: m,
            losses,
            clustered,
            ari_prev,
            queue_len: queue.len(),
        });
    }

    Ok(TrainOutcome {
        model,
        params,
        key_params,
        queue,
        bank,
        log,
        rounds,
        meta: TrainMeta {
            epochs_run: cfg.epochs,
            obs_len,
            horizon,
            scaler,
            config: *cfg,
        },
    })
}
