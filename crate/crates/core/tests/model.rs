use longtail_core::augment::shift;
use longtail_core::geom::Vec2;
use longtail_core::model::{Model, ModelConfig, ModelInput, OutputGrads};
use longtail_core::nn::{max_relative_error, ParamSet};
use longtail_core::trajdata::{generate_synthetic_dataset, Scene, SynthConfig, TrajectorySlice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenes(n: usize) -> Vec<Scene> {
    generate_synthetic_dataset(&SynthConfig {
        n,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn micro(seed: u64) -> (Model, ParamSet) {
    Model::new(ModelConfig::micro(), 12, seed).unwrap()
}

fn input(model: &Model, scene: &Scene) -> ModelInput {
    ModelInput::from_scene(scene, None, model.cfg.max_neighbors, model.cfg.position_scale)
}

#[test]
fn output_shapes_and_ranges() {
    let (m, ps) = micro(1);
    let s = &scenes(1)[0];
    let (out, _) = m.forward(&ps, &input(&m, s));
    assert_eq!(out.encoding.f_context.len(), 3);
    assert!(out.encoding.f_context.iter().all(|r| r.len() == 8));
    assert_eq!(out.encoding.f_scene.len(), 8);
    for d in 0..8 {
        let mean = out.encoding.f_context.iter().map(|r| r[d]).sum::<f64>() / 3.0;
        assert!((mean - out.encoding.f_scene[d]).abs() < 1e-12);
    }
    let p = &out.prediction;
    assert_eq!(p.locations.len(), 3);
    assert!(p.locations.iter().all(|m| m.len() == 12));
    assert!(p.scales.iter().flatten().all(|s| s.x > 0.0 && s.y > 0.0));
    assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(out.gates.iter().all(|g| *g > 0.0 && *g < 1.0));
    assert!(out.features.y_hat.iter().all(|y| *y >= 0.0));
    let n: f64 = out.contrast.iter().map(|v| v * v).sum();
    assert!((n - 1.0).abs() < 1e-12);
}

#[test]
fn neighbor_order_does_not_matter() {
    let (m, ps) = micro(2);
    let s = scenes(40).into_iter().find(|s| s.tracks.len() >= 3).unwrap();
    let a = input(&m, &s);
    let mut b = a.clone();
    b.neighbors.reverse();
    let ea = m.encode_scene(&ps, &a);
    let eb = m.encode_scene(&ps, &b);
    for (ra, rb) in ea.f_context.iter().zip(&eb.f_context) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn all_zero_history_stays_finite() {
    let (m, ps) = micro(3);
    let s = &scenes(1)[0];
    let zero = TrajectorySlice {
        positions: vec![Vec2::ZERO; s.t_o],
        valid: vec![false; s.t_o],
    };
    let mut inp = ModelInput::from_scene(s, Some(&zero), m.cfg.max_neighbors, m.cfg.position_scale);
    inp.neighbors.clear();
    let (out, _) = m.forward(&ps, &inp);
    assert!(out.contrast.iter().all(|v| v.is_finite()));
    assert!(out.prediction.locations.iter().flatten().all(|p| p.is_finite()));
}

#[test]
fn zero_shift_view_encodes_identically() {
    let (m, ps) = micro(4);
    let s = &scenes(1)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let view = shift(&s.observed_slice(), 0.0, 2.0, &mut rng);
    let v = ModelInput::from_scene(s, Some(&view.slice), m.cfg.max_neighbors, m.cfg.position_scale);
    assert_eq!(m.encode_scene(&ps, &v), m.encode_scene(&ps, &input(&m, s)));
}

#[test]
fn zeroed_attribute_heads_predict_ln2() {
    let (m, mut ps) = micro(5);
    for id in m.attribute_head_ids() {
        ps.get_mut(id).data_mut().fill(0.0);
    }
    let s = &scenes(1)[0];
    let (out, _) = m.forward(&ps, &input(&m, s));
    for y in out.features.y_hat {
        assert!((y - 2f64.ln()).abs() < 1e-15);
    }
}

#[test]
fn fusion_identities() {
    let (m, ps) = micro(6);
    let s = &scenes(1)[0];
    let (out, _) = m.forward(&ps, &input(&m, s));
    assert_eq!(m.fuse_with(&out.encoding, &out.features, [0.0; 3]), out.encoding.f_context);
    let f = m.fuse_with(&out.encoding, &out.features, [1.0, 0.0, 0.0]);
    for (row, ctx) in f.iter().zip(&out.encoding.f_context) {
        for d in 0..8 {
            assert!((row[d] - ctx[d] - out.features.features[0][d]).abs() < 1e-15);
        }
    }
}

#[test]
fn decoder_is_deterministic() {
    let (m, ps) = micro(7);
    let s = &scenes(1)[0];
    let (out, _) = m.forward(&ps, &input(&m, s));
    assert_eq!(m.decode_fused(&ps, &out.fused), m.decode_fused(&ps, &out.fused));
    assert_eq!(m.decode_fused(&ps, &out.fused), out.prediction);
}

fn random_grads(rng: &mut ChaCha8Rng, k: usize, h: usize, d: usize) -> OutputGrads {
    let mut g = OutputGrads::zeros(k, h, d);
    let mut r = || rng.gen_range(-1.0..1.0);
    for m in 0..k {
        for t in 0..h {
            g.d_locations[m][t] = Vec2::new(r(), r());
            g.d_scales[m][t] = Vec2::new(r(), r());
        }
        g.d_logits[m] = r();
    }
    g.d_y_hat = [r(), r(), r()];
    g.d_contrast.iter_mut().for_each(|v| *v = r());
    g
}

fn contract(m: &Model, ps: &ParamSet, inp: &ModelInput, g: &OutputGrads) -> f64 {
    let (out, _) = m.forward(ps, inp);
    let p = &out.prediction;
    let mut j = 0.0;
    for k in 0..p.locations.len() {
        for t in 0..p.locations[k].len() {
            j += g.d_locations[k][t].dot(p.locations[k][t]) + g.d_scales[k][t].dot(p.scales[k][t]);
        }
        j += g.d_logits[k] * p.logits[k];
    }
    j += (0..3).map(|b| g.d_y_hat[b] * out.features.y_hat[b]).sum::<f64>();
    j + g.d_contrast.iter().zip(&out.contrast).map(|(a, b)| a * b).sum::<f64>()
}

#[test]
fn full_forward_backward_matches_finite_differences() {
    let (m, ps) = micro(8);
    let s = scenes(40).into_iter().find(|s| s.tracks.len() >= 3).unwrap();
    let inp = input(&m, &s);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = random_grads(&mut rng, 3, 12, 8);
    let (out, cache) = m.forward(&ps, &inp);
    let mut grads = ps.zeros_like();
    m.backward(&ps, &out, &cache, &g, &mut grads);

    let h = 1e-5;
    let mut probe = ps.clone();
    for ti in 0..ps.len() {
        let n = ps.tensors()[ti].len();
        let mut numeric = vec![0.0; n];
        for (k, nk) in numeric.iter_mut().enumerate() {
            let orig = ps.tensors()[ti].data()[k];
            probe.tensors_mut()[ti].data_mut()[k] = orig + h;
            let up = contract(&m, &probe, &inp, &g);
            probe.tensors_mut()[ti].data_mut()[k] = orig - h;
            let down = contract(&m, &probe, &inp, &g);
            probe.tensors_mut()[ti].data_mut()[k] = orig;
            *nk = (up - down) / (2.0 * h);
        }
        let err = max_relative_error(grads.tensors()[ti].data(), &numeric);
        let name = ps.iter().nth(ti).unwrap().0.to_string();
        assert!(err <= 1e-5, "{name}: {err}");
    }
}
