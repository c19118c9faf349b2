use super::{ModelConfig, ModelError, ModelInput, STEP_FEATURES};
use crate::geom::Vec2;
use crate::nn::{
    logistic, softmax, softplus, Affine, Attention, AttentionCache, Gru, GruCache, Init, Mlp, MlpCache, ParamId,
    ParamSet,
};
use crate::prediction::PredictionSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Guard against normalising a zero scene feature.
const NORM_EPS: f64 = 1e-12;

/// Interactor output and its summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneEncoding {
    /// `K × D`.
    pub f_context: Vec<Vec<f64>>,
    /// Row mean of `f_context`.
    pub f_scene: Vec<f64>,
    pub f_target: Vec<f64>,
    pub neighbor_summary: Vec<f64>,
}

/// Per-attribute features `[F_e, F_r, F_s]` and predicted attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct DisentangledFeatures {
    pub features: [Vec<f64>; 3],
    pub y_hat: [f64; 3],
}

/// Decoder output in the local frame, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPrediction {
    /// `K × t_p`.
    pub locations: Vec<Vec<Vec2>>,
    pub scales: Vec<Vec<Vec2>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub encoding: SceneEncoding,
    pub features: DisentangledFeatures,
    pub gates: [f64; 3],
    /// `K × D`.
    pub fused: Vec<Vec<f64>>,
    pub prediction: LocalPrediction,
    /// Unit-length projection of `F_target`, the contrastive feature.
    pub contrast: Vec<f64>,
}

/// Cotangents of a scalar objective with respect to [`ForwardOutput`] fields.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrads {
    pub d_locations: Vec<Vec<Vec2>>,
    pub d_scales: Vec<Vec<Vec2>>,
    pub d_logits: Vec<f64>,
    pub d_y_hat: [f64; 3],
    pub d_contrast: Vec<f64>,
}

impl OutputGrads {
    pub fn zeros(num_modes: usize, horizon: usize, dim: usize) -> Self {
        Self {
            d_locations: vec![vec![Vec2::ZERO; horizon]; num_modes],
            d_scales: vec![vec![Vec2::ZERO; horizon]; num_modes],
            d_logits: vec![0.0; num_modes],
            d_y_hat: [0.0; 3],
            d_contrast: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct AgentCache {
    feats: Vec<[f64; STEP_FEATURES]>,
    emb: Vec<Vec<f64>>,
    gru: Vec<GruCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct EncodeCache {
    target: AgentCache,
    neighbors: Vec<AgentCache>,
    h_mode: Vec<Vec<f64>>,
    att: AttentionCache,
    f_target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchCache {
    att: AttentionCache,
    head: MlpCache,
    u: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct ModeCache {
    h0: Vec<f64>,
    gru: Vec<GruCache>,
    heads: Vec<MlpCache>,
    raw: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    enc: EncodeCache,
    branches: [BranchCache; 3],
    gate: MlpCache,
    modes: Vec<ModeCache>,
    contrast_head: MlpCache,
    contrast_pre: Vec<f64>,
}

/// Layer handles; parameters live in a separate [`ParamSet`] so query and key
/// encoders can share one `Model`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub horizon: usize,
    embed: Affine,
    encoder: Gru,
    mode_queries: ParamId,
    mode_proj: Affine,
    interactor: Attention,
    branch_att: [Attention; 3],
    branch_head: [Mlp; 3],
    gate: Mlp,
    step_queries: ParamId,
    decoder: Gru,
    out_head: Mlp,
    mode_head: Affine,
    contrast_head: Mlp,
    pos_enc: Vec<Vec<f64>>,
}

fn positional_encoding(count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|pos| {
            (0..dim)
                .map(|i| {
                    let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
                    let a = pos as f64 * rate;
                    if i % 2 == 0 {
                        a.sin()
                    } else {
                        a.cos()
                    }
                })
                .collect()
        })
        .collect()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn mean_rows(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for r in rows {
        add_into(&mut m, r);
    }
    let n = rows.len().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

impl Model {
    /// Builds the layer layout and a freshly initialised parameter set.
    pub fn new(cfg: ModelConfig, horizon: usize, seed: u64) -> Result<(Self, ParamSet), ModelError> {
        cfg.validate()?;
        if horizon == 0 {
            return Err(ModelError::InvalidConfig("horizon must be positive".into()));
        }
        let d = cfg.embed_dim;
        let h = cfg.hidden();
        let k = cfg.num_modes;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let xavier = Init::Xavier { gain: 1.0 };
        let embed = Affine::new(&mut ps, "embed", STEP_FEATURES, d, xavier, &mut rng);
        let encoder = Gru::new(&mut ps, "encoder", d, d, &mut rng);
        let mode_queries = ps.add("mode_queries", Init::Uniform { bound: 1.0 }.sample(&[k, d], &mut rng));
        let mode_proj = Affine::new(&mut ps, "mode_proj", d, d, xavier, &mut rng);
        let interactor = Attention::new(&mut ps, "interactor", d, d, d, cfg.num_heads, &mut rng);
        let names = ["error", "risk", "complexity"];
        let branch_att = names.map(|n| Attention::new(&mut ps, &format!("branch_{n}.att"), d, d, d, cfg.num_heads, &mut rng));
        let branch_head = names.map(|n| Mlp::new(&mut ps, &format!("branch_{n}.head"), &[d, h, 1], xavier, &mut rng));
        let gate = Mlp::new(&mut ps, "gate", &[d, h, 3], xavier, &mut rng);
        let step_queries = ps.add("step_queries", Init::Uniform { bound: 1.0 }.sample(&[horizon, d], &mut rng));
        let decoder = Gru::new(&mut ps, "decoder", d, d, &mut rng);
        let out_head = Mlp::new(&mut ps, "out_head", &[2 * d, h, 4], Init::Xavier { gain: 0.1 }, &mut rng);
        let mode_head = Affine::new(&mut ps, "mode_head", d, 1, xavier, &mut rng);
        let contrast_head = Mlp::new(&mut ps, "contrast_head", &[d, h, d], xavier, &mut rng);
        let model = Self {
            cfg,
            horizon,
            embed,
            encoder,
            mode_queries,
            mode_proj,
            interactor,
            branch_att,
            branch_head,
            gate,
            step_queries,
            decoder,
            out_head,
            mode_head,
            contrast_head,
            pos_enc: positional_encoding(2 + cfg.map_tokens, d),
        };
        Ok((model, ps))
    }

    /// Parameter ids of the attribute heads' final layers, for tests and
    /// ablations that need to reset them.
    pub fn attribute_head_ids(&self) -> Vec<ParamId> {
        self.branch_head
            .iter()
            .flat_map(|m| {
                let last = m.layers[m.layers.len() - 1];
                [last.w, last.b]
            })
            .collect()
    }

    pub fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        if input.target.is_empty() {
            return Err(ModelError::ShapeMismatch("target history is empty".into()));
        }
        if input.neighbors.iter().any(|n| n.len() != input.target.len()) {
            return Err(ModelError::ShapeMismatch("neighbor history length differs from target".into()));
        }
        Ok(())
    }

    fn encode_agent(&self, ps: &ParamSet, feats: &[[f64; STEP_FEATURES]]) -> (Vec<f64>, AgentCache) {
        let d = self.cfg.embed_dim;
        let mut h = vec![0.0; d];
        let mut emb = Vec::with_capacity(feats.len());
        let mut gru = Vec::with_capacity(feats.len());
        for f in feats {
            let mut e = self.embed.forward(ps, f);
            e.iter_mut().for_each(|v| *v = v.tanh());
            let (h2, c) = self.encoder.step(ps, &e, &h);
            h = h2;
            emb.push(e);
            gru.push(c);
        }
        (
            h,
            AgentCache {
                feats: feats.to_vec(),
                emb,
                gru,
            },
        )
    }

    fn encode_agent_backward(&self, ps: &ParamSet, c: &AgentCache, dh_final: &[f64], grads: &mut ParamSet) {
        let mut dh = dh_final.to_vec();
        for t in (0..c.gru.len()).rev() {
            let (de, dh_prev) = self.encoder.step_backward(ps, &c.gru[t], &dh, grads);
            let de_pre: Vec<f64> = de.iter().zip(&c.emb[t]).map(|(g, e)| g * (1.0 - e * e)).collect();
            self.embed.backward(ps, &c.feats[t], &de_pre, grads);
            dh = dh_prev;
        }
    }

    fn encode(&self, ps: &ParamSet, input: &ModelInput) -> (SceneEncoding, EncodeCache) {
        let d = self.cfg.embed_dim;
        let (f_target, target) = self.encode_agent(ps, &input.target);
        let (nbr_h, neighbors): (Vec<_>, Vec<_>) = input.neighbors.iter().map(|n| self.encode_agent(ps, n)).unzip();
        let neighbor_summary = mean_rows(&nbr_h, d);

        let proj = self.mode_proj.forward(ps, &f_target);
        let q = ps.get(self.mode_queries);
        let h_mode: Vec<Vec<f64>> = (0..self.cfg.num_modes)
            .map(|k| q.row(k).iter().zip(&proj).map(|(a, b)| a + b).collect())
            .collect();

        let mut tokens = self.pos_enc.clone();
        add_into(&mut tokens[0], &f_target);
        add_into(&mut tokens[1], &neighbor_summary);
        let (att_out, att) = self.interactor.forward(ps, &h_mode, &tokens, &tokens);
        let f_context: Vec<Vec<f64>> = h_mode
            .iter()
            .zip(&att_out)
            .map(|(h, a)| h.iter().zip(a).map(|(x, y)| x + y).collect())
            .collect();
        let f_scene = mean_rows(&f_context, d);
        let enc = SceneEncoding {
            f_context,
            f_scene,
            f_target: f_target.clone(),
            neighbor_summary,
        };
        let cache = EncodeCache {
            target,
            neighbors,
            h_mode,
            att,
            f_target,
        };
        (enc, cache)
    }

    /// `d_target_extra` is a cotangent on `F_target` from outside the
    /// interactor.
    fn encode_backward(
        &self,
        ps: &ParamSet,
        c: &EncodeCache,
        d_context: &[Vec<f64>],
        d_target_extra: &[f64],
        grads: &mut ParamSet,
    ) {
        let d = self.cfg.embed_dim;
        let mut d_hmode: Vec<Vec<f64>> = d_context.to_vec();
        let (dq, dk, dv) = self.interactor.backward(ps, &c.att, d_context, grads);
        for (a, b) in d_hmode.iter_mut().zip(&dq) {
            add_into(a, b);
        }
        let mut d_target = d_target_extra.to_vec();
        add_into(&mut d_target, &dk[0]);
        add_into(&mut d_target, &dv[0]);
        let mut d_nbr = dk[1].clone();
        add_into(&mut d_nbr, &dv[1]);

        let mut d_proj = vec![0.0; d];
        {
            let gq = grads.get_mut(self.mode_queries).data_mut();
            for (k, row) in d_hmode.iter().enumerate() {
                add_into(&mut gq[k * d..(k + 1) * d], row);
                add_into(&mut d_proj, row);
            }
        }
        let dt = self.mode_proj.backward(ps, &c.f_target, &d_proj, grads);
        add_into(&mut d_target, &dt);
        self.encode_agent_backward(ps, &c.target, &d_target, grads);

        if !c.neighbors.is_empty() {
            let inv = 1.0 / c.neighbors.len() as f64;
            let d_each: Vec<f64> = d_nbr.iter().map(|v| v * inv).collect();
            for n in &c.neighbors {
                self.encode_agent_backward(ps, n, &d_each, grads);
            }
        }
    }

    /// Attribute branches: attention from `F_scene` over the rows of
    /// `F_context`, then a perceptron and softplus per branch.
    pub fn disentangle(&self, ps: &ParamSet, enc: &SceneEncoding) -> (DisentangledFeatures, [BranchCache; 3]) {
        let run = |b: usize| {
            let (out, att) = self.branch_att[b].forward(ps, std::slice::from_ref(&enc.f_scene), &enc.f_context, &enc.f_context);
            let f = out.into_iter().next().expect("one query row");
            let (u, head) = self.branch_head[b].forward(ps, &f);
            (f, BranchCache { att, head, u: u[0] })
        };
        let (f0, c0) = run(0);
        let (f1, c1) = run(1);
        let (f2, c2) = run(2);
        let y_hat = [softplus(c0.u), softplus(c1.u), softplus(c2.u)];
        (
            DisentangledFeatures {
                features: [f0, f1, f2],
                y_hat,
            },
            [c0, c1, c2],
        )
    }

    /// Returns `(dF_scene, dF_context)`.
    pub fn disentangle_backward(
        &self,
        ps: &ParamSet,
        caches: &[BranchCache; 3],
        d_features: &[Vec<f64>; 3],
        d_y_hat: [f64; 3],
        grads: &mut ParamSet,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = self.cfg.embed_dim;
        let mut d_scene = vec![0.0; d];
        let mut d_context = vec![vec![0.0; d]; self.cfg.num_modes];
        for b in 0..3 {
            let c = &caches[b];
            let du = d_y_hat[b] * logistic(c.u);
            let mut df = self.branch_head[b].backward(ps, &c.head, &[du], grads);
            add_into(&mut df, &d_features[b]);
            let (dq, dk, dv) = self.branch_att[b].backward(ps, &c.att, &[df], grads);
            add_into(&mut d_scene, &dq[0]);
            for k in 0..self.cfg.num_modes {
                add_into(&mut d_context[k], &dk[k]);
                add_into(&mut d_context[k], &dv[k]);
            }
        }
        (d_scene, d_context)
    }

    fn decode(&self, ps: &ParamSet, fused: &[Vec<f64>]) -> (LocalPrediction, Vec<ModeCache>) {
        let d = self.cfg.embed_dim;
        let scale = self.cfg.position_scale;
        let z = ps.get(self.step_queries);
        let mut locations = Vec::with_capacity(fused.len());
        let mut scales = Vec::with_capacity(fused.len());
        let mut logits = Vec::with_capacity(fused.len());
        let mut caches = Vec::with_capacity(fused.len());
        for h0 in fused {
            let mut h = h0.clone();
            let mut loc = Vec2::ZERO;
            let mut locs = Vec::with_capacity(self.horizon);
            let mut scs = Vec::with_capacity(self.horizon);
            let mut gru = Vec::with_capacity(self.horizon);
            let mut heads = Vec::with_capacity(self.horizon);
            let mut raw = Vec::with_capacity(self.horizon);
            for t in 0..self.horizon {
                let (h2, gc) = self.decoder.step(ps, z.row(t), &h);
                h = h2;
                let mut inp = Vec::with_capacity(2 * d);
                inp.extend_from_slice(&h);
                inp.extend_from_slice(h0);
                let (o, hc) = self.out_head.forward(ps, &inp);
                loc += Vec2::new(o[0], o[1]) * scale;
                locs.push(loc);
                scs.push(Vec2::new(
                    scale * softplus(o[2]) + self.cfg.min_scale,
                    scale * softplus(o[3]) + self.cfg.min_scale,
                ));
                gru.push(gc);
                heads.push(hc);
                raw.push(o);
            }
            logits.push(self.mode_head.forward(ps, h0)[0]);
            locations.push(locs);
            scales.push(scs);
            caches.push(ModeCache {
                h0: h0.clone(),
                gru,
                heads,
                raw,
            });
        }
        let probs = softmax(&logits);
        (
            LocalPrediction {
                locations,
                scales,
                logits,
                probs,
            },
            caches,
        )
    }

    fn decode_backward(&self, ps: &ParamSet, caches: &[ModeCache], g: &OutputGrads, grads: &mut ParamSet) -> Vec<Vec<f64>> {
        let d = self.cfg.embed_dim;
        let scale = self.cfg.position_scale;
        let sq = self.step_queries;
        let mut d_fused = Vec::with_capacity(caches.len());
        for (k, c) in caches.iter().enumerate() {
            let mut dh0 = self.mode_head.backward(ps, &c.h0, &[g.d_logits[k]], grads);
            let mut dh = vec![0.0; d];
            // Running sum of location cotangents from step t onward.
            let mut dloc_tail = Vec2::ZERO;
            for t in (0..self.horizon).rev() {
                dloc_tail += g.d_locations[k][t];
                let o = &c.raw[t];
                let ds = g.d_scales[k][t];
                let dout = [
                    dloc_tail.x * scale,
                    dloc_tail.y * scale,
                    ds.x * scale * logistic(o[2]),
                    ds.y * scale * logistic(o[3]),
                ];
                let din = self.out_head.backward(ps, &c.heads[t], &dout, grads);
                add_into(&mut dh, &din[..d]);
                add_into(&mut dh0, &din[d..]);
                let (dz, dprev) = self.decoder.step_backward(ps, &c.gru[t], &dh, grads);
                add_into(&mut grads.get_mut(sq).data_mut()[t * d..(t + 1) * d], &dz);
                dh = dprev;
            }
            add_into(&mut dh0, &dh);
            d_fused.push(dh0);
        }
        d_fused
    }

    /// Full forward pass.
    pub fn forward(&self, ps: &ParamSet, input: &ModelInput) -> (ForwardOutput, ForwardCache) {
        let (encoding, enc) = self.encode(ps, input);
        let (features, branches) = self.disentangle(ps, &encoding);
        let (gpre, gate) = self.gate.forward(ps, &encoding.f_scene);
        let gates = [logistic(gpre[0]), logistic(gpre[1]), logistic(gpre[2])];
        let fused = self.fuse_with(&encoding, &features, gates);
        let (prediction, modes) = self.decode(ps, &fused);
        let (contrast_pre, contrast_head) = self.contrast_head.forward(ps, &encoding.f_target);
        let contrast = normalize(&contrast_pre);
        let cache = ForwardCache {
            enc,
            branches,
            gate,
            modes,
            contrast_head,
            contrast_pre,
        };
        (
            ForwardOutput {
                encoding,
                features,
                gates,
                fused,
                prediction,
                contrast,
            },
            cache,
        )
    }

    /// `F_context + Σ g_b F_b` on every row.
    pub fn fuse_with(&self, enc: &SceneEncoding, feats: &DisentangledFeatures, gates: [f64; 3]) -> Vec<Vec<f64>> {
        let d = self.cfg.embed_dim;
        let mut gated = vec![0.0; d];
        for b in 0..3 {
            for (g, f) in gated.iter_mut().zip(&feats.features[b]) {
                *g += gates[b] * f;
            }
        }
        enc.f_context
            .iter()
            .map(|row| row.iter().zip(&gated).map(|(a, b)| a + b).collect())
            .collect()
    }

    /// Accumulates parameter gradients of a scalar objective whose output
    /// cotangents are `g`.
    pub fn backward(&self, ps: &ParamSet, out: &ForwardOutput, cache: &ForwardCache, g: &OutputGrads, grads: &mut ParamSet) {
        let d = self.cfg.embed_dim;
        let k = self.cfg.num_modes;
        let d_fused = self.decode_backward(ps, &cache.modes, g, grads);

        let mut d_context = d_fused.clone();
        let mut d_gated = vec![0.0; d];
        for row in &d_fused {
            add_into(&mut d_gated, row);
        }
        let mut d_features: [Vec<f64>; 3] = Default::default();
        let mut d_gpre = [0.0; 3];
        for b in 0..3 {
            d_features[b] = d_gated.iter().map(|v| v * out.gates[b]).collect();
            let dg: f64 = d_gated.iter().zip(&out.features.features[b]).map(|(x, y)| x * y).sum();
            d_gpre[b] = dg * out.gates[b] * (1.0 - out.gates[b]);
        }
        let mut d_scene = self.gate.backward(ps, &cache.gate, &d_gpre, grads);

        let (ds, dc) = self.disentangle_backward(ps, &cache.branches, &d_features, g.d_y_hat, grads);
        add_into(&mut d_scene, &ds);
        for (a, b) in d_context.iter_mut().zip(&dc) {
            add_into(a, b);
        }

        let inv_k = 1.0 / k as f64;
        for row in d_context.iter_mut() {
            for (a, b) in row.iter_mut().zip(&d_scene) {
                *a += b * inv_k;
            }
        }
        let d_pre = normalize_backward(&cache.contrast_pre, &g.d_contrast);
        let d_target = self.contrast_head.backward(ps, &cache.contrast_head, &d_pre, grads);
        self.encode_backward(ps, &cache.enc, &d_context, &d_target, grads);
    }

    /// Target motion encoder and projection head only: the unit
    /// contrastive feature.
    pub fn contrast_feature(&self, ps: &ParamSet, input: &ModelInput) -> Vec<f64> {
        let f_target = self.encode_agent(ps, &input.target).0;
        normalize(&self.contrast_head.forward(ps, &f_target).0)
    }

    /// Unit-length `F_target`: the encoded representation that clustering
    /// runs on, as opposed to its projection used by the contrastive losses.
    pub fn representation(&self, ps: &ParamSet, input: &ModelInput) -> Vec<f64> {
        normalize(&self.encode_agent(ps, &input.target).0)
    }

    /// Encoder and interactor only.
    pub fn encode_scene(&self, ps: &ParamSet, input: &ModelInput) -> SceneEncoding {
        self.encode(ps, input).0
    }

    /// Decoder on a fused matrix.
    pub fn decode_fused(&self, ps: &ParamSet, fused: &[Vec<f64>]) -> LocalPrediction {
        self.decode(ps, fused).0
    }

    /// World-frame prediction for one scene.
    pub fn predict(&self, ps: &ParamSet, input: &ModelInput) -> PredictionSet {
        let (out, _) = self.forward(ps, input);
        to_world(&out.prediction, input)
    }
}

/// Converts a local prediction to world coordinates. Scales stay aligned with
/// the local axes.
pub(crate) fn to_world(p: &LocalPrediction, input: &ModelInput) -> PredictionSet {
    PredictionSet {
        locations: p
            .locations
            .iter()
            .map(|m| m.iter().map(|l| input.frame.to_world(*l)).collect())
            .collect(),
        scales: p.scales.clone(),
        mode_probs: p.probs.clone(),
    }
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
    x.iter().map(|v| v / n).collect()
}

fn normalize_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
    let y: Vec<f64> = x.iter().map(|v| v / n).collect();
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    dy.iter().zip(&y).map(|(g, yi)| (g - yi * dot) / n).collect()
}
