use super::{Init, ParamId, ParamSet};
use rand::Rng;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Input cotangent of softmax given its output `y` and output cotangent `dy`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(yi, di)| yi * (di - dot)).collect()
}

/// `ln(2s) + |x − μ| / s`.
pub fn laplace_nll(x: f64, mu: f64, scale: f64) -> f64 {
    (2.0 * scale).ln() + (x - mu).abs() / scale
}

/// Partial derivatives `(∂/∂x, ∂/∂μ, ∂/∂s)` of [`laplace_nll`], with
/// `sign(0) = 0`.
pub fn laplace_nll_grad(x: f64, mu: f64, scale: f64) -> (f64, f64, f64) {
    let r = x - mu;
    let sg = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    (sg / scale, -sg / scale, 1.0 / scale - r.abs() / (scale * scale))
}

/// `y = W x + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, out_dim: usize, init: Init, rng: &mut impl Rng) -> Self {
        let w = ps.add(format!("{name}.w"), init.sample(&[out_dim, in_dim], rng));
        let b = ps.add(format!("{name}.b"), Init::Zeros.sample(&[out_dim], rng));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let w = ps.get(self.w).data();
        let b = ps.get(self.b).data();
        (0..self.out_dim)
            .map(|o| {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns the input cotangent.
    pub fn backward(&self, ps: &ParamSet, x: &[f64], dy: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        {
            let gw = grads.get_mut(self.w).data_mut();
            for o in 0..self.out_dim {
                if dy[o] == 0.0 {
                    continue;
                }
                let row = &mut gw[o * self.in_dim..(o + 1) * self.in_dim];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dy[o] * xi;
                }
            }
        }
        {
            let gb = grads.get_mut(self.b).data_mut();
            for (g, d) in gb.iter_mut().zip(dy) {
                *g += d;
            }
        }
        let w = ps.get(self.w).data();
        let mut dx = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            if dy[o] == 0.0 {
                continue;
            }
            let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += dy[o] * wi;
            }
        }
        dx
    }
}

/// Affine layers with `tanh` between them and a linear output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    /// Input of each layer; entries past the first are post-`tanh`.
    inputs: Vec<Vec<f64>>,
}

impl Mlp {
    /// `dims = [in, hidden.., out]`. The last layer uses `last_init`.
    pub fn new(ps: &mut ParamSet, name: &str, dims: &[usize], last_init: Init, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output sizes");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let init = if i + 1 == n { last_init } else { Init::Xavier { gain: 1.0 } };
                Affine::new(ps, &format!("{name}.{i}"), dims[i], dims[i + 1], init, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, ps: &ParamSet, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(ps, &h);
            if i + 1 < self.layers.len() {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            inputs.push(h);
            h = y;
        }
        (h, MlpCache { inputs })
    }

    pub fn backward(&self, ps: &ParamSet, cache: &MlpCache, dy: &[f64], grads: &mut ParamSet) -> Vec<f64> {
        let mut d = dy.to_vec();
        for i in (0..self.layers.len()).rev() {
            d = self.layers[i].backward(ps, &cache.inputs[i], &d, grads);
            if i > 0 {
                for (g, a) in d.iter_mut().zip(&cache.inputs[i]) {
                    *g *= 1.0 - a * a;
                }
            }
        }
        d
    }
}

/// Gated recurrent unit, gate order `[reset, update, candidate]`:
/// `n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`, `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gru {
    pub input: Affine,
    pub recurrent: Affine,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    x: Vec<f64>,
    h: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

impl GruCache {
    pub fn reset_gate(&self) -> &[f64] {
        &self.r
    }

    pub fn update_gate(&self) -> &[f64] {
        &self.z
    }

    pub fn candidate(&self) -> &[f64] {
        &self.n
    }
}

impl Gru {
    pub fn new(ps: &mut ParamSet, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let init = Init::Xavier { gain: 1.0 };
        let input = Affine::new(ps, &format!("{name}.ih"), in_dim, 3 * hidden, init, rng);
        let recurrent = Affine::new(ps, &format!("{name}.hh"), hidden, 3 * hidden, init, rng);
        Self { input, recurrent, hidden }
    }

    pub fn step(&self, ps: &ParamSet, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let hd = self.hidden;
        let gi = self.input.forward(ps, x);
        let gh = self.recurrent.forward(ps, h);
        let r: Vec<f64> = (0..hd).map(|i| logistic(gi[i] + gh[i])).collect();
        let z: Vec<f64> = (0..hd).map(|i| logistic(gi[hd + i] + gh[hd + i])).collect();
        let hn = gh[2 * hd..].to_vec();
        let n: Vec<f64> = (0..hd).map(|i| (gi[2 * hd + i] + r[i] * hn[i]).tanh()).collect();
        let out = (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
        let cache = GruCache {
            x: x.to_vec(),
            h: h.to_vec(),
            r,
            z,
            n,
            hn,
        };
        (out, cache)
    }

    /// Returns `(dx, dh_prev)`.
    pub fn step_backward(&self, ps: &ParamSet, c: &GruCache, dh_new: &[f64], grads: &mut ParamSet) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let mut dgi = vec![0.0; 3 * hd];
        let mut dgh = vec![0.0; 3 * hd];
        let mut dh = vec![0.0; hd];
        for i in 0..hd {
            let d = dh_new[i];
            let dn = d * (1.0 - c.z[i]);
            let dz = d * (c.h[i] - c.n[i]);
            dh[i] = d * c.z[i];
            let dn_pre = dn * (1.0 - c.n[i] * c.n[i]);
            let dr = dn_pre * c.hn[i];
            let dr_pre = dr * c.r[i] * (1.0 - c.r[i]);
            let dz_pre = dz * c.z[i] * (1.0 - c.z[i]);
            dgi[i] = dr_pre;
            dgh[i] = dr_pre;
            dgi[hd + i] = dz_pre;
            dgh[hd + i] = dz_pre;
            dgi[2 * hd + i] = dn_pre;
            dgh[2 * hd + i] = dn_pre * c.r[i];
        }
        let dx = self.input.backward(ps, &c.x, &dgi, grads);
        let dh_rec = self.recurrent.backward(ps, &c.h, &dgh, grads);
        for (a, b) in dh.iter_mut().zip(dh_rec) {
            *a += b;
        }
        (dx, dh)
    }
}

/// Multi-head scaled dot-product attention with input and output
/// projections. Heads split the model width evenly and are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attention {
    pub wq: Affine,
    pub wk: Affine,
    pub wv: Affine,
    pub wo: Affine,
    pub heads: usize,
    pub d_model: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    q_in: Vec<Vec<f64>>,
    k_in: Vec<Vec<f64>>,
    v_in: Vec<Vec<f64>>,
    qp: Vec<Vec<f64>>,
    kp: Vec<Vec<f64>>,
    vp: Vec<Vec<f64>>,
    /// `weights[h][i][j]`: attention of query `i` on key `j` in head `h`.
    weights: Vec<Vec<Vec<f64>>>,
    concat: Vec<Vec<f64>>,
}

impl AttentionCache {
    pub fn weights(&self) -> &[Vec<Vec<f64>>] {
        &self.weights
    }
}

impl Attention {
    pub fn new(
        ps: &mut ParamSet,
        name: &str,
        q_dim: usize,
        kv_dim: usize,
        d_model: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(heads >= 1 && d_model % heads == 0, "model width must split evenly across heads");
        let init = Init::Xavier { gain: 1.0 };
        Self {
            wq: Affine::new(ps, &format!("{name}.q"), q_dim, d_model, init, rng),
            wk: Affine::new(ps, &format!("{name}.k"), kv_dim, d_model, init, rng),
            wv: Affine::new(ps, &format!("{name}.v"), kv_dim, d_model, init, rng),
            wo: Affine::new(ps, &format!("{name}.o"), d_model, d_model, init, rng),
            heads,
            d_model,
        }
    }

    pub fn forward(
        &self,
        ps: &ParamSet,
        queries: &[Vec<f64>],
        keys: &[Vec<f64>],
        values: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, AttentionCache) {
        assert_eq!(keys.len(), values.len(), "keys and values must pair up");
        assert!(!keys.is_empty(), "attention needs at least one key");
        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qp: Vec<Vec<f64>> = queries.iter().map(|q| self.wq.forward(ps, q)).collect();
        let kp: Vec<Vec<f64>> = keys.iter().map(|k| self.wk.forward(ps, k)).collect();
        let vp: Vec<Vec<f64>> = values.iter().map(|v| self.wv.forward(ps, v)).collect();
        let mut concat = vec![vec![0.0; self.d_model]; queries.len()];
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let hs = h * dh..(h + 1) * dh;
            let mut wh = Vec::with_capacity(queries.len());
            for (i, q) in qp.iter().enumerate() {
                let scores: Vec<f64> = kp
                    .iter()
                    .map(|k| q[hs.clone()].iter().zip(&k[hs.clone()]).map(|(a, b)| a * b).sum::<f64>() * scale)
                    .collect();
                let a = softmax(&scores);
                for (aj, v) in a.iter().zip(&vp) {
                    for (o, vv) in concat[i][hs.clone()].iter_mut().zip(&v[hs.clone()]) {
                        *o += aj * vv;
                    }
                }
                wh.push(a);
            }
            weights.push(wh);
        }
        let out = concat.iter().map(|c| self.wo.forward(ps, c)).collect();
        let cache = AttentionCache {
            q_in: queries.to_vec(),
            k_in: keys.to_vec(),
            v_in: values.to_vec(),
            qp,
            kp,
            vp,
            weights,
            concat,
        };
        (out, cache)
    }

    /// Returns cotangents for `(queries, keys, values)`.
    #[allow(clippy::type_complexity)]
    pub fn backward(
        &self,
        ps: &ParamSet,
        c: &AttentionCache,
        dout: &[Vec<f64>],
        grads: &mut ParamSet,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat: Vec<Vec<f64>> = c
            .concat
            .iter()
            .zip(dout)
            .map(|(x, d)| self.wo.backward(ps, x, d, grads))
            .collect();
        let mut dqp = vec![vec![0.0; self.d_model]; c.qp.len()];
        let mut dkp = vec![vec![0.0; self.d_model]; c.kp.len()];
        let mut dvp = vec![vec![0.0; self.d_model]; c.vp.len()];
        for h in 0..self.heads {
            let hs = h * dh..(h + 1) * dh;
            for i in 0..c.qp.len() {
                let a = &c.weights[h][i];
                let dout_h = &dconcat[i][hs.clone()];
                let da: Vec<f64> = c
                    .vp
                    .iter()
                    .map(|v| dout_h.iter().zip(&v[hs.clone()]).map(|(x, y)| x * y).sum())
                    .collect();
                for (j, aj) in a.iter().enumerate() {
                    for (g, d) in dvp[j][hs.clone()].iter_mut().zip(dout_h) {
                        *g += aj * d;
                    }
                }
                let ds = softmax_backward(a, &da);
                for (j, dsj) in ds.iter().enumerate() {
                    let f = dsj * scale;
                    for k in hs.clone() {
                        dqp[i][k] += f * c.kp[j][k];
                        dkp[j][k] += f * c.qp[i][k];
                    }
                }
            }
        }
        let dq = c.q_in.iter().zip(&dqp).map(|(x, d)| self.wq.backward(ps, x, d, grads)).collect();
        let dk = c.k_in.iter().zip(&dkp).map(|(x, d)| self.wk.backward(ps, x, d, grads)).collect();
        let dv = c.v_in.iter().zip(&dvp).map(|(x, d)| self.wv.backward(ps, x, d, grads)).collect();
        (dq, dk, dv)
    }
}
