use super::layers::{laplace_nll, laplace_nll_grad, logistic, softmax, softmax_backward, softplus};
use super::{Affine, Attention, Gru, Mlp, NnError, ParamId, ParamSet, Tensor};

/// A kernel kind with its dimensions.
///
/// Parameter and input order per kind:
///
/// | kind | params | inputs | outputs |
/// |---|---|---|---|
/// | `Affine` | `W[out,in]`, `b[out]` | `x[n,in]` | `y[n,out]` |
/// | `Perceptron` | `W_i`, `b_i` per layer | `x[n,dims0]` | `y[n,dims_last]` |
/// | `Attention` | `Wq,bq,Wk,bk,Wv,bv,Wo,bo` | `Q[nq,q]`, `K[nk,kv]`, `V[nk,kv]` | `O[nq,d_model]` |
/// | `RecurrentCell` | `W_ih[3h,in]`, `b_ih`, `W_hh[3h,h]`, `b_hh` | `x[in]`, `h[h]` | `h'[h]` |
/// | `Softmax`, `Logistic`, `Softplus` | none | `x[n]` | `y[n]` |
/// | `LaplaceNLL` | none | `x[n]`, `μ[n]`, `s[n]` | `ℓ[n]` |
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelSpec {
    Affine { in_dim: usize, out_dim: usize },
    /// `tanh` hidden layers and a linear output; `dims = [in, hidden.., out]`.
    Perceptron { dims: Vec<usize> },
    Attention { q_dim: usize, kv_dim: usize, d_model: usize, heads: usize },
    RecurrentCell { input: usize, hidden: usize },
    Softmax { n: usize },
    Logistic { n: usize },
    Softplus { n: usize },
    LaplaceNLL { n: usize },
}

/// Parameter and input cotangents, in the order of the evaluated tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Cotangents {
    pub params: Vec<Tensor>,
    pub inputs: Vec<Tensor>,
}

/// Maps output cotangents to [`Cotangents`].
pub type Backward = Box<dyn Fn(&[Tensor]) -> Result<Cotangents, NnError> + Send + Sync>;

fn mismatch(msg: String) -> NnError {
    NnError::ShapeMismatch(msg)
}

impl KernelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Affine { .. } => "Affine",
            KernelSpec::Perceptron { .. } => "Perceptron",
            KernelSpec::Attention { .. } => "Attention",
            KernelSpec::RecurrentCell { .. } => "RecurrentCell",
            KernelSpec::Softmax { .. } => "Softmax",
            KernelSpec::Logistic { .. } => "Logistic",
            KernelSpec::Softplus { .. } => "Softplus",
            KernelSpec::LaplaceNLL { .. } => "LaplaceNLL",
        }
    }

    /// Expected parameter shapes, in order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match self {
            KernelSpec::Affine { in_dim, out_dim } => vec![vec![*out_dim, *in_dim], vec![*out_dim]],
            KernelSpec::Perceptron { dims } => dims
                .windows(2)
                .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
                .collect(),
            KernelSpec::Attention {
                q_dim,
                kv_dim,
                d_model,
                ..
            } => vec![
                vec![*d_model, *q_dim],
                vec![*d_model],
                vec![*d_model, *kv_dim],
                vec![*d_model],
                vec![*d_model, *kv_dim],
                vec![*d_model],
                vec![*d_model, *d_model],
                vec![*d_model],
            ],
            KernelSpec::RecurrentCell { input, hidden } => vec![
                vec![3 * hidden, *input],
                vec![3 * hidden],
                vec![3 * hidden, *hidden],
                vec![3 * hidden],
            ],
            _ => Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let ok = match self {
            KernelSpec::Affine { in_dim, out_dim } => *in_dim > 0 && *out_dim > 0,
            KernelSpec::Perceptron { dims } => dims.len() >= 2 && dims.iter().all(|d| *d > 0),
            KernelSpec::Attention {
                q_dim,
                kv_dim,
                d_model,
                heads,
            } => *q_dim > 0 && *kv_dim > 0 && *heads > 0 && *d_model > 0 && d_model % heads == 0,
            KernelSpec::RecurrentCell { input, hidden } => *input > 0 && *hidden > 0,
            KernelSpec::Softmax { n } | KernelSpec::Logistic { n } | KernelSpec::Softplus { n } | KernelSpec::LaplaceNLL { n } => {
                *n > 0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(mismatch(format!("inconsistent dimensions in {self:?}")))
        }
    }
}

fn check_params(spec: &KernelSpec, params: &[Tensor]) -> Result<ParamSet, NnError> {
    let shapes = spec.param_shapes();
    if shapes.len() != params.len() {
        return Err(mismatch(format!(
            "{} expects {} parameter tensors, got {}",
            spec.name(),
            shapes.len(),
            params.len()
        )));
    }
    let mut ps = ParamSet::new();
    for (i, (s, p)) in shapes.iter().zip(params).enumerate() {
        if p.shape() != s.as_slice() {
            return Err(mismatch(format!("parameter {i}: expected {s:?}, got {:?}", p.shape())));
        }
        ps.add(format!("p{i}"), p.clone());
    }
    Ok(ps)
}

fn check_inputs(spec: &KernelSpec, inputs: &[Tensor], count: usize) -> Result<(), NnError> {
    if inputs.len() != count {
        return Err(mismatch(format!("{} expects {count} inputs, got {}", spec.name(), inputs.len())));
    }
    Ok(())
}

fn expect_vector(t: &Tensor, n: usize, what: &str) -> Result<(), NnError> {
    if t.shape() != [n] {
        return Err(mismatch(format!("{what}: expected [{n}], got {:?}", t.shape())));
    }
    Ok(())
}

fn expect_rows(t: &Tensor, cols: usize, what: &str) -> Result<Vec<Vec<f64>>, NnError> {
    if t.shape().len() != 2 || t.shape()[1] != cols || t.shape()[0] == 0 {
        return Err(mismatch(format!("{what}: expected [n>0, {cols}], got {:?}", t.shape())));
    }
    Ok((0..t.rows()).map(|i| t.row(i).to_vec()).collect())
}

fn from_rows(rows: &[Vec<f64>]) -> Tensor {
    let cols = rows.first().map_or(0, Vec::len);
    Tensor::matrix(rows.len(), cols, rows.concat()).expect("rows share a width")
}

fn check_cotangents(dout: &[Tensor], shapes: &[Vec<usize>]) -> Result<(), NnError> {
    if dout.len() != shapes.len() || dout.iter().zip(shapes).any(|(t, s)| t.shape() != s.as_slice()) {
        return Err(mismatch("output cotangents do not match output shapes".into()));
    }
    Ok(())
}

fn pid(i: usize) -> ParamId {
    ParamId(i)
}

/// Runs a kernel forward and returns its outputs with a backward closure.
pub fn evaluate(spec: &KernelSpec, params: &[Tensor], inputs: &[Tensor]) -> Result<(Vec<Tensor>, Backward), NnError> {
    spec.validate()?;
    let ps = check_params(spec, params)?;
    match spec.clone() {
        KernelSpec::Affine { in_dim, out_dim } => {
            check_inputs(spec, inputs, 1)?;
            let x = expect_rows(&inputs[0], in_dim, "x")?;
            let aff = Affine {
                w: pid(0),
                b: pid(1),
                in_dim,
                out_dim,
            };
            let y: Vec<Vec<f64>> = x.iter().map(|r| aff.forward(&ps, r)).collect();
            let out_shape = vec![vec![x.len(), out_dim]];
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &out_shape)?;
                let mut g = ps.zeros_like();
                let dx: Vec<Vec<f64>> = x
                    .iter()
                    .enumerate()
                    .map(|(i, r)| aff.backward(&ps, r, dout[0].row(i), &mut g))
                    .collect();
                Ok(Cotangents {
                    params: g.tensors().to_vec(),
                    inputs: vec![from_rows(&dx)],
                })
            });
            Ok((vec![from_rows(&y)], back))
        }
        KernelSpec::Perceptron { dims } => {
            check_inputs(spec, inputs, 1)?;
            let x = expect_rows(&inputs[0], dims[0], "x")?;
            let mlp = Mlp {
                layers: dims
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| Affine {
                        w: pid(2 * i),
                        b: pid(2 * i + 1),
                        in_dim: w[0],
                        out_dim: w[1],
                    })
                    .collect(),
            };
            let (y, caches): (Vec<_>, Vec<_>) = x.iter().map(|r| mlp.forward(&ps, r)).unzip();
            let out_shape = vec![vec![x.len(), *dims.last().expect("validated")]];
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &out_shape)?;
                let mut g = ps.zeros_like();
                let dx: Vec<Vec<f64>> = caches
                    .iter()
                    .enumerate()
                    .map(|(i, c)| mlp.backward(&ps, c, dout[0].row(i), &mut g))
                    .collect();
                Ok(Cotangents {
                    params: g.tensors().to_vec(),
                    inputs: vec![from_rows(&dx)],
                })
            });
            Ok((vec![from_rows(&y)], back))
        }
        KernelSpec::Attention {
            q_dim,
            kv_dim,
            d_model,
            heads,
        } => {
            check_inputs(spec, inputs, 3)?;
            let q = expect_rows(&inputs[0], q_dim, "queries")?;
            let k = expect_rows(&inputs[1], kv_dim, "keys")?;
            let v = expect_rows(&inputs[2], kv_dim, "values")?;
            if k.len() != v.len() {
                return Err(mismatch(format!("{} keys but {} values", k.len(), v.len())));
            }
            let aff = |i: usize, in_dim: usize| Affine {
                w: pid(2 * i),
                b: pid(2 * i + 1),
                in_dim,
                out_dim: d_model,
            };
            let att = Attention {
                wq: aff(0, q_dim),
                wk: aff(1, kv_dim),
                wv: aff(2, kv_dim),
                wo: aff(3, d_model),
                heads,
                d_model,
            };
            let (y, cache) = att.forward(&ps, &q, &k, &v);
            let out_shape = vec![vec![q.len(), d_model]];
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &out_shape)?;
                let mut g = ps.zeros_like();
                let d: Vec<Vec<f64>> = (0..dout[0].rows()).map(|i| dout[0].row(i).to_vec()).collect();
                let (dq, dk, dv) = att.backward(&ps, &cache, &d, &mut g);
                Ok(Cotangents {
                    params: g.tensors().to_vec(),
                    inputs: vec![from_rows(&dq), from_rows(&dk), from_rows(&dv)],
                })
            });
            Ok((vec![from_rows(&y)], back))
        }
        KernelSpec::RecurrentCell { input, hidden } => {
            check_inputs(spec, inputs, 2)?;
            expect_vector(&inputs[0], input, "x")?;
            expect_vector(&inputs[1], hidden, "h")?;
            let gru = Gru {
                input: Affine {
                    w: pid(0),
                    b: pid(1),
                    in_dim: input,
                    out_dim: 3 * hidden,
                },
                recurrent: Affine {
                    w: pid(2),
                    b: pid(3),
                    in_dim: hidden,
                    out_dim: 3 * hidden,
                },
                hidden,
            };
            let (h, cache) = gru.step(&ps, inputs[0].data(), inputs[1].data());
            let out_shape = vec![vec![hidden]];
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &out_shape)?;
                let mut g = ps.zeros_like();
                let (dx, dh) = gru.step_backward(&ps, &cache, dout[0].data(), &mut g);
                Ok(Cotangents {
                    params: g.tensors().to_vec(),
                    inputs: vec![Tensor::vector(dx), Tensor::vector(dh)],
                })
            });
            Ok((vec![Tensor::vector(h)], back))
        }
        KernelSpec::Softmax { n } => {
            check_inputs(spec, inputs, 1)?;
            expect_vector(&inputs[0], n, "x")?;
            let y = softmax(inputs[0].data());
            let yc = y.clone();
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &[vec![n]])?;
                Ok(Cotangents {
                    params: Vec::new(),
                    inputs: vec![Tensor::vector(softmax_backward(&yc, dout[0].data()))],
                })
            });
            Ok((vec![Tensor::vector(y)], back))
        }
        KernelSpec::Logistic { n } => {
            check_inputs(spec, inputs, 1)?;
            expect_vector(&inputs[0], n, "x")?;
            let y: Vec<f64> = inputs[0].data().iter().map(|v| logistic(*v)).collect();
            let yc = y.clone();
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &[vec![n]])?;
                let dx = yc.iter().zip(dout[0].data()).map(|(y, d)| d * y * (1.0 - y)).collect();
                Ok(Cotangents {
                    params: Vec::new(),
                    inputs: vec![Tensor::vector(dx)],
                })
            });
            Ok((vec![Tensor::vector(y)], back))
        }
        KernelSpec::Softplus { n } => {
            check_inputs(spec, inputs, 1)?;
            expect_vector(&inputs[0], n, "x")?;
            let x = inputs[0].data().to_vec();
            let y = x.iter().map(|v| softplus(*v)).collect();
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &[vec![n]])?;
                let dx = x.iter().zip(dout[0].data()).map(|(x, d)| d * logistic(*x)).collect();
                Ok(Cotangents {
                    params: Vec::new(),
                    inputs: vec![Tensor::vector(dx)],
                })
            });
            Ok((vec![Tensor::vector(y)], back))
        }
        KernelSpec::LaplaceNLL { n } => {
            check_inputs(spec, inputs, 3)?;
            for (t, what) in inputs.iter().zip(["x", "loc", "scale"]) {
                expect_vector(t, n, what)?;
            }
            if inputs[2].data().iter().any(|s| !(*s > 0.0)) {
                return Err(mismatch("Laplace scale must be positive".into()));
            }
            let (x, mu, s) = (inputs[0].data().to_vec(), inputs[1].data().to_vec(), inputs[2].data().to_vec());
            let y = (0..n).map(|i| laplace_nll(x[i], mu[i], s[i])).collect();
            let back: Backward = Box::new(move |dout| {
                check_cotangents(dout, &[vec![n]])?;
                let (mut dx, mut dmu, mut ds) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                for i in 0..n {
                    let (gx, gm, gs) = laplace_nll_grad(x[i], mu[i], s[i]);
                    let d = dout[0].data()[i];
                    dx[i] = d * gx;
                    dmu[i] = d * gm;
                    ds[i] = d * gs;
                }
                Ok(Cotangents {
                    params: Vec::new(),
                    inputs: vec![Tensor::vector(dx), Tensor::vector(dmu), Tensor::vector(ds)],
                })
            });
            Ok((vec![Tensor::vector(y)], back))
        }
    }
}
