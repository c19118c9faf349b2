use super::{evaluate, Backward, KernelSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor so near-zero gradients are compared absolutely.
const REL_FLOOR: f64 = 1e-3;

const COTANGENT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorError {
    /// `param[i]` or `input[i]`.
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kernel: &'static str,
    pub tolerance: f64,
    pub tensors: Vec<TensorError>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// `max_i |a_i − n_i| / max(|a_i|, |n_i|, 1e-3)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let err = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
            if err.is_nan() {
                f64::INFINITY
            } else {
                err
            }
        })
        .fold(0.0, f64::max)
}

/// Checks the kernel's own backward pass.
pub fn grad_check(spec: &KernelSpec, params: &[Tensor], inputs: &[Tensor], tolerance: f64) -> GradCheckReport {
    match evaluate(spec, params, inputs) {
        Ok((_, back)) => grad_check_with(spec, params, inputs, &back, tolerance),
        Err(_) => failed(spec, tolerance),
    }
}

fn failed(spec: &KernelSpec, tolerance: f64) -> GradCheckReport {
    GradCheckReport {
        kernel: spec.name(),
        tolerance,
        tensors: Vec::new(),
        passed: false,
    }
}

/// Checks an arbitrary backward closure against central differences of the
/// kernel's forward pass, contracted with fixed random output cotangents.
pub fn grad_check_with(
    spec: &KernelSpec,
    params: &[Tensor],
    inputs: &[Tensor],
    backward: &Backward,
    tolerance: f64,
) -> GradCheckReport {
    let Ok((outputs, _)) = evaluate(spec, params, inputs) else {
        return failed(spec, tolerance);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(COTANGENT_SEED);
    let cot: Vec<Tensor> = outputs
        .iter()
        .map(|o| {
            let data = (0..o.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Tensor::new(o.shape().to_vec(), data).expect("same shape")
        })
        .collect();
    let Ok(analytic) = backward(&cot) else {
        return failed(spec, tolerance);
    };

    let objective = |p: &[Tensor], x: &[Tensor]| -> f64 {
        match evaluate(spec, p, x) {
            Ok((out, _)) => out
                .iter()
                .zip(&cot)
                .map(|(o, c)| o.data().iter().zip(c.data()).map(|(a, b)| a * b).sum::<f64>())
                .sum(),
            Err(_) => f64::NAN,
        }
    };

    let mut tensors = Vec::new();
    let mut p = params.to_vec();
    let mut x = inputs.to_vec();
    for (is_param, analytic_list) in [(true, &analytic.params), (false, &analytic.inputs)] {
        let count = if is_param { p.len() } else { x.len() };
        for ti in 0..count {
            let len = if is_param { p[ti].len() } else { x[ti].len() };
            let mut numeric = vec![0.0; len];
            for (k, nk) in numeric.iter_mut().enumerate() {
                let target = |p: &mut Vec<Tensor>, x: &mut Vec<Tensor>, v: f64| {
                    if is_param {
                        p[ti].data_mut()[k] = v;
                    } else {
                        x[ti].data_mut()[k] = v;
                    }
                };
                let orig = if is_param { p[ti].data()[k] } else { x[ti].data()[k] };
                target(&mut p, &mut x, orig + FD_STEP);
                let up = objective(&p, &x);
                target(&mut p, &mut x, orig - FD_STEP);
                let down = objective(&p, &x);
                target(&mut p, &mut x, orig);
                *nk = (up - down) / (2.0 * FD_STEP);
            }
            let err = match analytic_list.get(ti) {
                Some(a) if a.len() == len => max_relative_error(a.data(), &numeric),
                _ => f64::INFINITY,
            };
            tensors.push(TensorError {
                name: format!("{}[{ti}]", if is_param { "param" } else { "input" }),
                max_rel_error: err,
            });
        }
        if analytic_list.len() != count {
            tensors.push(TensorError {
                name: format!("{} count", if is_param { "param" } else { "input" }),
                max_rel_error: f64::INFINITY,
            });
        }
    }
    let passed = tensors.iter().all(|t| t.max_rel_error <= tolerance);
    GradCheckReport {
        kernel: spec.name(),
        tolerance,
        tensors,
        passed,
    }
}
