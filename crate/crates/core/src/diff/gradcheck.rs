//! Finite-difference verification of [`Graph::backward`].

use alloc::vec::Vec;

use super::graph::{Graph, GraphOptions, Primitive, Var};
use super::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum admissible relative error.
    pub tolerance: f64,
    /// Denominator floor for the relative error, so near-zero gradients are
    /// compared absolutely.
    pub floor: f64,
    /// Coordinates whose one-sided slopes disagree by more than this
    /// (relative) straddle a kink and are excluded.
    pub kink_threshold: f64,
    /// Multiplies every analytic gradient before comparison; `-1` simulates
    /// a sign error.
    pub analytic_scale: f64,
    pub options: GraphOptions,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-4,
            kink_threshold: 1e-2,
            analytic_scale: 1.0,
            options: GraphOptions::default(),
        }
    }
}

/// Location of one checked coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub input: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<Coordinate>,
    /// Coordinates skipped because they sit within a step of a kink or clamp.
    pub excluded: Vec<Coordinate>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = libm::fabs(analytic).max(libm::fabs(numeric)).max(floor);
    libm::fabs(analytic - numeric) / denom
}

fn evaluate<F>(f: &F, inputs: &[Tensor], options: GraphOptions) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::with_options(options);
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.item(out))
}

/// Checks the gradient of the scalar built by `f` with respect to every
/// coordinate of every input. `skip` marks coordinates known to sit near a
/// non-differentiable point; kinks are also detected from one-sided slopes.
pub fn grad_check_with<F, S>(
    inputs: &[Tensor],
    f: F,
    skip: S,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    S: Fn(Coordinate, f64) -> bool,
{
    let mut g = Graph::with_options(config.options);
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let f0 = g.item(out);
    let grads = g.backward(out)?;

    let h = config.step;
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
        excluded: Vec::new(),
        tolerance: config.tolerance,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (input, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map(|t| t.data().to_vec()).unwrap_or_default();
        for index in 0..inputs[input].len() {
            let coord = Coordinate { input, index };
            let x = inputs[input].data()[index];
            if skip(coord, x) {
                report.excluded.push(coord);
                continue;
            }
            work[input].data_mut()[index] = x + h;
            let fp = evaluate(&f, &work, config.options);
            work[input].data_mut()[index] = x - h;
            let fm = evaluate(&f, &work, config.options);
            work[input].data_mut()[index] = x;
            let (fp, fm) = match (fp, fm) {
                (Ok(p), Ok(m)) => (p, m),
                // A perturbation that leaves the domain marks a boundary.
                _ => {
                    report.excluded.push(coord);
                    continue;
                }
            };
            let fwd = (fp - f0) / h;
            let bwd = (f0 - fm) / h;
            let scale = libm::fabs(fwd).max(libm::fabs(bwd)).max(1.0);
            if libm::fabs(fwd - bwd) > config.kink_threshold * scale {
                report.excluded.push(coord);
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = config.analytic_scale * analytic.get(index).copied().unwrap_or(0.0);
            let err = relative_error(a, numeric, config.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(coord);
            }
        }
    }
    Ok(report)
}

pub fn grad_check<F>(inputs: &[Tensor], f: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_with(inputs, f, |_, _| false, config)
}

/// Fixed projection weights that turn a tensor output into a scalar without
/// the symmetry of a plain sum (which would hide softmax and layer-norm
/// gradients entirely).
fn probe_weights(len: usize) -> Tensor {
    Tensor::vector(
        (0..len)
            .map(|k| libm::sin(1.3 * k as f64 + 0.7) + 0.25)
            .collect(),
    )
}

/// Checks a single primitive on `inputs`; non-scalar outputs are reduced by a
/// fixed weighted sum.
pub fn grad_check_primitive(
    prim: Primitive,
    inputs: &[Tensor],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let margin = 10.0 * config.step;
    let acos_lim = 1.0 - config.options.acos_clamp;
    let skip = move |c: Coordinate, x: f64| -> bool {
        if c.input != 0 {
            return false;
        }
        match prim {
            Primitive::Relu | Primitive::Abs => libm::fabs(x) < margin,
            Primitive::Clamp { lo, hi } => libm::fabs(x - lo) < margin || libm::fabs(x - hi) < margin,
            Primitive::Acos => libm::fabs(libm::fabs(x) - acos_lim) < margin,
            _ => false,
        }
    };
    grad_check_with(
        inputs,
        move |g, vars| {
            let y = g.apply(prim, vars)?;
            if g.value(y).is_scalar() {
                return Ok(y);
            }
            let n = g.value(y).len();
            let shape = g.value(y).shape().to_vec();
            let w = g.constant(probe_weights(n).reshaped(shape)?);
            let p = g.mul(y, w)?;
            g.sum(p)
        },
        skip,
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert!((relative_error(0.0, 1e-6, 1e-4) - 1e-2).abs() < 1e-15);
        assert_eq!(relative_error(2.0, 1.0, 1e-4), 0.5);
    }

    #[test]
    fn excludes_coordinates_at_a_kink() {
        // |x| evaluated at a kink straddled by the step is excluded, not failed.
        let x = Tensor::vector(alloc::vec![0.0, 1.0]);
        let report = grad_check(&[x], |g, v| {
            let a = g.abs(v[0])?;
            g.sum(a)
        }, &GradCheckConfig::default())
        .unwrap();
        assert_eq!(report.excluded.len(), 1);
        assert_eq!(report.checked, 1);
        assert!(report.passed());
    }
}
