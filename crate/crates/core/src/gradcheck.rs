//! Central finite-difference verification of autodiff gradients.
//!
//! Relative error uses `|ad - fd| / max(|ad|, |fd|, 1e-3)`; the floor keeps
//! the metric meaningful when a gradient entry is near zero, where central
//! differences carry only rounding noise.

use crate::exec::{map_indexed, Exec};
use crate::tensor::Tensor;

/// Central-difference step used throughout the test suites.
pub const FD_STEP: f64 = 1e-5;

const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    /// (parameter name, flat element index, autodiff value, finite-difference value)
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compare `autodiff_grads` (one flat gradient per parameter, aligned with
/// `params`) against central finite differences of `loss_fn`.
///
/// `loss_fn` must be a pure function of the parameter values; it is invoked
/// twice per checked element with a single entry perturbed by ±`h`.
pub fn check_against_fd<F>(
    names: &[String],
    params: &[Tensor],
    autodiff_grads: &[Vec<f64>],
    loss_fn: F,
    h: f64,
    exec: Exec,
) -> FdReport
where
    F: Fn(&[Tensor]) -> f64 + Sync,
{
    assert_eq!(names.len(), params.len());
    assert_eq!(params.len(), autodiff_grads.len());

    // Flatten (param, element) pairs so the whole sweep is one indexed map.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in params.iter().enumerate() {
        assert_eq!(p.numel(), autodiff_grads[pi].len(), "grad length mismatch");
        for ei in 0..p.numel() {
            slots.push((pi, ei));
        }
    }

    let errs = map_indexed(exec, slots.len(), |si| {
        let (pi, ei) = slots[si];
        let fd = {
            let eval = |delta: f64| {
                let mut perturbed: Vec<Tensor> = params.to_vec();
                perturbed[pi].data_mut()[ei] += delta;
                loss_fn(&perturbed)
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        };
        let ad = autodiff_grads[pi][ei];
        (rel_err(ad, fd), ad, fd)
    });

    let mut report = FdReport {
        max_rel_err: 0.0,
        worst: None,
        checked: slots.len(),
    };
    for (si, (err, ad, fd)) in errs.into_iter().enumerate() {
        if err >= report.max_rel_err {
            let (pi, ei) = slots[si];
            report.max_rel_err = err;
            report.worst = Some((names[pi].clone(), ei, ad, fd));
        }
    }
    report
}
