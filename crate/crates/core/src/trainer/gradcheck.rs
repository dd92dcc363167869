//! Central finite-difference checks of analytic gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::trainer::encoder::{EncoderMarker, ToyEncoder};
use crate::trainer::toy::{example_loss, example_loss_and_grad, min_argmax_gap, ToyExample};

/// Denominator floor of the relative error, so parameters with vanishing
/// gradients are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter where the maximum was attained.
    pub worst_index: usize,
    pub numeric: Vec<f64>,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares `analytic` against central differences of `loss` at `params`,
/// one parameter at a time.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], epsilon: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(alloc::format!(
            "epsilon must lie in [1e-6, 1e-3], got {epsilon}"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            what: "params vs analytic gradient",
            left: params.len(),
            right: analytic.len(),
        });
    }
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut worst = (0.0f64, 0usize);
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + epsilon;
        let up = loss(&probe);
        probe[i] = orig - epsilon;
        let down = loss(&probe);
        probe[i] = orig;
        let n = (up - down) / (2.0 * epsilon);
        let err = relative_error(analytic[i], n);
        if !(err <= worst.0) {
            worst = (err, i);
        }
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        numeric,
    })
}

/// Whether every per-token max of the example is at least `10 * epsilon`
/// away from a tie.
pub fn is_kink_free(enc: &ToyEncoder, ex: &ToyExample, sentence_marker: EncoderMarker, epsilon: f64) -> Result<bool> {
    Ok(min_argmax_gap(enc, ex, sentence_marker)? >= 10.0 * epsilon)
}

/// Gradient check of the total loss of the toy encoder on one example.
pub fn toy_grad_check(
    enc: &ToyEncoder,
    ex: &ToyExample,
    sentence_marker: EncoderMarker,
    temperature: f64,
    epsilon: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = example_loss_and_grad(enc, ex, sentence_marker, temperature, true)?;
    let mut probe = enc.clone();
    let mut failure = None;
    let report = grad_check(
        |p| {
            probe.params_mut().copy_from_slice(p);
            match example_loss(&probe, ex, sentence_marker, temperature) {
                Ok(r) => r.total,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        },
        enc.params(),
        &analytic,
        epsilon,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
