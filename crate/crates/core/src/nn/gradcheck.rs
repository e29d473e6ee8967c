use super::Tensor;
use crate::error::{Error, Result};

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at `point`.
///
/// Only the listed flat `coords` are probed (all of them when `None`).
/// Returns the largest [`relative_error`] seen.
pub fn finite_diff_check<F>(f: F, analytic: &Tensor, point: &Tensor, step: f64, coords: Option<&[usize]>) -> Result<f64>
where
    F: Fn(&Tensor) -> f64,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Argument(format!("finite-difference step must be positive, got {step}")));
    }
    analytic.ensure_same_shape(point, "finite_diff_check")?;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for &i in coords {
        if i >= point.len() {
            return Err(Error::Argument(format!("coordinate {i} outside tensor of {} entries", point.len())));
        }
        let x = point.data()[i];
        probe.data_mut()[i] = x + step;
        let up = f(&probe);
        probe.data_mut()[i] = x - step;
        let down = f(&probe);
        probe.data_mut()[i] = x;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(relative_error(numeric, analytic.data()[i]));
    }
    Ok(worst)
}
