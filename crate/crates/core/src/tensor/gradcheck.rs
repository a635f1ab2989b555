use crate::error::{Error, Result};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare an analytic gradient against central differences of `loss`.
///
/// `params` is the flattened parameter vector the loss is evaluated at,
/// `analytic` its gradient. `indices` restricts the check to a subset
/// (all coordinates when `None`). Returns the worst relative error.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], h: f64, indices: Option<&[usize]>) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::dim("grad check", "parameter", params.len(), analytic.len()));
    }
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..params.len()).collect();
            &all
        }
    };
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for &i in idx {
        let orig = x[i];
        x[i] = orig + h;
        let plus = loss(&x);
        x[i] = orig - h;
        let minus = loss(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}
