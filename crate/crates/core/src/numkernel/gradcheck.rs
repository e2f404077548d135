use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective around coordinate {i}"
            )));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Largest `|a - n| / max(|a|, |n|)` over coordinates where `|a| > floor`,
/// together with the offending index.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> (f64, Option<usize>) {
    let mut worst = (0.0, None);
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        if a.abs() <= floor {
            continue;
        }
        let rel = (a - n).abs() / a.abs().max(n.abs());
        if rel > worst.0 {
            worst = (rel, Some(i));
        }
    }
    worst
}
