//! Central-difference gradient checking.

use crate::error::{Error, Result};

/// Floor on the relative-error denominator. Coordinates whose true gradient is
/// below this magnitude are compared in absolute terms against it, since the
/// finite-difference estimate itself carries ~1e-10 absolute noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares `analytic[i]` against `(f(θ+εe_i) − f(θ−εe_i)) / 2ε` for the
/// coordinates in `coords` (all coordinates when `None`).
pub fn grad_check<F>(
    mut f: F,
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Contract(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    let mut eval = |t: &[f64]| -> Result<f64> {
        let v = f(t)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("objective evaluated to {v}")));
        }
        Ok(v)
    };
    eval(theta)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = theta.to_vec();
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = eval(&probe)?;
        probe[i] = orig - eps;
        let minus = eval(&probe)?;
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || coords.len() == 1 {
            report = GradCheckReport {
                max_rel_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let r = grad_check(|t| Ok(t[0] * t[0]), &[3.0], &[6.0], 1e-5, None).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert!((r.numeric - 6.0).abs() < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // claims d/dθ θ² = θ instead of 2θ
        let r = grad_check(|t| Ok(t[0] * t[0]), &[3.0], &[3.0], 1e-5, None).unwrap();
        assert!(r.max_rel_error > 1e-2);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = grad_check(|t| Ok(t[0].ln()), &[-1.0], &[0.0], 1e-5, None);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn eps_out_of_range_rejected() {
        assert!(grad_check(|t| Ok(t[0]), &[1.0], &[1.0], 1e-2, None).is_err());
    }
}
