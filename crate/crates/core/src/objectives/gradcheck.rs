use super::ObjectiveError;
use crate::rng::Stream;
use crate::scalar::Scalar;

/// Outcome of a central-difference gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    /// Largest relative error over the checked coordinates that are not kinks.
    pub max_rel_error: f64,
    /// Coordinate achieving `max_rel_error`.
    pub worst_coordinate: Option<usize>,
    /// Coordinates where the one-sided slopes disagree; excluded from the error.
    pub kinks: Vec<usize>,
    /// Number of coordinates compared.
    pub checked: usize,
}

/// Compares `analytic` with central differences of `f` at `theta`.
///
/// The relative error at coordinate `j` is
/// `|g_j − n_j| / max(|g_j|, |n_j|, 1e-4 · max(1, ‖g‖∞))`; the floor keeps
/// coordinates whose derivative is essentially zero from dividing rounding
/// noise by itself. A coordinate is a kink when its forward and backward
/// slopes differ by more than `1e-3 · max(1, ‖g‖∞)`, which a smooth function
/// cannot do at step sizes near `1e-5`.
///
/// When `theta` has more than `max_coords` entries, a random subset of
/// `max_coords` distinct coordinates drawn with `seed` is checked.
pub fn finite_diff_check<T, F>(
    f: F,
    theta: &[T],
    analytic: &[T],
    step: T,
    max_coords: usize,
    seed: u64,
) -> Result<FiniteDiffReport, ObjectiveError>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<T, ObjectiveError>,
{
    if theta.len() != analytic.len() {
        return Err(ObjectiveError::Shape(format!(
            "{} parameters but {} gradient entries",
            theta.len(),
            analytic.len()
        )));
    }
    if !(step > T::zero() && step.is_finite()) || max_coords == 0 {
        return Err(ObjectiveError::InvalidParams(
            "step must be positive and max_coords non-zero".into(),
        ));
    }
    let eval = |x: &[T]| -> Result<f64, ObjectiveError> {
        let v = f(x)?.as_f64();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ObjectiveError::NonFinite)
        }
    };
    let mut coords: Vec<usize> = (0..theta.len()).collect();
    if coords.len() > max_coords {
        let mut rng = Stream::new(seed);
        for i in 0..max_coords {
            let j = i + rng.below(coords.len() - i);
            coords.swap(i, j);
        }
        coords.truncate(max_coords);
        coords.sort_unstable();
    }
    let scale = analytic.iter().fold(1.0f64, |m, g| m.max(g.as_f64().abs()));
    let h = step.as_f64();
    let f0 = eval(theta)?;
    let mut x = theta.to_vec();
    let mut report = FiniteDiffReport {
        max_rel_error: 0.0,
        worst_coordinate: None,
        kinks: Vec::new(),
        checked: coords.len(),
    };
    for &j in &coords {
        let orig = x[j];
        x[j] = orig + step;
        let fp = eval(&x)?;
        x[j] = orig - step;
        let fm = eval(&x)?;
        x[j] = orig;
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if (fwd - bwd).abs() > 1e-3 * scale {
            report.kinks.push(j);
            continue;
        }
        let numeric = (fp - fm) / (2.0 * h);
        let g = analytic[j].as_f64();
        let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-4 * scale);
        if rel > report.max_rel_error || report.worst_coordinate.is_none() {
            report.max_rel_error = rel;
            report.worst_coordinate = Some(j);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let f = |x: &[f64]| {
            Ok(x.iter()
                .enumerate()
                .map(|(i, v)| (i as f64 + 1.0) * v * v - v)
                .sum::<f64>())
        };
        let theta = [0.3, -1.2, 2.5, 0.0];
        let grad: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, v)| 2.0 * (i as f64 + 1.0) * v - 1.0)
            .collect();
        // Central differences are exact for quadratics, so a wide step only cuts rounding.
        let r = finite_diff_check(f, &theta, &grad, 1e-3, 200, 0).unwrap();
        assert!(r.max_rel_error <= 1e-10, "{r:?}");
        assert!(r.kinks.is_empty());
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| Ok(x[0].sin());
        let r = finite_diff_check(f, &[0.4], &[0.4f64.cos() * 1.01], 1e-5, 200, 0).unwrap();
        assert!(r.max_rel_error > 5e-3);
    }

    #[test]
    fn absolute_value_kink_reported() {
        let f = |x: &[f64]| Ok(x[0].abs() + x[1] * x[1]);
        let r = finite_diff_check(f, &[0.0, 1.0], &[1.0, 2.0], 1e-5, 200, 0).unwrap();
        assert_eq!(r.kinks, vec![0]);
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn subset_is_distinct_and_sized() {
        let theta = vec![0.5f64; 1000];
        let grad = vec![1.0f64; 1000];
        let f = |x: &[f64]| Ok(x.iter().sum::<f64>());
        let r = finite_diff_check(f, &theta, &grad, 1e-5, 200, 9).unwrap();
        assert_eq!(r.checked, 200);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn non_finite_rejected() {
        let f = |_: &[f64]| Ok(f64::NAN);
        assert!(matches!(
            finite_diff_check(f, &[0.0], &[0.0], 1e-5, 10, 0),
            Err(ObjectiveError::NonFinite)
        ));
    }
}
