use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Result of a log–log regression `log y = c + p log x [+ s log log(1/x)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    /// `e^c`.
    pub constant: f64,
    /// Coefficient of the `log log(1/x)` regressor, when enabled.
    pub log_power: Option<f64>,
    /// Root-mean-square residual of the fit in `log y`.
    pub residual: f64,
}

/// Ordinary least squares on `(log x, log y)`, with the optional second
/// regressor `log log(1/x)` for laws carrying a logarithmic factor.
pub fn fit_exponent(xs: &[f64], ys: &[f64], with_log: bool) -> Result<ExponentFit> {
    if xs.len() != ys.len() {
        return invalid("fit needs equally many abscissae and values");
    }
    if xs.len() < 4 {
        return invalid(format!("fit needs at least 4 points, got {}", xs.len()));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return invalid(format!("fit needs positive finite data, got {v}"));
    }
    if with_log && xs.iter().any(|&x| x >= 1.0) {
        return invalid("log regressor needs all abscissae below 1");
    }
    let cols = if with_log { 3 } else { 2 };
    let n = xs.len();
    let a = DMatrix::from_fn(n, cols, |i, j| match j {
        0 => 1.0,
        1 => xs[i].ln(),
        _ => (1.0 / xs[i]).ln().ln(),
    });
    let b = DVector::from_iterator(n, ys.iter().map(|y| y.ln()));
    let svd = a.clone().svd(true, true);
    let coef = svd.solve(&b, 1e-14).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let resid = &a * &coef - &b;
    Ok(ExponentFit {
        exponent: coef[1],
        constant: coef[0].exp(),
        log_power: with_log.then(|| coef[2]),
        residual: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// Ordinary least-squares slope of `log y` against `log x`, for short
/// series where a full [`ExponentFit`] is not warranted.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("slope needs at least 2 paired points");
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return invalid(format!("slope needs positive finite data, got {v}"));
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return invalid("slope needs distinct abscissae");
    }
    Ok(sxy / sxx)
}

/// Residual level above which the largest sweep point is dropped from the
/// regression window.
pub const EXCLUSION_THRESHOLD: f64 = 0.02;

/// Fit that drops the point with the largest abscissa when the full fit
/// residual exceeds [`EXCLUSION_THRESHOLD`] and at least four points remain.
/// Returns the fit and the excluded abscissa, if any.
pub fn fit_exponent_windowed(xs: &[f64], ys: &[f64], with_log: bool) -> Result<(ExponentFit, Option<f64>)> {
    let full = fit_exponent(xs, ys, with_log)?;
    if full.residual <= EXCLUSION_THRESHOLD || xs.len() < 5 {
        return Ok((full, None));
    }
    let (imax, &xmax) = xs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let (x2, y2): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, (x, y))| (*x, *y))
        .unzip();
    Ok((fit_exponent(&x2, &y2, with_log)?, Some(xmax)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn short_series_slope() {
        let xs = [1e-6, 1e-7, 1e-8];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.4)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 0.4).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    fn geometric(a: f64, ratio: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * ratio.powi(i as i32)).collect()
    }

    #[test]
    fn exact_power_law() {
        let xs = geometric(1e-1, 0.1, 5);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let f = fit_exponent(&xs, &ys, false).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!((f.constant - 3.0).abs() < 1e-10);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn log_regressor_recovers_exponent() {
        let xs = geometric(1e-1, 0.3, 10);
        let ys: Vec<f64> = xs.iter().map(|x| x * x * (1.0 / x).ln()).collect();
        let f = fit_exponent(&xs, &ys, true).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-6);
        assert!((f.log_power.unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noisy_cube_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = geometric(1e-2, 0.5, 12);
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.powf(1.0 / 3.0) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            .collect();
        let f = fit_exponent(&xs, &ys, false).unwrap();
        assert!((f.exponent - 1.0 / 3.0).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_data() {
        let xs = geometric(1e-1, 0.1, 4);
        assert!(fit_exponent(&xs, &[1.0, 2.0, 0.0, 1.0], false).is_err());
        assert!(fit_exponent(&xs[..3], &[1.0, 2.0, 3.0], false).is_err());
    }

    #[test]
    fn window_drops_polluted_point() {
        let xs = geometric(1e-1, 0.1, 6);
        let mut ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        ys[0] *= 3.0;
        let (f, excluded) = fit_exponent_windowed(&xs, &ys, false).unwrap();
        assert_eq!(excluded, Some(1e-1));
        assert!((f.exponent - 2.0).abs() < 1e-10);
    }
}
