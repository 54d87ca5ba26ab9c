//! Small statistical helpers shared by the estimators.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
///
/// Returns 1.0 for a zero statistic and for degenerate degrees of freedom.
pub fn t_two_sided_pvalue(t: f64, df: f64) -> f64 {
    if !(df > 0.0) || t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

/// Upper tail probability of the chi-square distribution.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 || x.is_nan() {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    dist.sf(x).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` in the denominator; zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// `n` points spaced evenly on a log scale between `lo` and `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_pvalue_reference_points() {
        assert_eq!(t_two_sided_pvalue(0.0, 10.0), 1.0);
        // t = 2.228 is the 97.5% quantile at 10 df
        assert!((t_two_sided_pvalue(2.228_138_85, 10.0) - 0.05).abs() < 1e-6);
        assert_eq!(t_two_sided_pvalue(3.0, 0.0), 1.0);
    }

    #[test]
    fn chi2_reference_points() {
        assert!((chi2_sf(3.841_458_82, 1.0) - 0.05).abs() < 1e-7);
        // chi-square with two degrees of freedom has survival exp(-x/2)
        assert!((chi2_sf(4.0, 2.0) - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(chi2_sf(0.0, 2.0), 1.0);
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-3, 10.0, 16);
        assert_eq!(g.len(), 16);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[15] - 10.0).abs() < 1e-12);
    }
}
