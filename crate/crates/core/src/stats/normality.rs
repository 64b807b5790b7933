use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

/// 5% critical value for the corrected statistic when mean and variance
/// are estimated from the sample.
pub const AD_CRITICAL_5PCT: f64 = 0.752;

pub const AD_MIN_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AndersonDarling {
    /// Raw statistic A².
    pub a2: f64,
    /// Small-sample corrected A*² = A²(1 + 0.75/n + 2.25/n²).
    pub a2_star: f64,
    pub reject_at_5pct: bool,
}

/// Anderson-Darling test of normality with estimated mean and variance.
pub fn anderson_darling_normal(sample: &[f64]) -> Result<AndersonDarling, StatsError> {
    let n = sample.len();
    if n < AD_MIN_N {
        return Err(StatsError::TooFew {
            needed: AD_MIN_N,
            got: n,
        });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NotFinite);
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var == 0.0 {
        return Err(StatsError::Constant);
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = sample.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);

    let phi = Normal::standard();
    let s: f64 = (0..n)
        .map(|i| {
            let weight = (2 * i + 1) as f64;
            weight * (phi.cdf(z[i]).ln() + phi.sf(z[n - 1 - i]).ln())
        })
        .sum();
    let a2 = -nf - s / nf;
    let a2_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    Ok(AndersonDarling {
        a2,
        a2_star,
        reject_at_5pct: a2_star > AD_CRITICAL_5PCT,
    })
}
