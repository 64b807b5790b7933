use itertools::Itertools;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::StatsError;

/// Largest sample for which [`spearman_exact_p`] enumerates permutations.
pub const EXACT_P_MAX_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(StatsError::NotFinite);
    }
    Ok(())
}

/// Pearson correlation of two rank vectors. Average ranks always have mean
/// `(n + 1) / 2`, and centring against that constant keeps the deviations
/// exact multiples of one half.
fn rank_pearson(rx: &[f64], ry: &[f64]) -> Result<f64, StatsError> {
    let center = (rx.len() as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(ry) {
        let (dx, dy) = (a - center, b - center);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Two-tailed p-value of a rank correlation via the t approximation with
/// `n - 2` degrees of freedom.
pub fn t_test_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("n >= 3 gives positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Spearman's rank-order correlation with average-rank ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    check_inputs(x, y)?;
    let rho = rank_pearson(&average_ranks(x), &average_ranks(y))?;
    Ok(Correlation {
        rho,
        p_value: t_test_p(rho, x.len()),
        n: x.len(),
    })
}

/// Exact two-tailed permutation p-value: the share of all orderings of `y`
/// whose |rho| reaches the observed |rho|.
pub fn spearman_exact_p(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    check_inputs(x, y)?;
    if x.len() > EXACT_P_MAX_N {
        return Err(StatsError::TooMany {
            max: EXACT_P_MAX_N,
            got: x.len(),
        });
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let observed = rank_pearson(&rx, &ry)?;
    let threshold = observed.abs() - 1e-12;
    let mut hits = 0u64;
    let mut total = 0u64;
    for perm in ry.iter().copied().permutations(ry.len()) {
        total += 1;
        if rank_pearson(&rx, &perm)?.abs() >= threshold {
            hits += 1;
        }
    }
    Ok(Correlation {
        rho: observed,
        p_value: hits as f64 / total as f64,
        n: x.len(),
    })
}
