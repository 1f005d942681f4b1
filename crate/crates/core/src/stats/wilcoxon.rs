use super::{check_finite, midranks, normal_cdf, tie_sum, two_sided, Alternative, MethodNotes, StatsError, TestResult};

/// Largest effective sample size evaluated exactly.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMode {
    Auto,
    Exact,
    Normal,
}

/// Signed-rank test on `x − y`; zero differences are dropped.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    wilcoxon_signed_rank_with(x, y, alternative, WilcoxonMode::Auto)
}

pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    alternative: Alternative,
    mode: WilcoxonMode,
) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(x)?;
    check_finite(y)?;
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let mut notes = MethodNotes {
        zeros_dropped: x.len() - diffs.len(),
        ..Default::default()
    };
    if diffs.is_empty() {
        notes.all_zero = true;
        notes.exact = true;
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            alternative,
            notes,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let ties = tie_sum(&abs);
    notes.ties = ties > 0.0;
    let n = diffs.len();
    let exact = match mode {
        WilcoxonMode::Auto => n <= EXACT_MAX_N,
        WilcoxonMode::Exact => true,
        WilcoxonMode::Normal => false,
    };
    notes.exact = exact;
    let (p_greater, p_less) = if exact {
        exact_tails(&ranks, w)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = (w - mu) / var.sqrt();
        (1.0 - normal_cdf(z), normal_cdf(z))
    };
    let p_value = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => two_sided(p_greater, p_less),
    };
    Ok(TestResult {
        statistic: w,
        p_value: p_value.clamp(0.0, 1.0),
        alternative,
        notes,
    })
}

/// `(P(W ≥ w), P(W ≤ w))` under random signs, by counting subsets over doubled
/// (integer) midranks.
fn exact_tails(ranks: &[f64], w: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let obs = (2.0 * w).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let ge: f64 = counts[obs..].iter().sum();
    let le: f64 = counts[..=obs].iter().sum();
    (ge / all, le / all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0], &[0.0; 3], Alternative::Greater).unwrap();
        assert_eq!((r.statistic, r.p_value), (6.0, 0.125));
        let r = wilcoxon_signed_rank(&[-1.0, -2.0, -3.0], &[0.0; 3], Alternative::Greater).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = wilcoxon_signed_rank(&[1.0, 2.0], &[1.0, 2.0], Alternative::TwoSided).unwrap();
        assert!(r.notes.all_zero && r.p_value == 1.0);
        assert!(wilcoxon_signed_rank(&[1.0], &[], Alternative::Less).is_err());
    }

    #[test]
    fn zeros_dropped_and_flagged() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 5.0], &[0.0, 0.0, 0.0, 5.0], Alternative::Greater).unwrap();
        assert_eq!(r.notes.zeros_dropped, 1);
        assert_eq!(r.p_value, 0.125);
    }

    #[test]
    fn normal_mode_is_close_at_twenty() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 1.7).sin() + 0.3).collect();
        let y = vec![0.0; 20];
        let e = wilcoxon_signed_rank_with(&x, &y, Alternative::TwoSided, WilcoxonMode::Exact).unwrap();
        let a = wilcoxon_signed_rank_with(&x, &y, Alternative::TwoSided, WilcoxonMode::Normal).unwrap();
        assert!((e.p_value - a.p_value).abs() < 0.02);
    }
}
