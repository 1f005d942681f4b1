use super::{check_finite, midranks, normal_cdf, tie_sum, two_sided, Alternative, MethodNotes, StatsError, TestResult};

/// Exact mode is used while the number of label arrangements stays below this.
pub const EXACT_MAX_ARRANGEMENTS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwuMode {
    Auto,
    Exact,
    Normal,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mann-Whitney U for sample `a` against `b`; `Greater` means `a` tends larger.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    mann_whitney_u_with(a, b, alternative, MwuMode::Auto)
}

pub fn mann_whitney_u_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    mode: MwuMode,
) -> Result<TestResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let ties = tie_sum(&pooled);
    let exact = match mode {
        MwuMode::Auto => binomial(n1 + n2, n1) <= EXACT_MAX_ARRANGEMENTS,
        MwuMode::Exact => true,
        MwuMode::Normal => false,
    };
    let notes = MethodNotes {
        exact,
        ties: ties > 0.0,
        ..Default::default()
    };
    let (p_greater, p_less, p_two) = if exact {
        let (g, l) = exact_tails(&ranks, n1, r1);
        (g, l, two_sided(g, l))
    } else {
        let (f1, f2) = (n1 as f64, n2 as f64);
        let n = f1 + f2;
        let mu = f1 * f2 / 2.0;
        let var = f1 * f2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
        if var <= 0.0 {
            (1.0, 1.0, 1.0)
        } else {
            let sd = var.sqrt();
            let g = 1.0 - normal_cdf((u - mu - 0.5) / sd);
            let l = normal_cdf((u - mu + 0.5) / sd);
            let z = ((u - mu).abs() - 0.5).max(0.0) / sd;
            (g, l, (2.0 * (1.0 - normal_cdf(z))).min(1.0))
        }
    };
    let p_value = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => p_two,
    };
    Ok(TestResult {
        statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        alternative,
        notes,
    })
}

/// `(P(R₁ ≥ r₁), P(R₁ ≤ r₁))` over all size-n₁ subsets of the pooled
/// (doubled, integer) midranks.
fn exact_tails(ranks: &[f64], n1: usize, r1: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[j][s]: subsets of size j with doubled rank sum s
    let mut counts = vec![vec![0.0f64; total + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for (i, &r) in doubled.iter().enumerate() {
        for j in (1..=n1.min(i + 1)).rev() {
            let (lo, hi) = counts.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (r..=total).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let obs = (2.0 * r1).round() as usize;
    let row = &counts[n1];
    let all: f64 = row.iter().sum();
    let ge: f64 = row[obs..].iter().sum();
    let le: f64 = row[..=obs].iter().sum();
    (ge / all, le / all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 6.0).abs() < 1e-15);
        assert!(r.notes.exact);
        let s = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&s, &s, Alternative::TwoSided).unwrap();
        assert_eq!(r.statistic, 8.0);
        assert!(r.p_value > 0.99);
        assert!(mann_whitney_u(&[], &s, Alternative::Less).is_err());
    }

    #[test]
    fn large_samples_use_normal() {
        let a: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..40).map(|i| i as f64 + 10.5).collect();
        let r = mann_whitney_u(&a, &b, Alternative::Less).unwrap();
        assert!(!r.notes.exact && r.p_value < 0.01);
    }
}
