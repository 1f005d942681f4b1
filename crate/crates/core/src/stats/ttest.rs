use super::{check_finite, student_t_cdf, Alternative, MethodNotes, StatsError, TestResult};

/// Paired t-test on `x − y` with n − 1 degrees of freedom.
pub fn paired_t(x: &[f64], y: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::SampleTooSmall("paired t needs n ≥ 2".into()));
    }
    check_finite(x)?;
    check_finite(y)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let mut notes = MethodNotes {
        exact: true,
        ..Default::default()
    };
    let t = if var > 0.0 {
        mean / (var / n).sqrt()
    } else {
        notes.zero_variance = true;
        if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    };
    let df = n - 1.0;
    let p_value = if notes.zero_variance && t == 0.0 {
        match alternative {
            Alternative::TwoSided => 1.0,
            _ => 0.5,
        }
    } else {
        let cdf = student_t_cdf(t, df);
        match alternative {
            Alternative::Greater => 1.0 - cdf,
            Alternative::Less => cdf,
            Alternative::TwoSided => (2.0 * cdf.min(1.0 - cdf)).min(1.0),
        }
    };
    Ok(TestResult {
        statistic: t,
        p_value: p_value.clamp(0.0, 1.0),
        alternative,
        notes,
    })
}
