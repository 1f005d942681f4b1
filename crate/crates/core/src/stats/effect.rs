use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EffectLabel {
    None,
    Small,
    Medium,
    Large,
}

impl EffectLabel {
    /// Boundary values belong to the larger category.
    pub fn from_d(d: f64) -> Self {
        let a = d.abs();
        if a >= 0.8 {
            EffectLabel::Large
        } else if a >= 0.5 {
            EffectLabel::Medium
        } else if a >= 0.2 {
            EffectLabel::Small
        } else {
            EffectLabel::None
        }
    }

    /// Table symbol: –, S, M or L.
    pub fn symbol(self) -> &'static str {
        match self {
            EffectLabel::None => "–",
            EffectLabel::Small => "S",
            EffectLabel::Medium => "M",
            EffectLabel::Large => "L",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub d: f64,
    pub label: EffectLabel,
}

/// Cohen's d with the pooled sample standard deviation.
pub fn cohen_d(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 || n1 + n2 < 3 {
        return Err(StatsError::SampleTooSmall("cohen_d needs n₁ + n₂ ≥ 3".into()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let ss = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>())
    };
    let (m1, s1) = ss(a);
    let (m2, s2) = ss(b);
    let pooled = ((s1 + s2) / (n1 + n2 - 2) as f64).sqrt();
    if !(pooled > 0.0) {
        return Err(StatsError::ZeroPooledVariance);
    }
    let d = (m1 - m2) / pooled;
    Ok(EffectSize {
        d,
        label: EffectLabel::from_d(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(cohen_d(&a, &a).unwrap().label, EffectLabel::None);
        let b = [2.0, 3.0, 4.0];
        let e = cohen_d(&b, &a).unwrap();
        assert_eq!((e.d, e.label), (1.0, EffectLabel::Large));
        assert_eq!(cohen_d(&a, &b).unwrap().d, -1.0);
        assert_eq!(EffectLabel::from_d(0.5), EffectLabel::Medium);
        assert_eq!(EffectLabel::from_d(-0.2), EffectLabel::Small);
        assert_eq!(EffectLabel::from_d(0.8), EffectLabel::Large);
        assert_eq!(cohen_d(&[1.0, 1.0], &[1.0]), Err(StatsError::ZeroPooledVariance));
    }
}
