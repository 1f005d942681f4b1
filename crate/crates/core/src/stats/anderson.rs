use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_finite, Alternative, MethodNotes, StatsError, TestResult};

/// Pooled distinct values and, for each observation, the index of its value.
struct Pooled {
    /// multiplicity of each distinct value
    l: Vec<f64>,
    /// distinct-value index per observation, in input order
    value_of: Vec<usize>,
    /// sample index per observation
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl Pooled {
    fn new(samples: &[&[f64]]) -> Self {
        let mut obs: Vec<(f64, usize)> = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            obs.extend(s.iter().map(|&v| (v, i)));
        }
        let mut order: Vec<usize> = (0..obs.len()).collect();
        order.sort_by(|&a, &b| obs[a].0.total_cmp(&obs[b].0));
        let mut value_of = vec![0; obs.len()];
        let mut l: Vec<f64> = Vec::new();
        let mut prev = f64::NAN;
        for &o in &order {
            if obs[o].0 != prev {
                l.push(0.0);
                prev = obs[o].0;
            }
            *l.last_mut().unwrap() += 1.0;
            value_of[o] = l.len() - 1;
        }
        Pooled {
            l,
            value_of,
            labels: obs.iter().map(|o| o.1).collect(),
            sizes: samples.iter().map(|s| s.len()).collect(),
        }
    }

    /// Midrank k-sample statistic A²_akN for a given label vector.
    fn statistic(&self, labels: &[usize]) -> f64 {
        let k = self.sizes.len();
        let nl = self.l.len();
        let n: f64 = self.sizes.iter().sum::<usize>() as f64;
        let mut f = vec![vec![0.0; nl]; k];
        for (o, &lab) in labels.iter().enumerate() {
            f[lab][self.value_of[o]] += 1.0;
        }
        let mut total = 0.0;
        for (i, fi) in f.iter().enumerate() {
            let ni = self.sizes[i] as f64;
            let mut inner = 0.0;
            let mut b = 0.0;
            let mut m = 0.0;
            for j in 0..nl {
                let lj = self.l[j];
                b += lj;
                m += fi[j];
                let ba = b - lj / 2.0;
                let ma = m - fi[j] / 2.0;
                let denom = ba * (n - ba) - n * lj / 4.0;
                if denom > 0.0 {
                    inner += lj / n * (n * ma - ni * ba).powi(2) / denom;
                }
            }
            total += inner / ni;
        }
        total * (n - 1.0) / n
    }
}

/// Tie-adjusted k-sample Anderson-Darling statistic.
pub fn ad_statistic(samples: &[&[f64]]) -> Result<f64, StatsError> {
    check_samples(samples)?;
    let p = Pooled::new(samples);
    Ok(p.statistic(&p.labels))
}

fn check_samples(samples: &[&[f64]]) -> Result<(), StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::SampleTooSmall("need at least 2 samples".into()));
    }
    if samples.iter().any(|s| s.len() < 2) {
        return Err(StatsError::SampleTooSmall("each sample needs at least 2 values".into()));
    }
    samples.iter().try_for_each(|s| check_finite(s))
}

/// A² with a label-permutation p-value `(1 + #{A²_perm ≥ A²_obs}) / (B + 1)`.
pub fn anderson_darling_k(samples: &[&[f64]], n_permutations: usize, seed: u64) -> Result<TestResult, StatsError> {
    check_samples(samples)?;
    let pooled = Pooled::new(samples);
    let observed = pooled.statistic(&pooled.labels);
    let tol = 1e-12 * observed.abs().max(1.0);
    let exceed: usize = (0..n_permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut labels = pooled.labels.clone();
            labels.shuffle(&mut rng);
            usize::from(pooled.statistic(&labels) >= observed - tol)
        })
        .sum();
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_permutations + 1) as f64,
        alternative: Alternative::TwoSided,
        notes: MethodNotes {
            permutation: true,
            ties: pooled.l.iter().any(|&l| l > 1.0),
            ..Default::default()
        },
    })
}
