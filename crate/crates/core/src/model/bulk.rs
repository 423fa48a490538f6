use rand::Rng;

/// Batch-size distribution on the positive integers.
#[derive(Debug, Clone, PartialEq)]
pub enum BulkDistribution {
    /// Every batch has exactly this many jobs.
    Deterministic(u32),
    /// Uniform on `1..=max`.
    Uniform { max: u32 },
    /// `P(b = k) = (1 - p)^(k-1) p` for `k >= 1`.
    Geometric { p: f64 },
    /// `pmf[k - 1] = P(b = k)`.
    Empirical(Vec<f64>),
}

/// Size distribution of bulk arrivals together with its first two moments.
#[derive(Debug, Clone, PartialEq)]
pub struct BulkSpec {
    pub distribution: BulkDistribution,
}

impl BulkSpec {
    pub fn new(distribution: BulkDistribution) -> Self {
        BulkSpec { distribution }
    }

    pub fn deterministic(size: u32) -> Self {
        BulkSpec::new(BulkDistribution::Deterministic(size))
    }

    pub fn uniform(max: u32) -> Self {
        BulkSpec::new(BulkDistribution::Uniform { max })
    }

    pub fn geometric(p: f64) -> Self {
        BulkSpec::new(BulkDistribution::Geometric { p })
    }

    /// `E[b]`.
    pub fn mean(&self) -> f64 {
        match &self.distribution {
            BulkDistribution::Deterministic(k) => f64::from(*k),
            BulkDistribution::Uniform { max } => (f64::from(*max) + 1.0) / 2.0,
            BulkDistribution::Geometric { p } => 1.0 / p,
            BulkDistribution::Empirical(pmf) => {
                pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
            }
        }
    }

    /// `E[b^2]`.
    pub fn second_moment(&self) -> f64 {
        match &self.distribution {
            BulkDistribution::Deterministic(k) => f64::from(*k) * f64::from(*k),
            BulkDistribution::Uniform { max } => {
                let b = f64::from(*max);
                (b + 1.0) * (2.0 * b + 1.0) / 6.0
            }
            BulkDistribution::Geometric { p } => (2.0 - p) / (p * p),
            BulkDistribution::Empirical(pmf) => pmf
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let k = (i + 1) as f64;
                    k * k * p
                })
                .sum(),
        }
    }

    /// Probability of a batch of exactly `k` jobs.
    pub fn pmf(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match &self.distribution {
            BulkDistribution::Deterministic(size) => f64::from(u8::from(k == *size)),
            BulkDistribution::Uniform { max } => {
                if k <= *max {
                    1.0 / f64::from(*max)
                } else {
                    0.0
                }
            }
            BulkDistribution::Geometric { p } => (1.0 - p).powi(k as i32 - 1) * p,
            BulkDistribution::Empirical(pmf) => pmf.get(k as usize - 1).copied().unwrap_or(0.0),
        }
    }

    /// Problems with the distribution parameters, if any.
    pub fn check(&self) -> Option<String> {
        match &self.distribution {
            BulkDistribution::Deterministic(0) => Some("deterministic bulk size must be >= 1".into()),
            BulkDistribution::Uniform { max: 0 } => Some("uniform bulk max must be >= 1".into()),
            BulkDistribution::Geometric { p } if !(*p > 0.0 && *p <= 1.0) => {
                Some(format!("geometric parameter {p} outside (0, 1]"))
            }
            BulkDistribution::Empirical(pmf) => {
                if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Some("empirical bulk pmf has entries outside [0, 1]".into());
                }
                let s: f64 = pmf.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Some(format!("empirical bulk pmf sums to {s}, expected 1"));
                }
                None
            }
            _ => None,
        }
    }

    /// Draw one batch size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match &self.distribution {
            BulkDistribution::Deterministic(k) => *k,
            BulkDistribution::Uniform { max } => rng.random_range(1..=*max),
            BulkDistribution::Geometric { p } => {
                if *p >= 1.0 {
                    return 1;
                }
                // inversion: smallest k with 1 - (1-p)^k >= u
                let u: f64 = rng.random();
                let k = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
                k.max(1.0).min(f64::from(u32::MAX)) as u32
            }
            BulkDistribution::Empirical(pmf) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in pmf.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return i as u32 + 1;
                    }
                }
                pmf.iter().rposition(|p| *p > 0.0).map_or(1, |i| i as u32 + 1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn summed(b: &BulkSpec, upto: u32) -> (f64, f64, f64) {
        (1..=upto).fold((0.0, 0.0, 0.0), |(s, m1, m2), k| {
            let p = b.pmf(k);
            let kf = f64::from(k);
            (s + p, m1 + kf * p, m2 + kf * kf * p)
        })
    }

    #[test]
    fn moments_match_pmf_summation() {
        let cases = [
            BulkSpec::deterministic(1),
            BulkSpec::deterministic(7),
            BulkSpec::uniform(100),
            BulkSpec::uniform(1),
            BulkSpec::geometric(0.25),
            BulkSpec::new(BulkDistribution::Empirical(vec![0.5, 0.0, 0.25, 0.25])),
        ];
        for b in &cases {
            let (mass, m1, m2) = summed(b, 400);
            assert!((mass - 1.0).abs() < 1e-12, "{b:?}");
            assert!((b.mean() - m1).abs() <= 1e-12 * m1, "{b:?}");
            assert!((b.second_moment() - m2).abs() <= 1e-12 * m2, "{b:?}");
            assert!(b.second_moment() >= b.mean() * b.mean());
            assert!(b.mean() >= 1.0);
        }
    }

    #[test]
    fn uniform_hundred_moments() {
        let b = BulkSpec::uniform(100);
        assert_eq!(b.mean(), 50.5);
        assert_eq!(b.second_moment(), 3383.5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(BulkSpec::deterministic(0).check().is_some());
        assert!(BulkSpec::geometric(0.0).check().is_some());
        assert!(BulkSpec::new(BulkDistribution::Empirical(vec![0.5, 0.4])).check().is_some());
        assert!(BulkSpec::uniform(100).check().is_none());
    }

    #[test]
    fn sampling_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in [BulkSpec::uniform(100), BulkSpec::geometric(0.2)] {
            let n = 200_000;
            let mean = (0..n).map(|_| f64::from(b.sample(&mut rng))).sum::<f64>() / n as f64;
            assert!((mean - b.mean()).abs() < 0.02 * b.mean(), "{b:?} {mean}");
        }
    }
}
