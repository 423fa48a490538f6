use statrs::distribution::{ContinuousCDF, StudentsT};

/// Point estimate with the half-width of its 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    /// Student-t interval over independent replication means. A single
    /// replication gives an infinite half-width. NaN samples (no
    /// observations in that replication) are skipped.
    pub fn from_replications(samples: &[f64]) -> Estimate {
        let data: Vec<f64> = samples.iter().copied().filter(|x| !x.is_nan()).collect();
        let n = data.len();
        if n == 0 {
            return Estimate { mean: f64::NAN, half_width: f64::NAN };
        }
        let mean = data.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { mean, half_width: f64::INFINITY };
        }
        let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        let t = t_quantile_975(n - 1);
        Estimate { mean, half_width: t * (var / n as f64).sqrt() }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(0.975)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_interval() {
        let e = Estimate::from_replications(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(e.mean, 3.0);
        // s = sqrt(2.5), t_{0.975,4} = 2.776445
        let expected = 2.776_445_105 * (2.5f64 / 5.0).sqrt();
        assert!((e.half_width - expected).abs() < 1e-6);
        assert!(e.contains(4.9) && !e.contains(5.0));
    }

    #[test]
    fn degenerate_inputs() {
        let one = Estimate::from_replications(&[2.0]);
        assert_eq!(one.half_width, f64::INFINITY);
        let none = Estimate::from_replications(&[f64::NAN]);
        assert!(none.mean.is_nan());
    }
}
