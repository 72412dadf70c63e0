use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Job-time distribution of a serverless worker: a lognormal jitter around
/// the median, plus a heavy tail where a fraction `straggler_prob` of
/// workers run `U[multiplier_low, multiplier_high]` times the median.
///
/// The defaults match the AWS Lambda profile used throughout: median 40 s,
/// 5% of workers near 100 s, the slowest near 375 s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StragglerModel {
    pub median: f64,
    pub straggler_prob: f64,
    pub multiplier_low: f64,
    pub multiplier_high: f64,
    /// Log-scale standard deviation of the non-straggler jitter.
    pub jitter: f64,
}

impl Default for StragglerModel {
    fn default() -> Self {
        StragglerModel {
            median: 40.0,
            straggler_prob: 0.05,
            multiplier_low: 2.5,
            multiplier_high: 9.4,
            jitter: 0.05,
        }
    }
}

impl StragglerModel {
    /// The same median and jitter with no tail.
    pub fn without_stragglers(&self) -> Self {
        StragglerModel {
            straggler_prob: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.median > 0.0
            && self.median.is_finite()
            && (0.0..=1.0).contains(&self.straggler_prob)
            && self.multiplier_low >= 1.0
            && self.multiplier_high >= self.multiplier_low
            && self.multiplier_high.is_finite()
            && self.jitter >= 0.0
            && self.jitter.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfiguration(format!(
                "invalid straggler model {self:?}"
            )))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Draw both branches unconditionally so the stream position does not
        // depend on the outcome.
        let straggles = rng.random::<f64>() < self.straggler_prob;
        let multiplier = if self.multiplier_high > self.multiplier_low {
            rng.random_range(self.multiplier_low..=self.multiplier_high)
        } else {
            self.multiplier_low
        };
        let noise = if self.jitter > 0.0 {
            LogNormal::new(0.0, self.jitter)
                .expect("validated jitter")
                .sample(rng)
        } else {
            1.0
        };
        if straggles {
            self.median * multiplier
        } else {
            self.median * noise
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_tail_never_multiplies() {
        let model = StragglerModel {
            straggler_prob: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let d = model.sample(&mut rng);
            assert!(d > 0.0 && d < model.median * 1.5);
        }
    }

    #[test]
    fn always_straggling_fixed_multiplier() {
        let model = StragglerModel {
            straggler_prob: 1.0,
            multiplier_low: 2.5,
            multiplier_high: 2.5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(model.sample(&mut rng), 100.0);
        }
    }

    #[test]
    fn default_profile_landmarks() {
        let model = StragglerModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2019);
        let mut draws: Vec<f64> = (0..100_000).map(|_| model.sample(&mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        let p50 = draws[50_000];
        let p95 = draws[95_000];
        let max = *draws.last().unwrap();
        assert!((38.0..42.0).contains(&p50), "median {p50}");
        assert!((40.0..=100.0).contains(&p95), "p95 {p95}");
        assert!(max <= 376.0, "max {max}");
        assert!(draws.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn same_seed_same_stream() {
        let model = StragglerModel::default();
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..50).map(|_| model.sample(&mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..50).map(|_| model.sample(&mut rng)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_probability() {
        let model = StragglerModel {
            straggler_prob: 1.5,
            ..Default::default()
        };
        assert!(model.validate().is_err());
    }
}
