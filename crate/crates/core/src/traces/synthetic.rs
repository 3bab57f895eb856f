//! Seeded generator of bursty per-user demands.
//!
//! Each user has a steady base load plus on/off bursts drawn from a Pareto
//! distribution. A user's burst probability is chosen so that, with unit
//! amplitude, the coefficient of variation of its demand is roughly a
//! target drawn log-uniformly from `[cv_min, cv_max]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Pareto};

use super::{DemandTrace, TraceError};

#[derive(Debug, Clone, PartialEq)]
pub struct BurstParams {
    /// Long-run mean demand per user, in slices.
    pub mean_demand: f64,
    /// Fraction of the mean carried by bursts; 0 gives constant demands.
    pub amplitude: f64,
    pub cv_min: f64,
    pub cv_max: f64,
    /// Pareto shape of burst sizes; must exceed 1.
    pub tail_shape: f64,
}

impl Default for BurstParams {
    fn default() -> Self {
        BurstParams {
            mean_demand: 10.0,
            amplitude: 1.0,
            cv_min: 0.5,
            cv_max: 12.0,
            tail_shape: 2.5,
        }
    }
}

impl BurstParams {
    fn validate(&self) -> Result<(), TraceError> {
        let bad = |m: &str| Err(TraceError::InvalidParams(m.into()));
        if !(self.mean_demand.is_finite() && self.mean_demand >= 0.0) {
            return bad("mean_demand must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return bad("amplitude must lie in [0, 1]");
        }
        if !(self.cv_min > 0.0 && self.cv_min <= self.cv_max && self.cv_max.is_finite()) {
            return bad("need 0 < cv_min <= cv_max");
        }
        if !(self.tail_shape > 1.0 && self.tail_shape.is_finite()) {
            return bad("tail_shape must exceed 1");
        }
        Ok(())
    }
}

pub fn gen_synthetic(
    n_users: usize,
    n_quanta: usize,
    params: &BurstParams,
    seed: u64,
) -> Result<DemandTrace, TraceError> {
    params.validate()?;
    if n_users == 0 || n_quanta == 0 {
        return Err(TraceError::InvalidParams(
            "need at least one user and one quantum".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = params.tail_shape;
    // Scale chosen so the burst size has mean 1.
    let burst = Pareto::new((k - 1.0) / k, k).expect("validated shape");
    let (lo, hi) = (params.cv_min.ln(), params.cv_max.ln());
    let a = params.amplitude;

    let mut columns = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let cv = if hi > lo {
            rng.gen_range(lo..=hi).exp()
        } else {
            params.cv_min
        };
        let mean = params.mean_demand * rng.gen_range(0.5..=1.5);
        let p = 1.0 / (1.0 + cv * cv);
        let on = Bernoulli::new(p).expect("p in (0, 1]");
        let column = (0..n_quanta)
            .map(|_| {
                let mut d = (1.0 - a) * mean;
                if on.sample(&mut rng) {
                    d += a * mean / p * burst.sample(&mut rng);
                }
                d.round() as u64
            })
            .collect();
        columns.push(column);
    }
    let users = (0..n_users).map(|u| format!("u{u}")).collect();
    DemandTrace::from_columns(users, &columns)
}

/// Population standard deviation over mean; 0 for an all-zero series.
pub fn cv_of(series: &[u64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<u64>() as f64 / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = series
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    var.sqrt() / mean
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_trace_is_bursty() {
        let t = gen_synthetic(100, 900, &BurstParams::default(), 42).unwrap();
        let cvs: Vec<f64> = (0..100).map(|u| cv_of(&t.column(u))).collect();
        let bursty = cvs.iter().filter(|&&c| c >= 0.5).count();
        assert!(bursty >= 40, "only {bursty} bursty users");
    }

    #[test]
    fn zero_amplitude_is_constant() {
        let params = BurstParams {
            amplitude: 0.0,
            ..BurstParams::default()
        };
        let t = gen_synthetic(10, 50, &params, 7).unwrap();
        for u in 0..10 {
            assert_eq!(cv_of(&t.column(u)), 0.0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = BurstParams::default();
        assert_eq!(
            gen_synthetic(20, 30, &p, 1).unwrap(),
            gen_synthetic(20, 30, &p, 1).unwrap()
        );
        assert_ne!(
            gen_synthetic(20, 30, &p, 1).unwrap(),
            gen_synthetic(20, 30, &p, 2).unwrap()
        );
    }

    #[test]
    fn rejects_bad_params() {
        let p = BurstParams {
            tail_shape: 1.0,
            ..BurstParams::default()
        };
        assert!(gen_synthetic(2, 2, &p, 0).is_err());
        let p = BurstParams {
            amplitude: 1.5,
            ..BurstParams::default()
        };
        assert!(gen_synthetic(2, 2, &p, 0).is_err());
        assert!(gen_synthetic(0, 2, &BurstParams::default(), 0).is_err());
    }
}
