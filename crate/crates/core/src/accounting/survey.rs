//! Synthetic populations drawn from the workload-characteristics survey.
//!
//! Each survey row is an independent categorical draw. The survey percentages
//! are already weighted by core usage, so every generated workload gets the
//! same core count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::savings::{UtilSpec, WorkloadProfile};
use crate::hints::{HintSet, UtilBand};

/// Category weights for one survey row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row<T> {
    pub values: Vec<T>,
    pub weights: Vec<f64>,
}

impl<T: Clone> Row<T> {
    fn new(pairs: &[(T, f64)]) -> Self {
        Self { values: pairs.iter().map(|p| p.0.clone()).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statefulness {
    Stateless,
    PartiallyStateful,
    Stateful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyMarginals {
    pub state: Row<Statefulness>,
    /// Deploy-time hint in ms; 0 is strict.
    pub deploy_time_ms: Row<u64>,
    pub availability_nines: Row<u8>,
    pub preemptibility_pct: Row<u8>,
    pub delay_tolerance_ms: Row<u64>,
    pub region_independent: Row<bool>,
    pub util: Row<UtilBand>,
}

impl Default for SurveyMarginals {
    fn default() -> Self {
        use Statefulness::*;
        Self {
            state: Row::new(&[(Stateless, 45.5), (PartiallyStateful, 17.4), (Stateful, 37.1)]),
            deploy_time_ms: Row::new(&[(0, 28.5), (60_000, 71.5)]),
            availability_nines: Row::new(&[(5, 2.4), (4, 34.5), (3, 58.0), (2, 3.9), (1, 0.5), (0, 0.4)]),
            preemptibility_pct: Row::new(&[
                (0, 39.3),
                (10, 41.1),
                (30, 4.8),
                (50, 6.5),
                (70, 0.3),
                (90, 1.8),
                (100, 6.1),
            ]),
            delay_tolerance_ms: Row::new(&[(3_600_000, 24.5), (0, 75.5)]),
            // Only the agnostic answer permits migration; "partial" and "not" stay home.
            region_independent: Row::new(&[(true, 47.5), (false, 13.9 + 38.6)]),
            util: Row::new(&[(UtilBand::Low, 3.3), (UtilBand::Mid, 28.0), (UtilBand::High, 68.7)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("survey row {row}: {reason}")]
pub struct SurveyError {
    pub row: &'static str,
    pub reason: String,
}

struct Sampler<T> {
    values: Vec<T>,
    dist: WeightedIndex<f64>,
}

impl<T: Clone> Sampler<T> {
    fn new(name: &'static str, row: &Row<T>) -> Result<Self, SurveyError> {
        if row.values.len() != row.weights.len() {
            return Err(SurveyError { row: name, reason: "values and weights differ in length".into() });
        }
        let dist =
            WeightedIndex::new(&row.weights).map_err(|e| SurveyError { row: name, reason: e.to_string() })?;
        Ok(Self { values: row.values.clone(), dist })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> T {
        self.values[self.dist.sample(rng)].clone()
    }
}

/// Draw `n` workloads of `cores` cores each.
pub fn generate(m: &SurveyMarginals, n: usize, cores: u64, seed: u64) -> Result<Vec<WorkloadProfile>, SurveyError> {
    let state = Sampler::new("state", &m.state)?;
    let deploy = Sampler::new("deploy_time_ms", &m.deploy_time_ms)?;
    let avail = Sampler::new("availability_nines", &m.availability_nines)?;
    let preempt = Sampler::new("preemptibility_pct", &m.preemptibility_pct)?;
    let delay = Sampler::new("delay_tolerance_ms", &m.delay_tolerance_ms)?;
    let region = Sampler::new("region_independent", &m.region_independent)?;
    let util = Sampler::new("util", &m.util)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n.to_string().len();
    Ok((0..n)
        .map(|i| {
            let scalable = state.draw(&mut rng) != Statefulness::Stateful;
            let hints = HintSet {
                scale_up_down: scalable,
                scale_out_in: scalable,
                deploy_time_ms: deploy.draw(&mut rng),
                availability_nines: avail.draw(&mut rng),
                preemptibility_pct: preempt.draw(&mut rng),
                delay_tolerance_ms: delay.draw(&mut rng),
                region_independent: region.draw(&mut rng),
            };
            WorkloadProfile {
                id: format!("w{i:0width$}").into(),
                cores,
                hints,
                util: UtilSpec::Band(util.draw(&mut rng)),
                home_region: None,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_population() {
        let m = SurveyMarginals::default();
        assert_eq!(generate(&m, 200, 8, 3).unwrap(), generate(&m, 200, 8, 3).unwrap());
        assert_ne!(generate(&m, 200, 8, 3).unwrap(), generate(&m, 200, 8, 4).unwrap());
    }

    #[test]
    fn marginals_are_reproduced() {
        let pop = generate(&SurveyMarginals::default(), 20_000, 4, 11).unwrap();
        let share = |f: &dyn Fn(&WorkloadProfile) -> bool| pop.iter().filter(|w| f(w)).count() as f64 / 200.0;
        assert!((share(&|w| w.hints.region_independent) - 47.5).abs() < 1.5);
        assert!((share(&|w| w.hints.availability_nines == 3) - 58.0).abs() < 1.5);
        assert!((share(&|w| w.hints.delay_tolerance_ms > 0) - 24.5).abs() < 1.5);
    }

    #[test]
    fn bad_weights_rejected() {
        let mut m = SurveyMarginals::default();
        m.util.weights = vec![0.0, 0.0, 0.0];
        assert_eq!(generate(&m, 1, 1, 0).unwrap_err().row, "util");
    }
}
