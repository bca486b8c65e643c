//! Bounds on population savings when only part of the joint eligibility
//! distribution is known.
//!
//! Variables are the masses of the 2^k combinations of the listed
//! optimizations. Known marginals, pairwise fractions and heavy combinations
//! become equality rows; the two LPs minimize and maximize expected savings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lp::{LinearProgram, LpOutcome, Sense};
use super::pricing::select_compatible;
use super::savings::{applicable_distribution, BenefitTable, WorkloadProfile};
use crate::hints::{EligibilityThresholds, OptSet};
use crate::optimizers::OptimizationId;
use crate::scalar::Scalar;

pub const MAX_OPTIMIZATIONS: usize = 10;

/// Residual allowed when re-checking a returned joint.
pub const RECHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairConstraint<S> {
    pub a: OptimizationId,
    pub b: OptimizationId,
    /// Fraction eligible for both.
    pub joint: S,
}

/// Mass of workloads eligible for exactly `set` among the listed optimizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMass<S> {
    pub set: OptSet,
    pub mass: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConstraints<S> {
    pub optimizations: Vec<OptimizationId>,
    pub marginals: BTreeMap<OptimizationId, S>,
    pub pairwise: Vec<PairConstraint<S>>,
    pub scenarios: Vec<ScenarioMass<S>>,
    pub benefits: BenefitTable<S>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JointError {
    #[error("{0} optimizations listed; at most {MAX_OPTIMIZATIONS} are supported")]
    TooMany(usize),
    #[error("{0} is listed twice")]
    Duplicate(OptimizationId),
    #[error("{field}: {id} is not among the listed optimizations")]
    NotListed { field: String, id: OptimizationId },
    #[error("{field}: {value} is not a fraction in [0, 1]")]
    OutOfRange { field: String, value: String },
    #[error("constraints are infeasible; conflicting rows: {}", certificate.join(", "))]
    Infeasible { certificate: Vec<String> },
    #[error("solver returned a joint violating constraints by {0}")]
    Numerical(String),
}

/// One end of the interval, with the joint that attains it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extreme<S> {
    /// Expected savings as a fraction of regular cost.
    pub savings: S,
    /// Nonzero masses only.
    pub joint: Vec<ScenarioMass<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate<S> {
    pub min: Extreme<S>,
    pub max: Extreme<S>,
    /// Savings if the listed optimizations were independent; needs every marginal.
    pub independence: Option<S>,
}

impl<S: Scalar> JointEstimate<S> {
    pub fn width(&self) -> S {
        self.max.savings.clone() - self.min.savings.clone()
    }
}

impl<S: Scalar> JointConstraints<S> {
    pub fn new(optimizations: Vec<OptimizationId>) -> Self {
        Self {
            optimizations,
            marginals: BTreeMap::new(),
            pairwise: Vec::new(),
            scenarios: Vec::new(),
            benefits: BenefitTable::standard(),
        }
    }

    pub fn atoms(&self) -> usize {
        1 << self.optimizations.len()
    }

    fn bit(&self, id: OptimizationId) -> Option<usize> {
        self.optimizations.iter().position(|o| *o == id)
    }

    pub fn atom_set(&self, atom: usize) -> OptSet {
        self.optimizations.iter().enumerate().filter(|(i, _)| atom >> i & 1 == 1).map(|(_, id)| *id).collect()
    }

    fn atom_of(&self, set: OptSet) -> usize {
        set.iter().filter_map(|id| self.bit(id)).fold(0, |a, b| a | 1 << b)
    }

    /// Savings fraction of a workload eligible for exactly this atom.
    pub fn atom_savings(&self, atom: usize) -> S {
        self.benefits.combined(select_compatible(self.atom_set(atom)))
    }

    pub fn validate(&self) -> Result<(), JointError> {
        if self.optimizations.len() > MAX_OPTIMIZATIONS {
            return Err(JointError::TooMany(self.optimizations.len()));
        }
        for (i, id) in self.optimizations.iter().enumerate() {
            if self.optimizations[..i].contains(id) {
                return Err(JointError::Duplicate(*id));
            }
        }
        let fraction = |field: String, v: &S| {
            if *v < S::zero() || *v > S::one() {
                Err(JointError::OutOfRange { field, value: v.to_string() })
            } else {
                Ok(())
            }
        };
        let listed = |field: String, id: OptimizationId| {
            if self.bit(id).is_none() {
                Err(JointError::NotListed { field, id })
            } else {
                Ok(())
            }
        };
        for (id, v) in &self.marginals {
            listed(format!("marginals.{id}"), *id)?;
            fraction(format!("marginals.{id}"), v)?;
        }
        for (i, p) in self.pairwise.iter().enumerate() {
            listed(format!("pairwise[{i}].a"), p.a)?;
            listed(format!("pairwise[{i}].b"), p.b)?;
            fraction(format!("pairwise[{i}].joint"), &p.joint)?;
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            for id in s.set.iter() {
                listed(format!("scenarios[{i}].set"), id)?;
            }
            fraction(format!("scenarios[{i}].mass"), &s.mass)?;
        }
        Ok(())
    }

    pub fn program(&self) -> LinearProgram<S> {
        let n = self.atoms();
        let mut lp = LinearProgram::new((0..n).map(|a| self.atom_savings(a)).collect());
        let indicator = |f: &dyn Fn(usize) -> bool| -> Vec<S> {
            (0..n).map(|a| if f(a) { S::one() } else { S::zero() }).collect()
        };
        lp.add_row("normalization", indicator(&|_| true), S::one());
        for (id, p) in &self.marginals {
            let b = self.bit(*id).expect("validated");
            lp.add_row(format!("marginal {id}"), indicator(&|a| a >> b & 1 == 1), p.clone());
        }
        for p in &self.pairwise {
            let (i, j) = (self.bit(p.a).expect("validated"), self.bit(p.b).expect("validated"));
            lp.add_row(
                format!("pairwise {}&{}", p.a, p.b),
                indicator(&|a| a >> i & 1 == 1 && a >> j & 1 == 1),
                p.joint.clone(),
            );
        }
        for s in &self.scenarios {
            let atom = self.atom_of(s.set);
            lp.add_row(format!("scenario {}", s.set), indicator(&|a| a == atom), s.mass.clone());
        }
        lp
    }

    pub fn independence_estimate(&self) -> Option<S> {
        let p: Vec<S> =
            self.optimizations.iter().map(|id| self.marginals.get(id).cloned()).collect::<Option<_>>()?;
        let mut total = S::zero();
        for atom in 0..self.atoms() {
            let mass = p.iter().enumerate().fold(S::one(), |m, (i, pi)| {
                m * if atom >> i & 1 == 1 { pi.clone() } else { S::one() - pi.clone() }
            });
            total = total + mass * self.atom_savings(atom);
        }
        Some(total)
    }

    /// Core-weighted marginals, all pairwise fractions and every combination
    /// heavier than `heavy` observed in a population.
    pub fn from_population(
        population: &[WorkloadProfile],
        thresholds: &EligibilityThresholds,
        heavy: f64,
    ) -> JointConstraints<S> {
        let dist = applicable_distribution(population, thresholds);
        let ids = OptimizationId::TEN.to_vec();
        let mut c = JointConstraints::new(ids.clone());
        let frac = |f: &dyn Fn(OptSet) -> bool| -> S {
            S::from_f64_lossy(dist.iter().filter(|(s, _)| f(**s)).map(|(_, m)| m).sum::<f64>())
        };
        for id in &ids {
            c.marginals.insert(*id, frac(&|s| s.contains(*id)));
        }
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                c.pairwise.push(PairConstraint { a: *a, b: *b, joint: frac(&|s| s.contains(*a) && s.contains(*b)) });
            }
        }
        for (set, mass) in &dist {
            if *mass > heavy {
                c.scenarios.push(ScenarioMass { set: *set, mass: S::from_f64_lossy(*mass) });
            }
        }
        c
    }
}

fn extreme<S: Scalar>(c: &JointConstraints<S>, lp: &LinearProgram<S>, sense: Sense) -> Result<Extreme<S>, JointError> {
    match lp.solve(sense) {
        LpOutcome::Optimal(sol) => {
            let worst = lp.max_violation(&sol.x);
            if worst.to_f64_lossy() > RECHECK_TOLERANCE {
                return Err(JointError::Numerical(worst.to_string()));
            }
            let joint = sol
                .x
                .iter()
                .enumerate()
                .filter(|(_, m)| !m.is_negligible())
                .map(|(a, m)| ScenarioMass { set: c.atom_set(a), mass: m.clone() })
                .collect();
            Ok(Extreme { savings: sol.objective, joint })
        }
        LpOutcome::Infeasible { certificate } => Err(JointError::Infeasible { certificate }),
        // Masses live on the simplex, so this would be a solver bug.
        LpOutcome::Unbounded => Err(JointError::Numerical(format!("{sense} reported unbounded"))),
    }
}

pub fn estimate_joint<S: Scalar>(c: &JointConstraints<S>) -> Result<JointEstimate<S>, JointError> {
    c.validate()?;
    let lp = c.program();
    let min = extreme(c, &lp, Sense::Minimize)?;
    let max = extreme(c, &lp, Sense::Maximize)?;
    Ok(JointEstimate { min, max, independence: c.independence_estimate() })
}

#[cfg(test)]
mod tests {
    use num::rational::BigRational;

    use super::*;
    use crate::scalar::rational_from_decimal;
    use OptimizationId::*;

    fn q(s: &str) -> BigRational {
        rational_from_decimal(s).unwrap()
    }

    #[test]
    fn fully_determined_pair() {
        let mut c = JointConstraints::new(vec![SpotVms, Madc]);
        c.marginals.insert(SpotVms, q("0.5"));
        c.marginals.insert(Madc, q("0.5"));
        c.pairwise.push(PairConstraint { a: SpotVms, b: Madc, joint: q("0.25") });
        let e = estimate_joint(&c).unwrap();
        assert_eq!(e.width(), q("0"));
        assert_eq!(e.independence.unwrap(), e.min.savings);
        // 0.25 * 0.85 + 0.25 * 0.40 + 0.25 * (1 - 0.15 * 0.60)
        assert_eq!(e.min.savings, q("0.25") * (q("0.85") + q("0.40") + q("0.91")));
    }

    #[test]
    fn contradictory_pair() {
        let mut c = JointConstraints::new(vec![SpotVms, Madc]);
        c.marginals.insert(SpotVms, 0.3);
        c.pairwise.push(PairConstraint { a: SpotVms, b: Madc, joint: 0.4 });
        let JointError::Infeasible { certificate } = estimate_joint(&c).unwrap_err() else { panic!() };
        assert!(certificate.iter().any(|l| l.starts_with("marginal")));
        assert!(certificate.iter().any(|l| l.starts_with("pairwise")));
    }

    #[test]
    fn unlisted_marginal_rejected() {
        let mut c = JointConstraints::new(vec![SpotVms]);
        c.marginals.insert(Madc, 0.3);
        assert!(matches!(estimate_joint(&c), Err(JointError::NotListed { .. })));
    }

    #[test]
    fn group_members_do_not_stack() {
        let c: JointConstraints<f64> = JointConstraints::new(vec![SpotVms, HarvestVms]);
        assert!((c.atom_savings(0b11) - 0.91).abs() < 1e-12);
    }
}
