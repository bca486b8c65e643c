//! Prices, owner savings, carbon, and bounds on savings from partial joint data.

pub mod carbon;
pub mod joint;
pub mod lp;
pub mod pricing;
pub mod savings;
pub mod survey;

pub use carbon::{carbon_report, migration_reduction_pct, CarbonConfig, CarbonError, CarbonReport};
pub use joint::{estimate_joint, Extreme, JointConstraints, JointError, JointEstimate, PairConstraint, ScenarioMass};
pub use lp::{Constraint, LinearProgram, LpOutcome, LpSolution, Sense};
pub use pricing::{
    check_compatible, owner_benefit, select_compatible, vm_price, IncompatibleSet, PriceBook, UsageRecord,
};
pub use savings::{
    applicable_distribution, savings_breakdown, BenefitTable, Contribution, SavingsReport, UtilSpec, WorkloadProfile,
};
pub use survey::{generate, SurveyMarginals};
