//! Workload hints between cloud tenants and the platform.
//!
//! Tenants describe their VMs with a small set of characteristics; the platform
//! answers with notifications. A broker carries both directions, node agents sit
//! between VMs and the broker, and ten cost optimizations consume the hints.
//! Conflicting claims on the same resource go through an arbiter.
//!
//! Numeric code is generic over [`scalar::Scalar`]. The aliases below fix the
//! two instantiations used in practice.

pub mod accounting;
pub mod agent;
pub mod arbiter;
pub mod broker;
pub mod hints;
pub mod ids;
pub mod optimizers;
pub mod scalar;
pub mod sim;

pub use num::rational::BigRational;
pub use scalar::Scalar;

pub type PriceBook64 = accounting::PriceBook<f64>;
pub type ExactPriceBook = accounting::PriceBook<BigRational>;
pub type UsageRecord64 = accounting::UsageRecord<f64>;
pub type ExactUsageRecord = accounting::UsageRecord<BigRational>;
pub type BenefitTable64 = accounting::BenefitTable<f64>;
pub type SavingsReport64 = accounting::SavingsReport<f64>;
pub type ExactSavingsReport = accounting::SavingsReport<BigRational>;
pub type LinearProgram64 = accounting::LinearProgram<f64>;
pub type ExactLinearProgram = accounting::LinearProgram<BigRational>;
pub type JointConstraints64 = accounting::JointConstraints<f64>;
pub type ExactJointConstraints = accounting::JointConstraints<BigRational>;
pub type JointEstimate64 = accounting::JointEstimate<f64>;
