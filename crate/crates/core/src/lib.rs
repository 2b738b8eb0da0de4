//! Exact privacy analysis and mechanism design for finite local randomizers
//! in the shuffle model.
//!
//! * [`channel`]: validated row-stochastic channels, pairwise chi-square
//!   budgets and likelihood-ratio laws.
//! * [`mechanisms`]: GRR, half-block, mixtures, subset selection and orbit
//!   templates.
//! * [`privacy`]: exact and bounded privacy curves.
//! * [`estimation`]: Fisher information and lower bounds on estimation risk.
//! * [`frontier`]: the budget-constrained design frontier.
//! * [`sim`]: seeded Monte Carlo validation.

// `!(x > 0.0)` guards deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod estimation;
pub mod frontier;
pub mod mechanisms;
pub mod numeric;
pub mod privacy;
pub mod sim;

pub use channel::{Channel, ChannelParseError, Histogram, LrAtom, LrLaw};
pub use error::{Error, Result};
pub use mechanisms::{MechanismSpec, MixtureBlock, MixtureSpec, OrbitTemplate};
pub use privacy::{CurvePoint, PrivacyCurve, Provenance};
pub use sim::{Composition, EstimatorSpec, Estimator, SamplingMode, SimResult};
