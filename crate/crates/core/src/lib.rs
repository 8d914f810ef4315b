//! Monte Carlo lab for the mean-field exchange models SRM, SEM and GAM and
//! their cutoff phenomenon.
//!
//! * [`laws`]: redistribution laws, size-biased sampling, entropic constants.
//! * [`dynamics`]: the three exchange models and their exchange matrices.
//! * [`piles`]: the fragment-level pile refinement.
//! * [`oracle`]: cutoff schedule, limit profiles and the pile-size oracle.
//! * [`equilibrium`]: contraction rates, one-step identities, stationary samplers.
//! * [`observables`]: coupling distances and pile statistics.
//! * [`harness`]: experiment configuration, dispatch and CSV/JSON output.

pub mod dynamics;
pub mod equilibrium;
pub mod harness;
pub mod laws;
pub mod observables;
pub mod oracle;
pub mod piles;
pub mod rng;
pub mod special;
pub mod stats;

pub use dynamics::{Configuration, ExchangeEvent, ModelKind};
pub use laws::{EntropicConstants, Law, RedistributionLaw};
pub use rng::{seed_stream, RandomStream};
