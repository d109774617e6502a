//! Webpage fingerprinting of encrypted browsing traffic under a finite query
//! budget.
//!
//! The crate is organised the way the attack flows:
//!
//! * [`site`] models the target website (page graph, resources, download
//!   sequences) and builds it from a local corpus or a synthetic spec.
//! * [`sim`] deterministically encodes browsing sessions into encrypted
//!   record-size traces under a [`sim::BrowsingContext`].
//! * [`profiler`] spends the query budget on isolated page accesses and turns
//!   the labelled samples into a [`profiler::SnoopyDatabase`].
//! * [`predictor`] resolves every sub-trace of a blind trace to a resource and
//!   extracts the visited pages.
//! * [`eval`] scores predictions and runs experiment grids, the feature
//!   stability study and the classifier ensemble.
//! * [`persist`] holds the versioned document formats and [`api`] the wire
//!   types shared by the service and the command line.

pub mod api;
pub mod eval;
pub mod persist;
pub mod predictor;
pub mod profiler;
pub mod sim;
pub mod site;

mod seed;

pub use seed::derive_seed;
