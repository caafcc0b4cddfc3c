//! White-box individual-fairness testing for dense feed-forward networks.
//!
//! The crate measures how strongly each hidden layer reacts to changes of
//! sensitive attributes, picks out the neurons responsible, and uses them
//! to steer a gradient search for individual discriminatory instances:
//! inputs whose prediction changes when only sensitive attributes change.
//!
//! Modules:
//! - [`nn`]: dense networks, activation traces, input gradients, training.
//! - [`data`]: attribute schemas, CSV ingestion, clipping, flip variants,
//!   k-means seeding.
//! - [`interpret`]: activation differences, AS curves, biased neurons.
//! - [`generate`]: dynamic loss and the global and local searches.
//! - [`metrics`]: GSR, diversity, DM-RS, retraining, rank statistics.
//! - [`generalize`]: the same search on `[0, 1]^d` inputs with an attribute
//!   classifier head and FGSM flips.
//! - [`synthetic`]: seeded demo tasks with planted bias.

pub mod data;
pub mod generalize;
pub mod generate;
pub mod interpret;
pub mod metrics;
pub mod nn;
pub mod synthetic;

pub use data::{AttributeSchema, Instance, InstancePair, TabularDataset};
pub use generate::{GenerationConfig, GenerationRun, IdiSet};
pub use interpret::BiasProfile;
pub use nn::{Network, TrainConfig};
