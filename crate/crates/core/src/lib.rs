pub mod baselines;
pub mod channel;
pub mod chirp;
pub mod dfrft;
pub mod error;
pub mod harness;
pub mod signal;
pub mod sync;

pub use chirp::{ReferenceKind, TrainingSequence};
pub use error::{Error, Result};
pub use signal::ComplexSignal;
pub use sync::{ChirpDetection, SyncEstimate};
