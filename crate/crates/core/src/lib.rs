//! Sparse Tsetlin Machine toolchain and an emulator of a runtime-tunable
//! TM inference accelerator.
//!
//! The pipeline runs dense model ([`model`]) → training ([`trainer`]) →
//! 16-bit Include instruction compression ([`compress`]) → header-framed
//! word streams ([`protocol`]) → single-core emulation ([`emu`]) →
//! class-partitioned multi-core emulation with live reprogramming
//! ([`system`]). [`recal`] drives the drift/recalibration loop and
//! [`formats`] holds the on-disk file formats.

pub mod compress;
pub mod emu;
pub mod formats;
pub mod model;
pub mod protocol;
pub mod recal;
pub mod system;
pub mod trainer;

pub use compress::{CompressionReport, IncludeInstruction, InstructionStream};
pub use emu::{Core, CoreConfig, RunReport};
pub use model::{Architecture, BoolVector, ClassSums, TmModel};
pub use protocol::{Header, HeaderWidth};
pub use system::{System, SystemConfig};
pub use trainer::{TrainConfig, Trainer};
