//! Emulation of one base inference core, plus timing and energy reporting.

mod core;

pub use self::core::{feature_beats, Core, FeedStatus, Phase};

use thiserror::Error;

use crate::protocol::{HeaderWidth, ProtocolError};

/// Pipeline depth of the instruction execution cycle (fetch, decode,
/// clause update, class-sum update). A pipelined stream of `n` instructions
/// retires in `n + PIPELINE_DEPTH - 1` cycles.
pub const PIPELINE_DEPTH: u64 = 4;

/// Default core clock, 200 MHz.
pub const DEFAULT_CLOCK_HZ: f64 = 200e6;

/// Default average power: 2.610 uJ spent over a 7.44 us batch.
pub const DEFAULT_POWER_WATTS: f64 = 2.610e-6 / 7.44e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmuError {
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("{what} needs {requested} words, memory depth is {depth}")]
    Capacity {
        what: &'static str,
        requested: usize,
        depth: usize,
    },
    #[error("invalid core state: {0}")]
    State(String),
    #[error("instruction {index} selects feature {offset}, batch has {features}")]
    Fault {
        index: usize,
        offset: u16,
        features: usize,
    },
    #[error("malformed model at instruction {index}: {reason}")]
    MalformedModel { index: usize, reason: String },
    #[error("output FIFO overflow; drain classifications between batches")]
    FifoOverflow,
    #[error("invalid core configuration: {0}")]
    Config(String),
}

/// Build-time parameters of one core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoreConfig {
    /// Instruction memory depth in 16-bit words.
    pub instr_mem_depth: usize,
    /// Feature memory depth in 32-lane words, i.e. the largest `F`.
    pub feature_mem_depth: usize,
    pub header_width: HeaderWidth,
    pub clock_hz: f64,
    pub power_watts: f64,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self {
            instr_mem_depth: 32_768,
            feature_mem_depth: 4_096,
            header_width: HeaderWidth::W32,
            clock_hz: DEFAULT_CLOCK_HZ,
            power_watts: DEFAULT_POWER_WATTS,
        }
    }
}

impl CoreConfig {
    pub fn validate(&self) -> Result<(), EmuError> {
        if self.instr_mem_depth == 0 || self.feature_mem_depth == 0 {
            return Err(EmuError::Config("memory depths must be >= 1".into()));
        }
        if !(self.clock_hz > 0.0) {
            return Err(EmuError::Config(format!("clock must be > 0, got {}", self.clock_hz)));
        }
        if !(self.power_watts >= 0.0) {
            return Err(EmuError::Config(format!(
                "power must be >= 0, got {}",
                self.power_watts
            )));
        }
        Ok(())
    }
}

/// Closed-form cycle count: one cycle per loaded word, then per batch the
/// pipelined instruction stream, an `M`-cycle argmax scan and one FIFO push.
pub fn cycle_model(n_instr: u64, num_classes: u64, load_words: u64, batches: u64) -> u64 {
    load_words + batches * (n_instr + (PIPELINE_DEPTH - 1) + num_classes + 1)
}

/// Outcome of one inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub classifications: Vec<usize>,
    pub datapoints: usize,
    pub cycles: u64,
    pub latency_s: f64,
    pub energy_j: f64,
    pub throughput_inf_per_s: f64,
}

impl RunReport {
    pub fn new(classifications: Vec<usize>, cycles: u64, clock_hz: f64, power_watts: f64) -> Self {
        let datapoints = classifications.len();
        let latency_s = cycles as f64 / clock_hz;
        let throughput_inf_per_s = if latency_s > 0.0 {
            datapoints as f64 / latency_s
        } else {
            0.0
        };
        Self {
            classifications,
            datapoints,
            cycles,
            latency_s,
            energy_j: power_watts * latency_s,
            throughput_inf_per_s,
        }
    }

    pub const CSV_HEADER: &'static str = "run_id,datapoints,cycles,latency_us,energy_uj,throughput";

    pub fn csv_row(&self, run_id: usize) -> String {
        format!(
            "{run_id},{},{},{:.6},{:.6},{:.3}",
            self.datapoints,
            self.cycles,
            self.latency_s * 1e6,
            self.energy_j * 1e6,
            self.throughput_inf_per_s
        )
    }
}
