//! Multi-core composition and runtime reprogramming.
//!
//! A model's classes are split into contiguous ranges, one per core. Every
//! core receives the same feature stream; per-lane class sums from all cores
//! are concatenated in partition order and a single argmax picks the class.
//! Merging sums (not per-core winners) keeps the result identical to a
//! single core running the whole model.

use std::ops::Range;

use rayon::prelude::*;
use thiserror::Error;

use crate::compress::{decode, CodecError, InstructionStream};
use crate::emu::{Core, CoreConfig, EmuError, FeedStatus, RunReport};
use crate::model::{argmax_lowest, Architecture, BoolVector, MAX_FEATURES};
use crate::protocol::{parse_packets, HeaderKind, Payload, ProtocolError, StreamPacket, BATCH_LANES};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SystemError {
    #[error("invalid system configuration: {0}")]
    Config(String),
    #[error("invalid system state: {0}")]
    State(String),
    #[error("model stream rejected: {0}")]
    Rejected(String),
    #[error("core {core}: {source}")]
    Core { core: usize, source: EmuError },
    #[error(transparent)]
    Emu(#[from] EmuError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// How classes are assigned to cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Partition {
    /// Contiguous ranges whose sizes differ by at most one, recomputed for
    /// every model. Cores beyond the class count stay idle.
    Balanced,
    /// Fixed contiguous, non-empty ranges covering `0..M` in order.
    Explicit(Vec<Range<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_cores: usize,
    pub core: CoreConfig,
    pub partition: Partition,
}

impl SystemConfig {
    pub fn balanced(num_cores: usize, core: CoreConfig) -> Self {
        Self {
            num_cores,
            core,
            partition: Partition::Balanced,
        }
    }

    /// Per-core class ranges for a model with `num_classes` classes.
    pub fn ranges_for(&self, num_classes: usize) -> Result<Vec<Range<usize>>, SystemError> {
        if self.num_cores == 0 {
            return Err(SystemError::Config("at least one core is required".into()));
        }
        match &self.partition {
            Partition::Balanced => Ok(balanced_ranges(num_classes, self.num_cores)),
            Partition::Explicit(ranges) => {
                if ranges.len() != self.num_cores {
                    return Err(SystemError::Config(format!(
                        "{} ranges for {} cores",
                        ranges.len(),
                        self.num_cores
                    )));
                }
                validate_partition(ranges, num_classes)?;
                Ok(ranges.clone())
            }
        }
    }
}

pub fn balanced_ranges(num_classes: usize, num_cores: usize) -> Vec<Range<usize>> {
    let base = num_classes / num_cores;
    let extra = num_classes % num_cores;
    let mut start = 0;
    (0..num_cores)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Checks that `ranges` tile `0..num_classes` contiguously with no gaps,
/// overlaps or empty ranges.
pub fn validate_partition(ranges: &[Range<usize>], num_classes: usize) -> Result<(), SystemError> {
    let mut expected = 0;
    for (core, r) in ranges.iter().enumerate() {
        if r.start != expected || r.end <= r.start {
            return Err(SystemError::Config(format!(
                "core {core} range {r:?} breaks the contiguous cover of 0..{num_classes}"
            )));
        }
        expected = r.end;
    }
    if expected != num_classes {
        return Err(SystemError::Config(format!(
            "partition covers 0..{expected}, model has {num_classes} classes"
        )));
    }
    Ok(())
}

/// Splits a stream by class range. Each sub-stream has its toggle bits
/// re-based so that its first instruction has `cc = 0` and `e = 0`.
/// Empty ranges yield `None`.
pub fn split_instructions(
    stream: &InstructionStream,
    ranges: &[Range<usize>],
) -> Result<Vec<Option<InstructionStream>>, SystemError> {
    let m = stream.arch.num_classes;
    let mut class_of = Vec::with_capacity(stream.words.len());
    let mut class = 0usize;
    let mut prev_e = None;
    for inst in stream.instructions() {
        if let Some(e) = prev_e {
            if e != inst.class_toggle {
                class += 1;
            }
        }
        prev_e = Some(inst.class_toggle);
        class_of.push(class);
    }
    if class + 1 != m && !stream.words.is_empty() {
        return Err(SystemError::Config(format!(
            "stream holds {} classes, architecture declares {m}",
            class + 1
        )));
    }
    let mut out = Vec::with_capacity(ranges.len());
    for r in ranges {
        if r.end > m {
            return Err(SystemError::Config(format!("range {r:?} exceeds {m} classes")));
        }
        if r.is_empty() {
            out.push(None);
            continue;
        }
        let words: Vec<u16> = stream
            .words
            .iter()
            .zip(&class_of)
            .filter(|(_, c)| r.contains(c))
            .map(|(&w, _)| w)
            .collect();
        // XOR with the first word's toggle bits re-bases both sequences
        let rebase = words.first().map_or(0, |w| w & 0x6000);
        let words = words.into_iter().map(|w| w ^ rebase).collect();
        let arch = Architecture {
            num_classes: r.len(),
            ..stream.arch
        };
        out.push(Some(InstructionStream::new(arch, words)));
    }
    Ok(out)
}

/// Reprogramming bookkeeping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RetuneSession {
    /// Content hash of the active instruction stream.
    pub active_model_id: Option<u64>,
    /// Successful programming operations so far.
    pub generation: u64,
    /// Model stream waiting for the next run boundary.
    pub pending_stream: Option<Vec<u64>>,
}

/// Result of one system run.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRun {
    pub report: RunReport,
    /// Cycles of each core; idle cores report 0.
    pub core_cycles: Vec<u64>,
    /// Generation of the model that produced every classification.
    pub generation: u64,
}

impl SystemRun {
    pub fn csv_header(num_cores: usize) -> String {
        let mut h = RunReport::CSV_HEADER.to_string();
        for i in 0..num_cores {
            h.push_str(&format!(",core{i}_cycles"));
        }
        h
    }

    pub fn csv_row(&self, run_id: usize) -> String {
        let mut row = self.report.csv_row(run_id);
        for c in &self.core_cycles {
            row.push_str(&format!(",{c}"));
        }
        row
    }
}

/// A set of cores sharing one feature stream.
#[derive(Debug)]
pub struct System {
    config: SystemConfig,
    cores: Vec<Core>,
    ranges: Vec<Range<usize>>,
    num_classes: usize,
    session: RetuneSession,
}

impl System {
    pub fn new(config: SystemConfig) -> Result<Self, SystemError> {
        if config.num_cores == 0 {
            return Err(SystemError::Config("at least one core is required".into()));
        }
        let cores = (0..config.num_cores)
            .map(|_| Core::new(config.core))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            config,
            cores,
            ranges: Vec::new(),
            num_classes: 0,
            session: RetuneSession::default(),
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn session(&self) -> &RetuneSession {
        &self.session
    }

    pub fn generation(&self) -> u64 {
        self.session.generation
    }

    /// Class range of each core for the active model.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Programs the system from the beats of one instruction packet. The
    /// stream is fully validated before any core is touched; on rejection
    /// the previous model stays active and the generation is unchanged.
    pub fn reprogram(&mut self, beats: &[u64]) -> Result<u64, SystemError> {
        let stream = self.validate_model_beats(beats)?;
        let ranges = self.config.ranges_for(stream.arch.num_classes)?;
        let parts = split_instructions(&stream, &ranges)?;
        for (i, part) in parts.iter().enumerate() {
            if let Some(p) = part {
                if p.words.len() > self.config.core.instr_mem_depth {
                    return Err(SystemError::Rejected(format!(
                        "core {i} needs {} instruction words, depth is {}",
                        p.words.len(),
                        self.config.core.instr_mem_depth
                    )));
                }
            }
        }
        for (i, (core, part)) in self.cores.iter_mut().zip(&parts).enumerate() {
            core.reset();
            if let Some(p) = part {
                core.program(p)
                    .map_err(|source| SystemError::Core { core: i, source })?;
            }
        }
        self.ranges = ranges;
        self.num_classes = stream.arch.num_classes;
        self.session.generation += 1;
        self.session.active_model_id = Some(fnv1a(&stream.words));
        Ok(self.session.generation)
    }

    /// Convenience wrapper serializing `stream` at the configured width.
    pub fn program(&mut self, stream: &InstructionStream) -> Result<u64, SystemError> {
        let beats = StreamPacket::instructions(stream)?.to_beats(self.config.core.header_width)?;
        self.reprogram(&beats)
    }

    /// Queues a model stream to be applied at the start of the next run.
    pub fn queue_reprogram(&mut self, beats: Vec<u64>) {
        self.session.pending_stream = Some(beats);
    }

    fn validate_model_beats(&self, beats: &[u64]) -> Result<InstructionStream, SystemError> {
        let reject = |e: &dyn std::fmt::Display| SystemError::Rejected(e.to_string());
        let packets = parse_packets(beats, self.config.core.header_width).map_err(|e| reject(&e))?;
        let [packet] = packets.as_slice() else {
            return Err(SystemError::Rejected(format!(
                "expected one instruction packet, found {}",
                packets.len()
            )));
        };
        let (HeaderKind::Instruction {
            num_classes,
            num_clauses,
            ..
        }, Payload::Instructions(words)) = (packet.header.kind, &packet.payload)
        else {
            return Err(SystemError::Rejected("packet is not an instruction packet".into()));
        };
        // F is only known once features arrive; validate structure against the widest batch
        let max_f = self.config.core.feature_mem_depth.min(MAX_FEATURES);
        let arch = Architecture::new(num_classes as usize, num_clauses as usize, max_f)
            .map_err(|e| reject(&e))?;
        let stream = InstructionStream::new(arch, words.clone());
        decode(&stream).map_err(|e| reject(&e))?;
        Ok(stream)
    }

    /// Broadcasts `points` to every active core and merges the class sums.
    pub fn run(&mut self, points: &[BoolVector]) -> Result<SystemRun, SystemError> {
        if let Some(pending) = self.session.pending_stream.take() {
            self.reprogram(&pending)?;
        }
        if self.session.generation == 0 {
            return Err(SystemError::State("system has not been programmed".into()));
        }
        let active: Vec<usize> = (0..self.cores.len())
            .filter(|&i| !self.ranges[i].is_empty())
            .collect();
        if let Some(&i) = active.iter().find(|&&i| !self.cores[i].model_loaded()) {
            return Err(SystemError::State(format!("core {i} is not programmed")));
        }
        let beats = crate::emu::feature_beats(points, self.config.core.header_width)?;

        let ranges = &self.ranges;
        let outcomes: Vec<Result<CoreOutcome, SystemError>> = self
            .cores
            .par_iter_mut()
            .enumerate()
            .map(|(i, core)| {
                if ranges[i].is_empty() {
                    return Ok((Vec::new(), 0));
                }
                let mut per_batch = Vec::new();
                for &b in &beats {
                    let status = core
                        .feed(b)
                        .map_err(|source| SystemError::Core { core: i, source })?;
                    if let FeedStatus::BatchComplete { .. } = status {
                        core.drain_fifo();
                        per_batch.push(core.class_sums().to_vec());
                    }
                }
                Ok((per_batch, core.cycles()))
            })
            .collect();
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;

        let batches = points.len().div_ceil(BATCH_LANES);
        let mut classifications = Vec::with_capacity(batches * BATCH_LANES);
        let mut global = vec![0i32; self.num_classes];
        for batch in 0..batches {
            for lane in 0..BATCH_LANES {
                for (i, (per_batch, _)) in outcomes.iter().enumerate() {
                    for (k, sums) in per_batch.get(batch).into_iter().flatten().enumerate() {
                        global[self.ranges[i].start + k] = sums[lane];
                    }
                }
                classifications.push(argmax_lowest(&global));
            }
        }
        classifications.truncate(points.len());

        let core_cycles: Vec<u64> = outcomes.iter().map(|(_, c)| *c).collect();
        // M-cycle scan of the concatenated sums; a lone core's own argmax is final
        let merge = if active.len() > 1 {
            batches as u64 * self.num_classes as u64
        } else {
            0
        };
        let cycles = core_cycles.iter().copied().max().unwrap_or(0) + merge;
        Ok(SystemRun {
            report: RunReport::new(
                classifications,
                cycles,
                self.config.core.clock_hz,
                self.config.core.power_watts,
            ),
            core_cycles,
            generation: self.session.generation,
        })
    }
}

/// Per-batch lane sums of one core and its cycle count.
type CoreOutcome = (Vec<Vec<[i32; BATCH_LANES]>>, u64);

fn fnv1a(words: &[u16]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
