use std::collections::VecDeque;

use super::{CoreConfig, EmuError, RunReport, PIPELINE_DEPTH};
use crate::compress::{IncludeInstruction, InstructionStream};
use crate::model::{next_slot_with_parity, BoolVector};
use crate::protocol::{
    batch_datapoints, packetize_features, Header, HeaderKind, ParseEvent, StreamPacket,
    StreamParser, BATCH_LANES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    LoadingInstr,
    LoadingFeat,
    Executing,
}

/// Result of feeding one beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedStatus {
    /// Beat absorbed, nothing completed.
    Accepted,
    Header(Header),
    /// Last instruction of the model was written.
    ModelLoaded,
    /// A batch executed; its classifications are in the output FIFO.
    BatchComplete { batch: usize },
}

#[derive(Debug, Clone, Copy)]
struct LoadedArch {
    num_classes: usize,
    num_clauses: usize,
    num_instructions: usize,
}

#[derive(Debug, Clone, Copy)]
struct FeatureRun {
    words_per_batch: usize,
    batch_count: usize,
}

/// One base inference core, driven one bus beat at a time.
#[derive(Debug)]
pub struct Core {
    config: CoreConfig,
    parser: StreamParser,
    instr_mem: Vec<u16>,
    feature_mem: Vec<u32>,
    arch: Option<LoadedArch>,
    model_ready: bool,
    features: Option<FeatureRun>,
    clause_reg: u32,
    lane_sums: [i32; BATCH_LANES],
    stored_sums: Vec<[i32; BATCH_LANES]>,
    out_fifo: VecDeque<usize>,
    cycles: u64,
    phase: Phase,
    trace: Option<Vec<Phase>>,
}

impl Core {
    pub fn new(config: CoreConfig) -> Result<Self, EmuError> {
        config.validate()?;
        Ok(Self {
            parser: StreamParser::new(config.header_width),
            instr_mem: vec![0; config.instr_mem_depth],
            feature_mem: vec![0; config.feature_mem_depth],
            arch: None,
            model_ready: false,
            features: None,
            clause_reg: u32::MAX,
            lane_sums: [0; BATCH_LANES],
            stored_sums: Vec::new(),
            out_fifo: VecDeque::with_capacity(BATCH_LANES),
            cycles: 0,
            phase: Phase::Idle,
            trace: None,
            config,
        })
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Cycles since the last reset.
    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    pub fn model_loaded(&self) -> bool {
        self.model_ready
    }

    /// `(classes, clauses, instructions)` from the last instruction header.
    pub fn loaded_arch(&self) -> Option<(usize, usize, usize)> {
        self.arch
            .map(|a| (a.num_classes, a.num_clauses, a.num_instructions))
    }

    pub fn fifo_len(&self) -> usize {
        self.out_fifo.len()
    }

    /// Per-class, per-lane sums of the last executed batch.
    pub fn class_sums(&self) -> &[[i32; BATCH_LANES]] {
        &self.stored_sums
    }

    pub fn pop_classification(&mut self) -> Option<usize> {
        self.out_fifo.pop_front()
    }

    pub fn drain_fifo(&mut self) -> Vec<usize> {
        self.out_fifo.drain(..).collect()
    }

    /// Records every phase transition until disabled.
    pub fn set_tracing(&mut self, on: bool) {
        self.trace = on.then(|| vec![self.phase]);
    }

    pub fn phase_trace(&self) -> &[Phase] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn set_phase(&mut self, phase: Phase) {
        if self.phase != phase {
            self.phase = phase;
            if let Some(t) = self.trace.as_mut() {
                t.push(phase);
            }
        }
    }

    /// Clears control state: FIFO, accumulators, cycle counter and parser.
    /// Memory contents and the latched model survive.
    pub fn reset(&mut self) {
        self.parser.reset();
        self.reset_control();
    }

    fn reset_control(&mut self) {
        self.out_fifo.clear();
        self.clause_reg = u32::MAX;
        self.lane_sums = [0; BATCH_LANES];
        self.stored_sums.clear();
        self.features = None;
        self.cycles = 0;
        self.set_phase(Phase::Idle);
    }

    fn abort_load(&mut self) {
        if self.phase == Phase::LoadingInstr {
            self.model_ready = false;
            self.arch = None;
        }
        self.parser.reset();
        self.features = None;
        self.set_phase(Phase::Idle);
    }

    /// Consumes one bus beat; each beat costs one cycle.
    pub fn feed(&mut self, beat: u64) -> Result<FeedStatus, EmuError> {
        self.cycles += 1;
        let event = match self.parser.push(beat) {
            Ok(e) => e,
            Err(e) => {
                self.abort_load();
                return Err(e.into());
            }
        };
        let result = match event {
            ParseEvent::Pending => Ok(FeedStatus::Accepted),
            ParseEvent::Header(h) => self.on_header(h),
            ParseEvent::Instruction { index, word } => {
                self.instr_mem[index] = word;
                if self.parser.at_boundary() {
                    self.model_ready = true;
                    self.set_phase(Phase::Idle);
                    Ok(FeedStatus::ModelLoaded)
                } else {
                    Ok(FeedStatus::Accepted)
                }
            }
            ParseEvent::Feature { batch, index, word } => self.on_feature(batch, index, word),
        };
        if result.is_err() {
            self.abort_load();
        }
        result
    }

    fn on_feature(&mut self, batch: usize, index: usize, word: u32) -> Result<FeedStatus, EmuError> {
        self.feature_mem[index] = word;
        let run = self.features.expect("feature header latched");
        if index + 1 < run.words_per_batch {
            return Ok(FeedStatus::Accepted);
        }
        self.set_phase(Phase::Executing);
        self.execute_batch()?;
        self.set_phase(if batch + 1 == run.batch_count {
            Phase::Idle
        } else {
            Phase::LoadingFeat
        });
        Ok(FeedStatus::BatchComplete { batch })
    }

    fn on_header(&mut self, h: Header) -> Result<FeedStatus, EmuError> {
        let header_beats = Header::beats(self.config.header_width, h.is_feature()) as u64;
        // the parser only accepts headers with NEW set
        self.reset_control();
        self.cycles = header_beats;
        match h.kind {
            HeaderKind::Instruction {
                num_classes,
                num_clauses,
                num_instructions,
            } => {
                self.model_ready = false;
                self.arch = None;
                let n = num_instructions as usize;
                if n > self.config.instr_mem_depth {
                    return Err(EmuError::Capacity {
                        what: "instruction payload",
                        requested: n,
                        depth: self.config.instr_mem_depth,
                    });
                }
                if num_classes == 0 || num_clauses < 2 || num_clauses % 2 != 0 {
                    return Err(EmuError::MalformedModel {
                        index: 0,
                        reason: format!(
                            "header declares {num_classes} classes of {num_clauses} clauses"
                        ),
                    });
                }
                self.arch = Some(LoadedArch {
                    num_classes: num_classes as usize,
                    num_clauses: num_clauses as usize,
                    num_instructions: n,
                });
                if n == 0 {
                    self.model_ready = true;
                } else {
                    self.set_phase(Phase::LoadingInstr);
                }
            }
            HeaderKind::Feature {
                words_per_batch,
                batch_count,
            } => {
                if !self.model_ready {
                    return Err(EmuError::State("feature stream before a model was loaded".into()));
                }
                let f = words_per_batch as usize;
                if f > self.config.feature_mem_depth {
                    return Err(EmuError::Capacity {
                        what: "feature batch",
                        requested: f,
                        depth: self.config.feature_mem_depth,
                    });
                }
                if f == 0 {
                    return Err(EmuError::State("feature header declares zero words per batch".into()));
                }
                self.features = Some(FeatureRun {
                    words_per_batch: f,
                    batch_count: batch_count as usize,
                });
                if batch_count > 0 {
                    self.set_phase(Phase::LoadingFeat);
                }
            }
        }
        Ok(FeedStatus::Header(h))
    }

    /// Runs the loaded instructions over the batch resident in feature
    /// memory and pushes 32 lane classifications into the output FIFO.
    pub fn execute_batch(&mut self) -> Result<[usize; BATCH_LANES], EmuError> {
        let arch = match (self.model_ready, self.arch) {
            (true, Some(a)) => a,
            _ => return Err(EmuError::State("no model loaded".into())),
        };
        let f = self
            .features
            .ok_or_else(|| EmuError::State("no feature batch resident".into()))?
            .words_per_batch;
        // the FIFO holds exactly one batch of results
        if !self.out_fifo.is_empty() {
            return Err(EmuError::FifoOverflow);
        }
        let n = arch.num_instructions;
        let malformed = |index: usize, reason: &str| EmuError::MalformedModel {
            index,
            reason: reason.to_string(),
        };

        self.cycles += PIPELINE_DEPTH - 1;
        self.stored_sums.clear();
        self.stored_sums.resize(arch.num_classes, [0; BATCH_LANES]);
        self.lane_sums = [0; BATCH_LANES];
        self.clause_reg = u32::MAX;
        let mut class = 0usize;
        let mut slot = 0usize;
        let mut prev: Option<IncludeInstruction> = None;

        for index in 0..n {
            self.cycles += 1;
            let inst = IncludeInstruction::unpack(self.instr_mem[index]);
            let parity = usize::from(!inst.positive);
            match prev {
                None => slot = next_slot_with_parity(None, parity),
                Some(p) => {
                    let cc_flip = inst.clause_toggle != p.clause_toggle;
                    let e_flip = inst.class_toggle != p.class_toggle;
                    if cc_flip && e_flip {
                        return Err(malformed(index, "cc and e toggled together"));
                    }
                    if cc_flip || e_flip {
                        self.commit_clause(p.positive);
                    } else if inst.positive != p.positive {
                        return Err(malformed(index, "polarity changed inside a clause"));
                    }
                    if e_flip {
                        self.stored_sums[class] = self.lane_sums;
                        self.lane_sums = [0; BATCH_LANES];
                        class += 1;
                        if class >= arch.num_classes {
                            return Err(malformed(index, "more classes than declared"));
                        }
                        slot = next_slot_with_parity(None, parity);
                    } else if cc_flip {
                        slot = next_slot_with_parity(Some(slot), parity);
                    }
                }
            }
            if slot >= arch.num_clauses {
                return Err(malformed(index, "more clauses than declared"));
            }
            let offset = inst.offset as usize;
            if offset >= f {
                return Err(EmuError::Fault {
                    index,
                    offset: inst.offset,
                    features: f,
                });
            }
            let word = self.feature_mem[offset];
            self.clause_reg &= if inst.complement { !word } else { word };
            prev = Some(inst);
        }
        let last = prev.ok_or_else(|| malformed(0, "no instructions loaded"))?;
        self.commit_clause(last.positive);
        self.stored_sums[class] = self.lane_sums;
        if class + 1 != arch.num_classes {
            return Err(malformed(n, "fewer classes than declared"));
        }

        // sequential argmax scan, one class per cycle
        let mut best = [0usize; BATCH_LANES];
        for (c, sums) in self.stored_sums.iter().enumerate() {
            self.cycles += 1;
            for lane in 0..BATCH_LANES {
                if sums[lane] > self.stored_sums[best[lane]][lane] {
                    best[lane] = c;
                }
            }
        }
        self.cycles += 1;
        self.out_fifo.extend(best);
        Ok(best)
    }

    fn commit_clause(&mut self, positive: bool) {
        let delta = if positive { 1 } else { -1 };
        let mut bits = self.clause_reg;
        while bits != 0 {
            let lane = bits.trailing_zeros() as usize;
            self.lane_sums[lane] += delta;
            bits &= bits - 1;
        }
        self.clause_reg = u32::MAX;
    }

    /// Feeds a sequence of beats, draining the FIFO after every batch.
    /// Returns all lane classifications in arrival order.
    pub fn feed_all(&mut self, beats: &[u64]) -> Result<Vec<usize>, EmuError> {
        let mut out = Vec::new();
        for &b in beats {
            if let FeedStatus::BatchComplete { .. } = self.feed(b)? {
                out.extend(self.drain_fifo());
            }
        }
        Ok(out)
    }

    /// Streams a compressed model into instruction memory.
    pub fn program(&mut self, stream: &InstructionStream) -> Result<(), EmuError> {
        let beats = StreamPacket::instructions(stream)?.to_beats(self.config.header_width)?;
        self.feed_all(&beats)?;
        self.parser.finish()?;
        if !self.model_ready {
            return Err(EmuError::State("model stream did not complete".into()));
        }
        Ok(())
    }

    /// Classifies `points` with the loaded model; partial final batches are
    /// zero-filled and the unused lanes dropped from the report.
    pub fn infer(&mut self, points: &[BoolVector]) -> Result<RunReport, EmuError> {
        let beats = feature_beats(points, self.config.header_width)?;
        let mut classes = self.run_stream(&beats)?.classifications;
        classes.truncate(points.len());
        Ok(RunReport::new(
            classes,
            self.cycles,
            self.config.clock_hz,
            self.config.power_watts,
        ))
    }

    /// Feeds a complete feature stream and reports every lane of every
    /// batch, padding lanes included.
    pub fn run_stream(&mut self, beats: &[u64]) -> Result<RunReport, EmuError> {
        let classes = self.feed_all(beats)?;
        self.parser.finish()?;
        Ok(RunReport::new(
            classes,
            self.cycles,
            self.config.clock_hz,
            self.config.power_watts,
        ))
    }
}

/// Feature header and payload beats for `points`.
pub fn feature_beats(
    points: &[BoolVector],
    width: crate::protocol::HeaderWidth,
) -> Result<Vec<u64>, EmuError> {
    let batches = batch_datapoints(points)?;
    Ok(packetize_features(&batches)?.to_beats(width)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::encode;
    use crate::model::{Architecture, TmModel};
    use crate::protocol::HeaderWidth;

    fn bv(bits: &[u8]) -> BoolVector {
        BoolVector::from_bits(bits).unwrap()
    }

    fn core() -> Core {
        Core::new(CoreConfig::default()).unwrap()
    }

    /// Two classes over F=2: class 0 votes for f0 AND NOT f1, class 1 for
    /// NOT f0 AND f1.
    fn mirror_model() -> TmModel {
        let mut m = TmModel::new(Architecture::new(2, 2, 2).unwrap());
        m.set_include(0, 0, 0, true).unwrap();
        m.set_include(0, 0, 3, true).unwrap();
        m.set_include(1, 0, 2, true).unwrap();
        m.set_include(1, 0, 1, true).unwrap();
        m
    }

    #[test]
    fn single_class_sum() {
        let mut c = core();
        let stream = InstructionStream::new(Architecture::new(1, 2, 2).unwrap(), vec![0x8000, 0x8003, 0x4002]);
        c.program(&stream).unwrap();
        let r = c.infer(&[bv(&[1, 0])]).unwrap();
        assert_eq!(r.classifications, vec![0]);
        assert_eq!(c.class_sums()[0][0], 1);
        // the other 31 lanes are zero-filled: f0 = 0, so clause 0 is 0, clause 1 (f1) is 0
        assert_eq!(c.class_sums()[0][1], 0);
    }

    #[test]
    fn mirror_model_lanes() {
        let m = mirror_model();
        let mut c = core();
        c.program(&encode(&m).unwrap()).unwrap();
        let points = [bv(&[1, 0]), bv(&[0, 1])];
        let r = c.infer(&points).unwrap();
        let oracle: Vec<usize> = points.iter().map(|p| m.predict(p).unwrap()).collect();
        assert_eq!(oracle, vec![0, 1]);
        assert_eq!(r.classifications, oracle);
    }

    #[test]
    fn identical_lanes_agree() {
        let mut c = core();
        c.program(&encode(&mirror_model()).unwrap()).unwrap();
        let r = c.infer(&vec![bv(&[0, 1]); 32]).unwrap();
        assert_eq!(r.classifications, vec![1; 32]);
    }

    #[test]
    fn phase_trace() {
        let mut c = core();
        c.set_tracing(true);
        let stream = InstructionStream::new(Architecture::new(1, 2, 2).unwrap(), vec![0x8000, 0x8003, 0x4002]);
        c.program(&stream).unwrap();
        c.infer(&[bv(&[1, 0])]).unwrap();
        assert_eq!(
            c.phase_trace(),
            &[
                Phase::Idle,
                Phase::LoadingInstr,
                Phase::Idle,
                Phase::LoadingFeat,
                Phase::Executing,
                Phase::Idle
            ]
        );
    }

    #[test]
    fn short_payload_then_header_is_protocol_error() {
        let mut c = core();
        c.feed(Header::instruction(1, 2, 3).encode32()).unwrap();
        c.feed(0x8000).unwrap();
        let err = c.feed(Header::instruction(1, 2, 1).encode32()).unwrap_err();
        assert!(matches!(err, EmuError::Protocol(_)));
        assert!(!c.model_loaded());
        assert_eq!(c.phase(), Phase::Idle);
    }

    #[test]
    fn excess_payload_is_protocol_error() {
        let mut c = core();
        c.feed(Header::instruction(1, 2, 1).encode32()).unwrap();
        assert_eq!(c.feed(0x8000).unwrap(), FeedStatus::ModelLoaded);
        assert!(matches!(c.feed(0x8001), Err(EmuError::Protocol(_))));
    }

    #[test]
    fn new_header_resets() {
        let mut c = core();
        c.program(&encode(&mirror_model()).unwrap()).unwrap();
        let beats = feature_beats(&[bv(&[1, 0])], HeaderWidth::W32).unwrap();
        for &b in &beats {
            c.feed(b).unwrap();
        }
        assert_eq!(c.fifo_len(), 32);
        c.feed(Header::instruction(2, 2, 4).encode32()).unwrap();
        assert_eq!(c.fifo_len(), 0);
        assert_eq!(c.cycles(), 1);
        c.reset();
        assert_eq!(c.cycles(), 0);
        assert_eq!(c.phase(), Phase::Idle);
    }

    #[test]
    fn capacity_errors() {
        let cfg = CoreConfig {
            instr_mem_depth: 2,
            feature_mem_depth: 1,
            ..CoreConfig::default()
        };
        let mut c = Core::new(cfg).unwrap();
        assert!(matches!(
            c.program(&encode(&mirror_model()).unwrap()),
            Err(EmuError::Capacity { requested: 4, depth: 2, .. })
        ));
        let mut one = TmModel::new(Architecture::new(1, 2, 2).unwrap());
        one.set_include(0, 0, 0, true).unwrap();
        c.program(&encode(&one).unwrap()).unwrap();
        assert!(matches!(
            c.infer(&[bv(&[1, 0])]),
            Err(EmuError::Capacity { requested: 2, depth: 1, .. })
        ));
    }

    #[test]
    fn features_before_model() {
        let mut c = core();
        assert!(matches!(c.infer(&[bv(&[1])]), Err(EmuError::State(_))));
    }

    #[test]
    fn fault_and_malformed_model() {
        let mut c = core();
        // offset 1 with a one-feature batch
        let s = InstructionStream::new(Architecture::new(1, 2, 1).unwrap(), vec![0x8002]);
        c.program(&s).unwrap();
        assert!(matches!(c.infer(&[bv(&[1])]), Err(EmuError::Fault { offset: 1, .. })));
        // declares two classes, stream holds one
        let s = InstructionStream::new(Architecture::new(2, 2, 1).unwrap(), vec![0x8000]);
        c.program(&s).unwrap();
        assert!(matches!(c.infer(&[bv(&[1])]), Err(EmuError::MalformedModel { .. })));
        // three clauses in a two-clause class
        let s = InstructionStream::new(Architecture::new(1, 2, 1).unwrap(), vec![0x8000, 0x4000, 0x8000]);
        c.program(&s).unwrap();
        assert!(matches!(c.infer(&[bv(&[1])]), Err(EmuError::MalformedModel { index: 2, .. })));
    }

    #[test]
    fn fifo_must_be_drained() {
        let mut c = core();
        c.program(&encode(&mirror_model()).unwrap()).unwrap();
        let beats = feature_beats(&vec![bv(&[1, 0]); 40], HeaderWidth::W32).unwrap();
        let err = beats.iter().try_for_each(|&b| c.feed(b).map(|_| ()));
        assert_eq!(err, Err(EmuError::FifoOverflow));
    }

    #[test]
    fn raw_stream_reports_every_lane() {
        let m = mirror_model();
        let mut c = core();
        let mut beats = StreamPacket::instructions(&encode(&m).unwrap())
            .unwrap()
            .to_beats(HeaderWidth::W32)
            .unwrap();
        let pts = [bv(&[1, 0]), bv(&[0, 1])];
        beats.extend(feature_beats(&pts, HeaderWidth::W32).unwrap());
        let r = c.run_stream(&beats).unwrap();
        assert_eq!(r.classifications.len(), BATCH_LANES);
        assert_eq!(&r.classifications[..2], &[0, 1]);
        // zero-filled lanes: no clause fires, tie resolves to class 0
        assert!(r.classifications[2..].iter().all(|&k| k == 0));
        assert!(matches!(
            c.run_stream(&beats[..beats.len() - 1]),
            Err(EmuError::Protocol(_))
        ));
    }

    #[test]
    fn counted_cycles_follow_formula() {
        let mut c = core();
        let stream = InstructionStream::new(Architecture::new(1, 2, 2).unwrap(), vec![0x8000]);
        c.program(&stream).unwrap();
        let r = c.infer(&[bv(&[1, 0])]).unwrap();
        // feature header + 2 words, then one batch of a single instruction
        assert_eq!(r.cycles, super::super::cycle_model(1, 1, 3, 1));
    }

    #[test]
    fn sixteen_bit_bus() {
        let cfg = CoreConfig {
            header_width: HeaderWidth::W16,
            ..CoreConfig::default()
        };
        let mut c = Core::new(cfg).unwrap();
        let m = mirror_model();
        c.program(&encode(&m).unwrap()).unwrap();
        let pts = [bv(&[1, 0]), bv(&[0, 1]), bv(&[1, 1])];
        let r = c.infer(&pts).unwrap();
        let oracle: Vec<usize> = pts.iter().map(|p| m.predict(p).unwrap()).collect();
        assert_eq!(r.classifications, oracle);
        // 2 header beats + 2 words x 2 beats
        assert_eq!(r.cycles, super::super::cycle_model(4, 2, 6, 1));
    }

    impl Header {
        fn encode32(&self) -> u64 {
            crate::protocol::encode_header(self, HeaderWidth::W32).unwrap()[0]
        }
    }
}
