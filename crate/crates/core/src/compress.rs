//! Codec between dense models and the 16-bit Include instruction stream.
//!
//! Word layout, MSB first:
//!
//! ```text
//!  15   14   13   12 ............ 1   0
//! +----+----+----+------------------+---+
//! |pol | cc | e  |  offset[11:0]    | l |
//! +----+----+----+------------------+---+
//! ```
//!
//! * `pol`: clause polarity, 1 = positive.
//! * `cc`: flips at every clause boundary inside a class.
//! * `e`: flips at every class boundary (`cc` is left alone there).
//! * `offset`: Boolean feature index, addressed directly in feature memory.
//! * `l`: 0 selects the feature, 1 its complement.
//!
//! One instruction is emitted per Include, class-major, clause-major, and
//! ordered by `(offset, l)` within a clause. Clauses without Includes emit
//! nothing, so the decoder places each clause at the first slot after its
//! predecessor with a matching polarity (see [`TmModel::compact_clauses`]).

use thiserror::Error;

use crate::model::{next_slot_with_parity, Architecture, ModelError, TmModel, MAX_FEATURES};

const POL_BIT: u16 = 1 << 15;
const CC_BIT: u16 = 1 << 14;
const E_BIT: u16 = 1 << 13;
const OFFSET_SHIFT: u32 = 1;
const OFFSET_MASK: u16 = 0x0fff;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("{features} features exceed the 12-bit offset field")]
    OffsetOverflow { features: usize },
    #[error("class {class} has no Include actions and cannot be encoded")]
    DegenerateClass { class: usize },
    #[error("malformed stream at instruction {index}: {reason}")]
    Malformed { index: usize, reason: String },
    #[error("instruction {index} repeats an Include already present in its clause")]
    DuplicateInclude { index: usize },
    #[error("instruction {index} has offset {offset}, model has {features} features")]
    OffsetOutOfRange {
        index: usize,
        offset: u16,
        features: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One decoded Include instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IncludeInstruction {
    pub positive: bool,
    pub clause_toggle: bool,
    pub class_toggle: bool,
    /// Feature index; only the low 12 bits are representable.
    pub offset: u16,
    pub complement: bool,
}

impl IncludeInstruction {
    pub fn pack(&self) -> u16 {
        debug_assert!(self.offset <= OFFSET_MASK);
        (self.positive as u16) << 15
            | (self.clause_toggle as u16) << 14
            | (self.class_toggle as u16) << 13
            | (self.offset & OFFSET_MASK) << OFFSET_SHIFT
            | self.complement as u16
    }

    pub fn unpack(word: u16) -> Self {
        Self {
            positive: word & POL_BIT != 0,
            clause_toggle: word & CC_BIT != 0,
            class_toggle: word & E_BIT != 0,
            offset: (word >> OFFSET_SHIFT) & OFFSET_MASK,
            complement: word & 1 != 0,
        }
    }

    /// Literal index this instruction includes, for a model with `features` features.
    pub fn literal(&self, features: usize) -> usize {
        self.offset as usize + if self.complement { features } else { 0 }
    }
}

/// Packed instruction words plus the architecture they were encoded from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionStream {
    pub arch: Architecture,
    pub words: Vec<u16>,
}

impl InstructionStream {
    pub fn new(arch: Architecture, words: Vec<u16>) -> Self {
        Self { arch, words }
    }

    pub fn instruction_count(&self) -> usize {
        self.words.len()
    }

    pub fn instructions(&self) -> impl Iterator<Item = IncludeInstruction> + '_ {
        self.words.iter().map(|&w| IncludeInstruction::unpack(w))
    }
}

/// Compresses `model` into Include instructions.
pub fn encode(model: &TmModel) -> Result<InstructionStream, CodecError> {
    let arch = model.arch();
    if arch.num_features > MAX_FEATURES {
        return Err(CodecError::OffsetOverflow {
            features: arch.num_features,
        });
    }
    let f = arch.num_features;
    let mut words = Vec::with_capacity(model.include_count());
    let mut cc = false;
    let mut e = false;
    for class in 0..arch.num_classes {
        if model.class_include_count(class)? == 0 {
            return Err(CodecError::DegenerateClass { class });
        }
        if class > 0 {
            e = !e;
        }
        let mut first_clause = true;
        for clause in 0..arch.clauses_per_class {
            let actions = model.clause_actions(class, clause)?;
            if !actions.iter().any(|&a| a) {
                continue;
            }
            if !first_clause {
                cc = !cc;
            }
            first_clause = false;
            // (offset, l) order: feature before its complement
            for offset in 0..f {
                for (complement, literal) in [(false, offset), (true, offset + f)] {
                    if actions[literal] {
                        words.push(
                            IncludeInstruction {
                                positive: clause % 2 == 0,
                                clause_toggle: cc,
                                class_toggle: e,
                                offset: offset as u16,
                                complement,
                            }
                            .pack(),
                        );
                    }
                }
            }
        }
    }
    Ok(InstructionStream { arch, words })
}

/// Rebuilds the dense model from an instruction stream.
pub fn decode(stream: &InstructionStream) -> Result<TmModel, CodecError> {
    let arch = stream.arch;
    let f = arch.num_features;
    let mut model = TmModel::new(arch);
    if stream.words.is_empty() {
        return Err(CodecError::Malformed {
            index: 0,
            reason: format!("empty stream cannot describe {} classes", arch.num_classes),
        });
    }
    let mut prev: Option<IncludeInstruction> = None;
    let mut class = 0usize;
    let mut clause = 0usize;
    for (index, inst) in stream.instructions().enumerate() {
        let malformed = |reason: String| CodecError::Malformed { index, reason };
        let parity = if inst.positive { 0 } else { 1 };
        match prev {
            None => {
                if inst.clause_toggle || inst.class_toggle {
                    return Err(malformed("first instruction must have cc=0 and e=0".into()));
                }
                clause = next_slot_with_parity(None, parity);
            }
            Some(p) => {
                let cc_flip = inst.clause_toggle != p.clause_toggle;
                let e_flip = inst.class_toggle != p.class_toggle;
                if cc_flip && e_flip {
                    return Err(malformed("cc and e toggled together".into()));
                }
                if e_flip {
                    class += 1;
                    if class >= arch.num_classes {
                        return Err(malformed(format!(
                            "class toggle beyond declared {} classes",
                            arch.num_classes
                        )));
                    }
                    clause = next_slot_with_parity(None, parity);
                } else if cc_flip {
                    clause = next_slot_with_parity(Some(clause), parity);
                } else {
                    if inst.positive != p.positive {
                        return Err(malformed("polarity changed without a clause toggle".into()));
                    }
                    let here = (inst.offset, inst.complement);
                    let before = (p.offset, p.complement);
                    if here == before {
                        return Err(CodecError::DuplicateInclude { index });
                    }
                    if here < before {
                        return Err(malformed("offsets not ascending within clause".into()));
                    }
                }
            }
        }
        if clause >= arch.clauses_per_class {
            return Err(malformed(format!(
                "clause slot {clause} exceeds {} clauses per class",
                arch.clauses_per_class
            )));
        }
        if inst.offset as usize >= f {
            return Err(CodecError::OffsetOutOfRange {
                index,
                offset: inst.offset,
                features: f,
            });
        }
        model.set_include(class, clause, inst.literal(f), true)?;
        prev = Some(inst);
    }
    if class + 1 != arch.num_classes {
        return Err(CodecError::Malformed {
            index: stream.words.len(),
            reason: format!(
                "stream covers {} classes, architecture declares {}",
                class + 1,
                arch.num_classes
            ),
        });
    }
    Ok(model)
}

/// Size of the instruction stream against a one-byte-per-automaton dense model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub include_count: usize,
    pub instruction_bytes: usize,
    pub dense_state_bytes: usize,
    /// `1 - instruction_bytes / dense_state_bytes`; negative when the stream is larger.
    pub ratio: f64,
}

impl CompressionReport {
    pub fn from_counts(include_count: usize, total_tas: usize) -> Self {
        let instruction_bytes = 2 * include_count;
        let dense_state_bytes = total_tas;
        Self {
            include_count,
            instruction_bytes,
            dense_state_bytes,
            ratio: 1.0 - instruction_bytes as f64 / dense_state_bytes as f64,
        }
    }
}

pub fn compression_report(model: &TmModel) -> CompressionReport {
    CompressionReport::from_counts(model.include_count(), model.arch().total_tas())
}
