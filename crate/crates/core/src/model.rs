//! Dense Tsetlin Machine models and the uncompressed reference inference.
//!
//! Literals are laid out features first, complements second: literal `l < F`
//! is feature `l`, literal `F <= l < 2F` is the complement of feature `l - F`.
//! Clause `j` votes with polarity `+1` when `j` is even and `-1` when odd.
//!
//! A clause with no Include actions outputs 0. The compressed instruction
//! stream carries nothing for such a clause, so the dense evaluation here
//! adopts the same convention and stays equivalent to compressed inference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest feature count addressable by the 12-bit instruction offset.
pub const MAX_FEATURES: usize = 1 << 12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("{what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("input has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Model shape: `M` classes, `Cl` clauses per class, `F` Boolean features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub num_classes: usize,
    pub clauses_per_class: usize,
    pub num_features: usize,
}

impl Architecture {
    /// Validates the shape. One class is accepted so single-class streams
    /// (degenerate, but well formed) can be represented.
    pub fn new(
        num_classes: usize,
        clauses_per_class: usize,
        num_features: usize,
    ) -> Result<Self, ModelError> {
        if num_classes == 0 {
            return Err(ModelError::InvalidArchitecture(
                "at least one class is required".into(),
            ));
        }
        if clauses_per_class < 2 || !clauses_per_class.is_multiple_of(2) {
            return Err(ModelError::InvalidArchitecture(format!(
                "clauses per class must be even and >= 2, got {clauses_per_class}"
            )));
        }
        if num_features == 0 || num_features > MAX_FEATURES {
            return Err(ModelError::InvalidArchitecture(format!(
                "feature count must be in 1..={MAX_FEATURES}, got {num_features}"
            )));
        }
        Ok(Self {
            num_classes,
            clauses_per_class,
            num_features,
        })
    }

    /// Number of Boolean literals, `2F`.
    pub fn literal_count(&self) -> usize {
        2 * self.num_features
    }

    pub fn total_clauses(&self) -> usize {
        self.num_classes * self.clauses_per_class
    }

    /// Number of Tsetlin automata, `M * Cl * 2F`.
    pub fn total_tas(&self) -> usize {
        self.total_clauses() * self.literal_count()
    }
}

/// Polarity of clause `j`: `+1` for even indices, `-1` for odd.
#[inline]
pub fn polarity(clause: usize) -> i32 {
    if clause.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Boolean feature vector of one datapoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoolVector(Vec<bool>);

impl BoolVector {
    pub fn new(features: Vec<bool>) -> Result<Self, ModelError> {
        if features.is_empty() {
            return Err(ModelError::InvalidConfig(
                "a Boolean vector needs at least one feature".into(),
            ));
        }
        Ok(Self(features))
    }

    /// Builds a vector from 0/1 values; anything non-zero counts as 1.
    pub fn from_bits(bits: &[u8]) -> Result<Self, ModelError> {
        Self::new(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, feature: usize) -> Option<bool> {
        self.0.get(feature).copied()
    }

    /// Literal `l`: the feature itself for `l < F`, its complement above.
    pub fn literal(&self, l: usize) -> Result<bool, ModelError> {
        let f = self.0.len();
        if l < f {
            Ok(self.0[l])
        } else if l < 2 * f {
            Ok(!self.0[l - f])
        } else {
            Err(ModelError::Index {
                what: "literal",
                index: l,
                limit: 2 * f,
            })
        }
    }
}

impl std::ops::Index<usize> for BoolVector {
    type Output = bool;

    fn index(&self, index: usize) -> &bool {
        &self.0[index]
    }
}

/// Thresholds raw inputs into Boolean features.
///
/// `thresholds[d]` lists the thresholds applied to raw dimension `d`; each
/// threshold emits one bit, set when the raw value is `>=` the threshold.
/// A single threshold per dimension is plain binarization, several give a
/// thermometer code.
pub fn booleanize(raw: &[f64], thresholds: &[Vec<f64>]) -> Result<BoolVector, ModelError> {
    if thresholds.is_empty() {
        return Err(ModelError::InvalidConfig("no thresholds given".into()));
    }
    if raw.len() != thresholds.len() {
        return Err(ModelError::InvalidConfig(format!(
            "{} raw values but thresholds for {} dimensions",
            raw.len(),
            thresholds.len()
        )));
    }
    let mut bits = Vec::with_capacity(thresholds.iter().map(Vec::len).sum());
    for (dim, (&value, levels)) in raw.iter().zip(thresholds).enumerate() {
        if levels.is_empty() {
            return Err(ModelError::InvalidConfig(format!(
                "dimension {dim} has no thresholds"
            )));
        }
        bits.extend(levels.iter().map(|&t| value >= t));
    }
    BoolVector::new(bits)
}

/// Polarity-weighted clause votes, one entry per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSums(pub Vec<i32>);

impl ClassSums {
    /// Index of the largest sum; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        argmax_lowest(&self.0)
    }
}

pub(crate) fn argmax_lowest(values: &[i32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A trained model: the Include/Exclude action of every automaton.
///
/// Actions are stored class-major, clause-major, literal-minor, which is
/// also the bit order of the model file.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TmModel {
    arch: Architecture,
    actions: Vec<bool>,
}

impl TmModel {
    /// All-Exclude model.
    pub fn new(arch: Architecture) -> Self {
        Self {
            actions: vec![false; arch.total_tas()],
            arch,
        }
    }

    pub fn from_actions(arch: Architecture, actions: Vec<bool>) -> Result<Self, ModelError> {
        if actions.len() != arch.total_tas() {
            return Err(ModelError::InvalidConfig(format!(
                "expected {} actions, got {}",
                arch.total_tas(),
                actions.len()
            )));
        }
        Ok(Self { arch, actions })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn actions(&self) -> &[bool] {
        &self.actions
    }

    fn clause_base(&self, class: usize, clause: usize) -> Result<usize, ModelError> {
        if class >= self.arch.num_classes {
            return Err(ModelError::Index {
                what: "class",
                index: class,
                limit: self.arch.num_classes,
            });
        }
        if clause >= self.arch.clauses_per_class {
            return Err(ModelError::Index {
                what: "clause",
                index: clause,
                limit: self.arch.clauses_per_class,
            });
        }
        Ok((class * self.arch.clauses_per_class + clause) * self.arch.literal_count())
    }

    /// Action vector of one clause, indexed by literal.
    pub fn clause_actions(&self, class: usize, clause: usize) -> Result<&[bool], ModelError> {
        let base = self.clause_base(class, clause)?;
        Ok(&self.actions[base..base + self.arch.literal_count()])
    }

    pub fn is_include(&self, class: usize, clause: usize, literal: usize) -> Result<bool, ModelError> {
        self.check_literal(literal)?;
        Ok(self.clause_actions(class, clause)?[literal])
    }

    pub fn set_include(
        &mut self,
        class: usize,
        clause: usize,
        literal: usize,
        include: bool,
    ) -> Result<(), ModelError> {
        self.check_literal(literal)?;
        let base = self.clause_base(class, clause)?;
        self.actions[base + literal] = include;
        Ok(())
    }

    fn check_literal(&self, literal: usize) -> Result<(), ModelError> {
        if literal >= self.arch.literal_count() {
            return Err(ModelError::Index {
                what: "literal",
                index: literal,
                limit: self.arch.literal_count(),
            });
        }
        Ok(())
    }

    /// Included literal indices of one clause, ascending.
    pub fn clause_includes(&self, class: usize, clause: usize) -> Result<Vec<usize>, ModelError> {
        Ok(self
            .clause_actions(class, clause)?
            .iter()
            .enumerate()
            .filter_map(|(l, &inc)| inc.then_some(l))
            .collect())
    }

    pub fn include_count(&self) -> usize {
        self.actions.iter().filter(|&&a| a).count()
    }

    pub fn class_include_count(&self, class: usize) -> Result<usize, ModelError> {
        let width = self.arch.clauses_per_class * self.arch.literal_count();
        let base = self.clause_base(class, 0)?;
        Ok(self.actions[base..base + width].iter().filter(|&&a| a).count())
    }

    fn check_input(&self, x: &BoolVector) -> Result<(), ModelError> {
        if x.len() != self.arch.num_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.arch.num_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// AND over the included literals of clause `(class, clause)`; 0 when
    /// the clause includes nothing.
    pub fn clause_output(&self, class: usize, clause: usize, x: &BoolVector) -> Result<bool, ModelError> {
        self.check_input(x)?;
        let actions = self.clause_actions(class, clause)?;
        Ok(eval_clause(actions, x.as_slice()))
    }

    pub fn class_sums(&self, x: &BoolVector) -> Result<ClassSums, ModelError> {
        self.check_input(x)?;
        let lits = self.arch.literal_count();
        let sums = self
            .actions
            .chunks_exact(self.arch.clauses_per_class * lits)
            .map(|class| {
                class
                    .chunks_exact(lits)
                    .enumerate()
                    .map(|(j, actions)| polarity(j) * eval_clause(actions, x.as_slice()) as i32)
                    .sum()
            })
            .collect();
        Ok(ClassSums(sums))
    }

    pub fn predict(&self, x: &BoolVector) -> Result<usize, ModelError> {
        Ok(self.class_sums(x)?.argmax())
    }

    /// Fraction of automata whose action is Include.
    pub fn sparsity(&self) -> f64 {
        self.include_count() as f64 / self.arch.total_tas() as f64
    }

    /// Reassigns clause slots the way a toggle-only instruction stream
    /// reconstructs them: within each class, non-empty clauses keep their
    /// relative order and each moves to the first free slot after its
    /// predecessor that has the same polarity. Empty clauses fill the rest.
    ///
    /// The result votes identically to `self` on every input.
    pub fn compact_clauses(&self) -> TmModel {
        let arch = self.arch;
        let lits = arch.literal_count();
        let mut out = TmModel::new(arch);
        for class in 0..arch.num_classes {
            let mut next: Option<usize> = None;
            for clause in 0..arch.clauses_per_class {
                let actions = self.clause_actions(class, clause).expect("in range");
                if !actions.iter().any(|&a| a) {
                    continue;
                }
                let slot = next_slot_with_parity(next, clause % 2);
                let base = (class * arch.clauses_per_class + slot) * lits;
                out.actions[base..base + lits].copy_from_slice(actions);
                next = Some(slot);
            }
        }
        out
    }
}

impl TmModel {
    /// Random model where each automaton is an Include with probability
    /// `density`. Used for benchmarks and randomized verification.
    pub fn random_sparse<R: rand::Rng + ?Sized>(arch: Architecture, density: f64, rng: &mut R) -> Self {
        let actions = (0..arch.total_tas())
            .map(|_| rng.random_bool(density.clamp(0.0, 1.0)))
            .collect();
        Self { arch, actions }
    }
}

/// First clause index after `prev` (or from 0) whose parity is `parity`.
pub(crate) fn next_slot_with_parity(prev: Option<usize>, parity: usize) -> usize {
    let start = prev.map_or(0, |p| p + 1);
    if start % 2 == parity {
        start
    } else {
        start + 1
    }
}

/// Include-only clause evaluation over a feature slice.
fn eval_clause(actions: &[bool], features: &[bool]) -> bool {
    let f = features.len();
    let mut any = false;
    for (l, _) in actions.iter().enumerate().filter(|(_, &inc)| inc) {
        any = true;
        let lit = if l < f { features[l] } else { !features[l - f] };
        if !lit {
            return false;
        }
    }
    any
}
