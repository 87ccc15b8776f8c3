//! Vanilla Tsetlin Machine training.
//!
//! Each automaton holds a state in `1..=2N`; its action is Include when the
//! state exceeds `N`. Feedback follows the classic Type I / Type II scheme
//! with probabilities `1/s` and `(s-1)/s` and a class-sum clamp of `±T`.
//! During training a clause with no Includes outputs 1 so that it can start
//! learning; trained models are evaluated with the inference convention
//! (empty clause outputs 0) from [`crate::model`].
//!
//! Randomness comes from `ChaCha8Rng` seeded with [`TrainConfig::seed`], so
//! a given dataset, architecture and config always produce the same model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{polarity, Architecture, BoolVector, TmModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Specificity `s`, must exceed 1.
    pub specificity: f64,
    /// Vote clamp `T`.
    pub threshold: u32,
    /// States per action `N`.
    pub states_per_action: u16,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            specificity: 3.9,
            threshold: 10,
            states_per_action: 128,
            epochs: 100,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.specificity > 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "specificity must be > 1, got {}",
                self.specificity
            )));
        }
        if self.threshold == 0 {
            return Err(TrainError::InvalidConfig("threshold T must be >= 1".into()));
        }
        if self.states_per_action == 0 || self.states_per_action > u16::MAX / 2 {
            return Err(TrainError::InvalidConfig(format!(
                "states per action must be in 1..={}, got {}",
                u16::MAX / 2,
                self.states_per_action
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// State of one Tsetlin automaton, saturating in `1..=2N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaState {
    state: u16,
    n: u16,
}

impl TaState {
    /// Starts on the Exclude side of the boundary, at state `N`.
    pub fn new(n: u16) -> Self {
        debug_assert!(n >= 1);
        Self { state: n, n }
    }

    pub fn state(&self) -> u16 {
        self.state
    }

    pub fn include(&self) -> bool {
        self.state > self.n
    }

    #[inline]
    pub fn increment(&mut self) {
        if self.state < 2 * self.n {
            self.state += 1;
        }
    }

    #[inline]
    pub fn decrement(&mut self) {
        if self.state > 1 {
            self.state -= 1;
        }
    }
}

/// Incremental trainer; [`train`] wraps it for the common case.
pub struct Trainer {
    arch: Architecture,
    cfg: TrainConfig,
    states: Vec<TaState>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl Trainer {
    pub fn new(arch: Architecture, cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        Ok(Self {
            states: vec![TaState::new(cfg.states_per_action); arch.total_tas()],
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            arch,
            cfg,
            order: Vec::new(),
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn states(&self) -> &[TaState] {
        &self.states
    }

    fn check_dataset(&self, data: &[(BoolVector, usize)]) -> Result<(), TrainError> {
        if data.is_empty() {
            return Err(TrainError::InvalidDataset("dataset is empty".into()));
        }
        for (i, (x, y)) in data.iter().enumerate() {
            if x.len() != self.arch.num_features {
                return Err(TrainError::InvalidDataset(format!(
                    "datapoint {i} has {} features, expected {}",
                    x.len(),
                    self.arch.num_features
                )));
            }
            if *y >= self.arch.num_classes {
                return Err(TrainError::InvalidDataset(format!(
                    "datapoint {i} has label {y}, model has {} classes",
                    self.arch.num_classes
                )));
            }
        }
        Ok(())
    }

    /// One pass over `data` in a freshly shuffled order.
    pub fn epoch(&mut self, data: &[(BoolVector, usize)]) -> Result<(), TrainError> {
        self.check_dataset(data)?;
        self.order.clear();
        self.order.extend(0..data.len());
        self.order.shuffle(&mut self.rng);
        let order = std::mem::take(&mut self.order);
        let mut literals = vec![false; self.arch.literal_count()];
        for &i in &order {
            let (x, y) = &data[i];
            fill_literals(x.as_slice(), &mut literals);
            self.update_class(*y, true, &literals);
            if self.arch.num_classes > 1 {
                let mut other = self.rng.random_range(0..self.arch.num_classes - 1);
                if other >= *y {
                    other += 1;
                }
                self.update_class(other, false, &literals);
            }
        }
        self.order = order;
        Ok(())
    }

    fn clause_range(&self, class: usize, clause: usize) -> std::ops::Range<usize> {
        let lits = self.arch.literal_count();
        let base = (class * self.arch.clauses_per_class + clause) * lits;
        base..base + lits
    }

    fn training_clause_output(&self, class: usize, clause: usize, literals: &[bool]) -> bool {
        self.states[self.clause_range(class, clause)]
            .iter()
            .zip(literals)
            .all(|(ta, &lit)| !ta.include() || lit)
    }

    fn update_class(&mut self, class: usize, target: bool, literals: &[bool]) {
        let cl = self.arch.clauses_per_class;
        let outputs: Vec<bool> = (0..cl)
            .map(|j| self.training_clause_output(class, j, literals))
            .collect();
        let t = self.cfg.threshold as i32;
        let votes: i32 = outputs
            .iter()
            .enumerate()
            .map(|(j, &o)| polarity(j) * o as i32)
            .sum::<i32>()
            .clamp(-t, t);
        let p = if target {
            (t - votes) as f64 / (2 * t) as f64
        } else {
            (t + votes) as f64 / (2 * t) as f64
        };
        for (j, &output) in outputs.iter().enumerate() {
            if !self.rng.random_bool(p) {
                continue;
            }
            let positive = polarity(j) > 0;
            let range = self.clause_range(class, j);
            if positive == target {
                self.type_i(range, output, literals);
            } else {
                self.type_ii(range, output, literals);
            }
        }
    }

    /// Reinforces recognition: pulls true literals in, pushes the rest out.
    fn type_i(&mut self, range: std::ops::Range<usize>, output: bool, literals: &[bool]) {
        let inv_s = 1.0 / self.cfg.specificity;
        let rng = &mut self.rng;
        let tas = &mut self.states[range];
        if output {
            for (ta, &lit) in tas.iter_mut().zip(literals) {
                if lit {
                    if rng.random_bool(1.0 - inv_s) {
                        ta.increment();
                    }
                } else if rng.random_bool(inv_s) {
                    ta.decrement();
                }
            }
        } else {
            for ta in tas.iter_mut() {
                if rng.random_bool(inv_s) {
                    ta.decrement();
                }
            }
        }
    }

    /// Combats false positives: includes a false literal that was excluded.
    fn type_ii(&mut self, range: std::ops::Range<usize>, output: bool, literals: &[bool]) {
        if !output {
            return;
        }
        for (ta, &lit) in self.states[range].iter_mut().zip(literals) {
            if !lit && !ta.include() {
                ta.increment();
            }
        }
    }

    /// Current actions as a model.
    pub fn model(&self) -> TmModel {
        TmModel::from_actions(self.arch, self.states.iter().map(TaState::include).collect())
            .expect("state vector sized from architecture")
    }
}

fn fill_literals(features: &[bool], literals: &mut [bool]) {
    let f = features.len();
    literals[..f].copy_from_slice(features);
    for (dst, &src) in literals[f..].iter_mut().zip(features) {
        *dst = !src;
    }
}

/// Trains for `cfg.epochs` epochs and returns the resulting model.
pub fn train(
    data: &[(BoolVector, usize)],
    arch: Architecture,
    cfg: &TrainConfig,
) -> Result<TmModel, TrainError> {
    let mut trainer = Trainer::new(arch, cfg.clone())?;
    for _ in 0..cfg.epochs {
        trainer.epoch(data)?;
    }
    Ok(trainer.model())
}

/// Fraction of Include actions in `model`.
pub fn sparsity(model: &TmModel) -> f64 {
    model.sparsity()
}

/// Share of `data` that `model` classifies correctly.
pub fn accuracy(model: &TmModel, data: &[(BoolVector, usize)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data
        .iter()
        .filter(|(x, y)| model.predict(x).ok() == Some(*y))
        .count();
    correct as f64 / data.len() as f64
}

/// The four noiseless XOR datapoints over two features.
pub fn xor_dataset() -> Vec<(BoolVector, usize)> {
    [(0u8, 0u8), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(|(a, b)| (BoolVector::from_bits(&[a, b]).unwrap(), (a ^ b) as usize))
        .collect()
}
