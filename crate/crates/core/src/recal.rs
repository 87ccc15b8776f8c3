//! Streaming inference under distribution drift with automatic retraining
//! and live reprogramming of a [`System`].
//!
//! Each step draws a labeled probe window, classifies it on the live
//! system and records the accuracy. When accuracy falls below the trigger
//! threshold, a fresh model is trained on the most recent samples and
//! programmed into the same system object.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::compress::{encode, CodecError};
use crate::model::{booleanize, Architecture, BoolVector, ModelError};
use crate::system::{System, SystemConfig, SystemError};
use crate::trainer::{train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum RecalError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Two Gaussian clusters in `dims` dimensions, class 0 centred at
/// `-separation / 2` and class 1 at `+separation / 2` on every axis. From
/// `shift_step` on, both means move by `shift` on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftScenario {
    pub dims: usize,
    pub separation: f64,
    pub std_dev: f64,
    /// Probability that a drawn label is flipped.
    pub label_noise: f64,
    pub shift_step: Option<usize>,
    pub shift: f64,
    pub steps: usize,
    /// Labeled samples drawn and classified per step.
    pub probe_size: usize,
    /// Retrain when probe accuracy drops below this.
    pub threshold: f64,
    /// Number of most recent samples used for retraining.
    pub window: usize,
    /// Thermometer thresholds per dimension, spread evenly over
    /// `[thermometer_lo, thermometer_hi]`.
    pub levels: usize,
    pub thermometer_lo: f64,
    pub thermometer_hi: f64,
    pub clauses_per_class: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for DriftScenario {
    fn default() -> Self {
        Self {
            dims: 4,
            separation: 2.0,
            std_dev: 1.0,
            label_noise: 0.0,
            shift_step: Some(50),
            shift: 2.5,
            steps: 100,
            probe_size: 32,
            threshold: 0.8,
            window: 64,
            levels: 12,
            thermometer_lo: -3.0,
            thermometer_hi: 5.5,
            clauses_per_class: 20,
            train: TrainConfig {
                specificity: 3.9,
                threshold: 15,
                states_per_action: 100,
                epochs: 30,
                seed: 1,
            },
            seed: 7,
        }
    }
}

impl DriftScenario {
    pub fn validate(&self) -> Result<(), RecalError> {
        let bad = |m: &str| Err(RecalError::Scenario(m.into()));
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.steps == 0 || self.probe_size == 0 || self.window == 0 {
            return bad("steps, probe size and window must be >= 1");
        }
        if self.dims == 0 || self.levels == 0 {
            return bad("dims and levels must be >= 1");
        }
        if !(self.thermometer_hi > self.thermometer_lo) {
            return bad("thermometer range is empty");
        }
        if !(self.std_dev > 0.0) || !(0.0..=0.5).contains(&self.label_noise) {
            return bad("std_dev must be > 0 and label noise in [0, 0.5]");
        }
        if let Some(s) = self.shift_step {
            if s >= self.steps {
                return bad("shift step lies beyond the last step");
            }
        }
        self.arch()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn arch(&self) -> Result<Architecture, RecalError> {
        Ok(Architecture::new(2, self.clauses_per_class, self.dims * self.levels)?)
    }

    fn thresholds(&self) -> Vec<Vec<f64>> {
        let span = self.thermometer_hi - self.thermometer_lo;
        let row: Vec<f64> = (0..self.levels)
            .map(|i| self.thermometer_lo + span * (i as f64 + 0.5) / self.levels as f64)
            .collect();
        vec![row; self.dims]
    }

    fn offset_at(&self, step: usize) -> f64 {
        match self.shift_step {
            Some(s) if step >= s => self.shift,
            _ => 0.0,
        }
    }
}

/// One row of the recalibration timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub step: usize,
    /// Probe accuracy of the model that was live during this step.
    pub accuracy: f64,
    /// Generation live after this step, including any retune it triggered.
    pub generation: u64,
    pub retuned: bool,
    /// Set when a triggered retrain could not be deployed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub rows: Vec<TimelineRow>,
}

impl Timeline {
    pub const CSV_HEADER: &'static str = "step,accuracy,generation";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!("{},{:.4},{}\n", r.step, r.accuracy, r.generation));
        }
        out
    }

    /// Mean accuracy over steps in `range`.
    pub fn mean_accuracy(&self, range: std::ops::Range<usize>) -> f64 {
        let sel: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| range.contains(&r.step))
            .map(|r| r.accuracy)
            .collect();
        if sel.is_empty() {
            0.0
        } else {
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    }

    pub fn final_generation(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.generation)
    }
}

struct Source {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    thresholds: Vec<Vec<f64>>,
}

impl Source {
    fn sample(&mut self, sc: &DriftScenario, step: usize) -> Result<(BoolVector, usize), RecalError> {
        let label = usize::from(self.rng.random_bool(0.5));
        let centre = if label == 1 { 0.5 } else { -0.5 } * sc.separation + sc.offset_at(step);
        let raw: Vec<f64> = (0..sc.dims)
            .map(|_| centre + self.noise.sample(&mut self.rng))
            .collect();
        let x = booleanize(&raw, &self.thresholds)?;
        let y = if self.rng.random_bool(sc.label_noise) { 1 - label } else { label };
        Ok((x, y))
    }
}

fn deploy(
    system: &mut System,
    sc: &DriftScenario,
    data: &[(BoolVector, usize)],
    seed: u64,
) -> Result<u64, RecalError> {
    let cfg = TrainConfig { seed, ..sc.train.clone() };
    let model = train(data, sc.arch()?, &cfg)?;
    let stream = encode(&model)?;
    Ok(system.program(&stream)?)
}

/// Runs `sc` on a newly built system and returns the timeline.
pub fn run_drift(sc: &DriftScenario, system: SystemConfig) -> Result<Timeline, RecalError> {
    let mut sys = System::new(system)?;
    run_drift_on(sc, &mut sys)
}

/// Runs `sc` on `system`. The initial model is trained on a window drawn
/// before step 0; every later model is programmed into the same system.
pub fn run_drift_on(sc: &DriftScenario, system: &mut System) -> Result<Timeline, RecalError> {
    sc.validate()?;
    let mut src = Source {
        rng: ChaCha8Rng::seed_from_u64(sc.seed),
        noise: Normal::new(0.0, sc.std_dev).map_err(|e| RecalError::Scenario(e.to_string()))?,
        thresholds: sc.thresholds(),
    };
    let mut recent: Vec<(BoolVector, usize)> = (0..sc.window)
        .map(|_| src.sample(sc, 0))
        .collect::<Result<_, _>>()?;
    deploy(system, sc, &recent, sc.train.seed)?;

    let mut rows = Vec::with_capacity(sc.steps);
    for step in 0..sc.steps {
        let probe: Vec<(BoolVector, usize)> = (0..sc.probe_size)
            .map(|_| src.sample(sc, step))
            .collect::<Result<_, _>>()?;
        let points: Vec<BoolVector> = probe.iter().map(|(x, _)| x.clone()).collect();
        let run = system.run(&points)?;
        let correct = run
            .report
            .classifications
            .iter()
            .zip(&probe)
            .filter(|(c, (_, y))| *c == y)
            .count();
        let acc = correct as f64 / probe.len() as f64;

        recent.extend(probe);
        if recent.len() > sc.window {
            recent.drain(..recent.len() - sc.window);
        }

        let mut retuned = false;
        let mut error = None;
        if acc < sc.threshold {
            let seed = sc.train.seed.wrapping_add(step as u64 + 1);
            match deploy(system, sc, &recent, seed) {
                Ok(_) => retuned = true,
                Err(e) => error = Some(e.to_string()),
            }
        }
        rows.push(TimelineRow {
            step,
            accuracy: acc,
            generation: system.generation(),
            retuned,
            error,
        });
    }
    Ok(Timeline { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> SystemConfig {
        SystemConfig::balanced(1, Default::default())
    }

    #[test]
    fn validation() {
        assert!(DriftScenario::default().validate().is_ok());
        for sc in [
            DriftScenario { threshold: 1.0, ..Default::default() },
            DriftScenario { threshold: 0.0, ..Default::default() },
            DriftScenario { shift_step: Some(100), ..Default::default() },
            DriftScenario { window: 0, ..Default::default() },
        ] {
            assert!(matches!(sc.validate(), Err(RecalError::Scenario(_))));
        }
    }

    #[test]
    fn thermometer_covers_range() {
        let sc = DriftScenario::default();
        let t = sc.thresholds();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0].len(), 12);
        assert!(t[0].windows(2).all(|w| w[0] < w[1]));
        assert!(t[0][0] > sc.thermometer_lo && t[0][11] < sc.thermometer_hi);
    }

    #[test]
    fn no_shift_keeps_first_generation() {
        let sc = DriftScenario { shift_step: None, steps: 30, ..Default::default() };
        let tl = run_drift(&sc, sys()).unwrap();
        assert_eq!(tl.rows.len(), 30);
        assert!(tl.rows.iter().all(|r| r.generation == 1), "{}", tl.to_csv());
    }

    #[test]
    fn deterministic() {
        let sc = DriftScenario { steps: 8, shift_step: Some(4), ..Default::default() };
        assert_eq!(run_drift(&sc, sys()).unwrap(), run_drift(&sc, sys()).unwrap());
    }

    #[test]
    fn csv_shape() {
        let tl = Timeline {
            rows: vec![TimelineRow {
                step: 3,
                accuracy: 0.5,
                generation: 2,
                retuned: true,
                error: None,
            }],
        };
        assert_eq!(tl.to_csv(), "step,accuracy,generation\n3,0.5000,2\n");
    }
}
