#![allow(dead_code)]

use rand::Rng;
use tmaccel::{Architecture, BoolVector, TmModel};

/// Random sparse model in which every class has at least one Include.
pub fn random_model<R: Rng>(rng: &mut R, arch: Architecture, density: f64) -> TmModel {
    let mut m = TmModel::random_sparse(arch, density, rng);
    for k in 0..arch.num_classes {
        if m.class_include_count(k).unwrap() == 0 {
            let j = rng.random_range(0..arch.clauses_per_class);
            let l = rng.random_range(0..arch.literal_count());
            m.set_include(k, j, l, true).unwrap();
        }
    }
    m
}

pub fn random_arch<R: Rng>(rng: &mut R, max_m: usize, max_cl: usize, max_f: usize) -> Architecture {
    let m = rng.random_range(1..=max_m);
    let cl = 2 * rng.random_range(1..=max_cl / 2);
    let f = rng.random_range(1..=max_f);
    Architecture::new(m, cl, f).unwrap()
}

pub fn random_points<R: Rng>(rng: &mut R, f: usize, n: usize) -> Vec<BoolVector> {
    (0..n)
        .map(|_| BoolVector::new((0..f).map(|_| rng.random_bool(0.5)).collect()).unwrap())
        .collect()
}

/// All `2^f` inputs, feature 0 as the least significant bit.
pub fn all_inputs(f: usize) -> Vec<BoolVector> {
    (0..1u32 << f)
        .map(|v| BoolVector::new((0..f).map(|i| v >> i & 1 == 1).collect()).unwrap())
        .collect()
}

pub fn oracle(model: &TmModel, points: &[BoolVector]) -> Vec<usize> {
    points.iter().map(|p| model.predict(p).unwrap()).collect()
}
