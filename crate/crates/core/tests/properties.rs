mod common;

use common::{oracle, random_arch, random_model, random_points};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tmaccel::compress::{compression_report, decode, encode};
use tmaccel::emu::{cycle_model, feature_beats};
use tmaccel::protocol::{decode_header, encode_header, parse_packets, FeatureBatch, StreamPacket};
use tmaccel::{
    Architecture, BoolVector, Core, CoreConfig, Header, HeaderWidth, IncludeInstruction, System,
    SystemConfig, TmModel,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn width() -> impl Strategy<Value = HeaderWidth> {
    prop_oneof![Just(HeaderWidth::W16), Just(HeaderWidth::W32), Just(HeaderWidth::W64)]
}

fn core(width: HeaderWidth) -> Core {
    Core::new(CoreConfig { header_width: width, ..CoreConfig::default() }).unwrap()
}

fn field_limits(width: HeaderWidth, feature: bool) -> Vec<u64> {
    let bits: &[u32] = match (width, feature) {
        (HeaderWidth::W16, false) => &[14, 14, 14],
        (HeaderWidth::W16, true) => &[14, 14],
        (HeaderWidth::W32, false) => &[6, 8, 16],
        (HeaderWidth::W32, true) => &[14, 16],
        (HeaderWidth::W64, false) => &[12, 16, 32],
        (HeaderWidth::W64, true) => &[28, 32],
    };
    bits.iter().map(|&b| 1u64 << b).collect()
}

fn valid_header() -> impl Strategy<Value = (HeaderWidth, Header)> {
    (width(), any::<bool>(), any::<[u64; 3]>()).prop_map(|(w, feature, raw)| {
        let lim = field_limits(w, feature);
        let v: Vec<u32> = lim.iter().zip(raw).map(|(&l, r)| (r % l) as u32).collect();
        let h = if feature {
            Header::feature(v[0], v[1])
        } else {
            Header::instruction(v[0], v[1], v[2])
        };
        (w, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn architecture_counts(m in 1usize..20, half in 1usize..100, f in 1usize..=4096) {
        let a = Architecture::new(m, 2 * half, f).unwrap();
        prop_assert_eq!(a.literal_count(), 2 * f);
        prop_assert_eq!(a.total_clauses(), m * 2 * half);
        prop_assert_eq!(a.total_tas(), m * 2 * half * 2 * f);
    }

    #[test]
    fn odd_or_zero_clause_counts_rejected(m in 1usize..10, cl in 0usize..50, f in 1usize..64) {
        prop_assume!(cl % 2 == 1 || cl == 0);
        prop_assert!(Architecture::new(m, cl, f).is_err());
    }

    #[test]
    fn include_only_evaluation_matches_literal_conjunction(seed: u64) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 4, 8, 10);
        let m = TmModel::random_sparse(arch, 0.15, &mut r);
        for x in random_points(&mut r, arch.num_features, 16) {
            let sums = m.class_sums(&x).unwrap();
            for k in 0..arch.num_classes {
                let mut expected = 0;
                for j in 0..arch.clauses_per_class {
                    let inc = m.clause_includes(k, j).unwrap();
                    let fires = !inc.is_empty() && inc.iter().all(|&l| x.literal(l).unwrap());
                    if fires {
                        expected += if j % 2 == 0 { 1 } else { -1 };
                    }
                }
                prop_assert_eq!(sums.0[k], expected);
            }
            let best = *sums.0.iter().max().unwrap();
            let first = sums.0.iter().position(|&s| s == best).unwrap();
            prop_assert_eq!(m.predict(&x).unwrap(), first);
        }
    }

    #[test]
    fn compaction_preserves_votes(seed: u64) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 4, 12, 8);
        let m = TmModel::random_sparse(arch, 0.1, &mut r);
        let c = m.compact_clauses();
        prop_assert_eq!(c.include_count(), m.include_count());
        prop_assert_eq!(c.compact_clauses(), c.clone());
        for x in random_points(&mut r, arch.num_features, 16) {
            prop_assert_eq!(m.class_sums(&x).unwrap(), c.class_sums(&x).unwrap());
        }
    }

    #[test]
    fn codec_round_trip(seed: u64, density in 0.01f64..0.6) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 6, 16, 40);
        let m = random_model(&mut r, arch, density);
        let s = encode(&m).unwrap();
        prop_assert_eq!(s.words.len(), m.include_count());
        let d = decode(&s).unwrap();
        prop_assert_eq!(&d, &m.compact_clauses());
        let has_empty = (0..arch.num_classes)
            .any(|k| (0..arch.clauses_per_class).any(|j| m.clause_includes(k, j).unwrap().is_empty()));
        if !has_empty {
            prop_assert_eq!(&d, &m);
        }
        prop_assert_eq!(encode(&d).unwrap(), s);
    }

    #[test]
    fn instruction_pack_bijection(word: u16) {
        prop_assert_eq!(IncludeInstruction::unpack(word).pack(), word);
    }

    #[test]
    fn compression_ratio_formula(includes in 0usize..100_000, extra in 1usize..1_000_000) {
        let total = includes + extra;
        let rep = tmaccel::compress::CompressionReport::from_counts(includes, total);
        prop_assert_eq!(rep.instruction_bytes, 2 * includes);
        prop_assert_eq!(rep.dense_state_bytes, total);
        prop_assert!((rep.ratio - (1.0 - 2.0 * includes as f64 / total as f64)).abs() < 1e-12);
    }

    #[test]
    fn header_bijection((w, h) in valid_header()) {
        let beats = encode_header(&h, w).unwrap();
        prop_assert_eq!(beats.len(), Header::beats(w, h.is_feature()));
        prop_assert!(beats.iter().all(|&b| w == HeaderWidth::W64 || b >> w.bits() == 0));
        prop_assert_eq!(decode_header(&beats, w).unwrap(), (h, beats.len()));
    }

    #[test]
    fn transposition_round_trip(seed: u64, n in 1usize..=32, f in 1usize..200) {
        let mut r = rng(seed);
        let pts = random_points(&mut r, f, n);
        let batch = FeatureBatch::from_datapoints(&pts).unwrap();
        prop_assert_eq!(batch.words.len(), f);
        prop_assert_eq!(batch.lanes(n).unwrap(), pts.clone());
        for l in n..32 {
            prop_assert!(batch.lane(l).unwrap().as_slice().iter().all(|&b| !b));
        }
    }

    #[test]
    fn packets_round_trip(seed: u64, w in width()) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 4, 8, 20);
        let s = encode(&random_model(&mut r, arch, 0.1)).unwrap();
        let mut beats = StreamPacket::instructions(&s).unwrap().to_beats(w).unwrap();
        let n = r.random_range(1usize..80);
        let pts = random_points(&mut r, arch.num_features, n);
        beats.extend(feature_beats(&pts, w).unwrap());
        let packets = parse_packets(&beats, w).unwrap();
        prop_assert_eq!(packets.len(), 2);
        let mut again = Vec::new();
        for p in &packets {
            again.extend(p.to_beats(w).unwrap());
        }
        prop_assert_eq!(again, beats);
    }

    #[test]
    fn emulator_matches_oracle(seed: u64, w in width()) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 8, 16, 48);
        let m = random_model(&mut r, arch, 0.05);
        let n = r.random_range(1usize..100);
        let pts = random_points(&mut r, arch.num_features, n);
        let mut c = core(w);
        c.program(&encode(&m).unwrap()).unwrap();
        prop_assert_eq!(c.infer(&pts).unwrap().classifications, oracle(&m, &pts));
    }

    #[test]
    fn lanes_are_independent(seed: u64, lane in 0usize..32) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 5, 10, 16);
        let m = random_model(&mut r, arch, 0.1);
        let mut c = core(HeaderWidth::W32);
        c.program(&encode(&m).unwrap()).unwrap();
        let mut a = random_points(&mut r, arch.num_features, 32);
        let b = random_points(&mut r, arch.num_features, 32);
        let first = c.infer(&a).unwrap().classifications[lane];
        let x = a[lane].clone();
        a = b;
        a[lane] = x;
        prop_assert_eq!(c.infer(&a).unwrap().classifications[lane], first);
    }

    #[test]
    fn cycles_follow_model(seed: u64, w in width()) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 8, 16, 32);
        let m = random_model(&mut r, arch, 0.05);
        let s = encode(&m).unwrap();
        let n = r.random_range(1usize..130);
        let pts = random_points(&mut r, arch.num_features, n);
        let mut c = core(w);
        c.program(&s).unwrap();
        let load = feature_beats(&pts, w).unwrap().len() as u64;
        let rep = c.infer(&pts).unwrap();
        let expected = cycle_model(s.words.len() as u64, arch.num_classes as u64, load, n.div_ceil(32) as u64);
        prop_assert_eq!(rep.cycles, expected);
    }

    #[test]
    fn multi_core_matches_single_core(seed: u64, cores in 1usize..9) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 10, 8, 24);
        let m = random_model(&mut r, arch, 0.08);
        let s = encode(&m).unwrap();
        let n = r.random_range(1usize..70);
        let pts = random_points(&mut r, arch.num_features, n);

        let mut one = System::new(SystemConfig::balanced(1, CoreConfig::default())).unwrap();
        let mut many = System::new(SystemConfig::balanced(cores, CoreConfig::default())).unwrap();
        one.program(&s).unwrap();
        many.program(&s).unwrap();
        let a = one.run(&pts).unwrap();
        let b = many.run(&pts).unwrap();
        prop_assert_eq!(&a.report.classifications, &oracle(&m, &pts));
        prop_assert_eq!(&b.report.classifications, &a.report.classifications);
        let active = b.core_cycles.iter().filter(|&&c| c > 0).count();
        let merge = if active > 1 { pts.len().div_ceil(32) as u64 * arch.num_classes as u64 } else { 0 };
        prop_assert_eq!(b.report.cycles, b.core_cycles.iter().max().unwrap() + merge);
        let mut c = core(HeaderWidth::W32);
        c.program(&s).unwrap();
        prop_assert_eq!(c.infer(&pts).unwrap().cycles, a.report.cycles);
        // a partition never costs more than the whole model; the merge can outweigh the saving
        prop_assert!(b.core_cycles.iter().all(|&c| c <= a.report.cycles));
    }

    #[test]
    fn generations_are_monotone(seed: u64, programs in 1usize..6) {
        let mut r = rng(seed);
        let mut sys = System::new(SystemConfig::balanced(3, CoreConfig::default())).unwrap();
        let mut last = 0;
        for _ in 0..programs {
            let arch = random_arch(&mut r, 6, 8, 12);
            let m = random_model(&mut r, arch, 0.1);
            let g = sys.program(&encode(&m).unwrap()).unwrap();
            prop_assert_eq!(g, last + 1);
            last = g;
            let pts = random_points(&mut r, arch.num_features, 40);
            let run = sys.run(&pts).unwrap();
            prop_assert_eq!(run.generation, g);
            prop_assert_eq!(run.report.classifications, oracle(&m, &pts));
        }
        // a rejected stream leaves the live model and generation alone
        prop_assert!(sys.reprogram(&[0x8000_0000]).is_err());
        prop_assert_eq!(sys.generation(), last);
    }

    #[test]
    fn booleanize_is_monotone(raw in proptest::collection::vec(-10.0f64..10.0, 1..6)) {
        let th: Vec<Vec<f64>> = raw.iter().map(|_| vec![-5.0, 0.0, 5.0]).collect();
        let x = tmaccel::model::booleanize(&raw, &th).unwrap();
        prop_assert_eq!(x.len(), 3 * raw.len());
        for d in 0..raw.len() {
            let s = &x.as_slice()[3 * d..3 * d + 3];
            // thermometer code: once a level is off, every higher level is off
            prop_assert!(s.windows(2).all(|p| p[0] || !p[1]));
        }
    }

    #[test]
    fn compression_of_random_models_in_range(seed: u64) {
        let mut r = rng(seed);
        let arch = random_arch(&mut r, 4, 8, 16);
        let m = random_model(&mut r, arch, 0.05);
        let rep = compression_report(&m);
        prop_assert_eq!(rep.include_count, m.include_count());
        prop_assert!(rep.ratio <= 1.0 && rep.ratio >= -1.0);
    }
}

#[test]
fn empty_point_set_is_rejected() {
    let pts: Vec<BoolVector> = Vec::new();
    assert!(feature_beats(&pts, HeaderWidth::W32).is_err());
}
