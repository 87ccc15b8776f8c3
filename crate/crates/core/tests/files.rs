mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tmaccel::compress::encode;
use tmaccel::emu::feature_beats;
use tmaccel::formats::*;
use tmaccel::{Architecture, HeaderWidth};

#[test]
fn model_instruction_and_feature_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = Architecture::new(3, 6, 13).unwrap();
    let model = common::random_model(&mut rng, arch, 0.1);

    let mp = dir.path().join("m.tmm");
    save_model(&mp, &model).unwrap();
    assert_eq!(load_model(&mp).unwrap(), model);

    let stream = encode(&model).unwrap();
    let ip = dir.path().join("m.tmi");
    save_instructions(&ip, &stream).unwrap();
    assert_eq!(load_instructions(&ip).unwrap(), stream);

    let pts = common::random_points(&mut rng, 13, 40);
    for w in [HeaderWidth::W16, HeaderWidth::W32, HeaderWidth::W64] {
        let beats = feature_beats(&pts, w).unwrap();
        let fp = dir.path().join("f.tmf");
        save_feature_stream(&fp, w, &beats).unwrap();
        assert_eq!(load_feature_stream(&fp).unwrap(), (w, beats));
    }
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_model(&dir.path().join("absent")).unwrap_err();
    assert!(matches!(err, FormatError::Io(_)));
}

#[test]
fn wrong_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x");
    std::fs::write(&p, b"TMI1\0\0\0\0").unwrap();
    assert!(matches!(load_model(&p), Err(FormatError::BadMagic { .. })));
}
