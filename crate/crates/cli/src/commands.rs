use std::fs;
use std::path::Path;

use tmaccel::compress::{compression_report, decode, encode};
use tmaccel::emu::feature_beats;
use tmaccel::formats::{self, Row};
use tmaccel::model::booleanize as booleanize_point;
use tmaccel::protocol::{parse_packets, FeatureBatch, HeaderKind, Payload, BATCH_LANES};
use tmaccel::recal::{run_drift, DriftScenario};
use tmaccel::system::SystemRun;
use tmaccel::{
    trainer, Architecture, BoolVector, HeaderWidth, InstructionStream, System, SystemConfig,
    TmModel, TrainConfig,
};

use crate::config::RunConfig;
use crate::{
    BenchArgs, BooleanizeArgs, CliError, CompressArgs, DecompressArgs, EmulateArgs,
    InferDenseArgs, InputArgs, PackFeaturesArgs, RecalArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn with_path(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> Result<TmModel> {
    let loaded = if is_json(path) {
        fs::File::open(path)
            .map_err(Into::into)
            .and_then(|mut f| formats::read_model_json(&mut f))
    } else {
        formats::load_model(path)
    };
    loaded.map_err(|e| with_path(path, e))
}

fn save_model(path: &Path, model: &TmModel) -> Result<()> {
    let saved = if is_json(path) {
        fs::File::create(path)
            .map_err(Into::into)
            .and_then(|mut f| formats::write_model_json(&mut f, model))
    } else {
        formats::save_model(path, model)
    };
    saved.map_err(|e| with_path(path, e))
}

fn load_dataset(path: &Path) -> Result<Vec<Row>> {
    let rows = formats::load_dataset(path).map_err(|e| with_path(path, e))?;
    if rows.is_empty() {
        return Err(with_path(path, "no datapoints"));
    }
    Ok(rows)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| with_path(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn classes_text(classes: &[usize]) -> String {
    classes.iter().map(|c| format!("{c}\n")).collect()
}

pub fn booleanize(a: &BooleanizeArgs) -> Result<()> {
    if a.levels == 0 {
        return Err(CliError::Input("--levels must be >= 1".into()));
    }
    let text = fs::read_to_string(&a.input).map_err(|e| with_path(&a.input, e))?;
    let mut raw: Vec<(Vec<f64>, Option<usize>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| with_path(&a.input, format!("line {}: {msg}", n + 1));
        let mut cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let label = if a.labeled {
            let l = cells.pop().unwrap_or_default();
            Some(l.parse::<usize>().map_err(|e| bad(format!("label {l:?}: {e}")))?)
        } else {
            None
        };
        let values = cells
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| bad(format!("value {c:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad("no feature columns".into()));
        }
        if let Some((first, _)) = raw.first() {
            if first.len() != values.len() {
                return Err(bad(format!("{} columns, expected {}", values.len(), first.len())));
            }
        }
        raw.push((values, label));
    }
    let Some(dims) = raw.first().map(|(v, _)| v.len()) else {
        return Err(with_path(&a.input, "no rows"));
    };
    let thresholds: Vec<Vec<f64>> = (0..dims)
        .map(|d| {
            let (lo, hi) = raw
                .iter()
                .map(|(v, _)| v[d])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            (0..a.levels)
                .map(|i| lo + (hi - lo) * (i + 1) as f64 / (a.levels + 1) as f64)
                .collect()
        })
        .collect();
    let rows = raw
        .iter()
        .map(|(v, label)| Ok((booleanize_point(v, &thresholds)?, *label)))
        .collect::<Result<Vec<Row>>>()?;
    fs::write(&a.output, formats::format_dataset(&rows)).map_err(|e| with_path(&a.output, e))?;
    println!("{} rows, {} features", rows.len(), dims * a.levels);
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let rows = load_dataset(&a.data)?;
    let data = rows
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| {
            y.map(|y| (x, y))
                .ok_or_else(|| with_path(&a.data, format!("row {i} has no label")))
        })
        .collect::<Result<Vec<_>>>()?;
    let classes = a
        .classes
        .unwrap_or_else(|| data.iter().map(|(_, y)| y + 1).max().unwrap_or(1));
    let arch = Architecture::new(classes, a.clauses, data[0].0.len())?;
    let cfg = TrainConfig {
        specificity: a.specificity,
        threshold: a.threshold,
        states_per_action: a.states,
        epochs: a.epochs,
        seed: a.seed,
    };
    let model = trainer::train(&data, arch, &cfg)?;
    save_model(&a.output, &model)?;
    println!("training accuracy {:.4}", trainer::accuracy(&model, &data));
    println!(
        "includes {} of {} automata ({:.4})",
        model.include_count(),
        arch.total_tas(),
        model.sparsity()
    );
    Ok(())
}

pub fn compress(a: &CompressArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let stream = encode(&model)?;
    formats::save_instructions(&a.output, &stream).map_err(|e| with_path(&a.output, e))?;
    let r = compression_report(&model);
    println!("include_count {}", r.include_count);
    println!("instruction_bytes {}", r.instruction_bytes);
    println!("dense_state_bytes {}", r.dense_state_bytes);
    println!("ratio {:.4}", r.ratio);
    if r.ratio < 0.0 {
        eprintln!(
            "warning: instruction stream ({} bytes) is larger than the dense model ({} bytes)",
            r.instruction_bytes, r.dense_state_bytes
        );
    }
    Ok(())
}

pub fn decompress(a: &DecompressArgs) -> Result<()> {
    let stream =
        formats::load_instructions(&a.instructions).map_err(|e| with_path(&a.instructions, e))?;
    let model = decode(&stream)?;
    save_model(&a.output, &model)?;
    println!("{} instructions -> {} includes", stream.words.len(), model.include_count());
    Ok(())
}

pub fn infer_dense(a: &InferDenseArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let rows = load_dataset(&a.data)?;
    let classes = rows
        .iter()
        .map(|(x, _)| model.predict(x))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_text(a.output.as_deref(), &classes_text(&classes))?;
    if rows.iter().all(|(_, y)| y.is_some()) {
        let correct = rows
            .iter()
            .zip(&classes)
            .filter(|((_, y), c)| *y == Some(**c))
            .count();
        eprintln!("accuracy {:.4}", correct as f64 / rows.len() as f64);
    }
    Ok(())
}

pub fn pack_features(a: &PackFeaturesArgs) -> Result<()> {
    let width = HeaderWidth::from_bits(a.width).map_err(|e| CliError::Input(e.to_string()))?;
    let points: Vec<BoolVector> = load_dataset(&a.data)?.into_iter().map(|(x, _)| x).collect();
    let beats = feature_beats(&points, width)?;
    formats::save_feature_stream(&a.output, width, &beats).map_err(|e| with_path(&a.output, e))?;
    println!(
        "{} datapoints, {} batches, {} beats",
        points.len(),
        points.len().div_ceil(BATCH_LANES),
        beats.len()
    );
    Ok(())
}

struct Prepared {
    stream: InstructionStream,
    config: RunConfig,
    points: Vec<BoolVector>,
}

/// Every lane of every batch in a feature stream file.
fn points_from_stream(path: &Path, expected: HeaderWidth) -> Result<Vec<BoolVector>> {
    let (width, beats) = formats::load_feature_stream(path).map_err(|e| with_path(path, e))?;
    if width != expected {
        return Err(CliError::Hardware(format!(
            "{}: stream uses a {}-bit bus, configuration expects {} bits",
            path.display(),
            width.bits(),
            expected.bits()
        )));
    }
    let mut points = Vec::new();
    for packet in parse_packets(&beats, width)? {
        let (HeaderKind::Feature { words_per_batch, .. }, Payload::Features(words)) =
            (packet.header.kind, &packet.payload)
        else {
            return Err(CliError::Hardware(format!(
                "{}: feature file holds a non-feature packet",
                path.display()
            )));
        };
        if words_per_batch == 0 {
            return Err(CliError::Hardware(format!("{}: empty feature batch", path.display())));
        }
        for chunk in words.chunks(words_per_batch as usize) {
            points.extend(FeatureBatch { words: chunk.to_vec() }.lanes(BATCH_LANES)?);
        }
    }
    if points.is_empty() {
        return Err(with_path(path, "no feature batches"));
    }
    Ok(points)
}

fn prepare(a: &InputArgs) -> Result<Prepared> {
    let stream =
        formats::load_instructions(&a.instructions).map_err(|e| with_path(&a.instructions, e))?;
    let mut config = match &a.config {
        Some(p) => RunConfig::load(p).map_err(CliError::Input)?,
        None => RunConfig::default(),
    };
    if let Some(n) = a.cores {
        if n == 0 {
            return Err(CliError::Input("--cores must be >= 1".into()));
        }
        config.cores = n;
    }
    let points = match (&a.features, &a.datapoints) {
        (Some(f), _) => points_from_stream(f, config.core.header_width)?,
        (None, Some(d)) => load_dataset(d)?.into_iter().map(|(x, _)| x).collect(),
        (None, None) => return Err(CliError::Input("no input datapoints".into())),
    };
    Ok(Prepared {
        stream,
        config,
        points,
    })
}

fn programmed_system(p: &Prepared) -> Result<System> {
    let mut sys = System::new(SystemConfig::balanced(p.config.cores, p.config.core))?;
    sys.program(&p.stream)?;
    Ok(sys)
}

pub fn emulate(a: &EmulateArgs) -> Result<()> {
    let p = prepare(&a.input)?;
    let run = programmed_system(&p)?.run(&p.points)?;
    let classes = &run.report.classifications;
    if a.verify {
        let model = decode(&p.stream)?;
        let mut mismatches = Vec::new();
        for (i, (x, &got)) in p.points.iter().zip(classes).enumerate() {
            let want = model.predict(x)?;
            if want != got {
                mismatches.push((i, got, want));
            }
        }
        if let Some(&(i, got, want)) = mismatches.first() {
            return Err(CliError::Verify(format!(
                "{} of {} classifications differ; datapoint {i}: emulator {got}, dense model {want}",
                mismatches.len(),
                classes.len()
            )));
        }
    }
    write_text(a.output.as_deref(), &classes_text(classes))?;
    if let Some(path) = &a.report {
        let csv = format!("{}\n{}\n", SystemRun::csv_header(p.config.cores), run.csv_row(0));
        fs::write(path, csv).map_err(|e| with_path(path, e))?;
    }
    eprintln!(
        "{} datapoints, {} cycles, {:.3} us, {:.3} uJ{}",
        run.report.datapoints,
        run.report.cycles,
        run.report.latency_s * 1e6,
        run.report.energy_j * 1e6,
        if a.verify { ", verified" } else { "" }
    );
    Ok(())
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.repetitions == 0 {
        return Err(CliError::Input("--repetitions must be >= 1".into()));
    }
    let p = prepare(&a.input)?;
    let mut sys = programmed_system(&p)?;
    let mut csv = format!("{}\n", SystemRun::csv_header(p.config.cores));
    for rep in 0..a.repetitions {
        csv.push_str(&sys.run(&p.points)?.csv_row(rep));
        csv.push('\n');
    }
    write_text(a.output.as_deref(), &csv)
}

pub fn recal_demo(a: &RecalArgs) -> Result<()> {
    let scenario = DriftScenario {
        seed: a.seed,
        steps: a.steps,
        shift_step: (!a.no_shift).then_some(a.shift_step),
        shift: a.shift,
        threshold: a.threshold,
        label_noise: a.noise,
        window: a.window,
        ..DriftScenario::default()
    };
    if a.cores == 0 {
        return Err(CliError::Input("--cores must be >= 1".into()));
    }
    let timeline = run_drift(&scenario, SystemConfig::balanced(a.cores, Default::default()))?;
    for row in &timeline.rows {
        if let Some(e) = &row.error {
            eprintln!(
                "step {}: retraining failed ({e}); keeping generation {}",
                row.step, row.generation
            );
        }
    }
    write_text(a.output.as_deref(), &timeline.to_csv())?;
    eprintln!("final generation {}", timeline.final_generation());
    Ok(())
}
