//! On-disk formats. All integers are little-endian.
//!
//! * Model (`TMM1`): magic, `M`, `Cl`, `F` as `u32`, then one bit per
//!   automaton (1 = Include) in class/clause/literal order, LSB-first within
//!   each byte, zero-padded to a byte boundary. [`ModelJson`] mirrors it.
//! * Instructions (`TMI1`): magic, `M`, `Cl`, `F`, count as `u32`, then the
//!   packed `u16` words.
//! * Feature stream (`TMF1`): magic, one width byte (16/32/64), then raw bus
//!   beats of `width / 8` bytes each.
//! * Datasets: text, one datapoint per line as a `0`/`1` string, optionally
//!   followed by `,label`. Blank lines and `#` comments are skipped.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compress::InstructionStream;
use crate::model::{Architecture, BoolVector, ModelError, TmModel};
use crate::protocol::HeaderWidth;

pub const MODEL_MAGIC: &[u8; 4] = b"TMM1";
pub const INSTRUCTION_MAGIC: &[u8; 4] = b"TMI1";
pub const FEATURE_MAGIC: &[u8; 4] = b"TMF1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("invalid file contents: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn read_magic(r: &mut impl Read, expected: &[u8; 4]) -> Result<(), FormatError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != expected {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, FormatError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn to_u32(v: usize, what: &str) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::Invalid(format!("{what} {v} exceeds u32")))
}

fn read_arch(r: &mut impl Read) -> Result<Architecture, FormatError> {
    let m = read_u32(r)? as usize;
    let cl = read_u32(r)? as usize;
    let f = read_u32(r)? as usize;
    Ok(Architecture::new(m, cl, f)?)
}

fn write_arch(w: &mut impl Write, arch: Architecture) -> Result<(), FormatError> {
    for v in [arch.num_classes, arch.clauses_per_class, arch.num_features] {
        w.write_all(&to_u32(v, "dimension")?.to_le_bytes())?;
    }
    Ok(())
}

fn expect_eof(r: &mut impl Read) -> Result<(), FormatError> {
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(FormatError::Invalid("trailing bytes after payload".into()));
    }
    Ok(())
}

pub fn write_model(w: &mut impl Write, model: &TmModel) -> Result<(), FormatError> {
    w.write_all(MODEL_MAGIC)?;
    write_arch(w, model.arch())?;
    let mut bytes = vec![0u8; model.actions().len().div_ceil(8)];
    for (i, _) in model.actions().iter().enumerate().filter(|(_, &a)| a) {
        bytes[i / 8] |= 1 << (i % 8);
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_model(r: &mut impl Read) -> Result<TmModel, FormatError> {
    read_magic(r, MODEL_MAGIC)?;
    let arch = read_arch(r)?;
    let total = arch.total_tas();
    let mut bytes = vec![0u8; total.div_ceil(8)];
    r.read_exact(&mut bytes)?;
    expect_eof(r)?;
    if total % 8 != 0 && bytes[total / 8] >> (total % 8) != 0 {
        return Err(FormatError::Invalid("non-zero padding bits".into()));
    }
    let actions = (0..total).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
    Ok(TmModel::from_actions(arch, actions)?)
}

/// JSON mirror of the model file: one `0`/`1` string per clause, indexed
/// by literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelJson {
    pub num_classes: usize,
    pub clauses_per_class: usize,
    pub num_features: usize,
    pub actions: Vec<Vec<String>>,
}

impl From<&TmModel> for ModelJson {
    fn from(model: &TmModel) -> Self {
        let arch = model.arch();
        let actions = model
            .actions()
            .chunks(arch.clauses_per_class * arch.literal_count())
            .map(|class| {
                class
                    .chunks(arch.literal_count())
                    .map(|clause| clause.iter().map(|&a| if a { '1' } else { '0' }).collect())
                    .collect()
            })
            .collect();
        Self {
            num_classes: arch.num_classes,
            clauses_per_class: arch.clauses_per_class,
            num_features: arch.num_features,
            actions,
        }
    }
}

impl TryFrom<ModelJson> for TmModel {
    type Error = FormatError;

    fn try_from(j: ModelJson) -> Result<Self, FormatError> {
        let arch = Architecture::new(j.num_classes, j.clauses_per_class, j.num_features)?;
        if j.actions.len() != arch.num_classes
            || j.actions.iter().any(|c| c.len() != arch.clauses_per_class)
        {
            return Err(FormatError::Invalid("action array shape mismatch".into()));
        }
        let mut actions = Vec::with_capacity(arch.total_tas());
        for clause in j.actions.iter().flatten() {
            if clause.len() != arch.literal_count() {
                return Err(FormatError::Invalid(format!(
                    "clause string has {} literals, expected {}",
                    clause.len(),
                    arch.literal_count()
                )));
            }
            for ch in clause.chars() {
                actions.push(match ch {
                    '0' => false,
                    '1' => true,
                    other => {
                        return Err(FormatError::Invalid(format!("unexpected action {other:?}")))
                    }
                });
            }
        }
        Ok(TmModel::from_actions(arch, actions)?)
    }
}

pub fn write_model_json(w: &mut impl Write, model: &TmModel) -> Result<(), FormatError> {
    serde_json::to_writer_pretty(&mut *w, &ModelJson::from(model))?;
    writeln!(w)?;
    Ok(())
}

pub fn read_model_json(r: &mut impl Read) -> Result<TmModel, FormatError> {
    let j: ModelJson = serde_json::from_reader(r)?;
    j.try_into()
}

pub fn write_instructions(w: &mut impl Write, stream: &InstructionStream) -> Result<(), FormatError> {
    w.write_all(INSTRUCTION_MAGIC)?;
    write_arch(w, stream.arch)?;
    w.write_all(&to_u32(stream.words.len(), "instruction count")?.to_le_bytes())?;
    for word in &stream.words {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_instructions(r: &mut impl Read) -> Result<InstructionStream, FormatError> {
    read_magic(r, INSTRUCTION_MAGIC)?;
    let arch = read_arch(r)?;
    let count = read_u32(r)? as usize;
    let mut bytes = vec![0u8; count * 2];
    r.read_exact(&mut bytes)?;
    expect_eof(r)?;
    let words = bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    Ok(InstructionStream::new(arch, words))
}

pub fn write_feature_stream(
    w: &mut impl Write,
    width: HeaderWidth,
    beats: &[u64],
) -> Result<(), FormatError> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&[width.bits() as u8])?;
    let n = width.bits() as usize / 8;
    for &beat in beats {
        if width != HeaderWidth::W64 && beat >> width.bits() != 0 {
            return Err(FormatError::Invalid(format!(
                "beat {beat:#x} wider than {} bits",
                width.bits()
            )));
        }
        w.write_all(&beat.to_le_bytes()[..n])?;
    }
    Ok(())
}

pub fn read_feature_stream(r: &mut impl Read) -> Result<(HeaderWidth, Vec<u64>), FormatError> {
    read_magic(r, FEATURE_MAGIC)?;
    let mut width = [0u8; 1];
    r.read_exact(&mut width)?;
    let width = HeaderWidth::from_bits(u32::from(width[0]))
        .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let n = width.bits() as usize / 8;
    if rest.len() % n != 0 {
        return Err(FormatError::Invalid(format!(
            "{} payload bytes is not a whole number of {n}-byte beats",
            rest.len()
        )));
    }
    let beats = rest
        .chunks_exact(n)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..n].copy_from_slice(c);
            u64::from_le_bytes(b)
        })
        .collect();
    Ok((width, beats))
}

/// One dataset row: a datapoint and its label, if any.
pub type Row = (BoolVector, Option<usize>);

pub fn parse_dataset(text: &str) -> Result<Vec<Row>, FormatError> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| FormatError::Invalid(format!("line {}: {msg}", n + 1));
        let (bits, label) = match line.split_once(',') {
            Some((b, l)) => {
                let l = l.trim();
                let label = if l.is_empty() {
                    None
                } else {
                    Some(l.parse::<usize>().map_err(|e| bad(format!("label: {e}")))?)
                };
                (b.trim(), label)
            }
            None => (line, None),
        };
        let features = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(bad(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((BoolVector::new(features)?, label));
    }
    if let Some(f) = rows.first().map(|(x, _)| x.len()) {
        if let Some(i) = rows.iter().position(|(x, _)| x.len() != f) {
            return Err(FormatError::Invalid(format!(
                "row {i} has {} features, first row has {f}",
                rows[i].0.len()
            )));
        }
    }
    Ok(rows)
}

pub fn format_dataset(rows: &[Row]) -> String {
    let mut out = String::new();
    for (x, label) in rows {
        out.extend(x.as_slice().iter().map(|&b| if b { '1' } else { '0' }));
        if let Some(l) = label {
            out.push(',');
            out.push_str(&l.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn load_model(path: &Path) -> Result<TmModel, FormatError> {
    read_model(&mut io::BufReader::new(fs::File::open(path)?))
}

pub fn save_model(path: &Path, model: &TmModel) -> Result<(), FormatError> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_instructions(path: &Path) -> Result<InstructionStream, FormatError> {
    read_instructions(&mut io::BufReader::new(fs::File::open(path)?))
}

pub fn save_instructions(path: &Path, stream: &InstructionStream) -> Result<(), FormatError> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    write_instructions(&mut w, stream)?;
    w.flush()?;
    Ok(())
}

pub fn load_feature_stream(path: &Path) -> Result<(HeaderWidth, Vec<u64>), FormatError> {
    read_feature_stream(&mut io::BufReader::new(fs::File::open(path)?))
}

pub fn save_feature_stream(path: &Path, width: HeaderWidth, beats: &[u64]) -> Result<(), FormatError> {
    let mut w = io::BufWriter::new(fs::File::create(path)?);
    write_feature_stream(&mut w, width, beats)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<Row>, FormatError> {
    parse_dataset(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compress::encode;

    fn model() -> TmModel {
        let mut m = TmModel::new(Architecture::new(2, 2, 3).unwrap());
        m.set_include(0, 0, 0, true).unwrap();
        m.set_include(0, 1, 5, true).unwrap();
        m.set_include(1, 0, 2, true).unwrap();
        m
    }

    #[test]
    fn model_file_layout() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        assert_eq!(&buf[..4], b"TMM1");
        assert_eq!(&buf[4..16], &[2, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        // 24 TAs -> 3 bytes; bits 0, 6+5=11, 12+2=14
        assert_eq!(&buf[16..], &[0b0000_0001, 0b0100_1000, 0]);
        assert_eq!(read_model(&mut buf.as_slice()).unwrap(), model());
    }

    #[test]
    fn model_file_rejects_garbage() {
        assert!(matches!(
            read_model(&mut &b"XXXX"[..]),
            Err(FormatError::BadMagic { .. })
        ));
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        assert!(read_model(&mut &buf[..buf.len() - 1]).is_err());
        buf.push(0);
        assert!(matches!(read_model(&mut buf.as_slice()), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn json_mirror() {
        let mut buf = Vec::new();
        write_model_json(&mut buf, &model()).unwrap();
        let j: ModelJson = serde_json::from_slice(&buf).unwrap();
        assert_eq!(j.actions[0][1], "000001");
        assert_eq!(read_model_json(&mut buf.as_slice()).unwrap(), model());
    }

    #[test]
    fn instruction_file_layout() {
        let s = encode(&model()).unwrap();
        let mut buf = Vec::new();
        write_instructions(&mut buf, &s).unwrap();
        assert_eq!(&buf[..4], b"TMI1");
        assert_eq!(&buf[16..20], &[3, 0, 0, 0]);
        assert_eq!(&buf[20..22], &s.words[0].to_le_bytes());
        assert_eq!(buf.len(), 20 + 6);
        assert_eq!(read_instructions(&mut buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn feature_file_widths() {
        for (width, beats) in [
            (HeaderWidth::W16, vec![0xC002u64, 1, 0xffff, 0]),
            (HeaderWidth::W32, vec![0xC002_0001, 0xdead_beef]),
            (HeaderWidth::W64, vec![u64::MAX, 7]),
        ] {
            let mut buf = Vec::new();
            write_feature_stream(&mut buf, width, &beats).unwrap();
            assert_eq!(buf[4], width.bits() as u8);
            assert_eq!(buf.len(), 5 + beats.len() * width.bits() as usize / 8);
            assert_eq!(read_feature_stream(&mut buf.as_slice()).unwrap(), (width, beats));
        }
        let mut buf = Vec::new();
        assert!(write_feature_stream(&mut buf, HeaderWidth::W16, &[0x1_0000]).is_err());
    }

    #[test]
    fn dataset_text() {
        let rows = parse_dataset("# xor\n00,0\n01,1\n\n10\n").unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].1, Some(1));
        assert_eq!(rows[2].1, None);
        assert_eq!(format_dataset(&rows), "00,0\n01,1\n10\n");
        assert!(parse_dataset("012\n").is_err());
        assert!(parse_dataset("01\n011\n").is_err());
        assert!(parse_dataset("01,x\n").is_err());
    }
}
