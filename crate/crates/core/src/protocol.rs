//! Programming and data stream format.
//!
//! Every packet starts with a header. The header MSB (`NEW`) marks the start
//! of a new stream and resets the accelerator; the bit below it selects the
//! payload type (0 = Include instructions, 1 = Boolean features).
//!
//! Header layouts per configured bus width:
//!
//! | width | instruction header                              | feature header                      |
//! |-------|-------------------------------------------------|-------------------------------------|
//! | 32    | `[29:24]` classes, `[23:16]` clauses, `[15:0]` instructions | `[29:16]` words/batch, `[15:0]` batches |
//! | 64    | `[59:48]` classes, `[47:32]` clauses, `[31:0]` instructions | `[59:32]` words/batch, `[31:0]` batches |
//! | 16    | 3 beats, one 14-bit field each                  | 2 beats, one 14-bit field each      |
//!
//! Bits `[61:60]` of a 64-bit header and bits `[15:14]` of a 16-bit
//! extension beat are reserved and must be zero.
//!
//! Payload beats: one instruction per beat (zero-extended); one 32-bit
//! feature word per beat on 32/64-bit buses, two beats (low half first) on
//! a 16-bit bus. Within a feature word, bit `b` is lane `b`, i.e. datapoint
//! `b` of the batch.

use thiserror::Error;

use crate::compress::InstructionStream;
use crate::model::{BoolVector, ModelError};

/// Datapoints processed together, one per bit of a feature word.
pub const BATCH_LANES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("unsupported header width {0}")]
    UnsupportedWidth(u32),
    #[error("{field} = {value} does not fit the {bits}-bit header field")]
    HeaderOverflow {
        field: &'static str,
        value: u64,
        bits: u32,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("beat {value:#x} wider than the {width}-bit bus")]
    BeatOverflow { value: u64, width: u32 },
    #[error("payload word where a header was expected (payload exceeds declared count)")]
    UnexpectedPayload,
    #[error("header arrived with {remaining} payload words still outstanding")]
    PrematureHeader { remaining: usize },
    #[error("stream ended inside a packet")]
    Truncated,
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("payload has {got} words, header declares {declared}")]
    PayloadLength { declared: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderWidth {
    W16,
    W32,
    W64,
}

impl HeaderWidth {
    pub fn from_bits(bits: u32) -> Result<Self, ProtocolError> {
        match bits {
            16 => Ok(Self::W16),
            32 => Ok(Self::W32),
            64 => Ok(Self::W64),
            other => Err(ProtocolError::UnsupportedWidth(other)),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Self::W16 => 16,
            Self::W32 => 32,
            Self::W64 => 64,
        }
    }

    fn mask(self) -> u64 {
        match self {
            Self::W64 => u64::MAX,
            w => (1u64 << w.bits()) - 1,
        }
    }

    /// Beats carrying one 32-bit feature word.
    pub fn beats_per_feature_word(self) -> usize {
        match self {
            Self::W16 => 2,
            _ => 1,
        }
    }

    fn new_bit(self) -> u64 {
        1 << (self.bits() - 1)
    }

    fn type_bit(self) -> u64 {
        1 << (self.bits() - 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderKind {
    Instruction {
        num_classes: u32,
        num_clauses: u32,
        num_instructions: u32,
    },
    Feature {
        words_per_batch: u32,
        batch_count: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Header {
    pub new_stream: bool,
    pub kind: HeaderKind,
}

impl Header {
    pub fn instruction(num_classes: u32, num_clauses: u32, num_instructions: u32) -> Self {
        Self {
            new_stream: true,
            kind: HeaderKind::Instruction {
                num_classes,
                num_clauses,
                num_instructions,
            },
        }
    }

    pub fn feature(words_per_batch: u32, batch_count: u32) -> Self {
        Self {
            new_stream: true,
            kind: HeaderKind::Feature {
                words_per_batch,
                batch_count,
            },
        }
    }

    pub fn is_feature(&self) -> bool {
        matches!(self.kind, HeaderKind::Feature { .. })
    }

    /// Payload words (instructions or 32-bit feature words) that follow.
    pub fn payload_words(&self) -> usize {
        match self.kind {
            HeaderKind::Instruction {
                num_instructions, ..
            } => num_instructions as usize,
            HeaderKind::Feature {
                words_per_batch,
                batch_count,
            } => words_per_batch as usize * batch_count as usize,
        }
    }

    /// Beats occupied by the header itself.
    pub fn beats(width: HeaderWidth, feature: bool) -> usize {
        match (width, feature) {
            (HeaderWidth::W16, false) => 3,
            (HeaderWidth::W16, true) => 2,
            _ => 1,
        }
    }
}

/// Field widths, most significant field first.
fn field_bits(width: HeaderWidth, feature: bool) -> &'static [u32] {
    match (width, feature) {
        (HeaderWidth::W16, false) => &[14, 14, 14],
        (HeaderWidth::W16, true) => &[14, 14],
        (HeaderWidth::W32, false) => &[6, 8, 16],
        (HeaderWidth::W32, true) => &[14, 16],
        (HeaderWidth::W64, false) => &[12, 16, 32],
        (HeaderWidth::W64, true) => &[28, 32],
    }
}

const INSTRUCTION_FIELDS: [&str; 3] = ["num_classes", "num_clauses", "num_instructions"];
const FEATURE_FIELDS: [&str; 2] = ["words_per_batch", "batch_count"];

fn header_fields(h: &Header) -> (bool, Vec<u32>, &'static [&'static str]) {
    match h.kind {
        HeaderKind::Instruction {
            num_classes,
            num_clauses,
            num_instructions,
        } => (
            false,
            vec![num_classes, num_clauses, num_instructions],
            &INSTRUCTION_FIELDS,
        ),
        HeaderKind::Feature {
            words_per_batch,
            batch_count,
        } => (true, vec![words_per_batch, batch_count], &FEATURE_FIELDS),
    }
}

/// Encodes a header into its beats (1 beat, or 2-3 on a 16-bit bus).
pub fn encode_header(h: &Header, width: HeaderWidth) -> Result<Vec<u64>, ProtocolError> {
    let (feature, values, names) = header_fields(h);
    let bits = field_bits(width, feature);
    for ((&v, &b), &name) in values.iter().zip(bits).zip(names) {
        if u64::from(v) >> b != 0 {
            return Err(ProtocolError::HeaderOverflow {
                field: name,
                value: u64::from(v),
                bits: b,
            });
        }
    }
    let control = if h.new_stream { width.new_bit() } else { 0 } | if feature { width.type_bit() } else { 0 };
    if width == HeaderWidth::W16 {
        let mut beats: Vec<u64> = values.iter().map(|&v| u64::from(v)).collect();
        beats[0] |= control;
        return Ok(beats);
    }
    let mut word = control;
    let mut shift = 0;
    for (&v, &b) in values.iter().zip(bits).rev() {
        word |= u64::from(v) << shift;
        shift += b;
    }
    Ok(vec![word])
}

/// Decodes a header from the front of `beats`. Returns the header and the
/// number of beats it occupied.
pub fn decode_header(beats: &[u64], width: HeaderWidth) -> Result<(Header, usize), ProtocolError> {
    let first = *beats.first().ok_or(ProtocolError::Truncated)?;
    check_beat(first, width)?;
    let new_stream = first & width.new_bit() != 0;
    let feature = first & width.type_bit() != 0;
    let bits = field_bits(width, feature);
    let values: Vec<u32> = if width == HeaderWidth::W16 {
        let n = bits.len();
        if beats.len() < n {
            return Err(ProtocolError::Truncated);
        }
        let mut values = vec![(first & 0x3fff) as u32];
        for &ext in &beats[1..n] {
            check_beat(ext, width)?;
            if ext & 0xc000 != 0 {
                return Err(ProtocolError::MalformedHeader(format!(
                    "reserved bits set in 16-bit extension beat {ext:#06x}"
                )));
            }
            values.push(ext as u32);
        }
        values
    } else {
        let used: u32 = 2 + bits.iter().sum::<u32>();
        let reserved = (first & !(width.new_bit() | width.type_bit())) >> (used - 2);
        if reserved != 0 {
            return Err(ProtocolError::MalformedHeader(format!(
                "reserved bits set in header {first:#x}"
            )));
        }
        let mut values = Vec::with_capacity(bits.len());
        let mut shift = 0;
        for &b in bits.iter().rev() {
            values.push(((first >> shift) & ((1u64 << b) - 1)) as u32);
            shift += b;
        }
        values.reverse();
        values
    };
    let kind = if feature {
        HeaderKind::Feature {
            words_per_batch: values[0],
            batch_count: values[1],
        }
    } else {
        HeaderKind::Instruction {
            num_classes: values[0],
            num_clauses: values[1],
            num_instructions: values[2],
        }
    };
    Ok((Header { new_stream, kind }, Header::beats(width, feature)))
}

fn check_beat(beat: u64, width: HeaderWidth) -> Result<(), ProtocolError> {
    if beat & !width.mask() != 0 {
        return Err(ProtocolError::BeatOverflow {
            value: beat,
            width: width.bits(),
        });
    }
    Ok(())
}

/// One batch of up to 32 datapoints, transposed so that word `i` holds
/// feature `i` of every datapoint (lane `b` = datapoint `b`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureBatch {
    pub words: Vec<u32>,
}

impl FeatureBatch {
    pub fn from_datapoints(points: &[BoolVector]) -> Result<Self, ProtocolError> {
        let first = points
            .first()
            .ok_or_else(|| ProtocolError::InvalidBatch("batch has no datapoints".into()))?;
        if points.len() > BATCH_LANES {
            return Err(ProtocolError::InvalidBatch(format!(
                "{} datapoints exceed {BATCH_LANES} lanes",
                points.len()
            )));
        }
        let f = first.len();
        let mut words = vec![0u32; f];
        for (lane, p) in points.iter().enumerate() {
            if p.len() != f {
                return Err(ProtocolError::InvalidBatch(format!(
                    "datapoint {lane} has {} features, batch has {f}",
                    p.len()
                )));
            }
            for (word, &bit) in words.iter_mut().zip(p.as_slice()) {
                *word |= (bit as u32) << lane;
            }
        }
        Ok(Self { words })
    }

    pub fn num_features(&self) -> usize {
        self.words.len()
    }

    /// Datapoint held in `lane`.
    pub fn lane(&self, lane: usize) -> Result<BoolVector, ModelError> {
        BoolVector::new(self.words.iter().map(|w| w >> lane & 1 == 1).collect())
    }

    /// The first `count` lanes as datapoints.
    pub fn lanes(&self, count: usize) -> Result<Vec<BoolVector>, ModelError> {
        (0..count.min(BATCH_LANES)).map(|l| self.lane(l)).collect()
    }
}

/// Splits datapoints into 32-lane batches; the last may be partly filled.
pub fn batch_datapoints(points: &[BoolVector]) -> Result<Vec<FeatureBatch>, ProtocolError> {
    if points.is_empty() {
        return Err(ProtocolError::InvalidBatch("no datapoints".into()));
    }
    points.chunks(BATCH_LANES).map(FeatureBatch::from_datapoints).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Instructions(Vec<u16>),
    Features(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamPacket {
    pub header: Header,
    pub payload: Payload,
}

impl StreamPacket {
    pub fn new(header: Header, payload: Payload) -> Result<Self, ProtocolError> {
        let got = match (&header.kind, &payload) {
            (HeaderKind::Instruction { .. }, Payload::Instructions(w)) => w.len(),
            (HeaderKind::Feature { .. }, Payload::Features(w)) => w.len(),
            _ => {
                return Err(ProtocolError::MalformedHeader(
                    "payload type does not match header type".into(),
                ))
            }
        };
        if got != header.payload_words() {
            return Err(ProtocolError::PayloadLength {
                declared: header.payload_words(),
                got,
            });
        }
        Ok(Self { header, payload })
    }

    /// Programming packet for a compressed model.
    pub fn instructions(stream: &InstructionStream) -> Result<Self, ProtocolError> {
        let count = |field: &'static str, v: usize| {
            u32::try_from(v).map_err(|_| ProtocolError::HeaderOverflow {
                field,
                value: v as u64,
                bits: 32,
            })
        };
        let header = Header::instruction(
            count("num_classes", stream.arch.num_classes)?,
            count("num_clauses", stream.arch.clauses_per_class)?,
            count("num_instructions", stream.words.len())?,
        );
        Self::new(header, Payload::Instructions(stream.words.clone()))
    }

    /// Serializes header and payload into bus beats.
    pub fn to_beats(&self, width: HeaderWidth) -> Result<Vec<u64>, ProtocolError> {
        let mut beats = encode_header(&self.header, width)?;
        match &self.payload {
            Payload::Instructions(words) => beats.extend(words.iter().map(|&w| u64::from(w))),
            Payload::Features(words) => {
                for &w in words {
                    if width == HeaderWidth::W16 {
                        beats.push(u64::from(w & 0xffff));
                        beats.push(u64::from(w >> 16));
                    } else {
                        beats.push(u64::from(w));
                    }
                }
            }
        }
        Ok(beats)
    }
}

/// Concatenates equally sized batches behind one feature header.
pub fn packetize_features(batches: &[FeatureBatch]) -> Result<StreamPacket, ProtocolError> {
    let first = batches
        .first()
        .ok_or_else(|| ProtocolError::InvalidBatch("no batches".into()))?;
    let f = first.num_features();
    if let Some((i, b)) = batches.iter().enumerate().find(|(_, b)| b.num_features() != f) {
        return Err(ProtocolError::InvalidBatch(format!(
            "batch {i} has {} words, batch 0 has {f}",
            b.num_features()
        )));
    }
    let overflow = |field, value: usize| ProtocolError::HeaderOverflow {
        field,
        value: value as u64,
        bits: 32,
    };
    let header = Header::feature(
        u32::try_from(f).map_err(|_| overflow("words_per_batch", f))?,
        u32::try_from(batches.len()).map_err(|_| overflow("batch_count", batches.len()))?,
    );
    let payload = batches.iter().flat_map(|b| b.words.iter().copied()).collect();
    StreamPacket::new(header, Payload::Features(payload))
}

/// What a single beat turned out to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseEvent {
    /// Part of a multi-beat header; nothing complete yet.
    Pending,
    Header(Header),
    Instruction { index: usize, word: u16 },
    /// A complete feature word of `batch`, at feature position `index`.
    Feature { batch: usize, index: usize, word: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ParserState {
    ExpectHeader,
    Instructions { next: usize, total: usize },
    Features {
        next: usize,
        words_per_batch: usize,
        total: usize,
        low_half: Option<u16>,
    },
}

/// Incremental parser: consumes one beat at a time and recovers packet
/// boundaries with no state beyond the configured width.
#[derive(Debug, Clone)]
pub struct StreamParser {
    width: HeaderWidth,
    state: ParserState,
    header_beats: Vec<u64>,
}

impl StreamParser {
    pub fn new(width: HeaderWidth) -> Self {
        Self {
            width,
            state: ParserState::ExpectHeader,
            header_beats: Vec::with_capacity(3),
        }
    }

    pub fn width(&self) -> HeaderWidth {
        self.width
    }

    /// True between packets.
    pub fn at_boundary(&self) -> bool {
        self.state == ParserState::ExpectHeader && self.header_beats.is_empty()
    }

    pub fn reset(&mut self) {
        self.state = ParserState::ExpectHeader;
        self.header_beats.clear();
    }

    /// Payload words still expected in the current packet.
    pub fn remaining(&self) -> usize {
        match self.state {
            ParserState::ExpectHeader => 0,
            ParserState::Instructions { next, total } => total - next,
            ParserState::Features { next, total, .. } => total - next,
        }
    }

    pub fn push(&mut self, beat: u64) -> Result<ParseEvent, ProtocolError> {
        check_beat(beat, self.width)?;
        match self.state {
            ParserState::ExpectHeader => self.push_header_beat(beat),
            ParserState::Instructions { next, total } => {
                if beat > u64::from(u16::MAX) {
                    if beat & self.width.new_bit() != 0 {
                        return Err(ProtocolError::PrematureHeader {
                            remaining: total - next,
                        });
                    }
                    return Err(ProtocolError::BeatOverflow { value: beat, width: 16 });
                }
                self.state = if next + 1 == total {
                    ParserState::ExpectHeader
                } else {
                    ParserState::Instructions { next: next + 1, total }
                };
                Ok(ParseEvent::Instruction {
                    index: next,
                    word: beat as u16,
                })
            }
            ParserState::Features {
                next,
                words_per_batch,
                total,
                low_half,
            } => {
                let word = if self.width == HeaderWidth::W16 {
                    match low_half {
                        None => {
                            self.state = ParserState::Features {
                                next,
                                words_per_batch,
                                total,
                                low_half: Some(beat as u16),
                            };
                            return Ok(ParseEvent::Pending);
                        }
                        Some(lo) => u32::from(lo) | (beat as u32) << 16,
                    }
                } else {
                    if beat > u64::from(u32::MAX) {
                        return Err(ProtocolError::BeatOverflow { value: beat, width: 32 });
                    }
                    beat as u32
                };
                self.state = if next + 1 == total {
                    ParserState::ExpectHeader
                } else {
                    ParserState::Features {
                        next: next + 1,
                        words_per_batch,
                        total,
                        low_half: None,
                    }
                };
                Ok(ParseEvent::Feature {
                    batch: next / words_per_batch,
                    index: next % words_per_batch,
                    word,
                })
            }
        }
    }

    fn push_header_beat(&mut self, beat: u64) -> Result<ParseEvent, ProtocolError> {
        if self.header_beats.is_empty() && beat & self.width.new_bit() == 0 {
            return Err(ProtocolError::UnexpectedPayload);
        }
        self.header_beats.push(beat);
        let feature = self.header_beats[0] & self.width.type_bit() != 0;
        if self.header_beats.len() < Header::beats(self.width, feature) {
            return Ok(ParseEvent::Pending);
        }
        let decoded = decode_header(&self.header_beats, self.width);
        self.header_beats.clear();
        let (header, _) = decoded?;
        let total = header.payload_words();
        if total > 0 {
            self.state = match header.kind {
                HeaderKind::Instruction { .. } => ParserState::Instructions { next: 0, total },
                HeaderKind::Feature {
                    words_per_batch, ..
                } => ParserState::Features {
                    next: 0,
                    words_per_batch: words_per_batch as usize,
                    total,
                    low_half: None,
                },
            };
        }
        Ok(ParseEvent::Header(header))
    }

    /// Errors if the stream stopped inside a packet.
    pub fn finish(&self) -> Result<(), ProtocolError> {
        if self.at_boundary() {
            Ok(())
        } else {
            Err(ProtocolError::Truncated)
        }
    }
}

/// Parses a complete beat sequence into packets.
pub fn parse_packets(beats: &[u64], width: HeaderWidth) -> Result<Vec<StreamPacket>, ProtocolError> {
    let mut parser = StreamParser::new(width);
    let mut packets = Vec::new();
    let mut current: Option<(Header, Payload)> = None;
    let flush = |current: &mut Option<(Header, Payload)>, packets: &mut Vec<StreamPacket>| {
        if let Some((h, p)) = current.take() {
            packets.push(StreamPacket { header: h, payload: p });
        }
    };
    for &beat in beats {
        match parser.push(beat)? {
            ParseEvent::Pending => {}
            ParseEvent::Header(h) => {
                flush(&mut current, &mut packets);
                let payload = if h.is_feature() {
                    Payload::Features(Vec::with_capacity(h.payload_words()))
                } else {
                    Payload::Instructions(Vec::with_capacity(h.payload_words()))
                };
                current = Some((h, payload));
            }
            ParseEvent::Instruction { word, .. } => {
                if let Some((_, Payload::Instructions(w))) = current.as_mut() {
                    w.push(word);
                }
            }
            ParseEvent::Feature { word, .. } => {
                if let Some((_, Payload::Features(w))) = current.as_mut() {
                    w.push(word);
                }
            }
        }
    }
    parser.finish()?;
    flush(&mut current, &mut packets);
    Ok(packets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(bits: &[u8]) -> BoolVector {
        BoolVector::from_bits(bits).unwrap()
    }

    #[test]
    fn instruction_header_32() {
        let h = Header::instruction(10, 200, 17_000);
        let expected = (1u64 << 31) | (10 << 24) | (200 << 16) | 17_000;
        assert_eq!(expected, 0x8AC8_4268);
        assert_eq!(encode_header(&h, HeaderWidth::W32).unwrap(), vec![expected]);
        assert_eq!(decode_header(&[0x8AC8_4268], HeaderWidth::W32).unwrap(), (h, 1));
    }

    #[test]
    fn feature_header_32() {
        let h = Header::feature(784, 2);
        let expected = (1u64 << 31) | (1 << 30) | (784 << 16) | 2;
        assert_eq!(expected, 0xC310_0002);
        assert_eq!(encode_header(&h, HeaderWidth::W32).unwrap(), vec![expected]);
        assert_eq!(decode_header(&[0xC310_0002], HeaderWidth::W32).unwrap(), (h, 1));
    }

    #[test]
    fn header_overflow() {
        let err = encode_header(&Header::instruction(65, 2, 1), HeaderWidth::W32).unwrap_err();
        assert!(matches!(err, ProtocolError::HeaderOverflow { field: "num_classes", bits: 6, .. }));
        assert!(encode_header(&Header::instruction(64, 2, 1), HeaderWidth::W32).is_err());
        assert!(encode_header(&Header::instruction(63, 2, 1), HeaderWidth::W32).is_ok());
        assert!(encode_header(&Header::instruction(2, 2, 1 << 14), HeaderWidth::W16).is_err());
        assert!(encode_header(&Header::feature(1 << 28, 1), HeaderWidth::W64).is_err());
    }

    #[test]
    fn sixteen_bit_header_beats() {
        let h = Header::instruction(10, 200, 1700);
        let beats = encode_header(&h, HeaderWidth::W16).unwrap();
        assert_eq!(beats, vec![0x8000 | 10, 200, 1700]);
        assert_eq!(decode_header(&beats, HeaderWidth::W16).unwrap(), (h, 3));
        let f = Header::feature(784, 2);
        let beats = encode_header(&f, HeaderWidth::W16).unwrap();
        assert_eq!(beats, vec![0xC000 | 784, 2]);
        assert!(matches!(
            decode_header(&[0x8000 | 10, 0x4000 | 200, 1700], HeaderWidth::W16),
            Err(ProtocolError::MalformedHeader(_))
        ));
        assert_eq!(
            decode_header(&[0x8000 | 10, 200], HeaderWidth::W16),
            Err(ProtocolError::Truncated)
        );
    }

    #[test]
    fn sixty_four_bit_reserved_bits() {
        let h = Header::feature(784, 2);
        let beats = encode_header(&h, HeaderWidth::W64).unwrap();
        assert_eq!(beats, vec![(1 << 63) | (1 << 62) | (784 << 32) | 2]);
        assert!(matches!(
            decode_header(&[beats[0] | 1 << 60], HeaderWidth::W64),
            Err(ProtocolError::MalformedHeader(_))
        ));
    }

    #[test]
    fn transpose_two_datapoints() {
        let b = FeatureBatch::from_datapoints(&[bv(&[1, 0]), bv(&[0, 1])]).unwrap();
        assert_eq!(b.words, vec![0b01, 0b10]);
        assert_eq!(b.lanes(2).unwrap(), vec![bv(&[1, 0]), bv(&[0, 1])]);
        let p = packetize_features(&[b]).unwrap();
        assert_eq!(p.header, Header::feature(2, 1));
        assert_eq!(p.payload, Payload::Features(vec![1, 2]));
    }

    #[test]
    fn batching_limits() {
        assert!(packetize_features(&[]).is_err());
        let points: Vec<BoolVector> = (0..33).map(|i| bv(&[(i % 2) as u8, 1])).collect();
        let batches = batch_datapoints(&points).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[1].words, vec![0, 1]);
        let mixed = [
            FeatureBatch::from_datapoints(&[bv(&[1, 0])]).unwrap(),
            FeatureBatch::from_datapoints(&[bv(&[1, 0, 1])]).unwrap(),
        ];
        assert!(matches!(packetize_features(&mixed), Err(ProtocolError::InvalidBatch(_))));
        assert!(FeatureBatch::from_datapoints(&[bv(&[1]), bv(&[1, 0])]).is_err());
    }

    #[test]
    fn parser_rejects_excess_and_premature() {
        let mut p = StreamParser::new(HeaderWidth::W32);
        p.push(0x8000_0000 | (1 << 24) | (2 << 16) | 2).unwrap();
        p.push(0x8000).unwrap();
        assert_eq!(
            p.push(0xC000_0000 | (2 << 16) | 1),
            Err(ProtocolError::PrematureHeader { remaining: 1 })
        );
        let mut p = StreamParser::new(HeaderWidth::W32);
        p.push(0x8000_0000 | (1 << 24) | (2 << 16) | 1).unwrap();
        p.push(0x8000).unwrap();
        assert!(p.at_boundary());
        assert_eq!(p.push(0x4002), Err(ProtocolError::UnexpectedPayload));
        let mut p = StreamParser::new(HeaderWidth::W16);
        assert!(matches!(p.push(0x1_0000), Err(ProtocolError::BeatOverflow { .. })));
    }

    #[test]
    fn parse_round_trip_sixteen_bit_features() {
        let batch = FeatureBatch { words: vec![0xdead_beef, 0x0123_4567] };
        let packet = packetize_features(&[batch]).unwrap();
        let beats = packet.to_beats(HeaderWidth::W16).unwrap();
        assert_eq!(beats.len(), 2 + 4);
        assert_eq!(parse_packets(&beats, HeaderWidth::W16).unwrap(), vec![packet]);
        assert_eq!(
            parse_packets(&beats[..5], HeaderWidth::W16),
            Err(ProtocolError::Truncated)
        );
    }
}
