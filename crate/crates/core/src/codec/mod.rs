//! Network-coding primitives.
//!
//! A *generation* is a fixed group of `g` source packets coded together.
//! Coded packets carry a coding vector (one coefficient per source packet)
//! alongside the combined payload, so any node can recode without decoding
//! and any receiver can decode once it has collected `g` linearly
//! independent vectors.

mod decoder;

pub use decoder::DecoderState;

use crate::gf::{FieldError, FieldKind};
use rand::Rng;
use thiserror::Error;

/// How many times a dependent random vector is redrawn before being
/// emitted anyway (dependence is likely only in GF(2)).
const REDRAW_LIMIT: usize = 8;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum CodecError {
    #[error("payload length mismatch: {left} vs {right} bytes")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("generation mismatch: expected {expected}, got {actual}")]
    GenerationMismatch { expected: u64, actual: u64 },
    #[error("insufficient rank: have {rank} of {needed} independent packets")]
    InsufficientRank { rank: usize, needed: usize },
    #[error("generation must contain at least one packet")]
    EmptyGeneration,
    #[error("source packets must be indexed 0..g in order")]
    BadSourceIndexing,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// An original (uncoded) packet of one generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePacket {
    pub generation_id: u64,
    pub index: usize,
    pub payload: Vec<u8>,
}

impl SourcePacket {
    pub fn new(generation_id: u64, index: usize, payload: Vec<u8>) -> Self {
        Self {
            generation_id,
            index,
            payload,
        }
    }
}

/// Coefficient row describing which combination a coded packet carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingVector(Vec<u8>);

impl CodingVector {
    pub fn new(coefficients: Vec<u8>) -> Self {
        Self(coefficients)
    }

    /// The i-th unit vector of length `g`: the systematic form of source i.
    pub fn unit(g: usize, i: usize) -> Self {
        let mut v = vec![0u8; g];
        v[i] = 1;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// True when the vector is a unit vector (an uncoded packet).
    pub fn unit_index(&self) -> Option<usize> {
        let mut found = None;
        for (i, &c) in self.0.iter().enumerate() {
            match (c, found) {
                (0, _) => {}
                (1, None) => found = Some(i),
                _ => return None,
            }
        }
        found
    }

    pub fn coefficients(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0
            .iter()
            .map(|c| format!("{c:02x}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A packet moving through the data plane: coding vector plus payload.
///
/// Invariant: `payload = sum_i vector[i] * source_payload_i` under field
/// arithmetic; [`validate_against_sources`](CodedPacket::validate_against_sources)
/// checks it whenever the sources are at hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub generation_id: u64,
    pub vector: CodingVector,
    pub payload: Vec<u8>,
}

impl CodedPacket {
    pub fn validate_against_sources(
        &self,
        sources: &[SourcePacket],
        field: FieldKind,
    ) -> Result<bool, CodecError> {
        let expected = encode_generation(sources, &self.vector, field)?;
        Ok(expected.payload == self.payload)
    }
}

/// Bytewise XOR of two equal-length payloads.
pub fn xor_encode(a: &[u8], b: &[u8]) -> Result<Vec<u8>, CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x ^ y).collect())
}

fn check_sources(sources: &[SourcePacket]) -> Result<(u64, usize), CodecError> {
    let first = sources.first().ok_or(CodecError::EmptyGeneration)?;
    let symbol_size = first.payload.len();
    for (i, s) in sources.iter().enumerate() {
        if s.index != i || s.generation_id != first.generation_id {
            return Err(CodecError::BadSourceIndexing);
        }
        if s.payload.len() != symbol_size {
            return Err(CodecError::LengthMismatch {
                left: symbol_size,
                right: s.payload.len(),
            });
        }
    }
    Ok((first.generation_id, symbol_size))
}

/// Field linear combination of a whole generation under `vector`.
pub fn encode_generation(
    sources: &[SourcePacket],
    vector: &CodingVector,
    field: FieldKind,
) -> Result<CodedPacket, CodecError> {
    let (generation_id, symbol_size) = check_sources(sources)?;
    if vector.len() != sources.len() {
        return Err(CodecError::DimensionMismatch {
            expected: sources.len(),
            actual: vector.len(),
        });
    }
    let mut payload = vec![0u8; symbol_size];
    for (coeff, source) in vector.coefficients().iter().zip(sources) {
        field.validate_coefficient(*coeff)?;
        if *coeff == 0 {
            continue;
        }
        for (acc, &byte) in payload.iter_mut().zip(&source.payload) {
            *acc ^= field.mul(*coeff, byte);
        }
    }
    Ok(CodedPacket {
        generation_id,
        vector: vector.clone(),
        payload,
    })
}

/// Combines already-coded packets at an intermediate node.
///
/// Both the vectors and the payloads are combined with the same weights,
/// so the output still satisfies the coded-packet invariant without the
/// node ever seeing the sources.
pub fn recode(
    inputs: &[CodedPacket],
    weights: &[u8],
    field: FieldKind,
) -> Result<CodedPacket, CodecError> {
    let first = inputs.first().ok_or(CodecError::EmptyGeneration)?;
    if weights.len() != inputs.len() {
        return Err(CodecError::DimensionMismatch {
            expected: inputs.len(),
            actual: weights.len(),
        });
    }
    let g = first.vector.len();
    let symbol_size = first.payload.len();
    let mut vector = vec![0u8; g];
    let mut payload = vec![0u8; symbol_size];
    for (weight, packet) in weights.iter().zip(inputs) {
        if packet.generation_id != first.generation_id {
            return Err(CodecError::GenerationMismatch {
                expected: first.generation_id,
                actual: packet.generation_id,
            });
        }
        if packet.vector.len() != g {
            return Err(CodecError::DimensionMismatch {
                expected: g,
                actual: packet.vector.len(),
            });
        }
        if packet.payload.len() != symbol_size {
            return Err(CodecError::LengthMismatch {
                left: symbol_size,
                right: packet.payload.len(),
            });
        }
        field.validate_coefficient(*weight)?;
        if *weight == 0 {
            continue;
        }
        for (acc, &c) in vector.iter_mut().zip(packet.vector.coefficients()) {
            *acc ^= field.mul(*weight, c);
        }
        for (acc, &byte) in payload.iter_mut().zip(&packet.payload) {
            *acc ^= field.mul(*weight, byte);
        }
    }
    Ok(CodedPacket {
        generation_id: first.generation_id,
        vector: CodingVector::new(vector),
        payload,
    })
}

/// Emits `total_packets` coded packets for one generation: the `g` unit
/// vectors first (systematic), then random combinations with every
/// coefficient drawn uniformly from the nonzero field elements.
///
/// A random vector that is dependent on the previously drawn random
/// vectors is redrawn a bounded number of times and then emitted anyway.
pub fn systematic_batch<R: Rng + ?Sized>(
    sources: &[SourcePacket],
    total_packets: usize,
    field: FieldKind,
    rng: &mut R,
) -> Result<Vec<CodedPacket>, CodecError> {
    let (generation_id, _) = check_sources(sources)?;
    let g = sources.len();
    let mut out = Vec::with_capacity(total_packets);
    for i in 0..g.min(total_packets) {
        out.push(encode_generation(
            sources,
            &CodingVector::unit(g, i),
            field,
        )?);
    }
    // Rank tracker over the random vectors only; the systematic prefix
    // already spans the space, so dependence is judged among redundancy.
    let mut seen = DecoderState::new(generation_id, g, field);
    for _ in g..total_packets {
        let mut vector = draw_nonzero_vector(g, field, rng);
        for _ in 0..REDRAW_LIMIT {
            if seen.would_be_innovative(&vector) {
                break;
            }
            vector = draw_nonzero_vector(g, field, rng);
        }
        let packet = encode_generation(sources, &vector, field)?;
        seen.insert_vector_only(&vector)?;
        out.push(packet);
    }
    Ok(out)
}

fn draw_nonzero_vector<R: Rng + ?Sized>(g: usize, field: FieldKind, rng: &mut R) -> CodingVector {
    CodingVector::new((0..g).map(|_| field.random_nonzero(rng)).collect())
}
