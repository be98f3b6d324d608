//! Incremental Gaussian-elimination decoder.
//!
//! Rows are kept in reduced row echelon form at all times: each insert
//! first eliminates the incoming vector against the existing pivots, then
//! (if anything is left) normalizes it and back-substitutes into the rows
//! above. Rank is therefore O(1) to read and every insert is O(g) row
//! operations.

use super::{CodecError, CodedPacket, CodingVector, SourcePacket};
use crate::gf::FieldKind;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    pivot: usize,
    coeffs: Vec<u8>,
    payload: Vec<u8>,
}

/// Receiver state for one generation: a row-reduced basis of coding
/// vectors with the payload rows transformed in lockstep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    generation_id: u64,
    generation_size: usize,
    field: FieldKind,
    symbol_size: Option<usize>,
    rows: Vec<Row>,
}

impl DecoderState {
    pub fn new(generation_id: u64, generation_size: usize, field: FieldKind) -> Self {
        Self {
            generation_id,
            generation_size,
            field,
            symbol_size: None,
            rows: Vec::new(),
        }
    }

    pub fn generation_id(&self) -> u64 {
        self.generation_id
    }

    pub fn generation_size(&self) -> usize {
        self.generation_size
    }

    pub fn field(&self) -> FieldKind {
        self.field
    }

    /// Number of linearly independent packets received so far.
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// True once all `g` source packets are recoverable.
    pub fn is_complete(&self) -> bool {
        self.rank() == self.generation_size
    }

    /// Inserts a coded packet. Returns true iff the packet was innovative
    /// (its vector was outside the span of the current basis).
    pub fn insert(&mut self, packet: &CodedPacket) -> Result<bool, CodecError> {
        if packet.generation_id != self.generation_id {
            return Err(CodecError::GenerationMismatch {
                expected: self.generation_id,
                actual: packet.generation_id,
            });
        }
        if packet.vector.len() != self.generation_size {
            return Err(CodecError::DimensionMismatch {
                expected: self.generation_size,
                actual: packet.vector.len(),
            });
        }
        match self.symbol_size {
            None => self.symbol_size = Some(packet.payload.len()),
            Some(s) if s != packet.payload.len() => {
                return Err(CodecError::LengthMismatch {
                    left: s,
                    right: packet.payload.len(),
                });
            }
            Some(_) => {}
        }
        for &c in packet.vector.coefficients() {
            self.field.validate_coefficient(c)?;
        }
        self.reduce_and_insert(
            packet.vector.coefficients().to_vec(),
            packet.payload.clone(),
        )
    }

    /// Rank bookkeeping without payloads (used by the encoder to judge
    /// dependence among redundancy vectors).
    pub fn insert_vector_only(&mut self, vector: &CodingVector) -> Result<bool, CodecError> {
        if vector.len() != self.generation_size {
            return Err(CodecError::DimensionMismatch {
                expected: self.generation_size,
                actual: vector.len(),
            });
        }
        self.reduce_and_insert(vector.coefficients().to_vec(), Vec::new())
    }

    /// Would this vector raise the rank? Non-mutating.
    pub fn would_be_innovative(&self, vector: &CodingVector) -> bool {
        let mut coeffs = vector.coefficients().to_vec();
        let mut scratch = Vec::new();
        self.eliminate(&mut coeffs, &mut scratch);
        coeffs.iter().any(|&c| c != 0)
    }

    fn eliminate(&self, coeffs: &mut [u8], payload: &mut [u8]) {
        for row in &self.rows {
            let factor = coeffs[row.pivot];
            if factor == 0 {
                continue;
            }
            for (a, &b) in coeffs.iter_mut().zip(&row.coeffs) {
                *a ^= self.field.mul(factor, b);
            }
            for (a, &b) in payload.iter_mut().zip(&row.payload) {
                *a ^= self.field.mul(factor, b);
            }
        }
    }

    fn reduce_and_insert(
        &mut self,
        mut coeffs: Vec<u8>,
        mut payload: Vec<u8>,
    ) -> Result<bool, CodecError> {
        self.eliminate(&mut coeffs, &mut payload);
        let Some(pivot) = coeffs.iter().position(|&c| c != 0) else {
            return Ok(false); // in span: not innovative
        };
        // Normalize the pivot to 1.
        let inv = self.field.inv(coeffs[pivot])?;
        for c in coeffs.iter_mut() {
            *c = self.field.mul(inv, *c);
        }
        for b in payload.iter_mut() {
            *b = self.field.mul(inv, *b);
        }
        // Back-substitute into the existing rows so the basis stays in
        // reduced echelon form.
        for row in &mut self.rows {
            let factor = row.coeffs[pivot];
            if factor == 0 {
                continue;
            }
            for (a, &b) in row.coeffs.iter_mut().zip(&coeffs) {
                *a ^= self.field.mul(factor, b);
            }
            for (a, &b) in row.payload.iter_mut().zip(&payload) {
                *a ^= self.field.mul(factor, b);
            }
        }
        let at = self
            .rows
            .iter()
            .position(|r| r.pivot > pivot)
            .unwrap_or(self.rows.len());
        self.rows.insert(
            at,
            Row {
                pivot,
                coeffs,
                payload,
            },
        );
        Ok(true)
    }

    /// Recovers all `g` source packets in index order.
    ///
    /// Fails with the current rank when fewer than `g` independent packets
    /// have been inserted.
    pub fn decode(&self) -> Result<Vec<SourcePacket>, CodecError> {
        if !self.is_complete() {
            return Err(CodecError::InsufficientRank {
                rank: self.rank(),
                needed: self.generation_size,
            });
        }
        // Full-rank RREF is the identity: row i recovers source i.
        Ok(self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                debug_assert_eq!(row.pivot, i);
                SourcePacket::new(self.generation_id, i, row.payload.clone())
            })
            .collect())
    }

    /// Textual matrix dump (hex) for test diagnostics.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "generation {} {} rank {}/{}",
            self.generation_id,
            self.field,
            self.rank(),
            self.generation_size
        );
        for row in &self.rows {
            let coeffs = CodingVector::new(row.coeffs.clone()).to_hex();
            let shown: String = row
                .payload
                .iter()
                .take(16)
                .map(|b| format!("{b:02x}"))
                .collect::<Vec<_>>()
                .join(" ");
            let ellipsis = if row.payload.len() > 16 { " .." } else { "" };
            let _ = writeln!(out, "  [{coeffs} | {shown}{ellipsis}]");
        }
        out
    }
}

impl std::fmt::Display for DecoderState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.dump())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_generation, systematic_batch, xor_encode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gen_sources(g: usize, symbol: usize, seed: u64) -> Vec<SourcePacket> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..g)
            .map(|i| SourcePacket::new(0, i, (0..symbol).map(|_| rng.random()).collect()))
            .collect()
    }

    #[test]
    fn first_nonzero_packet_is_innovative() {
        let sources = gen_sources(3, 8, 1);
        let p = encode_generation(
            &sources,
            &CodingVector::new(vec![2, 3, 4]),
            FieldKind::Gf256,
        )
        .unwrap();
        let mut state = DecoderState::new(0, 3, FieldKind::Gf256);
        assert!(state.insert(&p).unwrap());
        assert_eq!(state.rank(), 1);
    }

    #[test]
    fn dependent_combination_is_not_innovative() {
        let sources = gen_sources(3, 8, 2);
        let f = FieldKind::Gf256;
        let v1 = CodingVector::new(vec![1, 2, 3]);
        let v2 = CodingVector::new(vec![5, 7, 11]);
        // v3 = 3*v1 + 9*v2, built coefficient by coefficient.
        let v3 = CodingVector::new(
            v1.coefficients()
                .iter()
                .zip(v2.coefficients())
                .map(|(&a, &b)| f.mul(3, a) ^ f.mul(9, b))
                .collect(),
        );
        let mut state = DecoderState::new(0, 3, f);
        assert!(state
            .insert(&encode_generation(&sources, &v1, f).unwrap())
            .unwrap());
        assert!(state
            .insert(&encode_generation(&sources, &v2, f).unwrap())
            .unwrap());
        let rank_before = state.rank();
        assert!(!state
            .insert(&encode_generation(&sources, &v3, f).unwrap())
            .unwrap());
        assert_eq!(state.rank(), rank_before);
    }

    #[test]
    fn unit_vectors_reach_full_rank_and_decode_unchanged() {
        let g = 5;
        let sources = gen_sources(g, 16, 3);
        let mut state = DecoderState::new(0, g, FieldKind::Gf256);
        for i in 0..g {
            let p =
                encode_generation(&sources, &CodingVector::unit(g, i), FieldKind::Gf256).unwrap();
            assert!(state.insert(&p).unwrap());
        }
        assert_eq!(state.rank(), g);
        assert_eq!(state.decode().unwrap(), sources);
    }

    #[test]
    fn butterfly_pair_decodes_over_gf2() {
        // Receiver holds "a" plus the XOR packet, as at sink B2.
        let sources = gen_sources(2, 8, 4);
        let f = FieldKind::Binary;
        let a = encode_generation(&sources, &CodingVector::unit(2, 0), f).unwrap();
        let x = encode_generation(&sources, &CodingVector::new(vec![1, 1]), f).unwrap();
        assert_eq!(
            x.payload,
            xor_encode(&sources[0].payload, &sources[1].payload).unwrap()
        );
        let mut state = DecoderState::new(0, 2, f);
        assert!(state.insert(&a).unwrap());
        assert!(state.insert(&x).unwrap());
        assert_eq!(state.decode().unwrap(), sources);
    }

    #[test]
    fn any_independent_two_subset_decodes_identically() {
        let sources = gen_sources(2, 8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let packets: Vec<CodedPacket> = (0..3)
            .map(|_| {
                let coeffs: Vec<u8> = (0..2).map(|_| rng.random_range(1..=255u8)).collect();
                encode_generation(&sources, &CodingVector::new(coeffs), FieldKind::Gf256).unwrap()
            })
            .collect();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let mut state = DecoderState::new(0, 2, FieldKind::Gf256);
                state.insert(&packets[i]).unwrap();
                state.insert(&packets[j]).unwrap();
                if state.rank() == 2 {
                    assert_eq!(
                        state.decode().unwrap(),
                        sources,
                        "subset ({i},{j})\n{state}"
                    );
                }
            }
        }
    }

    #[test]
    fn insufficient_rank_error_carries_rank() {
        let sources = gen_sources(3, 8, 7);
        let mut state = DecoderState::new(0, 3, FieldKind::Gf256);
        state
            .insert(
                &encode_generation(&sources, &CodingVector::unit(3, 0), FieldKind::Gf256).unwrap(),
            )
            .unwrap();
        assert_eq!(
            state.decode(),
            Err(CodecError::InsufficientRank { rank: 1, needed: 3 })
        );
    }

    #[test]
    fn generation_mismatch_rejected() {
        let sources = gen_sources(2, 8, 8);
        let p = encode_generation(&sources, &CodingVector::unit(2, 0), FieldKind::Gf256).unwrap();
        let mut state = DecoderState::new(9, 2, FieldKind::Gf256);
        assert!(matches!(
            state.insert(&p),
            Err(CodecError::GenerationMismatch {
                expected: 9,
                actual: 0
            })
        ));
    }

    #[test]
    fn dump_shows_hex_rows() {
        let sources = gen_sources(2, 4, 9);
        let mut state = DecoderState::new(0, 2, FieldKind::Gf256);
        state
            .insert(
                &encode_generation(&sources, &CodingVector::unit(2, 0), FieldKind::Gf256).unwrap(),
            )
            .unwrap();
        let dump = state.dump();
        assert!(dump.contains("rank 1/2"), "{dump}");
        assert!(dump.contains("[01 00 |"), "{dump}");
    }

    proptest! {
        /// Round trip: any full-rank receipt reproduces the sources exactly.
        #[test]
        fn roundtrip_full_rank(
            seed in 0u64..500,
            g in 1usize..8,
            symbol in 1usize..64,
            binary in proptest::bool::ANY,
        ) {
            let field = if binary { FieldKind::Binary } else { FieldKind::Gf256 };
            let sources = gen_sources(g, symbol, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let batch = systematic_batch(&sources, g + 2, field, &mut rng).unwrap();
            let mut state = DecoderState::new(0, g, field);
            for p in &batch {
                state.insert(p).unwrap();
            }
            prop_assert!(state.is_complete());
            prop_assert_eq!(state.decode().unwrap(), sources);
        }

        /// Rank never decreases and never exceeds g.
        #[test]
        fn rank_monotone_and_bounded(seed in 0u64..500, g in 1usize..8) {
            let sources = gen_sources(g, 8, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut state = DecoderState::new(0, g, FieldKind::Gf256);
            let mut last = 0;
            for _ in 0..(2 * g + 2) {
                let coeffs: Vec<u8> = (0..g).map(|_| rng.random()).collect();
                let p = encode_generation(&sources, &CodingVector::new(coeffs), FieldKind::Gf256)
                    .unwrap();
                let innovative = state.insert(&p).unwrap();
                prop_assert!(state.rank() >= last);
                prop_assert_eq!(state.rank(), last + usize::from(innovative));
                prop_assert!(state.rank() <= g);
                last = state.rank();
            }
        }
    }
}
