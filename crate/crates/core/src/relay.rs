//! Transmitter-to-ground data path: CRC framing, per-drone packet erasure channels,
//! error injection into corrupted copies, and copy selection at the ground station.
//!
//! An erasure on the link to a drone leaves that drone holding a corrupted copy of the
//! packet rather than no copy at all, so every drone returns `N` framed packets. The ground
//! station keeps a copy that passes CRC when one exists and otherwise picks one of the
//! corrupted copies uniformly at random.

use std::io::{self, Read, Write};

use crc::{Crc, CRC_16_IBM_3740};
use rand::Rng;
use thiserror::Error;

use crate::fqlinalg::{FieldSpec, FqMatrix};

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection, no final xor.
/// (The `crc` catalogue lists it under its IBM-3740 alias.)
pub const CRC16_CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

#[derive(Debug, Error)]
pub enum RelayError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("byte serialization supports q <= 256, got q = {0}")]
    FieldTooLarge(u32),
    #[error("packed-bit serialization requires q = 2, got q = {0}")]
    PackedBitsNeedBinary(u32),
    #[error("payload has {found} symbols, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("packet dump truncated at byte {0}")]
    TruncatedDump(usize),
    #[error("packet dump record {index}: {msg}")]
    BadRecord { index: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// How payload symbols are turned into bytes for the checksum and the packet dump.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Serialization {
    /// One byte per symbol; needs `q <= 256`.
    #[default]
    BytePerSymbol,
    /// Eight binary symbols per byte, first symbol in the most significant bit, zero padded.
    PackedBits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrcSpec {
    pub field: FieldSpec,
    pub serialization: Serialization,
}

impl CrcSpec {
    pub fn new(field: FieldSpec, serialization: Serialization) -> Result<Self, RelayError> {
        match serialization {
            Serialization::BytePerSymbol if field.q() > 256 => Err(RelayError::FieldTooLarge(field.q())),
            Serialization::PackedBits if !field.is_binary() => Err(RelayError::PackedBitsNeedBinary(field.q())),
            _ => Ok(Self { field, serialization }),
        }
    }

    pub fn serialize(&self, payload: &[u32]) -> Vec<u8> {
        match self.serialization {
            Serialization::BytePerSymbol => payload.iter().map(|&s| s as u8).collect(),
            Serialization::PackedBits => {
                let mut out = vec![0u8; payload.len().div_ceil(8)];
                for (i, &s) in payload.iter().enumerate() {
                    out[i / 8] |= ((s & 1) as u8) << (7 - i % 8);
                }
                out
            }
        }
    }

    pub fn deserialize(&self, bytes: &[u8], symbols: usize) -> Result<Vec<u32>, RelayError> {
        let expected = self.serialized_len(symbols);
        if bytes.len() != expected {
            return Err(RelayError::PayloadLength { expected, found: bytes.len() });
        }
        let out: Vec<u32> = match self.serialization {
            Serialization::BytePerSymbol => bytes.iter().map(|&b| b as u32).collect(),
            Serialization::PackedBits => (0..symbols).map(|i| ((bytes[i / 8] >> (7 - i % 8)) & 1) as u32).collect(),
        };
        if out.iter().any(|&s| !self.field.contains(s)) {
            return Err(RelayError::InvalidParams(format!("payload symbol outside {}", self.field)));
        }
        Ok(out)
    }

    pub fn serialized_len(&self, symbols: usize) -> usize {
        match self.serialization {
            Serialization::BytePerSymbol => symbols,
            Serialization::PackedBits => symbols.div_ceil(8),
        }
    }

    pub fn checksum(&self, payload: &[u32]) -> u16 {
        CRC16_CCITT_FALSE.checksum(&self.serialize(payload))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelParams {
    /// Per-drone packet erasure probabilities; the drone count is `epsilons.len()`.
    pub epsilons: Vec<f64>,
    /// Per-symbol error probability inside a corrupted copy.
    pub symbol_error_prob: f64,
    /// Payload symbols per packet.
    pub payload_len: usize,
}

impl ChannelParams {
    pub fn new(epsilons: Vec<f64>, symbol_error_prob: f64, payload_len: usize) -> Result<Self, RelayError> {
        let p = Self { epsilons, symbol_error_prob, payload_len };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RelayError> {
        if self.epsilons.is_empty() {
            return Err(RelayError::InvalidParams("at least one drone is required".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(RelayError::InvalidParams(format!("erasure probability {e} outside [0, 1]")));
        }
        if !(self.symbol_error_prob > 0.0 && self.symbol_error_prob <= 1.0) {
            return Err(RelayError::InvalidParams(format!(
                "symbol error probability {} outside (0, 1]",
                self.symbol_error_prob
            )));
        }
        if self.payload_len == 0 {
            return Err(RelayError::InvalidParams("payload length must be at least 1".into()));
        }
        Ok(())
    }

    pub fn drones(&self) -> usize {
        self.epsilons.len()
    }

    /// Probability that no drone holds a clean copy, `∏ ε_m`.
    pub fn packet_error_prob(&self) -> f64 {
        self.epsilons.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramedPacket {
    pub index: usize,
    pub payload: Vec<u32>,
    /// Checksum of the payload as transmitted.
    pub crc: u16,
    /// Ground truth: the payload is the transmitted one. Simulation bookkeeping only.
    pub clean: bool,
}

impl FramedPacket {
    pub fn frame(index: usize, payload: Vec<u32>, spec: &CrcSpec) -> Self {
        let crc = spec.checksum(&payload);
        Self { index, payload, crc, clean: true }
    }

    pub fn passes_crc(&self, spec: &CrcSpec) -> bool {
        spec.checksum(&self.payload) == self.crc
    }
}

/// Corrupts each symbol independently with probability `p_s`, adding an error value drawn
/// uniformly from the nonzero field elements. Redraws until at least one symbol changed.
pub fn inject_errors<R: Rng + ?Sized>(field: FieldSpec, payload: &[u32], p_s: f64, rng: &mut R) -> Vec<u32> {
    assert!(p_s > 0.0 && p_s <= 1.0, "symbol error probability must lie in (0, 1]");
    assert!(!payload.is_empty(), "cannot corrupt an empty payload");
    let q = field.q();
    loop {
        let mut out = payload.to_vec();
        let mut changed = false;
        for s in out.iter_mut() {
            if rng.random_bool(p_s) {
                let e = if q == 2 { 1 } else { rng.random_range(1..q) };
                *s = field.add(*s, e);
                changed = true;
            }
        }
        if changed {
            return out;
        }
    }
}

/// Broadcasts the rows of `x` to every drone. For packet `n` and drone `m`, the drone keeps
/// a clean copy with probability `1 - ε_m` and a corrupted one otherwise. Random draws are
/// consumed packet by packet, drone by drone.
pub fn transmit<R: Rng + ?Sized>(x: &FqMatrix, params: &ChannelParams, spec: &CrcSpec, rng: &mut R) -> Vec<Vec<FramedPacket>> {
    let mut buffers: Vec<Vec<FramedPacket>> = vec![Vec::with_capacity(x.rows()); params.drones()];
    for n in 0..x.rows() {
        let framed = FramedPacket::frame(n, x.row(n).to_vec(), spec);
        for (m, &eps) in params.epsilons.iter().enumerate() {
            let erased = eps > 0.0 && rng.random_bool(eps);
            let copy = if erased {
                let payload = inject_errors(x.field(), &framed.payload, params.symbol_error_prob, rng);
                FramedPacket { payload, clean: false, ..framed.clone() }
            } else {
                framed.clone()
            };
            buffers[m].push(copy);
        }
    }
    buffers
}

/// What the ground station holds after the drones return.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    /// Stored packets, one row per transmitted packet.
    pub y: FqMatrix,
    /// Indices whose stored copy passes CRC, increasing.
    pub clean: Vec<usize>,
    /// Indices whose stored copy fails CRC, increasing.
    pub corrupted: Vec<usize>,
    /// Stored checksums, used to verify repaired rows.
    pub crcs: Vec<u16>,
    /// Indices in `clean` whose stored copy actually differs from the transmitted packet.
    pub false_accepts: Vec<usize>,
}

/// Selects one copy per packet: the first copy (by drone order) that passes CRC, or a
/// uniformly random corrupted copy when none does.
pub fn deliver<R: Rng + ?Sized>(buffers: &[Vec<FramedPacket>], spec: &CrcSpec, rng: &mut R) -> Delivery {
    assert!(!buffers.is_empty(), "at least one drone buffer is required");
    let n = buffers[0].len();
    assert!(buffers.iter().all(|b| b.len() == n), "every drone must hold a copy of every packet");
    let len = buffers[0].first().map_or(0, |p| p.payload.len());

    let mut data = Vec::with_capacity(n * len);
    let mut clean = Vec::new();
    let mut corrupted = Vec::new();
    let mut crcs = Vec::with_capacity(n);
    let mut false_accepts = Vec::new();
    for i in 0..n {
        let chosen = match buffers.iter().map(|b| &b[i]).find(|p| p.passes_crc(spec)) {
            Some(p) => {
                clean.push(i);
                if !p.clean {
                    false_accepts.push(i);
                }
                p
            }
            None => {
                corrupted.push(i);
                &buffers[rng.random_range(0..buffers.len())][i]
            }
        };
        data.extend_from_slice(&chosen.payload);
        crcs.push(chosen.crc);
    }
    let y = FqMatrix::new(spec.field, n, len, data).expect("payload symbols are field elements");
    Delivery { y, clean, corrupted, crcs, false_accepts }
}

/// Writes packets in the dump layout: 4-byte big-endian index, 2-byte big-endian payload
/// byte length, payload bytes, 2-byte big-endian CRC.
pub fn write_packet_dump<W: Write>(mut w: W, packets: &[FramedPacket], spec: &CrcSpec) -> Result<(), RelayError> {
    for p in packets {
        let bytes = spec.serialize(&p.payload);
        let index = u32::try_from(p.index).map_err(|_| RelayError::BadRecord { index: p.index, msg: "index exceeds u32".into() })?;
        let len = u16::try_from(bytes.len()).map_err(|_| RelayError::BadRecord { index: p.index, msg: "payload exceeds 65535 bytes".into() })?;
        w.write_all(&index.to_be_bytes())?;
        w.write_all(&len.to_be_bytes())?;
        w.write_all(&bytes)?;
        w.write_all(&p.crc.to_be_bytes())?;
    }
    Ok(())
}

/// Reads a packet dump written by [`write_packet_dump`]. `symbols` is the payload length in
/// symbols (needed to undo bit packing). The `clean` flag is set from the CRC verdict.
pub fn read_packet_dump<R: Read>(mut r: R, spec: &CrcSpec, symbols: usize) -> Result<Vec<FramedPacket>, RelayError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut pos = 0;
    let take = |k: usize, pos: &mut usize| -> Result<&[u8], RelayError> {
        let s = buf.get(*pos..*pos + k).ok_or(RelayError::TruncatedDump(*pos))?;
        *pos += k;
        Ok(s)
    };
    let mut out = Vec::new();
    while pos < buf.len() {
        let index = u32::from_be_bytes(take(4, &mut pos)?.try_into().unwrap()) as usize;
        let len = u16::from_be_bytes(take(2, &mut pos)?.try_into().unwrap()) as usize;
        let payload = spec
            .deserialize(take(len, &mut pos)?, symbols)
            .map_err(|e| RelayError::BadRecord { index, msg: e.to_string() })?;
        let crc = u16::from_be_bytes(take(2, &mut pos)?.try_into().unwrap());
        let mut p = FramedPacket { index, payload, crc, clean: true };
        p.clean = p.passes_crc(spec);
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Bitwise MSB-first reference, independent of the table-driven crate implementation.
    fn crc16_reference(bytes: &[u8]) -> u16 {
        let mut crc: u16 = 0xFFFF;
        for &b in bytes {
            crc ^= (b as u16) << 8;
            for _ in 0..8 {
                crc = if crc & 0x8000 != 0 { (crc << 1) ^ 0x1021 } else { crc << 1 };
            }
        }
        crc
    }

    fn byte_spec(q: u32) -> CrcSpec {
        CrcSpec::new(FieldSpec::new(q).unwrap(), Serialization::BytePerSymbol).unwrap()
    }

    #[test]
    fn check_value() {
        assert_eq!(crc16_reference(b"123456789"), 0x29B1);
        assert_eq!(CRC16_CCITT_FALSE.checksum(b"123456789"), 0x29B1);
        let spec = byte_spec(251);
        let symbols: Vec<u32> = b"123456789".iter().map(|&b| b as u32).collect();
        assert_eq!(spec.checksum(&symbols), 0x29B1);
    }

    #[test]
    fn empty_payload_is_init_state() {
        assert_eq!(byte_spec(2).checksum(&[]), 0xFFFF);
        assert_eq!(byte_spec(2).checksum(&[]), crc16_reference(&[]));
    }

    #[test]
    fn serialization_constraints() {
        assert!(matches!(
            CrcSpec::new(FieldSpec::new(257).unwrap(), Serialization::BytePerSymbol),
            Err(RelayError::FieldTooLarge(257))
        ));
        assert!(matches!(
            CrcSpec::new(FieldSpec::new(3).unwrap(), Serialization::PackedBits),
            Err(RelayError::PackedBitsNeedBinary(3))
        ));
        let packed = CrcSpec::new(FieldSpec::binary(), Serialization::PackedBits).unwrap();
        assert_eq!(packed.serialize(&[1, 0, 0, 0, 0, 0, 0, 1, 1]), vec![0x81, 0x80]);
    }

    #[test]
    fn single_symbol_changes_always_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (q, ser) in [(2, Serialization::BytePerSymbol), (2, Serialization::PackedBits), (5, Serialization::BytePerSymbol)] {
            let field = FieldSpec::new(q).unwrap();
            let spec = CrcSpec::new(field, ser).unwrap();
            for _ in 0..10_000 {
                let payload: Vec<u32> = (0..64).map(|_| rng.random_range(0..q)).collect();
                let mut flipped = payload.clone();
                let i = rng.random_range(0..64);
                flipped[i] = field.add(flipped[i], rng.random_range(1..q));
                assert_ne!(spec.checksum(&payload), spec.checksum(&flipped));
            }
        }
    }

    #[test]
    fn binary_injection_flips_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = vec![0u32; 64];
        for _ in 0..1000 {
            let y = inject_errors(FieldSpec::binary(), &x, 0.05, &mut rng);
            assert!(y.iter().all(|&v| v <= 1));
            assert!(y.contains(&1));
        }
    }

    #[test]
    fn injection_always_changes_something() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = FieldSpec::new(7).unwrap();
        for _ in 0..2000 {
            let x: Vec<u32> = (0..3).map(|_| rng.random_range(0..7)).collect();
            let y = inject_errors(f, &x, 0.01, &mut rng);
            assert!(x.iter().zip(&y).any(|(a, b)| a != b));
        }
    }

    #[test]
    fn injection_mean_weight_matches_conditional_binomial() {
        let (l, ps) = (64usize, 0.05f64);
        // E[W | W >= 1] for W ~ Binomial(L, p_s)
        let expected = l as f64 * ps / (1.0 - (1.0 - ps).powi(l as i32));
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = vec![0u32; l];
        let trials = 100_000;
        let total: usize = (0..trials)
            .map(|_| inject_errors(FieldSpec::binary(), &x, ps, &mut rng).iter().filter(|&&v| v != 0).count())
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean / expected - 1.0).abs() < 0.02, "mean {mean} vs {expected}");
    }

    fn encode_zero(n: usize, l: usize) -> FqMatrix {
        FqMatrix::zeros(FieldSpec::binary(), n, l)
    }

    #[test]
    fn perfect_and_dead_channels() {
        let spec = byte_spec(2);
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x = FqMatrix::random(FieldSpec::binary(), 12, 16, &mut rng);
        let perfect = ChannelParams::new(vec![0.0, 0.0], 0.05, 16).unwrap();
        let bufs = transmit(&x, &perfect, &spec, &mut rng);
        assert!(bufs.iter().flatten().all(|p| p.clean && p.passes_crc(&spec)));
        let d = deliver(&bufs, &spec, &mut rng);
        assert_eq!(d.clean, (0..12).collect::<Vec<_>>());
        assert!(d.corrupted.is_empty());
        assert_eq!(d.y, x);

        let dead = ChannelParams::new(vec![1.0, 1.0, 1.0], 0.05, 16).unwrap();
        let bufs = transmit(&x, &dead, &spec, &mut rng);
        assert!(bufs.iter().flatten().all(|p| !p.clean));
    }

    #[test]
    fn clean_copy_rate_per_drone() {
        let spec = byte_spec(2);
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let params = ChannelParams::new(vec![0.3, 0.8], 0.05, 4).unwrap();
        let x = encode_zero(100_000, 4);
        let bufs = transmit(&x, &params, &spec, &mut rng);
        for (m, eps) in [0.3, 0.8].into_iter().enumerate() {
            let rate = bufs[m].iter().filter(|p| p.clean).count() as f64 / 1e5;
            assert!((rate - (1.0 - eps)).abs() < 0.01, "drone {m}: {rate}");
        }
    }

    #[test]
    fn delivery_corruption_rate_is_product_of_erasures() {
        let spec = byte_spec(2);
        for (eps, seed) in [(vec![0.8, 0.8], 27u64), (vec![0.6], 28)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = ChannelParams::new(eps, 0.05, 8).unwrap();
            let trials = 100_000;
            let x = encode_zero(trials, 8);
            let bufs = transmit(&x, &params, &spec, &mut rng);
            let d = deliver(&bufs, &spec, &mut rng);
            let p = params.packet_error_prob();
            let rate = d.corrupted.len() as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((rate - p).abs() < 3.0 * sigma, "rate {rate} vs {p}");
            assert_eq!(d.clean.len() + d.corrupted.len(), trials);
        }
    }

    #[test]
    fn delivery_is_deterministic() {
        let spec = byte_spec(2);
        let params = ChannelParams::new(vec![0.7, 0.7], 0.1, 32).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = FqMatrix::random(FieldSpec::binary(), 20, 32, &mut rng);
            let bufs = transmit(&x, &params, &spec, &mut rng);
            (bufs.clone(), deliver(&bufs, &spec, &mut rng))
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ChannelParams::new(vec![], 0.05, 64).is_err());
        assert!(ChannelParams::new(vec![1.2], 0.05, 64).is_err());
        assert!(ChannelParams::new(vec![0.5], 0.0, 64).is_err());
        assert!(ChannelParams::new(vec![0.5], 0.05, 0).is_err());
    }

    #[test]
    fn dump_layout() {
        let spec = byte_spec(2);
        let p = FramedPacket::frame(3, vec![1, 0, 1], &spec);
        let mut out = Vec::new();
        write_packet_dump(&mut out, std::slice::from_ref(&p), &spec).unwrap();
        let crc = p.crc.to_be_bytes();
        assert_eq!(out, vec![0, 0, 0, 3, 0, 3, 1, 0, 1, crc[0], crc[1]]);
        assert_eq!(read_packet_dump(&out[..], &spec, 3).unwrap(), vec![p]);
        assert!(matches!(read_packet_dump(&out[..out.len() - 1], &spec, 3), Err(RelayError::TruncatedDump(_))));
    }

    proptest! {
        #[test]
        fn crate_crc_matches_reference(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            prop_assert_eq!(CRC16_CCITT_FALSE.checksum(&bytes), crc16_reference(&bytes));
        }

        #[test]
        fn dump_round_trip(seed in any::<u64>(), packed in any::<bool>(), l in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ser = if packed { Serialization::PackedBits } else { Serialization::BytePerSymbol };
            let spec = CrcSpec::new(FieldSpec::binary(), ser).unwrap();
            let packets: Vec<FramedPacket> = (0..5)
                .map(|i| {
                    let payload = (0..l).map(|_| rng.random_range(0..2)).collect();
                    let mut p = FramedPacket::frame(i * 7, payload, &spec);
                    if rng.random_bool(0.5) {
                        p.payload = inject_errors(spec.field, &p.payload, 0.3, &mut rng);
                        p.clean = false;
                    }
                    p
                })
                .collect();
            let mut out = Vec::new();
            write_packet_dump(&mut out, &packets, &spec).unwrap();
            let back = read_packet_dump(&out[..], &spec, l).unwrap();
            prop_assert_eq!(back.len(), packets.len());
            for (a, b) in back.iter().zip(&packets) {
                prop_assert_eq!(&a.payload, &b.payload);
                prop_assert_eq!(a.crc, b.crc);
                prop_assert_eq!(a.index, b.index);
                prop_assert_eq!(a.clean, a.passes_crc(&spec));
            }
        }
    }
}
