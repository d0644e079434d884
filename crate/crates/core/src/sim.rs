//! Monte Carlo decoding-probability experiments.
//!
//! Every trial draws `P`, random source packets `U`, sends `X = G U` through the relay
//! channel and decodes the delivered packets twice: with the plain decoder and, when
//! requested, with syndrome-decoding repair. Each `(N, trial)` pair owns its own RNG
//! streams, so results do not depend on scheduling, and all schemes at the same `(N,
//! trial)` see the same source data and channel realization.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::code::SystematicCode;
use crate::design::{sample_design, Catalog, DesignError, Scheme};
use crate::fqlinalg::{FieldSpec, FqMatrix};
use crate::ppr::{decode, DecodeOptions, PprError, ReceptionState, RepairOptions, DEFAULT_WORK_CAP};
use crate::relay::{deliver, transmit, ChannelParams, CrcSpec, Delivery, FramedPacket, RelayError, Serialization};

pub const CSV_HEADER: [&str; 16] = [
    "scheme", "decoder", "q", "K", "N", "M", "eps", "ps", "L", "trials", "p_decode", "ci_low", "ci_high", "p_cond_met",
    "p_cond_not_met", "seed",
];

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("{scheme} needs a design catalog")]
    MissingCatalog { scheme: CodingScheme },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Ppr(#[from] PprError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodingScheme {
    Rlc,
    Mslc,
    Osprlc,
}

impl fmt::Display for CodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodingScheme::Rlc => "RLC",
            CodingScheme::Mslc => "MSLC",
            CodingScheme::Osprlc => "OSPRLC",
        })
    }
}

impl FromStr for CodingScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "").as_str() {
            "RLC" => Ok(CodingScheme::Rlc),
            "MSLC" => Ok(CodingScheme::Mslc),
            "OSPRLC" => Ok(CodingScheme::Osprlc),
            _ => Err(format!("unknown scheme {s:?}")),
        }
    }
}

impl CodingScheme {
    fn catalog_scheme(self) -> Option<Scheme> {
        match self {
            CodingScheme::Rlc => None,
            CodingScheme::Mslc => Some(Scheme::Mslc),
            CodingScheme::Osprlc => Some(Scheme::Osprlc),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decoder {
    Plain,
    WithSd,
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decoder::Plain => "plain",
            Decoder::WithSd => "SD",
        })
    }
}

impl FromStr for Decoder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "plain" => Ok(Decoder::Plain),
            "sd" | "with_sd" => Ok(Decoder::WithSd),
            _ => Err(format!("unknown decoder {s:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    pub k: usize,
    pub n_range: Vec<usize>,
    pub schemes: Vec<CodingScheme>,
    pub decoders: Vec<Decoder>,
    pub channel: ChannelParams,
    pub serialization: Serialization,
    pub trials: u64,
    pub root_seed: u64,
    pub catalog: Option<Arc<Catalog>>,
    /// Largest error weight per syndrome column; `None` means every corrupted row.
    pub w_max: Option<usize>,
    pub work_cap: u64,
}

impl ExperimentConfig {
    /// K = 8 over `F_2`, two drones at ε = 0.8, `p_s` = 0.05, L = 64, RLC with both decoders.
    pub fn new(k: usize, n_range: Vec<usize>, trials: u64, root_seed: u64) -> Self {
        Self {
            field: FieldSpec::binary(),
            k,
            n_range,
            schemes: vec![CodingScheme::Rlc],
            decoders: vec![Decoder::Plain, Decoder::WithSd],
            channel: ChannelParams::new(vec![0.8, 0.8], 0.05, 64).expect("valid defaults"),
            serialization: Serialization::BytePerSymbol,
            trials,
            root_seed,
            catalog: None,
            w_max: None,
            work_cap: DEFAULT_WORK_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.n_range.is_empty() {
            return bad("N range is empty".into());
        }
        if let Some(&n) = self.n_range.iter().find(|&&n| n <= self.k) {
            return bad(format!("N = {n} must exceed K = {}", self.k));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.schemes.is_empty() || self.decoders.is_empty() {
            return bad("at least one scheme and one decoder are required".into());
        }
        self.channel.validate()?;
        CrcSpec::new(self.field, self.serialization)?;
        for &s in &self.schemes {
            if let Some(cs) = s.catalog_scheme() {
                let cat = self.catalog.as_ref().ok_or(SimError::MissingCatalog { scheme: s })?;
                if cat.field != self.field || cat.k != self.k {
                    return bad(format!("catalog is for q={} K={}, experiment uses q={} K={}", cat.field.q(), cat.k, self.field.q(), self.k));
                }
                for &n in &self.n_range {
                    if cat.get(cs, n - self.k).is_none() {
                        return Err(DesignError::MissingEntry { scheme: cs, epsilon: n - self.k }.into());
                    }
                }
            }
        }
        Ok(())
    }

    fn wants_sd(&self) -> bool {
        self.decoders.contains(&Decoder::WithSd)
    }
}

/// Independent streams for the code draw, the source data and the channel.
fn trial_rngs(root_seed: u64, n: usize, trial: u64) -> [ChaCha8Rng; 3] {
    let stream = ((n as u64) << 40) ^ trial;
    [0u64, 1, 2].map(|purpose| {
        let mut rng = ChaCha8Rng::seed_from_u64(root_seed.wrapping_add(purpose.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        rng.set_stream(stream);
        rng
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub plain_success: bool,
    /// Equal to `plain_success` when syndrome decoding was not needed or not requested.
    pub sd_success: bool,
    pub sd_invoked: bool,
    pub nu: usize,
    /// Per syndrome column: `None` unsolved, otherwise the uniqueness certificate.
    pub column_certificates: Vec<Option<bool>>,
    /// Every solved column was certified unique.
    pub all_certified: bool,
    /// CRC-passing rows that differ from the transmitted packet, at delivery or after repair.
    pub false_accepts: usize,
    /// Every repaired row equals its transmitted packet.
    pub repair_correct: bool,
    pub work_cap_hits: usize,
}

impl TrialOutcome {
    pub fn rescued(&self) -> bool {
        self.sd_success && !self.plain_success
    }
}

/// Everything a trial produces before decoding.
struct Transmission {
    code: SystematicCode,
    u: FqMatrix,
    x: FqMatrix,
    delivery: Delivery,
    spec: CrcSpec,
}

fn transmit_trial(config: &ExperimentConfig, scheme: CodingScheme, n: usize, trial: u64) -> Result<Transmission, SimError> {
    let field = config.field;
    let k = config.k;
    let [mut rng_code, mut rng_data, mut rng_chan] = trial_rngs(config.root_seed, n, trial);
    let p = match scheme.catalog_scheme() {
        None => FqMatrix::random(field, n - k, k, &mut rng_code),
        Some(cs) => {
            let cat = config.catalog.as_ref().ok_or(SimError::MissingCatalog { scheme })?;
            sample_design(cat, cs, n - k, &mut rng_code)?.clone()
        }
    };
    let code = SystematicCode::new(p).map_err(|e| SimError::Invalid(e.to_string()))?;
    let u = FqMatrix::random(field, k, config.channel.payload_len, &mut rng_data);
    let x = code.generator().mul(&u).map_err(PprError::from)?;
    let spec = CrcSpec::new(field, config.serialization)?;
    let buffers = transmit(&x, &config.channel, &spec, &mut rng_chan);
    let delivery = deliver(&buffers, &spec, &mut rng_chan);
    Ok(Transmission { code, u, x, delivery, spec })
}

/// The packets a trial's ground station stores, framed with their stored checksums.
pub fn delivered_packets(config: &ExperimentConfig, scheme: CodingScheme, n: usize, trial: u64) -> Result<Vec<FramedPacket>, SimError> {
    let t = transmit_trial(config, scheme, n, trial)?;
    let d = &t.delivery;
    Ok((0..n)
        .map(|i| FramedPacket {
            index: i,
            payload: d.y.row(i).to_vec(),
            crc: d.crcs[i],
            clean: d.y.row(i) == t.x.row(i),
        })
        .collect())
}

pub fn run_trial(config: &ExperimentConfig, scheme: CodingScheme, n: usize, trial: u64) -> Result<TrialOutcome, SimError> {
    let Transmission { code, u, x, delivery, spec } = transmit_trial(config, scheme, n, trial)?;
    let delivered_false = delivery.false_accepts.len();
    let state = ReceptionState::from_delivery(code, delivery, spec)?;

    let (_, plain) = decode(&state, DecodeOptions::default())?;
    let plain_success = plain.source.as_ref() == Some(&u);
    let mut out = TrialOutcome {
        plain_success,
        sd_success: plain_success,
        false_accepts: delivered_false,
        all_certified: true,
        repair_correct: true,
        ..Default::default()
    };
    if plain_success || !config.wants_sd() {
        return Ok(out);
    }
    let opts = DecodeOptions {
        syndrome_decoding: true,
        repair: RepairOptions { w_max: config.w_max, work_cap: config.work_cap },
    };
    let (next, report) = decode(&state, opts)?;
    out.sd_invoked = report.sd_invoked;
    out.sd_success = report.source.as_ref() == Some(&u);
    out.nu = report.nu;
    out.column_certificates = report.column_certificates();
    if let Some(mut repair) = report.repair {
        repair.audit(&next, &x);
        out.false_accepts += repair.false_accepts;
        out.repair_correct = repair.false_accepts == 0;
        out.all_certified = repair.all_certified();
        out.work_cap_hits = repair.work_cap_hits;
    }
    Ok(out)
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub successes: u64,
    pub trials: u64,
    pub p_decode: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CurvePoint {
    pub fn new(n: usize, successes: u64, trials: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        Self { n, successes, trials, p_decode: successes as f64 / trials as f64, ci_low, ci_high }
    }

    /// The 95% intervals of the two points overlap.
    pub fn overlaps(&self, other: &CurvePoint) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionPoint {
    pub n: usize,
    /// Rescued trials whose solved columns were all certified unique.
    pub met: u64,
    pub not_met: u64,
    pub trials: u64,
    pub p_cond_met: f64,
    pub p_cond_not_met: f64,
}

impl DecompositionPoint {
    fn new(n: usize, met: u64, not_met: u64, trials: u64) -> Self {
        let t = trials as f64;
        Self { n, met, not_met, trials, p_cond_met: met as f64 / t, p_cond_not_met: not_met as f64 / t }
    }
}

/// Aggregates for one scheme over the whole N range.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeResults {
    pub scheme: CodingScheme,
    pub plain: Vec<CurvePoint>,
    /// Present when syndrome decoding was requested.
    pub sd: Option<Vec<CurvePoint>>,
    pub decomposition: Option<Vec<DecompositionPoint>>,
    pub false_accepts: u64,
    pub work_cap_hits: u64,
}

impl SchemeResults {
    pub fn curve(&self, decoder: Decoder) -> Option<&[CurvePoint]> {
        match decoder {
            Decoder::Plain => Some(&self.plain),
            Decoder::WithSd => self.sd.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResults {
    pub schemes: Vec<SchemeResults>,
}

impl ExperimentResults {
    pub fn scheme(&self, s: CodingScheme) -> Option<&SchemeResults> {
        self.schemes.iter().find(|r| r.scheme == s)
    }
}

/// Outcomes of every trial for one `(scheme, N)`, in trial order.
pub fn run_point(config: &ExperimentConfig, scheme: CodingScheme, n: usize) -> Result<Vec<TrialOutcome>, SimError> {
    (0..config.trials).into_par_iter().map(|t| run_trial(config, scheme, n, t)).collect()
}

/// Runs every `(scheme, N)` point. Plain and SD decoding share the delivered packets of
/// each trial.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults, SimError> {
    config.validate()?;
    let mut schemes = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let mut plain = Vec::new();
        let mut sd = Vec::new();
        let mut decomposition = Vec::new();
        let (mut false_accepts, mut work_cap_hits) = (0, 0);
        for &n in &config.n_range {
            let outcomes = run_point(config, scheme, n)?;
            let (mut p, mut s, mut met, mut not_met) = (0, 0, 0, 0);
            for o in &outcomes {
                p += o.plain_success as u64;
                s += o.sd_success as u64;
                if o.rescued() {
                    if o.all_certified {
                        met += 1;
                    } else {
                        not_met += 1;
                    }
                }
                false_accepts += o.false_accepts as u64;
                work_cap_hits += o.work_cap_hits as u64;
            }
            plain.push(CurvePoint::new(n, p, config.trials));
            sd.push(CurvePoint::new(n, s, config.trials));
            decomposition.push(DecompositionPoint::new(n, met, not_met, config.trials));
        }
        let with_sd = config.wants_sd();
        schemes.push(SchemeResults {
            scheme,
            plain,
            sd: with_sd.then_some(sd),
            decomposition: with_sd.then_some(decomposition),
            false_accepts,
            work_cap_hits,
        });
    }
    Ok(ExperimentResults { schemes })
}

/// Decoding-probability curve of the first configured scheme and decoder.
pub fn estimate_curve(config: &ExperimentConfig) -> Result<Vec<CurvePoint>, SimError> {
    let results = run_experiment(config)?;
    let decoder = config.decoders[0];
    Ok(results.schemes[0].curve(decoder).expect("decoder was run").to_vec())
}

/// Split of the SD gain of the first configured scheme by the uniqueness certificate.
pub fn decompose_sd_contribution(config: &ExperimentConfig) -> Result<Vec<DecompositionPoint>, SimError> {
    if !config.wants_sd() {
        return Err(SimError::Invalid("decomposition needs the SD decoder".into()));
    }
    let results = run_experiment(config)?;
    Ok(results.schemes[0].decomposition.clone().expect("SD was run"))
}

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.5}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// One CSV record per `(scheme, decoder, N)` in configuration order.
pub fn summarize(config: &ExperimentConfig, results: &ExperimentResults) -> Result<Vec<Vec<String>>, SimError> {
    if config.n_range.is_empty() {
        return Err(SimError::Invalid("N range is empty".into()));
    }
    let eps = config.channel.epsilons.iter().map(|&e| sig6(e)).collect::<Vec<_>>().join(";");
    let mut rows = Vec::new();
    for r in &results.schemes {
        for &decoder in &config.decoders {
            let curve = r.curve(decoder).ok_or_else(|| SimError::Invalid(format!("{decoder} curve missing")))?;
            for (i, pt) in curve.iter().enumerate() {
                let (met, not_met) = match (decoder, &r.decomposition) {
                    (Decoder::WithSd, Some(d)) => (sig6(d[i].p_cond_met), sig6(d[i].p_cond_not_met)),
                    _ => (String::new(), String::new()),
                };
                rows.push(vec![
                    r.scheme.to_string(),
                    decoder.to_string(),
                    config.field.q().to_string(),
                    config.k.to_string(),
                    pt.n.to_string(),
                    config.channel.drones().to_string(),
                    eps.clone(),
                    sig6(config.channel.symbol_error_prob),
                    config.channel.payload_len.to_string(),
                    pt.trials.to_string(),
                    sig6(pt.p_decode),
                    sig6(pt.ci_low),
                    sig6(pt.ci_high),
                    met,
                    not_met,
                    config.root_seed.to_string(),
                ]);
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(w: W, rows: &[Vec<String>]) -> Result<(), SimError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Catalog;

    fn config(n_range: Vec<usize>, trials: u64, eps: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(4, n_range, trials, 99);
        c.channel = ChannelParams::new(vec![eps, eps], 0.05, 16).unwrap();
        c
    }

    #[test]
    fn perfect_channel_always_decodes() {
        let c = config(vec![5, 6, 8], 200, 0.0);
        let r = run_experiment(&c).unwrap();
        for pt in r.schemes[0].plain.iter().chain(r.schemes[0].sd.as_ref().unwrap()) {
            assert_eq!(pt.successes, 200);
            assert_eq!(pt.p_decode, 1.0);
        }
    }

    #[test]
    fn n_equal_k_fails_with_any_corruption() {
        // ε = 1 corrupts everything, so the plain decoder has no clean rows at all
        let mut c = config(vec![5], 50, 1.0);
        c.k = 4;
        for t in 0..50 {
            assert!(!run_trial(&c, CodingScheme::Rlc, 5, t).unwrap().plain_success);
        }
    }

    #[test]
    fn sd_dominates_plain_pointwise() {
        let c = config(vec![6, 8, 10], 300, 0.8);
        for &n in &c.n_range {
            for o in run_point(&c, CodingScheme::Rlc, n).unwrap() {
                assert!(o.sd_success >= o.plain_success);
                if o.plain_success {
                    assert!(!o.sd_invoked);
                }
            }
        }
    }

    #[test]
    fn decomposition_partitions_sd_gain() {
        let c = config(vec![6, 7, 8, 9, 10], 400, 0.8);
        let r = run_experiment(&c).unwrap();
        let s = &r.schemes[0];
        for ((p, sd), d) in s.plain.iter().zip(s.sd.as_ref().unwrap()).zip(s.decomposition.as_ref().unwrap()) {
            assert_eq!(d.met + d.not_met, sd.successes - p.successes);
        }
        assert!(s.sd.as_ref().unwrap().iter().zip(&s.plain).any(|(a, b)| a.successes > b.successes));
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let c = config(vec![6, 9], 300, 0.7);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let r = run_experiment(&c).unwrap();
                let mut buf = Vec::new();
                write_csv(&mut buf, &summarize(&c, &r).unwrap()).unwrap();
                buf
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn decoding_probability_grows_with_n() {
        let c = config((5..=14).collect(), 2000, 0.6);
        let r = run_experiment(&c).unwrap();
        for w in r.schemes[0].plain.windows(2) {
            assert!(w[1].p_decode >= w[0].p_decode || w[1].overlaps(&w[0]), "{w:?}");
        }
    }

    #[test]
    fn catalog_schemes_need_a_catalog() {
        let mut c = config(vec![6], 10, 0.5);
        c.schemes = vec![CodingScheme::Mslc];
        assert!(matches!(run_experiment(&c), Err(SimError::MissingCatalog { .. })));
        c.catalog = Some(Arc::new(Catalog::build(FieldSpec::binary(), 4, 1, 100, 0).unwrap()));
        assert!(matches!(run_experiment(&c), Err(SimError::Design(DesignError::MissingEntry { .. }))));
        c.catalog = Some(Arc::new(Catalog::build(FieldSpec::binary(), 4, 2, 100, 0).unwrap()));
        c.schemes = vec![CodingScheme::Mslc, CodingScheme::Osprlc];
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.schemes.len(), 2);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(run_experiment(&config(vec![], 10, 0.5)).is_err());
        assert!(run_experiment(&config(vec![4], 10, 0.5)).is_err());
        assert!(run_experiment(&config(vec![6], 0, 0.5)).is_err());
        let c = config(vec![6], 10, 0.5);
        assert!(matches!(decompose_sd_contribution(&ExperimentConfig { decoders: vec![Decoder::Plain], ..c }), Err(SimError::Invalid(_))));
    }

    #[test]
    fn csv_shape_and_format() {
        let mut c = config(vec![6, 7], 20, 0.5);
        c.schemes = vec![CodingScheme::Rlc];
        let r = run_experiment(&c).unwrap();
        let rows = summarize(&c, &r).unwrap();
        assert_eq!(rows.len(), 2 * 2);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scheme,decoder,q,K,N,M,eps,ps,L,trials,p_decode,ci_low,ci_high,p_cond_met,p_cond_not_met,seed\n"));
        let first: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(&first[..10], &["RLC", "plain", "2", "4", "6", "2", "0.500000;0.500000", "0.0500000", "16", "20"]);
        assert_eq!(first[13], "");
        assert_eq!(first[15], "99");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig6(0.68), "0.680000");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(0.05), "0.0500000");
        assert_eq!(sig6(0.0), "0.00000");
        assert_eq!(sig6(123.456789), "123.457");
    }

    #[test]
    fn wilson_matches_closed_form() {
        // 50/100: center 0.5, half-width z·sqrt(0.25/100 + z²/40000)/(1 + z²/100)
        let (lo, hi) = wilson_interval(50, 100);
        let z = Z95;
        let half = z * (0.0025f64 + z * z / 40000.0).sqrt() / (1.0 + z * z / 100.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12 && (hi - (0.5 + half)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
        let (lo, hi) = wilson_interval(10, 10);
        assert!(lo > 0.65 && (hi - 1.0).abs() < 1e-12);
    }

    /// `∏_{i<K} (1 − q^{−(r−i)})`
    fn full_rank_probability(k: usize, r: usize) -> f64 {
        (0..k).map(|i| 1.0 - 2f64.powi(-((r - i) as i32))).product()
    }

    #[test]
    fn full_rank_formula_matches_enumeration() {
        let f = FieldSpec::binary();
        for (k, r) in [(1, 1), (2, 2), (2, 3), (3, 3), (2, 4)] {
            let total = 1u64 << (k * r);
            let full = (0..total)
                .filter(|&bits| {
                    let e: Vec<u32> = (0..k * r).map(|i| ((bits >> i) & 1) as u32).collect();
                    FqMatrix::new(f, r, k, e).unwrap().rank() == k
                })
                .count();
            assert!((full as f64 / total as f64 - full_rank_probability(k, r)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_generator_rank_probability() {
        let f = FieldSpec::binary();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples = 20_000;
        for k in 1..=4 {
            for r in k..=8 {
                let p = full_rank_probability(k, r);
                let hits = (0..samples).filter(|_| FqMatrix::random(f, r, k, &mut rng).rank() == k).count();
                let sigma = (p * (1.0 - p) / samples as f64).sqrt();
                let est = hits as f64 / samples as f64;
                assert!((est - p).abs() <= 3.0 * sigma + 1e-9, "K={k} r={r}: {est} vs {p}");
            }
        }
    }
}
