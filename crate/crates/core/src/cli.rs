//! The `sparkppr` command line: `design`, `spark` and `simulate`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 search infeasible, 4 missing
//! artifact, 1 any other runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::code::{poe_matrix, spark_subset_search, SparkSearch};
use crate::design::{design_entries, load_catalog, save_catalog, Catalog, DesignError, Scheme};
use crate::fqlinalg::{FieldSpec, FqMatrix};
use crate::relay::{write_packet_dump, ChannelParams, CrcSpec, Serialization};
use crate::sim::{delivered_packets, run_experiment, summarize, write_csv, CodingScheme, Decoder, ExperimentConfig, SimError};

pub const SEED_ENV: &str = "SPARKPPR_SEED";
pub const DEFAULT_SEED: u64 = 1;

pub const DESIGN_KEYS: &[&str] = &["q", "K", "eps", "scheme", "budget", "seed", "out", "workers"];
pub const SIMULATE_KEYS: &[&str] = &[
    "scheme", "decoder", "q", "K", "N", "M", "eps", "ps", "L", "trials", "seed", "catalog", "w_max", "work_cap", "crc", "out",
    "workers", "dump",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    MissingArtifact(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::MissingArtifact(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::NoBalancedPartner(_) => CliError::Infeasible(e.to_string()),
            DesignError::MissingEntry { .. } => CliError::MissingArtifact(e.to_string()),
            DesignError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(_) | SimError::Relay(_) => CliError::Usage(e.to_string()),
            SimError::MissingCatalog { .. } => CliError::MissingArtifact(e.to_string()),
            SimError::Design(d) => d.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Flat `key = value` configuration. `#` starts a comment; keys are case-sensitive.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Directory that relative paths in the file are resolved against.
    base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, allowed: &[&str], base_dir: &Path) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !allowed.contains(&k) {
                return Err(CliError::Usage(format!("config line {}: unknown key {k:?}", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self { values, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::MissingArtifact(format!("{}: {e}", path.display())))?;
        Self::parse(&text, allowed, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| CliError::Usage(format!("config key {key}: {e}"))),
        }
    }

    /// Resolves a path value relative to the config file directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }
}

/// Inclusive `a..b`, `a..=b`, a comma-separated list, or a single value.
pub fn parse_range(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Usage(format!("bad range {s:?}: {e}"));
    let s = s.trim();
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| bad(&e))?;
        let b: usize = b.trim().trim_start_matches('=').trim().parse().map_err(|e| bad(&e))?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse::<usize>()).collect::<Result<_, _>>().map_err(|e| bad(&e))?
    };
    if out.is_empty() {
        return Err(CliError::Usage(format!("range {s:?} is empty")));
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr<Err = String>>(s: &str) -> Result<Vec<T>, CliError> {
    s.split(',').map(|t| t.trim().parse::<T>().map_err(CliError::Usage)).collect()
}

#[derive(Parser, Debug)]
#[command(name = "sparkppr", version, about = "Spark-optimized linear codes with partial packet recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Flat `key = value` configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; falls back to the config file, then SPARKPPR_SEED
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search spark-maximizing designs and write a catalog
    Design {
        #[command(flatten)]
        common: Common,
        /// Prime field size
        #[arg(long)]
        q: Option<u32>,
        /// Number of source packets
        #[arg(short = 'K', long = "K")]
        k: Option<usize>,
        /// Redundancy range, e.g. 1..10
        #[arg(long)]
        eps: Option<String>,
        /// MSLC, OSPRLC or both (comma separated)
        #[arg(long)]
        scheme: Option<String>,
        /// Spark evaluations per search
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Spark of a matrix file, with one dependent column set
    Spark {
        /// Header `q rows cols`, then one row per line
        matrix: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Only search dependent sets up to this size
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Monte Carlo decoding-probability curves
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the config `trials` key
        #[arg(long)]
        trials: Option<u64>,
    },
}

fn resolve_seed(flag: Option<u64>, config: &RunConfig) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = config.get("seed") {
        return s.parse().map_err(|e| CliError::Usage(format!("config key seed: {e}")));
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|e| CliError::Usage(format!("{SEED_ENV}: {e}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn load_config(common: &Common, allowed: &[&str]) -> Result<RunConfig, CliError> {
    match &common.config {
        Some(p) => RunConfig::load(p, allowed),
        None => Ok(RunConfig { values: BTreeMap::new(), base_dir: PathBuf::from(".") }),
    }
}

fn with_workers<T>(common: &Common, config: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let workers = match common.workers {
        Some(w) => w,
        None => config.parse_or("workers", 0usize)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(pool.install(f))
}

fn write_output(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Output text of the design command.
pub fn cmd_design(
    common: &Common,
    q: Option<u32>,
    k: Option<usize>,
    eps: Option<String>,
    scheme: Option<String>,
    budget: Option<u64>,
) -> Result<String, CliError> {
    let mut cfg = load_config(common, DESIGN_KEYS)?;
    if let Some(v) = q {
        cfg.set("q", v);
    }
    if let Some(v) = k {
        cfg.set("K", v);
    }
    if let Some(v) = eps {
        cfg.set("eps", v);
    }
    if let Some(v) = scheme {
        cfg.set("scheme", v);
    }
    if let Some(v) = budget {
        cfg.set("budget", v);
    }
    let field = FieldSpec::new(cfg.parse_or("q", 2u32)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let k: usize = cfg.parse_or("K", 8)?;
    let eps_range = parse_range(cfg.get("eps").unwrap_or("1..10"))?;
    let schemes: Vec<Scheme> = match cfg.get("scheme") {
        None => vec![Scheme::Mslc, Scheme::Osprlc],
        Some(s) if s.eq_ignore_ascii_case("both") => vec![Scheme::Mslc, Scheme::Osprlc],
        Some(s) => parse_list(s)?,
    };
    let budget: u64 = cfg.parse_or("budget", 1_000_000)?;
    if budget == 0 || k == 0 || eps_range.contains(&0) {
        return Err(CliError::Usage("budget, K and every epsilon must be at least 1".into()));
    }
    let seed = resolve_seed(common.seed, &cfg)?;
    let out = common.out.clone().or_else(|| cfg.path("out"));

    let entries = with_workers(common, &cfg, || {
        eps_range.iter().map(|&e| design_entries(field, k, e, budget, seed, &schemes)).collect::<Result<Vec<_>, _>>()
    })??;
    let mut catalog = Catalog::new(field, k);
    for e in entries.into_iter().flatten() {
        catalog.insert(e)?;
    }

    let mut text = String::new();
    let _ = writeln!(text, "# q={} K={k} budget={budget} seed={seed}", field.q());
    let _ = write!(text, "{:>4} {:>12} {:>6}", "N", "prop_of_1", "spark");
    if schemes.contains(&Scheme::Osprlc) {
        let _ = write!(text, " {:>7} {:>8}", "lowest", "highest");
    }
    text.push('\n');
    for &e in &eps_range {
        let n = k + e;
        let (prop, spark) = match catalog.get(Scheme::Mslc, e).or_else(|| catalog.get(Scheme::Osprlc, e)) {
            Some(entry) => {
                let m = &entry.matrices[0];
                let r = poe_matrix(&m.p, 1).map_err(|err| CliError::Runtime(err.to_string()))?;
                (format!("{:.4}", *r.numer() as f64 / *r.denom() as f64), spark_text(m.spark.finite()))
            }
            None => continue,
        };
        let _ = write!(text, "{n:>4} {prop:>12} {spark:>6}");
        if let Some(entry) = catalog.get(Scheme::Osprlc, e) {
            let _ = write!(text, " {:>7} {:>8}", spark_text(entry.lowest_spark().finite()), spark_text(entry.highest_spark().finite()));
        }
        text.push('\n');
    }
    if let Some(path) = out {
        save_catalog(&catalog, &path)?;
        let _ = writeln!(text, "# catalog written to {}", path.display());
    }
    Ok(text)
}

fn spark_text(s: Option<usize>) -> String {
    s.map_or_else(|| "unbounded".to_string(), |v| v.to_string())
}

/// Output text of the spark command; witness columns are 1-based.
pub fn cmd_spark(common: &Common, matrix: &Path, cap: Option<usize>) -> Result<String, CliError> {
    let text = fs::read_to_string(matrix).map_err(|e| CliError::MissingArtifact(format!("{}: {e}", matrix.display())))?;
    let a: FqMatrix = text.parse().map_err(|e| CliError::Usage(format!("{}: {e}", matrix.display())))?;
    let out = match spark_subset_search(&a, cap) {
        SparkSearch::Found { spark, witness } => {
            let w: Vec<String> = witness.iter().map(|c| (c + 1).to_string()).collect();
            format!("spark: {spark}\nwitness: {{{}}}\n", w.join(","))
        }
        SparkSearch::Unbounded => "spark: unbounded\n".to_string(),
        SparkSearch::ExceedsCap(c) => format!("spark: > {c}\n"),
    };
    if let Some(path) = &common.out {
        write_output(path, out.as_bytes())?;
    }
    Ok(out)
}

/// Builds the experiment described by a simulate configuration.
pub fn experiment_from_config(cfg: &RunConfig, seed: u64) -> Result<ExperimentConfig, CliError> {
    let field = FieldSpec::new(cfg.parse_or("q", 2u32)?).map_err(|e| CliError::Usage(e.to_string()))?;
    let k: usize = cfg.parse_or("K", 8)?;
    let n_range = parse_range(cfg.get("N").ok_or_else(|| CliError::Usage("config key N is required".into()))?)?;
    let schemes: Vec<CodingScheme> = parse_list(cfg.get("scheme").unwrap_or("RLC"))?;
    let decoders: Vec<Decoder> = parse_list(cfg.get("decoder").unwrap_or("plain,SD"))?;
    let m: usize = cfg.parse_or("M", 2)?;
    let eps_text = cfg.get("eps").unwrap_or("0.8");
    let mut epsilons: Vec<f64> = eps_text
        .split(';')
        .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("config key eps: {e}"))))
        .collect::<Result<_, _>>()?;
    if epsilons.len() == 1 {
        epsilons = vec![epsilons[0]; m];
    } else if epsilons.len() != m {
        return Err(CliError::Usage(format!("eps lists {} values for M = {m}", epsilons.len())));
    }
    let channel = ChannelParams::new(epsilons, cfg.parse_or("ps", 0.05)?, cfg.parse_or("L", 64)?)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let serialization = match cfg.get("crc").unwrap_or("bytes") {
        "bytes" => Serialization::BytePerSymbol,
        "bits" => Serialization::PackedBits,
        other => return Err(CliError::Usage(format!("config key crc: expected bytes or bits, got {other:?}"))),
    };
    let catalog = match cfg.path("catalog") {
        None => None,
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingArtifact(format!("catalog {} not found", p.display())));
            }
            Some(Arc::new(load_catalog(&p).map_err(|e| match e {
                DesignError::Io(_) => CliError::MissingArtifact(format!("{}: {e}", p.display())),
                other => CliError::Usage(format!("{}: {other}", p.display())),
            })?))
        }
    };
    let w_max = match cfg.get("w_max") {
        None | Some("auto") => None,
        Some(v) => Some(v.parse().map_err(|e| CliError::Usage(format!("config key w_max: {e}")))?),
    };
    Ok(ExperimentConfig {
        field,
        k,
        n_range,
        schemes,
        decoders,
        channel,
        serialization,
        trials: cfg.parse_or("trials", 10_000)?,
        root_seed: seed,
        catalog,
        w_max,
        work_cap: cfg.parse_or("work_cap", crate::ppr::DEFAULT_WORK_CAP)?,
    })
}

/// FNV-1a over the normalized configuration and seed.
fn fingerprint(cfg: &RunConfig, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: &[u8]| {
        for &x in b {
            h ^= x as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for (k, v) in &cfg.values {
        if k != "out" && k != "workers" {
            eat(k.as_bytes());
            eat(b"=");
            eat(v.as_bytes());
            eat(b"\n");
        }
    }
    eat(&seed.to_le_bytes());
    h
}

/// Output text of the simulate command. Without an output path the CSV itself is printed.
pub fn cmd_simulate(common: &Common, trials: Option<u64>) -> Result<String, CliError> {
    let path = common.config.as_ref().ok_or_else(|| CliError::Usage("simulate needs --config".into()))?;
    let mut cfg = RunConfig::load(path, SIMULATE_KEYS)?;
    if let Some(t) = trials {
        cfg.set("trials", t);
    }
    let seed = resolve_seed(common.seed, &cfg)?;
    let exp = experiment_from_config(&cfg, seed)?;
    exp.validate()?;
    let out = common.out.clone().or_else(|| cfg.path("out"));

    let results = with_workers(common, &cfg, || run_experiment(&exp))??;
    let rows = summarize(&exp, &results)?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &rows)?;

    if let Some(dump) = cfg.path("dump") {
        let spec = CrcSpec::new(exp.field, exp.serialization).map_err(|e| CliError::Usage(e.to_string()))?;
        let packets = delivered_packets(&exp, exp.schemes[0], exp.n_range[0], 0)?;
        let mut buf = Vec::new();
        write_packet_dump(&mut buf, &packets, &spec).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_output(&dump, &buf)?;
    }

    let Some(out) = out else {
        return Ok(String::from_utf8(csv).expect("CSV is UTF-8"));
    };
    write_output(&out, &csv)?;
    let mut text = String::new();
    let _ = writeln!(text, "# seed={seed} trials={} fingerprint={:016x}", exp.trials, fingerprint(&cfg, seed));
    for r in &rows {
        let _ = writeln!(text, "{:<7} {:<5} N={:<3} p={} [{}, {}]", r[0], r[1], r[4], r[10], r[11], r[12]);
    }
    for s in &results.schemes {
        if s.false_accepts > 0 || s.work_cap_hits > 0 {
            let _ = writeln!(text, "# {}: {} CRC false accepts, {} work-cap hits", s.scheme, s.false_accepts, s.work_cap_hits);
        }
    }
    let _ = writeln!(text, "# results written to {}", out.display());
    Ok(text)
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Design { common, q, k, eps, scheme, budget } => cmd_design(&common, q, k, eps, scheme, budget),
        Command::Spark { matrix, common, cap } => cmd_spark(&common, &matrix, cap),
        Command::Simulate { common, trials } => cmd_simulate(&common, trials),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        let text = "# comment\nq = 2\nK=8 # trailing\n\nN = 12..16\n";
        let c = RunConfig::parse(text, SIMULATE_KEYS, Path::new("/cfg")).unwrap();
        assert_eq!(c.get("K"), Some("8"));
        assert_eq!(c.get("N"), Some("12..16"));
        let err = RunConfig::parse("bogus = 1\n", SIMULATE_KEYS, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("unknown key") && err.exit_code() == 2);
        assert!(RunConfig::parse("q = 2\nq = 3\n", SIMULATE_KEYS, Path::new(".")).is_err());
        assert!(RunConfig::parse("q 2\n", SIMULATE_KEYS, Path::new(".")).is_err());
        let c = RunConfig::parse("catalog = cat.json\n", SIMULATE_KEYS, Path::new("/cfg")).unwrap();
        assert_eq!(c.path("catalog"), Some(PathBuf::from("/cfg/cat.json")));
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("12..16").unwrap(), vec![12, 13, 14, 15, 16]);
        assert_eq!(parse_range("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_range("29").unwrap(), vec![29]);
        assert_eq!(parse_range("9, 11").unwrap(), vec![9, 11]);
        assert!(parse_range("5..4").is_err());
        assert!(parse_range("x").is_err());
    }

    #[test]
    fn experiment_defaults() {
        let c = RunConfig::parse("N = 29\nscheme = RLC\ndecoder = plain\n", SIMULATE_KEYS, Path::new(".")).unwrap();
        let e = experiment_from_config(&c, 5).unwrap();
        assert_eq!(e.k, 8);
        assert_eq!(e.channel.epsilons, vec![0.8, 0.8]);
        assert_eq!(e.channel.payload_len, 64);
        assert_eq!(e.decoders, vec![Decoder::Plain]);
        assert_eq!(e.root_seed, 5);
        let c = RunConfig::parse("N = 29\neps = 0.1;0.2;0.3\n", SIMULATE_KEYS, Path::new(".")).unwrap();
        assert!(experiment_from_config(&c, 5).is_err());
        let c = RunConfig::parse("N = 29\ncatalog = /nonexistent/cat.json\n", SIMULATE_KEYS, Path::new(".")).unwrap();
        assert_eq!(experiment_from_config(&c, 5).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn seed_precedence() {
        let c = RunConfig::parse("seed = 7\n", DESIGN_KEYS, Path::new(".")).unwrap();
        assert_eq!(resolve_seed(Some(3), &c).unwrap(), 3);
        assert_eq!(resolve_seed(None, &c).unwrap(), 7);
    }
}
