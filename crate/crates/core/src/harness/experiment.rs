//! Decoding experiments: configuration, per-trial pipeline, summaries and
//! result files.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::fidelity::{fidelity_bound, success_floor, FormulaEvaluator, FORMULA_CAP};
use crate::doped::{sample_doped_circuit, DopedCircuit, Ensemble, MAX_T};
use crate::learner::{learn_groups, LearnOptions, LearnedGroups, OracleMode, QueryOracle};
use crate::oracle::{build_scrambled_state, decode_and_project, Decoder, MAX_DENSE_QUBITS};
use crate::pauli::SubsystemMask;
use crate::synth::{synthesize_symplectic_part, DecoderBundle};

pub const CSV_SCHEMA: &str = "# schema: cliffdec-trials v1";

/// Largest `2n + 2|A|` for which `--oracle auto` runs the statevector.
pub const AUTO_ORACLE_QUBITS: usize = 20;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    Generic,
    Simplified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LearnerMode {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OracleUse {
    On,
    Off,
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed gap between formula and statevector fidelities.
    pub formula_oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { formula_oracle: 1e-9 }
    }
}

/// Validated experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub t: usize,
    pub a_size: usize,
    pub d_size: usize,
    pub ensemble: EnsembleKind,
    /// Brickwork depth; `3n` when absent.
    pub depth: Option<usize>,
    pub trials: usize,
    pub shots: u32,
    pub seed: u64,
    pub mode: LearnerMode,
    pub oracle: OracleUse,
    pub tolerances: Tolerances,
    pub out: Option<PathBuf>,
}

/// Config file contents and flag overrides before validation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartialConfig {
    pub n: Option<usize>,
    pub t: Option<usize>,
    pub a_size: Option<usize>,
    pub d_size: Option<usize>,
    pub ensemble: Option<EnsembleKind>,
    pub depth: Option<usize>,
    pub trials: Option<usize>,
    pub shots: Option<u32>,
    pub seed: Option<u64>,
    pub mode: Option<LearnerMode>,
    pub oracle: Option<OracleUse>,
    pub tolerances: Option<Tolerances>,
    pub out: Option<PathBuf>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: PartialConfig) -> Self {
        Self {
            n: other.n.or(self.n),
            t: other.t.or(self.t),
            a_size: other.a_size.or(self.a_size),
            d_size: other.d_size.or(self.d_size),
            ensemble: other.ensemble.or(self.ensemble),
            depth: other.depth.or(self.depth),
            trials: other.trials.or(self.trials),
            shots: other.shots.or(self.shots),
            seed: other.seed.or(self.seed),
            mode: other.mode.or(self.mode),
            oracle: other.oracle.or(self.oracle),
            tolerances: other.tolerances.or(self.tolerances),
            out: other.out.or(self.out),
        }
    }

    /// Fills defaults for everything except `n` and `seed`, then validates.
    pub fn build(self) -> Result<ExperimentConfig, ConfigError> {
        let n = self.n.ok_or(ConfigError::Missing("n"))?;
        let cfg = ExperimentConfig {
            n,
            t: self.t.unwrap_or(0),
            a_size: self.a_size.unwrap_or(1),
            d_size: self.d_size.unwrap_or(n / 2),
            ensemble: self.ensemble.unwrap_or(EnsembleKind::Simplified),
            depth: self.depth,
            trials: self.trials.unwrap_or(1),
            shots: self.shots.unwrap_or(200),
            seed: self.seed.ok_or(ConfigError::Missing("seed"))?,
            mode: self.mode.unwrap_or(LearnerMode::Exact),
            oracle: self.oracle.unwrap_or(OracleUse::Auto),
            tolerances: self.tolerances.unwrap_or_default(),
            out: self.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.n == 0 || self.n > 64 {
            return bad(format!("n = {} must lie in 1..=64", self.n));
        }
        if self.a_size == 0 || self.a_size > self.n {
            return bad(format!("|A| = {} must lie in 1..=n", self.a_size));
        }
        if self.d_size == 0 || self.d_size > self.n {
            return bad(format!("|D| = {} must lie in 1..=n", self.d_size));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.t > MAX_T {
            return bad(format!("t = {} exceeds {MAX_T}", self.t));
        }
        if self.ensemble == EnsembleKind::Simplified && (!self.t.is_multiple_of(2) || self.t / 2 > self.d_size) {
            return bad(format!("simplified ensemble needs even t ≤ 2|D|, got t = {}", self.t));
        }
        if self.mode == LearnerMode::Sampled && self.shots == 0 {
            return bad("sampled mode needs shots > 0".into());
        }
        if 1u64.checked_shl(2 * self.d_size as u32).unwrap_or(u64::MAX) > FORMULA_CAP && self.oracle == OracleUse::Off {
            return bad(format!("|D| = {} is too large for the formula and the oracle is off", self.d_size));
        }
        if self.oracle == OracleUse::On && self.dense_qubits() > MAX_DENSE_QUBITS {
            return bad(format!("oracle needs {} qubits, above {MAX_DENSE_QUBITS}", self.dense_qubits()));
        }
        Ok(())
    }

    /// A on the lowest qubits.
    pub fn a_mask(&self) -> SubsystemMask {
        SubsystemMask::range(self.n, 0, self.a_size).expect("validated")
    }

    /// D on the highest qubits.
    pub fn d_mask(&self) -> SubsystemMask {
        SubsystemMask::range(self.n, self.n - self.d_size, self.d_size).expect("validated")
    }

    pub fn ensemble(&self) -> Ensemble {
        match self.ensemble {
            EnsembleKind::Generic => Ensemble::Generic,
            EnsembleKind::Simplified => Ensemble::Simplified { readout: self.d_mask() },
        }
    }

    pub fn oracle_mode(&self) -> OracleMode {
        match self.mode {
            LearnerMode::Exact => OracleMode::Exact,
            LearnerMode::Sampled => OracleMode::Sampled { shots: self.shots },
        }
    }

    fn dense_qubits(&self) -> usize {
        2 * self.n + 2 * self.a_size
    }

    pub fn runs_oracle(&self) -> bool {
        match self.oracle {
            OracleUse::On => true,
            OracleUse::Off => false,
            OracleUse::Auto => self.dense_qubits() <= AUTO_ORACLE_QUBITS,
        }
    }

    pub fn bound(&self) -> f64 {
        fidelity_bound(self.a_size, self.t, self.d_size)
    }

    pub fn floor(&self) -> f64 {
        success_floor(self.n, self.t, self.d_size)
    }
}

/// Random stream for `trial`, split from the master seed.
pub fn trial_rng(master: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng
}

/// One row of the trials CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// Seed of the trial stream (the master seed; the stream is `trial`).
    pub seed: u64,
    pub e_size: Option<usize>,
    pub rank: Option<usize>,
    pub radical_dim: Option<usize>,
    pub fidelity_oracle: Option<f64>,
    pub fidelity_formula: Option<f64>,
    pub pi_v: Option<f64>,
    pub bound_eq1: f64,
    pub success: bool,
    pub query_count: Option<u64>,
    pub error: Option<String>,
    /// Kept out of the CSV so that reruns are byte-identical.
    #[serde(skip)]
    pub wall_ms: f64,
}

impl TrialRecord {
    /// Oracle fidelity when available, else the formula.
    pub fn fidelity(&self) -> Option<f64> {
        self.fidelity_oracle.or(self.fidelity_formula)
    }
}

/// Intermediate artefacts of one trial, for callers that need more than
/// the record.
pub struct TrialArtefacts {
    pub circuit: DopedCircuit,
    pub groups: LearnedGroups,
    pub bundle: DecoderBundle,
}

/// Record with every measured field empty.
pub fn blank_record(cfg: &ExperimentConfig, trial: usize) -> TrialRecord {
    TrialRecord {
        trial,
        seed: cfg.seed,
        e_size: None,
        rank: None,
        radical_dim: None,
        fidelity_oracle: None,
        fidelity_formula: None,
        pi_v: None,
        bound_eq1: cfg.bound(),
        success: false,
        query_count: None,
        error: None,
        wall_ms: 0.0,
    }
}

/// Samples, learns and synthesizes; the shared front half of every trial.
pub fn prepare_trial(cfg: &ExperimentConfig, trial: usize, rec: &mut TrialRecord) -> anyhow::Result<TrialArtefacts> {
    let mut rng = trial_rng(cfg.seed, trial);
    let circuit = sample_doped_circuit(cfg.n, cfg.t, &cfg.ensemble(), cfg.depth, &mut rng)?;
    let oracle = QueryOracle::new(circuit.clone(), cfg.oracle_mode(), rng.next_u64());
    let groups = learn_groups(&oracle, &cfg.d_mask(), &LearnOptions::default())?;
    rec.rank = Some(groups.rank());
    rec.radical_dim = Some(groups.radical_dim);
    rec.query_count = Some(groups.query_count);
    let bundle = synthesize_symplectic_part(&groups, rng.next_u64())?;
    rec.e_size = Some(bundle.e.len());
    Ok(TrialArtefacts { circuit, groups, bundle })
}

fn evaluate_trial(cfg: &ExperimentConfig, trial: usize, rec: &mut TrialRecord) -> anyhow::Result<()> {
    let TrialArtefacts { circuit, bundle, .. } = prepare_trial(cfg, trial, rec)?;
    let a = cfg.a_mask();
    let d = cfg.d_mask();
    if 1u64.checked_shl(2 * cfg.d_size as u32).unwrap_or(u64::MAX) <= FORMULA_CAP {
        let f = FormulaEvaluator::new(&circuit, &bundle.diagonalizer, &a, &d)?.evaluate_bundle(&bundle)?;
        rec.fidelity_formula = Some(f.fidelity);
        rec.pi_v = Some(f.pi_v);
    }
    if cfg.runs_oracle() {
        let state = build_scrambled_state(&circuit, &a)?;
        let p = decode_and_project(&state, Decoder::Bundle(&bundle), &d)?;
        rec.fidelity_oracle = Some(p.fidelity);
        rec.pi_v = Some(p.pi_v);
        if let Some(f) = rec.fidelity_formula {
            let gap = (f - p.fidelity).abs();
            if gap > cfg.tolerances.formula_oracle {
                anyhow::bail!("formula and oracle disagree by {gap:e}");
            }
        }
    }
    Ok(())
}

/// Runs one trial; failures are recorded in the returned row.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> TrialRecord {
    let start = Instant::now();
    let mut rec = blank_record(cfg, trial);
    if let Err(e) = evaluate_trial(cfg, trial, &mut rec) {
        log::warn!("trial {trial} failed: {e:#}");
        rec.error = Some(format!("{e:#}"));
    }
    rec.success = rec.error.is_none() && rec.fidelity().is_some_and(|f| f >= rec.bound_eq1);
    rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    rec
}

/// Wilson score interval for `k` successes out of `n` at `confidence`.
pub fn wilson_interval(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.5 + confidence / 2.0);
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub trials: usize,
    pub failures: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_ci95: (f64, f64),
    pub bound_eq1: f64,
    pub success_floor: f64,
    /// The floor is not rejected: it does not exceed the upper end of the
    /// interval.
    pub floor_consistent: bool,
    pub median_fidelity: Option<f64>,
    pub mean_fidelity: Option<f64>,
    pub min_fidelity: Option<f64>,
    /// Fidelity of a decoder unrelated to the scrambler, `2^{-2|A|}`.
    pub baseline: f64,
    /// `t > n`: the bound is no longer informative.
    pub breakdown: bool,
}

pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> ExperimentSummary {
    let successes = records.iter().filter(|r| r.success).count();
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let fids: Vec<f64> = records.iter().filter_map(TrialRecord::fidelity).collect();
    let ci = wilson_interval(successes, records.len(), 0.95);
    let floor = cfg.floor();
    ExperimentSummary {
        config: cfg.clone(),
        trials: records.len(),
        failures,
        successes,
        success_rate: successes as f64 / records.len().max(1) as f64,
        success_ci95: ci,
        bound_eq1: cfg.bound(),
        success_floor: floor,
        floor_consistent: floor <= ci.1,
        median_fidelity: median(&fids),
        mean_fidelity: (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64),
        min_fidelity: fids.iter().copied().reduce(f64::min),
        baseline: 4f64.powi(-(cfg.a_size as i32)),
        breakdown: cfg.t > cfg.n,
    }
}

/// Runs every trial in parallel; results come back in trial order.
pub fn run_decoding_experiment(cfg: &ExperimentConfig) -> (Vec<TrialRecord>, ExperimentSummary) {
    let records: Vec<TrialRecord> = (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i)).collect();
    let summary = summarize(cfg, &records);
    (records, summary)
}

/// Trials CSV with a schema comment line.
pub fn write_trials_csv<W: std::io::Write>(mut w: W, records: &[TrialRecord]) -> anyhow::Result<()> {
    writeln!(w, "{CSV_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    for r in records {
        csv.serialize(r)?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes `trials.csv`, `timings.csv` and `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, records: &[TrialRecord], summary: &ExperimentSummary) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    write_trials_csv(fs::File::create(dir.join("trials.csv"))?, records)?;
    let mut timings = csv::Writer::from_path(dir.join("timings.csv"))?;
    timings.write_record(["trial", "wall_ms"])?;
    for r in records {
        timings.write_record([r.trial.to_string(), format!("{:.3}", r.wall_ms)])?;
    }
    timings.flush()?;
    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, summary)?;
    writeln!(f)?;
    Ok(())
}

/// Parses `a..b` (inclusive), `a..=b` or a single value.
pub fn parse_range(s: &str) -> Result<Vec<usize>, ConfigError> {
    let bad = || ConfigError::Invalid(format!("bad range `{s}`"));
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once("..") {
        None => Ok(vec![parse(s)?]),
        Some((lo, hi)) => {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(bad());
            }
            Ok((lo..=hi).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: usize,
    pub d_size: usize,
    pub trials: usize,
    pub failures: usize,
    pub median_fidelity: Option<f64>,
    pub mean_fidelity: Option<f64>,
    pub success_rate: f64,
    pub bound_eq1: f64,
}

fn sweep_point(cfg: &ExperimentConfig) -> SweepPoint {
    let (_, s) = run_decoding_experiment(cfg);
    SweepPoint {
        t: cfg.t,
        d_size: cfg.d_size,
        trials: s.trials,
        failures: s.failures,
        median_fidelity: s.median_fidelity,
        mean_fidelity: s.mean_fidelity,
        success_rate: s.success_rate,
        bound_eq1: s.bound_eq1,
    }
}

/// Fidelity against t at fixed |D|. Each t reuses the master seed.
pub fn sweep_t(base: &ExperimentConfig, ts: &[usize]) -> Result<Vec<SweepPoint>, ConfigError> {
    ts.iter()
        .map(|&t| {
            let cfg = ExperimentConfig { t, ..base.clone() };
            cfg.validate()?;
            Ok(sweep_point(&cfg))
        })
        .collect()
}

/// Fidelity against |D| at fixed t.
pub fn sweep_d(base: &ExperimentConfig, ds: &[usize]) -> Result<Vec<SweepPoint>, ConfigError> {
    ds.iter()
        .map(|&d_size| {
            let cfg = ExperimentConfig { d_size, ..base.clone() };
            cfg.validate()?;
            Ok(sweep_point(&cfg))
        })
        .collect()
}

/// Whitespace-separated columns for gnuplot; missing values print as `nan`.
pub fn write_gnuplot<W: std::io::Write>(mut w: W, x_label: &str, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(w, "# {x_label} median_fidelity mean_fidelity success_rate bound_eq1")?;
    let show = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.12}"));
    for p in points {
        let x = if x_label == "t" { p.t } else { p.d_size };
        writeln!(
            w,
            "{x} {} {} {:.12} {:.12}",
            show(p.median_fidelity),
            show(p.mean_fidelity),
            p.success_rate,
            p.bound_eq1
        )?;
    }
    Ok(())
}
