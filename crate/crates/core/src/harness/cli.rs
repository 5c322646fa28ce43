//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::experiment::{
    blank_record, parse_range, prepare_trial, run_decoding_experiment, run_trial, sweep_d, sweep_t, write_gnuplot, write_outputs,
    ConfigError, EnsembleKind, ExperimentConfig, LearnerMode, OracleUse, PartialConfig, SweepPoint,
};
use super::fidelity::fidelity_post_randomizer;
use super::stats::{randomizer_statistics, variance_ratio, StatsConfig};
use crate::doped::{is_scrambler, DopedCircuit, OtocOptions};
use crate::learner::{learn_groups, LearnOptions, QueryOracle};
use crate::pauli::SubsystemMask;
use crate::synth::synthesize_symplectic_part;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRIAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "cliffdec", version, about = "Learn and evaluate Clifford decoders for t-doped scramblers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    a_size: Option<usize>,
    #[arg(long)]
    d_size: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    shots: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleKind>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<LearnerMode>,
    #[arg(long, value_enum)]
    oracle: Option<OracleUse>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn partial(&self, t: Option<usize>) -> Result<PartialConfig, ConfigError> {
        let file = match &self.config {
            Some(p) => PartialConfig::from_file(p)?,
            None => PartialConfig::default(),
        };
        Ok(file.merge(PartialConfig {
            n: self.n,
            t,
            a_size: self.a_size,
            d_size: self.d_size,
            ensemble: self.ensemble,
            depth: self.depth,
            trials: self.trials,
            shots: self.shots,
            seed: self.seed,
            mode: self.mode,
            oracle: self.oracle,
            tolerances: None,
            out: self.out.clone(),
        }))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    /// t = 0 cross-checks between the statevector, the trace formula and
    /// the averaged evaluator.
    CliffordOnly,
    /// Formula against statevector for t ∈ {0, 2, 4}.
    Oracle,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn the preserved group on D and synthesize a decoder.
    Learn {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        t: Option<usize>,
        /// Circuit text file; sampled from the ensemble when absent.
        #[arg(long)]
        circuit: Option<PathBuf>,
    },
    /// Run decoding trials and write CSV and JSON results.
    Decode {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        t: Option<usize>,
    },
    /// Evaluate the Pauli-averaged OTOC of a circuit.
    Otoc {
        #[arg(long)]
        circuit: PathBuf,
        /// Comma-separated qubits of X.
        #[arg(long = "x", alias = "X", value_delimiter = ',', required = true)]
        x: Vec<usize>,
        /// Comma-separated qubits of Y.
        #[arg(long = "y", alias = "Y", value_delimiter = ',', required = true)]
        y: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        #[arg(long, default_value_t = 10_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Median fidelity against t (and optionally |D|).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Values of t, e.g. `0..6` (inclusive).
        #[arg(long, default_value = "0")]
        t: String,
        /// Values of |D| for a second curve at the first t.
        #[arg(long = "d-range")]
        d_range: Option<String>,
    },
    /// Randomizer statistics of N1, N2 and the fidelity.
    Stats {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        a_size: usize,
        #[arg(long)]
        d_size: usize,
        #[arg(long, default_value_t = 500)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        /// Also run with one more qubit in C and report the variance ratio.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Built-in consistency suites.
    Verify {
        #[arg(long, value_enum, default_value = "clifford-only")]
        suite: Suite,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

/// Parses `argv` and runs the subcommand, returning the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_ERROR
            }
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn read_circuit(path: &Path, n: Option<usize>) -> anyhow::Result<DopedCircuit> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DopedCircuit::from_text(&text, n).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())).into())
}

fn mask(n: usize, qubits: &[usize]) -> anyhow::Result<SubsystemMask> {
    SubsystemMask::from_qubits(n, qubits).map_err(|e| ConfigError::Invalid(e.to_string()).into())
}

fn dispatch(cmd: Command) -> anyhow::Result<i32> {
    match cmd {
        Command::Learn { common, t, circuit } => learn(&common, t, circuit.as_deref()),
        Command::Decode { common, t } => decode(&common.partial(t)?.build()?),
        Command::Otoc {
            circuit,
            x,
            y,
            tolerance,
            draws,
            seed,
        } => {
            let c = read_circuit(&circuit, None)?;
            let (xm, ym) = (mask(c.n(), &x)?, mask(c.n(), &y)?);
            let opts = OtocOptions {
                draws,
                seed,
                ..Default::default()
            };
            let report = is_scrambler(&c, &xm, &ym, tolerance, &opts)?;
            println!("omega {:.12}", report.otoc.value);
            println!("reference {:.12}", report.reference);
            print_json(&report)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { common, t, d_range } => {
            let ts = parse_range(&t)?;
            let base = common.partial(ts.first().copied())?.build()?;
            sweep(&base, &ts, d_range.as_deref())
        }
        Command::Stats {
            n,
            t,
            a_size,
            d_size,
            draws,
            seed,
            compare,
            out,
        } => {
            let cfg = StatsConfig {
                n,
                t,
                a_size,
                d_size,
                draws,
                seed,
                depth: None,
            };
            let rec = randomizer_statistics(&cfg)?;
            let larger = if compare {
                Some(randomizer_statistics(&StatsConfig { n: n + 1, ..cfg })?)
            } else {
                None
            };
            let report = json!({
                "n1_mean": rec.n1.map(|m| m.mean),
                "n1_std_err": rec.n1.map(|m| m.std_err),
                "predicted_n1": rec.predicted_n1,
                "n2_mean": rec.n2.map(|m| m.mean),
                "n2_std_err": rec.n2.map(|m| m.std_err),
                "predicted_n2": rec.predicted_n2,
                "fidelity_variance": rec.fidelity.map(|m| m.variance),
                "variance_scale": rec.variance_scale,
                "variance_ratio": larger.as_ref().and_then(|l| variance_ratio(&rec, l)),
                "underpowered": rec.underpowered,
            });
            print_json(&report)?;
            if let Some(dir) = out {
                write_json(&dir.join("stats.json"), &rec)?;
                if let Some(l) = &larger {
                    write_json(&dir.join("stats_larger.json"), l)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Verify { suite, seed, trials } => verify(suite, seed, trials),
    }
}

fn learn(common: &CommonArgs, t: Option<usize>, circuit: Option<&Path>) -> anyhow::Result<i32> {
    let cfg = common.partial(t)?.build()?;
    let (groups, bundle) = match circuit {
        Some(path) => {
            let c = read_circuit(path, Some(cfg.n))?;
            let oracle = QueryOracle::new(c, cfg.oracle_mode(), cfg.seed);
            let g = learn_groups(&oracle, &cfg.d_mask(), &LearnOptions::default())?;
            let b = synthesize_symplectic_part(&g, cfg.seed)?;
            (g, b)
        }
        None => {
            let art = prepare_trial(&cfg, 0, &mut blank_record(&cfg, 0))?;
            (art.groups, art.bundle)
        }
    };
    print_json(&json!({
        "rank": groups.rank(),
        "e_size": groups.e_size,
        "radical_dim": groups.radical_dim,
        "query_count": groups.query_count,
        "incomplete": groups.incomplete,
        "generators": groups.generators,
    }))?;
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("transcript.json"), groups.transcript_json())?;
        fs::write(dir.join("decoder.txt"), bundle.to_text())?;
    }
    Ok(if groups.incomplete { EXIT_TRIAL } else { EXIT_OK })
}

fn decode(cfg: &ExperimentConfig) -> anyhow::Result<i32> {
    let (records, summary) = run_decoding_experiment(cfg);
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &records, &summary)?;
    }
    print_json(&summary)?;
    Ok(if summary.failures > 0 { EXIT_TRIAL } else { EXIT_OK })
}

fn sweep(base: &ExperimentConfig, ts: &[usize], d_range: Option<&str>) -> anyhow::Result<i32> {
    let by_t = sweep_t(base, ts)?;
    let by_d = match d_range {
        Some(r) => Some(sweep_d(base, &parse_range(r)?)?),
        None => None,
    };
    if let Some(dir) = &base.out {
        fs::create_dir_all(dir)?;
        write_gnuplot(fs::File::create(dir.join("fidelity_vs_t.dat"))?, "t", &by_t)?;
        write_points_csv(&dir.join("sweep_t.csv"), &by_t)?;
        if let Some(pts) = &by_d {
            write_gnuplot(fs::File::create(dir.join("fidelity_vs_d.dat"))?, "d", pts)?;
            write_points_csv(&dir.join("sweep_d.csv"), pts)?;
        }
    }
    print_json(&json!({ "t": by_t, "d": by_d }))?;
    let failed = by_t.iter().chain(by_d.iter().flatten()).any(|p| p.failures > 0);
    Ok(if failed { EXIT_TRIAL } else { EXIT_OK })
}

fn write_points_csv(path: &Path, points: &[SweepPoint]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Sizes exercised by the verification suites; all fit the statevector.
const VERIFY_SIZES: [(usize, usize); 4] = [(4, 2), (5, 2), (6, 3), (7, 3)];

fn verify(suite: Suite, seed: u64, trials: usize) -> anyhow::Result<i32> {
    let ts: &[usize] = match suite {
        Suite::CliffordOnly => &[0],
        Suite::Oracle => &[0, 2, 4],
    };
    let mut problems = Vec::new();
    let mut checked = 0;
    for &(n, d_size) in &VERIFY_SIZES {
        for &t in ts {
            if t / 2 > d_size {
                continue;
            }
            let cfg = PartialConfig {
                n: Some(n),
                t: Some(t),
                d_size: Some(d_size),
                trials: Some(trials),
                seed: Some(seed),
                oracle: Some(OracleUse::On),
                ..Default::default()
            }
            .build()?;
            for trial in 0..trials {
                checked += 1;
                let rec = run_trial(&cfg, trial);
                if let Some(e) = &rec.error {
                    problems.push(format!("n={n} |D|={d_size} t={t} trial {trial}: {e}"));
                    continue;
                }
                if t == 0 {
                    // With E = D the averaged evaluator must agree exactly.
                    let art = prepare_trial(&cfg, trial, &mut rec.clone())?;
                    let avg = fidelity_post_randomizer(&art.circuit, &art.bundle, &cfg.a_mask())?;
                    let f = rec.fidelity_oracle.expect("oracle on");
                    if (avg - f).abs() > cfg.tolerances.formula_oracle {
                        problems.push(format!("n={n} |D|={d_size} trial {trial}: oracle {f} vs averaged {avg}"));
                    }
                    if art.bundle.e != cfg.d_mask() {
                        problems.push(format!("n={n} |D|={d_size} trial {trial}: E ≠ D for a Clifford"));
                    }
                }
            }
        }
    }
    for p in &problems {
        println!("FAIL {p}");
    }
    println!("verify {suite:?}: {} of {checked} checks passed", checked - problems.len());
    Ok(if problems.is_empty() { EXIT_OK } else { EXIT_ACCEPTANCE })
}
