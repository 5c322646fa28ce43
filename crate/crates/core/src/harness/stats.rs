//! Randomizer statistics: N1, N2 and the fidelity over randomizer draws
//! for one fixed scrambler and learned decoder.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::experiment::{blank_record, prepare_trial, trial_rng, ConfigError, EnsembleKind, ExperimentConfig, LearnerMode, OracleUse, Tolerances};
use super::fidelity::{fidelity_post_randomizer, predicted_n1, predicted_n2, FormulaEvaluator};
use crate::synth::build_randomizer;

/// Draw count under which intervals use Student-t quantiles and the record
/// is flagged.
pub const MIN_DRAWS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub n: usize,
    pub t: usize,
    pub a_size: usize,
    pub d_size: usize,
    pub draws: usize,
    pub seed: u64,
    pub depth: Option<usize>,
}

impl StatsConfig {
    /// Experiment view used to sample and learn the fixed scrambler.
    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let cfg = ExperimentConfig {
            n: self.n,
            t: self.t,
            a_size: self.a_size,
            d_size: self.d_size,
            ensemble: EnsembleKind::Simplified,
            depth: self.depth,
            trials: 1,
            shots: 0,
            seed: self.seed,
            mode: LearnerMode::Exact,
            oracle: OracleUse::Off,
            tolerances: Tolerances::default(),
            out: None,
        };
        cfg.validate()?;
        if self.draws < 2 {
            return Err(ConfigError::Invalid("at least two randomizer draws are needed".into()));
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
    /// Half-width of the 95% interval on the mean.
    pub ci95: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.len() < 2 {
            return None;
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let std_err = (variance / k).sqrt();
        let q = if xs.len() < MIN_DRAWS {
            StudentsT::new(0.0, 1.0, k - 1.0).expect("positive dof").inverse_cdf(0.975)
        } else {
            1.959963984540054
        };
        Some(Self {
            mean,
            variance,
            std_err,
            ci95: q * std_err,
        })
    }

    /// `|mean − target| ≤ k·σ` with `σ` the standard error.
    pub fn within_sigmas(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsRecord {
    pub config: StatsConfig,
    pub e_size: usize,
    pub f_size: usize,
    pub c_size: usize,
    pub n1_samples: Vec<f64>,
    pub n2_samples: Vec<f64>,
    /// Fidelity per draw; draws with `N2 = 0` have none.
    pub fidelity_samples: Vec<f64>,
    pub n1: Option<Moments>,
    pub n2: Option<Moments>,
    pub fidelity: Option<Moments>,
    pub predicted_n1: f64,
    pub predicted_n2: f64,
    /// `2^{-2|C|}`.
    pub variance_scale: f64,
    /// Randomizer-averaged fidelity of this decoder.
    pub post_randomizer_fidelity: Option<f64>,
    pub impossible_draws: usize,
    pub underpowered: bool,
}

/// Fixes one scrambler and its learned decoder, then redraws only the
/// randomizer `draws` times.
pub fn randomizer_statistics(cfg: &StatsConfig) -> anyhow::Result<StatisticsRecord> {
    let exp = cfg.experiment()?;
    let art = prepare_trial(&exp, 0, &mut blank_record(&exp, 0))?;
    let (circuit, bundle) = (art.circuit, art.bundle);
    let (a, d) = (exp.a_mask(), exp.d_mask());
    let f = bundle.f();
    let c = bundle.c();
    let eval = FormulaEvaluator::new(&circuit, &bundle.diagonalizer, &a, &d)?;
    let draws: Vec<(f64, f64)> = (0..cfg.draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i + 1);
            let r = build_randomizer(cfg.n, &f, &c, &mut rng).expect("validated masks");
            eval.normalisations(&r, &bundle.decrypter)
        })
        .collect();
    let n1_samples: Vec<f64> = draws.iter().map(|&(x, _)| x).collect();
    let n2_samples: Vec<f64> = draws.iter().map(|&(_, y)| y).collect();
    let fidelity_samples: Vec<f64> = draws.iter().filter(|&&(_, y)| y != 0.0).map(|&(x, y)| x / y).collect();
    Ok(StatisticsRecord {
        config: cfg.clone(),
        e_size: bundle.e.len(),
        f_size: f.len(),
        c_size: c.len(),
        n1: Moments::of(&n1_samples),
        n2: Moments::of(&n2_samples),
        fidelity: Moments::of(&fidelity_samples),
        impossible_draws: draws.len() - fidelity_samples.len(),
        n1_samples,
        n2_samples,
        fidelity_samples,
        predicted_n1: predicted_n1(f.len()),
        predicted_n2: predicted_n2(cfg.a_size, cfg.d_size, bundle.e.len()),
        variance_scale: 4f64.powi(-(c.len() as i32)),
        post_randomizer_fidelity: fidelity_post_randomizer(&circuit, &bundle, &a).ok(),
        underpowered: cfg.draws < MIN_DRAWS,
    })
}

/// `Var(F)` at `larger` over `Var(F)` at `smaller`.
pub fn variance_ratio(smaller: &StatisticsRecord, larger: &StatisticsRecord) -> Option<f64> {
    let (s, l) = (smaller.fidelity?.variance, larger.fidelity?.variance);
    (s > 0.0).then(|| l / s)
}
