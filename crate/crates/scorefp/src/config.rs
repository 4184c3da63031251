//! Run configuration: one flat JSON object, every key optional.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scorefp_core::fp_solver::{Boundary, SolverConfig};
use scorefp_core::kde::{Bandwidth, KdeConfig, DEFAULT_FLOOR};
use scorefp_core::score_net::{LambdaSchedule, TrainConfig, TrainMode, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE};
use scorefp_core::{SdeSpec, TimeGrid};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdeKind {
    ZeroDrift,
    VpLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Embedded,
    Baseline,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Embedded => "embedded",
            Mode::Baseline => "baseline",
        }
    }
}

impl From<Mode> for TrainMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Embedded => TrainMode::Embedded,
            Mode::Baseline => TrainMode::Baseline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Truncate,
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Grayscale images to process. Empty selects the built-in toy image.
    pub inputs: Vec<PathBuf>,
    /// Side length of the built-in toy image.
    pub toy_size: usize,
    pub sde: SdeKind,
    pub sigma: f64,
    pub beta: f64,
    pub t_final: f64,
    pub steps: usize,
    /// `null` selects Scott's rule; a number fixes the bandwidth in pixels.
    pub kde_bandwidth: Option<f64>,
    pub kde_floor: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub boundary: BoundaryKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub hidden: Vec<usize>,
    pub mode: Mode,
    /// SSIM levels reported by `compare`.
    pub targets: Vec<f64>,
    /// Stop `train` once evaluation SSIM reaches this level.
    pub stop_ssim: Option<f64>,
    /// Epoch limit for `compare` runs.
    pub epoch_cap: usize,
    /// Epochs between evaluations during training.
    pub eval_every: usize,
    pub snapshots: usize,
    /// Number of consecutive seeds `compare` runs, starting at `seed`.
    pub compare_runs: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lambda = LambdaSchedule::default();
        Self {
            inputs: Vec::new(),
            toy_size: 16,
            sde: SdeKind::ZeroDrift,
            sigma: 1.0,
            beta: 1.0,
            t_final: 1.0,
            steps: 100,
            kde_bandwidth: None,
            kde_floor: DEFAULT_FLOOR,
            tol: 1e-6,
            max_iters: 50,
            boundary: BoundaryKind::Truncate,
            epochs: 200,
            learning_rate: DEFAULT_LEARNING_RATE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda_min: lambda.min,
            lambda_max: lambda.max,
            hidden: DEFAULT_HIDDEN.to_vec(),
            mode: Mode::Embedded,
            targets: vec![0.99, 0.98, 0.95, 0.90],
            stop_ssim: None,
            epoch_cap: 1000,
            eval_every: 10,
            snapshots: 10,
            compare_runs: 1,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> AppResult<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration always serializes")
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(&text).map_err(|e| e.with_path(path))
    }

    pub fn validate(&self) -> AppResult<()> {
        self.sde_spec()?;
        self.grid()?;
        self.kde().validate()?;
        self.solver().validate()?;
        self.train_config(self.mode).validate()?;
        if self.toy_size < 3 {
            return Err(AppError::Input("toy_size must be at least 3".into()));
        }
        if self.snapshots == 0 || self.snapshots > self.steps {
            return Err(AppError::Input(format!("snapshots must be in 1..={}", self.steps)));
        }
        if self.eval_every == 0 {
            return Err(AppError::Input("eval_every must be positive".into()));
        }
        if self.compare_runs == 0 {
            return Err(AppError::Input("compare_runs must be positive".into()));
        }
        let level_ok = |v: &f64| v.is_finite() && *v > -1.0 && *v <= 1.0;
        if !self.targets.iter().all(level_ok) || !self.stop_ssim.iter().all(level_ok) {
            return Err(AppError::Input("SSIM levels must lie in (-1, 1]".into()));
        }
        Ok(())
    }

    pub fn sde_spec(&self) -> AppResult<SdeSpec> {
        Ok(match self.sde {
            SdeKind::ZeroDrift => SdeSpec::zero_drift(self.sigma)?,
            SdeKind::VpLike => SdeSpec::vp_like(self.beta)?,
        })
    }

    pub fn grid(&self) -> AppResult<TimeGrid> {
        Ok(TimeGrid::new(self.t_final, self.steps)?)
    }

    pub fn kde(&self) -> KdeConfig {
        KdeConfig {
            bandwidth: self.kde_bandwidth.map_or(Bandwidth::Scott, Bandwidth::Fixed),
            floor: self.kde_floor,
        }
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            boundary: match self.boundary {
                BoundaryKind::Truncate => Boundary::Truncate,
                BoundaryKind::Reflect => Boundary::Reflect,
            },
        }
    }

    pub fn train_config(&self, mode: Mode) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            lambda: LambdaSchedule {
                min: self.lambda_min,
                max: self.lambda_max,
            },
            hidden: self.hidden.clone(),
            seed: self.seed,
            mode: mode.into(),
        }
    }
}
