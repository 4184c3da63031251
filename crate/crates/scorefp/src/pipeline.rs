//! End-to-end pipeline steps shared by the CLI commands.

use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scorefp_core::fp_solver::{policy_iteration_with, FpSolution};
use scorefp_core::kde::kde_log_density;
use scorefp_core::metrics::{mse, ssim, SsimConstants, SsimReport};
use scorefp_core::score_net::{train_with, training_states, ScoreNet, TrainOutcome};
use scorefp_core::transport::{ode_denoise, snapshot_indices};
use scorefp_core::{normalize_image, ImageField, ScoreField};

use crate::config::{Mode, RunConfig};
use crate::error::{AppError, AppResult};
use crate::image_io::load_image;

/// Deterministic test card: a soft blob, a bright bar and a faint floor.
pub fn toy_image(size: usize) -> AppResult<ImageField> {
    let s = size as f64;
    let (ci, cj) = (0.4 * s, 0.55 * s);
    let spread = 0.05 * s * s;
    let raw = ImageField::from_fn(size, size, |i, j| {
        let (di, dj) = (i as f64 - ci, j as f64 - cj);
        let blob = (-(di * di + dj * dj) / spread).exp();
        let (fi, fj) = (i as f64 / s, j as f64 / s);
        let bar = if (0.7..0.82).contains(&fi) && (0.2..0.8).contains(&fj) { 0.6 } else { 0.0 };
        (0.1 + blob + bar).min(1.0)
    })?;
    Ok(normalize_image(size, size, raw.values())?)
}

/// A named input image, normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub image: ImageField,
}

pub fn load_subjects(cfg: &RunConfig) -> AppResult<Vec<Subject>> {
    if cfg.inputs.is_empty() {
        return Ok(vec![Subject {
            id: "toy".into(),
            image: toy_image(cfg.toy_size)?,
        }]);
    }
    let mut subjects: Vec<Subject> = Vec::with_capacity(cfg.inputs.len());
    for path in &cfg.inputs {
        let raw = load_image(path)?;
        let image = normalize_image(raw.height(), raw.width(), raw.values()).map_err(|e| AppError::from(e).with_path(path))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| AppError::Input(format!("{}: cannot derive an image id", path.display())))?;
        if subjects.iter().any(|s| s.id == id) {
            return Err(AppError::Input(format!("two inputs share the image id {id:?}")));
        }
        subjects.push(Subject { id, image });
    }
    Ok(subjects)
}

/// Artifact locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn subject(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn log_density(&self, id: &str) -> PathBuf {
        self.subject(id).join("log_density.fpsc")
    }

    pub fn score(&self, id: &str) -> PathBuf {
        self.subject(id).join("score.fpsc")
    }

    pub fn iterations(&self, id: &str) -> PathBuf {
        self.subject(id).join("iterations.csv")
    }

    pub fn mode(&self, id: &str, mode: Mode) -> PathBuf {
        self.subject(id).join(mode.name())
    }

    pub fn checkpoint(&self, id: &str, mode: Mode) -> PathBuf {
        self.mode(id, mode).join("network.fpnw")
    }

    pub fn compare(&self) -> PathBuf {
        self.root.join("compare")
    }
}

pub fn ensure_dir(path: &Path) -> AppResult<()> {
    std::fs::create_dir_all(path).map_err(|e| AppError::io(path, e))
}

/// Precomputed log-density and score for one image.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub solution: FpSolution,
    /// Cumulative wall time at the end of each outer iteration.
    pub iteration_ms: Vec<f64>,
    pub elapsed: Duration,
}

pub fn precompute(image: &ImageField, cfg: &RunConfig) -> AppResult<Precomputed> {
    let start = Instant::now();
    let sde = cfg.sde_spec()?;
    let grid = cfg.grid()?;
    let m0 = kde_log_density(image, &cfg.kde())?;
    let mut iteration_ms = Vec::new();
    let solution = policy_iteration_with(
        &m0,
        image.values(),
        image.height(),
        image.width(),
        &sde,
        grid,
        &cfg.solver(),
        |_| iteration_ms.push(start.elapsed().as_secs_f64() * 1e3),
    )?;
    Ok(Precomputed {
        solution,
        iteration_ms,
        elapsed: start.elapsed(),
    })
}

/// Noisy starting image for evaluation: the final training state of `mode`
/// plus `lambda(T) z`, with `z` drawn from a stream reserved for evaluation.
pub fn evaluation_start(image: &ImageField, scores: Option<&ScoreField>, cfg: &RunConfig, mode: Mode, seed: u64) -> AppResult<ImageField> {
    let sde = cfg.sde_spec()?;
    let grid = cfg.grid()?;
    let states = training_states(scores, image, &sde, grid, mode.into())?;
    let terminal = states.last().expect("at least x^0");
    let lambda = cfg.train_config(mode).lambda.at(grid.t_final(), grid.t_final());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let values = terminal
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + lambda * z
        })
        .collect();
    Ok(ImageField::new(image.height(), image.width(), values)?)
}

/// Quality of one denoised frame against the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    /// Reverse steps taken to reach this frame.
    pub step: usize,
    pub mse: f64,
    pub ssim: SsimReport,
}

/// Runs the reverse flow with `net` and returns the snapshots, clipped to `[0, 1]`.
pub fn denoise(net: &ScoreNet, start: &ImageField, cfg: &RunConfig, snapshots: usize) -> AppResult<Vec<ImageField>> {
    let sde = cfg.sde_spec()?;
    let grid = cfg.grid()?;
    if net.dim() != start.len() {
        return Err(AppError::Input(format!(
            "network expects {} pixels, image has {}",
            net.dim(),
            start.len()
        )));
    }
    let t_final = grid.t_final();
    let frames = ode_denoise(start, |x, t| net.forward(x, t, t_final), &sde, grid, snapshots)?;
    Ok(frames.iter().map(ImageField::clamped).collect())
}

pub fn score_frames(reference: &ImageField, frames: &[ImageField], steps: usize) -> AppResult<Vec<FrameScore>> {
    let consts = SsimConstants::default();
    snapshot_indices(steps, frames.len())
        .zip(frames)
        .map(|(step, f)| {
            Ok(FrameScore {
                step,
                mse: mse(reference.values(), f.values())?,
                ssim: ssim(reference.values(), f.values(), &consts)?,
            })
        })
        .collect()
}

/// Final-frame quality of `net` from `start`.
pub fn evaluate_net(net: &ScoreNet, start: &ImageField, reference: &ImageField, cfg: &RunConfig) -> AppResult<FrameScore> {
    let frames = denoise(net, start, cfg, 1)?;
    let scores = score_frames(reference, &frames, cfg.steps)?;
    Ok(scores[0])
}

/// One epoch of a monitored training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss: f64,
    /// Training wall time so far, evaluation excluded.
    pub wall_ms: f64,
}

/// An evaluation taken during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub epoch: usize,
    pub wall_ms: f64,
    pub score: FrameScore,
}

#[derive(Debug, Clone)]
pub struct MonitoredRun {
    pub outcome: TrainOutcome,
    pub epochs: Vec<EpochRow>,
    pub evals: Vec<EvalRow>,
}

/// Training parameters that vary between monitored runs.
#[derive(Debug, Clone, Copy)]
pub struct RunPlan<'a> {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: usize,
    /// Stop once an evaluation reaches every level in this list.
    pub stop_levels: &'a [f64],
}

/// Trains with periodic evaluation from the mode's evaluation start.
pub fn monitored_training(image: &ImageField, scores: Option<&ScoreField>, cfg: &RunConfig, plan: RunPlan<'_>) -> AppResult<MonitoredRun> {
    let sde = cfg.sde_spec()?;
    let grid = cfg.grid()?;
    let mut tc = cfg.train_config(plan.mode);
    tc.seed = plan.seed;
    tc.epochs = plan.epochs;
    let start = evaluation_start(image, scores, cfg, plan.mode, plan.seed)?;

    let mut epochs = Vec::with_capacity(plan.epochs);
    let mut evals = Vec::new();
    let mut eval_error = None;
    let mut best = f64::NEG_INFINITY;
    let mut training = Duration::ZERO;
    let mut lap = Instant::now();
    let outcome = train_with(scores, image, &sde, grid, &tc, |report| {
        training += lap.elapsed();
        let wall_ms = training.as_secs_f64() * 1e3;
        epochs.push(EpochRow {
            epoch: report.epoch,
            loss: report.loss,
            wall_ms,
        });
        let mut flow = ControlFlow::Continue(());
        if report.epoch % cfg.eval_every == 0 || report.epoch == plan.epochs {
            match evaluate_net(report.net, &start, image, cfg) {
                Ok(score) => {
                    best = best.max(score.ssim.ssim);
                    evals.push(EvalRow {
                        epoch: report.epoch,
                        wall_ms,
                        score,
                    });
                    if !plan.stop_levels.is_empty() && plan.stop_levels.iter().all(|&l| best >= l) {
                        flow = ControlFlow::Break(());
                    }
                }
                Err(e) => {
                    eval_error = Some(e);
                    flow = ControlFlow::Break(());
                }
            }
        }
        lap = Instant::now();
        flow
    })?;
    if let Some(e) = eval_error {
        return Err(e);
    }
    Ok(MonitoredRun { outcome, epochs, evals })
}

/// First evaluation reaching `level`, if any.
pub fn first_reaching(evals: &[EvalRow], level: f64) -> Option<&EvalRow> {
    evals.iter().find(|e| e.score.ssim.ssim >= level)
}
