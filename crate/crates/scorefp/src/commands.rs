//! The `precompute`, `train`, `denoise`, `evaluate` and `compare` commands.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use scorefp_core::score_net::ScoreNet;
use scorefp_core::{ImageField, ScoreField};

use crate::config::{Mode, RunConfig};
use crate::error::{AppError, AppResult};
use crate::formats::{read_field, read_network, write_field, write_network};
use crate::image_io::{load_image, save_image, save_strip, BitDepth};
use crate::pipeline::{
    denoise, ensure_dir, evaluation_start, first_reaching, load_subjects, monitored_training, precompute, score_frames, EvalRow,
    FrameScore, Layout, MonitoredRun, RunPlan, Subject,
};

/// Whether every fixed-point solve met its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    fn merge(self, other: Status) -> Status {
        if self == Status::NotConverged || other == Status::NotConverged {
            Status::NotConverged
        } else {
            Status::Converged
        }
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn ms(v: f64) -> String {
    format!("{v:.3}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> AppResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Context {
        context: path.display().to_string(),
        source: Box::new(e.into()),
    })?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub const ITERATION_HEADER: [&str; 3] = ["k", "error", "wall_ms"];
pub const LOSS_HEADER: [&str; 3] = ["epoch", "loss", "wall_ms"];
pub const METRICS_HEADER: [&str; 7] = ["image_id", "epoch_or_step", "mse", "ssim", "l", "c", "s"];
pub const COMPARE_HEADER: [&str; 5] = ["method", "SSIM", "MSE", "training_time_s", "speedup"];
pub const EPOCHS_HEADER: [&str; 5] = ["target", "method", "epochs_to_target", "ssim", "mse"];
pub const SUMMARY_HEADER: [&str; 9] = [
    "image_id",
    "seed",
    "target",
    "embedded_epochs",
    "baseline_epochs",
    "epoch_ratio",
    "embedded_time_s",
    "baseline_time_s",
    "time_ratio",
];

fn metrics_row(id: &str, step: usize, s: &FrameScore) -> Vec<String> {
    vec![
        id.to_string(),
        step.to_string(),
        num(s.mse),
        num(s.ssim.ssim),
        num(s.ssim.luminance),
        num(s.ssim.contrast),
        num(s.ssim.structure),
    ]
}

fn write_training_logs(dir: &Path, id: &str, run: &MonitoredRun) -> AppResult<()> {
    let losses: Vec<_> = run
        .epochs
        .iter()
        .map(|e| vec![e.epoch.to_string(), num(e.loss), ms(e.wall_ms)])
        .collect();
    write_csv(&dir.join("loss.csv"), &LOSS_HEADER, &losses)?;
    let metrics: Vec<_> = run.evals.iter().map(|e| metrics_row(id, e.epoch, &e.score)).collect();
    write_csv(&dir.join("metrics.csv"), &METRICS_HEADER, &metrics)
}

fn load_scores(layout: &Layout, subject: &Subject, cfg: &RunConfig) -> AppResult<ScoreField> {
    let path = layout.score(&subject.id);
    if !path.exists() {
        return Err(AppError::Input(format!(
            "{} is missing; run `precompute` first",
            path.display()
        )));
    }
    let series = read_field(&path, cfg.t_final)?;
    if series.height() != subject.image.height() || series.width() != subject.image.width() || series.grid().steps() != cfg.steps {
        return Err(AppError::Input(format!(
            "{} does not match the image shape or step count",
            path.display()
        )));
    }
    Ok(ScoreField(series))
}

fn scores_for(layout: &Layout, subject: &Subject, cfg: &RunConfig, mode: Mode) -> AppResult<Option<ScoreField>> {
    match mode {
        Mode::Embedded => load_scores(layout, subject, cfg).map(Some),
        Mode::Baseline => Ok(None),
    }
}

pub fn cmd_precompute(cfg: &RunConfig) -> AppResult<Status> {
    let layout = Layout::new(&cfg.out_dir);
    let mut status = Status::Converged;
    for subject in load_subjects(cfg)? {
        let dir = layout.subject(&subject.id);
        ensure_dir(&dir)?;
        save_image(&subject.image, &dir.join("image.pgm"), BitDepth::Sixteen)?;
        let pre = precompute(&subject.image, cfg)?;
        let sol = &pre.solution;
        write_field(&sol.log_density, &layout.log_density(&subject.id))?;
        write_field(&sol.score, &layout.score(&subject.id))?;
        let rows: Vec<_> = sol
            .trace
            .iter()
            .zip(&pre.iteration_ms)
            .map(|(r, t)| vec![r.iteration.to_string(), num(r.error), ms(*t)])
            .collect();
        write_csv(&layout.iterations(&subject.id), &ITERATION_HEADER, &rows)?;
        println!(
            "{}: {} after {} iterations, error {:.3e}, {:.3} s",
            subject.id,
            if sol.converged { "converged" } else { "NOT converged" },
            sol.iterations(),
            sol.final_error(),
            pre.elapsed.as_secs_f64()
        );
        if !sol.converged {
            status = Status::NotConverged;
        }
    }
    Ok(status)
}

pub fn cmd_train(cfg: &RunConfig, mode: Mode) -> AppResult<Status> {
    let layout = Layout::new(&cfg.out_dir);
    for subject in load_subjects(cfg)? {
        let scores = scores_for(&layout, &subject, cfg, mode)?;
        let stop: Vec<f64> = cfg.stop_ssim.into_iter().collect();
        let run = monitored_training(
            &subject.image,
            scores.as_ref(),
            cfg,
            RunPlan {
                mode,
                seed: cfg.seed,
                epochs: cfg.epochs,
                stop_levels: &stop,
            },
        )?;
        let dir = layout.mode(&subject.id, mode);
        ensure_dir(&dir)?;
        write_network(&run.outcome.net, &layout.checkpoint(&subject.id, mode))?;
        write_training_logs(&dir, &subject.id, &run)?;
        let last = run.epochs.last();
        let best = run.evals.iter().map(|e| e.score.ssim.ssim).fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{} [{}]: {} epochs, final loss {}, best SSIM {:.4}, training {:.3} s",
            subject.id,
            mode.name(),
            run.epochs.len(),
            last.map_or("n/a".into(), |e| format!("{:.4}", e.loss)),
            best,
            last.map_or(0.0, |e| e.wall_ms / 1e3)
        );
    }
    Ok(Status::Converged)
}

fn load_checkpoint(layout: &Layout, subject: &Subject, mode: Mode, checkpoint: Option<&Path>) -> AppResult<ScoreNet> {
    let path = checkpoint.map_or_else(|| layout.checkpoint(&subject.id, mode), Path::to_path_buf);
    if !path.exists() {
        return Err(AppError::Input(format!("{} is missing; run `train` first", path.display())));
    }
    let net = read_network(&path)?;
    if net.dim() != subject.image.len() {
        return Err(AppError::Input(format!(
            "{} is for {} pixels, image {} has {}",
            path.display(),
            net.dim(),
            subject.id,
            subject.image.len()
        )));
    }
    Ok(net)
}

fn start_image(layout: &Layout, subject: &Subject, cfg: &RunConfig, mode: Mode, input: Option<&Path>) -> AppResult<ImageField> {
    match input {
        Some(path) => {
            let img = load_image(path)?;
            if img.height() != subject.image.height() || img.width() != subject.image.width() {
                return Err(AppError::Input(format!("{} differs in shape from {}", path.display(), subject.id)));
            }
            Ok(img)
        }
        None => {
            let scores = scores_for(layout, subject, cfg, mode)?;
            evaluation_start(&subject.image, scores.as_ref(), cfg, mode, cfg.seed)
        }
    }
}

pub fn cmd_denoise(cfg: &RunConfig, mode: Mode, checkpoint: Option<&Path>, input: Option<&Path>) -> AppResult<Status> {
    let layout = Layout::new(&cfg.out_dir);
    for subject in load_subjects(cfg)? {
        let net = load_checkpoint(&layout, &subject, mode, checkpoint)?;
        let start = start_image(&layout, &subject, cfg, mode, input)?;
        let frames = denoise(&net, &start, cfg, cfg.snapshots)?;
        let dir = layout.mode(&subject.id, mode).join("denoise");
        ensure_dir(&dir)?;
        save_image(&start.clamped(), &dir.join("start.pgm"), BitDepth::Eight)?;
        for (k, f) in frames.iter().enumerate() {
            save_image(f, &dir.join(format!("frame_{:02}.pgm", k + 1)), BitDepth::Eight)?;
        }
        save_strip(&frames, &dir.join("strip.pgm"), BitDepth::Eight)?;
        let last = frames.last().expect("at least one snapshot");
        save_image(last, &dir.join("final.pgm"), BitDepth::Eight)?;
        println!("{} [{}]: {} snapshots written to {}", subject.id, mode.name(), frames.len(), dir.display());
    }
    Ok(Status::Converged)
}

pub fn cmd_evaluate(cfg: &RunConfig, mode: Mode, checkpoint: Option<&Path>) -> AppResult<Status> {
    let layout = Layout::new(&cfg.out_dir);
    for subject in load_subjects(cfg)? {
        let net = load_checkpoint(&layout, &subject, mode, checkpoint)?;
        let start = start_image(&layout, &subject, cfg, mode, None)?;
        let frames = denoise(&net, &start, cfg, cfg.snapshots)?;
        let scores = score_frames(&subject.image, &frames, cfg.steps)?;
        let rows: Vec<_> = scores.iter().map(|s| metrics_row(&subject.id, s.step, s)).collect();
        let dir = layout.mode(&subject.id, mode);
        ensure_dir(&dir)?;
        write_csv(&dir.join("evaluation.csv"), &METRICS_HEADER, &rows)?;
        let last = scores.last().expect("at least one snapshot");
        println!(
            "{} [{}]: SSIM {:.4} (l {:.4}, c {:.4}, s {:.4}), MSE {:.6}",
            subject.id,
            mode.name(),
            last.ssim.ssim,
            last.ssim.luminance,
            last.ssim.contrast,
            last.ssim.structure,
            last.mse
        );
    }
    Ok(Status::Converged)
}

/// The first evaluation of a run that reached a target level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reach {
    pub epoch: usize,
    pub ssim: f64,
    pub mse: f64,
    /// Training seconds up to that epoch; for the embedded mode this
    /// includes the score precomputation.
    pub time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ModeResult {
    pub mode: Mode,
    /// One entry per configured target, `None` when the cap was hit first.
    pub reached: Vec<Option<Reach>>,
    pub run: MonitoredRun,
}

#[derive(Debug, Clone)]
pub struct PairResult {
    pub image_id: String,
    pub seed: u64,
    pub precompute_s: f64,
    pub embedded: ModeResult,
    pub baseline: ModeResult,
}

impl PairResult {
    /// Embedded reached `targets[k]` in strictly fewer epochs than baseline.
    pub fn embedded_wins(&self, k: usize) -> bool {
        match (self.embedded.reached[k], self.baseline.reached[k]) {
            (Some(e), Some(b)) => e.epoch < b.epoch,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn epoch_ratio(&self, k: usize) -> Option<f64> {
        Some(self.baseline.reached[k]?.epoch as f64 / self.embedded.reached[k]?.epoch as f64)
    }

    pub fn time_ratio(&self, k: usize) -> Option<f64> {
        Some(self.baseline.reached[k]?.time_s / self.embedded.reached[k]?.time_s)
    }
}

fn mode_result(mode: Mode, run: MonitoredRun, targets: &[f64], offset_s: f64) -> ModeResult {
    let reach = |e: &EvalRow| Reach {
        epoch: e.epoch,
        ssim: e.score.ssim.ssim,
        mse: e.score.mse,
        time_s: offset_s + e.wall_ms / 1e3,
    };
    let reached = targets.iter().map(|&t| first_reaching(&run.evals, t).map(reach)).collect();
    ModeResult { mode, reached, run }
}

/// Trains both modes from the same seed up to the epoch cap.
pub fn run_pair(subject: &Subject, scores: &ScoreField, precompute_s: f64, cfg: &RunConfig, seed: u64) -> AppResult<PairResult> {
    let run = |mode: Mode, scores: Option<&ScoreField>| {
        monitored_training(
            &subject.image,
            scores,
            cfg,
            RunPlan {
                mode,
                seed,
                epochs: cfg.epoch_cap,
                stop_levels: &cfg.targets,
            },
        )
    };
    let embedded = run(Mode::Embedded, Some(scores))?;
    let baseline = run(Mode::Baseline, None)?;
    Ok(PairResult {
        image_id: subject.id.clone(),
        seed,
        precompute_s,
        embedded: mode_result(Mode::Embedded, embedded, &cfg.targets, precompute_s),
        baseline: mode_result(Mode::Baseline, baseline, &cfg.targets, 0.0),
    })
}

/// Runs `tasks` on up to `jobs` threads, returning results in task order.
pub fn run_parallel<T: Sync, R: Send>(tasks: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, tasks.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let r = f(task);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub targets: Vec<f64>,
    pub pairs: Vec<PairResult>,
    pub status: Status,
}

impl CompareReport {
    /// Pairs in which embedded training won at `targets[k]`.
    pub fn wins(&self, k: usize) -> usize {
        self.pairs.iter().filter(|p| p.embedded_wins(k)).count()
    }
}

fn reach_cells(r: Option<Reach>, target: f64, speedup: Option<f64>) -> Vec<String> {
    match r {
        Some(r) => vec![
            num(target),
            num(r.mse),
            format!("{:.3}", r.time_s),
            speedup.map_or_else(String::new, |s| format!("{s:.3}")),
        ],
        None => vec![num(target), "unreachable".into(), "unreachable".into(), String::new()],
    }
}

fn table_rows(pair: &PairResult, targets: &[f64]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, &target) in targets.iter().enumerate() {
        for (res, speedup) in [(&pair.embedded, pair.time_ratio(k)), (&pair.baseline, pair.baseline.reached[k].map(|_| 1.0))] {
            let mut row = vec![res.mode.name().to_string()];
            row.extend(reach_cells(res.reached[k], target, speedup));
            rows.push(row);
        }
    }
    rows
}

fn epoch_rows(pair: &PairResult, targets: &[f64]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, &target) in targets.iter().enumerate() {
        for res in [&pair.embedded, &pair.baseline] {
            let cells = match res.reached[k] {
                Some(r) => vec![r.epoch.to_string(), num(r.ssim), num(r.mse)],
                None => vec!["unreachable".into(), String::new(), String::new()],
            };
            let mut row = vec![num(target), res.mode.name().to_string()];
            row.extend(cells);
            rows.push(row);
        }
    }
    rows
}

/// Renders rows as a whitespace-aligned text table.
pub fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, header.to_vec());
    for row in rows {
        line(&mut out, row.iter().map(String::as_str).collect());
    }
    out
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.3}"))
}

fn write_pair(root: &Path, pair: &PairResult, targets: &[f64]) -> AppResult<()> {
    let dir = root.join(&pair.image_id).join(format!("seed_{}", pair.seed));
    ensure_dir(&dir)?;
    let table = table_rows(pair, targets);
    write_csv(&dir.join("compare.csv"), &COMPARE_HEADER, &table)?;
    let text = aligned(&COMPARE_HEADER, &table);
    std::fs::write(dir.join("compare.txt"), &text).map_err(|e| AppError::io(&dir, e))?;
    write_csv(&dir.join("epochs.csv"), &EPOCHS_HEADER, &epoch_rows(pair, targets))?;
    for res in [&pair.embedded, &pair.baseline] {
        let mdir = dir.join(res.mode.name());
        ensure_dir(&mdir)?;
        write_training_logs(&mdir, &pair.image_id, &res.run)?;
    }
    Ok(())
}

fn summary_rows(report: &CompareReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for pair in &report.pairs {
        for (k, &target) in report.targets.iter().enumerate() {
            let epochs = |r: Option<Reach>| r.map_or_else(|| "unreachable".to_string(), |r| r.epoch.to_string());
            let time = |r: Option<Reach>| r.map_or_else(String::new, |r| format!("{:.3}", r.time_s));
            let (e, b) = (pair.embedded.reached[k], pair.baseline.reached[k]);
            rows.push(vec![
                pair.image_id.clone(),
                pair.seed.to_string(),
                num(target),
                epochs(e),
                epochs(b),
                opt_num(pair.epoch_ratio(k)),
                time(e),
                time(b),
                opt_num(pair.time_ratio(k)),
            ]);
        }
    }
    rows
}

/// Runs paired embedded/baseline training for every image and seed.
pub fn compare(cfg: &RunConfig, jobs: usize) -> AppResult<CompareReport> {
    let subjects = load_subjects(cfg)?;
    let pre = run_parallel(&subjects, jobs, |s| precompute(&s.image, cfg));
    let mut status = Status::Converged;
    let mut prepared = Vec::with_capacity(subjects.len());
    for (subject, pre) in subjects.iter().zip(pre) {
        let pre = pre?;
        if !pre.solution.converged {
            status = status.merge(Status::NotConverged);
        }
        prepared.push((subject, pre.solution.score, pre.elapsed.as_secs_f64()));
    }
    let tasks: Vec<(usize, u64)> = (0..prepared.len())
        .flat_map(|i| (0..cfg.compare_runs as u64).map(move |r| (i, cfg.seed.wrapping_add(r))))
        .collect();
    let results = run_parallel(&tasks, jobs, |&(i, seed)| {
        let (subject, scores, pre_s) = &prepared[i];
        run_pair(subject, scores, *pre_s, cfg, seed)
    });
    let pairs = results.into_iter().collect::<AppResult<Vec<_>>>()?;
    Ok(CompareReport {
        targets: cfg.targets.clone(),
        pairs,
        status,
    })
}

pub fn cmd_compare(cfg: &RunConfig, jobs: usize) -> AppResult<Status> {
    let report = compare(cfg, jobs)?;
    let root = Layout::new(&cfg.out_dir).compare();
    ensure_dir(&root)?;
    for pair in &report.pairs {
        write_pair(&root, pair, &report.targets)?;
    }
    let rows = summary_rows(&report);
    write_csv(&root.join("summary.csv"), &SUMMARY_HEADER, &rows)?;
    let mut text = aligned(&SUMMARY_HEADER, &rows);
    for (k, &target) in report.targets.iter().enumerate() {
        let _ = writeln!(
            text,
            "SSIM {target}: embedded reached it in fewer epochs in {} of {} runs",
            report.wins(k),
            report.pairs.len()
        );
    }
    std::fs::write(root.join("summary.txt"), &text).map_err(|e| AppError::io(&root, e))?;
    print!("{text}");
    Ok(report.status)
}
