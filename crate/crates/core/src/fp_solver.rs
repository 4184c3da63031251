//! Implicit finite-difference solver for the log-density Fokker-Planck equation.
//!
//! With `m = ln p`, the frozen previous-iterate score `s` and
//! `phi = f - g^2 s / 2`, each time step solves
//!
//! ```text
//! (1 + 2 g^2 dt) m_ij
//!   + (-g^2 dt/2 + phi dt/2) (m_{i+1,j} + m_{i,j+1})
//!   + (-g^2 dt/2 - phi dt/2) (m_{i-1,j} + m_{i,j-1})  =  m^{n-1}_ij - div(f)_ij dt
//! ```
//!
//! on the five-point stencil with unit spacing. The matrix is five-diagonal
//! with bandwidth `W` and is factorised in-band. The outer policy iteration
//! re-linearises around the latest score until successive sweeps agree.

use alloc::vec;
use alloc::vec::Vec;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::fields::{FieldSeries, LogDensityField, ScoreField, SdeSpec, TimeGrid};

/// How stencil entries that fall off the lattice are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Off-grid neighbours are dropped from the matrix, i.e. zero ghost values.
    #[default]
    Truncate,
    /// Ghost values replicate the nearest boundary node (zero normal flux).
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub boundary: Boundary,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 50,
            boundary: Boundary::Truncate,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("at least one outer iteration is required"));
        }
        Ok(())
    }
}

/// One implicit time step: `matrix * m = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSystem {
    pub height: usize,
    pub width: usize,
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
}

impl BandedSystem {
    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    /// `max |A m - rhs|`.
    pub fn residual_inf(&self, m: &[f64]) -> f64 {
        self.matrix
            .matvec(m)
            .iter()
            .zip(&self.rhs)
            .fold(0.0, |acc, (am, r)| acc.max((am - r).abs()))
    }
}

/// Inputs for assembling the step `t_{n-1} -> t_n`.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub height: usize,
    pub width: usize,
    /// `m^{n-1}` from the current sweep.
    pub m_prev_time: &'a [f64],
    /// Score of `m^n` from the previous outer iteration.
    pub score_prev_iter: &'a [f64],
    /// Image values at which the drift `f` is evaluated.
    pub state: &'a [f64],
    pub t: f64,
    pub dt: f64,
}

/// Stencil neighbours of node `(i, j)`: `Some(k)` on the grid, `None` off it.
/// Order: south `(i+1, j)`, east `(i, j+1)`, north `(i-1, j)`, west `(i, j-1)`.
#[inline]
fn neighbours(i: usize, j: usize, height: usize, width: usize) -> [Option<usize>; 4] {
    let k = i * width + j;
    [
        (i + 1 < height).then_some(k + width),
        (j + 1 < width).then_some(k + 1),
        (i > 0).then(|| k - width),
        (j > 0).then(|| k - 1),
    ]
}

/// Ghost value for an off-grid neighbour of node `k` holding `own`.
#[inline]
fn ghost(boundary: Boundary, own: f64) -> f64 {
    match boundary {
        Boundary::Truncate => 0.0,
        Boundary::Reflect => own,
    }
}

/// `(v_{i+1,j} + v_{i,j+1} - v_{i-1,j} - v_{i,j-1}) / 2` at node `(i, j)`.
#[inline]
fn centered_sum(values: &[f64], i: usize, j: usize, height: usize, width: usize, boundary: Boundary) -> f64 {
    let own = values[i * width + j];
    let at = |nb: Option<usize>| nb.map_or_else(|| ghost(boundary, own), |k| values[k]);
    let [s, e, n, w] = neighbours(i, j, height, width);
    0.5 * (at(s) + at(e) - at(n) - at(w))
}

/// Builds the five-diagonal system for one implicit step.
pub fn assemble_system(inputs: &StepInputs<'_>, sde: &SdeSpec, boundary: Boundary) -> Result<BandedSystem> {
    let StepInputs {
        height,
        width,
        m_prev_time,
        score_prev_iter,
        state,
        t,
        dt,
    } = *inputs;
    let d = height * width;
    for (name, v) in [("m_prev_time", m_prev_time), ("score_prev_iter", score_prev_iter), ("state", state)] {
        if v.len() != d {
            return Err(Error::ShapeError {
                expected: d,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(alloc::format!("{name} has non-finite entries")));
        }
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }

    let g2 = sde.diffusion_sq(t);
    let drift = sde.drift_field(state, t);
    let mut matrix = BandMatrix::zeros(d, width, width);
    let mut rhs = vec![0.0; d];

    for i in 0..height {
        for j in 0..width {
            let k = i * width + j;
            let phi = drift[k] - 0.5 * g2 * score_prev_iter[k];
            let diag = 1.0 + 2.0 * g2 * dt;
            let forward = -0.5 * g2 * dt + 0.5 * phi * dt;
            let backward = -0.5 * g2 * dt - 0.5 * phi * dt;
            let div_f = centered_sum(&drift, i, j, height, width, boundary);

            let mut diag_total = diag;
            let [s, e, n, w] = neighbours(i, j, height, width);
            for (nb, coeff) in [(s, forward), (e, forward), (n, backward), (w, backward)] {
                match (nb, boundary) {
                    (Some(col), _) => matrix.set(k, col, coeff),
                    (None, Boundary::Truncate) => {}
                    (None, Boundary::Reflect) => diag_total += coeff,
                }
            }
            matrix.set(k, k, diag_total);
            rhs[k] = m_prev_time[k] - div_f * dt;

            if !(diag_total.is_finite() && forward.is_finite() && backward.is_finite() && rhs[k].is_finite()) {
                return Err(Error::AssemblyError { row: k });
            }
        }
    }
    Ok(BandedSystem {
        height,
        width,
        matrix,
        rhs,
    })
}

/// Solves one assembled step by banded LU.
pub fn solve_banded(sys: &BandedSystem) -> Result<Vec<f64>> {
    sys.matrix.solve(&sys.rhs)
}

/// Central-difference score with zero padding at the borders.
pub fn central_difference_score(m: &[f64], height: usize, width: usize) -> Vec<f64> {
    central_difference_score_with(m, height, width, Boundary::Truncate)
}

/// Central-difference score whose off-grid values follow `boundary`.
pub fn central_difference_score_with(m: &[f64], height: usize, width: usize, boundary: Boundary) -> Vec<f64> {
    assert_eq!(m.len(), height * width);
    let mut score = vec![0.0; m.len()];
    for i in 0..height {
        for j in 0..width {
            score[i * width + j] = centered_sum(m, i, j, height, width, boundary);
        }
    }
    score
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    pub log_density: LogDensityField,
    pub score: ScoreField,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

impl FpSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_error(&self) -> f64 {
        self.trace.last().map_or(f64::INFINITY, |r| r.error)
    }

    /// `Err(NotConverged)` when the iteration cap was hit before the tolerance.
    pub fn status(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations(),
                error: self.final_error(),
            })
        }
    }
}

/// Outer fixed-point iteration over full time sweeps.
///
/// The first sweep uses a zero score, making it a plain advection-diffusion
/// solve. The previous iterate of `m` starts as `m0` repeated over all steps.
pub fn policy_iteration(
    m0: &[f64],
    state: &[f64],
    height: usize,
    width: usize,
    sde: &SdeSpec,
    grid: TimeGrid,
    cfg: &SolverConfig,
) -> Result<FpSolution> {
    policy_iteration_with(m0, state, height, width, sde, grid, cfg, |_| {})
}

/// [`policy_iteration`] calling `observer` after every outer iteration.
#[allow(clippy::too_many_arguments)]
pub fn policy_iteration_with(
    m0: &[f64],
    state: &[f64],
    height: usize,
    width: usize,
    sde: &SdeSpec,
    grid: TimeGrid,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<FpSolution> {
    cfg.validate()?;
    let d = height * width;
    if m0.len() != d {
        return Err(Error::ShapeError {
            expected: d,
            found: m0.len(),
        });
    }
    let steps = grid.steps();
    let dt = grid.dt();

    let mut m_prev: Vec<f64> = m0.iter().copied().cycle().take(d * (steps + 1)).collect();
    let mut score_prev = vec![0.0; d * (steps + 1)];
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_iters {
        let mut m_next = vec![0.0; d * (steps + 1)];
        m_next[..d].copy_from_slice(m0);
        for n in 1..=steps {
            let (done, rest) = m_next.split_at_mut(n * d);
            let inputs = StepInputs {
                height,
                width,
                m_prev_time: &done[(n - 1) * d..],
                score_prev_iter: &score_prev[n * d..(n + 1) * d],
                state,
                t: grid.time(n),
                dt,
            };
            let sys = assemble_system(&inputs, sde, cfg.boundary)?;
            let m_n = solve_banded(&sys)?;
            rest[..d].copy_from_slice(&m_n);
        }

        let mut score_next = vec![0.0; d * (steps + 1)];
        for n in 0..=steps {
            let s = central_difference_score_with(&m_next[n * d..(n + 1) * d], height, width, cfg.boundary);
            score_next[n * d..(n + 1) * d].copy_from_slice(&s);
        }

        let error = libm::sqrt(
            m_next
                .iter()
                .zip(&m_prev)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>(),
        );
        let record = IterationRecord { iteration: k, error };
        observer(&record);
        trace.push(record);
        m_prev = m_next;
        score_prev = score_next;
        if !error.is_finite() {
            return Err(Error::NumericalError {
                context: "policy iteration",
                epoch: None,
            });
        }
        if error <= cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(FpSolution {
        log_density: LogDensityField(FieldSeries::new(height, width, grid, m_prev)?),
        score: ScoreField(FieldSeries::new(height, width, grid, score_prev)?),
        trace,
        converged,
    })
}
