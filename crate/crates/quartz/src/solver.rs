//! The stochastic primal-dual solver.
//!
//! Each iteration moves the primal iterate toward the maintained dual
//! aggregate `alpha_bar` (the gradient of the conjugate regularizer at the
//! aggregate, which is the aggregate itself for the quadratic regularizer)
//! by a convex combination with weight `beta * theta`, draws a random index
//! set, and updates the selected dual variables either by exact maximization
//! of a separable model of the dual (option I) or by a convex combination
//! with the gap-closing value (option II). All dual deltas within one
//! iteration are computed from the pre-iteration snapshot, so their
//! application order does not matter.

use crate::eso::EsoParams;
use crate::loss::{LossKind, LossModel};
use crate::problem::ProblemInstance;
use crate::sampling::{Sampler, SamplingScheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("scheme is over {scheme_n} blocks but the problem has {problem_n}")]
    SchemeSizeMismatch { scheme_n: usize, problem_n: usize },
    #[error("config: {0}")]
    BadConfig(String),
    #[error("initial dual variable {index} = {value} is infeasible")]
    InfeasibleStart { index: usize, value: f64 },
    #[error(transparent)]
    Eso(#[from] crate::eso::EsoError),
}

/// Dual update rule of the inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualOption {
    /// Exact maximizer of the separable dual model (closed form for the
    /// built-in losses).
    #[serde(rename = "I")]
    OptionI,
    /// Convex combination of the current dual variable and the value closing
    /// its Fenchel gap.
    #[serde(rename = "II")]
    OptionII,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub scheme: SamplingScheme,
    pub option: DualOption,
    /// Primal aggressiveness multiplier; `beta * theta` is clamped to 1 so
    /// the primal update stays a convex combination.
    pub beta: f64,
    /// Target duality gap.
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Iterations between full gap evaluations; `None` means once per epoch.
    pub gap_check_every: Option<usize>,
    pub seed: u64,
    /// Compute the dual deltas of a drawn set in parallel (they are
    /// snapshot-independent); the reduction order stays fixed.
    pub parallel_updates: bool,
}

impl SolverConfig {
    pub fn new(scheme: SamplingScheme) -> Self {
        SolverConfig {
            scheme,
            option: DualOption::OptionI,
            beta: 1.0,
            epsilon: 1e-9,
            max_epochs: 200,
            gap_check_every: None,
            seed: 0,
            parallel_updates: false,
        }
    }

    pub fn with_option(mut self, option: DualOption) -> Self {
        self.option = option;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_epochs(mut self, max_epochs: usize) -> Self {
        self.max_epochs = max_epochs;
        self
    }

    pub fn with_gap_check_every(mut self, every: usize) -> Self {
        self.gap_check_every = Some(every);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// One duality-gap measurement along a run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub epoch: f64,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub wall_ns: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "diagnostic")]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
    Aborted(String),
}

/// Mutable iterate state of a run.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub t: usize,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub theta: f64,
    /// Effective primal weight `min(beta * theta, 1)`.
    pub step_weight: f64,
    pub eso: EsoParams,
    pub warnings: Vec<String>,
    pub wall: Duration,
}

impl SolveOutcome {
    pub fn final_gap(&self) -> f64 {
        self.trace.last().map(|r| r.gap).unwrap_or(f64::NAN)
    }

    /// Iteration count of the first gap measurement at or below `epsilon`.
    pub fn iterations_to_gap(&self, epsilon: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.gap <= epsilon)
            .map(|r| r.iteration)
    }
}

/// Exact maximizer of the separable dual model
/// `-phi*(-(alpha + delta)) - abar_dot * delta - v delta^2 / (2 lambda n)`
/// over the feasible delta interval, in closed form.
pub fn option1_closed_form(
    loss: &LossModel,
    alpha: f64,
    abar_dot: f64,
    v: f64,
    lambda: f64,
    n: usize,
) -> f64 {
    let q = v / (lambda * n as f64);
    let gamma = loss.gamma;
    let raw = (1.0 - abar_dot - gamma * alpha) / (q + gamma);
    match loss.kind {
        LossKind::SmoothedHinge => raw.clamp(-alpha, 1.0 - alpha),
        LossKind::SquaredHinge => raw.max(-alpha),
    }
}

/// Maximizer of the same model found by ternary search on the concave
/// objective, to 1e-12 interval width. Oracle for the closed forms and
/// fallback route for losses without one.
pub fn option1_numeric(
    loss: &LossModel,
    alpha: f64,
    abar_dot: f64,
    v: f64,
    lambda: f64,
    n: usize,
) -> f64 {
    let q = v / (lambda * n as f64);
    let model = |delta: f64| -> f64 {
        -loss.conjugate(-(alpha + delta)) - abar_dot * delta - 0.5 * q * delta * delta
    };
    let lo0 = -alpha;
    let hi0 = match loss.kind {
        LossKind::SmoothedHinge => 1.0 - alpha,
        LossKind::SquaredHinge => {
            // expand until the maximum of the concave model is bracketed
            let mut width = 1.0;
            loop {
                let hi = lo0 + width;
                if model(hi) < model(lo0 + width / 2.0) || width > 1e12 {
                    break hi;
                }
                width *= 2.0;
            }
        }
    };
    let mut lo = lo0;
    let mut hi = hi0;
    // phase 1: ternary contraction while value comparisons are well resolved
    let coarse = 1e-6 * (hi0 - lo0).max(1.0);
    while hi - lo > coarse {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        if model(m1) < model(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    // near a flat interior maximum the remaining comparisons drown in
    // rounding noise; a parabolic fit over the last well-resolved spacing
    // pins the vertex well below that floor, still from values alone
    let center = 0.5 * (lo + hi);
    let spread = (hi - lo).max(1e-9);
    let polished = if center - spread >= lo0 && center + spread <= hi0 {
        let f_minus = model(center - spread);
        let f_mid = model(center);
        let f_plus = model(center + spread);
        let denom = f_minus - 2.0 * f_mid + f_plus;
        if denom.is_finite() && denom < 0.0 {
            let vertex = center + 0.5 * spread * (f_minus - f_plus) / denom;
            vertex.clamp(lo, hi)
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    // phase 2: finish the ternary contraction to the stated width
    while hi - lo > 1e-12 {
        let third = (hi - lo) / 3.0;
        let m1 = lo + third;
        let m2 = hi - third;
        if model(m1) < model(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let fallback = 0.5 * (lo + hi);
    if !polished.is_finite() {
        return fallback;
    }
    // keep the fit unless it is measurably worse than the ternary answer
    // (ties at rounding level go to the fit, which sits below the noise floor)
    let m_fit = model(polished);
    let m_ternary = model(fallback);
    if m_fit >= m_ternary - 1e-9 * (1.0 + m_ternary.abs()) {
        polished
    } else {
        fallback
    }
}

/// Value of the dual model at a candidate delta (for comparing update rules).
pub fn option1_model_value(
    loss: &LossModel,
    alpha: f64,
    abar_dot: f64,
    v: f64,
    lambda: f64,
    n: usize,
    delta: f64,
) -> f64 {
    let q = v / (lambda * n as f64);
    -loss.conjugate(-(alpha + delta)) - abar_dot * delta - 0.5 * q * delta * delta
}

pub struct Solver<'a> {
    problem: &'a ProblemInstance,
    config: SolverConfig,
    eso: EsoParams,
    step_weight: f64,
    iters_per_epoch: usize,
    gap_every: usize,
    warnings: Vec<String>,
}

impl<'a> Solver<'a> {
    /// Computes inclusion probabilities, overapproximation weights and the
    /// stepsize for the configured sampling. `beta * theta > 1` is clamped
    /// with a warning.
    pub fn new(problem: &'a ProblemInstance, config: SolverConfig) -> Result<Self, SolverError> {
        let n = problem.n();
        if config.scheme.n() != n {
            return Err(SolverError::SchemeSizeMismatch {
                scheme_n: config.scheme.n(),
                problem_n: n,
            });
        }
        if !config.epsilon.is_finite() || config.epsilon <= 0.0 {
            return Err(SolverError::BadConfig(format!(
                "epsilon must be positive, got {}",
                config.epsilon
            )));
        }
        if !(config.beta >= 1.0 && config.beta.is_finite()) {
            return Err(SolverError::BadConfig(format!(
                "beta must be >= 1, got {}",
                config.beta
            )));
        }
        if config.max_epochs == 0 {
            return Err(SolverError::BadConfig("max_epochs must be positive".into()));
        }
        let eso = EsoParams::compute(
            &problem.matrix,
            &config.scheme,
            problem.lambda,
            problem.loss.gamma,
        )?;
        let mut warnings = Vec::new();
        let mut step_weight = config.beta * eso.theta;
        if step_weight > 1.0 {
            warnings.push(format!(
                "beta * theta = {step_weight:.3e} exceeds 1; clamped to keep the primal update a convex combination"
            ));
            step_weight = 1.0;
        }
        let iters_per_epoch =
            ((n as f64 / config.scheme.expected_batch()).ceil() as usize).max(1);
        let gap_every = config.gap_check_every.unwrap_or(iters_per_epoch).max(1);
        Ok(Solver {
            problem,
            config,
            eso,
            step_weight,
            iters_per_epoch,
            gap_every,
            warnings,
        })
    }

    pub fn theta(&self) -> f64 {
        self.eso.theta
    }

    pub fn eso(&self) -> &EsoParams {
        &self.eso
    }

    pub fn iters_per_epoch(&self) -> usize {
        self.iters_per_epoch
    }

    /// Builds the initial state: validates dual feasibility, computes the
    /// aggregate from scratch and records the starting gap.
    pub fn init(&self, w0: Vec<f64>, alpha0: Vec<f64>) -> Result<SolverState, SolverError> {
        assert_eq!(w0.len(), self.problem.d(), "w0 has wrong dimension");
        assert_eq!(alpha0.len(), self.problem.n(), "alpha0 has wrong dimension");
        for (index, &value) in alpha0.iter().enumerate() {
            if !self.problem.loss.dual_feasible(value) {
                return Err(SolverError::InfeasibleStart { index, value });
            }
        }
        let alpha_bar = self.problem.alpha_bar(&alpha0);
        let primal = self.problem.primal_value(&w0);
        let dual = self
            .problem
            .dual_value_given_bar(&alpha0, &alpha_bar)
            .expect("feasibility already checked");
        let trace = vec![TraceRecord {
            iteration: 0,
            epoch: 0.0,
            primal,
            dual,
            gap: primal - dual,
            wall_ns: 0,
        }];
        Ok(SolverState {
            w: w0,
            alpha: alpha0,
            alpha_bar,
            t: 0,
            trace,
        })
    }

    fn dual_delta(&self, state: &SolverState, i: usize) -> f64 {
        match self.config.option {
            DualOption::OptionI => option1_closed_form(
                &self.problem.loss,
                state.alpha[i],
                self.problem.matrix.column_dot(i, &state.alpha_bar),
                self.eso.v[i],
                self.problem.lambda,
                self.problem.n(),
            ),
            DualOption::OptionII => {
                let margin = self.problem.matrix.column_dot(i, &state.w);
                let rate = self.eso.theta / self.eso.probs[i];
                -rate * (state.alpha[i] + self.problem.loss.derivative(margin))
            }
        }
    }

    /// Runs one iteration: primal convex-combination step, one draw, dual
    /// updates from the pre-iteration snapshot, incremental aggregate
    /// maintenance. Returns an error message if a non-finite delta shows up.
    pub fn step(
        &self,
        state: &mut SolverState,
        sampler: &mut Sampler,
        rng: &mut ChaCha8Rng,
        deltas: &mut Vec<f64>,
    ) -> Result<(), String> {
        let bt = self.step_weight;
        for (wj, bj) in state.w.iter_mut().zip(&state.alpha_bar) {
            *wj = (1.0 - bt) * *wj + bt * *bj;
        }
        let drawn = sampler.draw(rng);
        deltas.clear();
        if self.config.parallel_updates && drawn.len() >= 64 {
            drawn
                .par_iter()
                .map(|&i| self.dual_delta(state, i))
                .collect_into_vec(deltas);
        } else {
            deltas.extend(drawn.iter().map(|&i| self.dual_delta(state, i)));
        }
        let (lo, hi) = self.problem.loss.dual_box();
        let inv_ln = 1.0 / (self.problem.lambda * self.problem.n() as f64);
        for (&i, &delta) in drawn.iter().zip(deltas.iter()) {
            if !delta.is_finite() {
                return Err(format!(
                    "non-finite dual update {delta} at block {i}, iteration {}",
                    state.t + 1
                ));
            }
            state.alpha[i] = (state.alpha[i] + delta).clamp(lo, hi);
            self.problem
                .matrix
                .add_scaled_column(i, delta * inv_ln, &mut state.alpha_bar);
        }
        state.t += 1;
        Ok(())
    }

    /// Full solve from the default start `w = 0`, `alpha = 0`.
    pub fn solve(&self) -> SolveOutcome {
        let w0 = vec![0.0; self.problem.d()];
        let alpha0 = vec![0.0; self.problem.n()];
        self.solve_from(w0, alpha0)
            .expect("zero start is always feasible")
    }

    pub fn solve_from(
        &self,
        w0: Vec<f64>,
        alpha0: Vec<f64>,
    ) -> Result<SolveOutcome, SolverError> {
        let mut state = self.init(w0, alpha0)?;
        let clock = Instant::now();
        let mut status = SolveStatus::BudgetExhausted;
        if state.trace[0].gap <= self.config.epsilon {
            status = SolveStatus::Converged;
            return Ok(self.finish(state, status, clock));
        }
        let max_iters = self.config.max_epochs.saturating_mul(self.iters_per_epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut sampler = Sampler::new(&self.config.scheme);
        let mut deltas = Vec::new();
        while state.t < max_iters {
            if let Err(diag) = self.step(&mut state, &mut sampler, &mut rng, &mut deltas) {
                status = SolveStatus::Aborted(diag);
                break;
            }
            if state.t % self.gap_every == 0 || state.t == max_iters {
                match self.record_gap(&mut state, &clock) {
                    Ok(gap) => {
                        if gap <= self.config.epsilon {
                            status = SolveStatus::Converged;
                            break;
                        }
                    }
                    Err(diag) => {
                        status = SolveStatus::Aborted(diag);
                        break;
                    }
                }
            }
        }
        if state.trace.last().map(|r| r.iteration) != Some(state.t) {
            if let Err(diag) = self.record_gap(&mut state, &clock) {
                status = SolveStatus::Aborted(diag);
            }
        }
        Ok(self.finish(state, status, clock))
    }

    /// Recomputes the aggregate from scratch, checks it against the
    /// incrementally maintained one, evaluates the gap and appends a trace
    /// record. Non-finite iterates or aggregate drift abort the run.
    fn record_gap(&self, state: &mut SolverState, clock: &Instant) -> Result<f64, String> {
        let recomputed = self.problem.alpha_bar(&state.alpha);
        let scale = recomputed
            .iter()
            .fold(1.0_f64, |acc, &x| acc.max(x.abs()));
        let drift = state
            .alpha_bar
            .iter()
            .zip(&recomputed)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        if drift.is_nan() || drift / scale > 1e-8 {
            return Err(format!(
                "aggregate drift {drift:.3e} (scale {scale:.3e}) at iteration {}",
                state.t
            ));
        }
        state.alpha_bar = recomputed;
        if state.w.iter().any(|x| !x.is_finite())
            || state.alpha_bar.iter().any(|x| !x.is_finite())
        {
            return Err(format!("non-finite iterate at iteration {}", state.t));
        }
        let primal = self.problem.primal_value(&state.w);
        let dual = self
            .problem
            .dual_value_given_bar(&state.alpha, &state.alpha_bar)
            .map_err(|e| format!("{e} at iteration {}", state.t))?;
        let gap = primal - dual;
        state.trace.push(TraceRecord {
            iteration: state.t,
            epoch: state.t as f64 / self.iters_per_epoch as f64,
            primal,
            dual,
            gap,
            wall_ns: clock.elapsed().as_nanos(),
        });
        Ok(gap)
    }

    fn finish(&self, state: SolverState, status: SolveStatus, clock: Instant) -> SolveOutcome {
        SolveOutcome {
            w: state.w,
            alpha: state.alpha,
            trace: state.trace,
            status,
            iterations: state.t,
            theta: self.eso.theta,
            step_weight: self.step_weight,
            eso: self.eso.clone(),
            warnings: self.warnings.clone(),
            wall: clock.elapsed(),
        }
    }
}
