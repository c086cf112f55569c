//! Time integration for nonlocal, local and mixed systems: explicit Euler
//! under a CFL guard, and fixed-step BDF2 with matrix-free damped Newton
//! for stiff method-of-lines runs.

use std::sync::Arc;

use crate::diagnostics::{choose_theta, dissipation_y, lp_energy, weighted_mass, ThetaWeights};
use crate::error::{CoreError, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{gmres, norm2};
use crate::operators::{apply_mode, DiffusionMode};
use crate::reactions::ReactionSystem;

/// A complete problem description: grid, reaction field, per-component
/// diffusion and initial data, integrated to `t_end`. Local components
/// carry homogeneous Neumann boundary conditions.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub grid: Arc<Grid>,
    pub reaction: ReactionSystem,
    pub modes: Vec<DiffusionMode>,
    pub initial: Field,
    pub t_end: f64,
}

impl SystemSpec {
    pub fn new(
        grid: Arc<Grid>,
        reaction: ReactionSystem,
        modes: Vec<DiffusionMode>,
        initial: Field,
        t_end: f64,
    ) -> Result<Self> {
        let m = reaction.num_components();
        if m == 0 {
            return Err(CoreError::invalid("reaction", "at least one component"));
        }
        if modes.len() != m {
            return Err(CoreError::invalid(
                "modes",
                format!("{} modes for {m} components", modes.len()),
            ));
        }
        if initial.num_components() != m {
            return Err(CoreError::invalid(
                "initial",
                format!("{} components for reaction with {m}", initial.num_components()),
            ));
        }
        if initial.grid().num_nodes() != grid.num_nodes() {
            return Err(CoreError::GridMismatch(
                "initial data lives on a different grid".into(),
            ));
        }
        for mode in &modes {
            mode.validate(&grid)?;
        }
        let min = initial.min_value();
        if min < 0.0 {
            return Err(CoreError::invalid(
                "initial",
                format!("componentwise nonnegative initial data required, min {min}"),
            ));
        }
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(CoreError::invalid("t_end", format!("must be positive, got {t_end}")));
        }
        Ok(SystemSpec {
            grid,
            reaction,
            modes,
            initial,
            t_end,
        })
    }

    pub fn num_components(&self) -> usize {
        self.reaction.num_components()
    }

    pub fn diffusivities(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.diffusivity()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    ImplicitBdf2,
}

/// Diagnostics recorded along a trajectory.
#[derive(Debug, Clone)]
pub struct DiagnosticsConfig {
    /// Energy orders recorded each step (a certified theta is chosen per
    /// order from the component diffusivities).
    pub lp_orders: Vec<u32>,
    /// Weights for the tracked mass; defaults to the reaction's declared
    /// balance weights, else all ones.
    pub mass_weights: Option<Vec<f64>>,
    /// Record the nonlocal dissipation functional every this many steps
    /// (0 disables it; it costs a double sum per nonlocal component).
    pub dissipation_stride: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            lp_orders: vec![2],
            mass_weights: None,
            dissipation_stride: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Fixed step; None picks the stability-limited step.
    pub dt: Option<f64>,
    pub cfl_fraction: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub negativity_tol: f64,
    /// Keep a field snapshot every this many accepted steps (the initial and
    /// final states are always kept).
    pub snapshot_stride: usize,
    pub diagnostics: DiagnosticsConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::ExplicitEuler,
            dt: None,
            cfl_fraction: 0.9,
            newton_tol: 1e-8,
            newton_max_iter: 25,
            negativity_tol: 1e-10,
            snapshot_stride: 100,
            diagnostics: DiagnosticsConfig::default(),
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(CoreError::invalid("dt", format!("must be positive, got {dt}")));
            }
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(CoreError::invalid(
                "cfl_fraction",
                format!("must lie in (0, 1], got {}", self.cfl_fraction),
            ));
        }
        if !(self.newton_tol > 0.0) || !(self.negativity_tol > 0.0) {
            return Err(CoreError::invalid("tolerances", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    BlowUp {
        t: f64,
        component: usize,
        max_value: f64,
    },
    Negativity {
        t: f64,
        component: usize,
        min_value: f64,
    },
    NewtonFailure {
        t: f64,
    },
}

impl Termination {
    pub fn is_completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub weighted_mass: f64,
    /// One entry per configured Lp order; NaN when the energy was not
    /// evaluable at that step (overflow guard).
    pub lp_energy: Vec<f64>,
    /// Sum of the dissipation functional over nonlocal components, on the
    /// configured stride.
    pub dissipation: Option<f64>,
    /// Per-component ratio of dt to the component's stability limit.
    pub cfl_margins: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub field: Field,
}

#[derive(Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub termination: Termination,
    /// The step actually used (the requested step, shrunk to divide t_end).
    pub dt: f64,
    pub stable_dt: f64,
    pub dt_overridden: bool,
    /// Theta certificates backing the recorded Lp energies.
    pub theta: Vec<ThetaWeights>,
    pub newton: NewtonStats,
    pub notes: Vec<String>,
    pub final_field: Field,
}

/// Stability-limited step: the minimum over components of
/// 0.5 h^2 / D (local, 1D), 0.5 h k / D (local, 2D) and 1/(d mu_max)
/// (nonlocal), scaled by `cfl_fraction`. Reaction stiffness is not
/// accounted for; explicit runs with stiff reactions must shrink dt in the
/// solver config.
pub fn stable_dt(spec: &SystemSpec, cfl_fraction: f64) -> f64 {
    let grid = &spec.grid;
    let mut dt = f64::INFINITY;
    for mode in &spec.modes {
        let limit = mode_dt_limit(mode, grid);
        dt = dt.min(limit);
    }
    cfl_fraction * dt
}

fn mode_dt_limit(mode: &DiffusionMode, grid: &Grid) -> f64 {
    match mode {
        DiffusionMode::Local { d } => {
            let h = grid.spacing()[0];
            match grid.dim() {
                1 => 0.5 * h * h / d,
                _ => 0.5 * h * grid.spacing()[1] / d,
            }
        }
        DiffusionMode::Nonlocal { d, operator } => 1.0 / (d * operator.mu_max()),
    }
}

/// Outcome of one step attempt.
#[derive(Debug)]
pub enum StepOutcome {
    Accepted(Field),
    Terminated(Termination),
}

fn check_new_field(field: Field, t_new: f64, negativity_tol: f64) -> StepOutcome {
    let m = field.num_components();
    for c in 0..m {
        if field.component(c).iter().any(|x| !x.is_finite()) {
            let max_finite = field
                .component(c)
                .iter()
                .filter(|x| x.is_finite())
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            return StepOutcome::Terminated(Termination::BlowUp {
                t: t_new,
                component: c,
                max_value: max_finite,
            });
        }
    }
    let sup = field.max_value().abs().max(field.min_value().abs());
    let floor = -negativity_tol * (1.0 + sup);
    for c in 0..m {
        let min = field
            .component(c)
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if min < floor {
            return StepOutcome::Terminated(Termination::Negativity {
                t: t_new,
                component: c,
                min_value: min,
            });
        }
    }
    StepOutcome::Accepted(field)
}

/// Evaluate the full right-hand side (diffusion plus reaction) of every
/// component at state `u` into `out`.
fn eval_rhs(spec: &SystemSpec, t: f64, u: &Field, out: &mut [Vec<f64>]) -> Result<()> {
    let m = spec.num_components();
    for c in 0..m {
        apply_mode(&spec.modes[c], &spec.grid, u.component(c), &mut out[c])?;
    }
    let n = spec.grid.num_nodes();
    let mut u_node = vec![0.0; m];
    let mut f_node = vec![0.0; m];
    for x in 0..n {
        for c in 0..m {
            u_node[c] = u.component(c)[x];
        }
        spec.reaction.eval(t, &u_node, &mut f_node);
        for c in 0..m {
            out[c][x] += f_node[c];
        }
    }
    Ok(())
}

/// One forward Euler step on all components. Negativity below
/// -negativity_tol (1 + |u|_inf) terminates the run; values are never
/// clamped.
pub fn step_explicit(
    spec: &SystemSpec,
    field: &Field,
    t: f64,
    dt: f64,
    negativity_tol: f64,
) -> Result<StepOutcome> {
    let m = spec.num_components();
    let n = spec.grid.num_nodes();
    let mut rhs = vec![vec![0.0; n]; m];
    eval_rhs(spec, t, field, &mut rhs)?;
    let mut values = Vec::with_capacity(m);
    for c in 0..m {
        let u = field.component(c);
        let mut v = Vec::with_capacity(n);
        for x in 0..n {
            v.push(u[x] + dt * rhs[c][x]);
        }
        values.push(v);
    }
    let new_field = Field::from_values(field.grid().clone(), values)?;
    Ok(check_new_field(new_field, t + dt, negativity_tol))
}

mod newton {
    //! Damped Newton with finite-difference directional derivatives and
    //! unpreconditioned GMRES for the inner linear solves.

    use super::*;

    #[derive(Debug, Clone, Copy, Default)]
    pub struct NewtonStats {
        pub solves: usize,
        pub total_iterations: usize,
        pub max_iterations: usize,
        pub total_linear_iterations: usize,
    }

    /// Solve w = base + coef * dt * F(t, w) for w, starting from `guess`.
    /// Convergence: |R(w)| <= tol (1 + |w|).
    #[allow(clippy::too_many_arguments)]
    pub fn solve_implicit<F>(
        eval_f: &F,
        base: &[f64],
        coef_dt: f64,
        t: f64,
        guess: &[f64],
        tol: f64,
        max_iter: usize,
        stats: &mut NewtonStats,
    ) -> std::result::Result<Vec<f64>, ()>
    where
        F: Fn(f64, &[f64]) -> Vec<f64>,
    {
        let n = base.len();
        let residual = |w: &[f64]| -> Vec<f64> {
            let f = eval_f(t, w);
            (0..n).map(|i| w[i] - base[i] - coef_dt * f[i]).collect()
        };
        let mut w = guess.to_vec();
        let mut r = residual(&w);
        let mut r_norm = norm2(&r);
        stats.solves += 1;
        let mut iterations = 0;
        loop {
            if r_norm <= tol * (1.0 + norm2(&w)) {
                stats.total_iterations += iterations;
                stats.max_iterations = stats.max_iterations.max(iterations);
                return Ok(w);
            }
            if iterations >= max_iter {
                return Err(());
            }
            iterations += 1;
            // Matrix-free Jacobian of the residual:
            // J v = v - coef_dt * (F(w + sigma v) - F(w)) / sigma.
            let f_w = eval_f(t, &w);
            let w_norm = norm2(&w);
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let apply = |v: &[f64]| -> Vec<f64> {
                let v_norm = norm2(v);
                if v_norm == 0.0 {
                    return v.to_vec();
                }
                let sigma = f64::EPSILON.sqrt() * (1.0 + w_norm) / v_norm;
                let shifted: Vec<f64> =
                    w.iter().zip(v).map(|(wi, vi)| wi + sigma * vi).collect();
                let f_s = eval_f(t, &shifted);
                (0..n)
                    .map(|i| v[i] - coef_dt * (f_s[i] - f_w[i]) / sigma)
                    .collect()
            };
            let (delta, info) = gmres(apply, &rhs, 1e-3, 80.min(n));
            stats.total_linear_iterations += info.iterations;

            // Damped line search on the residual norm.
            let mut accepted = false;
            let mut lambda = 1.0f64;
            for _ in 0..9 {
                let trial: Vec<f64> = w
                    .iter()
                    .zip(&delta)
                    .map(|(wi, di)| wi + lambda * di)
                    .collect();
                let r_trial = residual(&trial);
                let r_trial_norm = norm2(&r_trial);
                if r_trial_norm <= (1.0 - 1e-4 * lambda) * r_norm {
                    w = trial;
                    r = r_trial;
                    r_norm = r_trial_norm;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(());
            }
        }
    }
}

pub use newton::NewtonStats;

fn stack(field: &Field) -> Vec<f64> {
    let mut out = Vec::with_capacity(field.num_components() * field.grid().num_nodes());
    for c in 0..field.num_components() {
        out.extend_from_slice(field.component(c));
    }
    out
}

fn unstack(grid: Arc<Grid>, m: usize, w: &[f64]) -> Field {
    let n = grid.num_nodes();
    let values: Vec<Vec<f64>> = (0..m).map(|c| w[c * n..(c + 1) * n].to_vec()).collect();
    Field::from_values(grid, values).expect("stacked state has grid shape")
}

fn eval_f_stacked(spec: &SystemSpec, t: f64, w: &[f64]) -> Vec<f64> {
    let m = spec.num_components();
    let grid = spec.grid.clone();
    let field = unstack(grid, m, w);
    let n = spec.grid.num_nodes();
    let mut rhs = vec![vec![0.0; n]; m];
    // Stacked states can carry transient negative or non-finite entries
    // inside a Newton iteration; the rhs evaluation tolerates them and the
    // acceptance check runs on the converged state only.
    eval_rhs(spec, t, &field, &mut rhs).expect("rhs evaluation on matching grid");
    let mut out = Vec::with_capacity(m * n);
    for row in rhs {
        out.extend(row);
    }
    out
}

/// One fixed-step BDF2 solve for the state at `t + dt` given the two
/// history levels (u_prev at t - dt, u_curr at t). The nonlinear system is
/// solved by damped Newton with finite-difference Jacobian-vector products;
/// the step is not retried on failure.
pub fn step_implicit(
    spec: &SystemSpec,
    u_prev: &Field,
    u_curr: &Field,
    t: f64,
    dt: f64,
    config: &SolverConfig,
    stats: &mut NewtonStats,
) -> Result<StepOutcome> {
    let m = spec.num_components();
    let wp = stack(u_prev);
    let wc = stack(u_curr);
    let base: Vec<f64> = wp
        .iter()
        .zip(&wc)
        .map(|(p, c)| (4.0 * c - p) / 3.0)
        .collect();
    let eval = |t: f64, w: &[f64]| eval_f_stacked(spec, t, w);
    match newton::solve_implicit(
        &eval,
        &base,
        2.0 / 3.0 * dt,
        t + dt,
        &wc,
        config.newton_tol,
        config.newton_max_iter,
        stats,
    ) {
        Ok(w) => {
            let field = unstack(spec.grid.clone(), m, &w);
            Ok(check_new_field(field, t + dt, config.negativity_tol))
        }
        Err(()) => Ok(StepOutcome::Terminated(Termination::NewtonFailure {
            t: t + dt,
        })),
    }
}

/// Startup step for BDF2: one implicit Euler step.
pub fn step_implicit_euler(
    spec: &SystemSpec,
    u_curr: &Field,
    t: f64,
    dt: f64,
    config: &SolverConfig,
    stats: &mut NewtonStats,
) -> Result<StepOutcome> {
    let m = spec.num_components();
    let wc = stack(u_curr);
    let eval = |t: f64, w: &[f64]| eval_f_stacked(spec, t, w);
    match newton::solve_implicit(
        &eval,
        &wc,
        dt,
        t + dt,
        &wc,
        config.newton_tol,
        config.newton_max_iter,
        stats,
    ) {
        Ok(w) => {
            let field = unstack(spec.grid.clone(), m, &w);
            Ok(check_new_field(field, t + dt, config.negativity_tol))
        }
        Err(()) => Ok(StepOutcome::Terminated(Termination::NewtonFailure {
            t: t + dt,
        })),
    }
}

/// Integrate the system to `t_end` or a terminal status, recording
/// diagnostics every accepted step and snapshots on the configured stride.
///
/// The time loop is strictly sequential; identical inputs produce bitwise
/// identical trajectories regardless of thread count.
pub fn run(spec: &SystemSpec, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let m = spec.num_components();
    let stable = stable_dt(spec, config.cfl_fraction);
    let dt_requested = config.dt.unwrap_or(stable);
    let mut notes = Vec::new();
    let dt_overridden = config.scheme == Scheme::ExplicitEuler && dt_requested > stable * (1.0 + 1e-12);
    if dt_overridden {
        notes.push(format!(
            "requested dt {dt_requested:e} exceeds the stability-limited step {stable:e}; explicit stability is not guaranteed"
        ));
    }
    let n_steps = (spec.t_end / dt_requested).ceil().max(1.0) as usize;
    let dt = spec.t_end / n_steps as f64;

    // Theta certificates for the configured Lp orders.
    let d_vec = spec.diffusivities();
    let mut theta = Vec::new();
    for &p in &config.diagnostics.lp_orders {
        theta.push(choose_theta(&d_vec, p)?);
    }
    let mass_weights = config
        .diagnostics
        .mass_weights
        .clone()
        .or_else(|| spec.reaction.metadata().qbal_weights.clone())
        .unwrap_or_else(|| vec![1.0; m]);
    if mass_weights.len() != m {
        return Err(CoreError::invalid(
            "mass_weights",
            format!("{} weights for {m} components", mass_weights.len()),
        ));
    }
    let cfl_margins: Vec<f64> = spec
        .modes
        .iter()
        .map(|mode| dt / mode_dt_limit(mode, &spec.grid))
        .collect();

    let mut lp_failure_noted = false;
    let mut record = |step: usize,
                      t: f64,
                      field: &Field,
                      notes: &mut Vec<String>|
     -> DiagnosticsRecord {
        let min: Vec<f64> = (0..m)
            .map(|c| field.component(c).iter().fold(f64::INFINITY, |a, &b| a.min(b)))
            .collect();
        let max: Vec<f64> = (0..m)
            .map(|c| {
                field
                    .component(c)
                    .iter()
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            })
            .collect();
        let mass = weighted_mass(field, &mass_weights).unwrap_or(f64::NAN);
        let lp: Vec<f64> = theta
            .iter()
            .map(|w| match lp_energy(field, w) {
                Ok(v) => v,
                Err(e) => {
                    if !lp_failure_noted {
                        notes.push(format!("lp diagnostics unavailable from step {step}: {e}"));
                        lp_failure_noted = true;
                    }
                    f64::NAN
                }
            })
            .collect();
        let dissipation = if config.diagnostics.dissipation_stride > 0
            && step.is_multiple_of(config.diagnostics.dissipation_stride)
        {
            let mut total = 0.0;
            let mut any = false;
            for (c, mode) in spec.modes.iter().enumerate() {
                if let DiffusionMode::Nonlocal { operator, .. } = mode {
                    total += dissipation_y(operator, field.component(c)).unwrap_or(f64::NAN);
                    any = true;
                }
            }
            any.then_some(total)
        } else {
            None
        };
        DiagnosticsRecord {
            step,
            t,
            min,
            max,
            weighted_mass: mass,
            lp_energy: lp,
            dissipation,
            cfl_margins: cfl_margins.clone(),
        }
    };

    let mut times = vec![0.0];
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    diagnostics.push(record(0, 0.0, &spec.initial, &mut notes));
    let mut snapshots = vec![Snapshot {
        step: 0,
        t: 0.0,
        field: spec.initial.clone(),
    }];

    let mut termination = Termination::Completed;
    let mut newton_stats = NewtonStats::default();
    let mut current = spec.initial.clone();
    let mut previous: Option<Field> = None;

    for n in 0..n_steps {
        let t = n as f64 * dt;
        let outcome = match config.scheme {
            Scheme::ExplicitEuler => {
                step_explicit(spec, &current, t, dt, config.negativity_tol)?
            }
            Scheme::ImplicitBdf2 => match &previous {
                None => step_implicit_euler(spec, &current, t, dt, config, &mut newton_stats)?,
                Some(prev) => {
                    step_implicit(spec, prev, &current, t, dt, config, &mut newton_stats)?
                }
            },
        };
        match outcome {
            StepOutcome::Terminated(status) => {
                termination = status;
                break;
            }
            StepOutcome::Accepted(next) => {
                if config.scheme == Scheme::ImplicitBdf2 {
                    previous = Some(std::mem::replace(&mut current, next));
                } else {
                    current = next;
                }
                let step = n + 1;
                let t_new = step as f64 * dt;
                times.push(t_new);
                diagnostics.push(record(step, t_new, &current, &mut notes));
                let last = step == n_steps;
                if last || (config.snapshot_stride > 0 && step % config.snapshot_stride == 0) {
                    snapshots.push(Snapshot {
                        step,
                        t: t_new,
                        field: current.clone(),
                    });
                }
            }
        }
    }

    Ok(Trajectory {
        times,
        snapshots,
        diagnostics,
        termination,
        dt,
        stable_dt: stable,
        dt_overridden,
        theta,
        newton: newton_stats,
        notes,
        final_field: current,
    })
}
