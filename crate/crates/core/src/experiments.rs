//! Pre-built comparison studies: the kernel-rescaling convergence sweep
//! against the matched local system, and side-by-side runs of nonlocal vs
//! mixed systems with smoothness proxies.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::grid::{Field, Grid};
use crate::integrate::{run, SolverConfig, SystemSpec, Termination, Trajectory};
use crate::kernels::{
    assemble_operator_with, effective_diffusivity_from_moment, AssemblyOptions, KernelShape,
    KernelSpec, Normalization,
};
use crate::linalg::linear_fit;
use crate::operators::DiffusionMode;
use crate::reactions::ReactionSystem;

/// Ingredients of a rescaling study: everything but the kernel scale.
#[derive(Debug, Clone)]
pub struct DifflimitSpec {
    pub grid: Arc<Grid>,
    pub reaction: ReactionSystem,
    /// Nonlocal rates d_i; the matched local run uses D_i = d_i M / (2n).
    pub d: Vec<f64>,
    pub initial: Field,
    pub t_end: f64,
}

/// Coupling of the profile width to the scale index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsSchedule {
    /// One profile for the whole sweep.
    Fixed,
    /// Shrink a Gaussian-type width like 1/j. The local reference keeps the
    /// base profile's moment; this mode emulates published table runs and
    /// is not the plain rescaling limit.
    ShrinkInverseJ,
}

#[derive(Debug, Clone)]
pub struct DifflimitConfig {
    /// Base radial profile; it is taken with unit mass for the sweep.
    pub psi: KernelShape,
    pub j_list: Vec<u32>,
    pub eps_schedule: EpsSchedule,
    pub solver: SolverConfig,
    pub assembly: AssemblyOptions,
}

/// One row of the convergence table.
#[derive(Debug, Clone)]
pub struct DifflimitRow {
    pub j: u32,
    /// Effective profile width for this row, when the shape has one.
    pub eps: Option<f64>,
    /// L2(Omega) difference to the local solution, per component.
    pub l2_diff: Vec<f64>,
    pub linf_diff: Vec<f64>,
    /// Absolute differences at the first five nodes, per component.
    pub node_diffs: Vec<[f64; 5]>,
}

impl DifflimitRow {
    /// Combined L2 difference over all components.
    pub fn l2_combined(&self) -> f64 {
        self.l2_diff.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn linf_combined(&self) -> f64 {
        self.linf_diff.iter().fold(0.0f64, |m, &x| m.max(x))
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<DifflimitRow>,
}

#[derive(Debug)]
pub struct DifflimitStudy {
    pub table: ConvergenceTable,
    /// Second moment of the base profile.
    pub second_moment: f64,
    /// Matched local diffusivities D_i = d_i M / (2n).
    pub local_diffusivities: Vec<f64>,
    /// Common step shared by the local run and the whole sweep.
    pub dt: f64,
    pub local_final: Field,
    pub nonlocal_finals: Vec<(u32, Field)>,
    pub notes: Vec<String>,
}

fn shape_with_eps(psi: &KernelShape, j: u32, schedule: EpsSchedule) -> (KernelShape, Option<f64>) {
    match (schedule, psi) {
        (EpsSchedule::ShrinkInverseJ, KernelShape::Gaussian { epsilon }) => {
            let eps = epsilon / j as f64;
            (KernelShape::Gaussian { epsilon: eps }, Some(eps))
        }
        (EpsSchedule::ShrinkInverseJ, KernelShape::TruncatedGaussian { epsilon, cutoff }) => {
            let eps = epsilon / j as f64;
            (
                KernelShape::TruncatedGaussian {
                    epsilon: eps,
                    cutoff: *cutoff,
                },
                Some(eps),
            )
        }
        (_, KernelShape::Gaussian { epsilon })
        | (_, KernelShape::TruncatedGaussian { epsilon, .. }) => (psi.clone(), Some(*epsilon)),
        _ => (psi.clone(), None),
    }
}

fn l2_difference(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    grid.cell_weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(c, (x, y))| c * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn expect_completed(traj: &Trajectory, label: &str) -> Result<()> {
    match &traj.termination {
        Termination::Completed => Ok(()),
        other => Err(CoreError::invalid(
            "difflimit",
            format!("{label} run terminated early: {other:?}"),
        )),
    }
}

/// Run the rescaled-kernel sweep against the matched local Neumann system.
///
/// For every j the kernel is the unit-mass base profile scaled by j; the
/// local reference uses D_i = d_i M / (2n) with M the base profile's second
/// moment. All runs share one step, the minimum of the per-run stability
/// limits, so row differences reflect the operators rather than the time
/// discretization.
pub fn run_difflimit_study(base: &DifflimitSpec, config: &DifflimitConfig) -> Result<DifflimitStudy> {
    if config.j_list.is_empty() {
        return Err(CoreError::invalid("j_list", "at least one scale index"));
    }
    if config.j_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CoreError::invalid("j_list", "must be strictly ascending"));
    }
    let m = base.reaction.num_components();
    if base.d.len() != m {
        return Err(CoreError::invalid(
            "d",
            format!("{} rates for {m} components", base.d.len()),
        ));
    }
    let dim = base.grid.dim();
    let mut notes = Vec::new();

    let base_spec = KernelSpec::new(config.psi.clone(), dim, None, Normalization::UnitMass)?;
    let second_moment = base_spec.second_moment()?;
    let local_d: Vec<f64> = base
        .d
        .iter()
        .map(|&d| effective_diffusivity_from_moment(second_moment, d, dim))
        .collect();
    if config.eps_schedule == EpsSchedule::ShrinkInverseJ {
        notes.push(
            "eps shrink schedule active: local reference keeps the base profile's moment".into(),
        );
    }

    // Assemble all operators first so the common step can be chosen.
    let mut ops = Vec::new();
    for &j in &config.j_list {
        let (shape, eps) = shape_with_eps(&config.psi, j, config.eps_schedule);
        let spec = KernelSpec::new(shape, dim, Some(j), Normalization::UnitMass)?;
        let op = Arc::new(assemble_operator_with(
            base.grid.clone(),
            spec,
            &config.assembly,
        )?);
        ops.push((j, eps, op));
    }

    let local_modes: Vec<DiffusionMode> = local_d
        .iter()
        .map(|&d| DiffusionMode::Local { d })
        .collect();
    let local_system = SystemSpec::new(
        base.grid.clone(),
        base.reaction.clone(),
        local_modes,
        base.initial.clone(),
        base.t_end,
    )?;
    let mut dt = crate::integrate::stable_dt(&local_system, config.solver.cfl_fraction);
    for (_, _, op) in &ops {
        let modes: Vec<DiffusionMode> = base
            .d
            .iter()
            .map(|&d| DiffusionMode::Nonlocal {
                d,
                operator: op.clone(),
            })
            .collect();
        let sys = SystemSpec::new(
            base.grid.clone(),
            base.reaction.clone(),
            modes,
            base.initial.clone(),
            base.t_end,
        )?;
        dt = dt.min(crate::integrate::stable_dt(&sys, config.solver.cfl_fraction));
    }
    if let Some(requested) = config.solver.dt {
        if requested < dt {
            dt = requested;
        } else if requested > dt {
            notes.push(format!(
                "requested dt {requested:e} shrunk to the sweep stability limit {dt:e}"
            ));
        }
    }
    let mut solver = config.solver.clone();
    solver.dt = Some(dt);

    let local_traj = run(&local_system, &solver)?;
    expect_completed(&local_traj, "local reference")?;
    let local_final = local_traj.final_field.clone();

    let mut rows = Vec::new();
    let mut finals = Vec::new();
    for (j, eps, op) in ops {
        let modes: Vec<DiffusionMode> = base
            .d
            .iter()
            .map(|&d| DiffusionMode::Nonlocal {
                d,
                operator: op.clone(),
            })
            .collect();
        let sys = SystemSpec::new(
            base.grid.clone(),
            base.reaction.clone(),
            modes,
            base.initial.clone(),
            base.t_end,
        )?;
        let traj = run(&sys, &solver)?;
        expect_completed(&traj, &format!("j = {j}"))?;
        let u = &traj.final_field;
        let mut l2 = Vec::with_capacity(m);
        let mut linf = Vec::with_capacity(m);
        let mut node_diffs = Vec::with_capacity(m);
        for c in 0..m {
            let a = u.component(c);
            let b = local_final.component(c);
            l2.push(l2_difference(&base.grid, a, b));
            linf.push(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0f64, f64::max),
            );
            let mut first5 = [0.0; 5];
            for (k, slot) in first5.iter_mut().enumerate() {
                *slot = (a[k] - b[k]).abs();
            }
            node_diffs.push(first5);
        }
        rows.push(DifflimitRow {
            j,
            eps,
            l2_diff: l2,
            linf_diff: linf,
            node_diffs,
        });
        finals.push((j, traj.final_field));
    }

    Ok(DifflimitStudy {
        table: ConvergenceTable { rows },
        second_moment,
        local_diffusivities: local_d,
        dt,
        local_final,
        nonlocal_finals: finals,
        notes,
    })
}

/// Norm used when fitting the convergence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableNorm {
    L2,
    LInf,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceOrder {
    /// Decay exponent of the differences in j (positive when shrinking);
    /// infinity when every difference vanishes.
    pub order: f64,
    pub fit_residual: f64,
}

/// Least-squares slope of log(difference) against log(j).
pub fn fit_convergence_order(table: &ConvergenceTable, norm: TableNorm) -> Result<ConvergenceOrder> {
    if table.rows.len() < 3 {
        return Err(CoreError::invalid("table", "need at least 3 rows to fit"));
    }
    let diffs: Vec<f64> = table
        .rows
        .iter()
        .map(|r| match norm {
            TableNorm::L2 => r.l2_combined(),
            TableNorm::LInf => r.linf_combined(),
        })
        .collect();
    if diffs.contains(&0.0) {
        return Ok(ConvergenceOrder {
            order: f64::INFINITY,
            fit_residual: 0.0,
        });
    }
    let xs: Vec<f64> = table.rows.iter().map(|r| (r.j as f64).ln()).collect();
    let ys: Vec<f64> = diffs.iter().map(|d| d.ln()).collect();
    let (slope, _, res) = linear_fit(&xs, &ys);
    Ok(ConvergenceOrder {
        order: -slope,
        fit_residual: res,
    })
}

/// Discrete H1 seminorm of one component: quadrature of the squared forward
/// differences along each axis.
pub fn h1_seminorm(grid: &Grid, u: &[f64]) -> f64 {
    let counts = grid.counts();
    let h = grid.spacing()[0];
    let mut total = 0.0;
    match grid.dim() {
        1 => {
            for i in 0..counts[0] - 1 {
                let g = (u[i + 1] - u[i]) / h;
                total += g * g * h;
            }
        }
        _ => {
            let (nx, ny) = (counts[0], counts[1]);
            let k = grid.spacing()[1];
            for iy in 0..ny {
                for ix in 0..nx - 1 {
                    let p = iy * nx + ix;
                    let g = (u[p + 1] - u[p]) / h;
                    total += g * g * h * k;
                }
            }
            for iy in 0..ny - 1 {
                for ix in 0..nx {
                    let p = iy * nx + ix;
                    let g = (u[p + nx] - u[p]) / k;
                    total += g * g * h * k;
                }
            }
        }
    }
    total.sqrt()
}

/// Largest centered second difference of one component over interior nodes.
pub fn max_second_difference(grid: &Grid, u: &[f64]) -> f64 {
    let counts = grid.counts();
    let h = grid.spacing()[0];
    let mut worst = 0.0f64;
    match grid.dim() {
        1 => {
            for i in 1..counts[0] - 1 {
                worst = worst.max((u[i + 1] - 2.0 * u[i] + u[i - 1]).abs() / (h * h));
            }
        }
        _ => {
            let (nx, ny) = (counts[0], counts[1]);
            let k = grid.spacing()[1];
            for iy in 0..ny {
                for ix in 1..nx - 1 {
                    let p = iy * nx + ix;
                    worst = worst.max((u[p + 1] - 2.0 * u[p] + u[p - 1]).abs() / (h * h));
                }
            }
            for iy in 1..ny - 1 {
                for ix in 0..nx {
                    let p = iy * nx + ix;
                    worst = worst.max((u[p + nx] - 2.0 * u[p] + u[p - nx]).abs() / (k * k));
                }
            }
        }
    }
    worst
}

/// Smoothness proxies of both runs at one recorded time.
#[derive(Debug, Clone)]
pub struct SmoothnessSample {
    pub t: f64,
    pub h1_a: Vec<f64>,
    pub h1_b: Vec<f64>,
    pub max_second_a: Vec<f64>,
    pub max_second_b: Vec<f64>,
}

#[derive(Debug)]
pub struct ComparisonReport {
    pub series: Vec<SmoothnessSample>,
    pub final_a: Field,
    pub final_b: Field,
    pub termination_a: Termination,
    pub termination_b: Termination,
    pub dt: f64,
}

impl ComparisonReport {
    /// H1 seminorms of a component at the final recorded time.
    pub fn final_h1(&self, component: usize) -> (f64, f64) {
        let last = self.series.last().expect("at least the initial sample");
        (last.h1_a[component], last.h1_b[component])
    }
}

/// Run two systems with matched grids, reactions and initial data under a
/// common step, recording smoothness proxies at every snapshot.
pub fn run_side_by_side(
    spec_a: &SystemSpec,
    spec_b: &SystemSpec,
    config: &SolverConfig,
) -> Result<ComparisonReport> {
    let ga = &spec_a.grid;
    let gb = &spec_b.grid;
    if ga.dim() != gb.dim() || ga.counts() != gb.counts() || ga.extents() != gb.extents() {
        return Err(CoreError::GridMismatch("side-by-side runs need matched grids".into()));
    }
    if spec_a.num_components() != spec_b.num_components() {
        return Err(CoreError::invalid("spec_b", "component count mismatch"));
    }
    if spec_a.reaction.name() != spec_b.reaction.name() {
        return Err(CoreError::invalid("spec_b", "reaction mismatch"));
    }
    for c in 0..spec_a.num_components() {
        if spec_a.initial.component(c) != spec_b.initial.component(c) {
            return Err(CoreError::invalid("spec_b", "initial data mismatch"));
        }
    }
    let dt = config.dt.unwrap_or_else(|| {
        crate::integrate::stable_dt(spec_a, config.cfl_fraction)
            .min(crate::integrate::stable_dt(spec_b, config.cfl_fraction))
    });
    let mut solver = config.clone();
    solver.dt = Some(dt);
    let traj_a = run(spec_a, &solver)?;
    let traj_b = run(spec_b, &solver)?;

    let m = spec_a.num_components();
    let samples = traj_a.snapshots.len().min(traj_b.snapshots.len());
    let mut series = Vec::with_capacity(samples);
    for s in 0..samples {
        let sa = &traj_a.snapshots[s];
        let sb = &traj_b.snapshots[s];
        let mut sample = SmoothnessSample {
            t: sa.t,
            h1_a: Vec::with_capacity(m),
            h1_b: Vec::with_capacity(m),
            max_second_a: Vec::with_capacity(m),
            max_second_b: Vec::with_capacity(m),
        };
        for c in 0..m {
            sample.h1_a.push(h1_seminorm(ga, sa.field.component(c)));
            sample.h1_b.push(h1_seminorm(gb, sb.field.component(c)));
            sample
                .max_second_a
                .push(max_second_difference(ga, sa.field.component(c)));
            sample
                .max_second_b
                .push(max_second_difference(gb, sb.field.component(c)));
        }
        series.push(sample);
    }

    Ok(ComparisonReport {
        series,
        final_a: traj_a.final_field,
        final_b: traj_b.final_field,
        termination_a: traj_a.termination,
        termination_b: traj_b.termination,
        dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::Scheme;
    use crate::kernels::assemble_operator;

    fn sine_bump_initial(grid: Arc<Grid>) -> Field {
        Field::from_fn(grid, 1, |_, x| {
            1.0 + 0.5 * (std::f64::consts::PI * x[0] / 2.0).cos()
        })
    }

    #[test]
    fn fit_order_on_synthetic_power_law() {
        let mk_table = |f: &dyn Fn(u32) -> f64| ConvergenceTable {
            rows: [1u32, 2, 4, 8]
                .iter()
                .map(|&j| DifflimitRow {
                    j,
                    eps: None,
                    l2_diff: vec![f(j)],
                    linf_diff: vec![f(j)],
                    node_diffs: vec![[0.0; 5]],
                })
                .collect(),
        };
        let t = mk_table(&|j| (j as f64).powi(-2));
        let o = fit_convergence_order(&t, TableNorm::L2).unwrap();
        assert!((o.order - 2.0).abs() <= 1e-9, "order {}", o.order);

        let t = mk_table(&|_| 0.37);
        let o = fit_convergence_order(&t, TableNorm::L2).unwrap();
        assert!(o.order.abs() <= 1e-9);

        let t = mk_table(&|_| 0.0);
        let o = fit_convergence_order(&t, TableNorm::LInf).unwrap();
        assert!(o.order.is_infinite());
    }

    #[test]
    fn zero_reaction_constant_data_gives_zero_differences() {
        let grid = Arc::new(Grid::new(1, &[2.0], &[61]).unwrap());
        let base = DifflimitSpec {
            grid: grid.clone(),
            reaction: ReactionSystem::zero(1),
            d: vec![0.1],
            initial: Field::constant(grid, &[0.7]),
            t_end: 0.5,
        };
        let config = DifflimitConfig {
            psi: KernelShape::Bump,
            j_list: vec![1, 2, 4],
            eps_schedule: EpsSchedule::Fixed,
            solver: SolverConfig::default(),
            assembly: AssemblyOptions::default(),
        };
        let study = run_difflimit_study(&base, &config).unwrap();
        for row in &study.table.rows {
            assert!(
                row.l2_combined() <= 1e-12,
                "j={}: {}",
                row.j,
                row.l2_combined()
            );
        }
    }

    #[test]
    fn pure_diffusion_limit_consistency() {
        // Smooth data, no reaction: larger j tracks the local system better.
        let grid = Arc::new(Grid::new(1, &[2.0], &[101]).unwrap());
        let base = DifflimitSpec {
            grid: grid.clone(),
            reaction: ReactionSystem::zero(1),
            d: vec![0.5],
            initial: sine_bump_initial(grid),
            t_end: 0.5,
        };
        let config = DifflimitConfig {
            psi: KernelShape::Bump,
            j_list: vec![2, 8],
            eps_schedule: EpsSchedule::Fixed,
            solver: SolverConfig::default(),
            assembly: AssemblyOptions::default(),
        };
        let study = run_difflimit_study(&base, &config).unwrap();
        let d_small = study.table.rows[0].l2_combined();
        let d_large = study.table.rows[1].l2_combined();
        assert!(
            d_large < d_small,
            "difference did not shrink: j=2 gives {d_small}, j=8 gives {d_large}"
        );
    }

    #[test]
    fn eps_shrink_schedule_narrows_profile_per_row() {
        let grid = Arc::new(Grid::new(1, &[2.0], &[81]).unwrap());
        let base = DifflimitSpec {
            grid: grid.clone(),
            reaction: ReactionSystem::zero(1),
            d: vec![0.2],
            initial: sine_bump_initial(grid),
            t_end: 0.2,
        };
        let config = DifflimitConfig {
            psi: KernelShape::TruncatedGaussian {
                epsilon: 0.8,
                cutoff: 1.0,
            },
            j_list: vec![1, 2, 4],
            eps_schedule: EpsSchedule::ShrinkInverseJ,
            solver: SolverConfig::default(),
            assembly: AssemblyOptions::default(),
        };
        let study = run_difflimit_study(&base, &config).unwrap();
        let eps: Vec<f64> = study.table.rows.iter().map(|r| r.eps.unwrap()).collect();
        assert_eq!(eps, vec![0.8, 0.4, 0.2]);
        // The local reference is pinned to the base profile's moment.
        assert!(study.notes.iter().any(|n| n.contains("base profile")));
        let d_eff = effective_diffusivity_from_moment(study.second_moment, 0.2, 1);
        assert_eq!(study.local_diffusivities, vec![d_eff]);
    }

    #[test]
    fn local_modal_decay_matches_effective_diffusivity() {
        // Uniform bump in 1D has M = 1/3; with d = 0.6 the matched local
        // rate is D = 0.1. The first Neumann mode cos(pi x / L) then decays
        // like exp(-D (pi/L)^2 t).
        let grid = Arc::new(Grid::new(1, &[2.0], &[201]).unwrap());
        let spec = KernelSpec::new(KernelShape::UniformBump, 1, None, Normalization::UnitMass)
            .unwrap();
        let m = spec.second_moment().unwrap();
        let d_eff = effective_diffusivity_from_moment(m, 0.6, 1);
        assert!((d_eff - 0.1).abs() <= 1e-8);

        let sys = SystemSpec::new(
            grid.clone(),
            ReactionSystem::zero(1),
            vec![DiffusionMode::Local { d: d_eff }],
            sine_bump_initial(grid.clone()),
            1.0,
        )
        .unwrap();
        let traj = run(&sys, &SolverConfig::default()).unwrap();
        assert!(traj.termination.is_completed());
        let mode = |f: &Field| -> f64 {
            let c = grid.cell_weights();
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..grid.num_nodes() {
                let phi = (std::f64::consts::PI * grid.node(i)[0] / 2.0).cos();
                num += c[i] * f.component(0)[i] * phi;
                den += c[i] * phi * phi;
            }
            num / den
        };
        let a0 = mode(&spec_field(&sys));
        let a1 = mode(&traj.final_field);
        let rate = (a0 / a1).ln() / 1.0;
        let expect = d_eff * (std::f64::consts::PI / 2.0).powi(2);
        assert!(
            (rate - expect).abs() <= 0.05 * expect,
            "rate {rate} vs {expect}"
        );
    }

    fn spec_field(sys: &SystemSpec) -> Field {
        sys.initial.clone()
    }

    #[test]
    fn side_by_side_identical_specs_bitwise_equal() {
        let grid = Arc::new(Grid::new(1, &[2.0], &[60]).unwrap());
        let op = {
            let spec = KernelSpec::new(
                KernelShape::Gaussian { epsilon: 1.0 },
                1,
                None,
                Normalization::Raw,
            )
            .unwrap();
            Arc::new(assemble_operator(grid.clone(), spec).unwrap())
        };
        let initial = Field::from_fn(grid.clone(), 2, |_, x| {
            0.5 * (-(x[0] - 1.0) * (x[0] - 1.0) / 0.1).exp()
        });
        let mk = || {
            SystemSpec::new(
                grid.clone(),
                ReactionSystem::mol_demo(),
                vec![
                    DiffusionMode::Nonlocal {
                        d: 0.1,
                        operator: op.clone(),
                    },
                    DiffusionMode::Nonlocal {
                        d: 0.01,
                        operator: op.clone(),
                    },
                ],
                initial.clone(),
                0.5,
            )
            .unwrap()
        };
        let config = SolverConfig {
            dt: Some(0.01),
            scheme: Scheme::ImplicitBdf2,
            ..Default::default()
        };
        let report = run_side_by_side(&mk(), &mk(), &config).unwrap();
        for c in 0..2 {
            for (a, b) in report
                .final_a
                .component(c)
                .iter()
                .zip(report.final_b.component(c))
            {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn diffusion_only_smoothness_proxies_non_increasing() {
        let grid = Arc::new(Grid::new(1, &[2.0], &[81]).unwrap());
        let op = {
            let spec =
                KernelSpec::new(KernelShape::Bump, 1, Some(4), Normalization::UnitMass).unwrap();
            Arc::new(assemble_operator(grid.clone(), spec).unwrap())
        };
        let initial = Field::from_fn(grid.clone(), 1, |_, x| {
            (-(x[0] - 1.0) * (x[0] - 1.0) / 0.05).exp()
        });
        let nonlocal = SystemSpec::new(
            grid.clone(),
            ReactionSystem::zero(1),
            vec![DiffusionMode::Nonlocal {
                d: 0.2,
                operator: op,
            }],
            initial.clone(),
            1.0,
        )
        .unwrap();
        let local = SystemSpec::new(
            grid.clone(),
            ReactionSystem::zero(1),
            vec![DiffusionMode::Local { d: 0.05 }],
            initial,
            1.0,
        )
        .unwrap();
        let config = SolverConfig {
            snapshot_stride: 50,
            ..Default::default()
        };
        let report = run_side_by_side(&nonlocal, &local, &config).unwrap();
        assert!(report.termination_a.is_completed());
        assert!(report.termination_b.is_completed());
        let tol = 1e-9 * report.series[0].h1_a[0];
        for w in report.series.windows(2) {
            assert!(w[1].h1_a[0] <= w[0].h1_a[0] + tol);
            assert!(w[1].h1_b[0] <= w[0].h1_b[0] + tol);
        }
    }

    #[test]
    fn side_by_side_rejects_mismatched_grids() {
        let g1 = Arc::new(Grid::new(1, &[2.0], &[60]).unwrap());
        let g2 = Arc::new(Grid::new(1, &[2.0], &[70]).unwrap());
        let mk = |g: &Arc<Grid>| {
            SystemSpec::new(
                g.clone(),
                ReactionSystem::zero(1),
                vec![DiffusionMode::Local { d: 0.1 }],
                Field::constant(g.clone(), &[1.0]),
                1.0,
            )
            .unwrap()
        };
        let r = run_side_by_side(&mk(&g1), &mk(&g2), &SolverConfig::default());
        assert!(r.is_err());
    }
}
