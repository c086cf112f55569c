//! Run-configuration schema, validation and construction of the engine
//! objects it describes.
//!
//! One TOML document drives a whole run. Unknown keys are rejected, and the
//! report echoes every effective parameter, marking the ones that came from
//! defaults rather than the file.

use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use nrd_core::experiments::{DifflimitConfig, DifflimitSpec, EpsSchedule};
use nrd_core::grid::{read_snapshot_csv, Field, Grid};
use nrd_core::integrate::{DiagnosticsConfig, Scheme, SolverConfig, SystemSpec};
use nrd_core::kernels::{
    assemble_operator_with, AssemblyOptions, KernelShape, KernelSpec, Normalization,
    QuadratureRule, StorageChoice,
};
use nrd_core::operators::DiffusionMode;
use nrd_core::reactions::{
    CheckerSettings, Monomial, PeriodicDamping, ReactionMetadata, ReactionSystem, RumorParams,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub kernel: Option<KernelSection>,
    pub reaction: ReactionSection,
    pub modes: ModesSection,
    pub initial: InitialSection,
    pub solver: SolverSection,
    pub experiment: Option<ExperimentSection>,
    pub audit: Option<AuditSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub shape: String,
    pub epsilon: Option<f64>,
    pub cutoff: Option<f64>,
    pub scale_index: Option<u32>,
    pub normalization: Option<String>,
    pub quadrature: Option<String>,
    pub storage: Option<String>,
    pub node_budget: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    pub name: String,
    // gray_scott
    pub a: Option<f64>,
    pub b: Option<f64>,
    // reversible_chem
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    // rumor
    pub k_bar: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    // zero / custom
    pub m: Option<usize>,
    pub monomials: Option<Vec<MonomialSection>>,
    pub metadata: Option<MetadataSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialSection {
    pub component: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataSection {
    pub qbal_weights: Option<Vec<f64>>,
    pub qbal_balanced: Option<bool>,
    pub intsum_matrix: Option<Vec<Vec<f64>>>,
    pub intsum_bound: Option<f64>,
    pub periodic_damping: Option<DampingSection>,
    pub poly_degree: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingSection {
    pub k: f64,
    pub alpha: f64,
    pub tau: f64,
    pub period: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    pub kinds: Vec<String>,
    pub diffusivity: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub profile: String,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
    pub amplitude: Option<Vec<f64>>,
    pub value: Option<Vec<f64>>,
    pub path: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub scheme: Option<String>,
    pub t_end: f64,
    pub dt: Option<f64>,
    pub cfl_fraction: Option<f64>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub negativity_tol: Option<f64>,
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub j_list: Vec<u32>,
    pub eps_shrink: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub enabled: Option<bool>,
    pub samples: Option<usize>,
    pub box_max: Option<f64>,
    pub seed: Option<u64>,
    pub t_samples: Option<usize>,
    pub u_samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub snapshots: Option<bool>,
    pub lp_orders: Option<Vec<u32>>,
    pub dissipation_stride: Option<usize>,
    pub mass_weights: Option<Vec<f64>>,
}

/// Parsed document plus the raw value tree, kept to distinguish values the
/// file set from values defaults supplied.
pub struct LoadedConfig {
    pub config: RunConfig,
    raw: toml::Value,
    pub path: String,
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

/// Apply one `--override key=value` to the value tree: dotted path, value
/// parsed as TOML.
fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{spec}` is not of the form key=value")))?;
    let parsed: toml::Value = value
        .parse::<toml::Value>()
        .or_else(|_| format!("v = {value}").parse::<toml::Value>().map(|t| t["v"].clone()))
        .unwrap_or_else(|_| toml::Value::String(value.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override path `{path}` crosses a non-table")))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    Ok(())
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut raw: toml::Value = text
        .parse()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut raw, o)?;
    }
    let config: RunConfig = raw
        .clone()
        .try_into()
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    Ok(LoadedConfig {
        config,
        raw,
        path: path.display().to_string(),
    })
}

impl LoadedConfig {
    /// Whether a dotted key was present in the file (or an override), as
    /// opposed to being filled by a default.
    pub fn key_was_set(&self, dotted: &str) -> bool {
        let mut node = &self.raw;
        for part in dotted.split('.') {
            match node.get(part) {
                Some(next) => node = next,
                None => return false,
            }
        }
        true
    }
}

/// Everything a simulate-style run needs, plus the echo list for the report.
pub struct BuiltSystem {
    pub system: SystemSpec,
    pub solver: SolverConfig,
    pub kernel: Option<KernelSpec>,
    pub write_snapshots: bool,
    pub audit: AuditSettings,
    /// (key, value, was_defaulted) echoed in the report header.
    pub echo: Vec<(String, String, bool)>,
}

#[derive(Debug, Clone)]
pub struct AuditSettings {
    pub enabled: bool,
    pub checker: CheckerSettings,
    pub t_samples: usize,
    pub u_samples: usize,
}

pub fn build_grid(cfg: &GridSection) -> Result<Arc<Grid>, CliError> {
    Grid::new(cfg.dim, &cfg.extents, &cfg.counts)
        .map(Arc::new)
        .map_err(|e| config_err(format!("grid: {e}")))
}

pub fn build_kernel(cfg: &KernelSection, dim: usize) -> Result<KernelSpec, CliError> {
    let shape = match cfg.shape.as_str() {
        "gaussian" => KernelShape::Gaussian {
            epsilon: cfg
                .epsilon
                .ok_or_else(|| config_err("kernel.epsilon required for gaussian"))?,
        },
        "bump" => KernelShape::Bump,
        "truncated_gaussian" => KernelShape::TruncatedGaussian {
            epsilon: cfg
                .epsilon
                .ok_or_else(|| config_err("kernel.epsilon required for truncated_gaussian"))?,
            cutoff: cfg
                .cutoff
                .ok_or_else(|| config_err("kernel.cutoff required for truncated_gaussian"))?,
        },
        "uniform_bump" => KernelShape::UniformBump,
        other => {
            return Err(config_err(format!(
                "kernel.shape `{other}` is not one of gaussian|bump|truncated_gaussian|uniform_bump"
            )))
        }
    };
    let normalization = match cfg.normalization.as_deref().unwrap_or("raw") {
        "raw" => Normalization::Raw,
        "unit_mass" => Normalization::UnitMass,
        other => {
            return Err(config_err(format!(
                "kernel.normalization `{other}` is not raw|unit_mass"
            )))
        }
    };
    KernelSpec::new(shape, dim, cfg.scale_index, normalization)
        .map_err(|e| config_err(format!("kernel: {e}")))
}

pub fn assembly_options(cfg: &KernelSection) -> Result<AssemblyOptions, CliError> {
    let storage = match cfg.storage.as_deref().unwrap_or("auto") {
        "auto" => StorageChoice::Auto,
        "dense" => StorageChoice::Dense,
        "matrix_free" => StorageChoice::MatrixFree,
        other => {
            return Err(config_err(format!(
                "kernel.storage `{other}` is not auto|dense|matrix_free"
            )))
        }
    };
    let quadrature = match cfg.quadrature.as_deref().unwrap_or("cell_measure") {
        "cell_measure" => QuadratureRule::CellMeasure,
        "distance_factor" => QuadratureRule::DistanceFactor,
        other => {
            return Err(config_err(format!(
                "kernel.quadrature `{other}` is not cell_measure|distance_factor"
            )))
        }
    };
    Ok(AssemblyOptions {
        storage,
        node_budget: cfg.node_budget.unwrap_or(20_000),
        quadrature,
    })
}

pub fn build_reaction(cfg: &ReactionSection) -> Result<ReactionSystem, CliError> {
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| config_err(format!("reaction.{key} required for {}", cfg.name)))
    };
    match cfg.name.as_str() {
        "gray_scott" => Ok(ReactionSystem::gray_scott(
            need(cfg.a, "a")?,
            need(cfg.b, "b")?,
        )),
        "reversible_chem" => Ok(ReactionSystem::reversible_chem(
            need(cfg.k1, "k1")?,
            need(cfg.k2, "k2")?,
        )),
        "rumor" => {
            let d = RumorParams::default();
            Ok(ReactionSystem::rumor(RumorParams {
                k_bar: cfg.k_bar.unwrap_or(d.k_bar),
                gamma: cfg.gamma.unwrap_or(d.gamma),
                alpha: cfg.alpha.unwrap_or(d.alpha),
                lambda: cfg.lambda.unwrap_or(d.lambda),
                mu: cfg.mu.unwrap_or(d.mu),
                theta: cfg.theta.unwrap_or(d.theta),
                phi: cfg.phi.unwrap_or(d.phi),
                eta1: cfg.eta1.unwrap_or(d.eta1),
                eta2: cfg.eta2.unwrap_or(d.eta2),
            }))
        }
        "mol_demo" => Ok(ReactionSystem::mol_demo()),
        "zero" => {
            let m = cfg
                .m
                .ok_or_else(|| config_err("reaction.m required for zero"))?;
            Ok(ReactionSystem::zero(m))
        }
        "custom" => {
            let m = cfg
                .m
                .ok_or_else(|| config_err("reaction.m required for custom"))?;
            let monomials = cfg
                .monomials
                .as_ref()
                .ok_or_else(|| config_err("reaction.monomials required for custom"))?
                .iter()
                .map(|mono| Monomial {
                    component: mono.component,
                    coeff: mono.coeff,
                    exponents: mono.exponents.clone(),
                })
                .collect();
            let metadata = match &cfg.metadata {
                None => ReactionMetadata::default(),
                Some(ms) => ReactionMetadata {
                    qbal_weights: ms.qbal_weights.clone(),
                    qbal_balanced: ms.qbal_balanced.unwrap_or(false),
                    intsum_matrix: ms.intsum_matrix.clone(),
                    intsum_bound: ms.intsum_bound,
                    periodic_damping: ms.periodic_damping.as_ref().map(|ds| PeriodicDamping {
                        k: ds.k,
                        alpha: ds.alpha,
                        tau: ds.tau,
                        period: ds.period,
                    }),
                    poly_degree: ms.poly_degree,
                },
            };
            ReactionSystem::polynomial("custom", m, monomials, metadata)
                .map_err(|e| config_err(format!("reaction: {e}")))
        }
        other => Err(config_err(format!(
            "reaction.name `{other}` is not gray_scott|reversible_chem|rumor|mol_demo|zero|custom"
        ))),
    }
}

pub fn build_initial(
    cfg: &InitialSection,
    grid: &Arc<Grid>,
    m: usize,
) -> Result<Field, CliError> {
    match cfg.profile.as_str() {
        "gaussian_bump" => {
            let center: Vec<f64> = match &cfg.center {
                Some(c) => {
                    if c.len() != grid.dim() {
                        return Err(config_err(format!(
                            "initial.center has {} entries for a {}D grid",
                            c.len(),
                            grid.dim()
                        )));
                    }
                    c.clone()
                }
                None => grid.extents().iter().map(|e| 0.5 * e).collect(),
            };
            let width = cfg.width.unwrap_or(0.1);
            if !(width > 0.0) {
                return Err(config_err("initial.width must be positive"));
            }
            let amplitude = match &cfg.amplitude {
                Some(a) => {
                    if a.len() != m {
                        return Err(config_err(format!(
                            "initial.amplitude has {} entries for {m} components",
                            a.len()
                        )));
                    }
                    a.clone()
                }
                None => vec![1.0; m],
            };
            Ok(Field::from_fn(grid.clone(), m, move |c, x| {
                let r2: f64 = x
                    .iter()
                    .zip(&center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                amplitude[c] * (-r2 / width).exp()
            }))
        }
        "constant" => {
            let value = cfg
                .value
                .as_ref()
                .ok_or_else(|| config_err("initial.value required for constant profile"))?;
            if value.len() != m {
                return Err(config_err(format!(
                    "initial.value has {} entries for {m} components",
                    value.len()
                )));
            }
            Ok(Field::constant(grid.clone(), value))
        }
        "csv" => {
            let path = cfg
                .path
                .as_ref()
                .ok_or_else(|| config_err("initial.path required for csv profile"))?;
            let file = std::fs::File::open(path)
                .map_err(|e| config_err(format!("initial.path {path}: {e}")))?;
            read_snapshot_csv(std::io::BufReader::new(file), grid.clone(), m)
                .map_err(|e| config_err(format!("initial csv: {e}")))
        }
        other => Err(config_err(format!(
            "initial.profile `{other}` is not gaussian_bump|constant|csv"
        ))),
    }
}

pub fn build_solver(
    solver: &SolverSection,
    output: Option<&OutputSection>,
) -> Result<SolverConfig, CliError> {
    let scheme = match solver.scheme.as_deref().unwrap_or("explicit_euler") {
        "explicit_euler" => Scheme::ExplicitEuler,
        "implicit_bdf2" => Scheme::ImplicitBdf2,
        other => {
            return Err(config_err(format!(
                "solver.scheme `{other}` is not explicit_euler|implicit_bdf2"
            )))
        }
    };
    Ok(SolverConfig {
        scheme,
        dt: solver.dt,
        cfl_fraction: solver.cfl_fraction.unwrap_or(0.9),
        newton_tol: solver.newton_tol.unwrap_or(1e-8),
        newton_max_iter: solver.newton_max_iter.unwrap_or(25),
        negativity_tol: solver.negativity_tol.unwrap_or(1e-10),
        snapshot_stride: solver.snapshot_stride.unwrap_or(100),
        diagnostics: DiagnosticsConfig {
            lp_orders: output
                .and_then(|o| o.lp_orders.clone())
                .unwrap_or_else(|| vec![2]),
            mass_weights: output.and_then(|o| o.mass_weights.clone()),
            dissipation_stride: output.and_then(|o| o.dissipation_stride).unwrap_or(0),
        },
    })
}

fn build_audit(cfg: Option<&AuditSection>) -> AuditSettings {
    let defaults = CheckerSettings::default();
    match cfg {
        None => AuditSettings {
            enabled: false,
            checker: defaults,
            t_samples: 16,
            u_samples: 400,
        },
        Some(a) => AuditSettings {
            enabled: a.enabled.unwrap_or(false),
            checker: CheckerSettings {
                samples: a.samples.unwrap_or(defaults.samples),
                box_max: a.box_max.unwrap_or(defaults.box_max),
                seed: a.seed.unwrap_or(defaults.seed),
            },
            t_samples: a.t_samples.unwrap_or(16),
            u_samples: a.u_samples.unwrap_or(400),
        },
    }
}

fn fmt_f64_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", items.join(", "))
}

/// Build a full simulate-style system from a loaded config.
pub fn build_system(loaded: &LoadedConfig) -> Result<BuiltSystem, CliError> {
    let cfg = &loaded.config;
    let grid = build_grid(&cfg.grid)?;
    let reaction = build_reaction(&cfg.reaction)?;
    let m = reaction.num_components();

    if cfg.modes.kinds.len() != m {
        return Err(config_err(format!(
            "modes.kinds has {} entries for {m} components",
            cfg.modes.kinds.len()
        )));
    }
    if cfg.modes.diffusivity.len() != m {
        return Err(config_err(format!(
            "modes.diffusivity has {} entries for {m} components",
            cfg.modes.diffusivity.len()
        )));
    }
    for (i, &d) in cfg.modes.diffusivity.iter().enumerate() {
        if !(d > 0.0) || !d.is_finite() {
            return Err(config_err(format!(
                "modes.diffusivity[{i}] must be positive, got {d}"
            )));
        }
    }

    let needs_kernel = cfg.modes.kinds.iter().any(|k| k == "nonlocal");
    let (kernel, operator) = if needs_kernel {
        let ks = cfg
            .kernel
            .as_ref()
            .ok_or_else(|| config_err("kernel section required for nonlocal modes"))?;
        let spec = build_kernel(ks, grid.dim())?;
        let options = assembly_options(ks)?;
        let op = assemble_operator_with(grid.clone(), spec.clone(), &options)
            .map_err(|e| config_err(format!("kernel assembly: {e}")))?;
        (Some(spec), Some(Arc::new(op)))
    } else {
        (None, None)
    };

    let mut modes = Vec::with_capacity(m);
    for (i, kind) in cfg.modes.kinds.iter().enumerate() {
        let d = cfg.modes.diffusivity[i];
        match kind.as_str() {
            "nonlocal" => modes.push(DiffusionMode::Nonlocal {
                d,
                operator: operator.as_ref().unwrap().clone(),
            }),
            "local" => modes.push(DiffusionMode::Local { d }),
            other => {
                return Err(config_err(format!(
                    "modes.kinds[{i}] `{other}` is not nonlocal|local"
                )))
            }
        }
    }

    let initial = build_initial(&cfg.initial, &grid, m)?;
    let system = SystemSpec::new(grid, reaction, modes, initial, cfg.solver.t_end)
        .map_err(|e| config_err(format!("system: {e}")))?;
    let solver = build_solver(&cfg.solver, cfg.output.as_ref())?;
    let audit = build_audit(cfg.audit.as_ref());
    let write_snapshots = cfg
        .output
        .as_ref()
        .and_then(|o| o.snapshots)
        .unwrap_or(true);

    let mut echo = Vec::new();
    let mut put = |key: &str, value: String| {
        echo.push((key.to_string(), value, !loaded.key_was_set(key)));
    };
    put("grid.dim", format!("{}", cfg.grid.dim));
    put("grid.extents", fmt_f64_list(&cfg.grid.extents));
    put(
        "grid.counts",
        format!("{:?}", cfg.grid.counts).replace(' ', ""),
    );
    if let Some(ks) = &cfg.kernel {
        put("kernel.shape", ks.shape.clone());
        if let Some(e) = ks.epsilon {
            put("kernel.epsilon", format!("{e}"));
        }
        if let Some(c) = ks.cutoff {
            put("kernel.cutoff", format!("{c}"));
        }
        put(
            "kernel.scale_index",
            ks.scale_index.map_or("none".into(), |j| format!("{j}")),
        );
        put(
            "kernel.normalization",
            ks.normalization.clone().unwrap_or_else(|| "raw".into()),
        );
        put(
            "kernel.quadrature",
            ks.quadrature.clone().unwrap_or_else(|| "cell_measure".into()),
        );
        put(
            "kernel.storage",
            ks.storage.clone().unwrap_or_else(|| "auto".into()),
        );
        put(
            "kernel.node_budget",
            format!("{}", ks.node_budget.unwrap_or(20_000)),
        );
    }
    put("reaction.name", cfg.reaction.name.clone());
    put("modes.kinds", format!("{:?}", cfg.modes.kinds));
    put("modes.diffusivity", fmt_f64_list(&cfg.modes.diffusivity));
    put("initial.profile", cfg.initial.profile.clone());
    put(
        "solver.scheme",
        cfg.solver
            .scheme
            .clone()
            .unwrap_or_else(|| "explicit_euler".into()),
    );
    put("solver.t_end", format!("{}", cfg.solver.t_end));
    put(
        "solver.dt",
        cfg.solver.dt.map_or("auto".into(), |dt| format!("{dt}")),
    );
    put(
        "solver.cfl_fraction",
        format!("{}", cfg.solver.cfl_fraction.unwrap_or(0.9)),
    );
    put(
        "solver.newton_tol",
        format!("{}", cfg.solver.newton_tol.unwrap_or(1e-8)),
    );
    put(
        "solver.newton_max_iter",
        format!("{}", cfg.solver.newton_max_iter.unwrap_or(25)),
    );
    put(
        "solver.negativity_tol",
        format!("{}", cfg.solver.negativity_tol.unwrap_or(1e-10)),
    );
    put(
        "solver.snapshot_stride",
        format!("{}", cfg.solver.snapshot_stride.unwrap_or(100)),
    );
    put("audit.enabled", format!("{}", audit.enabled));
    put("audit.samples", format!("{}", audit.checker.samples));
    put("audit.box_max", format!("{}", audit.checker.box_max));
    put("audit.seed", format!("{}", audit.checker.seed));
    put(
        "output.lp_orders",
        format!("{:?}", solver.diagnostics.lp_orders),
    );
    put(
        "output.dissipation_stride",
        format!("{}", solver.diagnostics.dissipation_stride),
    );
    put("output.snapshots", format!("{write_snapshots}"));

    Ok(BuiltSystem {
        system,
        solver,
        kernel,
        write_snapshots,
        audit,
        echo,
    })
}

/// Build the rescaling-study inputs from a config whose modes are all
/// nonlocal.
pub fn build_difflimit(
    loaded: &LoadedConfig,
) -> Result<(DifflimitSpec, DifflimitConfig, BuiltSystem), CliError> {
    let built = build_system(loaded)?;
    let cfg = &loaded.config;
    if cfg.modes.kinds.iter().any(|k| k != "nonlocal") {
        return Err(config_err(
            "difflimit requires every component in modes.kinds to be nonlocal",
        ));
    }
    let exp = cfg
        .experiment
        .as_ref()
        .ok_or_else(|| config_err("experiment section required for difflimit"))?;
    if exp.j_list.is_empty() {
        return Err(config_err("experiment.j_list must not be empty"));
    }
    let ks = cfg.kernel.as_ref().unwrap();
    let kernel = built.kernel.as_ref().unwrap();
    let spec = DifflimitSpec {
        grid: built.system.grid.clone(),
        reaction: built.system.reaction.clone(),
        d: cfg.modes.diffusivity.clone(),
        initial: built.system.initial.clone(),
        t_end: cfg.solver.t_end,
    };
    let config = DifflimitConfig {
        psi: kernel.shape().clone(),
        j_list: exp.j_list.clone(),
        eps_schedule: if exp.eps_shrink.unwrap_or(false) {
            EpsSchedule::ShrinkInverseJ
        } else {
            EpsSchedule::Fixed
        },
        solver: built.solver.clone(),
        assembly: assembly_options(ks)?,
    };
    Ok((spec, config, built))
}
