//! Reaction vector fields with declared structural metadata, and
//! sampling-based checkers for the structural hypotheses (quasi-positivity,
//! quasi-balance, intermediate sums, periodic damping, polynomial growth).
//!
//! The checkers are certifying samplers, not symbolic provers: a pass is
//! evidence over the sampled set, not a proof. Every report carries that
//! disclaimer and every failure carries a witness point that reproduces the
//! violation on re-evaluation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::linalg::linear_fit;

/// Header attached to every checker report.
pub const CHECKER_DISCLAIMER: &str =
    "sampling-based check: a pass is evidence over the sampled set, not a proof";

/// Step damping profile for the periodic intermediate-sum hypothesis:
/// b(t) = 0 on [0, tau], alpha on (tau, period), extended periodically.
#[derive(Debug, Clone)]
pub struct PeriodicDamping {
    pub k: f64,
    pub alpha: f64,
    pub tau: f64,
    pub period: f64,
}

impl PeriodicDamping {
    pub fn b(&self, t: f64) -> f64 {
        let s = t.rem_euclid(self.period);
        if s <= self.tau {
            0.0
        } else {
            self.alpha
        }
    }
}

/// Structural metadata a reaction system may declare about itself.
#[derive(Debug, Clone, Default)]
pub struct ReactionMetadata {
    /// Positive weights a with sum_i a_i f_i <= L (sum u + 1).
    pub qbal_weights: Option<Vec<f64>>,
    /// Declared exact balance: sum_i a_i f_i = 0 pointwise.
    pub qbal_balanced: bool,
    /// Lower-triangular matrix with unit diagonal and nonnegative entries.
    pub intsum_matrix: Option<Vec<Vec<f64>>>,
    /// Declared constant L for the intermediate-sum bounds.
    pub intsum_bound: Option<f64>,
    pub periodic_damping: Option<PeriodicDamping>,
    /// Declared polynomial growth degree r.
    pub poly_degree: Option<u32>,
}

/// One monomial of a custom polynomial field: coeff * prod u_k^{e_k} added
/// to component `component`.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub component: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

#[derive(Debug, Clone)]
enum ReactionKind {
    GrayScott { a: f64, b: f64 },
    ReversibleChem { k1: f64, k2: f64 },
    Rumor(RumorParams),
    MolDemo,
    Polynomial { monomials: Vec<Monomial> },
}

/// Parameters of the five-component rumor-propagation field.
#[derive(Debug, Clone)]
pub struct RumorParams {
    pub k_bar: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub mu: f64,
    pub theta: f64,
    pub phi: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl Default for RumorParams {
    fn default() -> Self {
        RumorParams {
            k_bar: 1.0,
            gamma: 0.5,
            alpha: 1.0,
            lambda: 1.0,
            mu: 1.0,
            theta: 0.5,
            phi: 0.5,
            eta1: 0.5,
            eta2: 0.5,
        }
    }
}

/// An m-component reaction vector field plus its declared metadata.
#[derive(Debug, Clone)]
pub struct ReactionSystem {
    name: String,
    m: usize,
    kind: ReactionKind,
    metadata: ReactionMetadata,
}

impl ReactionSystem {
    /// f1 = -u1 u2^2 + a (1 - u1), f2 = u1 u2^2 - (a + b) u2.
    pub fn gray_scott(a: f64, b: f64) -> Self {
        ReactionSystem {
            name: "gray_scott".into(),
            m: 2,
            kind: ReactionKind::GrayScott { a, b },
            metadata: ReactionMetadata {
                qbal_weights: Some(vec![1.0, 1.0]),
                qbal_balanced: false,
                intsum_matrix: Some(vec![vec![1.0, 0.0], vec![1.0, 1.0]]),
                intsum_bound: Some(a),
                periodic_damping: Some(PeriodicDamping {
                    k: a,
                    alpha: a,
                    tau: 0.25,
                    period: 1.0,
                }),
                poly_degree: Some(3),
            },
        }
    }

    /// Three-species reversible chemistry with exact weighted balance
    /// f1 + 2 f2 + 4 f3 = 0.
    pub fn reversible_chem(k1: f64, k2: f64) -> Self {
        ReactionSystem {
            name: "reversible_chem".into(),
            m: 3,
            kind: ReactionKind::ReversibleChem { k1, k2 },
            metadata: ReactionMetadata {
                qbal_weights: Some(vec![1.0, 2.0, 4.0]),
                qbal_balanced: true,
                intsum_matrix: Some(vec![
                    vec![1.0, 0.0, 0.0],
                    vec![1.0, 1.0, 0.0],
                    vec![0.25, 0.5, 1.0],
                ]),
                intsum_bound: Some((2.0 * k1).max(2.0 * k2)),
                periodic_damping: None,
                poly_degree: Some(2),
            },
        }
    }

    /// Five-component rumor propagation field; the unweighted sum of the
    /// components vanishes identically and every leading partial sum is
    /// nonpositive.
    pub fn rumor(params: RumorParams) -> Self {
        let ones = vec![1.0; 5];
        let mut a = vec![vec![0.0; 5]; 5];
        for (k, row) in a.iter_mut().enumerate() {
            for entry in row.iter_mut().take(k + 1) {
                *entry = 1.0;
            }
        }
        ReactionSystem {
            name: "rumor".into(),
            m: 5,
            kind: ReactionKind::Rumor(params),
            metadata: ReactionMetadata {
                qbal_weights: Some(ones),
                qbal_balanced: true,
                intsum_matrix: Some(a),
                intsum_bound: Some(0.0),
                periodic_damping: None,
                poly_degree: Some(2),
            },
        }
    }

    /// f1 = u + v - u v^2, f2 = u v^2: the two-component field used by the
    /// method-of-lines comparison runs.
    pub fn mol_demo() -> Self {
        ReactionSystem {
            name: "mol_demo".into(),
            m: 2,
            kind: ReactionKind::MolDemo,
            metadata: ReactionMetadata {
                qbal_weights: Some(vec![1.0, 1.0]),
                qbal_balanced: false,
                intsum_matrix: Some(vec![vec![1.0, 0.0], vec![1.0, 1.0]]),
                intsum_bound: Some(1.0),
                periodic_damping: None,
                poly_degree: Some(3),
            },
        }
    }

    /// The zero field on m components.
    pub fn zero(m: usize) -> Self {
        let mut a = vec![vec![0.0; m]; m];
        for (k, row) in a.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        ReactionSystem {
            name: "zero".into(),
            m,
            kind: ReactionKind::Polynomial { monomials: vec![] },
            metadata: ReactionMetadata {
                qbal_weights: Some(vec![1.0; m]),
                qbal_balanced: true,
                intsum_matrix: Some(a),
                intsum_bound: Some(0.0),
                periodic_damping: None,
                poly_degree: Some(0),
            },
        }
    }

    /// User-supplied polynomial field from a monomial list.
    pub fn polynomial(
        name: impl Into<String>,
        m: usize,
        monomials: Vec<Monomial>,
        metadata: ReactionMetadata,
    ) -> Result<Self> {
        if m == 0 {
            return Err(CoreError::invalid("m", "at least one component"));
        }
        for (i, mono) in monomials.iter().enumerate() {
            if mono.component >= m {
                return Err(CoreError::invalid(
                    "monomials",
                    format!("monomial {i} targets component {} of {m}", mono.component),
                ));
            }
            if mono.exponents.len() != m {
                return Err(CoreError::invalid(
                    "monomials",
                    format!(
                        "monomial {i} has {} exponents for {m} components",
                        mono.exponents.len()
                    ),
                ));
            }
            if !mono.coeff.is_finite() {
                return Err(CoreError::invalid("monomials", format!("monomial {i} coeff not finite")));
            }
        }
        let sys = ReactionSystem {
            name: name.into(),
            m,
            kind: ReactionKind::Polynomial { monomials },
            metadata,
        };
        sys.validate_metadata()?;
        Ok(sys)
    }

    pub fn with_metadata(mut self, metadata: ReactionMetadata) -> Result<Self> {
        self.metadata = metadata;
        self.validate_metadata()?;
        Ok(self)
    }

    fn validate_metadata(&self) -> Result<()> {
        let m = self.m;
        if let Some(w) = &self.metadata.qbal_weights {
            if w.len() != m {
                return Err(CoreError::invalid("qbal_weights", format!("expected {m} entries")));
            }
            if w.iter().any(|&a| !(a > 0.0)) {
                return Err(CoreError::invalid("qbal_weights", "weights must be positive"));
            }
        }
        if let Some(a) = &self.metadata.intsum_matrix {
            if a.len() != m || a.iter().any(|row| row.len() != m) {
                return Err(CoreError::invalid("intsum_matrix", format!("must be {m}x{m}")));
            }
            for (i, row) in a.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if j > i && v != 0.0 {
                        return Err(CoreError::invalid(
                            "intsum_matrix",
                            format!("entry ({i},{j}) above the diagonal must be zero"),
                        ));
                    }
                    if j == i && v != 1.0 {
                        return Err(CoreError::invalid(
                            "intsum_matrix",
                            format!("diagonal entry ({i},{i}) must be 1, got {v}"),
                        ));
                    }
                    if v < 0.0 {
                        return Err(CoreError::invalid(
                            "intsum_matrix",
                            format!("entry ({i},{j}) must be nonnegative, got {v}"),
                        ));
                    }
                }
            }
        }
        if let Some(pd) = &self.metadata.periodic_damping {
            if !(pd.period > 0.0) || !(pd.tau > 0.0) || pd.tau >= pd.period {
                return Err(CoreError::invalid(
                    "periodic_damping",
                    "requires 0 < tau < period",
                ));
            }
            if pd.alpha < 0.0 || !pd.k.is_finite() {
                return Err(CoreError::invalid("periodic_damping", "bad K or alpha"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_components(&self) -> usize {
        self.m
    }

    pub fn metadata(&self) -> &ReactionMetadata {
        &self.metadata
    }

    /// Evaluate f(t, u) into `out`. Deterministic: repeated calls on the
    /// same input are bit-identical.
    pub fn eval(&self, _t: f64, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.m);
        debug_assert_eq!(out.len(), self.m);
        match &self.kind {
            ReactionKind::GrayScott { a, b } => {
                let uv2 = u[0] * u[1] * u[1];
                out[0] = -uv2 + a * (1.0 - u[0]);
                out[1] = uv2 - (a + b) * u[1];
            }
            ReactionKind::ReversibleChem { k1, k2 } => {
                let q1 = u[1] * u[1] - u[2]; // v2^2 - v3
                let q2 = u[0] * u[0] - u[1]; // v1^2 - v2
                out[0] = -2.0 * k2 * q2;
                out[1] = -2.0 * k1 * q1 + k2 * q2;
                out[2] = k1 * q1;
            }
            ReactionKind::Rumor(p) => {
                let (v1, v2, v3, v4, v5) = (u[0], u[1], u[2], u[3], u[4]);
                let gal = p.gamma * p.alpha * p.lambda;
                let spread = p.k_bar * v4 * (v5 + v4 + v3) * p.eta1 + v4 * p.eta2;
                out[0] = -p.k_bar * v1 * v4 * (gal * p.mu + (1.0 - p.gamma) * gal);
                out[1] = -p.k_bar * v2 * v4 * gal;
                out[2] = p.k_bar * v1 * v4 * (1.0 - p.gamma) * gal
                    - p.k_bar * v4 * v3 * p.theta
                    - p.k_bar * v5 * v3 * p.phi;
                out[3] = p.k_bar * v4 * (p.mu * v1 + v2) * gal + p.k_bar * v4 * v3 * p.theta
                    - spread;
                out[4] = spread + p.k_bar * v5 * v3 * p.phi;
            }
            ReactionKind::MolDemo => {
                let uv2 = u[0] * u[1] * u[1];
                out[0] = u[0] + u[1] - uv2;
                out[1] = uv2;
            }
            ReactionKind::Polynomial { monomials } => {
                out.fill(0.0);
                for mono in monomials {
                    let mut term = mono.coeff;
                    for (uk, &ek) in u.iter().zip(&mono.exponents) {
                        if ek > 0 {
                            term *= uk.powi(ek as i32);
                        }
                    }
                    out[mono.component] += term;
                }
            }
        }
    }
}

/// Sampling controls shared by the checkers.
#[derive(Debug, Clone)]
pub struct CheckerSettings {
    pub samples: usize,
    pub box_max: f64,
    pub seed: u64,
}

impl Default for CheckerSettings {
    fn default() -> Self {
        CheckerSettings {
            samples: 2000,
            box_max: 1e3,
            seed: 0x5eed,
        }
    }
}

/// A point at which a checker saw its extreme value.
#[derive(Debug, Clone)]
pub struct Witness {
    pub t: f64,
    pub u: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct QuasiPositivityReport {
    pub disclaimer: &'static str,
    /// Worst (most negative) f_i over the sampled face u_i = 0, per i.
    pub per_component: Vec<Witness>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct QbalReport {
    pub disclaimer: &'static str,
    /// Sampled maximum of (sum a_i f_i) / (sum u_i + 1).
    pub l_hat: f64,
    pub witness: Witness,
    pub balanced_declared: bool,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct IntsumReport {
    pub disclaimer: &'static str,
    /// Sampled maximum ratio per matrix row.
    pub l_hat_rows: Vec<f64>,
    pub declared_bound: Option<f64>,
    /// Largest value of (row sum) - L (sum u + 1) over samples, when a bound
    /// is declared.
    pub worst_violation: f64,
    pub witness: Witness,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct PeriodicReport {
    pub disclaimer: &'static str,
    /// Largest sampled value of row sum - (K - b(t) * partial u sum).
    pub worst_residual: f64,
    pub witness: Witness,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct DegreeEstimate {
    pub degree: u32,
    /// Largest fitted log-log tail slope over the sampled rays.
    pub slope: f64,
    pub fit_residual: f64,
}

fn log_uniform(rng: &mut ChaCha8Rng, box_max: f64) -> f64 {
    let lo = box_max * 1e-12;
    lo * (box_max / lo).powf(rng.gen::<f64>())
}

/// Sample points in the box: log-uniform coordinates plus the origin, the
/// scaled one-hot corners and the all-max corner.
fn sample_points(m: usize, settings: &CheckerSettings) -> Vec<(f64, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut pts = Vec::with_capacity(settings.samples + m + 2);
    pts.push((0.0, vec![0.0; m]));
    for k in 0..m {
        let mut u = vec![0.0; m];
        u[k] = settings.box_max;
        pts.push((0.0, u));
    }
    pts.push((0.0, vec![settings.box_max; m]));
    for _ in 0..settings.samples {
        let t = rng.gen::<f64>() * settings.box_max;
        let u: Vec<f64> = (0..m).map(|_| log_uniform(&mut rng, settings.box_max)).collect();
        pts.push((t, u));
    }
    pts
}

/// Check quasi-positivity: f_i >= 0 on the face u_i = 0. Passes when the
/// worst sampled value stays above -1e-12.
pub fn check_quasi_positivity(
    system: &ReactionSystem,
    settings: &CheckerSettings,
) -> QuasiPositivityReport {
    let m = system.num_components();
    let mut f = vec![0.0; m];
    let mut per_component = Vec::with_capacity(m);
    let mut pass = true;
    for i in 0..m {
        let mut worst = Witness {
            t: 0.0,
            u: vec![0.0; m],
            value: f64::INFINITY,
        };
        for (t, mut u) in sample_points(m, settings) {
            u[i] = 0.0;
            system.eval(t, &u, &mut f);
            if f[i] < worst.value {
                worst = Witness { t, u, value: f[i] };
            }
        }
        if !(worst.value >= -1e-12) {
            pass = false;
        }
        per_component.push(worst);
    }
    QuasiPositivityReport {
        disclaimer: CHECKER_DISCLAIMER,
        per_component,
        pass,
    }
}

/// Check the quasi-balance bound through the sampled ratio
/// (sum a_i f_i) / (sum u_i + 1). Systems declared exactly balanced must
/// stay below 1e-12; otherwise any finite estimate passes.
pub fn check_qbal(system: &ReactionSystem, settings: &CheckerSettings) -> Result<QbalReport> {
    let weights = system.metadata().qbal_weights.clone().ok_or_else(|| {
        CoreError::MissingMetadata {
            system: system.name().into(),
            what: "qbal_weights".into(),
        }
    })?;
    let m = system.num_components();
    let mut f = vec![0.0; m];
    let mut l_hat = f64::NEG_INFINITY;
    let mut witness = Witness {
        t: 0.0,
        u: vec![0.0; m],
        value: 0.0,
    };
    for (t, u) in sample_points(m, settings) {
        system.eval(t, &u, &mut f);
        let num: f64 = weights.iter().zip(&f).map(|(a, fi)| a * fi).sum();
        let den: f64 = u.iter().sum::<f64>() + 1.0;
        let ratio = num / den;
        if ratio > l_hat {
            l_hat = ratio;
            witness = Witness { t, u, value: ratio };
        }
    }
    let balanced = system.metadata().qbal_balanced;
    let pass = l_hat.is_finite() && (!balanced || l_hat <= 1e-12);
    Ok(QbalReport {
        disclaimer: CHECKER_DISCLAIMER,
        l_hat,
        witness,
        balanced_declared: balanced,
        pass,
    })
}

/// Check the triangular intermediate-sum bounds. Ratios use the full
/// component sum in the denominator, matching the balance checker; a
/// declared bound L passes when every sampled row violation
/// (row sum) - L (sum u + 1) stays within rounding of zero.
pub fn check_intsum(system: &ReactionSystem, settings: &CheckerSettings) -> Result<IntsumReport> {
    let a = system.metadata().intsum_matrix.clone().ok_or_else(|| {
        CoreError::MissingMetadata {
            system: system.name().into(),
            what: "intsum_matrix".into(),
        }
    })?;
    let m = system.num_components();
    let mut f = vec![0.0; m];
    let mut l_hat_rows = vec![f64::NEG_INFINITY; m];
    let mut worst_violation = f64::NEG_INFINITY;
    let mut witness = Witness {
        t: 0.0,
        u: vec![0.0; m],
        value: 0.0,
    };
    let declared = system.metadata().intsum_bound;
    let mut pass = true;
    for (t, u) in sample_points(m, settings) {
        system.eval(t, &u, &mut f);
        let den: f64 = u.iter().sum::<f64>() + 1.0;
        let f_scale = f.iter().fold(0.0f64, |s, &x| s.max(x.abs()));
        for (k, row) in a.iter().enumerate() {
            let num: f64 = row.iter().take(k + 1).zip(&f).map(|(akj, fj)| akj * fj).sum();
            let ratio = num / den;
            if ratio > l_hat_rows[k] {
                l_hat_rows[k] = ratio;
            }
            if let Some(l) = declared {
                let violation = num - l * (1.0 + 1e-9) * den;
                if violation > worst_violation {
                    worst_violation = violation;
                    witness = Witness {
                        t,
                        u: u.clone(),
                        value: ratio,
                    };
                }
                // Rounding guard scaled to the evaluated field, so exact
                // identities sampled at large |u| are not flagged.
                if violation > 1e-9 * (1.0 + f_scale) {
                    pass = false;
                }
            }
        }
    }
    if declared.is_none() {
        worst_violation = f64::NAN;
    }
    Ok(IntsumReport {
        disclaimer: CHECKER_DISCLAIMER,
        l_hat_rows,
        declared_bound: declared,
        worst_violation,
        witness,
        pass,
    })
}

/// Check the periodic intermediate-sum bound
/// sum_{j<=k} a_{k,j} f_j(t,u) <= K - b(t) sum_{j<=k} u_j
/// on a (t, u) product grid. The t grid covers two periods and includes
/// points just inside and outside the jump at tau; behavior exactly at the
/// jump is convention-dependent, so only the sampled points are asserted.
pub fn check_intsum_periodic(
    system: &ReactionSystem,
    t_samples: usize,
    u_samples: usize,
    seed: u64,
) -> Result<PeriodicReport> {
    let pd = system.metadata().periodic_damping.clone().ok_or_else(|| {
        CoreError::MissingMetadata {
            system: system.name().into(),
            what: "periodic_damping".into(),
        }
    })?;
    let m = system.num_components();
    // Reuse the declared triangular matrix; identity-with-full-lower-ones is
    // the default when none is declared.
    let a = system.metadata().intsum_matrix.clone().unwrap_or_else(|| {
        let mut a = vec![vec![0.0; m]; m];
        for (k, row) in a.iter_mut().enumerate() {
            for entry in row.iter_mut().take(k + 1) {
                *entry = 1.0;
            }
        }
        a
    });
    let mut ts = vec![
        0.0,
        pd.tau - 1e-9,
        pd.tau,
        pd.tau + 1e-9,
        pd.period - 1e-9,
        pd.period,
        pd.period + pd.tau - 1e-9,
        pd.period + pd.tau + 1e-9,
    ];
    for i in 0..t_samples {
        ts.push(2.0 * pd.period * (i as f64 + 0.5) / t_samples as f64);
    }
    let settings = CheckerSettings {
        samples: u_samples,
        box_max: 1e3,
        seed,
    };
    let mut f = vec![0.0; m];
    let mut worst = f64::NEG_INFINITY;
    let mut witness = Witness {
        t: 0.0,
        u: vec![0.0; m],
        value: 0.0,
    };
    let mut pass = true;
    for (_, u) in sample_points(m, &settings) {
        for &t in &ts {
            if t < 0.0 {
                continue;
            }
            system.eval(t, &u, &mut f);
            let f_scale = f.iter().fold(0.0f64, |s, &x| s.max(x.abs()));
            let b = pd.b(t);
            for (k, row) in a.iter().enumerate() {
                let num: f64 =
                    row.iter().take(k + 1).zip(&f).map(|(akj, fj)| akj * fj).sum();
                let partial: f64 = u.iter().take(k + 1).sum();
                let residual = num - (pd.k - b * partial);
                if residual > worst {
                    worst = residual;
                    witness = Witness {
                        t,
                        u: u.clone(),
                        value: residual,
                    };
                }
                if residual > 1e-9 * (1.0 + f_scale) {
                    pass = false;
                }
            }
        }
    }
    Ok(PeriodicReport {
        disclaimer: CHECKER_DISCLAIMER,
        worst_residual: worst,
        witness,
        pass,
    })
}

/// Estimate the polynomial growth degree by fitting log max_i |f_i| against
/// log (sum u + 1) along rays u = s * e for one-hot, all-ones and seeded
/// random nonnegative directions.
pub fn estimate_poly_degree(system: &ReactionSystem, box_max: f64) -> Result<DegreeEstimate> {
    let m = system.num_components();
    let mut rays: Vec<Vec<f64>> = Vec::new();
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        rays.push(e);
    }
    rays.push(vec![1.0; m]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xde6ee);
    for _ in 0..3 {
        let dir: Vec<f64> = (0..m).map(|_| 0.1 + 0.9 * rng.gen::<f64>()).collect();
        rays.push(dir);
    }

    let n_pts = 25usize;
    let mut slope_max: f64 = 0.0;
    let mut residual_max: f64 = 0.0;
    let mut f = vec![0.0; m];
    for dir in &rays {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n_pts {
            let s = (box_max.ln() * i as f64 / (n_pts - 1) as f64).exp();
            let u: Vec<f64> = dir.iter().map(|d| d * s).collect();
            system.eval(0.0, &u, &mut f);
            let g = f.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
            if g > 0.0 {
                xs.push((u.iter().sum::<f64>() + 1.0).ln());
                ys.push(g.ln());
            }
        }
        if xs.len() < 9 {
            continue; // field vanishes along this ray
        }
        // Polynomials cross over from low- to high-degree dominance, so the
        // slope may legitimately grow early along a ray. Divergence is a
        // slope still growing between the last two thirds of the range.
        let third = xs.len() / 3;
        let (slope_mid, _, _) = linear_fit(&xs[third..2 * third], &ys[third..2 * third]);
        let (slope_tail, _, res) = linear_fit(&xs[2 * third..], &ys[2 * third..]);
        if slope_tail - slope_mid > 0.75 || slope_tail > 64.0 {
            return Err(CoreError::DegreeFitDiverged(format!(
                "slope grows along ray {dir:?}: mid {slope_mid:.2}, tail {slope_tail:.2}"
            )));
        }
        slope_max = slope_max.max(slope_tail);
        residual_max = residual_max.max(res);
    }
    let degree = (slope_max - 0.25).ceil().max(0.0) as u32;
    Ok(DegreeEstimate {
        degree,
        slope: slope_max,
        fit_residual: residual_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(sys: &ReactionSystem, u: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; sys.num_components()];
        sys.eval(0.0, u, &mut f);
        f
    }

    #[test]
    fn gray_scott_values() {
        let gs = ReactionSystem::gray_scott(0.25, 0.080);
        let f = eval(&gs, &[1.0, 0.0]);
        assert_eq!(f, vec![0.0, 0.0]); // equilibrium
        let f = eval(&gs, &[0.0, 1.0]);
        assert_eq!(f[0], 0.25);
    }

    #[test]
    fn eval_is_pure() {
        let sys = ReactionSystem::rumor(RumorParams::default());
        let u = [0.3, 1.7, 0.2, 5.0, 0.9];
        let a = eval(&sys, &u);
        let b = eval(&sys, &u);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn balance_identities_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rev = ReactionSystem::reversible_chem(1.0, 0.7);
        let rum = ReactionSystem::rumor(RumorParams::default());
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 1e3).collect();
            let f = eval(&rev, &v);
            let s = f[0] + 2.0 * f[1] + 4.0 * f[2];
            let fn_norm = f.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!(s.abs() <= 1e-9 * (1.0 + fn_norm), "reversible_chem: {s}");

            let v: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 1e3).collect();
            let f = eval(&rum, &v);
            let s: f64 = f.iter().sum();
            let fn_norm = f.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            assert!(s.abs() <= 1e-9 * (1.0 + fn_norm), "rumor: {s}");
        }
    }

    #[test]
    fn quasi_positivity_gray_scott_passes() {
        let gs = ReactionSystem::gray_scott(0.25, 0.080);
        let report = check_quasi_positivity(&gs, &CheckerSettings::default());
        assert!(report.pass);
        // Face u1 = 0 has f1 = a exactly.
        assert!((report.per_component[0].value - 0.25).abs() <= 1e-12);
        // Face u2 = 0 has f2 = 0.
        assert_eq!(report.per_component[1].value, 0.0);
    }

    #[test]
    fn quasi_positivity_all_builtins_pass() {
        for sys in [
            ReactionSystem::gray_scott(0.25, 0.080),
            ReactionSystem::reversible_chem(1.0, 1.0),
            ReactionSystem::rumor(RumorParams::default()),
            ReactionSystem::mol_demo(),
        ] {
            let report = check_quasi_positivity(&sys, &CheckerSettings::default());
            assert!(report.pass, "{} failed QP", sys.name());
        }
    }

    #[test]
    fn quasi_positivity_broken_field_fails_with_witness() {
        let broken = ReactionSystem::polynomial(
            "broken",
            2,
            vec![Monomial {
                component: 0,
                coeff: -1.0,
                exponents: vec![0, 0],
            }],
            ReactionMetadata::default(),
        )
        .unwrap();
        let report = check_quasi_positivity(&broken, &CheckerSettings::default());
        assert!(!report.pass);
        let w = &report.per_component[0];
        assert!(w.value < -1e-12);
        // Re-evaluating at the witness reproduces the violation bit-for-bit.
        let mut f = vec![0.0; 2];
        broken.eval(w.t, &w.u, &mut f);
        assert_eq!(f[0].to_bits(), w.value.to_bits());
    }

    #[test]
    fn qbal_balanced_systems_within_rounding() {
        for sys in [
            ReactionSystem::reversible_chem(1.0, 1.0),
            ReactionSystem::rumor(RumorParams::default()),
        ] {
            let r = check_qbal(&sys, &CheckerSettings::default()).unwrap();
            assert!(r.pass, "{}: l_hat {}", sys.name(), r.l_hat);
            assert!(r.l_hat <= 1e-12);
        }
    }

    #[test]
    fn qbal_gray_scott_estimate_is_feed_rate() {
        let gs = ReactionSystem::gray_scott(0.25, 0.080);
        let r = check_qbal(&gs, &CheckerSettings::default()).unwrap();
        assert!(r.pass);
        // The ratio attains a at the origin, which is a deterministic sample.
        assert!((r.l_hat - 0.25).abs() <= 1e-12, "l_hat {}", r.l_hat);
    }

    #[test]
    fn qbal_missing_weights_errors() {
        let sys = ReactionSystem::polynomial("bare", 1, vec![], ReactionMetadata::default())
            .unwrap();
        assert!(matches!(
            check_qbal(&sys, &CheckerSettings::default()),
            Err(CoreError::MissingMetadata { .. })
        ));
    }

    #[test]
    fn intsum_builtins_pass() {
        for sys in [
            ReactionSystem::gray_scott(0.25, 0.080),
            ReactionSystem::reversible_chem(1.0, 1.0),
            ReactionSystem::rumor(RumorParams::default()),
            ReactionSystem::mol_demo(),
        ] {
            let r = check_intsum(&sys, &CheckerSettings::default()).unwrap();
            assert!(r.pass, "{} intsum failed: {:?}", sys.name(), r.l_hat_rows);
        }
    }

    #[test]
    fn intsum_reversible_first_row_bounded_by_2k2() {
        let sys = ReactionSystem::reversible_chem(1.0, 0.8);
        let r = check_intsum(&sys, &CheckerSettings::default()).unwrap();
        assert!(r.l_hat_rows[0] <= 2.0 * 0.8 + 1e-9, "{}", r.l_hat_rows[0]);
    }

    #[test]
    fn intsum_rumor_rows_nonpositive() {
        let sys = ReactionSystem::rumor(RumorParams::default());
        let r = check_intsum(&sys, &CheckerSettings::default()).unwrap();
        for (k, l) in r.l_hat_rows.iter().enumerate() {
            assert!(*l <= 1e-12, "row {k}: {l}");
        }
    }

    #[test]
    fn intsum_matrix_validation() {
        let bad = ReactionSystem::gray_scott(0.25, 0.08).with_metadata(ReactionMetadata {
            intsum_matrix: Some(vec![vec![1.0, 0.5], vec![1.0, 1.0]]),
            ..ReactionMetadata::default()
        });
        assert!(bad.is_err(), "upper-triangular entry accepted");
        let bad = ReactionSystem::gray_scott(0.25, 0.08).with_metadata(ReactionMetadata {
            intsum_matrix: Some(vec![vec![2.0, 0.0], vec![1.0, 1.0]]),
            ..ReactionMetadata::default()
        });
        assert!(bad.is_err(), "non-unit diagonal accepted");
    }

    #[test]
    fn periodic_decay_field_passes_exactly() {
        // f_i = K/m - alpha u_i satisfies the bound with equality at k = m.
        let m = 3;
        let k = 0.9;
        let alpha = 0.4;
        let mut monomials = Vec::new();
        for i in 0..m {
            monomials.push(Monomial {
                component: i,
                coeff: k / m as f64,
                exponents: vec![0; m],
            });
            let mut e = vec![0; m];
            e[i] = 1;
            monomials.push(Monomial {
                component: i,
                coeff: -alpha,
                exponents: e,
            });
        }
        let sys = ReactionSystem::polynomial(
            "decay",
            m,
            monomials,
            ReactionMetadata {
                periodic_damping: Some(PeriodicDamping {
                    k,
                    alpha,
                    tau: 0.3,
                    period: 1.0,
                }),
                ..ReactionMetadata::default()
            },
        )
        .unwrap();
        let r = check_intsum_periodic(&sys, 16, 400, 7).unwrap();
        assert!(r.pass, "worst residual {}", r.worst_residual);
    }

    #[test]
    fn periodic_gray_scott_passes() {
        let gs = ReactionSystem::gray_scott(0.25, 0.080);
        let r = check_intsum_periodic(&gs, 16, 400, 8).unwrap();
        assert!(r.pass, "worst residual {}", r.worst_residual);
    }

    #[test]
    fn periodic_overclaimed_damping_fails_with_witness() {
        // K = 0 with large alpha overclaims decay for a growth field.
        let sys = ReactionSystem::polynomial(
            "growth",
            1,
            vec![Monomial {
                component: 0,
                coeff: 1.0,
                exponents: vec![1],
            }],
            ReactionMetadata {
                periodic_damping: Some(PeriodicDamping {
                    k: 0.0,
                    alpha: 10.0,
                    tau: 0.2,
                    period: 1.0,
                }),
                ..ReactionMetadata::default()
            },
        )
        .unwrap();
        let r = check_intsum_periodic(&sys, 8, 100, 9).unwrap();
        assert!(!r.pass);
        assert!(r.worst_residual > 0.0);
        assert!(!r.witness.u.is_empty());
    }

    #[test]
    fn degree_estimates_match_declared() {
        let cases = [
            (ReactionSystem::gray_scott(0.25, 0.080), 3),
            (ReactionSystem::rumor(RumorParams::default()), 2),
            (ReactionSystem::reversible_chem(1.0, 1.0), 2),
            (ReactionSystem::mol_demo(), 3),
        ];
        for (sys, want) in cases {
            let est = estimate_poly_degree(&sys, 1e3).unwrap();
            assert_eq!(est.degree, want, "{}: slope {}", sys.name(), est.slope);
            assert_eq!(sys.metadata().poly_degree, Some(want));
        }
    }

    #[test]
    fn degree_of_linear_field_is_one() {
        let sys = ReactionSystem::polynomial(
            "linear_decay",
            2,
            vec![
                Monomial {
                    component: 0,
                    coeff: -1.0,
                    exponents: vec![1, 0],
                },
                Monomial {
                    component: 1,
                    coeff: -1.0,
                    exponents: vec![0, 1],
                },
            ],
            ReactionMetadata::default(),
        )
        .unwrap();
        let est = estimate_poly_degree(&sys, 1e3).unwrap();
        assert_eq!(est.degree, 1);
    }

    #[test]
    fn polynomial_constructor_validates() {
        assert!(ReactionSystem::polynomial(
            "bad",
            2,
            vec![Monomial {
                component: 5,
                coeff: 1.0,
                exponents: vec![0, 0],
            }],
            ReactionMetadata::default(),
        )
        .is_err());
        assert!(ReactionSystem::polynomial(
            "bad",
            2,
            vec![Monomial {
                component: 0,
                coeff: 1.0,
                exponents: vec![0],
            }],
            ReactionMetadata::default(),
        )
        .is_err());
    }
}
