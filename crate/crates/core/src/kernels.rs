//! Radial kernels, the rescaled kernel family, and their discretization as
//! quadrature-weighted operator matrices.
//!
//! A kernel is a radial profile psi applied to |x - y|. With a scale index
//! j the evaluated kernel is j^(n+2) * psi(j |x - y|), which concentrates
//! the interaction radius like 1/j while keeping the second moment fixed;
//! the row mass grows like j^2.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::grid::Grid;

/// Radial profile of a kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape {
    /// exp(-r^2 / (2 eps^2)), supported everywhere.
    Gaussian { epsilon: f64 },
    /// Smooth compactly supported bump exp(-1/(1-r^2)) for r < 1.
    Bump,
    /// Gaussian cut to zero beyond `cutoff`, so matrix-free storage applies.
    TruncatedGaussian { epsilon: f64, cutoff: f64 },
    /// Indicator of the unit ball; its moments have closed forms, which the
    /// moment quadrature is checked against.
    UniformBump,
}

impl KernelShape {
    fn validate(&self) -> Result<()> {
        match *self {
            KernelShape::Gaussian { epsilon } | KernelShape::TruncatedGaussian { epsilon, .. }
                if !(epsilon > 0.0) || !epsilon.is_finite() =>
            {
                Err(CoreError::invalid("epsilon", format!("must be positive, got {epsilon}")))
            }
            KernelShape::TruncatedGaussian { cutoff, .. }
                if !(cutoff > 0.0) || !cutoff.is_finite() =>
            {
                Err(CoreError::invalid("cutoff", format!("must be positive, got {cutoff}")))
            }
            _ => Ok(()),
        }
    }

    /// Raw profile value at radius r >= 0, before normalization or scaling.
    pub fn raw(&self, r: f64) -> f64 {
        match *self {
            KernelShape::Gaussian { epsilon } => (-r * r / (2.0 * epsilon * epsilon)).exp(),
            KernelShape::Bump => {
                if r < 1.0 {
                    (-1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
            KernelShape::TruncatedGaussian { epsilon, cutoff } => {
                if r <= cutoff {
                    (-r * r / (2.0 * epsilon * epsilon)).exp()
                } else {
                    0.0
                }
            }
            KernelShape::UniformBump => {
                if r <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius beyond which the raw profile is identically zero, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            KernelShape::Gaussian { .. } => None,
            KernelShape::Bump | KernelShape::UniformBump => Some(1.0),
            KernelShape::TruncatedGaussian { cutoff, .. } => Some(cutoff),
        }
    }

    /// Upper integration limit for radial quadrature: the support radius, or
    /// a radius at which a Gaussian tail is far below f64 resolution.
    fn quad_range(&self) -> f64 {
        match *self {
            KernelShape::Gaussian { epsilon } => 12.0 * epsilon,
            _ => self.support_radius().unwrap(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelShape::Gaussian { .. } => "gaussian",
            KernelShape::Bump => "bump",
            KernelShape::TruncatedGaussian { .. } => "truncated_gaussian",
            KernelShape::UniformBump => "uniform_bump",
        }
    }
}

/// Mass convention for the radial profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Use the profile as written.
    Raw,
    /// Scale so the profile integrates to one over R^n.
    UnitMass,
}

/// A kernel ready for evaluation: shape, dimension, optional scale index
/// and normalization, with the normalization constant precomputed.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    shape: KernelShape,
    dim: usize,
    scale_index: Option<u32>,
    normalization: Normalization,
    norm_const: f64,
}

impl KernelSpec {
    pub fn new(
        shape: KernelShape,
        dim: usize,
        scale_index: Option<u32>,
        normalization: Normalization,
    ) -> Result<Self> {
        shape.validate()?;
        if dim != 1 && dim != 2 {
            return Err(CoreError::invalid("dim", format!("must be 1 or 2, got {dim}")));
        }
        if let Some(j) = scale_index {
            if j == 0 {
                return Err(CoreError::invalid("scale_index", "must be >= 1"));
            }
        }
        let norm_const = match normalization {
            Normalization::Raw => 1.0,
            Normalization::UnitMass => {
                let mass = radial_integral(|r| shape.raw(r), shape.quad_range(), dim, 0)?;
                if !(mass > 0.0) {
                    return Err(CoreError::invalid("normalization", "profile has zero mass"));
                }
                1.0 / mass
            }
        };
        Ok(KernelSpec {
            shape,
            dim,
            scale_index,
            normalization,
            norm_const,
        })
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale_index(&self) -> Option<u32> {
        self.scale_index
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Normalized, scaled profile at radius r:
    /// j^(n+2) * c * psi(j r) with j = 1 when no scale index is set.
    pub fn radial(&self, r: f64) -> f64 {
        match self.scale_index {
            None => self.norm_const * self.shape.raw(r),
            Some(j) => {
                let j = j as f64;
                j.powi(self.dim as i32 + 2) * self.norm_const * self.shape.raw(j * r)
            }
        }
    }

    /// Kernel value at a pair of points. Symmetric bit-for-bit in (x, y)
    /// because it depends on the points only through |x - y|.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.radial(distance(x, y))
    }

    /// Support radius of the evaluated (scaled) kernel, if compact.
    pub fn support_radius(&self) -> Option<f64> {
        let base = self.shape.support_radius()?;
        Some(match self.scale_index {
            None => base,
            Some(j) => base / j as f64,
        })
    }

    /// Second moment of the normalized profile over R^n.
    ///
    /// Scale-invariant: rescaling by j multiplies mass by j^2 but leaves
    /// this moment unchanged, so it is computed from the unscaled profile.
    pub fn second_moment(&self) -> Result<f64> {
        let c = self.norm_const;
        radial_integral(
            |r| c * self.shape.raw(r),
            self.shape.quad_range(),
            self.dim,
            2,
        )
    }
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Surface measure of the unit sphere: 2 in 1D, 2*pi in 2D.
pub fn unit_sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI,
    }
}

/// sigma_{n-1} * int_0^{r_max} r^(n-1+extra_power) psi(r) dr, computed by
/// composite Simpson quadrature with panel doubling until two successive
/// refinements agree to 1e-9 relative.
pub fn radial_integral<F>(psi: F, r_max: f64, dim: usize, extra_power: i32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(CoreError::QuadratureDiverged(format!(
            "bad integration range {r_max}"
        )));
    }
    let power = (dim as i32 - 1) + extra_power;
    let f = |r: f64| r.powi(power) * psi(r);
    let simpson = |panels: usize| -> f64 {
        let h = r_max / panels as f64;
        let mut s = f(0.0) + f(r_max);
        for i in 1..panels {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0
    };
    let mut panels = 64;
    let mut prev = simpson(panels);
    for _ in 0..16 {
        panels *= 2;
        let cur = simpson(panels);
        if (cur - prev).abs() <= 1e-9 * cur.abs().max(1e-300) {
            return Ok(unit_sphere_measure(dim) * cur);
        }
        prev = cur;
    }
    Err(CoreError::QuadratureDiverged(format!(
        "no convergence after {panels} panels over [0, {r_max}]"
    )))
}

/// D = d * M / (2n) for a second moment M in dimension n.
pub fn effective_diffusivity_from_moment(second_moment: f64, d: f64, dim: usize) -> f64 {
    d * second_moment / (2.0 * dim as f64)
}

/// Diffusivity of the local system matching a rescaled-kernel sequence.
pub fn effective_diffusivity(spec: &KernelSpec, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(CoreError::invalid("d", format!("must be positive, got {d}")));
    }
    Ok(effective_diffusivity_from_moment(
        spec.second_moment()?,
        d,
        spec.dim(),
    ))
}

/// Quadrature convention for the discrete operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Weight each kernel value by the cell measure of the source node.
    /// This makes the discrete symmetry identity exact and conserves mass.
    CellMeasure,
    /// Weight by |x_p - x_q| instead of the cell measure. Not a consistent
    /// quadrature; provided only to reproduce externally published tables
    /// assembled with a distance-factor sum.
    DistanceFactor,
}

/// How the operator stores its kernel values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageChoice {
    /// Pick matrix-free when the support window is small, dense otherwise.
    Auto,
    Dense,
    MatrixFree,
}

#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    pub storage: StorageChoice,
    /// Dense assembly is rejected above this node count.
    pub node_budget: usize,
    pub quadrature: QuadratureRule,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            storage: StorageChoice::Auto,
            node_budget: 20_000,
            quadrature: QuadratureRule::CellMeasure,
        }
    }
}

#[derive(Debug)]
enum Storage {
    Dense { phi: Vec<f64> },
    MatrixFree { half_window: [usize; 2] },
}

/// Discrete realization of the nonlocal generator's kernel part: the
/// symmetric kernel values phi(x_p, x_q) together with quadrature weights,
/// row masses mu_p = sum_q phi(x_p, x_q) w_q and their maximum.
#[derive(Debug)]
pub struct DiscreteNonlocalOperator {
    grid: Arc<Grid>,
    spec: KernelSpec,
    quadrature: QuadratureRule,
    storage: Storage,
    row_mass: Vec<f64>,
    mu_max: f64,
}

impl DiscreteNonlocalOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn quadrature(&self) -> QuadratureRule {
        self.quadrature
    }

    pub fn row_mass(&self) -> &[f64] {
        &self.row_mass
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense { .. })
    }

    /// Quadrature weight attached to source node q for a row at p.
    #[inline]
    fn source_weight(&self, p: usize, q: usize) -> f64 {
        match self.quadrature {
            QuadratureRule::CellMeasure => self.grid.cell_weights()[q],
            QuadratureRule::DistanceFactor => distance(self.grid.node(p), self.grid.node(q)),
        }
    }

    /// Visit the nonzero kernel entries of row p in ascending q order,
    /// passing (q, phi_pq * weight_q). Zero entries may be skipped; callers
    /// accumulate sums whose value is unchanged by skipped zeros.
    #[inline]
    pub fn for_each_in_row<F>(&self, p: usize, mut visit: F)
    where
        F: FnMut(usize, f64),
    {
        match &self.storage {
            Storage::Dense { phi } => {
                let n = self.grid.num_nodes();
                let row = &phi[p * n..(p + 1) * n];
                for (q, &k) in row.iter().enumerate() {
                    if k != 0.0 {
                        visit(q, k * self.source_weight(p, q));
                    }
                }
            }
            Storage::MatrixFree { half_window } => {
                let (px, py) = self.grid.axis_indices(p);
                let counts = self.grid.counts();
                let xlo = px.saturating_sub(half_window[0]);
                let xhi = (px + half_window[0]).min(counts[0] - 1);
                if self.grid.dim() == 1 {
                    for q in xlo..=xhi {
                        let k = self.spec.eval(self.grid.node(p), self.grid.node(q));
                        if k != 0.0 {
                            visit(q, k * self.source_weight(p, q));
                        }
                    }
                } else {
                    let ylo = py.saturating_sub(half_window[1]);
                    let yhi = (py + half_window[1]).min(counts[1] - 1);
                    for qy in ylo..=yhi {
                        let base = qy * counts[0];
                        for qx in xlo..=xhi {
                            let q = base + qx;
                            let k = self.spec.eval(self.grid.node(p), self.grid.node(q));
                            if k != 0.0 {
                                visit(q, k * self.source_weight(p, q));
                            }
                        }
                    }
                }
            }
        }
    }

    /// Apply the generator to one component: out_p = d * sum_q w_pq (u_q - u_p).
    ///
    /// Rows are independent; they are evaluated in parallel for large grids
    /// with a fixed per-row summation order, so results do not depend on
    /// the thread count.
    pub fn apply_into(&self, u: &[f64], d: f64, out: &mut [f64]) -> Result<()> {
        let n = self.grid.num_nodes();
        if u.len() != n || out.len() != n {
            return Err(CoreError::GridMismatch(format!(
                "operator has {n} nodes, field has {}",
                u.len()
            )));
        }
        let row = |p: usize, out_p: &mut f64| {
            let up = u[p];
            let mut sum = 0.0;
            self.for_each_in_row(p, |q, w| {
                sum += w * (u[q] - up);
            });
            *out_p = d * sum;
        };
        if n >= 4096 {
            out.par_iter_mut().enumerate().for_each(|(p, o)| row(p, o));
        } else {
            for (p, o) in out.iter_mut().enumerate() {
                row(p, o);
            }
        }
        Ok(())
    }
}

/// Assemble with default options (auto storage, 20 000 node dense budget,
/// cell-measure quadrature).
pub fn assemble_operator(grid: Arc<Grid>, spec: KernelSpec) -> Result<DiscreteNonlocalOperator> {
    assemble_operator_with(grid, spec, &AssemblyOptions::default())
}

pub fn assemble_operator_with(
    grid: Arc<Grid>,
    spec: KernelSpec,
    options: &AssemblyOptions,
) -> Result<DiscreteNonlocalOperator> {
    if spec.dim() != grid.dim() {
        return Err(CoreError::GridMismatch(format!(
            "kernel dim {} vs grid dim {}",
            spec.dim(),
            grid.dim()
        )));
    }
    let n = grid.num_nodes();
    let half_window = spec.support_radius().map(|radius| {
        let mut hw = [0usize; 2];
        for (axis, h) in grid.spacing().iter().enumerate() {
            hw[axis] = (radius / h).floor() as usize + 1;
        }
        hw
    });
    let window_nodes = half_window.map(|hw| {
        grid.counts()
            .iter()
            .enumerate()
            .map(|(axis, &c)| (2 * hw[axis] + 1).min(c))
            .product::<usize>()
    });

    let use_dense = match options.storage {
        StorageChoice::Dense => {
            if n > options.node_budget {
                return Err(CoreError::DenseBudgetExceeded {
                    nodes: n,
                    budget: options.node_budget,
                });
            }
            true
        }
        StorageChoice::MatrixFree => {
            if half_window.is_none() {
                return Err(CoreError::NonCompactKernel(spec.shape().name().to_string()));
            }
            false
        }
        StorageChoice::Auto => match window_nodes {
            // Small support window: recomputing the kernel on the fly beats
            // streaming a dense row from memory.
            Some(w) if 3 * w <= n => false,
            _ => {
                if n > options.node_budget {
                    if half_window.is_some() {
                        false
                    } else {
                        return Err(CoreError::DenseBudgetExceeded {
                            nodes: n,
                            budget: options.node_budget,
                        });
                    }
                } else {
                    true
                }
            }
        },
    };

    let storage = if use_dense {
        let mut phi = vec![0.0f64; n * n];
        phi.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
            let xp = grid.node(p);
            for (q, slot) in row.iter_mut().enumerate() {
                *slot = spec.eval(xp, grid.node(q));
            }
        });
        Storage::Dense { phi }
    } else {
        Storage::MatrixFree {
            half_window: half_window.unwrap(),
        }
    };

    let mut op = DiscreteNonlocalOperator {
        grid,
        spec,
        quadrature: options.quadrature,
        storage,
        row_mass: Vec::new(),
        mu_max: 0.0,
    };
    // Row masses: plain ascending sums so they match a brute-force loop
    // bit-for-bit.
    let n_nodes = op.grid.num_nodes();
    let mut row_mass = vec![0.0f64; n_nodes];
    row_mass.par_iter_mut().enumerate().for_each(|(p, slot)| {
        let mut s = 0.0;
        op.for_each_in_row(p, |_q, w| s += w);
        *slot = s;
    });
    let mu_max = row_mass.iter().fold(0.0f64, |m, &x| m.max(x));
    if !mu_max.is_finite() {
        return Err(CoreError::invalid("kernel", "non-finite row mass"));
    }
    op.row_mass = row_mass;
    op.mu_max = mu_max;
    Ok(op)
}
