//! Run diagnostics: the theta-weighted Lp energy of a field, the
//! positive-definiteness certificate behind it, the nonlocal dissipation
//! functional and weighted-mass tracking.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{CoreError, Result};
use crate::grid::{integrate_field, Field};
use crate::kernels::DiscreteNonlocalOperator;
use crate::linalg::neumaier_sum;

/// Certified weight vector for the Lp energy of order p.
#[derive(Debug, Clone)]
pub struct ThetaWeights {
    pub theta: Vec<f64>,
    pub p: u32,
    /// Whether the coupling matrix passed the positive-definiteness test.
    pub certified: bool,
}

/// The m x m coupling matrix with entries d_i theta_i^2 on the diagonal and
/// (d_i + d_j)/2 off it. Its positive definiteness is what makes the Lp
/// energy dissipate under pure diffusion.
pub fn build_m_matrix(theta: &[f64], d: &[f64]) -> Result<DMatrix<f64>> {
    if theta.len() != d.len() || theta.is_empty() {
        return Err(CoreError::invalid(
            "theta/d",
            format!("length mismatch: {} vs {}", theta.len(), d.len()),
        ));
    }
    if theta.iter().any(|&t| !(t > 0.0)) || d.iter().any(|&x| !(x > 0.0)) {
        return Err(CoreError::invalid("theta/d", "entries must be positive"));
    }
    let m = d.len();
    let mut mat = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            mat[(i, j)] = if i == j {
                d[i] * theta[i] * theta[i]
            } else {
                0.5 * (d[i] + d[j])
            };
        }
    }
    Ok(mat)
}

/// All leading principal minors of a square matrix.
pub fn leading_principal_minors(mat: &DMatrix<f64>) -> Vec<f64> {
    (1..=mat.nrows())
        .map(|k| mat.view((0, 0), (k, k)).clone_owned().determinant())
        .collect()
}

fn is_positive_definite(mat: &DMatrix<f64>) -> bool {
    leading_principal_minors(mat).iter().all(|&m| m > 0.0)
}

/// Choose theta with theta_1 = 1 and geometric inflation theta_i = s^(i-1),
/// doubling s until Sylvester's criterion certifies the coupling matrix.
/// The diagonal grows with s while the off-diagonal entries stay fixed, so
/// the loop terminates; 60 doublings is a hard cap.
pub fn choose_theta(d: &[f64], p: u32) -> Result<ThetaWeights> {
    if d.is_empty() || d.iter().any(|&x| !(x > 0.0)) {
        return Err(CoreError::invalid("d", "diffusivities must be positive"));
    }
    if p < 2 {
        return Err(CoreError::invalid("p", format!("energy order must be >= 2, got {p}")));
    }
    let m = d.len();
    let mut s = 1.0f64;
    for _ in 0..=60 {
        let theta: Vec<f64> = (0..m).map(|i| s.powi(i as i32)).collect();
        let mat = build_m_matrix(&theta, d)?;
        if is_positive_definite(&mat) {
            return Ok(ThetaWeights {
                theta,
                p,
                certified: true,
            });
        }
        s *= 2.0;
    }
    Err(CoreError::ThetaCertification(60))
}

type IndexCache = Mutex<HashMap<(usize, u32), Arc<Vec<Vec<u32>>>>>;

/// Multi-indices beta in Z_+^m with |beta| = p, in lexicographic order,
/// cached per (m, p). The count is C(p+m-1, m-1), capped at 1e6 terms.
pub fn multi_indices(m: usize, p: u32) -> Result<Arc<Vec<Vec<u32>>>> {
    const CAP: u128 = 1_000_000;
    let count = {
        // C(p + m - 1, m - 1)
        let mut c: u128 = 1;
        for i in 1..m as u128 {
            c = c * (p as u128 + i) / i;
            if c > CAP {
                return Err(CoreError::TermCapExceeded {
                    m,
                    p,
                    terms: c,
                    cap: CAP,
                });
            }
        }
        c
    };
    static CACHE: OnceLock<IndexCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().unwrap().get(&(m, p)) {
        return Ok(hit.clone());
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut beta = vec![0u32; m];
    fn rec(beta: &mut Vec<u32>, pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if pos == beta.len() - 1 {
            beta[pos] = remaining;
            out.push(beta.clone());
            return;
        }
        for take in (0..=remaining).rev() {
            beta[pos] = take;
            rec(beta, pos + 1, remaining - take, out);
        }
    }
    rec(&mut beta, 0, p, &mut out);
    debug_assert_eq!(out.len() as u128, count);
    let arc = Arc::new(out);
    cache.lock().unwrap().insert((m, p), arc.clone());
    Ok(arc)
}

fn multinomial(p: u32, beta: &[u32]) -> f64 {
    let mut ln = ln_factorial(p);
    for &b in beta {
        ln -= ln_factorial(b);
    }
    ln.exp().round()
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n as u64).map(|k| (k as f64).ln()).sum()
}

/// Discrete Lp energy: quadrature over the domain of
/// sum over |beta| = p of multinomial(p, beta) * theta^(beta^2) * u^beta.
///
/// With theta identically one this collapses to the integral of
/// (sum_i u_i)^p by the multinomial theorem, which is the test oracle.
pub fn lp_energy(field: &Field, weights: &ThetaWeights) -> Result<f64> {
    let m = field.num_components();
    if weights.theta.len() != m {
        return Err(CoreError::invalid(
            "weights",
            format!("{} theta entries for {m} components", weights.theta.len()),
        ));
    }
    let p = weights.p;
    if p < 2 {
        return Err(CoreError::invalid("p", "energy order must be >= 2"));
    }
    let min = field.min_value();
    if min < -1e-10 {
        return Err(CoreError::invalid(
            "field",
            format!("components must be nonnegative within tolerance, min {min}"),
        ));
    }
    // Overflow guard: the largest term is bounded by
    // m^p * max(theta)^(p^2) * max(u)^p.
    let u_max = field.max_value().max(1.0);
    let theta_max = weights.theta.iter().fold(1.0f64, |a, &t| a.max(t));
    let ln_bound = (p as f64) * (m as f64).ln()
        + (p as f64) * (p as f64) * theta_max.ln()
        + (p as f64) * u_max.ln();
    if ln_bound > 690.0 {
        return Err(CoreError::EnergyOverflow(format!(
            "p = {p}, max |u| = {u_max:.3e}, max theta = {theta_max:.3e}"
        )));
    }

    let indices = multi_indices(m, p)?;
    // Per-index constant: multinomial * prod theta_i^(beta_i^2).
    let coeffs: Vec<f64> = indices
        .iter()
        .map(|beta| {
            let mut c = multinomial(p, beta);
            for (t, &b) in weights.theta.iter().zip(beta) {
                if b > 0 {
                    c *= t.powi((b * b) as i32);
                }
            }
            c
        })
        .collect();

    let grid = field.grid();
    let n = grid.num_nodes();
    let w = grid.cell_weights();
    let mut node_terms = Vec::with_capacity(n);
    for x in 0..n {
        let mut h = 0.0;
        for (beta, c) in indices.iter().zip(&coeffs) {
            let mut term = *c;
            for (comp, &b) in beta.iter().enumerate() {
                if b > 0 {
                    term *= field.component(comp)[x].powi(b as i32);
                }
            }
            h += term;
        }
        node_terms.push(w[x] * h);
    }
    Ok(neumaier_sum(node_terms.into_iter()))
}

/// Nonlocal dissipation functional: the double sum with both measures of
/// phi(x, y) (z(x) - z(y))^2. Nonnegative, zero on constants, quadratic
/// under scaling.
pub fn dissipation_y(op: &DiscreteNonlocalOperator, z: &[f64]) -> Result<f64> {
    let grid = op.grid();
    let n = grid.num_nodes();
    if z.len() != n {
        return Err(CoreError::GridMismatch(format!(
            "operator has {n} nodes, field has {}",
            z.len()
        )));
    }
    let c = grid.cell_weights();
    let mut terms = Vec::with_capacity(n);
    for p in 0..n {
        let mut row = 0.0;
        op.for_each_in_row(p, |q, w| {
            let dz = z[p] - z[q];
            row += w * dz * dz;
        });
        terms.push(c[p] * row);
    }
    Ok(neumaier_sum(terms.into_iter()))
}

/// Weighted mass sum_i a_i * integral of u_i.
pub fn weighted_mass(field: &Field, a: &[f64]) -> Result<f64> {
    let m = field.num_components();
    if a.len() != m {
        return Err(CoreError::invalid(
            "a",
            format!("{} weights for {m} components", a.len()),
        ));
    }
    if a.iter().any(|&w| !(w > 0.0)) {
        return Err(CoreError::invalid("a", "weights must be positive"));
    }
    Ok(a.iter()
        .enumerate()
        .map(|(i, &w)| w * integrate_field(field, i))
        .sum())
}
