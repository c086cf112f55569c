//! Small dense/matrix-free linear algebra helpers used by the operators and
//! the implicit integrator.

/// Neumaier compensated summation.
///
/// The double-sum operator identities are checked against residual budgets
/// of 1e-11 times scale at up to ~1e7 terms, which naive accumulation does
/// not reliably meet.
pub fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// axpy: y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone, Copy)]
pub struct GmresResult {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Unpreconditioned GMRES with Givens rotations, matrix-free.
///
/// Solves A x = b where `apply` computes A v. Returns the approximate
/// solution together with iteration statistics. The iteration is fully
/// deterministic: no randomized starts, fixed reduction order.
pub fn gmres<F>(
    apply: F,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, GmresResult)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            GmresResult {
                iterations: 0,
                residual_norm: 0.0,
                converged: true,
            },
        );
    }
    let m = max_iter.min(n);
    // Krylov basis, Hessenberg (column-major, m+1 rows), Givens pairs.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut cs = vec![0.0f64; m];
    let mut sn = vec![0.0f64; m];
    let mut g = vec![0.0f64; m + 1];
    g[0] = b_norm;

    basis.push(b.iter().map(|x| x / b_norm).collect());

    let mut k_used = 0;
    let mut res = b_norm;
    for k in 0..m {
        let mut w = apply(&basis[k]);
        let mut h_col = vec![0.0f64; k + 2];
        // Modified Gram-Schmidt.
        for (i, v) in basis.iter().enumerate() {
            let hik = dot(&w, v);
            h_col[i] = hik;
            axpy(-hik, v, &mut w);
        }
        let h_next = norm2(&w);
        h_col[k + 1] = h_next;

        // Apply accumulated rotations to the new column.
        for i in 0..k {
            let tmp = cs[i] * h_col[i] + sn[i] * h_col[i + 1];
            h_col[i + 1] = -sn[i] * h_col[i] + cs[i] * h_col[i + 1];
            h_col[i] = tmp;
        }
        let denom = (h_col[k] * h_col[k] + h_col[k + 1] * h_col[k + 1]).sqrt();
        if denom > 0.0 {
            cs[k] = h_col[k] / denom;
            sn[k] = h_col[k + 1] / denom;
        } else {
            cs[k] = 1.0;
            sn[k] = 0.0;
        }
        h_col[k] = cs[k] * h_col[k] + sn[k] * h_col[k + 1];
        h_col[k + 1] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];
        hess.push(h_col);
        k_used = k + 1;
        res = g[k + 1].abs();

        if res <= rel_tol * b_norm || h_next == 0.0 {
            break;
        }
        for x in w.iter_mut() {
            *x /= h_next;
        }
        basis.push(w);
    }

    // Back substitution on the triangular system.
    let mut y = vec![0.0f64; k_used];
    for i in (0..k_used).rev() {
        let mut s = g[i];
        for (j, yj) in y.iter().enumerate().take(k_used).skip(i + 1) {
            s -= hess[j][i] * yj;
        }
        y[i] = s / hess[i][i];
    }
    let mut x = vec![0.0f64; n];
    for (j, yj) in y.iter().enumerate() {
        axpy(*yj, &basis[j], &mut x);
    }
    let converged = res <= rel_tol * b_norm;
    (
        x,
        GmresResult {
            iterations: k_used,
            residual_norm: res,
            converged,
        },
    )
}

/// Least-squares slope of y against x.
///
/// Returns (slope, intercept, rms residual).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - (slope * xi + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}
