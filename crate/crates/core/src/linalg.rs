//! Dense numerical kernels shared by the design and solver modules.
//!
//! The column-pivoted Householder QR is implemented here rather than taken
//! from a library because the pivot sequence itself is the product: design
//! selection consumes pivots in order, ties must resolve to the lowest
//! original column index, and the classical norm down-dating must be
//! re-computed once cancellation exceeds a factor of 100.

use nalgebra::{DMatrix, DVector};

/// Relative tolerance under which two candidate pivot norms are considered
/// tied; ties resolve to the lowest original column index.
const PIVOT_TIE_REL: f64 = 1e-10;

/// Column-pivoted QR factorization A·P = Q·R.
pub struct PivotedQr {
    /// R in the upper triangle, Householder tails below the diagonal.
    pub factors: DMatrix<f64>,
    pub taus: Vec<f64>,
    /// Full column permutation: the first `steps` entries are the pivot
    /// order; columns never reached (beyond the numerical rank) follow in
    /// ascending original order.
    pub pivots: Vec<usize>,
    /// Number of Householder steps performed.
    pub steps: usize,
    /// Diagonal of R for the performed steps, |r_00| ≥ |r_11| ≥ …
    pub r_diag: Vec<f64>,
}

/// Businger–Golub QR with column pivoting on the trailing column norms.
pub fn pivoted_qr(a: &DMatrix<f64>, max_steps: Option<usize>) -> PivotedQr {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let step_cap = max_steps.unwrap_or(usize::MAX).min(m).min(n);

    let mut col_at: Vec<usize> = (0..n).collect();
    let mut norms2 = vec![0.0f64; n];
    let mut ref_norms2 = vec![0.0f64; n];
    for j in 0..n {
        let s: f64 = work.column(j).iter().map(|v| v * v).sum();
        norms2[j] = s;
        ref_norms2[j] = s;
    }
    let max_init = norms2.iter().cloned().fold(0.0f64, f64::max);
    let zero_tol2 = {
        let t = f64::EPSILON * (m.max(n) as f64);
        max_init * t * t
    };

    let mut taus = Vec::with_capacity(step_cap);
    let mut r_diag = Vec::with_capacity(step_cap);
    let mut steps = 0;

    for k in 0..step_cap {
        // Largest trailing norm, then lowest original index among near-ties.
        let mut best = k;
        for j in (k + 1)..n {
            if norms2[j] > norms2[best] {
                best = j;
            }
        }
        if norms2[best] <= zero_tol2 {
            break;
        }
        let mut pivot = best;
        let cutoff = norms2[best] * (1.0 - PIVOT_TIE_REL);
        for j in k..n {
            if norms2[j] >= cutoff && col_at[j] < col_at[pivot] {
                pivot = j;
            }
        }
        if pivot != k {
            work.swap_columns(k, pivot);
            norms2.swap(k, pivot);
            ref_norms2.swap(k, pivot);
            col_at.swap(k, pivot);
        }

        // Householder reflector annihilating column k below the diagonal.
        let normx = {
            let mut s = 0.0;
            for i in k..m {
                s += work[(i, k)] * work[(i, k)];
            }
            s.sqrt()
        };
        if normx == 0.0 {
            taus.push(0.0);
            r_diag.push(0.0);
            steps += 1;
            continue;
        }
        let x0 = work[(k, k)];
        let alpha = if x0 >= 0.0 { -normx } else { normx };
        let v0 = x0 - alpha;
        let tau = -v0 / alpha;
        for i in (k + 1)..m {
            work[(i, k)] /= v0;
        }
        work[(k, k)] = alpha;

        for j in (k + 1)..n {
            let mut w = work[(k, j)];
            for i in (k + 1)..m {
                w += work[(i, k)] * work[(i, j)];
            }
            w *= tau;
            work[(k, j)] -= w;
            for i in (k + 1)..m {
                work[(i, j)] -= w * work[(i, k)];
            }
            // Down-date the trailing norm; recompute once cancellation
            // exceeds a factor of 100.
            let r = work[(k, j)];
            norms2[j] -= r * r;
            if norms2[j] <= ref_norms2[j] * 1e-4 {
                let mut s = 0.0;
                for i in (k + 1)..m {
                    s += work[(i, j)] * work[(i, j)];
                }
                norms2[j] = s;
                ref_norms2[j] = s;
            }
        }

        taus.push(tau);
        r_diag.push(alpha.abs());
        steps += 1;
    }

    let mut pivots = col_at[..steps].to_vec();
    let mut tail = col_at[steps..].to_vec();
    tail.sort_unstable();
    pivots.extend(tail);

    PivotedQr {
        factors: work,
        taus,
        pivots,
        steps,
        r_diag,
    }
}

/// Minimum-norm least-squares solve min ‖Ax − b‖₂.
///
/// Full-column-rank overdetermined systems take an unpivoted Householder QR
/// path; anything rank-deficient or underdetermined falls back to the SVD
/// pseudoinverse with tolerance max(m,n)·ε·σ_max, whose solution is the
/// minimum-norm one.
pub fn solve_ls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "solve_ls: rhs length mismatch");
    if n == 0 {
        return DVector::zeros(0);
    }
    if m >= n {
        if let Some(x) = solve_ls_qr(a, b) {
            return x;
        }
    }
    solve_ls_svd(a, b)
}

/// Householder-QR least squares; `None` when R is numerically rank-deficient.
fn solve_ls_qr(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (m, n) = a.shape();
    let mut work = a.clone();
    let mut rhs = b.clone();

    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let mut norm2 = 0.0;
        for i in k..m {
            norm2 += work[(i, k)] * work[(i, k)];
        }
        let normx = norm2.sqrt();
        if normx == 0.0 {
            return None;
        }
        let x0 = work[(k, k)];
        let alpha = if x0 >= 0.0 { -normx } else { normx };
        let v0 = x0 - alpha;
        let tau = -v0 / alpha;
        for i in (k + 1)..m {
            work[(i, k)] /= v0;
        }
        work[(k, k)] = alpha;
        diag.push(alpha.abs());

        for j in (k + 1)..n {
            let mut w = work[(k, j)];
            for i in (k + 1)..m {
                w += work[(i, k)] * work[(i, j)];
            }
            w *= tau;
            work[(k, j)] -= w;
            for i in (k + 1)..m {
                work[(i, j)] -= w * work[(i, k)];
            }
        }
        let mut w = rhs[k];
        for i in (k + 1)..m {
            w += work[(i, k)] * rhs[i];
        }
        w *= tau;
        rhs[k] -= w;
        for i in (k + 1)..m {
            rhs[i] -= w * work[(i, k)];
        }
    }

    let max_diag = diag.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_diag * f64::EPSILON * (m.max(n) as f64);
    if diag.iter().any(|&d| d <= tol) {
        return None;
    }

    let mut x = DVector::zeros(n);
    for k in (0..n).rev() {
        let mut s = rhs[k];
        for j in (k + 1)..n {
            s -= work[(k, j)] * x[j];
        }
        x[k] = s / work[(k, k)];
    }
    Some(x)
}

/// SVD pseudoinverse solve with rank tolerance max(m,n)·ε·σ_max.
pub fn solve_ls_svd(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = sigma_max * f64::EPSILON * (m.max(n) as f64);
    let u = svd.u.as_ref().expect("svd u requested");
    let v_t = svd.v_t.as_ref().expect("svd v_t requested");
    let mut x = DVector::zeros(n);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let coeff = u.column(i).dot(b) / s;
            x.axpy(coeff, &v_t.row(i).transpose(), 1.0);
        }
    }
    x
}

/// Residual of projecting the columns of `b` onto the range of `a`:
/// `E = b − A·A†·b`, computed as `(I − U_r U_rᵀ)·b` from the SVD of `a`.
///
/// Returns the residual together with the condition number of the retained
/// part of `a` (σ_max/σ_min over singular values above the rank tolerance).
pub fn projector_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (e, cond, _) = projector_residual_with_leverage(a, b);
    (e, cond)
}

/// As [`projector_residual`], additionally returning per-column leverage
/// scores bᵀ(AAᵀ)†b of the columns of `b` against the rows of `a` — the
/// relative determinant gain of adjoining that column as a row of `aᵀ`.
pub fn projector_residual_with_leverage(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> (DMatrix<f64>, f64, Vec<f64>) {
    let (m, n) = a.shape();
    assert_eq!(m, b.nrows(), "projector_residual: row mismatch");
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd u requested");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = sigma_max * f64::EPSILON * (m.max(n) as f64);
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let mut e = b.clone();
    let mut leverage = vec![0.0f64; b.ncols()];
    for &i in &kept {
        let ui = u.column(i);
        let sigma = svd.singular_values[i];
        // e -= u_i (u_iᵀ b), column by column
        for j in 0..b.ncols() {
            let coeff = ui.dot(&b.column(j));
            let mut col = e.column_mut(j);
            col.axpy(-coeff, &ui, 1.0);
            let whitened = coeff / sigma;
            leverage[j] += whitened * whitened;
        }
    }
    let sigma_min_kept = kept
        .iter()
        .map(|&i| svd.singular_values[i])
        .fold(f64::INFINITY, f64::min);
    let cond = if kept.is_empty() {
        f64::INFINITY
    } else {
        sigma_max / sigma_min_kept
    };
    (e, cond, leverage)
}

/// Singular values of `a`, descending.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    a.clone().singular_values()
}
