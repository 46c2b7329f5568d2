//! D-optimal design selection from candidate measurement matrices.
//!
//! Designs are ordered row subsets of a candidate matrix Φ_c. Selection
//! runs column-pivoted QR on Φ_cᵀ and reads the design off the pivot order;
//! subset selection first projects onto the leading right-singular
//! subspace. Sequential augmentation ranks candidate rows by the norm of
//! their component outside the span of the current design rows, restricted
//! to the active support columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// An ordered list of distinct candidate-row indices (0-based internally;
/// the CLI emits 1-based indices).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Design {
    indices: Vec<usize>,
    n_candidates: usize,
}

impl Design {
    pub fn new(indices: Vec<usize>, n_candidates: usize) -> Result<Self> {
        let mut seen = vec![false; n_candidates];
        for &i in &indices {
            if i >= n_candidates {
                return Err(Error::invalid(format!(
                    "design index {i} out of range for {n_candidates} candidates"
                )));
            }
            if seen[i] {
                return Err(Error::invalid(format!("duplicate design index {i}")));
            }
            seen[i] = true;
        }
        Ok(Design {
            indices,
            n_candidates,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.contains(&idx)
    }

    /// Gathers the design rows of `phi_c` in design order.
    pub fn select_rows(&self, phi_c: &DMatrix<f64>) -> DMatrix<f64> {
        gather_rows(phi_c, &self.indices)
    }
}

pub(crate) fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub(crate) fn gather_cols(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Information matrix M = ΦᵀΦ/N of a design matrix.
#[derive(Clone, Debug)]
pub struct InfoMatrix {
    pub matrix: DMatrix<f64>,
    pub n_rows: usize,
}

impl InfoMatrix {
    pub fn from_design_matrix(phi_n: &DMatrix<f64>) -> Result<Self> {
        let n = phi_n.nrows();
        if n == 0 {
            return Err(Error::Empty("information matrix of an empty design".into()));
        }
        let matrix = phi_n.transpose() * phi_n / n as f64;
        Ok(InfoMatrix { matrix, n_rows: n })
    }
}

/// φ_D(M) = |det M|^{1/K} through the log singular values; 0 when M is
/// numerically rank deficient.
pub fn phi_d(info: &InfoMatrix) -> Result<f64> {
    let m = &info.matrix;
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "information matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sigma = linalg::singular_values(m);
    let k = sigma.len();
    if k == 0 {
        return Err(Error::Empty("0x0 information matrix".into()));
    }
    let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
    let tol = sigma_max * f64::EPSILON * (k as f64);
    if sigma.iter().any(|&s| s <= tol) {
        return Ok(0.0);
    }
    let mean_log: f64 = sigma.iter().map(|s| s.ln()).sum::<f64>() / k as f64;
    Ok(mean_log.exp())
}

/// φ_D applied to M/‖M‖_F; scale-invariant version used when comparing
/// designs across sampling strategies with different weight scales.
pub fn phi_d_normalized(info: &InfoMatrix) -> Result<f64> {
    let fro = info.matrix.norm();
    if fro == 0.0 {
        return Err(Error::Singular(
            "cannot normalize a zero information matrix".into(),
        ));
    }
    let scaled = InfoMatrix {
        matrix: &info.matrix / fro,
        n_rows: info.n_rows,
    };
    phi_d(&scaled)
}

/// N-point D-optimal design: column-pivoted QR of Φ_cᵀ, design = first N
/// pivots.
pub fn rrqr_select(phi_c: &DMatrix<f64>, n: usize) -> Result<Design> {
    let m = phi_c.nrows();
    if n > m {
        return Err(Error::invalid(format!(
            "cannot select {n} rows from {m} candidates"
        )));
    }
    let qr = linalg::pivoted_qr(&phi_c.transpose(), None);
    Design::new(qr.pivots[..n].to_vec(), m)
}

/// Subset selection: SVD of Φ_cᵀ, then column-pivoted QR of the transposed
/// leading right-singular vectors. Tends to give better-conditioned
/// design matrices than RRQR alone.
pub fn subset_select(phi_c: &DMatrix<f64>, n: usize) -> Result<Design> {
    let m = phi_c.nrows();
    if n > m {
        return Err(Error::invalid(format!(
            "cannot select {n} rows from {m} candidates"
        )));
    }
    let svd = phi_c.transpose().svd(false, true);
    // Rows of V^T are the right-singular vectors of Φ_cᵀ; nalgebra orders
    // the singular values descending, so this is V(:,1:P)^T directly.
    let v_t = svd.v_t.expect("svd v_t requested");
    let qr = linalg::pivoted_qr(&v_t, None);
    Design::new(qr.pivots[..n].to_vec(), m)
}

/// Appends `n_add` rows to the design, chosen by column-pivoted QR on the
/// residual of the support-restricted candidate rows against the span of
/// the support-restricted design rows.
///
/// Candidate rows whose residual is at noise level relative to their own
/// norm carry no selectable information; they rank after all genuine
/// residual columns, in ascending index order. When the design rows span
/// the whole restricted space (the usual full-rank case) every candidate is
/// in-span and augmentation therefore appends the lowest unused indices.
pub fn augment(
    design: &Design,
    phi_c: &DMatrix<f64>,
    support: &[usize],
    n_add: usize,
) -> Result<Design> {
    let m = phi_c.nrows();
    if design.n_candidates() != m {
        return Err(Error::ShapeMismatch(format!(
            "design indexes {} candidates but the matrix has {m} rows",
            design.n_candidates()
        )));
    }
    if design.is_empty() {
        return Err(Error::invalid("cannot augment an empty design"));
    }
    if support.is_empty() {
        return Err(Error::invalid("support set must be non-empty"));
    }
    if support.iter().any(|&k| k >= phi_c.ncols()) {
        return Err(Error::invalid("support index out of range"));
    }
    let unused = m - design.len();
    if n_add > unused {
        return Err(Error::invalid(format!(
            "requested {n_add} new rows but only {unused} candidates are unused"
        )));
    }

    // Φ̃_Nᵀ (K×N) and Φ̃_cᵀ (K×M): support columns of design and candidates.
    let phi_n_restricted = gather_cols(&design.select_rows(phi_c), support);
    let phi_c_restricted = gather_cols(phi_c, support);
    let a_t = phi_n_restricted.transpose();
    let b_t = phi_c_restricted.transpose();
    let (residual, cond, leverage) = linalg::projector_residual_with_leverage(&a_t, &b_t);
    if !cond.is_finite() {
        log::warn!("augment: support-restricted design has numerical rank 0");
    } else if cond > 1e8 {
        log::warn!("augment: support-restricted design is near rank-deficient (cond {cond:.3e})");
    }

    // Split candidates into genuine-residual and in-span (noise) columns.
    let k = support.len();
    let n_rows = design.len();
    let dims = n_rows.max(k).max(m) as f64;
    let cond_capped = if cond.is_finite() { cond } else { 1.0 };
    let mut live = Vec::new();
    let mut dead = Vec::new();
    for j in 0..m {
        let col_norm = b_t.column(j).norm();
        let res_norm = residual.column(j).norm();
        let tol = (50.0 * dims * f64::EPSILON * cond_capped * col_norm).min(0.01 * col_norm);
        if res_norm > tol {
            live.push(j);
        } else {
            dead.push(j);
        }
    }

    let mut ranked = Vec::with_capacity(m);
    if !live.is_empty() {
        let live_matrix = gather_cols(&residual, &live);
        let qr = linalg::pivoted_qr(&live_matrix, None);
        ranked.extend(qr.pivots.iter().map(|&p| live[p]));
    }
    // In-span candidates carry no residual information; order them by the
    // D-optimality gain of a single-row addition (the leverage of the
    // candidate row on the restricted design), ties to the lowest index.
    let mut dead_ranked = dead;
    dead_ranked.sort_by(|&a, &b| {
        leverage[b]
            .partial_cmp(&leverage[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    ranked.extend(dead_ranked);

    let mut indices = design.indices().to_vec();
    let mut added = 0;
    for idx in ranked {
        if added == n_add {
            break;
        }
        if !design.contains(idx) {
            indices.push(idx);
            added += 1;
        }
    }
    debug_assert_eq!(added, n_add);
    Design::new(indices, m)
}

/// Right-hand side of the pivot-exchange determinant identity: for the
/// partial triangular factor R = [A B; 0 C] with A upper-triangular and
/// positive on the diagonal, exchanging column i of the A-block with
/// column j of the C-block changes det(A) by the factor
/// √((A⁻¹B)²_{i,j} + (‖C(:,j)‖₂·‖A⁻¹(i,:)‖₂)²).
///
/// `i` and `j` are 0-based.
pub fn det_ratio_check(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::ShapeMismatch("A must be square".into()));
    }
    if b.nrows() != p {
        return Err(Error::ShapeMismatch("B must have as many rows as A".into()));
    }
    if b.ncols() != c.ncols() {
        return Err(Error::ShapeMismatch(
            "B and C must have the same number of columns".into(),
        ));
    }
    for k in 0..p {
        for l in 0..k {
            if a[(k, l)] != 0.0 {
                return Err(Error::invalid("A must be upper triangular"));
            }
        }
        if a[(k, k)] <= 0.0 {
            return Err(Error::Singular(format!(
                "A must have positive diagonal entries, found {} at {k}",
                a[(k, k)]
            )));
        }
    }
    if i >= p || j >= b.ncols() {
        return Err(Error::invalid("exchange indices out of range"));
    }

    // (A⁻¹B)_{i,j} via one triangular solve of A x = B(:,j).
    let bj = b.column(j).into_owned();
    let x = solve_upper_triangular(a, &bj)?;
    let ab_ij = x[i];

    // ‖A⁻¹(i,:)‖₂ via Aᵀ y = e_i (forward substitution on the transpose).
    let mut ei = DVector::zeros(p);
    ei[i] = 1.0;
    let y = solve_upper_triangular_transposed(a, &ei)?;
    let row_norm = y.norm();

    let c_norm = c.column(j).norm();
    Ok((ab_ij * ab_ij + (c_norm * row_norm) * (c_norm * row_norm)).sqrt())
}

fn solve_upper_triangular(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut x = b.clone();
    for k in (0..n).rev() {
        for j in (k + 1)..n {
            let xj = x[j];
            x[k] -= a[(k, j)] * xj;
        }
        if a[(k, k)] == 0.0 {
            return Err(Error::Singular("zero diagonal in triangular solve".into()));
        }
        x[k] /= a[(k, k)];
    }
    Ok(x)
}

fn solve_upper_triangular_transposed(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let mut x = b.clone();
    for k in 0..n {
        for j in 0..k {
            let xj = x[j];
            x[k] -= a[(j, k)] * xj;
        }
        if a[(k, k)] == 0.0 {
            return Err(Error::Singular("zero diagonal in triangular solve".into()));
        }
        x[k] /= a[(k, k)];
    }
    Ok(x)
}
