//! Greedy sparse recovery: least squares, subspace pursuit, cross-validated
//! sparsity selection, and the design-adaptive DSP variants.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::basis::BasisSpec;
use crate::design::{self, gather_cols, gather_rows, Design};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::SamplePool;

/// A sparse coefficient estimate together with solver diagnostics.
#[derive(Clone, Debug)]
pub struct SparseSolution {
    /// Length-P coefficient vector, zero outside `support`.
    pub coeffs: DVector<f64>,
    /// Active columns, ascending.
    pub support: Vec<usize>,
    /// Sparsity bound the solver ran with (final value when cross-validated).
    pub k_used: usize,
    /// ‖v_r‖ of the initialization and of every accepted iteration.
    pub residual_history: Vec<f64>,
    /// QoI evaluations consumed to produce this solution.
    pub n_model_evals: usize,
}

impl SparseSolution {
    /// Predicted values Φ·ĉ using only the support columns.
    pub fn predict(&self, phi: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(phi.nrows());
        for &s in &self.support {
            out.axpy(self.coeffs[s], &phi.column(s), 1.0);
        }
        out
    }
}

/// Least-squares approximation `argmin ‖Φc − v‖₂`, minimum-norm when the
/// system is rank deficient.
pub fn lsa(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if matrix.nrows() != rhs.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows, rhs has {}",
            matrix.nrows(),
            rhs.len()
        )));
    }
    Ok(linalg::solve_ls(matrix, rhs))
}

/// Indices of the k largest-magnitude entries, ties to the lowest index;
/// returned ascending.
fn top_k_abs(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        values[b]
            .abs()
            .partial_cmp(&values[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out: Vec<usize> = order.into_iter().take(k.min(values.len())).collect();
    out.sort_unstable();
    out
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}

/// Least squares on the support columns; returns the coefficients and the
/// residual v − Φ_S·c.
fn project_residual(
    phi: &DMatrix<f64>,
    v: &DVector<f64>,
    support: &[usize],
) -> (DVector<f64>, DVector<f64>) {
    let sub = gather_cols(phi, support);
    let c = linalg::solve_ls(&sub, v);
    let r = v - sub * &c;
    (c, r)
}

/// Map the k largest-magnitude entries of union-local coefficients back to
/// global column indices.
fn prune_to_k(c_union: &DVector<f64>, union: &[usize], k: usize) -> Vec<usize> {
    let local = top_k_abs(c_union.as_slice(), k);
    let mut out: Vec<usize> = local.into_iter().map(|i| union[i]).collect();
    out.sort_unstable();
    out
}

fn embed(coeff_s: &DVector<f64>, support: &[usize], p: usize) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (i, &s) in support.iter().enumerate() {
        out[s] = coeff_s[i];
    }
    out
}

/// Subspace pursuit with sparsity bound K on a fixed measurement matrix.
///
/// Initializes the support from the K largest correlations |Φᵀv|, then
/// alternates union-of-2K selection, least squares, and re-pruning to K,
/// stopping after P iterations or as soon as the residual norm stops
/// improving (an increase restores the previous support).
pub fn subspace_pursuit(k: usize, phi: &DMatrix<f64>, v: &DVector<f64>) -> Result<SparseSolution> {
    let (n, p) = phi.shape();
    if v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {n} rows, rhs has {}",
            v.len()
        )));
    }
    if k < 1 || 2 * k > n {
        return Err(Error::invalid(format!(
            "sparsity bound K = {k} outside 1 ≤ K ≤ ⌊N/2⌋ with N = {n}"
        )));
    }
    let k = k.min(p);

    let corr = phi.transpose() * v;
    let mut support = top_k_abs(corr.as_slice(), k);
    let (mut coeff_s, mut resid) = project_residual(phi, v, &support);
    let mut best = resid.norm();
    let mut history = vec![best];

    for iter in 1..=p {
        let corr = phi.transpose() * &resid;
        let extra = top_k_abs(corr.as_slice(), k);
        let union = merge_sorted(&support, &extra);
        let c_union = linalg::solve_ls(&gather_cols(phi, &union), v);
        let pruned = prune_to_k(&c_union, &union, k);
        let (c_new, r_new) = project_residual(phi, v, &pruned);
        let norm_new = r_new.norm();
        if norm_new > best {
            break; // keep the previous support
        }
        support = pruned;
        coeff_s = c_new;
        resid = r_new;
        history.push(norm_new);
        if iter == p || norm_new == best {
            break; // iteration cap, or no strict progress is possible
        }
        best = norm_new;
    }

    Ok(SparseSolution {
        coeffs: embed(&coeff_s, &support, p),
        support,
        k_used: k,
        residual_history: history,
        n_model_evals: n,
    })
}

/// Cross-validation controls: number of random splits per grid value and
/// grid size.
#[derive(Clone, Copy, Debug)]
pub struct CvParams {
    pub n_r: usize,
    pub n_k: usize,
}

impl Default for CvParams {
    fn default() -> Self {
        CvParams { n_r: 4, n_k: 10 }
    }
}

/// Outcome of the K cross-validation.
#[derive(Clone, Debug)]
pub struct CvResult {
    /// Selected sparsity bound (lowest grid value on ties).
    pub k: usize,
    pub grid: Vec<usize>,
    /// Mean held-out residual per grid value.
    pub mean_errors: Vec<f64>,
    /// Held-out rows per split, N − ⌊0.8N⌋.
    pub n_holdout: usize,
}

/// Estimates the sparsity bound K by averaging held-out residuals of
/// subspace-pursuit fits over random 80/20 row splits, for a grid of
/// linearly spaced K values in [1, ⌊N/2⌋].
pub fn cross_validate_k(
    phi: &DMatrix<f64>,
    v: &DVector<f64>,
    params: CvParams,
    rng: &mut ChaCha8Rng,
) -> Result<CvResult> {
    let n = phi.nrows();
    if v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {n} rows, rhs has {}",
            v.len()
        )));
    }
    if n < 5 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 5 rows, got {n}"
        )));
    }
    if params.n_r == 0 || params.n_k == 0 {
        return Err(Error::invalid("cross-validation needs N_R ≥ 1 and N_K ≥ 1"));
    }
    let n_retained = 4 * n / 5;
    let n_holdout = n - n_retained;
    if n_retained == 0 {
        return Err(Error::invalid("degenerate split: empty retained set"));
    }

    // Linearly spaced integer grid on [1, ⌊N/2⌋], deduplicated; values whose
    // 2K exceeds the retained row count cannot run subspace pursuit and are
    // clamped out.
    let k_max = n / 2;
    let mut grid: Vec<usize> = if params.n_k == 1 {
        vec![k_max.max(1)]
    } else {
        (0..params.n_k)
            .map(|i| {
                let t = i as f64 / (params.n_k - 1) as f64;
                (1.0 + t * (k_max.max(1) - 1) as f64).round() as usize
            })
            .collect()
    };
    grid.dedup();
    grid.retain(|&k| k >= 1 && 2 * k <= n_retained);
    if grid.is_empty() {
        grid.push(1);
    }

    let mut mean_errors = Vec::with_capacity(grid.len());
    for &k in &grid {
        let mut total = 0.0;
        for _ in 0..params.n_r {
            let holdout: Vec<usize> = {
                let mut h = rand::seq::index::sample(rng, n, n_holdout).into_vec();
                h.sort_unstable();
                h
            };
            let mut is_holdout = vec![false; n];
            for &i in &holdout {
                is_holdout[i] = true;
            }
            let retained: Vec<usize> = (0..n).filter(|&i| !is_holdout[i]).collect();
            let phi_r = gather_rows(phi, &retained);
            let v_r = DVector::from_fn(retained.len(), |i, _| v[retained[i]]);
            let sol = subspace_pursuit(k, &phi_r, &v_r)?;
            let mut err2 = 0.0;
            for &row in &holdout {
                let mut pred = 0.0;
                for &s in &sol.support {
                    pred += phi[(row, s)] * sol.coeffs[s];
                }
                let diff = pred - v[row];
                err2 += diff * diff;
            }
            total += err2.sqrt();
        }
        mean_errors.push(total / params.n_r as f64);
    }

    let mut best = 0;
    for i in 1..grid.len() {
        if mean_errors[i] < mean_errors[best] {
            best = i;
        }
    }
    Ok(CvResult {
        k: grid[best],
        grid,
        mean_errors,
        n_holdout,
    })
}

/// A candidate pool bundled with its weighted measurement matrix; the data
/// DSP selects rows from.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub points: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub phi: DMatrix<f64>,
}

impl CandidateSet {
    pub fn from_pool(spec: &BasisSpec, pool: &SamplePool) -> Result<Self> {
        let phi = spec.assemble_matrix(&pool.points, &pool.weights)?;
        Ok(CandidateSet {
            points: pool.points.clone(),
            weights: pool.weights.clone(),
            phi,
        })
    }

    pub fn from_parts(
        points: DMatrix<f64>,
        weights: DVector<f64>,
        phi: DMatrix<f64>,
    ) -> Result<Self> {
        if points.nrows() != weights.len() || points.nrows() != phi.nrows() {
            return Err(Error::ShapeMismatch(
                "points, weights, and phi must agree on the number of rows".into(),
            ));
        }
        Ok(CandidateSet {
            points,
            weights,
            phi,
        })
    }

    pub fn len(&self) -> usize {
        self.phi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().cloned().collect()
    }
}

/// Memoizing QoI oracle keyed by candidate-pool index. Each pool point is
/// evaluated at most once; repeated requests are cache hits.
pub struct PoolOracle<'a> {
    source: OracleSource<'a>,
    computed: Vec<Option<f64>>,
    n_evals: usize,
    cache_hits: usize,
}

enum OracleSource<'a> {
    Function(Box<dyn Fn(&[f64]) -> Result<f64> + 'a>),
    Table(Vec<f64>),
}

impl<'a> PoolOracle<'a> {
    pub fn from_fn(len: usize, f: impl Fn(&[f64]) -> Result<f64> + 'a) -> Self {
        PoolOracle {
            source: OracleSource::Function(Box::new(f)),
            computed: vec![None; len],
            n_evals: 0,
            cache_hits: 0,
        }
    }

    /// Pre-tabulated QoI values (manufactured problems); accesses are still
    /// counted as model evaluations for budget accounting.
    pub fn from_table(values: Vec<f64>) -> Self {
        let computed = vec![None; values.len()];
        PoolOracle {
            source: OracleSource::Table(values),
            computed,
            n_evals: 0,
            cache_hits: 0,
        }
    }

    pub fn value(&mut self, cand: &CandidateSet, idx: usize) -> Result<f64> {
        if let Some(v) = self.computed[idx] {
            self.cache_hits += 1;
            return Ok(v);
        }
        let v = match &self.source {
            OracleSource::Function(f) => f(&cand.point(idx))?,
            OracleSource::Table(t) => t[idx],
        };
        self.computed[idx] = Some(v);
        self.n_evals += 1;
        Ok(v)
    }

    pub fn n_evals(&self) -> usize {
        self.n_evals
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits
    }
}

enum KMode<'r> {
    Fixed(usize),
    Cv(CvParams, &'r mut ChaCha8Rng),
}

/// D-optimal subspace pursuit with a fixed sparsity bound.
///
/// Starts from a subset-selected design of N₀ = max(2K, ⌊0.8·N_max⌋) rows,
/// then augments the design by one D-optimally chosen point per iteration
/// (evaluating the oracle once per new point) until the budget N_max is
/// spent, after which it iterates like plain subspace pursuit. The
/// residual-increase exit is suppressed until the budget is exhausted.
pub fn dsp(
    k: usize,
    cand: &CandidateSet,
    n_max: usize,
    oracle: &mut PoolOracle<'_>,
) -> Result<SparseSolution> {
    dsp_impl(KMode::Fixed(k), cand, n_max, oracle)
}

/// DSP with cross-validated K: N₀ = ⌊0.8·N_max⌋ and K is re-estimated
/// whenever the design has grown since the previous iteration.
pub fn dsp_cv(
    cand: &CandidateSet,
    n_max: usize,
    oracle: &mut PoolOracle<'_>,
    params: CvParams,
    rng: &mut ChaCha8Rng,
) -> Result<SparseSolution> {
    dsp_impl(KMode::Cv(params, rng), cand, n_max, oracle)
}

fn dsp_impl(
    mut mode: KMode<'_>,
    cand: &CandidateSet,
    n_max: usize,
    oracle: &mut PoolOracle<'_>,
) -> Result<SparseSolution> {
    let m = cand.len();
    let p = cand.phi.ncols();
    if n_max > m {
        return Err(Error::invalid(format!(
            "budget N_max = {n_max} exceeds the candidate pool size {m}"
        )));
    }
    let n0 = match mode {
        KMode::Fixed(k) => {
            if k < 1 {
                return Err(Error::invalid("sparsity bound K must be at least 1"));
            }
            if 2 * k > n_max {
                return Err(Error::invalid(format!(
                    "budget N_max = {n_max} is below 2K = {}",
                    2 * k
                )));
            }
            (2 * k).max(4 * n_max / 5)
        }
        KMode::Cv(..) => {
            let n0 = 4 * n_max / 5;
            if n0 < 5 {
                return Err(Error::invalid(format!(
                    "budget N_max = {n_max} is too small to cross-validate K"
                )));
            }
            n0
        }
    };

    let initial = design::subset_select(&cand.phi, n0)?;
    let mut rows = initial.indices().to_vec();
    let mut phi_n = gather_rows(&cand.phi, &rows);
    let mut v = DVector::from_vec(
        rows.iter()
            .map(|&i| Ok(cand.weights[i] * oracle.value(cand, i)?))
            .collect::<Result<Vec<f64>>>()?,
    );

    let mut k = match &mut mode {
        KMode::Fixed(k) => *k,
        KMode::Cv(params, rng) => cross_validate_k(&phi_n, &v, *params, rng)?.k,
    };
    k = k.min(p);

    let corr = phi_n.transpose() * &v;
    let mut support = top_k_abs(corr.as_slice(), k);
    let (_, mut resid) = project_residual(&phi_n, &v, &support);
    let mut best = resid.norm();
    let mut history = vec![best];
    let mut prev_start_len = v.len();

    let max_iter = p + (n_max - n0) + 1;
    for iter in 1..=max_iter {
        let n_now = v.len();
        if let KMode::Cv(params, rng) = &mut mode {
            if iter > 1 && n_now != prev_start_len {
                k = cross_validate_k(&phi_n, &v, *params, rng)?.k.min(p);
            }
        }
        prev_start_len = n_now;

        let corr = phi_n.transpose() * &resid;
        let extra = top_k_abs(corr.as_slice(), k);
        let union = merge_sorted(&support, &extra);
        let c_union = linalg::solve_ls(&gather_cols(&phi_n, &union), &v);
        let pruned = prune_to_k(&c_union, &union, k);

        if n_now < n_max {
            let current = Design::new(rows.clone(), m)?;
            let grown = design::augment(&current, &cand.phi, &pruned, 1)?;
            let new_row = *grown.indices().last().expect("augment appends one row");
            rows.push(new_row);
            let old = phi_n;
            phi_n = DMatrix::zeros(old.nrows() + 1, p);
            phi_n.view_mut((0, 0), (old.nrows(), p)).copy_from(&old);
            for j in 0..p {
                phi_n[(old.nrows(), j)] = cand.phi[(new_row, j)];
            }
            let u = oracle.value(cand, new_row)?;
            v = v.push(cand.weights[new_row] * u);
        }

        let (_, r_new) = project_residual(&phi_n, &v, &pruned);
        let norm_new = r_new.norm();
        let budget_spent = v.len() == n_max;
        let exit_allowed = iter + n0 >= n_max + 1;

        if norm_new > best && exit_allowed {
            break; // keep the previous support
        }
        support = pruned;
        resid = r_new;
        history.push(norm_new);
        if budget_spent && (iter >= p || (norm_new == best && exit_allowed)) {
            break;
        }
        best = best.min(norm_new);
    }

    let (coeff_s, _) = project_residual(&phi_n, &v, &support);
    Ok(SparseSolution {
        coeffs: embed(&coeff_s, &support, p),
        support,
        k_used: k,
        residual_history: history,
        n_model_evals: oracle.n_evals(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Family;
    use crate::sampling::{sample_coherence_optimal, McmcParams, RngStream};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal))
    }

    fn sparse_signal(rng: &mut ChaCha8Rng, p: usize, s: usize) -> (DVector<f64>, Vec<usize>) {
        let mut support = rand::seq::index::sample(rng, p, s).into_vec();
        support.sort_unstable();
        let mut c = DVector::zeros(p);
        for &i in &support {
            c[i] = rng.sample(StandardNormal);
        }
        (c, support)
    }

    #[test]
    fn lsa_examples() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 3.0]);
        assert_relative_eq!(lsa(&a, &b).unwrap()[0], 2.0, max_relative = 1e-14);
        assert!(lsa(&a, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn sp_recovers_on_identity_matrix_in_one_iteration() {
        let phi = DMatrix::identity(10, 10);
        let mut v = DVector::zeros(10);
        v[2] = 1.5;
        v[5] = -0.75;
        v[9] = 3.0;
        let sol = subspace_pursuit(3, &phi, &v).unwrap();
        assert_eq!(sol.support, vec![2, 5, 9]);
        assert_relative_eq!(sol.coeffs, v, max_relative = 1e-14);
        // Initialization plus a single stagnant iteration.
        assert!(sol.residual_history.len() <= 2);
    }

    #[test]
    fn sp_recovers_gaussian_compressed_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let phi = random_matrix(&mut rng, 40, 80);
        let mut truth = DVector::zeros(80);
        for &i in &[7usize, 23, 61] {
            truth[i] = 1.0;
        }
        let v = &phi * &truth;
        let sol = subspace_pursuit(3, &phi, &v).unwrap();
        assert_eq!(sol.support, vec![7, 23, 61]);
        assert!((sol.coeffs - truth).norm() < 1e-10);
    }

    #[test]
    fn sp_zero_rhs_terminates_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let phi = random_matrix(&mut rng, 12, 20);
        let sol = subspace_pursuit(4, &phi, &DVector::zeros(12)).unwrap();
        assert_eq!(sol.coeffs, DVector::zeros(20));
        assert_eq!(sol.residual_history.len(), 2);
    }

    #[test]
    fn sp_validates_k_range() {
        let phi = DMatrix::identity(10, 10);
        let v = DVector::from_element(10, 1.0);
        assert!(subspace_pursuit(0, &phi, &v).is_err());
        assert!(subspace_pursuit(6, &phi, &v).is_err());
        assert!(subspace_pursuit(5, &phi, &v).is_ok());
    }

    #[test]
    fn sp_support_size_and_residual_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        for _ in 0..20 {
            let phi = random_matrix(&mut rng, 30, 50);
            let (truth, _) = sparse_signal(&mut rng, 50, 5);
            let noise = DVector::from_fn(30, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v = &phi * &truth + noise * 0.05;
            let k = rng.random_range(1..=10);
            let sol = subspace_pursuit(k, &phi, &v).unwrap();
            assert_eq!(sol.support.len(), k.min(50));
            for w in sol.residual_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn sp_is_column_permutation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        let phi = random_matrix(&mut rng, 24, 40);
        let (truth, _) = sparse_signal(&mut rng, 40, 4);
        let v = &phi * &truth;
        let sol = subspace_pursuit(4, &phi, &v).unwrap();

        // Reverse the column order.
        let perm: Vec<usize> = (0..40).rev().collect();
        let phi_p = gather_cols(&phi, &perm);
        let sol_p = subspace_pursuit(4, &phi_p, &v).unwrap();
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_relative_eq!(
                sol_p.coeffs[new_col],
                sol.coeffs[old_col],
                max_relative = 1e-12,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn cv_finds_the_exact_sparsity_on_clean_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(113);
        let phi = random_matrix(&mut rng, 60, 40);
        let (truth, _) = sparse_signal(&mut rng, 40, 3);
        let v = &phi * &truth;
        let res = cross_validate_k(&phi, &v, CvParams::default(), &mut rng).unwrap();
        let sol = {
            let mut split_rng = ChaCha8Rng::seed_from_u64(1);
            let _ = &mut split_rng;
            subspace_pursuit(res.k, &phi, &v).unwrap()
        };
        let heldout_proxy = (&v - sol.predict(&phi)).norm();
        assert!(heldout_proxy < 1e-8, "residual {heldout_proxy}");
        // The K = 3 cell, when present, is never beaten by more than
        // numerical noise.
        if let Some(pos) = res.grid.iter().position(|&k| k == 3) {
            let best = res
                .mean_errors
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(res.mean_errors[pos] <= best + 1e-8);
        }
    }

    #[test]
    fn cv_split_sizes_follow_the_eighty_twenty_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(127);
        let phi = random_matrix(&mut rng, 10, 6);
        let v = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let res = cross_validate_k(&phi, &v, CvParams::default(), &mut rng).unwrap();
        assert_eq!(res.n_holdout, 2);
        assert!(res.grid.iter().all(|&k| 2 * k <= 8));
    }

    #[test]
    fn cv_picks_k_one_for_single_atom_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(131);
        // Column 0 is constant; the rhs is spanned by it alone.
        let mut phi = random_matrix(&mut rng, 30, 10);
        for i in 0..30 {
            phi[(i, 0)] = 1.0;
        }
        let v = DVector::from_element(30, 2.5);
        let res = cross_validate_k(&phi, &v, CvParams::default(), &mut rng).unwrap();
        // The K = 1 cell attains near-zero validation error; larger K can
        // tie at noise level because the fit stays exact.
        let pos = res.grid.iter().position(|&k| k == 1).unwrap();
        assert!(res.mean_errors[pos] < 1e-10);
        let chosen = res.grid.iter().position(|&k| k == res.k).unwrap();
        assert!(res.mean_errors[chosen] < 1e-10);
    }

    #[test]
    fn cv_rejects_tiny_systems() {
        let phi = DMatrix::identity(4, 4);
        let v = DVector::from_element(4, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(cross_validate_k(&phi, &v, CvParams::default(), &mut rng).is_err());
    }

    /// Builds a coherence-optimal candidate set for a manufactured sparse
    /// Hermite problem.
    fn manufactured_candidates(
        seed: u64,
        d: usize,
        p_order: usize,
        m: usize,
        s: usize,
    ) -> (CandidateSet, DVector<f64>, Vec<usize>, Vec<f64>) {
        let spec = BasisSpec::new(Family::Hermite, d, p_order).unwrap();
        let pool = sample_coherence_optimal(
            &spec,
            m,
            RngStream::new(seed, 0),
            McmcParams::default(),
        )
        .unwrap();
        let cand = CandidateSet::from_pool(&spec, &pool).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let (truth, support) = sparse_signal(&mut rng, spec.len(), s);
        // Noise-free unweighted QoI values per pool row.
        let psi = spec.assemble_unweighted(&pool.points).unwrap();
        let u: Vec<f64> = (0..m).map(|i| psi.row(i).transpose().dot(&truth)).collect();
        (cand, truth, support, u)
    }

    #[test]
    fn dsp_with_degenerate_budget_equals_subspace_pursuit() {
        let (cand, _truth, _support, u) = manufactured_candidates(7, 2, 5, 120, 3);
        let k = 5;
        let n_max = 2 * k; // max(2K, ⌊0.8·N⌋) = N: growth never happens
        let mut oracle = PoolOracle::from_table(u.clone());
        let sol_dsp = dsp(k, &cand, n_max, &mut oracle).unwrap();
        assert_eq!(oracle.n_evals(), n_max);

        let initial = design::subset_select(&cand.phi, n_max).unwrap();
        let phi_n = initial.select_rows(&cand.phi);
        let v = DVector::from_vec(
            initial
                .indices()
                .iter()
                .map(|&i| cand.weights[i] * u[i])
                .collect::<Vec<_>>(),
        );
        let sol_sp = subspace_pursuit(k, &phi_n, &v).unwrap();
        assert_eq!(sol_dsp.support, sol_sp.support);
        assert_relative_eq!(sol_dsp.coeffs, sol_sp.coeffs, max_relative = 1e-12, epsilon = 1e-14);
    }

    #[test]
    fn dsp_consumes_exactly_the_budget_and_recovers() {
        let (cand, truth, support, u) = manufactured_candidates(11, 2, 5, 210, 3);
        let n_max = 30;
        let mut oracle = PoolOracle::from_table(u);
        let sol = dsp(3, &cand, n_max, &mut oracle).unwrap();
        assert_eq!(oracle.n_evals(), n_max); // N_0 = 24 < 30: one eval per growth
        assert_eq!(oracle.cache_hits(), 0);
        assert_eq!(sol.n_model_evals, n_max);
        assert_eq!(sol.support, support);
        let rel = (&sol.coeffs - &truth).norm() / truth.norm();
        assert!(rel < 1e-8, "relative coefficient error {rel}");
    }

    #[test]
    fn dsp_validates_budget() {
        let (cand, _, _, u) = manufactured_candidates(13, 2, 3, 40, 2);
        let mut oracle = PoolOracle::from_table(u);
        assert!(dsp(8, &cand, 10, &mut oracle).is_err()); // 2K > N_max
        let mut oracle2 = PoolOracle::from_table(vec![0.0; 40]);
        assert!(dsp(2, &cand, 41, &mut oracle2).is_err()); // budget > pool
    }

    #[test]
    fn dsp_cv_budget_audit_over_many_trials() {
        for trial in 0..100 {
            let (cand, _truth, _support, u) = manufactured_candidates(200 + trial, 2, 4, 60, 3);
            let n_max = 20 + (trial as usize % 3) * 5;
            let mut oracle = PoolOracle::from_table(u);
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let sol = dsp_cv(&cand, n_max, &mut oracle, CvParams::default(), &mut rng).unwrap();
            assert!(oracle.n_evals() <= n_max);
            assert_eq!(oracle.n_evals(), n_max); // N_0 = ⌊0.8·N⌋ < N always
            assert_eq!(oracle.cache_hits(), 0);
            assert_eq!(sol.n_model_evals, n_max);
        }
    }

    #[test]
    fn dsp_cv_recovers_support_on_nearly_all_seeds() {
        let mut hits = 0;
        let trials = 100;
        for trial in 0..trials {
            let (cand, truth, support, u) = manufactured_candidates(1000 + trial, 2, 5, 210, 3);
            let mut oracle = PoolOracle::from_table(u);
            let mut rng = ChaCha8Rng::seed_from_u64(9000 + trial);
            let sol = dsp_cv(&cand, 30, &mut oracle, CvParams::default(), &mut rng).unwrap();
            let recovered = support.iter().all(|s| sol.support.contains(s));
            let rel = (&sol.coeffs - &truth).norm() / truth.norm();
            if recovered && rel < 1e-8 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "exact recovery in only {hits}/{trials} trials");
    }
}
