//! Total-order multivariate orthonormal polynomial bases.
//!
//! A basis is the tensorization of univariate Legendre or Hermite
//! polynomials, truncated to total order `p` in `d` variables, which gives
//! `P = C(p+d, d)` basis functions. Univariate polynomials are evaluated by
//! their three-term recurrences and normalized to unit second moment under
//! the orthogonality measure: uniform on [-1,1] for Legendre, standard
//! Gaussian (probabilists' convention) for Hermite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Polynomial family, fixed by the distribution of the inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Orthonormal under the uniform density on [-1, 1].
    Legendre,
    /// Probabilists' Hermite, orthonormal under the standard Gaussian.
    Hermite,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Legendre => write!(f, "legendre"),
            Family::Hermite => write!(f, "hermite"),
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "legendre" => Ok(Family::Legendre),
            "hermite" => Ok(Family::Hermite),
            other => Err(Error::Parse(format!("unknown polynomial family `{other}`"))),
        }
    }
}

/// A total-order basis: family, dimension, order, and the induced
/// multi-index set in graded lexicographic order.
///
/// Column `k` of any matrix assembled from this spec always refers to
/// `multi_indices()[k]`, across runs and platforms.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    family: Family,
    dim: usize,
    order: usize,
    indices: Vec<Vec<u32>>,
}

impl BasisSpec {
    /// Builds the basis for `dim ≥ 1` input variables and total order `order`.
    pub fn new(family: Family, dim: usize, order: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("basis dimension d must be at least 1"));
        }
        let count = binomial(order + dim, dim).ok_or(Error::BasisTooLarge {
            n: order + dim,
            k: dim,
        })?;
        let count: usize = count
            .try_into()
            .map_err(|_| Error::BasisTooLarge { n: order + dim, k: dim })?;
        let indices = multi_index_set(dim, order);
        debug_assert_eq!(indices.len(), count);
        Ok(BasisSpec {
            family,
            dim,
            order,
            indices,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Stochastic dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total order p.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis polynomials P = C(p+d, d).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Multi-index set in graded lexicographic order.
    pub fn multi_indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "point has {} coordinates, basis dimension is {}",
                point.len(),
                self.dim
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("point has non-finite coordinates"));
        }
        if self.family == Family::Legendre {
            for (i, &x) in point.iter().enumerate() {
                if !(-1.0..=1.0).contains(&x) {
                    return Err(Error::domain(format!(
                        "Legendre coordinate {i} = {x} outside [-1, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates all P basis polynomials at `point`.
    pub fn eval_row(&self, point: &[f64]) -> Result<DVector<f64>> {
        self.check_point(point)?;
        let mut table = UnivariateTable::new(self.dim, self.order);
        let mut row = DVector::zeros(self.len());
        self.eval_into(point, &mut table, row.as_mut_slice());
        Ok(row)
    }

    /// B(ξ): the ℓ₂ norm of the evaluated basis row. At least 1 everywhere
    /// because the constant polynomial contributes 1.
    pub fn row_norm(&self, point: &[f64]) -> Result<f64> {
        let row = self.eval_row(point)?;
        Ok(row.norm())
    }

    /// Assembles the weighted measurement matrix Φ = WΨ with
    /// `Φ(i, k) = weights[i] · ψ_k(points.row(i))`.
    pub fn assemble_matrix(
        &self,
        points: &DMatrix<f64>,
        weights: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        if points.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "points have {} columns, basis dimension is {}",
                points.ncols(),
                self.dim
            )));
        }
        if points.nrows() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("weights must be strictly positive"));
        }
        let n = points.nrows();
        let p = self.len();
        let mut table = UnivariateTable::new(self.dim, self.order);
        let mut point = vec![0.0; self.dim];
        let mut row = vec![0.0; p];
        let mut out = DMatrix::zeros(n, p);
        for i in 0..n {
            for j in 0..self.dim {
                point[j] = points[(i, j)];
            }
            self.check_point(&point)?;
            self.eval_into(&point, &mut table, &mut row);
            let w = weights[i];
            for k in 0..p {
                out[(i, k)] = w * row[k];
            }
        }
        Ok(out)
    }

    /// Unweighted variant of [`assemble_matrix`](Self::assemble_matrix).
    pub fn assemble_unweighted(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let ones = DVector::from_element(points.nrows(), 1.0);
        self.assemble_matrix(points, &ones)
    }

    /// Fills `out` with the P basis values at `point`. Coordinates are
    /// assumed validated.
    fn eval_into(&self, point: &[f64], table: &mut UnivariateTable, out: &mut [f64]) {
        for (j, &x) in point.iter().enumerate() {
            eval_univariate(self.family, self.order, x, table.coord_mut(j));
        }
        for (k, index) in self.indices.iter().enumerate() {
            let mut v = 1.0;
            for (j, &deg) in index.iter().enumerate() {
                v *= table.coord(j)[deg as usize];
            }
            out[k] = v;
        }
    }
}

/// Scratch space holding univariate values per coordinate.
struct UnivariateTable {
    values: Vec<f64>,
    stride: usize,
}

impl UnivariateTable {
    fn new(dim: usize, order: usize) -> Self {
        UnivariateTable {
            values: vec![0.0; dim * (order + 1)],
            stride: order + 1,
        }
    }

    fn coord(&self, j: usize) -> &[f64] {
        &self.values[j * self.stride..(j + 1) * self.stride]
    }

    fn coord_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.stride..(j + 1) * self.stride]
    }
}

/// Evaluates the normalized univariate polynomials of degree 0..=order at x.
///
/// Legendre uses (n+1)P_{n+1} = (2n+1)xP_n − nP_{n−1} and multiplies by
/// √(2n+1); Hermite uses He_{n+1} = xHe_n − nHe_{n−1} and divides by √(n!).
fn eval_univariate(family: Family, order: usize, x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if order == 0 {
        return;
    }
    match family {
        Family::Legendre => {
            let mut prev = 1.0;
            let mut cur = x;
            out[1] = x * 3.0_f64.sqrt();
            for n in 1..order {
                let nf = n as f64;
                let next = ((2.0 * nf + 1.0) * x * cur - nf * prev) / (nf + 1.0);
                prev = cur;
                cur = next;
                out[n + 1] = cur * (2.0 * (nf + 1.0) + 1.0).sqrt();
            }
        }
        Family::Hermite => {
            let mut prev = 1.0;
            let mut cur = x;
            let mut inv_norm = 1.0;
            out[1] = x;
            for n in 1..order {
                let nf = n as f64;
                let next = x * cur - nf * prev;
                prev = cur;
                cur = next;
                inv_norm /= (nf + 1.0).sqrt();
                out[n + 1] = cur * inv_norm;
            }
        }
    }
}

/// All multi-indices with coordinate sum ≤ order, graded then lexicographic
/// (ascending) within each grade.
fn multi_index_set(dim: usize, order: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut scratch = vec![0u32; dim];
    for grade in 0..=order as u32 {
        compositions(grade, 0, &mut scratch, &mut out);
    }
    out
}

fn compositions(remaining: u32, coord: usize, scratch: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if coord + 1 == scratch.len() {
        scratch[coord] = remaining;
        out.push(scratch.clone());
        return;
    }
    for v in 0..=remaining {
        scratch[coord] = v;
        compositions(remaining - v, coord + 1, scratch, out);
    }
}

fn binomial(n: usize, k: usize) -> Option<u64> {
    let k = k.min(n - k.min(n));
    let mut acc: u64 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u64)?;
        acc /= i as u64;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn basis_sizes_match_binomial() {
        let spec = BasisSpec::new(Family::Legendre, 2, 20).unwrap();
        assert_eq!(spec.len(), 231);
        let spec = BasisSpec::new(Family::Hermite, 3, 9).unwrap();
        assert_eq!(spec.len(), 220);
        let spec = BasisSpec::new(Family::Legendre, 1, 0).unwrap();
        assert_eq!(spec.len(), 1);
        assert_eq!(spec.multi_indices(), &[vec![0]]);
    }

    #[test]
    fn oversized_basis_is_rejected() {
        let err = BasisSpec::new(Family::Legendre, 100, 100).unwrap_err();
        assert!(matches!(err, Error::BasisTooLarge { .. }));
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert!(BasisSpec::new(Family::Hermite, 0, 3).is_err());
    }

    #[test]
    fn multi_index_order_is_graded_lex() {
        let spec = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![0, 2],
            vec![1, 1],
            vec![2, 0],
        ];
        assert_eq!(spec.multi_indices(), expected.as_slice());
    }

    #[test]
    fn p_grows_with_order() {
        for d in 1..=4 {
            for p in 0..6 {
                let a = BasisSpec::new(Family::Hermite, d, p).unwrap().len();
                let b = BasisSpec::new(Family::Hermite, d, p + 1).unwrap().len();
                assert!(b > a);
            }
        }
    }

    #[test]
    fn normalized_point_values() {
        // Normalized Legendre P1 at 1 is sqrt(3).
        let spec = BasisSpec::new(Family::Legendre, 1, 1).unwrap();
        let row = spec.eval_row(&[1.0]).unwrap();
        assert_relative_eq!(row[1], 3.0_f64.sqrt(), max_relative = 1e-14);

        // Normalized He2 at 0 is -1/sqrt(2).
        let spec = BasisSpec::new(Family::Hermite, 1, 2).unwrap();
        let row = spec.eval_row(&[0.0]).unwrap();
        assert_relative_eq!(row[2], -1.0 / 2.0_f64.sqrt(), max_relative = 1e-14);

        // The constant polynomial is 1 everywhere.
        let spec = BasisSpec::new(Family::Legendre, 2, 3).unwrap();
        let row = spec.eval_row(&[0.3, -0.7]).unwrap();
        assert_eq!(row[0], 1.0);
    }

    #[test]
    fn legendre_domain_is_enforced() {
        let spec = BasisSpec::new(Family::Legendre, 2, 2).unwrap();
        assert!(matches!(
            spec.eval_row(&[0.0, 1.5]),
            Err(Error::Domain(_))
        ));
        // Hermite points are unrestricted.
        let spec = BasisSpec::new(Family::Hermite, 2, 2).unwrap();
        assert!(spec.eval_row(&[0.0, 5.5]).is_ok());
    }

    #[test]
    fn row_norm_examples() {
        let spec = BasisSpec::new(Family::Legendre, 1, 1).unwrap();
        assert_relative_eq!(spec.row_norm(&[1.0]).unwrap(), 2.0, max_relative = 1e-14);

        // Order zero: only the constant term, B == 1 everywhere.
        let spec = BasisSpec::new(Family::Hermite, 3, 0).unwrap();
        assert_eq!(spec.row_norm(&[0.3, -2.0, 4.0]).unwrap(), 1.0);
    }

    #[test]
    fn row_norm_matches_summed_squares() {
        let spec = BasisSpec::new(Family::Hermite, 2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let pt = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let row = spec.eval_row(&pt).unwrap();
            let direct: f64 = row.iter().map(|v| v * v).sum::<f64>();
            let b = spec.row_norm(&pt).unwrap();
            assert_relative_eq!(b * b, direct, max_relative = 1e-12);
            assert!(b >= 1.0);
        }
    }

    #[test]
    fn recurrence_matches_explicit_low_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let mut leg = [0.0; 5];
            eval_univariate(Family::Legendre, 4, x, &mut leg);
            let raw = [
                1.0,
                x,
                (3.0 * x * x - 1.0) / 2.0,
                (5.0 * x.powi(3) - 3.0 * x) / 2.0,
                (35.0 * x.powi(4) - 30.0 * x * x + 3.0) / 8.0,
            ];
            for n in 0..=4 {
                let expected = raw[n] * (2.0 * n as f64 + 1.0).sqrt();
                assert_relative_eq!(leg[n], expected, max_relative = 1e-12, epsilon = 1e-13);
            }

            let z: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
            let mut her = [0.0; 5];
            eval_univariate(Family::Hermite, 4, z, &mut her);
            let raw = [
                1.0,
                z,
                z * z - 1.0,
                z.powi(3) - 3.0 * z,
                z.powi(4) - 6.0 * z * z + 3.0,
            ];
            let norms = [1.0, 1.0, 2.0_f64.sqrt(), 6.0_f64.sqrt(), 24.0_f64.sqrt()];
            for n in 0..=4 {
                assert_relative_eq!(
                    her[n],
                    raw[n] / norms[n],
                    max_relative = 1e-12,
                    epsilon = 1e-13
                );
            }
        }
    }

    #[test]
    fn assemble_matrix_examples() {
        // Unit weights reproduce the unweighted matrix.
        let spec = BasisSpec::new(Family::Legendre, 1, 1).unwrap();
        let points = DMatrix::from_row_slice(3, 1, &[0.2, -0.4, 0.9]);
        let ones = DVector::from_element(3, 1.0);
        let phi = spec.assemble_matrix(&points, &ones).unwrap();
        let psi = spec.assemble_unweighted(&points).unwrap();
        assert_eq!(phi, psi);

        // Scalar case: row (w, w√3) at ξ = 1 with w = 0.5.
        let points = DMatrix::from_row_slice(1, 1, &[1.0]);
        let w = DVector::from_element(1, 0.5);
        let phi = spec.assemble_matrix(&points, &w).unwrap();
        assert_relative_eq!(phi[(0, 0)], 0.5, max_relative = 1e-15);
        assert_relative_eq!(phi[(0, 1)], 0.5 * 3.0_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn assemble_matrix_is_diagonal_scaling() {
        let spec = BasisSpec::new(Family::Hermite, 2, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points = DMatrix::from_fn(5, 2, |_, _| rng.sample(StandardNormal));
        let weights = DVector::from_fn(5, |_, _| rng.random_range(0.1..2.0));
        let phi = spec.assemble_matrix(&points, &weights).unwrap();
        let psi = spec.assemble_unweighted(&points).unwrap();
        for i in 0..5 {
            for k in 0..spec.len() {
                assert_relative_eq!(phi[(i, k)], weights[i] * psi[(i, k)], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn assemble_matrix_validates_arguments() {
        let spec = BasisSpec::new(Family::Legendre, 2, 1).unwrap();
        let points = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]);
        let short = DVector::from_element(1, 1.0);
        assert!(spec.assemble_matrix(&points, &short).is_err());
        let nonpos = DVector::from_vec(vec![1.0, 0.0]);
        assert!(spec.assemble_matrix(&points, &nonpos).is_err());
    }

    /// Monte Carlo orthonormality: E[ψ_i ψ_j] within 3 standard errors of
    /// δ_ij over 10^6 draws from the orthogonality measure.
    #[test]
    fn orthonormality_monte_carlo() {
        let n_draws = 1_000_000usize;
        for (spec, hermite) in [
            (BasisSpec::new(Family::Legendre, 2, 4).unwrap(), false),
            (BasisSpec::new(Family::Hermite, 2, 3).unwrap(), true),
        ] {
            let p = spec.len();
            assert!(p <= 50);
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            let pairs = p * (p + 1) / 2;
            let mut sum = vec![0.0f64; pairs];
            let mut sum_sq = vec![0.0f64; pairs];
            let mut table = UnivariateTable::new(spec.dim(), spec.order());
            let mut row = vec![0.0; p];
            let mut pt = vec![0.0; spec.dim()];
            for _ in 0..n_draws {
                for x in pt.iter_mut() {
                    *x = if hermite {
                        rng.sample(StandardNormal)
                    } else {
                        rng.random_range(-1.0..1.0)
                    };
                }
                spec.eval_into(&pt, &mut table, &mut row);
                let mut idx = 0;
                for i in 0..p {
                    for j in i..p {
                        let v = row[i] * row[j];
                        sum[idx] += v;
                        sum_sq[idx] += v * v;
                        idx += 1;
                    }
                }
            }
            let mut idx = 0;
            for i in 0..p {
                for j in i..p {
                    let mean = sum[idx] / n_draws as f64;
                    let var = (sum_sq[idx] / n_draws as f64 - mean * mean).max(0.0);
                    let se = (var / n_draws as f64).sqrt();
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (mean - target).abs() <= 3.0 * se + 1e-12,
                        "pair ({i},{j}): mean {mean}, target {target}, se {se}"
                    );
                    idx += 1;
                }
            }
        }
    }
}
