//! Candidate pool generation: standard Monte Carlo and coherence-optimal
//! importance sampling.
//!
//! Coherence-optimal pools are drawn from the density f_Y(ξ) ∝ f(ξ)B²(ξ)
//! with a Metropolis–Hastings independence sampler and carry weights
//! √P/B(ξ), which makes the squared weighted basis-row norm equal P at
//! every point — the minimum attainable coherence.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::basis::{BasisSpec, Family};
use crate::error::{Error, Result};

/// How a candidate pool was drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    StandardMc,
    CoherenceOptimal,
}

impl std::fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SamplingStrategy::StandardMc => write!(f, "standard"),
            SamplingStrategy::CoherenceOptimal => write!(f, "coherence-optimal"),
        }
    }
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "mc" | "standard-mc" => Ok(SamplingStrategy::StandardMc),
            "coherence-optimal" | "coh-opt" => Ok(SamplingStrategy::CoherenceOptimal),
            other => Err(Error::Parse(format!("unknown sampling strategy `{other}`"))),
        }
    }
}

/// Seed plus stream id; equal pairs reproduce pools bit for bit, distinct
/// stream ids give independent streams from one seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Acceptance statistics of the Metropolis–Hastings chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct McmcStats {
    pub proposals: u64,
    pub accepted: u64,
}

/// Chain controls. `thinning: None` uses max(1, ⌈d·p/10⌉).
#[derive(Clone, Copy, Debug)]
pub struct McmcParams {
    pub burn_in: usize,
    pub thinning: Option<usize>,
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams {
            burn_in: 1000,
            thinning: None,
        }
    }
}

/// A pool of M candidate input points with per-point weights.
#[derive(Clone, Debug)]
pub struct SamplePool {
    pub points: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub strategy: SamplingStrategy,
    pub stream: RngStream,
    pub mcmc: Option<McmcStats>,
}

impl SamplePool {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().cloned().collect()
    }
}

/// Draws M i.i.d. points from the orthogonality measure f(ξ): uniform on
/// [-1,1]^d for Legendre, standard normal for Hermite. Weights are 1.
pub fn sample_standard(spec: &BasisSpec, m: usize, stream: RngStream) -> Result<SamplePool> {
    if m == 0 {
        return Err(Error::invalid("pool size M must be at least 1"));
    }
    let mut rng = stream.rng();
    let d = spec.dim();
    let mut points = DMatrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            points[(i, j)] = draw_from_f(spec.family(), &mut rng);
        }
    }
    Ok(SamplePool {
        points,
        weights: DVector::from_element(m, 1.0),
        strategy: SamplingStrategy::StandardMc,
        stream,
        mcmc: None,
    })
}

fn draw_from_f(family: Family, rng: &mut ChaCha8Rng) -> f64 {
    match family {
        Family::Legendre => rng.random_range(-1.0..1.0),
        Family::Hermite => rng.sample(StandardNormal),
    }
}

enum Proposal {
    /// p ≤ d: propose from f itself.
    Target,
    /// Hermite, p > d: uniform on the d-ball of radius √2·√(2p+1).
    Ball { radius: f64 },
    /// Legendre, p > d: product Chebyshev (arcsine) on [-1,1]^d.
    Chebyshev,
}

impl Proposal {
    fn for_spec(spec: &BasisSpec) -> Proposal {
        if spec.order() <= spec.dim() {
            Proposal::Target
        } else {
            match spec.family() {
                Family::Hermite => Proposal::Ball {
                    radius: 2.0_f64.sqrt() * (2.0 * spec.order() as f64 + 1.0).sqrt(),
                },
                Family::Legendre => Proposal::Chebyshev,
            }
        }
    }

    fn draw(&self, family: Family, d: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            Proposal::Target => {
                for x in out.iter_mut() {
                    *x = draw_from_f(family, rng);
                }
            }
            Proposal::Ball { radius } => {
                // Gaussian direction scaled to radius·U^{1/d}.
                let mut norm2 = 0.0;
                for x in out.iter_mut() {
                    *x = rng.sample(StandardNormal);
                    norm2 += *x * *x;
                }
                let norm = norm2.sqrt().max(f64::MIN_POSITIVE);
                let u: f64 = rng.random::<f64>();
                let r = radius * u.powf(1.0 / d as f64);
                for x in out.iter_mut() {
                    *x *= r / norm;
                }
            }
            Proposal::Chebyshev => {
                for x in out.iter_mut() {
                    let u: f64 = rng.random_range(-1.0..1.0);
                    *x = (PI * u / 2.0).sin();
                }
            }
        }
    }

    /// log of target/proposal up to an additive constant; the target is
    /// f(ξ)B²(ξ) unnormalized.
    fn log_weight(&self, spec: &BasisSpec, point: &[f64]) -> Result<f64> {
        let b = spec.row_norm(point)?;
        let log_target_over_f = 2.0 * b.ln();
        Ok(match self {
            // q = f: everything but B² cancels.
            Proposal::Target => log_target_over_f,
            // q constant on the ball; f is the Gaussian.
            Proposal::Ball { .. } => {
                let norm2: f64 = point.iter().map(|x| x * x).sum();
                -0.5 * norm2 + log_target_over_f
            }
            // f constant on the cube; q is the product arcsine density.
            Proposal::Chebyshev => {
                let mut log_q = 0.0;
                for &x in point {
                    let t = 1.0 - x * x;
                    if t <= 0.0 {
                        return Ok(f64::NEG_INFINITY);
                    }
                    log_q -= 0.5 * t.ln();
                }
                log_target_over_f - log_q
            }
        })
    }
}

/// Draws an approximately f_Y-distributed pool via Metropolis–Hastings with
/// independence proposals and sets weights to √P/B(ξ).
pub fn sample_coherence_optimal(
    spec: &BasisSpec,
    m: usize,
    stream: RngStream,
    params: McmcParams,
) -> Result<SamplePool> {
    if m == 0 {
        return Err(Error::invalid("pool size M must be at least 1"));
    }
    let d = spec.dim();
    let proposal = Proposal::for_spec(spec);
    let thinning = params
        .thinning
        .unwrap_or_else(|| ((d * spec.order()).div_ceil(10)).max(1));
    let mut rng = stream.rng();

    let mut current = vec![0.0; d];
    let mut current_lw;
    loop {
        proposal.draw(spec.family(), d, &mut rng, &mut current);
        current_lw = proposal.log_weight(spec, &current)?;
        if current_lw.is_finite() {
            break;
        }
    }

    let mut stats = McmcStats::default();
    let mut candidate = vec![0.0; d];
    let mut points = DMatrix::zeros(m, d);
    let mut weights = DVector::zeros(m);
    let total_steps = params.burn_in + m * thinning;
    let mut recorded = 0;
    for step in 0..total_steps {
        proposal.draw(spec.family(), d, &mut rng, &mut candidate);
        let lw = proposal.log_weight(spec, &candidate)?;
        stats.proposals += 1;
        let log_u: f64 = rng.random::<f64>().ln();
        if log_u < lw - current_lw {
            current.copy_from_slice(&candidate);
            current_lw = lw;
            stats.accepted += 1;
        }
        if step >= params.burn_in && (step - params.burn_in + 1) % thinning == 0 {
            for j in 0..d {
                points[(recorded, j)] = current[j];
            }
            let b = spec.row_norm(&current)?;
            weights[recorded] = (spec.len() as f64).sqrt() / b;
            recorded += 1;
        }
    }
    debug_assert_eq!(recorded, m);

    Ok(SamplePool {
        points,
        weights,
        strategy: SamplingStrategy::CoherenceOptimal,
        stream,
        mcmc: Some(stats),
    })
}

/// Dispatches on the strategy with default chain parameters.
pub fn sample_pool(
    spec: &BasisSpec,
    strategy: SamplingStrategy,
    m: usize,
    stream: RngStream,
) -> Result<SamplePool> {
    match strategy {
        SamplingStrategy::StandardMc => sample_standard(spec, m, stream),
        SamplingStrategy::CoherenceOptimal => {
            sample_coherence_optimal(spec, m, stream, McmcParams::default())
        }
    }
}

/// Empirical coherence of the pool: the maximum over pool points of the
/// squared weighted basis-row norm Σ_k |w(ξ)ψ_k(ξ)|².
pub fn coherence(spec: &BasisSpec, pool: &SamplePool) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::Empty("coherence of an empty pool".into()));
    }
    let mut sup = 0.0f64;
    for i in 0..pool.len() {
        let b = spec.row_norm(&pool.point(i))?;
        let wb = pool.weights[i] * b;
        sup = sup.max(wb * wb);
    }
    Ok(sup)
}
