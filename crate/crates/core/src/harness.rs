//! Experiment harness: strategy comparisons over manufactured and physical
//! QoIs, oracle lower-envelope solutions, design-quality CDF studies, and
//! reproducible CSV/JSONL reports.
//!
//! A run builds one 2M-point reconstruction pool per sampling family, then
//! for every repetition draws a fresh M-row candidate matrix from it,
//! manufactures the problem instance where applicable, and solves it with
//! each configured strategy at each budget N. All randomness flows through
//! per-purpose ChaCha streams derived from the single config seed, so
//! reports are byte-identical across reruns and thread schedules.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::basis::{BasisSpec, Family};
use crate::design::{self, gather_cols, gather_rows};
use crate::error::{Error, Result};
use crate::models::{manufacture, ManufacturedProblem, PhysicalModel};
use crate::sampling::{
    sample_coherence_optimal, sample_standard, McmcParams, RngStream, SamplePool,
    SamplingStrategy,
};
use crate::solvers::{
    cross_validate_k, dsp_cv, lsa, subspace_pursuit, CandidateSet, CvParams, PoolOracle,
    SparseSolution,
};

/// Stream ids: 0/1 reconstruction pools, 2 validation; each repetition then
/// owns a block of 16 streams starting at `REP_STREAM_BASE + 16·rep`.
const STREAM_RECON_COH: u64 = 0;
const STREAM_RECON_MC: u64 = 1;
const STREAM_VALIDATION: u64 = 2;
const REP_STREAM_BASE: u64 = 16;
const REP_SLOT_CAND_COH: u64 = 0;
const REP_SLOT_CAND_MC: u64 = 1;
const REP_SLOT_PROBLEM: u64 = 2;
const REP_SLOT_STRATEGY: u64 = 3;

/// Quantity of interest the experiment approximates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Manufactured { s: usize, alpha: f64 },
    Ishigami,
    Duffing,
    WingWeight,
}

impl ModelSpec {
    pub fn physical(&self) -> Option<PhysicalModel> {
        match self {
            ModelSpec::Manufactured { .. } => None,
            ModelSpec::Ishigami => Some(PhysicalModel::Ishigami),
            ModelSpec::Duffing => Some(PhysicalModel::Duffing),
            ModelSpec::WingWeight => Some(PhysicalModel::WingWeight),
        }
    }

    pub fn is_manufactured(&self) -> bool {
        matches!(self, ModelSpec::Manufactured { .. })
    }
}

/// Sampling-plus-selection strategy names follow the experiment labels:
/// MC / D-MC / Seq-D-MC use standard Monte Carlo candidate pools,
/// the Coh-Opt family uses coherence-optimal pools; the D- prefix selects a
/// D-optimal design and Seq- runs the sequential DSP solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "D-MC")]
    DMc,
    #[serde(rename = "Seq-D-MC")]
    SeqDMc,
    #[serde(rename = "Coh-Opt")]
    CohOpt,
    #[serde(rename = "D-Coh-Opt")]
    DCohOpt,
    #[serde(rename = "Seq-D-Coh-Opt")]
    SeqDCohOpt,
}

/// How design rows are chosen from the candidate pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Random,
    DOptimal,
    Sequential,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Mc,
        Strategy::DMc,
        Strategy::SeqDMc,
        Strategy::CohOpt,
        Strategy::DCohOpt,
        Strategy::SeqDCohOpt,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Mc => "MC",
            Strategy::DMc => "D-MC",
            Strategy::SeqDMc => "Seq-D-MC",
            Strategy::CohOpt => "Coh-Opt",
            Strategy::DCohOpt => "D-Coh-Opt",
            Strategy::SeqDCohOpt => "Seq-D-Coh-Opt",
        }
    }

    pub fn sampling(&self) -> SamplingStrategy {
        match self {
            Strategy::Mc | Strategy::DMc | Strategy::SeqDMc => SamplingStrategy::StandardMc,
            _ => SamplingStrategy::CoherenceOptimal,
        }
    }

    pub fn selection(&self) -> Selection {
        match self {
            Strategy::Mc | Strategy::CohOpt => Selection::Random,
            Strategy::DMc | Strategy::DCohOpt => Selection::DOptimal,
            Strategy::SeqDMc | Strategy::SeqDCohOpt => Selection::Sequential,
        }
    }

    /// Stable stream slot, independent of the configured strategy set.
    fn slot(&self) -> u64 {
        Strategy::ALL.iter().position(|s| s == self).unwrap() as u64
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| Error::Parse(format!("unknown strategy `{s}`")))
    }
}

/// Full experiment description; see the config file keys of the same names.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub family: Family,
    pub d: usize,
    pub p: usize,
    pub strategies: Vec<Strategy>,
    pub n_grid: Vec<usize>,
    /// Candidate pool size; defaults to 10·P.
    pub m: Option<usize>,
    /// Repetitions per (strategy, N) cell.
    pub r: usize,
    /// Validation sample count for physical models.
    pub n_val: usize,
    pub seed: u64,
    /// Share the per-repetition candidate matrix across strategies.
    pub share_candidates: bool,
}

fn default_n_val() -> usize {
    20_000
}

fn default_true() -> bool {
    true
}

/// Raw TOML schema of the `bench` subcommand config file.
#[derive(Clone, Debug, Deserialize)]
pub struct ConfigFile {
    pub model: String,
    pub s: Option<usize>,
    pub alpha: Option<f64>,
    pub family: String,
    pub d: usize,
    pub p: usize,
    pub strategies: Vec<String>,
    pub n_grid: Vec<usize>,
    pub m: Option<usize>,
    pub r: usize,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub share_candidates: bool,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let model = match self.model.to_ascii_lowercase().as_str() {
            "manufactured" => ModelSpec::Manufactured {
                s: self
                    .s
                    .ok_or_else(|| Error::invalid("manufactured model needs `s`"))?,
                alpha: self.alpha.unwrap_or(0.03),
            },
            "ishigami" => ModelSpec::Ishigami,
            "duffing" => ModelSpec::Duffing,
            "wingweight" | "wing-weight" => ModelSpec::WingWeight,
            other => return Err(Error::Parse(format!("unknown model `{other}`"))),
        };
        let strategies = self
            .strategies
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Strategy>>>()?;
        Ok(ExperimentConfig {
            model,
            family: self.family.parse()?,
            d: self.d,
            p: self.p,
            strategies,
            n_grid: self.n_grid.clone(),
            m: self.m,
            r: self.r,
            n_val: self.n_val,
            seed: self.seed,
            share_candidates: self.share_candidates,
        })
    }
}

/// One solver run: (strategy, N) cell of one repetition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepRecord {
    pub strategy: Strategy,
    pub n: usize,
    pub rep: usize,
    pub rel_err: f64,
    pub k_used: usize,
    pub n_evals: usize,
    pub support_pct: Option<f64>,
    pub oracle_err: Option<f64>,
}

/// Aggregated statistics of one (strategy, N) cell over R repetitions.
#[derive(Clone, Debug, Serialize)]
pub struct CellStats {
    pub strategy: Strategy,
    pub n: usize,
    pub mean_rel_err: f64,
    /// Sample (n−1) standard deviation; undefined for R = 1.
    pub std_rel_err: Option<f64>,
    pub support_pct: Option<f64>,
    pub oracle_err: Option<f64>,
    pub records: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellStats>,
}

pub struct ExperimentOutput {
    pub records: Vec<RepRecord>,
    pub report: ExperimentReport,
}

/// Relative validation error ‖Ψ_val·ĉ − u_val‖₂ / ‖u_val‖₂.
pub fn relative_validation_error(
    coeffs: &DVector<f64>,
    psi_val: &DMatrix<f64>,
    u_val: &DVector<f64>,
) -> Result<f64> {
    if psi_val.nrows() != u_val.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} validation rows but {} values",
            psi_val.nrows(),
            u_val.len()
        )));
    }
    if psi_val.ncols() != coeffs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} columns but {} coefficients",
            psi_val.ncols(),
            coeffs.len()
        )));
    }
    let denom = u_val.norm();
    if denom == 0.0 {
        return Err(Error::invalid("validation data norm is zero"));
    }
    let mut pred = DVector::zeros(u_val.len());
    for (k, &c) in coeffs.iter().enumerate() {
        if c != 0.0 {
            pred.axpy(c, &psi_val.column(k), 1.0);
        }
    }
    Ok((pred - u_val).norm() / denom)
}

/// Best achievable least-squares solution: an N-point D-optimal design on
/// the exact support columns, solved overdetermined. A lower envelope for
/// the error of any strategy that must also discover the support.
pub fn oracle_solution(
    problem: &ManufacturedProblem,
    phi_c: &DMatrix<f64>,
    v_c: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    if n < problem.s {
        return Err(Error::invalid(format!(
            "oracle design needs at least s = {} rows, got {n}",
            problem.s
        )));
    }
    if phi_c.nrows() != v_c.len() {
        return Err(Error::ShapeMismatch(
            "candidate matrix and rhs disagree".into(),
        ));
    }
    let restricted = gather_cols(phi_c, &problem.support);
    let design = design::rrqr_select(&restricted, n)?;
    let phi_n = design.select_rows(&restricted);
    let v_n = DVector::from_fn(n, |i, _| v_c[design.indices()[i]]);
    let c_s = lsa(&phi_n, &v_n)?;
    let mut out = DVector::zeros(phi_c.ncols());
    for (i, &col) in problem.support.iter().enumerate() {
        out[col] = c_s[i];
    }
    Ok(out)
}

struct PreparedPool {
    pool: SamplePool,
    /// Unweighted basis rows of the reconstruction pool.
    psi: DMatrix<f64>,
}

struct ValidationSet {
    psi: DMatrix<f64>,
    u: DVector<f64>,
}

struct RepData {
    problem: Option<ManufacturedProblem>,
    /// Noisy unweighted QoI per reconstruction-pool row, per family.
    u_recon_by_family: Option<Vec<(SamplingStrategy, Vec<f64>)>>,
    /// Shared candidate draws: family, reconstruction-row indices, and the
    /// assembled candidate set.
    shared: Vec<(SamplingStrategy, Vec<usize>, CandidateSet)>,
}

/// A configured experiment with its reconstruction pools and validation set
/// built; repetitions and cells can then be run independently.
pub struct Experiment {
    config: ExperimentConfig,
    spec: BasisSpec,
    m: usize,
    pools: Vec<(SamplingStrategy, PreparedPool)>,
    validation: Option<ValidationSet>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        if config.strategies.is_empty() {
            return Err(Error::invalid("no strategies configured"));
        }
        if config.n_grid.is_empty() {
            return Err(Error::invalid("empty N grid"));
        }
        if config.r == 0 {
            return Err(Error::invalid("R must be at least 1"));
        }
        let spec = BasisSpec::new(config.family, config.d, config.p)?;
        let m = config.m.unwrap_or(10 * spec.len());
        if let Some(&n_max) = config.n_grid.iter().max() {
            if n_max > m {
                return Err(Error::invalid(format!(
                    "candidate pool M = {m} smaller than largest N = {n_max}"
                )));
            }
        }
        if let ModelSpec::Manufactured { s, .. } = config.model {
            if s > spec.len() {
                return Err(Error::invalid(format!(
                    "sparsity s = {s} exceeds P = {}",
                    spec.len()
                )));
            }
        }
        if let Some(model) = config.model.physical() {
            if model.dim() != config.d {
                return Err(Error::invalid(format!(
                    "model dimension {} but d = {}",
                    model.dim(),
                    config.d
                )));
            }
            if config.family != Family::Legendre {
                return Err(Error::invalid(
                    "physical models have uniform inputs; use the legendre family",
                ));
            }
        }

        let mut families: Vec<SamplingStrategy> = Vec::new();
        for s in &config.strategies {
            if !families.contains(&s.sampling()) {
                families.push(s.sampling());
            }
        }
        families.sort_by_key(|f| *f != SamplingStrategy::CoherenceOptimal);

        let mut pools = Vec::new();
        for fam in families {
            let stream = match fam {
                SamplingStrategy::CoherenceOptimal => RngStream::new(config.seed, STREAM_RECON_COH),
                SamplingStrategy::StandardMc => RngStream::new(config.seed, STREAM_RECON_MC),
            };
            let pool = match fam {
                SamplingStrategy::CoherenceOptimal => {
                    sample_coherence_optimal(&spec, 2 * m, stream, McmcParams::default())?
                }
                SamplingStrategy::StandardMc => sample_standard(&spec, 2 * m, stream)?,
            };
            let psi = spec.assemble_unweighted(&pool.points)?;
            pools.push((fam, PreparedPool { pool, psi }));
        }

        let validation = match config.model.physical() {
            Some(model) => {
                let vpool = sample_standard(
                    &spec,
                    config.n_val,
                    RngStream::new(config.seed, STREAM_VALIDATION),
                )?;
                let psi = spec.assemble_unweighted(&vpool.points)?;
                let mut u = DVector::zeros(config.n_val);
                for i in 0..config.n_val {
                    u[i] = model.eval(&vpool.point(i))?;
                }
                Some(ValidationSet { psi, u })
            }
            None => None,
        };

        Ok(Experiment {
            config,
            spec,
            m,
            pools,
            validation,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    /// Resolved candidate pool size.
    pub fn m(&self) -> usize {
        self.m
    }

    fn prepared(&self, fam: SamplingStrategy) -> &PreparedPool {
        &self
            .pools
            .iter()
            .find(|(f, _)| *f == fam)
            .expect("pool prepared for every configured family")
            .1
    }

    fn rep_stream(&self, rep: usize, slot: u64) -> ChaCha8Rng {
        RngStream::new(self.config.seed, REP_STREAM_BASE + 16 * rep as u64 + slot).rng()
    }

    /// Draws the M-row candidate matrix for one repetition by subsampling
    /// the 2M reconstruction pool without replacement.
    fn draw_candidates(&self, fam: SamplingStrategy, rng: &mut ChaCha8Rng) -> (Vec<usize>, CandidateSet) {
        let prepared = self.prepared(fam);
        let total = prepared.pool.len();
        let mut rows = rand::seq::index::sample(rng, total, self.m).into_vec();
        rows.sort_unstable();
        let points = gather_rows(&prepared.pool.points, &rows);
        let weights = DVector::from_fn(self.m, |i, _| prepared.pool.weights[rows[i]]);
        let psi_rows = gather_rows(&prepared.psi, &rows);
        let mut phi = psi_rows;
        for i in 0..self.m {
            let w = weights[i];
            for k in 0..self.spec.len() {
                phi[(i, k)] *= w;
            }
        }
        let cand = CandidateSet::from_parts(points, weights, phi)
            .expect("candidate shapes consistent by construction");
        (rows, cand)
    }

    fn rep_data(&self, rep: usize) -> Result<RepData> {
        let (problem, u_recon_by_family) = match self.config.model {
            ModelSpec::Manufactured { s, alpha } => {
                let mut rng = self.rep_stream(rep, REP_SLOT_PROBLEM);
                let problem = manufacture(&self.spec, s, alpha, &mut rng, rep as u64)?;
                // Noise is attached to reconstruction-pool rows so that every
                // strategy sees the same realization regardless of which
                // candidates it touches.
                let mut chunks: Vec<(SamplingStrategy, Vec<f64>)> = Vec::new();
                for (fam, prep) in &self.pools {
                    let clean = &prep.psi * &problem.truth;
                    let mut u = Vec::with_capacity(clean.len());
                    for i in 0..clean.len() {
                        let x: f64 = rand_distr::Distribution::sample(
                            &rand_distr::StandardNormal,
                            &mut rng,
                        );
                        u.push(clean[i] + alpha * clean[i].abs() * x);
                    }
                    chunks.push((*fam, u));
                }
                (Some(problem), Some(chunks))
            }
            _ => (None, None),
        };

        let shared = if self.config.share_candidates {
            let mut out = Vec::new();
            for (fam, _) in &self.pools {
                let slot = match fam {
                    SamplingStrategy::CoherenceOptimal => REP_SLOT_CAND_COH,
                    SamplingStrategy::StandardMc => REP_SLOT_CAND_MC,
                };
                let mut rng = self.rep_stream(rep, slot);
                let (rows, cand) = self.draw_candidates(*fam, &mut rng);
                out.push((*fam, rows, cand));
            }
            out
        } else {
            Vec::new()
        };

        Ok(RepData {
            problem,
            u_recon_by_family,
            shared,
        })
    }

    /// Runs one (strategy, N) cell of one repetition. Deterministic in
    /// (config, strategy, n, rep).
    pub fn run_strategy(&self, strategy: Strategy, n: usize, rep: usize) -> Result<RepRecord> {
        let data = self.rep_data(rep)?;
        self.run_cell(&data, strategy, n, rep)
    }

    fn run_cell(
        &self,
        data: &RepData,
        strategy: Strategy,
        n: usize,
        rep: usize,
    ) -> Result<RepRecord> {
        let fam = strategy.sampling();
        let mut rng = self.rep_stream(rep, REP_SLOT_STRATEGY + strategy.slot());

        let owned;
        let (rows, cand): (&[usize], &CandidateSet) = if self.config.share_candidates {
            let entry = data
                .shared
                .iter()
                .find(|(f, _, _)| *f == fam)
                .expect("shared candidates prepared for the family");
            (entry.1.as_slice(), &entry.2)
        } else {
            owned = self.draw_candidates(fam, &mut rng);
            (owned.0.as_slice(), &owned.1)
        };

        // Unweighted QoI by candidate index.
        let mut oracle = match (&data.problem, self.config.model.physical()) {
            (Some(_), _) => {
                let per_family = data
                    .u_recon_by_family
                    .as_ref()
                    .expect("manufactured values prepared")
                    .iter()
                    .find(|(f, _)| *f == fam)
                    .expect("values for family");
                let table: Vec<f64> = rows.iter().map(|&r| per_family.1[r]).collect();
                PoolOracle::from_table(table)
            }
            (None, Some(model)) => {
                PoolOracle::from_fn(cand.len(), move |pt| model.eval(pt))
            }
            (None, None) => unreachable!("model is either manufactured or physical"),
        };

        let sol: SparseSolution = match strategy.selection() {
            Selection::Random => {
                let mut sel = rand::seq::index::sample(&mut rng, cand.len(), n).into_vec();
                sel.sort_unstable();
                self.solve_on_rows(cand, &sel, &mut oracle, &mut rng)?
            }
            Selection::DOptimal => {
                let design = design::rrqr_select(&cand.phi, n)?;
                self.solve_on_rows(cand, design.indices(), &mut oracle, &mut rng)?
            }
            Selection::Sequential => dsp_cv(cand, n, &mut oracle, CvParams::default(), &mut rng)?,
        };

        let (rel_err, support_pct, oracle_err) = match &data.problem {
            Some(problem) => {
                let denom = problem.truth.norm();
                if denom == 0.0 {
                    return Err(Error::invalid("manufactured truth has zero norm"));
                }
                let rel = (&sol.coeffs - &problem.truth).norm() / denom;
                let hits = problem
                    .support
                    .iter()
                    .filter(|s| sol.support.contains(s))
                    .count();
                let pct = 100.0 * hits as f64 / problem.s as f64;

                let per_family = data
                    .u_recon_by_family
                    .as_ref()
                    .unwrap()
                    .iter()
                    .find(|(f, _)| *f == fam)
                    .unwrap();
                let v_c = DVector::from_fn(cand.len(), |i, _| {
                    cand.weights[i] * per_family.1[rows[i]]
                });
                let oracle_coeffs = oracle_solution(problem, &cand.phi, &v_c, n)?;
                let oracle_err = (&oracle_coeffs - &problem.truth).norm() / denom;
                (rel, Some(pct), Some(oracle_err))
            }
            None => {
                let val = self.validation.as_ref().expect("validation set built");
                let rel = relative_validation_error(&sol.coeffs, &val.psi, &val.u)?;
                (rel, None, None)
            }
        };

        Ok(RepRecord {
            strategy,
            n,
            rep,
            rel_err,
            k_used: sol.k_used,
            n_evals: sol.n_model_evals,
            support_pct,
            oracle_err,
        })
    }

    /// Cross-validates K on the selected rows, then runs subspace pursuit.
    fn solve_on_rows(
        &self,
        cand: &CandidateSet,
        rows: &[usize],
        oracle: &mut PoolOracle<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SparseSolution> {
        let phi_n = gather_rows(&cand.phi, rows);
        let v = DVector::from_vec(
            rows.iter()
                .map(|&i| Ok(cand.weights[i] * oracle.value(cand, i)?))
                .collect::<Result<Vec<f64>>>()?,
        );
        let k = cross_validate_k(&phi_n, &v, CvParams::default(), rng)?.k;
        let mut sol = subspace_pursuit(k, &phi_n, &v)?;
        sol.n_model_evals = oracle.n_evals();
        Ok(sol)
    }

    /// Runs every (strategy, N, repetition) cell and aggregates the report.
    /// Repetitions run in parallel; record order and content are independent
    /// of the thread schedule.
    pub fn run(&self) -> Result<ExperimentOutput> {
        let reps: Vec<Vec<RepRecord>> = (0..self.config.r)
            .into_par_iter()
            .map(|rep| {
                let data = self.rep_data(rep)?;
                let mut out = Vec::new();
                for &strategy in &self.config.strategies {
                    for &n in &self.config.n_grid {
                        out.push(self.run_cell(&data, strategy, n, rep)?);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let records: Vec<RepRecord> = reps.into_iter().flatten().collect();
        let report = aggregate(&records, &self.config)?;
        Ok(ExperimentOutput { records, report })
    }
}

/// Aggregates per-repetition records into per-(strategy, N) cell statistics.
pub fn aggregate(records: &[RepRecord], config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cells = Vec::new();
    let mut missing = Vec::new();
    for &strategy in &config.strategies {
        for &n in &config.n_grid {
            let cell: Vec<&RepRecord> = records
                .iter()
                .filter(|r| r.strategy == strategy && r.n == n)
                .collect();
            if cell.len() != config.r {
                missing.push(format!(
                    "{}/N={n}: {} of {} records",
                    strategy.name(),
                    cell.len(),
                    config.r
                ));
                continue;
            }
            let r = cell.len() as f64;
            let mean = cell.iter().map(|c| c.rel_err).sum::<f64>() / r;
            let std = if cell.len() > 1 {
                let ss = cell
                    .iter()
                    .map(|c| (c.rel_err - mean) * (c.rel_err - mean))
                    .sum::<f64>();
                Some((ss / (r - 1.0)).sqrt())
            } else {
                None
            };
            let support_pct = mean_optional(cell.iter().map(|c| c.support_pct));
            let oracle_err = mean_optional(cell.iter().map(|c| c.oracle_err));
            cells.push(CellStats {
                strategy,
                n,
                mean_rel_err: mean,
                std_rel_err: std,
                support_pct,
                oracle_err,
                records: cell.len(),
            });
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing.join("; ")));
    }
    Ok(ExperimentReport { cells })
}

fn mean_optional(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v?;
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    }
}

/// Formats a float with 17 significant digits, round-trippable to the same
/// bits.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_optional(x: Option<f64>) -> String {
    match x {
        Some(v) if !v.is_nan() => fmt_g17(v),
        _ => "n/a".to_string(),
    }
}

/// Renders report.csv: one row per (strategy, N) cell.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("strategy,N,mean_rel_err,std_rel_err,support_pct,oracle_err\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.strategy.name(),
            c.n,
            fmt_g17(c.mean_rel_err),
            fmt_optional(c.std_rel_err),
            fmt_optional(c.support_pct),
            fmt_optional(c.oracle_err),
        ));
    }
    out
}

/// Renders records.jsonl: one JSON object per solver run.
pub fn records_jsonl(records: &[RepRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    metric: &'static str,
    n_basis: usize,
    m_resolved: usize,
    config: &'a ExperimentConfig,
}

/// Renders manifest.json: config echo plus code version and derived sizes.
pub fn manifest_json(experiment: &Experiment) -> String {
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        metric: if experiment.config.model.is_manufactured() {
            "coefficient-relative-error"
        } else {
            "validation-relative-error"
        },
        n_basis: experiment.spec.len(),
        m_resolved: experiment.m,
        config: &experiment.config,
    };
    serde_json::to_string_pretty(&manifest).expect("manifest serialization")
}

/// Writes report.csv, records.jsonl, and manifest.json into `dir`.
pub fn write_outputs(dir: &Path, experiment: &Experiment, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("report.csv"))?;
    f.write_all(report_csv(&output.report).as_bytes())?;
    let mut f = std::fs::File::create(dir.join("records.jsonl"))?;
    f.write_all(records_jsonl(&output.records).as_bytes())?;
    let mut f = std::fs::File::create(dir.join("manifest.json"))?;
    f.write_all(manifest_json(experiment).as_bytes())?;
    Ok(())
}

/// Empirical CDF samples of the normalized D-criterion for subset-selected
/// designs from standard-MC versus coherence-optimal pools.
#[derive(Clone, Debug)]
pub struct CdfStudy {
    /// Sorted φ_D-normalized samples per strategy.
    pub mc: Vec<f64>,
    pub coh: Vec<f64>,
    /// Fraction (percent) of a 50-point evaluation grid where the
    /// coherence-optimal CDF lies at or below the MC CDF.
    pub dominance_pct: f64,
    /// Strict first-order stochastic dominance of the coherence-optimal
    /// samples over MC: F_coh ≤ F_mc everywhere with strict inequality
    /// somewhere.
    pub coh_dominates_mc: bool,
}

fn ecdf(sorted: &[f64], x: f64) -> f64 {
    let count = sorted.partition_point(|&v| v <= x);
    count as f64 / sorted.len() as f64
}

/// Runs the design-quality CDF protocol: `n_designs` independent pools per
/// strategy, subset-selected N-point designs, |M/‖M‖_F|^{1/P} recorded.
pub fn cdf_study(
    family: Family,
    d: usize,
    p: usize,
    n: usize,
    m: usize,
    n_designs: usize,
    seed: u64,
) -> Result<CdfStudy> {
    if n > m {
        return Err(Error::invalid(format!("N = {n} exceeds pool size M = {m}")));
    }
    if n_designs == 0 {
        return Err(Error::invalid("need at least one design"));
    }
    let spec = BasisSpec::new(family, d, p)?;
    let mut samples: HashMap<SamplingStrategy, Vec<f64>> = HashMap::new();
    for trial in 0..n_designs {
        for (fi, fam) in [SamplingStrategy::StandardMc, SamplingStrategy::CoherenceOptimal]
            .into_iter()
            .enumerate()
        {
            let stream = RngStream::new(seed, 2 * trial as u64 + fi as u64);
            let pool = match fam {
                SamplingStrategy::StandardMc => sample_standard(&spec, m, stream)?,
                SamplingStrategy::CoherenceOptimal => {
                    sample_coherence_optimal(&spec, m, stream, McmcParams::default())?
                }
            };
            let phi_c = spec.assemble_matrix(&pool.points, &pool.weights)?;
            let design = design::subset_select(&phi_c, n)?;
            let info = design::InfoMatrix::from_design_matrix(&design.select_rows(&phi_c))?;
            let value = design::phi_d_normalized(&info)?;
            samples.entry(fam).or_default().push(value);
        }
    }
    let mut mc = samples.remove(&SamplingStrategy::StandardMc).unwrap();
    let mut coh = samples.remove(&SamplingStrategy::CoherenceOptimal).unwrap();
    mc.sort_by(|a, b| a.partial_cmp(b).unwrap());
    coh.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let lo = mc
        .first()
        .unwrap()
        .min(*coh.first().unwrap());
    let hi = mc.last().unwrap().max(*coh.last().unwrap());
    let grid_len = 50;
    let mut at_or_below = 0usize;
    for i in 0..grid_len {
        let g = if grid_len == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (grid_len - 1) as f64
        };
        if ecdf(&coh, g) <= ecdf(&mc, g) + 1e-12 {
            at_or_below += 1;
        }
    }
    let dominance_pct = 100.0 * at_or_below as f64 / grid_len as f64;

    // Strict first-order dominance over the union of sample values.
    let mut union: Vec<f64> = mc.iter().chain(coh.iter()).cloned().collect();
    union.sort_by(|a, b| a.partial_cmp(b).unwrap());
    union.dedup();
    let mut all_leq = true;
    let mut some_strict = false;
    for &x in &union {
        let fc = ecdf(&coh, x);
        let fm = ecdf(&mc, x);
        if fc > fm + 1e-12 {
            all_leq = false;
            break;
        }
        if fc < fm - 1e-12 {
            some_strict = true;
        }
    }

    Ok(CdfStudy {
        mc,
        coh,
        dominance_pct,
        coh_dominates_mc: all_leq && some_strict,
    })
}

/// Writes cdf_mc.csv and cdf_coh-opt.csv (sorted samples, one per line).
pub fn write_cdf_outputs(dir: &Path, study: &CdfStudy) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, samples) in [("cdf_mc.csv", &study.mc), ("cdf_coh-opt.csv", &study.coh)] {
        let mut text = String::from("phi_d_normalized\n");
        for &v in samples.iter() {
            text.push_str(&fmt_g17(v));
            text.push('\n');
        }
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_manufactured_config() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::Manufactured { s: 3, alpha: 0.0 },
            family: Family::Hermite,
            d: 2,
            p: 4,
            strategies: vec![Strategy::CohOpt, Strategy::DCohOpt, Strategy::SeqDCohOpt],
            n_grid: vec![20],
            m: Some(90),
            r: 3,
            n_val: 500,
            seed: 99,
            share_candidates: true,
        }
    }

    #[test]
    fn config_file_round_trip() {
        let text = r#"
model = "manufactured"
s = 12
alpha = 0.03
family = "hermite"
d = 2
p = 10
strategies = ["Coh-Opt", "D-Coh-Opt", "Seq-D-Coh-Opt"]
n_grid = [40, 60, 80]
r = 50
seed = 7
"#;
        let cfg = ConfigFile::parse(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.model, ModelSpec::Manufactured { s: 12, alpha: 0.03 });
        assert_eq!(cfg.family, Family::Hermite);
        assert_eq!(cfg.n_val, 20_000);
        assert!(cfg.share_candidates);
        assert_eq!(cfg.m, None);
    }

    #[test]
    fn relative_validation_error_limits() {
        let psi = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 1.0, -0.5, 1.0, 0.0]);
        let coeffs = DVector::from_vec(vec![2.0, 1.0]);
        let u = &psi * &coeffs;
        assert_eq!(relative_validation_error(&coeffs, &psi, &u).unwrap(), 0.0);

        let zero = DVector::zeros(2);
        assert_relative_eq!(
            relative_validation_error(&zero, &psi, &u).unwrap(),
            1.0,
            max_relative = 1e-15
        );

        let u0 = DVector::zeros(3);
        assert!(relative_validation_error(&coeffs, &psi, &u0).is_err());
    }

    #[test]
    fn manufactured_self_consistency_gives_zero_error() {
        use crate::sampling::sample_standard;
        let spec = BasisSpec::new(Family::Hermite, 2, 3).unwrap();
        let mut rng = RngStream::new(4, 0).rng();
        let problem = manufacture(&spec, 4, 0.0, &mut rng, 4).unwrap();
        let vpool = sample_standard(&spec, 800, RngStream::new(4, 1)).unwrap();
        let psi = spec.assemble_unweighted(&vpool.points).unwrap();
        let u = &psi * &problem.truth;
        let e = relative_validation_error(&problem.truth, &psi, &u).unwrap();
        assert!(e < 1e-12);
    }

    #[test]
    fn aggregate_statistics_match_hand_arithmetic() {
        let config = ExperimentConfig {
            r: 3,
            strategies: vec![Strategy::CohOpt],
            n_grid: vec![10],
            ..tiny_manufactured_config()
        };
        let mk = |rep: usize, e: f64| RepRecord {
            strategy: Strategy::CohOpt,
            n: 10,
            rep,
            rel_err: e,
            k_used: 3,
            n_evals: 10,
            support_pct: Some(100.0),
            oracle_err: Some(e / 2.0),
        };
        let records = vec![mk(0, 0.1), mk(1, 0.2), mk(2, 0.6)];
        let report = aggregate(&records, &config).unwrap();
        let cell = &report.cells[0];
        assert_relative_eq!(cell.mean_rel_err, 0.3, max_relative = 1e-15);
        // Sample std of {0.1, 0.2, 0.6}: sqrt(((0.04)+(0.01)+(0.09))/2)
        assert_relative_eq!(
            cell.std_rel_err.unwrap(),
            (0.14f64 / 2.0).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(cell.oracle_err.unwrap(), 0.15, max_relative = 1e-12);

        // Constant records give zero std.
        let records = vec![mk(0, 0.5), mk(1, 0.5), mk(2, 0.5)];
        let report = aggregate(&records, &config).unwrap();
        assert_eq!(report.cells[0].std_rel_err.unwrap(), 0.0);
    }

    #[test]
    fn aggregate_single_rep_has_undefined_std_and_missing_cells_error() {
        let config = ExperimentConfig {
            r: 1,
            strategies: vec![Strategy::CohOpt],
            n_grid: vec![10],
            ..tiny_manufactured_config()
        };
        let rec = RepRecord {
            strategy: Strategy::CohOpt,
            n: 10,
            rep: 0,
            rel_err: 0.25,
            k_used: 2,
            n_evals: 10,
            support_pct: None,
            oracle_err: None,
        };
        let report = aggregate(&[rec.clone()], &config).unwrap();
        assert!(report.cells[0].std_rel_err.is_none());
        assert!(report_csv(&report).contains("n/a"));

        let config2 = ExperimentConfig {
            n_grid: vec![10, 20],
            ..config
        };
        let err = aggregate(&[rec], &config2).unwrap_err();
        assert!(matches!(err, Error::MissingCells(_)));
    }

    #[test]
    fn run_strategy_is_deterministic_per_rep() {
        let exp = Experiment::new(tiny_manufactured_config()).unwrap();
        let a = exp.run_strategy(Strategy::SeqDCohOpt, 20, 1).unwrap();
        let b = exp.run_strategy(Strategy::SeqDCohOpt, 20, 1).unwrap();
        assert_eq!(a, b);
        let c = exp.run_strategy(Strategy::SeqDCohOpt, 20, 2).unwrap();
        assert_ne!(a.rel_err, c.rel_err);
    }

    #[test]
    fn sequential_strategy_consumes_exactly_the_budget() {
        let exp = Experiment::new(tiny_manufactured_config()).unwrap();
        for rep in 0..3 {
            let rec = exp.run_strategy(Strategy::SeqDCohOpt, 20, rep).unwrap();
            assert_eq!(rec.n_evals, 20);
            let rec = exp.run_strategy(Strategy::CohOpt, 20, rep).unwrap();
            assert_eq!(rec.n_evals, 20);
            let rec = exp.run_strategy(Strategy::DCohOpt, 20, rep).unwrap();
            assert_eq!(rec.n_evals, 20);
        }
    }

    #[test]
    fn full_run_aggregates_and_oracle_is_a_lower_envelope() {
        let exp = Experiment::new(tiny_manufactured_config()).unwrap();
        let out = exp.run().unwrap();
        assert_eq!(out.records.len(), 3 * 3);
        for rec in &out.records {
            assert!(rec.rel_err >= 0.0);
            assert!(rec.n_evals <= rec.n);
            // Noise-free oracle fits the exact support essentially exactly.
            assert!(rec.oracle_err.unwrap() < 1e-8);
            assert!(rec.oracle_err.unwrap() <= rec.rel_err + 1e-12);
        }
        assert_eq!(out.report.cells.len(), 3);
    }

    #[test]
    fn reports_are_byte_identical_across_reruns() {
        let exp1 = Experiment::new(tiny_manufactured_config()).unwrap();
        let exp2 = Experiment::new(tiny_manufactured_config()).unwrap();
        let a = report_csv(&exp1.run().unwrap().report);
        let b = report_csv(&exp2.run().unwrap().report);
        assert_eq!(a, b);
        assert_eq!(manifest_json(&exp1), manifest_json(&exp2));
    }

    #[test]
    fn unshared_candidates_change_results_but_stay_deterministic() {
        let config = ExperimentConfig {
            share_candidates: false,
            ..tiny_manufactured_config()
        };
        let exp = Experiment::new(config.clone()).unwrap();
        let a = exp.run_strategy(Strategy::DCohOpt, 20, 0).unwrap();
        let b = exp.run_strategy(Strategy::DCohOpt, 20, 0).unwrap();
        assert_eq!(a, b);

        let shared = Experiment::new(tiny_manufactured_config()).unwrap();
        let c = shared.run_strategy(Strategy::DCohOpt, 20, 0).unwrap();
        assert_ne!(a.rel_err, c.rel_err);
    }

    #[test]
    fn physical_model_experiment_smoke() {
        let config = ExperimentConfig {
            model: ModelSpec::Ishigami,
            family: Family::Legendre,
            d: 3,
            p: 3,
            strategies: vec![Strategy::CohOpt],
            n_grid: vec![30],
            m: Some(100),
            r: 2,
            n_val: 400,
            seed: 12,
            share_candidates: true,
        };
        let exp = Experiment::new(config).unwrap();
        let out = exp.run().unwrap();
        for rec in &out.records {
            assert!(rec.rel_err.is_finite() && rec.rel_err >= 0.0);
            assert!(rec.support_pct.is_none());
            assert!(rec.oracle_err.is_none());
        }
    }

    #[test]
    fn experiment_validates_configuration() {
        let bad_m = ExperimentConfig {
            m: Some(10),
            ..tiny_manufactured_config()
        };
        assert!(Experiment::new(bad_m).is_err());

        let bad_family = ExperimentConfig {
            model: ModelSpec::Ishigami,
            family: Family::Hermite,
            d: 3,
            ..tiny_manufactured_config()
        };
        assert!(Experiment::new(bad_family).is_err());
    }

    #[test]
    fn oracle_solution_is_exact_without_noise() {
        use crate::sampling::sample_coherence_optimal;
        let spec = BasisSpec::new(Family::Hermite, 2, 4).unwrap();
        let pool = sample_coherence_optimal(
            &spec,
            120,
            RngStream::new(21, 0),
            McmcParams::default(),
        )
        .unwrap();
        let phi_c = spec.assemble_matrix(&pool.points, &pool.weights).unwrap();
        let psi_c = spec.assemble_unweighted(&pool.points).unwrap();
        let mut rng = RngStream::new(21, 1).rng();
        let problem = manufacture(&spec, 4, 0.0, &mut rng, 21).unwrap();
        let clean = &psi_c * &problem.truth;
        let v_c = DVector::from_fn(120, |i, _| pool.weights[i] * clean[i]);
        let coeffs = oracle_solution(&problem, &phi_c, &v_c, 20).unwrap();
        assert!((coeffs - &problem.truth).norm() < 1e-10);
        assert!(oracle_solution(&problem, &phi_c, &v_c, 3).is_err());
    }

    #[test]
    fn cdf_study_degenerate_order_zero_is_identical() {
        let study = cdf_study(Family::Legendre, 2, 0, 4, 10, 25, 5).unwrap();
        assert_eq!(study.mc.len(), 25);
        assert_eq!(study.coh.len(), 25);
        for (a, b) in study.mc.iter().zip(study.coh.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        assert_eq!(study.dominance_pct, 100.0);
        // Identical CDFs cannot strictly dominate.
        assert!(!study.coh_dominates_mc);
    }
}
