//! Benchmark quantities of interest: manufactured sparse expansions with
//! multiplicative noise, the Duffing oscillator displacement at t = 4, the
//! wing-weight function, and the Ishigami function.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

use crate::basis::BasisSpec;
use crate::error::{Error, Result};

/// A synthetic QoI with known sparse coefficients in a given basis.
#[derive(Clone, Debug)]
pub struct ManufacturedProblem {
    pub spec: BasisSpec,
    /// Length-P truth vector with exactly `s` nonzeros.
    pub truth: DVector<f64>,
    /// Nonzero positions, ascending.
    pub support: Vec<usize>,
    pub s: usize,
    /// Multiplicative noise level α.
    pub alpha: f64,
    pub seed: u64,
}

/// Draws `s` nonzero positions uniformly without replacement and i.i.d.
/// standard normal values for them.
pub fn manufacture(
    spec: &BasisSpec,
    s: usize,
    alpha: f64,
    rng: &mut ChaCha8Rng,
    seed: u64,
) -> Result<ManufacturedProblem> {
    let p = spec.len();
    if s > p {
        return Err(Error::invalid(format!(
            "sparsity s = {s} exceeds the basis size P = {p}"
        )));
    }
    if s == 0 {
        return Err(Error::invalid("sparsity s must be at least 1"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid("noise level alpha must be non-negative"));
    }
    let mut support = rand::seq::index::sample(rng, p, s).into_vec();
    support.sort_unstable();
    let mut truth = DVector::zeros(p);
    for &i in &support {
        truth[i] = rng.sample(StandardNormal);
    }
    Ok(ManufacturedProblem {
        spec: spec.clone(),
        truth,
        support,
        s,
        alpha,
        seed,
    })
}

impl ManufacturedProblem {
    /// Weighted right-hand side v_i = w_i (Ψ(i,:)c + α|Ψ(i,:)c| x_i) over the
    /// supplied unweighted basis rows.
    pub fn noisy_rhs(
        &self,
        psi_rows: &DMatrix<f64>,
        weights: &DVector<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<DVector<f64>> {
        if psi_rows.ncols() != self.spec.len() {
            return Err(Error::ShapeMismatch(format!(
                "basis rows have {} columns, expected P = {}",
                psi_rows.ncols(),
                self.spec.len()
            )));
        }
        if psi_rows.nrows() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} weights",
                psi_rows.nrows(),
                weights.len()
            )));
        }
        let clean = psi_rows * &self.truth;
        let mut v = DVector::zeros(clean.len());
        for i in 0..clean.len() {
            let x: f64 = rng.sample(StandardNormal);
            v[i] = weights[i] * (clean[i] + self.alpha * clean[i].abs() * x);
        }
        Ok(v)
    }
}

/// Physical benchmark models; all inputs are i.i.d. U(−1, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhysicalModel {
    Duffing,
    WingWeight,
    Ishigami,
}

impl PhysicalModel {
    pub fn dim(&self) -> usize {
        match self {
            PhysicalModel::Duffing => 3,
            PhysicalModel::WingWeight => 10,
            PhysicalModel::Ishigami => 3,
        }
    }

    pub fn eval(&self, xi: &[f64]) -> Result<f64> {
        match self {
            PhysicalModel::Duffing => duffing_qoi(xi),
            PhysicalModel::WingWeight => wing_weight(xi),
            PhysicalModel::Ishigami => ishigami(xi),
        }
    }
}

impl std::str::FromStr for PhysicalModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "duffing" => Ok(PhysicalModel::Duffing),
            "wingweight" | "wing-weight" => Ok(PhysicalModel::WingWeight),
            "ishigami" => Ok(PhysicalModel::Ishigami),
            other => Err(Error::Parse(format!("unknown model `{other}`"))),
        }
    }
}

fn check_cube(xi: &[f64], dim: usize) -> Result<()> {
    if xi.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "expected {dim} inputs, got {}",
            xi.len()
        )));
    }
    for (i, &x) in xi.iter().enumerate() {
        if !(-1.0..=1.0).contains(&x) {
            return Err(Error::domain(format!(
                "input {i} = {x} outside [-1, 1]"
            )));
        }
    }
    Ok(())
}

/// Displacement u(ξ, 4) of the free-vibration Duffing oscillator
/// ü + 2ω₁ω₂u̇ + ω₁²(u + ω₃u³) = 0 with u(0) = 1, u̇(0) = 0 and
/// ω₁ = 2π(1 + 0.2ξ₁), ω₂ = 0.05(1 + 0.05ξ₂), ω₃ = −0.5(1 + 0.5ξ₃).
pub fn duffing_qoi(xi: &[f64]) -> Result<f64> {
    check_cube(xi, 3)?;
    let omega1 = 2.0 * PI * (1.0 + 0.2 * xi[0]);
    let omega2 = 0.05 * (1.0 + 0.05 * xi[1]);
    let omega3 = -0.5 * (1.0 + 0.5 * xi[2]);
    Ok(duffing_displacement(omega1, omega2, omega3, 4.0))
}

/// Integrates the Duffing equation to `t_end` with an adaptive
/// Dormand–Prince 5(4) pair at absolute/relative tolerance 1e-10 and
/// returns the displacement.
pub fn duffing_displacement(omega1: f64, omega2: f64, omega3: f64, t_end: f64) -> f64 {
    let rhs = |_t: f64, y: &[f64; 2]| -> [f64; 2] {
        [
            y[1],
            -2.0 * omega1 * omega2 * y[1] - omega1 * omega1 * (y[0] + omega3 * y[0].powi(3)),
        ]
    };
    let y = dopri5(rhs, [1.0, 0.0], 0.0, t_end, 1e-10, 1e-10);
    y[0]
}

/// Dormand–Prince RK5(4) with standard step-size control.
fn dopri5<F>(f: F, y0: [f64; 2], t0: f64, t_end: f64, rtol: f64, atol: f64) -> [f64; 2]
where
    F: Fn(f64, &[f64; 2]) -> [f64; 2],
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    // 5th-order weights equal the last A row (FSAL); 4th-order weights:
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut t = t0;
    let mut y = y0;
    let mut h = (t_end - t0).abs().min(1e-2).max(1e-6);
    let mut k = [[0.0f64; 2]; 7];
    k[0] = f(t, &y);

    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        for stage in 0..6 {
            let mut ys = y;
            for j in 0..=stage {
                let a = A[stage][j];
                if a != 0.0 {
                    ys[0] += h * a * k[j][0];
                    ys[1] += h * a * k[j][1];
                }
            }
            k[stage + 1] = f(t + C[stage] * h, &ys);
        }
        // 5th-order solution is the last stage's argument (FSAL property).
        let mut y5 = y;
        for j in 0..6 {
            let a = A[5][j];
            if a != 0.0 {
                y5[0] += h * a * k[j][0];
                y5[1] += h * a * k[j][1];
            }
        }
        let mut y4 = y;
        for j in 0..7 {
            let b = B4[j];
            if b != 0.0 {
                y4[0] += h * b * k[j][0];
                y4[1] += h * b * k[j][1];
            }
        }
        let mut err = 0.0f64;
        for i in 0..2 {
            let scale = atol + rtol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / scale;
            err += e * e;
        }
        err = (err / 2.0).sqrt();

        if err <= 1.0 {
            t += h;
            y = y5;
            k[0] = k[6]; // FSAL
        } else {
            k[0] = f(t, &y);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(t_end - t0);
        if h < 1e-14 {
            break;
        }
        if err > 1.0 {
            k[0] = f(t, &y);
        }
    }
    y
}

/// Wing-weight input ranges; inputs map affinely from [-1, 1] onto them.
const WING_RANGES: [(f64, f64); 10] = [
    (150.0, 200.0),   // S_w, wing area (ft^2)
    (220.0, 300.0),   // W_fw, weight of fuel in the wing (lb)
    (6.0, 10.0),      // A, aspect ratio
    (-10.0, 10.0),    // Lambda, quarter-chord sweep (degrees)
    (16.0, 45.0),     // q, dynamic pressure at cruise (lb/ft^2)
    (0.5, 1.0),       // lambda, taper ratio
    (0.08, 0.18),     // t_c, aerofoil thickness-to-chord ratio
    (2.5, 6.0),       // N_z, ultimate load factor
    (1700.0, 2500.0), // W_dg, flight design gross weight (lb)
    (0.025, 0.08),    // W_p, paint weight (lb/ft^2)
];

/// Wing weight of a light aircraft as a function of ten scaled inputs.
pub fn wing_weight(xi: &[f64]) -> Result<f64> {
    check_cube(xi, 10)?;
    let mut p = [0.0f64; 10];
    for (i, &(lo, hi)) in WING_RANGES.iter().enumerate() {
        p[i] = lo + (xi[i] + 1.0) * (hi - lo) / 2.0;
    }
    let [s_w, w_fw, aspect, sweep_deg, q, taper, t_c, n_z, w_dg, w_p] = p;
    let sweep = sweep_deg.to_radians();
    let value = 0.036
        * s_w.powf(0.758)
        * w_fw.powf(0.0035)
        * (aspect / sweep.cos().powi(2)).powf(0.6)
        * q.powf(0.006)
        * taper.powf(0.04)
        * (100.0 * t_c / sweep.cos()).powf(-0.3)
        * (n_z * w_dg).powf(0.49)
        + s_w * w_p;
    Ok(value)
}

/// Ishigami function sin(πξ₁) + 7 sin²(πξ₂) + 0.1 (πξ₃)⁴ sin(πξ₁).
pub fn ishigami(xi: &[f64]) -> Result<f64> {
    check_cube(xi, 3)?;
    let x1 = PI * xi[0];
    let x2 = PI * xi[1];
    let x3 = PI * xi[2];
    Ok(x1.sin() + 7.0 * x2.sin().powi(2) + 0.1 * x3.powi(4) * x1.sin())
}
