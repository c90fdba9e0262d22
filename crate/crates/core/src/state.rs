//! Parameterized density-matrix families, eigensystems and the Peres test.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, hermitian_eigen, CMat, Eigensystem, I};

pub const TOL_PSD: f64 = 1e-10;
const TWO_SQRT2: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Hermitian, unit-trace, positive semidefinite matrix of dimension 2, 3 or 4.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMat);

impl DensityMatrix {
    pub fn new(m: CMat) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || !(2..=4).contains(&n) {
            return Err(Error::Dimension {
                expected: "square matrix of size 2, 3 or 4".into(),
                got: n,
            });
        }
        let dev = linalg::hermitian_deviation(&m);
        if dev > 1e-12 {
            return Err(Error::NonHermitianInput(dev));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(Error::domain(format!("trace {tr} differs from 1")));
        }
        let es = hermitian_eigen(&m)?;
        if es.values[0] < -TOL_PSD {
            return Err(Error::domain(format!(
                "negative eigenvalue {}",
                es.values[0]
            )));
        }
        Ok(Self(m))
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self(CMat::identity(n, n) * c(1.0 / n as f64))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// Eigenvalues ascending with orthonormal eigenvectors.
pub fn eigensystem(rho: &DensityMatrix) -> Result<Eigensystem> {
    hermitian_eigen(rho.matrix())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint(pub Vec<f64>);

impl ParamPoint {
    pub fn new(v: impl Into<Vec<f64>>) -> Self {
        Self(v.into())
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ParamPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyId {
    BlochQubit,
    EscortQubit,
    QutritV,
    ArBell,
    JaynesAlpha,
    JaynesAlphaBivariate,
    Tlb,
    TlbEscort,
}

impl FamilyId {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyId::BlochQubit => "bloch_qubit",
            FamilyId::EscortQubit => "escort_qubit",
            FamilyId::QutritV => "qutrit_v",
            FamilyId::ArBell => "ar_bell",
            FamilyId::JaynesAlpha => "jaynes_alpha",
            FamilyId::JaynesAlphaBivariate => "jaynes_alpha_bivariate",
            FamilyId::Tlb => "tlb",
            FamilyId::TlbEscort => "tlb_escort",
        }
    }
}

/// A parameter that is either held fixed or exposed as a chart coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Param {
    Fixed(f64),
    Free,
}

impl Param {
    fn fixed(self) -> Option<f64> {
        match self {
            Param::Fixed(v) => Some(v),
            Param::Free => None,
        }
    }
}

/// Bell-diagonal data: weights in the order (Phi+, Phi-, Psi+, Psi-) and their
/// derivatives along each chart coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct BellPoint {
    pub weights: [f64; 4],
    pub grad: Vec<[f64; 4]>,
}

impl BellPoint {
    /// Weights proportional to exp(l_k); `dl[i][k]` is the derivative of l_k along coordinate i.
    pub fn from_log_weights(l: [f64; 4], dl: &[[f64; 4]]) -> Self {
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = l.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let p = [e[0] / s, e[1] / s, e[2] / s, e[3] / s];
        let grad = dl
            .iter()
            .map(|d| {
                let mean: f64 = (0..4).filter(|&k| p[k] > 0.0).map(|k| p[k] * d[k]).sum();
                let mut g = [0.0; 4];
                for k in 0..4 {
                    if p[k] > 0.0 {
                        g[k] = p[k] * (d[k] - mean);
                    }
                }
                g
            })
            .collect();
        Self { weights: p, grad }
    }

    pub fn matrix(&self) -> CMat {
        bell_diagonal(&self.weights)
    }

    pub fn differential(&self, i: usize) -> CMat {
        bell_diagonal(&self.grad[i])
    }

    pub fn is_psd(&self) -> bool {
        self.weights.iter().all(|&w| w >= -TOL_PSD)
    }

    /// Peres criterion for a Bell-diagonal operator: partial-transpose eigenvalues are 1/2 - p_k.
    pub fn is_ppt(&self) -> bool {
        self.weights.iter().all(|&w| w <= 0.5 + TOL_PSD)
    }
}

/// Bell vectors (Phi+, Phi-, Psi+, Psi-) in the computational basis |00>,|01>,|10>,|11>.
pub fn bell_vectors() -> [DVector<Complex64>; 4] {
    let h = c(std::f64::consts::FRAC_1_SQRT_2);
    let z = c(0.0);
    [
        DVector::from_vec(vec![h, z, z, h]),
        DVector::from_vec(vec![h, z, z, -h]),
        DVector::from_vec(vec![z, h, h, z]),
        DVector::from_vec(vec![z, h, -h, z]),
    ]
}

pub fn bell_diagonal(w: &[f64; 4]) -> CMat {
    let mut m = CMat::zeros(4, 4);
    for (k, v) in bell_vectors().iter().enumerate() {
        m += v * v.adjoint() * c(w[k]);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

pub fn partial_transpose_matrix(m: &CMat, sub: Subsystem) -> Result<CMat> {
    if m.nrows() != 4 || m.ncols() != 4 {
        return Err(Error::Dimension {
            expected: "4 (two qubits)".into(),
            got: m.nrows(),
        });
    }
    let mut out = CMat::zeros(4, 4);
    for i1 in 0..2 {
        for i2 in 0..2 {
            for j1 in 0..2 {
                for j2 in 0..2 {
                    let (r, col) = match sub {
                        Subsystem::B => (2 * i1 + j2, 2 * j1 + i2),
                        Subsystem::A => (2 * j1 + i2, 2 * i1 + j2),
                    };
                    out[(r, col)] = m[(2 * i1 + i2, 2 * j1 + j2)];
                }
            }
        }
    }
    Ok(out)
}

pub fn partial_transpose(rho: &DensityMatrix, sub: Subsystem) -> Result<CMat> {
    partial_transpose_matrix(rho.matrix(), sub)
}

/// Peres verdict; exact for two qubits. Qubits are trivially separable.
pub fn is_separable(rho: &DensityMatrix) -> Result<bool> {
    match rho.dim() {
        2 => Ok(true),
        4 => {
            let pt = partial_transpose(rho, Subsystem::B)?;
            Ok(hermitian_eigen(&pt)?.values[0] >= -TOL_PSD)
        }
        n => Err(Error::Dimension {
            expected: "2 or 4".into(),
            got: n,
        }),
    }
}

/// Bell weights of the AR family (unnormalized powers a_k^{1/q}).
pub fn ar_weights(q: f64, b: f64, s2: f64) -> [f64; 4] {
    let a = [s2 + TWO_SQRT2 * b, 8.0 - s2, 8.0 - s2, s2 - TWO_SQRT2 * b];
    normalize_powers(a, 1.0 / q)
}

fn normalize_powers(a: [f64; 4], e: f64) -> [f64; 4] {
    let p = a.map(|x| if x > 0.0 { x.powf(e) } else { 0.0 });
    let s: f64 = p.iter().sum();
    p.map(|x| x / s)
}

fn log_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// AR family in slack coordinates u = 8 - s2, w = s2 - 2 sqrt2 b on the b >= 0 half.
pub fn ar_point_slack(q: f64, u: f64, w: f64) -> BellPoint {
    ar_point_slack_with(q, u, w, (8.0 - u) + (8.0 - u - w))
}

/// As `ar_point_slack`, with a_1 = 16 - 2u - w supplied by the caller (to keep it accurate
/// near the corner where it vanishes).
pub fn ar_point_slack_with(q: f64, u: f64, w: f64, a1: f64) -> BellPoint {
    let a = [a1, u, u, w];
    let l = a.map(|x| log_or_neg_inf(x) / q);
    let du = [-2.0 / a1, 1.0 / u, 1.0 / u, 0.0].map(|x| x / q);
    let dw = [-1.0 / a1, 0.0, 0.0, 1.0 / w].map(|x| x / q);
    BellPoint::from_log_weights(l, &[du, dw])
}

/// Bell weights of the trivariate Jaynes model (may be negative outside the state space).
pub fn jaynes_weights(alpha: f64, b: f64, s2: f64) -> [f64; 4] {
    let p4 = (s2 / 8.0 - b / TWO_SQRT2) / (alpha * (1.0 + alpha));
    let p1 = b / TWO_SQRT2 + alpha * p4;
    let m = 0.5 * (1.0 - p1 - p4);
    [p1, m, m, p4]
}

/// d(weights)/d(b, s2) for the trivariate Jaynes model.
pub fn jaynes_weight_grad(alpha: f64) -> [[f64; 4]; 2] {
    let k = alpha * (1.0 + alpha);
    let d4b = -1.0 / (TWO_SQRT2 * k);
    let d4s = 1.0 / (8.0 * k);
    let d1b = 1.0 / TWO_SQRT2 + alpha * d4b;
    let d1s = alpha * d4s;
    [
        [d1b, -0.5 * (d1b + d4b), -0.5 * (d1b + d4b), d4b],
        [d1s, -0.5 * (d1s + d4s), -0.5 * (d1s + d4s), d4s],
    ]
}

/// Jaynes model in the same slack coordinates as `ar_point_slack`.
pub fn jaynes_point_slack(alpha: f64, u: f64, w: f64) -> BellPoint {
    jaynes_point_slack_with(alpha, u, w, 8.0 - u - w)
}

/// As `jaynes_point_slack`, with rest = 8 - u - w supplied by the caller.
pub fn jaynes_point_slack_with(alpha: f64, u: f64, w: f64, rest: f64) -> BellPoint {
    let k = alpha * (1.0 + alpha);
    let p4 = w / (8.0 * k);
    let p1 = rest / 8.0 + w / (8.0 * (1.0 + alpha));
    let m = (u + w * (1.0 - 1.0 / alpha)) / 16.0;
    let du = [-1.0 / 8.0, 1.0 / 16.0, 1.0 / 16.0, 0.0];
    let dw1 = -1.0 / 8.0 + 1.0 / (8.0 * (1.0 + alpha));
    let dw = [
        dw1,
        (1.0 - 1.0 / alpha) / 16.0,
        (1.0 - 1.0 / alpha) / 16.0,
        1.0 / (8.0 * k),
    ];
    BellPoint {
        weights: [p1, m, m, p4],
        grad: vec![du, dw],
    }
}

/// How a curve inherits a one-dimensional measure from the (b, s2) chart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMeasure {
    /// Pull back along the curve s2 = 4 + b^2/2.
    Induced,
    /// Use the b-direction at fixed s2.
    FixedDispersion,
}

pub fn bivariate_dispersion(b: f64) -> f64 {
    4.0 + 0.5 * b * b
}

pub fn bivariate_point(alpha: f64, b: f64, measure: CurveMeasure) -> BellPoint {
    let x = b / TWO_SQRT2;
    bivariate_point_slack(alpha, x, 1.0 - x, measure)
}

/// Curve point at b = 2 sqrt2 x, with xc = 1 - x supplied by the caller. On the curve
/// p4 = (b - 2 sqrt2)^2 / (16 alpha (1 + alpha)), so everything is written in xc.
pub fn bivariate_point_slack(alpha: f64, x: f64, xc: f64, measure: CurveMeasure) -> BellPoint {
    let k = alpha * (1.0 + alpha);
    let p4 = xc * xc / (2.0 * k);
    let p1 = x + alpha * p4;
    let m = 0.5 * (xc - (1.0 + alpha) * p4);
    let g = match measure {
        CurveMeasure::Induced => {
            let d4 = -xc / (TWO_SQRT2 * k);
            let d1 = 1.0 / TWO_SQRT2 + alpha * d4;
            [d1, -0.5 * (d1 + d4), -0.5 * (d1 + d4), d4]
        }
        CurveMeasure::FixedDispersion => jaynes_weight_grad(alpha)[0],
    };
    BellPoint {
        weights: [p1, m, m, p4],
        grad: vec![g],
    }
}

pub fn tlb_weights(x: f64, y: f64, z: f64) -> [f64; 4] {
    [
        (1.0 - x) / 4.0,
        (1.0 - y) / 4.0,
        (1.0 - z) / 4.0,
        (1.0 + x + y + z) / 4.0,
    ]
}

/// TLB family in simplex coordinates (p1, p2, p3); p4 is passed separately for accuracy.
pub fn tlb_point_simplex(p: [f64; 4]) -> BellPoint {
    BellPoint {
        weights: p,
        grad: vec![
            [1.0, 0.0, 0.0, -1.0],
            [0.0, 1.0, 0.0, -1.0],
            [0.0, 0.0, 1.0, -1.0],
        ],
    }
}

/// Rational map taking AR coordinates at q = 1/2 to the q = 1 coordinates of the same state.
pub fn reparameterize_ar(b_half: f64, sigma2_half: f64) -> Result<(f64, f64)> {
    let a = [
        sigma2_half + TWO_SQRT2 * b_half,
        8.0 - sigma2_half,
        sigma2_half - TWO_SQRT2 * b_half,
    ];
    if a.iter().any(|&x| x < -TOL_PSD) {
        return Err(Error::InfeasiblePoint {
            family: "ar_bell".into(),
            detail: format!("(b, sigma2) = ({b_half}, {sigma2_half})"),
        });
    }
    let s4 = sigma2_half * sigma2_half;
    let d = 4.0 * b_half * b_half + s4 - 8.0 * sigma2_half + 32.0;
    Ok((
        8.0 * b_half * sigma2_half / d,
        4.0 * (8.0 * b_half * b_half + s4) / d,
    ))
}

/// Named parameterization with box, feasibility predicate and state builder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyChart {
    pub id: FamilyId,
    pub q: Param,
    pub alpha: Param,
}

const Q_RANGE: (f64, f64) = (0.5, 500.0);

impl FamilyChart {
    fn with(id: FamilyId, q: Param, alpha: Param) -> Self {
        Self { id, q, alpha }
    }
    pub fn bloch_qubit() -> Self {
        Self::with(FamilyId::BlochQubit, Param::Fixed(1.0), Param::Fixed(1.0))
    }
    /// Escort qubit with q as fourth coordinate.
    pub fn escort_qubit() -> Self {
        Self::with(FamilyId::EscortQubit, Param::Free, Param::Fixed(1.0))
    }
    pub fn escort_qubit_at(q: f64) -> Self {
        Self::with(FamilyId::EscortQubit, Param::Fixed(q), Param::Fixed(1.0))
    }
    pub fn qutrit_v() -> Self {
        Self::with(FamilyId::QutritV, Param::Fixed(1.0), Param::Fixed(1.0))
    }
    /// Escort qutrit family with q as fifth coordinate.
    pub fn qutrit_v_escort() -> Self {
        Self::with(FamilyId::QutritV, Param::Free, Param::Fixed(1.0))
    }
    pub fn ar_bell(q: f64) -> Self {
        Self::with(FamilyId::ArBell, Param::Fixed(q), Param::Fixed(1.0))
    }
    /// AR family with coordinates (q, b, s2).
    pub fn ar_bell_extended() -> Self {
        Self::with(FamilyId::ArBell, Param::Free, Param::Fixed(1.0))
    }
    pub fn jaynes_alpha(alpha: f64) -> Self {
        Self::with(
            FamilyId::JaynesAlpha,
            Param::Fixed(1.0),
            Param::Fixed(alpha),
        )
    }
    /// Jaynes model with coordinates (alpha, b, s2).
    pub fn jaynes_alpha_extended() -> Self {
        Self::with(FamilyId::JaynesAlpha, Param::Fixed(1.0), Param::Free)
    }
    pub fn jaynes_bivariate(alpha: f64) -> Self {
        Self::with(
            FamilyId::JaynesAlphaBivariate,
            Param::Fixed(1.0),
            Param::Fixed(alpha),
        )
    }
    pub fn tlb() -> Self {
        Self::with(FamilyId::Tlb, Param::Fixed(1.0), Param::Fixed(1.0))
    }
    pub fn tlb_escort() -> Self {
        Self::with(FamilyId::TlbEscort, Param::Free, Param::Fixed(1.0))
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let free_q = self.q == Param::Free;
        match self.id {
            FamilyId::BlochQubit => vec!["r", "theta1", "theta2"],
            FamilyId::EscortQubit => {
                if free_q {
                    vec!["r", "theta1", "theta2", "q"]
                } else {
                    vec!["r", "theta1", "theta2"]
                }
            }
            FamilyId::QutritV => {
                if free_q {
                    vec!["v", "r", "theta1", "theta2", "q"]
                } else {
                    vec!["v", "r", "theta1", "theta2"]
                }
            }
            FamilyId::ArBell => {
                if free_q {
                    vec!["q", "b", "sigma2"]
                } else {
                    vec!["b", "sigma2"]
                }
            }
            FamilyId::JaynesAlpha => {
                if self.alpha == Param::Free {
                    vec!["alpha", "b", "sigma2"]
                } else {
                    vec!["b", "sigma2"]
                }
            }
            FamilyId::JaynesAlphaBivariate => vec!["b"],
            FamilyId::Tlb => vec!["x", "y", "z"],
            FamilyId::TlbEscort => vec!["x", "y", "z", "q"],
        }
    }

    pub fn dim(&self) -> usize {
        self.param_names().len()
    }

    pub fn matrix_dim(&self) -> usize {
        match self.id {
            FamilyId::BlochQubit | FamilyId::EscortQubit => 2,
            FamilyId::QutritV => 3,
            _ => 4,
        }
    }

    pub fn is_bell_diagonal(&self) -> bool {
        self.matrix_dim() == 4
    }

    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        use std::f64::consts::PI;
        let amax = self.alpha.fixed().map_or(10.0, |a| a.abs().max(1.0));
        self.param_names()
            .iter()
            .map(|&n| match n {
                "r" | "v" => (0.0, 1.0),
                "theta1" => (0.0, PI),
                "theta2" => (0.0, 2.0 * PI),
                "q" => Q_RANGE,
                "alpha" => (-10.0, 10.0),
                "b" if self.id == FamilyId::ArBell => (-TWO_SQRT2, TWO_SQRT2),
                "b" => (-TWO_SQRT2 * amax, TWO_SQRT2 * amax),
                "sigma2" if self.id == FamilyId::ArBell => (0.0, 8.0),
                "sigma2" => (0.0, 8.0 * amax * amax),
                _ => (-3.0, 1.0),
            })
            .collect()
    }

    pub fn in_box(&self, p: &ParamPoint) -> bool {
        p.len() == self.dim()
            && self
                .bounding_box()
                .iter()
                .zip(&p.0)
                .all(|(&(lo, hi), &x)| x >= lo - 1e-12 && x <= hi + 1e-12)
    }

    fn check_point(&self, p: &ParamPoint) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::Dimension {
                expected: format!("{} coordinates", self.dim()),
                got: p.len(),
            });
        }
        if !self.in_box(p) {
            return Err(Error::domain(format!(
                "{:?} outside the {} bounding box",
                p.0,
                self.id.name()
            )));
        }
        Ok(())
    }

    fn q_at<'a>(&self, p: &'a ParamPoint) -> (f64, &'a [f64]) {
        match (self.id, self.q) {
            (FamilyId::ArBell, Param::Free) => (p[0], &p.0[1..]),
            (_, Param::Free) => (p.0[p.len() - 1], &p.0[..p.len() - 1]),
            (_, Param::Fixed(q)) => (q, &p.0[..]),
        }
    }

    /// Bell weights and derivatives for the 4x4 families.
    pub fn bell_point(&self, p: &ParamPoint) -> Result<BellPoint> {
        self.check_point(p)?;
        match self.id {
            FamilyId::ArBell => {
                let (q, rest) = self.q_at(p);
                let (b, s2) = (rest[0], rest[1]);
                let a = [s2 + TWO_SQRT2 * b, 8.0 - s2, 8.0 - s2, s2 - TWO_SQRT2 * b];
                let l = a.map(|x| log_or_neg_inf(x) / q);
                let db = [TWO_SQRT2 / a[0], 0.0, 0.0, -TWO_SQRT2 / a[3]].map(|x| x / q);
                let ds = [1.0 / a[0], -1.0 / a[1], -1.0 / a[2], 1.0 / a[3]].map(|x| x / q);
                let mut grads = Vec::new();
                if self.q == Param::Free {
                    grads.push(a.map(|x| if x > 0.0 { -x.ln() / (q * q) } else { 0.0 }));
                }
                grads.push(db);
                grads.push(ds);
                Ok(BellPoint::from_log_weights(l, &grads))
            }
            FamilyId::JaynesAlpha => {
                let (alpha, b, s2) = match self.alpha {
                    Param::Fixed(a) => (a, p[0], p[1]),
                    Param::Free => (p[0], p[1], p[2]),
                };
                if alpha * (1.0 + alpha) == 0.0 {
                    return Err(Error::domain("alpha in {-1, 0} leaves the model undefined"));
                }
                let w = jaynes_weights(alpha, b, s2);
                let [gb, gs] = jaynes_weight_grad(alpha);
                let mut grads = Vec::new();
                if self.alpha == Param::Free {
                    let h = 1e-6 * alpha.abs().max(1.0);
                    let wp = jaynes_weights(alpha + h, b, s2);
                    let wm = jaynes_weights(alpha - h, b, s2);
                    grads.push([0, 1, 2, 3].map(|k| (wp[k] - wm[k]) / (2.0 * h)));
                }
                grads.push(gb);
                grads.push(gs);
                Ok(BellPoint {
                    weights: w,
                    grad: grads,
                })
            }
            FamilyId::JaynesAlphaBivariate => {
                let alpha = self.alpha.fixed().unwrap_or(1.0);
                if alpha * (1.0 + alpha) == 0.0 {
                    return Err(Error::domain("alpha in {-1, 0} leaves the model undefined"));
                }
                Ok(bivariate_point(alpha, p[0], CurveMeasure::Induced))
            }
            FamilyId::Tlb => {
                let w = tlb_weights(p[0], p[1], p[2]);
                let g = vec![
                    [-0.25, 0.0, 0.0, 0.25],
                    [0.0, -0.25, 0.0, 0.25],
                    [0.0, 0.0, -0.25, 0.25],
                ];
                Ok(BellPoint {
                    weights: w,
                    grad: g,
                })
            }
            FamilyId::TlbEscort => {
                let (q, rest) = self.q_at(p);
                let w = tlb_weights(rest[0], rest[1], rest[2]);
                let l = w.map(|x| q * log_or_neg_inf(x));
                let mut grads: Vec<[f64; 4]> = (0..3)
                    .map(|i| {
                        let mut d = [0.0; 4];
                        d[i] = -0.25 * q / w[i];
                        d[3] = 0.25 * q / w[3];
                        d
                    })
                    .collect();
                grads.push(w.map(log_or_neg_inf));
                Ok(BellPoint::from_log_weights(l, &grads))
            }
            _ => Err(Error::domain(format!(
                "{} is not Bell-diagonal",
                self.id.name()
            ))),
        }
    }

    pub fn feasible(&self, p: &ParamPoint) -> bool {
        if self.check_point(p).is_err() {
            return false;
        }
        match self.id {
            FamilyId::BlochQubit | FamilyId::EscortQubit => p[0] >= 0.0 && p[0] <= 1.0 + TOL_PSD,
            FamilyId::QutritV => {
                let (v, r) = (p[0], p[1]);
                (0.0..=1.0 + TOL_PSD).contains(&v) && r >= 0.0 && r <= v + TOL_PSD
            }
            FamilyId::ArBell => {
                let (_, rest) = self.q_at(p);
                let (b, s2) = (rest[0], rest[1]);
                s2 <= 8.0 + TOL_PSD && s2 + TOL_PSD >= TWO_SQRT2 * b.abs()
            }
            _ => self.bell_point(p).map(|bp| bp.is_psd()).unwrap_or(false),
        }
    }

    /// Raw matrix for a point inside the bounding box; no feasibility check.
    pub fn matrix(&self, p: &ParamPoint) -> Result<CMat> {
        self.check_point(p)?;
        match self.id {
            FamilyId::BlochQubit | FamilyId::EscortQubit => {
                let (q, rest) = self.q_at(p);
                let (r, t1, t2) = (rest[0], rest[1], rest[2]);
                let rq = escort_radius(r, q);
                Ok(bloch_matrix(rq, t1, t2))
            }
            FamilyId::QutritV => {
                let (q, rest) = self.q_at(p);
                Ok(qutrit_matrix(rest[0], rest[1], rest[2], rest[3], q))
            }
            _ => Ok(self.bell_point(p)?.matrix()),
        }
    }

    pub fn build(&self, p: &ParamPoint) -> Result<DensityMatrix> {
        self.check_point(p)?;
        if !self.feasible(p) {
            return Err(Error::InfeasiblePoint {
                family: self.id.name().into(),
                detail: format!("{:?}", p.0),
            });
        }
        let m = self.matrix(p)?;
        DensityMatrix::new(m)
    }

    /// Exact derivative of the matrix along coordinate `i`, where one is available.
    pub fn analytic_differential(&self, p: &ParamPoint, i: usize) -> Option<CMat> {
        match self.id {
            FamilyId::BlochQubit => {
                let (r, t1, t2) = (p[0], p[1], p[2]);
                let d = bloch_cartesian_grad(r, t1, t2)[i];
                let s = pauli_combination(d);
                Some(s * c(0.5))
            }
            FamilyId::QutritV if self.q == Param::Fixed(1.0) => {
                let (r, t1, t2) = (p[1], p[2], p[3]);
                let (dv, dxyz) = if i == 0 {
                    (1.0, [0.0; 3])
                } else {
                    (0.0, bloch_cartesian_grad(r, t1, t2)[i - 1])
                };
                let mut m = CMat::zeros(3, 3);
                m[(0, 0)] = c(0.5 * (dv + dxyz[2]));
                m[(2, 2)] = c(0.5 * (dv - dxyz[2]));
                m[(1, 1)] = c(-dv);
                m[(0, 2)] = c(0.5 * dxyz[0]) - I * 0.5 * dxyz[1];
                m[(2, 0)] = c(0.5 * dxyz[0]) + I * 0.5 * dxyz[1];
                Some(m)
            }
            _ if self.is_bell_diagonal() => self.bell_point(p).ok().map(|bp| bp.differential(i)),
            _ => None,
        }
    }

    /// Eigensystem known in closed form (Bell basis), where applicable.
    pub fn exact_eigensystem(&self, p: &ParamPoint) -> Option<(BellPoint, Eigensystem)> {
        if !self.is_bell_diagonal() {
            return None;
        }
        let bp = self.bell_point(p).ok()?;
        let mut idx = [0usize, 1, 2, 3];
        idx.sort_by(|&a, &b| bp.weights[a].total_cmp(&bp.weights[b]));
        let vecs = bell_vectors();
        let mut v = CMat::zeros(4, 4);
        for (col, &k) in idx.iter().enumerate() {
            v.set_column(col, &vecs[k]);
        }
        let values = DVector::from_iterator(4, idx.iter().map(|&k| bp.weights[k]));
        let grad = bp.grad.iter().map(|g| idx.map(|k| g[k])).collect();
        Some((
            BellPoint {
                weights: idx.map(|k| bp.weights[k]),
                grad,
            },
            Eigensystem { values, vectors: v },
        ))
    }
}

/// Bloch radius of the escort state: ((1+r)^q - (1-r)^q)/((1+r)^q + (1-r)^q).
pub fn escort_radius(r: f64, q: f64) -> f64 {
    if r >= 1.0 {
        1.0
    } else {
        (q * r.atanh()).tanh()
    }
}

pub fn bloch_cartesian(r: f64, t1: f64, t2: f64) -> [f64; 3] {
    [
        r * t1.cos(),
        r * t1.sin() * t2.cos(),
        r * t1.sin() * t2.sin(),
    ]
}

fn bloch_cartesian_grad(r: f64, t1: f64, t2: f64) -> [[f64; 3]; 3] {
    let (s1, c1, s2, c2) = (t1.sin(), t1.cos(), t2.sin(), t2.cos());
    [
        [c1, s1 * c2, s1 * s2],
        [-r * s1, r * c1 * c2, r * c1 * s2],
        [0.0, -r * s1 * s2, r * s1 * c2],
    ]
}

fn pauli_combination(v: [f64; 3]) -> CMat {
    let [sx, sy, sz] = linalg::pauli();
    sx * c(v[0]) + sy * c(v[1]) + sz * c(v[2])
}

pub fn bloch_matrix(r: f64, t1: f64, t2: f64) -> CMat {
    let v = bloch_cartesian(r, t1, t2);
    (CMat::identity(2, 2) + pauli_combination(v)) * c(0.5)
}

fn qutrit_matrix(v: f64, r: f64, t1: f64, t2: f64, q: f64) -> CMat {
    let [x, y, z] = bloch_cartesian(r, t1, t2);
    let ap = 0.5 * (v + r);
    let am = 0.5 * (v - r).max(0.0);
    let mid = 1.0 - v;
    let pw = |t: f64| if t > 0.0 { t.powf(q) } else { 0.0 };
    let (pp, pm, pmid) = (pw(ap), pw(am), pw(mid));
    let s = pp + pm + pmid;
    let even = 0.5 * (pp + pm) / s;
    // (pp - pm)/(2 s) times the unit Bloch vector
    let odd = if r > 0.0 {
        0.5 * (pp - pm) / (s * r)
    } else {
        0.0
    };
    let mut m = CMat::zeros(3, 3);
    m[(0, 0)] = c(even + odd * z);
    m[(2, 2)] = c(even - odd * z);
    m[(1, 1)] = c(pmid / s);
    m[(0, 2)] = c(odd * x) - I * (odd * y);
    m[(2, 0)] = c(odd * x) + I * (odd * y);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        linalg::max_abs(&(a - b)) <= tol
    }

    #[test]
    fn bloch_origin_is_maximally_mixed() {
        let rho = FamilyChart::bloch_qubit()
            .build(&ParamPoint::new([0.0, 0.3, 1.0]))
            .unwrap();
        assert!(close(
            rho.matrix(),
            DensityMatrix::maximally_mixed(2).matrix(),
            1e-15
        ));
    }

    #[test]
    fn ar_uniform_and_example_weights() {
        let bp = FamilyChart::ar_bell(1.0)
            .bell_point(&ParamPoint::new([0.0, 4.0]))
            .unwrap();
        for w in bp.weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let bp = FamilyChart::ar_bell(1.0)
            .bell_point(&ParamPoint::new([SQRT2, 6.0]))
            .unwrap();
        let expect = [0.625, 0.125, 0.125, 0.125];
        for (w, e) in bp.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14);
        }
    }

    #[test]
    fn ar_example_matches_moment_solve() {
        // solve <B> = b, <B^2> = s2 with p2 = p3 and unit trace for q = 1
        let (b, s2) = (SQRT2, 6.0);
        // unknowns (p1, p4): p1 - p4 = b/(2 sqrt2), p1 + p4 = s2/8
        let m = nalgebra::Matrix2::new(1.0, -1.0, 1.0, 1.0);
        let sol = m
            .lu()
            .solve(&nalgebra::Vector2::new(b / TWO_SQRT2, s2 / 8.0))
            .unwrap();
        let w = ar_weights(1.0, b, s2);
        assert!((w[0] - sol[0]).abs() < 1e-14 && (w[3] - sol[1]).abs() < 1e-14);
        assert!((w[1] - 0.5 * (1.0 - sol[0] - sol[1])).abs() < 1e-14);
    }

    #[test]
    fn bloch_eigenvalues() {
        let r = 0.6;
        let rho = FamilyChart::bloch_qubit()
            .build(&ParamPoint::new([r, 1.0, 2.0]))
            .unwrap();
        let es = eigensystem(&rho).unwrap();
        assert!((es.values[0] - (1.0 - r) / 2.0).abs() < 1e-14);
        assert!((es.values[1] - (1.0 + r) / 2.0).abs() < 1e-14);
        assert!(close(&es.reconstruct(), rho.matrix(), 1e-12));
    }

    #[test]
    fn ar_q1_double_eigenvalue() {
        let (b, s2) = (0.5, 5.0);
        let rho = FamilyChart::ar_bell(1.0)
            .build(&ParamPoint::new([b, s2]))
            .unwrap();
        let es = eigensystem(&rho).unwrap();
        let target = (8.0 - s2) / 16.0;
        let hits = es
            .values
            .iter()
            .filter(|&&v| (v - target).abs() < 1e-12)
            .count();
        assert_eq!(hits, 2);
    }

    #[test]
    fn partial_transpose_examples() {
        let id = DensityMatrix::maximally_mixed(4);
        let pt = partial_transpose(&id, Subsystem::B).unwrap();
        assert!(close(&pt, id.matrix(), 1e-15));
        let phi = DensityMatrix::new(bell_diagonal(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        let pt = partial_transpose(&phi, Subsystem::A).unwrap();
        let min = hermitian_eigen(&pt).unwrap().values[0];
        assert!((min + 0.5).abs() < 1e-12);
        assert!(!is_separable(&phi).unwrap());
        assert!(is_separable(&id).unwrap());
        let two = DensityMatrix::maximally_mixed(2);
        assert!(is_separable(&two).unwrap());
        assert!(matches!(
            partial_transpose(&two, Subsystem::A),
            Err(Error::Dimension { .. })
        ));
        let ar = FamilyChart::ar_bell(1.0)
            .build(&ParamPoint::new([0.0, 4.0]))
            .unwrap();
        let pt = partial_transpose(&ar, Subsystem::B).unwrap();
        assert!(hermitian_eigen(&pt).unwrap().values[0] >= -1e-12);
    }

    #[test]
    fn tlb_cube_corner_is_separable() {
        let rho = FamilyChart::tlb()
            .build(&ParamPoint::new([1.0 / 3.0; 3]))
            .unwrap();
        assert!(is_separable(&rho).unwrap());
    }

    #[test]
    fn reparameterization_b_zero() {
        let s2 = 3.0;
        let (b1, s1) = reparameterize_ar(0.0, s2).unwrap();
        assert_eq!(b1, 0.0);
        assert!((s1 - 4.0 * s2 * s2 / (s2 * s2 - 8.0 * s2 + 32.0)).abs() < 1e-14);
        assert!(reparameterize_ar(2.0, 1.0).is_err());
    }

    #[test]
    fn infeasible_and_out_of_box() {
        let ch = FamilyChart::ar_bell(1.0);
        assert!(matches!(
            ch.build(&ParamPoint::new([2.0, 1.0])),
            Err(Error::InfeasiblePoint { .. })
        ));
        assert!(matches!(
            ch.build(&ParamPoint::new([0.0, 9.0])),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DensityMatrix::maximally_mixed(2).matrix().clone();
        m[(0, 1)] = c(0.1);
        assert!(matches!(
            DensityMatrix::new(m.clone()),
            Err(Error::NonHermitianInput(_))
        ));
        assert!(matches!(
            hermitian_eigen(&m),
            Err(Error::NonHermitianInput(_))
        ));
    }

    #[test]
    fn slack_points_agree_with_native_charts() {
        let (u, w) = (1.3, 2.1);
        let s2 = 8.0 - u;
        let b = (s2 - w) / TWO_SQRT2;
        for q in [0.5, 1.0, 2.0] {
            let a = ar_point_slack(q, u, w).weights;
            let n = ar_weights(q, b, s2);
            for k in 0..4 {
                assert!((a[k] - n[k]).abs() < 1e-14);
            }
        }
        for alpha in [-1.5, 0.5, 2.0] {
            let a = jaynes_point_slack(alpha, u, w).weights;
            let n = jaynes_weights(alpha, b, s2);
            for k in 0..4 {
                assert!((a[k] - n[k]).abs() < 1e-14, "{alpha} {k}");
            }
        }
    }
}
