//! Bures, monotone and Hilbert-Schmidt metric tensors, volume elements and
//! the closed-form tensors of the qubit, qutrit and AR families.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, hermitian_eigen, CMat, Eigensystem};
use crate::state::{BellPoint, FamilyChart, ParamPoint};

pub const EIG_CUT: f64 = 1e-9;
pub const NULL_TOL: f64 = 1e-8;
/// Hilbert-Schmidt convention factor in g = kappa Re tr(d_i rho d_j rho).
pub const HS_KAPPA: f64 = 0.5;
pub const KAPPA_CONVENTION: &str =
    "g_ij = 0.5 * Re tr(d_i rho d_j rho); AR/Jaynes regions restricted to b >= 0";
const DROPPED_NUMERATOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTensor {
    pub g: DMatrix<f64>,
    pub coords: Vec<String>,
}

impl MetricTensor {
    pub fn new(g: DMatrix<f64>, coords: &[&str]) -> Self {
        Self {
            g,
            coords: coords.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.g.row(i).iter().copied().collect())
            .collect()
    }

    pub fn volume_element(&self) -> VolumeElement {
        volume_element(self)
    }

    /// Largest entrywise deviation relative to the largest diagonal entry.
    pub fn max_rel_deviation(&self, other: &MetricTensor) -> f64 {
        let scale = (0..self.dim())
            .map(|i| self.g[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        (&self.g - &other.g).abs().max() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeElement {
    pub value: f64,
    pub null_flag: bool,
}

pub fn volume_element(g: &MetricTensor) -> VolumeElement {
    let (det, normalized) = linalg::scaled_det(&g.g);
    VolumeElement {
        value: det.max(0.0).sqrt(),
        null_flag: normalized <= NULL_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "f", content = "q")]
pub enum FFunction {
    Bures,
    BuresQ(f64),
    FisherHusimi,
    FisherHusimiQ(f64),
    WignerYanase,
}

impl FFunction {
    pub fn eval(&self, t: f64) -> Result<f64> {
        f_eval(*self, t)
    }
}

/// Morozova-Chentsov function f on t in [0, 1].
pub fn f_eval(f: FFunction, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!(
            "f-function argument {t} outside [0, 1]"
        )));
    }
    match f {
        FFunction::Bures => Ok(0.5 * (1.0 + t)),
        FFunction::WignerYanase => Ok(0.25 * (1.0 + t.sqrt()).powi(2)),
        FFunction::BuresQ(q) => {
            let tq = t.powf(q);
            let den = -(q * t.ln()).exp_m1();
            if den == 0.0 {
                return Err(Error::domain("escort Bures f-function has a pole at t = 1"));
            }
            Ok(2.0 * (1.0 + t) * (1.0 + tq).powi(2) / (den * den))
        }
        FFunction::FisherHusimi => Ok(f_fisher_q(t, 1.0)),
        FFunction::FisherHusimiQ(q) => Ok(f_fisher_q(t, q)),
    }
}

/// Escort-Husimi tangential function, evaluated in s = ln t with a series near t = 1.
pub fn f_fisher_q(t: f64, q: f64) -> f64 {
    if t == 0.0 {
        return 1.0 / q;
    }
    let s = t.ln();
    if s == 0.0 {
        return 3.0 / (q * q);
    }
    let qp = 1.0 + q;
    let (num, den) = if (s * qp).abs() < 0.5 {
        // d_n = (1+q)^n - (1+q) sum_{k<n} q^k, series divided by s^3
        let mut dsum = 0.0;
        let mut fact = 6.0;
        let mut spow = 1.0;
        let mut geo = 1.0 + q + q * q;
        let mut qk = q * q;
        let mut qpn = qp * qp * qp;
        for n in 3..40 {
            let d = qpn - qp * geo;
            let term = d * spow / fact;
            dsum += term;
            if term.abs() < 1e-18 * dsum.abs() && n > 6 {
                break;
            }
            qk *= q;
            geo += qk;
            qpn *= qp;
            spow *= s;
            fact *= (n + 1) as f64;
        }
        let e1 = s.exp_m1() / s;
        let e2 = (qp * s).exp_m1() / s;
        (e1 * e1 * e2, dsum)
    } else {
        let e1 = s.exp_m1();
        let e2 = (qp * s).exp_m1();
        let tail = if (q - 1.0).abs() < 1e-12 {
            s
        } else {
            ((q - 1.0) * s).exp_m1() / (q - 1.0)
        };
        let d = e2 - qp * t * tail;
        let s3 = s * s * s;
        (e1 * e1 * e2 / s3, d / s3)
    };
    num / (q * (1.0 + t) * den)
}

/// Bloch radius together with its exact complement 1 - r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius {
    pub r: f64,
    pub rc: f64,
}

impl Radius {
    pub fn from_complement(rc: f64) -> Self {
        Self { r: 1.0 - rc, rc }
    }

    /// log W with W = (1-r)/(1+r).
    pub fn log_w(&self) -> f64 {
        if self.r < 0.5 {
            -2.0 * self.r.atanh()
        } else {
            self.rc.ln() - self.r.ln_1p()
        }
    }

    pub fn w(&self) -> f64 {
        self.rc / (1.0 + self.r)
    }

    /// 1 - r^2
    pub fn one_minus_sq(&self) -> f64 {
        self.rc * (1.0 + self.r)
    }
}

impl From<f64> for Radius {
    fn from(r: f64) -> Self {
        Self { r, rc: 1.0 - r }
    }
}

/// log W with W = (1-r)/(1+r), accurate near both ends.
pub fn log_ratio(r: f64) -> f64 {
    Radius::from(r).log_w()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Bures,
    Hs,
    WignerYanase,
}

impl MetricId {
    pub fn name(&self) -> &'static str {
        match self {
            MetricId::Bures => "bures",
            MetricId::Hs => "hs",
            MetricId::WignerYanase => "wigner_yanase",
        }
    }

    pub fn f_function(&self) -> Option<FFunction> {
        match self {
            MetricId::Bures => Some(FFunction::Bures),
            MetricId::WignerYanase => Some(FFunction::WignerYanase),
            MetricId::Hs => None,
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bures" | "bures_extended" => Ok(MetricId::Bures),
            "hs" => Ok(MetricId::Hs),
            "wigner_yanase" | "wy" => Ok(MetricId::WignerYanase),
            _ => Err(Error::domain(format!("unknown metric '{s}'"))),
        }
    }
}

fn shifted(p: &ParamPoint, i: usize, d: f64) -> ParamPoint {
    let mut v = p.0.clone();
    v[i] += d;
    ParamPoint(v)
}

fn step_ok(chart: &FamilyChart, p: &ParamPoint) -> bool {
    chart.in_box(p) && chart.feasible(p)
}

/// Central difference along coordinate `i` with one Richardson level.
pub fn numeric_differential(chart: &FamilyChart, p: &ParamPoint, i: usize, h: f64) -> Result<CMat> {
    for k in [-1.0, 1.0] {
        if !step_ok(chart, &shifted(p, i, k * h)) {
            return Err(Error::BoundaryPoint { coord: i });
        }
    }
    let d = |h: f64| -> Result<CMat> {
        let a = chart.matrix(&shifted(p, i, h))?;
        let b = chart.matrix(&shifted(p, i, -h))?;
        Ok((a - b) * c(0.5 / h))
    };
    let coarse = d(h)?;
    let fine = d(0.5 * h)?;
    Ok((fine * c(4.0) - coarse) * c(1.0 / 3.0))
}

/// Second-order one-sided difference, used when the central stencil leaves the chart.
fn one_sided_differential(chart: &FamilyChart, p: &ParamPoint, i: usize, h: f64) -> Result<CMat> {
    for dir in [1.0, -1.0] {
        if (1..=2).all(|k| step_ok(chart, &shifted(p, i, dir * k as f64 * h))) {
            let f0 = chart.matrix(p)?;
            let f1 = chart.matrix(&shifted(p, i, dir * h))?;
            let f2 = chart.matrix(&shifted(p, i, dir * 2.0 * h))?;
            return Ok((f1 * c(4.0) - f0 * c(3.0) - f2) * c(dir / (2.0 * h)));
        }
    }
    Err(Error::BoundaryPoint { coord: i })
}

pub fn default_step(p: &ParamPoint, i: usize) -> f64 {
    1e-4 * p[i].abs().max(1.0)
}

/// Analytic differential where the chart provides one, numeric otherwise.
pub fn differential(chart: &FamilyChart, p: &ParamPoint, i: usize) -> Result<CMat> {
    if let Some(d) = chart.analytic_differential(p, i) {
        return Ok(d);
    }
    let h = default_step(p, i);
    match numeric_differential(chart, p, i, h) {
        Err(Error::BoundaryPoint { .. }) => one_sided_differential(chart, p, i, h * 0.1),
        other => other,
    }
}

struct Prepared {
    es: Eigensystem,
    dm: Vec<CMat>,
}

fn prepare(chart: &FamilyChart, p: &ParamPoint) -> Result<Prepared> {
    if !chart.feasible(p) {
        chart.build(p)?;
    }
    let es = match chart.exact_eigensystem(p) {
        Some((_, es)) => es,
        None => hermitian_eigen(chart.build(p)?.matrix())?,
    };
    let dm = (0..chart.dim())
        .map(|i| differential(chart, p, i).map(|d| es.in_basis(&d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared { es, dm })
}

/// g_ij = (1/4) sum_ab weight(a,b) Re[<a|d_i|b><b|d_j|a>], skipping pairs the weight rejects.
fn spectral_sum(
    prep: &Prepared,
    weight: impl Fn(f64, f64) -> Result<Option<f64>>,
) -> Result<DMatrix<f64>> {
    let n = prep.es.values.len();
    let d = prep.dm.len();
    let mut g = DMatrix::zeros(d, d);
    for a in 0..n {
        for b in 0..n {
            let (la, lb) = (prep.es.values[a].max(0.0), prep.es.values[b].max(0.0));
            match weight(la, lb)? {
                Some(w) => {
                    for i in 0..d {
                        for j in i..d {
                            let v = 0.25 * w * (prep.dm[i][(a, b)] * prep.dm[j][(b, a)]).re;
                            g[(i, j)] += v;
                        }
                    }
                }
                None => {
                    let worst = prep
                        .dm
                        .iter()
                        .map(|m| m[(a, b)].norm_sqr())
                        .fold(0.0, f64::max);
                    if worst > DROPPED_NUMERATOR_TOL {
                        return Err(Error::DegenerateState(worst));
                    }
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            g[(i, j)] = g[(j, i)];
        }
    }
    Ok(g)
}

fn labels(chart: &FamilyChart) -> Vec<String> {
    chart.param_names().iter().map(|s| s.to_string()).collect()
}

/// Bures tensor from the eigenpair (Hubner) sum.
pub fn bures_tensor(chart: &FamilyChart, p: &ParamPoint) -> Result<MetricTensor> {
    let prep = prepare(chart, p)?;
    let g = spectral_sum(&prep, |la, lb| {
        Ok(if la + lb > EIG_CUT {
            Some(2.0 / (la + lb))
        } else {
            None
        })
    })?;
    Ok(MetricTensor {
        g,
        coords: labels(chart),
    })
}

/// Monotone metric with Morozova-Chentsov weight 1/(max f(min/max)).
pub fn monotone_tensor(chart: &FamilyChart, p: &ParamPoint, f: FFunction) -> Result<MetricTensor> {
    let prep = prepare(chart, p)?;
    let g = spectral_sum(&prep, |la, lb| {
        let (lo, hi) = if la < lb { (la, lb) } else { (lb, la) };
        if hi <= EIG_CUT {
            return Ok(None);
        }
        Ok(Some(1.0 / (hi * f_eval(f, lo / hi)?)))
    })?;
    Ok(MetricTensor {
        g,
        coords: labels(chart),
    })
}

pub fn hs_tensor(chart: &FamilyChart, p: &ParamPoint) -> Result<MetricTensor> {
    if !chart.feasible(p) {
        chart.build(p)?;
    }
    let d = (0..chart.dim())
        .map(|i| differential(chart, p, i))
        .collect::<Result<Vec<_>>>()?;
    let g = DMatrix::from_fn(d.len(), d.len(), |i, j| {
        HS_KAPPA * (&d[i] * &d[j]).trace().re
    });
    Ok(MetricTensor {
        g,
        coords: labels(chart),
    })
}

pub fn tensor(chart: &FamilyChart, p: &ParamPoint, metric: MetricId) -> Result<MetricTensor> {
    match metric {
        MetricId::Bures => bures_tensor(chart, p),
        MetricId::Hs => hs_tensor(chart, p),
        MetricId::WignerYanase => monotone_tensor(chart, p, FFunction::WignerYanase),
    }
}

/// Tensor of a Bell-diagonal point directly from its weights.
/// Monotone metrics reduce to (1/4) sum dp dp/(p f(1)); weights at or below `cut` are skipped.
pub fn bell_tensor(bp: &BellPoint, metric: MetricId, cut: f64) -> Result<DMatrix<f64>> {
    let d = bp.grad.len();
    let mut g = DMatrix::zeros(d, d);
    let f1 = match metric.f_function() {
        Some(f) => Some(f_eval(f, 1.0)?),
        None => None,
    };
    for k in 0..4 {
        let w = match f1 {
            Some(f1) => {
                if bp.weights[k] <= cut {
                    let worst = bp.grad.iter().map(|gr| gr[k] * gr[k]).fold(0.0, f64::max);
                    if worst > DROPPED_NUMERATOR_TOL {
                        return Err(Error::DegenerateState(worst));
                    }
                    continue;
                }
                0.25 / (bp.weights[k] * f1)
            }
            None => HS_KAPPA,
        };
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] += w * bp.grad[i][k] * bp.grad[j][k];
            }
        }
    }
    Ok(g)
}

/// Volume element of a Bell-diagonal point, the workhorse of the region integrals.
/// g = sum_k c_k v_k v_k^T, so by Cauchy-Binet det g = sum_S prod_{k in S} c_k det(V_S)^2,
/// a sum of nonnegative terms that stays accurate when one weight is tiny.
pub fn bell_volume_element(bp: &BellPoint, metric: MetricId) -> f64 {
    let d = bp.grad.len();
    let f1 = match metric.f_function() {
        Some(f) => match f_eval(f, 1.0) {
            Ok(v) => Some(v),
            Err(_) => return 0.0,
        },
        None => None,
    };
    let mut c = [0.0; 4];
    for k in 0..4 {
        c[k] = match f1 {
            Some(f1) => {
                if bp.weights[k] > 0.0 {
                    0.25 / (bp.weights[k] * f1)
                } else if bp.grad.iter().all(|g| g[k] == 0.0) {
                    0.0
                } else {
                    return 0.0;
                }
            }
            None => HS_KAPPA,
        };
    }
    let mut det = 0.0;
    for mask in 0u32..16 {
        if mask.count_ones() as usize != d {
            continue;
        }
        let rows: Vec<usize> = (0..4).filter(|k| mask & (1 << k) != 0).collect();
        let weight: f64 = rows.iter().map(|&k| c[k]).product();
        if weight == 0.0 {
            continue;
        }
        let v = DMatrix::from_fn(d, d, |a, i| bp.grad[i][rows[a]]);
        let m = v.determinant();
        det += weight * m * m;
    }
    det.sqrt()
}

/// Samples interior feasible points and reports whether every volume element is null.
pub fn nullity_check(
    chart: &FamilyChart,
    metric: MetricId,
    n_samples: usize,
    seed: u64,
) -> Result<bool> {
    if n_samples < 30 {
        return Err(Error::domain("nullity check needs at least 30 samples"));
    }
    let pts = interior_samples(chart, n_samples, seed)?;
    for p in &pts {
        if !tensor(chart, p, metric)?.volume_element().null_flag {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Random interior points away from coordinate singularities and the state boundary.
pub fn interior_samples(chart: &FamilyChart, n: usize, seed: u64) -> Result<Vec<ParamPoint>> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes: Vec<(f64, f64)> = chart
        .param_names()
        .iter()
        .zip(chart.bounding_box())
        .map(|(&name, (lo, hi))| match name {
            "q" => (0.6, 4.0),
            "r" | "v" => (0.05, 0.95),
            "theta1" => (0.1, PI - 0.1),
            "alpha" => (0.2, 3.0),
            _ => {
                let m = 0.02 * (hi - lo);
                (lo + m, hi - m)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 10_000 * n {
            return Err(Error::domain(format!(
                "could not sample interior points of {}",
                chart.id.name()
            )));
        }
        let p = ParamPoint(
            boxes
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..hi))
                .collect(),
        );
        if !chart.feasible(&p) {
            continue;
        }
        let margin_ok = match chart.matrix_dim() {
            4 => chart
                .bell_point(&p)
                .map(|bp| bp.weights.iter().all(|&w| w > 0.01))
                .unwrap_or(false),
            3 => p[1] < 0.95 * p[0],
            _ => true,
        };
        if margin_ok {
            out.push(p);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// (r, theta1, theta2)
    BlochBures,
    /// (r, theta1, theta2, q), with the q-r entry.
    ExtendedBures,
    /// (r, theta1, theta2, q) with the q-r entry set to zero.
    ExtendedBuresTruncated,
    /// q = 1 slice of the extended Bures tensor, coordinates (r, theta1, theta2, q).
    ExtendedBuresQ1,
    /// (v, r, theta1, theta2)
    QutritBures,
    /// (q, b, sigma2) at q = 1.
    ArExtendedQ1,
    /// (r, theta1, theta2)
    FisherHusimi,
    /// (r, theta1, theta2, q) at q = 1.
    FisherHusimiExtendedQ1,
}

impl ClosedForm {
    pub fn coords(&self) -> &'static [&'static str] {
        match self {
            ClosedForm::BlochBures | ClosedForm::FisherHusimi => &["r", "theta1", "theta2"],
            ClosedForm::QutritBures => &["v", "r", "theta1", "theta2"],
            ClosedForm::ArExtendedQ1 => &["q", "b", "sigma2"],
            _ => &["r", "theta1", "theta2", "q"],
        }
    }
}

fn need(p: &ParamPoint, n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::Dimension {
            expected: format!("{n} coordinates"),
            got: p.len(),
        });
    }
    Ok(())
}

fn check_radius(r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside [0, 1)")));
    }
    Ok(())
}

/// Entries of the escort-qubit Bures tensor at radius r and order q:
/// (g_rr, g_qq, g_qr, tangential coefficient of dtheta1^2).
pub fn escort_bures_entries(r: impl Into<Radius>, q: f64) -> (f64, f64, f64, f64) {
    let rad = r.into();
    let lw = rad.log_w();
    let oms = rad.one_minus_sq();
    let wq = (q * lw).exp();
    let one_p = 1.0 + wq;
    let den = one_p * one_p;
    let one_m = -(q * lw).exp_m1();
    let g_rr = q * q * wq / (oms * oms * den);
    let g_qq = wq * lw * lw / (4.0 * den);
    let g_qr = -q * wq * lw / (2.0 * oms * den);
    let tang = one_m * one_m / (4.0 * den);
    (g_rr, g_qq, g_qr, tang)
}

pub fn closed_form_tensor(model: ClosedForm, p: &ParamPoint) -> Result<MetricTensor> {
    let n = model.coords().len();
    need(p, n)?;
    let mut g = DMatrix::zeros(n, n);
    match model {
        ClosedForm::BlochBures => {
            let (r, t1) = (p[0], p[1]);
            check_radius(r)?;
            g[(0, 0)] = 0.25 / (1.0 - r * r);
            g[(1, 1)] = 0.25 * r * r;
            g[(2, 2)] = 0.25 * r * r * t1.sin().powi(2);
        }
        ClosedForm::ExtendedBures | ClosedForm::ExtendedBuresTruncated => {
            let (r, t1, q) = (p[0], p[1], p[3]);
            check_radius(r)?;
            let (grr, gqq, gqr, tang) = escort_bures_entries(r, q);
            g[(0, 0)] = grr;
            g[(1, 1)] = tang;
            g[(2, 2)] = tang * t1.sin().powi(2);
            g[(3, 3)] = gqq;
            if model == ClosedForm::ExtendedBures {
                g[(0, 3)] = gqr;
                g[(3, 0)] = gqr;
            }
        }
        ClosedForm::ExtendedBuresQ1 => {
            let (r, t1) = (p[0], p[1]);
            check_radius(r)?;
            let lw = log_ratio(r);
            g[(0, 0)] = 0.25 / (1.0 - r * r);
            g[(1, 1)] = 0.25 * r * r;
            g[(2, 2)] = 0.25 * r * r * t1.sin().powi(2);
            g[(3, 3)] = (1.0 - r * r) * lw * lw / 16.0;
            g[(0, 3)] = -lw / 8.0;
            g[(3, 0)] = -lw / 8.0;
        }
        ClosedForm::QutritBures => {
            let (v, r, t1) = (p[0], p[1], p[2]);
            if !(v > 0.0 && v < 1.0 && r >= 0.0 && r < v) {
                return Err(Error::domain(format!(
                    "qutrit closed form needs 0 <= r < v < 1, got v={v}, r={r}"
                )));
            }
            let d = r * r - v * v;
            g[(0, 0)] = 0.25 * (r * r - v) / ((1.0 - v) * d);
            g[(0, 1)] = 0.25 * r / d;
            g[(1, 0)] = g[(0, 1)];
            g[(1, 1)] = -0.25 * v / d;
            g[(2, 2)] = 0.25 * r * r / v;
            g[(3, 3)] = 0.25 * r * r * t1.sin().powi(2) / v;
        }
        ClosedForm::ArExtendedQ1 => {
            let (b, s2) = (p[1], p[2]);
            let t = 2.0 * std::f64::consts::SQRT_2 * b;
            let (am, ap, a8) = (s2 - t, s2 + t, 8.0 - s2);
            if am <= 0.0 || ap <= 0.0 || a8 <= 0.0 {
                return Err(Error::domain(format!(
                    "AR closed form undefined at b={b}, sigma2={s2}"
                )));
            }
            let (l1, l2, l8) = (am.ln(), ap.ln(), a8.ln());
            let s4 = s2 * s2;
            let b2 = b * b;
            let sq2 = std::f64::consts::SQRT_2;
            let cc = -4.0 * l8 * l8 * s2 * (s2 - 8.0) + 2.0 * l1 * l2 * (8.0 * b2 - s4)
                - l1 * l1 * (8.0 * b2 + s2 * (s2 - 16.0) - 4.0 * sq2 * b * (s2 - 8.0))
                - l2 * l2 * (8.0 * b2 + s2 * (s2 - 16.0) + 4.0 * sq2 * b * (s2 - 8.0))
                + 4.0 * l8 * (s2 - 8.0) * (l1 * am + l2 * ap);
            g[(0, 0)] = cc / 1024.0;
            g[(0, 1)] = (l1 - l2) / (16.0 * sq2);
            g[(0, 2)] = (2.0 * l8 - l1 - l2) / 64.0;
            g[(1, 1)] = s2 / (-32.0 * b2 + 4.0 * s4);
            g[(1, 2)] = b / (32.0 * b2 - 4.0 * s4);
            g[(2, 2)] = (b2 - s2) / (4.0 * (s2 - 8.0) * (s4 - 8.0 * b2));
            for i in 0..3 {
                for j in 0..i {
                    g[(i, j)] = g[(j, i)];
                }
            }
        }
        ClosedForm::FisherHusimi => return crate::husimi::closed_form_q1(p),
        ClosedForm::FisherHusimiExtendedQ1 => return crate::husimi::closed_form_extended_q1(p),
    }
    Ok(MetricTensor::new(g, model.coords()))
}

/// Two-parameter AR Bures element at q = 1 in (b, sigma2).
pub fn ar_element_q1(b: f64, s2: f64) -> Result<f64> {
    let v = -1.0 / ((s2 - 8.0) * (s2 * s2 - 8.0 * b * b));
    if !v.is_finite() || v < 0.0 {
        return Err(Error::domain(format!(
            "AR element undefined at b={b}, sigma2={s2}"
        )));
    }
    Ok(0.25 * v.sqrt())
}

/// General-q AR Bures element in (b, sigma2).
pub fn ar_element(q: f64, b: f64, s2: f64) -> Result<f64> {
    let t = 2.0 * std::f64::consts::SQRT_2 * b;
    let (am, ap, a8) = (s2 - t, s2 + t, 8.0 - s2);
    if am <= 0.0 || ap <= 0.0 || a8 <= 0.0 {
        return Err(Error::domain(format!(
            "AR element undefined at b={b}, sigma2={s2}"
        )));
    }
    let e = 1.0 / q;
    let sum = 2.0 * a8.powf(e) + am.powf(e) + ap.powf(e);
    let num = a8.powf(e - 2.0) * am.powf(e) * ap.powf(e);
    let den = q.powi(4) * (s2 * s2 - 8.0 * b * b).powi(2) * sum.powi(3);
    Ok(16.0 * (num / den).sqrt())
}

/// Tangential coefficient of r^2 dn^2 for the escort qutrit family.
pub fn qutrit_escort_tangential(v: f64, r: f64, q: f64) -> f64 {
    let (m, p) = ((v - r).powf(q), (v + r).powf(q));
    let mid = (2.0 - 2.0 * v).powf(q);
    (m - p).powi(2) / (4.0 * r * r * (m + p) * (mid + m + p))
}

/// Ball integral of the truncated extended-Bures element at fixed q.
pub fn truncated_marginal_q(q: f64) -> f64 {
    std::f64::consts::PI * (1.0 + 4f64.ln()) / (24.0 * q)
}

/// Indefinite q-integral of the angle-integrated truncated element at radius r.
pub fn truncated_q_antiderivative(r: impl Into<Radius>, q: f64) -> f64 {
    let rad = r.into();
    let lw = rad.log_w();
    let wq = (q * lw).exp();
    let op = 1.0 + wq;
    let num = q * wq * (3.0 + wq * wq) * lw - op * (2.0 * wq + op * op * wq.ln_1p());
    -std::f64::consts::PI * num / (6.0 * rad.one_minus_sq() * op.powi(3) * lw)
}

/// sqrt det of the truncated extended-Bures tensor without the sin(theta1) factor.
pub fn truncated_element_radial(r: impl Into<Radius>, q: f64) -> f64 {
    let rad = r.into();
    let lw = rad.log_w();
    let wq = (q * lw).exp();
    if wq == 0.0 {
        return 0.0;
    }
    let one_m = -(q * lw).exp_m1();
    q * wq * lw.abs() * one_m * one_m / (8.0 * rad.one_minus_sq() * (1.0 + wq).powi(4))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{adaptive_gk, Tolerance};
    use crate::state::FamilyChart;
    use std::f64::consts::PI;

    fn pt(v: &[f64]) -> ParamPoint {
        ParamPoint::new(v.to_vec())
    }

    #[test]
    fn f_values() {
        assert_eq!(f_eval(FFunction::Bures, 1.0).unwrap(), 1.0);
        let t: f64 = 0.5;
        let direct = (t - 1.0).powi(3) / (t * t - 2.0 * t * t.ln() - 1.0);
        assert!((f_eval(FFunction::FisherHusimi, t).unwrap() - direct).abs() < 1e-14);
        assert!((f_eval(FFunction::FisherHusimi, 1.0).unwrap() - 3.0).abs() < 1e-14);
        assert!((f_eval(FFunction::FisherHusimi, 1.0 - 1e-9).unwrap() - 3.0).abs() < 1e-6);
        assert!(f_eval(FFunction::BuresQ(2.0), 1.0).is_err());
        assert!(f_eval(FFunction::Bures, 1.5).is_err());
    }

    #[test]
    fn fisher_q_matches_printed_rational_form() {
        for q in [0.6f64, 1.7, 3.0] {
            for t in [0.05f64, 0.3, 0.7, 0.95] {
                let printed = (q - 1.0) * (t - 1.0).powi(2) * (t.powf(1.0 + q) - 1.0)
                    / (q * (1.0 + t)
                        * (1.0 - q + t + q * t - t.powf(q) - q * t.powf(q) - t.powf(1.0 + q)
                            + q * t.powf(1.0 + q)));
                let v = f_fisher_q(t, q);
                assert!(
                    (v - printed).abs() < 1e-9 * printed.abs(),
                    "{q} {t} {v} {printed}"
                );
            }
        }
    }

    #[test]
    fn fisher_limit_in_q() {
        for t in [0.1, 0.5, 0.9] {
            let f1 = f_eval(FFunction::FisherHusimi, t).unwrap();
            let lo = f_fisher_q(t, 1.0 - 1e-4);
            let hi = f_fisher_q(t, 1.0 + 1e-4);
            assert!((0.5 * (lo + hi) - f1).abs() < 1e-6);
        }
        // the escort Bures function does not approach f_F: it blows up at t -> 1
        assert!(f_eval(FFunction::BuresQ(1.0), 0.999).unwrap() > 1e5);
    }

    #[test]
    fn escort_bures_f_is_increasing() {
        for q in [0.5, 1.5, 3.0] {
            let mut prev = 0.0;
            for k in 1..=999 {
                let v = f_eval(FFunction::BuresQ(q), k as f64 / 1000.0).unwrap();
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn bloch_bures_matches_closed_form() {
        let p = pt(&[0.5, 1.0, 2.0]);
        let num = bures_tensor(&FamilyChart::bloch_qubit(), &p).unwrap();
        let cf = closed_form_tensor(ClosedForm::BlochBures, &p).unwrap();
        assert!(num.max_rel_deviation(&cf) < 1e-10);
    }

    #[test]
    fn escort_differential_in_q() {
        // at theta1 = 0 the state is diagonal with entries (1 +- r_q)/2
        let ch = FamilyChart::escort_qubit();
        let (r, q) = (0.4f64, 1.0);
        let p = pt(&[r, 0.0, 0.0, q]);
        let d = differential(&ch, &p, 3).unwrap();
        let drq = (1.0 - (q * r.atanh()).tanh().powi(2)) * r.atanh();
        assert!((d[(0, 1)].re - 0.5 * drq).abs() < 1e-9);
        assert!(d[(0, 0)].norm() < 1e-10);
        for i in 0..4 {
            assert!(differential(&ch, &p, i).unwrap().trace().norm() < 1e-9);
        }
    }

    #[test]
    fn bloch_z_derivative_at_origin() {
        // z = r sin(theta1) sin(theta2): at theta1 = theta2 = pi/2 the r-direction is z
        let ch = FamilyChart::bloch_qubit();
        let d = differential(&ch, &pt(&[0.0, PI / 2.0, PI / 2.0]), 0).unwrap();
        assert!((d[(0, 0)].re - 0.5).abs() < 1e-15 && (d[(1, 1)].re + 0.5).abs() < 1e-15);
    }

    #[test]
    fn extended_bures_numeric_and_closed_form_agree() {
        let ch = FamilyChart::escort_qubit();
        for &(r, q) in &[(0.3, 0.8), (0.6, 1.0), (0.5, 2.5)] {
            let p = pt(&[r, 1.1, 0.7, q]);
            let num = bures_tensor(&ch, &p).unwrap();
            let cf = closed_form_tensor(ClosedForm::ExtendedBures, &p).unwrap();
            assert!(
                num.max_rel_deviation(&cf) < 1e-6,
                "{r} {q} {}",
                num.max_rel_deviation(&cf)
            );
            assert!(volume_element(&num).null_flag);
            assert!(volume_element(&cf).null_flag);
            assert!(
                !volume_element(
                    &closed_form_tensor(ClosedForm::ExtendedBuresTruncated, &p).unwrap()
                )
                .null_flag
            );
        }
        let p = pt(&[0.45, 0.9, 2.0, 1.0]);
        let a = closed_form_tensor(ClosedForm::ExtendedBures, &p).unwrap();
        let b = closed_form_tensor(ClosedForm::ExtendedBuresQ1, &p).unwrap();
        assert!(a.max_rel_deviation(&b) < 1e-12);
    }

    #[test]
    fn tangential_form_escort_bures() {
        for &(r, q) in &[(0.2, 0.7), (0.8, 3.0)] {
            let w: f64 = (1.0 - r) / (1.0 + r);
            let (_, _, _, tang) = escort_bures_entries(r, q);
            let via_f = 1.0 / ((1.0 + r) * f_eval(FFunction::BuresQ(q), w).unwrap());
            assert!((tang - via_f).abs() < 1e-12 * tang);
        }
        let r: f64 = 0.35;
        let w = (1.0 - r) / (1.0 + r);
        let g = bures_tensor(&FamilyChart::bloch_qubit(), &pt(&[r, 0.8, 0.3])).unwrap();
        let via_f = 0.25 * r * r / ((1.0 + r) * f_eval(FFunction::Bures, w).unwrap());
        assert!((g.g[(1, 1)] - via_f).abs() < 1e-12);
    }

    #[test]
    fn qutrit_closed_form() {
        let ch = FamilyChart::qutrit_v();
        let p = pt(&[0.7, 0.3, 1.2, 0.4]);
        let num = bures_tensor(&ch, &p).unwrap();
        let cf = closed_form_tensor(ClosedForm::QutritBures, &p).unwrap();
        assert!(
            num.max_rel_deviation(&cf) < 1e-10,
            "{}",
            num.max_rel_deviation(&cf)
        );
    }

    #[test]
    fn qutrit_escort_tangential_matches_numeric() {
        let ch = FamilyChart::qutrit_v_escort();
        let (v, r, q) = (0.6, 0.25, 1.7);
        let p = pt(&[v, r, 1.0, 0.5, q]);
        let g = bures_tensor(&ch, &p).unwrap();
        let t = qutrit_escort_tangential(v, r, q);
        assert!((g.g[(2, 2)] / (r * r) - t).abs() < 1e-7 * t);
    }

    #[test]
    fn ar_closed_forms() {
        let ext = FamilyChart::ar_bell_extended();
        for &(b, s2) in &[(0.3, 3.0), (0.8, 5.5), (-0.4, 2.0)] {
            let p = pt(&[1.0, b, s2]);
            let num = bures_tensor(&ext, &p).unwrap();
            let cf = closed_form_tensor(ClosedForm::ArExtendedQ1, &p).unwrap();
            assert!(num.max_rel_deviation(&cf) < 1e-10);
            assert!(volume_element(&num).null_flag);
            let two = bures_tensor(&FamilyChart::ar_bell(1.0), &pt(&[b, s2])).unwrap();
            let el = volume_element(&two).value;
            assert!((el - ar_element_q1(b, s2).unwrap()).abs() < 1e-12 * el);
            assert!((ar_element(1.0, b, s2).unwrap() - el).abs() < 1e-12 * el);
            for q in [0.5, 2.0] {
                let two = bures_tensor(&FamilyChart::ar_bell(q), &pt(&[b, s2])).unwrap();
                let el = volume_element(&two).value;
                assert!((el - ar_element(q, b, s2).unwrap()).abs() < 1e-10 * el);
            }
        }
    }

    #[test]
    fn wigner_yanase_equals_bures_on_bell_diagonal() {
        let ch = FamilyChart::ar_bell(1.0);
        let p = pt(&[0.5, 4.5]);
        let a = bures_tensor(&ch, &p).unwrap();
        let b = monotone_tensor(&ch, &p, FFunction::WignerYanase).unwrap();
        assert!(a.max_rel_deviation(&b) < 1e-12);
    }

    #[test]
    fn hs_is_constant_for_jaynes() {
        let ch = FamilyChart::jaynes_alpha(2.0);
        let a = volume_element(&hs_tensor(&ch, &pt(&[0.3, 4.0])).unwrap()).value;
        let b = volume_element(&hs_tensor(&ch, &pt(&[1.0, 6.0])).unwrap()).value;
        assert!((a - b).abs() < 1e-14);
        assert!((a - 1.0 / (32.0 * 2.0 * 3.0)).abs() < 1e-14);
    }

    #[test]
    fn truncated_marginal_and_antiderivative() {
        for q in [0.5, 1.0, 5.0] {
            // angular integral of sin(theta1) is 4 pi
            let f = |r: f64| truncated_element_radial(r, q) * 4.0 * PI;
            let res = adaptive_gk(f, 0.0, 1.0, Tolerance::new(1e-13, 1e-11));
            assert!(
                (res.value / truncated_marginal_q(q) - 1.0).abs() < 1e-6,
                "{q} {}",
                res.value
            );
        }
        for &(r, q) in &[(0.3, 0.9), (0.7, 2.0)] {
            let h = 1e-5;
            let d = (truncated_q_antiderivative(r, q + h) - truncated_q_antiderivative(r, q - h))
                / (2.0 * h);
            let el = 4.0 * PI * truncated_element_radial(r, q);
            assert!(
                (d - el).abs() < 1e-6 * el.abs().max(1e-3),
                "{r} {q} {d} {el}"
            );
        }
    }

    #[test]
    fn volume_element_identity() {
        let v = volume_element(&MetricTensor::new(
            DMatrix::identity(3, 3),
            &["a", "b", "c"],
        ));
        assert_eq!(v.value, 1.0);
        assert!(!v.null_flag);
    }

    #[test]
    fn degenerate_state_detected() {
        // tangent pointing out of a pure qubit state: eigenvalue pair (0, 0) is never hit,
        // but a zero-weight Bell component with nonzero derivative is
        let bp = crate::state::tlb_point_simplex([0.0, 0.3, 0.3, 0.4]);
        assert!(matches!(
            bell_tensor(&bp, MetricId::Bures, EIG_CUT),
            Err(Error::DegenerateState(_))
        ));
    }
}
