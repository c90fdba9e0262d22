//! Priors over the Bloch ball, spin-measurement posteriors, relative entropies and the
//! comparative noninformativity test.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::husimi::{
    extended_q1_element_radial, extended_q1_normalization, fisher_element_radial,
    fisher_normalization,
};
use crate::metric::{truncated_element_radial, Radius};
use crate::quadrature::{gauss_legendre, tanh_sinh, tanh_sinh_nodes};

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Differences below this are ties in the comparative test.
pub const CLARKE_TIE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriorId {
    #[serde(rename = "p_B")]
    Bures,
    #[serde(rename = "p_Bq1trunc")]
    BuresQ1Trunc,
    #[serde(rename = "p_F")]
    Fisher,
    #[serde(rename = "p_Fq1")]
    FisherQ1,
    #[serde(rename = "uniform_ball")]
    UniformBall,
}

impl PriorId {
    pub const MONOTONE: [PriorId; 4] = [
        PriorId::FisherQ1,
        PriorId::Bures,
        PriorId::BuresQ1Trunc,
        PriorId::Fisher,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PriorId::Bures => "p_B",
            PriorId::BuresQ1Trunc => "p_Bq1trunc",
            PriorId::Fisher => "p_F",
            PriorId::FisherQ1 => "p_Fq1",
            PriorId::UniformBall => "uniform_ball",
        }
    }
}

impl fmt::Display for PriorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_B" | "B" => Ok(PriorId::Bures),
            "p_Bq1trunc" | "Bq1trunc" => Ok(PriorId::BuresQ1Trunc),
            "p_F" | "F" => Ok(PriorId::Fisher),
            "p_Fq1" | "Fq1" => Ok(PriorId::FisherQ1),
            "uniform_ball" | "uniform" => Ok(PriorId::UniformBall),
            _ => Err(Error::domain(format!("unknown prior '{s}'"))),
        }
    }
}

/// Isotropic prior: density radial(r) sin(theta1) / (4 pi) with radial integrating to 1 on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorDensity {
    pub id: PriorId,
    /// Divisor applied to the unnormalized volume element.
    pub normalization: f64,
}

impl PriorDensity {
    pub fn new(id: PriorId) -> Result<Self> {
        let normalization = match id {
            PriorId::Bures => std::f64::consts::PI * std::f64::consts::PI / 8.0,
            PriorId::BuresQ1Trunc => std::f64::consts::PI * (1.0 + 4f64.ln()) / 24.0,
            PriorId::Fisher => fisher_normalization()?,
            PriorId::FisherQ1 => extended_q1_normalization()?,
            PriorId::UniformBall => FOUR_PI / 3.0,
        };
        Ok(Self { id, normalization })
    }

    /// Angle-free volume factor before normalization.
    fn element(&self, r: Radius) -> f64 {
        match self.id {
            PriorId::Bures => r.r * r.r / (8.0 * (r.rc * (1.0 + r.r)).sqrt()),
            PriorId::BuresQ1Trunc => truncated_element_radial(r, 1.0),
            PriorId::Fisher => fisher_element_radial(r),
            PriorId::FisherQ1 => extended_q1_element_radial(r),
            PriorId::UniformBall => r.r * r.r,
        }
    }

    /// Marginal density of r.
    pub fn radial(&self, r: impl Into<Radius>) -> f64 {
        FOUR_PI * self.element(r.into()) / self.normalization
    }

    /// Density at (r, theta1, theta2).
    pub fn eval(&self, r: f64, theta1: f64, _theta2: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::domain(format!("r = {r} outside the Bloch ball")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        if r == 1.0 {
            // p_B and p_Bq1trunc diverge at the pure states; the Husimi-based ones stay finite
            let v = self.radial(Radius { r: 1.0, rc: 0.0 });
            return if v.is_finite() {
                Ok(v * theta1.sin() / FOUR_PI)
            } else {
                Err(Error::domain(format!("{} diverges at r = 1", self.id)))
            };
        }
        Ok(self.radial(r) * theta1.sin() / FOUR_PI)
    }
}

pub fn prior_eval(id: PriorId, r: f64, theta1: f64, theta2: f64) -> Result<f64> {
    PriorDensity::new(id)?.eval(r, theta1, theta2)
}

/// Spin-up/spin-down counts along x, y, z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub counts: [(u32, u32); 3],
    /// Use the escort Bloch vector (the q-extended likelihood).
    pub q_extension: bool,
}

impl MeasurementRecord {
    pub fn empty() -> Self {
        Self {
            counts: [(0, 0); 3],
            q_extension: false,
        }
    }

    /// One up and one down outcome along each axis.
    pub fn xyz_pairs() -> Self {
        Self {
            counts: [(1, 1); 3],
            q_extension: false,
        }
    }

    pub fn z(up: u32, down: u32) -> Self {
        Self {
            counts: [(0, 0), (0, 0), (up, down)],
            q_extension: false,
        }
    }

    pub fn extended(self) -> Self {
        Self {
            q_extension: true,
            ..self
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&(u, d)| u == 0 && d == 0)
    }

    fn axes(&self) -> Vec<(usize, u32, u32)> {
        (0..3)
            .filter(|&a| self.counts[a] != (0, 0))
            .map(|a| (a, self.counts[a].0, self.counts[a].1))
            .collect()
    }

    /// Likelihood at Bloch vector v.
    pub fn likelihood_at(&self, v: [f64; 3]) -> f64 {
        let mut l = 1.0;
        for (a, &(up, down)) in self.counts.iter().enumerate() {
            l *= (0.5 * (1.0 + v[a])).powi(up as i32) * (0.5 * (1.0 - v[a])).powi(down as i32);
        }
        l
    }
}

impl FromStr for MeasurementRecord {
    type Err = Error;
    /// Accepts `xyz-pairs`, `z-pair`, `z-up`, `z-down`, `z-same`, or six counts
    /// `ux,dx,uy,dy,uz,dz`; a `q:` prefix selects the q-extended likelihood.
    fn from_str(s: &str) -> Result<Self> {
        let (ext, body) = match s.strip_prefix("q:") {
            Some(b) => (true, b),
            None => (false, s),
        };
        let rec = match body {
            "xyz-pairs" => Self::xyz_pairs(),
            "z-pair" => Self::z(1, 1),
            "z-up" => Self::z(1, 0),
            "z-down" => Self::z(0, 1),
            "z-same" => Self::z(2, 0),
            "none" | "" => Self::empty(),
            _ => {
                let n: Vec<u32> = body
                    .split(',')
                    .map(|x| x.trim().parse::<u32>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::domain(format!("cannot parse record '{s}'")))?;
                if n.len() != 6 {
                    return Err(Error::domain(format!("record '{s}' needs six counts")));
                }
                Self {
                    counts: [(n[0], n[1]), (n[2], n[3]), (n[4], n[5])],
                    q_extension: false,
                }
            }
        };
        Ok(Self {
            q_extension: ext,
            ..rec
        })
    }
}

/// Escort Bloch radius (1 - W^q)/(1 + W^q), accurate near both ends.
fn escort_radius_of(r: Radius, q: f64) -> f64 {
    let lw = r.log_w();
    (-0.5 * q * lw).tanh()
}

/// Likelihood at a point of the ball. `q` is used only for q-extended records.
pub fn likelihood(
    record: &MeasurementRecord,
    r: f64,
    theta1: f64,
    theta2: f64,
    q: Option<f64>,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("r = {r} outside the Bloch ball")));
    }
    let rho = if record.q_extension {
        let q = q.ok_or_else(|| Error::domain("q-extended record needs q"))?;
        escort_radius_of(Radius { r, rc: 1.0 - r }, q)
    } else {
        r
    };
    let (s1, c1) = theta1.sin_cos();
    let (s2, c2) = theta2.sin_cos();
    Ok(record.likelihood_at([rho * c1, rho * s1 * c2, rho * s1 * s2]))
}

/// Sphere averages (1/4pi) int L^s dOmega and (1/4pi) int L^s log L dOmega at radius r.
struct SphereRule {
    c: Vec<f64>,
    wc: Vec<f64>,
    n_phi: usize,
}

impl SphereRule {
    fn new() -> Self {
        let (c, wc) = gauss_legendre(200);
        Self { c, wc, n_phi: 400 }
    }

    fn moments(&self, record: &MeasurementRecord, rho: f64, power: f64) -> (f64, f64) {
        let axes = record.axes();
        let term = |l: f64| {
            if l > 0.0 {
                let ls = l.powf(power);
                (ls, ls * l.ln())
            } else {
                (0.0, 0.0)
            }
        };
        let (mut a, mut b) = (0.0, 0.0);
        if axes.len() <= 1 {
            // polar axis along the measured one
            let (up, down) = axes.first().map_or((0, 0), |x| (x.1, x.2));
            for (c, w) in self.c.iter().zip(&self.wc) {
                let l = (0.5 * (1.0 + rho * c)).powi(up as i32)
                    * (0.5 * (1.0 - rho * c)).powi(down as i32);
                let (ta, tb) = term(l);
                a += 0.5 * w * ta;
                b += 0.5 * w * tb;
            }
            return (a, b);
        }
        let dphi = std::f64::consts::TAU / self.n_phi as f64;
        // with equal up and down counts on every axis L is even in each coordinate, and the
        // octant sum with mirrored weights reproduces the full product rule
        let even = record.counts.iter().all(|&(u, d)| u == d) && self.n_phi.is_multiple_of(4);
        let quarter = self.n_phi / 4;
        for (c, w) in self.c.iter().zip(&self.wc) {
            if even && *c < 0.0 {
                continue;
            }
            let s = (1.0 - c * c).sqrt();
            let ks: Box<dyn Iterator<Item = (usize, f64)>> = if even {
                let cm = if *c > 0.0 { 2.0 } else { 1.0 };
                Box::new((0..=quarter).map(move |k| {
                    let edge = if k == 0 || k == quarter { 2.0 } else { 4.0 };
                    (k, cm * edge)
                }))
            } else {
                Box::new((0..self.n_phi).map(|k| (k, 1.0)))
            };
            for (k, mult) in ks {
                let (sp, cp) = (k as f64 * dphi).sin_cos();
                let l = record.likelihood_at([rho * c, rho * s * cp, rho * s * sp]);
                let (ta, tb) = term(l);
                let wt = mult * 0.5 * w / self.n_phi as f64;
                a += wt * ta;
                b += wt * tb;
            }
        }
        (a, b)
    }
}

/// Fixed tanh-sinh rule in u with r = 1 - u^2.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    pub r: Vec<Radius>,
    pub w: Vec<f64>,
}

impl RadialGrid {
    pub fn new(level: u32) -> Self {
        let nodes = tanh_sinh_nodes(level, 0.0, 1.0);
        let mut r = Vec::with_capacity(nodes.len());
        let mut w = Vec::with_capacity(nodes.len());
        for n in nodes {
            let u = n.xa;
            r.push(Radius {
                r: n.xb * (1.0 + u),
                rc: u * u,
            });
            w.push(n.w * 2.0 * u);
        }
        Self { r, w }
    }
}

impl Default for RadialGrid {
    fn default() -> Self {
        Self::new(7)
    }
}

/// Prior or posterior: prior(r, angles) L^power / z.
#[derive(Debug, Clone)]
pub struct Density {
    pub prior: PriorDensity,
    pub record: MeasurementRecord,
    pub power: f64,
    pub z: f64,
    /// Per radial node: radial prior value and sphere moments (A, B) of L^power.
    table: Vec<(f64, f64, f64)>,
}

/// Evaluation context shared by a batch of comparisons.
pub struct Engine {
    grid: RadialGrid,
    sphere: SphereRule,
    priors: Mutex<HashMap<PriorId, PriorDensity>>,
    moments: Mutex<MomentCache>,
}

type MomentCache = HashMap<(MeasurementRecord, u64), Arc<Vec<(f64, f64)>>>;

impl Default for Engine {
    fn default() -> Self {
        Self::new(RadialGrid::default())
    }
}

impl Engine {
    pub fn new(grid: RadialGrid) -> Self {
        Self {
            grid,
            sphere: SphereRule::new(),
            priors: Mutex::new(HashMap::new()),
            moments: Mutex::new(HashMap::new()),
        }
    }

    pub fn prior_density(&self, id: PriorId) -> Result<PriorDensity> {
        if let Some(p) = self.priors.lock().unwrap().get(&id) {
            return Ok(*p);
        }
        let p = PriorDensity::new(id)?;
        self.priors.lock().unwrap().insert(id, p);
        Ok(p)
    }

    pub fn prior(&self, id: PriorId) -> Result<Density> {
        self.posterior(self.prior_density(id)?, &MeasurementRecord::empty(), 1.0)
    }

    /// Sphere moments of L^power at every radial node.
    fn moment_table(&self, record: &MeasurementRecord, power: f64) -> Arc<Vec<(f64, f64)>> {
        let key = (*record, power.to_bits());
        if let Some(t) = self.moments.lock().unwrap().get(&key) {
            return Arc::clone(t);
        }
        let t: Arc<Vec<(f64, f64)>> = Arc::new(if record.is_empty() {
            vec![(1.0, 0.0); self.grid.r.len()]
        } else {
            self.grid
                .r
                .par_iter()
                .map(|r| self.sphere.moments(record, r.r, power))
                .collect()
        });
        self.moments.lock().unwrap().insert(key, Arc::clone(&t));
        t
    }

    pub fn posterior(
        &self,
        prior: PriorDensity,
        record: &MeasurementRecord,
        power: f64,
    ) -> Result<Density> {
        if record.q_extension {
            return Err(Error::SupportMismatch(format!(
                "{} lives on the ball but the q-extended record needs a prior on ball x q",
                prior.id.name()
            )));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::domain(format!(
                "likelihood power {power} must be positive"
            )));
        }
        let moments = self.moment_table(record, power);
        let table: Vec<(f64, f64, f64)> = self
            .grid
            .r
            .iter()
            .zip(moments.iter())
            .map(|(&r, &(a, b))| (prior.radial(r), a, b))
            .collect();
        let z: f64 = table
            .iter()
            .zip(&self.grid.w)
            .map(|(t, w)| w * t.0 * t.1)
            .sum();
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::NormalizationFailure(format!(
                "posterior normalizer {z}"
            )));
        }
        Ok(Density {
            prior,
            record: *record,
            power,
            z,
            table,
        })
    }

    /// Relative entropy in nats. Both densities must share the record (or have none).
    pub fn kl(&self, p: &Density, q: &Density) -> Result<f64> {
        let same_record = p.record == q.record || q.record.is_empty() || p.record.is_empty();
        if !same_record {
            return Err(Error::domain(
                "kl between posteriors from different records",
            ));
        }
        // log(P/Q) = log(pa/pb) + (sa - sb) log L - log za + log zb, where a missing record has power 0
        let sp = if p.record.is_empty() { 0.0 } else { p.power };
        let sq = if q.record.is_empty() { 0.0 } else { q.power };
        let shift = q.z.ln() - p.z.ln();
        let mut acc = 0.0;
        for ((tp, tq), w) in p.table.iter().zip(&q.table).zip(&self.grid.w) {
            let (pa, a, b) = *tp;
            let pb = tq.0;
            if pa == 0.0 || a == 0.0 {
                continue;
            }
            if pb <= 0.0 {
                return Err(Error::SupportMismatch(format!(
                    "{} vanishes where {} does not",
                    q.prior.id, p.prior.id
                )));
            }
            let v = pa * (a * ((pa / pb).ln() + shift) + (sp - sq) * b);
            if !v.is_finite() {
                return Err(Error::SupportMismatch("non-integrable log ratio".into()));
            }
            acc += w * v;
        }
        Ok(acc / p.z)
    }

    /// Relative entropy of the power-1 posterior to the prior.
    pub fn information_gain(&self, prior: PriorId, record: &MeasurementRecord) -> Result<f64> {
        let p = self.prior(prior)?;
        let post = self.posterior(p.prior, record, 1.0)?;
        self.kl(&post, &p)
    }

    pub fn clarke_compare(
        &self,
        a: PriorId,
        b: PriorId,
        record: &MeasurementRecord,
    ) -> Result<Verdict> {
        let pa = self.prior(a)?;
        let pb = self.prior(b)?;
        let kl_ab = self.kl(&pa, &pb)?;
        let kl_ba = self.kl(&pb, &pa)?;
        let post_a = self.posterior(pa.prior, record, 0.5)?;
        let post_b = self.posterior(pb.prior, record, 0.5)?;
        let kl_post_ab = self.kl(&post_a, &pb)?;
        let kl_post_ba = self.kl(&post_b, &pa)?;
        Ok(Verdict::decide(
            a,
            b,
            [kl_ab, kl_ba, kl_post_ab, kl_post_ba],
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    First,
    Second,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair: (PriorId, PriorId),
    pub kl_ab: f64,
    pub kl_ba: f64,
    pub kl_post_ab: f64,
    pub kl_post_ba: f64,
    pub outcome: Outcome,
}

impl Verdict {
    /// a wins if adding data moves a toward b (kl falls) but not b toward a (kl rises).
    pub fn decide(a: PriorId, b: PriorId, s: [f64; 4]) -> Self {
        let da = s[2] - s[0];
        let db = s[3] - s[1];
        let outcome = if da.abs() < CLARKE_TIE || db.abs() < CLARKE_TIE {
            Outcome::Undecided
        } else if da < 0.0 && db > 0.0 {
            Outcome::First
        } else if da > 0.0 && db < 0.0 {
            Outcome::Second
        } else {
            Outcome::Undecided
        };
        Self {
            pair: (a, b),
            kl_ab: s[0],
            kl_ba: s[1],
            kl_post_ab: s[2],
            kl_post_ba: s[3],
            outcome,
        }
    }

    pub fn more_noninformative(&self) -> Option<PriorId> {
        match self.outcome {
            Outcome::First => Some(self.pair.0),
            Outcome::Second => Some(self.pair.1),
            Outcome::Undecided => None,
        }
    }
}

/// Sorts priors by pairwise wins; `None` if the verdicts do not form a total order.
pub fn rank(verdicts: &[Verdict], priors: &[PriorId]) -> Option<Vec<PriorId>> {
    let wins = |p: PriorId| {
        verdicts
            .iter()
            .filter(|v| v.more_noninformative() == Some(p))
            .count()
    };
    let mut order = priors.to_vec();
    order.sort_by_key(|&p| std::cmp::Reverse(wins(p)));
    let n = order.len();
    let total = (0..n).all(|i| wins(order[i]) == n - 1 - i);
    total.then_some(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    pub density: f64,
}

/// Marginal density of r for a prior on n points of [r_lo, r_hi].
pub fn biasedness_curve(id: PriorId, r_lo: f64, r_hi: f64, n: usize) -> Result<Vec<CurvePoint>> {
    if !(r_lo > 0.0 && r_lo <= r_hi && r_hi <= 1.0) || n == 0 {
        return Err(Error::domain(format!(
            "bad range [{r_lo}, {r_hi}] with {n} points"
        )));
    }
    let p = PriorDensity::new(id)?;
    Ok((0..n)
        .map(|i| {
            let r = if n == 1 {
                r_lo
            } else {
                r_lo + (r_hi - r_lo) * i as f64 / (n - 1) as f64
            };
            CurvePoint {
                r,
                density: p.radial(r),
            }
        })
        .collect())
}

/// Truncated extended Bures prior over ball x [q_lo, q_hi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTruncatedPrior {
    pub q_lo: f64,
    pub q_hi: f64,
    pub normalization: f64,
}

pub fn q_truncated_prior(q_lo: f64, q_hi: f64) -> Result<QTruncatedPrior> {
    if q_hi.is_infinite() {
        return Err(Error::Divergence(
            "the truncated element integrates to a multiple of 1/q over the ball, so its q-integral diverges".into(),
        ));
    }
    if !(q_lo > 0.0 && q_lo < q_hi) {
        return Err(Error::domain(format!(
            "need 0 < q_lo < q_hi, got [{q_lo}, {q_hi}]"
        )));
    }
    let normalization = std::f64::consts::PI * (1.0 + 4f64.ln()) * (q_hi / q_lo).ln() / 24.0;
    Ok(QTruncatedPrior {
        q_lo,
        q_hi,
        normalization,
    })
}

impl QTruncatedPrior {
    pub fn eval(&self, r: f64, theta1: f64, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) || q < self.q_lo || q > self.q_hi {
            return Err(Error::domain(format!(
                "(r, q) = ({r}, {q}) outside the support"
            )));
        }
        Ok(truncated_element_radial(r, q) * theta1.sin() / self.normalization)
    }

    /// Direct (r, q) quadrature of the normalization.
    pub fn normalization_numeric(&self) -> Result<f64> {
        let (v, w) = self.q_rule();
        let mut total = 0.0;
        for (&q, &wq) in v.iter().zip(&w) {
            let m = tanh_sinh(
                |_, xa, xb| truncated_element_radial(Radius { r: xa, rc: xb }, q),
                0.0,
                1.0,
                1e-14,
                1e-10,
            )?;
            total += wq * FOUR_PI * m.value;
        }
        Ok(total)
    }

    /// Gauss-Legendre rule in log q on 8 panels.
    fn q_rule(&self) -> (Vec<f64>, Vec<f64>) {
        let (x, w) = gauss_legendre(16);
        let (a, b) = (self.q_lo.ln(), self.q_hi.ln());
        let panels = 8;
        let h = (b - a) / panels as f64;
        let mut qs = Vec::new();
        let mut ws = Vec::new();
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (xi, wi) in x.iter().zip(&w) {
                let s = lo + 0.5 * h * (xi + 1.0);
                let q = s.exp();
                qs.push(q);
                ws.push(0.5 * h * wi * q);
            }
        }
        (qs, ws)
    }

    /// Information gain of the power-1 posterior under the q-extended likelihood.
    pub fn information_gain(&self, record: &MeasurementRecord) -> Result<f64> {
        let sphere = SphereRule::new();
        let grid = RadialGrid::new(7);
        let (qs, wq) = self.q_rule();
        // E[L] and E[L log L] under the prior
        let parts: Vec<(f64, f64, f64)> = qs
            .par_iter()
            .zip(&wq)
            .map(|(&q, &w)| {
                let (mut m, mut ea, mut eb) = (0.0, 0.0, 0.0);
                for (r, wr) in grid.r.iter().zip(&grid.w) {
                    let p = FOUR_PI * truncated_element_radial(*r, q) / self.normalization;
                    if p == 0.0 || !p.is_finite() {
                        continue;
                    }
                    let (a, b) = sphere.moments(record, escort_radius_of(*r, q), 1.0);
                    m += wr * p;
                    ea += wr * p * a;
                    eb += wr * p * b;
                }
                (w * m, w * ea, w * eb)
            })
            .collect();
        let mass: f64 = parts.iter().map(|p| p.0).sum();
        let z: f64 = parts.iter().map(|p| p.1).sum::<f64>() / mass;
        let e: f64 = parts.iter().map(|p| p.2).sum::<f64>() / mass;
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NormalizationFailure(format!(
                "posterior normalizer {z}"
            )));
        }
        Ok(e / z - z.ln())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_densities_integrate_to_one() {
        let g = RadialGrid::default();
        for id in PriorId::MONOTONE
            .iter()
            .chain([PriorId::UniformBall].iter())
        {
            let p = PriorDensity::new(*id).unwrap();
            let m: f64 = g.r.iter().zip(&g.w).map(|(r, w)| w * p.radial(*r)).sum();
            assert!((m - 1.0).abs() < 1e-8, "{id}: {m}");
        }
    }

    #[test]
    fn canonical_likelihood_closed_form() {
        let rec = MeasurementRecord::xyz_pairs();
        assert!((likelihood(&rec, 0.0, 0.3, 1.0, None).unwrap() - 1.0 / 64.0).abs() < 1e-15);
        let (r, t1, t2): (f64, f64, f64) = (0.7, 1.1, 2.3);
        let (x, y, z) = (
            r * t1.cos(),
            r * t1.sin() * t2.cos(),
            r * t1.sin() * t2.sin(),
        );
        let want = (1.0 - x * x) * (1.0 - y * y) * (1.0 - z * z) / 64.0;
        assert!((likelihood(&rec, r, t1, t2, None).unwrap() - want).abs() < 1e-15);
        let up = MeasurementRecord::z(1, 0);
        assert!((likelihood(&up, r, t1, t2, None).unwrap() - (1.0 + z) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn extended_likelihood_matches_printed_form_and_reduces_at_q1() {
        let rec = MeasurementRecord::z(1, 1).extended();
        for &(r, q) in &[(0.3f64, 1.0f64), (0.6, 2.5), (0.9, 0.7)] {
            let (t1, t2) = (0.9f64, 1.3f64);
            let z = r * t1.sin() * t2.sin();
            let wq = ((1.0 - r) / (1.0 + r)).powf(q);
            let printed = (r * r * (1.0 + wq).powi(2) - (wq - 1.0).powi(2) * z * z)
                / (4.0 * r * r * (1.0 + wq).powi(2));
            assert!((likelihood(&rec, r, t1, t2, Some(q)).unwrap() - printed).abs() < 1e-14);
            if q == 1.0 {
                assert!((printed - (1.0 - z * z) / 4.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn extended_outcome_probabilities_sum_to_one() {
        for &(r, q) in &[(0.2, 0.5), (0.8, 3.0), (0.99, 40.0)] {
            let l =
                |rec: MeasurementRecord| likelihood(&rec.extended(), r, 0.4, 2.0, Some(q)).unwrap();
            let s = l(MeasurementRecord::z(2, 0))
                + l(MeasurementRecord::z(0, 2))
                + 2.0 * l(MeasurementRecord::z(1, 1));
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn kl_is_zero_on_the_diagonal_and_positive_off_it() {
        let e = Engine::new(RadialGrid::new(5));
        let a = e.prior(PriorId::Bures).unwrap();
        let b = e.prior(PriorId::UniformBall).unwrap();
        assert!(e.kl(&a, &a).unwrap().abs() < 1e-14);
        assert!(e.kl(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn uniform_prior_with_empty_record_is_unchanged() {
        let e = Engine::new(RadialGrid::new(5));
        let p = e.prior(PriorId::UniformBall).unwrap();
        let post = e
            .posterior(p.prior, &MeasurementRecord::empty(), 0.5)
            .unwrap();
        assert!((post.z - 1.0).abs() < 1e-10);
        assert!(e.kl(&post, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_priors_are_undecided() {
        let e = Engine::new(RadialGrid::new(5));
        let v = e
            .clarke_compare(
                PriorId::Bures,
                PriorId::Bures,
                &MeasurementRecord::xyz_pairs(),
            )
            .unwrap();
        assert_eq!(v.outcome, Outcome::Undecided);
    }

    #[test]
    fn infinite_q_range_diverges() {
        assert!(matches!(
            q_truncated_prior(0.5, f64::INFINITY),
            Err(Error::Divergence(_))
        ));
        let p = q_truncated_prior(0.5, 500.0).unwrap();
        let n = p.normalization_numeric().unwrap();
        assert!(
            (n - p.normalization).abs() < 1e-8 * p.normalization,
            "{n} vs {}",
            p.normalization
        );
    }

    #[test]
    fn record_parsing() {
        assert_eq!(
            "xyz-pairs".parse::<MeasurementRecord>().unwrap(),
            MeasurementRecord::xyz_pairs()
        );
        assert_eq!(
            "0,0,0,0,2,0".parse::<MeasurementRecord>().unwrap(),
            MeasurementRecord::z(2, 0)
        );
        assert!("q:z-up".parse::<MeasurementRecord>().unwrap().q_extension);
        assert!("1,2".parse::<MeasurementRecord>().is_err());
    }
}
