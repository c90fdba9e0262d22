//! Volumes, separable volumes and separability probabilities of the Bell-diagonal
//! families, plus the piecewise closed forms used as oracles.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::metric::{bell_volume_element, MetricId};
use crate::quadrature::{
    cubature, edge_map, edge_map_inverse, monte_carlo, CubatureOptions, CubeIntegrand, Method,
    QuadratureResult,
};
use crate::state::{
    ar_point_slack_with, bivariate_point_slack, jaynes_point_slack_with, tlb_point_simplex,
    BellPoint, CurveMeasure, FamilyChart, ParamPoint,
};

const TWO_SQRT2: f64 = 2.0 * SQRT_2;

/// (sqrt5 - 1)/2, a branch point of both piecewise formulas.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// A Bell-diagonal model together with its fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    /// AR family at fixed q, over the b >= 0 half of its (b, sigma2) triangle.
    ArBell { q: f64 },
    /// Jaynes model with the three constraints, over the same triangle.
    Trivariate { alpha: f64 },
    /// Jaynes model on the curve sigma2 = 4 + b^2/2, b in [0, 2 sqrt2].
    Bivariate { alpha: f64, measure: CurveMeasure },
    /// Three-parameter Bell-diagonal family (x, y, z).
    Tlb,
}

impl Model {
    /// The one-parameter Jaynes state: alpha = 1 on the dispersion curve with the pulled-back measure.
    pub fn jaynes_one_parameter() -> Self {
        Model::Bivariate {
            alpha: 1.0,
            measure: CurveMeasure::Induced,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::ArBell { .. } => "ar_bell",
            Model::Trivariate { .. } => "trivariate",
            Model::Bivariate { .. } => "bivariate",
            Model::Tlb => "tlb",
        }
    }

    /// Family chart in native coordinates.
    pub fn chart(&self) -> FamilyChart {
        match *self {
            Model::ArBell { q } => FamilyChart::ar_bell(q),
            Model::Trivariate { alpha } => FamilyChart::jaynes_alpha(alpha),
            Model::Bivariate { alpha, .. } => FamilyChart::jaynes_bivariate(alpha),
            Model::Tlb => FamilyChart::tlb(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::ArBell { .. } | Model::Trivariate { .. } => 2,
            Model::Bivariate { .. } => 1,
            Model::Tlb => 3,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Model::ArBell { q } if !(q.is_finite() && q > 0.0) => {
                Err(Error::domain(format!("q = {q} must be positive")))
            }
            Model::Trivariate { alpha } | Model::Bivariate { alpha, .. }
                if !alpha.is_finite() || alpha == 0.0 || alpha == -1.0 =>
            {
                Err(Error::domain(format!(
                    "alpha = {alpha} leaves the model undefined"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Maps a point of the unit cube to the model. The working chart is (u, w) slack
    /// coordinates for the triangle models, b for the curve, and simplex weights for TLB.
    pub fn sample(&self, t: &[f64]) -> Sample {
        match *self {
            Model::ArBell { .. } | Model::Trivariate { .. } => {
                let (x0, xc0, j0) = edge_map(t[0]);
                let (x1, xc1, j1) = edge_map(t[1]);
                let u = 8.0 * x0;
                let w = 8.0 * xc0 * x1;
                let rest = 8.0 * xc0 * xc1;
                let bell = match *self {
                    Model::ArBell { q } => ar_point_slack_with(q, u, w, rest + 8.0 * xc0),
                    Model::Trivariate { alpha } => jaynes_point_slack_with(alpha, u, w, rest),
                    _ => unreachable!(),
                };
                Sample {
                    bell,
                    native: ParamPoint(vec![rest / TWO_SQRT2, 8.0 * xc0]),
                    work_jacobian: 64.0 * xc0 * j0 * j1,
                    work_to_native: 1.0 / TWO_SQRT2,
                }
            }
            Model::Bivariate { alpha, measure } => {
                let (x, xc, j) = edge_map(t[0]);
                let b = TWO_SQRT2 * x;
                Sample {
                    bell: bivariate_point_slack(alpha, x, xc, measure),
                    native: ParamPoint(vec![b]),
                    work_jacobian: TWO_SQRT2 * j,
                    work_to_native: 1.0,
                }
            }
            Model::Tlb => {
                let (x0, xc0, j0) = edge_map(t[0]);
                let (x1, xc1, j1) = edge_map(t[1]);
                let (x2, xc2, j2) = edge_map(t[2]);
                let c1 = xc0 * xc1;
                let p = [x0, xc0 * x1, c1 * x2, c1 * xc2];
                Sample {
                    bell: tlb_point_simplex(p),
                    native: ParamPoint(vec![1.0 - 4.0 * p[0], 1.0 - 4.0 * p[1], 1.0 - 4.0 * p[2]]),
                    work_jacobian: xc0 * xc0 * xc1 * j0 * j1 * j2,
                    work_to_native: 64.0,
                }
            }
        }
    }
}

/// A model point produced from the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Bell weights with derivatives along the working chart.
    pub bell: BellPoint,
    pub native: ParamPoint,
    /// d(working chart)/d(cube).
    pub work_jacobian: f64,
    /// |d(native)/d(working chart)|.
    pub work_to_native: f64,
}

impl Sample {
    pub fn native_jacobian(&self) -> f64 {
        self.work_jacobian * self.work_to_native
    }

    /// Volume element per unit native coordinate volume.
    pub fn volume_density(&self, metric: MetricId) -> f64 {
        bell_volume_element(&self.bell, metric) / self.work_to_native
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Feasible,
    Separable,
    Entangled,
}

/// Whether points with negative Bell weights count as part of the region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    Required,
    /// Keep every point of the parameter domain; only the Peres inequalities are tested.
    Formal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub model: Model,
    pub predicate: Predicate,
    pub positivity: Positivity,
}

impl Region {
    pub fn new(model: Model, predicate: Predicate) -> Self {
        Self {
            model,
            predicate,
            positivity: Positivity::Required,
        }
    }

    /// Region used for a given metric: the flat metric on the Jaynes models is integrated
    /// over the whole parameter domain, monotone metrics need positive weights.
    pub fn for_metric(model: Model, predicate: Predicate, metric: MetricId) -> Self {
        let positivity = match (model, metric) {
            (Model::Trivariate { .. } | Model::Bivariate { .. }, MetricId::Hs) => {
                Positivity::Formal
            }
            _ => Positivity::Required,
        };
        Self {
            model,
            predicate,
            positivity,
        }
    }

    pub fn chart(&self) -> FamilyChart {
        self.model.chart()
    }

    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self.model {
            Model::ArBell { .. } | Model::Trivariate { .. } => vec![(0.0, TWO_SQRT2), (0.0, 8.0)],
            Model::Bivariate { .. } => vec![(0.0, TWO_SQRT2)],
            Model::Tlb => vec![(-3.0, 1.0); 3],
        }
    }

    pub fn contains(&self, s: &Sample) -> bool {
        if self.positivity == Positivity::Required && !s.bell.is_psd() {
            return false;
        }
        match self.predicate {
            Predicate::Feasible => true,
            Predicate::Separable => s.bell.is_ppt(),
            Predicate::Entangled => !s.bell.is_ppt(),
        }
    }

    /// Crossings of the constraints p_k = 1/2 (and p_k = 0 where positivity is required)
    /// along the innermost cube coordinate. Along those lines every weight is monotone for
    /// the triangle models and TLB, so probing the endpoints suffices; the curve model is
    /// probed on a fine grid.
    #[allow(clippy::needless_range_loop)]
    fn breakpoints(&self, prefix: &[f64]) -> Vec<f64> {
        if prefix.len() + 1 < self.model.dim() {
            return self.outer_breakpoints(prefix);
        }
        let probes = match self.model {
            Model::Bivariate { .. } => 256,
            _ => 1,
        };
        let check_psd = self.positivity == Positivity::Required;
        let mut point = prefix.to_vec();
        point.push(0.0);
        let mut weights = |t: f64| {
            *point.last_mut().unwrap() = t;
            self.model.sample(&point).bell.weights
        };
        let (lo, hi) = (1e-9, 1.0 - 1e-9);
        let ts: Vec<f64> = (0..=probes)
            .map(|i| lo + (hi - lo) * i as f64 / probes as f64)
            .collect();
        let ws: Vec<[f64; 4]> = ts.iter().map(|&t| weights(t)).collect();
        let mut cuts = Vec::new();
        for k in 0..4 {
            for level in [0.5, 0.0] {
                if level == 0.0 && !check_psd {
                    continue;
                }
                for i in 0..probes {
                    let (a, b) = (ws[i][k] - level, ws[i + 1][k] - level);
                    if !(a.is_finite() && b.is_finite()) || (a > 0.0) == (b > 0.0) {
                        continue;
                    }
                    let (mut l, mut h) = (ts[i], ts[i + 1]);
                    for _ in 0..64 {
                        let m = 0.5 * (l + h);
                        if (weights(m)[k] - level > 0.0) == (a > 0.0) {
                            l = m;
                        } else {
                            h = m;
                        }
                    }
                    cuts.push(0.5 * (l + h));
                }
            }
        }
        cuts
    }

    /// TLB outer levels: p1 = 1/2 on the first coordinate; p2 = 1/2 and p3 + p4 = 1/2 on
    /// the second.
    fn outer_breakpoints(&self, prefix: &[f64]) -> Vec<f64> {
        if self.model != Model::Tlb || self.predicate == Predicate::Feasible {
            return Vec::new();
        }
        if prefix.is_empty() {
            return vec![0.5];
        }
        let (_, xc0, _) = edge_map(prefix[0]);
        let x = 0.5 / xc0;
        [x, 1.0 - x]
            .into_iter()
            .filter(|v| *v > 0.0 && *v < 1.0)
            .map(edge_map_inverse)
            .collect()
    }

    fn needs_predicate(&self) -> bool {
        let psd_automatic = matches!(self.model, Model::ArBell { .. } | Model::Tlb);
        self.predicate != Predicate::Feasible
            || (self.positivity == Positivity::Required && !psd_automatic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOptions {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
    pub mc_samples: u64,
    pub max_evals: u64,
    /// Predicate probes per innermost line before breakpoint bisection.
    pub scan_points: usize,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            method: Method::Cubature,
            rel_tol: 1e-6,
            abs_tol: 1e-12,
            seed: 0,
            mc_samples: 4_000_000,
            max_evals: 100_000_000,
            scan_points: 40,
        }
    }
}

impl RegionOptions {
    pub fn monte_carlo(seed: u64, samples: u64) -> Self {
        Self {
            method: Method::MonteCarlo,
            seed,
            mc_samples: samples,
            rel_tol: 1e-3,
            ..Self::default()
        }
    }
}

struct RegionIntegrand<'a> {
    region: &'a Region,
    f: &'a (dyn Fn(&Sample) -> f64 + Sync),
}

impl CubeIntegrand for RegionIntegrand<'_> {
    fn dim(&self) -> usize {
        self.region.model.dim()
    }
    fn value(&self, t: &[f64]) -> f64 {
        let s = self.region.model.sample(t);
        let j = s.native_jacobian();
        if j == 0.0 {
            return 0.0;
        }
        let v = (self.f)(&s) * j;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }
    fn inside(&self, t: &[f64]) -> bool {
        self.region.contains(&self.region.model.sample(t))
    }
    fn has_predicate(&self) -> bool {
        self.region.needs_predicate()
    }
    fn breakpoints(&self, prefix: &[f64]) -> Vec<f64> {
        self.region.breakpoints(prefix)
    }
}

/// Integrates a density (per unit native coordinate volume) over the region.
pub fn integrate(
    region: &Region,
    f: &(dyn Fn(&Sample) -> f64 + Sync),
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    region.model.check()?;
    if !(opts.rel_tol > 0.0 && opts.abs_tol >= 0.0) {
        return Err(Error::domain("tolerances must be positive"));
    }
    let integrand = RegionIntegrand { region, f };
    match opts.method {
        Method::Cubature => cubature(
            &integrand,
            CubatureOptions {
                rel_tol: opts.rel_tol,
                abs_tol: opts.abs_tol,
                max_evals: opts.max_evals,
                scan_points: opts.scan_points,
            },
        ),
        Method::MonteCarlo => {
            if opts.mc_samples > opts.max_evals {
                return Err(Error::NonConvergence {
                    evals: opts.mc_samples,
                });
            }
            Ok(monte_carlo(&integrand, opts.mc_samples, opts.seed))
        }
    }
}

fn volume(
    model: Model,
    metric: MetricId,
    predicate: Predicate,
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    let region = Region::for_metric(model, predicate, metric);
    integrate(&region, &|s: &Sample| s.volume_density(metric), opts)
}

pub fn total_volume(
    model: Model,
    metric: MetricId,
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    volume(model, metric, Predicate::Feasible, opts)
}

pub fn separable_volume(
    model: Model,
    metric: MetricId,
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    volume(model, metric, Predicate::Separable, opts)
}

pub fn entangled_volume(
    model: Model,
    metric: MetricId,
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    volume(model, metric, Predicate::Entangled, opts)
}

/// Total and separable volumes with their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub total: QuadratureResult,
    pub separable: QuadratureResult,
    pub probability: QuadratureResult,
}

pub fn volumes(model: Model, metric: MetricId, opts: &RegionOptions) -> Result<VolumeReport> {
    let total = total_volume(model, metric, opts)?;
    if total.value.abs() <= total.abs_error.max(1e-14) {
        return Err(Error::DegenerateTotal {
            value: total.value,
            err: total.abs_error,
        });
    }
    let separable = separable_volume(model, metric, opts)?;
    Ok(VolumeReport {
        total,
        separable,
        probability: separable.ratio(&total),
    })
}

pub fn sep_probability(
    model: Model,
    metric: MetricId,
    opts: &RegionOptions,
) -> Result<QuadratureResult> {
    Ok(volumes(model, metric, opts)?.probability)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormModel {
    TrivariateAlpha,
    BivariateAlpha,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

/// Piecewise closed-form HS separability probability of the Jaynes models.
pub fn closed_form_sepprob(model: ClosedFormModel, alpha: f64) -> Result<f64> {
    if alpha.is_nan() {
        return Err(Error::UndefinedBranch("alpha is NaN".into()));
    }
    let a = alpha;
    match model {
        ClosedFormModel::TrivariateAlpha => {
            let s3 = 3f64.sqrt();
            Ok(if a.is_infinite() {
                0.75
            } else if a == 0.0 || a == -1.0 {
                0.0
            } else if near(a, -SQRT_2) {
                0.625 * a * (a + 1.0)
            } else if near(a, GOLDEN) {
                (5.0 - 5f64.sqrt()) / 8.0 * a * (a + 1.0)
            } else if a >= 1.0 {
                0.75 - 0.25 / a
            } else if a > 0.0 {
                -(a - 2.0) * a * (a + 1.0) / 4.0
            } else if a > -1.0 {
                -a * (a + 1.0) / 4.0
            } else if a > -s3 {
                -(a + 1.0) * (a.powi(4) - 5.0 * a * a + 1.0) / (4.0 * a)
            } else {
                -0.25 / a + 0.75 + 1.0 / (a - 1.0)
            })
        }
        ClosedFormModel::BivariateAlpha => {
            let low = (1.0 - 2.0 * 7f64.sqrt()) / 3.0;
            Ok(if a.is_infinite() {
                0.5
            } else if a >= GOLDEN {
                (a * (a + 1.0)).sqrt() - a
            } else if a > 1.0 / 3.0 {
                -a + 2.0 * (a * (a + 1.0)).sqrt() - 1.0
            } else if a >= -1.0 {
                0.0
            } else if a > low {
                -a - 1.0
            } else {
                ((a - 2.0) * a).sqrt() - (a * (a + 1.0)).sqrt() - 1.0
            })
        }
    }
}

/// HS length of the bivariate curve under the fixed-dispersion measure.
pub fn bivariate_hs_total(alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    (2.0 * (3.0 * a2 * a2 - 2.0 * a2 + 3.0).sqrt() / (4.0 * a2 + 4.0 * alpha)).abs()
}

/// Trivariate HS total over the region: constant element times the triangle area 8 sqrt2.
pub fn trivariate_hs_total(alpha: f64) -> f64 {
    (1.0 / (TWO_SQRT2 * alpha * (1.0 + alpha))).abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub param: f64,
    pub metric: MetricId,
    pub report: Option<VolumeReport>,
    pub error: Option<String>,
}

/// Evaluates `volumes` over a parameter grid; failures are recorded per row.
pub fn scan(
    model: impl Fn(f64) -> Model,
    metric: MetricId,
    grid: &[f64],
    opts: &RegionOptions,
) -> Result<Vec<ScanRow>> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("scan grid must be finite"));
    }
    Ok(grid
        .iter()
        .map(|&param| match volumes(model(param), metric, opts) {
            Ok(r) => ScanRow {
                param,
                metric,
                report: Some(r),
                error: None,
            },
            Err(e) => ScanRow {
                param,
                metric,
                report: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn opts() -> RegionOptions {
        RegionOptions {
            rel_tol: 1e-8,
            ..Default::default()
        }
    }

    #[test]
    fn tlb_coordinate_volume() {
        // vertices are where three of the four weights vanish
        let v = [
            [1.0, 1.0, 1.0],
            [-3.0, 1.0, 1.0],
            [1.0, -3.0, 1.0],
            [1.0, 1.0, -3.0],
        ];
        let e: Vec<[f64; 3]> = (1..4)
            .map(|i| [0, 1, 2].map(|k| v[i][k] - v[0][k]))
            .collect();
        let det = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
            - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
            + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
        let oracle = det.abs() / 6.0;
        let r = integrate(
            &Region::new(Model::Tlb, Predicate::Feasible),
            &|_| 1.0,
            &opts(),
        )
        .unwrap();
        assert!((r.value - oracle).abs() < 1e-8, "{} vs {oracle}", r.value);
        assert!((oracle - 32.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ar_triangle_coordinate_area() {
        // half of the (b, sigma2) triangle with vertices (0,0), (2 sqrt2, 8), (-2 sqrt2, 8)
        let r = integrate(
            &Region::new(Model::ArBell { q: 1.0 }, Predicate::Feasible),
            &|_| 1.0,
            &opts(),
        )
        .unwrap();
        assert!((r.value - 8.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn ar_hs_volumes() {
        let t = total_volume(Model::ArBell { q: 1.0 }, MetricId::Hs, &opts()).unwrap();
        assert!((t.value - 1.0 / (4.0 * SQRT_2)).abs() < 1e-8, "{}", t.value);
        let s = separable_volume(Model::ArBell { q: 1.0 }, MetricId::Hs, &opts()).unwrap();
        assert!((s.value - 1.0 / (8.0 * SQRT_2)).abs() < 1e-8, "{}", s.value);
    }

    #[test]
    fn ar_bures_q1() {
        let r = volumes(
            Model::ArBell { q: 1.0 },
            MetricId::Bures,
            &RegionOptions::default(),
        )
        .unwrap();
        assert!(
            (r.total.value - PI / 4.0).abs() < 1e-6 * PI / 4.0,
            "{:?}",
            r.total
        );
        assert!(
            (r.separable.value - PI * (SQRT_2 - 1.0) / 4.0).abs() < 1e-6,
            "{:?}",
            r.separable
        );
    }

    #[test]
    fn separable_and_entangled_partition_the_feasible_set() {
        let m = Model::Trivariate { alpha: 2.0 };
        let t = total_volume(m, MetricId::Bures, &opts()).unwrap().value;
        let s = separable_volume(m, MetricId::Bures, &opts()).unwrap().value;
        let e = entangled_volume(m, MetricId::Bures, &opts()).unwrap().value;
        assert!(s <= t);
        assert!((s + e - t).abs() < 1e-7 * t);
    }

    #[test]
    fn closed_form_spot_values() {
        use ClosedFormModel::*;
        assert_eq!(closed_form_sepprob(TrivariateAlpha, 2.0).unwrap(), 0.625);
        assert_eq!(closed_form_sepprob(TrivariateAlpha, -1.0).unwrap(), 0.0);
        assert_eq!(
            closed_form_sepprob(TrivariateAlpha, f64::INFINITY).unwrap(),
            0.75
        );
        assert!((closed_form_sepprob(BivariateAlpha, 1.0).unwrap() - (SQRT_2 - 1.0)).abs() < 1e-15);
        assert!((closed_form_sepprob(BivariateAlpha, 1e6).unwrap() - 0.5).abs() < 1e-6);
        assert!(matches!(
            closed_form_sepprob(BivariateAlpha, f64::NAN),
            Err(Error::UndefinedBranch(_))
        ));
        // the isolated-point values coincide with the neighbouring branches
        for a in [-SQRT_2, GOLDEN] {
            let at = closed_form_sepprob(TrivariateAlpha, a).unwrap();
            let side = closed_form_sepprob(TrivariateAlpha, a + 1e-9).unwrap();
            assert!((at - side).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_forms_are_continuous_at_branch_points() {
        let pts = [
            -3f64.sqrt(),
            -1.0,
            0.0,
            1.0,
            1.0 / 3.0,
            GOLDEN,
            (1.0 - 2.0 * 7f64.sqrt()) / 3.0,
        ];
        for m in [
            ClosedFormModel::TrivariateAlpha,
            ClosedFormModel::BivariateAlpha,
        ] {
            for &a in &pts {
                let l = closed_form_sepprob(m, a - 1e-9).unwrap();
                let r = closed_form_sepprob(m, a + 1e-9).unwrap();
                assert!((l - r).abs() < 1e-6, "{m:?} at {a}: {l} vs {r}");
            }
        }
    }

    #[test]
    fn undefined_alpha_is_a_domain_error() {
        let r = total_volume(Model::Trivariate { alpha: -1.0 }, MetricId::Hs, &opts());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn curve_stays_positive_near_its_pure_end() {
        let m = Model::jaynes_one_parameter();
        for t in [0.99, 0.999, 0.9999, 1.0 - 1e-7] {
            assert!(m.sample(&[t]).bell.is_psd(), "{t}");
        }
        // p4 = (b - 2 sqrt2)^2/32 at alpha = 1
        let b: f64 = 2.0;
        let s = bivariate_point_slack(
            1.0,
            b / TWO_SQRT2,
            1.0 - b / TWO_SQRT2,
            CurveMeasure::Induced,
        );
        assert!((s.weights[3] - (b - TWO_SQRT2).powi(2) / 32.0).abs() < 1e-15);
        let r = total_volume(m, MetricId::Bures, &opts()).unwrap();
        assert!(r.abs_error < 1e-7, "{r:?}");
    }

    #[test]
    fn monte_carlo_is_deterministic_and_close() {
        let o = RegionOptions::monte_carlo(7, 200_000);
        let a = total_volume(Model::ArBell { q: 1.0 }, MetricId::Bures, &o).unwrap();
        let b = total_volume(Model::ArBell { q: 1.0 }, MetricId::Bures, &o).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!((a.value - PI / 4.0).abs() < a.abs_error.max(1e-3));
    }

    #[test]
    fn scan_records_failures() {
        let rows = scan(
            |a| Model::Trivariate { alpha: a },
            MetricId::Hs,
            &[-1.0, 2.0],
            &opts(),
        )
        .unwrap();
        assert!(rows[0].error.is_some());
        let p = rows[1].report.unwrap().probability.value;
        assert!((p - 0.625).abs() < 1e-7);
    }
}
