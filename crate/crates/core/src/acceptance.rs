//! Acceptance suite: criteria 1-15 as library functions, shared by the test target
//! and `selftest`.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::husimi::{
    bures_truncated_marginal_q, extended_q1_normalization, fisher_normalization,
    fisher_tensor_numeric, marginal_q_peak, tangential, HusimiChart,
};
use crate::metric::{
    bures_tensor, f_eval, interior_samples, monotone_tensor, nullity_check, tensor, FFunction,
    MetricId,
};
use crate::priors::{
    biasedness_curve, q_truncated_prior, rank, Engine, MeasurementRecord, PriorId, Verdict,
};
use crate::quadrature::Method;
use crate::region::{
    bivariate_hs_total, closed_form_sepprob, integrate, sep_probability, separable_volume,
    total_volume, volumes, ClosedFormModel, Model, Predicate, Region, RegionOptions, GOLDEN,
};
use crate::state::{ar_weights, reparameterize_ar, CurveMeasure, FamilyChart, ParamPoint};

pub const CRITERIA: std::ops::RangeInclusive<u8> = 1..=15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcceptanceConfig {
    pub seed: u64,
    /// Relative tolerance for region cubature.
    pub rel_tol: f64,
    pub mc_samples: u64,
}

impl Default for AcceptanceConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            rel_tol: 1e-6,
            mc_samples: 200_000,
        }
    }
}

impl AcceptanceConfig {
    fn region(&self) -> RegionOptions {
        RegionOptions {
            rel_tol: self.rel_tol,
            seed: self.seed,
            ..RegionOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub expected: f64,
    pub tol: f64,
    pub pass: bool,
    /// Set when a failure of this check is a documented discrepancy.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    /// Wall time; not serialized, so reports of identical runs compare equal byte for byte.
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Failing checks that carry no note.
    pub fn regressions(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| !c.pass && c.note.is_none())
            .collect()
    }

    pub fn line(&self) -> String {
        let status = if self.pass() { "PASS" } else { "FAIL" };
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.label.as_str())
            .collect();
        let mut s = format!(
            "criterion {:>2} {status}  {} ({} checks)",
            self.id,
            self.title,
            self.checks.len()
        );
        if !failed.is_empty() {
            s.push_str(&format!(" failed: {}", failed.join("; ")));
        }
        s
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn abs(&mut self, label: impl Into<String>, value: f64, expected: f64, tol: f64) -> &mut Self {
        let pass = (value - expected).abs() <= tol;
        self.0.push(Check {
            label: label.into(),
            value,
            expected,
            tol,
            pass,
            note: None,
        });
        self
    }

    fn rel(&mut self, label: impl Into<String>, value: f64, expected: f64, rel: f64) -> &mut Self {
        self.abs(label, value, expected, rel * expected.abs())
    }

    fn flag(&mut self, label: impl Into<String>, ok: bool) -> &mut Self {
        self.abs(label, if ok { 1.0 } else { 0.0 }, 1.0, 0.0)
    }

    fn error(&mut self, label: impl Into<String>, e: &Error) -> &mut Self {
        self.0.push(Check {
            label: format!("{}: {e}", label.into()),
            value: f64::NAN,
            expected: f64::NAN,
            tol: 0.0,
            pass: false,
            note: None,
        });
        self
    }

    fn known(&mut self, note: &str) -> &mut Self {
        if let Some(c) = self.0.last_mut() {
            c.note = Some(note.into());
        }
        self
    }

    /// Runs a fallible measurement; errors become failed checks.
    fn with<T>(&mut self, label: &str, r: Result<T>, f: impl FnOnce(&mut Self, T)) -> &mut Self {
        match r {
            Ok(v) => f(self, v),
            Err(e) => {
                self.error(label, &e);
            }
        }
        self
    }
}

pub fn title(id: u8) -> &'static str {
    match id {
        1 => "AR Bures total volume",
        2 => "AR Bures separable volume",
        3 => "AR separability probabilities",
        4 => "trivariate HS separability probability",
        5 => "trivariate Bures volumes",
        6 => "bivariate HS separability probability",
        7 => "one-parameter Jaynes state",
        8 => "TLB volumes",
        9 => "nullity suite",
        10 => "prior KL statistics and Clarke ordering",
        11 => "normalization constants",
        12 => "closed-form marginals",
        13 => "information gains",
        14 => "biasedness ordering near pure states",
        15 => "property suites",
        _ => "unknown",
    }
}

/// Runs one criterion.
pub fn run(id: u8, cfg: &AcceptanceConfig) -> Result<CriterionReport> {
    let t = Instant::now();
    let mut c = Checks::default();
    match id {
        1 => criterion_1(&mut c, cfg),
        2 => criterion_2(&mut c, cfg),
        3 => criterion_3(&mut c, cfg),
        4 => criterion_4(&mut c, cfg),
        5 => criterion_5(&mut c, cfg),
        6 => criterion_6(&mut c, cfg),
        7 => criterion_7(&mut c, cfg),
        8 => criterion_8(&mut c, cfg),
        9 => criterion_9(&mut c, cfg),
        10 => criterion_10(&mut c),
        11 => criterion_11(&mut c),
        12 => criterion_12(&mut c),
        13 => criterion_13(&mut c),
        14 => criterion_14(&mut c),
        15 => criterion_15(&mut c, cfg),
        _ => return Err(Error::domain(format!("no acceptance criterion {id}"))),
    }
    Ok(CriterionReport {
        id,
        title: title(id),
        checks: c.0,
        seconds: t.elapsed().as_secs_f64(),
    })
}

pub fn run_all(cfg: &AcceptanceConfig) -> Vec<CriterionReport> {
    CRITERIA
        .map(|id| run(id, cfg).expect("id in range"))
        .collect()
}

fn criterion_1(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    for (q, rel) in [(0.5, 1e-3), (1.0, 1e-6), (2.0, 1e-3)] {
        let label = format!("total q={q}");
        c.with(
            &label,
            total_volume(Model::ArBell { q }, MetricId::Bures, &opts),
            |c, r| {
                c.rel(&label, r.value, PI / 4.0, rel);
            },
        );
    }
}

fn criterion_2(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    let exact = PI * (SQRT_2 - 1.0) / 4.0;
    for q in [0.5, 1.0] {
        let label = format!("separable q={q}");
        c.with(
            &label,
            separable_volume(Model::ArBell { q }, MetricId::Bures, &opts),
            |c, r| {
                c.abs(&label, r.value, exact, 2e-3);
            },
        );
        c.abs(format!("printed value q={q}"), exact, 0.325323, 1e-6);
    }
}

fn criterion_3(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    let model = Model::ArBell { q: 1.0 };
    let bures = volumes(model, MetricId::Bures, &opts);
    c.with("bures", bures.clone(), |c, r| {
        c.abs("bures probability", r.probability.value, SQRT_2 - 1.0, 1e-5);
    });
    c.with("hs", volumes(model, MetricId::Hs, &opts), |c, r| {
        c.abs("hs total", r.total.value, 1.0 / (4.0 * SQRT_2), 1e-6)
            .abs(
                "hs separable",
                r.separable.value,
                1.0 / (8.0 * SQRT_2),
                1e-6,
            )
            .abs("hs probability", r.probability.value, 0.5, 1e-5);
    });
    if let Ok(b) = bures {
        c.with(
            "wy",
            volumes(model, MetricId::WignerYanase, &opts),
            |c, r| {
                c.abs(
                    "wigner-yanase probability",
                    r.probability.value,
                    b.probability.value,
                    1e-3,
                );
            },
        );
    }
}

fn trivariate_hs(alpha: f64, opts: &RegionOptions) -> Result<crate::quadrature::QuadratureResult> {
    sep_probability(Model::Trivariate { alpha }, MetricId::Hs, opts)
}

fn criterion_4(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    let cf = |a: f64| closed_form_sepprob(ClosedFormModel::TrivariateAlpha, a);
    let branch = [-(3f64.sqrt()), -SQRT_2, -1.0, 0.0, GOLDEN, 1.0];
    let mut worst = 0f64;
    let mut bad = Vec::new();
    for k in 0..=60 {
        let a = -3.0 + 0.1 * k as f64;
        if branch.iter().any(|b| (a - b).abs() < 0.02) {
            continue;
        }
        match (trivariate_hs(a, &opts), cf(a)) {
            (Ok(r), Ok(x)) => {
                let d = (r.value - x).abs();
                worst = worst.max(d);
                if d > 3.0 * r.abs_error + 1e-9 {
                    bad.push(format!("{a:.1}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                c.error(format!("grid alpha={a:.1}"), &e);
            }
        }
    }
    c.flag(
        format!(
            "grid within 3x error (max dev {worst:.1e}; off at [{}])",
            bad.join(",")
        ),
        bad.is_empty(),
    );
    let exact: [(f64, f64); 4] = [
        (2.0, 5.0 / 8.0),
        (1.0, 0.5),
        (1.5, 0.75 - 1.0 / 6.0),
        (4.0, 0.75 - 1.0 / 16.0),
    ];
    for (a, x) in exact {
        let label = format!("alpha={a}");
        c.with(&label, trivariate_hs(a, &opts), |c, r| {
            c.abs(&label, r.value, x, 1e-6);
        });
        c.abs(
            format!("closed form alpha={a}"),
            cf(a).unwrap_or(f64::NAN),
            x,
            1e-12,
        );
    }
    c.with("alpha=1/2", trivariate_hs(0.5, &opts), |c, r| {
        c.abs("alpha=1/2 vs 37/64", r.value, 37.0 / 64.0, 1e-3)
            .known("numeric and closed form give 9/32 at alpha = 1/2");
        c.abs(
            "alpha=1/2 vs closed form",
            r.value,
            cf(0.5).unwrap_or(f64::NAN),
            1e-6,
        );
    });
    for a in [-1.0, 0.0] {
        c.abs(
            format!("closed form alpha={a}"),
            cf(a).unwrap_or(f64::NAN),
            0.0,
            0.0,
        );
        for side in [-1e-3, 1e-3] {
            let label = format!("numeric alpha={a}{side:+}");
            c.with(&label, trivariate_hs(a + side, &opts), |c, r| {
                c.abs(&label, r.value, 0.0, 2e-3);
            });
        }
    }
    c.with("golden", trivariate_hs(GOLDEN, &opts), |c, r| {
        c.abs(
            "alpha=golden",
            r.value,
            (5.0 - 5f64.sqrt()) / 8.0 * GOLDEN * (GOLDEN + 1.0),
            1e-6,
        );
    });
    let jump =
        (cf(GOLDEN - 1e-9).unwrap_or(f64::NAN) - cf(GOLDEN + 1e-9).unwrap_or(f64::NAN)).abs();
    c.abs("closed form continuous at golden", jump, 0.0, 1e-8);
}

fn criterion_5(c: &mut Checks, cfg: &AcceptanceConfig) {
    c.with(
        "bures",
        volumes(
            Model::Trivariate { alpha: 2.0 },
            MetricId::Bures,
            &cfg.region(),
        ),
        |c, r| {
            c.abs("total", r.total.value, 0.35368, 2e-3)
                .abs("separable", r.separable.value, 0.2000322, 2e-3)
                .abs("probability", r.probability.value, 0.566392, 2e-3);
        },
    );
}

fn bivariate(alpha: f64) -> Model {
    Model::Bivariate {
        alpha,
        measure: CurveMeasure::FixedDispersion,
    }
}

fn criterion_6(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    let cf = |a: f64| closed_form_sepprob(ClosedFormModel::BivariateAlpha, a).unwrap_or(f64::NAN);
    let branch = [
        (1.0 - 2.0 * 7f64.sqrt()) / 3.0,
        -1.0,
        0.0,
        1.0 / 3.0,
        GOLDEN,
    ];
    let mut worst = 0f64;
    let mut zero_worst = 0f64;
    for k in 0..=60 {
        let a = -3.0 + 0.1 * k as f64;
        if branch.iter().any(|b| (a - b).abs() < 0.02) {
            continue;
        }
        match sep_probability(bivariate(a), MetricId::Hs, &opts) {
            Ok(r) => {
                worst = worst.max((r.value - cf(a)).abs());
                if (-1.0..=1.0 / 3.0).contains(&a) {
                    zero_worst = zero_worst.max(r.value.abs());
                }
            }
            Err(e) => {
                c.error(format!("grid alpha={a:.1}"), &e);
            }
        }
    }
    c.abs("grid max deviation from closed form", worst, 0.0, 1e-3);
    c.abs("max |p| on [-1, 1/3]", zero_worst, 0.0, 1e-3);
    c.with(
        "alpha=1",
        sep_probability(bivariate(1.0), MetricId::Hs, &opts),
        |c, r| {
            c.abs("alpha=1", r.value, SQRT_2 - 1.0, 1e-3);
        },
    );
    // The approach to 1/2 is O(1/|alpha|): at alpha = 50 the closed form itself sits 2.5e-3 below.
    let mut far = [0.0; 2];
    for (i, a) in [10.0, 50.0].into_iter().enumerate() {
        let label = format!("alpha={a}");
        c.with(
            &label,
            sep_probability(bivariate(a), MetricId::Hs, &opts),
            |c, r| {
                far[i] = r.value;
                c.abs(&label, r.value, cf(a), 1e-3);
            },
        );
    }
    c.flag(
        "alpha=50 closer to 1/2 than alpha=10",
        (far[1] - 0.5).abs() < (far[0] - 0.5).abs(),
    );
    c.with(
        "alpha=-50",
        sep_probability(bivariate(-50.0), MetricId::Hs, &opts),
        |c, r| {
            c.abs("alpha=-50", r.value, cf(-50.0), 1e-3);
        },
    );
    for a in [1e6, -1e6] {
        c.abs(format!("closed form alpha={a:e}"), cf(a), 0.5, 1e-3);
    }
    for a in [0.5, 1.0, 2.0] {
        let label = format!("hs total alpha={a}");
        c.with(
            &label,
            total_volume(bivariate(a), MetricId::Hs, &opts),
            |c, r| {
                c.abs(&label, r.value, bivariate_hs_total(a), 1e-3);
            },
        );
    }
}

fn criterion_7(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    let m = Model::jaynes_one_parameter();
    let exact = 2.0 * (SQRT_2 - 1.0).asin() / PI;
    c.abs("printed bures value", exact, 0.271887, 1e-6);
    for metric in [MetricId::Bures, MetricId::WignerYanase] {
        let label = metric.name();
        c.with(label, sep_probability(m, metric, &opts), |c, r| {
            c.abs(label, r.value, exact, 1e-3);
        });
    }
    c.with("hs", sep_probability(m, MetricId::Hs, &opts), |c, r| {
        c.abs("hs", r.value, 0.343602, 1e-3);
    });
}

fn criterion_8(c: &mut Checks, cfg: &AcceptanceConfig) {
    let opts = cfg.region();
    c.with(
        "bures",
        volumes(Model::Tlb, MetricId::Bures, &opts),
        |c, r| {
            c.abs("bures total", r.total.value, PI * PI / 8.0, 1e-3)
                .abs(
                    "bures separable",
                    r.separable.value,
                    PI * (4.0 - PI) / 8.0,
                    1e-3,
                )
                .abs(
                    "bures probability",
                    r.probability.value,
                    (4.0 - PI) / PI,
                    1e-3,
                );
        },
    );
    c.with("hs", volumes(Model::Tlb, MetricId::Hs, &opts), |c, r| {
        c.abs("hs total", r.total.value, 1.0 / (6.0 * SQRT_2), 1e-3)
            .abs(
                "hs separable",
                r.separable.value,
                1.0 / (12.0 * SQRT_2),
                1e-3,
            )
            .abs("hs probability", r.probability.value, 0.5, 1e-3);
    });
}

fn criterion_9(c: &mut Checks, cfg: &AcceptanceConfig) {
    let charts = [
        ("escort qubit", FamilyChart::escort_qubit()),
        ("qutrit escort", FamilyChart::qutrit_v_escort()),
        ("ar bell extended", FamilyChart::ar_bell_extended()),
        ("tlb escort", FamilyChart::tlb_escort()),
    ];
    for (label, ch) in charts {
        c.with(
            label,
            nullity_check(&ch, MetricId::Bures, 40, cfg.seed),
            |c, null| {
                c.flag(format!("{label} null at 40 points"), null);
            },
        );
    }
    c.with(
        "control",
        nullity_check(&FamilyChart::ar_bell(2.0), MetricId::Bures, 30, cfg.seed),
        |c, null| {
            c.flag("ar bell q=2 not null", !null);
        },
    );
}

fn criterion_10(c: &mut Checks) {
    use PriorId::*;
    let engine = Engine::default();
    let rec = MeasurementRecord::xyz_pairs();
    let pairs: [(PriorId, PriorId, &[f64]); 6] = [
        (
            Bures,
            BuresQ1Trunc,
            &[0.101846, 0.0661775, 0.169782, 0.197657, 0.093849, 0.114669],
        ),
        (Fisher, FisherQ1, &[0.229666, 0.170145, 0.70766, 0.0641738]),
        (Bures, FisherQ1, &[0.148269, 0.0989669, 0.283218, 0.0842879]),
        (
            BuresQ1Trunc,
            FisherQ1,
            &[0.105463, 0.0914175, 0.245602, 0.0408236],
        ),
        (
            BuresQ1Trunc,
            Fisher,
            &[0.0191948, 0.0234599, 0.0143147, 0.1047772],
        ),
        (Bures, Fisher, &[]),
    ];
    let mut verdicts: Vec<Verdict> = Vec::new();
    for (a, b, printed) in pairs {
        let label = format!("{a}/{b}");
        let v = match engine.clarke_compare(a, b, &rec) {
            Ok(v) => v,
            Err(e) => {
                c.error(&label, &e);
                continue;
            }
        };
        verdicts.push(v);
        let full = [v.kl_ab, v.kl_ba];
        let half = [v.kl_post_ab, v.kl_post_ba];
        let mut got: Vec<(&str, f64)> = vec![("prior kl", full[0]), ("prior kl rev", full[1])];
        // the first two pairs also print the s = 1 posterior statistics
        if a == Bures && b == BuresQ1Trunc || a == Fisher {
            let s1 = (|| -> Result<[f64; 2]> {
                let pa = engine.prior(a)?;
                let pb = engine.prior(b)?;
                Ok([
                    engine.kl(&engine.posterior(pa.prior, &rec, 1.0)?, &pb)?,
                    engine.kl(&engine.posterior(pb.prior, &rec, 1.0)?, &pa)?,
                ])
            })();
            match s1 {
                Ok(s) => got.extend([("s=1 post kl", s[0]), ("s=1 post kl rev", s[1])]),
                Err(e) => {
                    c.error(&label, &e);
                }
            }
        }
        if a != Fisher {
            got.extend([("s=1/2 post kl", half[0]), ("s=1/2 post kl rev", half[1])]);
        }
        for ((name, v), &p) in got.iter().zip(printed.iter()) {
            c.abs(format!("{label} {name}"), *v, p, 1e-4);
        }
    }
    let expected = [FisherQ1, Bures, BuresQ1Trunc, Fisher];
    let order = rank(&verdicts, &expected);
    c.flag(
        format!(
            "ordering {:?}",
            order
                .as_ref()
                .map(|o| o.iter().map(|p| p.name()).collect::<Vec<_>>())
        ),
        order.as_deref() == Some(&expected[..]),
    );
}

fn criterion_11(c: &mut Checks) {
    c.with("fisher", fisher_normalization(), |c, v| {
        c.abs("fisher normalization", v, 1.39350989, 1e-4);
    });
    c.with("extended", extended_q1_normalization(), |c, v| {
        c.abs("extended q=1 normalization", v, 0.24559293, 1e-4);
    });
}

fn criterion_12(c: &mut Checks) {
    for q in [0.5, 1.0, 5.0] {
        let label = format!("ball integral q={q}");
        c.with(&label, bures_truncated_marginal_q(q), |c, m| {
            c.abs(&label, m.value, PI * (1.0 + 4f64.ln()) / (24.0 * q), 1e-6);
        });
    }
    c.with("peak", marginal_q_peak(1.0, 10.0, 1e-4), |c, (q, h)| {
        c.abs("peak location", q, 3.59782, 0.05)
            .abs("peak height", h, 0.448488, 0.01);
    });
}

fn criterion_13(c: &mut Checks) {
    let engine = Engine::default();
    let gains = [
        (MeasurementRecord::z(1, 1), 7.0 / 6.0 - 3f64.ln(), 1e-6),
        (MeasurementRecord::z(2, 0), 59.0 / 30.0 - 5f64.ln(), 1e-6),
        (MeasurementRecord::z(1, 0), 0.140186, 1e-4),
    ];
    for (rec, x, tol) in gains {
        let label = format!("gain {}", record_label(&rec));
        c.with(
            &label,
            engine.information_gain(PriorId::Bures, &rec),
            |c, v| {
                c.abs(&label, v, x, tol);
            },
        );
    }
    c.with(
        "extended prior",
        q_truncated_prior(crate::husimi::Q_MIN, crate::husimi::Q_MAX),
        |c, p| {
            let ext = [
                (MeasurementRecord::z(1, 1), 0.0597923),
                (MeasurementRecord::z(1, 0), 0.134651),
                (MeasurementRecord::z(2, 0), 0.349601),
            ];
            for (rec, x) in ext {
                let label = format!("extended gain {}", record_label(&rec));
                c.with(&label, p.information_gain(&rec.extended()), |c, v| {
                    c.abs(&label, v, x, 1e-3);
                });
            }
        },
    );
}

fn record_label(r: &MeasurementRecord) -> String {
    let (up, down) = r.counts[2];
    format!("z {up}up {down}down")
}

fn criterion_14(c: &mut Checks) {
    use PriorId::*;
    let order = [FisherQ1, Bures, BuresQ1Trunc, Fisher];
    let curves: Result<Vec<_>> = order
        .iter()
        .map(|&id| biasedness_curve(id, 0.995, 0.9999, 50))
        .collect();
    c.with("curves", curves, |c, curves| {
        for k in 0..3 {
            let held = (0..50)
                .filter(|&i| curves[k][i].density > curves[k + 1][i].density)
                .count();
            let label = format!("{} > {} at 50 points", order[k], order[k + 1]);
            c.abs(label, held as f64, 50.0, 0.0);
            if k == 0 {
                c.known("the Bures density overtakes the q = 1 Fisher density above r ~ 0.995");
            }
        }
    });
}

fn criterion_15(c: &mut Checks, cfg: &AcceptanceConfig) {
    hubner_vs_monotone(c, cfg.seed);
    commuting_reduction(c, cfg.seed);
    tangential_identities(c);
    reparameterization(c, cfg.seed);
    mc_determinism(c, cfg);
}

fn hubner_vs_monotone(c: &mut Checks, seed: u64) {
    let charts = [
        FamilyChart::bloch_qubit(),
        FamilyChart::escort_qubit(),
        FamilyChart::qutrit_v(),
        FamilyChart::ar_bell(2.0),
        FamilyChart::jaynes_alpha(2.0),
        FamilyChart::tlb(),
    ];
    let mut worst = 0f64;
    for ch in charts {
        let pts = match interior_samples(&ch, 20, seed) {
            Ok(p) => p,
            Err(e) => {
                c.error(ch.id.name(), &e);
                continue;
            }
        };
        for p in pts {
            match (
                bures_tensor(&ch, &p),
                monotone_tensor(&ch, &p, FFunction::Bures),
            ) {
                (Ok(a), Ok(b)) => worst = worst.max(a.max_rel_deviation(&b)),
                (Err(e), _) | (_, Err(e)) => {
                    c.error(ch.id.name(), &e);
                }
            }
        }
    }
    c.abs("hubner vs monotone(bures) max rel dev", worst, 0.0, 1e-8);
}

fn commuting_reduction(c: &mut Checks, seed: u64) {
    // classical Fisher information of the eigenvalue distribution, by central differences
    let mut worst = 0f64;
    let q = 2.0;
    let ch = FamilyChart::ar_bell(q);
    let pts = interior_samples(&ch, 20, seed).unwrap_or_default();
    for p in &pts {
        let (b, s2) = (p[0], p[1]);
        let h = 1e-5;
        let d = |db: f64, ds: f64| {
            let plus = ar_weights(q, b + db, s2 + ds);
            let minus = ar_weights(q, b - db, s2 - ds);
            [0, 1, 2, 3].map(|k| (plus[k] - minus[k]) / (2.0 * h))
        };
        let grads = [d(h, 0.0), d(0.0, h)];
        let w = ar_weights(q, b, s2);
        for metric in [MetricId::Bures, MetricId::WignerYanase] {
            let Ok(g) = tensor(&ch, p, metric) else {
                c.flag(format!("{} tensor at {p:?}", metric.name()), false);
                continue;
            };
            for i in 0..2 {
                for j in 0..2 {
                    let fisher: f64 = (0..4).map(|k| grads[i][k] * grads[j][k] / w[k]).sum();
                    let scale = g.g[(i, i)].abs().max(g.g[(j, j)].abs());
                    worst = worst.max((g.g[(i, j)] - 0.25 * fisher).abs() / scale);
                }
            }
        }
    }
    c.flag("commuting samples drawn", !pts.is_empty());
    c.abs("commuting family vs classical Fisher / 4", worst, 0.0, 1e-6);
    // radial direction of the Bloch ball: eigenvalues (1 +- r)/2
    let r: f64 = 0.6;
    let g = bures_tensor(
        &FamilyChart::bloch_qubit(),
        &ParamPoint::new(vec![r, 1.0, 0.5]),
    );
    c.with("bloch radial", g, |c, g| {
        c.abs(
            "bloch radial vs classical Fisher / 4",
            g.g[(0, 0)],
            0.25 / (1.0 - r * r),
            1e-9,
        );
    });
}

fn tangential_identities(c: &mut Checks) {
    let mut worst_b = 0f64;
    let mut worst_f = 0f64;
    let mut worst_fq = 0f64;
    for k in 1..=9 {
        let r = k as f64 / 10.0;
        let w = (1.0 - r) / (1.0 + r);
        if let (Ok(g), Ok(f)) = (
            bures_tensor(
                &FamilyChart::bloch_qubit(),
                &ParamPoint::new(vec![r, 0.9, 0.3]),
            ),
            f_eval(FFunction::Bures, w),
        ) {
            let via_f = 0.25 * r * r / ((1.0 + r) * f);
            worst_b = worst_b.max((g.g[(1, 1)] / via_f - 1.0).abs());
        } else {
            worst_b = f64::INFINITY;
        }
        for q in [0.6, 1.0, 2.0, 5.0] {
            let g =
                fisher_tensor_numeric(HusimiChart::Fixed(q), &ParamPoint::new(vec![r, 0.9, 0.0]));
            let f = f_eval(FFunction::FisherHusimiQ(q), w);
            let dev = match (g, f) {
                (Ok(g), Ok(f)) => (g.g[(1, 1)] / (r * r) * (1.0 + r) * f - 1.0).abs(),
                _ => f64::INFINITY,
            };
            if q == 1.0 {
                worst_f = worst_f.max(dev);
            } else {
                worst_fq = worst_fq.max(dev);
            }
        }
    }
    c.abs("tangential identity f_B", worst_b, 0.0, 1e-10);
    c.abs("tangential identity f_F", worst_f, 0.0, 1e-5);
    c.abs("tangential identity f_F_q", worst_fq, 0.0, 1e-5);
    let t = tangential(0.5, 1.0);
    let f = f_eval(FFunction::FisherHusimi, 1.0 / 3.0).unwrap_or(f64::NAN);
    c.abs("tangential helper at r=1/2", t * 1.5 * f, 1.0, 1e-12);
}

fn reparameterization(c: &mut Checks, seed: u64) {
    let half = FamilyChart::ar_bell(0.5);
    let one = FamilyChart::ar_bell(1.0);
    let mut worst = 0f64;
    let pts = interior_samples(&half, 30, seed).unwrap_or_default();
    for p in &pts {
        let res = reparameterize_ar(p[0], p[1])
            .and_then(|(b, s2)| Ok((half.matrix(p)?, one.matrix(&ParamPoint::new(vec![b, s2]))?)));
        match res {
            Ok((a, b)) => worst = (a - b).iter().map(|z| z.norm()).fold(worst, f64::max),
            Err(_) => worst = f64::INFINITY,
        }
    }
    c.flag("reparameterization samples drawn", pts.len() == 30);
    c.abs("reparameterize_ar state equality", worst, 0.0, 1e-12);
}

fn mc_determinism(c: &mut Checks, cfg: &AcceptanceConfig) {
    let region = Region::new(Model::ArBell { q: 1.0 }, Predicate::Separable);
    let run = |threads: usize, seed: u64| -> Result<f64> {
        let opts = RegionOptions::monte_carlo(seed, cfg.mc_samples);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::domain(e.to_string()))?;
        pool.install(|| integrate(&region, &|s| s.volume_density(MetricId::Bures), &opts))
            .map(|r| {
                debug_assert_eq!(r.method, Method::MonteCarlo);
                r.value
            })
    };
    match (
        run(1, cfg.seed),
        run(4, cfg.seed),
        run(4, cfg.seed),
        run(4, cfg.seed + 1),
    ) {
        (Ok(a), Ok(b), Ok(b2), Ok(other)) => {
            c.flag(
                "same seed, same bits across thread counts",
                a.to_bits() == b.to_bits(),
            );
            c.flag("same seed, same bits on rerun", b.to_bits() == b2.to_bits());
            c.flag("different seed, different estimate", a != other);
            c.abs(
                "estimate near separable volume",
                a,
                PI * (SQRT_2 - 1.0) / 4.0,
                0.02,
            );
        }
        (Err(e), ..) | (_, Err(e), ..) | (.., Err(e), _) | (.., Err(e)) => {
            c.error("monte carlo", &e);
        }
    }
}
