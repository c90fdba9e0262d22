use qigeom::acceptance::{self, AcceptanceConfig, CRITERIA};
use qigeom::husimi::{
    escort_husimi, extended_q1_normalization, fisher_normalization, fisher_tensor_numeric,
    marginal_q, marginal_q_peak, marginal_r, HusimiChart,
};
use qigeom::metric::{nullity_check, tensor, MetricId};
use qigeom::priors::{
    biasedness_curve, q_truncated_prior, rank, Engine, MeasurementRecord, PriorId, RadialGrid,
    Verdict,
};
use qigeom::quadrature::QuadratureResult;
use qigeom::region::{
    closed_form_sepprob, volumes, ClosedFormModel, Model, Predicate, Region, RegionOptions, GOLDEN,
};
use qigeom::report::{with_error, Cell, Report, RunConfig};
use qigeom::state::{CurveMeasure, FamilyChart, ParamPoint};
use qigeom::{Error, Result};

use crate::grid;

/// Output of a command plus a deferred failure (reported after the output is written).
pub struct Outcome {
    pub report: Report,
    pub lines: Vec<String>,
    pub deferred: Option<Error>,
    /// Non-error failure (e.g. a failed self-test criterion).
    pub failed: bool,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Self {
            report,
            lines: Vec::new(),
            deferred: None,
            failed: false,
        }
    }
}

pub fn chart(family: &str, q: Option<f64>, alpha: Option<f64>) -> Result<FamilyChart> {
    let alpha_or_one = alpha.unwrap_or(1.0);
    Ok(match family {
        "bloch" | "bloch_qubit" => FamilyChart::bloch_qubit(),
        "escort_qubit" => q.map_or_else(FamilyChart::escort_qubit, FamilyChart::escort_qubit_at),
        "qutrit_v" => FamilyChart::qutrit_v(),
        "qutrit_v_escort" => FamilyChart::qutrit_v_escort(),
        "ar_bell" => FamilyChart::ar_bell(q.unwrap_or(1.0)),
        "ar_bell_extended" => FamilyChart::ar_bell_extended(),
        "jaynes_alpha" | "trivariate" => FamilyChart::jaynes_alpha(alpha_or_one),
        "jaynes_alpha_extended" => FamilyChart::jaynes_alpha_extended(),
        "jaynes_bivariate" | "bivariate" => FamilyChart::jaynes_bivariate(alpha_or_one),
        "tlb" => FamilyChart::tlb(),
        "tlb_escort" => FamilyChart::tlb_escort(),
        _ => return Err(Error::domain(format!("unknown family '{family}'"))),
    })
}

pub struct MetricArgs<'a> {
    pub family: &'a str,
    pub metric: &'a str,
    pub point: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub null_check: bool,
    pub samples: usize,
}

pub fn metric(cfg: &RunConfig, a: MetricArgs) -> Result<Outcome> {
    let ch = chart(a.family, a.q, a.alpha)?;
    let id: MetricId = a.metric.parse()?;
    let tag = format!("{}.{}", ch.id.name(), a.metric);
    if a.null_check {
        let null = nullity_check(&ch, id, a.samples, cfg.seed)?;
        let mut r = Report::new(
            format!("{tag}.volume_element_null"),
            cfg,
            &["family", "metric", "coordinates", "samples", "null"],
        );
        r.push(vec![
            ch.id.name().into(),
            a.metric.into(),
            ch.param_names().join(",").into(),
            a.samples.into(),
            null.into(),
        ])?;
        return Ok(r.into());
    }
    let point = a
        .point
        .ok_or_else(|| Error::domain("--point is required unless --null-check is given"))?;
    let p = ParamPoint::new(point.clone());
    let g = tensor(&ch, &p, id)?;
    let names = ch.param_names();
    let mut r = Report::new(
        format!("{tag}.tensor"),
        cfg,
        &["i", "j", "coord_i", "coord_j", "g"],
    );
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            r.push(vec![
                i.into(),
                j.into(),
                names[i].into(),
                names[j].into(),
                g.g[(i, j)].into(),
            ])?;
        }
    }
    let ve = g.volume_element();
    r.summarize(
        "point",
        point
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    r.summarize("volume_element", ve.value);
    r.summarize("null_flag", ve.null_flag);
    Ok(r.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    ArBell,
    Trivariate,
    Bivariate(CurveMeasure),
    JaynesOneParameter,
    Tlb,
}

impl Family {
    pub fn parse(s: &str, measure: CurveMeasure) -> Result<Self> {
        Ok(match s {
            "ar_bell" => Family::ArBell,
            "trivariate" | "jaynes_alpha" => Family::Trivariate,
            "bivariate" | "jaynes_bivariate" => Family::Bivariate(measure),
            "jaynes_one_parameter" => Family::JaynesOneParameter,
            "tlb" => Family::Tlb,
            _ => return Err(Error::domain(format!("no region model for family '{s}'"))),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            Family::ArBell => "ar_bell",
            Family::Trivariate => "trivariate",
            Family::Bivariate(_) => "bivariate",
            Family::JaynesOneParameter => "jaynes_one_parameter",
            Family::Tlb => "tlb",
        }
    }

    fn param_name(&self) -> &'static str {
        match self {
            Family::ArBell => "q",
            Family::Trivariate | Family::Bivariate(_) => "alpha",
            Family::JaynesOneParameter | Family::Tlb => "none",
        }
    }

    fn model(&self, param: f64) -> Model {
        match *self {
            Family::ArBell => Model::ArBell { q: param },
            Family::Trivariate => Model::Trivariate { alpha: param },
            Family::Bivariate(measure) => Model::Bivariate {
                alpha: param,
                measure,
            },
            Family::JaynesOneParameter => Model::jaynes_one_parameter(),
            Family::Tlb => Model::Tlb,
        }
    }

    fn closed_form(&self, metric: MetricId) -> Option<(ClosedFormModel, Vec<f64>)> {
        if metric != MetricId::Hs {
            return None;
        }
        match self {
            Family::Trivariate => Some((
                ClosedFormModel::TrivariateAlpha,
                vec![-(3f64.sqrt()), -(2f64.sqrt()), -1.0, 0.0, GOLDEN, 1.0],
            )),
            Family::Bivariate(CurveMeasure::FixedDispersion) => Some((
                ClosedFormModel::BivariateAlpha,
                vec![
                    (1.0 - 2.0 * 7f64.sqrt()) / 3.0,
                    -1.0,
                    0.0,
                    1.0 / 3.0,
                    GOLDEN,
                ],
            )),
            _ => None,
        }
    }
}

pub struct TableArgs {
    pub family: Family,
    pub metric: MetricId,
    pub params: Vec<f64>,
    pub compare_closed_form: bool,
    pub mc_samples: Option<u64>,
}

fn region_options(cfg: &RunConfig, mc: Option<u64>) -> RegionOptions {
    match mc {
        Some(n) => RegionOptions {
            rel_tol: cfg.tol,
            ..RegionOptions::monte_carlo(cfg.seed, n)
        },
        None => RegionOptions {
            rel_tol: cfg.tol,
            seed: cfg.seed,
            ..RegionOptions::default()
        },
    }
}

/// Volumes and separability probabilities over a parameter list. Per-point failures are
/// recorded in the `error` column; a non-convergence is also returned as deferred.
pub fn sepprob(cfg: &RunConfig, a: TableArgs, quantity: &str) -> Result<Outcome> {
    let opts = region_options(cfg, a.mc_samples);
    let closed = if a.compare_closed_form {
        Some(a.family.closed_form(a.metric).ok_or_else(|| {
            Error::domain(format!(
                "no closed form for {} with metric {}",
                a.family.name(),
                a.metric.name()
            ))
        })?)
    } else {
        None
    };
    let mut columns = vec![
        "param",
        "metric",
        "total",
        "total_err",
        "sep",
        "sep_err",
        "prob",
        "prob_err",
        "n_evals",
    ];
    if closed.is_some() {
        columns.extend(["closed_form", "deviation", "within_3err"]);
    }
    columns.push("error");
    let mut r = Report::new(
        format!("{}.{}.{quantity}", a.family.name(), a.metric.name()),
        cfg,
        &columns,
    );
    r.summarize("param_name", a.family.param_name());
    r.summarize("method", format!("{:?}", opts.method).to_lowercase());
    let params = match a.family {
        Family::JaynesOneParameter | Family::Tlb => vec![f64::NAN],
        _ => a.params.clone(),
    };
    let mut deferred = None;
    let mut failed_points = 0usize;
    let mut worst: Option<f64> = None;
    let mut outside = 0usize;
    let mut compared = 0usize;
    for &p in &params {
        let res = volumes(a.family.model(p), a.metric, &opts);
        let report = res.as_ref().ok();
        let mut row: Vec<Cell> = vec![Cell::from(p), a.metric.name().into()];
        row.extend(with_error(report.map(|v| &v.total)));
        row.extend(with_error(report.map(|v| &v.separable)));
        row.extend(with_error(report.map(|v| &v.probability)));
        row.push(report.map(|v| v.probability.n_evals).into());
        if let Some((model, branch)) = &closed {
            let cf = closed_form_sepprob(*model, p).ok();
            let near_branch = branch.iter().any(|b| (p - b).abs() < 0.02);
            let dev = match (report, cf) {
                (Some(v), Some(x)) => Some((v.probability.value - x).abs()),
                _ => None,
            };
            let ok = match (report, dev) {
                (Some(v), Some(d)) => Some(d <= 3.0 * v.probability.abs_error + 1e-9),
                _ => None,
            };
            if let (Some(d), Some(ok), false) = (dev, ok, near_branch) {
                compared += 1;
                worst = Some(worst.map_or(d, |w: f64| w.max(d)));
                if !ok {
                    outside += 1;
                }
            }
            row.extend([cf.into(), dev.into(), ok.into()]);
        }
        match res {
            Ok(_) => row.push(Cell::Empty),
            Err(e) => {
                failed_points += 1;
                row.push(e.to_string().into());
                if matches!(e, Error::NonConvergence { .. }) && deferred.is_none() {
                    deferred = Some(e);
                }
            }
        }
        r.push(row)?;
    }
    r.summarize("failed_points", failed_points);
    if closed.is_some() {
        r.summarize("compared_points", compared);
        r.summarize("max_deviation", worst);
        r.summarize("points_outside_3err", outside);
        r.note("points within 0.02 of a branch point are tabulated but not summarized");
    }
    Ok(Outcome {
        report: r,
        lines: Vec::new(),
        deferred,
        failed: false,
    })
}

pub struct VolumeArgs {
    pub family: Family,
    pub metric: MetricId,
    pub param: f64,
    pub predicate: Predicate,
    pub mc_samples: Option<u64>,
}

pub fn volume(cfg: &RunConfig, a: VolumeArgs) -> Result<Outcome> {
    let opts = region_options(cfg, a.mc_samples);
    let region = Region::for_metric(a.family.model(a.param), a.predicate, a.metric);
    let metric = a.metric;
    let res: QuadratureResult =
        qigeom::region::integrate(&region, &|s| s.volume_density(metric), &opts)?;
    let pred = match a.predicate {
        Predicate::Feasible => "total",
        Predicate::Separable => "separable",
        Predicate::Entangled => "entangled",
    };
    let mut r = Report::new(
        format!("{}.{}.{pred}_volume", a.family.name(), metric.name()),
        cfg,
        &[
            "param",
            "metric",
            "region",
            "value",
            "abs_error",
            "n_evals",
            "method",
        ],
    );
    let param = match a.family {
        Family::JaynesOneParameter | Family::Tlb => Cell::Empty,
        _ => a.param.into(),
    };
    r.push(vec![
        param,
        metric.name().into(),
        pred.into(),
        res.value.into(),
        res.abs_error.into(),
        res.n_evals.into(),
        format!("{:?}", res.method).to_lowercase().into(),
    ])?;
    Ok(r.into())
}

fn engine(level: u32) -> Result<Engine> {
    if !(3..=10).contains(&level) {
        return Err(Error::domain(format!(
            "radial level {level} outside 3..=10"
        )));
    }
    Ok(Engine::new(RadialGrid::new(level)))
}

fn verdict_row(v: &Verdict) -> Vec<Cell> {
    vec![
        v.pair.0.name().into(),
        v.pair.1.name().into(),
        v.kl_ab.into(),
        v.kl_ba.into(),
        v.kl_post_ab.into(),
        v.kl_post_ba.into(),
        v.more_noninformative()
            .map_or("undecided", |p| p.name())
            .into(),
    ]
}

const VERDICT_COLUMNS: [&str; 7] = [
    "prior_a",
    "prior_b",
    "kl_ab",
    "kl_ba",
    "kl_post_ab",
    "kl_post_ba",
    "verdict",
];

fn parse_record(s: &str) -> Result<MeasurementRecord> {
    s.parse()
}

pub fn priors_compare(
    cfg: &RunConfig,
    a: PriorId,
    b: PriorId,
    record: &str,
    level: u32,
) -> Result<Outcome> {
    let rec = parse_record(record)?;
    let v = engine(level)?.clarke_compare(a, b, &rec)?;
    let mut r = Report::new("priors.clarke_comparison", cfg, &VERDICT_COLUMNS);
    r.summarize("record", record);
    r.summarize("posterior_power", 0.5);
    r.push(verdict_row(&v))?;
    Ok(r.into())
}

pub fn priors_rank(
    cfg: &RunConfig,
    priors: &[PriorId],
    record: &str,
    level: u32,
) -> Result<Outcome> {
    if priors.len() < 2 {
        return Err(Error::domain("ranking needs at least two priors"));
    }
    let rec = parse_record(record)?;
    let e = engine(level)?;
    let mut verdicts = Vec::new();
    for i in 0..priors.len() {
        for j in i + 1..priors.len() {
            verdicts.push(e.clarke_compare(priors[i], priors[j], &rec)?);
        }
    }
    let mut r = Report::new("priors.clarke_ranking", cfg, &VERDICT_COLUMNS);
    r.summarize("record", record);
    for v in &verdicts {
        r.push(verdict_row(v))?;
    }
    let order = rank(&verdicts, priors);
    r.summarize(
        "ordering",
        order.map(|o| o.iter().map(|p| p.name()).collect::<Vec<_>>().join(" > ")),
    );
    Ok(r.into())
}

pub fn priors_biasedness(cfg: &RunConfig, spec: &str, priors: &[PriorId]) -> Result<Outcome> {
    let (lo, hi, n) = grid::count_grid(spec)?;
    let curves = priors
        .iter()
        .map(|&p| biasedness_curve(p, lo, hi, n))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["r"];
    columns.extend(priors.iter().map(|p| p.name()));
    let mut r = Report::new("priors.radial_marginal", cfg, &columns);
    for (i, x) in grid::points(lo, hi, n).into_iter().enumerate() {
        let mut row = vec![Cell::from(x)];
        row.extend(curves.iter().map(|c| Cell::from(c[i].density)));
        r.push(row)?;
    }
    Ok(r.into())
}

pub fn priors_gain(cfg: &RunConfig, prior: PriorId, record: &str, level: u32) -> Result<Outcome> {
    let rec = parse_record(record)?;
    let mut r = Report::new(
        "priors.information_gain",
        cfg,
        &["prior", "record", "q_extension", "gain"],
    );
    let (name, gain) = if rec.q_extension {
        let (lo, hi) = cfg.q_range;
        r.note("the q-extended record uses the truncated extended Bures prior over the q range");
        r.note("extended gains are mapped to records as (pair, single outcome, two equal outcomes); this mapping is an assumption");
        (
            "q_truncated_bures",
            q_truncated_prior(lo, hi)?.information_gain(&rec)?,
        )
    } else {
        (prior.name(), engine(level)?.information_gain(prior, &rec)?)
    };
    r.push(vec![
        name.into(),
        record.into(),
        rec.q_extension.into(),
        gain.into(),
    ])?;
    Ok(r.into())
}

fn curve_report(cfg: &RunConfig, quantity: &str, rows: Vec<(f64, f64, f64)>) -> Result<Report> {
    let mut r = Report::new(quantity, cfg, &["coordinate", "value", "error_estimate"]);
    for (c, v, e) in rows {
        r.push(vec![c.into(), v.into(), e.into()])?;
    }
    Ok(r)
}

pub fn husimi_marginal_q(cfg: &RunConfig, qs: &[f64]) -> Result<Outcome> {
    let rows = qs
        .iter()
        .map(|&q| marginal_q(q).map(|s| (s.coordinate, s.value, s.error_estimate)))
        .collect::<Result<Vec<_>>>()?;
    Ok(curve_report(cfg, "husimi.extended_fisher.marginal_q", rows)?.into())
}

pub fn husimi_marginal_r(cfg: &RunConfig, spec: &str) -> Result<Outcome> {
    let (lo, hi, n) = grid::count_grid(spec)?;
    let (q_lo, q_hi) = cfg.q_range;
    let rows = grid::points(lo, hi, n)
        .into_iter()
        .map(|x| marginal_r(x, q_lo, q_hi).map(|s| (s.coordinate, s.value, s.error_estimate)))
        .collect::<Result<Vec<_>>>()?;
    Ok(curve_report(cfg, "husimi.extended_fisher.marginal_r", rows)?.into())
}

pub fn husimi_peak(cfg: &RunConfig, lo: f64, hi: f64) -> Result<Outcome> {
    if !(lo < hi) {
        return Err(Error::domain("peak search needs lo < hi"));
    }
    let (q, h) = marginal_q_peak(lo, hi, 1e-4)?;
    let mut r = Report::new(
        "husimi.extended_fisher.marginal_q_peak",
        cfg,
        &["q", "height"],
    );
    r.push(vec![q.into(), h.into()])?;
    Ok(r.into())
}

pub fn husimi_normalizations(cfg: &RunConfig) -> Result<Outcome> {
    let mut r = Report::new("husimi.normalizations", cfg, &["quantity", "value"]);
    r.push(vec!["fisher_volume".into(), fisher_normalization()?.into()])?;
    r.push(vec![
        "extended_fisher_q1_volume".into(),
        extended_q1_normalization()?.into(),
    ])?;
    Ok(r.into())
}

pub fn husimi_tensor(cfg: &RunConfig, q: Option<f64>, point: Vec<f64>) -> Result<Outcome> {
    let chart = q.map_or(HusimiChart::Extended, HusimiChart::Fixed);
    let g = fisher_tensor_numeric(chart, &ParamPoint::new(point.clone()))?;
    let mut r = Report::new("husimi.fisher_tensor", cfg, &["i", "j", "g"]);
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            r.push(vec![i.into(), j.into(), g.g[(i, j)].into()])?;
        }
    }
    r.summarize("volume_element", g.volume_element().value);
    Ok(r.into())
}

pub fn husimi_density(cfg: &RunConfig, q: f64, point: &[f64], omega: &[f64]) -> Result<Outcome> {
    if point.len() != 3 || omega.len() != 3 {
        return Err(Error::domain("--point and --omega take three values each"));
    }
    let v = escort_husimi(
        q,
        point[0],
        point[1],
        point[2],
        [omega[0], omega[1], omega[2]],
    )?;
    let mut r = Report::new("husimi.escort_density", cfg, &["q", "value"]);
    r.push(vec![q.into(), v.into()])?;
    Ok(r.into())
}

pub fn selftest(cfg: &RunConfig, criteria: &[u8], mc_samples: u64) -> Result<Outcome> {
    let ids: Vec<u8> = if criteria.is_empty() {
        CRITERIA.collect()
    } else {
        criteria.to_vec()
    };
    let acfg = AcceptanceConfig {
        seed: cfg.seed,
        rel_tol: cfg.tol,
        mc_samples,
    };
    let mut r = Report::new(
        "acceptance",
        cfg,
        &[
            "criterion",
            "title",
            "pass",
            "checks",
            "failed_checks",
            "documented",
        ],
    );
    let mut lines = Vec::new();
    let mut failed = false;
    for id in ids {
        let rep = acceptance::run(id, &acfg)?;
        lines.push(rep.line());
        failed |= !rep.pass();
        let bad: Vec<&acceptance::Check> = rep.checks.iter().filter(|c| !c.pass).collect();
        r.push(vec![
            Cell::from(u64::from(id)),
            rep.title.into(),
            rep.pass().into(),
            rep.checks.len().into(),
            bad.iter()
                .map(|c| c.label.as_str())
                .collect::<Vec<_>>()
                .join("; ")
                .into(),
            bad.iter()
                .filter_map(|c| c.note.as_deref())
                .collect::<Vec<_>>()
                .join("; ")
                .into(),
        ])?;
    }
    Ok(Outcome {
        report: r,
        lines,
        deferred: None,
        failed,
    })
}
