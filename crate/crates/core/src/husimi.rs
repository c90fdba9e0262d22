//! Husimi and escort-Husimi densities of a qubit and their Fisher metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{f_fisher_q, log_ratio, MetricTensor, Radius};
use crate::quadrature::{tanh_sinh, tanh_sinh_nodes};
use crate::state::{DensityMatrix, ParamPoint};

pub const Q_MIN: f64 = 0.5;
pub const Q_MAX: f64 = 500.0;
const PI: f64 = std::f64::consts::PI;
const STABILITY: f64 = 1e-7;

fn bloch_vector(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.dim() != 2 {
        return Err(Error::Dimension {
            expected: "2 (qubit)".into(),
            got: rho.dim(),
        });
    }
    let m = rho.matrix();
    Ok([
        2.0 * m[(0, 1)].re,
        -2.0 * m[(0, 1)].im,
        (m[(0, 0)] - m[(1, 1)]).re,
    ])
}

fn unit(omega: [f64; 3]) -> Result<[f64; 3]> {
    let n = (omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]).sqrt();
    if !(n > 0.0) {
        return Err(Error::domain("direction must be nonzero"));
    }
    Ok(omega.map(|x| x / n))
}

/// Husimi density <Omega|rho|Omega>/(2 pi), normalized over the unit sphere.
pub fn husimi(rho: &DensityMatrix, omega: [f64; 3]) -> Result<f64> {
    let v = bloch_vector(rho)?;
    let n = unit(omega)?;
    Ok((1.0 + v[0] * n[0] + v[1] * n[1] + v[2] * n[2]) / (4.0 * PI))
}

/// log of Z = 2 pi ((1+r)^{q+1} - (1-r)^{q+1}) / (r (q+1)), the escort normalizer.
pub fn escort_log_normalizer(r: f64, q: f64) -> f64 {
    if r < 1e-6 {
        return (4.0 * PI).ln() + (q * (q - 1.0) * r * r / 6.0).ln_1p();
    }
    let m = q + 1.0;
    // (1+r)^m (1 - W^m)
    let lw = log_ratio(r);
    (2.0 * PI).ln() + m * r.ln_1p() + (-(m * lw).exp_m1()).ln() - (r * m).ln()
}

fn check_q(q: f64) -> Result<()> {
    if !(Q_MIN..=Q_MAX).contains(&q) {
        return Err(Error::domain(format!("q = {q} outside [{Q_MIN}, {Q_MAX}]")));
    }
    Ok(())
}

/// Escort Husimi density (1 + r.n)^q / Z at direction omega.
pub fn escort_husimi(q: f64, r: f64, t1: f64, t2: f64, omega: [f64; 3]) -> Result<f64> {
    check_q(q)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside [0, 1]")));
    }
    let v = crate::state::bloch_cartesian(r, t1, t2);
    let n = unit(omega)?;
    let a = 1.0 + v[0] * n[0] + v[1] * n[1] + v[2] * n[2];
    if a <= 0.0 {
        return Ok(0.0);
    }
    Ok((q * a.ln() - escort_log_normalizer(r, q)).exp())
}

/// Chart of the Fisher metric: escort order held fixed, or q as fourth coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HusimiChart {
    Fixed(f64),
    Extended,
}

const PHI_POINTS: usize = 8;

/// Covariance of the score vector under the escort density, one tanh-sinh level.
fn score_covariance(r: f64, t1: f64, q: f64, d: usize, level: u32) -> DMatrix<f64> {
    let nodes = tanh_sinh_nodes(level, -1.0, 1.0);
    let ln_top = r.ln_1p();
    let st1 = t1.sin();
    let phis: Vec<(f64, f64)> = (0..PHI_POINTS)
        .map(|k| (2.0 * PI * k as f64 / PHI_POINTS as f64).sin_cos())
        .map(|(s, c)| (c, s))
        .collect();
    let scores = |xa: f64, xb: f64, cphi: f64, sphi: f64, out: &mut [f64; 4]| {
        let c = xa - 1.0;
        let one_rc = (1.0 - r) + r * xa;
        let s = (xa * xb).sqrt();
        out[0] = q * c / one_rc;
        out[1] = q * r * s * cphi / one_rc;
        out[2] = q * r * st1 * s * sphi / one_rc;
        out[3] = one_rc.ln();
    };
    let weights: Vec<f64> = nodes
        .iter()
        .map(|n| {
            let one_rc = (1.0 - r) + r * n.xa;
            n.w * (q * (one_rc.ln() - ln_top)).exp() / PHI_POINTS as f64
        })
        .collect();
    let mut m0 = 0.0;
    let mut mean = [0.0; 4];
    let mut a = [0.0; 4];
    for (n, &w) in nodes.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for &(cp, sp) in &phis {
            scores(n.xa, n.xb, cp, sp, &mut a);
            m0 += w;
            for i in 0..4 {
                mean[i] += w * a[i];
            }
        }
    }
    for x in mean.iter_mut() {
        *x /= m0;
    }
    let mut g = DMatrix::zeros(d, d);
    for (n, &w) in nodes.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        for &(cp, sp) in &phis {
            scores(n.xa, n.xb, cp, sp, &mut a);
            for i in 0..d {
                let ai = a[i] - mean[i];
                for j in i..d {
                    g[(i, j)] += w * ai * (a[j] - mean[j]);
                }
            }
        }
    }
    for i in 0..d {
        for j in 0..d {
            if j < i {
                g[(i, j)] = g[(j, i)];
            } else {
                g[(i, j)] /= m0;
            }
        }
    }
    g
}

/// Fisher tensor of the escort-Husimi family by sphere quadrature, refined until
/// successive levels agree to 1e-7 relative.
pub fn fisher_tensor_numeric(chart: HusimiChart, p: &ParamPoint) -> Result<MetricTensor> {
    let (d, coords): (usize, &[&str]) = match chart {
        HusimiChart::Fixed(_) => (3, &["r", "theta1", "theta2"]),
        HusimiChart::Extended => (4, &["r", "theta1", "theta2", "q"]),
    };
    if p.len() != d {
        return Err(Error::Dimension {
            expected: format!("{d} coordinates"),
            got: p.len(),
        });
    }
    let q = match chart {
        HusimiChart::Fixed(q) => q,
        HusimiChart::Extended => p[3],
    };
    check_q(q)?;
    let (r, t1) = (p[0], p[1]);
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside [0, 1)")));
    }
    let mut prev = score_covariance(r, t1, q, d, 2);
    for level in 3..=10 {
        let g = score_covariance(r, t1, q, d, level);
        let scale = (0..d).map(|i| g[(i, i)].abs()).fold(0.0, f64::max);
        if (&g - &prev).abs().max() <= STABILITY * scale {
            return Ok(MetricTensor::new(g, coords));
        }
        prev = g;
    }
    Err(Error::QuadratureFailure(format!(
        "sphere rule did not stabilize at r = {r}, q = {q}"
    )))
}

/// Radial Fisher component at q = 1: (-2r - log W)/(2 r^3).
pub fn radial_q1(r: impl Into<Radius>) -> f64 {
    let rad = r.into();
    let r = rad.r;
    if r < 0.1 {
        let r2 = r * r;
        let mut term = 1.0;
        let mut s = 0.0;
        for k in 0..12 {
            s += term / (2 * k + 3) as f64;
            term *= r2;
        }
        return s;
    }
    (-2.0 * r - rad.log_w()) / (2.0 * r.powi(3))
}

/// Tangential coefficient of r^2 dn^2: 1/((1+r) f_{F,q}(W)).
pub fn tangential(r: impl Into<Radius>, q: f64) -> f64 {
    let rad = r.into();
    1.0 / ((1.0 + rad.r) * f_fisher_q(rad.w().min(1.0), q))
}

/// E(r) = 1 + (1 - r^2) log W/(2r) = sum_k 2 r^{2k}/(4k^2 - 1); returns (E, E/(2r)).
fn e_function(rad: Radius) -> (f64, f64) {
    let r = rad.r;
    if r < 0.2 {
        let r2 = r * r;
        let mut e = 0.0;
        let mut e_over = 0.0;
        let mut pw = 1.0;
        for k in 1..30 {
            let c = 1.0 / ((4 * k * k - 1) as f64);
            e_over += c * pw * r;
            pw *= r2;
            e += 2.0 * c * pw;
        }
        return (e, e_over);
    }
    let e = 1.0 + rad.one_minus_sq() * rad.log_w() / (2.0 * r);
    (e, e / (2.0 * r))
}

const DET_SERIES: [f64; 11] = [
    1.0 / 135.0,
    47.0 / 4725.0,
    2.0 / 189.0,
    19058.0 / 1819125.0,
    238457.0 / 23648625.0,
    226789.0 / 23648625.0,
    3065332.0 / 337702365.0,
    3027707044.0 / 352898971425.0,
    14313207767.0 / 1764494857125.0,
    5208529519183.0 / 678322237217625.0,
    4938252168286.0 / 678322237217625.0,
];

/// Entries (g_rr, g_qq, g_qr) of the q = 1 extended Husimi tensor.
pub fn extended_q1_entries(r: impl Into<Radius>) -> (f64, f64, f64) {
    let rad = r.into();
    let (e, e_over) = e_function(rad);
    (radial_q1(rad), 0.25 * e * (2.0 - e), e_over)
}

/// g_rr g_qq - g_qr^2 of the q = 1 extended Husimi tensor.
pub fn extended_q1_radial_det(r: impl Into<Radius>) -> f64 {
    let rad = r.into();
    let r = rad.r;
    if r < 0.3 {
        let r2 = r * r;
        let mut pw = r2 * r2;
        let mut s = 0.0;
        for c in DET_SERIES {
            s += c * pw;
            pw *= r2;
        }
        return s;
    }
    let (grr, gqq, gqr) = extended_q1_entries(rad);
    grr * gqq - gqr * gqr
}

pub fn closed_form_q1(p: &ParamPoint) -> Result<MetricTensor> {
    if p.len() != 3 {
        return Err(Error::Dimension {
            expected: "3 coordinates".into(),
            got: p.len(),
        });
    }
    let (r, t1) = (p[0], p[1]);
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside [0, 1)")));
    }
    let t = tangential(r, 1.0);
    let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        radial_q1(r),
        r * r * t,
        r * r * t * t1.sin().powi(2),
    ]));
    Ok(MetricTensor::new(g, &["r", "theta1", "theta2"]))
}

pub fn closed_form_extended_q1(p: &ParamPoint) -> Result<MetricTensor> {
    if p.len() != 4 {
        return Err(Error::Dimension {
            expected: "4 coordinates".into(),
            got: p.len(),
        });
    }
    let base = closed_form_q1(&ParamPoint::new(p.0[..3].to_vec()))?;
    let (_, gqq, gqr) = extended_q1_entries(p[0]);
    let mut g = DMatrix::zeros(4, 4);
    g.view_mut((0, 0), (3, 3)).copy_from(&base.g);
    g[(3, 3)] = gqq;
    g[(0, 3)] = gqr;
    g[(3, 0)] = gqr;
    Ok(MetricTensor::new(g, &["r", "theta1", "theta2", "q"]))
}

/// Angle-free volume factor r^2 sqrt(g_rr) T at q = 1 (multiply by sin(theta1)).
pub fn fisher_element_radial(r: impl Into<Radius>) -> f64 {
    let rad = r.into();
    rad.r * rad.r * radial_q1(rad).sqrt() * tangential(rad, 1.0)
}

/// Angle-free volume factor of the q = 1 extended tensor.
pub fn extended_q1_element_radial(r: impl Into<Radius>) -> f64 {
    let rad = r.into();
    rad.r * rad.r * extended_q1_radial_det(rad).max(0.0).sqrt() * tangential(rad, 1.0)
}

/// Ball integral of an isotropic element given by its angle-free radial factor.
pub fn ball_integral(f: impl Fn(Radius) -> f64) -> Result<f64> {
    let res = tanh_sinh(
        |_, xa, xb| f(Radius { r: xa, rc: xb }),
        0.0,
        1.0,
        1e-14,
        1e-12,
    )?;
    Ok(4.0 * PI * res.value)
}

/// Volume of the q = 1 Husimi Fisher metric over the Bloch ball.
pub fn fisher_normalization() -> Result<f64> {
    ball_integral(fisher_element_radial)
}

/// Volume of the q = 1 extended Husimi Fisher metric over the Bloch ball.
pub fn extended_q1_normalization() -> Result<f64> {
    ball_integral(extended_q1_element_radial)
}

/// Numeric radial 2x2 determinant (r, q) of the extended escort-Husimi tensor.
pub fn extended_radial_det(r: f64, q: f64) -> Result<f64> {
    let g = fisher_tensor_numeric(
        HusimiChart::Extended,
        &ParamPoint::new(vec![r, 1.0, 0.0, q]),
    )?;
    Ok(g.g[(0, 0)] * g.g[(3, 3)] - g.g[(0, 3)].powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub coordinate: f64,
    pub value: f64,
    pub error_estimate: f64,
}

/// One-dimensional q-marginal of the extended escort-Husimi volume element.
pub fn marginal_q(q: f64) -> Result<CurveSample> {
    check_q(q)?;
    let integrand = |r: f64| -> Result<f64> {
        if r <= 0.0 || r >= 1.0 {
            return Ok(0.0);
        }
        let det = extended_radial_det(r, q)?;
        Ok(r * r * det.max(0.0).sqrt() * tangential(r, q))
    };
    let failure = std::cell::Cell::new(None);
    let f = |_: f64, xa: f64, _: f64| match integrand(xa) {
        Ok(v) => v,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    let res = tanh_sinh(f, 0.0, 1.0, 1e-9, 1e-7)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    Ok(CurveSample {
        coordinate: q,
        value: 4.0 * PI * res.value,
        error_estimate: 4.0 * PI * res.abs_error,
    })
}

/// Location and height of the maximum of `marginal_q` by golden-section search.
pub fn marginal_q_peak(lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = marginal_q(x1)?.value;
    let mut f2 = marginal_q(x2)?.value;
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = marginal_q(x2)?.value;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = marginal_q(x1)?.value;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, marginal_q(x)?.value))
}

/// One-dimensional r-marginal of the extended escort-Husimi element over q in [q_lo, q_hi].
pub fn marginal_r(r: f64, q_lo: f64, q_hi: f64) -> Result<CurveSample> {
    check_q(q_lo)?;
    check_q(q_hi)?;
    if !(0.0..1.0).contains(&r) {
        return Err(Error::domain(format!("radius {r} outside [0, 1)")));
    }
    let failure = std::cell::Cell::new(None);
    // integrate in log q
    let (a, b) = (q_lo.ln(), q_hi.ln());
    let f = |x: f64, _: f64, _: f64| {
        let q = x.exp();
        match extended_radial_det(r, q) {
            Ok(det) => q * det.max(0.0).sqrt() * tangential(r, q),
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let res = tanh_sinh(f, a, b, 1e-10, 1e-6)?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let k = 4.0 * PI * r * r;
    Ok(CurveSample {
        coordinate: r,
        value: k * res.value,
        error_estimate: k * res.abs_error,
    })
}

/// Unextended Bures r-marginal: pi r^2 / (2 sqrt(1 - r^2)).
pub fn bures_marginal_r(r: f64) -> f64 {
    PI * r * r / (2.0 * ((1.0 - r) * (1.0 + r)).sqrt())
}

/// Numeric q-marginal of the truncated extended-Bures element.
pub fn bures_truncated_marginal_q(q: f64) -> Result<CurveSample> {
    let res = tanh_sinh(
        |_, xa, xb| crate::metric::truncated_element_radial(Radius { r: xa, rc: xb }, q),
        0.0,
        1.0,
        1e-14,
        1e-12,
    )?;
    Ok(CurveSample {
        coordinate: q,
        value: 4.0 * PI * res.value,
        error_estimate: 4.0 * PI * res.abs_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use crate::state::{FamilyChart, ParamPoint};

    /// Product rule over the sphere: GL in cos(theta) times trapezoid in phi.
    fn sphere_integral(f: impl Fn([f64; 3]) -> f64) -> f64 {
        let (x, w) = gauss_legendre(64);
        let nphi = 64;
        let mut s = 0.0;
        for (c, wc) in x.iter().zip(&w) {
            let st = (1.0 - c * c).sqrt();
            for k in 0..nphi {
                let ph = 2.0 * PI * k as f64 / nphi as f64;
                s += wc * (2.0 * PI / nphi as f64) * f([st * ph.cos(), st * ph.sin(), *c]);
            }
        }
        s
    }

    #[test]
    fn husimi_normalized_and_uniform_at_center() {
        let ch = FamilyChart::bloch_qubit();
        for &(r, a, b) in &[(0.0, 0.1, 0.2), (0.3, 1.0, 2.0), (0.99, 2.5, 4.0)] {
            let rho = ch.build(&ParamPoint::new(vec![r, a, b])).unwrap();
            let total = sphere_integral(|n| husimi(&rho, n).unwrap());
            assert!((total - 1.0).abs() < 1e-12);
        }
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(
            (husimi(&mixed, [0.0, 0.0, 1.0]).unwrap() - husimi(&mixed, [1.0, 0.0, 0.0]).unwrap())
                .abs()
                < 1e-16
        );
    }

    #[test]
    fn escort_husimi_normalized() {
        for q in [0.5, 1.0, 3.0, 20.0] {
            for r in [0.0, 0.2, 0.7] {
                let total = sphere_integral(|n| escort_husimi(q, r, 0.4, 1.3, n).unwrap());
                assert!((total - 1.0).abs() < 1e-9, "{q} {r} {total}");
            }
        }
        let rho = FamilyChart::bloch_qubit()
            .build(&ParamPoint::new(vec![0.4, 0.4, 1.3]))
            .unwrap();
        let n = [0.3, -0.2, 0.9];
        assert!(
            (escort_husimi(1.0, 0.4, 0.4, 1.3, n).unwrap() - husimi(&rho, n).unwrap()).abs()
                < 1e-14
        );
        assert!(escort_husimi(0.2, 0.4, 0.4, 1.3, n).is_err());
    }

    #[test]
    fn q1_numeric_matches_closed_form() {
        let p = ParamPoint::new(vec![0.5, 1.0, 2.0]);
        let num = fisher_tensor_numeric(HusimiChart::Fixed(1.0), &p).unwrap();
        let cf = closed_form_q1(&p).unwrap();
        assert!(
            num.max_rel_deviation(&cf) < 1e-7,
            "{}",
            num.max_rel_deviation(&cf)
        );
    }

    #[test]
    fn extended_q1_numeric_matches_closed_form() {
        for r in [0.05, 0.4, 0.9] {
            let p = ParamPoint::new(vec![r, 0.7, 0.3, 1.0]);
            let num = fisher_tensor_numeric(HusimiChart::Extended, &p).unwrap();
            let cf = closed_form_extended_q1(&p).unwrap();
            assert!(
                num.max_rel_deviation(&cf) < 1e-6,
                "{r} {}",
                num.max_rel_deviation(&cf)
            );
            let det = num.g[(0, 0)] * num.g[(3, 3)] - num.g[(0, 3)].powi(2);
            assert!((det - extended_q1_radial_det(r)).abs() < 1e-6 * det.abs().max(1e-8));
        }
        let (_, gqq, _) = extended_q1_entries(1.0 - 1e-12);
        assert!((gqq - 0.25).abs() < 1e-6);
    }

    #[test]
    fn det_series_joins_closed_form() {
        let r: f64 = 0.3;
        let (grr, gqq, gqr) = extended_q1_entries(r);
        let direct = grr * gqq - gqr * gqr;
        assert!((direct - extended_q1_radial_det(r)).abs() < 1e-9 * direct);
    }

    #[test]
    fn tangential_matches_f_function_on_grid() {
        for q in [0.6, 1.0, 2.0, 5.0] {
            for k in 1..=9 {
                let r = k as f64 / 10.0;
                let g = fisher_tensor_numeric(
                    HusimiChart::Fixed(q),
                    &ParamPoint::new(vec![r, 0.9, 0.0]),
                )
                .unwrap();
                let t = tangential(r, q);
                assert!((g.g[(1, 1)] / (r * r) - t).abs() < 1e-5 * t, "{q} {r}");
            }
        }
    }

    #[test]
    fn normalizations_match_printed_constants() {
        assert!((fisher_normalization().unwrap() - 1.39350989).abs() < 1e-4);
        assert!((extended_q1_normalization().unwrap() - 0.24559293).abs() < 1e-4);
    }

    #[test]
    fn bures_marginals() {
        for q in [0.5, 2.0] {
            let m = bures_truncated_marginal_q(q).unwrap();
            assert!((m.value / crate::metric::truncated_marginal_q(q) - 1.0).abs() < 1e-8);
        }
        let r: f64 = 0.6;
        // angular integral of r^2 sin(theta1)/(8 sqrt(1-r^2))
        let direct = 4.0 * PI * r * r / (8.0 * (1.0 - r * r).sqrt());
        assert!((bures_marginal_r(r) - direct).abs() < 1e-14);
    }
}
