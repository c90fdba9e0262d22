use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use qigeom::metric::{
    ar_element, bell_tensor, bures_tensor, monotone_tensor, tensor, FFunction, MetricId,
};
use qigeom::priors::{Engine, MeasurementRecord, PriorId, RadialGrid};
use qigeom::region::{
    integrate, sep_probability, total_volume, Model, Predicate, Region, RegionOptions,
};
use qigeom::state::{eigensystem, reparameterize_ar, DensityMatrix, FamilyChart, ParamPoint};

const SQRT8: f64 = 2.0 * std::f64::consts::SQRT_2;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.iter().chain(b.iter()).fold(0f64, |m, x| m.max(x.abs()));
    (a - b).iter().fold(0f64, |m, x| m.max(x.abs())) / scale
}

/// Interior point of the AR triangle 2 sqrt2 b <= s2 <= 8, b >= 0.
fn ar_point() -> impl Strategy<Value = (f64, f64)> {
    (0.02f64..0.98, 0.02f64..0.98).prop_map(|(u, v)| {
        let b = u * SQRT8;
        (b, SQRT8 * b + v * (8.0 - SQRT8 * b))
    })
}

fn bloch_point() -> impl Strategy<Value = ParamPoint> {
    (0.01f64..0.99, 0.05f64..3.09, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(r, a, b)| ParamPoint::new(vec![r, a, b]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matrices_are_density_matrices(n in 2usize..=4, re in prop::collection::vec(-1.0f64..1.0, 16), im in prop::collection::vec(-1.0f64..1.0, 16)) {
        let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(re[i * 4 + j], im[i * 4 + j]));
        let m = &a * a.adjoint();
        let tr = m.trace().re;
        prop_assume!(tr > 1e-3);
        let m = m.map(|z| z / tr);
        let m = (&m + m.adjoint()).map(|z| z * 0.5);
        let rho = DensityMatrix::new(m).unwrap();
        let es = eigensystem(&rho).unwrap();
        prop_assert!(es.values.iter().all(|&l| l > -1e-12));
        prop_assert!((es.values.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_unit_trace_is_rejected(n in 2usize..=4, s in 1.1f64..3.0) {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { Complex64::new(s / n as f64, 0.0) } else { Complex64::new(0.0, 0.0) });
        prop_assert!(DensityMatrix::new(m).is_err());
    }

    #[test]
    fn hubner_sum_equals_bures_monotone_metric(p in bloch_point()) {
        let ch = FamilyChart::bloch_qubit();
        let a = bures_tensor(&ch, &p).unwrap();
        let b = monotone_tensor(&ch, &p, FFunction::Bures).unwrap();
        prop_assert!(max_rel(&a.g, &b.g) < 1e-9);
    }

    #[test]
    fn commuting_family_reduces_to_classical_fisher(q in 0.5f64..5.0, (b, s2) in ar_point()) {
        let ch = FamilyChart::ar_bell(q);
        let p = ParamPoint::new(vec![b, s2]);
        let bp = ch.bell_point(&p).unwrap();
        let classical = bell_tensor(&bp, MetricId::Bures, 0.0).unwrap();
        for metric in [MetricId::Bures, MetricId::WignerYanase] {
            let g = tensor(&ch, &p, metric).unwrap();
            prop_assert!(max_rel(&g.g, &classical) < 1e-6, "{} at {:?}", metric.name(), p);
        }
    }

    #[test]
    fn reparameterized_states_coincide((b, s2) in ar_point()) {
        let (b1, s1) = reparameterize_ar(b, s2).unwrap();
        let half = FamilyChart::ar_bell(0.5).matrix(&ParamPoint::new(vec![b, s2])).unwrap();
        let one = FamilyChart::ar_bell(1.0).matrix(&ParamPoint::new(vec![b1, s1])).unwrap();
        prop_assert!((half - one).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn volume_element_transforms_with_the_jacobian((b, s2) in ar_point()) {
        let h = 1e-6;
        let f = |b: f64, s: f64| reparameterize_ar(b, s).unwrap();
        let (bp, sp) = f(b + h, s2);
        let (bm, sm) = f(b - h, s2);
        let (bq, sq) = f(b, s2 + h);
        let (bn, sn) = f(b, s2 - h);
        let det = ((bp - bm) * (sq - sn) - (bq - bn) * (sp - sm)) / (4.0 * h * h);
        let (b1, s1) = f(b, s2);
        let lhs = ar_element(0.5, b, s2).unwrap();
        let rhs = ar_element(1.0, b1, s1).unwrap() * det.abs();
        prop_assert!(rel(lhs, rhs) < 1e-4, "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relative_entropy_is_nonnegative(a in 0usize..4, b in 0usize..4, up in 0u32..4, down in 0u32..4) {
        let engine = Engine::new(RadialGrid::new(5));
        let (pa, pb) = (PriorId::MONOTONE[a], PriorId::MONOTONE[b]);
        let rec = MeasurementRecord::z(up, down);
        let p = engine.posterior(engine.prior_density(pa).unwrap(), &rec, 1.0).unwrap();
        let q = engine.posterior(engine.prior_density(pb).unwrap(), &rec, 1.0).unwrap();
        let kl = engine.kl(&p, &q).unwrap();
        prop_assert!(kl >= -1e-10, "{kl}");
        if a == b {
            prop_assert!(kl.abs() < 1e-10);
        }
    }

    #[test]
    fn separable_fraction_is_a_probability(alpha in prop_oneof![-5.0f64..-1.1, 0.1f64..5.0], hs in any::<bool>()) {
        let metric = if hs { MetricId::Hs } else { MetricId::Bures };
        let p = sep_probability(Model::Trivariate { alpha }, metric, &RegionOptions::default()).unwrap();
        prop_assert!(p.value > -1e-9 && p.value <= 1.0 + 1e-9, "{}", p.value);
    }

    #[test]
    fn ar_bures_total_does_not_depend_on_q(q in 0.5f64..6.0) {
        let v = total_volume(Model::ArBell { q }, MetricId::Bures, &RegionOptions::default()).unwrap();
        prop_assert!((v.value - std::f64::consts::FRAC_PI_4).abs() < 1e-6, "{}", v.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn monte_carlo_depends_only_on_the_seed(seed in any::<u64>(), threads in 2usize..6) {
        let region = Region::new(Model::Trivariate { alpha: 1.5 }, Predicate::Separable);
        let run = |n: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| {
                integrate(&region, &|s| s.volume_density(MetricId::Bures), &RegionOptions::monte_carlo(seed, 20_000))
                    .unwrap()
                    .value
            })
        };
        prop_assert_eq!(run(1).to_bits(), run(threads).to_bits());
    }
}
