use proptest::prelude::*;

use scri_scatter::chart::{self, ChartParams, ChartPoint};
use scri_scatter::coeff::{self, CoeffB};
use scri_scatter::energy;
use scri_scatter::nullgrid::{self, bump, Direction, GoursatSetup, NullGrid, ScriProfile};
use scri_scatter::scatter::{self, SigmaData};

fn params(m: f64) -> ChartParams {
    ChartParams { m, u_min: -200.0, u_max: -100.0, r_max: 0.01, eps: 0.1, u0: -120.0 }
}

fn small_setup() -> GoursatSetup {
    GoursatSetup::new(params(1.0), NullGrid { nu: 80, nr: 10 }, 0)
}

fn bump_profile(g: &GoursatSetup, a: f64, b: f64, amp: f64) -> ScriProfile {
    ScriProfile::from_fn(g.l, g.params.u_min, g.du(), g.grid.nu + 1, (a, b), |u| bump(u, a, b, amp)).unwrap()
}

proptest! {
    #[test]
    fn metric_times_inverse_is_identity(u in -200.0f64..-100.0, rr in 0.0f64..0.01, m in 0.0f64..2.0) {
        let (p, c) = (ChartPoint::new(u, rr), params(m));
        let g = chart::metric_components(&p, &c);
        let h = chart::inverse_metric_components(&p, &c);
        let prod = [
            g.guu * h.uu + g.gur * h.ur,
            g.guu * h.ur + g.gur * h.rr,
            g.gur * h.uu + g.grr * h.ur,
            g.gur * h.ur + g.grr * h.rr,
        ];
        for (got, want) in prod.iter().zip([1.0, 0.0, 0.0, 1.0]) {
            prop_assert!((got - want).abs() < 1e-12);
        }
        prop_assert_eq!(g.angular * h.angular, 1.0);
    }

    #[test]
    fn tortoise_round_trip(m in 0.1f64..5.0, x in 0.0f64..1.0) {
        let lo = (2.0 * m * (1.0 + 1e-3)).ln();
        let hi = (1e4 * m).ln();
        let r = (lo + x * (hi - lo)).exp();
        let back = chart::r_of_rstar(chart::rstar_of_r(r, m).unwrap(), m).unwrap();
        prop_assert!((back - r).abs() <= 1e-10 * r);
    }

    #[test]
    fn tau_is_a_decreasing_bijection(s in 1e-6f64..1.0, ds in 1e-4f64..1e-2) {
        let tau = chart::tau_of_s(s).unwrap();
        prop_assert!((0.0..=2.0).contains(&tau));
        prop_assert!((chart::s_of_tau(tau).unwrap() - s).abs() < 1e-12);
        let s2 = (s + ds).min(1.0);
        prop_assert!(chart::tau_of_s(s2).unwrap() <= tau);
        let h = 1e-7 * s;
        let slope = (chart::tau_of_s(s + h).unwrap() - chart::tau_of_s(s - h).unwrap()) / (2.0 * h);
        prop_assert!((slope.abs() * s.sqrt() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn conformal_rescaling_round_trip(v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.01f64..1.0, -1.0f64..1.0), 1..40)) {
        let (psi0, psi1, om, dom): (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) = v.iter().fold(
            (vec![], vec![], vec![], vec![]),
            |mut a, x| { a.0.push(x.0); a.1.push(x.1); a.2.push(x.2); a.3.push(x.3); a },
        );
        let (th, xi) = coeff::conformal_to_physical_data(&psi0, &psi1, &om, &dom).unwrap();
        let (p0, p1) = coeff::physical_to_conformal_data(&th, &xi, &om, &dom).unwrap();
        for k in 0..psi0.len() {
            prop_assert!((p0[k] - psi0[k]).abs() < 1e-12);
            prop_assert!((p1[k] - psi1[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn h1_norm_is_a_norm(a in prop::collection::vec(-1.0f64..1.0, 50), b in prop::collection::vec(-1.0f64..1.0, 50), k in -3.0f64..3.0) {
        let n = |v: &[f64]| energy::h1_scri_norm_values(1, 0.5, -60.0, v);
        let ka: Vec<f64> = a.iter().map(|x| k * x).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!((n(&ka) - k.abs() * n(&a)).abs() <= 1e-12 * (1.0 + n(&ka)));
        prop_assert!(n(&sum) <= n(&a) + n(&b) + 1e-12);
    }

    #[test]
    fn small_data_recursion_reaches_the_fixed_point(alpha in 0.01f64..10.0, frac in 0.0f64..0.95) {
        let beta = frac * (4.0 / (27.0 * alpha.powi(3))).sqrt();
        let fp = nullgrid::fixed_point_analysis(alpha, beta).unwrap();
        prop_assert!(fp.small_data);
        let (_, _, l2) = fp.roots.unwrap();
        let map = |x: f64| alpha * (x * x * x + beta);
        prop_assert!((map(l2) - l2).abs() <= 1e-12 * (1.0 + l2.abs()));
        let mut c = alpha * beta;
        for _ in 0..20000 {
            c = map(c);
        }
        prop_assert!((c - l2).abs() <= 1e-9 * (1.0 + l2.abs()));
    }

    #[test]
    fn mirror_is_an_involution(v in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 8..40)) {
        let mut d = SigmaData::zeros(0, 5.0, 0.5, v.len());
        for (k, (a, b)) in v.iter().enumerate() {
            d.theta[k] = *a;
            d.xi[k] = *b;
        }
        d.psi_rs = scatter::lattice_derivative(&d.theta, d.drs);
        let mm = scatter::mirror(&scatter::mirror(&d, 1.0), 1.0);
        prop_assert!(mm.rel_diff(&d) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_goursat_superposes(a1 in 0.1f64..1.0, a2 in -1.0f64..-0.1, c in -180.0f64..-150.0) {
        let g = small_setup();
        let b = CoeffB::zero();
        let t1 = bump_profile(&g, c - 15.0, c + 10.0, a1);
        let t2 = bump_profile(&g, -160.0, -125.0, a2);
        let sum = t1.combine(&t2, |x, y| x + y).unwrap();
        let f1 = nullgrid::solve_goursat(&t1, Direction::Past, &b, &g).unwrap();
        let f2 = nullgrid::solve_goursat(&t2, Direction::Past, &b, &g).unwrap();
        let f12 = nullgrid::solve_goursat(&sum, Direction::Past, &b, &g).unwrap();
        let scale = f12.max_abs().max(1e-300);
        for k in 0..f12.values.len() {
            prop_assert!((f12.values[k] - f1.values[k] - f2.values[k]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn goursat_is_deterministic(amp in 0.05f64..0.5, bc in 0.0f64..2.0) {
        let g = small_setup();
        let b = CoeffB::constant(bc);
        let th = bump_profile(&g, -170.0, -130.0, amp);
        let f1 = nullgrid::solve_goursat(&th, Direction::Past, &b, &g).unwrap();
        let f2 = nullgrid::solve_goursat(&th, Direction::Past, &b, &g).unwrap();
        prop_assert_eq!(f1.values, f2.values);
    }

    #[test]
    fn field_vanishes_before_the_support(a in -190.0f64..-160.0, w in 10.0f64..25.0) {
        let g = small_setup();
        let th = bump_profile(&g, a, a + w, 1.0);
        let f = nullgrid::solve_goursat(&th, Direction::Past, &CoeffB::constant(1.0), &g).unwrap();
        // past-directed: nothing happens at retarded times later than the support
        for i in 0..f.nx {
            if f.x(i) > a + w + g.du() {
                for j in 0..f.ny {
                    prop_assert!(f.at(i, j).abs() <= 1e-13);
                }
            }
        }
    }
}
