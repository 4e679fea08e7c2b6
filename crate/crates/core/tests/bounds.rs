use ncde::bounds::*;
use ncde::training::{LossKind, LossSpec};
use proptest::prelude::*;

const E: f64 = std::f64::consts::E;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn unit_loss() -> LossSpec {
    LossSpec { kind: LossKind::SquaredError, lipschitz_const: 1.0, sup_bound: 1.0 }
}

// Golden values below were produced by a standalone Python evaluation of
// the closed forms and then frozen.

#[test]
fn reference_output_bounds() {
    let s = ParamSpace::reference();
    assert!(rel(m_theta(&s), 3.0 * E) < 1e-14);
    let g = GridSpec::uniform(100).unwrap();
    assert!(rel(m_theta_d(&s, &g), 8.114441488264585) < 1e-12);
}

#[test]
fn reference_capacity_constants() {
    let s = ParamSpace::reference();
    let (k1, k2) = capacity_constants(&s, InputKind::Continuous);
    assert!(rel(k1, 3.0 * E) < 1e-14);
    assert!(rel(k2, 3.0 * E * E) < 1e-14);
    let lip = parameter_lipschitz_constants(&s);
    assert!(rel(lip.c_b, E) < 1e-14);
    assert!(rel(lip.c_u, E) < 1e-14);
    assert!(rel(lip.c_v, E) < 1e-14);
}

#[test]
fn reference_rademacher_golden() {
    let s = ParamSpace::reference();
    let cases = [
        (100, 351.8755469922931),
        (1_000, 118.18364752242961),
        (10_000, 39.43900160339713),
        (100_000, 13.092647395054613),
    ];
    for (n, want) in cases {
        let got = rademacher_bound(&s, InputKind::Continuous, n, CapacityVariant::Appendix).unwrap();
        assert!(rel(got, want) < 1e-12, "n={n}: {got} vs {want}");
    }
}

#[test]
fn reference_generalization_golden() {
    let s = ParamSpace::reference();
    let g = GridSpec::uniform(100).unwrap();
    let got = generalization_bound(&s, &g, 10_000, 0.05, &unit_loss()).unwrap();
    assert!(rel(got, 39.24679647824578) < 1e-12, "{got}");
}

#[test]
fn reference_covering_golden() {
    let s = ParamSpace::reference();
    let got = covering_number_log(&s, InputKind::Continuous, 0.5, CapacityVariant::Appendix).unwrap();
    assert!(rel(got, 240.3370843896323) < 1e-12, "{got}");
}

#[test]
fn rademacher_rate_is_near_inverse_sqrt() {
    let s = ParamSpace::reference();
    let r = |n| rademacher_bound(&s, InputKind::Continuous, n, CapacityVariant::Appendix).unwrap();
    let ratio = r(40_000) / r(10_000);
    assert!(ratio > 0.45 && ratio < 0.62, "{ratio}");
    assert!(r(1_000) > r(10_000) && r(10_000) > r(100_000));
}

#[test]
fn kappa_matches_geometric_closed_form() {
    for q in 1..=5 {
        for &(ls, ba, bb) in &[(1.0, 0.5, 2.0), (0.7, 2.0, 1.5), (1.0, 1.0, 1.0)] {
            let s = ParamSpace { q, l_sigma: ls, b_a: ba, b_b: bb, ..ParamSpace::reference() };
            let r: f64 = ls * ba;
            let closed = if (r - 1.0).abs() < 1e-15 {
                ls * bb * q as f64
            } else {
                ls * bb * (1.0 - r.powi(q as i32)) / (1.0 - r)
            };
            assert!(rel(kappa0(&s), closed) < 1e-12, "q={q} r={r}");
        }
    }
}

#[test]
fn delta_outside_unit_interval_is_rejected() {
    let s = ParamSpace::reference();
    let g = GridSpec::uniform(100).unwrap();
    for delta in [0.0, 1.0, -0.1, 2.0, f64::NAN] {
        assert!(generalization_bound(&s, &g, 1000, delta, &unit_loss()).is_err());
    }
}

#[test]
fn discretization_bias_is_linear_in_mesh() {
    let s = ParamSpace::reference();
    let m = m_theta(&s);
    let base = discretization_bias_bound(&s, 1.0, m, 1e-3);
    for k in [2.0, 7.0, 64.0] {
        let v = discretization_bias_bound(&s, 1.0, m, k * 1e-3);
        assert!(rel(v, k * base) < 1e-12);
    }
}

fn space() -> impl Strategy<Value = ParamSpace> {
    (0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0, 0.1f64..3.0, 1usize..4, 1usize..6, 1usize..4)
        .prop_map(|(b_a, b_b, b_u, b_v, b_phi, q, p, d)| ParamSpace {
            b_a,
            b_b,
            b_u,
            b_v,
            b_phi,
            q,
            p,
            d,
            l_sigma: 1.0,
            l_x: 1.0,
            b_x: 1.0,
        })
}

proptest! {
    #[test]
    fn covering_decreases_in_eta(s in space(), eta in 1e-3f64..10.0, f in 1.01f64..10.0) {
        let a = covering_number_log(&s, InputKind::Continuous, eta, CapacityVariant::Appendix).unwrap();
        let b = covering_number_log(&s, InputKind::Continuous, eta * f, CapacityVariant::Appendix).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn covering_increases_in_width(s in space(), eta in 1e-3f64..10.0) {
        let wider = ParamSpace { p: s.p + 1, ..s };
        let a = covering_number_log(&s, InputKind::Continuous, eta, CapacityVariant::Appendix).unwrap();
        let b = covering_number_log(&wider, InputKind::Continuous, eta, CapacityVariant::Appendix).unwrap();
        prop_assert!(b >= a);
    }

    #[test]
    fn generalization_complexity_is_linear_in_loss_lipschitz(s in space(), l in 0.1f64..10.0) {
        let g = GridSpec::uniform(50).unwrap();
        let zero = LossSpec { sup_bound: 0.0, ..unit_loss() };
        let one = generalization_bound(&s, &g, 10_000, 0.05, &zero).unwrap();
        let scaled = generalization_bound(&s, &g, 10_000, 0.05, &LossSpec { lipschitz_const: l, ..zero }).unwrap();
        prop_assert!(rel(scaled, l * one) < 1e-12);
    }

    #[test]
    fn discrete_output_bound_below_continuous_limit(s in space(), k in 1usize..2000) {
        let g = GridSpec::uniform(k).unwrap();
        prop_assert!(m_theta_d(&s, &g) <= m_theta(&s) * (1.0 + 1e-12));
    }

    #[test]
    fn rademacher_decreases_in_n(s in space(), n in 1_000usize..100_000) {
        let a = rademacher_bound(&s, InputKind::Continuous, n, CapacityVariant::Appendix).unwrap();
        let b = rademacher_bound(&s, InputKind::Continuous, 4 * n, CapacityVariant::Appendix).unwrap();
        prop_assert!(b < a);
    }
}
