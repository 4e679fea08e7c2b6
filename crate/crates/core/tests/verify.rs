use ncde::bounds::{discretization_constant, m_theta, ParamSpace};
use ncde::model::{Activation, ModelParams};
use ncde::paths::SamplingGrid;
use ncde::rng::stream_rng;
use ncde::verify::*;

fn spaces() -> Vec<ParamSpace> {
    let r = ParamSpace::reference();
    vec![
        r,
        ParamSpace { b_a: 2.0, b_b: 0.5, q: 2, l_x: 2.0, b_phi: 0.5, ..r },
        ParamSpace { b_a: 0.5, b_b: 2.0, b_u: 3.0, b_v: 2.0, q: 3, p: 2, d: 3, l_x: 0.5, b_x: 3.0, ..r },
        ParamSpace { b_a: 3.0, b_b: 1.5, b_phi: 2.0, p: 4, d: 1, l_x: 1.5, ..r },
    ]
}

fn assert_passed(r: &CheckResult) {
    println!("{}", r.summary());
    assert!(r.passed(), "{} worst case: {}", r.summary(), r.worst_case);
    assert!(r.trials > 0);
}

#[test]
fn output_bound_holds() {
    for (i, s) in spaces().iter().enumerate() {
        assert_passed(&check_output_bound(s, 500, 10 + i as u64));
    }
}

#[test]
fn field_lipschitz_holds() {
    for (i, s) in spaces().iter().enumerate() {
        assert_passed(&check_field_lipschitz(s, 500, 20 + i as u64));
    }
}

#[test]
fn flow_continuity_holds_in_every_family() {
    for (i, s) in spaces().iter().enumerate() {
        let by_family = check_flow_continuity_by_family(s, 200, 30 + i as u64);
        assert_eq!(by_family.len(), 4);
        for r in &by_family {
            assert_passed(r);
        }
    }
}

#[test]
fn printed_flow_form_is_reported() {
    let r = check_flow_continuity_printed_form(&spaces()[1], 100, 3);
    println!("{}", r.summary());
    assert_eq!(r.trials, 100);
}

#[test]
fn param_lipschitz_holds() {
    for (i, s) in spaces().iter().enumerate() {
        assert_passed(&check_param_lipschitz(s, 400, 40 + i as u64));
    }
}

#[test]
fn outcome_and_approximation_bounds_hold() {
    for (i, s) in spaces().iter().enumerate() {
        assert_passed(&check_outcome_bound(s, 400, 50 + i as u64));
        assert_passed(&check_approximation_bias(s, 400, 60 + i as u64));
    }
}

#[test]
fn gradients_match_finite_differences() {
    assert_passed(&check_gradients(30, 7));
}

#[test]
fn checks_are_deterministic() {
    let s = spaces()[1];
    assert_eq!(check_output_bound(&s, 50, 1), check_output_bound(&s, 50, 1));
    assert_eq!(check_flow_continuity(&s, 40, 2), check_flow_continuity(&s, 40, 2));
}

#[test]
fn discretization_gap_within_linear_bound() {
    let space = ParamSpace::reference();
    let mut rng = stream_rng(5, 0);
    let model = sample_params_in(&space, Activation::Tanh, &mut rng);
    let grid = SamplingGrid::uniform(1024).unwrap();
    let paths: Vec<_> = (0..8)
        .map(|_| random_lipschitz_path_on(&grid, space.d, space.l_x, space.b_x, &mut rng))
        .collect();
    let table = check_discretization_scaling(&space, &model, &paths, &[4, 16, 64, 256]).unwrap();
    assert_eq!(table.violations(), 0, "{table:?}");
    let c = discretization_constant(&space, m_theta(&space));
    for row in &table.rows {
        assert!((row.bound / row.mesh - c).abs() <= 1e-12 * c);
    }
}

#[test]
fn discretization_rejects_bad_ladder() {
    let space = ParamSpace::reference();
    let model = ModelParams::zeros(ncde::model::Dims { q: 1, p: 3, d: 2 }, Activation::Tanh);
    let grid = SamplingGrid::uniform(8).unwrap();
    let mut rng = stream_rng(1, 1);
    let paths = vec![random_lipschitz_path_on(&grid, 2, 1.0, 1.0, &mut rng)];
    assert!(check_discretization_scaling(&space, &model, &paths, &[16]).is_err());
    assert!(check_discretization_scaling(&space, &model, &[], &[4]).is_err());
}

#[test]
fn teacher_labels_are_reproducible_and_bounded_noise() {
    let space = ParamSpace::reference();
    let mut rng = stream_rng(9, 0);
    let teacher = TeacherModel {
        params: sample_params_in(&space, Activation::Tanh, &mut rng),
        noise_bound: 0.1,
        noise_seed: 4,
    };
    let paths: Vec<_> = (0..5).map(|_| random_lipschitz_path(6, 2, 1.0, 1.0, &mut rng)).collect();
    let a = teacher_generate(&teacher, &paths).unwrap();
    let b = teacher_generate(&teacher, &paths).unwrap();
    assert_eq!(a.iter().map(|x| x.1).collect::<Vec<_>>(), b.iter().map(|x| x.1).collect::<Vec<_>>());
    for ((_, y), p) in a.iter().zip(&paths) {
        let clean = ncde::model::predict(&teacher.params, p).unwrap();
        assert!((y - clean).abs() <= 0.1);
    }
}

#[test]
fn sup_field_gap_estimate_grows_with_probes() {
    let space = ParamSpace::reference();
    let mut rng = stream_rng(2, 0);
    let a = sample_params_in(&space, Activation::Tanh, &mut rng);
    let b = sample_params_in(&space, Activation::Tanh, &mut rng);
    let small = estimate_sup_field_gap(&a.vf, &b.vf, Activation::Tanh, 2.0, 10, 3).unwrap();
    let large = estimate_sup_field_gap(&a.vf, &b.vf, Activation::Tanh, 2.0, 100, 3).unwrap();
    assert!(large >= small);
    assert_eq!(estimate_sup_field_gap(&a.vf, &a.vf, Activation::Tanh, 2.0, 10, 3).unwrap(), 0.0);
}
