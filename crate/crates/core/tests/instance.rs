mod common;

use hamlet::instance::{densify, embed_csp, gen_random_dense, Clause, CspForm, Diagnostic, LocalTerm};
use hamlet::operator::{kron, CMatrix};
use hamlet::random::{random_density, random_unit_vector, rng_from_seed};
use hamlet::{HermitianOp, LocalHamiltonianInstance, ProductAssignment, PureState};
use proptest::prelude::*;
use rand::Rng;

fn dense_product(inst: &LocalHamiltonianInstance, assign: &ProductAssignment) -> f64 {
    let mut rho = assign.blocks()[0].op().matrix().clone();
    for b in &assign.blocks()[1..] {
        rho = kron(&rho, b.op().matrix());
    }
    (common::dense(inst) * rho).trace().re
}

fn bits_equal(a: &LocalHamiltonianInstance, b: &LocalHamiltonianInstance) -> bool {
    a.n() == b.n()
        && a.terms().len() == b.terms().len()
        && a.terms().iter().zip(b.terms()).all(|(x, y)| {
            x.sites() == y.sites()
                && x.matrix()
                    .matrix()
                    .iter()
                    .zip(y.matrix().matrix().iter())
                    .all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn product_energy_matches_full_space(n in 2usize..=5, k in 1usize..=3, seed in any::<u64>()) {
        let k = k.min(n);
        let inst = gen_random_dense(n, 2, k, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 1);
        let assign = ProductAssignment::new((0..n).map(|_| random_density(2, &mut rng)).collect()).unwrap();
        let e = inst.product_energy(&assign).unwrap();
        prop_assert!((e - dense_product(&inst, &assign)).abs() < 1e-8);
        prop_assert!(e >= -1e-12 && e <= inst.terms().len() as f64 + 1e-12);
    }

    #[test]
    fn pure_energy_matches_quadratic_form(n in 2usize..=4, seed in any::<u64>()) {
        let inst = gen_random_dense(n, 2, 2, seed).unwrap();
        let mut rng = rng_from_seed(seed ^ 2);
        let v = random_unit_vector(1 << n, &mut rng);
        let psi = PureState::new(vec![2; n], v.clone()).unwrap();
        let want = common::quadratic(&common::dense(&inst), &v);
        prop_assert!((inst.pure_energy(&psi).unwrap() - want).abs() < 1e-8);
    }

    #[test]
    fn json_round_trip_is_bit_exact(n in 2usize..=5, d in 2usize..=3, seed in any::<u64>()) {
        let inst = gen_random_dense(n, d, 2, seed).unwrap();
        let text = inst.to_json().unwrap();
        let back = LocalHamiltonianInstance::from_json(&text).unwrap();
        prop_assert!(bits_equal(&inst, &back));
        prop_assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn csp_minimum_equals_exhaustive_min_unsat(n in 3usize..=7, m in 1usize..=14, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut raw = Vec::new();
        for _ in 0..m {
            let width = rng.random_range(1..=3usize.min(n));
            let vars = rand::seq::index::sample(&mut rng, n, width).into_vec();
            raw.push(vars.into_iter().map(|v| (v, rng.random_bool(0.5))).collect::<Vec<_>>());
        }
        let clauses: Vec<Clause> = raw.iter().map(|c| Clause::disjunction(c).unwrap()).collect();
        let emb = embed_csp(n, 2, 3, &clauses, CspForm::Penalty).unwrap();
        let lmin = common::lambda_min(&emb.instance) * emb.scale;
        prop_assert!((lmin - common::min_unsat(n, &raw) as f64).abs() <= 1e-8);
    }

    #[test]
    fn densify_keeps_validity_and_adds_pairs(n in 1usize..=3, m in 0usize..=5, seed in any::<u64>()) {
        let base = if n >= 2 { gen_random_dense(n, 2, 2, seed).unwrap() } else { LocalHamiltonianInstance::empty(1, 2, 2).unwrap() };
        let dense = densify(&base, m).unwrap();
        prop_assert!(dense.is_valid());
        prop_assert_eq!(dense.n(), n + m);
        prop_assert_eq!(dense.terms().len(), base.terms().len() + m * m.saturating_sub(1) / 2);
        prop_assert!(dense.density_value() >= (m * m.saturating_sub(1) / 2) as f64 / 4.0 - 1e-12);
    }
}

#[test]
fn random_instances_are_valid_and_seeded() {
    let a = gen_random_dense(4, 2, 2, 7).unwrap();
    assert_eq!(a.terms().len(), 6);
    assert!(a.is_valid());
    assert!(bits_equal(&a, &gen_random_dense(4, 2, 2, 7).unwrap()));
    assert!(!bits_equal(&a, &gen_random_dense(4, 2, 2, 8).unwrap()));
}

#[test]
fn random_density_is_about_half_per_term() {
    let mean: f64 = (0..50u64).map(|s| gen_random_dense(5, 2, 2, s).unwrap().density_value()).sum::<f64>() / 50.0;
    assert!((mean / 10.0 - 0.5).abs() < 0.05, "mean {mean}");
}

#[test]
fn density_value_of_all_pairs() {
    for n in 2..7 {
        let want = (n * (n - 1) / 2) as f64 / 4.0;
        assert!((common::all_pairs(n).density_value() - want).abs() < 1e-12);
    }
    assert_eq!(LocalHamiltonianInstance::empty(3, 2, 2).unwrap().density_value(), 0.0);
}

#[test]
fn epr_clause_energies() {
    let inst = common::projector_instance(2, vec![0, 1], &common::epr());
    let phi = PureState::new(vec![2, 2], common::epr()).unwrap();
    assert!((inst.pure_energy(&phi).unwrap() - 1.0).abs() < 1e-12);
    assert!((inst.pure_energy(&PureState::basis(vec![2, 2], 0).unwrap()).unwrap() - 0.5).abs() < 1e-12);
    let mixed = ProductAssignment::maximally_mixed(2, 2);
    assert!((inst.product_energy(&mixed).unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn validate_reports_each_violation() {
    let doubled = HermitianOp::from_real_diag(&[2.0, 0.0, 0.0, 0.0]);
    let neg_z = HermitianOp::from_real_diag(&[-1.0, 1.0]);
    let terms = vec![
        LocalTerm::new(vec![0, 1], doubled, 2).unwrap(),
        LocalTerm::new(vec![2], neg_z, 2).unwrap(),
        LocalTerm::new(vec![0, 1], HermitianOp::from_real_diag(&[1.0, 0.0, 0.0, 0.0]), 2).unwrap(),
    ];
    let inst = LocalHamiltonianInstance::unchecked(3, 2, 2, terms).unwrap();
    let diags = inst.validate();
    assert!(diags.iter().any(|d| matches!(d, Diagnostic::NormExceeded { term: 0, .. })));
    assert!(diags.iter().any(|d| matches!(d, Diagnostic::NotPsd { term: 1, .. })));
    assert!(diags.iter().any(|d| matches!(d, Diagnostic::DuplicateSupport { term: 2, first: 0 })));
    assert!(LocalHamiltonianInstance::new(3, 2, 2, inst.terms().to_vec()).is_err());
}

#[test]
fn csp_examples() {
    let c = Clause::disjunction(&[(0, false), (1, false)]).unwrap();
    let emb = embed_csp(2, 2, 2, &[c], CspForm::Penalty).unwrap();
    let m = emb.instance.terms()[0].matrix().matrix().clone();
    let want = CMatrix::from_diagonal(&hamlet::operator::CVector::from_vec(
        [1.0, 0.0, 0.0, 0.0].iter().map(|&v| hamlet::C64::new(v, 0.0)).collect(),
    ));
    assert!((m - want).norm() < 1e-15);

    let both = [Clause::disjunction(&[(0, true)]).unwrap(), Clause::disjunction(&[(0, false)]).unwrap()];
    let emb = embed_csp(1, 2, 1, &both, CspForm::Penalty).unwrap();
    assert!((common::lambda_min(&emb.instance) * emb.scale - 1.0).abs() < 1e-12);
    assert!(embed_csp(3, 2, 1, &[Clause::disjunction(&[(0, true), (2, true)]).unwrap()], CspForm::Penalty).is_err());
}

#[test]
fn densify_examples() {
    let empty = LocalHamiltonianInstance::empty(1, 2, 2).unwrap();
    let d3 = densify(&empty, 3).unwrap();
    assert_eq!(d3.terms().len(), 3);
    assert!((common::lambda_max(&d3) - 3.0).abs() < 1e-9);

    let epr = common::projector_instance(2, vec![0, 1], &common::epr());
    assert!((common::lambda_max(&densify(&epr, 4).unwrap()) - 7.0).abs() < 1e-9);
}

#[test]
fn malformed_json_is_a_parse_error() {
    let text = gen_random_dense(3, 2, 2, 1).unwrap().to_json().unwrap();
    let err = LocalHamiltonianInstance::from_json(&text[..text.len() / 2]).unwrap_err();
    assert!(err.to_string().contains("parse error at line"));
    let minimal = r#"{"n":1,"d":2,"k":1,"terms":[{"sites":[0],"matrix":[[[1,0],[0,0]],[[0,0],[0,0]]]}]}"#;
    let inst = LocalHamiltonianInstance::from_json(minimal).unwrap();
    assert!(inst.is_valid());
    assert!((common::lambda_max(&inst) - 1.0).abs() < 1e-15);
}
