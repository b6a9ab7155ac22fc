use approx::assert_relative_eq;
use cda_core::baselines::fit_linear_cca;
use cda_core::dataset::{generate_synthetic, DataSet, RelationKind, SyntheticSpec};
use cda_core::divergence::{mallows_value, DivergenceSpec, ProjectedSamples};
use cda_core::evaluation::subspace_error;
use cda_core::linalg::span_basis;
use cda_core::solver::{fit, project, Formulation, PairCount, Side, SolverConfig};
use cda_core::Error;
use proptest::prelude::*;

fn small(relation: RelationKind, seed: u64) -> (DataSet, DataSet, cda_core::dataset::GroundTruth) {
    generate_synthetic(&SyntheticSpec::paired(relation, 150, 7, 5, seed)).unwrap()
}

fn quick(formulation: Formulation, divergence: DivergenceSpec) -> SolverConfig {
    let mut cfg = SolverConfig::new(formulation, divergence);
    cfg.restarts = 1;
    cfg.max_outer_iters = 40;
    cfg.seed = 11;
    cfg
}

fn column(m: &cda_core::DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

#[test]
fn reported_objectives_match_projections() {
    let (x, y, _) = small(RelationKind::Linear, 1);
    let basis = fit(&x, &y, &quick(Formulation::Cda, DivergenceSpec::mallows())).unwrap();
    let (zx, zy) = (project(&basis, &x, Side::X).unwrap(), project(&basis, &y, Side::Y).unwrap());
    assert_eq!(zx.ncols(), basis.r());
    for j in 0..basis.r() {
        let s = ProjectedSamples::new(column(&zx, j), column(&zy, j)).unwrap();
        assert_relative_eq!(mallows_value(&s, 2).unwrap(), basis.objectives[j], epsilon = 1e-9, max_relative = 1e-9);
    }
}

#[test]
fn cda_columns_are_orthonormal() {
    let (x, y, _) = small(RelationKind::Mixed, 2);
    let mut cfg = quick(Formulation::Cda, DivergenceSpec::quadratic());
    cfg.r_pairs = PairCount::Fixed(3);
    let basis = fit(&x, &y, &cfg).unwrap();
    assert_eq!(basis.r(), 3);
    let gram = basis.u.transpose() * &basis.u;
    assert_relative_eq!(gram, cda_core::DMatrix::identity(3, 3), epsilon = 1e-9);
}

#[test]
fn ground_truth_has_zero_error_against_itself() {
    let (_, _, gt) = small(RelationKind::Nonlinear, 3);
    let e = subspace_error(&span_basis(&gt.u), &span_basis(&gt.v), &gt).unwrap();
    assert!(e.abs() < 1e-10, "{e}");
}

#[test]
fn cca_needs_matching_rows() {
    let mut spec = SyntheticSpec::paired(RelationKind::Linear, 120, 7, 5, 4);
    spec.drop_fraction = 0.1;
    let (x, y, _) = generate_synthetic(&spec).unwrap();
    assert!(matches!(fit_linear_cca(&x, &y), Err(Error::NoCorrespondence { .. })));

    let (x, y, _) = small(RelationKind::Linear, 4);
    let cca = fit_linear_cca(&x, &y).unwrap();
    assert!(cca.correlations.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    assert!(cca.correlations.iter().all(|c| (-1e-12..=1.0 + 1e-12).contains(c)));
}

#[test]
fn same_seed_same_basis() {
    let (x, y, _) = small(RelationKind::Linear, 5);
    let cfg = quick(Formulation::Rcda, DivergenceSpec::mallows());
    let a = fit(&x, &y, &cfg).unwrap();
    let b = fit(&x, &y, &cfg).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.v, b.v);
    assert_eq!(a.objectives, b.objectives);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn row_permutations_do_not_change_the_fit(seed in 0u64..1000, rot in 1usize..149) {
        let (x, y, _) = small(RelationKind::Linear, seed);
        let perm: Vec<usize> = (0..x.n_rows()).map(|i| (i + rot) % x.n_rows()).collect();
        let cfg = quick(Formulation::Rcda, DivergenceSpec::mallows());
        let a = fit(&x, &y, &cfg).unwrap();
        let b = fit(&x.select_rows(&perm), &y, &cfg).unwrap();
        prop_assert_eq!(a.u, b.u);
        prop_assert_eq!(a.objectives, b.objectives);
    }
}
