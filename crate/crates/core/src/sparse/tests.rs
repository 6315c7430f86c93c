use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::basis::{DomainScaling, TensorBasis};
use crate::constraints::{parse_expr, ConstraintKind, EqualityConstraint, ParseContext};
use crate::sampling::{lhs_box, substream};
use crate::surrogate::ols_solve;
use crate::trainer::Weighting;

fn random_design(seed: u64, n: usize, m: usize, with_constant: bool) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = substream(seed, "lar");
    let a = DMatrix::from_fn(n, m, |_, j| if with_constant && j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    (a, y)
}

/// Brute-force scan: the column with the largest |corr| against the
/// centered response.
fn most_correlated(a: &DMatrix<f64>, y: &[f64], skip: usize) -> usize {
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let mut best = (0, -1.0);
    for j in skip..a.ncols() {
        let col: Vec<f64> = a.column(j).iter().copied().collect();
        let cm = col.iter().sum::<f64>() / n;
        let num: f64 = col.iter().zip(y).map(|(c, v)| (c - cm) * (v - ym)).sum();
        let den: f64 = col.iter().map(|c| (c - cm).powi(2)).sum::<f64>().sqrt();
        let r = (num / den).abs();
        if r > best.1 {
            best = (j, r);
        }
    }
    best.0
}

#[test]
fn first_entry_matches_correlation_scan() {
    for seed in 0..20 {
        let (a, y) = random_design(seed, 40, 12, true);
        let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
        assert_eq!(path.entry_order[0], 0);
        assert_eq!(path.entry_order[1], most_correlated(&a, &y, 1), "seed {seed}");
    }
}

#[test]
fn endpoint_is_least_squares() {
    for (seed, constant) in [(1, true), (2, false), (3, true)] {
        let (a, y) = random_design(seed, 50, 15, constant);
        let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
        assert_eq!(path.len(), 15);
        let ols = ols_solve(&a, &y).unwrap();
        let last = path.coefficients.last().unwrap();
        for (u, v) in last.iter().zip(&ols) {
            assert!((u - v).abs() < 1e-8, "{u} vs {v}");
        }
    }
}

#[test]
fn polynomial_design_endpoint() {
    let scaling = DomainScaling::uniform(&[(0.0, 1.0), (-1.0, 2.0)]).unwrap();
    let basis = TensorBasis::total_degree(scaling, 5).unwrap();
    let pts = lhs_box(60, &[(0.0, 1.0), (-1.0, 2.0)], &mut substream(4, "p"));
    let y: Vec<f64> = pts.iter().map(|p| (p[0] * 3.0).sin() * p[1].exp()).collect();
    let a = build_design_matrix(&basis, &pts, None).unwrap();
    let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
    assert_eq!(path.len(), basis.len());
    let ols = ols_solve(&a, &y).unwrap();
    let last = path.coefficients.last().unwrap();
    for (u, v) in last.iter().zip(&ols) {
        assert!((u - v).abs() < 1e-8);
    }
}

#[test]
fn single_candidate() {
    let a = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
    let y = [1.0, 1.5, 3.5, 4.0];
    let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
    assert_eq!(path.len(), 1);
    let want = (1.0 + 3.0 + 10.5 + 16.0) / 30.0;
    assert!((path.coefficients[0][0] - want).abs() < 1e-14);

    let c = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
    let path = lar_path(&c, &[1.0, 2.0, 6.0], &LarOptions::default()).unwrap();
    assert_eq!(path.entry_order, vec![0]);
    assert!((path.coefficients[0][0] - 3.0).abs() < 1e-14);
}

#[test]
fn duplicate_columns_are_skipped_deterministically() {
    let (mut a, y) = random_design(5, 30, 6, true);
    let dup = a.column(2).clone_owned();
    a = a.insert_column(6, 0.0);
    a.set_column(6, &(dup * 3.0));
    let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
    // One of the pair enters, the other is recorded as dependent.
    let has2 = path.entry_order.contains(&2);
    let has6 = path.entry_order.contains(&6);
    assert!(has2 ^ has6);
    assert!(path.degenerate.contains(if has2 { &6 } else { &2 }));
    assert_eq!(path, lar_path(&a, &y, &LarOptions::default()).unwrap());
}

#[test]
fn too_few_rows() {
    let a = DMatrix::from_element(1, 3, 1.0);
    assert!(matches!(lar_path(&a, &[1.0], &LarOptions::default()), Err(Error::InvalidInput(_))));
}

#[test]
fn max_steps_truncates() {
    let (a, y) = random_design(6, 30, 10, true);
    let full = lar_path(&a, &y, &LarOptions::default()).unwrap();
    let short = lar_path(&a, &y, &LarOptions { max_steps: Some(4) }).unwrap();
    assert_eq!(short.entry_order, full.entry_order[..4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn path_is_nested_and_correlations_decrease(seed in 0u64..1000, m in 2usize..12) {
        let (a, y) = random_design(seed, 25, m, seed % 2 == 0);
        let path = lar_path(&a, &y, &LarOptions::default()).unwrap();
        let mut seen = std::collections::HashSet::new();
        for j in &path.entry_order {
            prop_assert!(seen.insert(*j));
        }
        prop_assert_eq!(path.coefficients.len(), path.len());
        // Coefficients are zero outside the active prefix.
        for (s, coef) in path.coefficients.iter().enumerate() {
            for (j, c) in coef.iter().enumerate() {
                if !path.entry_order[..=s].contains(&j) {
                    prop_assert_eq!(*c, 0.0);
                }
            }
        }
        for w in path.correlations.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }
}

// Sparse loop.

fn toy(seed: u64) -> (SurrogateModel, TrainingData) {
    let bounds = [(0.0, 1.0), (0.0, 1.0)];
    let basis = TensorBasis::total_degree(DomainScaling::uniform(&bounds).unwrap(), 6).unwrap();
    let model = SurrogateModel::zeros(basis, vec!["x".into(), "y".into()], 2).unwrap();
    let pts = lhs_box(60, &bounds, &mut substream(seed, "toy"));
    let ys = pts.iter().map(|p| 1.0 + 2.0 * p[0] - p[1] * p[1] + 0.5 * p[0] * p[1]).collect();
    (model, TrainingData::from_points(pts, ys).unwrap())
}

#[test]
fn infinite_tau_stops_after_one_round() {
    let (model, data) = toy(1);
    let cfg = SparseConfig { tau: f64::INFINITY, p_min: Some(4), step: Some(3), cap: None };
    let (m, report) = sparse_pc2_train(&model, &TrainConfig::default(), &data, &ConstraintSet::default(), &cfg).unwrap();
    assert_eq!(m.len(), 4);
    assert_eq!(report.iterations.len(), 1);
    assert!(!report.above_threshold);
}

#[test]
fn zero_like_tau_exhausts_the_basis() {
    let (model, data) = toy(2);
    let cfg = SparseConfig { tau: 1e-300, p_min: Some(5), step: Some(7), cap: None };
    let (m, report) = sparse_pc2_train(&model, &TrainConfig::default(), &data, &ConstraintSet::default(), &cfg).unwrap();
    assert_eq!(m.len(), model.len());
    assert!(report.above_threshold);
    let ks: Vec<usize> = report.iterations.iter().map(|i| i.k).collect();
    assert_eq!(ks, vec![5, 12, 19, 26, 28]);
}

#[test]
fn exact_polynomial_found_with_few_terms() {
    let (model, data) = toy(3);
    let cfg = SparseConfig { tau: 1e-12, p_min: Some(4), step: Some(1), cap: None };
    let (m, report) = sparse_pc2_train(&model, &TrainConfig::default(), &data, &ConstraintSet::default(), &cfg).unwrap();
    // Target spans {1, x, y, y^2, xy} in Legendre terms.
    assert_eq!(m.len(), 5, "{:?}", report.to_csv());
    let mut sel: Vec<Vec<u16>> = m.indices().iter().map(|a| a.to_vec()).collect();
    sel.sort();
    assert_eq!(sel, vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![1, 1]]);
}

#[test]
fn loss_is_monotone_in_k_with_constraints() {
    let bounds = [(0.0, 1.0), (0.0, 0.5)];
    let basis = TensorBasis::total_degree(DomainScaling::uniform(&bounds).unwrap(), 7).unwrap();
    let model = SurrogateModel::zeros(basis, vec!["x".into(), "t".into()], 2).unwrap();
    let nu = 0.1;
    let exact = |x: f64, t: f64| (std::f64::consts::PI * x).sin() * (-nu * std::f64::consts::PI.powi(2) * t).exp();
    let pts = lhs_box(40, &bounds, &mut substream(7, "d"));
    let ys = pts.iter().map(|p| exact(p[0], p[1])).collect();
    let data = TrainingData::from_points(pts, ys).unwrap();
    let ctx = ParseContext::new(vec!["x".into(), "t".into()]).with_param("nu", nu);
    let cs = ConstraintSet {
        equalities: vec![EqualityConstraint {
            kind: ConstraintKind::Pde,
            label: "PDE".into(),
            expr: parse_expr("(- (dt u) (* nu (dxx u)))", &ctx).unwrap(),
            points: lhs_box(80, &bounds, &mut substream(7, "c")),
        }],
        inequalities: vec![],
    };
    let tc = TrainConfig { weighting: Weighting::Fixed([1.0, 0.1, 0.0, 0.0]), ..TrainConfig::default() };
    let cfg = SparseConfig { tau: 1e-300, p_min: Some(3), step: Some(4), cap: None };
    let (_, report) = sparse_pc2_train(&model, &tc, &data, &cs, &cfg).unwrap();
    let totals: Vec<f64> = report.iterations.iter().map(|i| i.losses.total()).collect();
    for w in totals.windows(2) {
        assert!(w[1] <= w[0] + 1e-8, "{totals:?}");
    }
    assert!(report.to_csv().lines().count() == report.iterations.len() + 1);
}

#[test]
fn requires_data_and_valid_config() {
    let (model, data) = toy(4);
    let empty = TrainingData::new(vec![]).unwrap();
    let cs = ConstraintSet::default();
    let tc = TrainConfig::default();
    assert!(sparse_pc2_train(&model, &tc, &empty, &cs, &SparseConfig::new(1.0)).is_err());
    assert!(sparse_pc2_train(&model, &tc, &data, &cs, &SparseConfig::new(0.0)).is_err());
    let bad = SparseConfig { cap: Some(1000), ..SparseConfig::new(1.0) };
    assert!(sparse_pc2_train(&model, &tc, &data, &cs, &bad).is_err());
}

#[test]
fn default_increments() {
    assert_eq!(SparseConfig::new(1.0).resolve(286, 3).unwrap(), (10, 6, 286));
    assert_eq!(SparseConfig::new(1.0).resolve(8, 3).unwrap(), (8, 5, 8));
    assert_eq!(SparseConfig::new(1.0).resolve(2000, 15).unwrap(), (16, 40, 2000));
}
