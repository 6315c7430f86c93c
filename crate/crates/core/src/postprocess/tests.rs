use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::basis::{Marginal, TensorBasis};

fn model_with(marginals: Vec<Marginal>, p: usize, n_phys: usize, coef: Option<Vec<f64>>, seed: u64) -> SurrogateModel {
    let dims = marginals.len();
    let basis = TensorBasis::total_degree(DomainScaling::new(marginals).unwrap(), p).unwrap();
    let coef = coef.unwrap_or_else(|| {
        let mut rng = substream(seed, "coef");
        (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
    });
    let names = (0..dims).map(|i| format!("v{i}")).collect();
    SurrogateModel::new(basis, coef, names, n_phys).unwrap()
}

fn xt_xi(p: usize, seed: u64) -> SurrogateModel {
    model_with(
        vec![
            Marginal::Uniform { lower: 0.0, upper: 1.0 },
            Marginal::Uniform { lower: 0.0, upper: 2.0 },
            Marginal::Normal { mean: 1.0, std_dev: 0.5 },
        ],
        p,
        2,
        None,
        seed,
    )
}

#[test]
fn three_dim_partition() {
    let set = MultiIndexSet::total_degree(3, 2).unwrap();
    let part = partition_indices(&set, 2).unwrap();
    assert_eq!(part.stochastic, vec![vec![0], vec![1], vec![2]]);
    let t: Vec<Vec<Vec<u16>>> = part.physical.iter().map(|g| g.iter().map(|(a, _)| a.clone()).collect()).collect();
    assert_eq!(
        t[0],
        vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]]
    );
    assert_eq!(t[1], vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    assert_eq!(t[2], vec![vec![0, 0]]);
}

#[test]
fn three_dim_reduced_coefficients() {
    // Orthonormal Legendre on [-1, 1] written out by hand.
    let l1 = |z: f64| 3f64.sqrt() * z;
    let l2 = |z: f64| 5f64.sqrt() * (3.0 * z * z - 1.0) / 2.0;
    let m = model_with(vec![Marginal::Uniform { lower: -1.0, upper: 1.0 }; 3], 2, 2, None, 3);
    let (x, t) = (0.3, -0.7);
    let c = |a: [u16; 3]| {
        let pos = m.indices().iter().position(|b| b == a).unwrap();
        m.coefficients()[pos]
    };
    let y0 = c([0, 0, 0])
        + c([0, 1, 0]) * l1(t)
        + c([1, 0, 0]) * l1(x)
        + c([0, 2, 0]) * l2(t)
        + c([1, 1, 0]) * l1(x) * l1(t)
        + c([2, 0, 0]) * l2(x);
    let y1 = c([0, 0, 1]) + c([0, 1, 1]) * l1(t) + c([1, 0, 1]) * l1(x);
    let y2 = c([0, 0, 2]);
    let r = reduce(&m, &[x, t]).unwrap();
    for (got, want) in r.coefficients.iter().zip([y0, y1, y2]) {
        assert!((got - want).abs() < 1e-14);
    }
}

#[test]
fn no_physical_dimensions() {
    let set = MultiIndexSet::total_degree(2, 3).unwrap();
    let part = partition_indices(&set, 0).unwrap();
    assert_eq!(part.len(), set.len());
    for (i, g) in part.physical.iter().enumerate() {
        assert_eq!(g, &vec![(vec![], i)]);
    }
    assert!(partition_indices(&set, 2).is_err());
}

#[test]
fn reduce_commutes_with_evaluation() {
    let m = xt_xi(5, 1);
    let mut rng = substream(1, "xi");
    for _ in 0..10 {
        let xp = [rng.random_range(0.0..1.0), rng.random_range(0.0..2.0)];
        let r = reduce(&m, &xp).unwrap();
        for _ in 0..100 {
            let xi: f64 = rng.random_range(-1.0..3.0);
            let full = m.evaluate(&[xp[0], xp[1], xi]).unwrap();
            assert!((r.evaluate(&[xi]).unwrap() - full).abs() < 1e-12);
        }
    }
    assert!(matches!(reduce(&m, &[0.1]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn simple_moments() {
    let constant = model_with(vec![Marginal::Uniform { lower: 0.0, upper: 1.0 }; 2], 2, 1, Some(vec![4.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0);
    let r = reduce(&constant, &[0.4]).unwrap();
    assert_eq!(r.indices[0], vec![0]);
    assert_eq!(r.coefficients[0], 4.0);
    assert!(r.coefficients[1..].iter().all(|&c| c == 0.0));

    let one = model_with(vec![Marginal::Normal { mean: 0.0, std_dev: 1.0 }], 1, 0, Some(vec![2.0, 3.0]), 0);
    assert_eq!(conditional_moments(&one, &[]).unwrap(), (2.0, 9.0));
}

#[test]
fn purely_physical_model_has_no_variance() {
    let mut m = xt_xi(3, 2);
    let c: Vec<f64> = m
        .indices()
        .iter()
        .zip(m.coefficients())
        .map(|(a, c)| if a[2] == 0 { *c } else { 0.0 })
        .collect();
    m.set_coefficients(c).unwrap();
    for xp in [[0.1, 0.2], [0.9, 1.7]] {
        assert_eq!(conditional_moments(&m, &xp).unwrap().1, 0.0);
        assert!(matches!(sobol_indices(&m, &xp), Err(Error::ZeroVariance)));
    }
}

#[test]
fn moments_match_monte_carlo() {
    let m = xt_xi(4, 5);
    let xp = [0.35, 1.2];
    let (mean, var) = conditional_moments(&m, &xp).unwrap();
    let s = sample_reduced(&reduce(&m, &xp).unwrap(), 1_000_000, 9).unwrap();
    let n = s.len() as f64;
    let mc_mean = s.iter().sum::<f64>() / n;
    let c2: Vec<f64> = s.iter().map(|v| (v - mc_mean).powi(2)).collect();
    let mc_var = c2.iter().sum::<f64>() / (n - 1.0);
    let m4 = c2.iter().map(|v| v * v).sum::<f64>() / n;
    assert!((mc_mean - mean).abs() < 3.0 * (var / n).sqrt());
    assert!((mc_var - var).abs() < 3.0 * ((m4 - mc_var * mc_var) / n).sqrt());
}

/// Jansen pick-freeze estimators on the surrogate.
fn pick_freeze(r: &ReducedExpansion, n: usize) -> (Vec<f64>, Vec<f64>) {
    let d = r.scaling().dims();
    let mut rng = substream(11, "pf");
    let a = random_marginals(n, r.scaling().marginals(), &mut rng);
    let b = random_marginals(n, r.scaling().marginals(), &mut rng);
    let fa: Vec<f64> = a.iter().map(|x| r.evaluate(x).unwrap()).collect();
    let fb: Vec<f64> = b.iter().map(|x| r.evaluate(x).unwrap()).collect();
    let mean = fa.iter().sum::<f64>() / n as f64;
    let var = fa.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let mut first = vec![0.0; d];
    let mut total = vec![0.0; d];
    for i in 0..d {
        let mut s1 = 0.0;
        let mut st = 0.0;
        for k in 0..n {
            let mut abi = a[k].clone();
            abi[i] = b[k][i];
            let f = r.evaluate(&abi).unwrap();
            s1 += (fb[k] - f).powi(2);
            st += (fa[k] - f).powi(2);
        }
        first[i] = 1.0 - s1 / (2.0 * n as f64 * var);
        total[i] = st / (2.0 * n as f64 * var);
    }
    (first, total)
}

#[test]
fn sobol_matches_pick_freeze() {
    let m = model_with(
        vec![
            Marginal::Uniform { lower: 0.0, upper: 1.0 },
            Marginal::Uniform { lower: -1.0, upper: 1.0 },
            Marginal::Normal { mean: 0.0, std_dev: 1.0 },
        ],
        3,
        1,
        None,
        21,
    );
    let r = reduce(&m, &[0.6]).unwrap();
    let s = r.sobol().unwrap();
    let (first, total) = pick_freeze(&r, 100_000);
    for i in 0..2 {
        assert!((s.first[i] - first[i]).abs() < 0.02, "{:?} vs {:?}", s.first, first);
        assert!((s.total[i] - total[i]).abs() < 0.02, "{:?} vs {:?}", s.total, total);
    }
}

#[test]
fn sobol_special_cases() {
    let m = xt_xi(3, 4);
    let s = sobol_indices(&m, &[0.5, 0.5]).unwrap();
    assert!((s.first[0] - 1.0).abs() < 1e-12 && (s.total[0] - 1.0).abs() < 1e-12);

    // Additive in two inputs: no mixed stochastic index carries weight.
    let mut add = model_with(vec![Marginal::Uniform { lower: 0.0, upper: 1.0 }; 3], 3, 1, None, 6);
    let c: Vec<f64> = add
        .indices()
        .iter()
        .zip(add.coefficients())
        .map(|(a, c)| if a[1] > 0 && a[2] > 0 { 0.0 } else { *c })
        .collect();
    add.set_coefficients(c).unwrap();
    let s = sobol_indices(&add, &[0.2]).unwrap();
    assert!((s.first.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(s.first, s.total);
    assert!(s.to_csv(&["a".into(), "b".into()]).starts_with("dimension,S,S_T\na,"));
}

#[test]
fn density_examples() {
    let constant = model_with(vec![Marginal::Uniform { lower: 0.0, upper: 1.0 }; 2], 1, 1, Some(vec![1.5, 0.0, 0.0]), 0);
    let d = pdf_estimate(&constant, &[0.5], 2000, DensityMethod::Kernel { bandwidth: None }, 1).unwrap();
    assert_eq!(d.point_mass, Some(1.5));

    let lin = model_with(vec![Marginal::Normal { mean: 0.0, std_dev: 1.0 }], 1, 0, Some(vec![0.5, 2.0]), 0);
    let n = 20_000;
    let d = pdf_estimate(&lin, &[], n, DensityMethod::Kernel { bandwidth: None }, 2).unwrap();
    let mean = d.samples.iter().sum::<f64>() / n as f64;
    let sd = (d.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * 2.0 / (n as f64).sqrt());
    assert!((sd - 2.0).abs() < 3.0 * 2.0 / (2.0 * n as f64).sqrt());
    // The estimate integrates to one.
    let dx = d.grid[1] - d.grid[0];
    let mass: f64 = d.density.iter().sum::<f64>() * dx;
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");

    let h = density_of(d.samples.clone(), DensityMethod::Histogram { bins: 40 }).unwrap();
    assert!((h.density.iter().sum::<f64>() * h.width - 1.0).abs() < 1e-12);
    assert!(pdf_estimate(&lin, &[], 10, DensityMethod::Histogram { bins: 3 }, 0).is_err());
}

#[test]
fn ks_basics() {
    let a: Vec<f64> = (0..100).map(f64::from).collect();
    assert_eq!(ks_statistic(&a, &a), 0.0);
    let b: Vec<f64> = a.iter().map(|v| v + 1000.0).collect();
    assert_eq!(ks_statistic(&a, &b), 1.0);
    let c: Vec<f64> = (0..100).map(|v| f64::from(v) + 50.0).collect();
    assert!((ks_statistic(&a, &c) - 0.5).abs() < 1e-12);
}

#[test]
fn sampling_is_seeded() {
    let m = xt_xi(3, 8);
    let r = reduce(&m, &[0.2, 0.3]).unwrap();
    assert_eq!(sample_reduced(&r, 10_000, 4).unwrap(), sample_reduced(&r, 10_000, 4).unwrap());
    assert_ne!(sample_reduced(&r, 100, 4).unwrap(), sample_reduced(&r, 100, 5).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_is_exact(dims in 1usize..5, p in 0usize..5, seed in 0u64..100) {
        let set = MultiIndexSet::total_degree(dims, p).unwrap();
        let n_phys = (seed as usize) % dims;
        let part = partition_indices(&set, n_phys).unwrap();
        let total: usize = part.physical.iter().map(Vec::len).sum();
        prop_assert_eq!(total, set.len());
        let mut positions: Vec<usize> = part.physical.iter().flatten().map(|(_, p)| *p).collect();
        positions.sort_unstable();
        prop_assert_eq!(positions, (0..set.len()).collect::<Vec<_>>());
        for (s, group) in part.stochastic.iter().zip(&part.physical) {
            for (phys, pos) in group {
                let mut full = phys.clone();
                full.extend(s);
                prop_assert_eq!(full.as_slice(), set.get(*pos));
            }
        }
    }

    #[test]
    fn sobol_bounds(seed in 0u64..500) {
        let m = model_with(vec![Marginal::Uniform { lower: 0.0, upper: 1.0 }; 4], 3, 1, None, seed);
        let s = sobol_indices(&m, &[0.37]).unwrap();
        for (f, t) in s.first.iter().zip(&s.total) {
            prop_assert!(*f >= 0.0 && *f <= *t + 1e-12 && *t <= 1.0 + 1e-12);
        }
        prop_assert!(s.first.iter().sum::<f64>() <= 1.0 + 1e-12);
        prop_assert!(s.total.iter().sum::<f64>() >= 1.0 - 1e-12);
    }
}
