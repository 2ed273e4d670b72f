#![allow(clippy::needless_range_loop)]

use collective_mts::transport::{drain_step, is_optimal, ot, ot_cost, solve};
use collective_mts::{Coupling, MassVector, MetricSpace};
use proptest::prelude::*;

fn metric(n: usize, seed: u64) -> MetricSpace {
    if seed.is_multiple_of(4) {
        MetricSpace::uniform(n).unwrap()
    } else {
        MetricSpace::random_metric(n, seed).unwrap()
    }
}

fn mass_from(n: usize, units: u64, picks: &[usize]) -> MassVector {
    let mut mass = vec![0; n];
    for i in 0..units as usize {
        mass[picks[i % picks.len()] % n] += 1;
    }
    MassVector::new(units, mass).unwrap()
}

/// Every integral coupling of `a` and `b`, by row-wise enumeration.
fn all_couplings(a: &[u64], b: &[u64]) -> Vec<Vec<Vec<u64>>> {
    fn rows(a: &[u64], cols: &mut Vec<u64>, row: usize, cur: &mut Vec<Vec<u64>>, out: &mut Vec<Vec<Vec<u64>>>) {
        if row == a.len() {
            if cols.iter().all(|&c| c == 0) {
                out.push(cur.clone());
            }
            return;
        }
        let n = a.len();
        let mut r = vec![0; n];
        fill(a, cols, row, 0, a[row], &mut r, cur, out);

        #[allow(clippy::too_many_arguments)]
        fn fill(
            a: &[u64],
            cols: &mut Vec<u64>,
            row: usize,
            j: usize,
            left: u64,
            r: &mut Vec<u64>,
            cur: &mut Vec<Vec<u64>>,
            out: &mut Vec<Vec<Vec<u64>>>,
        ) {
            let n = a.len();
            let hi = if j == n - 1 { left } else { left.min(cols[j]) };
            let lo = if j == n - 1 { left } else { 0 };
            if hi > cols[j] {
                return;
            }
            for f in lo..=hi {
                cols[j] -= f;
                r[j] = f;
                if j == n - 1 {
                    cur.push(r.clone());
                    rows(a, cols, row + 1, cur, out);
                    cur.pop();
                } else {
                    fill(a, cols, row, j + 1, left - f, r, cur, out);
                }
                cols[j] += f;
            }
            r[j] = 0;
        }
    }
    let mut out = Vec::new();
    rows(a, &mut b.to_vec(), 0, &mut Vec::new(), &mut out);
    out
}

fn brute_force(m: &MetricSpace, a: &MassVector, b: &MassVector) -> f64 {
    let n = m.len();
    all_couplings(a.mass(), b.mass())
        .iter()
        .map(|c| {
            let mut w = 0.0;
            for i in 0..n {
                for j in 0..n {
                    w += c[i][j] as f64 * m.lattice(i, j);
                }
            }
            w
        })
        .fold(f64::INFINITY, f64::min)
        / (a.units() as f64 * m.lattice_scale())
}

#[test]
fn enumeration_sees_every_coupling() {
    // 2x2 with margins (1,1): identity and swap
    assert_eq!(all_couplings(&[1, 1], &[1, 1]).len(), 2);
    assert_eq!(all_couplings(&[2, 0], &[1, 1]).len(), 1);
}

#[test]
fn path_metric_example() {
    let m = MetricSpace::parse("3\n0 1 2\n1 0 1\n2 1 0\n", "path").unwrap();
    let a = MassVector::point(3, 0, 2);
    let b = MassVector::new(2, vec![0, 1, 1]).unwrap();
    assert_eq!(ot_cost(&m, &a, &b).unwrap(), 1.5);
    assert_eq!(brute_force(&m, &a, &b), 1.5);
}

#[test]
fn rational_metric_is_exact() {
    let m = MetricSpace::parse("3\n0 1/3 1/2\n1/3 0 1/2\n1/2 1/2 0\n", "thirds").unwrap();
    assert!(m.is_exact());
    let a = MassVector::new(6, vec![6, 0, 0]).unwrap();
    let b = MassVector::new(6, vec![2, 2, 2]).unwrap();
    let t = solve(&m, &a, &b).unwrap();
    assert_eq!(t.work, t.work.round());
    assert_eq!(brute_force(&m, &a, &b), ot_cost(&m, &a, &b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force(n in 2usize..=4, units in 1u64..=8, seed in 0u64..1000,
                           pa in prop::collection::vec(0usize..4, 1..8), pb in prop::collection::vec(0usize..4, 1..8)) {
        let m = metric(n, seed);
        let a = mass_from(n, units, &pa);
        let b = mass_from(n, units, &pb);
        let (cost, plan) = ot(&m, &a, &b).unwrap();
        prop_assert_eq!(cost, brute_force(&m, &a, &b));
        prop_assert!(plan.is_feasible(&a, &b));
        prop_assert!(is_optimal(&m, &plan));
    }

    #[test]
    fn ot_is_a_metric(n in 2usize..=5, units in 1u64..=12, seed in 0u64..1000,
                      pa in prop::collection::vec(0usize..5, 1..10),
                      pb in prop::collection::vec(0usize..5, 1..10),
                      pc in prop::collection::vec(0usize..5, 1..10)) {
        let m = metric(n, seed);
        let (a, b, c) = (mass_from(n, units, &pa), mass_from(n, units, &pb), mass_from(n, units, &pc));
        let ab = ot_cost(&m, &a, &b).unwrap();
        prop_assert_eq!(ab, ot_cost(&m, &b, &a).unwrap());
        prop_assert_eq!(ab == 0.0, a == b);
        let ac = ot_cost(&m, &a, &c).unwrap();
        let cb = ot_cost(&m, &c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12 * m.diameter());
        prop_assert!(ab <= m.diameter());
    }

    #[test]
    fn rescaling_preserves_cost(n in 2usize..=4, units in 1u64..=6, factor in 1u64..=5, seed in 0u64..100,
                                pa in prop::collection::vec(0usize..4, 1..6), pb in prop::collection::vec(0usize..4, 1..6)) {
        let m = metric(n, seed);
        let (a, b) = (mass_from(n, units, &pa), mass_from(n, units, &pb));
        let big = units * factor;
        let c1 = ot_cost(&m, &a, &b).unwrap();
        let c2 = ot_cost(&m, &a.rescale(big).unwrap(), &b.rescale(big).unwrap()).unwrap();
        prop_assert!((c1 - c2).abs() <= 1e-12 * m.diameter());
    }

    #[test]
    fn drain_identity(n in 2usize..=5, mult in 1u64..=4, seed in 0u64..1000,
                      pz in prop::collection::vec(0usize..5, 1..10), py in prop::collection::vec(0usize..5, 1..10)) {
        let m = metric(n, seed);
        let units = 2 * n as u64 * mult * 2;
        let z = mass_from(n, units, &pz);
        let y = mass_from(n, units, &py);
        if let Some(rho) = (0..n).find(|&p| z.get(p) >= y.get(p) + n as u64) {
            let alpha = (z.get(rho) - y.get(rho)) / n as u64;
            let (to, z2) = drain_step(&m, &z, &y, rho, alpha).unwrap();
            prop_assert_ne!(to, rho);
            let lhs = ot_cost(&m, &z, &y).unwrap();
            let rhs = alpha as f64 / units as f64 * m.d(rho, to) + ot_cost(&m, &z2, &y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * m.diameter());
        }
    }
}

#[test]
fn tampered_plan_is_not_optimal() {
    let m = MetricSpace::uniform(3).unwrap();
    // swapping mass that could stay in place
    let plan = Coupling::from_triples(3, 2, &[(0, 1, 1), (1, 0, 1)]).unwrap();
    assert!(!is_optimal(&m, &plan));
    let plan = Coupling::from_triples(3, 2, &[(0, 0, 1), (1, 1, 1)]).unwrap();
    assert!(is_optimal(&m, &plan));
}
