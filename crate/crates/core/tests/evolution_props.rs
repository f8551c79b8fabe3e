mod common;

use common::*;
use oqrw::evolution::{classical_embed, classical_state, probability_vector, step, trajectory, BlockState};
use oqrw::linalg;
use oqrw::model::{path_operator, validate_model, Path};
use oqrw::{fixtures, SiteId};
use proptest::prelude::*;
use rand::Rng;

fn random_state(seed: u64, sites: usize, h: usize) -> BlockState {
    let mut g = rng(seed);
    let weights: Vec<f64> = (0..sites).map(|_| g.random_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let blocks = (0..sites).map(|s| (SiteId(s as i64), random_density(&mut g, h) * linalg::c(weights[s] / total, 0.0)));
    BlockState::new(blocks, 1e-10).unwrap()
}

#[test]
fn shipped_walks_are_normalized() {
    for m in [
        fixtures::rank_one_walk(10),
        fixtures::antidiagonal_walk(10),
        fixtures::three_level_walk(10),
        fixtures::unitary_column_ring(5, 0.6),
    ] {
        let report = validate_model(&m, 1e-12);
        assert!(report.is_valid(), "defect {}", report.max_defect());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_preserves_trace_and_positivity(seed in any::<u64>(), sites in 1usize..=4, h in 1usize..=3) {
        let m = random_model(&mut rng(seed), sites, h, 0.5);
        let rho = random_state(seed.wrapping_add(1), sites, h);
        let next = step(&m, &rho).unwrap();
        prop_assert!((next.total_trace() - rho.total_trace()).abs() <= 1e-12);
        for b in next.blocks().values() {
            prop_assert!(linalg::is_psd(b, 1e-10));
        }
    }

    #[test]
    fn trajectory_matches_reference_evolution(seed in any::<u64>(), sites in 1usize..=4, h in 1usize..=3) {
        let m = random_model(&mut rng(seed), sites, h, 0.5);
        let rho = random_state(seed.wrapping_add(1), sites, h);
        let traj = trajectory(&m, &rho, 6).unwrap();
        let reference = reference_trajectory(&m, &blocks_of(&rho), 6);
        for (got, want) in traj.states().iter().zip(&reference) {
            prop_assert!(blocks_distance(&blocks_of(got), want, h) <= 1e-12);
        }
    }

    #[test]
    fn two_steps_sum_over_intermediate_sites(seed in any::<u64>(), sites in 1usize..=3, h in 1usize..=3) {
        let m = random_model(&mut rng(seed), sites, h, 0.7);
        let rho = random_state(seed.wrapping_add(7), sites, h);
        let two = step(&m, &step(&m, &rho).unwrap()).unwrap();
        let ops = operator_table(&m);
        let mut want = Blocks::new();
        for (&(k, j), bjk) in &ops {
            for (&(j2, i), bij) in &ops {
                if j2 != j { continue; }
                let Some(r) = rho.block(SiteId(k)) else { continue };
                let p = bij * bjk;
                *want.entry(i).or_insert_with(|| linalg::zeros(h)) += &p * r * p.adjoint();
            }
        }
        want.retain(|_, b| linalg::trace_re(b) >= PRUNE);
        prop_assert!(blocks_distance(&blocks_of(&two), &want, h) <= 1e-12);
    }

    #[test]
    fn path_operators_compose(seed in any::<u64>(), h in 1usize..=3, len1 in 1usize..=3, len2 in 1usize..=3) {
        // a dense model so that every path exists
        let m = random_model(&mut rng(seed), 3, h, 1.0);
        let mut g = rng(seed ^ 0x55);
        let mut walk = |start: i64, len: usize| {
            let mut v = vec![SiteId(start)];
            for _ in 0..len { v.push(SiteId(g.random_range(0..3))); }
            v
        };
        let v1 = walk(0, len1);
        let v2 = walk(v1.last().unwrap().0, len2);
        let (p1, p2) = (Path::new(v1).unwrap(), Path::new(v2).unwrap());
        let joined = p1.then(&p2).unwrap();
        let lhs = path_operator(&m, &joined).unwrap();
        let rhs = path_operator(&m, &p2).unwrap() * path_operator(&m, &p1).unwrap();
        prop_assert!(linalg::max_abs(&(lhs - rhs)) <= 1e-12);
    }

    #[test]
    fn classical_trajectory_is_row_times_power(seed in any::<u64>(), n in 1usize..=8) {
        let mut g = rng(seed);
        let p = random_stochastic(&mut g, n, 0.4);
        let mut start: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0)).collect();
        let s: f64 = start.iter().sum();
        start.iter_mut().for_each(|x| *x /= s);
        let model = classical_embed(&p).unwrap();
        let traj = trajectory(&model, &classical_state(&start).unwrap(), 50).unwrap();
        let reference = classical_reference(&p, &start, 50);
        for (state, want) in traj.states().iter().zip(&reference) {
            let got = probability_vector(state, n);
            for (a, b) in got.iter().zip(want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
