use firmnet::economy::uniform_substitution;
use firmnet::equilibrium::{self, household_kappa, residuals, solve_general_ces, solve_leontief_crs};
use firmnet::network::{degrees, regular_links, undirected_regular_links};
use firmnet::production::{input_cost, optimal_quantities, production};
use firmnet::spectral::{calibrate_epsilon, eigenvalues, hawkins_simon_check, network_matrix, symmetric_eigenvalues};
use firmnet::{DMatrix, DVector, Economy, Elasticity, Error, Household};
use proptest::prelude::*;

fn q_of(k: usize) -> Elasticity {
    [Elasticity::Leontief, Elasticity::Finite(0.5), Elasticity::Finite(2.0), Elasticity::CobbDouglas][k % 4]
}

fn economy(n: usize, d: usize, seed: u64, z_shift: f64, q: Elasticity, b: f64) -> Economy {
    let links = regular_links(n, d, seed, 1.0).unwrap();
    let z = DVector::from_element(n, d as f64 + z_shift);
    let theta = DVector::from_element(n, 1.0 / n as f64);
    Economy::with_uniform_substitution(links, z, q, b, theta, Household::default()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

// Two inputs priced 1 and 4, equal weights and unit requirements. The Lagrange
// conditions give Q0 = 2 Q1 for q = 1 and Q0 = 4 Q1 for Cobb-Douglas.
#[test]
fn cost_minimising_inputs_match_hand_solutions() {
    let (a, j, p) = ([0.5, 0.5], [1.0, 1.0], [1.0, 4.0]);
    let ces = optimal_quantities(2.0, &p, 1.0, Elasticity::Finite(1.0), &a, &j).unwrap();
    assert!(rel(ces[0], 3.0) < 1e-14 && rel(ces[1], 1.5) < 1e-14, "{ces:?}");
    // Decreasing returns: the level needed for gamma_hat is gamma_hat^(1/b).
    let ces = optimal_quantities(2.0, &p, 0.5, Elasticity::Finite(1.0), &a, &j).unwrap();
    assert!(rel(ces[0], 6.0) < 1e-14 && rel(ces[1], 3.0) < 1e-14, "{ces:?}");
    let cd = optimal_quantities(1.0, &p, 1.0, Elasticity::CobbDouglas, &a, &j).unwrap();
    assert!(rel(cd[0], 2.0) < 1e-14 && rel(cd[1], 0.5) < 1e-14, "{cd:?}");
    assert!(rel(input_cost(1.0, &p, 1.0, Elasticity::CobbDouglas, &a, &j).unwrap(), 4.0) < 1e-14);
    let leo = optimal_quantities(2.0, &p, 1.0, Elasticity::Leontief, &a, &[0.5, 3.0]).unwrap();
    assert_eq!(leo, vec![1.0, 6.0]);
}

#[test]
fn production_rejects_negative_inputs_and_handles_zeros() {
    let (a, j) = ([0.5, 0.5], [1.0, 1.0]);
    assert_eq!(production(1.0, 1.0, Elasticity::Finite(1.0), &a, &j, &[1.0, -1.0]), Err(Error::NegativeInput { index: 1, value: -1.0 }));
    for q in [Elasticity::Leontief, Elasticity::Finite(1.0), Elasticity::CobbDouglas] {
        assert_eq!(production(3.0, 1.0, q, &a, &j, &[0.0, 5.0]).unwrap(), 0.0);
    }
}

#[test]
fn elasticity_limits_map_to_the_tagged_branches() {
    assert_eq!(Elasticity::from_q(0.0).unwrap(), Elasticity::Leontief);
    assert_eq!(Elasticity::from_q(f64::INFINITY).unwrap(), Elasticity::CobbDouglas);
    assert_eq!(Elasticity::from_q(0.5).unwrap().zeta(), 1.0 / 1.5);
    assert!(Elasticity::from_q(-1.0).is_err() && Elasticity::from_q(f64::NAN).is_err());
}

#[test]
fn invalid_economies_are_rejected() {
    let links = regular_links(4, 2, 1, 1.0).unwrap();
    let theta = DVector::from_element(4, 0.25);
    let z = DVector::from_element(4, 3.0);
    let ok = |l: DMatrix<f64>, z: DVector<f64>, t: DVector<f64>| {
        Economy::with_uniform_substitution(l, z, Elasticity::Leontief, 1.0, t, Household::default())
    };
    assert!(ok(links.clone(), z.clone(), theta.clone()).is_ok());
    let mut self_loop = links.clone();
    self_loop[(0, 1)] = 1.0;
    assert!(matches!(ok(self_loop, z.clone(), theta.clone()), Err(Error::InvalidEconomy(_))));
    assert!(ok(links.clone(), z.clone(), DVector::from_element(4, 0.3)).is_err());
    assert!(ok(links.clone(), DVector::from_element(4, 0.0), theta.clone()).is_err());
    let mut negative = links.clone();
    negative[(1, 0)] = -1.0;
    assert!(ok(negative, z, theta).is_err());
    assert!(regular_links(4, 4, 1, 1.0).is_err());
    assert!(undirected_regular_links(5, 3, 1, 1.0).is_err());
}

// A single firm producing from labour alone: p = V / z and z gamma = kappa / p.
#[test]
fn single_firm_equilibrium_in_every_branch() {
    for (k, b) in [(0, 1.0), (1, 1.0), (2, 0.8), (3, 0.8), (0, 0.8)] {
        let links = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let econ = Economy::with_uniform_substitution(
            links,
            DVector::from_element(1, 2.0),
            q_of(k),
            b,
            DVector::from_element(1, 1.0),
            Household::default(),
        )
        .unwrap();
        let eq = equilibrium::solve(&econ).unwrap();
        let (p, g) = (eq.prices[0], eq.gammas[0]);
        // Clearing gives p z gamma = kappa = 1, zero profit gives gamma^(1/b) = 1.
        assert!(rel(g, 1.0) < 1e-9 && rel(p, 0.5) < 1e-9, "q {:?} b {b}: p {p} gamma {g}", q_of(k));
    }
}

// Doubling prices at a fixed wage breaks zero profit; doubling productions
// breaks clearing only, since profits are linear in gamma at b = 1.
#[test]
fn residuals_flag_displaced_states() {
    let econ = economy(6, 2, 4, 1.0, Elasticity::Leontief, 1.0);
    let eq = equilibrium::solve(&econ).unwrap();
    let r = residuals(&econ, &(&eq.prices * 2.0), &eq.gammas, &eq.kappa).unwrap();
    assert!(r.profit > 0.1, "{r:?}");
    let r = residuals(&econ, &eq.prices, &(&eq.gammas * 2.0), &eq.kappa).unwrap();
    assert!(r.clearing > 0.1 && r.profit < 1e-12, "{r:?}");
}

#[test]
fn leontief_limits_of_the_fixed_point_agree_with_the_linear_solve() {
    let econ = economy(12, 3, 5, 0.7, Elasticity::Leontief, 1.0);
    let kappa = household_kappa(&econ.theta0, &econ.household);
    let direct = solve_leontief_crs(&network_matrix(&econ), &econ.labor_vector(), &kappa).unwrap();
    let iterated = solve_general_ces(&econ, &kappa, 1e-12, 10_000).unwrap();
    for i in 0..12 {
        assert!(rel(direct.prices[i], iterated.prices[i]) < 1e-9);
        assert!(rel(direct.gammas[i], iterated.gammas[i]) < 1e-9);
    }
    // Small q approaches the Leontief prices.
    let near = solve_general_ces(&econ.with_technology(Elasticity::Finite(1e-4), 1.0).unwrap(), &kappa, 1e-12, 10_000).unwrap();
    for i in 0..12 {
        assert!(rel(direct.prices[i], near.prices[i]) < 1e-2, "{} vs {}", direct.prices[i], near.prices[i]);
    }
}

#[test]
fn large_q_approaches_cobb_douglas() {
    let econ = economy(8, 2, 3, 1.0, Elasticity::CobbDouglas, 0.9);
    let kappa = household_kappa(&econ.theta0, &econ.household);
    let cd = equilibrium::solve_cobb_douglas(&econ, &kappa).unwrap();
    let ces = solve_general_ces(&econ.with_technology(Elasticity::Finite(1e3), 0.9).unwrap(), &kappa, 1e-11, 100_000).unwrap();
    for i in 0..8 {
        assert!(rel(cd.prices[i], ces.prices[i]) < 1e-2, "{} vs {}", cd.prices[i], ces.prices[i]);
    }
}

#[test]
fn negative_eps_is_not_realisable() {
    let econ = economy(10, 3, 1, 0.0, Elasticity::Leontief, 1.0);
    let bad = calibrate_epsilon(&econ, -0.5).unwrap();
    assert!(!hawkins_simon_check(&network_matrix(&bad)));
    assert!(matches!(equilibrium::solve(&bad), Err(Error::NotRealisable { .. })));
}

#[test]
fn regular_networks_have_exact_degrees_and_perron_root() {
    let links = regular_links(30, 4, 9, 1.0).unwrap();
    let (sup, cli) = degrees(&links);
    assert!(sup.iter().chain(&cli).all(|k| *k == 4));
    assert_eq!(links, regular_links(30, 4, 9, 1.0).unwrap());
    assert_ne!(links, regular_links(30, 4, 10, 1.0).unwrap());
    let u = undirected_regular_links(30, 5, 2, 1.0).unwrap();
    let block = u.columns(1, 30).into_owned();
    assert_eq!(block, block.transpose());
    assert!(degrees(&u).0.iter().all(|k| *k == 5));
    // z = d + 2 leaves the smallest eigenvalue at exactly 2.
    let econ = economy(30, 4, 9, 2.0, Elasticity::Leontief, 1.0);
    assert!((network_matrix(&econ).eps - 2.0).abs() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn optimal_inputs_reach_the_target_at_least_cost(
        raw_a in prop::collection::vec(0.05..1.0f64, 3),
        j in prop::collection::vec(0.1..3.0f64, 3),
        p in prop::collection::vec(0.1..10.0f64, 3),
        k in 0usize..4, b in 0.5..1.0f64, g in 0.1..5.0f64, z in 0.5..4.0f64,
        tilt in prop::collection::vec(-0.3..0.3f64, 3),
    ) {
        let s: f64 = raw_a.iter().sum();
        let a: Vec<f64> = raw_a.iter().map(|x| x / s).collect();
        let q = q_of(k);
        let best = optimal_quantities(g, &p, b, q, &a, &j).unwrap();
        let out = production(z, b, q, &a, &j, &best).unwrap();
        prop_assert!(rel(out, z * g) < 1e-10, "output {} vs {}", out, z * g);
        // Any other bundle rescaled onto the same isoquant costs at least as much.
        let other: Vec<f64> = best.iter().zip(&tilt).map(|(x, t)| x * t.exp()).collect();
        let level = production(z, b, q, &a, &j, &other).unwrap() / z;
        let fix = (g / level).powf(1.0 / b);
        let cost = |v: &[f64], f: f64| v.iter().zip(&p).map(|(x, pr)| x * f * pr).sum::<f64>();
        prop_assert!(cost(&best, 1.0) <= cost(&other, fix) * (1.0 + 1e-10));
    }

    #[test]
    fn input_demand_is_homogeneous(
        j in prop::collection::vec(0.1..3.0f64, 3),
        p in prop::collection::vec(0.1..10.0f64, 3),
        k in 0usize..4, b in 0.5..1.0f64, g in 0.1..5.0f64, c in 0.01..100.0f64,
    ) {
        let a = [0.2, 0.3, 0.5];
        let q = q_of(k);
        let base = optimal_quantities(g, &p, b, q, &a, &j).unwrap();
        let pc: Vec<f64> = p.iter().map(|x| x * c).collect();
        let scaled_p = optimal_quantities(g, &pc, b, q, &a, &j).unwrap();
        let scaled_g = optimal_quantities(g * c, &p, b, q, &a, &j).unwrap();
        for i in 0..3 {
            prop_assert!(rel(base[i], scaled_p[i]) < 1e-12);
            prop_assert!(rel(base[i] * c.powf(1.0 / b), scaled_g[i]) < 1e-12);
        }
    }

    #[test]
    fn equilibria_clear_and_break_even(n in 2usize..9, dd in 1usize..4, seed in 0u64..1000, k in 0usize..4, crs in any::<bool>(), shift in 0.2..5.0f64) {
        let d = dd.min(n - 1);
        let b = if crs { 1.0 } else { 0.85 };
        let econ = economy(n, d, seed, shift, q_of(k), b);
        let eq = equilibrium::solve(&econ).unwrap();
        prop_assert!(eq.prices.iter().chain(eq.gammas.iter()).all(|x| *x > 0.0));
        // Recomputed from scratch, not taken from the solver.
        let r = residuals(&econ, &eq.prices, &eq.gammas, &eq.kappa).unwrap();
        prop_assert!(r.max() < 1e-8, "{:?}", r);
    }

    #[test]
    fn hawkins_simon_matches_a_non_negative_inverse(n in 2usize..7, entries in prop::collection::vec(0.0..1.0f64, 36), z in prop::collection::vec(0.3..2.5f64, 6)) {
        let mut links = DMatrix::zeros(n, n + 1);
        for i in 0..n {
            links[(i, 0)] = 1.0;
            for j in 0..n {
                if i != j && entries[i * 6 + j] > 0.4 {
                    links[(i, j + 1)] = entries[i * 6 + j];
                }
            }
        }
        let econ = Economy::new(
            links.clone(), uniform_substitution(&links), DVector::from_iterator(n, z[..n].iter().copied()),
            Elasticity::Leontief, 1.0, DVector::from_element(n, 1.0 / n as f64), Household::default(),
        ).unwrap();
        let nm = network_matrix(&econ);
        prop_assume!(nm.eps.abs() > 1e-6);
        // A Z-matrix is a non-singular M-matrix exactly when its inverse is entrywise non-negative.
        let inverse_ok = nm.m.clone().try_inverse().is_some_and(|inv| inv.iter().all(|x| *x >= -1e-12));
        prop_assert_eq!(hawkins_simon_check(&nm), inverse_ok);
    }

    #[test]
    fn calibration_hits_the_target(n in 3usize..20, seed in 0u64..500, target in -0.5..50.0f64) {
        let econ = economy(n, 2, seed, 1.0, Elasticity::Leontief, 1.0);
        let cal = calibrate_epsilon(&econ, target).unwrap();
        prop_assert!((network_matrix(&cal).eps - target).abs() < 1e-9 * (1.0 + target.abs()));
    }

    #[test]
    fn symmetric_and_general_spectra_agree(n in 4usize..30, seed in 0u64..100) {
        let d = if n % 2 == 0 { 3 } else { 2 };
        let links = undirected_regular_links(n, d, seed, 1.0).unwrap();
        let m = links.columns(1, n).into_owned();
        let mut general: Vec<f64> = eigenvalues(&m).iter().map(|c| c.re).collect();
        general.sort_by(|a, b| a.total_cmp(b));
        let sym = symmetric_eigenvalues(&m);
        for (x, y) in general.iter().zip(&sym) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert!((sym[n - 1] - d as f64).abs() < 1e-9);
    }
}
