use leverage_trust::phase_portrait::{basin_map, BasinLabel, GridSpec, Regime};
use leverage_trust::trajectory::integrate;
use leverage_trust::{EconState, IntegratorConfig, Params, Terminal};
use proptest::prelude::*;

#[test]
fn labels_survive_step_halving() {
    let grid = GridSpec::square(21);
    let base = IntegratorConfig::default();
    // local error of a fifth-order step scales with h^5
    let halved = IntegratorConfig {
        step: base.step / 2.0,
        rel_tol: base.rel_tol / 32.0,
        abs_tol: base.abs_tol / 32.0,
        ..base
    };
    for regime in Regime::ALL {
        let p = regime.params();
        let a = basin_map(&p, &grid, &base).unwrap();
        let b = basin_map(&p, &grid, &halved).unwrap();
        let agree = a.iter().zip(&b).filter(|(x, y)| x.label == y.label).count();
        assert!(agree as f64 >= 0.99 * a.len() as f64, "{regime:?}: {agree}/{}", a.len());
    }
}

#[test]
fn basin_map_is_deterministic() {
    let p = Regime::Crisis.params();
    let grid = GridSpec::square(15);
    let cfg = IntegratorConfig::default();
    assert_eq!(basin_map(&p, &grid, &cfg).unwrap(), basin_map(&p, &grid, &cfg).unwrap());
}

#[test]
fn terminal_diagonal_point_rises_with_seed_trust() {
    let p = Regime::Regular.params();
    for l in [0.0, 0.2, 0.5] {
        let mut prev = f64::NEG_INFINITY;
        for i in 1..20 {
            let t = l + (1.0 - l) * i as f64 / 20.0;
            let rec = integrate(&EconState::new(1.0, l, t).unwrap(), &p, &IntegratorConfig::default()).unwrap();
            let Terminal::ConvergedToDiagonal { leverage } = rec.terminal else {
                panic!("seed ({l}, {t}): {:?}", rec.terminal);
            };
            assert!(leverage >= prev - 1e-9, "seed ({l}, {t}): {leverage} < {prev}");
            assert!(leverage > t - 1e-9);
            prev = leverage;
        }
    }
}

#[test]
fn regular_regime_slopes() {
    let p = Regime::Regular.params();
    // above the diagonal trust rises to meet leverage; below it falls
    let up = integrate(
        &EconState::new(1.0, 0.2, 0.4).unwrap(),
        &p,
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert!(up.last().trust > 0.4);
    let down = integrate(
        &EconState::new(1.0, 0.6, 0.3).unwrap(),
        &p,
        &IntegratorConfig::default(),
    )
    .unwrap();
    assert!(matches!(down.terminal, Terminal::ConvergedToDiagonal { .. }));
    assert!(down.samples.windows(2).all(|w| w[1].trust <= w[0].trust));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn point_basin_requires_l0_below_one(
        a in 0.02f64..0.3,
        r in 0.0f64..0.2,
        excess in 0.0f64..0.2,
    ) {
        // g >= r puts L0 >= 1
        let p = Params::nondimensional(a, r + excess, r).unwrap();
        prop_assert!(p.derived().unwrap().l0 >= 1.0);
        let map = basin_map(&p, &GridSpec::square(7), &IntegratorConfig::default()).unwrap();
        prop_assert!(map.iter().all(|n| n.label != Some(BasinLabel::PointBasin)));
    }
}
