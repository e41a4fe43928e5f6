use fracvol::pricing::{simulate_outcomes, Estimator, MCConfig, Payoff};
use fracvol::viability::path_viability_margin;
use fracvol::{Model, Scenario, TimeGrid};

fn model(mut s: Scenario, steps: usize) -> Model {
    s.grid = TimeGrid::new(1.0, steps).unwrap();
    Model::new(s).unwrap()
}

#[test]
fn driver_is_continuous_under_refinement() {
    // Largest increment of B shrinks roughly like dt^H.
    let mut worst = Vec::new();
    for steps in [64, 256] {
        let m = model(Scenario::reference_example(), steps);
        let mut w = 0.0f64;
        for p in 0..20 {
            let path = m.physical_path(0, p, true).unwrap();
            for k in 0..path.b.dims() {
                let inc = path.b.increments(k);
                w = w.max(inc.iter().fold(0.0, |a, x| a.max(x.abs())));
            }
        }
        worst.push(w);
    }
    assert!(worst[1] < worst[0], "{worst:?}");
}

#[test]
fn projected_paths_stay_in_k_and_bounded() {
    let m = model(Scenario::reference_example(), 128);
    for p in 0..50 {
        let path = m.physical_path(4, p, true).unwrap();
        let poly = m.scenario().polyhedron(path.xi).unwrap();
        assert!(path_viability_margin(&path.u, &poly) >= -1e-12);
        assert!(path.u.is_finite() && path.s.is_finite());
        assert!(path.v.values().iter().all(|&v| v >= path.xi - 1e-12));
        assert!(path.s.values().iter().all(|&s| s > 0.0));
    }
}

#[test]
fn degenerate_discounted_assets_are_martingales() {
    let m = model(Scenario::degenerate(), 64);
    let cfg = MCConfig::new(40_000, 2);
    for est in [Estimator::Physical, Estimator::RiskNeutral] {
        let out = simulate_outcomes(&m, &cfg, est).unwrap();
        let (w, wse) = out.statistic(|o| o.weight);
        assert!((w - 1.0).abs() < 4.0 * wse.max(1e-15), "{est}: E[weight] = {w}");
        for asset in 0..2 {
            let r = out.price(&Payoff::Asset { asset });
            assert!((r.estimate - 1.0).abs() < 4.0 * r.stderr, "{est} asset {asset}: {}", r.estimate);
        }
    }
}

#[test]
fn same_seed_same_prices_across_runs() {
    let m = model(Scenario::reference_example(), 32);
    let cfg = MCConfig::new(2000, 9);
    let call = Payoff::Call { asset: 1, strike: 1.1 };
    let a = simulate_outcomes(&m, &cfg, Estimator::RiskNeutral).unwrap().price(&call);
    let b = simulate_outcomes(&m, &cfg, Estimator::RiskNeutral).unwrap().price(&call);
    assert_eq!(a, b);
}
