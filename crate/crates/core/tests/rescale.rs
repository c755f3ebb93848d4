use phi_yamabe::conformal::ConformalFactor;
use phi_yamabe::flow::{run_flow, FlowConfig, FlowTrace, FlowVariant};
use phi_yamabe::geometry::{ModelPhiManifold, RadialGrid};
use phi_yamabe::rescale::{
    apply_reparam, build_reparam, reparam_snapshots, two_route_comparison, verify_cyf, NormalizedTrace,
    RescaleError,
};

fn homogeneous(m: usize) -> (ModelPhiManifold, RadialGrid) {
    let man = ModelPhiManifold::new(m, 2, -2.0, -1.0, 1.0).unwrap();
    let grid = RadialGrid::uniform(2, 16, 0.1, 1.0).unwrap();
    (man, grid)
}

fn inhomogeneous(m: usize, n: usize) -> (ModelPhiManifold, RadialGrid) {
    let man = ModelPhiManifold::new(m, 2, -4.0, -3.0, 1.0).unwrap();
    let grid = RadialGrid::uniform(2, n, 0.1, 1.0).unwrap();
    (man, grid)
}

fn unnormalized(man: &ModelPhiManifold, grid: &RadialGrid, t_end: f64, record_every: usize, snapshot_every: usize) -> FlowTrace {
    unnormalized_from(man, grid, ConformalFactor::constant(grid.len(), 1.0).unwrap(), t_end, record_every, snapshot_every)
}

fn unnormalized_from(
    man: &ModelPhiManifold,
    grid: &RadialGrid,
    u0: ConformalFactor,
    t_end: f64,
    record_every: usize,
    snapshot_every: usize,
) -> FlowTrace {
    let mut cfg = FlowConfig::new(FlowVariant::Unnormalized, t_end);
    cfg.record_every = record_every;
    cfg.snapshot_every = snapshot_every;
    run_flow(man, grid, &cfg, u0).unwrap()
}

/// Unnormalized trace started after the initial boundary layer has decayed.
fn smooth_unnormalized(man: &ModelPhiManifold, grid: &RadialGrid, record_every: usize, snapshot_every: usize) -> FlowTrace {
    let warm = unnormalized(man, grid, 0.3, 1000, 1000);
    let mut u0 = warm.final_state.u;
    u0.time = 0.0;
    unnormalized_from(man, grid, u0, 1.0, record_every, snapshot_every)
}

#[test]
fn homogeneous_run_reparametrizes_to_fixed_point() {
    for m in [6, 10] {
        let (man, grid) = homogeneous(m);
        let trace = unnormalized(&man, &grid, 1.0, 1, 50);
        let map = build_reparam(man.eta, &trace).unwrap();
        // u = (1+t)^η, f = (1+t)^{-η}, F = ln(1+t)
        assert!((map.F(1.0) - 2f64.ln()).abs() < 1e-6, "m={m} F(1)={}", map.F(1.0));
        assert!((map.inverse(2f64.ln()).unwrap() - 1.0).abs() < 1e-6);
        assert!((map.f(1.0) - 2f64.powf(-man.eta)).abs() < 1e-6);

        let taus: Vec<f64> = (0..=40).map(|k| map.tau_max() * k as f64 / 40.0).collect();
        let normalized = apply_reparam(&trace, &map, &taus).unwrap();
        for s in &normalized.snapshots {
            for v in &s.u {
                assert!((v - 1.0).abs() <= 1e-6, "m={m} τ={} ũ={v}", s.t);
            }
        }
        for s in &reparam_snapshots(&trace, &map).snapshots {
            assert!(s.u.iter().all(|v| (v - 1.0).abs() <= 1e-6));
        }
    }
}

#[test]
fn zero_tau_gives_initial_factor_and_range_is_checked() {
    let (man, grid) = inhomogeneous(6, 32);
    let trace = unnormalized(&man, &grid, 0.5, 20, 1);
    let map = build_reparam(man.eta, &trace).unwrap();
    assert_eq!(map.f(0.0), 1.0);
    assert_eq!(map.F(0.0), 0.0);
    let nt = apply_reparam(&trace, &map, &[0.0, 0.5 * map.tau_max()]).unwrap();
    assert_eq!(nt.snapshots[0].u, trace.snapshots[0].u);
    assert!(nt.snapshots.iter().all(|s| s.u.iter().all(|v| *v > 0.0)));
    assert!(matches!(
        apply_reparam(&trace, &map, &[map.tau_max() * 1.01]),
        Err(RescaleError::OutOfRange { .. })
    ));
    for &t in map.t_samples() {
        assert!((map.inverse(map.F(t)).unwrap() - t).abs() <= 1e-8);
    }
    assert!(map.big_f_values().windows(2).all(|w| w[1] > w[0]));
    assert!(map.f_values().iter().all(|f| *f > 0.0));
}

#[test]
fn rejects_normalized_trace() {
    let (man, grid) = homogeneous(6);
    let cfg = FlowConfig::new(FlowVariant::CyfPlus, 0.01);
    let trace = run_flow(&man, &grid, &cfg, ConformalFactor::constant(grid.len(), 1.0).unwrap()).unwrap();
    assert_eq!(
        build_reparam(man.eta, &trace),
        Err(RescaleError::WrongVariant(FlowVariant::CyfPlus))
    );
}

#[test]
fn homogeneous_direct_trace_satisfies_cyf() {
    let (man, grid) = homogeneous(6);
    let mut cfg = FlowConfig::new(FlowVariant::CyfPlus, 0.2);
    cfg.record_every = 50;
    let trace = run_flow(&man, &grid, &cfg, ConformalFactor::constant(grid.len(), 1.0).unwrap()).unwrap();
    let nt = NormalizedTrace {
        snapshots: trace.snapshots.clone(),
    };
    let res = verify_cyf(&man, &grid, &nt).unwrap();
    assert!(res.max <= 1e-10, "{}", res.max);
}

fn every_other(nt: &NormalizedTrace) -> NormalizedTrace {
    NormalizedTrace {
        snapshots: nt.snapshots.iter().step_by(2).cloned().collect(),
    }
}

#[test]
fn reparametrized_trace_satisfies_cyf_with_second_order_residual() {
    for m in [6, 10] {
        let (man, grid) = inhomogeneous(m, 32);
        let trace = smooth_unnormalized(&man, &grid, 20, 20);
        let map = build_reparam(man.eta, &trace).unwrap();
        let fine = reparam_snapshots(&trace, &map);
        let coarse = every_other(&fine);
        let r_fine = verify_cyf(&man, &grid, &fine).unwrap().max;
        let r_coarse = verify_cyf(&man, &grid, &coarse).unwrap().max;
        eprintln!("m={m} coarse {r_coarse} fine {r_fine}");
        assert!(r_coarse / r_fine >= 1.8, "m={m} coarse {r_coarse} fine {r_fine}");
    }
}

#[test]
fn time_change_uses_inverse_eta_power() {
    // η = 2: dτ/dt = f^{1/η} solves CYF⁺, dτ/dt = f^η does not.
    let (man, grid) = inhomogeneous(10, 32);
    let trace = smooth_unnormalized(&man, &grid, 20, 20);
    let map = build_reparam(man.eta, &trace).unwrap();
    let good = reparam_snapshots(&trace, &map);

    let ts = map.t_samples();
    let fs = map.f_values();
    let mut tau_alt = vec![0.0];
    for k in 1..ts.len() {
        let inc = 0.5 * (ts[k] - ts[k - 1]) * (fs[k - 1].powf(man.eta) + fs[k].powf(man.eta));
        tau_alt.push(tau_alt[k - 1] + inc);
    }
    let mut bad = good.clone();
    for (s, orig) in bad.snapshots.iter_mut().zip(&trace.snapshots) {
        let k = ts.iter().position(|t| *t == orig.t).expect("snapshots sit on record times");
        s.t = tau_alt[k];
    }
    let r_good = verify_cyf(&man, &grid, &good).unwrap().max;
    let r_bad = verify_cyf(&man, &grid, &bad).unwrap().max;
    eprintln!("good {r_good} bad {r_bad}");
    assert!(r_bad > 100.0 * r_good, "good {r_good} bad {r_bad}");
}

#[test]
fn two_routes_agree_under_refinement() {
    let (man, grid) = inhomogeneous(6, 24);
    let u0 = ConformalFactor::constant(grid.len(), 1.0).unwrap();
    let mut cfg = FlowConfig::new(FlowVariant::Unnormalized, 0.5);
    cfg.record_every = 10;
    cfg.cfl_safety = 0.8;
    let coarse = two_route_comparison(&man, &grid, &u0, 0.5, 4, &cfg).unwrap();
    cfg.cfl_safety = 0.4;
    let fine = two_route_comparison(&man, &grid, &u0, 0.5, 4, &cfg).unwrap();
    let order = (coarse.max / fine.max).log2();
    eprintln!("two-route coarse {} fine {} order {order}", coarse.max, fine.max);
    assert!(order >= 1.0, "coarse {} fine {}", coarse.max, fine.max);
}
