//! Root-finder contracts checked against a brute-force voltage scan, plus
//! the secant-slope sanity property.

use conveyor_core::search::{newton_scalar, NewtonConfig, SearchError};

fn cfg() -> NewtonConfig {
    NewtonConfig {
        tol_energy_eV: 1e-6,
        max_iter: 40,
        fd_step_V: 1e-3,
    }
}

/// Exhaustive 1 mV scan over the clamp interval: the independent oracle
/// the root-finder is compared against.
fn grid_scan(f: impl Fn(f64) -> f64, target: f64, clamp: [f64; 2]) -> f64 {
    let mut best = (clamp[0], f64::INFINITY);
    let steps = ((clamp[1] - clamp[0]) / 1e-3).round() as usize;
    for i in 0..=steps {
        let v = clamp[0] + i as f64 * 1e-3;
        let err = (f(v) - target).abs();
        if err < best.1 {
            best = (v, err);
        }
    }
    best.0
}

#[test]
fn newton_matches_grid_scan_on_smooth_functionals() {
    // Shapes that mimic the simulator functionals: quasi-linear band-edge
    // response, saturating dot response, and a soft square-law.
    let cases: Vec<(Box<dyn Fn(f64) -> f64>, f64, [f64; 2])> = vec![
        (Box::new(|v: f64| -0.82 * v + 0.41), 0.005, [-1.0, 1.0]),
        (
            Box::new(|v: f64| -0.03 * ((v - 0.3) / 0.2).tanh() - 0.012),
            -0.02,
            [0.0, 1.0],
        ),
        (
            Box::new(|v: f64| -0.05 * v - 0.01 * v * v + 0.002),
            -0.015,
            [0.0, 0.8],
        ),
    ];
    for (i, (f, target, clamp)) in cases.iter().enumerate() {
        let newton = newton_scalar(|v| Ok(f(v)), *target, clamp[0], *clamp, &cfg())
            .unwrap_or_else(|e| panic!("case {i}: {e}"));
        let scanned = grid_scan(f, *target, *clamp);
        assert!(
            (newton.volts - scanned).abs() <= 2e-3,
            "case {i}: newton {} vs scan {}",
            newton.volts,
            scanned
        );
    }
}

#[test]
fn bootstrap_slope_matches_half_step_central_difference() {
    // The slope the solver estimates from its first two evaluations must
    // agree with an independent central difference at half the step.
    let f = |v: f64| -0.03 * ((v - 0.25) / 0.15).tanh() - 0.01;
    let v0 = 0.1;
    let h = cfg().fd_step_V;

    let mut evals: Vec<(f64, f64)> = Vec::new();
    let _ = newton_scalar(
        |v| {
            evals.push((v, f(v)));
            Ok(f(v))
        },
        -0.02,
        v0,
        [0.0, 1.0],
        &cfg(),
    )
    .unwrap();
    let (va, fa) = evals[0];
    let (vb, fb) = evals[1];
    let used = (fb - fa) / (vb - va);
    let central = (f(v0 + 0.5 * h) - f(v0 - 0.5 * h)) / h;
    let rel = ((used - central) / central).abs();
    assert!(rel < 0.05, "bootstrap slope {used} vs central {central}");
}

#[test]
fn flat_functional_reports_nonconvergence() {
    let err = newton_scalar(|_| Ok(0.3), 0.0, 0.5, [0.0, 1.0], &cfg()).unwrap_err();
    assert!(matches!(err, SearchError::Newton { .. }), "{err}");
}

#[test]
fn evaluation_failures_propagate() {
    let err = newton_scalar(
        |_| Err(SearchError::Config("probe outside domain".into())),
        0.0,
        0.5,
        [0.0, 1.0],
        &cfg(),
    )
    .unwrap_err();
    assert!(matches!(err, SearchError::Config(_)), "{err}");
}
