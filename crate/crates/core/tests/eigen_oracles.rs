//! Eigensolver oracles: analytic spectra of the box and oscillator, grid
//! convergence, the variational bound, and the 2D solve path.

use conveyor_core::schrodinger::{dot_metrics, solve_eigen, ConfinementPotential, QuantumMode};
use conveyor_core::units::HBAR2_OVER_2ME_EV_NM2;

const K: f64 = HBAR2_OVER_2ME_EV_NM2;

fn harmonic_line(nodes: usize, length: f64, mass: f64, hbar_omega: f64) -> ConfinementPotential {
    let h = length / (nodes - 1) as f64;
    let center = 0.5 * length;
    // V = (hbar w)^2 (x - c)^2 / (4 K / m)
    let c = hbar_omega * hbar_omega * mass / (4.0 * K);
    let v: Vec<f64> = (0..nodes)
        .map(|i| {
            let x = i as f64 * h - center;
            c * x * x
        })
        .collect();
    ConfinementPotential::line(0.0, h, v, vec![mass; nodes])
}

#[test]
fn harmonic_spacing_matches_hbar_omega() {
    // hbar w = 3 meV, m* = 0.19: oscillator length ~11.6 nm, so a 200 nm
    // box keeps boundary effects far below the 0.5% tolerance.
    let hw = 3e-3;
    let vc = harmonic_line(2001, 200.0, 0.19, hw);
    let sol = solve_eigen(&vc, 4).unwrap();
    for w in sol.energies.windows(2) {
        let spacing = w[1] - w[0];
        assert!(
            (spacing - hw).abs() / hw < 5e-3,
            "spacing = {spacing:e} vs {hw:e}"
        );
    }
}

#[test]
fn harmonic_ground_state_width_is_four_sigma() {
    let hw = 3e-3;
    let mass = 0.19;
    let vc = harmonic_line(2001, 200.0, mass, hw);
    let sol = solve_eigen(&vc, 2).unwrap();
    let m = dot_metrics(&sol).unwrap();
    // sigma^2 = hbar/(2 m w) = (hbar^2/2m) / (hbar w)
    let sigma = (K / mass / hw).sqrt();
    let expect = 4.0 * sigma;
    assert!(
        (m.dx_nm - expect).abs() / expect < 0.01,
        "dx = {} vs 4 sigma = {expect}",
        m.dx_nm
    );
    assert!((m.x_nm - 100.0).abs() < 0.1);
}

#[test]
fn infinite_well_halving_ratio_is_second_order() {
    let length = 50.0;
    let mass = 0.19;
    let analytic = (std::f64::consts::PI / length).powi(2) * K / mass;
    let e = |nodes: usize| {
        let h = length / (nodes - 1) as f64;
        let vc = ConfinementPotential::line(0.0, h, vec![0.0; nodes], vec![mass; nodes]);
        solve_eigen(&vc, 2).unwrap().energies[0]
    };
    let err_coarse = (e(101) - analytic).abs();
    let err_fine = (e(201) - analytic).abs();
    let ratio = err_coarse / err_fine;
    assert!(ratio >= 3.5, "ratio = {ratio:.2}");
}

#[test]
fn negative_perturbation_never_raises_the_ground_state() {
    let base = harmonic_line(801, 120.0, 0.19, 3e-3);
    let e_base = solve_eigen(&base, 2).unwrap().energies[0];
    for &(center, depth, width) in
        &[(60.0, 1e-3, 5.0), (40.0, 5e-3, 10.0), (75.0, 2e-4, 2.0)]
    {
        let mut dipped = base.clone();
        for i in 0..dipped.nx {
            let x = dipped.x_at(i);
            dipped.v[i] -= depth * (-((x - center) / width).powi(2)).exp();
        }
        let e = solve_eigen(&dipped, 2).unwrap().energies[0];
        assert!(
            e <= e_base + 1e-12,
            "dip at {center}: E0 {e} > base {e_base}"
        );
    }
}

#[test]
fn two_dimensional_box_spectrum() {
    // Hard-wall box, 30 x 20 nm, anisotropic mass (0.19, 0.92).
    let (lx, lz) = (30.0, 20.0);
    let (mx, mz) = (0.19, 0.92);
    let (nx, nz) = (49, 33);
    let vc = ConfinementPotential {
        mode: QuantumMode::Plane,
        x0_nm: 0.0,
        hx_nm: lx / (nx - 1) as f64,
        nx,
        z0_nm: 0.0,
        hz_nm: lz / (nz - 1) as f64,
        nz,
        v: vec![0.0; nx * nz],
        mass_x: vec![mx; nx * nz],
        mass_z: vec![mz; nx * nz],
    };
    let sol = solve_eigen(&vc, 3).unwrap();
    let level = |n: i32, m: i32| {
        std::f64::consts::PI.powi(2)
            * K
            * ((n * n) as f64 / (mx * lx * lx) + (m * m) as f64 / (mz * lz * lz))
    };
    // The z direction quantizes more cheaply here (heavier mass wins over
    // the shorter box), so the order is (1,1), (1,2), (2,1).
    let expect = [level(1, 1), level(1, 2), level(2, 1)];
    for (got, want) in sol.energies.iter().zip(expect) {
        assert!(
            (got - want).abs() / want < 5e-3,
            "E = {got:e} vs {want:e}"
        );
    }
    // 2D normalization under the trapezoid measure.
    for i in 0..3 {
        assert!((sol.overlap(i, i) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn runtime_budget_for_line_oracles() {
    // Both 1D oracle problems must solve well under a second.
    let t0 = std::time::Instant::now();
    let vc = ConfinementPotential::line(
        0.0,
        50.0 / 400.0,
        vec![0.0; 401],
        vec![0.19; 401],
    );
    solve_eigen(&vc, 2).unwrap();
    let vc = harmonic_line(2001, 200.0, 0.19, 3e-3);
    solve_eigen(&vc, 2).unwrap();
    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}");
}
