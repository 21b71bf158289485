//! Fermi-Dirac carrier statistics.
//!
//! Boltzmann statistics underflow at cryogenic temperatures, so carrier
//! densities use the complete Fermi-Dirac integral of order 1/2 throughout.
//! The integral is evaluated with the Bednarczyk rational approximation,
//! accurate to better than 0.4% over the whole argument range, and its
//! analytic derivative so that the Poisson Newton iteration sees a Jacobian
//! consistent with the residual.

/// Normalized complete Fermi-Dirac integral of order 1/2:
/// F(eta) = (2/sqrt(pi)) * int_0^inf sqrt(x) / (1 + exp(x - eta)) dx,
/// normalized so F(eta) -> exp(eta) as eta -> -inf.
pub fn fermi_half(eta: f64) -> f64 {
    1.0 / (nu_term(eta) + (-eta).exp())
}

/// d/d(eta) of `fermi_half`. Equals F_{-1/2}(eta) up to the approximation
/// error of the rational form.
pub fn fermi_half_derivative(eta: f64) -> f64 {
    let g = nu_term(eta) + (-eta).exp();
    let dg = nu_term_derivative(eta) - (-eta).exp();
    -dg / (g * g)
}

const A: f64 = 0.75 * 1.772_453_850_905_516; // 3 sqrt(pi) / 4

fn nu(eta: f64) -> f64 {
    let w = eta + 1.0;
    eta.powi(4) + 50.0 + 33.6 * eta * (1.0 - 0.68 * (-0.17 * w * w).exp())
}

fn nu_term(eta: f64) -> f64 {
    A * nu(eta).powf(-0.375)
}

fn nu_term_derivative(eta: f64) -> f64 {
    let w = eta + 1.0;
    let e = (-0.17 * w * w).exp();
    let dnu = 4.0 * eta.powi(3) + 33.6 * (1.0 - 0.68 * e) + 33.6 * eta * 0.68 * 0.34 * w * e;
    -0.375 * A * nu(eta).powf(-1.375) * dnu
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force quadrature of the defining integral, used as the oracle
    /// for the rational approximation. Composite Simpson on [0, eta + 60]
    /// resolves the integrand to ~1e-10 for the etas tested here.
    fn fermi_half_quadrature(eta: f64) -> f64 {
        let upper = (eta + 60.0).max(60.0);
        let n = 400_000;
        let h = upper / n as f64;
        let f = |x: f64| -> f64 {
            if x <= 0.0 {
                return 0.0;
            }
            let t = x - eta;
            // sqrt(x) * fermi factor, written to avoid overflow for large t
            if t > 0.0 {
                x.sqrt() * (-t).exp() / (1.0 + (-t).exp())
            } else {
                x.sqrt() / (1.0 + t.exp())
            }
        };
        let mut s = f(0.0) + f(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(i as f64 * h);
        }
        s * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn matches_quadrature_within_half_percent() {
        for &eta in &[-30.0, -10.0, -4.0, -1.0, 0.0, 1.0, 4.0, 10.0, 50.0, 200.0, 600.0] {
            let approx = fermi_half(eta);
            let exact = fermi_half_quadrature(eta);
            let rel = (approx - exact).abs() / exact;
            assert!(rel < 5e-3, "eta = {eta}: rel err {rel:e}");
        }
    }

    #[test]
    fn boltzmann_limit() {
        // Non-degenerate tail: F(eta) -> exp(eta).
        for &eta in &[-25.0, -15.0, -10.0] {
            let rel = (fermi_half(eta) - eta.exp()).abs() / eta.exp();
            assert!(rel < 5e-3, "eta = {eta}: rel err {rel:e}");
        }
    }

    #[test]
    fn degenerate_limit() {
        // F(eta) -> (4/(3 sqrt(pi))) eta^{3/2} for large eta.
        let eta = 800.0_f64;
        let asym = 4.0 / (3.0 * std::f64::consts::PI.sqrt()) * eta.powf(1.5);
        let rel = (fermi_half(eta) - asym).abs() / asym;
        assert!(rel < 5e-3, "rel err {rel:e}");
    }

    #[test]
    fn derivative_consistent_with_finite_difference() {
        for &eta in &[-8.0_f64, -1.0, 0.0, 2.0, 30.0, 300.0] {
            let h = 1e-6 * eta.abs().max(1.0);
            let fd = (fermi_half(eta + h) - fermi_half(eta - h)) / (2.0 * h);
            let an = fermi_half_derivative(eta);
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-300), "eta = {eta}");
        }
    }

    #[test]
    fn strictly_increasing() {
        let mut prev = fermi_half(-40.0);
        let mut eta = -40.0;
        while eta < 400.0 {
            eta += 0.5;
            let v = fermi_half(eta);
            assert!(v > prev, "not increasing at eta = {eta}");
            prev = v;
        }
    }
}
