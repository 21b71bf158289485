//! Physical constants and the internal unit system.
//!
//! File inputs use nm, V, eV, K and cm^-3. Internally all energies are eV
//! relative to the Fermi level (global zero), potentials are volts and
//! positions are nm. The electrostatic assembly converts lengths to metres
//! and charge densities to C/m^3 at the last moment.

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Boltzmann constant, eV/K.
pub const KB_EV_PER_K: f64 = 8.617_333_262e-5;

/// Boltzmann constant, J/K (exact).
pub const KB_J_PER_K: f64 = 1.380_649e-23;

/// Planck constant, J.s (exact).
pub const PLANCK_H: f64 = 6.626_070_15e-34;

/// Reduced Planck constant, J.s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Free electron mass, kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// hbar^2 / (2 m_e) in eV.nm^2; divide by the relative effective mass to get
/// the kinetic prefactor of the envelope Hamiltonian.
pub const HBAR2_OVER_2ME_EV_NM2: f64 =
    HBAR * HBAR / (2.0 * ELECTRON_MASS * ELEMENTARY_CHARGE) * 1e18;

/// Statistics are never evaluated below this temperature: millikelvin
/// arguments make the Fermi-Dirac Jacobian singular to machine precision.
pub const TEMPERATURE_FLOOR_K: f64 = 1.0;

/// Effective temperature used by carrier statistics.
pub fn effective_temperature(t_kelvin: f64) -> f64 {
    t_kelvin.max(TEMPERATURE_FLOOR_K)
}

/// Effective conduction-band (or valence-band) density of states, m^-3,
/// for a density-of-states mass `m_dos` in units of the electron mass.
pub fn effective_dos(m_dos: f64, t_kelvin: f64) -> f64 {
    let t = effective_temperature(t_kelvin);
    let x = 2.0 * std::f64::consts::PI * m_dos * ELECTRON_MASS * KB_J_PER_K * t
        / (PLANCK_H * PLANCK_H);
    2.0 * x.powf(1.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinetic_prefactor_matches_literature() {
        // hbar^2/(2 m_e) = 0.0380998 eV.nm^2 to the digits quoted in most
        // band-structure texts.
        assert!((HBAR2_OVER_2ME_EV_NM2 - 0.0380998).abs() < 1e-6);
    }

    #[test]
    fn temperature_floor_applies() {
        assert_eq!(effective_temperature(0.01), 1.0);
        assert_eq!(effective_temperature(4.2), 4.2);
    }

    #[test]
    fn silicon_dos_scale() {
        // m_dos = 1 at 300 K gives the textbook 2.5e25 m^-3 scale.
        let nc = effective_dos(1.0, 300.0);
        assert!(nc > 2.4e25 && nc < 2.6e25, "nc = {nc:e}");
    }
}
