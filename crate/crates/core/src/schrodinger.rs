//! Effective-mass envelope Hamiltonian on the quantum subdomain.
//!
//! The kinetic term uses the flux-conserving variable-mass form with the
//! inverse mass averaged at half-grid points, so the operator stays
//! symmetric across mass discontinuities and reduces exactly to the
//! standard 3-point (1D) / 5-point (2D) stencil for uniform mass.
//!
//! Two solve paths share one contract ("k lowest eigenpairs, residual below
//! 1e-10 * |H|"): a Sturm-sequence bisection plus inverse iteration on the
//! tridiagonal 1D operator (the pipeline's fast path), and a dense
//! symmetric solve for 2D subdomains.

use crate::device::{Device, Dimension};
use crate::poisson::{interpolate, PotentialField, SolveError};
use crate::units::HBAR2_OVER_2ME_EV_NM2;
use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, thiserror::Error)]
pub enum EigenError {
    #[error("setup error: {0}")]
    Setup(String),
    #[error("eigensolver did not meet the residual contract: {residuals:?} > {bound:.3e}")]
    NonConvergence { residuals: Vec<f64>, bound: f64 },
}

/// Which quantum problem is solved on a 2D device: the channel line at
/// depth z_q, or the full x-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantumMode {
    Line,
    Plane,
}

/// Confinement potential restricted to the quantum subdomain, together with
/// the per-node effective masses the kinetic term needs.
#[derive(Debug, Clone)]
pub struct ConfinementPotential {
    pub mode: QuantumMode,
    pub x0_nm: f64,
    pub hx_nm: f64,
    pub nx: usize,
    pub z0_nm: f64,
    pub hz_nm: f64,
    pub nz: usize,
    /// Potential, eV, row-major with x fastest; nx*nz entries.
    pub v: Vec<f64>,
    /// Transport-direction effective mass per node, units of m_e.
    pub mass_x: Vec<f64>,
    /// Vertical effective mass per node; empty in line mode.
    pub mass_z: Vec<f64>,
}

impl ConfinementPotential {
    /// Line-mode constructor; also the hook tests use to drive the solver
    /// with analytic wells.
    pub fn line(x0_nm: f64, hx_nm: f64, v: Vec<f64>, mass_x: Vec<f64>) -> Self {
        assert_eq!(v.len(), mass_x.len());
        ConfinementPotential {
            mode: QuantumMode::Line,
            x0_nm,
            hx_nm,
            nx: v.len(),
            z0_nm: 0.0,
            hz_nm: 0.0,
            nz: 1,
            v,
            mass_x,
            mass_z: Vec::new(),
        }
    }

    pub fn x_at(&self, ix: usize) -> f64 {
        self.x0_nm + ix as f64 * self.hx_nm
    }
}

/// Extract the confinement potential from a solved field.
///
/// Line mode samples the band edge along z = z_q; plane mode restricts the
/// nodal band edge to the quantum bounding box.
pub fn confinement_potential(
    device: &Device,
    field: &PotentialField,
    mode: QuantumMode,
) -> Result<ConfinementPotential, SolveError> {
    let grid = &device.grid;
    let [ix0, ix1] = device.quantum_ix;
    let [iz0, iz1] = device.quantum_iz;
    if ix1 <= ix0 {
        return Err(SolveError::Setup("quantum subdomain is empty".into()));
    }
    let nx = ix1 - ix0 + 1;

    match (device.spec.dimension, mode) {
        (Dimension::One, _) | (Dimension::Two, QuantumMode::Line) => {
            let mut v = Vec::with_capacity(nx);
            let mut mass = Vec::with_capacity(nx);
            for ix in ix0..=ix1 {
                let x = grid.x(ix);
                match device.spec.dimension {
                    Dimension::One => {
                        let node = ix;
                        v.push(field.ec[node]);
                        mass.push(device.region_at(node).mass[0]);
                    }
                    Dimension::Two => {
                        v.push(interpolate(device, &field.ec, &[x, device.z_q_nm])?);
                        let iz = nearest_index(device.z_q_nm, grid.h_nm[1], grid.n[1]);
                        mass.push(device.region_at(grid.idx(ix, iz)).mass[0]);
                    }
                }
            }
            Ok(ConfinementPotential::line(
                grid.x(ix0),
                grid.h_nm[0],
                v,
                mass,
            ))
        }
        (Dimension::Two, QuantumMode::Plane) => {
            if iz1 <= iz0 {
                return Err(SolveError::Setup("quantum subdomain is empty".into()));
            }
            let nz = iz1 - iz0 + 1;
            let mut v = Vec::with_capacity(nx * nz);
            let mut mass_x = Vec::with_capacity(nx * nz);
            let mut mass_z = Vec::with_capacity(nx * nz);
            for iz in iz0..=iz1 {
                for ix in ix0..=ix1 {
                    let node = grid.idx(ix, iz);
                    v.push(field.ec[node]);
                    let m = &device.region_at(node).mass;
                    mass_x.push(m[0]);
                    mass_z.push(m[1]);
                }
            }
            Ok(ConfinementPotential {
                mode: QuantumMode::Plane,
                x0_nm: grid.x(ix0),
                hx_nm: grid.h_nm[0],
                nx,
                z0_nm: grid.z(iz0),
                hz_nm: grid.h_nm[1],
                nz,
                v,
                mass_x,
                mass_z,
            })
        }
    }
}

fn nearest_index(pos: f64, h: f64, n: usize) -> usize {
    ((pos / h).round().max(0.0) as usize).min(n - 1)
}

/// Lowest eigenpairs of the confinement problem with Dirichlet boundary.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Eigenenergies, eV, ascending, relative to the Fermi level.
    pub energies: Vec<f64>,
    /// Wavefunctions on the subdomain node set (boundary entries zero),
    /// normalized so that the trapezoid integral of |psi|^2 equals one.
    pub wavefunctions: Vec<Vec<f64>>,
    pub x0_nm: f64,
    pub hx_nm: f64,
    pub nx: usize,
    pub hz_nm: f64,
    pub nz: usize,
}

/// Scalar descriptors of the dot extracted from an eigensolution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DotMetrics {
    pub e0_eV: f64,
    pub e1_eV: f64,
    pub gap_eV: f64,
    /// Most probable position along the transport axis, nm.
    pub x_nm: f64,
    /// Dot size: four standard deviations of the position marginal, nm.
    pub dx_nm: f64,
    /// Peak of the normalized position marginal, 1/nm.
    pub p_max: f64,
}

pub fn solve_eigen(vconf: &ConfinementPotential, k: usize) -> Result<EigenSolution, EigenError> {
    if k < 2 {
        return Err(EigenError::Setup(
            "at least two states are required (the algorithms use E0 and E1)".into(),
        ));
    }
    match vconf.mode {
        QuantumMode::Line => solve_line(vconf, k),
        QuantumMode::Plane => solve_plane(vconf, k),
    }
}

const KIN: f64 = HBAR2_OVER_2ME_EV_NM2;

/// Half-point inverse mass: harmonic pairing of the adjacent node masses.
fn w_half(ma: f64, mb: f64) -> f64 {
    2.0 / (ma + mb)
}

/// Assemble the interior tridiagonal operator for line mode.
fn line_tridiag(vconf: &ConfinementPotential) -> (Vec<f64>, Vec<f64>) {
    let n = vconf.nx;
    let h2 = vconf.hx_nm * vconf.hx_nm;
    let m = &vconf.mass_x;
    let mut diag = Vec::with_capacity(n - 2);
    let mut off = Vec::with_capacity(n.saturating_sub(3));
    for i in 1..n - 1 {
        let wl = w_half(m[i - 1], m[i]);
        let wr = w_half(m[i], m[i + 1]);
        diag.push(KIN * (wl + wr) / h2 + vconf.v[i]);
        if i < n - 2 {
            off.push(-KIN * wr / h2);
        }
    }
    (diag, off)
}

fn solve_line(vconf: &ConfinementPotential, k: usize) -> Result<EigenSolution, EigenError> {
    let n = vconf.nx;
    if n < 5 {
        return Err(EigenError::Setup(format!(
            "line subdomain has {} interior nodes; need at least 3",
            n.saturating_sub(2)
        )));
    }
    let (diag, off) = line_tridiag(vconf);
    let m = diag.len();
    if k > m {
        return Err(EigenError::Setup(format!(
            "requested {k} states but the subdomain supports only {m}"
        )));
    }

    let energies = sturm_lowest(&diag, &off, k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (j, &lambda) in energies.iter().enumerate() {
        let v = inverse_iteration(&diag, &off, lambda, j, &vectors);
        vectors.push(v);
    }
    // Rayleigh-Ritz on the computed subspace cleans up near-degenerate
    // clusters (symmetric double wells).
    let (energies, vectors) = rayleigh_ritz(&diag, &off, vectors);

    finish_solution(vconf, energies, vectors, |x, y| tridiag_apply(&diag, &off, x, y))
}

fn tridiag_apply(diag: &[f64], off: &[f64], x: &[f64], y: &mut [f64]) {
    let m = diag.len();
    for i in 0..m {
        let mut acc = diag[i] * x[i];
        if i > 0 {
            acc += off[i - 1] * x[i - 1];
        }
        if i + 1 < m {
            acc += off[i] * x[i + 1];
        }
        y[i] = acc;
    }
}

/// Number of eigenvalues of the tridiagonal operator strictly below lambda.
fn sturm_count(diag: &[f64], off: &[f64], lambda: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - lambda;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let e = off[i - 1];
        if q == 0.0 {
            q = f64::MIN_POSITIVE;
        }
        q = diag[i] - lambda - e * e / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The k smallest eigenvalues by bisection on the Sturm count.
fn sturm_lowest(diag: &[f64], off: &[f64], k: usize) -> Vec<f64> {
    let m = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = off.get(i).map_or(0.0, |e| e.abs())
            + if i > 0 { off[i - 1].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let span = (hi - lo).max(f64::MIN_POSITIVE);

    (0..k)
        .map(|j| {
            let mut a = lo;
            let mut b = hi;
            // 80 halvings of the Gershgorin interval reach ~1e-24 * span,
            // past f64 resolution for any span.
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid) > j {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a <= 1e-15 * span {
                    break;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Inverse iteration at a converged shift, orthogonalized against the
/// vectors already found so near-degenerate pairs stay separated.
fn inverse_iteration(diag: &[f64], off: &[f64], lambda: f64, seed: usize, prev: &[Vec<f64>]) -> Vec<f64> {
    let m = diag.len();
    let mut v: Vec<f64> = (0..m).map(|i| pseudo_noise(seed, i)).collect();
    orthogonalize(&mut v, prev);
    normalize(&mut v);
    for _ in 0..4 {
        let mut w = factor_solve(diag, off, lambda, &v);
        orthogonalize(&mut w, prev);
        let nrm = norm(&w);
        if nrm == 0.0 {
            break;
        }
        for x in &mut w {
            *x /= nrm;
        }
        v = w;
    }
    v
}

/// Deterministic start-vector noise; avoids accidental orthogonality to the
/// target eigenvector without platform-dependent RNG.
fn pseudo_noise(seed: usize, i: usize) -> f64 {
    let mut s = (seed as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    s ^= s >> 30;
    s = s.wrapping_mul(0x94D0_49BB_1331_11EB);
    s ^= s >> 31;
    (s as f64 / u64::MAX as f64) * 2.0 - 1.0
}

/// Solve (T - lambda I) x = b by tridiagonal LU with partial pivoting;
/// near-singular pivots are perturbed, which is exactly what inverse
/// iteration wants.
fn factor_solve(diag: &[f64], off: &[f64], lambda: f64, b: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let scale: f64 = diag.iter().fold(0.0_f64, |a, &d| a.max(d.abs()))
        + off.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
    let tiny = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);

    // Row i spans columns (i-1, i, i+1, i+2) as (sub[i], d[i], c[i], f[i]);
    // f is the fill-in a row swap creates.
    let mut sub: Vec<f64> = (0..m).map(|i| if i > 0 { off[i - 1] } else { 0.0 }).collect();
    let mut d: Vec<f64> = diag.iter().map(|&v| v - lambda).collect();
    let mut c: Vec<f64> = (0..m).map(|i| if i + 1 < m { off[i] } else { 0.0 }).collect();
    let mut f = vec![0.0; m];
    let mut x = b.to_vec();

    for i in 0..m - 1 {
        if sub[i + 1].abs() > d[i].abs() {
            std::mem::swap(&mut d[i], &mut sub[i + 1]);
            let old_ci = c[i];
            c[i] = d[i + 1];
            d[i + 1] = old_ci;
            // Row i had no fill-in yet, so the swapped-down row gets zero.
            f[i] = c[i + 1];
            c[i + 1] = 0.0;
            x.swap(i, i + 1);
        }
        if d[i].abs() < tiny {
            d[i] = if d[i] < 0.0 { -tiny } else { tiny };
        }
        let l = sub[i + 1] / d[i];
        d[i + 1] -= l * c[i];
        c[i + 1] -= l * f[i];
        x[i + 1] -= l * x[i];
    }
    if d[m - 1].abs() < tiny {
        d[m - 1] = if d[m - 1] < 0.0 { -tiny } else { tiny };
    }

    // Back substitution.
    x[m - 1] /= d[m - 1];
    if m >= 2 {
        x[m - 2] = (x[m - 2] - c[m - 2] * x[m - 1]) / d[m - 2];
    }
    for i in (0..m.saturating_sub(2)).rev() {
        x[i] = (x[i] - c[i] * x[i + 1] - f[i] * x[i + 2]) / d[i];
    }
    x
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in v.iter_mut().zip(b) {
            *x -= proj * y;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v {
            *x /= n;
        }
    }
}

/// Diagonalize the operator restricted to the computed subspace and rotate.
fn rayleigh_ritz(diag: &[f64], off: &[f64], mut vectors: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = vectors.len();
    let m = diag.len();
    // Gram-Schmidt safety pass.
    for j in 0..k {
        let (done, rest) = vectors.split_at_mut(j);
        orthogonalize(&mut rest[0], done);
        normalize(&mut rest[0]);
    }
    let mut tv = vec![0.0; m];
    let mut b = DMatrix::zeros(k, k);
    for j in 0..k {
        tridiag_apply(diag, off, &vectors[j], &mut tv);
        for i in 0..k {
            let s: f64 = vectors[i].iter().zip(&tv).map(|(x, y)| x * y).sum();
            b[(i, j)] = s;
        }
    }
    let b = 0.5 * (&b + b.transpose());
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));

    let mut energies = Vec::with_capacity(k);
    let mut rotated = Vec::with_capacity(k);
    for &col in &order {
        energies.push(eig.eigenvalues[col]);
        let mut v = vec![0.0; m];
        for j in 0..k {
            let w = eig.eigenvectors[(j, col)];
            for (vi, xj) in v.iter_mut().zip(&vectors[j]) {
                *vi += w * xj;
            }
        }
        normalize(&mut v);
        rotated.push(v);
    }
    (energies, rotated)
}

fn solve_plane(vconf: &ConfinementPotential, k: usize) -> Result<EigenSolution, EigenError> {
    let (nx, nz) = (vconf.nx, vconf.nz);
    if nx < 5 || nz < 5 {
        return Err(EigenError::Setup(format!(
            "plane subdomain is {}x{} interior nodes; need at least 3 per axis",
            nx.saturating_sub(2),
            nz.saturating_sub(2)
        )));
    }
    let (mx, mz) = (nx - 2, nz - 2);
    let m = mx * mz;
    if k > m {
        return Err(EigenError::Setup(format!(
            "requested {k} states but the subdomain supports only {m}"
        )));
    }
    let hx2 = vconf.hx_nm * vconf.hx_nm;
    let hz2 = vconf.hz_nm * vconf.hz_nm;
    let at = |ix: usize, iz: usize| iz * nx + ix;

    let mut h = DMatrix::zeros(m, m);
    for iz in 1..nz - 1 {
        for ix in 1..nx - 1 {
            let row = (iz - 1) * mx + (ix - 1);
            let node = at(ix, iz);
            let wxl = w_half(vconf.mass_x[at(ix - 1, iz)], vconf.mass_x[node]);
            let wxr = w_half(vconf.mass_x[node], vconf.mass_x[at(ix + 1, iz)]);
            let wzd = w_half(vconf.mass_z[at(ix, iz - 1)], vconf.mass_z[node]);
            let wzu = w_half(vconf.mass_z[node], vconf.mass_z[at(ix, iz + 1)]);
            h[(row, row)] =
                KIN * ((wxl + wxr) / hx2 + (wzd + wzu) / hz2) + vconf.v[node];
            if ix > 1 {
                h[(row, row - 1)] = -KIN * wxl / hx2;
            }
            if ix < nx - 2 {
                h[(row, row + 1)] = -KIN * wxr / hx2;
            }
            if iz > 1 {
                h[(row, row - mx)] = -KIN * wzd / hz2;
            }
            if iz < nz - 2 {
                h[(row, row + mx)] = -KIN * wzu / hz2;
            }
        }
    }

    let h_for_apply = h.clone();
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let energies: Vec<f64> = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            let mut v: Vec<f64> = col.iter().copied().collect();
            normalize(&mut v);
            v
        })
        .collect();

    finish_solution(vconf, energies, vectors, move |x, y| {
        let xx = nalgebra::DVector::from_column_slice(x);
        let prod = &h_for_apply * xx;
        y.copy_from_slice(prod.as_slice());
    })
}

/// Embed interior eigenvectors onto the full subdomain grid, apply the
/// trapezoid normalization, and verify the solver contract.
fn finish_solution(
    vconf: &ConfinementPotential,
    energies: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    apply: impl Fn(&[f64], &mut [f64]),
) -> Result<EigenSolution, EigenError> {
    let (nx, nz) = (vconf.nx, vconf.nz);
    let k = energies.len();

    // Residual contract against the interior operator.
    let hnorm = {
        // max row sum via apply on unit vectors would be O(m^2); bound it by
        // Gershgorin from the potential and kinetic scales instead.
        let vmax = vconf.v.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        let mmin = vconf
            .mass_x
            .iter()
            .chain(&vconf.mass_z)
            .fold(f64::INFINITY, |a, &m| a.min(m));
        let mut kin = 4.0 * KIN / (mmin * vconf.hx_nm * vconf.hx_nm);
        if vconf.mode == QuantumMode::Plane {
            kin += 4.0 * KIN / (mmin * vconf.hz_nm * vconf.hz_nm);
        }
        vmax + kin
    };
    let bound = 1e-10 * hnorm;
    let mut residuals = Vec::with_capacity(k);
    let mut buf = vec![0.0; vectors[0].len()];
    for (e, v) in energies.iter().zip(&vectors) {
        apply(v, &mut buf);
        let r: f64 = buf
            .iter()
            .zip(v)
            .map(|(hv, vi)| (hv - e * vi) * (hv - e * vi))
            .sum::<f64>()
            .sqrt();
        residuals.push(r);
    }
    if residuals.iter().any(|&r| r > bound) {
        return Err(EigenError::NonConvergence { residuals, bound });
    }

    // Trapezoid measure: boundary values are zero, so the l2-normalized
    // interior vector only needs the cell-measure rescaling.
    let measure = if vconf.mode == QuantumMode::Plane {
        vconf.hx_nm * vconf.hz_nm
    } else {
        vconf.hx_nm
    };
    let scale = 1.0 / measure.sqrt();

    let wavefunctions: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut full = vec![0.0; nx * nz];
            match vconf.mode {
                QuantumMode::Line => {
                    for (i, &x) in v.iter().enumerate() {
                        full[i + 1] = x * scale;
                    }
                }
                QuantumMode::Plane => {
                    let mx = nx - 2;
                    for (r, &x) in v.iter().enumerate() {
                        let ix = r % mx + 1;
                        let iz = r / mx + 1;
                        full[iz * nx + ix] = x * scale;
                    }
                }
            }
            full
        })
        .collect();

    Ok(EigenSolution {
        energies,
        wavefunctions,
        x0_nm: vconf.x0_nm,
        hx_nm: vconf.hx_nm,
        nx,
        hz_nm: vconf.hz_nm,
        nz,
    })
}

impl EigenSolution {
    /// Position marginal of the ground state, normalized to unit integral.
    pub fn ground_marginal(&self) -> Vec<f64> {
        let psi = &self.wavefunctions[0];
        let mut rho = vec![0.0; self.nx];
        if self.nz == 1 {
            for (r, &p) in rho.iter_mut().zip(psi) {
                *r = p * p;
            }
        } else {
            for iz in 0..self.nz {
                for ix in 0..self.nx {
                    rho[ix] += psi[iz * self.nx + ix].powi(2) * self.hz_nm;
                }
            }
        }
        let total: f64 = rho.iter().sum::<f64>() * self.hx_nm;
        if total > 0.0 {
            for r in &mut rho {
                *r /= total;
            }
        }
        rho
    }

    /// Inner product of two stored states under the trapezoid measure.
    pub fn overlap(&self, i: usize, j: usize) -> f64 {
        let measure = if self.nz == 1 {
            self.hx_nm
        } else {
            self.hx_nm * self.hz_nm
        };
        self.wavefunctions[i]
            .iter()
            .zip(&self.wavefunctions[j])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * measure
    }
}

/// Derive the scalar dot descriptors from an eigensolution.
pub fn dot_metrics(sol: &EigenSolution) -> Result<DotMetrics, EigenError> {
    if sol.energies.len() < 2 {
        return Err(EigenError::Setup("dot metrics need at least two states".into()));
    }
    let rho = sol.ground_marginal();
    let h = sol.hx_nm;

    // Leftmost maximum, then parabolic sub-grid refinement.
    let mut jmax = 0;
    for (j, &r) in rho.iter().enumerate() {
        if r > rho[jmax] {
            jmax = j;
        }
    }
    let p_max = rho[jmax];
    let mut x = sol.x0_nm + jmax as f64 * h;
    if jmax > 0 && jmax + 1 < rho.len() {
        let denom = rho[jmax - 1] - 2.0 * rho[jmax] + rho[jmax + 1];
        if denom < 0.0 {
            x += 0.5 * h * (rho[jmax - 1] - rho[jmax + 1]) / denom;
        }
    }

    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (j, &r) in rho.iter().enumerate() {
        let xj = sol.x0_nm + j as f64 * h;
        m1 += xj * r * h;
        m2 += xj * xj * r * h;
    }
    let var = (m2 - m1 * m1).max(0.0);
    let dx = 4.0 * var.sqrt();

    Ok(DotMetrics {
        e0_eV: sol.energies[0],
        e1_eV: sol.energies[1],
        gap_eV: sol.energies[1] - sol.energies[0],
        x_nm: x,
        dx_nm: dx,
        p_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn infinite_well(nodes: usize, length: f64, mass: f64) -> ConfinementPotential {
        let h = length / (nodes - 1) as f64;
        ConfinementPotential::line(0.0, h, vec![0.0; nodes], vec![mass; nodes])
    }

    #[test]
    fn uniform_mass_reduces_to_standard_stencil() {
        let vc = infinite_well(11, 10.0, 0.5);
        let (diag, off) = line_tridiag(&vc);
        let expect_off = -KIN * (1.0 / 0.5) / 1.0;
        for &e in &off {
            assert_eq!(e, expect_off);
        }
        for &d in &diag {
            assert_eq!(d, -2.0 * expect_off);
        }
    }

    #[test]
    fn infinite_well_levels() {
        let length = 50.0;
        let mass = 0.19;
        let vc = infinite_well(401, length, mass);
        let sol = solve_eigen(&vc, 2).unwrap();
        for n in 1..=2 {
            let analytic = (n as f64 * std::f64::consts::PI / length).powi(2) * KIN / mass;
            let got = sol.energies[n - 1];
            let rel = (got - analytic).abs() / analytic;
            assert!(rel < 5e-3, "n = {n}: rel err {rel:e}");
        }
    }

    #[test]
    fn orthonormal_under_trapezoid_measure() {
        let vc = infinite_well(201, 50.0, 0.19);
        let sol = solve_eigen(&vc, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (sol.overlap(i, j) - expect).abs() < 1e-10,
                    "({i},{j}) = {}",
                    sol.overlap(i, j)
                );
            }
        }
    }

    #[test]
    fn k_less_than_two_rejected() {
        let vc = infinite_well(51, 50.0, 0.19);
        assert!(matches!(solve_eigen(&vc, 1), Err(EigenError::Setup(_))));
    }

    #[test]
    fn well_metrics_match_sine_moments() {
        let length = 50.0;
        let vc = infinite_well(401, length, 0.19);
        let sol = solve_eigen(&vc, 2).unwrap();
        let m = dot_metrics(&sol).unwrap();
        // Ground state of the box: centered, width 4*L*sqrt(1/12 - 1/(2 pi^2)).
        let dx = 4.0 * length * (1.0 / 12.0 - 0.5 / std::f64::consts::PI.powi(2)).sqrt();
        assert!((m.x_nm - 25.0).abs() < 0.05, "x = {}", m.x_nm);
        assert!((m.dx_nm - dx).abs() / dx < 0.01, "dx = {} vs {}", m.dx_nm, dx);
        // Peak of (2/L) sin^2 at the center is 2/L.
        assert!((m.p_max - 2.0 / length).abs() / (2.0 / length) < 0.01);
    }

    fn double_well(barrier_ev: f64) -> EigenSolution {
        // Wells [0, 23] and [27, 50] with a grid-symmetric barrier. Node i
        // mirrors node n-1-i exactly, so the pair is a true parity doublet.
        let n = 501;
        let h = 50.0 / (n - 1) as f64;
        let v: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 * h;
                if (23.0..=27.0).contains(&x) {
                    barrier_ev
                } else {
                    0.0
                }
            })
            .collect();
        let vc = ConfinementPotential::line(0.0, h, v, vec![0.19; n]);
        solve_eigen(&vc, 2).unwrap()
    }

    #[test]
    fn double_well_parity_and_barrier_limit() {
        // Tunnel splitting shrinks monotonically as the barrier grows.
        let splits: Vec<f64> = [0.03, 0.06, 0.12]
            .iter()
            .map(|&b| {
                let sol = double_well(b);
                sol.energies[1] - sol.energies[0]
            })
            .collect();
        assert!(splits.iter().all(|&s| s > 0.0), "{splits:?}");
        assert!(splits[0] > 2.0 * splits[1] && splits[1] > 2.0 * splits[2], "{splits:?}");

        // Ground state even, first excited state odd about the midpoint.
        let sol = double_well(0.03);
        let n = sol.nx;
        let amp0 = sol.wavefunctions[0].iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        let amp1 = sol.wavefunctions[1].iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        for i in 0..n {
            let j = n - 1 - i;
            let even_err = sol.wavefunctions[0][i] - sol.wavefunctions[0][j];
            let odd_err = sol.wavefunctions[1][i] + sol.wavefunctions[1][j];
            assert!(even_err.abs() < 1e-6 * amp0, "even parity broken at {i}");
            assert!(odd_err.abs() < 1e-6 * amp1, "odd parity broken at {i}");
        }

        // The symmetric ground-state marginal spans both wells.
        let m = dot_metrics(&sol).unwrap();
        assert!(m.dx_nm > 25.0, "dx = {}", m.dx_nm);
    }

    #[test]
    fn exact_tie_breaks_to_the_left_peak() {
        // Hand-built marginal with two bitwise-identical peaks.
        let n = 101;
        let h = 1.0;
        let peak = |c: f64, x: f64| (-(x - c) * (x - c) / 18.0).exp();
        let psi0: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 * h;
                peak(30.0, x) + peak(70.0, x)
            })
            .collect();
        let norm = (psi0.iter().map(|p| p * p).sum::<f64>() * h).sqrt();
        let psi0: Vec<f64> = psi0.iter().map(|p| p / norm).collect();
        let sol = EigenSolution {
            energies: vec![-0.01, -0.005],
            wavefunctions: vec![psi0.clone(), psi0],
            x0_nm: 0.0,
            hx_nm: h,
            nx: n,
            hz_nm: 0.0,
            nz: 1,
        };
        let m = dot_metrics(&sol).unwrap();
        assert!((m.x_nm - 30.0).abs() < 0.5, "x = {}", m.x_nm);
    }
}
