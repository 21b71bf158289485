//! Cryogenic Poisson solver on the device grid.
//!
//! Finite-volume box integration on the rectilinear grid. Edge
//! permittivities are path-harmonic averages of epsilon along the edge, so
//! material interfaces that sit on grid lines are resolved exactly and
//! interfaces inside a cell degrade gracefully. Dirichlet values come from
//! gates (applied voltage plus work-function offset) and contacts; every
//! other boundary is homogeneous Neumann.
//!
//! Semiclassical regions contribute electron and hole densities evaluated
//! from Fermi-Dirac statistics at the node potential; the nonlinear system
//! is solved by damped Newton with the analytic charge derivative.

use crate::device::{ChargeModel, Device, Dimension, DirichletTag};
use crate::linalg::solve_tridiagonal;
use crate::statistics::{fermi_half, fermi_half_derivative};
use crate::units::{
    effective_dos, effective_temperature, ELEMENTARY_CHARGE, EPSILON_0, KB_EV_PER_K,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const NM: f64 = 1e-9;
/// cm^-3 to m^-3 (and C/cm^3 to C/m^3).
const PER_CM3_TO_PER_M3: f64 = 1e6;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("setup error: {0}")]
    Setup(String),
    #[error("bias error: {0}")]
    Bias(String),
    #[error("linear solver stalled: {0}")]
    LinearSolve(String),
    #[error(
        "nonlinear iteration failed to converge: residual {residual:.3e} \
         (scale {scale:.3e}) after {iterations} iterations"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        scale: f64,
    },
    #[error("point {point:?} nm lies outside the domain")]
    Range { point: Vec<f64> },
}

/// Named gate voltages; the unknown the bias-search algorithms solve for.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasPoint(pub BTreeMap<String, f64>);

impl BiasPoint {
    pub fn zero(device: &Device) -> Self {
        BiasPoint(
            device
                .spec
                .gates
                .iter()
                .map(|g| (g.name.clone(), 0.0))
                .collect(),
        )
    }

    pub fn get(&self, gate: &str) -> Option<f64> {
        self.0.get(gate).copied()
    }

    pub fn with(&self, gate: &str, volts: f64) -> Self {
        let mut b = self.clone();
        b.0.insert(gate.to_string(), volts);
        b
    }

    fn validate(&self, device: &Device) -> Result<(), SolveError> {
        for g in &device.spec.gates {
            match self.0.get(&g.name) {
                None => {
                    return Err(SolveError::Bias(format!(
                        "bias does not cover gate '{}'",
                        g.name
                    )))
                }
                Some(v) if !v.is_finite() => {
                    return Err(SolveError::Bias(format!(
                        "bias for gate '{}' is not finite",
                        g.name
                    )))
                }
                _ => {}
            }
        }
        for name in self.0.keys() {
            if device.spec.gate(name).is_none() {
                return Err(SolveError::Bias(format!("unknown gate '{name}' in bias")));
            }
        }
        Ok(())
    }
}

/// Electric potential and derived conduction-band edge on the grid.
#[derive(Debug, Clone)]
pub struct PotentialField {
    /// Electric potential, V, per node.
    pub phi: Vec<f64>,
    /// Conduction-band edge, eV, per node: band offset minus e*phi.
    pub ec: Vec<f64>,
    /// Net charge density, C/cm^3, per node.
    pub charge: Vec<f64>,
    /// Newton iterations taken (1 for a linear device).
    pub iterations: usize,
    /// Final max-norm flux residual and the scale it was compared against.
    pub residual: f64,
    pub residual_scale: f64,
}

/// Tolerances of the nonlinear solve. The defaults are the module contract;
/// tests override them to exercise the error paths.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub max_newton: usize,
    pub max_backtrack: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-10,
            max_newton: 200,
            max_backtrack: 20,
        }
    }
}

pub fn solve_poisson(device: &Device, bias: &BiasPoint) -> Result<PotentialField, SolveError> {
    solve_poisson_with(device, bias, SolveOptions::default())
}

pub fn solve_poisson_with(
    device: &Device,
    bias: &BiasPoint,
    opts: SolveOptions,
) -> Result<PotentialField, SolveError> {
    bias.validate(device)?;
    let asm = Assembly::new(device, bias)?;
    let n = device.grid.len();

    let mut phi = vec![0.0; n];
    for i in 0..n {
        if let Some(v) = asm.dirichlet[i] {
            phi[i] = v;
        }
    }

    let mut residual = vec![0.0; n];
    let mut iterations = 0;
    let (mut rnorm, mut scale);

    loop {
        asm.residual(&phi, &mut residual);
        (rnorm, scale) = asm.residual_scale(&phi, &residual);
        if rnorm <= opts.rel_tol * scale {
            break;
        }
        if iterations >= opts.max_newton {
            return Err(SolveError::NonConvergence {
                iterations,
                residual: rnorm,
                scale,
            });
        }
        iterations += 1;

        let delta = asm.newton_step(&phi, &residual)?;

        // Backtrack on the Euclidean residual norm.
        let r0 = norm2(&residual);
        let mut t = 1.0;
        let mut trial = phi.clone();
        let mut ok = false;
        for _ in 0..=opts.max_backtrack {
            for i in 0..n {
                trial[i] = phi[i] + t * delta[i];
            }
            asm.residual(&trial, &mut residual);
            if norm2(&residual) < r0 || r0 == 0.0 {
                ok = true;
                break;
            }
            t *= 0.5;
        }
        if !ok {
            return Err(SolveError::NonConvergence {
                iterations,
                residual: rnorm,
                scale,
            });
        }
        std::mem::swap(&mut phi, &mut trial);
    }

    let ec: Vec<f64> = (0..n)
        .map(|i| device.region_at(i).band_offset_eV - phi[i])
        .collect();
    let charge: Vec<f64> = (0..n)
        .map(|i| asm.charge_density_c_cm3(i, phi[i]))
        .collect();

    Ok(PotentialField {
        phi,
        ec,
        charge,
        iterations,
        residual: rnorm,
        residual_scale: scale,
    })
}

/// Interpolate the conduction-band edge at a point (nm). Linear in 1D,
/// bilinear in 2D.
pub fn band_edge_at(device: &Device, field: &PotentialField, point: &[f64]) -> Result<f64, SolveError> {
    interpolate(device, &field.ec, point)
}

/// Interpolate any nodal grid function at a point (nm).
pub fn interpolate(device: &Device, values: &[f64], point: &[f64]) -> Result<f64, SolveError> {
    let grid = &device.grid;
    let axes = device.spec.dimension.axes();
    if point.len() != axes {
        return Err(SolveError::Range {
            point: point.to_vec(),
        });
    }
    for (a, &p) in point.iter().enumerate() {
        if !(0.0..=device.spec.extent_nm[a] + 1e-9).contains(&p) {
            return Err(SolveError::Range {
                point: point.to_vec(),
            });
        }
    }

    let locate = |p: f64, h: f64, n: usize| -> (usize, f64) {
        let t = (p / h).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        (i, t - i as f64)
    };

    match device.spec.dimension {
        Dimension::One => {
            let (i, f) = locate(point[0], grid.h_nm[0], grid.n[0]);
            Ok(values[i] * (1.0 - f) + values[i + 1] * f)
        }
        Dimension::Two => {
            let (ix, fx) = locate(point[0], grid.h_nm[0], grid.n[0]);
            let (iz, fz) = locate(point[1], grid.h_nm[1], grid.n[1]);
            let v00 = values[grid.idx(ix, iz)];
            let v10 = values[grid.idx(ix + 1, iz)];
            let v01 = values[grid.idx(ix, iz + 1)];
            let v11 = values[grid.idx(ix + 1, iz + 1)];
            Ok(v00 * (1.0 - fx) * (1.0 - fz)
                + v10 * fx * (1.0 - fz)
                + v01 * (1.0 - fx) * fz
                + v11 * fx * fz)
        }
    }
}

/// Write the optional field dump rows: `x_nm[,z_nm],phi_V,ec_eV,charge_Ccm3`.
pub fn field_rows(device: &Device, field: &PotentialField) -> Vec<Vec<f64>> {
    let grid = &device.grid;
    let mut rows = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let p = grid.position(node);
        let mut row = vec![p[0]];
        if device.spec.dimension == Dimension::Two {
            row.push(p[1]);
        }
        row.extend([field.phi[node], field.ec[node], field.charge[node]]);
        rows.push(row);
    }
    rows
}

/// One semiclassical contribution to a node box: region index and the
/// portion of the box measure it covers (m^2 per unit depth in 2D, m in 1D).
struct SemiPart {
    region: u16,
    measure_si: f64,
}

struct Assembly<'a> {
    device: &'a Device,
    /// x-edge conductances, SI, indexed `iz*(nx-1)+ix` for edge (ix,ix+1).
    cx: Vec<f64>,
    /// z-edge conductances, SI, indexed `iz*nx+ix` for edge (iz,iz+1).
    cz: Vec<f64>,
    /// Dirichlet value per node, if clamped.
    dirichlet: Vec<Option<f64>>,
    /// Frozen charge integrated over each node box, C per unit depth.
    frozen_q: Vec<f64>,
    /// Semiclassical region portions of each node box.
    semi: Vec<Vec<SemiPart>>,
    /// Node box measure, SI.
    box_measure: Vec<f64>,
    /// Effective DOS per region (m^-3) and kT (eV), precomputed.
    nc: Vec<f64>,
    kt_ev: f64,
}

impl<'a> Assembly<'a> {
    fn new(device: &'a Device, bias: &BiasPoint) -> Result<Self, SolveError> {
        let grid = &device.grid;
        let spec = &device.spec;
        let (nx, nz) = (grid.n[0], grid.n[1]);
        let two_d = spec.dimension == Dimension::Two;
        let hx = grid.h_nm[0] * NM;
        let hz = if two_d { grid.h_nm[1] * NM } else { 0.0 };

        let mut dirichlet = vec![None; grid.len()];
        let mut any = false;
        for node in 0..grid.len() {
            dirichlet[node] = match grid.dirichlet[node] {
                DirichletTag::Free => None,
                DirichletTag::Gate(gi) => {
                    let g = &spec.gates[gi as usize];
                    any = true;
                    Some(bias.get(&g.name).unwrap() + g.work_function_offset_V)
                }
                DirichletTag::Contact(ci) => {
                    any = true;
                    Some(spec.contacts[ci as usize].potential_V)
                }
            };
        }
        if !any {
            return Err(SolveError::Setup(
                "no Dirichlet segment anywhere: the system is singular".into(),
            ));
        }

        // Edge conductances. The z-extent of an x-edge's flux window is hz
        // for interior rows and hz/2 on the top/bottom rows (and 1 in 1D).
        let mut cx = vec![0.0; (nx - 1) * nz.max(1)];
        let mut cz = vec![0.0; if two_d { nx * (nz - 1) } else { 0 }];
        for iz in 0..nz {
            let window = if !two_d {
                1.0
            } else if iz == 0 || iz == nz - 1 {
                hz * 0.5
            } else {
                hz
            };
            for ix in 0..nx - 1 {
                let epsr = harmonic_epsr(
                    device,
                    0,
                    grid.z(iz),
                    grid.x(ix),
                    grid.x(ix + 1),
                );
                cx[iz * (nx - 1) + ix] = EPSILON_0 * epsr * window / hx;
            }
        }
        if two_d {
            for iz in 0..nz - 1 {
                for ix in 0..nx {
                    let window = if ix == 0 || ix == nx - 1 { hx * 0.5 } else { hx };
                    let epsr = harmonic_epsr(
                        device,
                        1,
                        grid.x(ix),
                        grid.z(iz),
                        grid.z(iz + 1),
                    );
                    cz[iz * nx + ix] = EPSILON_0 * epsr * window / hz;
                }
            }
        }

        // Node boxes: frozen charge integral and semiclassical portions.
        let kt_ev = KB_EV_PER_K * effective_temperature(spec.temperature_K);
        let nc: Vec<f64> = spec
            .regions
            .iter()
            .map(|r| effective_dos(r.dos_mass(), spec.temperature_K))
            .collect();

        let mut frozen_q = vec![0.0; grid.len()];
        let mut semi: Vec<Vec<SemiPart>> = (0..grid.len()).map(|_| Vec::new()).collect();
        let mut box_measure = vec![0.0; grid.len()];

        for iz in 0..nz {
            for ix in 0..nx {
                let node = grid.idx(ix, iz);
                let x = grid.x(ix);
                let bx = [
                    (x - 0.5 * grid.h_nm[0]).max(0.0),
                    (x + 0.5 * grid.h_nm[0]).min(spec.extent_nm[0]),
                ];
                let bz = if two_d {
                    let z = grid.z(iz);
                    [
                        (z - 0.5 * grid.h_nm[1]).max(0.0),
                        (z + 0.5 * grid.h_nm[1]).min(spec.extent_nm[1]),
                    ]
                } else {
                    [0.0, 0.0]
                };
                for (ri, r) in spec.regions.iter().enumerate() {
                    let ox = overlap(bx, [r.box_nm.lo(0), r.box_nm.hi(0)]);
                    if ox <= 0.0 {
                        continue;
                    }
                    let m_nm = if two_d {
                        let oz = overlap(bz, [r.box_nm.lo(1), r.box_nm.hi(1)]);
                        if oz <= 0.0 {
                            continue;
                        }
                        ox * oz
                    } else {
                        ox
                    };
                    let m_si = m_nm * if two_d { NM * NM } else { NM };
                    box_measure[node] += m_si;
                    let rho_frozen = (ELEMENTARY_CHARGE
                        * (r.donor_cm3 - r.acceptor_cm3)
                        + r.fixed_charge_Ccm3)
                        * PER_CM3_TO_PER_M3;
                    frozen_q[node] += rho_frozen * m_si;
                    if r.charge_model == ChargeModel::Semiclassical {
                        semi[node].push(SemiPart {
                            region: ri as u16,
                            measure_si: m_si,
                        });
                    }
                }
            }
        }

        Ok(Assembly {
            device,
            cx,
            cz,
            dirichlet,
            frozen_q,
            semi,
            box_measure,
            nc,
            kt_ev,
        })
    }

    /// Mobile charge in a node box at potential `phi`, C per unit depth,
    /// and its derivative with respect to phi.
    fn mobile_q(&self, node: usize, phi: f64) -> (f64, f64) {
        if self.semi[node].is_empty() {
            return (0.0, 0.0);
        }
        let (mut q, mut dq) = (0.0, 0.0);
        for part in &self.semi[node] {
            let r = &self.device.spec.regions[part.region as usize];
            let nc = self.nc[part.region as usize];
            let eta_n = (phi - r.band_offset_eV) / self.kt_ev;
            let n = nc * fermi_half(eta_n);
            let dn = nc * fermi_half_derivative(eta_n) / self.kt_ev;
            let (p, dp) = match r.valence_offset_eV {
                Some(ev_off) => {
                    let eta_p = (ev_off - phi) / self.kt_ev;
                    (
                        nc * fermi_half(eta_p),
                        -nc * fermi_half_derivative(eta_p) / self.kt_ev,
                    )
                }
                None => (0.0, 0.0),
            };
            q += ELEMENTARY_CHARGE * (p - n) * part.measure_si;
            dq += ELEMENTARY_CHARGE * (dp - dn) * part.measure_si;
        }
        (q, dq)
    }

    fn charge_density_c_cm3(&self, node: usize, phi: f64) -> f64 {
        let (mq, _) = self.mobile_q(node, phi);
        (self.frozen_q[node] + mq) / self.box_measure[node] / PER_CM3_TO_PER_M3
    }

    /// Flux-conservation residual at every node (zero at clamped nodes).
    fn residual(&self, phi: &[f64], out: &mut [f64]) {
        let grid = &self.device.grid;
        let (nx, nz) = (grid.n[0], grid.n[1]);
        for node in 0..grid.len() {
            if self.dirichlet[node].is_some() {
                out[node] = 0.0;
                continue;
            }
            let ix = node % nx;
            let iz = node / nx;
            let mut flux = 0.0;
            if ix > 0 {
                flux += self.cx[iz * (nx - 1) + ix - 1] * (phi[node - 1] - phi[node]);
            }
            if ix + 1 < nx {
                flux += self.cx[iz * (nx - 1) + ix] * (phi[node + 1] - phi[node]);
            }
            if nz > 1 {
                if iz > 0 {
                    flux += self.cz[(iz - 1) * nx + ix] * (phi[node - nx] - phi[node]);
                }
                if iz + 1 < nz {
                    flux += self.cz[iz * nx + ix] * (phi[node + nx] - phi[node]);
                }
            }
            let (mq, _) = self.mobile_q(node, phi[node]);
            out[node] = flux + self.frozen_q[node] + mq;
        }
    }

    /// Max-norm residual together with the problem scale it is relative to.
    fn residual_scale(&self, phi: &[f64], residual: &[f64]) -> (f64, f64) {
        let grid = &self.device.grid;
        let (nx, nz) = (grid.n[0], grid.n[1]);
        let v_ref = phi
            .iter()
            .fold(1.0_f64, |m, &v| m.max(v.abs()));
        let mut scale = 0.0_f64;
        for node in 0..grid.len() {
            if self.dirichlet[node].is_some() {
                continue;
            }
            let ix = node % nx;
            let iz = node / nx;
            let mut csum = 0.0;
            if ix > 0 {
                csum += self.cx[iz * (nx - 1) + ix - 1];
            }
            if ix + 1 < nx {
                csum += self.cx[iz * (nx - 1) + ix];
            }
            if nz > 1 {
                if iz > 0 {
                    csum += self.cz[(iz - 1) * nx + ix];
                }
                if iz + 1 < nz {
                    csum += self.cz[iz * nx + ix];
                }
            }
            let (mq, _) = self.mobile_q(node, phi[node]);
            scale = scale.max(csum * v_ref + self.frozen_q[node].abs() + mq.abs());
        }
        let rnorm = residual.iter().fold(0.0_f64, |m, &r| m.max(r.abs()));
        (rnorm, scale.max(f64::MIN_POSITIVE))
    }

    /// One Newton step: solve (L - dq/dphi) delta = residual with delta = 0
    /// on clamped nodes. Direct tridiagonal solve in 1D, Jacobi-PCG in 2D.
    fn newton_step(&self, phi: &[f64], residual: &[f64]) -> Result<Vec<f64>, SolveError> {
        let grid = &self.device.grid;
        let (nx, nz) = (grid.n[0], grid.n[1]);
        let n = grid.len();

        let diag_at = |node: usize| -> f64 {
            let ix = node % nx;
            let iz = node / nx;
            let mut d = 0.0;
            if ix > 0 {
                d += self.cx[iz * (nx - 1) + ix - 1];
            }
            if ix + 1 < nx {
                d += self.cx[iz * (nx - 1) + ix];
            }
            if nz > 1 {
                if iz > 0 {
                    d += self.cz[(iz - 1) * nx + ix];
                }
                if iz + 1 < nz {
                    d += self.cz[iz * nx + ix];
                }
            }
            let (_, dq) = self.mobile_q(node, phi[node]);
            d - dq
        };

        if self.device.spec.dimension == Dimension::One {
            let mut lower = vec![0.0; n];
            let mut diag = vec![0.0; n];
            let mut upper = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            for node in 0..n {
                if self.dirichlet[node].is_some() {
                    diag[node] = 1.0;
                    continue;
                }
                diag[node] = diag_at(node);
                rhs[node] = residual[node];
                if node > 0 && self.dirichlet[node - 1].is_none() {
                    lower[node] = -self.cx[node - 1];
                }
                if node + 1 < n && self.dirichlet[node + 1].is_none() {
                    upper[node] = -self.cx[node];
                }
            }
            return solve_tridiagonal(&lower, &diag, &upper, &rhs)
                .ok_or_else(|| SolveError::LinearSolve("singular tridiagonal system".into()));
        }

        // 2D: Jacobi-preconditioned conjugate gradient on the free nodes.
        let free: Vec<bool> = (0..n).map(|i| self.dirichlet[i].is_none()).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| if free[i] { diag_at(i) } else { 1.0 })
            .collect();

        let apply = |x: &[f64], y: &mut [f64]| {
            for node in 0..n {
                if !free[node] {
                    y[node] = 0.0;
                    continue;
                }
                let ix = node % nx;
                let iz = node / nx;
                let mut acc = diag[node] * x[node];
                if ix > 0 && free[node - 1] {
                    acc -= self.cx[iz * (nx - 1) + ix - 1] * x[node - 1];
                }
                if ix + 1 < nx && free[node + 1] {
                    acc -= self.cx[iz * (nx - 1) + ix] * x[node + 1];
                }
                if iz > 0 && free[node - nx] {
                    acc -= self.cz[(iz - 1) * nx + ix] * x[node - nx];
                }
                if iz + 1 < nz && free[node + nx] {
                    acc -= self.cz[iz * nx + ix] * x[node + nx];
                }
                y[node] = acc;
            }
        };

        let mut b = vec![0.0; n];
        for node in 0..n {
            if free[node] {
                b[node] = residual[node];
            }
        }
        let bnorm = norm2(&b);
        if bnorm == 0.0 {
            return Ok(b);
        }
        let tol = 1e-13 * bnorm;
        let max_iter = 200 * (nx + nz).max(100);

        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = (0..n).map(|i| r[i] / diag[i]).collect();
        let mut p = z.clone();
        let mut rz: f64 = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for _ in 0..max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                return Err(SolveError::LinearSolve(
                    "lost positive definiteness in conjugate gradient".into(),
                ));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm2(&r) <= tol {
                return Ok(x);
            }
            for i in 0..n {
                z[i] = r[i] / diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(SolveError::LinearSolve(format!(
            "conjugate gradient did not reach {tol:.3e} in {max_iter} iterations"
        )))
    }
}

/// Path-harmonic relative permittivity along a grid edge. `axis` is the
/// direction of travel, `other` the fixed transverse coordinate (nm).
fn harmonic_epsr(device: &Device, axis: usize, other: f64, lo: f64, hi: f64) -> f64 {
    let spec = &device.spec;
    let two_d = spec.dimension == Dimension::Two;

    let mut cuts = vec![lo, hi];
    for r in &spec.regions {
        if two_d {
            let t = if axis == 0 {
                [r.box_nm.lo(1), r.box_nm.hi(1)]
            } else {
                [r.box_nm.lo(0), r.box_nm.hi(0)]
            };
            if other < t[0] - 1e-9 || other > t[1] + 1e-9 {
                continue;
            }
        }
        for b in [r.box_nm.lo(axis), r.box_nm.hi(axis)] {
            if b > lo + 1e-12 && b < hi - 1e-12 {
                cuts.push(b);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut inv_integral = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let p = if axis == 0 { [mid, other] } else { [other, mid] };
        let slice = if two_d { &p[..2] } else { &p[..1] };
        let epsr = spec
            .regions
            .iter()
            .find(|r| r.box_nm.contains(slice))
            .map(|r| r.epsilon_r)
            .unwrap_or(1.0);
        inv_integral += (w[1] - w[0]) / epsr;
    }
    (hi - lo) / inv_integral
}

fn overlap(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[1].min(b[1]) - a[0].max(b[0])).max(0.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::Device;

    fn stack_1d(gate_footprint: [f64; 2]) -> Device {
        let src = format!(
            r#"{{
            "schema_version": 1, "name": "stack", "dimension": "1d",
            "extent_nm": [50.0], "grid": [51], "temperature_K": 4.2,
            "regions": [
                {{"name": "si", "box_nm": [[0.0, 50.0]], "epsilon_r": 11.7, "mass": [0.19]}}
            ],
            "gates": [
                {{"name": "TOP", "footprint_nm": [{}, {}], "role": "plunger"}}
            ],
            "contacts": [
                {{"name": "bulk", "side": "bottom", "potential_V": 0.0}}
            ]
        }}"#,
            gate_footprint[0], gate_footprint[1]
        );
        Device::from_json(&src).unwrap()
    }

    #[test]
    fn homogeneous_problem_is_zero() {
        let dev = stack_1d([49.6, 50.0]);
        let field = solve_poisson(&dev, &BiasPoint::zero(&dev)).unwrap();
        assert!(field.phi.iter().all(|&v| v.abs() < 1e-14));
        assert_eq!(field.iterations, 0);
    }

    #[test]
    fn laplace_is_linear_in_z() {
        let dev = stack_1d([49.6, 50.0]);
        let bias = BiasPoint::zero(&dev).with("TOP", 1.0);
        let field = solve_poisson(&dev, &bias).unwrap();
        // Node 25 sits midway between the plates.
        assert!((field.phi[25] - 0.5).abs() < 1e-10, "phi = {}", field.phi[25]);
    }

    #[test]
    fn missing_gate_in_bias_is_an_error() {
        let dev = stack_1d([49.6, 50.0]);
        let e = solve_poisson(&dev, &BiasPoint::default()).unwrap_err();
        assert!(matches!(e, SolveError::Bias(_)), "{e}");
    }

    #[test]
    fn no_dirichlet_is_singular() {
        let src = r#"{
            "schema_version": 1, "name": "floating", "dimension": "1d",
            "extent_nm": [50.0], "grid": [51], "temperature_K": 4.2,
            "regions": [
                {"name": "si", "box_nm": [[0.0, 50.0]], "epsilon_r": 11.7, "mass": [0.19]}
            ],
            "gates": []
        }"#;
        let dev = Device::from_json(src).unwrap();
        let e = solve_poisson(&dev, &BiasPoint::default()).unwrap_err();
        assert!(matches!(e, SolveError::Setup(_)), "{e}");
    }

    #[test]
    fn band_edge_interpolates_linearly() {
        let dev = stack_1d([49.6, 50.0]);
        let bias = BiasPoint::zero(&dev).with("TOP", 1.0);
        let field = solve_poisson(&dev, &bias).unwrap();
        let mid = band_edge_at(&dev, &field, &[25.5]).unwrap();
        let expect = 0.5 * (field.ec[25] + field.ec[26]);
        assert!((mid - expect).abs() < 1e-14);
        assert!(band_edge_at(&dev, &field, &[60.0]).is_err());
    }
}
