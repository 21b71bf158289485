//! Declarative rectilinear device model and its grid.
//!
//! A device file describes a reduced 1D (transport axis) or 2D (x-z
//! cross-section) world: material boxes that tile the domain, gates that
//! clamp the potential on (or recessed into) the top boundary, and contacts
//! that clamp it on the outer boundary. The Fermi level is the global zero
//! of energy; every band edge and dot energy is reported relative to it.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Current device-file schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Positions are matched to grid lines and region edges within this slack.
const GEOM_TOL_NM: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("grid resolution error: {0}")]
    Resolution(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    #[serde(rename = "1d")]
    One,
    #[serde(rename = "2d")]
    Two,
}

impl Dimension {
    pub fn axes(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChargeModel {
    Frozen,
    Semiclassical,
}

impl Default for ChargeModel {
    fn default() -> Self {
        ChargeModel::Frozen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateRole {
    Plunger,
    Tunnel,
    Accumulation,
    Screening,
    Reservoir,
}

impl GateRole {
    /// Gates along the transport path that the bias search optimizes.
    pub fn is_shuttling(self) -> bool {
        matches!(self, GateRole::Plunger | GateRole::Tunnel)
    }
}

/// Axis-aligned box given as per-axis [lo, hi] bounds in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxNm(pub Vec<[f64; 2]>);

impl BoxNm {
    pub fn lo(&self, axis: usize) -> f64 {
        self.0[axis][0]
    }
    pub fn hi(&self, axis: usize) -> f64 {
        self.0[axis][1]
    }
    pub fn contains(&self, p: &[f64]) -> bool {
        self.0.iter().zip(p).all(|(b, &x)| {
            x >= b[0] - GEOM_TOL_NM && x <= b[1] + GEOM_TOL_NM
        })
    }
    fn measure(&self) -> f64 {
        self.0.iter().map(|b| b[1] - b[0]).product()
    }
    fn interior_overlaps(&self, other: &BoxNm) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| {
            a[0].max(b[0]) + GEOM_TOL_NM < a[1].min(b[1])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialRegion {
    pub name: String,
    pub box_nm: BoxNm,
    pub epsilon_r: f64,
    #[serde(default)]
    pub band_offset_eV: f64,
    /// Diagonal effective-mass tensor, one entry per axis, in units of m_e.
    pub mass: Vec<f64>,
    #[serde(default)]
    pub donor_cm3: f64,
    #[serde(default)]
    pub acceptor_cm3: f64,
    #[serde(default)]
    pub fixed_charge_Ccm3: f64,
    #[serde(default)]
    pub charge_model: ChargeModel,
    /// Marks the region as part of the quantum subdomain. If no region is
    /// flagged, the regions with the lowest band offset are used.
    #[serde(default)]
    pub quantum: bool,
    /// Valence-band edge at zero potential; enables the symmetric hole term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence_offset_eV: Option<f64>,
}

impl MaterialRegion {
    /// Density-of-states mass: geometric mean of the tensor diagonal.
    pub fn dos_mass(&self) -> f64 {
        let p: f64 = self.mass.iter().product();
        p.powf(1.0 / self.mass.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub name: String,
    /// Interval on the top boundary, nm.
    pub footprint_nm: [f64; 2],
    /// Recess from the top surface; the clamped block reaches this deep.
    #[serde(default)]
    pub depth_nm: f64,
    #[serde(default)]
    pub work_function_offset_V: f64,
    pub role: GateRole,
}

impl GateSpec {
    pub fn center_nm(&self) -> f64 {
        0.5 * (self.footprint_nm[0] + self.footprint_nm[1])
    }
    pub fn width_nm(&self) -> f64 {
        self.footprint_nm[1] - self.footprint_nm[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactSide {
    /// 1D: the low end of the axis. 2D: z = 0.
    Bottom,
    /// 1D: the high end of the axis. 2D: z = extent.
    Top,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSpec {
    pub name: String,
    pub side: ContactSide,
    /// Range along the side, nm. Optional: defaults to the whole side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_nm: Option<[f64; 2]>,
    pub potential_V: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub schema_version: u32,
    pub name: String,
    pub dimension: Dimension,
    /// Domain lengths per axis, nm.
    pub extent_nm: Vec<f64>,
    /// Node counts per axis.
    pub grid: Vec<usize>,
    pub temperature_K: f64,
    pub regions: Vec<MaterialRegion>,
    pub gates: Vec<GateSpec>,
    #[serde(default)]
    pub contacts: Vec<ContactSpec>,
    /// Depth of the quantum line used by the 1D Schrodinger mode.
    /// Defaults to the mid-thickness of the quantum subdomain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum_line_z_nm: Option<f64>,
}

impl DeviceSpec {
    /// Global energy reference: everything is measured from the Fermi level.
    pub fn fermi_level_eV(&self) -> f64 {
        0.0
    }

    pub fn gate(&self, name: &str) -> Option<&GateSpec> {
        self.gates.iter().find(|g| g.name == name)
    }

    /// Shuttling gates (plunger and tunnel roles) in transport-path order.
    pub fn shuttling_gates(&self) -> Vec<&GateSpec> {
        let mut v: Vec<&GateSpec> =
            self.gates.iter().filter(|g| g.role.is_shuttling()).collect();
        v.sort_by(|a, b| a.center_nm().total_cmp(&b.center_nm()));
        v
    }

    /// True when no region carries mobile or fixed charge, so the
    /// electrostatic problem is linear in the applied voltages.
    pub fn is_linear(&self) -> bool {
        self.regions.iter().all(|r| {
            r.charge_model == ChargeModel::Frozen
                && r.donor_cm3 == 0.0
                && r.acceptor_cm3 == 0.0
                && r.fixed_charge_Ccm3 == 0.0
        })
    }
}

/// Parse and validate a device description from JSON text.
pub fn parse_device(source: &str) -> Result<DeviceSpec, DeviceError> {
    let de = &mut serde_json::Deserializer::from_str(source);
    let spec: DeviceSpec =
        serde_path_to_error::deserialize(de).map_err(|e| DeviceError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
    validate(&spec)?;
    Ok(spec)
}

fn err(msg: impl Into<String>) -> DeviceError {
    DeviceError::Validation(msg.into())
}

fn check_finite(v: f64, what: &str) -> Result<(), DeviceError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(err(format!("{what} must be finite, got {v}")))
    }
}

pub fn validate(spec: &DeviceSpec) -> Result<(), DeviceError> {
    if spec.schema_version != SCHEMA_VERSION {
        return Err(err(format!(
            "unsupported schema_version {} (expected {})",
            spec.schema_version, SCHEMA_VERSION
        )));
    }
    let axes = spec.dimension.axes();
    if spec.extent_nm.len() != axes || spec.grid.len() != axes {
        return Err(err(format!(
            "extent_nm and grid must each have {axes} entries for a {axes}-axis device"
        )));
    }
    for (a, &ext) in spec.extent_nm.iter().enumerate() {
        check_finite(ext, "extent_nm")?;
        if ext <= 0.0 {
            return Err(err(format!("extent_nm[{a}] must be positive")));
        }
        if spec.grid[a] < 3 {
            return Err(err(format!("grid[{a}] must be at least 3 nodes")));
        }
    }
    check_finite(spec.temperature_K, "temperature_K")?;
    if spec.temperature_K < 0.0 {
        return Err(err("temperature_K must be non-negative"));
    }
    if spec.regions.is_empty() {
        return Err(err("at least one region is required"));
    }

    // Name uniqueness across each kind.
    let mut seen = BTreeSet::new();
    for r in &spec.regions {
        if !seen.insert(("region", r.name.as_str())) {
            return Err(err(format!("duplicate region name '{}'", r.name)));
        }
    }
    for g in &spec.gates {
        if !seen.insert(("gate", g.name.as_str())) {
            return Err(err(format!("duplicate gate name '{}'", g.name)));
        }
    }
    for c in &spec.contacts {
        if !seen.insert(("contact", c.name.as_str())) {
            return Err(err(format!("duplicate contact name '{}'", c.name)));
        }
    }

    let domain = BoxNm(spec.extent_nm.iter().map(|&e| [0.0, e]).collect());

    for r in &spec.regions {
        if r.box_nm.0.len() != axes {
            return Err(err(format!("region '{}': box_nm needs {axes} axes", r.name)));
        }
        for (a, b) in r.box_nm.0.iter().enumerate() {
            check_finite(b[0], "region bound")?;
            check_finite(b[1], "region bound")?;
            if b[0] >= b[1] {
                return Err(err(format!("region '{}': empty extent on axis {a}", r.name)));
            }
            if b[0] < -GEOM_TOL_NM || b[1] > spec.extent_nm[a] + GEOM_TOL_NM {
                return Err(err(format!("region '{}' leaves the domain", r.name)));
            }
        }
        if r.epsilon_r < 1.0 {
            return Err(err(format!("region '{}': epsilon_r must be >= 1", r.name)));
        }
        if r.mass.len() != axes {
            return Err(err(format!("region '{}': mass needs {axes} entries", r.name)));
        }
        if r.mass.iter().any(|&m| !(m > 0.0)) {
            return Err(err(format!("region '{}': mass entries must be positive", r.name)));
        }
        if r.donor_cm3 < 0.0 || r.acceptor_cm3 < 0.0 {
            return Err(err(format!("region '{}': concentrations must be >= 0", r.name)));
        }
        check_finite(r.band_offset_eV, "band_offset_eV")?;
        check_finite(r.fixed_charge_Ccm3, "fixed_charge_Ccm3")?;
    }

    // Tiling: boxes stay inside the domain (checked above), do not overlap
    // pairwise, and their measures sum to the domain measure. For
    // axis-aligned boxes this implies a gap-free tiling.
    for i in 0..spec.regions.len() {
        for j in (i + 1)..spec.regions.len() {
            if spec.regions[i].box_nm.interior_overlaps(&spec.regions[j].box_nm) {
                return Err(err(format!(
                    "regions '{}' and '{}' overlap",
                    spec.regions[i].name, spec.regions[j].name
                )));
            }
        }
    }
    let covered: f64 = spec.regions.iter().map(|r| r.box_nm.measure()).sum();
    let total = domain.measure();
    if (covered - total).abs() > 1e-6 * total {
        return Err(err(format!(
            "regions do not tile the domain: cover {covered} of {total} nm^{axes}"
        )));
    }

    // Gates: on the top boundary, inside the domain, pairwise disjoint.
    let x_extent = spec.extent_nm[0];
    for g in &spec.gates {
        let [a, b] = g.footprint_nm;
        check_finite(a, "footprint")?;
        check_finite(b, "footprint")?;
        if a >= b {
            return Err(err(format!("gate '{}': empty footprint", g.name)));
        }
        if a < -GEOM_TOL_NM || b > x_extent + GEOM_TOL_NM {
            return Err(err(format!("gate '{}' leaves the top boundary", g.name)));
        }
        if g.depth_nm < 0.0 {
            return Err(err(format!("gate '{}': depth_nm must be >= 0", g.name)));
        }
        if axes == 2 && g.depth_nm > spec.extent_nm[1] {
            return Err(err(format!("gate '{}': depth exceeds the domain", g.name)));
        }
        check_finite(g.work_function_offset_V, "work_function_offset_V")?;
    }
    for i in 0..spec.gates.len() {
        for j in (i + 1)..spec.gates.len() {
            let (a, b) = (&spec.gates[i], &spec.gates[j]);
            if a.footprint_nm[0].max(b.footprint_nm[0])
                <= a.footprint_nm[1].min(b.footprint_nm[1]) + GEOM_TOL_NM
            {
                return Err(err(format!("overlapping gates '{}' and '{}'", a.name, b.name)));
            }
        }
    }

    for c in &spec.contacts {
        if axes == 1 && !matches!(c.side, ContactSide::Bottom | ContactSide::Top) {
            return Err(err(format!(
                "contact '{}': 1D devices only have bottom/top ends",
                c.name
            )));
        }
        check_finite(c.potential_V, "potential_V")?;
        if let Some([a, b]) = c.span_nm {
            if a >= b {
                return Err(err(format!("contact '{}': empty span", c.name)));
            }
        }
    }

    if let Some(zq) = spec.quantum_line_z_nm {
        if axes != 2 {
            return Err(err("quantum_line_z_nm only applies to 2D devices"));
        }
        if !(0.0..=spec.extent_nm[1]).contains(&zq) {
            return Err(err("quantum_line_z_nm outside the domain"));
        }
    }

    Ok(())
}

/// What clamps a node's potential, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirichletTag {
    Free,
    Gate(u16),
    Contact(u16),
}

/// Uniform rectilinear node set with per-node material attribution.
#[derive(Debug, Clone)]
pub struct Grid {
    pub dim: Dimension,
    /// Nodes per axis; `n[1] == 1` for 1D devices.
    pub n: [usize; 2],
    /// Node spacing per axis, nm; `h[1] == 0.0` for 1D devices.
    pub h_nm: [f64; 2],
    pub extent_nm: [f64; 2],
    /// Region index per node, row-major with x fastest.
    pub material: Vec<u16>,
    pub dirichlet: Vec<DirichletTag>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn idx(&self, ix: usize, iz: usize) -> usize {
        iz * self.n[0] + ix
    }
    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.h_nm[0]
    }
    pub fn z(&self, iz: usize) -> f64 {
        iz as f64 * self.h_nm[1]
    }
    pub fn position(&self, node: usize) -> [f64; 2] {
        let ix = node % self.n[0];
        let iz = node / self.n[0];
        [self.x(ix), self.z(iz)]
    }
}

/// Build the uniform grid for a validated device.
pub fn build_grid(spec: &DeviceSpec) -> Result<Grid, DeviceError> {
    let axes = spec.dimension.axes();
    let nx = spec.grid[0];
    let nz = if axes == 2 { spec.grid[1] } else { 1 };
    let hx = spec.extent_nm[0] / (nx - 1) as f64;
    let hz = if axes == 2 { spec.extent_nm[1] / (nz - 1) as f64 } else { 0.0 };

    // Every region must be resolved by at least 3 grid lines per axis.
    for r in &spec.regions {
        for (a, b) in r.box_nm.0.iter().enumerate() {
            let h = if a == 0 { hx } else { hz };
            let first = ((b[0] - GEOM_TOL_NM) / h).ceil() as i64;
            let last = ((b[1] + GEOM_TOL_NM) / h).floor() as i64;
            if last - first + 1 < 3 {
                return Err(DeviceError::Resolution(format!(
                    "region '{}' spans fewer than 3 nodes on axis {a} (spacing {h} nm)",
                    r.name
                )));
            }
        }
    }

    let n_nodes = nx * nz;
    let mut material = vec![u16::MAX; n_nodes];
    let mut dirichlet = vec![DirichletTag::Free; n_nodes];

    for iz in 0..nz {
        for ix in 0..nx {
            let p = [ix as f64 * hx, iz as f64 * hz];
            let slice = &p[..axes];
            let node = iz * nx + ix;
            match spec.regions.iter().position(|r| r.box_nm.contains(slice)) {
                Some(k) => material[node] = k as u16,
                None => {
                    return Err(DeviceError::Validation(format!(
                        "no region claims the node at {slice:?} nm"
                    )))
                }
            }
        }
    }

    // Contacts first, gates second: a gate footprint wins over a contact
    // span only if they collide, which validation treats as an error below.
    let top_z = spec.extent_nm.get(1).copied().unwrap_or(0.0);
    for (ci, c) in spec.contacts.iter().enumerate() {
        let tag = DirichletTag::Contact(ci as u16);
        match (spec.dimension, c.side) {
            (Dimension::One, ContactSide::Bottom) => dirichlet[0] = tag,
            (Dimension::One, ContactSide::Top) => dirichlet[nx - 1] = tag,
            (Dimension::One, _) => unreachable!("validated"),
            (Dimension::Two, side) => {
                let span = c.span_nm.unwrap_or(match side {
                    ContactSide::Bottom | ContactSide::Top => [0.0, spec.extent_nm[0]],
                    ContactSide::Left | ContactSide::Right => [0.0, top_z],
                });
                for iz in 0..nz {
                    for ix in 0..nx {
                        let on = match side {
                            ContactSide::Bottom => iz == 0 && in_span(ix as f64 * hx, span),
                            ContactSide::Top => iz == nz - 1 && in_span(ix as f64 * hx, span),
                            ContactSide::Left => ix == 0 && in_span(iz as f64 * hz, span),
                            ContactSide::Right => ix == nx - 1 && in_span(iz as f64 * hz, span),
                        };
                        if on {
                            dirichlet[iz * nx + ix] = tag;
                        }
                    }
                }
            }
        }
    }

    for (gi, g) in spec.gates.iter().enumerate() {
        let tag = DirichletTag::Gate(gi as u16);
        let z_min = top_z - g.depth_nm;
        for iz in 0..nz {
            let z = iz as f64 * hz;
            if axes == 2 && z < z_min - GEOM_TOL_NM {
                continue;
            }
            for ix in 0..nx {
                if !in_span(ix as f64 * hx, g.footprint_nm) {
                    continue;
                }
                let node = iz * nx + ix;
                if let DirichletTag::Contact(ci) = dirichlet[node] {
                    return Err(DeviceError::Validation(format!(
                        "gate '{}' collides with contact '{}'",
                        g.name, spec.contacts[ci as usize].name
                    )));
                }
                dirichlet[node] = tag;
            }
        }
    }

    Ok(Grid {
        dim: spec.dimension,
        n: [nx, nz],
        h_nm: [hx, hz],
        extent_nm: [
            spec.extent_nm[0],
            spec.extent_nm.get(1).copied().unwrap_or(0.0),
        ],
        material,
        dirichlet,
    })
}

fn in_span(v: f64, span: [f64; 2]) -> bool {
    v >= span[0] - GEOM_TOL_NM && v <= span[1] + GEOM_TOL_NM
}

/// A validated device together with its grid and derived geometry.
#[derive(Debug, Clone)]
pub struct Device {
    pub spec: DeviceSpec,
    pub grid: Grid,
    /// Inclusive node-index bounds of the quantum subdomain, per axis.
    pub quantum_ix: [usize; 2],
    pub quantum_iz: [usize; 2],
    /// Depth of the quantum line for the 1D Schrodinger mode (2D devices).
    pub z_q_nm: f64,
}

impl Device {
    pub fn new(spec: DeviceSpec) -> Result<Self, DeviceError> {
        validate(&spec)?;
        let grid = build_grid(&spec)?;

        // Quantum subdomain: bounding box of the flagged regions, or of the
        // lowest-band-offset regions when nothing is flagged.
        let flagged: Vec<&MaterialRegion> =
            spec.regions.iter().filter(|r| r.quantum).collect();
        let chosen: Vec<&MaterialRegion> = if flagged.is_empty() {
            let min_off = spec
                .regions
                .iter()
                .map(|r| r.band_offset_eV)
                .fold(f64::INFINITY, f64::min);
            spec.regions
                .iter()
                .filter(|r| r.band_offset_eV == min_off)
                .collect()
        } else {
            flagged
        };
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut z_lo = f64::INFINITY;
        let mut z_hi = f64::NEG_INFINITY;
        for r in &chosen {
            x_lo = x_lo.min(r.box_nm.lo(0));
            x_hi = x_hi.max(r.box_nm.hi(0));
            if spec.dimension == Dimension::Two {
                z_lo = z_lo.min(r.box_nm.lo(1));
                z_hi = z_hi.max(r.box_nm.hi(1));
            }
        }
        if spec.dimension == Dimension::One {
            z_lo = 0.0;
            z_hi = 0.0;
        }

        let node_range = |lo: f64, hi: f64, h: f64, n: usize| -> [usize; 2] {
            if h == 0.0 {
                return [0, 0];
            }
            let a = ((lo - GEOM_TOL_NM) / h).ceil().max(0.0) as usize;
            let b = (((hi + GEOM_TOL_NM) / h).floor() as usize).min(n - 1);
            [a, b]
        };
        let quantum_ix = node_range(x_lo, x_hi, grid.h_nm[0], grid.n[0]);
        let quantum_iz = match spec.dimension {
            Dimension::One => [0, 0],
            Dimension::Two => node_range(z_lo, z_hi, grid.h_nm[1], grid.n[1]),
        };
        let z_q_nm = spec.quantum_line_z_nm.unwrap_or(0.5 * (z_lo + z_hi));

        Ok(Device {
            spec,
            grid,
            quantum_ix,
            quantum_iz,
            z_q_nm,
        })
    }

    pub fn from_json(source: &str) -> Result<Self, DeviceError> {
        Device::new(parse_device(source)?)
    }

    pub fn region_at(&self, node: usize) -> &MaterialRegion {
        &self.spec.regions[self.grid.material[node] as usize]
    }

    /// Probe point for a shuttling gate: footprint center at the quantum line.
    pub fn probe_point(&self, gate: &GateSpec) -> [f64; 2] {
        [gate.center_nm(), self.z_q_nm]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL_1D: &str = r#"{
        "schema_version": 1,
        "name": "minimal",
        "dimension": "1d",
        "extent_nm": [100.0],
        "grid": [101],
        "temperature_K": 4.2,
        "regions": [
            {"name": "si", "box_nm": [[0.0, 100.0]], "epsilon_r": 11.7,
             "band_offset_eV": 0.0, "mass": [0.19]}
        ],
        "gates": [
            {"name": "G0", "footprint_nm": [40.0, 60.0], "role": "plunger"}
        ],
        "contacts": [
            {"name": "bulk", "side": "bottom", "potential_V": 0.0}
        ]
    }"#;

    #[test]
    fn parses_minimal_device() {
        let spec = parse_device(MINIMAL_1D).unwrap();
        assert_eq!(spec.gates.len(), 1);
        assert_eq!(spec.regions.len(), 1);
        assert_eq!(spec.fermi_level_eV(), 0.0);
    }

    #[test]
    fn overlapping_gates_rejected() {
        let bad = MINIMAL_1D.replace(
            r#"{"name": "G0", "footprint_nm": [40.0, 60.0], "role": "plunger"}"#,
            r#"{"name": "G0", "footprint_nm": [40.0, 60.0], "role": "plunger"},
               {"name": "G1", "footprint_nm": [50.0, 70.0], "role": "plunger"}"#,
        );
        let e = parse_device(&bad).unwrap_err();
        assert!(e.to_string().contains("overlapping gates"), "{e}");
    }

    #[test]
    fn schema_error_carries_path() {
        let bad = MINIMAL_1D.replace("\"epsilon_r\": 11.7", "\"epsilon_r\": \"oops\"");
        match parse_device(&bad) {
            Err(DeviceError::Parse { path, .. }) => {
                assert!(path.contains("regions"), "path = {path}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn region_gap_rejected() {
        let bad = MINIMAL_1D.replace("[0.0, 100.0]", "[0.0, 90.0]");
        let e = parse_device(&bad).unwrap_err();
        assert!(e.to_string().contains("tile"), "{e}");
    }

    #[test]
    fn grid_spacing_and_positions() {
        let spec = parse_device(MINIMAL_1D).unwrap();
        let grid = build_grid(&spec).unwrap();
        assert_eq!(grid.n, [101, 1]);
        assert!((grid.h_nm[0] - 1.0).abs() < 1e-12);
        assert!((grid.x(50) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn thin_region_resolution_error() {
        let src = r#"{
            "schema_version": 1, "name": "thin", "dimension": "1d",
            "extent_nm": [10.0], "grid": [6], "temperature_K": 1.0,
            "regions": [
                {"name": "a", "box_nm": [[0.0, 9.0]], "epsilon_r": 1.0, "mass": [1.0]},
                {"name": "b", "box_nm": [[9.0, 10.0]], "epsilon_r": 1.0, "mass": [1.0]}
            ],
            "gates": [{"name": "G", "footprint_nm": [0.0, 2.0], "role": "plunger"}]
        }"#;
        // spacing 2 nm, region b is 1 nm thick
        let e = Device::from_json(src).unwrap_err();
        assert!(matches!(e, DeviceError::Resolution(_)), "{e}");
    }

    #[test]
    fn roundtrip_is_identity() {
        let spec = parse_device(MINIMAL_1D).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let again = parse_device(&json).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn every_node_claimed_once() {
        let spec = parse_device(MINIMAL_1D).unwrap();
        let grid = build_grid(&spec).unwrap();
        assert!(grid.material.iter().all(|&m| m != u16::MAX));
    }
}
