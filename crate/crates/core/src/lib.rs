//! Physics core for conveyor-mode electron shuttling: device model,
//! cryogenic electrostatics, envelope eigenproblems, bias-search algorithms
//! and transport diagnostics.

// Field and key names carry unit suffixes (_eV, _V, _K, _nm) that mirror
// the on-disk schema.
#![allow(non_snake_case)]

pub mod device;
pub mod diagnostics;
pub mod linalg;
pub mod poisson;
pub mod schrodinger;
pub mod search;
pub mod statistics;
pub mod units;

pub use device::{Device, DeviceSpec, GateRole, GateSpec, Grid, MaterialRegion};
pub use poisson::{band_edge_at, solve_poisson, BiasPoint, PotentialField};
pub use schrodinger::{
    confinement_potential, dot_metrics, solve_eigen, ConfinementPotential, DotMetrics,
    EigenSolution, QuantumMode,
};
pub use search::{
    ac_gate_amplitudes, dc_flat_band, lever_arm_dc, newton_scalar, periodic_tile,
    ramp_schedule, uniform_velocity_resample, ScheduleMode, SearchConfig, ShuttleSchedule,
};
pub use diagnostics::{analyze_sequence, gap_dip_map, SequenceReport, Thresholds, TunnellingEvent};
