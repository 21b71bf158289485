//! Transport-quality diagnostics over a schedule's metric series.
//!
//! A tunnelling event is the coincidence of two signatures: the orbital gap
//! collapsing below a threshold while the dot position jumps by more than a
//! threshold between the neighbouring steps. The dot-size spike that
//! accompanies tunnelling is recorded but not required for detection.

use crate::device::Device;
use crate::search::{velocity_cv, ShuttleSchedule, ThresholdConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("input error: {0}")]
    Input(String),
}

/// Resolved detection thresholds (the config's `null` jump threshold is
/// replaced by half the median shuttle-gate pitch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub gap_threshold_eV: f64,
    pub jump_threshold_nm: f64,
    pub warn_threshold_eV: f64,
}

impl Thresholds {
    pub fn resolve(cfg: &ThresholdConfig, device: &Device) -> Self {
        let jump = cfg
            .jump_threshold_nm
            .unwrap_or_else(|| 0.5 * median_pitch_nm(device));
        Thresholds {
            gap_threshold_eV: cfg.gap_threshold_eV,
            jump_threshold_nm: jump,
            warn_threshold_eV: cfg.warn_threshold_eV,
        }
    }
}

/// Median distance between adjacent shuttling-gate centers.
pub fn median_pitch_nm(device: &Device) -> f64 {
    let gates = device.spec.shuttling_gates();
    let mut pitches: Vec<f64> = gates
        .windows(2)
        .map(|w| w[1].center_nm() - w[0].center_nm())
        .collect();
    if pitches.is_empty() {
        return device.spec.extent_nm[0];
    }
    pitches.sort_by(f64::total_cmp);
    pitches[pitches.len() / 2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnellingEvent {
    pub step_index: usize,
    pub gap_at_event_eV: f64,
    pub x_jump_nm: f64,
    /// Dot size at the event relative to the series median.
    pub dx_spike_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Conveyor,
    Tunnelling,
    Degraded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceReport {
    pub gap_min_eV: f64,
    pub gap_min_step: usize,
    pub gap_series_eV: Vec<f64>,
    pub x_series_nm: Vec<f64>,
    pub dx_series_nm: Vec<f64>,
    pub pmax_series: Vec<f64>,
    /// Midpoint-difference velocity, nm per arbitrary time unit; one entry
    /// fewer than the series.
    pub velocity_nm_per_au: Vec<f64>,
    pub velocity_cv: f64,
    pub events: Vec<TunnellingEvent>,
    pub verdict: Verdict,
    pub thresholds: Thresholds,
}

/// Post-process a schedule's metric series into a transport verdict.
pub fn analyze_sequence(
    schedule: &ShuttleSchedule,
    thresholds: Thresholds,
) -> Result<SequenceReport, AnalysisError> {
    let n = schedule.len();
    if n < 3 {
        return Err(AnalysisError::Input(format!(
            "sequence analysis needs at least 3 steps with metrics, got {n}"
        )));
    }
    if schedule.metrics.len() != n {
        return Err(AnalysisError::Input("missing metrics".into()));
    }

    let gap: Vec<f64> = schedule.metrics.iter().map(|m| m.gap_eV).collect();
    let x: Vec<f64> = schedule.metrics.iter().map(|m| m.x_nm).collect();
    let dx: Vec<f64> = schedule.metrics.iter().map(|m| m.dx_nm).collect();
    let pmax: Vec<f64> = schedule.metrics.iter().map(|m| m.p_max).collect();

    let mut gap_min_step = 0;
    for (i, &g) in gap.iter().enumerate() {
        if g < gap[gap_min_step] {
            gap_min_step = i;
        }
    }

    let mut sorted_dx = dx.clone();
    sorted_dx.sort_by(f64::total_cmp);
    let dx_median = sorted_dx[sorted_dx.len() / 2];

    let mut events = Vec::new();
    for k in 1..n - 1 {
        let jump = (x[k + 1] - x[k - 1]).abs();
        if gap[k] < thresholds.gap_threshold_eV && jump > thresholds.jump_threshold_nm {
            events.push(TunnellingEvent {
                step_index: k,
                gap_at_event_eV: gap[k],
                x_jump_nm: jump,
                dx_spike_ratio: if dx_median > 0.0 { dx[k] / dx_median } else { 0.0 },
            });
        }
    }

    let verdict = if !events.is_empty() {
        Verdict::Tunnelling
    } else if gap[gap_min_step] < thresholds.warn_threshold_eV {
        Verdict::Degraded
    } else {
        Verdict::Conveyor
    };

    Ok(SequenceReport {
        gap_min_eV: gap[gap_min_step],
        gap_min_step,
        gap_series_eV: gap,
        velocity_nm_per_au: schedule.velocities(),
        velocity_cv: velocity_cv(schedule),
        x_series_nm: x,
        dx_series_nm: dx,
        pmax_series: pmax,
        events,
        verdict,
        thresholds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapDip {
    pub x_nm: f64,
    /// How far the gap falls below the lower of its flanking maxima, eV.
    pub depth_eV: f64,
    pub gap_eV: f64,
    pub nearest_midpoint_nm: f64,
}

/// Local minima of the gap as a function of dot position, each labelled
/// with the nearest inter-gate midpoint.
pub fn gap_dip_map(schedule: &ShuttleSchedule, device: &Device) -> Vec<GapDip> {
    let gap: Vec<f64> = schedule.metrics.iter().map(|m| m.gap_eV).collect();
    let x: Vec<f64> = schedule.metrics.iter().map(|m| m.x_nm).collect();
    let gates = device.spec.shuttling_gates();
    let midpoints: Vec<f64> = gates
        .windows(2)
        .map(|w| 0.5 * (w[0].center_nm() + w[1].center_nm()))
        .collect();

    let mut dips = Vec::new();
    for k in 1..gap.len().saturating_sub(1) {
        if gap[k] < gap[k - 1] && gap[k] <= gap[k + 1] {
            // Flanking maxima: walk outwards to the nearest local peaks.
            let mut left = gap[k];
            for i in (0..k).rev() {
                left = left.max(gap[i]);
                if i > 0 && gap[i] > gap[i - 1] && gap[i] >= gap[k] {
                    // fine to keep scanning; we want the running max
                }
            }
            let mut right = gap[k];
            for &g in &gap[k + 1..] {
                right = right.max(g);
            }
            let depth = left.min(right) - gap[k];
            if depth <= 0.0 {
                continue;
            }
            let nearest = midpoints
                .iter()
                .copied()
                .min_by(|a, b| (a - x[k]).abs().total_cmp(&(b - x[k]).abs()))
                .unwrap_or(x[k]);
            dips.push(GapDip {
                x_nm: x[k],
                depth_eV: depth,
                gap_eV: gap[k],
                nearest_midpoint_nm: nearest,
            });
        }
    }
    dips
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poisson::BiasPoint;
    use crate::schrodinger::DotMetrics;
    use crate::search::{ScheduleMeta, ScheduleMode};

    pub(crate) fn synthetic_schedule(
        gap: Vec<f64>,
        x: Vec<f64>,
        dx: Vec<f64>,
    ) -> ShuttleSchedule {
        let n = gap.len();
        let metrics: Vec<DotMetrics> = (0..n)
            .map(|i| DotMetrics {
                e0_eV: -0.01,
                e1_eV: -0.01 + gap[i],
                gap_eV: gap[i],
                x_nm: x[i],
                dx_nm: dx[i],
                p_max: 0.05,
            })
            .collect();
        ShuttleSchedule {
            times: (0..n).map(|t| t as f64).collect(),
            bias_steps: vec![BiasPoint::default(); n],
            metrics,
            mode: ScheduleMode::Ramp,
            meta: ScheduleMeta {
                dc: BiasPoint::default(),
                e0_target_eV: -0.01,
                gate_order: vec![],
                pair_index: vec![0; n],
                tiling: None,
            },
        }
    }

    fn thresholds() -> Thresholds {
        Thresholds {
            gap_threshold_eV: 1e-4,
            jump_threshold_nm: 20.0,
            warn_threshold_eV: 5e-4,
        }
    }

    #[test]
    fn clean_series_is_conveyor() {
        let n = 11;
        let sched = synthetic_schedule(
            vec![2e-3; n],
            (0..n).map(|i| 10.0 * i as f64).collect(),
            vec![15.0; n],
        );
        let rep = analyze_sequence(&sched, thresholds()).unwrap();
        assert_eq!(rep.verdict, Verdict::Conveyor);
        assert!(rep.events.is_empty());
        assert!(rep.velocity_cv < 1e-12);
        assert_eq!(rep.velocity_nm_per_au.len(), n - 1);
    }

    #[test]
    fn gap_collapse_with_jump_is_one_event() {
        let mut gap = vec![2e-3; 11];
        let mut x: Vec<f64> = (0..11).map(|i| 10.0 * i as f64).collect();
        let mut dx = vec![15.0; 11];
        gap[5] = 1e-5;
        // step-function jump across step 5
        for xi in x.iter_mut().skip(6) {
            *xi += 100.0;
        }
        dx[5] = 90.0;
        let sched = synthetic_schedule(gap, x, dx);
        let rep = analyze_sequence(&sched, thresholds()).unwrap();
        assert_eq!(rep.verdict, Verdict::Tunnelling);
        assert_eq!(rep.events.len(), 1);
        let e = &rep.events[0];
        assert_eq!(e.step_index, 5);
        assert!(e.dx_spike_ratio > 3.0);
    }

    #[test]
    fn gap_collapse_without_jump_is_not_an_event() {
        let mut gap = vec![2e-3; 11];
        gap[5] = 1e-5;
        let sched = synthetic_schedule(
            gap,
            (0..11).map(|i| 10.0 * i as f64).collect(),
            vec![15.0; 11],
        );
        let rep = analyze_sequence(&sched, thresholds()).unwrap();
        assert!(rep.events.is_empty());
        // Gap dipped below the warn threshold, so the run is degraded.
        assert_eq!(rep.verdict, Verdict::Degraded);
    }

    #[test]
    fn jump_without_gap_collapse_is_not_an_event() {
        let mut x: Vec<f64> = (0..11).map(|i| 10.0 * i as f64).collect();
        for xi in x.iter_mut().skip(6) {
            *xi += 100.0;
        }
        let sched = synthetic_schedule(vec![2e-3; 11], x, vec![15.0; 11]);
        let rep = analyze_sequence(&sched, thresholds()).unwrap();
        assert!(rep.events.is_empty());
        assert_eq!(rep.verdict, Verdict::Conveyor);
    }

    #[test]
    fn too_short_series_is_an_input_error() {
        let sched = synthetic_schedule(vec![1e-3; 2], vec![0.0, 1.0], vec![5.0, 5.0]);
        assert!(analyze_sequence(&sched, thresholds()).is_err());
    }

    #[test]
    fn monotone_gap_has_no_dips() {
        let sched = synthetic_schedule(
            (0..11).map(|i| 1e-3 + 1e-4 * i as f64).collect(),
            (0..11).map(|i| 10.0 * i as f64).collect(),
            vec![15.0; 11],
        );
        let dev = tile_device();
        assert!(gap_dip_map(&sched, &dev).is_empty());
    }

    #[test]
    fn single_dip_is_found_with_depth() {
        let mut gap = vec![2e-3; 11];
        gap[5] = 1.2e-3;
        let sched = synthetic_schedule(
            gap,
            (0..11).map(|i| 10.0 * i as f64).collect(),
            vec![15.0; 11],
        );
        let dev = tile_device();
        let dips = gap_dip_map(&sched, &dev);
        assert_eq!(dips.len(), 1);
        assert!((dips[0].x_nm - 50.0).abs() < 1e-12);
        assert!((dips[0].depth_eV - 0.8e-3).abs() < 1e-12);
    }

    fn tile_device() -> Device {
        let src = r#"{
            "schema_version": 1, "name": "d", "dimension": "1d",
            "extent_nm": [200.0], "grid": [201], "temperature_K": 1.0,
            "regions": [
                {"name": "si", "box_nm": [[0.0, 200.0]], "epsilon_r": 11.7, "mass": [0.19]}
            ],
            "gates": [
                {"name": "G0", "footprint_nm": [20.0, 60.0], "role": "plunger"},
                {"name": "G1", "footprint_nm": [80.0, 120.0], "role": "tunnel"},
                {"name": "G2", "footprint_nm": [140.0, 180.0], "role": "plunger"}
            ],
            "contacts": [{"name": "bulk", "side": "bottom", "potential_V": 0.0}]
        }"#;
        Device::from_json(src).unwrap()
    }
}
