//! Run records: time-indexed traces, per-joint RMSE reports, CSV export,
//! and report comparison.
//!
//! CSV values are written with Rust's shortest-round-trip float formatting,
//! so an exported trace re-parses to exactly the original doubles. Files
//! are written atomically (temp file + rename).

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One control period's worth of logged signals.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub q_true: DVector<f64>,
    pub qd_true: DVector<f64>,
    pub q_des: DVector<f64>,
    pub q_m: DVector<f64>,
    pub tau_cmd: DVector<f64>,
    pub d_true: DVector<f64>,
    pub d_hat: DVector<f64>,
    pub d_hat_baseline: Option<DVector<f64>>,
    pub e: DVector<f64>,
}

/// Uniform-grid record of a closed-loop run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub n_dof: usize,
    pub dt: f64,
    pub has_baseline: bool,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn new(n_dof: usize, dt: f64, has_baseline: bool) -> Self {
        Self {
            n_dof,
            dt,
            has_baseline,
            rows: Vec::new(),
        }
    }

    /// Column names in export order. `qd_true` is kept in memory for
    /// analysis but is not part of the exported format.
    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["time".to_string()];
        let groups: &[&str] = if self.has_baseline {
            &["q_true", "q_des", "q_m", "tau_cmd", "d_true", "d_hat", "d_hat_baseline", "e"]
        } else {
            &["q_true", "q_des", "q_m", "tau_cmd", "d_true", "d_hat", "e"]
        };
        for group in groups {
            for j in 1..=self.n_dof {
                cols.push(format!("{group}_{j}"));
            }
        }
        cols
    }

    /// Write the trace as CSV (header + one row per step), atomically.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(&self.header().join(","));
        text.push('\n');
        for row in &self.rows {
            let mut fields = vec![format_f64(row.time)];
            let mut push_vec = |v: &DVector<f64>| {
                for x in v.iter() {
                    fields.push(format_f64(*x));
                }
            };
            push_vec(&row.q_true);
            push_vec(&row.q_des);
            push_vec(&row.q_m);
            push_vec(&row.tau_cmd);
            push_vec(&row.d_true);
            push_vec(&row.d_hat);
            if let Some(base) = &row.d_hat_baseline {
                push_vec(base);
            }
            push_vec(&row.e);
            text.push_str(&fields.join(","));
            text.push('\n');
        }
        atomic_write(path, text.as_bytes())
    }

    /// Re-read an exported CSV. `qd_true` is not part of the format and
    /// comes back as zeros.
    pub fn import_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trace file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let has_baseline = cols.iter().any(|c| c.starts_with("d_hat_baseline_"));
        let groups = if has_baseline { 8 } else { 7 };
        if cols.len() < 1 + groups || (cols.len() - 1) % groups != 0 {
            return Err(Error::Parse(format!(
                "unexpected column count {} in trace header",
                cols.len()
            )));
        }
        let n = (cols.len() - 1) / groups;

        let mut trace = SimTrace::new(n, 0.0, has_baseline);
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
                })
                .collect::<Result<_>>()?;
            if vals.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 2,
                    vals.len(),
                    cols.len()
                )));
            }
            let take = |g: usize| DVector::from_row_slice(&vals[1 + g * n..1 + (g + 1) * n]);
            trace.rows.push(TraceRow {
                time: vals[0],
                q_true: take(0),
                qd_true: DVector::zeros(n),
                q_des: take(1),
                q_m: take(2),
                tau_cmd: take(3),
                d_true: take(4),
                d_hat: take(5),
                d_hat_baseline: has_baseline.then(|| take(6)),
                e: take(if has_baseline { 7 } else { 6 }),
            });
        }
        if trace.rows.len() >= 2 {
            trace.dt = trace.rows[1].time - trace.rows[0].time;
        }
        Ok(trace)
    }
}

fn format_f64(x: f64) -> String {
    format!("{x}")
}

/// Write-then-rename so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-joint tracking RMSE and disturbance-estimation RMS error over the
/// scoring window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub schema_version: u32,
    pub scenario_id: String,
    pub controller_id: String,
    /// Scoring window start (s); step-to-setpoint runs score from the
    /// reference start time, everything else from zero.
    pub window_start: f64,
    /// Per-joint RMSE of the tracking error (rad).
    pub rmse_tracking: Vec<f64>,
    /// Per-joint RMS of `d_hat - d_true` (N m).
    pub rms_d_error: Vec<f64>,
    /// Same for the baseline observer when it was enabled.
    pub rms_d_error_baseline: Option<Vec<f64>>,
}

impl RmseReport {
    pub fn from_trace(
        trace: &SimTrace,
        scenario_id: &str,
        controller_id: &str,
        window_start: f64,
    ) -> Self {
        let n = trace.n_dof;
        let rows: Vec<&TraceRow> = trace
            .rows
            .iter()
            .filter(|r| r.time >= window_start)
            .collect();
        let count = rows.len().max(1) as f64;
        let mut rmse_tracking = vec![0.0; n];
        let mut rms_d_error = vec![0.0; n];
        let mut rms_base = vec![0.0; n];
        for row in &rows {
            for j in 0..n {
                rmse_tracking[j] += row.e[j] * row.e[j];
                let de = row.d_hat[j] - row.d_true[j];
                rms_d_error[j] += de * de;
                if let Some(b) = &row.d_hat_baseline {
                    let db = b[j] - row.d_true[j];
                    rms_base[j] += db * db;
                }
            }
        }
        for j in 0..n {
            rmse_tracking[j] = (rmse_tracking[j] / count).sqrt();
            rms_d_error[j] = (rms_d_error[j] / count).sqrt();
            rms_base[j] = (rms_base[j] / count).sqrt();
        }
        Self {
            schema_version: 1,
            scenario_id: scenario_id.to_string(),
            controller_id: controller_id.to_string(),
            window_start,
            rmse_tracking,
            rms_d_error,
            rms_d_error_baseline: trace.has_baseline.then_some(rms_base),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("report serialization: {e}")))?;
        atomic_write(path, format!("{text}\n").as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("report file: {e}")))
    }
}

/// Whose tracking error was smaller on a joint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    A,
    B,
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointComparison {
    /// 1-based joint index.
    pub joint: usize,
    pub rmse_a: f64,
    pub rmse_b: f64,
    /// `rmse_a / rmse_b` (1.0 when identical; > 1 means B tracks better).
    pub ratio: f64,
    pub winner: Winner,
}

/// Side-by-side comparison of two runs of the same scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub scenario_id: String,
    pub controller_a: String,
    pub controller_b: String,
    pub joints: Vec<JointComparison>,
    /// Controller that won on every joint, if any.
    pub dominant: Option<String>,
    /// True when one controller strictly dominates the other.
    pub dominates: bool,
}

/// Compare two reports joint by joint. Both must describe the same
/// scenario with the same joint count.
pub fn compare_report(a: &RmseReport, b: &RmseReport) -> Result<ComparisonSummary> {
    if a.scenario_id != b.scenario_id {
        return Err(Error::Comparison(format!(
            "scenario mismatch: {} vs {}",
            a.scenario_id, b.scenario_id
        )));
    }
    if a.rmse_tracking.len() != b.rmse_tracking.len() {
        return Err(Error::Comparison(format!(
            "joint count mismatch: {} vs {}",
            a.rmse_tracking.len(),
            b.rmse_tracking.len()
        )));
    }
    let joints: Vec<JointComparison> = a
        .rmse_tracking
        .iter()
        .zip(&b.rmse_tracking)
        .enumerate()
        .map(|(j, (&ra, &rb))| JointComparison {
            joint: j + 1,
            rmse_a: ra,
            rmse_b: rb,
            ratio: if ra == rb { 1.0 } else { ra / rb },
            winner: if ra < rb {
                Winner::A
            } else if rb < ra {
                Winner::B
            } else {
                Winner::Tie
            },
        })
        .collect();
    let dominant = if joints.iter().all(|c| c.winner == Winner::B) {
        Some(b.controller_id.clone())
    } else if joints.iter().all(|c| c.winner == Winner::A) {
        Some(a.controller_id.clone())
    } else {
        None
    };
    Ok(ComparisonSummary {
        scenario_id: a.scenario_id.clone(),
        controller_a: a.controller_id.clone(),
        controller_b: b.controller_id.clone(),
        dominates: dominant.is_some(),
        dominant,
        joints,
    })
}

impl fmt::Display for ComparisonSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {}: {} (A) vs {} (B)",
            self.scenario_id, self.controller_a, self.controller_b
        )?;
        writeln!(
            f,
            "{:>6} {:>14} {:>14} {:>10} {:>7}",
            "joint", "rmse_a (rad)", "rmse_b (rad)", "a/b", "winner"
        )?;
        for c in &self.joints {
            writeln!(
                f,
                "{:>6} {:>14.6e} {:>14.6e} {:>10.3} {:>7}",
                c.joint,
                c.rmse_a,
                c.rmse_b,
                c.ratio,
                match c.winner {
                    Winner::A => "A",
                    Winner::B => "B",
                    Winner::Tie => "tie",
                }
            )?;
        }
        match &self.dominant {
            Some(id) => writeln!(f, "dominates: true ({id} wins every joint)"),
            None => writeln!(f, "dominates: false"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, time: f64, fill: f64, baseline: bool) -> TraceRow {
        let v = |x: f64| DVector::from_element(n, x);
        TraceRow {
            time,
            q_true: v(fill),
            qd_true: v(0.0),
            q_des: v(fill + 1.0),
            q_m: v(fill + 0.5),
            tau_cmd: v(-fill),
            d_true: v(0.25),
            d_hat: v(0.25 + fill),
            d_hat_baseline: baseline.then(|| v(2.0 * fill)),
            e: v(-1.0),
        }
    }

    #[test]
    fn header_shape_without_baseline() {
        let trace = SimTrace::new(1, 1e-3, false);
        assert_eq!(trace.header().len(), 8);
    }

    #[test]
    fn header_shape_with_baseline() {
        let trace = SimTrace::new(1, 1e-3, true);
        assert_eq!(trace.header().len(), 9);
    }

    #[test]
    fn three_step_export_has_four_lines() {
        let mut trace = SimTrace::new(1, 1e-3, false);
        for k in 0..3 {
            trace.rows.push(row(1, k as f64 * 1e-3, 0.1 * k as f64, false));
        }
        let dir = std::env::temp_dir().join("armctl-trace-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("three.csv");
        trace.export_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 8);
    }

    #[test]
    fn empty_trace_exports_header_only() {
        let trace = SimTrace::new(2, 1e-3, true);
        let dir = std::env::temp_dir().join("armctl-trace-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        trace.export_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn export_import_round_trip_is_exact() {
        let mut trace = SimTrace::new(3, 1e-3, true);
        for k in 0..5 {
            // Awkward values: thirds and transcendentals survive the
            // shortest-representation round trip exactly.
            trace
                .rows
                .push(row(3, k as f64 / 3.0, std::f64::consts::PI * k as f64, true));
        }
        let dir = std::env::temp_dir().join("armctl-trace-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        trace.export_csv(&path).unwrap();
        let back = SimTrace::import_csv(&path).unwrap();
        assert_eq!(back.rows.len(), trace.rows.len());
        for (a, b) in trace.rows.iter().zip(&back.rows) {
            assert_eq!(a.time, b.time);
            assert_eq!(a.q_true, b.q_true);
            assert_eq!(a.q_m, b.q_m);
            assert_eq!(a.tau_cmd, b.tau_cmd);
            assert_eq!(a.d_true, b.d_true);
            assert_eq!(a.d_hat, b.d_hat);
            assert_eq!(a.d_hat_baseline, b.d_hat_baseline);
            assert_eq!(a.e, b.e);
        }
    }

    #[test]
    fn rmse_of_constant_error_is_its_magnitude() {
        let mut trace = SimTrace::new(2, 1e-3, false);
        for k in 0..10 {
            let mut r = row(2, k as f64 * 1e-3, 0.0, false);
            r.e = DVector::from_row_slice(&[-0.3, 0.7]);
            trace.rows.push(r);
        }
        let report = RmseReport::from_trace(&trace, "s", "c", 0.0);
        assert_eq!(report.rmse_tracking[0], 0.3);
        assert_eq!(report.rmse_tracking[1], 0.7);
    }

    #[test]
    fn identical_reports_compare_to_unit_ratios() {
        let report = RmseReport {
            schema_version: 1,
            scenario_id: "s".into(),
            controller_id: "c".into(),
            window_start: 0.0,
            rmse_tracking: vec![0.1, 0.2],
            rms_d_error: vec![0.0, 0.0],
            rms_d_error_baseline: None,
        };
        let summary = compare_report(&report, &report).unwrap();
        assert!(summary.joints.iter().all(|c| c.ratio == 1.0));
        assert!(summary.joints.iter().all(|c| c.winner == Winner::Tie));
        assert!(!summary.dominates);
    }

    #[test]
    fn dominance_detected() {
        let a = RmseReport {
            schema_version: 1,
            scenario_id: "s".into(),
            controller_id: "no_comp".into(),
            window_start: 0.0,
            rmse_tracking: vec![0.1, 0.2],
            rms_d_error: vec![0.0, 0.0],
            rms_d_error_baseline: None,
        };
        let mut b = a.clone();
        b.controller_id = "with_comp".into();
        b.rmse_tracking = vec![0.01, 0.05];
        let summary = compare_report(&a, &b).unwrap();
        assert!(summary.dominates);
        assert_eq!(summary.dominant.as_deref(), Some("with_comp"));
    }

    #[test]
    fn mismatched_joint_count_rejected() {
        let a = RmseReport {
            schema_version: 1,
            scenario_id: "s".into(),
            controller_id: "x".into(),
            window_start: 0.0,
            rmse_tracking: vec![0.1],
            rms_d_error: vec![0.0],
            rms_d_error_baseline: None,
        };
        let mut b = a.clone();
        b.rmse_tracking = vec![0.1, 0.1];
        assert!(matches!(compare_report(&a, &b), Err(Error::Comparison(_))));
    }

    #[test]
    fn mismatched_scenario_rejected() {
        let a = RmseReport {
            schema_version: 1,
            scenario_id: "s1".into(),
            controller_id: "x".into(),
            window_start: 0.0,
            rmse_tracking: vec![0.1],
            rms_d_error: vec![0.0],
            rms_d_error_baseline: None,
        };
        let mut b = a.clone();
        b.scenario_id = "s2".into();
        assert!(compare_report(&a, &b).is_err());
    }
}
