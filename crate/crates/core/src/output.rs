//! Stable on-disk result formats.
//!
//! One run produces `metrics.csv` (long-format, one row per window per
//! service and per node), `summary.json`, and `decisions.json`; a comparison
//! adds `compare.json`. Formats are deterministic: floats use fixed decimal
//! places in the CSV, JSON keys serialize in sorted order, and solver wall
//! times — the only nondeterministic measurements — are omitted unless
//! explicitly requested, so identical inputs yield byte-identical files.
//! Every file is written to a temporary sibling and renamed into place, so a
//! crash never leaves a partial file under the final name.

use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

use crate::drl::Degradation;
use crate::simulator::{Comparison, MetricsLog, WindowMetrics, WindowMode};

/// Column layout of `metrics.csv`. Service rows fill `service` and
/// `mean_delay_ms`; node rows fill `node` and `usage_pct`; both repeat the
/// window-level fields. `solve_ms` (total exact-solver milliseconds, on
/// service rows) stays empty unless timing capture is on.
pub const METRICS_HEADER: &str =
    "window,mode,service,mean_delay_ms,node,usage_pct,active_nodes,phase,solve_ms,flags";

/// Compact single-token rendering of one degradation flag.
pub fn flag_code(d: &Degradation) -> String {
    match d {
        Degradation::NoSecondary { service } => format!("no_secondary({service})"),
        Degradation::RecoveryImpossible => "recovery_impossible".to_string(),
        Degradation::PlacementInfeasible => "placement_infeasible".to_string(),
        Degradation::Unmapped { service, count } => format!("unmapped({service}:{count})"),
        Degradation::Overloaded { node, service } => format!("overloaded({node}:{service})"),
    }
}

fn flags_column(row: &WindowMetrics) -> String {
    row.degradations.iter().map(flag_code).collect::<Vec<_>>().join(";")
}

fn window_solve_ms(row: &WindowMetrics) -> f64 {
    (row.times.sp + row.times.psvm + row.times.srp + row.br_solve) * 1000.0
}

/// Render one run as the documented CSV.
pub fn metrics_csv(log: &MetricsLog, timing: bool) -> String {
    let mut out = String::new();
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for row in &log.windows {
        let flags = flags_column(row);
        let solve = if timing {
            format!("{:.3}", window_solve_ms(row))
        } else {
            String::new()
        };
        for (s, d) in row.mean_delay_ms.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{:.6},,,{},{},{},{}\n",
                row.window, log.mode, s, d, row.active_nodes, row.mode, solve, flags
            ));
        }
        for (e, u) in row.usage_pct.iter().enumerate() {
            out.push_str(&format!(
                "{},{},,,{},{:.3},{},{},,{}\n",
                row.window, log.mode, e, u, row.active_nodes, row.mode, flags
            ));
        }
    }
    out
}

fn phase_mean_delay(log: &MetricsLog, pre: bool) -> f64 {
    let rows: Vec<&WindowMetrics> = log
        .windows
        .iter()
        .filter(|w| {
            matches!(w.mode, WindowMode::PrASp | WindowMode::BrPre) == pre && w.arrivals > 0
        })
        .collect();
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|w| w.overall_delay_ms).sum::<f64>() / rows.len() as f64
}

/// The per-run aggregate report.
pub fn summary_json(log: &MetricsLog, timing: bool) -> Value {
    let n = log.windows.len().max(1) as f64;
    let usage_mean = log
        .windows
        .iter()
        .map(|w| {
            if w.usage_pct.is_empty() {
                0.0
            } else {
                w.usage_pct.iter().sum::<f64>() / w.usage_pct.len() as f64
            }
        })
        .sum::<f64>()
        / n;
    let active: Vec<u32> = log.windows.iter().map(|w| w.active_nodes).collect();
    let mut phases = serde_json::Map::new();
    for w in &log.windows {
        *phases.entry(w.mode.to_string()).or_insert(json!(0)) =
            json!(phases.get(&w.mode.to_string()).and_then(Value::as_u64).unwrap_or(0) + 1);
    }
    let mut flag_counts = serde_json::Map::new();
    for w in &log.windows {
        for d in &w.degradations {
            let key = flag_code(d);
            *flag_counts.entry(key.clone()).or_insert(json!(0)) =
                json!(flag_counts.get(&key).and_then(Value::as_u64).unwrap_or(0) + 1);
        }
    }
    let clean = log.windows.iter().filter(|w| w.degradations.is_empty()).count();

    let mut doc = json!({
        "mode": log.mode.to_string(),
        "seed": log.seed,
        "windows": log.windows.len(),
        "mean_delay_ms": {
            "pre_attack": phase_mean_delay(log, true),
            "post_attack": phase_mean_delay(log, false),
            "overall": log.windows.iter().map(|w| w.overall_delay_ms).sum::<f64>() / n,
        },
        "resource_usage_pct_mean": usage_mean,
        "active_nodes": {
            "mean": active.iter().map(|&a| f64::from(a)).sum::<f64>() / n,
            "min": active.iter().min().copied().unwrap_or(0),
            "max": active.iter().max().copied().unwrap_or(0),
        },
        "occupied_units_first_window":
            log.windows.first().map_or(0, |w| w.occupied_units),
        "clean_windows": clean,
        "flagged_windows": log.windows.len() - clean,
        "phases": Value::Object(phases),
        "degradations": Value::Object(flag_counts),
    });
    if timing {
        doc["solve_ms_total"] =
            json!(log.windows.iter().map(window_solve_ms).sum::<f64>());
    }
    doc
}

/// The per-window decision trail.
pub fn decisions_json(log: &MetricsLog) -> Value {
    let rows: Vec<Value> = log
        .windows
        .iter()
        .map(|w| {
            json!({
                "window": w.window,
                "phase": w.mode.to_string(),
                "action": w.action.to_string(),
                "q_value": w.q_value,
                "mapped": w.mapped,
                "arrivals": w.arrivals,
                "flags": w.degradations.iter().map(flag_code).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!(rows)
}

/// The paired-run report.
pub fn compare_json(cmp: &Comparison, timing: bool) -> Value {
    let s = &cmp.summary;
    let per_window: Vec<Value> = cmp
        .ours
        .windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let br = cmp.br.as_ref().and_then(|l| l.windows.get(i));
            json!({
                "window": w.window,
                "ours_phase": w.mode.to_string(),
                "ours_delay_ms": w.overall_delay_ms,
                "br_phase": br.map(|b| b.mode.to_string()),
                "br_delay_ms": br.map(|b| b.overall_delay_ms),
            })
        })
        .collect();
    let mut doc = json!({
        "br_infeasible": s.br_infeasible,
        "pre_attack": {
            "mean_delay_ms": { "ours": s.pre_delay_ours, "br": s.pre_delay_br },
            "occupied_units": {
                "ours": s.pre_occupied_ours,
                "br": s.pre_occupied_br,
                "br_minus_ours": s.pre_occupied_br as i64 - s.pre_occupied_ours as i64,
            },
        },
        "post_attack": {
            "mean_delay_ms": { "ours": s.post_delay_ours, "br": s.post_delay_br },
        },
        "active_nodes_mean": { "ours": s.active_ours, "br": s.active_br },
        "per_window": per_window,
    });
    if timing {
        doc["solve_s"] = json!({ "ours": s.solve_s_ours, "br": s.solve_s_br });
    }
    doc
}

/// Write `contents` to `path` via a temporary sibling plus rename, so the
/// final name either holds the complete file or nothing.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!("{}.tmp", file_name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

pub fn write_metrics(path: &Path, log: &MetricsLog, timing: bool) -> io::Result<()> {
    write_atomic(path, &metrics_csv(log, timing))
}

pub fn write_summary(path: &Path, log: &MetricsLog, timing: bool) -> io::Result<()> {
    write_atomic(path, &pretty(&summary_json(log, timing)))
}

pub fn write_decisions(path: &Path, log: &MetricsLog) -> io::Result<()> {
    write_atomic(path, &pretty(&decisions_json(log)))
}

pub fn write_compare(path: &Path, cmp: &Comparison, timing: bool) -> io::Result<()> {
    write_atomic(path, &pretty(&compare_json(cmp, timing)))
}

fn pretty(v: &Value) -> String {
    let mut text = serde_json::to_string_pretty(v).expect("static document serializes");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::SolveTimes;
    use crate::simulator::{DecisionKind, RunMode};

    fn sample_log() -> MetricsLog {
        MetricsLog {
            mode: RunMode::Ours,
            seed: 9,
            windows: vec![
                WindowMetrics {
                    window: 0,
                    mode: WindowMode::PrASp,
                    action: DecisionKind::Initial,
                    mean_delay_ms: vec![1.25, 0.5],
                    overall_delay_ms: 1.0,
                    usage_pct: vec![20.0, 0.0, 10.0],
                    occupied_units: 30,
                    active_nodes: 2,
                    times: SolveTimes { sp: 0.004, psvm: 0.001, srp: 0.0 },
                    br_solve: 0.0,
                    q_value: 1.0,
                    mapped: 40,
                    arrivals: 40,
                    degradations: Vec::new(),
                },
                WindowMetrics {
                    window: 1,
                    mode: WindowMode::PoAPsvm,
                    action: DecisionKind::Recovered,
                    mean_delay_ms: vec![35.0, 4.0],
                    overall_delay_ms: 20.0,
                    usage_pct: vec![0.0, 0.0, 30.0],
                    occupied_units: 30,
                    active_nodes: 1,
                    times: SolveTimes { sp: 0.0, psvm: 0.002, srp: 0.003 },
                    br_solve: 0.0,
                    q_value: 0.8,
                    mapped: 38,
                    arrivals: 40,
                    degradations: vec![
                        Degradation::Unmapped { service: 1, count: 2 },
                        Degradation::Overloaded { node: 2, service: 0 },
                    ],
                },
            ],
        }
    }

    #[test]
    fn csv_layout_is_one_row_per_service_and_node() {
        let log = sample_log();
        let csv = metrics_csv(&log, false);
        let lines: Vec<&str> = csv.lines().collect();
        // header + 2 windows x (2 services + 3 nodes)
        assert_eq!(lines.len(), 1 + 2 * 5);
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "0,ours,0,1.250000,,,2,PrA-SP,,");
        assert_eq!(lines[3], "0,ours,,,0,20.000,2,PrA-SP,,");
        // Flags repeat on every row of the degraded window.
        let flagged = "unmapped(1:2);overloaded(2:0)";
        assert!(lines[6].ends_with(flagged), "{}", lines[6]);
        assert!(lines[10].ends_with(flagged), "{}", lines[10]);
    }

    #[test]
    fn solver_times_stay_out_of_the_csv_unless_asked() {
        let log = sample_log();
        let solve_col = |line: &str| line.split(',').nth(8).unwrap().to_string();
        for line in metrics_csv(&log, false).lines().skip(1) {
            assert_eq!(solve_col(line), "");
        }
        let timed = metrics_csv(&log, true);
        // 4 ms SP + 1 ms PSVM in window 0, on service rows only.
        assert_eq!(solve_col(timed.lines().nth(1).unwrap()), "5.000");
        assert_eq!(solve_col(timed.lines().nth(3).unwrap()), "");
    }

    #[test]
    fn every_flag_variant_has_a_stable_code() {
        assert_eq!(flag_code(&Degradation::NoSecondary { service: 3 }), "no_secondary(3)");
        assert_eq!(flag_code(&Degradation::RecoveryImpossible), "recovery_impossible");
        assert_eq!(flag_code(&Degradation::PlacementInfeasible), "placement_infeasible");
        assert_eq!(
            flag_code(&Degradation::Unmapped { service: 0, count: 64 }),
            "unmapped(0:64)"
        );
        assert_eq!(
            flag_code(&Degradation::Overloaded { node: 2, service: 1 }),
            "overloaded(2:1)"
        );
    }

    #[test]
    fn summary_counts_phases_and_flags() {
        let doc = summary_json(&sample_log(), false);
        assert_eq!(doc["windows"], 2);
        assert_eq!(doc["phases"]["PrA-SP"], 1);
        assert_eq!(doc["phases"]["PoA-PSVM"], 1);
        assert_eq!(doc["clean_windows"], 1);
        assert_eq!(doc["flagged_windows"], 1);
        assert_eq!(doc["degradations"]["unmapped(1:2)"], 1);
        assert!(doc.get("solve_ms_total").is_none());
        assert!(summary_json(&sample_log(), true).get("solve_ms_total").is_some());
    }

    #[test]
    fn decisions_trail_one_entry_per_window() {
        let doc = decisions_json(&sample_log());
        let rows = doc.as_array().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0]["action"], "initial-solve");
        assert_eq!(rows[1]["action"], "recovered");
        assert_eq!(rows[1]["flags"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn identical_logs_render_identical_bytes() {
        let log = sample_log();
        assert_eq!(metrics_csv(&log, false), metrics_csv(&log, false));
        assert_eq!(
            pretty(&summary_json(&log, false)),
            pretty(&summary_json(&log, false))
        );
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        write_atomic(&path, "hello\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "hello\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers, vec![std::ffi::OsString::from("metrics.csv")]);
    }
}
