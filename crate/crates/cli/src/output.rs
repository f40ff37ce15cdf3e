//! File emission: CSV traces, metric sidecars, verification reports and the
//! standalone plot script. All files are written atomically (tmp + rename).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use phem_core::error::{Error, Result};
use phem_core::metrics::Metrics;
use phem_core::sim::SimRecord;
use phem_core::target::DesiredTarget;
use phem_core::verify::{ConditionReport, ConditionStatus};
use serde::Serialize;

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Config(format!("mkdir {dir:?}: {e}")))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| Error::Config(format!("creating {tmp:?}: {e}")))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| Error::Config(format!("writing {tmp:?}: {e}")))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::Config(format!("renaming to {path:?}: {e}")))?;
    Ok(())
}

/// Trace columns: `t, q..., p..., xe..., u..., Hd, err_norm`.
pub fn trace_csv(record: &SimRecord) -> String {
    let mut s = String::new();
    s.push('t');
    for i in 0..record.n_m {
        s.push_str(&format!(",q{i}"));
    }
    for i in 0..record.n_m {
        s.push_str(&format!(",p{i}"));
    }
    for i in 0..record.n_e {
        s.push_str(&format!(",xe{i}"));
    }
    for i in 0..record.n_e {
        s.push_str(&format!(",u{i}"));
    }
    s.push_str(",Hd,err_norm\n");
    for k in 0..record.times.len() {
        s.push_str(&format!("{:e}", record.times[k]));
        for v in &record.states[k] {
            s.push_str(&format!(",{v:e}"));
        }
        for v in &record.inputs[k] {
            s.push_str(&format!(",{v:e}"));
        }
        s.push_str(&format!(",{:e},{:e}\n", record.energy[k], record.err_norm[k]));
    }
    s
}

/// Reference trajectory sampled on the same grid (for plot overlays).
pub fn reference_csv(target: &DesiredTarget, times: &[f64]) -> Result<String> {
    let mut s = String::from("t,q_star,p_star,xe_star\n");
    for &t in times {
        let st = target.state(t)?;
        s.push_str(&format!("{t:e},{:e},{:e},{:e}\n", st.q[0], st.p[0], st.x_e[0]));
    }
    Ok(s)
}

#[derive(Serialize)]
pub struct MetricsJson {
    pub final_error: f64,
    pub zero_crossings: usize,
    pub hysteresis_band: f64,
    pub peak_overshoot: f64,
    pub l2_final: f64,
    pub fitted_rate: Option<f64>,
    pub fit_r2: Option<f64>,
    pub fit_points: usize,
    pub completed: bool,
    pub aborted_at: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub field_evals: usize,
}

pub fn metrics_json(m: &Metrics, record: &SimRecord) -> String {
    let j = MetricsJson {
        final_error: m.final_error,
        zero_crossings: m.zero_crossings,
        hysteresis_band: m.hysteresis_band,
        peak_overshoot: m.peak_overshoot,
        l2_final: m.l2_final,
        fitted_rate: m.fitted_rate,
        fit_r2: m.fit_r2,
        fit_points: m.fit_points,
        completed: record.completed(),
        aborted_at: record.aborted.as_ref().map(|a| a.time),
        accepted_steps: record.stats.accepted,
        rejected_steps: record.stats.rejected,
        field_evals: record.stats.field_evals,
    };
    serde_json::to_string_pretty(&j).expect("metrics serialization")
}

#[derive(Serialize)]
struct ConditionJson {
    name: String,
    detail: String,
    status: String,
    margin: f64,
    blocking: bool,
}

#[derive(Serialize)]
struct ReportJson {
    law: String,
    grade: String,
    min_grade: String,
    certified: bool,
    sigma: Option<f64>,
    conditions: Vec<ConditionJson>,
    notes: Vec<String>,
}

pub fn report_json(
    report: &ConditionReport,
    min_grade: phem_core::verify::CertificateGrade,
) -> String {
    let j = ReportJson {
        law: report.law.name().to_string(),
        grade: report.grade.name().to_string(),
        min_grade: min_grade.name().to_string(),
        certified: report.certified(min_grade),
        sigma: report.sigma,
        conditions: report
            .entries
            .iter()
            .map(|e| ConditionJson {
                name: e.name.clone(),
                detail: e.detail.clone(),
                status: match e.status {
                    ConditionStatus::Passed => "passed",
                    ConditionStatus::Failed => "failed",
                    ConditionStatus::Assumed => "assumed",
                    ConditionStatus::Info => "info",
                }
                .to_string(),
                margin: e.margin,
                blocking: e.blocking,
            })
            .collect(),
        notes: report.notes.clone(),
    };
    serde_json::to_string_pretty(&j).expect("report serialization")
}

pub fn print_report(report: &ConditionReport, min_grade: phem_core::verify::CertificateGrade) {
    println!("law: {}", report.law.name());
    for e in &report.entries {
        let status = match e.status {
            ConditionStatus::Passed => "pass",
            ConditionStatus::Failed => "FAIL",
            ConditionStatus::Assumed => "assumed",
            ConditionStatus::Info => "info",
        };
        println!("  [{status:>7}] {:32} margin {:>13.4e}  {}", e.name, e.margin, e.detail);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    println!(
        "grade: {} (required: {}) -> {}",
        report.grade.name(),
        min_grade.name(),
        if report.certified(min_grade) { "CERTIFIED" } else { "NOT CERTIFIED" }
    );
    if let Some(s) = report.sigma {
        println!("contraction rate estimate: {s:.4e} 1/s");
    }
}

/// A standalone matplotlib script that renders the q/target overlay, the
/// running error-norm panel and the control signal for every case directory
/// next to it.
pub fn plot_script() -> &'static str {
    r#"#!/usr/bin/env python3
"""Render the traces in this directory: q vs target, error L2 norm, control."""
import csv
import math
import os
import sys

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("matplotlib is required to render the plots")

here = os.path.dirname(os.path.abspath(__file__))

def read_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]}

cases = sorted(
    d for d in os.listdir(here)
    if os.path.isdir(os.path.join(here, d))
    and os.path.exists(os.path.join(here, d, "trace.csv"))
)
if not cases:
    sys.exit("no case directories with trace.csv found")

ref = None
ref_path = os.path.join(here, "reference.csv")
if os.path.exists(ref_path):
    ref = read_csv(ref_path)

fig, axes = plt.subplots(3, 1, figsize=(9, 10), sharex=False)
for case in cases:
    tr = read_csv(os.path.join(here, case, "trace.csv"))
    t = tr["t"]
    axes[0].plot(t, tr["q0"], label=case)
    # running L2 of the recorded error norm
    l2, acc = [0.0], 0.0
    for k in range(1, len(t)):
        acc += 0.5 * (tr["err_norm"][k] ** 2 + tr["err_norm"][k - 1] ** 2) * (t[k] - t[k - 1])
        l2.append(math.sqrt(acc))
    axes[1].plot(t, l2, label=case)
    axes[2].plot(t, tr["u0"], label=case)
if ref is not None:
    axes[0].plot(ref["t"], ref["q_star"], "k--", linewidth=1, label="target")
axes[0].set_ylabel("position q [m]")
axes[1].set_ylabel("running L2 error norm")
axes[2].set_ylabel("control input u")
axes[2].set_xlabel("time [s]")
for ax in axes:
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
fig.tight_layout()
out = os.path.join(here, "figure.png")
fig.savefig(out, dpi=150)
print(f"wrote {out}")
"#
}

pub fn scenario_dir(out_dir: &Path, scenario_name: &str) -> PathBuf {
    out_dir.join(scenario_name)
}
