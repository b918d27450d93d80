//! `analyze`: aggregate every run log, smooth each metric, write the
//! per-metric stats CSVs, the diagnostic report, and the curves plot.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxrpipe::analytics::{
    accuracy_at_min_loss, aggregate_runs, find_global_min, overfit_diagnostic, CurveStats,
    MetricKind,
};
use cxrpipe::trainer::RunLog;

use crate::config::PipelineConfig;
use crate::svg::{self, Series};

pub fn run(cfg: &PipelineConfig, run_dir: Option<&Path>) -> Result<()> {
    let dir = run_dir
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| cfg.output_dir.join("runs"));
    let logs = load_run_logs(&dir)?;
    if logs.is_empty() {
        bail!("no run-*.csv files in {}", dir.display());
    }

    let mut stats: HashMap<MetricKind, CurveStats> = HashMap::new();
    for metric in MetricKind::ALL {
        let mut s = aggregate_runs(&logs, metric)?;
        s.apply_smoothing(&cfg.loess)?;
        stats.insert(metric, s);
    }

    let analysis_dir = cfg.output_dir.join("analysis");
    std::fs::create_dir_all(&analysis_dir)?;
    for metric in MetricKind::ALL {
        std::fs::write(
            analysis_dir.join(format!("{}.csv", metric.name())),
            stats[&metric].to_csv(),
        )?;
    }

    let train_loss = &stats[&MetricKind::TrainLoss];
    let val_loss = &stats[&MetricKind::ValLoss];
    let val_acc = &stats[&MetricKind::ValAcc];

    let (verdict, evidence) = overfit_diagnostic(train_loss, val_loss, &cfg.overfit)?;
    let (min_step, min_value) = find_global_min(val_loss, true)?;
    let (acc_mean, acc_std) = accuracy_at_min_loss(val_acc, val_loss)?;

    let mut report = String::new();
    writeln!(report, "runs: {}", logs.len())?;
    writeln!(report, "grid points: {}", val_loss.grid.len())?;
    writeln!(report, "verdict: {verdict}")?;
    writeln!(
        report,
        "evidence: smoothed val loss ends at {:.6} vs global min {:.6} (rise {:.1}%, threshold {:.1}%)",
        evidence.val_end,
        evidence.val_min,
        evidence.end_rise * 100.0,
        cfg.overfit.min_rise * 100.0
    )?;
    writeln!(
        report,
        "evidence: smoothed val-train gap slope over final third = {:.6e} (threshold {:.6e})",
        evidence.gap_slope, cfg.overfit.gap_slope_min
    )?;
    writeln!(
        report,
        "smoothed val loss global minimum: step {min_step}, value {min_value:.6}"
    )?;
    writeln!(
        report,
        "val accuracy at smoothed val-loss minimum: {acc_mean:.3} +- {acc_std:.3}"
    )?;
    std::fs::write(analysis_dir.join("report.txt"), &report)?;

    let svg = svg::render_curves(
        "averaged runs with smoothing",
        &[
            (
                "accuracy",
                vec![
                    Series {
                        label: "train",
                        color: "#1f77b4",
                        stats: &stats[&MetricKind::TrainAcc],
                    },
                    Series {
                        label: "val",
                        color: "#d62728",
                        stats: &stats[&MetricKind::ValAcc],
                    },
                ],
            ),
            (
                "loss",
                vec![
                    Series {
                        label: "train",
                        color: "#1f77b4",
                        stats: train_loss,
                    },
                    Series {
                        label: "val",
                        color: "#d62728",
                        stats: val_loss,
                    },
                ],
            ),
        ],
    );
    std::fs::write(analysis_dir.join("curves.svg"), svg)?;

    print!("{report}");
    println!("analyze: wrote {}", analysis_dir.display());
    Ok(())
}

fn load_run_logs(dir: &Path) -> Result<Vec<RunLog>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading run dir {}", dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("run-") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    let mut logs = Vec::with_capacity(paths.len());
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let run_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("run")
            .to_string();
        logs.push(
            RunLog::from_csv(&text, &run_id)
                .with_context(|| format!("parsing {}", path.display()))?,
        );
    }
    Ok(logs)
}
