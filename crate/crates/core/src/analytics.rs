//! Training-curve analytics: cross-run averaging, locally weighted
//! polynomial regression smoothing, validation-loss minimum detection,
//! and overfitting diagnosis.
//!
//! Runs are aggregated on the intersection of their step grids rather
//! than by interpolation, so no values are fabricated between
//! evaluation points. Standard deviation uses the sample (n-1)
//! denominator throughout.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::trainer::RunLog;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no runs supplied")]
    NoRuns,
    #[error("runs share no evaluation steps")]
    EmptyIntersection,
    #[error("too few points: have {have}, need {need}")]
    TooFewPoints { have: usize, need: usize },
    #[error("degenerate smoothing window: {0}")]
    DegenerateWindow(String),
    #[error("empty series")]
    EmptySeries,
    #[error("curve grids do not match")]
    GridMismatch,
}

/// The four logged series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    TrainLoss,
    TrainAcc,
    ValLoss,
    ValAcc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::TrainLoss,
        MetricKind::TrainAcc,
        MetricKind::ValLoss,
        MetricKind::ValAcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::TrainLoss => "train_loss",
            MetricKind::TrainAcc => "train_acc",
            MetricKind::ValLoss => "val_loss",
            MetricKind::ValAcc => "val_acc",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cross-run mean, sample standard deviation, and (once applied) the
/// LOESS-smoothed mean for one metric on a common step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveStats {
    pub metric: MetricKind,
    pub grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Empty until [`CurveStats::apply_smoothing`] runs.
    pub smoothed: Vec<f64>,
}

impl CurveStats {
    /// Smooths the mean series in place.
    pub fn apply_smoothing(&mut self, cfg: &LoessConfig) -> Result<(), AnalyticsError> {
        let xs: Vec<f64> = self.grid.iter().map(|&s| s as f64).collect();
        self.smoothed = loess_smooth(&xs, &self.mean, cfg)?;
        Ok(())
    }

    /// `step,mean,std,smoothed` CSV; the smoothed column is empty when
    /// smoothing has not been applied.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean,std,smoothed\n");
        for (i, &step) in self.grid.iter().enumerate() {
            let smoothed = self
                .smoothed
                .get(i)
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                step, self.mean[i], self.std[i], smoothed
            ));
        }
        out
    }
}

fn metric_value(point: &crate::trainer::LogPoint, metric: MetricKind) -> f64 {
    match metric {
        MetricKind::TrainLoss => point.train_loss,
        MetricKind::TrainAcc => point.train_acc,
        MetricKind::ValLoss => point.val_loss,
        MetricKind::ValAcc => point.val_acc,
    }
}

/// Per-step mean and sample standard deviation across runs, on the
/// intersection of the runs' step grids. Smoothing is left empty.
pub fn aggregate_runs(logs: &[RunLog], metric: MetricKind) -> Result<CurveStats, AnalyticsError> {
    if logs.is_empty() {
        return Err(AnalyticsError::NoRuns);
    }
    let mut grid: BTreeSet<u64> = logs[0].points.iter().map(|p| p.step).collect();
    for log in &logs[1..] {
        let steps: BTreeSet<u64> = log.points.iter().map(|p| p.step).collect();
        grid = grid.intersection(&steps).copied().collect();
    }
    if grid.is_empty() {
        return Err(AnalyticsError::EmptyIntersection);
    }
    let grid: Vec<u64> = grid.into_iter().collect();

    let n_runs = logs.len();
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for &step in &grid {
        let values: Vec<f64> = logs
            .iter()
            .map(|log| {
                let point = log
                    .points
                    .iter()
                    .find(|p| p.step == step)
                    .expect("step is in the grid intersection");
                metric_value(point, metric)
            })
            .collect();
        let m = values.iter().sum::<f64>() / n_runs as f64;
        let s = if n_runs < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
            (ss / (n_runs - 1) as f64).sqrt()
        };
        mean.push(m);
        std.push(s);
    }
    Ok(CurveStats {
        metric,
        grid,
        mean,
        std,
        smoothed: Vec::new(),
    })
}

/// LOESS parameters: fraction of points per local window and the local
/// polynomial degree (1 or 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoessConfig {
    pub span: f64,
    pub degree: usize,
}

impl Default for LoessConfig {
    fn default() -> Self {
        Self {
            span: 0.3,
            degree: 1,
        }
    }
}

/// Tricube weight on normalized distance u in [0, 1].
fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Locally weighted polynomial regression: for each point, fits a
/// weighted polynomial of the configured degree over its
/// `max(degree + 2, ceil(span * n))` nearest neighbors with tricube
/// weights, and evaluates the fit at the point.
///
/// `xs` must be strictly increasing.
pub fn loess_smooth(xs: &[f64], ys: &[f64], cfg: &LoessConfig) -> Result<Vec<f64>, AnalyticsError> {
    let n = xs.len();
    assert_eq!(n, ys.len(), "xs and ys lengths differ");
    assert!(
        (1..=2).contains(&cfg.degree),
        "degree must be 1 or 2, got {}",
        cfg.degree
    );
    assert!(
        cfg.span > 0.0 && cfg.span <= 1.0,
        "span must be in (0, 1], got {}",
        cfg.span
    );
    let need = cfg.degree + 2;
    if n < need {
        return Err(AnalyticsError::TooFewPoints { have: n, need });
    }
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalyticsError::DegenerateWindow(
            "step positions must be strictly increasing".into(),
        ));
    }

    let k = need.max((cfg.span * n as f64).ceil() as usize).min(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = nearest_window(xs, i, k);
        let dmax = (xs[i] - xs[lo]).max(xs[hi - 1] - xs[i]);
        if dmax <= 0.0 || dmax.is_nan() {
            return Err(AnalyticsError::DegenerateWindow(format!(
                "window around x = {} has zero radius",
                xs[i]
            )));
        }
        let fitted = weighted_poly_fit_at(&xs[lo..hi], &ys[lo..hi], xs[i], dmax, cfg.degree);
        out.push(fitted);
    }
    Ok(out)
}

// Window of k consecutive points minimizing the max distance to xs[i].
fn nearest_window(xs: &[f64], i: usize, k: usize) -> (usize, usize) {
    let n = xs.len();
    let mut lo = i.saturating_sub(k - 1).min(n - k);
    let mut best_lo = lo;
    let mut best_d = f64::INFINITY;
    while lo <= i && lo + k <= n {
        let d = (xs[i] - xs[lo]).max(xs[lo + k - 1] - xs[i]);
        if d < best_d {
            best_d = d;
            best_lo = lo;
        }
        lo += 1;
    }
    (best_lo, best_lo + k)
}

// Weighted least-squares polynomial fit in the centered coordinate
// t = x - x0, evaluated at x0 (the intercept). Normal equations are
// solved by Gaussian elimination with partial pivoting; a singular
// system falls back to the weighted mean.
fn weighted_poly_fit_at(xs: &[f64], ys: &[f64], x0: f64, dmax: f64, degree: usize) -> f64 {
    let dim = degree + 1;
    let mut ata = vec![0.0f64; dim * dim];
    let mut atb = vec![0.0f64; dim];
    let mut wsum = 0.0;
    let mut wysum = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let t = x - x0;
        let w = tricube(t.abs() / dmax);
        if w == 0.0 {
            continue;
        }
        let mut powers = [0.0f64; 3];
        powers[0] = 1.0;
        powers[1] = t;
        if degree == 2 {
            powers[2] = t * t;
        }
        for p in 0..dim {
            for q in 0..dim {
                ata[p * dim + q] += w * powers[p] * powers[q];
            }
            atb[p] += w * powers[p] * y;
        }
        wsum += w;
        wysum += w * y;
    }
    match solve_linear(&mut ata, &mut atb, dim) {
        Some(coeffs) => coeffs[0],
        None => wysum / wsum, // collinear window: weighted mean
    }
}

// In-place Gaussian elimination with partial pivoting; returns None on
// a (numerically) singular system.
fn solve_linear(a: &mut [f64], b: &mut [f64], dim: usize) -> Option<Vec<f64>> {
    let scale = a
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&r1, &r2| {
                a[r1 * dim + col]
                    .abs()
                    .partial_cmp(&a[r2 * dim + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * dim + col].abs() < 1e-12 * scale {
            return None;
        }
        if pivot_row != col {
            for j in 0..dim {
                a.swap(col * dim + j, pivot_row * dim + j);
            }
            b.swap(col, pivot_row);
        }
        for row in (col + 1)..dim {
            let factor = a[row * dim + col] / a[col * dim + col];
            for j in col..dim {
                a[row * dim + j] -= factor * a[col * dim + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for j in (col + 1)..dim {
            acc -= a[col * dim + j] * x[j];
        }
        x[col] = acc / a[col * dim + col];
    }
    Some(x)
}

/// Argmin over the mean or smoothed series; ties break to the earliest
/// step.
pub fn find_global_min(
    stats: &CurveStats,
    use_smoothed: bool,
) -> Result<(u64, f64), AnalyticsError> {
    let series = if use_smoothed {
        &stats.smoothed
    } else {
        &stats.mean
    };
    if series.is_empty() || stats.grid.is_empty() {
        return Err(AnalyticsError::EmptySeries);
    }
    let mut best = (stats.grid[0], series[0]);
    for (&step, &value) in stats.grid.iter().zip(series).skip(1) {
        if value < best.1 {
            best = (step, value);
        }
    }
    Ok(best)
}

/// Validation accuracy (mean, std) at the step where the smoothed
/// validation loss attains its global minimum.
pub fn accuracy_at_min_loss(
    acc_stats: &CurveStats,
    loss_stats: &CurveStats,
) -> Result<(f64, f64), AnalyticsError> {
    if acc_stats.grid != loss_stats.grid {
        return Err(AnalyticsError::GridMismatch);
    }
    let (step, _) = find_global_min(loss_stats, true)?;
    let idx = loss_stats
        .grid
        .iter()
        .position(|&s| s == step)
        .expect("argmin step is on the grid");
    Ok((acc_stats.mean[idx], acc_stats.std[idx]))
}

/// Thresholds for [`overfit_diagnostic`]; both clauses must hold for an
/// `Overfitted` verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverfitConfig {
    /// Clause (a): smoothed val loss at the end must exceed its global
    /// minimum by more than this fraction.
    pub min_rise: f64,
    /// Clause (b): the degree-1 slope of the smoothed (val - train) gap
    /// over the final third must exceed this.
    pub gap_slope_min: f64,
}

impl Default for OverfitConfig {
    fn default() -> Self {
        Self {
            min_rise: 0.10,
            gap_slope_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Overfitted,
    NotOverfitted,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Overfitted => "overfitted",
            Verdict::NotOverfitted => "not_overfitted",
        })
    }
}

/// The two quantities the verdict is based on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverfitEvidence {
    pub val_end: f64,
    pub val_min: f64,
    /// val_end / val_min - 1.
    pub end_rise: f64,
    /// Least-squares slope of the (val - train) gap over the final third.
    pub gap_slope: f64,
}

/// Diagnoses overfitting from smoothed train/val loss curves: verdict is
/// `Overfitted` when the smoothed validation loss ends more than
/// `min_rise` above its global minimum AND the smoothed val-train gap
/// has positive slope over the final third of the grid.
pub fn overfit_diagnostic(
    train_stats: &CurveStats,
    val_stats: &CurveStats,
    cfg: &OverfitConfig,
) -> Result<(Verdict, OverfitEvidence), AnalyticsError> {
    if train_stats.grid != val_stats.grid {
        return Err(AnalyticsError::GridMismatch);
    }
    let n = train_stats.grid.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewPoints { have: n, need: 2 });
    }
    if train_stats.smoothed.len() != n || val_stats.smoothed.len() != n {
        return Err(AnalyticsError::EmptySeries);
    }

    let val = &val_stats.smoothed;
    let val_end = val[n - 1];
    let val_min = val.iter().cloned().fold(f64::INFINITY, f64::min);
    let end_rise = val_end / val_min - 1.0;

    // Final third, but at least the last two points so a slope exists.
    let start = (n - n.div_ceil(3)).min(n - 2);
    let xs: Vec<f64> = train_stats.grid[start..].iter().map(|&s| s as f64).collect();
    let gaps: Vec<f64> = (start..n)
        .map(|i| val[i] - train_stats.smoothed[i])
        .collect();
    let gap_slope = ls_slope(&xs, &gaps);

    let verdict = if end_rise > cfg.min_rise && gap_slope > cfg.gap_slope_min {
        Verdict::Overfitted
    } else {
        Verdict::NotOverfitted
    };
    Ok((
        verdict,
        OverfitEvidence {
            val_end,
            val_min,
            end_rise,
            gap_slope,
        },
    ))
}

// Ordinary least-squares slope.
fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        var += (x - mx) * (x - mx);
    }
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}
