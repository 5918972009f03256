//! Human-readable summary and SVG plots rendered from a run directory's CSV
//! artifacts. Nothing is recomputed: every number shown is read from a CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::svg::{Plot, PALETTE};

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::Data(icurisk::Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "missing run artifact"),
            }));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Data(e.into()))?;
        let header = r
            .headers()
            .map_err(|e| CliError::Data(e.into()))?
            .iter()
            .map(str::to_string)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Data(e.into()))?;
        Ok(Self { header, rows })
    }

    pub fn col(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(icurisk::Error::InvalidInput(format!("CSV lacks column {name:?}"))))
    }

    pub fn nums(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self.col(name)?;
        self.rows.iter().map(|r| num(&r[j])).collect()
    }
}

fn num(s: &str) -> Result<f64, CliError> {
    s.parse()
        .map_err(|_| CliError::Data(icurisk::Error::InvalidInput(format!("not a number: {s:?}"))))
}

/// Three-decimal display of a CSV cell; non-numeric cells pass through.
fn show(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(v) if v != 0.0 && v.abs() < 5e-4 => format!("{v:.1e}"),
        Ok(v) if s.contains('.') || s.contains('e') => format!("{v:.3}"),
        _ => s.to_string(),
    }
}

fn markdown(t: &Table, cols: &[&str]) -> Result<String, CliError> {
    let idx: Vec<usize> = cols.iter().map(|c| t.col(c)).collect::<Result<_, _>>()?;
    let mut s = format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len()));
    for r in &t.rows {
        let cells: Vec<String> = idx.iter().map(|&j| show(&r[j])).collect();
        let _ = writeln!(s, "| {} |", cells.join(" | "));
    }
    Ok(s)
}

pub struct RocSeries {
    pub family: String,
    pub points: Vec<(f64, f64)>,
}

pub fn roc_svg(series: &[RocSeries]) -> String {
    let mut p = Plot::new("ROC on the test split", "False positive rate", "True positive rate", (0.0, 1.0), (0.0, 1.0));
    p.dashed((0.0, 0.0), (1.0, 1.0));
    let mut legend = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let (a, b) = (s.points[0], s.points[s.points.len() - 1]);
        let attrs = format!(
            r#"data-family="{}" data-start="{},{}" data-end="{},{}""#,
            s.family, a.0, a.1, b.0, b.1
        );
        p.polyline(&s.points, color, &attrs);
        legend.push((s.family.clone(), color));
    }
    p.legend(&legend);
    p.finish()
}

/// Horizontal bars, one per feature, ordered by decreasing delta.
pub fn ablation_svg(entries: &[(String, f64)]) -> String {
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let lo = sorted.iter().map(|e| e.1).fold(0.0, f64::min);
    let hi = sorted.iter().map(|e| e.1).fold(0.0, f64::max);
    let n = sorted.len() as f64;
    let mut p = Plot::new("AUROC drop when a feature is removed", "Delta AUROC", "", (lo, hi), (0.0, n));
    for (i, (name, d)) in sorted.iter().enumerate() {
        let top = n - i as f64;
        let attrs = format!(r#"data-rank="{}" data-feature="{name}" data-delta="{d}""#, i + 1);
        p.rect(0.0, *d, top - 0.85, top - 0.15, PALETTE[0], &attrs);
        p.text(lo, top - 0.6, name, "start");
    }
    p.finish()
}

/// Density histogram: bar height is `count / (n * width)`, so bar areas sum to 1.
pub fn histogram_svg(bins: &[(f64, f64, usize)], marker: Option<(f64, &str)>) -> (String, f64) {
    let n: usize = bins.iter().map(|b| b.2).sum();
    let dens: Vec<f64> = bins
        .iter()
        .map(|&(a, b, c)| if n == 0 { 0.0 } else { c as f64 / (n as f64 * (b - a)) })
        .collect();
    let top = dens.iter().copied().fold(0.0, f64::max).max(1e-12);
    let mut p = Plot::new("Posterior risk distribution", "Predicted risk", "Density", (0.0, 1.0), (0.0, top * 1.05));
    let mut area = 0.0;
    for (&(a, b, c), &h) in bins.iter().zip(&dens) {
        let share = if n == 0 { 0.0 } else { c as f64 / n as f64 };
        area += h * (b - a);
        let attrs = format!(r#"data-count="{c}" data-area="{share}""#);
        p.rect(a, b, 0.0, h, PALETTE[0], &attrs);
    }
    if let Some((x, label)) = marker {
        p.dashed((x, 0.0), (x, top * 1.05));
        p.text(x, top, label, "start");
    }
    (p.finish(), area)
}

pub fn ale_svg(feature: &str, edges: &[f64], ale: &[f64]) -> String {
    let lo = ale.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ale.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = Plot::new(
        &format!("Accumulated local effect of {feature}"),
        feature,
        "Effect on predicted risk",
        (edges[0], edges[edges.len() - 1]),
        (lo, hi),
    );
    let pts: Vec<(f64, f64)> = edges.iter().copied().zip(ale.iter().copied()).collect();
    p.polyline(&pts, PALETTE[1], &format!(r#"data-feature="{feature}""#));
    p.finish()
}

pub struct ReportOutput {
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(path)
}

/// Renders `summary.md` and `plots/*.svg` for a completed run.
pub fn emit_report(dir: &Path) -> Result<ReportOutput, CliError> {
    if dir.join(crate::pipeline::FAILED_FILE).exists() {
        return Err(CliError::Data(icurisk::Error::InvalidInput(format!(
            "{} holds a failed run",
            dir.display()
        ))));
    }
    let eval_test = Table::read(&dir.join("eval_test.csv"))?;
    let eval_train = Table::read(&dir.join("eval_train.csv"))?;
    let strata = Table::read(&dir.join("stratum_tests.csv"))?;
    let post = Table::read(&dir.join("posterior_summary.csv"))?;
    let hist = Table::read(&dir.join("posterior_hist.csv"))?;
    let plots_dir = dir.join("plots");
    fs::create_dir_all(&plots_dir).map_err(CliError::io(&plots_dir))?;
    let mut plots = Vec::new();

    let families: Vec<String> = eval_test.rows.iter().map(|r| r[0].clone()).collect();
    let mut series = Vec::new();
    for f in &families {
        let t = Table::read(&dir.join(format!("roc_{f}.csv")))?;
        let points = t.nums("fpr")?.into_iter().zip(t.nums("tpr")?).collect();
        series.push(RocSeries {
            family: f.clone(),
            points,
        });
    }
    plots.push(write(plots_dir.join("roc.svg"), &roc_svg(&series))?);

    let ablation = if dir.join("ablation.csv").exists() {
        let t = Table::read(&dir.join("ablation.csv"))?;
        let j = t.col("feature")?;
        let entries: Vec<(String, f64)> = t.rows.iter().map(|r| r[j].clone()).zip(t.nums("delta")?).collect();
        plots.push(write(plots_dir.join("ablation.svg"), &ablation_svg(&entries))?);
        Some(t)
    } else {
        None
    };

    let bins: Vec<(f64, f64, usize)> = hist
        .nums("bin_low")?
        .into_iter()
        .zip(hist.nums("bin_high")?)
        .zip(hist.nums("count")?)
        .map(|((a, b), c)| (a, b, c as usize))
        .collect();
    let stat = |name: &str| -> Result<String, CliError> {
        post.rows
            .iter()
            .find(|r| r[0] == name)
            .map(|r| r[1].clone())
            .ok_or_else(|| CliError::Data(icurisk::Error::InvalidInput(format!("posterior summary lacks {name}"))))
    };
    let mean = stat("mean")?;
    let (svg, _) = histogram_svg(&bins, Some((num(&mean)?, "mean")));
    plots.push(write(plots_dir.join("posterior.svg"), &svg)?);

    let mut ale_names = Vec::new();
    let ale_dir = dir.join("ale");
    if ale_dir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&ale_dir)
            .map_err(CliError::io(&ale_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            let name = f.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let t = Table::read(&f)?;
            let svg = ale_svg(&name, &t.nums("edge")?, &t.nums("ale")?);
            plots.push(write(plots_dir.join(format!("ale_{name}.svg")), &svg)?);
            ale_names.push(name);
        }
    }

    let metric_cols = [
        "family", "auroc", "ci_low", "ci_high", "accuracy", "f1", "sensitivity", "specificity", "ppv", "npv", "threshold",
    ];
    let mut md = String::from("# Run summary\n\n");
    md.push_str("## Test split (eval_test.csv)\n\n");
    md.push_str(&markdown(&eval_test, &metric_cols)?);
    md.push_str("\n![ROC](plots/roc.svg)\n\n## Training split (eval_train.csv)\n\n");
    md.push_str(&markdown(&eval_train, &metric_cols)?);
    md.push_str("\n## Survivors vs non-survivors (stratum_tests.csv)\n\n");
    md.push_str(&markdown(
        &strata,
        &["feature", "survivor_mean", "survivor_sd", "nonsurvivor_mean", "nonsurvivor_sd", "p"],
    )?);
    if let Some(t) = &ablation {
        md.push_str("\n## Ablation (ablation.csv)\n\n");
        md.push_str(&markdown(t, &["feature", "auroc_without", "delta", "baseline_auroc"])?);
        md.push_str("\n![Ablation](plots/ablation.svg)\n");
    }
    md.push_str("\n## Posterior risk (posterior_summary.csv)\n\n");
    md.push_str(&markdown(&post, &["statistic", "value"])?);
    md.push_str("\n![Posterior](plots/posterior.svg)\n");
    if !ale_names.is_empty() {
        md.push_str("\n## Accumulated local effects (ale/*.csv)\n\n");
        for n in &ale_names {
            let _ = writeln!(md, "![{n}](plots/ale_{n}.svg)");
        }
    }
    let summary = write(dir.join("summary.md"), &md)?;
    Ok(ReportOutput { summary, plots })
}
