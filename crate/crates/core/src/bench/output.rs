//! Files written for a batch: results, summary, plot series, charts,
//! diagnostics, step logs, worlds and belief snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::stats::SummaryRow;
use super::{Batch, TrialResult};

/// Paths of the files written by [`write_outputs`].
#[derive(Clone, Debug, Default)]
pub struct OutputFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub diagnostics: PathBuf,
    pub series: Vec<PathBuf>,
    pub charts: Vec<PathBuf>,
    pub logs: Vec<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Column order of `results.csv`.
pub const RESULT_COLUMNS: [&str; 12] = [
    "trial", "planner", "m", "n", "d", "alpha", "beta", "seed", "steps", "reward", "found", "wall_time",
];

const SUMMARY_COLUMNS: [&str; 12] = [
    "planner",
    "m",
    "n",
    "d",
    "alpha",
    "beta",
    "trials",
    "reward_mean",
    "reward_ci95",
    "found_mean",
    "found_ci95",
    "steps_mean",
];

const DIAGNOSTIC_COLUMNS: [&str; 13] = [
    "trial",
    "seed",
    "status",
    "decisions",
    "simulations",
    "fallbacks",
    "planning_time",
    "belief_time",
    "finds",
    "looks",
    "looks_before_first_find",
    "first_find_step",
    "deprived_at",
];

const SERIES_COLUMNS: [&str; 9] = ["planner", "m", "n", "d", "alpha", "beta", "mean", "lower", "upper"];

/// Writes a header row (even with no data rows) followed by the rows.
fn write_csv<T: serde::Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_results(path: &Path, results: &[TrialResult]) -> Result<()> {
    write_csv(path, &RESULT_COLUMNS, results)
}

pub fn read_results(path: &Path) -> Result<Vec<TrialResult>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<TrialResult>, _>>()?;
    Ok(rows)
}

/// Writes every output of `batch` under `dir`.
pub fn write_outputs(batch: &Batch, dir: &Path) -> Result<OutputFiles> {
    create_dir(dir)?;
    let mut files = OutputFiles {
        results: dir.join("results.csv"),
        summary: dir.join("summary.csv"),
        diagnostics: dir.join("diagnostics.csv"),
        ..Default::default()
    };
    let results = batch.results();
    write_results(&files.results, &results)?;
    let summary = batch.summary();
    write_csv(&files.summary, &SUMMARY_COLUMNS, &summary)?;
    let diags: Vec<_> = batch.trials.iter().map(|t| t.diagnostics.clone()).collect();
    write_csv(&files.diagnostics, &DIAGNOSTIC_COLUMNS, &diags)?;

    for (metric, pick) in [
        ("reward", (|r: &SummaryRow| (r.reward_mean, r.reward_ci95)) as fn(&SummaryRow) -> (f64, Option<f64>)),
        ("found", |r: &SummaryRow| (r.found_mean, r.found_ci95)),
    ] {
        let path = dir.join(format!("series_{metric}.csv"));
        write_series(&path, &summary, pick)?;
        files.series.push(path);
        let svg = dir.join(format!("{metric}.svg"));
        fs::write(&svg, bar_chart(metric, &summary, pick)).map_err(|e| Error::io(&svg, e))?;
        files.charts.push(svg);
    }

    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(&batch.config)?).map_err(|e| Error::io(&config_path, e))?;

    let logs = dir.join("logs");
    create_dir(&logs)?;
    for t in &batch.trials {
        let id = t.diagnostics.trial;
        let path = logs.join(format!("trial_{id:04}.jsonl"));
        let mut out = String::new();
        for step in &t.log {
            out.push_str(&serde_json::to_string(step)?);
            out.push('\n');
        }
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(&path, e))?;
        files.logs.push(path);
        if let Some(world) = &t.world {
            world.write(&logs.join(format!("world_{id:04}.json")))?;
        }
        if !t.beliefs.is_empty() {
            let path = logs.join(format!("beliefs_{id:04}.json"));
            fs::write(&path, serde_json::to_string(&t.beliefs)?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(files)
}

#[derive(serde::Serialize)]
struct SeriesRow<'a> {
    planner: &'a str,
    m: u32,
    n: usize,
    d: f64,
    alpha: f64,
    beta: f64,
    mean: f64,
    lower: Option<f64>,
    upper: Option<f64>,
}

fn write_series(path: &Path, summary: &[SummaryRow], pick: fn(&SummaryRow) -> (f64, Option<f64>)) -> Result<()> {
    let rows: Vec<SeriesRow> = summary
        .iter()
        .map(|r| {
            let (mean, ci) = pick(r);
            SeriesRow {
                planner: &r.planner,
                m: r.m,
                n: r.n,
                d: r.d,
                alpha: r.alpha,
                beta: r.beta,
                mean,
                lower: ci.map(|c| mean - c),
                upper: ci.map(|c| mean + c),
            }
        })
        .collect();
    write_csv(path, &SERIES_COLUMNS, &rows)
}

/// Bar chart of one metric per summary row with 95% interval whiskers.
pub fn bar_chart(metric: &str, summary: &[SummaryRow], pick: fn(&SummaryRow) -> (f64, Option<f64>)) -> String {
    let (w, h, pad) = (120.0 * summary.len().max(1) as f64 + 80.0, 320.0, 40.0);
    let values: Vec<(f64, f64)> = summary
        .iter()
        .map(|r| {
            let (m, ci) = pick(r);
            (m, ci.unwrap_or(0.0))
        })
        .collect();
    let hi = values.iter().map(|(m, c)| m + c).fold(0.0, f64::max);
    let lo = values.iter().map(|(m, c)| m - c).fold(0.0, f64::min);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y = |v: f64| pad + (hi - v) / span * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<text x="10" y="20">{metric}</text>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="black"/>"#,
        y(0.0),
        w - 20.0
    );
    for (i, (r, (mean, ci))) in summary.iter().zip(&values).enumerate() {
        let x = pad + 20.0 + 120.0 * i as f64;
        let (top, bottom) = (y(mean.max(0.0)), y(mean.min(0.0)));
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{top:.2}" width="80" height="{:.2}" fill="steelblue"/>"#,
            (bottom - top).max(0.5)
        );
        if *ci > 0.0 {
            let cx = x + 40.0;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                y(mean + ci),
                y(mean - ci)
            );
        }
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}">{} m={}</text>"#, h - 10.0, r.planner, r.m);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}">{mean:.1}</text>"#, top - 4.0);
    }
    s.push_str("</svg>\n");
    s
}
