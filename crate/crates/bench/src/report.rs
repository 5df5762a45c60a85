//! CSV and manifest output.
//!
//! Floats are written with 17 significant digits; `inf` marks infinite values
//! and `NA` marks fields that do not apply to a row.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::SnrDb;
use crate::runner::{Cell, RadiusRun, RunOutput};
use crate::BenchError;

pub const RESULTS_FILE: &str = "results.csv";
pub const DETERMINISTIC_FILE: &str = "deterministic.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const RADIUS_TRACE_FILE: &str = "radius_trace.csv";
pub const RADIUS_SUMMARY_FILE: &str = "radius_summary.csv";
pub const TRACE_DIR: &str = "traces";

pub const RESULT_COLUMNS: [&str; 17] = [
    "experiment",
    "algorithm",
    "seed",
    "n",
    "m",
    "s",
    "snr_db",
    "delta",
    "alpha",
    "eta",
    "radius_sq",
    "iterations",
    "time_ms",
    "snr_out_db",
    "rerror",
    "residual_norm",
    "termination",
];

/// 17 significant digits, with `inf`/`-inf`/`NaN` spelled out.
pub fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), num)
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    pub algorithm: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub snr_db: SnrDb,
    pub delta: f64,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub radius_sq: Option<f64>,
    pub iterations: usize,
    pub time_ms: f64,
    pub snr_out_db: Option<f64>,
    pub rerror: Option<f64>,
    pub residual_norm: f64,
    pub termination: String,
}

impl ReportRow {
    pub fn from_cell(experiment: &str, c: &Cell) -> Self {
        let o = &c.outcome;
        ReportRow {
            experiment: experiment.to_string(),
            algorithm: o.algo.name().to_string(),
            seed: c.seed,
            n: c.n,
            m: c.m,
            s: c.s,
            snr_db: c.snr,
            delta: c.delta,
            alpha: o.chosen.alpha,
            eta: o.chosen.eta,
            radius_sq: o.chosen.radius_sq,
            iterations: o.result.iterations,
            time_ms: o.elapsed_ms,
            snr_out_db: o.snr_out_db,
            rerror: o.rerror,
            residual_norm: o.residual,
            termination: o.result.termination.as_str().to_string(),
        }
    }

    pub fn record(&self, with_time: bool) -> Vec<String> {
        let mut r = vec![
            self.experiment.clone(),
            self.algorithm.clone(),
            self.seed.to_string(),
            self.n.to_string(),
            self.m.to_string(),
            self.s.to_string(),
            num(self.snr_db.0),
            num(self.delta),
            opt(self.alpha),
            opt(self.eta),
            opt(self.radius_sq),
            self.iterations.to_string(),
        ];
        if with_time {
            r.push(num(self.time_ms));
        }
        r.extend([
            opt(self.snr_out_db),
            opt(self.rerror),
            num(self.residual_norm),
            self.termination.clone(),
        ]);
        r
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows(out: &RunOutput) -> Vec<ReportRow> {
    let exp = out.config.raw.experiment.as_str();
    out.cells.iter().map(|c| ReportRow::from_cell(exp, c)).collect()
}

/// Per-(algorithm, sweep value) statistics over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub algorithm: String,
    pub axis: String,
    pub value: f64,
    pub seeds: usize,
    pub median_snr_out_db: f64,
    pub mean_snr_out_db: f64,
    pub median_rerror: f64,
    pub mean_rerror: f64,
    pub median_iterations: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        // inf + inf stays inf; avoid inf − inf style NaNs by averaging directly.
        0.5 * v[k / 2 - 1] + 0.5 * v[k / 2]
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn aggregate(out: &RunOutput) -> Vec<Aggregate> {
    let Some(sweep) = &out.sweep else {
        return Vec::new();
    };
    let mut groups: BTreeMap<(String, usize), Vec<&Cell>> = BTreeMap::new();
    for c in &out.cells {
        groups
            .entry((c.outcome.algo.name().to_string(), c.sweep_index))
            .or_default()
            .push(c);
    }
    groups
        .into_iter()
        .map(|((algorithm, idx), cells)| {
            let snr: Vec<f64> = cells.iter().filter_map(|c| c.outcome.snr_out_db).collect();
            let rerr: Vec<f64> = cells.iter().filter_map(|c| c.outcome.rerror).collect();
            let its: Vec<f64> = cells.iter().map(|c| c.outcome.result.iterations as f64).collect();
            Aggregate {
                algorithm,
                axis: sweep.axis.as_str().to_string(),
                value: sweep.values[idx],
                seeds: cells.len(),
                median_snr_out_db: median(&snr),
                mean_snr_out_db: mean(&snr),
                median_rerror: median(&rerr),
                mean_rerror: mean(&rerr),
                median_iterations: median(&its),
            }
        })
        .collect()
}

fn trace_file_name(out: &RunOutput, c: &Cell) -> String {
    let mut name = format!("{}_seed{}", c.outcome.algo.name(), c.seed);
    if let (Some(s), Some(v)) = (&out.sweep, c.sweep_value) {
        name.push_str(&format!("_{}_{}", s.axis.as_str(), SnrDb(v)));
    }
    name.push_str(".csv");
    name
}

fn manifest(out: &RunOutput, command: &str, extra: &[String]) -> String {
    let cfg = &out.config.raw;
    let mut m = String::new();
    m.push_str(&format!("tool = \"sparsereg-bench\"\nversion = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    m.push_str(&format!("command = \"{command}\"\n"));
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    m.push_str(&format!("seeds = [{}]\n", seeds.join(", ")));
    m.push_str(&format!("rows = {}\n", out.cells.len()));
    if let Some(s) = &out.sweep {
        let vals: Vec<String> = s.values.iter().map(|v| SnrDb(*v).to_string()).collect();
        m.push_str(&format!("sweep_axis = \"{}\"\nsweep_values = [{}]\n", s.axis.as_str(), vals.join(", ")));
    }
    for line in extra {
        m.push_str(line);
        m.push('\n');
    }
    if !out.notes.is_empty() {
        m.push_str("\n# notes\n");
        for n in &out.notes {
            m.push_str(&format!("# {n}\n"));
        }
    }
    m.push_str("\n# configuration\n");
    m.push_str(&cfg.to_toml_string());
    m
}

/// Paths written by [`write_run`].
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub results: PathBuf,
    pub deterministic: PathBuf,
    pub manifest: PathBuf,
    pub aggregate: Option<PathBuf>,
    pub traces: Vec<PathBuf>,
}

/// Writes `results.csv`, `deterministic.csv` (no timing column), the
/// manifest, the sweep aggregate and, when tracing, one CSV per cell.
pub fn write_run(out: &RunOutput, dir: &Path, command: &str) -> Result<Written, BenchError> {
    fs::create_dir_all(dir)?;
    let rows = rows(out);
    let mut written = Written {
        results: dir.join(RESULTS_FILE),
        deterministic: dir.join(DETERMINISTIC_FILE),
        manifest: dir.join(MANIFEST_FILE),
        ..Written::default()
    };
    write_csv(&written.results, &RESULT_COLUMNS, rows.iter().map(|r| r.record(true)))?;
    let det_cols: Vec<&str> = RESULT_COLUMNS.iter().copied().filter(|c| *c != "time_ms").collect();
    write_csv(&written.deterministic, &det_cols, rows.iter().map(|r| r.record(false)))?;

    let agg = aggregate(out);
    if !agg.is_empty() {
        let path = dir.join(AGGREGATE_FILE);
        write_csv(
            &path,
            &[
                "algorithm",
                "axis",
                "value",
                "seeds",
                "median_snr_out_db",
                "mean_snr_out_db",
                "median_rerror",
                "mean_rerror",
                "median_iterations",
            ],
            agg.iter().map(|a| {
                vec![
                    a.algorithm.clone(),
                    a.axis.clone(),
                    num(a.value),
                    a.seeds.to_string(),
                    num(a.median_snr_out_db),
                    num(a.mean_snr_out_db),
                    num(a.median_rerror),
                    num(a.mean_rerror),
                    num(a.median_iterations),
                ]
            }),
        )?;
        written.aggregate = Some(path);
    }

    if out.config.raw.trace {
        let tdir = dir.join(TRACE_DIR);
        fs::create_dir_all(&tdir)?;
        for c in &out.cells {
            let path = tdir.join(trace_file_name(out, c));
            write_csv(
                &path,
                &["k", "objective", "residual", "step_norm", "rerror", "elapsed_s"],
                c.outcome.result.trace.iter().map(|t| {
                    vec![
                        t.k.to_string(),
                        num(t.objective),
                        num(t.residual_norm),
                        num(t.step_norm),
                        opt(t.rerror),
                        num(t.elapsed_s),
                    ]
                }),
            )?;
            written.traces.push(path);
        }
    }
    let scales: Vec<String> = out
        .cells
        .iter()
        .filter(|c| c.outcome.chosen.scale != 1.0)
        .map(|c| format!("# pg_scale seed={} value={}", c.seed, num(c.outcome.chosen.scale)))
        .collect();
    fs::write(&written.manifest, manifest(out, command, &scales))?;
    Ok(written)
}

/// Writes `radius_trace.csv` (one line per outer step) and
/// `radius_summary.csv` (one line per seed). Residuals are reported in the
/// units of the original data.
pub fn write_radius(runs: &[RadiusRun], dir: &Path) -> Result<(PathBuf, PathBuf), BenchError> {
    fs::create_dir_all(dir)?;
    let trace = dir.join(RADIUS_TRACE_FILE);
    write_csv(
        &trace,
        &["seed", "j", "radius_sq", "residual", "rerror", "inner_iterations", "r_min", "r_max"],
        runs.iter().flat_map(|r| {
            r.steps.iter().map(move |s| {
                vec![
                    r.seed.to_string(),
                    s.j.to_string(),
                    num(s.radius_sq),
                    num(s.residual / r.scale),
                    opt(s.rerror),
                    s.inner_iterations.to_string(),
                    num(s.r_min),
                    num(s.r_max),
                ]
            })
        }),
    )?;
    let summary = dir.join(RADIUS_SUMMARY_FILE);
    write_csv(
        &summary,
        &[
            "seed",
            "radius_sq",
            "true_radius_sq",
            "ratio",
            "bracketed",
            "outer_steps",
            "residual",
            "delta",
        ],
        runs.iter().map(|r| {
            vec![
                r.seed.to_string(),
                num(r.radius_sq),
                opt(r.true_radius_sq),
                opt(r.true_radius_sq.map(|t| r.radius_sq / t)),
                r.bracketed.to_string(),
                r.steps.len().to_string(),
                num(r.residual),
                num(r.delta),
            ]
        }),
    )?;
    Ok((trace, summary))
}
