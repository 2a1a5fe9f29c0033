//! CSV files written by experiments and the reader used to re-check them.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::closed_loop::ClosedLoopTrace;

/// Seventeen significant digits, enough to round-trip any `f64`.
pub(crate) fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn to_csv<F>(header: &[String], fill: F) -> io::Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

/// One row per step: `index, time, horizon, reused, solves, stage_cost,
/// value, alpha, x0.., u0..`. `time` is `i·T`, or `i` for purely discrete
/// models; `alpha` is empty where no estimate was made.
pub fn trace_csv(trace: &ClosedLoopTrace) -> io::Result<Vec<u8>> {
    let nx = trace.initial_state.len();
    let nu = trace.records.first().map_or(0, |r| r.control.len());
    let mut header: Vec<String> = [
        "index",
        "time",
        "horizon",
        "reused",
        "solves",
        "stage_cost",
        "value",
        "alpha",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..nx).map(|i| format!("x{i}")));
    header.extend((0..nu).map(|i| format!("u{i}")));
    let dt = trace.sampling_period.unwrap_or(1.0);
    to_csv(&header, |w| {
        for r in &trace.records {
            let mut row = vec![
                r.index.to_string(),
                float(r.index as f64 * dt),
                r.horizon.to_string(),
                (r.reused as u8).to_string(),
                r.solves.to_string(),
                float(r.stage_cost),
                float(r.value),
                r.alpha.map(float).unwrap_or_default(),
            ];
            row.extend(r.state.iter().copied().map(float));
            row.extend(r.control.iter().copied().map(float));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// The columns of a trace file needed to recompute summary figures.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub horizons: Vec<usize>,
    pub stage_costs: Vec<f64>,
    pub solves: Vec<usize>,
    pub reused: Vec<bool>,
    pub alphas: Vec<Option<f64>>,
}

impl TraceTable {
    pub fn accumulated_cost(&self) -> f64 {
        self.stage_costs.iter().sum()
    }

    pub fn n_star(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0)
    }

    pub fn total_solves(&self) -> usize {
        self.solves.iter().sum()
    }
}

pub fn read_trace_csv(path: &Path) -> io::Result<TraceTable> {
    let invalid = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut r = csv::Reader::from_path(path).map_err(|e| invalid(e.to_string()))?;
    let headers = r.headers().map_err(|e| invalid(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("missing column '{name}'")))
    };
    let (h, c, s, u, a) = (
        col("horizon")?,
        col("stage_cost")?,
        col("solves")?,
        col("reused")?,
        col("alpha")?,
    );
    let mut t = TraceTable {
        horizons: Vec::new(),
        stage_costs: Vec::new(),
        solves: Vec::new(),
        reused: Vec::new(),
        alphas: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|e| invalid(format!("{e}: '{}'", field(i))))
        };
        let int = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|e| invalid(format!("{e}: '{}'", field(i))))
        };
        t.horizons.push(int(h)?);
        t.stage_costs.push(num(c)?);
        t.solves.push(int(s)?);
        t.reused.push(int(u)? != 0);
        t.alphas.push(if field(a).is_empty() {
            None
        } else {
            Some(num(a)?)
        });
    }
    Ok(t)
}

/// Summary line of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub alpha_bar: Option<f64>,
    pub horizon: Option<usize>,
    pub accumulated_cost: f64,
    pub steps: usize,
    pub n_star: usize,
    pub total_solves: usize,
    pub wall_time: f64,
    pub terminated: String,
    pub trace_file: String,
}

pub fn summary_csv(rows: &[SummaryRow]) -> io::Result<Vec<u8>> {
    let header: Vec<String> = [
        "label",
        "alpha_bar",
        "horizon",
        "accumulated_cost",
        "steps",
        "n_star",
        "total_solves",
        "wall_time_s",
        "terminated",
        "trace_file",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    to_csv(&header, |w| {
        for r in rows {
            w.write_record([
                r.label.clone(),
                r.alpha_bar.map(float).unwrap_or_default(),
                r.horizon.map(|n| n.to_string()).unwrap_or_default(),
                float(r.accumulated_cost),
                r.steps.to_string(),
                r.n_star.to_string(),
                r.total_solves.to_string(),
                float(r.wall_time),
                r.terminated.clone(),
                r.trace_file.clone(),
            ])?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// `(alpha_bar, accumulated_cost)`, one row per adaptive run.
    AlphaVsCost,
    /// `(run, alpha_bar, time, horizon)`, one row per step; each horizon
    /// holds over `[i·T, (i+1)·T)`.
    HorizonVsTime,
}

impl FigureKind {
    pub fn file_name(&self) -> &'static str {
        match self {
            FigureKind::AlphaVsCost => "figure_alpha_vs_cost.csv",
            FigureKind::HorizonVsTime => "figure_horizon_vs_time.csv",
        }
    }
}

/// Plot-ready data for a set of labelled traces.
pub fn figure_csv(traces: &[(&str, &ClosedLoopTrace)], kind: FigureKind) -> io::Result<Vec<u8>> {
    match kind {
        FigureKind::AlphaVsCost => {
            let header = vec!["alpha_bar".to_string(), "accumulated_cost".to_string()];
            to_csv(&header, |w| {
                for (_, t) in traces {
                    if let Some(ab) = t.alpha_bar {
                        w.write_record([float(ab), float(t.accumulated_cost)])?;
                    }
                }
                Ok(())
            })
        }
        FigureKind::HorizonVsTime => {
            let header: Vec<String> = ["run", "alpha_bar", "time", "horizon"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            to_csv(&header, |w| {
                for (label, t) in traces {
                    let dt = t.sampling_period.unwrap_or(1.0);
                    for r in &t.records {
                        w.write_record([
                            label.to_string(),
                            t.alpha_bar.map(float).unwrap_or_default(),
                            float(r.index as f64 * dt),
                            r.horizon.to_string(),
                        ])?;
                    }
                }
                Ok(())
            })
        }
    }
}

/// Writes the figure file for `kind` into `dir`.
pub fn emit_figure_data(
    traces: &[(&str, &ClosedLoopTrace)],
    kind: FigureKind,
    dir: &Path,
) -> io::Result<PathBuf> {
    if traces.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no traces"));
    }
    let path = dir.join(kind.file_name());
    write_atomic(&path, &figure_csv(traces, kind)?)?;
    Ok(path)
}
