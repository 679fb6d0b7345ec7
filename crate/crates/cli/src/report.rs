//! `bvx report`: merges every `sweep.csv` under a directory and prints
//! width trends.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::rows::{read_sweep, SweepRow};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    /// Lower at the largest width, with disjoint intervals.
    Decreases,
    /// Lower at the largest width, but the intervals overlap.
    LowerOverlapping,
    NotLower,
}

impl Trend {
    fn classify(small: &SweepRow, large: &SweepRow, pick: fn(&SweepRow) -> (f64, f64, f64)) -> Self {
        let (v0, lo0, hi0) = pick(small);
        let (v1, lo1, hi1) = pick(large);
        if v1 >= v0 {
            Trend::NotLower
        } else if hi1 < lo0 || hi0 < lo1 {
            Trend::Decreases
        } else {
            Trend::LowerOverlapping
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Trend::Decreases => "decreases with width (CIs disjoint)",
            Trend::LowerOverlapping => "lower at largest width (CIs overlap)",
            Trend::NotLower => "does not decrease with width",
        }
    }
}

/// Verdicts for one task, comparing its smallest and largest width.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub task: String,
    pub smallest: usize,
    pub largest: usize,
    pub variance_ci_overlap: bool,
    pub bias_ci_overlap: bool,
    pub variance: Trend,
    pub bias: Trend,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sources: Vec<PathBuf>,
    /// All rows, sorted by width (stable in source order).
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<Verdict>,
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

fn find_sweeps(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_sweeps(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "sweep.csv") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn build_report(dir: &Path) -> Result<Report, CliError> {
    let mut sources = Vec::new();
    find_sweeps(dir, &mut sources)?;
    let mut rows = Vec::new();
    for path in &sources {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        rows.extend(read_sweep(&text, path)?);
    }
    rows.sort_by_key(|r| r.width);

    let mut tasks: Vec<&str> = rows.iter().map(|r| r.task.as_str()).collect();
    tasks.sort_unstable();
    tasks.dedup();
    let verdicts = tasks
        .into_iter()
        .filter_map(|task| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.task == task).collect();
            let (small, large) = (*mine.first()?, *mine.last()?);
            if small.width == large.width {
                return None;
            }
            Some(Verdict {
                task: task.to_string(),
                smallest: small.width,
                largest: large.width,
                variance_ci_overlap: overlap(
                    (small.e_variance_lo, small.e_variance_hi),
                    (large.e_variance_lo, large.e_variance_hi),
                ),
                bias_ci_overlap: overlap((small.e_bias_lo, small.e_bias_hi), (large.e_bias_lo, large.e_bias_hi)),
                variance: Trend::classify(small, large, |r| (r.e_variance, r.e_variance_lo, r.e_variance_hi)),
                bias: Trend::classify(small, large, |r| (r.e_bias, r.e_bias_lo, r.e_bias_hi)),
            })
        })
        .collect();
    Ok(Report {
        sources,
        rows,
        verdicts,
    })
}

impl Report {
    pub fn render(&self) -> String {
        if self.rows.is_empty() {
            return "no results\n".into();
        }
        let mut s = String::new();
        let _ = writeln!(s, "{} sweep file(s), {} row(s)", self.sources.len(), self.rows.len());
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "task", "width", "e_bias", "e_variance", "e_noise", "var_samp", "var_opt"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<20} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                r.task, r.width, r.e_bias, r.e_variance, r.e_noise, r.var_sampling, r.var_optimization
            );
        }
        for v in &self.verdicts {
            let _ = writeln!(s, "{} (width {} vs {}):", v.task, v.smallest, v.largest);
            let _ = writeln!(s, "  variance {}", v.variance.describe());
            let _ = writeln!(s, "  bias {}", v.bias.describe());
        }
        s
    }
}
