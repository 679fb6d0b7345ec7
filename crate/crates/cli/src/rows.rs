//! CSV row types. Floats are written with 17 significant digits so a
//! re-parsed file reproduces the values bit for bit.

use std::io::Write;
use std::path::Path;

use bvx_core::fmt_f64;

use crate::CliError;

pub const SWEEP_HEADER: [&str; 17] = [
    "task",
    "width",
    "n_S",
    "n_O",
    "mode",
    "e_bias",
    "e_bias_lo",
    "e_bias_hi",
    "e_variance",
    "e_variance_lo",
    "e_variance_hi",
    "e_noise",
    "var_sampling",
    "var_optimization",
    "r_classif",
    "r_reg",
    "config_digest",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub task: String,
    pub width: usize,
    pub n_s: usize,
    pub n_o: usize,
    pub mode: String,
    pub e_bias: f64,
    pub e_bias_lo: f64,
    pub e_bias_hi: f64,
    pub e_variance: f64,
    pub e_variance_lo: f64,
    pub e_variance_hi: f64,
    pub e_noise: f64,
    pub var_sampling: f64,
    pub var_optimization: f64,
    /// Present for classification tasks only.
    pub r_classif: Option<f64>,
    pub r_reg: Option<f64>,
    pub config_digest: String,
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl SweepRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.task.clone(),
            self.width.to_string(),
            self.n_s.to_string(),
            self.n_o.to_string(),
            self.mode.clone(),
            fmt_f64(self.e_bias),
            fmt_f64(self.e_bias_lo),
            fmt_f64(self.e_bias_hi),
            fmt_f64(self.e_variance),
            fmt_f64(self.e_variance_lo),
            fmt_f64(self.e_variance_hi),
            fmt_f64(self.e_noise),
            fmt_f64(self.var_sampling),
            fmt_f64(self.var_optimization),
            opt(self.r_classif),
            opt(self.r_reg),
            self.config_digest.clone(),
        ]
    }

    fn parse(record: &csv::StringRecord, path: &Path, line: u64) -> Result<Self, CliError> {
        let err = |message: String| CliError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != SWEEP_HEADER.len() {
            return Err(err(format!(
                "expected {} fields, found {}",
                SWEEP_HEADER.len(),
                record.len()
            )));
        }
        let int = |i: usize| {
            record[i]
                .parse::<usize>()
                .map_err(|_| err(format!("column {} is not an integer: {:?}", SWEEP_HEADER[i], &record[i])))
        };
        let float = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| err(format!("column {} is not a number: {:?}", SWEEP_HEADER[i], &record[i])))
        };
        let opt_float = |i: usize| {
            if record[i].is_empty() {
                Ok(None)
            } else {
                float(i).map(Some)
            }
        };
        Ok(SweepRow {
            task: record[0].to_string(),
            width: int(1)?,
            n_s: int(2)?,
            n_o: int(3)?,
            mode: record[4].to_string(),
            e_bias: float(5)?,
            e_bias_lo: float(6)?,
            e_bias_hi: float(7)?,
            e_variance: float(8)?,
            e_variance_lo: float(9)?,
            e_variance_hi: float(10)?,
            e_noise: float(11)?,
            var_sampling: float(12)?,
            var_optimization: float(13)?,
            r_classif: opt_float(14)?,
            r_reg: opt_float(15)?,
            config_digest: record[16].to_string(),
        })
    }
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a sweep CSV; errors name the offending line.
pub fn read_sweep(text: &str, path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(SWEEP_HEADER.iter().copied()) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(SweepRow::parse(&rec, path, line)?);
    }
    Ok(rows)
}

pub const ORACLE_HEADER: [&str; 12] = [
    "N",
    "m",
    "r",
    "sigma_eps",
    "point_id",
    "init_term",
    "sampling_term",
    "mc_estimate",
    "mc_stderr",
    "check",
    "rel_err",
    "pass",
];

/// One comparison in the linear-oracle validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub sigma_eps: f64,
    pub point_id: String,
    pub init_term: Option<f64>,
    pub sampling_term: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub check: String,
    pub rel_err: f64,
    pub pass: bool,
}

impl OracleRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.m.to_string(),
            self.r.to_string(),
            fmt_f64(self.sigma_eps),
            self.point_id.clone(),
            opt(self.init_term),
            opt(self.sampling_term),
            opt(self.mc_estimate),
            opt(self.mc_stderr),
            self.check.clone(),
            fmt_f64(self.rel_err),
            self.pass.to_string(),
        ]
    }
}

pub fn write_oracle<W: Write>(w: W, rows: &[OracleRow]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ORACLE_HEADER)?;
    for r in rows {
        out.write_record(r.fields())?;
    }
    out.flush()?;
    Ok(())
}
