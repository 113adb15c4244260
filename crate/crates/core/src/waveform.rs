//! Waveform storage and the ASCII output file format.
//!
//! Output files are strictly columnar: a header comment naming the
//! columns, an optional metadata comment, then rows of space-separated
//! scientific-notation values with 10 significant digits. Everything is
//! plain text so results load directly into gnuplot, numpy or a
//! spreadsheet.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Simulated results: a strictly increasing time grid plus named columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaveformSet {
    pub time: Vec<f64>,
    pub names: Vec<String>,
    /// One series per name, aligned with `time`.
    pub columns: Vec<Vec<f64>>,
    /// Analysis kind that produced the data (`startup`/`trns`/`ssw`).
    pub kind: Option<String>,
    /// Period metadata for windowed post-processing.
    pub period: Option<f64>,
}

impl WaveformSet {
    pub fn new(names: Vec<String>) -> Self {
        let columns = names.iter().map(|_| Vec::new()).collect();
        WaveformSet { time: Vec::new(), names, columns, kind: None, period: None }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push_row(&mut self, t: f64, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns.len());
        if let Some(&last) = self.time.last() {
            debug_assert!(t > last, "time grid must be strictly increasing");
        }
        self.time.push(t);
        for (col, &v) in self.columns.iter_mut().zip(values) {
            col.push(v);
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[idx])
    }

    pub fn t_start(&self) -> f64 {
        self.time.first().copied().unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.time.last().copied().unwrap_or(0.0)
    }

    /// Render to the ASCII format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("# time");
        for name in &self.names {
            out.push(' ');
            out.push_str(name);
        }
        out.push('\n');
        if self.kind.is_some() || self.period.is_some() {
            out.push_str("# meta");
            if let Some(kind) = &self.kind {
                let _ = write!(out, " kind={kind}");
            }
            if let Some(period) = self.period {
                let _ = write!(out, " period={period:.9e}");
            }
            out.push('\n');
        }
        for (i, &t) in self.time.iter().enumerate() {
            let _ = write!(out, "{t:.9e}");
            for col in &self.columns {
                let _ = write!(out, " {:.9e}", col[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let io_err = |source: std::io::Error| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension(format!(
            "{}.tmp",
            path.extension().and_then(|e| e.to_str()).unwrap_or("dat")
        ));
        std::fs::write(&tmp, self.render()).map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }

    /// Load a file written by [`WaveformSet::write_file`].
    pub fn read_file(path: &Path) -> Result<WaveformSet> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Postproc { message } => Error::Postproc {
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<WaveformSet> {
        let perr = |message: String| Error::Postproc { message };
        let mut names: Option<Vec<String>> = None;
        let mut kind = None;
        let mut period = None;
        let mut time = Vec::new();
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let mut toks = comment.split_whitespace();
                match toks.next() {
                    Some("time") if names.is_none() => {
                        names = Some(toks.map(|s| s.to_string()).collect());
                    }
                    Some("meta") => {
                        for tok in toks {
                            if let Some((k, v)) = tok.split_once('=') {
                                match k {
                                    "kind" => kind = Some(v.to_string()),
                                    "period" => period = v.parse::<f64>().ok(),
                                    _ => {}
                                }
                            }
                        }
                    }
                    _ => {}
                }
                continue;
            }
            let names = names
                .as_ref()
                .ok_or_else(|| perr("data before `# time ...` header".into()))?;
            let mut values = line.split_whitespace().map(|s| s.parse::<f64>());
            let t = values
                .next()
                .and_then(|v| v.ok())
                .ok_or_else(|| perr(format!("line {}: bad time value", lineno + 1)))?;
            if columns.is_empty() {
                columns = names.iter().map(|_| Vec::new()).collect();
            }
            let mut count = 0;
            for (i, v) in values.enumerate() {
                let v = v.map_err(|_| perr(format!("line {}: bad value", lineno + 1)))?;
                if i >= columns.len() {
                    return Err(perr(format!("line {}: too many columns", lineno + 1)));
                }
                columns[i].push(v);
                count += 1;
            }
            if count != columns.len() {
                return Err(perr(format!(
                    "line {}: expected {} data columns, found {count}",
                    lineno + 1,
                    columns.len()
                )));
            }
            time.push(t);
        }
        let names = names.ok_or_else(|| perr("missing `# time ...` header".into()))?;
        if columns.is_empty() {
            columns = names.iter().map(|_| Vec::new()).collect();
        }
        Ok(WaveformSet { time, names, columns, kind, period })
    }
}
