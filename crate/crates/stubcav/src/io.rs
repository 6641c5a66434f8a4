//! CSV artifacts with a commented provenance header.
//!
//! Every file starts with `# stubcav <version>`, the configuration hash and
//! the full configuration as comment lines, then any artifact-specific
//! comments, then a header row and data. Readers skip all `#` lines.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use stubcav_core::resonance::{S21Trace, TraceMeta};

use crate::config::RunConfig;
use crate::AppError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table waiting to be written.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), ..Self::default() }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Serialises with the provenance header for `cfg`.
    pub fn render(&self, cfg: &RunConfig) -> Result<String, AppError> {
        let mut out = format!("# stubcav {VERSION}\n# config_sha256 = {}\n", cfg.hash());
        for line in cfg.emit().lines().filter(|l| !l.is_empty()) {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(|e| AppError::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| AppError::Io(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| AppError::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| AppError::Io(e.to_string()))?);
        Ok(out)
    }
}

/// Shortest round-tripping text for a number.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `text` to `path`, refusing to replace an existing file unless
/// `force` is set.
pub fn write_artifact(path: &Path, text: &str, force: bool) -> Result<(), AppError> {
    if path.exists() && !force {
        return Err(AppError::Io(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

/// A parsed artifact: comment lines (without `# `), header and rows.
#[derive(Debug, Clone)]
pub struct ReadTable {
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReadTable {
    pub fn column(&self, name: &str) -> Result<usize, AppError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AppError::Io(format!("missing column {name}")))
    }

    /// Value of a `# key = value` comment.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

pub fn read_table(path: &Path) -> Result<ReadTable, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    parse_table(&text).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))
}

pub fn parse_table(text: &str) -> Result<ReadTable, String> {
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(|l| l.trim().to_string())
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(str::to_string).collect()).map_err(|e| e.to_string()))
        .collect::<Result<Vec<Vec<String>>, String>>()?;
    Ok(ReadTable { comments, header, rows })
}

pub fn parse_f64(s: &str, what: &str) -> Result<f64, AppError> {
    s.trim().parse().map_err(|_| AppError::Io(format!("{what}: not a number: '{s}'")))
}

/// Reads a trace given as real/imaginary or dB/phase columns.
pub fn read_trace(path: &Path) -> Result<S21Trace, AppError> {
    let t = read_table(path)?;
    let ctx = |e: AppError| AppError::Io(format!("{}: {e}", path.display()));
    let fi = t.column("freq_hz").map_err(ctx)?;
    let polar = t.column("re_s21").is_err();
    let (a, b) = if polar {
        (t.column("mag_db").map_err(ctx)?, t.column("phase_rad").map_err(ctx)?)
    } else {
        (t.column("re_s21").map_err(ctx)?, t.column("im_s21").map_err(ctx)?)
    };
    let mut freqs = Vec::with_capacity(t.rows.len());
    let mut s21 = Vec::with_capacity(t.rows.len());
    for row in &t.rows {
        let get = |i: usize| row.get(i).map(String::as_str).unwrap_or("");
        freqs.push(parse_f64(get(fi), "freq_hz")?);
        let (x, y) = (parse_f64(get(a), "s21")?, parse_f64(get(b), "s21")?);
        s21.push(if polar { Complex64::from_polar(10f64.powf(x / 20.0), y) } else { Complex64::new(x, y) });
    }
    let meta_num = |k: &str| t.meta(k).and_then(|v| v.parse().ok());
    let meta = TraceMeta {
        power_dbm: meta_num("power_dbm").unwrap_or(0.0),
        temperature: meta_num("temperature_k").unwrap_or(0.0),
        timestamp: meta_num("time_s").unwrap_or(0.0),
    };
    S21Trace::new(freqs, s21, meta).map_err(|e| AppError::from_core(e).context(&path.display().to_string()))
}

pub fn trace_table(trace: &S21Trace) -> Table {
    let mut t = Table::new(&["freq_hz", "re_s21", "im_s21"]);
    t.comment(format!("power_dbm = {}", num(trace.meta.power_dbm)));
    t.comment(format!("temperature_k = {}", num(trace.meta.temperature)));
    t.comment(format!("time_s = {}", num(trace.meta.timestamp)));
    for (f, s) in trace.freqs().iter().zip(trace.s21()) {
        t.push(vec![num(*f), num(s.re), num(s.im)]);
    }
    t
}

/// Sorted `*.csv` files in `dir`.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, AppError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    out.sort();
    Ok(out)
}
