//! The `LOGFB1` text format for fields and atomic file emission.
//!
//! ```text
//! LOGFB1 N=<int> mask_radius=<float> lambda_p=<float> lambda_m=<float> r=<float>
//! # converged=false            (optional comment lines start with '#')
//! <N lines of N values, row j holds x₂ = coord(j)>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::{build_grid, ScalarField};
use crate::error::{Error, Result};

/// Metadata carried by a field file next to the values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldHeader {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub r: f64,
    pub converged: bool,
}

pub fn format_field(field: &ScalarField, header: &FieldHeader) -> String {
    let g = field.grid();
    let n = g.n();
    let mut s = String::with_capacity(n * n * 24);
    let _ = writeln!(
        s,
        "LOGFB1 N={} mask_radius={:e} lambda_p={:e} lambda_m={:e} r={:e}",
        n,
        field.mask_radius(),
        header.lambda_plus,
        header.lambda_minus,
        header.r
    );
    if !header.converged {
        s.push_str("# converged=false\n");
    }
    for j in 0..n {
        for i in 0..n {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{:e}", field.at(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn parse_field(text: &str, path: &Path) -> Result<(ScalarField, FieldHeader)> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let head = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut tokens = head.split_whitespace();
    if tokens.next() != Some("LOGFB1") {
        return Err(bad("missing LOGFB1 magic".into()));
    }
    let mut n = None;
    let mut vals = [None; 4];
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed header token `{tok}`")))?;
        let slot = match k {
            "N" => {
                n = Some(v.parse::<usize>().map_err(|e| bad(format!("N: {e}")))?);
                continue;
            }
            "mask_radius" => 0,
            "lambda_p" => 1,
            "lambda_m" => 2,
            "r" => 3,
            other => return Err(bad(format!("unknown header key `{other}`"))),
        };
        vals[slot] = Some(v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")))?);
    }
    let n = n.ok_or_else(|| bad("header lacks N".into()))?;
    let names = ["mask_radius", "lambda_p", "lambda_m", "r"];
    let mut got = [0.0; 4];
    for (k, v) in vals.iter().enumerate() {
        got[k] = v.ok_or_else(|| bad(format!("header lacks {}", names[k])))?;
    }
    let grid = build_grid(n)?;
    let mut converged = true;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for line in lines {
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            if c.trim() == "converged=false" {
                converged = false;
            }
            continue;
        }
        let before = values.len();
        for tok in t.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| bad(format!("row {rows}: {e}")))?,
            );
        }
        if values.len() - before != n {
            return Err(bad(format!(
                "row {rows} has {} values, expected {n}",
                values.len() - before
            )));
        }
        rows += 1;
    }
    if rows != n {
        return Err(bad(format!("expected {n} rows, found {rows}")));
    }
    let field = ScalarField::new(grid, values, got[0])?;
    Ok((
        field,
        FieldHeader {
            lambda_plus: got[1],
            lambda_minus: got[2],
            r: got[3],
            converged,
        },
    ))
}

pub fn write_field(path: &Path, field: &ScalarField, header: &FieldHeader) -> Result<()> {
    write_atomic(path, format_field(field, header).as_bytes())
}

pub fn read_field(path: &Path) -> Result<(ScalarField, FieldHeader)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_field(&text, path)
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp: PathBuf = path.to_path_buf();
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
