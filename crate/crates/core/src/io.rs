//! Grid function files: a JSON header with the grid metadata next to a CSV
//! of node coordinates and values. Values use either shortest round-trip
//! decimal or C99 hexadecimal floats; both read back bit-exact.
//!
//! All writes go through a temporary file in the target directory followed
//! by a rename.

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const GRID_FORMAT: &str = "carnot-ma-grid";
pub const GRID_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloatEncoding {
    Decimal,
    Hex,
}

impl FloatEncoding {
    pub fn encode(self, v: f64) -> String {
        match self {
            FloatEncoding::Decimal => format!("{v:e}"),
            FloatEncoding::Hex => hex_float(v),
        }
    }
}

/// C99 `%a` rendering of a finite double, e.g. `0x1.8p+1` for 3.
pub fn hex_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let digits = format!("{mantissa:013x}");
    let digits = digits.trim_end_matches('0');
    let exp_sign = if exp < 0 { '-' } else { '+' };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{exp_sign}{}", exp.abs())
    }
}

/// Parses a C99 hexadecimal float such as `-0x1.fp-3`.
pub fn parse_hex_float(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let body = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X"))?;
    let (mant, exp) = body.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    // exact accumulation: at most 64 significant bits, then one rounding
    let mut acc: u64 = 0;
    let mut shift: i64 = 0;
    let mut sticky = false;
    let mut started = false;
    for (k, c) in int_part.chars().chain(frac_part.chars()).enumerate() {
        let d = c.to_digit(16)? as u64;
        let fractional = k >= int_part.len();
        if !started && d == 0 {
            if fractional {
                shift -= 4;
            }
            continue;
        }
        started = true;
        if acc >> 60 == 0 {
            acc = (acc << 4) | d;
            if fractional {
                shift -= 4;
            }
        } else {
            sticky |= d != 0;
            if !fractional {
                shift += 4;
            }
        }
    }
    if acc == 0 {
        return Some(if neg { -0.0 } else { 0.0 });
    }
    if sticky {
        acc |= 1;
    }
    let v = compose(acc, shift + exp)?;
    Some(if neg { -v } else { v })
}

/// `acc * 2^e` rounded to nearest even.
fn compose(acc: u64, e: i64) -> Option<f64> {
    let top = 63 - acc.leading_zeros() as i64;
    let unbiased = top + e;
    if unbiased > 1023 {
        return None;
    }
    // number of mantissa bits kept below the leading one
    let keep = if unbiased >= -1022 { 52 } else { 52 - (-1022 - unbiased) };
    if keep < -1 {
        return Some(0.0);
    }
    let drop = top - keep;
    if drop > 63 {
        return Some(if acc > 1u64 << 63 { f64::from_bits(1) } else { 0.0 });
    }
    let mut m = if drop > 0 {
        let dropped = acc & ((1u64 << drop) - 1);
        let half = 1u64 << (drop - 1);
        let mut m = acc >> drop;
        if dropped > half || (dropped == half && m & 1 == 1) {
            m += 1;
        }
        m
    } else {
        acc << (-drop)
    };
    let mut scale = e + drop;
    if m >> 53 != 0 {
        m >>= 1;
        scale += 1;
    }
    // m < 2^53 and the product is representable, so both steps are exact
    Some(m as f64 * pow2(scale))
}

fn pow2(e: i64) -> f64 {
    // split to stay clear of intermediate overflow or underflow
    let mut v = 1.0f64;
    let mut e = e;
    while e > 1000 {
        v *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        v *= 2f64.powi(-1000);
        e += 1000;
    }
    v * 2f64.powi(e as i32)
}

pub fn parse_float(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.contains("0x") || t.contains("0X") {
        parse_hex_float(t)
    } else {
        t.parse().ok()
    }
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub format: String,
    pub version: u32,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: Vec<usize>,
    pub encoding: FloatEncoding,
    /// CSV file name, relative to the header.
    pub data: String,
    pub columns: Vec<String>,
    pub nodes: usize,
}

/// Writes `<stem>.json` and `<stem>.csv`, returning both paths.
pub fn write_grid(u: &GridFunction, stem: &Path, encoding: FloatEncoding) -> Result<(PathBuf, PathBuf)> {
    let grid = u.grid();
    let n = grid.dim();
    let json_path = stem.with_extension("json");
    let csv_path = stem.with_extension("csv");
    let mut columns: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    columns.push("value".into());
    let header = GridHeader {
        format: GRID_FORMAT.into(),
        version: GRID_FORMAT_VERSION,
        lower: grid.domain().lower.clone(),
        upper: grid.domain().upper.clone(),
        resolution: grid.resolution().to_vec(),
        encoding,
        data: csv_path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        columns: columns.clone(),
        nodes: grid.len(),
    };
    let mut csv = columns.join(",");
    csv.push('\n');
    let mut x = vec![0.0; n];
    for (i, &v) in u.values().iter().enumerate() {
        grid.coords_into(i, &mut x);
        for c in &x {
            csv.push_str(&encoding.encode(*c));
            csv.push(',');
        }
        csv.push_str(&encoding.encode(v));
        csv.push('\n');
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    write_json(&json_path, &header)?;
    Ok((json_path, csv_path))
}

/// Reads a grid function from its JSON header path.
pub fn read_grid(json_path: &Path) -> Result<GridFunction> {
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let header: GridHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", json_path.display())))?;
    if header.format != GRID_FORMAT || header.version != GRID_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format {} v{}",
            json_path.display(),
            header.format,
            header.version
        )));
    }
    let grid = Grid::new(BoxDomain::new(header.lower, header.upper)?, header.resolution)?;
    let csv_path = json_path.with_file_name(&header.data);
    let data = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut lines = data.lines();
    lines.next();
    let n = grid.dim();
    let mut values = Vec::with_capacity(grid.len());
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("");
        let v = parse_float(field).ok_or_else(|| {
            Error::Format(format!("{}:{}: bad value {field:?}", csv_path.display(), k + 2))
        })?;
        if line.split(',').count() != n + 1 {
            return Err(Error::Format(format!(
                "{}:{}: expected {} columns",
                csv_path.display(),
                k + 2,
                n + 1
            )));
        }
        values.push(v);
    }
    GridFunction::new(grid, values)
}
