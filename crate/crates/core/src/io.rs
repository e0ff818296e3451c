//! File formats shared by every stage: canonical JSON, the centerline tree
//! document and provenance-stamped CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{Centerline, CoronaryTree, Side, Vec3};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits, trailing zeros trimmed.
/// The result parses back to the identical `f64`.
pub fn format_f64(x: f64) -> String {
    if !x.is_finite() {
        return "null".into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if x < 0.0 { "-" } else { "" };
    let all = mant.trim_start_matches('-').replace('.', "");
    let digits = all.trim_end_matches('0');
    if (-5..17).contains(&exp) {
        if exp >= 0 {
            let split = exp as usize + 1;
            let int_part = if digits.len() >= split {
                digits[..split].to_string()
            } else {
                format!("{digits}{}", "0".repeat(split - digits.len()))
            };
            let frac = if digits.len() > split { &digits[split..] } else { "0" };
            format!("{sign}{int_part}.{frac}")
        } else {
            format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
        }
    } else {
        let rest = if digits.len() > 1 { &digits[1..] } else { "0" };
        format!("{sign}{}.{rest}e{exp}", &digits[..1])
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_f64(n.as_f64().expect("f64 number")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
            } else if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (k, x) in items.iter().enumerate() {
                    out.push_str(&"  ".repeat(indent + 1));
                    write_value(out, x, indent + 1);
                    out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&"  ".repeat(indent + 1));
                let _ = write!(out, "{}: ", serde_json::to_string(key).expect("key serializes"));
                write_value(out, &map[*key], indent + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

/// Canonical JSON text: sorted keys, fixed float formatting, two-space
/// indentation, trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_canonical_json(value)?)?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile(path.into())),
        Err(e) => Err(e.into()),
    }
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)) as u64
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    parse_json(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterlineDoc {
    pub points: Vec<[f64; 3]>,
    pub radius: Vec<f64>,
}

/// On-disk centerline tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDoc {
    pub side: Side,
    pub ostium: [f64; 3],
    pub centerlines: Vec<CenterlineDoc>,
}

impl TreeDoc {
    pub fn from_tree(tree: &CoronaryTree) -> Self {
        Self {
            side: tree.side,
            ostium: tree.ostium.into(),
            centerlines: tree
                .centerlines
                .iter()
                .map(|c| CenterlineDoc {
                    points: c.points().iter().map(|p| (*p).into()).collect(),
                    radius: c.radius().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_tree(&self, tol: f64) -> Result<CoronaryTree> {
        let centerlines = self
            .centerlines
            .iter()
            .map(|c| Centerline::new(c.points.iter().map(|p| Vec3::from(*p)).collect(), c.radius.clone()))
            .collect::<Result<Vec<_>>>()?;
        CoronaryTree::with_tolerance(self.side, Vec3::from(self.ostium), centerlines, tol)
    }
}

pub fn read_tree(path: &Path, tol: f64) -> Result<CoronaryTree> {
    read_json::<TreeDoc>(path)?.to_tree(tol)
}

pub fn write_tree(path: &Path, tree: &CoronaryTree) -> Result<()> {
    write_json(path, &TreeDoc::from_tree(tree))
}

/// First line of every CSV written by the pipeline.
pub fn provenance_line(config_hash: &str) -> String {
    format!("# coronary-pcat {TOOL_VERSION} config {config_hash}\n")
}

/// Writes pre-formatted `rows` as CSV preceded by the provenance comment.
pub fn write_csv(path: &Path, config_hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut buf = provenance_line(config_hash).into_bytes();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

/// CSV reader that skips `#` comment lines.
pub fn csv_reader(path: &Path) -> Result<csv::Reader<std::io::Cursor<Vec<u8>>>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.into())),
        Err(e) => return Err(e.into()),
    };
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(std::io::Cursor::new(bytes)))
}

/// Formats an optional float for CSV output (empty when absent).
pub fn csv_float(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn float_formatting_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fixed = [0.1, 1.0, -2.5, 1e-7, 123456789.125, 1e300, -1e-300, 0.30000000000000004, 1e16, 99999.99999999999];
        for x in fixed.into_iter().chain((0..2000).map(|_| {
            let m: f64 = rng.random_range(-1.0..1.0);
            m * 10f64.powi(rng.random_range(-12..20))
        })) {
            let s = format_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let digits: String = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).collect();
            assert!(digits.trim_matches('0').len() <= 17, "{s}");
        }
        assert_eq!(format_f64(0.1), "0.10000000000000001");
        assert_eq!(format_f64(2.0), "2.0");
        assert_eq!(format_f64(-190.0), "-190.0");
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = serde_json::json!({"b": 1, "a": [1.5, 2.0], "c": {"z": null, "y": "s"}});
        let s = to_canonical_json(&v).unwrap();
        assert_eq!(s, "{\n  \"a\": [1.5, 2.0],\n  \"b\": 1,\n  \"c\": {\n    \"y\": \"s\",\n    \"z\": null\n  }\n}\n");
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0], 1.5);
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let text = "{\n  \"side\": \"left\",\n  oops\n}";
        let err = parse_json::<TreeDoc>(Path::new("t.json"), text).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, text.find("oops").unwrap() as u64),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn missing_file_is_named() {
        let err = read_json::<TreeDoc>(Path::new("/nonexistent/tree.json")).unwrap_err();
        assert!(matches!(err, Error::MissingFile(p) if p.ends_with("tree.json")));
    }
}
