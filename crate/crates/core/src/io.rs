//! Headerless CSV matrices, dataset manifests and reproducible JSON output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::data::{Dataset, Truth};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Reads a rectangular, headerless, comma-separated numeric matrix.
pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<Mat> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&bytes, path)
}

fn parse_matrix_csv(bytes: &[u8], path: &Path) -> Result<Mat> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        let width = *cols.get_or_insert(record.len());
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("ragged row: {} fields, expected {width}", record.len()),
            });
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("non-numeric field {field:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    match cols {
        Some(c) if rows > 0 && c > 0 => Ok(Mat::from_row_slice(rows, c, &values)),
        _ => Err(Error::EmptyFile { path: path.to_path_buf() }),
    }
}

/// Formats a matrix as headerless CSV with 17 significant digits per entry.
pub fn matrix_to_csv(m: &Mat) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn save_matrix_csv(path: impl AsRef<Path>, m: &Mat) -> Result<()> {
    write_atomic(path, matrix_to_csv(m).as_bytes())
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// JSON description of a dataset on disk. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub x: PathBuf,
    pub y: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_star: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((manifest, base))
    }

    /// Loads and validates every referenced matrix.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let opt = |p: &Option<PathBuf>| -> Result<Option<Mat>> {
            p.as_deref().map(|p| load_matrix_csv(resolve(p))).transpose()
        };
        let x = load_matrix_csv(resolve(&self.x))?;
        let y = load_matrix_csv(resolve(&self.y))?;
        let truth = Truth { e: opt(&self.e)?, b_star: opt(&self.b_star)?, s: opt(&self.s)? };
        Dataset::new(x, y, opt(&self.sigma)?, truth)
    }
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let (manifest, base) = DatasetManifest::read(manifest_path)?;
    manifest.load(&base)
}

/// Nested row arrays.
pub fn mat_to_json(m: &Mat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json_f64(m[(i, j)])).collect()))
            .collect(),
    )
}

pub fn mat_from_json(v: &Value) -> Option<Mat> {
    let rows = v.as_array()?;
    let cols = rows.first()?.as_array()?.len();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        let r = r.as_array()?;
        if r.len() != cols {
            return None;
        }
        for x in r {
            data.push(x.as_f64()?);
        }
    }
    Some(Mat::from_row_slice(rows.len(), cols, &data))
}

/// Finite floats become numbers, non-finite ones become `null`.
pub fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

/// Pretty JSON with 17-significant-digit floats. Object keys come out sorted because
/// `serde_json::Map` is ordered.
pub fn to_json_string(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits::default());
    serde::Serialize::serialize(value, &mut ser).expect("serializing a Value cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn write_json(path: impl AsRef<Path>, value: &Value) -> Result<()> {
    write_atomic(path, to_json_string(value).as_bytes())
}

#[derive(Default)]
struct FixedDigits {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Mat> {
        parse_matrix_csv(s.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn reads_small_matrix() {
        let m = parse("1,2\n3,4\n").unwrap();
        assert_eq!(m, Mat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(parse("0\n").unwrap(), Mat::zeros(1, 1));
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse("1,2\n3,4\n5\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_empty() {
        assert!(matches!(parse("1,a\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse(""), Err(Error::EmptyFile { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mat::from_fn(5, 3, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin() * 1e3);
        let path = dir.path().join("m.csv");
        save_matrix_csv(&path, &m).unwrap();
        let back = load_matrix_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        // no temp files left behind
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn json_keys_sorted_and_floats_fixed() {
        let v = serde_json::json!({"b": 1.0, "a": [0.1]});
        let s = to_json_string(&v);
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.contains("1.0000000000000000e0"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"][0].as_f64(), Some(0.1));
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in 1usize..6, cols in 1usize..6, seed in prop::collection::vec(-1e6f64..1e6, 36)) {
            let m = Mat::from_fn(rows, cols, |i, j| seed[i * 6 + j]);
            let back = parse(&matrix_to_csv(&m)).unwrap();
            prop_assert_eq!(back.shape(), m.shape());
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }
}
