//! File formats: LIBSVM and CSV dataset loading, the binary `SQSK` sketch
//! cache, and the JSON report envelope shared by every command.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::{CsrMatrix, DataMatrix, Dataset};
use crate::error::{Error, Result};
use crate::sketch::{Sketch, SketchMeta};
use crate::{Mat, Vec64};

/// Version written into new sketch files.
pub const SKETCH_FORMAT_VERSION: u32 = 1;
const SKETCH_MAGIC: &[u8; 4] = b"SQSK";

/// Current schema of all JSON reports.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// LIBSVM
// ---------------------------------------------------------------------------

/// Parse LIBSVM text (`label idx:val ...`, 1-based indices, one observation
/// per line). Observations become columns of `X`; `n` is the largest feature
/// index seen. `#` starts a comment; blank lines are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut n_features = 0usize;
    let mut observation = 0usize;

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line has a first token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("label `{label_tok}` is not a number"),
        })?;
        if !label.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "label is not finite".into(),
            });
        }
        let mut last_index: Option<usize> = None;
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("token `{tok}` is missing the `:` separator"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("feature index `{idx_str}` is not a positive integer"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based; found 0".into(),
                });
            }
            let value: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("feature value `{val_str}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("feature value `{val_str}` is not finite"),
                });
            }
            match last_index {
                Some(prev) if idx == prev => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("duplicate feature index {idx}"),
                    });
                }
                Some(prev) if idx < prev => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!(
                            "feature indices must be strictly increasing ({idx} after {prev})"
                        ),
                    });
                }
                _ => {}
            }
            last_index = Some(idx);
            n_features = n_features.max(idx);
            triplets.push((idx - 1, observation, value));
        }
        labels.push(label);
        observation += 1;
    }
    if observation == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "file contains no observations".into(),
        });
    }
    let x = CsrMatrix::from_triplets(n_features, observation, triplets)?;
    Dataset::new(DataMatrix::Sparse(x), Vec64::from_vec(labels))
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file))
}

/// Write a dataset in LIBSVM format (zeros omitted, 1-based indices).
/// Rust's shortest-round-trip float printing keeps write→load lossless.
pub fn write_libsvm<W: Write>(mut out: W, data: &Dataset) -> Result<()> {
    let dense = data.x.to_dense();
    for j in 0..dense.ncols() {
        write!(out, "{}", data.y[j])?;
        for i in 0..dense.nrows() {
            let v = dense[(i, j)];
            if v != 0.0 {
                write!(out, " {}:{}", i + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Parse CSV: first row is the header, one observation per row, the last
/// column is the response.
pub fn parse_csv<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header.map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one feature column and a response column".into(),
        });
    }
    let n = names.len() - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    for (line_idx, line) in lines {
        let line_no = line_idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(n);
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("`{}` is not a number", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "non-finite value".into(),
                });
            }
            if col < n {
                row.push(v);
            } else {
                y.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "file contains no observations".into(),
        });
    }
    let m = rows.len();
    let x = Mat::from_fn(n, m, |i, j| rows[j][i]);
    let mut ds = Dataset::new(DataMatrix::Dense(x), Vec64::from_vec(y))?;
    ds.feature_names = Some(names[..n].to_vec());
    Ok(ds)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_csv(BufReader::new(file))
}

// ---------------------------------------------------------------------------
// SQSK binary sketch cache
// ---------------------------------------------------------------------------

/// Serialize a sketch. Views are materialized: the surviving rows are what
/// gets written. Round-trips bit-identically.
pub fn write_sketch<W: Write>(mut out: W, sk: &Sketch) -> Result<()> {
    let p = sk.p_dense();
    let q = sk.q_dense();
    out.write_all(SKETCH_MAGIC)?;
    out.write_all(&SKETCH_FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(p.nrows() as u64).to_le_bytes())?;
    out.write_all(&(q.nrows() as u64).to_le_bytes())?;
    out.write_all(&(sk.rank() as u64).to_le_bytes())?;
    for i in 0..p.nrows() {
        for l in 0..p.ncols() {
            out.write_all(&p[(i, l)].to_le_bytes())?;
        }
    }
    for i in 0..q.nrows() {
        for l in 0..q.ncols() {
            out.write_all(&q[(i, l)].to_le_bytes())?;
        }
    }
    let meta = sk.meta();
    out.write_all(&(meta.power_iters as u64).to_le_bytes())?;
    out.write_all(&meta.seed.to_le_bytes())?;
    match meta.spectral_error {
        Some(err) => {
            out.write_all(&[1u8])?;
            out.write_all(&err.to_le_bytes())?;
        }
        None => out.write_all(&[0u8])?,
    }
    Ok(())
}

pub fn save_sketch(sk: &Sketch, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    write_sketch(BufWriter::new(file), sk)
}

fn read_exact_or(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader.read_exact(buf).map_err(|_| {
        Error::BadSketchFile(format!("truncated file while reading {what}"))
    })
}

pub fn read_sketch<R: Read>(mut reader: R) -> Result<Sketch> {
    let mut magic = [0u8; 4];
    read_exact_or(&mut reader, &mut magic, "magic")?;
    if &magic != SKETCH_MAGIC {
        return Err(Error::BadSketchFile("bad magic (expected SQSK)".into()));
    }
    let mut b4 = [0u8; 4];
    read_exact_or(&mut reader, &mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != SKETCH_FORMAT_VERSION {
        return Err(Error::BadSketchFile(format!(
            "unsupported version {version} (this build reads {SKETCH_FORMAT_VERSION})"
        )));
    }
    let mut b8 = [0u8; 8];
    let mut read_u64 = |reader: &mut R, what: &str| -> Result<u64> {
        read_exact_or(reader, &mut b8, what)?;
        Ok(u64::from_le_bytes(b8))
    };
    let n = read_u64(&mut reader, "feature count")?;
    let m = read_u64(&mut reader, "observation count")?;
    let k = read_u64(&mut reader, "rank")?;
    let to_usize = |v: u64, what: &str| -> Result<usize> {
        usize::try_from(v).map_err(|_| Error::BadSketchFile(format!("{what} overflows")))
    };
    let (n, m, k) = (
        to_usize(n, "feature count")?,
        to_usize(m, "observation count")?,
        to_usize(k, "rank")?,
    );
    for (count, what) in [(n, "P"), (m, "Q")] {
        if count
            .checked_mul(k)
            .and_then(|c| c.checked_mul(8))
            .is_none()
        {
            return Err(Error::BadSketchFile(format!("{what} dimensions overflow")));
        }
    }
    let mut read_matrix = |rows: usize, what: &str| -> Result<Mat> {
        let mut m = Mat::zeros(rows, k);
        let mut b8 = [0u8; 8];
        for i in 0..rows {
            for l in 0..k {
                read_exact_or(&mut reader, &mut b8, what)?;
                m[(i, l)] = f64::from_le_bytes(b8);
            }
        }
        Ok(m)
    };
    let p = read_matrix(n, "P entries")?;
    let q = read_matrix(m, "Q entries")?;
    let mut b8 = [0u8; 8];
    read_exact_or(&mut reader, &mut b8, "meta power_iters")?;
    let power_iters = u64::from_le_bytes(b8) as usize;
    read_exact_or(&mut reader, &mut b8, "meta seed")?;
    let seed = u64::from_le_bytes(b8);
    let mut flag = [0u8; 1];
    read_exact_or(&mut reader, &mut flag, "meta error flag")?;
    let spectral_error = if flag[0] == 1 {
        read_exact_or(&mut reader, &mut b8, "meta spectral error")?;
        Some(f64::from_le_bytes(b8))
    } else if flag[0] == 0 {
        None
    } else {
        return Err(Error::BadSketchFile("bad spectral-error flag".into()));
    };
    Sketch::from_factors(
        p,
        q,
        SketchMeta {
            power_iters,
            seed,
            spectral_error,
        },
    )
}

pub fn load_sketch(path: &Path) -> Result<Sketch> {
    let file = File::open(path)?;
    read_sketch(BufReader::new(file))
}

// ---------------------------------------------------------------------------
// JSON report envelope
// ---------------------------------------------------------------------------

/// Wrap a report body in the versioned envelope every command emits.
pub fn report_json<T: serde::Serialize>(command: &str, body: &T) -> Result<String> {
    let mut value = serde_json::to_value(body)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::invalid("report body must serialize to a JSON object"))?;
    obj.insert(
        "schema_version".into(),
        serde_json::Value::from(REPORT_SCHEMA_VERSION),
    );
    obj.insert("command".into(), serde_json::Value::from(command));
    Ok(serde_json::to_string_pretty(&serde_json::Value::Object(
        obj.clone(),
    ))?)
}
