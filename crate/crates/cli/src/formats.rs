//! Snapshot files and plain numeric tables.
//!
//! Binary snapshot layout, all little-endian:
//!
//! ```text
//! "KDMD" | version u32 | M u64 | N u64 | dt f64 (NaN when absent)
//! X as M·N f64, row-major | Y as M·N f64, row-major
//! ```
//!
//! The text alternative is a pair of files `STEM.x.csv` and `STEM.y.csv`,
//! each starting with `# M=…,N=…,dt=…` and holding one state per line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faer::Mat;
use kernel_koopman::SnapshotSet;

use crate::error::{CliError, CliResult};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"KDMD";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8;

/// Shortest text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::write(path, e));
    }
    Ok(())
}

pub fn encode_snapshots(set: &SnapshotSet) -> Vec<u8> {
    let (m, n) = (set.x.nrows(), set.x.ncols());
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * m * n);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&set.dt.unwrap_or(f64::NAN).to_le_bytes());
    for block in [&set.x, &set.y] {
        for i in 0..m {
            for j in 0..n {
                out.extend_from_slice(&block[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

fn take<const K: usize>(bytes: &[u8], at: &mut usize) -> [u8; K] {
    let mut buf = [0u8; K];
    buf.copy_from_slice(&bytes[*at..*at + K]);
    *at += K;
    buf
}

pub fn decode_snapshots(bytes: &[u8]) -> CliResult<SnapshotSet> {
    let bad = |msg: &str| CliError::Data(format!("snapshot file: {msg}"));
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad("missing KDMD magic"));
    }
    let mut at = 4;
    let version = u32::from_le_bytes(take(bytes, &mut at));
    if version != SNAPSHOT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let m = u64::from_le_bytes(take(bytes, &mut at));
    let n = u64::from_le_bytes(take(bytes, &mut at));
    let dt = f64::from_le_bytes(take(bytes, &mut at));
    let expected = m
        .checked_mul(n)
        .and_then(|mn| mn.checked_mul(16))
        .and_then(|b| b.checked_add(HEADER_LEN as u64));
    if expected != Some(bytes.len() as u64) {
        return Err(bad(&format!("size does not match M={m}, N={n}")));
    }
    let (m, n) = (m as usize, n as usize);
    let mut read_block = || {
        let mut block = Mat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                block[(i, j)] = f64::from_le_bytes(take(bytes, &mut at));
            }
        }
        block
    };
    let x = read_block();
    let y = read_block();
    let dt = (!dt.is_nan()).then_some(dt);
    Ok(SnapshotSet::new(x, y, dt)?)
}

pub fn write_snapshots_binary(path: &Path, set: &SnapshotSet) -> CliResult<()> {
    write_atomic(path, &encode_snapshots(set))
}

pub fn read_snapshots_binary(path: &Path) -> CliResult<SnapshotSet> {
    let bytes = fs::read(path).map_err(|e| CliError::read(path, e))?;
    decode_snapshots(&bytes)
}

/// `STEM.x.csv` and `STEM.y.csv`.
pub fn csv_pair(stem: &Path) -> (PathBuf, PathBuf) {
    let name = stem
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    (
        stem.with_file_name(format!("{name}.x.csv")),
        stem.with_file_name(format!("{name}.y.csv")),
    )
}

fn csv_header(set: &SnapshotSet) -> String {
    let dt = set.dt.map(fmt_f64).unwrap_or_else(|| "none".into());
    format!("# M={},N={},dt={}\n", set.pairs(), set.state_dim(), dt)
}

pub fn matrix_csv(header: &str, block: &Mat<f64>) -> String {
    let mut s = String::from(header);
    for i in 0..block.nrows() {
        let row: Vec<String> = (0..block.ncols()).map(|j| fmt_f64(block[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_snapshots_csv(stem: &Path, set: &SnapshotSet) -> CliResult<()> {
    let (xp, yp) = csv_pair(stem);
    let header = csv_header(set);
    write_atomic(&xp, matrix_csv(&header, &set.x).as_bytes())?;
    write_atomic(&yp, matrix_csv(&header, &set.y).as_bytes())
}

struct CsvBlock {
    header: Option<(usize, usize, Option<f64>)>,
    rows: Mat<f64>,
}

fn parse_header(line: &str) -> CliResult<(usize, usize, Option<f64>)> {
    let bad = || CliError::Data(format!("malformed header '{line}'"));
    let (mut m, mut n, mut dt) = (None, None, None);
    for field in line.trim_start_matches('#').split(',') {
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        match key.trim() {
            "M" => m = Some(value.trim().parse().map_err(|_| bad())?),
            "N" => n = Some(value.trim().parse().map_err(|_| bad())?),
            "dt" => {
                dt = match value.trim() {
                    "none" => Some(None),
                    v => Some(Some(v.parse().map_err(|_| bad())?)),
                }
            }
            _ => return Err(bad()),
        }
    }
    match (m, n, dt) {
        (Some(m), Some(n), Some(dt)) => Ok((m, n, dt)),
        _ => Err(bad()),
    }
}

/// Numeric rows, skipping blank lines; the first `#` line may be a header.
fn parse_csv(text: &str, source: &Path) -> CliResult<CsvBlock> {
    let mut header = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if lineno == 0 && line.contains('=') {
                header = Some(parse_header(line)?);
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", source.display(), lineno + 1)))?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected {w} columns, found {}",
                    source.display(),
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok(CsvBlock {
        header,
        rows: Mat::from_fn(rows, cols, |i, j| values[i * cols + j]),
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn read_snapshots_csv(stem: &Path) -> CliResult<SnapshotSet> {
    let (xp, yp) = csv_pair(stem);
    let x = parse_csv(&read_text(&xp)?, &xp)?;
    let y = parse_csv(&read_text(&yp)?, &yp)?;
    let (hx, hy) = match (x.header, y.header) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(CliError::Data(
                "CSV snapshot files need a '# M=,N=,dt=' header".into(),
            ))
        }
    };
    if hx != hy {
        return Err(CliError::Data("x and y headers disagree".into()));
    }
    let (m, n, dt) = hx;
    for (p, b) in [(&xp, &x.rows), (&yp, &y.rows)] {
        if b.nrows() != m || b.ncols() != n {
            return Err(CliError::Data(format!(
                "{} holds {}x{} values but the header says {m}x{n}",
                p.display(),
                b.nrows(),
                b.ncols()
            )));
        }
    }
    Ok(SnapshotSet::new(x.rows, y.rows, dt)?)
}

/// Strips `.x.csv` from a path naming the x half of a CSV pair.
fn csv_stem(path: &Path) -> Option<PathBuf> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".x.csv").map(|s| path.with_file_name(s))
}

/// Reads a binary file, or a CSV pair when given its `.x.csv` half.
pub fn read_snapshots(path: &Path) -> CliResult<SnapshotSet> {
    match csv_stem(path) {
        Some(stem) => read_snapshots_csv(&stem),
        None => read_snapshots_binary(path),
    }
}

/// States for evaluation: a CSV of rows, or the `X` block of a snapshot
/// file.
pub fn read_states(path: &Path) -> CliResult<Mat<f64>> {
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(parse_csv(&read_text(path)?, path)?.rows)
    } else {
        Ok(read_snapshots(path)?.x)
    }
}

/// A CSV table with a header row.
#[derive(Debug, Clone, Default)]
pub struct Table {
    columns: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn push(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.columns.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(m: usize, n: usize, dt: Option<f64>) -> SnapshotSet {
        let x = Mat::from_fn(m, n, |i, j| {
            (i as f64 + 0.1) * (j as f64 - 0.7).powi(3) / 3.0
        });
        let y = Mat::from_fn(m, n, |i, j| -1e-300 * (i * n + j + 1) as f64);
        SnapshotSet::new(x, y, dt).unwrap()
    }

    #[test]
    fn binary_header_layout() {
        let bytes = encode_snapshots(&sample(2, 3, Some(0.5)));
        assert_eq!(&bytes[..4], b"KDMD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[24..32].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), 32 + 2 * 2 * 3 * 8);
    }

    #[test]
    fn corrupt_binary_is_a_data_error() {
        let mut bytes = encode_snapshots(&sample(2, 3, None));
        bytes.pop();
        assert!(matches!(decode_snapshots(&bytes), Err(CliError::Data(_))));
        let mut bytes = encode_snapshots(&sample(2, 3, None));
        bytes[0] = b'X';
        assert!(matches!(decode_snapshots(&bytes), Err(CliError::Data(_))));
    }

    #[test]
    fn csv_header_parsing() {
        assert_eq!(parse_header("# M=3,N=2,dt=none").unwrap(), (3, 2, None));
        assert_eq!(
            parse_header("# M=3,N=2,dt=0.25").unwrap(),
            (3, 2, Some(0.25))
        );
        assert!(parse_header("# M=3,N=2").is_err());
        assert!(parse_header("# M=3,N=2,dt=1,Q=4").is_err());
    }

    #[test]
    fn ragged_csv_is_rejected() {
        let r = parse_csv("1,2\n3\n", Path::new("t.csv"));
        assert!(matches!(r, Err(CliError::Data(_))));
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bitwise(
            m in 2usize..6,
            n in 1usize..5,
            values in prop::collection::vec(-1e6f64..1e6, 60),
            dt in prop::option::of(1e-3f64..10.0),
        ) {
            let x = Mat::from_fn(m, n, |i, j| values[(i * n + j) % 60]);
            let y = Mat::from_fn(m, n, |i, j| values[(i * n + j + 7) % 60] * 1e-200);
            let set = SnapshotSet::new(x, y, dt).unwrap();
            let back = decode_snapshots(&encode_snapshots(&set)).unwrap();
            prop_assert_eq!(back, set);
        }

        #[test]
        fn csv_round_trip_is_exact(
            m in 2usize..6,
            n in 1usize..5,
            values in prop::collection::vec(prop::num::f64::NORMAL, 60),
            dt in prop::option::of(1e-3f64..10.0),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let x = Mat::from_fn(m, n, |i, j| values[(i * n + j) % 60]);
            let y = Mat::from_fn(m, n, |i, j| values[(i * n + j + 11) % 60]);
            let set = SnapshotSet::new(x, y, dt).unwrap();
            let stem = dir.path().join("data");
            write_snapshots_csv(&stem, &set).unwrap();
            let back = read_snapshots(&csv_pair(&stem).0).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
