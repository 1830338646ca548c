//! Binary and CSV exchange formats.
//!
//! `FKW1` (weight matrix): `"FKW1"`, `u32 n`, `u32 reserved = 0`, four zero
//! bytes, then `n × n` row-major `f64`.
//!
//! `FBM1` (path batch): `"FBM1"`, `u32 n_paths`, `u32 n + 1`, `f64 H`,
//! `u64 seed`, then `n_paths × (n + 1)` row-major `f64`.
//!
//! All integers and floats are little-endian.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fbm::{GeneratorKind, PathBatch};
use crate::functional::FunctionalSample;
use crate::grid::TimeGrid;
use crate::kernel::{HurstIndex, WeightMatrix};
use crate::rng::RngStreamSpec;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FKW1";
pub const PATHS_MAGIC: &[u8; 4] = b"FBM1";
pub const WEIGHTS_HEADER_LEN: usize = 16;
pub const PATHS_HEADER_LEN: usize = 28;

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated input at byte {}", self.at)))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    /// Reads exactly `rows × cols` floats and requires the input to end there.
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let expected = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        let remaining = self.bytes.len() - self.at;
        if remaining != expected {
            return Err(Error::Format(format!(
                "payload is {remaining} bytes, header implies {expected}"
            )));
        }
        let data: Vec<f64> = self
            .take(expected)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
    }
}

fn put_matrix(out: &mut Vec<u8>, m: ndarray::ArrayView2<'_, f64>) {
    out.reserve(m.len() * 8);
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
}

pub fn encode_weights(w: &WeightMatrix) -> Result<Vec<u8>> {
    let n = w.grid().steps();
    let mut out = Vec::with_capacity(WEIGHTS_HEADER_LEN + n * n * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&to_u32(n, "n")?.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    put_matrix(&mut out, w.as_array().view());
    Ok(out)
}

/// Raw `n × n` matrix from an `FKW1` buffer.
pub fn decode_weights(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = Reader { bytes, at: 0 };
    r.magic(WEIGHTS_MAGIC)?;
    let n = r.u32()? as usize;
    let reserved = r.u32()?;
    let pad = r.take(4)?;
    if reserved != 0 || pad.iter().any(|b| *b != 0) {
        return Err(Error::Format("reserved header bytes must be zero".into()));
    }
    if n < 2 {
        return Err(Error::Format(format!("weight matrix needs n >= 2, got {n}")));
    }
    r.matrix(n, n)
}

/// Decodes an `FKW1` buffer and attaches the index and horizon, which the
/// format does not carry.
pub fn read_weights(bytes: &[u8], hurst: HurstIndex, horizon: f64) -> Result<WeightMatrix> {
    let m = decode_weights(bytes)?;
    let grid = TimeGrid::new(horizon, m.nrows())?;
    WeightMatrix::from_parts(hurst, grid, m)
}

pub fn encode_paths(batch: &PathBatch) -> Result<Vec<u8>> {
    let values = batch.values();
    let mut out = Vec::with_capacity(PATHS_HEADER_LEN + values.len() * 8);
    out.extend_from_slice(PATHS_MAGIC);
    out.extend_from_slice(&to_u32(batch.n_paths(), "n_paths")?.to_le_bytes());
    out.extend_from_slice(&to_u32(values.ncols(), "n + 1")?.to_le_bytes());
    out.extend_from_slice(&batch.hurst().value().to_le_bytes());
    out.extend_from_slice(&batch.rng().master_seed.to_le_bytes());
    put_matrix(&mut out, values);
    Ok(out)
}

/// Header fields of an `FBM1` buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathsHeader {
    pub n_paths: usize,
    pub nodes: usize,
    pub hurst: f64,
    pub seed: u64,
}

/// Decodes an `FBM1` buffer. The horizon is not stored in the file and is
/// supplied by the caller.
pub fn decode_paths(bytes: &[u8], horizon: f64) -> Result<PathBatch> {
    let mut r = Reader { bytes, at: 0 };
    r.magic(PATHS_MAGIC)?;
    let header = PathsHeader {
        n_paths: r.u32()? as usize,
        nodes: r.u32()? as usize,
        hurst: r.f64()?,
        seed: r.u64()?,
    };
    if header.n_paths == 0 {
        return Err(Error::Format("batch has no paths".into()));
    }
    if header.nodes < 3 {
        return Err(Error::Format(format!("need at least 3 nodes, got {}", header.nodes)));
    }
    let hurst = HurstIndex::new(header.hurst).map_err(|e| Error::Format(e.to_string()))?;
    let grid = TimeGrid::new(horizon, header.nodes - 1)?;
    let values = r.matrix(header.n_paths, header.nodes)?;
    PathBatch::new(
        hurst,
        grid,
        values,
        GeneratorKind::Imported,
        RngStreamSpec::new(header.seed, 0),
    )
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// One path per row, no header.
pub fn write_paths_csv<W: Write>(batch: &PathBatch, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in batch.values().rows() {
        w.serialize(row.to_vec()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Row `i` holds `w_{i+1, j}` for `j = 1..=n`.
pub fn write_weights_csv<W: Write>(weights: &WeightMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in weights.as_array().rows() {
        w.serialize(row.to_vec()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const FUNCTIONAL_CSV_COLUMNS: [&str; 11] = [
    "path_id",
    "H",
    "a",
    "sigma",
    "T",
    "n",
    "F",
    "energy",
    "lower_bound",
    "second_deriv_bound",
    "seed",
];

pub fn write_functional_csv<W: Write>(samples: &[FunctionalSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FUNCTIONAL_CSV_COLUMNS).map_err(csv_err)?;
    for s in samples {
        w.serialize((
            s.path_id,
            s.hurst,
            s.params.a,
            s.params.sigma,
            s.params.horizon,
            s.n,
            s.f,
            s.energy,
            s.lower_bound,
            s.second_deriv_bound,
            s.seed,
        ))
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
