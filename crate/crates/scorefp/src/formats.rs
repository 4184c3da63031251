//! Binary artifact formats.
//!
//! `FPSC1` stores a field series: the magic, then `H`, `W` and the step
//! count `N` as little-endian `u32`, then `(N + 1) H W` little-endian `f64`
//! values in `(n, i, j)` order. The final time is not stored.
//!
//! `FPNW1` stores network parameters: the magic, the layer count and each
//! layer width as little-endian `u32`, then the flat parameter vector as
//! little-endian `f64`.

use std::fs;
use std::path::Path;

use scorefp_core::score_net::ScoreNet;
use scorefp_core::{FieldSeries, TimeGrid};

use crate::error::{AppError, AppResult};

pub const FIELD_MAGIC: &[u8; 5] = b"FPSC1";
pub const NETWORK_MAGIC: &[u8; 5] = b"FPNW1";

fn push_u32(out: &mut Vec<u8>, v: usize) -> AppResult<()> {
    let v = u32::try_from(v).map_err(|_| AppError::Input(format!("{v} does not fit a u32 header field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 5]) -> AppResult<Self> {
        if bytes.len() < magic.len() {
            return Err(AppError::Truncated("file shorter than its magic".into()));
        }
        if &bytes[..5] != magic {
            return Err(AppError::Format(format!(
                "bad magic, expected {}",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { bytes, pos: 5 })
    }

    fn take(&mut self, n: usize) -> AppResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AppError::Truncated(format!("needed {n} bytes at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> AppResult<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64s(&mut self, count: usize) -> AppResult<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| AppError::Format("payload size overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn finish(&self) -> AppResult<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(AppError::Format(format!("{} trailing bytes", self.bytes.len() - self.pos)))
        }
    }
}

pub fn encode_field(series: &FieldSeries) -> AppResult<Vec<u8>> {
    let mut out = Vec::with_capacity(17 + 8 * series.data().len());
    out.extend_from_slice(FIELD_MAGIC);
    push_u32(&mut out, series.height())?;
    push_u32(&mut out, series.width())?;
    push_u32(&mut out, series.grid().steps())?;
    for v in series.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a field series, attaching the final time `t_final` to its grid.
pub fn decode_field(bytes: &[u8], t_final: f64) -> AppResult<FieldSeries> {
    let mut r = Reader::new(bytes, FIELD_MAGIC)?;
    let (h, w, steps) = (r.u32()?, r.u32()?, r.u32()?);
    let count = h
        .checked_mul(w)
        .and_then(|d| d.checked_mul(steps + 1))
        .ok_or_else(|| AppError::Format("field dimensions overflow".into()))?;
    let data = r.f64s(count)?;
    r.finish()?;
    let grid = TimeGrid::new(t_final, steps)?;
    Ok(FieldSeries::new(h, w, grid, data)?)
}

pub fn encode_network(net: &ScoreNet) -> AppResult<Vec<u8>> {
    let mut out = Vec::with_capacity(9 + 4 * net.sizes().len() + 8 * net.num_params());
    out.extend_from_slice(NETWORK_MAGIC);
    push_u32(&mut out, net.sizes().len())?;
    for &s in net.sizes() {
        push_u32(&mut out, s)?;
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_network(bytes: &[u8]) -> AppResult<ScoreNet> {
    let mut r = Reader::new(bytes, NETWORK_MAGIC)?;
    let layers = r.u32()?;
    if !(2..=64).contains(&layers) {
        return Err(AppError::Format(format!("implausible layer count {layers}")));
    }
    let sizes = (0..layers).map(|_| r.u32()).collect::<AppResult<Vec<_>>>()?;
    let count = sizes
        .windows(2)
        .try_fold(0usize, |acc, w| w[0].checked_mul(w[1]).and_then(|m| acc.checked_add(m + w[1])))
        .ok_or_else(|| AppError::Format("layer sizes overflow".into()))?;
    let params = r.f64s(count)?;
    r.finish()?;
    ScoreNet::new(sizes, params).map_err(|e| AppError::Format(e.to_string()))
}

pub fn write_field(series: &FieldSeries, path: &Path) -> AppResult<()> {
    fs::write(path, encode_field(series)?).map_err(|e| AppError::io(path, e))
}

pub fn read_field(path: &Path, t_final: f64) -> AppResult<FieldSeries> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_field(&bytes, t_final).map_err(|e| e.with_path(path))
}

pub fn write_network(net: &ScoreNet, path: &Path) -> AppResult<()> {
    fs::write(path, encode_network(net)?).map_err(|e| AppError::io(path, e))
}

pub fn read_network(path: &Path) -> AppResult<ScoreNet> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode_network(&bytes).map_err(|e| e.with_path(path))
}
