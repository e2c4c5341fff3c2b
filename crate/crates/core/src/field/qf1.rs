//! The QF1 binary field format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic   "QFLD"
//! version u32 = 1
//! ndim    u32
//! dims    u32 × ndim
//! h       f64
//! origin  f64 × ndim
//! epsilon f64
//! a, b, c f64 × 3
//! payload 5 × f64 per node, x fastest
//! ```
//!
//! The Dirichlet mask is not stored; [`read`] marks the grid's outer layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FieldQ, GridSpec};
use crate::error::{Error, Result};
use crate::tensor::{MaterialParams, QTensor};

pub const MAGIC: &[u8; 4] = b"QFLD";
pub const VERSION: u32 = 1;

pub fn encode(field: &FieldQ) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::with_capacity(64 + field.len() * 40);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.ndim() as u32).to_le_bytes());
    for &d in g.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&g.h().to_le_bytes());
    for &o in g.origin() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for v in [
        field.epsilon,
        field.params.a,
        field.params.b,
        field.params.c,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for q in &field.values {
        for c in q.0 {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice length"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }
}

pub fn decode(buf: &[u8]) -> Result<FieldQ> {
    let mut cur = Cursor { buf, pos: 0 };
    if &cur.take::<4>()? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let ndim = cur.u32()? as usize;
    if !(ndim == 2 || ndim == 3) {
        return Err(Error::Format(format!("ndim must be 2 or 3, got {ndim}")));
    }
    let dims = (0..ndim)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let h = cur.f64()?;
    let origin = (0..ndim).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    let epsilon = cur.f64()?;
    let (a, b, c) = (cur.f64()?, cur.f64()?, cur.f64()?);
    let grid = GridSpec::new(&dims, h, &origin).map_err(|e| Error::Format(e.to_string()))?;
    let params = MaterialParams::new(a, b, c).map_err(|e| Error::Format(e.to_string()))?;
    let n = grid.len();
    if buf.len() - cur.pos != n * 40 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            buf.len() - cur.pos,
            n * 40
        )));
    }
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let mut q = [0.0; 5];
        for c in q.iter_mut() {
            *c = cur.f64()?;
        }
        values.push(QTensor(q));
    }
    check_sample(&values)?;
    let mask = (0..n).map(|i| grid.is_edge(i)).collect();
    FieldQ::from_parts(grid, values, mask, epsilon, params)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Matrix round trip on up to 64 evenly spaced nodes.
fn check_sample(values: &[QTensor]) -> Result<()> {
    let stride = (values.len() / 64).max(1);
    for q in values.iter().step_by(stride) {
        if !q.is_finite() {
            return Err(Error::Format("non-finite payload value".into()));
        }
        let back = QTensor::from_matrix(&q.to_matrix())
            .map_err(|e| Error::Format(format!("payload leaves S0: {e}")))?;
        if (back - *q).norm() > 1e-12 * (1.0 + q.norm()) {
            return Err(Error::Format("payload fails the S0 round trip".into()));
        }
    }
    Ok(())
}

pub fn write(path: impl AsRef<Path>, field: &FieldQ) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(field))
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<FieldQ> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{hedgehog_bc, Domain};

    fn sample_field() -> FieldQ {
        let g = GridSpec::centered(&[5, 6, 7], 0.25).unwrap();
        let mp = MaterialParams::new(0.5, 1.5, 2.0).unwrap();
        hedgehog_bc(&g, &mp, 0.3, [0.01, 0.02, 0.03], Domain::Box).unwrap()
    }

    #[test]
    fn header_layout() {
        let f = sample_field();
        let bytes = encode(&f);
        assert_eq!(&bytes[..4], b"QFLD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 5);
        let header = 4 + 4 + 4 + 3 * 4 + 8 + 3 * 8 + 8 + 3 * 8;
        assert_eq!(bytes.len(), header + 5 * 6 * 7 * 40);
        let first = f64::from_le_bytes(bytes[header..header + 8].try_into().unwrap());
        assert_eq!(first, f.values[0].0[0]);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample_field();
        let back = decode(&encode(&f)).unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.grid, f.grid);
        assert_eq!(back.epsilon.to_bits(), f.epsilon.to_bits());
        assert_eq!(encode(&back), encode(&f));
    }

    #[test]
    fn rejects_corruption() {
        let f = sample_field();
        let mut bytes = encode(&f);
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        let bytes = encode(&f);
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bytes = encode(&f);
        let header = bytes.len() - f.len() * 40;
        bytes[header..header + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode(&bytes).is_err());
    }
}
