//! Binary field snapshots.
//!
//! Layout (little endian): magic `QBIL`, format version `u32`, `nx` and `ny`
//! as `u64`, `dx`, `dy`, `t` as `f64`, then `nx·ny` row-major `(re, im)`
//! pairs of `f64`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::solver::WaveField;

pub const MAGIC: &[u8; 4] = b"QBIL";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad magic {0:?}, expected \"QBIL\"")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {found} (this build reads version {VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("truncated snapshot: expected {expected} bytes, file ends at byte offset {offset}")]
    Truncated { offset: usize, expected: usize },
    #[error("trailing data after byte offset {0}")]
    Trailing(usize),
    #[error("field of {nx}x{ny} nodes is too large")]
    TooLarge { nx: u64, ny: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode(field: &WaveField) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * field.psi.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(field.nx as u64).to_le_bytes());
    out.extend_from_slice(&(field.ny as u64).to_le_bytes());
    for v in [field.dx, field.dy, field.t] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in &field.psi {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    expected: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], SnapshotError> {
        let end = self.pos + N;
        if end > self.buf.len() {
            return Err(SnapshotError::Truncated { offset: self.buf.len(), expected: self.expected.max(end) });
        }
        let mut a = [0u8; N];
        a.copy_from_slice(&self.buf[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode(buf: &[u8]) -> Result<WaveField, SnapshotError> {
    let mut r = Reader { buf, pos: 0, expected: HEADER_LEN };
    let magic: [u8; 4] = r.take()?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(r.take()?);
    if version != VERSION {
        return Err(SnapshotError::UnsupportedVersion { found: version });
    }
    let (nx, ny) = (r.u64()?, r.u64()?);
    let n = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(16))
        .and_then(|b| usize::try_from(b).ok())
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or(SnapshotError::TooLarge { nx, ny })?;
    r.expected = n;
    let (dx, dy, t) = (r.f64()?, r.f64()?, r.f64()?);
    if buf.len() < n {
        return Err(SnapshotError::Truncated { offset: buf.len(), expected: n });
    }
    let count = (nx * ny) as usize;
    let mut psi = Vec::with_capacity(count);
    for _ in 0..count {
        let re = r.f64()?;
        let im = r.f64()?;
        psi.push(Complex64::new(re, im));
    }
    if r.pos != buf.len() {
        return Err(SnapshotError::Trailing(r.pos));
    }
    Ok(WaveField { nx: nx as usize, ny: ny as usize, dx, dy, t, psi })
}

pub fn write_field_snapshot(field: &WaveField, path: &Path) -> Result<(), SnapshotError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(field))?;
    Ok(())
}

pub fn read_field_snapshot(path: &Path) -> Result<WaveField, SnapshotError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(nx: usize, ny: usize) -> WaveField {
        let psi = (0..nx * ny).map(|k| Complex64::new((k as f64).sin(), -(k as f64) * 1e-3)).collect();
        WaveField { nx, ny, dx: 0.01, dy: 0.02, t: 1.25, psi }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.qbil");
        let f = field(7, 5);
        write_field_snapshot(&f, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"QBIL");
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 35);
        assert_eq!(read_field_snapshot(&p).unwrap(), f);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&field(4, 3));
        let err = decode(&bytes[..100]).unwrap_err();
        assert!(matches!(err, SnapshotError::Truncated { offset: 100, expected } if expected == bytes.len()));
        assert!(err.to_string().contains("byte offset 100"));
        assert!(matches!(decode(&bytes[..10]), Err(SnapshotError::Truncated { offset: 10, .. })));
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = encode(&field(2, 2));
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, SnapshotError::UnsupportedVersion { found: 2 }));
        assert!(err.to_string().contains("unsupported"));
        let mut bytes = encode(&field(2, 2));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(SnapshotError::BadMagic(_))));
        let mut bytes = encode(&field(2, 2));
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(SnapshotError::Trailing(_))));
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(nx in 1usize..6, ny in 1usize..6, vals in prop::collection::vec(any::<u64>(), 72), t in any::<f64>()) {
            let psi = (0..nx * ny)
                .map(|k| Complex64::new(f64::from_bits(vals[2 * k]), f64::from_bits(vals[2 * k + 1])))
                .collect();
            let f = WaveField { nx, ny, dx: 0.5, dy: 0.25, t, psi };
            let back = decode(&encode(&f)).unwrap();
            prop_assert_eq!(encode(&back), encode(&f));
        }
    }
}
