//! PRID binary feature files.
//!
//! Little-endian, no padding:
//!
//! ```text
//! "PRID"  version:u32=1  dim:u32  count:u64
//! count × { id_len:u16 id:[u8] label_len:u16 label:[u8] values:[f32; dim] }
//! ```

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use super::{GallerySnapshot, IndexError};
use crate::features::FeatureVector;

pub const PRID_MAGIC: &[u8; 4] = b"PRID";
pub const PRID_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 + 8;

/// Serializes records in snapshot order.
pub fn write_prid<W: Write>(snap: &GallerySnapshot, mut w: W) -> Result<(), IndexError> {
    let dim = u32::try_from(snap.dim())
        .map_err(|_| IndexError::InvalidRecord(format!("dim {} exceeds u32", snap.dim())))?;
    w.write_all(PRID_MAGIC)?;
    w.write_all(&PRID_VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(snap.len() as u64).to_le_bytes())?;
    for r in snap.records() {
        write_str(&mut w, r.id())?;
        write_str(&mut w, r.label())?;
        for v in r.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), IndexError> {
    let len = u16::try_from(s.len())
        .map_err(|_| IndexError::InvalidRecord(format!("string of {} bytes exceeds u16", s.len())))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn save(snap: &GallerySnapshot, path: impl AsRef<Path>) -> Result<(), IndexError> {
    let path = path.as_ref();
    // Write to a sibling, then rename.
    let tmp = path.with_extension("prid.tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_prid(snap, &mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn string(&mut self) -> Option<Result<String, IndexError>> {
        let len = self.u16()? as usize;
        let bytes = self.take(len)?;
        Some(
            String::from_utf8(bytes.to_vec())
                .map_err(|_| IndexError::InvalidRecord("string is not UTF-8".into())),
        )
    }
}

/// Parses a PRID byte buffer into a version-0 snapshot.
pub fn read_prid(bytes: &[u8]) -> Result<GallerySnapshot, IndexError> {
    if bytes.len() < 4 || &bytes[..4] != PRID_MAGIC {
        return Err(IndexError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IndexError::TruncatedFile {
            declared: 0,
            read: 0,
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PRID_VERSION {
        return Err(IndexError::VersionUnsupported(version));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if count > 0 && dim == 0 {
        return Err(IndexError::InvalidRecord("records with zero dimension".into()));
    }

    let mut r = Reader {
        buf: bytes,
        pos: HEADER_LEN,
    };
    let truncated = |read: u64| IndexError::TruncatedFile {
        declared: count,
        read,
    };
    // Each record needs at least 4 + 4·dim bytes; cap the preallocation accordingly.
    let min_record = 4 + 4 * dim;
    let capacity = (count as usize).min(bytes.len() / min_record.max(1));
    let mut records = Vec::with_capacity(capacity);
    for i in 0..count {
        let id = r.string().ok_or_else(|| truncated(i))??;
        let label = r.string().ok_or_else(|| truncated(i))??;
        let raw = r.take(dim * 4).ok_or_else(|| truncated(i))?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let fv = FeatureVector::new(id, label, values)
            .map_err(|e| IndexError::InvalidRecord(e.to_string()))?;
        records.push(fv);
    }
    GallerySnapshot::from_records(dim, records)
}

pub fn load(path: impl AsRef<Path>) -> Result<GallerySnapshot, IndexError> {
    let bytes = fs::read(path.as_ref()).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            IndexError::IoFailure(io::Error::new(
                io::ErrorKind::NotFound,
                format!("{}: not found", path.as_ref().display()),
            ))
        } else {
            IndexError::IoFailure(e)
        }
    })?;
    read_prid(&bytes)
}
