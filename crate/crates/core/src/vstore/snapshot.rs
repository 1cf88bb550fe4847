//! Snapshot persistence for [`VectorStore`].
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! header:  magic "LFVS" | version u32 | dimension u32 (0 = unset)
//!          | record count u64 | next insertion id u64
//! record:  store_id u64 | label (u32 length + UTF-8 bytes)
//!          | item_id (u32 length + UTF-8 bytes) | modality u8 (0 image, 1 text)
//!          | dimension * f32
//! ```
//!
//! Restore reproduces the store record-for-record, including insertion ids,
//! so snapshots taken before and after a round-trip are byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::embed::{EmbeddingVector, Modality};
use crate::vstore::{StoreId, StoredEmbedding, VectorStore};

const MAGIC: [u8; 4] = *b"LFVS";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a vector store snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot is truncated")]
    Truncated,
    #[error("snapshot is corrupt: {0}")]
    Corrupt(String),
}

impl VectorStore {
    pub fn snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let dimension = self.dimension().unwrap_or(0) as u32;
        out.write_all(&dimension.to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&self.next_id.to_le_bytes())?;
        for record in self.iter() {
            out.write_all(&record.store_id.0.to_le_bytes())?;
            write_string(&mut out, &record.label)?;
            write_string(&mut out, &record.item_id)?;
            let modality = match record.modality() {
                Modality::Image => 0u8,
                Modality::Text => 1u8,
            };
            out.write_all(&[modality])?;
            for &value in record.vector.values() {
                out.write_all(&value.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn restore(path: &Path) -> Result<VectorStore, SnapshotError> {
        let mut input = BufReader::new(File::open(path)?);
        if read_array::<4>(&mut input)? != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let version = u32::from_le_bytes(read_array(&mut input)?);
        if version != VERSION {
            return Err(SnapshotError::UnsupportedVersion(version));
        }
        let dimension = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let count = u64::from_le_bytes(read_array(&mut input)?);
        let next_id = u64::from_le_bytes(read_array(&mut input)?);
        if count > 0 && dimension == 0 {
            return Err(SnapshotError::Corrupt("records with dimension 0".into()));
        }
        let mut store = VectorStore {
            dimension: if dimension == 0 {
                None
            } else {
                Some(dimension)
            },
            records: Vec::with_capacity(count.min(1 << 20) as usize),
            next_id,
        };
        let mut previous_id: Option<u64> = None;
        for _ in 0..count {
            let store_id = u64::from_le_bytes(read_array(&mut input)?);
            if previous_id.is_some_and(|p| store_id <= p) {
                return Err(SnapshotError::Corrupt(format!(
                    "store ids not strictly increasing at {store_id}"
                )));
            }
            if store_id >= next_id {
                return Err(SnapshotError::Corrupt(format!(
                    "store id {store_id} beyond next id {next_id}"
                )));
            }
            previous_id = Some(store_id);
            let label = read_string(&mut input)?;
            let item_id = read_string(&mut input)?;
            let modality = match read_array::<1>(&mut input)?[0] {
                0 => Modality::Image,
                1 => Modality::Text,
                other => {
                    return Err(SnapshotError::Corrupt(format!(
                        "unknown modality byte {other}"
                    )))
                }
            };
            let mut values = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                values.push(f32::from_le_bytes(read_array(&mut input)?));
            }
            let vector = EmbeddingVector::from_unit_values(values, modality)
                .map_err(|e| SnapshotError::Corrupt(format!("unusable vector: {e}")))?;
            store.records.push(StoredEmbedding {
                store_id: StoreId(store_id),
                label,
                item_id,
                vector,
            });
        }
        let mut trailing = [0u8; 1];
        match input.read(&mut trailing)? {
            0 => Ok(store),
            _ => Err(SnapshotError::Corrupt(
                "trailing bytes after last record".into(),
            )),
        }
    }
}

fn write_string(out: &mut impl Write, s: &str) -> Result<(), SnapshotError> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string(input: &mut impl Read) -> Result<String, SnapshotError> {
    let len = u32::from_le_bytes(read_array(input)?) as usize;
    if len > (1 << 24) {
        return Err(SnapshotError::Corrupt(format!(
            "implausible string length {len}"
        )));
    }
    let mut bytes = vec![0u8; len];
    read_exact(input, &mut bytes)?;
    String::from_utf8(bytes).map_err(|e| SnapshotError::Corrupt(format!("invalid UTF-8: {e}")))
}

fn read_array<const N: usize>(input: &mut impl Read) -> Result<[u8; N], SnapshotError> {
    let mut buffer = [0u8; N];
    read_exact(input, &mut buffer)?;
    Ok(buffer)
}

fn read_exact(input: &mut impl Read, buffer: &mut [u8]) -> Result<(), SnapshotError> {
    input.read_exact(buffer).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SnapshotError::Truncated
        } else {
            SnapshotError::Io(e)
        }
    })
}
