//! On-disk layout of the vector index.
//!
//! Header (magic, version, payload kind, n, d, provider id), then the
//! row-major float32 matrix, then the payload table as JSON. The matrix
//! dominates the file and loads with a single pass; payloads are small
//! records, so JSON keeps them schema-flexible across payload types.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::diskfmt::{check_magic_version, corrupt, read_u32, read_u64, str_at, IndexFileError, SectionWriter};

use super::{VectorIndex, VectorPayload};

const MAGIC: &[u8; 4] = b"VIDX";
const VERSION: u32 = 1;

/// Tags which payload type a file stores, so an example-pair index is
/// never deserialized as item records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    Item,
    Example,
}

impl PayloadKind {
    fn tag(self) -> u32 {
        match self {
            PayloadKind::Item => 0,
            PayloadKind::Example => 1,
        }
    }

    fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(PayloadKind::Item),
            1 => Some(PayloadKind::Example),
            _ => None,
        }
    }
}

impl<T: VectorPayload> VectorIndex<T> {
    /// Serialize for [`load_vector_index`], with the same
    /// write-then-rename discipline as the keyword index.
    pub fn save(&self, path: &Path) -> Result<(), IndexFileError> {
        let (matrix, dimension, provider_id, items) = self.parts();
        let payload = serde_json::to_vec(items)
            .map_err(|e| corrupt(format!("cannot serialize payloads: {e}")))?;

        let mut out = SectionWriter::new();
        out.bytes(MAGIC);
        out.u32(VERSION);
        out.u32(T::KIND.tag());
        out.u32(items.len() as u32);
        out.u32(dimension as u32);
        out.u32(provider_id.len() as u32);
        out.bytes(provider_id.as_bytes());
        for value in matrix {
            out.bytes(&value.to_le_bytes());
        }
        out.u64(payload.len() as u64);
        out.bytes(&payload);

        let tmp = path.with_extension("tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&out.out)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

pub fn load_vector_index<T: VectorPayload>(path: &Path) -> Result<VectorIndex<T>, IndexFileError> {
    let bytes = std::fs::read(path)?;
    check_magic_version(&bytes, MAGIC, VERSION)?;
    let kind_tag = read_u32(&bytes, 8)?;
    let kind = PayloadKind::from_tag(kind_tag)
        .ok_or_else(|| corrupt(format!("unknown payload kind tag {kind_tag}")))?;
    if kind != T::KIND {
        return Err(corrupt(format!(
            "file stores {kind:?} payloads, expected {:?}",
            T::KIND
        )));
    }
    let n = read_u32(&bytes, 12)? as usize;
    let dimension = read_u32(&bytes, 16)? as usize;
    let id_len = read_u32(&bytes, 20)? as usize;
    let provider_id = str_at(&bytes, 24, id_len)?.to_string();

    let matrix_at = 24 + id_len;
    let matrix_len = n
        .checked_mul(dimension)
        .ok_or_else(|| corrupt("matrix size overflows"))?;
    let matrix_bytes = matrix_len
        .checked_mul(4)
        .filter(|&len| matrix_at + len <= bytes.len())
        .ok_or_else(|| corrupt("matrix section out of bounds"))?;
    let mut matrix = Vec::with_capacity(matrix_len);
    for i in 0..matrix_len {
        let at = matrix_at + i * 4;
        matrix.push(f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")));
    }

    let payload_at = matrix_at + matrix_bytes;
    let payload_len = read_u64(&bytes, payload_at)? as usize;
    let payload = crate::diskfmt::slice(&bytes, payload_at + 8, payload_len)?;
    let items: Vec<T> = serde_json::from_slice(payload)
        .map_err(|e| corrupt(format!("cannot decode payloads: {e}")))?;
    if items.len() != n {
        return Err(corrupt(format!(
            "header claims {n} items, payload table has {}",
            items.len()
        )));
    }
    Ok(VectorIndex::from_parts(matrix, dimension, provider_id, items))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ItemRecord;
    use crate::vector::tests::{property, random_items};
    use crate::vector::HashEmbedding;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn build_and_save() -> (tempfile::TempDir, VectorIndex<ItemRecord>, std::path::PathBuf) {
        let provider = HashEmbedding::default();
        let mut rng = StdRng::seed_from_u64(5);
        let items = random_items(&mut rng, 40);
        let index = VectorIndex::build(items, &provider, 16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("props.vidx");
        index.save(&path).unwrap();
        (dir, index, path)
    }

    #[test]
    fn round_trip_preserves_search_results() {
        let provider = HashEmbedding::default();
        let (_dir, index, path) = build_and_save();
        let loaded: VectorIndex<ItemRecord> = load_vector_index(&path).unwrap();
        assert_eq!(loaded.len(), index.len());
        assert_eq!(loaded.provider_id(), index.provider_id());
        assert_eq!(loaded.dimension(), index.dimension());
        for query in ["population held", "award", "cereal grain"] {
            let a = index.search(query, &provider, 5, None).unwrap();
            let b = loaded.search(query, &provider, 5, None).unwrap();
            let key = |hits: &[crate::vector::Scored<'_, ItemRecord>]| {
                hits.iter()
                    .map(|s| (s.payload.iri.clone(), s.similarity))
                    .collect::<Vec<_>>()
            };
            assert_eq!(key(&a), key(&b));
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vidx");
        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        assert!(matches!(
            load_vector_index::<ItemRecord>(&path),
            Err(IndexFileError::BadMagic { .. })
        ));

        let (_dir2, _index, good) = build_and_save();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_vector_index::<ItemRecord>(&path),
            Err(IndexFileError::BadVersion { found: 7, .. })
        ));
    }

    #[test]
    fn rejects_wrong_payload_kind() {
        let (_dir, _index, path) = build_and_save();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&PayloadKind::Example.tag().to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        let err = load_vector_index::<ItemRecord>(&path).unwrap_err();
        assert!(err.to_string().contains("payload"));
    }

    #[test]
    fn rejects_truncation() {
        let (_dir, _index, path) = build_and_save();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_vector_index::<ItemRecord>(&path).is_err());
    }

    #[test]
    fn single_item_file() {
        let provider = HashEmbedding::default();
        let index =
            VectorIndex::build(vec![property("http://example.org/p", "x", 1, &[])], &provider, 1)
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.vidx");
        index.save(&path).unwrap();
        let loaded: VectorIndex<ItemRecord> = load_vector_index(&path).unwrap();
        assert_eq!(loaded.len(), 1);
    }
}
