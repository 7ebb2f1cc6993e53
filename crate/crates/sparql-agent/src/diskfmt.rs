//! Shared plumbing for the binary index files.
//!
//! Both index formats open with four magic bytes and a little-endian
//! u32 version; everything after that is format-specific. Readers go
//! through the bounds-checked accessors here so a truncated or corrupt
//! file surfaces as an error instead of a panic.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// The file does not start with the expected magic bytes.
    #[error("not an index file: expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported index version {found} (this build reads {expected})")]
    BadVersion { expected: u32, found: u32 },
    /// Structurally invalid contents: an offset or length points outside
    /// the file, or a string section is not UTF-8.
    #[error("corrupt index file: {0}")]
    Corrupt(String),
}

pub fn corrupt(what: impl Into<String>) -> IndexFileError {
    IndexFileError::Corrupt(what.into())
}

/// Where the index built from a data file lives: the same path with
/// `suffix` appended to the file name (`entities.tsv` -> `entities.tsv.kwix`).
pub fn sibling_path(path: &std::path::Path, suffix: &str) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

pub fn check_magic_version(
    bytes: &[u8],
    magic: &[u8; 4],
    version: u32,
) -> Result<(), IndexFileError> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(IndexFileError::BadMagic {
            expected: *magic,
            found: bytes.get(..4).unwrap_or(bytes).to_vec(),
        });
    }
    let found = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if found != version {
        return Err(IndexFileError::BadVersion {
            expected: version,
            found,
        });
    }
    Ok(())
}

pub fn read_u32(bytes: &[u8], at: usize) -> Result<u32, IndexFileError> {
    let end = at
        .checked_add(4)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(format!("u32 read at {at} past end of file")))?;
    Ok(u32::from_le_bytes(bytes[at..end].try_into().expect("4 bytes")))
}

pub fn read_u64(bytes: &[u8], at: usize) -> Result<u64, IndexFileError> {
    let end = at
        .checked_add(8)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(format!("u64 read at {at} past end of file")))?;
    Ok(u64::from_le_bytes(bytes[at..end].try_into().expect("8 bytes")))
}

pub fn slice<'a>(bytes: &'a [u8], at: usize, len: usize) -> Result<&'a [u8], IndexFileError> {
    at.checked_add(len)
        .filter(|&end| end <= bytes.len())
        .map(|end| &bytes[at..end])
        .ok_or_else(|| corrupt(format!("range {at}+{len} past end of file")))
}

pub fn str_at<'a>(bytes: &'a [u8], at: usize, len: usize) -> Result<&'a str, IndexFileError> {
    std::str::from_utf8(slice(bytes, at, len)?)
        .map_err(|_| corrupt(format!("string at {at}+{len} is not UTF-8")))
}

/// Append helpers used by the writers. Offsets are recorded as the
/// position before the write.
pub struct SectionWriter {
    pub out: Vec<u8>,
}

impl SectionWriter {
    pub fn new() -> Self {
        SectionWriter { out: Vec::new() }
    }

    pub fn pos(&self) -> u64 {
        self.out.len() as u64
    }

    pub fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.out.extend_from_slice(v);
    }

    /// Overwrite a u64 placeholder written earlier.
    pub fn patch_u64(&mut self, at: usize, v: u64) {
        self.out[at..at + 8].copy_from_slice(&v.to_le_bytes());
    }
}
