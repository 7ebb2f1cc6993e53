//! On-disk layout of the keyword index.
//!
//! The file carries the same token dictionary and postings as the
//! in-memory form, laid out for memory-mapped binary search: fixed-width
//! token and item tables pointing into a shared string heap. A reader
//! never materializes the index; rankings are byte-for-byte identical to
//! the in-memory implementation because both run the same scoring core.

use std::collections::HashSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::catalog::{ItemKind, ItemRecord};
use crate::diskfmt::{
    check_magic_version, corrupt, read_u32, read_u64, str_at, IndexFileError, SectionWriter,
};

use super::{run_search, KeywordIndex, KeywordSearch, PostingsSource, SearchResponse, POSTING_CAP};

const MAGIC: &[u8; 4] = b"KWIX";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 72;
const ITEM_RECORD_LEN: usize = 40;
const TOKEN_RECORD_LEN: usize = 16;
/// Joins list fields inside the string heap; tab-separated sources can
/// never contain it.
const LIST_SEP: char = '\u{1f}';

impl KeywordIndex {
    /// Serialize for [`KeywordIndexDisk`]. The write goes through a
    /// temporary sibling file and a rename, so a crash never leaves a
    /// half-written index behind.
    pub fn save(&self, path: &Path) -> Result<(), IndexFileError> {
        let (items, tokens, postings) = self.token_sections();

        let mut strings = SectionWriter::new();
        let intern = |s: &str, strings: &mut SectionWriter| -> Result<(u32, u32), IndexFileError> {
            let off = strings.pos();
            if off + s.len() as u64 > u32::MAX as u64 {
                return Err(corrupt("string heap exceeds 4 GiB"));
            }
            strings.bytes(s.as_bytes());
            Ok((off as u32, s.len() as u32))
        };

        let mut item_table = SectionWriter::new();
        for item in items {
            let (iri_off, iri_len) = intern(&item.iri, &mut strings)?;
            let (label_off, label_len) = intern(&item.label, &mut strings)?;
            let joined_syn = item.synonyms.join(&LIST_SEP.to_string());
            let (syn_off, syn_len) = intern(&joined_syn, &mut strings)?;
            let joined_infos = item.infos.join(&LIST_SEP.to_string());
            let (infos_off, infos_len) = intern(&joined_infos, &mut strings)?;
            for v in [
                iri_off, iri_len, label_off, label_len, syn_off, syn_len, infos_off, infos_len,
                item.score,
                match item.kind {
                    ItemKind::Entity => 0,
                    ItemKind::Property => 1,
                },
            ] {
                item_table.u32(v);
            }
        }

        let mut token_table = SectionWriter::new();
        let mut postings_out = SectionWriter::new();
        let mut postings_count: u64 = 0;
        for (token, list) in tokens.iter().zip(postings) {
            let (str_off, str_len) = intern(token, &mut strings)?;
            token_table.u32(str_off);
            token_table.u32(str_len);
            token_table.u32(postings_count as u32);
            token_table.u32(list.len() as u32);
            for &(item, alias) in list {
                postings_out.u32(item);
                postings_out.u32(alias);
            }
            postings_count += list.len() as u64;
        }
        if postings_count > u32::MAX as u64 {
            return Err(corrupt("more than 4G postings"));
        }

        let mut iri_sort: Vec<u32> = (0..items.len() as u32).collect();
        iri_sort.sort_unstable_by(|&a, &b| items[a as usize].iri.cmp(&items[b as usize].iri));

        let mut out = SectionWriter::new();
        out.bytes(MAGIC);
        out.u32(VERSION);
        out.u32(items.len() as u32);
        out.u32(tokens.len() as u32);
        let offsets_at = out.out.len();
        for _ in 0..7 {
            out.u64(0);
        }
        debug_assert_eq!(out.out.len(), HEADER_LEN);

        let item_table_off = out.pos();
        out.bytes(&item_table.out);
        let token_table_off = out.pos();
        out.bytes(&token_table.out);
        let postings_off = out.pos();
        out.bytes(&postings_out.out);
        let iri_sort_off = out.pos();
        for id in &iri_sort {
            out.u32(*id);
        }
        let strings_off = out.pos();
        out.bytes(&strings.out);
        let strings_len = strings.out.len() as u64;

        for (slot, value) in [
            item_table_off,
            token_table_off,
            postings_off,
            postings_count,
            iri_sort_off,
            strings_off,
            strings_len,
        ]
        .into_iter()
        .enumerate()
        {
            out.patch_u64(offsets_at + slot * 8, value);
        }

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

pub struct KeywordIndexDisk {
    map: memmap2::Mmap,
    n_items: usize,
    n_tokens: usize,
    item_table: usize,
    token_table: usize,
    postings: usize,
    iri_sort: usize,
    posting_cap: usize,
}

impl KeywordIndexDisk {
    /// Memory-map an index written by [`KeywordIndex::save`]. Every
    /// offset and string in the file is validated here; accessors after
    /// a successful open cannot go out of bounds.
    pub fn open(path: &Path) -> Result<Self, IndexFileError> {
        let file = File::open(path)?;
        // Safety: the map is read-only and index files are replaced by
        // rename, never rewritten in place.
        let map = unsafe { memmap2::Mmap::map(&file)? };
        check_magic_version(&map, MAGIC, VERSION)?;
        if map.len() < HEADER_LEN {
            return Err(corrupt("file shorter than its header"));
        }
        let n_items = read_u32(&map, 8)? as usize;
        let n_tokens = read_u32(&map, 12)? as usize;
        let item_table = read_u64(&map, 16)? as usize;
        let token_table = read_u64(&map, 24)? as usize;
        let postings = read_u64(&map, 32)? as usize;
        let postings_count = read_u64(&map, 40)? as usize;
        let iri_sort = read_u64(&map, 48)? as usize;
        let strings_off = read_u64(&map, 56)? as usize;
        let strings_len = read_u64(&map, 64)? as usize;

        let extent = |off: usize, len: usize, what: &str| -> Result<(), IndexFileError> {
            off.checked_add(len)
                .filter(|&end| end <= map.len())
                .map(|_| ())
                .ok_or_else(|| corrupt(format!("{what} section out of bounds")))
        };
        extent(item_table, n_items * ITEM_RECORD_LEN, "item table")?;
        extent(token_table, n_tokens * TOKEN_RECORD_LEN, "token table")?;
        extent(postings, postings_count * 8, "postings")?;
        extent(iri_sort, n_items * 4, "iri order")?;
        extent(strings_off, strings_len, "string heap")?;

        let check_str = |off: u32, len: u32, what: &str| -> Result<(), IndexFileError> {
            let at = strings_off + off as usize;
            if off as usize + len as usize > strings_len {
                return Err(corrupt(format!("{what} string outside the heap")));
            }
            str_at(&map, at, len as usize)
                .map(|_| ())
                .map_err(|_| corrupt(format!("{what} string is not UTF-8")))
        };
        for i in 0..n_items {
            let rec = item_table + i * ITEM_RECORD_LEN;
            for (field, name) in [(0, "iri"), (8, "label"), (16, "synonyms"), (24, "infos")] {
                check_str(read_u32(&map, rec + field)?, read_u32(&map, rec + field + 4)?, name)?;
            }
            if read_u32(&map, rec + 36)? > 1 {
                return Err(corrupt(format!("item {i} has an unknown kind tag")));
            }
        }
        for t in 0..n_tokens {
            let rec = token_table + t * TOKEN_RECORD_LEN;
            check_str(read_u32(&map, rec)?, read_u32(&map, rec + 4)?, "token")?;
            let start = read_u32(&map, rec + 8)? as usize;
            let len = read_u32(&map, rec + 12)? as usize;
            if start + len > postings_count {
                return Err(corrupt(format!("token {t} postings out of range")));
            }
        }
        for p in 0..postings_count {
            if read_u32(&map, postings + p * 8)? as usize >= n_items {
                return Err(corrupt(format!("posting {p} names a missing item")));
            }
        }
        for i in 0..n_items {
            if read_u32(&map, iri_sort + i * 4)? as usize >= n_items {
                return Err(corrupt("iri order names a missing item"));
            }
        }

        Ok(KeywordIndexDisk {
            map,
            n_items,
            n_tokens,
            item_table,
            token_table,
            postings,
            iri_sort,
            posting_cap: POSTING_CAP,
        })
    }

    pub fn with_posting_cap(mut self, cap: usize) -> Self {
        self.posting_cap = cap;
        self
    }

    fn heap_str(&self, off: u32, len: u32) -> &str {
        let strings_off = read_u64(&self.map, 56).expect("validated header") as usize;
        str_at(&self.map, strings_off + off as usize, len as usize).expect("validated at open")
    }

    fn item_field(&self, id: u32, field: usize) -> &str {
        let rec = self.item_table + id as usize * ITEM_RECORD_LEN;
        self.heap_str(
            read_u32(&self.map, rec + field).expect("validated at open"),
            read_u32(&self.map, rec + field + 4).expect("validated at open"),
        )
    }

    fn token_str(&self, t: usize) -> &str {
        let rec = self.token_table + t * TOKEN_RECORD_LEN;
        self.heap_str(
            read_u32(&self.map, rec).expect("validated at open"),
            read_u32(&self.map, rec + 4).expect("validated at open"),
        )
    }

    fn split_list(joined: &str) -> Vec<String> {
        if joined.is_empty() {
            Vec::new()
        } else {
            joined.split(LIST_SEP).map(str::to_string).collect()
        }
    }
}

impl PostingsSource for KeywordIndexDisk {
    fn scan_prefix(&self, prefix: &str, visit: &mut dyn FnMut(bool, u32, u32) -> bool) {
        let mut lo = 0usize;
        let mut hi = self.n_tokens;
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.token_str(mid) < prefix {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        for t in lo..self.n_tokens {
            let token = self.token_str(t);
            if !token.starts_with(prefix) {
                break;
            }
            let exact = token == prefix;
            let rec = self.token_table + t * TOKEN_RECORD_LEN;
            let start = read_u32(&self.map, rec + 8).expect("validated at open") as usize;
            let len = read_u32(&self.map, rec + 12).expect("validated at open") as usize;
            for p in start..start + len {
                let at = self.postings + p * 8;
                let item = read_u32(&self.map, at).expect("validated at open");
                let alias = read_u32(&self.map, at + 4).expect("validated at open");
                if !visit(exact, item, alias) {
                    return;
                }
            }
        }
    }

    fn item_score(&self, id: u32) -> u32 {
        let rec = self.item_table + id as usize * ITEM_RECORD_LEN;
        read_u32(&self.map, rec + 32).expect("validated at open")
    }

    fn item_iri(&self, id: u32) -> &str {
        self.item_field(id, 0)
    }

    fn item_record(&self, id: u32) -> ItemRecord {
        let rec = self.item_table + id as usize * ITEM_RECORD_LEN;
        let kind = match read_u32(&self.map, rec + 36).expect("validated at open") {
            0 => ItemKind::Entity,
            _ => ItemKind::Property,
        };
        ItemRecord {
            iri: self.item_field(id, 0).to_string(),
            label: self.item_field(id, 8).to_string(),
            synonyms: Self::split_list(self.item_field(id, 16)),
            infos: Self::split_list(self.item_field(id, 24)),
            score: self.item_score(id),
            kind,
        }
    }

    fn resolve_iri(&self, iri: &str) -> Option<u32> {
        let mut lo = 0usize;
        let mut hi = self.n_items;
        while lo < hi {
            let mid = (lo + hi) / 2;
            let id = read_u32(&self.map, self.iri_sort + mid * 4).expect("validated at open");
            match self.item_iri(id).cmp(iri) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(id),
            }
        }
        None
    }
}

impl KeywordSearch for KeywordIndexDisk {
    fn search(
        &self,
        query: &str,
        k: usize,
        restrict_to: Option<&HashSet<String>>,
    ) -> SearchResponse {
        run_search(self, query, k, restrict_to, self.posting_cap)
    }

    fn len(&self) -> usize {
        self.n_items
    }

    fn item_by_iri(&self, iri: &str) -> Option<ItemRecord> {
        self.resolve_iri(iri).map(|id| self.item_record(id))
    }
}
