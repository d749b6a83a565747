//! One C2LSH projection file.
//!
//! Layout, little-endian: `[i32 bucket_count]`, then `bucket_count` pairs of
//! `[i32 bucket_number][i32 offset]` ascending by bucket, then the payload of
//! `i32` ids. Offsets count ids from the start of the payload; a bucket's ids
//! run up to the next bucket's offset (or the end of the payload).

use std::fs;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io_stats::IoStats;
use crate::vector::PointId;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct C2lshProjectionFile {
    directory: Vec<(i32, u32)>,
    payload: Vec<PointId>,
}

impl C2lshProjectionFile {
    /// Groups `(bucket, id)` pairs, which must be sorted, into runs.
    pub fn from_sorted_pairs(pairs: &[(i32, PointId)]) -> Result<Self> {
        if pairs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("bucket pairs must be strictly ascending"));
        }
        let mut directory = Vec::new();
        let mut payload = Vec::with_capacity(pairs.len());
        for (i, &(bucket, id)) in pairs.iter().enumerate() {
            if i == 0 || pairs[i - 1].0 != bucket {
                directory.push((bucket, i as u32));
            }
            payload.push(id);
        }
        Ok(C2lshProjectionFile { directory, payload })
    }

    pub fn bucket_count(&self) -> usize {
        self.directory.len()
    }

    pub fn directory(&self) -> &[(i32, u32)] {
        &self.directory
    }

    pub fn payload(&self) -> &[PointId] {
        &self.payload
    }

    pub fn len(&self) -> usize {
        self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }

    /// Smallest and largest bucket numbers present.
    pub fn bounds(&self) -> Option<(i64, i64)> {
        Some((
            self.directory.first()?.0 as i64,
            self.directory.last()?.0 as i64,
        ))
    }

    fn offset(&self, entry: usize) -> usize {
        self.directory
            .get(entry)
            .map_or(self.payload.len(), |&(_, off)| off as usize)
    }

    /// Payload index range of the buckets numbered in `[lo, hi]`.
    pub fn span(&self, lo: i64, hi: i64) -> Range<usize> {
        let first = self.directory.partition_point(|&(b, _)| (b as i64) < lo);
        let last = self.directory.partition_point(|&(b, _)| (b as i64) <= hi);
        if first >= last {
            let at = self.offset(first);
            return at..at;
        }
        self.offset(first)..self.offset(last)
    }

    /// Ids of every bucket numbered in `[lo, hi]`, located through the
    /// directory. Touching a nonempty span costs one seek.
    pub fn read_bucket_range(&self, lo: i64, hi: i64, io: &mut IoStats) -> Result<&[PointId]> {
        if lo > hi {
            return Err(Error::invalid(format!("empty bucket range [{lo}, {hi}]")));
        }
        let span = self.span(lo, hi);
        if !span.is_empty() {
            io.record(4 * span.len() as u64);
        }
        Ok(&self.payload[span])
    }

    pub fn bucket(&self, bucket: i32) -> &[PointId] {
        let span = self.span(bucket as i64, bucket as i64);
        &self.payload[span]
    }

    /// `(bucket, id)` pairs in file order.
    pub fn pairs(&self) -> impl Iterator<Item = (i32, PointId)> + '_ {
        (0..self.directory.len()).flat_map(move |e| {
            let bucket = self.directory[e].0;
            self.payload[self.offset(e)..self.offset(e + 1)]
                .iter()
                .map(move |&id| (bucket, id))
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(4 + 8 * self.directory.len() + 4 * self.payload.len());
        buf.extend((self.directory.len() as i32).to_le_bytes());
        for &(bucket, off) in &self.directory {
            buf.extend(bucket.to_le_bytes());
            buf.extend((off as i32).to_le_bytes());
        }
        for &id in &self.payload {
            buf.extend((id as i32).to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let word = |at: usize| i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        if bytes.len() < 4 {
            return Err(Error::format(path, 0, "missing bucket count"));
        }
        let count = word(0);
        if count < 0 {
            return Err(Error::format(path, 0, format!("negative bucket count {count}")));
        }
        let count = count as usize;
        let header = 4 + 8 * count;
        if bytes.len() < header {
            return Err(Error::format(path, bytes.len() as u64, "truncated bucket directory"));
        }
        let body = bytes.len() - header;
        if body % 4 != 0 {
            return Err(Error::format(path, header as u64, "payload is not a whole number of ids"));
        }
        let ids = body / 4;
        let mut directory = Vec::with_capacity(count);
        for e in 0..count {
            let at = 4 + 8 * e;
            let (bucket, off) = (word(at), word(at + 4));
            if off < 0 || off as usize >= ids {
                return Err(Error::format(path, at as u64 + 4, format!("offset {off} outside payload of {ids} ids")));
            }
            if let Some(&(pb, po)) = directory.last() {
                if bucket <= pb || off as u32 <= po {
                    return Err(Error::format(path, at as u64, "directory not strictly ascending"));
                }
            } else if off != 0 {
                return Err(Error::format(path, at as u64 + 4, "first bucket must start at offset 0"));
            }
            directory.push((bucket, off as u32));
        }
        if count == 0 && ids != 0 {
            return Err(Error::format(path, 4, "payload without buckets"));
        }
        let mut payload = Vec::with_capacity(ids);
        for i in 0..ids {
            let v = word(header + 4 * i);
            if v < 0 {
                return Err(Error::format(path, (header + 4 * i) as u64, format!("negative id {v}")));
            }
            payload.push(v as PointId);
        }
        let file = C2lshProjectionFile { directory, payload };
        for e in 0..count {
            let run = &file.payload[file.offset(e)..file.offset(e + 1)];
            if run.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format(path, header as u64, format!("ids of bucket entry {e} not ascending")));
            }
        }
        Ok(file)
    }

    pub fn persist(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }
}
