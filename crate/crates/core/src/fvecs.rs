//! fvecs / ivecs files: repeated `[i32 dim][dim x 4-byte value]`, little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{Dataset, GroundTruth, Neighbor};

fn parse_records<'a>(path: &Path, bytes: &'a [u8]) -> Result<(usize, Vec<&'a [u8]>)> {
    let mut records = Vec::new();
    let mut dim = 0usize;
    let mut off = 0usize;
    while off < bytes.len() {
        if bytes.len() - off < 4 {
            return Err(Error::format(path, off as u64, "truncated dimension header"));
        }
        let d = i32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::format(path, off as u64, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        if records.is_empty() {
            dim = d;
        } else if d != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: d,
            });
        }
        let body = off + 4;
        let end = body + 4 * d;
        if end > bytes.len() {
            return Err(Error::format(
                path,
                body as u64,
                format!("truncated record: need {} bytes, {} left", 4 * d, bytes.len() - body),
            ));
        }
        records.push(&bytes[body..end]);
        off = end;
    }
    Ok((dim, records))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_fvecs<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let (dim, records) = parse_records(path, &bytes)?;
    let mut ds = Dataset::new(dim);
    let mut row = Vec::with_capacity(dim);
    for rec in records {
        row.clear();
        row.extend(
            rec.chunks_exact(4)
                .map(|c| T::widen_f32(f32::from_le_bytes(c.try_into().unwrap()))),
        );
        ds.push(&row)?;
    }
    Ok(ds)
}

/// Writes `data` as fvecs. `f64` coordinates are narrowed to `f32`.
pub fn write_fvecs<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let rows = data
        .iter()
        .map(|(_, c)| c.iter().map(|v| v.to_f32_lossy().to_le_bytes()));
    write_rows(path.as_ref(), data.dim(), rows)
}

fn write_rows<I, R>(path: &Path, dim: usize, rows: I) -> Result<()>
where
    I: Iterator<Item = R>,
    R: Iterator<Item = [u8; 4]>,
{
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = (dim as i32).to_le_bytes();
    for row in rows {
        w.write_all(&header).map_err(|e| Error::io(path, e))?;
        for v in row {
            w.write_all(&v).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let (_, records) = parse_records(path, &bytes)?;
    Ok(records
        .into_iter()
        .map(|r| {
            r.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
        .collect())
}

pub fn write_ivecs(rows: &[Vec<i32>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::invalid("ivecs rows must share one length"));
    }
    write_rows(path, dim, rows.iter().map(|r| r.iter().map(|v| v.to_le_bytes())))
}

/// Persists ground truth as an ivecs id file plus an fvecs distance file.
pub fn write_ground_truth(gt: &GroundTruth, ids_path: impl AsRef<Path>, dist_path: impl AsRef<Path>) -> Result<()> {
    let ids: Vec<Vec<i32>> = gt
        .rows
        .iter()
        .map(|r| r.iter().map(|n| n.id as i32).collect())
        .collect();
    write_ivecs(&ids, ids_path)?;
    let dist = Dataset::<f32>::from_rows(
        gt.k(),
        gt.rows
            .iter()
            .map(|r| r.iter().map(|n| n.distance as f32).collect::<Vec<_>>()),
    )?;
    write_fvecs(&dist, dist_path)
}

/// Reads ground truth written by [`write_ground_truth`]; distances come back as `f32` precision.
pub fn load_ground_truth(ids_path: impl AsRef<Path>, dist_path: impl AsRef<Path>) -> Result<GroundTruth> {
    let ids = load_ivecs(ids_path)?;
    let dist: Dataset<f32> = load_fvecs(dist_path)?;
    if dist.len() != ids.len() {
        return Err(Error::invalid(format!(
            "ground truth files disagree: {} id rows, {} distance rows",
            ids.len(),
            dist.len()
        )));
    }
    let rows = ids
        .iter()
        .zip(dist.iter())
        .map(|(ir, (_, dr))| {
            ir.iter()
                .zip(dr)
                .map(|(&id, &d)| Neighbor {
                    id: id as u32,
                    distance: d as f64,
                })
                .collect()
        })
        .collect();
    Ok(GroundTruth { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.fvecs");
        let ds = Dataset::from_rows(2, [[3.0f32, 4.0]]).unwrap();
        write_fvecs(&ds, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 12);
        assert_eq!(&bytes[..4], &[2, 0, 0, 0]);
        assert_eq!(&bytes[4..8], &3.0f32.to_le_bytes());
        assert_eq!(&bytes[8..], &4.0f32.to_le_bytes());
        let back: Dataset<f32> = load_fvecs(&p).unwrap();
        assert_eq!(back.dim(), 2);
        assert_eq!(back.len(), 1);
        assert_eq!(back.point(0), &[3.0, 4.0]);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.fvecs");
        write_fvecs(&Dataset::<f32>::new(0), &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 0);
        let back: Dataset<f32> = load_fvecs(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 0);
    }

    #[test]
    fn truncated_record_names_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.fvecs");
        let mut bytes = 2i32.to_le_bytes().to_vec();
        bytes.extend(1.0f32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        match load_fvecs::<f32>(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mixed.fvecs");
        let mut bytes = 1i32.to_le_bytes().to_vec();
        bytes.extend(1.0f32.to_le_bytes());
        bytes.extend(2i32.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        bytes.extend(1.0f32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(
            load_fvecs::<f32>(&p),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn ground_truth_files() {
        let dir = tempfile::tempdir().unwrap();
        let gt = GroundTruth {
            rows: vec![
                vec![Neighbor { id: 0, distance: 0.0 }, Neighbor { id: 5, distance: 1.5 }],
                vec![Neighbor { id: 1, distance: 0.0 }, Neighbor { id: 2, distance: 2.25 }],
            ],
        };
        let (i, d) = (dir.path().join("gt.ivecs"), dir.path().join("gt.fvecs"));
        write_ground_truth(&gt, &i, &d).unwrap();
        assert_eq!(load_ground_truth(&i, &d).unwrap(), gt);
    }
}
