//! Bottom-up bulk-loaded B+-tree over one projection's sorted hash values.
//!
//! Page file (`.qt`): a header page `[i32 page_size][i32 node_count]` padded
//! with zeros, then every leaf page left to right, then the index levels
//! bottom-up. Each node occupies exactly one page:
//!
//! * leaf: `[i32 kind=0][i32 count][f64 min][f64 max]` + `count` i32 ids
//! * index: `[i32 kind=1][i32 count][i32 level][i32 first_child_page]` + `count` f64 keys
//!
//! so a 4096-byte page holds 1018 leaf entries or 510 index entries. The
//! per-entry hash values live in a sidecar (`.qv`): `[i64 count]` followed by
//! the f64 values in leaf order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::vector::PointId;

pub const LEAF_HEADER_BYTES: usize = 24;
pub const INDEX_HEADER_BYTES: usize = 16;

const KIND_LEAF: i32 = 0;
const KIND_INDEX: i32 = 1;

/// `(leaf_capacity, index_capacity)` for a page size.
pub fn capacities(page_size: usize) -> Result<(usize, usize)> {
    if page_size > i32::MAX as usize {
        return Err(Error::invalid(format!("page size {page_size} too large")));
    }
    let leaf = page_size.saturating_sub(LEAF_HEADER_BYTES) / 4;
    let index = page_size.saturating_sub(INDEX_HEADER_BYTES) / 8;
    if leaf < 2 || index < 2 {
        return Err(Error::invalid(format!("page size {page_size} holds fewer than two entries per node")));
    }
    Ok((leaf, index))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Leaf {
    pub values: Vec<f64>,
    pub ids: Vec<PointId>,
}

impl Leaf {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Keys are the minimum hash value under each child; children are the
/// `keys.len()` consecutive nodes of the level below starting at `first_child`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexNode {
    pub keys: Vec<f64>,
    pub first_child: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QalshTree {
    page_size: usize,
    leaf_capacity: usize,
    index_capacity: usize,
    leaves: Vec<Leaf>,
    /// `levels[0]` indexes the leaves; the last level is the single root.
    levels: Vec<Vec<IndexNode>>,
}

fn pair_order(a: &(f64, PointId), b: &(f64, PointId)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Sorts `(hash, id)` pairs into tree order.
pub fn sort_pairs(pairs: &mut [(f64, PointId)]) {
    pairs.sort_unstable_by(pair_order);
}

impl QalshTree {
    pub fn empty(page_size: usize) -> Result<Self> {
        let (leaf_capacity, index_capacity) = capacities(page_size)?;
        Ok(QalshTree {
            page_size,
            leaf_capacity,
            index_capacity,
            leaves: Vec::new(),
            levels: Vec::new(),
        })
    }

    /// Packs sorted pairs into full leaves and builds index levels until one
    /// node remains.
    pub fn build(pairs: &[(f64, PointId)], page_size: usize) -> Result<Self> {
        if let Some(bad) = pairs.iter().find(|p| !p.0.is_finite()) {
            return Err(Error::invalid(format!("non-finite hash value for id {}", bad.1)));
        }
        if pairs.windows(2).any(|w| pair_order(&w[0], &w[1]).is_gt()) {
            return Err(Error::invalid("pairs must be sorted by hash value, then id"));
        }
        let mut tree = QalshTree::empty(page_size)?;
        tree.leaves = pairs
            .chunks(tree.leaf_capacity)
            .map(|chunk| Leaf {
                values: chunk.iter().map(|p| p.0).collect(),
                ids: chunk.iter().map(|p| p.1).collect(),
            })
            .collect();
        tree.build_levels();
        Ok(tree)
    }

    fn build_levels(&mut self) {
        self.levels.clear();
        if self.leaves.len() <= 1 {
            return;
        }
        let mut keys: Vec<f64> = self.leaves.iter().map(Leaf::min).collect();
        loop {
            let level: Vec<IndexNode> = keys
                .chunks(self.index_capacity)
                .enumerate()
                .map(|(i, chunk)| IndexNode {
                    keys: chunk.to_vec(),
                    first_child: i * self.index_capacity,
                })
                .collect();
            keys = level.iter().map(|n| n.keys[0]).collect();
            let done = level.len() == 1;
            self.levels.push(level);
            if done {
                break;
            }
        }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn index_capacity(&self) -> usize {
        self.index_capacity
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn levels(&self) -> &[Vec<IndexNode>] {
        &self.levels
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn index_node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Index nodes excluding the root.
    pub fn non_root_index_nodes(&self) -> usize {
        self.index_node_count().saturating_sub(1)
    }

    pub fn node_count(&self) -> usize {
        self.leaf_count() + self.index_node_count()
    }

    /// Number of index pages on a root-to-leaf path.
    pub fn height(&self) -> usize {
        self.levels.len()
    }

    pub fn len(&self) -> usize {
        self.leaves.iter().map(Leaf::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// All `(hash, id)` pairs in order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, PointId)> + '_ {
        self.leaves
            .iter()
            .flat_map(|l| l.values.iter().copied().zip(l.ids.iter().copied()))
    }

    #[inline]
    pub(crate) fn leaf_of(&self, g: usize) -> usize {
        (g / self.leaf_capacity).min(self.leaves.len().saturating_sub(1))
    }

    pub(crate) fn global(&self, leaf: usize, pos: usize) -> usize {
        leaf * self.leaf_capacity + pos
    }

    /// First global position whose value satisfies `!pred`, values being
    /// partitioned by `pred`.
    pub(crate) fn partition_point(&self, pred: impl Fn(f64) -> bool) -> usize {
        let leaf = self.leaves.partition_point(|l| pred(l.max()));
        if leaf == self.leaves.len() {
            return self.len();
        }
        self.global(leaf, self.leaves[leaf].values.partition_point(|&v| pred(v)))
    }

    /// Root-to-leaf descent; `visit` receives the page number of every index
    /// node read. Returns the last leaf whose key is below `hval`, or the
    /// first leaf.
    pub(crate) fn descend(&self, hval: f64, mut visit: impl FnMut(usize)) -> usize {
        let Some(root) = self.levels.last() else {
            return 0;
        };
        let mut node = &root[0];
        let mut level = self.levels.len() - 1;
        visit(self.index_page(level, 0));
        loop {
            let slot = node.keys.partition_point(|&k| k < hval).saturating_sub(1);
            let child = node.first_child + slot;
            if level == 0 {
                return child;
            }
            level -= 1;
            node = &self.levels[level][child];
            visit(self.index_page(level, child));
        }
    }

    /// Leaf and in-leaf position of the first entry `>= hval`. Values above
    /// the maximum map to the last leaf at position `len`.
    pub fn locate_leaf(&self, hval: f64) -> Result<(usize, usize)> {
        if self.is_empty() {
            return Err(Error::invalid("cannot locate a value in an empty tree"));
        }
        Ok(self.locate_with(hval, |_| ()))
    }

    pub(crate) fn locate_with(&self, hval: f64, visit: impl FnMut(usize)) -> (usize, usize) {
        let leaf = self.descend(hval, visit);
        let pos = self.leaves[leaf].values.partition_point(|&v| v < hval);
        if pos == self.leaves[leaf].len() && leaf + 1 < self.leaves.len() {
            (leaf + 1, 0)
        } else {
            (leaf, pos)
        }
    }

    pub fn leaf_page(&self, leaf: usize) -> usize {
        1 + leaf
    }

    pub fn index_page(&self, level: usize, node: usize) -> usize {
        1 + self.leaves.len() + self.levels[..level].iter().map(Vec::len).sum::<usize>() + node
    }

    fn encode(&self) -> Vec<u8> {
        let ps = self.page_size;
        let mut buf = vec![0u8; ps * (1 + self.node_count())];
        buf[0..4].copy_from_slice(&(ps as i32).to_le_bytes());
        buf[4..8].copy_from_slice(&(self.node_count() as i32).to_le_bytes());
        for (j, leaf) in self.leaves.iter().enumerate() {
            let page = &mut buf[self.leaf_page(j) * ps..][..ps];
            page[0..4].copy_from_slice(&KIND_LEAF.to_le_bytes());
            page[4..8].copy_from_slice(&(leaf.len() as i32).to_le_bytes());
            page[8..16].copy_from_slice(&leaf.min().to_le_bytes());
            page[16..24].copy_from_slice(&leaf.max().to_le_bytes());
            for (e, &id) in leaf.ids.iter().enumerate() {
                let at = LEAF_HEADER_BYTES + 4 * e;
                page[at..at + 4].copy_from_slice(&(id as i32).to_le_bytes());
            }
        }
        for (level, nodes) in self.levels.iter().enumerate() {
            for (i, node) in nodes.iter().enumerate() {
                let child_page = if level == 0 {
                    self.leaf_page(node.first_child)
                } else {
                    self.index_page(level - 1, node.first_child)
                };
                let page = &mut buf[self.index_page(level, i) * ps..][..ps];
                page[0..4].copy_from_slice(&KIND_INDEX.to_le_bytes());
                page[4..8].copy_from_slice(&(node.keys.len() as i32).to_le_bytes());
                page[8..12].copy_from_slice(&(level as i32).to_le_bytes());
                page[12..16].copy_from_slice(&(child_page as i32).to_le_bytes());
                for (e, key) in node.keys.iter().enumerate() {
                    let at = INDEX_HEADER_BYTES + 8 * e;
                    page[at..at + 8].copy_from_slice(&key.to_le_bytes());
                }
            }
        }
        buf
    }

    /// Writes the page file at `path` and the value sidecar next to it.
    pub fn persist(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))?;
        let side = values_path(path);
        let mut buf = Vec::with_capacity(8 + 8 * self.len());
        buf.extend((self.len() as i64).to_le_bytes());
        for (v, _) in self.pairs() {
            buf.extend(v.to_le_bytes());
        }
        fs::write(&side, buf).map_err(|e| Error::io(side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = values_path(path);
        let values = fs::read(&side).map_err(|e| Error::io(&side, e))?;
        Self::decode(path, &bytes, &side, &values)
    }

    fn decode(path: &Path, bytes: &[u8], side: &Path, raw_values: &[u8]) -> Result<Self> {
        let corrupt = |page: usize, reason: String| Error::CorruptPage {
            path: path.to_path_buf(),
            page,
            reason,
        };
        if bytes.len() < 8 {
            return Err(corrupt(0, "header page truncated".into()));
        }
        let i32_at = |at: usize| i32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let f64_at = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let ps = i32_at(0);
        let nodes = i32_at(4);
        if ps <= 0 || nodes < 0 {
            return Err(corrupt(0, format!("bad header page_size={ps} node_count={nodes}")));
        }
        let (ps, nodes) = (ps as usize, nodes as usize);
        let mut tree = QalshTree::empty(ps).map_err(|e| corrupt(0, e.to_string()))?;
        if bytes.len() != ps * (1 + nodes) {
            return Err(corrupt(0, format!("file holds {} bytes, header implies {}", bytes.len(), ps * (1 + nodes))));
        }
        if bytes[8..ps].iter().any(|&b| b != 0) {
            return Err(corrupt(0, "header padding is not zero".into()));
        }

        if raw_values.len() < 8 {
            return Err(Error::format(side, 0, "missing value count"));
        }
        let total = i64::from_le_bytes(raw_values[0..8].try_into().unwrap());
        if total < 0 || raw_values.len() != 8 + 8 * total as usize {
            return Err(Error::format(side, 0, format!("value count {total} disagrees with file size")));
        }
        let mut values = raw_values[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));

        let mut page = 1;
        let mut seen = 0usize;
        while page <= nodes && i32_at(page * ps) == KIND_LEAF {
            let at = page * ps;
            let count = i32_at(at + 4);
            if count <= 0 || count as usize > tree.leaf_capacity {
                return Err(corrupt(page, format!("leaf entry count {count}")));
            }
            let count = count as usize;
            if let Some(prev) = tree.leaves.last() {
                if prev.len() != tree.leaf_capacity {
                    return Err(corrupt(page, "only the last leaf may be partial".into()));
                }
            }
            let ids: Vec<PointId> = (0..count)
                .map(|e| i32_at(at + LEAF_HEADER_BYTES + 4 * e) as PointId)
                .collect();
            let leaf_values: Vec<f64> = values.by_ref().take(count).collect();
            seen += count;
            if leaf_values.len() != count {
                return Err(Error::format(side, 8, "fewer values than leaf entries"));
            }
            let leaf = Leaf { values: leaf_values, ids };
            if leaf.min() != f64_at(at + 8) || leaf.max() != f64_at(at + 16) {
                return Err(corrupt(page, "min/max disagree with the value sidecar".into()));
            }
            if bytes[at + LEAF_HEADER_BYTES + 4 * count..at + ps].iter().any(|&b| b != 0) {
                return Err(corrupt(page, "leaf padding is not zero".into()));
            }
            tree.leaves.push(leaf);
            page += 1;
        }
        if seen != total as usize {
            return Err(Error::format(side, 0, format!("{total} values for {seen} leaf entries")));
        }
        let sorted = tree.pairs().collect::<Vec<_>>();
        if sorted.windows(2).any(|w| pair_order(&w[0], &w[1]).is_gt()) {
            return Err(corrupt(1, "leaf entries are not in ascending order".into()));
        }

        // Index pages are fully determined by the leaves; rebuild and compare.
        tree.build_levels();
        let expected = tree.encode();
        for p in page..=nodes {
            if p >= 1 + tree.node_count() {
                return Err(corrupt(p, "unexpected page beyond the index levels".into()));
            }
            if bytes[p * ps..(p + 1) * ps] != expected[p * ps..(p + 1) * ps] {
                return Err(corrupt(p, "index page inconsistent with leaf keys".into()));
            }
        }
        if tree.node_count() != nodes {
            return Err(corrupt(0, format!("header claims {nodes} nodes, tree has {}", tree.node_count())));
        }
        Ok(tree)
    }
}

/// The `.qv` sidecar next to a `.qt` file.
pub fn values_path(tree_path: &Path) -> PathBuf {
    tree_path.with_extension("qv")
}
