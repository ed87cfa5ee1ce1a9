//! Tournament trees tracking the largest selection score over every
//! dictionary. Each frame has a tree over its bins; the frame roots of a
//! dictionary feed a partial tree of depth `d`, whose top nodes are scanned
//! linearly.

use std::ops::Range;

use crate::error::{MpError, Result};

/// Level layout of a pairwise reduction: level `j >= 1` holds
/// `ceil(size_{j-1} / 2)` winners, stopping after `depth` levels or at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeShape {
    leaves: usize,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl TreeShape {
    pub fn new(leaves: usize, depth: Option<usize>) -> Self {
        let mut sizes = Vec::new();
        let mut offsets = Vec::new();
        let mut size = leaves;
        let mut total = 0;
        while size > 1 && depth.is_none_or(|d| sizes.len() < d) {
            size = size.div_ceil(2);
            offsets.push(total);
            sizes.push(size);
            total += size;
        }
        TreeShape {
            leaves,
            sizes,
            offsets,
            total,
        }
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn depth(&self) -> usize {
        self.sizes.len()
    }

    /// Number of nodes at level `j` (level 0 is the leaves).
    pub fn size(&self, j: usize) -> usize {
        if j == 0 {
            self.leaves
        } else {
            self.sizes[j - 1]
        }
    }

    pub fn nodes(&self) -> usize {
        self.total
    }
}

/// Depth of the partial tree over `frames` frame roots so that at most 64
/// top nodes remain.
pub fn default_depth(frames: usize) -> usize {
    let mut d = 0;
    while frames > 64 << d {
        d += 1;
    }
    d
}

/// Tournament winner: leaf index and its score, stored together so that
/// refreshing a level never reads back into the leaf array.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Node {
    score: f64,
    index: u32,
}

/// Winner at level `j`, position `i`; level 0 reads the leaves.
#[inline]
fn winner_at(shape: &TreeShape, nodes: &[Node], j: usize, i: usize, leaf: &impl Fn(usize) -> f64) -> Node {
    if j == 0 {
        Node {
            score: leaf(i),
            index: i as u32,
        }
    } else {
        nodes[shape.offsets[j - 1] + i]
    }
}

/// Recomputes levels `1..=depth` over leaves `lo..=hi`; returns the number of
/// comparisons made. Ties keep the lower index.
fn refresh_levels(shape: &TreeShape, nodes: &mut [Node], lo: usize, hi: usize, leaf: impl Fn(usize) -> f64) -> u64 {
    let mut count = 0;
    for j in 1..=shape.depth() {
        let below = shape.size(j - 1);
        let base = shape.offsets[j - 1];
        for i in (lo >> j)..=(hi >> j) {
            let l = winner_at(shape, nodes, j - 1, 2 * i, &leaf);
            let w = if 2 * i + 1 < below {
                let r = winner_at(shape, nodes, j - 1, 2 * i + 1, &leaf);
                count += 1;
                if r.score > l.score {
                    r
                } else {
                    l
                }
            } else {
                l
            };
            nodes[base + i] = w;
        }
    }
    count
}

/// Bins per leaf block of a frame tree; a block of scores spans two cache lines.
const BLOCK: usize = 16;

#[derive(Debug, Clone)]
struct DictTrees {
    bins: usize,
    frames: usize,
    scores: Vec<f64>,
    /// Tree over blocks of `BLOCK` bins; per frame, `blocks` block winners
    /// followed by the tree levels.
    blocks: usize,
    bin_shape: TreeShape,
    bin_nodes: Vec<Node>,
    frame_shape: TreeShape,
    frame_nodes: Vec<Node>,
    /// Per-frame winning bin and score, kept compact for the partial tree.
    frame_bin: Vec<u32>,
    frame_max: Vec<f64>,
}

impl DictTrees {
    fn new(bins: usize, frames: usize, scores: Vec<f64>, depth: usize) -> Self {
        let blocks = bins.div_ceil(BLOCK);
        let bin_shape = TreeShape::new(blocks, None);
        let frame_shape = TreeShape::new(frames, Some(depth));
        let mut t = DictTrees {
            bins,
            frames,
            scores,
            blocks,
            bin_nodes: vec![Node::default(); (blocks + bin_shape.nodes()) * frames],
            bin_shape,
            frame_nodes: vec![Node::default(); frame_shape.nodes()],
            frame_shape,
            frame_bin: vec![0; frames],
            frame_max: vec![0.0; frames],
        };
        t.rebuild();
        t
    }

    fn rebuild(&mut self) {
        for n in 0..self.frames {
            self.refresh_frame(n, 0, self.bins - 1);
        }
        self.refresh_partial(0, self.frames - 1);
    }

    /// Issues prefetches for everything `refresh_frame(n, lo, hi)` touches.
    fn prefetch_frame(&self, n: usize, lo: usize, hi: usize) {
        let stride = self.blocks + self.bin_shape.nodes();
        let (blo, bhi) = (lo / BLOCK, hi / BLOCK);
        prefetch(&self.scores[n * self.bins + blo * BLOCK..n * self.bins + ((bhi + 1) * BLOCK).min(self.bins)]);
        let nodes = &self.bin_nodes[n * stride..(n + 1) * stride];
        prefetch(&nodes[blo..=bhi]);
        for j in 1..=self.bin_shape.depth() {
            let base = self.blocks + self.bin_shape.offsets[j - 1];
            prefetch(&nodes[base + (blo >> j)..=base + (bhi >> j)]);
        }
    }

    fn refresh_frame(&mut self, n: usize, lo: usize, hi: usize) {
        let stride = self.blocks + self.bin_shape.nodes();
        let scores = &self.scores[n * self.bins..(n + 1) * self.bins];
        let (block_nodes, tree) = self.bin_nodes[n * stride..(n + 1) * stride].split_at_mut(self.blocks);
        let (blo, bhi) = (lo / BLOCK, hi / BLOCK);
        for (b, node) in block_nodes.iter_mut().enumerate().take(bhi + 1).skip(blo) {
            let start = b * BLOCK;
            let block = &scores[start..(start + BLOCK).min(self.bins)];
            let mut best = Node {
                score: block[0],
                index: start as u32,
            };
            for (i, &v) in block.iter().enumerate().skip(1) {
                if v > best.score {
                    best = Node {
                        score: v,
                        index: (start + i) as u32,
                    };
                }
            }
            *node = best;
        }
        refresh_levels(&self.bin_shape, tree, blo, bhi, |b| block_nodes[b].score);
        let d = self.bin_shape.depth();
        let block = if d == 0 {
            0
        } else {
            tree[self.bin_shape.offsets[d - 1]].index as usize
        };
        let root = block_nodes[block];
        self.frame_bin[n] = root.index;
        self.frame_max[n] = root.score;
    }

    #[inline]
    fn root_bin(&self, n: usize) -> usize {
        self.frame_bin[n] as usize
    }

    fn refresh_partial(&mut self, lo: usize, hi: usize) -> u64 {
        let maxima = &self.frame_max;
        refresh_levels(&self.frame_shape, &mut self.frame_nodes, lo, hi, |f| maxima[f])
    }

    fn best(&self) -> (usize, usize, f64) {
        let d = self.frame_shape.depth();
        let top = self.frame_shape.size(d);
        let leaf = |f: usize| self.frame_max[f];
        let mut best = winner_at(&self.frame_shape, &self.frame_nodes, d, 0, &leaf);
        for i in 1..top {
            let w = winner_at(&self.frame_shape, &self.frame_nodes, d, i, &leaf);
            if w.score > best.score {
                best = w;
            }
        }
        let frame = best.index as usize;
        (frame, self.root_bin(frame), best.score)
    }
}

/// Largest score and where it sits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Best {
    pub dict: usize,
    pub bin: usize,
    pub frame: usize,
    pub score: f64,
}

/// Score layout of one dictionary: `scores[n * bins + m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub bins: usize,
    pub frames: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MaxForest {
    dicts: Vec<DictTrees>,
    partial_comparisons: u64,
    last_update_comparisons: u64,
}

impl MaxForest {
    /// Builds with the default partial-tree depth per dictionary.
    pub fn build(grids: Vec<ScoreGrid>) -> Result<Self> {
        let depths = grids.iter().map(|g| default_depth(g.frames)).collect();
        Self::build_with_depths(grids, depths)
    }

    pub fn build_with_depths(grids: Vec<ScoreGrid>, depths: Vec<usize>) -> Result<Self> {
        if grids.is_empty() || depths.len() != grids.len() {
            return Err(MpError::Dimension("one score grid and depth per dictionary required".into()));
        }
        let mut dicts = Vec::with_capacity(grids.len());
        for (g, d) in grids.into_iter().zip(depths) {
            if g.bins == 0 || g.frames == 0 || g.scores.len() != g.bins * g.frames {
                return Err(MpError::Dimension(format!(
                    "score grid {}x{} holds {} values",
                    g.bins,
                    g.frames,
                    g.scores.len()
                )));
            }
            if g.bins > u32::MAX as usize || g.frames > u32::MAX as usize {
                return Err(MpError::Dimension("grid too large for 32-bit indices".into()));
            }
            dicts.push(DictTrees::new(g.bins, g.frames, g.scores, d));
        }
        Ok(MaxForest {
            dicts,
            partial_comparisons: 0,
            last_update_comparisons: 0,
        })
    }

    pub fn dict_count(&self) -> usize {
        self.dicts.len()
    }

    pub fn depth(&self, w: usize) -> usize {
        self.dicts[w].frame_shape.depth()
    }

    pub fn shape(&self, w: usize) -> (usize, usize) {
        (self.dicts[w].bins, self.dicts[w].frames)
    }

    pub fn score(&self, w: usize, m: usize, n: usize) -> f64 {
        let t = &self.dicts[w];
        t.scores[n * t.bins + m]
    }

    pub fn scores(&self, w: usize) -> &[f64] {
        &self.dicts[w].scores
    }

    /// Raw scores of dictionary `w`; call [`MaxForest::refresh`] over every
    /// modified region before the next query.
    pub fn scores_mut(&mut self, w: usize) -> &mut [f64] {
        &mut self.dicts[w].scores
    }

    /// Re-establishes the trees after scores in `bins` x (`frame_start`,
    /// `frame_count` frames, wrapping) changed.
    pub fn refresh(&mut self, w: usize, bins: Range<usize>, frame_start: usize, frame_count: usize) -> Result<()> {
        let t = self
            .dicts
            .get_mut(w)
            .ok_or_else(|| MpError::Index(format!("dictionary {w}")))?;
        if bins.end > t.bins || frame_start >= t.frames || frame_count > t.frames {
            return Err(MpError::Index(format!(
                "range bins {bins:?}, frames {frame_start}+{frame_count} outside {}x{}",
                t.bins, t.frames
            )));
        }
        self.last_update_comparisons = 0;
        if bins.is_empty() || frame_count == 0 {
            return Ok(());
        }
        let first = frame_count.min(t.frames - frame_start);
        let segments = [(frame_start, first), (0, frame_count - first)];
        let mut count = 0;
        for (start, len) in segments {
            if len == 0 {
                continue;
            }
            for n in start..start + len {
                t.prefetch_frame(n, bins.start, bins.end - 1);
            }
            for n in start..start + len {
                t.refresh_frame(n, bins.start, bins.end - 1);
            }
            count += t.refresh_partial(start, start + len - 1);
        }
        self.last_update_comparisons = count;
        self.partial_comparisons += count;
        Ok(())
    }

    /// Writes `score(m, n)` over the range, then refreshes it.
    pub fn update_ranges(
        &mut self,
        w: usize,
        bins: Range<usize>,
        frame_start: usize,
        frame_count: usize,
        mut score: impl FnMut(usize, usize) -> f64,
    ) -> Result<()> {
        let (nb, nf) = self
            .dicts
            .get(w)
            .map(|t| (t.bins, t.frames))
            .ok_or_else(|| MpError::Index(format!("dictionary {w}")))?;
        if bins.end > nb || frame_start >= nf || frame_count > nf {
            return Err(MpError::Index(format!(
                "range bins {bins:?}, frames {frame_start}+{frame_count} outside {nb}x{nf}"
            )));
        }
        let scores = &mut self.dicts[w].scores;
        for k in 0..frame_count {
            let n = (frame_start + k) % nf;
            for m in bins.clone() {
                scores[n * nb + m] = score(m, n);
            }
        }
        self.refresh(w, bins, frame_start, frame_count)
    }

    /// Rebuilds every tree of dictionary `w` from its scores.
    pub fn rebuild(&mut self, w: usize) {
        self.dicts[w].rebuild();
    }

    /// Global maximum; ties go to the lower dictionary, then frame, then bin.
    pub fn query(&self) -> Best {
        let mut best: Option<Best> = None;
        for (w, t) in self.dicts.iter().enumerate() {
            let (frame, bin, score) = t.best();
            if best.is_none_or(|b| score > b.score) {
                best = Some(Best {
                    dict: w,
                    bin,
                    frame,
                    score,
                });
            }
        }
        best.expect("forest has at least one dictionary")
    }

    /// Partial-tree comparisons made by the most recent refresh.
    pub fn last_update_comparisons(&self) -> u64 {
        self.last_update_comparisons
    }

    pub fn total_partial_comparisons(&self) -> u64 {
        self.partial_comparisons
    }
}

/// Reference argmax by linear scan with the same tie-breaking as the forest.
pub fn linear_scan(grids: &[ScoreGrid]) -> Best {
    let mut best = Best {
        dict: 0,
        bin: 0,
        frame: 0,
        score: f64::NEG_INFINITY,
    };
    for (w, g) in grids.iter().enumerate() {
        for n in 0..g.frames {
            for m in 0..g.bins {
                let s = g.scores[n * g.bins + m];
                if s > best.score {
                    best = Best {
                        dict: w,
                        bin: m,
                        frame: n,
                        score: s,
                    };
                }
            }
        }
    }
    best
}

/// Requests the cache lines covering `cells`.
#[inline]
pub(crate) fn prefetch<T>(cells: &[T]) {
    #[cfg(target_arch = "x86_64")]
    {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        let start = cells.as_ptr() as usize & !63;
        let end = cells.as_ptr() as usize + std::mem::size_of_val(cells);
        let mut p = start;
        while p < end {
            // SAFETY: prefetch is a hint and never faults.
            unsafe { _mm_prefetch::<_MM_HINT_T0>(p as *const i8) };
            p += 64;
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = cells;
}
