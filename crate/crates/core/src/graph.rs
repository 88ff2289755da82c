//! Binary network storage.
//!
//! The adjacency relation is held as two dense bit matrices, one row per node
//! for out-neighbours and one for in-neighbours (identical for undirected
//! networks). Common-neighbour queries then reduce to word-wise `AND` plus
//! `popcount`, which is what the triangle and shared-partner change
//! statistics need. The current tie set is additionally kept in an
//! insertion-ordered index set so that a uniformly random tie can be drawn in
//! O(1) by the tie-no-tie sampler.

use indexmap::IndexSet;

use crate::error::{Error, Result};

const WORD: usize = 64;

/// Dense bit matrix with one row of `words` 64-bit words per node.
#[derive(Debug, Clone, PartialEq, Eq)]
struct BitRows {
    words: usize,
    bits: Vec<u64>,
}

impl BitRows {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(WORD).max(1);
        Self {
            words,
            bits: vec![0; words * n],
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words + j / WORD] >> (j % WORD)) & 1 == 1
    }

    #[inline]
    fn flip(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / WORD] ^= 1 << (j % WORD);
    }
}

#[inline]
fn and_count(a: &[u64], b: &[u64]) -> usize {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x & y).count_ones() as usize)
        .sum()
}

/// Iterator over the set bits of a bit row.
pub struct Ones<'a> {
    row: &'a [u64],
    word: usize,
    current: u64,
}

impl<'a> Ones<'a> {
    fn new(row: &'a [u64]) -> Self {
        Self {
            row,
            word: 0,
            current: row.first().copied().unwrap_or(0),
        }
    }
}

impl Iterator for Ones<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.word * WORD + bit);
            }
            self.word += 1;
            if self.word >= self.row.len() {
                return None;
            }
            self.current = self.row[self.word];
        }
    }
}

/// Iterator over the set bits of the intersection of two rows.
pub struct CommonOnes<'a> {
    a: &'a [u64],
    b: &'a [u64],
    word: usize,
    current: u64,
}

impl Iterator for CommonOnes<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let bit = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.word * WORD + bit);
            }
            self.word += 1;
            if self.word >= self.a.len() {
                return None;
            }
            self.current = self.a[self.word] & self.b[self.word];
        }
    }
}

fn common<'a>(a: &'a [u64], b: &'a [u64]) -> CommonOnes<'a> {
    CommonOnes {
        a,
        b,
        word: 0,
        current: match (a.first(), b.first()) {
            (Some(x), Some(y)) => x & y,
            _ => 0,
        },
    }
}

/// A binary directed or undirected network on nodes `0..n_nodes`.
///
/// Self-loops are never present. For undirected networks both ordered dyads
/// of a tie are set, `out_degree == in_degree`, and each tie is counted once
/// in [`Network::edge_count`].
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    directed: bool,
    out_rows: BitRows,
    // Transpose of `out_rows`; unused (and left empty) for undirected networks.
    in_rows: BitRows,
    out_deg: Vec<u32>,
    in_deg: Vec<u32>,
    ties: IndexSet<u64>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.directed == other.directed && self.out_rows == other.out_rows
    }
}

impl Eq for Network {}

impl Network {
    /// An empty network.
    pub fn empty(n_nodes: usize, directed: bool) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::EmptyNodeSet);
        }
        Ok(Self {
            n: n_nodes,
            directed,
            out_rows: BitRows::new(n_nodes),
            in_rows: if directed {
                BitRows::new(n_nodes)
            } else {
                BitRows::new(0)
            },
            out_deg: vec![0; n_nodes],
            in_deg: vec![0; n_nodes],
            ties: IndexSet::new(),
        })
    }

    /// Builds a network from a list of node pairs.
    ///
    /// Duplicate pairs collapse to a single tie; for undirected networks
    /// `(i, j)` and `(j, i)` denote the same tie.
    pub fn from_edge_list(
        pairs: &[(usize, usize)],
        n_nodes: usize,
        directed: bool,
    ) -> Result<Self> {
        let mut net = Self::empty(n_nodes, directed)?;
        for &(i, j) in pairs {
            net.check_dyad(i, j)?;
            if !net.has_edge(i, j) {
                net.toggle_unchecked(i, j);
            }
        }
        Ok(net)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of dyads that can carry a tie: `N(N-1)` directed, `N(N-1)/2` undirected.
    pub fn n_dyads(&self) -> usize {
        dyad_count(self.n, self.directed)
    }

    /// Number of ties (undirected ties counted once).
    pub fn edge_count(&self) -> usize {
        self.ties.len()
    }

    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / self.n_dyads() as f64
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out_rows.get(i, j)
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.out_deg[i] as usize
    }

    #[inline]
    pub fn in_degree(&self, i: usize) -> usize {
        self.in_deg[i] as usize
    }

    /// Degree of an undirected node (same as out-degree).
    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.out_deg[i] as usize
    }

    fn check_dyad(&self, i: usize, j: usize) -> Result<()> {
        for index in [i, j] {
            if index >= self.n {
                return Err(Error::NodeOutOfRange {
                    index,
                    n_nodes: self.n,
                });
            }
        }
        if i == j {
            return Err(Error::SelfLoop(i));
        }
        Ok(())
    }

    /// Flips the dyad `(i, j)` (and `(j, i)` when undirected).
    pub fn toggle_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_dyad(i, j)?;
        self.toggle_unchecked(i, j);
        Ok(())
    }

    /// Like [`Network::toggle_edge`] without range checks.
    pub(crate) fn toggle_unchecked(&mut self, i: usize, j: usize) {
        let key = self.tie_key(i, j);
        let adding = !self.has_edge(i, j);
        self.out_rows.flip(i, j);
        if self.directed {
            self.in_rows.flip(j, i);
        } else {
            self.out_rows.flip(j, i);
        }
        if adding {
            self.ties.insert(key);
            if self.directed {
                self.out_deg[i] += 1;
                self.in_deg[j] += 1;
            } else {
                for k in [i, j] {
                    self.out_deg[k] += 1;
                    self.in_deg[k] += 1;
                }
            }
        } else {
            self.ties.swap_remove(&key);
            if self.directed {
                self.out_deg[i] -= 1;
                self.in_deg[j] -= 1;
            } else {
                for k in [i, j] {
                    self.out_deg[k] -= 1;
                    self.in_deg[k] -= 1;
                }
            }
        }
    }

    #[inline]
    fn tie_key(&self, i: usize, j: usize) -> u64 {
        let (a, b) = if self.directed || i < j {
            (i, j)
        } else {
            (j, i)
        };
        ((a as u64) << 32) | b as u64
    }

    /// The `index`-th tie in the internal tie order, for uniform tie sampling.
    #[inline]
    pub fn tie_at(&self, index: usize) -> (usize, usize) {
        let key = self.ties[index];
        ((key >> 32) as usize, (key & 0xffff_ffff) as usize)
    }

    /// Ties in canonical order (`i < j` for undirected networks).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for j in self.out_neighbors(i) {
                if self.directed || i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Nodes `j` with a tie `i -> j` (all neighbours when undirected).
    pub fn out_neighbors(&self, i: usize) -> Ones<'_> {
        Ones::new(self.out_rows.row(i))
    }

    /// Nodes `j` with a tie `j -> i` (all neighbours when undirected).
    pub fn in_neighbors(&self, i: usize) -> Ones<'_> {
        Ones::new(self.in_row(i))
    }

    #[inline]
    fn in_row(&self, i: usize) -> &[u64] {
        if self.directed {
            self.in_rows.row(i)
        } else {
            self.out_rows.row(i)
        }
    }

    /// `|out(a) ∩ out(b)|`
    #[inline]
    pub fn common_out(&self, a: usize, b: usize) -> usize {
        and_count(self.out_rows.row(a), self.out_rows.row(b))
    }

    /// `|in(a) ∩ in(b)|`
    #[inline]
    pub fn common_in(&self, a: usize, b: usize) -> usize {
        and_count(self.in_row(a), self.in_row(b))
    }

    /// `|out(a) ∩ in(b)|`, the number of two-paths `a -> k -> b`.
    #[inline]
    pub fn common_out_in(&self, a: usize, b: usize) -> usize {
        and_count(self.out_rows.row(a), self.in_row(b))
    }

    /// Nodes in `out(a) ∩ out(b)`.
    pub fn common_out_iter(&self, a: usize, b: usize) -> CommonOnes<'_> {
        common(self.out_rows.row(a), self.out_rows.row(b))
    }

    /// Nodes in `in(a) ∩ in(b)`.
    pub fn common_in_iter(&self, a: usize, b: usize) -> CommonOnes<'_> {
        common(self.in_row(a), self.in_row(b))
    }
}

/// Number of dyads for a network of the given size and directedness.
pub fn dyad_count(n: usize, directed: bool) -> usize {
    if directed {
        n * (n - 1)
    } else {
        n * (n - 1) / 2
    }
}
