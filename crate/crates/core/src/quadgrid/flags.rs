use super::morton::morton;

/// A node of the quadtree: level plus indices at that level (south-west origin).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LeafId {
    pub level: u32,
    pub i: u32,
    pub j: u32,
}

impl LeafId {
    #[inline]
    pub fn new(level: u32, i: u32, j: u32) -> Self {
        LeafId { level, i, j }
    }

    #[inline]
    pub fn parent(&self) -> Option<LeafId> {
        (self.level > 0).then(|| LeafId::new(self.level - 1, self.i / 2, self.j / 2))
    }

    /// Children in storage order SW, SE, NW, NE.
    #[inline]
    pub fn children(&self) -> [LeafId; 4] {
        let (l, i, j) = (self.level + 1, 2 * self.i, 2 * self.j);
        [LeafId::new(l, i, j), LeafId::new(l, i + 1, j), LeafId::new(l, i, j + 1), LeafId::new(l, i + 1, j + 1)]
    }

    /// Position of this node among its siblings (storage order).
    #[inline]
    pub fn child_slot(&self) -> usize {
        (self.i & 1) as usize + 2 * (self.j & 1) as usize
    }

    #[inline]
    pub fn ancestor(&self, level: u32) -> LeafId {
        debug_assert!(level <= self.level);
        let s = self.level - level;
        LeafId::new(level, self.i >> s, self.j >> s)
    }

    /// Whether `other` lies inside (or is) this node.
    pub fn contains(&self, other: &LeafId) -> bool {
        other.level >= self.level && other.ancestor(self.level) == *self
    }

    #[inline]
    pub fn morton(&self) -> u64 {
        morton(self.i, self.j)
    }

    /// Side length in level-`max_level` cells.
    #[inline]
    pub fn span(&self, max_level: u32) -> u32 {
        1 << (max_level - self.level)
    }
}

/// Per-level "refine this node" flags for levels `0..L`.
///
/// A flagged node has children; leaves are the first unflagged nodes met
/// when descending from level 0 (or level-L nodes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlagTree {
    pub max_level: u32,
    pub m: u32,
    pub n: u32,
    flags: Vec<Vec<bool>>,
}

impl FlagTree {
    pub fn new(max_level: u32, m: u32, n: u32) -> Self {
        let flags = (0..max_level).map(|l| vec![false; ((m << l) * (n << l)) as usize]).collect();
        FlagTree { max_level, m, n, flags }
    }

    /// Every internal node flagged: the full level-L grid.
    pub fn full(max_level: u32, m: u32, n: u32) -> Self {
        let mut t = Self::new(max_level, m, n);
        t.flags.iter_mut().for_each(|f| f.fill(true));
        t
    }

    #[inline]
    pub fn dims(&self, level: u32) -> (u32, u32) {
        (self.m << level, self.n << level)
    }

    #[inline]
    pub fn in_domain(&self, level: u32, i: i64, j: i64) -> bool {
        let (nx, ny) = self.dims(level);
        i >= 0 && j >= 0 && i < nx as i64 && j < ny as i64
    }

    #[inline]
    fn idx(&self, node: LeafId) -> usize {
        (node.j * (self.m << node.level) + node.i) as usize
    }

    #[inline]
    pub fn get(&self, node: LeafId) -> bool {
        node.level < self.max_level && self.flags[node.level as usize][self.idx(node)]
    }

    #[inline]
    pub fn set(&mut self, node: LeafId) {
        debug_assert!(node.level < self.max_level);
        let k = self.idx(node);
        self.flags[node.level as usize][k] = true;
    }

    pub fn level_flags(&self, level: u32) -> &[bool] {
        &self.flags[level as usize]
    }

    pub fn level_flags_mut(&mut self, level: u32) -> &mut [bool] {
        &mut self.flags[level as usize]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().map(|f| f.iter().filter(|&&b| b).count()).sum()
    }

    pub fn flagged(&self, level: u32) -> impl Iterator<Item = LeafId> + '_ {
        let nx = self.m << level;
        self.flags[level as usize]
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| LeafId::new(level, k as u32 % nx, k as u32 / nx))
    }

    /// Flags `node` and all of its ancestors.
    pub fn set_with_ancestors(&mut self, node: LeafId) {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if self.get(c) {
                break;
            }
            self.set(c);
            cur = c.parent();
        }
    }

    /// Ensures no flagged node has an unflagged ancestor.
    pub fn close_ancestors(&mut self) {
        for level in (1..self.max_level).rev() {
            let nodes: Vec<LeafId> = self.flagged(level).collect();
            for n in nodes {
                if let Some(p) = n.parent() {
                    self.set(p);
                }
            }
        }
    }

    pub fn is_ancestor_closed(&self) -> bool {
        (1..self.max_level).all(|l| self.flagged(l).all(|n| self.get(n.parent().unwrap())))
    }

    /// Minimal superset satisfying the 2:1 rule between edge-adjacent leaves.
    pub fn grade(&mut self) {
        self.close_ancestors();
        for level in (1..self.max_level).rev() {
            let nodes: Vec<LeafId> = self.flagged(level).collect();
            for n in nodes {
                for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let (ni, nj) = (n.i as i64 + di, n.j as i64 + dj);
                    if self.in_domain(level, ni, nj) {
                        let nb = LeafId::new(level, ni as u32, nj as u32);
                        self.set_with_ancestors(nb.parent().unwrap());
                    }
                }
            }
        }
    }

    pub fn graded(mut self) -> Self {
        self.grade();
        self
    }

    /// Flags the eight same-level neighbours of every node flagged in `src`.
    pub fn add_ring(&mut self, src: &FlagTree) {
        for level in 0..self.max_level {
            let nodes: Vec<LeafId> = src.flagged(level).collect();
            for n in nodes {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ni, nj) = (n.i as i64 + di, n.j as i64 + dj);
                        if self.in_domain(level, ni, nj) {
                            self.set(LeafId::new(level, ni as u32, nj as u32));
                        }
                    }
                }
            }
        }
    }

    pub fn union_with(&mut self, other: &FlagTree) {
        for (a, b) in self.flags.iter_mut().zip(&other.flags) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x |= y);
        }
    }

    pub fn is_subset_of(&self, other: &FlagTree) -> bool {
        self.flags.iter().zip(&other.flags).all(|(a, b)| a.iter().zip(b).all(|(&x, &y)| !x || y))
    }

    /// Leaves in deterministic order: level-0 roots row by row, then
    /// depth-first in child storage order.
    pub fn leaves(&self) -> Vec<LeafId> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for j in 0..self.n {
            for i in 0..self.m {
                stack.push(LeafId::new(0, i, j));
                while let Some(node) = stack.pop() {
                    if self.get(node) {
                        for c in node.children().iter().rev() {
                            stack.push(*c);
                        }
                    } else {
                        out.push(node);
                    }
                }
            }
        }
        out
    }

    /// Flag tree whose leaves are `leaves` (assumed to tile the domain).
    pub fn from_leaves(max_level: u32, m: u32, n: u32, leaves: &[LeafId]) -> Self {
        let mut t = Self::new(max_level, m, n);
        for leaf in leaves {
            if let Some(p) = leaf.parent() {
                t.set_with_ancestors(p);
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn max_level_jump(t: &FlagTree) -> u32 {
        let g = crate::quadgrid::QuadGrid::from_flags(t, 1.0, 0.0, 0.0);
        g.max_level_jump()
    }

    #[test]
    fn leaf_family() {
        let n = LeafId::new(2, 3, 2);
        assert_eq!(n.parent(), Some(LeafId::new(1, 1, 1)));
        let c = n.children();
        assert_eq!(c[0], LeafId::new(3, 6, 4));
        assert_eq!(c[1], LeafId::new(3, 7, 4));
        assert_eq!(c[2], LeafId::new(3, 6, 5));
        assert_eq!(c[3], LeafId::new(3, 7, 5));
        for (k, ch) in c.iter().enumerate() {
            assert_eq!(ch.child_slot(), k);
            assert!(n.contains(ch));
        }
        assert_eq!(c[3].ancestor(0), LeafId::new(0, 0, 0));
        assert_eq!(LeafId::new(0, 0, 0).parent(), None);
    }

    #[test]
    fn empty_and_full_leaves() {
        assert_eq!(FlagTree::new(3, 2, 1).leaves().len(), 2);
        assert_eq!(FlagTree::full(3, 2, 1).leaves().len(), 2 * 64);
    }

    #[test]
    fn single_deep_node_staircase() {
        let (l, m) = (4u32, 1u32);
        let mut t = FlagTree::new(l, m, m);
        t.set_with_ancestors(LeafId::new(3, 4, 4));
        assert!(max_level_jump(&t) > 1);
        let before = t.clone();
        t.grade();
        assert!(before.is_subset_of(&t));
        assert!(max_level_jump(&t) <= 1);
        let again = t.clone().graded();
        assert_eq!(again, t);
    }

    #[test]
    fn from_leaves_round_trip() {
        let mut t = FlagTree::new(3, 2, 2);
        t.set_with_ancestors(LeafId::new(2, 5, 1));
        t.set_with_ancestors(LeafId::new(1, 0, 3));
        let back = FlagTree::from_leaves(3, 2, 2, &t.leaves());
        assert_eq!(back, t);
    }

    #[test]
    fn ring_covers_diagonals() {
        let mut src = FlagTree::new(3, 1, 1);
        src.set(LeafId::new(2, 1, 1));
        let mut t = FlagTree::new(3, 1, 1);
        t.add_ring(&src);
        assert_eq!(t.flagged(2).count(), 9);
        assert!(t.get(LeafId::new(2, 0, 0)) && t.get(LeafId::new(2, 2, 2)));
    }

    /// Brute force: the minimal graded superset, found by repeatedly
    /// refining any leaf that sits next to a leaf two or more levels finer.
    fn brute_grade(t: &FlagTree) -> FlagTree {
        let mut t = t.clone();
        t.close_ancestors();
        loop {
            let g = crate::quadgrid::QuadGrid::from_flags(&t, 1.0, 0.0, 0.0);
            let mut changed = false;
            for (k, leaf) in g.leaves().iter().enumerate() {
                for f in crate::field::Face::ALL {
                    if let super::super::grid::Neighbours::Leaves(nbs) = g.neighbours(k, f) {
                        if nbs.iter().any(|&nb| g.leaves()[nb].level > leaf.level + 1) {
                            t.set_with_ancestors(*leaf);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return t;
            }
        }
    }

    fn random_tree(max_level: u32, m: u32, n: u32, picks: &[(u32, u32, u32)]) -> FlagTree {
        let mut t = FlagTree::new(max_level, m, n);
        for &(l, a, b) in picks {
            let level = l % max_level;
            let (nx, ny) = t.dims(level);
            t.set_with_ancestors(LeafId::new(level, a % nx, b % ny));
        }
        t
    }

    proptest! {
        #[test]
        fn grading_is_minimal_graded_and_idempotent(picks in proptest::collection::vec((0u32..8, 0u32..64, 0u32..64), 0..12)) {
            let t = random_tree(4, 2, 1, &picks);
            let g = t.clone().graded();
            prop_assert!(t.is_subset_of(&g));
            prop_assert!(max_level_jump(&g) <= 1);
            prop_assert!(g.is_ancestor_closed());
            prop_assert_eq!(g.clone().graded(), g.clone());
            prop_assert_eq!(brute_grade(&t), g);
        }
    }
}
