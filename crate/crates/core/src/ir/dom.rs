use super::{BlockId, FunctionIR, IrError};

/// Dominator tree over the blocks of one function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomTree {
    /// Immediate dominator per block; `None` for the entry.
    pub idom: Vec<Option<BlockId>>,
    /// Blocks in dominator-tree pre-order (children visited in block order).
    pub preorder: Vec<BlockId>,
    pub children: Vec<Vec<BlockId>>,
    pre_index: Vec<usize>,
    subtree_end: Vec<usize>,
}

/// Position of a statement: its block and its index within that block's
/// statement list (or skeleton list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StmtLoc {
    pub block: BlockId,
    pub index: usize,
}

impl DomTree {
    /// Builds the tree from an idom array rooted at block 0.
    pub fn from_idom(idom: Vec<Option<BlockId>>) -> Self {
        let n = idom.len();
        let mut children = vec![Vec::new(); n];
        for (b, d) in idom.iter().enumerate() {
            if let Some(d) = d {
                children[*d].push(b);
            }
        }
        let mut preorder = Vec::with_capacity(n);
        let mut pre_index = vec![usize::MAX; n];
        let mut subtree_end = vec![0; n];
        // iterative DFS; a block's subtree occupies preorder[pre..end)
        let mut stack = vec![(0usize, 0usize)];
        if n > 0 {
            pre_index[0] = 0;
            preorder.push(0);
        }
        while let Some((b, child)) = stack.pop() {
            if child < children[b].len() {
                stack.push((b, child + 1));
                let c = children[b][child];
                pre_index[c] = preorder.len();
                preorder.push(c);
                stack.push((c, 0));
            } else {
                subtree_end[b] = preorder.len();
            }
        }
        DomTree {
            idom,
            preorder,
            children,
            pre_index,
            subtree_end,
        }
    }

    /// `a` dominates `b` (reflexive).
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        let pa = self.pre_index[a];
        let pb = self.pre_index[b];
        pa != usize::MAX && pb != usize::MAX && pa <= pb && pb < self.subtree_end[a]
    }

    pub fn strictly_dominates(&self, a: BlockId, b: BlockId) -> bool {
        a != b && self.dominates(a, b)
    }

    pub fn depth(&self, mut b: BlockId) -> usize {
        let mut d = 0;
        while let Some(p) = self.idom[b] {
            b = p;
            d += 1;
        }
        d
    }
}

/// Statement-level dominance: `a`'s block strictly dominates `b`'s, or both
/// sit in one block and `a` comes first.
pub fn stmt_dominates(dt: &DomTree, a: StmtLoc, b: StmtLoc) -> bool {
    if a.block == b.block {
        a.index < b.index
    } else {
        dt.strictly_dominates(a.block, b.block)
    }
}

fn reverse_postorder(succs: &[Vec<BlockId>]) -> Vec<BlockId> {
    let n = succs.len();
    let mut seen = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    while let Some((b, i)) = stack.pop() {
        if i < succs[b].len() {
            stack.push((b, i + 1));
            let s = succs[b][i];
            if !seen[s] {
                seen[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(b);
        }
    }
    post.reverse();
    post
}

/// Cooper-Harvey-Kennedy iterative dominators over an explicit successor list.
/// Unreachable blocks get no idom and are returned separately.
pub(crate) fn compute_idom(succs: &[Vec<BlockId>]) -> (Vec<Option<BlockId>>, Vec<BlockId>) {
    let n = succs.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let rpo = reverse_postorder(succs);
    let mut order = vec![usize::MAX; n];
    for (i, b) in rpo.iter().enumerate() {
        order[*b] = i;
    }
    let mut preds = vec![Vec::new(); n];
    for (b, ss) in succs.iter().enumerate() {
        if order[b] == usize::MAX {
            continue;
        }
        for s in ss {
            preds[*s].push(b);
        }
    }
    let mut idom: Vec<Option<BlockId>> = vec![None; n];
    idom[0] = Some(0);
    let intersect = |idom: &[Option<BlockId>], mut a: BlockId, mut b: BlockId| {
        while a != b {
            while order[a] > order[b] {
                a = idom[a].unwrap();
            }
            while order[b] > order[a] {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new = None;
            for &p in &preds[b] {
                if idom[p].is_some() {
                    new = Some(match new {
                        None => p,
                        Some(q) => intersect(&idom, p, q),
                    });
                }
            }
            if new.is_some() && idom[b] != new {
                idom[b] = new;
                changed = true;
            }
        }
    }
    idom[0] = None;
    let unreachable = (0..n).filter(|b| order[*b] == usize::MAX).collect();
    (idom, unreachable)
}

/// Dominator tree of `f`; unreachable blocks are an error.
pub fn dominator_tree(f: &FunctionIR) -> Result<DomTree, IrError> {
    let succs: Vec<Vec<BlockId>> = (0..f.blocks.len()).map(|b| f.successors(b)).collect();
    let (idom, unreachable) = compute_idom(&succs);
    if !unreachable.is_empty() {
        return Err(IrError::Unreachable {
            function: f.name.clone(),
            blocks: unreachable,
        });
    }
    Ok(DomTree::from_idom(idom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force: `a` dominates `b` iff `b` is unreachable from the entry
    /// once `a` is removed (or `a == b`).
    fn brute_dominates(succs: &[Vec<BlockId>], a: BlockId, b: BlockId) -> bool {
        if a == b {
            return true;
        }
        if a == 0 {
            return true;
        }
        let mut seen = vec![false; succs.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &s in &succs[x] {
                if s != a && !seen[s] {
                    seen[s] = true;
                    stack.push(s);
                }
            }
        }
        !seen[b]
    }

    fn diamond() -> Vec<Vec<BlockId>> {
        vec![vec![1, 2], vec![3], vec![3], vec![]]
    }

    #[test]
    fn single_block() {
        let (idom, un) = compute_idom(&[vec![]]);
        let dt = DomTree::from_idom(idom);
        assert!(un.is_empty());
        assert_eq!(dt.preorder, vec![0]);
        assert_eq!(dt.idom, vec![None]);
    }

    #[test]
    fn diamond_join_is_dominated_by_entry() {
        let (idom, _) = compute_idom(&diamond());
        assert_eq!(idom, vec![None, Some(0), Some(0), Some(0)]);
        let dt = DomTree::from_idom(idom);
        assert!(!dt.dominates(1, 3));
        assert!(dt.dominates(0, 3));
    }

    #[test]
    fn pow_loop() {
        // bb0 -> bb1, bb1 -> {bb2, bb3}, bb2 -> bb1
        let succs = vec![vec![1], vec![2, 3], vec![1], vec![]];
        let (idom, _) = compute_idom(&succs);
        assert_eq!(idom, vec![None, Some(0), Some(1), Some(1)]);
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(
                    DomTree::from_idom(idom.clone()).dominates(a, b),
                    brute_dominates(&succs, a, b)
                );
            }
        }
    }

    #[test]
    fn statement_dominance() {
        let dt = DomTree::from_idom(compute_idom(&diamond()).0);
        let at = |block, index| StmtLoc { block, index };
        assert!(stmt_dominates(&dt, at(1, 0), at(1, 2)));
        assert!(!stmt_dominates(&dt, at(1, 2), at(1, 0)));
        assert!(stmt_dominates(&dt, at(0, 5), at(3, 0)));
        assert!(!stmt_dominates(&dt, at(1, 0), at(2, 0)));
    }

    #[test]
    fn unreachable_blocks_reported() {
        let (_, un) = compute_idom(&[vec![], vec![0]]);
        assert_eq!(un, vec![1]);
    }

    fn cfg_strategy() -> impl Strategy<Value = Vec<Vec<BlockId>>> {
        (1usize..=8).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0..n, 0..=2), n))
    }

    proptest! {
        #[test]
        fn agrees_with_reachability_oracle(succs in cfg_strategy()) {
            let (idom, unreachable) = compute_idom(&succs);
            let dt = DomTree::from_idom(idom);
            for a in 0..succs.len() {
                for b in 0..succs.len() {
                    if unreachable.contains(&a) || unreachable.contains(&b) {
                        continue;
                    }
                    prop_assert_eq!(dt.dominates(a, b), brute_dominates(&succs, a, b), "a={} b={}", a, b);
                }
            }
        }
    }
}
