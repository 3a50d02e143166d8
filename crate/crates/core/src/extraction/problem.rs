//! Extraction instances detached from the e-graph: classes, nodes with costs,
//! and root statements with their dominators and node restrictions.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemNode {
    pub class: usize,
    pub cost: i64,
    /// Child classes, in argument order (may repeat).
    pub children: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProblemRoot {
    /// Classes the statement reads, r(i).
    pub needs: Vec<usize>,
    /// Roots whose statements dominate this one, d(i).
    pub dominators: Vec<usize>,
    /// A node that must be selected here (the statement's own effectful call).
    pub pinned: Option<usize>,
    /// Nodes that may not be selected at this root.
    pub forbidden: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Problem {
    /// Node indices per class.
    pub classes: Vec<Vec<usize>>,
    pub nodes: Vec<ProblemNode>,
    pub roots: Vec<ProblemRoot>,
}

/// Per root, the selected node indices.
pub type Selection = Vec<BTreeSet<usize>>;

impl Problem {
    pub fn allowed(&self, root: usize, node: usize) -> bool {
        !self.roots[root].forbidden.contains(&node)
    }

    /// Distinct child classes of `node`, in first-occurrence order.
    pub fn child_classes(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &c in &self.nodes[node].children {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    /// Classes reachable from r(i) through nodes allowed at `root`.
    pub fn reach(&self, root: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.roots[root].needs.clone();
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            for &n in &self.classes[c] {
                if self.allowed(root, n) {
                    stack.extend(self.nodes[n].children.iter().copied());
                }
            }
        }
        seen
    }

    /// Roots ordered so that every dominator precedes the roots it dominates.
    pub fn dominance_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.roots.len()).collect();
        order.sort_by_key(|&i| (self.roots[i].dominators.len(), i));
        order
    }

    pub fn objective(&self, sel: &Selection) -> i64 {
        sel.iter()
            .flat_map(|s| s.iter())
            .map(|&n| self.nodes[n].cost)
            .sum()
    }

    fn has_in(&self, sel: &BTreeSet<usize>, class: usize) -> bool {
        self.classes[class].iter().any(|n| sel.contains(n))
    }

    fn covered(&self, sel: &Selection, root: usize, class: usize) -> bool {
        self.has_in(&sel[root], class)
            || self.roots[root]
                .dominators
                .iter()
                .any(|&j| self.has_in(&sel[j], class))
    }

    /// Checks `sel` against the extraction rules and returns its cost.
    ///
    /// A selection is valid when, at every root: pinned nodes are selected
    /// and forbidden ones are not; every needed class and every child class
    /// of a selected node has a node selected here or at a dominator; every
    /// selected node outside r(i) has a selected parent here; and the
    /// selected nodes form no cycle.
    pub fn check(&self, sel: &Selection) -> Result<i64, String> {
        if sel.len() != self.roots.len() {
            return Err(format!(
                "{} roots, selection has {}",
                self.roots.len(),
                sel.len()
            ));
        }
        for (i, root) in self.roots.iter().enumerate() {
            let here = &sel[i];
            if let Some(p) = root.pinned {
                if !here.contains(&p) {
                    return Err(format!("root {i}: pinned node {p} not selected"));
                }
            }
            if let Some(n) = here.iter().find(|n| root.forbidden.contains(n)) {
                return Err(format!("root {i}: forbidden node {n} selected"));
            }
            for &c in &root.needs {
                if !self.covered(sel, i, c) {
                    return Err(format!("root {i}: needed class {c} not covered"));
                }
            }
            for &n in here {
                for c in self.child_classes(n) {
                    if !self.covered(sel, i, c) {
                        return Err(format!("root {i}: child class {c} of node {n} not covered"));
                    }
                }
                let c = self.nodes[n].class;
                if !root.needs.contains(&c)
                    && !here.iter().any(|&p| self.nodes[p].children.contains(&c))
                {
                    return Err(format!("root {i}: node {n} selected without a parent"));
                }
            }
            if self.has_cycle(here) {
                return Err(format!("root {i}: selected nodes form a cycle"));
            }
        }
        Ok(self.objective(sel))
    }

    /// True if the nodes in `sel` (edges to selected nodes of child classes)
    /// contain a cycle.
    pub fn has_cycle(&self, sel: &BTreeSet<usize>) -> bool {
        let nodes: Vec<usize> = sel.iter().copied().collect();
        let idx = |n: usize| nodes.binary_search(&n).ok();
        let succ = |k: usize| -> Vec<usize> {
            self.child_classes(nodes[k])
                .into_iter()
                .flat_map(|c| self.classes[c].iter().filter_map(|&m| idx(m)))
                .collect()
        };
        // 0 unvisited, 1 on stack, 2 done
        let mut state = vec![0u8; nodes.len()];
        for s in 0..nodes.len() {
            if state[s] != 0 {
                continue;
            }
            state[s] = 1;
            let mut stack = vec![(s, succ(s), 0usize)];
            while let Some((v, next, pos)) = stack.last_mut() {
                if *pos < next.len() {
                    let w = next[*pos];
                    *pos += 1;
                    match state[w] {
                        1 => return true,
                        0 => {
                            state[w] = 1;
                            let s = succ(w);
                            stack.push((w, s, 0));
                        }
                        _ => {}
                    }
                } else {
                    state[*v] = 2;
                    stack.pop();
                }
            }
        }
        false
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// c0 = {n0: f(c1)}, c1 = {n1: a, n2: g(c0)}
    pub(crate) fn looped() -> Problem {
        Problem {
            classes: vec![vec![0], vec![1, 2]],
            nodes: vec![
                ProblemNode {
                    class: 0,
                    cost: 1,
                    children: vec![1],
                },
                ProblemNode {
                    class: 1,
                    cost: 1,
                    children: vec![],
                },
                ProblemNode {
                    class: 1,
                    cost: 1,
                    children: vec![0],
                },
            ],
            roots: vec![ProblemRoot {
                needs: vec![0],
                ..Default::default()
            }],
        }
    }

    fn sel(nodes: &[usize]) -> Selection {
        vec![nodes.iter().copied().collect()]
    }

    #[test]
    fn valid_and_invalid_selections() {
        let p = looped();
        assert_eq!(p.check(&sel(&[0, 1])), Ok(2));
        assert!(p.check(&sel(&[0])).unwrap_err().contains("child class 1"));
        assert!(p.check(&sel(&[0, 2])).unwrap_err().contains("cycle"));
        assert!(p.check(&sel(&[0, 1, 2])).unwrap_err().contains("cycle"));
        assert!(p.check(&sel(&[])).unwrap_err().contains("needed"));
    }

    #[test]
    fn dominator_coverage_counts() {
        let mut p = looped();
        p.roots.push(ProblemRoot {
            needs: vec![1, 0],
            dominators: vec![0],
            ..Default::default()
        });
        let s: Selection = vec![[0, 1].into(), BTreeSet::new()];
        assert_eq!(p.check(&s), Ok(2));
        p.roots[1].dominators.clear();
        assert!(p.check(&s).is_err());
    }

    #[test]
    fn orphans_are_rejected() {
        let mut p = looped();
        p.classes.push(vec![3]);
        p.nodes.push(ProblemNode {
            class: 2,
            cost: 5,
            children: vec![],
        });
        assert!(p
            .check(&sel(&[0, 1, 3]))
            .unwrap_err()
            .contains("without a parent"));
    }

    #[test]
    fn reach_respects_forbidden_nodes() {
        let mut p = looped();
        assert_eq!(p.reach(0), [0, 1].into());
        p.roots[0].forbidden.insert(0);
        assert_eq!(p.reach(0), [0].into());
    }
}
