//! Simple cycles of the class dependency graph (Johnson's algorithm).

use std::collections::BTreeSet;

use super::problem::Problem;

/// A simple cycle `classes[0] -> classes[1] -> ... -> classes[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCycle {
    pub classes: Vec<usize>,
    /// Per position, the nodes of that class with a child in the next class.
    pub nodes: Vec<Vec<usize>>,
}

/// Edge `c -> c'` iff some node of `c` has child `c'`; sorted, deduplicated.
pub fn class_graph(p: &Problem) -> Vec<Vec<usize>> {
    p.classes
        .iter()
        .map(|ns| {
            let set: BTreeSet<usize> = ns
                .iter()
                .flat_map(|&n| p.nodes[n].children.iter().copied())
                .collect();
            set.into_iter().collect()
        })
        .collect()
}

fn reverse(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut r = vec![Vec::new(); adj.len()];
    for (v, ws) in adj.iter().enumerate() {
        for &w in ws {
            r[w].push(v);
        }
    }
    r
}

fn reachable(edges: &[Vec<usize>], s: usize, min: usize) -> Vec<bool> {
    let mut seen = vec![false; edges.len()];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(v) = stack.pop() {
        for &w in &edges[v] {
            if w >= min && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Strongly connected component id per vertex (Kosaraju, iterative).
fn components(adj: &[Vec<usize>], rev: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![(s, 0usize)];
        while let Some((v, i)) = stack.last_mut() {
            if let Some(&w) = adj[*v].get(*i) {
                *i += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(*v);
                stack.pop();
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    for (k, &s) in order.iter().rev().enumerate() {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = k;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in &rev[v] {
                if comp[w] == usize::MAX {
                    comp[w] = k;
                    stack.push(w);
                }
            }
        }
    }
    comp
}

/// All simple cycles of `adj`, each listed from its smallest vertex. Returns
/// `None` as soon as more than `limit` cycles have been found.
pub fn simple_cycles(adj: &[Vec<usize>], limit: usize) -> Option<Vec<Vec<usize>>> {
    let n = adj.len();
    // edges inside one strongly connected component are the only ones on cycles
    let comp = components(adj, &reverse(adj));
    let adj: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(v, ws)| ws.iter().copied().filter(|&w| comp[w] == comp[v]).collect())
        .collect();
    let rev = reverse(&adj);
    let mut out = Vec::new();
    let mut blocked = vec![false; n];
    let mut b_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for s in 0..n {
        if adj[s].is_empty() {
            continue;
        }
        // the strongly connected component of s among vertices >= s
        let fwd = reachable(&adj, s, s);
        let bwd = reachable(&rev, s, s);
        let in_scc = |v: usize| v >= s && fwd[v] && bwd[v];
        if !adj[s].iter().any(|&w| in_scc(w)) {
            continue;
        }
        for v in (s..n).filter(|&v| in_scc(v)) {
            blocked[v] = false;
            b_sets[v].clear();
        }
        let succ =
            |v: usize| -> Vec<usize> { adj[v].iter().copied().filter(|&w| in_scc(w)).collect() };

        let mut path = vec![s];
        blocked[s] = true;
        // (vertex, successors, next position, found a cycle through it)
        let mut frames = vec![(s, succ(s), 0usize, false)];
        while let Some(top) = frames.last_mut() {
            if top.2 < top.1.len() {
                let w = top.1[top.2];
                top.2 += 1;
                if w == s {
                    top.3 = true;
                    out.push(path.clone());
                    if out.len() > limit {
                        return None;
                    }
                } else if !blocked[w] {
                    blocked[w] = true;
                    path.push(w);
                    let next = succ(w);
                    frames.push((w, next, 0, false));
                }
            } else {
                let (v, next, _, found) = frames.pop().unwrap();
                if found {
                    let mut stack = vec![v];
                    while let Some(x) = stack.pop() {
                        if blocked[x] {
                            blocked[x] = false;
                            stack.extend(std::mem::take(&mut b_sets[x]));
                        }
                    }
                } else {
                    for w in next {
                        b_sets[w].insert(v);
                    }
                }
                path.pop();
                if let Some(parent) = frames.last_mut() {
                    parent.3 |= found;
                }
            }
        }
    }
    Some(out)
}

/// Class cycles of `p` with their participating nodes, or `None` past `limit`.
pub fn find_cycles(p: &Problem, limit: usize) -> Option<Vec<ClassCycle>> {
    let cycles = simple_cycles(&class_graph(p), limit)?;
    Some(
        cycles
            .into_iter()
            .map(|classes| {
                let k = classes.len();
                let nodes = (0..k)
                    .map(|t| {
                        let next = classes[(t + 1) % k];
                        p.classes[classes[t]]
                            .iter()
                            .copied()
                            .filter(|&n| p.nodes[n].children.contains(&next))
                            .collect()
                    })
                    .collect();
                ClassCycle { classes, nodes }
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Cycles by brute force: every vertex sequence starting at its minimum.
    fn oracle(adj: &[Vec<usize>]) -> BTreeSet<Vec<usize>> {
        fn go(adj: &[Vec<usize>], path: &mut Vec<usize>, out: &mut BTreeSet<Vec<usize>>) {
            let v = *path.last().unwrap();
            for &w in &adj[v] {
                if w == path[0] {
                    out.insert(path.clone());
                } else if w > path[0] && !path.contains(&w) {
                    path.push(w);
                    go(adj, path, out);
                    path.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        for s in 0..adj.len() {
            go(adj, &mut vec![s], &mut out);
        }
        out
    }

    #[test]
    fn dag_has_none() {
        let adj = vec![vec![1, 2], vec![2], vec![]];
        assert_eq!(simple_cycles(&adj, 100), Some(vec![]));
    }

    #[test]
    fn self_loop_and_pair() {
        assert_eq!(simple_cycles(&[vec![0]], 100), Some(vec![vec![0]]));
        assert_eq!(
            simple_cycles(&[vec![1], vec![0]], 100),
            Some(vec![vec![0, 1]])
        );
    }

    #[test]
    fn limit_aborts() {
        // complete graph on 5 vertices has 84 simple cycles
        let adj: Vec<Vec<usize>> = (0..5)
            .map(|v| (0..5).filter(|&w| w != v).collect())
            .collect();
        assert_eq!(simple_cycles(&adj, 1000).unwrap().len(), 84);
        assert_eq!(simple_cycles(&adj, 10), None);
    }

    #[test]
    fn participating_nodes() {
        let p = super::super::problem::tests::looped();
        let cs = find_cycles(&p, 10).unwrap();
        assert_eq!(
            cs,
            vec![ClassCycle {
                classes: vec![0, 1],
                nodes: vec![vec![0], vec![2]]
            }]
        );
    }

    proptest! {
        #[test]
        fn matches_enumeration(edges in prop::collection::vec((0usize..6, 0usize..6), 0..14)) {
            let mut adj = vec![BTreeSet::new(); 6];
            for (a, b) in edges {
                adj[a].insert(b);
            }
            let adj: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
            let got: Vec<Vec<usize>> = simple_cycles(&adj, 100_000).unwrap();
            let set: BTreeSet<Vec<usize>> = got.iter().cloned().collect();
            prop_assert_eq!(set.len(), got.len());
            prop_assert_eq!(set, oracle(&adj));
        }
    }
}
