//! Bottom-up greedy extraction, blind to reuse across roots.

use std::collections::BTreeSet;

use super::problem::{Problem, Selection};

const INF: i64 = i64::MAX;

/// Per class, the cheapest tree cost at `root` and the node achieving it.
///
/// Costs are blind to reuse: a class computed at a dominator is priced as if
/// it were recomputed. Nodes forbidden here still get a price when their
/// class is covered by a dominator, since that is how the value is obtained.
/// Covered classes with no finite price cost 0 and have no node.
fn class_costs(p: &Problem, root: usize, covered: &BTreeSet<usize>) -> Vec<(i64, Option<usize>)> {
    let mut best = vec![(INF, None); p.classes.len()];
    let eff = |best: &[(i64, Option<usize>)], c: usize| match best[c].0 {
        INF if covered.contains(&c) => 0,
        x => x,
    };
    loop {
        let mut changed = false;
        for (c, ns) in p.classes.iter().enumerate() {
            for &n in ns {
                if !p.allowed(root, n) && !covered.contains(&c) {
                    continue;
                }
                let mut total = p.nodes[n].cost;
                for k in p.child_classes(n) {
                    let x = eff(&best, k);
                    total = if x == INF {
                        INF
                    } else {
                        total.saturating_add(x)
                    };
                }
                if total < best[c].0 {
                    best[c] = (total, Some(n));
                    changed = true;
                }
            }
        }
        if !changed {
            return best;
        }
    }
}

/// Greedy selection; `Err` names the first root whose needs cannot be met.
pub fn greedy(p: &Problem) -> Result<Selection, String> {
    let mut sel: Selection = vec![BTreeSet::new(); p.roots.len()];
    for i in p.dominance_order() {
        let root = &p.roots[i];
        let covered: BTreeSet<usize> = root
            .dominators
            .iter()
            .flat_map(|&j| sel[j].iter().map(|&n| p.nodes[n].class))
            .collect();
        let best = class_costs(p, i, &covered);
        let mut here = BTreeSet::new();
        let mut done = BTreeSet::new();
        let mut stack: Vec<(usize, Option<usize>)> = Vec::new();
        stack.extend(root.needs.iter().rev().map(|&c| (c, None)));
        // the pin goes first so its class is not claimed by another node
        if let Some(pin) = root.pinned {
            stack.push((p.nodes[pin].class, Some(pin)));
        }
        while let Some((c, forced)) = stack.pop() {
            if !done.insert(c) {
                continue;
            }
            let n = match (forced, best[c]) {
                (Some(n), _) => n,
                (None, (INF, _)) if covered.contains(&c) => continue,
                (None, (INF, _)) => {
                    return Err(format!("root {i}: no extractable node for class {c}"))
                }
                // the cheapest way is the dominator's copy
                (None, (_, Some(n))) if !p.allowed(i, n) => continue,
                (None, (_, n)) => n.expect("finite cost has a node"),
            };
            here.insert(n);
            stack.extend(p.child_classes(n).into_iter().rev().map(|k| (k, None)));
        }
        if p.has_cycle(&here) {
            return Err(format!("root {i}: pinned node closes a cycle"));
        }
        sel[i] = here;
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::super::problem::tests::looped;
    use super::super::problem::{ProblemNode, ProblemRoot};
    use super::*;

    #[test]
    fn avoids_cycles() {
        let p = looped();
        let s = greedy(&p).unwrap();
        assert_eq!(s, vec![BTreeSet::from([0, 1])]);
        assert_eq!(p.check(&s), Ok(2));
    }

    #[test]
    fn prefers_cheap_trees() {
        // c0 = {f(c1) cost 5, g(c2) cost 1}, c1 = {a}, c2 = {h(c1) cost 1}
        let p = Problem {
            classes: vec![vec![0, 1], vec![2], vec![3]],
            nodes: vec![
                ProblemNode {
                    class: 0,
                    cost: 5,
                    children: vec![1],
                },
                ProblemNode {
                    class: 0,
                    cost: 1,
                    children: vec![2],
                },
                ProblemNode {
                    class: 1,
                    cost: 1,
                    children: vec![],
                },
                ProblemNode {
                    class: 2,
                    cost: 1,
                    children: vec![1],
                },
            ],
            roots: vec![ProblemRoot {
                needs: vec![0],
                ..Default::default()
            }],
        };
        assert_eq!(greedy(&p).unwrap(), vec![BTreeSet::from([1, 2, 3])]);
    }

    #[test]
    fn ignores_reuse_unless_forced() {
        // root 0 pins n1 = e(c0); root 1 needs c2 = {s(c1) cost 1, t(c0) cost 10}
        // where c1 = {n1}; n1 is forbidden at root 1
        let p = Problem {
            classes: vec![vec![0], vec![1], vec![2, 3]],
            nodes: vec![
                ProblemNode {
                    class: 0,
                    cost: 1,
                    children: vec![],
                },
                ProblemNode {
                    class: 1,
                    cost: 1,
                    children: vec![0],
                },
                ProblemNode {
                    class: 2,
                    cost: 1,
                    children: vec![1],
                },
                ProblemNode {
                    class: 2,
                    cost: 10,
                    children: vec![0],
                },
            ],
            roots: vec![
                ProblemRoot {
                    needs: vec![1],
                    pinned: Some(1),
                    ..Default::default()
                },
                ProblemRoot {
                    needs: vec![2],
                    dominators: vec![0],
                    forbidden: [1].into(),
                    ..Default::default()
                },
            ],
        };
        let s = greedy(&p).unwrap();
        assert_eq!(s, vec![BTreeSet::from([0, 1]), BTreeSet::from([2])]);
        assert_eq!(p.check(&s), Ok(3));
    }

    #[test]
    fn prices_reused_values_as_recomputed() {
        // root 0 pins an expensive e(c0); root 1 needs c2 = {s(c1), t(c0)}
        let p = Problem {
            classes: vec![vec![0], vec![1], vec![2, 3]],
            nodes: vec![
                ProblemNode {
                    class: 0,
                    cost: 1,
                    children: vec![],
                },
                ProblemNode {
                    class: 1,
                    cost: 10,
                    children: vec![0],
                },
                ProblemNode {
                    class: 2,
                    cost: 1,
                    children: vec![1],
                },
                ProblemNode {
                    class: 2,
                    cost: 5,
                    children: vec![0],
                },
            ],
            roots: vec![
                ProblemRoot {
                    needs: vec![1],
                    pinned: Some(1),
                    ..Default::default()
                },
                ProblemRoot {
                    needs: vec![2],
                    dominators: vec![0],
                    forbidden: [1].into(),
                    ..Default::default()
                },
            ],
        };
        let s = greedy(&p).unwrap();
        assert_eq!(s, vec![BTreeSet::from([0, 1]), BTreeSet::from([0, 3])]);
        assert_eq!(p.check(&s), Ok(17));
    }

    #[test]
    fn reports_unextractable_roots() {
        let mut p = looped();
        p.roots[0].forbidden = [0].into();
        assert!(greedy(&p).is_err());
    }
}
