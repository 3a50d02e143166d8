//! The extraction ILP: variables, constraint families and LP text output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write};

use super::cycles::ClassCycle;
use super::problem::{Problem, Selection};
use crate::ilp::{LinearConstraint, Model, Sense};

/// Which part of the formulation a constraint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    /// A selected node's child classes are covered here or at a dominator.
    ChildCoverage,
    /// A node outside r(i) is selected only if a parent is selected here.
    ParentDemand,
    /// Every class in r(i) is covered here or at a dominator.
    RootCoverage,
    /// `v` excludes the cycle nodes of its class.
    CycleExclusion,
    /// `v` is set when no cycle node of its class is selected.
    CycleLink,
    /// Some class of every cycle has `v` set.
    CycleBreak,
    /// The statement's own effectful call is selected.
    Pin,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::ChildCoverage => "c1",
            Family::ParentDemand => "c2",
            Family::RootCoverage => "c3",
            Family::CycleExclusion => "c4",
            Family::CycleLink => "c5",
            Family::CycleBreak => "c6",
            Family::Pin => "pin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Node `node` selected at root `root`.
    W { root: usize, node: usize },
    /// Cycle `cycle` broken at its position `pos` for root `root`.
    V {
        cycle: usize,
        pos: usize,
        root: usize,
    },
}

#[derive(Debug, Clone)]
pub struct IlpModel {
    pub model: Model,
    pub vars: Vec<Var>,
    pub families: Vec<Family>,
    w_index: BTreeMap<(usize, usize), usize>,
}

impl IlpModel {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.model.constraints.len()
    }

    pub fn count(&self, f: Family) -> usize {
        self.families.iter().filter(|x| **x == f).count()
    }

    pub fn w(&self, root: usize, node: usize) -> Option<usize> {
        self.w_index.get(&(root, node)).copied()
    }

    pub fn decode(&self, x: &[bool], roots: usize) -> Selection {
        let mut sel = vec![BTreeSet::new(); roots];
        for (k, v) in self.vars.iter().enumerate() {
            if let (Var::W { root, node }, true) = (v, x[k]) {
                sel[*root].insert(*node);
            }
        }
        sel
    }

    /// The assignment corresponding to `sel`, with every `v` set to its
    /// implied value. `None` if `sel` uses a node that has no variable.
    pub fn encode(&self, cycles: &[ClassCycle], sel: &Selection) -> Option<Vec<bool>> {
        let mut x = vec![false; self.vars.len()];
        for (i, s) in sel.iter().enumerate() {
            for &n in s {
                x[self.w(i, n)?] = true;
            }
        }
        for (k, v) in self.vars.iter().enumerate() {
            if let Var::V { cycle, pos, root } = *v {
                x[k] = !cycles[cycle].nodes[pos]
                    .iter()
                    .any(|n| sel[root].contains(n));
            }
        }
        Some(x)
    }

    fn var_name(&self, k: usize) -> String {
        match self.vars[k] {
            Var::W { root, node } => format!("w_r{root}_n{node}"),
            Var::V { cycle, pos, root } => format!("v_y{cycle}_p{pos}_r{root}"),
        }
    }

    /// CPLEX LP text for external solvers.
    pub fn to_lp(&self) -> String {
        let mut out = String::from("\\ e-graph extraction model\nMinimize\n obj:");
        let terms = |out: &mut String, coeffs: &mut dyn Iterator<Item = (usize, i64)>| {
            let mut any = false;
            for (i, (v, a)) in coeffs.enumerate() {
                if i > 0 && i % 8 == 0 {
                    out.push_str("\n   ");
                }
                let sign = if a < 0 { '-' } else { '+' };
                if !any && a >= 0 {
                    let _ = write!(out, " {} {}", a, self.var_name(v));
                } else {
                    let _ = write!(out, " {sign} {} {}", a.abs(), self.var_name(v));
                }
                any = true;
            }
            if !any {
                out.push_str(" 0");
            }
        };
        terms(
            &mut out,
            &mut self
                .model
                .costs
                .iter()
                .copied()
                .enumerate()
                .filter(|(_, c)| *c != 0),
        );
        out.push_str("\nSubject To\n");
        let mut seq: BTreeMap<Family, usize> = BTreeMap::new();
        for (c, fam) in self.model.constraints.iter().zip(&self.families) {
            let k = seq.entry(*fam).or_default();
            let _ = write!(out, " {}_{}:", fam.label(), k);
            *k += 1;
            terms(&mut out, &mut c.coeffs.iter().copied());
            let op = match c.sense {
                Sense::Ge => ">=",
                Sense::Le => "<=",
                Sense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", c.rhs);
        }
        out.push_str("Binary\n");
        for k in 0..self.vars.len() {
            let _ = writeln!(out, " {}", self.var_name(k));
        }
        out.push_str("End\n");
        out
    }
}

impl fmt::Display for IlpModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_lp())
    }
}

/// Builds the model for `p`. Variables exist only for nodes allowed at a
/// root and reachable from its needs; `w` variables come first, root-major,
/// then `v` variables.
pub fn build(p: &Problem, cycles: &[ClassCycle]) -> IlpModel {
    let mut model = Model::default();
    let mut vars = Vec::new();
    let mut w_index = BTreeMap::new();
    let reach: Vec<BTreeSet<usize>> = (0..p.roots.len()).map(|i| p.reach(i)).collect();

    let mut keys = BTreeSet::new();
    for (i, r) in reach.iter().enumerate() {
        for &c in r {
            keys.extend(
                p.classes[c]
                    .iter()
                    .filter(|&&n| p.allowed(i, n))
                    .map(|&n| (i, n)),
            );
        }
    }
    for (i, n) in keys {
        w_index.insert((i, n), model.add_var(p.nodes[n].cost));
        vars.push(Var::W { root: i, node: n });
    }

    let w = |i: usize, n: usize| w_index.get(&(i, n)).copied();
    let class_vars = |i: usize, c: usize| -> Vec<usize> {
        p.classes[c].iter().filter_map(|&n| w(i, n)).collect()
    };
    // selections of class c at i or any dominator of i
    let coverage = |i: usize, c: usize| -> Vec<(usize, i64)> {
        std::iter::once(i)
            .chain(p.roots[i].dominators.iter().copied())
            .flat_map(|j| class_vars(j, c))
            .map(|v| (v, 1))
            .collect()
    };

    let mut constraints = Vec::new();
    let mut families = Vec::new();
    let mut push = |c: LinearConstraint, f: Family| {
        constraints.push(c);
        families.push(f);
    };

    for (i, root) in p.roots.iter().enumerate() {
        if let Some(pin) = root.pinned {
            match w(i, pin) {
                Some(v) => push(LinearConstraint::ge(vec![(v, 1)], 1), Family::Pin),
                // no variable: the model must be infeasible
                None => push(LinearConstraint::ge(vec![], 1), Family::Pin),
            }
        }
        for &c in &reach[i] {
            for &n in &p.classes[c] {
                let Some(x) = w(i, n) else { continue };
                for k in p.child_classes(n) {
                    let mut row = coverage(i, k);
                    row.push((x, -1));
                    push(LinearConstraint::ge(row, 0), Family::ChildCoverage);
                }
            }
        }
        for &c in &reach[i] {
            if root.needs.contains(&c) {
                continue;
            }
            let parents: Vec<(usize, i64)> = reach[i]
                .iter()
                .flat_map(|&pc| p.classes[pc].iter())
                .filter(|&&pn| p.nodes[pn].children.contains(&c))
                .filter_map(|&pn| w(i, pn))
                .map(|v| (v, 1))
                .collect();
            for &n in &p.classes[c] {
                let Some(x) = w(i, n) else { continue };
                let mut row = parents.clone();
                row.push((x, -1));
                push(LinearConstraint::ge(row, 0), Family::ParentDemand);
            }
        }
        let mut seen = BTreeSet::new();
        for &c in &root.needs {
            if seen.insert(c) {
                push(
                    LinearConstraint::ge(coverage(i, c), 1),
                    Family::RootCoverage,
                );
            }
        }
    }

    for (y, cyc) in cycles.iter().enumerate() {
        for (i, r) in reach.iter().enumerate() {
            if !cyc.classes.iter().all(|c| r.contains(c)) {
                continue;
            }
            let members: Vec<Vec<usize>> = cyc
                .nodes
                .iter()
                .map(|ns| ns.iter().filter_map(|&n| w(i, n)).collect())
                .collect();
            if members.iter().any(|m| m.is_empty()) {
                // the cycle cannot be closed at this root
                continue;
            }
            let mut vs = Vec::new();
            for (pos, m) in members.iter().enumerate() {
                let v = model.add_var(0);
                vars.push(Var::V {
                    cycle: y,
                    pos,
                    root: i,
                });
                vs.push((v, 1));
                for &x in m {
                    push(
                        LinearConstraint::le(vec![(v, 1), (x, 1)], 1),
                        Family::CycleExclusion,
                    );
                }
                let mut row: Vec<(usize, i64)> = m.iter().map(|&x| (x, 1)).collect();
                row.push((v, 1));
                push(LinearConstraint::ge(row, 1), Family::CycleLink);
            }
            push(LinearConstraint::ge(vs, 1), Family::CycleBreak);
        }
    }
    model.constraints = constraints;
    IlpModel {
        model,
        vars,
        families,
        w_index,
    }
}

#[cfg(test)]
mod tests {
    use super::super::cycles::find_cycles;
    use super::super::problem::tests::looped;
    use super::super::problem::{ProblemNode, ProblemRoot};
    use super::*;
    use crate::ilp::{solve, Status};

    fn chain() -> Problem {
        // c0 = {f(c1)}, c1 = {g(c2)}, c2 = {a}
        Problem {
            classes: vec![vec![0], vec![1], vec![2]],
            nodes: vec![
                ProblemNode {
                    class: 0,
                    cost: 1,
                    children: vec![1],
                },
                ProblemNode {
                    class: 1,
                    cost: 1,
                    children: vec![2],
                },
                ProblemNode {
                    class: 2,
                    cost: 1,
                    children: vec![],
                },
            ],
            roots: vec![ProblemRoot {
                needs: vec![0],
                ..Default::default()
            }],
        }
    }

    #[test]
    fn straight_line_uses_three_families() {
        let p = chain();
        let m = build(&p, &[]);
        assert_eq!(m.num_vars(), 3);
        assert_eq!(m.count(Family::ChildCoverage), 2);
        assert_eq!(m.count(Family::ParentDemand), 2);
        assert_eq!(m.count(Family::RootCoverage), 1);
        assert_eq!(m.num_constraints(), 5);
        let s = solve(&m.model, None, None);
        assert_eq!(s.objective, Some(3));
        assert_eq!(
            m.decode(&s.assignment.unwrap(), 1),
            vec![BTreeSet::from([0, 1, 2])]
        );
    }

    #[test]
    fn two_class_cycle_gets_v_per_class_and_root() {
        let mut p = looped();
        p.roots.push(ProblemRoot {
            needs: vec![1],
            ..Default::default()
        });
        let cycles = find_cycles(&p, 10).unwrap();
        let m = build(&p, &cycles);
        let vs = m.vars.iter().filter(|v| matches!(v, Var::V { .. })).count();
        assert_eq!(vs, 2 * 2);
        let s = solve(&m.model, None, None);
        assert_eq!(s.status, Status::Optimal);
        let sel = m.decode(&s.assignment.unwrap(), 2);
        assert_eq!(p.check(&sel), Ok(3));
    }

    #[test]
    fn encode_round_trips() {
        let p = looped();
        let cycles = find_cycles(&p, 10).unwrap();
        let m = build(&p, &cycles);
        let sel = vec![BTreeSet::from([0, 1])];
        let x = m.encode(&cycles, &sel).unwrap();
        assert!(m.model.feasible(&x));
        assert_eq!(m.decode(&x, 1), sel);
        let bad = m.encode(&cycles, &vec![BTreeSet::from([0, 2])]).unwrap();
        assert!(!m.model.feasible(&bad));
    }

    #[test]
    fn lp_text() {
        let lp = build(&chain(), &[]).to_lp();
        assert!(lp.starts_with(
            "\\ e-graph extraction model\nMinimize\n obj: 1 w_r0_n0 + 1 w_r0_n1 + 1 w_r0_n2\n"
        ));
        assert!(lp.contains(" c1_0: 1 w_r0_n1 - 1 w_r0_n0 >= 0\n"));
        assert!(lp.contains(" c3_0: 1 w_r0_n0 >= 1\n"));
        assert!(lp.ends_with("Binary\n w_r0_n0\n w_r0_n1\n w_r0_n2\nEnd\n"));
    }
}
