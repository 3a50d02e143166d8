//! Choosing, for every skeleton statement, the e-nodes that compute what it
//! reads. The exact method solves an ILP in which a class already selected
//! at a dominating statement counts as available; the greedy method picks the
//! cheapest tree per statement.

mod cycles;
mod greedy;
mod model;
mod problem;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conversion::{CfgSkeleton, SkeletonKind};
use crate::egraph::{EClassId, EGraph, ENode, Head};
use crate::ilp::{self, Status};
use crate::ir::{stmt_dominates, DomTree};

pub use cycles::{class_graph, find_cycles, simple_cycles, ClassCycle};
pub use greedy::greedy;
pub use model::{build as build_model, Family, IlpModel, Var};
pub use problem::{Problem, ProblemNode, ProblemRoot, Selection};

/// Johnson enumeration stops past this many cycles and extraction goes greedy.
pub const CYCLE_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub default: i64,
    pub overrides: BTreeMap<String, i64>,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            default: 1,
            overrides: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CostModelError {
    #[error("cost file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cost of `{func}` must be at least 1, got {cost}")]
    NonPositive { func: String, cost: i64 },
}

impl CostModel {
    /// Parses `{ "fn": cost, ... }`; unlisted functions and all other
    /// nodes cost 1.
    pub fn from_json(text: &str) -> Result<Self, CostModelError> {
        let overrides: BTreeMap<String, i64> = serde_json::from_str(text)?;
        if let Some((func, cost)) = overrides.iter().find(|(_, c)| **c < 1) {
            return Err(CostModelError::NonPositive {
                func: func.clone(),
                cost: *cost,
            });
        }
        Ok(CostModel {
            default: 1,
            overrides,
        })
    }

    pub fn cost(&self, n: &ENode) -> i64 {
        n.func()
            .and_then(|f| self.overrides.get(f))
            .copied()
            .unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMethod {
    Ilp,
    Greedy,
}

impl fmt::Display for ExtractionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractionMethod::Ilp => "ilp",
            ExtractionMethod::Greedy => "greedy",
        })
    }
}

impl FromStr for ExtractionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ilp" => Ok(ExtractionMethod::Ilp),
            "greedy" => Ok(ExtractionMethod::Greedy),
            _ => Err(format!(
                "unknown extraction method `{s}` (expected ilp or greedy)"
            )),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractionError {
    #[error("extraction model is infeasible")]
    Infeasible,
    #[error("greedy extraction failed: {0}")]
    Greedy(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExtractionStats {
    pub variables: usize,
    pub constraints: usize,
    pub cycles: usize,
    pub construction_ms: f64,
    pub solve_ms: f64,
    pub bb_nodes: u64,
    /// Why the ILP result was not used, if it was requested but not used.
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionSolution {
    /// How the selection was actually obtained.
    pub method: ExtractionMethod,
    pub objective: i64,
    /// Per attached skeleton statement id, its selected nodes.
    pub selected: BTreeMap<usize, Vec<(EClassId, ENode)>>,
    pub stats: ExtractionStats,
}

impl ExtractionSolution {
    /// The node selected for `class` at statement `stmt`, if any.
    pub fn node_at(&self, stmt: usize, class: EClassId) -> Option<&ENode> {
        self.selected
            .get(&stmt)?
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, n)| n)
    }

    pub fn count_calls(&self, func: &str) -> usize {
        self.selected
            .values()
            .flatten()
            .filter(|(_, n)| n.func() == Some(func))
            .count()
    }
}

/// An e-graph extraction instance with the maps back to the e-graph.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: Problem,
    pub classes: Vec<EClassId>,
    pub nodes: Vec<(EClassId, ENode)>,
    /// Skeleton statement id per root.
    pub stmts: Vec<usize>,
}

impl Instance {
    /// Roots are the attached skeleton statements in id order. An attached
    /// effectful call is pinned at its own statement and forbidden at every
    /// other root; a block argument may only be selected in blocks its block
    /// dominates.
    pub fn new(g: &EGraph, sk: &CfgSkeleton, dt: &DomTree, cm: &CostModel) -> Self {
        let classes = g.class_ids();
        let index: HashMap<EClassId, usize> =
            classes.iter().enumerate().map(|(k, c)| (*c, k)).collect();
        let mut p = Problem::default();
        let mut nodes = Vec::new();
        let mut node_index: HashMap<(EClassId, ENode), usize> = HashMap::new();
        for &c in &classes {
            let mut ns = Vec::new();
            for n in g.nodes(c) {
                let k = p.nodes.len();
                p.nodes.push(ProblemNode {
                    class: index[&c],
                    cost: cm.cost(n),
                    children: n.children.iter().map(|x| index[&g.find(*x)]).collect(),
                });
                node_index.insert((c, n.clone()), k);
                nodes.push((c, n.clone()));
                ns.push(k);
            }
            p.classes.push(ns);
        }

        let attached: Vec<usize> = sk
            .stmts
            .iter()
            .filter(|s| !s.detached)
            .map(|s| s.id)
            .collect();
        let pinned: Vec<Option<usize>> = attached
            .iter()
            .map(|&id| match &sk.stmts[id].kind {
                SkeletonKind::EffectCall { class, node, .. } => node_index
                    .get(&(g.find(*class), g.canonicalize(node)))
                    .copied(),
                _ => None,
            })
            .collect();
        let effect_nodes: BTreeSet<usize> = pinned.iter().flatten().copied().collect();

        for (r, &id) in attached.iter().enumerate() {
            let s = &sk.stmts[id];
            let mut needs = Vec::new();
            for c in s.roots() {
                let k = index[&g.find(c)];
                if !needs.contains(&k) {
                    needs.push(k);
                }
            }
            let dominators = attached
                .iter()
                .enumerate()
                .filter(|(_, &j)| stmt_dominates(dt, sk.stmts[j].loc, s.loc))
                .map(|(q, _)| q)
                .collect();
            let mut forbidden: BTreeSet<usize> = effect_nodes.clone();
            if let Some(pin) = pinned[r] {
                forbidden.remove(&pin);
            }
            for (k, (_, n)) in nodes.iter().enumerate() {
                if let Head::BlockArg(b, _) = n.head {
                    if !dt.dominates(b, s.loc.block) {
                        forbidden.insert(k);
                    }
                }
            }
            p.roots.push(ProblemRoot {
                needs,
                dominators,
                pinned: pinned[r],
                forbidden,
            });
        }
        Instance {
            problem: p,
            classes,
            nodes,
            stmts: attached,
        }
    }

    fn solution(
        &self,
        sel: &Selection,
        method: ExtractionMethod,
        stats: ExtractionStats,
    ) -> ExtractionSolution {
        let selected = sel
            .iter()
            .enumerate()
            .map(|(r, ns)| {
                (
                    self.stmts[r],
                    ns.iter().map(|&n| self.nodes[n].clone()).collect(),
                )
            })
            .collect();
        ExtractionSolution {
            method,
            objective: self.problem.objective(sel),
            selected,
            stats,
        }
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Builds the ILP for an instance, or `None` if there are too many cycles.
pub fn build_ilp(inst: &Instance) -> Option<(IlpModel, Vec<ClassCycle>)> {
    let cycles = find_cycles(&inst.problem, CYCLE_LIMIT)?;
    Some((build_model(&inst.problem, &cycles), cycles))
}

/// Extracts with `method`. ILP extraction falls back to greedy when the
/// cycle count explodes or the budget runs out before optimality is proven
/// (keeping the better of the incumbent and greedy).
pub fn extract(
    g: &EGraph,
    sk: &CfgSkeleton,
    dt: &DomTree,
    cm: &CostModel,
    method: ExtractionMethod,
    budget: Option<Duration>,
) -> Result<ExtractionSolution, ExtractionError> {
    let t = Instant::now();
    let inst = Instance::new(g, sk, dt, cm);
    let greedy_sel = greedy(&inst.problem);
    let mut stats = ExtractionStats::default();
    if method == ExtractionMethod::Greedy {
        stats.construction_ms = ms(t.elapsed());
        let sel = greedy_sel.map_err(ExtractionError::Greedy)?;
        return Ok(inst.solution(&sel, ExtractionMethod::Greedy, stats));
    }
    let Some((m, cycles)) = build_ilp(&inst) else {
        stats.construction_ms = ms(t.elapsed());
        stats.fallback = Some(format!("more than {CYCLE_LIMIT} class cycles"));
        let sel = greedy_sel.map_err(ExtractionError::Greedy)?;
        return Ok(inst.solution(&sel, ExtractionMethod::Greedy, stats));
    };
    stats.variables = m.num_vars();
    stats.constraints = m.num_constraints();
    stats.cycles = cycles.len();
    stats.construction_ms = ms(t.elapsed());

    let t = Instant::now();
    let seed = greedy_sel.as_ref().ok().and_then(|s| m.encode(&cycles, s));
    let sol = ilp::solve(&m.model, budget, seed.as_deref());
    stats.solve_ms = ms(t.elapsed());
    stats.bb_nodes = sol.nodes;
    let roots = inst.problem.roots.len();
    match (sol.status, sol.assignment) {
        (Status::Optimal, Some(x)) => {
            Ok(inst.solution(&m.decode(&x, roots), ExtractionMethod::Ilp, stats))
        }
        (Status::Timeout, incumbent) => {
            stats.fallback = Some("ILP budget exhausted".into());
            let from_ilp = incumbent.map(|x| m.decode(&x, roots));
            match (from_ilp, greedy_sel) {
                (Some(a), Ok(b)) if inst.problem.objective(&a) < inst.problem.objective(&b) => {
                    Ok(inst.solution(&a, ExtractionMethod::Ilp, stats))
                }
                (_, Ok(b)) => Ok(inst.solution(&b, ExtractionMethod::Greedy, stats)),
                (Some(a), Err(_)) => Ok(inst.solution(&a, ExtractionMethod::Ilp, stats)),
                (None, Err(e)) => Err(ExtractionError::Greedy(e)),
            }
        }
        _ => Err(ExtractionError::Infeasible),
    }
}

/// Simple cycles of the class graph of `g`, with participating nodes.
pub fn find_class_cycles(g: &EGraph) -> Vec<Vec<(EClassId, Vec<ENode>)>> {
    let classes = g.class_ids();
    let index: HashMap<EClassId, usize> =
        classes.iter().enumerate().map(|(k, c)| (*c, k)).collect();
    let adj: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| {
            let set: BTreeSet<usize> = g
                .nodes(c)
                .iter()
                .flat_map(|n| n.children.iter().map(|x| index[&g.find(*x)]))
                .collect();
            set.into_iter().collect()
        })
        .collect();
    let cycles = simple_cycles(&adj, usize::MAX).unwrap_or_default();
    cycles
        .into_iter()
        .map(|cyc| {
            let k = cyc.len();
            (0..k)
                .map(|t| {
                    let (c, next) = (classes[cyc[t]], classes[cyc[(t + 1) % k]]);
                    let ns = g
                        .nodes(c)
                        .iter()
                        .filter(|n| n.children.iter().any(|x| g.find(*x) == next))
                        .cloned()
                        .collect();
                    (c, ns)
                })
                .collect()
        })
        .collect()
}
