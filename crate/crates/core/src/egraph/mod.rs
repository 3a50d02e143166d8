//! Hash-consed e-graph with deferred (worklist) rebuilding and a type
//! analysis per e-class.

pub(crate) mod dot;
mod pattern;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::literal::Literal;
use crate::types::{typejoin, NoMethodError, TypeInfo, TypeUniverse};

pub use dot::egraph_dot;
pub use pattern::{Constraint, Match, Pattern, Subst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EClassId(pub usize);

impl fmt::Display for EClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Head {
    Call(String),
    /// Literal plus its type name.
    Const(Literal, String),
    /// `(block, index)`; function parameters are the entry block's arguments.
    BlockArg(usize, usize),
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Call(name) => f.write_str(name),
            Head::Const(l, _) => write!(f, "{l}"),
            Head::BlockArg(b, k) => write!(f, "arg{k}@bb{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ENode {
    pub head: Head,
    pub children: Vec<EClassId>,
}

impl ENode {
    pub fn call(name: &str, children: Vec<EClassId>) -> Self {
        ENode {
            head: Head::Call(name.to_string()),
            children,
        }
    }

    pub fn constant(lit: Literal, ty: &str) -> Self {
        ENode {
            head: Head::Const(lit, ty.to_string()),
            children: Vec::new(),
        }
    }

    pub fn block_arg(block: usize, index: usize) -> Self {
        ENode {
            head: Head::BlockArg(block, index),
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn func(&self) -> Option<&str> {
        match &self.head {
            Head::Call(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct EClass {
    nodes: Vec<ENode>,
    parents: Vec<(ENode, EClassId)>,
    info: TypeInfo,
}

/// A class whose analysis changed and whose parents must be re-inferred,
/// tagged with the rule responsible (for error messages).
type AnalysisWork = (EClassId, Option<Arc<str>>);

#[derive(Debug, Clone)]
pub struct EGraph {
    universe: Arc<TypeUniverse>,
    parent: Vec<usize>,
    classes: Vec<Option<EClass>>,
    memo: HashMap<ENode, EClassId>,
    pending: Vec<(ENode, EClassId)>,
    analysis_pending: Vec<AnalysisWork>,
    origin: Option<Arc<str>>,
}

impl EGraph {
    pub fn new(universe: Arc<TypeUniverse>) -> Self {
        EGraph {
            universe,
            parent: Vec::new(),
            classes: Vec::new(),
            memo: HashMap::new(),
            pending: Vec::new(),
            analysis_pending: Vec::new(),
            origin: None,
        }
    }

    pub fn universe(&self) -> &TypeUniverse {
        &self.universe
    }

    pub fn universe_arc(&self) -> Arc<TypeUniverse> {
        self.universe.clone()
    }

    /// Names the rule responsible for subsequent additions and merges.
    pub fn set_origin(&mut self, rule: Option<&str>) {
        self.origin = rule.map(Arc::from);
    }

    pub fn find(&self, mut id: EClassId) -> EClassId {
        while self.parent[id.0] != id.0 {
            id = EClassId(self.parent[id.0]);
        }
        id
    }

    fn find_compress(&mut self, id: EClassId) -> EClassId {
        let root = self.find(id);
        let mut cur = id.0;
        while self.parent[cur] != root.0 {
            let next = self.parent[cur];
            self.parent[cur] = root.0;
            cur = next;
        }
        root
    }

    pub fn canonicalize(&self, n: &ENode) -> ENode {
        ENode {
            head: n.head.clone(),
            children: n.children.iter().map(|c| self.find(*c)).collect(),
        }
    }

    /// Class already holding `n`, if any.
    pub fn lookup(&self, n: &ENode) -> Option<EClassId> {
        self.memo.get(&self.canonicalize(n)).map(|c| self.find(*c))
    }

    fn class(&self, id: EClassId) -> &EClass {
        self.classes[self.find(id).0]
            .as_ref()
            .expect("canonical class exists")
    }

    fn class_mut(&mut self, id: EClassId) -> &mut EClass {
        let r = self.find(id);
        self.classes[r.0].as_mut().expect("canonical class exists")
    }

    /// Type a node would get on its own.
    pub fn make_info(&self, n: &ENode) -> Result<TypeInfo, NoMethodError> {
        match &n.head {
            Head::Const(l, t) => Ok(TypeInfo::Literal(l.clone(), t.clone())),
            Head::BlockArg(..) => Ok(TypeInfo::of(crate::types::ANY)),
            Head::Call(f) => {
                let args: Vec<TypeInfo> =
                    n.children.iter().map(|c| self.info(*c).clone()).collect();
                self.universe.infer(f, &args).map_err(|mut e| {
                    e.rule = self.origin.as_deref().map(str::to_string);
                    e
                })
            }
        }
    }

    /// Adds `n`, inferring its type from its children.
    pub fn add(&mut self, n: ENode) -> Result<EClassId, NoMethodError> {
        if let Some(c) = self.lookup(&n) {
            return Ok(c);
        }
        let info = self.make_info(&self.canonicalize(&n))?;
        Ok(self.add_with_info(n, info))
    }

    /// Adds `n` with a caller-supplied type (used for block arguments and
    /// statements whose declared type is known). If `n` already exists the
    /// type is joined into its class.
    pub fn add_with_info(&mut self, n: ENode, info: TypeInfo) -> EClassId {
        let n = self.canonicalize(&n);
        if let Some(&c) = self.memo.get(&n) {
            let c = self.find(c);
            self.join_info(c, &info);
            return c;
        }
        let id = EClassId(self.classes.len());
        self.parent.push(id.0);
        let mut seen = Vec::new();
        for ch in &n.children {
            if !seen.contains(ch) {
                seen.push(*ch);
                self.class_mut(*ch).parents.push((n.clone(), id));
            }
        }
        self.classes.push(Some(EClass {
            nodes: vec![n.clone()],
            parents: Vec::new(),
            info,
        }));
        self.memo.insert(n, id);
        id
    }

    fn join_info(&mut self, c: EClassId, info: &TypeInfo) {
        let u = self.universe.clone();
        let cls = self.class_mut(c);
        let joined = typejoin(&u, &cls.info, info);
        if joined != cls.info {
            cls.info = joined;
            let origin = self.origin.clone();
            self.analysis_pending.push((c, origin));
        }
    }

    /// Unions two classes. Congruence and analysis are restored by
    /// [`EGraph::rebuild`]. Returns the canonical id and whether anything changed.
    pub fn merge(&mut self, a: EClassId, b: EClassId) -> (EClassId, bool) {
        let (a, b) = (self.find_compress(a), self.find_compress(b));
        if a == b {
            return (a, false);
        }
        let (root, other) = if a < b { (a, b) } else { (b, a) };
        self.parent[other.0] = root.0;
        let loser = self.classes[other.0]
            .take()
            .expect("canonical class exists");
        let u = self.universe.clone();
        let winner = self.classes[root.0]
            .as_mut()
            .expect("canonical class exists");
        let joined = typejoin(&u, &winner.info, &loser.info);
        let changed = joined != winner.info || joined != loser.info;
        winner.info = joined;
        winner.nodes.extend(loser.nodes);
        self.pending.extend(loser.parents.iter().cloned());
        winner.parents.extend(loser.parents);
        if changed {
            self.analysis_pending.push((root, self.origin.clone()));
        }
        (root, true)
    }

    pub fn needs_rebuild(&self) -> bool {
        !self.pending.is_empty() || !self.analysis_pending.is_empty()
    }

    /// Restores congruence and the hash-cons, then re-infers parent types to
    /// a fixpoint.
    pub fn rebuild(&mut self) -> Result<(), NoMethodError> {
        loop {
            while let Some((node, cls)) = self.pending.pop() {
                if self
                    .memo
                    .get(&node)
                    .is_some_and(|c| self.find(*c) == self.find(cls))
                {
                    self.memo.remove(&node);
                }
                let canon = self.canonicalize(&node);
                match self.memo.get(&canon).copied() {
                    Some(other) if self.find(other) != self.find(cls) => {
                        self.merge(other, cls);
                    }
                    _ => {
                        let c = self.find(cls);
                        self.memo.insert(canon, c);
                    }
                }
            }
            if let Some((c, origin)) = self.analysis_pending.pop() {
                let saved = std::mem::replace(&mut self.origin, origin);
                let res = self.reinfer_parents(c);
                self.origin = saved;
                res?;
                continue;
            }
            // final sweep: canonical node lists and a fresh hash-cons; any
            // collision left over is a missed congruence and is queued
            if !self.normalize() {
                break;
            }
        }
        Ok(())
    }

    fn reinfer_parents(&mut self, c: EClassId) -> Result<(), NoMethodError> {
        let parents = self.class(c).parents.clone();
        for (pnode, pcls) in parents {
            let n = self.canonicalize(&pnode);
            let info = self.make_info(&n)?;
            let pc = self.find(pcls);
            self.join_info(pc, &info);
        }
        Ok(())
    }

    /// Returns true if it found more work.
    fn normalize(&mut self) -> bool {
        let mut memo: HashMap<ENode, EClassId> = HashMap::with_capacity(self.memo.len());
        let mut collisions = Vec::new();
        for i in 0..self.classes.len() {
            let Some(cls) = self.classes[i].take() else {
                continue;
            };
            let mut seen = HashSet::new();
            let nodes: Vec<ENode> = cls
                .nodes
                .iter()
                .map(|n| self.canonicalize(n))
                .filter(|n| seen.insert(n.clone()))
                .collect();
            let mut seen = HashSet::new();
            let parents: Vec<(ENode, EClassId)> = cls
                .parents
                .iter()
                .map(|(n, c)| (self.canonicalize(n), self.find(*c)))
                .filter(|p| seen.insert(p.clone()))
                .collect();
            for n in &nodes {
                if let Some(prev) = memo.insert(n.clone(), EClassId(i)) {
                    if prev.0 != i {
                        collisions.push((prev, EClassId(i)));
                    }
                }
            }
            self.classes[i] = Some(EClass {
                nodes,
                parents,
                info: cls.info,
            });
        }
        self.memo = memo;
        let found = !collisions.is_empty();
        for (a, b) in collisions {
            self.merge(a, b);
        }
        found
    }

    /// Canonical class ids in ascending order.
    pub fn class_ids(&self) -> Vec<EClassId> {
        (0..self.classes.len())
            .filter(|i| self.classes[*i].is_some())
            .map(EClassId)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.iter().flatten().count()
    }

    pub fn num_nodes(&self) -> usize {
        self.classes.iter().flatten().map(|c| c.nodes.len()).sum()
    }

    /// Nodes of a class in insertion order.
    pub fn nodes(&self, c: EClassId) -> &[ENode] {
        &self.class(c).nodes
    }

    pub fn parents(&self, c: EClassId) -> &[(ENode, EClassId)] {
        &self.class(c).parents
    }

    pub fn info(&self, c: EClassId) -> &TypeInfo {
        &self.class(c).info
    }

    /// A literal stored in the class whose type is a subtype of `ty`.
    pub fn literal_of(&self, c: EClassId, ty: &str) -> Option<(&Literal, &str)> {
        self.nodes(c).iter().find_map(|n| match &n.head {
            Head::Const(l, t) if self.universe.is_subtype(t, ty) => Some((l, t.as_str())),
            _ => None,
        })
    }
}
