//! IR to e-graph plus CFG skeleton.
//!
//! Pure statements become hash-consed e-nodes. Terminators and calls whose
//! method may have side effects are also recorded, in program order, in the
//! skeleton so that extraction has to keep them.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::egraph::{EClassId, EGraph, ENode};
use crate::ir::{
    dominator_tree, BlockId, DomTree, FunctionIR, IrError, StmtKind, StmtLoc, Terminator, ValueId,
};
use crate::types::{NoMethodError, TypeInfo, TypeUniverse};

#[derive(Debug, Clone, PartialEq)]
pub enum SkeletonKind {
    /// An effectful call; `node` is the call e-node as converted.
    EffectCall {
        class: EClassId,
        node: ENode,
        ty: String,
    },
    Goto {
        target: BlockId,
        args: Vec<EClassId>,
    },
    Branch {
        cond: EClassId,
        then_to: (BlockId, Vec<EClassId>),
        else_to: (BlockId, Vec<EClassId>),
    },
    Return(EClassId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonStmt {
    /// Dense global index (blocks in order, statements in order).
    pub id: usize,
    pub loc: StmtLoc,
    pub kind: SkeletonKind,
    pub detached: bool,
}

impl SkeletonStmt {
    /// Classes this statement reads; the ILP's r(i).
    pub fn roots(&self) -> Vec<EClassId> {
        match &self.kind {
            SkeletonKind::EffectCall { class, .. } => vec![*class],
            SkeletonKind::Goto { args, .. } => args.clone(),
            SkeletonKind::Branch {
                cond,
                then_to,
                else_to,
            } => std::iter::once(*cond)
                .chain(then_to.1.iter().copied())
                .chain(else_to.1.iter().copied())
                .collect(),
            SkeletonKind::Return(c) => vec![*c],
        }
    }

    pub fn is_effect(&self) -> bool {
        matches!(self.kind, SkeletonKind::EffectCall { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfgSkeleton {
    pub function: String,
    pub stmts: Vec<SkeletonStmt>,
    /// Statement ids per block, in order.
    pub blocks: Vec<Vec<usize>>,
    /// Per block, its argument classes and declared types (entry: parameters).
    pub block_args: Vec<Vec<(EClassId, String)>>,
}

impl CfgSkeleton {
    pub fn effect_count(&self) -> usize {
        self.stmts.iter().filter(|s| s.is_effect()).count()
    }

    /// Detaches every attached effect statement whose call node is `node` in
    /// class `class`. Returns how many flipped.
    pub fn detach_matching(&mut self, g: &EGraph, class: EClassId, node: &ENode) -> usize {
        let mut n = 0;
        for s in &mut self.stmts {
            if let SkeletonKind::EffectCall {
                class: c, node: sn, ..
            } = &s.kind
            {
                if !s.detached
                    && g.find(*c) == g.find(class)
                    && g.canonicalize(sn) == g.canonicalize(node)
                {
                    s.detached = true;
                    n += 1;
                }
            }
        }
        n
    }

    /// Re-canonicalizes every referenced class after merges.
    pub fn canonicalize(&mut self, g: &EGraph) {
        let f = |c: &mut EClassId| *c = g.find(*c);
        for s in &mut self.stmts {
            match &mut s.kind {
                SkeletonKind::EffectCall { class, node, .. } => {
                    f(class);
                    *node = g.canonicalize(node);
                }
                SkeletonKind::Goto { args, .. } => args.iter_mut().for_each(f),
                SkeletonKind::Branch {
                    cond,
                    then_to,
                    else_to,
                } => {
                    f(cond);
                    then_to.1.iter_mut().for_each(f);
                    else_to.1.iter_mut().for_each(f);
                }
                SkeletonKind::Return(c) => f(c),
            }
        }
        for args in &mut self.block_args {
            args.iter_mut().for_each(|(c, _)| f(c));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConversionError {
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("function is not valid SSA: {0}")]
    Invalid(String),
    #[error("{value}: {source}")]
    NoMethod {
        value: ValueId,
        #[source]
        source: NoMethodError,
    },
    #[error(transparent)]
    Analysis(NoMethodError),
}

/// Result of converting one function.
#[derive(Debug, Clone)]
pub struct Converted {
    pub egraph: EGraph,
    pub skeleton: CfgSkeleton,
    pub dom: DomTree,
    /// Class of every SSA value of the input, indexed by value number.
    pub value_classes: Vec<EClassId>,
    /// Declared type of every SSA value, indexed by value number.
    pub value_types: Vec<String>,
}

impl Converted {
    /// Declared types of input values, keyed by their (current) class.
    pub fn declared_types(&self) -> HashMap<EClassId, String> {
        let mut out = HashMap::new();
        for (c, t) in self.value_classes.iter().zip(&self.value_types) {
            out.entry(self.egraph.find(*c)).or_insert_with(|| t.clone());
        }
        out
    }

    /// DOT rendering: one cluster per e-class and one per skeleton block.
    pub fn to_dot(&self) -> String {
        let g = &self.egraph;
        let mut out = String::from("digraph egraph {\n  compound=true;\n  rankdir=LR;\n");
        crate::egraph::dot::write_clusters(g, &mut out);
        for (b, ids) in self.skeleton.blocks.iter().enumerate() {
            let _ = writeln!(
                out,
                "  subgraph cluster_bb{b} {{\n    label=\"bb{b}\"; style=solid;"
            );
            for &i in ids {
                let s = &self.skeleton.stmts[i];
                let label = match &s.kind {
                    SkeletonKind::EffectCall { node, .. } => format!("{}(...)", node.head),
                    SkeletonKind::Goto { target, .. } => format!("goto bb{target}"),
                    SkeletonKind::Branch {
                        then_to, else_to, ..
                    } => {
                        format!("br bb{}, bb{}", then_to.0, else_to.0)
                    }
                    SkeletonKind::Return(_) => "ret".to_string(),
                };
                let style = if s.detached { ", style=dashed" } else { "" };
                let _ = writeln!(out, "    s{i} [shape=box, label=\"{label}\"{style}];");
            }
            out.push_str("  }\n");
        }
        for s in &self.skeleton.stmts {
            for (k, c) in s.roots().iter().enumerate() {
                let c = g.find(*c);
                let _ = writeln!(
                    out,
                    "  s{} -> n{}_0 [lhead=cluster_{}, label=\"{}\"];",
                    s.id, c.0, c.0, k
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

/// True iff the method `call` dispatches to may have side effects.
pub fn effectful(g: &EGraph, call: &ENode) -> Result<bool, NoMethodError> {
    match call.func() {
        None => Ok(false),
        Some(f) => {
            let args: Vec<TypeInfo> = call.children.iter().map(|c| g.info(*c).clone()).collect();
            g.universe().effectful(f, &args)
        }
    }
}

/// Converts `f` into an e-graph and CFG skeleton, visiting blocks in
/// dominator-tree pre-order.
pub fn ir_to_egraph(
    f: &FunctionIR,
    universe: Arc<TypeUniverse>,
) -> Result<Converted, ConversionError> {
    let dom = dominator_tree(f)?;
    if let Some(v) = crate::ir::validate(f).first() {
        return Err(ConversionError::Invalid(v.to_string()));
    }
    let mut g = EGraph::new(universe);
    let nvalues = f.value_types().len();
    let mut value_classes = vec![None; nvalues];
    let mut value_types = vec![String::new(); nvalues];
    for (v, t) in f.value_types() {
        value_types[v.0] = t;
    }

    let mut block_args = vec![Vec::new(); f.blocks.len()];
    for (k, (v, ty)) in f.params.iter().enumerate() {
        let c = g.add_with_info(ENode::block_arg(0, k), TypeInfo::of(ty));
        value_classes[v.0] = Some(c);
        block_args[0].push((c, ty.clone()));
    }
    let mut per_block: Vec<Vec<SkeletonKind>> = vec![Vec::new(); f.blocks.len()];
    for &b in &dom.preorder {
        let block = &f.blocks[b];
        if b > 0 {
            for (k, (v, ty)) in block.args.iter().enumerate() {
                let c = g.add_with_info(ENode::block_arg(b, k), TypeInfo::of(ty));
                value_classes[v.0] = Some(c);
                block_args[b].push((c, ty.clone()));
            }
        }
        let class_of =
            |v: &ValueId, vc: &[Option<EClassId>]| vc[v.0].expect("validated: defined before use");
        for s in &block.statements {
            let c = match &s.kind {
                StmtKind::Const(l) => g.add_with_info(
                    ENode::constant(l.clone(), &s.ty),
                    TypeInfo::Literal(l.clone(), s.ty.clone()),
                ),
                StmtKind::Call { func, args } => {
                    let children = args.iter().map(|a| class_of(a, &value_classes)).collect();
                    let node = ENode::call(func, children);
                    let eff = effectful(&g, &node).map_err(|source| ConversionError::NoMethod {
                        value: s.dest,
                        source,
                    })?;
                    let c = g.add_with_info(node.clone(), TypeInfo::of(&s.ty));
                    if eff {
                        per_block[b].push(SkeletonKind::EffectCall {
                            class: c,
                            node,
                            ty: s.ty.clone(),
                        });
                    }
                    c
                }
            };
            value_classes[s.dest.0] = Some(c);
        }
        let target = |t: &crate::ir::BranchTarget, vc: &[Option<EClassId>]| {
            (
                t.block,
                t.args.iter().map(|a| class_of(a, vc)).collect::<Vec<_>>(),
            )
        };
        per_block[b].push(match &block.terminator {
            Terminator::Return(v) => SkeletonKind::Return(class_of(v, &value_classes)),
            Terminator::Goto(t) => {
                let (target, args) = target(t, &value_classes);
                SkeletonKind::Goto { target, args }
            }
            Terminator::Branch {
                cond,
                then_to,
                else_to,
            } => SkeletonKind::Branch {
                cond: class_of(cond, &value_classes),
                then_to: target(then_to, &value_classes),
                else_to: target(else_to, &value_classes),
            },
        });
    }

    let mut stmts = Vec::new();
    let mut blocks = Vec::new();
    for (b, kinds) in per_block.into_iter().enumerate() {
        let mut ids = Vec::new();
        for (index, kind) in kinds.into_iter().enumerate() {
            ids.push(stmts.len());
            stmts.push(SkeletonStmt {
                id: stmts.len(),
                loc: StmtLoc { block: b, index },
                kind,
                detached: false,
            });
        }
        blocks.push(ids);
    }
    // declared and inferred types may differ; settle the analysis once
    g.rebuild().map_err(ConversionError::Analysis)?;
    let mut skeleton = CfgSkeleton {
        function: f.name.clone(),
        stmts,
        blocks,
        block_args,
    };
    skeleton.canonicalize(&g);
    Ok(Converted {
        egraph: g,
        skeleton,
        dom,
        value_classes: value_classes
            .into_iter()
            .map(|c| c.expect("every value is defined"))
            .collect(),
        value_types,
    })
}
