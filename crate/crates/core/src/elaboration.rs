//! Turning an extraction back into SSA code.
//!
//! Blocks are visited in dominator-tree pre-order with a scope of
//! materialized classes per block; a lookup walks up the immediate
//! dominators, so a value is reused wherever its definition dominates.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::conversion::{CfgSkeleton, SkeletonKind};
use crate::egraph::{EClassId, EGraph, ENode, Head};
use crate::extraction::ExtractionSolution;
use crate::ir::{
    validate, Block, BlockId, BranchTarget, DomTree, FunctionIR, Statement, StmtKind, Terminator,
    ValueId,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElaborationError {
    #[error("statement {stmt}: no node selected for class {class}")]
    MissingSelection { stmt: usize, class: EClassId },
    #[error("statement {stmt}: selection for class {class} is cyclic")]
    Cycle { stmt: usize, class: EClassId },
    #[error("block argument bb{block}[{index}] used outside the blocks it dominates")]
    ArgOutOfScope { block: BlockId, index: usize },
    #[error("elaborated function is invalid: {0}")]
    Invalid(String),
}

struct Elaborator<'a> {
    g: &'a EGraph,
    dt: &'a DomTree,
    sol: &'a ExtractionSolution,
    declared: &'a HashMap<EClassId, String>,
    scopes: Vec<HashMap<EClassId, ValueId>>,
    args: Vec<Vec<(ValueId, String)>>,
    types: HashMap<ValueId, String>,
    out: Vec<Vec<Statement>>,
    next: usize,
}

impl Elaborator<'_> {
    fn fresh(&mut self) -> ValueId {
        self.next += 1;
        ValueId(self.next - 1)
    }

    fn lookup(&self, c: EClassId, mut b: BlockId) -> Option<ValueId> {
        let c = self.g.find(c);
        loop {
            if let Some(v) = self.scopes[b].get(&c) {
                return Some(*v);
            }
            b = self.dt.idom[b]?;
        }
    }

    fn call_type(&self, class: EClassId, func: &str, args: &[ValueId]) -> String {
        if let Some(t) = self.declared.get(&class) {
            return t.clone();
        }
        let arg_types: Vec<&str> = args.iter().map(|a| self.types[a].as_str()).collect();
        match self.g.universe().dispatch(func, &arg_types) {
            Some(m) => m.ret.clone(),
            None => self.g.info(class).type_name(self.g.universe()),
        }
    }

    fn emit(
        &mut self,
        b: BlockId,
        class: EClassId,
        node: &ENode,
        ty: Option<String>,
    ) -> Result<ValueId, ElaborationError> {
        let (kind, ty) = match &node.head {
            Head::BlockArg(ab, k) => {
                // pre-registered when the block was entered
                return Err(ElaborationError::ArgOutOfScope {
                    block: *ab,
                    index: *k,
                });
            }
            Head::Const(l, t) => (StmtKind::Const(l.clone()), t.clone()),
            Head::Call(f) => {
                let mut args = Vec::with_capacity(node.children.len());
                for c in &node.children {
                    args.push(self.lookup(*c, b).expect("children are materialized first"));
                }
                let ty = ty.unwrap_or_else(|| self.call_type(class, f, &args));
                (
                    StmtKind::Call {
                        func: f.clone(),
                        args,
                    },
                    ty,
                )
            }
        };
        let dest = self.fresh();
        self.types.insert(dest, ty.clone());
        self.out[b].push(Statement { dest, ty, kind });
        self.scopes[b].insert(class, dest);
        Ok(dest)
    }

    /// Materializes `class` (and its missing dependencies, children first)
    /// using the selection of statement `stmt`.
    fn materialize(
        &mut self,
        class: EClassId,
        stmt: usize,
        b: BlockId,
    ) -> Result<ValueId, ElaborationError> {
        let class = self.g.find(class);
        let mut on_path = HashSet::new();
        let mut stack = vec![(class, false)];
        while let Some((c, expanded)) = stack.pop() {
            if !expanded && self.lookup(c, b).is_some() {
                continue;
            }
            let node = self
                .sol
                .node_at(stmt, c)
                .ok_or(ElaborationError::MissingSelection { stmt, class: c })?
                .clone();
            if expanded {
                on_path.remove(&c);
                self.emit(b, c, &node, None)?;
                continue;
            }
            if !on_path.insert(c) {
                return Err(ElaborationError::Cycle { stmt, class: c });
            }
            stack.push((c, true));
            for ch in node.children.iter().rev() {
                let ch = self.g.find(*ch);
                if self.lookup(ch, b).is_none() {
                    stack.push((ch, false));
                }
            }
        }
        Ok(self.lookup(class, b).expect("just materialized"))
    }

    fn materialize_all(
        &mut self,
        classes: &[EClassId],
        stmt: usize,
        b: BlockId,
    ) -> Result<Vec<ValueId>, ElaborationError> {
        classes
            .iter()
            .map(|c| self.materialize(*c, stmt, b))
            .collect()
    }

    /// Everything else selected at `stmt`, so dominated statements can reuse it.
    fn materialize_rest(&mut self, stmt: usize, b: BlockId) -> Result<(), ElaborationError> {
        let classes: Vec<EClassId> = match self.sol.selected.get(&stmt) {
            Some(sel) => sel.iter().map(|(c, _)| *c).collect(),
            None => return Ok(()),
        };
        for c in classes {
            if self.lookup(c, b).is_none() {
                self.materialize(c, stmt, b)?;
            }
        }
        Ok(())
    }

    fn target(
        &mut self,
        t: &(BlockId, Vec<EClassId>),
        stmt: usize,
        b: BlockId,
    ) -> Result<BranchTarget, ElaborationError> {
        Ok(BranchTarget {
            block: t.0,
            args: self.materialize_all(&t.1, stmt, b)?,
        })
    }
}

/// Rebuilds `original` from the extraction `sol`. `declared` gives the type
/// to print for classes that held a value of the input.
pub fn elaborate(
    g: &EGraph,
    sk: &CfgSkeleton,
    dt: &DomTree,
    sol: &ExtractionSolution,
    original: &FunctionIR,
    declared: &HashMap<EClassId, String>,
) -> Result<FunctionIR, ElaborationError> {
    let nblocks = original.blocks.len();
    let mut e = Elaborator {
        g,
        dt,
        sol,
        declared,
        scopes: vec![HashMap::new(); nblocks],
        args: vec![Vec::new(); nblocks],
        types: HashMap::new(),
        out: vec![Vec::new(); nblocks],
        next: 0,
    };
    for b in 0..nblocks {
        let decl = if b == 0 {
            &original.params
        } else {
            &original.blocks[b].args
        };
        for (_, ty) in decl {
            let v = e.fresh();
            e.types.insert(v, ty.clone());
            e.args[b].push((v, ty.clone()));
        }
    }
    let mut terms: Vec<Option<Terminator>> = vec![None; nblocks];
    for &b in &dt.preorder {
        for (k, (c, _)) in sk.block_args[b].iter().enumerate() {
            let v = e.args[b][k].0;
            e.scopes[b].insert(g.find(*c), v);
        }
        for &id in &sk.blocks[b] {
            let s = &sk.stmts[id];
            match &s.kind {
                SkeletonKind::EffectCall { .. } if s.detached => {}
                SkeletonKind::EffectCall { class, node, ty } => {
                    let class = g.find(*class);
                    let node = g.canonicalize(node);
                    for c in &node.children {
                        e.materialize(*c, id, b)?;
                    }
                    // effects are never reused: always emit, then shadow
                    e.emit(b, class, &node, Some(ty.clone()))?;
                    e.materialize_rest(id, b)?;
                }
                SkeletonKind::Goto { target, args } => {
                    let t = e.target(&(*target, args.clone()), id, b)?;
                    e.materialize_rest(id, b)?;
                    terms[b] = Some(Terminator::Goto(t));
                }
                SkeletonKind::Branch {
                    cond,
                    then_to,
                    else_to,
                } => {
                    let cond = e.materialize(*cond, id, b)?;
                    let then_to = e.target(then_to, id, b)?;
                    let else_to = e.target(else_to, id, b)?;
                    e.materialize_rest(id, b)?;
                    terms[b] = Some(Terminator::Branch {
                        cond,
                        then_to,
                        else_to,
                    });
                }
                SkeletonKind::Return(c) => {
                    let v = e.materialize(*c, id, b)?;
                    e.materialize_rest(id, b)?;
                    terms[b] = Some(Terminator::Return(v));
                }
            }
        }
    }
    let mut blocks = Vec::with_capacity(nblocks);
    let mut out = std::mem::take(&mut e.out).into_iter();
    for (b, term) in terms.into_iter().enumerate() {
        blocks.push(Block {
            args: if b == 0 {
                Vec::new()
            } else {
                e.args[b].clone()
            },
            statements: out.next().unwrap_or_default(),
            terminator: term
                .ok_or_else(|| ElaborationError::Invalid(format!("bb{b} has no terminator")))?,
        });
    }
    let mut f = FunctionIR {
        name: original.name.clone(),
        params: e.args[0].clone(),
        blocks,
    };
    f.renumber();
    if let Some(v) = validate(&f).first() {
        return Err(ElaborationError::Invalid(v.to_string()));
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::ir_to_egraph;
    use crate::extraction::{extract, CostModel, ExtractionMethod};
    use crate::interp::{run, MockKind, MockSpec, Value, DEFAULT_FUEL};
    use crate::ir::{parse_function, print_ir, IRProgram};
    use crate::rules::parse_rules;
    use crate::saturation::{saturate, SaturationLimits};
    use crate::types::tests::numeric_universe_with;
    use crate::types::{MethodSig, TypeUniverse};
    use std::sync::Arc;

    fn universe() -> Arc<TypeUniverse> {
        let sig = |f: &str, args: &[&str], ret: &str| MethodSig {
            func: f.into(),
            args: args.iter().map(|s| s.to_string()).collect(),
            ret: ret.into(),
            effect_free: true,
        };
        let mut u = numeric_universe_with(
            4,
            vec![
                sig("gt", &["Int64", "Int64"], "Bool"),
                sig("sub", &["Int64", "Int64"], "Int64"),
                sig("div", &["Int64", "Int64"], "Int64"),
                sig("shl", &["Int64", "Int64"], "Int64"),
            ],
        );
        u.mocks.push(MockSpec {
            func: "println".into(),
            kind: MockKind::Trace,
        });
        Arc::new(u)
    }

    fn optimize(src: &str, rules: &str) -> (FunctionIR, FunctionIR) {
        let f = parse_function(src).unwrap();
        let mut c = ir_to_egraph(&f, universe()).unwrap();
        let rs = parse_rules(rules).unwrap();
        saturate(
            &mut c.egraph,
            &mut c.skeleton,
            &rs,
            &SaturationLimits::default(),
        )
        .unwrap();
        let sol = extract(
            &c.egraph,
            &c.skeleton,
            &c.dom,
            &CostModel::default(),
            ExtractionMethod::Ilp,
            None,
        )
        .unwrap();
        let out = elaborate(
            &c.egraph,
            &c.skeleton,
            &c.dom,
            &sol,
            &f,
            &c.declared_types(),
        )
        .unwrap();
        (f, out)
    }

    fn text(f: &FunctionIR) -> String {
        let mut p = IRProgram::default();
        p.functions.insert(f.name.clone(), f.clone());
        print_ir(&p)
    }

    const POW: &str = "fn pow(%x: Int64, %n0: Int64) {
bb0:
  %one = const 1 : Int64
  %zero = const 0 : Int64
  goto bb1(%one, %n0)
bb1(%r: Int64, %n: Int64):
  %c = call gt(%n, %zero) : Bool
  br %c, bb2, bb3
bb2:
  %r2 = call mul(%r, %x) : Int64
  %n2 = call sub(%n, %one) : Int64
  %p = call println(%r2) : Int64
  goto bb1(%r2, %n2)
bb3:
  ret %r
}";

    #[test]
    fn identity_round_trip_preserves_behaviour() {
        let (f, out) = optimize(POW, "");
        let (mut a, mut b) = (IRProgram::default(), IRProgram::default());
        a.functions.insert("pow".into(), f);
        b.functions.insert("pow".into(), out.clone());
        let u = universe();
        for (x, n) in [(2, 5), (3, 0), (5, 1)] {
            let args = vec![Value::Int(x), Value::Int(n)];
            let ra = run(&a, "pow", args.clone(), &u, DEFAULT_FUEL).unwrap();
            let rb = run(&b, "pow", args, &u, DEFAULT_FUEL).unwrap();
            assert_eq!(ra, rb);
        }
        let printed = text(&out);
        assert_eq!(printed.matches("println").count(), 1, "{printed}");
    }

    #[test]
    fn shift_rule_rewrites_multiplication() {
        let (_, out) = optimize(
            "fn f(%a: Int64) { bb0: %two = const 2 : Int64 %m = call mul(%a, %two) : Int64 ret %m }",
            "mul(~a::Int64, 2) -> shl(~a, 1)",
        );
        let printed = text(&out);
        assert!(!printed.contains("mul"), "{printed}");
        assert!(printed.contains("call shl(%0, %1) : Int64"), "{printed}");
    }

    #[test]
    fn identity_simplification_returns_parameter() {
        let (_, out) = optimize(
            "fn f(%a: Int64) { bb0: %two = const 2 : Int64 %m = call mul(%a, %two) : Int64 %d = call div(%m, %two) : Int64 ret %d }",
            "div(mul(~a, ~b), ~b) -> ~a",
        );
        assert!(out.blocks[0].statements.is_empty());
        assert_eq!(out.blocks[0].terminator, Terminator::Return(ValueId(0)));
    }
}
