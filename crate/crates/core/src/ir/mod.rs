//! The SSA IR: data types, text format, validation and dominators.
//!
//! Control-dependent data flow uses block arguments instead of phi-nodes.
//! A function's parameters are the arguments of its entry block.

mod dom;
mod parse;
mod print;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::literal::Literal;

pub use dom::{dominator_tree, stmt_dominates, DomTree, StmtLoc};
pub use parse::{parse_function, parse_ir};
pub use print::print_ir;
pub use validate::{validate, Violation};

/// Function-local SSA value number, printed as `%k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ValueId(pub usize);

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

/// Index of a block inside its function, printed as `bb<k>`.
pub type BlockId = usize;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IRProgram {
    pub functions: IndexMap<String, FunctionIR>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionIR {
    pub name: String,
    pub params: Vec<(ValueId, String)>,
    /// `blocks[0]` is the entry block.
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub args: Vec<(ValueId, String)>,
    pub statements: Vec<Statement>,
    pub terminator: Terminator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub dest: ValueId,
    pub ty: String,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Call { func: String, args: Vec<ValueId> },
    Const(Literal),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchTarget {
    pub block: BlockId,
    pub args: Vec<ValueId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminator {
    Goto(BranchTarget),
    Branch {
        cond: ValueId,
        then_to: BranchTarget,
        else_to: BranchTarget,
    },
    Return(ValueId),
}

impl Terminator {
    pub fn targets(&self) -> Vec<&BranchTarget> {
        match self {
            Terminator::Goto(t) => vec![t],
            Terminator::Branch {
                then_to, else_to, ..
            } => vec![then_to, else_to],
            Terminator::Return(_) => vec![],
        }
    }

    /// Every value read by the terminator, in operand order.
    pub fn uses(&self) -> Vec<ValueId> {
        match self {
            Terminator::Goto(t) => t.args.clone(),
            Terminator::Branch {
                cond,
                then_to,
                else_to,
            } => std::iter::once(*cond)
                .chain(then_to.args.iter().copied())
                .chain(else_to.args.iter().copied())
                .collect(),
            Terminator::Return(v) => vec![*v],
        }
    }

    fn map_values(&mut self, f: &mut impl FnMut(ValueId) -> ValueId) {
        match self {
            Terminator::Goto(t) => t.args.iter_mut().for_each(|v| *v = f(*v)),
            Terminator::Branch {
                cond,
                then_to,
                else_to,
            } => {
                *cond = f(*cond);
                then_to.args.iter_mut().for_each(|v| *v = f(*v));
                else_to.args.iter_mut().for_each(|v| *v = f(*v));
            }
            Terminator::Return(v) => *v = f(*v),
        }
    }
}

impl Statement {
    pub fn uses(&self) -> &[ValueId] {
        match &self.kind {
            StmtKind::Call { args, .. } => args,
            StmtKind::Const(_) => &[],
        }
    }
}

impl FunctionIR {
    pub fn successors(&self, block: BlockId) -> Vec<BlockId> {
        self.blocks[block]
            .terminator
            .targets()
            .into_iter()
            .map(|t| t.block)
            .collect()
    }

    /// Declared type of every defined value.
    pub fn value_types(&self) -> BTreeMap<ValueId, String> {
        let mut types = BTreeMap::new();
        for (v, t) in &self.params {
            types.insert(*v, t.clone());
        }
        for block in &self.blocks {
            for (v, t) in &block.args {
                types.insert(*v, t.clone());
            }
            for stmt in &block.statements {
                types.insert(stmt.dest, stmt.ty.clone());
            }
        }
        types
    }

    /// Renumbers values densely in textual order: parameters first, then
    /// per block its arguments followed by its statements.
    pub fn renumber(&mut self) {
        let mut map = BTreeMap::new();
        let mut next = 0;
        let mut fresh = |v: ValueId, map: &mut BTreeMap<ValueId, ValueId>| {
            map.entry(v).or_insert_with(|| {
                let id = ValueId(next);
                next += 1;
                id
            });
        };
        for (v, _) in &self.params {
            fresh(*v, &mut map);
        }
        for block in &self.blocks {
            for (v, _) in &block.args {
                fresh(*v, &mut map);
            }
            for stmt in &block.statements {
                fresh(stmt.dest, &mut map);
            }
        }
        let mut remap = |v: ValueId| map.get(&v).copied().unwrap_or(v);
        for (v, _) in &mut self.params {
            *v = remap(*v);
        }
        for block in &mut self.blocks {
            for (v, _) in &mut block.args {
                *v = remap(*v);
            }
            for stmt in &mut block.statements {
                stmt.dest = remap(stmt.dest);
                if let StmtKind::Call { args, .. } = &mut stmt.kind {
                    args.iter_mut().for_each(|a| *a = remap(*a));
                }
            }
            block.terminator.map_values(&mut remap);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: undefined value `{name}`")]
    UndefinedValue {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: undefined block `{name}`")]
    UndefinedBlock {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: value `{name}` defined more than once")]
    DuplicateValue {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("duplicate function `{0}`")]
    DuplicateFunction(String),
    #[error("function `{function}` has unreachable blocks {blocks:?}")]
    Unreachable {
        function: String,
        blocks: Vec<BlockId>,
    },
}
