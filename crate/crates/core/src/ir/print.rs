use std::fmt::{self, Write};

use super::{BranchTarget, FunctionIR, IRProgram, StmtKind, Terminator};

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for BranchTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.args.is_empty() {
            write!(f, "bb{}", self.block)
        } else {
            write!(f, "bb{}({})", self.block, join(&self.args))
        }
    }
}

impl fmt::Display for Terminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Terminator::Goto(t) => write!(f, "goto {t}"),
            Terminator::Branch {
                cond,
                then_to,
                else_to,
            } => write!(f, "br {cond}, {then_to}, {else_to}"),
            Terminator::Return(v) => write!(f, "ret {v}"),
        }
    }
}

impl fmt::Display for FunctionIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|(v, t)| format!("{v}: {t}"))
            .collect();
        writeln!(f, "fn {}({}) {{", self.name, params.join(", "))?;
        for (i, block) in self.blocks.iter().enumerate() {
            if i == 0 || block.args.is_empty() {
                writeln!(f, "bb{i}:")?;
            } else {
                let args: Vec<String> = block
                    .args
                    .iter()
                    .map(|(v, t)| format!("{v}: {t}"))
                    .collect();
                writeln!(f, "bb{i}({}):", args.join(", "))?;
            }
            for stmt in &block.statements {
                match &stmt.kind {
                    StmtKind::Const(l) => writeln!(f, "  {} = const {l} : {}", stmt.dest, stmt.ty)?,
                    StmtKind::Call { func, args } => writeln!(
                        f,
                        "  {} = call {func}({}) : {}",
                        stmt.dest,
                        join(args),
                        stmt.ty
                    )?,
                }
            }
            writeln!(f, "  {}", block.terminator)?;
        }
        f.write_str("}\n")
    }
}

/// Canonical text form; functions are separated by a blank line.
pub fn print_ir(p: &IRProgram) -> String {
    let mut out = String::new();
    for (i, f) in p.functions.values().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write!(out, "{f}").unwrap();
    }
    out
}
