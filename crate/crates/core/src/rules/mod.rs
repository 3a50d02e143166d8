//! Rewrite rules: parsing, symbolic and dynamic application, argument
//! injection, and skeleton relaxation.

mod parse;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::conversion::CfgSkeleton;
use crate::egraph::{Constraint, EClassId, EGraph, ENode, Match, Pattern};
use crate::interp::fold;
use crate::literal::Literal;
use crate::types::{NoMethodError, TypeUniverse};

pub use parse::{parse_rules, FOLD_OPS};

/// Right-hand side of a dynamic rule, evaluated at match time.
#[derive(Debug, Clone, PartialEq)]
pub enum DynExpr {
    Var(String),
    Lit(Literal),
    Op(String, Vec<DynExpr>),
}

impl DynExpr {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            DynExpr::Var(v) => vec![v],
            DynExpr::Lit(_) => Vec::new(),
            DynExpr::Op(_, args) => args.iter().flat_map(|a| a.vars()).collect(),
        }
    }

    pub fn eval(
        &self,
        env: &BTreeMap<String, Literal>,
    ) -> Result<Literal, crate::interp::EvalError> {
        match self {
            DynExpr::Var(v) => Ok(env[v].clone()),
            DynExpr::Lit(l) => Ok(l.clone()),
            DynExpr::Op(op, args) => {
                let vals = args
                    .iter()
                    .map(|a| a.eval(env))
                    .collect::<Result<Vec<_>, _>>()?;
                fold(op, &vals)
            }
        }
    }
}

impl fmt::Display for DynExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DynExpr::Var(v) => write!(f, "~{v}"),
            DynExpr::Lit(l) => write!(f, "{l}"),
            DynExpr::Op(op, args) => {
                write!(f, "{op}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleRhs {
    Template(Pattern),
    Dynamic(DynExpr),
}

impl RuleRhs {
    pub fn vars(&self) -> Vec<&str> {
        match self {
            RuleRhs::Template(p) => p.vars(),
            RuleRhs::Dynamic(d) => d.vars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub lhs: Pattern,
    pub rhs: RuleRhs,
    pub relaxed: bool,
    /// Source line, for diagnostics.
    pub line: usize,
}

impl Rule {
    pub fn is_dynamic(&self) -> bool {
        matches!(self.rhs, RuleRhs::Dynamic(_))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.relaxed {
            f.write_str("relaxed ")?;
        }
        match &self.rhs {
            RuleRhs::Template(p) => write!(f, "{}: {} -> {}", self.name, self.lhs, p),
            RuleRhs::Dynamic(d) => write!(f, "{}: {} => {}", self.name, self.lhs, d),
        }
    }
}

/// `function.arg[index] => value : ty`, with a 1-based index.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgInjection {
    pub func: String,
    pub index: usize,
    pub value: Literal,
    pub ty: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    pub injections: Vec<ArgInjection>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("line {line}: unknown type `{name}`")]
    UnknownType { line: usize, name: String },
    #[error("line {line}: `~{var}` is not bound by the left-hand side")]
    UnboundVar { line: usize, var: String },
    #[error("line {line}: `~{var}` must be bound with a Comptime constraint to be used in a dynamic rewrite")]
    NotComptime { line: usize, var: String },
    #[error("line {line}: rule name `{name}` used twice")]
    DuplicateName { line: usize, name: String },
    #[error("line {line}: `{func}` has no argument {index}")]
    InjectionIndex {
        line: usize,
        func: String,
        index: usize,
    },
}

impl RuleSet {
    /// Checks that every type named in a constraint or injection is declared.
    pub fn check(&self, u: &TypeUniverse) -> Result<(), RuleError> {
        if u.is_permissive() {
            return Ok(());
        }
        for r in &self.rules {
            for t in r.lhs.constraint_types() {
                if !u.is_declared(t) {
                    return Err(RuleError::UnknownType {
                        line: r.line,
                        name: t.to_string(),
                    });
                }
            }
        }
        for inj in &self.injections {
            if !u.is_declared(&inj.ty) {
                return Err(RuleError::UnknownType {
                    line: inj.line,
                    name: inj.ty.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Counts from applying one rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyOutcome {
    pub matches: usize,
    /// Merges that changed the e-graph.
    pub merges: usize,
    /// Skeleton statements newly detached.
    pub detached: usize,
}

/// All matches of the rule's left-hand side.
pub fn search(g: &EGraph, rule: &Rule) -> Vec<Match> {
    g.ematch(&rule.lhs)
}

fn constraint_type<'a>(p: &'a Pattern, var: &str) -> Option<&'a str> {
    match p {
        Pattern::Var(v, Some(Constraint::Comptime(t))) if v == var => Some(t),
        Pattern::Call(_, args) => args.iter().find_map(|a| constraint_type(a, var)),
        _ => None,
    }
}

/// Instantiates the rule for each match and merges the result into the
/// matched class. Relaxed rules also detach the skeleton statements of every
/// effectful call the left-hand side matched.
pub fn apply_matches(
    g: &mut EGraph,
    sk: &mut CfgSkeleton,
    rule: &Rule,
    matches: &[Match],
) -> Result<ApplyOutcome, NoMethodError> {
    g.set_origin(Some(&rule.name));
    let res = apply_inner(g, sk, rule, matches);
    g.set_origin(None);
    res
}

fn apply_inner(
    g: &mut EGraph,
    sk: &mut CfgSkeleton,
    rule: &Rule,
    matches: &[Match],
) -> Result<ApplyOutcome, NoMethodError> {
    let mut out = ApplyOutcome {
        matches: matches.len(),
        ..Default::default()
    };
    for m in matches {
        let new = match &rule.rhs {
            RuleRhs::Template(p) => g.instantiate(p, &m.subst)?,
            RuleRhs::Dynamic(d) => {
                let mut env = BTreeMap::new();
                let mut ty = None;
                for v in d.vars() {
                    let t = constraint_type(&rule.lhs, v).expect("checked at parse time");
                    let (lit, lt) = g
                        .literal_of(m.subst[v], t)
                        .expect("Comptime match has a literal");
                    ty.get_or_insert_with(|| (lit.clone(), lt.to_string()));
                    env.insert(v.to_string(), lit.clone());
                }
                let Ok(value) = d.eval(&env) else {
                    // e.g. division by zero: leave the expression alone
                    continue;
                };
                let ty = match ty {
                    Some((first, t))
                        if std::mem::discriminant(&first) == std::mem::discriminant(&value) =>
                    {
                        t
                    }
                    _ => value.default_type().to_string(),
                };
                g.add(ENode::constant(value, &ty))?
            }
        };
        if g.merge(m.class, new).1 {
            out.merges += 1;
        }
        if rule.relaxed {
            for (c, n) in &m.calls {
                out.detached += sk.detach_matching(g, *c, n);
            }
        }
    }
    Ok(out)
}

/// Searches and applies in one step; the graph is left un-rebuilt.
pub fn apply_rule(
    g: &mut EGraph,
    sk: &mut CfgSkeleton,
    rule: &Rule,
) -> Result<ApplyOutcome, NoMethodError> {
    let ms = search(g, rule);
    apply_matches(g, sk, rule, &ms)
}

/// Makes the `index`-th (1-based) parameter's class hold the injected constant.
pub fn inject_argument_constant(
    g: &mut EGraph,
    sk: &CfgSkeleton,
    inj: &ArgInjection,
) -> Result<EClassId, RuleError> {
    let params = &sk.block_args[0];
    let Some((class, _)) = params.get(inj.index.wrapping_sub(1)) else {
        return Err(RuleError::InjectionIndex {
            line: inj.line,
            func: inj.func.clone(),
            index: inj.index,
        });
    };
    let lit = g.add_with_info(
        ENode::constant(inj.value.clone(), &inj.ty),
        crate::types::TypeInfo::Literal(inj.value.clone(), inj.ty.clone()),
    );
    Ok(g.merge(*class, lit).0)
}
