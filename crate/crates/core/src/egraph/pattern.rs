use std::collections::BTreeMap;
use std::fmt;

use super::{EClassId, EGraph, ENode, Head};
use crate::literal::Literal;
use crate::types::NoMethodError;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// `~x::T`: every member type of the class is a subtype of `T`.
    Type(String),
    /// `~x::Comptime{T}`: the class holds a literal whose type is a subtype of `T`.
    Comptime(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pattern {
    Var(String, Option<Constraint>),
    Call(String, Vec<Pattern>),
    Lit(Literal),
}

pub type Subst = BTreeMap<String, EClassId>;

/// One match: the root class, the bindings, and every call e-node the
/// pattern's call positions matched (across all derivations).
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub class: EClassId,
    pub subst: Subst,
    pub calls: Vec<(EClassId, ENode)>,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v, None) => write!(f, "~{v}"),
            Pattern::Var(v, Some(Constraint::Type(t))) => write!(f, "~{v}::{t}"),
            Pattern::Var(v, Some(Constraint::Comptime(t))) => write!(f, "~{v}::Comptime{{{t}}}"),
            Pattern::Lit(l) => write!(f, "{l}"),
            Pattern::Call(name, args) => {
                write!(f, "{name}(")?;
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

impl Pattern {
    /// Variables in first-occurrence order.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Pattern::Var(v, _) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Pattern::Call(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Pattern::Lit(_) => {}
        }
    }

    /// Constraint types mentioned anywhere in the pattern.
    pub fn constraint_types(&self) -> Vec<&str> {
        match self {
            Pattern::Var(_, Some(Constraint::Type(t) | Constraint::Comptime(t))) => vec![t],
            Pattern::Call(_, args) => args.iter().flat_map(|a| a.constraint_types()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Clone)]
struct State {
    subst: Subst,
    calls: Vec<(EClassId, ENode)>,
}

impl EGraph {
    fn satisfies(&self, c: EClassId, constraint: &Option<Constraint>) -> bool {
        match constraint {
            None => true,
            Some(Constraint::Type(t)) => self.info(c).within(self.universe(), t),
            Some(Constraint::Comptime(t)) => self.literal_of(c, t).is_some(),
        }
    }

    fn match_pat(&self, p: &Pattern, c: EClassId, st: State, out: &mut Vec<State>) {
        let c = self.find(c);
        match p {
            Pattern::Var(v, constraint) => {
                if !self.satisfies(c, constraint) {
                    return;
                }
                match st.subst.get(v) {
                    Some(bound) if self.find(*bound) != c => {}
                    Some(_) => out.push(st),
                    None => {
                        let mut st = st;
                        st.subst.insert(v.clone(), c);
                        out.push(st);
                    }
                }
            }
            Pattern::Lit(l) => {
                if self
                    .nodes(c)
                    .iter()
                    .any(|n| matches!(&n.head, Head::Const(x, _) if x == l))
                {
                    out.push(st);
                }
            }
            Pattern::Call(f, args) => {
                for n in self.nodes(c) {
                    if n.func() != Some(f.as_str()) || n.children.len() != args.len() {
                        continue;
                    }
                    let mut first = st.clone();
                    first.calls.push((c, n.clone()));
                    let mut states = vec![first];
                    for (a, ch) in args.iter().zip(&n.children) {
                        let mut next = Vec::new();
                        for s in states {
                            self.match_pat(a, *ch, s, &mut next);
                        }
                        states = next;
                        if states.is_empty() {
                            break;
                        }
                    }
                    out.extend(states);
                }
            }
        }
    }

    /// Matches rooted at one class, deduplicated by substitution.
    pub fn ematch_class(&self, p: &Pattern, c: EClassId) -> Vec<Match> {
        let c = self.find(c);
        let mut states = Vec::new();
        self.match_pat(
            p,
            c,
            State {
                subst: Subst::new(),
                calls: Vec::new(),
            },
            &mut states,
        );
        let mut out: Vec<Match> = Vec::new();
        for s in states {
            match out.iter_mut().find(|m| m.subst == s.subst) {
                Some(m) => {
                    for call in s.calls {
                        if !m.calls.contains(&call) {
                            m.calls.push(call);
                        }
                    }
                }
                None => out.push(Match {
                    class: c,
                    subst: s.subst,
                    calls: s.calls,
                }),
            }
        }
        out
    }

    /// All matches of `p`, classes in ascending id order. Expects a rebuilt graph.
    pub fn ematch(&self, p: &Pattern) -> Vec<Match> {
        self.class_ids()
            .into_iter()
            .flat_map(|c| self.ematch_class(p, c))
            .collect()
    }

    /// Adds the instantiation of `p` under `subst` and returns its class.
    /// Literals take their default type.
    pub fn instantiate(&mut self, p: &Pattern, subst: &Subst) -> Result<EClassId, NoMethodError> {
        match p {
            Pattern::Var(v, _) => Ok(self.find(subst[v])),
            Pattern::Lit(l) => self.add(ENode::constant(l.clone(), l.default_type())),
            Pattern::Call(f, args) => {
                let children = args
                    .iter()
                    .map(|a| self.instantiate(a, subst))
                    .collect::<Result<Vec<_>, _>>()?;
                self.add(ENode::call(f, children))
            }
        }
    }
}
