//! Type lattice used as the e-class analysis.
//!
//! A [`TypeUniverse`] declares a subtype forest rooted at `Any` and a method
//! table. Each e-class carries a [`TypeInfo`]: a literal value, a small union
//! of types, or, once the union outgrows the limit, their least common
//! supertype.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::MockSpec;
use crate::literal::Literal;

pub const ANY: &str = "Any";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSig {
    #[serde(rename = "fn")]
    pub func: String,
    pub args: Vec<String>,
    pub ret: String,
    pub effect_free: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TypeDecl {
    name: String,
    #[serde(default)]
    parent: Option<String>,
}

fn default_union_limit() -> usize {
    4
}

/// On-disk form of a type universe.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct UniverseFile {
    #[serde(default)]
    types: Vec<TypeDecl>,
    #[serde(default)]
    methods: Vec<MethodSig>,
    #[serde(default = "default_union_limit")]
    union_limit: usize,
    #[serde(default)]
    mocks: Vec<MockSpec>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UniverseError {
    #[error("invalid type universe JSON: {0}")]
    Json(String),
    #[error("type `{0}` declared twice")]
    DuplicateType(String),
    #[error("type `{ty}` has undeclared parent `{parent}`")]
    UnknownParent { ty: String, parent: String },
    #[error("subtype relation is cyclic at `{0}`")]
    Cycle(String),
    #[error("method {0} mentions undeclared type `{1}`")]
    UnknownType(String, String),
    #[error("method {0} declared twice")]
    DuplicateMethod(String),
    #[error("methods {0} and {1} are ambiguous")]
    Ambiguous(String, String),
    #[error("union_limit must be positive")]
    ZeroUnionLimit,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("no method matching {func}({}){}", .args.join(", "), .rule.as_ref().map(|r| format!(" (introduced by rule `{r}`)")).unwrap_or_default())]
pub struct NoMethodError {
    pub func: String,
    pub args: Vec<String>,
    pub rule: Option<String>,
}

/// Declarative stand-in for a host language's type system.
#[derive(Debug, Clone, Default)]
pub struct TypeUniverse {
    parent: HashMap<String, String>,
    has_children: BTreeSet<String>,
    methods: Vec<MethodSig>,
    by_name: HashMap<String, Vec<usize>>,
    pub union_limit: usize,
    pub mocks: Vec<MockSpec>,
    /// Unknown calls infer to `Any` and count as pure instead of failing.
    permissive: bool,
}

impl fmt::Display for MethodSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.func, self.args.join(", "))
    }
}

impl TypeUniverse {
    pub fn from_json(text: &str) -> Result<Self, UniverseError> {
        let file: UniverseFile =
            serde_json::from_str(text).map_err(|e| UniverseError::Json(e.to_string()))?;
        let types = file
            .types
            .into_iter()
            .map(|t| (t.name, t.parent.unwrap_or_else(|| ANY.to_string())))
            .collect();
        let mut u = Self::new(types, file.methods, file.union_limit)?;
        u.mocks = file.mocks;
        Ok(u)
    }

    /// `types` holds (name, parent) pairs; `Any` is implicit.
    pub fn new(
        types: Vec<(String, String)>,
        methods: Vec<MethodSig>,
        union_limit: usize,
    ) -> Result<Self, UniverseError> {
        if union_limit == 0 {
            return Err(UniverseError::ZeroUnionLimit);
        }
        let mut u = TypeUniverse {
            union_limit,
            ..Default::default()
        };
        for (name, parent) in &types {
            if name == ANY {
                continue;
            }
            if u.parent.insert(name.clone(), parent.clone()).is_some() {
                return Err(UniverseError::DuplicateType(name.clone()));
            }
        }
        for (name, parent) in &u.parent {
            if parent != ANY && !u.parent.contains_key(parent) {
                return Err(UniverseError::UnknownParent {
                    ty: name.clone(),
                    parent: parent.clone(),
                });
            }
        }
        for name in u.parent.keys() {
            let mut seen = BTreeSet::new();
            let mut t = name.as_str();
            while t != ANY {
                if !seen.insert(t) {
                    return Err(UniverseError::Cycle(name.clone()));
                }
                t = &u.parent[t];
            }
        }
        u.has_children = u.parent.values().cloned().collect();
        u.has_children.insert(ANY.to_string());

        for m in &methods {
            for t in m.args.iter().chain(std::iter::once(&m.ret)) {
                if !u.is_declared(t) {
                    return Err(UniverseError::UnknownType(m.to_string(), t.clone()));
                }
            }
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i]
                .iter()
                .any(|o| o.func == m.func && o.args == m.args)
            {
                return Err(UniverseError::DuplicateMethod(m.to_string()));
            }
            u.by_name.entry(m.func.clone()).or_default().push(i);
        }
        u.methods = methods;
        u.check_ambiguity()?;
        Ok(u)
    }

    /// A universe with no declarations that never rejects a call.
    pub fn permissive() -> Self {
        TypeUniverse {
            union_limit: 4,
            permissive: true,
            ..Default::default()
        }
    }

    pub fn is_permissive(&self) -> bool {
        self.permissive
    }

    pub fn is_declared(&self, t: &str) -> bool {
        t == ANY || self.parent.contains_key(t)
    }

    pub fn is_leaf(&self, t: &str) -> bool {
        !self.has_children.contains(t)
    }

    pub fn methods(&self) -> &[MethodSig] {
        &self.methods
    }

    fn ancestors<'a>(&'a self, t: &'a str) -> Vec<&'a str> {
        let mut out = vec![t];
        let mut cur = t;
        while cur != ANY {
            cur = match self.parent.get(cur) {
                Some(p) => p,
                None => ANY,
            };
            out.push(cur);
        }
        out
    }

    pub fn is_subtype(&self, a: &str, b: &str) -> bool {
        b == ANY || self.ancestors(a).contains(&b)
    }

    /// Least common ancestor of two types.
    pub fn lca(&self, a: &str, b: &str) -> String {
        let up = self.ancestors(a);
        self.ancestors(b)
            .into_iter()
            .find(|t| up.contains(t))
            .unwrap_or(ANY)
            .to_string()
    }

    fn check_ambiguity(&self) -> Result<(), UniverseError> {
        for idx in self.by_name.values() {
            for (k, &i) in idx.iter().enumerate() {
                for &j in &idx[k + 1..] {
                    let (a, b) = (&self.methods[i], &self.methods[j]);
                    if a.args.len() != b.args.len() {
                        continue;
                    }
                    let overlap = a
                        .args
                        .iter()
                        .zip(&b.args)
                        .all(|(x, y)| self.is_subtype(x, y) || self.is_subtype(y, x));
                    if !overlap || self.more_specific(a, b) || self.more_specific(b, a) {
                        continue;
                    }
                    let meet: Vec<&String> = a
                        .args
                        .iter()
                        .zip(&b.args)
                        .map(|(x, y)| if self.is_subtype(x, y) { x } else { y })
                        .collect();
                    let resolved = idx
                        .iter()
                        .any(|&m| self.methods[m].args.iter().zip(&meet).all(|(p, q)| p == *q));
                    if !resolved {
                        return Err(UniverseError::Ambiguous(a.to_string(), b.to_string()));
                    }
                }
            }
        }
        Ok(())
    }

    fn more_specific(&self, a: &MethodSig, b: &MethodSig) -> bool {
        a.args
            .iter()
            .zip(&b.args)
            .all(|(x, y)| self.is_subtype(x, y))
    }

    /// Most specific applicable method for concrete argument types.
    pub fn dispatch(&self, func: &str, args: &[&str]) -> Option<&MethodSig> {
        let idx = self.by_name.get(func)?;
        let applicable: Vec<&MethodSig> = idx
            .iter()
            .map(|&i| &self.methods[i])
            .filter(|m| {
                m.args.len() == args.len()
                    && m.args.iter().zip(args).all(|(p, a)| self.is_subtype(a, p))
            })
            .collect();
        applicable
            .iter()
            .find(|m| applicable.iter().all(|o| self.more_specific(m, o)))
            .copied()
    }

    /// Every method chosen across all member combinations of `args`, or the
    /// first failing combination.
    fn dispatch_all(&self, func: &str, args: &[TypeInfo]) -> Result<Vec<&MethodSig>, Vec<String>> {
        let members: Vec<Vec<&str>> = args.iter().map(|a| a.members()).collect();
        let mut out = Vec::new();
        let mut combo = vec![0usize; args.len()];
        loop {
            let tys: Vec<&str> = combo.iter().zip(&members).map(|(&k, m)| m[k]).collect();
            match self.dispatch(func, &tys) {
                Some(m) => out.push(m),
                None => return Err(tys.iter().map(|s| s.to_string()).collect()),
            }
            // odometer over member indices
            let mut pos = 0;
            loop {
                if pos == combo.len() {
                    return Ok(out);
                }
                combo[pos] += 1;
                if combo[pos] < members[pos].len() {
                    break;
                }
                combo[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Return type of `func` applied to arguments of the given types; union
    /// arguments dispatch once per member combination.
    pub fn infer(&self, func: &str, args: &[TypeInfo]) -> Result<TypeInfo, NoMethodError> {
        match self.dispatch_all(func, args) {
            Ok(methods) => {
                let mut acc: Option<TypeInfo> = None;
                for m in methods {
                    let t = TypeInfo::of(&m.ret);
                    acc = Some(match acc {
                        None => t,
                        Some(a) => typejoin(self, &a, &t),
                    });
                }
                Ok(acc.expect("at least one combination"))
            }
            Err(_) if self.permissive => Ok(TypeInfo::of(ANY)),
            Err(tys) => Err(NoMethodError {
                func: func.to_string(),
                args: tys,
                rule: None,
            }),
        }
    }

    /// True iff some method reachable for these argument types may have side
    /// effects.
    pub fn effectful(&self, func: &str, args: &[TypeInfo]) -> Result<bool, NoMethodError> {
        match self.dispatch_all(func, args) {
            Ok(ms) => Ok(ms.iter().any(|m| !m.effect_free)),
            Err(_) if self.permissive => Ok(false),
            Err(tys) => Err(NoMethodError {
                func: func.to_string(),
                args: tys,
                rule: None,
            }),
        }
    }
}

/// Analysis value attached to every e-class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeInfo {
    /// A known constant of a concrete type.
    Literal(Literal, String),
    /// Small union; no member is a subtype of another.
    Typed(BTreeSet<String>),
    /// Collapsed union.
    Top(String),
}

impl TypeInfo {
    pub fn of(t: &str) -> Self {
        TypeInfo::Typed(std::iter::once(t.to_string()).collect())
    }

    pub fn members(&self) -> Vec<&str> {
        match self {
            TypeInfo::Literal(_, t) | TypeInfo::Top(t) => vec![t.as_str()],
            TypeInfo::Typed(s) => s.iter().map(|t| t.as_str()).collect(),
        }
    }

    /// One type name covering every member.
    pub fn type_name(&self, u: &TypeUniverse) -> String {
        let ms = self.members();
        let mut acc = ms[0].to_string();
        for m in &ms[1..] {
            acc = u.lca(&acc, m);
        }
        acc
    }

    /// Every member is a subtype of `t`.
    pub fn within(&self, u: &TypeUniverse, t: &str) -> bool {
        self.members().iter().all(|m| u.is_subtype(m, t))
    }

    /// `self ⊑ other`: each member of `self` is below some member of `other`.
    pub fn below(&self, u: &TypeUniverse, other: &TypeInfo) -> bool {
        let theirs = other.members();
        self.members()
            .iter()
            .all(|m| theirs.iter().any(|o| u.is_subtype(m, o)))
    }
}

impl fmt::Display for TypeInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeInfo::Literal(l, t) => write!(f, "{t}({l})"),
            TypeInfo::Typed(s) if s.len() == 1 => write!(f, "{}", s.iter().next().unwrap()),
            TypeInfo::Typed(s) => {
                write!(
                    f,
                    "Union{{{}}}",
                    s.iter().cloned().collect::<Vec<_>>().join(", ")
                )
            }
            TypeInfo::Top(t) => write!(f, "{t}"),
        }
    }
}

/// Least upper bound of two analysis values.
///
/// Identical literals stay literal. Otherwise member sets are unioned with
/// subtype absorption; a union larger than the universe's limit collapses to
/// the least common ancestor of its members.
pub fn typejoin(u: &TypeUniverse, a: &TypeInfo, b: &TypeInfo) -> TypeInfo {
    if let (TypeInfo::Literal(x, tx), TypeInfo::Literal(y, ty)) = (a, b) {
        if x == y && tx == ty {
            return a.clone();
        }
    }
    let all: BTreeSet<&str> = a.members().into_iter().chain(b.members()).collect();
    let kept: BTreeSet<String> = all
        .iter()
        .filter(|x| !all.iter().any(|y| y != *x && u.is_subtype(x, y)))
        .map(|x| x.to_string())
        .collect();
    if kept.len() > u.union_limit {
        let mut it = kept.iter();
        let first = it.next().unwrap().clone();
        return TypeInfo::Top(it.fold(first, |acc, t| u.lca(&acc, t)));
    }
    if kept.len() == 1 {
        let only = kept.iter().next().unwrap();
        let was_top = |i: &TypeInfo| matches!(i, TypeInfo::Top(t) if t == only);
        if was_top(a) || was_top(b) {
            return TypeInfo::Top(only.clone());
        }
    }
    TypeInfo::Typed(kept)
}
