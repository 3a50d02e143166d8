//! Reference interpreter for the IR, plus the builtin arithmetic shared with
//! dynamic rewrites.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{FunctionIR, IRProgram, StmtKind, Terminator, ValueId};
use crate::literal::Literal;
use crate::types::TypeUniverse;

pub const DEFAULT_FUEL: u64 = 1_000_000;

/// Runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    /// Composite stand-in: a type tag and a payload.
    Opaque(String, Vec<Value>),
}

impl Value {
    pub fn type_name(&self) -> &str {
        match self {
            Value::Int(_) => "Int64",
            Value::Float(_) => "Float64",
            Value::Bool(_) => "Bool",
            Value::Str(_) => "String",
            Value::Opaque(tag, _) => tag,
        }
    }

    pub fn nothing() -> Value {
        Value::Opaque("Nothing".into(), Vec::new())
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Equality with a relative/absolute tolerance on floats. Ints and floats
    /// never compare equal to each other.
    pub fn approx_eq(&self, other: &Value, tol: f64) -> bool {
        match (self, other) {
            (Value::Float(a), Value::Float(b)) => {
                a.to_bits() == b.to_bits()
                    || (a.is_nan() && b.is_nan())
                    || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
            }
            (Value::Opaque(t1, p1), Value::Opaque(t2, p2)) => {
                t1 == t2
                    && p1.len() == p2.len()
                    && p1.iter().zip(p2).all(|(a, b)| a.approx_eq(b, tol))
            }
            _ => self == other,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Value, String> {
        use serde_json::Value as J;
        match v {
            J::Bool(b) => Ok(Value::Bool(*b)),
            J::Number(n) => match n.as_i64() {
                Some(i) => Ok(Value::Int(i)),
                None => n
                    .as_f64()
                    .map(Value::Float)
                    .ok_or_else(|| format!("bad number {n}")),
            },
            J::String(s) => Ok(Value::Str(s.clone())),
            J::Object(m) => {
                let tag = m
                    .get("tag")
                    .and_then(|t| t.as_str())
                    .ok_or("opaque value needs a string `tag`")?;
                let payload = match m.get("payload") {
                    None => Vec::new(),
                    Some(J::Array(xs)) => {
                        xs.iter().map(Value::from_json).collect::<Result<_, _>>()?
                    }
                    Some(_) => return Err("`payload` must be an array".into()),
                };
                Ok(Value::Opaque(tag.to_string(), payload))
            }
            other => Err(format!("unsupported input value {other}")),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            Value::Int(i) => json!(i),
            Value::Float(f) => json!(f),
            Value::Bool(b) => json!(b),
            Value::Str(s) => json!(s),
            Value::Opaque(tag, p) => {
                json!({"tag": tag, "payload": p.iter().map(Value::to_json).collect::<Vec<_>>()})
            }
        }
    }
}

impl From<&Literal> for Value {
    fn from(l: &Literal) -> Self {
        match l {
            Literal::Int(i) => Value::Int(*i),
            Literal::Float(f) => Value::Float(*f),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Str(s) => Value::Str(s.clone()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Opaque(tag, p) => {
                write!(f, "{tag}(")?;
                for (i, v) in p.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Ordered record of effectful calls made during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EffectTrace(pub Vec<(String, Vec<Value>)>);

impl EffectTrace {
    /// True iff `self` can be obtained from `other` by deleting entries.
    pub fn is_subsequence_of(&self, other: &EffectTrace, tol: f64) -> bool {
        let mut it = other.0.iter();
        self.0.iter().all(|(f, args)| {
            it.by_ref().any(|(g, brgs)| {
                f == g
                    && args.len() == brgs.len()
                    && args.iter().zip(brgs).all(|(a, b)| a.approx_eq(b, tol))
            })
        })
    }

    pub fn approx_eq(&self, other: &EffectTrace, tol: f64) -> bool {
        self.0.len() == other.0.len() && self.is_subsequence_of(other, tol)
    }
}

/// How a non-builtin function behaves at run time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    #[serde(rename = "fn")]
    pub func: String,
    #[serde(flatten)]
    pub kind: MockKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MockKind {
    /// Alias for a builtin operation.
    Arithmetic { op: String },
    /// Does nothing observable except being recorded; returns `Nothing`.
    Trace,
    /// Wraps the arguments (or, flattened, their payloads) in an opaque value.
    OpaqueConstructor {
        tag: String,
        #[serde(default)]
        flatten: bool,
    },
    /// Folds the payload of the single argument: sum, prod, first, length, min, max.
    PayloadReduce { op: String },
    /// `f(fname, x)` builds a lazy `Broadcasted(fname, x)`.
    LazyBroadcast,
    /// Evaluates a (possibly nested) `Broadcasted` elementwise into an `Array`.
    Materialize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("integer division by zero")]
    DivByZero,
    #[error("`{op}` cannot be applied to ({})", .args.join(", "))]
    TypeMismatch { op: String, args: Vec<String> },
    #[error("unknown function `{0}`")]
    Unknown(String),
    #[error("out of fuel")]
    OutOfFuel,
    #[error("function `{func}` expects {expected} arguments, got {found}")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
    },
    #[error("negative integer exponent")]
    NegativeExponent,
}

fn mismatch(op: &str, args: &[Value]) -> EvalError {
    EvalError::TypeMismatch {
        op: op.to_string(),
        args: args.iter().map(|a| a.type_name().to_string()).collect(),
    }
}

fn shl(a: i64, b: i64) -> i64 {
    if (0..64).contains(&b) {
        a.wrapping_shl(b as u32)
    } else if b < 0 {
        shr(a, b.saturating_neg())
    } else {
        0
    }
}

fn shr(a: i64, b: i64) -> i64 {
    if (0..64).contains(&b) {
        a >> b
    } else if b < 0 {
        shl(a, b.saturating_neg())
    } else if a < 0 {
        -1
    } else {
        0
    }
}

fn vec2(v: &Value) -> Option<(f64, f64)> {
    match v {
        Value::Opaque(tag, p) if tag == "Vec2D" && p.len() == 2 => {
            Some((p[0].as_f64()?, p[1].as_f64()?))
        }
        _ => None,
    }
}

fn mk_vec2(x: f64, y: f64) -> Value {
    Value::Opaque("Vec2D".into(), vec![Value::Float(x), Value::Float(y)])
}

/// Builtin operations, usable both at run time and when folding constants.
pub fn apply_builtin(op: &str, args: &[Value]) -> Result<Value, EvalError> {
    use Value::*;
    let bad = || mismatch(op, args);
    let r = match (op, args) {
        ("add", [Int(a), Int(b)]) => Int(a.wrapping_add(*b)),
        ("sub", [Int(a), Int(b)]) => Int(a.wrapping_sub(*b)),
        ("mul", [Int(a), Int(b)]) => Int(a.wrapping_mul(*b)),
        ("div", [Int(_), Int(0)]) => return Err(EvalError::DivByZero),
        ("div", [Int(a), Int(b)]) => Int(a.wrapping_div(*b)),
        ("rem", [Int(_), Int(0)]) => return Err(EvalError::DivByZero),
        ("rem", [Int(a), Int(b)]) => Int(a.wrapping_rem(*b)),
        ("pow", [Int(_), Int(b)]) if *b < 0 => return Err(EvalError::NegativeExponent),
        ("pow", [Int(a), Int(b)]) => Int(a.wrapping_pow((*b).min(u32::MAX as i64) as u32)),
        ("pow", [Float(a), Int(b)]) => {
            Float(a.powi((*b).clamp(i32::MIN as i64, i32::MAX as i64) as i32))
        }
        ("shl", [Int(a), Int(b)]) => Int(shl(*a, *b)),
        ("shr", [Int(a), Int(b)]) => Int(shr(*a, *b)),
        ("neg", [Int(a)]) => Int(a.wrapping_neg()),
        ("neg", [Float(a)]) => Float(-a),
        ("abs", [Int(a)]) => Int(a.wrapping_abs()),
        ("abs", [Float(a)]) => Float(a.abs()),
        ("relu", [Int(a)]) => Int((*a).max(0)),
        ("relu", [Float(a)]) => Float(if *a > 0.0 { *a } else { 0.0 }),
        ("not", [Bool(a)]) => Bool(!a),
        ("and", [Bool(a), Bool(b)]) => Bool(*a && *b),
        ("or", [Bool(a), Bool(b)]) => Bool(*a || *b),
        ("eq", [a, b]) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => Bool(x == y),
            _ => Bool(a == b),
        },
        ("ne", [a, b]) => match apply_builtin("eq", &[a.clone(), b.clone()])? {
            Bool(e) => Bool(!e),
            _ => unreachable!(),
        },
        ("lt" | "le" | "gt" | "ge", [Int(a), Int(b)]) => Bool(match op {
            "lt" => a < b,
            "le" => a <= b,
            "gt" => a > b,
            _ => a >= b,
        }),
        ("lt" | "le" | "gt" | "ge", [a, b]) => {
            let (x, y) = (a.as_f64().ok_or_else(bad)?, b.as_f64().ok_or_else(bad)?);
            Bool(match op {
                "lt" => x < y,
                "le" => x <= y,
                "gt" => x > y,
                _ => x >= y,
            })
        }
        ("sin" | "cos" | "sqrt" | "exp" | "log", [a]) => {
            let x = a.as_f64().ok_or_else(bad)?;
            Float(match op {
                "sin" => x.sin(),
                "cos" => x.cos(),
                "sqrt" => x.sqrt(),
                "exp" => x.exp(),
                _ => x.ln(),
            })
        }
        ("add" | "sub" | "mul" | "div" | "pow", [a, b]) => {
            let (x, y) = (a.as_f64().ok_or_else(bad)?, b.as_f64().ok_or_else(bad)?);
            Float(match op {
                "add" => x + y,
                "sub" => x - y,
                "mul" => x * y,
                "div" => x / y,
                _ => x.powf(y),
            })
        }
        ("translate2d", [p, dx, dy]) => {
            let (x, y) = vec2(p).ok_or_else(bad)?;
            mk_vec2(
                x + dx.as_f64().ok_or_else(bad)?,
                y + dy.as_f64().ok_or_else(bad)?,
            )
        }
        ("rotate2d", [p, t]) => {
            let (x, y) = vec2(p).ok_or_else(bad)?;
            let t = t.as_f64().ok_or_else(bad)?;
            let (s, c) = t.sin_cos();
            mk_vec2(c * x - s * y, s * x + c * y)
        }
        ("vec2", [x, y]) => mk_vec2(x.as_f64().ok_or_else(bad)?, y.as_f64().ok_or_else(bad)?),
        _ => {
            return Err(if is_builtin(op) {
                bad()
            } else {
                EvalError::Unknown(op.to_string())
            });
        }
    };
    Ok(r)
}

const BUILTINS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "div",
    "rem",
    "pow",
    "shl",
    "shr",
    "neg",
    "abs",
    "relu",
    "not",
    "and",
    "or",
    "eq",
    "ne",
    "lt",
    "le",
    "gt",
    "ge",
    "sin",
    "cos",
    "sqrt",
    "exp",
    "log",
    "translate2d",
    "rotate2d",
    "vec2",
];

pub fn is_builtin(op: &str) -> bool {
    BUILTINS.contains(&op)
}

/// Evaluates a builtin on literal operands; the constant-folding entry point.
pub fn fold(op: &str, args: &[Literal]) -> Result<Literal, EvalError> {
    let vals: Vec<Value> = args.iter().map(Value::from).collect();
    match apply_builtin(op, &vals)? {
        Value::Int(i) => Ok(Literal::Int(i)),
        Value::Float(f) => Ok(Literal::Float(f)),
        Value::Bool(b) => Ok(Literal::Bool(b)),
        Value::Str(s) => Ok(Literal::Str(s)),
        v @ Value::Opaque(..) => Err(mismatch(op, &[v])),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpError {
    #[error("no function `{0}` in program")]
    NoFunction(String),
    #[error("in `{func}`: {source}")]
    Eval {
        func: String,
        #[source]
        source: EvalError,
    },
    #[error("branch condition {0} is not a Bool")]
    NonBoolCondition(ValueId),
    #[error("{0} read before definition")]
    Undefined(ValueId),
}

struct Machine<'a> {
    program: &'a IRProgram,
    universe: &'a TypeUniverse,
    mocks: HashMap<&'a str, &'a MockKind>,
    fuel: u64,
    trace: EffectTrace,
}

impl Machine<'_> {
    fn tick(&mut self, func: &str) -> Result<(), InterpError> {
        if self.fuel == 0 {
            return Err(InterpError::Eval {
                func: func.into(),
                source: EvalError::OutOfFuel,
            });
        }
        self.fuel -= 1;
        Ok(())
    }

    fn call(&mut self, func: &str, args: Vec<Value>) -> Result<Value, InterpError> {
        let wrap = |source| InterpError::Eval {
            func: func.to_string(),
            source,
        };
        let tys: Vec<&str> = args.iter().map(Value::type_name).collect();
        if let Some(m) = self.universe.dispatch(func, &tys) {
            if !m.effect_free {
                self.trace.0.push((func.to_string(), args.clone()));
            }
        }
        if let Some(kind) = self.mocks.get(func).copied() {
            return self.mock(func, kind, args).map_err(wrap);
        }
        if let Some(f) = self.program.functions.get(func) {
            return self.exec(f, args);
        }
        apply_builtin(func, &args).map_err(wrap)
    }

    fn mock(&mut self, func: &str, kind: &MockKind, args: Vec<Value>) -> Result<Value, EvalError> {
        match kind {
            MockKind::Arithmetic { op } => apply_builtin(op, &args),
            MockKind::Trace => Ok(Value::nothing()),
            MockKind::OpaqueConstructor { tag, flatten } => {
                let payload = if *flatten {
                    args.into_iter()
                        .flat_map(|a| match a {
                            Value::Opaque(_, p) => p,
                            v => vec![v],
                        })
                        .collect()
                } else {
                    args
                };
                Ok(Value::Opaque(tag.clone(), payload))
            }
            MockKind::PayloadReduce { op } => {
                let [Value::Opaque(_, p)] = &args[..] else {
                    return Err(mismatch(func, &args));
                };
                match op.as_str() {
                    "length" => Ok(Value::Int(p.len() as i64)),
                    "first" => p.first().cloned().ok_or_else(|| mismatch(func, &args)),
                    "sum" | "prod" | "min" | "max" => {
                        let binop = match op.as_str() {
                            "sum" => "add",
                            "prod" => "mul",
                            _ => op.as_str(),
                        };
                        let mut it = p.iter().cloned();
                        let mut acc = match it.next() {
                            Some(v) => v,
                            None if op == "sum" => Value::Float(0.0),
                            None if op == "prod" => Value::Float(1.0),
                            None => return Err(mismatch(func, &args)),
                        };
                        for v in it {
                            acc = match binop {
                                "min" | "max" => {
                                    let lt = apply_builtin("lt", &[v.clone(), acc.clone()])?;
                                    if (lt == Value::Bool(true)) == (binop == "min") {
                                        v
                                    } else {
                                        acc
                                    }
                                }
                                _ => apply_builtin(binop, &[acc, v])?,
                            };
                        }
                        Ok(acc)
                    }
                    other => Err(EvalError::Unknown(format!("payload-reduce op `{other}`"))),
                }
            }
            MockKind::LazyBroadcast => match &args[..] {
                [Value::Str(_), _] => Ok(Value::Opaque("Broadcasted".into(), args)),
                _ => Err(mismatch(func, &args)),
            },
            MockKind::Materialize => self.materialize(&args[0]).map_err(|e| match e {
                InterpError::Eval { source, .. } => source,
                other => EvalError::Unknown(other.to_string()),
            }),
        }
    }

    fn materialize(&mut self, v: &Value) -> Result<Value, InterpError> {
        match v {
            Value::Opaque(tag, p) if tag == "Broadcasted" => {
                let Value::Str(f) = &p[0] else {
                    unreachable!("checked at construction")
                };
                let inner = self.materialize(&p[1])?;
                match inner {
                    Value::Opaque(t, xs) if t == "Array" => {
                        let mut out = Vec::with_capacity(xs.len());
                        for x in xs {
                            out.push(self.call(f, vec![x])?);
                        }
                        Ok(Value::Opaque("Array".into(), out))
                    }
                    scalar => self.call(f, vec![scalar]),
                }
            }
            other => Ok(other.clone()),
        }
    }

    fn exec(&mut self, f: &FunctionIR, args: Vec<Value>) -> Result<Value, InterpError> {
        if args.len() != f.params.len() {
            return Err(InterpError::Eval {
                func: f.name.clone(),
                source: EvalError::Arity {
                    func: f.name.clone(),
                    expected: f.params.len(),
                    found: args.len(),
                },
            });
        }
        let mut env: HashMap<ValueId, Value> = HashMap::new();
        for ((v, _), a) in f.params.iter().zip(args) {
            env.insert(*v, a);
        }
        let read = |env: &HashMap<ValueId, Value>, v: ValueId| {
            env.get(&v).cloned().ok_or(InterpError::Undefined(v))
        };
        let mut block = 0;
        loop {
            let b = &f.blocks[block];
            for s in &b.statements {
                self.tick(&f.name)?;
                let v = match &s.kind {
                    StmtKind::Const(l) => Value::from(l),
                    StmtKind::Call { func, args } => {
                        let vals = args
                            .iter()
                            .map(|a| read(&env, *a))
                            .collect::<Result<_, _>>()?;
                        self.call(func, vals)?
                    }
                };
                env.insert(s.dest, v);
            }
            self.tick(&f.name)?;
            let target = match &b.terminator {
                Terminator::Return(v) => return read(&env, *v),
                Terminator::Goto(t) => t,
                Terminator::Branch {
                    cond,
                    then_to,
                    else_to,
                } => match read(&env, *cond)? {
                    Value::Bool(true) => then_to,
                    Value::Bool(false) => else_to,
                    _ => return Err(InterpError::NonBoolCondition(*cond)),
                },
            };
            // read all arguments before binding, since a target may be the current block
            let vals: Vec<Value> = target
                .args
                .iter()
                .map(|a| read(&env, *a))
                .collect::<Result<_, _>>()?;
            let params: Vec<ValueId> = if target.block == 0 {
                f.params.iter().map(|p| p.0).collect()
            } else {
                f.blocks[target.block].args.iter().map(|p| p.0).collect()
            };
            for (p, v) in params.into_iter().zip(vals) {
                env.insert(p, v);
            }
            block = target.block;
        }
    }
}

/// Runs `func` of `program` on `args`. Calls are resolved against program
/// functions, the universe's mock table, and the builtins, in that order of
/// preference (mocks first). A call is recorded in the trace when the method
/// it dispatches to at run time is not effect-free.
pub fn run(
    program: &IRProgram,
    func: &str,
    args: Vec<Value>,
    universe: &TypeUniverse,
    fuel: u64,
) -> Result<(Value, EffectTrace), InterpError> {
    let f = program
        .functions
        .get(func)
        .ok_or_else(|| InterpError::NoFunction(func.to_string()))?;
    let mut m = Machine {
        program,
        universe,
        mocks: universe
            .mocks
            .iter()
            .map(|s| (s.func.as_str(), &s.kind))
            .collect(),
        fuel,
        trace: EffectTrace::default(),
    };
    let v = m.exec(f, args)?;
    Ok((v, m.trace))
}
