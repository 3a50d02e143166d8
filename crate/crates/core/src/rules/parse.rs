use super::{ArgInjection, DynExpr, Rule, RuleError, RuleRhs, RuleSet};
use crate::egraph::{Constraint, Pattern};
use crate::literal::Literal;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Int(i64),
    Float(f64),
    Str(String),
    Sym(&'static str),
}

const SYMS: &[&str] = &[
    "::", "->", "=>", "<<", ">>", "==", "+", "-", "*", "/", "^", "(", ")", ",", ":", "{", "}", "[",
    "]", ".",
];

fn lex(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, RuleError> {
    let err = |col: usize, msg: String| RuleError::Syntax {
        line: lineno,
        col,
        msg,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let ident_char = |c: char| c.is_alphanumeric() || c == '_' || c == '!';
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c == '~' {
            let start = i + 1;
            i = start;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            if i == start {
                return Err(err(col, "expected a variable name after `~`".into()));
            }
            out.push((Tok::Var(chars[start..i].iter().collect()), col));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                i += 1;
            }
            let mut float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let tok = if float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| err(col, format!("bad number `{text}`")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(col, format!("integer `{text}` out of range")))?,
                )
            };
            out.push((tok, col));
        } else if c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(err(col, "unterminated string".into())),
                    Some('"') => break,
                    Some('\\') => {
                        s.push(match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some(c) => *c,
                            None => return Err(err(col, "unterminated string".into())),
                        });
                        i += 2;
                    }
                    Some(c) => {
                        s.push(*c);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push((Tok::Str(s), col));
        } else if ident_char(c) {
            let start = i;
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            match SYMS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    out.push((Tok::Sym(s), col));
                    i += s.len();
                }
                None => return Err(err(col, format!("unexpected character `{c}`"))),
            }
        }
    }
    Ok(out)
}

/// Parsed expression before it is turned into a pattern or a fold tree.
#[derive(Debug, Clone)]
enum Expr {
    Var(String, Option<Constraint>, usize),
    Lit(Literal),
    Call(String, Vec<Expr>, usize),
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.end_col)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, RuleError> {
        Err(RuleError::Syntax {
            line: self.line,
            col: self.col(),
            msg: msg.into(),
        })
    }

    fn eat(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), RuleError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn ident(&mut self) -> Result<String, RuleError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected an identifier"),
        }
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        let lhs = self.shift()?;
        if self.eat("==") {
            let col = self.col();
            let rhs = self.shift()?;
            return Ok(Expr::Call("eq".into(), vec![lhs, rhs], col));
        }
        Ok(lhs)
    }

    fn binary_level(
        &mut self,
        ops: &[(&str, &str)],
        next: fn(&mut Self) -> Result<Expr, RuleError>,
    ) -> Result<Expr, RuleError> {
        let mut lhs = next(self)?;
        'outer: loop {
            for (sym, name) in ops {
                let col = self.col();
                if self.eat(sym) {
                    let rhs = next(self)?;
                    lhs = Expr::Call(name.to_string(), vec![lhs, rhs], col);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn shift(&mut self) -> Result<Expr, RuleError> {
        self.binary_level(&[("<<", "shl"), (">>", "shr")], Self::additive)
    }

    fn additive(&mut self) -> Result<Expr, RuleError> {
        self.binary_level(&[("+", "add"), ("-", "sub")], Self::multiplicative)
    }

    fn multiplicative(&mut self) -> Result<Expr, RuleError> {
        self.binary_level(&[("*", "mul"), ("/", "div")], Self::unary)
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        let col = self.col();
        if self.eat("-") {
            return Ok(match self.unary()? {
                Expr::Lit(Literal::Int(i)) => Expr::Lit(Literal::Int(i.wrapping_neg())),
                Expr::Lit(Literal::Float(f)) => Expr::Lit(Literal::Float(-f)),
                e => Expr::Call("neg".into(), vec![e], col),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, RuleError> {
        let base = self.primary()?;
        let col = self.col();
        if self.eat("^") {
            let exp = self.unary()?;
            return Ok(Expr::Call("pow".into(), vec![base, exp], col));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, RuleError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Var(v)) => {
                self.pos += 1;
                let constraint = if self.eat("::") {
                    let t = self.ident()?;
                    if t == "Comptime" {
                        self.expect("{")?;
                        let inner = self.ident()?;
                        self.expect("}")?;
                        Some(Constraint::Comptime(inner))
                    } else {
                        Some(Constraint::Type(t))
                    }
                } else {
                    None
                };
                Ok(Expr::Var(v, constraint, col))
            }
            Some(Tok::Int(i)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Int(i)))
            }
            Some(Tok::Float(f)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Float(f)))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if name == "true" || name == "false" {
                    return Ok(Expr::Lit(Literal::Bool(name == "true")));
                }
                if !self.eat("(") {
                    return self.err(format!("expected `(` after `{name}`"));
                }
                let mut args = Vec::new();
                if !self.eat(")") {
                    loop {
                        args.push(self.expr()?);
                        if self.eat(")") {
                            break;
                        }
                        self.expect(",")?;
                    }
                }
                Ok(Expr::Call(name, args, col))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => self.err("expected an expression"),
        }
    }

    fn literal(&mut self) -> Result<Literal, RuleError> {
        let neg = self.eat("-");
        let lit = match self.peek().cloned() {
            Some(Tok::Int(i)) => Literal::Int(if neg { i.wrapping_neg() } else { i }),
            Some(Tok::Float(f)) => Literal::Float(if neg { -f } else { f }),
            Some(Tok::Str(s)) if !neg => Literal::Str(s),
            Some(Tok::Ident(b)) if !neg && (b == "true" || b == "false") => {
                Literal::Bool(b == "true")
            }
            _ => return self.err("expected a literal"),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn to_pattern(e: &Expr) -> Pattern {
    match e {
        Expr::Var(v, c, _) => Pattern::Var(v.clone(), c.clone()),
        Expr::Lit(l) => Pattern::Lit(l.clone()),
        Expr::Call(f, args, _) => Pattern::Call(f.clone(), args.iter().map(to_pattern).collect()),
    }
}

/// Operations a dynamic right-hand side may use.
pub const FOLD_OPS: &[&str] = &[
    "add", "sub", "mul", "div", "pow", "shl", "shr", "neg", "eq", "ne", "lt", "le", "gt", "ge",
];

fn to_dyn(e: &Expr, line: usize) -> Result<DynExpr, RuleError> {
    match e {
        Expr::Var(v, None, _) => Ok(DynExpr::Var(v.clone())),
        Expr::Var(v, Some(_), col) => Err(RuleError::Syntax {
            line,
            col: *col,
            msg: format!("type constraint on `~{v}` is only allowed on the left-hand side"),
        }),
        Expr::Lit(l) => Ok(DynExpr::Lit(l.clone())),
        Expr::Call(f, args, col) => {
            if !FOLD_OPS.contains(&f.as_str()) {
                return Err(RuleError::Syntax {
                    line,
                    col: *col,
                    msg: format!("`{f}` is not a foldable builtin"),
                });
            }
            Ok(DynExpr::Op(
                f.clone(),
                args.iter()
                    .map(|a| to_dyn(a, line))
                    .collect::<Result<_, _>>()?,
            ))
        }
    }
}

fn first_constraint(e: &Expr) -> Option<(String, usize)> {
    match e {
        Expr::Var(v, Some(_), col) => Some((v.clone(), *col)),
        Expr::Call(_, args, _) => args.iter().find_map(first_constraint),
        _ => None,
    }
}

fn parse_line(
    toks: Vec<(Tok, usize)>,
    line: usize,
    end_col: usize,
    set: &mut RuleSet,
) -> Result<(), RuleError> {
    let mut p = Parser {
        toks,
        pos: 0,
        line,
        end_col,
    };
    if p.peek() == Some(&Tok::Ident("inject".into()))
        && p.toks.get(1).is_some_and(|t| matches!(t.0, Tok::Ident(_)))
    {
        p.pos += 1;
        let func = p.ident()?;
        p.expect(".")?;
        if p.ident()? != "arg" {
            return p.err("expected `arg`");
        }
        p.expect("[")?;
        let index = match p.peek() {
            Some(Tok::Int(k)) if *k >= 1 => *k as usize,
            _ => return p.err("argument index must be an integer ≥ 1"),
        };
        p.pos += 1;
        p.expect("]")?;
        p.expect("=>")?;
        let value = p.literal()?;
        let ty = if p.eat(":") {
            p.ident()?
        } else {
            value.default_type().to_string()
        };
        if !p.at_end() {
            return p.err("unexpected trailing input");
        }
        set.injections.push(ArgInjection {
            func,
            index,
            value,
            ty,
            line,
        });
        return Ok(());
    }

    let relaxed = p.peek() == Some(&Tok::Ident("relaxed".into()))
        && !matches!(p.toks.get(1).map(|t| &t.0), Some(Tok::Sym("(" | ":")));
    if relaxed {
        p.pos += 1;
    }
    let name = match (
        p.toks.get(p.pos).map(|t| &t.0),
        p.toks.get(p.pos + 1).map(|t| &t.0),
    ) {
        (Some(Tok::Ident(n)), Some(Tok::Sym(":"))) => {
            let n = n.clone();
            p.pos += 2;
            n
        }
        _ => format!("rule{line}"),
    };
    let lhs = p.expr()?;
    let dynamic = if p.eat("->") {
        false
    } else if p.eat("=>") {
        true
    } else {
        return p.err("expected `->` or `=>`");
    };
    let rhs = p.expr()?;
    if !p.at_end() {
        return p.err("unexpected trailing input");
    }
    if let Expr::Var(v, _, col) = &lhs {
        return Err(RuleError::Syntax {
            line,
            col: *col,
            msg: format!("left-hand side `~{v}` matches everything"),
        });
    }
    let lhs_pat = to_pattern(&lhs);
    let rhs = if dynamic {
        let d = to_dyn(&rhs, line)?;
        let comptime: Vec<String> = comptime_vars(&lhs_pat);
        for v in d.vars() {
            if !comptime.contains(&v.to_string()) {
                return Err(RuleError::NotComptime {
                    line,
                    var: v.to_string(),
                });
            }
        }
        RuleRhs::Dynamic(d)
    } else {
        if let Some((v, col)) = first_constraint(&rhs) {
            return Err(RuleError::Syntax {
                line,
                col,
                msg: format!("type constraint on `~{v}` is only allowed on the left-hand side"),
            });
        }
        RuleRhs::Template(to_pattern(&rhs))
    };
    let bound = lhs_pat.vars();
    for v in rhs.vars() {
        if !bound.contains(&v) {
            return Err(RuleError::UnboundVar {
                line,
                var: v.to_string(),
            });
        }
    }
    if set.rules.iter().any(|r| r.name == name) {
        return Err(RuleError::DuplicateName { line, name });
    }
    set.rules.push(Rule {
        name,
        lhs: lhs_pat,
        rhs,
        relaxed,
        line,
    });
    Ok(())
}

fn comptime_vars(p: &Pattern) -> Vec<String> {
    match p {
        Pattern::Var(v, Some(Constraint::Comptime(_))) => vec![v.clone()],
        Pattern::Call(_, args) => args.iter().flat_map(comptime_vars).collect(),
        _ => Vec::new(),
    }
}

/// Parses a rule file: one rule or injection per line, `#` comments.
pub fn parse_rules(text: &str) -> Result<RuleSet, RuleError> {
    let mut set = RuleSet::default();
    for (i, line) in text.lines().enumerate() {
        let toks = lex(line, i + 1)?;
        if toks.is_empty() {
            continue;
        }
        parse_line(toks, i + 1, line.chars().count() + 1, &mut set)?;
    }
    Ok(set)
}
