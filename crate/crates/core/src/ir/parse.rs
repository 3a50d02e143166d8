use std::collections::HashMap;

use super::{
    Block, BranchTarget, FunctionIR, IRProgram, IrError, Statement, StmtKind, Terminator, ValueId,
};
use crate::literal::Literal;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Value(String),
    Lit(Literal),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '!'
}

fn lex(text: &str) -> Result<Vec<Token>, IrError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, msg: String| IrError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
        } else if c == '#' || c == ';' {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i);
            }
        } else if "(){}:,=".contains(c) {
            out.push(Token {
                tok: Tok::Punct(c),
                line: tl,
                col: tc,
            });
            advance(1, &mut i);
        } else if c == '%' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            if j == start {
                return Err(err(tl, tc, "expected value name after `%`".into()));
            }
            let name: String = chars[start..j].iter().collect();
            out.push(Token {
                tok: Tok::Value(name),
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i);
        } else if c == '"' {
            let mut s = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None => return Err(err(tl, tc, "unterminated string literal".into())),
                    Some('"') => break,
                    Some('\\') => {
                        let esc = chars.get(j + 1).copied();
                        s.push(match esc {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err(tl, tc, "bad escape in string literal".into())),
                        });
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Lit(Literal::Str(s)),
                line: tl,
                col: tc,
            });
            advance(j + 1 - i, &mut i);
        } else if c.is_ascii_digit() || (c == '-' && i + 1 < chars.len()) {
            let mut j = i + 1;
            while j < chars.len() && (is_ident_char(chars[j]) || chars[j] == '+' || chars[j] == '-')
            {
                // only allow a sign directly after an exponent marker
                if (chars[j] == '+' || chars[j] == '-') && !matches!(chars[j - 1], 'e' | 'E') {
                    break;
                }
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            let lit =
                parse_number(&word).ok_or_else(|| err(tl, tc, format!("bad number `{word}`")))?;
            out.push(Token {
                tok: Tok::Lit(lit),
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i);
        } else if is_ident_char(c) {
            let mut j = i;
            while j < chars.len() && is_ident_char(chars[j]) {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            out.push(Token {
                tok: Tok::Ident(word),
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i);
        } else {
            return Err(err(tl, tc, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

pub(crate) fn parse_number(word: &str) -> Option<Literal> {
    match word {
        "inf" | "-inf" | "NaN" => return word.parse::<f64>().ok().map(Literal::Float),
        _ => {}
    }
    if word.contains(['.', 'e', 'E']) {
        word.parse::<f64>().ok().map(Literal::Float)
    } else {
        word.parse::<i64>().ok().map(Literal::Int)
    }
}

/// Syntax tree before names are resolved.
struct RawFunction {
    name: String,
    params: Vec<(Token, String)>,
    blocks: Vec<RawBlock>,
}

struct RawBlock {
    label: Token,
    args: Vec<(Token, String)>,
    stmts: Vec<RawStmt>,
    term: RawTerm,
}

struct RawStmt {
    dest: Token,
    ty: String,
    kind: RawKind,
}

enum RawKind {
    Const(Literal),
    Call(String, Vec<Token>),
}

struct RawTarget {
    label: Token,
    args: Vec<Token>,
}

enum RawTerm {
    Goto(RawTarget),
    Branch(Token, RawTarget, RawTarget),
    Return(Token),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or(self.end)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, IrError> {
        let (line, col) = self.here();
        Err(IrError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn next(&mut self) -> Result<Token, IrError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.error("unexpected end of input"),
        }
    }

    fn punct(&mut self, c: char) -> Result<(), IrError> {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected `{c}`"))
        }
    }

    fn eat_punct(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Punct(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.error("expected identifier"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => self.error(format!("expected `{kw}`")),
        }
    }

    fn value(&mut self) -> Result<Token, IrError> {
        match self.peek() {
            Some(Tok::Value(_)) => self.next(),
            _ => self.error("expected `%value`"),
        }
    }

    fn label(&mut self) -> Result<Token, IrError> {
        match self.peek() {
            Some(Tok::Ident(s)) if is_label(s) => self.next(),
            _ => self.error("expected block label `bb<k>`"),
        }
    }

    /// `(` typed-values `)`, used for params and block arguments.
    fn typed_list(&mut self) -> Result<Vec<(Token, String)>, IrError> {
        self.punct('(')?;
        let mut out = Vec::new();
        if self.eat_punct(')') {
            return Ok(out);
        }
        loop {
            let v = self.value()?;
            self.punct(':')?;
            let ty = self.ident()?;
            out.push((v, ty));
            if self.eat_punct(')') {
                return Ok(out);
            }
            self.punct(',')?;
        }
    }

    fn value_list(&mut self) -> Result<Vec<Token>, IrError> {
        self.punct('(')?;
        let mut out = Vec::new();
        if self.eat_punct(')') {
            return Ok(out);
        }
        loop {
            out.push(self.value()?);
            if self.eat_punct(')') {
                return Ok(out);
            }
            self.punct(',')?;
        }
    }

    fn target(&mut self) -> Result<RawTarget, IrError> {
        let label = self.label()?;
        let args = if self.peek() == Some(&Tok::Punct('(')) {
            self.value_list()?
        } else {
            Vec::new()
        };
        Ok(RawTarget { label, args })
    }

    fn function(&mut self) -> Result<RawFunction, IrError> {
        self.keyword("fn")?;
        let name = self.ident()?;
        let params = self.typed_list()?;
        self.punct('{')?;
        let mut blocks = Vec::new();
        while !self.eat_punct('}') {
            blocks.push(self.block()?);
        }
        if blocks.is_empty() {
            return self.error(format!("function `{name}` has no blocks"));
        }
        Ok(RawFunction {
            name,
            params,
            blocks,
        })
    }

    fn block(&mut self) -> Result<RawBlock, IrError> {
        let label = self.label()?;
        let args = if self.peek() == Some(&Tok::Punct('(')) {
            self.typed_list()?
        } else {
            Vec::new()
        };
        self.punct(':')?;
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Value(_)) => stmts.push(self.statement()?),
                Some(Tok::Ident(kw)) if kw == "goto" => {
                    self.pos += 1;
                    let t = self.target()?;
                    return Ok(RawBlock {
                        label,
                        args,
                        stmts,
                        term: RawTerm::Goto(t),
                    });
                }
                Some(Tok::Ident(kw)) if kw == "br" => {
                    self.pos += 1;
                    let cond = self.value()?;
                    self.punct(',')?;
                    let a = self.target()?;
                    self.punct(',')?;
                    let b = self.target()?;
                    return Ok(RawBlock {
                        label,
                        args,
                        stmts,
                        term: RawTerm::Branch(cond, a, b),
                    });
                }
                Some(Tok::Ident(kw)) if kw == "ret" => {
                    self.pos += 1;
                    let v = self.value()?;
                    return Ok(RawBlock {
                        label,
                        args,
                        stmts,
                        term: RawTerm::Return(v),
                    });
                }
                _ => return self.error("expected statement or terminator"),
            }
        }
    }

    fn statement(&mut self) -> Result<RawStmt, IrError> {
        let dest = self.value()?;
        self.punct('=')?;
        let kind = match self.ident()?.as_str() {
            "const" => match self.next()?.tok {
                Tok::Lit(l) => RawKind::Const(l),
                Tok::Ident(s) if s == "true" => RawKind::Const(Literal::Bool(true)),
                Tok::Ident(s) if s == "false" => RawKind::Const(Literal::Bool(false)),
                Tok::Ident(s) if parse_number(&s).is_some() => {
                    RawKind::Const(parse_number(&s).unwrap())
                }
                _ => {
                    self.pos -= 1;
                    return self.error("expected literal");
                }
            },
            "call" => {
                let f = self.ident()?;
                RawKind::Call(f, self.value_list()?)
            }
            _ => {
                self.pos -= 1;
                return self.error("expected `const` or `call`");
            }
        };
        self.punct(':')?;
        let ty = self.ident()?;
        Ok(RawStmt { dest, ty, kind })
    }
}

fn is_label(s: &str) -> bool {
    s.len() > 2 && s.starts_with("bb") && s[2..].chars().all(|c| c.is_ascii_digit())
}

fn name_of(t: &Token) -> &str {
    match &t.tok {
        Tok::Value(s) | Tok::Ident(s) => s,
        _ => "",
    }
}

fn resolve(raw: RawFunction) -> Result<FunctionIR, IrError> {
    let mut values: HashMap<String, ValueId> = HashMap::new();
    let define = |t: &Token, values: &mut HashMap<String, ValueId>| {
        let n = values.len();
        match values.insert(name_of(t).to_string(), ValueId(n)) {
            Some(_) => Err(IrError::DuplicateValue {
                name: format!("%{}", name_of(t)),
                line: t.line,
                col: t.col,
            }),
            None => Ok(ValueId(n)),
        }
    };

    let mut params = Vec::new();
    for (t, ty) in &raw.params {
        params.push((define(t, &mut values)?, ty.clone()));
    }
    let mut labels = HashMap::new();
    for (i, b) in raw.blocks.iter().enumerate() {
        if labels.insert(name_of(&b.label).to_string(), i).is_some() {
            return Err(IrError::Syntax {
                line: b.label.line,
                col: b.label.col,
                msg: format!("duplicate block label `{}`", name_of(&b.label)),
            });
        }
    }
    // definitions first so later blocks can be referenced from earlier ones
    let mut block_args = Vec::new();
    let mut dests = Vec::new();
    for (i, b) in raw.blocks.iter().enumerate() {
        if i == 0 && !b.args.is_empty() {
            // entry arguments may only restate the parameters
            let same = b.args.len() == raw.params.len()
                && b.args
                    .iter()
                    .zip(&raw.params)
                    .all(|((a, at), (p, pt))| name_of(a) == name_of(p) && at == pt);
            if !same {
                return Err(IrError::Syntax {
                    line: b.label.line,
                    col: b.label.col,
                    msg: "entry block arguments must match the function parameters".into(),
                });
            }
            block_args.push(Vec::new());
        } else {
            let mut args = Vec::new();
            for (t, ty) in &b.args {
                args.push((define(t, &mut values)?, ty.clone()));
            }
            block_args.push(args);
        }
        let mut ds = Vec::new();
        for s in &b.stmts {
            ds.push(define(&s.dest, &mut values)?);
        }
        dests.push(ds);
    }

    let lookup = |t: &Token| {
        values
            .get(name_of(t))
            .copied()
            .ok_or_else(|| IrError::UndefinedValue {
                name: format!("%{}", name_of(t)),
                line: t.line,
                col: t.col,
            })
    };
    let target = |t: &RawTarget| -> Result<BranchTarget, IrError> {
        let block =
            labels
                .get(name_of(&t.label))
                .copied()
                .ok_or_else(|| IrError::UndefinedBlock {
                    name: name_of(&t.label).to_string(),
                    line: t.label.line,
                    col: t.label.col,
                })?;
        let args = t.args.iter().map(lookup).collect::<Result<_, _>>()?;
        Ok(BranchTarget { block, args })
    };

    let mut blocks = Vec::new();
    for ((b, args), ds) in raw.blocks.iter().zip(block_args).zip(dests) {
        let mut statements = Vec::new();
        for (s, dest) in b.stmts.iter().zip(ds) {
            let kind = match &s.kind {
                RawKind::Const(l) => StmtKind::Const(l.clone()),
                RawKind::Call(f, a) => StmtKind::Call {
                    func: f.clone(),
                    args: a.iter().map(lookup).collect::<Result<_, _>>()?,
                },
            };
            statements.push(Statement {
                dest,
                ty: s.ty.clone(),
                kind,
            });
        }
        let terminator = match &b.term {
            RawTerm::Goto(t) => Terminator::Goto(target(t)?),
            RawTerm::Branch(c, a, e) => Terminator::Branch {
                cond: lookup(c)?,
                then_to: target(a)?,
                else_to: target(e)?,
            },
            RawTerm::Return(v) => Terminator::Return(lookup(v)?),
        };
        blocks.push(Block {
            args,
            statements,
            terminator,
        });
    }
    let mut f = FunctionIR {
        name: raw.name,
        params,
        blocks,
    };
    f.renumber();
    Ok(f)
}

/// Parses a whole IR file.
pub fn parse_ir(text: &str) -> Result<IRProgram, IrError> {
    let toks = lex(text)?;
    let end = toks.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1));
    let mut p = Parser { toks, pos: 0, end };
    let mut prog = IRProgram::default();
    while p.peek().is_some() {
        let f = resolve(p.function()?)?;
        if prog.functions.contains_key(&f.name) {
            return Err(IrError::DuplicateFunction(f.name));
        }
        prog.functions.insert(f.name.clone(), f);
    }
    Ok(prog)
}

/// Parses text holding exactly one function.
pub fn parse_function(text: &str) -> Result<FunctionIR, IrError> {
    let prog = parse_ir(text)?;
    if prog.functions.len() != 1 {
        return Err(IrError::Syntax {
            line: 1,
            col: 1,
            msg: format!("expected one function, found {}", prog.functions.len()),
        });
    }
    Ok(prog.functions.into_values().next().unwrap())
}
