//! Concrete syntax: a shared lexer and recursive-descent parsers for
//! expressions, programs, formulas and model files.
//!
//! Numeric literals are sort-resolved from the position they occur in
//! (assignment right-hand sides are `cell`, loop guards `nat`, operator
//! arguments whatever the arity says); `parse ∘ print` is the identity on
//! well-formed ASTs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::assertions::Formula;
use crate::syntax::{Expr, Model, Op, Overflow, Program, Sort};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(i64),
    Str(String),
    Sym(&'static str),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("`{n}`"),
            Tok::Str(s) => format!("\"{s}\""),
            Tok::Sym(s) => format!("`{s}`"),
        }
    }
}

const SYMS3: &[&str] = &["<1>", "<2>"];
const SYMS2: &[&str] = &[":=", "<-", "=?", "<?", "&&", "||", ".."];
const SYMS1: &str = ";{}(),=<.:%+-*[]@";

pub fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (l0, c0) = (line, col);
        if c == '"' {
            let mut j = i + 1;
            let mut s = String::new();
            while j < chars.len() && chars[j] != '"' {
                if chars[j] == '\n' {
                    return Err(ParseError {
                        line: l0,
                        col: c0,
                        msg: "unterminated string literal".into(),
                    });
                }
                s.push(chars[j]);
                j += 1;
            }
            if j >= chars.len() {
                return Err(ParseError {
                    line: l0,
                    col: c0,
                    msg: "unterminated string literal".into(),
                });
            }
            col += j - i + 1;
            i = j + 1;
            out.push((Tok::Str(s), l0, c0));
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            let n: i64 = text.parse().map_err(|_| ParseError {
                line: l0,
                col: c0,
                msg: format!("numeric literal `{text}` out of range"),
            })?;
            col += j - i;
            i = j;
            out.push((Tok::Num(n), l0, c0));
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let text: String = chars[i..j].iter().collect();
            col += j - i;
            i = j;
            out.push((Tok::Ident(text), l0, c0));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        if let Some(sym) = SYMS3.iter().find(|s| rest.starts_with(**s)) {
            out.push((Tok::Sym(sym), l0, c0));
            col += 3;
            i += 3;
            continue;
        }
        if let Some(sym) = SYMS2.iter().find(|s| rest.starts_with(**s)) {
            out.push((Tok::Sym(sym), l0, c0));
            col += 2;
            i += 2;
            continue;
        }
        if let Some(p) = SYMS1.find(c) {
            out.push((Tok::Sym(&SYMS1[p..p + c.len_utf8()]), l0, c0));
            col += 1;
            i += 1;
            continue;
        }
        return Err(ParseError {
            line: l0,
            col: c0,
            msg: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

/// Token-stream parser. Exposed so the derivation and axiom-table readers can
/// reuse the same lexer and error reporting.
pub struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    pub fn new(src: &str) -> Result<Parser, ParseError> {
        let toks = lex(src)?;
        let end = toks
            .last()
            .map(|(_, l, c)| (*l, *c + 1))
            .unwrap_or((1, 1));
        Ok(Parser { toks, pos: 0, end })
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    pub fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn err(&self, msg: impl Into<String>) -> ParseError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .map(|(_, l, c)| (*l, *c))
            .unwrap_or(self.end);
        ParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    pub fn at_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(t)) if *t == s)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected `{s}`, found {}",
                self.peek().map(Tok::describe).unwrap_or("end of input".into())
            )))
        }
    }

    pub fn at_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(t)) if t == s)
    }

    pub fn eat_ident(&mut self, s: &str) -> bool {
        if self.at_ident(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => match self.bump() {
                Some(Tok::Ident(s)) => Ok(s),
                _ => unreachable!(),
            },
            other => Err(self.err(format!(
                "expected identifier, found {}",
                other.map(Tok::describe).unwrap_or("end of input".into())
            ))),
        }
    }

    pub fn expect_num(&mut self) -> Result<i64, ParseError> {
        match self.peek() {
            Some(Tok::Num(_)) => match self.bump() {
                Some(Tok::Num(n)) => Ok(n),
                _ => unreachable!(),
            },
            other => Err(self.err(format!(
                "expected number, found {}",
                other.map(Tok::describe).unwrap_or("end of input".into())
            ))),
        }
    }

    pub fn expect_str(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Str(_)) => match self.bump() {
                Some(Tok::Str(s)) => Ok(s),
                _ => unreachable!(),
            },
            other => Err(self.err(format!(
                "expected quoted string, found {}",
                other.map(Tok::describe).unwrap_or("end of input".into())
            ))),
        }
    }

    pub fn expect_end(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err(format!(
                "unexpected trailing {}",
                self.peek().map(Tok::describe).unwrap()
            )))
        }
    }

    // ---- expressions ------------------------------------------------------

    /// Parse an expression occurring at a position of known sort; bare
    /// numeric literals are tagged with that sort.
    pub fn expr(&mut self, expected: Sort) -> Result<Expr, ParseError> {
        let mut e = self.expr_prec(1)?;
        tag_literals(&mut e, expected);
        Ok(e)
    }

    fn expr_prec(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.expr_atom()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Sym(s)) => Op::by_name(s),
                Some(Tok::Ident(s)) if s == "max" || s == "min" => Op::by_name(s),
                _ => None,
            };
            let op = match op {
                Some(op) if op.is_infix() && op.precedence() >= min_prec => op,
                _ => break,
            };
            self.bump();
            let rhs = self.expr_prec(op.precedence() + 1)?;
            lhs = Expr::app(op, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn expr_atom(&mut self) -> Result<Expr, ParseError> {
        if self.eat_sym("(") {
            let e = self.expr_prec(1)?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if self.eat_sym("%") {
            return Ok(Expr::Meta(self.expect_ident()?));
        }
        if self.eat_sym("-") {
            let n = self.expect_num()?;
            return Ok(Expr::cell(-n));
        }
        match self.peek() {
            Some(Tok::Num(_)) => {
                let n = self.expect_num()?;
                Ok(Expr::cell(n)) // placeholder sort, retagged by position
            }
            Some(Tok::Ident(name)) => {
                let name = name.clone();
                if name == "true" || name == "false" {
                    self.bump();
                    return Ok(Expr::Bool(name == "true"));
                }
                if let Some(op) = Op::by_name(&name) {
                    if matches!(self.peek2(), Some(Tok::Sym("("))) {
                        self.bump();
                        self.expect_sym("(")?;
                        let mut args = Vec::new();
                        if !self.at_sym(")") {
                            loop {
                                args.push(self.expr_prec(1)?);
                                if !self.eat_sym(",") {
                                    break;
                                }
                            }
                        }
                        self.expect_sym(")")?;
                        return Ok(Expr::app(op, args));
                    }
                }
                self.bump();
                Ok(Expr::var(&name))
            }
            other => Err(self.err(format!(
                "expected expression, found {}",
                other.map(Tok::describe).unwrap_or("end of input".into())
            ))),
        }
    }

    // ---- programs ---------------------------------------------------------

    pub fn program(&mut self) -> Result<Program, ParseError> {
        let first = self.stmt()?;
        if self.eat_sym(";") {
            Ok(Program::seq(first, self.program()?))
        } else {
            Ok(first)
        }
    }

    fn stmt(&mut self) -> Result<Program, ParseError> {
        if self.eat_sym("{") {
            let p = self.program()?;
            self.expect_sym("}")?;
            return Ok(p);
        }
        if self.eat_ident("skip") {
            return Ok(Program::Skip);
        }
        if self.eat_ident("do") {
            return Ok(Program::Command(self.expect_ident()?));
        }
        if self.eat_ident("if") {
            let guard = self.expr(Sort::Bool)?;
            self.expect_sym("{")?;
            let t = self.program()?;
            self.expect_sym("}")?;
            if !self.eat_ident("else") {
                return Err(self.err("expected `else`"));
            }
            self.expect_sym("{")?;
            let f = self.program()?;
            self.expect_sym("}")?;
            return Ok(Program::If(guard, Box::new(t), Box::new(f)));
        }
        if self.eat_ident("loop") {
            let guard = self.expr(Sort::Nat)?;
            self.expect_sym("{")?;
            let body = self.program()?;
            self.expect_sym("}")?;
            return Ok(Program::Loop(guard, Box::new(body)));
        }
        let name = self.expect_ident()?;
        if self.eat_sym(":=") {
            let e = self.expr(Sort::Cell)?;
            return Ok(Program::Assign(name, e));
        }
        if self.eat_sym("<-") {
            let proc = self.expect_ident()?;
            self.expect_sym("(")?;
            let mut args = Vec::new();
            if !self.at_sym(")") {
                loop {
                    args.push(self.expr(Sort::Cell)?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            }
            self.expect_sym(")")?;
            return Ok(Program::Procedure {
                target: name,
                name: proc,
                args,
            });
        }
        Err(self.err(format!("expected `:=` or `<-` after `{name}`")))
    }

    // ---- formulas ---------------------------------------------------------

    pub fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut binders = Vec::new();
        self.disj(&mut binders)
    }

    fn disj(&mut self, binders: &mut Vec<(String, Sort)>) -> Result<Formula, ParseError> {
        let mut parts = vec![self.conj(binders)?];
        while self.eat_sym("||") {
            parts.push(self.conj(binders)?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn conj(&mut self, binders: &mut Vec<(String, Sort)>) -> Result<Formula, ParseError> {
        let mut parts = vec![self.formula_prim(binders)?];
        while self.eat_sym("&&") {
            parts.push(self.formula_prim(binders)?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn formula_prim(&mut self, binders: &mut Vec<(String, Sort)>) -> Result<Formula, ParseError> {
        if self.eat_ident("tt") {
            return Ok(Formula::tt());
        }
        if self.eat_ident("ff") {
            return Ok(Formula::ff());
        }
        if self.at_sym("(") {
            // A `(` can open either a grouped formula or a parenthesized
            // sub-expression of an equality atom; try the formula reading
            // and roll back to the equality path if it does not pan out.
            let mark = self.pos;
            self.pos += 1;
            if let Ok(f) = self.disj(binders) {
                if self.eat_sym(")")
                    && !self.at_sym("=")
                    && !self.at_sym("<1>")
                    && !self.at_sym("<2>")
                {
                    return Ok(f);
                }
            }
            self.pos = mark;
        }
        if self.eat_ident("or") {
            let index = self.expect_ident()?;
            self.expect_sym("<")?;
            let bound = self.expect_num()?;
            if bound < 0 {
                return Err(self.err("indexed disjunction bound must be nonnegative"));
            }
            self.expect_sym(".")?;
            binders.push((index.clone(), Sort::Nat));
            let body = self.disj(binders);
            binders.pop();
            return Ok(Formula::OrIdx {
                index,
                bound: bound as u64,
                body: Box::new(body?),
            });
        }
        if self.eat_ident("exists") {
            let var = self.expect_ident()?;
            self.expect_sym(":")?;
            let sort_name = self.expect_ident()?;
            let sort = Sort::parse(&sort_name)
                .ok_or_else(|| self.err(format!("unknown sort `{sort_name}`")))?;
            self.expect_sym(".")?;
            binders.push((var.clone(), sort));
            let body = self.disj(binders);
            binders.pop();
            return Ok(Formula::Exists {
                var,
                sort,
                body: Box::new(body?),
            });
        }
        // Atom application `p(e, ...)` when the head is not an operator name.
        if let Some(Tok::Ident(name)) = self.peek() {
            if Op::by_name(name).is_none()
                && name != "true"
                && name != "false"
                && matches!(self.peek2(), Some(Tok::Sym("(")))
            {
                let pred = self.expect_ident()?;
                self.expect_sym("(")?;
                let mut args = Vec::new();
                if !self.at_sym(")") {
                    loop {
                        let mut a = self.expr_prec(1)?;
                        tag_literals(&mut a, Sort::Cell);
                        args.push(a);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym(")")?;
                return Ok(Formula::Atom { pred, args });
            }
        }
        // Equality or projected equality: `e = e`, `e<1> = e`, `e<2> = e`.
        let mut lhs = self.expr_prec(1)?;
        let proj = if self.eat_sym("<1>") {
            Some(crate::assertions::EQV1)
        } else if self.eat_sym("<2>") {
            Some(crate::assertions::EQV2)
        } else {
            None
        };
        self.expect_sym("=")?;
        let mut rhs = self.expr_prec(1)?;
        tag_pair(&mut lhs, &mut rhs, binders);
        Ok(match proj {
            Some(pred) => Formula::Atom {
                pred: pred.to_string(),
                args: vec![lhs, rhs],
            },
            None => Formula::Eq(lhs, rhs),
        })
    }
}

/// Tag bare numeric literals with the sort demanded by their position.
/// Operator arguments are always determined by the arity; only the top of an
/// expression can be position-dependent.
fn tag_literals(e: &mut Expr, expected: Sort) {
    match e {
        Expr::Num { sort, .. } => {
            if expected != Sort::Bool {
                *sort = expected;
            }
        }
        Expr::App { op, args } => {
            let (arg_sorts, _) = op.arity();
            for (a, s) in args.iter_mut().zip(arg_sorts) {
                tag_literals(a, *s);
            }
        }
        _ => {}
    }
}

/// Sort of an expression as far as it is determined without a model: bound
/// logical variables have their binder sort, everything else that looks like
/// a variable is a cell-valued program variable; only bare literals are open.
fn infer_sort(e: &Expr, binders: &[(String, Sort)]) -> Option<Sort> {
    match e {
        Expr::Var(v) => Some(
            binders
                .iter()
                .rev()
                .find(|(n, _)| n == v)
                .map(|(_, s)| *s)
                .unwrap_or(Sort::Cell),
        ),
        Expr::Bool(_) => Some(Sort::Bool),
        Expr::Meta(_) => Some(Sort::Nat),
        Expr::Num { .. } => None,
        Expr::App { op, .. } => Some(op.arity().1),
    }
}

/// Resolve the literals of two sides of an equality against each other.
fn tag_pair(a: &mut Expr, b: &mut Expr, binders: &[(String, Sort)]) {
    let s = infer_sort(a, binders)
        .or_else(|| infer_sort(b, binders))
        .unwrap_or(Sort::Cell);
    tag_literals(a, s);
    tag_literals(b, s);
}

// ---- top-level convenience entry points -----------------------------------

pub fn parse_expr(src: &str, expected: Sort) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    let e = p.expr(expected)?;
    p.expect_end()?;
    Ok(e)
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let prog = p.program()?;
    p.expect_end()?;
    Ok(prog)
}

pub fn parse_formula(src: &str) -> Result<Formula, ParseError> {
    let mut p = Parser::new(src)?;
    let f = p.formula()?;
    p.expect_end()?;
    Ok(f)
}

// ---- model files ----------------------------------------------------------

/// Parse a line-oriented model file:
///
/// ```text
/// vars = x, y, z
/// cell = 0..3
/// nat_bound = 4
/// overflow = wrap
/// varlv = x:3, y:7
/// pred even = (0),(2)
/// ```
pub fn parse_model(src: &str) -> Result<Model, ParseError> {
    let mut vars: Option<Vec<String>> = None;
    let mut cell: Option<(i64, i64)> = None;
    let mut nat_bound: u64 = 8;
    let mut overflow = Overflow::Wrap;
    let mut var_levels = BTreeMap::new();
    let mut atoms: BTreeMap<String, Vec<Vec<i64>>> = BTreeMap::new();

    for (idx, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fail = |msg: String| ParseError {
            line: lineno,
            col: 1,
            msg,
        };
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| fail(format!("expected `key = value`, got `{line}`")))?;
        let (key, val) = (key.trim(), val.trim());
        match key {
            "vars" => {
                let names: Vec<String> = val
                    .split(',')
                    .map(|v| v.trim().to_string())
                    .filter(|v| !v.is_empty())
                    .collect();
                for v in &names {
                    if !is_ident(v) {
                        return Err(fail(format!("bad variable name `{v}`")));
                    }
                }
                if names.is_empty() {
                    return Err(fail("empty variable list".into()));
                }
                vars = Some(names);
            }
            "cell" => {
                let (lo, hi) = val
                    .split_once("..")
                    .ok_or_else(|| fail(format!("expected `lo..hi`, got `{val}`")))?;
                let lo: i64 = lo
                    .trim()
                    .parse()
                    .map_err(|_| fail(format!("bad bound `{lo}`")))?;
                let hi: i64 = hi
                    .trim()
                    .parse()
                    .map_err(|_| fail(format!("bad bound `{hi}`")))?;
                if lo > hi {
                    return Err(fail(format!("empty cell domain {lo}..{hi}")));
                }
                cell = Some((lo, hi));
            }
            "nat_bound" => {
                nat_bound = val
                    .parse()
                    .map_err(|_| fail(format!("bad nat_bound `{val}`")))?;
            }
            "overflow" => {
                overflow = match val {
                    "wrap" => Overflow::Wrap,
                    "reject" => Overflow::Reject,
                    _ => return Err(fail(format!("overflow must be wrap or reject, got `{val}`"))),
                };
            }
            "varlv" => {
                for part in val.split(',').filter(|p| !p.trim().is_empty()) {
                    let (v, lv) = part
                        .split_once(':')
                        .ok_or_else(|| fail(format!("expected `var:level`, got `{part}`")))?;
                    let lv: u64 = lv
                        .trim()
                        .parse()
                        .map_err(|_| fail(format!("bad level `{lv}`")))?;
                    var_levels.insert(v.trim().to_string(), lv);
                }
            }
            _ => {
                if let Some(name) = key.strip_prefix("pred ") {
                    let name = name.trim();
                    if !is_ident(name) {
                        return Err(fail(format!("bad predicate name `{name}`")));
                    }
                    let tuples = parse_tuples(val)
                        .ok_or_else(|| fail(format!("bad extension `{val}`")))?;
                    if let Some(first) = tuples.first() {
                        if tuples.iter().any(|t| t.len() != first.len()) {
                            return Err(fail(format!("mixed tuple arity for `{name}`")));
                        }
                    }
                    atoms.insert(name.to_string(), tuples);
                } else {
                    return Err(fail(format!("unknown key `{key}`")));
                }
            }
        }
    }

    let vars = vars.ok_or(ParseError {
        line: 1,
        col: 1,
        msg: "model file missing `vars`".into(),
    })?;
    let (lo, hi) = cell.ok_or(ParseError {
        line: 1,
        col: 1,
        msg: "model file missing `cell`".into(),
    })?;
    for v in var_levels.keys() {
        if !vars.contains(v) {
            return Err(ParseError {
                line: 1,
                col: 1,
                msg: format!("varlv names undeclared variable `{v}`"),
            });
        }
    }
    let names: Vec<&str> = vars.iter().map(String::as_str).collect();
    let mut model = Model::new(&names, lo, hi, nat_bound);
    model.overflow = overflow;
    model.var_levels = var_levels;
    model.atom_extensions = atoms;
    Ok(model)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Parse `(0,1),(2,3)` into tuples of integers; empty input means the empty
/// extension.
fn parse_tuples(s: &str) -> Option<Vec<Vec<i64>>> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        let inner = rest.strip_prefix('(')?;
        let end = inner.find(')')?;
        let tuple: Vec<i64> = inner[..end]
            .split(',')
            .map(|x| x.trim().parse().ok())
            .collect::<Option<_>>()?;
        out.push(tuple);
        rest = inner[end + 1..].trim_start();
    }
    Some(out)
}
