//! Sorts, signatures, expressions, programs and their evaluation against a
//! fixed finite interpretation.
//!
//! Program variables all have sort `cell`, whose carrier is a finite integer
//! interval declared in the [`Model`]. `bool` steers conditionals and `nat`
//! (bounded by `nat_bound`) steers loops.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Bool,
    Nat,
    Cell,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::Bool => write!(f, "bool"),
            Sort::Nat => write!(f, "nat"),
            Sort::Cell => write!(f, "cell"),
        }
    }
}

impl Sort {
    pub fn parse(s: &str) -> Option<Sort> {
        match s {
            "bool" => Some(Sort::Bool),
            "nat" => Some(Sort::Nat),
            "cell" => Some(Sort::Cell),
            _ => None,
        }
    }
}

/// Builtin operators of the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Max,
    Min,
    /// Equality test on cells, returning a boolean.
    EqTest,
    /// Less-than test on cells, returning a boolean.
    LtTest,
    B2c,
    N2c,
    C2b,
    C2n,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Add => "+",
            Op::Sub => "-",
            Op::Mul => "*",
            Op::Max => "max",
            Op::Min => "min",
            Op::EqTest => "=?",
            Op::LtTest => "<?",
            Op::B2c => "b2c",
            Op::N2c => "n2c",
            Op::C2b => "c2b",
            Op::C2n => "c2n",
        }
    }

    pub fn by_name(name: &str) -> Option<Op> {
        match name {
            "+" => Some(Op::Add),
            "-" => Some(Op::Sub),
            "*" => Some(Op::Mul),
            "max" => Some(Op::Max),
            "min" => Some(Op::Min),
            "=?" => Some(Op::EqTest),
            "<?" => Some(Op::LtTest),
            "b2c" => Some(Op::B2c),
            "n2c" => Some(Op::N2c),
            "c2b" => Some(Op::C2b),
            "c2n" => Some(Op::C2n),
            _ => None,
        }
    }

    /// Argument sorts and result sort.
    pub fn arity(self) -> (&'static [Sort], Sort) {
        use Sort::*;
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Max | Op::Min => (&[Cell, Cell], Cell),
            Op::EqTest | Op::LtTest => (&[Cell, Cell], Bool),
            Op::B2c => (&[Bool], Cell),
            Op::N2c => (&[Nat], Cell),
            Op::C2b => (&[Cell], Bool),
            Op::C2n => (&[Cell], Nat),
        }
    }

    pub fn is_infix(self) -> bool {
        matches!(
            self,
            Op::Add | Op::Sub | Op::Mul | Op::Max | Op::Min | Op::EqTest | Op::LtTest
        )
    }

    /// Binding strength for pretty-printing and parsing; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            Op::EqTest | Op::LtTest => 1,
            Op::Max | Op::Min => 2,
            Op::Add | Op::Sub => 3,
            Op::Mul => 4,
            _ => 5,
        }
    }
}

/// The many-sorted signature: the three builtin sorts plus the fixed builtin
/// operator table. Kept as a value so contexts and future extensions have a
/// place to attach.
#[derive(Debug, Clone)]
pub struct Signature {
    ops: BTreeMap<&'static str, Op>,
}

impl Default for Signature {
    fn default() -> Self {
        Signature::builtin()
    }
}

impl Signature {
    pub fn builtin() -> Signature {
        let mut ops = BTreeMap::new();
        for op in [
            Op::Add,
            Op::Sub,
            Op::Mul,
            Op::Max,
            Op::Min,
            Op::EqTest,
            Op::LtTest,
            Op::B2c,
            Op::N2c,
            Op::C2b,
            Op::C2n,
        ] {
            ops.insert(op.name(), op);
        }
        Signature { ops }
    }

    pub fn lookup(&self, name: &str) -> Option<Op> {
        self.ops.get(name).copied()
    }
}

/// An ordered variable context with distinct names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Context {
    bindings: Vec<(String, Sort)>,
}

impl Context {
    pub fn new() -> Context {
        Context::default()
    }

    /// The program context: every program variable has sort `cell`.
    pub fn program_vars(vars: &[String]) -> Context {
        Context {
            bindings: vars.iter().map(|v| (v.clone(), Sort::Cell)).collect(),
        }
    }

    pub fn bind(&mut self, name: &str, sort: Sort) -> Result<(), SortError> {
        if self.sort_of(name).is_some() {
            return Err(SortError::DuplicateVariable(name.to_string()));
        }
        self.bindings.push((name.to_string(), sort));
        Ok(())
    }

    pub fn extended(&self, name: &str, sort: Sort) -> Result<Context, SortError> {
        let mut ctx = self.clone();
        ctx.bind(name, sort)?;
        Ok(ctx)
    }

    pub fn sort_of(&self, name: &str) -> Option<Sort> {
        self.bindings
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| *s)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.sort_of(name).is_some()
    }
}

/// Expressions. Numeric literals carry their resolved sort (`nat` or `cell`);
/// the parser resolves it from the position the literal occurs in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Var(String),
    Bool(bool),
    Num { value: i64, sort: Sort },
    App { op: Op, args: Vec<Expr> },
    /// Loop-family meta index `%z`; substituted away before evaluation.
    Meta(String),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn nat(value: u64) -> Expr {
        Expr::Num {
            value: value as i64,
            sort: Sort::Nat,
        }
    }

    pub fn cell(value: i64) -> Expr {
        Expr::Num {
            value,
            sort: Sort::Cell,
        }
    }

    pub fn app(op: Op, args: Vec<Expr>) -> Expr {
        Expr::App { op, args }
    }

    /// Free variables, in first-occurrence order.
    pub fn free_vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Var(v) => {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
            Expr::App { args, .. } => {
                for a in args {
                    a.collect_vars(out);
                }
            }
            _ => {}
        }
    }

    pub fn contains_meta(&self) -> bool {
        match self {
            Expr::Meta(_) => true,
            Expr::App { args, .. } => args.iter().any(Expr::contains_meta),
            _ => false,
        }
    }

    /// Replace every occurrence of variable `v` by `e`.
    pub fn substitute(&self, v: &str, e: &Expr) -> Expr {
        match self {
            Expr::Var(name) if name == v => e.clone(),
            Expr::App { op, args } => Expr::App {
                op: *op,
                args: args.iter().map(|a| a.substitute(v, e)).collect(),
            },
            other => other.clone(),
        }
    }

    /// Replace meta index `%name` by the nat literal `z`.
    pub fn instantiate_meta(&self, name: &str, z: u64) -> Expr {
        match self {
            Expr::Meta(m) if m == name => Expr::nat(z),
            Expr::App { op, args } => Expr::App {
                op: *op,
                args: args.iter().map(|a| a.instantiate_meta(name, z)).collect(),
            },
            other => other.clone(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SortError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("duplicate variable `{0}` in context")]
    DuplicateVariable(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("operator `{op}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        op: String,
        expected: usize,
        got: usize,
    },
    #[error("expected sort {expected}, found {found} in `{context}`")]
    Mismatch {
        expected: Sort,
        found: Sort,
        context: String,
    },
    #[error("nat literal must be nonnegative, got {0}")]
    NegativeNat(i64),
}

/// Sort of a well-sorted expression.
pub fn sort_of(e: &Expr, _sig: &Signature, ctx: &Context) -> Result<Sort, SortError> {
    match e {
        Expr::Var(v) => ctx
            .sort_of(v)
            .ok_or_else(|| SortError::UnboundVariable(v.clone())),
        Expr::Bool(_) => Ok(Sort::Bool),
        Expr::Num { value, sort } => {
            if *sort == Sort::Nat && *value < 0 {
                return Err(SortError::NegativeNat(*value));
            }
            Ok(*sort)
        }
        Expr::Meta(_) => Ok(Sort::Nat),
        Expr::App { op, args } => {
            let (arg_sorts, result) = op.arity();
            if arg_sorts.len() != args.len() {
                return Err(SortError::ArityMismatch {
                    op: op.name().to_string(),
                    expected: arg_sorts.len(),
                    got: args.len(),
                });
            }
            for (a, expected) in args.iter().zip(arg_sorts) {
                let found = sort_of(a, _sig, ctx)?;
                if found != *expected {
                    return Err(SortError::Mismatch {
                        expected: *expected,
                        found,
                        context: print_expr(a),
                    });
                }
            }
            Ok(result)
        }
    }
}

/// Programs of the loop language.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Program {
    Seq(Box<Program>, Box<Program>),
    Skip,
    Assign(String, Expr),
    Command(String),
    Procedure {
        target: String,
        name: String,
        args: Vec<Expr>,
    },
    If(Expr, Box<Program>, Box<Program>),
    Loop(Expr, Box<Program>),
}

impl Program {
    pub fn seq(a: Program, b: Program) -> Program {
        Program::Seq(Box::new(a), Box::new(b))
    }
}

/// Values of the three sorts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Nat(u64),
    Cell(i64),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Nat(n) => write!(f, "{n}"),
            Value::Cell(c) => write!(f, "{c}"),
        }
    }
}

impl Value {
    pub fn sort(&self) -> Sort {
        match self {
            Value::Bool(_) => Sort::Bool,
            Value::Nat(_) => Sort::Nat,
            Value::Cell(_) => Sort::Cell,
        }
    }

    pub fn as_cell(&self) -> Option<i64> {
        match self {
            Value::Cell(c) => Some(*c),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_nat(&self) -> Option<u64> {
        match self {
            Value::Nat(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overflow {
    #[default]
    Wrap,
    Reject,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("value {value} outside cell domain {lo}..{hi} (reject mode)")]
    OutOfDomain { value: i64, lo: i64, hi: i64 },
    #[error("unbound variable `{0}` at evaluation")]
    UnboundVariable(String),
    #[error("uninstantiated meta index `%{0}`")]
    Meta(String),
    #[error("ill-sorted application of `{0}`")]
    IllSorted(String),
    #[error("enumeration budget exceeded: world of size {size} > budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
    #[error("loop guard evaluated to {value}, above nat_bound {bound}")]
    LoopBound { value: u64, bound: u64 },
    #[error("unknown effect `{0}` in this instance")]
    UnknownEffect(String),
}

/// The fixed finite interpretation everything is evaluated against.
#[derive(Debug, Clone)]
pub struct Model {
    pub cell_lo: i64,
    pub cell_hi: i64,
    pub nat_bound: u64,
    pub var_order: Vec<String>,
    pub overflow: Overflow,
    /// Security levels per variable (seclevel instance only).
    pub var_levels: BTreeMap<String, u64>,
    /// Declared extensions of extra atomic predicates (tuples of cell values).
    pub atom_extensions: BTreeMap<String, Vec<Vec<i64>>>,
    pub signature: Signature,
}

impl Model {
    pub fn new(vars: &[&str], cell_lo: i64, cell_hi: i64, nat_bound: u64) -> Model {
        assert!(cell_lo <= cell_hi, "empty cell domain");
        Model {
            cell_lo,
            cell_hi,
            nat_bound,
            var_order: vars.iter().map(|s| s.to_string()).collect(),
            overflow: Overflow::Wrap,
            var_levels: BTreeMap::new(),
            atom_extensions: BTreeMap::new(),
            signature: Signature::builtin(),
        }
    }

    pub fn domain_size(&self) -> u64 {
        (self.cell_hi - self.cell_lo + 1) as u64
    }

    pub fn cell_domain(&self) -> impl Iterator<Item = i64> + '_ {
        self.cell_lo..=self.cell_hi
    }

    pub fn program_context(&self) -> Context {
        Context::program_vars(&self.var_order)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_order.iter().position(|v| v == name)
    }

    fn clamp_cell(&self, v: i64) -> Result<i64, EvalError> {
        if v >= self.cell_lo && v <= self.cell_hi {
            return Ok(v);
        }
        match self.overflow {
            Overflow::Wrap => {
                let size = self.domain_size() as i64;
                Ok(self.cell_lo + (v - self.cell_lo).rem_euclid(size))
            }
            Overflow::Reject => Err(EvalError::OutOfDomain {
                value: v,
                lo: self.cell_lo,
                hi: self.cell_hi,
            }),
        }
    }

    /// Domain of a sort, for logical-variable enumeration.
    pub fn sort_domain(&self, sort: Sort) -> Vec<Value> {
        match sort {
            Sort::Bool => vec![Value::Bool(false), Value::Bool(true)],
            Sort::Nat => (0..=self.nat_bound).map(Value::Nat).collect(),
            Sort::Cell => self.cell_domain().map(Value::Cell).collect(),
        }
    }

    pub fn max_level(&self) -> u64 {
        self.var_levels.values().copied().max().unwrap_or(0)
    }
}

/// A memory: one cell value per program variable, indexed by the model's
/// variable order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Memory {
    pub values: Vec<i64>,
}

impl Memory {
    pub fn get(&self, model: &Model, var: &str) -> Option<i64> {
        model.var_index(var).map(|i| self.values[i])
    }

    pub fn set(&self, model: &Model, var: &str, value: i64) -> Memory {
        let mut values = self.values.clone();
        if let Some(i) = model.var_index(var) {
            values[i] = value;
        }
        Memory { values }
    }

    pub fn display(&self, model: &Model) -> String {
        model
            .var_order
            .iter()
            .zip(&self.values)
            .map(|(v, x)| format!("{v}={x}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// An environment for expression evaluation: the program memory (or a pair of
/// memories in relational mode is handled by evaluating per side), extended by
/// logical-variable bindings.
#[derive(Debug, Clone)]
pub struct Env<'a> {
    pub model: &'a Model,
    pub memory: &'a Memory,
    pub logical: Vec<(String, Value)>,
}

impl<'a> Env<'a> {
    pub fn new(model: &'a Model, memory: &'a Memory) -> Env<'a> {
        Env {
            model,
            memory,
            logical: Vec::new(),
        }
    }

    fn lookup(&self, name: &str) -> Option<Value> {
        // Logical binders shadow nothing: namespaces are disjoint by
        // construction, but scan them first anyway.
        if let Some((_, v)) = self.logical.iter().rev().find(|(n, _)| n == name) {
            return Some(*v);
        }
        self.memory.get(self.model, name).map(Value::Cell)
    }
}

/// Evaluate a well-sorted expression. Deterministic and total up to the
/// overflow mode.
pub fn eval_expr(e: &Expr, env: &Env<'_>) -> Result<Value, EvalError> {
    match e {
        Expr::Var(v) => env
            .lookup(v)
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        Expr::Bool(b) => Ok(Value::Bool(*b)),
        Expr::Num { value, sort } => match sort {
            Sort::Nat => Ok(Value::Nat(*value as u64)),
            Sort::Cell => Ok(Value::Cell(env.model.clamp_cell(*value)?)),
            Sort::Bool => Err(EvalError::IllSorted(print_expr(e))),
        },
        Expr::Meta(m) => Err(EvalError::Meta(m.clone())),
        Expr::App { op, args } => {
            let vals = args
                .iter()
                .map(|a| eval_expr(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            apply_op(*op, &vals, env.model)
        }
    }
}

fn apply_op(op: Op, vals: &[Value], model: &Model) -> Result<Value, EvalError> {
    let cell2 = |f: fn(i64, i64) -> i64| -> Result<Value, EvalError> {
        let (a, b) = (cell_arg(vals, 0, op)?, cell_arg(vals, 1, op)?);
        Ok(Value::Cell(model.clamp_cell(f(a, b))?))
    };
    match op {
        Op::Add => cell2(|a, b| a.wrapping_add(b)),
        Op::Sub => cell2(|a, b| a.wrapping_sub(b)),
        Op::Mul => cell2(|a, b| a.wrapping_mul(b)),
        Op::Max => cell2(i64::max),
        Op::Min => cell2(i64::min),
        Op::EqTest => Ok(Value::Bool(
            cell_arg(vals, 0, op)? == cell_arg(vals, 1, op)?,
        )),
        Op::LtTest => Ok(Value::Bool(cell_arg(vals, 0, op)? < cell_arg(vals, 1, op)?)),
        Op::B2c => {
            let b = vals[0]
                .as_bool()
                .ok_or_else(|| EvalError::IllSorted(op.name().into()))?;
            Ok(Value::Cell(model.clamp_cell(i64::from(b))?))
        }
        Op::N2c => {
            let n = vals[0]
                .as_nat()
                .ok_or_else(|| EvalError::IllSorted(op.name().into()))?;
            Ok(Value::Cell(model.clamp_cell(n as i64)?))
        }
        Op::C2b => {
            let c = cell_arg(vals, 0, op)?;
            Ok(Value::Bool(c != 0))
        }
        Op::C2n => {
            let c = cell_arg(vals, 0, op)?;
            Ok(Value::Nat(c.max(0) as u64))
        }
    }
}

fn cell_arg(vals: &[Value], i: usize, op: Op) -> Result<i64, EvalError> {
    vals[i]
        .as_cell()
        .ok_or_else(|| EvalError::IllSorted(op.name().to_string()))
}

/// All memories, lexicographic in variable order then cell domain.
pub fn enumerate_memories(model: &Model, budget: u128) -> Result<Vec<Memory>, EvalError> {
    let size = (model.domain_size() as u128).pow(model.var_order.len() as u32);
    if size > budget {
        return Err(EvalError::BudgetExceeded { size, budget });
    }
    let mut out = Vec::with_capacity(size as usize);
    let n = model.var_order.len();
    let mut current = vec![model.cell_lo; n];
    loop {
        out.push(Memory {
            values: current.clone(),
        });
        // Increment like an odometer, last variable fastest.
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if current[i] < model.cell_hi {
                current[i] += 1;
                for slot in current.iter_mut().skip(i + 1) {
                    *slot = model.cell_lo;
                }
                break;
            }
        }
    }
}

/// Pretty-print an expression; `parse ∘ print` is the identity on ASTs.
pub fn print_expr(e: &Expr) -> String {
    print_expr_prec(e, 0)
}

fn print_expr_prec(e: &Expr, min_prec: u8) -> String {
    match e {
        Expr::Var(v) => v.clone(),
        Expr::Bool(b) => b.to_string(),
        Expr::Num { value, .. } => value.to_string(),
        Expr::Meta(m) => format!("%{m}"),
        Expr::App { op, args } if op.is_infix() && args.len() == 2 => {
            let p = op.precedence();
            // Infix operators associate to the left.
            let s = format!(
                "{} {} {}",
                print_expr_prec(&args[0], p),
                op.name(),
                print_expr_prec(&args[1], p + 1)
            );
            if p < min_prec {
                format!("({s})")
            } else {
                s
            }
        }
        Expr::App { op, args } => {
            let inner = args.iter().map(print_expr).collect::<Vec<_>>().join(", ");
            format!("{}({})", op.name(), inner)
        }
    }
}

/// Pretty-print a program; `parse ∘ print` is the identity on ASTs.
pub fn print_program(p: &Program) -> String {
    match p {
        Program::Seq(a, b) => format!("{}; {}", print_program_atom(a), print_program(b)),
        other => print_program_atom(other),
    }
}

fn print_program_atom(p: &Program) -> String {
    match p {
        Program::Skip => "skip".to_string(),
        Program::Assign(v, e) => format!("{v} := {}", print_expr(e)),
        Program::Command(f) => format!("do {f}"),
        Program::Procedure { target, name, args } => {
            let inner = args.iter().map(print_expr).collect::<Vec<_>>().join(", ");
            format!("{target} <- {name}({inner})")
        }
        Program::If(e, t, f) => format!(
            "if {} {{ {} }} else {{ {} }}",
            print_expr(e),
            print_program(t),
            print_program(f)
        ),
        Program::Loop(e, body) => format!("loop {} {{ {} }}", print_expr(e), print_program(body)),
        Program::Seq(..) => format!("{{ {} }}", print_program(p)),
    }
}

/// Well-sortedness of a whole program: assignment targets are declared,
/// guards and right-hand sides have the right sorts.
pub fn check_program(p: &Program, model: &Model) -> Result<(), SortError> {
    let ctx = model.program_context();
    let sig = &model.signature;
    check_program_in(p, sig, &ctx)
}

fn check_program_in(p: &Program, sig: &Signature, ctx: &Context) -> Result<(), SortError> {
    match p {
        Program::Seq(a, b) => {
            check_program_in(a, sig, ctx)?;
            check_program_in(b, sig, ctx)
        }
        Program::Skip | Program::Command(_) => Ok(()),
        Program::Assign(v, e) => {
            if !ctx.contains(v) {
                return Err(SortError::UnboundVariable(v.clone()));
            }
            expect_sort(e, Sort::Cell, sig, ctx)
        }
        Program::Procedure { target, args, .. } => {
            if !ctx.contains(target) {
                return Err(SortError::UnboundVariable(target.clone()));
            }
            for a in args {
                expect_sort(a, Sort::Cell, sig, ctx)?;
            }
            Ok(())
        }
        Program::If(e, t, f) => {
            expect_sort(e, Sort::Bool, sig, ctx)?;
            check_program_in(t, sig, ctx)?;
            check_program_in(f, sig, ctx)
        }
        Program::Loop(e, body) => {
            expect_sort(e, Sort::Nat, sig, ctx)?;
            check_program_in(body, sig, ctx)
        }
    }
}

pub fn expect_sort(e: &Expr, expected: Sort, sig: &Signature, ctx: &Context) -> Result<(), SortError> {
    let found = sort_of(e, sig, ctx)?;
    if found != expected {
        return Err(SortError::Mismatch {
            expected,
            found,
            context: print_expr(e),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model3() -> Model {
        Model::new(&["x", "y", "z"], 0, 3, 4)
    }

    #[test]
    fn sort_of_context_lookup_and_constants() {
        let m = model3();
        let ctx = m.program_context();
        let sig = &m.signature;
        assert_eq!(sort_of(&Expr::var("x"), sig, &ctx), Ok(Sort::Cell));
        assert_eq!(sort_of(&Expr::Bool(true), sig, &ctx), Ok(Sort::Bool));
        let app = Expr::app(Op::Add, vec![Expr::var("x"), Expr::cell(2)]);
        assert_eq!(sort_of(&app, sig, &ctx), Ok(Sort::Cell));
    }

    #[test]
    fn sort_errors() {
        let m = model3();
        let ctx = m.program_context();
        let sig = &m.signature;
        assert!(matches!(
            sort_of(&Expr::var("w"), sig, &ctx),
            Err(SortError::UnboundVariable(_))
        ));
        let bad = Expr::app(Op::Add, vec![Expr::var("x")]);
        assert!(matches!(
            sort_of(&bad, sig, &ctx),
            Err(SortError::ArityMismatch { .. })
        ));
        let ill = Expr::app(Op::Add, vec![Expr::Bool(true), Expr::var("x")]);
        assert!(matches!(
            sort_of(&ill, sig, &ctx),
            Err(SortError::Mismatch { .. })
        ));
    }

    #[test]
    fn eval_basics() {
        let m = model3();
        let mem = Memory {
            values: vec![3, 0, 0],
        };
        let env = Env::new(&m, &mem);
        assert_eq!(eval_expr(&Expr::cell(2), &env), Ok(Value::Cell(2)));
        assert_eq!(eval_expr(&Expr::var("x"), &env), Ok(Value::Cell(3)));
        let mx = Expr::app(Op::Max, vec![Expr::var("x"), Expr::var("y")]);
        assert_eq!(eval_expr(&mx, &env), Ok(Value::Cell(3)));
    }

    #[test]
    fn eval_max_of_two_vars() {
        let m = Model::new(&["v1", "v2"], 0, 3, 4);
        let mem = Memory {
            values: vec![1, 2],
        };
        let env = Env::new(&m, &mem);
        let e = Expr::app(Op::Max, vec![Expr::var("v1"), Expr::var("v2")]);
        assert_eq!(eval_expr(&e, &env), Ok(Value::Cell(2)));
    }

    #[test]
    fn overflow_wrap_and_reject() {
        let mut m = Model::new(&["x"], 0, 3, 4);
        let mem = Memory { values: vec![3] };
        let plus = Expr::app(Op::Add, vec![Expr::var("x"), Expr::cell(1)]);
        let env = Env::new(&m, &mem);
        assert_eq!(eval_expr(&plus, &env), Ok(Value::Cell(0)));
        m.overflow = Overflow::Reject;
        let env = Env::new(&m, &mem);
        assert!(matches!(
            eval_expr(&plus, &env),
            Err(EvalError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn enumerate_counts() {
        let m = Model::new(&["x"], 0, 1, 4);
        assert_eq!(enumerate_memories(&m, 1 << 20).unwrap().len(), 2);
        let m = Model::new(&["x", "y"], 0, 1, 4);
        assert_eq!(enumerate_memories(&m, 1 << 20).unwrap().len(), 4);
        let m = model3();
        let mems = enumerate_memories(&m, 1 << 20).unwrap();
        assert_eq!(mems.len(), 64);
        // Lexicographic order and distinctness.
        let mut sorted = mems.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, mems);
    }

    #[test]
    fn enumerate_budget() {
        let m = model3();
        assert!(matches!(
            enumerate_memories(&m, 10),
            Err(EvalError::BudgetExceeded { .. })
        ));
    }
}
