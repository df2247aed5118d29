//! The assertion logic: positive formulas (conjunction, disjunction, bounded
//! indexed disjunction, existential quantification, equality, atoms) and
//! their denotation as finite predicates over memories or memory pairs.
//!
//! Entailment is decided semantically by enumerating the world of the active
//! model, which is exactly the validity notion the rule checker's side
//! conditions need.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::syntax::{
    enumerate_memories, eval_expr, print_expr, sort_of, Context, Env, EvalError, Expr, Memory,
    Model, Sort, SortError, Value,
};

/// Names of the builtin relational atoms.
pub const EQV1: &str = "eqv1";
pub const EQV2: &str = "eqv2";
pub const EQPUB: &str = "eqPub";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Atom { pred: String, args: Vec<Expr> },
    Eq(Expr, Expr),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    /// Bounded indexed disjunction: `or i < k . body`.
    OrIdx {
        index: String,
        bound: u64,
        body: Box<Formula>,
    },
    Exists {
        var: String,
        sort: Sort,
        body: Box<Formula>,
    },
}

impl Formula {
    pub fn tt() -> Formula {
        Formula::And(Vec::new())
    }

    pub fn ff() -> Formula {
        Formula::Or(Vec::new())
    }

    pub fn eq(a: Expr, b: Expr) -> Formula {
        Formula::Eq(a, b)
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        Formula::And(fs)
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        Formula::Or(fs)
    }

    pub fn contains_meta(&self) -> bool {
        match self {
            Formula::Atom { args, .. } => args.iter().any(Expr::contains_meta),
            Formula::Eq(a, b) => a.contains_meta() || b.contains_meta(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(Formula::contains_meta),
            Formula::OrIdx { body, .. } | Formula::Exists { body, .. } => body.contains_meta(),
        }
    }

    /// Replace meta index `%name` by the nat literal `z` everywhere.
    pub fn instantiate_meta(&self, name: &str, z: u64) -> Formula {
        self.map_exprs(&|e| e.instantiate_meta(name, z))
    }

    fn map_exprs(&self, f: &impl Fn(&Expr) -> Expr) -> Formula {
        match self {
            Formula::Atom { pred, args } => Formula::Atom {
                pred: pred.clone(),
                args: args.iter().map(f).collect(),
            },
            Formula::Eq(a, b) => Formula::Eq(f(a), f(b)),
            Formula::And(fs) => Formula::And(fs.iter().map(|x| x.map_exprs(f)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|x| x.map_exprs(f)).collect()),
            Formula::OrIdx { index, bound, body } => Formula::OrIdx {
                index: index.clone(),
                bound: *bound,
                body: Box::new(body.map_exprs(f)),
            },
            Formula::Exists { var, sort, body } => Formula::Exists {
                var: var.clone(),
                sort: *sort,
                body: Box::new(body.map_exprs(f)),
            },
        }
    }

    /// Canonical form: conjunct/disjunct lists sorted. Used wherever two
    /// formulas must match exactly (axiom-table citations, rule shapes).
    pub fn normalize(&self) -> Formula {
        match self {
            Formula::And(fs) => {
                let mut out: Vec<Formula> = fs.iter().map(Formula::normalize).collect();
                out.sort();
                Formula::And(out)
            }
            Formula::Or(fs) => {
                let mut out: Vec<Formula> = fs.iter().map(Formula::normalize).collect();
                out.sort();
                Formula::Or(out)
            }
            Formula::OrIdx { index, bound, body } => Formula::OrIdx {
                index: index.clone(),
                bound: *bound,
                body: Box::new(body.normalize()),
            },
            Formula::Exists { var, sort, body } => Formula::Exists {
                var: var.clone(),
                sort: *sort,
                body: Box::new(body.normalize()),
            },
            other => other.clone(),
        }
    }

    pub fn alpha_eq(&self, other: &Formula) -> bool {
        self.normalize() == other.normalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Unary,
    Relational,
}

/// The predicate model: the mode plus the declared atom extensions drawn
/// from the model file. Relational mode computes `eqv1`, `eqv2` and `eqPub`
/// instead of looking extensions up.
#[derive(Debug, Clone)]
pub struct PredModel {
    pub mode: Mode,
}

impl PredModel {
    pub fn unary() -> PredModel {
        PredModel { mode: Mode::Unary }
    }

    pub fn relational() -> PredModel {
        PredModel {
            mode: Mode::Relational,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unknown atomic predicate `{0}`")]
    UnknownAtom(String),
    #[error("atom `{0}` is only available in relational mode")]
    RelationalOnly(String),
    #[error("atom `{pred}` expects {expected} arguments, got {got}")]
    AtomArity {
        pred: String,
        expected: usize,
        got: usize,
    },
    #[error("equality arguments have different sorts: `{0}` vs `{1}`")]
    EqSortMismatch(Sort, Sort),
    #[error("binder `{0}` collides with a program variable")]
    NamespaceViolation(String),
}

/// Sort check a formula under the program context of `model`.
pub fn check_formula(f: &Formula, model: &Model, pm: &PredModel) -> Result<(), FormulaError> {
    let ctx = model.program_context();
    check_formula_in(f, model, pm, &ctx)
}

/// Sort check under the program context extended by extra logical bindings
/// (used for axiom-table postconditions over the distinguished variable `r`).
pub fn check_formula_with(
    f: &Formula,
    model: &Model,
    pm: &PredModel,
    extra: &[(String, Sort)],
) -> Result<(), FormulaError> {
    let mut ctx = model.program_context();
    for (name, sort) in extra {
        ctx.bind(name, *sort)?;
    }
    check_formula_in(f, model, pm, &ctx)
}

fn check_formula_in(
    f: &Formula,
    model: &Model,
    pm: &PredModel,
    ctx: &Context,
) -> Result<(), FormulaError> {
    let sig = &model.signature;
    match f {
        Formula::Eq(a, b) => {
            let sa = sort_of(a, sig, ctx)?;
            let sb = sort_of(b, sig, ctx)?;
            if sa != sb {
                return Err(FormulaError::EqSortMismatch(sa, sb));
            }
            Ok(())
        }
        Formula::Atom { pred, args } => match pred.as_str() {
            EQV1 | EQV2 => {
                if args.len() != 2 {
                    return Err(FormulaError::AtomArity {
                        pred: pred.clone(),
                        expected: 2,
                        got: args.len(),
                    });
                }
                let sa = sort_of(&args[0], sig, ctx)?;
                let sb = sort_of(&args[1], sig, ctx)?;
                if sa != sb {
                    return Err(FormulaError::EqSortMismatch(sa, sb));
                }
                Ok(())
            }
            EQPUB => {
                if args.len() != 1 {
                    return Err(FormulaError::AtomArity {
                        pred: pred.clone(),
                        expected: 1,
                        got: args.len(),
                    });
                }
                sort_of(&args[0], sig, ctx)?;
                Ok(())
            }
            name => {
                let ext = model
                    .atom_extensions
                    .get(name)
                    .ok_or_else(|| FormulaError::UnknownAtom(name.to_string()))?;
                let arity = ext.first().map(Vec::len).unwrap_or(args.len());
                if args.len() != arity {
                    return Err(FormulaError::AtomArity {
                        pred: pred.clone(),
                        expected: arity,
                        got: args.len(),
                    });
                }
                for a in args {
                    let s = sort_of(a, sig, ctx)?;
                    if s != Sort::Cell {
                        return Err(FormulaError::Sort(SortError::Mismatch {
                            expected: Sort::Cell,
                            found: s,
                            context: print_expr(a),
                        }));
                    }
                }
                Ok(())
            }
        },
        Formula::And(fs) | Formula::Or(fs) => {
            for g in fs {
                check_formula_in(g, model, pm, ctx)?;
            }
            Ok(())
        }
        Formula::OrIdx { index, body, .. } => {
            if model.var_index(index).is_some() {
                return Err(FormulaError::NamespaceViolation(index.clone()));
            }
            let ctx2 = ctx.extended(index, Sort::Nat)?;
            check_formula_in(body, model, pm, &ctx2)
        }
        Formula::Exists { var, sort, body } => {
            if model.var_index(var).is_some() {
                // Existential over a program variable: denotes projection on
                // that memory column, so the variable stays cell-sorted.
                if *sort != Sort::Cell {
                    return Err(FormulaError::NamespaceViolation(var.clone()));
                }
                return check_formula_in(body, model, pm, ctx);
            }
            let ctx2 = ctx.extended(var, *sort)?;
            check_formula_in(body, model, pm, &ctx2)
        }
    }
}

/// A denoted predicate: an explicit finite subset of the world of memories
/// (unary) or memory pairs (relational).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Unary(BTreeSet<Memory>),
    Rel(BTreeSet<(Memory, Memory)>),
}

impl Predicate {
    pub fn len(&self) -> usize {
        match self {
            Predicate::Unary(s) => s.len(),
            Predicate::Rel(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_mem(&self, m: &Memory) -> bool {
        matches!(self, Predicate::Unary(s) if s.contains(m))
    }

    pub fn contains_pair(&self, p: &(Memory, Memory)) -> bool {
        matches!(self, Predicate::Rel(s) if s.contains(p))
    }

    pub fn subset_of(&self, other: &Predicate) -> bool {
        match (self, other) {
            (Predicate::Unary(a), Predicate::Unary(b)) => a.is_subset(b),
            (Predicate::Rel(a), Predicate::Rel(b)) => a.is_subset(b),
            _ => false,
        }
    }
}

/// Truth of a formula at a point of the world.
///
/// In relational mode the point is a pair of memories; logical binders range
/// over pairs of values and expressions are evaluated once per side.
pub fn holds_unary(
    f: &Formula,
    model: &Model,
    mem: &Memory,
    logical: &mut Vec<(String, Value)>,
) -> Result<bool, FormulaError> {
    match f {
        Formula::Eq(a, b) => {
            let va = eval_logical(a, model, mem, logical)?;
            let vb = eval_logical(b, model, mem, logical)?;
            Ok(va == vb)
        }
        Formula::Atom { pred, args } => match pred.as_str() {
            EQV1 | EQV2 | EQPUB => Err(FormulaError::RelationalOnly(pred.clone())),
            name => {
                let ext = model
                    .atom_extensions
                    .get(name)
                    .ok_or_else(|| FormulaError::UnknownAtom(name.to_string()))?;
                let tuple = args
                    .iter()
                    .map(|a| {
                        eval_logical(a, model, mem, logical).map(|v| v.as_cell().unwrap_or(0))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ext.contains(&tuple))
            }
        },
        Formula::And(fs) => {
            for g in fs {
                if !holds_unary(g, model, mem, logical)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(fs) => {
            for g in fs {
                if holds_unary(g, model, mem, logical)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::OrIdx { index, bound, body } => {
            for k in 0..*bound {
                logical.push((index.clone(), Value::Nat(k)));
                let r = holds_unary(body, model, mem, logical);
                logical.pop();
                if r? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Exists { var, sort, body } => {
            if model.var_index(var).is_some() {
                // Project out the variable's memory column.
                for c in model.cell_domain() {
                    if holds_unary(body, model, &mem.set(model, var, c), logical)? {
                        return Ok(true);
                    }
                }
                return Ok(false);
            }
            for v in model.sort_domain(*sort) {
                logical.push((var.clone(), v));
                let r = holds_unary(body, model, mem, logical);
                logical.pop();
                if r? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn eval_logical(
    e: &Expr,
    model: &Model,
    mem: &Memory,
    logical: &[(String, Value)],
) -> Result<Value, FormulaError> {
    let mut env = Env::new(model, mem);
    env.logical = logical.to_vec();
    Ok(eval_expr(e, &env)?)
}

pub fn holds_rel(
    f: &Formula,
    model: &Model,
    pair: (&Memory, &Memory),
    logical: &mut Vec<(String, (Value, Value))>,
) -> Result<bool, FormulaError> {
    let (m1, m2) = pair;
    let eval_side = |e: &Expr,
                     side: u8,
                     logical: &[(String, (Value, Value))]|
     -> Result<Value, FormulaError> {
        let mem = if side == 1 { m1 } else { m2 };
        let proj: Vec<(String, Value)> = logical
            .iter()
            .map(|(n, (a, b))| (n.clone(), if side == 1 { *a } else { *b }))
            .collect();
        eval_logical(e, model, mem, &proj)
    };
    match f {
        Formula::Eq(a, b) => {
            // Both projections must agree componentwise.
            Ok(eval_side(a, 1, logical)? == eval_side(b, 1, logical)?
                && eval_side(a, 2, logical)? == eval_side(b, 2, logical)?)
        }
        Formula::Atom { pred, args } => match pred.as_str() {
            EQV1 => Ok(eval_side(&args[0], 1, logical)? == eval_side(&args[1], 1, logical)?),
            EQV2 => Ok(eval_side(&args[0], 2, logical)? == eval_side(&args[1], 2, logical)?),
            EQPUB => Ok(eval_side(&args[0], 1, logical)? == eval_side(&args[0], 2, logical)?),
            name => Err(FormulaError::UnknownAtom(format!("{name} (relational)"))),
        },
        Formula::And(fs) => {
            for g in fs {
                if !holds_rel(g, model, pair, logical)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(fs) => {
            for g in fs {
                if holds_rel(g, model, pair, logical)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::OrIdx { index, bound, body } => {
            for k in 0..*bound {
                logical.push((index.clone(), (Value::Nat(k), Value::Nat(k))));
                let r = holds_rel(body, model, pair, logical);
                logical.pop();
                if r? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Exists { var, sort, body } => {
            if model.var_index(var).is_some() {
                for c1 in model.cell_domain() {
                    for c2 in model.cell_domain() {
                        let p1 = m1.set(model, var, c1);
                        let p2 = m2.set(model, var, c2);
                        if holds_rel(body, model, (&p1, &p2), logical)? {
                            return Ok(true);
                        }
                    }
                }
                return Ok(false);
            }
            let dom = model.sort_domain(*sort);
            for v1 in &dom {
                for v2 in &dom {
                    logical.push((var.clone(), (*v1, *v2)));
                    let r = holds_rel(body, model, pair, logical);
                    logical.pop();
                    if r? {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        }
    }
}

/// Denote a formula as an explicit subset of the world.
pub fn denote_formula(
    f: &Formula,
    model: &Model,
    pm: &PredModel,
    budget: u128,
) -> Result<Predicate, FormulaError> {
    check_formula(f, model, pm)?;
    match pm.mode {
        Mode::Unary => {
            let mems = enumerate_memories(model, budget)?;
            let mut set = BTreeSet::new();
            for m in mems {
                if holds_unary(f, model, &m, &mut Vec::new())? {
                    set.insert(m);
                }
            }
            Ok(Predicate::Unary(set))
        }
        Mode::Relational => {
            let mems = enumerate_memories(model, budget.isqrt())?;
            let mut set = BTreeSet::new();
            for m1 in &mems {
                for m2 in &mems {
                    if holds_rel(f, model, (m1, m2), &mut Vec::new())? {
                        set.insert((m1.clone(), m2.clone()));
                    }
                }
            }
            Ok(Predicate::Rel(set))
        }
    }
}

/// Semantic entailment: the intersection of the hypotheses is contained in
/// the goal, over the full world of the model.
pub fn entails(
    hyps: &[Formula],
    goal: &Formula,
    model: &Model,
    pm: &PredModel,
    budget: u128,
) -> Result<bool, FormulaError> {
    for h in hyps {
        check_formula(h, model, pm)?;
    }
    check_formula(goal, model, pm)?;
    match pm.mode {
        Mode::Unary => {
            let mems = enumerate_memories(model, budget)?;
            for m in &mems {
                let mut all = true;
                for h in hyps {
                    if !holds_unary(h, model, m, &mut Vec::new())? {
                        all = false;
                        break;
                    }
                }
                if all && !holds_unary(goal, model, m, &mut Vec::new())? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Mode::Relational => {
            let mems = enumerate_memories(model, budget.isqrt())?;
            for m1 in &mems {
                for m2 in &mems {
                    let mut all = true;
                    for h in hyps {
                        if !holds_rel(h, model, (m1, m2), &mut Vec::new())? {
                            all = false;
                            break;
                        }
                    }
                    if all && !holds_rel(goal, model, (m1, m2), &mut Vec::new())? {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}

/// Capture-free substitution of expression `e` for program variable `v`.
pub fn substitute(f: &Formula, v: &str, e: &Expr) -> Result<Formula, FormulaError> {
    match f {
        Formula::Atom { pred, args } => Ok(Formula::Atom {
            pred: pred.clone(),
            args: args.iter().map(|a| a.substitute(v, e)).collect(),
        }),
        Formula::Eq(a, b) => Ok(Formula::Eq(a.substitute(v, e), b.substitute(v, e))),
        Formula::And(fs) => Ok(Formula::And(
            fs.iter()
                .map(|g| substitute(g, v, e))
                .collect::<Result<_, _>>()?,
        )),
        Formula::Or(fs) => Ok(Formula::Or(
            fs.iter()
                .map(|g| substitute(g, v, e))
                .collect::<Result<_, _>>()?,
        )),
        Formula::OrIdx { index, bound, body } => {
            if index == v {
                // Binding occurrence shadows: nothing to substitute below.
                return Ok(f.clone());
            }
            if e.free_vars().contains(&index.as_str()) {
                return Err(FormulaError::NamespaceViolation(index.clone()));
            }
            Ok(Formula::OrIdx {
                index: index.clone(),
                bound: *bound,
                body: Box::new(substitute(body, v, e)?),
            })
        }
        Formula::Exists { var, sort, body } => {
            if var == v {
                return Ok(f.clone());
            }
            if e.free_vars().contains(&var.as_str()) {
                return Err(FormulaError::NamespaceViolation(var.clone()));
            }
            Ok(Formula::Exists {
                var: var.clone(),
                sort: *sort,
                body: Box::new(substitute(body, v, e)?),
            })
        }
    }
}

/// Pretty-print a formula; `parse ∘ print` is the identity on ASTs.
pub fn print_formula(f: &Formula) -> String {
    print_formula_prec(f, 0)
}

fn print_formula_prec(f: &Formula, min_prec: u8) -> String {
    match f {
        Formula::And(fs) if fs.is_empty() => "tt".to_string(),
        Formula::Or(fs) if fs.is_empty() => "ff".to_string(),
        Formula::And(fs) => {
            let s = fs
                .iter()
                .map(|g| print_formula_prec(g, 3))
                .collect::<Vec<_>>()
                .join(" && ");
            if min_prec > 2 {
                format!("({s})")
            } else {
                s
            }
        }
        Formula::Or(fs) => {
            let s = fs
                .iter()
                .map(|g| print_formula_prec(g, 2))
                .collect::<Vec<_>>()
                .join(" || ");
            if min_prec > 1 {
                format!("({s})")
            } else {
                s
            }
        }
        Formula::Eq(a, b) => format!("{} = {}", print_expr(a), print_expr(b)),
        Formula::Atom { pred, args } if pred == EQV1 || pred == EQV2 => {
            let side = if pred == EQV1 { 1 } else { 2 };
            format!("{}<{side}> = {}", print_expr(&args[0]), print_expr(&args[1]))
        }
        Formula::Atom { pred, args } => {
            let inner = args.iter().map(print_expr).collect::<Vec<_>>().join(", ");
            format!("{pred}({inner})")
        }
        Formula::OrIdx { index, bound, body } => {
            let s = format!("or {index} < {bound} . {}", print_formula_prec(body, 0));
            if min_prec > 0 {
                format!("({s})")
            } else {
                s
            }
        }
        Formula::Exists { var, sort, body } => {
            let s = format!("exists {var} : {sort} . {}", print_formula_prec(body, 0));
            if min_prec > 0 {
                format!("({s})")
            } else {
                s
            }
        }
    }
}
