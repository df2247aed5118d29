//! Effectful program semantics: a Kleisli interpreter per backend.
//!
//! Four backends are shipped: pure state transformers, writer over a grade
//! monoid, finite-support subdistributions with exact rational weights, and a
//! reader threading a clearance level. Each verification instance pairs a
//! backend with a small table of commands and procedures.

use std::collections::BTreeMap;

use crate::grading::{assign_grade, Grade, Pomonoid, Rat};
use crate::syntax::{eval_expr, Env, EvalError, Expr, Memory, Model, Program};

/// Effect interpretation a program is run under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Pure,
    Writer(Pomonoid),
    SubDist,
    LevelReader,
}

/// A verification instance: backend + pomonoid + builtin effect table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instance {
    /// No effects; plain state transformers.
    Plain,
    /// `do tick` counts steps in the additive naturals.
    Cost,
    /// `r <- coin()`, `r <- uniform(k)`, `r <- bern(n, d)` over exact
    /// rational subdistributions; the grade bounds the failure probability.
    UnionBound,
    /// `do cfTrue` / `do cfFalse` record the control-flow trace as a word;
    /// checked relationally.
    PcSecurity,
    /// `x <- flow(e)` assigns and logs the read counts as a matrix grade.
    Dataflow,
    /// `x <- secure(e)` reads `e` only with sufficient clearance.
    SecLevel,
}

impl Instance {
    pub fn by_name(name: &str) -> Option<Instance> {
        match name {
            "plain" => Some(Instance::Plain),
            "cost" => Some(Instance::Cost),
            "union-bound" => Some(Instance::UnionBound),
            "pc-security" => Some(Instance::PcSecurity),
            "dataflow" => Some(Instance::Dataflow),
            "seclevel" => Some(Instance::SecLevel),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Instance::Plain => "plain",
            Instance::Cost => "cost",
            Instance::UnionBound => "union-bound",
            Instance::PcSecurity => "pc-security",
            Instance::Dataflow => "dataflow",
            Instance::SecLevel => "seclevel",
        }
    }

    /// Judgments of this instance are about pairs of runs.
    pub fn relational(&self) -> bool {
        matches!(self, Instance::PcSecurity)
    }

    pub fn pomonoid(&self, model: &Model) -> Pomonoid {
        match self {
            Instance::Plain | Instance::Cost => Pomonoid::NatCost,
            Instance::UnionBound => Pomonoid::NonNegRat,
            Instance::PcSecurity => Pomonoid::BitString,
            Instance::Dataflow => Pomonoid::NatMatrix {
                dim: model.var_order.len(),
            },
            Instance::SecLevel => Pomonoid::MaxNat,
        }
    }

    pub fn backend(&self, model: &Model) -> Backend {
        match self {
            Instance::Plain => Backend::Pure,
            Instance::Cost | Instance::PcSecurity | Instance::Dataflow => {
                Backend::Writer(self.pomonoid(model))
            }
            Instance::UnionBound => Backend::SubDist,
            Instance::SecLevel => Backend::LevelReader,
        }
    }

    /// Names of the commands this instance interprets.
    pub fn commands(&self) -> &'static [&'static str] {
        match self {
            Instance::Cost => &["tick"],
            Instance::PcSecurity => &["cfTrue", "cfFalse"],
            _ => &[],
        }
    }

    /// Names of the procedures this instance interprets.
    pub fn procedures(&self) -> &'static [&'static str] {
        match self {
            Instance::UnionBound => &["coin", "uniform", "bern"],
            Instance::Dataflow => &["flow"],
            Instance::SecLevel => &["secure"],
            _ => &[],
        }
    }
}

/// Result of running a program from one input memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EffectResult {
    Pure(Memory),
    Annotated(Memory, Grade),
    /// Finite-support subdistribution; weights sum to at most one.
    Dist(BTreeMap<Memory, Rat>),
}

impl EffectResult {
    pub fn memory(&self) -> Option<&Memory> {
        match self {
            EffectResult::Pure(m) | EffectResult::Annotated(m, _) => Some(m),
            EffectResult::Dist(_) => None,
        }
    }

    pub fn display(&self, model: &Model) -> String {
        match self {
            EffectResult::Pure(m) => m.display(model),
            EffectResult::Annotated(m, g) => format!("{} @ {g}", m.display(model)),
            EffectResult::Dist(d) => d
                .iter()
                .map(|(m, p)| format!("{}/{} {}", p.numer(), p.denom(), m.display(model)))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

/// The maximal security level among the free variables of `e`; constants are
/// readable by everyone.
pub fn sec_level(e: &Expr, model: &Model) -> u64 {
    e.free_vars()
        .iter()
        .filter_map(|v| model.var_levels.get(*v).copied())
        .max()
        .unwrap_or(0)
}

/// Run `p` from `mem` under the given instance. `level` is the clearance the
/// level reader threads; it defaults to the model's maximal declared level
/// and is ignored by the other backends.
pub fn run(
    p: &Program,
    model: &Model,
    inst: Instance,
    mem: &Memory,
    level: Option<u64>,
) -> Result<EffectResult, EvalError> {
    let level = level.unwrap_or_else(|| model.max_level());
    step(p, model, inst, mem, level)
}

fn unit_result(inst: Instance, model: &Model, mem: Memory) -> EffectResult {
    match inst.backend(model) {
        Backend::Pure | Backend::LevelReader => EffectResult::Pure(mem),
        Backend::Writer(m) => EffectResult::Annotated(mem, m.unit()),
        Backend::SubDist => {
            let mut d = BTreeMap::new();
            d.insert(mem, Rat::new(1, 1));
            EffectResult::Dist(d)
        }
    }
}

/// Kleisli composition: feed every outcome of `r` through `f`.
fn bind(
    r: EffectResult,
    model: &Model,
    inst: Instance,
    f: &mut dyn FnMut(&Memory) -> Result<EffectResult, EvalError>,
) -> Result<EffectResult, EvalError> {
    match r {
        EffectResult::Pure(m) => f(&m),
        EffectResult::Annotated(m, g) => {
            let pomonoid = inst.pomonoid(model);
            match f(&m)? {
                EffectResult::Annotated(m2, g2) => {
                    let combined = pomonoid
                        .mul(&g, &g2)
                        .expect("writer grades share one instance");
                    Ok(EffectResult::Annotated(m2, combined))
                }
                _ => unreachable!("writer backend stays writer"),
            }
        }
        EffectResult::Dist(d) => {
            let mut out: BTreeMap<Memory, Rat> = BTreeMap::new();
            for (m, p) in d {
                match f(&m)? {
                    EffectResult::Dist(d2) => {
                        for (m2, q) in d2 {
                            *out.entry(m2).or_insert_with(|| Rat::new(0, 1)) += p * q;
                        }
                    }
                    _ => unreachable!("subdistribution backend stays subdistribution"),
                }
            }
            Ok(EffectResult::Dist(out))
        }
    }
}

fn step(
    p: &Program,
    model: &Model,
    inst: Instance,
    mem: &Memory,
    level: u64,
) -> Result<EffectResult, EvalError> {
    match p {
        Program::Skip => Ok(unit_result(inst, model, mem.clone())),
        Program::Seq(a, b) => {
            let r = step(a, model, inst, mem, level)?;
            bind(r, model, inst, &mut |m| step(b, model, inst, m, level))
        }
        Program::Assign(v, e) => {
            let val = eval_expr(e, &Env::new(model, mem))?;
            let c = val
                .as_cell()
                .ok_or_else(|| EvalError::IllSorted(format!("{v} := _")))?;
            Ok(unit_result(inst, model, mem.set(model, v, c)))
        }
        Program::If(e, t, f) => {
            let b = eval_expr(e, &Env::new(model, mem))?
                .as_bool()
                .ok_or_else(|| EvalError::IllSorted("if guard".into()))?;
            step(if b { t } else { f }, model, inst, mem, level)
        }
        Program::Loop(e, body) => {
            // The guard is evaluated once, up front.
            let n = eval_expr(e, &Env::new(model, mem))?
                .as_nat()
                .ok_or_else(|| EvalError::IllSorted("loop guard".into()))?;
            if n > model.nat_bound {
                return Err(EvalError::LoopBound {
                    value: n,
                    bound: model.nat_bound,
                });
            }
            let mut r = unit_result(inst, model, mem.clone());
            for _ in 0..n {
                r = bind(r, model, inst, &mut |m| step(body, model, inst, m, level))?;
            }
            Ok(r)
        }
        Program::Command(name) => run_command(name, model, inst, mem),
        Program::Procedure { target, name, args } => {
            run_procedure(target, name, args, model, inst, mem, level)
        }
    }
}

fn run_command(
    name: &str,
    model: &Model,
    inst: Instance,
    mem: &Memory,
) -> Result<EffectResult, EvalError> {
    match (inst, name) {
        (Instance::Cost, "tick") => Ok(EffectResult::Annotated(mem.clone(), Grade::NatCost(1))),
        (Instance::PcSecurity, "cfTrue") => {
            Ok(EffectResult::Annotated(mem.clone(), Grade::bits("T")))
        }
        (Instance::PcSecurity, "cfFalse") => {
            Ok(EffectResult::Annotated(mem.clone(), Grade::bits("F")))
        }
        _ => {
            let _ = model;
            Err(EvalError::UnknownEffect(name.to_string()))
        }
    }
}

/// A procedure's raw result: the cell value routed to the target variable,
/// before the memory update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcOutcome {
    Val(i64),
    ValAnnotated(i64, Grade),
    ValDist(Vec<(i64, Rat)>),
}

/// Evaluate a procedure's raw result from `mem`. `target` only influences
/// the dataflow annotation (the row the read counts land in), never the
/// value.
pub fn proc_outcome(
    name: &str,
    args: &[Expr],
    target: &str,
    model: &Model,
    inst: Instance,
    mem: &Memory,
    level: u64,
) -> Result<ProcOutcome, EvalError> {
    let arg_cell = |i: usize| -> Result<i64, EvalError> {
        let e = args
            .get(i)
            .ok_or_else(|| EvalError::UnknownEffect(format!("{name}: missing argument {i}")))?;
        eval_expr(e, &Env::new(model, mem))?
            .as_cell()
            .ok_or_else(|| EvalError::IllSorted(name.to_string()))
    };
    match (inst, name) {
        (Instance::UnionBound, "coin") => Ok(ProcOutcome::ValDist(vec![
            (0, Rat::new(1, 2)),
            (1, Rat::new(1, 2)),
        ])),
        (Instance::UnionBound, "uniform") => {
            let k = arg_cell(0)?;
            if k < 1 {
                return Err(EvalError::OutOfDomain {
                    value: k,
                    lo: 1,
                    hi: model.cell_hi,
                });
            }
            Ok(ProcOutcome::ValDist(
                (0..k).map(|v| (v, Rat::new(1, k as u64))).collect(),
            ))
        }
        (Instance::UnionBound, "bern") => {
            let num = arg_cell(0)?;
            let den = arg_cell(1)?;
            if den < 1 || num < 0 || num > den {
                return Err(EvalError::OutOfDomain {
                    value: num,
                    lo: 0,
                    hi: den,
                });
            }
            let p = Rat::new(num as u64, den as u64);
            let mut d = Vec::new();
            if p > Rat::new(0, 1) {
                d.push((1, p));
            }
            if p < Rat::new(1, 1) {
                d.push((0, Rat::new(1, 1) - p));
            }
            Ok(ProcOutcome::ValDist(d))
        }
        (Instance::Dataflow, "flow") => {
            let e = args
                .first()
                .ok_or_else(|| EvalError::UnknownEffect("flow: missing argument".into()))?;
            let v = eval_expr(e, &Env::new(model, mem))?
                .as_cell()
                .ok_or_else(|| EvalError::IllSorted("flow".into()))?;
            Ok(ProcOutcome::ValAnnotated(v, assign_grade(target, e, model)))
        }
        (Instance::SecLevel, "secure") => {
            let e = args
                .first()
                .ok_or_else(|| EvalError::UnknownEffect("secure: missing argument".into()))?;
            let v = if level >= sec_level(e, model) {
                eval_expr(e, &Env::new(model, mem))?
                    .as_cell()
                    .ok_or_else(|| EvalError::IllSorted("secure".into()))?
            } else {
                // Insufficient clearance reads the least cell value instead.
                model.cell_lo
            };
            Ok(ProcOutcome::Val(v))
        }
        _ => Err(EvalError::UnknownEffect(name.to_string())),
    }
}

fn run_procedure(
    target: &str,
    name: &str,
    args: &[Expr],
    model: &Model,
    inst: Instance,
    mem: &Memory,
    level: u64,
) -> Result<EffectResult, EvalError> {
    match proc_outcome(name, args, target, model, inst, mem, level)? {
        ProcOutcome::Val(v) => Ok(EffectResult::Pure(mem.set(model, target, v))),
        ProcOutcome::ValAnnotated(v, g) => {
            Ok(EffectResult::Annotated(mem.set(model, target, v), g))
        }
        ProcOutcome::ValDist(d) => {
            let mut out: BTreeMap<Memory, Rat> = BTreeMap::new();
            for (v, p) in d {
                *out.entry(mem.set(model, target, v))
                    .or_insert_with(|| Rat::new(0, 1)) += p;
            }
            Ok(EffectResult::Dist(out))
        }
    }
}

/// Insert the control-flow markers the pc-security instance observes: every
/// conditional branch starts by emitting `T` or `F`. Fails if the program
/// already mentions the markers.
pub fn elaborate_pc(p: &Program) -> Result<Program, EvalError> {
    if mentions_cf(p) {
        return Err(EvalError::UnknownEffect(
            "program already contains cfTrue/cfFalse".into(),
        ));
    }
    Ok(insert_cf(p))
}

fn mentions_cf(p: &Program) -> bool {
    match p {
        Program::Command(name) => name == "cfTrue" || name == "cfFalse",
        Program::Seq(a, b) => mentions_cf(a) || mentions_cf(b),
        Program::If(_, t, f) => mentions_cf(t) || mentions_cf(f),
        Program::Loop(_, body) => mentions_cf(body),
        _ => false,
    }
}

fn insert_cf(p: &Program) -> Program {
    match p {
        Program::Seq(a, b) => Program::seq(insert_cf(a), insert_cf(b)),
        Program::If(e, t, f) => Program::If(
            e.clone(),
            Box::new(Program::seq(
                Program::Command("cfTrue".into()),
                insert_cf(t),
            )),
            Box::new(Program::seq(
                Program::Command("cfFalse".into()),
                insert_cf(f),
            )),
        ),
        Program::Loop(e, body) => Program::Loop(e.clone(), Box::new(insert_cf(body))),
        other => other.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_model, parse_program};

    fn mem(values: &[i64]) -> Memory {
        Memory {
            values: values.to_vec(),
        }
    }

    #[test]
    fn cost_counts_ticks() {
        let model = Model::new(&["x"], 0, 3, 4);
        let p = parse_program("loop 3 { do tick }").unwrap();
        let r = run(&p, &model, Instance::Cost, &mem(&[0]), None).unwrap();
        assert_eq!(r, EffectResult::Annotated(mem(&[0]), Grade::NatCost(3)));
    }

    #[test]
    fn dataflow_two_step_flow() {
        let model = Model::new(&["x", "y", "z"], 0, 3, 4);
        let p = parse_program("x <- flow(y + 2); z <- flow(x + y)").unwrap();
        let r = run(&p, &model, Instance::Dataflow, &mem(&[0, 1, 0]), None).unwrap();
        let expected = Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![1, 2, 0]]);
        match r {
            EffectResult::Annotated(m, g) => {
                assert_eq!(g, expected);
                // y=1: x := 1+2 = 3, z := 3+1 = 0 (wraps mod 4)
                assert_eq!(m, mem(&[3, 1, 0]));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn union_bound_two_coins() {
        let model = Model::new(&["a", "b"], 0, 3, 4);
        let p = parse_program("a <- coin(); b <- coin()").unwrap();
        let r = run(&p, &model, Instance::UnionBound, &mem(&[0, 0]), None).unwrap();
        match r {
            EffectResult::Dist(d) => {
                assert_eq!(d.len(), 4);
                assert!(d.values().all(|p| *p == Rat::new(1, 4)));
                let total: Rat = d.values().copied().sum();
                assert_eq!(total, Rat::new(1, 1));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn union_bound_bern_and_uniform() {
        let model = Model::new(&["a"], 0, 7, 4);
        let p = parse_program("a <- bern(1, 4)").unwrap();
        let r = run(&p, &model, Instance::UnionBound, &mem(&[0]), None).unwrap();
        match r {
            EffectResult::Dist(d) => {
                assert_eq!(d.get(&mem(&[1])), Some(&Rat::new(1, 4)));
                assert_eq!(d.get(&mem(&[0])), Some(&Rat::new(3, 4)));
            }
            _ => panic!(),
        }
        let p = parse_program("a <- uniform(3)").unwrap();
        let r = run(&p, &model, Instance::UnionBound, &mem(&[0]), None).unwrap();
        match r {
            EffectResult::Dist(d) => {
                assert_eq!(d.len(), 3);
                assert!(d.values().all(|p| *p == Rat::new(1, 3)));
            }
            _ => panic!(),
        }
    }

    #[test]
    fn pc_security_traces() {
        let model = Model::new(&["x", "y"], 0, 1, 4);
        let p = parse_program("if c2b(x) { y := 1 } else { y := 0 }").unwrap();
        let p = elaborate_pc(&p).unwrap();
        let r = run(&p, &model, Instance::PcSecurity, &mem(&[1, 0]), None).unwrap();
        assert_eq!(r, EffectResult::Annotated(mem(&[1, 1]), Grade::bits("T")));
        let r = run(&p, &model, Instance::PcSecurity, &mem(&[0, 1]), None).unwrap();
        assert_eq!(r, EffectResult::Annotated(mem(&[0, 0]), Grade::bits("F")));
        assert!(elaborate_pc(&p).is_err());
    }

    #[test]
    fn seclevel_clearance_gates_reads() {
        let src = "vars = hi, out\ncell = 0..3\nvarlv = hi:7\n";
        let model = parse_model(src).unwrap();
        let p = parse_program("out <- secure(hi + 1)").unwrap();
        let r = run(&p, &model, Instance::SecLevel, &mem(&[2, 0]), Some(7)).unwrap();
        assert_eq!(r, EffectResult::Pure(mem(&[2, 3])));
        let r = run(&p, &model, Instance::SecLevel, &mem(&[2, 1]), Some(6)).unwrap();
        // insufficient clearance: the least cell value is written instead
        assert_eq!(r, EffectResult::Pure(mem(&[2, 0])));
    }

    #[test]
    fn loop_guard_evaluated_once() {
        let model = Model::new(&["x"], 0, 7, 8);
        let p = parse_program("loop c2n(x) { x := x + 1 }").unwrap();
        let r = run(&p, &model, Instance::Plain, &mem(&[2]), None).unwrap();
        assert_eq!(r, EffectResult::Pure(mem(&[4])));
    }

    #[test]
    fn loop_guard_above_bound_rejected() {
        let model = Model::new(&["x"], 0, 7, 3);
        let p = parse_program("loop c2n(x) { skip }").unwrap();
        let err = run(&p, &model, Instance::Plain, &mem(&[5]), None).unwrap_err();
        assert!(matches!(err, EvalError::LoopBound { value: 5, bound: 3 }));
    }

    #[test]
    fn unknown_effects_rejected() {
        let model = Model::new(&["x"], 0, 3, 4);
        let p = parse_program("do tick").unwrap();
        assert!(run(&p, &model, Instance::Plain, &mem(&[0]), None).is_err());
        let p = parse_program("x <- coin()").unwrap();
        assert!(run(&p, &model, Instance::Cost, &mem(&[0]), None).is_err());
    }

    #[test]
    fn sec_level_is_max_over_free_vars() {
        let src = "vars = a, b, c\ncell = 0..3\nvarlv = a:3, b:7\n";
        let model = parse_model(src).unwrap();
        let e = crate::parse::parse_expr("a + b + c", crate::syntax::Sort::Cell).unwrap();
        assert_eq!(sec_level(&e, &model), 7);
        let e = crate::parse::parse_expr("c + 1", crate::syntax::Sort::Cell).unwrap();
        assert_eq!(sec_level(&e, &model), 0);
    }
}
