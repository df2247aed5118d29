//! Semantic checks against the finite model: exhaustive soundness testing of
//! judgments, validation of axiom tables, and counterexample search.

use num_rational::Ratio;
use thiserror::Error;

use crate::assertions::{
    denote_formula, holds_unary, FormulaError, Formula, PredModel, Predicate,
};
use crate::backends::{proc_outcome, run, Instance, ProcOutcome};
use crate::grading::{Grade, GradeError};
use crate::kernel::lifting::{lifting_member, LiftedInput, LiftingError};
use crate::rules::{AxiomTables, CommandEntry, Judgment, ProcEntry, RESULT_VAR};
use crate::syntax::{enumerate_memories, EvalError, Memory, Model, Program, Value};

type Rat = Ratio<u64>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lifting(#[from] LiftingError),
    #[error(transparent)]
    Grade(#[from] GradeError),
    #[error("{0}")]
    Config(String),
}

/// A concrete violation of a judgment: the input it started from, what the
/// run produced, and which condition broke.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub witness: String,
    pub observed: String,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub enum Verdict {
    Pass,
    Fail(Counterexample),
}

/// Result of exhaustively testing one judgment against the model.
#[derive(Debug, Clone)]
pub struct SoundnessReport {
    pub instance: &'static str,
    pub judgment: String,
    /// Number of (input, observation) checks performed.
    pub checked: u64,
    pub verdict: Verdict,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass)
    }

    pub fn record(&self) -> String {
        match &self.verdict {
            Verdict::Pass => format!(
                "check=soundness instance={} checked={} result=pass",
                self.instance, self.checked
            ),
            Verdict::Fail(c) => format!(
                "check=soundness instance={} checked={} result=fail witness={}",
                self.instance, self.checked, c.witness
            ),
        }
    }
}

impl std::fmt::Display for SoundnessReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "soundness [{}] {}", self.instance, self.judgment)?;
        match &self.verdict {
            Verdict::Pass => write!(f, "  pass: {} checks", self.checked),
            Verdict::Fail(c) => {
                writeln!(f, "  FAIL after {} checks", self.checked)?;
                writeln!(f, "  witness:  {}", c.witness)?;
                writeln!(f, "  observed: {}", c.observed)?;
                write!(f, "  because:  {}", c.detail)
            }
        }
    }
}

/// Run the judgment's program from every memory satisfying the
/// precondition and test the output against the instance's lifting of the
/// postcondition at the judgment's grade. Inputs are visited in
/// lexicographic memory order, so a failing report carries the least
/// witness.
pub fn verify_soundness(
    j: &Judgment,
    inst: Instance,
    model: &Model,
    budget: u128,
) -> Result<SoundnessReport, HarnessError> {
    let pm = if inst.relational() {
        PredModel::relational()
    } else {
        PredModel::unary()
    };
    let pom = inst.pomonoid(model);
    pom.check(&j.grade)?;
    let pre = denote_formula(&j.pre, model, &pm, budget)?;
    let post = denote_formula(&j.post, model, &pm, budget)?;
    let mut checked = 0u64;
    let mut verdict = Verdict::Pass;
    let grade = &j.grade;

    match &pre {
        Predicate::Unary(mems) => {
            'outer: for mem in mems {
                if inst == Instance::SecLevel {
                    for level in 0..=model.max_level() + 1 {
                        let r = run(&j.prog, model, inst, mem, Some(level))?;
                        checked += 1;
                        let input = LiftedInput::Leveled { level, result: &r };
                        if !lifting_member(inst, &pom, grade, &post, &input)? {
                            verdict = Verdict::Fail(Counterexample {
                                witness: format!("{} at clearance {}", mem.display(model), level),
                                observed: r.display(model),
                                detail: format!(
                                    "output escapes the postcondition at grade {grade}"
                                ),
                            });
                            break 'outer;
                        }
                    }
                } else {
                    let r = run(&j.prog, model, inst, mem, None)?;
                    checked += 1;
                    if !lifting_member(inst, &pom, grade, &post, &LiftedInput::Unary(&r))? {
                        verdict = Verdict::Fail(Counterexample {
                            witness: mem.display(model),
                            observed: r.display(model),
                            detail: format!("output escapes the lifting at grade {grade}"),
                        });
                        break;
                    }
                }
            }
        }
        Predicate::Rel(pairs) => {
            for (m1, m2) in pairs {
                let r1 = run(&j.prog, model, inst, m1, None)?;
                let r2 = run(&j.prog, model, inst, m2, None)?;
                checked += 1;
                if !lifting_member(inst, &pom, grade, &post, &LiftedInput::Pair(&r1, &r2))? {
                    verdict = Verdict::Fail(Counterexample {
                        witness: format!("{} | {}", m1.display(model), m2.display(model)),
                        observed: format!("{} | {}", r1.display(model), r2.display(model)),
                        detail: format!(
                            "paired runs escape the relational lifting at grade {grade}"
                        ),
                    });
                    break;
                }
            }
        }
    }
    Ok(SoundnessReport {
        instance: inst.name(),
        judgment: j.to_string(),
        checked,
        verdict,
    })
}

/// First violation of the judgment, if any; the witness is the
/// lexicographically least failing input.
pub fn refute(
    j: &Judgment,
    inst: Instance,
    model: &Model,
    budget: u128,
) -> Result<Option<Counterexample>, HarnessError> {
    Ok(match verify_soundness(j, inst, model, budget)?.verdict {
        Verdict::Pass => None,
        Verdict::Fail(c) => Some(c),
    })
}

/// Validation result for one axiom-table entry.
#[derive(Debug, Clone)]
pub struct EntryResult {
    pub id: String,
    pub kind: &'static str,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub instance: &'static str,
    pub entries: Vec<EntryResult>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.ok)
    }

    pub fn records(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "check=axiom id={} kind={} result={}",
                    e.id,
                    e.kind,
                    if e.ok { "ok" } else { "fail" }
                )
            })
            .collect()
    }
}

impl std::fmt::Display for AxiomReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "axioms [{}]", self.instance)?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            if e.ok {
                write!(f, "  @{} ({}): ok", e.id, e.kind)?;
            } else {
                write!(f, "  @{} ({}): FAIL — {}", e.id, e.kind, e.detail)?;
            }
        }
        Ok(())
    }
}

/// Check every table entry semantically against the instance: cited
/// commands and procedures, run over the model, must actually land in the
/// lifting their entry claims. Wildcard preconditions are checked against
/// every memory, one singleton postcondition at a time.
pub fn validate_axioms(
    tables: &AxiomTables,
    inst: Instance,
    model: &Model,
    budget: u128,
) -> Result<AxiomReport, HarnessError> {
    let mut entries = Vec::new();
    for c in &tables.commands {
        entries.push(validate_command(c, inst, model, budget)?);
    }
    for p in &tables.procedures {
        entries.push(validate_proc(p, inst, model, budget)?);
    }
    Ok(AxiomReport { instance: inst.name(), entries })
}

fn fail(id: &str, kind: &'static str, detail: impl Into<String>) -> EntryResult {
    EntryResult { id: id.into(), kind, ok: false, detail: detail.into() }
}

fn ok(id: &str, kind: &'static str) -> EntryResult {
    EntryResult { id: id.into(), kind, ok: true, detail: String::new() }
}

fn validate_command(
    entry: &CommandEntry,
    inst: Instance,
    model: &Model,
    budget: u128,
) -> Result<EntryResult, HarnessError> {
    let kind = "command";
    if !inst.commands().contains(&entry.name.as_str()) {
        return Ok(fail(
            &entry.id,
            kind,
            format!("instance `{}` has no command `{}`", inst.name(), entry.name),
        ));
    }
    let pom = inst.pomonoid(model);
    if let Err(e) = pom.check(&entry.grade) {
        return Ok(fail(&entry.id, kind, e.to_string()));
    }
    let prog = Program::Command(entry.name.clone());
    let pm = if inst.relational() {
        PredModel::relational()
    } else {
        PredModel::unary()
    };

    // A wildcard precondition quantifies over every postcondition the
    // command rule could be used at; checking each singleton suffices
    // because liftings are monotone in the postcondition.
    let posts: Vec<Predicate> = match &entry.pre {
        Some(f) => vec![denote_formula(f, model, &pm, budget)?],
        None => match pm.mode {
            crate::assertions::Mode::Unary => enumerate_memories(model, budget)?
                .into_iter()
                .map(|m| Predicate::Unary([m].into()))
                .collect(),
            crate::assertions::Mode::Relational => {
                let mems = enumerate_memories(model, budget.isqrt())?;
                mems.iter()
                    .flat_map(|m1| {
                        mems.iter()
                            .map(move |m2| Predicate::Rel([(m1.clone(), m2.clone())].into()))
                    })
                    .collect()
            }
        },
    };
    for post in &posts {
        match post {
            Predicate::Unary(mems) => {
                for mem in mems {
                    let r = run(&prog, model, inst, mem, None)?;
                    if !lifting_member(inst, &pom, &entry.grade, post, &LiftedInput::Unary(&r))? {
                        return Ok(fail(
                            &entry.id,
                            kind,
                            format!(
                                "from {} the run {} escapes grade {}",
                                mem.display(model),
                                r.display(model),
                                entry.grade
                            ),
                        ));
                    }
                }
            }
            Predicate::Rel(pairs) => {
                for (m1, m2) in pairs {
                    let r1 = run(&prog, model, inst, m1, None)?;
                    let r2 = run(&prog, model, inst, m2, None)?;
                    let input = LiftedInput::Pair(&r1, &r2);
                    if !lifting_member(inst, &pom, &entry.grade, post, &input)? {
                        return Ok(fail(
                            &entry.id,
                            kind,
                            format!(
                                "from {} | {} the runs escape grade {}",
                                m1.display(model),
                                m2.display(model),
                                entry.grade
                            ),
                        ));
                    }
                }
            }
        }
    }
    Ok(ok(&entry.id, kind))
}

/// Does the result postcondition hold of `mem` with the result variable
/// bound to `v`?
fn post_holds(
    post: &Formula,
    model: &Model,
    mem: &Memory,
    v: i64,
) -> Result<bool, FormulaError> {
    let mut logical = vec![(RESULT_VAR.to_string(), Value::Cell(v))];
    holds_unary(post, model, mem, &mut logical)
}

fn validate_proc(
    entry: &ProcEntry,
    inst: Instance,
    model: &Model,
    budget: u128,
) -> Result<EntryResult, HarnessError> {
    let kind = "proc";
    if !inst.procedures().contains(&entry.name.as_str()) {
        return Ok(fail(
            &entry.id,
            kind,
            format!("instance `{}` has no procedure `{}`", inst.name(), entry.name),
        ));
    }
    let pom = inst.pomonoid(model);
    if let Err(e) = pom.check(&entry.grade) {
        return Ok(fail(&entry.id, kind, e.to_string()));
    }
    if inst == Instance::Dataflow && (entry.target.is_none() || entry.args.is_none()) {
        return Ok(fail(
            &entry.id,
            kind,
            "dataflow entries must pin target=\"...\" and arg=\"...\"",
        ));
    }
    let args = entry.args.clone().unwrap_or_default();
    let target = entry.target.as_deref().unwrap_or(RESULT_VAR);
    let pm = PredModel::unary();
    let mems = match &entry.pre {
        Some(f) => match denote_formula(f, model, &pm, budget)? {
            Predicate::Unary(s) => s.into_iter().collect::<Vec<_>>(),
            Predicate::Rel(_) => unreachable!("unary predicate model"),
        },
        None => enumerate_memories(model, budget)?,
    };

    for mem in &mems {
        if inst == Instance::SecLevel {
            let Grade::MaxNat(required) = &entry.grade else {
                return Ok(fail(&entry.id, kind, "clearance entries take max grades"));
            };
            for level in 0..=model.max_level() + 1 {
                let outcome = match proc_outcome(&entry.name, &args, target, model, inst, mem, level)
                {
                    Ok(o) => o,
                    Err(e) => return Ok(fail(&entry.id, kind, e.to_string())),
                };
                let ProcOutcome::Val(v) = outcome else {
                    return Ok(fail(&entry.id, kind, "unexpected effectful outcome"));
                };
                if level >= *required && !post_holds(&entry.post, model, mem, v)? {
                    return Ok(fail(
                        &entry.id,
                        kind,
                        format!(
                            "from {} at clearance {} the result {} violates the postcondition",
                            mem.display(model),
                            level,
                            v
                        ),
                    ));
                }
            }
            continue;
        }
        let outcome =
            match proc_outcome(&entry.name, &args, target, model, inst, mem, model.max_level()) {
                Ok(o) => o,
                Err(e) => return Ok(fail(&entry.id, kind, e.to_string())),
            };
        match outcome {
            ProcOutcome::Val(v) => {
                if !post_holds(&entry.post, model, mem, v)? {
                    return Ok(fail(
                        &entry.id,
                        kind,
                        format!(
                            "from {} the result {} violates the postcondition",
                            mem.display(model),
                            v
                        ),
                    ));
                }
            }
            ProcOutcome::ValAnnotated(v, g) => {
                if !post_holds(&entry.post, model, mem, v)? {
                    return Ok(fail(
                        &entry.id,
                        kind,
                        format!(
                            "from {} the result {} violates the postcondition",
                            mem.display(model),
                            v
                        ),
                    ));
                }
                if !pom.leq(&g, &entry.grade)? {
                    return Ok(fail(
                        &entry.id,
                        kind,
                        format!("annotation {} exceeds the entry grade {}", g, entry.grade),
                    ));
                }
            }
            ProcOutcome::ValDist(d) => {
                let Grade::NonNegRat(bound) = &entry.grade else {
                    return Ok(fail(&entry.id, kind, "distribution entries take rat grades"));
                };
                let mut failure = Rat::new(0, 1);
                for (v, p) in &d {
                    if !post_holds(&entry.post, model, mem, *v)? {
                        failure += p;
                    }
                }
                if failure > *bound {
                    return Ok(fail(
                        &entry.id,
                        kind,
                        format!(
                            "from {} the failure mass {}/{} exceeds {}",
                            mem.display(model),
                            failure.numer(),
                            failure.denom(),
                            entry.grade
                        ),
                    ));
                }
            }
        }
    }
    Ok(ok(&entry.id, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::elaborate_pc;
    use crate::parse::{parse_formula, parse_model, parse_program};
    use crate::rules::parse_tables;

    const BUDGET: u128 = 1 << 20;

    fn judgment(grade: Grade, pre: &str, prog: &str, post: &str, _model: &Model) -> Judgment {
        Judgment {
            grade,
            pre: parse_formula(pre).unwrap(),
            prog: parse_program(prog).unwrap(),
            post: parse_formula(post).unwrap(),
        }
    }

    #[test]
    fn tick_twice_costs_two() {
        let model = parse_model("vars = x\ncell = 0..1\n").unwrap();
        let j = judgment(Grade::NatCost(2), "tt", "do tick; do tick", "tt", &model);
        let r = verify_soundness(&j, Instance::Cost, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
        let j = judgment(Grade::NatCost(1), "tt", "do tick; do tick", "tt", &model);
        let c = refute(&j, Instance::Cost, &model, BUDGET).unwrap();
        assert!(c.is_some());
    }

    #[test]
    fn two_coins_fail_post_with_mass_a_quarter() {
        let model = parse_model("vars = v1, v2, v\ncell = 0..1\n").unwrap();
        let prog = "v1 <- coin(); v2 <- coin(); v := v1 max v2";
        let j = judgment(Grade::rat(1, 4), "tt", prog, "v = 1", &model);
        let r = verify_soundness(&j, Instance::UnionBound, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
        let j = judgment(Grade::rat(1, 8), "tt", prog, "v = 1", &model);
        assert!(refute(&j, Instance::UnionBound, &model, BUDGET).unwrap().is_some());
    }

    #[test]
    fn coin_axiom_entry_needs_enough_mass() {
        let model = parse_model("vars = v\ncell = 0..1\n").unwrap();
        let good = parse_tables("proc coin pre=\"*\" grade=\"rat:1/2\" post=\"r = 1\"\n").unwrap();
        let r = validate_axioms(&good, Instance::UnionBound, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
        let bad = parse_tables("proc coin pre=\"*\" grade=\"rat:1/8\" post=\"r = 1\"\n").unwrap();
        let r = validate_axioms(&bad, Instance::UnionBound, &model, BUDGET).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn tick_axiom_validates_against_every_singleton() {
        let model = parse_model("vars = x\ncell = 0..1\n").unwrap();
        let t = parse_tables("command tick pre=\"*\" grade=\"nat:1\"\n").unwrap();
        assert!(validate_axioms(&t, Instance::Cost, &model, BUDGET).unwrap().passed());
        let t = parse_tables("command tock pre=\"*\" grade=\"nat:1\"\n").unwrap();
        assert!(!validate_axioms(&t, Instance::Cost, &model, BUDGET).unwrap().passed());
    }

    #[test]
    fn public_branching_is_trace_equal() {
        let model = parse_model("vars = x, y\ncell = 0..1\nvarlv = y:1\n").unwrap();
        let raw = parse_program("if c2b(x) { y := 1 } else { y := 0 }").unwrap();
        let prog = elaborate_pc(&raw).unwrap();
        let j = Judgment {
            grade: Grade::bits("T"),
            pre: parse_formula("eqPub(x) && c2b(x)<1> = true").unwrap(),
            prog,
            post: parse_formula("tt").unwrap(),
        };
        let r = verify_soundness(&j, Instance::PcSecurity, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn private_branching_is_refuted_with_divergent_traces() {
        let model = parse_model("vars = x, y\ncell = 0..1\nvarlv = y:1\n").unwrap();
        let raw = parse_program("if c2b(y) { x := 1 } else { x := 0 }").unwrap();
        let prog = elaborate_pc(&raw).unwrap();
        let j = Judgment {
            grade: Grade::bits("T"),
            pre: parse_formula("eqPub(x) && c2b(y)<1> = true").unwrap(),
            prog,
            post: parse_formula("tt").unwrap(),
        };
        let c = refute(&j, Instance::PcSecurity, &model, BUDGET).unwrap();
        let c = c.expect("diverging traces");
        assert!(c.observed.contains("bits:T") && c.observed.contains("bits:F"), "{}", c.observed);
    }

    #[test]
    fn dataflow_annotation_matches_run() {
        let model = parse_model("vars = x, y, z\ncell = 0..3\n").unwrap();
        let prog = "x <- flow(y + 2); z <- flow(x + y)";
        let g = Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![1, 2, 0]]);
        let j = judgment(g, "tt", prog, "tt", &model);
        let r = verify_soundness(&j, Instance::Dataflow, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
        // dropping one observed flow refutes the judgment
        let g = Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![1, 1, 0]]);
        let j = judgment(g, "tt", prog, "tt", &model);
        assert!(refute(&j, Instance::Dataflow, &model, BUDGET).unwrap().is_some());
    }

    #[test]
    fn clearance_bound_gates_the_postcondition() {
        let model = parse_model("vars = lo, hi\ncell = 0..1\nvarlv = hi:3\n").unwrap();
        let prog = "lo <- secure(hi)";
        let j = judgment(Grade::MaxNat(3), "tt", prog, "lo = hi", &model);
        let r = verify_soundness(&j, Instance::SecLevel, &model, BUDGET).unwrap();
        assert!(r.passed(), "{r}");
        // claiming the postcondition already at clearance 2 fails
        let j = judgment(Grade::MaxNat(2), "tt", prog, "lo = hi", &model);
        assert!(refute(&j, Instance::SecLevel, &model, BUDGET).unwrap().is_some());
    }

    #[test]
    fn secure_read_entry_validates() {
        let model = parse_model("vars = lo, hi\ncell = 0..1\nvarlv = hi:3\n").unwrap();
        let t = parse_tables(
            "proc secure target=\"lo\" arg=\"hi\" pre=\"tt\" grade=\"max:3\" post=\"r = hi\"\n",
        )
        .unwrap();
        assert!(validate_axioms(&t, Instance::SecLevel, &model, BUDGET).unwrap().passed());
        let t = parse_tables(
            "proc secure target=\"lo\" arg=\"hi\" pre=\"tt\" grade=\"max:2\" post=\"r = hi\"\n",
        )
        .unwrap();
        assert!(!validate_axioms(&t, Instance::SecLevel, &model, BUDGET).unwrap().passed());
    }

    #[test]
    fn flow_entry_requires_pinned_call_site() {
        let model = parse_model("vars = x, y\ncell = 0..1\n").unwrap();
        let t = parse_tables(
            "proc flow target=\"x\" arg=\"y\" pre=\"*\" grade=\"mat:[[0,1],[0,0]]\" post=\"tt\"\n",
        )
        .unwrap();
        assert!(validate_axioms(&t, Instance::Dataflow, &model, BUDGET).unwrap().passed());
        let t = parse_tables("proc flow pre=\"*\" grade=\"mat:[[0,1],[0,0]]\" post=\"tt\"\n").unwrap();
        assert!(!validate_axioms(&t, Instance::Dataflow, &model, BUDGET).unwrap().passed());
    }
}
