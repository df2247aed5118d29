//! Graded liftings: when does an effectful run witness a postcondition at a
//! given grade?
//!
//! Each instance carries its own membership notion; the soundness harness
//! in [`crate::harness`] is generic over this predicate.

use num_rational::Ratio;
use thiserror::Error;

use crate::assertions::Predicate;
use crate::backends::{EffectResult, Instance};
use crate::grading::{Grade, GradeError, Pomonoid};

type Rat = Ratio<u64>;

/// What a single soundness observation looks like, per instance shape.
#[derive(Debug, Clone)]
pub enum LiftedInput<'a> {
    /// One run of the program (pure, writer, or subdistribution backend).
    Unary(&'a EffectResult),
    /// Two runs of the same program from a related pair of memories.
    Pair(&'a EffectResult, &'a EffectResult),
    /// One run together with the clearance it was executed at.
    Leveled { level: u64, result: &'a EffectResult },
}

#[derive(Debug, Error)]
pub enum LiftingError {
    #[error("result shape does not fit instance `{instance}`: {detail}")]
    Shape { instance: &'static str, detail: String },
    #[error(transparent)]
    Grade(#[from] GradeError),
}

fn shape(instance: &'static str, detail: impl Into<String>) -> LiftingError {
    LiftingError::Shape { instance, detail: detail.into() }
}

/// Split an effect result into memory and annotation, treating an
/// unannotated result as carrying the unit grade.
fn annotated<'a>(
    r: &'a EffectResult,
    pom: &Pomonoid,
    instance: &'static str,
) -> Result<(&'a crate::syntax::Memory, Grade), LiftingError> {
    match r {
        EffectResult::Pure(m) => Ok((m, pom.unit())),
        EffectResult::Annotated(m, g) => Ok((m, g.clone())),
        EffectResult::Dist(_) => Err(shape(instance, "expected a single run, got a distribution")),
    }
}

/// Membership of `input` in the instance's lifting of `post` at `grade`.
///
/// - plain: the output memory satisfies `post`;
/// - cost, dataflow: the output satisfies `post` and the accumulated
///   annotation is bounded by `grade`;
/// - union-bound: the subdistribution's mass outside `post` is at most
///   `grade`;
/// - pc-security: the two runs produce identical branch traces bounded by
///   `grade` (as a prefix) and a memory pair satisfying `post`;
/// - seclevel: at every clearance at or above `grade` the output satisfies
///   `post` (below `grade` nothing is required).
pub fn lifting_member(
    inst: Instance,
    pomonoid: &Pomonoid,
    grade: &Grade,
    post: &Predicate,
    input: &LiftedInput,
) -> Result<bool, LiftingError> {
    pomonoid.check(grade)?;
    match (inst, input) {
        (Instance::Plain, LiftedInput::Unary(r)) => {
            let (mem, _) = annotated(r, pomonoid, "plain")?;
            Ok(post.contains_mem(mem))
        }
        (Instance::Cost | Instance::Dataflow, LiftedInput::Unary(r)) => {
            let (mem, ann) = annotated(r, pomonoid, inst.name())?;
            Ok(post.contains_mem(mem) && pomonoid.leq(&ann, grade)?)
        }
        (Instance::UnionBound, LiftedInput::Unary(EffectResult::Dist(d))) => {
            let mut failure = Rat::new(0, 1);
            for (mem, p) in d {
                if !post.contains_mem(mem) {
                    failure += p;
                }
            }
            let Grade::NonNegRat(bound) = grade else {
                return Err(GradeError::TagMismatch {
                    expected: Pomonoid::NonNegRat.tag(),
                    got: grade.tag(),
                }
                .into());
            };
            Ok(failure <= *bound)
        }
        (Instance::UnionBound, LiftedInput::Unary(_)) => Err(shape(
            "union-bound",
            "expected a subdistribution result",
        )),
        (Instance::PcSecurity, LiftedInput::Pair(r1, r2)) => {
            let (m1, a1) = annotated(r1, pomonoid, "pc-security")?;
            let (m2, a2) = annotated(r2, pomonoid, "pc-security")?;
            Ok(a1 == a2
                && pomonoid.leq(&a1, grade)?
                && post.contains_pair(&(m1.clone(), m2.clone())))
        }
        (Instance::SecLevel, LiftedInput::Leveled { level, result }) => {
            let (mem, _) = annotated(result, pomonoid, "seclevel")?;
            let Grade::MaxNat(required) = grade else {
                return Err(GradeError::TagMismatch {
                    expected: Pomonoid::MaxNat.tag(),
                    got: grade.tag(),
                }
                .into());
            };
            Ok(*level < *required || post.contains_mem(mem))
        }
        (_, LiftedInput::Pair(..)) => Err(shape(
            inst.name(),
            "paired runs only fit the relational instance",
        )),
        (Instance::PcSecurity, _) => Err(shape("pc-security", "expected a pair of runs")),
        (Instance::SecLevel, _) => Err(shape("seclevel", "expected a leveled run")),
        (_, LiftedInput::Leveled { .. }) => Err(shape(
            inst.name(),
            "leveled runs only fit the clearance instance",
        )),
    }
}
