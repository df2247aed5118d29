//! Randomized law suites over the finite machinery in [`super::fin`].
//!
//! Every suite is seeded (chacha) and stops at the first failing check so a
//! report always carries a replayable counterexample.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assertions::Predicate;
use crate::backends::{EffectResult, Instance};
use crate::grading::{Grade, Pomonoid};
use crate::kernel::fin::{
    act, coproduct, cotuple, diagonal, eq_pred, inl, inr, pair_index, pairing, product,
    product_map, proj1, proj2, push, pushforward, reindex, FinMap, FinSet, KHom, KMap, KTheory,
    Pred, Rat,
};
use crate::kernel::lifting::{lifting_member, LiftedInput};
use crate::kernel::Report;
use crate::syntax::{enumerate_memories, Memory, Model};

fn rand_set(rng: &mut ChaCha8Rng) -> FinSet {
    FinSet::new(rng.gen_range(1..=6))
}

fn rand_small_set(rng: &mut ChaCha8Rng) -> FinSet {
    FinSet::new(rng.gen_range(1..=4))
}

fn rand_map(rng: &mut ChaCha8Rng, src: FinSet, dst: FinSet) -> FinMap {
    FinMap::new(
        src,
        dst,
        (0..src.size).map(|_| rng.gen_range(0..dst.size)).collect(),
    )
}

fn rand_pred(rng: &mut ChaCha8Rng, over: FinSet) -> Pred {
    Pred::new(over, over.elems().filter(|_| rng.gen_bool(0.5)).collect())
}

fn rand_grade(rng: &mut ChaCha8Rng, pom: &Pomonoid) -> Grade {
    match pom {
        Pomonoid::NatCost => Grade::NatCost(rng.gen_range(0..=6)),
        Pomonoid::NonNegRat => Grade::NonNegRat(Rat::new(rng.gen_range(0..=8), rng.gen_range(1..=6))),
        Pomonoid::BitString => {
            let len = rng.gen_range(0..=4);
            Grade::BitString((0..len).map(|_| rng.gen_bool(0.5)).collect())
        }
        Pomonoid::NatMatrix { dim } => Grade::NatMatrix(
            (0..*dim)
                .map(|_| (0..*dim).map(|_| rng.gen_range(0..=3)).collect())
                .collect(),
        ),
        Pomonoid::MaxNat => Grade::MaxNat(rng.gen_range(0..=7)),
    }
}

/// A grade at or below `m` in the pomonoid's order.
fn rand_grade_leq(rng: &mut ChaCha8Rng, pom: &Pomonoid, m: &Grade) -> Grade {
    match (pom, m) {
        (Pomonoid::NatCost, Grade::NatCost(n)) => Grade::NatCost(rng.gen_range(0..=*n)),
        (Pomonoid::NonNegRat, Grade::NonNegRat(r)) => {
            Grade::NonNegRat(r * Rat::new(rng.gen_range(0..=8), 8))
        }
        (Pomonoid::BitString, Grade::BitString(v)) => {
            Grade::BitString(v[..rng.gen_range(0..=v.len())].to_vec())
        }
        (Pomonoid::NatMatrix { .. }, Grade::NatMatrix(a)) => Grade::NatMatrix(
            a.iter()
                .map(|row| row.iter().map(|&e| rng.gen_range(0..=e)).collect())
                .collect(),
        ),
        (Pomonoid::MaxNat, Grade::MaxNat(n)) => Grade::MaxNat(rng.gen_range(0..=*n)),
        _ => unreachable!("grade/pomonoid mismatch"),
    }
}

/// A grade strictly incomparable-from-below: `mul(m, nonunit(pom)) != m`
/// for every `m` this module generates.
fn nonunit(pom: &Pomonoid) -> Grade {
    match pom {
        Pomonoid::NatCost => Grade::NatCost(1),
        Pomonoid::NonNegRat => Grade::NonNegRat(Rat::new(1, 2)),
        Pomonoid::BitString => Grade::BitString(vec![true]),
        Pomonoid::NatMatrix { dim } => Grade::NatMatrix(vec![vec![1; *dim]; *dim]),
        // rand_grade stays at or below 7, so absorbing 8 always moves.
        Pomonoid::MaxNat => Grade::MaxNat(8),
    }
}

fn rand_subdist(rng: &mut ChaCha8Rng, dst: FinSet) -> Vec<(usize, Rat)> {
    let mut remaining: u64 = 8;
    let mut out = Vec::new();
    for y in dst.elems() {
        if remaining == 0 {
            break;
        }
        let w = rng.gen_range(0..=remaining.min(4));
        if w > 0 {
            out.push((y, Rat::new(w, 8)));
            remaining -= w;
        }
    }
    out
}

fn rand_khom_graded(
    rng: &mut ChaCha8Rng,
    theory: &KTheory,
    src: FinSet,
    dst: FinSet,
    grade: &Grade,
) -> KHom {
    match theory {
        KTheory::Writer(pom) => KHom::writer(
            pom,
            src,
            dst,
            grade.clone(),
            (0..src.size)
                .map(|_| (rng.gen_range(0..dst.size), rand_grade_leq(rng, pom, grade)))
                .collect(),
        ),
        KTheory::Dist => KHom::dist(
            src,
            dst,
            (0..src.size).map(|_| rand_subdist(rng, dst)).collect(),
        ),
    }
}

fn rand_khom(rng: &mut ChaCha8Rng, theory: &KTheory, src: FinSet, dst: FinSet) -> KHom {
    let grade = match theory {
        KTheory::Writer(pom) => rand_grade(rng, pom),
        KTheory::Dist => Grade::MaxNat(0),
    };
    rand_khom_graded(rng, theory, src, dst, &grade)
}

fn theory_for(trial: u64) -> KTheory {
    match trial % 6 {
        0 => KTheory::Writer(Pomonoid::NatCost),
        1 => KTheory::Writer(Pomonoid::NonNegRat),
        2 => KTheory::Writer(Pomonoid::BitString),
        3 => KTheory::Writer(Pomonoid::NatMatrix { dim: 2 }),
        4 => KTheory::Writer(Pomonoid::MaxNat),
        _ => KTheory::Dist,
    }
}

/// Run `trials` iterations of `body`, recording the first failure.
fn drive(
    suite: &'static str,
    seed: u64,
    trials: u64,
    mut body: impl FnMut(&mut ChaCha8Rng, u64) -> Result<(), String>,
) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failure = None;
    for trial in 0..trials {
        if let Err(msg) = body(&mut rng, trial) {
            failure = Some((trial, msg));
            break;
        }
    }
    Report { suite, seed, trials, failure }
}

fn expect(cond: bool, msg: impl Fn() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Kleisli category laws (plus comonadic smoke checks).

pub fn kleisli_suite(seed: u64, trials: u64) -> Report {
    drive("kleisli", seed, trials, |rng, trial| {
        let th = theory_for(trial);
        let pom = th.pomonoid();
        let (x, y, z, w) = (rand_set(rng), rand_set(rng), rand_set(rng), rand_set(rng));
        let f = rand_khom(rng, &th, x, y);
        let g = rand_khom(rng, &th, y, z);
        let h = rand_khom(rng, &th, z, w);

        expect(f.compose(&KHom::identity(&th, x)) == f, || {
            format!("right identity failed ({})", pom.tag())
        })?;
        expect(KHom::identity(&th, y).compose(&f) == f, || {
            format!("left identity failed ({})", pom.tag())
        })?;
        let assoc_l = h.compose(&g.compose(&f));
        let assoc_r = h.compose(&g).compose(&f);
        expect(assoc_l == assoc_r, || {
            format!(
                "associativity failed ({}): grades {} vs {}",
                pom.tag(),
                assoc_l.grade,
                assoc_r.grade
            )
        })?;

        // Pure maps embed functorially.
        let p1 = rand_map(rng, x, y);
        let p2 = rand_map(rng, y, z);
        expect(
            KHom::pure(&th, &p2.compose(&p1)) == KHom::pure(&th, &p2).compose(&KHom::pure(&th, &p1)),
            || format!("pure embedding not functorial ({})", pom.tag()),
        )?;

        // Upcasting the later factor commutes with composition. (Only the
        // right argument: prefix-ordered traces are not monotone on the
        // left, so upcasting the earlier factor is not always possible.)
        let ng = pom.mul(&g.grade, &rand_grade(rng, &pom)).map_err(|e| e.to_string())?;
        let big = pom.mul(&f.grade, &ng).map_err(|e| e.to_string())?;
        let lhs = g.compose(&f).upcast(big.clone())?;
        let rhs = g.upcast(ng)?.compose(&f);
        expect(lhs == rhs, || {
            format!("upcast/composition mismatch ({}): {} vs {}", pom.tag(), lhs.grade, rhs.grade)
        })?;

        cokleisli_checks(rng)?;
        adjunction_checks(rng, trial)
    })
}

/// Composition in the co-Kleisli category of the product comonad
/// `D X = X × L` over a small level set, graded by the maximal level
/// consulted. Desk-scale: tabulated maps, levels 0..=3.
fn cokleisli_checks(rng: &mut ChaCha8Rng) -> Result<(), String> {
    const LEVELS: usize = 4;
    #[derive(Clone, PartialEq, Eq, Debug)]
    struct CoK {
        src: usize,
        dst: usize,
        grade: u64,
        // table[x * LEVELS + l]
        table: Vec<usize>,
    }
    let cok_id = |n: usize| CoK {
        src: n,
        dst: n,
        grade: 0,
        table: (0..n * LEVELS).map(|i| i / LEVELS).collect(),
    };
    let cok_compose = |g: &CoK, f: &CoK| CoK {
        src: f.src,
        dst: g.dst,
        grade: f.grade.max(g.grade),
        table: (0..f.src * LEVELS)
            .map(|i| {
                let l = i % LEVELS;
                g.table[f.table[i] * LEVELS + l]
            })
            .collect(),
    };
    let rand_cok = |rng: &mut ChaCha8Rng, src: usize, dst: usize| CoK {
        src,
        dst,
        grade: rng.gen_range(0..LEVELS as u64),
        table: (0..src * LEVELS).map(|_| rng.gen_range(0..dst)).collect(),
    };
    let (a, b, c, d) = (
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
        rng.gen_range(1..=4),
    );
    let f = rand_cok(rng, a, b);
    let g = rand_cok(rng, b, c);
    let h = rand_cok(rng, c, d);
    expect(cok_compose(&f, &cok_id(a)) == f, || "co-Kleisli right identity failed".into())?;
    expect(cok_compose(&cok_id(b), &f) == f, || "co-Kleisli left identity failed".into())?;
    expect(
        cok_compose(&h, &cok_compose(&g, &f)) == cok_compose(&cok_compose(&h, &g), &f),
        || "co-Kleisli associativity failed".into(),
    )?;
    Ok(())
}

/// Currying smoke test: with exponent sets `A^m` (|A| = 2, m ≤ 3) the
/// context extension `X ↦ X × A^m` is left adjoint to `Y ↦ Y^(A^m)`.
fn adjunction_checks(rng: &mut ChaCha8Rng, trial: u64) -> Result<(), String> {
    let m = (trial % 4) as u32;
    let am = 2usize.pow(m);
    let xs = rng.gen_range(1..=3);
    let ys = rng.gen_range(1..=3);
    // f : X × A^m → Y, indexed as f[x * am + a].
    let f: Vec<usize> = (0..xs * am).map(|_| rng.gen_range(0..ys)).collect();
    // curry(f) : X → Y^(A^m).
    let curried: Vec<Vec<usize>> = (0..xs)
        .map(|x| (0..am).map(|a| f[x * am + a]).collect())
        .collect();
    let uncurried: Vec<usize> = (0..xs * am).map(|i| curried[i / am][i % am]).collect();
    expect(uncurried == f, || format!("uncurry(curry(f)) != f at m={m}"))?;
    // Round trip in the other direction.
    let g: Vec<Vec<usize>> = (0..xs)
        .map(|_| (0..am).map(|_| rng.gen_range(0..ys)).collect())
        .collect();
    let g_flat: Vec<usize> = (0..xs * am).map(|i| g[i / am][i % am]).collect();
    let g_back: Vec<Vec<usize>> = (0..xs)
        .map(|x| (0..am).map(|a| g_flat[x * am + a]).collect())
        .collect();
    expect(g_back == g, || format!("curry(uncurry(g)) != g at m={m}"))
}

// ---------------------------------------------------------------------------
// Coproducts of equal grade.

pub fn coproduct_suite(seed: u64, trials: u64) -> Report {
    drive("coproduct", seed, trials, |rng, trial| {
        let th = theory_for(trial);
        let pom = th.pomonoid();
        let (x, y, z, w) = (rand_set(rng), rand_set(rng), rand_set(rng), rand_set(rng));
        let m = match &th {
            KTheory::Writer(p) => rand_grade(rng, p),
            KTheory::Dist => Grade::MaxNat(0),
        };
        let f = rand_khom_graded(rng, &th, x, z, &m);
        let g = rand_khom_graded(rng, &th, y, z, &m);
        let c = cotuple(&f, &g)?;
        let i1 = KHom::pure(&th, &inl(x, y));
        let i2 = KHom::pure(&th, &inr(x, y));

        expect(c.compose(&i1) == f, || "cotuple ∘ inl != left leg".into())?;
        expect(c.compose(&i2) == g, || "cotuple ∘ inr != right leg".into())?;
        expect(
            cotuple(&i1, &i2)? == KHom::identity(&th, coproduct(x, y)),
            || "[inl, inr] != id".into(),
        )?;

        let h = rand_khom(rng, &th, z, w);
        expect(
            h.compose(&c) == cotuple(&h.compose(&f), &h.compose(&g))?,
            || "post-composition does not distribute over cotupling".into(),
        )?;

        let n = pom.mul(&m, &rand_grade(rng, &pom)).map_err(|e| e.to_string())?;
        expect(
            c.upcast(n.clone())? == cotuple(&f.upcast(n.clone())?, &g.upcast(n)?)?,
            || "upcast does not commute with cotupling".into(),
        )?;

        // Legs of different grades have no cotupling.
        if let KTheory::Writer(p) = &th {
            let bumped = p.mul(&m, &nonunit(p)).map_err(|e| e.to_string())?;
            let g2 = KHom { grade: bumped.clone(), ..g.clone() };
            expect(cotuple(&f, &g2).is_err(), || {
                format!("mixed-grade cotupling of {} and {} was accepted", m, bumped)
            })?;
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Premonoidal action of pure maps on effectful ones.

pub fn freyd_suite(seed: u64, trials: u64) -> Report {
    drive("freyd", seed, trials, |rng, trial| {
        let th = theory_for(trial);
        let pom = th.pomonoid();
        let (x, x2, x3) = (rand_small_set(rng), rand_small_set(rng), rand_small_set(rng));
        let (y, y2, y3) = (rand_small_set(rng), rand_small_set(rng), rand_small_set(rng));
        let f = rand_map(rng, x, x2);
        let g = rand_map(rng, x2, x3);
        let u = rand_map(rng, y, y2);
        let i = rand_khom(rng, &th, y, y2);
        let j = rand_khom(rng, &th, y2, y3);

        expect(
            KHom::pure(&th, &product_map(&f, &u)) == act(&f, &KHom::pure(&th, &u)),
            || "action on a pure map disagrees with the product embedding".into(),
        )?;
        expect(
            act(&g.compose(&f), &j.compose(&i)) == act(&g, &j).compose(&act(&f, &i)),
            || "interchange failed".into(),
        )?;
        let n = pom.mul(&i.grade, &rand_grade(rng, &pom)).map_err(|e| e.to_string())?;
        expect(
            act(&f, &i.upcast(n.clone())?) == act(&f, &i).upcast(n)?,
            || "upcast does not commute with the action".into(),
        )?;

        // push(f) = (X * f) ∘ I(δ) agrees with direct pairing.
        let k = rand_khom(rng, &th, x, y);
        let pushed = push(&k);
        let oracle_map = match &k.map {
            KMap::Writer(m) => KMap::Writer(
                x.elems()
                    .map(|i0| {
                        let (y0, a) = &m[i0];
                        (pair_index(y, i0, *y0), a.clone())
                    })
                    .collect(),
            ),
            KMap::Dist(m) => KMap::Dist(
                x.elems()
                    .map(|i0| {
                        m[i0]
                            .iter()
                            .map(|(y0, p)| (pair_index(y, i0, *y0), *p))
                            .collect()
                    })
                    .collect(),
            ),
        };
        let oracle = KHom {
            theory: th.clone(),
            src: x,
            dst: product(x, y),
            grade: k.grade.clone(),
            map: oracle_map,
        };
        expect(pushed == oracle, || "push disagrees with direct pairing".into())
    })
}

// ---------------------------------------------------------------------------
// The predicate fibration over finite sets.

pub fn fibration_suite(seed: u64, trials: u64) -> Report {
    drive("fibration", seed, trials, |rng, _trial| {
        let (x, y, z) = (rand_small_set(rng), rand_small_set(rng), rand_small_set(rng));
        let f = rand_map(rng, x, y);
        let g = rand_map(rng, y, z);
        let psi = rand_pred(rng, x);
        let phi = rand_pred(rng, y);
        let chi = rand_pred(rng, z);

        expect(reindex(&FinMap::identity(x), &psi) == psi, || "id* != id".into())?;
        expect(
            reindex(&f, &reindex(&g, &chi)) == reindex(&g.compose(&f), &chi),
            || "reindexing is not functorial".into(),
        )?;
        expect(
            pushforward(&FinMap::identity(x), &psi) == psi,
            || "id_* != id".into(),
        )?;

        // Direct image agrees with its equality-formula presentation:
        // f_*ψ = ∃_{π₂} (π₁*ψ ∧ Eq(f∘π₁, π₂)).
        let p1 = proj1(x, y);
        let p2 = proj2(x, y);
        let composite = pushforward(&p2, &reindex(&p1, &psi).meet(&eq_pred(&f.compose(&p1), &p2)));
        expect(composite == pushforward(&f, &psi), || {
            "equality-formula direct image disagrees with the direct image".into()
        })?;

        // Adjunction f_* ⊣ f* on subsets.
        expect(
            psi.subset_of(&reindex(&f, &phi)) == pushforward(&f, &psi).subset_of(&phi),
            || "direct image / substitution adjunction failed".into(),
        )?;
        expect(
            pushforward(&f, &psi.meet(&reindex(&f, &phi))) == pushforward(&f, &psi).meet(&phi),
            || "Frobenius failed".into(),
        )?;

        // Substitution commutes with ∃ along the weakening projection.
        let h = rand_map(rng, z, x);
        let psi_xy = rand_pred(rng, product(x, y));
        let lhs = reindex(&h, &pushforward(&p1, &psi_xy));
        let rhs = pushforward(
            &proj1(z, y),
            &reindex(&product_map(&h, &FinMap::identity(y)), &psi_xy),
        );
        expect(lhs == rhs, || "substitution does not commute with ∃ (weakening)".into())?;

        // Contraction: reindexing along the diagonal.
        let delta = diagonal(x);
        let q1 = proj1(x, x);
        let q2 = proj2(x, x);
        expect(
            reindex(&delta, &eq_pred(&q1, &q2)) == Pred::top(x),
            || "diagonal does not validate its equality predicate".into(),
        )?;
        expect(
            reindex(&delta, &reindex(&q1, &psi)) == psi,
            || "contraction after weakening is not the identity".into(),
        )?;
        expect(
            reindex(&delta, &pushforward(&delta, &psi)) == psi,
            || "δ* ∘ δ_* is not the identity".into(),
        )?;

        // Images along ⟨id, e⟩ decompose by the boolean test's outcome.
        let two = FinSet::new(2);
        let b = rand_map(rng, x, two);
        let im = pushforward(&pairing(&FinMap::identity(x), &b), &psi);
        let konst = |v: usize| FinMap::new(x, two, vec![v; x.size]);
        let ftrue = pairing(&FinMap::identity(x), &konst(1));
        let ffalse = pairing(&FinMap::identity(x), &konst(0));
        let decomposed = pushforward(&ftrue, &reindex(&ftrue, &im))
            .join(&pushforward(&ffalse, &reindex(&ffalse, &im)));
        expect(im == decomposed, || "boolean image decomposition failed".into())
    })
}

// ---------------------------------------------------------------------------
// Graded lifting membership: monotone in the grade and the postcondition,
// compatible with unit and sequencing.

fn rand_memory<'a>(rng: &mut ChaCha8Rng, mems: &'a [Memory]) -> &'a Memory {
    &mems[rng.gen_range(0..mems.len())]
}

fn rand_post(rng: &mut ChaCha8Rng, mems: &[Memory]) -> Predicate {
    Predicate::Unary(
        mems.iter()
            .filter(|_| rng.gen_bool(0.5))
            .cloned()
            .collect::<BTreeSet<_>>(),
    )
}

fn widen_post(rng: &mut ChaCha8Rng, post: &Predicate, mems: &[Memory]) -> Predicate {
    match post {
        Predicate::Unary(s) => {
            let mut out = s.clone();
            for m in mems {
                if rng.gen_bool(0.3) {
                    out.insert(m.clone());
                }
            }
            Predicate::Unary(out)
        }
        Predicate::Rel(s) => {
            let mut out = s.clone();
            for m1 in mems {
                for m2 in mems {
                    if rng.gen_bool(0.2) {
                        out.insert((m1.clone(), m2.clone()));
                    }
                }
            }
            Predicate::Rel(out)
        }
    }
}

fn rand_result(
    rng: &mut ChaCha8Rng,
    inst: Instance,
    pom: &Pomonoid,
    mems: &[Memory],
) -> EffectResult {
    match inst {
        Instance::Plain | Instance::SecLevel => EffectResult::Pure(rand_memory(rng, mems).clone()),
        Instance::Cost | Instance::Dataflow | Instance::PcSecurity => {
            EffectResult::Annotated(rand_memory(rng, mems).clone(), rand_grade(rng, pom))
        }
        Instance::UnionBound => {
            let d = rand_subdist(rng, FinSet::new(mems.len()));
            EffectResult::Dist(
                d.into_iter()
                    .map(|(i, p)| (mems[i].clone(), p))
                    .collect::<BTreeMap<_, _>>(),
            )
        }
    }
}

pub fn lifting_suite(seed: u64, trials: u64) -> Report {
    let model = Model::new(&["a", "b"], 0, 1, 4);
    let mems = enumerate_memories(&model, 1 << 20).expect("tiny model enumerates");
    drive("lifting", seed, trials, |rng, trial| {
        let insts = [
            Instance::Plain,
            Instance::Cost,
            Instance::UnionBound,
            Instance::PcSecurity,
            Instance::Dataflow,
            Instance::SecLevel,
        ];
        let inst = insts[(trial % insts.len() as u64) as usize];
        let pom = inst.pomonoid(&model);
        let m = rand_grade(rng, &pom);
        let n = pom.mul(&m, &rand_grade(rng, &pom)).map_err(|e| e.to_string())?;

        let post = if inst.relational() {
            Predicate::Rel(
                mems.iter()
                    .flat_map(|m1| mems.iter().map(move |m2| (m1.clone(), m2.clone())))
                    .filter(|_| rng.gen_bool(0.4))
                    .collect::<BTreeSet<_>>(),
            )
        } else {
            rand_post(rng, &mems)
        };
        let wide = widen_post(rng, &post, &mems);

        let (r1, r2);
        let input = match inst {
            Instance::PcSecurity => {
                // Bias towards equal traces so membership is sometimes true.
                let mem1 = rand_memory(rng, &mems).clone();
                let mem2 = rand_memory(rng, &mems).clone();
                let trace = rand_grade(rng, &pom);
                let trace2 = if rng.gen_bool(0.7) { trace.clone() } else { rand_grade(rng, &pom) };
                r1 = EffectResult::Annotated(mem1, trace);
                r2 = EffectResult::Annotated(mem2, trace2);
                LiftedInput::Pair(&r1, &r2)
            }
            Instance::SecLevel => {
                r1 = rand_result(rng, inst, &pom, &mems);
                r2 = EffectResult::Pure(mems[0].clone());
                let _ = &r2;
                LiftedInput::Leveled { level: rng.gen_range(0..=8), result: &r1 }
            }
            _ => {
                r1 = rand_result(rng, inst, &pom, &mems);
                r2 = EffectResult::Pure(mems[0].clone());
                let _ = &r2;
                LiftedInput::Unary(&r1)
            }
        };

        let at_m = lifting_member(inst, &pom, &m, &post, &input).map_err(|e| e.to_string())?;
        let at_n = lifting_member(inst, &pom, &n, &post, &input).map_err(|e| e.to_string())?;
        expect(!at_m || at_n, || {
            format!("{}: member at {} but not at larger {}", inst.name(), m, n)
        })?;
        let at_wide = lifting_member(inst, &pom, &m, &wide, &input).map_err(|e| e.to_string())?;
        expect(!at_m || at_wide, || {
            format!("{}: member lost under a weaker postcondition", inst.name())
        })?;

        if matches!(inst, Instance::Cost | Instance::Dataflow) {
            writer_unit_mult_checks(rng, inst, &pom, &mems, &post)?;
        }
        if inst == Instance::UnionBound {
            subdist_mult_check(rng, &mems)?;
        }
        Ok(())
    })
}

/// Returning a post-state at the unit annotation is in the lifting at the
/// unit grade, and sequencing annotations multiplies both the annotation
/// and the bound.
fn writer_unit_mult_checks(
    rng: &mut ChaCha8Rng,
    inst: Instance,
    pom: &Pomonoid,
    mems: &[Memory],
    post: &Predicate,
) -> Result<(), String> {
    let inside: Vec<&Memory> = mems.iter().filter(|m| post.contains_mem(m)).collect();
    let Some(mem) = inside.first() else { return Ok(()) };
    let unit = EffectResult::Annotated((*mem).clone(), pom.unit());
    let ok = lifting_member(inst, pom, &pom.unit(), post, &LiftedInput::Unary(&unit))
        .map_err(|e| e.to_string())?;
    expect(ok, || format!("{}: unit return not in the unit lifting", inst.name()))?;

    let m = rand_grade(rng, pom);
    let n = rand_grade(rng, pom);
    let a = rand_grade_leq(rng, pom, &m);
    let b = rand_grade_leq(rng, pom, &n);
    let seq = EffectResult::Annotated(
        (*mem).clone(),
        pom.mul(&a, &b).map_err(|e| e.to_string())?,
    );
    let mn = pom.mul(&m, &n).map_err(|e| e.to_string())?;
    let ok = lifting_member(inst, pom, &mn, post, &LiftedInput::Unary(&seq))
        .map_err(|e| e.to_string())?;
    expect(ok, || {
        format!("{}: sequenced annotations escape the multiplied bound", inst.name())
    })
}

/// Flattening nested subdistributions adds failure bounds: if the outer
/// weight on continuations failing more than δ₂ is at most δ₁, the flat
/// failure mass is at most δ₁ + δ₂.
fn subdist_mult_check(rng: &mut ChaCha8Rng, mems: &[Memory]) -> Result<(), String> {
    let good: BTreeSet<usize> = (0..mems.len()).filter(|_| rng.gen_bool(0.5)).collect();
    let k = rng.gen_range(1..=3usize);
    let inners: Vec<Vec<(usize, Rat)>> = (0..k)
        .map(|_| rand_subdist(rng, FinSet::new(mems.len())))
        .collect();
    let failures: Vec<Rat> = inners
        .iter()
        .map(|d| {
            d.iter()
                .filter(|(i, _)| !good.contains(i))
                .map(|(_, p)| *p)
                .sum()
        })
        .collect();
    let outer = rand_subdist(rng, FinSet::new(k));
    let delta2 = Rat::new(rng.gen_range(0..=8), 8);
    let delta1: Rat = outer
        .iter()
        .filter(|(i, _)| failures[*i] > delta2)
        .map(|(_, w)| *w)
        .sum();
    let flat_failure: Rat = outer.iter().map(|(i, w)| w * failures[*i]).sum();
    expect(flat_failure <= delta1 + delta2, || {
        format!(
            "flattened failure {} exceeds {} + {}",
            flat_failure, delta1, delta2
        )
    })
}
