//! Finite sets, predicates over them, and graded Kleisli homs at desk scale.
//!
//! Everything here is brute-force enumerable: carriers are `{0, .., size-1}`,
//! predicates are subsets, and effectful maps are tabulated. The law suites
//! in [`crate::kernel::laws`] exercise this machinery with randomized data.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use num_rational::Ratio;

use crate::grading::{Grade, Pomonoid};

pub type Rat = Ratio<u64>;

/// The finite set `{0, .., size-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinSet {
    pub size: usize,
}

impl FinSet {
    pub fn new(size: usize) -> FinSet {
        FinSet { size }
    }

    pub fn elems(&self) -> impl Iterator<Item = usize> {
        0..self.size
    }
}

/// A tabulated function between finite sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinMap {
    pub src: FinSet,
    pub dst: FinSet,
    pub table: Vec<usize>,
}

impl FinMap {
    pub fn new(src: FinSet, dst: FinSet, table: Vec<usize>) -> FinMap {
        assert_eq!(table.len(), src.size);
        assert!(table.iter().all(|&y| y < dst.size));
        FinMap { src, dst, table }
    }

    pub fn identity(x: FinSet) -> FinMap {
        FinMap::new(x, x, x.elems().collect())
    }

    pub fn apply(&self, x: usize) -> usize {
        self.table[x]
    }

    /// `self ∘ first`: run `first`, then `self`.
    pub fn compose(&self, first: &FinMap) -> FinMap {
        assert_eq!(first.dst, self.src);
        FinMap::new(
            first.src,
            self.dst,
            first.table.iter().map(|&y| self.table[y]).collect(),
        )
    }
}

/// Binary product with the encoding `(i, j) ↦ i * |Y| + j`.
pub fn product(x: FinSet, y: FinSet) -> FinSet {
    FinSet::new(x.size * y.size)
}

pub fn pair_index(y: FinSet, i: usize, j: usize) -> usize {
    i * y.size + j
}

pub fn unpair_index(y: FinSet, p: usize) -> (usize, usize) {
    (p / y.size, p % y.size)
}

/// First projection `X × Y → X`.
pub fn proj1(x: FinSet, y: FinSet) -> FinMap {
    let xy = product(x, y);
    FinMap::new(xy, x, xy.elems().map(|p| unpair_index(y, p).0).collect())
}

/// Second projection `X × Y → Y`.
pub fn proj2(x: FinSet, y: FinSet) -> FinMap {
    let xy = product(x, y);
    FinMap::new(xy, y, xy.elems().map(|p| unpair_index(y, p).1).collect())
}

/// The diagonal `X → X × X`.
pub fn diagonal(x: FinSet) -> FinMap {
    FinMap::new(
        x,
        product(x, x),
        x.elems().map(|i| pair_index(x, i, i)).collect(),
    )
}

/// `f × g : X × Y → X' × Y'` for pure `f`, `g`.
pub fn product_map(f: &FinMap, g: &FinMap) -> FinMap {
    let src = product(f.src, g.src);
    let dst = product(f.dst, g.dst);
    FinMap::new(
        src,
        dst,
        src.elems()
            .map(|p| {
                let (i, j) = unpair_index(g.src, p);
                pair_index(g.dst, f.apply(i), g.apply(j))
            })
            .collect(),
    )
}

/// `⟨f, g⟩ : Z → X × Y`.
pub fn pairing(f: &FinMap, g: &FinMap) -> FinMap {
    assert_eq!(f.src, g.src);
    FinMap::new(
        f.src,
        product(f.dst, g.dst),
        f.src
            .elems()
            .map(|z| pair_index(g.dst, f.apply(z), g.apply(z)))
            .collect(),
    )
}

/// Binary coproduct: `X + Y` is `{0, .., |X|+|Y|-1}` with `X` first.
pub fn coproduct(x: FinSet, y: FinSet) -> FinSet {
    FinSet::new(x.size + y.size)
}

pub fn inl(x: FinSet, y: FinSet) -> FinMap {
    FinMap::new(x, coproduct(x, y), x.elems().collect())
}

pub fn inr(x: FinSet, y: FinSet) -> FinMap {
    FinMap::new(y, coproduct(x, y), y.elems().map(|j| x.size + j).collect())
}

/// A subset of a finite set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pred {
    pub over: FinSet,
    pub members: BTreeSet<usize>,
}

impl Pred {
    pub fn new(over: FinSet, members: BTreeSet<usize>) -> Pred {
        assert!(members.iter().all(|&m| m < over.size));
        Pred { over, members }
    }

    pub fn top(over: FinSet) -> Pred {
        Pred::new(over, over.elems().collect())
    }

    pub fn bottom(over: FinSet) -> Pred {
        Pred::new(over, BTreeSet::new())
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.contains(&x)
    }

    pub fn subset_of(&self, other: &Pred) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn meet(&self, other: &Pred) -> Pred {
        assert_eq!(self.over, other.over);
        Pred::new(self.over, self.members.intersection(&other.members).copied().collect())
    }

    pub fn join(&self, other: &Pred) -> Pred {
        assert_eq!(self.over, other.over);
        Pred::new(self.over, self.members.union(&other.members).copied().collect())
    }
}

/// Substitution: `f*ψ = {x | f(x) ∈ ψ}`.
pub fn reindex(f: &FinMap, psi: &Pred) -> Pred {
    assert_eq!(f.dst, psi.over);
    Pred::new(
        f.src,
        f.src.elems().filter(|&x| psi.contains(f.apply(x))).collect(),
    )
}

/// Direct image: `f_*ψ = {y | ∃x ∈ ψ. f(x) = y}`.
pub fn pushforward(f: &FinMap, psi: &Pred) -> Pred {
    assert_eq!(f.src, psi.over);
    Pred::new(f.dst, psi.members.iter().map(|&x| f.apply(x)).collect())
}

/// The equality predicate `{x | f(x) = g(x)}`.
pub fn eq_pred(f: &FinMap, g: &FinMap) -> Pred {
    assert_eq!(f.src, g.src);
    assert_eq!(f.dst, g.dst);
    Pred::new(
        f.src,
        f.src.elems().filter(|&x| f.apply(x) == g.apply(x)).collect(),
    )
}

/// Which effect theory a tabulated Kleisli hom lives in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KTheory {
    /// Graded writer over a pomonoid.
    Writer(Pomonoid),
    /// Finite subdistributions with exact rational weights; the grading
    /// component is trivial (always the `max` unit).
    Dist,
}

impl KTheory {
    pub fn pomonoid(&self) -> Pomonoid {
        match self {
            KTheory::Writer(p) => p.clone(),
            KTheory::Dist => Pomonoid::MaxNat,
        }
    }
}

/// Per-element behaviour of a Kleisli hom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KMap {
    /// For each source element: (target, annotation).
    Writer(Vec<(usize, Grade)>),
    /// For each source element: a subdistribution, sorted with merged and
    /// nonzero weights.
    Dist(Vec<Vec<(usize, Rat)>>),
}

fn canon_dist(d: Vec<(usize, Rat)>) -> Vec<(usize, Rat)> {
    let mut merged: BTreeMap<usize, Rat> = BTreeMap::new();
    for (y, p) in d {
        *merged.entry(y).or_insert_with(|| Rat::new(0, 1)) += p;
    }
    merged.into_iter().filter(|(_, p)| *p > Rat::new(0, 1)).collect()
}

/// A Kleisli hom of an explicit grade between finite carriers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KHom {
    pub theory: KTheory,
    pub src: FinSet,
    pub dst: FinSet,
    pub grade: Grade,
    pub map: KMap,
}

impl KHom {
    pub fn writer(
        pom: &Pomonoid,
        src: FinSet,
        dst: FinSet,
        grade: Grade,
        map: Vec<(usize, Grade)>,
    ) -> KHom {
        assert_eq!(map.len(), src.size);
        KHom {
            theory: KTheory::Writer(pom.clone()),
            src,
            dst,
            grade,
            map: KMap::Writer(map),
        }
    }

    pub fn dist(src: FinSet, dst: FinSet, map: Vec<Vec<(usize, Rat)>>) -> KHom {
        assert_eq!(map.len(), src.size);
        KHom {
            theory: KTheory::Dist,
            src,
            dst,
            grade: Grade::MaxNat(0),
            map: KMap::Dist(map.into_iter().map(canon_dist).collect()),
        }
    }

    /// Embed a pure function at the unit grade.
    pub fn pure(theory: &KTheory, f: &FinMap) -> KHom {
        match theory {
            KTheory::Writer(pom) => KHom::writer(
                pom,
                f.src,
                f.dst,
                pom.unit(),
                f.table.iter().map(|&y| (y, pom.unit())).collect(),
            ),
            KTheory::Dist => KHom::dist(
                f.src,
                f.dst,
                f.table.iter().map(|&y| vec![(y, Rat::new(1, 1))]).collect(),
            ),
        }
    }

    pub fn identity(theory: &KTheory, x: FinSet) -> KHom {
        KHom::pure(theory, &FinMap::identity(x))
    }

    /// Kleisli composition `self ∘ first` (run `first`, then `self`); the
    /// grade is `first.grade · self.grade`.
    pub fn compose(&self, first: &KHom) -> KHom {
        assert_eq!(self.theory, first.theory);
        assert_eq!(first.dst, self.src);
        let pom = self.theory.pomonoid();
        let grade = pom.mul(&first.grade, &self.grade).expect("compatible grades");
        match (&first.map, &self.map) {
            (KMap::Writer(f), KMap::Writer(g)) => {
                let map = f
                    .iter()
                    .map(|(y, a)| {
                        let (z, b) = &g[*y];
                        (*z, pom.mul(a, b).expect("compatible annotations"))
                    })
                    .collect();
                KHom {
                    theory: self.theory.clone(),
                    src: first.src,
                    dst: self.dst,
                    grade,
                    map: KMap::Writer(map),
                }
            }
            (KMap::Dist(f), KMap::Dist(g)) => {
                let map = f
                    .iter()
                    .map(|d| {
                        let mut out = Vec::new();
                        for (y, p) in d {
                            for (z, q) in &g[*y] {
                                out.push((*z, p * q));
                            }
                        }
                        canon_dist(out)
                    })
                    .collect();
                KHom {
                    theory: KTheory::Dist,
                    src: first.src,
                    dst: self.dst,
                    grade,
                    map: KMap::Dist(map),
                }
            }
            _ => unreachable!("theory mismatch"),
        }
    }

    /// View the hom at a larger grade; the map is unchanged.
    pub fn upcast(&self, grade: Grade) -> Result<KHom, String> {
        let pom = self.theory.pomonoid();
        match pom.leq(&self.grade, &grade) {
            Ok(true) => Ok(KHom { grade, ..self.clone() }),
            Ok(false) => Err(format!("upcast {} to non-larger {}", self.grade, grade)),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// Cotupling `[f, g] : X + Y → Z`; both legs must share the grade.
pub fn cotuple(f: &KHom, g: &KHom) -> Result<KHom, String> {
    if f.theory != g.theory {
        return Err("cotupling across different theories".into());
    }
    if f.dst != g.dst {
        return Err("cotupling with different codomains".into());
    }
    if f.grade != g.grade {
        return Err(format!(
            "cotupling legs of different grades {} and {}",
            f.grade, g.grade
        ));
    }
    let src = coproduct(f.src, g.src);
    let map = match (&f.map, &g.map) {
        (KMap::Writer(a), KMap::Writer(b)) => {
            KMap::Writer(a.iter().chain(b.iter()).cloned().collect())
        }
        (KMap::Dist(a), KMap::Dist(b)) => KMap::Dist(a.iter().chain(b.iter()).cloned().collect()),
        _ => unreachable!("theory mismatch"),
    };
    Ok(KHom {
        theory: f.theory.clone(),
        src,
        dst: f.dst,
        grade: f.grade.clone(),
        map,
    })
}

/// The premonoidal action `f * k : X × Y → X' × Y'` of a pure `f : X → X'`
/// on an effectful `k : Y → Y'`; the grade is `k`'s.
pub fn act(f: &FinMap, k: &KHom) -> KHom {
    let src = product(f.src, k.src);
    let dst = product(f.dst, k.dst);
    let map = match &k.map {
        KMap::Writer(m) => KMap::Writer(
            src.elems()
                .map(|p| {
                    let (i, j) = unpair_index(k.src, p);
                    let (j2, a) = &m[j];
                    (pair_index(k.dst, f.apply(i), *j2), a.clone())
                })
                .collect(),
        ),
        KMap::Dist(m) => KMap::Dist(
            src.elems()
                .map(|p| {
                    let (i, j) = unpair_index(k.src, p);
                    m[j].iter()
                        .map(|(j2, q)| (pair_index(k.dst, f.apply(i), *j2), *q))
                        .collect()
                })
                .collect(),
        ),
    };
    KHom {
        theory: k.theory.clone(),
        src,
        dst,
        grade: k.grade.clone(),
        map,
    }
}

/// `push(f) : X → X × Y` for `f : X → Y`: keep the input alongside the
/// effectful output. Defined as `(X * f) ∘ I(δ_X)`.
pub fn push(f: &KHom) -> KHom {
    let delta = KHom::pure(&f.theory, &diagonal(f.src));
    act(&FinMap::identity(f.src), f).compose(&delta)
}
