//! Preordered monoids of grades and the dataflow expression analysis.
//!
//! Five instances are shipped: additive naturals (cost), exact nonnegative
//! rationals (failure probability), words over {T,F} under prefix order
//! (control-flow traces), square nat matrices under `A ⨟ B = B*A + A + B`
//! (dataflow), and naturals under max (clearance levels).

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::syntax::{Expr, Model};

/// Exact nonnegative rational.
pub type Rat = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grade {
    NatCost(u64),
    NonNegRat(Rat),
    BitString(Vec<bool>),
    NatMatrix(Vec<Vec<u64>>),
    MaxNat(u64),
}

impl Grade {
    pub fn bits(s: &str) -> Grade {
        Grade::BitString(s.chars().map(|c| c == 'T').collect())
    }

    pub fn rat(num: u64, den: u64) -> Grade {
        Grade::NonNegRat(Rat::new(num, den))
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Grade::NatCost(_) => "nat",
            Grade::NonNegRat(_) => "rat",
            Grade::BitString(_) => "bits",
            Grade::NatMatrix(_) => "mat",
            Grade::MaxNat(_) => "max",
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grade::NatCost(n) => write!(f, "nat:{n}"),
            Grade::NonNegRat(r) => write!(f, "rat:{}/{}", r.numer(), r.denom()),
            Grade::BitString(w) => {
                write!(f, "bits:")?;
                for b in w {
                    write!(f, "{}", if *b { 'T' } else { 'F' })?;
                }
                Ok(())
            }
            Grade::NatMatrix(m) => {
                write!(f, "mat:[")?;
                for (i, row) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "[")?;
                    for (j, x) in row.iter().enumerate() {
                        if j > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{x}")?;
                    }
                    write!(f, "]")?;
                }
                write!(f, "]")
            }
            Grade::MaxNat(n) => write!(f, "max:{n}"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GradeError {
    #[error("grade instance mismatch: expected {expected}, got {got}")]
    TagMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("matrix dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("malformed grade literal `{0}`")]
    Parse(String),
}

/// One of the five shipped preordered monoids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pomonoid {
    NatCost,
    NonNegRat,
    BitString,
    NatMatrix { dim: usize },
    MaxNat,
}

impl fmt::Display for Pomonoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pomonoid::NatCost => write!(f, "nat-cost"),
            Pomonoid::NonNegRat => write!(f, "nonneg-rat"),
            Pomonoid::BitString => write!(f, "bit-string"),
            Pomonoid::NatMatrix { dim } => write!(f, "nat-matrix({dim})"),
            Pomonoid::MaxNat => write!(f, "max-nat"),
        }
    }
}

impl Pomonoid {
    pub fn unit(&self) -> Grade {
        match self {
            Pomonoid::NatCost => Grade::NatCost(0),
            Pomonoid::NonNegRat => Grade::NonNegRat(Rat::new(0, 1)),
            Pomonoid::BitString => Grade::BitString(Vec::new()),
            Pomonoid::NatMatrix { dim } => Grade::NatMatrix(vec![vec![0; *dim]; *dim]),
            Pomonoid::MaxNat => Grade::MaxNat(0),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Pomonoid::NatCost => "nat",
            Pomonoid::NonNegRat => "rat",
            Pomonoid::BitString => "bits",
            Pomonoid::NatMatrix { .. } => "mat",
            Pomonoid::MaxNat => "max",
        }
    }

    pub fn check(&self, g: &Grade) -> Result<(), GradeError> {
        if g.tag() != self.tag() {
            return Err(GradeError::TagMismatch {
                expected: self.tag(),
                got: g.tag(),
            });
        }
        if let (Pomonoid::NatMatrix { dim }, Grade::NatMatrix(m)) = (self, g) {
            if m.len() != *dim || m.iter().any(|row| row.len() != *dim) {
                return Err(GradeError::DimMismatch {
                    expected: *dim,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }

    /// Monoid multiplication (sequential composition of grades).
    pub fn mul(&self, a: &Grade, b: &Grade) -> Result<Grade, GradeError> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (a, b) {
            (Grade::NatCost(x), Grade::NatCost(y)) => Grade::NatCost(x + y),
            (Grade::NonNegRat(x), Grade::NonNegRat(y)) => Grade::NonNegRat(x + y),
            (Grade::BitString(x), Grade::BitString(y)) => {
                let mut w = x.clone();
                w.extend_from_slice(y);
                Grade::BitString(w)
            }
            (Grade::NatMatrix(x), Grade::NatMatrix(y)) => Grade::NatMatrix(mat_compose(x, y)),
            (Grade::MaxNat(x), Grade::MaxNat(y)) => Grade::MaxNat(*x.max(y)),
            _ => unreachable!("tags checked above"),
        })
    }

    /// The preorder.
    pub fn leq(&self, a: &Grade, b: &Grade) -> Result<bool, GradeError> {
        self.check(a)?;
        self.check(b)?;
        Ok(match (a, b) {
            (Grade::NatCost(x), Grade::NatCost(y)) => x <= y,
            (Grade::NonNegRat(x), Grade::NonNegRat(y)) => x <= y,
            (Grade::BitString(x), Grade::BitString(y)) => {
                x.len() <= y.len() && y[..x.len()] == x[..]
            }
            (Grade::NatMatrix(x), Grade::NatMatrix(y)) => x
                .iter()
                .zip(y)
                .all(|(rx, ry)| rx.iter().zip(ry).all(|(a, b)| a <= b)),
            (Grade::MaxNat(x), Grade::MaxNat(y)) => x <= y,
            _ => unreachable!("tags checked above"),
        })
    }

    /// Iterated multiplication, `pow(m, 0) = unit`.
    pub fn pow(&self, m: &Grade, k: u64) -> Result<Grade, GradeError> {
        let mut acc = self.unit();
        for _ in 0..k {
            acc = self.mul(m, &acc)?;
        }
        Ok(acc)
    }
}

/// Dataflow composition `A ⨟ B = (B * A) + A + B`: existing flows plus the
/// two-hop paths through the intermediate state.
fn mat_compose(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    let mut out = vec![vec![0u64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut two_hop = 0u64;
            for (k, bik) in b[i].iter().enumerate() {
                two_hop += bik * a[k][j];
            }
            out[i][j] = two_hop + a[i][j] + b[i][j];
        }
    }
    out
}

/// Per-variable read counts of an expression, indexed by the model's
/// variable order. Constants count nothing; applications sum their
/// arguments; a variable occurrence contributes its basis vector.
pub fn count_vars(e: &Expr, model: &Model) -> Vec<u64> {
    let mut counts = vec![0u64; model.var_order.len()];
    count_into(e, model, &mut counts);
    counts
}

fn count_into(e: &Expr, model: &Model, counts: &mut [u64]) {
    match e {
        Expr::Var(v) => {
            if let Some(i) = model.var_index(v) {
                counts[i] += 1;
            }
        }
        Expr::App { args, .. } => {
            for a in args {
                count_into(a, model, counts);
            }
        }
        _ => {}
    }
}

/// The rank-one dataflow matrix of an assignment: row = target variable,
/// columns = read counts of the right-hand side.
pub fn assign_grade(target: &str, e: &Expr, model: &Model) -> Grade {
    let n = model.var_order.len();
    let counts = count_vars(e, model);
    let mut m = vec![vec![0u64; n]; n];
    if let Some(i) = model.var_index(target) {
        m[i] = counts;
    }
    Grade::NatMatrix(m)
}

/// Parse a grade literal such as `nat:3`, `rat:1/20`, `rat:0.025`,
/// `bits:TFT`, `mat:[[0,1],[0,0]]` or `max:7`.
pub fn parse_grade(s: &str) -> Result<Grade, GradeError> {
    let bad = || GradeError::Parse(s.to_string());
    let (tag, rest) = s.split_once(':').ok_or_else(bad)?;
    match tag {
        "nat" => rest.trim().parse().map(Grade::NatCost).map_err(|_| bad()),
        "max" => rest.trim().parse().map(Grade::MaxNat).map_err(|_| bad()),
        "rat" => parse_rat(rest.trim()).map(Grade::NonNegRat).ok_or_else(bad),
        "bits" => {
            let w = rest.trim();
            if w.chars().all(|c| c == 'T' || c == 'F') {
                Ok(Grade::bits(w))
            } else {
                Err(bad())
            }
        }
        "mat" => parse_matrix(rest.trim()).map(Grade::NatMatrix).ok_or_else(bad),
        _ => Err(bad()),
    }
}

fn parse_rat(s: &str) -> Option<Rat> {
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().ok()?;
        let d: u64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int: u64 = if int.is_empty() { 0 } else { int.trim().parse().ok()? };
        let digits = frac.trim();
        let num: u64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        let den = 10u64.checked_pow(digits.len() as u32)?;
        return Some(Rat::new(int * den + num, den));
    }
    s.parse::<u64>().ok().map(|n| Rat::new(n, 1))
}

fn parse_matrix(s: &str) -> Option<Vec<Vec<u64>>> {
    let s = s.strip_prefix('[')?.strip_suffix(']')?;
    let mut rows = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
        let inner = rest.strip_prefix('[')?;
        let end = inner.find(']')?;
        let row: Vec<u64> = if inner[..end].trim().is_empty() {
            Vec::new()
        } else {
            inner[..end]
                .split(',')
                .map(|x| x.trim().parse().ok())
                .collect::<Option<_>>()?
        };
        rows.push(row);
        rest = inner[end + 1..].trim_start();
    }
    let n = rows.len();
    if rows.iter().all(|r| r.len() == n) {
        Some(rows)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::Op;

    #[test]
    fn rat_sum_of_failure_probabilities() {
        // 0.025 + 0.025 = 0.05
        let m = Pomonoid::NonNegRat;
        let g = m.mul(&Grade::rat(1, 40), &Grade::rat(1, 40)).unwrap();
        assert_eq!(g, Grade::rat(1, 20));
        assert_eq!(parse_rat("0.025"), Some(Rat::new(1, 40)));
        assert_eq!(parse_rat("0.05"), Some(Rat::new(1, 20)));
    }

    #[test]
    fn matrix_compose_example() {
        let m = Pomonoid::NatMatrix { dim: 3 };
        let a = Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![0, 0, 0]]);
        let b = Grade::NatMatrix(vec![vec![0, 0, 0], vec![0, 0, 0], vec![1, 1, 0]]);
        let expected = Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![1, 2, 0]]);
        assert_eq!(m.mul(&a, &b).unwrap(), expected);
    }

    #[test]
    fn max_nat_mul() {
        let m = Pomonoid::MaxNat;
        assert_eq!(
            m.mul(&Grade::MaxNat(3), &Grade::MaxNat(7)).unwrap(),
            Grade::MaxNat(7)
        );
    }

    #[test]
    fn bitstring_prefix_order() {
        let m = Pomonoid::BitString;
        assert!(m.leq(&Grade::bits("T"), &Grade::bits("TF")).unwrap());
        assert!(!m.leq(&Grade::bits("F"), &Grade::bits("TF")).unwrap());
        assert!(m.leq(&m.unit(), &m.unit()).unwrap());
    }

    #[test]
    fn matrix_leq_pointwise() {
        let m = Pomonoid::NatMatrix { dim: 2 };
        let a = Grade::NatMatrix(vec![vec![0, 1], vec![0, 0]]);
        let b = Grade::NatMatrix(vec![vec![1, 1], vec![0, 0]]);
        assert!(m.leq(&a, &b).unwrap());
        assert!(!m.leq(&b, &a).unwrap());
    }

    #[test]
    fn pow_cases() {
        assert_eq!(
            Pomonoid::NatCost.pow(&Grade::NatCost(2), 0).unwrap(),
            Grade::NatCost(0)
        );
        assert_eq!(
            Pomonoid::NatCost.pow(&Grade::NatCost(1), 3).unwrap(),
            Grade::NatCost(3)
        );
        assert_eq!(
            Pomonoid::BitString.pow(&Grade::bits("T"), 2).unwrap(),
            Grade::bits("TT")
        );
    }

    #[test]
    fn tag_mismatch_rejected() {
        let m = Pomonoid::NatCost;
        assert!(m.mul(&Grade::NatCost(1), &Grade::MaxNat(1)).is_err());
    }

    #[test]
    fn count_vars_examples() {
        let model = Model::new(&["x", "y", "z"], 0, 3, 4);
        let e = Expr::app(Op::Add, vec![Expr::var("y"), Expr::cell(2)]);
        assert_eq!(count_vars(&e, &model), vec![0, 1, 0]);
        let e2 = Expr::app(
            Op::Add,
            vec![
                Expr::app(Op::Add, vec![Expr::var("x"), Expr::var("y")]),
                Expr::var("y"),
            ],
        );
        assert_eq!(count_vars(&e2, &model), vec![1, 2, 0]);
        assert_eq!(count_vars(&Expr::cell(7), &model), vec![0, 0, 0]);
    }

    #[test]
    fn assign_grade_examples() {
        let model = Model::new(&["x", "y", "z"], 0, 3, 4);
        let e = Expr::app(Op::Add, vec![Expr::var("y"), Expr::cell(2)]);
        assert_eq!(
            assign_grade("x", &e, &model),
            Grade::NatMatrix(vec![vec![0, 1, 0], vec![0, 0, 0], vec![0, 0, 0]])
        );
        let e = Expr::app(Op::Add, vec![Expr::var("x"), Expr::var("y")]);
        assert_eq!(
            assign_grade("z", &e, &model),
            Grade::NatMatrix(vec![vec![0, 0, 0], vec![0, 0, 0], vec![1, 1, 0]])
        );
        assert_eq!(
            assign_grade("x", &Expr::cell(5), &model),
            Pomonoid::NatMatrix { dim: 3 }.unit()
        );
    }

    #[test]
    fn grade_literal_round_trip() {
        for s in ["nat:3", "rat:1/20", "bits:TFT", "mat:[[0,1],[0,0]]", "max:7"] {
            let g = parse_grade(s).unwrap();
            assert_eq!(g.to_string(), s);
        }
        assert_eq!(parse_grade("bits:").unwrap(), Grade::BitString(vec![]));
        assert!(parse_grade("nat:x").is_err());
        assert!(parse_grade("mat:[[0,1]]").is_err());
    }
}
