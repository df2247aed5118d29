//! Randomized properties: printer/parser round trips, the substitution
//! lemma for assertions, and the pomonoid laws for all five grade monoids.

use proptest::prelude::*;

use ghl::assertions::{holds_unary, print_formula, substitute, Formula};
use ghl::grading::{parse_grade, Grade, Pomonoid, Rat};
use ghl::parse::{parse_formula, parse_program};
use ghl::syntax::{
    enumerate_memories, eval_expr, print_program, Env, Expr, Model, Op, Program,
};

fn model() -> Model {
    Model::new(&["x", "y"], 0, 3, 4)
}

// --------------------------------------------------------------------------
// Strategies for well-sorted syntax (literals carry the sort the parser
// would infer for the same position).

fn cell_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        (0i64..=3).prop_map(Expr::cell),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone(), binop()).prop_map(|(a, b, op)| Expr::app(op, vec![a, b])),
            (0u64..=3).prop_map(|n| Expr::app(Op::N2c, vec![Expr::nat(n)])),
            inner
                .clone()
                .prop_map(|a| Expr::app(Op::B2c, vec![Expr::app(Op::C2b, vec![a])])),
        ]
    })
}

fn binop() -> impl Strategy<Value = Op> {
    prop_oneof![
        Just(Op::Add),
        Just(Op::Sub),
        Just(Op::Mul),
        Just(Op::Max),
        Just(Op::Min),
    ]
}

fn formula() -> impl Strategy<Value = Formula> {
    let atom = prop_oneof![
        Just(Formula::tt()),
        Just(Formula::ff()),
        (cell_expr(), cell_expr()).prop_map(|(a, b)| Formula::eq(a, b)),
    ];
    atom.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Formula::Or),
        ]
    })
}

fn program() -> impl Strategy<Value = Program> {
    let var = prop_oneof![Just("x".to_string()), Just("y".to_string())];
    let leaf = prop_oneof![
        Just(Program::Skip),
        (var, cell_expr()).prop_map(|(v, e)| Program::Assign(v, e)),
    ];
    leaf.prop_recursive(3, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone())
                .prop_map(|(a, b)| Program::Seq(Box::new(a), Box::new(b))),
            (cell_expr(), inner.clone(), inner.clone()).prop_map(|(e, t, f)| Program::If(
                Expr::app(Op::C2b, vec![e]),
                Box::new(t),
                Box::new(f)
            )),
            ((0u64..=3), inner.clone())
                .prop_map(|(k, b)| Program::Loop(Expr::nat(k), Box::new(b))),
        ]
    })
}

fn grade(pom: &Pomonoid) -> BoxedStrategy<Grade> {
    match pom {
        Pomonoid::NatCost => (0u64..=50).prop_map(Grade::NatCost).boxed(),
        Pomonoid::NonNegRat => (0u64..=40, 1u64..=1000)
            .prop_map(|(n, d)| Grade::NonNegRat(Rat::new(n, d)))
            .boxed(),
        Pomonoid::BitString => prop::collection::vec(any::<bool>(), 0..=8)
            .prop_map(Grade::BitString)
            .boxed(),
        Pomonoid::NatMatrix { dim } => {
            let dim = *dim;
            prop::collection::vec(prop::collection::vec(0u64..=3, dim), dim)
                .prop_map(Grade::NatMatrix)
                .boxed()
        }
        Pomonoid::MaxNat => (0u64..=50).prop_map(Grade::MaxNat).boxed(),
    }
}

fn pomonoid() -> impl Strategy<Value = Pomonoid> {
    prop_oneof![
        Just(Pomonoid::NatCost),
        Just(Pomonoid::NonNegRat),
        Just(Pomonoid::BitString),
        (1usize..=4).prop_map(|dim| Pomonoid::NatMatrix { dim }),
        Just(Pomonoid::MaxNat),
    ]
}

proptest! {
    #[test]
    fn program_print_parse_roundtrip(p in program()) {
        let printed = print_program(&p);
        let back = parse_program(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        prop_assert_eq!(back, p, "printed as {}", printed);
    }

    #[test]
    fn formula_print_parse_roundtrip(f in formula()) {
        let printed = print_formula(&f);
        let back = parse_formula(&printed).unwrap_or_else(|e| panic!("{printed}: {e}"));
        prop_assert_eq!(back.normalize(), f.normalize(), "printed as {}", printed);
    }

    #[test]
    fn grade_print_parse_roundtrip(pom in pomonoid()) {
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let g = grade(&pom).new_tree(&mut runner).unwrap().current();
        let printed = g.to_string();
        prop_assert_eq!(parse_grade(&printed).unwrap(), g, "printed as {}", printed);
    }

    // Substituting an expression for a variable in a formula is the same as
    // evaluating the formula after assigning the expression to the variable.
    #[test]
    fn substitution_is_semantic_update(
        f in formula(),
        e in cell_expr(),
        v in prop_oneof![Just("x"), Just("y")],
    ) {
        let model = model();
        let subst = substitute(&f, v, &e).unwrap();
        for mem in enumerate_memories(&model, 1 << 20).unwrap() {
            let val = eval_expr(&e, &Env::new(&model, &mem)).unwrap();
            let updated = mem.set(&model, v, val.as_cell().unwrap());
            let lhs = holds_unary(&subst, &model, &mem, &mut Vec::new()).unwrap();
            let rhs = holds_unary(&f, &model, &updated, &mut Vec::new()).unwrap();
            prop_assert_eq!(lhs, rhs, "memory {}", mem.display(&model));
        }
    }

    #[test]
    fn pomonoid_unit_and_associativity(pom in pomonoid()) {
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let mut draw = || grade(&pom).new_tree(&mut runner).unwrap().current();
        let (a, b, c) = (draw(), draw(), draw());
        let u = pom.unit();
        prop_assert_eq!(pom.mul(&a, &u).unwrap(), a.clone());
        prop_assert_eq!(pom.mul(&u, &a).unwrap(), a.clone());
        let lhs = pom.mul(&pom.mul(&a, &b).unwrap(), &c).unwrap();
        let rhs = pom.mul(&a, &pom.mul(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    // pow is a monoid homomorphism from (ℕ, +).
    #[test]
    fn pow_splits_over_addition(pom in pomonoid(), a in 0u64..=5, b in 0u64..=5) {
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let m = grade(&pom).new_tree(&mut runner).unwrap().current();
        let whole = pom.pow(&m, a + b).unwrap();
        let split = pom.mul(&pom.pow(&m, a).unwrap(), &pom.pow(&m, b).unwrap()).unwrap();
        prop_assert_eq!(whole, split);
    }

    // The preorder is reflexive, and multiplication is monotone on the
    // right in every instance.
    #[test]
    fn order_reflexive_and_right_monotone(pom in pomonoid()) {
        let mut runner = proptest::test_runner::TestRunner::deterministic();
        let mut draw = || grade(&pom).new_tree(&mut runner).unwrap().current();
        let (m, a, b) = (draw(), draw(), draw());
        prop_assert!(pom.leq(&m, &m).unwrap());
        let (lo, hi) = if pom.leq(&a, &b).unwrap() { (a, b) } else {
            let ab = pom.mul(&a, &b).unwrap();
            (a, ab)
        };
        prop_assert!(pom.leq(&lo, &hi).unwrap());
        let l = pom.mul(&m, &lo).unwrap();
        let h = pom.mul(&m, &hi).unwrap();
        prop_assert!(pom.leq(&l, &h).unwrap(), "{} vs {}", l, h);
    }

    #[test]
    fn bitstring_prefix_order_is_antisymmetric(
        a in prop::collection::vec(any::<bool>(), 0..=8),
        b in prop::collection::vec(any::<bool>(), 0..=8),
    ) {
        let pom = Pomonoid::BitString;
        let (ga, gb) = (Grade::BitString(a), Grade::BitString(b));
        if pom.leq(&ga, &gb).unwrap() && pom.leq(&gb, &ga).unwrap() {
            prop_assert_eq!(ga, gb);
        }
    }
}
