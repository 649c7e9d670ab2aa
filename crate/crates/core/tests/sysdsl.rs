mod common;

use proptest::prelude::*;
use sdcert_core::sysdsl::{parse_expression, parse_expression_bytes, parse_system, BinOp, EvalError, Expr, Func, MapEnv, Var};

fn var(v: Var) -> Expr {
    Expr::Var(v)
}

#[test]
fn expression_examples() {
    let e = parse_expression("x1 + T*u1").unwrap();
    let want = Expr::binary(BinOp::Add, var(Var::State(0)), Expr::binary(BinOp::Mul, var(Var::Period), var(Var::Input(0))));
    assert_eq!(e, want);
    assert_eq!(parse_expression("-x1^2").unwrap(), Expr::neg(Expr::binary(BinOp::Pow, var(Var::State(0)), Expr::num(2.0))));
    let d = parse_expression("min(x1, x2, x3)").unwrap_err();
    assert_eq!(d.offset, 0, "{d}");
    assert!(d.message.contains("min"), "{d}");
}

#[test]
fn evaluation_examples() {
    let env = MapEnv::new().with("x1", 1.0).with("T", 0.5).with("u1", 2.0);
    assert_eq!(parse_expression("x1 + T*u1").unwrap().eval(&env).unwrap(), 2.0);
    assert_eq!(parse_expression("exp(0)").unwrap().eval(&env).unwrap(), 1.0);
    assert!(matches!(parse_expression("sqrt(-1)").unwrap().eval(&env), Err(EvalError::Domain { .. })));
    assert!(matches!(parse_expression("1/(x1 - 1)").unwrap().eval(&env), Err(EvalError::DivisionByZero)));
    assert!(matches!(parse_expression("y").unwrap().eval(&env), Err(EvalError::Unbound(_))));
    assert!(matches!(parse_expression("(-2)^0.5").unwrap().eval(&env), Err(EvalError::Domain { .. })));
}

#[test]
fn system_examples() {
    let d = parse_system("[system]\nn = 1\nm = 1\n[f]\nf1 = \"u1\"\n").unwrap();
    assert_eq!((d.n, d.m), (1, 1));
    let err = parse_system("[system]\nn = 1\nm = 0\n[f]\nf1 = \"x2\"\n").unwrap_err();
    assert!(err.message.contains("x2"), "{err}");
    let d = parse_system("[system]\nn = 1\nm = 0\n[f]\nf1 = \"a*x1\"\n[params]\na = -1\n").unwrap();
    assert_eq!(d.f[0].eval(&MapEnv::new().with("x1", 3.0)).unwrap(), -3.0);
}

#[test]
fn evaluation_table() {
    let err = common::eval_table_error();
    assert!(err <= 1e-15, "worst relative error {err:e}");
}

#[test]
fn fuzzed_inputs_never_panic() {
    let mut parsed = 0;
    for input in common::fuzz_inputs(20_000, 7) {
        if parse_expression_bytes(&input).is_ok() {
            parsed += 1;
        }
        if let Ok(s) = std::str::from_utf8(&input) {
            let _ = parse_system(s);
        }
    }
    assert!(parsed > 0);
}

fn is_indexed(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some('x' | 'u')) && c.as_str().chars().next().is_some_and(|d| d.is_ascii_digit())
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0.0f64..1e6).prop_map(Expr::num),
        (0usize..3).prop_map(|i| var(Var::State(i))),
        (0usize..2).prop_map(|i| var(Var::Input(i))),
        Just(var(Var::Period)),
        "[a-w][a-z_0-9]{0,4}".prop_filter("reserved", |s| Func::from_name(s).is_none() && !is_indexed(s)).prop_map(|s| var(Var::Param(s))),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let ops = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
        let unary = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Ln), Just(Func::Sqrt), Just(Func::Abs), Just(Func::Tanh), Just(Func::Sign)];
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (ops, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (unary, inner.clone()).prop_map(|(f, a)| Expr::Call(f, vec![a])),
            (prop_oneof![Just(Func::Min), Just(Func::Max)], inner.clone(), inner).prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
        ]
    })
}

proptest! {
    #[test]
    fn printed_trees_reparse(e in arb_expr()) {
        let printed = e.to_string();
        prop_assert_eq!(parse_expression(&printed).unwrap(), e, "{}", printed);
    }

    #[test]
    fn evaluation_is_deterministic(e in arb_expr(), x in -3.0f64..3.0) {
        let env = MapEnv::new().with("x1", x).with("x2", 0.5).with("x3", -x).with("u1", 1.5).with("u2", -0.25).with("T", 0.1);
        let a = e.eval(&env);
        let b = e.eval(&env);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.to_bits(), b.to_bits()),
            (a, b) => prop_assert_eq!(a, b),
        }
    }
}
