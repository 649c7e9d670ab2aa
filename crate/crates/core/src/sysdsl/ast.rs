use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// A variable reference. State and input indices are zero-based internally
/// and printed one-based (`x1` is `State(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Var {
    State(usize),
    Input(usize),
    Period,
    Param(String),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::State(i) => write!(f, "x{}", i + 1),
            Var::Input(i) => write!(f, "u{}", i + 1),
            Var::Period => f.write_str("T"),
            Var::Param(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
    Sign,
    Min,
    Max,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            "sign" => Func::Sign,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} is undefined at {arg}")]
    Domain { func: &'static str, arg: f64 },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("non-finite result {0}")]
    NonFinite(f64),
}

/// Variable bindings seen by [`Expr::eval`].
pub trait Environment {
    fn lookup(&self, var: &Var) -> Option<f64>;
}

/// Bindings by printed name (`x1`, `u2`, `T`, parameter names).
#[derive(Debug, Clone, Default)]
pub struct MapEnv(pub BTreeMap<String, f64>);

impl MapEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }
}

impl Environment for MapEnv {
    fn lookup(&self, var: &Var) -> Option<f64> {
        self.0.get(&var.to_string()).copied()
    }
}

/// Positional bindings used on the hot path of simulation.
#[derive(Debug, Clone, Copy)]
pub struct SlotEnv<'a> {
    pub x: &'a [f64],
    pub u: &'a [f64],
    pub period: f64,
    pub params: Option<&'a BTreeMap<String, f64>>,
}

impl Environment for SlotEnv<'_> {
    #[inline]
    fn lookup(&self, var: &Var) -> Option<f64> {
        match var {
            Var::State(i) => self.x.get(*i).copied(),
            Var::Input(i) => self.u.get(*i).copied(),
            Var::Period => Some(self.period),
            Var::Param(name) => self.params.and_then(|p| p.get(name).copied()),
        }
    }
}

fn finite(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(v))
    }
}

fn power(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exp < 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(EvalError::Domain { func: "^", arg: base });
    }
    // Small integer exponents go through powi, which is exact for squares.
    if exp.fract() == 0.0 && exp.abs() <= 64.0 {
        return finite(base.powi(exp as i32));
    }
    finite(base.powf(exp))
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn eval<E: Environment + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(var) => env
                .lookup(var)
                .ok_or_else(|| EvalError::Unbound(var.to_string())),
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Binary(op, lhs, rhs) => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                match op {
                    BinOp::Add => finite(a + b),
                    BinOp::Sub => finite(a - b),
                    BinOp::Mul => finite(a * b),
                    BinOp::Div => {
                        if b == 0.0 {
                            Err(EvalError::DivisionByZero)
                        } else {
                            finite(a / b)
                        }
                    }
                    BinOp::Pow => power(a, b),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                match func {
                    Func::Sin => Ok(a.sin()),
                    Func::Cos => Ok(a.cos()),
                    Func::Tan => finite(a.tan()),
                    Func::Exp => finite(a.exp()),
                    Func::Ln => {
                        if a <= 0.0 {
                            Err(EvalError::Domain { func: "ln", arg: a })
                        } else {
                            Ok(a.ln())
                        }
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            Err(EvalError::Domain { func: "sqrt", arg: a })
                        } else {
                            Ok(a.sqrt())
                        }
                    }
                    Func::Abs => Ok(a.abs()),
                    Func::Tanh => Ok(a.tanh()),
                    Func::Sign => Ok(if a > 0.0 {
                        1.0
                    } else if a < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }),
                    Func::Min => Ok(a.min(args[1].eval(env)?)),
                    Func::Max => Ok(a.max(args[1].eval(env)?)),
                }
            }
        }
    }

    /// Visits every variable reference in evaluation order.
    pub fn for_each_var(&self, visit: &mut dyn FnMut(&Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => visit(v),
            Expr::Neg(e) => e.for_each_var(visit),
            Expr::Binary(_, a, b) => {
                a.for_each_var(visit);
                b.for_each_var(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.for_each_var(visit)),
        }
    }

    /// Replaces parameter references that have a binding with literals.
    pub fn substitute(&self, params: &BTreeMap<String, f64>) -> Expr {
        match self {
            Expr::Var(Var::Param(name)) => match params.get(name) {
                Some(v) => Expr::Num(*v),
                None => self.clone(),
            },
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.substitute(params)),
            Expr::Binary(op, a, b) => Expr::binary(*op, a.substitute(params), b.substitute(params)),
            Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| a.substitute(params)).collect()),
        }
    }
}

/// Fully parenthesised rendering; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::Var(Var::State(i))
    }

    #[test]
    fn sign_of_zero_is_zero() {
        let e = Expr::Call(Func::Sign, vec![x(0)]);
        let env = MapEnv::new().with("x1", 0.0);
        assert_eq!(e.eval(&env).unwrap(), 0.0);
    }

    #[test]
    fn domain_errors_are_reported() {
        let env = MapEnv::new().with("x1", -1.0);
        let sq = Expr::Call(Func::Sqrt, vec![x(0)]);
        assert!(matches!(sq.eval(&env), Err(EvalError::Domain { func: "sqrt", .. })));
        let ln = Expr::Call(Func::Ln, vec![Expr::num(0.0)]);
        assert!(matches!(ln.eval(&env), Err(EvalError::Domain { func: "ln", .. })));
        let div = Expr::binary(BinOp::Div, Expr::num(1.0), Expr::num(0.0));
        assert_eq!(div.eval(&env), Err(EvalError::DivisionByZero));
        let pow = Expr::binary(BinOp::Pow, x(0), Expr::num(0.5));
        assert!(matches!(pow.eval(&env), Err(EvalError::Domain { func: "^", .. })));
        let unbound = Expr::Var(Var::Param("k".into()));
        assert_eq!(unbound.eval(&env), Err(EvalError::Unbound("k".into())));
    }

    #[test]
    fn negative_base_integer_power_is_fine() {
        let env = MapEnv::new().with("x1", -2.0);
        let pow = Expr::binary(BinOp::Pow, x(0), Expr::num(3.0));
        assert_eq!(pow.eval(&env).unwrap(), -8.0);
    }

    #[test]
    fn substitution_inlines_known_params() {
        let e = Expr::binary(BinOp::Mul, Expr::Var(Var::Param("a".into())), x(0));
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), -1.0);
        let s = e.substitute(&p);
        assert_eq!(s, Expr::binary(BinOp::Mul, Expr::num(-1.0), x(0)));
    }
}
