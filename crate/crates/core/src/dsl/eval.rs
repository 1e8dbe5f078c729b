use super::ast::{BinOp, Expr, Func, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("variable '{0}' is not bound")]
    Unbound(Var),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Variable bindings for evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    slots: [Option<f64>; 5],
}

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: Var, value: f64) -> Self {
        self.slots[var.index()] = Some(value);
        self
    }

    pub fn set(&mut self, var: Var, value: f64) {
        self.slots[var.index()] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        self.slots[var.index()]
    }

    /// Binds `vars[i] = values[i]`.
    pub fn from_pairs(vars: &[Var], values: &[f64]) -> Self {
        let mut env = Env::new();
        for (v, x) in vars.iter().zip(values) {
            env.set(*v, *x);
        }
        env
    }
}

fn finite(value: f64, what: &str) -> Result<f64, EvalError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvalError::Domain(format!("{what} is not a finite real")))
    }
}

/// Evaluate `e` under `env` with 64-bit float semantics.
///
/// `log` of a nonpositive number, division by zero and any non-finite
/// intermediate are domain errors.
pub fn eval(e: &Expr, env: &Env) -> Result<f64, EvalError> {
    match e {
        Expr::Num(c) => Ok(*c),
        Expr::Var(v) => env.get(*v).ok_or(EvalError::Unbound(*v)),
        Expr::Neg(inner) => Ok(-eval(inner, env)?),
        Expr::Binary(op, l, r) => {
            let a = eval(l, env)?;
            let b = eval(r, env)?;
            match op {
                BinOp::Add => finite(a + b, "sum"),
                BinOp::Sub => finite(a - b, "difference"),
                BinOp::Mul => finite(a * b, "product"),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::Domain("division by zero".into()))
                    } else {
                        finite(a / b, "quotient")
                    }
                }
                BinOp::Pow => finite(a.powf(b), "power"),
            }
        }
        Expr::Call(func, args) => call(*func, args, env),
    }
}

fn call(func: Func, args: &[Expr], env: &Env) -> Result<f64, EvalError> {
    let arg = |i: usize| eval(&args[i], env);
    match func {
        Func::Exp => finite(arg(0)?.exp(), "exp"),
        Func::Log => {
            let a = arg(0)?;
            if a <= 0.0 {
                Err(EvalError::Domain(format!("log of nonpositive value {a}")))
            } else {
                Ok(a.ln())
            }
        }
        Func::Abs => Ok(arg(0)?.abs()),
        Func::Floor => Ok(arg(0)?.floor()),
        Func::Mod => {
            let a = arg(0)?;
            let b = arg(1)?;
            if b == 0.0 {
                return Err(EvalError::Domain("mod by zero".into()));
            }
            finite(a - b * (a / b).floor(), "mod")
        }
        Func::Min => args.iter().try_fold(f64::INFINITY, |m, a| Ok(m.min(eval(a, env)?))),
        Func::Max => args.iter().try_fold(f64::NEG_INFINITY, |m, a| Ok(m.max(eval(a, env)?))),
        Func::Ind => {
            let value = arg(0)?;
            let lo = arg(1)?;
            let hi = arg(2)?;
            Ok(if lo <= value && value <= hi { 1.0 } else { 0.0 })
        }
        Func::Piecewise => {
            let (default, pairs) = args.split_last().expect("arity checked at parse");
            for pair in pairs.chunks(2) {
                if eval(&pair[0], env)? != 0.0 {
                    return eval(&pair[1], env);
                }
            }
            eval(default, env)
        }
    }
}
