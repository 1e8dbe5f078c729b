use std::fmt;

/// Free variables a DSL expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X,
    Y,
    Z,
    K,
    V,
}

impl Var {
    pub const ALL: [Var; 5] = [Var::X, Var::Y, Var::Z, Var::K, Var::V];

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::K => "k",
            Var::V => "v",
        }
    }

    pub fn from_name(name: &str) -> Option<Var> {
        Some(match name {
            "x" => Var::X,
            "y" => Var::Y,
            "z" => Var::Z,
            "k" => Var::K,
            "v" => Var::V,
            _ => return None,
        })
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Built-in functions of the DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Abs,
    Floor,
    Mod,
    Min,
    Max,
    /// `ind(e, a, b)` is 1 when `a <= e <= b` (closed interval), else 0.
    Ind,
    /// `piecewise(c1, e1, c2, e2, ..., default)`: the first `ei` whose
    /// condition `ci` is nonzero, otherwise `default`.
    Piecewise,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Exp,
        Func::Log,
        Func::Abs,
        Func::Floor,
        Func::Mod,
        Func::Min,
        Func::Max,
        Func::Ind,
        Func::Piecewise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Floor => "floor",
            Func::Mod => "mod",
            Func::Min => "min",
            Func::Max => "max",
            Func::Ind => "ind",
            Func::Piecewise => "piecewise",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Whether `n` arguments is a legal call.
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Func::Exp | Func::Log | Func::Abs | Func::Floor => n == 1,
            Func::Mod => n == 2,
            Func::Min | Func::Max => n >= 2,
            Func::Ind => n == 3,
            Func::Piecewise => n >= 3 && n % 2 == 1,
        }
    }

    pub(crate) fn arity_hint(self) -> &'static str {
        match self {
            Func::Exp | Func::Log | Func::Abs | Func::Floor => "exactly 1 argument",
            Func::Mod => "exactly 2 arguments",
            Func::Min | Func::Max => "at least 2 arguments",
            Func::Ind => "exactly 3 arguments",
            Func::Piecewise => "an odd number (at least 3) of arguments",
        }
    }
}

/// Abstract syntax tree of a DSL expression.
///
/// Literals are finite and nonnegative; a negated constant is `Neg(Num(c))`,
/// which is what the parser produces for `-c`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Literal constructor; negative values become `Neg(Num(|c|))`.
    pub fn num(c: f64) -> Expr {
        if c < 0.0 {
            Expr::Neg(Box::new(Expr::Num(-c)))
        } else {
            Expr::Num(c)
        }
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }

    pub fn call(func: Func, args: Vec<Expr>) -> Expr {
        Expr::Call(func, args)
    }

    /// Set of free variables, in canonical order.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut seen = [false; 5];
        self.collect_vars(&mut seen);
        Var::ALL.into_iter().filter(|v| seen[v.index()]).collect()
    }

    fn collect_vars(&self, seen: &mut [bool; 5]) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => seen[v.index()] = true,
            Expr::Neg(e) => e.collect_vars(seen),
            Expr::Binary(_, l, r) => {
                l.collect_vars(seen);
                r.collect_vars(seen);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(seen)),
        }
    }

    /// True for the literal zero, used to skip work on identically-zero slots.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(c) if *c == 0.0)
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Neg(e) => 1 + e.depth(),
            Expr::Binary(_, l, r) => 1 + l.depth().max(r.depth()),
            Expr::Call(_, args) => 1 + args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }
}
