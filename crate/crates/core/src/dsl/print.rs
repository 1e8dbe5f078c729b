use super::ast::{BinOp, Expr};
use std::fmt::{self, Write};

// Binding strength of each node kind, loosest first.
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const POWER: u8 = 3;
const UNARY: u8 = 4;
const ATOM: u8 = 5;

fn level(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => SUM,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PRODUCT,
        Expr::Binary(BinOp::Pow, ..) => POWER,
        Expr::Neg(_) => UNARY,
        Expr::Num(_) | Expr::Var(_) | Expr::Call(..) => ATOM,
    }
}

fn write_number(out: &mut impl Write, c: f64) -> fmt::Result {
    if c == 0.0 || (1e-4..1e15).contains(&c) {
        write!(out, "{c}")
    } else {
        write!(out, "{c:e}")
    }
}

fn write_at(out: &mut impl Write, e: &Expr, min_level: u8) -> fmt::Result {
    if level(e) < min_level {
        out.write_char('(')?;
        write_expr(out, e)?;
        return out.write_char(')');
    }
    write_expr(out, e)
}

fn write_expr(out: &mut impl Write, e: &Expr) -> fmt::Result {
    match e {
        Expr::Num(c) => write_number(out, *c),
        Expr::Var(v) => out.write_str(v.name()),
        Expr::Neg(inner) => {
            out.write_char('-')?;
            write_at(out, inner, UNARY)
        }
        Expr::Binary(op, l, r) => {
            let (lhs_min, rhs_min, spaced) = match op {
                BinOp::Add | BinOp::Sub => (SUM, PRODUCT, true),
                BinOp::Mul | BinOp::Div => (PRODUCT, POWER, false),
                BinOp::Pow => (UNARY, POWER, false),
            };
            write_at(out, l, lhs_min)?;
            if spaced {
                write!(out, " {} ", op.symbol())?;
            } else {
                out.write_str(op.symbol())?;
            }
            write_at(out, r, rhs_min)
        }
        Expr::Call(func, args) => {
            out.write_str(func.name())?;
            out.write_char('(')?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_expr(out, a)?;
            }
            out.write_char(')')
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

/// Render with the minimal parentheses needed for `parse` to rebuild the same tree.
pub fn pretty_print(e: &Expr) -> String {
    e.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::ast::{Func, Var};
    use crate::dsl::parse;
    use proptest::prelude::*;

    #[test]
    fn literal_and_nesting() {
        assert_eq!(pretty_print(&Expr::Num(1.5)), "1.5");
        assert_eq!(parse("1.5").unwrap(), Expr::Num(1.5));
        let e = parse("(x+y)*z").unwrap();
        assert_eq!(pretty_print(&e), "(x + y)*z");
        assert_eq!(parse(&pretty_print(&e)).unwrap(), e);
        let neg_pow = Expr::neg(Expr::binary(BinOp::Pow, Expr::Var(Var::X), Expr::Num(2.0)));
        assert_eq!(pretty_print(&neg_pow), "-(x^2)");
        assert_eq!(pretty_print(&Expr::Num(1e-9)), "1e-9");
    }

    #[test]
    fn counterexample_round_trips() {
        let e = parse("ind(x,0,1)*ind(mod(floor(y),2),0,0)").unwrap();
        assert_eq!(pretty_print(&e), "ind(x, 0, 1)*ind(mod(floor(y), 2), 0, 0)");
        assert_eq!(parse(&pretty_print(&e)).unwrap(), e);
    }

    fn literal() -> impl Strategy<Value = f64> {
        prop_oneof![
            Just(0.0),
            (0u32..100).prop_map(f64::from),
            0.0..1.0f64,
            (0.0..1.0f64, -300i32..300).prop_map(|(m, e)| m * 10f64.powi(e)),
        ]
    }

    pub(crate) fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            literal().prop_map(Expr::Num),
            proptest::sample::select(Var::ALL.to_vec()).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(5, 64, 5, |inner| {
            let ops = proptest::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow]);
            prop_oneof![
                inner.clone().prop_map(Expr::neg),
                (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
                (proptest::sample::select(vec![Func::Exp, Func::Log, Func::Abs, Func::Floor]), inner.clone())
                    .prop_map(|(f, a)| Expr::call(f, vec![a])),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::call(Func::Mod, vec![a, b])),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(|a| Expr::call(Func::Min, a)),
                proptest::collection::vec(inner.clone(), 2..4).prop_map(|a| Expr::call(Func::Max, a)),
                (inner.clone(), inner.clone(), inner.clone()).prop_map(|(a, b, c)| Expr::call(Func::Ind, vec![a, b, c])),
                proptest::collection::vec(inner, 1..3).prop_map(|a| {
                    let n = a.len() * 2 + 1;
                    Expr::call(Func::Piecewise, a.iter().cycle().take(n).cloned().collect())
                }),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn parse_inverts_pretty_print(e in arb_expr()) {
            prop_assume!(e.depth() <= 6);
            let text = pretty_print(&e);
            let back = parse(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
            prop_assert_eq!(back, e, "{}", text);
        }
    }
}
