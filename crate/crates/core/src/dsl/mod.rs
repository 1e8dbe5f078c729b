//! A small expression language for declaring the measurable functions of a
//! model: edge, star, line and dust functions, multiplicity kernels and
//! intensities.

mod ast;
mod eval;
mod parser;
mod print;

pub use ast::{BinOp, Expr, Func, Var};
pub use eval::{eval, Env, EvalError};
pub use parser::{parse, ParseError};
pub use print::pretty_print;
