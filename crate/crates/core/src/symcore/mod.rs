//! Exact computer-algebra kernel: rational expressions over named symbols.

mod expr;
mod gcd;
mod parse;
mod poly;
mod ratfunc;
pub mod rational;

pub use expr::{linear_coefficients, Expr, LinearCoefficients, LinearForm};
pub use gcd::{gcd, lcm};
pub use parse::{parse_expr, ParseError};
pub use poly::{Atom, Monomial, Poly, RootAtom};
pub use ratfunc::RatFunc;
pub use rational::{parse_rational, rat, ratio, to_f64, Rational};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("exponent too large")]
    ExponentTooLarge,
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("power has no exact rational value")]
    IrrationalPower,
    #[error("pole at evaluation point")]
    Pole,
    #[error("expression is nonlinear in `{0}`")]
    Nonlinear(String),
    #[error("unknown `{0}` appears in a denominator")]
    UnknownInDenominator(String),
}
