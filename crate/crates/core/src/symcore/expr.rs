//! User-facing expression trees. Every structural operation goes through the
//! canonical [`RatFunc`] form; the tree keeps the user's spelling for output.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::poly::{Atom, Monomial, Poly};
use super::ratfunc::RatFunc;
use super::rational::{pow_rational, rat, to_f64, Rational};
use super::SymError;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Num(Rational),
    Sym(String),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Rational exponent; non-integer values become opaque power atoms.
    Pow(Box<Expr>, Rational),
}

impl Expr {
    pub fn num(n: i64) -> Expr {
        Expr::Num(rat(n))
    }

    pub fn sym(name: &str) -> Expr {
        Expr::Sym(name.to_string())
    }

    pub fn canonical(&self) -> Result<RatFunc, SymError> {
        Ok(match self {
            Expr::Num(c) => RatFunc::constant(c.clone()),
            Expr::Sym(s) => RatFunc::sym(s),
            Expr::Add(items) => {
                let mut acc = RatFunc::zero();
                for e in items {
                    acc = acc.add(&e.canonical()?);
                }
                acc
            }
            Expr::Mul(items) => {
                let mut acc = RatFunc::one();
                for e in items {
                    acc = acc.mul(&e.canonical()?);
                }
                acc
            }
            Expr::Neg(e) => e.canonical()?.neg(),
            Expr::Div(a, b) => a.canonical()?.div(&b.canonical()?)?,
            Expr::Pow(b, q) => b.canonical()?.pow_rational(q)?,
        })
    }

    /// Canonical rational normal form, as an expression.
    pub fn canonicalize(&self) -> Result<Expr, SymError> {
        Ok(Expr::from_ratfunc(&self.canonical()?))
    }

    pub fn differentiate(&self, v: &str) -> Result<Expr, SymError> {
        Ok(Expr::from_ratfunc(&self.canonical()?.diff(v)))
    }

    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Result<Expr, SymError> {
        let mut b = BTreeMap::new();
        for (k, v) in bindings {
            b.insert(k.clone(), v.canonical()?);
        }
        Ok(Expr::from_ratfunc(&self.canonical()?.try_substitute(&b)?))
    }

    /// Exact value, computed directly on the tree.
    pub fn evaluate(&self, point: &BTreeMap<String, Rational>) -> Result<Rational, SymError> {
        Ok(match self {
            Expr::Num(c) => c.clone(),
            Expr::Sym(s) => point.get(s).cloned().ok_or_else(|| SymError::Unbound(s.clone()))?,
            Expr::Add(items) => {
                let mut acc = Rational::zero();
                for e in items {
                    acc += e.evaluate(point)?;
                }
                acc
            }
            Expr::Mul(items) => {
                let mut acc = Rational::one();
                for e in items {
                    acc *= e.evaluate(point)?;
                }
                acc
            }
            Expr::Neg(e) => -e.evaluate(point)?,
            Expr::Div(a, b) => {
                let d = b.evaluate(point)?;
                if d.is_zero() {
                    return Err(SymError::Pole);
                }
                a.evaluate(point)? / d
            }
            Expr::Pow(b, q) => {
                let v = b.evaluate(point)?;
                if v.is_zero() && q.is_negative() {
                    return Err(SymError::Pole);
                }
                pow_rational(&v, q).ok_or(SymError::IrrationalPower)?
            }
        })
    }

    pub fn evaluate_f64(&self, point: &BTreeMap<String, f64>) -> Option<f64> {
        Some(match self {
            Expr::Num(c) => to_f64(c),
            Expr::Sym(s) => *point.get(s)?,
            Expr::Add(items) => items.iter().map(|e| e.evaluate_f64(point)).sum::<Option<f64>>()?,
            Expr::Mul(items) => items.iter().map(|e| e.evaluate_f64(point)).product::<Option<f64>>()?,
            Expr::Neg(e) => -e.evaluate_f64(point)?,
            Expr::Div(a, b) => a.evaluate_f64(point)? / b.evaluate_f64(point)?,
            Expr::Pow(b, q) => {
                let v = b.evaluate_f64(point)?;
                if q.is_integer() {
                    v.powi(q.to_integer().to_i32()?)
                } else if v > 0.0 {
                    v.powf(to_f64(q))
                } else {
                    return None;
                }
            }
        })
    }

    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Sym(s) => {
                out.insert(s.clone());
            }
            Expr::Add(v) | Expr::Mul(v) => v.iter().for_each(|e| e.collect_symbols(out)),
            Expr::Neg(e) | Expr::Pow(e, _) => e.collect_symbols(out),
            Expr::Div(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
        }
    }

    fn has_fractional_power(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Sym(_) => false,
            Expr::Add(v) | Expr::Mul(v) => v.iter().any(|e| e.has_fractional_power()),
            Expr::Neg(e) => e.has_fractional_power(),
            Expr::Pow(e, q) => !q.is_integer() || e.has_fractional_power(),
            Expr::Div(a, b) => a.has_fractional_power() || b.has_fractional_power(),
        }
    }

    /// Zero test on the canonical form, cross-checked at random points.
    pub fn is_zero(&self) -> bool {
        let canon = match self.canonical() {
            Ok(c) => c.is_zero(),
            Err(_) => return false,
        };
        let syms: Vec<String> = self.symbols().into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let exact = !self.has_fractional_power();
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 3 && attempts < 50 {
            attempts += 1;
            if exact {
                let point: BTreeMap<String, Rational> =
                    syms.iter().map(|s| (s.clone(), Rational::new(rng.gen_range(2..10_000).into(), rng.gen_range(1..97).into()))).collect();
                match self.evaluate(&point) {
                    Ok(v) => {
                        assert_eq!(v.is_zero(), canon, "canonical form disagrees with evaluation of {self}");
                        checked += 1;
                    }
                    Err(_) => continue,
                }
            } else {
                let point: BTreeMap<String, f64> = syms.iter().map(|s| (s.clone(), rng.gen_range(0.5..3.0))).collect();
                let Some(v) = self.evaluate_f64(&point) else { continue };
                if !v.is_finite() {
                    continue;
                }
                let scale = self.magnitude_f64(&point).max(1e-300);
                let zero_here = v.abs() <= 1e-9 * scale;
                assert_eq!(zero_here, canon, "canonical form disagrees with evaluation of {self}");
                checked += 1;
            }
        }
        canon
    }

    /// Sum of absolute values of the leaves' contributions; a scale for
    /// relative floating-point comparisons.
    fn magnitude_f64(&self, point: &BTreeMap<String, f64>) -> f64 {
        match self {
            Expr::Add(items) => items.iter().map(|e| e.magnitude_f64(point)).sum(),
            Expr::Neg(e) => e.magnitude_f64(point),
            _ => self.evaluate_f64(point).map(f64::abs).unwrap_or(1.0),
        }
    }

    /// Splits `self` into `Σ coefficient(monomial) · monomial / denominator`,
    /// where each coefficient is an affine form in `unknowns`.
    pub fn linear_coefficients(&self, unknowns: &BTreeSet<String>) -> Result<LinearCoefficients, SymError> {
        linear_coefficients(&self.canonical()?, unknowns)
    }

    pub fn from_ratfunc(r: &RatFunc) -> Expr {
        let num = poly_to_expr(r.numer());
        if r.denom().is_one() {
            num
        } else {
            Expr::Div(Box::new(num), Box::new(poly_to_expr(r.denom())))
        }
    }
}

fn atom_to_expr(a: &Atom) -> Expr {
    match a {
        Atom::Sym(s) => Expr::Sym(s.to_string()),
        Atom::Root(r) => Expr::Pow(Box::new(Expr::from_ratfunc(&r.base)), r.exp.clone()),
    }
}

fn monomial_to_factors(m: &Monomial) -> Vec<Expr> {
    m.iter()
        .map(|(a, e)| if *e == 1 { atom_to_expr(a) } else { Expr::Pow(Box::new(atom_to_expr(a)), rat(*e as i64)) })
        .collect()
}

fn poly_to_expr(p: &Poly) -> Expr {
    let mut terms = Vec::new();
    for (m, c) in p.terms().rev() {
        let mut factors = Vec::new();
        let neg = c.is_negative();
        let abs = c.abs();
        if !abs.is_one() || m.is_one() {
            factors.push(Expr::Num(abs));
        }
        factors.extend(monomial_to_factors(m));
        let t = if factors.len() == 1 { factors.pop().unwrap() } else { Expr::Mul(factors) };
        terms.push(if neg { Expr::Neg(Box::new(t)) } else { t });
    }
    match terms.len() {
        0 => Expr::num(0),
        1 => terms.pop().unwrap(),
        _ => Expr::Add(terms),
    }
}

impl From<RatFunc> for Expr {
    fn from(r: RatFunc) -> Expr {
        Expr::from_ratfunc(&r)
    }
}

impl From<&RatFunc> for Expr {
    fn from(r: &RatFunc) -> Expr {
        Expr::from_ratfunc(r)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, Expr::Neg(Box::new(rhs))])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(_) => 1,
        Expr::Neg(_) => 2,
        Expr::Mul(_) | Expr::Div(..) => 3,
        Expr::Pow(..) => 4,
        Expr::Num(c) if c.is_negative() || !c.is_integer() => 3,
        _ => 5,
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec(e) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if c.is_integer() {
                    write!(f, "{}", c.numer())
                } else {
                    write!(f, "{}/{}", c.numer(), c.denom())
                }
            }
            Expr::Sym(s) => write!(f, "{s}"),
            Expr::Add(items) => {
                for (i, e) in items.iter().enumerate() {
                    match (i, e) {
                        (0, _) => write_child(f, e, 1)?,
                        (_, Expr::Neg(inner)) => {
                            write!(f, " - ")?;
                            write_child(f, inner, 3)?;
                        }
                        _ => {
                            write!(f, " + ")?;
                            write_child(f, e, 2)?;
                        }
                    }
                }
                Ok(())
            }
            Expr::Mul(items) => {
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write_child(f, e, if i == 0 { 3 } else { 4 })?;
                }
                Ok(())
            }
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, 3)
            }
            Expr::Div(a, b) => {
                write_child(f, a, 3)?;
                write!(f, "/")?;
                write_child(f, b, 4)
            }
            Expr::Pow(b, q) => {
                write_child(f, b, 5)?;
                if q.is_integer() && !q.is_negative() {
                    write!(f, "^{}", q.numer())
                } else if q.is_integer() {
                    write!(f, "^({})", q.numer())
                } else {
                    write!(f, "^({}/{})", q.numer(), q.denom())
                }
            }
        }
    }
}

/// Affine form `constant + Σ coeff·unknown`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearForm {
    pub constant: Rational,
    pub terms: BTreeMap<String, Rational>,
}

impl LinearForm {
    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.terms.is_empty()
    }

    fn add(&mut self, unknown: Option<&str>, c: &Rational) {
        match unknown {
            None => self.constant += c,
            Some(u) => {
                let slot = self.terms.entry(u.to_string()).or_insert_with(Rational::zero);
                *slot += c;
                if slot.is_zero() {
                    self.terms.remove(u);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearCoefficients {
    pub denominator: Poly,
    pub rows: BTreeMap<Monomial, LinearForm>,
}

pub fn linear_coefficients(r: &RatFunc, unknowns: &BTreeSet<String>) -> Result<LinearCoefficients, SymError> {
    for a in r.denom().atoms() {
        for u in unknowns {
            if a.depends_on(u) {
                return Err(SymError::UnknownInDenominator(u.clone()));
            }
        }
    }
    let mut rows: BTreeMap<Monomial, LinearForm> = BTreeMap::new();
    for (m, c) in r.numer().terms() {
        let mut unknown = None;
        let mut rest = Vec::new();
        for (a, e) in m.iter() {
            match a {
                Atom::Sym(s) if unknowns.contains(&**s) => {
                    if *e > 1 || unknown.is_some() {
                        return Err(SymError::Nonlinear(s.to_string()));
                    }
                    unknown = Some(s.to_string());
                }
                _ => {
                    if let Some(u) = unknowns.iter().find(|u| a.depends_on(u)) {
                        return Err(SymError::Nonlinear(u.clone()));
                    }
                    rest.push((a.clone(), *e));
                }
            }
        }
        let key = Monomial::from_pairs(rest);
        rows.entry(key).or_default().add(unknown.as_deref(), c);
    }
    rows.retain(|_, f| !f.is_zero());
    Ok(LinearCoefficients { denominator: r.denom().clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::parse::parse_expr;
    use crate::symcore::rational::ratio;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn cancellation_and_common_factor() {
        assert!(p("x1*theta2 - theta2*x1").is_zero());
        assert_eq!(p("(x1^2 - 1)/(x1 - 1)").canonical().unwrap(), p("x1 + 1").canonical().unwrap());
        assert!(!p("x1*x2 - x2").is_zero());
    }

    #[test]
    fn vajda_rhs_is_already_canonical() {
        let e = p("theta1*x1^2 + theta2*x1*x2 + w");
        let c = e.canonicalize().unwrap();
        assert_eq!(c.canonical().unwrap(), e.canonical().unwrap());
        assert_eq!(c.canonicalize().unwrap(), c);
    }

    #[test]
    fn simple_derivatives() {
        assert_eq!(p("theta1*x1^2").differentiate("x1").unwrap().canonical().unwrap(), p("2*theta1*x1").canonical().unwrap());
        assert_eq!(p("theta2*x1*x2").differentiate("theta2").unwrap().canonical().unwrap(), p("x1*x2").canonical().unwrap());
    }

    #[test]
    fn substitution_examples() {
        let mut b = BTreeMap::new();
        b.insert("x1".to_string(), p("x1s/k1"));
        assert_eq!(p("k1*x1").substitute(&b).unwrap(), p("x1s"));
        assert_eq!(p("x1").substitute(&BTreeMap::new()).unwrap(), p("x1"));
        let mut b = BTreeMap::new();
        b.insert("w".to_string(), p("ws - x1*x2*(theta2 - 1)"));
        b.insert("theta2".to_string(), p("1"));
        let got = p("w + theta2*x1*x2").substitute(&b).unwrap();
        assert_eq!(got.canonical().unwrap(), p("ws + x1*x2*(2 - theta2)").canonical().unwrap());
    }

    #[test]
    fn evaluation() {
        let mut pt = BTreeMap::new();
        pt.insert("x1".to_string(), rat(2));
        pt.insert("x2".to_string(), rat(3));
        assert_eq!(p("x1*x2").evaluate(&pt).unwrap(), rat(6));
        let mut pt = BTreeMap::new();
        pt.insert("G".to_string(), rat(1));
        pt.insert("alpha".to_string(), rat(1));
        assert_eq!(p("G^2/(alpha^2 + G^2)").evaluate(&pt).unwrap(), ratio(1, 2));
        assert_eq!(p("x/y").evaluate(&BTreeMap::from([("x".into(), rat(1)), ("y".into(), rat(0))])), Err(SymError::Pole));
        assert_eq!(p("x").evaluate(&BTreeMap::new()), Err(SymError::Unbound("x".into())));
    }

    #[test]
    fn linear_coefficient_extraction() {
        let u: BTreeSet<String> = ["c1", "c2"].iter().map(|s| s.to_string()).collect();
        let lc = p("c1*x1 + c2*x1*x2").linear_coefficients(&u).unwrap();
        assert_eq!(lc.rows.len(), 2);
        let x1 = Monomial::atom(Atom::sym("x1"));
        assert_eq!(lc.rows[&x1].terms, BTreeMap::from([("c1".to_string(), rat(1))]));
        let lc = p("(c1 - c2)*x1^2").linear_coefficients(&u).unwrap();
        let x1sq = Monomial::atom_pow(Atom::sym("x1"), 2);
        assert_eq!(lc.rows[&x1sq].terms, BTreeMap::from([("c1".to_string(), rat(1)), ("c2".to_string(), rat(-1))]));
        assert_eq!(p("c1*c2").linear_coefficients(&u), Err(SymError::Nonlinear("c2".into())));
        assert_eq!(p("x/c1").linear_coefficients(&u), Err(SymError::UnknownInDenominator("c1".into())));
    }

    #[test]
    fn fractional_powers_zero_test() {
        assert!(p("G^1.7*G - G^2.7").is_zero());
        assert!(!p("G^1.7 - G^2").is_zero());
    }

    #[test]
    fn display_round_trips() {
        for s in ["x1 - 2*x2^3/(y + 1)", "-(a + b)*c", "G^(17/10)/(a^(17/10) + G^(17/10))", "1/2*x - 3", "x^(-2)"] {
            let e = p(s);
            let again = p(&e.to_string());
            assert_eq!(again.canonical().unwrap(), e.canonical().unwrap(), "{s} -> {e}");
            let c = e.canonicalize().unwrap();
            assert_eq!(p(&c.to_string()).canonical().unwrap(), e.canonical().unwrap(), "{s} -> {c}");
        }
    }
}
