//! Canonical rational functions: `num / den` with `gcd(num, den) = 1` and a
//! monic denominator. Two rational functions are equal iff their canonical
//! forms are structurally equal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};

use super::gcd::{gcd, lcm};
use super::poly::{Atom, Poly, RootAtom};
use super::rational::{floor_i64, pow_rational, to_f64, Rational};
use super::SymError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RatFunc {
    num: Poly,
    den: Poly,
}

impl Default for RatFunc {
    fn default() -> Self {
        RatFunc::zero()
    }
}

impl RatFunc {
    pub fn zero() -> RatFunc {
        RatFunc { num: Poly::zero(), den: Poly::one() }
    }

    pub fn one() -> RatFunc {
        RatFunc::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> RatFunc {
        RatFunc { num: Poly::constant(c), den: Poly::one() }
    }

    pub fn int(n: i64) -> RatFunc {
        RatFunc::constant(super::rational::rat(n))
    }

    pub fn sym(name: &str) -> RatFunc {
        RatFunc { num: Poly::sym(name), den: Poly::one() }
    }

    pub fn atom(a: Atom) -> RatFunc {
        RatFunc { num: Poly::atom(a), den: Poly::one() }
    }

    pub fn poly(p: Poly) -> RatFunc {
        RatFunc { num: p, den: Poly::one() }
    }

    /// Canonical quotient; errors on a zero denominator.
    pub fn from_parts(num: Poly, den: Poly) -> Result<RatFunc, SymError> {
        if den.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Self::normalize(num, den))
    }

    fn normalize(num: Poly, den: Poly) -> RatFunc {
        if num.is_zero() {
            return RatFunc::zero();
        }
        if let Some(c) = den.constant_value() {
            if c.is_one() {
                return RatFunc { num, den };
            }
            return RatFunc { num: num.scale(&c.recip()), den: Poly::one() };
        }
        let g = gcd(&num, &den);
        let (num, den) = if g.is_one() {
            (num, den)
        } else {
            (num.div_exact(&g).expect("gcd divides"), den.div_exact(&g).expect("gcd divides"))
        };
        let lc = den.leading_coefficient();
        if lc.is_one() {
            RatFunc { num, den }
        } else {
            let inv = lc.recip();
            RatFunc { num: num.scale(&inv), den: den.scale(&inv) }
        }
    }

    pub fn numer(&self) -> &Poly {
        &self.num
    }

    pub fn denom(&self) -> &Poly {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.num.is_one() && self.den.is_one()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_one()
    }

    pub fn constant_value(&self) -> Option<Rational> {
        if self.den.is_one() {
            self.num.constant_value()
        } else {
            None
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    pub fn add(&self, other: &RatFunc) -> RatFunc {
        self.add_raw(other).reduce_roots()
    }

    fn add_raw(&self, other: &RatFunc) -> RatFunc {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den.is_one() && other.den.is_one() {
            return RatFunc { num: self.num.add(&other.num), den: Poly::one() };
        }
        if self.den == other.den {
            return Self::normalize(self.num.add(&other.num), self.den.clone());
        }
        if other.den.is_one() {
            return RatFunc { num: self.num.add(&other.num.mul(&self.den)), den: self.den.clone() };
        }
        if self.den.is_one() {
            return RatFunc { num: other.num.add(&self.num.mul(&other.den)), den: other.den.clone() };
        }
        let g = gcd(&self.den, &other.den);
        let d1 = self.den.div_exact(&g).unwrap();
        let d2 = other.den.div_exact(&g).unwrap();
        let num = self.num.mul(&d2).add(&other.num.mul(&d1));
        let den = self.den.mul(&d2);
        if g.is_one() {
            // gcd(num, d1*d2) = 1 already; only the shared part can cancel.
            return Self::normalize_den_only(num, den);
        }
        Self::normalize(num, den)
    }

    /// Rewrites `r^k` with `k ≥ b` for roots `r = B^(1/b)` and clears
    /// monomial root factors from the denominator.
    fn reduce_roots(self) -> RatFunc {
        fn order(a: &Atom) -> Option<u32> {
            match a {
                Atom::Root(r) if r.algebraic => r.exp.denom().to_u32(),
                _ => None,
            }
        }
        let excess = |p: &Poly| p.terms().any(|(m, _)| m.iter().any(|(a, e)| order(a).is_some_and(|b| *e >= b)));
        let content = self.den.monomial_content();
        let in_den: Vec<(Atom, u32)> =
            content.iter().filter_map(|(a, e)| order(a).filter(|b| e % b != 0).map(|b| (a.clone(), b - e % b))).collect();
        if in_den.is_empty() && !excess(&self.num) && !excess(&self.den) {
            return self;
        }
        let mut num = self.num;
        let mut den = self.den;
        for (a, e) in in_den {
            let m = super::poly::Monomial::atom_pow(a, e);
            num = num.mul_monomial(&m, &Rational::one());
            den = den.mul_monomial(&m, &Rational::one());
        }
        // One root per pass; the arithmetic below reduces any others.
        let reduce = |p: &Poly| -> RatFunc {
            let found = p.atoms().into_iter().find_map(|a| order(&a).filter(|b| p.degree_in(&a) >= *b).map(|b| (a, b)));
            let Some((a, b)) = found else { return RatFunc::poly(p.clone()) };
            let Atom::Root(r) = &a else { unreachable!() };
            let mut acc = RatFunc::zero();
            for (k, c) in p.coefficients_in(&a).into_iter().enumerate() {
                let k = k as u32;
                let lifted = r.base.pow(i64::from(k / b)).expect("root base is nonzero");
                acc = acc.add(&lifted.mul(&RatFunc::poly(Poly::atom(a.clone()).pow(k % b).mul(&c))));
            }
            acc
        };
        let n = reduce(&num);
        let d = reduce(&den);
        n.div(&d).expect("denominator stays nonzero")
    }

    fn normalize_den_only(num: Poly, den: Poly) -> RatFunc {
        if num.is_zero() {
            return RatFunc::zero();
        }
        let lc = den.leading_coefficient();
        if lc.is_one() {
            RatFunc { num, den }
        } else {
            let inv = lc.recip();
            RatFunc { num: num.scale(&inv), den: den.scale(&inv) }
        }
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc { num: self.num.neg(), den: self.den.clone() }
    }

    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> RatFunc {
        if c.is_zero() {
            return RatFunc::zero();
        }
        RatFunc { num: self.num.scale(c), den: self.den.clone() }
    }

    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        self.mul_raw(other).reduce_roots()
    }

    fn mul_raw(&self, other: &RatFunc) -> RatFunc {
        if self.is_zero() || other.is_zero() {
            return RatFunc::zero();
        }
        if let Some(c) = other.constant_value() {
            return self.scale(&c);
        }
        if let Some(c) = self.constant_value() {
            return other.scale(&c);
        }
        if self.den.is_one() && other.den.is_one() {
            return RatFunc { num: self.num.mul(&other.num), den: Poly::one() };
        }
        let g1 = gcd(&self.num, &other.den);
        let g2 = gcd(&other.num, &self.den);
        let n1 = self.num.div_exact(&g1).unwrap();
        let d2 = other.den.div_exact(&g1).unwrap();
        let n2 = other.num.div_exact(&g2).unwrap();
        let d1 = self.den.div_exact(&g2).unwrap();
        Self::normalize_den_only(n1.mul(&n2), d1.mul(&d2))
    }

    pub fn mul_poly(&self, p: &Poly) -> RatFunc {
        self.mul(&RatFunc::poly(p.clone()))
    }

    pub fn recip(&self) -> Result<RatFunc, SymError> {
        if self.is_zero() {
            return Err(SymError::DivisionByZero);
        }
        Ok(Self::normalize_den_only(self.den.clone(), self.num.clone()).reduce_roots())
    }

    pub fn div(&self, other: &RatFunc) -> Result<RatFunc, SymError> {
        Ok(self.mul(&other.recip()?))
    }

    pub fn pow(&self, e: i64) -> Result<RatFunc, SymError> {
        if e == 0 {
            return Ok(RatFunc::one());
        }
        let base = if e < 0 { self.recip()? } else { self.clone() };
        let k = e.unsigned_abs() as u32;
        Ok(RatFunc { num: base.num.pow(k), den: base.den.pow(k) }.reduce_roots())
    }

    /// `self^q` for rational `q`. Non-integer exponents produce an opaque
    /// root atom for the fractional part.
    pub fn pow_rational(&self, q: &Rational) -> Result<RatFunc, SymError> {
        self.pow_root(q, false)
    }

    /// Like `pow_rational`, but the root is algebraic: its `b`-th power
    /// reduces back to the base.
    pub fn pow_algebraic(&self, q: &Rational) -> Result<RatFunc, SymError> {
        self.pow_root(q, true)
    }

    fn pow_root(&self, q: &Rational, algebraic: bool) -> Result<RatFunc, SymError> {
        if q.is_integer() {
            let e = q.to_integer().to_i64().ok_or(SymError::ExponentTooLarge)?;
            return self.pow(e);
        }
        if self.is_zero() {
            if q.is_negative() {
                return Err(SymError::DivisionByZero);
            }
            return Ok(RatFunc::zero());
        }
        if let Some(c) = self.constant_value() {
            if let Some(v) = pow_rational(&c, q) {
                return Ok(RatFunc::constant(v));
            }
        }
        let whole = floor_i64(q).ok_or(SymError::ExponentTooLarge)?;
        let frac = q - Rational::from_integer(whole.into());
        if !algebraic {
            let root = Atom::Root(Arc::new(RootAtom { base: self.clone(), exp: frac, algebraic }));
            return Ok(self.pow(whole)?.mul(&RatFunc::atom(root)));
        }
        let a = frac.numer().to_i64().ok_or(SymError::ExponentTooLarge)?;
        let exp = Rational::new(1.into(), frac.denom().clone());
        let root = Atom::Root(Arc::new(RootAtom { base: self.clone(), exp, algebraic }));
        Ok(self.pow(whole)?.mul(&RatFunc::atom(root).pow(a)?))
    }

    pub fn depends_on(&self, name: &str) -> bool {
        self.num.atoms().iter().chain(self.den.atoms().iter()).any(|a| a.depends_on(name))
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut a = self.num.atoms();
        a.extend(self.den.atoms());
        a
    }

    pub fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        for a in self.atoms() {
            a.symbols(out);
        }
    }

    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    /// Derivative of an atom with respect to the named symbol.
    pub fn atom_derivative(a: &Atom, name: &str) -> RatFunc {
        match a {
            Atom::Sym(s) => {
                if &**s == name {
                    RatFunc::one()
                } else {
                    RatFunc::zero()
                }
            }
            Atom::Root(r) => {
                if !r.base.depends_on(name) {
                    return RatFunc::zero();
                }
                // d(b^q) = q b^q b'/b
                let db = r.base.diff(name);
                let ratio = db.div(&r.base).expect("root base is nonzero");
                ratio.mul(&RatFunc::atom(a.clone())).scale(&r.exp)
            }
        }
    }

    fn poly_diff(p: &Poly, name: &str) -> RatFunc {
        let mut out = RatFunc::zero();
        let mut poly_part = Poly::zero();
        for a in p.atoms() {
            let da = Self::atom_derivative(&a, name);
            if da.is_zero() {
                continue;
            }
            let dp = p.diff_atom(&a);
            if let Some(c) = da.constant_value() {
                poly_part = poly_part.add(&dp.scale(&c));
            } else {
                out = out.add(&RatFunc::poly(dp).mul(&da));
            }
        }
        out.add(&RatFunc::poly(poly_part))
    }

    /// Exact partial derivative.
    pub fn diff(&self, name: &str) -> RatFunc {
        if !self.depends_on(name) {
            return RatFunc::zero();
        }
        let dn = Self::poly_diff(&self.num, name);
        if self.den.is_one() {
            return dn;
        }
        let dd = Self::poly_diff(&self.den, name);
        let den = RatFunc::poly(self.den.clone());
        // (n' d - n d') / d^2
        let top = dn.mul(&den).sub(&dd.mul_poly(&self.num));
        top.div(&den.mul(&den)).expect("denominator nonzero")
    }

    /// Simultaneous substitution of named symbols.
    pub fn substitute(&self, bindings: &BTreeMap<String, RatFunc>) -> RatFunc {
        if bindings.is_empty() {
            return self.clone();
        }
        let mut memo: HashMap<Atom, RatFunc> = HashMap::new();
        let n = Self::subst_poly(&self.num, bindings, &mut memo);
        if self.den.is_one() {
            return n;
        }
        let d = Self::subst_poly(&self.den, bindings, &mut memo);
        n.div(&d).expect("substitution produced a zero denominator")
    }

    /// Like [`substitute`](Self::substitute) but reports poles.
    pub fn try_substitute(&self, bindings: &BTreeMap<String, RatFunc>) -> Result<RatFunc, SymError> {
        let mut memo: HashMap<Atom, RatFunc> = HashMap::new();
        let n = Self::subst_poly(&self.num, bindings, &mut memo);
        let d = Self::subst_poly(&self.den, bindings, &mut memo);
        n.div(&d)
    }

    fn subst_atom(a: &Atom, bindings: &BTreeMap<String, RatFunc>, memo: &mut HashMap<Atom, RatFunc>) -> RatFunc {
        if let Some(v) = memo.get(a) {
            return v.clone();
        }
        let v = match a {
            Atom::Sym(s) => bindings.get(&**s).cloned().unwrap_or_else(|| RatFunc::atom(a.clone())),
            Atom::Root(r) => {
                let mut syms = BTreeSet::new();
                r.base.collect_symbols(&mut syms);
                if syms.iter().any(|s| bindings.contains_key(s)) {
                    let base = r.base.substitute(bindings);
                    base.pow_root(&r.exp, r.algebraic).expect("root of substituted base")
                } else {
                    RatFunc::atom(a.clone())
                }
            }
        };
        memo.insert(a.clone(), v.clone());
        v
    }

    /// Substitutes into a polynomial over a common denominator so that only
    /// one gcd is needed at the end.
    fn subst_poly(p: &Poly, bindings: &BTreeMap<String, RatFunc>, memo: &mut HashMap<Atom, RatFunc>) -> RatFunc {
        let atoms = p.atoms();
        let mut values: BTreeMap<Atom, RatFunc> = BTreeMap::new();
        for a in atoms.iter() {
            values.insert(a.clone(), Self::subst_atom(a, bindings, memo));
        }
        if values.values().all(|v| v.den.is_one()) {
            let polys: BTreeMap<Atom, Poly> = values.into_iter().map(|(a, v)| (a, v.num)).collect();
            return RatFunc::poly(p.map_atoms(&mut |a| polys.get(a).cloned().unwrap_or_else(|| Poly::atom(a.clone()))));
        }
        // Common denominator: prod over atoms of den^maxdeg.
        let maxdeg: BTreeMap<Atom, u32> = atoms.iter().map(|a| (a.clone(), p.degree_in(a))).collect();
        let mut total_den = Poly::one();
        for (a, v) in values.iter() {
            if !v.den.is_one() {
                total_den = total_den.mul(&v.den.pow(maxdeg[a]));
            }
        }
        let mut pow_cache: HashMap<(Atom, u32, bool), Poly> = HashMap::new();
        let mut num = Poly::zero();
        for (m, c) in p.terms() {
            let mut t = Poly::constant(c.clone());
            for (a, v) in values.iter() {
                let e = m.exponent(a);
                let v_num = pow_cache
                    .entry((a.clone(), e, true))
                    .or_insert_with(|| v.num.pow(e))
                    .clone();
                t = t.mul(&v_num);
                if !v.den.is_one() {
                    let rest = maxdeg[a] - e;
                    let v_den = pow_cache
                        .entry((a.clone(), rest, false))
                        .or_insert_with(|| v.den.pow(rest))
                        .clone();
                    t = t.mul(&v_den);
                }
            }
            num = num.add(&t);
        }
        RatFunc::from_parts(num, total_den).expect("nonzero denominators")
    }

    /// Exact value at a point; root atoms must evaluate to rationals.
    pub fn evaluate(&self, point: &BTreeMap<String, Rational>) -> Result<Rational, SymError> {
        self.evaluate_with(&mut |a| match a {
            Atom::Sym(s) => point.get(&**s).cloned().ok_or_else(|| SymError::Unbound(s.to_string())),
            Atom::Root(r) => {
                let b = r.base.evaluate(point)?;
                pow_rational(&b, &r.exp).ok_or(SymError::IrrationalPower)
            }
        })
    }

    pub fn evaluate_with(&self, value_of: &mut impl FnMut(&Atom) -> Result<Rational, SymError>) -> Result<Rational, SymError> {
        let mut err = None;
        let mut cache: HashMap<Atom, Rational> = HashMap::new();
        let mut lookup = |a: &Atom| -> Option<Rational> {
            if let Some(v) = cache.get(a) {
                return Some(v.clone());
            }
            match value_of(a) {
                Ok(v) => {
                    cache.insert(a.clone(), v.clone());
                    Some(v)
                }
                Err(e) => {
                    err = Some(e);
                    None
                }
            }
        };
        let n = self.num.evaluate_with(&mut lookup);
        let d = if n.is_some() { self.den.evaluate_with(&mut lookup) } else { None };
        if let Some(e) = err {
            return Err(e);
        }
        let (n, d) = (n.unwrap(), d.unwrap());
        if d.is_zero() {
            return Err(SymError::Pole);
        }
        Ok(n / d)
    }

    pub fn evaluate_f64(&self, value_of: &mut impl FnMut(&str) -> Option<f64>) -> Option<f64> {
        let mut lookup = |a: &Atom| -> Option<f64> {
            match a {
                Atom::Sym(s) => value_of(s),
                Atom::Root(r) => {
                    let b = r.base.evaluate_f64(value_of)?;
                    if b <= 0.0 {
                        return None;
                    }
                    Some(b.powf(to_f64(&r.exp)))
                }
            }
        };
        let n = self.num.evaluate_f64_with(&mut lookup)?;
        let d = self.den.evaluate_f64_with(&mut lookup)?;
        if d == 0.0 {
            return None;
        }
        Some(n / d)
    }

    pub fn lcm_denominator(items: &[&RatFunc]) -> Poly {
        let mut l = Poly::one();
        let mut seen: BTreeSet<&Poly> = BTreeSet::new();
        for r in items {
            if r.den.is_one() || !seen.insert(&r.den) {
                continue;
            }
            l = lcm(&l, &r.den);
        }
        l
    }

    /// Numerator after scaling to the common denominator `common`
    /// (which must be a multiple of `self.denom()`).
    pub fn numerator_over(&self, common: &Poly) -> Poly {
        if &self.den == common {
            return self.num.clone();
        }
        let factor = common.div_exact(&self.den).expect("common denominator is a multiple");
        self.num.mul(&factor)
    }

    /// Splits into a sum of terms `coefficient * monomial` over a shared
    /// denominator, grouped by the monomial in atoms outside `keep`.
    pub fn map_coefficients(&self, f: impl Fn(&Rational) -> Rational) -> RatFunc {
        let num = Poly::from_terms(self.num.terms().map(|(m, c)| (m.clone(), f(c))));
        Self::normalize(num, self.den.clone())
    }
}

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_one() {
            return write!(f, "{}", self.num);
        }
        let num = if self.num.len() > 1 { format!("({})", self.num) } else { format!("{}", self.num) };
        let den = if self.den.len() > 1 || !self.den.leading().is_some_and(|(_, c)| c.is_one()) {
            format!("({})", self.den)
        } else {
            format!("{}", self.den)
        };
        write!(f, "{num}/{den}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::rational::{rat, ratio};

    fn s(n: &str) -> RatFunc {
        RatFunc::sym(n)
    }

    #[test]
    fn roots_reduce() {
        let k = s("k").add(&RatFunc::one());
        let half = ratio(1, 2);
        let r = k.pow_algebraic(&half).unwrap();
        assert_eq!(r.mul(&r), k);
        assert_eq!(r.recip().unwrap(), r.div(&k).unwrap());
        assert_eq!(k.pow_algebraic(&ratio(3, 2)).unwrap().pow(2).unwrap(), k.pow(3).unwrap());
        let c = s("k").pow_algebraic(&ratio(2, 3)).unwrap();
        assert_eq!(c.mul(&s("k").pow_algebraic(&ratio(1, 3)).unwrap()), s("k"));
        // Formal powers stay opaque.
        let f = s("k").pow_rational(&half).unwrap();
        assert_ne!(f.mul(&f), s("k"));
        assert_eq!(r.mul(&s("x")).div(&r).unwrap(), s("x"));
    }

    #[test]
    fn common_factor_cancels() {
        let x = s("x1");
        let num = x.mul(&x).sub(&RatFunc::one());
        let den = x.sub(&RatFunc::one());
        let q = num.div(&den).unwrap();
        assert_eq!(q, x.add(&RatFunc::one()));
    }

    #[test]
    fn derivative_of_hill_term() {
        let g = s("G");
        let a = s("alpha");
        let e = g.mul(&g).div(&a.mul(&a).add(&g.mul(&g))).unwrap();
        let d = e.diff("G");
        let expect = g.mul(&a.mul(&a)).scale(&rat(2)).div(&a.mul(&a).add(&g.mul(&g)).pow(2).unwrap()).unwrap();
        assert_eq!(d, expect);
    }

    #[test]
    fn fractional_power_differentiates() {
        let g = s("G");
        let p = g.pow_rational(&ratio(17, 10)).unwrap();
        let d = p.diff("G");
        // d G^(17/10) = 17/10 G^(7/10)
        let expect = g.pow_rational(&ratio(7, 10)).unwrap().scale(&ratio(17, 10));
        assert_eq!(d, expect);
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = s("x").add(&s("y").scale(&rat(2)));
        let mut b = BTreeMap::new();
        b.insert("x".to_string(), s("y"));
        b.insert("y".to_string(), s("x"));
        assert_eq!(e.substitute(&b), s("y").add(&s("x").scale(&rat(2))));
    }

    #[test]
    fn scaling_substitution_cancels() {
        let e = s("k1").mul(&s("x1"));
        let mut b = BTreeMap::new();
        b.insert("x1".to_string(), s("x1s").div(&s("k1")).unwrap());
        assert_eq!(e.substitute(&b), s("x1s"));
    }

    #[test]
    fn zero_denominator_rejected() {
        assert_eq!(s("x").div(&RatFunc::zero()), Err(SymError::DivisionByZero));
    }
}
