//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Variables are [`Atom`]s: either a named symbol or an opaque fractional
//! power `base^q` with `0 < q < 1`. Terms are kept in a `BTreeMap` keyed by
//! [`Monomial`] under graded-lex order, so the last key is the leading term.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};
use smallvec::SmallVec;

use super::ratfunc::RatFunc;
use super::rational::Rational;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RootAtom {
    pub base: RatFunc,
    /// Strictly between 0 and 1.
    pub exp: Rational,
    /// `base^(1/b)` obeying `r^b = base`. Formal roots carry no relation.
    pub algebraic: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Sym(Arc<str>),
    Root(Arc<RootAtom>),
}

impl Atom {
    pub fn sym(name: &str) -> Atom {
        Atom::Sym(Arc::from(name))
    }

    pub fn name(&self) -> Option<&str> {
        match self {
            Atom::Sym(s) => Some(s),
            Atom::Root(_) => None,
        }
    }

    /// Named symbols this atom depends on.
    pub fn symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Atom::Sym(s) => {
                out.insert(s.to_string());
            }
            Atom::Root(r) => r.base.collect_symbols(out),
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Atom::Sym(s) => &**s == name,
            Atom::Root(r) => r.base.depends_on(name),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Sym(s) => write!(f, "{s}"),
            Atom::Root(r) => write!(f, "({})^({})", r.base, r.exp),
        }
    }
}

/// Product of atom powers, sorted by atom, exponents strictly positive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Monomial(SmallVec<[(Atom, u32); 4]>);

impl Monomial {
    pub fn one() -> Monomial {
        Monomial(SmallVec::new())
    }

    pub fn atom(a: Atom) -> Monomial {
        Self::atom_pow(a, 1)
    }

    pub fn atom_pow(a: Atom, e: u32) -> Monomial {
        if e == 0 {
            return Monomial::one();
        }
        let mut v = SmallVec::new();
        v.push((a, e));
        Monomial(v)
    }

    pub fn from_pairs(mut pairs: Vec<(Atom, u32)>) -> Monomial {
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        for (a, e) in pairs {
            if e == 0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.0 == a => last.1 += e,
                _ => out.push((a, e)),
            }
        }
        Monomial(out)
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Atom, u32)> {
        self.0.iter()
    }

    pub fn exponent(&self, a: &Atom) -> u32 {
        self.0.iter().find(|(x, _)| x == a).map(|(_, e)| *e).unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: SmallVec<[(Atom, u32); 4]> = SmallVec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                Ordering::Less => {
                    out.push(self.0[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(other.0[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((self.0[i].0.clone(), self.0[i].1 + other.0[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(self.0[i..].iter().cloned());
        out.extend(other.0[j..].iter().cloned());
        Monomial(out)
    }

    /// `self / other` if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut out: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        let mut j = 0;
        for (a, e) in self.0.iter() {
            if j < other.0.len() && other.0[j].0 < *a {
                return None;
            }
            if j < other.0.len() && other.0[j].0 == *a {
                let oe = other.0[j].1;
                j += 1;
                match e.cmp(&oe) {
                    Ordering::Less => return None,
                    Ordering::Equal => {}
                    Ordering::Greater => out.push((a.clone(), e - oe)),
                }
            } else {
                out.push((a.clone(), *e));
            }
        }
        if j < other.0.len() {
            return None;
        }
        Some(Monomial(out))
    }

    pub fn gcd(&self, other: &Monomial) -> Monomial {
        let mut out: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        for (a, e) in self.0.iter() {
            let oe = other.exponent(a);
            if oe > 0 {
                out.push((a.clone(), (*e).min(oe)));
            }
        }
        Monomial(out)
    }

    /// Splits off the power of `a`: `(self / a^k, k)`.
    pub fn split(&self, a: &Atom) -> (Monomial, u32) {
        let mut out: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        let mut k = 0;
        for (x, e) in self.0.iter() {
            if x == a {
                k = *e;
            } else {
                out.push((x.clone(), *e));
            }
        }
        (Monomial(out), k)
    }

    /// Keeps only the atoms selected by `keep`.
    pub fn restrict(&self, keep: impl Fn(&Atom) -> bool) -> (Monomial, Monomial) {
        let mut yes: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        let mut no: SmallVec<[(Atom, u32); 4]> = SmallVec::new();
        for p in self.0.iter() {
            if keep(&p.0) {
                yes.push(p.clone());
            } else {
                no.push(p.clone());
            }
        }
        (Monomial(yes), Monomial(no))
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let d = self.degree().cmp(&other.degree());
        if d != Ordering::Equal {
            return d;
        }
        // Lex with earlier atoms more significant.
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            match a.0.cmp(&b.0) {
                Ordering::Less => return Ordering::Greater,
                Ordering::Greater => return Ordering::Less,
                Ordering::Equal => match a.1.cmp(&b.1) {
                    Ordering::Equal => {}
                    o => return o,
                },
            }
        }
        self.0.len().cmp(&other.0.len()).reverse()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        for (i, (a, e)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            write!(f, "{a}")?;
            if *e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly::default()
    }

    pub fn one() -> Poly {
        Poly::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn atom(a: Atom) -> Poly {
        Poly::term(Monomial::atom(a), Rational::one())
    }

    pub fn sym(name: &str) -> Poly {
        Poly::atom(Atom::sym(name))
    }

    pub fn term(m: Monomial, c: Rational) -> Poly {
        let mut p = Poly::zero();
        if !c.is_zero() {
            p.terms.insert(m, c);
        }
        p
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, Rational)>) -> Poly {
        let mut p = Poly::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms.get(&Monomial::one()).is_some_and(|c| c.is_one())
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty() || (self.terms.len() == 1 && self.terms.contains_key(&Monomial::one()))
    }

    pub fn constant_value(&self) -> Option<Rational> {
        if self.is_zero() {
            return Some(Rational::zero());
        }
        if self.is_constant() {
            return self.terms.get(&Monomial::one()).cloned();
        }
        None
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Monomial, Rational)> {
        self.terms.into_iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn leading(&self) -> Option<(&Monomial, &Rational)> {
        self.terms.iter().next_back()
    }

    pub fn leading_coefficient(&self) -> Rational {
        self.leading().map(|(_, c)| c.clone()).unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, scale: &Rational, shift: &Monomial) {
        if scale.is_zero() {
            return;
        }
        for (m, c) in other.terms.iter() {
            self.add_term(m.mul(shift), c * scale);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let (mut big, small) = if self.len() >= other.len() { (self.clone(), other) } else { (other.clone(), self) };
        for (m, c) in small.terms.iter() {
            big.add_term(m.clone(), c.clone());
        }
        big
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in other.terms.iter() {
            out.add_term(m.clone(), -c);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect() }
    }

    pub fn scale(&self, s: &Rational) -> Poly {
        if s.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect() }
    }

    pub fn mul_monomial(&self, m: &Monomial, s: &Rational) -> Poly {
        if s.is_zero() {
            return Poly::zero();
        }
        Poly { terms: self.terms.iter().map(|(k, c)| (k.mul(m), c * s)).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        if let Some(c) = other.constant_value() {
            return self.scale(&c);
        }
        if let Some(c) = self.constant_value() {
            return other.scale(&c);
        }
        let mut acc: BTreeMap<Monomial, Rational> = BTreeMap::new();
        for (m1, c1) in self.terms.iter() {
            for (m2, c2) in other.terms.iter() {
                let m = m1.mul(m2);
                let c = c1 * c2;
                match acc.entry(m) {
                    std::collections::btree_map::Entry::Vacant(v) => {
                        v.insert(c);
                    }
                    std::collections::btree_map::Entry::Occupied(mut o) => {
                        *o.get_mut() += c;
                    }
                }
            }
        }
        acc.retain(|_, c| !c.is_zero());
        Poly { terms: acc }
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut result = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Partial derivative treating `a` as an independent variable.
    pub fn diff_atom(&self, a: &Atom) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in self.terms.iter() {
            let (rest, k) = m.split(a);
            if k == 0 {
                continue;
            }
            let m2 = rest.mul(&Monomial::atom_pow(a.clone(), k - 1));
            out.add_term(m2, c * Rational::from_integer(k.into()));
        }
        out
    }

    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        for m in self.terms.keys() {
            for (a, _) in m.iter() {
                out.insert(a.clone());
            }
        }
        out
    }

    pub fn contains_atom(&self, a: &Atom) -> bool {
        self.terms.keys().any(|m| m.exponent(a) > 0)
    }

    pub fn degree_in(&self, a: &Atom) -> u32 {
        self.terms.keys().map(|m| m.exponent(a)).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Coefficients of `a^0, a^1, …` as polynomials free of `a`.
    pub fn coefficients_in(&self, a: &Atom) -> Vec<Poly> {
        let deg = self.degree_in(a) as usize;
        let mut out = vec![Poly::zero(); deg + 1];
        for (m, c) in self.terms.iter() {
            let (rest, k) = m.split(a);
            out[k as usize].add_term(rest, c.clone());
        }
        out
    }

    pub fn from_coefficients_in(a: &Atom, coeffs: &[Poly]) -> Poly {
        let mut out = Poly::zero();
        for (k, c) in coeffs.iter().enumerate() {
            out.add_scaled(c, &Rational::one(), &Monomial::atom_pow(a.clone(), k as u32));
        }
        out
    }

    /// Greatest monomial dividing every term.
    pub fn monomial_content(&self) -> Monomial {
        let mut it = self.terms.keys();
        let Some(first) = it.next() else { return Monomial::one() };
        it.fold(first.clone(), |acc, m| acc.gcd(m))
    }

    /// Exact division; `None` if `divisor` does not divide `self`.
    pub fn div_exact(&self, divisor: &Poly) -> Option<Poly> {
        if divisor.is_zero() {
            return None;
        }
        if let Some(c) = divisor.constant_value() {
            return Some(self.scale(&c.recip()));
        }
        if divisor.is_monomial() {
            let (dm, dc) = divisor.leading().unwrap();
            let inv = dc.recip();
            let mut out = BTreeMap::new();
            for (m, c) in self.terms.iter() {
                out.insert(m.div(dm)?, c * &inv);
            }
            return Some(Poly { terms: out });
        }
        let (lm, lc) = divisor.leading().map(|(m, c)| (m.clone(), c.clone())).unwrap();
        let inv = lc.recip();
        let mut rem = self.clone();
        let mut quot = Poly::zero();
        while let Some((m, c)) = rem.leading().map(|(m, c)| (m.clone(), c.clone())) {
            let qm = m.div(&lm)?;
            let qc = c * &inv;
            rem.add_scaled(divisor, &-qc.clone(), &qm);
            quot.add_term(qm, qc);
        }
        Some(quot)
    }

    /// Divides by the leading coefficient.
    pub fn monic(&self) -> Poly {
        let lc = self.leading_coefficient();
        if lc.is_zero() || lc.is_one() {
            return self.clone();
        }
        self.scale(&lc.recip())
    }

    /// Replaces atom `a` by polynomial `value`.
    pub fn substitute_atom(&self, a: &Atom, value: &Poly) -> Poly {
        let coeffs = self.coefficients_in(a);
        // Horner.
        let mut out = Poly::zero();
        for c in coeffs.iter().rev() {
            out = out.mul(value).add(c);
        }
        out
    }

    pub fn evaluate_with(&self, mut value_of: impl FnMut(&Atom) -> Option<Rational>) -> Option<Rational> {
        let mut cache: BTreeMap<Atom, Rational> = BTreeMap::new();
        let mut total = Rational::zero();
        for (m, c) in self.terms.iter() {
            let mut t = c.clone();
            for (a, e) in m.iter() {
                let v = match cache.get(a) {
                    Some(v) => v.clone(),
                    None => {
                        let v = value_of(a)?;
                        cache.insert(a.clone(), v.clone());
                        v
                    }
                };
                t *= num_traits::pow(v, *e as usize);
            }
            total += t;
        }
        Some(total)
    }

    pub fn evaluate_f64_with(&self, value_of: &mut impl FnMut(&Atom) -> Option<f64>) -> Option<f64> {
        let mut total = 0.0;
        for (m, c) in self.terms.iter() {
            let mut t = super::rational::to_f64(c);
            for (a, e) in m.iter() {
                t *= value_of(a)?.powi(*e as i32);
            }
            total += t;
        }
        Some(total)
    }

    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom) -> Poly) -> Poly {
        let mut cache: BTreeMap<Atom, Poly> = BTreeMap::new();
        let mut out = Poly::zero();
        for (m, c) in self.terms.iter() {
            let mut t = Poly::constant(c.clone());
            for (a, e) in m.iter() {
                let v = cache.entry(a.clone()).or_insert_with(|| f(a)).clone();
                t = t.mul(&v.pow(*e));
            }
            out = out.add(&t);
        }
        out
    }

    /// Largest absolute coefficient sign normalisation helper.
    pub fn leading_is_negative(&self) -> bool {
        self.leading().is_some_and(|(_, c)| c.is_negative())
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        // Highest term first.
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_one() {
                write_coeff(f, &abs)?;
            } else if abs.is_one() {
                write!(f, "{m}")?;
            } else {
                write_coeff(f, &abs)?;
                write!(f, "*{m}")?;
            }
        }
        Ok(())
    }
}

fn write_coeff(f: &mut fmt::Formatter<'_>, c: &Rational) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        write!(f, "{}/{}", c.numer(), c.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::rational::rat;

    fn x() -> Poly {
        Poly::sym("x")
    }
    fn y() -> Poly {
        Poly::sym("y")
    }

    #[test]
    fn grlex_leading_term() {
        let p = x().add(&y().pow(2)).add(&Poly::constant(rat(3)));
        assert_eq!(p.leading().unwrap().0, &Monomial::atom_pow(Atom::sym("y"), 2));
        let q = x().mul(&y()).add(&x().pow(2));
        // x^2 > x*y under lex with x first
        assert_eq!(q.leading().unwrap().0, &Monomial::atom_pow(Atom::sym("x"), 2));
    }

    #[test]
    fn exact_division() {
        let a = x().add(&Poly::one());
        let b = x().sub(&Poly::one());
        let prod = a.mul(&b);
        assert_eq!(prod.div_exact(&a).unwrap(), b);
        assert!(prod.add(&Poly::one()).div_exact(&a).is_none());
    }

    #[test]
    fn monomial_division_and_gcd() {
        let m1 = Monomial::from_pairs(vec![(Atom::sym("x"), 2), (Atom::sym("y"), 1)]);
        let m2 = Monomial::from_pairs(vec![(Atom::sym("x"), 1)]);
        assert_eq!(m1.div(&m2).unwrap(), Monomial::from_pairs(vec![(Atom::sym("x"), 1), (Atom::sym("y"), 1)]));
        assert!(m2.div(&m1).is_none());
        assert_eq!(m1.gcd(&m2), m2);
    }

    #[test]
    fn horner_substitution() {
        let p = x().pow(2).add(&x());
        let v = y().add(&Poly::one());
        let s = p.substitute_atom(&Atom::sym("x"), &v);
        let expect = v.pow(2).add(&v);
        assert_eq!(s, expect);
    }
}
