//! Multivariate polynomial GCD over Q.
//!
//! Recursive primitive polynomial remainder sequences: pick a main atom,
//! split off the content (a GCD over the remaining atoms), and run pseudo
//! division on the primitive parts. Results are monic under graded-lex.

use std::collections::BTreeSet;

use super::poly::{Atom, Poly};
use super::rational::Rational;
use num_traits::One;

pub fn gcd(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() {
        return b.monic();
    }
    if b.is_zero() {
        return a.monic();
    }
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    if a == b {
        return a.monic();
    }
    // Strip common monomial factors first; they are cheap and frequent.
    let ma = a.monomial_content();
    let mb = b.monomial_content();
    let mono = ma.gcd(&mb);
    let a1 = if ma.is_one() { a.clone() } else { a.div_exact(&Poly::term(ma.clone(), Rational::one())).unwrap() };
    let b1 = if mb.is_one() { b.clone() } else { b.div_exact(&Poly::term(mb.clone(), Rational::one())).unwrap() };
    let rest = gcd_no_monomial(&a1, &b1);
    rest.mul_monomial(&mono, &Rational::one()).monic()
}

fn gcd_no_monomial(a: &Poly, b: &Poly) -> Poly {
    if a.is_constant() || b.is_constant() {
        return Poly::one();
    }
    if a.is_monomial() || b.is_monomial() {
        // Monomial content already removed, so a monomial here is a constant.
        return Poly::one();
    }
    let atoms_a = a.atoms();
    let atoms_b = b.atoms();
    // An atom in only one operand cannot occur in the gcd.
    if let Some(v) = atoms_a.iter().find(|v| !atoms_b.contains(*v)) {
        let c = content(a, v);
        return gcd(&c, b);
    }
    if let Some(v) = atoms_b.iter().find(|v| !atoms_a.contains(*v)) {
        let c = content(b, v);
        return gcd(a, &c);
    }
    let common: BTreeSet<&Atom> = atoms_a.intersection(&atoms_b).collect();
    let Some(v) = pick_main(&common, a, b) else { return Poly::one() };
    let ca = content(a, v);
    let cb = content(b, v);
    let cont = gcd(&ca, &cb);
    let pa = a.div_exact(&ca).expect("content divides");
    let pb = b.div_exact(&cb).expect("content divides");
    let g = primitive_prs(pa, pb, v);
    g.mul(&cont).monic()
}

/// Main variable: the common atom of lowest combined degree keeps PRS short.
fn pick_main<'a>(common: &BTreeSet<&'a Atom>, a: &Poly, b: &Poly) -> Option<&'a Atom> {
    common.iter().copied().min_by_key(|v| (a.degree_in(v).max(b.degree_in(v)), a.degree_in(v) + b.degree_in(v)))
}

/// GCD of the coefficients of `p` viewed as a polynomial in `v`.
pub fn content(p: &Poly, v: &Atom) -> Poly {
    let coeffs = p.coefficients_in(v);
    let mut nonzero: Vec<&Poly> = coeffs.iter().filter(|c| !c.is_zero()).collect();
    nonzero.sort_by_key(|c| c.len());
    let mut g = Poly::zero();
    for c in nonzero {
        g = gcd(&g, c);
        if g.is_constant() {
            return Poly::one();
        }
    }
    if g.is_zero() {
        Poly::one()
    } else {
        g
    }
}

fn primitive_part(p: &Poly, v: &Atom) -> Poly {
    let c = content(p, v);
    if c.is_one() {
        p.monic()
    } else {
        p.div_exact(&c).expect("content divides").monic()
    }
}

fn primitive_prs(a: Poly, b: Poly, v: &Atom) -> Poly {
    let (mut f, mut g) = if a.degree_in(v) >= b.degree_in(v) { (a, b) } else { (b, a) };
    loop {
        if g.is_zero() {
            return primitive_part(&f, v);
        }
        if g.degree_in(v) == 0 {
            return Poly::one();
        }
        let r = pseudo_remainder(&f, &g, v);
        if r.is_zero() {
            return primitive_part(&g, v);
        }
        if r.degree_in(v) == 0 {
            return Poly::one();
        }
        f = g;
        g = primitive_part(&r, v);
    }
}

/// Pseudo-remainder of `f` by `g` in the variable `v`.
pub fn pseudo_remainder(f: &Poly, g: &Poly, v: &Atom) -> Poly {
    let gc = g.coefficients_in(v);
    let dg = gc.len() - 1;
    let lc_g = gc[dg].clone();
    let mut r = f.coefficients_in(v);
    while r.len() > dg && !r.is_empty() {
        let dr = r.len() - 1;
        let lc_r = r[dr].clone();
        if lc_r.is_zero() {
            r.pop();
            continue;
        }
        let shift = dr - dg;
        for c in r.iter_mut() {
            *c = c.mul(&lc_g);
        }
        for (i, gci) in gc.iter().enumerate() {
            let t = gci.mul(&lc_r);
            r[i + shift] = r[i + shift].sub(&t);
        }
        debug_assert!(r[dr].is_zero());
        r.pop();
        while r.last().is_some_and(|c| c.is_zero()) {
            r.pop();
        }
    }
    Poly::from_coefficients_in(v, &r)
}

/// Least common multiple, monic.
pub fn lcm(a: &Poly, b: &Poly) -> Poly {
    if a.is_zero() || b.is_zero() {
        return Poly::zero();
    }
    let g = gcd(a, b);
    a.div_exact(&g).expect("gcd divides").mul(b).monic()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::rational::rat;

    fn s(n: &str) -> Poly {
        Poly::sym(n)
    }
    fn c(v: i64) -> Poly {
        Poly::constant(rat(v))
    }

    #[test]
    fn univariate_common_factor() {
        let a = s("x").pow(2).sub(&c(1));
        let b = s("x").sub(&c(1));
        assert_eq!(gcd(&a, &b), b);
    }

    #[test]
    fn multivariate_common_factor() {
        let f = s("x").add(&s("y")).mul(&s("a"));
        let p = f.mul(&s("x").sub(&s("z")));
        let q = f.mul(&s("y").add(&c(2)).pow(2));
        assert_eq!(gcd(&p, &q), f.monic());
    }

    #[test]
    fn coprime_gives_one() {
        let a = s("x").mul(&s("y")).add(&c(1));
        let b = s("x").add(&s("y"));
        assert!(gcd(&a, &b).is_one());
    }

    #[test]
    fn lcm_of_overlapping() {
        let a = s("x").add(&c(1)).mul(&s("y"));
        let b = s("x").add(&c(1)).mul(&s("z"));
        let l = lcm(&a, &b);
        assert_eq!(l, s("x").add(&c(1)).mul(&s("y")).mul(&s("z")).monic());
    }
}
