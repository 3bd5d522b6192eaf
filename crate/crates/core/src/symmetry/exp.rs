//! Closed-form exponentiation of generators.
//!
//! For each variable `v` the iterates `h_k = X^k v` are computed until one
//! is a constant-coefficient combination of the previous ones. The series
//! `Σ ε^k/k! h_k` then solves a linear ODE in `ε`, whose solution is a sum
//! of `ε^r e^{λε}` terms when the characteristic roots are rational.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InfinitesimalGenerator, SymmetryError};
use crate::linalg::solve;
use crate::symcore::{Atom, Expr, RatFunc, Rational};

pub const DEFAULT_MAX_ORDER: usize = 8;

/// `coef · ε^eps_pow · e^{rate·ε}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedTerm {
    pub coef: RatFunc,
    pub eps_pow: u32,
    pub rate: Rational,
}

/// A finite sum of [`ClosedTerm`]s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedForm {
    pub terms: Vec<ClosedTerm>,
}

impl ClosedForm {
    pub fn identity(v: &str) -> ClosedForm {
        ClosedForm { terms: vec![ClosedTerm { coef: RatFunc::sym(v), eps_pow: 0, rate: Rational::zero() }] }
    }

    /// No exponential factors.
    pub fn is_polynomial_in_eps(&self) -> bool {
        self.terms.iter().all(|t| t.rate.is_zero())
    }

    /// No bare powers of `ε`.
    pub fn is_exponential(&self) -> bool {
        self.terms.iter().all(|t| t.eps_pow == 0)
    }

    /// As a rational function of the symbols `eps` and `exp_eps`.
    pub fn to_ratfunc(&self) -> RatFunc {
        let mut acc = RatFunc::zero();
        for t in &self.terms {
            let e = RatFunc::sym("eps").pow(t.eps_pow as i64).expect("nonnegative power");
            let x = RatFunc::sym("exp_eps").pow_rational(&t.rate).expect("nonzero base");
            acc = acc.add(&t.coef.mul(&e).mul(&x));
        }
        acc
    }

    pub fn to_expr(&self) -> Expr {
        let mut terms = Vec::new();
        for t in &self.terms {
            let neg = t.coef.constant_value().is_some_and(|c| c == -Rational::one());
            let mut f = Vec::new();
            if !t.coef.is_one() && !neg {
                f.push(Expr::from_ratfunc(&t.coef));
            }
            if t.eps_pow > 0 {
                f.push(pow_expr("eps", &Rational::from_integer(t.eps_pow.into())));
            }
            if !t.rate.is_zero() {
                f.push(pow_expr("exp_eps", &t.rate));
            }
            let e = match f.len() {
                0 => Expr::num(1),
                1 => f.pop().unwrap(),
                _ => Expr::Mul(f),
            };
            terms.push(if neg { -e } else { e });
        }
        match terms.len() {
            0 => Expr::num(0),
            1 => terms.pop().unwrap(),
            _ => Expr::Add(terms),
        }
    }

    pub fn evaluate_f64(&self, value_of: &mut impl FnMut(&str) -> Option<f64>, eps: f64) -> Option<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            let c = t.coef.evaluate_f64(value_of)?;
            acc += c * eps.powi(t.eps_pow as i32) * (crate::symcore::to_f64(&t.rate) * eps).exp();
        }
        Some(acc)
    }
}

fn pow_expr(name: &str, q: &Rational) -> Expr {
    if q.is_one() {
        Expr::sym(name)
    } else {
        Expr::Pow(Box::new(Expr::sym(name)), q.clone())
    }
}

impl std::fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_expr())
    }
}

/// `z ↦ exp(εX) z` on the support of the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LieTransformation {
    pub generator: InfinitesimalGenerator,
    /// Closed forms in augmented order; absent variables are unchanged.
    pub maps: Vec<(String, ClosedForm)>,
}

impl LieTransformation {
    pub fn map(&self, v: &str) -> Option<&ClosedForm> {
        self.maps.iter().find(|(n, _)| n == v).map(|(_, m)| m)
    }

    pub fn support(&self) -> Vec<&str> {
        self.maps.iter().map(|(v, _)| v.as_str()).collect()
    }

    /// Substitution `v → v*` in terms of `eps` and `exp_eps`.
    pub fn substitution(&self) -> BTreeMap<String, RatFunc> {
        self.maps.iter().map(|(v, m)| (v.clone(), m.to_ratfunc())).collect()
    }

    /// Transformed values at a numeric point.
    pub fn apply_f64(&self, point: &BTreeMap<String, f64>, eps: f64) -> Option<BTreeMap<String, f64>> {
        let mut out = point.clone();
        for (v, m) in &self.maps {
            let val = m.evaluate_f64(&mut |s| point.get(s).copied(), eps)?;
            out.insert(v.clone(), val);
        }
        Some(out)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let maps: Vec<serde_json::Value> =
            self.maps.iter().map(|(v, m)| serde_json::json!({ "var": v, "map": m.to_string() })).collect();
        serde_json::json!({ "generator": self.generator.to_json_value(), "maps": maps })
    }
}

/// Random evaluation of rational functions; atoms get independent values.
struct Sampler {
    rng: ChaCha8Rng,
    values: HashMap<Atom, Rational>,
}

impl Sampler {
    fn new(seed: u64) -> Sampler {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), values: HashMap::new() }
    }

    fn reset(&mut self) {
        self.values.clear();
    }

    fn eval(&mut self, e: &RatFunc) -> Option<Rational> {
        let Sampler { rng, values } = self;
        e.evaluate_with(&mut |a: &Atom| {
            Ok(values.entry(a.clone()).or_insert_with(|| Rational::from_integer(rng.gen_range(2..10_000).into())).clone())
        })
        .ok()
    }
}

/// Constant `b` with `h[n] = Σ b_i h[i]`, checked symbolically.
fn recurrence(h: &[RatFunc], sampler: &mut Sampler) -> Option<Vec<Rational>> {
    let n = h.len() - 1;
    if h[n].is_zero() {
        return Some(vec![Rational::zero(); n]);
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut tries = 0;
    while a.len() < n + 3 && tries < 10 * (n + 3) {
        tries += 1;
        sampler.reset();
        let vals: Option<Vec<Rational>> = h.iter().map(|e| sampler.eval(e)).collect();
        let Some(vals) = vals else { continue };
        a.push(vals[..n].to_vec());
        b.push(vals[n].clone());
    }
    let coeffs = solve(&a, &b)?;
    let mut combo = RatFunc::zero();
    for (c, e) in coeffs.iter().zip(h) {
        if !c.is_zero() {
            combo = combo.add(&e.scale(c));
        }
    }
    (combo == h[n]).then_some(coeffs)
}

fn divisors(n: &BigInt) -> Option<Vec<u64>> {
    let n = n.abs().to_u64()?;
    if n > 1_000_000_000_000 {
        return None;
    }
    let mut out = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            if d * d != n {
                out.push(n / d);
            }
        }
        d += 1;
    }
    Some(out)
}

fn horner(coeffs: &[Rational], x: &Rational) -> Rational {
    coeffs.iter().rev().fold(Rational::zero(), |acc, c| acc * x + c)
}

/// Divides by `(λ − x)`; coefficients low to high.
fn deflate(coeffs: &[Rational], x: &Rational) -> Vec<Rational> {
    let n = coeffs.len() - 1;
    let mut out = vec![Rational::zero(); n];
    let mut carry = Rational::zero();
    for i in (0..n).rev() {
        carry = &coeffs[i + 1] + &carry * x;
        out[i] = carry.clone();
    }
    out
}

/// All roots with multiplicity if every root is rational.
fn rational_roots(mut coeffs: Vec<Rational>) -> Option<Vec<(Rational, usize)>> {
    let mut roots: BTreeMap<Rational, usize> = BTreeMap::new();
    while coeffs.len() > 1 && coeffs[0].is_zero() {
        coeffs.remove(0);
        *roots.entry(Rational::zero()).or_default() += 1;
    }
    while coeffs.len() > 1 {
        let l = coeffs.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let ints: Vec<BigInt> = coeffs.iter().map(|c| (c * Rational::from_integer(l.clone())).to_integer()).collect();
        let (num, den) = (divisors(&ints[0])?, divisors(ints.last().unwrap())?);
        let mut found = None;
        'search: for p in &num {
            for q in &den {
                for sign in [1i64, -1] {
                    let x = Rational::new(BigInt::from(*p) * sign, BigInt::from(*q));
                    if horner(&coeffs, &x).is_zero() {
                        found = Some(x);
                        break 'search;
                    }
                }
            }
        }
        let x = found?;
        coeffs = deflate(&coeffs, &x);
        *roots.entry(x).or_default() += 1;
    }
    Some(roots.into_iter().collect())
}

fn falling(k: usize, r: usize) -> Rational {
    Rational::from_integer(((k - r + 1)..=k).product::<usize>().into())
}

/// Closed form of `exp(εX) v` from the iterates `h` and recurrence `b`.
fn closed_form(h: &[RatFunc], b: &[Rational]) -> Option<ClosedForm> {
    let n = b.len();
    // λ^n − Σ b_i λ^i, low to high.
    let mut char_poly: Vec<Rational> = b.iter().map(|c| -c).collect();
    char_poly.push(Rational::one());
    let roots = rational_roots(char_poly)?;
    let basis: Vec<(Rational, usize)> = roots.iter().flat_map(|(l, m)| (0..*m).map(move |r| (l.clone(), r))).collect();
    // d^k/dε^k (ε^r e^{λε}) at 0 = k!/(k−r)! λ^{k−r}.
    let v: Vec<Vec<Rational>> = (0..n)
        .map(|k| {
            basis
                .iter()
                .map(|(l, r)| {
                    if k < *r {
                        Rational::zero()
                    } else {
                        falling(k, *r) * num_traits::pow(l.clone(), k - r)
                    }
                })
                .collect()
        })
        .collect();
    let mut coefs = vec![RatFunc::zero(); n];
    for k in 0..n {
        let mut unit = vec![Rational::zero(); n];
        unit[k] = Rational::one();
        let col = solve(&v, &unit)?;
        for (i, c) in col.iter().enumerate() {
            if !c.is_zero() {
                coefs[i] = coefs[i].add(&h[k].scale(c));
            }
        }
    }
    let mut terms: Vec<ClosedTerm> = basis
        .into_iter()
        .zip(coefs)
        .filter(|(_, c)| !c.is_zero())
        .map(|((rate, r), coef)| ClosedTerm { coef, eps_pow: r as u32, rate })
        .collect();
    terms.sort_by(|a, b| (&a.rate, a.eps_pow).cmp(&(&b.rate, b.eps_pow)));
    Some(ClosedForm { terms })
}

/// Sums the Lie series of every variable in the support.
pub fn exponentiate(g: &InfinitesimalGenerator, max_order: usize) -> Result<LieTransformation, SymmetryError> {
    let max_order = max_order.max(2);
    let mut sampler = Sampler::new(0xe4b0);
    let mut maps = Vec::new();
    for (v, _) in &g.eta {
        let mut h = vec![RatFunc::sym(v)];
        let mut form = None;
        for _ in 0..max_order {
            let next = g.apply(h.last().unwrap());
            h.push(next);
            if let Some(b) = recurrence(&h, &mut sampler) {
                form = closed_form(&h, &b);
                break;
            }
        }
        match form {
            Some(f) => maps.push((v.clone(), f)),
            None => return Err(SymmetryError::NoClosure { var: v.clone(), max_order }),
        }
    }
    Ok(LieTransformation { generator: g.clone(), maps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcore::{parse_expr, rat};

    fn rf(s: &str) -> RatFunc {
        parse_expr(s).unwrap().canonical().unwrap()
    }

    fn gen(eta: &[(&str, &str)]) -> InfinitesimalGenerator {
        InfinitesimalGenerator { eta: eta.iter().map(|(v, e)| (v.to_string(), rf(e))).collect() }
    }

    #[test]
    fn translation_terminates() {
        let t = exponentiate(&gen(&[("theta2", "1"), ("w", "-x1*x2")]), 8).unwrap();
        assert_eq!(t.map("theta2").unwrap().to_ratfunc(), rf("theta2 + eps"));
        assert_eq!(t.map("w").unwrap().to_ratfunc(), rf("w - eps*x1*x2"));
    }

    #[test]
    fn scaling_is_exponential() {
        let t = exponentiate(&gen(&[("x1", "x1"), ("k1", "-k1"), ("k2", "-k2"), ("u", "u - k1*x1 - k2*x1")]), 8).unwrap();
        assert_eq!(t.map("x1").unwrap().to_ratfunc(), rf("x1*exp_eps"));
        assert_eq!(t.map("k1").unwrap().to_ratfunc(), rf("k1/exp_eps"));
        assert_eq!(t.map("u").unwrap().to_ratfunc(), rf("x1*(k1 + k2) + exp_eps*(u - x1*(k1 + k2))"));
    }

    #[test]
    fn affine_with_resonance() {
        // Jordan block: X x = x + y, X y = y.
        let t = exponentiate(&gen(&[("x", "x + y"), ("y", "y")]), 8).unwrap();
        assert_eq!(t.map("x").unwrap().to_ratfunc(), rf("exp_eps*(x + eps*y)"));
    }

    #[test]
    fn roots_and_vandermonde() {
        let r = rational_roots(vec![rat(-6), rat(11), rat(-6), rat(1)]).unwrap();
        assert_eq!(r, vec![(rat(1), 1), (rat(2), 1), (rat(3), 1)]);
        assert!(rational_roots(vec![rat(-2), rat(0), rat(1)]).is_none());
        assert_eq!(rational_roots(vec![rat(0), rat(0), rat(1)]).unwrap(), vec![(rat(0), 2)]);
    }

    #[test]
    fn identity_at_zero() {
        let t = exponentiate(&gen(&[("x1", "x1"), ("u", "u + 1"), ("k1", "k1"), ("k1p", "-k1")]), 8).unwrap();
        let at0: BTreeMap<String, RatFunc> =
            [("eps".to_string(), RatFunc::zero()), ("exp_eps".to_string(), RatFunc::one())].into();
        for (v, m) in &t.maps {
            assert_eq!(m.to_ratfunc().substitute(&at0), RatFunc::sym(v));
        }
        assert_eq!(t.map("k1p").unwrap().to_ratfunc(), rf("k1p + k1 - k1*exp_eps"));
    }

    #[test]
    fn no_closure_for_quadratic_flow() {
        // ẋ = x^2 has the flow x/(1 − εx): not a finite exponential sum.
        assert!(matches!(exponentiate(&gen(&[("x", "x^2")]), 6), Err(SymmetryError::NoClosure { .. })));
    }
}
