//! Taylor-mode evaluation of the observability-identifiability matrix.
//!
//! The augmented dynamics and outputs are compiled into a straight-line
//! program. Running it on truncated power series in `t`, with every
//! coefficient carried as a value plus its gradient with respect to the
//! initial augmented state, gives the output Taylor coefficients `y_k` and
//! their gradients. `k! * grad(y_k)` is block `k` of the matrix, so the
//! gradients alone span the same rows.

use std::collections::HashMap;

use num_traits::{One, Zero};

use crate::modelspec::AugmentedSystem;
use crate::symcore::{Atom, Monomial, Poly, RatFunc, Rational};

use super::FispoError;

#[derive(Debug, Clone)]
enum Op {
    Var(usize),
    /// Known input chain, derivative order.
    Input(usize, usize),
    Const(Rational),
    Sum(Vec<(usize, Rational)>),
    Mul(usize, usize),
    Div(usize, usize),
    /// `base^q`; its value at `t = 0` is supplied with the point.
    Root(usize, Rational, usize),
}

/// Straight-line program for `(f, g)`.
#[derive(Debug, Clone)]
pub struct JetProgram {
    ops: Vec<Op>,
    n: usize,
    dynamics: Vec<Option<usize>>,
    outputs: Vec<usize>,
    input_budgets: Vec<usize>,
    n_roots: usize,
}

struct Compiler<'a> {
    a: &'a AugmentedSystem,
    ops: Vec<Op>,
    atoms: HashMap<Atom, usize>,
    powers: HashMap<(Atom, u32), usize>,
    n_roots: usize,
}

impl Compiler<'_> {
    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn atom(&mut self, a: &Atom) -> Result<usize, FispoError> {
        if let Some(&i) = self.atoms.get(a) {
            return Ok(i);
        }
        let op = match a {
            Atom::Sym(s) => {
                if let Some(i) = self.a.index_of(s) {
                    Op::Var(i)
                } else if let Some((c, j)) =
                    self.a.known_inputs.iter().enumerate().find_map(|(c, ch)| ch.iter().position(|n| n == &**s).map(|j| (c, j)))
                {
                    Op::Input(c, j)
                } else {
                    return Err(FispoError::Unbound(s.to_string()));
                }
            }
            Atom::Root(r) => {
                let b = self.ratfunc(&r.base)?;
                let slot = self.n_roots;
                self.n_roots += 1;
                Op::Root(b, r.exp.clone(), slot)
            }
        };
        let i = self.push(op);
        self.atoms.insert(a.clone(), i);
        Ok(i)
    }

    fn power(&mut self, a: &Atom, e: u32) -> Result<usize, FispoError> {
        if e == 1 {
            return self.atom(a);
        }
        if let Some(&i) = self.powers.get(&(a.clone(), e)) {
            return Ok(i);
        }
        let half = self.power(a, e / 2)?;
        let mut i = self.push(Op::Mul(half, half));
        if e % 2 == 1 {
            let base = self.atom(a)?;
            i = self.push(Op::Mul(i, base));
        }
        self.powers.insert((a.clone(), e), i);
        Ok(i)
    }

    fn monomial(&mut self, m: &Monomial) -> Result<Option<usize>, FispoError> {
        let mut acc: Option<usize> = None;
        for (a, e) in m.iter() {
            let p = self.power(a, *e)?;
            acc = Some(match acc {
                None => p,
                Some(prev) => self.push(Op::Mul(prev, p)),
            });
        }
        Ok(acc)
    }

    fn poly(&mut self, p: &Poly) -> Result<usize, FispoError> {
        let mut terms = Vec::new();
        let mut constant = Rational::zero();
        for (m, c) in p.terms() {
            match self.monomial(m)? {
                None => constant += c,
                Some(i) => terms.push((i, c.clone())),
            }
        }
        if !constant.is_zero() || terms.is_empty() {
            let k = self.push(Op::Const(constant));
            terms.push((k, Rational::one()));
        }
        if terms.len() == 1 && terms[0].1.is_one() {
            return Ok(terms[0].0);
        }
        Ok(self.push(Op::Sum(terms)))
    }

    fn ratfunc(&mut self, r: &RatFunc) -> Result<usize, FispoError> {
        let n = self.poly(r.numer())?;
        if r.denom().is_one() {
            return Ok(n);
        }
        let d = self.poly(r.denom())?;
        Ok(self.push(Op::Div(n, d)))
    }
}

impl JetProgram {
    pub fn compile(a: &AugmentedSystem) -> Result<JetProgram, FispoError> {
        let mut c = Compiler { a, ops: Vec::new(), atoms: HashMap::new(), powers: HashMap::new(), n_roots: 0 };
        let mut dynamics = Vec::new();
        for f in &a.dynamics {
            dynamics.push(if f.is_zero() { None } else { Some(c.ratfunc(f)?) });
        }
        let mut outputs = Vec::new();
        for g in &a.outputs {
            outputs.push(c.ratfunc(g)?);
        }
        Ok(JetProgram {
            n: a.dim(),
            dynamics,
            outputs,
            input_budgets: a.known_inputs.iter().map(|ch| ch.len() - 1).collect(),
            n_roots: c.n_roots,
            ops: c.ops,
        })
    }

    pub fn n_roots(&self) -> usize {
        self.n_roots
    }

    pub fn input_budgets(&self) -> &[usize] {
        &self.input_budgets
    }
}

/// A value together with its gradient; index 0 is the value.
type Dual = Vec<Rational>;

fn dual_const(v: Rational, n: usize) -> Dual {
    let mut d = vec![Rational::zero(); n + 1];
    d[0] = v;
    d
}

fn dual_is_zero(a: &Dual) -> bool {
    a.iter().all(|v| v.is_zero())
}

/// `acc += s * a * b`.
fn dual_fma(acc: &mut Dual, a: &Dual, b: &Dual, s: &Rational) {
    if dual_is_zero(a) || dual_is_zero(b) {
        return;
    }
    let a0 = &a[0] * s;
    let b0s = &b[0] * s;
    for i in 1..acc.len() {
        let mut t = Rational::zero();
        if !b[i].is_zero() && !a0.is_zero() {
            t += &a0 * &b[i];
        }
        if !a[i].is_zero() && !b0s.is_zero() {
            t += &b0s * &a[i];
        }
        if !t.is_zero() {
            acc[i] += t;
        }
    }
    acc[0] += &a0 * &b[0];
}

/// `a / b` for a dual `b` with nonzero value.
fn dual_div(a: &Dual, b: &Dual) -> Dual {
    let inv = b[0].recip();
    let v = &a[0] * &inv;
    let mut out = Vec::with_capacity(a.len());
    out.push(v.clone());
    for i in 1..a.len() {
        // (a' - v b') / b
        let t = &a[i] - &v * &b[i];
        out.push(if t.is_zero() { t } else { t * &inv });
    }
    out
}

/// Random evaluation point for a compiled program.
#[derive(Debug, Clone)]
pub struct JetPoint {
    pub vars: Vec<Rational>,
    /// Per known input, values of `u, u', …` at `t = 0`.
    pub inputs: Vec<Vec<Rational>>,
    /// Values of the fractional powers at `t = 0`.
    pub roots: Vec<Rational>,
}

pub struct JetRun<'a> {
    p: &'a JetProgram,
    point: &'a JetPoint,
    /// coefficients[node][k]
    coeffs: Vec<Vec<Dual>>,
    /// state series z[k][i]
    z: Vec<Vec<Dual>>,
    factorials: Vec<Rational>,
}

impl<'a> JetRun<'a> {
    pub fn new(p: &'a JetProgram, point: &'a JetPoint) -> JetRun<'a> {
        let n = p.n;
        let z0: Vec<Dual> = (0..n)
            .map(|i| {
                let mut d = dual_const(point.vars[i].clone(), n);
                d[i + 1] = Rational::one();
                d
            })
            .collect();
        JetRun { p, point, coeffs: vec![Vec::new(); p.ops.len()], z: vec![z0], factorials: vec![Rational::one()] }
    }

    fn factorial(&mut self, k: usize) -> Rational {
        while self.factorials.len() <= k {
            let m = self.factorials.len();
            let next = &self.factorials[m - 1] * Rational::from_integer(m.into());
            self.factorials.push(next);
        }
        self.factorials[k].clone()
    }

    /// Computes coefficient `k` of every node. Requires `z[k]`.
    fn step(&mut self, k: usize) -> Result<(), FispoError> {
        let n = self.p.n;
        for idx in 0..self.p.ops.len() {
            let value = match &self.p.ops[idx] {
                Op::Var(i) => self.z[k][*i].clone(),
                Op::Input(c, j) => {
                    let order = j + k;
                    if order <= self.p.input_budgets[*c] {
                        let f = self.factorial(k);
                        dual_const(&self.point.inputs[*c][order] / f, n)
                    } else {
                        dual_const(Rational::zero(), n)
                    }
                }
                Op::Const(c) => dual_const(if k == 0 { c.clone() } else { Rational::zero() }, n),
                Op::Sum(terms) => {
                    let mut acc = dual_const(Rational::zero(), n);
                    for (t, c) in terms {
                        let v = &self.coeffs[*t][k];
                        for (x, y) in acc.iter_mut().zip(v) {
                            if !y.is_zero() {
                                *x += c * y;
                            }
                        }
                    }
                    acc
                }
                Op::Mul(a, b) => {
                    let mut acc = dual_const(Rational::zero(), n);
                    let one = Rational::one();
                    for i in 0..=k {
                        dual_fma(&mut acc, &self.coeffs[*a][i], &self.coeffs[*b][k - i], &one);
                    }
                    acc
                }
                Op::Div(a, b) => {
                    let b0 = &self.coeffs[*b][0];
                    if b0[0].is_zero() {
                        return Err(FispoError::Pole);
                    }
                    let mut acc = self.coeffs[*a][k].clone();
                    let minus = -Rational::one();
                    for j in 1..=k {
                        dual_fma(&mut acc, &self.coeffs[*b][j], &self.coeffs[idx][k - j], &minus);
                    }
                    dual_div(&acc, b0)
                }
                Op::Root(b, q, slot) => {
                    let b0 = &self.coeffs[*b][0];
                    if b0[0].is_zero() {
                        return Err(FispoError::Pole);
                    }
                    if k == 0 {
                        // P = C b^q: grad P = q P grad(b) / b.
                        let p0 = self.point.roots[*slot].clone();
                        let s = q * &p0 / &b0[0];
                        let mut d = dual_const(p0, n);
                        for i in 1..=n {
                            d[i] = &s * &b0[i];
                        }
                        d
                    } else {
                        // k b0 P_k = Σ_{j=1..k} (q j - k + j) b_j P_{k-j}
                        let mut acc = dual_const(Rational::zero(), n);
                        let kk = Rational::from_integer(k.into());
                        for j in 1..=k {
                            let jj = Rational::from_integer(j.into());
                            let c = q * &jj - &kk + &jj;
                            if c.is_zero() {
                                continue;
                            }
                            dual_fma(&mut acc, &self.coeffs[*b][j], &self.coeffs[idx][k - j], &c);
                        }
                        let denom: Dual = self.coeffs[*b][0].iter().map(|v| v * &kk).collect();
                        dual_div(&acc, &denom)
                    }
                }
            };
            self.coeffs[idx].push(value);
        }
        Ok(())
    }

    /// Gradients of the order-`k` output coefficients; call with
    /// `k = 0, 1, 2, …` in turn.
    pub fn block(&mut self, k: usize) -> Result<Vec<Vec<Rational>>, FispoError> {
        assert_eq!(self.coeffs.first().map_or(k, |c| c.len()), k, "blocks must be requested in order");
        self.step(k)?;
        let n = self.p.n;
        let kk1 = Rational::from_integer((k + 1).into());
        let next: Vec<Dual> = self
            .p
            .dynamics
            .iter()
            .map(|d| match d {
                None => dual_const(Rational::zero(), n),
                Some(i) => self.coeffs[*i][k].iter().map(|v| v / &kk1).collect(),
            })
            .collect();
        self.z.push(next);
        Ok(self.p.outputs.iter().map(|&o| self.coeffs[o][k][1..].to_vec()).collect())
    }
}
