//! Lie point symmetries of the augmented system.
//!
//! A generator `X = Σ η_v ∂/∂v` is admitted when every state equation is
//! preserved by the prolonged action and every output is invariant. With a
//! polynomial ansatz for `η` both conditions are linear in the unknown
//! coefficients; the kernel of that system is the space of generators.

mod exp;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{nullspace, rref, sparse_nullspace, Echelon, SparseRow};
use crate::modelspec::{split_derivative, AugmentedSystem, ModelError, VarKind};
use crate::symcore::{linear_coefficients, Atom, Expr, Monomial, Poly, RatFunc, Rational, SymError};

pub use exp::{exponentiate, ClosedForm, ClosedTerm, LieTransformation, DEFAULT_MAX_ORDER};

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("ansatz degree must be at least 1")]
    Degree,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("`{0}` depends on a derivative of an unknown input")]
    InputDerivative(String),
    #[error("kernel vector fails the symbolic check")]
    Unverified,
    #[error("initial conditions are cyclic")]
    CyclicIc,
    #[error("no closed form for `{var}` within order {max_order}")]
    NoClosure { var: String, max_order: usize },
}

/// Which variables an infinitesimal may depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dependence {
    All,
    ParamsOnly,
}

/// Polynomial ansatz: one unknown coefficient per (component, monomial).
#[derive(Debug, Clone)]
pub struct Ansatz {
    pub degree: usize,
    /// Components in augmented order: states, parameters, unknown inputs.
    pub vars: Vec<String>,
    pub kinds: Vec<VarKind>,
    /// Column `j` is the coefficient of `columns[j].1` in `η_{vars[columns[j].0]}`.
    pub columns: Vec<(usize, Monomial)>,
    /// Prefix of the coefficient symbols, chosen to avoid model names.
    pub prefix: String,
}

impl Ansatz {
    pub fn n_unknowns(&self) -> usize {
        self.columns.len()
    }

    pub fn coefficient_name(&self, j: usize) -> String {
        format!("{}{j}", self.prefix)
    }

    /// `η_i` with symbolic coefficients.
    pub fn eta(&self, i: usize) -> RatFunc {
        let mut p = Poly::zero();
        for (j, (v, m)) in self.columns.iter().enumerate() {
            if *v == i {
                p = p.add(&Poly::term(m.mul(&Monomial::atom(Atom::sym(&self.coefficient_name(j)))), Rational::one()));
            }
        }
        RatFunc::poly(p)
    }

    /// `η_i` for a concrete coefficient vector.
    pub fn eta_at(&self, i: usize, c: &SparseRow) -> Poly {
        let mut p = Poly::zero();
        for (j, v) in c {
            let (var, m) = &self.columns[*j];
            if *var == i {
                p.add_term(m.clone(), v.clone());
            }
        }
        p
    }

    /// Indices of the components with a nonzero coefficient in `c`.
    fn support_of(&self, c: &SparseRow) -> BTreeSet<usize> {
        c.keys().map(|j| self.columns[*j].0).collect()
    }
}

/// All monomials of total degree `0..=d` over `vars`, by degree then lex.
fn monomials(vars: &[String], d: usize) -> Vec<Monomial> {
    let mut out = vec![Monomial::one()];
    let mut frontier: Vec<(Monomial, usize)> = vec![(Monomial::one(), 0)];
    for _ in 0..d {
        let mut next = Vec::new();
        for (m, start) in &frontier {
            for (k, v) in vars.iter().enumerate().skip(*start) {
                let nm = m.mul(&Monomial::atom(Atom::sym(v)));
                next.push((nm, k));
            }
        }
        out.extend(next.iter().map(|(m, _)| m.clone()));
        frontier = next;
    }
    out
}

/// States, parameters and the unknown inputs themselves carry an
/// infinitesimal; known inputs and input derivatives do not.
pub fn build_ansatz(a: &AugmentedSystem, degree: usize) -> Result<Ansatz, SymmetryError> {
    if degree == 0 {
        return Err(SymmetryError::Degree);
    }
    let mut vars = Vec::new();
    let mut kinds = Vec::new();
    for v in &a.vars {
        if matches!(v.kind, VarKind::UnknownInput { order, .. } if order > 0) {
            continue;
        }
        vars.push(v.name.clone());
        kinds.push(v.kind);
    }
    let params: Vec<String> =
        vars.iter().zip(&kinds).filter(|(_, k)| **k == VarKind::Parameter).map(|(v, _)| v.clone()).collect();
    let all_monos = monomials(&vars, degree);
    let param_monos = monomials(&params, degree);
    let mut columns = Vec::new();
    for (i, k) in kinds.iter().enumerate() {
        let dep = if *k == VarKind::Parameter { Dependence::ParamsOnly } else { Dependence::All };
        let monos = if dep == Dependence::ParamsOnly { &param_monos } else { &all_monos };
        columns.extend(monos.iter().map(|m| (i, m.clone())));
    }
    let mut names = BTreeSet::new();
    for e in a.dynamics.iter().chain(&a.outputs) {
        e.collect_symbols(&mut names);
    }
    names.extend(vars.iter().cloned());
    let mut prefix = "c_".to_string();
    while names.iter().any(|n| n.starts_with(&prefix)) {
        prefix.insert(0, '_');
    }
    Ok(Ansatz { degree, vars, kinds, columns, prefix })
}

/// The linear conditions on the ansatz coefficients.
#[derive(Debug, Clone)]
pub struct DeterminingSystem {
    pub ansatz: Ansatz,
    pub rows: Vec<SparseRow>,
}

impl DeterminingSystem {
    pub fn n_equations(&self) -> usize {
        self.rows.len()
    }
}

fn check_no_input_derivatives(a: &AugmentedSystem) -> Result<(), SymmetryError> {
    let inputs = a.unknown_input_names();
    let rhs = a.vars.iter().zip(&a.dynamics).filter(|(v, _)| v.kind == VarKind::State).map(|(v, f)| (&v.name, f));
    for (name, e) in rhs.chain(a.output_names.iter().zip(&a.outputs)) {
        for s in e.symbols() {
            let (base, order) = split_derivative(&s);
            if order > 0 && inputs.contains(&base) {
                return Err(SymmetryError::InputDerivative(name.clone()));
            }
        }
    }
    Ok(())
}

/// Accumulates `coef · shift · poly` into rows keyed by monomial.
struct RowBuilder {
    rows: BTreeMap<Monomial, SparseRow>,
}

impl RowBuilder {
    fn add(&mut self, col: usize, coef: &Rational, shift: &Monomial, poly: &Poly) {
        for (m, c) in poly.terms() {
            let key = shift.mul(m);
            let slot = self.rows.entry(key).or_default().entry(col).or_insert_with(Rational::zero);
            *slot += coef * c;
        }
    }

    fn finish(self, out: &mut Vec<SparseRow>) {
        for (_, mut r) in self.rows {
            r.retain(|_, v| !v.is_zero());
            if !r.is_empty() {
                out.push(r);
            }
        }
    }
}

/// Assembles the determining equations. Each residual is written over the
/// least common denominator of its ingredients, so the coefficient of every
/// numerator monomial is an exact linear equation.
pub fn determining_system(a: &AugmentedSystem, ansatz: Ansatz) -> Result<DeterminingSystem, SymmetryError> {
    check_no_input_derivatives(a)?;
    let n_states = ansatz.kinds.iter().filter(|k| **k == VarKind::State).count();
    let state_dyn: Vec<&RatFunc> = (0..n_states).map(|i| &a.dynamics[i]).collect();
    let var_atoms: Vec<Atom> = ansatz.vars.iter().map(|v| Atom::sym(v)).collect();
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); ansatz.vars.len()];
    for (j, (v, _)) in ansatz.columns.iter().enumerate() {
        by_var[*v].push(j);
    }
    let mut rows = Vec::new();

    // State equations: D_t η_k − Σ_v η_v ∂f_k/∂v = 0.
    for k in 0..n_states {
        let f = &a.dynamics[k];
        let partials: Vec<(usize, RatFunc)> =
            (0..ansatz.vars.len()).map(|v| (v, f.diff(&ansatz.vars[v]))).filter(|(_, d)| !d.is_zero()).collect();
        let mut dens: Vec<&RatFunc> = state_dyn.clone();
        dens.extend(partials.iter().map(|(_, d)| d));
        let l = RatFunc::lcm_denominator(&dens);
        let dyn_over: Vec<Rc<Poly>> = state_dyn.iter().map(|f| Rc::new(f.numerator_over(&l))).collect();
        let l_poly = Rc::new(l.clone());
        let mut b = RowBuilder { rows: BTreeMap::new() };

        for &j in &by_var[k] {
            let m = &ansatz.columns[j].1;
            for (atom, e) in m.iter() {
                let vi = var_atoms.iter().position(|x| x == atom).expect("ansatz atom");
                let (rest, _) = m.split(atom);
                let dm = rest.mul(&Monomial::atom_pow(atom.clone(), e - 1));
                let c = Rational::from_integer((*e as i64).into());
                match ansatz.kinds[vi] {
                    VarKind::State => b.add(j, &c, &dm, &dyn_over[vi]),
                    VarKind::Parameter => {}
                    VarKind::UnknownInput { .. } => {
                        let next = Monomial::atom(Atom::sym(&format!("{}'", ansatz.vars[vi])));
                        b.add(j, &c, &dm.mul(&next), &l_poly);
                    }
                }
            }
        }
        let minus_one = -Rational::one();
        for (v, d) in &partials {
            let q = d.numerator_over(&l);
            for &j in &by_var[*v] {
                b.add(j, &minus_one, &ansatz.columns[j].1, &q);
            }
        }
        b.finish(&mut rows);
    }

    // Outputs: Σ_v η_v ∂g/∂v = 0.
    for g in &a.outputs {
        let partials: Vec<(usize, RatFunc)> =
            (0..ansatz.vars.len()).map(|v| (v, g.diff(&ansatz.vars[v]))).filter(|(_, d)| !d.is_zero()).collect();
        let dens: Vec<&RatFunc> = partials.iter().map(|(_, d)| d).collect();
        let l = RatFunc::lcm_denominator(&dens);
        let mut b = RowBuilder { rows: BTreeMap::new() };
        let one = Rational::one();
        for (v, d) in &partials {
            let q = d.numerator_over(&l);
            for &j in &by_var[*v] {
                b.add(j, &one, &ansatz.columns[j].1, &q);
            }
        }
        b.finish(&mut rows);
    }
    Ok(DeterminingSystem { ansatz, rows })
}

/// Same system built from fully symbolic residuals with
/// [`linear_coefficients`]. Slow; used to cross-check the fast assembly.
pub fn determining_system_symbolic(a: &AugmentedSystem, ansatz: Ansatz) -> Result<DeterminingSystem, SymmetryError> {
    check_no_input_derivatives(a)?;
    let unknowns: BTreeSet<String> = (0..ansatz.n_unknowns()).map(|j| ansatz.coefficient_name(j)).collect();
    let col_of = |name: &str| name[ansatz.prefix.len()..].parse::<usize>().expect("coefficient symbol");
    let etas: Vec<RatFunc> = (0..ansatz.vars.len()).map(|i| ansatz.eta(i)).collect();
    let mut residuals = Vec::new();
    for (k, kind) in ansatz.kinds.iter().enumerate() {
        if *kind != VarKind::State {
            continue;
        }
        let f = &a.dynamics[k];
        let mut r = a.total_derivative(&etas[k]);
        for (v, eta) in etas.iter().enumerate() {
            r = r.sub(&eta.mul(&f.diff(&ansatz.vars[v])));
        }
        residuals.push(r);
    }
    for g in &a.outputs {
        let mut r = RatFunc::zero();
        for (v, eta) in etas.iter().enumerate() {
            r = r.add(&eta.mul(&g.diff(&ansatz.vars[v])));
        }
        residuals.push(r);
    }
    let mut rows = Vec::new();
    for r in residuals {
        let lc = linear_coefficients(&r, &unknowns)?;
        for (_, form) in lc.rows {
            debug_assert!(form.constant.is_zero());
            let row: SparseRow = form.terms.iter().map(|(u, c)| (col_of(u), c.clone())).collect();
            if !row.is_empty() {
                rows.push(row);
            }
        }
    }
    Ok(DeterminingSystem { ansatz, rows })
}

/// `X = Σ η_v ∂/∂v` over the augmented variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfinitesimalGenerator {
    /// Nonzero components in augmented order.
    pub eta: Vec<(String, RatFunc)>,
}

impl InfinitesimalGenerator {
    pub fn support(&self) -> Vec<&str> {
        self.eta.iter().map(|(v, _)| v.as_str()).collect()
    }

    pub fn eta_of(&self, v: &str) -> Option<&RatFunc> {
        self.eta.iter().find(|(n, _)| n == v).map(|(_, e)| e)
    }

    /// `X φ`.
    pub fn apply(&self, phi: &RatFunc) -> RatFunc {
        let mut acc = RatFunc::zero();
        for (v, e) in &self.eta {
            let d = phi.diff(v);
            if !d.is_zero() {
                acc = acc.add(&e.mul(&d));
            }
        }
        acc
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let eta: Vec<EtaJson> = self.eta.iter().map(|(v, e)| EtaJson { var: v.clone(), eta: e.to_string() }).collect();
        serde_json::json!({ "support": self.support(), "eta": eta })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EtaJson {
    var: String,
    eta: String,
}

/// Generators of the kernel as a module over functions of the parameters.
///
/// Parameters are constant in time, so any kernel vector multiplied by a
/// function of the parameters is again a generator. The exact kernel over
/// the rationals is searched for small-support vectors, normalized and sorted by support size and
/// degree; a vector is kept only if it is independent of the ones already
/// kept over the parameter function field, tested exactly at a random
/// parameter point. Every kept generator passes [`check_generator`].
pub fn generator_basis(a: &AugmentedSystem, sys: &DeterminingSystem) -> Result<Vec<InfinitesimalGenerator>, SymmetryError> {
    let ansatz = &sys.ansatz;
    let kernel = sparse_nullspace(sys.rows.clone(), ansatz.n_unknowns());
    let mut basis: Vec<SparseRow> = (0..ansatz.vars.len()).flat_map(|t| minimal_support(ansatz, &kernel, t)).collect();
    basis.extend(kernel);
    for v in basis.iter_mut() {
        normalize(ansatz, v);
    }
    basis.sort_by_key(|v| {
        let s = ansatz.support_of(v);
        let deg = v.keys().map(|j| ansatz.columns[*j].1.degree()).max().unwrap_or(0);
        (s.len(), deg, s.into_iter().collect::<Vec<_>>(), v.len())
    });
    let mut out = Vec::new();
    for v in field_independent(ansatz, &basis) {
        let g = to_generator(ansatz, v);
        if !check_generator(&g, a) {
            return Err(SymmetryError::Unverified);
        }
        out.push(g);
    }
    Ok(out)
}

/// Greedy maximal subset independent over the parameter function field.
fn field_independent<'a>(ansatz: &Ansatz, basis: &'a [SparseRow]) -> Vec<&'a SparseRow> {
    let params: BTreeSet<Atom> =
        ansatz.vars.iter().zip(&ansatz.kinds).filter(|(_, k)| **k == VarKind::Parameter).map(|(v, _)| Atom::sym(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a7a);
    let values: BTreeMap<&Atom, Rational> =
        params.iter().map(|p| (p, Rational::from_integer(rng.gen_range(2..10_000).into()))).collect();
    let mut keys: BTreeMap<(usize, Monomial), usize> = BTreeMap::new();
    let mut rows: Vec<BTreeMap<usize, Rational>> = Vec::new();
    for v in basis {
        let mut row: BTreeMap<usize, Rational> = BTreeMap::new();
        for (j, c) in v {
            let (var, m) = &ansatz.columns[*j];
            let (in_params, rest) = m.restrict(|a| params.contains(a));
            let mut val = c.clone();
            for (a, e) in in_params.iter() {
                val *= num_traits::pow(values[a].clone(), *e as usize);
            }
            let n = keys.len();
            let col = *keys.entry((*var, rest)).or_insert(n);
            *row.entry(col).or_insert_with(Rational::zero) += val;
        }
        rows.push(row);
    }
    let mut ech = Echelon::new(keys.len());
    let mut kept = Vec::new();
    for (v, row) in basis.iter().zip(rows) {
        let mut dense = vec![Rational::zero(); keys.len()];
        for (c, x) in row {
            dense[c] = x;
        }
        if ech.insert(&dense) {
            kept.push(v);
        }
    }
    kept
}

/// Ansatz, determining system and kernel in one call.
pub fn find_generators(a: &AugmentedSystem, degree: usize) -> Result<Vec<InfinitesimalGenerator>, SymmetryError> {
    let sys = determining_system(a, build_ansatz(a, degree)?)?;
    generator_basis(a, &sys)
}

fn to_generator(ansatz: &Ansatz, c: &SparseRow) -> InfinitesimalGenerator {
    let eta = (0..ansatz.vars.len())
        .filter_map(|i| {
            let p = ansatz.eta_at(i, c);
            (!p.is_zero()).then(|| (ansatz.vars[i].clone(), RatFunc::poly(p)))
        })
        .collect();
    InfinitesimalGenerator { eta }
}

fn combine(w: &[SparseRow], coeffs: &[Rational]) -> SparseRow {
    let mut out = SparseRow::new();
    for (v, c) in w.iter().zip(coeffs) {
        if c.is_zero() {
            continue;
        }
        for (j, x) in v {
            let slot = out.entry(*j).or_insert_with(Rational::zero);
            *slot += c * x;
            if slot.is_zero() {
                out.remove(j);
            }
        }
    }
    out
}

/// Combinations of `w` vanishing on every column of `cols`.
fn vanishing_on(w: &[SparseRow], cols: &BTreeSet<usize>) -> Vec<SparseRow> {
    let used: BTreeSet<usize> = w.iter().flat_map(|v| v.keys().filter(|j| cols.contains(j)).copied()).collect();
    if used.is_empty() {
        return w.to_vec();
    }
    let rows: Vec<Vec<Rational>> =
        used.iter().map(|j| w.iter().map(|v| v.get(j).cloned().unwrap_or_else(Rational::zero)).collect()).collect();
    nullspace(&rows, w.len()).iter().map(|n| combine(w, n)).filter(|v| !v.is_empty()).collect()
}

/// Row-reduces `w`, eliminating high-degree columns first so that later
/// rows are low-degree vectors.
fn reduce_low_degree(ansatz: &Ansatz, w: &[SparseRow]) -> Vec<SparseRow> {
    let mut cols: Vec<usize> = w.iter().flat_map(|v| v.keys().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    cols.sort_by_key(|j| (std::cmp::Reverse(ansatz.columns[*j].1.degree()), *j));
    let pos: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, j)| (*j, i)).collect();
    let dense: Vec<Vec<Rational>> = w
        .iter()
        .map(|v| {
            let mut d = vec![Rational::zero(); cols.len()];
            for (j, x) in v {
                d[pos[j]] = x.clone();
            }
            d
        })
        .collect();
    rref(dense, cols.len())
        .rows
        .into_iter()
        .map(|r| r.into_iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(i, x)| (cols[i], x)).collect())
        .collect()
}

/// Kernel vectors moving `anchor` with locally minimal support. Variables
/// are dropped greedily (states first, then inputs, then parameters) while
/// some vector still moves the anchor, once from the whole kernel and once
/// restricted to the support of the sparsest basis vector moving it.
fn minimal_support(ansatz: &Ansatz, basis: &[SparseRow], anchor: usize) -> Vec<SparseRow> {
    let cols_of = |vars: &BTreeSet<usize>| -> BTreeSet<usize> {
        ansatz.columns.iter().enumerate().filter(|(_, (v, _))| vars.contains(v)).map(|(j, _)| j).collect()
    };
    let anchor_cols = cols_of(&BTreeSet::from([anchor]));
    let moves = |v: &SparseRow| v.keys().any(|j| anchor_cols.contains(j));
    let Some(seed) = basis.iter().filter(|v| moves(v)).min_by_key(|v| ansatz.support_of(v).len()) else {
        return Vec::new();
    };
    let rank = |k: &VarKind| match k {
        VarKind::State => 0,
        VarKind::UnknownInput { .. } => 1,
        VarKind::Parameter => 2,
    };
    let shrink = |mut w: Vec<SparseRow>, vars: BTreeSet<usize>| -> Option<SparseRow> {
        let mut order: Vec<usize> = vars.into_iter().filter(|v| *v != anchor).collect();
        order.sort_by_key(|v| (rank(&ansatz.kinds[*v]), *v));
        for var in order {
            let next = vanishing_on(&w, &cols_of(&BTreeSet::from([var])));
            if next.iter().any(moves) {
                w = next;
            }
        }
        reduce_low_degree(ansatz, &w).into_iter().filter(moves).min_by_key(|v| {
            let deg = v.keys().map(|j| ansatz.columns[*j].1.degree()).max().unwrap_or(0);
            (ansatz.support_of(v).len(), deg, v.len())
        })
    };
    let support = ansatz.support_of(seed);
    let outside: BTreeSet<usize> = (0..ansatz.vars.len()).filter(|v| !support.contains(v)).collect();
    let seeded = shrink(vanishing_on(basis, &cols_of(&outside)), support);
    let whole = shrink(basis.to_vec(), (0..ansatz.vars.len()).collect());
    seeded.into_iter().chain(whole).collect()
}

/// Scales so the leading coefficient of the first nonzero component is 1.
fn normalize(ansatz: &Ansatz, c: &mut SparseRow) {
    let Some(first) = ansatz.support_of(c).into_iter().next() else { return };
    let lead = c
        .iter()
        .filter(|(j, _)| ansatz.columns[**j].0 == first)
        .max_by(|x, y| ansatz.columns[*x.0].1.cmp(&ansatz.columns[*y.0].1))
        .map(|(_, v)| v.clone())
        .unwrap();
    for v in c.values_mut() {
        *v /= &lead;
    }
}

/// Initial-condition relations with every right-hand side expressed in
/// states that carry no relation themselves.
pub fn resolve_ics(ics: &BTreeMap<String, RatFunc>) -> Result<BTreeMap<String, RatFunc>, SymmetryError> {
    let mut out = ics.clone();
    for _ in 0..=ics.len() {
        let pending = out.values().any(|h| h.symbols().iter().any(|s| ics.contains_key(s)));
        if !pending {
            return Ok(out);
        }
        let snapshot = out.clone();
        for h in out.values_mut() {
            *h = h.try_substitute(&snapshot)?;
        }
    }
    Err(SymmetryError::CyclicIc)
}

/// Conditions for the initial manifold `x_k = h_k` to be invariant:
/// `η_{x_k} − Σ_v η_v ∂h_k/∂v` vanishes once the relations are imposed.
pub fn ic_conditions(ansatz: &Ansatz, ics: &BTreeMap<String, RatFunc>) -> Result<Vec<SparseRow>, SymmetryError> {
    let resolved = resolve_ics(ics)?;
    let on_manifold = |r: &RatFunc| -> Result<RatFunc, SymError> {
        if r.symbols().iter().any(|s| resolved.contains_key(s)) { r.try_substitute(&resolved) } else { Ok(r.clone()) }
    };
    let mut rows = Vec::new();
    for (x, h) in ics {
        let Some(xi) = ansatz.vars.iter().position(|v| v == x) else { continue };
        let mut weights: Vec<(usize, RatFunc)> = vec![(xi, RatFunc::one())];
        for (i, v) in ansatz.vars.iter().enumerate() {
            let d = h.diff(v);
            if !d.is_zero() {
                weights.push((i, d.neg()));
            }
        }
        let mut terms: Vec<(usize, RatFunc)> = Vec::new();
        for (i, w) in &weights {
            for (j, (var, m)) in ansatz.columns.iter().enumerate() {
                if var == i {
                    let t = on_manifold(&w.mul(&RatFunc::poly(Poly::term(m.clone(), Rational::one()))))?;
                    if !t.is_zero() {
                        terms.push((j, t));
                    }
                }
            }
        }
        let l = RatFunc::lcm_denominator(&terms.iter().map(|(_, t)| t).collect::<Vec<_>>());
        let mut b = RowBuilder { rows: BTreeMap::new() };
        for (j, t) in &terms {
            b.add(*j, &Rational::one(), &Monomial::one(), &t.numerator_over(&l));
        }
        b.finish(&mut rows);
    }
    Ok(rows)
}

/// Generators that also leave the initial manifold invariant.
pub fn find_generators_with_ics(
    a: &AugmentedSystem,
    ics: &BTreeMap<String, RatFunc>,
    degree: usize,
) -> Result<Vec<InfinitesimalGenerator>, SymmetryError> {
    let mut sys = determining_system(a, build_ansatz(a, degree)?)?;
    let extra = ic_conditions(&sys.ansatz, ics)?;
    sys.rows.extend(extra);
    generator_basis(a, &sys)
}

/// Symbolic form of [`ic_conditions`] for one generator.
pub fn preserves_ics(g: &InfinitesimalGenerator, ics: &BTreeMap<String, RatFunc>) -> bool {
    let Ok(resolved) = resolve_ics(ics) else { return false };
    ics.iter().all(|(x, h)| {
        let lhs = g.eta_of(x).cloned().unwrap_or_else(RatFunc::zero);
        let r = lhs.sub(&g.apply(h));
        r.try_substitute(&resolved).is_ok_and(|r| r.is_zero())
    })
}

/// Both symmetry conditions, rebuilt as expression trees and tested with
/// [`Expr::is_zero`].
pub fn check_generator(g: &InfinitesimalGenerator, a: &AugmentedSystem) -> bool {
    if g.eta.is_empty() || g.eta.iter().any(|(_, e)| e.is_zero()) {
        return false;
    }
    let inputs = a.unknown_input_names();
    for (v, e) in &g.eta {
        let kind = a.vars.iter().find(|x| &x.name == v).map(|x| x.kind);
        match kind {
            Some(VarKind::Parameter) => {
                if e.symbols().iter().any(|s| !a.vars.iter().any(|x| &x.name == s && x.kind == VarKind::Parameter)) {
                    return false;
                }
            }
            Some(VarKind::State) | Some(VarKind::UnknownInput { order: 0, .. }) => {}
            _ => return false,
        }
    }
    let derivative_terms = |f: &RatFunc| -> Option<Vec<Expr>> {
        let mut terms = Vec::new();
        for (v, e) in &g.eta {
            let d = f.diff(v);
            if !d.is_zero() {
                terms.push(Expr::from_ratfunc(e) * Expr::from_ratfunc(&d));
            }
        }
        for s in f.symbols() {
            let (base, order) = split_derivative(&s);
            if order > 0 && inputs.contains(&base) {
                return None;
            }
        }
        Some(terms)
    };
    for (k, v) in a.vars.iter().enumerate() {
        if v.kind != VarKind::State {
            continue;
        }
        let mut terms = Vec::new();
        if let Some(eta) = g.eta_of(&v.name) {
            for s in eta.symbols() {
                let ds = a.untruncated_derivative(&s);
                if !ds.is_zero() {
                    terms.push(Expr::from_ratfunc(&eta.diff(&s)) * Expr::from_ratfunc(&ds));
                }
            }
        }
        let Some(rhs) = derivative_terms(&a.dynamics[k]) else { return false };
        terms.extend(rhs.into_iter().map(|t| -t));
        if !Expr::Add(terms).is_zero() {
            return false;
        }
    }
    for g_out in &a.outputs {
        let Some(terms) = derivative_terms(g_out) else { return false };
        if !Expr::Add(terms).is_zero() {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{augment, models, parse_model};
    use crate::symcore::parse_expr;

    fn rf(s: &str) -> RatFunc {
        parse_expr(s).unwrap().canonical().unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn ansatz_counts() {
        let a = augment(&models::vajda()).unwrap();
        let z = build_ansatz(&a, 1).unwrap();
        // x1 x2 w over 7 variables; four parameters over themselves.
        assert_eq!(z.n_unknowns(), 3 * binom(8, 1) + 4 * binom(5, 1));
        let z2 = build_ansatz(&a, 2).unwrap();
        assert_eq!(z2.n_unknowns(), 3 * binom(9, 2) + 4 * binom(6, 2));
        let x1x2 = Monomial::from_pairs(vec![(Atom::sym("x1"), 1), (Atom::sym("x2"), 1)]);
        let w = z2.vars.iter().position(|v| v == "w").unwrap();
        assert!(z2.columns.contains(&(w, x1x2)));
        assert!(matches!(build_ansatz(&a, 0), Err(SymmetryError::Degree)));
    }

    #[test]
    fn toy_has_trivial_kernel() {
        let a = augment(&parse_model("states x\nparams theta\nddt x = -theta*x\noutput y = x\n").unwrap()).unwrap();
        let gens = find_generators(&a, 2).unwrap();
        assert!(gens.is_empty());
    }

    #[test]
    fn fast_assembly_matches_symbolic() {
        for (src, d) in [(models::VAJDA, 1), (models::VAJDA, 2), (models::PK, 1)] {
            let a = augment(&parse_model(src).unwrap()).unwrap();
            let fast = determining_system(&a, build_ansatz(&a, d).unwrap()).unwrap();
            let slow = determining_system_symbolic(&a, build_ansatz(&a, d).unwrap()).unwrap();
            let n = fast.ansatz.n_unknowns();
            let kf = sparse_nullspace(fast.rows.clone(), n);
            let ks = sparse_nullspace(slow.rows.clone(), n);
            assert_eq!(kf, ks);
        }
    }

    #[test]
    fn vajda_degree_two() {
        let a = augment(&models::vajda()).unwrap();
        let gens = find_generators(&a, 2).unwrap();
        assert_eq!(gens.len(), 3);
        let g = gens.iter().find(|g| g.support() == ["theta2", "w"]).expect("theta2/w generator");
        assert_eq!(g.eta_of("theta2").unwrap(), &RatFunc::one());
        assert_eq!(g.eta_of("w").unwrap(), &rf("-x1*x2"));
    }

    #[test]
    fn pk_kernels() {
        let a = augment(&models::pk()).unwrap();
        assert_eq!(find_generators(&a, 1).unwrap().len(), 1);
        let gens = find_generators(&a, 2).unwrap();
        assert_eq!(gens.len(), 4);
        let g = gens.iter().find(|g| g.support() == ["x1", "k1", "k2", "u"]).expect("x1 scaling");
        assert_eq!(g.eta_of("u").unwrap(), &rf("u - (k1 + k2)*x1"));
        assert!(gens.iter().any(|g| g.support() == ["x3", "k2", "k3", "k7", "s3", "u"]));
    }

    #[test]
    fn parameter_multiples_are_not_counted() {
        let a = augment(&models::vajda()).unwrap();
        let sys = determining_system(&a, build_ansatz(&a, 2).unwrap()).unwrap();
        let raw = sparse_nullspace(sys.rows.clone(), sys.ansatz.n_unknowns());
        assert_eq!(raw.len(), 7);
        assert_eq!(generator_basis(&a, &sys).unwrap().len(), 3);
    }

    #[test]
    fn big_scaling_generator_checks() {
        let a = augment(&models::big_known()).unwrap();
        let g = InfinitesimalGenerator { eta: vec![("beta".into(), rf("beta")), ("p".into(), rf("-p"))] };
        assert!(check_generator(&g, &a));
        let bumped = InfinitesimalGenerator { eta: vec![("beta".into(), rf("beta")), ("p".into(), rf("-2*p"))] };
        assert!(!check_generator(&bumped, &a));
    }

    #[test]
    fn perturbed_generator_fails() {
        let a = augment(&models::vajda()).unwrap();
        let mut g = find_generators(&a, 2).unwrap().remove(0);
        let (v, e) = g.eta[0].clone();
        g.eta[0] = (v, e.add(&RatFunc::int(1)));
        assert!(!check_generator(&g, &a));
    }

    #[test]
    fn ic_preserving_generators() {
        let m = models::nfkb();
        let a = augment(&m).unwrap();
        let ics = m.ics_canonical().unwrap();
        let all = find_generators(&a, 1).unwrap();
        let kept = find_generators_with_ics(&a, &ics, 1).unwrap();
        assert!(kept.iter().all(|g| preserves_ics(g, &ics)));
        assert!(all.iter().any(|g| !preserves_ics(g, &ics)));
        let global = kept.iter().find(|g| g.eta_of("k10").is_some()).unwrap();
        for x in &m.states {
            assert_eq!(global.eta_of(x), Some(&rf(x)), "{x}");
        }
    }

    #[test]
    fn chained_ics_resolve() {
        let ics = BTreeMap::from([("y".to_string(), rf("2*x")), ("z".to_string(), rf("y + a"))]);
        let r = resolve_ics(&ics).unwrap();
        assert_eq!(r["z"], rf("2*x + a"));
        let cyclic = BTreeMap::from([("x".to_string(), rf("y")), ("y".to_string(), rf("x"))]);
        assert!(matches!(resolve_ics(&cyclic), Err(SymmetryError::CyclicIc)));
    }
}
