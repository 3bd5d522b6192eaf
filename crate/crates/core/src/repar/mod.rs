//! Automatic reparameterization: break one symmetry per step by fixing a
//! transformed parameter to 1, until the model is FISPO.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::fispo::{classify, FispoError, FispoOptions, FispoReport};
use crate::modelspec::{augment, emit_model, ModelError, ModelSpec};
use crate::symcore::{Expr, RatFunc, Rational, SymError};
use crate::symmetry::{
    exponentiate, find_generators, ClosedForm, find_generators_with_ics, preserves_ics, InfinitesimalGenerator, LieTransformation, SymmetryError, DEFAULT_MAX_ORDER,
};

#[derive(Debug, Error)]
pub enum ReparError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fispo(#[from] FispoError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("`{0}` cannot be normalized by this transformation")]
    NotRemovable(String),
    #[error("rewritten model fails the symmetry check: {0}")]
    Check(String),
    #[error("no generator removes an unidentifiable parameter up to ansatz degree {degree}; the model is irreparable by this method")]
    Irreparable { degree: usize },
    #[error("`{param}` is not removable by any generator up to ansatz degree {degree}")]
    PinNotRemovable { param: String, degree: usize },
    #[error("step removing `{param}` changed the deficiency from {before} to {after}")]
    NoDecrement { param: String, before: usize, after: usize },
    #[error("selection aborted")]
    Aborted,
}

/// How the group parameter was solved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Solved {
    /// `ε = E`.
    Epsilon(RatFunc),
    /// `exp(ε) = E`.
    ExpEpsilon(RatFunc),
}

impl Solved {
    pub fn describe(&self) -> String {
        match self {
            Solved::Epsilon(e) => format!("eps = {}", Expr::from_ratfunc(e)),
            Solved::ExpEpsilon(e) => format!("exp(eps) = {}", Expr::from_ratfunc(e)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsilonSolution {
    pub param: String,
    pub solved: Solved,
    /// Transformed variables other than `param`, with `ε` eliminated.
    pub forward: Vec<(String, RatFunc)>,
    pub transformation: LieTransformation,
}

fn affine_parts(t: &LieTransformation, p: &str) -> Option<(RatFunc, RatFunc)> {
    if !t.maps.iter().all(|(_, m)| m.is_polynomial_in_eps()) {
        return None;
    }
    let m = t.map(p)?;
    let mut a = RatFunc::zero();
    let mut b = RatFunc::zero();
    for term in &m.terms {
        match term.eps_pow {
            0 => a = a.add(&term.coef),
            1 => b = b.add(&term.coef),
            _ => return None,
        }
    }
    (!b.is_zero()).then_some((a, b))
}

fn exponential_part(t: &LieTransformation, p: &str) -> Option<(RatFunc, Rational)> {
    if !t.maps.iter().all(|(_, m)| m.is_exponential()) {
        return None;
    }
    match t.map(p)?.terms.as_slice() {
        [term] if term.eps_pow == 0 && !term.rate.is_zero() => Some((term.coef.clone(), term.rate.clone())),
        _ => None,
    }
}

/// Parameters of `params` whose transformed value can be set to 1 by
/// solving for `ε` (affine maps) or `exp(ε)` (single exponential term).
pub fn removable_parameters(t: &LieTransformation, params: &[String]) -> Vec<String> {
    params
        .iter()
        .filter(|p| t.map(p).is_some() && (affine_parts(t, p).is_some() || exponential_part(t, p).is_some()))
        .cloned()
        .collect()
}

type EvalMap = Box<dyn Fn(&ClosedForm) -> Result<RatFunc, SymError>>;

/// Solves `p* = 1` and eliminates `ε` from the other maps.
pub fn solve_epsilon(t: &LieTransformation, p: &str) -> Result<EpsilonSolution, ReparError> {
    let (solved, eval): (Solved, EvalMap) =
        if let Some((a, b)) = affine_parts(t, p) {
            let eps = RatFunc::one().sub(&a).div(&b)?;
            let e = eps.clone();
            (
                Solved::Epsilon(eps),
                Box::new(move |m| {
                    let mut acc = RatFunc::zero();
                    for term in &m.terms {
                        acc = acc.add(&term.coef.mul(&e.pow(term.eps_pow as i64)?));
                    }
                    Ok(acc)
                }),
            )
        } else if let Some((a, c)) = exponential_part(t, p) {
            // a·e^{cε} = 1  ⇒  e^{λε} = a^{−λ/c}
            let exp_eps = a.pow_algebraic(&(-Rational::one() / &c))?;
            (
                Solved::ExpEpsilon(exp_eps),
                Box::new(move |m| {
                    let mut acc = RatFunc::zero();
                    for term in &m.terms {
                        acc = acc.add(&term.coef.mul(&a.pow_algebraic(&(-&term.rate / &c))?));
                    }
                    Ok(acc)
                }),
            )
        } else {
            return Err(ReparError::NotRemovable(p.to_string()));
        };
    let unit = eval(t.map(p).expect("p is in the support"))?;
    if !unit.is_one() {
        return Err(ReparError::Check(format!("`{p}` normalizes to {unit}, not 1")));
    }
    let mut forward = Vec::new();
    for (v, m) in &t.maps {
        if v != p {
            forward.push((v.clone(), eval(m)?));
        }
    }
    Ok(EpsilonSolution { param: p.to_string(), solved, forward, transformation: t.clone() })
}

#[derive(Debug, Clone)]
pub struct ReparStep {
    pub generator: InfinitesimalGenerator,
    pub eliminated: String,
    pub solved: Solved,
    /// New variable → expression in the variables before the step.
    pub forward: Vec<(String, RatFunc)>,
    pub model: ModelSpec,
    pub warnings: Vec<String>,
    /// Ansatz degree and kernel size of the round that produced the step.
    pub degree: usize,
    pub kernel_dimension: usize,
    /// Parameters the chosen transformation could have normalized.
    pub removable: Vec<String>,
}

impl ReparStep {
    pub fn forward_map(&self) -> BTreeMap<String, RatFunc> {
        self.forward.iter().cloned().collect()
    }
}

fn unit_binding(p: &str) -> BTreeMap<String, RatFunc> {
    BTreeMap::from([(p.to_string(), RatFunc::one())])
}

fn set_to_one(e: &Expr, p: &str) -> Result<Expr, SymError> {
    if e.symbols().contains(p) {
        e.substitute(&BTreeMap::from([(p.to_string(), Expr::num(1))]))
    } else {
        Ok(e.clone())
    }
}

/// Rewrites the model for a solved normalization.
///
/// The transformation is a symmetry with `ε` constant along trajectories,
/// so the transformed variables satisfy the original equations with the
/// eliminated parameter equal to 1. Variables keep their names. The
/// identity is verified exactly before the step is accepted.
pub fn apply_step(m: &ModelSpec, s: &EpsilonSolution) -> Result<ReparStep, ReparError> {
    let a = augment(m)?;
    let p = &s.param;
    let one = unit_binding(p);
    let fwd = s.forward.iter().cloned().collect::<BTreeMap<_, _>>();
    let image = |v: &str| fwd.get(v).cloned().unwrap_or_else(|| RatFunc::sym(v));

    for (k, x) in m.states.iter().enumerate() {
        let lhs = a.total_derivative(&image(x));
        let rhs = a.dynamics[k].substitute(&one).try_substitute(&fwd)?;
        if lhs != rhs {
            return Err(ReparError::Check(format!("d/dt {x}")));
        }
    }
    for (g, name) in a.outputs.iter().zip(&a.output_names) {
        if g.substitute(&one).try_substitute(&fwd)? != *g {
            return Err(ReparError::Check(format!("output {name}")));
        }
    }

    let mut next = m.clone();
    next.params.retain(|q| q != p);
    for e in next.dynamics.iter_mut() {
        *e = set_to_one(e, p)?;
    }
    for (_, e) in next.outputs.iter_mut() {
        *e = set_to_one(e, p)?;
    }

    let mut warnings = Vec::new();
    let ics = m.ics_canonical()?;
    let mut kept = BTreeMap::new();
    for (x, e) in &m.ics {
        let h = &ics[x];
        let residual = image(x).sub(&h.substitute(&one).try_substitute(&fwd)?);
        if on_manifold(&residual, &ics) {
            kept.insert(x.clone(), set_to_one(e, p)?);
        } else {
            warnings.push(format!("initial condition for `{x}` is not preserved and was dropped"));
        }
    }
    next.ics = kept;
    next.validate()?;
    Ok(ReparStep {
        generator: s.transformation.generator.clone(),
        eliminated: p.clone(),
        solved: s.solved.clone(),
        forward: s.forward.clone(),
        model: next,
        warnings,
        degree: 0,
        kernel_dimension: 0,
        removable: Vec::new(),
    })
}

/// Whether `r` vanishes once the initial-condition relations are imposed.
fn on_manifold(r: &RatFunc, ics: &BTreeMap<String, RatFunc>) -> bool {
    let mut r = r.clone();
    for _ in 0..=ics.len() {
        if r.is_zero() {
            return true;
        }
        if !r.symbols().iter().any(|s| ics.contains_key(s)) {
            break;
        }
        match r.try_substitute(ics) {
            Ok(next) => r = next,
            Err(_) => return false,
        }
    }
    r.is_zero()
}

/// A generator offered for selection.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub transformation: LieTransformation,
    /// All parameters the transformation can normalize.
    pub removable: Vec<String>,
    /// The removable parameters that are currently unidentifiable.
    pub eligible: Vec<String>,
    pub transforms_state: bool,
    /// Whether the initial-condition relations are carried over.
    pub preserves_ics: bool,
}

impl Candidate {
    pub fn generator(&self) -> &InfinitesimalGenerator {
        &self.transformation.generator
    }
}

/// One selection point: a model, its report and the generators found at
/// the current ansatz degree.
pub struct Round<'a> {
    /// Zero-based step index.
    pub index: usize,
    pub degree: usize,
    pub degree_cap: usize,
    pub model: &'a ModelSpec,
    pub report: &'a FispoReport,
    pub kernel_dimension: usize,
    /// Generators with at least one eligible parameter, smallest
    /// support first.
    pub candidates: &'a [Candidate],
}

pub enum Selection {
    Take { candidate: usize, param: String },
    Escalate,
    Stop,
}

pub trait Selector {
    fn select(&mut self, round: &Round) -> Result<Selection, ReparError>;
}

/// Smallest-support generator, preferring those that keep the initial
/// conditions, then the first eligible parameter in declaration order. Escalates while there is no candidate or the best
/// one transforms a state.
pub struct Automatic;

fn pick_for(round: &Round, target: Option<&str>) -> Selection {
    let best = round
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| target.is_none_or(|t| c.eligible.iter().any(|r| r == t)))
        .min_by_key(|(i, c)| (!c.preserves_ics, c.transformation.maps.len(), *i));
    match best {
        Some((i, c)) if !(c.transforms_state && round.degree < round.degree_cap) => {
            let param = target.map(str::to_string).unwrap_or_else(|| c.eligible[0].clone());
            Selection::Take { candidate: i, param }
        }
        _ if round.degree < round.degree_cap => Selection::Escalate,
        _ => Selection::Stop,
    }
}

impl Selector for Automatic {
    fn select(&mut self, round: &Round) -> Result<Selection, ReparError> {
        Ok(pick_for(round, None))
    }
}

/// Removes the listed parameters in order, then continues automatically.
pub struct Pinned {
    pub remove: Vec<String>,
}

impl Selector for Pinned {
    fn select(&mut self, round: &Round) -> Result<Selection, ReparError> {
        let Some(target) = self.remove.get(round.index) else { return Ok(pick_for(round, None)) };
        match pick_for(round, Some(target)) {
            Selection::Stop => Err(ReparError::PinNotRemovable { param: target.clone(), degree: round.degree }),
            s => Ok(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReparOptions {
    pub degree_cap: usize,
    pub max_order: usize,
    pub fispo: FispoOptions,
}

impl Default for ReparOptions {
    fn default() -> Self {
        ReparOptions { degree_cap: 2, max_order: DEFAULT_MAX_ORDER, fispo: FispoOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct ReparResult {
    pub original: ModelSpec,
    pub initial_report: FispoReport,
    pub steps: Vec<ReparStep>,
    pub model: ModelSpec,
    pub report: FispoReport,
    /// Final variable → expression in the original variables.
    pub mapping: Vec<(String, RatFunc)>,
}

impl ReparResult {
    pub fn mapping_of(&self, v: &str) -> Option<&RatFunc> {
        self.mapping.iter().find(|(n, _)| n == v).map(|(_, e)| e)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let steps: Vec<serde_json::Value> = self
            .steps
            .iter()
            .map(|s| {
                let fwd: Vec<serde_json::Value> = s
                    .forward
                    .iter()
                    .map(|(v, e)| serde_json::json!({ "var": v, "expr": Expr::from_ratfunc(e).to_string() }))
                    .collect();
                serde_json::json!({
                    "generator": s.generator.to_json_value(),
                    "degree": s.degree,
                    "kernel_dimension": s.kernel_dimension,
                    "removable": s.removable,
                    "eliminated": s.eliminated,
                    "solved": s.solved.describe(),
                    "forward_map": fwd,
                    "warnings": s.warnings,
                })
            })
            .collect();
        let mapping: Vec<serde_json::Value> = self
            .mapping
            .iter()
            .map(|(v, e)| serde_json::json!({ "var": v, "expr": Expr::from_ratfunc(e).to_string() }))
            .collect();
        serde_json::json!({
            "model": self.original.name,
            "steps": steps,
            "final_model": emit_model(&self.model),
            "mapping": mapping,
            "initial_report": self.initial_report,
            "final_report": self.report,
        })
    }
}

/// Transformation variables of the final model, in declaration order.
fn variables(m: &ModelSpec) -> Vec<String> {
    m.states.iter().chain(&m.params).cloned().chain(m.unknown_inputs.iter().map(|w| w.name.clone())).collect()
}

/// Back-substitutes the step maps in reverse order.
pub fn compose_mapping(steps: &[ReparStep], final_model: &ModelSpec) -> Result<Vec<(String, RatFunc)>, ReparError> {
    let mut map: Vec<(String, RatFunc)> = variables(final_model).into_iter().map(|v| (v.clone(), RatFunc::sym(&v))).collect();
    for s in steps.iter().rev() {
        let fwd = s.forward_map();
        for (_, e) in map.iter_mut() {
            *e = e.try_substitute(&fwd)?;
        }
    }
    Ok(map)
}

fn candidates(
    m: &ModelSpec,
    report: &FispoReport,
    generators: &[InfinitesimalGenerator],
    ics: &BTreeMap<String, RatFunc>,
    max_order: usize,
) -> Vec<Candidate> {
    let unidentifiable: BTreeSet<String> = report.unidentifiable_params().into_iter().collect();
    let states: BTreeSet<&str> = m.states.iter().map(String::as_str).collect();
    let mut out: Vec<Candidate> = Vec::new();
    for g in generators {
        if out.iter().any(|c| c.generator() == g) {
            continue;
        }
        let Ok(t) = exponentiate(g, max_order) else { continue };
        let removable = removable_parameters(&t, &m.params);
        let eligible: Vec<String> = removable.iter().filter(|p| unidentifiable.contains(*p)).cloned().collect();
        if eligible.is_empty() {
            continue;
        }
        let transforms_state = t.support().iter().any(|v| states.contains(v));
        let preserves_ics = preserves_ics(g, ics);
        out.push(Candidate { transformation: t, removable, eligible, transforms_state, preserves_ics });
    }
    out
}

/// Runs classification, symmetry search and elimination until FISPO.
pub fn autorepar(m: &ModelSpec, selector: &mut dyn Selector, opts: &ReparOptions) -> Result<ReparResult, ReparError> {
    let initial_report = classify(m, &opts.fispo)?;
    let mut model = m.clone();
    let mut report = initial_report.clone();
    let mut steps: Vec<ReparStep> = Vec::new();
    while !report.fispo {
        let a = augment(&model)?;
        let mut chosen = None;
        for degree in 1..=opts.degree_cap.max(1) {
            let generators = find_generators(&a, degree)?;
            let ics = model.ics_canonical()?;
            let mut pool = Vec::new();
            if !ics.is_empty() {
                pool = find_generators_with_ics(&a, &ics, degree)?;
            }
            pool.extend(generators.iter().cloned());
            let cands = candidates(&model, &report, &pool, &ics, opts.max_order);
            let round = Round {
                index: steps.len(),
                degree,
                degree_cap: opts.degree_cap.max(1),
                model: &model,
                report: &report,
                kernel_dimension: generators.len(),
                candidates: &cands,
            };
            match selector.select(&round)? {
                Selection::Take { candidate, param } => {
                    let c = &cands[candidate];
                    chosen = Some((c.transformation.clone(), param, degree, generators.len(), c.removable.clone()));
                    break;
                }
                Selection::Escalate => continue,
                Selection::Stop => break,
            }
        }
        let Some((t, param, degree, kernel_dimension, removable)) = chosen else {
            return Err(ReparError::Irreparable { degree: opts.degree_cap });
        };
        let sol = solve_epsilon(&t, &param)?;
        let mut step = apply_step(&model, &sol)?;
        step.degree = degree;
        step.kernel_dimension = kernel_dimension;
        step.removable = removable;
        let next_report = classify(&step.model, &opts.fispo)?;
        let before = report.dim - report.rank;
        let after = next_report.dim - next_report.rank;
        if after + 1 != before {
            return Err(ReparError::NoDecrement { param, before, after });
        }
        model = step.model.clone();
        report = next_report;
        steps.push(step);
    }
    let mapping = compose_mapping(&steps, &model)?;
    Ok(ReparResult { original: m.clone(), initial_report, steps, model, report, mapping })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{models, parse_model};
    use crate::symcore::parse_expr;

    fn rf(s: &str) -> RatFunc {
        parse_expr(s).unwrap().canonical().unwrap()
    }

    fn gen(eta: &[(&str, &str)]) -> InfinitesimalGenerator {
        InfinitesimalGenerator { eta: eta.iter().map(|(v, e)| (v.to_string(), rf(e))).collect() }
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn vajda_translation() {
        let t = exponentiate(&gen(&[("theta2", "1"), ("w", "-x1*x2")]), 8).unwrap();
        assert_eq!(removable_parameters(&t, &names(&["theta1", "theta2"])), ["theta2"]);
        let s = solve_epsilon(&t, "theta2").unwrap();
        assert_eq!(s.solved, Solved::Epsilon(rf("1 - theta2")));
        assert_eq!(s.forward, vec![("w".to_string(), rf("w + x1*x2*(theta2 - 1)"))]);
        let step = apply_step(&models::vajda(), &s).unwrap();
        assert_eq!(step.model.params, ["theta1", "theta3", "theta4"]);
        assert_eq!(step.model.dynamics[0].canonical().unwrap(), rf("w + theta1*x1^2 + x1*x2"));
        assert_eq!(step.model.dynamics[1], models::vajda().dynamics[1]);
        assert_eq!(step.model.ics.len(), 2);
    }

    #[test]
    fn pk_scaling_solves_for_exp() {
        let t = exponentiate(&gen(&[("x1", "x1"), ("k1", "-k1"), ("k2", "-k2"), ("u", "u - (k1 + k2)*x1")]), 8).unwrap();
        assert_eq!(removable_parameters(&t, &names(&["k1", "k2", "k3"])), ["k1", "k2"]);
        let s = solve_epsilon(&t, "k1").unwrap();
        assert_eq!(s.solved, Solved::ExpEpsilon(rf("k1")));
        let f: BTreeMap<_, _> = s.forward.into_iter().collect();
        assert_eq!(f["x1"], rf("k1*x1"));
        assert_eq!(f["k2"], rf("k2/k1"));
    }

    #[test]
    fn mixed_maps_are_not_removable() {
        let t = LieTransformation {
            generator: gen(&[("a", "1"), ("b", "b")]),
            maps: vec![
                ("a".into(), ClosedForm { terms: exponentiate(&gen(&[("a", "1")]), 8).unwrap().maps[0].1.terms.clone() }),
                ("b".into(), exponentiate(&gen(&[("b", "b")]), 8).unwrap().maps[0].1.clone()),
            ],
        };
        assert!(removable_parameters(&t, &names(&["a", "b"])).is_empty());
        assert!(matches!(solve_epsilon(&t, "a"), Err(ReparError::NotRemovable(_))));
    }

    #[test]
    fn bad_step_is_rejected() {
        // A scaling of theta2 alone is not a symmetry.
        let t = exponentiate(&gen(&[("theta2", "theta2")]), 8).unwrap();
        let s = solve_epsilon(&t, "theta2").unwrap();
        assert!(matches!(apply_step(&models::vajda(), &s), Err(ReparError::Check(_))));
    }

    #[test]
    fn vajda_automatic() {
        let r = autorepar(&models::vajda(), &mut Automatic, &ReparOptions::default()).unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].eliminated, "theta2");
        assert_eq!(r.steps[0].degree, 2);
        assert!(r.report.fispo);
        assert_eq!(r.mapping_of("w").unwrap(), &rf("w + x1*x2*(theta2 - 1)"));
        assert_eq!(r.mapping_of("x2").unwrap(), &rf("x2"));
        assert_eq!(r.mapping_of("theta3").unwrap(), &rf("theta3"));
    }

    #[test]
    fn already_fispo() {
        let m = parse_model("states x\nparams a\nddt x = -a*x\noutput y = x\n").unwrap();
        let r = autorepar(&m, &mut Automatic, &ReparOptions::default()).unwrap();
        assert!(r.steps.is_empty());
        assert_eq!(r.mapping, vec![("x".to_string(), rf("x")), ("a".to_string(), rf("a"))]);
    }

    #[test]
    fn pinned_unknown_parameter_fails() {
        let err = autorepar(&models::vajda(), &mut Pinned { remove: names(&["theta1"]) }, &ReparOptions::default());
        assert!(matches!(err, Err(ReparError::PinNotRemovable { .. })));
    }
}
