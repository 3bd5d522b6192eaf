//! Numerical oracle: simulation, symmetry-orbit invariance of outputs and
//! input-output equivalence of a model and its reparameterization.

mod ode;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modelspec::{split_derivative, ModelError, ModelSpec};
use crate::repar::ReparResult;
use crate::symcore::RatFunc;
use crate::symmetry::{resolve_ics, LieTransformation, SymmetryError};

pub use ode::{dopri5, Tolerances};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("pole or non-finite value at t = {0}")]
    Pole(f64),
    #[error("step size collapsed at t = {0}")]
    StepCollapse(f64),
    #[error("no value for `{0}`")]
    Unbound(String),
    #[error("time grid must be strictly increasing with at least two points")]
    Grid,
    #[error("no usable instantiation after {0} draws")]
    Redraws(usize),
}

/// An input signal as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Signal {
    /// Coefficients in increasing degree.
    Polynomial(Vec<f64>),
    /// `values[i]` on `[breaks[i], breaks[i+1])`; the first value also
    /// holds before `breaks[0]`.
    PiecewiseConstant { breaks: Vec<f64>, values: Vec<f64> },
}

impl Signal {
    /// `k`-th time derivative at `t`.
    pub fn derivative(&self, k: usize, t: f64) -> f64 {
        match self {
            Signal::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(k)
                .map(|(i, a)| a * (i - k + 1..=i).map(|j| j as f64).product::<f64>() * t.powi((i - k) as i32))
                .sum(),
            Signal::PiecewiseConstant { breaks, values } => {
                if k > 0 {
                    return 0.0;
                }
                let i = breaks.iter().rposition(|b| *b <= t).unwrap_or(0);
                values.get(i).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }
}

/// Numerical values for one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instantiation {
    /// Parameters and initial states.
    pub values: BTreeMap<String, f64>,
    pub inputs: BTreeMap<String, Signal>,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectories {
    pub t: Vec<f64>,
    pub outputs: Vec<(String, Vec<f64>)>,
}

impl Trajectories {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for (n, _) in &self.outputs {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (i, t) in self.t.iter().enumerate() {
            s.push_str(&format!("{t}"));
            for (_, v) in &self.outputs {
                s.push_str(&format!(",{}", v[i]));
            }
            s.push('\n');
        }
        s
    }
}

/// Largest pointwise absolute and relative deviation over all outputs.
/// The relative deviation of one output is `max|a − b| / max|a|`.
pub fn deviation(a: &Trajectories, b: &Trajectories) -> (f64, f64) {
    let mut abs: f64 = 0.0;
    let mut rel: f64 = 0.0;
    for ((_, x), (_, y)) in a.outputs.iter().zip(&b.outputs) {
        let d = x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = x.iter().map(|p| p.abs()).fold(0.0, f64::max);
        abs = abs.max(d);
        rel = rel.max(if scale > 0.0 { d / scale } else { d });
    }
    (abs, rel)
}

struct Compiled {
    states: Vec<String>,
    index: HashMap<String, usize>,
    dynamics: Vec<RatFunc>,
    outputs: Vec<RatFunc>,
    output_names: Vec<String>,
    inputs: Vec<String>,
}

impl Compiled {
    fn new(m: &ModelSpec) -> Result<Compiled, ModelError> {
        Ok(Compiled {
            states: m.states.clone(),
            index: m.states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect(),
            dynamics: m.dynamics_canonical()?,
            outputs: m.outputs_canonical()?,
            output_names: m.outputs.iter().map(|(n, _)| n.clone()).collect(),
            inputs: m.known_inputs.iter().map(|u| u.name.clone()).chain(m.unknown_inputs.iter().map(|w| w.name.clone())).collect(),
        })
    }
}

/// Value of a symbol of `c` at time `t` with states `y`.
fn lookup(c: &Compiled, params: &BTreeMap<String, f64>, inputs: &BTreeMap<String, Signal>, name: &str, t: f64, y: &[f64]) -> Option<f64> {
    if let Some(&i) = c.index.get(name) {
        return Some(y[i]);
    }
    if let Some(v) = params.get(name) {
        return Some(*v);
    }
    let (base, order) = split_derivative(name);
    c.inputs.iter().any(|u| u == base).then(|| inputs.get(base).map(|s| s.derivative(order, t))).flatten()
}

/// A second model driven alongside the first: its parameters and initial
/// states are images of the first model's values, and its unknown inputs
/// are images evaluated along the first model's trajectory.
struct Image<'a> {
    c: Compiled,
    params: BTreeMap<String, f64>,
    input_maps: BTreeMap<String, &'a RatFunc>,
    extra: &'a BTreeMap<String, f64>,
}

fn finite(v: Option<f64>, t: f64) -> Result<f64, ValidateError> {
    match v {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(ValidateError::Pole(t)),
    }
}

fn check_grid(grid: &[f64]) -> Result<(), ValidateError> {
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ValidateError::Grid);
    }
    Ok(())
}

fn initial_state(c: &Compiled, values: &BTreeMap<String, f64>) -> Result<Vec<f64>, ValidateError> {
    c.states.iter().map(|s| values.get(s).copied().ok_or_else(|| ValidateError::Unbound(s.clone()))).collect()
}

fn bound_params(m: &ModelSpec, values: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>, ValidateError> {
    m.params.iter().map(|p| values.get(p).map(|v| (p.clone(), *v)).ok_or_else(|| ValidateError::Unbound(p.clone()))).collect()
}

fn check_inputs(c: &Compiled, inst: &Instantiation, skip: &BTreeMap<String, &RatFunc>) -> Result<(), ValidateError> {
    for u in &c.inputs {
        if !inst.inputs.contains_key(u) && !skip.contains_key(u) {
            return Err(ValidateError::Unbound(u.clone()));
        }
    }
    Ok(())
}

/// Integrates the model and samples its outputs on the grid.
pub fn simulate(m: &ModelSpec, inst: &Instantiation, tol: Tolerances) -> Result<Trajectories, ValidateError> {
    let extra = BTreeMap::new();
    simulate_pair(m, None, inst, &extra, tol).map(|(a, _)| a)
}

/// Simulates `m` and, if given, an image model with its variables mapped
/// from `m`'s by expressions in `m`'s symbols and `extra`.
fn simulate_pair(
    m: &ModelSpec,
    image: Option<(&ModelSpec, &BTreeMap<String, RatFunc>)>,
    inst: &Instantiation,
    extra: &BTreeMap<String, f64>,
    tol: Tolerances,
) -> Result<(Trajectories, Option<Trajectories>), ValidateError> {
    check_grid(&inst.grid)?;
    let c = Compiled::new(m)?;
    let params = bound_params(m, &inst.values)?;
    check_inputs(&c, inst, &BTreeMap::new())?;
    let mut y0 = initial_state(&c, &inst.values)?;
    let n = y0.len();
    let t0 = inst.grid[0];

    let img = match image {
        None => None,
        Some((im, map)) => {
            let ic = Compiled::new(im)?;
            let at_start = |e: &RatFunc| -> Result<f64, ValidateError> {
                finite(e.evaluate_f64(&mut |s| lookup(&c, &params, &inst.inputs, s, t0, &y0).or_else(|| extra.get(s).copied())), t0)
            };
            let mut values = BTreeMap::new();
            for v in im.states.iter().chain(&im.params) {
                let x = match map.get(v) {
                    Some(e) => at_start(e)?,
                    None => {
                        let e = RatFunc::sym(v);
                        at_start(&e).map_err(|_| ValidateError::Unbound(v.clone()))?
                    }
                };
                values.insert(v.clone(), x);
            }
            let input_maps: BTreeMap<String, &RatFunc> =
                im.unknown_inputs.iter().filter_map(|w| map.get(&w.name).map(|e| (w.name.clone(), e))).collect();
            check_inputs(&ic, inst, &input_maps)?;
            let p2 = bound_params(im, &values)?;
            y0.extend(initial_state(&ic, &values)?);
            Some(Image { c: ic, params: p2, input_maps, extra })
        }
    };

    let value_a = |name: &str, t: f64, y: &[f64]| lookup(&c, &params, &inst.inputs, name, t, &y[..n]).or_else(|| extra.get(name).copied());
    let value_b = |im: &Image, name: &str, t: f64, y: &[f64]| -> Option<f64> {
        if let Some(e) = im.input_maps.get(name) {
            return e.evaluate_f64(&mut |s| value_a(s, t, y).or_else(|| im.extra.get(s).copied()));
        }
        lookup(&im.c, &im.params, &inst.inputs, name, t, &y[n..])
    };

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), ValidateError> {
        for (k, f) in c.dynamics.iter().enumerate() {
            dy[k] = finite(f.evaluate_f64(&mut |s| value_a(s, t, y)), t)?;
        }
        if let Some(im) = &img {
            for (k, f) in im.c.dynamics.iter().enumerate() {
                dy[n + k] = finite(f.evaluate_f64(&mut |s| value_b(im, s, t, y)), t)?;
            }
        }
        Ok(())
    };
    let states = dopri5(rhs, &y0, &inst.grid, tol)?;

    let mut a = Trajectories { t: inst.grid.clone(), outputs: c.output_names.iter().map(|n| (n.clone(), Vec::new())).collect() };
    let mut b = img.as_ref().map(|im| Trajectories {
        t: inst.grid.clone(),
        outputs: im.c.output_names.iter().map(|n| (n.clone(), Vec::new())).collect(),
    });
    for (t, y) in inst.grid.iter().zip(&states) {
        for (k, g) in c.outputs.iter().enumerate() {
            a.outputs[k].1.push(finite(g.evaluate_f64(&mut |s| value_a(s, *t, y)), *t)?);
        }
        if let (Some(im), Some(b)) = (&img, b.as_mut()) {
            for (k, g) in im.c.outputs.iter().enumerate() {
                b.outputs[k].1.push(finite(g.evaluate_f64(&mut |s| value_b(im, s, *t, y)), *t)?);
            }
        }
    }
    Ok((a, b))
}

/// Simulates `m` and its image under `map`; returns both output sets.
pub fn simulate_image(
    m: &ModelSpec,
    image: &ModelSpec,
    map: &BTreeMap<String, RatFunc>,
    extra: &BTreeMap<String, f64>,
    inst: &Instantiation,
    tol: Tolerances,
) -> Result<(Trajectories, Trajectories), ValidateError> {
    let (a, b) = simulate_pair(m, Some((image, map)), inst, extra, tol)?;
    Ok((a, b.expect("image simulated")))
}

/// How random instantiations are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub horizon: f64,
    pub n_grid: usize,
    /// Range for parameters, free initial states and input coefficients.
    pub range: (f64, f64),
    /// Per-symbol overrides.
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { horizon: 1.0, n_grid: 41, range: (0.5, 1.5), ranges: BTreeMap::new() }
    }
}

/// Random parameters and states, initial-condition relations imposed.
/// Unknown inputs are polynomials of degree `l`, known inputs of degree
/// equal to their derivative budget.
pub fn random_instantiation(m: &ModelSpec, rng: &mut ChaCha8Rng, s: &Sampling) -> Result<Instantiation, ValidateError> {
    let mut draw = |name: &str| {
        let (lo, hi) = s.ranges.get(name).copied().unwrap_or(s.range);
        lo + (hi - lo) * rng.gen::<f64>()
    };
    let mut values = BTreeMap::new();
    for v in m.params.iter().chain(&m.states) {
        values.insert(v.clone(), draw(v));
    }
    let mut inputs = BTreeMap::new();
    for u in &m.known_inputs {
        inputs.insert(u.name.clone(), Signal::Polynomial((0..=u.derivs.max(1)).map(|_| draw(&u.name)).collect()));
    }
    for w in &m.unknown_inputs {
        inputs.insert(w.name.clone(), Signal::Polynomial((0..=w.l).map(|_| draw(&w.name)).collect()));
    }
    let ics = resolve_ics(&m.ics_canonical()?)?;
    let mut bound = values.clone();
    for c in &m.constants {
        bound.insert(c.0.clone(), crate::symcore::to_f64(&c.1));
    }
    for (x, h) in &ics {
        let v = h.evaluate_f64(&mut |n| bound.get(n).copied());
        values.insert(x.clone(), v.filter(|v| v.is_finite()).ok_or_else(|| ValidateError::Unbound(x.clone()))?);
    }
    let n = s.n_grid.max(2);
    let grid = (0..n).map(|i| s.horizon * i as f64 / (n - 1) as f64).collect();
    Ok(Instantiation { values, inputs, grid })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Group parameter of an orbit trial.
    pub eps: Option<f64>,
    pub max_abs: f64,
    pub max_rel: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub check: String,
    pub model: String,
    pub tol: f64,
    pub trials: Vec<TrialResult>,
    pub max_rel: f64,
    pub pass: bool,
    /// Instantiations rejected because the original model could not be
    /// integrated (poles, blow-up).
    pub redraws: usize,
}

impl TrajectoryReport {
    fn new(check: &str, model: &str, tol: f64, trials: Vec<TrialResult>, redraws: usize) -> TrajectoryReport {
        let max_rel = trials.iter().map(|t| t.max_rel).fold(0.0, f64::max);
        let pass = !trials.is_empty() && trials.iter().all(|t| t.pass);
        TrajectoryReport { check: check.into(), model: model.into(), tol, trials, max_rel, pass, redraws }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub trials: usize,
    pub tol: f64,
    pub seed: u64,
    pub sampling: Sampling,
    pub integrator: Tolerances,
    /// Range of the group parameter in orbit checks.
    pub eps_range: (f64, f64),
    pub max_redraws: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            trials: 10,
            tol: 1e-6,
            seed: 0,
            sampling: Sampling::default(),
            integrator: Tolerances::default(),
            eps_range: (-0.5, 0.5),
            max_redraws: 50,
        }
    }
}

/// Runs `trials` comparisons. A draw is retried only when the original
/// model itself cannot be integrated; failures of the image count.
fn run_trials(
    check: &str,
    m: &ModelSpec,
    opts: &OracleOptions,
    mut one: impl FnMut(&Instantiation, &mut ChaCha8Rng) -> Result<(Option<f64>, Trajectories, Result<Trajectories, ValidateError>), ValidateError>,
) -> Result<TrajectoryReport, ValidateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trials = Vec::new();
    let mut redraws = 0;
    while trials.len() < opts.trials {
        let inst = random_instantiation(m, &mut rng, &opts.sampling)?;
        let (eps, a, b) = match one(&inst, &mut rng) {
            Ok(r) => r,
            Err(ValidateError::Pole(_) | ValidateError::StepCollapse(_)) => {
                redraws += 1;
                if redraws > opts.max_redraws {
                    return Err(ValidateError::Redraws(redraws));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let (max_abs, max_rel) = match &b {
            Ok(b) => deviation(&a, b),
            Err(_) => (f64::INFINITY, f64::INFINITY),
        };
        trials.push(TrialResult { trial: trials.len(), eps, max_abs, max_rel, pass: max_rel <= opts.tol });
    }
    Ok(TrajectoryReport::new(check, &m.name, opts.tol, trials, redraws))
}

/// Compares `m` with its image under `map`, splitting failures of the
/// original (redrawn) from failures of the image (counted).
fn compare(
    m: &ModelSpec,
    image: &ModelSpec,
    map: &BTreeMap<String, RatFunc>,
    extra: &BTreeMap<String, f64>,
    inst: &Instantiation,
    tol: Tolerances,
) -> Result<(Trajectories, Result<Trajectories, ValidateError>), ValidateError> {
    let a = simulate(m, inst, tol)?;
    let b = simulate_image(m, image, map, extra, inst, tol).map(|(_, b)| b);
    Ok((a, b))
}

/// Simulates at a random point and at its image under the transformation
/// for a random `ε`; outputs must coincide.
pub fn symmetry_orbit_check(m: &ModelSpec, t: &LieTransformation, opts: &OracleOptions) -> Result<TrajectoryReport, ValidateError> {
    let map = t.substitution();
    run_trials("symmetry_orbit", m, opts, |inst, rng| {
        let (lo, hi) = opts.eps_range;
        let eps = lo + (hi - lo) * rng.gen::<f64>();
        let extra = BTreeMap::from([("eps".to_string(), eps), ("exp_eps".to_string(), eps.exp())]);
        let (a, b) = compare(m, m, &map, &extra, inst, opts.integrator)?;
        Ok((Some(eps), a, b))
    })
}

/// Orbit check at a fixed group parameter.
pub fn symmetry_orbit_at(m: &ModelSpec, t: &LieTransformation, eps: f64, opts: &OracleOptions) -> Result<TrajectoryReport, ValidateError> {
    let map = t.substitution();
    let extra = BTreeMap::from([("eps".to_string(), eps), ("exp_eps".to_string(), eps.exp())]);
    run_trials("symmetry_orbit", m, opts, |inst, _| {
        let (a, b) = compare(m, m, &map, &extra, inst, opts.integrator)?;
        Ok((Some(eps), a, b))
    })
}

/// Compares `orig` with `image` whose variables are `mapping` of the
/// original ones.
pub fn output_equivalence(
    orig: &ModelSpec,
    image: &ModelSpec,
    mapping: &[(String, RatFunc)],
    opts: &OracleOptions,
) -> Result<TrajectoryReport, ValidateError> {
    let map: BTreeMap<String, RatFunc> = mapping.iter().cloned().collect();
    let extra = BTreeMap::new();
    run_trials("output_equivalence", orig, opts, |inst, _| {
        let (a, b) = compare(orig, image, &map, &extra, inst, opts.integrator)?;
        Ok((None, a, b))
    })
}

/// Original against reparameterized model through the composed mapping.
pub fn oracle_output_equivalence(orig: &ModelSpec, rep: &ReparResult, opts: &OracleOptions) -> Result<TrajectoryReport, ValidateError> {
    output_equivalence(orig, &rep.model, &rep.mapping, opts)
}

/// One seeded instantiation of `orig`, simulated with its
/// reparameterization alongside.
pub fn sample_run(orig: &ModelSpec, rep: &ReparResult, opts: &OracleOptions) -> Result<(Trajectories, Trajectories), ValidateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let map: BTreeMap<String, RatFunc> = rep.mapping.iter().cloned().collect();
    for _ in 0..=opts.max_redraws {
        let inst = random_instantiation(orig, &mut rng, &opts.sampling)?;
        match simulate_image(orig, &rep.model, &map, &BTreeMap::new(), &inst, opts.integrator) {
            Err(ValidateError::Pole(_) | ValidateError::StepCollapse(_)) => continue,
            r => return r,
        }
    }
    Err(ValidateError::Redraws(opts.max_redraws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{models, parse_model};
    use crate::repar::{autorepar, Automatic, ReparOptions};
    use crate::symmetry::{exponentiate, InfinitesimalGenerator};

    fn rf(s: &str) -> RatFunc {
        crate::symcore::parse_expr(s).unwrap().canonical().unwrap()
    }

    fn decay() -> ModelSpec {
        parse_model("states x\nparams k\nddt x = -k*x\noutput y = x\n").unwrap()
    }

    fn grid(n: usize, t: f64) -> Vec<f64> {
        (0..n).map(|i| t * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exponential_decay() {
        let inst = Instantiation {
            values: BTreeMap::from([("x".into(), 1.0), ("k".into(), 1.0)]),
            inputs: BTreeMap::new(),
            grid: grid(11, 1.0),
        };
        let tr = simulate(&decay(), &inst, Tolerances::default()).unwrap();
        assert!((tr.outputs[0].1[10] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn constant_is_exact() {
        let m = parse_model("states x\nparams k\nddt x = 0\noutput y = k*x\n").unwrap();
        let inst = Instantiation {
            values: BTreeMap::from([("x".into(), 0.3), ("k".into(), 2.0)]),
            inputs: BTreeMap::new(),
            grid: grid(5, 3.0),
        };
        let tr = simulate(&m, &inst, Tolerances::default()).unwrap();
        assert!(tr.outputs[0].1.iter().all(|v| *v == 0.6));
        assert_eq!(tr.to_csv().lines().count(), 6);
    }

    #[test]
    fn grid_and_bindings_are_checked() {
        let mut inst = Instantiation { values: BTreeMap::from([("x".into(), 1.0)]), inputs: BTreeMap::new(), grid: vec![0.0, 1.0] };
        assert!(matches!(simulate(&decay(), &inst, Tolerances::default()), Err(ValidateError::Unbound(_))));
        inst.values.insert("k".into(), 1.0);
        inst.grid = vec![0.0, 0.0];
        assert!(matches!(simulate(&decay(), &inst, Tolerances::default()), Err(ValidateError::Grid)));
    }

    #[test]
    fn polynomial_signal_derivatives() {
        let s = Signal::Polynomial(vec![1.0, 2.0, 3.0]);
        assert_eq!(s.value(2.0), 17.0);
        assert_eq!(s.derivative(1, 2.0), 14.0);
        assert_eq!(s.derivative(2, 2.0), 6.0);
        assert_eq!(s.derivative(3, 2.0), 0.0);
        let p = Signal::PiecewiseConstant { breaks: vec![0.0, 1.0], values: vec![2.0, 5.0] };
        assert_eq!((p.value(0.5), p.value(1.5), p.derivative(1, 1.5)), (2.0, 5.0, 0.0));
    }

    #[test]
    fn big_smoke_run() {
        let m = models::big_known();
        let inst = Instantiation {
            values: BTreeMap::from([
                ("G".into(), 5.0),
                ("beta".into(), 300.0),
                ("I".into(), 10.0),
                ("p".into(), 0.03),
                ("si".into(), 0.0005),
                ("c".into(), -0.01),
                ("alpha".into(), 7.0),
                ("gamma".into(), 0.1),
            ]),
            inputs: BTreeMap::from([("u".into(), Signal::Polynomial(vec![0.05]))]),
            grid: grid(101, 1000.0),
        };
        let tr = simulate(&m, &inst, Tolerances::default()).unwrap();
        assert!(tr.outputs[0].1.iter().all(|g| g.is_finite() && *g > 0.0));
    }

    #[test]
    fn pole_is_reported() {
        let m = parse_model("states x\nparams k\nddt x = k/x\noutput y = x^(1/2)\n").unwrap();
        let inst = Instantiation {
            values: BTreeMap::from([("x".into(), 1.0), ("k".into(), -1.0)]),
            inputs: BTreeMap::new(),
            grid: grid(3, 2.0),
        };
        assert!(matches!(simulate(&m, &inst, Tolerances::default()), Err(ValidateError::Pole(_) | ValidateError::StepCollapse(_))));
    }

    #[test]
    fn vajda_orbit_and_equivalence() {
        let m = models::vajda();
        let g = InfinitesimalGenerator { eta: vec![("theta2".into(), rf("1")), ("w".into(), rf("-x1*x2"))] };
        let t = exponentiate(&g, 8).unwrap();
        let r = symmetry_orbit_check(&m, &t, &OracleOptions::default()).unwrap();
        assert!(r.pass, "{}", r.to_json());
        let zero = symmetry_orbit_at(&m, &t, 0.0, &OracleOptions { trials: 2, ..Default::default() }).unwrap();
        assert!(zero.max_rel < 1e-12);

        let rep = autorepar(&m, &mut Automatic, &ReparOptions::default()).unwrap();
        let r = oracle_output_equivalence(&m, &rep, &OracleOptions::default()).unwrap();
        assert!(r.pass, "{}", r.to_json());

        let mut bad = rep.clone();
        for (v, e) in bad.mapping.iter_mut() {
            if v == "w" {
                *e = e.add(&rf("x1/10"));
            }
        }
        let r = oracle_output_equivalence(&m, &bad, &OracleOptions { trials: 3, ..Default::default() }).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn non_symmetry_fails_orbit() {
        let m = models::vajda();
        let g = InfinitesimalGenerator { eta: vec![("theta2".into(), rf("1"))] };
        let t = exponentiate(&g, 8).unwrap();
        let r = symmetry_orbit_check(&m, &t, &OracleOptions { trials: 3, ..Default::default() }).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn tolerance_is_not_masking() {
        let m = models::pk();
        let rep = autorepar(&m, &mut Automatic, &ReparOptions::default()).unwrap();
        let base = OracleOptions { trials: 3, ..Default::default() };
        let fine = OracleOptions { integrator: Tolerances { rtol: 0.5e-9, atol: 0.5e-12 }, ..base.clone() };
        let a = oracle_output_equivalence(&m, &rep, &base).unwrap();
        let b = oracle_output_equivalence(&m, &rep, &fine).unwrap();
        assert!(a.pass && b.pass);
        assert!((a.max_rel - b.max_rel).abs() < base.tol);
    }
}
