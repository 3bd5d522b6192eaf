//! Model description: declarations, dynamics, outputs and initial conditions.

mod dot;
mod dsl;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::symcore::{Expr, RatFunc, Rational, SymError};

pub use dot::emit_dot;
pub use dsl::{emit_model, parse_model};

pub const DEFAULT_U_DERIVS: usize = 2;
pub const DEFAULT_L: usize = 1;

/// Names reserved for the group parameter in closed-form transformations.
pub const RESERVED: [&str; 2] = ["eps", "exp_eps"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}, column {column}: undeclared symbol `{name}`")]
    Undeclared { line: usize, column: usize, name: String },
    #[error("line {line}: {message}")]
    Arity { line: usize, message: String },
    #[error("line {line}, column {column}: duplicate declaration of `{name}`")]
    Duplicate { line: usize, column: usize, name: String },
    #[error("model must declare at least one state")]
    NoStates,
    #[error("model must declare at least one output")]
    NoOutputs,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Sym(#[from] SymError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymbolKind {
    State,
    Parameter,
    KnownInput { order: usize },
    UnknownInput { order: usize },
    Output,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    pub name: String,
    pub kind: SymbolKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnownInput {
    pub name: String,
    /// Number of nonzero derivatives assumed by the analysis.
    pub derivs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownInput {
    pub name: String,
    /// Derivative truncation: `w^(l+1) = 0`.
    pub l: usize,
}

/// `name` followed by `order` apostrophes.
pub fn derivative_name(name: &str, order: usize) -> String {
    format!("{name}{}", "'".repeat(order))
}

/// Splits `w''` into (`w`, 2).
pub fn split_derivative(name: &str) -> (&str, usize) {
    let base = name.trim_end_matches('\'');
    (base, name.len() - base.len())
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub name: String,
    pub states: Vec<String>,
    pub params: Vec<String>,
    pub known_inputs: Vec<KnownInput>,
    pub unknown_inputs: Vec<UnknownInput>,
    pub constants: Vec<(String, Rational)>,
    /// One right-hand side per state, in state order.
    pub dynamics: Vec<Expr>,
    pub outputs: Vec<(String, Expr)>,
    /// Initial conditions; state symbols inside refer to initial values.
    pub ics: BTreeMap<String, Expr>,
}

impl PartialEq for ModelSpec {
    /// Structural equality: same declarations, and expressions equal as
    /// rational functions.
    fn eq(&self, other: &ModelSpec) -> bool {
        let same = |a: &Expr, b: &Expr| match (a.canonical(), b.canonical()) {
            (Ok(x), Ok(y)) => x == y,
            _ => a == b,
        };
        self.name == other.name
            && self.states == other.states
            && self.params == other.params
            && self.known_inputs == other.known_inputs
            && self.unknown_inputs == other.unknown_inputs
            && self.constants == other.constants
            && self.dynamics.len() == other.dynamics.len()
            && self.dynamics.iter().zip(&other.dynamics).all(|(a, b)| same(a, b))
            && self.outputs.len() == other.outputs.len()
            && self.outputs.iter().zip(&other.outputs).all(|((n, a), (m, b))| n == m && same(a, b))
            && self.ics.len() == other.ics.len()
            && self.ics.iter().zip(&other.ics).all(|((n, a), (m, b))| n == m && same(a, b))
    }
}

impl ModelSpec {
    pub fn n_x(&self) -> usize {
        self.states.len()
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        let mut push = |name: String, kind| out.push(Symbol { name, kind });
        for s in &self.states {
            push(s.clone(), SymbolKind::State);
        }
        for p in &self.params {
            push(p.clone(), SymbolKind::Parameter);
        }
        for u in &self.known_inputs {
            for k in 0..=u.derivs {
                push(derivative_name(&u.name, k), SymbolKind::KnownInput { order: k });
            }
        }
        for w in &self.unknown_inputs {
            for k in 0..=w.l {
                push(derivative_name(&w.name, k), SymbolKind::UnknownInput { order: k });
            }
        }
        for (c, _) in &self.constants {
            push(c.clone(), SymbolKind::Constant);
        }
        for (y, _) in &self.outputs {
            push(y.clone(), SymbolKind::Output);
        }
        out
    }

    pub fn kind_of(&self, name: &str) -> Option<SymbolKind> {
        self.symbols().into_iter().find(|s| s.name == name).map(|s| s.kind)
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.params.iter().any(|p| p == name)
    }

    pub fn is_state(&self, name: &str) -> bool {
        self.states.iter().any(|p| p == name)
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Same model with every unknown input truncated at `l`.
    pub fn with_l(&self, l: usize) -> ModelSpec {
        let mut m = self.clone();
        for w in &mut m.unknown_inputs {
            w.l = l;
        }
        m
    }

    /// Same model with every known input given `k` nonzero derivatives.
    pub fn with_u_derivs(&self, k: usize) -> ModelSpec {
        let mut m = self.clone();
        for u in &mut m.known_inputs {
            u.derivs = k;
        }
        m
    }

    pub fn constant_bindings(&self) -> BTreeMap<String, RatFunc> {
        self.constants.iter().map(|(n, v)| (n.clone(), RatFunc::constant(v.clone()))).collect()
    }

    fn canonical(&self, e: &Expr) -> Result<RatFunc, ModelError> {
        let r = e.canonical()?;
        let b = self.constant_bindings();
        Ok(if b.is_empty() { r } else { r.try_substitute(&b)? })
    }

    /// Dynamics with constants substituted, in state order.
    pub fn dynamics_canonical(&self) -> Result<Vec<RatFunc>, ModelError> {
        self.dynamics.iter().map(|e| self.canonical(e)).collect()
    }

    pub fn outputs_canonical(&self) -> Result<Vec<RatFunc>, ModelError> {
        self.outputs.iter().map(|(_, e)| self.canonical(e)).collect()
    }

    pub fn ics_canonical(&self) -> Result<BTreeMap<String, RatFunc>, ModelError> {
        self.ics.iter().map(|(k, e)| Ok((k.clone(), self.canonical(e)?))).collect()
    }

    /// Checks declarations and symbol usage. Parsing already does this with
    /// source positions; this is for programmatically built models.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.states.is_empty() {
            return Err(ModelError::NoStates);
        }
        if self.outputs.is_empty() {
            return Err(ModelError::NoOutputs);
        }
        if self.dynamics.len() != self.states.len() {
            return Err(ModelError::Invalid(format!(
                "{} states but {} right-hand sides",
                self.states.len(),
                self.dynamics.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for s in self.symbols() {
            if RESERVED.contains(&s.name.as_str()) {
                return Err(ModelError::Invalid(format!("`{}` is reserved", s.name)));
            }
            if !seen.insert(s.name.clone()) {
                return Err(ModelError::Invalid(format!("duplicate declaration of `{}`", s.name)));
            }
        }
        let usable = |kind: SymbolKind| !matches!(kind, SymbolKind::Output);
        let declared: BTreeMap<String, SymbolKind> =
            self.symbols().into_iter().filter(|s| usable(s.kind)).map(|s| (s.name, s.kind)).collect();
        for e in self.dynamics.iter().chain(self.outputs.iter().map(|(_, e)| e)) {
            for s in e.symbols() {
                if !declared.contains_key(&s) {
                    return Err(ModelError::Invalid(format!("undeclared symbol `{s}`")));
                }
            }
        }
        for (x, e) in &self.ics {
            if !self.is_state(x) {
                return Err(ModelError::Invalid(format!("initial condition for non-state `{x}`")));
            }
            for s in e.symbols() {
                match declared.get(&s) {
                    Some(SymbolKind::State | SymbolKind::Parameter | SymbolKind::Constant) => {}
                    _ => return Err(ModelError::Invalid(format!("initial condition for `{x}` uses `{s}`"))),
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    State,
    Parameter,
    /// Derivative `order` of unknown input number `input`.
    UnknownInput { input: usize, order: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugVar {
    pub name: String,
    pub kind: VarKind,
}

/// The augmented state `(x, θ, w, w', …, w^(l))` with its dynamics.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    pub vars: Vec<AugVar>,
    /// `d/dt` of each augmented variable, constants substituted.
    pub dynamics: Vec<RatFunc>,
    pub outputs: Vec<RatFunc>,
    pub output_names: Vec<String>,
    /// Known-input derivative chains `[u, u', …, u^(k)]`.
    pub known_inputs: Vec<Vec<String>>,
}

impl AugmentedSystem {
    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    /// Time derivative of a named symbol: augmented dynamics, the next
    /// known-input derivative, or zero.
    pub fn time_derivative(&self, name: &str) -> RatFunc {
        if let Some(i) = self.index_of(name) {
            return self.dynamics[i].clone();
        }
        for chain in &self.known_inputs {
            if let Some(j) = chain.iter().position(|c| c == name) {
                return match chain.get(j + 1) {
                    Some(next) => RatFunc::sym(next),
                    None => RatFunc::zero(),
                };
            }
        }
        RatFunc::zero()
    }

    /// Total time derivative of `e` along the augmented dynamics.
    pub fn lie_derivative(&self, e: &RatFunc) -> RatFunc {
        let mut acc = RatFunc::zero();
        for s in e.symbols() {
            let ds = self.time_derivative(&s);
            if ds.is_zero() {
                continue;
            }
            acc = acc.add(&e.diff(&s).mul(&ds));
        }
        acc
    }

    /// Time derivative of a symbol with input chains extended without
    /// truncation: `w^(j)` and `u^(j)` always map to the next derivative.
    pub fn untruncated_derivative(&self, name: &str) -> RatFunc {
        let (base, order) = split_derivative(name);
        let is_input = self.vars.iter().any(|v| matches!(v.kind, VarKind::UnknownInput { order: 0, .. }) && v.name == base)
            || self.known_inputs.iter().any(|c| c[0] == base);
        if is_input {
            return RatFunc::sym(&derivative_name(base, order + 1));
        }
        match self.index_of(name) {
            Some(i) => self.dynamics[i].clone(),
            None => RatFunc::zero(),
        }
    }

    /// Total time derivative along solutions with arbitrary input signals.
    pub fn total_derivative(&self, e: &RatFunc) -> RatFunc {
        let mut acc = RatFunc::zero();
        for s in e.symbols() {
            let ds = self.untruncated_derivative(&s);
            if ds.is_zero() {
                continue;
            }
            acc = acc.add(&e.diff(&s).mul(&ds));
        }
        acc
    }

    /// Base names of the unknown inputs.
    pub fn unknown_input_names(&self) -> Vec<&str> {
        self.vars
            .iter()
            .filter(|v| matches!(v.kind, VarKind::UnknownInput { order: 0, .. }))
            .map(|v| v.name.as_str())
            .collect()
    }
}

/// Builds the augmented system with the truncations stored in the model.
pub fn augment(m: &ModelSpec) -> Result<AugmentedSystem, ModelError> {
    let mut vars = Vec::new();
    let mut dynamics = Vec::new();
    for (s, f) in m.states.iter().zip(m.dynamics_canonical()?) {
        vars.push(AugVar { name: s.clone(), kind: VarKind::State });
        dynamics.push(f);
    }
    for p in &m.params {
        vars.push(AugVar { name: p.clone(), kind: VarKind::Parameter });
        dynamics.push(RatFunc::zero());
    }
    for (i, w) in m.unknown_inputs.iter().enumerate() {
        for k in 0..=w.l {
            vars.push(AugVar { name: derivative_name(&w.name, k), kind: VarKind::UnknownInput { input: i, order: k } });
            dynamics.push(if k < w.l { RatFunc::sym(&derivative_name(&w.name, k + 1)) } else { RatFunc::zero() });
        }
    }
    let known_inputs = m.known_inputs.iter().map(|u| (0..=u.derivs).map(|k| derivative_name(&u.name, k)).collect()).collect();
    Ok(AugmentedSystem {
        vars,
        dynamics,
        outputs: m.outputs_canonical()?,
        output_names: m.outputs.iter().map(|(n, _)| n.clone()).collect(),
        known_inputs,
    })
}

/// Models shipped with the crate.
pub mod models {
    use super::{parse_model, ModelSpec};

    pub const VAJDA: &str = include_str!("../../models/vajda.model");
    pub const PK: &str = include_str!("../../models/pk.model");
    pub const BIG_KNOWN: &str = include_str!("../../models/big_known.model");
    pub const BIG_UNKNOWN: &str = include_str!("../../models/big_unknown.model");
    pub const NFKB: &str = include_str!("../../models/nfkb.model");

    pub const ALL: [(&str, &str); 5] =
        [("vajda", VAJDA), ("pk", PK), ("big_known", BIG_KNOWN), ("big_unknown", BIG_UNKNOWN), ("nfkb", NFKB)];

    pub fn load(name: &str) -> Option<ModelSpec> {
        ALL.iter().find(|(n, _)| *n == name).map(|(_, src)| parse_model(src).expect("bundled model parses"))
    }

    pub fn vajda() -> ModelSpec {
        load("vajda").unwrap()
    }

    pub fn pk() -> ModelSpec {
        load("pk").unwrap()
    }

    pub fn big_known() -> ModelSpec {
        load("big_known").unwrap()
    }

    pub fn big_unknown() -> ModelSpec {
        load("big_unknown").unwrap()
    }

    pub fn nfkb() -> ModelSpec {
        load("nfkb").unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vajda_augmented_order() {
        let a = augment(&models::vajda()).unwrap();
        let names: Vec<&str> = a.vars.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, ["x1", "x2", "theta1", "theta2", "theta3", "theta4", "w", "w'"]);
        assert_eq!(a.dynamics[6], RatFunc::sym("w'"));
        assert!(a.dynamics[7].is_zero());
        assert!(a.dynamics[2..6].iter().all(|f| f.is_zero()));
    }

    #[test]
    fn dimensions_of_bundled_models() {
        assert_eq!(augment(&models::vajda()).unwrap().dim(), 8);
        assert_eq!(augment(&models::pk()).unwrap().dim(), 15);
        assert_eq!(augment(&models::big_known()).unwrap().dim(), 8);
        assert_eq!(augment(&models::nfkb()).unwrap().dim(), 32);
    }

    #[test]
    fn no_unknown_inputs_gives_states_and_params() {
        let m = parse_model("states x\nparams k\nddt x = -k*x\noutput y = x\n").unwrap();
        let a = augment(&m).unwrap();
        assert_eq!(a.vars.iter().map(|v| v.name.clone()).collect::<Vec<_>>(), ["x", "k"]);
    }

    #[test]
    fn known_input_chain() {
        let m = parse_model("states x\nknown_inputs u[derivs=1]\nddt x = u\noutput y = x\n").unwrap();
        let a = augment(&m).unwrap();
        assert_eq!(a.time_derivative("u"), RatFunc::sym("u'"));
        assert!(a.time_derivative("u'").is_zero());
    }

    #[test]
    fn derivative_names() {
        assert_eq!(derivative_name("w", 2), "w''");
        assert_eq!(split_derivative("w''"), ("w", 2));
        assert_eq!(split_derivative("w"), ("w", 0));
    }
}
