//! Structural identifiability and observability classification.

mod jet;
mod symbolic;

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Echelon, Rref};
use crate::modelspec::{augment, AugmentedSystem, ModelError, ModelSpec, VarKind};
use std::collections::BTreeMap;

use crate::symcore::{RatFunc, Rational, SymError};

pub use jet::{JetPoint, JetProgram, JetRun};
pub use symbolic::{build_oi_matrix, extended_lie_derivatives, generic_rank, OIMatrix};

#[derive(Debug, Error)]
pub enum FispoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sym(#[from] SymError),
    #[error("symbol `{0}` is not part of the augmented system")]
    Unbound(String),
    #[error("pole at evaluation point")]
    Pole,
    #[error("no pole-free evaluation point found after {0} draws")]
    RedrawBudget(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FispoOptions {
    pub seed: u64,
    pub trials: usize,
    /// Inclusive range for random integer coordinates.
    pub range: (i64, i64),
    /// Highest Lie derivative order; defaults to `dim - 1`.
    pub max_order: Option<usize>,
    /// Stop once a derivative order adds no rank.
    pub early_stop: bool,
    pub redraws: usize,
    /// Place the state coordinates of each random point on the model's
    /// initial-condition relations.
    pub use_ics: bool,
}

impl Default for FispoOptions {
    fn default() -> Self {
        FispoOptions { seed: 1, trials: 3, range: (2, 10_000), max_order: None, early_stop: true, redraws: 100, use_ics: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamVerdict {
    pub name: String,
    pub identifiable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObsVerdict {
    pub name: String,
    pub observable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FispoReport {
    pub model: String,
    pub l: usize,
    pub k_used: usize,
    pub rank: usize,
    pub dim: usize,
    pub fispo: bool,
    pub params: Vec<ParamVerdict>,
    pub states: Vec<ObsVerdict>,
    pub unknown_inputs: Vec<ObsVerdict>,
    pub unknown_input_derivatives: Vec<ObsVerdict>,
    pub transformations_needed: usize,
    pub seed: u64,
    pub trials: usize,
}

impl FispoReport {
    pub fn identifiable(&self, p: &str) -> Option<bool> {
        self.params.iter().find(|v| v.name == p).map(|v| v.identifiable)
    }

    pub fn observable(&self, x: &str) -> Option<bool> {
        self.states.iter().chain(&self.unknown_inputs).find(|v| v.name == x).map(|v| v.observable)
    }

    pub fn unidentifiable_params(&self) -> Vec<String> {
        self.params.iter().filter(|v| !v.identifiable).map(|v| v.name.clone()).collect()
    }

    pub fn identifiable_params(&self) -> Vec<String> {
        self.params.iter().filter(|v| v.identifiable).map(|v| v.name.clone()).collect()
    }

    pub fn unobservable_states(&self) -> Vec<String> {
        self.states.iter().filter(|v| !v.observable).map(|v| v.name.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn transformations_needed(r: &FispoReport) -> usize {
    r.dim - r.rank
}

/// Uniform integer in the configured range, as a rational.
pub(crate) fn draw(rng: &mut ChaCha8Rng, range: (i64, i64)) -> Rational {
    Rational::from_integer(BigInt::from(rng.gen_range(range.0..=range.1)))
}

pub(crate) fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Outcome of one evaluation of the matrix at a random point.
#[derive(Debug, Clone)]
pub struct RankTrial {
    pub rank: usize,
    pub k_used: usize,
    pub echelon: Echelon,
}

/// Builds the matrix block by block at one random point.
pub fn rank_trial(
    program: &JetProgram,
    dim: usize,
    opts: &FispoOptions,
    rng: &mut ChaCha8Rng,
    ics: &IcPlacement,
) -> Result<RankTrial, FispoError> {
    let k_max = opts.max_order.unwrap_or(dim.saturating_sub(1));
    for _ in 0..opts.redraws {
        let mut point = JetPoint {
            vars: (0..dim).map(|_| draw(rng, opts.range)).collect(),
            inputs: program.input_budgets().iter().map(|&b| (0..=b).map(|_| draw(rng, opts.range)).collect()).collect(),
            roots: (0..program.n_roots()).map(|_| draw(rng, opts.range)).collect(),
        };
        if ics.apply(&mut point.vars).is_err() {
            continue;
        }
        match run_point(program, &point, dim, k_max, opts.early_stop) {
            Ok(t) => return Ok(t),
            Err(FispoError::Pole) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(FispoError::RedrawBudget(opts.redraws))
}

fn run_point(program: &JetProgram, point: &JetPoint, dim: usize, k_max: usize, early_stop: bool) -> Result<RankTrial, FispoError> {
    let mut run = JetRun::new(program, point);
    let mut ech = Echelon::new(dim);
    let mut prev = 0;
    let mut k_used = 0;
    for k in 0..=k_max {
        for row in run.block(k)? {
            ech.insert(&row);
        }
        k_used = k;
        let r = ech.rank();
        if r == dim || (early_stop && k > 0 && r == prev) {
            break;
        }
        prev = r;
    }
    Ok(RankTrial { rank: ech.rank(), k_used, echelon: ech })
}

/// Initial-condition relations as assignments to augmented coordinates,
/// applied in state order.
#[derive(Debug, Clone, Default)]
pub struct IcPlacement {
    assignments: Vec<(usize, RatFunc)>,
    names: Vec<String>,
}

impl IcPlacement {
    pub fn new(m: &ModelSpec, a: &AugmentedSystem) -> Result<IcPlacement, FispoError> {
        let ics = m.ics_canonical()?;
        let mut assignments = Vec::new();
        for s in &m.states {
            if let Some(e) = ics.get(s) {
                assignments.push((a.index_of(s).expect("state is augmented"), e.clone()));
            }
        }
        Ok(IcPlacement { assignments, names: a.vars.iter().map(|v| v.name.clone()).collect() })
    }

    pub fn apply(&self, vars: &mut [Rational]) -> Result<(), SymError> {
        for (i, e) in &self.assignments {
            let point: BTreeMap<String, Rational> = self.names.iter().cloned().zip(vars.iter().cloned()).collect();
            vars[*i] = e.evaluate(&point)?;
        }
        Ok(())
    }
}

/// Per-column verdicts: column `j` is identifiable/observable iff deleting
/// it lowers the rank, i.e. `e_j` lies in the row space.
pub fn column_verdicts(rref: &Rref) -> Vec<bool> {
    (0..rref.ncols).map(|j| rref.unit_in_row_space(j)).collect()
}

pub fn classify(m: &ModelSpec, opts: &FispoOptions) -> Result<FispoReport, FispoError> {
    let a = augment(m)?;
    classify_augmented(m, &a, opts)
}

pub fn classify_augmented(m: &ModelSpec, a: &AugmentedSystem, opts: &FispoOptions) -> Result<FispoReport, FispoError> {
    let program = JetProgram::compile(a)?;
    let dim = a.dim();
    let ics = if opts.use_ics { IcPlacement::new(m, a)? } else { IcPlacement::default() };
    let mut best: Option<RankTrial> = None;
    for t in 0..opts.trials.max(1) {
        let mut rng = trial_rng(opts.seed, t);
        let trial = rank_trial(&program, dim, opts, &mut rng, &ics)?;
        if best.as_ref().is_none_or(|b| trial.rank > b.rank) {
            best = Some(trial);
        }
    }
    let best = best.expect("at least one trial");
    let verdicts = column_verdicts(&best.echelon.rref());
    let mut report = FispoReport {
        model: m.name.clone(),
        l: m.unknown_inputs.iter().map(|w| w.l).max().unwrap_or(0),
        k_used: best.k_used,
        rank: best.rank,
        dim,
        fispo: best.rank == dim,
        params: vec![],
        states: vec![],
        unknown_inputs: vec![],
        unknown_input_derivatives: vec![],
        transformations_needed: dim - best.rank,
        seed: opts.seed,
        trials: opts.trials.max(1),
    };
    for (v, ok) in a.vars.iter().zip(verdicts) {
        match v.kind {
            VarKind::State => report.states.push(ObsVerdict { name: v.name.clone(), observable: ok }),
            VarKind::Parameter => report.params.push(ParamVerdict { name: v.name.clone(), identifiable: ok }),
            VarKind::UnknownInput { order: 0, .. } => report.unknown_inputs.push(ObsVerdict { name: v.name.clone(), observable: ok }),
            VarKind::UnknownInput { .. } => {
                report.unknown_input_derivatives.push(ObsVerdict { name: v.name.clone(), observable: ok })
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rank;
    use crate::modelspec::{models, parse_model};

    #[test]
    fn vajda_classification() {
        let r = classify(&models::vajda(), &FispoOptions::default()).unwrap();
        assert_eq!((r.rank, r.dim), (7, 8));
        assert_eq!(r.unidentifiable_params(), ["theta2", "theta3"]);
        assert_eq!(r.unobservable_states(), ["x2"]);
        assert_eq!(transformations_needed(&r), 1);
        assert!(r.unknown_inputs[0].observable);
    }

    #[test]
    fn identifiable_toy() {
        let m = parse_model("states x\nparams k\nddt x = -k*x\noutput y = x\n").unwrap();
        let r = classify(&m, &FispoOptions::default()).unwrap();
        assert!(r.fispo);
        assert_eq!(r.rank, 2);
    }

    #[test]
    fn jets_match_symbolic_matrix() {
        for src in [models::VAJDA, "states x z\nparams a b\nknown_inputs u[derivs=2]\nddt x = u*z - a*x/(1 + x)\nddt z = -b*z\noutput y = x\n"] {
            let m = parse_model(src).unwrap();
            let a = augment(&m).unwrap();
            let oi = build_oi_matrix(&a, a.dim() - 1);
            let sym = generic_rank(&oi, 2, 7).unwrap();
            let r = classify(&m, &FispoOptions { early_stop: false, ..Default::default() }).unwrap();
            assert_eq!(sym, r.rank, "{}", m.name);
        }
    }

    #[test]
    fn kernel_verdicts_match_column_deletion() {
        let m = models::vajda();
        let a = augment(&m).unwrap();
        let program = JetProgram::compile(&a).unwrap();
        let point = JetPoint { vars: (0..8).map(|i| Rational::from_integer((i * 7 + 3).into())).collect(), inputs: vec![], roots: vec![] };
        let mut run = JetRun::new(&program, &point);
        let rows: Vec<Vec<Rational>> = (0..8).flat_map(|k| run.block(k).unwrap()).collect();
        let full = rank(&rows, 8);
        let mut ech = Echelon::new(8);
        for r in &rows {
            ech.insert(r);
        }
        let verdicts = column_verdicts(&ech.rref());
        for (j, &verdict) in verdicts.iter().enumerate() {
            let deleted: Vec<Vec<Rational>> =
                rows.iter().map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect()).collect();
            assert_eq!(rank(&deleted, 7) < full, verdict, "column {j}");
        }
    }

    #[test]
    fn early_stop_agrees_with_full_order() {
        let m = models::vajda();
        let fast = classify(&m, &FispoOptions::default()).unwrap();
        let full = classify(&m, &FispoOptions { early_stop: false, ..Default::default() }).unwrap();
        assert_eq!(fast.rank, full.rank);
        assert_eq!(fast.params, full.params);
        assert_eq!(fast.states, full.states);
    }
}
