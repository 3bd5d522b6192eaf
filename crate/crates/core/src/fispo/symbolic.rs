//! Symbolic Lie derivatives and the observability-identifiability matrix.

use std::collections::HashMap;

use crate::linalg::Echelon;
use crate::modelspec::AugmentedSystem;
use crate::symcore::{Atom, RatFunc, Rational};

use super::{draw, trial_rng, FispoError, FispoOptions};

/// `L^0 g, …, L^k_max g`, indexed `[order][output]`.
pub fn extended_lie_derivatives(a: &AugmentedSystem, k_max: usize) -> Vec<Vec<RatFunc>> {
    let mut out = vec![a.outputs.clone()];
    for _ in 0..k_max {
        let next = out.last().unwrap().iter().map(|h| a.lie_derivative(h)).collect();
        out.push(next);
    }
    out
}

#[derive(Debug, Clone)]
pub struct OIMatrix {
    /// Block `r` holds rows `∂(L^r g)/∂x̃`.
    pub rows: Vec<Vec<RatFunc>>,
    pub columns: Vec<String>,
    pub k: usize,
}

pub fn build_oi_matrix(a: &AugmentedSystem, k: usize) -> OIMatrix {
    let lie = extended_lie_derivatives(a, k);
    let columns: Vec<String> = a.vars.iter().map(|v| v.name.clone()).collect();
    let rows = lie.iter().flatten().map(|h| columns.iter().map(|c| h.diff(c)).collect()).collect();
    OIMatrix { rows, columns, k }
}

/// Maximum exact rank over `trials` random integer points. Fractional
/// powers get their own random values.
pub fn generic_rank(m: &OIMatrix, trials: usize, seed: u64) -> Result<usize, FispoError> {
    let opts = FispoOptions::default();
    let mut best = 0;
    for t in 0..trials.max(1) {
        let mut rng = trial_rng(seed, t);
        let mut done = false;
        for _ in 0..opts.redraws {
            let mut values: HashMap<Atom, Rational> = HashMap::new();
            let mut eval = |e: &RatFunc| -> Option<Rational> {
                e.evaluate_with(&mut |a: &Atom| Ok(values.entry(a.clone()).or_insert_with(|| draw(&mut rng, opts.range)).clone())).ok()
            };
            let mut rows = Vec::new();
            let mut pole = false;
            for row in &m.rows {
                let mut vals = Vec::new();
                for e in row {
                    match eval(e) {
                        Some(v) => vals.push(v),
                        None => {
                            pole = true;
                            break;
                        }
                    }
                }
                if pole {
                    break;
                }
                rows.push(vals);
            }
            if pole {
                continue;
            }
            let mut ech = Echelon::new(m.columns.len());
            for r in &rows {
                ech.insert(r);
            }
            best = best.max(ech.rank());
            done = true;
            break;
        }
        if !done {
            return Err(FispoError::RedrawBudget(opts.redraws));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::{augment, models, parse_model};
    use crate::symcore::parse_expr;

    fn rf(s: &str) -> RatFunc {
        parse_expr(s).unwrap().canonical().unwrap()
    }

    #[test]
    fn autonomous_linear() {
        let a = augment(&parse_model("states x1\nparams theta\nddt x1 = theta*x1\noutput y = x1\n").unwrap()).unwrap();
        let l = extended_lie_derivatives(&a, 2);
        assert_eq!(l[1][0], rf("theta*x1"));
        assert_eq!(l[2][0], rf("theta^2*x1"));
    }

    #[test]
    fn vajda_first_derivative_is_rhs() {
        let a = augment(&models::vajda()).unwrap();
        let l = extended_lie_derivatives(&a, 1);
        assert_eq!(l[1][0], rf("w + theta1*x1^2 + theta2*x1*x2"));
        let m = build_oi_matrix(&a, 7);
        assert_eq!(m.columns.len(), 8);
        assert_eq!(generic_rank(&m, 3, 1).unwrap(), 7);
    }

    #[test]
    fn known_input_correction_term() {
        let a = augment(&parse_model("states x1\nknown_inputs u\nddt x1 = u\noutput y = x1\n").unwrap()).unwrap();
        let l = extended_lie_derivatives(&a, 2);
        assert_eq!(l[1][0], rf("u"));
        assert_eq!(l[2][0], rf("u'"));
    }

    #[test]
    fn zero_block_only() {
        let a = augment(&models::vajda()).unwrap();
        let m = build_oi_matrix(&a, 0);
        assert_eq!(m.rows.len(), 1);
        assert_eq!(m.rows[0][0], RatFunc::one());
    }

    #[test]
    fn zero_matrix_rank() {
        let m = OIMatrix { rows: vec![vec![RatFunc::zero(); 3]; 2], columns: vec!["a".into(), "b".into(), "c".into()], k: 1 };
        assert_eq!(generic_rank(&m, 1, 0).unwrap(), 0);
    }
}
