//! Graphviz rendering of a model's structure, shaded by a report.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::{split_derivative, ModelSpec};
use crate::fispo::FispoReport;

const STATE: (&str, &str) = ("#c0392b", "#f5b7b1");
const PARAM: (&str, &str) = ("#1e8449", "#abebc6");
const INPUT: (&str, &str) = ("#d4ac0d", "#fcf3cf");

fn node(out: &mut String, name: &str, class: &str, observable: bool, colors: (&str, &str), shape: &str) {
    let fill = if observable { colors.0 } else { colors.1 };
    let font = if observable && class != "output" { "white" } else { "black" };
    writeln!(
        out,
        "  \"{name}\" [class={class}, observable={observable}, shape={shape}, style=filled, fillcolor=\"{fill}\", fontcolor={font}];"
    )
    .unwrap();
}

/// Edges `s -> v` for every symbol `s` in the canonical right-hand side of
/// `v`. Self-loops are omitted.
pub fn edges(m: &ModelSpec) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    let consts: BTreeSet<&str> = m.constants.iter().map(|(c, _)| c.as_str()).collect();
    let mut add = |target: &str, e: &crate::symcore::RatFunc| {
        for s in e.symbols() {
            let base = split_derivative(&s).0.to_string();
            if base != target && !consts.contains(base.as_str()) {
                out.insert((base, target.to_string()));
            }
        }
    };
    if let Ok(fs) = m.dynamics_canonical() {
        for (x, f) in m.states.iter().zip(&fs) {
            add(x, f);
        }
    }
    if let Ok(gs) = m.outputs_canonical() {
        for ((y, _), g) in m.outputs.iter().zip(&gs) {
            add(y, g);
        }
    }
    out
}

pub fn emit_dot(m: &ModelSpec, r: &FispoReport) -> String {
    let verdict = |list: &[(String, bool)], name: &str| list.iter().find(|(n, _)| n == name).map(|(_, v)| *v).unwrap_or(false);
    let states: Vec<(String, bool)> = r.states.iter().map(|s| (s.name.clone(), s.observable)).collect();
    let params: Vec<(String, bool)> = r.params.iter().map(|p| (p.name.clone(), p.identifiable)).collect();
    let inputs: Vec<(String, bool)> = r.unknown_inputs.iter().map(|w| (w.name.clone(), w.observable)).collect();

    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", m.name).unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    for x in &m.states {
        node(&mut out, x, "state", verdict(&states, x), STATE, "ellipse");
    }
    for p in &m.params {
        node(&mut out, p, "param", verdict(&params, p), PARAM, "box");
    }
    for u in &m.known_inputs {
        node(&mut out, &u.name, "input", true, INPUT, "diamond");
    }
    for w in &m.unknown_inputs {
        node(&mut out, &w.name, "input", verdict(&inputs, &w.name), INPUT, "diamond");
    }
    for (y, _) in &m.outputs {
        node(&mut out, y, "output", true, ("white", "white"), "note");
    }
    for (a, b) in edges(m) {
        writeln!(out, "  \"{a}\" -> \"{b}\";").unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::parse_model;

    #[test]
    fn cancelled_terms_give_no_edges() {
        let m = parse_model("states x z\nparams k\nddt x = k*z - k*z + x\nddt z = x\noutput y = z\n").unwrap();
        let e = edges(&m);
        assert_eq!(e, BTreeSet::from([("x".to_string(), "z".to_string()), ("z".to_string(), "y".to_string())]));
    }
}
