//! Line-oriented model language.
//!
//! ```text
//! model "vajda"
//! states x1 x2
//! params theta1 theta2
//! known_inputs u[derivs=2]
//! unknown_inputs w[l=1]
//! const mu = 0.021/(24*60)
//! ddt x1 = w + theta1*x1^2
//! output y = x1
//! ic x2 = theta1/theta2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use super::{
    derivative_name, split_derivative, KnownInput, ModelError, ModelSpec, SymbolKind, UnknownInput, DEFAULT_L,
    DEFAULT_U_DERIVS, RESERVED,
};
use crate::symcore::{parse_expr, Expr};

struct Line<'a> {
    no: usize,
    text: &'a str,
}

impl Line<'_> {
    fn syntax<T>(&self, column: usize, message: impl Into<String>) -> Result<T, ModelError> {
        Err(ModelError::Syntax { line: self.no, column, message: message.into() })
    }
}

/// Byte offset → 1-based column.
fn col(text: &str, offset: usize) -> usize {
    text[..offset].chars().count() + 1
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Column of the first whole-word occurrence of `name` in `text`.
fn find_ident(text: &str, name: &str) -> Option<usize> {
    let is_word = |c: char| c.is_alphanumeric() || c == '_' || c == '\'';
    let mut start = 0;
    while let Some(pos) = text[start..].find(name) {
        let at = start + pos;
        let end = at + name.len();
        let before_ok = text[..at].chars().next_back().is_none_or(|c| !is_word(c));
        let after_ok = text[end..].chars().next().is_none_or(|c| !is_word(c));
        if before_ok && after_ok {
            return Some(col(text, at));
        }
        start = at + name.len().max(1);
    }
    None
}

/// Splits `rest` into whitespace-separated words with their byte offsets.
fn words(text: &str, from: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut depth = 0;
    for (i, c) in text[from..].char_indices() {
        let i = i + from;
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            _ => {}
        }
        if c.is_whitespace() && depth == 0 {
            if let Some(s) = start.take() {
                out.push((s, &text[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

type WithOption<'a> = (&'a str, Option<(&'a str, &'a str)>);

/// `name[key=value]` → (name, Some((key, value))).
fn split_option<'a>(line: &Line, at: usize, word: &'a str) -> Result<WithOption<'a>, ModelError> {
    let Some(open) = word.find('[') else { return Ok((word, None)) };
    if !word.ends_with(']') {
        return line.syntax(col(line.text, at + open), "expected `]`");
    }
    let inner = &word[open + 1..word.len() - 1];
    let Some((k, v)) = inner.split_once('=') else {
        return line.syntax(col(line.text, at + open + 1), "expected `key=value`");
    };
    Ok((&word[..open], Some((k.trim(), v.trim()))))
}

struct Decls {
    names: BTreeMap<String, (SymbolKind, usize, usize)>,
}

impl Decls {
    fn declare(&mut self, line: &Line, column: usize, name: &str, kind: SymbolKind) -> Result<(), ModelError> {
        if !is_ident(name) {
            return line.syntax(column, format!("invalid name `{name}`"));
        }
        if RESERVED.contains(&name) {
            return line.syntax(column, format!("`{name}` is reserved"));
        }
        if self.names.contains_key(name) {
            return Err(ModelError::Duplicate { line: line.no, column, name: name.to_string() });
        }
        self.names.insert(name.to_string(), (kind, line.no, column));
        Ok(())
    }
}

/// Parses and validates a model.
pub fn parse_model(text: &str) -> Result<ModelSpec, ModelError> {
    let mut m = ModelSpec {
        name: "model".to_string(),
        states: vec![],
        params: vec![],
        known_inputs: vec![],
        unknown_inputs: vec![],
        constants: vec![],
        dynamics: vec![],
        outputs: vec![],
        ics: BTreeMap::new(),
    };
    let mut decls = Decls { names: BTreeMap::new() };
    let mut equations: Vec<(Line, &str, usize, &str, usize)> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        last_line = no;
        let line = Line { no, text: raw };
        let ws = words(body, 0);
        let (kw_at, kw) = ws[0];
        match kw {
            "model" => {
                let rest = body[kw_at + kw.len()..].trim();
                let name = rest.strip_prefix('"').and_then(|r| r.strip_suffix('"'));
                match name {
                    Some(n) if !n.contains('"') => m.name = n.to_string(),
                    _ => return line.syntax(col(raw, kw_at + kw.len()) + 1, "expected a quoted model name"),
                }
            }
            "states" | "params" | "known_inputs" | "unknown_inputs" => {
                for &(at, w) in &ws[1..] {
                    let (name, opt) = split_option(&line, at, w)?;
                    let c = col(raw, at);
                    match kw {
                        "states" | "params" => {
                            if opt.is_some() {
                                return line.syntax(c, format!("`{kw}` entries take no options"));
                            }
                            if kw == "states" {
                                decls.declare(&line, c, name, SymbolKind::State)?;
                                m.states.push(name.to_string());
                            } else {
                                decls.declare(&line, c, name, SymbolKind::Parameter)?;
                                m.params.push(name.to_string());
                            }
                        }
                        "known_inputs" => {
                            let derivs = match opt {
                                None => DEFAULT_U_DERIVS,
                                Some(("derivs", v)) => match v.parse() {
                                    Ok(d) => d,
                                    Err(_) => return line.syntax(c, format!("bad derivative count `{v}`")),
                                },
                                Some((k, _)) => return line.syntax(c, format!("unknown option `{k}`")),
                            };
                            decls.declare(&line, c, name, SymbolKind::KnownInput { order: 0 })?;
                            m.known_inputs.push(KnownInput { name: name.to_string(), derivs });
                        }
                        _ => {
                            let l = match opt {
                                None => DEFAULT_L,
                                Some(("l", v)) => match v.parse() {
                                    Ok(d) => d,
                                    Err(_) => return line.syntax(c, format!("bad truncation `{v}`")),
                                },
                                Some((k, _)) => return line.syntax(c, format!("unknown option `{k}`")),
                            };
                            decls.declare(&line, c, name, SymbolKind::UnknownInput { order: 0 })?;
                            m.unknown_inputs.push(UnknownInput { name: name.to_string(), l });
                        }
                    }
                }
            }
            "const" | "ddt" | "output" | "ic" => {
                let Some(eq) = body.find('=') else {
                    return line.syntax(col(raw, body.trim_end().len()), "expected `=`");
                };
                let lhs = body[kw_at + kw.len()..eq].trim();
                let lhs_at = kw_at + kw.len() + body[kw_at + kw.len()..eq].find(lhs).unwrap_or(0);
                if lhs.is_empty() || !is_ident(lhs) {
                    return line.syntax(col(raw, lhs_at), "expected a name before `=`");
                }
                equations.push((line, kw, lhs_at, lhs, eq + 1));
            }
            other => return line.syntax(col(raw, kw_at), format!("unknown directive `{other}`")),
        }
    }

    let mut kinds: BTreeMap<String, SymbolKind> = BTreeMap::new();
    for s in &m.states {
        kinds.insert(s.clone(), SymbolKind::State);
    }
    for p in &m.params {
        kinds.insert(p.clone(), SymbolKind::Parameter);
    }
    for u in &m.known_inputs {
        for k in 0..=u.derivs {
            kinds.insert(derivative_name(&u.name, k), SymbolKind::KnownInput { order: k });
        }
    }
    for w in &m.unknown_inputs {
        for k in 0..=w.l {
            kinds.insert(derivative_name(&w.name, k), SymbolKind::UnknownInput { order: k });
        }
    }

    let mut rhs: BTreeMap<String, Expr> = BTreeMap::new();
    let mut rhs_line: BTreeMap<String, usize> = BTreeMap::new();
    for (line, kw, lhs_at, lhs, expr_at) in &equations {
        let src = &line.text[*expr_at..line.text.find('#').unwrap_or(line.text.len())];
        let lhs_col = col(line.text, *lhs_at);
        let e = parse_expr(src).map_err(|e| ModelError::Syntax {
            line: line.no,
            column: col(line.text, *expr_at) + e.column - 1,
            message: e.message,
        })?;
        let check = |allowed: &dyn Fn(SymbolKind) -> bool, kinds: &BTreeMap<String, SymbolKind>| -> Result<(), ModelError> {
            for s in e.symbols() {
                let column = find_ident(src, &s).map(|c| col(line.text, *expr_at) + c - 1).unwrap_or(col(line.text, *expr_at));
                match kinds.get(&s) {
                    Some(k) if allowed(*k) => {}
                    Some(_) => {
                        return Err(ModelError::Syntax { line: line.no, column, message: format!("`{s}` is not allowed here") })
                    }
                    None => {
                        let (base, order) = split_derivative(&s);
                        let message = match kinds.get(base) {
                            Some(SymbolKind::UnknownInput { .. } | SymbolKind::KnownInput { .. }) if order > 0 => {
                                format!("derivative `{s}` exceeds the declared truncation")
                            }
                            _ => return Err(ModelError::Undeclared { line: line.no, column, name: s.clone() }),
                        };
                        return Err(ModelError::Syntax { line: line.no, column, message });
                    }
                }
            }
            Ok(())
        };
        let any_model_symbol = |k: SymbolKind| !matches!(k, SymbolKind::Output);
        match *kw {
            "const" => {
                check(&|_| false, &kinds)?;
                let v = e.canonical()?.constant_value().ok_or(ModelError::Syntax {
                    line: line.no,
                    column: col(line.text, *expr_at),
                    message: "constant must be a number".into(),
                })?;
                if kinds.contains_key(*lhs) || decls.names.contains_key(*lhs) {
                    return Err(ModelError::Duplicate { line: line.no, column: lhs_col, name: lhs.to_string() });
                }
                if RESERVED.contains(lhs) {
                    return line.syntax(lhs_col, format!("`{lhs}` is reserved"));
                }
                kinds.insert(lhs.to_string(), SymbolKind::Constant);
                m.constants.push((lhs.to_string(), v));
            }
            "ddt" => {
                match kinds.get(*lhs) {
                    Some(SymbolKind::State) => {}
                    Some(_) => return line.syntax(lhs_col, format!("`{lhs}` is not a state")),
                    None => return Err(ModelError::Undeclared { line: line.no, column: lhs_col, name: lhs.to_string() }),
                }
                if rhs.contains_key(*lhs) {
                    return Err(ModelError::Duplicate { line: line.no, column: lhs_col, name: lhs.to_string() });
                }
                check(&any_model_symbol, &kinds)?;
                rhs.insert(lhs.to_string(), e);
                rhs_line.insert(lhs.to_string(), line.no);
            }
            "output" => {
                if kinds.contains_key(*lhs) || decls.names.contains_key(*lhs) {
                    return Err(ModelError::Duplicate { line: line.no, column: lhs_col, name: lhs.to_string() });
                }
                check(&any_model_symbol, &kinds)?;
                kinds.insert(lhs.to_string(), SymbolKind::Output);
                m.outputs.push((lhs.to_string(), e));
            }
            _ => {
                match kinds.get(*lhs) {
                    Some(SymbolKind::State) => {}
                    Some(_) => return line.syntax(lhs_col, format!("`{lhs}` is not a state")),
                    None => return Err(ModelError::Undeclared { line: line.no, column: lhs_col, name: lhs.to_string() }),
                }
                if m.ics.contains_key(*lhs) {
                    return Err(ModelError::Duplicate { line: line.no, column: lhs_col, name: lhs.to_string() });
                }
                check(&|k| matches!(k, SymbolKind::State | SymbolKind::Parameter | SymbolKind::Constant), &kinds)?;
                m.ics.insert(lhs.to_string(), e);
            }
        }
    }

    if m.states.is_empty() {
        return Err(ModelError::NoStates);
    }
    let mut missing = Vec::new();
    for s in &m.states {
        match rhs.remove(s) {
            Some(e) => m.dynamics.push(e),
            None => missing.push(s.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(ModelError::Arity {
            line: last_line,
            message: format!("{} states declared but {} ddt equations; missing: {}", m.states.len(), m.states.len() - missing.len(), missing.join(", ")),
        });
    }
    if m.outputs.is_empty() {
        return Err(ModelError::NoOutputs);
    }
    Ok(m)
}

/// Writes a model back in the DSL; `parse_model(&emit_model(m)) == m`.
pub fn emit_model(m: &ModelSpec) -> String {
    let mut out = String::new();
    writeln!(out, "model \"{}\"", m.name).unwrap();
    writeln!(out, "states {}", m.states.join(" ")).unwrap();
    if !m.params.is_empty() {
        writeln!(out, "params {}", m.params.join(" ")).unwrap();
    }
    if !m.known_inputs.is_empty() {
        let items: Vec<String> = m.known_inputs.iter().map(|u| format!("{}[derivs={}]", u.name, u.derivs)).collect();
        writeln!(out, "known_inputs {}", items.join(" ")).unwrap();
    }
    if !m.unknown_inputs.is_empty() {
        let items: Vec<String> = m.unknown_inputs.iter().map(|w| format!("{}[l={}]", w.name, w.l)).collect();
        writeln!(out, "unknown_inputs {}", items.join(" ")).unwrap();
    }
    for (c, v) in &m.constants {
        writeln!(out, "const {c} = {}", Expr::Num(v.clone())).unwrap();
    }
    for (s, f) in m.states.iter().zip(&m.dynamics) {
        writeln!(out, "ddt {s} = {f}").unwrap();
    }
    for (y, g) in &m.outputs {
        writeln!(out, "output {y} = {g}").unwrap();
    }
    let order: BTreeSet<&String> = m.ics.keys().collect();
    for s in m.states.iter().filter(|s| order.contains(s)) {
        writeln!(out, "ic {s} = {}", m.ics[s]).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelspec::models;

    #[test]
    fn empty_model_has_no_states() {
        assert_eq!(parse_model("model \"empty\"\n").unwrap_err(), ModelError::NoStates);
        assert_eq!(parse_model("").unwrap_err().to_string(), "model must declare at least one state");
    }

    #[test]
    fn undeclared_symbol_position() {
        let err = parse_model("states x\nddt x = -k*x\noutput y = x\n").unwrap_err();
        assert_eq!(err, ModelError::Undeclared { line: 2, column: 10, name: "k".into() });
    }

    #[test]
    fn duplicate_declaration() {
        let err = parse_model("states x\nparams x\nddt x = x\noutput y = x\n").unwrap_err();
        assert!(matches!(err, ModelError::Duplicate { line: 2, column: 8, .. }), "{err:?}");
    }

    #[test]
    fn missing_equation_is_arity_error() {
        let err = parse_model("states x z\nddt x = z\noutput y = x\n").unwrap_err();
        assert!(matches!(err, ModelError::Arity { .. }), "{err:?}");
    }

    #[test]
    fn syntax_error_column() {
        let err = parse_model("states x\nddt x = (x +\noutput y = x\n").unwrap_err();
        assert!(matches!(err, ModelError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn derivative_beyond_truncation_rejected() {
        let err = parse_model("states x\nunknown_inputs w[l=1]\nddt x = w''\noutput y = x\n").unwrap_err();
        assert!(err.to_string().contains("truncation"), "{err}");
        assert!(parse_model("states x\nunknown_inputs w[l=2]\nddt x = w''\noutput y = x\n").is_ok());
    }

    #[test]
    fn round_trip_bundled() {
        for (name, src) in models::ALL {
            let m = parse_model(src).unwrap();
            let again = parse_model(&emit_model(&m)).unwrap();
            assert_eq!(again, m, "{name}");
        }
    }

    #[test]
    fn ics_may_use_states_and_params() {
        let m = parse_model("states x z\nparams k\nddt x = -k*x\nddt z = x\noutput y = x\nic z = k*x\n").unwrap();
        assert_eq!(m.ics.len(), 1);
        assert!(parse_model("states x\nknown_inputs u\nddt x = u\noutput y = x\nic x = u\n").is_err());
    }
}
