use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use repargen::fispo::{classify, FispoOptions, FispoReport};
use repargen::modelspec::{augment, emit_dot, emit_model, models, parse_model, ModelSpec};
use repargen::repar::{autorepar, Automatic, Pinned, ReparError, ReparOptions, ReparResult, Round, Selection, Selector};
use repargen::symcore::Expr;
use repargen::symmetry::{exponentiate, find_generators, DEFAULT_MAX_ORDER};
use repargen::validate::{oracle_output_equivalence, sample_run, symmetry_orbit_check, OracleOptions};

#[derive(Parser)]
#[command(name = "repargen", version, about = "Identifiability analysis and automatic reparameterization of ODE models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify parameters, states and inputs (FISPO report).
    Analyze(Common),
    /// Lie symmetries of the model and their closed forms.
    Symmetries {
        #[command(flatten)]
        common: Common,
        /// Ansatz degree (defaults to the degree cap).
        #[arg(long)]
        degree: Option<usize>,
    },
    /// Reparameterize until the model is identifiable and observable.
    Repar {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Write the repaired model to this file.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Numerical checks: symmetry orbits and output equivalence.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Largest accepted relative output deviation.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Simulation horizon.
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Write one original/repaired trajectory pair as CSV into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Diagrams of the model structure.
    Export {
        #[command(flatten)]
        common: Common,
        /// Graphviz output (the only format).
        #[arg(long, required = true)]
        dot: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Model file, or the name of a bundled model (vajda, pk, big_known, big_unknown, nfkb).
    model: String,
    /// Nonzero derivatives assumed for every unknown input.
    #[arg(long)]
    l: Option<usize>,
    /// Derivative budget of every known input.
    #[arg(long)]
    u_derivs: Option<usize>,
    /// Highest ansatz degree for symmetry search.
    #[arg(long, default_value_t = 2)]
    degree_cap: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Random points per rank test (validate: random instantiations).
    #[arg(long)]
    trials: Option<usize>,
    /// Use initial-condition relations in the rank test.
    #[arg(long)]
    use_ics: bool,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PolicyArgs {
    /// Parameters to remove, in order; later rounds are automatic.
    #[arg(long, value_delimiter = ',', conflicts_with = "interactive")]
    remove: Vec<String>,
    /// Choose generator and parameter at every round.
    #[arg(long)]
    interactive: bool,
}

impl Common {
    fn load(&self) -> Result<ModelSpec> {
        let path = Path::new(&self.model);
        let mut m = if path.exists() {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_model(&text).with_context(|| format!("parsing {}", path.display()))?
        } else if let Some(m) = models::load(&self.model) {
            m
        } else {
            bail!("file not found: {}", self.model);
        };
        if let Some(l) = self.l {
            m = m.with_l(l);
        }
        if let Some(k) = self.u_derivs {
            m = m.with_u_derivs(k);
        }
        Ok(m)
    }

    fn fispo(&self) -> FispoOptions {
        let d = FispoOptions::default();
        FispoOptions { seed: self.seed, trials: self.trials.unwrap_or(d.trials), use_ics: self.use_ics, ..d }
    }

    fn repar(&self) -> ReparOptions {
        ReparOptions { degree_cap: self.degree_cap, max_order: DEFAULT_MAX_ORDER, fispo: self.fispo() }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn verdict(ok: bool, yes: &str, no: &str) -> String {
    if ok { yes.to_string() } else { no.to_string() }
}

fn print_report(r: &FispoReport) {
    println!("model {}: rank {} of {}, {}", r.model, r.rank, r.dim, verdict(r.fispo, "FISPO", "not FISPO"));
    for p in &r.params {
        println!("  {:<12} {}", p.name, verdict(p.identifiable, "identifiable", "unidentifiable"));
    }
    for x in r.states.iter().chain(&r.unknown_inputs) {
        println!("  {:<12} {}", x.name, verdict(x.observable, "observable", "unobservable"));
    }
    if !r.fispo {
        println!("transformations needed: {}", r.transformations_needed);
    }
}

fn analyze(c: &Common) -> Result<()> {
    let m = c.load()?;
    let r = classify(&m, &c.fispo())?;
    if c.json {
        println!("{}", r.to_json());
    } else {
        print_report(&r);
    }
    Ok(())
}

fn symmetries(c: &Common, degree: Option<usize>) -> Result<()> {
    let m = c.load()?;
    let a = augment(&m)?;
    let degree = degree.unwrap_or(c.degree_cap);
    let gens = find_generators(&a, degree)?;
    let mut items = Vec::new();
    for g in &gens {
        let t = exponentiate(g, DEFAULT_MAX_ORDER);
        if !c.json {
            println!("generator on {{{}}}", g.support().join(", "));
            for (v, e) in &g.eta {
                println!("  eta[{v}] = {e}");
            }
            match &t {
                Ok(t) => {
                    for (v, f) in &t.maps {
                        println!("  {v}* = {f}");
                    }
                }
                Err(e) => println!("  ({e})"),
            }
        }
        items.push(match t {
            Ok(t) => t.to_json_value(),
            Err(e) => serde_json::json!({ "generator": g.to_json_value(), "error": e.to_string() }),
        });
    }
    if c.json {
        print_json(&serde_json::json!({ "model": m.name, "degree": degree, "generators": items }));
    } else if gens.is_empty() {
        println!("no symmetries at ansatz degree {degree}");
    }
    Ok(())
}

/// Reads choices from standard input; menus go to standard error.
struct Interactive {
    lines: io::Lines<io::StdinLock<'static>>,
}

impl Interactive {
    fn ask(&mut self, prompt: &str) -> Result<Option<String>, ReparError> {
        eprint!("{prompt}");
        let _ = io::stderr().flush();
        match self.lines.next() {
            Some(Ok(l)) => Ok(Some(l.trim().to_string())),
            _ => Ok(None),
        }
    }
}

impl Selector for Interactive {
    fn select(&mut self, round: &Round) -> Result<Selection, ReparError> {
        let unident = round.report.unidentifiable_params();
        eprintln!(
            "\nround {}: {} transformation(s) needed; unidentifiable: {}",
            round.index + 1,
            round.report.transformations_needed,
            unident.join(", ")
        );
        eprintln!("ansatz degree {} of {}: {} generator(s)", round.degree, round.degree_cap, round.kernel_dimension);
        if round.candidates.is_empty() {
            eprintln!("  none removes an unidentifiable parameter");
            return Ok(if round.degree < round.degree_cap { Selection::Escalate } else { Selection::Stop });
        }
        for (i, c) in round.candidates.iter().enumerate() {
            eprintln!("  [{}] on {{{}}}; removable: {}", i + 1, c.transformation.support().join(", "), c.eligible.join(", "));
            for (v, f) in &c.transformation.maps {
                eprintln!("        {v}* = {f}");
            }
        }
        let more = if round.degree < round.degree_cap { ", e to search a higher degree" } else { "" };
        loop {
            let Some(line) = self.ask(&format!("generator (1-{}{more}, q to quit): ", round.candidates.len()))? else {
                return Err(ReparError::Aborted);
            };
            match line.as_str() {
                "q" => return Err(ReparError::Aborted),
                "e" if round.degree < round.degree_cap => return Ok(Selection::Escalate),
                _ => {}
            }
            let Some(c) = line.parse::<usize>().ok().filter(|i| (1..=round.candidates.len()).contains(i)) else { continue };
            let cand = &round.candidates[c - 1];
            loop {
                for (i, p) in cand.eligible.iter().enumerate() {
                    eprintln!("  [{}] {p}", i + 1);
                }
                let Some(line) = self.ask("parameter to remove: ")? else { return Err(ReparError::Aborted) };
                let pick = line
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| cand.eligible.get(i.wrapping_sub(1)).cloned())
                    .or_else(|| cand.eligible.iter().find(|p| **p == line).cloned());
                if let Some(param) = pick {
                    return Ok(Selection::Take { candidate: c - 1, param });
                }
            }
        }
    }
}

fn run_repar(c: &Common, p: &PolicyArgs) -> Result<(ModelSpec, ReparResult)> {
    let m = c.load()?;
    let opts = c.repar();
    let mut selector: Box<dyn Selector> = if p.interactive {
        Box::new(Interactive { lines: io::stdin().lock().lines() })
    } else if !p.remove.is_empty() {
        Box::new(Pinned { remove: p.remove.clone() })
    } else {
        Box::new(Automatic)
    };
    let r = autorepar(&m, selector.as_mut(), &opts)?;
    Ok((m, r))
}

fn repar(c: &Common, p: &PolicyArgs, output: Option<&Path>) -> Result<()> {
    let (_, r) = run_repar(c, p)?;
    if let Some(path) = output {
        std::fs::write(path, emit_model(&r.model)).with_context(|| format!("writing {}", path.display()))?;
    }
    if c.json {
        print_json(&r.to_json_value());
        return Ok(());
    }
    if r.steps.is_empty() {
        println!("model is already FISPO");
        return Ok(());
    }
    for (i, s) in r.steps.iter().enumerate() {
        println!(
            "step {}: removed {} ({}) using the generator on {{{}}}",
            i + 1,
            s.eliminated,
            s.solved.describe(),
            s.generator.support().join(", ")
        );
        for w in &s.warnings {
            println!("  warning: {w}");
        }
    }
    println!("\nvariables of the new model:");
    for (v, e) in &r.mapping {
        let e = Expr::from_ratfunc(e);
        if e != Expr::sym(v) {
            println!("  {v} = {e}");
        }
    }
    println!("\n{}", emit_model(&r.model));
    println!("final: rank {} of {}, {}", r.report.rank, r.report.dim, verdict(r.report.fispo, "FISPO", "not FISPO"));
    Ok(())
}

fn validate(c: &Common, p: &PolicyArgs, tol: f64, horizon: f64, csv: Option<&Path>) -> Result<bool> {
    let (m, r) = run_repar(c, p)?;
    let mut opts = OracleOptions { tol, seed: c.seed, trials: c.trials.unwrap_or(10), ..OracleOptions::default() };
    opts.sampling.horizon = horizon;
    let eq = oracle_output_equivalence(&m, &r, &opts)?;
    let mut orbits = Vec::new();
    let a = augment(&m)?;
    for g in find_generators(&a, c.degree_cap)? {
        if let Ok(t) = exponentiate(&g, DEFAULT_MAX_ORDER) {
            orbits.push((t.support().join(", "), symmetry_orbit_check(&m, &t, &opts)?));
        }
    }
    if let Some(dir) = csv {
        std::fs::create_dir_all(dir)?;
        let (a, b) = sample_run(&m, &r, &opts)?;
        std::fs::write(dir.join(format!("{}_original.csv", m.name)), a.to_csv())?;
        std::fs::write(dir.join(format!("{}_repaired.csv", m.name)), b.to_csv())?;
    }
    let pass = eq.pass && orbits.iter().all(|(_, o)| o.pass);
    if c.json {
        let orbit_json: Vec<_> = orbits.iter().map(|(_, o)| o).collect();
        print_json(&serde_json::json!({ "equivalence": eq, "orbits": orbit_json, "pass": pass }));
    } else {
        let line = |name: &str, ok: bool, dev: f64| println!("{:<5} {name} (max relative deviation {dev:.2e})", verdict(ok, "PASS", "FAIL"));
        line("output equivalence", eq.pass, eq.max_rel);
        for (s, o) in &orbits {
            line(&format!("orbit of the generator on {{{s}}}"), o.pass, o.max_rel);
        }
    }
    Ok(pass)
}

fn export(c: &Common) -> Result<()> {
    let m = c.load()?;
    let r = classify(&m, &c.fispo())?;
    print!("{}", emit_dot(&m, &r));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Analyze(c) => analyze(c).map(|_| true),
        Command::Symmetries { common, degree } => symmetries(common, *degree).map(|_| true),
        Command::Repar { common, policy, output } => repar(common, policy, output.as_deref()).map(|_| true),
        Command::Validate { common, policy, tol, horizon, csv } => validate(common, policy, *tol, *horizon, csv.as_deref()),
        Command::Export { common, .. } => export(common).map(|_| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if let Some(ReparError::Irreparable { .. }) = e.downcast_ref::<ReparError>() {
                eprintln!("error: irreparable model: {e}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}
