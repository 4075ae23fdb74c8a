//! `pdl`: batch command-line interface to the g3pdl proof engine.
//!
//! Verdicts are conveyed through exit codes so scripts and CI can consume
//! them directly:
//!
//! * `0` — success / positive verdict,
//! * `1` — negative verdict (invalid proof, unsatisfied sequent, countermodel),
//! * `2` — usage or I/O error,
//! * `3` — the prover gave up within its budget (unknown).
//!
//! Every command accepts `--json` for machine-readable verdict objects;
//! `PDL_COLOR=0|1` forces diagnostics color off or on.

use std::collections::BTreeSet;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use g3pdl::kernel::check_pre_proof;
use g3pdl::parser::{
    parse_formula, parse_model, parse_proof, parse_sequent, render_model, render_proof,
};
use g3pdl::schemata::{derive_axiom, AxiomParams};
use g3pdl::search::{prove_test_free, Budget, SearchError, SearchOutcome, DEFAULT_UNWINDING_STEPS};
use g3pdl::semantics::{satisfies_sequent, Valuation};
use g3pdl::syntax::{Formula, Item, Label, Sequent};
use g3pdl::traces::{check_gtc, GtcVerdict, Lasso};

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNKNOWN: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pdl",
    version,
    about = "Parse, check, prove, and model-check dynamic-logic sequents"
)]
struct Cli {
    /// Print machine-readable JSON verdicts instead of human text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a formula (or sequent) and echo its canonical rendering.
    Parse {
        /// Treat the input as a sequent instead of a formula.
        #[arg(long)]
        sequent: bool,
        /// The text to parse.
        input: String,
    },
    /// Validate a proof file: local rule checks, then the trace condition.
    Check {
        /// A `g3pdl-proof/1` document.
        file: PathBuf,
    },
    /// Search for a proof or a countermodel of a test-free, acyclic goal.
    Prove {
        /// Treat the goal as a sequent instead of a formula.
        #[arg(long)]
        sequent: bool,
        /// The goal to prove.
        goal: String,
        /// Unwinding step budget per open goal.
        #[arg(long, default_value_t = DEFAULT_UNWINDING_STEPS)]
        max_steps: u64,
        /// Maximum number of open goals expanded before giving up.
        #[arg(long, default_value_t = 64)]
        max_iters: u64,
        /// Write the proof found to this file.
        #[arg(long, value_name = "FILE")]
        emit_proof: Option<PathBuf>,
        /// Write the countermodel found to this file.
        #[arg(long, value_name = "FILE")]
        emit_model: Option<PathBuf>,
    },
    /// Evaluate a sequent in a Kripke model under a valuation.
    Modelcheck {
        /// A `g3pdl-model/1` document.
        model: PathBuf,
        /// The sequent to evaluate.
        #[arg(long)]
        sequent: String,
        /// Label-to-state binding `label=state`; repeatable. Overrides the
        /// valuation stored in the model file.
        #[arg(long = "val", value_name = "LABEL=STATE")]
        vals: Vec<String>,
    },
    /// Derive the six standard axioms as checked proof files.
    Axioms {
        /// Directory the proof files are written into.
        #[arg(long, default_value = ".", value_name = "DIR")]
        emit: PathBuf,
        /// Derive only this axiom (1-6) instead of all six.
        #[arg(long)]
        axiom: Option<u8>,
        /// Program parameter α.
        #[arg(long, default_value = "a")]
        alpha: String,
        /// Program parameter β (axioms 3 and 4).
        #[arg(long, default_value = "b")]
        beta: String,
        /// Formula parameter φ.
        #[arg(long, default_value = "p")]
        phi: String,
        /// Formula parameter ψ (axioms 1, 2, and the test of 5).
        #[arg(long, default_value = "q")]
        psi: String,
    },
}

/// Output sink: human text with optional color, or line-oriented JSON.
struct Out {
    json: bool,
    color: bool,
}

impl Out {
    fn new(json: bool) -> Self {
        let color = match std::env::var("PDL_COLOR").ok().as_deref() {
            Some("0") => false,
            Some("1") => true,
            _ => std::io::stdout().is_terminal(),
        };
        Out { json, color }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn good(&self, text: &str) -> String {
        self.paint("32", text)
    }

    fn bad(&self, text: &str) -> String {
        self.paint("31", text)
    }

    fn warn(&self, text: &str) -> String {
        self.paint("33", text)
    }

    /// Reports a usage or I/O failure and yields the exit-2 status.
    fn usage_error(&self, message: &str) -> ExitCode {
        if self.json {
            println!("{}", json!({ "error": message }));
        } else {
            eprintln!("{} {message}", self.bad("error:"));
        }
        ExitCode::from(EXIT_USAGE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out::new(cli.json);
    match cli.command {
        Command::Parse { sequent, input } => cmd_parse(&out, sequent, &input),
        Command::Check { file } => cmd_check(&out, &file),
        Command::Prove {
            sequent,
            goal,
            max_steps,
            max_iters,
            emit_proof,
            emit_model,
        } => cmd_prove(
            &out,
            sequent,
            &goal,
            Budget {
                max_steps,
                max_iters,
            },
            emit_proof.as_deref(),
            emit_model.as_deref(),
        ),
        Command::Modelcheck {
            model,
            sequent,
            vals,
        } => cmd_modelcheck(&out, &model, &sequent, &vals),
        Command::Axioms {
            emit,
            axiom,
            alpha,
            beta,
            phi,
            psi,
        } => cmd_axioms(&out, &emit, axiom, &alpha, &beta, &phi, &psi),
    }
}

fn cmd_parse(out: &Out, as_sequent: bool, input: &str) -> ExitCode {
    let (kind, canonical) = if as_sequent {
        match parse_sequent(input) {
            Ok(s) => ("sequent", s.to_string()),
            Err(e) => return out.usage_error(&e.to_string()),
        }
    } else {
        match parse_formula(input) {
            Ok(f) => ("formula", f.to_string()),
            Err(e) => return out.usage_error(&e.to_string()),
        }
    };
    if out.json {
        println!("{}", json!({ "kind": kind, "canonical": canonical }));
    } else {
        println!("{canonical}");
    }
    ExitCode::from(EXIT_OK)
}

fn lasso_json(l: &Lasso) -> serde_json::Value {
    json!({ "stem": l.stem, "cycle": l.cycle })
}

fn cmd_check(out: &Out, file: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => return out.usage_error(&format!("{}: {e}", file.display())),
    };
    let proof = match parse_proof(&text) {
        Ok(p) => p,
        Err(e) => return out.usage_error(&format!("{}: {e}", file.display())),
    };
    if let Err(errors) = check_pre_proof(&proof) {
        if out.json {
            let msgs: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            println!(
                "{}",
                json!({ "verdict": "invalid", "reason": "local rule checks failed", "errors": msgs })
            );
        } else {
            println!("{}", out.bad("invalid: local rule checks failed"));
            for e in &errors {
                println!("  {e}");
            }
        }
        return ExitCode::from(EXIT_NEGATIVE);
    }
    match check_gtc(&proof) {
        Ok(GtcVerdict::Accepted) => {
            if out.json {
                println!("{}", json!({ "verdict": "valid" }));
            } else {
                println!("{}", out.good("valid cyclic proof"));
            }
            ExitCode::from(EXIT_OK)
        }
        Ok(GtcVerdict::Rejected(lasso)) => {
            if out.json {
                println!(
                    "{}",
                    json!({
                        "verdict": "invalid",
                        "reason": "global trace condition violated",
                        "lasso": lasso_json(&lasso),
                    })
                );
            } else {
                println!("{}", out.bad("invalid: global trace condition violated"));
                let stem: Vec<String> = lasso.stem.iter().map(|n| n.to_string()).collect();
                let cycle: Vec<String> = lasso.cycle.iter().map(|n| n.to_string()).collect();
                println!("  lasso stem:  [{}]", stem.join(", "));
                println!("  lasso cycle: [{}]", cycle.join(", "));
            }
            ExitCode::from(EXIT_NEGATIVE)
        }
        Err(e) => out.usage_error(&format!("trace analysis failed: {e}")),
    }
}

fn goal_sequent(as_sequent: bool, goal: &str) -> Result<Sequent, String> {
    if as_sequent {
        parse_sequent(goal).map_err(|e| e.to_string())
    } else {
        let phi: Formula = parse_formula(goal).map_err(|e| e.to_string())?;
        Ok(Sequent {
            ant: BTreeSet::new(),
            con: BTreeSet::from([Item::fml(Label::new("x"), phi)]),
        })
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_prove(
    out: &Out,
    as_sequent: bool,
    goal: &str,
    budget: Budget,
    emit_proof: Option<&Path>,
    emit_model: Option<&Path>,
) -> ExitCode {
    let goal = match goal_sequent(as_sequent, goal) {
        Ok(s) => s,
        Err(e) => return out.usage_error(&e),
    };
    let outcome = match prove_test_free(&goal, &budget) {
        Ok(o) => o,
        Err(SearchError::NotTestFree) => {
            return out.usage_error("test programs are unsupported by search");
        }
        Err(SearchError::NotAcyclic) => {
            return out.usage_error("the goal's relational atoms must form an acyclic graph");
        }
        Err(e) => return out.usage_error(&e.to_string()),
    };
    match outcome {
        SearchOutcome::Proof(proof) => {
            let mut written = None;
            if let Some(path) = emit_proof {
                let text = match render_proof(&proof) {
                    Ok(t) => t,
                    Err(e) => return out.usage_error(&e.to_string()),
                };
                if let Err(e) = write_file(path, &text) {
                    return out.usage_error(&e);
                }
                written = Some(path.display().to_string());
            }
            if out.json {
                println!(
                    "{}",
                    json!({ "verdict": "proof", "nodes": proof.nodes.len(), "file": written })
                );
            } else {
                println!(
                    "{} ({} nodes)",
                    out.good("proved: cyclic proof found"),
                    proof.nodes.len()
                );
                if let Some(f) = written {
                    println!("  proof written to {f}");
                }
            }
            ExitCode::from(EXIT_OK)
        }
        SearchOutcome::Countermodel(model, valuation) => {
            let mut written = None;
            if let Some(path) = emit_model {
                let text = render_model(&model, Some(&valuation));
                if let Err(e) = write_file(path, &text) {
                    return out.usage_error(&e);
                }
                written = Some(path.display().to_string());
            }
            if out.json {
                let vals: serde_json::Value = valuation
                    .iter()
                    .map(|(l, s)| (l.as_str().to_string(), json!(s)))
                    .collect::<serde_json::Map<String, serde_json::Value>>()
                    .into();
                println!(
                    "{}",
                    json!({
                        "verdict": "countermodel",
                        "states": model.states.len(),
                        "valuation": vals,
                        "file": written,
                    })
                );
            } else {
                println!(
                    "{} ({} states)",
                    out.bad("refuted: countermodel found"),
                    model.states.len()
                );
                for (l, s) in &valuation {
                    println!("  {l} -> {s}");
                }
                if let Some(f) = written {
                    println!("  model written to {f}");
                }
            }
            ExitCode::from(EXIT_NEGATIVE)
        }
        SearchOutcome::Unknown(reason) => {
            if out.json {
                println!("{}", json!({ "verdict": "unknown", "reason": reason }));
            } else {
                println!("{} {reason}", out.warn("unknown:"));
            }
            ExitCode::from(EXIT_UNKNOWN)
        }
    }
}

fn cmd_modelcheck(out: &Out, model_file: &Path, sequent: &str, vals: &[String]) -> ExitCode {
    let text = match std::fs::read_to_string(model_file) {
        Ok(t) => t,
        Err(e) => return out.usage_error(&format!("{}: {e}", model_file.display())),
    };
    let (model, stored_valuation) = match parse_model(&text) {
        Ok(m) => m,
        Err(e) => return out.usage_error(&format!("{}: {e}", model_file.display())),
    };
    let seq = match parse_sequent(sequent) {
        Ok(s) => s,
        Err(e) => return out.usage_error(&e.to_string()),
    };
    let mut valuation: Valuation = stored_valuation.unwrap_or_default();
    for binding in vals {
        match binding.split_once('=') {
            Some((label, state)) if !label.is_empty() && !state.is_empty() => {
                valuation.insert(Label::new(label.trim()), state.trim().to_string());
            }
            _ => {
                return out.usage_error(&format!(
                    "malformed --val `{binding}`; expected LABEL=STATE"
                ))
            }
        }
    }
    match satisfies_sequent(&model, &valuation, &seq) {
        Ok(true) => {
            if out.json {
                println!("{}", json!({ "verdict": "satisfied" }));
            } else {
                println!("{}", out.good("satisfied"));
            }
            ExitCode::from(EXIT_OK)
        }
        Ok(false) => {
            if out.json {
                println!("{}", json!({ "verdict": "falsified" }));
            } else {
                println!("{}", out.bad("falsified"));
            }
            ExitCode::from(EXIT_NEGATIVE)
        }
        Err(e) => out.usage_error(&e.to_string()),
    }
}

fn cmd_axioms(
    out: &Out,
    emit: &Path,
    axiom: Option<u8>,
    alpha: &str,
    beta: &str,
    phi: &str,
    psi: &str,
) -> ExitCode {
    let params = {
        let alpha = match g3pdl::parser::parse_program(alpha) {
            Ok(p) => p,
            Err(e) => return out.usage_error(&format!("--alpha: {e}")),
        };
        let beta = match g3pdl::parser::parse_program(beta) {
            Ok(p) => p,
            Err(e) => return out.usage_error(&format!("--beta: {e}")),
        };
        let phi = match parse_formula(phi) {
            Ok(f) => f,
            Err(e) => return out.usage_error(&format!("--phi: {e}")),
        };
        let psi = match parse_formula(psi) {
            Ok(f) => f,
            Err(e) => return out.usage_error(&format!("--psi: {e}")),
        };
        AxiomParams {
            alpha: Some(alpha),
            beta: Some(beta),
            phi: Some(phi),
            psi: Some(psi),
        }
    };
    let ids: Vec<u8> = match axiom {
        Some(id) => vec![id],
        None => (1..=6).collect(),
    };
    let mut written: Vec<String> = Vec::new();
    for id in ids {
        let proof = match derive_axiom(id, &params) {
            Ok(p) => p,
            Err(e) => return out.usage_error(&e.to_string()),
        };
        // Closure under our own outputs: never write a file that would not
        // pass `pdl check`.
        if check_pre_proof(&proof).is_err()
            || !matches!(check_gtc(&proof), Ok(GtcVerdict::Accepted))
        {
            return out.usage_error(&format!("derived axiom {id} failed revalidation"));
        }
        let text = match render_proof(&proof) {
            Ok(t) => t,
            Err(e) => return out.usage_error(&e.to_string()),
        };
        let path = emit.join(format!("axiom{id}.proof.json"));
        if let Err(e) = write_file(&path, &text) {
            return out.usage_error(&e);
        }
        written.push(path.display().to_string());
    }
    if out.json {
        println!("{}", json!({ "written": written }));
    } else {
        for f in &written {
            println!("{} {f}", out.good("wrote"));
        }
    }
    ExitCode::from(EXIT_OK)
}
