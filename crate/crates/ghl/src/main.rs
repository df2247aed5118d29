use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ghl::assertions::PredModel;
use ghl::backends::{elaborate_pc, run, Instance};
use ghl::harness::{validate_axioms, verify_soundness, Verdict};
use ghl::kernel::{run_suite, DEFAULT_SEED, DEFAULT_TRIALS, SUITES};
use ghl::parse::{parse_formula, parse_model, parse_program};
use ghl::rules::{check, parse_derivation, parse_judgment, parse_tables, Judgment};
use ghl::syntax::{enumerate_memories, print_program, Model, Program};

const USAGE_ERROR: u8 = 1;
const REFUTED: u8 = 2;

#[derive(Parser)]
#[command(name = "ghl", about = "Checker and test harness for graded program logics", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a program, formula, or judgment file and print it back.
    Parse {
        #[arg(long)]
        model: PathBuf,
        /// What the file contains: program | formula | judgment.
        #[arg(long, default_value = "program")]
        kind: String,
        /// Check formulas in the two-run (relational) assertion language.
        #[arg(long)]
        relational: bool,
        file: PathBuf,
    },
    /// Check a derivation against a judgment and an axiom table.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        judgment: PathBuf,
        #[arg(long)]
        derivation: PathBuf,
        /// Insert branch-trace commands before checking.
        #[arg(long)]
        elaborate: bool,
        #[arg(long, default_value_t = 1 << 20)]
        budget: u64,
    },
    /// Run a program from every memory of the model and print the results.
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instance: String,
        /// Clearance to run at (defaults to the model's maximum level).
        #[arg(long)]
        level: Option<u64>,
        #[arg(long)]
        elaborate: bool,
        #[arg(long, default_value_t = 1 << 20)]
        budget: u64,
        file: PathBuf,
    },
    /// Exhaustively test a judgment semantically; exit 2 on a counterexample.
    Soundness {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        judgment: PathBuf,
        #[arg(long)]
        elaborate: bool,
        #[arg(long, default_value_t = 1 << 20)]
        budget: u64,
        /// Also emit key=value records.
        #[arg(long)]
        machine: bool,
    },
    /// Run the randomized structural law suites.
    Laws {
        /// One of: kleisli | coproduct | freyd | fibration | lifting.
        /// Omit to run all suites.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: u64,
        #[arg(long)]
        machine: bool,
    },
    /// Validate every axiom-table entry semantically against the model.
    Axioms {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        instance: String,
        #[arg(long)]
        tables: PathBuf,
        #[arg(long, default_value_t = 1 << 20)]
        budget: u64,
        #[arg(long)]
        machine: bool,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(USAGE_ERROR)
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> Result<Model, String> {
    parse_model(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_instance(name: &str) -> Result<Instance, String> {
    Instance::by_name(name).ok_or_else(|| format!("unknown instance `{name}`"))
}

fn load_judgment(path: &Path, elaborate: bool) -> Result<Judgment, String> {
    let mut j = parse_judgment(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    if elaborate {
        j.prog = elaborate_pc(&j.prog).map_err(|e| e.to_string())?;
    }
    Ok(j)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Render clap's own help/errors but normalize the exit code.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(USAGE_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(msg) => usage(msg),
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, String> {
    match cmd {
        Cmd::Parse { model, kind, relational, file } => {
            let model = load_model(&model)?;
            let src = read(&file)?;
            match kind.as_str() {
                "program" => {
                    let p = parse_program(&src).map_err(|e| e.to_string())?;
                    ghl::syntax::check_program(&p, &model)
                        .map_err(|e| e.to_string())?;
                    println!("{}", print_program(&p));
                }
                "formula" => {
                    let f = parse_formula(&src).map_err(|e| e.to_string())?;
                    let pm = if relational {
                        PredModel::relational()
                    } else {
                        PredModel::unary()
                    };
                    ghl::assertions::check_formula(&f, &model, &pm).map_err(|e| e.to_string())?;
                    println!("{}", ghl::assertions::print_formula(&f));
                }
                "judgment" => {
                    let j = parse_judgment(&src).map_err(|e| e.to_string())?;
                    println!("{j}");
                }
                other => return Err(format!("unknown kind `{other}`")),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Check { model, instance, tables, judgment, derivation, elaborate, budget } => {
            let model = load_model(&model)?;
            let inst = load_instance(&instance)?;
            let tables = parse_tables(&read(&tables)?).map_err(|e| e.to_string())?;
            let j = load_judgment(&judgment, elaborate)?;
            let d = parse_derivation(&read(&derivation)?).map_err(|e| e.to_string())?;
            let pm = if inst.relational() {
                PredModel::relational()
            } else {
                PredModel::unary()
            };
            let pom = inst.pomonoid(&model);
            match check(&d, &j, &tables, pom, &model, &pm, budget as u128) {
                Ok(final_j) => {
                    println!("accepted: {final_j}");
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    println!("rejected: {e}");
                    Ok(ExitCode::from(REFUTED))
                }
            }
        }
        Cmd::Run { model, instance, level, elaborate, budget, file } => {
            let model = load_model(&model)?;
            let inst = load_instance(&instance)?;
            let mut p: Program = parse_program(&read(&file)?).map_err(|e| e.to_string())?;
            if elaborate {
                p = elaborate_pc(&p).map_err(|e| e.to_string())?;
            }
            let mems = enumerate_memories(&model, budget as u128).map_err(|e| e.to_string())?;
            for mem in &mems {
                let r = run(&p, &model, inst, mem, level).map_err(|e| e.to_string())?;
                println!("{}  =>  {}", mem.display(&model), r.display(&model));
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Soundness { model, instance, judgment, elaborate, budget, machine } => {
            let model = load_model(&model)?;
            let inst = load_instance(&instance)?;
            let j = load_judgment(&judgment, elaborate)?;
            let report =
                verify_soundness(&j, inst, &model, budget as u128).map_err(|e| e.to_string())?;
            println!("{report}");
            if machine {
                println!("{}", report.record());
            }
            Ok(if matches!(report.verdict, Verdict::Pass) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(REFUTED)
            })
        }
        Cmd::Laws { suite, seed, trials, machine } => {
            let names: Vec<&str> = match &suite {
                Some(s) => vec![s.as_str()],
                None => SUITES.to_vec(),
            };
            let mut all_ok = true;
            for name in names {
                let report = run_suite(name, seed, trials)
                    .ok_or_else(|| format!("unknown suite `{name}`"))?;
                println!("{report}");
                if machine {
                    println!("{}", report.record());
                }
                all_ok &= report.passed();
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(REFUTED) })
        }
        Cmd::Axioms { model, instance, tables, budget, machine } => {
            let model = load_model(&model)?;
            let inst = load_instance(&instance)?;
            let tables = parse_tables(&read(&tables)?).map_err(|e| e.to_string())?;
            let report =
                validate_axioms(&tables, inst, &model, budget as u128).map_err(|e| e.to_string())?;
            println!("{report}");
            if machine {
                for line in report.records() {
                    println!("{line}");
                }
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(REFUTED) })
        }
    }
}
