use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapeck::cfg::Cfg;
use shapeck::engine::{analyze_program, Config, Outcome, Property};
use shapeck::formula::{parse_entailment, parse_heap};
use shapeck::frontend::parse_program;
use shapeck::solver::{check_sat, find_counter_model, SatResult};

#[derive(Parser)]
#[command(name = "analyzer", about = "Memory-safety analyzer for list-manipulating programs")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    analyze: AnalyzeArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Decide satisfiability of a formula, or validity of `lhs |- rhs`.
    Solve {
        /// Read the file as an entailment.
        #[arg(long)]
        entail: bool,
        file: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PropertyArg {
    ValidDeref,
    ValidFree,
    ValidMemtrack,
    All,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum, default_value = "all")]
    property: PropertyArg,
    /// Integers in [-K, K] are tracked exactly.
    #[arg(long, value_name = "K", default_value_t = 5)]
    int_range: i64,
    /// Largest minimum length a list segment records.
    #[arg(long, value_name = "N", default_value_t = 2)]
    length_limit: u8,
    #[arg(long)]
    no_abstraction: bool,
    /// Iterations allowed per loop head before the analysis fails.
    #[arg(long, value_name = "N", default_value_t = 50)]
    loop_ceiling: usize,
    /// Write the states of every location as JSON.
    #[arg(long, value_name = "FILE")]
    dump_states: Option<PathBuf>,
    /// Write the control-flow graphs in DOT format.
    #[arg(long, value_name = "FILE")]
    dump_cfg: Option<PathBuf>,
    file: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Solve { entail, file }) => solve(&file, entail),
        None => match &cli.analyze.file {
            Some(file) => analyze(file, &cli.analyze),
            None => {
                eprintln!("error: no input file");
                ExitCode::from(2)
            }
        },
    }
}

fn requested(p: PropertyArg) -> Vec<Property> {
    match p {
        PropertyArg::ValidDeref => vec![Property::ValidDeref],
        PropertyArg::ValidFree => vec![Property::ValidFree],
        PropertyArg::ValidMemtrack => vec![Property::ValidMemtrack],
        PropertyArg::All => Property::ALL.to_vec(),
    }
}

fn analyze(file: &Path, args: &AnalyzeArgs) -> ExitCode {
    let props = requested(args.property);
    let src = match fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return ExitCode::from(3);
        }
    };
    let program = match parse_program(&src) {
        Ok(p) => p,
        Err(e) => {
            for p in &props {
                println!("{p}: {}", Outcome::Error);
            }
            eprintln!("{}:{e}", file.display());
            return ExitCode::from(if e.is_unsupported() { 0 } else { 2 });
        }
    };
    if let Some(out) = &args.dump_cfg {
        let dot: String = program.functions.iter().map(|f| Cfg::build(f).to_dot()).collect();
        if let Err(e) = fs::write(out, dot) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(3);
        }
    }
    let config = Config {
        int_range: args.int_range,
        length_limit: args.length_limit,
        abstraction: !args.no_abstraction,
        loop_ceiling: args.loop_ceiling,
    };
    let analysis = match analyze_program(&program, config) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Some(out) = &args.dump_states {
        let json = serde_json::to_string_pretty(&analysis.states).expect("JSON values serialize");
        if let Err(e) = fs::write(out, json) {
            eprintln!("error: cannot write {}: {e}", out.display());
            return ExitCode::from(3);
        }
    }
    let name = file.display();
    for v in analysis.verdicts.iter().filter(|v| props.contains(&v.property)) {
        println!("{}: {}", v.property, v.outcome);
        for step in v.trace.iter().flatten() {
            println!("  {name}:{} in {}", step.line, step.function);
        }
    }
    ExitCode::SUCCESS
}

fn solve(file: &Path, entail: bool) -> ExitCode {
    let src = match fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return ExitCode::from(3);
        }
    };
    if entail {
        match parse_entailment(&src) {
            Ok((l, r)) => match find_counter_model(&l, &r) {
                None => println!("valid"),
                Some(m) => {
                    println!("invalid");
                    println!("{}", m.to_json());
                }
            },
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                return ExitCode::from(2);
            }
        }
    } else {
        match parse_heap(&src) {
            Ok(h) => match check_sat(&h) {
                SatResult::Sat(m) => {
                    println!("sat");
                    println!("{}", m.to_json());
                }
                SatResult::Unsat => println!("unsat"),
            },
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                return ExitCode::from(2);
            }
        }
    }
    ExitCode::SUCCESS
}
