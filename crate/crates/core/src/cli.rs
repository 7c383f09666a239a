//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::{instance_paths, load_configs, run_suite, time_grid};
use crate::engine::{solve, BranchingStrategy, PumpMode, SolveStatus, SolverOptions, Traversal};
use crate::io::{load_instance, ResultFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nlbb", version, about = "Nonlinear branch-and-bound MINLP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance file.
    Solve(SolveArgs),
    /// Run configurations over a directory of instances.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = BranchingStrategy::StrongRootThenPseudo)]
    branching: BranchingStrategy,
    #[arg(long, value_enum, default_value_t = Traversal::BestFirst)]
    traverse: Traversal,
    #[arg(long, value_enum, default_value_t = PumpMode::Rounding)]
    pump: PumpMode,
    /// Feasibility pump time limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    pump_time: f64,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Overall time limit in seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    /// Threads; 1 runs the sequential search.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a JSON result file here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SolveArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            branching: self.branching,
            traversal: self.traverse,
            pump: self.pump,
            pump_time_limit: self.pump_time,
            gap_tolerance: self.gap,
            time_limit: self.time_limit,
            workers: self.workers,
            seed: self.seed,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    instance_dir: PathBuf,
    /// JSON object of named solver option sets.
    #[arg(long)]
    configs: PathBuf,
    /// Write the runtime profile CSV here.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Write the summary CSV here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

pub fn exit_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Optimal | SolveStatus::FeasibleTimeLimit => EXIT_OK,
        SolveStatus::InfeasibleOrUnbounded => EXIT_INFEASIBLE,
        SolveStatus::NoSolutionTimeLimit => EXIT_NO_SOLUTION,
        SolveStatus::Error => EXIT_USAGE,
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code. Output that would go to stdout/stderr is written to `out`/`err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => run_solve(&a, out),
        Command::Bench(a) => run_bench(&a, out, err),
    };
    outcome.unwrap_or_else(|message| {
        let _ = writeln!(err, "error: {message}");
        EXIT_USAGE
    })
}

fn run_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32, String> {
    let options = args.options();
    options.validate().map_err(|e| e.to_string())?;
    let model = load_instance(&args.file).map_err(|e| format!("{}: {e}", args.file.display()))?;
    let result = solve(&model, &options);
    let file = ResultFile::new(&model, &result, &options);

    let mut text = format!("status      {:?}\n", result.status);
    if let Some(obj) = file.objective {
        text += &format!("objective   {obj}\n");
    }
    text += &format!(
        "bound       {}\ngap         {}\nnodes       {}\nrestarts    {}\ntime        {:.3}s\n",
        file.best_bound, file.gap, file.nodes, file.restarts, file.wall_seconds
    );
    if let Some(p) = &file.pump {
        text += &format!(
            "pump        {} after {} iterations\n",
            if p.found { "found" } else { "none" },
            p.iterations
        );
    }
    if let Some(a) = &file.assignment {
        for (name, v) in a {
            text += &format!("  {name} = {v}\n");
        }
    }
    out.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
    if let Some(path) = &args.out {
        fs::write(path, file.to_json() + "\n").map_err(|e| format!("cannot write `{}`: {e}", path.display()))?;
    }
    Ok(exit_code(result.status))
}

fn run_bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let configs = load_configs(&args.configs).map_err(|e| e.to_string())?;
    let paths = instance_paths(&args.instance_dir).map_err(|e| e.to_string())?;
    let table = run_suite(&paths, &configs);
    for r in table.runs.iter().filter(|r| r.error.is_some()) {
        let _ = writeln!(
            err,
            "warning: {}: {}",
            r.instance,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let grid = time_grid(table.horizon(&configs));
    let profile = table.profile_csv(&grid);
    let summary = table.summary_csv();
    let write = |path: &Option<PathBuf>, text: &str| match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("cannot write `{}`: {e}", p.display())),
        None => Ok(()),
    };
    write(&args.profile, &profile)?;
    write(&args.summary, &summary)?;
    out.write_all(summary.as_bytes()).map_err(|e| e.to_string())?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("nlbb").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn defaults_match_solver_defaults() {
        let cli = Cli::try_parse_from(["nlbb", "solve", "x.json"]).unwrap();
        let Command::Solve(a) = cli.command else { panic!() };
        assert_eq!(a.options(), SolverOptions::default());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&["solve"]).0, EXIT_USAGE);
        assert_eq!(call(&["solve", "a.json", "--branching", "random"]).0, EXIT_USAGE);
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_file_is_named() {
        let (code, _, err) = call(&["solve", "missing.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("missing.json"), "{err}");
    }

    #[test]
    fn invalid_gap_is_rejected() {
        let (code, _, err) = call(&["solve", "missing.json", "--gap", "2"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("gap_tolerance"), "{err}");
    }
}
