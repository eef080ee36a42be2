use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use obstacle_dg::assembly::{ConstraintKind, Method, MethodConfig};
use obstacle_dg::driver::{adaptive_solve_with, builtin_example, write_outputs};
use obstacle_dg::Error;

#[derive(Parser)]
#[command(name = "obstacle-dg", version, about = "Adaptive interior penalty DG solver for the obstacle problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Constraints {
    Integral,
    Quadrature,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Sipg,
    Nipg,
    Iipg,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop on a built-in example.
    Run {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        f_variant: f64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        degree: u8,
        #[arg(long, value_enum, default_value_t = Constraints::Integral)]
        constraints: Constraints,
        #[arg(long, value_enum, default_value_t = MethodArg::Sipg)]
        method: MethodArg,
        /// Defaults to 45 (SIPG), 20 (NIPG), 30 (IIPG).
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long, default_value_t = 0.4)]
        gamma: f64,
        /// Defaults to 50000 for degree 1 and 100000 for degree 2.
        #[arg(long)]
        max_dofs: Option<usize>,
        #[arg(long, default_value_t = 40)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        emit_meshes: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the built-in oracle and property checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run {
            example,
            f_variant,
            degree,
            constraints,
            method,
            penalty,
            gamma,
            max_dofs,
            max_iters,
            out,
            emit_meshes,
            seed,
        } => {
            let method = match method {
                MethodArg::Sipg => Method::Sipg,
                MethodArg::Nipg => Method::Nipg,
                MethodArg::Iipg => Method::Iipg,
            };
            let kind = match constraints {
                Constraints::Integral => ConstraintKind::Integral,
                Constraints::Quadrature => ConstraintKind::Quadrature,
            };
            let mut cfg = MethodConfig::new(method, degree, kind);
            if let Some(p) = penalty {
                cfg = cfg.with_penalty(p);
            }
            let mut spec = match builtin_example(example, f_variant, cfg) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            spec.gamma = gamma;
            spec.max_iters = max_iters;
            spec.seed = seed;
            if let Some(m) = max_dofs {
                spec.max_dofs = m;
            }
            if let Err(e) = spec.validate() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            let progress = |s: &obstacle_dg::driver::IterationState| {
                let r = s.row;
                let err = r.error_linf.map(|e| format!(" error={e:.3e}")).unwrap_or_default();
                eprintln!(
                    "iter {:>2} elements={} dofs={} eta={:.3e}{} pdas={} marked={} ({:.2}s)",
                    r.iter, r.elements, r.dofs, r.eta_total, err, r.pdas_iters, r.marked, r.seconds
                );
            };
            match adaptive_solve_with(&spec, emit_meshes, progress) {
                Ok(run) => {
                    if let Err(e) = write_outputs(&spec, &run.record, &run.meshes, &run.indicators, &out) {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                    eprintln!("stopped: {:?}; outputs in {}", run.record.stop, out.display());
                    ExitCode::SUCCESS
                }
                Err(fail) => {
                    let _ = write_outputs(&spec, &fail.partial, &fail.meshes, &[], &out);
                    eprintln!("error: {fail}");
                    match fail.error {
                        Error::NotConverged { .. } => ExitCode::from(2),
                        _ => ExitCode::from(1),
                    }
                }
            }
        }
        Command::Verify { seed } => {
            let report = obstacle_dg::verify::run_all(seed);
            for line in &report.lines {
                println!("{line}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
