use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use kswave::config::ExperimentConfig;
use kswave::energy::{poincare_check, smallness_max_lambda, POINCARE_CONSTANT};
use kswave::error::Error;
use kswave::experiment::{achievable_profile_tol, check_invariants, run_experiment, sweep};
use kswave::wave::{
    explicit_wave_eps0_on_nodes, solve_wave_on_nodes, validate_profile, SolveOptions,
};

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION: u8 = 2;
const EXIT_BLOW_UP: u8 = 3;
const EXIT_CONFIG: u8 = 4;

#[derive(Parser)]
#[command(
    name = "kswave",
    about = "Traveling-wave profiles, co-moving evolution and weighted energy diagnostics for a chemotaxis front on a periodic strip"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Turn theorem-hypothesis advisories into hard errors.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the traveling wave, validate it, and export profile CSV + metadata.
    Wave(Common),
    /// Run a single experiment (trajectory, energy.csv, summary.json).
    Run(Common),
    /// Run a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker pool size for sweep points.
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Run the invariant suites only.
    Check {
        #[command(flatten)]
        common: Common,
        /// Seed for the randomized batteries.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the Poincaré-constant battery and the smallness condition.
    Poincare {
        /// Transversal period.
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        /// Transversal node count.
        #[arg(long, default_value_t = 32)]
        ny: usize,
        /// Wave speed used for the admissible-period report.
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        /// Number of random battery members.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn classify(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParams(_) => EXIT_CONFIG,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_VALIDATION,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, u8> {
    let config = ExperimentConfig::from_file(&common.config).map_err(|e| {
        eprintln!("config error: {e}");
        EXIT_CONFIG
    })?;
    match config.validate(common.strict) {
        Ok(warnings) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            Ok(config)
        }
        Err(e) => {
            eprintln!("config error: {e}");
            Err(EXIT_CONFIG)
        }
    }
}

fn cmd_wave(common: &Common) -> u8 {
    let config = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let grid = match config.strip_grid() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let params = match config.wave_params() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let nodes = grid.z_nodes();
    let profile = if params.eps == 0.0 {
        explicit_wave_eps0_on_nodes(params.s, params.c_plus, &nodes)
    } else {
        solve_wave_on_nodes(
            &params,
            &nodes,
            &SolveOptions {
                tol: config.wave.tol,
                ..SolveOptions::default()
            },
        )
    };
    let profile = match profile {
        Ok(p) => p,
        Err(e) => {
            eprintln!("wave solve failed: {e}");
            return classify(&e);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&common.out) {
        eprintln!("io error: {e}");
        return EXIT_VALIDATION;
    }
    let csv = common.out.join("profile.csv");
    if let Err(e) = profile.write_csv(&csv, config.wave.tol) {
        eprintln!("export failed: {e}");
        return EXIT_VALIDATION;
    }
    let report = validate_profile(&profile, achievable_profile_tol(&config, &grid));
    for c in &report.checks {
        println!(
            "{} {:<34} value {:>13.6e}  threshold {:>13.6e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    println!(
        "derivative sups: |N'| {:.4e}  |N''| {:.4e}  |P'| {:.4e}  |P''| {:.4e}",
        report.sups.dn, report.sups.d2n, report.sups.dp, report.sups.d2p
    );
    println!("profile written to {}", csv.display());
    if report.ok() {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

fn cmd_run(common: &Common) -> u8 {
    let config = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run_experiment(&config, &common.out) {
        Ok(summary) => {
            for r in &summary.runs {
                println!(
                    "{:<14} m0 {:.6e}  sup M {}  C0 {}  drift {:.3e}  {}",
                    r.formulation,
                    r.m0,
                    r.sup_m.map_or("-".into(), |v| format!("{v:.6e}")),
                    r.c0_empirical.map_or("-".into(), |v| format!("{v:.3}")),
                    r.drift_sup,
                    r.failure.clone().unwrap_or_else(|| "ok".into())
                );
            }
            println!("summary written to {}", common.out.join("summary.json").display());
            if summary.any_blow_up() {
                EXIT_BLOW_UP
            } else if !summary.all_suites_pass() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            classify(&e)
        }
    }
}

fn cmd_sweep(common: &Common, workers: usize) -> u8 {
    let config = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match sweep(&config, &common.out, workers) {
        Ok(summary) => {
            for r in &summary.rows {
                println!("point {:03} {} = {:<12.6e} {}", r.index, r.axis, r.value, r.status);
            }
            if let Some(order) = summary.fitted_drift_order {
                println!("fitted drift order: {order:.3}");
            }
            if summary.rows.iter().all(|r| r.status == "ok") {
                EXIT_OK
            } else if summary.rows.iter().any(|r| r.status == "blow_up") {
                EXIT_BLOW_UP
            } else {
                EXIT_VALIDATION
            }
        }
        Err(e) => {
            eprintln!("sweep failed: {e}");
            classify(&e)
        }
    }
}

fn cmd_check(common: &Common, seed: u64) -> u8 {
    let config = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match check_invariants(&config, seed) {
        Ok(suites) => {
            let mut ok = true;
            for s in &suites {
                println!("{} {:<26} {}", if s.pass { "PASS" } else { "FAIL" }, s.name, s.detail);
                ok &= s.pass;
            }
            if ok {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            }
        }
        Err(e) => {
            eprintln!("check failed: {e}");
            classify(&e)
        }
    }
}

fn cmd_poincare(lambda: f64, ny: usize, s: f64, samples: usize, seed: u64) -> u8 {
    match poincare_check(lambda, ny, samples, seed) {
        Ok(r) => {
            println!("C_p (sharp periodic constant) = {:.12}", r.c_p);
            println!("worst ratio over {} members  = {:.12}", r.samples, r.worst_ratio);
            println!("extremal first-mode ratio    = {:.12}", r.extremal_ratio);
            println!(
                "smallness: s*lambda*C_p = {:.6} ({})",
                s * lambda * POINCARE_CONSTANT,
                if kswave::energy::smallness_satisfied(s, lambda) {
                    "satisfied"
                } else {
                    "violated"
                }
            );
            println!("admissible lambda for s = {s}: lambda <= {:.6}", smallness_max_lambda(s));
            let sharp = r.worst_ratio <= r.c_p + 1e-6;
            if sharp {
                EXIT_OK
            } else {
                EXIT_VALIDATION
            }
        }
        Err(e) => {
            eprintln!("poincare battery failed: {e}");
            classify(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Wave(common) => cmd_wave(common),
        Command::Run(common) => cmd_run(common),
        Command::Sweep { common, workers } => cmd_sweep(common, *workers),
        Command::Check { common, seed } => cmd_check(common, *seed),
        Command::Poincare {
            lambda,
            ny,
            s,
            samples,
            seed,
        } => cmd_poincare(*lambda, *ny, *s, *samples, *seed),
    };
    ExitCode::from(code)
}
