use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use compliant_push::harness::check::self_check;
use compliant_push::harness::metrics::{interaction_summary, write_interaction_file, write_metrics_file};
use compliant_push::harness::scenario::BUILTIN_NAMES;
use compliant_push::harness::sweep::write_sweep_csv;
use compliant_push::harness::trace::{write_timing_file, write_trace_file};
use compliant_push::harness::{
    builtin_config, run_scenario, run_sweep, summarize, Profile, RunConfig, RunOutput, Scenario, SweepSpec,
};

#[derive(Parser, Debug)]
#[command(name = "pushsim", version, about = "Compliant pushing simulation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trace, metrics and solver timings.
    Run(RunArgs),
    /// Run the factor-grid robustness campaign.
    Sweep(SweepArgs),
    /// Run a scenario with and without the passivity filter and compare forces.
    PassivityDemo(RunArgs),
    /// Run the invariant self-checks; exits with status 2 on failure.
    Check(CheckArgs),
    /// Print the resolved configuration as TOML.
    DumpConfig(ConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Built-in name or path to a TOML configuration.
    #[arg(long)]
    config: Option<String>,
    /// Profile whose nominal scenario is used when no configuration is given.
    #[arg(long, conflicts_with = "config")]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the passivity filter.
    #[arg(long)]
    no_tank: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, env = "PUSHSIM_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value = "kuka")]
    profile: String,
    /// Base seed; cell `i` uses `seed + i`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// One friction and mass level with a single repetition.
    #[arg(long)]
    quick: bool,
    #[arg(long, env = "PUSHSIM_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Samples per randomized check.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load_config(args: &ConfigArgs, default: &str) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.profile) {
        (Some(spec), _) => match builtin_config(spec) {
            Some(cfg) => cfg?,
            None => {
                let text = fs::read_to_string(spec).with_context(|| {
                    format!("'{spec}' is neither a readable file nor a built-in ({})", BUILTIN_NAMES.join(", "))
                })?;
                RunConfig::from_toml(&text).with_context(|| format!("malformed config '{spec}'"))?
            }
        },
        (None, Some(p)) => Scenario::nominal(Profile::parse(p)?).resolve()?,
        (None, None) => builtin_config(default).expect("default config is built in")?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.no_tank {
        cfg.tank_enabled = false;
    }
    Ok(cfg)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let out = run_scenario(cfg).with_context(|| format!("run '{}' failed", cfg.name))?;
    let m = &out.metrics;
    println!(
        "{}: rmse pos {:.4e} m, rot {:.4e} rad; max err pos {:.4e} m, rot {:.4e} rad; max force {:.3} N; \
         monitor {} (excess {:.3e}, eta {:.3e}); {} solves, {} infeasible; {:.1} s",
        cfg.name,
        m.rmse_pos,
        m.rmse_rot,
        m.max_abs_pos_err,
        m.max_abs_rot_err,
        m.max_force_norm,
        if out.monitor.passed() { "passed" } else { "VIOLATED" },
        out.monitor.max_excess,
        out.monitor.eta,
        m.mpc_solves,
        m.mpc_infeasible,
        start.elapsed().as_secs_f64(),
    );
    Ok(out)
}

fn write_run(dir: &Path, stem: &str, cfg: &RunConfig, out: &RunOutput) -> Result<()> {
    write_trace_file(&dir.join(format!("{stem}_trace.csv")), &out.trace)?;
    write_metrics_file(&dir.join(format!("{stem}_metrics.csv")), &out.metrics)?;
    write_timing_file(&dir.join(format!("{stem}_timing.csv")), &out.solve_times)?;
    fs::write(dir.join(format!("{stem}_config.toml")), cfg.to_toml()?)?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(&args.config, "eight")?;
    prepare_out(&args.out)?;
    let out = execute(&cfg)?;
    write_run(&args.out, &cfg.name, &cfg, &out)?;
    println!("wrote {}/{}_*.csv", args.out.display(), cfg.name);
    Ok(())
}

fn cmd_passivity_demo(args: &RunArgs) -> Result<()> {
    if args.config.no_tank {
        bail!("passivity-demo runs both cases; drop --no-tank");
    }
    let passive = load_config(&args.config, "eight_obstacle")?;
    let nonpassive = RunConfig { tank_enabled: false, ..passive.clone() };
    prepare_out(&args.out)?;
    let a = execute(&passive)?;
    let b = execute(&nonpassive)?;
    write_trace_file(&args.out.join("passive_trace.csv"), &a.trace)?;
    write_trace_file(&args.out.join("nonpassive_trace.csv"), &b.trace)?;
    let rows = [interaction_summary("passive", true, &a), interaction_summary("nonpassive", false, &b)];
    write_interaction_file(&args.out.join("passivity_summary.csv"), &rows)?;
    for r in &rows {
        println!(
            "{:>10}: peak force while obstructed {:.3} N (predicted {:.3} N), monitor {}",
            r.case,
            r.peak_force_disturbed,
            r.peak_predicted_force_disturbed,
            if r.monitor_passed { "passed" } else { "VIOLATED" }
        );
    }
    if rows[0].peak_force_disturbed > 0.0 {
        println!("force ratio nonpassive/passive: {:.2}", rows[1].peak_force_disturbed / rows[0].peak_force_disturbed);
    }
    println!("wrote {}/{{passive,nonpassive}}_trace.csv and passivity_summary.csv", args.out.display());
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut spec = SweepSpec { profile: Profile::parse(&args.profile)?, ..SweepSpec::campaign() };
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if args.quick {
        spec.frictions.truncate(1);
        spec.masses = vec![*spec.masses.last().expect("campaign has masses")];
        spec.repetitions = 1;
    }
    if let Some(r) = args.repetitions {
        spec.repetitions = r;
    }
    prepare_out(&args.out)?;
    let start = Instant::now();
    let rows = run_sweep(&spec)?;
    let path = args.out.join("sweep.csv");
    write_sweep_csv(&path, &rows)?;
    let s = summarize(&rows);
    println!("{} runs ({} failed) in {:.0} s", s.runs, s.failures, start.elapsed().as_secs_f64());
    println!("mean rmse pos {:.4e} m, rot {:.4e} rad", s.mean_rmse_pos, s.mean_rmse_rot);
    println!("line {:.4e} m, curve {:.4e} m", s.mean_rmse_pos_line, s.mean_rmse_pos_curve);
    println!("slowest {:.4e} m, fastest {:.4e} m", s.mean_rmse_pos_slowest, s.mean_rmse_pos_fastest);
    println!("max infeasible fraction {:.4}", s.max_infeasible_fraction);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<bool> {
    let mut ok = true;
    for r in self_check(args.samples, args.seed) {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        ok &= r.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::PassivityDemo(a) => cmd_passivity_demo(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
        Command::DumpConfig(a) => load_config(a, "eight").and_then(|c| Ok(c.to_toml()?)).map(|t| {
            print!("{t}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
