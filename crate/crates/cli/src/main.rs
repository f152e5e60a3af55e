use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mond_equilib::config::RunConfig;
use mond_equilib::dynamics::{check_eps, run_perturbation, PerturbationKind};
use mond_equilib::equilibrium::{
    lift_kinetic, mass_curve, reduce_phi_to_psi, shoot, solve_for_mass, EquilibriumModel, KineticModel,
    SolverOptions,
};
use mond_equilib::functionals::{h_fluid, AnsatzFunction, ReferenceDensity};
use mond_equilib::radial_field::Snapshot;
use mond_equilib::verify::{lift_energies, model_checks, run_suite, Suite};
use mond_equilib::{Error, InterpolationFunction};

/// Spherically symmetric MOND equilibria: mass curves, solves, kinetic
/// lifts, energies, stability runs and invariant checks.
#[derive(Debug, Parser)]
#[command(name = "mond-equilib", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `dynamics.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Omit the timestamp header line from CSV outputs.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Override one config key, e.g. `--set lambda.family=simple`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan central densities and fit the mass-curve power laws.
    MassCurve {
        #[arg(long, default_value_t = 1e-4)]
        s_min: f64,
        #[arg(long, default_value_t = 1.0)]
        s_max: f64,
        #[arg(long, default_value_t = 60)]
        points: usize,
    },
    /// Solve for one equilibrium by mass or by central density.
    Solve(SolveArgs),
    /// Lift the equilibrium of mass `model.mass` to a distribution function.
    Lift,
    /// Energy report of a model.
    Energies {
        /// Model snapshot; solved from the config when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Perturb a lifted equilibrium and evolve it with the shell code.
    Perturb {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value = "velocity_scale")]
        kind: String,
        /// Run length in dynamical times (overrides `dynamics.t_end_dyn`).
        #[arg(long)]
        t_end: Option<f64>,
        /// Shell count (overrides `dynamics.n`).
        #[arg(long)]
        shells: Option<usize>,
        /// Fluid equilibrium snapshot to lift; solved from the config when absent.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run invariant suites and write a pass/fail table.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        /// Also check this model snapshot.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct SolveArgs {
    /// Target mass.
    #[arg(long)]
    mass: Option<f64>,
    /// Central density.
    #[arg(long)]
    central: Option<f64>,
}

/// Exit status for a check that ran and failed.
struct ChecksFailed;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(ChecksFailed)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad input of any kind, 3 for numerical failures.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if !err.is_validation() => 3,
        _ => 2,
    }
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    timestamp: bool,
}

impl Ctx {
    fn write_csv(&self, name: &str, body: &str) -> Result<()> {
        let mut text = String::new();
        if self.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            text.push_str(&format!("# generated at unix time {secs}\n"));
        }
        text.push_str(body);
        self.write(name, &text)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn interp(&self) -> Result<InterpolationFunction> {
        Ok(self.config.interpolation()?)
    }

    fn opts(&self) -> SolverOptions {
        self.config.solver_options()
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{kv}`");
        };
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<Option<ChecksFailed>> {
    let config = load_config(&cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx {
        config,
        out,
        timestamp: !cli.no_timestamp,
    };
    ctx.write("run.config", &ctx.config.to_text())?;
    match cli.command {
        Command::MassCurve { s_min, s_max, points } => cmd_mass_curve(&ctx, s_min, s_max, points),
        Command::Solve(args) => cmd_solve(&ctx, args),
        Command::Lift => cmd_lift(&ctx),
        Command::Energies { model } => cmd_energies(&ctx, model.as_deref()),
        Command::Perturb {
            eps,
            kind,
            t_end,
            shells,
            model,
        } => cmd_perturb(&ctx, eps, &kind, t_end, shells, model.as_deref()),
        Command::Verify { suite, model } => cmd_verify(&ctx, &suite, model.as_deref()),
    }
}

fn cmd_mass_curve(ctx: &Ctx, s_min: f64, s_max: f64, points: usize) -> Result<Option<ChecksFailed>> {
    let a = ctx.config.fluid_ansatz()?;
    let curve = mass_curve(&a, &ctx.interp()?, s_min, s_max, points, &ctx.opts())?;
    ctx.write_csv("mass_curve.csv", &curve.to_csv())?;
    ctx.write_csv("fits.csv", &curve.fits_csv())?;
    for (name, fit) in [("deep", curve.fit_deep), ("newton", curve.fit_newton)] {
        if let Some(f) = fit {
            println!(
                "{name} fit: M = {:.6} s^{:.4} over {} points",
                f.coefficient, f.exponent, f.points
            );
        }
    }
    if !curve.is_strictly_increasing() {
        println!("warning: masses are not strictly increasing");
    }
    Ok(None)
}

/// Solves for `mass`, widening the central-density bracket as needed.
fn solve_mass(
    a: &AnsatzFunction,
    f: &InterpolationFunction,
    mass: f64,
    opts: &SolverOptions,
) -> Result<EquilibriumModel> {
    let mut bracket = (1e-3, 1e3);
    for _ in 0..6 {
        match solve_for_mass(a, f, mass, bracket, opts) {
            Err(Error::NeedsWiderBracket { .. }) => bracket = (bracket.0 * 1e-3, bracket.1 * 1e3),
            other => return Ok(other?),
        }
    }
    Ok(solve_for_mass(a, f, mass, bracket, opts)?)
}

fn energy_reference(ctx: &Ctx, eq: &EquilibriumModel) -> Result<ReferenceDensity> {
    Ok(ReferenceDensity::uniform_ball(
        eq.density.total_mass(),
        ctx.config.reference_radius,
    )?)
}

fn print_model(eq: &EquilibriumModel) {
    println!("s  = {:.10e}", eq.central_value);
    println!("M  = {:.10e}", eq.total_mass);
    println!("R0 = {:.10e}", eq.support_radius);
    println!("E0 = {:.10e}", eq.cutoff_energy);
}

fn cmd_solve(ctx: &Ctx, args: SolveArgs) -> Result<Option<ChecksFailed>> {
    let a = ctx.config.fluid_ansatz()?;
    let f = ctx.interp()?;
    let eq = match (args.mass, args.central) {
        (Some(m), None) => solve_mass(&a, &f, m, &ctx.opts())?,
        (None, Some(s)) => shoot(&a, s, &f, &ctx.opts())?,
        _ => bail!("give exactly one of --mass and --central"),
    };
    ctx.write("model.snap", &eq.to_snapshot().to_text())?;
    let report = h_fluid(
        &eq.density,
        &eq.ansatz,
        &eq.interp,
        &energy_reference(ctx, &eq)?,
        None,
    )?;
    ctx.write_csv("energies.csv", &report.to_csv())?;
    print_model(&eq);
    Ok(None)
}

fn cmd_lift(ctx: &Ctx) -> Result<Option<ChecksFailed>> {
    let phi = ctx.config.kinetic_ansatz()?;
    let km = lift_kinetic(&phi, &ctx.interp()?, ctx.config.mass, &ctx.opts())?;
    let eq = &km.base;
    let n = reduce_phi_to_psi(&phi, &[1e-4, 1e-2, 1.0, 1e2, 1e4])?.fitted_n();
    let (hb, he) = lift_energies(eq, &km)?;
    let mut csv = String::from("quantity,value\n");
    for (k, v) in [
        ("kinetic_exponent", phi.exponent),
        ("reduced_n", n),
        ("density_mismatch", km.density_mismatch()),
        ("h_b", hb),
        ("h_e", he),
        ("h_rel_diff", (hb - he).abs() / he.abs()),
        ("velocity_support", km.velocity_support),
        ("dynamical_time", eq.dynamical_time()),
    ] {
        csv.push_str(&format!("{k},{v:.16e}\n"));
    }
    ctx.write("lift.snap", &eq.to_snapshot().with_meta("kinetic", phi).to_text())?;
    ctx.write_csv("lift.csv", &csv)?;
    print_model(eq);
    println!("H_B = {hb:.10e}, H_E = {he:.10e}");
    Ok(None)
}

fn read_model(path: &Path) -> Result<EquilibriumModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let snap = Snapshot::parse(&text).with_context(|| format!("in {}", path.display()))?;
    EquilibriumModel::from_snapshot(&snap).with_context(|| format!("in {}", path.display()))
}

fn cmd_energies(ctx: &Ctx, model: Option<&Path>) -> Result<Option<ChecksFailed>> {
    let eq = match model {
        Some(p) => read_model(p)?,
        None => solve_mass(
            &ctx.config.fluid_ansatz()?,
            &ctx.interp()?,
            ctx.config.mass,
            &ctx.opts(),
        )?,
    };
    let report = h_fluid(
        &eq.density,
        &eq.ansatz,
        &eq.interp,
        &energy_reference(ctx, &eq)?,
        None,
    )?;
    ctx.write_csv("energies.csv", &report.to_csv())?;
    println!("H = {:.10e}", report.h_value);
    Ok(None)
}

fn cmd_perturb(
    ctx: &Ctx,
    eps: f64,
    kind: &str,
    t_end: Option<f64>,
    shells: Option<usize>,
    model: Option<&Path>,
) -> Result<Option<ChecksFailed>> {
    check_eps(eps)?;
    let kind: PerturbationKind = kind.parse()?;
    let mut opts = ctx.config.run_options();
    if let Some(t) = t_end {
        if t.is_nan() || t < 0.0 {
            bail!("--t-end must be non-negative, got {t}");
        }
        opts.t_end_dyn = t;
    }
    if let Some(n) = shells {
        opts.shells = n;
    }
    let phi = ctx.config.kinetic_ansatz()?;
    let km = match model {
        Some(p) => KineticModel::from_equilibrium(&phi, read_model(p)?)?,
        None => lift_kinetic(&phi, &ctx.interp()?, ctx.config.mass, &ctx.opts())?,
    };
    let run = run_perturbation(&km, kind, eps, &opts)?;
    ctx.write_csv("diagnostics.csv", &run.to_csv())?;
    ctx.write_csv("summary.csv", &run.summary_csv())?;
    ctx.write("final.snap", &run.last.to_snapshot(&km.base).to_text())?;
    println!("energy drift  = {:.3e}", run.energy_drift());
    println!("growth factor = {:.3}", run.growth_factor());
    Ok(None)
}

fn cmd_verify(ctx: &Ctx, suite: &str, model: Option<&Path>) -> Result<Option<ChecksFailed>> {
    let suite: Suite = suite.parse()?;
    // a bad snapshot is an input error, reported before the suites run
    let eq = model.map(read_model).transpose()?;
    let mut report = run_suite(suite, ctx.config.seed)?;
    if let Some(eq) = &eq {
        report.extend(model_checks(eq)?);
    }
    let csv = report.to_csv();
    ctx.write_csv("verify.csv", &csv)?;
    print!("{csv}");
    let failed = report.failures().count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", report.rows.len());
        return Ok(Some(ChecksFailed));
    }
    Ok(None)
}
