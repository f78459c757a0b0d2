use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use polygrowth_core::io::{csv_row, fmt};
use polygrowth_core::oned::{first_integral_defect, quadrature_solution, verify_ode};
use polygrowth_core::potential::PotentialSpec;
use polygrowth_core::run::{analyze, construct, Analysis, AnalyzeOptions, RunConfig, CONFIG_FILE};
use polygrowth_verify::{run_suite, Suite};
use polygrowth_core::Error;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

/// Entire solutions of -Δu = F'(u) growing like a harmonic polynomial.
#[derive(Parser)]
#[command(name = "polygrowth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the nodal sector and write a run directory.
    Construct(ConstructArgs),
    /// Diagnostics on a finished run.
    Analyze {
        #[command(subcommand)]
        which: AnalyzeCommand,
    },
    /// Rotating one-dimensional profile by quadrature.
    Oned(OnedArgs),
    /// Construct once per value of one config parameter.
    Sweep(SweepArgs),
    /// Run the acceptance criteria.
    Verify {
        suite: SuiteArg,
        /// Where to write the verdict JSON (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialArg {
    #[value(alias = "sine_gordon")]
    SineGordon,
    Zero,
    #[value(alias = "cosine_series")]
    CosineSeries,
}

#[derive(Args, Clone)]
struct PotentialArgs {
    #[arg(long, value_enum)]
    potential: Option<PotentialArg>,
    /// Coefficients a_k of F = Σ a_k (1 − cos k u).
    #[arg(long, value_delimiter = ',')]
    coefficients: Vec<f64>,
}

impl PotentialArgs {
    fn spec(&self) -> anyhow::Result<Option<PotentialSpec>> {
        Ok(match self.potential {
            None => None,
            Some(PotentialArg::SineGordon) => Some(PotentialSpec::SineGordon),
            Some(PotentialArg::Zero) => Some(PotentialSpec::Zero),
            Some(PotentialArg::CosineSeries) => {
                if self.coefficients.is_empty() {
                    return Err(Error::Validation("cosine_series needs --coefficients".into()).into());
                }
                Some(PotentialSpec::CosineSeries {
                    coefficients: self.coefficients.clone(),
                })
            }
        })
    }
}

#[derive(Args, Clone)]
struct ConstructArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    nr: Option<usize>,
    #[arg(long)]
    ntheta: Option<usize>,
    /// Continuation radii ending at R.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[command(flatten)]
    potential: PotentialArgs,
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Skip the evenness check on the potential (experimental).
    #[arg(long)]
    allow_uneven: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Amplitude of a seeded random bump on the initial guess.
    #[arg(long)]
    perturbation: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

impl ConstructArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut config: serde_json::Value = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
            }
            None => json!({}),
        };
        let obj = config
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        if let Some(spec) = self.potential.spec()? {
            obj.insert("potential".into(), serde_json::to_value(spec)?);
        }
        obj.entry("potential").or_insert(json!({"kind": "sine_gordon"}));
        if let Some(d) = self.d {
            obj.insert("d".into(), json!(d));
        }
        if let Some(r) = self.r {
            obj.insert("R".into(), json!(r));
        }
        if let Some(nr) = self.nr {
            obj.insert("nr".into(), json!(nr));
        }
        obj.entry("nr").or_insert(json!(256));
        if let Some(nt) = self.ntheta {
            obj.insert("ntheta".into(), json!(nt));
        }
        if !obj.contains_key("ntheta") {
            let d = obj.get("d").and_then(|v| v.as_u64()).unwrap_or(2);
            obj.insert("ntheta".into(), json!(64 * d));
        }
        if let Some(radii) = &self.radii {
            obj.insert("radii".into(), json!(radii));
        }
        if let Some(seed) = self.seed {
            obj.insert("seed".into(), json!(seed));
        }
        if let Some(p) = self.perturbation {
            obj.insert("initial_perturbation".into(), json!(p));
        }
        if self.newton_tol.is_some() || self.allow_uneven {
            let solver = obj.entry("solver").or_insert(json!({}));
            let solver = solver
                .as_object_mut()
                .ok_or_else(|| Error::Config("solver must be a JSON object".into()))?;
            if let Some(tol) = self.newton_tol {
                solver.insert("newton_tol".into(), json!(tol));
            }
            if self.allow_uneven {
                solver.insert("allow_uneven".into(), json!(true));
            }
        }
        for key in ["d", "R"] {
            if !obj.contains_key(key) {
                return Err(Error::Validation(format!("missing --{key} (or \"{key}\" in the config)")).into());
            }
        }
        Ok(RunConfig::from_json(&config.to_string())?)
    }
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Energy comparison, Green identity and extension checks: lemmas.csv.
    Lemmas {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
        #[arg(long)]
        svg: bool,
    },
    /// Fourier modes, forcing and fits: modes.csv and fits.json.
    Modes {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        jmax: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// sup |u − u_h| on circles and its exponent: growth.csv.
    Growth {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        svg: bool,
    },
}

#[derive(Args)]
struct OnedArgs {
    #[command(flatten)]
    potential: PotentialArgs,
    #[arg(long = "E")]
    energy: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 10_000)]
    samples_per_period: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Base JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Top-level config key to vary, e.g. R, nr, ntheta, d or seed.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Convergence { .. } | Error::Continuation { .. }) => EXIT_CONVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn oned(args: &OnedArgs) -> anyhow::Result<()> {
    let spec = args.potential.spec()?.unwrap_or(PotentialSpec::SineGordon);
    let solution = quadrature_solution(&spec.build(), args.energy, args.kappa, args.samples_per_period)?;
    fs::create_dir_all(&args.out)?;
    let (s, v) = solution.samples();
    let mut csv = String::from("s,v\n");
    for (s, v) in s.iter().zip(v) {
        csv.push_str(&csv_row(&[*s, *v]));
    }
    fs::write(args.out.join("profile.csv"), csv)?;
    let report = json!({
        "mean_slope": solution.mean_slope(),
        "period": solution.period(),
        "deviation": solution.deviation(),
        "ode_residual": verify_ode(&solution),
        "first_integral_defect": first_integral_defect(&solution),
        "E": args.energy,
        "kappa": args.kappa,
        "potential": spec,
        "samples_per_period": args.samples_per_period,
    });
    write_json(&args.out.join("report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let base: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    // validate every point before solving any
    let mut configs = Vec::new();
    for raw in &args.values {
        let mut value = base.clone();
        let parsed: serde_json::Value = serde_json::from_str(raw).unwrap_or_else(|_| json!(raw));
        value
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?
            .insert(args.param.clone(), parsed);
        configs.push((raw.clone(), RunConfig::from_json(&value.to_string())?));
    }
    fs::create_dir_all(&args.out)?;
    let mut csv = String::from("value,converged,iterations,final_residual,energy,sup_u_minus_phi\n");
    let mut first_error = None;
    for (raw, config) in &configs {
        let dir = args.out.join(format!("{}={}", args.param, raw));
        match construct(config, &dir) {
            Ok(r) => csv.push_str(&format!(
                "{raw},{},{},{},{},{}\n",
                r.converged,
                r.iterations,
                fmt(r.final_residual),
                fmt(r.energy),
                fmt(r.sup_u_minus_phi)
            )),
            Err(e) => {
                eprintln!("{}: {e}", dir.display());
                csv.push_str(&format!("{raw},false,,,,\n"));
                first_error.get_or_insert(e);
            }
        }
    }
    fs::write(args.out.join("sweep.csv"), csv)?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Construct(args) => {
            let config = args.config()?;
            let report = construct(&config, &args.out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Analyze { which } => {
            let (dir, which, opts) = match which {
                AnalyzeCommand::Lemmas { run, radii, svg } => (
                    run,
                    Analysis::Lemmas,
                    AnalyzeOptions {
                        lemma_radii: radii,
                        j_max: None,
                        svg,
                    },
                ),
                AnalyzeCommand::Modes { run, jmax, svg } => (
                    run,
                    Analysis::Modes,
                    AnalyzeOptions {
                        lemma_radii: None,
                        j_max: jmax,
                        svg,
                    },
                ),
                AnalyzeCommand::Growth { run, svg } => (
                    run,
                    Analysis::Growth,
                    AnalyzeOptions {
                        lemma_radii: None,
                        j_max: None,
                        svg,
                    },
                ),
            };
            if !dir.join(CONFIG_FILE).exists() {
                return Err(Error::Validation(format!("{} is not a run directory", dir.display())).into());
            }
            let entry = analyze(&dir, which, &opts)?;
            println!("{}", serde_json::to_string_pretty(&entry)?);
        }
        Command::Oned(args) => oned(&args)?,
        Command::Sweep(args) => sweep(&args)?,
        Command::Verify { suite, out } => {
            let suite = match suite {
                SuiteArg::Fast => Suite::Fast,
                SuiteArg::Full => Suite::Full,
            };
            let verdict = run_suite(suite);
            for c in &verdict.criteria {
                eprintln!("{}", c.summary());
            }
            let text = serde_json::to_string_pretty(&verdict)? + "\n";
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            if verdict.failed > 0 {
                return Ok(EXIT_ACCEPTANCE);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
