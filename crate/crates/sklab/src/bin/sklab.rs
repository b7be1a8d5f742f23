use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use sklab::experiment_harness::{
    run_experiment, ExperimentConfig, Model, OutputFormat, OutputSpec, SCHEMA_VERSION,
};
use sklab::rmt_core::SpectralMode;
use sklab::theory_engine::{
    critical_betas, fluct_params_ball, fluct_params_sphere, maximize_ball_theory, maximize_sphere_theory,
    tap_threshold, GForm, LeadingOrder, Multiplicity, RadialSpec, SpikeSpec,
};
use sklab::verify::{run_suite, Scale, Suite};
use sklab::Result;

#[derive(Parser)]
#[command(name = "sklab", version, about = "Spiked GOE ground-state laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leading-order maximiser and fluctuation constants.
    Theory {
        /// Spike, e.g. `monomial:1:1.0` (degree, then strength).
        #[arg(long)]
        spike: SpikeSpec,
        #[arg(long)]
        beta: f64,
        /// Use the ball model with the TAP radial term at the same β.
        #[arg(long)]
        ball: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run a Monte Carlo campaign.
    Simulate {
        /// JSON configuration; overrides every other flag.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sphere")]
        model: ModelArg,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value = "monomial:1:1")]
        spike: SpikeSpec,
        /// Radial term for the ball; defaults to `tap:BETA`.
        #[arg(long)]
        radial: Option<RadialSpec>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Phase diagram grid as CSV on stdout.
    Phase {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        h_min: f64,
        #[arg(long)]
        h_max: f64,
        #[arg(long)]
        h_steps: usize,
        #[arg(long, default_value_t = 1.0)]
        beta_min: f64,
        #[arg(long, default_value_t = 1.0)]
        beta_max: f64,
        #[arg(long, default_value_t = 1)]
        beta_steps: usize,
    },
    /// Run an acceptance suite; exit status 0 iff every criterion passes.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Smaller samples with the same tolerances.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModelArg {
    Sphere,
    Ball,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Theory { spike, beta, ball, json } => theory(&spike, beta, ball, json),
        Command::Simulate { config, model, n, trials, seed, beta, spike, radial, out, format, parallelism } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::from_json_file(&p)?,
                None => {
                    let model = match model {
                        ModelArg::Sphere => Model::Sphere,
                        ModelArg::Ball => Model::Ball,
                    };
                    let radial = match (model, radial) {
                        (Model::Ball, None) => Some(RadialSpec::tap(beta)?),
                        (_, r) => r,
                    };
                    let format = match format {
                        FormatArg::Csv => OutputFormat::Csv,
                        FormatArg::Json => OutputFormat::Json,
                    };
                    ExperimentConfig {
                        schema_version: SCHEMA_VERSION,
                        model,
                        n,
                        trials,
                        master_seed: seed,
                        beta,
                        spike,
                        radial,
                        radius_domain: None,
                        outputs: out.map(|path| OutputSpec { path, format }),
                        parallelism,
                        spectral_mode: SpectralMode::Invariance,
                        g_form: GForm::Full,
                    }
                }
            };
            let out = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "theory": out.theory, "summary": out.summary }))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Phase { k, h_min, h_max, h_steps, beta_min, beta_max, beta_steps } => {
            phase(k, (h_min, h_max, h_steps), (beta_min, beta_max, beta_steps))
        }
        Command::Verify { suite, quick } => {
            let scale = if quick { Scale::Quick } else { Scale::Full };
            let outcomes = run_suite(suite, scale)?;
            for o in &outcomes {
                println!("{o}");
            }
            Ok(if outcomes.iter().all(|o| o.pass) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn theory(spike: &SpikeSpec, beta: f64, ball: bool, as_json: bool) -> Result<ExitCode> {
    let (lo, params) = if ball {
        let g = RadialSpec::tap(beta)?;
        let lo = maximize_ball_theory(spike, &g, beta)?;
        let p = fluct_params_ball(spike, &g, beta, &lo);
        (lo, p)
    } else {
        let lo = maximize_sphere_theory(spike, beta)?;
        let p = fluct_params_sphere(spike, beta, &lo);
        (lo, p)
    };
    let params = if lo.fluctuation_applicable { params.map_err(|e| e.to_string()) } else {
        Err("maximiser is not interior".to_string())
    };
    if as_json {
        let p = match &params {
            Ok(p) => json!(p),
            Err(reason) => json!({ "unavailable": reason }),
        };
        println!("{}", serde_json::to_string_pretty(&json!({ "leading": lo, "fluctuation": p }))?);
    } else {
        println!("alpha_hat  {}", lo.alpha_hat);
        if let Some(r) = lo.r_hat {
            println!("r_hat      {r}");
        }
        println!("l_hat      {}", lo.l_hat);
        println!("z_hat      {}", lo.z_hat);
        println!("value      {}", lo.value);
        println!("maximiser  {}", maximiser_kind(&lo));
        match &params {
            Ok(p) => {
                println!("kappa      {}", p.kappa);
                println!("G          {:?}", p.g);
                println!("G_full     {:?}", p.g_full());
                println!("Var U      {}", p.var_u);
                println!("Var U'     {}", p.var_uprime);
                println!("Cov U,U'   {}", p.cov_u_uprime);
                println!("Lambda     mean {} var {}", p.lambda_mean, p.lambda_var);
            }
            Err(reason) => println!("fluctuation constants unavailable: {reason}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn maximiser_kind(lo: &LeadingOrder) -> &'static str {
    match (lo.alpha_hat == 0.0, lo.multiplicity) {
        (true, _) => "zero",
        (false, Multiplicity::Pair) => "interior_pair",
        (false, Multiplicity::Single) => "interior",
    }
}

fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

fn phase(k: u32, h: (f64, f64, usize), b: (f64, f64, usize)) -> Result<ExitCode> {
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["k", "h", "beta", "beta_c", "beta_tilde_c", "h_c", "sphere_maximizer", "ball_maximizer"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for &beta in &grid(b.0, b.1, b.2) {
        let hc = if k >= 3 { tap_threshold(k, beta).ok() } else { None };
        for &hv in &grid(h.0, h.1, h.2) {
            let f = SpikeSpec::monomial(hv, k)?;
            let (bc, bt) = critical_betas(k, hv)?;
            let sphere = maximize_sphere_theory(&f, beta).map(|lo| maximiser_kind(&lo)).unwrap_or("n/a");
            let ball = RadialSpec::tap(beta)
                .and_then(|g| maximize_ball_theory(&f, &g, beta))
                .map(|lo| maximiser_kind(&lo))
                .unwrap_or("n/a");
            w.write_record([
                k.to_string(),
                hv.to_string(),
                beta.to_string(),
                opt(bc.is_finite().then_some(bc)),
                opt(bt),
                opt(hc),
                sphere.to_string(),
                ball.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}
