//! Seeded Monte Carlo campaigns: configuration, trial execution, and CSV/JSON
//! persistence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkError};
use crate::fluctuation_lab::{
    aggregate, compute_statistics, mean_var, residual_ball, residual_sphere, EmpiricalSummary, FluctuationSample,
    StatSummary,
};
use crate::reduction_solver::{solve_ball, solve_sphere};
use crate::rmt_core::{sample_spectral_model, SpectralMode};
use crate::theory_engine::{
    fluct_params_ball, fluct_params_sphere, maximize_ball_theory, maximize_sphere_theory, FluctuationParams, GForm,
    LeadingOrder, RadialSpec, SpikeSpec,
};

/// Current configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

/// CSV column order.
pub const CSV_COLUMNS: [&str; 17] = [
    "trial_index",
    "derived_seed",
    "n",
    "value",
    "alpha_star",
    "r_star",
    "l_star",
    "U_N",
    "Uprime_N",
    "Lambda_N",
    "W_N",
    "Wprime_N",
    "X_N",
    "Y_N",
    "residual",
    "valid",
    "wall_time_ms",
];

/// Seed of trial `index`: the SplitMix64 finaliser applied to
/// `master + index · 0x9E3779B97F4A7C15 (mod 2⁶⁴)`.
///
/// Both steps are bijections of `u64`, so the map is injective in `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Sphere,
    Ball,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_parallelism() -> usize {
    1
}

fn default_mode() -> SpectralMode {
    SpectralMode::Invariance
}

/// A campaign description, stored as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: Model,
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub beta: f64,
    pub spike: SpikeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialSpec>,
    /// Radius set for the ball; defaults to the admissible interval of `radial`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_domain: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputSpec>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_mode")]
    pub spectral_mode: SpectralMode,
    #[serde(default)]
    pub g_form: GForm,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SkError::InvalidInput(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n < 2 {
            return Err(SkError::InvalidDimension(self.n));
        }
        if self.trials < 1 {
            return Err(SkError::InvalidInput("trials must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SkError::Domain { what: "beta", value: self.beta });
        }
        if self.model == Model::Ball && self.radial.is_none() {
            return Err(SkError::InvalidInput("ball model needs a radial term".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn domain(&self) -> Option<Vec<(f64, f64)>> {
        self.radius_domain
            .clone()
            .or_else(|| self.radial.as_ref().map(|g| vec![g.domain()]))
    }

    fn threads(&self) -> usize {
        std::env::var("SKLAB_THREADS")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(self.parallelism)
            .max(1)
    }
}

/// One row of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub derived_seed: u64,
    pub n: usize,
    /// `L_N` or `L̃_N`.
    pub value: Option<f64>,
    pub alpha_star: Option<f64>,
    pub r_star: Option<f64>,
    pub l_star: Option<f64>,
    #[serde(rename = "U_N")]
    pub u_n: Option<f64>,
    #[serde(rename = "Uprime_N")]
    pub uprime_n: Option<f64>,
    #[serde(rename = "Lambda_N")]
    pub lambda_n: Option<f64>,
    #[serde(rename = "W_N")]
    pub w_n: Option<f64>,
    #[serde(rename = "Wprime_N")]
    pub wprime_n: Option<f64>,
    #[serde(rename = "X_N")]
    pub x_n: Option<f64>,
    #[serde(rename = "Y_N")]
    pub y_n: Option<f64>,
    pub residual: Option<f64>,
    pub valid: bool,
    pub wall_time_ms: f64,
}

impl TrialRecord {
    fn empty(index: u64, seed: u64, n: usize) -> Self {
        Self {
            trial_index: index,
            derived_seed: seed,
            n,
            value: None,
            alpha_star: None,
            r_star: None,
            l_star: None,
            u_n: None,
            uprime_n: None,
            lambda_n: None,
            w_n: None,
            wprime_n: None,
            x_n: None,
            y_n: None,
            residual: None,
            valid: false,
            wall_time_ms: 0.0,
        }
    }

    /// Same record with the timing column cleared, for determinism checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_ms: 0.0, ..self.clone() }
    }
}

/// Limit theory used for the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySidecar {
    pub model: Model,
    pub beta: f64,
    pub spike: String,
    pub radial: Option<String>,
    pub leading: LeadingOrder,
    pub params: Option<FluctuationParams>,
    pub g_form: GForm,
    /// Why `residual` is empty, when it is.
    pub residual_unavailable: Option<String>,
}

/// Summary over the valid rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub trials: usize,
    pub valid: usize,
    pub invalid: usize,
    /// `(value − n · B)/√n`, with reference variance `κ² Var(U)`.
    pub first_order: Option<StatSummary>,
    pub fluctuations: Option<EmpiricalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: CampaignSummary,
    pub theory: TheorySidecar,
}

/// Resolves the limit theory for a configuration.
pub fn theory_for(cfg: &ExperimentConfig) -> Result<TheorySidecar> {
    let (leading, params) = match cfg.model {
        Model::Sphere => {
            let lo = maximize_sphere_theory(&cfg.spike, cfg.beta)?;
            let fp = fluct_params_sphere(&cfg.spike, cfg.beta, &lo);
            (lo, fp)
        }
        Model::Ball => {
            let g = cfg.radial.as_ref().expect("validated");
            let lo = maximize_ball_theory(&cfg.spike, g, cfg.beta)?;
            let fp = fluct_params_ball(&cfg.spike, g, cfg.beta, &lo);
            (lo, fp)
        }
    };
    let (params, reason) = match params {
        Ok(p) if leading.fluctuation_applicable => (Some(p), None),
        Ok(_) => (None, Some("maximiser is not interior; second-order theory does not apply".to_string())),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(TheorySidecar {
        model: cfg.model,
        beta: cfg.beta,
        spike: cfg.spike.to_string(),
        radial: cfg.radial.as_ref().map(|g| g.to_string()),
        leading,
        params,
        g_form: cfg.g_form,
        residual_unavailable: reason,
    })
}

fn run_trial(cfg: &ExperimentConfig, theory: &TheorySidecar, index: u64) -> (TrialRecord, Option<FluctuationSample>) {
    let seed = derive_seed(cfg.master_seed, index);
    let mut rec = TrialRecord::empty(index, seed, cfg.n);
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<Option<FluctuationSample>> {
        let sample = sample_spectral_model(cfg.n, seed, cfg.spectral_mode)?;
        let value = match cfg.model {
            Model::Sphere => {
                let sol = solve_sphere(&sample, cfg.beta, &cfg.spike)?;
                rec.alpha_star = Some(sol.alpha_star);
                rec.l_star = sol.l_star.finite();
                sol.l_n
            }
            Model::Ball => {
                let g = cfg.radial.as_ref().expect("validated");
                let dom = cfg.domain().expect("validated");
                let sol = solve_ball(&sample, cfg.beta, &cfg.spike, g, &dom)?;
                rec.alpha_star = Some(sol.alpha_star);
                rec.r_star = Some(sol.r_star);
                rec.l_star = sol.l_star.finite();
                sol.l_tilde_n
            }
        };
        rec.value = Some(value);
        let lo = &theory.leading;
        if !(lo.l_hat.is_finite() && lo.l_hat > std::f64::consts::SQRT_2) {
            return Ok(None);
        }
        let mut fs = compute_statistics(&sample, lo.l_hat)?;
        fs.seed = Some(seed);
        rec.u_n = Some(fs.u_n);
        rec.uprime_n = Some(fs.uprime_n);
        rec.lambda_n = Some(fs.lambda_n);
        rec.w_n = Some(fs.w_n);
        rec.wprime_n = Some(fs.wprime_n);
        rec.x_n = fs.x_n;
        rec.y_n = fs.y_n;
        if let Some(fp) = &theory.params {
            let r = match cfg.model {
                Model::Sphere => residual_sphere(value, lo, fp, &fs, cfg.g_form)?,
                Model::Ball => residual_ball(value, lo, fp, &fs, cfg.g_form)?,
            };
            rec.residual = Some(r);
            fs.residual = Some(r);
        }
        Ok(Some(fs))
    }));
    rec.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok(Ok(fs)) => {
            rec.valid = true;
            (rec, fs)
        }
        Ok(Err(_)) | Err(_) => (rec, None),
    }
}

/// Trials slower than `max(10 × median of the first five, 1 s)` are marked
/// invalid. The floor keeps sub-millisecond campaigns deterministic.
fn timeout_ms(first: &[TrialRecord]) -> f64 {
    let mut t: Vec<f64> = first.iter().map(|r| r.wall_time_ms).collect();
    t.sort_by(f64::total_cmp);
    let median = t.get(t.len() / 2).copied().unwrap_or(0.0);
    (10.0 * median).max(1000.0)
}

/// Runs every trial, aggregates, and writes outputs when configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let theory = theory_for(cfg)?;
    let head = cfg.trials.min(5);
    let mut results: Vec<(TrialRecord, Option<FluctuationSample>)> =
        (0..head as u64).map(|i| run_trial(cfg, &theory, i)).collect();
    let limit = timeout_ms(&results.iter().map(|r| r.0.clone()).collect::<Vec<_>>());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads())
        .build()
        .map_err(|e| SkError::Numerical(format!("thread pool: {e}")))?;
    let rest: Vec<(TrialRecord, Option<FluctuationSample>)> = pool.install(|| {
        (head as u64..cfg.trials as u64)
            .into_par_iter()
            .map(|i| run_trial(cfg, &theory, i))
            .collect()
    });
    results.extend(rest);
    for (rec, fs) in results.iter_mut() {
        if rec.wall_time_ms > limit {
            rec.valid = false;
            *fs = None;
        }
    }
    let records: Vec<TrialRecord> = results.iter().map(|r| r.0.clone()).collect();
    let samples: Vec<FluctuationSample> = results.into_iter().filter_map(|r| r.1).collect();
    let summary = summarize(&records, &samples, &theory);
    let out = ExperimentOutput { records, summary, theory };
    if let Some(spec) = &cfg.outputs {
        emit(&out, spec)?;
    }
    Ok(out)
}

fn summarize(records: &[TrialRecord], samples: &[FluctuationSample], theory: &TheorySidecar) -> CampaignSummary {
    let valid = records.iter().filter(|r| r.valid).count();
    let first_order = {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.valid)
            .filter_map(|r| r.value.map(|v| (v - r.n as f64 * theory.leading.value) / (r.n as f64).sqrt()))
            .collect();
        (vals.len() >= 2).then(|| {
            let (mean, variance) = mean_var(&vals);
            let reference_variance = theory.params.as_ref().map(|p| p.kappa * p.kappa * p.var_u);
            StatSummary {
                name: "first_order".into(),
                mean,
                variance,
                std_error: (variance / vals.len() as f64).sqrt(),
                reference_mean: reference_variance.map(|_| 0.0),
                reference_variance,
                ks: None,
            }
        })
    };
    let fluctuations = theory.params.as_ref().and_then(|p| aggregate(samples, p).ok());
    CampaignSummary { trials: records.len(), valid, invalid: records.len() - valid, first_order, fluctuations }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes records as CSV to `w`, floats with 17 significant digits and empty
/// fields for missing values.
pub fn write_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_COLUMNS)?;
    for r in records {
        wr.write_record([
            r.trial_index.to_string(),
            r.derived_seed.to_string(),
            r.n.to_string(),
            fmt_opt(r.value),
            fmt_opt(r.alpha_star),
            fmt_opt(r.r_star),
            fmt_opt(r.l_star),
            fmt_opt(r.u_n),
            fmt_opt(r.uprime_n),
            fmt_opt(r.lambda_n),
            fmt_opt(r.w_n),
            fmt_opt(r.wprime_n),
            fmt_opt(r.x_n),
            fmt_opt(r.y_n),
            fmt_opt(r.residual),
            r.valid.to_string(),
            fmt_f64(r.wall_time_ms),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Parses a CSV produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(SkError::InvalidInput(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(SkError::from)).collect()
}

/// Path of the JSON sidecar next to a CSV output.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("theory.json")
}

#[derive(Serialize)]
struct Sidecar<'a> {
    theory: &'a TheorySidecar,
    summary: &'a CampaignSummary,
}

/// Writes the campaign. CSV output also writes a JSON sidecar with theory and
/// summary; JSON output holds everything in one document. Files are first
/// written as `<name>.partial` and renamed on success, so a failed write
/// leaves the marker behind.
pub fn emit(out: &ExperimentOutput, spec: &OutputSpec) -> Result<()> {
    if out.records.is_empty() {
        return Err(SkError::InvalidInput("no records to emit".into()));
    }
    let write_atomic = |path: &Path, body: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
        let mut partial = path.as_os_str().to_owned();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        let mut w = BufWriter::new(File::create(&partial)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&partial, path)?;
        Ok(())
    };
    match spec.format {
        OutputFormat::Csv => {
            write_atomic(&spec.path, &|w| write_csv(&out.records, w))?;
            write_atomic(&sidecar_path(&spec.path), &|w| {
                serde_json::to_writer_pretty(w, &Sidecar { theory: &out.theory, summary: &out.summary })?;
                Ok(())
            })
        }
        OutputFormat::Json => write_atomic(&spec.path, &|w| {
            serde_json::to_writer_pretty(w, out)?;
            Ok(())
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cfg(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            model: Model::Sphere,
            n: 60,
            trials,
            master_seed: 42,
            beta: 1.0,
            spike: SpikeSpec::monomial(1.0, 1).unwrap(),
            radial: None,
            radius_domain: None,
            outputs: None,
            parallelism: 1,
            spectral_mode: SpectralMode::Invariance,
            g_form: GForm::Full,
        }
    }

    #[test]
    fn seeds_are_injective() {
        let mut seen = HashSet::with_capacity(1_000_000);
        for i in 0..1_000_000u64 {
            assert!(seen.insert(derive_seed(42, i)));
        }
        assert_eq!(derive_seed(7, 9), derive_seed(7, 9));
        let a: HashSet<u64> = (0..10_000).map(|i| derive_seed(1, i)).collect();
        assert!((0..10_000).all(|i| !a.contains(&derive_seed(2, i))));
    }

    #[test]
    fn two_trials_two_rows() {
        let out = run_experiment(&cfg(2)).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    }

    #[test]
    fn rerun_is_identical() {
        let a = run_experiment(&cfg(6)).unwrap();
        let b = run_experiment(&cfg(6)).unwrap();
        let strip = |o: &ExperimentOutput| o.records.iter().map(TrialRecord::without_timing).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let mut four = cfg(6);
        four.parallelism = 4;
        let c = run_experiment(&four).unwrap();
        assert_eq!(strip(&a), strip(&c));
    }

    #[test]
    fn empty_radius_is_empty_field() {
        let out = run_experiment(&cfg(1)).unwrap();
        let mut buf = Vec::new();
        write_csv(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5], "");
    }

    #[test]
    fn failing_trial_is_isolated() {
        // α̂ sits on the edge for tiny n often enough that some trial hits the
        // pole; force it instead with a spectrum-independent l̂ below the bulk
        let c = cfg(3);
        let mut theory = theory_for(&c).unwrap();
        theory.leading.l_hat = 1.5;
        let mut broken = theory.clone();
        broken.leading.l_hat = 1.5;
        let (ok, _) = run_trial(&c, &theory, 0);
        assert!(ok.valid);
        let mut tiny = c.clone();
        tiny.n = 2;
        let (bad, fs) = run_trial(&tiny, &broken, 0);
        let sample = sample_spectral_model(2, bad.derived_seed, SpectralMode::Invariance).unwrap();
        if sample.lambda_max() + 1e-10 >= 1.5 {
            assert!(!bad.valid && fs.is_none());
        }
    }

    #[test]
    fn config_round_trip() {
        let mut c = cfg(3);
        c.model = Model::Ball;
        c.radial = Some(RadialSpec::tap(1.0).unwrap());
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert!(back.validate().is_ok());
        let mut bad = back.clone();
        bad.n = 1;
        assert!(bad.validate().is_err());
        bad = back.clone();
        bad.radial = None;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn sidecar_matches_fresh_theory() {
        let out = run_experiment(&cfg(2)).unwrap();
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let lo = maximize_sphere_theory(&f, 1.0).unwrap();
        let fp = fluct_params_sphere(&f, 1.0, &lo).unwrap();
        assert!((out.theory.leading.alpha_hat - lo.alpha_hat).abs() <= 1e-12);
        assert!((out.theory.leading.value - lo.value).abs() <= 1e-12);
        let p = out.theory.params.unwrap();
        assert!((p.kappa - fp.kappa).abs() <= 1e-12);
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.g[i][j] - fp.g[i][j]).abs() <= 1e-12);
            }
        }
    }

    fn opt_f64() -> impl Strategy<Value = Option<f64>> {
        prop_oneof![Just(None), (-1e12f64..1e12).prop_map(Some), (-1.0f64..1.0).prop_map(Some)]
    }

    prop_compose! {
        fn record()(idx in 0u64..1000, seed in any::<u64>(), n in 2usize..5000,
                    vals in proptest::collection::vec(opt_f64(), 12), valid in any::<bool>(),
                    t in 0.0f64..1e6) -> TrialRecord {
            TrialRecord {
                trial_index: idx, derived_seed: seed, n,
                value: vals[0], alpha_star: vals[1], r_star: vals[2], l_star: vals[3],
                u_n: vals[4], uprime_n: vals[5], lambda_n: vals[6], w_n: vals[7],
                wprime_n: vals[8], x_n: vals[9], y_n: vals[10], residual: vals[11],
                valid, wall_time_ms: t,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn csv_round_trip(recs in proptest::collection::vec(record(), 1..5)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("r.csv");
            write_csv(&recs, File::create(&path).unwrap()).unwrap();
            let back = read_csv(&path).unwrap();
            prop_assert_eq!(back, recs);
        }
    }
}
