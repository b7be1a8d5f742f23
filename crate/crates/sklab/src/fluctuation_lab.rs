//! Per-trial fluctuation statistics, second-order residuals, and empirical
//! aggregation against the limiting Gaussian laws.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SkError};
use crate::rmt_core::{semicircle_stieltjes, shared_classical_locations, GoeSample};
use crate::theory_engine::{FluctuationParams, GForm, LeadingOrder};

/// Fluctuation statistics of one trial at a fixed `l̂`.
///
/// * `U_N = n^{-1/2} Σ (n u_i² − 1)/(l̂ − λ_i)`, `U′_N` its `l`-derivative.
/// * `Λ_N = Σ 1/(l̂ − λ_i) − n s(l̂)`.
/// * `W_N`, `W′_N`: as `U_N`, `U′_N` with the classical locations `θ_{i/n}`.
/// * `X_N`, `X′_N`, `Y_N`: the same sums over the unnormalised Gaussians
///   `ũ_i = g_i/√n`, centred by the semicircle transform; `Y_N = n^{-1/2} Σ (g_i² − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub n: usize,
    pub seed: Option<u64>,
    pub l_hat: f64,
    pub u_n: f64,
    pub uprime_n: f64,
    pub lambda_n: f64,
    pub w_n: f64,
    pub wprime_n: f64,
    pub x_n: Option<f64>,
    pub xprime_n: Option<f64>,
    pub y_n: Option<f64>,
    pub residual: Option<f64>,
}

/// Computes the statistics of `sample` at `l_hat > λ_N + 1e-10`.
pub fn compute_statistics(sample: &GoeSample, l_hat: f64) -> Result<FluctuationSample> {
    let top = sample.lambda_max();
    if !(l_hat > top + 1e-10) || !l_hat.is_finite() {
        return Err(SkError::Pole { l: l_hat, edge: top });
    }
    let n = sample.n();
    let nf = n as f64;
    let rt = nf.sqrt();
    let theta = shared_classical_locations(n)?;
    let (mut u, mut up, mut lam, mut w, mut wp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let c = nf * sample.u[i] * sample.u[i] - 1.0;
        let r = 1.0 / (l_hat - sample.eigenvalues[i]);
        u += c * r;
        up -= c * r * r;
        lam += r;
        if l_hat > theta[i] {
            let t = 1.0 / (l_hat - theta[i]);
            w += c * t;
            wp -= c * t * t;
        } else {
            w = f64::NAN;
            wp = f64::NAN;
        }
    }
    let s0 = semicircle_stieltjes(l_hat, 0)?;
    let (x, xp, y) = match &sample.gaussians {
        Some(g) if l_hat > std::f64::consts::SQRT_2 => {
            let s1 = semicircle_stieltjes(l_hat, 1)?;
            let (mut x, mut xp, mut y) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let c = g[i] * g[i] - 1.0;
                let t = 1.0 / (l_hat - theta[i]);
                x += c * (t - s0);
                xp += c * (-t * t - s1);
                y += c;
            }
            (Some(x / rt), Some(xp / rt), Some(y / rt))
        }
        _ => (None, None, None),
    };
    Ok(FluctuationSample {
        n,
        seed: None,
        l_hat,
        u_n: u / rt,
        uprime_n: up / rt,
        lambda_n: lam - nf * s0,
        w_n: w / rt,
        wprime_n: wp / rt,
        x_n: x,
        xprime_n: xp,
        y_n: y,
        residual: None,
    })
}

fn quad_form(g: &[[f64; 2]; 2], a: f64, b: f64) -> f64 {
    g[0][0] * a * a + 2.0 * g[0][1] * a * b + g[1][1] * b * b
}

fn require_applicable(lo: &LeadingOrder) -> Result<()> {
    if !lo.fluctuation_applicable || lo.alpha_hat == 0.0 {
        return Err(SkError::Inapplicable(format!(
            "second-order expansion needs an interior maximiser with α̂ ≠ 0 (α̂ = {})",
            lo.alpha_hat
        )));
    }
    Ok(())
}

fn second_order(total: f64, lo: &LeadingOrder, fp: &FluctuationParams, a: f64, b: f64, extra: f64, lam: f64, n: usize, form: GForm) -> f64 {
    let nf = n as f64;
    let g = fp.g_for(form);
    total - nf * lo.value - nf.sqrt() * fp.kappa * a - (fp.kappa * lam - extra - 0.5 * quad_form(&g, a, b))
}

/// `L_N − n B(α̂) − √n κ U_N − (κ Λ_N − ½ (U_N, U′_N) G (U_N, U′_N)ᵀ)`.
///
/// For a `±α̂` pair both branches share `B(α̂)`, `κ`, `G` and the statistics
/// (which depend on `u` only through `u_i²`), so the minimum-modulus branch
/// is the common value.
pub fn residual_sphere(l_n: f64, lo: &LeadingOrder, fp: &FluctuationParams, fs: &FluctuationSample, form: GForm) -> Result<f64> {
    require_applicable(lo)?;
    Ok(second_order(l_n, lo, fp, fs.u_n, fs.uprime_n, 0.0, fs.lambda_n, fs.n, form))
}

/// Ball analogue of [`residual_sphere`], centred at `n (B̃(α̂, r̂) + g(r̂))`.
pub fn residual_ball(l_tilde_n: f64, lo: &LeadingOrder, fp: &FluctuationParams, fs: &FluctuationSample, form: GForm) -> Result<f64> {
    require_applicable(lo)?;
    if lo.r_hat.is_none() {
        return Err(SkError::Inapplicable("ball residual needs r̂".into()));
    }
    Ok(second_order(l_tilde_n, lo, fp, fs.u_n, fs.uprime_n, 0.0, fs.lambda_n, fs.n, form))
}

/// Residual in the independent-summand variables:
/// `L_N − n B − √n κ X_N − (κ Λ_N − κ X_N Y_N − ½ (X_N, X′_N) G (X_N, X′_N)ᵀ)`.
pub fn alt_residual_sphere(l_n: f64, lo: &LeadingOrder, fp: &FluctuationParams, fs: &FluctuationSample, form: GForm) -> Result<f64> {
    require_applicable(lo)?;
    let (Some(x), Some(xp), Some(y)) = (fs.x_n, fs.xprime_n, fs.y_n) else {
        return Err(SkError::InvalidInput(
            "X/Y statistics need the pre-normalisation Gaussians (sample in invariance mode)".into(),
        ));
    };
    Ok(second_order(l_n, lo, fp, x, xp, fp.kappa * x * y, fs.lambda_n, fs.n, form))
}

/// Moments and goodness of fit of one statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub reference_mean: Option<f64>,
    pub reference_variance: Option<f64>,
    /// Kolmogorov–Smirnov distance to the reference Gaussian.
    pub ks: Option<f64>,
}

/// Aggregate over the valid trials of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub count: usize,
    pub invalid: usize,
    pub stats: Vec<StatSummary>,
    /// Names indexing `covariance`.
    pub covariance_of: Vec<String>,
    pub covariance: Vec<Vec<f64>>,
}

impl EmpiricalSummary {
    pub fn stat(&self, name: &str) -> Option<&StatSummary> {
        self.stats.iter().find(|s| s.name == name)
    }
}

/// Unbiased mean and variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Unbiased covariance of two equally long series.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, _) = mean_var(xs);
    let (my, _) = mean_var(ys);
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and
/// `N(mean, var)`.
pub fn ks_distance(xs: &[f64], mean: f64, var: f64) -> Result<f64> {
    let normal = Normal::new(mean, var.sqrt()).map_err(|e| SkError::InvalidInput(format!("reference law: {e}")))?;
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = normal.cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Folds trials in index order. Trials with any non-finite core statistic
/// count as invalid and are excluded.
pub fn aggregate(trials: &[FluctuationSample], reference: &FluctuationParams) -> Result<EmpiricalSummary> {
    let valid: Vec<&FluctuationSample> = trials
        .iter()
        .filter(|t| [t.u_n, t.uprime_n, t.lambda_n, t.w_n, t.wprime_n].iter().all(|x| x.is_finite()))
        .collect();
    if valid.len() < 2 {
        return Err(SkError::InvalidInput(format!("aggregation needs at least 2 valid trials, got {}", valid.len())));
    }
    let mut series: Vec<(&str, Vec<f64>, Option<(f64, f64)>)> = vec![
        ("U_N", valid.iter().map(|t| t.u_n).collect(), Some((0.0, reference.var_u))),
        ("Uprime_N", valid.iter().map(|t| t.uprime_n).collect(), Some((0.0, reference.var_uprime))),
        ("Lambda_N", valid.iter().map(|t| t.lambda_n).collect(), Some((reference.lambda_mean, reference.lambda_var))),
        ("W_N", valid.iter().map(|t| t.w_n).collect(), Some((0.0, reference.sigma[0][0]))),
        ("Wprime_N", valid.iter().map(|t| t.wprime_n).collect(), Some((0.0, reference.sigma[1][1]))),
    ];
    let optional: [(&str, fn(&FluctuationSample) -> Option<f64>, Option<(f64, f64)>); 4] = [
        ("X_N", |t| t.x_n, Some((0.0, reference.var_u))),
        ("Xprime_N", |t| t.xprime_n, Some((0.0, reference.var_uprime))),
        ("Y_N", |t| t.y_n, Some((0.0, 2.0))),
        ("residual", |t| t.residual, None),
    ];
    for (name, get, law) in optional {
        let vals: Vec<f64> = valid.iter().filter_map(|t| get(t)).filter(|x| x.is_finite()).collect();
        if vals.len() == valid.len() {
            series.push((name, vals, law));
        }
    }
    let mut stats = Vec::with_capacity(series.len());
    for (name, vals, law) in &series {
        let (mean, variance) = mean_var(vals);
        let ks = match law {
            Some((m, v)) if *v > 0.0 && v.is_finite() => Some(ks_distance(vals, *m, *v)?),
            _ => None,
        };
        stats.push(StatSummary {
            name: name.to_string(),
            mean,
            variance,
            std_error: (variance / vals.len() as f64).sqrt(),
            reference_mean: law.map(|l| l.0),
            reference_variance: law.map(|l| l.1),
            ks,
        });
    }
    let covariance = series
        .iter()
        .map(|(_, a, _)| series.iter().map(|(_, b, _)| covariance(a, b)).collect())
        .collect();
    Ok(EmpiricalSummary {
        count: valid.len(),
        invalid: trials.len() - valid.len(),
        stats,
        covariance_of: series.iter().map(|s| s.0.to_string()).collect(),
        covariance,
    })
}
