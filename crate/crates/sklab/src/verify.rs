//! Acceptance suites shared by the `verify` subcommand and the `acceptance`
//! integration test.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment_harness::derive_seed;
use crate::fluctuation_lab::{compute_statistics, covariance, mean_var, residual_ball, residual_sphere, FluctuationSample};
use crate::reduction_solver::{oracle_direct, solve_ball, solve_sphere, OracleTarget};
use crate::rmt_core::{linear_stat_clt, sample_goe, sample_spectral_model, SpectralMode};
use crate::theory_engine::{
    ball_k_matrix, ball_minimax_input, corollary_constants, critical_betas, evaluate_b, fluct_params_ball,
    fluct_params_sphere, generic_minimax_params, l_hat, maximize_ball_theory, maximize_sphere_theory,
    monomial_interior_root, sphere_minimax_input, tap_threshold, DerivativeSupply, FluctuationParams, GForm,
    RadialSpec, SpikeSpec,
};
use crate::Result;

/// Sample sizes: `Full` uses the acceptance sizes, `Quick` a smoke subset with
/// the same tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    fn pick<T>(self, full: T, quick: T) -> T {
        match self {
            Scale::Full => full,
            Scale::Quick => quick,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Oracle,
    Lln,
    Clt,
    Residual,
    Crossref,
}

impl Suite {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            Suite::Oracle => &[1],
            Suite::Lln => &[2],
            Suite::Clt => &[3, 4, 5, 10],
            Suite::Residual => &[6, 7],
            Suite::Crossref => &[8, 9],
        }
    }
}

/// Result of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} criterion {:>2} ({}): {}", self.id, self.name, self.detail)
    }
}

fn outcome(id: u8, name: &str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name: name.into(), pass, detail }
}

/// Runs criterion `id` (1 to 10).
pub fn run_criterion(id: u8, scale: Scale) -> Result<Outcome> {
    match id {
        1 => oracle_equivalence(scale),
        2 => leading_order(scale),
        3 => first_order_clt(scale),
        4 => lambda_law(scale),
        5 => w_covariance(scale),
        6 => sphere_residual(scale),
        7 => ball_pipeline(scale),
        8 => closed_form_crossref(),
        9 => phase_boundaries(),
        10 => clt_quadrature(scale),
        _ => Err(crate::SkError::InvalidInput(format!("no criterion {id}"))),
    }
}

/// Runs every criterion of a suite.
pub fn run_suite(suite: Suite, scale: Scale) -> Result<Vec<Outcome>> {
    suite.criteria().iter().map(|&id| run_criterion(id, scale)).collect()
}

fn seeds(master: u64, m: usize) -> impl IndexedParallelIterator<Item = u64> {
    (0..m).into_par_iter().map(move |t| derive_seed(master, t as u64))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn rel_err(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs()
}

fn linear() -> SpikeSpec {
    SpikeSpec::monomial(1.0, 1).expect("valid spike")
}

fn oracle_equivalence(scale: Scale) -> Result<Outcome> {
    let n = 6;
    let m = scale.pick(100, 20);
    let f = SpikeSpec::monomial(0.7, 1)?;
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let gaps: Vec<f64> = seeds(0xC1, m)
        .map(|seed| -> Result<f64> {
            let j = sample_goe(n, seed)?;
            let s = sample_spectral_model(n, seed, SpectralMode::Rotate)?;
            let sol = solve_sphere(&s, 1.0, &f)?;
            let direct = oracle_direct(OracleTarget::Matrix { matrix: &j, spike: &e1 }, 1.0, &f, None, 32, seed)?;
            Ok((sol.l_n - direct).abs() / n as f64)
        })
        .collect::<Result<_>>()?;
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok(outcome(1, "oracle equivalence", worst <= 1e-6, format!("{m} instances, max |solve − oracle|/n = {worst:.2e} (≤ 1e-6)")))
}

fn leading_order(scale: Scale) -> Result<Outcome> {
    let n = scale.pick(2000, 500);
    let m = scale.pick(100, 20);
    let f = linear();
    let ratios: Vec<f64> = seeds(0xC2, m)
        .map(|seed| -> Result<f64> {
            let s = sample_spectral_model(n, seed, SpectralMode::Invariance)?;
            Ok(solve_sphere(&s, 2.0, &f)?.l_n / n as f64)
        })
        .collect::<Result<_>>()?;
    let hits = ratios.iter().filter(|r| (*r - 3.0).abs() <= 0.05).count();
    let med = median(ratios);
    let need = (95 * m).div_ceil(100);
    let pass = hits >= need && (med - 3.0).abs() <= 0.01;
    Ok(outcome(
        2,
        "leading order",
        pass,
        format!("n = {n}: {hits}/{m} within 0.05 of 3 (need {need}), median L_N/N = {med:.5} (±0.01)"),
    ))
}

fn first_order_clt(scale: Scale) -> Result<Outcome> {
    let n = scale.pick(1000, 300);
    let m = scale.pick(400, 100);
    let f = linear();
    let centre = 3f64.sqrt();
    let xs: Vec<f64> = seeds(0xC3, m)
        .map(|seed| -> Result<f64> {
            let s = sample_spectral_model(n, seed, SpectralMode::Invariance)?;
            let l = solve_sphere(&s, 1.0, &f)?.l_n;
            Ok((l - n as f64 * centre) / (n as f64).sqrt())
        })
        .collect::<Result<_>>()?;
    let (mean, var) = mean_var(&xs);
    let se = (var / m as f64).sqrt();
    let target = 1.0 / 3.0;
    let pass = rel_err(var, target) <= 0.2 && mean.abs() <= 3.0 * se;
    Ok(outcome(
        3,
        "first-order CLT",
        pass,
        format!(
            "n = {n}, M = {m}: variance {var:.4} vs 1/3 ({:.1}% off, ≤ 20%), mean {mean:+.4} (3·se = {:.4})",
            100.0 * rel_err(var, target),
            3.0 * se
        ),
    ))
}

fn stats_at(master: u64, n: usize, m: usize, l: f64) -> Result<(Vec<FluctuationSample>, usize)> {
    let all: Vec<Option<FluctuationSample>> = seeds(master, m)
        .map(|seed| -> Result<Option<FluctuationSample>> {
            let s = sample_spectral_model(n, seed, SpectralMode::Invariance)?;
            Ok(compute_statistics(&s, l).ok())
        })
        .collect::<Result<_>>()?;
    let invalid = all.iter().filter(|x| x.is_none()).count();
    Ok((all.into_iter().flatten().collect(), invalid))
}

fn lambda_law(scale: Scale) -> Result<Outcome> {
    let n = scale.pick(1000, 300);
    let m = scale.pick(400, 100);
    let (st, invalid) = stats_at(0xC4, n, m, 2.0)?;
    let xs: Vec<f64> = st.iter().map(|s| s.lambda_n).collect();
    let (mean, var) = mean_var(&xs);
    let se = (var / xs.len() as f64).sqrt();
    let target_mean = (2.0 - 2f64.sqrt()) / 4.0;
    let pass = invalid == 0 && (mean - target_mean).abs() <= 3.0 * se && rel_err(var, 0.25) <= 0.25;
    Ok(outcome(
        4,
        "Λ_N law",
        pass,
        format!(
            "n = {n}, M = {m}: mean {mean:.4} vs {target_mean:.4} (3·se = {:.4}), variance {var:.4} vs 0.25 ({:.1}% off, ≤ 25%)",
            3.0 * se,
            100.0 * rel_err(var, 0.25)
        ),
    ))
}

fn linear_sphere_params() -> Result<FluctuationParams> {
    let f = linear();
    let lo = maximize_sphere_theory(&f, 1.0)?;
    fluct_params_sphere(&f, 1.0, &lo)
}

fn w_covariance(scale: Scale) -> Result<Outcome> {
    let n = scale.pick(1000, 300);
    let m = scale.pick(400, 100);
    let alpha = (1.0f64 / 3.0).sqrt();
    let sigma = linear_sphere_params()?.sigma;
    let (st, invalid) = stats_at(0xC5, n, m, l_hat(alpha))?;
    let w: Vec<f64> = st.iter().map(|s| s.w_n).collect();
    let wp: Vec<f64> = st.iter().map(|s| s.wprime_n).collect();
    let emp = [[covariance(&w, &w), covariance(&w, &wp)], [covariance(&wp, &w), covariance(&wp, &wp)]];
    let errs = [rel_err(emp[0][0], sigma[0][0]), rel_err(emp[0][1], sigma[0][1]), rel_err(emp[1][1], sigma[1][1])];
    let pass = invalid == 0 && errs.iter().all(|e| *e <= 0.25);
    Ok(outcome(
        5,
        "W covariance",
        pass,
        format!(
            "n = {n}, M = {m}: Σ̂ = [[{:.3}, {:.2}], [·, {:.1}]] vs Σ = [[{:.3}, {:.2}], [·, {:.1}]]; off by {:.0}%, {:.0}%, {:.0}% (≤ 25%)",
            emp[0][0],
            emp[0][1],
            emp[1][1],
            sigma[0][0],
            sigma[0][1],
            sigma[1][1],
            100.0 * errs[0],
            100.0 * errs[1],
            100.0 * errs[2]
        ),
    ))
}

const RESIDUAL_NS: [usize; 3] = [250, 500, 1000];

/// Median `|residual|` per `n`, with the count of trials where `l̂ ≤ λ_N`.
fn residual_medians<F>(master: u64, m: usize, l: f64, residual: F) -> Result<Vec<(usize, f64, usize)>>
where
    F: Fn(&crate::rmt_core::GoeSample, &FluctuationSample) -> Result<f64> + Sync,
{
    RESIDUAL_NS
        .iter()
        .map(|&n| {
            let rs: Vec<Option<f64>> = seeds(master + n as u64, m)
                .map(|seed| -> Result<Option<f64>> {
                    let s = sample_spectral_model(n, seed, SpectralMode::Invariance)?;
                    match compute_statistics(&s, l) {
                        Ok(fs) => Ok(Some(residual(&s, &fs)?.abs())),
                        Err(_) => Ok(None),
                    }
                })
                .collect::<Result<_>>()?;
            let invalid = rs.iter().filter(|r| r.is_none()).count();
            Ok((n, median(rs.into_iter().flatten().collect()), invalid))
        })
        .collect()
}

fn strictly_decreasing(meds: &[(usize, f64, usize)]) -> bool {
    meds.windows(2).all(|w| w[1].1 < w[0].1)
}

fn describe(meds: &[(usize, f64, usize)]) -> String {
    meds.iter()
        .map(|(n, m, bad)| format!("n={n}: {m:.4} ({bad} pole)"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sphere_residual(scale: Scale) -> Result<Outcome> {
    let m = scale.pick(100, 30);
    let f = linear();
    let lo = maximize_sphere_theory(&f, 1.0)?;
    let fp = fluct_params_sphere(&f, 1.0, &lo)?;
    let meds = residual_medians(0xC6, m, lo.l_hat, |s, fs| {
        residual_sphere(solve_sphere(s, 1.0, &f)?.l_n, &lo, &fp, fs, GForm::Full)
    })?;
    Ok(outcome(
        6,
        "sphere residual",
        strictly_decreasing(&meds),
        format!("median |residual| over {m} trials: {}", describe(&meds)),
    ))
}

fn ball_pipeline(scale: Scale) -> Result<Outcome> {
    let m = scale.pick(100, 30);
    let f = linear();
    let g = RadialSpec::tap(1.0)?;
    let lo = maximize_ball_theory(&f, &g, 1.0)?;
    let r = lo.r_hat.unwrap_or(f64::NAN);
    let root_err = (r * r - 0.5).abs();
    let fp = fluct_params_ball(&f, &g, 1.0, &lo)?;
    let domain = [g.domain()];
    let meds = residual_medians(0xC7, m, lo.l_hat, |s, fs| {
        residual_ball(solve_ball(s, 1.0, &f, &g, &domain)?.l_tilde_n, &lo, &fp, fs, GForm::Full)
    })?;
    Ok(outcome(
        7,
        "ball pipeline",
        root_err <= 1e-10 && strictly_decreasing(&meds),
        format!("|r̂² − 0.5| = {root_err:.1e}; median |residual| over {m} trials: {}", describe(&meds)),
    ))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

fn params_close(a: &FluctuationParams, b: &FluctuationParams) -> bool {
    let scalars = [
        (a.kappa, b.kappa),
        (a.var_u, b.var_u),
        (a.var_uprime, b.var_uprime),
        (a.cov_u_uprime, b.cov_u_uprime),
        (a.lambda_mean, b.lambda_mean),
        (a.lambda_var, b.lambda_var),
    ];
    scalars.iter().all(|&(x, y)| close(x, y)) && mat_close(&a.g, &b.g)
}

/// Entrywise to `1e-10` relative to the largest entry of either matrix.
fn mat_close(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> bool {
    let scale = a.iter().chain(b).flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).abs() <= 1e-10 * scale))
}

/// Deterministic points in `[lo, hi]` from a Weyl sequence.
fn weyl(i: usize, shift: f64, lo: f64, hi: f64) -> f64 {
    let x = (shift + i as f64 * 0.618_033_988_749_894_9).fract();
    lo + (hi - lo) * x
}

fn closed_form_crossref() -> Result<Outcome> {
    let mut failures = Vec::new();
    for k in [1u32, 2] {
        for i in 0..50 {
            let h = weyl(i, 0.1 * k as f64, 0.3, 3.0);
            // the explicit k = 2 constants need β < h/√2
            let beta_hi = if k == 1 { 3.0 } else { 0.98 * h / 2f64.sqrt() };
            let beta = weyl(i, 0.37 + 0.2 * k as f64, 0.05 * beta_hi.min(1.0), beta_hi);
            let f = SpikeSpec::monomial(h, k)?;
            let lo = maximize_sphere_theory(&f, beta)?;
            let fp = fluct_params_sphere(&f, beta, &lo)?;
            let cc = corollary_constants(k, h, beta)?;
            if !params_close(&fp, &cc) {
                failures.push(format!("corollary k={k} h={h:.3} β={beta:.3}"));
            }
            let gm = generic_minimax_params(&sphere_minimax_input(&f, beta, &lo, DerivativeSupply::Analytic)?)?;
            if !mat_close(&gm.g_without_dual(), &fp.g) || !mat_close(&gm.g, &fp.g_full()) {
                failures.push(format!("sphere G k={k} h={h:.3} β={beta:.3}"));
            }
        }
    }
    let mut ball_points = 0;
    for i in 0..50 {
        let h = weyl(i, 0.5, 0.6, 3.0);
        let beta = weyl(i, 0.9, 0.3, 1.5);
        let f = SpikeSpec::monomial(h, 1)?;
        let g = RadialSpec::tap(beta)?;
        let lo = maximize_ball_theory(&f, &g, beta)?;
        if !lo.fluctuation_applicable {
            continue;
        }
        ball_points += 1;
        let r = lo.r_hat.expect("ball maximiser has a radius");
        let gm = generic_minimax_params(&ball_minimax_input(&f, &g, beta, &lo, DerivativeSupply::Analytic)?)?;
        let k = ball_k_matrix(lo.alpha_hat, r, beta);
        let fp = fluct_params_ball(&f, &g, beta, &lo)?;
        let k_ok = mat_close(&[gm.k[0], gm.k[1]], &k);
        if !k_ok || !mat_close(&gm.g_without_dual(), &fp.g) {
            failures.push(format!("ball K/G h={h:.3} β={beta:.3}"));
        }
    }
    let pass = failures.is_empty() && ball_points >= 10;
    let detail = if failures.is_empty() {
        format!("100 sphere points (k = 1, 2) and {ball_points} ball points agree to 1e-10")
    } else {
        format!("{} mismatches, first: {}", failures.len(), failures[0])
    };
    Ok(outcome(8, "closed-form cross-references", pass, detail))
}

fn phase_boundaries() -> Result<Outcome> {
    let mut worst_gap: f64 = 0.0;
    let mut bracket_ok = true;
    let mut hcs = Vec::new();
    for k in 3u32..=5 {
        let (bc, _) = critical_betas(k, 1.0)?;
        let f = SpikeSpec::monomial(1.0, k)?;
        let a = monomial_interior_root(k, 1.0, bc)
            .ok_or_else(|| crate::SkError::Numerical(format!("no interior root at β_c for k = {k}")))?;
        worst_gap = worst_gap.max((evaluate_b(0.0, bc, &f)? - evaluate_b(a, bc, &f)?).abs());
        let beta = 1.0;
        let hc = tap_threshold(k, beta)?;
        let g = RadialSpec::tap(beta)?;
        let above = maximize_ball_theory(&SpikeSpec::monomial(1.01 * hc, k)?, &g, beta)?;
        let below = maximize_ball_theory(&SpikeSpec::monomial(0.99 * hc, k)?, &g, beta)?;
        bracket_ok &= above.alpha_hat != 0.0 && below.alpha_hat == 0.0;
        hcs.push(format!("h_c({k}) = {hc:.6}"));
    }
    Ok(outcome(
        9,
        "phase boundaries",
        worst_gap <= 1e-8 && bracket_ok,
        format!(
            "max |B(0) − B(α̂)| at β_c = {worst_gap:.1e} (≤ 1e-8); interior maximiser at 1.01·h_c and not at 0.99·h_c: {bracket_ok} [{}]",
            hcs.join(", ")
        ),
    ))
}

fn clt_quadrature(scale: Scale) -> Result<Outcome> {
    let (mean, var) = linear_stat_clt(|x| x, |_| 1.0)?;
    let quad_ok = mean.abs() <= 1e-8 && (var - 1.0).abs() <= 1e-8;
    let n = 200;
    let m = scale.pick(10_000, 1_000);
    let sums: Vec<f64> = seeds(0xCA, m)
        .map(|seed| -> Result<f64> {
            Ok(sample_spectral_model(n, seed, SpectralMode::Invariance)?.eigenvalues.iter().sum())
        })
        .collect::<Result<_>>()?;
    let (_, mc_var) = mean_var(&sums);
    let pass = quad_ok && rel_err(mc_var, 1.0) <= 0.1;
    Ok(outcome(
        10,
        "CLT quadrature",
        pass,
        format!(
            "quadrature (m, v) = ({mean:.1e}, {var:.12}); Monte Carlo variance of Σλ_i over {m} draws at n = {n}: {mc_var:.4} (≤ 10% off)"
        ),
    ))
}
