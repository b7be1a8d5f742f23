//! Exact finite-`n` ground states through the overlap decomposition: a convex
//! dual problem in `l` for each overlap `α`, then an outer search over `α`
//! (sphere) or `(α, r)` (ball). Also two independent oracles.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkError};
use crate::numeric::{bisect_increasing, golden_max};
use crate::rmt_core::{GoeSample, SymmetricMatrix};
use crate::theory_engine::{RadialSpec, SpikeSpec};

/// Which branch of the inner problem applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `|u_N| < |α| < 1`: unique interior minimiser `l* > λ_N`.
    Dual,
    /// `|α| ≤ |u_N|`: value `λ_N` up to a bounded error.
    Plateau,
    /// `|α| = 1`: value `Σ u_i² λ_i`.
    Degenerate,
}

/// Location of the dual minimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LStar {
    Finite(f64),
    /// Pinned at `λ_N` (plateau).
    AtEdge,
    /// Escaped to infinity (`α = ±1`).
    AtInfinity,
}

impl LStar {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(l) => Some(l),
            _ => None,
        }
    }
}

/// Value of `max { σᵀΛσ : |σ| = 1, σ·u = α }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub value: f64,
    pub l_star: LStar,
    pub regime: Regime,
    /// `2(λ_N − λ_1) u_N² / √(1 − u_N²)`, present in the plateau regime.
    pub plateau_error_bound: Option<f64>,
}

/// Weights `u_i²` next to the eigenvalues, for repeated dual solves.
struct Weighted<'a> {
    lam: &'a [f64],
    w: Vec<f64>,
    top: f64,
}

impl<'a> Weighted<'a> {
    fn new(sample: &'a GoeSample) -> Self {
        Self {
            lam: &sample.eigenvalues,
            w: sample.u.iter().map(|x| x * x).collect(),
            top: sample.lambda_max(),
        }
    }

    /// `(s, s′)` of `Σ w_i δ_{λ_i}` at `l > λ_N`.
    fn s_and_ds(&self, l: f64) -> (f64, f64) {
        let mut s = 0.0;
        let mut ds = 0.0;
        for (x, w) in self.lam.iter().zip(&self.w) {
            let inv = 1.0 / (l - x);
            s += w * inv;
            ds -= w * inv * inv;
        }
        (s, ds)
    }

    fn mean(&self) -> f64 {
        self.lam.iter().zip(&self.w).map(|(x, w)| x * w).sum()
    }

    fn plateau_bound(&self) -> f64 {
        let un2 = *self.w.last().unwrap_or(&0.0);
        let spread = self.top - self.lam[0];
        if spread == 0.0 {
            return 0.0;
        }
        2.0 * spread * un2 / (1.0 - un2).sqrt()
    }

    fn dual(&self, alpha: f64) -> (f64, f64) {
        let a2 = alpha * alpha;
        let guard = 1e-13 * self.top.abs().max(1.0);
        let deriv = |l: f64| {
            let (s, ds) = self.s_and_ds(l);
            1.0 + a2 * ds / (s * s)
        };
        let lo = self.top + guard;
        if deriv(lo) > 0.0 {
            // numerically at the plateau boundary
            let (s, _) = self.s_and_ds(lo);
            return (lo, lo - a2 / s);
        }
        let mut hi = self.top + 1.0;
        let mut doublings = 0;
        while deriv(hi) <= 0.0 && doublings < 200 {
            hi = self.top + 2.0 * (hi - self.top);
            doublings += 1;
        }
        let l = bisect_increasing(deriv, lo, hi, |m| 1e-12 * m.abs().max(1.0));
        let (s, _) = self.s_and_ds(l);
        (l, l - a2 / s)
    }

    fn inner(&self, alpha: f64) -> InnerResult {
        let a = alpha.abs();
        let un = self.w.last().copied().unwrap_or(0.0).sqrt();
        if a >= 1.0 {
            InnerResult {
                value: self.mean(),
                l_star: LStar::AtInfinity,
                regime: Regime::Degenerate,
                plateau_error_bound: None,
            }
        } else if a <= un {
            InnerResult {
                value: self.top,
                l_star: LStar::AtEdge,
                regime: Regime::Plateau,
                plateau_error_bound: Some(self.plateau_bound()),
            }
        } else {
            let (l, v) = self.dual(alpha);
            InnerResult {
                value: v,
                l_star: LStar::Finite(l),
                regime: Regime::Dual,
                plateau_error_bound: None,
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha.abs() <= 1.0 {
        Ok(())
    } else {
        Err(SkError::Domain { what: "alpha", value: alpha })
    }
}

/// Minimises `l − α²/s_{λ,u}(l)` over `l > λ_N` by bisection on the
/// increasing derivative `1 + α² s′/s²`. Returns `(l*, value)`.
pub fn dual_minimize(sample: &GoeSample, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if alpha.abs() >= 1.0 {
        return Err(SkError::Regime(format!("|α| = {} is degenerate; use inner_max", alpha.abs())));
    }
    let un = sample.u_top().abs();
    if alpha.abs() <= un {
        return Err(SkError::Regime(format!(
            "|α| = {} ≤ |u_N| = {un}: plateau regime, use inner_max",
            alpha.abs()
        )));
    }
    Ok(Weighted::new(sample).dual(alpha))
}

/// `max { σᵀΛσ : |σ| = 1, σ·u = α }` in every regime.
pub fn inner_max(sample: &GoeSample, alpha: f64) -> Result<InnerResult> {
    check_alpha(alpha)?;
    Ok(Weighted::new(sample).inner(alpha))
}

/// `σ*_i = α u_i / (s(l*)(l* − λ_i))`, the constrained maximiser in the dual
/// regime.
pub fn recover_maximizer(sample: &GoeSample, alpha: f64, l_star: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if !(l_star > sample.lambda_max()) {
        return Err(SkError::Pole { l: l_star, edge: sample.lambda_max() });
    }
    let wt = Weighted::new(sample);
    let (s, _) = wt.s_and_ds(l_star);
    let sigma: Vec<f64> = sample
        .eigenvalues
        .iter()
        .zip(&sample.u)
        .map(|(x, u)| alpha * u / (s * (l_star - x)))
        .collect();
    let norm = sigma.iter().map(|x| x * x).sum::<f64>().sqrt();
    let overlap: f64 = sigma.iter().zip(&sample.u).map(|(a, b)| a * b).sum();
    if (norm - 1.0).abs() > 1e-8 || (overlap - alpha).abs() > 1e-8 {
        return Err(SkError::Numerical(format!(
            "l* = {l_star} is not stationary: |σ| = {norm}, σ·u = {overlap}"
        )));
    }
    Ok(sigma)
}

/// Tuning for the outer searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub alpha_grid: usize,
    pub radius_grid: usize,
    pub refine_tol: f64,
    pub keep_curve: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { alpha_grid: 2001, radius_grid: 201, refine_tol: 1e-10, keep_curve: false }
    }
}

/// Result of the sphere problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSolve {
    /// `L_N = n · max_α { f(α) + β · inner(α) }`.
    pub l_n: f64,
    pub alpha_star: f64,
    /// `-alpha_star` when the objective is even and `alpha_star ≠ 0`.
    pub paired_alpha: Option<f64>,
    pub l_star: LStar,
    /// Sampled `(α, f(α) + β inner(α))` on the outer grid.
    pub curve: Option<Vec<(f64, f64)>>,
}

/// Result of the ball problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSolve {
    pub l_tilde_n: f64,
    pub alpha_star: f64,
    pub paired_alpha: Option<f64>,
    pub r_star: f64,
    pub l_star: LStar,
    pub domain: Vec<(f64, f64)>,
}

/// Prefers higher values, then smaller `|α|`, then negative `α`.
fn better(cand: (f64, f64), best: (f64, f64)) -> bool {
    let (a, v) = cand;
    let (ba, bv) = best;
    if v != bv {
        return v > bv;
    }
    if a.abs() != ba.abs() {
        return a.abs() < ba.abs();
    }
    a < ba
}

fn nan_to_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// `n · max_α { f(α) + β inner(α) }`.
pub fn solve_sphere(sample: &GoeSample, beta: f64, f: &SpikeSpec) -> Result<SphereSolve> {
    solve_sphere_with(sample, beta, f, &SolveOptions::default())
}

/// [`solve_sphere`] with explicit options.
pub fn solve_sphere_with(sample: &GoeSample, beta: f64, f: &SpikeSpec, opts: &SolveOptions) -> Result<SphereSolve> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SkError::Domain { what: "beta", value: beta });
    }
    let wt = Weighted::new(sample);
    let obj = |a: f64| nan_to_neg_inf(f.value(a) + beta * wt.inner(a).value);
    let grid = uniform_grid(-1.0, 1.0, opts.alpha_grid.max(3));
    let vals: Vec<f64> = grid.iter().map(|&a| obj(a)).collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| {
        if better((grid[i], vals[i]), (grid[j], vals[j])) {
            std::cmp::Ordering::Less
        } else if better((grid[j], vals[j]), (grid[i], vals[i])) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let mut best = (grid[order[0]], vals[order[0]]);
    for &i in order.iter().take(3) {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        let cand = golden_max(obj, lo, hi, opts.refine_tol);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    let (alpha, value) = best;
    let paired = (alpha != 0.0 && obj(-alpha) == value).then_some(-alpha);
    let (alpha, paired) = match paired {
        Some(p) if p < alpha => (p, Some(alpha)),
        other => (alpha, other),
    };
    Ok(SphereSolve {
        l_n: sample.n() as f64 * value,
        alpha_star: alpha,
        paired_alpha: paired,
        l_star: wt.inner(alpha).l_star,
        curve: opts.keep_curve.then(|| grid.iter().copied().zip(vals.iter().copied()).collect()),
    })
}

fn check_domain(domain: &[(f64, f64)]) -> Result<()> {
    if domain.is_empty() {
        return Err(SkError::InvalidInput("empty radius set".into()));
    }
    for &(a, b) in domain {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
            return Err(SkError::Domain { what: "radius interval endpoint", value: if a > b { a } else { b } });
        }
    }
    Ok(())
}

/// `n · max_{α, r ∈ R} { f(rα) + g(r) + βr² inner(α) }`.
pub fn solve_ball(
    sample: &GoeSample,
    beta: f64,
    f: &SpikeSpec,
    g: &RadialSpec,
    domain: &[(f64, f64)],
) -> Result<BallSolve> {
    solve_ball_with(sample, beta, f, g, domain, &SolveOptions::default())
}

/// [`solve_ball`] with explicit options.
pub fn solve_ball_with(
    sample: &GoeSample,
    beta: f64,
    f: &SpikeSpec,
    g: &RadialSpec,
    domain: &[(f64, f64)],
    opts: &SolveOptions,
) -> Result<BallSolve> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SkError::Domain { what: "beta", value: beta });
    }
    check_domain(domain)?;
    let wt = Weighted::new(sample);
    let total_len: f64 = domain.iter().map(|(a, b)| b - a).sum();
    let nr = opts.radius_grid.max(3);
    let mut radii: Vec<(f64, usize)> = Vec::new();
    for (k, &(a, b)) in domain.iter().enumerate() {
        let pts = if total_len > 0.0 { ((nr as f64) * (b - a) / total_len).round() as usize } else { 1 };
        for r in uniform_grid(a, b, pts.max(2)) {
            radii.push((r, k));
        }
    }
    let alphas = uniform_grid(-1.0, 1.0, opts.radius_grid.max(3));
    let point = |a: f64, r: f64, inner_v: f64| nan_to_neg_inf(f.value(r * a) + g.value(r) + beta * r * r * inner_v);
    // best radius for a fixed overlap: grid scan, then golden section inside
    // the interval holding the best grid point
    let radius_profile = |a: f64, inner_v: f64, refine: bool| -> (f64, f64) {
        let mut best = (radii[0].0, f64::NEG_INFINITY, 0usize);
        for (j, &(r, _)) in radii.iter().enumerate() {
            let v = point(a, r, inner_v);
            if v > best.1 {
                best = (r, v, j);
            }
        }
        if !refine {
            return (best.0, best.1);
        }
        let (_, k) = radii[best.2];
        let (lo, hi) = domain[k];
        let left = if best.2 > 0 && radii[best.2 - 1].1 == k { radii[best.2 - 1].0 } else { lo };
        let right = if best.2 + 1 < radii.len() && radii[best.2 + 1].1 == k { radii[best.2 + 1].0 } else { hi };
        if right > left {
            let (r, v) = golden_max(|y| point(a, y, inner_v), left, right, opts.refine_tol);
            if v > best.1 {
                return (r, v);
            }
        }
        (best.0, best.1)
    };
    let coarse: Vec<f64> = alphas.iter().map(|&a| radius_profile(a, wt.inner(a).value, false).1).collect();
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&i, &j| {
        if better((alphas[i], coarse[i]), (alphas[j], coarse[j])) {
            std::cmp::Ordering::Less
        } else if better((alphas[j], coarse[j]), (alphas[i], coarse[i])) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let profile = |a: f64| radius_profile(a, wt.inner(a).value, true).1;
    let mut best = (alphas[order[0]], profile(alphas[order[0]]));
    for &i in order.iter().take(3) {
        let lo = alphas[i.saturating_sub(1)];
        let hi = alphas[(i + 1).min(alphas.len() - 1)];
        let cand = golden_max(profile, lo, hi, opts.refine_tol);
        if cand.1 > best.1 {
            best = cand;
        }
    }
    let a = best.0;
    let (r, v) = radius_profile(a, wt.inner(a).value, true);
    let obj = |a: f64, r: f64| point(a, r, wt.inner(a).value);
    let paired = (a != 0.0 && obj(-a, r) == v).then_some(-a);
    let (a, paired) = match paired {
        Some(p) if p < a => (p, Some(a)),
        other => (a, other),
    };
    Ok(BallSolve {
        l_tilde_n: sample.n() as f64 * v,
        alpha_star: a,
        paired_alpha: paired,
        r_star: r,
        l_star: wt.inner(a).l_star,
        domain: domain.to_vec(),
    })
}

/// Exact slice maximum `max { σᵀΛσ : |σ| = 1, σ·u = α }` computed without the
/// dual: eliminate the constraint with a Householder basis of `u^⊥` and solve
/// the resulting trust-region problem through its secular equation.
///
/// Intended for small `n` (dense eigendecomposition of size `n − 1`).
pub fn oracle_slice(sample: &GoeSample, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = sample.n();
    let lam = &sample.eigenvalues;
    let u = &sample.u;
    let u_lam_u: f64 = lam.iter().zip(u).map(|(l, x)| l * x * x).sum();
    let a2 = alpha * alpha;
    let tau2 = (1.0 - a2).max(0.0);
    if n == 1 || tau2 == 0.0 {
        return Ok(a2 * u_lam_u);
    }
    let tau = tau2.sqrt();
    // Householder reflector mapping e_1 to -sign(u_1) u
    let sgn = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u.clone();
    v[0] += sgn;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    let h = |i: usize, j: usize| (if i == j { 1.0 } else { 0.0 }) - 2.0 * v[i] * v[j] / vv;
    // Q = columns 1..n of H, an orthonormal basis of u^⊥
    let m = n - 1;
    let a_mat = Mat::<f64>::from_fn(m, m, |p, q| tau2 * (0..n).map(|i| h(i, p + 1) * lam[i] * h(i, q + 1)).sum::<f64>());
    let b: Vec<f64> = (0..m)
        .map(|p| alpha * tau * (0..n).map(|i| h(i, p + 1) * lam[i] * u[i]).sum::<f64>())
        .collect();
    let evd = a_mat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| SkError::Numerical(format!("slice eigensolver failed: {e:?}")))?;
    let mu: Vec<f64> = (0..m).map(|i| evd.S()[i]).collect();
    let vecs = evd.U();
    let bt: Vec<f64> = (0..m).map(|i| (0..m).map(|p| vecs[(p, i)] * b[p]).sum()).collect();
    let mu_max = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = mu.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let top_tol = 1e-12 * scale;
    let secular = |gamma: f64| (0..m).map(|i| bt[i] * bt[i] / (gamma - mu[i]).powi(2)).sum::<f64>() - 1.0;
    let objective = |x: &[f64]| (0..m).map(|i| mu[i] * x[i] * x[i] + 2.0 * bt[i] * x[i]).sum::<f64>();

    let top_weight: f64 = (0..m).filter(|&i| mu_max - mu[i] <= top_tol).map(|i| bt[i] * bt[i]).sum();
    let rest = |i: usize| mu_max - mu[i] > top_tol;
    let hard = top_weight.sqrt() <= 1e-13 * bnorm.max(scale)
        && (0..m).filter(|&i| rest(i)).map(|i| bt[i] * bt[i] / (mu_max - mu[i]).powi(2)).sum::<f64>() <= 1.0;
    let best = if hard {
        let mut x: Vec<f64> = (0..m).map(|i| if rest(i) { bt[i] / (mu_max - mu[i]) } else { 0.0 }).collect();
        let used: f64 = x.iter().map(|t| t * t).sum();
        let top = (0..m).find(|&i| !rest(i)).expect("top eigenvalue exists");
        x[top] = (1.0 - used).max(0.0).sqrt();
        objective(&x)
    } else {
        let lo = mu_max;
        let hi = mu_max + bnorm + 1.0;
        // secular(γ) decreases on (μ_max, ∞)
        let gamma = bisect_increasing(|g| -secular(g), lo, hi, |_| 0.0);
        let x: Vec<f64> = (0..m).map(|i| bt[i] / (gamma - mu[i])).collect();
        let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
        let x: Vec<f64> = x.iter().map(|t| t / norm).collect();
        objective(&x)
    };
    Ok(a2 * u_lam_u + best)
}

/// What the direct oracle maximises over.
#[derive(Debug, Clone, Copy)]
pub enum OracleTarget<'a> {
    /// Diagonal basis: `σᵀΛσ` with overlap `σ·u`.
    Sample(&'a GoeSample),
    /// Raw `J` (unnormalised): `σᵀ(J/√n)σ` with overlap `σ·spike`.
    Matrix { matrix: &'a SymmetricMatrix, spike: &'a [f64] },
}

/// Optional ball constraint `σ = rτ`, `|τ| = 1`, `r ∈ R`.
#[derive(Debug, Clone, Copy)]
pub struct BallConstraint<'a> {
    pub g: &'a RadialSpec,
    pub domain: &'a [(f64, f64)],
}

struct Quadratic<'a> {
    target: OracleTarget<'a>,
    scale: f64,
}

impl Quadratic<'_> {
    fn n(&self) -> usize {
        match self.target {
            OracleTarget::Sample(s) => s.n(),
            OracleTarget::Matrix { matrix, .. } => matrix.n(),
        }
    }

    /// Writes `Aσ` into `out` and returns `σᵀAσ`.
    fn apply(&self, sigma: &[f64], out: &mut [f64]) -> f64 {
        match self.target {
            OracleTarget::Sample(s) => {
                for ((o, l), x) in out.iter_mut().zip(&s.eigenvalues).zip(sigma) {
                    *o = l * x;
                }
            }
            OracleTarget::Matrix { matrix, .. } => {
                let m = matrix.as_mat();
                let n = matrix.n();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += m[(i, j)] * sigma[j];
                    }
                    out[i] = acc * self.scale;
                }
            }
        }
        out.iter().zip(sigma).map(|(a, b)| a * b).sum()
    }

    fn spike(&self) -> &[f64] {
        match self.target {
            OracleTarget::Sample(s) => &s.u,
            OracleTarget::Matrix { spike, .. } => spike,
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Projected gradient ascent with backtracking and random restarts; returns
/// the best `n`-scaled objective found. A lower-bound witness for
/// [`solve_sphere`] / [`solve_ball`].
pub fn oracle_direct(
    target: OracleTarget<'_>,
    beta: f64,
    f: &SpikeSpec,
    ball: Option<BallConstraint<'_>>,
    restarts: usize,
    seed: u64,
) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SkError::Domain { what: "beta", value: beta });
    }
    let quad = match target {
        OracleTarget::Sample(_) => Quadratic { target, scale: 1.0 },
        OracleTarget::Matrix { matrix, spike } => {
            if spike.len() != matrix.n() {
                return Err(SkError::InvalidInput("spike length does not match matrix".into()));
            }
            let norm = spike.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(SkError::InvalidInput(format!("spike must be a unit vector, |v| = {norm}")));
            }
            Quadratic { target, scale: 1.0 / (matrix.n() as f64).sqrt() }
        }
    };
    if let Some(b) = ball {
        check_domain(b.domain)?;
    }
    let n = quad.n();
    let spike = quad.spike().to_vec();
    let mut buf = vec![0.0; n];
    let eval = |tau: &[f64], r: f64, buf: &mut [f64]| -> (f64, f64) {
        let q = quad.apply(tau, buf);
        let m: f64 = tau.iter().zip(&spike).map(|(a, b)| a * b).sum();
        let radial = ball.map_or(0.0, |b| b.g.value(r));
        (nan_to_neg_inf(f.value(r * m) + radial + beta * r * r * q), m)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let starts = restarts.max(1) + 2;
    for start in 0..starts {
        let mut tau: Vec<f64> = match start {
            0 => spike.clone(),
            1 => spike.iter().map(|x| -x).collect(),
            _ => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        };
        normalize(&mut tau);
        let mut r = match ball {
            Some(b) => {
                let (lo, hi) = b.domain[rng.random_range(0..b.domain.len())];
                lo + (hi - lo) * rng.random::<f64>()
            }
            None => 1.0,
        };
        let (mut val, _) = eval(&tau, r, &mut buf);
        let mut step = 1.0;
        for _ in 0..20_000 {
            // gradient in τ: 2βr²Aτ + r f′(r m) u, projected on the tangent space
            let (_, m) = eval(&tau, r, &mut buf);
            let fp = f.eval(r * m, 1);
            let mut grad: Vec<f64> = buf.iter().zip(&spike).map(|(a, s)| 2.0 * beta * r * r * a + r * fp * s).collect();
            let radial_grad = ball.map(|b| {
                let q: f64 = buf.iter().zip(&tau).map(|(a, t)| a * t).sum();
                fp * m + b.g.eval(r, 1) + 2.0 * beta * r * q
            });
            let dot: f64 = grad.iter().zip(&tau).map(|(a, b)| a * b).sum();
            grad.iter_mut().zip(&tau).for_each(|(g, t)| *g -= dot * t);
            let gnorm = grad.iter().map(|x| x * x).sum::<f64>().sqrt() + radial_grad.map_or(0.0, f64::abs);
            if gnorm < 1e-13 {
                break;
            }
            let mut improved = false;
            while step > 1e-16 {
                let mut cand: Vec<f64> = tau.iter().zip(&grad).map(|(t, g)| t + step * g).collect();
                normalize(&mut cand);
                let cand_r = match (ball, radial_grad) {
                    (Some(b), Some(rg)) => project_radius(r + step * rg, b.domain),
                    _ => 1.0,
                };
                let (cv, _) = eval(&cand, cand_r, &mut buf);
                if cv > val {
                    tau = cand;
                    r = cand_r;
                    val = cv;
                    improved = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        best = best.max(val);
    }
    Ok(n as f64 * best)
}

fn project_radius(r: f64, domain: &[(f64, f64)]) -> f64 {
    let mut best = (f64::INFINITY, r);
    for &(a, b) in domain {
        let c = r.clamp(a, b);
        let d = (c - r).abs();
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmt_core::{sample_goe, sample_spectral_model, SpectralMode};
    use proptest::prelude::*;

    fn two_atom() -> GoeSample {
        let h = 0.5f64.sqrt();
        GoeSample::from_parts(vec![-1.0, 1.0], vec![h, h]).unwrap()
    }

    fn small_sample(n: usize, seed: u64) -> GoeSample {
        sample_spectral_model(n, seed, SpectralMode::Rotate).unwrap()
    }

    /// Brute force over the circle for the two-atom case.
    fn circle_max(alpha: f64) -> f64 {
        // σ = (cos t, sin t), σ·u = (cos t + sin t)/√2 = α
        let h = 0.5f64.sqrt();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=2_000_000 {
            let t = std::f64::consts::TAU * i as f64 / 2_000_000.0;
            let (c, s) = (t.cos(), t.sin());
            if ((c + s) * h - alpha).abs() < 2e-6 {
                best = best.max(s * s - c * c);
            }
        }
        best
    }

    #[test]
    fn two_atom_dual() {
        let s = two_atom();
        let (l, v) = dual_minimize(&s, 0.8).unwrap();
        assert!((l - 4.0 / 3.0).abs() < 1e-11, "{l}");
        assert!((v - 0.96).abs() < 1e-12, "{v}");
        assert!((circle_max(0.8) - 0.96).abs() < 1e-4);
        assert!((oracle_slice(&s, 0.8).unwrap() - 0.96).abs() < 1e-13);
    }

    #[test]
    fn two_atom_edge_limit() {
        let s = two_atom();
        let (l, _) = dual_minimize(&s, 0.5f64.sqrt() + 1e-9).unwrap();
        assert!((l - 1.0).abs() < 1e-4, "{l}");
        assert!(matches!(dual_minimize(&s, 0.5), Err(SkError::Regime(_))));
        assert!(matches!(dual_minimize(&s, 1.0), Err(SkError::Regime(_))));
    }

    #[test]
    fn inner_regimes() {
        let s = two_atom();
        let r = inner_max(&s, 0.0).unwrap();
        assert_eq!(r.regime, Regime::Plateau);
        assert_eq!(r.value, 1.0);
        let bound = r.plateau_error_bound.unwrap();
        assert!((bound - 2.0 * 2.0 * 0.5 / 0.5f64.sqrt()).abs() < 1e-12);
        let r = inner_max(&s, 1.0).unwrap();
        assert_eq!(r.regime, Regime::Degenerate);
        assert!(r.value.abs() < 1e-15);
        let r = inner_max(&s, 0.8).unwrap();
        assert_eq!(r.regime, Regime::Dual);
        assert!((r.value - 0.96).abs() < 1e-12);
        assert!(inner_max(&s, 1.5).is_err());
    }

    #[test]
    fn dual_value_below_top() {
        for seed in 0..20 {
            let s = small_sample(50, seed);
            let a = 0.5 * (s.u_top().abs() + 1.0);
            let (l, v) = dual_minimize(&s, a).unwrap();
            assert!(l > s.lambda_max() && v < s.lambda_max());
        }
    }

    #[test]
    fn maximizer_recovery() {
        let s = two_atom();
        let (l, v) = dual_minimize(&s, 0.8).unwrap();
        let sig = recover_maximizer(&s, 0.8, l).unwrap();
        let q: f64 = sig.iter().zip(&s.eigenvalues).map(|(x, l)| l * x * x).sum();
        assert!((q - v).abs() < 1e-8);
        let s = small_sample(40, 3);
        for a in [0.5, 0.9, 0.999_999] {
            if a <= s.u_top().abs() {
                continue;
            }
            let (l, v) = dual_minimize(&s, a).unwrap();
            let sig = recover_maximizer(&s, a, l).unwrap();
            let q: f64 = sig.iter().zip(&s.eigenvalues).map(|(x, l)| l * x * x).sum();
            assert!((q - v).abs() < 1e-8, "α = {a}");
            if a > 0.99 {
                let dist: f64 = sig.iter().zip(&s.u).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!(dist < 1e-2);
            }
        }
        assert!(recover_maximizer(&s, 0.9, s.lambda_max() + 10.0).is_err());
    }

    #[test]
    fn strong_duality_small_n() {
        for seed in 0..200u64 {
            let n = 2 + (seed as usize % 7);
            let s = small_sample(n, 100 + seed);
            let un = s.u_top().abs();
            for frac in [0.05, 0.3, 0.6, 0.95] {
                let a = un + frac * (1.0 - un);
                let d = inner_max(&s, a).unwrap();
                let o = oracle_slice(&s, a).unwrap();
                assert!((d.value - o).abs() < 1e-7, "n = {n}, seed {seed}, α = {a}: {} vs {o}", d.value);
            }
        }
    }

    #[test]
    fn slice_oracle_hard_case() {
        // u carries no weight on λ = 2, so e_3 ⊥ u is a free top direction.
        // With w = (0.8, -0.6, 0) and σ = αu + τ(c w + √(1-c²) e_3) the
        // objective is -0.36α² - 0.96ατc + τ²(2 - 2.64c²), maximised over c.
        let s = GoeSample::from_parts(vec![-1.0, 0.0, 2.0], vec![0.6, 0.8, 0.0]).unwrap();
        for a in [0.1, 0.3, 0.5] {
            let exact = -0.36 * a * a + 2.0 * (1.0 - a * a) + 0.9216 * a * a / 10.56;
            let val = oracle_slice(&s, a).unwrap();
            assert!((val - exact).abs() < 1e-12, "α = {a}: {val} vs {exact}");
        }
    }

    #[test]
    fn convexity_witness() {
        let s = small_sample(300, 5);
        let a = 0.5 * (s.u_top().abs() + 1.0);
        let wt = Weighted::new(&s);
        let phi = |l: f64| l - a * a / wt.s_and_ds(l).0;
        for i in 0..200 {
            let l = s.lambda_max() + 1e-3 + 0.05 * i as f64;
            let h = 1e-3;
            assert!(phi(l + h) - 2.0 * phi(l) + phi(l - h) >= -1e-10);
        }
    }

    #[test]
    fn plateau_continuity() {
        for seed in 0..10 {
            let s = small_sample(200, 40 + seed);
            let un = s.u_top().abs();
            let r = inner_max(&s, un).unwrap();
            let above = inner_max(&s, un + 1e-10).unwrap();
            assert!((above.value - s.lambda_max()).abs() <= r.plateau_error_bound.unwrap() + 1e-9);
        }
    }

    #[test]
    fn leading_order_law_improves() {
        let sup_err = |n: usize, seed: u64| {
            let s = sample_spectral_model(n, seed, SpectralMode::Invariance).unwrap();
            (0..201)
                .map(|i| -1.0 + i as f64 / 100.0)
                .map(|a: f64| (inner_max(&s, a).unwrap().value - (2.0 * (1.0 - a * a)).sqrt()).abs())
                .fold(0.0, f64::max)
        };
        let median = |n: usize| {
            let mut v: Vec<f64> = (0..15).map(|t| sup_err(n, 7_000 + t)).collect();
            v.sort_by(f64::total_cmp);
            v[7]
        };
        let (m250, m1000) = (median(250), median(1000));
        assert!(m1000 < m250, "{m250} -> {m1000}");
    }

    #[test]
    fn zero_spike_is_top_eigenvalue() {
        let s = small_sample(100, 11);
        let f = SpikeSpec::monomial(0.0, 1).unwrap();
        let sol = solve_sphere(&s, 1.7, &f).unwrap();
        assert!((sol.l_n / 100.0 - 1.7 * s.lambda_max()).abs() < 1e-12);
        assert_eq!(sol.alpha_star, 0.0);
    }

    #[test]
    fn sphere_matches_dense_grid() {
        let s = two_atom();
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let sol = solve_sphere(&s, 1.0, &f).unwrap();
        let dense = (0..=200_000)
            .map(|i| -1.0 + i as f64 / 100_000.0)
            .map(|a| a + inner_max(&s, a).unwrap().value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(sol.l_n / 2.0 >= dense - 1e-12);
        assert!((sol.l_n / 2.0 - dense).abs() < 1e-8);
        let direct = oracle_direct(OracleTarget::Sample(&s), 1.0, &f, None, 32, 1).unwrap();
        assert!((direct - sol.l_n).abs() < 1e-6, "{direct} vs {}", sol.l_n);
    }

    #[test]
    fn grid_dominance() {
        let s = small_sample(60, 2);
        let f = SpikeSpec::monomial(0.8, 3).unwrap();
        let opts = SolveOptions { keep_curve: true, ..Default::default() };
        let sol = solve_sphere_with(&s, 0.7, &f, &opts).unwrap();
        for (_, v) in sol.curve.unwrap() {
            assert!(sol.l_n / 60.0 >= v - 1e-9);
        }
    }

    #[test]
    fn even_spike_reports_pair() {
        let s = small_sample(80, 4);
        let f = SpikeSpec::monomial(1.0, 2).unwrap();
        let sol = solve_sphere(&s, 1.0, &f).unwrap();
        assert!(sol.alpha_star < 0.0);
        assert_eq!(sol.paired_alpha, Some(-sol.alpha_star));
    }

    #[test]
    fn oracle_top_eigenvalue() {
        let s = small_sample(30, 8);
        let f = SpikeSpec::monomial(0.0, 1).unwrap();
        let v = oracle_direct(OracleTarget::Sample(&s), 1.0, &f, None, 8, 3).unwrap();
        assert!((v / 30.0 - s.lambda_max()).abs() < 1e-8);
    }

    #[test]
    fn oracle_matrix_form_agrees() {
        let n = 12;
        let j = sample_goe(n, 21).unwrap();
        let s = sample_spectral_model(n, 21, SpectralMode::Rotate).unwrap();
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let m = oracle_direct(OracleTarget::Matrix { matrix: &j, spike: &e1 }, 1.0, &f, None, 32, 5).unwrap();
        let sol = solve_sphere(&s, 1.0, &f).unwrap();
        assert!((m - sol.l_n).abs() / n as f64 <= 1e-6, "{m} vs {}", sol.l_n);
    }

    #[test]
    fn cross_validation_campaign() {
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let s = small_sample(6, 500 + seed);
            let sol = solve_sphere(&s, 1.0, &f).unwrap();
            let o = oracle_direct(OracleTarget::Sample(&s), 1.0, &f, None, 32, seed).unwrap();
            worst = worst.max((o - sol.l_n).abs() / 6.0);
        }
        assert!(worst <= 1e-6, "{worst}");
    }

    #[test]
    fn ball_with_unit_radius_is_sphere() {
        let s = small_sample(50, 9);
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let zero = RadialSpec::custom("zero", (0.0, 1.0), |_| 0.0, |_| 0.0, |_| 0.0).unwrap();
        let b = solve_ball(&s, 1.3, &f, &zero, &[(1.0, 1.0)]).unwrap();
        let sp = solve_sphere(&s, 1.3, &f).unwrap();
        assert!((b.l_tilde_n - sp.l_n).abs() < 1e-8, "{} vs {}", b.l_tilde_n, sp.l_n);
        assert_eq!(b.r_star, 1.0);
        assert!(solve_ball(&s, 1.3, &f, &zero, &[]).is_err());
    }

    #[test]
    fn ball_zero_spike_has_zero_overlap() {
        let s = small_sample(80, 10);
        let f = SpikeSpec::monomial(0.0, 1).unwrap();
        let g = RadialSpec::tap(1.0).unwrap();
        let dom = g.domain();
        let b = solve_ball(&s, 1.0, &f, &g, &[dom]).unwrap();
        assert_eq!(b.alpha_star, 0.0);
        assert!(b.r_star >= dom.0 && b.r_star <= dom.1);
    }

    #[test]
    fn ball_oracle_lower_bound() {
        let s = small_sample(8, 31);
        let f = SpikeSpec::monomial(1.0, 1).unwrap();
        let g = RadialSpec::tap(1.0).unwrap();
        let dom = [(g.domain().0, 0.99)];
        let b = solve_ball(&s, 1.0, &f, &g, &dom).unwrap();
        let o = oracle_direct(
            OracleTarget::Sample(&s),
            1.0,
            &f,
            Some(BallConstraint { g: &g, domain: &dom }),
            32,
            2,
        )
        .unwrap();
        assert!(o <= b.l_tilde_n + 1e-6, "{o} > {}", b.l_tilde_n);
        assert!((o - b.l_tilde_n).abs() / 8.0 < 1e-5, "{o} vs {}", b.l_tilde_n);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn inner_is_even_in_alpha(seed in 0u64..1000, a in -1.0f64..1.0) {
            let s = small_sample(10, seed);
            let p = inner_max(&s, a).unwrap().value;
            let m = inner_max(&s, -a).unwrap().value;
            prop_assert_eq!(p, m);
        }

        #[test]
        fn inner_bounded_by_extremes(seed in 0u64..1000, a in -1.0f64..1.0) {
            let s = small_sample(12, seed);
            let v = inner_max(&s, a).unwrap().value;
            prop_assert!(v <= s.lambda_max() + 1e-12);
            prop_assert!(v >= s.lambda_min() - 1e-12);
        }

        #[test]
        fn dual_beats_slice_never(seed in 0u64..1000, frac in 0.01f64..0.99) {
            // weak duality: the dual value is an upper bound on every feasible point
            let s = small_sample(7, seed);
            let a = s.u_top().abs() + frac * (1.0 - s.u_top().abs());
            let d = inner_max(&s, a).unwrap().value;
            let o = oracle_slice(&s, a).unwrap();
            prop_assert!(o <= d + 1e-9);
        }
    }
}
