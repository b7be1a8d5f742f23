//! Random-matrix primitives: GOE sampling, spectral decomposition, classical
//! locations, Stieltjes transforms and the linear-statistic CLT integrals.
//!
//! Normalisation: `J` has `Var(J_ij) = (1 + δ_ij) / 2`, and every spectral
//! quantity refers to `J / √n`, whose spectrum fills `[-√2, √2]`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use faer::{Mat, Side};
use gauss_quad::GaussLegendre;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkError};

/// Dense real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    n: usize,
    entries: Mat<f64>,
}

impl SymmetricMatrix {
    /// Builds from a full square matrix, rejecting asymmetric input.
    pub fn from_mat(entries: Mat<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(SkError::InvalidDimension(n));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(SkError::InvalidInput(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.entries
    }
}

/// How the spike direction is placed relative to the eigenbasis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralMode {
    /// Full eigendecomposition; `u = Qᵀ e₁`.
    Rotate,
    /// Eigenvalues only; `u` drawn independently and uniformly on the sphere.
    Invariance,
}

/// One draw of the model in the diagonal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GoeSample {
    /// Eigenvalues of `J/√n`, strictly increasing.
    pub eigenvalues: Vec<f64>,
    /// Spike weights, unit Euclidean norm.
    pub u: Vec<f64>,
    /// Standard normals `g` with `u = g / |g|`; kept in invariance mode.
    pub gaussians: Option<Vec<f64>>,
}

impl GoeSample {
    /// Assembles a sample from raw parts.
    ///
    /// Eigenvalues are sorted (carrying `u` along), exact ties are split by one
    /// ulp, and `u` is renormalised if its norm is within `1e-9` of one.
    pub fn from_parts(eigenvalues: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(SkError::InvalidDimension(0));
        }
        if u.len() != n {
            return Err(SkError::InvalidInput(format!("u has length {} but n = {n}", u.len())));
        }
        if eigenvalues.iter().chain(u.iter()).any(|x| !x.is_finite()) {
            return Err(SkError::InvalidInput("non-finite entries".into()));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let mut lambda: Vec<f64> = idx.iter().map(|&i| eigenvalues[i]).collect();
        let mut w: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
        split_ties(&mut lambda);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(SkError::InvalidInput(format!("|u| = {norm}, expected 1")));
        }
        w.iter_mut().for_each(|x| *x /= norm);
        Ok(Self { eigenvalues: lambda, u: w, gaussians: None })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Largest eigenvalue `λ_N`.
    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty sample")
    }

    /// Smallest eigenvalue `λ_1`.
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Spike weight on the top eigenvector.
    pub fn u_top(&self) -> f64 {
        *self.u.last().expect("non-empty sample")
    }
}

fn split_ties(lambda: &mut [f64]) {
    for i in 1..lambda.len() {
        if lambda[i] <= lambda[i - 1] {
            lambda[i] = lambda[i - 1].next_up();
        }
    }
}

/// Draws `J` with `J_ij ~ N(0, 1/2)` off the diagonal and `J_ii ~ N(0, 1)`.
pub fn sample_goe(n: usize, seed: u64) -> Result<SymmetricMatrix> {
    if n == 0 {
        return Err(SkError::InvalidDimension(0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mat::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i == j {
                m[(i, i)] = z;
            } else {
                let x = z * FRAC_1_SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
    }
    Ok(SymmetricMatrix { n, entries: m })
}

/// Samples `(λ, u)` for one trial.
///
/// Both modes have the same law; `Invariance` skips the eigenvectors and is
/// roughly three times cheaper.
pub fn sample_spectral_model(n: usize, seed: u64, mode: SpectralMode) -> Result<GoeSample> {
    let j = sample_goe(n, seed)?;
    let scale = 1.0 / (n as f64).sqrt();
    match mode {
        SpectralMode::Rotate => {
            let evd = j
                .entries
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| SkError::Numerical(format!("eigensolver failed at n = {n}: {e:?}")))?;
            let s = evd.S();
            let q = evd.U();
            let lambda: Vec<f64> = (0..n).map(|i| s[i] * scale).collect();
            let u: Vec<f64> = (0..n).map(|i| q[(0, i)]).collect();
            GoeSample::from_parts(lambda, u)
        }
        SpectralMode::Invariance => {
            let vals = j
                .entries
                .self_adjoint_eigenvalues(Side::Lower)
                .map_err(|e| SkError::Numerical(format!("eigensolver failed at n = {n}: {e:?}")))?;
            let lambda: Vec<f64> = vals.iter().map(|x| x * scale).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            let u: Vec<f64> = g.iter().map(|x| x / norm).collect();
            // eigenvalues come back sorted, so g stays aligned with u
            let mut sample = GoeSample::from_parts(lambda, u)?;
            sample.gaussians = Some(g);
            Ok(sample)
        }
    }
}

/// Semicircle distribution function `F(x) = 1/2 + (x√(2−x²)/2 + asin(x/√2)) / π`.
pub fn semicircle_cdf(x: f64) -> Result<f64> {
    if !(-SQRT_2..=SQRT_2).contains(&x) {
        return Err(SkError::Domain { what: "x", value: x });
    }
    let r = (2.0 - x * x).max(0.0).sqrt();
    let v = 0.5 + (0.5 * x * r + (x / SQRT_2).clamp(-1.0, 1.0).asin()) / PI;
    Ok(v.clamp(0.0, 1.0))
}

/// Semicircle density `√(2−x²)/π`.
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= SQRT_2 {
        0.0
    } else {
        (2.0 - x * x).sqrt() / PI
    }
}

/// Quantiles `θ_{k/n}` with `F(θ_{k/n}) = k/n`, `k = 1..=n`; `θ_{n/n} = √2`.
pub fn classical_locations(n: usize) -> Result<Vec<f64>> {
    Ok(shared_classical_locations(n)?.as_ref().clone())
}

pub(crate) fn shared_classical_locations(n: usize) -> Result<Arc<Vec<f64>>> {
    if n == 0 {
        return Err(SkError::InvalidDimension(0));
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache poisoned").get(&n) {
        return Ok(Arc::clone(v));
    }
    let theta: Vec<f64> = (1..=n).map(|k| semicircle_quantile(k as f64 / n as f64)).collect();
    let theta = Arc::new(theta);
    cache.lock().expect("cache poisoned").insert(n, Arc::clone(&theta));
    Ok(theta)
}

fn semicircle_quantile(p: f64) -> f64 {
    if p >= 1.0 {
        return SQRT_2;
    }
    if p <= 0.0 {
        return -SQRT_2;
    }
    let (mut lo, mut hi) = (-SQRT_2, SQRT_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = semicircle_cdf(mid).expect("mid inside support");
        if (f - p).abs() <= 1e-14 || mid <= lo || mid >= hi {
            return mid;
        }
        if f < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Which measure a Stieltjes transform is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSelector {
    /// The semicircle law.
    Semicircle,
    /// `(1/n) Σ δ_{λ_i}`.
    EmpiricalLambda,
    /// `(1/n) Σ δ_{θ_{i/n}}`.
    ClassicalTheta,
    /// `Σ u_i² δ_{λ_i}`.
    WeightedLambdaU,
    /// `Σ u_i² δ_{θ_{i/n}}`.
    WeightedThetaU,
}

/// Order-`k` derivative (`k ≤ 3`) of the Stieltjes transform `∫ μ(dx)/(l−x)`.
pub fn stieltjes(sel: MeasureSelector, sample: Option<&GoeSample>, l: f64, order: u32) -> Result<f64> {
    if order > 3 {
        return Err(SkError::InvalidInput(format!("order {order} > 3")));
    }
    if sel == MeasureSelector::Semicircle {
        return semicircle_stieltjes(l, order);
    }
    let sample = sample.ok_or_else(|| SkError::InvalidInput(format!("{sel:?} needs a sample")))?;
    let n = sample.n();
    let inv_n = 1.0 / n as f64;
    let theta;
    let (atoms, edge): (&[f64], f64) = match sel {
        MeasureSelector::EmpiricalLambda | MeasureSelector::WeightedLambdaU => {
            (&sample.eigenvalues, sample.lambda_max())
        }
        _ => {
            theta = shared_classical_locations(n)?;
            (theta.as_slice(), SQRT_2)
        }
    };
    if l <= edge {
        return Err(SkError::Pole { l, edge });
    }
    let weighted = matches!(sel, MeasureSelector::WeightedLambdaU | MeasureSelector::WeightedThetaU);
    let sign_fact = [1.0, -1.0, 2.0, -6.0][order as usize];
    let mut acc = 0.0;
    for (i, x) in atoms.iter().enumerate() {
        let w = if weighted { sample.u[i] * sample.u[i] } else { inv_n };
        acc += w / (l - x).powi(order as i32 + 1);
    }
    Ok(sign_fact * acc)
}

/// Semicircle Stieltjes transform and its first three derivatives.
pub fn semicircle_stieltjes(l: f64, order: u32) -> Result<f64> {
    if l < SQRT_2 || (order > 0 && l <= SQRT_2) || !l.is_finite() {
        return Err(SkError::Pole { l, edge: SQRT_2 });
    }
    let d = ((l - SQRT_2) * (l + SQRT_2)).max(0.0);
    let r = d.sqrt();
    let s = 2.0 / (l + r);
    Ok(match order {
        0 => s,
        1 => -s / r,
        2 => 2.0 / (d * r),
        3 => -6.0 * l / (d * d * r),
        _ => return Err(SkError::InvalidInput(format!("order {order} > 3"))),
    })
}

/// Mean and variance of the Gaussian limit of `Σ w(λ_i) − n ∫ w dμ_sc`.
///
/// Uses a 200-point Gauss–Legendre rule per axis after `x = √2 sin φ`.
pub fn linear_stat_clt<W, D>(w: W, dw: D) -> Result<(f64, f64)>
where
    W: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    linear_stat_clt_with(w, dw, 200)
}

/// [`linear_stat_clt`] with a custom node count per axis.
pub fn linear_stat_clt_with<W, D>(w: W, dw: D, nodes: usize) -> Result<(f64, f64)>
where
    W: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let rule = GaussLegendre::new(nodes).map_err(|e| SkError::Numerical(e.to_string()))?;
    let half = 0.5 * PI;
    let pts: Vec<(f64, f64)> = rule
        .iter()
        .map(|(t, wt)| (half * t, half * wt))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|(phi, _)| SQRT_2 * phi.sin()).collect();
    let wx: Vec<f64> = xs.iter().map(|&x| w(x)).collect();
    let dx: Vec<f64> = xs.iter().map(|&x| dw(x)).collect();

    let integral: f64 = pts.iter().zip(&wx).map(|((_, wt), v)| wt * v).sum();
    let mean = 0.25 * (w(SQRT_2) + w(-SQRT_2)) - integral / (2.0 * PI);

    let mut acc = 0.0;
    for (i, (phi, wi)) in pts.iter().enumerate() {
        for (j, (psi, wj)) in pts.iter().enumerate() {
            let q = if i == j || xs[i] == xs[j] {
                dx[i]
            } else {
                (wx[i] - wx[j]) / (xs[i] - xs[j])
            };
            acc += wi * wj * q * q * 2.0 * (1.0 - phi.sin() * psi.sin());
        }
    }
    let var = acc / (2.0 * PI * PI);
    if !mean.is_finite() || !var.is_finite() {
        return Err(SkError::Numerical("non-finite quadrature result".into()));
    }
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn goe_is_reproducible_and_symmetric() {
        let a = sample_goe(3, 42).unwrap();
        let b = sample_goe(3, 42).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j).to_bits(), b.get(i, j).to_bits());
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        assert!(matches!(sample_goe(0, 1), Err(SkError::InvalidDimension(0))));
    }

    #[test]
    fn goe_entry_variances() {
        // off-diagonals N(0, 1/2), diagonal N(0, 1)
        let m = 20_000;
        let (mut off, mut diag) = (0.0, 0.0);
        for s in 0..m {
            let j = sample_goe(2, s).unwrap();
            off += j.get(0, 1).powi(2);
            diag += j.get(0, 0).powi(2);
        }
        let (off, diag) = (off / m as f64, diag / m as f64);
        // se of a chi-square mean: sqrt(2/m) * sigma^2
        assert!((off - 0.5).abs() < 4.0 * 0.5 * (2.0 / m as f64).sqrt(), "off {off}");
        assert!((diag - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt(), "diag {diag}");
    }

    #[test]
    fn n1_sample_is_the_entry() {
        let j = sample_goe(1, 9).unwrap();
        for mode in [SpectralMode::Rotate, SpectralMode::Invariance] {
            let s = sample_spectral_model(1, 9, mode).unwrap();
            assert!((s.eigenvalues[0] - j.get(0, 0)).abs() < 1e-15);
            assert!((s.u[0].abs() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rotate_mode_diagonalises() {
        let n = 12;
        let j = sample_goe(n, 5).unwrap();
        let s = sample_spectral_model(n, 5, SpectralMode::Rotate).unwrap();
        // e1ᵀ (J/√n) e1 = Σ u_i² λ_i
        let lhs = j.get(0, 0) / (n as f64).sqrt();
        let rhs: f64 = s.u.iter().zip(&s.eigenvalues).map(|(u, l)| u * u * l).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        // trace
        let tr: f64 = (0..n).map(|i| j.get(i, i)).sum::<f64>() / (n as f64).sqrt();
        assert!((tr - s.eigenvalues.iter().sum::<f64>()).abs() < 1e-11);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invariance_mode_keeps_gaussians() {
        let s = sample_spectral_model(50, 3, SpectralMode::Invariance).unwrap();
        let g = s.gaussians.as_ref().unwrap();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (gi, ui) in g.iter().zip(&s.u) {
            assert!((gi / norm - ui).abs() < 1e-15);
        }
        assert!((s.u.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_are_split() {
        let s = GoeSample::from_parts(vec![1.0, 1.0, 0.0], vec![0.6, 0.0, 0.8]).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        assert!(s.eigenvalues[2] > s.eigenvalues[1]);
        assert_eq!(s.u[0], 0.8);
    }

    #[test]
    fn top_eigenvalue_near_edge() {
        let m = 100;
        let mean: f64 = (0..m)
            .map(|s| sample_spectral_model(500, 1000 + s, SpectralMode::Invariance).unwrap().lambda_max())
            .sum::<f64>()
            / m as f64;
        assert!((mean - SQRT_2).abs() < 0.1, "mean top eigenvalue {mean}");
    }

    #[test]
    fn cdf_values() {
        assert!((semicircle_cdf(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((semicircle_cdf(SQRT_2).unwrap() - 1.0).abs() < 1e-15);
        assert!(semicircle_cdf(1.5).is_err());
        // quadrature oracle on [-√2, 1] with x = √2 sin φ
        let rule = GaussLegendre::new(120).unwrap();
        let (a, b) = (-0.5 * PI, (1.0 / SQRT_2).asin());
        let q = rule.integrate(a, b, |p| 2.0 * p.cos() * p.cos() / PI);
        assert!((semicircle_cdf(1.0).unwrap() - q).abs() < 1e-10);
    }

    #[test]
    fn classical_location_shapes() {
        assert_eq!(classical_locations(1).unwrap(), vec![SQRT_2]);
        let t2 = classical_locations(2).unwrap();
        assert!(t2[0].abs() < 1e-13 && t2[1] == SQRT_2);
        let t4 = classical_locations(4).unwrap();
        assert!(t4[1].abs() < 1e-13);
        assert!((t4[0] + t4[2]).abs() < 1e-13);
    }

    #[test]
    fn semicircle_closed_forms() {
        assert!((semicircle_stieltjes(SQRT_2, 0).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((semicircle_stieltjes(1.5, 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((semicircle_stieltjes(1.5, 2).unwrap() - 16.0).abs() < 1e-12);
        assert!(semicircle_stieltjes(1.0, 0).is_err());
        assert!(semicircle_stieltjes(SQRT_2, 1).is_err());
    }

    #[test]
    fn single_atom_transform() {
        let s = GoeSample::from_parts(vec![0.3], vec![1.0]).unwrap();
        let v = stieltjes(MeasureSelector::WeightedLambdaU, Some(&s), 2.0, 0).unwrap();
        assert!((v - 1.0 / 1.7).abs() < 1e-15);
        assert!(stieltjes(MeasureSelector::WeightedLambdaU, Some(&s), 0.3, 0).is_err());
        assert!(stieltjes(MeasureSelector::EmpiricalLambda, None, 2.0, 0).is_err());
    }

    #[test]
    fn derivative_consistency_all_selectors() {
        let s = sample_spectral_model(40, 11, SpectralMode::Invariance).unwrap();
        let sels = [
            MeasureSelector::Semicircle,
            MeasureSelector::EmpiricalLambda,
            MeasureSelector::ClassicalTheta,
            MeasureSelector::WeightedLambdaU,
            MeasureSelector::WeightedThetaU,
        ];
        for sel in sels {
            let l = s.lambda_max().max(SQRT_2) + 0.7;
            for k in 0..3 {
                let h = 1e-4;
                let fd = (stieltjes(sel, Some(&s), l + h, k).unwrap()
                    - stieltjes(sel, Some(&s), l - h, k).unwrap())
                    / (2.0 * h);
                let exact = stieltjes(sel, Some(&s), l, k + 1).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{sel:?} k={k}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn rigidity_smoke() {
        let theta = classical_locations(1000).unwrap();
        let mut ok = 0;
        for t in 0..100 {
            let s = sample_spectral_model(1000, 7_000 + t, SpectralMode::Invariance).unwrap();
            let dev = s
                .eigenvalues
                .iter()
                .zip(theta.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dev < 0.1 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "rigidity held in {ok}/100");
    }

    #[test]
    fn weighted_lln() {
        // away from the edge the 0.05 bound holds with room to spare; at
        // l = 1.6 the spread is ~0.029, so check it against 2(-s' - s^2)/n
        let mut ok = 0;
        let mut dev = Vec::new();
        for t in 0..100 {
            let s = sample_spectral_model(1000, 9_000 + t, SpectralMode::Invariance).unwrap();
            let good = [2.0, 3.0].iter().all(|&l| {
                let a = stieltjes(MeasureSelector::WeightedLambdaU, Some(&s), l, 0).unwrap();
                (a - semicircle_stieltjes(l, 0).unwrap()).abs() < 0.05
            });
            if good {
                ok += 1;
            }
            let a = stieltjes(MeasureSelector::WeightedLambdaU, Some(&s), 1.6, 0).unwrap();
            dev.push(a - semicircle_stieltjes(1.6, 0).unwrap());
        }
        assert!(ok >= 95, "weighted LLN held in {ok}/100");
        let s0 = semicircle_stieltjes(1.6, 0).unwrap();
        let s1 = semicircle_stieltjes(1.6, 1).unwrap();
        let sd_theory = (2.0 * (-s1 - s0 * s0) / 1000.0).sqrt();
        let mean = dev.iter().sum::<f64>() / 100.0;
        let sd = (dev.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((sd / sd_theory - 1.0).abs() < 0.2, "sd {sd} vs {sd_theory}");
        assert!(mean.abs() < 4.0 * sd_theory / 10.0, "mean {mean}");
    }

    #[test]
    fn clt_identity_and_constant() {
        let (m, v) = linear_stat_clt(|x| x, |_| 1.0).unwrap();
        assert!(m.abs() < 1e-8 && (v - 1.0).abs() < 1e-8, "({m}, {v})");
        let (m, v) = linear_stat_clt(|_| 1.0, |_| 0.0).unwrap();
        assert!(m.abs() < 1e-12 && v.abs() < 1e-12);
    }

    #[test]
    fn clt_resolvent_matches_closed_form() {
        let l: f64 = 2.0;
        let (m, v) = linear_stat_clt(|x| 1.0 / (l - x), |x| 1.0 / (l - x).powi(2)).unwrap();
        let d = l * l - 2.0;
        let mean = (l - d.sqrt()) / (2.0 * d);
        assert!((m - mean).abs() < 1e-8, "{m} vs {mean}");
        assert!((v - 1.0 / (d * d)).abs() < 1e-8, "{v}");
    }

    proptest! {
        #[test]
        fn semicircle_quadratic_identity(l in 1.4143f64..10.0) {
            let s = semicircle_stieltjes(l, 0).unwrap();
            prop_assert!((s * s - 2.0 * l * s + 2.0).abs() < 1e-12);
        }

        #[test]
        fn quantile_round_trip(n in 1usize..300, frac in 0.0f64..1.0) {
            let theta = classical_locations(n).unwrap();
            let k = ((frac * n as f64) as usize).min(n - 1);
            let f = semicircle_cdf(theta[k]).unwrap();
            prop_assert!((f - (k + 1) as f64 / n as f64).abs() < 1e-12);
            prop_assert!(theta.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
