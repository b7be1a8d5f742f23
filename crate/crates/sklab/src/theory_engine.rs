//! Closed-form limit theory: the functionals `B` and `B̃`, their maximisers for
//! monomial spikes and the TAP radial term, phase boundaries, and the second
//! order fluctuation constants.
//!
//! Throughout, `ẑ = √(2(1−α̂²))` and `l̂ = (2−α̂²)/ẑ`, so that `s(l̂) = ẑ` for the
//! semicircle transform `s`.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SkError};
use crate::numeric::{bisect_increasing, diff1, diff2, golden_max};
use crate::rmt_core::semicircle_stieltjes;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied spike `f` with its first three derivatives.
#[derive(Clone)]
pub struct CustomSpike {
    name: String,
    fns: [Scalar; 4],
}

/// The spike function `f : [-1, 1] → ℝ`.
#[derive(Clone)]
pub enum SpikeSpec {
    /// `f(x) = h x^k`.
    Monomial { h: f64, k: u32 },
    Custom(CustomSpike),
}

impl fmt::Debug for SpikeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Monomial { h, k } => write!(f, "Monomial {{ h: {h}, k: {k} }}"),
            Self::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl fmt::Display for SpikeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Monomial { h, k } => write!(f, "monomial:{k}:{h:?}"),
            Self::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for SpikeSpec {
    type Err = SkError;

    /// Parses `monomial:K:H`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["monomial", k, h] => {
                let k: u32 = k.trim().parse().map_err(|_| SkError::InvalidInput(format!("bad degree in {s:?}")))?;
                let h: f64 = h.trim().parse().map_err(|_| SkError::InvalidInput(format!("bad coefficient in {s:?}")))?;
                SpikeSpec::monomial(h, k)
            }
            _ => Err(SkError::InvalidInput(format!("unrecognised spike {s:?}; expected monomial:K:H"))),
        }
    }
}

impl Serialize for SpikeSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SpikeSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl SpikeSpec {
    pub fn monomial(h: f64, k: u32) -> Result<Self> {
        if !h.is_finite() {
            return Err(SkError::InvalidInput(format!("coefficient {h} is not finite")));
        }
        if k == 0 {
            return Err(SkError::InvalidInput("degree must be >= 1".into()));
        }
        Ok(Self::Monomial { h, k })
    }

    /// Wraps user callables, checking each derivative against a central
    /// difference of the previous one (relative tolerance `1e-5`).
    pub fn custom<F0, F1, F2, F3>(name: &str, f: F0, d1: F1, d2: F2, d3: F3) -> Result<Self>
    where
        F0: Fn(f64) -> f64 + Send + Sync + 'static,
        F1: Fn(f64) -> f64 + Send + Sync + 'static,
        F2: Fn(f64) -> f64 + Send + Sync + 'static,
        F3: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let fns: [Scalar; 4] = [Arc::new(f), Arc::new(d1), Arc::new(d2), Arc::new(d3)];
        let step = 1e-4;
        for i in 0..=18 {
            let x = -0.9 + 0.1 * i as f64;
            for o in 0..3 {
                let fd = diff1(|t| fns[o](t), x, step);
                let exact = fns[o + 1](x);
                if !exact.is_finite() || (fd - exact).abs() > 1e-5 * exact.abs().max(1.0) {
                    return Err(SkError::InvalidInput(format!(
                        "derivative {} of {name:?} disagrees with finite differences at x = {x}: {exact} vs {fd}",
                        o + 1
                    )));
                }
            }
        }
        Ok(Self::Custom(CustomSpike { name: name.to_string(), fns }))
    }

    /// `(h, k)` for monomials.
    pub fn as_monomial(&self) -> Option<(f64, u32)> {
        match self {
            Self::Monomial { h, k } => Some((*h, *k)),
            Self::Custom(_) => None,
        }
    }

    /// Derivative of order `d` (0..=3) at `x`.
    pub fn eval(&self, x: f64, d: u32) -> f64 {
        match self {
            Self::Monomial { h, k } => {
                if d > *k {
                    return 0.0;
                }
                let falling: f64 = (0..d).map(|j| (*k - j) as f64).product();
                h * falling * x.powi((*k - d) as i32)
            }
            Self::Custom(c) => c.fns[d.min(3) as usize](x),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x, 0)
    }

    /// Even monomials produce a `±α̂` pair of maximisers.
    pub fn is_even(&self) -> bool {
        matches!(self, Self::Monomial { k, .. } if k % 2 == 0)
    }
}

/// A user-supplied radial term `g` with two derivatives on `[lo, hi]`.
#[derive(Clone)]
pub struct CustomRadial {
    name: String,
    fns: [Scalar; 3],
    domain: (f64, f64),
}

/// The radial term `g(r)` of the ball problem.
#[derive(Clone)]
pub enum RadialSpec {
    /// `g(r) = ½ log(1−r²) + (β²/2)(1−r²)²` on the Plefka region.
    Tap { beta: f64 },
    Custom(CustomRadial),
}

impl fmt::Debug for RadialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tap { beta } => write!(f, "Tap {{ beta: {beta} }}"),
            Self::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl fmt::Display for RadialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tap { beta } => write!(f, "tap:{beta:?}"),
            Self::Custom(c) => write!(f, "custom:{}", c.name),
        }
    }
}

impl FromStr for RadialSpec {
    type Err = SkError;

    /// Parses `tap:BETA`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("tap", b)) => {
                let beta: f64 = b.trim().parse().map_err(|_| SkError::InvalidInput(format!("bad beta in {s:?}")))?;
                RadialSpec::tap(beta)
            }
            _ => Err(SkError::InvalidInput(format!("unrecognised radial term {s:?}; expected tap:BETA"))),
        }
    }
}

impl Serialize for RadialSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RadialSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RadialSpec {
    pub fn tap(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SkError::Domain { what: "beta", value: beta });
        }
        Ok(Self::Tap { beta })
    }

    /// Wraps user callables defined on `[lo, hi] ⊆ [0, 1]`.
    pub fn custom<G0, G1, G2>(name: &str, domain: (f64, f64), g: G0, d1: G1, d2: G2) -> Result<Self>
    where
        G0: Fn(f64) -> f64 + Send + Sync + 'static,
        G1: Fn(f64) -> f64 + Send + Sync + 'static,
        G2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let (lo, hi) = domain;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(SkError::InvalidInput(format!("radius domain [{lo}, {hi}] not inside [0, 1]")));
        }
        Ok(Self::Custom(CustomRadial {
            name: name.to_string(),
            fns: [Arc::new(g), Arc::new(d1), Arc::new(d2)],
            domain,
        }))
    }

    /// Lower Plefka bound `q_P = max(1 − 1/(√2 β), 0)` for TAP.
    pub fn plefka_qp(&self) -> Option<f64> {
        match self {
            Self::Tap { beta } => Some(tap_qp(*beta)),
            Self::Custom(_) => None,
        }
    }

    /// Admissible radius interval `R`.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::Tap { beta } => (tap_qp(*beta).sqrt(), 1.0),
            Self::Custom(c) => c.domain,
        }
    }

    /// Derivative of order `d` (0..=2) at `r`.
    pub fn eval(&self, r: f64, d: u32) -> f64 {
        match self {
            Self::Tap { beta } => {
                let b2 = beta * beta;
                let q = 1.0 - r * r;
                match d {
                    0 => 0.5 * q.ln() + 0.5 * b2 * q * q,
                    1 => -r / q - 2.0 * b2 * r * q,
                    _ => -(1.0 + r * r) / (q * q) - 2.0 * b2 * (1.0 - 3.0 * r * r),
                }
            }
            Self::Custom(c) => c.fns[d.min(2) as usize](r),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r, 0)
    }
}

fn tap_qp(beta: f64) -> f64 {
    (1.0 - 1.0 / (SQRT_2 * beta)).max(0.0)
}

/// TAP value on the `α = 0` boundary: `F(β)`.
pub fn tap_boundary_value(beta: f64) -> f64 {
    if beta <= 1.0 / SQRT_2 {
        0.5 * beta * beta
    } else {
        SQRT_2 * beta - 0.75 - 0.5 * (SQRT_2 * beta).ln()
    }
}

/// One or two global maximisers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Multiplicity {
    Single,
    Pair,
}

/// Maximiser data for the sphere or ball variational problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingOrder {
    pub alpha_hat: f64,
    pub r_hat: Option<f64>,
    pub l_hat: f64,
    pub z_hat: f64,
    /// Limit of `L_N / N` (or `L̃_N / N`).
    pub value: f64,
    pub multiplicity: Multiplicity,
    /// False when the maximiser sits at `α̂ = 0` or on the radius boundary,
    /// where the Gaussian fluctuation constants do not apply.
    pub fluctuation_applicable: bool,
}

impl LeadingOrder {
    fn from_alpha(alpha: f64, r: Option<f64>, value: f64, multiplicity: Multiplicity, applicable: bool) -> Self {
        let z = z_hat(alpha);
        Self {
            alpha_hat: alpha,
            r_hat: r,
            l_hat: (2.0 - alpha * alpha) / z,
            z_hat: z,
            value,
            multiplicity,
            fluctuation_applicable: applicable,
        }
    }
}

/// `ẑ = √(2(1−α²))`.
pub fn z_hat(alpha: f64) -> f64 {
    (2.0 * (1.0 - alpha * alpha)).max(0.0).sqrt()
}

/// `l̂ = (2−α²)/ẑ`.
pub fn l_hat(alpha: f64) -> f64 {
    (2.0 - alpha * alpha) / z_hat(alpha)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(SkError::Domain { what: "beta", value: beta })
    }
}

/// `B(α) = f(α) + β√(2(1−α²))`.
pub fn evaluate_b(alpha: f64, beta: f64, f: &SpikeSpec) -> Result<f64> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(SkError::Domain { what: "alpha", value: alpha });
    }
    Ok(f.value(alpha) + beta * z_hat(alpha))
}

/// `B̃(α, r) + g(r) = f(rα) + g(r) + βr²√(2(1−α²))`.
pub fn evaluate_b_tilde(alpha: f64, r: f64, beta: f64, f: &SpikeSpec, g: &RadialSpec) -> Result<f64> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(SkError::Domain { what: "alpha", value: alpha });
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(SkError::Domain { what: "r", value: r });
    }
    Ok(f.value(r * alpha) + g.value(r) + beta * r * r * z_hat(alpha))
}

/// `B′(α)`.
pub fn b_prime(alpha: f64, beta: f64, f: &SpikeSpec) -> f64 {
    f.eval(alpha, 1) - SQRT_2 * beta * alpha / (1.0 - alpha * alpha).sqrt()
}

/// `B″(α)`.
pub fn b_second(alpha: f64, beta: f64, f: &SpikeSpec) -> f64 {
    f.eval(alpha, 2) - SQRT_2 * beta / (1.0 - alpha * alpha).powf(1.5)
}

/// `(β_c, β̃_c)`; `β_c(1, h) = ∞`, and `β̃_c` exists only for `k ≥ 3`.
pub fn critical_betas(k: u32, h: f64) -> Result<(f64, Option<f64>)> {
    if !(h > 0.0) || k == 0 {
        return Err(SkError::InvalidInput(format!("need h > 0 and k >= 1, got h = {h}, k = {k}")));
    }
    let kf = k as f64;
    Ok(match k {
        1 => (f64::INFINITY, None),
        2 => (SQRT_2 * h, None),
        _ => {
            let bc = h / SQRT_2 * (kf - 1.0) / (kf - 2.0) * (1.0 - 1.0 / ((kf - 1.0) * (kf - 1.0))).powf(kf / 2.0);
            let bt = h * kf / SQRT_2 * (kf - 2.0).powf((kf - 2.0) / 2.0) / (kf - 1.0).powf((kf - 1.0) / 2.0);
            (bc, Some(bt))
        }
    })
}

/// Largest root of `α^{2(k−2)}(1−α²) = 2(β/(hk))²` in `(√((k−2)/(k−1)), 1)`.
///
/// `None` when `β ≥ β̃_c(k, h)` (no interior critical point).
pub fn monomial_interior_root(k: u32, h: f64, beta: f64) -> Option<f64> {
    if k < 3 || !(h > 0.0) || !(beta > 0.0) {
        return None;
    }
    let kf = k as f64;
    let target = 2.0 * (beta / (h * kf)).powi(2);
    let phi = |a: f64| a.powi(2 * (k as i32 - 2)) * (1.0 - a * a);
    let a0 = ((kf - 2.0) / (kf - 1.0)).sqrt();
    if target > phi(a0) {
        return None;
    }
    Some(bisect_increasing(|a| target - phi(a), a0, 1.0, |_| 1e-16))
}

/// Maximises `B` over `[-1, 1]`.
pub fn maximize_sphere_theory(f: &SpikeSpec, beta: f64) -> Result<LeadingOrder> {
    check_beta(beta)?;
    let at_zero = |value: f64| LeadingOrder::from_alpha(0.0, None, value, Multiplicity::Single, false);
    match f {
        SpikeSpec::Monomial { h, k } => {
            let (h, k) = (*h, *k);
            if h == 0.0 {
                return Ok(at_zero(SQRT_2 * beta));
            }
            match k {
                1 => {
                    let s = (h * h + 2.0 * beta * beta).sqrt();
                    Ok(LeadingOrder::from_alpha(h / s, None, s, Multiplicity::Single, true))
                }
                2 => {
                    if h > 0.0 && beta < SQRT_2 * h {
                        let a = (1.0 - beta * beta / (2.0 * h * h)).sqrt();
                        Ok(LeadingOrder::from_alpha(a, None, h + beta * beta / (2.0 * h), Multiplicity::Pair, true))
                    } else {
                        Ok(at_zero(SQRT_2 * beta))
                    }
                }
                _ => {
                    let even = k % 2 == 0;
                    if even && h < 0.0 {
                        return Ok(at_zero(SQRT_2 * beta));
                    }
                    let b0 = SQRT_2 * beta;
                    match monomial_interior_root(k, h.abs(), beta) {
                        Some(root) => {
                            let a = if h < 0.0 { -root } else { root };
                            let v = evaluate_b(a, beta, f)?;
                            if v > b0 {
                                let m = if even { Multiplicity::Pair } else { Multiplicity::Single };
                                Ok(LeadingOrder::from_alpha(a, None, v, m, true))
                            } else {
                                Ok(at_zero(b0))
                            }
                        }
                        None => Ok(at_zero(b0)),
                    }
                }
            }
        }
        SpikeSpec::Custom(_) => maximize_sphere_numeric(f, beta),
    }
}

fn maximize_sphere_numeric(f: &SpikeSpec, beta: f64) -> Result<LeadingOrder> {
    let npts = 2001;
    let grid: Vec<f64> = (0..npts).map(|i| -1.0 + 2.0 * i as f64 / (npts - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&a| f.value(a) + beta * z_hat(a)).collect();
    let mut order: Vec<usize> = (0..npts).filter(|i| vals[*i].is_finite()).collect();
    if order.is_empty() {
        return Err(SkError::Numerical("B is not finite anywhere on the grid".into()));
    }
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut best = (grid[order[0]], vals[order[0]]);
    for &i in order.iter().take(3) {
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(npts - 1)];
        let (a, v) = golden_max(|a| f.value(a) + beta * z_hat(a), lo, hi, 1e-12);
        if v > best.1 || (v == best.1 && a < best.0) {
            best = (a, v);
        }
    }
    let (mut a, mut v) = best;
    // Newton polish on B′ for interior points
    for _ in 0..20 {
        if a.abs() >= 1.0 - 1e-9 {
            break;
        }
        let d1 = b_prime(a, beta, f);
        let d2 = b_second(a, beta, f);
        if d1.abs() < 1e-13 || d2 >= 0.0 {
            break;
        }
        let next = a - d1 / d2;
        if !(next.abs() < 1.0) {
            break;
        }
        let nv = f.value(next) + beta * z_hat(next);
        if nv + 1e-15 < v {
            break;
        }
        a = next;
        v = nv;
    }
    let mirror = f.value(-a) + beta * z_hat(-a);
    let pair = a.abs() > 1e-8 && (mirror - v).abs() <= 1e-12 * v.abs().max(1.0);
    let m = if pair { Multiplicity::Pair } else { Multiplicity::Single };
    let applicable = a.abs() > 1e-8 && a.abs() < 1.0 && b_second(a, beta, f) < 0.0;
    Ok(LeadingOrder::from_alpha(a, None, v, m, applicable))
}

/// Root of `T(q) = 1/(hk)` right of the unique critical point of
/// `T(q) = (1−q)(q(1−2β²(1−q)²))^{(k−2)/2}` on `(q_P, 1)`.
fn tap_t_root(k: u32, h: f64, beta: f64) -> Option<f64> {
    let qp = tap_qp(beta);
    let b2 = beta * beta;
    let t = |q: f64| {
        let inner = q * (1.0 - 2.0 * b2 * (1.0 - q).powi(2));
        (1.0 - q) * inner.max(0.0).powf((k as f64 - 2.0) / 2.0)
    };
    let (qmax, tmax) = golden_max(t, qp, 1.0, 1e-14);
    let target = 1.0 / (h * k as f64);
    if tmax < target {
        return None;
    }
    Some(bisect_increasing(|q| target - t(q), qmax, 1.0, |_| 1e-16))
}

/// Maximises `B̃(α, r) + g(r)` over `[-1, 1] × R`.
pub fn maximize_ball_theory(f: &SpikeSpec, g: &RadialSpec, beta: f64) -> Result<LeadingOrder> {
    check_beta(beta)?;
    let tap_beta = match g {
        RadialSpec::Tap { beta: gb } if (gb - beta).abs() <= 1e-15 * beta => Some(*gb),
        _ => None,
    };
    let (Some(_), Some((h, k))) = (tap_beta, f.as_monomial()) else {
        return maximize_ball_numeric(f, g, beta);
    };
    let qp = tap_qp(beta);
    let b2 = beta * beta;
    let boundary = LeadingOrder::from_alpha(0.0, Some(qp.sqrt()), tap_boundary_value(beta), Multiplicity::Single, false);
    match k {
        1 => {
            if h == 0.0 {
                return Ok(boundary);
            }
            let psi = |q: f64| q - (1.0 - q).powi(2) * (h * h + 2.0 * q * b2);
            if psi(qp) >= 0.0 {
                return maximize_ball_numeric(f, g, beta);
            }
            let q = bisect_increasing(psi, qp, 1.0, |_| 1e-16);
            let r = q.sqrt();
            let a = h / (h * h + 2.0 * b2 * q).sqrt();
            let v = (h * h * q + 2.0 * b2 * q * q).sqrt() + 0.5 * (1.0 - q).ln() + 0.5 * b2 * (1.0 - q).powi(2);
            Ok(LeadingOrder::from_alpha(a, Some(r), v, Multiplicity::Single, true))
        }
        2 => {
            if h > 0.5 && beta < SQRT_2 * h {
                let r = (1.0 - 1.0 / (2.0 * h)).sqrt();
                let a = (1.0 - b2 / (2.0 * h * h)).sqrt();
                let v = b2 * (4.0 * h - 1.0) / (8.0 * h * h) + h - 0.5 * (1.0 + (2.0 * h).ln());
                Ok(LeadingOrder::from_alpha(a, Some(r), v, Multiplicity::Pair, true))
            } else {
                Ok(boundary)
            }
        }
        _ => {
            if !(h > 0.0) {
                return Ok(boundary);
            }
            let Some(q) = tap_t_root(k, h, beta) else {
                return Ok(boundary);
            };
            let r = q.sqrt();
            let a = (1.0 - 2.0 * b2 * (1.0 - q).powi(2)).max(0.0).sqrt();
            let v = evaluate_b_tilde(a, r, beta, f, g)?;
            if v > boundary.value {
                let m = if k % 2 == 0 { Multiplicity::Pair } else { Multiplicity::Single };
                Ok(LeadingOrder::from_alpha(a, Some(r), v, m, true))
            } else {
                Ok(boundary)
            }
        }
    }
}

fn maximize_ball_numeric(f: &SpikeSpec, g: &RadialSpec, beta: f64) -> Result<LeadingOrder> {
    let (rlo, rhi) = g.domain();
    let obj = |a: f64, r: f64| {
        let v = f.value(r * a) + g.value(r) + beta * r * r * z_hat(a);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let na = 201;
    let nr = 201;
    let alphas: Vec<f64> = (0..na).map(|i| -1.0 + 2.0 * i as f64 / (na - 1) as f64).collect();
    let radii: Vec<f64> = (0..nr).map(|j| rlo + (rhi - rlo) * j as f64 / (nr - 1) as f64).collect();
    let mut best = (0.0, rlo, f64::NEG_INFINITY);
    let mut best_idx = (0, 0);
    for (i, &a) in alphas.iter().enumerate() {
        for (j, &r) in radii.iter().enumerate() {
            let v = obj(a, r);
            if v > best.2 {
                best = (a, r, v);
                best_idx = (i, j);
            }
        }
    }
    if !best.2.is_finite() {
        return Err(SkError::Numerical("B̃ + g is not finite anywhere on the grid".into()));
    }
    let (mut a, mut r, mut v) = best;
    let mut da = 2.0 / (na - 1) as f64;
    let mut dr = (rhi - rlo) / (nr - 1) as f64;
    let _ = best_idx;
    for _ in 0..60 {
        let (na_, va) = golden_max(|x| obj(x, r), (a - da).max(-1.0), (a + da).min(1.0), 1e-14);
        if va >= v {
            a = na_;
            v = va;
        }
        if rhi > rlo {
            let (nr_, vr) = golden_max(|y| obj(a, y), (r - dr).max(rlo), (r + dr).min(rhi), 1e-14);
            if vr >= v {
                r = nr_;
                v = vr;
            }
        }
        da = (da * 0.7).max(1e-9);
        dr = (dr * 0.7).max(1e-9);
    }
    let mirror = obj(-a, r);
    let pair = a.abs() > 1e-8 && (mirror - v).abs() <= 1e-12 * v.abs().max(1.0);
    let m = if pair { Multiplicity::Pair } else { Multiplicity::Single };
    let interior_r = r > rlo + 1e-8 && r < rhi - 1e-8;
    Ok(LeadingOrder::from_alpha(a, Some(r), v, m, a.abs() > 1e-8 && interior_r))
}

/// Threshold `h_c(k, β)`: infimum over the interior of the Plefka region of
/// `[F(β) − g(r) − 2β²r²(1−r²)] / (r√(1−2β²(1−r²)²))^k`.
pub fn tap_threshold(k: u32, beta: f64) -> Result<f64> {
    if k < 3 {
        return Err(SkError::InvalidInput(format!("threshold defined for k >= 3, got {k}")));
    }
    check_beta(beta)?;
    let g = RadialSpec::tap(beta)?;
    let b2 = beta * beta;
    let fb = tap_boundary_value(beta);
    let w = |r: f64| {
        let q = 1.0 - r * r;
        let num = fb - g.value(r) - 2.0 * b2 * r * r * q;
        let den = (r * (1.0 - 2.0 * b2 * q * q).max(0.0).sqrt()).powi(k as i32);
        num / den
    };
    let (lo, hi) = g.domain();
    let (a, b) = (lo + 1e-6, hi - 1e-6);
    let npts = 2001;
    let mut best: Option<(usize, f64)> = None;
    let grid: Vec<f64> = (0..npts).map(|i| a + (b - a) * i as f64 / (npts - 1) as f64).collect();
    for (i, &r) in grid.iter().enumerate() {
        let v = w(r);
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((i, v));
        }
    }
    let (i, v) = best.ok_or_else(|| SkError::Numerical("threshold integrand not finite on grid".into()))?;
    let lo_r = grid[i.saturating_sub(1)];
    let hi_r = grid[(i + 1).min(npts - 1)];
    let (_, neg) = golden_max(|r| -w(r), lo_r, hi_r, 1e-14);
    Ok(v.min(-neg))
}

/// Second-order constants for the ground-state expansion.
///
/// `g` is the matrix in the closed-form display; `g_dual = wwᵀ/h_ll` is the
/// contribution of the curvature in the dual variable. The expansion of the
/// min-max value uses their sum, see [`FluctuationParams::g_full`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationParams {
    pub kappa: f64,
    pub g: [[f64; 2]; 2],
    pub g_dual: [[f64; 2]; 2],
    pub var_u: f64,
    pub var_uprime: f64,
    pub cov_u_uprime: f64,
    pub lambda_mean: f64,
    pub lambda_var: f64,
    /// Limiting covariance of `(W_N, W′_N)` at `l̂`.
    pub sigma: [[f64; 2]; 2],
}

/// Which quadratic matrix a residual subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GForm {
    /// `g + g_dual`: the full second-order term of the min-max value.
    #[default]
    Full,
    /// `g` alone, as in the closed-form display.
    Displayed,
}

impl FluctuationParams {
    pub fn g_full(&self) -> [[f64; 2]; 2] {
        add2(&self.g, &self.g_dual)
    }

    pub fn g_for(&self, form: GForm) -> [[f64; 2]; 2] {
        match form {
            GForm::Full => self.g_full(),
            GForm::Displayed => self.g,
        }
    }
}

fn add2(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

/// Laws of `(U, U′)` and `Λ` at `α̂`, and the `W` covariance from the
/// semicircle transform at `l̂`.
fn gaussian_laws(alpha: f64) -> Result<(f64, f64, f64, f64, f64, [[f64; 2]; 2])> {
    let a2 = alpha * alpha;
    let z = z_hat(alpha);
    let var_u = z.powi(4) / a2;
    let var_up = z.powi(6) * (2.0 + a2 + a2 * a2) / alpha.powi(10);
    let cov = -z.powi(5) * (1.0 + a2) / alpha.powi(6);
    let lambda_mean = z.powi(3) / (2.0 * a2 * a2);
    let lambda_var = z.powi(4) / alpha.powi(8);
    let l = l_hat(alpha);
    let s0 = semicircle_stieltjes(l, 0)?;
    let s1 = semicircle_stieltjes(l, 1)?;
    let s2 = semicircle_stieltjes(l, 2)?;
    let s3 = semicircle_stieltjes(l, 3)?;
    let c12 = -s2 - 2.0 * s0 * s1;
    let sigma = [[-2.0 * s1 - 2.0 * s0 * s0, c12], [c12, -s3 / 3.0 - 2.0 * s1 * s1]];
    Ok((var_u, var_up, cov, lambda_mean, lambda_var, sigma))
}

/// `wwᵀ/h_ll` with `w = (βr²/ẑ)(2, α²/ẑ)` and `h_ll = βr²ẑ³/α⁴`.
fn dual_term(alpha: f64, r: f64, beta: f64) -> [[f64; 2]; 2] {
    let z = z_hat(alpha);
    let a2 = alpha * alpha;
    let c = beta * r * r * a2 * a2 / z.powi(5);
    let off = c * 2.0 * a2 / z;
    [[4.0 * c, off], [off, c * a2 * a2 / (z * z)]]
}

fn require_alpha(alpha: f64) -> Result<()> {
    if alpha == 0.0 || !(alpha.abs() < 1.0) {
        return Err(SkError::Inapplicable(format!("fluctuation constants need 0 < |α̂| < 1, got {alpha}")));
    }
    Ok(())
}

/// Constants for the sphere from the maximiser `lo` of `B`.
pub fn fluct_params_sphere(f: &SpikeSpec, beta: f64, lo: &LeadingOrder) -> Result<FluctuationParams> {
    check_beta(beta)?;
    let a = lo.alpha_hat;
    require_alpha(a)?;
    let bpp = b_second(a, beta, f);
    if !(bpp < 0.0) {
        return Err(SkError::Inapplicable(format!("B''(α̂) = {bpp} is not negative")));
    }
    let z = z_hat(a);
    let a2 = a * a;
    let a4 = a2 * a2;
    let c = 8.0 * beta * beta * a2 / (z.powi(8) * bpp);
    let g = [
        [2.0 * c + 2.0 * beta * a2 / z.powi(3), c * a4 / z],
        [c * a4 / z, c * a4 * a4 / (2.0 * z * z)],
    ];
    let (var_u, var_uprime, cov_u_uprime, lambda_mean, lambda_var, sigma) = gaussian_laws(a)?;
    Ok(FluctuationParams {
        kappa: beta * a2 / (z * z),
        g,
        g_dual: dual_term(a, 1.0, beta),
        var_u,
        var_uprime,
        cov_u_uprime,
        lambda_mean,
        lambda_var,
        sigma,
    })
}

/// Hessian of `B̃(α, r) + g(r)` in `(α, r)`.
pub fn ball_hessian(alpha: f64, r: f64, beta: f64, f: &SpikeSpec, g: &RadialSpec) -> [[f64; 2]; 2] {
    let x = r * alpha;
    let q = 1.0 - alpha * alpha;
    let f1 = f.eval(x, 1);
    let f2 = f.eval(x, 2);
    let aa = r * r * f2 - SQRT_2 * beta * r * r / q.powf(1.5);
    let ar = f1 + x * f2 - 2.0 * SQRT_2 * beta * r * alpha / q.sqrt();
    let rr = alpha * alpha * f2 + 2.0 * SQRT_2 * beta * q.sqrt() + g.eval(r, 2);
    [[aa, ar], [ar, rr]]
}

/// `K` for the ball, rows indexed by `(α, r)`.
pub fn ball_k_matrix(alpha: f64, r: f64, beta: f64) -> [[f64; 2]; 2] {
    let z = z_hat(alpha);
    let c = 2.0 * beta * r * alpha / (z * z);
    [
        [c * 2.0 * r / (z * z), c * r * alpha.powi(4) / z.powi(3)],
        [c * alpha, 0.0],
    ]
}

/// Constants for the ball from the interior maximiser `lo` of `B̃ + g`.
pub fn fluct_params_ball(f: &SpikeSpec, g: &RadialSpec, beta: f64, lo: &LeadingOrder) -> Result<FluctuationParams> {
    check_beta(beta)?;
    let a = lo.alpha_hat;
    require_alpha(a)?;
    let r = lo
        .r_hat
        .ok_or_else(|| SkError::Inapplicable("ball constants need a radius".into()))?;
    if r == 0.0 {
        return Err(SkError::Inapplicable("r̂ = 0".into()));
    }
    let j = ball_hessian(a, r, beta, f, g);
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let tr = j[0][0] + j[1][1];
    if !(det > 0.0 && tr < 0.0) {
        return Err(SkError::Inapplicable(format!("Hessian not negative definite (det {det}, trace {tr})")));
    }
    let k = ball_k_matrix(a, r, beta);
    let jinv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let mut g_mat = [[0.0; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            let mut acc = 0.0;
            for i in 0..2 {
                for m in 0..2 {
                    acc += k[i][p] * jinv[i][m] * k[m][q];
                }
            }
            g_mat[p][q] = acc;
        }
    }
    let z = z_hat(a);
    let a2 = a * a;
    g_mat[0][0] += 2.0 * beta * r * r * a2 / z.powi(3);
    let sym = 0.5 * (g_mat[0][1] + g_mat[1][0]);
    g_mat[0][1] = sym;
    g_mat[1][0] = sym;
    let (var_u, var_uprime, cov_u_uprime, lambda_mean, lambda_var, sigma) = gaussian_laws(a)?;
    Ok(FluctuationParams {
        kappa: beta * r * r * a2 / (z * z),
        g: g_mat,
        g_dual: dual_term(a, r, beta),
        var_u,
        var_uprime,
        cov_u_uprime,
        lambda_mean,
        lambda_var,
        sigma,
    })
}

/// Derivatives of the local saddle function `h(y, l, g)` at the critical point.
///
/// Mixed `l`-derivatives are taken along `g = s(l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericMinimaxInput {
    pub h_value: f64,
    pub h_g: f64,
    pub h_gg: f64,
    pub h_y_g: Vec<f64>,
    pub h_l_g: f64,
    pub h_l_l: f64,
    pub h_l_y: Vec<f64>,
    /// `∇²B(ŷ)`, row-major.
    pub hessian_b: Vec<Vec<f64>>,
}

/// Output of the generic min-max expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericMinimaxParams {
    pub e1: f64,
    /// Coefficient of `Λ_N` (and of `√N U_N`).
    pub e2: f64,
    pub e3: f64,
    /// `K = L − h_{l,y} wᵀ / h_ll`, one row per coordinate of `y`.
    pub k: Vec<[f64; 2]>,
    /// `KᵀJ⁻¹K`.
    pub h_minimax: [[f64; 2]; 2],
    /// `wwᵀ/h_ll`.
    pub h_dual: [[f64; 2]; 2],
    /// `H = KᵀJ⁻¹K + wwᵀ/h_ll`.
    pub h: [[f64; 2]; 2],
    /// `G = H − diag(E3, 0)`; the second-order term is `E2 Λ − ½ WᵀGW`.
    pub g: [[f64; 2]; 2],
}

impl GenericMinimaxParams {
    /// `KᵀJ⁻¹K − diag(E3, 0)`, the matrix without the dual-curvature term.
    pub fn g_without_dual(&self) -> [[f64; 2]; 2] {
        let mut g = self.h_minimax;
        g[0][0] -= self.e3;
        g
    }
}

/// Computes `E1, E2, E3, K, H, G` from the saddle derivatives.
pub fn generic_minimax_params(inp: &GenericMinimaxInput) -> Result<GenericMinimaxParams> {
    let d = inp.h_y_g.len();
    if d == 0 || inp.h_l_y.len() != d || inp.hessian_b.len() != d || inp.hessian_b.iter().any(|r| r.len() != d) {
        return Err(SkError::InvalidInput("inconsistent dimensions in minimax input".into()));
    }
    if !(inp.h_l_l > 0.0) {
        return Err(SkError::Inapplicable(format!("h_ll = {} must be positive", inp.h_l_l)));
    }
    let w = [inp.h_l_g, inp.h_g];
    let k: Vec<[f64; 2]> = (0..d)
        .map(|i| {
            [
                inp.h_y_g[i] - inp.h_l_y[i] * w[0] / inp.h_l_l,
                -inp.h_l_y[i] * w[1] / inp.h_l_l,
            ]
        })
        .collect();
    let neg_j = Mat::<f64>::from_fn(d, d, |i, j| -inp.hessian_b[i][j]);
    let llt = neg_j
        .llt(Side::Lower)
        .map_err(|_| SkError::Inapplicable("∇²B is not negative definite".into()))?;
    let kmat = Mat::<f64>::from_fn(d, 2, |i, j| k[i][j]);
    // J⁻¹K = −(−J)⁻¹K
    let sol = llt.solve(&kmat);
    let mut h_minimax = [[0.0; 2]; 2];
    for p in 0..2 {
        for q in 0..2 {
            h_minimax[p][q] = -(0..d).map(|i| k[i][p] * sol[(i, q)]).sum::<f64>();
        }
    }
    let sym = 0.5 * (h_minimax[0][1] + h_minimax[1][0]);
    h_minimax[0][1] = sym;
    h_minimax[1][0] = sym;
    let h_dual = [
        [w[0] * w[0] / inp.h_l_l, w[0] * w[1] / inp.h_l_l],
        [w[1] * w[0] / inp.h_l_l, w[1] * w[1] / inp.h_l_l],
    ];
    let h = add2(&h_minimax, &h_dual);
    let mut g = h;
    g[0][0] -= inp.h_gg;
    Ok(GenericMinimaxParams {
        e1: inp.h_value,
        e2: inp.h_g,
        e3: inp.h_gg,
        k,
        h_minimax,
        h_dual,
        h,
        g,
    })
}

/// Source of the saddle derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeSupply {
    Analytic,
    /// Nested central differences with the given step.
    FiniteDifference { step: f64 },
}

/// Saddle derivatives for the sphere, `h(α, l, g) = f(α) + β(l − α²/g)`.
pub fn sphere_minimax_input(
    f: &SpikeSpec,
    beta: f64,
    lo: &LeadingOrder,
    supply: DerivativeSupply,
) -> Result<GenericMinimaxInput> {
    let a = lo.alpha_hat;
    require_alpha(a)?;
    match supply {
        DerivativeSupply::Analytic => {
            let z = z_hat(a);
            let a2 = a * a;
            Ok(GenericMinimaxInput {
                h_value: evaluate_b(a, beta, f)?,
                h_g: beta * a2 / (z * z),
                h_gg: -2.0 * beta * a2 / z.powi(3),
                h_y_g: vec![2.0 * beta * a / (z * z)],
                h_l_g: 2.0 * beta / z,
                h_l_l: beta * z.powi(3) / (a2 * a2),
                h_l_y: vec![-2.0 * beta / a],
                hessian_b: vec![vec![b_second(a, beta, f)]],
            })
        }
        DerivativeSupply::FiniteDifference { step } => {
            let hfun = |y: &[f64], l: f64, g: f64| f.value(y[0]) + beta * (l - y[0] * y[0] / g);
            let bfun = |y: &[f64]| f.value(y[0]) + beta * z_hat(y[0]);
            fd_minimax_input(&hfun, &bfun, &[a], lo.l_hat, step)
        }
    }
}

/// Saddle derivatives for the ball, `y = (α, r)` and
/// `h = f(rα) + g(r) + βr²(l − α²/g)`.
pub fn ball_minimax_input(
    f: &SpikeSpec,
    g: &RadialSpec,
    beta: f64,
    lo: &LeadingOrder,
    supply: DerivativeSupply,
) -> Result<GenericMinimaxInput> {
    let a = lo.alpha_hat;
    require_alpha(a)?;
    let r = lo
        .r_hat
        .ok_or_else(|| SkError::Inapplicable("ball constants need a radius".into()))?;
    match supply {
        DerivativeSupply::Analytic => {
            let z = z_hat(a);
            let a2 = a * a;
            let r2 = r * r;
            let hess = ball_hessian(a, r, beta, f, g);
            Ok(GenericMinimaxInput {
                h_value: evaluate_b_tilde(a, r, beta, f, g)?,
                h_g: beta * r2 * a2 / (z * z),
                h_gg: -2.0 * beta * r2 * a2 / z.powi(3),
                h_y_g: vec![2.0 * beta * r2 * a / (z * z), 2.0 * beta * r * a2 / (z * z)],
                h_l_g: 2.0 * beta * r2 / z,
                h_l_l: beta * r2 * z.powi(3) / (a2 * a2),
                h_l_y: vec![-2.0 * beta * r2 / a, 0.0],
                hessian_b: vec![hess[0].to_vec(), hess[1].to_vec()],
            })
        }
        DerivativeSupply::FiniteDifference { step } => {
            let hfun = |y: &[f64], l: f64, gg: f64| {
                f.value(y[1] * y[0]) + g.value(y[1]) + beta * y[1] * y[1] * (l - y[0] * y[0] / gg)
            };
            let bfun = |y: &[f64]| f.value(y[1] * y[0]) + g.value(y[1]) + beta * y[1] * y[1] * z_hat(y[0]);
            fd_minimax_input(&hfun, &bfun, &[a, r], lo.l_hat, step)
        }
    }
}

fn fd_minimax_input(
    hfun: &dyn Fn(&[f64], f64, f64) -> f64,
    bfun: &dyn Fn(&[f64]) -> f64,
    y: &[f64],
    l0: f64,
    step: f64,
) -> Result<GenericMinimaxInput> {
    let s = |l: f64| semicircle_stieltjes(l, 0).unwrap_or(f64::NAN);
    let g0 = s(l0);
    let d = y.len();
    let shifted = |i: usize, t: f64| {
        let mut v = y.to_vec();
        v[i] += t;
        v
    };
    // ∂_g h at (y, l, g)
    let h_g_at = |yv: &[f64], l: f64, g: f64| diff1(|t| hfun(yv, l, t), g, step);
    // d/dl h(y, l, s(l))
    let h_l_tot = |yv: &[f64], l: f64| diff1(|t| hfun(yv, t, s(t)), l, step);

    let h_y_g = (0..d)
        .map(|i| diff1(|t| h_g_at(&shifted(i, t - y[i]), l0, g0), y[i], step))
        .collect();
    let h_l_y = (0..d)
        .map(|i| diff1(|t| h_l_tot(&shifted(i, t - y[i]), l0), y[i], step))
        .collect();
    let mut hess = vec![vec![0.0; d]; d];
    for i in 0..d {
        hess[i][i] = diff2(|t| bfun(&shifted(i, t - y[i])), y[i], step);
        for j in 0..i {
            let v = (bfun(&{
                let mut v = y.to_vec();
                v[i] += step;
                v[j] += step;
                v
            }) - bfun(&{
                let mut v = y.to_vec();
                v[i] += step;
                v[j] -= step;
                v
            }) - bfun(&{
                let mut v = y.to_vec();
                v[i] -= step;
                v[j] += step;
                v
            }) + bfun(&{
                let mut v = y.to_vec();
                v[i] -= step;
                v[j] -= step;
                v
            })) / (4.0 * step * step);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    Ok(GenericMinimaxInput {
        h_value: hfun(y, l0, g0),
        h_g: h_g_at(y, l0, g0),
        h_gg: diff2(|t| hfun(y, l0, t), g0, step),
        h_y_g,
        h_l_g: diff1(|t| h_g_at(y, t, s(t)), l0, step),
        h_l_l: diff2(|t| hfun(y, t, s(t)), l0, step),
        h_l_y,
        hessian_b: hess,
    })
}

/// Gaussian limit of `Σ 1/(l−λ_i) − n s(l)`: mean `(l−√(l²−2))/(2(l²−2))`,
/// variance `1/(l²−2)²`.
pub fn limiting_lambda_law(l: f64) -> Result<(f64, f64)> {
    if !(l > SQRT_2) {
        return Err(SkError::Domain { what: "l", value: l });
    }
    let d = l * l - 2.0;
    Ok(((l - d.sqrt()) / (2.0 * d), 1.0 / (d * d)))
}

/// Explicit constants for `f = hx` (`k = 1`) and `f = hx²` (`k = 2`,
/// `β < h/√2`).
///
/// Two entries differ from the printed tables, which are inconsistent with
/// the general formula they specialise: `G₂₂` for `k = 1` is negative, and
/// `G₁₂` for `k = 2` carries `(2h² − β²)²`.
pub fn corollary_constants(k: u32, h: f64, beta: f64) -> Result<FluctuationParams> {
    check_beta(beta)?;
    let b = beta;
    match k {
        1 => {
            if h == 0.0 || !h.is_finite() {
                return Err(SkError::Inapplicable("h = 0 has no overlap".into()));
            }
            let h2 = h * h;
            let s = (h2 + 2.0 * b * b).sqrt();
            let g12 = -h.powi(6) / (32.0 * b.powi(5));
            let cov = -64.0 * b.powi(5) * (h2 + b * b) / (h.powi(6) * s);
            let var_u = 16.0 * b.powi(4) / (h2 * s * s);
            let var_up = 128.0 * b.powi(6) * (4.0 * b.powi(4) + 5.0 * b * b * h2 + 2.0 * h2 * h2) / h.powi(10);
            let d12 = h.powi(6) / (32.0 * b.powi(5));
            Ok(FluctuationParams {
                kappa: h2 / (4.0 * b),
                g: [
                    [-h2 * h2 * s / (8.0 * b.powi(4)), g12],
                    [g12, -h.powi(10) / (128.0 * b.powi(6) * s.powi(3))],
                ],
                g_dual: [
                    [h2 * h2 * s / (8.0 * b.powi(4)), d12],
                    [d12, h.powi(8) / (128.0 * b.powi(6) * s)],
                ],
                var_u,
                var_uprime: var_up,
                cov_u_uprime: cov,
                lambda_mean: 4.0 * b.powi(3) * s / (h2 * h2),
                lambda_var: 16.0 * b.powi(4) * s.powi(4) / h.powi(8),
                sigma: [[var_u, cov], [cov, var_up]],
            })
        }
        2 => {
            if !(h > 0.0 && b < h / SQRT_2) {
                return Err(SkError::Inapplicable(format!("quadratic constants need β < h/√2, got h = {h}, β = {b}")));
            }
            let h2 = h * h;
            let b2 = b * b;
            let d = 2.0 * h2 - b2;
            let g12 = -h2 * d * d / (2.0 * b.powi(5));
            let cov = -4.0 * b.powi(5) * (4.0 * h2 - b2) / (h * d.powi(3));
            let var_u = 2.0 * b2 * b2 / (h2 * d);
            let var_up = 8.0 * b.powi(6) * (16.0 * h2 * h2 - 6.0 * b2 * h2 + b2 * b2) / d.powi(5);
            let d12 = d.powi(3) / (4.0 * b.powi(5));
            Ok(FluctuationParams {
                kappa: d / (2.0 * b),
                g: [
                    [-h * (4.0 * h2 * h2 - 2.0 * h2 * b2 + b2 * b2) / b2.powi(2), g12],
                    [g12, -d.powi(4) / (16.0 * h * b.powi(6))],
                ],
                g_dual: [[h * d * d / b2.powi(2), d12], [d12, d.powi(4) / (16.0 * b.powi(6) * h)]],
                var_u,
                var_uprime: var_up,
                cov_u_uprime: cov,
                lambda_mean: 2.0 * h * b.powi(3) / (d * d),
                lambda_var: 16.0 * h2 * h2 * b2 * b2 / d.powi(4),
                sigma: [[var_u, cov], [cov, var_up]],
            })
        }
        _ => Err(SkError::InvalidInput(format!("explicit constants exist for k = 1, 2 only, got {k}"))),
    }
}
