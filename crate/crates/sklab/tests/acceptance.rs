//! Acceptance criteria 1 to 10 at their stated sizes and tolerances.
//!
//! Run with `cargo test --release -p sklab --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::f64::consts::SQRT_2;

use sklab::theory_engine::{
    fluct_params_sphere, limiting_lambda_law, maximize_ball_theory, maximize_sphere_theory, RadialSpec, SpikeSpec,
};
use sklab::verify::{run_criterion, Scale};

#[test]
fn frozen_reference_constants() {
    // f = x, h = β = 1: α̂² = 1/3, first-order variance β²h²/(h²+2β²) = 1/3, Σ₁₁ = 16/3
    let f = SpikeSpec::monomial(1.0, 1).unwrap();
    let lo = maximize_sphere_theory(&f, 1.0).unwrap();
    assert!((lo.alpha_hat * lo.alpha_hat - 1.0 / 3.0).abs() < 1e-12);
    assert!((lo.value - 3f64.sqrt()).abs() < 1e-12);
    let fp = fluct_params_sphere(&f, 1.0, &lo).unwrap();
    assert!((fp.kappa * fp.kappa * fp.var_u - 1.0 / 3.0).abs() < 1e-12);
    assert!((fp.sigma[0][0] - 16.0 / 3.0).abs() < 1e-10);
    // β = 2: leading value √(h² + 2β²) = 3
    assert!((maximize_sphere_theory(&f, 2.0).unwrap().value - 3.0).abs() < 1e-12);
    // Λ law at l = 2: mean (2 − √2)/4, variance 1/4
    let (m, v) = limiting_lambda_law(2.0).unwrap();
    assert!((m - (2.0 - SQRT_2) / 4.0).abs() < 1e-14);
    assert!((v - 0.25).abs() < 1e-14);
    // TAP, k = 1, h = β = 1: r̂² = 1/2
    let g = RadialSpec::tap(1.0).unwrap();
    let r = maximize_ball_theory(&f, &g, 1.0).unwrap().r_hat.unwrap();
    assert!((r * r - 0.5).abs() < 1e-10);
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    for id in 1..=10u8 {
        match run_criterion(id, Scale::Full) {
            Ok(o) => {
                println!("{o}");
                if !o.pass {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("FAIL criterion {id:>2}: error {e}");
                failed.push(id);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
