//! Shared fixtures for the integration suites: the reference experiment
//! (jump diffusion with mu = 0.075, sigma = 0.5, lambda = 0.5, alpha = 9,
//! q = 0.025, linear-ramp bankruptcy rate falling from phi = 1.5 at a = -1
//! with slope -1) and a handful of independent numerical oracles.

#![allow(dead_code)]

use omega_dividends::levy::{JumpComponent, LevyModel};
use omega_dividends::omega::{solve_h, BankruptcyRate, OmegaScaleTable, Segment, SegmentShape};

pub const Q: f64 = 0.025;
pub const PHI: f64 = 1.5;
pub const SLOPE: f64 = -1.0;
pub const A: f64 = -1.0;
pub const BETA: f64 = 0.001;

pub fn reference_model() -> LevyModel {
    LevyModel::new(
        0.075,
        0.5,
        0.5,
        vec![JumpComponent {
            weight: 1.0,
            rate: 9.0,
        }],
    )
    .unwrap()
}

pub fn reference_omega() -> BankruptcyRate {
    BankruptcyRate::new(
        A,
        PHI,
        vec![Segment {
            from: A,
            to: 0.0,
            shape: SegmentShape::Linear {
                value_at_start: PHI,
                slope: SLOPE,
            },
        }],
    )
    .unwrap()
}

/// Production-resolution table (h = 1e-3, x_max = 10), solved once per
/// test binary.
pub fn reference_table() -> &'static OmegaScaleTable {
    static TABLE: std::sync::OnceLock<OmegaScaleTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| solve_h(&reference_model(), Q, &reference_omega(), 10.0, 1e-3).unwrap())
}

/// Faster table for logic-heavy tests that do not probe tolerance limits.
pub fn coarse_table() -> OmegaScaleTable {
    solve_h(&reference_model(), Q, &reference_omega(), 6.0, 2e-3).unwrap()
}

/// Adaptive Simpson quadrature, independent of the library's closed forms.
pub fn quad(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    omega_dividends::numeric::adaptive_simpson(f, a, b, tol)
}
