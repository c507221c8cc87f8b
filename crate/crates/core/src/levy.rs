//! The surplus process: a spectrally negative Lévy process with Gaussian
//! component and compound-Poisson hyperexponential downward jumps,
//!
//! ```text
//! X_t = x + mu·t + sigma·B_t − Σ_{i≤N_t} Y_i ,
//! ```
//!
//! parametrised directly by its Laplace exponent
//!
//! ```text
//! psi(θ) = mu·θ + ½ sigma² θ² + λ ( Σ_j p_j α_j/(α_j+θ) − 1 ).
//! ```
//!
//! Everything downstream (scale functions, the Volterra kernel, the Monte
//! Carlo simulator) is derived from this object. The jump tail
//! ν(x,∞) = λ Σ p_j e^{−α_j x} is log-convex by construction, which is what
//! the uniqueness theory of the optimal barriers requires.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One hyperexponential mixture component: density `weight · rate · e^{−rate·z}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub weight: f64,
    pub rate: f64,
}

/// Spectrally negative Lévy model with hyperexponential jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    mu: f64,
    sigma: f64,
    jump_intensity: f64,
    jump_mixture: Vec<JumpComponent>,
}

/// Tolerance for "mixture weights sum to one".
const WEIGHT_SUM_TOL: f64 = 1e-12;

impl LevyModel {
    /// Validates the parameters and builds the model.
    ///
    /// Requirements: `sigma >= 0`, `jump_intensity >= 0`, all mixture rates
    /// positive, weights in (0,1] summing to 1, and the process must be
    /// nondegenerate (`sigma > 0` or jumps plus nonzero drift).
    pub fn new(
        mu: f64,
        sigma: f64,
        jump_intensity: f64,
        jump_mixture: Vec<JumpComponent>,
    ) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || !jump_intensity.is_finite() {
            return Err(Error::Model("parameters must be finite".into()));
        }
        if sigma < 0.0 {
            return Err(Error::Model(format!("sigma must be >= 0, got {sigma}")));
        }
        if jump_intensity < 0.0 {
            return Err(Error::Model(format!(
                "jump_intensity must be >= 0, got {jump_intensity}"
            )));
        }
        if jump_intensity > 0.0 {
            if jump_mixture.is_empty() {
                return Err(Error::Model(
                    "jump_intensity > 0 requires a nonempty jump mixture".into(),
                ));
            }
            let mut sum = 0.0;
            for c in &jump_mixture {
                if !(c.rate > 0.0) || !c.rate.is_finite() {
                    return Err(Error::Model(format!("jump rate must be > 0, got {}", c.rate)));
                }
                if !(c.weight > 0.0 && c.weight <= 1.0) {
                    return Err(Error::Model(format!(
                        "jump weight must be in (0,1], got {}",
                        c.weight
                    )));
                }
                sum += c.weight;
            }
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Model(format!(
                    "jump weights must sum to 1 within {WEIGHT_SUM_TOL:e}, got {sum}"
                )));
            }
        } else if !jump_mixture.is_empty() {
            return Err(Error::Model(
                "jump mixture given but jump_intensity is 0".into(),
            ));
        }
        if sigma == 0.0 && !(jump_intensity > 0.0 && mu != 0.0) {
            return Err(Error::Model(
                "degenerate process: need sigma > 0 or jumps with nonzero drift".into(),
            ));
        }
        Ok(Self {
            mu,
            sigma,
            jump_intensity,
            jump_mixture,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jump_intensity(&self) -> f64 {
        self.jump_intensity
    }

    pub fn jump_mixture(&self) -> &[JumpComponent] {
        &self.jump_mixture
    }

    /// The Laplace exponent ψ(θ) for θ ≥ 0 (the transform domain).
    pub fn laplace_exponent(&self, theta: f64) -> Result<f64> {
        if !(theta >= 0.0) {
            return Err(Error::Domain(format!(
                "laplace exponent requires theta >= 0, got {theta}"
            )));
        }
        Ok(self.psi(theta))
    }

    /// Rational continuation of ψ to all real θ off the poles −α_j.
    ///
    /// Used to validate roots of ψ(s) = q that lie left of the poles; agrees
    /// with [`Self::laplace_exponent`] on θ ≥ 0. The jump part is written as
    /// −λθ Σ p_j/(α_j+θ) so ψ(0) = 0 holds exactly regardless of rounding
    /// in the mixture weights.
    pub fn psi(&self, theta: f64) -> f64 {
        let mut jump_term = 0.0;
        for c in &self.jump_mixture {
            jump_term += c.weight / (c.rate + theta);
        }
        self.mu * theta + 0.5 * self.sigma * self.sigma * theta * theta
            - self.jump_intensity * theta * jump_term
    }

    /// ψ′(θ), as a rational function (valid off the poles).
    pub fn psi_prime(&self, theta: f64) -> f64 {
        let mut jump_term = 0.0;
        for c in &self.jump_mixture {
            let d = c.rate + theta;
            jump_term -= c.weight * c.rate / (d * d);
        }
        self.mu + self.sigma * self.sigma * theta + self.jump_intensity * jump_term
    }

    /// ψ′(0+) = mu − λ Σ p_j/α_j, the mean drift of the process.
    pub fn mean_drift(&self) -> f64 {
        self.psi_prime(0.0)
    }

    /// Φ(q) = sup{λ ≥ 0 : ψ(λ) = q}, the right inverse of ψ.
    ///
    /// Computed by bracketed bisection with a Newton polish, independently of
    /// [`Self::psi_roots`]; the residual satisfies
    /// |ψ(Φ(q)) − q| < 1e−12·max(1,q).
    pub fn phi_right_inverse(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(Error::Domain(format!("phi requires q >= 0, got {q}")));
        }
        if q == 0.0 && self.psi_prime(0.0) >= 0.0 {
            return Ok(0.0);
        }
        // ψ is convex on [0,∞) with ψ(0) = 0; start the bracket at the
        // minimiser so that bisection lands on the largest root.
        let lo0 = if self.psi_prime(0.0) >= 0.0 {
            0.0
        } else {
            let mut hi = 1.0;
            while self.psi_prime(hi) < 0.0 {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::Domain("psi minimiser escapes to infinity".into()));
                }
            }
            crate::numeric::bisect_root(|t| self.psi_prime(t), 0.0, hi, 1e-15)
        };
        let mut hi = (lo0 + 1.0).max(1.0);
        while self.psi(hi) <= q {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(Error::Domain("no finite root of psi(theta) = q found".into()));
            }
        }
        let mut root = crate::numeric::bisect_root(|t| self.psi(t) - q, lo0, hi, 1e-13);
        // Newton polish to push the residual to the contract level.
        for _ in 0..4 {
            let f = self.psi(root) - q;
            let d = self.psi_prime(root);
            if d.abs() < 1e-300 {
                break;
            }
            root -= f / d;
        }
        Ok(root.max(0.0))
    }

    /// All real roots of ψ(s) = q for q > 0, sorted in descending order.
    ///
    /// For a hyperexponential mixture with m components the roots interlace
    /// with the poles −α_j: two lie right of the largest pole (one positive,
    /// one negative), one in each gap between consecutive poles, and — when
    /// `sigma > 0` — one left of the smallest pole, for m+2 in total
    /// (m+1 when `sigma == 0`). Each gap is solved by bracketed bisection
    /// and polished by Newton.
    pub fn psi_roots(&self, q: f64) -> Result<Vec<f64>> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("psi_roots requires q > 0, got {q}")));
        }
        let f = |s: f64| self.psi(s) - q;
        let mut roots = Vec::new();

        // Rightmost region (−α_min, ∞): ψ → +∞ at both ends and ψ(0) − q < 0.
        let phi = self.phi_right_inverse(q)?;
        roots.push(phi);
        let mut alphas: Vec<f64> = self.jump_mixture.iter().map(|c| c.rate).collect();
        alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());

        if !alphas.is_empty() {
            // Negative root right of the largest pole −α_(1).
            let pole = -alphas[0];
            let lo = self.left_of(f, pole, 0.0);
            roots.push(crate::numeric::bisect_root(f, lo, 0.0, 1e-15));

            // One root per gap (−α_(j+1), −α_(j)).
            for w in alphas.windows(2) {
                let (right_pole, left_pole) = (-w[0], -w[1]);
                if (right_pole - left_pole).abs() < 1e-12 {
                    return Err(Error::DegenerateSpectrum(format!(
                        "coincident jump rates near {} — perturb the model",
                        w[0]
                    )));
                }
                let lo = self.left_of(f, left_pole, right_pole);
                let hi = self.right_of(f, right_pole, left_pole);
                roots.push(crate::numeric::bisect_root(f, lo, hi, 1e-15));
            }

            // Left of the smallest pole only the Gaussian term can rescue
            // ψ → +∞; with sigma == 0 there is no root there.
            if self.sigma > 0.0 {
                let pole = -alphas[alphas.len() - 1];
                let mut lo = pole - 1.0;
                while f(lo) <= 0.0 {
                    lo = pole - 2.0 * (pole - lo);
                    if lo < -1e12 {
                        return Err(Error::Domain("leftmost root escapes to -infinity".into()));
                    }
                }
                let hi = self.right_of(f, pole, lo);
                roots.push(crate::numeric::bisect_root(f, lo, hi, 1e-15));
            }
        } else if self.sigma > 0.0 {
            // Pure Brownian-with-drift: quadratic, second root negative.
            let lo = {
                let mut lo = -1.0;
                while f(lo) <= 0.0 {
                    lo *= 2.0;
                }
                lo
            };
            roots.push(crate::numeric::bisect_root(f, lo, 0.0, 1e-15));
        }

        for r in roots.iter_mut() {
            for _ in 0..3 {
                let d = self.psi_prime(*r);
                if d.abs() < 1e-300 {
                    break;
                }
                *r -= (self.psi(*r) - q) / d;
            }
        }
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        check_distinct(&roots)?;
        let n_pos = roots.iter().filter(|&&r| r > 0.0).count();
        if n_pos != 1 {
            return Err(Error::DegenerateSpectrum(format!(
                "expected exactly one positive root, found {n_pos}"
            )));
        }
        for &r in &roots {
            if (self.psi(r) - q).abs() > 1e-9 * q.max(1.0) {
                return Err(Error::DegenerateSpectrum(format!(
                    "root {r} fails the residual contract for q={q}"
                )));
            }
        }
        Ok(roots)
    }

    /// Point just right of `pole` where `f` is positive (ψ → +∞ approaching
    /// a pole from the right). `other` bounds how far the probe may start.
    fn left_of(&self, f: impl Fn(f64) -> f64, pole: f64, other: f64) -> f64 {
        let mut eps = 1e-3 * (other - pole).abs().max(1e-3);
        loop {
            let x = pole + eps;
            if f(x) > 0.0 {
                return x;
            }
            eps *= 0.5;
            if eps < 1e-300 {
                return pole + 1e-300;
            }
        }
    }

    /// Point just left of `pole` where `f` is negative (ψ → −∞ approaching a
    /// pole from the left).
    fn right_of(&self, f: impl Fn(f64) -> f64, pole: f64, other: f64) -> f64 {
        let mut eps = 1e-3 * (pole - other).abs().max(1e-3);
        loop {
            let x = pole - eps;
            if f(x) < 0.0 {
                return x;
            }
            eps *= 0.5;
            if eps < 1e-300 {
                return pole - 1e-300;
            }
        }
    }
}

/// Roots must be pairwise distinct for the partial-fraction expansion.
fn check_distinct(roots: &[f64]) -> Result<()> {
    for i in 0..roots.len() {
        for j in (i + 1)..roots.len() {
            if (roots[i] - roots[j]).abs() <= 1e-9 * roots[i].abs().max(1.0) {
                return Err(Error::DegenerateSpectrum(format!(
                    "roots {} and {} coincide within tolerance — perturb q",
                    roots[i], roots[j]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_model() -> LevyModel {
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

    #[test]
    fn psi_vanishes_at_zero() {
        let m = reference_model();
        assert_eq!(m.laplace_exponent(0.0).unwrap(), 0.0);
        let bm = LevyModel::new(0.1, 0.4, 0.0, vec![]).unwrap();
        assert_eq!(bm.laplace_exponent(0.0).unwrap(), 0.0);
    }

    #[test]
    fn psi_at_one_matches_direct_arithmetic() {
        // mu + sigma²/2 + λ(9/10 − 1) = 0.075 + 0.125 − 0.05
        let m = reference_model();
        assert!((m.laplace_exponent(1.0).unwrap() - 0.15).abs() < 1e-15);
    }

    #[test]
    fn mean_drift_matches_finite_difference() {
        let m = reference_model();
        let exact = 0.075 - 0.5 / 9.0;
        assert!((m.mean_drift() - exact).abs() < 1e-14);
        let h = 1e-6;
        let fd = (m.psi(h) - m.psi(-h)) / (2.0 * h);
        assert!((m.mean_drift() - fd).abs() < 1e-9);
    }

    #[test]
    fn negative_theta_is_a_domain_error() {
        let m = reference_model();
        assert!(matches!(m.laplace_exponent(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn phi_is_zero_at_zero_for_positive_drift() {
        let m = reference_model();
        assert!(m.mean_drift() > 0.0);
        assert_eq!(m.phi_right_inverse(0.0).unwrap(), 0.0);
    }

    /// Independent bracketed-bisection oracle for Φ(q), kept deliberately
    /// separate from the implementation path.
    fn phi_oracle(m: &LevyModel, q: f64) -> f64 {
        let mut lo = 0.0;
        let mut hi = 10.0;
        assert!(m.psi(hi) > q);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if m.psi(mid) - q < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn phi_matches_bisection_oracle_and_regression_value() {
        let m = reference_model();
        let phi = m.phi_right_inverse(0.025).unwrap();
        let oracle = phi_oracle(&m, 0.025);
        assert!((phi - oracle).abs() < 1e-10, "phi={phi} oracle={oracle}");
        assert!((m.psi(phi) - 0.025).abs() < 1e-12 * 1.0);
        // Frozen regression fixture for the reference parameter set.
        assert!((phi - 0.368_978_257_459_052_4).abs() < 1e-10, "phi={phi}");
    }

    #[test]
    fn phi_is_monotone_in_q() {
        let m = reference_model();
        let lo = m.phi_right_inverse(0.025).unwrap();
        let hi = m.phi_right_inverse(1.525).unwrap();
        assert!(hi > lo);
        assert!((m.psi(hi) - 1.525).abs() < 1e-12 * 1.525f64.max(1.0));
        let o_lo = phi_oracle(&m, 0.025);
        let o_hi = phi_oracle(&m, 1.525);
        assert!(o_hi > o_lo);
    }

    #[test]
    fn psi_on_phi_grid_has_small_residual() {
        let m = reference_model();
        for q in [0.0, 0.01, 0.025, 0.1, 1.0, 1.525] {
            let phi = m.phi_right_inverse(q).unwrap();
            assert!(
                (m.psi(phi) - q).abs() < 1e-10,
                "q={q} phi={phi} residual={}",
                (m.psi(phi) - q).abs()
            );
        }
    }

    #[test]
    fn reference_roots_signs_and_count() {
        let m = reference_model();
        let roots = m.psi_roots(0.025).unwrap();
        assert_eq!(roots.len(), 3);
        assert!(roots[0] > 0.0);
        assert!(roots[1] < 0.0 && roots[2] < 0.0);
        // The positive root is Φ(q).
        let phi = m.phi_right_inverse(0.025).unwrap();
        assert!((roots[0] - phi).abs() < 1e-10);
    }

    #[test]
    fn brownian_roots_match_quadratic_formula() {
        let m = LevyModel::new(0.1, 0.4, 0.0, vec![]).unwrap();
        let q = 0.05;
        let roots = m.psi_roots(q).unwrap();
        assert_eq!(roots.len(), 2);
        // ½σ²θ² + μθ − q = 0
        let (a, b, c) = (0.5 * 0.16, 0.1, -q);
        let disc = (b * b - 4.0 * a * c).sqrt();
        let plus = (-b + disc) / (2.0 * a);
        let minus = (-b - disc) / (2.0 * a);
        assert!((roots[0] - plus).abs() < 1e-12);
        assert!((roots[1] - minus).abs() < 1e-12);
    }

    #[test]
    fn residue_sum_vanishes_for_gaussian_component() {
        // Partial fractions of 1/(ψ−q): Σ 1/ψ′(θ_i) is the coefficient of
        // 1/θ in the large-θ expansion, which vanishes when σ > 0.
        let m = reference_model();
        let roots = m.psi_roots(0.025).unwrap();
        let sum: f64 = roots.iter().map(|&r| 1.0 / m.psi_prime(r)).sum();
        assert!(sum.abs() < 1e-10, "residue sum {sum}");
    }

    #[test]
    fn roots_satisfy_psi_residual_contract() {
        let m = reference_model();
        for q in [0.025, 0.1, 1.0, 1.525] {
            for r in m.psi_roots(q).unwrap() {
                assert!((m.psi(r) - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bounded_variation_model_has_m_plus_one_roots() {
        let m = LevyModel::new(
            0.2,
            0.0,
            0.5,
            vec![JumpComponent {
                weight: 1.0,
                rate: 3.0,
            }],
        )
        .unwrap();
        let roots = m.psi_roots(0.05).unwrap();
        assert_eq!(roots.len(), 2);
        assert!(roots[0] > 0.0 && roots[1] < 0.0);
    }

    #[test]
    fn coincident_rates_are_rejected() {
        let m = LevyModel::new(
            0.075,
            0.5,
            0.5,
            vec![
                JumpComponent {
                    weight: 0.5,
                    rate: 9.0,
                },
                JumpComponent {
                    weight: 0.5,
                    rate: 9.0 + 1e-13,
                },
            ],
        )
        .unwrap();
        assert!(matches!(
            m.psi_roots(0.025),
            Err(Error::DegenerateSpectrum(_))
        ));
    }

    #[test]
    fn model_validation_rejects_bad_parameters() {
        assert!(LevyModel::new(0.1, -0.1, 0.0, vec![]).is_err());
        assert!(LevyModel::new(0.1, 0.5, -1.0, vec![]).is_err());
        assert!(LevyModel::new(0.0, 0.0, 0.5, vec![JumpComponent { weight: 1.0, rate: 2.0 }]).is_err());
        assert!(LevyModel::new(
            0.1,
            0.5,
            0.5,
            vec![JumpComponent {
                weight: 0.7,
                rate: 2.0
            }]
        )
        .is_err());
    }

    #[test]
    fn psi_is_convex_on_a_grid() {
        let m = reference_model();
        let mut prev_slope = f64::NEG_INFINITY;
        for k in 0..200 {
            let t = 0.05 * k as f64;
            let slope = m.psi_prime(t);
            assert!(slope >= prev_slope - 1e-12);
            prev_slope = slope;
        }
    }
}
