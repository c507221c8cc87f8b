//! Closed-form scale functions for rational Laplace exponents.
//!
//! With hyperexponential jumps, 1/(ψ(θ) − q) is a strictly proper rational
//! function with simple poles at the real roots θ_i of ψ(s) = q, so
//!
//! ```text
//! W_q(x) = Σ_i D_i e^{θ_i x},    D_i = 1/ψ′(θ_i),    x ≥ 0,
//! ```
//!
//! and W_q ≡ 0 on (−∞, 0). The second scale function
//! Z_q(x; Φ(s)) follows by integrating the exponential sum term by term.
//! Exponential sums are evaluated with the dominant root factored out so
//! that large-argument sweeps do not overflow before the result itself
//! would.

use crate::levy::LevyModel;
use crate::{Error, Result};

/// Partial-fraction basis for W_q and Z_q at a fixed discount rate `q > 0`.
#[derive(Debug, Clone)]
pub struct ScaleBasis {
    model: LevyModel,
    q: f64,
    /// Roots of ψ(s) = q, descending; `roots[0] = Φ(q)` is the only positive one.
    roots: Vec<f64>,
    /// Residues D_i = 1/ψ′(θ_i).
    residues: Vec<f64>,
}

/// Relative tolerance for the residue identities checked at construction.
const RESIDUE_IDENTITY_TOL: f64 = 1e-8;

impl ScaleBasis {
    /// Builds the basis for `model` at discount rate `q > 0`.
    ///
    /// The positive root is cross-checked against the independently computed
    /// right inverse Φ(q), and the residue identities Σ D_i = 0 and
    /// Σ D_i θ_i = 2/σ² (for σ > 0) are verified before the basis is handed
    /// out.
    pub fn for_model(model: &LevyModel, q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::Domain(format!("scale basis requires q > 0, got {q}")));
        }
        let roots = model.psi_roots(q)?;
        let phi = model.phi_right_inverse(q)?;
        if (roots[0] - phi).abs() > 1e-9 * phi.max(1.0) {
            return Err(Error::DegenerateSpectrum(format!(
                "positive root {} disagrees with right inverse {}",
                roots[0], phi
            )));
        }
        let residues: Vec<f64> = roots.iter().map(|&r| 1.0 / model.psi_prime(r)).collect();
        let scale: f64 = residues.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let sum: f64 = residues.iter().sum();
        let weighted: f64 = residues.iter().zip(&roots).map(|(d, t)| d * t).sum();
        if model.sigma() > 0.0 {
            if sum.abs() > RESIDUE_IDENTITY_TOL * scale {
                return Err(Error::DegenerateSpectrum(format!(
                    "residue sum {sum} violates the sigma > 0 identity"
                )));
            }
            let expected = 2.0 / (model.sigma() * model.sigma());
            if (weighted - expected).abs() > RESIDUE_IDENTITY_TOL * expected.abs() {
                return Err(Error::DegenerateSpectrum(format!(
                    "weighted residue sum {weighted} != 2/sigma^2 = {expected}"
                )));
            }
        }
        Ok(Self {
            model: model.clone(),
            q,
            roots,
            residues,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn model(&self) -> &LevyModel {
        &self.model
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn residues(&self) -> &[f64] {
        &self.residues
    }

    /// Φ(q), the dominant (positive) root.
    pub fn phi_q(&self) -> f64 {
        self.roots[0]
    }

    /// Σ c_i e^{θ_i x} evaluated as e^{θ₁x} Σ c_i e^{(θ_i−θ₁)x}; every
    /// exponent in the sum is ≤ 0, so intermediate overflow cannot happen.
    fn exp_sum(&self, coeff: &[f64], x: f64) -> f64 {
        let lead = self.roots[0];
        let mut s = 0.0;
        for (c, &t) in coeff.iter().zip(&self.roots) {
            s += c * ((t - lead) * x).exp();
        }
        (lead * x).exp() * s
    }

    /// The scale function W_q: zero on (−∞, 0), `Σ D_i e^{θ_i x}` on [0, ∞).
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        self.exp_sum(&self.residues, x)
    }

    /// W_q′(x) for x > 0. For x ≤ 0 this is a domain error; use
    /// [`Self::w_prime_right`] for the one-sided limit at 0.
    pub fn w_prime(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::Domain(format!(
                "w_prime requires x > 0, got {x}; use w_prime_right for the limit at 0"
            )));
        }
        Ok(self.w_prime_right(x).unwrap())
    }

    /// Right-limit derivative W_q′(x+), defined for x ≥ 0. At x = 0 this is
    /// Σ D_i θ_i, which equals 2/σ² when σ > 0 and the BV boundary slope
    /// otherwise.
    pub fn w_prime_right(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("w_prime_right requires x >= 0, got {x}")));
        }
        let coeff: Vec<f64> = self
            .residues
            .iter()
            .zip(&self.roots)
            .map(|(d, t)| d * t)
            .collect();
        Ok(self.exp_sum(&coeff, x))
    }

    /// Coefficients (s−q)·D_i/(Φ(s)−θ_i) of the exponential expansion of
    /// Z_q(·; Φ(s)) on [0, ∞), together with Φ(s).
    ///
    /// This is the first-line definition
    /// `e^{Φ(s)x}(1 − (s−q)∫₀^x e^{−Φ(s)y} W_q(y) dy)` with the integral
    /// done term by term; the e^{Φ(s)x} terms cancel exactly through the
    /// partial-fraction identity Σ D_i/(Φ(s)−θ_i) = 1/(s−q), which leaves
    /// the numerically stable exponential sum below.
    fn z_coefficients(&self, s: f64) -> Result<(f64, Vec<f64>)> {
        if !(s > self.q) {
            return Err(Error::Domain(format!(
                "z requires s > q = {}, got s = {s}",
                self.q
            )));
        }
        let phi_s = self.model.phi_right_inverse(s)?;
        let coeff: Vec<f64> = self
            .residues
            .iter()
            .zip(&self.roots)
            .map(|(d, t)| (s - self.q) * d / (phi_s - t))
            .collect();
        Ok((phi_s, coeff))
    }

    /// Z_q(x; Φ(s)) for s > q: `e^{Φ(s)x}` on (−∞, 0] and the closed-form
    /// exponential sum on (0, ∞). Continuous at 0 with Z_q(0) = 1.
    pub fn z(&self, s: f64, x: f64) -> Result<f64> {
        let (phi_s, coeff) = self.z_coefficients(s)?;
        if x <= 0.0 {
            return Ok((phi_s * x).exp());
        }
        Ok(self.exp_sum(&coeff, x))
    }

    /// ∂ₓ Z_q(x; Φ(s)): `Φ(s)e^{Φ(s)x}` for x < 0 and the differentiated
    /// exponential sum for x > 0. At x = 0 the right limit is returned
    /// (the two one-sided limits agree when σ > 0).
    pub fn z_prime(&self, s: f64, x: f64) -> Result<f64> {
        let (phi_s, coeff) = self.z_coefficients(s)?;
        if x < 0.0 {
            return Ok(phi_s * (phi_s * x).exp());
        }
        let dcoeff: Vec<f64> = coeff.iter().zip(&self.roots).map(|(c, t)| c * t).collect();
        Ok(self.exp_sum(&dcoeff, x))
    }
}
