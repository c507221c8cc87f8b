//! Analytic performance function of a (c₁, c₂) strategy and numerical
//! verification of the variational inequalities that certify optimality.
//!
//! For admissible barriers the value is
//!
//! ```text
//! v(x) = κ·H(x)                     x ≤ c₂,     κ = (c₂−c₁−β)/(H(c₂)−H(c₁)),
//! v(x) = x − c₁ − β + κ·H(c₁)       x ≥ c₂,
//! ```
//!
//! continuous at c₂ by construction. At the optimum κ = 1/H′(c₂*) up to the
//! first-order-condition residual, which is the C¹ fit of the two branches.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::levy::LevyModel;
use crate::omega::{fmt17, BankruptcyRate, OmegaScaleTable};
use crate::optimizer::BarrierPair;
use crate::{Error, Result};

/// The value function of a fixed admissible barrier pair over a solved
/// table.
#[derive(Debug, Clone)]
pub struct ValueFunction<'a> {
    table: &'a OmegaScaleTable,
    barriers: BarrierPair,
    kappa: f64,
}

impl<'a> ValueFunction<'a> {
    pub fn new(table: &'a OmegaScaleTable, barriers: BarrierPair) -> Result<Self> {
        if barriers.c2 > table.x_max() {
            return Err(Error::Domain(format!(
                "c2 = {} beyond the solved range [a, {}]",
                barriers.c2,
                table.x_max()
            )));
        }
        let denom = table.h_at_hermite(barriers.c2) - table.h_at_hermite(barriers.c1);
        if !(denom > 0.0) {
            return Err(Error::Domain(
                "H(c2) - H(c1) must be positive for admissible barriers".into(),
            ));
        }
        let kappa = (barriers.c2 - barriers.c1 - barriers.beta) / denom;
        Ok(Self {
            table,
            barriers,
            kappa,
        })
    }

    pub fn barriers(&self) -> BarrierPair {
        self.barriers
    }

    pub fn table(&self) -> &OmegaScaleTable {
        self.table
    }

    /// κ = (c₂−c₁−β)/(H(c₂)−H(c₁)) = 1/g(c₁,c₂).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn value(&self, x: f64) -> f64 {
        if x <= self.barriers.c2 {
            self.kappa * self.table.h_at_hermite(x)
        } else {
            x - self.barriers.c1 - self.barriers.beta
                + self.kappa * self.table.h_at_hermite(self.barriers.c1)
        }
    }

    /// v′(x); equal to 1 on (c₂, ∞), with the right-limit convention at c₂.
    pub fn value_prime(&self, x: f64) -> f64 {
        if x < self.barriers.c2 {
            self.kappa * self.table.h_prime_at(x)
        } else {
            1.0
        }
    }

    /// Left derivative at the payment barrier, v′(c₂−) = κ·H′(c₂).
    pub fn prime_left_at_c2(&self) -> f64 {
        self.kappa * self.table.h_prime_at(self.barriers.c2)
    }

    /// Samples the whole table grid into an exportable [`ValueTable`].
    pub fn to_table(&self) -> ValueTable {
        let grid = self.table.grid();
        let v: Vec<f64> = grid.iter().map(|&x| self.value(x)).collect();
        let vp: Vec<f64> = grid.iter().map(|&x| self.value_prime(x)).collect();
        ValueTable {
            x: grid.to_vec(),
            v,
            v_prime: vp,
            c1: self.barriers.c1,
            c2: self.barriers.c2,
            beta: self.barriers.beta,
            q: self.table.q(),
        }
    }
}

/// |v′(c₂−) − 1|: the C¹ fit of the two branches, which vanishes exactly at
/// the optimum where κ = 1/H′(c₂*).
pub fn check_c1_fit(vf: &ValueFunction) -> f64 {
    (vf.prime_left_at_c2() - 1.0).abs()
}

/// Worst violation of the transaction bound v(x) − v(y) ≥ x − y − β over
/// `num_pairs` random pairs x ≥ y ≥ 0 drawn from the grid nodes (node
/// values carry no interpolation error, so the check measures the bound
/// itself rather than piecewise-linear artefacts). Nonnegative values mean
/// the bound held with room to spare.
pub fn check_transaction_bound(vf: &ValueFunction, num_pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = vf.table.grid();
    let z = vf.table.zero_index();
    let span = grid.len() - z;
    let mut worst = f64::INFINITY;
    for _ in 0..num_pairs {
        let i = z + (rng.random::<u64>() as usize) % span;
        let j = z + (rng.random::<u64>() as usize) % span;
        let (ix, iy) = if grid[i] >= grid[j] { (i, j) } else { (j, i) };
        let (x, y) = (grid[ix], grid[iy]);
        let slack = vf.value(x) - vf.value(y) - (x - y - vf.barriers.beta);
        worst = worst.min(slack);
    }
    worst
}

/// Signed residual (Γ − ω_q(x)) v(x) of the extended generator
///
/// ```text
/// Γv(x) = mu·v′(x) + ½σ² v″(x) + λ ∫₀^∞ (v(x−z) − v(x)) f_Y(z) dz ,
/// ```
///
/// evaluated with central stencils (3-point for v′, 5-point for v″) and the
/// jump integral split into grid quadrature on [0, x−a] plus the
/// closed-form tail where v reduces to its pure-exponential branch.
///
/// Requires σ > 0 and x at least 5h away from every kink of v (the ω
/// breakpoints and c₂).
pub fn generator_residual(
    model: &LevyModel,
    omega: &BankruptcyRate,
    q: f64,
    vf: &ValueFunction,
    x: f64,
) -> Result<f64> {
    if model.sigma() == 0.0 {
        return Err(Error::Domain(
            "generator check needs sigma > 0 (second derivative)".into(),
        ));
    }
    let h = vf.table.h();
    let mut kinks = omega.breakpoints();
    kinks.push(vf.barriers.c2);
    for b in kinks {
        if (x - b).abs() <= 5.0 * h {
            return Err(Error::Domain(format!(
                "x = {x} is within 5h of the kink at {b}"
            )));
        }
    }
    if x > vf.table.x_max() - 2.0 * h && x <= vf.barriers.c2 {
        return Err(Error::Domain(format!("x = {x} too close to the grid edge")));
    }

    let v = |y: f64| vf.value(y);
    let v_x = v(x);
    let d1 = (v(x + h) - v(x - h)) / (2.0 * h);
    let d2 = (-v(x - 2.0 * h) + 16.0 * v(x - h) - 30.0 * v_x + 16.0 * v(x + h) - v(x + 2.0 * h))
        / (12.0 * h * h);

    let jump = if model.jump_intensity() > 0.0 {
        let a = vf.table.a();
        let t_split = (x - a).max(0.0);
        // grid part: trapezoid in z with the table step
        let mut grid_part = 0.0;
        if t_split > 0.0 {
            let m = (t_split / h).floor() as usize;
            let density = |z: f64| -> f64 {
                model
                    .jump_mixture()
                    .iter()
                    .map(|c| c.weight * c.rate * (-c.rate * z).exp())
                    .sum()
            };
            let integrand = |z: f64| (v(x - z) - v_x) * density(z);
            let mut acc = 0.5 * (integrand(0.0) + integrand(m as f64 * h));
            for j in 1..m {
                acc += integrand(j as f64 * h);
            }
            grid_part = acc * h;
            let rest = t_split - m as f64 * h;
            if rest > 1e-14 {
                grid_part += 0.5 * rest * (integrand(m as f64 * h) + integrand(t_split));
            }
        }
        // tail: below a the value is κ·e^{Φ(φ+q)(y−a)}
        let phi_level = vf.table.phi_level();
        let scale = vf.kappa * (phi_level * (x - a)).exp();
        let mut tail = 0.0;
        for c in model.jump_mixture() {
            tail += c.weight
                * (scale * c.rate * (-(c.rate + phi_level) * t_split).exp() / (c.rate + phi_level)
                    - v_x * (-c.rate * t_split).exp());
        }
        grid_part + tail
    } else {
        0.0
    };

    let gamma_v = model.mu() * d1 + 0.5 * model.sigma() * model.sigma() * d2
        + model.jump_intensity() * jump;
    Ok(gamma_v - (q + omega.value(x)) * v_x)
}

/// Grid samples of the value function and its derivative, exportable as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
    pub q: f64,
}

impl ValueTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# c1 = {}", fmt17(self.c1))?;
        writeln!(w, "# c2 = {}", fmt17(self.c2))?;
        writeln!(w, "# beta = {}", fmt17(self.beta))?;
        writeln!(w, "# q = {}", fmt17(self.q))?;
        writeln!(w, "x,v,vprime")?;
        for k in 0..self.x.len() {
            writeln!(
                w,
                "{},{},{}",
                fmt17(self.x[k]),
                fmt17(self.v[k]),
                fmt17(self.v_prime[k])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut x = Vec::new();
        let mut v = Vec::new();
        let mut vp = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, val)) = rest.split_once('=') {
                    meta.insert(k.trim().to_string(), val.trim().to_string());
                }
                continue;
            }
            if line.starts_with('x') {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::Parse("short CSV row".into()))?
                    .parse()
                    .map_err(|e| Error::Parse(format!("bad float: {e}")))
            };
            x.push(next()?);
            v.push(next()?);
            vp.push(next()?);
        }
        let get = |k: &str| -> Result<f64> {
            meta.get(k)
                .ok_or_else(|| Error::Parse(format!("missing metadata `{k}`")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad metadata `{k}`: {e}")))
        };
        if x.len() < 2 {
            return Err(Error::Parse("not a value-table CSV".into()));
        }
        Ok(Self {
            c1: get("c1")?,
            c2: get("c2")?,
            beta: get("beta")?,
            q: get("q")?,
            x,
            v,
            v_prime: vp,
        })
    }

    /// Linear interpolation of v at `x`.
    pub fn value_at(&self, x: f64) -> f64 {
        let h = self.x[1] - self.x[0];
        crate::numeric::lerp_uniform(self.x[0], h, &self.v, x)
    }
}
