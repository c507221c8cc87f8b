//! Selection of the optimal barrier pair (c₁*, c₂*).
//!
//! The two-dimensional minimisation of
//! g(c₁,c₂) = (H(c₂) − H(c₁))/(c₂ − c₁ − β) collapses onto one-dimensional
//! problems through the geometry of H′: log-convexity gives a unique
//! minimiser a* of H′ on [0,∞), the conjugate map ζ pairs points across it
//! by H′(ζ(x)) = H′(x), and the threshold
//! β_max = ζ(0) − (H(ζ(0)) − H(0))/H′(0+) decides whether the lower barrier
//! detaches from zero:
//!
//! * a* > 0 and β < β_max — interior case, c₁* = argmin g₁, c₂* = ζ(c₁*);
//! * a* > 0 and β ≥ β_max — c₁* = 0, c₂* = argmin g₀;
//! * a* = 0 — c₁* = 0, c₂* = argmin g₀.
//!
//! All searches run on the linear interpolant of the solved table, so
//! their resolution floor is tied to the grid step.

use serde::Serialize;

use crate::omega::OmegaScaleTable;
use crate::{Error, Result};

/// A candidate or optimal barrier pair; payments bring the surplus from
/// above `c2` down to `c1` at fixed cost `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierPair {
    pub c1: f64,
    pub c2: f64,
    pub beta: f64,
}

impl BarrierPair {
    pub fn new(c1: f64, c2: f64, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
        }
        if !(c1 >= 0.0) {
            return Err(Error::Domain(format!("c1 must be >= 0, got {c1}")));
        }
        if !(c2 > c1 + beta) {
            return Err(Error::Domain(format!(
                "need c2 > c1 + beta, got c1={c1}, c2={c2}, beta={beta}"
            )));
        }
        Ok(Self { c1, c2, beta })
    }
}

/// Which branch of the selection rule produced the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerCase {
    Interior,
    CornerBeta,
    CornerAstar,
}

/// β_max is undefined when H′ is already nondecreasing from 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMax {
    Value(f64),
    NotApplicable,
}

impl BetaMax {
    pub fn value(self) -> Option<f64> {
        match self {
            BetaMax::Value(v) => Some(v),
            BetaMax::NotApplicable => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FocResiduals {
    /// |H′(c₂*) − g(c₁*, c₂*)|.
    pub foc_c2: f64,
    /// Interior case only: |H′(c₁*) − H′(c₂*)| / H′(c₂*).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foc_c1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerDiagnostics {
    pub a_star: f64,
    pub beta_max: Option<f64>,
    pub c1_max: f64,
    pub case: OptimizerCase,
    pub c1_star: f64,
    pub c2_star: f64,
    pub g_value: f64,
    pub residuals: FocResiduals,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Tolerance on the first-order condition H′(c₂*) = g(c₁*, c₂*).
pub const FOC_TOL: f64 = 1e-4;
/// Relative tolerance on H′(c₁*) = H′(c₂*) in the interior case.
pub const FOC_INTERIOR_REL_TOL: f64 = 1e-8;

/// g(c₁, c₂) = (H(c₂) − H(c₁)) / (c₂ − c₁ − β) on the interpolated table.
pub fn g(table: &OmegaScaleTable, c1: f64, c2: f64, beta: f64) -> Result<f64> {
    if !(c1 >= 0.0) || !(c2 > c1 + beta) {
        return Err(Error::Domain(format!(
            "(c1, c2) = ({c1}, {c2}) outside dom(g) for beta = {beta}"
        )));
    }
    if c2 > table.x_max() || c1 > table.x_max() {
        return Err(Error::Domain(format!(
            "barrier beyond table range [0, {}]",
            table.x_max()
        )));
    }
    Ok((table.h_at(c2) - table.h_at(c1)) / (c2 - c1 - beta))
}

/// Global minimiser a* of H′ on [0, x_max].
///
/// Returns 0 when H′ is nondecreasing from 0; errors when the minimum sits
/// at the right edge, since H′ → ∞ forces an interior minimiser on any
/// sufficiently long grid.
pub fn a_star(table: &OmegaScaleTable) -> Result<f64> {
    let hp = table.h_prime_values();
    let z = table.zero_index();
    let mut best = z;
    for k in z..hp.len() {
        if hp[k] < hp[best] {
            best = k;
        }
    }
    if best == hp.len() - 1 {
        return Err(Error::XMaxTooSmall(format!(
            "H' attains its minimum at the grid edge x = {}; enlarge x_max",
            table.x_max()
        )));
    }
    if best == z {
        return Ok(0.0);
    }
    // Ternary refinement over the two cells flanking the grid argmin; for a
    // piecewise-linear interpolant this settles on the node.
    let x = table.grid();
    let (mut lo, mut hi) = (x[best - 1], x[best + 1]);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if table.h_prime_at(m1) <= table.h_prime_at(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// ζ(c₁): the unique point above a* with H′(ζ(c₁)) = H′(c₁), for
/// 0 < c₁ < a*.
pub fn zeta(table: &OmegaScaleTable, c1: f64) -> Result<f64> {
    let astar = a_star(table)?;
    if !(c1 > 0.0 && c1 < astar) {
        return Err(Error::Domain(format!(
            "zeta requires 0 < c1 < a* = {astar}, got {c1}"
        )));
    }
    let target = table.h_prime_at(c1);
    let hp = table.h_prime_values();
    let x = table.grid();
    let n = hp.len() - 1;
    if target > hp[n] {
        return Err(Error::XMaxTooSmall(format!(
            "H'({c1}) = {target} exceeds H'(x_max) = {}; enlarge x_max",
            hp[n]
        )));
    }
    // H' is increasing right of a*; locate the crossing cell and solve the
    // linear interpolant exactly.
    let start = ((astar - table.a()) / table.h()).ceil() as usize;
    let mut lo = start.max(1);
    let mut hi = n;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if hp[mid] < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (j0, j1) = (hi - 1, hi);
    let denom = hp[j1] - hp[j0];
    let frac = if denom.abs() < 1e-300 {
        0.0
    } else {
        ((target - hp[j0]) / denom).clamp(0.0, 1.0)
    };
    Ok(x[j0] + frac * (x[j1] - x[j0]))
}

/// ζ evaluated "at 0", i.e. one grid step in from the boundary (the
/// interpolated H′ is continuous at 0+, so this converges with the grid).
fn zeta_at_zero(table: &OmegaScaleTable, astar: f64) -> Result<f64> {
    let eps = table.h().min(0.5 * astar);
    zeta(table, eps)
}

/// β_max = ζ(0) − (H(ζ(0)) − H(0)) / H′(0+); `NotApplicable` when a* = 0.
pub fn beta_max(table: &OmegaScaleTable) -> Result<BetaMax> {
    let astar = a_star(table)?;
    if astar == 0.0 {
        return Ok(BetaMax::NotApplicable);
    }
    let z0 = zeta_at_zero(table, astar)?;
    let h0 = table.h_at(0.0);
    let value = z0 - (table.h_at(z0) - h0) / table.h_prime_at_zero();
    if !(value > 0.0) {
        return Err(Error::Optimizer(format!(
            "beta_max = {value} is not positive; table is inconsistent"
        )));
    }
    Ok(BetaMax::Value(value))
}

/// c₁_max = inf{c₁ ∈ (0, a*) : ζ(c₁) − c₁ ≤ β}, with the convention 0 when
/// ζ(0) ≤ β or a* = 0.
pub fn c1_max(table: &OmegaScaleTable, beta: f64) -> Result<f64> {
    let astar = a_star(table)?;
    if astar == 0.0 {
        return Ok(0.0);
    }
    let z0 = zeta_at_zero(table, astar)?;
    if z0 <= beta {
        return Ok(0.0);
    }
    let eps = table.h().min(0.5 * astar);
    let surplus = |c: f64| zeta(table, c).map(|z| z - c - beta);
    if surplus(eps)? <= 0.0 {
        return Ok(eps);
    }
    let hi = astar * (1.0 - 1e-9);
    if surplus(hi)? > 0.0 {
        // ζ(c) − c → 0 at a*, so only a degenerate grid gets here.
        return Err(Error::Optimizer(
            "zeta(c) - c - beta does not change sign below a*".into(),
        ));
    }
    let root = crate::numeric::bisect_root(
        |c| surplus(c).unwrap_or(f64::NAN),
        eps,
        hi,
        1e-13,
    );
    Ok(root)
}

/// Samples `f` at `points`, checks the decrease-then-increase shape expected
/// of g₀ and g₁, and returns the index of the sampled minimum.
fn unimodal_argmin(
    f: &impl Fn(f64) -> f64,
    points: &[f64],
    label: &str,
) -> Result<usize> {
    let samples: Vec<f64> = points.iter().map(|&x| f(x)).collect();
    let mut best = 0;
    for (i, &s) in samples.iter().enumerate() {
        if s < samples[best] {
            best = i;
        }
    }
    for i in 0..samples.len() - 1 {
        let tol = 1e-10 * (1.0 + samples[i].abs());
        let ok = if i < best {
            samples[i + 1] <= samples[i] + tol
        } else {
            samples[i + 1] >= samples[i] - tol
        };
        if !ok {
            return Err(Error::Optimizer(format!(
                "{label} is not decrease-then-increase on the sample grid: \
                 f({}) = {}, f({}) = {} around argmin index {best}",
                points[i],
                samples[i],
                points[i + 1],
                samples[i + 1]
            )));
        }
    }
    Ok(best)
}

/// Golden-section over the cell around the sampled argmin, then a bisection
/// polish on the critical-point identity `obj = H′` when a sign change
/// brackets it.
fn refine_min(
    table: &OmegaScaleTable,
    obj: &impl Fn(f64) -> f64,
    points: &[f64],
    best: usize,
) -> f64 {
    let lo = points[best.saturating_sub(1)];
    let hi = points[(best + 1).min(points.len() - 1)];
    let (mut c, _) = crate::numeric::golden_section_min(obj, lo, hi, 1e-12);
    // At the true minimiser obj crosses H' (from either side, depending on
    // the objective); a sign-change bisection nails it to machine precision
    // where golden section alone saturates at sqrt(eps).
    let crit = |x: f64| obj(x) - table.h_prime_at(x);
    for widen in [1.0, 4.0, 16.0] {
        let delta = widen * table.h();
        let (bl, bh) = (c - delta, c + delta);
        if bl > points[0] && bh < points[points.len() - 1] && crit(bl) * crit(bh) < 0.0 {
            c = crate::numeric::bisect_root(crit, bl, bh, 1e-14);
            break;
        }
    }
    c
}

/// Minimiser c̄ of g₁(c₁) = (H(ζ(c₁)) − H(c₁)) / (ζ(c₁) − c₁ − β) on
/// (0, c₁_max); requires the interior case a* > 0, β < β_max.
pub fn minimize_g1(table: &OmegaScaleTable, beta: f64) -> Result<f64> {
    let astar = a_star(table)?;
    if astar == 0.0 {
        return Err(Error::Optimizer("g1 needs a* > 0".into()));
    }
    match beta_max(table)? {
        BetaMax::Value(bm) if beta < bm => {}
        _ => {
            return Err(Error::Optimizer(format!(
                "g1 minimisation requires beta < beta_max, got beta = {beta}"
            )));
        }
    }
    let cmax = c1_max(table, beta)?;
    if cmax <= 0.0 {
        return Err(Error::Optimizer("c1_max = 0: g1 has empty domain".into()));
    }
    let g1 = |c: f64| {
        let z = zeta(table, c).unwrap_or(f64::NAN);
        (table.h_at(z) - table.h_at(c)) / (z - c - beta)
    };
    let lo = cmax * 1e-6;
    let hi = cmax * (1.0 - 1e-6);
    let points: Vec<f64> = (0..64)
        .map(|i| lo + (hi - lo) * i as f64 / 63.0)
        .collect();
    let best = unimodal_argmin(&g1, &points, "g1")?;
    let cbar = refine_min(table, &g1, &points, best);
    let resid = (g1(cbar) - table.h_prime_at(cbar)).abs();
    if resid > FOC_TOL {
        return Err(Error::Optimizer(format!(
            "g1 critical-point residual {resid} exceeds {FOC_TOL} at c = {cbar}"
        )));
    }
    Ok(cbar)
}

/// Minimiser ĉ of g₀(c₂) = (H(c₂) − H(0)) / (c₂ − β) on (β, x_max).
pub fn minimize_g0(table: &OmegaScaleTable, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let h0 = table.h_at(0.0);
    let g0 = |c: f64| (table.h_at(c) - h0) / (c - beta);
    let span = table.x_max() - beta;
    // Quadratic spacing puts more samples near the β singularity.
    let points: Vec<f64> = (1..=64)
        .map(|i| {
            let t = i as f64 / 64.0;
            beta + span * t * t
        })
        .collect();
    // The minimum sits where g0 crosses H' from above; make sure the
    // bracket exists before trusting the sampled argmin.
    let crosses = points
        .iter()
        .any(|&c| g0(c) - table.h_prime_at(c) < 0.0);
    if !crosses {
        return Err(Error::XMaxTooSmall(
            "no bracket for the g0 minimiser below x_max".into(),
        ));
    }
    let best = unimodal_argmin(&g0, &points, "g0")?;
    let chat = refine_min(table, &g0, &points, best);
    let resid = (g0(chat) - table.h_prime_at(chat)).abs();
    if resid > FOC_TOL {
        return Err(Error::Optimizer(format!(
            "g0 critical-point residual {resid} exceeds {FOC_TOL} at c = {chat}"
        )));
    }
    Ok(chat)
}

/// The three-case selection rule, with first-order-condition verification.
pub fn optimize(
    table: &OmegaScaleTable,
    beta: f64,
) -> Result<(BarrierPair, OptimizerDiagnostics)> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let astar = a_star(table)?;
    let bmax = if astar > 0.0 {
        beta_max(table)?
    } else {
        BetaMax::NotApplicable
    };
    let mut warnings = Vec::new();
    let (case, c1s, c2s) = match bmax {
        // β = β_max exactly ties to the corner case per the theorem's
        // "β ≥ β_max".
        BetaMax::Value(bm) if beta < bm => {
            let cbar = minimize_g1(table, beta)?;
            let c2 = zeta(table, cbar)?;
            if (cbar - astar).abs() < table.h() {
                warnings.push(format!(
                    "g1 minimiser {cbar} sits at the boundary of zeta's domain (a* = {astar})"
                ));
            }
            (OptimizerCase::Interior, cbar, c2)
        }
        BetaMax::Value(_) => {
            let chat = minimize_g0(table, beta)?;
            (OptimizerCase::CornerBeta, 0.0, chat)
        }
        BetaMax::NotApplicable => {
            let chat = minimize_g0(table, beta)?;
            (OptimizerCase::CornerAstar, 0.0, chat)
        }
    };
    let barriers = BarrierPair::new(c1s, c2s, beta)?;
    let g_value = g(table, c1s, c2s, beta)?;
    let foc_c2 = (table.h_prime_at(c2s) - g_value).abs();
    if foc_c2 > FOC_TOL {
        return Err(Error::Optimizer(format!(
            "first-order condition H'(c2*) = g(c1*, c2*) fails: residual {foc_c2}"
        )));
    }
    let foc_c1 = if case == OptimizerCase::Interior {
        let r = (table.h_prime_at(c1s) - table.h_prime_at(c2s)).abs() / table.h_prime_at(c2s);
        if r > FOC_INTERIOR_REL_TOL {
            return Err(Error::Optimizer(format!(
                "interior condition H'(c1*) = H'(c2*) fails: relative residual {r}"
            )));
        }
        Some(r)
    } else {
        None
    };
    let diagnostics = OptimizerDiagnostics {
        a_star: astar,
        beta_max: bmax.value(),
        c1_max: c1_max(table, beta)?,
        case,
        c1_star: c1s,
        c2_star: c2s,
        g_value,
        residuals: FocResiduals { foc_c2, foc_c1 },
        warnings,
    };
    Ok((barriers, diagnostics))
}
