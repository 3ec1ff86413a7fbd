//! Exponential Fourier decay as a proxy for the radius of spatial analyticity,
//! and the pointwise weight inequalities behind the weighted estimates.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralField, TimeGrid, Trajectory};
use crate::norms::{pm_norm, st_pm_norm};

/// Default relative noise floor: coefficients at or below this fraction of the
/// largest magnitude are ignored.
pub const DEFAULT_FLOOR_REL: f64 = 1e-14;

const MAX_BISECTIONS: usize = 200;

/// Result of [`decay_radius_estimate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub rho: f64,
    /// Distinct `|k|` values above the floor.
    pub shells: usize,
    pub usable_modes: usize,
    pub k_min: f64,
    pub k_max: f64,
    /// Fewer than two shells above the floor: the rate is unconstrained and
    /// `rho` is the upper end of the bisection bracket.
    pub insufficient_shells: bool,
    /// Least-squares slope of `ln max_{|k|=r} |k|²|v̂(k)|` against `r`, negated.
    pub slope_rho: Option<f64>,
    pub floor: f64,
}

/// Largest `ρ` with `sup_k |k|² e^{ρ|k|} |v̂(k)| ≤ κ ‖v‖_{PM²}` over modes above
/// `floor` (default `1e-14 · max |v̂|`).
pub fn decay_radius_estimate(
    field: &SpectralField,
    kappa: f64,
    floor: Option<f64>,
) -> Result<DecayEstimate> {
    let reference = pm_norm(field, 2.0)?;
    decay_radius_with_reference(field, kappa, floor, reference)
}

/// As [`decay_radius_estimate`] with an explicit right-hand side `κ · reference`.
pub fn decay_radius_with_reference(
    field: &SpectralField,
    kappa: f64,
    floor: Option<f64>,
    reference: f64,
) -> Result<DecayEstimate> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kappa must exceed 1, got {kappa}"
        )));
    }
    let peak = field.max_coeff_norm();
    if peak == 0.0 {
        return Err(Error::ZeroField);
    }
    if !(reference > 0.0) || !reference.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "reference norm must be positive, got {reference}"
        )));
    }
    let floor = floor.unwrap_or(DEFAULT_FLOOR_REL * peak);
    if !(floor >= 0.0) || floor >= peak {
        return Err(Error::InvalidArgument(format!(
            "floor {floor:e} must lie in [0, {peak:e})"
        )));
    }

    // (|k|², |k|, ln(|k|²|v̂(k)|)) for the usable modes.
    let pts: Vec<(i64, f64, f64)> = field
        .modes()
        .filter(|(_, v)| v.norm() > floor)
        .map(|(k, v)| {
            let kk = k.norm_sq();
            (kk, (kk as f64).sqrt(), (kk as f64 * v.norm()).ln())
        })
        .collect();
    let mut shells: Vec<(i64, f64, f64)> = Vec::new();
    let mut sorted = pts.clone();
    sorted.sort_by_key(|p| p.0);
    for (kk, kn, y) in sorted {
        match shells.last_mut() {
            Some(last) if last.0 == kk => last.2 = last.2.max(y),
            _ => shells.push((kk, kn, y)),
        }
    }
    let k_min = shells.first().map_or(0.0, |s| s.1);
    let k_max = shells.last().map_or(0.0, |s| s.1);
    let budget = (kappa * reference).ln();

    // Every usable mode violates the criterion at this ρ.
    let floor_for_bracket = floor.max(f64::MIN_POSITIVE);
    let rho_hi = ((kappa * reference / floor_for_bracket).ln() / k_min).max(0.0);
    let insufficient = shells.len() < 2;
    let slope_rho = (!insufficient).then(|| -least_squares_slope(&shells));

    let base = DecayEstimate {
        rho: rho_hi,
        shells: shells.len(),
        usable_modes: pts.len(),
        k_min,
        k_max,
        insufficient_shells: insufficient,
        slope_rho,
        floor,
    };
    if insufficient {
        return Ok(base);
    }

    let feasible = |rho: f64| pts.iter().all(|&(_, kn, y)| rho * kn + y <= budget);
    if !feasible(0.0) {
        return Ok(DecayEstimate { rho: 0.0, ..base });
    }
    let (mut lo, mut hi) = (0.0f64, rho_hi);
    if feasible(hi) {
        return Ok(DecayEstimate { rho: hi, ..base });
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DecayEstimate { rho: lo, ..base })
}

fn least_squares_slope(shells: &[(i64, f64, f64)]) -> f64 {
    let n = shells.len() as f64;
    let mx = shells.iter().map(|s| s.1).sum::<f64>() / n;
    let my = shells.iter().map(|s| s.2).sum::<f64>() / n;
    let sxy: f64 = shells.iter().map(|s| (s.1 - mx) * (s.2 - my)).sum();
    let sxx: f64 = shells.iter().map(|s| (s.1 - mx) * (s.1 - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "truncation-limited")]
    TruncationLimited,
    #[serde(rename = "insufficient-shells")]
    InsufficientShells,
}

impl NodeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeStatus::Pass => "PASS",
            NodeStatus::Fail => "FAIL",
            NodeStatus::TruncationLimited => "truncation-limited",
            NodeStatus::InsufficientShells => "insufficient-shells",
        }
    }

    /// Whether the node takes part in the PASS/FAIL verdict.
    pub fn is_judged(&self) -> bool {
        matches!(self, NodeStatus::Pass | NodeStatus::Fail)
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub t: f64,
    pub rho: f64,
    /// `μ√t`
    pub bound_sqrt: f64,
    /// `μαt`
    pub bound_alpha: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// `ln κ / k_max`
    pub tol: f64,
    pub slope_rho: Option<f64>,
    pub status: NodeStatus,
}

impl RadiusRow {
    pub fn bound(&self) -> f64 {
        self.bound_sqrt.max(self.bound_alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusProfile {
    pub mu: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// `‖v‖_{𝒫ℳ²}` of the trajectory, the right-hand side scale of the criterion.
    pub reference: f64,
    pub rows: Vec<RadiusRow>,
}

impl RadiusProfile {
    pub fn count(&self, status: NodeStatus) -> usize {
        self.rows.iter().filter(|r| r.status == status).count()
    }

    /// No judged node failed and at least one node was judged.
    pub fn all_pass(&self) -> bool {
        self.count(NodeStatus::Fail) == 0 && self.count(NodeStatus::Pass) > 0
    }
}

/// Decay radius at every node against `max(μ√t, μαt)`.
///
/// Each node is measured against `κ ‖v‖_{𝒫ℳ²}` (sup over the whole trajectory),
/// which is the bound the weighted solution satisfies uniformly in time. A node
/// is truncation-limited when `max(μ√t, μαt) · N` exceeds `ln(max|v̂| / floor)`,
/// the largest decay the retained coefficients can display.
pub fn radius_profile(traj: &Trajectory, mu: f64, alpha: f64, kappa: f64) -> Result<RadiusProfile> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be positive, got {mu}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kappa must exceed 1, got {kappa}"
        )));
    }
    let reference = st_pm_norm(traj, 2.0)?;
    let n = traj.spec().n() as f64;
    let horizon = (1.0 / DEFAULT_FLOOR_REL).ln();
    let rows = traj
        .times()
        .par_iter()
        .zip(traj.fields().par_iter())
        .map(|(&t, f)| {
            let bound_sqrt = mu * t.sqrt();
            let bound_alpha = mu * alpha * t;
            let required = bound_sqrt.max(bound_alpha);
            let empty = RadiusRow {
                t,
                rho: 0.0,
                bound_sqrt,
                bound_alpha,
                k_min: 0.0,
                k_max: 0.0,
                tol: 0.0,
                slope_rho: None,
                status: NodeStatus::InsufficientShells,
            };
            if f.is_zero() {
                return Ok(empty);
            }
            let est = decay_radius_with_reference(f, kappa, None, reference)?;
            let tol = kappa.ln() / est.k_max;
            let status = if required * n > horizon {
                NodeStatus::TruncationLimited
            } else if est.insufficient_shells {
                NodeStatus::InsufficientShells
            } else if est.rho >= required - tol {
                NodeStatus::Pass
            } else {
                NodeStatus::Fail
            };
            Ok(RadiusRow {
                rho: est.rho,
                k_min: est.k_min,
                k_max: est.k_max,
                tol,
                slope_rho: est.slope_rho,
                status,
                ..empty
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusProfile {
        mu,
        alpha,
        kappa,
        reference,
        rows,
    })
}

/// Sample points for [`claims_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClaimsGrid {
    /// Time samples; every pair `s ≤ t` is tested.
    pub times: Vec<f64>,
    /// Values of `|k|`.
    pub k_norms: Vec<f64>,
}

impl ClaimsGrid {
    /// 64 times (zero and 63 geometric points in `[1e-4, 10]`) and every
    /// distinct lattice norm `|k| ≤ kmax`.
    pub fn standard(kmax: u32) -> Result<Self> {
        let times = TimeGrid::geometric(1e-4, 10.0, 64)?.times().to_vec();
        let top = (kmax as i64) * (kmax as i64);
        let k_norms = (1..=top)
            .filter(|&m| is_sum_of_three_squares(m))
            .map(|m| (m as f64).sqrt())
            .collect();
        Ok(ClaimsGrid { times, k_norms })
    }
}

impl Default for ClaimsGrid {
    fn default() -> Self {
        ClaimsGrid::standard(16).expect("valid constants")
    }
}

/// Legendre: `m` is a sum of three squares unless `m = 4^a (8b + 7)`.
fn is_sum_of_three_squares(mut m: i64) -> bool {
    while m % 4 == 0 && m > 0 {
        m /= 4;
    }
    m % 8 != 7
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClaimsReport {
    pub evaluations: usize,
    pub violations: usize,
    /// `max (log LHS - log RHS)`; nonpositive when nothing is violated.
    pub worst_margin: f64,
}

/// Evaluates, in log space, for every `s ≤ t` and `|k|` on the grid:
///
/// * `μ√t|k| - μt|k|² ≤ μ/2 - μt|k|²/2`
/// * `μαt|k| - μt|k|² ≤ -(1-α)μt|k|²`
/// * `μ(√t-√s)|k| - μ(t-s)|k|² ≤ μ/2 - μ(t-s)|k|²/2`
/// * `μα(t-s)|k| - μ(t-s)|k|² ≤ -(1-α)μ(t-s)|k|²`
///
/// A violation is an excess above `1e-12 · max(1, |LHS|, |RHS|)`.
pub fn claims_check(mu: f64, alpha: f64, grid: &ClaimsGrid) -> ClaimsReport {
    let mut rep = ClaimsReport {
        worst_margin: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut judge = |lhs: f64, rhs: f64| {
        rep.evaluations += 1;
        let d = lhs - rhs;
        rep.worst_margin = rep.worst_margin.max(d);
        if d > 1e-12 * 1f64.max(lhs.abs()).max(rhs.abs()) {
            rep.violations += 1;
        }
    };
    for (i, &t) in grid.times.iter().enumerate() {
        for &k in &grid.k_norms {
            let k2 = k * k;
            judge(
                mu * t.sqrt() * k - mu * t * k2,
                mu / 2.0 - mu * t * k2 / 2.0,
            );
            judge(
                mu * alpha * t * k - mu * t * k2,
                -(1.0 - alpha) * mu * t * k2,
            );
            for &s in &grid.times[..=i] {
                let d = t - s;
                judge(
                    mu * (t.sqrt() - s.sqrt()) * k - mu * d * k2,
                    mu / 2.0 - mu * d * k2 / 2.0,
                );
                judge(
                    mu * alpha * d * k - mu * d * k2,
                    -(1.0 - alpha) * mu * d * k2,
                );
            }
        }
    }
    rep
}
