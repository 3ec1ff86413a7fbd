//! Fourier-side operators: Leray projection, heat semigroup, Gevrey weights,
//! exact truncated convolution and the Duhamel bilinear forms.

mod bilinear;
mod convolution;

pub use bilinear::{
    bilinear_form, duhamel_integrate, nonlinear_term, weighted_bilinear_form, BilinearEngine,
};
pub use convolution::{truncated_convolution, ConvPath, ConvolutionTensor, Convolver};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{project_onto_k_perp, FieldFlags, SpectralField, TimeGrid, Trajectory};

/// Largest exponent `μ b |k|` accepted by the Gevrey weight (natural-log scale).
pub const MAX_WEIGHT_EXPONENT: f64 = 700.0;

/// Time profile `b(t)` of the Gevrey weight `e^{μ b(t) |D|}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "weight", rename_all = "snake_case")]
pub enum WeightKind {
    None,
    /// `b(t) = √t`
    SqrtT,
    /// `b(t) = α t`, `α ∈ (0, 1)`
    AlphaT {
        alpha: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSchedule {
    pub mu: f64,
    pub weight: WeightKind,
}

impl KernelSchedule {
    pub fn new(mu: f64, weight: WeightKind) -> Result<Self> {
        let s = KernelSchedule { mu, weight };
        s.validate()?;
        Ok(s)
    }

    pub fn unweighted(mu: f64) -> Result<Self> {
        Self::new(mu, WeightKind::None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {}",
                self.mu
            )));
        }
        if let WeightKind::AlphaT { alpha } = self.weight {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "alpha must lie in (0,1), got {alpha}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_weighted(&self) -> bool {
        self.weight != WeightKind::None
    }

    /// `b(t)`; identically zero for the unweighted schedule.
    pub fn b(&self, t: f64) -> f64 {
        match self.weight {
            WeightKind::None => 0.0,
            WeightKind::SqrtT => t.sqrt(),
            WeightKind::AlphaT { alpha } => alpha * t,
        }
    }

    /// Rejects grids on which `μ b(t) |k|` would exceed [`MAX_WEIGHT_EXPONENT`].
    pub fn check_range(&self, n: u32, grid: &TimeGrid) -> Result<()> {
        let b_max = grid.times().iter().map(|&t| self.b(t)).fold(0.0, f64::max);
        check_weight_exponent(self.mu, b_max, n)
    }
}

fn check_weight_exponent(mu: f64, b_value: f64, n: u32) -> Result<()> {
    let exponent = mu * b_value * max_euclid_norm(n);
    if !(exponent <= MAX_WEIGHT_EXPONENT) {
        return Err(Error::Range(format!(
            "Gevrey weight exponent μ·b·|k|max = {exponent:.3} exceeds {MAX_WEIGHT_EXPONENT} (μ={mu}, b={b_value}, N={n})"
        )));
    }
    Ok(())
}

/// `|k|` of the lattice corner `(N, N, N)`.
pub fn max_euclid_norm(n: u32) -> f64 {
    3f64.sqrt() * n as f64
}

/// `v̂ ↦ v̂ - k (k·v̂)/|k|²`
pub fn leray_project(field: &SpectralField) -> SpectralField {
    let flags = FieldFlags {
        div_free: true,
        ..field.flags()
    };
    field.map_modes(project_onto_k_perp).with_flags(flags)
}

/// `e^{μ t Δ} v₀` at every grid node.
pub fn heat_propagate(v0: &SpectralField, mu: f64, grid: &TimeGrid) -> Result<Trajectory> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be positive, got {mu}"
        )));
    }
    let fields = grid
        .times()
        .iter()
        .map(|&t| {
            if t == 0.0 {
                v0.clone()
            } else {
                v0.map_modes(|k, v| v.scale((-mu * t * k.norm_sq() as f64).exp()))
            }
        })
        .collect();
    Trajectory::new(grid.clone(), fields)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightDirection {
    /// multiply by `e^{+μ b |k|}`
    Apply,
    /// multiply by `e^{-μ b |k|}`
    Invert,
}

/// Multiplies every coefficient by `e^{±μ b |k|}`.
pub fn gevrey_weight(
    field: &SpectralField,
    mu: f64,
    b_value: f64,
    direction: WeightDirection,
) -> Result<SpectralField> {
    if !(b_value >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight argument b must be nonnegative, got {b_value}"
        )));
    }
    check_weight_exponent(mu, b_value, field.spec().n())?;
    if b_value == 0.0 {
        return Ok(field.clone());
    }
    let sign = match direction {
        WeightDirection::Apply => 1.0,
        WeightDirection::Invert => -1.0,
    };
    Ok(field.map_modes(|k, v| v.scale((sign * mu * b_value * k.euclid_norm()).exp())))
}

/// Applies `e^{±μ b(t_i) |D|}` node by node.
pub fn gevrey_weight_trajectory(
    traj: &Trajectory,
    sched: &KernelSchedule,
    direction: WeightDirection,
) -> Result<Trajectory> {
    sched.check_range(traj.spec().n(), traj.grid())?;
    let fields = traj
        .times()
        .iter()
        .zip(traj.fields())
        .map(|(&t, f)| gevrey_weight(f, sched.mu, sched.b(t), direction))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(traj.grid().clone(), fields)
}

/// `e^{μ b(t)|D|} e^{μ t Δ} v₀`, the free evolution in the weighted frame.
pub fn weighted_heat_propagate(
    v0: &SpectralField,
    sched: &KernelSchedule,
    grid: &TimeGrid,
) -> Result<Trajectory> {
    sched.validate()?;
    sched.check_range(v0.spec().n(), grid)?;
    let mu = sched.mu;
    let fields = grid
        .times()
        .iter()
        .map(|&t| {
            let b = sched.b(t);
            if t == 0.0 {
                v0.clone()
            } else {
                v0.map_modes(|k, v| {
                    v.scale((mu * b * k.euclid_norm() - mu * t * k.norm_sq() as f64).exp())
                })
            }
        })
        .collect();
    Trajectory::new(grid.clone(), fields)
}
