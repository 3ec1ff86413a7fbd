//! Picard iteration `x_{n+1} = x₀ + B(x_n, x_n)` for the mild formulation, plain
//! and in the Gevrey-weighted frame, with contraction monitoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{make_random_divfree, FieldFlags, SpectralField, TimeGrid, Trajectory};
use crate::lattice::LatticeSpec;
use crate::norms::{triple_norm, Quadrature};
use crate::operators::{
    heat_propagate, weighted_heat_propagate, BilinearEngine, ConvPath, Convolver, KernelSchedule,
    WeightKind,
};

/// Consecutive non-contracting iterations that count as divergence.
pub const DIVERGENCE_STREAK: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpacing {
    #[default]
    Geometric,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub nodes: usize,
    #[serde(default)]
    pub spacing: GridSpacing,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            t_min: 1e-4,
            t_max: 10.0,
            nodes: 128,
            spacing: GridSpacing::Geometric,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<TimeGrid> {
        if !(self.t_min > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "t_min must be positive, got {}",
                self.t_min
            )));
        }
        if self.nodes < 16 {
            return Err(Error::InvalidGrid(format!(
                "need at least 16 nodes, got {}",
                self.nodes
            )));
        }
        match self.spacing {
            GridSpacing::Geometric => TimeGrid::geometric(self.t_min, self.t_max, self.nodes),
            GridSpacing::Uniform => TimeGrid::uniform(self.t_max, self.nodes),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub spec: LatticeSpec,
    pub mu: f64,
    pub grid: GridConfig,
    /// Bound on the bilinear norm; measured from random pairs when absent.
    pub eta: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub weight: WeightKind,
    pub quadrature: Quadrature,
    pub conv_path: ConvPath,
    /// Random pairs used when measuring the bilinear constant.
    pub eta_samples: usize,
    pub seed: u64,
    /// Iterate even when `4η|||x₀||| ≥ 1`.
    pub allow_inadmissible: bool,
}

impl SolverConfig {
    pub fn new(spec: LatticeSpec, mu: f64) -> Self {
        SolverConfig {
            spec,
            mu,
            grid: GridConfig::default(),
            eta: None,
            max_iter: 50,
            tol: 1e-10,
            weight: WeightKind::None,
            quadrature: Quadrature::Trapezoid,
            conv_path: ConvPath::Fast,
            eta_samples: 4,
            seed: 0,
            allow_inadmissible: false,
        }
    }

    pub fn schedule(&self) -> Result<KernelSchedule> {
        KernelSchedule::new(self.mu, self.weight)
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.grid.build()?;
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "eta must be positive, got {eta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `|||x_n|||`
    pub triple: f64,
    /// `|||x_n - x_{n-1}|||`
    pub diff: f64,
    /// `diff_n / diff_{n-1}`; absent for the first iteration or a zero predecessor.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub x0_triple: f64,
    pub eta: f64,
    pub eta_measured: bool,
    pub admissible: bool,
    pub margin: f64,
    /// Fraction of the initial self-interaction that falls outside the lattice.
    pub truncated_fraction: f64,
    /// `|||x||| ≤ 2|||x₀|||` at the last iterate.
    pub within_double_x0: bool,
    /// `|||x||| < 1/(2η)` at the last iterate.
    pub within_ball: bool,
}

impl ConvergenceReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_triple(&self) -> f64 {
        self.records.last().map_or(self.x0_triple, |r| r.triple)
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }

    pub fn nonlinearity_truncated(&self) -> bool {
        self.truncated_fraction >= 1.0 - 1e-12
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smallness {
    pub admissible: bool,
    pub margin: f64,
    pub x0_triple: f64,
}

/// `4η|||x₀||| < 1` and the margin `1 - 4η|||x₀|||`.
pub fn smallness_from(x0_triple: f64, eta: f64) -> Smallness {
    let margin = 1.0 - 4.0 * eta * x0_triple;
    Smallness {
        admissible: margin > 0.0,
        margin,
        x0_triple,
    }
}

/// Free evolution `x₀`, weighted when the configured schedule has a weight.
pub fn free_evolution(v0: &SpectralField, cfg: &SolverConfig) -> Result<Trajectory> {
    let grid = cfg.grid.build()?;
    let sched = cfg.schedule()?;
    if v0.spec() != cfg.spec {
        return Err(Error::SpecMismatch(cfg.spec.n(), v0.spec().n()));
    }
    if sched.is_weighted() {
        weighted_heat_propagate(v0, &sched, &grid)
    } else {
        heat_propagate(v0, cfg.mu, &grid)
    }
}

/// Smallness test with `η` from the config, or measured when unset.
pub fn smallness_check(v0: &SpectralField, cfg: &SolverConfig) -> Result<Smallness> {
    cfg.validate()?;
    let x0 = free_evolution(v0, cfg)?;
    let x0_triple = triple_norm(&x0, cfg.quadrature, cfg.mu)?;
    let eta = match cfg.eta {
        Some(e) => e,
        None => Solver::new(cfg)?.measure_bilinear_constant(&[&x0])?,
    };
    Ok(smallness_from(x0_triple, eta))
}

/// Frobenius-energy fraction of the self-convolution of `v0` that lands outside
/// `|k|∞ ≤ N`; `0` for the zero field.
pub fn truncated_fraction(v0: &SpectralField) -> Result<f64> {
    if v0.is_zero() {
        return Ok(0.0);
    }
    let inner = v0.spec();
    let outer = LatticeSpec::new(2 * inner.n())?;
    let mut wide = SpectralField::zeros(outer, v0.flags());
    for (k, v) in v0.modes() {
        wide.set(k, *v)?;
    }
    let t = Convolver::new(outer, ConvPath::Fast).convolve(&wide, &wide)?;
    let (mut kept, mut total) = (0.0, 0.0);
    for (idx, m) in t.dense().iter().enumerate() {
        let e: f64 = m.iter().flatten().map(|c| c.norm_sqr()).sum();
        total += e;
        if outer.wavevector_at(idx).sup_norm() <= inner.n() {
            kept += e;
        }
    }
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - kept / total).clamp(0.0, 1.0))
}

/// One configured solve: engine, grid and schedule.
pub struct Solver {
    cfg: SolverConfig,
    grid: TimeGrid,
    sched: KernelSchedule,
    engine: BilinearEngine,
}

impl Solver {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid.build()?;
        let sched = cfg.schedule()?;
        sched.check_range(cfg.spec.n(), &grid)?;
        let engine = BilinearEngine::new(cfg.spec, cfg.mu, cfg.conv_path)?;
        Ok(Solver {
            cfg: cfg.clone(),
            grid,
            sched,
            engine,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn triple(&self, x: &Trajectory) -> Result<f64> {
        triple_norm(x, self.cfg.quadrature, self.cfg.mu)
    }

    /// `B(F, G)` in the configured frame.
    pub fn bilinear(&self, f: &Trajectory, g: &Trajectory) -> Result<Trajectory> {
        if self.sched.is_weighted() {
            self.engine.apply_weighted(f, g, &self.sched)
        } else {
            self.engine.apply(f, g)
        }
    }

    fn free(&self, v0: &SpectralField) -> Result<Trajectory> {
        free_evolution(v0, &self.cfg)
    }

    /// `max |||B(F,G)||| / (|||F||| |||G|||)` over random heat-type pairs and the given
    /// trajectories paired with themselves.
    pub fn measure_bilinear_constant(&self, extra: &[&Trajectory]) -> Result<f64> {
        let mut best = 0.0f64;
        let mut consider = |f: &Trajectory, g: &Trajectory| -> Result<()> {
            let nf = self.triple(f)?;
            let ng = self.triple(g)?;
            if nf > 0.0 && ng > 0.0 {
                let ratio = self.triple(&self.bilinear(f, g)?)? / (nf * ng);
                best = best.max(ratio);
            }
            Ok(())
        };
        for x in extra {
            consider(x, x)?;
        }
        for i in 0..self.cfg.eta_samples as u64 {
            let seed = self.cfg.seed.wrapping_mul(1000).wrapping_add(2 * i);
            let p = [2.0, 2.5, 3.0][(i % 3) as usize];
            let a = make_random_divfree(self.cfg.spec, 1.0, p, seed)?;
            let b = make_random_divfree(self.cfg.spec, 1.0, 2.0, seed + 1)?;
            let fa = self.free(&a)?;
            let fb = self.free(&b)?;
            consider(&fa, &fb)?;
        }
        if !(best > 0.0) {
            return Err(Error::InvalidArgument(
                "bilinear constant measurement found no nonzero pair".into(),
            ));
        }
        Ok(best)
    }

    /// Iterates from `x₀` itself.
    pub fn solve(&self, v0: &SpectralField) -> Result<(Trajectory, ConvergenceReport)> {
        self.solve_from(v0, None)
    }

    /// Iterates from `initial` (defaults to `x₀`).
    pub fn solve_from(
        &self,
        v0: &SpectralField,
        initial: Option<Trajectory>,
    ) -> Result<(Trajectory, ConvergenceReport)> {
        let x0 = self.free(v0)?;
        let x0_triple = self.triple(&x0)?;
        let (eta, eta_measured) = match self.cfg.eta {
            Some(e) => (e, false),
            None if v0.is_zero() => (self.measure_bilinear_constant(&[])?, true),
            None => (self.measure_bilinear_constant(&[&x0])?, true),
        };
        let small = smallness_from(x0_triple, eta);
        if !small.admissible && !self.cfg.allow_inadmissible {
            return Err(Error::Inadmissible(format!(
                "smallness condition fails: 4·η·|||x₀||| = {:.6e} ≥ 1 (set allow_inadmissible to proceed)",
                4.0 * eta * x0_triple
            )));
        }
        let mut report = ConvergenceReport {
            records: Vec::new(),
            stop: StopReason::MaxIter,
            x0_triple,
            eta,
            eta_measured,
            admissible: small.admissible,
            margin: small.margin,
            truncated_fraction: truncated_fraction(v0)?,
            within_double_x0: false,
            within_ball: false,
        };

        let mut x = match initial {
            Some(t) => {
                if t.grid() != &self.grid {
                    return Err(Error::GridMismatch);
                }
                t
            }
            None => x0.clone(),
        };
        let mut streak = 0;
        for _ in 0..self.cfg.max_iter {
            let next = x0.add(&self.bilinear(&x, &x)?)?;
            let diff = self.triple(&next.sub(&x)?)?;
            let triple = self.triple(&next)?;
            let ratio = report
                .records
                .last()
                .and_then(|r| (r.diff > 0.0).then(|| diff / r.diff));
            report.records.push(IterationRecord {
                triple,
                diff,
                ratio,
            });
            x = next;
            if diff <= self.cfg.tol {
                report.stop = StopReason::Converged;
                break;
            }
            if ratio.is_some_and(|r| r >= 1.0) {
                streak += 1;
                if streak >= DIVERGENCE_STREAK {
                    report.stop = StopReason::Diverged;
                    return Err(Error::Diverged(Box::new(report)));
                }
            } else {
                streak = 0;
            }
        }

        let final_triple = report.final_triple();
        report.within_double_x0 = final_triple <= 2.0 * x0_triple;
        report.within_ball = final_triple < 1.0 / (2.0 * eta);
        if report.stop == StopReason::Converged
            && report.admissible
            && !(report.within_double_x0 && report.within_ball)
        {
            return Err(Error::BoundViolated(format!(
                "|||x||| = {final_triple:.6e}, |||x₀||| = {x0_triple:.6e}, η = {eta:.6e}"
            )));
        }
        Ok((x, report))
    }

    /// `|||x - (x₀ + B(x, x))|||`
    pub fn residual(&self, x: &Trajectory, v0: &SpectralField) -> Result<f64> {
        let x0 = self.free(v0)?;
        let image = x0.add(&self.bilinear(x, x)?)?;
        self.triple(&x.sub(&image)?)
    }
}

/// Unweighted Picard solve.
pub fn picard_solve(
    v0: &SpectralField,
    cfg: &SolverConfig,
) -> Result<(Trajectory, ConvergenceReport)> {
    if cfg.weight != WeightKind::None {
        return Err(Error::InvalidArgument(
            "picard_solve expects an unweighted schedule; use gevrey_solve".into(),
        ));
    }
    Solver::new(cfg)?.solve(v0)
}

/// Solve for `V = e^{μ b(t)|D|} v`.
pub fn gevrey_solve(
    v0: &SpectralField,
    cfg: &SolverConfig,
) -> Result<(Trajectory, ConvergenceReport)> {
    if cfg.weight == WeightKind::None {
        return Err(Error::InvalidArgument(
            "gevrey_solve needs weight sqrt_t or alpha_t".into(),
        ));
    }
    Solver::new(cfg)?.solve(v0)
}

pub fn residual_check(traj: &Trajectory, v0: &SpectralField, cfg: &SolverConfig) -> Result<f64> {
    Solver::new(cfg)?.residual(traj, v0)
}

/// Zero trajectory on the configured grid, a second starting point for uniqueness checks.
pub fn zero_start(cfg: &SolverConfig) -> Result<Trajectory> {
    Ok(Trajectory::zeros(
        cfg.spec,
        FieldFlags::REAL_DIV_FREE,
        cfg.grid.build()?,
    ))
}
