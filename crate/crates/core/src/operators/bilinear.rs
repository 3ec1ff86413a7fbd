//! Duhamel bilinear forms
//!
//! ```text
//! B(F, G)(t) = -∫_0^t e^{μ(t-s)Δ} P div(F ⊗ G)(s) ds
//! ```
//!
//! with `div(F ⊗ G)_i ↦ i Σ_j k_j (F̂_i * Ĝ_j)(k)` on the Fourier side. The
//! integrand is interpolated linearly in `s` between grid nodes and each
//! interval is integrated in closed form against the heat kernel.

use num_complex::Complex64;
use rayon::prelude::*;

use super::convolution::{ConvPath, ConvolutionTensor, Convolver};
use super::{gevrey_weight, KernelSchedule, WeightDirection};
use crate::error::{Error, Result};
use crate::field::{project_onto_k_perp, CVec3, FieldFlags, SpectralField, Trajectory};
use crate::quadrature::{ramp_down, ramp_up};

/// `W(k) = i P(k) Σ_j k_j T_ij(k)`, the Fourier symbol of `P div(F ⊗ G)`.
pub fn nonlinear_term(tensor: &ConvolutionTensor, flags: FieldFlags) -> SpectralField {
    let spec = tensor.spec();
    let dense = tensor.dense();
    let zero = spec.zero_index();
    let data = (0..spec.cube_len())
        .map(|idx| {
            if idx == zero {
                return CVec3::ZERO;
            }
            let k = spec.wavevector_at(idx);
            let kf = k.as_f64();
            let t = &dense[idx];
            let div = CVec3(std::array::from_fn(|i| {
                let s: Complex64 = (0..3).map(|j| t[i][j] * kf[j]).sum();
                Complex64::new(-s.im, s.re)
            }));
            project_onto_k_perp(k, div)
        })
        .collect();
    SpectralField::from_dense(
        spec,
        FieldFlags {
            div_free: true,
            ..flags
        },
        data,
    )
    .expect("dense length matches")
}

/// `I_i(k) = ∫_0^{t_i} e^{-μ(t_i-s)|k|²} W(s,k) ds` for piecewise-linear `W`.
///
/// Uses the recursion `I_{j+1} = e^{-z} I_j + h [ramp_up(z) W_j + ramp_down(z) W_{j+1}]`
/// with `z = μ|k|² h`.
pub fn duhamel_integrate(w: &Trajectory, mu: f64) -> Result<Trajectory> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be positive, got {mu}"
        )));
    }
    let spec = w.spec();
    let times = w.times();
    let flags = w.flags();
    let mut out = vec![SpectralField::zeros(spec, flags); times.len()];
    let zero = spec.zero_index();
    for idx in 0..spec.cube_len() {
        if idx == zero || w.fields().iter().all(|f| f.dense()[idx].is_zero()) {
            continue;
        }
        let lambda = mu * spec.wavevector_at(idx).norm_sq() as f64;
        let mut acc = CVec3::ZERO;
        for j in 0..times.len() - 1 {
            let h = times[j + 1] - times[j];
            let z = lambda * h;
            let left = w.node(j).dense()[idx];
            let right = w.node(j + 1).dense()[idx];
            acc =
                acc.scale((-z).exp()) + left.scale(h * ramp_up(z)) + right.scale(h * ramp_down(z));
            out[j + 1].dense_mut()[idx] = acc;
        }
    }
    Trajectory::new(w.grid().clone(), out)
}

/// Largest weight exponent `μ b(s) |k|max` at which the weighted frame still
/// convolves by FFT. FFT round-off is absolute (relative to the largest
/// product) and the weight multiplies it by up to `e^{μ b(s)|k|}`; beyond
/// this the node falls back to the exact nested sum.
pub const FAST_WEIGHT_LIMIT: f64 = 6.907755278982137; // ln 1e3

/// Evaluates `B` repeatedly on one lattice with a prepared convolution engine.
pub struct BilinearEngine {
    conv: Convolver,
    direct: Convolver,
    mu: f64,
}

impl BilinearEngine {
    pub fn new(spec: crate::lattice::LatticeSpec, mu: f64, path: ConvPath) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "viscosity must be positive, got {mu}"
            )));
        }
        Ok(BilinearEngine {
            conv: Convolver::new(spec, path),
            direct: Convolver::new(spec, ConvPath::Direct),
            mu,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn path(&self) -> ConvPath {
        self.conv.path()
    }

    /// `W(s_i)` at every node.
    pub fn nonlinear_trajectory(&self, f: &Trajectory, g: &Trajectory) -> Result<Trajectory> {
        self.nonlinear_trajectory_with(f, g, |_| false)
    }

    /// As [`Self::nonlinear_trajectory`], convolving node `i` exactly when `exact(i)`.
    fn nonlinear_trajectory_with(
        &self,
        f: &Trajectory,
        g: &Trajectory,
        exact: impl Fn(usize) -> bool + Sync,
    ) -> Result<Trajectory> {
        if f.grid() != g.grid() {
            return Err(Error::GridMismatch);
        }
        for x in [f, g] {
            if x.spec() != self.conv.spec() {
                return Err(Error::SpecMismatch(self.conv.spec().n(), x.spec().n()));
            }
        }
        let same = std::ptr::eq(f, g);
        let real = f.flags().real && g.flags().real;
        let flags = FieldFlags {
            real,
            div_free: true,
        };
        let fields = f
            .fields()
            .par_iter()
            .zip(g.fields().par_iter())
            .enumerate()
            .map(|(i, (a, b))| {
                let conv = if exact(i) { &self.direct } else { &self.conv };
                let t = if same {
                    conv.convolve(a, a)?
                } else {
                    conv.convolve(a, b)?
                };
                let mut w = nonlinear_term(&t, flags);
                if real {
                    w.symmetrize();
                }
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(f.grid().clone(), fields)
    }

    /// `B(F, G)`
    pub fn apply(&self, f: &Trajectory, g: &Trajectory) -> Result<Trajectory> {
        let w = self.nonlinear_trajectory(f, g)?;
        Ok(duhamel_integrate(&w, self.mu)?.scale(-1.0))
    }

    /// The weighted form on trajectories of `V = e^{μ b(t)|D|} v`:
    /// `e^{μ b(t)|D|} B(e^{-μ b|D|} F, e^{-μ b|D|} G)(t)`.
    pub fn apply_weighted(
        &self,
        f: &Trajectory,
        g: &Trajectory,
        sched: &KernelSchedule,
    ) -> Result<Trajectory> {
        if !sched.is_weighted() {
            return Err(Error::InvalidArgument(
                "weighted bilinear form needs a nonzero weight".into(),
            ));
        }
        sched.validate()?;
        if (sched.mu - self.mu).abs() > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "schedule viscosity {} differs from engine viscosity {}",
                sched.mu, self.mu
            )));
        }
        let down_f = super::gevrey_weight_trajectory(f, sched, WeightDirection::Invert)?;
        let kmax = super::max_euclid_norm(self.conv.spec().n());
        let times = f.times();
        let exact = |i: usize| sched.mu * sched.b(times[i]) * kmax > FAST_WEIGHT_LIMIT;
        let w = if std::ptr::eq(f, g) {
            self.nonlinear_trajectory_with(&down_f, &down_f, exact)?
        } else {
            let down_g = super::gevrey_weight_trajectory(g, sched, WeightDirection::Invert)?;
            self.nonlinear_trajectory_with(&down_f, &down_g, exact)?
        };
        let b = duhamel_integrate(&w, self.mu)?.scale(-1.0);
        let fields = b
            .times()
            .iter()
            .zip(b.fields())
            .map(|(&t, x)| gevrey_weight(x, sched.mu, sched.b(t), WeightDirection::Apply))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(b.grid().clone(), fields)
    }
}

pub fn bilinear_form(
    f: &Trajectory,
    g: &Trajectory,
    mu: f64,
    path: ConvPath,
) -> Result<Trajectory> {
    BilinearEngine::new(f.spec(), mu, path)?.apply(f, g)
}

pub fn weighted_bilinear_form(
    f: &Trajectory,
    g: &Trajectory,
    sched: &KernelSchedule,
    path: ConvPath,
) -> Result<Trajectory> {
    BilinearEngine::new(f.spec(), sched.mu, path)?.apply_weighted(f, g, sched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_random_divfree, make_single_mode, TimeGrid};
    use crate::lattice::{LatticeSpec, WaveVector};
    use crate::operators::{heat_propagate, WeightKind};

    fn spec(n: u32) -> LatticeSpec {
        LatticeSpec::new(n).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::geometric(1e-3, 2.0, 24).unwrap()
    }

    fn heat(seed: u64, n: u32, eps: f64) -> Trajectory {
        let v0 = make_random_divfree(spec(n), eps, 2.0, seed).unwrap();
        heat_propagate(&v0, 1.0, &grid()).unwrap()
    }

    #[test]
    fn zero_inputs_give_zero() {
        let g = heat(1, 2, 1.0);
        let z = Trajectory::zeros(spec(2), FieldFlags::REAL_DIV_FREE, grid());
        for path in [ConvPath::Direct, ConvPath::Fast] {
            assert!(bilinear_form(&z, &g, 1.0, path).unwrap().is_zero());
            assert!(bilinear_form(&g, &z, 1.0, path).unwrap().is_zero());
        }
    }

    #[test]
    fn constant_single_modes_close_the_time_integral() {
        let s = spec(3);
        let l0 = WaveVector::new(1, 0, 0);
        let m0 = WaveVector::new(0, 1, 1);
        let a = CVec3::from_real([0.0, 0.6, -0.2]);
        let b = CVec3::from_real([0.3, 0.0, 0.0]);
        let f = make_single_mode(s, l0, a, false, true).unwrap();
        let g = make_single_mode(s, m0, b, false, true).unwrap();
        let grid = TimeGrid::uniform(3.0, 40).unwrap();
        let mu = 0.7;
        let out = bilinear_form(
            &Trajectory::constant(f, grid.clone()),
            &Trajectory::constant(g, grid.clone()),
            mu,
            ConvPath::Direct,
        )
        .unwrap();

        // Oracle: W = i P(k)[a (k·b)], constant in time, so B(t) = -W (1 - e^{-μt|k|²}) / (μ|k|²).
        let k = l0 + m0;
        let kf = k.as_f64();
        let kb: f64 = (0..3).map(|j| kf[j] * b[j].re).sum();
        let raw: [f64; 3] = std::array::from_fn(|i| a[i].re * kb);
        let kr: f64 = (0..3).map(|j| kf[j] * raw[j]).sum();
        let k2 = k.norm_sq() as f64;
        let projected: [f64; 3] = std::array::from_fn(|i| raw[i] - kf[i] * kr / k2);
        for (i, &t) in grid.times().iter().enumerate() {
            let env = -(-mu * t * k2).exp_m1() / (mu * k2);
            let got = out.node(i).get(k);
            for c in 0..3 {
                let want = Complex64::new(0.0, -projected[c] * env);
                assert!(
                    (got[c] - want).norm() <= 1e-14,
                    "t={t} c={c}: {} vs {want}",
                    got[c]
                );
            }
            assert_eq!(out.node(i).mode_count(), if t == 0.0 { 0 } else { 1 });
        }
    }

    #[test]
    fn output_is_divergence_free_and_real() {
        let f = heat(2, 3, 1.0);
        let g = heat(3, 3, 1.0);
        let out = bilinear_form(&f, &g, 1.0, ConvPath::Fast).unwrap();
        for node in out.fields() {
            assert!(node.divergence_defect() <= 1e-12);
            assert!(node.conjugate_symmetry_defect() == 0.0);
            node.check_invariants(1e-12).unwrap();
        }
    }

    #[test]
    fn bilinearity() {
        let f1 = heat(4, 3, 1.0);
        let f2 = heat(5, 3, 1.0);
        let g = heat(6, 3, 1.0);
        let a = -0.37;
        let lhs = bilinear_form(&f1.axpy(a, &f2).unwrap(), &g, 1.0, ConvPath::Fast).unwrap();
        let rhs = bilinear_form(&f1, &g, 1.0, ConvPath::Fast)
            .unwrap()
            .axpy(a, &bilinear_form(&f2, &g, 1.0, ConvPath::Fast).unwrap())
            .unwrap();
        let scale = rhs
            .fields()
            .iter()
            .map(|x| x.max_coeff_norm())
            .fold(0.0, f64::max);
        assert!(lhs.max_abs_diff(&rhs) <= 1e-12 * scale);
    }

    #[test]
    fn paths_agree() {
        let f = heat(7, 3, 1.0);
        let g = heat(8, 3, 1.0);
        let d = bilinear_form(&f, &g, 1.0, ConvPath::Direct).unwrap();
        let q = bilinear_form(&f, &g, 1.0, ConvPath::Fast).unwrap();
        assert!(d.max_abs_diff(&q) <= 1e-13);
    }

    #[test]
    fn weighted_form_tends_to_plain_form() {
        let f = heat(9, 3, 1.0);
        let plain = bilinear_form(&f, &f, 1.0, ConvPath::Fast).unwrap();
        let sched = KernelSchedule::new(1.0, WeightKind::AlphaT { alpha: 1e-6 }).unwrap();
        let weighted = weighted_bilinear_form(&f, &f, &sched, ConvPath::Fast).unwrap();
        let scale = plain
            .fields()
            .iter()
            .map(|x| x.max_coeff_norm())
            .fold(0.0, f64::max);
        assert!(weighted.max_abs_diff(&plain) <= 1e-4 * scale);
        let none = KernelSchedule::unweighted(1.0).unwrap();
        assert!(weighted_bilinear_form(&f, &f, &none, ConvPath::Fast).is_err());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let f = heat(1, 2, 1.0);
        let g = Trajectory::zeros(
            spec(2),
            FieldFlags::NONE,
            TimeGrid::uniform(1.0, 24).unwrap(),
        );
        assert!(matches!(
            bilinear_form(&f, &g, 1.0, ConvPath::Fast),
            Err(Error::GridMismatch)
        ));
    }

    /// Phase convention check against `div(u ⊗ v)` built from physical-space samples.
    #[test]
    fn divergence_symbol_matches_physical_space() {
        let s = spec(1);
        let u = make_random_divfree(s, 1.0, 2.0, 11).unwrap();
        let v = make_random_divfree(s, 1.0, 2.0, 12).unwrap();
        let t = super::super::truncated_convolution(&u, &v, ConvPath::Direct).unwrap();
        let w = nonlinear_term(&t, FieldFlags::REAL_DIV_FREE);

        // 8 samples per axis resolve the product (frequencies ≤ 2 per axis) without aliasing.
        let m = 8usize;
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let eval = |f: &SpectralField, x: [f64; 3]| -> [Complex64; 3] {
            let mut out = [Complex64::new(0.0, 0.0); 3];
            for (k, c) in f.modes() {
                let ph =
                    Complex64::from_polar(1.0, k.as_f64().iter().zip(&x).map(|(a, b)| a * b).sum());
                for i in 0..3 {
                    out[i] += c[i] * ph;
                }
            }
            out
        };
        let points: Vec<[f64; 3]> = (0..m * m * m)
            .map(|n| {
                [
                    (n / (m * m)) as f64 * h,
                    ((n / m) % m) as f64 * h,
                    (n % m) as f64 * h,
                ]
            })
            .collect();
        let uv: Vec<([Complex64; 3], [Complex64; 3])> =
            points.iter().map(|&x| (eval(&u, x), eval(&v, x))).collect();
        for k in crate::lattice::enumerate_lattice(spec(2))
            .into_iter()
            .filter(|k| k.sup_norm() <= 1)
        {
            let kf = k.as_f64();
            // Fourier coefficient of ∂_j (u_i v_j) at k: (i k_j) · mean(u_i v_j e^{-ik·x})
            let mut div = [Complex64::new(0.0, 0.0); 3];
            for (x, (a, b)) in points.iter().zip(&uv) {
                let ph =
                    Complex64::from_polar(1.0, -kf.iter().zip(x).map(|(p, q)| p * q).sum::<f64>());
                for i in 0..3 {
                    for j in 0..3 {
                        div[i] += Complex64::new(0.0, kf[j]) * a[i] * b[j] * ph;
                    }
                }
            }
            let div = CVec3(div.map(|c| c / (m * m * m) as f64));
            let want = project_onto_k_perp(k, div);
            let got = w.get(k);
            assert!((got - want).norm() <= 1e-13, "{k}: {got:?} vs {want:?}");
        }
    }
}
