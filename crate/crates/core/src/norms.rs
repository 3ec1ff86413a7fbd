//! Pseudomeasure norms on fields and their space-time versions on trajectories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpectralField, Trajectory};
use crate::lattice::WaveVector;
use crate::quadrature::{exact_kernel_interval, trapezoid_interval};
use crate::summation::NeumaierSum;

/// `sup_k |k|^a |v̂(k)|`, with `|v̂(k)|` the Euclidean norm of the complex 3-vector.
pub fn pm_norm(field: &SpectralField, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "PM exponent must be nonnegative, got {a}"
        )));
    }
    Ok(field
        .modes()
        .map(|(k, v)| weight(k, a) * v.norm())
        .fold(0.0, f64::max))
}

fn weight(k: WaveVector, a: f64) -> f64 {
    let k2 = k.norm_sq() as f64;
    if a == 2.0 {
        k2
    } else if a == 4.0 {
        k2 * k2
    } else {
        k2.powf(0.5 * a)
    }
}

/// Max over grid nodes of [`pm_norm`].
pub fn st_pm_norm(traj: &Trajectory, b: f64) -> Result<f64> {
    traj.fields()
        .iter()
        .map(|f| pm_norm(f, b))
        .try_fold(0.0f64, |m, x| x.map(|x| m.max(x)))
}

/// Time-quadrature rule for the `𝒵^c` integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    #[default]
    #[serde(rename = "trapezoid")]
    Trapezoid,
    /// Integrates `A(s) e^{-μ|k|²s}` exactly for `A` linear between nodes.
    /// Meant for heat-like data; it overshoots on coefficients that grow in time.
    #[serde(rename = "exact-kernel")]
    ExactKernel,
}

impl FromStr for Quadrature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoid" => Ok(Quadrature::Trapezoid),
            "exact-kernel" => Ok(Quadrature::ExactKernel),
            other => Err(Error::UnknownQuadrature(other.to_string())),
        }
    }
}

impl fmt::Display for Quadrature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrature::Trapezoid => "trapezoid",
            Quadrature::ExactKernel => "exact-kernel",
        })
    }
}

/// `𝒵^c` value over `[0, t_M]` and the heat-envelope tail beyond `t_M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZNorm {
    /// `sup_k ∫_0^{t_M} |k|^c |v̂(t,k)| dt`
    pub value: f64,
    /// Maximising wavevector, `None` for the zero trajectory.
    pub argmax: Option<WaveVector>,
    /// Tail `|k|^c |v̂(t_M,k)| / (μ|k|²)` at `argmax`.
    pub tail_at_argmax: f64,
    /// Largest per-k tail.
    pub max_tail: f64,
    /// `sup_k (integral_k + tail_k)`
    pub with_tail: f64,
}

/// `𝒵^c` norm with a separately reported tail estimate for `(t_M, ∞)` under the
/// envelope `|v̂(t,k)| ≤ |v̂(t_M,k)| e^{-μ(t-t_M)|k|²}`.
pub fn z_norm(traj: &Trajectory, c: f64, rule: Quadrature, mu: f64) -> Result<ZNorm> {
    if !(c >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "𝒵 exponent must be nonnegative, got {c}"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be positive, got {mu}"
        )));
    }
    let spec = traj.spec();
    let times = traj.times();
    let last = traj.len() - 1;
    let mut out = ZNorm {
        value: 0.0,
        argmax: None,
        tail_at_argmax: 0.0,
        max_tail: 0.0,
        with_tail: 0.0,
    };
    let mut samples = vec![0.0; traj.len()];
    for idx in 0..spec.cube_len() {
        if idx == spec.zero_index() {
            continue;
        }
        let k = spec.wavevector_at(idx);
        let w = weight(k, c);
        let mut any = false;
        for (s, f) in samples.iter_mut().zip(traj.fields()) {
            *s = w * f.dense()[idx].norm();
            any |= *s > 0.0;
        }
        if !any {
            continue;
        }
        let lambda = mu * k.norm_sq() as f64;
        let mut sum = NeumaierSum::new();
        for j in 0..last {
            let h = times[j + 1] - times[j];
            sum += match rule {
                Quadrature::Trapezoid => trapezoid_interval(samples[j], samples[j + 1], h),
                Quadrature::ExactKernel => {
                    exact_kernel_interval(samples[j], samples[j + 1], lambda, h)
                }
            };
        }
        let integral = sum.value();
        let tail = samples[last] / lambda;
        if integral > out.value {
            out.value = integral;
            out.argmax = Some(k);
            out.tail_at_argmax = tail;
        }
        out.max_tail = out.max_tail.max(tail);
        out.with_tail = out.with_tail.max(integral + tail);
    }
    Ok(out)
}

/// `‖f‖_{𝒫ℳ²} + ‖f‖_{𝒵⁴}` (tail excluded).
pub fn triple_norm(traj: &Trajectory, rule: Quadrature, mu: f64) -> Result<f64> {
    Ok(st_pm_norm(traj, 2.0)? + z_norm(traj, 4.0, rule, mu)?.value)
}

/// `max_{t_i > 0} t_i^{a/2-1} ‖v(t_i)‖_{PM^a}` for `a ∈ (2, 3)`.
pub fn ck_seminorm(traj: &Trajectory, a: f64) -> Result<f64> {
    if !(a > 2.0 && a < 3.0) {
        return Err(Error::InvalidArgument(format!(
            "seminorm exponent must lie in (2,3), got {a}"
        )));
    }
    let mut best = 0.0f64;
    for (&t, f) in traj.times().iter().zip(traj.fields()) {
        if t > 0.0 {
            best = best.max(t.powf(0.5 * a - 1.0) * pm_norm(f, a)?);
        }
    }
    Ok(best)
}

/// All norm values of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// `‖v(0)‖_{PM²}`
    pub pm2: f64,
    /// `max_{t_i > 0} ‖v(t_i)‖_{PM⁴}`
    pub pm4: f64,
    pub st_pm2: f64,
    pub z4: f64,
    /// Heat-envelope tail of `𝒵⁴` beyond the last node; not part of `z4`.
    pub z4_tail: f64,
    pub triple: f64,
    pub ck: Option<f64>,
    pub ck_a: Option<f64>,
    pub quadrature: Quadrature,
}

impl NormReport {
    pub fn compute(
        traj: &Trajectory,
        rule: Quadrature,
        mu: f64,
        ck_a: Option<f64>,
    ) -> Result<Self> {
        let pm2 = pm_norm(traj.node(0), 2.0)?;
        let mut pm4 = 0.0f64;
        for (&t, f) in traj.times().iter().zip(traj.fields()) {
            if t > 0.0 {
                pm4 = pm4.max(pm_norm(f, 4.0)?);
            }
        }
        let st_pm2 = st_pm_norm(traj, 2.0)?;
        let z = z_norm(traj, 4.0, rule, mu)?;
        let ck = ck_a.map(|a| ck_seminorm(traj, a)).transpose()?;
        Ok(NormReport {
            pm2,
            pm4,
            st_pm2,
            z4: z.value,
            z4_tail: z.tail_at_argmax,
            triple: st_pm2 + z.value,
            ck,
            ck_a,
            quadrature: rule,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        make_random_divfree, make_single_mode, make_taylor_green, CVec3, FieldFlags, TimeGrid,
    };
    use crate::lattice::LatticeSpec;
    use crate::operators::heat_propagate;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn spec(n: u32) -> LatticeSpec {
        LatticeSpec::new(n).unwrap()
    }

    fn single(k: WaveVector, amp: [f64; 3]) -> SpectralField {
        make_single_mode(spec(3), k, CVec3::from_real(amp), true, true).unwrap()
    }

    #[test]
    fn pm_examples() {
        let eps = 1e-3;
        let f = single(WaveVector::new(1, 0, 0), [0.0, eps, 0.0]);
        assert_eq!(pm_norm(&f, 2.0).unwrap(), eps);
        let g = single(
            WaveVector::new(2, 2, 1),
            [0.05, -0.05, 0.0].map(|x| x / 2f64.sqrt()),
        );
        assert!((pm_norm(&g, 2.0).unwrap() - 0.45).abs() < 1e-15);
        let z = SpectralField::zeros(spec(2), FieldFlags::NONE);
        assert_eq!(pm_norm(&z, 3.7).unwrap(), 0.0);
        assert!(pm_norm(&f, -1.0).is_err());
    }

    #[test]
    fn taylor_green_pm2() {
        // Each of the 8 modes carries |v̂| = √2/8 per unit amplitude at |k|² = 3.
        let f = make_taylor_green(spec(2), 1.0);
        assert!((pm_norm(&f, 2.0).unwrap() - 3.0 * 2f64.sqrt() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn st_pm_examples() {
        let f = single(WaveVector::new(1, 1, 0), [0.0, 0.0, 0.2]);
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let c = Trajectory::constant(f.clone(), grid.clone());
        assert_eq!(st_pm_norm(&c, 2.0).unwrap(), pm_norm(&f, 2.0).unwrap());
        let h = heat_propagate(&f, 1.0, &grid).unwrap();
        assert_eq!(st_pm_norm(&h, 2.0).unwrap(), pm_norm(&f, 2.0).unwrap());
        assert_eq!(
            st_pm_norm(&Trajectory::zeros(spec(2), FieldFlags::NONE, grid), 2.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn z_norm_semigroup_identity() {
        for mu in [0.25, 1.0, 4.0] {
            let r = 0.5f64.sqrt();
            for (k, amp, dir) in [
                (WaveVector::new(1, 0, 0), 0.3, [0.0, 0.0, 1.0]),
                (WaveVector::new(0, 2, 0), 1e-3, [1.0, 0.0, 0.0]),
                (WaveVector::new(2, 2, 1), 2.0, [r, -r, 0.0]),
            ] {
                let f = single(k, dir.map(|d| d * amp));
                let grid = TimeGrid::geometric(1e-4, 10.0 / mu, 64).unwrap();
                let h = heat_propagate(&f, mu, &grid).unwrap();
                let z = z_norm(&h, 4.0, Quadrature::ExactKernel, mu).unwrap();
                let exact = k.norm_sq() as f64 * amp / mu;
                assert!(
                    (z.with_tail - exact).abs() <= 1e-10 * exact,
                    "μ={mu} k={k}: {} vs {exact}",
                    z.with_tail
                );
                assert!(z.value <= exact * (1.0 + 1e-12));
                assert!(z.argmax == Some(k) || z.argmax == Some(-k));
            }
        }
    }

    #[test]
    fn trapezoid_converges_to_exact_kernel() {
        let f = single(WaveVector::new(1, 1, 0), [0.0, 0.0, 1.0]);
        let exact = {
            let h = heat_propagate(&f, 1.0, &TimeGrid::uniform(4.0, 9).unwrap()).unwrap();
            z_norm(&h, 4.0, Quadrature::ExactKernel, 1.0).unwrap().value
        };
        let errs: Vec<f64> = [16usize, 32, 64, 128]
            .iter()
            .map(|&m| {
                let h = heat_propagate(&f, 1.0, &TimeGrid::uniform(4.0, m + 1).unwrap()).unwrap();
                (z_norm(&h, 4.0, Quadrature::Trapezoid, 1.0).unwrap().value / exact - 1.0).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(errs[3] < 1e-3);
    }

    #[test]
    fn unknown_rule_is_rejected() {
        assert!(matches!(
            "simpson".parse::<Quadrature>(),
            Err(Error::UnknownQuadrature(_))
        ));
        assert_eq!(
            "exact-kernel".parse::<Quadrature>().unwrap(),
            Quadrature::ExactKernel
        );
        assert_eq!(
            Quadrature::Trapezoid
                .to_string()
                .parse::<Quadrature>()
                .unwrap(),
            Quadrature::Trapezoid
        );
    }

    #[test]
    fn triple_norm_examples() {
        let grid = TimeGrid::uniform(2.0, 11).unwrap();
        assert_eq!(
            triple_norm(
                &Trajectory::zeros(spec(2), FieldFlags::NONE, grid.clone()),
                Quadrature::Trapezoid,
                1.0
            )
            .unwrap(),
            0.0
        );
        let f = single(WaveVector::new(1, 0, 1), [0.0, 0.5, 0.0]);
        let c = Trajectory::constant(f, grid);
        let want = 2.0 * 0.5 + 2.0 * 4.0 * 0.5;
        assert!((triple_norm(&c, Quadrature::Trapezoid, 1.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn heat_triple_norm_linear_bound() {
        for mu in [0.25, 1.0, 4.0] {
            for seed in 0..4 {
                let v0 = make_random_divfree(spec(4), 1.0, 2.0, seed).unwrap();
                let h =
                    heat_propagate(&v0, mu, &TimeGrid::geometric(1e-4, 10.0, 64).unwrap()).unwrap();
                let bound = (1.0 + 1.0 / mu) * pm_norm(&v0, 2.0).unwrap();
                let t = triple_norm(&h, Quadrature::ExactKernel, mu).unwrap();
                assert!(t <= bound * (1.0 + 1e-12), "μ={mu}: {t} vs {bound}");
            }
        }
    }

    #[test]
    fn ck_examples() {
        let mu = 1.5;
        let amp = 0.4;
        let f = single(WaveVector::new(0, 1, 0), [amp, 0.0, 0.0]);
        let h = heat_propagate(&f, mu, &TimeGrid::geometric(1e-3, 5.0, 200).unwrap()).unwrap();
        let got = ck_seminorm(&h, 2.5).unwrap();
        let analytic = (0.25 / mu).powf(0.25) * (-0.25f64).exp() * amp;
        assert!(got <= analytic * (1.0 + 1e-14));
        assert!(got >= analytic * (1.0 - 1e-3));
        assert!(ck_seminorm(&h, 2.0).is_err());
        assert!(ck_seminorm(&h, 3.0).is_err());
        let z = Trajectory::zeros(
            spec(1),
            FieldFlags::NONE,
            TimeGrid::uniform(1.0, 4).unwrap(),
        );
        assert_eq!(ck_seminorm(&z, 2.5).unwrap(), 0.0);
    }

    #[test]
    fn report_is_consistent() {
        let v0 = make_taylor_green(spec(3), 1e-3);
        let h = heat_propagate(&v0, 1.0, &TimeGrid::geometric(1e-4, 10.0, 32).unwrap()).unwrap();
        let r = NormReport::compute(&h, Quadrature::ExactKernel, 1.0, Some(2.5)).unwrap();
        assert_eq!(r.triple, r.st_pm2 + r.z4);
        assert!(r.pm2 >= 0.0 && r.pm4 >= 0.0 && r.z4_tail >= 0.0);
        let json = serde_json::to_string(&r).unwrap();
        let back: NormReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    fn field_strategy() -> impl Strategy<Value = SpectralField> {
        prop::collection::vec(-1.0f64..1.0, 6 * 125).prop_map(|xs| {
            let data = xs
                .chunks(6)
                .map(|c| {
                    CVec3(std::array::from_fn(|i| {
                        Complex64::new(c[2 * i], c[2 * i + 1])
                    }))
                })
                .collect();
            SpectralField::from_dense(spec(2), FieldFlags::NONE, data).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn homogeneity(f in field_strategy(), lambda in 0.0f64..10.0, a in 0.0f64..5.0) {
            let lhs = pm_norm(&f.scale(lambda), a).unwrap();
            let rhs = lambda * pm_norm(&f, a).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1e-300));
        }

        #[test]
        fn monotone_in_exponent(f in field_strategy(), a in 0.0f64..4.0, d in 0.0f64..2.0) {
            prop_assert!(pm_norm(&f, a).unwrap() <= pm_norm(&f, a + d).unwrap());
        }

        #[test]
        fn triangle_inequality(f in field_strategy(), g in field_strategy(), a in 0.0f64..4.0) {
            let sum = pm_norm(&f.add(&g).unwrap(), a).unwrap();
            prop_assert!(sum <= (pm_norm(&f, a).unwrap() + pm_norm(&g, a).unwrap()) * (1.0 + 1e-15));
        }

        #[test]
        fn space_time_norms_are_homogeneous(f in field_strategy(), lambda in 0.0f64..10.0) {
            let grid = TimeGrid::geometric(1e-3, 2.0, 8).unwrap();
            let h = heat_propagate(&f, 1.0, &grid).unwrap();
            let hs = h.scale(lambda);
            for rule in [Quadrature::Trapezoid, Quadrature::ExactKernel] {
                let a = triple_norm(&hs, rule, 1.0).unwrap();
                let b = lambda * triple_norm(&h, rule, 1.0).unwrap();
                prop_assert!((a - b).abs() <= 1e-13 * b.max(1e-300));
            }
        }
    }
}
