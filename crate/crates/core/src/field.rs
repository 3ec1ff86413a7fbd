//! Spectral data model: truncated Fourier coefficients of mean-zero complex
//! 3-vector fields on `[0, 2π]³`, time grids and trajectories.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, WaveVector};

/// Relative tolerance used for the divergence-free flag.
pub const DIV_FREE_TOL: f64 = 1e-12;

/// A complex 3-vector, the Fourier coefficient of a vector field at one mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CVec3(pub [Complex64; 3]);

impl CVec3 {
    pub const ZERO: CVec3 = CVec3([Complex64::new(0.0, 0.0); 3]);

    pub fn new(a: Complex64, b: Complex64, c: Complex64) -> Self {
        CVec3([a, b, c])
    }

    pub fn from_real(v: [f64; 3]) -> Self {
        CVec3(v.map(|x| Complex64::new(x, 0.0)))
    }

    /// Euclidean magnitude `sqrt(Σ |v_i|²)`.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn conj(&self) -> Self {
        CVec3(self.0.map(|c| c.conj()))
    }

    /// `Σ_i k_i v_i` for a real vector `k`.
    pub fn dot_real(&self, k: [f64; 3]) -> Complex64 {
        self.0[0] * k[0] + self.0[1] * k[1] + self.0[2] * k[2]
    }

    pub fn scale(&self, s: f64) -> Self {
        CVec3(self.0.map(|c| c * s))
    }

    pub fn scale_c(&self, s: Complex64) -> Self {
        CVec3(self.0.map(|c| c * s))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .map(|c| c.re.abs().max(c.im.abs()))
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for CVec3 {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CVec3 {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl Add for CVec3 {
    type Output = CVec3;
    fn add(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for CVec3 {
    fn add_assign(&mut self, o: CVec3) {
        for i in 0..3 {
            self.0[i] += o.0[i];
        }
    }
}

impl Sub for CVec3 {
    type Output = CVec3;
    fn sub(self, o: CVec3) -> CVec3 {
        CVec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for CVec3 {
    type Output = CVec3;
    fn neg(self) -> CVec3 {
        CVec3(self.0.map(|c| -c))
    }
}

impl Mul<f64> for CVec3 {
    type Output = CVec3;
    fn mul(self, s: f64) -> CVec3 {
        self.scale(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FieldFlags {
    /// `v̂(-k) = conj(v̂(k))`
    pub real: bool,
    /// `k · v̂(k) = 0`
    pub div_free: bool,
}

impl FieldFlags {
    pub const NONE: FieldFlags = FieldFlags {
        real: false,
        div_free: false,
    };
    pub const REAL_DIV_FREE: FieldFlags = FieldFlags {
        real: true,
        div_free: true,
    };

    pub fn and(self, o: FieldFlags) -> FieldFlags {
        FieldFlags {
            real: self.real && o.real,
            div_free: self.div_free && o.div_free,
        }
    }
}

/// Truncated Fourier representation of a mean-zero vector field.
///
/// Logically a map `k ↦ v̂(k)` over the active lattice; stored densely in the
/// lexicographic order of [`LatticeSpec::cube_index`] with the zero mode
/// pinned to zero. Absent modes read as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    spec: LatticeSpec,
    flags: FieldFlags,
    data: Vec<CVec3>,
}

impl SpectralField {
    pub fn zeros(spec: LatticeSpec, flags: FieldFlags) -> Self {
        SpectralField {
            spec,
            flags,
            data: vec![CVec3::ZERO; spec.cube_len()],
        }
    }

    /// Builds a field from a dense cube-ordered buffer; the zero-mode slot is cleared.
    pub fn from_dense(spec: LatticeSpec, flags: FieldFlags, mut data: Vec<CVec3>) -> Result<Self> {
        if data.len() != spec.cube_len() {
            return Err(Error::InvalidArgument(format!(
                "dense buffer has {} entries, lattice N={} needs {}",
                data.len(),
                spec.n(),
                spec.cube_len()
            )));
        }
        data[spec.zero_index()] = CVec3::ZERO;
        Ok(SpectralField { spec, flags, data })
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn flags(&self) -> FieldFlags {
        self.flags
    }

    pub fn with_flags(mut self, flags: FieldFlags) -> Self {
        self.flags = flags;
        self
    }

    pub fn dense(&self) -> &[CVec3] {
        &self.data
    }

    pub fn dense_mut(&mut self) -> &mut [CVec3] {
        &mut self.data
    }

    pub fn into_dense(self) -> Vec<CVec3> {
        self.data
    }

    /// Coefficient at `k`; zero when `k` is outside the lattice or the zero mode.
    pub fn get(&self, k: WaveVector) -> CVec3 {
        match self.spec.cube_index(k) {
            Some(i) => self.data[i],
            None => CVec3::ZERO,
        }
    }

    pub fn set(&mut self, k: WaveVector, v: CVec3) -> Result<()> {
        if !self.spec.contains(k) {
            return Err(Error::OutsideLattice(k.0));
        }
        let i = self.spec.cube_index(k).expect("contained");
        self.data[i] = v;
        Ok(())
    }

    /// Nonzero modes in lexicographic order (the sparse view).
    pub fn modes(&self) -> impl Iterator<Item = (WaveVector, &CVec3)> + '_ {
        let spec = self.spec;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(move |(i, v)| (spec.wavevector_at(i), v))
    }

    pub fn mode_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    /// Applies `f(k, v̂(k))` at every active mode.
    pub fn map_modes(&self, f: impl Fn(WaveVector, CVec3) -> CVec3) -> SpectralField {
        let spec = self.spec;
        let zero = spec.zero_index();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i == zero {
                    CVec3::ZERO
                } else {
                    f(spec.wavevector_at(i), *v)
                }
            })
            .collect();
        SpectralField {
            spec,
            flags: self.flags,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        SpectralField {
            spec: self.spec,
            flags: self.flags,
            data: self.data.iter().map(|v| v.scale(s)).collect(),
        }
    }

    pub fn add(&self, o: &SpectralField) -> Result<SpectralField> {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &SpectralField) -> Result<SpectralField> {
        self.zip(o, |a, b| a - b)
    }

    /// `a·self + o`
    pub fn axpy(&self, a: f64, o: &SpectralField) -> Result<SpectralField> {
        self.zip(o, |x, y| x.scale(a) + y)
    }

    fn zip(&self, o: &SpectralField, f: impl Fn(CVec3, CVec3) -> CVec3) -> Result<SpectralField> {
        if self.spec != o.spec {
            return Err(Error::SpecMismatch(self.spec.n(), o.spec.n()));
        }
        let data = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Ok(SpectralField {
            spec: self.spec,
            flags: self.flags.and(o.flags),
            data,
        })
    }

    /// Largest componentwise `max(|Δre|, |Δim|)` between two fields.
    pub fn max_abs_diff(&self, o: &SpectralField) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (*a - *b).max_abs())
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest `|v̂(-k) - conj(v̂(k))|` relative to the largest coefficient.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let scale = self.max_coeff_norm();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (i, v) in self.data.iter().enumerate() {
            let k = self.spec.wavevector_at(i);
            let mirror = self.data[self.spec.cube_index(-k).expect("lattice is symmetric")];
            worst = worst.max((mirror - v.conj()).norm());
        }
        worst / scale
    }

    /// Largest `|k·v̂(k)| / (|k| |v̂(k)|)` over nonzero modes.
    pub fn divergence_defect(&self) -> f64 {
        self.modes()
            .map(|(k, v)| v.dot_real(k.as_f64()).norm() / (k.euclid_norm() * v.norm()))
            .fold(0.0, f64::max)
    }

    /// Checks the invariants implied by the flags.
    pub fn check_invariants(&self, sym_tol: f64) -> Result<()> {
        if !self.data[self.spec.zero_index()].is_zero() {
            return Err(Error::InvalidArgument("zero mode is populated".into()));
        }
        if self.flags.real {
            let d = self.conjugate_symmetry_defect();
            if d > sym_tol {
                return Err(Error::InvalidArgument(format!(
                    "conjugate symmetry defect {d:e}"
                )));
            }
        }
        if self.flags.div_free {
            let d = self.divergence_defect();
            if d > DIV_FREE_TOL {
                return Err(Error::InvalidArgument(format!("divergence defect {d:e}")));
            }
        }
        Ok(())
    }

    /// Replaces `v̂(k)` by `(v̂(k) + conj v̂(-k)) / 2`, making the symmetry exact.
    pub fn symmetrize(&mut self) {
        let spec = self.spec;
        for i in 0..self.data.len() {
            let j = spec
                .cube_index(-spec.wavevector_at(i))
                .expect("lattice is symmetric");
            if j < i {
                continue;
            }
            let a = self.data[i];
            let b = self.data[j];
            let s = (a + b.conj()).scale(0.5);
            self.data[i] = s;
            self.data[j] = s.conj();
        }
    }
}

/// Single-mode field `v̂(k0) = amplitude`, mirrored to `-k0` when `realify`.
pub fn make_single_mode(
    spec: LatticeSpec,
    k0: WaveVector,
    amplitude: CVec3,
    realify: bool,
    div_free: bool,
) -> Result<SpectralField> {
    if !spec.contains(k0) {
        return Err(Error::OutsideLattice(k0.0));
    }
    let kv = amplitude.dot_real(k0.as_f64()).norm();
    let orthogonal = kv <= DIV_FREE_TOL * amplitude.norm() * k0.euclid_norm();
    if div_free && !orthogonal {
        return Err(Error::NotDivergenceFree(k0.0, kv));
    }
    let mut f = SpectralField::zeros(
        spec,
        FieldFlags {
            real: realify,
            div_free,
        },
    );
    f.set(k0, amplitude)?;
    if realify {
        f.set(-k0, amplitude.conj())?;
    }
    Ok(f)
}

/// `ε (sin x cos y cos z, -cos x sin y cos z, 0)`: eight modes `(±1,±1,±1)` with
/// `v̂₁ = -iεs₁/8`, `v̂₂ = iεs₂/8`.
pub fn make_taylor_green(spec: LatticeSpec, eps: f64) -> SpectralField {
    let mut f = SpectralField::zeros(spec, FieldFlags::REAL_DIV_FREE);
    if eps == 0.0 {
        return f;
    }
    for s1 in [-1, 1] {
        for s2 in [-1, 1] {
            for s3 in [-1, 1] {
                let v = CVec3::new(
                    Complex64::new(0.0, -eps * s1 as f64 / 8.0),
                    Complex64::new(0.0, eps * s2 as f64 / 8.0),
                    Complex64::new(0.0, 0.0),
                );
                f.set(WaveVector::new(s1, s2, s3), v).expect("N >= 1");
            }
        }
    }
    f
}

/// `w - k (k·w)/|k|²`
///
/// A second sweep removes the rounding left by cancellation when `w` is mostly
/// parallel to `k`, so the result is orthogonal to working precision of itself.
pub fn project_onto_k_perp(k: WaveVector, w: CVec3) -> CVec3 {
    let kf = k.as_f64();
    let kk = k.norm_sq() as f64;
    let sweep = |w: CVec3| {
        let s = w.dot_real(kf) / kk;
        CVec3([w[0] - s * kf[0], w[1] - s * kf[1], w[2] - s * kf[2]])
    };
    sweep(sweep(w))
}

fn random_unit_divfree(rng: &mut ChaCha8Rng, k: WaveVector) -> CVec3 {
    loop {
        let w = CVec3(std::array::from_fn(|_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        }));
        let p = project_onto_k_perp(k, w);
        let n = p.norm();
        if n > 1e-3 {
            return p.scale(1.0 / n);
        }
    }
}

fn is_upper_half(k: WaveVector) -> bool {
    k > -k
}

/// Real, divergence-free random field with `|v̂(k)| ≤ ε / |k|^decay_exponent`.
pub fn make_random_divfree(
    spec: LatticeSpec,
    eps: f64,
    decay_exponent: f64,
    seed: u64,
) -> Result<SpectralField> {
    if !(decay_exponent >= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "decay exponent {decay_exponent} < 2"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(spec, FieldFlags::REAL_DIV_FREE);
    for k in crate::lattice::enumerate_lattice(spec)
        .into_iter()
        .filter(|k| is_upper_half(*k))
    {
        let dir = random_unit_divfree(&mut rng, k);
        let r: f64 = rng.gen_range(0.0..1.0);
        let v = dir.scale(eps * r / k.euclid_norm().powf(decay_exponent));
        f.set(k, v)?;
        f.set(-k, v.conj())?;
    }
    Ok(f)
}

/// Real, divergence-free field with `|v̂(k)| = A e^{-ρ₀|k|} / |k|²` exactly at every
/// active mode and random directions and phases.
pub fn make_exponential_divfree(
    spec: LatticeSpec,
    amplitude: f64,
    rho0: f64,
    seed: u64,
) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(spec, FieldFlags::REAL_DIV_FREE);
    for k in crate::lattice::enumerate_lattice(spec)
        .into_iter()
        .filter(|k| is_upper_half(*k))
    {
        let dir = random_unit_divfree(&mut rng, k);
        let mag = amplitude * (-rho0 * k.euclid_norm()).exp() / k.norm_sq() as f64;
        let v = dir.scale(mag);
        f.set(k, v).expect("in lattice");
        f.set(-k, v.conj()).expect("in lattice");
    }
    f
}

/// Strictly increasing time grid starting at exactly zero with at least three nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes, got {}",
                times.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid("grid must start at t = 0".into()));
        }
        if !times.iter().all(|t| t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(TimeGrid(times))
    }

    pub fn uniform(t_max: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 || !(t_max > 0.0) {
            return Err(Error::InvalidGrid(
                "uniform grid needs t_max > 0 and >= 3 nodes".into(),
            ));
        }
        let m = (nodes - 1) as f64;
        let mut t: Vec<f64> = (0..nodes).map(|i| t_max * i as f64 / m).collect();
        t[nodes - 1] = t_max;
        TimeGrid::new(t)
    }

    /// `0` followed by `nodes - 1` geometrically spaced points from `t_min` to `t_max`.
    pub fn geometric(t_min: f64, t_max: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 || !(t_min > 0.0) || !(t_max > t_min) {
            return Err(Error::InvalidGrid(
                "geometric grid needs 0 < t_min < t_max and >= 3 nodes".into(),
            ));
        }
        let m = (nodes - 2) as f64;
        let ratio = t_max / t_min;
        let mut t = Vec::with_capacity(nodes);
        t.push(0.0);
        for i in 0..nodes - 1 {
            t.push(t_min * ratio.powf(i as f64 / m));
        }
        t[nodes - 1] = t_max;
        TimeGrid::new(t)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.0.last().expect("nonempty")
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Vec<f64> {
        g.0
    }
}

/// A discretisation of `t ↦ v(t, ·)`: one field per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    fields: Vec<SpectralField>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, fields: Vec<SpectralField>) -> Result<Self> {
        if fields.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} fields for {} grid nodes",
                fields.len(),
                grid.len()
            )));
        }
        let spec = fields[0].spec();
        let flags = fields[0].flags();
        for f in &fields {
            if f.spec() != spec {
                return Err(Error::SpecMismatch(spec.n(), f.spec().n()));
            }
            if f.flags() != flags {
                return Err(Error::InvalidArgument(
                    "trajectory nodes carry different flags".into(),
                ));
            }
        }
        Ok(Trajectory { grid, fields })
    }

    pub fn zeros(spec: LatticeSpec, flags: FieldFlags, grid: TimeGrid) -> Self {
        let fields = vec![SpectralField::zeros(spec, flags); grid.len()];
        Trajectory { grid, fields }
    }

    /// The same field at every node.
    pub fn constant(field: SpectralField, grid: TimeGrid) -> Self {
        let fields = vec![field; grid.len()];
        Trajectory { grid, fields }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn node(&self, i: usize) -> &SpectralField {
        &self.fields[i]
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn spec(&self) -> LatticeSpec {
        self.fields[0].spec()
    }

    pub fn flags(&self) -> FieldFlags {
        self.fields[0].flags()
    }

    pub fn is_zero(&self) -> bool {
        self.fields.iter().all(|f| f.is_zero())
    }

    pub fn map(&self, f: impl Fn(f64, &SpectralField) -> SpectralField) -> Trajectory {
        let fields = self
            .times()
            .iter()
            .zip(&self.fields)
            .map(|(t, x)| f(*t, x))
            .collect();
        Trajectory {
            grid: self.grid.clone(),
            fields,
        }
    }

    fn check_compatible(&self, o: &Trajectory) -> Result<()> {
        if self.grid != o.grid {
            return Err(Error::GridMismatch);
        }
        if self.spec() != o.spec() {
            return Err(Error::SpecMismatch(self.spec().n(), o.spec().n()));
        }
        Ok(())
    }

    pub fn add(&self, o: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(o)?;
        let fields = self
            .fields
            .iter()
            .zip(&o.fields)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            grid: self.grid.clone(),
            fields,
        })
    }

    pub fn sub(&self, o: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(o)?;
        let fields = self
            .fields
            .iter()
            .zip(&o.fields)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            grid: self.grid.clone(),
            fields,
        })
    }

    /// `a·self + o`
    pub fn axpy(&self, a: f64, o: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(o)?;
        let fields = self
            .fields
            .iter()
            .zip(&o.fields)
            .map(|(x, y)| x.axpy(a, y))
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            grid: self.grid.clone(),
            fields,
        })
    }

    pub fn scale(&self, s: f64) -> Trajectory {
        self.map(|_, f| f.scale(s))
    }

    pub fn max_abs_diff(&self, o: &Trajectory) -> f64 {
        self.fields
            .iter()
            .zip(&o.fields)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::enumerate_lattice;
    use std::f64::consts::PI;

    fn spec(n: u32) -> LatticeSpec {
        LatticeSpec::new(n).unwrap()
    }

    /// Evaluates `Σ_k v̂(k) e^{ik·x}` by brute force.
    fn evaluate(f: &SpectralField, x: [f64; 3]) -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (k, v) in f.modes() {
            let kf = k.as_f64();
            let phase = Complex64::from_polar(1.0, kf[0] * x[0] + kf[1] * x[1] + kf[2] * x[2]);
            for i in 0..3 {
                out[i] += v[i] * phase;
            }
        }
        out
    }

    #[test]
    fn single_mode_examples() {
        let eps = 0.01;
        let f = make_single_mode(
            spec(2),
            WaveVector::new(1, 0, 0),
            CVec3::from_real([0.0, eps, 0.0]),
            true,
            true,
        )
        .unwrap();
        assert_eq!(f.mode_count(), 2);
        assert_eq!(
            f.get(WaveVector::new(-1, 0, 0)),
            CVec3::from_real([0.0, eps, 0.0])
        );

        let err = make_single_mode(
            spec(2),
            WaveVector::new(1, 0, 0),
            CVec3::from_real([eps, 0.0, 0.0]),
            false,
            true,
        );
        assert!(matches!(err, Err(Error::NotDivergenceFree(..))));

        let out = make_single_mode(
            spec(1),
            WaveVector::new(2, 0, 0),
            CVec3::from_real([0.0, 1.0, 0.0]),
            false,
            false,
        );
        assert!(matches!(out, Err(Error::OutsideLattice(_))));
    }

    #[test]
    fn taylor_green_matches_trig_formula() {
        let eps = 0.7;
        let f = make_taylor_green(spec(2), eps);
        assert_eq!(f.mode_count(), 8);
        let pts = [[0.3, 1.1, 2.0], [5.0, 0.2, 4.4], [PI / 3.0, PI / 5.0, 1.0]];
        for x in pts {
            let u = evaluate(&f, x);
            let expect = [
                eps * x[0].sin() * x[1].cos() * x[2].cos(),
                -eps * x[0].cos() * x[1].sin() * x[2].cos(),
                0.0,
            ];
            for i in 0..3 {
                assert!((u[i].re - expect[i]).abs() < 1e-14, "{u:?} vs {expect:?}");
                assert!(u[i].im.abs() < 1e-14);
            }
        }
        assert_eq!(f.divergence_defect(), 0.0);
        assert_eq!(f.conjugate_symmetry_defect(), 0.0);
        assert!(make_taylor_green(spec(1), 0.0).is_zero());
    }

    #[test]
    fn random_divfree_invariants_and_determinism() {
        let s = spec(4);
        let a = make_random_divfree(s, 1e-3, 2.0, 11).unwrap();
        let b = make_random_divfree(s, 1e-3, 2.0, 11).unwrap();
        let c = make_random_divfree(s, 1e-3, 2.0, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for f in [&a, &c] {
            f.check_invariants(0.0).unwrap();
            for (k, v) in f.modes() {
                assert!(v.norm() <= 1e-3 / k.norm_sq() as f64 * (1.0 + 1e-15));
            }
        }
        assert!(make_random_divfree(s, 1.0, 1.5, 0).is_err());
    }

    #[test]
    fn exponential_field_has_exact_magnitudes() {
        let f = make_exponential_divfree(spec(3), 2.0, 0.8, 5);
        f.check_invariants(0.0).unwrap();
        for k in enumerate_lattice(spec(3)) {
            let want = 2.0 * (-0.8 * k.euclid_norm()).exp() / k.norm_sq() as f64;
            assert!((f.get(k).norm() - want).abs() <= 1e-14 * want);
        }
    }

    #[test]
    fn symmetrize_is_exact() {
        let mut f = make_random_divfree(spec(3), 1.0, 2.0, 3).unwrap();
        let k = WaveVector::new(1, 2, 0);
        f.set(k, f.get(k).scale(1.0 + 1e-9)).unwrap();
        assert!(f.conjugate_symmetry_defect() > 0.0);
        f.symmetrize();
        assert_eq!(f.conjugate_symmetry_defect(), 0.0);
    }

    #[test]
    fn grids() {
        let g = TimeGrid::geometric(1e-4, 10.0, 128).unwrap();
        assert_eq!(g.len(), 128);
        assert_eq!(g.times()[0], 0.0);
        assert_eq!(g.times()[1], 1e-4);
        assert_eq!(g.t_max(), 10.0);
        assert!(TimeGrid::new(vec![0.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 1.0, 2.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        let u = TimeGrid::uniform(2.0, 5).unwrap();
        assert_eq!(u.times(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn trajectory_rejects_mixed_specs() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        let fields = vec![
            SpectralField::zeros(spec(1), FieldFlags::NONE),
            SpectralField::zeros(spec(2), FieldFlags::NONE),
            SpectralField::zeros(spec(1), FieldFlags::NONE),
        ];
        assert!(Trajectory::new(g, fields).is_err());
    }
}
