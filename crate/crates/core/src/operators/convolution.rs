//! Exact truncated convolution `T_ij(k) = Σ_ℓ F̂_i(ℓ) Ĝ_j(k-ℓ)` over the cubic lattice.

use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft3::{next_fast_size, Fft3};
use crate::field::SpectralField;
use crate::lattice::{LatticeSpec, WaveVector};

const CZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvPath {
    /// Nested-loop sum over the lattice.
    Direct,
    /// Zero-padded FFT on a grid of at least `4N + 1` points per axis.
    #[default]
    Fast,
}

impl FromStr for ConvPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ConvPath::Direct),
            "fast" => Ok(ConvPath::Fast),
            other => Err(Error::InvalidArgument(format!(
                "unknown convolution path `{other}`"
            ))),
        }
    }
}

/// The nine products `T_ij(k)` for every `k` of the lattice, dense in cube order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvolutionTensor {
    spec: LatticeSpec,
    data: Vec<[[Complex64; 3]; 3]>,
}

impl ConvolutionTensor {
    fn zeros(spec: LatticeSpec) -> Self {
        ConvolutionTensor {
            spec,
            data: vec![[[CZERO; 3]; 3]; spec.cube_len()],
        }
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn get(&self, k: WaveVector) -> [[Complex64; 3]; 3] {
        match self.spec.cube_index(k) {
            Some(i) => self.data[i],
            None => [[CZERO; 3]; 3],
        }
    }

    pub fn dense(&self) -> &[[[Complex64; 3]; 3]] {
        &self.data
    }

    pub fn max_abs_diff(&self, o: &ConvolutionTensor) -> f64 {
        let mut worst = 0.0f64;
        for (a, b) in self.data.iter().zip(&o.data) {
            for i in 0..3 {
                for j in 0..3 {
                    let d = a[i][j] - b[i][j];
                    worst = worst.max(d.re.abs()).max(d.im.abs());
                }
            }
        }
        worst
    }

    pub fn is_zero(&self) -> bool {
        self.data
            .iter()
            .all(|t| t.iter().flatten().all(|c| *c == CZERO))
    }
}

/// Reusable convolution engine for one lattice.
pub struct Convolver {
    spec: LatticeSpec,
    path: ConvPath,
    fft: Option<Arc<Fft3>>,
}

impl Convolver {
    pub fn new(spec: LatticeSpec, path: ConvPath) -> Self {
        let fft = match path {
            ConvPath::Direct => None,
            ConvPath::Fast => Some(Arc::new(Fft3::new(padded_size(spec)))),
        };
        Convolver { spec, path, fft }
    }

    pub fn path(&self) -> ConvPath {
        self.path
    }

    pub fn spec(&self) -> LatticeSpec {
        self.spec
    }

    pub fn convolve(&self, f: &SpectralField, g: &SpectralField) -> Result<ConvolutionTensor> {
        for x in [f, g] {
            if x.spec() != self.spec {
                return Err(Error::SpecMismatch(self.spec.n(), x.spec().n()));
            }
        }
        if f.is_zero() || g.is_zero() {
            return Ok(ConvolutionTensor::zeros(self.spec));
        }
        Ok(match &self.fft {
            None => direct(f, g, std::ptr::eq(f, g)),
            Some(fft) => fast(fft, f, g, std::ptr::eq(f, g)),
        })
    }
}

/// Padded FFT size: the next 2·3·5-smooth integer at or above `4N + 1`.
pub fn padded_size(spec: LatticeSpec) -> usize {
    next_fast_size(4 * spec.n() as usize + 1)
}

pub fn truncated_convolution(
    f: &SpectralField,
    g: &SpectralField,
    path: ConvPath,
) -> Result<ConvolutionTensor> {
    if f.spec() != g.spec() {
        return Err(Error::SpecMismatch(f.spec().n(), g.spec().n()));
    }
    Convolver::new(f.spec(), path).convolve(f, g)
}

/// Nested sum. For conjugate-symmetric inputs only half of the outputs are
/// summed and the rest mirrored; for `f = g` only `i ≤ j`.
fn direct(f: &SpectralField, g: &SpectralField, same: bool) -> ConvolutionTensor {
    let spec = f.spec();
    let n = spec.n() as i32;
    let f_modes: Vec<_> = f.modes().map(|(k, v)| (k, *v)).collect();
    let g_dense = g.dense();
    let mirror = f.flags().real && g.flags().real;
    let mut out = ConvolutionTensor::zeros(spec);
    let zero = spec.zero_index();
    let len = spec.cube_len();
    // Cube order is lexicographic, so the index of -k is `len - 1 - idx`.
    let upper = if mirror { zero } else { len };
    for idx in 0..upper {
        if idx == zero {
            continue;
        }
        let k = spec.wavevector_at(idx);
        let mut acc = [[CZERO; 3]; 3];
        for (l, fl) in &f_modes {
            let m = k - *l;
            if m.is_zero() || m.sup_norm() > n as u32 {
                continue;
            }
            let gm = &g_dense[spec.cube_index(m).expect("inside cube")];
            for i in 0..3 {
                for j in (if same { i } else { 0 })..3 {
                    acc[i][j] += fl[i] * gm[j];
                }
            }
        }
        if same {
            for i in 0..3 {
                for j in 0..i {
                    acc[i][j] = acc[j][i];
                }
            }
        }
        out.data[idx] = acc;
        if mirror {
            out.data[len - 1 - idx] = acc.map(|row| row.map(|c| c.conj()));
        }
    }
    out
}

fn wrap(c: i32, size: usize) -> usize {
    c.rem_euclid(size as i32) as usize
}

fn to_physical(
    fft: &Fft3,
    f: &SpectralField,
    comp: usize,
    work: &mut Vec<Complex64>,
) -> Vec<Complex64> {
    let size = fft.size();
    let mut buf = vec![CZERO; fft.len()];
    for (k, v) in f.modes() {
        let [a, b, c] = k.0;
        buf[(wrap(a, size) * size + wrap(b, size)) * size + wrap(c, size)] = v[comp];
    }
    fft.inverse(&mut buf, work);
    buf
}

fn fast(fft: &Fft3, f: &SpectralField, g: &SpectralField, same: bool) -> ConvolutionTensor {
    let spec = f.spec();
    let size = fft.size();
    let norm = 1.0 / fft.len() as f64;
    let mut work = Vec::new();
    let fp: Vec<Vec<Complex64>> = (0..3).map(|c| to_physical(fft, f, c, &mut work)).collect();
    let gp: Vec<Vec<Complex64>> = if same {
        Vec::new()
    } else {
        (0..3).map(|c| to_physical(fft, g, c, &mut work)).collect()
    };
    let gp = if same { &fp } else { &gp };

    // Cube index → padded-grid index for every lattice point.
    let zero = spec.zero_index();
    let grid_index: Vec<usize> = (0..spec.cube_len())
        .map(|i| {
            let [a, b, c] = spec.wavevector_at(i).0;
            (wrap(a, size) * size + wrap(b, size)) * size + wrap(c, size)
        })
        .collect();

    let mut out = ConvolutionTensor::zeros(spec);
    let mut prod = vec![CZERO; fft.len()];
    for i in 0..3 {
        for j in 0..3 {
            if same && j < i {
                continue;
            }
            for ((p, a), b) in prod.iter_mut().zip(&fp[i]).zip(&gp[j]) {
                *p = a * b;
            }
            fft.forward(&mut prod, &mut work);
            for (idx, slot) in out.data.iter_mut().enumerate() {
                if idx == zero {
                    continue;
                }
                let v = prod[grid_index[idx]] * norm;
                slot[i][j] = v;
                if same {
                    slot[j][i] = v;
                }
            }
        }
    }
    out
}
