//! Integer frequency lattice with sup-norm (cubic) truncation.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An integer frequency `k ∈ ℤ³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WaveVector(pub [i32; 3]);

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector([0, 0, 0]);

    pub const fn new(k1: i32, k2: i32, k3: i32) -> Self {
        WaveVector([k1, k2, k3])
    }

    pub fn components(&self) -> [i32; 3] {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    /// `max(|k1|, |k2|, |k3|)`
    pub fn sup_norm(&self) -> u32 {
        self.0.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    /// `k1² + k2² + k3²`, exact.
    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| c as i64 * c as i64).sum()
    }

    pub fn euclid_norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn as_f64(&self) -> [f64; 3] {
        [self.0[0] as f64, self.0[1] as f64, self.0[2] as f64]
    }
}

impl Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, o: WaveVector) -> WaveVector {
        WaveVector([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

/// Sup-norm truncation radius. The active lattice is `{k : 0 < |k|∞ ≤ N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    n: u32,
}

impl LatticeSpec {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyLattice);
        }
        Ok(LatticeSpec { n })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// Points per axis of the enclosing cube, `2N + 1`.
    pub fn side(&self) -> usize {
        2 * self.n as usize + 1
    }

    /// Size of the enclosing cube including the zero mode, `(2N+1)³`.
    pub fn cube_len(&self) -> usize {
        self.side().pow(3)
    }

    /// Number of active wavevectors, `(2N+1)³ - 1`.
    pub fn len(&self) -> usize {
        self.cube_len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: WaveVector) -> bool {
        !k.is_zero() && k.sup_norm() <= self.n
    }

    /// Dense lexicographic index of `k` in the enclosing cube, or `None` if
    /// `|k|∞ > N`. The zero mode has an index (the centre of the cube).
    pub fn cube_index(&self, k: WaveVector) -> Option<usize> {
        if k.sup_norm() > self.n {
            return None;
        }
        let n = self.n as i64;
        let s = self.side();
        let [a, b, c] = k.0.map(|x| (x as i64 + n) as usize);
        Some((a * s + b) * s + c)
    }

    pub fn wavevector_at(&self, index: usize) -> WaveVector {
        let s = self.side();
        let n = self.n as i32;
        let c = (index % s) as i32 - n;
        let b = ((index / s) % s) as i32 - n;
        let a = (index / (s * s)) as i32 - n;
        WaveVector([a, b, c])
    }

    pub fn zero_index(&self) -> usize {
        self.cube_len() / 2
    }
}

/// All active wavevectors in lexicographic order.
pub fn enumerate_lattice(spec: LatticeSpec) -> Vec<WaveVector> {
    let n = spec.n() as i32;
    let mut out = Vec::with_capacity(spec.len());
    for a in -n..=n {
        for b in -n..=n {
            for c in -n..=n {
                let k = WaveVector([a, b, c]);
                if !k.is_zero() {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// All `j` with `|j|∞ = l`, lexicographic. Count is `24l² + 2`.
pub fn shell_points(l: u32) -> Result<Vec<WaveVector>> {
    if l == 0 {
        return Err(Error::InvalidArgument(
            "shell index must be at least 1".into(),
        ));
    }
    let l = l as i32;
    let mut out = Vec::with_capacity(shell_count(l as u32) as usize);
    for a in -l..=l {
        for b in -l..=l {
            if a.abs() == l || b.abs() == l {
                for c in -l..=l {
                    out.push(WaveVector([a, b, c]));
                }
            } else {
                out.push(WaveVector([a, b, -l]));
                out.push(WaveVector([a, b, l]));
            }
        }
    }
    Ok(out)
}

/// `(2l+1)³ - (2l-1)³ = 24l² + 2`.
pub fn shell_count(l: u32) -> u64 {
    let l = l as u64;
    24 * l * l + 2
}
