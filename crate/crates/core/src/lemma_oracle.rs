//! Brute-force certificate for the lattice bound
//!
//! ```text
//! |k| · Σ_{j ≠ 0, k} 1 / (|j|² |k - j|²) ≤ c
//! ```
//!
//! The sum is truncated to the cube `|j|∞ ≤ R`, accumulated shell by shell in
//! ascending `|j|∞`, and completed by an explicit upper bound on the remainder.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{shell_count, WaveVector};
use crate::summation::NeumaierSum;

const LANES: usize = 16;
const HALF: usize = LANES / 2;

/// Σ_{t=lo}^{hi} 1 / ((a0 + t²)(b0 + (c - t)²)), compensated per lane.
#[inline(always)]
fn segment_body(a0: f64, b0: f64, c: f64, lo: i64, hi: i64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    let mut s = [0.0f64; LANES];
    let mut comp = [0.0f64; LANES];
    let mut t0 = lo as f64;
    let n = (hi - lo + 1) as usize;
    let full = n / LANES;
    for _ in 0..full {
        let mut p = [0.0f64; LANES];
        for (l, pl) in p.iter_mut().enumerate() {
            let t = t0 + l as f64;
            let u = c - t;
            *pl = (a0 + t * t) * (b0 + u * u);
        }
        // One division per pair: 1/p = p' / (p p').
        let mut x = [0.0f64; LANES];
        for l in 0..HALF {
            let inv = 1.0 / (p[l] * p[l + HALF]);
            x[l] = p[l + HALF] * inv;
            x[l + HALF] = p[l] * inv;
        }
        for l in 0..LANES {
            let y = x[l] - comp[l];
            let tot = s[l] + y;
            comp[l] = (tot - s[l]) - y;
            s[l] = tot;
        }
        t0 += LANES as f64;
    }
    let mut acc = NeumaierSum::new();
    for l in 0..LANES {
        acc.add(s[l]);
        acc.add(-comp[l]);
    }
    for i in 0..(n - full * LANES) {
        let t = t0 + i as f64;
        let u = c - t;
        acc.add(1.0 / ((a0 + t * t) * (b0 + u * u)));
    }
    acc.value()
}

// Same operations in the same order; only the instruction selection differs,
// so results are bit-identical to the portable build (no FMA contraction).
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn segment_avx512(a0: f64, b0: f64, c: f64, lo: i64, hi: i64) -> f64 {
    segment_body(a0, b0, c, lo, hi)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn segment_avx2(a0: f64, b0: f64, c: f64, lo: i64, hi: i64) -> f64 {
    segment_body(a0, b0, c, lo, hi)
}

fn segment_sum(a0: f64, b0: f64, c: f64, lo: i64, hi: i64) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { segment_avx512(a0, b0, c, lo, hi) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { segment_avx2(a0, b0, c, lo, hi) };
        }
    }
    segment_body(a0, b0, c, lo, hi)
}

/// Line sum with the excluded points `j = 0` (where `a0 + t² = 0`) and `j = k`
/// (where `b0 + (c-t)² = 0`) removed.
fn line_sum(a0: i64, b0: i64, c: i64, lo: i64, hi: i64) -> f64 {
    let mut cuts: Vec<i64> = Vec::with_capacity(2);
    if a0 == 0 && lo <= 0 && 0 <= hi {
        cuts.push(0);
    }
    if b0 == 0 && lo <= c && c <= hi {
        cuts.push(c);
    }
    cuts.sort_unstable();
    cuts.dedup();
    let (a, b, cf) = (a0 as f64, b0 as f64, c as f64);
    let mut acc = NeumaierSum::new();
    let mut start = lo;
    for cut in cuts {
        acc.add(segment_sum(a, b, cf, start, cut - 1));
        start = cut + 1;
    }
    acc.add(segment_sum(a, b, cf, start, hi));
    acc.value()
}

fn sq(x: i64) -> i64 {
    x * x
}

/// `Σ_{|j|∞ = l, j ≠ k} 1/(|j|²|k-j|²)`.
pub fn shell_sum(k: WaveVector, l: u32) -> f64 {
    let [k1, k2, k3] = k.0.map(i64::from);
    let l = l as i64;
    let mut acc = NeumaierSum::new();
    // Faces |j1| = l: full lines along j3.
    for j1 in [-l, l] {
        for j2 in -l..=l {
            acc.add(line_sum(
                sq(j1) + sq(j2),
                sq(k1 - j1) + sq(k2 - j2),
                k3,
                -l,
                l,
            ));
        }
    }
    // Faces |j2| = l, |j1| < l: full lines along j3.
    for j1 in -l + 1..l {
        for j2 in [-l, l] {
            acc.add(line_sum(
                sq(j1) + sq(j2),
                sq(k1 - j1) + sq(k2 - j2),
                k3,
                -l,
                l,
            ));
        }
    }
    // Faces |j3| = l, |j1|, |j2| < l: lines along j2.
    for j3 in [-l, l] {
        for j1 in -l + 1..l {
            acc.add(line_sum(
                sq(j1) + sq(j3),
                sq(k1 - j1) + sq(k3 - j3),
                k2,
                -l + 1,
                l - 1,
            ));
        }
    }
    acc.value()
}

fn check_radius(k: WaveVector, r: u32) -> Result<()> {
    if k.is_zero() {
        return Err(Error::InvalidArgument("k must be nonzero".into()));
    }
    if (r as u64) < 4 * k.sup_norm() as u64 {
        return Err(Error::InvalidArgument(format!(
            "R = {r} is below 4|k|∞ = {} for k = {k}",
            4 * k.sup_norm()
        )));
    }
    Ok(())
}

/// Shell sums for `l = 1..=r`, index `l - 1`.
pub fn shell_sums(k: WaveVector, r: u32) -> Vec<f64> {
    (1..=r).map(|l| shell_sum(k, l)).collect()
}

/// `S_R(k)`, summed in ascending shell order.
pub fn convolution_sum(k: WaveVector, r: u32) -> Result<f64> {
    check_radius(k, r)?;
    Ok(crate::summation::neumaier_sum(shell_sums(k, r)))
}

/// Upper bound on `S_∞(k) - S_R(k)`.
///
/// On shell `l > R` every term is at most `1/(l²(l-|k|)²)` since `|j| ≥ l` and
/// `|k-j| ≥ l - |k| > 0`; with `24l² + 2` points per shell the summand
/// `(24 + 2/l²)/(l-|k|)²` is decreasing, so the series is dominated by
/// `∫_R^∞ (24 + 2/R²)/(x-|k|)² dx = (24 + 2/R²)/(R - |k|)`.
pub fn tail_bound(k: WaveVector, r: u32) -> Result<f64> {
    check_radius(k, r)?;
    let rf = r as f64;
    let kn = k.euclid_norm();
    debug_assert!(rf > kn);
    Ok((24.0 + 2.0 / (rf * rf)) / (rf - kn))
}

/// Partial sums over the four regions of `{0 < |j|∞ ≤ R} ∖ {k}` with `m = |k|∞`:
/// `Q1: |j|∞ > 4m`, `Q2: 4|j|∞ < m`, `Q3: 4|k-j|∞ < m`, `Q4`: the rest of `|j|∞ ≤ 4m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSums {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub total: f64,
    pub r: u32,
}

impl RegionSums {
    /// `|k| q_i`, the constants of the per-region bounds `q_i ≤ C_i / |k|`.
    pub fn scaled(&self, k: WaveVector) -> [f64; 4] {
        let kn = k.euclid_norm();
        [self.q1, self.q2, self.q3, self.q4].map(|q| q * kn)
    }
}

pub fn region_sums(k: WaveVector, r: u32) -> Result<RegionSums> {
    check_radius(k, r)?;
    Ok(split_regions(k, &shell_sums(k, r)))
}

/// Region split given the shell sums `l = 1..=R` of `k`.
fn split_regions(k: WaveVector, shells: &[f64]) -> RegionSums {
    let r = shells.len() as u32;
    let m = k.sup_norm() as i64;
    let inner = 4 * m;
    let total = crate::summation::neumaier_sum(shells.iter().copied());
    let q1 = crate::summation::neumaier_sum(shells[inner as usize..].iter().copied());
    let (mut q2, mut q3, mut q4) = (NeumaierSum::new(), NeumaierSum::new(), NeumaierSum::new());
    for a in -inner..=inner {
        for b in -inner..=inner {
            for c in -inner..=inner {
                let j = WaveVector([a as i32, b as i32, c as i32]);
                if j.is_zero() || j == k {
                    continue;
                }
                let term = 1.0 / ((j.norm_sq() * (k - j).norm_sq()) as f64);
                if 4 * (j.sup_norm() as i64) < m {
                    q2.add(term);
                } else if 4 * ((k - j).sup_norm() as i64) < m {
                    q3.add(term);
                } else {
                    q4.add(term);
                }
            }
        }
    }
    RegionSums {
        q1,
        q2: q2.value(),
        q3: q3.value(),
        q4: q4.value(),
        total,
        r,
    }
}

/// `R` as a multiple of `|k|∞`; written `"16x"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RadiusPolicy {
    multiple: u32,
}

impl RadiusPolicy {
    pub fn new(multiple: u32) -> Result<Self> {
        if multiple < 4 {
            return Err(Error::InvalidArgument(format!(
                "radius multiple must be at least 4, got {multiple}"
            )));
        }
        Ok(RadiusPolicy { multiple })
    }

    pub fn multiple(&self) -> u32 {
        self.multiple
    }

    pub fn radius(&self, k: WaveVector) -> u32 {
        self.multiple * k.sup_norm()
    }
}

impl Default for RadiusPolicy {
    fn default() -> Self {
        RadiusPolicy { multiple: 16 }
    }
}

impl FromStr for RadiusPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidArgument(format!("radius policy must look like `16x`, got `{s}`"));
        let digits = s.strip_suffix('x').ok_or_else(bad)?;
        let m: u32 = digits.parse().map_err(|_| bad())?;
        RadiusPolicy::new(m)
    }
}

impl fmt::Display for RadiusPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x", self.multiple)
    }
}

impl TryFrom<String> for RadiusPolicy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RadiusPolicy> for String {
    fn from(p: RadiusPolicy) -> String {
        p.to_string()
    }
}

/// One representative `k1 ≥ k2 ≥ k3 ≥ 0` of a signed-permutation orbit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub k: WaveVector,
    /// Number of lattice points in the orbit of `k`.
    pub orbit: usize,
    pub r: u32,
    pub s_r: f64,
    pub tail: f64,
    /// `|k| (S_R + tail)`
    pub scaled: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<RegionSums>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub k_max: u32,
    pub policy: RadiusPolicy,
    pub c_est: f64,
    pub argmax: WaveVector,
    pub rows: Vec<LemmaRow>,
}

impl ConstantEstimate {
    /// Maximum restricted to `|k|∞ ≤ k_max`.
    pub fn restricted(&self, k_max: u32) -> Option<(f64, WaveVector)> {
        self.rows.iter().filter(|r| r.k.sup_norm() <= k_max).fold(
            None,
            |best: Option<(f64, WaveVector)>, r| match best {
                Some((c, _)) if c >= r.scaled => best,
                _ => Some((r.scaled, r.k)),
            },
        )
    }
}

/// Canonical representatives `k1 ≥ k2 ≥ k3 ≥ 0`, `0 < k1 ≤ K`.
pub fn canonical_representatives(k_max: u32) -> Vec<WaveVector> {
    let k_max = k_max as i32;
    let mut out = Vec::new();
    for a in 1..=k_max {
        for b in 0..=a {
            for c in 0..=b {
                out.push(WaveVector::new(a, b, c));
            }
        }
    }
    out
}

/// Size of the orbit of `k` under coordinate permutations and sign flips.
pub fn orbit_size(k: WaveVector) -> usize {
    let mut pts = std::collections::BTreeSet::new();
    let [a, b, c] = k.0;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        for s in 0..8 {
            let sg = |i: usize| if s >> i & 1 == 1 { -1 } else { 1 };
            pts.insert([p[0] * sg(0), p[1] * sg(1), p[2] * sg(2)]);
        }
    }
    pts.len()
}

/// `c_est(K) = max_{0 < |k|∞ ≤ K} |k| (S_R(k) + tail_bound(k, R))`, `R = policy(k)`.
///
/// Both `S_R` and the tail are invariant under signed permutations of `k`, so
/// one representative per orbit is evaluated.
pub fn estimate_constant(k_max: u32, policy: RadiusPolicy) -> Result<ConstantEstimate> {
    estimate(k_max, policy, false)
}

/// As [`estimate_constant`], with the Q1–Q4 split attached to every row.
pub fn estimate_constant_with_regions(
    k_max: u32,
    policy: RadiusPolicy,
) -> Result<ConstantEstimate> {
    estimate(k_max, policy, true)
}

fn estimate(k_max: u32, policy: RadiusPolicy, regions: bool) -> Result<ConstantEstimate> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let mut reps = canonical_representatives(k_max);
    // Largest first so the parallel tail is short.
    reps.sort_by_key(|k| std::cmp::Reverse(k.sup_norm()));
    let mut rows = reps
        .par_iter()
        .map(|&k| {
            let r = policy.radius(k);
            let tail = tail_bound(k, r)?;
            let shells = shell_sums(k, r);
            let s_r = crate::summation::neumaier_sum(shells.iter().copied());
            let regions = regions.then(|| split_regions(k, &shells));
            Ok(LemmaRow {
                k,
                orbit: orbit_size(k),
                r,
                s_r,
                tail,
                scaled: k.euclid_norm() * (s_r + tail),
                regions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.k);
    let (c_est, argmax) = rows.iter().fold((0.0f64, WaveVector::ZERO), |(c, a), r| {
        if r.scaled > c {
            (r.scaled, r.k)
        } else {
            (c, a)
        }
    });
    Ok(ConstantEstimate {
        k_max,
        policy,
        c_est,
        argmax,
        rows,
    })
}

/// Number of lattice points on shell `l` as claimed without the `+2`, for side-by-side reporting.
pub fn shell_count_without_corners(l: u32) -> u64 {
    shell_count(l) - 2
}
