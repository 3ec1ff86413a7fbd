//! In-place 3D complex FFT on a cubic grid built from 1D `rustfft` passes.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn next_fast_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalised `Σ_x u(x) e^{-2πi k·x/n}`.
    pub fn forward(&self, data: &mut [Complex64], work: &mut Vec<Complex64>) {
        self.run(&*self.forward, data, work);
    }

    /// Unnormalised `Σ_k û(k) e^{+2πi k·x/n}`.
    pub fn inverse(&self, data: &mut [Complex64], work: &mut Vec<Complex64>) {
        self.run(&*self.inverse, data, work);
    }

    fn run(&self, fft: &dyn Fft<f64>, data: &mut [Complex64], work: &mut Vec<Complex64>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // Last axis is contiguous.
        fft.process_with_scratch(data, &mut scratch);

        work.resize(n * n * n, Complex64::new(0.0, 0.0));
        // Middle axis: gather lines (a, ·, c) into contiguous rows.
        for a in 0..n {
            for c in 0..n {
                let row = (a * n + c) * n;
                for b in 0..n {
                    work[row + b] = data[(a * n + b) * n + c];
                }
            }
        }
        fft.process_with_scratch(work, &mut scratch);
        for a in 0..n {
            for c in 0..n {
                let row = (a * n + c) * n;
                for b in 0..n {
                    data[(a * n + b) * n + c] = work[row + b];
                }
            }
        }
        // First axis.
        for b in 0..n {
            for c in 0..n {
                let row = (b * n + c) * n;
                for a in 0..n {
                    work[row + a] = data[(a * n + b) * n + c];
                }
            }
        }
        fft.process_with_scratch(work, &mut scratch);
        for b in 0..n {
            for c in 0..n {
                let row = (b * n + c) * n;
                for a in 0..n {
                    data[(a * n + b) * n + c] = work[row + a];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_sizes() {
        assert_eq!(next_fast_size(17), 18);
        assert_eq!(next_fast_size(33), 36);
        assert_eq!(next_fast_size(25), 25);
        assert_eq!(next_fast_size(49), 50);
    }

    #[test]
    fn matches_naive_dft() {
        let n = 5;
        let plan = Fft3::new(n);
        let input: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = input.clone();
        let mut work = Vec::new();
        plan.forward(&mut data, &mut work);
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        for k in [(0, 0, 0), (1, 2, 3), (4, 0, 1)] {
            let mut s = Complex64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let ph = -tau * ((k.0 * a + k.1 * b + k.2 * c) as f64);
                        s += input[(a * n + b) * n + c] * Complex64::from_polar(1.0, ph);
                    }
                }
            }
            let got = data[(k.0 * n + k.1) * n + k.2];
            assert!((got - s).norm() < 1e-12);
        }
        plan.inverse(&mut data, &mut work);
        for (x, y) in data.iter().zip(&input) {
            assert!((x / (n * n * n) as f64 - y).norm() < 1e-14);
        }
    }
}
