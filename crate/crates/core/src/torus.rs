//! Doubly periodic parameter-grid machinery for the torus backend: eighth
//! order central differences and a Fourier multiplier used by the elliptic
//! preconditioners.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::par;

/// Central difference weights for offsets 1..=4 (eighth order).
const FD8: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

/// Periodic `n_theta x n_phi` grid, row-major in `theta`.
#[derive(Clone)]
pub struct PeriodicGrid {
    pub n_theta: usize,
    pub n_phi: usize,
    pub h_theta: f64,
    pub h_phi: f64,
    fft_theta: Arc<dyn Fft<f64>>,
    ifft_theta: Arc<dyn Fft<f64>>,
    fft_phi: Arc<dyn Fft<f64>>,
    ifft_phi: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicGrid").field("n_theta", &self.n_theta).field("n_phi", &self.n_phi).finish()
    }
}

impl PeriodicGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n_theta,
            n_phi,
            h_theta: 2.0 * PI / n_theta as f64,
            h_phi: 2.0 * PI / n_phi as f64,
            fft_theta: planner.plan_fft_forward(n_theta),
            ifft_theta: planner.plan_fft_inverse(n_theta),
            fft_phi: planner.plan_fft_forward(n_phi),
            ifft_phi: planner.plan_fft_inverse(n_phi),
        }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.h_theta
    }

    pub fn phi(&self, k: usize) -> f64 {
        k as f64 * self.h_phi
    }

    pub fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let inv_h = 1.0 / self.h_theta;
        let mut out = vec![0.0; f.len()];
        par::for_each_chunk_mut(&mut out, np, |i, row| {
            for (k, v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, c) in FD8.iter().enumerate() {
                    let o = m + 1;
                    let ip = (i + o) % nt;
                    let im = (i + nt - o) % nt;
                    acc += c * (f[ip * np + k] - f[im * np + k]);
                }
                *v = acc * inv_h;
            }
        });
        out
    }

    pub fn d_phi(&self, f: &[f64]) -> Vec<f64> {
        let np = self.n_phi;
        let inv_h = 1.0 / self.h_phi;
        let mut out = vec![0.0; f.len()];
        par::for_each_chunk_mut(&mut out, np, |i, row| {
            let src = &f[i * np..(i + 1) * np];
            for (k, v) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (m, c) in FD8.iter().enumerate() {
                    let o = m + 1;
                    acc += c * (src[(k + o) % np] - src[(k + np - o) % np]);
                }
                *v = acc * inv_h;
            }
        });
        out
    }

    /// Amplitude `s(k)` of the difference operator's symbol `i s(k)` for
    /// integer wavenumber `k` on a period of `n` points.
    pub fn fd_symbol(k: i64, n: usize) -> f64 {
        let h = 2.0 * PI / n as f64;
        let kh = k as f64 * h;
        2.0 * FD8.iter().enumerate().map(|(m, c)| c * ((m + 1) as f64 * kh).sin()).sum::<f64>() / h
    }

    /// Signed wavenumber of FFT bin `j`.
    pub fn wavenumber(j: usize, n: usize) -> i64 {
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Apply the real, even Fourier multiplier `symbol(k_theta, k_phi)`.
    pub fn fourier_multiply(&self, f: &[f64], symbol: impl Fn(i64, i64) -> f64) -> Vec<f64> {
        let (nt, np) = (self.n_theta, self.n_phi);
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        for row in buf.chunks_mut(np) {
            self.fft_phi.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); nt];
        for k in 0..np {
            for i in 0..nt {
                col[i] = buf[i * np + k];
            }
            self.fft_theta.process(&mut col);
            let kp = Self::wavenumber(k, np);
            for (i, c) in col.iter_mut().enumerate() {
                *c *= symbol(Self::wavenumber(i, nt), kp);
            }
            self.ifft_theta.process(&mut col);
            for i in 0..nt {
                buf[i * np + k] = col[i];
            }
        }
        for row in buf.chunks_mut(np) {
            self.ifft_phi.process(row);
        }
        let scale = 1.0 / (nt * np) as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eighth_order_convergence() {
        let err = |n: usize| {
            let g = PeriodicGrid::new(n, 8);
            let f: Vec<f64> = (0..g.len()).map(|i| (3.0 * g.theta(i / 8)).sin()).collect();
            let d = g.d_theta(&f);
            (0..g.len()).map(|i| (d[i] - 3.0 * (3.0 * g.theta(i / 8)).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 200.0, "ratio {ratio}");
    }

    #[test]
    fn difference_matrix_is_antisymmetric() {
        let g = PeriodicGrid::new(16, 16);
        let a: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let b: Vec<f64> = (0..g.len()).map(|i| ((i * 104729) % 11) as f64 - 5.0).collect();
        for d in [PeriodicGrid::d_theta, PeriodicGrid::d_phi] {
            let lhs: f64 = d(&g, &a).iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.iter().zip(d(&g, &b)).map(|(x, y)| x * y).sum();
            assert!((lhs + rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn fourier_multiplier_matches_difference_symbol() {
        let g = PeriodicGrid::new(16, 12);
        let f: Vec<f64> = (0..g.len()).map(|i| (2.0 * g.theta(i / 12) + g.phi(i % 12)).cos()).collect();
        let d = g.d_theta(&g.d_theta(&f));
        let m = g.fourier_multiply(&f, |kt, _| -PeriodicGrid::fd_symbol(kt, 16).powi(2));
        for i in 0..f.len() {
            assert!((d[i] - m[i]).abs() < 1e-12);
        }
    }
}
