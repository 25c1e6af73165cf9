//! Seeded smooth random fields for identity checks and property tests.
//!
//! Sphere fields are random spherical harmonic expansions of bounded degree;
//! torus fields are random trigonometric polynomials in the two parameters
//! with wavenumbers up to [`TORUS_MODES`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fields::{AmbientField, ScalarField, TangentField, Vec3};
use crate::geometry::{Backend, SurfaceGrid};
use crate::sphere::SphCoeffs;

pub const DEFAULT_SEED: u64 = 0x5EED;
pub const DEFAULT_DEGREE: usize = 10;
pub const TORUS_MODES: i64 = 4;

pub struct FieldSampler<'a> {
    grid: &'a SurfaceGrid,
    rng: ChaCha8Rng,
    degree: usize,
}

impl<'a> FieldSampler<'a> {
    pub fn new(grid: &'a SurfaceGrid, seed: u64, degree: usize) -> Self {
        Self { grid, rng: ChaCha8Rng::seed_from_u64(seed), degree }
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Raw random values, not normalised.
    fn raw_scalar(&mut self) -> Vec<f64> {
        match self.grid.backend() {
            Backend::Sphere(s) => {
                let deg = self.degree.min(s.transform.lmax);
                let mut c = SphCoeffs::zeros(s.transform.lmax);
                for l in 0..=deg {
                    // decay keeps high degrees from dominating derivatives
                    let amp = 1.0 / (1.0 + l as f64);
                    for m in 0..=l {
                        let a = amp * self.normal();
                        let b = if m == 0 { 0.0 } else { amp * self.normal() };
                        c.set(l, m, a, b);
                    }
                }
                s.transform.synthesis(&c)
            }
            Backend::Torus(t) => {
                let kmax = TORUS_MODES.min(self.degree as i64);
                let mut modes = Vec::new();
                for kt in -kmax..=kmax {
                    for kp in 0..=kmax {
                        if kp == 0 && kt < 0 {
                            continue;
                        }
                        let amp = 1.0 / (1.0 + (kt * kt + kp * kp) as f64).sqrt();
                        let a = amp * self.normal();
                        let b = if kt == 0 && kp == 0 { 0.0 } else { amp * self.normal() };
                        modes.push((kt as f64, kp as f64, a, b));
                    }
                }
                let np = t.grid.n_phi;
                (0..self.grid.len())
                    .map(|i| {
                        let th = t.grid.theta(i / np);
                        let ph = t.grid.phi(i % np);
                        modes.iter().map(|(kt, kp, a, b)| {
                            let arg = kt * th + kp * ph;
                            a * arg.cos() + b * arg.sin()
                        }).sum()
                    })
                    .collect()
            }
        }
    }

    /// Scalar field with unit max norm.
    pub fn scalar(&mut self) -> ScalarField {
        let v = self.raw_scalar();
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        self.grid.scalar(v.iter().map(|x| x / m).collect()).expect("grid length")
    }

    fn raw_ambient(&mut self) -> Vec<Vec3> {
        let c: Vec<Vec<f64>> = (0..3).map(|_| self.raw_scalar()).collect();
        (0..self.grid.len()).map(|i| Vec3::new(c[0][i], c[1][i], c[2][i])).collect()
    }

    /// Ambient field with unit max norm.
    pub fn ambient(&mut self) -> AmbientField {
        let v = self.raw_ambient();
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.norm()));
        self.grid.ambient(v.iter().map(|x| x / m).collect()).expect("grid length")
    }

    /// `P` applied to a random ambient field, rescaled to unit max norm.
    pub fn tangent(&mut self) -> TangentField {
        let v = self.grid.project_tangent(&self.raw_ambient());
        let m = v.iter().fold(0.0f64, |a, x| a.max(x.norm()));
        self.grid.tangent(v.iter().map(|x| x / m).collect()).expect("grid length")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_field() {
        let g = SurfaceGrid::sphere(1.0, 12).unwrap();
        let a = FieldSampler::new(&g, DEFAULT_SEED, 6).tangent();
        let b = FieldSampler::new(&g, DEFAULT_SEED, 6).tangent();
        assert_eq!(a.values(), b.values());
        assert!((a.max_norm() - 1.0).abs() < 1e-14);
        let c = FieldSampler::new(&g, DEFAULT_SEED + 1, 6).tangent();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn tangent_fields_are_tangent() {
        let g = SurfaceGrid::torus(2.0, 1.0, 32, 32).unwrap();
        let v = FieldSampler::new(&g, 3, 10).tangent();
        for (x, n) in v.values().iter().zip(&g.normals) {
            assert!(x.dot(n).abs() < 1e-14);
        }
    }
}
