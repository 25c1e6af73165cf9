//! Galerkin approximation of the limit equations in eigenfields of the
//! shifted energy form `a_g(v, w) + (v, w)` on weighted-solenoidal fields.

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Mat3, TangentField, Vec3, WeightField};
use crate::geometry::SurfaceGrid;
use crate::helmholtz::project_weighted;
use crate::nssolver::{bilinear_form_a, NsConfig};
use crate::par;
use crate::sphere::SphCoeffs;
use crate::surfcalc::strain_raw;

#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    /// Fields with `(g w_i, w_j) = delta_ij`.
    pub fields: Vec<Vec<Vec3>>,
    /// Eigenvalues of the shifted form, nondecreasing.
    pub eigenvalues: Vec<f64>,
    pub gram_defect: f64,
}

impl GalerkinBasis {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `sum_i xi_i w_i`.
    pub fn field(&self, xi: &[f64]) -> Vec<Vec3> {
        let n = self.fields.first().map_or(0, |f| f.len());
        let mut out = vec![Vec3::zeros(); n];
        for (c, w) in xi.iter().zip(&self.fields) {
            out.iter_mut().zip(w).for_each(|(o, x)| *o += x * *c);
        }
        out
    }

    /// Coefficients `(g v, w_i)` of the weighted projection of `v`.
    pub fn coefficients(&self, grid: &SurfaceGrid, g: &[f64], v: &[Vec3]) -> Vec<f64> {
        self.fields
            .iter()
            .map(|w| (0..v.len()).map(|i| grid.weights[i] * g[i] * v[i].dot(&w[i])).sum())
            .collect()
    }
}

fn g_inner(grid: &SurfaceGrid, g: &[f64], a: &[Vec3], b: &[Vec3]) -> f64 {
    (0..a.len()).map(|i| grid.weights[i] * g[i] * a[i].dot(&b[i])).sum()
}

/// Build `k` eigenfields of the shifted energy form from projected gradient
/// and rotated-gradient harmonics. Reduces `k` with a warning when the
/// spanning set is rank deficient.
pub fn galerkin_basis(grid: &SurfaceGrid, nu: f64, gamma: f64, g: &WeightField, k: usize) -> Result<GalerkinBasis> {
    let s = grid
        .sphere_data()
        .ok_or_else(|| Error::Config("the Galerkin solver needs the sphere backend".into()))?;
    g.field().ensure_on(grid.id())?;
    if k == 0 {
        return Err(Error::Config("Galerkin dimension k must be positive".into()));
    }
    let lmax = s.transform.lmax;
    let mut lspan = 1;
    while lspan * (lspan + 2) < k + 8 && lspan < lmax {
        lspan += 1;
    }
    let gv = g.values();
    let mut harmonics = Vec::new();
    for l in 1..=lspan {
        for m in 0..=l {
            for sine in [false, true] {
                if sine && m == 0 {
                    continue;
                }
                let mut c = SphCoeffs::zeros(lmax);
                if sine {
                    c.set(l, m, 0.0, 1.0);
                } else {
                    c.set(l, m, 1.0, 0.0);
                }
                harmonics.push(c);
            }
        }
    }
    let span: Vec<Vec<Vec3>> = harmonics
        .iter()
        .flat_map(|c| {
            let gr = grid.sphere_grad_coeffs(c);
            let rot: Vec<Vec3> = gr.iter().zip(&grid.normals).map(|(v, n)| n.cross(v)).collect();
            [gr, rot]
        })
        .map(|v| project_weighted(grid, &grid.tangent(v)?, g).map(|d| d.solenoidal.into_values()))
        .collect::<Result<_>>()?;

    let ns = span.len();
    let gram = DMatrix::from_fn(ns, ns, |i, j| g_inner(grid, gv, &span[i], &span[j]));
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let mut ortho: Vec<Vec<Vec3>> = Vec::new();
    for (a, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-10 * top {
            let mut f = vec![Vec3::zeros(); grid.len()];
            for (i, sp) in span.iter().enumerate() {
                let c = eig.eigenvectors[(i, a)] / lam.sqrt();
                f.iter_mut().zip(sp).for_each(|(o, x)| *o += x * c);
            }
            ortho.push(f);
        }
    }
    let r = ortho.len();
    let strains: Vec<Vec<Mat3>> = par::map_slice(&ortho, |f| strain_raw(grid, f));
    let grad_g = grid.grad_raw(gv);
    let shifted = DMatrix::from_fn(r, r, |i, j| {
        let mut a = 0.0;
        for p in 0..grid.len() {
            a += grid.weights[p] * gv[p] * strains[i][p].dot(&strains[j][p]);
        }
        if !g.is_constant() {
            for p in 0..grid.len() {
                a += grid.weights[p] * ortho[i][p].dot(&grad_g[p]) * ortho[j][p].dot(&grad_g[p]) / gv[p];
            }
        }
        2.0 * nu * a + gamma * grid.inner_vector(&ortho[i], &ortho[j]) + grid.inner_vector(&ortho[i], &ortho[j])
    });
    let shifted = (&shifted + shifted.transpose()) * 0.5;
    let eig = SymmetricEigen::new(shifted);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kk = if k > r {
        warn!("spanning set has rank {r}, reducing Galerkin dimension from {k}");
        r
    } else {
        k
    };
    let mut fields = Vec::with_capacity(kk);
    let mut eigenvalues = Vec::with_capacity(kk);
    for &a in order.iter().take(kk) {
        let mut f = vec![Vec3::zeros(); grid.len()];
        for (b, ob) in ortho.iter().enumerate() {
            let c = eig.eigenvectors[(b, a)];
            f.iter_mut().zip(ob).for_each(|(o, x)| *o += x * c);
        }
        fields.push(f);
        eigenvalues.push(eig.eigenvalues[a]);
    }
    let mut gram_defect = 0.0f64;
    for i in 0..kk {
        for j in 0..kk {
            let e = if i == j { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((g_inner(grid, gv, &fields[i], &fields[j]) - e).abs());
        }
    }
    Ok(GalerkinBasis { fields, eigenvalues, gram_defect })
}

#[derive(Debug, Clone, Serialize)]
pub struct GalerkinTrajectory {
    pub times: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    /// Smallest `c` with `max |v_k|^2 + int |grad v_k|^2 <= c (|v0|^2 + |f|^2)`.
    pub energy_constant: f64,
}

impl GalerkinTrajectory {
    pub fn at(&self, t: f64) -> &[f64] {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("nonempty trajectory");
        &self.coefficients[i]
    }
}

/// Integrate the Galerkin ODE with classical RK4 at the configured step.
pub fn galerkin_run(grid: &SurfaceGrid, cfg: &NsConfig, basis: &GalerkinBasis) -> Result<GalerkinTrajectory> {
    cfg.validate()?;
    let k = basis.len();
    let g = cfg.g.values();
    let w = &basis.fields;
    let a = DMatrix::from_fn(k, k, |i, j| bilinear_form_a(grid, cfg.nu, cfg.gamma(), &cfg.g, &w[i], &w[j]));
    // b[j][i * k + l] = b_g(w_i, w_l, w_j)
    let b: Vec<Vec<f64>> = par::map_range(k, |j| {
        let gm = grid.grad_matrix_raw(&w[j]);
        let mut row = vec![0.0; k * k];
        for i in 0..k {
            let gwi: Vec<Vec3> = (0..grid.len()).map(|p| gm[p].transpose() * w[i][p] * (g[p] * grid.weights[p])).collect();
            for l in 0..k {
                row[i * k + l] = -(0..grid.len()).map(|p| gwi[p].dot(&w[l][p])).sum::<f64>();
            }
        }
        row
    });
    let grads: Vec<Vec<Mat3>> = par::map_slice(w, |f| grid.grad_matrix_raw(f));
    let stiff = DMatrix::from_fn(k, k, |i, j| grid.inner_matrix(&grads[i], &grads[j]));
    let mass = DMatrix::from_fn(k, k, |i, j| grid.inner_vector(&w[i], &w[j]));
    let forcing = |t: f64| -> DVector<f64> {
        if cfg.force.is_zero() {
            return DVector::zeros(k);
        }
        let f = cfg.force.sample(grid.len(), t);
        DVector::from_vec(basis.coefficients(grid, g, &f))
    };
    let rhs = |t: f64, xi: &DVector<f64>| -> DVector<f64> {
        let mut d = -(a.transpose() * xi) + forcing(t);
        if cfg.nonlinear {
            for j in 0..k {
                let mut s = 0.0;
                for i in 0..k {
                    for l in 0..k {
                        s += b[j][i * k + l] * xi[i] * xi[l];
                    }
                }
                d[j] -= s;
            }
        }
        d
    };
    let xi0 = DVector::from_vec(basis.coefficients(grid, g, cfg.v0.values()));
    let steps = cfg.n_steps();
    let dt = cfg.dt;
    let mut xi = xi0.clone();
    let mut times = vec![0.0];
    let mut coefficients = vec![xi.as_slice().to_vec()];
    let norm2 = |x: &DVector<f64>| (x.transpose() * &mass * x)[(0, 0)];
    let grad2 = |x: &DVector<f64>| (x.transpose() * &stiff * x)[(0, 0)];
    let fnorm2 = |t: f64| {
        if cfg.force.is_zero() {
            0.0
        } else {
            let f = cfg.force.sample(grid.len(), t);
            grid.inner_vector(&f, &f)
        }
    };
    let mut max_norm = norm2(&xi);
    let mut grad_int = 0.0;
    let mut f_int = 0.0;
    let mut prev_grad = grad2(&xi);
    let mut prev_f = fnorm2(0.0);
    for s in 1..=steps {
        let t = (s - 1) as f64 * dt;
        let k1 = rhs(t, &xi);
        let k2 = rhs(t + 0.5 * dt, &(&xi + &k1 * (0.5 * dt)));
        let k3 = rhs(t + 0.5 * dt, &(&xi + &k2 * (0.5 * dt)));
        let k4 = rhs(t + dt, &(&xi + &k3 * dt));
        xi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !xi.iter().all(|x| x.is_finite()) {
            return Err(Error::Divergence { time: t + dt });
        }
        let gr = grad2(&xi);
        let fv = fnorm2(t + dt);
        grad_int += 0.5 * dt * (prev_grad + gr);
        f_int += 0.5 * dt * (prev_f + fv);
        prev_grad = gr;
        prev_f = fv;
        max_norm = max_norm.max(norm2(&xi));
        let keep = s == steps || (cfg.snapshot_every > 0 && s % cfg.snapshot_every == 0);
        if keep {
            times.push(t + dt);
            coefficients.push(xi.as_slice().to_vec());
        }
    }
    let data = grid.inner_vector(cfg.v0.values(), cfg.v0.values()) + f_int;
    let energy_constant = if data > 0.0 { (max_norm + grad_int) / data } else { 0.0 };
    Ok(GalerkinTrajectory { times, coefficients, energy_constant })
}

/// Reconstruct the velocity field of a Galerkin coefficient vector.
pub fn galerkin_field(grid: &SurfaceGrid, basis: &GalerkinBasis, xi: &[f64]) -> Result<TangentField> {
    grid.tangent(basis.field(xi))
}
