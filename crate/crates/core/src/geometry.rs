//! Discrete closed surfaces: a spectral sphere grid and a doubly periodic
//! torus grid, each carrying normals, projections, the Weingarten map
//! `W = -grad_G n`, curvatures and quadrature weights.
//!
//! Sign conventions: `n` points outward, `H = tr W` and `K` is the product of
//! the two tangential eigenvalues of `W`. On the unit sphere `H = -2`, `K = 1`.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{AmbientField, Field, GridId, Mat3, MatrixField, ScalarField, TangentField, Vec3};
use crate::par;
use crate::sphere::{SphCoeffs, SphereTransform};
use crate::torus::PeriodicGrid;

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Sphere-specific transform data.
#[derive(Debug, Clone)]
pub struct SphereData {
    pub radius: f64,
    pub transform: SphereTransform,
}

/// Torus-specific parameter data.
#[derive(Debug, Clone)]
pub struct TorusData {
    pub major: f64,
    pub minor: f64,
    pub grid: PeriodicGrid,
    /// `d mu / d theta`, `d mu / d phi` at each node.
    pub dmu: Vec<[Vec3; 2]>,
    pub metric: Vec<Matrix2<f64>>,
    pub metric_inv: Vec<Matrix2<f64>>,
    pub sqrt_det: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum Backend {
    Sphere(SphereData),
    Torus(TorusData),
}

/// JSON-serialisable description of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum GridDescriptor {
    Sphere { radius: f64, bandlimit: usize, nodes: usize },
    Torus { major_radius: f64, minor_radius: f64, n_theta: usize, n_phi: usize, nodes: usize },
}

/// A discretised closed surface with immutable per-node geometry.
#[derive(Debug, Clone)]
pub struct SurfaceGrid {
    id: GridId,
    backend: Backend,
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub normals: Vec<Vec3>,
    pub proj: Vec<Mat3>,
    pub weingarten: Vec<Mat3>,
    pub mean_curvature: Vec<f64>,
    pub gauss_curvature: Vec<f64>,
    /// Orthonormal tangent frame per node (`e_theta`, `e_phi` on both backends).
    pub frame: Vec<[Vec3; 2]>,
}

fn fresh_id() -> GridId {
    GridId(NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed))
}

/// Product of the two tangential eigenvalues of `w` in the frame `(t1, t2)`.
fn tangential_det(w: &Mat3, t1: &Vec3, t2: &Vec3) -> f64 {
    let m = Matrix2::new(t1.dot(&(w * t1)), t1.dot(&(w * t2)), t2.dot(&(w * t1)), t2.dot(&(w * t2)));
    m.determinant()
}

impl SurfaceGrid {
    /// Sphere of radius `radius` resolved up to spherical harmonic degree
    /// `bandlimit` on `(L + 1) x (2L + 2)` nodes.
    pub fn sphere(radius: f64, bandlimit: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("sphere radius must be positive, got {radius}")));
        }
        if bandlimit < 8 {
            return Err(Error::Config(format!("sphere bandlimit must be at least 8, got {bandlimit}")));
        }
        let tr = SphereTransform::new(bandlimit);
        let dphi = 2.0 * PI / tr.nlon as f64;
        let n = tr.n_nodes();
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut frame = Vec::with_capacity(n);
        for j in 0..tr.nlat {
            let (ct, st) = (tr.cos_t[j], tr.sin_t[j]);
            for k in 0..tr.nlon {
                let (cp, sp) = (tr.phi[k].cos(), tr.phi[k].sin());
                nodes.push(Vec3::new(radius * st * cp, radius * st * sp, radius * ct));
                weights.push(radius * radius * tr.gl_w[j] * dphi);
                frame.push([Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-sp, cp, 0.0)]);
            }
        }
        let normals: Vec<Vec3> = nodes.iter().map(|y| y / radius).collect();
        let proj: Vec<Mat3> = normals.iter().map(|nv| Mat3::identity() - nv * nv.transpose()).collect();
        let weingarten: Vec<Mat3> = proj.iter().map(|p| -p / radius).collect();
        Ok(Self {
            id: fresh_id(),
            backend: Backend::Sphere(SphereData { radius, transform: tr }),
            nodes,
            weights,
            normals,
            proj,
            weingarten,
            mean_curvature: vec![-2.0 / radius; n],
            gauss_curvature: vec![1.0 / (radius * radius); n],
            frame,
        })
    }

    /// Torus `((R + r cos t) cos p, (R + r cos t) sin p, r sin t)` on an
    /// `n_theta x n_phi` parameter grid. The Weingarten map is obtained by
    /// differentiating the normal field on the grid.
    pub fn torus(major: f64, minor: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(major.is_finite() && minor.is_finite() && major > 0.0 && minor > 0.0) {
            return Err(Error::Config(format!("torus radii must be positive, got R={major}, r={minor}")));
        }
        if minor >= major {
            return Err(Error::Config(format!("torus requires r < R (self-intersection), got R={major}, r={minor}")));
        }
        if n_theta < 32 || n_phi < 32 || n_theta % 2 == 1 || n_phi % 2 == 1 {
            return Err(Error::Config(format!("torus resolution must be even and >= 32, got {n_theta}x{n_phi}")));
        }
        let pg = PeriodicGrid::new(n_theta, n_phi);
        let n = pg.len();
        let mut nodes = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut dmu = Vec::with_capacity(n);
        let mut metric = Vec::with_capacity(n);
        let mut metric_inv = Vec::with_capacity(n);
        let mut sqrt_det = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut frame = Vec::with_capacity(n);
        for i in 0..n_theta {
            let t = pg.theta(i);
            for k in 0..n_phi {
                let p = pg.phi(k);
                let rho = major + minor * t.cos();
                nodes.push(Vec3::new(rho * p.cos(), rho * p.sin(), minor * t.sin()));
                let mt = Vec3::new(-minor * t.sin() * p.cos(), -minor * t.sin() * p.sin(), minor * t.cos());
                let mp = Vec3::new(-rho * p.sin(), rho * p.cos(), 0.0);
                let g = Matrix2::new(mt.dot(&mt), mt.dot(&mp), mp.dot(&mt), mp.dot(&mp));
                let det = g.determinant();
                let ginv = g.try_inverse().expect("regular parametrisation");
                normals.push(mp.cross(&mt).normalize());
                frame.push([-mt.normalize(), mp.normalize()]);
                dmu.push([mt, mp]);
                metric.push(g);
                metric_inv.push(ginv);
                sqrt_det.push(det.sqrt());
                weights.push(det.sqrt() * pg.h_theta * pg.h_phi);
            }
        }
        let proj: Vec<Mat3> = normals.iter().map(|nv| Mat3::identity() - nv * nv.transpose()).collect();
        let mut grid = Self {
            id: fresh_id(),
            backend: Backend::Torus(TorusData { major, minor, grid: pg, dmu, metric, metric_inv, sqrt_det }),
            nodes,
            weights,
            normals,
            proj,
            weingarten: Vec::new(),
            mean_curvature: Vec::new(),
            gauss_curvature: Vec::new(),
            frame,
        };
        let normals = grid.normals.clone();
        let dn = grid.grad_matrix_raw(&normals);
        grid.weingarten = dn.iter().map(|m| -m).collect();
        grid.mean_curvature = grid.weingarten.iter().map(|w| w.trace()).collect();
        grid.gauss_curvature = grid
            .weingarten
            .iter()
            .zip(&grid.frame)
            .map(|(w, [t1, t2])| tangential_det(w, t1, t2))
            .collect();
        Ok(grid)
    }

    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.backend, Backend::Sphere(_))
    }

    pub fn sphere_data(&self) -> Option<&SphereData> {
        match &self.backend {
            Backend::Sphere(s) => Some(s),
            Backend::Torus(_) => None,
        }
    }

    pub fn torus_data(&self) -> Option<&TorusData> {
        match &self.backend {
            Backend::Torus(t) => Some(t),
            Backend::Sphere(_) => None,
        }
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Sphere(_) => "sphere",
            Backend::Torus(_) => "torus",
        }
    }

    /// Resolution label used in reports: bandlimit on the sphere, `n_theta`
    /// on the torus.
    pub fn resolution(&self) -> usize {
        match &self.backend {
            Backend::Sphere(s) => s.transform.lmax,
            Backend::Torus(t) => t.grid.n_theta,
        }
    }

    /// Geometric tolerance of the backend: analytic on the sphere, limited by
    /// differencing the normal on the torus.
    pub fn tolerance(&self) -> f64 {
        match self.backend {
            Backend::Sphere(_) => 1e-10,
            Backend::Torus(_) => 1e-6,
        }
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        match &self.backend {
            Backend::Sphere(s) => GridDescriptor::Sphere { radius: s.radius, bandlimit: s.transform.lmax, nodes: self.len() },
            Backend::Torus(t) => GridDescriptor::Torus {
                major_radius: t.major,
                minor_radius: t.minor,
                n_theta: t.grid.n_theta,
                n_phi: t.grid.n_phi,
                nodes: self.len(),
            },
        }
    }

    // ---- field construction -------------------------------------------------

    pub fn scalar(&self, values: Vec<f64>) -> Result<ScalarField> {
        self.check_len(values.len())?;
        Ok(Field::new(self.id, values))
    }

    pub fn ambient(&self, values: Vec<Vec3>) -> Result<AmbientField> {
        self.check_len(values.len())?;
        Ok(Field::new(self.id, values))
    }

    pub fn matrix(&self, values: Vec<Mat3>) -> Result<MatrixField> {
        self.check_len(values.len())?;
        Ok(Field::new(self.id, values))
    }

    /// Build a tangential field, applying `v <- P v` at every node.
    pub fn tangent(&self, values: Vec<Vec3>) -> Result<TangentField> {
        self.check_len(values.len())?;
        Ok(TangentField(Field::new(self.id, self.project_tangent(&values))))
    }

    pub fn scalar_from_fn(&self, f: impl Fn(&Vec3) -> f64) -> ScalarField {
        Field::new(self.id, self.nodes.iter().map(f).collect())
    }

    pub fn ambient_from_fn(&self, f: impl Fn(&Vec3) -> Vec3) -> AmbientField {
        Field::new(self.id, self.nodes.iter().map(f).collect())
    }

    pub fn tangent_from_fn(&self, f: impl Fn(&Vec3) -> Vec3) -> TangentField {
        let v: Vec<Vec3> = self.nodes.iter().map(f).collect();
        TangentField(Field::new(self.id, self.project_tangent(&v)))
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n == self.len() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("field has {n} values, grid has {} nodes", self.len())))
        }
    }

    // ---- slice-level kernels -------------------------------------------------

    pub fn project_tangent(&self, v: &[Vec3]) -> Vec<Vec3> {
        v.iter().zip(&self.normals).map(|(x, n)| x - n * n.dot(x)).collect()
    }

    /// Quadrature sum in fixed node order.
    pub fn integrate_raw(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn inner_scalar(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    pub fn inner_vector(&self, a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x.dot(y) * w).sum()
    }

    pub fn inner_matrix(&self, a: &[Mat3], b: &[Mat3]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x.dot(y) * w).sum()
    }

    pub fn l2_scalar(&self, a: &[f64]) -> f64 {
        self.inner_scalar(a, a).sqrt()
    }

    pub fn l2_vector(&self, a: &[Vec3]) -> f64 {
        self.inner_vector(a, a).sqrt()
    }

    pub fn l2_matrix(&self, a: &[Mat3]) -> f64 {
        self.inner_matrix(a, a).sqrt()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate_raw(f) / self.area()
    }

    /// Tangential gradient of a scalar grid function. On the sphere the input
    /// is first projected onto degrees `<= L`.
    pub fn grad_raw(&self, f: &[f64]) -> Vec<Vec3> {
        match &self.backend {
            Backend::Sphere(s) => {
                let c = s.transform.analysis(f);
                self.sphere_grad_coeffs(&c)
            }
            Backend::Torus(t) => {
                let ft = t.grid.d_theta(f);
                let fp = t.grid.d_phi(f);
                par::map_range(self.len(), |i| {
                    let gi = &t.metric_inv[i];
                    let [mt, mp] = &t.dmu[i];
                    let a = gi[(0, 0)] * ft[i] + gi[(0, 1)] * fp[i];
                    let b = gi[(1, 0)] * ft[i] + gi[(1, 1)] * fp[i];
                    mt * a + mp * b
                })
            }
        }
    }

    /// Gradient of a spherical harmonic expansion (sphere backend only).
    pub fn sphere_grad_coeffs(&self, c: &SphCoeffs) -> Vec<Vec3> {
        let s = self.sphere_data().expect("sphere backend");
        let (dt, dp) = s.transform.gradient_synthesis(c);
        let inv_a = 1.0 / s.radius;
        (0..self.len()).map(|i| (self.frame[i][0] * dt[i] + self.frame[i][1] * dp[i]) * inv_a).collect()
    }

    /// Divergence of the tangential part of `v`. This is exactly minus the
    /// quadrature adjoint of [`grad_raw`](Self::grad_raw).
    pub fn div_tangential_raw(&self, v: &[Vec3]) -> Vec<f64> {
        match &self.backend {
            Backend::Sphere(s) => {
                let c = self.sphere_weak_div_coeffs(v);
                s.transform.synthesis(&c)
            }
            Backend::Torus(t) => {
                let n = self.len();
                let mut xt = vec![0.0; n];
                let mut xp = vec![0.0; n];
                for i in 0..n {
                    let gi = &t.metric_inv[i];
                    let [mt, mp] = &t.dmu[i];
                    let (a, b) = (mt.dot(&v[i]), mp.dot(&v[i]));
                    xt[i] = t.sqrt_det[i] * (gi[(0, 0)] * a + gi[(0, 1)] * b);
                    xp[i] = t.sqrt_det[i] * (gi[(1, 0)] * a + gi[(1, 1)] * b);
                }
                let dt = t.grid.d_theta(&xt);
                let dp = t.grid.d_phi(&xp);
                (0..n).map(|i| (dt[i] + dp[i]) / t.sqrt_det[i]).collect()
            }
        }
    }

    /// Harmonic coefficients of the weak divergence of `v` (sphere only).
    pub fn sphere_weak_div_coeffs(&self, v: &[Vec3]) -> SphCoeffs {
        let s = self.sphere_data().expect("sphere backend");
        let (ft, fp) = self.frame_components(v);
        let mut c = s.transform.gradient_adjoint(&ft, &fp);
        let scale = -1.0 / s.radius;
        c.cos.iter_mut().chain(c.sin.iter_mut()).for_each(|x| *x *= scale);
        c
    }

    /// Components of `v` along the tangent frame.
    pub fn frame_components(&self, v: &[Vec3]) -> (Vec<f64>, Vec<f64>) {
        let a = v.iter().zip(&self.frame).map(|(x, f)| x.dot(&f[0])).collect();
        let b = v.iter().zip(&self.frame).map(|(x, f)| x.dot(&f[1])).collect();
        (a, b)
    }

    /// Surface divergence of a general ambient field:
    /// `div_G v = div_G(P v) - H (v . n)`.
    pub fn div_raw(&self, v: &[Vec3]) -> Vec<f64> {
        let d = self.div_tangential_raw(v);
        d.iter()
            .enumerate()
            .map(|(i, di)| di - self.mean_curvature[i] * v[i].dot(&self.normals[i]))
            .collect()
    }

    /// Tangential gradient matrix `(grad_G v)_ij = D_i v_j`.
    pub fn grad_matrix_raw(&self, v: &[Vec3]) -> Vec<Mat3> {
        let cols: Vec<Vec<Vec3>> = (0..3)
            .map(|j| {
                let comp: Vec<f64> = v.iter().map(|x| x[j]).collect();
                self.grad_raw(&comp)
            })
            .collect();
        (0..self.len())
            .map(|i| Mat3::from_columns(&[cols[0][i], cols[1][i], cols[2][i]]))
            .collect()
    }

    /// Row divergence of a matrix field: `[div_G S]_j = sum_i D_i S_ij`.
    pub fn div_matrix_raw(&self, s: &[Mat3]) -> Vec<Vec3> {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                let col: Vec<Vec3> = s.iter().map(|m| m.column(j).into_owned()).collect();
                self.div_raw(&col)
            })
            .collect();
        (0..self.len()).map(|i| Vec3::new(cols[0][i], cols[1][i], cols[2][i])).collect()
    }

    pub fn laplacian_raw(&self, f: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Sphere(s) => {
                let mut c = s.transform.analysis(f);
                let a2 = s.radius * s.radius;
                c.scale_by_degree(|l| -((l * (l + 1)) as f64) / a2);
                s.transform.synthesis(&c)
            }
            Backend::Torus(_) => {
                let g = self.grad_raw(f);
                self.div_tangential_raw(&g)
            }
        }
    }

    pub fn laplacian_vector_raw(&self, v: &[Vec3]) -> Vec<Vec3> {
        let comps: Vec<Vec<f64>> = (0..3)
            .map(|j| {
                let c: Vec<f64> = v.iter().map(|x| x[j]).collect();
                self.laplacian_raw(&c)
            })
            .collect();
        (0..self.len()).map(|i| Vec3::new(comps[0][i], comps[1][i], comps[2][i])).collect()
    }

    /// Project a scalar grid function onto the discrete scalar space of the
    /// backend (degree `<= L` on the sphere; identity on the torus).
    pub fn project_scalar_space(&self, f: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Sphere(s) => s.transform.synthesis(&s.transform.analysis(f)),
            Backend::Torus(_) => f.to_vec(),
        }
    }

    /// Grid functions annihilated by the discrete gradient, besides those
    /// already removed by [`project_scalar_space`](Self::project_scalar_space).
    pub fn gradient_kernel(&self) -> Vec<Vec<f64>> {
        match &self.backend {
            Backend::Sphere(_) => vec![vec![1.0; self.len()]],
            Backend::Torus(t) => {
                let np = t.grid.n_phi;
                let sign = |p: usize| if p % 2 == 0 { 1.0 } else { -1.0 };
                vec![
                    vec![1.0; self.len()],
                    (0..self.len()).map(|i| sign(i / np)).collect(),
                    (0..self.len()).map(|i| sign(i % np)).collect(),
                    (0..self.len()).map(|i| sign(i / np + i % np)).collect(),
                ]
            }
        }
    }

    /// Approximate inverse of `-w_mean Lap + shift`, self-adjoint and
    /// nonnegative in the quadrature inner product. Used as a CG
    /// preconditioner. Modes where the operator symbol vanishes map to zero.
    pub fn apply_inverse_shifted_laplacian(&self, r: &[f64], w_mean: f64, shift: f64) -> Vec<f64> {
        match &self.backend {
            Backend::Sphere(s) => {
                let mut c = s.transform.analysis(r);
                let a2 = s.radius * s.radius;
                c.scale_by_degree(|l| {
                    let d = w_mean * (l * (l + 1)) as f64 / a2 + shift;
                    if d > 0.0 {
                        1.0 / d
                    } else {
                        0.0
                    }
                });
                s.transform.synthesis(&c)
            }
            Backend::Torus(t) => {
                let n = self.len();
                let inv_n = 1.0 / n as f64;
                let ct: f64 = t.metric_inv.iter().zip(&t.sqrt_det).map(|(g, d)| g[(0, 0)] * d).sum::<f64>() * inv_n;
                let cp: f64 = t.metric_inv.iter().zip(&t.sqrt_det).map(|(g, d)| g[(1, 1)] * d).sum::<f64>() * inv_n;
                let cd: f64 = t.sqrt_det.iter().sum::<f64>() * inv_n;
                let hh = t.grid.h_theta * t.grid.h_phi;
                let (nt, np) = (t.grid.n_theta, t.grid.n_phi);
                let wr: Vec<f64> = r.iter().zip(&self.weights).map(|(a, w)| a * w).collect();
                t.grid.fourier_multiply(&wr, |kt, kp| {
                    let st = PeriodicGrid::fd_symbol(kt, nt);
                    let sp = PeriodicGrid::fd_symbol(kp, np);
                    let d = hh * (w_mean * (ct * st * st + cp * sp * sp) + shift * cd);
                    if d > 1e-13 * hh {
                        1.0 / d
                    } else {
                        0.0
                    }
                })
            }
        }
    }

    // ---- checked public API --------------------------------------------------

    /// Quadrature approximation of the surface integral of `f`.
    pub fn integrate(&self, f: &ScalarField) -> Result<f64> {
        f.ensure_on(self.id)?;
        Ok(self.integrate_raw(f.values()))
    }
}
