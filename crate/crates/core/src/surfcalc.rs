//! Surface differential operators in the fixed ambient frame, and a suite of
//! identity checks that compares independent discrete routes to the same
//! geometric quantity.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{AmbientField, Mat3, MatrixField, ScalarField, TangentField, Vec3, WeightField};
use crate::geometry::{Backend, SurfaceGrid};
use crate::random::{FieldSampler, DEFAULT_DEGREE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorReport {
    pub identity: String,
    pub backend: String,
    pub resolution: usize,
    pub residual_max: f64,
    pub residual_l2: f64,
    pub seed: u64,
}

// ---- slice kernels -----------------------------------------------------------

pub(crate) fn strain_raw(grid: &SurfaceGrid, v: &[Vec3]) -> Vec<Mat3> {
    let g = grid.grad_matrix_raw(v);
    g.iter().zip(&grid.proj).map(|(m, p)| p * (m + m.transpose()) * 0.5 * p).collect()
}

/// `(Y . grad) X` with the tangential projection applied: `P (grad X)^T Y`.
pub(crate) fn covariant_raw(grid: &SurfaceGrid, x: &[Vec3], y: &[Vec3]) -> Vec<Vec3> {
    let g = grid.grad_matrix_raw(x);
    (0..grid.len()).map(|i| grid.proj[i] * (g[i].transpose() * y[i])).collect()
}

pub(crate) fn hodge_raw(grid: &SurfaceGrid, x: &[Vec3]) -> Vec<Vec3> {
    let lap = grid.laplacian_vector_raw(x);
    (0..grid.len())
        .map(|i| {
            let w = &grid.weingarten[i];
            grid.proj[i] * lap[i] + (2.0 * w * w - grid.mean_curvature[i] * w) * x[i]
        })
        .collect()
}

pub(crate) fn bochner_raw(grid: &SurfaceGrid, x: &[Vec3]) -> Vec<Vec3> {
    let lap = grid.laplacian_vector_raw(x);
    (0..grid.len())
        .map(|i| {
            let w = &grid.weingarten[i];
            grid.proj[i] * lap[i] + w * w * x[i]
        })
        .collect()
}

pub(crate) fn ricci_raw(grid: &SurfaceGrid, x: &[Vec3]) -> Vec<Vec3> {
    (0..grid.len())
        .map(|i| {
            let w = &grid.weingarten[i];
            (grid.mean_curvature[i] * w - w * w) * x[i]
        })
        .collect()
}

/// `P div_G [g D(X)]`.
pub(crate) fn viscous_raw(grid: &SurfaceGrid, g: &[f64], x: &[Vec3]) -> Vec<Vec3> {
    let d: Vec<Mat3> = strain_raw(grid, x).iter().zip(g).map(|(m, gi)| m * *gi).collect();
    let div = grid.div_matrix_raw(&d);
    div.iter().zip(&grid.proj).map(|(v, p)| p * v).collect()
}

fn curvature_at(w: &Mat3, x: &Vec3, y: &Vec3, z: &Vec3) -> Vec3 {
    let wz = w * z;
    (w * x) * wz.dot(y) - (w * y) * wz.dot(x)
}

// ---- checked operators -------------------------------------------------------

pub fn tangential_gradient(grid: &SurfaceGrid, eta: &ScalarField) -> Result<TangentField> {
    eta.ensure_on(grid.id())?;
    grid.tangent(grid.grad_raw(eta.values()))
}

pub fn surface_divergence(grid: &SurfaceGrid, v: &AmbientField) -> Result<ScalarField> {
    v.ensure_on(grid.id())?;
    grid.scalar(grid.div_raw(v.values()))
}

/// Divergence applied to each column of `s`.
pub fn matrix_divergence(grid: &SurfaceGrid, s: &MatrixField) -> Result<AmbientField> {
    s.ensure_on(grid.id())?;
    grid.ambient(grid.div_matrix_raw(s.values()))
}

/// `(grad_G v)_ij = D_i v_j`.
pub fn tangential_gradient_matrix(grid: &SurfaceGrid, v: &AmbientField) -> Result<MatrixField> {
    v.ensure_on(grid.id())?;
    grid.matrix(grid.grad_matrix_raw(v.values()))
}

pub fn strain_rate(grid: &SurfaceGrid, v: &AmbientField) -> Result<MatrixField> {
    v.ensure_on(grid.id())?;
    grid.matrix(strain_raw(grid, v.values()))
}

/// Levi-Civita derivative of `x` along `y`.
pub fn covariant_derivative(grid: &SurfaceGrid, x: &TangentField, y: &TangentField) -> Result<TangentField> {
    x.as_ambient().ensure_on(grid.id())?;
    y.as_ambient().ensure_on(grid.id())?;
    grid.tangent(covariant_raw(grid, x.values(), y.values()))
}

pub fn laplace_beltrami(grid: &SurfaceGrid, eta: &ScalarField) -> Result<ScalarField> {
    eta.ensure_on(grid.id())?;
    grid.scalar(grid.laplacian_raw(eta.values()))
}

pub fn laplace_beltrami_vector(grid: &SurfaceGrid, v: &AmbientField) -> Result<AmbientField> {
    v.ensure_on(grid.id())?;
    grid.ambient(grid.laplacian_vector_raw(v.values()))
}

pub fn hodge_laplacian(grid: &SurfaceGrid, x: &TangentField) -> Result<TangentField> {
    x.as_ambient().ensure_on(grid.id())?;
    grid.tangent(hodge_raw(grid, x.values()))
}

pub fn bochner_laplacian(grid: &SurfaceGrid, x: &TangentField) -> Result<TangentField> {
    x.as_ambient().ensure_on(grid.id())?;
    grid.tangent(bochner_raw(grid, x.values()))
}

pub fn ricci(grid: &SurfaceGrid, x: &TangentField) -> Result<TangentField> {
    x.as_ambient().ensure_on(grid.id())?;
    grid.tangent(ricci_raw(grid, x.values()))
}

pub fn curvature_tensor(grid: &SurfaceGrid, x: &TangentField, y: &TangentField, z: &TangentField) -> Result<TangentField> {
    for f in [x, y, z] {
        f.as_ambient().ensure_on(grid.id())?;
    }
    let v = (0..grid.len())
        .map(|i| curvature_at(&grid.weingarten[i], &x.values()[i], &y.values()[i], &z.values()[i]))
        .collect();
    grid.tangent(v)
}

pub fn viscous_term(grid: &SurfaceGrid, g: &WeightField, x: &TangentField) -> Result<TangentField> {
    g.field().ensure_on(grid.id())?;
    x.as_ambient().ensure_on(grid.id())?;
    grid.tangent(viscous_raw(grid, g.values(), x.values()))
}

/// Vector Laplacian on the sphere from the latitude-longitude component
/// formula. Component functions are interpolated in colatitude by a cosine
/// or sine series (chosen by the parity of each longitudinal mode) so that
/// the polar coordinate singularity never has to be differentiated through.
pub fn sphere_delta2(grid: &SurfaceGrid, x: &TangentField) -> Result<TangentField> {
    x.as_ambient().ensure_on(grid.id())?;
    let s = grid
        .sphere_data()
        .ok_or_else(|| Error::Precondition("sphere_delta2 needs the sphere backend".into()))?;
    let tr = &s.transform;
    let a2 = s.radius * s.radius;
    let (nlat, nlon) = (tr.nlat, tr.nlon);
    let mmax = tr.lmax;
    let theta: Vec<f64> = tr.cos_t.iter().map(|c| c.acos()).collect();

    // per parity: D1 = B' B^-1, D2 = B'' B^-1
    let ops: Vec<(DMatrix<f64>, DMatrix<f64>)> = [0usize, 1]
        .iter()
        .map(|&odd| {
            let basis = |j: usize, k: usize, d: usize| {
                let (f, t) = if odd == 1 { ((k + 1) as f64, theta[j]) } else { (k as f64, theta[j]) };
                let a = f * t;
                match (odd, d) {
                    (0, 0) => a.cos(),
                    (0, 1) => -f * a.sin(),
                    (0, _) => -f * f * a.cos(),
                    (_, 0) => a.sin(),
                    (_, 1) => f * a.cos(),
                    _ => -f * f * a.sin(),
                }
            };
            let b = DMatrix::from_fn(nlat, nlat, |j, k| basis(j, k, 0));
            let b1 = DMatrix::from_fn(nlat, nlat, |j, k| basis(j, k, 1));
            let b2 = DMatrix::from_fn(nlat, nlat, |j, k| basis(j, k, 2));
            let inv = b.try_inverse().expect("colatitude interpolation matrix is regular");
            (&b1 * &inv, &b2 * &inv)
        })
        .collect();

    let (xt, xp) = grid.frame_components(x.values());
    // longitude Fourier coefficients per latitude: [m][j]
    let fourier = |f: &[f64]| -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut c = vec![DVector::zeros(nlat); mmax + 1];
        let mut sn = vec![DVector::zeros(nlat); mmax + 1];
        for j in 0..nlat {
            let row = &f[j * nlon..(j + 1) * nlon];
            for m in 0..=mmax {
                let (mut ac, mut as_) = (0.0, 0.0);
                for (k, v) in row.iter().enumerate() {
                    let ang = m as f64 * tr.phi[k];
                    ac += v * ang.cos();
                    as_ += v * ang.sin();
                }
                let norm = if m == 0 { 1.0 } else { 2.0 } / nlon as f64;
                c[m][j] = ac * norm;
                sn[m][j] = as_ * norm;
            }
        }
        (c, sn)
    };
    let (tc, ts) = fourier(&xt);
    let (pc, ps) = fourier(&xp);

    let mut out_t = vec![0.0; grid.len()];
    let mut out_p = vec![0.0; grid.len()];
    for m in 0..=mmax {
        // vector components carry the opposite parity of scalar modes
        let (d1, d2) = &ops[(m + 1) % 2];
        let mf = m as f64;
        let scalar_lap = |f: &DVector<f64>| -> DVector<f64> {
            let f1 = d1 * f;
            let f2 = d2 * f;
            DVector::from_fn(nlat, |j, _| {
                let (c, sn) = (tr.cos_t[j], tr.sin_t[j]);
                (f2[j] + c / sn * f1[j] - mf * mf * f[j] / (sn * sn)) / a2
            })
        };
        let lt_c = scalar_lap(&tc[m]);
        let lt_s = scalar_lap(&ts[m]);
        let lp_c = scalar_lap(&pc[m]);
        let lp_s = scalar_lap(&ps[m]);
        for j in 0..nlat {
            let (c, sn) = (tr.cos_t[j], tr.sin_t[j]);
            let k0 = 1.0 / (a2 * sn * sn);
            let k1 = 2.0 * c / (a2 * sn * sn);
            // d/dphi maps (cos, sin) coefficients (a, b) to (m b, -m a)
            let dpt = (mf * ts[m][j], -mf * tc[m][j]);
            let dpp = (mf * ps[m][j], -mf * pc[m][j]);
            let rt = (lt_c[j] - k0 * tc[m][j] - k1 * dpp.0, lt_s[j] - k0 * ts[m][j] - k1 * dpp.1);
            let rp = (lp_c[j] - k0 * pc[m][j] + k1 * dpt.0, lp_s[j] - k0 * ps[m][j] + k1 * dpt.1);
            for k in 0..nlon {
                let ang = mf * tr.phi[k];
                let (ca, sa) = (ang.cos(), ang.sin());
                out_t[j * nlon + k] += rt.0 * ca + rt.1 * sa;
                out_p[j * nlon + k] += rp.0 * ca + rp.1 * sa;
            }
        }
    }
    let v = (0..grid.len()).map(|i| grid.frame[i][0] * out_t[i] + grid.frame[i][1] * out_p[i]).collect();
    grid.tangent(v)
}

/// Empirical constant `C` in `|grad v|^2 <= C (|D(v)|^2 + |v|^2)` over random
/// tangential fields.
pub fn korn_constant(grid: &SurfaceGrid, seed: u64, samples: usize) -> f64 {
    let mut sampler = FieldSampler::new(grid, seed, DEFAULT_DEGREE);
    (0..samples)
        .map(|_| {
            let v = sampler.tangent();
            let g = grid.grad_matrix_raw(v.values());
            let d = strain_raw(grid, v.values());
            let lhs = grid.inner_matrix(&g, &g);
            let rhs = grid.inner_matrix(&d, &d) + grid.inner_vector(v.values(), v.values());
            lhs / rhs
        })
        .fold(0.0, f64::max)
}

// ---- identity suite ----------------------------------------------------------

fn residual_vec(grid: &SurfaceGrid, r: &[Vec3]) -> (f64, f64) {
    (r.iter().fold(0.0, |m, x| m.max(x.norm())), grid.l2_vector(r))
}

fn residual_mat(grid: &SurfaceGrid, r: &[Mat3]) -> (f64, f64) {
    (r.iter().fold(0.0, |m, x| m.max(x.norm())), grid.l2_matrix(r))
}

fn residual_scalar(grid: &SurfaceGrid, r: &[f64]) -> (f64, f64) {
    (r.iter().fold(0.0, |m, x| m.max(x.abs())), grid.l2_scalar(r))
}

fn sub(a: &[Vec3], b: &[Vec3]) -> Vec<Vec3> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `grad div X + n x grad div(X x n)`: the Hodge Laplacian through
/// divergence and rotation of the field.
fn hodge_by_div_rot(grid: &SurfaceGrid, x: &[Vec3]) -> Vec<Vec3> {
    let gd = grid.grad_raw(&grid.div_tangential_raw(x));
    let xn: Vec<Vec3> = x.iter().zip(&grid.normals).map(|(a, n)| a.cross(n)).collect();
    let gr = grid.grad_raw(&grid.div_tangential_raw(&xn));
    (0..grid.len()).map(|i| gd[i] + grid.normals[i].cross(&gr[i])).collect()
}

/// `P div_G [P (grad X) P]`: the Bochner Laplacian as the divergence of the
/// covariant gradient.
fn bochner_by_div(grid: &SurfaceGrid, x: &[Vec3]) -> Vec<Vec3> {
    let g = grid.grad_matrix_raw(x);
    let cov: Vec<Mat3> = g.iter().zip(&grid.proj).map(|(m, p)| p * m * p).collect();
    let d = grid.div_matrix_raw(&cov);
    d.iter().zip(&grid.proj).map(|(v, p)| p * v).collect()
}

/// Names of the identities evaluated by [`run_identity_suite`].
pub const IDENTITIES: [&str; 13] = [
    "gauss", "div_p", "td_exchange", "curvature_tensor", "curvature_symmetry", "ricci_curvature", "hodge_laplacian",
    "bochner_laplacian", "weitzenboeck", "strain_divergence", "vector_laplacian_sphere", "duality", "weingarten_normal",
];

/// Evaluate every identity on seeded random fields. The sphere-only
/// component formula is skipped on other backends. On coarse sphere grids
/// the sampled degree drops to `L/2 - 2` so that products of two fields
/// stay resolved.
pub fn run_identity_suite(grid: &SurfaceGrid, seed: u64) -> Result<Vec<OperatorReport>> {
    let degree = match grid.sphere_data() {
        Some(_) => DEFAULT_DEGREE.min((grid.resolution() / 2).saturating_sub(2).max(1)),
        None => DEFAULT_DEGREE,
    };
    let mut sampler = FieldSampler::new(grid, seed, degree);
    let x = sampler.tangent();
    let y = sampler.tangent();
    let z = sampler.tangent();
    let u = sampler.tangent();
    let eta = sampler.scalar();
    let (xv, yv, zv, uv) = (x.values(), y.values(), z.values(), u.values());
    let n = grid.len();
    let mut out = Vec::new();
    let mut push = |name: &str, (rmax, rl2): (f64, f64)| {
        out.push(OperatorReport {
            identity: name.to_string(),
            backend: grid.backend_name().to_string(),
            resolution: grid.resolution(),
            residual_max: rmax,
            residual_l2: rl2,
            seed,
        });
    };

    // normal part of (Y . grad) X against the second fundamental form
    let gx = grid.grad_matrix_raw(xv);
    let r: Vec<Vec3> = (0..n)
        .map(|i| {
            let nn = &grid.normals[i];
            let dd = gx[i].transpose() * yv[i];
            nn * (nn.dot(&dd) - (grid.weingarten[i] * xv[i]).dot(&yv[i]))
        })
        .collect();
    push("gauss", residual_vec(grid, &r));

    let p: Vec<Mat3> = grid.proj.clone();
    let dp = grid.div_matrix_raw(&p);
    let r: Vec<Vec3> = (0..n).map(|i| dp[i] - grid.normals[i] * grid.mean_curvature[i]).collect();
    push("div_p", residual_vec(grid, &r));

    let ge = grid.grad_raw(eta.values());
    let h2 = grid.grad_matrix_raw(&ge);
    let r: Vec<Mat3> = (0..n)
        .map(|i| {
            let a = grid.weingarten[i] * ge[i];
            let nn = grid.normals[i];
            h2[i] - h2[i].transpose() - (a * nn.transpose() - nn * a.transpose())
        })
        .collect();
    push("td_exchange", residual_mat(grid, &r));

    // R(X,Y)Z = D_X D_Y Z - D_Y D_X Z - D_[X,Y] Z
    let dyz = covariant_raw(grid, zv, yv);
    let dxz = covariant_raw(grid, zv, xv);
    let dxdyz = covariant_raw(grid, &dyz, xv);
    let dydxz = covariant_raw(grid, &dxz, yv);
    let bracket = sub(&covariant_raw(grid, yv, xv), &covariant_raw(grid, xv, yv));
    let dbz = covariant_raw(grid, zv, &bracket);
    let r: Vec<Vec3> = (0..n)
        .map(|i| dxdyz[i] - dydxz[i] - dbz[i] - curvature_at(&grid.weingarten[i], &xv[i], &yv[i], &zv[i]))
        .collect();
    push("curvature_tensor", residual_vec(grid, &r));

    let r: Vec<f64> = (0..n)
        .map(|i| {
            let w = &grid.weingarten[i];
            curvature_at(w, &xv[i], &yv[i], &zv[i]).dot(&uv[i]) - curvature_at(w, &zv[i], &uv[i], &xv[i]).dot(&yv[i])
        })
        .collect();
    push("curvature_symmetry", residual_scalar(grid, &r));

    let ric = ricci_raw(grid, xv);
    let r: Vec<Vec3> = (0..n).map(|i| ric[i] - xv[i] * grid.gauss_curvature[i]).collect();
    push("ricci_curvature", residual_vec(grid, &r));

    let hl = hodge_raw(grid, xv);
    let hl2 = hodge_by_div_rot(grid, xv);
    push("hodge_laplacian", residual_vec(grid, &sub(&hl, &hl2)));

    let bl = bochner_raw(grid, xv);
    let bl2 = bochner_by_div(grid, xv);
    push("bochner_laplacian", residual_vec(grid, &sub(&bl, &bl2)));

    let r: Vec<Vec3> = (0..n).map(|i| bl2[i] - hl2[i] - xv[i] * grid.gauss_curvature[i]).collect();
    push("weitzenboeck", residual_vec(grid, &r));

    let visc = viscous_raw(grid, &vec![1.0; n], xv);
    let gdiv = grid.grad_raw(&grid.div_tangential_raw(xv));
    let r: Vec<Vec3> = (0..n)
        .map(|i| 2.0 * visc[i] - (bl[i] + gdiv[i] + xv[i] * grid.gauss_curvature[i]))
        .collect();
    push("strain_divergence", residual_vec(grid, &r));

    if let Backend::Sphere(s) = grid.backend() {
        let d2 = sphere_delta2(grid, &x)?;
        let a2 = s.radius * s.radius;
        let r: Vec<Vec3> = (0..n)
            .map(|i| {
                let e1 = d2.values()[i] - hl[i];
                let e2 = d2.values()[i] - (bl[i] - xv[i] / a2);
                if e1.norm() > e2.norm() {
                    e1
                } else {
                    e2
                }
            })
            .collect();
        push("vector_laplacian_sphere", residual_vec(grid, &r));
    }

    let dx = grid.div_tangential_raw(xv);
    let d = grid.inner_scalar(&dx, eta.values()) + grid.inner_vector(xv, &ge);
    push("duality", (d.abs(), d.abs()));

    let r: Vec<Vec3> = (0..n).map(|i| grid.weingarten[i] * grid.normals[i]).collect();
    push("weingarten_normal", residual_vec(grid, &r));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn killing(grid: &SurfaceGrid, a: Vec3) -> TangentField {
        grid.tangent_from_fn(|y| a.cross(y))
    }

    fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
    }

    #[test]
    fn gradient_of_height_on_sphere() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let eta = g.scalar_from_fn(|y| y.z);
        let gr = tangential_gradient(&g, &eta).unwrap();
        let exact: Vec<Vec3> = g.nodes.iter().map(|y| Vec3::z() - y * y.z).collect();
        assert!(max_diff(gr.values(), &exact) < 1e-12);
        let c = g.scalar(vec![3.0; g.len()]).unwrap();
        assert!(tangential_gradient(&g, &c).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn y20_dirichlet_energy() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let eta = g.scalar_from_fn(|y| 3.0 * y.z * y.z - 1.0);
        let gr = tangential_gradient(&g, &eta).unwrap();
        let ratio = g.inner_vector(gr.values(), gr.values()) / g.inner_scalar(eta.values(), eta.values());
        assert!((ratio - 6.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_examples_sphere() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let n = g.ambient(g.normals.clone()).unwrap();
        let d = surface_divergence(&g, &n).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-12));
        let k = killing(&g, Vec3::new(0.3, -1.0, 2.0));
        let d = surface_divergence(&g, k.as_ambient()).unwrap();
        assert!(d.max_abs() < 1e-12);
    }

    #[test]
    fn gradient_matrix_of_normal_is_minus_weingarten() {
        for g in [SurfaceGrid::sphere(1.5, 12).unwrap(), SurfaceGrid::torus(2.0, 1.0, 64, 64).unwrap()] {
            let n = g.ambient(g.normals.clone()).unwrap();
            let gm = tangential_gradient_matrix(&g, &n).unwrap();
            let err = gm.values().iter().zip(&g.weingarten).fold(0.0f64, |m, (a, w)| m.max((a + w).norm()));
            assert!(err < 1e-12);
            let v = FieldSampler::new(&g, 1, 6).tangent();
            let gv = tangential_gradient_matrix(&g, v.as_ambient()).unwrap();
            let err = (0..g.len()).fold(0.0f64, |m, i| {
                m.max((gv.values()[i] * g.normals[i] - g.weingarten[i] * v.values()[i]).norm())
            });
            assert!(err < g.tolerance() * 10.0, "grad_w {err}");
        }
    }

    #[test]
    fn killing_fields_on_unit_sphere() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let x = killing(&g, Vec3::new(0.0, 0.0, 1.0));
        let d = strain_rate(&g, x.as_ambient()).unwrap();
        assert!(d.values().iter().all(|m| m.norm() < 1e-12));
        let cd = covariant_derivative(&g, &x, &x).unwrap();
        let q = g.scalar_from_fn(|y| 0.5 * (Vec3::z().cross(y)).norm_squared());
        let gq = tangential_gradient(&g, &q).unwrap();
        let neg: Vec<Vec3> = gq.values().iter().map(|v| -v).collect();
        assert!(max_diff(cd.values(), &neg) < 1e-12);
        let h = hodge_laplacian(&g, &x).unwrap();
        let minus2: Vec<Vec3> = x.values().iter().map(|v| -2.0 * v).collect();
        assert!(max_diff(h.values(), &minus2) < 1e-12);
        let b = bochner_laplacian(&g, &x).unwrap();
        let minus1: Vec<Vec3> = x.values().iter().map(|v| -v).collect();
        assert!(max_diff(b.values(), &minus1) < 1e-12);
        let d2 = sphere_delta2(&g, &x).unwrap();
        assert!(max_diff(d2.values(), &minus2) < 1e-10);
        let one = WeightField::from_field(g.scalar(vec![1.0; g.len()]).unwrap()).unwrap();
        assert!(viscous_term(&g, &one, &x).unwrap().max_norm() < 1e-12);
    }

    #[test]
    fn laplacian_eigenvalues() {
        let g = SurfaceGrid::sphere(2.0, 12).unwrap();
        // Y_32 shape: sin^2 t cos t cos 2p = z (x^2 - y^2) / a^3
        let eta = g.scalar_from_fn(|y| y.z * (y.x * y.x - y.y * y.y));
        let l = laplace_beltrami(&g, &eta).unwrap();
        for (a, b) in l.values().iter().zip(eta.values()) {
            assert!((a + 12.0 / 4.0 * b).abs() < 1e-11);
        }
        let one = g.scalar(vec![1.0; g.len()]).unwrap();
        assert!(laplace_beltrami(&g, &one).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn curvature_tensor_examples() {
        let g = SurfaceGrid::sphere(1.0, 10).unwrap();
        let t1 = g.tangent(g.frame.iter().map(|f| f[0]).collect()).unwrap();
        let t2 = g.tangent(g.frame.iter().map(|f| f[1]).collect()).unwrap();
        let r = curvature_tensor(&g, &t1, &t2, &t2).unwrap();
        assert!(max_diff(r.values(), t1.values()) < 1e-12);
        let r = curvature_tensor(&g, &t1, &t1, &t2).unwrap();
        assert!(r.max_norm() < 1e-15);
        let ric = ricci(&g, &t1).unwrap();
        assert!(max_diff(ric.values(), t1.values()) < 1e-12);
    }

    #[test]
    fn vector_harmonic_eigenvalue() {
        // n x grad Y_l is a divergence-free eigenfield of the Hodge Laplacian
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let eta = g.scalar_from_fn(|y| y.z * (y.x * y.x - y.y * y.y));
        let gr = g.grad_raw(eta.values());
        let x = g.tangent(gr.iter().zip(&g.normals).map(|(v, n)| n.cross(v)).collect()).unwrap();
        let h = hodge_laplacian(&g, &x).unwrap();
        let rq = g.inner_vector(h.values(), x.values()) / g.inner_vector(x.values(), x.values());
        assert!((rq + 12.0).abs() < 1e-10);
    }

    #[test]
    fn sphere_suite_is_tight() {
        let g = SurfaceGrid::sphere(1.0, 32).unwrap();
        for r in run_identity_suite(&g, 7).unwrap() {
            assert!(r.residual_max < 1e-8, "{} {}", r.identity, r.residual_max);
        }
    }

    #[test]
    fn torus_suite_converges() {
        let coarse = run_identity_suite(&SurfaceGrid::torus(2.0, 1.0, 32, 32).unwrap(), 7).unwrap();
        let fine = run_identity_suite(&SurfaceGrid::torus(2.0, 1.0, 64, 64).unwrap(), 7).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            let floor = c.residual_max < 1e-12 && f.residual_max < 1e-12;
            assert!(floor || c.residual_max / f.residual_max > 8.0, "{}", c.identity);
        }
    }

    #[test]
    fn korn_constant_is_finite() {
        let g = SurfaceGrid::sphere(1.0, 12).unwrap();
        let c = korn_constant(&g, 1, 10);
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = SurfaceGrid::sphere(1.0, 8).unwrap();
        let b = SurfaceGrid::sphere(1.0, 8).unwrap();
        let eta = a.scalar(vec![0.0; a.len()]).unwrap();
        assert!(matches!(tangential_gradient(&b, &eta), Err(Error::GridMismatch { .. })));
    }
}
