//! Surface Poisson problems and Helmholtz-Leray decompositions.
//!
//! Every elliptic problem here has the form `-div_G(w grad q) + c q = b`,
//! solved by preconditioned conjugate gradients in the quadrature inner
//! product. On the sphere iterates stay in the span of harmonics of degree
//! `<= L`, on the torus the operator is exactly symmetric by construction
//! of the discrete divergence.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{AmbientField, ScalarField, TangentField, Vec3, WeightField};
use crate::geometry::SurfaceGrid;

pub const CG_TOL: f64 = 1e-11;
pub const CG_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for an operator self-adjoint under
/// `inner`. Returns the solution and iteration statistics.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    inner: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = inner(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = inner(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if pap <= 0.0 {
            let res = inner(&r, &r).sqrt() / bnorm;
            return Err(Error::Solver { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = inner(&r, &r).sqrt() / bnorm;
        if res <= tol {
            return Ok((x, SolveStats { iterations: it, relative_residual: res }));
        }
        z = precond(&r);
        let rz_new = inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = inner(&r, &r).sqrt() / bnorm;
    Err(Error::Solver { iterations: max_iter, residual: res })
}

/// `-div_G(w grad q) + c q` on one grid.
pub(crate) struct Elliptic<'a> {
    grid: &'a SurfaceGrid,
    w: Vec<f64>,
    c: Option<Vec<f64>>,
    w_mean: f64,
    c_mean: f64,
}

impl<'a> Elliptic<'a> {
    pub(crate) fn new(grid: &'a SurfaceGrid, w: Vec<f64>, c: Option<Vec<f64>>) -> Self {
        let w_mean = grid.mean(&w);
        let c_mean = c.as_ref().map_or(0.0, |c| grid.mean(c));
        Self { grid, w, c, w_mean, c_mean }
    }

    pub(crate) fn apply(&self, q: &[f64]) -> Vec<f64> {
        let g = self.grid.grad_raw(q);
        let wg: Vec<Vec3> = g.iter().zip(&self.w).map(|(v, w)| v * *w).collect();
        let mut out: Vec<f64> = self.grid.div_tangential_raw(&wg).iter().map(|d| -d).collect();
        if let Some(c) = &self.c {
            let cq: Vec<f64> = c.iter().zip(q).map(|(a, b)| a * b).collect();
            let cq = self.grid.project_scalar_space(&cq);
            out.iter_mut().zip(cq).for_each(|(o, v)| *o += v);
        }
        out
    }

    fn singular(&self) -> bool {
        self.c.is_none()
    }

    /// Remove the kernel of the gradient, orthogonally in the quadrature
    /// inner product.
    fn deflate(&self, f: &mut [f64]) {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut k in self.grid.gradient_kernel() {
            for b in &basis {
                let c = self.grid.inner_scalar(&k, b);
                k.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let nrm = self.grid.l2_scalar(&k);
            if nrm > 1e-12 * self.grid.area().sqrt() {
                k.iter_mut().for_each(|x| *x /= nrm);
                basis.push(k);
            }
        }
        for b in &basis {
            let c = self.grid.inner_scalar(f, b);
            f.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        let mut rhs = self.grid.project_scalar_space(b);
        if self.singular() {
            self.deflate(&mut rhs);
        }
        let (mut q, stats) = pcg(
            |x| self.apply(x),
            |r| self.grid.apply_inverse_shifted_laplacian(r, self.w_mean, self.c_mean),
            |x, y| self.grid.inner_scalar(x, y),
            &rhs,
            CG_TOL,
            CG_MAX_ITER,
        )?;
        if self.singular() {
            self.deflate(&mut q);
        }
        Ok((q, stats))
    }
}

/// Solve `-div_G(w grad q) = eta` with `int q = 0`.
pub fn poisson_solve(grid: &SurfaceGrid, eta: &ScalarField, w: &WeightField) -> Result<(ScalarField, SolveStats)> {
    eta.ensure_on(grid.id())?;
    w.field().ensure_on(grid.id())?;
    let mean = grid.integrate_raw(eta.values());
    let scale = grid.l2_scalar(eta.values()) * grid.area().sqrt();
    if mean.abs() > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition(format!("Poisson source has nonzero integral {mean:e}")));
    }
    let (q, stats) = Elliptic::new(grid, w.values().to_vec(), None).solve(eta.values())?;
    Ok((grid.scalar(q)?, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionDiagnostics {
    /// `|(solenoidal part, complement part)|`.
    pub orthogonality_defect: f64,
    /// L2 norm of the divergence constraint applied to the solenoidal part.
    pub divergence_defect: f64,
    pub iterations: usize,
    pub solver_residual: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub solenoidal: AmbientField,
    pub potential: ScalarField,
    pub diagnostics: DecompositionDiagnostics,
}

impl Decomposition {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.diagnostics).expect("plain struct")
    }
}

fn weighted_defects(grid: &SurfaceGrid, g: &[f64], vg: &[Vec3], q: &[f64]) -> (f64, f64) {
    let gq: Vec<Vec3> = grid.grad_raw(q).iter().zip(g).map(|(v, w)| v * *w).collect();
    let orth = grid.inner_vector(vg, &gq).abs();
    let gv: Vec<Vec3> = vg.iter().zip(g).map(|(v, w)| v * *w).collect();
    let div = grid.l2_scalar(&grid.div_tangential_raw(&gv));
    (orth, div)
}

/// L2-orthogonal decomposition `v = v_g + g grad q` with `div_G(g v_g) = 0`,
/// computed from `-div_G(g^2 grad q) = -div_G(g v)`.
pub fn project_weighted(grid: &SurfaceGrid, v: &TangentField, g: &WeightField) -> Result<Decomposition> {
    v.as_ambient().ensure_on(grid.id())?;
    g.field().ensure_on(grid.id())?;
    let gv: Vec<Vec3> = v.values().iter().zip(g.values()).map(|(x, w)| x * *w).collect();
    let rhs: Vec<f64> = grid.div_tangential_raw(&gv).iter().map(|d| -d).collect();
    let g2: Vec<f64> = g.values().iter().map(|w| w * w).collect();
    let (q, stats) = Elliptic::new(grid, g2, None).solve(&rhs)?;
    let grad_q = grid.grad_raw(&q);
    let vg: Vec<Vec3> = (0..grid.len()).map(|i| v.values()[i] - grad_q[i] * g.values()[i]).collect();
    let (orth, div) = weighted_defects(grid, g.values(), &vg, &q);
    Ok(Decomposition {
        solenoidal: grid.ambient(vg)?,
        potential: grid.scalar(q)?,
        diagnostics: DecompositionDiagnostics {
            orthogonality_defect: orth,
            divergence_defect: div,
            iterations: stats.iterations,
            solver_residual: stats.relative_residual,
            tolerance: CG_TOL,
        },
    })
}

/// Recompute the defects of a weighted decomposition from its parts.
pub fn weighted_decomposition_defects(grid: &SurfaceGrid, d: &Decomposition, g: &WeightField) -> (f64, f64) {
    weighted_defects(grid, g.values(), d.solenoidal.values(), d.potential.values())
}

/// Decomposition of a general ambient field `v = v_s + grad q + q H n` with
/// `div_G v_s = 0`. No gauge freedom: the normal equations are coercive
/// because `H` does not vanish identically.
pub fn project_general(grid: &SurfaceGrid, v: &AmbientField) -> Result<Decomposition> {
    v.ensure_on(grid.id())?;
    let vv = v.values();
    let wt = grid.div_tangential_raw(vv);
    let rhs: Vec<f64> = (0..grid.len())
        .map(|i| -wt[i] + grid.mean_curvature[i] * vv[i].dot(&grid.normals[i]))
        .collect();
    let h2: Vec<f64> = grid.mean_curvature.iter().map(|h| h * h).collect();
    let (q, stats) = Elliptic::new(grid, vec![1.0; grid.len()], Some(h2)).solve(&rhs)?;
    let gq = grid.grad_raw(&q);
    let vs: Vec<Vec3> = (0..grid.len())
        .map(|i| vv[i] - gq[i] - grid.normals[i] * (q[i] * grid.mean_curvature[i]))
        .collect();
    let comp: Vec<Vec3> = (0..grid.len()).map(|i| gq[i] + grid.normals[i] * (q[i] * grid.mean_curvature[i])).collect();
    let orth = grid.inner_vector(&vs, &comp).abs();
    let div = grid.l2_scalar(&grid.div_raw(&vs));
    Ok(Decomposition {
        solenoidal: grid.ambient(vs)?,
        potential: grid.scalar(q)?,
        diagnostics: DecompositionDiagnostics {
            orthogonality_defect: orth,
            divergence_defect: div,
            iterations: stats.iterations,
            solver_residual: stats.relative_residual,
            tolerance: CG_TOL,
        },
    })
}

/// Find `q` with `g grad q = F` and zero mean. Fails with a consistency
/// error when `F` is not a weighted gradient to relative tolerance `tol`.
pub fn recover_pressure(grid: &SurfaceGrid, f: &TangentField, g: &WeightField, tol: f64) -> Result<ScalarField> {
    f.as_ambient().ensure_on(grid.id())?;
    g.field().ensure_on(grid.id())?;
    let q = recover_pressure_raw(grid, f.values(), g.values())?;
    let defect = pressure_defect(grid, f.values(), g.values(), &q);
    let fnorm = grid.l2_vector(f.values());
    if defect > tol * fnorm {
        return Err(Error::Consistency { what: "residual is not a weighted gradient".into(), defect: defect / fnorm });
    }
    grid.scalar(q)
}

pub(crate) fn recover_pressure_raw(grid: &SurfaceGrid, f: &[Vec3], g: &[f64]) -> Result<Vec<f64>> {
    let gf: Vec<Vec3> = f.iter().zip(g).map(|(x, w)| x * *w).collect();
    let rhs: Vec<f64> = grid.div_tangential_raw(&gf).iter().map(|d| -d).collect();
    let g2: Vec<f64> = g.iter().map(|w| w * w).collect();
    Ok(Elliptic::new(grid, g2, None).solve(&rhs)?.0)
}

/// `|| g grad q - F ||_{L2}`.
pub fn pressure_defect(grid: &SurfaceGrid, f: &[Vec3], g: &[f64], q: &[f64]) -> f64 {
    let gq = grid.grad_raw(q);
    let r: Vec<Vec3> = (0..grid.len()).map(|i| gq[i] * g[i] - f[i]).collect();
    grid.l2_vector(&r)
}

/// Projection onto weighted-solenoidal fields that is orthogonal in the
/// `g`-weighted inner product: `v = v* - grad phi` with
/// `-div_G(g grad phi) = -div_G(g v*)`. Coincides with
/// [`project_weighted`] when `g` is constant.
pub fn leray_weighted(grid: &SurfaceGrid, v: &[Vec3], g: &[f64]) -> Result<(Vec<Vec3>, Vec<f64>)> {
    let gv: Vec<Vec3> = v.iter().zip(g).map(|(x, w)| x * *w).collect();
    let rhs: Vec<f64> = grid.div_tangential_raw(&gv).iter().map(|d| -d).collect();
    let (phi, _) = Elliptic::new(grid, g.to_vec(), None).solve(&rhs)?;
    let gp = grid.grad_raw(&phi);
    Ok(((0..grid.len()).map(|i| v[i] - gp[i]).collect(), phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::FieldSampler;

    fn unit(grid: &SurfaceGrid) -> WeightField {
        WeightField::from_field(grid.scalar(vec![1.0; grid.len()]).unwrap()).unwrap()
    }

    fn bumpy(grid: &SurfaceGrid) -> WeightField {
        WeightField::new(grid.scalar_from_fn(|y| 1.0 + 0.3 * (1.5 * y.z * y.z / y.norm_squared() - 0.5)), 0.5).unwrap()
    }

    #[test]
    fn eigenfunction_poisson() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let y = g.scalar_from_fn(|p| p.z * (p.x * p.x - p.y * p.y));
        let eta = g.scalar(y.values().iter().map(|v| 12.0 * v).collect()).unwrap();
        let (q, _) = poisson_solve(&g, &eta, &unit(&g)).unwrap();
        for (a, b) in q.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let zero = g.scalar(vec![0.0; g.len()]).unwrap();
        assert_eq!(poisson_solve(&g, &zero, &unit(&g)).unwrap().0.max_abs(), 0.0);
    }

    #[test]
    fn incompatible_source_is_rejected() {
        let g = SurfaceGrid::sphere(1.0, 8).unwrap();
        let one = g.scalar(vec![1.0; g.len()]).unwrap();
        assert!(matches!(poisson_solve(&g, &one, &unit(&g)), Err(Error::Precondition(_))));
    }

    #[test]
    fn manufactured_weighted_poisson_on_torus() {
        let g = SurfaceGrid::torus(2.0, 1.0, 64, 64).unwrap();
        let t = g.torus_data().unwrap();
        let w = g.scalar((0..g.len()).map(|i| 2.0 + t.grid.theta(i / 64).cos()).collect()).unwrap();
        let w = WeightField::new(w, 1.0).unwrap();
        let qs = (0..g.len()).map(|i| {
            let (th, ph) = (t.grid.theta(i / 64), t.grid.phi(i % 64));
            (th + 2.0 * ph).sin() + 0.5 * (2.0 * th).cos()
        });
        let mut qs: Vec<f64> = qs.collect();
        let m = g.mean(&qs);
        qs.iter_mut().for_each(|x| *x -= m);
        let flux: Vec<Vec3> = g.grad_raw(&qs).iter().zip(w.values()).map(|(v, a)| v * *a).collect();
        let eta = g.scalar(g.div_tangential_raw(&flux).iter().map(|d| -d).collect()).unwrap();
        let (q, stats) = poisson_solve(&g, &eta, &w).unwrap();
        assert!(stats.iterations < CG_MAX_ITER);
        let err = q.values().iter().zip(&qs).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn weighted_projection_properties() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let w = bumpy(&g);
        let v = FieldSampler::new(&g, 11, 8).tangent();
        let d = project_weighted(&g, &v, &w).unwrap();
        let vn = g.l2_vector(v.values()).powi(2);
        assert!(d.diagnostics.orthogonality_defect < 1e-9 * vn);
        assert!(d.diagnostics.divergence_defect < 1e-9);
        assert!(g.l2_vector(d.solenoidal.values()) <= g.l2_vector(v.values()));
        let again = project_weighted(&g, &g.tangent(d.solenoidal.values().to_vec()).unwrap(), &w).unwrap();
        let idem = again.solenoidal.values().iter().zip(d.solenoidal.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).norm()));
        assert!(idem < 1e-10);
        let (o, dv) = weighted_decomposition_defects(&g, &d, &w);
        assert_eq!((o, dv), (d.diagnostics.orthogonality_defect, d.diagnostics.divergence_defect));
        assert!(d.to_json().contains("orthogonality_defect"));
    }

    #[test]
    fn killing_plus_gradient_splits() {
        let g = SurfaceGrid::sphere(1.0, 16).unwrap();
        let y20 = |p: &Vec3| 1.5 * p.z * p.z - 0.5;
        let grad = g.grad_raw(g.scalar_from_fn(y20).values());
        let kill: Vec<Vec3> = g.nodes.iter().map(|p| Vec3::new(0.2, -0.4, 1.0).cross(p)).collect();
        let v = g.tangent((0..g.len()).map(|i| kill[i] + grad[i]).collect()).unwrap();
        let d = project_weighted(&g, &v, &unit(&g)).unwrap();
        for i in 0..g.len() {
            assert!((d.solenoidal.values()[i] - kill[i]).norm() < 1e-10);
            assert!((d.potential.values()[i] - y20(&g.nodes[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn general_projection_recovers_potential_exactly() {
        for g in [SurfaceGrid::sphere(1.0, 16).unwrap(), SurfaceGrid::torus(2.0, 1.0, 32, 32).unwrap()] {
            let p: Vec<f64> = g.nodes.iter().map(|y| 0.7 + y.x * y.z + 0.3 * y.y).collect();
            let p = g.project_scalar_space(&p);
            let gp = g.grad_raw(&p);
            let v: Vec<Vec3> = (0..g.len()).map(|i| gp[i] + g.normals[i] * (p[i] * g.mean_curvature[i])).collect();
            let d = project_general(&g, &g.ambient(v).unwrap()).unwrap();
            let err = d.potential.values().iter().zip(&p).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(err < 1e-9, "{err}");
            assert!(d.solenoidal.max_norm() < 1e-8);
        }
    }

    #[test]
    fn general_projection_of_tangent_field_leaves_the_surface() {
        let g = SurfaceGrid::sphere(1.0, 12).unwrap();
        let v = g.ambient(g.grad_raw(g.scalar_from_fn(|y| y.z).values())).unwrap();
        let d = project_general(&g, &v).unwrap();
        let normal = d.solenoidal.values().iter().zip(&g.normals).fold(0.0f64, |a, (x, n)| a.max(x.dot(n).abs()));
        assert!(normal > 1e-3);
        let k = g.ambient(g.nodes.iter().map(|y| Vec3::x().cross(y)).collect()).unwrap();
        let d = project_general(&g, &k).unwrap();
        assert!(d.potential.max_abs() < 1e-12);
    }

    #[test]
    fn pressure_recovery() {
        let g = SurfaceGrid::sphere(1.0, 12).unwrap();
        let w = bumpy(&g);
        let f: Vec<Vec3> = g.grad_raw(g.scalar_from_fn(|y| y.z).values()).iter().zip(w.values()).map(|(v, a)| v * *a).collect();
        let q = recover_pressure(&g, &g.tangent(f).unwrap(), &w, 1e-8).unwrap();
        for (a, y) in q.values().iter().zip(&g.nodes) {
            assert!((a - y.z).abs() < 1e-10);
        }
        let zero = g.tangent(vec![Vec3::zeros(); g.len()]).unwrap();
        assert_eq!(recover_pressure(&g, &zero, &w, 1e-8).unwrap().max_abs(), 0.0);
        let k = g.tangent_from_fn(|y| Vec3::z().cross(y));
        assert!(matches!(recover_pressure(&g, &k, &w, 1e-8), Err(Error::Consistency { .. })));
    }
}
