//! Curved thin domains `{y + r n(y) : eps g0(y) < r < eps g1(y)}` over a
//! surface grid: Jacobian, averaging, impermeable extension, boundary normals
//! and the epsilon-sweep rate experiments.
//!
//! Bulk fields live on a tensor grid (surface node `i`, radial Gauss-Legendre
//! node `j`) stored node-major at `i * nr + j`. They are closed-form radial
//! polynomials `u(y + r n) = sum_k r^k U_k(y)`, so their 3D gradients follow
//! from the normal-coordinate chain rule
//! `grad u = (I - rW)^{-1} sum_k r^k grad_G U_k + n (x) d_r u`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{AmbientField, Mat3, ScalarField, TangentField, Vec3};
use crate::geometry::{Backend, SurfaceGrid};
use crate::par;
use crate::random::FieldSampler;
use crate::sphere::gauss_legendre;
use crate::surfcalc::OperatorReport;

pub const DEFAULT_EPSILONS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_RADIAL_NODES: usize = 16;

#[derive(Debug, Clone)]
pub struct ThinDomainSpec<'a> {
    grid: &'a SurfaceGrid,
    g0: Vec<f64>,
    g1: Vec<f64>,
    eps: f64,
    nr: usize,
    xi: Vec<f64>,
    omega: Vec<f64>,
}

impl<'a> ThinDomainSpec<'a> {
    pub fn new(grid: &'a SurfaceGrid, g0: &ScalarField, g1: &ScalarField, eps: f64, nr: usize) -> Result<Self> {
        g0.ensure_on(grid.id())?;
        g1.ensure_on(grid.id())?;
        let mut errs = Vec::new();
        if !(eps > 0.0 && eps <= 1.0) {
            errs.push(format!("thickness parameter must lie in (0, 1], got {eps}"));
        }
        if nr == 0 {
            errs.push("radial node count must be positive".to_string());
        }
        let gmin = g0.values().iter().zip(g1.values()).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min);
        if !(gmin > 0.0) {
            errs.push(format!("thickness g = g1 - g0 must be positive, minimum is {gmin}"));
        }
        let reach = match grid.backend() {
            Backend::Sphere(s) => s.radius,
            Backend::Torus(t) => t.minor,
        };
        let gmax = g0.values().iter().chain(g1.values()).fold(0.0f64, |m, x| m.max(x.abs()));
        if eps * gmax >= reach {
            errs.push(format!("eps * max|g_i| = {} exceeds the tubular radius {reach}", eps * gmax));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs.join("; ")));
        }
        let (xi, omega) = gauss_legendre(nr);
        Ok(Self { grid, g0: g0.values().to_vec(), g1: g1.values().to_vec(), eps, nr, xi, omega })
    }

    pub fn grid(&self) -> &SurfaceGrid {
        self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn n_points(&self) -> usize {
        self.grid.len() * self.nr
    }

    pub fn g(&self, i: usize) -> f64 {
        self.g1[i] - self.g0[i]
    }

    /// Signed distance of tensor node `(i, j)`.
    pub fn radius(&self, i: usize, j: usize) -> f64 {
        self.eps * (self.g0[i] + self.g(i) * 0.5 * (1.0 + self.xi[j]))
    }

    /// Radial quadrature weight of node `(i, j)` (without the Jacobian).
    pub fn radial_weight(&self, i: usize, j: usize) -> f64 {
        0.5 * self.eps * self.g(i) * self.omega[j]
    }

    pub fn point(&self, i: usize, j: usize) -> Vec3 {
        self.grid.nodes[i] + self.grid.normals[i] * self.radius(i, j)
    }

    pub fn jacobian_at(&self, i: usize, r: f64) -> f64 {
        (Mat3::identity() - self.grid.weingarten[i] * r).determinant()
    }

    /// `J` on every tensor node.
    pub fn jacobian(&self) -> Vec<f64> {
        (0..self.n_points()).map(|p| self.jacobian_at(p / self.nr, self.radius(p / self.nr, p % self.nr))).collect()
    }

    /// `tau^i = (I - eps g_i W)^{-1} grad_G g_i`.
    pub fn tau(&self, sheet: usize) -> Vec<Vec3> {
        let gi = if sheet == 0 { &self.g0 } else { &self.g1 };
        let grad = self.grid.grad_raw(gi);
        (0..self.grid.len())
            .map(|i| {
                let m = Mat3::identity() - self.grid.weingarten[i] * (self.eps * gi[i]);
                m.try_inverse().expect("inside tubular neighbourhood") * grad[i]
            })
            .collect()
    }

    /// Bulk integral with the change-of-variables Jacobian.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        let nr = self.nr;
        let mut s = 0.0;
        for i in 0..self.grid.len() {
            let mut acc = 0.0;
            for j in 0..nr {
                let r = self.radius(i, j);
                acc += self.radial_weight(i, j) * self.jacobian_at(i, r) * values[i * nr + j];
            }
            s += self.grid.weights[i] * acc;
        }
        s
    }

    fn average_raw<T>(&self, values: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let nr = self.nr;
        (0..self.grid.len())
            .map(|i| {
                let mut acc = values[i * nr] * (0.5 * self.omega[0]);
                for j in 1..nr {
                    acc = acc + values[i * nr + j] * (0.5 * self.omega[j]);
                }
                acc
            })
            .collect()
    }

    /// `M phi(y) = (1 / eps g) int phi(y + r n) dr`.
    pub fn average(&self, u: &BulkScalar) -> Result<ScalarField> {
        self.grid.scalar(self.average_raw(&u.value))
    }

    pub fn average_vector(&self, u: &BulkVector) -> Result<AmbientField> {
        self.grid.ambient(self.average_raw(&u.value))
    }

    /// `M_tau u = P M u`.
    pub fn average_tangential(&self, u: &BulkVector) -> Result<TangentField> {
        self.grid.tangent(self.average_raw(&u.value))
    }
}

/// Scalar bulk field with its exact 3D gradient.
#[derive(Debug, Clone)]
pub struct BulkScalar {
    pub value: Vec<f64>,
    pub grad: Vec<Vec3>,
}

/// Vector bulk field with its exact 3D gradient `(grad u)_ij = D_i u_j`.
#[derive(Debug, Clone)]
pub struct BulkVector {
    pub value: Vec<Vec3>,
    pub grad: Vec<Mat3>,
}

impl BulkScalar {
    /// `phi(y + r n) = sum_k r^k c_k(y)`.
    pub fn radial_polynomial(spec: &ThinDomainSpec, coeffs: &[Vec<f64>]) -> Self {
        let grid = spec.grid;
        let grads: Vec<Vec<Vec3>> = coeffs.iter().map(|c| grid.grad_raw(c)).collect();
        let nr = spec.nr;
        let pts: Vec<(f64, Vec3)> = par::map_range(spec.n_points(), |p| {
            let (i, j) = (p / nr, p % nr);
            let r = spec.radius(i, j);
            let (mut val, mut dr, mut tang) = (0.0, 0.0, Vec3::zeros());
            let mut rk = 1.0;
            for (k, c) in coeffs.iter().enumerate() {
                val += rk * c[i];
                tang += grads[k][i] * rk;
                if k + 1 < coeffs.len() {
                    dr += (k + 1) as f64 * rk * coeffs[k + 1][i];
                }
                rk *= r;
            }
            let inv = (Mat3::identity() - grid.weingarten[i] * r).try_inverse().expect("inside tubular neighbourhood");
            (val, inv * tang + grid.normals[i] * dr)
        });
        let (value, grad) = pts.into_iter().unzip();
        Self { value, grad }
    }

    pub fn normal_derivative(&self, spec: &ThinDomainSpec) -> Vec<f64> {
        (0..self.value.len()).map(|p| spec.grid.normals[p / spec.nr].dot(&self.grad[p])).collect()
    }
}

impl BulkVector {
    /// `u(y + r n) = sum_k r^k U_k(y)` with ambient surface coefficients.
    pub fn radial_polynomial(spec: &ThinDomainSpec, coeffs: &[Vec<Vec3>]) -> Self {
        let grid = spec.grid;
        let grads: Vec<Vec<Mat3>> = coeffs.iter().map(|c| grid.grad_matrix_raw(c)).collect();
        let nr = spec.nr;
        let pts: Vec<(Vec3, Mat3)> = par::map_range(spec.n_points(), |p| {
            let (i, j) = (p / nr, p % nr);
            let r = spec.radius(i, j);
            let (mut val, mut dr, mut tang) = (Vec3::zeros(), Vec3::zeros(), Mat3::zeros());
            let mut rk = 1.0;
            for (k, c) in coeffs.iter().enumerate() {
                val += c[i] * rk;
                tang += grads[k][i] * rk;
                if k + 1 < coeffs.len() {
                    dr += coeffs[k + 1][i] * ((k + 1) as f64 * rk);
                }
                rk *= r;
            }
            let inv = (Mat3::identity() - grid.weingarten[i] * r).try_inverse().expect("inside tubular neighbourhood");
            (val, inv * tang + grid.normals[i] * dr.transpose())
        });
        let (value, grad) = pts.into_iter().unzip();
        Self { value, grad }
    }

    pub fn component(&self, c: usize) -> BulkScalar {
        BulkScalar {
            value: self.value.iter().map(|v| v[c]).collect(),
            grad: self.grad.iter().map(|m| m.column(c).into_owned()).collect(),
        }
    }

    pub fn divergence(&self) -> Vec<f64> {
        self.grad.iter().map(|m| m.trace()).collect()
    }
}

/// Constant extension `eta(pi(x))` of a surface scalar.
pub fn constant_extension(spec: &ThinDomainSpec, eta: &[f64]) -> BulkScalar {
    BulkScalar::radial_polynomial(spec, &[eta.to_vec()])
}

/// Max-norm residual of `grad_G M phi = M(B grad phi) + M((d_n phi) psi_eps)`
/// with `B = (I - dW) P` and
/// `psi_eps = {(d - eps g0) grad g1 + (eps g1 - d) grad g0} / g`.
pub fn average_gradient_identity_residual(spec: &ThinDomainSpec, u: &BulkScalar) -> Result<OperatorReport> {
    let grid = spec.grid;
    let nr = spec.nr;
    let lhs = grid.grad_raw(&spec.average_raw(&u.value));
    let dg0 = grid.grad_raw(&spec.g0);
    let dg1 = grid.grad_raw(&spec.g1);
    let dn = u.normal_derivative(spec);
    let integrand: Vec<Vec3> = (0..spec.n_points())
        .map(|p| {
            let (i, j) = (p / nr, p % nr);
            let d = spec.radius(i, j);
            let b = (Mat3::identity() - grid.weingarten[i] * d) * grid.proj[i];
            let psi = (dg1[i] * (d - spec.eps * spec.g0[i]) + dg0[i] * (spec.eps * spec.g1[i] - d)) / spec.g(i);
            b * u.grad[p] + psi * dn[p]
        })
        .collect();
    let rhs = spec.average_raw(&integrand);
    let res: Vec<Vec3> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(OperatorReport {
        identity: "ave_der".into(),
        backend: grid.backend_name().into(),
        resolution: grid.resolution(),
        residual_max: res.iter().fold(0.0f64, |m, x| m.max(x.norm())),
        residual_l2: grid.l2_vector(&res),
        seed: 0,
    })
}

/// `Psi_eps` as a radial polynomial `a + d b`.
fn psi_coefficients(spec: &ThinDomainSpec) -> (Vec<Vec3>, Vec<Vec3>) {
    let t0 = spec.tau(0);
    let t1 = spec.tau(1);
    let e = spec.eps;
    (0..spec.grid.len())
        .map(|i| {
            let g = spec.g(i);
            ((t0[i] * (e * spec.g1[i]) - t1[i] * (e * spec.g0[i])) / g, (t1[i] - t0[i]) / g)
        })
        .unzip()
}

/// `Psi_eps` on the tensor grid.
pub fn psi_eps(spec: &ThinDomainSpec) -> Vec<Vec3> {
    let (a, b) = psi_coefficients(spec);
    (0..spec.n_points()).map(|p| a[p / spec.nr] + b[p / spec.nr] * spec.radius(p / spec.nr, p % spec.nr)).collect()
}

fn extension_coefficients(spec: &ThinDomainSpec, v: &[Vec3]) -> Vec<Vec<Vec3>> {
    let (a, b) = psi_coefficients(spec);
    let n = &spec.grid.normals;
    let u0 = (0..v.len()).map(|i| v[i] + n[i] * v[i].dot(&a[i])).collect();
    let u1 = (0..v.len()).map(|i| n[i] * v[i].dot(&b[i])).collect();
    vec![u0, u1]
}

/// `E_eps v = v + (v . Psi_eps) n` with its exact gradient.
pub fn impermeable_extension(spec: &ThinDomainSpec, v: &TangentField) -> Result<BulkVector> {
    v.as_ambient().ensure_on(spec.grid.id())?;
    Ok(BulkVector::radial_polynomial(spec, &extension_coefficients(spec, v.values())))
}

/// Unit outward normal of boundary sheet `i` (0 inner, 1 outer), as a field
/// over the surface nodes.
pub fn boundary_normals(spec: &ThinDomainSpec, sheet: usize) -> Result<AmbientField> {
    if sheet > 1 {
        return Err(Error::Precondition(format!("boundary sheet must be 0 or 1, got {sheet}")));
    }
    let tau = spec.tau(sheet);
    let sign = if sheet == 1 { 1.0 } else { -1.0 };
    let e = spec.eps;
    let vals = (0..spec.grid.len())
        .map(|i| (spec.grid.normals[i] - tau[i] * e) * (sign / (1.0 + e * e * tau[i].norm_squared()).sqrt()))
        .collect();
    spec.grid.ambient(vals)
}

/// `max |E_eps v . n_eps|` over both sheets, evaluating `Psi_eps` at the
/// sheet distances `d = eps g_i`.
pub fn impermeability_defect(spec: &ThinDomainSpec, v: &TangentField) -> Result<f64> {
    let c = extension_coefficients(spec, v.values());
    let mut worst = 0.0f64;
    for sheet in 0..2 {
        let nb = boundary_normals(spec, sheet)?;
        let gi = if sheet == 0 { &spec.g0 } else { &spec.g1 };
        for i in 0..spec.grid.len() {
            let u = c[0][i] + c[1][i] * (spec.eps * gi[i]);
            worst = worst.max(u.dot(&nb.values()[i]).abs());
        }
    }
    Ok(worst)
}

/// Bulk `L^2` norm of `div(E_eps v) - (1/g) div_G(g v)` (constant extension
/// of the surface term). Carries the `eps^{1/2}` volume factor.
pub fn extension_divergence_residual(spec: &ThinDomainSpec, v: &TangentField) -> Result<f64> {
    let grid = spec.grid;
    let ext = impermeable_extension(spec, v)?;
    let gv: Vec<Vec3> = v.values().iter().enumerate().map(|(i, x)| x * spec.g(i)).collect();
    let surf = grid.div_tangential_raw(&gv);
    let div = ext.divergence();
    let sq: Vec<f64> = (0..spec.n_points())
        .map(|p| {
            let i = p / spec.nr;
            (div[p] - surf[i] / spec.g(i)).powi(2)
        })
        .collect();
    Ok(spec.integrate(&sq).sqrt())
}

/// `||u||_{H^1(Omega_eps)}` from values and exact gradients.
pub fn bulk_h1_norm(spec: &ThinDomainSpec, u: &BulkVector) -> f64 {
    let sq: Vec<f64> = (0..spec.n_points()).map(|p| u.value[p].norm_squared() + u.grad[p].norm_squared()).collect();
    spec.integrate(&sq).sqrt()
}

/// `||M u . n||_{L^2(Gamma)}`.
pub fn normal_average_norm(spec: &ThinDomainSpec, u: &BulkVector) -> f64 {
    let m = spec.average_raw(&u.value);
    let s: Vec<f64> = m.iter().zip(&spec.grid.normals).map(|(x, n)| x.dot(n)).collect();
    spec.grid.l2_scalar(&s)
}

/// Second-order finite-difference 3D Laplacian of the constant extension
/// of `eta`, sampled at the surface nodes (sphere backend only).
pub fn constant_extension_laplacian(grid: &SurfaceGrid, eta: &[f64], h: f64) -> Result<Vec<f64>> {
    let s = grid
        .sphere_data()
        .ok_or_else(|| Error::Config("the constant-extension check needs the sphere backend".into()))?;
    let c = s.transform.analysis(eta);
    let ext = |x: Vec3| {
        let r = x.norm();
        s.transform.evaluate(&c, (x.z / r).clamp(-1.0, 1.0).acos(), x.y.atan2(x.x))
    };
    Ok(par::map_slice(&grid.nodes, |y| {
        let mut acc = -6.0 * ext(*y);
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            acc += ext(y + e) + ext(y - e);
        }
        acc / (h * h)
    }))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub r2: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> SlopeFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    SlopeFit { slope, r2 }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    pub quantity: String,
    pub norm: f64,
    pub normalized_ratio: f64,
    pub fitted_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThinfilmSummary {
    pub ave_der_max: f64,
    pub comp_n: SlopeFit,
    pub comp_n_constants: Vec<f64>,
    /// One fit per normal-average family.
    pub ave_n: Vec<SlopeFit>,
    pub ave_n_ratio_max: f64,
    pub ext_div: SlopeFit,
    pub impermeability_max: f64,
    pub psi_constant: f64,
    pub jacobian_constant: f64,
    pub jacobian_range: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct ThinfilmSweep {
    pub rows: Vec<RateRow>,
    pub summary: ThinfilmSummary,
}

/// Normalisations used in the rate table:
/// - `ave_der`: max residual over `max |grad_G M phi|`, not expected to decay.
/// - `comp_n`: `max |n^1_eps - (n - eps grad g1)|` over `eps^2`, slope 2.
/// - `ave_n_*`: `||M u . n||` over `eps^{1/2} ||u||_{H^1(Omega_eps)}`, bounded.
///   The slope is fitted to `||M u . n|| / (eps^{-1/2} ||u||_{H^1})`, which
///   removes the volume factor of the bulk norm; expected slope 1.
/// - `ext_div`: raw bulk `L^2` residual over `eps^{3/2} ||v||_{H^1(Gamma)}`,
///   expected slope 3/2.
/// - `psi`: `max |Psi_eps| / eps`; `jacobian`: `max |J - 1| / eps`.
pub fn thinfilm_sweep(
    grid: &SurfaceGrid,
    g0: &ScalarField,
    g1: &ScalarField,
    epsilons: &[f64],
    nr: usize,
    seed: u64,
) -> Result<ThinfilmSweep> {
    if epsilons.len() < 2 {
        return Err(Error::Config("the epsilon sweep needs at least two values".into()));
    }
    let mut sampler = FieldSampler::new(grid, seed, 4);
    let eta: Vec<Vec<f64>> = (0..3).map(|_| sampler.scalar().into_values()).collect();
    let s = sampler.scalar().into_values();
    let psi = sampler.scalar().into_values();
    let v_any = sampler.tangent();
    let gdiff: Vec<f64> = g0.values().iter().zip(g1.values()).map(|(a, b)| b - a).collect();
    let rot: Vec<Vec3> = grid.grad_raw(&psi).iter().zip(&grid.normals).zip(&gdiff).map(|((d, n), g)| n.cross(d) / *g).collect();
    let v_sol = grid.tangent(rot)?;
    let v_h1 = {
        let gm = grid.grad_matrix_raw(v_sol.values());
        (grid.l2_vector(v_sol.values()).powi(2) + grid.l2_matrix(&gm).powi(2)).sqrt()
    };

    let mut rows = Vec::new();
    let mut ave_der_max = 0.0f64;
    let mut comp = Vec::new();
    let mut ave_n: [Vec<(f64, f64, f64)>; 2] = [Vec::new(), Vec::new()];
    let mut ext = Vec::new();
    let mut impermeability_max = 0.0f64;
    let mut psi_constant = 0.0f64;
    let mut jacobian_constant = 0.0f64;
    let mut jacobian_range = (f64::INFINITY, 0.0f64);
    let dg1 = grid.grad_raw(g1.values());

    for &eps in epsilons {
        let spec = ThinDomainSpec::new(grid, g0, g1, eps, nr)?;
        let row = |q: &str, norm: f64, ratio: f64| RateRow {
            epsilon: eps,
            quantity: q.to_string(),
            norm,
            normalized_ratio: ratio,
            fitted_slope: f64::NAN,
        };

        let families = [
            BulkScalar::radial_polynomial(&spec, &[eta[0].clone()]),
            BulkScalar::radial_polynomial(&spec, &[eta[0].clone(), eta[1].clone(), eta[2].clone()]),
            BulkScalar::radial_polynomial(&spec, &[vec![0.0; grid.len()], vec![1.0; grid.len()], vec![0.0; grid.len()], vec![1.0; grid.len()]]),
        ];
        let extv = impermeable_extension(&spec, &v_any)?;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for u in families.iter().cloned().chain((0..3).map(|c| extv.component(c))) {
            let rep = average_gradient_identity_residual(&spec, &u)?;
            worst = worst.max(rep.residual_max);
            let g = grid.grad_raw(&spec.average_raw(&u.value));
            scale = scale.max(g.iter().fold(0.0f64, |m, x| m.max(x.norm())));
        }
        ave_der_max = ave_der_max.max(worst);
        rows.push(row("ave_der", worst, worst / scale.max(f64::MIN_POSITIVE)));

        let nb = boundary_normals(&spec, 1)?;
        let err = (0..grid.len())
            .map(|i| (nb.values()[i] - (grid.normals[i] - dg1[i] * eps)).norm())
            .fold(0.0f64, f64::max);
        comp.push(err);
        rows.push(row("comp_n", err, err / (eps * eps)));

        let ext_sol = impermeable_extension(&spec, &v_sol)?;
        let mut pert = extension_coefficients(&spec, v_sol.values());
        // u = E v + (d - eps g0) s n: impermeable on the inner sheet only
        for i in 0..grid.len() {
            let shift = grid.normals[i] * s[i];
            pert[0][i] -= shift * (eps * spec.g0[i]);
            pert[1][i] += shift;
        }
        let perturbed = BulkVector::radial_polynomial(&spec, &pert);
        for (f, (name, u)) in [("ave_n_extension", &ext_sol), ("ave_n_perturbed", &perturbed)].into_iter().enumerate() {
            let norm = normal_average_norm(&spec, u);
            let h1 = bulk_h1_norm(&spec, u);
            ave_n[f].push((eps, norm, h1));
            rows.push(row(name, norm, norm / (eps.sqrt() * h1)));
        }

        let r = extension_divergence_residual(&spec, &v_sol)?;
        ext.push(r);
        rows.push(row("ext_div", r, r / (eps.powf(1.5) * v_h1)));

        impermeability_max = impermeability_max.max(impermeability_defect(&spec, &v_any)? / v_any.max_norm());
        let pmax = psi_eps(&spec).iter().fold(0.0f64, |m, x| m.max(x.norm()));
        psi_constant = psi_constant.max(pmax / eps);
        rows.push(row("psi", pmax, pmax / eps));
        let jac = spec.jacobian();
        let jdev = jac.iter().fold(0.0f64, |m, j| m.max((j - 1.0).abs()));
        jacobian_constant = jacobian_constant.max(jdev / eps);
        for j in &jac {
            jacobian_range.0 = jacobian_range.0.min(*j);
            jacobian_range.1 = jacobian_range.1.max(*j);
        }
        rows.push(row("jacobian", jdev, jdev / eps));
    }

    let comp_n = fit_log_slope(epsilons, &comp);
    let ave_fits: Vec<SlopeFit> = ave_n
        .iter()
        .map(|fam| {
            let y: Vec<f64> = fam.iter().map(|(e, n, h)| n * e.sqrt() / h).collect();
            fit_log_slope(epsilons, &y)
        })
        .collect();
    let ext_div = fit_log_slope(epsilons, &ext);
    let ave_n_ratio_max = rows.iter().filter(|r| r.quantity.starts_with("ave_n")).fold(0.0f64, |m, r| m.max(r.normalized_ratio));
    let slope_of = |q: &str| -> f64 {
        match q {
            "comp_n" => comp_n.slope,
            "ave_n_extension" => ave_fits[0].slope,
            "ave_n_perturbed" => ave_fits[1].slope,
            "ext_div" => ext_div.slope,
            _ => {
                let y: Vec<f64> = rows.iter().filter(|r| r.quantity == q).map(|r| r.norm.max(f64::MIN_POSITIVE)).collect();
                fit_log_slope(epsilons, &y).slope
            }
        }
    };
    let slopes: Vec<f64> = rows.iter().map(|r| slope_of(&r.quantity)).collect();
    for (r, s) in rows.iter_mut().zip(slopes) {
        r.fitted_slope = s;
    }
    let comp_n_constants = comp.iter().zip(epsilons).map(|(c, e)| c / (e * e)).collect();
    Ok(ThinfilmSweep {
        rows,
        summary: ThinfilmSummary {
            ave_der_max,
            comp_n,
            comp_n_constants,
            ave_n: ave_fits,
            ave_n_ratio_max,
            ext_div,
            impermeability_max,
            psi_constant,
            jacobian_constant,
            jacobian_range,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sheets(grid: &SurfaceGrid) -> (ScalarField, ScalarField) {
        let g0 = grid.scalar_from_fn(|y| -0.2 + 0.1 * y.x * y.y);
        let g1 = grid.scalar_from_fn(|y| 1.0 + 0.15 * (3.0 * y.z * y.z - 1.0));
        (g0, g1)
    }

    #[test]
    fn sphere_jacobian_and_volume() {
        let grid = SurfaceGrid::sphere(1.0, 12).unwrap();
        let g0 = grid.scalar(vec![0.0; grid.len()]).unwrap();
        let g1 = grid.scalar(vec![1.0; grid.len()]).unwrap();
        let spec = ThinDomainSpec::new(&grid, &g0, &g1, 0.1, DEFAULT_RADIAL_NODES).unwrap();
        for p in 0..spec.n_points() {
            let r = spec.radius(p / spec.nr(), p % spec.nr());
            assert!((spec.jacobian()[p] - (1.0 + r).powi(2)).abs() < 1e-13);
        }
        assert_eq!(spec.jacobian_at(0, 0.0), 1.0);
        let vol = spec.integrate(&vec![1.0; spec.n_points()]);
        assert!((vol - 4.0 * PI / 3.0 * (1.1f64.powi(3) - 1.0)).abs() < 1e-10);
        // M r = eps (g0 + g1) / 2
        let u = BulkScalar::radial_polynomial(&spec, &[vec![0.0; grid.len()], vec![1.0; grid.len()]]);
        let m = spec.average(&u).unwrap();
        assert!(m.values().iter().all(|x| (x - 0.05).abs() < 1e-15));
    }

    #[test]
    fn polynomial_change_of_variables() {
        // int_{Omega} r^2 dx over a spherical shell: 4 pi int r^2 (1+r)^2 dr
        let grid = SurfaceGrid::sphere(1.0, 10).unwrap();
        let g0 = grid.scalar(vec![-0.5; grid.len()]).unwrap();
        let g1 = grid.scalar(vec![1.0; grid.len()]).unwrap();
        let spec = ThinDomainSpec::new(&grid, &g0, &g1, 0.2, DEFAULT_RADIAL_NODES).unwrap();
        let u = BulkScalar::radial_polynomial(&spec, &[vec![0.0; grid.len()], vec![0.0; grid.len()], vec![1.0; grid.len()]]);
        let prim = |r: f64| r.powi(3) / 3.0 + r.powi(4) / 2.0 + r.powi(5) / 5.0;
        let exact = 4.0 * PI * (prim(0.2) - prim(-0.1));
        assert!((spec.integrate(&u.value) - exact).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_domains() {
        let grid = SurfaceGrid::sphere(1.0, 8).unwrap();
        let g0 = grid.scalar(vec![0.0; grid.len()]).unwrap();
        let g1 = grid.scalar(vec![-1.0; grid.len()]).unwrap();
        assert!(ThinDomainSpec::new(&grid, &g0, &g1, 0.1, 8).is_err());
        let g1 = grid.scalar(vec![20.0; grid.len()]).unwrap();
        assert!(ThinDomainSpec::new(&grid, &g0, &g1, 0.1, 8).is_err());
        assert!(ThinDomainSpec::new(&grid, &g0, &g0, 0.1, 8).is_err());
    }

    #[test]
    fn average_derivative_identity_is_exact() {
        let grid = SurfaceGrid::sphere(1.0, 24).unwrap();
        let (g0, g1) = sheets(&grid);
        let eta = FieldSampler::new(&grid, 7, 4).scalar().into_values();
        for eps in DEFAULT_EPSILONS {
            let spec = ThinDomainSpec::new(&grid, &g0, &g1, eps, DEFAULT_RADIAL_NODES).unwrap();
            let c = constant_extension(&spec, &eta);
            let m = spec.average(&c).unwrap();
            assert!(m.values().iter().zip(&eta).all(|(a, b)| (a - b).abs() < 1e-13));
            for u in [c, BulkScalar::radial_polynomial(&spec, &[eta.clone(), eta.clone(), vec![2.0; grid.len()]])] {
                let r = average_gradient_identity_residual(&spec, &u).unwrap();
                assert!(r.residual_max < 1e-9, "{eps} {}", r.residual_max);
            }
        }
    }

    #[test]
    fn boundary_normals_and_impermeability() {
        let grid = SurfaceGrid::sphere(1.0, 16).unwrap();
        let flat0 = grid.scalar(vec![0.0; grid.len()]).unwrap();
        let flat1 = grid.scalar(vec![1.0; grid.len()]).unwrap();
        let spec = ThinDomainSpec::new(&grid, &flat0, &flat1, 0.1, 8).unwrap();
        let n1 = boundary_normals(&spec, 1).unwrap();
        let n0 = boundary_normals(&spec, 0).unwrap();
        for i in 0..grid.len() {
            assert!((n1.values()[i] - grid.normals[i]).norm() < 1e-13);
            assert!((n0.values()[i] + grid.normals[i]).norm() < 1e-13);
        }
        let v = FieldSampler::new(&grid, 1, 6).tangent();
        // flat sheets: E v = v on the outer sheet
        let e = impermeable_extension(&spec, &v).unwrap();
        for i in 0..grid.len() {
            let p = i * spec.nr();
            assert!((e.value[p] - v.values()[i]).norm() < 1e-12);
        }
        let (g0, g1) = sheets(&grid);
        let spec = ThinDomainSpec::new(&grid, &g0, &g1, 0.1, 8).unwrap();
        for s in 0..2 {
            let nb = boundary_normals(&spec, s).unwrap();
            assert!(nb.values().iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        }
        assert!(impermeability_defect(&spec, &v).unwrap() < 1e-10 * v.max_norm());
        let zero = grid.tangent(vec![Vec3::zeros(); grid.len()]).unwrap();
        assert_eq!(impermeability_defect(&spec, &zero).unwrap(), 0.0);
        assert_eq!(extension_divergence_residual(&spec, &zero).unwrap(), 0.0);
    }

    #[test]
    fn killing_extension_is_nearly_solenoidal() {
        let grid = SurfaceGrid::sphere(1.0, 16).unwrap();
        let g0 = grid.scalar(vec![0.0; grid.len()]).unwrap();
        let g1 = grid.scalar(vec![1.0; grid.len()]).unwrap();
        let v = grid.tangent_from_fn(|y| Vec3::z().cross(y));
        for eps in DEFAULT_EPSILONS {
            let spec = ThinDomainSpec::new(&grid, &g0, &g1, eps, 8).unwrap();
            assert!(extension_divergence_residual(&spec, &v).unwrap() < 1e-12);
        }
    }

    #[test]
    fn constant_extension_laplacian_is_second_order() {
        let grid = SurfaceGrid::sphere(1.0, 12).unwrap();
        let eta = FieldSampler::new(&grid, 3, 4).scalar().into_values();
        let lap = grid.laplacian_raw(&eta);
        let err = |h: f64| {
            let fd = constant_extension_laplacian(&grid, &eta, h).unwrap();
            fd.iter().zip(&lap).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let (a, b) = (err(2e-2), err(1e-2));
        assert!(a / b > 3.5 && b < 1e-2, "{a} {b}");
    }

    #[test]
    fn sweep_rates() {
        let grid = SurfaceGrid::sphere(1.0, 24).unwrap();
        let (g0, g1) = sheets(&grid);
        let sw = thinfilm_sweep(&grid, &g0, &g1, &DEFAULT_EPSILONS, DEFAULT_RADIAL_NODES, 0x5EED).unwrap();
        let s = &sw.summary;
        assert!(s.ave_der_max < 1e-8, "{}", s.ave_der_max);
        assert!(s.comp_n.slope >= 1.9 && s.comp_n.r2 >= 0.98, "{:?}", s.comp_n);
        for f in &s.ave_n {
            assert!((f.slope - 1.0).abs() <= 0.1 && f.r2 >= 0.98, "{f:?}");
        }
        assert!(s.ave_n_ratio_max <= 10.0);
        assert!(s.ext_div.slope >= 1.4, "{:?}", s.ext_div);
        assert!(s.impermeability_max < 1e-10);
    }
}
