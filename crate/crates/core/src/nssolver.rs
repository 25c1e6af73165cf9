//! Weighted surface Navier-Stokes limit equations on the sphere:
//!
//! ```text
//! g (dv/dt + D_v v) - 2 nu { P div(g D(v)) - (1/g)(v . grad g) grad g }
//!     + (gamma0 + gamma1) v + g grad q = g f,      div(g v) = 0
//! ```
//!
//! The IMEX scheme works with the equation divided by `g`. Crank-Nicolson
//! treats `nu (Delta_B + Ric)` and a constant part of the damping, which are
//! diagonal in the toroidal/poloidal harmonic representation; the advection
//! term and the variable-coefficient remainders use second order
//! Adams-Bashforth. Each step ends with a `g`-orthogonal Leray projection.

use std::fmt;
use std::sync::Arc;

use log::{debug, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{Mat3, ScalarField, TangentField, Vec3, WeightField};
use crate::geometry::SurfaceGrid;
use crate::helmholtz::{leray_weighted, pressure_defect, recover_pressure_raw};
use crate::sphere::SphCoeffs;
use crate::surfcalc::{strain_raw, viscous_raw};

/// Time-dependent force sampled on the grid.
pub type ForceFn = Arc<dyn Fn(f64) -> Vec<Vec3> + Send + Sync>;

#[derive(Clone)]
pub enum Force {
    Zero,
    Steady(Vec<Vec3>),
    Timed(ForceFn),
}

impl fmt::Debug for Force {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Force::Zero => write!(f, "Zero"),
            Force::Steady(_) => write!(f, "Steady(..)"),
            Force::Timed(_) => write!(f, "Timed(..)"),
        }
    }
}

impl Force {
    pub fn sample(&self, n: usize, t: f64) -> Vec<Vec3> {
        match self {
            Force::Zero => vec![Vec3::zeros(); n],
            Force::Steady(f) => f.clone(),
            Force::Timed(f) => f(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Force::Zero)
    }
}

#[derive(Debug, Clone)]
pub struct NsConfig {
    pub nu: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub g: WeightField,
    pub force: Force,
    pub v0: TangentField,
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    /// Disable the advection term (linear runs).
    pub nonlinear: bool,
    /// Keep a field snapshot every this many steps (0: first and last only).
    pub snapshot_every: usize,
}

impl NsConfig {
    pub fn new(g: WeightField, v0: TangentField, nu: f64, dt: f64, t_final: f64) -> Self {
        Self {
            nu,
            gamma0: 0.0,
            gamma1: 0.0,
            g,
            force: Force::Zero,
            v0,
            dt,
            t_final,
            dealias: true,
            nonlinear: true,
            snapshot_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.nu > 0.0) {
            errs.push(format!("viscosity must be positive (nu > 0), got {}", self.nu));
        }
        if !(self.gamma0 >= 0.0 && self.gamma1 >= 0.0) {
            errs.push(format!("friction coefficients must be nonnegative, got {} and {}", self.gamma0, self.gamma1));
        }
        if !(self.dt > 0.0) {
            errs.push(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0) {
            errs.push(format!("final time must be nonnegative, got {}", self.t_final));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn gamma(&self) -> f64 {
        self.gamma0 + self.gamma1
    }
}

#[derive(Debug, Clone)]
pub struct NsState {
    pub t: f64,
    pub v: TangentField,
    pub q: ScalarField,
    explicit_prev: Option<(SphCoeffs, SphCoeffs)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub energy: f64,
    /// `|| grad_G v ||^2`.
    pub enstrophy: f64,
    pub div_defect: f64,
    pub energy_defect: f64,
    pub pressure_defect: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub v: Vec<Vec3>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory has the initial snapshot")
    }

    /// Snapshot closest to time `t`.
    pub fn at(&self, t: f64) -> &Snapshot {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("trajectory has the initial snapshot")
    }
}

// ---- vector harmonics on the sphere ------------------------------------------

fn sphere_only(grid: &SurfaceGrid) -> Result<f64> {
    grid.sphere_data()
        .map(|s| s.radius)
        .ok_or_else(|| Error::Config("the Navier-Stokes solvers need the sphere backend".into()))
}

/// Coefficients `(chi, psi)` of the part of `w` that is `grad chi + n x grad psi`
/// with both potentials of degree `<= lcut`.
pub fn vector_analysis(grid: &SurfaceGrid, w: &[Vec3], lcut: usize) -> (SphCoeffs, SphCoeffs) {
    let a = grid.sphere_data().expect("sphere backend").radius;
    let a2 = a * a;
    let inv = move |l: usize| if l == 0 || l > lcut { 0.0 } else { a2 / (l * (l + 1)) as f64 };
    let mut chi = grid.sphere_weak_div_coeffs(w);
    chi.scale_by_degree(|l| -inv(l));
    let nw: Vec<Vec3> = w.iter().zip(&grid.normals).map(|(x, n)| n.cross(x)).collect();
    let mut psi = grid.sphere_weak_div_coeffs(&nw);
    psi.scale_by_degree(inv);
    (chi, psi)
}

pub fn vector_synthesis(grid: &SurfaceGrid, chi: &SphCoeffs, psi: &SphCoeffs) -> Vec<Vec3> {
    let gc = grid.sphere_grad_coeffs(chi);
    let gp = grid.sphere_grad_coeffs(psi);
    (0..grid.len()).map(|i| gc[i] + grid.normals[i].cross(&gp[i])).collect()
}

/// Highest retained degree. With dealiasing the cubic energy integrand of
/// fields of this degree is integrated exactly by the grid quadrature.
pub fn retained_degree(bandlimit: usize, dealias: bool) -> usize {
    if dealias {
        (2 * bandlimit - 3) / 3
    } else {
        bandlimit
    }
}

fn axpy(a: &mut SphCoeffs, s: f64, b: &SphCoeffs) {
    a.cos.iter_mut().zip(&b.cos).for_each(|(x, y)| *x += s * y);
    a.sin.iter_mut().zip(&b.sin).for_each(|(x, y)| *x += s * y);
}

fn lin(a: f64, x: &SphCoeffs, b: f64, y: &SphCoeffs) -> SphCoeffs {
    let mut out = x.clone();
    out.cos.iter_mut().zip(&y.cos).for_each(|(u, v)| *u = a * *u + b * v);
    out.sin.iter_mut().zip(&y.sin).for_each(|(u, v)| *u = a * *u + b * v);
    out
}

// ---- forms -------------------------------------------------------------------

/// `a_g(v1, v2) = 2 nu [(g D v1, D v2) + ((1/g)(v1 . grad g), v2 . grad g)] + (gamma0 + gamma1)(v1, v2)`.
pub fn bilinear_form_a(grid: &SurfaceGrid, nu: f64, gamma: f64, g: &WeightField, v1: &[Vec3], v2: &[Vec3]) -> f64 {
    let gv = g.values();
    let d1 = strain_raw(grid, v1);
    let d2 = if std::ptr::eq(v1, v2) { d1.clone() } else { strain_raw(grid, v2) };
    let gd1: Vec<Mat3> = d1.iter().zip(gv).map(|(m, w)| m * *w).collect();
    let mut a = grid.inner_matrix(&gd1, &d2);
    if !g.is_constant() {
        let gg = grid.grad_raw(gv);
        let s1: Vec<f64> = (0..grid.len()).map(|i| v1[i].dot(&gg[i]) / gv[i]).collect();
        let s2: Vec<f64> = (0..grid.len()).map(|i| v2[i].dot(&gg[i])).collect();
        a += grid.inner_scalar(&s1, &s2);
    }
    2.0 * nu * a + gamma * grid.inner_vector(v1, v2)
}

/// `b_g(v1, v2, v3) = -(g v1 (x) v2, grad_G v3)`.
pub fn trilinear_form_b(grid: &SurfaceGrid, g: &[f64], v1: &[Vec3], v2: &[Vec3], v3: &[Vec3]) -> f64 {
    let gm = grid.grad_matrix_raw(v3);
    -(0..grid.len()).map(|i| grid.weights[i] * g[i] * v1[i].dot(&(gm[i] * v2[i]))).sum::<f64>()
}

/// Covariant advection `D_v v = P (grad v)^T v`, filtered to the retained
/// harmonic degrees when `lcut` is given.
pub fn nonlinear_term(grid: &SurfaceGrid, v: &TangentField, lcut: Option<usize>) -> Result<TangentField> {
    v.as_ambient().ensure_on(grid.id())?;
    let raw = advection_raw(grid, v.values());
    match lcut {
        Some(l) => {
            sphere_only(grid)?;
            let (c, p) = vector_analysis(grid, &raw, l);
            grid.tangent(vector_synthesis(grid, &c, &p))
        }
        None => grid.tangent(raw),
    }
}

fn advection_raw(grid: &SurfaceGrid, v: &[Vec3]) -> Vec<Vec3> {
    let gm = grid.grad_matrix_raw(v);
    (0..grid.len()).map(|i| grid.proj[i] * (gm[i].transpose() * v[i])).collect()
}

/// Divided-form viscous operator `(2 nu / g){P div(g D v) - (1/g)(v . grad g) grad g}`.
fn viscous_divided(grid: &SurfaceGrid, nu: f64, g: &[f64], grad_g: &[Vec3], v: &[Vec3]) -> Vec<Vec3> {
    let pd = viscous_raw(grid, g, v);
    (0..grid.len())
        .map(|i| (pd[i] - grad_g[i] * (v[i].dot(&grad_g[i]) / g[i])) * (2.0 * nu / g[i]))
        .collect()
}

// ---- IMEX solver -------------------------------------------------------------

pub struct ImexSolver<'a> {
    grid: &'a SurfaceGrid,
    cfg: NsConfig,
    radius: f64,
    lcut: usize,
    g_const: bool,
    grad_g: Vec<Vec3>,
    gamma_implicit: f64,
}

impl<'a> ImexSolver<'a> {
    pub fn new(grid: &'a SurfaceGrid, cfg: NsConfig) -> Result<Self> {
        let radius = sphere_only(grid)?;
        cfg.validate()?;
        cfg.g.field().ensure_on(grid.id())?;
        cfg.v0.as_ambient().ensure_on(grid.id())?;
        let lmax = grid.sphere_data().map(|s| s.transform.lmax).unwrap_or(0);
        let lcut = retained_degree(lmax, cfg.dealias);
        let g_const = cfg.g.is_constant();
        let grad_g = grid.grad_raw(cfg.g.values());
        let inv_g: Vec<f64> = cfg.g.values().iter().map(|w| 1.0 / w).collect();
        let gamma_implicit = cfg.gamma() * grid.mean(&inv_g);
        Ok(Self { grid, cfg, radius, lcut, g_const, grad_g, gamma_implicit })
    }

    pub fn config(&self) -> &NsConfig {
        &self.cfg
    }

    pub fn retained_degree(&self) -> usize {
        self.lcut
    }

    /// Eigenvalue of the implicit operator on degree `l`.
    fn implicit_symbol(&self, l: usize) -> f64 {
        let ll = (l * (l + 1)) as f64;
        self.cfg.nu * (2.0 - ll) / (self.radius * self.radius) - self.gamma_implicit
    }

    fn filter(&self, w: &[Vec3]) -> (SphCoeffs, SphCoeffs) {
        vector_analysis(self.grid, w, self.lcut)
    }

    /// Project onto weighted-solenoidal fields; returns the projected field
    /// and the potential `phi` of the removed gradient.
    fn project(&self, chi: &SphCoeffs, psi: &SphCoeffs) -> Result<(Vec<Vec3>, Vec<f64>)> {
        let tr = &self.grid.sphere_data().expect("sphere backend").transform;
        if self.g_const {
            let zero = SphCoeffs::zeros(chi.lmax);
            Ok((vector_synthesis(self.grid, &zero, psi), tr.synthesis(chi)))
        } else {
            let vs = vector_synthesis(self.grid, chi, psi);
            leray_weighted(self.grid, &vs, self.cfg.g.values())
        }
    }

    /// Initial state: `v0` projected onto the discrete weighted-solenoidal
    /// space, with the defect logged.
    pub fn initial_state(&self) -> Result<NsState> {
        let v0 = self.cfg.v0.values();
        let (c, p) = self.filter(v0);
        let (v, _) = self.project(&c, &p)?;
        let r: Vec<Vec3> = (0..v.len()).map(|i| v[i] - v0[i]).collect();
        let defect = self.grid.l2_vector(&r);
        if defect > 1e-12 * self.grid.l2_vector(v0).max(1.0) {
            debug!("initial velocity projected, L2 change {defect:e}");
        }
        Ok(NsState { t: 0.0, v: self.grid.tangent(v)?, q: self.grid.scalar(vec![0.0; self.grid.len()])?, explicit_prev: None })
    }

    /// Explicit right-hand side at `(t, v)` as harmonic coefficients.
    fn explicit_terms(&self, t: f64, v: &[Vec3]) -> (SphCoeffs, SphCoeffs) {
        let n = self.grid.len();
        let mut e = self.cfg.force.sample(n, t);
        if self.cfg.nonlinear {
            let adv = advection_raw(self.grid, v);
            e.iter_mut().zip(&adv).for_each(|(x, a)| *x -= a);
        }
        let g = self.cfg.g.values();
        if !self.g_const {
            // remainder of the viscous operator beyond nu (Delta_B + Ric)
            let full = viscous_divided(self.grid, self.cfg.nu, g, &self.grad_g, v);
            let (c, p) = self.filter(v);
            let mut cl = c.clone();
            let mut pl = p.clone();
            cl.scale_by_degree(|l| self.cfg.nu * (2.0 - (l * (l + 1)) as f64) / (self.radius * self.radius));
            pl.scale_by_degree(|l| self.cfg.nu * (2.0 - (l * (l + 1)) as f64) / (self.radius * self.radius));
            let lin = vector_synthesis(self.grid, &cl, &pl);
            for i in 0..n {
                e[i] += full[i] - lin[i];
            }
        }
        if self.cfg.gamma() > 0.0 {
            for i in 0..n {
                e[i] -= v[i] * (self.cfg.gamma() / g[i] - self.gamma_implicit);
            }
        }
        self.filter(&e)
    }

    /// Crank-Nicolson solve for the intermediate velocity.
    fn implicit_solve(&self, cn: &SphCoeffs, pn: &SphCoeffs, ec: &SphCoeffs, ep: &SphCoeffs) -> (SphCoeffs, SphCoeffs) {
        let dt = self.cfg.dt;
        let mut c = cn.clone();
        let mut p = pn.clone();
        for (x, e) in [(&mut c, ec), (&mut p, ep)] {
            x.scale_by_degree(|l| 1.0 + 0.5 * dt * self.implicit_symbol(l));
            axpy(x, dt, e);
            x.scale_by_degree(|l| if l > self.lcut { 0.0 } else { 1.0 / (1.0 - 0.5 * dt * self.implicit_symbol(l)) });
        }
        (c, p)
    }

    /// Returns the new velocity, and optionally the pressure with its
    /// consistency defect.
    fn advance(&self, state: &NsState, ec: &SphCoeffs, ep: &SphCoeffs, pressure: bool) -> Result<(Vec<Vec3>, Option<(Vec<f64>, f64)>)> {
        let (cn, pn) = self.filter(state.v.values());
        let (cs, ps) = self.implicit_solve(&cn, &pn, ec, ep);
        let (v, phi) = self.project(&cs, &ps)?;
        if !pressure {
            return Ok((v, None));
        }
        // The implicit operator maps gradients to gradients, so the step
        // satisfies the momentum equation exactly with
        // grad q = (I - dt/2 L) grad phi / dt.
        let tr = &self.grid.sphere_data().expect("sphere backend").transform;
        let dt = self.cfg.dt;
        let mut qc = tr.analysis(&phi);
        qc.scale_by_degree(|l| (1.0 - 0.5 * dt * self.implicit_symbol(l)) / dt);
        let q_step = tr.synthesis(&qc);
        let g = self.cfg.g.values();
        let f: Vec<Vec3> = self.grid.grad_raw(&q_step).iter().zip(g).map(|(x, w)| x * *w).collect();
        let q = recover_pressure_raw(self.grid, &f, g)?;
        let fnorm = self.grid.l2_vector(&f);
        let pdef = if fnorm > 0.0 { pressure_defect(self.grid, &f, g, &q) / fnorm } else { 0.0 };
        Ok((v, Some((q, pdef))))
    }

    /// One CNAB2 step. The first step uses an Euler predictor followed by a
    /// trapezoidal corrector for the explicit terms.
    pub fn step(&self, state: &NsState) -> Result<(NsState, f64)> {
        let t = state.t;
        let dt = self.cfg.dt;
        let (e0c, e0p) = self.explicit_terms(t, state.v.values());
        let (ec, ep) = match &state.explicit_prev {
            Some((pc, pp)) => (lin(1.5, &e0c, -0.5, pc), lin(1.5, &e0p, -0.5, pp)),
            None => {
                let (vp, _) = self.advance(state, &e0c, &e0p, false)?;
                let (e1c, e1p) = self.explicit_terms(t + dt, &vp);
                (lin(0.5, &e0c, 0.5, &e1c), lin(0.5, &e0p, 0.5, &e1p))
            }
        };
        let (v, p) = self.advance(state, &ec, &ep, true)?;
        let (q, pdef) = p.expect("pressure requested");
        let t1 = t + dt;
        if v.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
            return Err(Error::Divergence { time: t1 });
        }
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let h = self.radius * std::f64::consts::PI / (self.lcut.max(1) as f64);
        if vmax * dt / h > 1.0 {
            warn!("CFL number {:.3} exceeds 1 at t = {t1}", vmax * dt / h);
        }
        let next = NsState {
            t: t1,
            v: self.grid.tangent(v)?,
            q: self.grid.scalar(q)?,
            explicit_prev: Some((e0c, e0p)),
        };
        Ok((next, pdef))
    }

    fn energy(&self, v: &[Vec3]) -> f64 {
        let g = self.cfg.g.values();
        0.5 * (0..v.len()).map(|i| self.grid.weights[i] * g[i] * v[i].norm_squared()).sum::<f64>()
    }

    fn power(&self, t: f64, v: &[Vec3]) -> f64 {
        let a = bilinear_form_a(self.grid, self.cfg.nu, self.cfg.gamma(), &self.cfg.g, v, v);
        if self.cfg.force.is_zero() {
            return a;
        }
        let f = self.cfg.force.sample(v.len(), t);
        let g = self.cfg.g.values();
        let gf: Vec<Vec3> = f.iter().zip(g).map(|(x, w)| x * *w).collect();
        a - self.grid.inner_vector(&gf, v)
    }

    fn diagnostics(&self, state: &NsState, energy_defect: f64, pressure_defect: f64) -> StepDiagnostics {
        let v = state.v.values();
        let gm = self.grid.grad_matrix_raw(v);
        let gv: Vec<Vec3> = v.iter().zip(self.cfg.g.values()).map(|(x, w)| x * *w).collect();
        StepDiagnostics {
            t: state.t,
            energy: self.energy(v),
            enstrophy: self.grid.inner_matrix(&gm, &gm),
            div_defect: self.grid.l2_scalar(&self.grid.div_tangential_raw(&gv)),
            energy_defect,
            pressure_defect,
        }
    }

    /// Integrate to the final time, recording per-step diagnostics. The
    /// energy defect of a step is
    /// `|(E1 - E0)/dt + (a(v0) + a(v1))/2 - ((g f0, v0) + (g f1, v1))/2|`.
    pub fn run(&self) -> Result<Trajectory> {
        let mut state = self.initial_state()?;
        let steps = self.cfg.n_steps();
        let mut snapshots = vec![Snapshot { t: 0.0, v: state.v.values().to_vec(), q: state.q.values().to_vec() }];
        let mut diagnostics = vec![self.diagnostics(&state, 0.0, 0.0)];
        let mut e0 = self.energy(state.v.values());
        let mut p0 = self.power(0.0, state.v.values());
        for s in 1..=steps {
            let (next, pdef) = self.step(&state)?;
            let e1 = self.energy(next.v.values());
            let p1 = self.power(next.t, next.v.values());
            let defect = ((e1 - e0) / self.cfg.dt + 0.5 * (p0 + p1)).abs();
            state = next;
            diagnostics.push(self.diagnostics(&state, defect, pdef));
            let keep = s == steps || (self.cfg.snapshot_every > 0 && s % self.cfg.snapshot_every == 0);
            if keep {
                snapshots.push(Snapshot { t: state.t, v: state.v.values().to_vec(), q: state.q.values().to_vec() });
            }
            e0 = e1;
            p0 = p1;
        }
        Ok(Trajectory { snapshots, diagnostics })
    }
}

/// Time-integrated weak residual of a trajectory against a constant-in-time
/// weighted-solenoidal test field `eta`:
/// `(g v(T), eta) - (g v(0), eta) + int_0^T [a_g(v, eta) + b_g(v, v, eta) - (g f, eta)] dt`,
/// with the time integral by the trapezoidal rule over the stored snapshots.
pub fn weak_residual(grid: &SurfaceGrid, traj: &Trajectory, cfg: &NsConfig, eta: &[Vec3]) -> f64 {
    let g = cfg.g.values();
    let pair = |v: &[Vec3]| (0..v.len()).map(|i| grid.weights[i] * g[i] * v[i].dot(&eta[i])).sum::<f64>();
    let integrand = |s: &Snapshot| {
        let mut r = bilinear_form_a(grid, cfg.nu, cfg.gamma(), &cfg.g, &s.v, eta);
        if cfg.nonlinear {
            r += trilinear_form_b(grid, g, &s.v, &s.v, eta);
        }
        if !cfg.force.is_zero() {
            r -= pair(&cfg.force.sample(grid.len(), s.t));
        }
        r
    };
    let snaps = &traj.snapshots;
    let mut total = pair(&snaps[snaps.len() - 1].v) - pair(&snaps[0].v);
    for w in snaps.windows(2) {
        total += 0.5 * (w[1].t - w[0].t) * (integrand(&w[0]) + integrand(&w[1]));
    }
    total
}
