//! Spherical harmonic transforms on a Gauss-Legendre x uniform-longitude grid.
//!
//! Real orthonormal harmonics on the unit sphere are used throughout:
//!
//! ```text
//! Y_l0   = Pbar_l0(cos t) / sqrt(2 pi)
//! Y_lm^c = Pbar_lm(cos t) cos(m p) / sqrt(pi)
//! Y_lm^s = Pbar_lm(cos t) sin(m p) / sqrt(pi)
//! ```
//!
//! where `Pbar_lm` is normalised so that its square integrates to one over
//! `[-1, 1]`. With `L + 1` colatitudes and `2L + 2` longitudes the quadrature
//! integrates products of two degree-`L` harmonics exactly, so analysis of a
//! bandlimited field is exact.

use std::f64::consts::PI;

use crate::par;

/// Index of `(l, m)` in a packed triangular coefficient array.
#[inline]
pub fn lm_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Number of packed coefficients for degrees `0..=lmax`.
#[inline]
pub fn n_coeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

/// Real spherical harmonic coefficients: `cos` holds the `cos(m p)` parts
/// (and the zonal terms), `sin` the `sin(m p)` parts.
#[derive(Debug, Clone, PartialEq)]
pub struct SphCoeffs {
    pub lmax: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl SphCoeffs {
    pub fn zeros(lmax: usize) -> Self {
        let n = n_coeffs(lmax);
        Self { lmax, cos: vec![0.0; n], sin: vec![0.0; n] }
    }

    /// Multiply every `(l, m)` pair by `f(l)`.
    pub fn scale_by_degree(&mut self, f: impl Fn(usize) -> f64) {
        for l in 0..=self.lmax {
            let s = f(l);
            for m in 0..=l {
                let i = lm_index(l, m);
                self.cos[i] *= s;
                self.sin[i] *= s;
            }
        }
    }

    /// Zero every coefficient with degree above `lcut`.
    pub fn truncate(&mut self, lcut: usize) {
        for l in (lcut + 1)..=self.lmax {
            for m in 0..=l {
                let i = lm_index(l, m);
                self.cos[i] = 0.0;
                self.sin[i] = 0.0;
            }
        }
    }

    pub fn get(&self, l: usize, m: usize) -> (f64, f64) {
        let i = lm_index(l, m);
        (self.cos[i], self.sin[i])
    }

    pub fn set(&mut self, l: usize, m: usize, c: f64, s: f64) {
        let i = lm_index(l, m);
        self.cos[i] = c;
        self.sin[i] = if m == 0 { 0.0 } else { s };
    }

    pub fn dot(&self, other: &SphCoeffs) -> f64 {
        let a: f64 = self.cos.iter().zip(&other.cos).map(|(x, y)| x * y).sum();
        let b: f64 = self.sin.iter().zip(&other.sin).map(|(x, y)| x * y).sum();
        a + b
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes in descending order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Normalised associated Legendre values `Pbar_lm(x)` and colatitude
/// derivatives `d Pbar_lm / d t` (with `x = cos t`) for all `l <= lmax`.
pub fn legendre_table(lmax: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let n = n_coeffs(lmax);
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut pmm = 1.0 / 2f64.sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        p[lm_index(m, m)] = pmm;
        if m < lmax {
            p[lm_index(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * x * pmm;
        }
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let mf = m as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let l1 = lf - 1.0;
            let b = ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt();
            p[lm_index(l, m)] = a * (x * p[lm_index(l - 1, m)] - b * p[lm_index(l - 2, m)]);
        }
    }
    for l in 0..=lmax {
        for m in 0..=l {
            let lf = l as f64;
            let mf = m as f64;
            let prev = if l > m {
                ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt() * p[lm_index(l - 1, m)]
            } else {
                0.0
            };
            dp[lm_index(l, m)] = if s > 0.0 { (lf * x * p[lm_index(l, m)] - prev) / s } else { 0.0 };
        }
    }
    (p, dp)
}

#[inline]
fn norm_m(m: usize) -> f64 {
    if m == 0 {
        1.0 / (2.0 * PI).sqrt()
    } else {
        1.0 / PI.sqrt()
    }
}

/// Precomputed tables for transforms at bandlimit `lmax` on the unit sphere.
#[derive(Debug, Clone)]
pub struct SphereTransform {
    pub lmax: usize,
    pub nlat: usize,
    pub nlon: usize,
    /// `cos t_j` at Gauss-Legendre nodes (north to south).
    pub cos_t: Vec<f64>,
    pub sin_t: Vec<f64>,
    /// Gauss-Legendre weights in `x = cos t`.
    pub gl_w: Vec<f64>,
    pub phi: Vec<f64>,
    pbar: Vec<f64>,
    dpbar: Vec<f64>,
    cosm: Vec<f64>,
    sinm: Vec<f64>,
}

impl SphereTransform {
    pub fn new(lmax: usize) -> Self {
        let nlat = lmax + 1;
        let nlon = 2 * lmax + 2;
        let (cos_t, gl_w) = gauss_legendre(nlat);
        let sin_t: Vec<f64> = cos_t.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let phi: Vec<f64> = (0..nlon).map(|k| 2.0 * PI * k as f64 / nlon as f64).collect();
        let nc = n_coeffs(lmax);
        let mut pbar = Vec::with_capacity(nlat * nc);
        let mut dpbar = Vec::with_capacity(nlat * nc);
        for &x in &cos_t {
            let (p, dp) = legendre_table(lmax, x);
            pbar.extend(p);
            dpbar.extend(dp);
        }
        let mut cosm = vec![0.0; nlon * (lmax + 1)];
        let mut sinm = vec![0.0; nlon * (lmax + 1)];
        for k in 0..nlon {
            for m in 0..=lmax {
                cosm[k * (lmax + 1) + m] = (m as f64 * phi[k]).cos();
                sinm[k * (lmax + 1) + m] = (m as f64 * phi[k]).sin();
            }
        }
        Self { lmax, nlat, nlon, cos_t, sin_t, gl_w, phi, pbar, dpbar, cosm, sinm }
    }

    pub fn n_nodes(&self) -> usize {
        self.nlat * self.nlon
    }

    #[inline]
    fn p(&self, j: usize, l: usize, m: usize) -> f64 {
        self.pbar[j * n_coeffs(self.lmax) + lm_index(l, m)]
    }

    #[inline]
    fn dp(&self, j: usize, l: usize, m: usize) -> f64 {
        self.dpbar[j * n_coeffs(self.lmax) + lm_index(l, m)]
    }

    /// Longitude sums `sum_k f_jk cos(m p_k) dp` and the sine counterpart,
    /// one row of `lmax + 1` values per latitude.
    fn fourier_rows(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mm = self.lmax + 1;
        let dphi = 2.0 * PI / self.nlon as f64;
        let rows = par::map_range(self.nlat, |j| {
            let row = &f[j * self.nlon..(j + 1) * self.nlon];
            let mut c = vec![0.0; mm];
            let mut s = vec![0.0; mm];
            for (k, &v) in row.iter().enumerate() {
                let cm = &self.cosm[k * mm..(k + 1) * mm];
                let sm = &self.sinm[k * mm..(k + 1) * mm];
                for m in 0..mm {
                    c[m] += v * cm[m];
                    s[m] += v * sm[m];
                }
            }
            for m in 0..mm {
                c[m] *= dphi;
                s[m] *= dphi;
            }
            (c, s)
        });
        let mut c = Vec::with_capacity(self.nlat * mm);
        let mut s = Vec::with_capacity(self.nlat * mm);
        for (rc, rs) in rows {
            c.extend(rc);
            s.extend(rs);
        }
        (c, s)
    }

    /// Evaluate `sum_m (c_jm cos(m p_k) + s_jm sin(m p_k))` on the grid.
    fn fourier_synthesis(&self, c: &[f64], s: &[f64]) -> Vec<f64> {
        let mm = self.lmax + 1;
        let mut out = vec![0.0; self.n_nodes()];
        par::for_each_chunk_mut(&mut out, self.nlon, |j, row| {
            let cj = &c[j * mm..(j + 1) * mm];
            let sj = &s[j * mm..(j + 1) * mm];
            for (k, v) in row.iter_mut().enumerate() {
                let cm = &self.cosm[k * mm..(k + 1) * mm];
                let sm = &self.sinm[k * mm..(k + 1) * mm];
                let mut acc = 0.0;
                for m in 0..mm {
                    acc += cj[m] * cm[m] + sj[m] * sm[m];
                }
                *v = acc;
            }
        });
        out
    }

    /// Quadrature projection of a grid function onto degrees `<= lmax`.
    pub fn analysis(&self, f: &[f64]) -> SphCoeffs {
        assert_eq!(f.len(), self.n_nodes());
        let (c, s) = self.fourier_rows(f);
        self.legendre_analysis(&c, &s, Kernel::Value, None)
    }

    /// Shared Legendre stage. `kernel` selects `Pbar` or its colatitude
    /// derivative for the first pair of rows; `extra` optionally supplies a
    /// second pair contracted against the `m / sin t` kernel (gradient
    /// adjoint).
    fn legendre_analysis(&self, c: &[f64], s: &[f64], kernel: Kernel, extra: Option<(&[f64], &[f64])>) -> SphCoeffs {
        let mm = self.lmax + 1;
        let lmax = self.lmax;
        let per_m = par::map_range(mm, |m| {
            let mut cc = vec![0.0; lmax + 1];
            let mut ss = vec![0.0; lmax + 1];
            for j in 0..self.nlat {
                let w = self.gl_w[j];
                let cjm = c[j * mm + m];
                let sjm = s[j * mm + m];
                for l in m..=lmax {
                    let pv = match kernel {
                        Kernel::DTheta => self.dp(j, l, m),
                        _ => self.p(j, l, m),
                    };
                    cc[l] += w * pv * cjm;
                    ss[l] += w * pv * sjm;
                }
                if let Some((ec, es)) = extra {
                    let f = m as f64 / self.sin_t[j];
                    let ecm = ec[j * mm + m];
                    let esm = es[j * mm + m];
                    for l in m..=lmax {
                        let pv = self.p(j, l, m) * f;
                        // d/dp of cos(m p) = -m sin(m p); of sin(m p) = m cos(m p).
                        cc[l] -= w * pv * esm;
                        ss[l] += w * pv * ecm;
                    }
                }
            }
            (cc, ss)
        });
        let mut out = SphCoeffs::zeros(lmax);
        for (m, (cc, ss)) in per_m.into_iter().enumerate() {
            let nm = norm_m(m);
            for l in m..=lmax {
                let i = lm_index(l, m);
                out.cos[i] = cc[l] * nm;
                out.sin[i] = if m == 0 { 0.0 } else { ss[l] * nm };
            }
        }
        out
    }

    fn legendre_rows(&self, coeffs: &SphCoeffs, kernel: Kernel) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(coeffs.lmax, self.lmax, "coefficient bandlimit mismatch");
        let mm = self.lmax + 1;
        let rows = par::map_range(self.nlat, |j| {
            let mut c = vec![0.0; mm];
            let mut s = vec![0.0; mm];
            for m in 0..mm {
                let nm = norm_m(m);
                let mut ac = 0.0;
                let mut asn = 0.0;
                for l in m..=self.lmax {
                    let i = lm_index(l, m);
                    let pv = match kernel {
                        Kernel::Value => self.p(j, l, m),
                        Kernel::DTheta => self.dp(j, l, m),
                        Kernel::DPhiOverSin => self.p(j, l, m) * m as f64 / self.sin_t[j],
                    };
                    ac += pv * coeffs.cos[i];
                    asn += pv * coeffs.sin[i];
                }
                match kernel {
                    Kernel::DPhiOverSin => {
                        c[m] = asn * nm;
                        s[m] = -ac * nm;
                    }
                    _ => {
                        c[m] = ac * nm;
                        s[m] = asn * nm;
                    }
                }
            }
            (c, s)
        });
        let mut c = Vec::with_capacity(self.nlat * mm);
        let mut s = Vec::with_capacity(self.nlat * mm);
        for (rc, rs) in rows {
            c.extend(rc);
            s.extend(rs);
        }
        (c, s)
    }

    pub fn synthesis(&self, coeffs: &SphCoeffs) -> Vec<f64> {
        let (c, s) = self.legendre_rows(coeffs, Kernel::Value);
        self.fourier_synthesis(&c, &s)
    }

    /// Colatitude derivative and `(1 / sin t) d/dp` of the expansion, on the
    /// unit sphere.
    pub fn gradient_synthesis(&self, coeffs: &SphCoeffs) -> (Vec<f64>, Vec<f64>) {
        let (c, s) = self.legendre_rows(coeffs, Kernel::DTheta);
        let dt = self.fourier_synthesis(&c, &s);
        let (c, s) = self.legendre_rows(coeffs, Kernel::DPhiOverSin);
        let dp = self.fourier_synthesis(&c, &s);
        (dt, dp)
    }

    /// Transpose of [`gradient_synthesis`](Self::gradient_synthesis) in the
    /// quadrature inner product: returns, for every harmonic, the quadrature
    /// sum of `f_t dY/dt + f_p (1/sin t) dY/dp` on the unit sphere.
    pub fn gradient_adjoint(&self, f_theta: &[f64], f_phi: &[f64]) -> SphCoeffs {
        let (ct, st) = self.fourier_rows(f_theta);
        let (cp, sp) = self.fourier_rows(f_phi);
        self.legendre_analysis(&ct, &st, Kernel::DTheta, Some((&cp, &sp)))
    }

    /// Evaluate an expansion at an arbitrary point `(t, p)`.
    pub fn evaluate(&self, coeffs: &SphCoeffs, theta: f64, phi: f64) -> f64 {
        let (p, _) = legendre_table(coeffs.lmax, theta.cos());
        let mut acc = 0.0;
        for l in 0..=coeffs.lmax {
            for m in 0..=l {
                let i = lm_index(l, m);
                let mf = m as f64;
                acc += p[i] * norm_m(m) * (coeffs.cos[i] * (mf * phi).cos() + coeffs.sin[i] * (mf * phi).sin());
            }
        }
        acc
    }
}

#[derive(Clone, Copy)]
enum Kernel {
    Value,
    DTheta,
    DPhiOverSin,
}
