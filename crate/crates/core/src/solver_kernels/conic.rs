//! Primal-dual interior-point method for max-min problems of the form
//!
//! ```text
//! maximize    E
//! subject to  E <= offset_k + sum_n w_kn <H_k, X_n>      for every ER k
//!             tr(X_n) <= budget                           for every block n
//!             lo_kn <= <H_k, X_n> <= hi_kn                (optional)
//!             X_n Hermitian PSD
//! ```
//!
//! with `H_k = h_k h_k^H`. Iterates follow the Nesterov-Todd scaled central
//! path with a Mehrotra predictor-corrector; starting points need not be
//! feasible. The normal equations have block-diagonal structure (one
//! `M^2 x M^2` block per covariance) coupled only through the `K`
//! epigraph rows, so each Newton system costs one small Cholesky per block
//! plus one `K x K` factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;

use crate::linalg::{herm_to_vec, hermitian_eigenvalues, vec_to_herm, CMat};

pub(crate) struct TrustBounds {
    /// Row-major `K x N`.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub(crate) struct MaxMinSdp {
    pub m: usize,
    pub n_blocks: usize,
    /// Parameter vectors of `h_k h_k^H`.
    pub phi: Vec<Vec<f64>>,
    /// Row-major `K x N`, non-negative.
    pub weights: Vec<f64>,
    pub offsets: Vec<f64>,
    pub budget: f64,
    pub trust: Option<TrustBounds>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmSolution {
    pub blocks: Vec<CMat>,
    pub value: f64,
    pub epi_duals: Vec<f64>,
    /// Lagrangian upper bound on the optimum built from the final dual
    /// iterate; valid whatever the residuals.
    pub dual_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Element of the cone `R^l_+ x Herm_+^M x ... x Herm_+^M`.
#[derive(Clone)]
struct ConeVec {
    lin: Vec<f64>,
    psd: Vec<CMat>,
}

impl ConeVec {
    fn dot(&self, o: &ConeVec) -> f64 {
        let l: f64 = self.lin.iter().zip(&o.lin).map(|(a, b)| a * b).sum();
        let p: f64 = self.psd.iter().zip(&o.psd).map(|(a, b)| herm_dot(a, b)).sum();
        l + p
    }

    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    fn axpy(&mut self, alpha: f64, o: &ConeVec) {
        for (a, b) in self.lin.iter_mut().zip(&o.lin) {
            *a += alpha * b;
        }
        let c = Complex64::new(alpha, 0.0);
        for (a, b) in self.psd.iter_mut().zip(&o.psd) {
            *a += b * c;
        }
    }

    fn scaled(&self, alpha: f64) -> ConeVec {
        let c = Complex64::new(alpha, 0.0);
        ConeVec { lin: self.lin.iter().map(|v| v * alpha).collect(), psd: self.psd.iter().map(|p| p * c).collect() }
    }

    fn sub(&self, o: &ConeVec) -> ConeVec {
        let mut out = self.clone();
        out.axpy(-1.0, o);
        out
    }
}

fn herm_dot(a: &CMat, b: &CMat) -> f64 {
    // Re tr(A B) for Hermitian A, B equals the entrywise sum of Re(a_ij conj(b_ij)).
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn jordan(a: &CMat, b: &CMat) -> CMat {
    (a * b + b * a) * Complex64::new(0.5, 0.0)
}

struct Step {
    dx: Vec<f64>,
    ds: ConeVec,
    dz: ConeVec,
    /// `W^{-T} ds` and `W dz`.
    dst: ConeVec,
    dzt: ConeVec,
}

/// Nesterov-Todd scaling data for the current `(s, z)`.
struct Scaling {
    /// `sqrt(s / z)` per linear row.
    d: Vec<f64>,
    /// `sqrt(s z)` per linear row.
    lam_lin: Vec<f64>,
    rinv: Vec<CMat>,
    lam_psd: Vec<Vec<f64>>,
    winv: Vec<CMat>,
}

impl Scaling {
    fn new(s: &ConeVec, z: &ConeVec) -> Option<Scaling> {
        let mut d = Vec::with_capacity(s.lin.len());
        let mut lam_lin = Vec::with_capacity(s.lin.len());
        for (&si, &zi) in s.lin.iter().zip(&z.lin) {
            if !(si > 0.0 && zi > 0.0) {
                return None;
            }
            d.push((si / zi).sqrt());
            lam_lin.push((si * zi).sqrt());
        }
        let nb = s.psd.len();
        let (mut rinv, mut lam_psd, mut winv) =
            (Vec::with_capacity(nb), Vec::with_capacity(nb), Vec::with_capacity(nb));
        for (sb, zb) in s.psd.iter().zip(&z.psd) {
            let ls = Cholesky::new(sb.clone())?.l();
            let lz = Cholesky::new(zb.clone())?.l();
            let svd = (lz.adjoint() * &ls).svd(true, false);
            let u = svd.u?;
            let sv = svd.singular_values;
            if sv.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return None;
            }
            let m = sv.len();
            let mut inv_sqrt = CMat::zeros(m, m);
            for i in 0..m {
                inv_sqrt[(i, i)] = Complex64::new(1.0 / sv[i].sqrt(), 0.0);
            }
            // R = Ls V L^{-1/2} and R^{-1} = L^{-1/2} U^H Lz^H.
            let rib = &inv_sqrt * u.adjoint() * lz.adjoint();
            winv.push(rib.adjoint() * &rib);
            rinv.push(rib);
            lam_psd.push(sv.iter().copied().collect());
        }
        Some(Scaling { d, lam_lin, rinv, lam_psd, winv })
    }

    /// Primal-side scaled direction `W^{-T} ds`.
    fn scale_s(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lin: v.lin.iter().zip(&self.d).map(|(x, d)| x / d).collect(),
            psd: v.psd.iter().zip(&self.rinv).map(|(x, ri)| ri * x * ri.adjoint()).collect(),
        }
    }

    /// `W^{-1} v`, the adjoint of [`Self::scale_s`].
    fn w_inv_adj(&self, v: &ConeVec) -> ConeVec {
        ConeVec {
            lin: v.lin.iter().zip(&self.d).map(|(x, d)| x / d).collect(),
            psd: v.psd.iter().zip(&self.rinv).map(|(x, ri)| ri.adjoint() * x * ri).collect(),
        }
    }

    fn lambda(&self) -> ConeVec {
        ConeVec { lin: self.lam_lin.clone(), psd: self.lam_psd.iter().map(|l| diag(l)).collect() }
    }

    /// Solves `lambda o u = b`.
    fn lambda_div(&self, b: &ConeVec) -> ConeVec {
        let lin = b.lin.iter().zip(&self.lam_lin).map(|(bi, l)| bi / l).collect();
        let psd = b
            .psd
            .iter()
            .zip(&self.lam_psd)
            .map(|(bb, lam)| {
                let m = lam.len();
                CMat::from_fn(m, m, |i, j| bb[(i, j)] * (2.0 / (lam[i] + lam[j])))
            })
            .collect();
        ConeVec { lin, psd }
    }

    /// Largest `alpha` keeping `lambda + alpha * dtilde` in the cone.
    fn max_step(&self, dt: &ConeVec) -> f64 {
        let mut alpha = f64::INFINITY;
        for (di, l) in dt.lin.iter().zip(&self.lam_lin) {
            if *di < 0.0 {
                alpha = alpha.min(-l / di);
            }
        }
        for (db, lam) in dt.psd.iter().zip(&self.lam_psd) {
            let m = lam.len();
            let t = CMat::from_fn(m, m, |i, j| db[(i, j)] / (lam[i] * lam[j]).sqrt());
            let mn = hermitian_eigenvalues(&t)[0];
            if mn < 0.0 {
                alpha = alpha.min(-1.0 / mn);
            }
        }
        alpha
    }
}

fn diag(v: &[f64]) -> CMat {
    let m = v.len();
    let mut out = CMat::zeros(m, m);
    for i in 0..m {
        out[(i, i)] = Complex64::new(v[i], 0.0);
    }
    out
}

/// Factorized normal-equation operator `G^T (W^T W)^{-1} G`.
struct NormalFactor {
    chol: Vec<Cholesky<f64, Dyn>>,
    /// `D_n^{-1} Phi^T`, `d x K`.
    f: Vec<DMatrix<f64>>,
    mk: Cholesky<f64, Dyn>,
    mk_one: DVector<f64>,
    one_mk_one: f64,
}

impl MaxMinSdp {
    fn k(&self) -> usize {
        self.phi.len()
    }

    fn d(&self) -> usize {
        self.m * self.m
    }

    fn n_lin(&self) -> usize {
        let k = self.k();
        let n = self.n_blocks;
        k + n + if self.trust.is_some() { 2 * k * n } else { 0 }
    }

    fn idx_tr(&self, n: usize) -> usize {
        self.k() + n
    }

    fn idx_up(&self, k: usize, n: usize) -> usize {
        self.k() + self.n_blocks + k * self.n_blocks + n
    }

    fn idx_lo(&self, k: usize, n: usize) -> usize {
        self.k() + self.n_blocks + self.k() * self.n_blocks + k * self.n_blocks + n
    }

    fn w(&self, k: usize, n: usize) -> f64 {
        self.weights[k * self.n_blocks + n]
    }

    fn block<'a>(&self, x: &'a [f64], n: usize) -> &'a [f64] {
        let d = self.d();
        &x[n * d..(n + 1) * d]
    }

    fn forms(&self, x: &[f64]) -> Vec<f64> {
        let (k, n) = (self.k(), self.n_blocks);
        let mut out = vec![0.0; k * n];
        for kk in 0..k {
            for nn in 0..n {
                out[kk * n + nn] = dot(&self.phi[kk], self.block(x, nn));
            }
        }
        out
    }

    fn h_vec(&self) -> ConeVec {
        let mut lin = vec![0.0; self.n_lin()];
        lin[..self.k()].copy_from_slice(&self.offsets);
        for n in 0..self.n_blocks {
            lin[self.idx_tr(n)] = self.budget;
        }
        if let Some(t) = &self.trust {
            for k in 0..self.k() {
                for n in 0..self.n_blocks {
                    lin[self.idx_up(k, n)] = t.hi[k * self.n_blocks + n];
                    lin[self.idx_lo(k, n)] = -t.lo[k * self.n_blocks + n];
                }
            }
        }
        ConeVec { lin, psd: vec![CMat::zeros(self.m, self.m); self.n_blocks] }
    }

    fn apply_g(&self, x: &[f64]) -> ConeVec {
        let (k, nb, m) = (self.k(), self.n_blocks, self.m);
        let e = x[x.len() - 1];
        let q = self.forms(x);
        let mut lin = vec![0.0; self.n_lin()];
        for kk in 0..k {
            lin[kk] = e - (0..nb).map(|n| self.w(kk, n) * q[kk * nb + n]).sum::<f64>();
        }
        for n in 0..nb {
            lin[self.idx_tr(n)] = self.block(x, n)[..m].iter().sum();
        }
        if self.trust.is_some() {
            for kk in 0..k {
                for n in 0..nb {
                    lin[self.idx_up(kk, n)] = q[kk * nb + n];
                    lin[self.idx_lo(kk, n)] = -q[kk * nb + n];
                }
            }
        }
        let psd = (0..nb).map(|n| -vec_to_herm(self.block(x, n), m)).collect();
        ConeVec { lin, psd }
    }

    fn apply_gt(&self, z: &ConeVec) -> Vec<f64> {
        let (k, nb, m, d) = (self.k(), self.n_blocks, self.m, self.d());
        let mut out = vec![0.0; nb * d + 1];
        let mut buf = vec![0.0; d];
        for n in 0..nb {
            let blk = &mut out[n * d..(n + 1) * d];
            for kk in 0..k {
                let mut c = -z.lin[kk] * self.w(kk, n);
                if self.trust.is_some() {
                    c += z.lin[self.idx_up(kk, n)] - z.lin[self.idx_lo(kk, n)];
                }
                if c != 0.0 {
                    for (o, p) in blk.iter_mut().zip(&self.phi[kk]) {
                        *o += c * p;
                    }
                }
            }
            let ztr = z.lin[self.idx_tr(n)];
            for o in blk[..m].iter_mut() {
                *o += ztr;
            }
            herm_to_vec(&z.psd[n], &mut buf);
            for (o, b) in blk.iter_mut().zip(&buf) {
                *o -= b;
            }
        }
        out[nb * d] = z.lin[..k].iter().sum();
        out
    }

    /// Matrix of `X -> V X V` in the Hermitian parameter basis.
    fn congruence_matrix(&self, v: &CMat) -> DMatrix<f64> {
        let m = self.m;
        let d = self.d();
        let mut out = DMatrix::<f64>::zeros(d, d);
        let mut y = CMat::zeros(m, m);
        let mut col = vec![0.0; d];
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut fill = |j: usize, y: &CMat, out: &mut DMatrix<f64>| {
            herm_to_vec(y, &mut col);
            out.column_mut(j).copy_from_slice(&col);
        };
        for i in 0..m {
            for a in 0..m {
                for b in 0..m {
                    y[(a, b)] = v[(a, i)] * v[(b, i)].conj();
                }
            }
            fill(i, &y, &mut out);
        }
        let mut p = m;
        for i in 0..m {
            for j in i + 1..m {
                for a in 0..m {
                    for b in 0..m {
                        let t1 = v[(a, i)] * v[(b, j)].conj();
                        let t2 = v[(a, j)] * v[(b, i)].conj();
                        y[(a, b)] = (t1 + t2) * s2;
                    }
                }
                fill(p, &y, &mut out);
                for a in 0..m {
                    for b in 0..m {
                        let t1 = v[(a, i)] * v[(b, j)].conj();
                        let t2 = v[(a, j)] * v[(b, i)].conj();
                        y[(a, b)] = (t1 - t2) * Complex64::new(0.0, s2);
                    }
                }
                fill(p + 1, &y, &mut out);
                p += 2;
            }
        }
        out
    }

    fn factor(&self, sc: &Scaling, phi_t: &DMatrix<f64>, phi: &DMatrix<f64>) -> Option<NormalFactor> {
        let (k, nb, m) = (self.k(), self.n_blocks, self.m);
        let mut chol = Vec::with_capacity(nb);
        let mut fs = Vec::with_capacity(nb);
        let mut mk = DMatrix::<f64>::zeros(k, k);
        for n in 0..nb {
            let mut dn = self.congruence_matrix(&sc.winv[n]);
            let t = 1.0 / sq(sc.d[self.idx_tr(n)]);
            for i in 0..m {
                for j in 0..m {
                    dn[(i, j)] += t;
                }
            }
            if self.trust.is_some() {
                let mut scaled = phi.clone();
                for kk in 0..k {
                    let c = 1.0 / sq(sc.d[self.idx_up(kk, n)]) + 1.0 / sq(sc.d[self.idx_lo(kk, n)]);
                    scaled.row_mut(kk).scale_mut(c);
                }
                dn.gemm(1.0, phi_t, &scaled, 1.0);
            }
            let ch = cholesky_regularized(hermitize_real(dn))?;
            let f = ch.solve(phi_t);
            let pf = phi * &f;
            for a in 0..k {
                let wa = self.w(a, n);
                if wa == 0.0 {
                    continue;
                }
                for b in 0..k {
                    mk[(a, b)] += wa * pf[(a, b)] * self.w(b, n);
                }
            }
            chol.push(ch);
            fs.push(f);
        }
        let mut mk = hermitize_real(mk);
        for kk in 0..k {
            mk[(kk, kk)] += sq(sc.d[kk]);
        }
        let mk = cholesky_regularized(mk)?;
        let mk_one = mk.solve(&DVector::from_element(k, 1.0));
        let one_mk_one = mk_one.sum();
        if !(one_mk_one > 0.0) {
            return None;
        }
        Some(NormalFactor { chol, f: fs, mk, mk_one, one_mk_one })
    }

    fn solve_normal(&self, fac: &NormalFactor, r: &[f64], phi: &DMatrix<f64>) -> Vec<f64> {
        let (k, nb, d) = (self.k(), self.n_blocks, self.d());
        let mut u = Vec::with_capacity(nb);
        let mut b = DVector::<f64>::zeros(k);
        for n in 0..nb {
            let un = fac.chol[n].solve(&DVector::from_column_slice(&r[n * d..(n + 1) * d]));
            let pu = phi * &un;
            for kk in 0..k {
                b[kk] += self.w(kk, n) * pu[kk];
            }
            u.push(un);
        }
        let mkb = fac.mk.solve(&b);
        let de = (r[nb * d] + mkb.sum()) / fac.one_mk_one;
        let wv = &fac.mk_one * de - mkb;
        let mut out = vec![0.0; nb * d + 1];
        for n in 0..nb {
            let coef = DVector::from_fn(k, |kk, _| wv[kk] * self.w(kk, n));
            let dy = &u[n] + &fac.f[n] * coef;
            out[n * d..(n + 1) * d].copy_from_slice(dy.as_slice());
        }
        out[nb * d] = de;
        out
    }

    /// `max_X L(X, y)` for the multipliers `z_lin` clipped to be
    /// non-negative and scaled so the epigraph part sums to one:
    /// `sum_k y_k offset_k + sum (u hi - v lo) + budget sum_n max(0, lambda_max(A_n))`
    /// with `A_n = sum_k (y_k w_kn - u_kn + v_kn) H_k`.
    pub(crate) fn dual_bound(&self, z_lin: &[f64]) -> f64 {
        let (k, nb, m) = (self.k(), self.n_blocks, self.m);
        let total: f64 = z_lin[..k].iter().map(|v| v.max(0.0)).sum();
        if !(total > 0.0) {
            return f64::INFINITY;
        }
        let z: Vec<f64> = z_lin.iter().map(|v| v.max(0.0) / total).collect();
        let mut bound: f64 = (0..k).map(|kk| z[kk] * self.offsets[kk]).sum();
        if let Some(t) = &self.trust {
            for kk in 0..k {
                for n in 0..nb {
                    bound += z[self.idx_up(kk, n)] * t.hi[kk * nb + n] - z[self.idx_lo(kk, n)] * t.lo[kk * nb + n];
                }
            }
        }
        let d = self.d();
        for n in 0..nb {
            let mut a = vec![0.0; d];
            for kk in 0..k {
                let mut c = z[kk] * self.w(kk, n);
                if self.trust.is_some() {
                    c += z[self.idx_lo(kk, n)] - z[self.idx_up(kk, n)];
                }
                a.iter_mut().zip(&self.phi[kk]).for_each(|(o, p)| *o += c * p);
            }
            let top = *hermitian_eigenvalues(&vec_to_herm(&a, m)).as_slice().last().expect("non-empty");
            bound += self.budget * top.max(0.0);
        }
        bound
    }

    pub(crate) fn solve(&self, x0: &[f64], settings: IpmSettings) -> IpmSolution {
        let (k, nb, m, d) = (self.k(), self.n_blocks, self.m, self.d());
        debug_assert_eq!(x0.len(), nb * d + 1);
        let phi = DMatrix::from_fn(k, d, |i, j| self.phi[i][j]);
        let phi_t = phi.transpose();
        let h = self.h_vec();
        let h_norm = h.norm().max(1.0);
        let nu = (self.n_lin() + nb * m) as f64;

        let mut x = x0.to_vec();
        let mut s = h.sub(&self.apply_g(&x));
        shift_into_cone(&mut s);
        let mut z = initial_dual(&s, k);

        let meets = |p: f64, d: f64, g: f64| p <= settings.feas_tol && d <= settings.feas_tol && g <= settings.opt_tol;
        let mut best: Option<(Vec<f64>, ConeVec, f64)> = None;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < settings.max_iters {
            let mut rx = self.apply_gt(&z);
            rx[nb * d] -= 1.0;
            let gx = self.apply_g(&x);
            let mut rz = gx.clone();
            rz.axpy(1.0, &s);
            rz.axpy(-1.0, &h);
            let gap = s.dot(&z);
            let mu = gap / nu;
            let pobj = -x[nb * d];
            let dobj = -h.dot(&z);
            let pres = rz.norm() / h_norm;
            let dres = norm(&rx);
            let rel_gap = if gap <= 0.0 { 0.0 } else { gap / pobj.abs().max(dobj.abs()).max(1e-12) };
            log::trace!("ipm {iterations}: pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} rel {rel_gap:.2e}");

            let score = pres.max(dres).max(rel_gap);
            let best_score = best.as_ref().map_or(f64::INFINITY, |b| b.2);
            // A step that lands orders of magnitude behind the best iterate
            // means the Newton system has broken down near a degenerate
            // optimum; later iterates rarely recover the lost accuracy.
            if score > BREAKDOWN_FACTOR * best_score && best_score < 1e-4 {
                break;
            }
            if score < best_score {
                best = Some((x.clone(), z.clone(), score));
            }
            if meets(pres, dres, rel_gap) {
                converged = true;
                break;
            }
            // Past this point the Newton systems are too ill-conditioned to
            // make further progress.
            if gap <= 1e-13 * pobj.abs().max(1.0) {
                break;
            }
            let Some(sc) = Scaling::new(&s, &z) else { break };
            let Some(fac) = self.factor(&sc, &phi_t, &phi) else { break };
            let lam = sc.lambda();
            let lam_sq = jordan_sq(&lam);

            // Newton step in NT-scaled variables. With u = lambda \ bs:
            //   dz~ = W^{-T} G dx - (W^{-T} bz - u),   dz = W^{-1} dz~,
            //   ds  = bz - G dx,                       ds~ = u - dz~,
            // and dx from the normal equations G^T dz = bx.
            let step = |bx: &[f64], bz: &ConeVec, bs: &ConeVec| -> Step {
                let u = sc.lambda_div(bs);
                let v = sc.scale_s(bz).sub(&u);
                let gt = self.apply_gt(&sc.w_inv_adj(&v));
                let rhs: Vec<f64> = bx.iter().zip(&gt).map(|(a, b)| a + b).collect();
                let mut dx = self.solve_normal(&fac, &rhs, &phi);
                let dzt_of = |dx: &[f64]| sc.scale_s(&self.apply_g(dx)).sub(&v);
                let mut dzt = dzt_of(&dx);
                let mut dz = sc.w_inv_adj(&dzt);
                // Iterative refinement of G^T dz = bx, the only equation the
                // elimination does not satisfy exactly.
                let residual = |dz: &ConeVec| -> Vec<f64> {
                    let gtdz = self.apply_gt(dz);
                    bx.iter().zip(&gtdz).map(|(a, b)| a - b).collect()
                };
                let mut ex = residual(&dz);
                for _ in 0..REFINE_STEPS {
                    let err = norm(&ex);
                    if err <= 1e-15 * norm(bx).max(1.0) {
                        break;
                    }
                    let fix = self.solve_normal(&fac, &ex, &phi);
                    let trial: Vec<f64> = dx.iter().zip(&fix).map(|(a, b)| a + b).collect();
                    let trial_zt = dzt_of(&trial);
                    let trial_z = sc.w_inv_adj(&trial_zt);
                    let trial_ex = residual(&trial_z);
                    if norm(&trial_ex) >= err {
                        break;
                    }
                    (dx, dzt, dz, ex) = (trial, trial_zt, trial_z, trial_ex);
                }
                // Taken from the linear equation G dx + ds = bz so the
                // primal residual shrinks exactly with the step length.
                let mut ds = bz.clone();
                ds.axpy(-1.0, &self.apply_g(&dx));
                let dst = u.sub(&dzt);
                Step { dx, ds, dz, dst, dzt }
            };

            // Predictor.
            let neg_rx: Vec<f64> = rx.iter().map(|v| -v).collect();
            let neg_rz = rz.scaled(-1.0);
            let aff = step(&neg_rx, &neg_rz, &lam_sq.scaled(-1.0));
            let a_aff = sc.max_step(&aff.dst).min(sc.max_step(&aff.dzt)).min(1.0);
            let mut s_aff = s.clone();
            s_aff.axpy(a_aff, &aff.ds);
            let mut z_aff = z.clone();
            z_aff.axpy(a_aff, &aff.dz);
            let sigma = (s_aff.dot(&z_aff) / gap).clamp(0.0, 1.0).powi(3);

            // Corrector.
            let mut bs = lam_sq.scaled(-1.0);
            bs.axpy(-1.0, &jordan_prod(&aff.dst, &aff.dzt));
            add_identity(&mut bs, sigma * mu);
            let f = 1.0 - sigma;
            let bx: Vec<f64> = rx.iter().map(|v| -f * v).collect();
            let Step { dx, ds, dz, dst, dzt } = step(&bx, &rz.scaled(-f), &bs);
            let a_max = sc.max_step(&dst).min(sc.max_step(&dzt));
            let alpha = (0.99 * a_max).min(1.0);
            if !(alpha > 1e-8) || dx.iter().any(|v| !v.is_finite()) {
                break;
            }
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += alpha * di;
            }
            s.axpy(alpha, &ds);
            z.axpy(alpha, &dz);
            for b in s.psd.iter_mut().chain(z.psd.iter_mut()) {
                *b = crate::linalg::hermitian_part(b);
            }
            iterations += 1;
        }
        // The last iterate may be worse than an earlier one once the Newton
        // systems lose accuracy.
        if !converged {
            if let Some((bx, bz, _)) = best {
                x = bx;
                z = bz;
            }
        }
        IpmSolution {
            blocks: (0..nb).map(|n| vec_to_herm(self.block(&x, n), m)).collect(),
            value: x[nb * d],
            epi_duals: z.lin[..k].to_vec(),
            dual_bound: self.dual_bound(&z.lin),
            iterations,
            converged,
        }
    }
}

const REFINE_STEPS: usize = 3;
const BREAKDOWN_FACTOR: f64 = 1e3;

fn sq(v: f64) -> f64 {
    v * v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn jordan_sq(v: &ConeVec) -> ConeVec {
    jordan_prod(v, v)
}

fn jordan_prod(a: &ConeVec, b: &ConeVec) -> ConeVec {
    ConeVec { lin: a.lin.iter().zip(&b.lin).map(|(x, y)| x * y).collect(), psd: a.psd.iter().zip(&b.psd).map(|(x, y)| jordan(x, y)).collect() }
}

fn add_identity(v: &mut ConeVec, t: f64) {
    for x in v.lin.iter_mut() {
        *x += t;
    }
    for b in v.psd.iter_mut() {
        for i in 0..b.nrows() {
            b[(i, i)] += t;
        }
    }
}

fn shift_into_cone(s: &mut ConeVec) {
    let mut mn = s.lin.iter().copied().fold(f64::INFINITY, f64::min);
    for b in &s.psd {
        mn = mn.min(hermitian_eigenvalues(b)[0]);
    }
    if mn <= 1e-10 {
        add_identity(s, 1e-3 - mn.min(0.0));
    }
}

/// Dual start on the central path of the primal start, scaled so the
/// epigraph multipliers already sum to one.
fn initial_dual(s: &ConeVec, k: usize) -> ConeVec {
    let inv_sum: f64 = s.lin[..k].iter().map(|v| 1.0 / v).sum();
    let mu = 1.0 / inv_sum;
    ConeVec {
        lin: s.lin.iter().map(|v| mu / v).collect(),
        psd: s
            .psd
            .iter()
            .map(|b| {
                let m = b.nrows();
                b.clone().try_inverse().map(|i| crate::linalg::hermitian_part(&(i * Complex64::new(mu, 0.0)))).unwrap_or_else(|| crate::linalg::identity(m, mu))
            })
            .collect(),
    }
}

fn hermitize_real(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn cholesky_regularized(mut a: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Some(c);
    }
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut eps = 1e-14 * scale;
    for _ in 0..6 {
        for i in 0..a.nrows() {
            a[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(a.clone()) {
            return Some(c);
        }
        eps *= 100.0;
    }
    None
}
