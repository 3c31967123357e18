//! Convex subproblems behind the transmission schemes: the max-min
//! covariance SDP, its trust-region linearized multi-slot variant, and the
//! time-allocation LP.

mod conic;
mod simplex;

use std::fmt;

use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, hermitian_part, hermitian_top_eigenpair, herm_dim, identity, outer_vec, psd_projection, trace_re, CMat};
use conic::{IpmSettings, MaxMinSdp, TrustBounds};

/// Hermitian PSD transmit covariance (W) with its trace budget.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: CMat,
    trace_budget: f64,
}

impl Covariance {
    pub fn new(matrix: CMat, trace_budget: f64) -> Result<Self> {
        let c = Self { matrix, trace_budget };
        c.check()?;
        Ok(c)
    }

    pub fn zeros(m: usize, trace_budget: f64) -> Self {
        Self { matrix: CMat::zeros(m, m), trace_budget }
    }

    /// `(P/M) I`.
    pub fn isotropic(m: usize, trace_budget: f64) -> Self {
        Self { matrix: identity(m, trace_budget / m as f64), trace_budget }
    }

    /// Maximum-ratio transmission towards `h`: `P h h^H / ||h||^2`.
    pub fn mrt(h: &[Complex64], trace_budget: f64) -> Result<Self> {
        let g: f64 = h.iter().map(|c| c.norm_sqr()).sum();
        if g <= 0.0 {
            return Err(Error::InvalidParameter("MRT towards a zero channel".into()));
        }
        let m = h.len();
        let matrix = CMat::from_fn(m, m, |i, j| h[i] * h[j].conj() * (trace_budget / g));
        Ok(Self { matrix: hermitian_part(&matrix), trace_budget })
    }

    /// Cleans up a solver iterate: Hermitian part, negative eigenvalues
    /// clipped, trace pulled back inside the budget.
    pub(crate) fn from_iterate(matrix: &CMat, trace_budget: f64) -> Self {
        let mut x = psd_projection(matrix);
        let tr = trace_re(&x);
        if tr > trace_budget {
            x *= Complex64::new(trace_budget / tr, 0.0);
        }
        Self { matrix: x, trace_budget }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace_budget(&self) -> f64 {
        self.trace_budget
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: &self.matrix * Complex64::new(factor, 0.0), trace_budget: self.trace_budget }
    }

    /// Hermitian to 1e-10 entrywise, PSD to `-1e-8 tr`, trace within budget.
    pub fn check(&self) -> Result<()> {
        let m = &self.matrix;
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Covariance(format!("matrix is {}x{}", m.nrows(), m.ncols())));
        }
        if !(self.trace_budget.is_finite() && self.trace_budget >= 0.0) {
            return Err(Error::Covariance(format!("trace budget {}", self.trace_budget)));
        }
        if m.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Covariance("non-finite entries".into()));
        }
        let asym = (m - m.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if asym > 1e-10 {
            return Err(Error::Covariance(format!("not Hermitian (max asymmetry {asym:e})")));
        }
        let tr = self.trace();
        if tr > self.trace_budget + 1e-8 {
            return Err(Error::Covariance(format!("trace {tr} exceeds budget {}", self.trace_budget)));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -1e-8 * tr.max(0.0) {
            return Err(Error::Covariance(format!("min eigenvalue {lmin:e} below -1e-8 tr")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Infeasible => "infeasible",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverCertificate {
    /// Achieved objective of the returned point, in the problem's units.
    pub objective: f64,
    pub primal_residual: f64,
    /// Relative gap to a dual bound, when one is available.
    pub duality_gap_bound: Option<f64>,
    pub status: SolverStatus,
    pub iterations: usize,
}

impl fmt::Display for SolverCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "status={} objective={:.9} primal_residual={:.2e} gap=", self.status, self.objective, self.primal_residual)?;
        match self.duality_gap_bound {
            Some(g) => write!(f, "{g:.2e}")?,
            None => f.write_str("unavailable")?,
        }
        write!(f, " iterations={}", self.iterations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverTolerances {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self { feas_tol: 1e-8, opt_tol: 1e-6, max_iters: 5000 }
    }
}

impl SolverTolerances {
    fn ipm(&self) -> IpmSettings {
        // Residuals inside the solver are measured on the normalized problem,
        // where the last digit of accuracy is not reliably reachable; the
        // physical residual of the polished result is checked against
        // feas_tol separately. The gap target is tightened so the polished
        // result still lands within opt_tol.
        IpmSettings { feas_tol: 10.0 * self.feas_tol, opt_tol: 0.1 * self.opt_tol, max_iters: self.max_iters.min(500) }
    }

    /// Second attempt when the dual bound of the first solve is too loose:
    /// dual residuals leak straight into the Lagrangian bound.
    fn ipm_tight(&self) -> IpmSettings {
        IpmSettings { feas_tol: 0.1 * self.feas_tol, opt_tol: 0.01 * self.opt_tol, max_iters: self.max_iters.min(500) }
    }
}

/// Runs `attempt` with the default settings and, if that does not certify
/// optimality, once more with tighter ones; keeps the better certificate.
fn with_retry<T>(tol: &SolverTolerances, mut attempt: impl FnMut(IpmSettings) -> Result<(T, SolverCertificate)>) -> Result<(T, SolverCertificate)> {
    let first = attempt(tol.ipm())?;
    if first.1.status == SolverStatus::Optimal {
        return Ok(first);
    }
    let second = attempt(tol.ipm_tight())?;
    let better = |c: &SolverCertificate| (c.status != SolverStatus::Optimal, c.duality_gap_bound.unwrap_or(f64::INFINITY));
    let iterations = first.1.iterations + second.1.iterations;
    let mut best = if better(&second.1) < better(&first.1) { second } else { first };
    best.1.iterations = iterations;
    log::debug!("solver retry with tight settings: {}", best.1);
    Ok(best)
}

/// Max-min RF covariance: maximize `min_k h_k^H S h_k` over `tr(S) <= p_max`,
/// `S >= 0`. The certificate objective is the achieved minimum RF power in mW
/// and the gap is checked against the Lagrangian dual bound
/// `p_max * lambda_max(sum_k w_k h_k h_k^H)` for the solver's dual weights.
pub fn solve_multibeam(channels: &ChannelSet, p_max: f64, tol: &SolverTolerances) -> Result<(Covariance, SolverCertificate)> {
    check_power(p_max)?;
    let k = channels.num_ers();
    let m = channels.num_antennas();
    let gmax = (0..k).map(|i| channels.gain(i)).fold(0.0, f64::max);
    let norm = (1.0 / gmax).sqrt();
    let phi: Vec<Vec<f64>> = channels.rows().iter().map(|h| outer_vec(&scaled_row(h, norm))).collect();
    let problem = MaxMinSdp { m, n_blocks: 1, phi, weights: vec![1.0; k], offsets: vec![0.0; k], budget: 1.0, trust: None };
    let x0 = interior_start(&problem, &[identity(m, 0.5 / m as f64)]);
    with_retry(tol, |settings| {
        let sol = problem.solve(&x0, settings);
        let mut cov = Covariance::from_iterate(&(&sol.blocks[0] * Complex64::new(p_max, 0.0)), p_max);
        // Every RF power is non-decreasing in S, so spending the last bit of
        // budget the solver left unused can only help.
        let tr = cov.trace();
        if tr > 0.0 && tr < p_max {
            cov = cov.scaled(p_max / tr);
        }
        let min_rf = |c: &Covariance| -> Result<f64> {
            (0..k).map(|i| channels.rf_power_mw(i, c.matrix())).try_fold(f64::INFINITY, |acc, q| Ok(acc.min(q?)))
        };
        let mut objective = min_rf(&cov)?;
        // Isotropic is feasible too; near-isotropic optima are returned exactly.
        let iso = Covariance::isotropic(m, p_max);
        let iso_objective = min_rf(&iso)?;
        if iso_objective > objective {
            cov = iso;
            objective = iso_objective;
        }

        let weights = simplex_weights(&sol.epi_duals);
        let dual_bound = multibeam_dual_bound(channels, p_max, &weights);
        let gap = if objective > 0.0 { ((dual_bound - objective) / objective).max(0.0) } else { f64::INFINITY };
        let residual = covariance_residual(&cov);
        let status = if gap <= tol.opt_tol && residual <= tol.feas_tol { SolverStatus::Optimal } else { SolverStatus::MaxIters };
        log::debug!("multibeam: {} ipm iterations, gap {gap:.2e}", sol.iterations);
        Ok((cov, SolverCertificate { objective, primal_residual: residual, duality_gap_bound: Some(gap), status, iterations: sol.iterations }))
    })
}

/// `p_max * lambda_max(sum_k w_k h_k h_k^H)` in mW: an upper bound on the
/// max-min RF power for any weights `w` on the simplex.
pub fn multibeam_dual_bound(channels: &ChannelSet, p_max: f64, weights: &[f64]) -> f64 {
    let m = channels.num_antennas();
    let mut acc = CMat::zeros(m, m);
    for (k, &w) in weights.iter().enumerate() {
        let h = channels.row(k);
        for i in 0..m {
            for j in 0..m {
                acc[(i, j)] += h[i] * h[j].conj() * w;
            }
        }
    }
    p_max * channels.rf_unit_scale() * hermitian_top_eigenpair(&acc).0
}

/// One linearized multi-slot covariance update.
///
/// Maximizes `min_k offset_k + sum_n tau_n coef_kn q_kn` where
/// `q_kn = h_k^H S_n h_k` in mW, subject to `tr(S_n) <= p_max`, `S_n >= 0`
/// and `|q_kn - c_kn| <= gamma`, with `c_kn` the RF powers of `centers`.
pub struct ScaSubproblem<'a> {
    pub channels: &'a ChannelSet,
    pub p_max: f64,
    pub durations: &'a [f64],
    /// `K x N`, non-negative.
    pub coefs: &'a [Vec<f64>],
    /// Per-ER constant added to the objective; zeros when `None`.
    pub offsets: Option<&'a [f64]>,
    /// Linearization points, one per slot.
    pub centers: &'a [Covariance],
    /// Trust radius on every RF power, mW.
    pub gamma: f64,
}

impl ScaSubproblem<'_> {
    /// Objective of the linearized problem at the given covariances.
    pub fn surrogate_value(&self, covs: &[Covariance]) -> Result<f64> {
        let k = self.channels.num_ers();
        let mut best = f64::INFINITY;
        for kk in 0..k {
            let mut v = self.offsets.map_or(0.0, |o| o[kk]);
            for (n, c) in covs.iter().enumerate() {
                v += self.durations[n] * self.coefs[kk][n] * self.channels.rf_power_mw(kk, c.matrix())?;
            }
            best = best.min(v);
        }
        Ok(best)
    }

    fn validate(&self) -> Result<()> {
        let k = self.channels.num_ers();
        let n = self.centers.len();
        check_power(self.p_max)?;
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one slot".into()));
        }
        if self.durations.len() != n || self.coefs.len() != k || self.coefs.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("expected {k}x{n} coefficients and {n} durations")));
        }
        if self.offsets.is_some_and(|o| o.len() != k) {
            return Err(Error::Dimension("offsets must have one entry per ER".into()));
        }
        if self.durations.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParameter("durations must be non-negative".into()));
        }
        if self.coefs.iter().flatten().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidParameter("coefficients must be non-negative".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!("trust radius must be non-negative, got {}", self.gamma)));
        }
        if self.centers.iter().any(|c| c.dim() != self.channels.num_antennas()) {
            return Err(Error::Dimension("center covariance size differs from antenna count".into()));
        }
        Ok(())
    }
}

pub fn solve_sca_subproblem(problem: &ScaSubproblem<'_>, tol: &SolverTolerances) -> Result<(Vec<Covariance>, SolverCertificate)> {
    problem.validate()?;
    let ch = problem.channels;
    let (k, m) = (ch.num_ers(), ch.num_antennas());
    let p_max = problem.p_max;
    let n_all = problem.centers.len();
    let total: f64 = problem.durations.iter().sum();

    let trivial = |status: SolverStatus| -> Result<(Vec<Covariance>, SolverCertificate)> {
        let objective = problem.surrogate_value(problem.centers)?;
        Ok((problem.centers.to_vec(), SolverCertificate { objective, primal_residual: 0.0, duality_gap_bound: Some(0.0), status, iterations: 0 }))
    };

    if problem.centers.iter().any(|c| c.trace() > p_max * (1.0 + 1e-8) + 1e-12 || c.min_eigenvalue() < -1e-8 * c.trace().max(0.0)) {
        return trivial(SolverStatus::Infeasible);
    }

    // Zero-duration slots do not enter the objective; they keep their centers.
    let active: Vec<usize> = (0..n_all).filter(|&n| problem.durations[n] > 1e-12 * total).collect();
    // Slots with the same center and coefficients see identical data, and
    // averaging their blocks keeps any solution feasible with the same value.
    // Merging them removes a symmetry that leaves the Newton system singular.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &n in &active {
        let same = |g: &&mut Vec<usize>| {
            let r = g[0];
            problem.centers[r].matrix() == problem.centers[n].matrix() && problem.coefs.iter().all(|c| c[r] == c[n])
        };
        match groups.iter_mut().find(same) {
            Some(g) => g.push(n),
            None => groups.push(vec![n]),
        }
    }
    let group_duration: Vec<f64> = groups.iter().map(|g| g.iter().map(|&n| problem.durations[n]).sum()).collect();
    let gmax = (0..k).map(|i| ch.gain(i)).fold(0.0, f64::max);
    let qscale = p_max * ch.rf_unit_scale() * gmax;
    let weights_raw: Vec<f64> =
        (0..k).flat_map(|kk| groups.iter().zip(&group_duration).map(move |(g, d)| d * problem.coefs[kk][g[0]] * qscale)).collect();
    let wscale = weights_raw.iter().copied().fold(0.0, f64::max);
    if active.is_empty() || wscale <= 0.0 || problem.gamma <= 1e-12 * qscale {
        return trivial(SolverStatus::Optimal);
    }

    let nb = groups.len();
    let norm = (1.0 / gmax).sqrt();
    let phi: Vec<Vec<f64>> = ch.rows().iter().map(|h| outer_vec(&scaled_row(h, norm))).collect();
    let centers_norm: Vec<CMat> = groups.iter().map(|g| problem.centers[g[0]].matrix() * Complex64::new(1.0 / p_max, 0.0)).collect();
    let center_forms: Vec<f64> = (0..k)
        .flat_map(|kk| centers_norm.iter().map(|c| crate::linalg::quad_form(&scaled_row(ch.row(kk), norm), c).re).collect::<Vec<_>>())
        .collect();
    let gamma = problem.gamma / qscale;
    // Normalized RF powers lie in [0, 1], so a radius beyond that never binds.
    let trust = (gamma < 2.0).then(|| TrustBounds {
        lo: center_forms.iter().map(|c| c - gamma).collect(),
        hi: center_forms.iter().map(|c| c + gamma).collect(),
    });
    let offsets: Vec<f64> = (0..k).map(|kk| problem.offsets.map_or(0.0, |o| o[kk]) / wscale).collect();
    let sdp = MaxMinSdp {
        m,
        n_blocks: nb,
        phi,
        weights: weights_raw.iter().map(|w| w / wscale).collect(),
        offsets,
        budget: 1.0,
        trust,
    };

    // Strictly feasible start: pull each center towards (1/2M) I just far
    // enough to stay within half the trust radius.
    let iso = identity(m, 0.5 / m as f64);
    let iso_forms: Vec<f64> = (0..k).map(|kk| 0.5 / m as f64 * sdp.phi[kk][..m].iter().sum::<f64>()).collect();
    let max_dev = (0..k)
        .flat_map(|kk| (0..nb).map(move |n| (kk, n)))
        .map(|(kk, n)| (iso_forms[kk] - center_forms[kk * nb + n]).abs())
        .fold(0.0, f64::max);
    let mix = if max_dev > 0.0 { (0.5 * gamma / max_dev).min(0.5) } else { 0.5 };
    let starts: Vec<CMat> = centers_norm.iter().map(|c| c * Complex64::new(1.0 - mix, 0.0) + &iso * Complex64::new(mix, 0.0)).collect();
    let x0 = interior_start(&sdp, &starts);
    with_retry(tol, |settings| {
        let sol = sdp.solve(&x0, settings);
        let mut out = problem.centers.to_vec();
        for (b, g) in groups.iter().enumerate() {
            let cov = Covariance::from_iterate(&(&sol.blocks[b] * Complex64::new(p_max, 0.0)), p_max);
            for &n in g {
                out[n] = cov.clone();
            }
        }
        let objective = problem.surrogate_value(&out)?;
        let mut residual = out.iter().map(covariance_residual).fold(0.0, f64::max);
        for kk in 0..k {
            for &n in &active {
                let c = ch.rf_power_mw(kk, problem.centers[n].matrix())?;
                let q = ch.rf_power_mw(kk, out[n].matrix())?;
                residual = residual.max(((q - c).abs() - problem.gamma).max(0.0) / qscale);
            }
        }
        let bound = sol.dual_bound * wscale;
        let gap = ((bound - objective) / objective.abs().max(1e-12 * wscale)).max(0.0);
        let status = if gap <= tol.opt_tol && residual <= tol.feas_tol { SolverStatus::Optimal } else { SolverStatus::MaxIters };
        log::trace!(
            "sca subproblem: {nb} slots, {} ipm iterations (converged: {}, normalized value {:.9}), status {status}",
            sol.iterations,
            sol.converged,
            sol.value
        );
        Ok((out, SolverCertificate { objective, primal_residual: residual, duality_gap_bound: Some(gap), status, iterations: sol.iterations }))
    })
}

/// Time allocation maximizing `min_k sum_n tau_n dc_table[k][n]` over
/// `tau >= 0`, `sum tau = total_time`. The certificate objective is in the
/// table's units times time.
pub fn solve_time_lp(dc_table: &[Vec<f64>], total_time: f64, tol: &SolverTolerances) -> Result<(Vec<f64>, SolverCertificate)> {
    if !(total_time.is_finite() && total_time > 0.0) {
        return Err(Error::InvalidParameter(format!("total time must be positive, got {total_time}")));
    }
    let n = dc_table.first().map_or(0, |r| r.len());
    if dc_table.is_empty() || n == 0 || dc_table.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("DC table must be a non-empty K x N matrix".into()));
    }
    if dc_table.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidParameter("DC table entries must be non-negative".into()));
    }
    let sol = simplex::solve_max_min_game(dc_table, tol.max_iters);
    let durations: Vec<f64> = sol.shares.iter().map(|s| s * total_time).collect();
    let objective = sol.value * total_time;
    let residual = (durations.iter().sum::<f64>() - total_time).abs() / total_time;
    let gap = if sol.value > 0.0 { ((sol.upper_bound - sol.value) / sol.value).max(0.0) } else { 0.0 };
    let status = if sol.converged && gap <= tol.opt_tol && residual <= tol.feas_tol { SolverStatus::Optimal } else { SolverStatus::MaxIters };
    Ok((durations, SolverCertificate { objective, primal_residual: residual, duality_gap_bound: Some(gap), status, iterations: sol.pivots }))
}

fn check_power(p_max: f64) -> Result<()> {
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::InvalidParameter(format!("p_max must be positive, got {p_max}")));
    }
    Ok(())
}

fn scaled_row(h: &[Complex64], f: f64) -> Vec<Complex64> {
    h.iter().map(|c| c * f).collect()
}

fn simplex_weights(z: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    if s > 0.0 {
        clipped.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / z.len() as f64; z.len()]
    }
}

fn covariance_residual(c: &Covariance) -> f64 {
    let tr = c.trace();
    let budget = c.trace_budget().max(f64::MIN_POSITIVE);
    ((tr - c.trace_budget()).max(0.0) / budget).max((-c.min_eigenvalue()).max(0.0) / budget)
}

/// Packs starting covariances into the solver's variable vector and places
/// the epigraph variable strictly below every row.
fn interior_start(problem: &MaxMinSdp, blocks: &[CMat]) -> Vec<f64> {
    let d = herm_dim(problem.m);
    let nb = problem.n_blocks;
    let mut x = vec![0.0; nb * d + 1];
    for (n, b) in blocks.iter().enumerate() {
        crate::linalg::herm_to_vec(b, &mut x[n * d..(n + 1) * d]);
    }
    let k = problem.phi.len();
    let mut lowest = f64::INFINITY;
    for kk in 0..k {
        let mut v = problem.offsets[kk];
        for n in 0..nb {
            let q: f64 = problem.phi[kk].iter().zip(&x[n * d..(n + 1) * d]).map(|(a, b)| a * b).sum();
            v += problem.weights[kk * nb + n] * q;
        }
        lowest = lowest.min(v);
    }
    x[nb * d] = lowest - 1.0;
    x
}

/// Dense matrix of RF powers (mW): entry `[k][n]` for ER `k` under `covs[n]`.
pub fn rf_table(channels: &ChannelSet, covs: &[Covariance]) -> Result<Vec<Vec<f64>>> {
    (0..channels.num_ers()).map(|k| covs.iter().map(|c| channels.rf_power_mw(k, c.matrix())).collect()).collect()
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<Covariance>();
    is::<SolverCertificate>();
}
