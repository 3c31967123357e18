//! Transmission schemes over one block: constant multi-beam, TDMA with
//! per-ER MRT slots, isotropic broadcast, and time-division energy
//! beamforming (alternating SCA covariance updates and LP time allocation).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::eh_model::EhParams;
use crate::error::{Error, Result};
use crate::solver_kernels::{
    rf_table, solve_multibeam, solve_sca_subproblem, solve_time_lp, Covariance, ScaSubproblem, SolverCertificate, SolverStatus,
    SolverTolerances,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub duration: f64,
    pub covariance: Covariance,
}

/// Ordered slots whose durations add up to the block length.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    slots: Vec<Slot>,
    block_length: f64,
}

impl Schedule {
    pub fn new(slots: Vec<Slot>, block_length: f64) -> Result<Self> {
        let s = Self { slots, block_length };
        s.check()?;
        Ok(s)
    }

    pub fn single(covariance: Covariance, block_length: f64) -> Result<Self> {
        Self::new(vec![Slot { duration: block_length, covariance }], block_length)
    }

    fn from_parts(durations: &[f64], covs: &[Covariance], block_length: f64) -> Result<Self> {
        let slots = durations.iter().zip(covs).map(|(&duration, c)| Slot { duration, covariance: c.clone() }).collect();
        Self::new(slots, block_length)
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn block_length(&self) -> f64 {
        self.block_length
    }

    pub fn durations(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.duration).collect()
    }

    pub fn covariances(&self) -> Vec<Covariance> {
        self.slots.iter().map(|s| s.covariance.clone()).collect()
    }

    /// Durations non-negative and summing to the block length (1e-9
    /// relative); every covariance passes its own checks.
    pub fn check(&self) -> Result<()> {
        if !(self.block_length.is_finite() && self.block_length > 0.0) {
            return Err(Error::InvalidParameter(format!("block length must be positive, got {}", self.block_length)));
        }
        if self.slots.is_empty() {
            return Err(Error::InvalidParameter("schedule has no slots".into()));
        }
        if let Some(s) = self.slots.iter().find(|s| !(s.duration.is_finite() && s.duration >= 0.0)) {
            return Err(Error::InvalidParameter(format!("slot duration {} is negative", s.duration)));
        }
        let total: f64 = self.slots.iter().map(|s| s.duration).sum();
        if (total - self.block_length).abs() > 1e-9 * self.block_length.max(1.0) {
            return Err(Error::InvalidParameter(format!("durations sum to {total}, block length is {}", self.block_length)));
        }
        let m = self.slots[0].covariance.dim();
        for s in &self.slots {
            if s.covariance.dim() != m {
                return Err(Error::Dimension("slot covariances differ in size".into()));
            }
            s.covariance.check()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReportStatus {
    Converged,
    /// An iteration cap was reached before the stopping rule fired.
    MaxIterations,
    /// A convex subproblem returned without meeting its tolerances; the
    /// returned schedule is still feasible.
    SolverInaccurate,
}

impl fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportStatus::Converged => "converged",
            ReportStatus::MaxIterations => "max_iters",
            ReportStatus::SolverInaccurate => "solver_inaccurate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// `min_k` of [`Self::per_er_dc_energy`], mW times the block's time unit.
    pub min_dc_energy: f64,
    pub per_er_dc_energy: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Objective after initialization and after every accepted update.
    pub objective_trace: Vec<f64>,
    pub status: ReportStatus,
    pub certificates: Vec<SolverCertificate>,
}

impl SolveReport {
    fn evaluated(per_er_dc_energy: Vec<f64>) -> Self {
        let min_dc_energy = per_er_dc_energy.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            min_dc_energy,
            per_er_dc_energy,
            outer_iterations: 0,
            inner_iterations: 0,
            objective_trace: vec![min_dc_energy],
            status: ReportStatus::Converged,
            certificates: Vec::new(),
        }
    }

    /// Mean over ERs of the harvested DC energy.
    pub fn mean_dc_energy(&self) -> f64 {
        self.per_er_dc_energy.iter().sum::<f64>() / self.per_er_dc_energy.len() as f64
    }

    fn absorb(&mut self, cert: SolverCertificate) {
        if cert.status != SolverStatus::Optimal && self.status == ReportStatus::Converged {
            self.status = ReportStatus::SolverInaccurate;
        }
        self.certificates.push(cert);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Runs from both the constant multi-beam schedule and the TDMA
    /// schedule and keeps the better result.
    BestOfBaselines,
    Tdma,
    Multibeam,
    /// Equal durations with slot `n` beamed (MRT) at ER `n mod K`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSettings {
    /// Outer loop stops once a full round gains less than
    /// `epsilon_outer * T` (mW times time).
    pub epsilon_outer: f64,
    /// Inner loop stops once the trust radius falls to this value (mW RF).
    pub gamma_floor: f64,
    /// Trust radius at the start of every outer round (mW RF).
    pub gamma_init: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub init_strategy: InitStrategy,
    /// Number of slots; `None` uses one per ER.
    pub num_slots: Option<usize>,
    /// Keep the per-ER constant terms of the first-order expansion in the
    /// surrogate objective. Without them the surrogate compares ERs by
    /// their linear terms only.
    pub taylor_offsets: bool,
    pub tolerances: SolverTolerances,
}

impl AlgorithmSettings {
    /// Defaults with the initial trust radius at a quarter of the curve's
    /// inflection point.
    pub fn for_eh(eh: &EhParams) -> Self {
        Self {
            epsilon_outer: 1e-5,
            gamma_floor: 1e-3,
            gamma_init: 0.25 * eh.b(),
            max_outer: 50,
            max_inner: 60,
            init_strategy: InitStrategy::BestOfBaselines,
            num_slots: None,
            taylor_offsets: true,
            tolerances: SolverTolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_outer.is_finite() && self.epsilon_outer > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon_outer must be positive, got {}", self.epsilon_outer)));
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor < self.gamma_init && self.gamma_init.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < gamma_floor < gamma_init, got {} and {}",
                self.gamma_floor, self.gamma_init
            )));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidParameter("iteration caps must be at least 1".into()));
        }
        if self.num_slots == Some(0) {
            return Err(Error::InvalidParameter("num_slots must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        Self::for_eh(&EhParams::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Multibeam,
    Tdma,
    Isotropic,
    TimeDivision,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Multibeam, SchemeKind::Tdma, SchemeKind::Isotropic, SchemeKind::TimeDivision];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Multibeam => "multibeam",
            SchemeKind::Tdma => "tdma",
            SchemeKind::Isotropic => "isotropic",
            SchemeKind::TimeDivision => "time_division",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scheme '{s}' (expected multibeam, tdma, isotropic or time_division)")))
    }
}

/// Runs one scheme with the given settings (settings only matter for
/// time-division).
pub fn run_scheme(
    kind: SchemeKind,
    channels: &ChannelSet,
    p_max: f64,
    block_length: f64,
    eh: &EhParams,
    settings: &AlgorithmSettings,
) -> Result<(Schedule, SolveReport)> {
    match kind {
        SchemeKind::Multibeam => multibeam(channels, p_max, block_length, eh),
        SchemeKind::Tdma => tdma(channels, p_max, block_length, eh),
        SchemeKind::Isotropic => isotropic(channels.num_antennas(), p_max, block_length, channels, eh),
        SchemeKind::TimeDivision => time_division(channels, p_max, block_length, eh, settings),
    }
}

/// Per-ER harvested DC energy `sum_n tau_n Q_DC(h_k^H S_n h_k)` and its
/// minimum over ERs.
pub fn evaluate(schedule: &Schedule, channels: &ChannelSet, eh: &EhParams) -> Result<SolveReport> {
    let per_er = dc_energies(&schedule.durations(), &schedule.covariances(), channels, eh)?;
    Ok(SolveReport::evaluated(per_er))
}

fn dc_energies(durations: &[f64], covs: &[Covariance], channels: &ChannelSet, eh: &EhParams) -> Result<Vec<f64>> {
    let rf = rf_table(channels, covs)?;
    Ok(rf.iter().map(|row| row.iter().zip(durations).map(|(&q, &t)| t * eh.dc_power_unchecked(q)).sum()).collect())
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_inputs(channels: &ChannelSet, p_max: f64, block_length: f64) -> Result<()> {
    if !(p_max.is_finite() && p_max > 0.0) {
        return Err(Error::InvalidParameter(format!("p_max must be positive, got {p_max}")));
    }
    if !(block_length.is_finite() && block_length > 0.0) {
        return Err(Error::InvalidParameter(format!("block length must be positive, got {block_length}")));
    }
    if channels.num_ers() == 0 {
        return Err(Error::InvalidParameter("no energy receivers".into()));
    }
    Ok(())
}

/// One covariance held for the whole block, chosen to maximize the minimum
/// RF power.
pub fn multibeam(channels: &ChannelSet, p_max: f64, block_length: f64, eh: &EhParams) -> Result<(Schedule, SolveReport)> {
    check_inputs(channels, p_max, block_length)?;
    let (cov, cert) = solve_multibeam(channels, p_max, &SolverTolerances::default())?;
    let schedule = Schedule::single(cov, block_length)?;
    let mut report = evaluate(&schedule, channels, eh)?;
    report.absorb(cert);
    Ok((schedule, report))
}

/// One MRT slot per ER, durations from the max-min LP over the DC table.
pub fn tdma(channels: &ChannelSet, p_max: f64, block_length: f64, eh: &EhParams) -> Result<(Schedule, SolveReport)> {
    check_inputs(channels, p_max, block_length)?;
    let covs = mrt_covariances(channels, p_max, channels.num_ers())?;
    let (durations, cert) = lp_durations(channels, eh, &covs, block_length)?;
    let schedule = Schedule::from_parts(&durations, &covs, block_length)?;
    let mut report = evaluate(&schedule, channels, eh)?;
    report.absorb(cert);
    Ok((schedule, report))
}

/// `(p_max / M) I` for the whole block.
pub fn isotropic(num_antennas: usize, p_max: f64, block_length: f64, channels: &ChannelSet, eh: &EhParams) -> Result<(Schedule, SolveReport)> {
    check_inputs(channels, p_max, block_length)?;
    if num_antennas != channels.num_antennas() {
        return Err(Error::Dimension(format!("{num_antennas} antennas requested, channels have {}", channels.num_antennas())));
    }
    let schedule = Schedule::single(Covariance::isotropic(num_antennas, p_max), block_length)?;
    let report = evaluate(&schedule, channels, eh)?;
    Ok((schedule, report))
}

fn mrt_covariances(channels: &ChannelSet, p_max: f64, n_slots: usize) -> Result<Vec<Covariance>> {
    (0..n_slots).map(|n| Covariance::mrt(channels.row(n % channels.num_ers()), p_max)).collect()
}

fn dc_table(channels: &ChannelSet, eh: &EhParams, covs: &[Covariance]) -> Result<Vec<Vec<f64>>> {
    let rf = rf_table(channels, covs)?;
    Ok(rf.iter().map(|row| row.iter().map(|&q| eh.dc_power_unchecked(q)).collect()).collect())
}

fn lp_durations(channels: &ChannelSet, eh: &EhParams, covs: &[Covariance], block_length: f64) -> Result<(Vec<f64>, SolverCertificate)> {
    let table = dc_table(channels, eh, covs)?;
    let (mut durations, cert) = solve_time_lp(&table, block_length, &SolverTolerances::default())?;
    // Remove the last few ulps of drift so the schedule sums to T exactly.
    let total: f64 = durations.iter().sum();
    if total > 0.0 {
        durations.iter_mut().for_each(|t| *t *= block_length / total);
    }
    Ok((durations, cert))
}

/// Time-division energy beamforming.
///
/// Alternates between (i) covariance updates with durations fixed: the DC
/// curve is linearized at the current RF powers, the linearized max-min
/// problem is solved inside a trust region of radius `Gamma` on every RF
/// power, and the candidate is kept only if the true objective increases,
/// otherwise `Gamma` is halved; and (ii) the max-min LP over durations with
/// covariances fixed. Every accepted update increases the objective, so the
/// result is never worse than the starting schedule.
pub fn time_division(
    channels: &ChannelSet,
    p_max: f64,
    block_length: f64,
    eh: &EhParams,
    settings: &AlgorithmSettings,
) -> Result<(Schedule, SolveReport)> {
    check_inputs(channels, p_max, block_length)?;
    settings.validate()?;
    let n_slots = settings.num_slots.unwrap_or(channels.num_ers());
    let starts = match settings.init_strategy {
        InitStrategy::BestOfBaselines => vec![InitStrategy::Tdma, InitStrategy::Multibeam],
        s => vec![s],
    };
    let mut best: Option<(Schedule, SolveReport)> = None;
    let mut certs = Vec::new();
    let (mut outer, mut inner) = (0, 0);
    for start in starts {
        let (durations, covs, init_certs) = initial_schedule(start, channels, p_max, block_length, eh, n_slots)?;
        let (schedule, mut report) = ascend(channels, p_max, block_length, eh, settings, durations, covs)?;
        log::debug!("time-division from {start:?}: {:.6} after {} outer rounds", report.min_dc_energy, report.outer_iterations);
        outer += report.outer_iterations;
        inner += report.inner_iterations;
        certs.extend(init_certs);
        certs.append(&mut report.certificates);
        if best.as_ref().is_none_or(|(_, b)| report.min_dc_energy > b.min_dc_energy) {
            best = Some((schedule, report));
        }
    }
    let (schedule, mut report) = best.expect("at least one start");
    report.outer_iterations = outer;
    report.inner_iterations = inner;
    for c in certs {
        report.absorb(c);
    }
    Ok((schedule, report))
}

type Start = (Vec<f64>, Vec<Covariance>, Vec<SolverCertificate>);

fn initial_schedule(
    strategy: InitStrategy,
    channels: &ChannelSet,
    p_max: f64,
    block_length: f64,
    eh: &EhParams,
    n_slots: usize,
) -> Result<Start> {
    let uniform = vec![block_length / n_slots as f64; n_slots];
    match strategy {
        InitStrategy::Multibeam => {
            let (cov, cert) = solve_multibeam(channels, p_max, &SolverTolerances::default())?;
            Ok((uniform, vec![cov; n_slots], vec![cert]))
        }
        InitStrategy::Tdma => {
            let covs = mrt_covariances(channels, p_max, n_slots)?;
            let (durations, cert) = lp_durations(channels, eh, &covs, block_length)?;
            Ok((durations, covs, vec![cert]))
        }
        InitStrategy::Uniform => Ok((uniform, mrt_covariances(channels, p_max, n_slots)?, Vec::new())),
        InitStrategy::BestOfBaselines => Err(Error::InvalidParameter("best_of_baselines is not a single start".into())),
    }
}

fn ascend(
    channels: &ChannelSet,
    p_max: f64,
    block_length: f64,
    eh: &EhParams,
    settings: &AlgorithmSettings,
    mut durations: Vec<f64>,
    mut covs: Vec<Covariance>,
) -> Result<(Schedule, SolveReport)> {
    let k = channels.num_ers();
    let n = covs.len();
    let stall = settings.epsilon_outer * block_length;
    let mut per_er = dc_energies(&durations, &covs, channels, eh)?;
    let mut objective = min_of(&per_er);
    let mut report = SolveReport::evaluated(per_er.clone());
    report.status = ReportStatus::MaxIterations;

    for _ in 0..settings.max_outer {
        report.outer_iterations += 1;
        let round_start = objective;

        // Covariance updates with durations fixed.
        let mut gamma = settings.gamma_init;
        let mut steps = 0;
        while steps < settings.max_inner && gamma > settings.gamma_floor {
            steps += 1;
            let rf = rf_table(channels, &covs)?;
            let coefs: Vec<Vec<f64>> = rf.iter().map(|row| row.iter().map(|&q| eh.dc_power_derivative_unchecked(q)).collect()).collect();
            let offsets: Vec<f64> = (0..k)
                .map(|kk| (0..n).map(|j| durations[j] * (eh.dc_power_unchecked(rf[kk][j]) - coefs[kk][j] * rf[kk][j])).sum())
                .collect();
            let sub = ScaSubproblem {
                channels,
                p_max,
                durations: &durations,
                coefs: &coefs,
                offsets: settings.taylor_offsets.then_some(offsets.as_slice()),
                centers: &covs,
                gamma,
            };
            let base = sub.surrogate_value(&covs)?;
            let (candidate, cert) = solve_sca_subproblem(&sub, &settings.tolerances)?;
            let predicted = cert.objective - base;
            report.absorb(cert);
            report.inner_iterations += 1;

            let cand_per_er = dc_energies(&durations, &candidate, channels, eh)?;
            let cand_obj = min_of(&cand_per_er);
            if cand_obj > objective {
                let gain = cand_obj - objective;
                covs = candidate;
                per_er = cand_per_er;
                objective = cand_obj;
                report.objective_trace.push(objective);
                if gain <= 0.1 * stall {
                    break;
                }
            } else {
                // The model promises nothing worth chasing inside this radius,
                // and shrinking it can only reduce the promise further.
                if predicted <= 0.1 * stall {
                    break;
                }
                gamma *= 0.5;
            }
        }

        // Durations with covariances fixed.
        let (cand_durations, cert) = lp_durations(channels, eh, &covs, block_length)?;
        report.absorb(cert);
        let cand_per_er = dc_energies(&cand_durations, &covs, channels, eh)?;
        let cand_obj = min_of(&cand_per_er);
        if cand_obj > objective {
            durations = cand_durations;
            per_er = cand_per_er;
            objective = cand_obj;
            report.objective_trace.push(objective);
        }

        log::trace!("outer round {}: objective {objective:.9}", report.outer_iterations);
        if objective - round_start < stall {
            report.status = ReportStatus::Converged;
            break;
        }
    }

    let schedule = Schedule::from_parts(&durations, &covs, block_length)?;
    report.min_dc_energy = objective;
    report.per_er_dc_energy = per_er;
    Ok((schedule, report))
}
