//! Scenario configuration, Monte Carlo sweeps and the two-ER worked example.
//!
//! A sweep visits every `(p_max, M)` grid point and every trial, draws one
//! channel set per `(M, trial)` and runs each enabled scheme on it. Rows are
//! emitted in `(p_max, M, trial, scheme)` order whatever the thread count, so
//! output bytes depend only on the configuration.

use crate::channel::{example1_channels, sample_channels, ChannelConfig, ChannelSet};
use crate::eh_model::{EhConfig, EhParams};
use crate::error::{Error, Result};
use crate::schemes::{run_scheme, AlgorithmSettings, InitStrategy, ReportStatus, Schedule, SchemeKind, SolveReport};
use crate::solver_kernels::SolverTolerances;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// Transmit power in W for a level in dBm.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Algorithm knobs as they appear in configuration files. Unset entries
/// take the defaults of [`AlgorithmSettings::for_eh`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub epsilon_outer: Option<f64>,
    pub gamma_floor: Option<f64>,
    pub gamma_init: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub init_strategy: Option<InitStrategy>,
    pub num_slots: Option<usize>,
    pub taylor_offsets: Option<bool>,
    pub feas_tol: Option<f64>,
    pub opt_tol: Option<f64>,
    pub solver_max_iters: Option<usize>,
}

impl AlgorithmConfig {
    pub fn to_settings(&self, eh: &EhParams) -> Result<AlgorithmSettings> {
        let mut s = AlgorithmSettings::for_eh(eh);
        let d = SolverTolerances::default();
        s.epsilon_outer = self.epsilon_outer.unwrap_or(s.epsilon_outer);
        s.gamma_floor = self.gamma_floor.unwrap_or(s.gamma_floor);
        s.gamma_init = self.gamma_init.unwrap_or(s.gamma_init);
        s.max_outer = self.max_outer.unwrap_or(s.max_outer);
        s.max_inner = self.max_inner.unwrap_or(s.max_inner);
        s.init_strategy = self.init_strategy.unwrap_or(s.init_strategy);
        s.num_slots = self.num_slots.or(s.num_slots);
        s.taylor_offsets = self.taylor_offsets.unwrap_or(s.taylor_offsets);
        s.tolerances = SolverTolerances {
            feas_tol: self.feas_tol.unwrap_or(d.feas_tol),
            opt_tol: self.opt_tol.unwrap_or(d.opt_tol),
            max_iters: self.solver_max_iters.unwrap_or(d.max_iters),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Sweep description, read from TOML. Every key is optional; defaults
/// reproduce the 30-ER, 4-antenna, `K_R = 5 dB`, 4 m setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub num_ers: usize,
    pub num_trials: usize,
    pub seed: u64,
    pub block_length: f64,
    pub p_max_dbm_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub schemes: Vec<SchemeKind>,
    pub eh: EhConfig,
    pub channel: ChannelConfig,
    pub algorithm: AlgorithmConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            num_ers: 30,
            num_trials: 200,
            seed: 0,
            block_length: 1.0,
            p_max_dbm_grid: (0..=10).map(|i| 30.0 + 2.0 * i as f64).collect(),
            m_grid: vec![4],
            schemes: SchemeKind::ALL.to_vec(),
            eh: EhConfig::default(),
            channel: ChannelConfig::default(),
            algorithm: AlgorithmConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.p_max_dbm_grid.is_empty() || self.m_grid.is_empty() {
            return Err(Error::Config("p_max_dbm_grid and m_grid must be non-empty".into()));
        }
        if self.p_max_dbm_grid.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("p_max_dbm_grid entries must be finite".into()));
        }
        if self.m_grid.contains(&0) || self.num_ers == 0 {
            return Err(Error::Config("need at least one antenna and one ER".into()));
        }
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        if !(self.block_length.is_finite() && self.block_length > 0.0) {
            return Err(Error::Config(format!("block_length must be positive, got {}", self.block_length)));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes enabled".into()));
        }
        let mut seen = self.schemes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.schemes.len() {
            return Err(Error::Config("schemes lists a scheme twice".into()));
        }
        self.eh_params()?;
        self.channel.to_params(self.num_ers, self.m_grid[0])?;
        self.settings()?;
        Ok(())
    }

    pub fn eh_params(&self) -> Result<EhParams> {
        EhParams::try_from(self.eh)
    }

    pub fn settings(&self) -> Result<AlgorithmSettings> {
        self.algorithm.to_settings(&self.eh_params()?)
    }

    /// Channel draw for trial `trial` with `m` antennas.
    pub fn channels(&self, m: usize, trial: usize) -> Result<ChannelSet> {
        let model = self.channel.to_params(self.num_ers, m)?;
        sample_channels(&model, trial_seed(self.seed, m, trial))
    }
}

/// Per-trial seed from the sweep seed, antenna count and trial index
/// (SplitMix64 finalizer over a running combination). All power levels of a
/// trial share a channel draw.
pub fn trial_seed(seed: u64, num_antennas: usize, trial: usize) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ num_antennas as u64);
    splitmix(h ^ trial as u64)
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One raw CSV row. Energies are divided by the block length, so they read
/// as average DC power in mW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub p_max_dbm: f64,
    pub num_antennas: usize,
    pub trial: usize,
    pub scheme: SchemeKind,
    pub min_dc_mw: Option<f64>,
    pub mean_dc_mw: Option<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Report status, or `error: <message>` when the scheme failed.
    pub status: String,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub p_max_dbm: f64,
    pub num_antennas: usize,
    pub scheme: SchemeKind,
    pub mean_min_dc_mw: f64,
    /// Standard error of the mean; zero with fewer than two trials.
    pub stderr: f64,
    /// Trials that produced a value.
    pub n: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Fill the `wall_ms` column. Off by default because timings break
    /// byte-identical reruns.
    pub timing: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub raw: Vec<TrialRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutput {
    pub fn write_raw_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(&self.raw, w)
    }

    pub fn write_aggregate_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(&self.aggregate, w)
    }

    /// Writes `raw.csv` and `aggregate.csv` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_raw_csv(std::fs::File::create(dir.join("raw.csv"))?)?;
        self.write_aggregate_csv(std::fs::File::create(dir.join("aggregate.csv"))?)?;
        Ok(())
    }
}

fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: std::io::Read>(r: R) -> Result<Vec<TrialRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_aggregate_csv<R: std::io::Read>(r: R) -> Result<Vec<AggregateRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs the configured sweep. Scheme failures become rows with an `error`
/// status; only configuration problems abort.
pub fn run_sweep(config: &ScenarioConfig, opts: &SweepOptions) -> Result<SweepOutput> {
    config.validate()?;
    let eh = config.eh_params()?;
    let settings = config.settings()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;

    let cells: Vec<(usize, usize)> =
        (0..config.m_grid.len()).flat_map(|mi| (0..config.num_trials).map(move |t| (mi, t))).collect();
    // Each work item covers every power level of one (M, trial) pair.
    let per_cell: Vec<Vec<Vec<TrialRow>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(mi, trial)| run_cell(config, &eh, &settings, config.m_grid[mi], trial, opts.timing))
            .collect()
    });

    let np = config.p_max_dbm_grid.len();
    let nm = config.m_grid.len();
    let nt = config.num_trials;
    let mut raw = Vec::with_capacity(np * nm * nt * config.schemes.len());
    for pi in 0..np {
        for mi in 0..nm {
            for t in 0..nt {
                raw.extend(per_cell[mi * nt + t][pi].iter().cloned());
            }
        }
    }

    let aggregate = streaming_aggregate(&raw);
    check_consistency(&raw, &aggregate)?;
    log::info!("sweep finished: {} rows, {} grid points", raw.len(), aggregate.len());
    Ok(SweepOutput { raw, aggregate })
}

fn run_cell(
    config: &ScenarioConfig,
    eh: &EhParams,
    settings: &AlgorithmSettings,
    m: usize,
    trial: usize,
    timing: bool,
) -> Vec<Vec<TrialRow>> {
    let channels = config.channels(m, trial);
    config
        .p_max_dbm_grid
        .iter()
        .map(|&dbm| {
            config
                .schemes
                .iter()
                .map(|&scheme| {
                    let start = Instant::now();
                    let result = channels
                        .as_ref()
                        .map_err(|e| Error::Numerical(e.to_string()))
                        .and_then(|ch| run_scheme(scheme, ch, dbm_to_watts(dbm), config.block_length, eh, settings));
                    let wall_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
                    let mut row = TrialRow {
                        p_max_dbm: dbm,
                        num_antennas: m,
                        trial,
                        scheme,
                        min_dc_mw: None,
                        mean_dc_mw: None,
                        outer_iters: 0,
                        inner_iters: 0,
                        status: String::new(),
                        wall_ms,
                    };
                    match result {
                        Ok((_, r)) => {
                            row.min_dc_mw = Some(r.min_dc_energy / config.block_length);
                            row.mean_dc_mw = Some(r.mean_dc_energy() / config.block_length);
                            row.outer_iters = r.outer_iterations;
                            row.inner_iters = r.inner_iterations;
                            row.status = r.status.to_string();
                        }
                        Err(e) => {
                            log::warn!("{scheme} failed at {dbm} dBm, M = {m}, trial {trial}: {e}");
                            row.status = format!("error: {e}");
                        }
                    }
                    row
                })
                .collect()
        })
        .collect()
}

type GroupKey = (usize, usize, SchemeKind);

/// Running-moment aggregation in row order.
fn streaming_aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    // (p_max_dbm, n, mean, M2) per group, keyed by first appearance.
    let mut order: Vec<GroupKey> = Vec::new();
    let mut acc: BTreeMap<GroupKey, (f64, usize, f64, f64)> = BTreeMap::new();
    let mut p_index: Vec<f64> = Vec::new();
    for r in rows {
        let pi = p_index.iter().position(|&p| p == r.p_max_dbm).unwrap_or_else(|| {
            p_index.push(r.p_max_dbm);
            p_index.len() - 1
        });
        let key = (pi, r.num_antennas, r.scheme);
        let e = acc.entry(key).or_insert_with(|| {
            order.push(key);
            (r.p_max_dbm, 0, 0.0, 0.0)
        });
        if let Some(v) = r.min_dc_mw {
            e.1 += 1;
            let d = v - e.2;
            e.2 += d / e.1 as f64;
            e.3 += d * (v - e.2);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let (p, n, mean, m2) = acc[&key];
            let stderr = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
            AggregateRow { p_max_dbm: p, num_antennas: key.1, scheme: key.2, mean_min_dc_mw: if n > 0 { mean } else { f64::NAN }, stderr, n }
        })
        .collect()
}

/// Recomputes every aggregate from the raw rows with a two-pass formula and
/// checks it against `aggregate`. Also checks that each group has the same
/// number of rows.
pub fn check_consistency(raw: &[TrialRow], aggregate: &[AggregateRow]) -> Result<()> {
    let mut rows_per_group: Option<usize> = None;
    for a in aggregate {
        let group: Vec<&TrialRow> = raw
            .iter()
            .filter(|r| r.p_max_dbm == a.p_max_dbm && r.num_antennas == a.num_antennas && r.scheme == a.scheme)
            .collect();
        match rows_per_group {
            None => rows_per_group = Some(group.len()),
            Some(c) if c != group.len() => {
                return Err(Error::Numerical(format!(
                    "group ({} dBm, M = {}, {}) has {} rows, expected {c}",
                    a.p_max_dbm,
                    a.num_antennas,
                    a.scheme,
                    group.len()
                )))
            }
            _ => {}
        }
        let vals: Vec<f64> = group.iter().filter_map(|r| r.min_dc_mw).collect();
        let n = vals.len();
        if n != a.n {
            return Err(Error::Numerical(format!("aggregate n = {} but {n} raw values", a.n)));
        }
        if n == 0 {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let stderr = (var / n as f64).sqrt();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-12);
        if !close(mean, a.mean_min_dc_mw) || !close(stderr, a.stderr) {
            return Err(Error::Numerical(format!(
                "aggregate mismatch at ({} dBm, M = {}, {}): mean {} vs {mean}, stderr {} vs {stderr}",
                a.p_max_dbm, a.num_antennas, a.scheme, a.mean_min_dc_mw, a.stderr
            )));
        }
    }
    let covered: usize = aggregate.len() * rows_per_group.unwrap_or(0);
    if covered != raw.len() {
        return Err(Error::Numerical(format!("{} raw rows but aggregates cover {covered}", raw.len())));
    }
    Ok(())
}

/// Schedules and reports for every enabled scheme on one channel draw.
pub fn solve_instance(
    config: &ScenarioConfig,
    p_max_dbm: f64,
    num_antennas: usize,
    trial: usize,
) -> Result<Vec<(SchemeKind, Schedule, SolveReport)>> {
    config.validate()?;
    let eh = config.eh_params()?;
    let settings = config.settings()?;
    let ch = config.channels(num_antennas, trial)?;
    config
        .schemes
        .iter()
        .map(|&k| run_scheme(k, &ch, dbm_to_watts(p_max_dbm), config.block_length, &eh, &settings).map(|(s, r)| (k, s, r)))
        .collect()
}

/// One scheme's outcome on the two-ER example.
#[derive(Debug, Clone)]
pub struct Example1Row {
    pub scheme: SchemeKind,
    pub durations: Vec<f64>,
    /// `[k][n]`: RF power (mW) at ER `k` in slot `n`.
    pub rf_mw: Vec<Vec<f64>>,
    /// Average DC power per ER over the block, mW.
    pub dc_mw: Vec<f64>,
    pub min_dc_mw: f64,
    pub status: ReportStatus,
}

#[derive(Debug, Clone)]
pub struct Example1Report {
    pub rows: Vec<Example1Row>,
}

impl Example1Report {
    pub fn row(&self, scheme: SchemeKind) -> Option<&Example1Row> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }

    /// Published values: 1.5 mW RF and 0.9127 mW DC per ER for the
    /// multi-beam design, equal halves and 0.9833 mW for TDMA, and
    /// time-division no worse than TDMA. Reports every mismatch.
    pub fn check(&self) -> Result<()> {
        let mut failures = Vec::new();
        let mut expect = |what: &str, actual: f64, expected: f64, tol: f64| {
            if !((actual - expected).abs() <= tol) {
                failures.push(format!("{what}: expected {expected} +/- {tol}, got {actual}"));
            }
        };
        let get = |s| self.row(s).ok_or_else(|| Error::Numerical(format!("no {s} row")));
        let mb = get(SchemeKind::Multibeam)?;
        for k in 0..mb.rf_mw.len() {
            expect(&format!("multibeam RF at ER {}", k + 1), mb.rf_mw[k][0], 1.5, 1e-3);
            expect(&format!("multibeam DC at ER {}", k + 1), mb.dc_mw[k], 0.9127, 1e-3);
        }
        let td = get(SchemeKind::Tdma)?;
        for (n, &t) in td.durations.iter().enumerate() {
            expect(&format!("tdma duration {}", n + 1), t, 0.5, 1e-6);
        }
        expect("tdma min DC", td.min_dc_mw, 0.9833, 1e-3);
        // 0.9833 is Q_DC(3 mW) / 2 rounded to four digits, and no schedule can
        // beat Q_DC(3 mW) / 2 here, so time-division is held to the unrounded
        // TDMA value.
        let tdiv = get(SchemeKind::TimeDivision)?;
        if tdiv.min_dc_mw < td.min_dc_mw - 1e-6 {
            failures.push(format!("time_division min DC: expected >= {}, got {}", td.min_dc_mw - 1e-6, tdiv.min_dc_mw));
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(Error::Numerical(failures.join("; ")))
        }
    }
}

impl fmt::Display for Example1Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:<20} {:<32} {:<20} {:>10}", "scheme", "durations", "rf_mw[er][slot]", "dc_mw[er]", "min_dc_mw")?;
        for r in &self.rows {
            let list = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
            let rf = r.rf_mw.iter().map(|row| format!("[{}]", list(row))).collect::<Vec<_>>().join(" ");
            writeln!(f, "{:<14} {:<20} {:<32} {:<20} {:>10.4}", r.scheme.name(), list(&r.durations), rf, list(&r.dc_mw), r.min_dc_mw)?;
        }
        Ok(())
    }
}

/// Runs all four schemes on the two-ER orthogonal example at 15 W, `T = 1`.
pub fn run_example1() -> Result<Example1Report> {
    let ch = example1_channels();
    let eh = EhParams::default();
    let settings = AlgorithmSettings::for_eh(&eh);
    let rows = SchemeKind::ALL
        .iter()
        .map(|&scheme| {
            let (schedule, report) = run_scheme(scheme, &ch, 15.0, 1.0, &eh, &settings)?;
            let covs = schedule.covariances();
            let rf_mw = crate::solver_kernels::rf_table(&ch, &covs)?;
            Ok(Example1Row {
                scheme,
                durations: schedule.durations(),
                rf_mw,
                dc_mw: report.per_er_dc_energy.clone(),
                min_dc_mw: report.min_dc_energy,
                status: report.status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Example1Report { rows })
}
