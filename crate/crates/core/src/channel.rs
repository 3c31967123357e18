//! Channel sets for the energy transmitter.
//!
//! Row `k` of a [`ChannelSet`] stores the channel vector `h_k` itself (not
//! its conjugate), so the RF power received by ER `k` under transmit
//! covariance `S` is `h_k^H S h_k`. Entries are amplitudes: with `S` in W,
//! `h_k^H S h_k` is in W, and `rf_unit_scale` converts it to the mW scale of
//! the harvesting curve.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, CMat};

/// Watts to milliwatts.
pub const W_TO_MW: f64 = 1e3;

/// Rician factor above which the scattered component is dropped entirely.
const PURE_LOS_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    rows: Vec<Vec<Complex64>>,
    rf_unit_scale: f64,
}

impl ChannelSet {
    pub fn new(rows: Vec<Vec<Complex64>>, rf_unit_scale: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("channel set needs at least one ER".into()));
        }
        let m = rows[0].len();
        if m == 0 {
            return Err(Error::InvalidParameter("channel set needs at least one antenna".into()));
        }
        for (k, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::Dimension(format!("row {k} has {} entries, expected {m}", r.len())));
            }
            if r.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::InvalidParameter(format!("row {k} has non-finite entries")));
            }
            if r.iter().all(|c| c.norm_sqr() == 0.0) {
                return Err(Error::InvalidParameter(format!("channel row {k} is all zero")));
            }
        }
        if !(rf_unit_scale.is_finite() && rf_unit_scale > 0.0) {
            return Err(Error::InvalidParameter(format!("rf_unit_scale must be positive, got {rf_unit_scale}")));
        }
        Ok(Self { rows, rf_unit_scale })
    }

    pub fn num_ers(&self) -> usize {
        self.rows.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rf_unit_scale(&self) -> f64 {
        self.rf_unit_scale
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    /// `||h_k||^2` in the channel's native units.
    pub fn gain(&self, k: usize) -> f64 {
        self.rows[k].iter().map(|c| c.norm_sqr()).sum()
    }

    /// Received RF power at ER `k`, mW, for a covariance in W.
    pub fn rf_power_mw(&self, k: usize, s: &CMat) -> Result<f64> {
        if s.nrows() != self.num_antennas() || s.ncols() != self.num_antennas() {
            return Err(Error::Dimension(format!(
                "covariance is {}x{}, channel has {} antennas",
                s.nrows(),
                s.ncols(),
                self.num_antennas()
            )));
        }
        let q = quad_form(&self.rows[k], s);
        let tr: f64 = (0..s.nrows()).map(|i| s[(i, i)].re.abs()).sum();
        if q.im.abs() > 1e-10 * tr.max(f64::MIN_POSITIVE) * self.gain(k).max(1.0) {
            return Err(Error::Numerical(format!("quadratic form has imaginary part {:e}", q.im)));
        }
        Ok((q.re * self.rf_unit_scale).max(0.0))
    }

    /// Same channel set with rows reordered: row `i` of the result is row
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_ers() {
            return Err(Error::Dimension("permutation length differs from ER count".into()));
        }
        let rows = perm
            .iter()
            .map(|&p| self.rows.get(p).cloned().ok_or_else(|| Error::OutOfRange(format!("ER index {p}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, self.rf_unit_scale)
    }

    /// Writes `er_index,antenna_index,re,im` rows with a header. Floats use
    /// the shortest round-trip representation so a replay is bit-exact.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wr.write_record(["er_index", "antenna_index", "re", "im"])?;
        for (k, row) in self.rows.iter().enumerate() {
            for (m, c) in row.iter().enumerate() {
                wr.write_record([k.to_string(), m.to_string(), c.re.to_string(), c.im.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Inverse of [`Self::write_csv`].
    pub fn read_csv<R: Read>(r: R, rf_unit_scale: f64) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut entries: Vec<(usize, usize, Complex64)> = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Parse(format!("expected 4 columns, got {}", rec.len())));
            }
            let parse_usize = |i: usize| rec[i].trim().parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
            let parse_f64 = |i: usize| rec[i].trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
            entries.push((parse_usize(0)?, parse_usize(1)?, Complex64::new(parse_f64(2)?, parse_f64(3)?)));
        }
        let k = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let m = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        if entries.len() != k * m {
            return Err(Error::Parse(format!("expected {} entries for a {k}x{m} channel set, got {}", k * m, entries.len())));
        }
        let mut rows = vec![vec![Complex64::new(f64::NAN, 0.0); m]; k];
        for (i, j, c) in entries {
            rows[i][j] = c;
        }
        if rows.iter().flatten().any(|c| c.re.is_nan()) {
            return Err(Error::Parse("duplicate or missing channel entries".into()));
        }
        Self::new(rows, rf_unit_scale)
    }
}

/// Link-budget and array geometry for random channel generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModelParams {
    /// Linear LOS-to-scattered power ratio.
    pub rician_factor: f64,
    pub distance_m: f64,
    /// Power gain at the 1 m reference distance.
    pub ref_gain: f64,
    pub pathloss_exp: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    /// Element spacing over wavelength.
    pub element_spacing_ratio: f64,
    pub num_ers: usize,
    pub num_antennas: usize,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        ChannelConfig::default().to_params(30, 4).expect("default channel model is valid")
    }
}

impl ChannelModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rician_factor >= 0.0) {
            return Err(Error::InvalidParameter(format!("rician_factor must be >= 0, got {}", self.rician_factor)));
        }
        for (name, v) in [("distance_m", self.distance_m), ("ref_gain", self.ref_gain)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.pathloss_exp.is_finite() || !self.tx_gain_dbi.is_finite() || !self.rx_gain_dbi.is_finite() {
            return Err(Error::InvalidParameter("link budget terms must be finite".into()));
        }
        if !self.element_spacing_ratio.is_finite() {
            return Err(Error::InvalidParameter("element spacing must be finite".into()));
        }
        if self.num_ers == 0 || self.num_antennas == 0 {
            return Err(Error::InvalidParameter("need at least one ER and one antenna".into()));
        }
        Ok(())
    }

    /// Average per-entry channel power gain, antenna gains included.
    pub fn average_gain(&self) -> f64 {
        10f64.powf((self.tx_gain_dbi + self.rx_gain_dbi) / 10.0) * self.ref_gain * self.distance_m.powf(-self.pathloss_exp)
    }

    /// Direction of ER `k` (zero-based) seen from the array, radians.
    pub fn direction(&self, k: usize) -> f64 {
        -5.0 / 12.0 * PI + 2.0 / self.num_ers as f64 * PI * k as f64
    }

    /// Phase progression across the array for ER `k`.
    pub fn phase_step(&self, k: usize) -> f64 {
        -2.0 * PI * self.element_spacing_ratio * self.direction(k).sin()
    }

    pub fn with_antennas(&self, m: usize) -> Self {
        Self { num_antennas: m, ..self.clone() }
    }
}

/// LOS steering row for ER `k` (zero-based).
pub fn los_row(model: &ChannelModelParams, k: usize) -> Result<Vec<Complex64>> {
    if k >= model.num_ers {
        return Err(Error::OutOfRange(format!("ER index {k} with {} ERs", model.num_ers)));
    }
    let amp = model.average_gain().sqrt();
    let theta = model.phase_step(k);
    Ok((0..model.num_antennas).map(|m| Complex64::from_polar(amp, theta * m as f64)).collect())
}

/// Draws a Rician channel set. Each ER uses its own ChaCha stream keyed by
/// `(seed, k)`, so a row never depends on how many other rows are drawn.
pub fn sample_channels(model: &ChannelModelParams, seed: u64) -> Result<ChannelSet> {
    model.validate()?;
    let g = model.average_gain();
    let kr = model.rician_factor;
    let (w_los, w_nlos) = if kr >= PURE_LOS_FACTOR { (1.0, 0.0) } else { ((kr / (1.0 + kr)).sqrt(), (1.0 / (1.0 + kr)).sqrt()) };
    let normal = Normal::new(0.0, (g / 2.0).sqrt()).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rows = Vec::with_capacity(model.num_ers);
    for k in 0..model.num_ers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let los = los_row(model, k)?;
        let row = los
            .into_iter()
            .map(|l| {
                let nlos = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                l * w_los + nlos * w_nlos
            })
            .collect();
        rows.push(row);
    }
    ChannelSet::new(rows, W_TO_MW)
}

/// The two-ER, four-antenna orthogonal scenario with equal channel norms.
///
/// The listed per-entry values `1e-4` are read as power gains, i.e.
/// amplitudes of `1e-2`, so that MRT at 15 W delivers exactly 3 mW.
pub fn example1_channels() -> ChannelSet {
    let a = Complex64::new(1e-2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    ChannelSet::new(vec![vec![a, a, z, z], vec![z, z, a, a]], W_TO_MW).expect("fixed scenario is valid")
}

/// Plain-data channel model inputs as they appear in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub rician_factor_db: f64,
    pub distance_m: f64,
    pub ref_gain_db: f64,
    pub pathloss_exp: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub element_spacing_ratio: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            rician_factor_db: 5.0,
            distance_m: 4.0,
            ref_gain_db: -30.0,
            pathloss_exp: 3.0,
            tx_gain_dbi: 10.0,
            rx_gain_dbi: 2.8,
            element_spacing_ratio: 0.5,
        }
    }
}

impl ChannelConfig {
    pub fn to_params(&self, num_ers: usize, num_antennas: usize) -> Result<ChannelModelParams> {
        let p = ChannelModelParams {
            rician_factor: 10f64.powf(self.rician_factor_db / 10.0),
            distance_m: self.distance_m,
            ref_gain: 10f64.powf(self.ref_gain_db / 10.0),
            pathloss_exp: self.pathloss_exp,
            tx_gain_dbi: self.tx_gain_dbi,
            rx_gain_dbi: self.rx_gain_dbi,
            element_spacing_ratio: self.element_spacing_ratio,
            num_ers,
            num_antennas,
        };
        p.validate()?;
        Ok(p)
    }
}
