//! Synthetic frequency-selective MIMO channels.
//!
//! Each realization is a sum of plane-wave paths between an 8-element
//! transmit ULA and a 4-element receive ULA (half-wavelength spacing). Path
//! `p` contributes `g_p * exp(-j*2*pi*tau_p*k/70) * a_rx(phi_p) * a_tx(theta_p)^H`
//! on sub-band `k`. When `los_power_fraction > 0` one zero-delay path carries
//! that fraction of the power; the remaining paths share the rest with an
//! exponential power-delay profile. Complex Gaussian noise is added per entry
//! at `snr_db` (`+inf` disables it).
//!
//! 68 physical sub-bands are generated; sub-bands 68 and 69 are copies of 66
//! and 67 so the band splits into five 14-sub-band encoder blocks.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::{Complex64, N_PHYSICAL_SUBBANDS, N_RX, N_SUBBANDS, N_TX};

/// One sub-band's `N_RX x N_TX` channel matrix.
pub type SubbandMatrix = [[Complex64; N_TX]; N_RX];

const CHANNEL_MAGIC: &[u8; 4] = b"CSCH";
const CHANNEL_VERSION: u16 = 1;

/// Departure angles of the dominant direction are drawn from +-60 degrees.
const TX_SECTOR_DEG: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_paths: usize,
    /// Fraction of total power on the zero-delay line-of-sight path.
    pub los_power_fraction: f64,
    /// Standard deviation of scattered departure angles around the dominant one.
    pub angle_spread_deg: f64,
    /// Mean excess delay, expressed as phase cycles across the 70-sub-band span.
    pub delay_spread_subbands: f64,
    /// Per-entry SNR; `inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Named presets: `los` (LOS-heavy), `nlos` (NLOS-heavy) and `mixed`.
    ///
    /// These are synthetic stand-ins, not calibrated to any measured site.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let (n_paths, los, spread, delay, snr) = match name {
            "los" | "los-heavy" => (6, 0.75, 8.0, 1.5, 25.0),
            "nlos" | "nlos-heavy" => (10, 0.0, 20.0, 3.0, 15.0),
            "mixed" => (8, 0.45, 12.0, 2.0, 20.0),
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario preset {other:?} (expected los, nlos or mixed)"
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            n_paths,
            los_power_fraction: los,
            angle_spread_deg: spread,
            delay_spread_subbands: delay,
            snr_db: snr,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if !self.los_power_fraction.is_finite() || !(0.0..=1.0).contains(&self.los_power_fraction)
        {
            return Err(Error::Config(format!(
                "los_power_fraction {} outside [0, 1]",
                self.los_power_fraction
            )));
        }
        if !self.angle_spread_deg.is_finite() || self.angle_spread_deg <= 0.0 {
            return Err(Error::Config("angle_spread_deg must be finite and > 0".into()));
        }
        if !self.delay_spread_subbands.is_finite() || self.delay_spread_subbands <= 0.0 {
            return Err(Error::Config("delay_spread_subbands must be finite and > 0".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("snr_db must be a number or +inf".into()));
        }
        Ok(())
    }

    /// Per-entry noise variance relative to unit channel power.
    pub fn noise_power(&self) -> f64 {
        if self.snr_db.is_infinite() {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// `[sub-band][rx][tx]`.
    pub h: Vec<SubbandMatrix>,
    pub scenario_name: String,
    pub realization_id: u64,
}

impl ChannelRealization {
    pub fn subband(&self, k: usize) -> &SubbandMatrix {
        &self.h[k]
    }

    pub fn validate(&self) -> Result<()> {
        if self.h.len() != N_SUBBANDS {
            return Err(Error::Shape(format!(
                "channel has {} sub-bands, expected {N_SUBBANDS}",
                self.h.len()
            )));
        }
        let finite = self
            .h
            .iter()
            .flatten()
            .flatten()
            .all(|c| c.re.is_finite() && c.im.is_finite());
        if !finite {
            return Err(Error::NonFinite(format!("channel {}", self.realization_id)));
        }
        Ok(())
    }
}

/// Half-wavelength ULA steering vector, unit-modulus entries.
pub fn steering<const N: usize>(angle_rad: f64) -> [Complex64; N] {
    let phase = -PI * angle_rad.sin();
    std::array::from_fn(|n| Complex64::from_polar(1.0, phase * n as f64))
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

struct Path {
    gain: Complex64,
    delay: f64,
    a_rx: [Complex64; N_RX],
    a_tx: [Complex64; N_TX],
}

fn draw_paths(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<Path> {
    let deg = PI / 180.0;
    let tx_center = rng.random_range(-TX_SECTOR_DEG..TX_SECTOR_DEG) * deg;
    let rx_center = rng.random_range(-90.0..90.0) * deg;
    let has_los = cfg.los_power_fraction > 0.0;
    let delay_dist = Exp::new(1.0 / cfg.delay_spread_subbands).expect("positive delay spread");

    let mut paths = Vec::with_capacity(cfg.n_paths);
    let mut scattered_weights = Vec::with_capacity(cfg.n_paths);
    for p in 0..cfg.n_paths {
        if p == 0 && has_los {
            let phase = rng.random_range(0.0..2.0 * PI);
            paths.push(Path {
                gain: Complex64::from_polar(1.0, phase),
                delay: 0.0,
                a_rx: steering(rx_center),
                a_tx: steering(tx_center),
            });
            continue;
        }
        let offset: f64 = StandardNormal.sample(rng);
        let theta = tx_center + offset * cfg.angle_spread_deg * deg;
        let phi = rng.random_range(-90.0..90.0) * deg;
        let delay: f64 = delay_dist.sample(rng);
        scattered_weights.push((-delay / cfg.delay_spread_subbands).exp());
        paths.push(Path {
            gain: complex_normal(rng),
            delay,
            a_rx: steering(phi),
            a_tx: steering(theta),
        });
    }

    // Scale to unit mean power per entry: LOS gets its fraction (all of it if
    // it is the only path), scattered paths split the remainder by weight.
    let scattered_power = if has_los && cfg.n_paths > 1 {
        1.0 - cfg.los_power_fraction
    } else if has_los {
        0.0
    } else {
        1.0
    };
    let los_power = 1.0 - scattered_power;
    let weight_sum: f64 = scattered_weights.iter().sum();
    let mut weights = scattered_weights.into_iter();
    for (p, path) in paths.iter_mut().enumerate() {
        let power = if p == 0 && has_los {
            los_power
        } else {
            scattered_power * weights.next().unwrap_or(0.0) / weight_sum
        };
        path.gain *= power.sqrt();
    }
    paths
}

/// Generates one channel realization, deterministic in `(cfg.seed, realization_id)`.
pub fn generate_channel(cfg: &ScenarioConfig, realization_id: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(realization_id);

    let paths = draw_paths(cfg, &mut rng);
    let noise_std = cfg.noise_power().sqrt();

    let mut h = Vec::with_capacity(N_SUBBANDS);
    for k in 0..N_PHYSICAL_SUBBANDS {
        let mut m = [[Complex64::new(0.0, 0.0); N_TX]; N_RX];
        for path in &paths {
            let rot = Complex64::from_polar(1.0, -2.0 * PI * path.delay * k as f64 / N_SUBBANDS as f64);
            let g = path.gain * rot;
            for (r, row) in m.iter_mut().enumerate() {
                let gr = g * path.a_rx[r];
                for (t, entry) in row.iter_mut().enumerate() {
                    *entry += gr * path.a_tx[t].conj();
                }
            }
        }
        if noise_std > 0.0 {
            for entry in m.iter_mut().flatten() {
                *entry += complex_normal(&mut rng) * noise_std;
            }
        }
        h.push(m);
    }
    for k in N_PHYSICAL_SUBBANDS..N_SUBBANDS {
        h.push(h[k - 2]);
    }

    let realization = ChannelRealization {
        h,
        scenario_name: cfg.name.clone(),
        realization_id,
    };
    realization.validate()?;
    Ok(realization)
}

/// Lazily generated realizations with ids `0..count`.
#[derive(Debug, Clone)]
pub struct DatasetIter {
    cfg: ScenarioConfig,
    next: u64,
    count: u64,
}

impl Iterator for DatasetIter {
    type Item = ChannelRealization;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let id = self.next;
        self.next += 1;
        // The config was validated when the iterator was built.
        Some(generate_channel(&self.cfg, id).expect("validated scenario"))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.count - self.next) as usize;
        (left, Some(left))
    }
}

impl ExactSizeIterator for DatasetIter {}

pub fn generate_dataset(cfg: &ScenarioConfig, count: usize) -> Result<DatasetIter> {
    if count == 0 {
        return Err(Error::InvalidInput("dataset count must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(DatasetIter {
        cfg: cfg.clone(),
        next: 0,
        count: count as u64,
    })
}

/// Writes realizations in the `CSCH` format. The count is taken from the slice.
pub fn write_channels<W: Write>(out: W, channels: &[ChannelRealization]) -> Result<()> {
    let mut w = LeWriter::new(out);
    w.bytes(CHANNEL_MAGIC)?;
    w.u16(CHANNEL_VERSION)?;
    w.u32(u32::try_from(channels.len()).map_err(|_| Error::InvalidInput("too many channels".into()))?)?;
    w.u16(N_SUBBANDS as u16)?;
    w.u16(N_RX as u16)?;
    w.u16(N_TX as u16)?;
    for ch in channels {
        ch.validate()?;
        for entry in ch.h.iter().flatten().flatten() {
            w.f32(entry.re as f32)?;
            w.f32(entry.im as f32)?;
        }
        w.u64(ch.realization_id)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a `CSCH` file. Values come back at f32 precision.
pub fn read_channels<R: Read>(input: R, scenario_name: &str) -> Result<Vec<ChannelRealization>> {
    let mut r = LeReader::new(input);
    r.magic(CHANNEL_MAGIC)?;
    let version = r.u16()?;
    if version != CHANNEL_VERSION {
        return Err(Error::Version(version));
    }
    let count = r.u32()? as usize;
    let dims = (r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
    if dims != (N_SUBBANDS, N_RX, N_TX) {
        return Err(Error::Shape(format!("channel file dims {dims:?}")));
    }
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut h = vec![[[Complex64::new(0.0, 0.0); N_TX]; N_RX]; N_SUBBANDS];
        for entry in h.iter_mut().flatten().flatten() {
            let re = r.f32()? as f64;
            let im = r.f32()? as f64;
            *entry = Complex64::new(re, im);
        }
        let realization_id = r.u64()?;
        let ch = ChannelRealization {
            h,
            scenario_name: scenario_name.to_string(),
            realization_id,
        };
        ch.validate()?;
        out.push(ch);
    }
    r.expect_eof()?;
    Ok(out)
}
