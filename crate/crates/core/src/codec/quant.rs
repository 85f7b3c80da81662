//! Scalar latent quantiser with a codebook shared by both link ends.

use std::io::{Read, Write};

use crate::binio::{LeReader, LeWriter};
use crate::error::{Error, Result};
use crate::LATENT_DIM;

const CODEBOOK_MAGIC: &[u8; 4] = b"CSQC";
const CODEBOOK_VERSION: u16 = 1;

/// Cell edges and reconstruction levels.
///
/// Levels are the midpoints of the cells formed by the edges extended with
/// the domain bounds, so the bounds are implied by the outermost levels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantCodebook {
    pub levels: Vec<f64>,
    pub edges: Vec<f64>,
}

impl Default for QuantCodebook {
    /// Four uniform cells on `[-1, 1]`: edges `(-0.5, 0, 0.5)`.
    fn default() -> Self {
        Self::uniform(4, -1.0, 1.0).expect("valid default codebook")
    }
}

impl QuantCodebook {
    pub fn uniform(n_levels: usize, lo: f64, hi: f64) -> Result<Self> {
        if n_levels < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("bad uniform codebook ({n_levels}, {lo}, {hi})")));
        }
        let step = (hi - lo) / n_levels as f64;
        let edges = (1..n_levels).map(|i| lo + step * i as f64).collect();
        let levels = (0..n_levels).map(|i| lo + step * (i as f64 + 0.5)).collect();
        Ok(Self { levels, edges })
    }

    pub fn from_parts(edges: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        let cb = Self { levels, edges };
        cb.validate()?;
        Ok(cb)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n < 2 || self.edges.len() != n - 1 {
            return Err(Error::Config(format!(
                "codebook has {n} levels and {} edges",
                self.edges.len()
            )));
        }
        let all = self.levels.iter().chain(&self.edges);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebook".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.levels) || !increasing(&self.edges) {
            return Err(Error::Config("codebook levels/edges not strictly increasing".into()));
        }
        let (lo, hi) = self.domain();
        let mut bounds = vec![lo];
        bounds.extend_from_slice(&self.edges);
        bounds.push(hi);
        for (i, level) in self.levels.iter().enumerate() {
            let mid = 0.5 * (bounds[i] + bounds[i + 1]);
            if (mid - level).abs() > 1e-6 * (1.0 + level.abs()) || !(bounds[i] < bounds[i + 1]) {
                return Err(Error::Config(format!("level {i} is not its cell midpoint")));
            }
        }
        Ok(())
    }

    /// Domain bounds implied by the outermost cells.
    pub fn domain(&self) -> (f64, f64) {
        let n = self.levels.len();
        (
            2.0 * self.levels[0] - self.edges[0],
            2.0 * self.levels[n - 1] - self.edges[n - 2],
        )
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    /// Index of the cell containing `z` (edges are right-exclusive).
    pub fn index_of(&self, z: f64) -> u8 {
        self.edges.iter().filter(|&&e| z >= e).count() as u8
    }

    pub fn is_level(&self, v: f64) -> bool {
        self.levels.iter().any(|&l| l == v || l as f32 as f64 == v)
    }
}

/// 64 quantisation indices of one (layer, block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedBlock {
    pub indices: [u8; LATENT_DIM],
}

impl QuantizedBlock {
    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if let Some(i) = self.indices.iter().position(|&q| q as usize >= n_levels) {
            return Err(Error::InvalidInput(format!("index {} at {i}", self.indices[i])));
        }
        Ok(())
    }
}

/// Values clamped into the codebook domain before binning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QuantStats {
    pub values: u64,
    pub clamped: u64,
}

pub fn quantize_counting(z: &[f64], cb: &QuantCodebook, stats: &mut QuantStats) -> QuantizedBlock {
    assert_eq!(z.len(), LATENT_DIM, "latent length");
    let (lo, hi) = cb.domain();
    let mut indices = [0u8; LATENT_DIM];
    for (q, &v) in indices.iter_mut().zip(z) {
        let c = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        if c != v {
            stats.clamped += 1;
        }
        *q = cb.index_of(c);
    }
    stats.values += LATENT_DIM as u64;
    if stats.clamped > 0 {
        log::trace!("quantizer clamped {} of {} values", stats.clamped, stats.values);
    }
    QuantizedBlock { indices }
}

pub fn quantize(z: &[f64], cb: &QuantCodebook) -> QuantizedBlock {
    quantize_counting(z, cb, &mut QuantStats::default())
}

pub fn dequantize(q: &QuantizedBlock, cb: &QuantCodebook) -> [f64; LATENT_DIM] {
    q.indices.map(|i| cb.levels[(i as usize).min(cb.levels.len() - 1)])
}

pub fn write_codebook<W: Write>(out: W, cb: &QuantCodebook) -> Result<()> {
    cb.validate()?;
    let mut w = LeWriter::new(out);
    write_codebook_block(&mut w, cb)?;
    w.finish()?;
    Ok(())
}

pub(crate) fn write_codebook_block<W: Write>(w: &mut LeWriter<W>, cb: &QuantCodebook) -> Result<()> {
    w.bytes(CODEBOOK_MAGIC)?;
    w.u16(CODEBOOK_VERSION)?;
    w.u16(cb.levels.len() as u16)?;
    for &e in &cb.edges {
        w.f32(e as f32)?;
    }
    for &l in &cb.levels {
        w.f32(l as f32)?;
    }
    Ok(())
}

pub fn read_codebook<R: Read>(input: R) -> Result<QuantCodebook> {
    let mut r = LeReader::new(input);
    let cb = read_codebook_block(&mut r)?;
    r.expect_eof()?;
    Ok(cb)
}

pub(crate) fn read_codebook_block<R: Read>(r: &mut LeReader<R>) -> Result<QuantCodebook> {
    r.magic(CODEBOOK_MAGIC)?;
    let version = r.u16()?;
    if version != CODEBOOK_VERSION {
        return Err(Error::Version(version));
    }
    let n = r.u16()? as usize;
    if n < 2 {
        return Err(Error::Malformed(format!("codebook with {n} levels")));
    }
    let edges = r.f32s(n - 1)?.into_iter().map(f64::from).collect();
    let levels = r.f32s(n)?.into_iter().map(f64::from).collect();
    QuantCodebook::from_parts(edges, levels)
}
