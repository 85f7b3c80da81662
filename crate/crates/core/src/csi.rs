//! Classical CSI math: eigen precoders, SGCS, re-orthogonalisation,
//! closed-loop capacity and the wideband DFT-codebook baseline.

use std::f64::consts::PI;

use crate::channel::{ChannelRealization, SubbandMatrix};
use crate::error::{Error, Result};
use crate::linalg::{self, hermitian_eig, hpd_log_det, inner, norm_sq, CMatrix};
use crate::{Complex64, MAX_LAYERS, N_RX, N_SUBBANDS, N_TX};

/// One per-sub-band precoding vector.
pub type Precoder = [Complex64; N_TX];

/// Norm below which a Gram-Schmidt residual counts as collapsed.
const COLLAPSE_NORM: f64 = 1e-6;
/// Orthonormality slack accepted by the capacity computation.
const CAPACITY_ORTHO_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderReport {
    /// `[layer][sub-band]`.
    pub v: Vec<Vec<Precoder>>,
    /// `[layer][sub-band]`, non-increasing in layer.
    pub eigenvalues: Vec<Vec<f64>>,
    pub realization_id: u64,
}

impl PrecoderReport {
    pub fn n_layers(&self) -> usize {
        self.v.len()
    }

    /// Vectors of every layer on sub-band `k`.
    pub fn subband(&self, k: usize) -> Vec<Precoder> {
        self.v.iter().map(|layer| layer[k]).collect()
    }

    /// Checks unit norm, cross-layer orthogonality, eigenvalue ordering and
    /// the phase convention, all at `tol`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if self.v.is_empty() || self.v.len() > MAX_LAYERS || self.v.len() != self.eigenvalues.len() {
            return Err(Error::Shape(format!("{} layers", self.v.len())));
        }
        for (l, layer) in self.v.iter().enumerate() {
            if layer.len() != N_SUBBANDS || self.eigenvalues[l].len() != N_SUBBANDS {
                return Err(Error::Shape(format!("layer {l} has {} sub-bands", layer.len())));
            }
        }
        for k in 0..N_SUBBANDS {
            for l in 0..self.n_layers() {
                let v = &self.v[l][k];
                if (norm_sq(v).sqrt() - 1.0).abs() > tol {
                    return Err(Error::InvalidInput(format!("v[{l}][{k}] not unit norm")));
                }
                if let Some(first) = v.iter().find(|c| c.norm() > tol) {
                    if first.im.abs() > tol || first.re < -tol {
                        return Err(Error::InvalidInput(format!("v[{l}][{k}] phase convention")));
                    }
                }
                for m in l + 1..self.n_layers() {
                    if inner(v, &self.v[m][k]).norm() > tol {
                        return Err(Error::InvalidInput(format!("layers {l},{m} not orthogonal at {k}")));
                    }
                }
                let ev = self.eigenvalues[l][k];
                if ev < -tol || (l + 1 < self.n_layers() && self.eigenvalues[l + 1][k] > ev + tol) {
                    return Err(Error::InvalidInput(format!("eigenvalue order at [{l}][{k}]")));
                }
            }
        }
        Ok(())
    }
}

/// Rotates `v` so its first non-negligible entry is real and non-negative.
pub fn apply_phase_convention(v: &mut Precoder) {
    let scale = norm_sq(v).sqrt();
    if scale == 0.0 {
        return;
    }
    if let Some(first) = v.iter().copied().find(|c| c.norm() > 1e-12 * scale) {
        let rot = first.conj() / first.norm();
        for c in v.iter_mut() {
            *c *= rot;
        }
        // Pin it exactly so the convention holds bit-for-bit.
        if let Some(c) = v.iter_mut().find(|c| c.norm() > 1e-12 * scale) {
            *c = Complex64::new(c.re.abs(), 0.0);
        }
    }
}

/// `H^H H` for one sub-band.
pub fn covariance(h: &SubbandMatrix) -> CMatrix<N_TX> {
    let mut c = [[Complex64::new(0.0, 0.0); N_TX]; N_TX];
    for i in 0..N_TX {
        for j in i..N_TX {
            let s: Complex64 = (0..N_RX).map(|r| h[r][i].conj() * h[r][j]).sum();
            c[i][j] = s;
            c[j][i] = s.conj();
        }
    }
    c
}

/// Strongest `n_layers` eigenvectors of each sub-band's transmit covariance.
pub fn extract_precoders(h: &ChannelRealization, n_layers: usize) -> Result<PrecoderReport> {
    if !(1..=MAX_LAYERS).contains(&n_layers) {
        return Err(Error::InvalidInput(format!("n_layers {n_layers} outside 1..={MAX_LAYERS}")));
    }
    h.validate()?;
    let mut v = vec![Vec::with_capacity(N_SUBBANDS); n_layers];
    let mut eigenvalues = vec![Vec::with_capacity(N_SUBBANDS); n_layers];
    for hk in &h.h {
        let eig = hermitian_eig(&covariance(hk))?;
        for l in 0..n_layers {
            let mut u = eig.vectors[l];
            apply_phase_convention(&mut u);
            v[l].push(u);
            eigenvalues[l].push(eig.values[l].max(0.0));
        }
    }
    Ok(PrecoderReport { v, eigenvalues, realization_id: h.realization_id })
}

/// Squared generalised cosine similarity `|v^H w|^2 / (|v|^2 |w|^2)`.
pub fn sgcs(v: &Precoder, v_hat: &Precoder) -> Result<f64> {
    let (a, b) = (norm_sq(v), norm_sq(v_hat));
    if a == 0.0 || b == 0.0 {
        return Err(Error::ZeroVector("sgcs".into()));
    }
    Ok((inner(v, v_hat).norm_sqr() / (a * b)).min(1.0))
}

/// Per-sub-band SGCS of one layer.
pub fn sgcs_trace(a: &PrecoderReport, b: &PrecoderReport, layer: usize) -> Result<Vec<f64>> {
    if layer >= a.n_layers() || layer >= b.n_layers() {
        return Err(Error::Shape(format!("layer {layer} not present in both reports")));
    }
    if a.v[layer].len() != b.v[layer].len() {
        return Err(Error::Shape("sub-band counts differ".into()));
    }
    a.v[layer].iter().zip(&b.v[layer]).map(|(x, y)| sgcs(x, y)).collect()
}

/// SGCS of one layer averaged over sub-bands.
pub fn mean_sgcs(a: &PrecoderReport, b: &PrecoderReport, layer: usize) -> Result<f64> {
    let trace = sgcs_trace(a, b, layer)?;
    Ok(trace.iter().sum::<f64>() / trace.len() as f64)
}

/// Gram-Schmidt in layer order (strongest first).
///
/// A layer that collapses below `1e-6` after projection is replaced by the
/// first canonical basis vector whose projection residual keeps at least
/// half its energy (or the largest residual if none does).
pub fn reorthogonalize(v_hat: &[Precoder]) -> Result<Vec<Precoder>> {
    if v_hat.is_empty() || v_hat.len() > N_TX {
        return Err(Error::Shape(format!("{} layers", v_hat.len())));
    }
    if v_hat.iter().all(|v| norm_sq(v) == 0.0) {
        return Err(Error::ZeroVector("reorthogonalize input".into()));
    }
    if norm_sq(&v_hat[0]) == 0.0 {
        return Err(Error::ZeroVector("reorthogonalize layer 0".into()));
    }
    let mut out: Vec<Precoder> = Vec::with_capacity(v_hat.len());
    for v in v_hat {
        let mut w = project_out(*v, &out);
        let mut n = norm_sq(&w).sqrt();
        if n < COLLAPSE_NORM {
            w = filler(&out);
            n = norm_sq(&w).sqrt();
        }
        out.push(w.map(|c| c / n));
    }
    Ok(out)
}

fn project_out(mut w: Precoder, basis: &[Precoder]) -> Precoder {
    for b in basis {
        let p = inner(b, &w);
        for (x, y) in w.iter_mut().zip(b) {
            *x -= p * y;
        }
    }
    w
}

fn filler(basis: &[Precoder]) -> Precoder {
    let mut best: Option<(Precoder, f64)> = None;
    for i in 0..N_TX {
        let mut e = [Complex64::new(0.0, 0.0); N_TX];
        e[i] = Complex64::new(1.0, 0.0);
        let w = project_out(project_out(e, basis), basis);
        let n = norm_sq(&w);
        if n >= 0.5 {
            return w;
        }
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((w, n));
        }
    }
    best.expect("N_TX > 0").0
}

/// `log2 det(I + (rho / nu) H W W^H H^H)` for one sub-band.
pub fn subband_capacity(h: &SubbandMatrix, w: &[Precoder], rho: f64) -> Result<f64> {
    let nu = w.len() as f64;
    // G = H W, N_RX x nu.
    let g: Vec<[Complex64; N_RX]> = w
        .iter()
        .map(|col| std::array::from_fn(|r| h[r].iter().zip(col).map(|(a, b)| a * b).sum()))
        .collect();
    let mut m = linalg::identity::<N_RX>();
    for col in &g {
        for i in 0..N_RX {
            for j in 0..N_RX {
                m[i][j] += col[i] * col[j].conj() * (rho / nu);
            }
        }
    }
    Ok(hpd_log_det(&m)? / std::f64::consts::LN_2)
}

/// Mean over sub-bands of the equal-power closed-loop capacity, bits/s/Hz.
///
/// `w` is `[layer][sub-band]`; each sub-band's layer set must be orthonormal.
pub fn closed_loop_capacity(h: &ChannelRealization, w: &[Vec<Precoder>], snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("snr_db".into()));
    }
    h.validate()?;
    if w.is_empty() || w.iter().any(|l| l.len() != h.h.len()) {
        return Err(Error::Shape("precoder and channel sub-band counts differ".into()));
    }
    let rho = 10f64.powf(snr_db / 10.0);
    let mut total = 0.0;
    for (k, hk) in h.h.iter().enumerate() {
        let wk: Vec<Precoder> = w.iter().map(|l| l[k]).collect();
        if wk.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite(format!("precoder on sub-band {k}")));
        }
        for (i, a) in wk.iter().enumerate() {
            for (j, b) in wk.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                if (inner(a, b) - Complex64::new(target, 0.0)).norm() > CAPACITY_ORTHO_TOL {
                    return Err(Error::InvalidInput(format!(
                        "precoders on sub-band {k} are not orthonormal"
                    )));
                }
            }
        }
        total += subband_capacity(hk, &wk, rho)?;
    }
    Ok(total / h.h.len() as f64)
}

/// Oversampled 1-D DFT beams for the transmit array.
#[derive(Debug, Clone, PartialEq)]
pub struct DftCodebook {
    pub entries: Vec<Precoder>,
    pub oversampling: usize,
}

impl DftCodebook {
    pub fn new(oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::Config("oversampling must be at least 1".into()));
        }
        let n = N_TX * oversampling;
        let scale = 1.0 / (N_TX as f64).sqrt();
        let entries = (0..n)
            .map(|m| {
                std::array::from_fn(|t| {
                    Complex64::from_polar(scale, 2.0 * PI * (t * m) as f64 / n as f64)
                })
            })
            .collect();
        Ok(Self { entries, oversampling })
    }
}

impl Default for DftCodebook {
    /// 32 beams (4x oversampling), i.e. 5 bits per layer.
    fn default() -> Self {
        Self::new(4).expect("valid oversampling")
    }
}

/// Wideband codebook baseline: one beam per layer for the whole band.
///
/// Layers pick, strongest first, the unused entry with the highest mean SGCS
/// against their true per-sub-band eigenvectors (lowest index on ties). The
/// chosen beams are replicated over all sub-bands and re-orthogonalised.
pub fn type1_baseline(report: &PrecoderReport, codebook: &DftCodebook) -> Result<PrecoderReport> {
    if codebook.entries.is_empty() {
        return Err(Error::InvalidInput("empty codebook".into()));
    }
    let n_layers = report.n_layers();
    if n_layers > codebook.entries.len() {
        return Err(Error::InvalidInput(format!(
            "{n_layers} layers but only {} codebook entries",
            codebook.entries.len()
        )));
    }
    let selection = select_type1_beams(report, codebook)?;
    let beams: Vec<Precoder> = selection.iter().map(|&m| codebook.entries[m]).collect();
    let mut per_subband = reorthogonalize(&beams)?;
    for w in per_subband.iter_mut() {
        apply_phase_convention(w);
    }
    let v = per_subband.iter().map(|w| vec![*w; N_SUBBANDS]).collect();
    Ok(PrecoderReport {
        v,
        eigenvalues: report.eigenvalues.clone(),
        realization_id: report.realization_id,
    })
}

/// Codebook indices chosen per layer by [`type1_baseline`].
pub fn select_type1_beams(report: &PrecoderReport, codebook: &DftCodebook) -> Result<Vec<usize>> {
    let mut chosen: Vec<usize> = Vec::with_capacity(report.n_layers());
    for layer in &report.v {
        let mut best: Option<(usize, f64)> = None;
        for (m, entry) in codebook.entries.iter().enumerate() {
            if chosen.contains(&m) {
                continue;
            }
            let mut score = 0.0;
            for v in layer {
                score += sgcs(v, entry)?;
            }
            score /= layer.len() as f64;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((m, score));
            }
        }
        chosen.push(best.expect("codebook larger than layer count").0);
    }
    Ok(chosen)
}
