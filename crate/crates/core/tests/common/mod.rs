//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the crate's own linear algebra.

#![allow(dead_code)]

pub mod gradcheck;

use csifb::channel::SubbandMatrix;
use csifb::codec::{block_loss, Gradients, Network};
use csifb::csi::Precoder;
use csifb::linalg::CMatrix;
use csifb::wire::FeedbackMessage;
use csifb::{BlockSample, Complex64, DecoderModel, EncoderModel, N_RX, N_TX};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(r: &mut impl Rng) -> Complex64 {
    let re: f64 = r.sample(StandardNormal);
    let im: f64 = r.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_subband(r: &mut impl Rng) -> SubbandMatrix {
    std::array::from_fn(|_| std::array::from_fn(|_| cgauss(r)))
}

/// `A^H A + diag` style positive semi-definite Hermitian matrix.
pub fn random_hermitian(r: &mut impl Rng) -> CMatrix<N_TX> {
    let a: Vec<[Complex64; N_TX]> = (0..N_TX).map(|_| std::array::from_fn(|_| cgauss(r))).collect();
    std::array::from_fn(|i| std::array::from_fn(|j| (0..N_TX).map(|k| a[k][i].conj() * a[k][j]).sum()))
}

pub fn to_dmatrix(m: &CMatrix<N_TX>) -> DMatrix<Complex64> {
    DMatrix::from_fn(N_TX, N_TX, |i, j| m[i][j])
}

/// Eigenvalues in descending order from nalgebra.
pub fn nalgebra_eigenvalues(m: &CMatrix<N_TX>) -> Vec<f64> {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Dominant eigenvector by power iteration.
pub fn power_iteration(m: &CMatrix<N_TX>, iters: usize) -> Precoder {
    let mut v = [Complex64::new(1.0, 0.0); N_TX];
    for _ in 0..iters {
        let w: Precoder = std::array::from_fn(|i| (0..N_TX).map(|j| m[i][j] * v[j]).sum());
        let n = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        v = w.map(|c| c / n);
    }
    v
}

/// `|a^H b|^2 / (|a|^2 |b|^2)` computed with nalgebra vectors.
pub fn sgcs_oracle(a: &Precoder, b: &Precoder) -> f64 {
    let va = nalgebra::DVector::from_column_slice(a);
    let vb = nalgebra::DVector::from_column_slice(b);
    va.dotc(&vb).norm_sqr() / (va.norm_squared() * vb.norm_squared())
}

/// Orthonormal basis of the span of `vs` (in order) via nalgebra QR.
pub fn qr_basis(vs: &[Precoder]) -> Vec<Precoder> {
    let m = DMatrix::from_fn(N_TX, vs.len(), |i, j| vs[j][i]);
    let q = m.qr().q();
    (0..vs.len()).map(|j| std::array::from_fn(|i| q[(i, j)])).collect()
}

/// `nu` random orthonormal precoders.
pub fn random_orthonormal(r: &mut impl Rng, nu: usize) -> Vec<Precoder> {
    let vs: Vec<Precoder> = (0..nu).map(|_| std::array::from_fn(|_| cgauss(r))).collect();
    qr_basis(&vs)
}

/// `log2 det(I + rho/nu H W W^H H^H)` through nalgebra's Hermitian eigenvalues.
pub fn capacity_oracle(h: &SubbandMatrix, w: &[Precoder], rho: f64) -> f64 {
    let hm = DMatrix::from_fn(N_RX, N_TX, |i, j| h[i][j]);
    let wm = DMatrix::from_fn(N_TX, w.len(), |i, j| w[j][i]);
    let g = &hm * &wm;
    let m = DMatrix::<Complex64>::identity(N_RX, N_RX) + (&g * g.adjoint()) * Complex64::new(rho / w.len() as f64, 0.0);
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.log2()).sum()
}

pub fn random_message(r: &mut impl Rng) -> FeedbackMessage {
    let ri: u8 = r.random_range(1..=4);
    let payload = (0..ri as usize * 80).map(|_| r.random()).collect();
    FeedbackMessage { model_id: r.random_range(0..16), ri, cqi: r.random_range(0..16), payload }
}

/// Mean block loss of the quantiser-bypassed chain via the public forward
/// API and `block_loss`, independent of the training code.
pub fn chain_loss(enc: &EncoderModel, dec: &DecoderModel, batch: &[BlockSample], id: Option<u8>) -> f64 {
    let z = enc.encode_batch(batch).unwrap();
    batch
        .iter()
        .zip(z)
        .map(|(s, z)| {
            let out = dec.decode_batch(&[(z.z, id)], s.layer_index).unwrap();
            block_loss(s, &out[0]).unwrap()
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Outcome of a finite-difference check on one parameter tensor.
#[derive(Debug, Clone, Copy)]
pub struct FdResult {
    pub tensor: usize,
    /// `|g_analytic - g_fd| / max(|g_analytic|, |g_fd|)` over the kept entries.
    pub rel_error: f64,
    pub checked: usize,
    /// Entries whose stencil straddles a ReLU kink.
    pub skipped: usize,
}

/// Central differences at `eps` and `eps / 2` of a smooth loss agree to
/// `O(eps^2)`; a larger disagreement marks a kink inside the stencil.
const KINK_REL: f64 = 1e-6;
const KINK_ABS: f64 = 1e-9;

/// Central differences of `loss` at `eps` against `analytic` for up to
/// `per_tensor` seeded entries of every tensor.
///
/// A stencil `[w - eps, w + eps]` that crosses a ReLU kink does not estimate
/// the derivative; such entries are detected by comparing the central
/// differences at `eps` and `eps / 2` and reported in `skipped` instead of
/// `rel_error`.
pub fn fd_check(
    net: &Network,
    analytic: &Gradients,
    per_tensor: usize,
    eps: f64,
    seed: u64,
    mut loss: impl FnMut(&Network) -> f64,
) -> Vec<FdResult> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for t in 0..net.layers.len() * 2 {
        let (layer, is_bias) = (t / 2, t % 2 == 1);
        let len = if is_bias { net.layers[layer].bias.len() } else { net.layers[layer].weight.len() };
        let picks: Vec<usize> =
            if len <= per_tensor { (0..len).collect() } else { (0..per_tensor).map(|_| r.random_range(0..len)).collect() };
        let (mut diff2, mut norm_a, mut norm_n, mut skipped) = (0.0, 0.0, 0.0, 0);
        let mut probe = net.clone();
        for &i in &picks {
            let mut at = |v: f64, probe: &mut Network| {
                let p = if is_bias { &mut probe.layers[layer].bias[i] } else { &mut probe.layers[layer].weight[i] };
                let orig = *p;
                *p = v;
                let l = loss(probe);
                let p = if is_bias { &mut probe.layers[layer].bias[i] } else { &mut probe.layers[layer].weight[i] };
                *p = orig;
                l
            };
            let w0 = if is_bias { net.layers[layer].bias[i] } else { net.layers[layer].weight[i] };
            let up = at(w0 + eps, &mut probe);
            let down = at(w0 - eps, &mut probe);
            let numeric = (up - down) / (2.0 * eps);
            let half = (at(w0 + eps / 2.0, &mut probe) - at(w0 - eps / 2.0, &mut probe)) / eps;
            if (numeric - half).abs() > KINK_REL * numeric.abs() + KINK_ABS {
                skipped += 1;
                continue;
            }
            let a = if is_bias { analytic.bias[layer][i] } else { analytic.weight[layer][i] };
            diff2 += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let denom = norm_a.sqrt().max(norm_n.sqrt()).max(1e-12);
        out.push(FdResult { tensor: t, rel_error: diff2.sqrt() / denom, checked: picks.len() - skipped, skipped });
    }
    out
}
