//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Set `CSIFB_ACCEPTANCE_DIR` to keep the experiment artifacts.

mod common;

use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use csifb::codec::{read_model, EncoderFamily, ModelFile};
use csifb::csi::{covariance, reorthogonalize, sgcs, subband_capacity, Precoder};
use csifb::experiment::{run_experiment, ExperimentConfig, ExperimentOutcome, ScenarioSpec};
use csifb::interop::Method;
use csifb::linalg::{frobenius, hermitian_eig, inner, mat_vec};
use csifb::pipeline::MlLink;
use csifb::wire::{
    decode_frames, emulate_link, FrameKind, pack, read_frame, unpack, GnbConfig, LinkMessage, RegisteredDecoder, TransportKind,
    UeConfig, WireFrame,
};
use csifb::{
    check_bit_budget, encoder_inferences, payload_bits, raw_report_bits, Complex64, DecoderModel, EncoderModel,
    QuantCodebook, MAX_LAYERS,
};
use rand::RngExt;

const GAP_TOL: f64 = 0.02;
const GNB_FIRST_TOL: f64 = 0.05;
const MIN_TRAIN_BLOCKS: usize = 20_000;
const DESK_CONFIG: &str = include_str!("../../../configs/desk.toml");

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg.into()) }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn bit_budget() -> Verdict {
    let t = Instant::now();
    check_bit_budget().map_err(|e| e.to_string())?;
    let raw = raw_report_bits(MAX_LAYERS);
    let payload = payload_bits(MAX_LAYERS);
    ensure(raw == 71_680, format!("raw bits {raw}"))?;
    ensure(payload == 2560, format!("payload bits {payload}"))?;
    ensure(raw.is_multiple_of(payload) && raw / payload == 28, format!("ratio {raw}/{payload}"))?;
    ensure(encoder_inferences(MAX_LAYERS) == 20, "encoder inferences")?;
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{raw} input bits, {payload} payload bits, ratio 28, 20 inferences"))
}

fn wire_codec() -> Verdict {
    let t = Instant::now();
    let mut r = rng(0xace);
    for i in 0..10_000 {
        let msg = random_message(&mut r);
        let back = unpack(&pack(&msg).map_err(|e| e.to_string())?).map_err(|e| format!("message {i}: {e}"))?;
        ensure(back == msg, format!("message {i} changed"))?;
    }
    let mut accepted = 0;
    for _ in 0..100_000 {
        let len = r.random_range(0..400);
        let buf: Vec<u8> = (0..len).map(|_| r.random()).collect();
        let outcome = catch_unwind(|| {
            let ok = unpack(&buf).is_ok();
            let _ = decode_frames(&buf);
            let _ = read_frame(&mut &buf[..]);
            for kind in [FrameKind::CsiTrigger, FrameKind::CsiReport, FrameKind::PrecoderAck] {
                let _ = LinkMessage::from_frame(&WireFrame { kind, body: buf.clone() });
            }
            ok
        });
        accepted += usize::from(outcome.map_err(|_| "decoder panicked on fuzz input".to_string())?);
    }
    within(t.elapsed(), Duration::from_secs(30))?;
    Ok(format!("10000 round trips, 100000 fuzz buffers ({accepted} parsed) in {:.1}s", t.elapsed().as_secs_f64()))
}

fn numerical_core() -> Verdict {
    let t = Instant::now();
    let mut r = rng(0xe16);
    let mut worst_residual: f64 = 0.0;
    for _ in 0..1000 {
        let c = random_hermitian(&mut r);
        let eig = hermitian_eig(&c).map_err(|e| e.to_string())?;
        let norm = frobenius(&c);
        for (lambda, v) in eig.values.iter().zip(&eig.vectors) {
            let av = mat_vec(&c, v);
            let res: f64 = av.iter().zip(v).map(|(x, y)| (x - y * lambda).norm_sqr()).sum::<f64>().sqrt();
            worst_residual = worst_residual.max(res / norm);
        }
        let oracle = nalgebra_eigenvalues(&c);
        for (a, b) in eig.values.iter().zip(&oracle) {
            ensure((a - b).abs() <= 1e-8 * norm, format!("eigenvalue {a} vs oracle {b}"))?;
        }
    }
    ensure(worst_residual <= 1e-8, format!("eigen residual {worst_residual:e}"))?;

    let mut worst_inv: f64 = 0.0;
    for _ in 0..1000 {
        let a: Precoder = std::array::from_fn(|_| cgauss(&mut r));
        let b: Precoder = std::array::from_fn(|_| cgauss(&mut r));
        let rot = Complex64::from_polar(10f64.powf(r.random_range(-3.0..3.0)), r.random_range(0.0..std::f64::consts::TAU));
        let s = sgcs(&a, &b).map_err(|e| e.to_string())?;
        ensure((s - sgcs_oracle(&a, &b)).abs() < 1e-12, "sgcs disagrees with oracle")?;
        worst_inv = worst_inv.max((sgcs(&a, &b.map(|c| c * rot)).map_err(|e| e.to_string())? - s).abs());
    }
    ensure(worst_inv <= 1e-12, format!("sgcs invariance {worst_inv:e}"))?;

    let mut worst_gram: f64 = 0.0;
    for _ in 0..1000 {
        let nu = r.random_range(1..=4);
        let vs: Vec<Precoder> = (0..nu).map(|_| std::array::from_fn(|_| cgauss(&mut r))).collect();
        let w = reorthogonalize(&vs).map_err(|e| e.to_string())?;
        for i in 0..nu {
            for j in 0..nu {
                let target = Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0);
                worst_gram = worst_gram.max((inner(&w[i], &w[j]) - target).norm());
            }
        }
        let again = reorthogonalize(&w).map_err(|e| e.to_string())?;
        let drift = w.iter().zip(&again).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm())).fold(0.0, f64::max);
        ensure(drift < 1e-9, format!("reorthogonalize not idempotent ({drift:e})"))?;
    }
    ensure(worst_gram <= 1e-6, format!("Gram deviation {worst_gram:e}"))?;

    for ch in 0..100 {
        let h = random_subband(&mut r);
        let eig = hermitian_eig(&covariance(&h)).map_err(|e| e.to_string())?;
        let nu = ch % 4 + 1;
        let best = subband_capacity(&h, &eig.vectors[..nu], 100.0).map_err(|e| e.to_string())?;
        for _ in 0..100 {
            let w = random_orthonormal(&mut r, nu);
            let c = subband_capacity(&h, &w, 100.0).map_err(|e| e.to_string())?;
            ensure(c <= best + 1e-9, format!("channel {ch}: random precoder {c} beats eigen {best}"))?;
        }
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "residual {worst_residual:.1e}, invariance {worst_inv:.1e}, Gram {worst_gram:.1e}, 100x100 optimality, {:.1}s",
        t.elapsed().as_secs_f64()
    ))
}

fn gradients() -> Verdict {
    let t = Instant::now();
    let mut checks = gradcheck::e2e(EncoderFamily::DenseA);
    checks.extend(gradcheck::e2e(EncoderFamily::SharedB));
    checks.push(gradcheck::common_decoder());
    let bad: Vec<String> = checks.iter().flat_map(gradcheck::failures).collect();
    ensure(bad.is_empty(), bad.join("; "))?;
    within(t.elapsed(), Duration::from_secs(120))?;
    let tensors: usize = checks.iter().map(|c| c.1.len()).sum();
    Ok(format!(
        "{tensors} tensors, worst relative error {:.1e}, {:.1}s",
        gradcheck::worst(&checks),
        t.elapsed().as_secs_f64()
    ))
}

struct Desk {
    cfg: ExperimentConfig,
    out: ExperimentOutcome,
    elapsed: Duration,
}

fn desk_experiment(dir: &Path) -> Result<Desk, String> {
    let mut cfg = ExperimentConfig::from_toml(DESK_CONFIG).map_err(|e| e.to_string())?;
    cfg.output_dir = dir.to_path_buf();
    cfg.jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let train = &cfg.train_scenarios[0];
    let train_blocks = train.realizations * cfg.train.n_layers * csifb::N_BLOCKS * 9 / 10;
    ensure(train.preset == "mixed", "desk run must train on the mixed scenario")?;
    ensure(train_blocks >= MIN_TRAIN_BLOCKS, format!("only {train_blocks} training blocks"))?;
    let t = Instant::now();
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    Ok(Desk { cfg, out, elapsed: t.elapsed() })
}

fn gap(desk: &Desk) -> Verdict {
    let t = &desk.out.table;
    let mut parts = Vec::new();
    for &f in &desk.cfg.families {
        for (a, b) in [(Method::SeqDedicated, Method::E2e), (Method::Common, Method::SeqDedicated)] {
            let g = t.method_gap(f, a, b).ok_or_else(|| format!("{f}: missing {a} or {b}"))?;
            ensure(g.abs() <= GAP_TOL, format!("{f} |{a} - {b}| = {:.4}", g.abs()))?;
            parts.push(format!("{f} {a}-{b} {g:+.4}"));
        }
    }
    ensure(desk.elapsed <= Duration::from_secs(30 * 60), format!("experiment took {:.0}s", desk.elapsed.as_secs_f64()))?;
    Ok(format!("{}; run {:.0}s", parts.join(", "), desk.elapsed.as_secs_f64()))
}

fn monotone(desk: &Desk) -> Verdict {
    let t = &desk.out.table;
    for &f in &t.families {
        for &m in &t.methods {
            let v: Vec<f64> = (1..=t.n_layers).map(|k| t.cell(f, k, m).unwrap_or(f64::NAN)).collect();
            ensure(v.windows(2).all(|w| w[1] <= w[0]), format!("{f} {m}: {v:.4?}"))?;
        }
    }
    // Every report, including proxies and systems retrained on other scenarios.
    for r in &desk.out.reports {
        let v = &r.heldout_sgcs[..t.n_layers];
        ensure(v.windows(2).all(|w| w[1] <= w[0]), format!("{} {:?} report: {v:.4?}", r.method, r.family))?;
    }
    Ok(format!("{} trained systems non-increasing over ranks 1..{}", desk.out.reports.len(), t.n_layers))
}

fn baseline(desk: &Desk) -> Verdict {
    let rows = &desk.out.table.gains;
    ensure(!rows.is_empty(), "no gain rows")?;
    let scenarios: Vec<&ScenarioSpec> = desk.cfg.eval_scenarios.iter().collect();
    for s in &scenarios {
        ensure(rows.iter().any(|g| g.eval_scenario == s.label()), format!("no gain row for {}", s.label()))?;
    }
    let mut parts = Vec::new();
    for g in rows {
        ensure(
            g.ml_capacity > g.baseline_capacity,
            format!("{}/{}: ML capacity {:.3} <= baseline {:.3}", g.eval_scenario, g.family, g.ml_capacity, g.baseline_capacity),
        )?;
        ensure(
            g.ml_sgcs > g.baseline_sgcs,
            format!("{}/{}: ML SGCS {:.4} <= baseline {:.4}", g.eval_scenario, g.family, g.ml_sgcs, g.baseline_sgcs),
        )?;
        parts.push(format!("{}/{} {:+.1}%", g.eval_scenario, g.family, 100.0 * g.capacity_gain));
    }
    Ok(format!("capacity gain {}", parts.join(", ")))
}

fn load_encoder(p: &Path) -> Result<EncoderModel, String> {
    match read_model(BufReader::new(File::open(p).map_err(|e| format!("{}: {e}", p.display()))?)).map_err(|e| e.to_string())? {
        ModelFile::Encoder(e) => Ok(e),
        ModelFile::Decoder(_) => Err(format!("{} is a decoder", p.display())),
    }
}

fn load_decoder(p: &Path) -> Result<DecoderModel, String> {
    match read_model(BufReader::new(File::open(p).map_err(|e| format!("{}: {e}", p.display()))?)).map_err(|e| e.to_string())? {
        ModelFile::Decoder(d) => Ok(d),
        ModelFile::Encoder(_) => Err(format!("{} is an encoder", p.display())),
    }
}

fn emulator(desk: Option<&Desk>) -> Verdict {
    let t = Instant::now();
    let (encoder, decoder, source) = match desk {
        Some(d) => {
            let models = d.out.dir.join("models");
            (load_encoder(&models.join("encoder_shared_b.csmw"))?, load_decoder(&models.join("decoder_dedicated_shared_b.csmw"))?, "trained")
        }
        None => (
            EncoderModel::init(EncoderFamily::SharedB, 11, 1).map_err(|e| e.to_string())?,
            DecoderModel::init(0, 2).map_err(|e| e.to_string())?,
            "untrained",
        ),
    };
    let channels = ScenarioSpec::new("mixed", 4242, 100).generate().map_err(|e| e.to_string())?;
    let codebook = QuantCodebook::default();
    let (ri, snr_db) = (4, 20.0);
    let ue = UeConfig { encoder, codebook: codebook.clone(), model_id: 11, ri, snr_db };
    let mut registry = std::collections::BTreeMap::new();
    registry.insert(11, RegisteredDecoder { decoder, decoder_id: None });
    let gnb = GnbConfig { registry, codebook: codebook.clone(), snr_db, ticks: 100 };
    let log = emulate_link(&ue, &gnb, &channels, TransportKind::Inproc).map_err(|e| e.to_string())?;
    let ticks = log.ticks();
    ensure(ticks.len() == 100, format!("{} ticks logged", ticks.len()))?;
    let reg = &gnb.registry[&11];
    let link = MlLink { encoder: &ue.encoder, decoder: &reg.decoder, codebook: &codebook, decoder_id: None, ri, snr_db };
    for tick in &ticks {
        let h = &channels[tick.tick as usize % channels.len()];
        let m = link.evaluate(h).map_err(|e| e.to_string())?;
        ensure(tick.decoded, format!("tick {} not decoded", tick.tick))?;
        let same = tick.layer_sgcs.len() == m.layer_sgcs.len()
            && tick.layer_sgcs.iter().zip(&m.layer_sgcs).all(|(a, b)| a.to_bits() == b.to_bits())
            && tick.capacity.to_bits() == m.capacity.to_bits();
        ensure(same, format!("tick {}: emulator {:?}/{} vs offline {:?}/{}", tick.tick, tick.layer_sgcs, tick.capacity, m.layer_sgcs, m.capacity))?;
    }
    within(t.elapsed(), Duration::from_secs(120))?;
    Ok(format!("100 ticks bit-exact with the offline pipeline ({source} models), {:.1}s", t.elapsed().as_secs_f64()))
}

fn gnb_first(desk: &Desk) -> Verdict {
    let t = &desk.out.table;
    let mut parts = Vec::new();
    for &f in &desk.cfg.families {
        let g = t.method_gap(f, Method::GnbFirst, Method::SeqDedicated).ok_or_else(|| format!("{f}: missing gnb_first"))?;
        ensure(g.abs() <= GNB_FIRST_TOL, format!("{f} |gnb_first - seq_dedicated| = {:.4}", g.abs()))?;
        parts.push(format!("{f} {g:+.4}"));
    }
    Ok(format!("gnb_first - seq_dedicated: {}", parts.join(", ")))
}

fn audit(desk: &Desk) -> Verdict {
    let a = &desk.out.audit;
    ensure(a.passed && a.violations.is_empty(), a.violations.join("; "))?;
    let handovers = std::iter::once(desk.out.dir.join("handover"))
        .chain(desk.cfg.train_scenarios[1..].iter().map(|s| desk.out.dir.join("trained_on").join(s.label()).join("handover")));
    for h in handovers {
        let r = csifb::interop::audit_handover_dir(&h).map_err(|e| e.to_string())?;
        ensure(r.passed, format!("{}: {}", h.display(), r.violations.join("; ")))?;
    }
    let kinds: std::collections::BTreeSet<String> = a.crossings.iter().map(|c| format!("{:?}", c.kind)).collect();
    Ok(format!("{} crossings ({}), no model weights", a.crossings.len(), kinds.into_iter().collect::<Vec<_>>().join(", ")))
}

fn report(id: usize, name: &str, verdict: impl FnOnce() -> Verdict) -> bool {
    let v = catch_unwind(AssertUnwindSafe(verdict)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    });
    match &v {
        Ok(detail) => println!("PASS [{id:>2}] {name}: {detail}"),
        Err(why) => println!("FAIL [{id:>2}] {name}: {why}"),
    }
    v.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= report(1, "bit budget", bit_budget);
    ok &= report(2, "wire codec", wire_codec);
    ok &= report(3, "numerical core", numerical_core);
    ok &= report(4, "gradient correctness", gradients);

    let keep = std::env::var_os("CSIFB_ACCEPTANCE_DIR").map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = keep.clone().unwrap_or_else(|| tmp.path().join("desk"));
    println!("desk experiment in {} ...", dir.display());
    let desk = catch_unwind(AssertUnwindSafe(|| desk_experiment(&dir)))
        .unwrap_or_else(|_| Err("experiment panicked".into()));
    let need = |f: fn(&Desk) -> Verdict| {
        let d = &desk;
        move || match d {
            Ok(d) => f(d),
            Err(e) => Err(format!("desk experiment failed: {e}")),
        }
    };
    ok &= report(5, "interoperability gap", need(gap));
    ok &= report(6, "rank monotonicity", need(monotone));
    ok &= report(7, "baseline superiority", need(baseline));
    ok &= report(8, "emulator/offline equivalence", || emulator(desk.as_ref().ok()));
    ok &= report(9, "gNB-first parity", need(gnb_first));
    ok &= report(10, "vendor-boundary audit", need(audit));

    if keep.is_some() {
        println!("artifacts kept in {}", dir.display());
    }
    if !ok {
        std::process::exit(1);
    }
}
