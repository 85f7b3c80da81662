use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ScenarioSpec};
use super::table::{GainRow, ResultTable, SgcsCell, TraceSeries, RESULT_FILE};
use crate::channel::ChannelRealization;
use crate::codec::{write_codebook, write_model, DecoderModel, EncoderFamily, EncoderModel, ModelFile, QuantCodebook};
use crate::csi::DftCodebook;
use crate::error::{Error, Result};
use crate::interop::{
    audit_handover_dir, distill_ue_encoder, export_exchange_dataset, gnb_first_stage1, train_common_decoder,
    train_dedicated_decoder, train_end_to_end, vendor_boundary_audit, write_exchange, AuditReport, BoundaryLog,
    EncoderId, ExchangeDataset, Method, Party, TrainReport,
};
use crate::pipeline::{baseline_link, ideal_link, LinkMetrics, MlLink};
use crate::N_SUBBANDS;

/// Name of the directory created when a stage fails.
pub const FAILED_DIR: &str = "failed";

/// Models deployed for one family under one protocol.
#[derive(Debug, Clone)]
pub struct DeployedPair {
    pub encoder: EncoderModel,
    pub decoder: DecoderModel,
    /// Id fed to the decoder (common decoder only).
    pub decoder_id: Option<u8>,
}

/// Everything trained on one scenario.
#[derive(Debug, Clone, Default)]
pub struct TrainedSystems {
    pub reports: Vec<TrainReport>,
    pub deployed: BTreeMap<(Method, EncoderFamily), DeployedPair>,
    pub boundary: BoundaryLog,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ResultTable,
    pub dir: PathBuf,
    pub audit: AuditReport,
    pub reports: Vec<TrainReport>,
}

#[derive(Serialize, Deserialize)]
struct BoundaryFile {
    log: AuditReport,
    handover_dirs: Vec<AuditReport>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn save_model(path: &Path, model: ModelFile) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), &model)
}

fn save_exchange(path: &Path, ds: &ExchangeDataset) -> Result<()> {
    write_exchange(BufWriter::new(File::create(path)?), ds)
}

/// Runs `protocols` for every family on one set of channels and writes the
/// models and exchanged datasets under `dir`. `handover` receives exactly
/// what crosses between vendors.
pub fn train_systems(
    cfg: &ExperimentConfig,
    protocols: &[Method],
    channels: &[ChannelRealization],
    codebook: &QuantCodebook,
    dir: &Path,
    handover: &Path,
) -> Result<TrainedSystems> {
    let models = dir.join("models");
    let datasets = dir.join("datasets");
    for d in [&models, &datasets, handover] {
        std::fs::create_dir_all(d)?;
    }
    let tc = &cfg.train;
    let mut out = TrainedSystems::default();
    let needs_ue_first = protocols.iter().any(|m| matches!(m, Method::E2e | Method::SeqDedicated | Method::Common));

    // UE vendors train privately and export their datasets.
    let mut exported: Vec<(EncoderFamily, EncoderModel, ExchangeDataset)> = Vec::new();
    if needs_ue_first {
        for &family in &cfg.families {
            let id = cfg.encoder_id(family);
            let e2e = stage(&format!("e2e:{family}"), train_end_to_end(family, id, channels, codebook, tc))?;
            save_model(&models.join(format!("encoder_{family}.csmw")), ModelFile::Encoder(e2e.encoder.clone()))?;
            save_model(&models.join(format!("proxy_decoder_{family}.csmw")), ModelFile::Decoder(e2e.proxy_decoder.clone()))?;
            if protocols.contains(&Method::E2e) {
                out.reports.push(e2e.report.clone());
                let pair = DeployedPair { encoder: e2e.encoder.clone(), decoder: e2e.proxy_decoder.clone(), decoder_id: None };
                out.deployed.insert((Method::E2e, family), pair);
            }
            if protocols.iter().any(|m| matches!(m, Method::SeqDedicated | Method::Common)) {
                let ds = stage(&format!("export:{family}"), export_exchange_dataset(&e2e.encoder, codebook, channels, tc.n_layers))?;
                let ue = Party::Ue(id);
                let ds = out.boundary.transfer(ue, Party::Gnb, ds);
                out.boundary.transfer(ue, Party::Gnb, EncoderId(id));
                save_exchange(&datasets.join(format!("exchange_{family}.csix")), &ds)?;
                save_exchange(&handover.join(format!("exchange_{family}.csix")), &ds)?;
                exported.push((family, e2e.encoder, ds));
            }
        }
    }

    // The network trains on the exchanged datasets only.
    if protocols.contains(&Method::SeqDedicated) {
        for (family, encoder, ds) in &exported {
            let (decoder, mut report) = stage(&format!("seq_dedicated:{family}"), train_dedicated_decoder(ds, tc))?;
            report.family = Some(*family);
            save_model(&models.join(format!("decoder_dedicated_{family}.csmw")), ModelFile::Decoder(decoder.clone()))?;
            out.reports.push(report);
            out.deployed.insert((Method::SeqDedicated, *family), DeployedPair { encoder: encoder.clone(), decoder, decoder_id: None });
        }
    }
    if protocols.contains(&Method::Common) {
        let refs: Vec<&ExchangeDataset> = exported.iter().map(|(_, _, ds)| ds).collect();
        let (decoder, reports) = stage("common", train_common_decoder(&refs, tc))?;
        save_model(&models.join("decoder_common.csmw"), ModelFile::Decoder(decoder.clone()))?;
        for ((family, encoder, _), mut report) in exported.iter().zip(reports) {
            report.family = Some(*family);
            out.reports.push(report);
            let pair = DeployedPair { encoder: encoder.clone(), decoder: decoder.clone(), decoder_id: Some(encoder.encoder_id) };
            out.deployed.insert((Method::Common, *family), pair);
        }
    }

    if protocols.contains(&Method::GnbFirst) {
        let s1 = stage("gnb_first:stage1", gnb_first_stage1(channels, codebook, tc))?;
        save_model(&models.join("decoder_gnb_first.csmw"), ModelFile::Decoder(s1.decoder.clone()))?;
        save_model(&models.join("proxy_encoder_gnb_first.csmw"), ModelFile::Encoder(s1.proxy_encoder.clone()))?;
        save_exchange(&datasets.join("handover_gnb_first.csix"), &s1.handover)?;
        save_exchange(&handover.join("handover_gnb_first.csix"), &s1.handover)?;
        for &family in &cfg.families {
            let id = cfg.encoder_id(family);
            let ue = Party::Ue(id);
            let received = out.boundary.transfer(Party::Gnb, ue, s1.handover.clone());
            out.boundary.transfer(ue, Party::Gnb, EncoderId(id));
            let (encoder, report) =
                stage(&format!("gnb_first:{family}"), distill_ue_encoder(&received, &s1.decoder, family, id, tc))?;
            save_model(&models.join(format!("encoder_gnb_first_{family}.csmw")), ModelFile::Encoder(encoder.clone()))?;
            out.reports.push(report);
            out.deployed.insert((Method::GnbFirst, family), DeployedPair { encoder, decoder: s1.decoder.clone(), decoder_id: None });
        }
    }

    if !out.boundary.crossings.is_empty() {
        for &family in &cfg.families {
            out.boundary.transfer(Party::Gnb, Party::Ue(cfg.encoder_id(family)), codebook.clone());
        }
        write_codebook(BufWriter::new(File::create(handover.join("codebook.csqc"))?), codebook)?;
    }
    Ok(out)
}

/// Mean of per-realization metrics, with per-sub-band traces.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMetrics {
    pub capacity: f64,
    pub sgcs: f64,
    pub layer_sgcs: Vec<f64>,
    pub subband_sgcs: Vec<Vec<f64>>,
}

fn mean_metrics(all: &[LinkMetrics]) -> MeanMetrics {
    let n = all.len().max(1) as f64;
    let layers = all.first().map_or(0, |m| m.layer_sgcs.len());
    let mut subband_sgcs = vec![vec![0.0; N_SUBBANDS]; layers];
    let mut layer_sgcs = vec![0.0; layers];
    let mut capacity = 0.0;
    for m in all {
        capacity += m.capacity;
        for l in 0..layers {
            layer_sgcs[l] += m.layer_sgcs[l];
            for (acc, v) in subband_sgcs[l].iter_mut().zip(&m.subband_sgcs[l]) {
                *acc += v;
            }
        }
    }
    layer_sgcs.iter_mut().chain(subband_sgcs.iter_mut().flatten()).for_each(|v| *v /= n);
    MeanMetrics {
        capacity: capacity / n,
        sgcs: layer_sgcs.iter().sum::<f64>() / layers.max(1) as f64,
        layer_sgcs,
        subband_sgcs,
    }
}

/// Evaluates `f` on every channel with up to `jobs` threads; results keep
/// channel order.
pub fn evaluate_links<F>(channels: &[ChannelRealization], jobs: usize, f: F) -> Result<MeanMetrics>
where
    F: Fn(&ChannelRealization) -> Result<LinkMetrics> + Sync,
{
    if channels.is_empty() {
        return Err(Error::InsufficientData("no evaluation channels".into()));
    }
    let chunk = channels.len().div_ceil(jobs.max(1));
    let parts: Vec<Result<Vec<LinkMetrics>>> = std::thread::scope(|s| {
        let handles: Vec<_> =
            channels.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<_>>>())).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidInput("evaluation thread panicked".into())))).collect()
    });
    let mut all = Vec::with_capacity(channels.len());
    for p in parts {
        all.extend(p?);
    }
    Ok(mean_metrics(&all))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    Ok(())
}

fn run_inner(cfg: &ExperimentConfig, dir: &Path, reports: &mut Vec<TrainReport>) -> Result<(ResultTable, AuditReport)> {
    let codebook = QuantCodebook::default();
    let n_layers = cfg.train.n_layers;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;

    let generate = |s: &ScenarioSpec| stage(&format!("generate:{}", s.label()), s.generate());

    // Primary scenario: every protocol.
    let primary_spec = &cfg.train_scenarios[0];
    let primary = generate(primary_spec)?;
    let handover = dir.join("handover");
    let primary_sys = train_systems(cfg, &cfg.protocols, &primary, &codebook, dir, &handover)?;
    reports.extend(primary_sys.reports.iter().cloned());
    let mut cells = Vec::new();
    for r in &primary_sys.reports {
        let family = r.family.ok_or_else(|| Error::InvalidInput(format!("{} report without a family", r.method)))?;
        for (l, &sgcs) in r.heldout_sgcs.iter().enumerate() {
            cells.push(SgcsCell { family, rank: l + 1, method: r.method, sgcs });
        }
    }

    // Other training scenarios: the deployed protocol only.
    let mut handovers = vec![handover];
    let mut trained: Vec<(String, TrainedSystems)> = vec![(primary_spec.label().to_string(), primary_sys)];
    for spec in &cfg.train_scenarios[1..] {
        let channels = generate(spec)?;
        let sub = dir.join("trained_on").join(spec.label());
        let sys = train_systems(cfg, &[cfg.deployed], &channels, &codebook, &sub, &sub.join("handover"))?;
        reports.extend(sys.reports.iter().cloned());
        handovers.push(sub.join("handover"));
        trained.push((spec.label().to_string(), sys));
    }

    let mut boundary = BoundaryLog::new();
    for (_, sys) in &trained {
        boundary.merge(&sys.boundary);
    }
    let mut audit = vendor_boundary_audit(&boundary);
    let mut dir_audits = Vec::new();
    for h in &handovers {
        let a = stage("audit", audit_handover_dir(h))?;
        audit.passed &= a.passed;
        audit.violations.extend(a.violations.iter().cloned());
        dir_audits.push(a);
    }
    write_json(&dir.join("boundary.json"), &BoundaryFile { log: vendor_boundary_audit(&boundary), handover_dirs: dir_audits })?;
    if !audit.passed {
        return Err(Error::InvalidInput(format!("vendor boundary violated: {}", audit.violations.join("; "))).in_stage("audit"));
    }

    // Links on the eval scenarios.
    let dft = DftCodebook::default();
    let (ri, snr) = (cfg.ri, cfg.snr_db);
    let mut gains = Vec::new();
    let mut traces = Vec::new();
    for spec in &cfg.eval_scenarios {
        let name = format!("evaluate:{}", spec.label());
        let channels = generate(spec)?;
        let base = stage(&name, evaluate_links(&channels, cfg.jobs, |h| baseline_link(h, &dft, ri, snr)))?;
        let ideal = stage(&name, evaluate_links(&channels, cfg.jobs, |h| ideal_link(h, ri, snr)))?;
        for (t, (trained_on, sys)) in trained.iter().enumerate() {
            for &family in &cfg.families {
                let pair = sys.deployed.get(&(cfg.deployed, family)).ok_or_else(|| {
                    Error::InvalidInput(format!("no {} system for {family}", cfg.deployed)).in_stage(name.as_str())
                })?;
                let link = MlLink {
                    encoder: &pair.encoder,
                    decoder: &pair.decoder,
                    codebook: &codebook,
                    decoder_id: pair.decoder_id,
                    ri,
                    snr_db: snr,
                };
                let ml = stage(&name, evaluate_links(&channels, cfg.jobs, |h| link.evaluate(h)))?;
                gains.push(GainRow {
                    eval_scenario: spec.label().to_string(),
                    trained_on: trained_on.clone(),
                    family,
                    ml_capacity: ml.capacity,
                    baseline_capacity: base.capacity,
                    ideal_capacity: ideal.capacity,
                    capacity_gain: (ml.capacity - base.capacity) / base.capacity,
                    ml_sgcs: ml.sgcs,
                    baseline_sgcs: base.sgcs,
                });
                if t == 0 {
                    traces.push(TraceSeries {
                        eval_scenario: spec.label().to_string(),
                        family,
                        ml: ml.subband_sgcs,
                        baseline: base.subband_sgcs.clone(),
                    });
                }
            }
        }
    }

    let table = ResultTable { families: cfg.families.clone(), methods: cfg.protocols.clone(), n_layers, cells, gains, traces };
    stage("report", table.validate())?;
    Ok((table, audit))
}

/// Trains every configured protocol, evaluates the deployed system on the
/// eval scenarios and writes all artifacts under `cfg.output_dir`.
///
/// On failure the artifacts written so far stay in place and a `failed/`
/// directory records the failing stage.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let failed = dir.join(FAILED_DIR);
    if failed.exists() {
        std::fs::remove_dir_all(&failed)?;
    }
    let mut reports = Vec::new();
    let result = run_inner(cfg, &dir, &mut reports);
    write_json(&dir.join("reports.json"), &reports)?;
    match result {
        Ok((table, audit)) => {
            std::fs::write(dir.join(RESULT_FILE), table.to_json()?)?;
            Ok(ExperimentOutcome { table, dir, audit, reports })
        }
        Err(e) => {
            std::fs::create_dir_all(&failed)?;
            let stage_name = match &e {
                Error::Stage { stage, .. } => stage.clone(),
                _ => "setup".to_string(),
            };
            std::fs::write(failed.join("stage.txt"), format!("{stage_name}\n{e}\n"))?;
            log::error!("experiment {} failed in {stage_name}: {e}", cfg.name);
            Err(e)
        }
    }
}
