use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use csifb::channel::{generate_dataset, write_channels, ScenarioConfig};
use csifb::codec::ModelFile;
use csifb::experiment::{
    compare_runs, emit_report, run_experiment, ExperimentConfig, ReportFormat, ResultTable, DEFAULT_DIFF_THRESHOLD,
};
use csifb::interop::{
    audit_handover_dir, export_exchange_dataset, train_common_decoder, train_dedicated_decoder, train_end_to_end,
    train_gnb_first,
};
use csifb::wire::{emulate_link, GnbConfig, RegisteredDecoder, TransportKind, UeConfig};
use csifb::{Error, ExchangeDataset, Result};

mod step;

use step::{load_dataset, load_decoder, save_codebook, save_dataset, save_json, save_model, StepConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "csifb", version, about = "Interoperable ML CSI feedback: training, link emulation and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Inproc,
    Socket,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Txt,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded channel dataset.
    GenChannels {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// UE vendor: joint encoder and proxy decoder training.
    TrainE2e {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// UE vendor: export (dequantised latent, target) pairs.
    ExportDataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Network vendor: dedicated decoder from one exchange dataset.
    TrainDecoder {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Network vendor: one decoder for several exchange datasets.
    TrainCommon {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decoder first at the gNB, then encoder distillation at the UE.
    TrainGnbFirst {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check that a handover directory holds only shareable artifacts.
    Audit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a UE and a gNB endpoint over a transport.
    Emulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "inproc")]
        transport: Transport,
        /// Socket address for `--transport socket`.
        #[arg(long, default_value = "127.0.0.1:0")]
        addr: SocketAddr,
    },
    /// Full experiment from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-emit the tables of a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "txt")]
        format: Format,
        /// Output directory; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cell-wise SGCS deltas between two runs.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DIFF_THRESHOLD)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_STAGE })
        }
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenChannels { scenario, count, seed, out } => {
            let cfg = ScenarioConfig::preset(&scenario, seed)?;
            let channels: Vec<_> = generate_dataset(&cfg, count)?.collect();
            write_channels(BufWriter::new(File::create(&out)?), &channels)?;
            log::info!("wrote {count} {scenario} realizations to {}", out.display());
        }
        Command::TrainE2e { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let out = train_end_to_end(cfg.family()?, cfg.encoder_id()?, &cfg.load_channels()?, &cfg.load_codebook()?, &cfg.train)?;
            save_model(&cfg.path(&cfg.encoder, "encoder")?, ModelFile::Encoder(out.encoder))?;
            if let Some(p) = &cfg.proxy_decoder {
                save_model(p, ModelFile::Decoder(out.proxy_decoder))?;
            }
            save_json(cfg.report.as_ref(), &out.report)?;
        }
        Command::ExportDataset { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let ds = export_exchange_dataset(&cfg.load_encoder()?, &cfg.load_codebook()?, &cfg.load_channels()?, cfg.train.n_layers)?;
            let path = cfg.path(&cfg.dataset, "dataset")?;
            save_dataset(&path, &ds)?;
            log::info!("wrote {} records to {}", ds.records.len(), path.display());
        }
        Command::TrainDecoder { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let ds = load_dataset(&cfg.path(&cfg.dataset, "dataset")?)?;
            let (decoder, report) = train_dedicated_decoder(&ds, &cfg.train)?;
            save_model(&cfg.path(&cfg.decoder, "decoder")?, ModelFile::Decoder(decoder))?;
            save_json(cfg.report.as_ref(), &report)?;
        }
        Command::TrainCommon { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let datasets = cfg.datasets.iter().map(|p| load_dataset(p)).collect::<Result<Vec<_>>>()?;
            let refs: Vec<&ExchangeDataset> = datasets.iter().collect();
            let (decoder, reports) = train_common_decoder(&refs, &cfg.train)?;
            save_model(&cfg.path(&cfg.decoder, "decoder")?, ModelFile::Decoder(decoder))?;
            save_json(cfg.report.as_ref(), &reports)?;
        }
        Command::TrainGnbFirst { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let codebook = cfg.load_codebook()?;
            let out = train_gnb_first(&cfg.load_channels()?, cfg.family()?, cfg.encoder_id()?, &codebook, &cfg.train)?;
            save_model(&cfg.path(&cfg.decoder, "decoder")?, ModelFile::Decoder(out.decoder))?;
            save_model(&cfg.path(&cfg.encoder, "encoder")?, ModelFile::Encoder(out.encoder))?;
            if let Some(dir) = &cfg.handover_dir {
                std::fs::create_dir_all(dir)?;
                save_dataset(&dir.join("handover.csix"), &out.handover)?;
                save_codebook(&dir.join("codebook.csqc"), &codebook)?;
            }
            save_json(cfg.report.as_ref(), &[out.stage1, out.report])?;
        }
        Command::Audit { config, seed } => {
            let cfg = StepConfig::load(&config, seed)?;
            let report = audit_handover_dir(&cfg.path(&cfg.handover_dir, "handover_dir")?)?;
            save_json(cfg.report.as_ref(), &report)?;
            if !report.passed {
                return Err(Error::InvalidInput(report.violations.join("; ")).in_stage("audit"));
            }
        }
        Command::Emulate { config, seed, transport, addr } => {
            let cfg = StepConfig::load(&config, seed)?;
            let em = cfg.emulate()?;
            let codebook = cfg.load_codebook()?;
            let mut registry = BTreeMap::new();
            for (&id, path) in &em.registry {
                let decoder = load_decoder(path)?;
                registry.insert(id, RegisteredDecoder { decoder, decoder_id: em.decoder_ids.get(&id).copied() });
            }
            let ue = UeConfig { encoder: cfg.load_encoder()?, codebook: codebook.clone(), model_id: em.model_id, ri: em.ri, snr_db: em.snr_db };
            let gnb = GnbConfig { registry, codebook, snr_db: em.snr_db, ticks: em.ticks };
            let kind = match transport {
                Transport::Inproc => TransportKind::Inproc,
                Transport::Socket => TransportKind::Socket(addr),
            };
            let log = emulate_link(&ue, &gnb, &cfg.load_channels()?, kind)?;
            match &em.log {
                Some(p) => log.write_jsonl(BufWriter::new(File::create(p)?))?,
                None => log.write_jsonl(std::io::stdout().lock())?,
            }
            log::info!("{} ticks, {} nack(s)", log.ticks().len(), log.nack_count());
        }
        Command::Run { config, jobs, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let out = run_experiment(&cfg)?;
            for format in [ReportFormat::Txt, ReportFormat::Csv] {
                emit_report(&out.table, &out.dir, format)?;
            }
            print!("{}", csifb::experiment::sgcs_table_text(&out.table, ReportFormat::Txt)?);
            print!("{}", csifb::experiment::gain_table_text(&out.table, ReportFormat::Txt));
        }
        Command::Report { run, format, out } => {
            let table = ResultTable::load(&run)?;
            let format = match format {
                Format::Txt => ReportFormat::Txt,
                Format::Csv => ReportFormat::Csv,
            };
            for p in emit_report(&table, out.as_ref().unwrap_or(&run), format)? {
                println!("{}", p.display());
            }
        }
        Command::Compare { a, b, threshold } => {
            let diff = compare_runs(&a, &b, threshold)?;
            print!("{}", diff.summary());
        }
    }
    Ok(())
}
