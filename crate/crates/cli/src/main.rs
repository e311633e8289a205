use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdlab::attacks::{attack, AttackConfig, AttackKind};
use cdlab::dataset::{desk_dataset, natural_corpus, Dataset};
use cdlab::harness::{
    dump_samples, emit_table, evaluate_accuracy, run_experiment, ExperimentGrid, Report,
    TableFormat, TableKind,
};
use cdlab::imagecore::{read_pnm, write_pnm};
use cdlab::model::{train, Model, TrainConfig};
use cdlab::ratecontrol::{
    compress_max, compress_to_psnr_dct, compress_to_psnr_wavelet, decode_bytes, Codec, RateTarget,
    WaveletConfig,
};
use cdlab::{dct_codec, wavelet_codec, Error, Image, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cdlab",
    version,
    about = "Lossy compression as a defense against adversarial images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier on a dataset directory or the generated desk set.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write an adversarial version of one image.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        label: usize,
        #[arg(long, default_value = "fgsm")]
        kind: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compress an image to a PSNR target, a fixed setting, or maximally.
    Compress {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value = "dct")]
        codec: Codec,
        #[arg(long, conflicts_with_all = ["max", "multiplier"])]
        psnr: Option<f64>,
        #[arg(long)]
        max: bool,
        /// DCT quantization multiplier.
        #[arg(long)]
        multiplier: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the decoded image.
        #[arg(long)]
        decoded: Option<PathBuf>,
    },
    /// Classify an image, a DCX1/WVX1 stream, or a labelled dataset directory.
    Classify {
        #[arg(long)]
        model: PathBuf,
        input: PathBuf,
    },
    /// Run an experiment grid and write the report as JSON.
    Experiment {
        config: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Render a report as the PSNR-target table or the maximum-compression table.
    Table {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Psnr)]
        kind: KindArg,
        #[arg(long, default_value = "markdown")]
        format: TableFormat,
    },
    /// Write clean / adversarial / compressed sample triplets for every cell.
    Dump {
        config: PathBuf,
        #[arg(long, short, default_value_t = 1)]
        n: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Desk)]
        kind: SynthKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Images per class (desk) or in total (natural).
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory; the generated desk set is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    desk_seed: u64,
    #[arg(long, default_value_t = 300)]
    per_class: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Psnr,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Desk,
    Natural,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Decode { .. } | Error::Format(_) | Error::Csv(_) => 3,
        Error::Invariant(_) => 4,
        _ => 2,
    }
}

fn load_image_or_stream(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    if bytes.starts_with(dct_codec::MAGIC) {
        decode_bytes(Codec::Dct, &bytes)
    } else if bytes.starts_with(wavelet_codec::MAGIC) {
        decode_bytes(Codec::Wavelet, &bytes)
    } else {
        cdlab::imagecore::decode_pnm(&bytes)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            epochs,
            seed,
            out,
        } => {
            let set = match data.data {
                Some(dir) => Dataset::load(dir)?,
                None => desk_dataset(data.desk_seed, data.per_class),
            };
            let cfg = TrainConfig {
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let (model, report) = train(&set, &cfg)?;
            model.save(&out)?;
            println!(
                "trained {} images, final loss {:.4}, train accuracy {:.4}, hash {}",
                set.len(),
                report.epoch_loss.last().copied().unwrap_or(f64::NAN),
                report.train_accuracy,
                model.hash()
            );
        }
        Command::Attack {
            model,
            input,
            label,
            kind,
            epsilon,
            alpha,
            iterations,
            out,
        } => {
            let model = Model::load(model)?;
            let img = read_pnm(input)?;
            let cfg = AttackConfig {
                kind: kind.parse::<AttackKind>()?,
                epsilon,
                alpha,
                iterations,
            };
            let adv = attack(&model, &img, label, &cfg)?;
            write_pnm(&out, &adv)?;
            println!(
                "{}: prediction {} -> {}",
                cfg.label(),
                model.predict(&img)?,
                model.predict(&adv)?
            );
        }
        Command::Compress {
            input,
            codec,
            psnr,
            max,
            multiplier,
            out,
            decoded,
        } => {
            let img = read_pnm(input)?;
            let cfg = WaveletConfig::default();
            let result = match (psnr, max, multiplier) {
                (Some(t), false, None) => {
                    let target = RateTarget::new(t)?;
                    match codec {
                        Codec::Dct => compress_to_psnr_dct(&img, &target)?,
                        Codec::Wavelet => compress_to_psnr_wavelet(&img, &target, &cfg)?,
                    }
                }
                (None, true, None) => compress_max(&img, codec, None, &cfg)?,
                (None, false, Some(m)) if codec == Codec::Dct => {
                    let stream = dct_codec::encode_dct(&img, m, false)?;
                    let bytes = stream.to_bytes();
                    let dec = dct_codec::decode_dct(&stream)?;
                    write_file(&out, &bytes)?;
                    if let Some(p) = decoded {
                        write_pnm(p, &dec.quantized())?;
                    }
                    println!(
                        "dct m={m}: {} bytes, {}",
                        bytes.len(),
                        cdlab::imagecore::psnr(&img, &dec)?
                    );
                    return Ok(());
                }
                _ => {
                    return Err(Error::Parameter(
                        "give exactly one of --psnr, --max or --multiplier (dct only)".into(),
                    ))
                }
            };
            write_file(&out, &result.bytes)?;
            if let Some(p) = decoded {
                write_pnm(p, &result.decoded.quantized())?;
            }
            println!(
                "{}: {} bytes, {}, exact hit {}",
                codec, result.byte_size, result.achieved_db, result.exact_hit
            );
        }
        Command::Classify { model, input } => {
            let model = Model::load(model)?;
            if input.is_dir() {
                let set = Dataset::load(&input)?;
                println!(
                    "accuracy {:.4}",
                    evaluate_accuracy(&model, &set.images, &set.labels)?
                );
            } else {
                let img = load_image_or_stream(&input)?.quantized();
                println!("{}", model.predict(&img)?);
            }
        }
        Command::Experiment { config, out } => {
            let grid = ExperimentGrid::load(&config)?;
            let report = run_experiment(&grid)?;
            let json = report.to_json()?;
            match out.or_else(|| grid.output.map(|d| d.join("report.json"))) {
                Some(path) => {
                    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                            path: parent.into(),
                            source: e,
                        })?;
                    }
                    write_file(&path, json.as_bytes())?;
                    print!(
                        "{}",
                        emit_table(&report, TableKind::Psnr, TableFormat::Markdown)
                    );
                }
                None => println!("{json}"),
            }
        }
        Command::Table {
            report,
            kind,
            format,
        } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Error::Io {
                path: report.clone(),
                source: e,
            })?;
            let report = Report::from_json(&text)?;
            let kind = match kind {
                KindArg::Psnr => TableKind::Psnr,
                KindArg::Max => TableKind::Max,
            };
            print!("{}", emit_table(&report, kind, format));
        }
        Command::Dump { config, n, out } => {
            let grid = ExperimentGrid::load(&config)?;
            let data = grid.dataset.load()?;
            let seed = grid.seeds[0];
            let model = match (&grid.model, &grid.train_data) {
                (Some(p), _) => Model::load(p)?,
                (None, Some(src)) => {
                    let cfg = TrainConfig {
                        seed,
                        ..grid.train.clone()
                    };
                    train(&src.load()?, &cfg)?.0
                }
                (None, None) => {
                    return Err(Error::Parameter("need a model or training data".into()))
                }
            };
            let entries = dump_samples(&model, &data, &grid, n, &out)?;
            println!("wrote {} triplets to {}", entries.len(), out.display());
        }
        Command::Synth {
            kind,
            seed,
            count,
            size,
            out,
        } => match kind {
            SynthKind::Desk => {
                let set = desk_dataset(seed, count);
                set.save(&out)?;
                println!("wrote {} images, hash {}", set.len(), set.hash());
            }
            SynthKind::Natural => {
                std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
                for (i, img) in natural_corpus(seed, count, size).iter().enumerate() {
                    let ext = if img.channels() == 3 { "ppm" } else { "pgm" };
                    let name = format!("natural_{i:05}.{ext}");
                    write_pnm(out.join(&name), img)?;
                }
                println!("wrote {count} images");
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
