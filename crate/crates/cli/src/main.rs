mod analysis;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mdcn::audio::{read_wav, write_wav, SAMPLE_RATE};
use mdcn::codec::{decode_core, decode_neural, encode_audio, EncodeOptions, MAX_TARGET_KBPS, MIN_TARGET_KBPS};
use mdcn::coding::RateStatus;
use mdcn::mdctnet::{load_checkpoint, ModelConfig};
use mdcn::training::{train_loop, DatasetSpec, TrainOutputs, TrainingConfig};

#[derive(Parser)]
#[command(name = "mdcn", version, about = "MDCT perceptual codec with a neural decoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecodePath {
    Core,
    Neural,
}

impl DecodePath {
    fn name(self) -> &'static str {
        match self {
            DecodePath::Core => "core",
            DecodePath::Neural => "neural",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Encode a mono 48 kHz WAV file
    Encode {
        input: PathBuf,
        output: PathBuf,
        /// Target bitrate in kb/s (20 to 32)
        #[arg(long, default_value_t = 24.0)]
        bitrate: f64,
    },
    /// Decode a stream to a WAV file
    Decode {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = DecodePath::Core)]
        path: DecodePath,
        /// Model checkpoint, required for the neural path
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the decoder model
    Train {
        /// Text list of WAV files, one per line
        manifest: PathBuf,
        /// Directory for the checkpoint, loss CSV and bitstreams
        #[arg(long)]
        out: PathBuf,
        /// key = value model settings
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// key = value training settings
        #[arg(long)]
        training_config: Option<PathBuf>,
        /// Continue from the saved state in the output directory
        #[arg(long)]
        resume: bool,
    },
    /// Log-spectral distance between two WAV files
    Eval { reference: PathBuf, test: PathBuf },
    /// Export a 0-18 kHz spectrogram as PGM and optionally CSV
    Spectrogram {
        input: PathBuf,
        pgm: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print the band layouts
    Bands,
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MDCN_THREADS") {
        let n: usize = v.parse().with_context(|| format!("MDCN_THREADS={v:?} is not a number"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<mdcn::audio::AudioBuffer> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn encode(input: &Path, output: &Path, bitrate: f64) -> Result<()> {
    if !(MIN_TARGET_KBPS..=MAX_TARGET_KBPS).contains(&bitrate) {
        bail!("bitrate {bitrate} kb/s is outside {MIN_TARGET_KBPS}..{MAX_TARGET_KBPS}");
    }
    let audio = read_input(input)?;
    let enc = encode_audio(&audio, &EncodeOptions::at_kbps(bitrate))?;
    match enc.rate.status {
        RateStatus::Floor => eprintln!("warning: rate floor reached; the signal needs fewer bits than requested"),
        RateStatus::Ceiling => eprintln!("warning: rate ceiling reached; the coarsest step exceeds the target"),
        RateStatus::Missed => eprintln!("warning: target rate missed by the nearest quantizer step"),
        RateStatus::Success => {}
    }
    fs::write(output, &enc.bytes).with_context(|| format!("writing {}", output.display()))?;
    let shorts = enc.sequence.frames().iter().filter(|w| w.is_short()).count();
    println!(
        "{}: {:.3} s, {} frames ({} short), step offset {:+.2} dB, {:.2} kb/s",
        output.display(),
        audio.duration_secs(),
        enc.records.len(),
        shorts,
        enc.header.step_db_offset,
        enc.file_kbps()
    );
    Ok(())
}

fn decode(input: &Path, output: &Path, path: DecodePath, model: Option<&Path>, seed: u64) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let audio = match path {
        DecodePath::Core => decode_core(&bytes)?,
        DecodePath::Neural => {
            let model = model.context("--path neural requires --model")?;
            let params = load_checkpoint(model).with_context(|| format!("loading {}", model.display()))?;
            decode_neural(&bytes, &params, seed)?
        }
    };
    write_wav(output, &audio).with_context(|| format!("writing {}", output.display()))?;
    let secs = audio.len() as f64 / SAMPLE_RATE as f64;
    let kbps = if secs > 0.0 { bytes.len() as f64 * 8.0 / secs / 1000.0 } else { 0.0 };
    println!("{}: {secs:.3} s, {kbps:.2} kb/s, path {}", output.display(), path.name());
    Ok(())
}

fn read_config<T>(path: Option<&Path>, parse: fn(&str) -> mdcn::Result<T>, default: T) -> Result<T> {
    match path {
        None => Ok(default),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

fn train(manifest: &Path, out: &Path, model: Option<&Path>, training: Option<&Path>, resume: bool) -> Result<()> {
    let model = read_config(model, ModelConfig::from_key_values, ModelConfig::toy())?;
    let cfg = read_config(training, TrainingConfig::from_key_values, TrainingConfig::default())?;
    let spec = DatasetSpec::load(manifest)?;
    fs::create_dir_all(out)?;
    let dataset = spec.prepare(&out.join("bitstreams"))?;
    let outputs = TrainOutputs {
        checkpoint: out.join("model.mdnw"),
        loss_csv: out.join("loss.csv"),
    };
    let report = train_loop(&dataset, &model, &cfg, &outputs, resume)?;
    let last = report.history.last();
    println!(
        "{} train / {} validation items, {} steps this run ({} per epoch), last train NLL {}, best validation NLL {:.4}",
        dataset.train.len(),
        dataset.validation.len(),
        report.history.len(),
        report.steps_per_epoch,
        last.map_or("-".into(), |r| format!("{:.4}", r.train_nll)),
        report.best_val
    );
    println!("checkpoint {}", outputs.checkpoint.display());
    Ok(())
}

fn eval(reference: &Path, test: &Path) -> Result<()> {
    let (r, t) = (read_input(reference)?, read_input(test)?);
    let lsd = analysis::log_spectral_distance(&r, &t)?;
    println!(
        "LSD {lsd:.3} dB (reference {:.3} s, test {:.3} s)",
        r.duration_secs(),
        t.duration_secs()
    );
    Ok(())
}

fn spectrogram(input: &Path, pgm: &Path, csv: Option<&Path>) -> Result<()> {
    let spec = analysis::spectrogram(&read_input(input)?)?;
    analysis::write_pgm(BufWriter::new(File::create(pgm)?), &spec)?;
    if let Some(csv) = csv {
        analysis::write_csv(BufWriter::new(File::create(csv)?), &spec)?;
    }
    println!("{}: {} frames x {} lines", pgm.display(), spec.len(), analysis::SPECTROGRAM_LINES);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Encode { input, output, bitrate } => encode(&input, &output, bitrate),
        Command::Decode {
            input,
            output,
            path,
            model,
            seed,
        } => decode(&input, &output, path, model.as_deref(), seed),
        Command::Train {
            manifest,
            out,
            model_config,
            training_config,
            resume,
        } => train(&manifest, &out, model_config.as_deref(), training_config.as_deref(), resume),
        Command::Eval { reference, test } => eval(&reference, &test),
        Command::Spectrogram { input, pgm, csv } => spectrogram(&input, &pgm, csv.as_deref()),
        Command::Bands => {
            print!("{}", mdcn::perceptual::band_tables_text());
            Ok(())
        }
    }
}
