use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use casnet::baselines::{mvdr_stft_config, oracle_mvdr, MVDR_WIN_LEN};
use casnet::dsp::StftConfig;
use casnet::metrics::{si_sdr, stoi};
use casnet::model::{ModelConfig, WeightManifest};
use casnet::pipeline::{sweep_rank, Enhancer, Transmission, SWEEP_CSV_HEADER};
use casnet::scene::{render_scene, SceneSpec};
use casnet::transport::{replay, serialize_with_flags, write_container, ChannelModel, FLAG_END_OF_STREAM};
use casnet::wav::{read_scene_dir, read_wav, write_scene_dir, write_wav};

#[derive(Parser)]
#[command(name = "casnet", version, about = "Compression-aware distributed speech enhancement")]
struct Cli {
    /// Seed for random scenes, random weights and the channel simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Model configuration (JSON) used when weights are created.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Compressed,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Render a multichannel scene into a directory.
    Simulate {
        /// Scene file (TOML). Without it a random scene is drawn from --seed.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Microphones of a random scene.
        #[arg(long, default_value_t = 6)]
        mics: usize,
        /// Override the scene SNR in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
        /// Dry speech WAV; synthetic speech otherwise.
        #[arg(long)]
        speech: Option<PathBuf>,
        /// Noise WAVs, one per noise source.
        #[arg(long = "noise")]
        noises: Vec<PathBuf>,
        /// Length of synthetic signals in seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance the reference channel of a scene directory.
    Enhance {
        scene_dir: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        /// Frame loss probability.
        #[arg(long, default_value_t = 0.0)]
        drop: f64,
        /// Maximum delay in frames.
        #[arg(long, default_value_t = 0)]
        delay: u32,
        #[arg(long, value_enum, default_value_t = Mode::Compressed)]
        mode: Mode,
        /// Also write the node frames as sent, for `replay`.
        #[arg(long)]
        frames_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oracle MVDR on a scene file.
    Mvdr {
        #[arg(long)]
        scene: PathBuf,
        /// Beamformer STFT window in samples; the hop is half of it.
        #[arg(long, default_value_t = MVDR_WIN_LEN)]
        win_len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance once per rank and write a CSV.
    SweepRank {
        scene_dir: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Inclusive range `a..b` or a comma-separated list.
        #[arg(long, default_value = "1..16")]
        ranks: String,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Summarize a frame container.
    Replay { file: PathBuf },
    /// Print a weight manifest's configuration and tensors.
    DescribeWeights { file: PathBuf },
    /// SI-SDR and STOI of an estimate against a reference.
    Eval {
        estimate: PathBuf,
        reference: PathBuf,
    },
    /// Write a randomly initialized weight manifest.
    InitWeights {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_ranks(s: &str) -> anyhow::Result<Vec<usize>> {
    let ranks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().context("range start")?;
        let b: usize = b.trim().trim_start_matches('=').parse().context("range end")?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|r| r.trim().parse().context("rank list"))
            .collect::<anyhow::Result<_>>()?
    };
    if ranks.is_empty() {
        bail!("empty rank list `{s}`");
    }
    Ok(ranks)
}

fn model_config(path: Option<&Path>) -> anyhow::Result<ModelConfig> {
    let Some(path) = path else {
        return Ok(ModelConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let cfg: ModelConfig =
        serde_json::from_str(&text).with_context(|| format!("{}: model config", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn absolute(p: &Path) -> anyhow::Result<PathBuf> {
    std::fs::canonicalize(p).with_context(|| p.display().to_string())
}

fn print_row(label: &str, sisdr: f64, stoi_v: Option<f64>, nsa: Option<f64>) {
    let fmt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
    println!(
        "{label:<14} {:>8} {:>7} {:>7}",
        format!("{sisdr:.2}"),
        fmt(stoi_v, 3),
        fmt(nsa, 4)
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            scene,
            mics,
            snr,
            speech,
            noises,
            duration,
            out,
        } => {
            let mut spec = match &scene {
                Some(p) => SceneSpec::load(p)?,
                None => SceneSpec::random(cli.seed, mics)?,
            };
            if let Some(snr) = snr {
                spec.snr_db = snr;
            }
            let mut sources = spec.sources.clone().unwrap_or_default();
            if let Some(p) = speech {
                sources.speech = Some(p);
            }
            if !noises.is_empty() {
                sources.noises = noises;
            }
            if let Some(d) = duration {
                sources.duration_secs = d;
            }
            for p in sources.speech.iter_mut().chain(sources.noises.iter_mut()) {
                *p = absolute(p)?;
            }
            spec.sources = Some(sources);
            spec.validate()?;
            let (dry, noise) = spec.load_sources()?;
            let rendered = render_scene(&spec, &dry, &noise)?;
            write_scene_dir(&out, &spec, &rendered)?;
            println!(
                "wrote {} channels, target and manifest to {} (seed {}, SNR {} dB)",
                rendered.n_mics(),
                out.display(),
                spec.seed,
                spec.snr_db
            );
        }
        Command::Enhance {
            scene_dir,
            weights,
            rank,
            drop,
            delay,
            mode,
            frames_out,
            out,
        } => {
            let enhancer = Enhancer::from_manifest(&WeightManifest::load(&weights)?)?;
            let dir = read_scene_dir(&scene_dir, enhancer.stft_config().fs)?;
            let transmission = match mode {
                Mode::Raw => Transmission::Raw,
                Mode::Compressed => Transmission::Compressed {
                    rank,
                    channel: ChannelModel {
                        drop_prob: drop,
                        max_delay_frames: delay,
                        jitter_seed: cli.seed,
                    },
                },
            };
            if let (Some(path), Mode::Compressed) = (&frames_out, mode) {
                let mut frames = Vec::new();
                for (i, x) in dir.mix.iter().enumerate().skip(1) {
                    let stream = enhancer.edge_compress(x, rank)?;
                    for (t, f) in stream.iter().enumerate() {
                        let flags = if t + 1 == stream.len() { FLAG_END_OF_STREAM } else { 0 };
                        frames.push(serialize_with_flags(f, i as u16, t as u32, flags)?);
                    }
                }
                write_container(path, &frames)?;
            }
            let result = enhancer.run(&dir.mix, &transmission)?;
            write_wav(&out, &result.enhanced.waveform)?;
            println!("{:<14} {:>8} {:>7} {:>7}", "signal", "si-sdr", "stoi", "nsa");
            if let Some(target) = &dir.target {
                let noisy = &dir.mix[0];
                print_row(
                    "noisy",
                    si_sdr(&noisy.samples, &target.samples)?,
                    stoi(&noisy.samples, &target.samples, target.fs).ok(),
                    None,
                );
                let est = &result.enhanced.waveform;
                let label = match mode {
                    Mode::Raw => "raw".to_string(),
                    Mode::Compressed => format!("rank {rank}"),
                };
                print_row(
                    &label,
                    si_sdr(&est.samples, &target.samples)?,
                    stoi(&est.samples, &target.samples, target.fs).ok(),
                    Some(result.nsa.nsa),
                );
            }
            println!(
                "nsa {:.4} (asymptotic {:.4})",
                result.nsa.nsa, result.nsa.asymptotic
            );
            if let Some(link) = result.link {
                println!(
                    "link: {} frames / {} bytes sent, {} delivered, {} late",
                    link.frames_sent,
                    link.bytes_sent,
                    link.frames_delivered,
                    link.assembly.discarded_late
                );
            }
        }
        Command::Mvdr { scene, win_len, out } => {
            let spec = SceneSpec::load(&scene)?;
            let (dry, noise) = spec.load_sources()?;
            let rendered = render_scene(&spec, &dry, &noise)?;
            let cfg = StftConfig {
                win_len,
                hop: win_len / 2,
                fs: spec.fs,
                ..mvdr_stft_config()
            };
            let est = oracle_mvdr(&rendered, &cfg)?;
            write_wav(&out, &est)?;
            let target = &rendered.target.samples;
            println!("{:<14} {:>8} {:>7} {:>7}", "signal", "si-sdr", "stoi", "nsa");
            let noisy = &rendered.reference().samples;
            print_row("noisy", si_sdr(noisy, target)?, stoi(noisy, target, spec.fs).ok(), None);
            print_row(
                "oracle mvdr",
                si_sdr(&est.samples, target)?,
                stoi(&est.samples, target, spec.fs).ok(),
                Some(1.0),
            );
        }
        Command::SweepRank {
            scene_dir,
            weights,
            ranks,
            out_csv,
        } => {
            let ranks = parse_ranks(&ranks)?;
            let enhancer = Enhancer::from_manifest(&WeightManifest::load(&weights)?)?;
            let dir = read_scene_dir(&scene_dir, enhancer.stft_config().fs)?;
            let target = dir
                .target
                .with_context(|| format!("{}: target.wav is required", scene_dir.display()))?;
            let rows = sweep_rank(&enhancer, &dir.mix, &target, &ranks)?;
            let mut csv = String::from(SWEEP_CSV_HEADER);
            csv.push('\n');
            for r in &rows {
                csv.push_str(&r.csv_line());
                csv.push('\n');
            }
            std::fs::write(&out_csv, csv).with_context(|| out_csv.display().to_string())?;
            println!("wrote {} rows to {}", rows.len(), out_csv.display());
        }
        Command::Replay { file } => {
            let bytes = std::fs::read(&file).with_context(|| file.display().to_string())?;
            let (_, report) = replay(&bytes).with_context(|| file.display().to_string())?;
            println!(
                "{} frames, {} corrupt, {} payload bytes",
                report.frames, report.corrupt, report.payload_bytes
            );
            println!("{:>6} {:>7} {:>6} {:>6} {:>8} {:>5} {:>6}", "node", "frames", "first", "last", "missing", "rank", "ended");
            for (id, n) in &report.nodes {
                println!(
                    "{id:>6} {:>7} {:>6} {:>6} {:>8} {:>5} {:>6}",
                    n.frames, n.first, n.last, n.missing, n.rank, n.ended
                );
            }
        }
        Command::DescribeWeights { file } => {
            let m = WeightManifest::load(&file)?;
            println!("{}", serde_json::to_string_pretty(&m.config)?);
            println!(
                "{} tensors, {} parameters, sha256 {}",
                m.len(),
                m.parameter_count(),
                m.digest_hex()?
            );
            for (name, t) in m.tensors() {
                println!("  {name:<28} {:?}", t.shape);
            }
            m.validate()?;
        }
        Command::Eval {
            estimate,
            reference,
        } => {
            let r = read_wav(&reference, None)?;
            let e = read_wav(&estimate, Some(r.fs))?;
            if e.len() != r.len() {
                bail!(
                    "length mismatch: {} has {} samples, {} has {}",
                    estimate.display(),
                    e.len(),
                    reference.display(),
                    r.len()
                );
            }
            println!("si-sdr {:.3} dB", si_sdr(&e.samples, &r.samples)?);
            println!("stoi   {:.4}", stoi(&e.samples, &r.samples, r.fs)?);
        }
        Command::InitWeights { out } => {
            let cfg = model_config(cli.config.as_deref())?;
            let m = WeightManifest::random(cfg, cli.seed)?;
            m.save(&out)?;
            println!("wrote {} ({} parameters, sha256 {})", out.display(), m.parameter_count(), m.digest_hex()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
