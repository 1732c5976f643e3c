//! `scodec`: encode, decode, check, inspect, evaluate and benchmark.
//!
//! Exit codes: 0 success, 1 I/O or image error, 2 format/config/usage error,
//! 3 model mismatch, 4 roundtrip symbol mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scodec::container::{Container, COLOR_LEN, HEADER_LEN, STREAMS};
use scodec::kv::KeyValues;
use scodec::metrics::{eval_corpus, ms_ssim_levels, psnr, CorpusModel};
use scodec::metrics::ms_ssim::max_levels;
use scodec::nets::weights::WEIGHTS_MAGIC;
use scodec::nets::{TransformConfig, WeightStore};
use scodec::par;
use scodec::pipeline::image_io::{load_image, save_image};
use scodec::pipeline::{
    one_step_denoise, padded_extent, Codec, DecodeOptions, EncodeOptions, PixelTiling, PredictorKind,
};
use scodec::Error;

const WEIGHTS_ENV: &str = "SCODEC_WEIGHTS";

#[derive(Parser, Debug)]
#[command(name = "scodec", version, about = "Latent-space extreme image codec")]
struct Cli {
    /// Worker threads (0 = all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on stderr; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// key=value settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress an image into an SCBS container.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        enc: EncodeArgs,
        /// Marks the container for tiled decoding; symbols are unaffected.
        #[command(flatten)]
        tiling: TileArgs,
    },
    /// Reconstruct an image (PNG, or PPM for .ppm/.pnm) from a container.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        dec: DecodeArgs,
    },
    /// Encode and decode in memory and check the symbols survive.
    Roundtrip {
        input: PathBuf,
        /// Also write the reconstruction.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        enc: EncodeArgs,
        #[command(flatten)]
        dec: DecodeArgs,
    },
    /// Print the header and stream table of a container, or a weight file summary.
    Inspect { input: PathBuf },
    /// Evaluate every PNG/PPM image of a folder with one or more models.
    Eval {
        dir: PathBuf,
        /// `LABEL=PATH` of a weight file; repeat for a rate ladder.
        #[arg(long = "model", value_name = "LABEL=PATH")]
        models: Vec<String>,
        /// Write the TSV report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write a rate-PSNR SVG curve.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        enc: EncodeArgs,
        #[command(flatten)]
        dec: DecodeArgs,
    },
    /// Per-stage wall time over repeated runs.
    Bench {
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        dec: DecodeArgs,
    },
    /// Write a weight file with random parameters.
    InitWeights {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Default)]
        preset: Preset,
        /// key=value transform configuration, instead of a preset.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Default,
    Tiny,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Weight file; falls back to the config file, then $SCODEC_WEIGHTS.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct EncodeArgs {
    /// Leave out the 96-bit color statistics.
    #[arg(long)]
    no_color_fix: bool,
    /// Diffusion timestep index stored in the header.
    #[arg(long)]
    timestep: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct DecodeArgs {
    #[arg(long, value_parser = ["zero", "toy"])]
    predictor: Option<String>,
    #[command(flatten)]
    tiling: TileArgs,
}

#[derive(Args, Debug, Clone)]
struct TileArgs {
    /// Tile size in pixels for the pixel-space stages (multiple of 256).
    #[arg(long)]
    tile: Option<usize>,
    /// Tile overlap in pixels (multiple of 16).
    #[arg(long)]
    overlap: Option<usize>,
}

/// Settings after merging the config file under the flags.
struct Settings {
    file: KeyValues,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self, Error> {
        let file = match path {
            Some(p) => KeyValues::parse(&std::fs::read_to_string(p)?)?,
            None => KeyValues::default(),
        };
        const KNOWN: [&str; 8] = ["weights", "threads", "verbose", "predictor", "tile", "overlap", "color_fix", "timestep"];
        if let Some(k) = file.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Config(format!("unknown config key `{k}`")));
        }
        Ok(Self { file })
    }

    fn weights(&self, flag: &ModelArgs) -> Result<PathBuf, Error> {
        flag.weights
            .clone()
            .or_else(|| self.file.get("weights").map(PathBuf::from))
            .or_else(|| std::env::var_os(WEIGHTS_ENV).map(PathBuf::from))
            .ok_or_else(|| Error::Config(format!("no weight file: pass --weights, set `weights` in the config or {WEIGHTS_ENV}")))
    }

    fn encode(&self, a: &EncodeArgs, tiled: bool) -> Result<EncodeOptions, Error> {
        let color_fix = !a.no_color_fix && self.file.parsed_or("color_fix", true)?;
        let timestep = match a.timestep {
            Some(t) => t,
            None => self.file.parsed_or("timestep", EncodeOptions::default().timestep)?,
        };
        Ok(EncodeOptions {
            color_fix,
            timestep,
            tiled,
        })
    }

    fn tiling(&self, a: &TileArgs) -> Result<Option<PixelTiling>, Error> {
        let tile = a.tile.map(Ok).or_else(|| self.file.parsed("tile").transpose()).transpose()?;
        let overlap = a.overlap.map(Ok).or_else(|| self.file.parsed("overlap").transpose()).transpose()?;
        match (tile, overlap) {
            (None, None) => Ok(None),
            (Some(tile), Some(overlap)) => {
                let t = PixelTiling { tile, overlap };
                t.latent()?;
                Ok(Some(t))
            }
            _ => Err(Error::Config("--tile and --overlap must be given together".into())),
        }
    }

    fn decode(&self, a: &DecodeArgs) -> Result<DecodeOptions, Error> {
        let predictor: PredictorKind = match &a.predictor {
            Some(p) => p.parse()?,
            None => self.file.parsed_or("predictor", PredictorKind::Zero)?,
        };
        Ok(DecodeOptions {
            predictor,
            tiling: self.tiling(&a.tiling)?,
            ..Default::default()
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Image(_) => 1,
        Error::ModelMismatch { .. } => 3,
        _ => 2,
    }
}

fn load_codec(path: &Path) -> Result<Codec, Error> {
    let store = WeightStore::load(path)?;
    log::info!("loaded {} ({} tensors, model {})", path.display(), store.len(), store.model_id());
    Codec::new(&store)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let settings = match Settings::load(cli.config.as_deref()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let verbose = if cli.verbose > 0 {
        cli.verbose
    } else {
        settings.file.parsed_or("verbose", 0u8).unwrap_or(0)
    };
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let threads = match cli.threads.map(Ok).unwrap_or_else(|| settings.file.parsed_or("threads", 0usize)) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match par::with_threads(threads, || run(cli.command, &settings)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command, s: &Settings) -> Result<u8, Error> {
    match cmd {
        Command::Encode {
            input,
            output,
            model,
            enc,
            tiling,
        } => {
            let tiled = s.tiling(&tiling)?.is_some();
            let codec = load_codec(&s.weights(&model)?)?;
            let image = load_image(&input)?;
            let encoded = codec.encode(&image, &s.encode(&enc, tiled)?)?;
            std::fs::write(&output, &encoded.bytes)?;
            let c = &encoded.container;
            let streams: Vec<String> = ["z", "g1", "g2", "g3", "g4"]
                .iter()
                .zip(c.streams.iter())
                .map(|(n, st)| format!("{n}_bits={}", 8 * st.len()))
                .collect();
            println!(
                "bytes={} bpp={:.6} header_bits={} color_bits={} table_bits={} {}",
                encoded.bytes.len(),
                c.bpp(),
                8 * HEADER_LEN,
                if c.color.is_some() { 8 * COLOR_LEN } else { 0 },
                32 * STREAMS,
                streams.join(" ")
            );
            Ok(0)
        }
        Command::Decode {
            input,
            output,
            model,
            dec,
        } => {
            let codec = load_codec(&s.weights(&model)?)?;
            let bytes = std::fs::read(&input)?;
            let decoded = codec.decode(&bytes, &s.decode(&dec)?)?;
            save_image(&output, &decoded.image)?;
            println!("width={} height={} output={}", decoded.image.width(), decoded.image.height(), output.display());
            Ok(0)
        }
        Command::Roundtrip {
            input,
            output,
            model,
            enc,
            dec,
        } => {
            let codec = load_codec(&s.weights(&model)?)?;
            let image = load_image(&input)?;
            let dec_opts = s.decode(&dec)?;
            let encoded = codec.encode(&image, &s.encode(&enc, dec_opts.tiling.is_some())?)?;
            let decoded = codec.decode(&encoded.bytes, &dec_opts)?;
            let lossless = decoded.symbols == encoded.symbols;
            let scales = max_levels(image.height().min(image.width()));
            println!("symbols: {}", if lossless { "LOSSLESS" } else { "MISMATCH" });
            println!("bpp: {:.6}", encoded.container.bpp());
            println!("psnr_db: {:.4}", psnr(&image, &decoded.image)?);
            println!("ms_ssim: {:.6} ({scales} scales)", ms_ssim_levels(&image, &decoded.image, scales)?);
            if let Some(o) = output {
                save_image(o, &decoded.image)?;
            }
            Ok(if lossless { 0 } else { 4 })
        }
        Command::Inspect { input } => inspect(&input),
        Command::Eval {
            dir,
            models,
            report,
            svg,
            model,
            enc,
            dec,
        } => {
            let mut specs = Vec::new();
            for m in &models {
                let (label, path) = m
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--model expects LABEL=PATH, got `{m}`")))?;
                specs.push((label.to_string(), PathBuf::from(path)));
            }
            if specs.is_empty() {
                let p = s.weights(&model)?;
                let label = p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
                specs.push((label, p));
            }
            let codecs = specs.iter().map(|(_, p)| load_codec(p)).collect::<Result<Vec<_>, _>>()?;
            let corpus: Vec<CorpusModel> = specs
                .iter()
                .zip(&codecs)
                .map(|((label, _), codec)| CorpusModel {
                    label: label.clone(),
                    codec,
                })
                .collect();
            let dec_opts = s.decode(&dec)?;
            let r = eval_corpus(&dir, &corpus, &s.encode(&enc, false)?, &dec_opts)?;
            match report {
                Some(p) => std::fs::write(p, r.to_tsv())?,
                None => print!("{}", r.to_tsv()),
            }
            if let Some(p) = svg {
                std::fs::write(p, r.to_svg())?;
            }
            for m in &r.means {
                log::info!("{}: mean bpp {:.6}, PSNR {:.3} dB, MS-SSIM {:.5}", m.model, m.bpp, m.psnr, m.ms_ssim);
            }
            if !r.skipped.is_empty() {
                eprintln!("skipped {} unreadable image(s)", r.skipped.len());
            }
            Ok(0)
        }
        Command::Bench {
            input,
            runs,
            warmup,
            model,
            dec,
        } => bench(&s.weights(&model)?, &input, runs, warmup, &s.decode(&dec)?),
        Command::InitWeights {
            output,
            preset,
            model_config,
            seed,
        } => {
            let cfg = match model_config {
                Some(p) => TransformConfig::parse(&std::fs::read_to_string(p)?)?,
                None => match preset {
                    Preset::Default => TransformConfig::default(),
                    Preset::Tiny => TransformConfig::tiny(),
                },
            };
            let store = WeightStore::random(&cfg, seed)?;
            store.save(&output)?;
            println!("model_id={} tensors={} output={}", store.model_id(), store.len(), output.display());
            Ok(0)
        }
    }
}

fn inspect(path: &Path) -> Result<u8, Error> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(WEIGHTS_MAGIC) {
        let store = WeightStore::from_bytes(&bytes)?;
        let params: usize = store.params().values().map(|t| t.len()).sum();
        println!("kind      weights");
        println!("model_id  {}", store.model_id());
        println!("tensors   {}", store.len());
        println!("params    {params}");
        for line in store.config_text().lines() {
            println!("config    {line}");
        }
        return Ok(0);
    }
    let c = Container::from_bytes(&bytes)?;
    let h = &c.header;
    let mut flags = Vec::new();
    if c.color.is_some() {
        flags.push("color");
    }
    if h.tiled {
        flags.push("tiled");
    }
    println!("kind      container");
    println!("width     {}", h.width);
    println!("height    {}", h.height);
    println!("padded    {}x{}", padded_extent(h.width as usize), padded_extent(h.height as usize));
    println!("model_id  {}", h.model_id);
    println!("timestep  {}", h.timestep);
    println!("flags     {}", if flags.is_empty() { "-".to_string() } else { flags.join(",") });
    if let Some(p) = &c.color {
        println!("color     mean={:?} std={:?}", p.mean, p.std);
    }
    println!("bytes     {}", bytes.len());
    println!("bpp       {:.6}", c.bpp());
    println!();
    println!("stream  offset  bytes");
    let mut at = HEADER_LEN + if c.color.is_some() { COLOR_LEN } else { 0 } + 4 * STREAMS;
    for (name, s) in ["z", "g1", "g2", "g3", "g4"].iter().zip(c.streams.iter()) {
        println!("{name:<6}  {at:>6}  {:>5}", s.len());
        at += s.len();
    }
    Ok(0)
}

fn bench(weights: &Path, input: &Path, runs: usize, warmup: usize, dec: &DecodeOptions) -> Result<u8, Error> {
    if runs == 0 {
        return Err(Error::Config("--runs must be positive".into()));
    }
    let codec = load_codec(weights)?;
    let image = load_image(input)?;
    let chain = codec.shape_chain(image.height(), image.width());
    let padded = image.pad_replicate(chain.padded.0, chain.padded.1)?;
    let predictor = codec.predictor(dec.predictor);
    let t = EncodeOptions::default().timestep;
    const STAGES: [&str; 8] = ["sources", "g_a", "entropy-encode", "entropy-decode", "g_s", "denoise", "aux", "pixel-decode"];
    let mut samples = vec![Vec::with_capacity(runs); STAGES.len()];
    for run in 0..warmup + runs {
        let mut times = [0.0f64; STAGES.len()];
        let mut time = |i: usize, start: Instant| times[i] = start.elapsed().as_secs_f64() * 1e3;
        let t0 = Instant::now();
        let (s8, s16) = codec.sources(&padded)?;
        time(0, t0);
        let t0 = Instant::now();
        let y = codec.analyze(&s8, &s16)?;
        time(1, t0);
        let t0 = Instant::now();
        let (streams, _, _, _) = codec.entropy_encode(&y)?;
        time(2, t0);
        let t0 = Instant::now();
        let (y_hat, _) = codec.entropy_decode(&streams, &chain)?;
        time(3, t0);
        let t0 = Instant::now();
        let l_t = codec.synthesize(&y_hat)?;
        time(4, t0);
        let t0 = Instant::now();
        let l0 = one_step_denoise(&l_t, &dec.schedule, t, predictor.as_ref())?;
        time(5, t0);
        let t0 = Instant::now();
        let residual = codec.aux(&y_hat)?;
        time(6, t0);
        let t0 = Instant::now();
        codec.pixel_decode(&l0.add(&residual)?)?;
        time(7, t0);
        if run >= warmup {
            for (s, v) in samples.iter_mut().zip(times) {
                s.push(v);
            }
        }
    }
    println!(
        "# {}x{} padded to {}x{}, {runs} runs after {warmup} warmup, {} threads",
        image.width(),
        image.height(),
        chain.padded.1,
        chain.padded.0,
        par::current_threads()
    );
    println!("{:<16}{:>12}{:>12}", "stage", "mean_ms", "std_ms");
    for (name, s) in STAGES.iter().zip(&samples) {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        println!("{name:<16}{mean:>12.3}{std:>12.3}");
    }
    Ok(0)
}
