//! The `cppnlab` command line. Every subcommand is a pure function of its
//! flags and input files, so a pipeline can be replayed from a shell script.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cppnlab::analysis::{
    colormap_render, feature_maps_genome, feature_maps_mlp, feature_panel, novelty_flags, pca_features,
    random_unit_vector, sweep_strip, weight_sweep, FieldMap, Layout, Palette, SweepSpec, SweepTarget, DEFAULT_TAU,
};
use cppnlab::evolve::{scripted_run, EvolveConfig, ScriptedSelector};
use cppnlab::train::{relu_architecture, Init};
use cppnlab::{
    layerize_with, render, train, train_on_raw_genome, verify_equivalence, Genome, ImageRgb, LayerizeOptions,
    LayerizedMlp, LossSpace, Optimizer, TargetSpec, TrainConfig, TrainError, TrainTrace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_READ: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_SHAPE: i32 = 5;
pub const EXIT_MISMATCH: i32 = 6;
pub const EXIT_DIVERGED: i32 = 7;
pub const EXIT_WRITE: i32 = 8;

const EXIT_CODES: &str = "\
Exit codes:
  0  success, every declared output written
  1  internal error
  2  invalid command line
  3  input file missing or unreadable
  4  input file or config does not parse
  5  shape mismatch (resolution, layer/row/col index, target size, direction length)
  6  verify: genome and network disagree beyond the tolerance
  7  training diverged (partial trace still written when requested)
  8  an output could not be written";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Diverged(String),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } => EXIT_READ,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Shape(_) => EXIT_SHAPE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Write { .. } => EXIT_WRITE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

fn shape(e: impl Display) -> CliError {
    CliError::Shape(e.to_string())
}

fn parse_err(path: &Path, e: impl Display) -> CliError {
    CliError::Parse { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Parser, Debug)]
#[command(name = "cppnlab", version, about = "Breed, layerize, train and dissect CPPN images", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a genome or network to a square PNG.
    Render {
        model: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        res: usize,
    },
    /// Unattended breeding run; writes every genome, a run log and the champion.
    Evolve {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 30)]
        generations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// random | largest-image-variance
        #[arg(long, default_value = "largest-image-variance")]
        selector: ScriptedSelector,
        /// JSON evolution config; `--seed` overrides its rng_seed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Convert a genome into an exactly equivalent dense network.
    Layerize {
        genome: PathBuf,
        out: PathBuf,
        /// Keep the constant input as a fourth channel instead of folding it into biases.
        #[arg(long)]
        carry_bias_input: bool,
    },
    /// Check that a network reproduces a genome's raw outputs on the grid.
    Verify {
        genome: PathBuf,
        mlp: PathBuf,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Full-batch training of a dense network towards a target image.
    Train(TrainArgs),
    /// Train the genome's own sparse graph directly on a target.
    TrainRaw(TrainArgs),
    /// Train the same shapes with ReLU hidden units and identity outputs.
    ReluTrain(TrainArgs),
    /// Panel of every neuron's feature map, novel maps framed in green.
    Maps {
        model: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        res: usize,
        /// red-white-blue | red-black-white
        #[arg(long)]
        palette: Option<Palette>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
    },
    /// Count feature maps that no earlier layer already represents; prints JSON.
    Novelty {
        model: PathBuf,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Strip of renders while one weight moves by each offset.
    Sweep {
        mlp: PathBuf,
        out: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        row: usize,
        #[arg(long)]
        col: usize,
        #[command(flatten)]
        strip: StripArgs,
    },
    /// Strip of renders while a whole weight column moves along a unit direction.
    SweepColumn {
        mlp: PathBuf,
        out: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        col: usize,
        /// Comma-separated unit vector; a seeded random direction when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        direction: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        strip: StripArgs,
    },
    /// Principal components of one layer's feature maps.
    Pca {
        mlp: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        /// Per-component variances and directions.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Strip of the projections onto each component.
        #[arg(long)]
        panel: Option<PathBuf>,
    },
    /// Run the HTTP workbench.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "CPPNLAB_STORE", default_value = "cppnlab-store")]
        store: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Target: a genome, a network, or a square PNG (rgb loss only).
    pub target: PathBuf,
    /// Architecture: a network for train/relu-train, a genome for train-raw.
    pub arch: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV trace `iteration,mse`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// JSON training config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub res: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// plain_gd | adam
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    /// hsv_post | rgb
    #[arg(long)]
    pub loss_space: Option<LossSpace>,
    /// lecun_normal | keep
    #[arg(long)]
    pub init: Option<Init>,
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StripArgs {
    /// Lowest offset; defaults to -max(3|c|, 1).
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = 9)]
    pub steps: usize,
    #[arg(long, default_value_t = 64)]
    pub res: usize,
    /// Wrap the strip into a grid with this many columns.
    #[arg(long)]
    pub columns: Option<usize>,
}

pub enum Model {
    Genome(Genome),
    Mlp(LayerizedMlp),
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Read { path: path.to_path_buf(), message: e.to_string() })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let failed = |e: std::io::Error| CliError::Write { path: path.to_path_buf(), message: e.to_string() };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(failed)?;
    }
    fs::write(path, bytes).map_err(failed)
}

fn write_png(path: &Path, img: &ImageRgb) -> Result<(), CliError> {
    let bytes = img.encode_png().map_err(|e| CliError::Internal(e.to_string()))?;
    write_bytes(path, &bytes)
}

pub fn load_genome(path: &Path) -> Result<Genome, CliError> {
    Genome::from_text(&read_text(path)?).map_err(|e| parse_err(path, e))
}

pub fn load_mlp(path: &Path) -> Result<LayerizedMlp, CliError> {
    LayerizedMlp::from_text(&read_text(path)?).map_err(|e| parse_err(path, e))
}

/// Networks and genomes are both JSON; a network always has `layers`.
pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = read_text(path)?;
    match LayerizedMlp::from_text(&text) {
        Ok(m) => Ok(Model::Mlp(m)),
        Err(mlp_err) => Genome::from_text(&text)
            .map(Model::Genome)
            .map_err(|g| parse_err(path, format!("not a genome ({g}) nor a network ({mlp_err})"))),
    }
}

fn load_png(path: &Path) -> Result<ImageRgb, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    let img = image::load_from_memory(&bytes).map_err(|e| parse_err(path, e))?.to_rgb8();
    let pixels = img.pixels().map(|p| p.0.map(|c| f64::from(c) / 255.0)).collect();
    ImageRgb::new(img.width() as usize, img.height() as usize, pixels).map_err(|e| parse_err(path, e))
}

fn load_target(path: &Path, resolution: usize) -> Result<TargetSpec, CliError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
        return TargetSpec::from_image(&load_png(path)?).map_err(shape);
    }
    match load_model(path)? {
        Model::Genome(g) => TargetSpec::from_genome(&g, resolution).map_err(shape),
        Model::Mlp(m) => TargetSpec::from_mlp(&m, resolution).map_err(shape),
    }
}

fn train_config(args: &TrainArgs, defaults: TrainConfig) -> Result<TrainConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))?,
        None => defaults,
    };
    if let Some(v) = args.iters {
        cfg.iterations = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.res {
        cfg.resolution = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.optimizer {
        cfg.optimizer = v;
    }
    if let Some(v) = args.loss_space {
        cfg.loss_space = v;
    }
    if let Some(v) = args.init {
        cfg.init = v;
    }
    if let Some(v) = args.stride {
        cfg.trace_stride = v;
    }
    cfg.validate().map_err(shape)?;
    Ok(cfg)
}

/// Writes the trace (also after divergence) and maps training errors to exit codes.
fn finish_training<T>(
    result: Result<(T, TrainTrace), TrainError>,
    trace_path: Option<&Path>,
) -> Result<(T, TrainTrace), CliError> {
    match result {
        Ok((model, trace)) => {
            if let Some(p) = trace_path {
                write_bytes(p, trace.to_csv().as_bytes())?;
            }
            Ok((model, trace))
        }
        Err(TrainError::Diverged { iteration, trace }) => {
            if let Some(p) = trace_path {
                write_bytes(p, trace.to_csv().as_bytes())?;
            }
            Err(CliError::Diverged(format!("loss became non-finite at iteration {iteration}")))
        }
        Err(TrainError::Config(m)) => Err(CliError::Shape(m)),
        Err(e) => Err(shape(e)),
    }
}

fn summary(trace: &TrainTrace, id: &str) -> String {
    json!({
        "initial_mse": trace.initial(),
        "final_mse": trace.last(),
        "points": trace.points.len(),
        "id": id,
    })
    .to_string()
}

fn feature_maps(model: &Model, res: usize) -> Result<Vec<FieldMap>, CliError> {
    match model {
        Model::Genome(g) => feature_maps_genome(g, res).map_err(shape),
        Model::Mlp(m) => feature_maps_mlp(m, res).map_err(shape),
    }
}

fn strip(images: &[ImageRgb], columns: Option<usize>) -> Result<ImageRgb, CliError> {
    let layout = columns.map_or(Layout::Horizontal, |columns| Layout::Grid { columns });
    sweep_strip(images, layout).map_err(shape)
}

fn sweep_spec(mlp: &LayerizedMlp, target: SweepTarget, args: &StripArgs) -> Result<SweepSpec, CliError> {
    let mut spec = SweepSpec::default_for(mlp, target).map_err(shape)?;
    spec.range = (args.lo.unwrap_or(spec.range.0), args.hi.unwrap_or(spec.range.1));
    spec.steps = args.steps;
    Ok(spec)
}

/// Runs one invocation. Progress and summaries go to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Render { model, out, res } => {
            let img = match load_model(&model)? {
                Model::Genome(g) => render(&g, res).map_err(shape)?,
                Model::Mlp(m) => m.render(res).map_err(shape)?,
            };
            write_png(&out, &img)
        }
        Command::Evolve { out_dir, generations, seed, selector, config } => {
            let mut cfg: EvolveConfig = match &config {
                Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))?,
                None => EvolveConfig::default(),
            };
            cfg.rng_seed = seed;
            if generations == 0 {
                return Err(CliError::Shape("generations must be at least 1".into()));
            }
            let run = scripted_run(&cfg, selector, generations).map_err(shape)?;
            let mut written = BTreeSet::new();
            let mut log = String::new();
            for (k, generation) in run.generations.iter().enumerate() {
                let ids: Vec<String> = generation.iter().map(|o| o.genome.content_id()).collect();
                for (o, id) in generation.iter().zip(&ids) {
                    if written.insert(id.clone()) {
                        write_bytes(&out_dir.join("genomes").join(format!("{id}.genome")), o.genome.to_text().as_bytes())?;
                    }
                }
                let parents: Vec<&Vec<usize>> = generation.iter().map(|o| &o.parents).collect();
                let line = json!({ "generation": k, "genomes": ids, "parents": parents, "selected": run.selections.get(k) });
                log.push_str(&line.to_string());
                log.push('\n');
            }
            write_bytes(&out_dir.join("run.jsonl"), log.as_bytes())?;
            let champion = run.champion();
            write_bytes(&out_dir.join("champion.genome"), champion.to_text().as_bytes())?;
            println!("{}", json!({ "champion": champion.content_id(), "genomes": written.len(), "generations": run.generations.len() }));
            Ok(())
        }
        Command::Layerize { genome, out, carry_bias_input } => {
            let g = load_genome(&genome)?;
            let mlp = layerize_with(&g, LayerizeOptions { carry_bias_input }).map_err(shape)?;
            write_bytes(&out, mlp.to_text().as_bytes())?;
            println!("{}", json!({ "mlp": mlp.content_id(), "widths": mlp.widths(), "carriers": mlp.carrier_count() }));
            Ok(())
        }
        Command::Verify { genome, mlp, res, tol } => {
            let report = verify_equivalence(&load_genome(&genome)?, &load_mlp(&mlp)?, res, tol).map_err(shape)?;
            println!("{}", serde_json::to_string(&report).map_err(|e| CliError::Internal(e.to_string()))?);
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Mismatch(format!("max |diff| {:e} exceeds tolerance {tol:e}", report.max_abs_diff)))
            }
        }
        Command::Train(args) => {
            let cfg = train_config(&args, TrainConfig::default())?;
            let target = load_target(&args.target, cfg.resolution)?;
            let arch = load_mlp(&args.arch)?;
            let (mlp, trace) = finish_training(train(&arch, &target, &cfg), args.trace.as_deref())?;
            write_bytes(&args.out, mlp.to_text().as_bytes())?;
            println!("{}", summary(&trace, &mlp.content_id()));
            Ok(())
        }
        Command::ReluTrain(args) => {
            let cfg = train_config(&args, TrainConfig::default())?;
            if cfg.init == Init::Keep {
                return Err(CliError::Shape("relu-train always re-initializes; init keep is not allowed".into()));
            }
            let target = load_target(&args.target, cfg.resolution)?;
            let arch = relu_architecture(&load_mlp(&args.arch)?);
            let (mlp, trace) = finish_training(train(&arch, &target, &cfg), args.trace.as_deref())?;
            write_bytes(&args.out, mlp.to_text().as_bytes())?;
            println!("{}", summary(&trace, &mlp.content_id()));
            Ok(())
        }
        Command::TrainRaw(args) => {
            let cfg = train_config(&args, TrainConfig::default())?;
            let target = load_target(&args.target, cfg.resolution)?;
            let genome = load_genome(&args.arch)?;
            let (g, trace) = finish_training(train_on_raw_genome(&genome, &target, &cfg), args.trace.as_deref())?;
            write_bytes(&args.out, g.to_text().as_bytes())?;
            println!("{}", summary(&trace, &g.content_id()));
            Ok(())
        }
        Command::Maps { model, out, res, palette, tau } => {
            let model = load_model(&model)?;
            let maps = feature_maps(&model, res)?;
            let flags = novelty_flags(&maps, tau).map_err(shape)?;
            let default = if matches!(model, Model::Genome(_)) { Palette::RedBlackWhite } else { Palette::RedWhiteBlue };
            write_png(&out, &feature_panel(&maps, &flags, palette.unwrap_or(default)).map_err(shape)?)
        }
        Command::Novelty { model, res, tau, out } => {
            let maps = feature_maps(&load_model(&model)?, res)?;
            let flags = novelty_flags(&maps, tau).map_err(shape)?;
            let entries: Vec<_> = maps
                .iter()
                .zip(&flags)
                .map(|(m, &novel)| json!({ "layer": m.layer, "index": m.index, "novel": novel, "carrier": m.provenance.is_carrier() }))
                .collect();
            let report = json!({
                "tau": tau,
                "resolution": res,
                "total": maps.len(),
                "novel": flags.iter().filter(|&&n| n).count(),
                "maps": entries,
            });
            match out {
                Some(path) => write_bytes(&path, report.to_string().as_bytes()),
                None => {
                    println!("{report}");
                    Ok(())
                }
            }
        }
        Command::Sweep { mlp, out, layer, row, col, strip: args } => {
            let m = load_mlp(&mlp)?;
            let spec = sweep_spec(&m, SweepTarget::Weight { layer, row, col }, &args)?;
            let frames = weight_sweep(&m, &spec, args.res).map_err(shape)?;
            write_png(&out, &strip(&frames, args.columns)?)
        }
        Command::SweepColumn { mlp, out, layer, col, direction, seed, strip: args } => {
            let m = load_mlp(&mlp)?;
            let fan_out = m
                .layers()
                .get(layer.wrapping_sub(1))
                .map(|l| l.width())
                .ok_or_else(|| CliError::Shape(format!("layer {layer} out of range 1..={}", m.depth())))?;
            let direction = direction.unwrap_or_else(|| random_unit_vector(fan_out, &mut ChaCha8Rng::seed_from_u64(seed)));
            let spec = sweep_spec(&m, SweepTarget::Column { layer, col, direction }, &args)?;
            let frames = weight_sweep(&m, &spec, args.res).map_err(shape)?;
            write_png(&out, &strip(&frames, args.columns)?)
        }
        Command::Pca { mlp, layer, res, csv, panel } => {
            let m = load_mlp(&mlp)?;
            let result = pca_features(&m, res, layer).map_err(shape)?;
            if let Some(path) = &csv {
                write_bytes(path, result.to_csv().as_bytes())?;
            }
            if let Some(path) = &panel {
                let images: Vec<ImageRgb> = result
                    .projections
                    .iter()
                    .map(|p| {
                        let scale = p.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-12);
                        colormap_render(p, Palette::RedWhiteBlue, (-scale, scale))
                    })
                    .collect();
                write_png(path, &strip(&images, None)?)?;
            }
            let total = result.total_variance();
            let explained: Vec<f64> = result.variances.iter().map(|v| if total > 0.0 { v / total } else { 0.0 }).collect();
            println!("{}", json!({ "layer": layer, "variances": result.variances, "explained": explained }));
            Ok(())
        }
        Command::Serve { addr, store } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            println!("serving {} on http://{addr}", store.display());
            runtime
                .block_on(cppnlab_server::serve(addr, store))
                .map_err(|e| CliError::Internal(e.to_string()))
        }
    }
}
