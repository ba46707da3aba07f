//! `skyshield`: generate synthetic event data, preprocess it, train and run
//! LUnet, run the Hough baseline, and evaluate.

mod settings;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use skyshield::eval::{
    bench_latency, binarize, render_table, run_eval, EvalConfig, EvalReport, Method,
};
use skyshield::event::{read_recording, write_recording, EventRecording, Format};
use skyshield::experiment::{hough_pairs, training_pairs, Split};
use skyshield::hough::{default_grid, hough_detect, tune_hough, HoughParams};
use skyshield::lunet::{checkpoint, images_to_tensor, train_with, LUnetModel};
use skyshield::pnm;
use skyshield::preprocess::{
    build_time_surface, stc_filter, Causality, PolarityMode, StcParams, TimeSurface,
};
use skyshield::synth::{generate_dataset, load_dataset, LabeledSample, MANIFEST_NAME};

use settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "skyshield",
    version,
    about = "Thin-obstacle detection in event-camera streams"
)]
struct Cli {
    /// TOML or JSON settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command (scene base seed, training seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labeled dataset and its manifest.
    Generate(GenerateArgs),
    /// STC-filter a recording.
    Filter(FilterArgs),
    /// Build time surfaces (PFM) from a recording.
    Surface(SurfaceArgs),
    /// Train LUnet on a dataset manifest.
    Train(TrainArgs),
    /// Run a trained model on surface files.
    Infer(InferArgs),
    /// Detect lines on a surface with the Hough baseline.
    BaselineHough(HoughArgs),
    /// Score methods on a dataset and write report.json / report.txt.
    Eval(EvalArgs),
    /// Measure per-stage latency on a synthetic frame.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Named split from the config (train, dev or test).
    #[arg(long, conflicts_with = "count")]
    split: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Event recording (binary, or .csv with --width/--height).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: Option<u16>,
    #[arg(long)]
    height: Option<u16>,
}

impl InputArgs {
    fn read(&self) -> Result<EventRecording> {
        let geometry = self.width.zip(self.height);
        read_recording(&self.input, Format::from_path(&self.input), geometry)
            .with_context(|| format!("reading {}", self.input.display()))
    }

    fn stem(&self) -> String {
        self.input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "recording".into())
    }
}

#[derive(Args, Debug, Clone, Default)]
struct StcArgs {
    #[arg(long)]
    stc_radius: Option<u16>,
    #[arg(long)]
    stc_window_us: Option<u64>,
    #[arg(long)]
    stc_min_support: Option<u32>,
    /// Also accept support from later events (offline use).
    #[arg(long)]
    bidirectional: bool,
}

impl StcArgs {
    fn apply(&self, base: StcParams) -> StcParams {
        StcParams {
            radius_px: self.stc_radius.unwrap_or(base.radius_px),
            window_us: self.stc_window_us.unwrap_or(base.window_us),
            min_support: self.stc_min_support.unwrap_or(base.min_support),
            causality: if self.bidirectional {
                Causality::Bidirectional
            } else {
                base.causality
            },
        }
    }
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    stc: StcArgs,
    /// Output file name inside the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PolarityArg {
    Merged,
    Separate,
}

impl From<PolarityArg> for PolarityMode {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Merged => PolarityMode::Merged,
            PolarityArg::Separate => PolarityMode::Separate,
        }
    }
}

#[derive(Args, Debug)]
struct SurfaceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    tau_us: Option<f64>,
    /// Frame end; defaults to the last event.
    #[arg(long)]
    t_ref_us: Option<u64>,
    #[arg(long)]
    window_us: Option<u64>,
    #[arg(long, value_enum)]
    polarity: Option<PolarityArg>,
    #[command(flatten)]
    stc: StcArgs,
    /// Skip STC filtering.
    #[arg(long)]
    no_stc: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training manifest. Without it the config's train split is generated
    /// in memory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Random crop side; 0 trains on whole frames.
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long, default_value = "model.lunw")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input channel; repeat for multi-channel models (positive first).
    #[arg(long, required = true)]
    surface: Vec<PathBuf>,
    #[arg(long, default_value = "heat.pfm")]
    out: PathBuf,
    /// Also write the thresholded mask (PGM).
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct HoughFlags {
    #[arg(long)]
    rho_step: Option<f64>,
    #[arg(long)]
    theta_step: Option<f64>,
    #[arg(long)]
    threshold: Option<u32>,
    #[arg(long)]
    binarize: Option<f64>,
    #[arg(long)]
    thickness: Option<f64>,
}

impl HoughFlags {
    fn apply(&self, base: HoughParams) -> HoughParams {
        HoughParams {
            rho_step: self.rho_step.unwrap_or(base.rho_step),
            theta_step: self.theta_step.unwrap_or(base.theta_step),
            accumulator_threshold: self.threshold.unwrap_or(base.accumulator_threshold),
            binarize_threshold: self.binarize.unwrap_or(base.binarize_threshold),
            line_raster_thickness: self.thickness.unwrap_or(base.line_raster_thickness),
        }
    }
}

#[derive(Args, Debug)]
struct HoughArgs {
    #[arg(long)]
    surface: PathBuf,
    #[arg(long, default_value = "mask.pgm")]
    out: PathBuf,
    #[command(flatten)]
    params: HoughFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Test manifest. Without it the config's test split is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Methods to score: lunet, hough, oracle, empty.
    #[arg(long = "method", default_values_t = ["lunet".to_string(), "hough".to_string()])]
    methods: Vec<String>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Tune Hough on this manifest (or the config's dev split with
    /// --tune-dev) instead of using fixed parameters.
    #[arg(long)]
    tune: Option<PathBuf>,
    #[arg(long, conflicts_with = "tune")]
    tune_dev: bool,
    /// Also score the network at these output thresholds (sweep.json).
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    #[command(flatten)]
    hough: HoughFlags,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long = "method", default_values_t = ["lunet".to_string(), "hough".to_string()])]
    methods: Vec<String>,
    /// Checkpoint to time; a freshly initialized network otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    width: u16,
    #[arg(long, default_value_t = 128)]
    height: u16,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[command(flatten)]
    hough: HoughFlags,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut settings = Settings::load(cli.config.as_deref())?;
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        out_dir: cli.out_dir,
        seed: cli.seed,
    };
    match cli.command {
        Command::Generate(a) => generate(&ctx, &mut settings, a),
        Command::Filter(a) => filter(&ctx, &settings, a),
        Command::Surface(a) => surface(&ctx, &settings, a),
        Command::Train(a) => train(&ctx, &mut settings, a),
        Command::Infer(a) => infer(&ctx, &settings, a),
        Command::BaselineHough(a) => baseline_hough(&ctx, &settings, a),
        Command::Eval(a) => eval(&ctx, &settings, a),
        Command::Bench(a) => bench(&ctx, &settings, a),
    }
}

struct Ctx {
    out_dir: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn path(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn generate(ctx: &Ctx, settings: &mut Settings, a: GenerateArgs) -> Result<()> {
    if let Some(w) = a.width {
        settings.distribution.width = w;
    }
    if let Some(h) = a.height {
        settings.distribution.height = h;
    }
    let split = match &a.split {
        Some(name) => settings.split(name)?,
        None => Split {
            seed: 0,
            count: a.count.unwrap_or(10),
        },
    };
    let seed = ctx.seed.unwrap_or(split.seed);
    settings.distribution.validate()?;
    let specs = settings.distribution.sample_many(seed, split.count);
    let entries = generate_dataset(&specs, &ctx.out_dir)?;
    println!(
        "wrote {} samples ({}x{}) to {}",
        entries.len(),
        settings.distribution.width,
        settings.distribution.height,
        ctx.path(Path::new(MANIFEST_NAME)).display()
    );
    Ok(())
}

fn filter(ctx: &Ctx, settings: &Settings, a: FilterArgs) -> Result<()> {
    let rec = a.input.read()?;
    let base = settings.eval.preprocess.stc.unwrap_or_default();
    let params = a.stc.apply(base);
    let kept = stc_filter(&rec, &params)?;
    let ext = a
        .input
        .input
        .extension()
        .map_or("skys".into(), |e| e.to_string_lossy());
    let out = ctx.path(
        &a.out
            .unwrap_or_else(|| format!("{}.stc.{ext}", a.input.stem()).into()),
    );
    write_recording(&kept, &out, Format::from_path(&out))?;
    let pct = if rec.is_empty() {
        100.0
    } else {
        100.0 * kept.len() as f64 / rec.len() as f64
    };
    println!(
        "kept {} of {} events ({pct:.1}%) -> {}",
        kept.len(),
        rec.len(),
        out.display()
    );
    Ok(())
}

fn surface(ctx: &Ctx, settings: &Settings, a: SurfaceArgs) -> Result<()> {
    let rec = a.input.read()?;
    let pre = &settings.eval.preprocess;
    let t_ref = a
        .t_ref_us
        .or_else(|| rec.events().last().map(|e| e.t))
        .unwrap_or(0);
    let window = a.window_us.unwrap_or(pre.window_us);
    let tau = a.tau_us.unwrap_or(pre.tau_us);
    let mode = a.polarity.map(PolarityMode::from).unwrap_or(pre.polarity);
    let framed = rec.slice_by_time(t_ref.saturating_sub(window), t_ref.saturating_add(1))?;
    let filtered = if a.no_stc {
        framed
    } else {
        stc_filter(&framed, &a.stc.apply(pre.stc.unwrap_or_default()))?
    };
    let surfaces = build_time_surface(&filtered, t_ref, tau, mode)?;
    let stem = a.input.stem();
    let names: Vec<String> = match mode {
        PolarityMode::Merged => vec![format!("{stem}.pfm")],
        PolarityMode::Separate => vec![format!("{stem}.pos.pfm"), format!("{stem}.neg.pfm")],
    };
    for (s, name) in surfaces.iter().zip(&names) {
        let path = ctx.path(Path::new(name));
        pnm::write_pfm(&s.to_float_image(), &path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn load_or_generate(
    manifest: Option<&Path>,
    settings: &Settings,
    split: &str,
) -> Result<Vec<LabeledSample>> {
    match manifest {
        Some(path) => load_dataset(path).with_context(|| format!("loading {}", path.display())),
        None => {
            let split = settings
                .split(split)
                .context("pass a manifest or a config with splits")?;
            settings.distribution.validate()?;
            let specs = settings.distribution.sample_many(split.seed, split.count);
            Ok(specs
                .iter()
                .map(skyshield::synth::generate_sample)
                .collect::<Result<_, _>>()?)
        }
    }
}

fn train(ctx: &Ctx, settings: &mut Settings, a: TrainArgs) -> Result<()> {
    let opts = &mut settings.training;
    if let Some(v) = a.epochs {
        opts.epochs = v;
    }
    if let Some(v) = a.lr {
        opts.lr = v;
    }
    if let Some(v) = a.lambda {
        opts.loss.lambda = v;
    }
    if let Some(v) = a.batch_size {
        opts.batch_size = v;
    }
    if let Some(v) = a.crop {
        opts.crop = (v > 0).then_some(v);
    }
    if let Some(seed) = ctx.seed {
        opts.seed = seed;
        settings.model.seed = seed;
    }
    let samples = load_or_generate(a.data.as_deref(), settings, "train")?;
    let mode = if settings.model.in_channels == 1 {
        PolarityMode::Merged
    } else {
        PolarityMode::Separate
    };
    let data = training_pairs(&samples, &settings.eval.preprocess, mode)?;
    let mut model = LUnetModel::init(settings.model)?;

    let log_path = ctx.path(Path::new("train_log.jsonl"));
    let mut log = BufWriter::new(File::create(&log_path)?);
    let mut write_err = None;
    train_with(&mut model, &data, &settings.training, |e| {
        println!(
            "epoch {:>3}  total {:.4}  dice {:.4}  reg {:.4}",
            e.epoch, e.total, e.dice, e.reg
        );
        if let Err(err) = writeln!(log, "{}", e.to_json_line()) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_err {
        return Err(err).context("writing training log");
    }
    log.flush()?;
    let out = ctx.path(&a.out);
    checkpoint::save(&model, &out)?;
    println!("{} parameters -> {}", model.param_count(), out.display());
    Ok(())
}

fn infer(ctx: &Ctx, settings: &Settings, a: InferArgs) -> Result<()> {
    let model =
        checkpoint::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    ensure!(
        a.surface.len() == model.config().in_channels,
        "model expects {} input surfaces, got {}",
        model.config().in_channels,
        a.surface.len()
    );
    let images = a
        .surface
        .iter()
        .map(|p| pnm::read_pfm(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let heat = model.predict(&images_to_tensor(&images)?)?;
    let out = ctx.path(&a.out);
    pnm::write_pfm(&heat.to_float_image(), &out)?;
    println!("{}", out.display());
    if let Some(mask_name) = &a.mask {
        let mask = binarize(&heat, a.threshold.unwrap_or(settings.eval.threshold));
        let path = ctx.path(mask_name);
        pnm::write_pgm(&mask, &path)?;
        println!("{} ({} line pixels)", path.display(), mask.count());
    }
    Ok(())
}

fn baseline_hough(ctx: &Ctx, settings: &Settings, a: HoughArgs) -> Result<()> {
    let img =
        pnm::read_pfm(&a.surface).with_context(|| format!("reading {}", a.surface.display()))?;
    let surface = TimeSurface::from_float_image(&img, 0, settings.eval.preprocess.tau_us);
    let params = a.params.apply(settings.hough);
    let mask = hough_detect(&surface, &params)?;
    let out = ctx.path(&a.out);
    pnm::write_pgm(&mask, &out)?;
    println!("{} ({} line pixels)", out.display(), mask.count());
    Ok(())
}

fn eval(ctx: &Ctx, settings: &Settings, a: EvalArgs) -> Result<()> {
    let test = load_or_generate(a.data.as_deref(), settings, "test")?;
    let mut hough = a.hough.apply(settings.hough);
    let tune_set = match (&a.tune, a.tune_dev) {
        (Some(path), _) => Some(load_or_generate(Some(path), settings, "dev")?),
        (None, true) => Some(load_or_generate(None, settings, "dev")?),
        (None, false) => None,
    };
    if let Some(dev) = tune_set {
        hough = tune_hough(
            &hough_pairs(&dev, &settings.eval.preprocess)?,
            &default_grid(),
        )?;
        println!("tuned Hough on {} samples: {hough:?}", dev.len());
    }
    let model = a
        .model
        .as_deref()
        .map(|p| checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()?;

    let mut reports: Vec<EvalReport> = Vec::new();
    for name in &a.methods {
        let method = Method::from_name(name, model.clone(), hough)?;
        reports.push(run_eval(&method, &test, &settings.eval)?);
    }
    let table = render_table(&reports);
    print!("{table}");
    let json = serde_json::json!({ "hough_params": hough, "reports": reports });
    fs::write(
        ctx.path(Path::new("report.json")),
        serde_json::to_string_pretty(&json)?,
    )?;
    fs::write(ctx.path(Path::new("report.txt")), table)?;

    if !a.sweep.is_empty() {
        let model = model.context("--sweep needs --model")?;
        let method = Method::Lunet(model);
        let mut rows = Vec::new();
        for &threshold in &a.sweep {
            ensure!(
                threshold > 0.0 && threshold < 1.0,
                "sweep threshold {threshold} outside (0, 1)"
            );
            let config = EvalConfig {
                threshold,
                warmup: 0,
                ..settings.eval.clone()
            };
            let r = run_eval(&method, &test, &config)?;
            println!(
                "threshold {threshold:.2}: iou {:.4} dice {:.4}",
                r.mean_iou, r.mean_dice
            );
            rows.push(serde_json::json!({ "threshold": threshold, "mean_iou": r.mean_iou, "mean_dice": r.mean_dice }));
        }
        fs::write(
            ctx.path(Path::new("sweep.json")),
            serde_json::to_string_pretty(&rows)?,
        )?;
    }
    Ok(())
}

fn bench(ctx: &Ctx, settings: &Settings, a: BenchArgs) -> Result<()> {
    let hough = a.hough.apply(settings.hough);
    let model = match &a.model {
        Some(p) => checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => LUnetModel::init(settings.model)?,
    };
    let mut reports = Vec::new();
    for name in &a.methods {
        if !matches!(name.as_str(), "lunet" | "hough") {
            bail!("bench supports lunet and hough, not {name:?}");
        }
        let method = Method::from_name(name, Some(model.clone()), hough)?;
        let r = bench_latency(
            &method,
            a.width,
            a.height,
            a.repeats,
            a.warmup,
            &settings.eval,
        )?;
        println!(
            "{:<6} mean {:>8.3} ms  p50 {:>8.3} ms  p95 {:>8.3} ms",
            r.method, r.inference.mean_ms, r.inference.p50_ms, r.inference.p95_ms
        );
        for s in &r.stages {
            println!("  {:<10} mean {:>8.3} ms", s.stage, s.stats.mean_ms);
        }
        reports.push(r);
    }
    if let Some(r) = reports.first() {
        let m = &r.machine;
        println!(
            "machine: {} {} x{} {}",
            m.os,
            m.arch,
            m.cpus,
            m.cpu_model.as_deref().unwrap_or("")
        );
    }
    fs::write(
        ctx.path(Path::new("bench.json")),
        serde_json::to_string_pretty(&reports)?,
    )?;
    Ok(())
}
