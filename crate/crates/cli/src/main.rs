//! `milpf` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use milpf::embedset::{read_dataset, split_patients, synth_dataset, write_dataset, SplitRatios, SynthConfig};
use milpf::explain::{boxes_from_heatmap, read_pgm, tile_attention, write_pgm, attention_heatmap};
use milpf::metrics::write_boxes_csv;
use milpf::milhead::{count_params, load_checkpoint, save_checkpoint, HeadDims};
use milpf::tilegeom::{tile_grid, GridSpec, TileRect};
use milpf::trainer::{evaluate, multi_run, train_once, write_run_log, PreparedData, TrainConfig};
use milpf::Exec;

#[derive(Debug, Parser)]
#[command(name = "milpf", version, about = "Two-stream MIL head over precomputed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic sparse-signal dataset.
    Synth(SynthArgs),
    /// Load a dataset and check every invariant.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Reassign patient-grouped train/val/test splits in place.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Train, validation and test fractions.
        #[arg(long, default_value = "0.7,0.1,0.2")]
        ratios: String,
    },
    /// Train one run and save the best-validation checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint path; the epoch log goes to `<out>.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score validation and test splits with a checkpoint.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the multi-seed protocol and keep the best-validation run.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Number of runs; overrides `runs` in the config.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads for concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write per-view attention heatmaps of one bag.
    Heatmap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        bag: String,
        /// Tile overlap the bag's tiles are expected to follow.
        #[arg(long, default_value_t = 0.75)]
        overlap: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract scored boxes from a heatmap.
    Detect {
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the tile grid of an image, one `x0 y0 x1 y1` line per tile.
    Grid {
        #[arg(long)]
        width: u32,
        #[arg(long)]
        height: u32,
        #[arg(long)]
        tile: u32,
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
    },
    /// Print the trainable-parameter count for a config and embedding width.
    Params {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dim: usize,
    },
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    n_bags: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1)]
    views_min: usize,
    #[arg(long, default_value_t = 2)]
    views_max: usize,
    #[arg(long, default_value_t = 20)]
    tiles_min: usize,
    #[arg(long, default_value_t = 200)]
    tiles_max: usize,
    #[arg(long, default_value_t = 1)]
    signal_min: usize,
    #[arg(long, default_value_t = 3)]
    signal_max: usize,
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    positive_rate: f64,
    #[arg(long, default_value_t = 2)]
    bags_per_patient: usize,
    #[arg(long, default_value_t = 64)]
    tile_size: u32,
}

enum Failure {
    Usage(String),
    Data(milpf::Error),
}

impl From<milpf::Error> for Failure {
    fn from(e: milpf::Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(milpf::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_config(path: &Path) -> CliResult<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    TrainConfig::parse(&text).map_err(|e| Failure::Data(milpf::Error::InvalidArgument(format!("{}: {e}", path.display()))))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn parse_ratios(s: &str) -> CliResult<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("--ratios expects three comma-separated numbers, got {s:?}")))?;
    let [train, val, test] = parts[..] else {
        return Err(Failure::Usage(format!("--ratios expects three numbers, got {}", parts.len())));
    };
    SplitRatios::new(train, val, test).map_err(|e| Failure::Usage(e.to_string()))
}

fn synth(a: SynthArgs) -> CliResult {
    let cfg = SynthConfig {
        n_bags: a.n_bags,
        dim: a.dim,
        views_per_bag: (a.views_min, a.views_max),
        tiles_per_view: (a.tiles_min, a.tiles_max),
        signal_tiles_per_positive: (a.signal_min, a.signal_max),
        signal_shift: a.shift,
        noise_scale: a.noise,
        positive_rate: a.positive_rate,
        bags_per_patient: a.bags_per_patient,
        tile_size: a.tile_size,
        seed: a.seed,
    };
    let ds = synth_dataset(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    write_dataset(&ds, &a.out)?;
    println!("wrote {} bags (d={}) to {}", ds.bags.len(), ds.embed_dim, a.out.display());
    Ok(())
}

fn validate(data: &Path) -> CliResult {
    let ds = read_dataset(data)?;
    let n_tiles: usize = ds.bags.iter().map(|b| b.n_tiles()).sum();
    let n_views: usize = ds.bags.iter().map(|b| b.n_views()).sum();
    let patients: BTreeSet<&str> = ds.bags.iter().map(|b| b.patient_id.as_str()).collect();
    println!(
        "ok: {} bags, {} patients, {n_views} views, {n_tiles} tiles, d={}, encoder {}",
        ds.bags.len(),
        patients.len(),
        ds.embed_dim,
        ds.encoder_name
    );
    Ok(())
}

fn split(data: &Path, seed: u64, ratios: &str) -> CliResult {
    let ratios = parse_ratios(ratios)?;
    let mut ds = read_dataset(data)?;
    ds.splits = split_patients(&ds.bags, ratios, seed)?;
    write_dataset(&ds, data)?;
    for s in milpf::embedset::Split::ALL {
        println!("{s}: {} bags", ds.split_bags(s).len());
    }
    Ok(())
}

fn log_path(model: &Path) -> PathBuf {
    let mut name = model.as_os_str().to_owned();
    name.push(".csv");
    PathBuf::from(name)
}

fn train(data: &Path, config: &Path, out: &Path) -> CliResult {
    let cfg = read_config(config)?;
    let prepared = PreparedData::new(&read_dataset(data)?)?;
    let run = train_once(&prepared, &cfg, cfg.seed, Exec::Sequential)?;
    save_checkpoint(&run.model, out)?;
    write_run_log(&log_path(out), &run)?;
    println!(
        "seed {}: best epoch {}, val AUC {:.4}, test AUC {:.4}",
        run.seed, run.best_epoch, run.val_auc, run.test_metrics.auc
    );
    Ok(())
}

fn eval(data: &Path, model: &Path, report: &Path) -> CliResult {
    let model = load_checkpoint(model)?;
    let prepared = PreparedData::new(&read_dataset(data)?)?;
    let r = evaluate(&model, &prepared, Exec::Sequential)?;
    write_json(report, &r)?;
    println!("test AUC {:.4}, bACC {:.4}, Spec@Sens=0.9 {:.4}", r.auc, r.bacc, r.spec_at_sens90);
    Ok(())
}

fn run_sweep(prepared: &PreparedData, cfg: &TrainConfig, jobs: usize) -> CliResult<milpf::trainer::Sweep> {
    if jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    if jobs == 1 {
        return Ok(multi_run(prepared, cfg, Exec::Sequential)?);
    }
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {jobs} workers: {e}")))?;
        Ok(pool.install(|| multi_run(prepared, cfg, Exec::Parallel))?)
    }
    #[cfg(not(feature = "parallel"))]
    {
        log::warn!("built without the parallel feature; --jobs {jobs} runs sequentially");
        Ok(multi_run(prepared, cfg, Exec::Sequential)?)
    }
}

fn sweep(data: &Path, config: &Path, runs: Option<usize>, out: &Path, jobs: usize) -> CliResult {
    let mut cfg = read_config(config)?;
    if let Some(r) = runs {
        if r == 0 {
            return Err(Failure::Usage("--runs must be at least 1".into()));
        }
        cfg.runs = r;
    }
    let prepared = PreparedData::new(&read_dataset(data)?)?;
    let result = run_sweep(&prepared, &cfg, jobs)?;
    create_dir(out)?;
    for run in &result.runs {
        save_checkpoint(&run.model, &out.join(format!("run_{}.model", run.seed)))?;
        write_run_log(&out.join(format!("run_{}.csv", run.seed)), run)?;
    }
    save_checkpoint(&result.best_run().model, &out.join("best.model"))?;
    let report = result.report();
    write_json(&out.join("sweep.json"), &report)?;
    println!(
        "{} runs: best seed {} (val AUC {:.4}, test AUC {:.4}); test AUC range {:.4}..{:.4}, median {:.4}",
        result.runs.len(),
        report.best_seed,
        report.best_val_auc,
        report.best_test.auc,
        report.test_auc.min,
        report.test_auc.max,
        report.test_auc.median
    );
    Ok(())
}

fn heatmap(data: &Path, model: &Path, bag_id: &str, overlap: f64, out: &Path) -> CliResult {
    let model = load_checkpoint(model)?;
    let ds = read_dataset(data)?;
    let bag = ds
        .bag(bag_id)
        .ok_or_else(|| Failure::Usage(format!("no bag {bag_id:?} in {}", data.display())))?;
    let alpha = tile_attention(bag, &model)?;
    create_dir(out)?;
    let mut weights = String::from("view_id,x0,y0,x1,y1,alpha\n");
    for (v, view) in bag.views.iter().enumerate() {
        let spec = GridSpec::new(view.image_width, view.image_height, view.tile_size, overlap)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let grid: BTreeSet<(u32, u32, u32, u32)> = tile_grid(&spec).iter().map(|r| (r.x0, r.y0, r.x1, r.y1)).collect();
        let tiles: Vec<(TileRect, f64)> = bag
            .tile_geoms
            .iter()
            .zip(&alpha)
            .filter(|(g, _)| g.view_index == v)
            .map(|(g, &a)| (g.rect, a))
            .collect();
        let off_grid = tiles
            .iter()
            .filter(|(r, _)| !grid.contains(&(r.x0, r.y0, r.x1, r.y1)))
            .count();
        if off_grid > 0 {
            log::warn!(
                "view {}: {off_grid} of {} tiles are not on the {overlap} overlap grid",
                view.view_id,
                tiles.len()
            );
        }
        for (r, a) in &tiles {
            let _ = writeln!(weights, "{},{},{},{},{},{a}", view.view_id, r.x0, r.y0, r.x1, r.y1);
        }
        let h = attention_heatmap(view, &tiles)?;
        let path = out.join(format!("{}.pgm", view.view_id));
        write_pgm(&path, &h)?;
        println!("{}", path.display());
    }
    let path = out.join("weights.csv");
    std::fs::write(&path, weights).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn detect(heatmap: &Path, threshold: f64, out: &Path) -> CliResult {
    let h = read_pgm(heatmap)?;
    let boxes = boxes_from_heatmap(&h, threshold).map_err(|e| Failure::Usage(e.to_string()))?;
    write_boxes_csv(out, &boxes)?;
    println!("{} boxes", boxes.len());
    Ok(())
}

fn grid(width: u32, height: u32, tile: u32, overlap: f64) -> CliResult {
    let spec = GridSpec::new(width, height, tile, overlap).map_err(|e| Failure::Usage(e.to_string()))?;
    for r in tile_grid(&spec) {
        println!("{} {} {} {}", r.x0, r.y0, r.x1, r.y1);
    }
    Ok(())
}

fn params(config: &Path, dim: usize) -> CliResult {
    let cfg = read_config(config)?;
    if dim == 0 {
        return Err(Failure::Usage("--dim must be at least 1".into()));
    }
    println!("{}", count_params(cfg.agg()?, HeadDims::new(dim))?);
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Validate { data } => validate(&data),
        Command::Split { data, seed, ratios } => split(&data, seed, &ratios),
        Command::Train { data, config, out } => train(&data, &config, &out),
        Command::Eval { data, model, report } => eval(&data, &model, &report),
        Command::Sweep {
            data,
            config,
            runs,
            out,
            jobs,
        } => sweep(&data, &config, runs, &out, jobs),
        Command::Heatmap {
            data,
            model,
            bag,
            overlap,
            out,
        } => heatmap(&data, &model, &bag, overlap, &out),
        Command::Detect { heatmap, threshold, out } => detect(&heatmap, threshold, &out),
        Command::Grid {
            width,
            height,
            tile,
            overlap,
        } => grid(width, height, tile, overlap),
        Command::Params { config, dim } => params(&config, dim),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
