use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use log::{info, warn};
use mmfnd::enrich::{
    load_fixtures, DescriptionCache, DescriptionFetcher, DescriptionSource, FetchMode, Gazetteer,
    Lookup,
};
use mmfnd::model::{gradcheck_case, gradcheck_model};
use mmfnd::numerics::DEFAULT_STEP;
use mmfnd::pipeline::{
    export_projection, load_jsonl, resolve_descriptions, run_ablation_suite, synth_generate, train,
    write_jsonl, Dataset, EpochStats, Split, SynthConfig, TrainedModel,
};
use mmfnd::{Ablation, Execution, Objective};

mod config;

use config::CliConfig;

/// Gradient-check failure threshold on the max relative error.
const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mmfnd::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(mmfnd::Error::Config(_)) | CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::CheckFailed(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "mmfnd", version, about = "Multimodal fake-news detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,

    /// Run every data-parallel loop on the calling thread
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic train/test split, gazetteer and description fixtures
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON generator settings; flags take precedence
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model and report metrics on the test split
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a trained model
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write metrics.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every ablation variant over several seeds
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare analytic gradients with central differences
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        descriptions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = mmfnd::align::DEFAULT_TEMPERATURE)]
        tau: f64,
        #[arg(long, default_value = "none")]
        ablation: Ablation,
    },
    /// Resolve entity descriptions into the on-disk cache
    FetchDesc {
        /// One entity title per line
        #[arg(long)]
        entities: PathBuf,
        #[arg(long, env = "ERIC_CACHE_DIR")]
        cache: PathBuf,
        /// Offline lookups fall back to these summaries
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Query the live summary API for cache misses
        #[arg(long)]
        live: bool,
    },
    /// Export a 2-D projection of the fused representations
    Viz {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "ERIC_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self, serial: bool) -> Result<CliConfig> {
        let mut cfg = CliConfig::load(self.config.as_deref())?;
        let over = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        };
        over(&mut cfg.data, &self.data);
        over(&mut cfg.test_data, &self.test_data);
        over(&mut cfg.out_dir, &self.out);
        over(&mut cfg.cache_dir, &self.cache_dir);
        over(&mut cfg.gazetteer, &self.gazetteer);
        over(&mut cfg.fixtures, &self.fixtures);
        if serial {
            cfg.execution = Execution::Serial;
        }
        Ok(cfg)
    }
}

pub(crate) fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| mmfnd::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| mmfnd::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value).map_err(mmfnd::Error::from)? + "\n")
}

/// Loads a split and fills missing descriptions offline when the variant
/// uses them.
fn load_split(path: &Path, split: Split, cfg: &CliConfig, ablation: Ablation) -> Result<Dataset> {
    let (mut data, report) = load_jsonl(path, split)?;
    if !report.skipped.is_empty() {
        warn!("{}: skipped {} items without text or image", path.display(), report.skipped.len());
    }
    let needs = data.items.iter().any(|x| x.desc_sentences.is_none());
    if needs && ablation.uses_descriptions() {
        let Some(cache_dir) = &cfg.cache_dir else {
            warn!("{}: items without descriptions and no cache dir; continuing without", path.display());
            return Ok(data);
        };
        let mut fetcher = DescriptionFetcher::new(DescriptionCache::open(cache_dir)?);
        if let Some(f) = &cfg.fixtures {
            fetcher = fetcher.with_fixtures(load_fixtures(f)?);
        }
        let gazetteer = match &cfg.gazetteer {
            Some(g) => Gazetteer::load(g)?,
            None => Gazetteer::new(Vec::<String>::new()),
        };
        let r = resolve_descriptions(&mut data, &gazetteer, &fetcher, FetchMode::Offline)?;
        info!("resolved {} descriptions, {} missing", r.resolved, r.missing.len());
    }
    Ok(data)
}

fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| mmfnd::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(TrainedModel::from_json(&text)?)
}

fn loss_curve_csv(curve: &[EpochStats]) -> String {
    let mut s = String::from("epoch,loss,contrastive,detection\n");
    for e in curve {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.contrastive, e.detection));
    }
    s
}

fn cmd_synth(
    out: &Path,
    n_train: Option<usize>,
    n_test: Option<usize>,
    seed: Option<u64>,
    config: Option<&Path>,
) -> Result<()> {
    let mut cfg: SynthConfig = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| mmfnd::Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    cfg.n_train = n_train.unwrap_or(cfg.n_train);
    cfg.n_test = n_test.unwrap_or(cfg.n_test);
    cfg.seed = seed.unwrap_or(cfg.seed);
    let data = synth_generate(&cfg)?;
    create_dir(out)?;
    write_jsonl(&out.join("train.jsonl"), &data.train.items)?;
    write_jsonl(&out.join("test.jsonl"), &data.test.items)?;
    write_file(&out.join("gazetteer.txt"), &(data.gazetteer.join("\n") + "\n"))?;
    mmfnd::enrich::write_fixtures(
        &out.join("fixtures.jsonl"),
        data.fixtures.iter().map(|(t, s)| (t.as_str(), s.as_str())),
    )?;
    write_file(&out.join("synth_config.json"), &to_json(&cfg)?)?;
    println!(
        "wrote {} train and {} test items, {} entities to {}",
        data.train.len(),
        data.test.len(),
        data.gazetteer.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(mut cfg: CliConfig, ablation: Option<Ablation>, seed: Option<u64>, epochs: Option<usize>) -> Result<()> {
    cfg.train.ablation = ablation.unwrap_or(cfg.train.ablation);
    cfg.train.seed = seed.unwrap_or(cfg.train.seed);
    cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
    cfg.train.validate()?;
    let out = cfg.out_dir()?.to_path_buf();
    let (train_path, test_path) = cfg.data_paths()?;
    let ablation = cfg.train.ablation;
    let train_set = load_split(&train_path, Split::Train, &cfg, ablation)?;
    let test_set = test_path
        .map(|p| load_split(&p, Split::Test, &cfg, ablation))
        .transpose()?;

    let outcome = train(&cfg.train, &train_set, cfg.execution, |e| {
        println!("epoch {:>3}  loss {:.6}", e.epoch, e.loss);
    })?;
    let eval_set = test_set.as_ref().unwrap_or(&train_set);
    let metrics = outcome.model.evaluate(eval_set, cfg.execution)?;

    create_dir(&out)?;
    cfg.echo(&out)?;
    write_file(&out.join("params.json"), &outcome.model.to_json()?)?;
    write_file(&out.join("loss_curve.csv"), &loss_curve_csv(&outcome.curve))?;
    write_file(&out.join("metrics.json"), &to_json(&metrics)?)?;
    write_file(&out.join("metrics.txt"), &format!("{metrics}\n"))?;
    println!("{} split ({} items):\n{metrics}", eval_set.split, eval_set.len());
    Ok(())
}

fn cmd_eval(params: &Path, data: &Path, out: Option<&Path>, exec: Execution) -> Result<()> {
    let model = load_model(params)?;
    let cfg = CliConfig::default();
    let dataset = load_split(data, Split::Test, &cfg, model.config.ablation)?;
    let metrics = model.evaluate(&dataset, exec)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        write_file(&dir.join("metrics.json"), &to_json(&metrics)?)?;
    }
    println!("{metrics}");
    Ok(())
}

fn cmd_ablate(mut cfg: CliConfig, seeds: &[u64], epochs: Option<usize>) -> Result<()> {
    cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
    cfg.train.validate()?;
    let (train_path, test_path) = cfg.data_paths()?;
    let test_path = test_path.ok_or_else(|| CliError::Usage("ablation needs a test split".into()))?;
    let train_set = load_split(&train_path, Split::Train, &cfg, Ablation::None)?;
    let test_set = load_split(&test_path, Split::Test, &cfg, Ablation::None)?;
    let report = run_ablation_suite(&cfg.train, &train_set, &test_set, seeds, cfg.execution, |a, s, m| {
        println!("{a:<5} seed {s:<4} accuracy {:.4}", m.accuracy);
    })?;
    if let Some(out) = &cfg.out_dir {
        create_dir(out)?;
        cfg.echo(out)?;
        write_file(&out.join("ablation.json"), &to_json(&report)?)?;
        write_file(&out.join("ablation.txt"), &format!("{report}\n"))?;
    }
    println!("{report}");
    Ok(())
}

fn cmd_gradcheck(d: usize, n: usize, descriptions: usize, seed: u64, tau: f64, ablation: Ablation, exec: Execution) -> Result<()> {
    let case = gradcheck_case(d, n, descriptions, seed, 1e-3, ablation)?;
    let objective = Objective {
        tau,
        lambda_c: 1.0,
        ablation,
    };
    let report = gradcheck_model(&case.params, &case.batch(), &objective, DEFAULT_STEP, exec)?;
    let width = report.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    let mut worst: f64 = 0.0;
    for (name, err) in &report {
        let flag = if *err < GRADCHECK_TOL { "ok" } else { "FAIL" };
        println!("{name:<width$}  {err:.3e}  {flag}");
        worst = worst.max(*err);
    }
    println!(
        "max relative error {worst:.3e} over {} parameters ({} scalars), d={d} n={n} descriptions={descriptions}",
        report.len(),
        case.params.num_scalars()
    );
    if worst >= GRADCHECK_TOL {
        return Err(CliError::CheckFailed(format!(
            "gradient check failed: {worst:.3e} >= {GRADCHECK_TOL:e}"
        )));
    }
    Ok(())
}

fn cmd_fetch_desc(entities: &Path, cache: &Path, fixtures: Option<&Path>, live: bool) -> Result<()> {
    let titles = Gazetteer::load(entities)?;
    let mut fetcher = DescriptionFetcher::new(DescriptionCache::open(cache)?);
    if let Some(f) = fixtures {
        fetcher = fetcher.with_fixtures(load_fixtures(f)?);
    }
    let mode = if live {
        #[cfg(not(feature = "live-fetch"))]
        return Err(CliError::Usage("built without live fetching".into()));
        #[cfg(feature = "live-fetch")]
        {
            fetcher = fetcher.with_transport(mmfnd::enrich::UreqTransport::default());
            FetchMode::Live
        }
    } else {
        FetchMode::Offline
    };
    let (mut cached, mut stored, mut missing) = (0, 0, Vec::new());
    for title in titles.titles() {
        match fetcher.fetch_title(title, mode) {
            Ok(Lookup::Found(desc)) => match desc.source {
                DescriptionSource::Cache => cached += 1,
                DescriptionSource::Live => stored += 1,
                DescriptionSource::Fixture => {
                    fetcher.cache().put(title, &desc.sentence)?;
                    stored += 1;
                }
            },
            Ok(Lookup::Missing { title }) | Err(mmfnd::Error::CacheMiss(title)) => missing.push(title),
            Err(e) => return Err(e.into()),
        }
    }
    for t in &missing {
        warn!("no description for {t:?}");
    }
    println!(
        "{} entities: {cached} already cached, {stored} stored, {} unavailable",
        titles.len(),
        missing.len()
    );
    Ok(())
}

fn cmd_viz(params: &Path, data: &Path, out: &Path, exec: Execution) -> Result<()> {
    let model = load_model(params)?;
    let dataset = load_split(data, Split::Test, &CliConfig::default(), model.config.ablation)?;
    let projection = export_projection(&model, &dataset, out, exec)?;
    let [a, b] = projection.explained_ratio;
    println!(
        "projected {} items; explained variance PC1 {:.1}%, PC2 {:.1}%; wrote {}",
        projection.points.len(),
        100.0 * a,
        100.0 * b,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = if cli.serial { Execution::Serial } else { Execution::Parallel };
    match cli.command {
        Command::Synth { out, n_train, n_test, seed, config } => {
            cmd_synth(&out, n_train, n_test, seed, config.as_deref())
        }
        Command::Train { run, ablation, seed, epochs } => {
            cmd_train(run.resolve(cli.serial)?, ablation, seed, epochs)
        }
        Command::Eval { params, data, out } => cmd_eval(&params, &data, out.as_deref(), exec),
        Command::Ablate { run, seeds, epochs } => cmd_ablate(run.resolve(cli.serial)?, &seeds, epochs),
        Command::Gradcheck { d, n, descriptions, seed, tau, ablation } => {
            cmd_gradcheck(d, n, descriptions, seed, tau, ablation, exec)
        }
        Command::FetchDesc { entities, cache, fixtures, live } => {
            cmd_fetch_desc(&entities, &cache, fixtures.as_deref(), live)
        }
        Command::Viz { params, data, out } => cmd_viz(&params, &data, &out, exec),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
