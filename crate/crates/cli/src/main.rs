use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actorseg::ablation::{self, Grid};
use actorseg::config::ExperimentConfig;
use actorseg::data::{self, Split};
use actorseg::flops::{self, DEFAULT_QUERY_WORDS};
use actorseg::gradcheck::{self, Suite};
use actorseg::train::{self, Dataset, EpochLog};
use actorseg::ModelError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actorseg", version, about = "Language-queried video actor segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config sources, applied in order: file, `--set`, then the named flags.
#[derive(Args, Clone, Default)]
struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// spatial_only, temporal_only, both_concat, both_lgfs or full.
    #[arg(long)]
    variant: Option<String>,
    /// add, max or lgfs.
    #[arg(long)]
    fusion: Option<String>,
    /// Comma-separated stages 1..5 that carry modulation.
    #[arg(long)]
    cmam_stages: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra config assignment `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, ModelError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| ModelError::Config(format!("--set expects key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        for (key, value) in [("variant", &self.variant), ("fusion", &self.fusion), ("cmam_stages", &self.cmam_stages)] {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (train and test splits) to --out.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes config, checkpoint and log to --out.
    Train {
        #[command(flatten)]
        common: Common,
        /// Generate the dataset in memory instead of reading `dataset`.
        #[arg(long)]
        generate: bool,
    },
    /// Score a trained run directory on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Dataset directory; defaults to the run config's `dataset`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run an ablation grid over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// components, fusion, positions or all.
        #[arg(long, default_value = "components")]
        grid: String,
        /// Comma-separated seeds.
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        generate: bool,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// all, or a comma-separated list of tensor, text, visual, cmam, decoder.
        #[arg(long, default_value = "all")]
        module: String,
        /// Also check a deliberately broken backward, which must be reported as failing.
        #[arg(long)]
        corrupted_fixture: bool,
    },
    /// Multiply-accumulate count of one forward pass.
    Flops {
        #[command(flatten)]
        common: Common,
        /// Query length in words.
        #[arg(long, default_value_t = DEFAULT_QUERY_WORDS)]
        words: usize,
    },
}

enum Failure {
    Invalid(ModelError),
    Numerical(String),
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Invalid(e)
    }
}

fn print_epoch(e: &EpochLog) {
    eprintln!("{e}");
}

fn load_dataset(cfg: &ExperimentConfig, generate: bool) -> Result<Dataset, ModelError> {
    if generate {
        return Dataset::generate(cfg);
    }
    let dir = cfg
        .dataset
        .as_ref()
        .ok_or_else(|| ModelError::Validation("no dataset configured (set dataset=DIR or pass --generate)".into()))?;
    Dataset::load(dir, cfg.max_words)
}

fn generate(common: &Common) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let out = common.out_dir("data");
    data::write_dataset(&out, cfg.n_train, cfg.n_test, cfg.data_seed, cfg.difficulty, &cfg.generator())?;
    println!("wrote {} train and {} test samples to {}", cfg.n_train, cfg.n_test, out.display());
    Ok(())
}

fn run_train(common: &Common, generate: bool) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let data = load_dataset(&cfg, generate)?;
    let (model, log) = train::train(&cfg, &data, &mut print_epoch)?;
    let out = common.out_dir("run");
    train::save_run(&out, &cfg, &model, &log)?;
    if let Some(r) = &log.final_train {
        print!("{}", r.table("train"));
    }
    if let Some(r) = &log.final_test {
        print!("{}", r.table("test"));
    }
    println!("saved run to {}", out.display());
    Ok(())
}

fn run_eval(common: &Common, run: &Path, split: &str, dataset: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::from_file(&run.join(train::CONFIG_FILE))?;
    if let Some(d) = dataset {
        cfg.dataset = Some(d.to_path_buf());
    }
    let split: Split = split.parse()?;
    let data = load_dataset(&cfg, false)?;
    let model = train::load_model(&cfg, data.vocab.len(), &run.join(train::CHECKPOINT_FILE))?;
    let samples = data.split(split);
    if samples.is_empty() {
        return Err(ModelError::Validation(format!("the {} split is empty", split.name())).into());
    }
    let masks = train::predict(&model, samples, None)?;
    let report = train::evaluate(&model, samples)?;
    print!("{}", report.table(split.name()));
    print!("{}", report.key_values(split.name()));
    if let Some(out) = &common.out {
        train::write_predictions(out, samples, &masks)?;
        println!("wrote {} predicted masks to {}", masks.len(), out.display());
    }
    Ok(())
}

fn run_ablate(common: &Common, grid: &str, seeds: &str, generate: bool) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let grids: Vec<Grid> = if grid == "all" {
        Grid::ALL.to_vec()
    } else {
        grid.split(',').map(|g| g.trim().parse()).collect::<Result<_, _>>()?
    };
    let seeds: Vec<u64> = seeds
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| ModelError::Validation(format!("bad seed {s:?}"))))
        .collect::<Result<_, _>>()?;
    let data = load_dataset(&cfg, generate)?;
    let mut text = String::new();
    let mut kv = String::new();
    let mut cache = ablation::StageOneCache::default();
    for g in grids {
        let mut hook = |cell: &str, seed: u64, e: &EpochLog| eprintln!("[{} {cell} seed {seed}] {e}", g.name());
        let results = ablation::ablate(&cfg, &g.cells(), &seeds, &data, &mut cache, &mut hook)?;
        let table = ablation::format_table(g.title(), &results);
        print!("{table}");
        text += &table;
        kv += &ablation::key_values(&results);
    }
    if let Some(out) = &common.out {
        std::fs::create_dir_all(out).map_err(|e| ModelError::io(out, e))?;
        let write = |name: &str, body: &str| {
            let p = out.join(name);
            std::fs::write(&p, body).map_err(|e| ModelError::io(&p, e))
        };
        write("ablation.txt", &text)?;
        write("ablation_metrics.txt", &kv)?;
        write(train::CONFIG_FILE, &cfg.to_text())?;
    }
    Ok(())
}

fn run_gradcheck(common: &Common, module: &str, corrupted_fixture: bool) -> Result<(), Failure> {
    let suites = Suite::parse_selector(module)?;
    let seed = common.seed.unwrap_or(0);
    let mut rows = gradcheck::run(&suites, seed)?;
    if corrupted_fixture {
        rows.push(gradcheck::corrupted_fixture()?);
    }
    for r in &rows {
        println!("{r}");
    }
    let failed = rows.iter().filter(|r| !r.passes()).count();
    println!("{} checks, {failed} failed", rows.len());
    if failed > 0 {
        return Err(Failure::Numerical(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

fn run_flops(common: &Common, words: usize) -> Result<(), Failure> {
    let cfg = common.resolve()?;
    let mc = cfg.model_config(data::vocabulary().len())?;
    let report = flops::count(&mc, words);
    print!("{}", report.to_text());
    let measured = flops::measure(&mc, words, cfg.seed)?;
    let agrees = report.by_op() == measured.forward.by_op
        && measured
            .spatial_branch
            .as_ref()
            .is_none_or(|t| t.total() == report.branch_total(actorseg::visual::FeatureKind::Spatial));
    println!("tally.total={}", measured.forward.total());
    println!("tally_matches={agrees}");
    if !agrees {
        return Err(Failure::Numerical("analytic count differs from the measured tally".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common } => generate(common),
        Command::Train { common, generate } => run_train(common, *generate),
        Command::Eval { common, run, split, dataset } => run_eval(common, run, split, dataset.as_deref()),
        Command::Ablate { common, grid, seeds, generate } => run_ablate(common, grid, seeds, *generate),
        Command::Gradcheck {
            common,
            module,
            corrupted_fixture,
        } => run_gradcheck(common, module, *corrupted_fixture),
        Command::Flops { common, words } => run_flops(common, *words),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(2)
        }
    }
}
