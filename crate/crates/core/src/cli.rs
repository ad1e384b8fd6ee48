//! The `momes` command-line tool.
//!
//! ```text
//! momes evolve <config.toml>            run a (multi-start) search
//! momes evaluate <front.json> <data.csv> re-evaluate saved expressions
//! momes baseline <config.toml>          fit the linear reference model
//! momes validate-config <config.toml>   check a config without running
//! momes synth <mex|star|quadratic> <out.csv>
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{fit_linear, format_coefficient, LinearModel};
use crate::cgp::{CgpParams, ConstInit};
use crate::dataset::{ColumnScaling, Dataset};
use crate::datasets::{
    apply_scaling, fit_scaling, load_csv, synthetic_mex, synthetic_star, synthetic_univariate,
    validate_specs, write_csv, ColumnSpec, Role,
};
use crate::dual::KernelSet;
use crate::error::Error;
use crate::loss::predict;
use crate::metrics::{metrics, Metric, MetricReport};
use crate::momes::{multi_start, non_dominated_sort, FrontMember, Individual, MomesConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn data(context: impl std::fmt::Display, e: Error) -> Self {
        match e {
            Error::RankDeficient => CliError::Numerical(format!("{context}: {e}")),
            Error::Config(msg) => CliError::Config(format!("{context}: {msg}")),
            e => CliError::Data(format!("{context}: {e}")),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A run configuration file (TOML). Relative paths are resolved against the
/// directory containing the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub test: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub kernels: Vec<String>,
    pub rows: usize,
    pub columns: usize,
    pub levels_back: usize,
    pub n_constants: usize,
    pub max_mutations: usize,
    pub generations: usize,
    pub population_size: usize,
    #[serde(default = "one")]
    pub n_starts: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default)]
    pub const_init: ConstInit,
    #[serde(rename = "column")]
    pub column_specs: Vec<ColumnSpec>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        cfg.train = resolve(&cfg.train);
        cfg.test = cfg.test.as_deref().map(resolve);
        cfg.output_dir = resolve(&cfg.output_dir);
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        let positive = [
            ("rows", self.rows),
            ("columns", self.columns),
            ("levels_back", self.levels_back),
            ("max_mutations", self.max_mutations),
            ("generations", self.generations),
            ("population_size", self.population_size),
            ("n_starts", self.n_starts),
            ("parallelism", self.parallelism),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CliError::Config(format!("`{name}` must be positive")));
            }
        }
        validate_specs(&self.column_specs).map_err(|e| CliError::Config(e.to_string()))?;
        self.momes_config().map(|_| ())
    }

    pub fn kernel_set(&self) -> CliResult<KernelSet> {
        KernelSet::from_names(&self.kernels).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn n_features(&self) -> usize {
        self.column_specs
            .iter()
            .filter(|s| s.role == Role::Feature)
            .count()
    }

    pub fn momes_config(&self) -> CliResult<MomesConfig> {
        let cgp = CgpParams::new(
            self.n_features(),
            self.n_constants,
            self.rows,
            self.columns,
            self.levels_back,
            self.kernel_set()?,
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let cfg = MomesConfig {
            population_size: self.population_size,
            generations: self.generations,
            max_mutations: self.max_mutations,
            cgp,
            const_init: self.const_init,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Hex SHA-256 over the settings that determine a run's outcome and
    /// the training file contents. Output location and parallelism are
    /// excluded.
    pub fn digest(&self) -> CliResult<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            kernels: &'a [String],
            rows: usize,
            columns: usize,
            levels_back: usize,
            n_constants: usize,
            max_mutations: usize,
            generations: usize,
            population_size: usize,
            n_starts: usize,
            seed: u64,
            const_init: ConstInit,
            column: &'a [ColumnSpec],
        }
        let key = Key {
            kernels: &self.kernels,
            rows: self.rows,
            columns: self.columns,
            levels_back: self.levels_back,
            n_constants: self.n_constants,
            max_mutations: self.max_mutations,
            generations: self.generations,
            population_size: self.population_size,
            n_starts: self.n_starts,
            seed: self.seed,
            const_init: self.const_init,
            column: &self.column_specs,
        };
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&key).expect("serializable"));
        let train = fs::read(&self.train)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.train.display())))?;
        h.update(&train);
        Ok(h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }
}

/// Saved front (or population) of one run: everything needed to re-evaluate
/// the members on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontFile {
    pub seed: u64,
    pub config_digest: String,
    pub params: CgpParams,
    pub feature_names: Vec<String>,
    pub columns: Vec<ColumnSpec>,
    pub scaling: Vec<ColumnScaling>,
    pub members: Vec<FrontMember>,
}

impl FrontFile {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let file: FrontFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        file.params
            .validate()
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for (i, m) in file.members.iter().enumerate() {
            m.genotype()
                .validate(&file.params)
                .map_err(|e| CliError::Data(format!("{}: member {i}: {e}", path.display())))?;
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }
}

#[derive(Parser, Debug)]
#[command(name = "momes", about = "Symbolic regression with differentiable CGP", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured multi-start search and write fronts, logs and a report.
    Evolve {
        config: PathBuf,
        /// Override the config's parallelism.
        #[arg(long)]
        parallelism: Option<usize>,
        /// Override the config's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Re-evaluate every member of a saved front on a dataset.
    Evaluate {
        front: PathBuf,
        data: PathBuf,
        /// Comma-separated subset of mse,rmse,mae,over,under,precision.
        #[arg(long, default_value = "rmse,mae,over,under,precision")]
        metrics: String,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the least-squares linear reference model and report its errors.
    Baseline {
        config: PathBuf,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Parse a config and check that its data files load.
    ValidateConfig { config: PathBuf },
    /// Write a synthetic dataset.
    Synth {
        kind: SynthKind,
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Shift of the operating range (mex only).
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Mex,
    Star,
    Quadratic,
}

/// Runs the tool on `args` (including the program name), writing normal
/// output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = write!(out, "{e}");
            return code;
        }
    };
    let result = match cli.command {
        Command::Evolve {
            config,
            parallelism,
            output_dir,
        } => cmd_evolve(&config, parallelism, output_dir, out),
        Command::Evaluate {
            front,
            data,
            metrics,
            out: csv_out,
        } => cmd_evaluate(&front, &data, &metrics, csv_out.as_deref(), out),
        Command::Baseline {
            config,
            train,
            test,
        } => cmd_baseline(&config, train, test, out),
        Command::ValidateConfig { config } => cmd_validate_config(&config, out),
        Command::Synth {
            kind,
            out: path,
            rows,
            seed,
            shift,
        } => cmd_synth(kind, &path, rows, seed, shift, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("momes: {e}");
            e.exit_code()
        }
    }
}

/// Training (and optional test) data, scaled with training statistics.
struct Prepared {
    train: Dataset,
    test: Option<Dataset>,
    scaling: Vec<ColumnScaling>,
}

fn load_data(path: &Path, specs: &[ColumnSpec]) -> CliResult<Dataset> {
    load_csv(path, specs).map_err(|e| CliError::data(path.display(), e))
}

fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let raw_train = load_data(&cfg.train, &cfg.column_specs)?;
    let scaling = fit_scaling(&raw_train, &cfg.column_specs)
        .map_err(|e| CliError::data(cfg.train.display(), e))?;
    let train = apply_scaling(&raw_train, &scaling).map_err(|e| CliError::data("scaling", e))?;
    let test = match &cfg.test {
        Some(path) => {
            let raw = load_data(path, &cfg.column_specs)?;
            Some(apply_scaling(&raw, &scaling).map_err(|e| CliError::data("scaling", e))?)
        }
        None => None,
    };
    Ok(Prepared {
        train,
        test,
        scaling,
    })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_evolve(
    config: &Path,
    parallelism: Option<usize>,
    output_dir: Option<PathBuf>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(p) = parallelism {
        if p == 0 {
            return Err(CliError::Config("parallelism must be positive".into()));
        }
        cfg.parallelism = p;
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let momes_cfg = cfg.momes_config()?;
    let data = prepare(&cfg)?;
    let digest = cfg.digest()?;

    let result = multi_start(&data.train, &momes_cfg, cfg.n_starts, cfg.parallelism)
        .map_err(|e| CliError::Numerical(e.to_string()))?;

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.output_dir.display())))?;
    let file_for = |seed: u64, members: Vec<FrontMember>| FrontFile {
        seed,
        config_digest: digest.clone(),
        params: momes_cfg.cgp.clone(),
        feature_names: data.train.feature_names().to_vec(),
        columns: cfg.column_specs.clone(),
        scaling: data.scaling.clone(),
        members,
    };

    let mut report = String::from("seed,complexity,train_loss");
    if data.test.is_some() {
        report.push_str(",test_mse,test_rmse,test_mae");
    }
    report.push_str(",infix\n");

    for run in &result.runs {
        let front = file_for(run.seed, run.front.members.clone());
        write_file(
            &cfg.output_dir.join(format!("front_seed_{}.json", run.seed)),
            &front.to_json(),
        )?;
        let population = file_for(
            run.seed,
            run.population
                .iter()
                .map(|ind| FrontMember {
                    genes: ind.genotype.genes.clone(),
                    constants: ind.genotype.constants.clone(),
                    infix: ind
                        .genotype
                        .decode_infix(&momes_cfg.cgp, Some(data.train.feature_names())),
                    loss: ind.loss,
                    complexity: ind.complexity,
                })
                .collect(),
        );
        write_file(
            &cfg.output_dir.join(format!("population_seed_{}.json", run.seed)),
            &population.to_json(),
        )?;
        write_file(
            &cfg.output_dir.join(format!("runlog_seed_{}.csv", run.seed)),
            &run.log.to_csv(),
        )?;
        for m in &run.front.members {
            let _ = write!(report, "{},{},{:e}", run.seed, m.complexity, m.loss);
            if let Some(test) = &data.test {
                let pred = predict(&m.genotype(), &momes_cfg.cgp, test)
                    .map_err(|e| CliError::data("test set", e))?;
                let r = metrics(&pred, test).map_err(|e| CliError::data("test set", e))?;
                let _ = write!(report, ",{:e},{:e},{:e}", r.mse, r.rmse, r.mae);
            }
            let _ = writeln!(report, ",\"{}\"", m.infix.replace('"', "\"\""));
        }
    }
    write_file(&cfg.output_dir.join("report.csv"), &report)?;

    let _ = writeln!(out, "{:>8}  {:>16}  {:>10}", "seed", "best train loss", "front size");
    for (i, run) in result.runs.iter().enumerate() {
        let best = run.front.extreme().map_or(f64::INFINITY, |m| m.loss);
        let mark = if i == result.best { "  <- best" } else { "" };
        let _ = writeln!(
            out,
            "{:>8}  {:>16.6e}  {:>10}{mark}",
            run.seed,
            best,
            run.front.members.len()
        );
    }
    if let Some(m) = result.best_run().front.extreme() {
        let _ = writeln!(out, "best expression: {}", m.infix);
    }
    Ok(())
}

fn parse_metrics(list: &str) -> CliResult<Vec<Metric>> {
    let names: Vec<&str> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::Config("metric set is empty".into()));
    }
    names
        .into_iter()
        .map(|n| Metric::parse(n).ok_or_else(|| CliError::Config(format!("unknown metric `{n}`"))))
        .collect()
}

/// One row of an evaluation table.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluatedMember {
    pub complexity: usize,
    pub train_loss: f64,
    pub report: MetricReport,
    pub on_test_front: bool,
    pub infix: String,
}

/// Evaluates every member of `front` on `data` (raw, unscaled). Members on
/// the non-dominated front of (test MSE, complexity) are flagged.
pub fn evaluate_front(front: &FrontFile, data: &Dataset) -> CliResult<Vec<EvaluatedMember>> {
    let data = apply_scaling(data, &front.scaling).map_err(|e| CliError::data("scaling", e))?;
    let mut rows = Vec::with_capacity(front.members.len());
    let mut individuals = Vec::with_capacity(front.members.len());
    for m in &front.members {
        let g = m.genotype();
        let pred = predict(&g, &front.params, &data).map_err(|e| CliError::data("dataset", e))?;
        let report = metrics(&pred, &data).map_err(|e| CliError::data("dataset", e))?;
        individuals.push(Individual {
            genotype: g,
            loss: if report.mse.is_finite() {
                report.mse
            } else {
                f64::INFINITY
            },
            complexity: m.complexity,
        });
        rows.push(EvaluatedMember {
            complexity: m.complexity,
            train_loss: m.loss,
            report,
            on_test_front: false,
            infix: m.infix.clone(),
        });
    }
    if let Some(first) = non_dominated_sort(&individuals).first() {
        for &i in first {
            rows[i].on_test_front = true;
        }
    }
    Ok(rows)
}

/// Loads `path` with the front's column layout. Bound columns are optional.
fn load_for_front(front: &FrontFile, path: &Path) -> CliResult<Dataset> {
    match load_csv(path, &front.columns) {
        Err(Error::MissingColumn(name))
            if front.columns.iter().any(|c| {
                c.name == name && matches!(c.role, Role::LowerBound | Role::UpperBound)
            }) =>
        {
            let specs: Vec<ColumnSpec> = front
                .columns
                .iter()
                .filter(|c| !matches!(c.role, Role::LowerBound | Role::UpperBound))
                .cloned()
                .collect();
            load_data(path, &specs)
        }
        other => other.map_err(|e| CliError::data(path.display(), e)),
    }
}

pub fn cmd_evaluate(
    front_path: &Path,
    data_path: &Path,
    metric_list: &str,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let selected = parse_metrics(metric_list)?;
    let front = FrontFile::read(front_path)?;
    let data = load_for_front(&front, data_path)?;
    let rows = evaluate_front(&front, &data)?;

    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
    let mut table = format!("{:>10}  {:>14}", "complexity", "train loss");
    let mut csv = String::from("complexity,train_loss");
    for m in &selected {
        let _ = write!(table, "  {:>10}", m.name());
        let _ = write!(csv, ",{}", m.name());
    }
    table.push_str("  test front  expression\n");
    csv.push_str(",on_test_front,infix\n");
    for r in &rows {
        let _ = write!(table, "{:>10}  {:>14.6e}", r.complexity, r.train_loss);
        let _ = write!(csv, "{},{:e}", r.complexity, r.train_loss);
        for m in &selected {
            let v = m.value(&r.report);
            let _ = write!(table, "  {:>10}", fmt(v));
            let _ = write!(csv, ",{}", v.map_or(String::new(), |v| format!("{v:e}")));
        }
        let flag = if r.on_test_front { "*" } else { "" };
        let _ = writeln!(table, "  {:>10}  {}", flag, r.infix);
        let _ = writeln!(
            csv,
            ",{},\"{}\"",
            r.on_test_front,
            r.infix.replace('"', "\"\"")
        );
    }
    let _ = write!(out, "{table}");
    if let Some(path) = csv_out {
        write_file(path, &csv)?;
    }
    Ok(())
}

pub fn cmd_baseline(
    config: &Path,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(p) = train {
        cfg.train = p;
    }
    if test.is_some() {
        cfg.test = test;
    }
    let train = load_data(&cfg.train, &cfg.column_specs)?;
    let test = cfg
        .test
        .as_ref()
        .map(|p| load_data(p, &cfg.column_specs))
        .transpose()?;
    let model = fit_linear(&train).map_err(|e| CliError::data("baseline fit", e))?;
    write_baseline_report(&model, &train, test.as_ref(), out)
}

fn write_baseline_report(
    model: &LinearModel,
    train: &Dataset,
    test: Option<&Dataset>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let _ = writeln!(out, "{:<12}  {:>14}", "feature", "coefficient");
    for (name, c) in train.feature_names().iter().zip(&model.coefficients) {
        let _ = writeln!(out, "{:<12}  {:>14}", name, format_coefficient(*c));
    }
    let _ = writeln!(out, "{:<12}  {:>14}", "(intercept)", format_coefficient(model.intercept));
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<6}  {:>10}  {:>18}  {:>19}",
        "split", "RMSE", "avg. over-estimate", "avg. under-estimate"
    );
    let mut splits = vec![("train", train)];
    if let Some(t) = test {
        splits.push(("test", t));
    }
    for (label, data) in splits {
        let r = metrics(&model.predict(data), data).map_err(|e| CliError::data(label, e))?;
        let _ = writeln!(
            out,
            "{:<6}  {:>10.3}  {:>18.3}  {:>19.3}",
            label, r.rmse, r.avg_overestimate, r.avg_underestimate
        );
    }
    Ok(())
}

pub fn cmd_validate_config(config: &Path, out: &mut dyn Write) -> CliResult<()> {
    let cfg = RunConfig::load(config)?;
    cfg.momes_config()?;
    for path in std::iter::once(&cfg.train).chain(cfg.test.as_ref()) {
        if !path.exists() {
            return Err(CliError::Data(format!("{}: file not found", path.display())));
        }
    }
    let data = prepare(&cfg)?;
    let _ = writeln!(
        out,
        "ok: {} training rows, {} features{}",
        data.train.len(),
        data.train.n_features(),
        data.test
            .as_ref()
            .map_or(String::new(), |t| format!(", {} test rows", t.len()))
    );
    Ok(())
}

fn cmd_synth(
    kind: SynthKind,
    path: &Path,
    rows: usize,
    seed: u64,
    shift: f64,
    out: &mut dyn Write,
) -> CliResult<()> {
    if rows == 0 {
        return Err(CliError::Config("rows must be positive".into()));
    }
    let (data, target) = match kind {
        SynthKind::Mex => (synthetic_mex(rows, seed, shift), "P_th"),
        SynthKind::Star => (synthetic_star(rows, seed), "age"),
        SynthKind::Quadratic => (
            synthetic_univariate(rows, seed, (-2.0, 2.0), |x| 2.5 * x * x + 1.3),
            "y",
        ),
    };
    write_csv(path, &data, target).map_err(|e| CliError::data(path.display(), e))?;
    let _ = writeln!(out, "wrote {} rows to {}", data.len(), path.display());
    Ok(())
}
