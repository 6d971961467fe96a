use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use socid::models::{fit_model1, fit_model2, fit_model3, FitError, ModelFileError, ModelKind, SocModel};
use socid::regression::SparseCoefficients;
use socid::sim::{
    generate_dataset, read_series_csv, simulate, write_series_csv, ConfigError, SeriesCsvError, SimError,
    SimulationConfig, SocTimeSeries, DEFAULT_PWM_GRID,
};
use socid::validation::{error_metrics, fixture, series_points, SocPoint, ValidationError};

#[derive(Parser)]
#[command(name = "socid", version, about = "Simulate robot battery drain and identify SOC models")]
struct Cli {
    /// TOML file overriding the default robot parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for generated files.
    #[arg(long, global = true, env = "SOCID_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one PWM level and write `series_pwm<P>.csv`.
    Simulate {
        #[arg(long)]
        pwm: f64,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        record_interval: Option<f64>,
    },
    /// Simulate a grid of PWM levels and write `dataset.csv`.
    Dataset {
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Fit a model and write `model<N>.csv` plus `fit_summary_model<N>.txt`.
    Fit {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        model: u8,
        /// Levels excluded from the fit, comma separated, or `none`.
        #[arg(long, default_value = "40,90")]
        holdout: String,
        /// Fit on an existing dataset CSV instead of simulating the default grid.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a model file at one point.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        pwm: f64,
    },
    /// Compare a model file against freshly simulated held-out levels.
    Validate {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long, default_value = "40,90")]
        holdout: String,
    },
    /// Print a published reference table (I, V or VI).
    Fixtures {
        #[arg(long)]
        table: String,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("config {path}: {source}")]
    ConfigFile { path: PathBuf, source: ConfigError },
    #[error("{0}")]
    Usage(String),
    #[error("simulation: {0}")]
    Sim(SimError),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("validation: {0}")]
    Validation(#[from] ValidationError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    ModelFile { path: PathBuf, source: ModelFileError },
    #[error("{path}: {source}")]
    Dataset { path: PathBuf, source: SeriesCsvError },
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c),
            other => CliError::Sim(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::ConfigFile { .. } => 3,
            CliError::Usage(_) => 2,
            CliError::Sim(_) | CliError::Fit(_) | CliError::Validation(_) => 4,
            CliError::Io { .. } | CliError::ModelFile { .. } | CliError::Dataset { .. } => 5,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, CliError> {
    Ok(match path {
        Some(p) => SimulationConfig::from_path(p)
            .map_err(|source| CliError::ConfigFile { path: p.to_path_buf(), source })?,
        None => SimulationConfig::default(),
    })
}

fn parse_levels(text: &str) -> Result<Vec<f64>, CliError> {
    if text.trim().eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid pwm level `{}` in --holdout", s.trim())))
        })
        .collect()
}

/// `40` for whole levels, `37.5` otherwise.
fn level_tag(pwm: f64) -> String {
    if pwm.fract() == 0.0 {
        format!("{}", pwm as i64)
    } else {
        format!("{pwm}")
    }
}

fn load_model(path: &Path) -> Result<SocModel, CliError> {
    let file = File::open(path).map_err(io_err(path))?;
    SocModel::read(BufReader::new(file)).map_err(|source| CliError::ModelFile { path: path.to_path_buf(), source })
}

fn fit_summary(kind: ModelKind, levels: &[f64], holdout: &[f64], rows: usize, xi: &SparseCoefficients) -> String {
    let mut s = format!("model: {}\nfit levels: {:?}\nheld out: {:?}\nrows: {rows}\n", kind.tag(), levels, holdout);
    s.push_str(&format!("threshold: {:e}\nregression terms:\n", xi.threshold_used));
    for ((name, v), active) in xi.column_names.iter().zip(&xi.values).zip(&xi.active) {
        s.push_str(&format!("  {name:<22} {v:>+.9e}{}\n", if *active { "" } else { "  (pruned)" }));
    }
    s
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(cli.config.as_deref())?;
    let out = cli.out_dir;
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;

    match cli.command {
        Command::Simulate { pwm, duration, dt, record_interval } => {
            if let Some(d) = duration {
                config.duration_s = d;
            }
            if let Some(d) = dt {
                config.dt_s = d;
            }
            if let Some(r) = record_interval {
                config.record_interval_s = r;
            }
            config.validate()?;
            let series = simulate(pwm, &config)?;
            let path = out.join(format!("series_pwm{}.csv", level_tag(pwm)));
            write_file(&path, |w| write_series_csv(std::slice::from_ref(&series), w))?;
            let last = series.samples.last().expect("series has an initial sample");
            println!("{}: {} samples, final soc {:.6}%", path.display(), series.samples.len(), last.soc_pct);
            if series.depleted {
                println!("battery depleted at t = {} s", last.time_s);
            }
        }
        Command::Dataset { grid } => {
            let levels = grid.unwrap_or_else(|| DEFAULT_PWM_GRID.to_vec());
            let dataset = generate_dataset(&levels, &config)?;
            let path = out.join("dataset.csv");
            write_file(&path, |w| write_series_csv(&dataset, w))?;
            let rows: usize = dataset.iter().map(|s| s.samples.len()).sum();
            println!("{}: {} levels, {rows} rows", path.display(), dataset.len());
        }
        Command::Fit { model, holdout, dataset } => {
            let kind = ModelKind::from_number(model).expect("clap restricts the range");
            let holdout = parse_levels(&holdout)?;
            let full: Vec<SocTimeSeries> = match &dataset {
                Some(path) => {
                    let file = File::open(path).map_err(io_err(path))?;
                    read_series_csv(BufReader::new(file))
                        .map_err(|source| CliError::Dataset { path: path.clone(), source })?
                }
                None => generate_dataset(&DEFAULT_PWM_GRID, &config)?,
            };
            let train: Vec<SocTimeSeries> =
                full.into_iter().filter(|s| !holdout.iter().any(|h| (h - s.pwm_pct).abs() < 1e-9)).collect();
            let levels: Vec<f64> = train.iter().map(|s| s.pwm_pct).collect();

            let (fitted, regression, rows) = match kind {
                ModelKind::Model1 => {
                    let f = fit_model1(&train)?;
                    (SocModel::Model1(f.coefficients), f.regression, f.rows)
                }
                ModelKind::Model2 => {
                    let f = fit_model2(&train, config.duration_s)?;
                    (SocModel::Model2(f.coefficients), f.regression, f.rows)
                }
                ModelKind::Model3 => {
                    let f = fit_model3(&train)?;
                    (SocModel::Model3(f.coefficients), f.regression, f.rows)
                }
            };
            let model_path = out.join(format!("model{model}.csv"));
            write_file(&model_path, |w| fitted.write(w))?;
            let summary = fit_summary(kind, &levels, &holdout, rows, &regression);
            let summary_path = out.join(format!("fit_summary_model{model}.txt"));
            write_file(&summary_path, |w| w.write_all(summary.as_bytes()))?;
            print!("{summary}");
            println!("wrote {}", model_path.display());
        }
        Command::Predict { model_file, t, pwm } => {
            let model = load_model(&model_file)?;
            println!("{:.12}", model.predict(t, pwm));
        }
        Command::Validate { model_file, holdout } => {
            let model = load_model(&model_file)?;
            let levels = parse_levels(&holdout)?;
            if levels.is_empty() {
                return Err(CliError::Usage("--holdout needs at least one level".into()));
            }
            let dataset = generate_dataset(&levels, &config)?;
            for series in &dataset {
                let mut recorded = series_points(series);
                if model.kind() == ModelKind::Model2 {
                    // The quadratic model only describes the final horizon.
                    recorded = recorded.split_off(recorded.len() - 1);
                }
                let predicted: Vec<SocPoint> = recorded
                    .iter()
                    .map(|r| SocPoint::new(r.time_s, model.soc_at(r.time_s, series.pwm_pct)))
                    .collect();
                let report = error_metrics(&recorded, &predicted)?;
                let path = out.join(format!("validation_pwm{}.csv", level_tag(series.pwm_pct)));
                write_file(&path, |w| report.write_csv(w))?;
                println!("{}", report.summary(&format!("pwm {}%", level_tag(series.pwm_pct))));
            }
        }
        Command::Fixtures { table } => {
            let f = fixture(&table)?;
            println!("# {} (pwm {}%)", f.label, f.pwm_pct);
            print!("{}", f.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
