mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::ReferenceAction;
use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] reftraj_core::Error),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "Config",
            CliError::Io { .. } => "Io",
            CliError::Output(_) => "Output",
        }
    }
}

/// Restoration monitoring from annual embedding vectors.
#[derive(Debug, Parser)]
#[command(name = "reftraj", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Directory holding the standard input file names.
    #[arg(long, global = true)]
    input_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    year_first: Option<i32>,
    #[arg(long)]
    year_last: Option<i32>,
    #[arg(long)]
    min_area_ha: Option<f64>,
    #[arg(long)]
    start_year_min: Option<i32>,
    #[arg(long)]
    start_year_max: Option<i32>,
    /// `fixed:<year>` or `per-year`.
    #[arg(long)]
    reference_year_policy: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the inputs and report how many sites survive each filter.
    Validate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Classify reference points, build reference embeddings, rank outliers.
    References {
        #[arg(value_enum, default_value = "all")]
        action: ReferenceAction,
        #[command(flatten)]
        data: DataArgs,
        /// `cosine` or `euclidean`.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        top_k: Option<usize>,
        /// Classes to rank; defaults to every stable class.
        #[arg(long = "class", value_delimiter = ',')]
        classes: Vec<String>,
    },
    /// Similarity trajectories, improvement scores, baselines and class changes.
    Trajectories {
        #[command(flatten)]
        data: DataArgs,
        /// `global` or `local`.
        #[arg(long)]
        reference: Option<String>,
        /// Also write group-mean curves: `strategy`, `start_lulc` or `start_year`.
        #[arg(long)]
        aggregate: Option<String>,
    },
    /// 2-D projection of reference and site embeddings.
    Project {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        method: Option<String>,
    },
    /// Spatially cross-validated prediction tasks.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        /// `future_similarity`, `strategy`, or both comma-separated.
        #[arg(long = "task", value_delimiter = ',')]
        tasks: Vec<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        horizon: Option<i32>,
        #[arg(long)]
        feature_offset: Option<i32>,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        feature_sets: Vec<String>,
        #[arg(long)]
        n_trees: Option<usize>,
        /// Fill missing features with training-fold means.
        #[arg(long)]
        impute: bool,
    },
    /// Write a synthetic world in the ingest file format plus ground truth.
    Synth {
        #[arg(long)]
        n_sites: Option<usize>,
        #[arg(long)]
        points_per_class: Option<usize>,
        #[arg(long)]
        changing_per_transition: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        /// `TrueClass>LabeledAs:count`, repeatable.
        #[arg(long = "mislabel")]
        mislabels: Vec<String>,
    },
    /// Site counts by strategy and start year, and an area histogram.
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        area_bins: Vec<f64>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_list<T>(slot: &mut Vec<T>, values: Vec<T>) {
    if !values.is_empty() {
        *slot = values;
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.year_first, self.year_first);
        set(&mut c.year_last, self.year_last);
        set(&mut c.min_area_ha, self.min_area_ha);
        set(&mut c.start_year_min, self.start_year_min);
        set(&mut c.start_year_max, self.start_year_max);
        set(&mut c.reference_year_policy, self.reference_year_policy);
    }
}

/// Config file first, then flags.
fn resolve(cli: Cli) -> Result<(RunConfig, &'static str, Option<ReferenceAction>), CliError> {
    let g = cli.global;
    let mut c = match &g.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, g.seed);
    if g.threads.is_some() {
        c.threads = g.threads;
    }
    set(&mut c.output_dir, g.output_dir);
    if g.input_dir.is_some() {
        c.input_dir = g.input_dir;
    }
    let mut action = None;
    let name = match cli.command {
        Command::Validate { data } => {
            data.apply(&mut c);
            "validate"
        }
        Command::References {
            action: a,
            data,
            metric,
            top_k,
            classes,
        } => {
            data.apply(&mut c);
            set(&mut c.outlier_metric, metric);
            set(&mut c.top_k, top_k);
            set_list(&mut c.outlier_classes, classes);
            action = Some(a);
            "references"
        }
        Command::Trajectories {
            data,
            reference,
            aggregate,
        } => {
            data.apply(&mut c);
            set(&mut c.trajectory_reference, reference);
            if aggregate.is_some() {
                c.aggregate = aggregate;
            }
            "trajectories"
        }
        Command::Project { data, method } => {
            data.apply(&mut c);
            set(&mut c.projection_method, method);
            "project"
        }
        Command::Predict {
            data,
            tasks,
            k,
            horizon,
            feature_offset,
            models,
            feature_sets,
            n_trees,
            impute,
        } => {
            data.apply(&mut c);
            set_list(&mut c.tasks, tasks);
            set(&mut c.k_folds, k);
            set(&mut c.horizon, horizon);
            set(&mut c.feature_offset, feature_offset);
            set_list(&mut c.models, models);
            set_list(&mut c.feature_sets, feature_sets);
            set(&mut c.n_trees, n_trees);
            c.impute |= impute;
            "predict"
        }
        Command::Synth {
            n_sites,
            points_per_class,
            changing_per_transition,
            noise_sigma,
            dim,
            mislabels,
        } => {
            set(&mut c.synth_n_sites, n_sites);
            set(&mut c.synth_points_per_class, points_per_class);
            set(&mut c.synth_changing_per_transition, changing_per_transition);
            set(&mut c.synth_noise_sigma, noise_sigma);
            set(&mut c.synth_dim, dim);
            set_list(&mut c.synth_mislabels, mislabels);
            "synth"
        }
        Command::Report { data, area_bins } => {
            data.apply(&mut c);
            set_list(&mut c.area_bins, area_bins);
            "report"
        }
    };
    c.check()?;
    Ok((c, name, action))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (config, name, action) = resolve(cli)?;
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match name {
        "validate" => commands::validate(&config),
        "references" => commands::references(&config, action.unwrap_or(ReferenceAction::All)),
        "trajectories" => commands::trajectories(&config),
        "project" => commands::project(&config),
        "predict" => commands::predict(&config),
        "synth" => commands::synth(&config),
        "report" => commands::report(&config),
        _ => unreachable!("every subcommand is named in resolve"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 3\ntop_k = 4\noutput_dir = \"a\"\n").unwrap();
        let cli = Cli::parse_from([
            "reftraj",
            "--config",
            path.to_str().unwrap(),
            "references",
            "outliers",
            "--top-k",
            "7",
        ]);
        let (c, name, action) = resolve(cli).unwrap();
        assert_eq!(name, "references");
        assert_eq!(action, Some(ReferenceAction::Outliers));
        assert_eq!(c.seed, 3);
        assert_eq!(c.top_k, 7);
        assert_eq!(c.output_dir, PathBuf::from("a"));
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cli = Cli::parse_from(["reftraj", "trajectories", "--reference", "regional"]);
        let err = resolve(cli).unwrap_err();
        assert_eq!(err.kind(), "InvalidConfig");
    }
}
