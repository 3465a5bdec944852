//! `nil` command line. Exit codes: 0 success, 2 configuration error, 3 runtime failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::agents::OptimizerKind;
use crate::language::{count_by_enumeration, count_language_classes, Language};
use crate::nil::ResetStrategy;
use crate::objectspace::SpaceSpec;
use crate::topsim::{topological_similarity, CorrelationKind};
use crate::{Error, Result};

use super::config::{ExperimentConfig, SweepAxis, DESK_SCALE};
use super::plot::{emit_plot, ChartKind, PlotSpec};
use super::presets::{run_preset, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nil", version, about = "Neural iterated learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// A single NIL run.
    Run(ConfigArgs),
    /// Every reset strategy under every seed.
    Resets(ConfigArgs),
    /// Grid over one axis, or randomized speaker and listener pretraining budgets.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Number of randomized cells.
        #[arg(long)]
        random: Option<usize>,
    },
    /// Learning speed on compositional versus permuted languages.
    Speed {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        speaker_steps: Option<usize>,
        #[arg(long)]
        listener_batches: Option<usize>,
        /// Extra language files to compare.
        #[arg(long = "language")]
        languages: Vec<PathBuf>,
    },
    /// Train and held-out accuracy for several validation sizes.
    Zeroshot {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        valid_sizes: Vec<usize>,
    },
    /// Vocabulary and length grid plus degenerate and no-listener-pretraining variants.
    Robust(ConfigArgs),
    /// Exact language class counts.
    Counts {
        #[command(flatten)]
        space: SpaceArgs,
        /// Also classify every language one by one.
        #[arg(long)]
        enumerate: bool,
    },
    /// ρ of a language file.
    Topsim {
        file: PathBuf,
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value = "spearman")]
        correlation: CorrelationKind,
    },
    /// CSV to SVG chart.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "line")]
        kind: ChartKind,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long)]
        series: Option<String>,
        /// Keep rows where `column=value`.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        title: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Object and message space; the counting defaults describe the two-by-two toy space.
#[derive(Debug, Args)]
pub struct SpaceArgs {
    #[arg(long, default_value_t = 2)]
    pub n_attributes: usize,
    #[arg(long, default_value_t = 2)]
    pub n_values: usize,
    #[arg(long, default_value_t = 2)]
    pub message_length: usize,
    #[arg(long, default_value_t = 2)]
    pub vocab_size: usize,
}

impl SpaceArgs {
    fn spec(&self) -> Result<SpaceSpec> {
        SpaceSpec::new(self.n_attributes, self.n_values, self.message_length, self.vocab_size)
    }
}

/// Overrides on top of the configuration file, or the defaults when there is none.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Full generation and interaction budgets instead of the desk-scale ones.
    #[arg(long, conflicts_with = "scale")]
    pub full_scale: bool,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub quiet: bool,

    #[arg(long)]
    pub n_attributes: Option<usize>,
    #[arg(long)]
    pub n_values: Option<usize>,
    #[arg(long)]
    pub message_length: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,

    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,

    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub pretrain_lr: Option<f64>,
    #[arg(long)]
    pub lambda_speaker: Option<f64>,
    #[arg(long)]
    pub lambda_listener: Option<f64>,
    #[arg(long)]
    pub anneal_entropy: Option<bool>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub candidates: Option<usize>,
    #[arg(long)]
    pub use_baseline: Option<bool>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,

    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub pretrain_speaker_rounds: Option<usize>,
    #[arg(long)]
    pub pretrain_listener_batches: Option<usize>,
    #[arg(long)]
    pub interact_rounds: Option<usize>,
    #[arg(long)]
    pub transmit_pairs: Option<usize>,
    #[arg(long)]
    pub reset: Option<ResetStrategy>,
    #[arg(long)]
    pub degenerate_init: bool,
    #[arg(long)]
    pub degenerate_mix_fraction: Option<f64>,
    #[arg(long)]
    pub valid_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub eval_trials: Option<usize>,
    #[arg(long)]
    pub correlation: Option<CorrelationKind>,
}

macro_rules! set {
    ($($src:expr => $dst:expr),* $(,)?) => {
        $(if let Some(v) = $src.clone() { $dst = v; })*
    };
}

impl ConfigArgs {
    /// Resolves the file, the scale and the flags into one validated configuration.
    pub fn resolve(&self, preset: &str) -> Result<ExperimentConfig> {
        let mut table: toml::Table = match &self.config {
            Some(path) => std::fs::read_to_string(path)?.parse()?,
            None => toml::Table::new(),
        };
        let scale = if self.full_scale { Some(1.0) } else { self.scale };
        if let Some(scale) = scale {
            let exp = table
                .entry("experiment")
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            match exp {
                toml::Value::Table(t) => {
                    t.insert("scale".into(), toml::Value::Float(scale));
                }
                _ => return Err(Error::Config("`experiment` must be a table".into())),
            }
        }
        let mut c = if table.is_empty() {
            ExperimentConfig::at_scale(DESK_SCALE)
        } else {
            ExperimentConfig::from_toml_str(&toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?)?
        };
        c.experiment.preset = preset.to_string();
        if !self.seeds.is_empty() {
            c.experiment.seeds = self.seeds.clone();
        }
        if self.output_dir.is_some() {
            c.experiment.output_dir = self.output_dir.clone();
        }
        if self.run_id.is_some() {
            c.experiment.run_id = self.run_id.clone();
        }
        set! {
            self.jobs => c.experiment.jobs,
            self.n_attributes => c.space.n_attributes,
            self.n_values => c.space.n_values,
            self.message_length => c.space.message_length,
            self.vocab_size => c.space.vocab_size,
            self.hidden_size => c.net.hidden_size,
            self.init_scale => c.net.init_scale,
            self.lr => c.train.lr,
            self.pretrain_lr => c.train.pretrain_lr,
            self.lambda_speaker => c.train.lambda_speaker,
            self.lambda_listener => c.train.lambda_listener,
            self.anneal_entropy => c.train.anneal_entropy,
            self.batch_size => c.train.batch_size,
            self.candidates => c.train.candidates,
            self.use_baseline => c.train.use_baseline,
            self.optimizer => c.train.optimizer,
            self.generations => c.nil.generations,
            self.pretrain_speaker_rounds => c.nil.pretrain_speaker_rounds,
            self.pretrain_listener_batches => c.nil.pretrain_listener_batches,
            self.interact_rounds => c.nil.interact_rounds,
            self.transmit_pairs => c.nil.transmit_pairs,
            self.reset => c.nil.reset_strategy,
            self.valid_size => c.nil.valid_size,
            self.seed => c.nil.seed,
            self.eval_every => c.nil.eval_every,
            self.mc_samples => c.nil.mc_samples,
            self.eval_trials => c.nil.eval_trials,
            self.correlation => c.nil.correlation,
        }
        if self.degenerate_init {
            c.nil.degenerate_init = true;
        }
        if self.degenerate_mix_fraction.is_some() {
            c.nil.degenerate_mix_fraction = self.degenerate_mix_fraction;
        }
        Ok(c)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            save_agents: false,
            quiet: self.quiet,
        }
    }
}

fn experiment(preset: &str, args: &ConfigArgs, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<()> {
    let mut cfg = args.resolve(preset)?;
    tweak(&mut cfg);
    cfg.validate()?;
    let dir = run_preset(preset, &cfg, args.options())?;
    println!("results written to {}", dir.display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => experiment("run", &args, |_| {}),
        Command::Resets(args) => experiment("resets", &args, |_| {}),
        Command::Robust(args) => experiment("robust", &args, |_| {}),
        Command::Sweep {
            cfg,
            axis,
            values,
            random,
        } => experiment("sweep", &cfg, |c| {
            if axis.is_some() {
                c.sweep.axis = axis;
            }
            if !values.is_empty() {
                c.sweep.values = values;
            }
            if let Some(n) = random {
                c.sweep.random_cells = n;
            }
        }),
        Command::Speed {
            cfg,
            speaker_steps,
            listener_batches,
            languages,
        } => experiment("speed", &cfg, |c| {
            set! {
                speaker_steps => c.speed.speaker_steps,
                listener_batches => c.speed.listener_batches,
            }
            c.speed.languages.extend(languages);
        }),
        Command::Zeroshot { cfg, valid_sizes } => experiment("zeroshot", &cfg, |c| {
            if !valid_sizes.is_empty() {
                c.zeroshot.valid_sizes = valid_sizes;
            }
        }),
        Command::Counts { space, enumerate } => {
            let spec = space.spec()?;
            let c = count_language_classes(&spec);
            println!("all {}", c.all);
            println!("unambiguous {}", c.unambiguous);
            println!("compositional {}", c.compositional);
            println!("holistic {}", c.holistic);
            if enumerate {
                let e = count_by_enumeration(&spec, 1 << 24)?;
                let agree = (&e.all, &e.unambiguous, &e.compositional, &e.holistic)
                    == (&c.all, &c.unambiguous, &c.compositional, &c.holistic);
                println!(
                    "enumerated {} / {} / {} / {} ({})",
                    e.all,
                    e.unambiguous,
                    e.compositional,
                    e.holistic,
                    if agree { "agrees" } else { "DISAGREES" }
                );
                if !agree {
                    return Err(Error::InsufficientData("enumeration disagrees with the closed form".into()));
                }
            }
            Ok(())
        }
        Command::Topsim {
            file,
            space,
            correlation,
        } => {
            let spec = space.spec()?;
            let lang = Language::load(&spec, &file)?;
            println!("{:.6}", topological_similarity(&spec, &lang, correlation)?);
            Ok(())
        }
        Command::Plot {
            csv,
            kind,
            x,
            y,
            series,
            filter,
            title,
            out,
        } => {
            let mut spec = PlotSpec::new(kind, &x, &y);
            spec.series = series;
            spec.title = title;
            spec.filter = match filter {
                Some(f) => {
                    let (c, v) = f
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("filter `{f}` is not column=value")))?;
                    Some((c.to_string(), v.to_string()))
                }
                None => None,
            };
            emit_plot(&csv, &spec, &out)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("nil").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let Command::Run(args) = parse(&["run", "--reset", "none", "--generations", "15", "--vocab-size", "16"]).command
        else {
            panic!()
        };
        let c = args.resolve("run").unwrap();
        assert_eq!(c.nil.reset_strategy, ResetStrategy::None);
        assert_eq!(c.nil.generations, 15);
        assert_eq!(c.space.vocab_size, 16);
        assert_eq!(c.nil.interact_rounds, 1000);
    }

    #[test]
    fn full_scale_restores_table_budgets() {
        let Command::Resets(args) = parse(&["resets", "--full-scale"]).command else {
            panic!()
        };
        let c = args.resolve("resets").unwrap();
        assert_eq!((c.nil.generations, c.nil.interact_rounds), (80, 4000));
    }

    #[test]
    fn bad_input_exits_with_config_code() {
        assert_eq!(run(["nil", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(run(["nil", "run", "--vocab-size", "1", "--quiet"]), EXIT_CONFIG);
        assert_eq!(run(["nil", "counts", "--n-values", "0"]), EXIT_CONFIG);
    }
}
