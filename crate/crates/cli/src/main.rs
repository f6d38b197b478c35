//! `gib`: dataset generation, training and the evaluation experiments.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gib_core::graph_io::MotifKind;

#[derive(Parser, Debug)]
#[command(name = "gib", version, about = "Information-bottleneck subgraph selection for graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// TOML file with optional [train], [split], [motif] and [case_study] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides every seed in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to run, starting at the root seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding a TU-format dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Dataset name (file prefix); defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
}

impl DataArgs {
    pub fn name(&self) -> anyhow::Result<String> {
        match &self.name {
            Some(n) => Ok(n.clone()),
            None => self
                .data
                .file_name()
                .and_then(|f| f.to_str())
                .map(str::to_string)
                .ok_or_else(|| anyhow::anyhow!("cannot infer a dataset name from {}; pass --name", self.data.display())),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Clique,
    Cycle,
}

impl From<KindArg> for MotifKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Clique => MotifKind::Clique,
            KindArg::Cycle => MotifKind::Cycle,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train GIB on a dataset and report validation and test metrics.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Load the continuous target from graph_attributes.
        #[arg(long)]
        continuous: bool,
        /// Also run k-fold cross-validation and report the per-fold test metric.
        #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
        folds: Option<u64>,
    },
    /// Add random non-edges to every graph; writes a TU dataset plus a real-edge sidecar.
    GenNoise {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Noise edges per graph as a fraction of its real edges.
        #[arg(long, default_value_t = 0.3)]
        fraction: f64,
    },
    /// Generate a planted-motif dataset with a motif-node sidecar.
    GenMotif {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "MOTIF")]
        name: String,
        /// Continuous target (motif size) with motifs of this kind instead of the [motif] labeling.
        #[arg(long)]
        continuous: Option<KindArg>,
    },
    /// Edge recovery on a noisy dataset: GIB against attention baselines on line graphs.
    Denoise {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Property bias of the recognised subgraphs on a continuous planted-motif dataset.
    Interpret {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        data: DataArgs,
        /// Motif kind whose property is measured.
        #[arg(long)]
        kind: KindArg,
        /// Drop the connectivity loss.
        #[arg(long)]
        no_con: bool,
        /// Drop the mutual-information term.
        #[arg(long)]
        no_mi: bool,
        /// Run the full model and both single ablations side by side.
        #[arg(long, conflicts_with_all = ["no_con", "no_mi"])]
        ablations: bool,
        /// Add the Att05 and Att07 attention baselines.
        #[arg(long)]
        baselines: bool,
    },
    /// Toy Gaussian-channel study of the DV estimate against an exact oracle.
    CaseStudy {
        #[command(flatten)]
        run: RunArgs,
        /// Freeze the channel variance instead of learning it.
        #[arg(long)]
        sigma2_fixed: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train {
            run,
            data,
            continuous,
            folds,
        } => commands::train(&run, &data, continuous, folds.map(|k| k as usize)),
        Command::GenNoise { run, data, fraction } => commands::gen_noise(&run, &data, fraction),
        Command::GenMotif { run, name, continuous } => commands::gen_motif(&run, &name, continuous.map(Into::into)),
        Command::Denoise { run, data } => commands::denoise(&run, &data),
        Command::Interpret {
            run,
            data,
            kind,
            no_con,
            no_mi,
            ablations,
            baselines,
        } => commands::interpret(&run, &data, kind.into(), no_con, no_mi, ablations, baselines),
        Command::CaseStudy {
            run,
            sigma2_fixed,
            epochs,
        } => commands::case_study(&run, sigma2_fixed, epochs),
    }
}
