//! `holoforge`: one pipeline stage per invocation.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "holoforge", version, about = "Dual-modality microscopy dataset pipeline")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Least-squares affine transform from point correspondences.
    FitAffine(FitAffineArgs),
    /// Carry a label file into another image frame through an affine transform.
    TransferLabels(TransferArgs),
    /// Grow label box areas by a factor.
    ExpandBoxes(ExpandArgs),
    /// Cut a slide into square patches with re-indexed labels.
    Tile(TileArgs),
    /// Cut labeled grains out of a greyscale slide and flag defective crops.
    ExtractGrains(ExtractArgs),
    /// Alpha-blend grains onto background patches.
    Composite(CompositeArgs),
    /// Split real items 70:15:15 and mix composites into the training split.
    Assemble(AssembleArgs),
    /// Materialize a manifest as a train/val/test directory tree.
    Emit(EmitArgs),
    /// Counts and label size statistics.
    Stats(StatsArgs),
    /// mAP50, precision and recall from detection and ground-truth files.
    EvalMap(EvalMapArgs),
    /// Fréchet distance between two embedding blobs.
    EvalFid(EvalFidArgs),
    /// Keep the top fraction of samples by critic score.
    CriticFilter(CriticArgs),
    /// Write 64-value toy embeddings of an image folder as an EMB1 blob.
    ToyEmbed(ToyEmbedArgs),
}

#[derive(Debug, Args)]
pub struct FitAffineArgs {
    /// Lines of `src_x src_y dst_x dst_y`.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Transform file `a b tx c d ty`.
    #[arg(long)]
    pub transform: PathBuf,
    /// Source image size, `WIDTHxHEIGHT`.
    #[arg(long, value_parser = files::parse_size)]
    pub src_size: (u32, u32),
    /// Destination image size, `WIDTHxHEIGHT`.
    #[arg(long, value_parser = files::parse_size)]
    pub dst_size: (u32, u32),
    /// Minimum fraction of the mapped box that must land inside the frame.
    #[arg(long, default_value_t = 0.5)]
    pub min_inside: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long)]
    pub labels: PathBuf,
    /// Relative area increase, e.g. 0.5 for +50%.
    #[arg(long)]
    pub factor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory; patches go to `annotated/` and `background/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Image id used in patch names (default: image file stem).
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = holoforge_core::tiler::DEFAULT_TILE_SIZE)]
    pub tile: u32,
    #[arg(long, default_value_t = holoforge_core::tiler::DEFAULT_STEP)]
    pub step: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProvenanceArg {
    Manual,
    Automated,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, value_enum, default_value_t = ProvenanceArg::Automated)]
    pub provenance: ProvenanceArg,
    /// Pixels below this intensity count as black.
    #[arg(long, default_value_t = 2)]
    pub intensity_floor: u8,
    /// Crops with a larger black fraction are flagged as blackened.
    #[arg(long, default_value_t = 0.60)]
    pub zero_fraction: f64,
}

#[derive(Debug, Args)]
pub struct CompositeArgs {
    /// Folder of background patch PNGs.
    #[arg(long)]
    pub backgrounds: PathBuf,
    /// Folder of grain PNGs.
    #[arg(long)]
    pub grains: PathBuf,
    /// Number of composites to create.
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 14.3)]
    pub mean: f64,
    #[arg(long, default_value_t = 0.2)]
    pub max_iou: f64,
    #[arg(long, default_value_t = 30)]
    pub retries: u32,
    #[arg(long, default_value_t = 8)]
    pub feather: u32,
    #[arg(long, default_value = "composite_")]
    pub prefix: String,
    /// Skip backgrounds cut from slides that have validation or test patches
    /// in this manifest.
    #[arg(long)]
    pub holdout: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["real", "train"])))]
pub struct AssembleArgs {
    /// Folder of real patches (`*.png` with sibling `*.txt` labels).
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Plan only: a training split of this many real items (no files).
    #[arg(long)]
    pub train: Option<usize>,
    /// Folder of composites (`*.png` with sibling `*.txt` labels).
    #[arg(long)]
    pub synthetic: Option<PathBuf>,
    /// Composites per real training item (1:RATIO).
    #[arg(long, default_value_t = 0.0)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Manifest path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Symlink files instead of copying them.
    #[arg(long)]
    pub link: bool,
    #[arg(long = "category", default_value = holoforge_core::assembler::DEFAULT_CATEGORY)]
    pub categories: Vec<String>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["manifest", "grains"])))]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Folder of grain crops; reports crop width/height statistics.
    #[arg(long)]
    pub grains: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalMapArgs {
    /// Folder of ground-truth label files; the file stem is the image id.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection file: `image_id category_id cx cy w h confidence`.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Confidence cutoff for the precision/recall operating point.
    #[arg(long, default_value_t = 0.25)]
    pub conf: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalFidArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value_t = holoforge_core::evaluator::DEFAULT_EPSILON)]
    pub eps: f64,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriticArgs {
    /// Lines of `sample_id score`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub keep: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ToyEmbedArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("HOLOFORGE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    // clap exits with status 2 and the usage synopsis on bad arguments
    let cli = Cli::parse();
    init_logging();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::FitAffine(a) => commands::fit_affine(a),
        Command::TransferLabels(a) => commands::transfer_labels(a),
        Command::ExpandBoxes(a) => commands::expand_boxes(a),
        Command::Tile(a) => commands::tile(a),
        Command::ExtractGrains(a) => commands::extract_grains(a),
        Command::Composite(a) => commands::composite(a),
        Command::Assemble(a) => commands::assemble(a),
        Command::Emit(a) => commands::emit(a),
        Command::Stats(a) => commands::stats(a),
        Command::EvalMap(a) => commands::eval_map(a),
        Command::EvalFid(a) => commands::eval_fid(a),
        Command::CriticFilter(a) => commands::critic_filter(a),
        Command::ToyEmbed(a) => commands::toy_embed(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
