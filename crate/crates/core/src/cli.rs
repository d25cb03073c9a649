//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for runtime or data errors, 2 for usage errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{
    format_stats, read_intensities, read_manifest, read_masks, read_report_column, read_scores,
    read_sgm_header, write_csv_report, write_ppm, write_sgm, SgmDtype,
};
use crate::error::{Error, Result};
use crate::fusion::{binarize, fuse_volumes, FusionConfig, FusionMethod, Threshold};
use crate::grid::{BinaryMask, Volume};
use crate::metrics::{dsc_mode, evaluate_subjects, summary_stats, DscMode};
use crate::overlay::{render_overlay, zoom_inset, Rect, DEFAULT_ZOOM_FACTOR};
use crate::preprocess::{
    affine_augment, affine_augment_pair, crop_pad_center, zscore_normalize,
    zscore_normalize_volume, AffineRanges, ParamRange,
};
use crate::simulator::{simulate_cohort, CohortSpec, LesionSpec, ModelQuality, MANIFEST_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "segfuse", version, about = "Ensemble fusion and Dice evaluation for binary segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse N model score volumes into one mask volume.
    Fuse(FuseArgs),
    /// Print the Dice coefficient between two volumes.
    Dsc(DscArgs),
    /// Evaluate every subject in a manifest and write the CSV report.
    Eval(EvalArgs),
    /// Print summary statistics of one CSV column.
    Stats(StatsArgs),
    /// Render an error overlay for one slice as a PPM image.
    Overlay(OverlayArgs),
    /// Crop/pad, normalize and optionally augment an intensity volume.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic cohort with a manifest.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Msm,
    Mbm,
}

impl From<MethodArg> for FusionMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Msm => FusionMethod::Msm,
            MethodArg::Mbm => FusionMethod::Mbm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Volume,
    PerSliceMean,
}

impl From<ModeArg> for DscMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Volume => DscMode::Volume,
            ModeArg::PerSliceMean => DscMode::PerSliceMean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    Slice,
    Volume,
    None,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long, default_value = "0.5")]
    pub threshold: Threshold,
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DscArgs {
    /// Ground-truth mask volume.
    #[arg(long)]
    pub gt: PathBuf,
    /// Segmentation: a mask volume, or a score volume binarized at --threshold.
    #[arg(long)]
    pub seg: PathBuf,
    #[arg(long, value_enum, default_value = "volume")]
    pub mode: ModeArg,
    #[arg(long, default_value = "0.5")]
    pub threshold: Threshold,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "0.5")]
    pub threshold: Threshold,
    #[arg(long, value_enum, default_value = "volume")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out_csv: PathBuf,
    /// Worker threads over subjects; output is identical for any value.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "dsc")]
    pub column: String,
    /// Keep only rows whose `method` column equals this value.
    #[arg(long)]
    pub method: Option<String>,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    /// Intensity volume drawn in grayscale.
    #[arg(long)]
    pub background: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Segmentation: a mask volume, or a score volume binarized at --threshold.
    #[arg(long)]
    pub seg: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub slice: usize,
    /// Region to magnify, as x,y,w,h.
    #[arg(long)]
    pub zoom: Option<Rect>,
    #[arg(long, default_value_t = DEFAULT_ZOOM_FACTOR, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub factor: usize,
    #[arg(long, default_value = "0.5")]
    pub threshold: Threshold,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub height: usize,
    #[arg(long, value_enum, default_value = "slice")]
    pub normalize: NormalizeArg,
    /// Rotation in degrees: a value or lo:hi range sampled per slice.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub rotation: ParamRange,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub shear_x: ParamRange,
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub shear_y: ParamRange,
    #[arg(long, default_value = "1")]
    pub scale_x: ParamRange,
    #[arg(long, default_value = "1")]
    pub scale_y: ParamRange,
    /// Seed for sampling augmentation parameters from ranges.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label mask volume transformed alongside the image.
    #[arg(long, requires = "label_out")]
    pub label: Option<PathBuf>,
    #[arg(long, requires = "label")]
    pub label_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub subjects: usize,
    /// Comma-separated presets: good, bad, or gain:bias:sigma.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub models: Vec<ModelQuality>,
    #[arg(long, default_value_t = 200)]
    pub size: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub min_lesions: Option<usize>,
    #[arg(long)]
    pub max_lesions: Option<usize>,
    #[arg(long)]
    pub min_radius: Option<f64>,
    #[arg(long)]
    pub max_radius: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
}

/// Parses `args` (including the program name) and runs the command, writing
/// normal output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
            } else {
                let _ = write!(out, "{rendered}");
            }
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fuse(a) => cmd_fuse(&a),
        Command::Dsc(a) => cmd_dsc(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Stats(a) => cmd_stats(&a, out),
        Command::Overlay(a) => cmd_overlay(&a),
        Command::Preprocess(a) => cmd_preprocess(&a),
        Command::Simulate(a) => cmd_simulate(&a, out),
    }
}

fn with_jobs<R: Send>(jobs: u32, f: impl FnOnce() -> Result<R> + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs as usize)
        .build()
        .map_err(|e| Error::invalid("worker pool", e.to_string()))?;
    pool.install(f)
}

pub fn cmd_fuse(a: &FuseArgs) -> Result<()> {
    let volumes = a
        .inputs
        .iter()
        .map(read_scores)
        .collect::<Result<Vec<_>>>()?;
    let first = volumes[0].shape();
    for (v, path) in volumes.iter().zip(&a.inputs).skip(1) {
        if v.shape() != first {
            return Err(Error::invalid(
                "input shapes",
                format!(
                    "{} is {} but {} is {}",
                    a.inputs[0].display(),
                    first,
                    path.display(),
                    v.shape()
                ),
            ));
        }
    }
    let fused = fuse_volumes(&volumes, FusionConfig::new(a.method.into(), a.threshold))?;
    write_sgm(&fused, &a.output)
}

/// Loads a mask volume, binarizing it first if the file holds scores.
fn read_segmentation(path: &Path, threshold: Threshold) -> Result<Volume<BinaryMask>> {
    match read_sgm_header(path)?.dtype {
        SgmDtype::U8 => read_masks(path),
        SgmDtype::F32 => Ok(read_scores(path)?.map(|s| binarize(s, threshold))),
    }
}

pub fn cmd_dsc(a: &DscArgs, out: &mut dyn Write) -> Result<()> {
    let gt = read_masks(&a.gt)?;
    let seg = read_segmentation(&a.seg, a.threshold)?;
    let value = dsc_mode(&gt, &seg, a.mode.into())?;
    writeln!(out, "{value:.4}")?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let records = read_manifest(&a.manifest)?;
    let eval = with_jobs(a.jobs, || evaluate_subjects(&records, a.threshold, a.mode.into()))?;
    write_csv_report(&eval.reports, &a.out_csv)?;
    for (method, stats) in &eval.stats {
        writeln!(out, "{method:<8} mean {:.4}  median {:.4}", stats.mean, stats.median)?;
    }
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> Result<()> {
    let values = read_report_column(&a.input, &a.column, a.method.as_deref())?;
    let stats = summary_stats(&values)?;
    write!(out, "{}", format_stats(&stats))?;
    Ok(())
}

pub fn cmd_overlay(a: &OverlayArgs) -> Result<()> {
    let background = read_intensities(&a.background)?;
    let gt = read_masks(&a.gt)?;
    let seg = read_segmentation(&a.seg, a.threshold)?;
    let depth = gt.depth();
    if background.depth() != depth || seg.depth() != depth {
        return Err(Error::invalid(
            "overlay inputs",
            format!(
                "slice counts differ: background {}, gt {}, seg {}",
                background.depth(),
                depth,
                seg.depth()
            ),
        ));
    }
    if a.slice >= depth {
        return Err(Error::invalid(
            "slice index",
            format!("{} out of range for {} slice(s)", a.slice, depth),
        ));
    }
    let k = a.slice;
    let mut image = render_overlay(&background.slices()[k], &gt.slices()[k], &seg.slices()[k])?;
    if let Some(rect) = a.zoom {
        image = zoom_inset(&image, rect, a.factor)?;
    }
    write_ppm(&image, &a.out)
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    let ranges = AffineRanges {
        rotation_deg: a.rotation,
        shear_x: a.shear_x,
        shear_y: a.shear_y,
        scale_x: a.scale_x,
        scale_y: a.scale_y,
    };
    let input = read_intensities(&a.input)?;
    let label = a.label.as_ref().map(read_masks).transpose()?;
    if let Some(l) = &label {
        if l.shape() != input.shape() {
            return Err(Error::invalid(
                "label",
                format!(
                    "{} is {} but {} is {}",
                    a.input.display(),
                    input.shape(),
                    a.label.as_ref().unwrap().display(),
                    l.shape()
                ),
            ));
        }
    }

    let sized = Volume::new(
        input
            .slices()
            .iter()
            .map(|s| crop_pad_center(s, a.width, a.height, 0.0))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let normalized = match a.normalize {
        NormalizeArg::Slice => sized.map(zscore_normalize),
        NormalizeArg::Volume => zscore_normalize_volume(&sized),
        NormalizeArg::None => sized,
    };
    let label = label
        .map(|l| -> Result<Volume<BinaryMask>> {
            Volume::new(
                l.slices()
                    .iter()
                    .map(|s| crop_pad_center(s, a.width, a.height, 0))
                    .collect::<Result<Vec<_>>>()?,
            )
        })
        .transpose()?;

    let (image, label) = if ranges.is_identity() {
        (normalized, label)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let mut images = Vec::with_capacity(normalized.depth());
        let mut labels = Vec::new();
        for (k, slice) in normalized.slices().iter().enumerate() {
            let params = ranges.sample(&mut rng)?;
            match &label {
                Some(l) => {
                    let (img, lab) = affine_augment_pair(slice, &l.slices()[k], &params)?;
                    images.push(img);
                    labels.push(lab);
                }
                None => images.push(affine_augment(slice, &params)),
            }
        }
        let label = match label {
            Some(_) => Some(Volume::new(labels)?),
            None => None,
        };
        (Volume::new(images)?, label)
    };

    write_sgm(&image, &a.output)?;
    if let (Some(l), Some(path)) = (label, &a.label_out) {
        if let Err(e) = write_sgm(&l, path) {
            let _ = std::fs::remove_file(&a.output);
            return Err(e);
        }
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let defaults = LesionSpec::for_size(a.size)?;
    let lesions = LesionSpec::new(
        a.min_lesions.unwrap_or(*defaults.count_range.start())
            ..=a.max_lesions.unwrap_or(*defaults.count_range.end()),
        a.min_radius.unwrap_or(*defaults.radius_range.start())
            ..=a.max_radius.unwrap_or(*defaults.radius_range.end()),
        a.size,
    )?;
    let spec = CohortSpec {
        subjects: a.subjects,
        depth: a.depth,
        lesions,
        qualities: a.models.clone(),
        base_seed: a.seed,
    };
    let existed = a.out.exists();
    match with_jobs(a.jobs, || simulate_cohort(&spec, &a.out)) {
        Ok(records) => {
            writeln!(
                out,
                "wrote {} subject(s) to {}",
                records.len(),
                a.out.join(MANIFEST_NAME).display()
            )?;
            Ok(())
        }
        Err(e) => {
            if !existed {
                let _ = std::fs::remove_dir_all(&a.out);
            }
            Err(e)
        }
    }
}
