use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scanbench_core::bench::{
    self, CaseStudyQuery, EvaluateOptions, EvaluationRun, ExportModel, ReportFormat, RunConfig, SynthConfig,
};
use scanbench_core::data::{self, Dataset, OutOfBoundsPolicy, PreprocessPolicy};
use scanbench_core::density::{self, BaselineKind, BaselineParams, FittedBaseline, FixationIntervals};
use scanbench_core::fitting::{self, FitSplit};
use scanbench_core::metrics::Metric;
use scanbench_core::models::{
    self, AnyModel, ConditionalModel, JumpKernel, ModelKind, SaliencyStore, SceneWalkParams,
};

#[derive(Parser)]
#[command(name = "scanbench", version, about = "Fixation-by-fixation benchmark for scanpath models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate and optionally preprocess a dataset.
    Load(LoadArgs),
    /// Fit the (fixation-number dependent) center bias.
    FitCenterbias(FitBaselineArgs),
    /// Fit the spatial gold standard.
    FitGoldstandard(FitBaselineArgs),
    /// Fit a parametric scanpath model.
    FitModel(FitModelArgs),
    /// Score every fixation of a dataset under a model.
    Evaluate(EvaluateArgs),
    /// Leaderboard table from evaluation runs.
    Report(ReportArgs),
    /// Fixations on which models disagree most.
    CaseStudies(CaseStudyArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// What to do with fixations outside the stimulus.
    #[arg(long, value_enum, default_value_t = OobArg::Reject)]
    out_of_bounds: OobArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum OobArg {
    Reject,
    Clamp,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let policy = match self.out_of_bounds {
            OobArg::Reject => OutOfBoundsPolicy::Reject,
            OobArg::Clamp => OutOfBoundsPolicy::Clamp,
        };
        Ok(data::load_dataset(&self.dataset, policy)?)
    }
}

#[derive(Args)]
struct LoadArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Prepend a central fixation to scanpaths without a forced one.
    #[arg(long)]
    inject_central: bool,
    /// Merge exact consecutive duplicates.
    #[arg(long)]
    dedup: bool,
    /// Write the preprocessed dataset here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SubsetArgs {
    /// Fit on a random subset of this many images.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SubsetArgs {
    fn apply(&self, ds: Dataset) -> Result<(Dataset, Option<Vec<String>>)> {
        match self.subset {
            None => Ok((ds, None)),
            Some(n) => {
                let view = fitting::subset_sample(&ds, n, self.seed)?;
                let ids = view.image_ids().into_iter().map(String::from).collect();
                Ok((view.to_dataset(), Some(ids)))
            }
        }
    }
}

#[derive(Args)]
struct FitBaselineArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// centerbias or fixnum_centerbias for fit-centerbias; ignored otherwise.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Output parameter file.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 1)]
    downsample: u32,
    /// Fixation-number intervals for fixnum_centerbias: mit, cat2000 or
    /// comma separated start indices.
    #[arg(long, default_value = "mit")]
    intervals: String,
    #[command(flatten)]
    subset: SubsetArgs,
}

#[derive(Args)]
struct FitModelArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// jump, saccadic_flow or scenewalk.
    #[arg(long)]
    model: ModelKind,
    /// Output parameter file.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Cauchy)]
    kernel: KernelArg,
    #[arg(long)]
    saliency_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    downsample: u32,
    /// Starting parameters (scenewalk only).
    #[arg(long)]
    initial: Option<PathBuf>,
    #[command(flatten)]
    subset: SubsetArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Cauchy,
    Gaussian,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    saliency_dir: Option<PathBuf>,
    /// Comma separated subset of ll, ig, auc, nss.
    #[arg(long, default_value = "ll,ig,auc,nss")]
    metrics: String,
    /// Per-fixation score table (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Run record (JSON); defaults to the score table path with a .json
    /// extension.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Worker threads. SCANBENCH_JOBS takes precedence.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 1)]
    downsample: u32,
    #[arg(long)]
    seed: Option<u64>,
    /// Row label in reports.
    #[arg(long)]
    label: Option<String>,
    /// Center bias parameters used as the IG reference; fitted when absent.
    #[arg(long)]
    ig_baseline: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run records written by `evaluate`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "markdown")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaseStudyArgs {
    #[arg(long, num_args = 2.., required = true)]
    runs: Vec<PathBuf>,
    /// Defaults to the dataset recorded in the first run.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    min_amplitude_dva: Option<f64>,
    /// Drop fixations within this distance of any earlier fixation.
    #[arg(long)]
    no_return_dva: Option<f64>,
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write 8-bit graymaps.
    #[arg(long)]
    pgm: bool,
    /// Only rank; skip rebuilding models and exporting maps.
    #[arg(long)]
    no_maps: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Generating parameters; defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn jobs(flag: usize) -> Result<usize> {
    match std::env::var("SCANBENCH_JOBS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(scanbench_core::Error::InvalidParameter(format!("SCANBENCH_JOBS={v}")).into()),
        },
        Err(_) => Ok(flag),
    }
}

fn parse_intervals(s: &str) -> Result<FixationIntervals> {
    Ok(match s {
        "mit" => FixationIntervals::mit(),
        "cat2000" => FixationIntervals::cat2000(),
        "single" => FixationIntervals::single(),
        list => {
            let starts = list
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| scanbench_core::Error::InvalidParameter(format!("intervals `{list}`: {e}")))?;
            FixationIntervals::new(starts)?
        }
    })
}

fn load(args: LoadArgs) -> Result<()> {
    let ds = args.data.load()?;
    let ds = data::preprocess_dataset(
        &ds,
        PreprocessPolicy {
            inject_central: args.inject_central,
            replace_invalid_initial: true,
            dedup: args.dedup,
        },
    )?;
    let summary = serde_json::json!({
        "name": ds.name,
        "images": ds.image_ids().len(),
        "subjects": ds.subject_ids().len(),
        "scanpaths": ds.scanpaths.len(),
        "fixations": ds.fixation_count(),
        "scored_fixations": ds.scored_fixation_count(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = args.out {
        data::save_dataset(&ds, &out)?;
    }
    Ok(())
}

fn fit_centerbias(args: FitBaselineArgs) -> Result<()> {
    let (ds, _) = args.subset.apply(args.data.load()?)?;
    let kind = match args.model.unwrap_or(ModelKind::Centerbias) {
        ModelKind::Centerbias => BaselineKind::Centerbias,
        ModelKind::FixnumCenterbias => BaselineKind::FixnumCenterbias,
        other => bail!(scanbench_core::Error::InvalidParameter(format!(
            "fit-centerbias fits centerbias or fixnum_centerbias, not {other}"
        ))),
    };
    let (bandwidth, fit) = density::fit_center_bias_bandwidth(&ds, args.downsample)?;
    let interval_edges = match kind {
        BaselineKind::FixnumCenterbias => parse_intervals(&args.intervals)?.into(),
        _ => vec![],
    };
    let params = BaselineParams {
        kind,
        bandwidth_px: bandwidth,
        uniform_weight: density::CENTER_BIAS_UNIFORM_WEIGHT,
        centerbias_weight: 0.0,
        interval_edges,
        centerbias_bandwidth_px: None,
    };
    // Building it once checks every interval has data.
    FittedBaseline::from_params(&ds, &params, args.downsample)?;
    params.save(&args.params)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}

fn fit_goldstandard(args: FitBaselineArgs) -> Result<()> {
    let (ds, _) = args.subset.apply(args.data.load()?)?;
    let (cb_bandwidth, _) = density::fit_center_bias_bandwidth(&ds, args.downsample)?;
    let cb = FittedBaseline::center_bias(&ds, cb_bandwidth, args.downsample)?;
    let fit = density::fit_gold_standard(&ds, &cb)?;
    fit.baseline_params().save(&args.params)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(())
}

fn fit_model(args: FitModelArgs) -> Result<()> {
    let (ds, subset) = args.subset.apply(args.data.load()?)?;
    let split = match subset {
        Some(image_ids) => FitSplit::Subset { image_ids },
        None => FitSplit::TrainAll,
    };
    let saliency = match &args.saliency_dir {
        Some(dir) => Some(SaliencyStore::load(dir, &ds, args.downsample)?),
        None => None,
    };
    let report = match args.model {
        ModelKind::Jump => {
            let kernel = match args.kernel {
                KernelArg::Cauchy => JumpKernel::Cauchy,
                KernelArg::Gaussian => JumpKernel::Gaussian,
            };
            let (params, fit) = models::fit_jump_model(&ds, kernel, saliency.as_ref(), args.downsample, split)?;
            write_json(&args.params, &params)?;
            serde_json::to_value(&fit)?
        }
        ModelKind::SaccadicFlow => {
            let params = models::fit_saccadic_flow(&models::Transition::from_dataset(&ds)?)?;
            write_json(&args.params, &params)?;
            let ll = models::saccadic_flow_log_likelihood(&params, &ds, args.downsample)?;
            serde_json::json!({ "objective_bits_per_fix": ll, "split": split })
        }
        ModelKind::Scenewalk => {
            let store = saliency.ok_or_else(|| {
                scanbench_core::Error::MissingSaliency("scenewalk needs --saliency-dir".into())
            })?;
            let initial = match &args.initial {
                Some(p) => serde_json::from_str(&read_text(p)?).map_err(scanbench_core::Error::from)?,
                None => SceneWalkParams::default(),
            };
            let (params, fit) = models::fit_scenewalk(&ds, &store, args.downsample, &initial, split)?;
            write_json(&args.params, &params)?;
            serde_json::to_value(&fit)?
        }
        other => bail!(scanbench_core::Error::InvalidParameter(format!(
            "fit-model fits jump, saccadic_flow or scenewalk, not {other}; baselines have their own commands"
        ))),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let ds = Arc::new(args.data.load()?);
    let metrics = args
        .metrics
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse::<Metric>)
        .collect::<Result<Vec<_>, _>>()?;
    let params_text = args.params.as_deref().map(read_text).transpose()?;
    let saliency = match &args.saliency_dir {
        Some(dir) => Some(SaliencyStore::load(dir, &ds, args.downsample)?),
        None => None,
    };
    let model = AnyModel::build(
        args.model,
        params_text.as_deref(),
        &ds,
        args.downsample,
        saliency.as_ref().map(|s| s.label()),
    )?;
    let ig_baseline = match &args.ig_baseline {
        Some(p) => Some(FittedBaseline::from_params(&ds, &BaselineParams::load(p)?, args.downsample)?),
        None => None,
    };
    let opts = EvaluateOptions {
        metrics,
        downsample: args.downsample,
        jobs: jobs(args.jobs)?,
    };
    let table = bench::evaluate(&model, &ds, saliency.as_ref(), ig_baseline.as_ref(), &opts)?;

    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    table.write_csv(std::io::BufWriter::new(file))?;

    let params = params_text
        .as_deref()
        .map(serde_json::from_str::<serde_json::Value>)
        .transpose()
        .map_err(scanbench_core::Error::from)?;
    let config = RunConfig {
        dataset: ds.name.clone(),
        dataset_path: Some(args.data.dataset.display().to_string()),
        model: args.model.to_string(),
        label: args.label.unwrap_or_else(|| model.name()),
        params_path: args.params.as_ref().map(|p| p.display().to_string()),
        params,
        saliency_dir: args.saliency_dir.as_ref().map(|p| p.display().to_string()),
        metrics: opts.metrics.clone(),
        downsample: args.downsample,
        seed: args.seed,
    };
    let run = EvaluationRun::new(config, &model, table);
    let run_path = args.run.unwrap_or_else(|| args.out.with_extension("json"));
    run.save(&run_path)?;

    let aggregate: serde_json::Map<String, serde_json::Value> = run
        .aggregate
        .iter()
        .map(|(m, v)| (m.label().to_string(), serde_json::json!(v)))
        .collect();
    println!("{}", serde_json::to_string_pretty(&aggregate)?);
    if run.skipped_nss > 0 {
        eprintln!("note: {} NSS values skipped on constant maps", run.skipped_nss);
    }
    Ok(())
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<EvaluationRun>> {
    paths.iter().map(|p| Ok(EvaluationRun::load(p)?)).collect()
}

fn report(args: ReportArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let text = bench::render_report(&runs, args.format)?;
    match args.out {
        Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn case_studies(args: CaseStudyArgs) -> Result<()> {
    let runs = load_runs(&args.runs)?;
    let dataset_path = match &args.dataset {
        Some(p) => p.clone(),
        None => runs[0]
            .config
            .dataset_path
            .as_ref()
            .map(PathBuf::from)
            .ok_or_else(|| scanbench_core::Error::InvalidParameter("pass --dataset".into()))?,
    };
    let ds = Arc::new(data::load_dataset(&dataset_path, OutOfBoundsPolicy::Reject)?);
    let query = CaseStudyQuery {
        min_amplitude_dva: args.min_amplitude_dva,
        min_distance_to_previous_dva: args.no_return_dva,
        top_k: args.top,
    };
    let studies = bench::rank_case_studies(&runs, &ds, &query)?;
    for (rank, s) in studies.iter().enumerate() {
        println!(
            "{}\t{}\t{}\tscanpath {}\tfixation {}\tstd {:.4}\tamplitude {:.2} dva",
            rank + 1,
            s.key.image_id,
            s.key.subject_id,
            s.key.scanpath_index,
            s.key.fixation_index,
            s.auc_std,
            s.amplitude_dva
        );
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if args.no_maps {
        write_json(&args.out.join("index.json"), &serde_json::json!({ "studies": studies }))?;
        return Ok(());
    }

    let downsample = runs[0].config.downsample;
    let mut built = Vec::with_capacity(runs.len());
    for run in &runs {
        let c = &run.config;
        let kind: ModelKind = c.model.parse()?;
        let params = c.params.as_ref().map(|v| v.to_string());
        let saliency = match &c.saliency_dir {
            Some(dir) => Some(SaliencyStore::load(dir, &ds, downsample)?),
            None => None,
        };
        let model = AnyModel::build(kind, params.as_deref(), &ds, downsample, saliency.as_ref().map(|s| s.label()))?;
        built.push((c.label.clone(), model, saliency));
    }
    let exports: Vec<ExportModel<'_, AnyModel>> = built
        .iter()
        .map(|(label, model, saliency)| ExportModel {
            label,
            model,
            saliency: saliency.as_ref(),
        })
        .collect();
    bench::export_case_maps(&studies, &exports, &ds, downsample, &args.out, args.pgm)?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config: SynthConfig = serde_json::from_str(&read_text(&args.config)?).map_err(scanbench_core::Error::from)?;
    let out = bench::generate_synthetic_dataset(&config, args.seed)?;
    data::save_dataset(&out.dataset, &args.out)?;
    let truth = args.truth.unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".truth.json");
        PathBuf::from(name)
    });
    write_json(&truth, &out.truth)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Load(a) => load(a),
        Command::FitCenterbias(a) => fit_centerbias(a),
        Command::FitGoldstandard(a) => fit_goldstandard(a),
        Command::FitModel(a) => fit_model(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::CaseStudies(a) => case_studies(a),
        Command::Synth(a) => synth(a),
    }
}

/// Joins the error chain, dropping causes already quoted by their parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain_message(&e));
            let validation = e
                .downcast_ref::<scanbench_core::Error>()
                .is_some_and(scanbench_core::Error::is_validation);
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}
