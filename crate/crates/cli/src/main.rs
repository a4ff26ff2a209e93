mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use visalign::analysis::{format_table, nearest_classes, neighbors_csv};
use visalign::cem::{fit_classes, AlignMethod, AlignmentConfig, DEFAULT_EPS_REL};
use visalign::data::{
    concat_tables, inspect_file, load_embeddings, BundlePaths, DataBundle, FileSummary, Section,
};
use visalign::episodes::{
    best_cell, evaluate, gen_synthetic, sweep, write_sweep_csv, EvalConfig, GeneratorConfig,
    TextAssets,
};
use visalign::mapnet::{
    train, Adam, LayerOrder, MapNet, TrainConfig, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE,
};
use visalign::scoring::Variant;
use visalign::{Error, ErrorKind, Projection};

#[derive(Parser)]
#[command(
    name = "visalign",
    version,
    about = "Align class-name embeddings with visual prototypes and evaluate few-shot episodes"
)]
struct Cli {
    /// JSON file of default flag values; explicit flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit CCA / CCA+D projections on a split section
    Align(AlignArgs),
    /// Evaluate a scoring variant over sampled episodes
    Eval(EvalArgs),
    /// Train the name-to-visual mapping network
    TrainMap(TrainArgs),
    /// Grid search over lambda and target dimension
    Sweep(SweepArgs),
    /// Nearest class names by cosine similarity
    Neighbors(NeighborArgs),
    /// Write a synthetic data bundle
    GenSynthetic(GenArgs),
    /// Validate binary files and print their headers
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Bundle directory holding text.cmv, features.cmv, assign.csv, splits.json
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Class-name embedding file; repeat to concatenate
    #[arg(long, value_name = "FILE")]
    text: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    features: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    assign: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    splits: Option<PathBuf>,
}

#[derive(Args)]
struct EpisodeArgs {
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, default_value_t = 5)]
    k_shot: usize,
    /// Query images per class
    #[arg(long, default_value_t = visalign::episodes::DEFAULT_QUERY)]
    query: usize,
    #[arg(long, default_value_t = 600)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = all cores); results do not depend on it
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cca,
    #[value(name = "cca+d")]
    CcaD,
}

impl From<MethodArg> for AlignMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cca => AlignMethod::Cca,
            MethodArg::CcaD => AlignMethod::CcaDewhiten,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SectionArg {
    Base,
    Val,
    Novel,
}

impl From<SectionArg> for Section {
    fn from(s: SectionArg) -> Self {
        match s {
            SectionArg::Base => Section::Base,
            SectionArg::Val => Section::Val,
            SectionArg::Novel => Section::Novel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    S1,
    S2,
    S3,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::S1 => Variant::S1,
            VariantArg::S2 => Variant::S2,
            VariantArg::S3 => Variant::S3,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    ReluNorm,
    NormRelu,
}

#[derive(Args)]
struct AlignArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cca+d")]
    method: MethodArg,
    /// Target dimension d
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_EPS_REL)]
    eps_rel: f64,
    /// Subtract column means before fitting
    #[arg(long)]
    center: bool,
    #[arg(long, value_enum, default_value = "base")]
    fit_section: SectionArg,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, value_enum, default_value = "s1")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Projection directory from `align` (s3)
    #[arg(long, value_name = "DIR")]
    proj: Option<PathBuf>,
    /// Network checkpoint from `train-map` (s2)
    #[arg(long, value_name = "DIR")]
    net: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "novel")]
    section: SectionArg,
    /// Write the JSON report here
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, default_value_t = 5)]
    k_shot: usize,
    #[arg(long, default_value_t = visalign::episodes::DEFAULT_QUERY)]
    query: usize,
    #[arg(long, default_value_t = 50_000)]
    episodes: usize,
    #[arg(long, default_value_t = 5.0)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, value_enum, default_value = "relu-norm")]
    order: OrderArg,
    /// Print the loss every this many episodes (0 = never)
    #[arg(long, default_value_t = 100)]
    log_interval: usize,
    #[arg(long, value_enum, default_value = "base")]
    section: SectionArg,
    /// Continue from this checkpoint instead of a fresh network
    #[arg(long, value_name = "DIR")]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7,8,9,10")]
    lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    dims: Vec<usize>,
    #[arg(long, value_enum, default_value = "cca+d")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_EPS_REL)]
    eps_rel: f64,
    #[arg(long)]
    center: bool,
    #[arg(long, value_enum, default_value = "base")]
    fit_section: SectionArg,
    /// Section the episodes are drawn from
    #[arg(long, value_enum, default_value = "val")]
    section: SectionArg,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct NeighborArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Rank in the projected space of this pair
    #[arg(long, value_name = "DIR")]
    proj: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 100)]
    classes: usize,
    #[arg(long, default_value_t = 30)]
    images_per_class: usize,
    #[arg(long, default_value_t = 64)]
    dim_text: usize,
    #[arg(long, default_value_t = 32)]
    dim_vis: usize,
    /// Rank of the text-to-visual map (default: min of the dims)
    #[arg(long)]
    rank: Option<usize>,
    /// Share of each class mean explained by its name, in [0, 1]
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long)]
    val_classes: Option<usize>,
    #[arg(long)]
    novel_classes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(required = true, value_name = "FILE")]
    files: Vec<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

impl DataArgs {
    fn paths(&self) -> CliResult<BundlePaths> {
        let base = self.data.as_deref().map(BundlePaths::in_dir);
        let pick = |explicit: &Option<PathBuf>, fallback: Option<&PathBuf>, flag: &str| {
            explicit
                .clone()
                .or_else(|| fallback.cloned())
                .ok_or_else(|| usage(format!("missing --{flag} (or --data DIR)")))
        };
        let text = if !self.text.is_empty() {
            self.text.clone()
        } else {
            base.as_ref()
                .map(|b| b.text.clone())
                .ok_or_else(|| usage("missing --text (or --data DIR)"))?
        };
        Ok(BundlePaths {
            text,
            features: pick(
                &self.features,
                base.as_ref().map(|b| &b.features),
                "features",
            )?,
            assign: pick(&self.assign, base.as_ref().map(|b| &b.assign), "assign")?,
            splits: pick(&self.splits, base.as_ref().map(|b| &b.splits), "splits")?,
        })
    }

    fn bundle(&self) -> CliResult<DataBundle> {
        Ok(DataBundle::load(&self.paths()?)?)
    }

    /// Only the text tables, for commands that need no visual data.
    fn text_table(&self) -> CliResult<visalign::data::EmbeddingTable> {
        let files = if !self.text.is_empty() {
            self.text.clone()
        } else {
            let dir = self
                .data
                .as_deref()
                .ok_or_else(|| usage("missing --text (or --data DIR)"))?;
            BundlePaths::in_dir(dir).text
        };
        let tables = files
            .iter()
            .map(load_embeddings)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(concat_tables(&tables.iter().collect::<Vec<_>>())?)
    }
}

fn alignment(method: MethodArg, dim: usize, eps_rel: f64, center: bool) -> AlignmentConfig {
    AlignmentConfig {
        method: method.into(),
        dim,
        eps_rel,
        center,
    }
}

fn run_align(args: &AlignArgs) -> CliResult {
    let bundle = args.data.bundle()?;
    let config = alignment(args.method, args.dim, args.eps_rel, args.center);
    let section: Section = args.fit_section.into();
    let pair = fit_classes(
        &bundle.text,
        &bundle.store,
        bundle.split.section(section),
        &config,
    )?;
    pair.save(&args.out)?;
    let corr: Vec<String> = pair
        .correlations()
        .iter()
        .map(|c| format!("{c:.4}"))
        .collect();
    println!(
        "fitted {} on {} {section} classes: A {}x{}, B {}x{}",
        pair.config().method,
        pair.class_count(),
        pair.text_dim(),
        pair.dim(),
        pair.visual_dim(),
        pair.dim()
    );
    println!("canonical correlations: {}", corr.join(" "));
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> CliResult {
    let bundle = args.data.bundle()?;
    let variant: Variant = args.variant.into();
    let pair = match (&args.proj, variant) {
        (Some(dir), _) => Some(Projection::load(dir)?),
        (None, Variant::S3) => return Err(usage("--variant s3 needs --proj DIR")),
        (None, _) => None,
    };
    let net = match (&args.net, variant) {
        (Some(dir), _) => Some(MapNet::<f64>::load(dir)?.0),
        (None, Variant::S2) => return Err(usage("--variant s2 needs --net DIR")),
        (None, _) => None,
    };
    let e = &args.episodes;
    let config = EvalConfig {
        variant,
        lambda: args.lambda,
        n_way: e.n_way,
        k_shot: e.k_shot,
        query: e.query,
        episodes: e.episodes,
        section: args.section.into(),
        seed: e.seed,
    };
    let assets = TextAssets {
        pair: pair.as_ref(),
        net: net.as_ref(),
    };
    let report = evaluate(&config, &bundle, assets, e.threads)?;
    if let Some(path) = &args.report {
        report.write(path)?;
    }
    println!(
        "{variant} lambda={} {}-way {}-shot: accuracy {:.4} ± {:.4} over {} episodes",
        args.lambda,
        e.n_way,
        e.k_shot,
        report.mean_accuracy,
        report.ci95_half_width,
        report.episodes
    );
    Ok(())
}

fn run_train(args: &TrainArgs) -> CliResult {
    let bundle = args.data.bundle()?;
    let (mut net, adam) = match &args.resume {
        Some(dir) => MapNet::<f64>::load(dir)?,
        None => {
            let mut rng = visalign::episodes::episode_rng(args.seed, u64::MAX);
            let mut net = MapNet::new(bundle.text.dim(), args.hidden, bundle.store.dim(), &mut rng);
            net.order = match args.order {
                OrderArg::ReluNorm => LayerOrder::ReluThenNorm,
                OrderArg::NormRelu => LayerOrder::NormThenRelu,
            };
            (net, None)
        }
    };
    if net.input_dim() != bundle.text.dim() {
        return Err(Error::DimMismatch {
            what: "checkpoint input".into(),
            expected: bundle.text.dim(),
            got: net.input_dim(),
        }
        .into());
    }
    if net.output_dim() != bundle.store.dim() {
        return Err(Error::DimMismatch {
            what: "checkpoint output".into(),
            expected: bundle.store.dim(),
            got: net.output_dim(),
        }
        .into());
    }
    let mut adam = adam.unwrap_or_else(|| Adam::new(&net, args.lr));
    let config = TrainConfig {
        episodes: args.episodes,
        n_way: args.n_way,
        k_shot: args.k_shot,
        query: args.query,
        lambda: args.lambda,
        lr: args.lr,
        log_interval: args.log_interval,
        seed: args.seed,
        section: args.section.into(),
    };
    let outcome = train(&mut net, &bundle, &config, &mut adam, |episode, loss| {
        println!("episode {episode} loss {loss:.6}");
    })?;
    net.save(&args.out, Some(&adam))?;
    if let Some(loss) = outcome.final_loss {
        println!("final loss {loss:.6}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> CliResult {
    let bundle = args.data.bundle()?;
    let align = alignment(args.method, 1, args.eps_rel, args.center);
    let e = &args.episodes;
    let eval = EvalConfig {
        variant: Variant::S3,
        lambda: 0.0,
        n_way: e.n_way,
        k_shot: e.k_shot,
        query: e.query,
        episodes: e.episodes,
        section: args.section.into(),
        seed: e.seed,
    };
    let cells = sweep(
        &bundle,
        &args.lambdas,
        &args.dims,
        &align,
        args.fit_section.into(),
        &eval,
        e.threads,
    )?;
    write_sweep_csv(&cells, &args.out)?;
    if let Some(best) = best_cell(&cells) {
        println!(
            "best: lambda={} d={} accuracy {:.4} ± {:.4}",
            best.lambda, best.d, best.report.mean_accuracy, best.report.ci95_half_width
        );
    }
    println!("wrote {} rows to {}", cells.len(), args.out.display());
    Ok(())
}

fn run_neighbors(args: &NeighborArgs) -> CliResult {
    let table = args.data.text_table()?;
    let pair = args.proj.as_deref().map(Projection::load).transpose()?;
    let ranked = nearest_classes(&table, &args.target, args.k, pair.as_ref())?;
    print!("{}", format_table(&ranked));
    if let Some(path) = &args.csv {
        std::fs::write(path, neighbors_csv(&ranked)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_gen(args: &GenArgs) -> CliResult {
    let config = GeneratorConfig {
        classes: args.classes,
        images_per_class: args.images_per_class,
        dim_text: args.dim_text,
        dim_vis: args.dim_vis,
        rank: args.rank,
        signal: args.signal,
        noise: args.noise,
        val_classes: args.val_classes,
        novel_classes: args.novel_classes,
        seed: args.seed,
    };
    let bundle = gen_synthetic(&config, &args.out)?;
    println!(
        "wrote {} classes ({} base, {} val, {} novel), {} images to {}",
        bundle.text.len(),
        bundle.split.base.len(),
        bundle.split.val.len(),
        bundle.split.novel.len(),
        bundle.store.features().len(),
        args.out.display()
    );
    Ok(())
}

fn run_inspect(args: &InspectArgs) -> CliResult {
    for path in &args.files {
        match inspect_file(path)? {
            FileSummary::Vectors {
                count,
                dim,
                first_labels,
            } => println!(
                "{}: CMVEC records={count} dim={dim} first=[{}]",
                path.display(),
                first_labels.join(", ")
            ),
            FileSummary::Matrix { rows, cols } => {
                println!("{}: CMMAT rows={rows} cols={cols}", path.display())
            }
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Align(a) => run_align(a),
        Command::Eval(a) => run_eval(a),
        Command::TrainMap(a) => run_train(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Neighbors(a) => run_neighbors(a),
        Command::GenSynthetic(a) => run_gen(a),
        Command::Inspect(a) => run_inspect(a),
    }
}

/// Clap's multi-line error as one line, without the usage footer.
fn one_line(err: &clap::Error) -> String {
    let text = err.to_string();
    let body = text.split("\n\nUsage:").next().unwrap_or(&text);
    let body = body
        .split("\n\nFor more information")
        .next()
        .unwrap_or(body);
    body.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(message: &str, code: u8) -> ExitCode {
    let message = message.strip_prefix("error: ").unwrap_or(message);
    eprintln!("visalign: error: {}", message.replace('\n', " "));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(args) => args,
        Err(message) => return fail(&message, 1),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => return fail(&one_line(&err), 1),
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => fail(&message, code),
    }
}
