//! Command-line entry point. Usage and configuration errors exit with 2,
//! data errors with 1.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::eval::{labeled_pairs, nmi, threshold_sweep};
use crate::hdbscan::{h_dbscan, ClusterLabels, DbscanParams, DistanceMatrix};
use crate::hin::{Hin, NodeType};
use crate::ingest::{build_event_layer, build_hin, read_corpus_file, EnrichmentTables, ParsedCorpus};
use crate::metapath::SimilarityStack;
use crate::ppgcn::{save_checkpoint, train, training_inputs, ModelParams};
use crate::streaming::{cluster_anchors, run_stream, write_reports};
use crate::synth::{generate_synthetic, SyntheticSpec};

#[derive(Parser, Debug)]
#[command(name = "evhin", version, about = "Event mining over heterogeneous information networks")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an event graph from an annotated corpus.
    BuildHin(BuildHinArgs),
    /// Learn meta-path weights with the pairwise GCN.
    TrainWeights(TrainArgs),
    /// Cluster a precomputed distance file.
    Cluster(ClusterArgs),
    /// Detect events over a whole graph.
    Detect(DetectArgs),
    /// Group detected events into evolution chains.
    Evolve(EvolveArgs),
    /// Replay a corpus slice by slice.
    StreamReplay(StreamArgs),
    /// Metrics, threshold sweep and corpus generation.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Write a synthetic corpus with planted events.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildHinArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Directory of enrichment tables.
    #[arg(long)]
    enrich: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    slot_mins: i64,
    /// Optional `id<TAB>event` file; adds the event layer.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Task {
    Event,
    Evolution,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    hin: PathBuf,
    /// `id<TAB>class` lines; ids are instance ids (event task) or event
    /// keys (evolution task).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum, default_value_t = Task::Event)]
    task: Task,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
    /// Learned path weights; defaults to `<out>.weights`.
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    distances: PathBuf,
    #[arg(long, default_value_t = 0.69)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    min_pts: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Labels file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    hin: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Overrides the configured detection radius.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the distance file.
    #[arg(long)]
    distances_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[arg(long)]
    hin: PathBuf,
    /// `id<TAB>event` assignment of instances.
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    enrich: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    report: PathBuf,
    /// Per-slice label files go here.
    #[arg(long)]
    labels_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// NMI between two `id<TAB>label` files (joined on id).
    Nmi {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Accuracy of `KIES >= θ` over labeled instance pairs for θ in 0..1.
    Sweep {
        #[arg(long)]
        hin: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Curve as a tab-separated table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// `default` or a TOML spec file.
    #[arg(long, default_value = "default")]
    spec: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InfeasibleSpec(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<Config> {
    let cfg = match &arg.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    eprintln!("# resolved config\n{}", cfg.to_toml());
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn read_corpus(path: &Path) -> Result<ParsedCorpus> {
    let parsed = read_corpus_file(path)?;
    for d in &parsed.diagnostics {
        eprintln!("{}:{}: {}", path.display(), d.line, d.message);
    }
    Ok(parsed)
}

fn read_tables(dir: &Option<PathBuf>) -> Result<EnrichmentTables> {
    dir.as_deref().map_or(Ok(EnrichmentTables::default()), EnrichmentTables::load_dir)
}

/// `id<TAB>label` lines; `#` comments and blank lines skipped.
fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: n + 1,
            message: format!("{}: expected `id<TAB>label`", path.display()),
        })?;
        out.push((id.to_string(), label.trim().to_string()));
    }
    Ok(out)
}

fn load_hin(path: &Path) -> Result<Hin> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Hin::from_snapshot(serde_json::from_reader(BufReader::new(file))?)
}

fn save_hin(hin: &Hin, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer(&mut out, &hin.to_snapshot())?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Instance index -> event key from an `id<TAB>event` file.
fn event_assignment(hin: &Hin, path: &Path) -> Result<BTreeMap<u32, String>> {
    read_pairs(path)?
        .into_iter()
        .map(|(id, ev)| {
            hin.node(NodeType::EventInstance, &id)
                .map(|n| (n.index, ev))
                .ok_or(Error::UnknownInstance(id))
        })
        .collect()
}

fn write_labels(labels: &ClusterLabels, ids: &[String], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    labels.write_tsv(Some(ids), &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::BuildHin(a) => build_hin_cmd(a),
        Command::TrainWeights(a) => train_cmd(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Evolve(a) => evolve_cmd(a),
        Command::StreamReplay(a) => stream_cmd(a),
        Command::Eval(EvalCommand::Nmi { pred, truth }) => nmi_cmd(&pred, &truth),
        Command::Eval(EvalCommand::Sweep {
            hin,
            truth,
            config,
            step,
            out,
        }) => sweep_cmd(&hin, &truth, &config, step, out.as_deref()),
        Command::Eval(EvalCommand::Generate(a)) | Command::Generate(a) => generate_cmd(a),
    }
}

fn build_hin_cmd(a: BuildHinArgs) -> Result<()> {
    if a.slot_mins <= 0 {
        return Err(Error::Config("--slot-mins must be positive".into()));
    }
    let corpus = read_corpus(&a.corpus)?;
    let tables = read_tables(&a.enrich)?;
    let mut hin = build_hin(&corpus.records, &tables, a.slot_mins * 60)?;
    if let Some(events) = &a.events {
        hin = build_event_layer(&hin, &event_assignment(&hin, events)?)?;
    }
    save_hin(&hin, &a.out)?;
    eprintln!(
        "{} instances, {} events, {} keywords, {} entities",
        hin.node_count(NodeType::EventInstance),
        hin.node_count(NodeType::Event),
        hin.node_count(NodeType::Keyword),
        hin.node_count(NodeType::Entity)
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let hin = load_hin(&a.hin)?;
    let (paths, kind) = match a.task {
        Task::Event => (cfg.detect_paths()?, NodeType::EventInstance),
        Task::Evolution => (cfg.evolve_paths()?, NodeType::Event),
    };
    let mut class_ids: BTreeMap<String, u32> = BTreeMap::new();
    let mut labeled = Vec::new();
    for (id, class) in read_pairs(&a.labels)? {
        let node = hin.node(kind, &id).ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        let next = class_ids.len() as u32;
        labeled.push((node.index as usize, *class_ids.entry(class).or_insert(next)));
    }
    labeled.sort_unstable();
    let anchors: Vec<usize> = labeled.iter().map(|&(i, _)| i).collect();
    let classes: BTreeMap<usize, u32> = labeled.iter().enumerate().map(|(k, &(_, c))| (k, c)).collect();
    let tc = cfg.train_config();
    let (s, x) = training_inputs(&hin, &paths, &anchors, tc.feature_dim)?;
    let init = ModelParams::init(tc.feature_dim, tc.hidden_dim, tc.output_dim, paths.len(), tc.seed);
    let (params, history) = train(&init, &s, &x, &classes, &tc)?;
    for h in &history {
        eprintln!("epoch {}: loss {:.5} pair accuracy {:.4}", h.epoch, h.mean_loss, h.pair_accuracy);
    }
    save_checkpoint(&params, &a.out)?;
    let weights_out = a.weights_out.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".weights");
        p.into()
    });
    let mut out = create(&weights_out)?;
    params.weight_vector().write_to(&mut out).map_err(|e| Error::io(&weights_out, e))?;
    out.flush().map_err(|e| Error::io(&weights_out, e))?;
    Ok(())
}

fn cluster_cmd(a: ClusterArgs) -> Result<()> {
    let file = File::open(&a.distances).map_err(|e| Error::io(&a.distances, e))?;
    let da = DistanceMatrix::read_from(BufReader::new(file))?;
    let params = DbscanParams {
        eps: a.eps,
        min_pts: a.min_pts,
        threads: a.threads,
    };
    params.validate()?;
    let labels = h_dbscan(&da, &params)?;
    match &a.out {
        Some(p) => {
            let mut out = create(p)?;
            labels.write_tsv(None, &mut out).map_err(|e| Error::io(p, e))?;
            out.flush().map_err(|e| Error::io(p, e))?;
        }
        None => labels
            .write_tsv(None, std::io::stdout().lock())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    eprintln!("{} clusters, {} noise", labels.n_clusters(), labels.n_noise());
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let hin = load_hin(&a.hin)?;
    let paths = cfg.detect_paths()?;
    let weights = cfg.detect_weights(&paths)?;
    let mut params = cfg.detect_params();
    if let Some(eps) = a.eps {
        params.eps = eps;
    }
    params.validate()?;
    if let Some(p) = &a.distances_out {
        let k = SimilarityStack::compute(&hin, &paths)?.combine(&weights)?;
        let mut out = create(p)?;
        DistanceMatrix::from_kies_sparse(&k)?
            .write_to(&mut out)
            .map_err(|e| Error::io(p, e))?;
        out.flush().map_err(|e| Error::io(p, e))?;
    }
    let (labels, _, _) = cluster_anchors(&hin, &paths, &weights, &params)?;
    write_labels(&labels, hin.keys(NodeType::EventInstance), &a.out)?;
    eprintln!("{} events", labels.n_clusters());
    Ok(())
}

fn evolve_cmd(a: EvolveArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let base = load_hin(&a.hin)?;
    let hin = build_event_layer(&base, &event_assignment(&base, &a.events)?)?;
    let paths = cfg.evolve_paths()?;
    let weights = cfg.evolve_weights(&paths)?;
    let mut params = cfg.evolve_params();
    if let Some(eps) = a.eps {
        params.eps = eps;
    }
    params.validate()?;
    let (labels, _, _) = cluster_anchors(&hin, &paths, &weights, &params)?;
    write_labels(&labels, hin.keys(NodeType::Event), &a.out)?;
    eprintln!("{} chains", labels.n_clusters());
    Ok(())
}

fn stream_cmd(a: StreamArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let corpus = read_corpus(&a.corpus)?;
    let mut pipeline = cfg.pipeline(read_tables(&a.enrich)?)?;
    pipeline.labels_dir = a.labels_dir.clone();
    let out = run_stream(corpus.records, pipeline)?;
    for d in &out.diagnostics {
        eprintln!("{d}");
    }
    let mut w = create(&a.report)?;
    write_reports(&out.reports, &mut w)?;
    w.flush().map_err(|e| Error::io(&a.report, e))?;
    eprintln!(
        "{} slices, {} events, {} chains",
        out.reports.len(),
        out.history.events().len(),
        out.history.chains().len()
    );
    Ok(())
}

fn nmi_cmd(pred: &Path, truth: &Path) -> Result<()> {
    let truth: BTreeMap<String, String> = read_pairs(truth)?.into_iter().collect();
    let mut p = Vec::new();
    let mut t = Vec::new();
    for (id, label) in read_pairs(pred)? {
        let tl = truth.get(&id).ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        p.push(label);
        t.push(tl.clone());
    }
    if p.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: truth.len(),
        });
    }
    println!("{:.6}", nmi(&p, &t)?);
    Ok(())
}

fn sweep_cmd(hin: &Path, truth: &Path, config: &ConfigArg, step: f64, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let hin = load_hin(hin)?;
    let mut labeled = Vec::new();
    for (id, class) in read_pairs(truth)? {
        let node = hin
            .node(NodeType::EventInstance, &id)
            .ok_or_else(|| Error::UnknownInstance(id.clone()))?;
        labeled.push((node.index as usize, class));
    }
    let paths = cfg.detect_paths()?;
    let weights = cfg.detect_weights(&paths)?;
    let anchors: Vec<usize> = labeled.iter().map(|(i, _)| *i).collect();
    let classes: Vec<&String> = labeled.iter().map(|(_, c)| c).collect();
    let k = SimilarityStack::compute(&hin, &paths)?
        .combine(&weights)?
        .submatrix(&anchors, &anchors)
        .to_dense();
    let sweep = threshold_sweep(&labeled_pairs(&k, &classes)?, step)?;
    if let Some(p) = out {
        let mut w = create(p)?;
        sweep.write_tsv(&mut w).map_err(|e| Error::io(p, e))?;
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    println!(
        "threshold\t{:.2}\naccuracy\t{:.6}\neps\t{:.2}",
        sweep.best_threshold, sweep.best_accuracy, sweep.eps
    );
    Ok(())
}

fn generate_cmd(a: GenerateArgs) -> Result<()> {
    let mut spec = if a.spec == "default" {
        SyntheticSpec::default()
    } else {
        let path = Path::new(&a.spec);
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let corpus = generate_synthetic(&spec)?;
    corpus.write_dir(&a.out)?;
    eprintln!("{} records, {} events", corpus.records.len(), spec.n_events);
    Ok(())
}
