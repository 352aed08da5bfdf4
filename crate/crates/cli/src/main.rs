mod config;
mod svg;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use hyperalign::eval::{
    align, make_synthetic_task, score, AlignmentReport, AlignmentTask, Method, ProtocolConfig,
};
use hyperalign::formats::{read_matches, resolve_matches, write_matches, EmbeddingFile};
use hyperalign::mapping_estimation::{write_loss_csv, InitStrategy, OptimConfig};
use hyperalign::ot::write_dense_csv;
use hyperalign::{CostKind, PoincareBall};

use config::{parse_eta, Config};

/// Exit status 1: I/O or input files, 2: usage, 3: numerical failure.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

/// Classifies a library error raised while reading inputs.
fn input_stage(stage: &str) -> impl Fn(hyperalign::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{stage}: {e}"))
}

/// Classifies a library error raised while computing.
fn compute_stage(stage: &str) -> impl Fn(hyperalign::Error) -> CliError + '_ {
    move |e| {
        if e.is_numerical() {
            CliError::Numerical(format!("{stage}: {e}"))
        } else {
            CliError::Usage(format!("{stage}: {e}"))
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hyperalign",
    version,
    about = "Optimal-transport alignment of hyperbolic embeddings"
)]
struct Cli {
    /// Flat key=value file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Write a synthetic task: source and target embeddings plus matches.
    Synth(SynthArgs),
    /// Fit a transport map and score it on held-out matches.
    Align(AlignArgs),
    /// Score transported embeddings against targets.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Prefix of the written files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// wlinear, otda, me, ot_direct_w, ot_direct_sd, euclid_linear, euclid_otda, euclid_me or identity.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    matches: Option<PathBuf>,
    /// Ball radius.
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// OT weight of mapping estimation; `inf` fixes the coupling.
    #[arg(long, value_parser = parse_eta)]
    eta: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    cost: Option<String>,
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    me_outer: Option<usize>,
    #[arg(long)]
    fit_steps: Option<usize>,
    #[arg(long)]
    ot_steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sinkhorn_iters: Option<usize>,
    #[arg(long)]
    sinkhorn_tol: Option<f64>,
    /// Also write an SVG scatter (2-d inputs only).
    #[arg(long)]
    svg: bool,
    /// Prefix of the written files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    transported: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    matches: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Ball radius used for ranking.
    #[arg(long)]
    s: Option<f64>,
    /// Rank by Euclidean distance instead.
    #[arg(long)]
    euclidean: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hyperalign: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Synth(args) => synth(args, &config),
        Command::Align(args) => align_cmd(args, &config),
        Command::Eval(args) => eval_cmd(args, &config),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("opening {}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> hyperalign::Result<()>,
{
    let mut out = create(path)?;
    f(&mut out).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    out.flush()
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

fn load_embedding(path: &Path, what: &str) -> Result<EmbeddingFile, CliError> {
    EmbeddingFile::read(open(path)?)
        .map_err(input_stage(&format!("reading {what} {}", path.display())))
}

fn load_matches(
    path: &Path,
    src: &EmbeddingFile,
    tgt: &EmbeddingFile,
) -> Result<Vec<(usize, usize)>, CliError> {
    let pairs = read_matches(open(path)?)
        .map_err(input_stage(&format!("reading matches {}", path.display())))?;
    resolve_matches(&pairs, src, tgt).map_err(input_stage("resolving matches"))
}

fn synth(args: SynthArgs, config: &Config) -> Result<(), CliError> {
    let d = config.or("d", args.d, 2)?;
    let n = config.or("n", args.n, 100)?;
    let noise = config.or("noise", args.noise, 0.0)?;
    let seed = config.or("seed", args.seed, 0u64)?;
    let out = config.or("out", args.out, PathBuf::from("synth"))?;
    let task = make_synthetic_task(d, n, noise, seed).map_err(compute_stage("generating task"))?;
    let src = EmbeddingFile::numbered("s", task.src.points().to_owned())
        .map_err(compute_stage("labeling source"))?;
    let tgt = EmbeddingFile::numbered("t", task.tgt.points().to_owned())
        .map_err(compute_stage("labeling target"))?;
    let pairs: Vec<(String, String)> = task
        .matches
        .iter()
        .map(|&(i, j)| (src.tokens()[i].clone(), tgt.tokens()[j].clone()))
        .collect();
    let paths = [
        with_suffix(&out, ".source.emb"),
        with_suffix(&out, ".target.emb"),
        with_suffix(&out, ".matches.tsv"),
    ];
    write_with(&paths[0], |w| src.write(w))?;
    write_with(&paths[1], |w| tgt.write(w))?;
    write_with(&paths[2], |w| write_matches(&pairs, w))?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn protocol_config(args: &AlignArgs, config: &Config) -> Result<ProtocolConfig, CliError> {
    let base = ProtocolConfig::default();
    let cost: CostKind = config
        .or("cost", args.cost.clone(), base.cost.name().to_string())?
        .parse()
        .map_err(|e: hyperalign::Error| CliError::Usage(e.to_string()))?;
    let init: InitStrategy = config
        .or("init", args.init.clone(), base.init.name().to_string())?
        .parse()
        .map_err(|e: hyperalign::Error| CliError::Usage(e.to_string()))?;
    let eta = match args.eta {
        Some(v) => v,
        None => match config.lookup::<String>("eta", None)? {
            Some(raw) => {
                parse_eta(&raw).map_err(|e| CliError::Usage(format!("config key 'eta': {e}")))?
            }
            None => base.eta,
        },
    };
    let lr = config.lookup("lr", args.lr)?;
    let fit_optim = OptimConfig {
        max_steps: config.or("fit_steps", args.fit_steps, base.fit_optim.max_steps)?,
        lr: lr.unwrap_or(base.fit_optim.lr),
        ..base.fit_optim
    };
    let ot_optim = OptimConfig {
        max_steps: config.or("ot_steps", args.ot_steps, base.ot_optim.max_steps)?,
        lr: lr.unwrap_or(base.ot_optim.lr),
        ..base.ot_optim
    };
    let mut sinkhorn = base.sinkhorn;
    sinkhorn.max_iters = config.or("sinkhorn_iters", args.sinkhorn_iters, sinkhorn.max_iters)?;
    sinkhorn.rel_tol = config.or("sinkhorn_tol", args.sinkhorn_tol, sinkhorn.rel_tol)?;
    let cfg = ProtocolConfig {
        folds: config.or("folds", args.folds, 1)?,
        k: config.or("k", args.k, base.k)?,
        seed: config.or("seed", args.seed, base.seed)?,
        epsilon: config.or("epsilon", args.epsilon, base.epsilon)?,
        eta,
        omega: config.or("omega", args.omega, base.omega)?,
        cost,
        init,
        me_outer: config.or("me_outer", args.me_outer, base.me_outer)?,
        fit_optim,
        ot_optim,
        sinkhorn,
        ..base
    };
    if cfg.folds == 0 || cfg.k == 0 {
        return Err(CliError::Usage("folds and k must be at least 1".into()));
    }
    Ok(cfg)
}

fn align_cmd(args: AlignArgs, config: &Config) -> Result<(), CliError> {
    let raw: String = config.required("method", args.method.clone())?;
    let method: Method = raw
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown method '{raw}'")))?;
    let cfg = protocol_config(&args, config)?;
    let s = config.or("s", args.s, 1.0)?;
    let ball = PoincareBall::new(s).map_err(|e| CliError::Usage(e.to_string()))?;
    let train_fraction = config.or("train_fraction", args.train_fraction, 0.1)?;
    let svg = args.svg || config.or("svg", None, false)?;
    let out = config.or("out", args.out.clone(), PathBuf::from("align"))?;

    let src_file = load_embedding(&config.required("source", args.source.clone())?, "source")?;
    let tgt_file = load_embedding(&config.required("target", args.target.clone())?, "target")?;
    let matches = load_matches(
        &config.required("matches", args.matches.clone())?,
        &src_file,
        &tgt_file,
    )?;
    if !method.is_euclidean() {
        src_file
            .check_ball(&ball)
            .map_err(input_stage("checking source"))?;
        tgt_file
            .check_ball(&ball)
            .map_err(input_stage("checking target"))?;
    }
    let src = src_file.to_cloud().map_err(input_stage("source cloud"))?;
    let tgt = tgt_file.to_cloud().map_err(input_stage("target cloud"))?;
    let mut task =
        AlignmentTask::new(ball, src, tgt, matches).map_err(input_stage("building task"))?;
    task.train_fraction = train_fraction;

    let start = Instant::now();
    let mut fold_hits = Vec::with_capacity(cfg.folds);
    let mut first = None;
    for fold in 0..cfg.folds {
        let (train, test) = task
            .split(fold, cfg.folds, cfg.seed)
            .map_err(compute_stage("splitting matches"))?;
        let fold_cfg = ProtocolConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.clone()
        };
        let fitted = align(&task.ball, &task.src, &task.tgt, &train, method, &fold_cfg)
            .map_err(compute_stage(&format!("fitting {method} (fold {fold})")))?;
        let k = cfg.k.min(task.tgt.len()).min(task.src.len());
        fold_hits.push(
            score(&task.ball, &fitted, &task.tgt, &test, k).map_err(compute_stage("scoring"))?,
        );
        if first.is_none() {
            first = Some(fitted);
        }
    }
    let fitted = first.expect("at least one fold");
    let n = fold_hits.len() as f64;
    let report = AlignmentReport {
        method,
        k: cfg.k,
        folds: cfg.folds,
        hits_src_tgt: fold_hits.iter().map(|h| h.0).sum::<f64>() / n,
        hits_tgt_src: fold_hits.iter().map(|h| h.1).sum::<f64>() / n,
        fold_hits,
        seconds: start.elapsed().as_secs_f64(),
        config: {
            let mut echo = cfg.echo();
            echo.push(("s".into(), s.to_string()));
            echo.push(("train_fraction".into(), train_fraction.to_string()));
            echo
        },
    };

    let transported = EmbeddingFile::new(src_file.tokens().to_vec(), fitted.transported.clone())
        .map_err(compute_stage("transported"))?;
    write_with(&with_suffix(&out, ".transported.emb"), |w| {
        transported.write(w)
    })?;
    if let Some(m) = &fitted.coupling {
        write_with(&with_suffix(&out, ".coupling.csv"), |w| {
            write_dense_csv(m, w)
        })?;
    }
    if let Some(model) = &fitted.model {
        write_with(&with_suffix(&out, ".model.txt"), |w| model.write_text(w))?;
    }
    if !fitted.trace.is_empty() {
        write_with(&with_suffix(&out, ".loss.csv"), |w| {
            write_loss_csv(&fitted.trace, w)
        })?;
    }
    write_with(&with_suffix(&out, ".report.txt"), |w| report.write_text(w))?;
    write_with(&with_suffix(&out, ".report.csv"), |w| {
        report.write_csv(w, true)
    })?;
    if svg {
        if src_file.dim() != 2 {
            return Err(CliError::Usage(format!(
                "--svg needs 2-d embeddings, got d = {}",
                src_file.dim()
            )));
        }
        let picture = svg::scatter(
            s,
            &[
                ("#1f77b4", src_file.vectors()),
                ("#2ca02c", tgt_file.vectors()),
                ("#d62728", fitted.transported.view()),
            ],
        );
        let path = with_suffix(&out, ".svg");
        let mut w = create(&path)?;
        w.write_all(picture.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    }
    println!(
        "method={} k={} folds={} hits_src_tgt={:.6} hits_tgt_src={:.6} seconds={:.3}",
        method, report.k, report.folds, report.hits_src_tgt, report.hits_tgt_src, report.seconds
    );
    Ok(())
}

fn eval_cmd(args: EvalArgs, config: &Config) -> Result<(), CliError> {
    let transported = load_embedding(
        &config.required("transported", args.transported.clone())?,
        "transported",
    )?;
    let tgt_file = load_embedding(&config.required("target", args.target.clone())?, "target")?;
    let matches = load_matches(
        &config.required("matches", args.matches.clone())?,
        &transported,
        &tgt_file,
    )?;
    let k = config.or("k", args.k, 10)?;
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let s = config.or("s", args.s, 1.0)?;
    let ball = if args.euclidean {
        PoincareBall::euclidean_proxy()
    } else {
        let ball = PoincareBall::new(s).map_err(|e| CliError::Usage(e.to_string()))?;
        transported
            .check_ball(&ball)
            .map_err(input_stage("checking transported"))?;
        tgt_file
            .check_ball(&ball)
            .map_err(input_stage("checking target"))?;
        ball
    };
    let tgt = tgt_file.to_cloud().map_err(input_stage("target cloud"))?;
    let k_src = k.min(tgt_file.len());
    let k_tgt = k.min(transported.len());
    let fwd = hyperalign::eval::hits_at_k(&ball, transported.vectors(), &tgt, &matches, k_src)
        .map_err(compute_stage("scoring"))?;
    let rev =
        hyperalign::eval::hits_at_k_reverse(&ball, transported.vectors(), &tgt, &matches, k_tgt)
            .map_err(compute_stage("scoring"))?;
    println!("hits@{k} src_tgt={fwd:.6} tgt_src={rev:.6}");
    println!("direction,k,hits");
    println!("src_tgt,{k_src},{fwd:.6}");
    println!("tgt_src,{k_tgt},{rev:.6}");
    Ok(())
}
