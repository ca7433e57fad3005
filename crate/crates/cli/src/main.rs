use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use medn_core::bound::{pac_bound_terms, BoundInputs};
use medn_core::curves::{linspace, norm_ball, shrinkage_curve};
use medn_core::cv::{cross_validate, CvConfig, DEFAULT_BETAS, DEFAULT_LAMBDAS};
use medn_core::dataset::Dataset;
use medn_core::metrics::{evaluate, write_csv, MetricsRow};
use medn_core::model_file::{fit, ModelFile, ModelKind, TrainParams};
use medn_core::{gen_dataset, GeneratorConfig};

#[derive(Parser)]
#[command(name = "medn", version, about = "Maximum-entropy discrimination Markov networks for sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic linear-chain CRF and label data with it by Gibbs sampling.
    GenSynth(GenArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Decode every sequence of a dataset with a trained model.
    Predict(PredictArgs),
    /// Error rates of a trained model on a dataset.
    Eval(EvalArgs),
    /// Inverted K-fold cross-validation over a hyperparameter grid.
    Cv(CvArgs),
    /// Posterior mean against eta for Gaussian and Laplace priors.
    ShrinkageCurve(ShrinkageArgs),
    /// KL-norm unit balls alongside the L1 and L2 balls.
    NormBall(NormBallArgs),
    /// PAC-Bayes generalization bound.
    PacBound(BoundArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 5)]
    d_rel: usize,
    #[arg(long, default_value_t = 8)]
    len: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 500)]
    sweeps: usize,
    /// Draw relevant features in groups sharing one base value.
    #[arg(long)]
    correlated: bool,
    #[arg(long, default_value_t = 3)]
    group_size: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file.
    data: PathBuf,
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Slack penalty; defaults to 200·beta for m3n and l1m3n and 1 for lapmedn.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    outer_iters: usize,
    #[arg(long, default_value_t = 25.0)]
    lambda: f64,
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file.
    model: PathBuf,
    /// Dataset file.
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    data: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "m3n,lapmedn,l1m3n")]
    models: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    radius: Vec<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    outer_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShrinkageArgs {
    #[arg(long, value_delimiter = ',', default_value = "4,6")]
    lambda: Vec<f64>,
    /// `lo:hi:n`, inclusive, `n` points.
    #[arg(long, default_value = "-1.9:1.9:39", allow_hyphen_values = true)]
    eta_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NormBallArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    lambda: Vec<f64>,
    /// Point `w1,w2` every KL boundary passes through.
    #[arg(long, value_delimiter = ',', num_args = 2, default_value = "0,1", allow_negative_numbers = true)]
    target: Vec<f64>,
    #[arg(long, default_value_t = 360)]
    angles: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    y_card: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    kl: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Empirical fraction of margins at most gamma.
    #[arg(long, default_value_t = 0.0)]
    empirical: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("reading dataset {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("reading model {}", path.display()))
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else { bail!("eta grid must look like lo:hi:n, got {spec:?}") };
    Ok(linspace(lo.trim().parse()?, hi.trim().parse()?, n.trim().parse()?)?)
}

fn gen_synth(a: GenArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        d: a.d,
        d_rel: a.d_rel,
        len: a.len,
        m: a.m,
        n_samples: a.n,
        gibbs_sweeps: a.sweeps,
        correlated: a.correlated,
        group_size: a.group_size,
        noise_sd: a.noise_sd,
        seed: a.seed,
    };
    let data = gen_dataset(&cfg)?;
    Dataset::from_synthetic(&data)?.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let spec = data.crf.model.spec;
    let w = &data.crf.model.weights;
    let state_l1: f64 = w[..spec.num_state()].iter().map(|v| v.abs()).sum();
    let trans_l1: f64 = w[spec.num_state()..].iter().map(|v| v.abs()).sum();
    println!("instances: {}", data.instances.len());
    println!("d = {}, m = {}, length = {}", spec.d, spec.m, cfg.len);
    println!("relevant features: {:?}", data.crf.relevant);
    println!("true weights: state L1 = {state_l1:.4}, transition L1 = {trans_l1:.4}");
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let spec = data.spec()?;
    let params = TrainParams {
        kind: a.model,
        beta: a.beta,
        c: a.c,
        iterations: a.iters,
        outer_iters: a.outer_iters,
        lambda: a.lambda,
        radius: a.radius,
        seed: a.seed,
    };
    let start = Instant::now();
    let file = fit(&data.instances, &spec, &params)?;
    let elapsed = start.elapsed();
    file.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!("objective: {}", file.objective);
    eprintln!("wall time: {:.3}s", elapsed.as_secs_f64());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?.chain_model()?;
    let data = load_data(&a.data)?;
    let mut out = output(a.out.as_deref())?;
    for inst in &data.instances {
        let y = model.decode(&inst.x)?;
        let labels: Vec<String> = y.0.iter().map(usize::to_string).collect();
        writeln!(out, "{}", labels.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let file = load_model(&a.model)?;
    let data = load_data(&a.data)?;
    let spec = data.spec()?;
    if spec != file.spec {
        bail!("model has d = {}, m = {} but data has d = {}, m = {}", file.spec.d, file.spec.m, spec.d, spec.m);
    }
    let e = evaluate(&spec, &file.weights, &data.instances)?;
    eprintln!("per-label error: {:.6}", e.per_label_err());
    eprintln!("sequence error: {:.6}", e.seq_err());
    let dataset = a.data.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let row = MetricsRow {
        model: file.model.to_string(),
        dataset,
        n_train: file.n_train,
        per_label_err: e.per_label_err(),
        seq_err: e.seq_err(),
        seed: file.hyperparameters.seed,
    };
    write_csv(output(a.out.as_deref())?, &[row])?;
    Ok(())
}

fn cv(a: CvArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let spec = data.spec()?;
    let cfg = CvConfig {
        folds: a.folds,
        models: a.models,
        lambdas: if a.lambda.is_empty() { DEFAULT_LAMBDAS.to_vec() } else { a.lambda },
        betas: if a.beta.is_empty() { DEFAULT_BETAS.to_vec() } else { a.beta },
        radii: a.radius,
        c: a.c,
        iterations: a.iters,
        outer_iters: a.outer_iters,
        seed: a.seed,
    };
    let rows = cross_validate(&data.instances, &spec, &cfg)?;
    write_csv(output(a.out.as_deref())?, &rows)?;
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Cv(a) => cv(a),
        Command::ShrinkageCurve(a) => {
            let rows = shrinkage_curve(&a.lambda, &parse_grid(&a.eta_grid)?)?;
            Ok(write_csv(output(a.out.as_deref())?, &rows)?)
        }
        Command::NormBall(a) => {
            let rows = norm_ball(&a.lambda, (a.target[0], a.target[1]), a.angles)?;
            Ok(write_csv(output(a.out.as_deref())?, &rows)?)
        }
        Command::PacBound(a) => {
            let terms = pac_bound_terms(&BoundInputs {
                n: a.n,
                y_card: a.y_card,
                c: a.c,
                gamma: a.gamma,
                kl: a.kl,
                delta: a.delta,
                empirical_margin_rate: a.empirical,
            })?;
            Ok(write_csv(output(a.out.as_deref())?, &[terms])?)
        }
    }
}
