//! `lora-dp`: ingestion, SVD perturbation experiments, privacy budgets and
//! reports from the command line. Every run writes its CSV artefacts and a
//! key-sorted `config.echo` into `--out`.

mod input;
mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use lora_dp::dp::{dp_check, dp_params, typicalize, DpCheckConfig};
use lora_dp::fkv::{fkv_quality, modfkv, FkvParams, VectorNormalization};
use lora_dp::perturb::{
    core_lemma_table, global_norm_table, row_norm_table, run_flip_trials, FlipDirection, FlipTrial,
    SweepConfig,
};
use lora_dp::randmat::{srec_test, MarcenkoPastur, Side};
use lora_dp::recommender::{backend_row, is_typical, recommend, typicality, typicality_binary, Backend, RowPath};
use lora_dp::{svd, svd_sparse, RowAccess, SeededRng, SvdFactorization};

use input::{Input, InputArgs};

pub type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

/// Dense experiments above this many cells need `--max-dense`.
const DEFAULT_MAX_DENSE: usize = 4_000_000;

#[derive(Parser, Debug)]
#[command(name = "lora-dp", version, about = "Low-rank recommendation privacy experiments")]
struct Cli {
    /// Directory receiving CSV artefacts and `config.echo`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = lora_dp::rng::DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for trial-parallel experiments.
    #[arg(long, global = true, env = "LORA_DP_THREADS")]
    threads: Option<usize>,
    /// Largest matrix (in cells) an experiment may densify.
    #[arg(long, global = true, default_value_t = DEFAULT_MAX_DENSE)]
    max_dense: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a data file and write it back as CSV triplets.
    Ingest(InputOnly),
    /// Print m, n, η and density.
    Stats(InputOnly),
    /// Truncated SVD, one CSV line per triplet.
    Svd(SvdArgs),
    /// Sample products for a user from the rank-k approximation.
    Recommend(RecommendArgs),
    /// Classify users by squared row norm.
    Typicality(GammaArgs),
    /// Perturbation magnitude sweep over k.
    Perturb(SweepArgs),
    /// Row-change sweep over k.
    Rownorm(SweepArgs),
    /// Global-against-row change sweep over k.
    Globalnorm(SweepArgs),
    /// Singular-vector rows against SProj.
    Srec(SrecArgs),
    /// Marcenko–Pastur density, optionally against an input spectrum.
    Mp(MpArgs),
    /// Closed-form (ε, δ) budget.
    DpParams(DpParamsArgs),
    /// Empirical check of the privacy inequality over random flips.
    DpCheck(DpCheckArgs),
    /// Sampling-based low-rank sketch.
    Fkv(FkvArgs),
    /// Repair atypical users by adding or removing records.
    Typicalize(GammaArgs),
    /// Markdown summary of the CSVs in a directory.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct InputOnly {
    #[command(flatten)]
    input: InputArgs,
}

#[derive(Args, Debug)]
struct SvdArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    rank: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendKind {
    Exact,
    Fkv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathKind {
    Quantum,
    Classical,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Normalization {
    Wnorm,
    Snorm,
    Orthonormal,
}

impl From<Normalization> for VectorNormalization {
    fn from(n: Normalization) -> Self {
        match n {
            Normalization::Wnorm => VectorNormalization::WNorm,
            Normalization::Snorm => VectorNormalization::SNorm,
            Normalization::Orthonormal => VectorNormalization::Orthonormal,
        }
    }
}

#[derive(Args, Debug)]
struct FkvOptions {
    /// Singular-value threshold.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Constant in the sample-size formula.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long)]
    q_cap: Option<usize>,
    #[arg(long, value_enum, default_value = "wnorm")]
    normalization: Normalization,
}

impl FkvOptions {
    fn params(&self) -> CliResult<FkvParams> {
        let sigma = self.sigma.ok_or("the fkv backend needs --sigma")?;
        let mut p = FkvParams::new(sigma, self.eps, self.kappa).with_normalization(self.normalization.into());
        p.c = self.c;
        if let Some(cap) = self.q_cap {
            p = p.with_q_cap(cap);
        }
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct RecommendArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    user: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    #[arg(long, value_enum, default_value = "exact")]
    backend: BackendKind,
    #[arg(long, value_enum, default_value = "quantum")]
    path: PathKind,
    #[command(flatten)]
    fkv: FkvOptions,
}

#[derive(Args, Debug)]
struct GammaArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Direction {
    Add,
    Remove,
}

impl From<Direction> for FlipDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Add => FlipDirection::Add,
            Direction::Remove => FlipDirection::Remove,
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10,11,12,13,14,15")]
    k_list: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// SVD rank kept per factorization; defaults to the largest k.
    #[arg(long)]
    svd_rank: Option<usize>,
    #[arg(long, value_enum, default_value = "add")]
    direction: Direction,
    /// Concentration band width, in units of Σ(k).
    #[arg(long, default_value_t = lora_dp::perturb::CHEBYSHEV_T95)]
    band_t: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SideKind {
    Left,
    Right,
}

#[derive(Args, Debug)]
struct SrecArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "right")]
    side: SideKind,
    /// Number of rows pooled, drawn without replacement.
    #[arg(long, default_value_t = 30)]
    rows: usize,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    /// Factorization rank; defaults to min(m, n).
    #[arg(long)]
    rank: Option<usize>,
}

#[derive(Args, Debug)]
struct MpArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Aspect ratio n/m; taken from the input when one is given.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Support widening used when counting spectrum inside it.
    #[arg(long, default_value_t = 0.1)]
    inflate: f64,
}

#[derive(Args, Debug)]
struct DpParamsArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Args, Debug)]
struct DpCheckArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, value_enum, default_value = "add")]
    direction: Direction,
    /// Compare each matrix with itself instead of its flipped neighbour.
    #[arg(long)]
    control: bool,
}

#[derive(Args, Debug)]
struct FkvArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    fkv: FkvOptions,
    /// Also compare against the exact rank-k factorization.
    #[arg(long)]
    quality_k: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding the CSVs; defaults to --out.
    #[arg(long)]
    from: Option<PathBuf>,
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    max_dense: usize,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()).into())
    }

    fn rng(&self, stream: u64) -> SeededRng {
        SeededRng::new(self.seed, stream)
    }

    fn guard_dense(&self, (m, n): (usize, usize)) -> CliResult<()> {
        if m.saturating_mul(n) > self.max_dense {
            return Err(format!(
                "{m}x{n} = {} cells exceeds --max-dense {}; raise it to proceed",
                m * n,
                self.max_dense
            )
            .into());
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err("--threads must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display()))?;
    let ctx = Ctx {
        out: cli.out.clone(),
        seed: cli.seed,
        max_dense: cli.max_dense,
    };
    ctx.write("config.echo", &config_echo(matches))?;

    match &cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, &a.input),
        Command::Stats(a) => cmd_stats(&ctx, &a.input),
        Command::Svd(a) => cmd_svd(&ctx, a),
        Command::Recommend(a) => cmd_recommend(&ctx, a),
        Command::Typicality(a) => cmd_typicality(&ctx, a),
        Command::Perturb(a) => cmd_sweep(&ctx, a, SweepKind::Core),
        Command::Rownorm(a) => cmd_sweep(&ctx, a, SweepKind::Row),
        Command::Globalnorm(a) => cmd_sweep(&ctx, a, SweepKind::Global),
        Command::Srec(a) => cmd_srec(&ctx, a),
        Command::Mp(a) => cmd_mp(&ctx, a),
        Command::DpParams(a) => cmd_dp_params(&ctx, a),
        Command::DpCheck(a) => cmd_dp_check(&ctx, a),
        Command::Fkv(a) => cmd_fkv(&ctx, a),
        Command::Typicalize(a) => cmd_typicalize(&ctx, a),
        Command::Report(a) => {
            let dir = a.from.clone().unwrap_or_else(|| ctx.out.clone());
            let md = report::render(&dir)?;
            ctx.write("report.md", &md)?;
            println!("wrote {}", ctx.out.join("report.md").display());
            Ok(())
        }
    }
}

/// Every argument of the invocation, defaults included, one `key=value`
/// per line in key order.
fn config_echo(matches: &ArgMatches) -> String {
    let command = Cli::command();
    let mut entries = BTreeMap::new();
    collect_args(&command, matches, &mut entries);
    if let Some((name, sub)) = matches.subcommand() {
        entries.insert("command".to_string(), name.to_string());
        if let Some(def) = command.find_subcommand(name) {
            collect_args(def, sub, &mut entries);
        }
    }
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

fn collect_args(def: &clap::Command, matches: &ArgMatches, entries: &mut BTreeMap<String, String>) {
    for arg in def.get_arguments() {
        let key = arg.get_id().as_str();
        if let Ok(Some(values)) = matches.try_get_raw(key) {
            let value = values
                .map(|v| v.to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join(",");
            entries.insert(key.to_string(), value);
        }
    }
}

fn cmd_ingest(ctx: &Ctx, args: &InputArgs) -> CliResult<()> {
    let input = args.load(ctx.seed)?;
    let t = input.binary("ingest")?;
    ctx.write("matrix.csv", &t.to_csv_triplets())?;
    println!("{}", stats_line(t)?);
    Ok(())
}

fn stats_line(t: &lora_dp::PreferenceMatrix) -> CliResult<String> {
    let s = t.stats()?;
    Ok(format!("m={} n={} eta={:.1} density={:.3}", s.m, s.n, s.eta, s.density))
}

fn cmd_stats(ctx: &Ctx, args: &InputArgs) -> CliResult<()> {
    let input = args.load(ctx.seed)?;
    let t = input.binary("stats")?;
    let s = t.stats()?;
    ctx.write(
        "stats.csv",
        &format!("m,n,nnz,eta,density\n{},{},{},{},{}\n", s.m, s.n, s.nnz, s.eta, s.density),
    )?;
    println!("{}", stats_line(t)?);
    Ok(())
}

fn factorize(ctx: &Ctx, input: &Input, rank: usize) -> CliResult<SvdFactorization> {
    Ok(match input {
        Input::Binary(t) => {
            if t.m().saturating_mul(t.n()) <= ctx.max_dense {
                svd(&t.to_dense(), rank)?
            } else {
                svd_sparse(t, rank)?
            }
        }
        Input::Dense(t) => svd(t, rank)?,
    })
}

fn cmd_svd(ctx: &Ctx, a: &SvdArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let f = factorize(ctx, &input, a.rank)?;
    ctx.write("svd.csv", &f.to_csv())?;
    let sig: Vec<String> = f.sigma().iter().map(|s| format!("{s:.6}")).collect();
    println!("rank={} sigma={}", f.rank(), sig.join(","));
    Ok(())
}

fn row_access(input: &Input) -> &dyn RowAccess {
    match input {
        Input::Binary(t) => t,
        Input::Dense(t) => t,
    }
}

fn cmd_recommend(ctx: &Ctx, a: &RecommendArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let matrix = row_access(&input);
    let path = match a.path {
        PathKind::Quantum => RowPath::Quantum,
        PathKind::Classical => RowPath::Classical,
    };
    let exact;
    let sketch;
    let backend = match a.backend {
        BackendKind::Exact => {
            exact = factorize(ctx, &input, a.k)?;
            Backend::Exact(&exact)
        }
        BackendKind::Fkv => {
            sketch = modfkv(matrix, &a.fkv.params()?, &mut ctx.rng(1))?;
            Backend::Fkv(&sketch)
        }
    };
    let row = backend_row(matrix, a.user, a.k, backend, path)?;
    let total = row.norm_squared();
    if !(total > 0.0) {
        return Err(lora_dp::Error::ColdUser { user: a.user, k: a.k }.into());
    }
    let mut dist = String::from("product,probability\n");
    for (j, x) in row.iter().enumerate() {
        let _ = writeln!(dist, "{j},{}", x * x / total);
    }
    ctx.write("distribution.csv", &dist)?;

    let mut rng = ctx.rng(0);
    let mut recs = String::from("sample,user,product\n");
    for s in 0..a.samples {
        let r = recommend(matrix, a.user, a.k, &mut rng, backend, path)?;
        let _ = writeln!(recs, "{s},{},{}", a.user, r.product);
        if s == 0 {
            println!("product={}", r.product);
        }
    }
    ctx.write("recommendations.csv", &recs)?;
    Ok(())
}

fn cmd_typicality(ctx: &Ctx, a: &GammaArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let report = match &input {
        Input::Binary(t) => typicality_binary(t, a.gamma)?,
        Input::Dense(t) => typicality(t, a.gamma)?,
    };
    ctx.write("typicality.csv", &report.to_csv())?;
    let gt = report
        .gamma_tilde
        .map_or_else(|| "undefined".to_string(), |g| g.to_string());
    println!(
        "eta={} typical={}/{} gamma_tilde={gt}",
        report.eta,
        report.typical_count(),
        report.per_user.len()
    );
    Ok(())
}

#[derive(Clone, Copy)]
enum SweepKind {
    Core,
    Row,
    Global,
}

fn trials_csv(trials: &[FlipTrial]) -> String {
    let mut out = String::from(
        "trial,i,j,direction,k,delta_k,delta_ij_k,argmax_at_flip,f_k,sigma_k,row_change_sq,global_change,capture_fraction\n",
    );
    for t in trials {
        for m in &t.measurements {
            let capture = m.capture_fraction.map_or_else(String::new, |c| c.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{capture}",
                t.trial,
                t.flip.i,
                t.flip.j,
                t.flip.direction.as_str(),
                m.k,
                m.delta_k,
                m.delta_ij_k,
                u8::from(m.argmax_at_flip),
                m.f_k,
                m.sigma_k_bound,
                m.row_change_sq,
                m.global_change
            );
        }
    }
    out
}

fn load_for_trials(ctx: &Ctx, input: &InputArgs) -> CliResult<Option<Input>> {
    if input.synthetic {
        ctx.guard_dense((input.synthetic_m, input.synthetic_n))?;
        return Ok(None);
    }
    let loaded = input.load(ctx.seed)?;
    ctx.guard_dense(loaded.shape())?;
    Ok(Some(loaded))
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs, kind: SweepKind) -> CliResult<()> {
    let loaded = load_for_trials(ctx, &a.input)?;
    let source = a.input.trial_source(&loaded, ctx.seed);
    let mut config = SweepConfig::new(a.k_list.clone(), a.trials, ctx.seed);
    config.svd_rank = a.svd_rank;
    config.direction = a.direction.into();
    let trials = run_flip_trials(source, &config)?;
    ctx.write("trials.csv", &trials_csv(&trials))?;
    let (name, csv) = match kind {
        SweepKind::Core => ("core_lemma.csv", core_lemma_table(&a.k_list, &trials, a.band_t).to_csv()),
        SweepKind::Row => ("row_norm.csv", row_norm_table(&a.k_list, source.shape().1, &trials).to_csv()),
        SweepKind::Global => ("global_norm.csv", global_norm_table(&a.k_list, &trials).to_csv()),
    };
    ctx.write(name, &csv)?;
    println!("wrote {} ({} trials)", ctx.out.join(name).display(), trials.len());
    Ok(())
}

fn cmd_srec(ctx: &Ctx, a: &SrecArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let (m, n) = input.shape();
    ctx.guard_dense((m, n))?;
    let f = factorize(ctx, &input, a.rank.unwrap_or(m.min(n)))?;
    let (side, dim) = match a.side {
        SideKind::Left => (Side::LeftRows, m),
        SideKind::Right => (Side::RightRows, n),
    };
    if a.rows > dim {
        return Err(format!("--rows {} exceeds the {dim} available", a.rows).into());
    }
    let rows = partial_shuffle(dim, a.rows, &mut ctx.rng(2));
    let report = srec_test(&f, side, &rows, a.bins)?;
    ctx.write("srec_histogram.csv", &report.histogram_csv())?;
    ctx.write("srec_ks.csv", &report.ks_csv())?;
    println!(
        "pooled_ks={} partial_mass_expected={} partial_mass_observed={}",
        report.pooled_ks, report.partial_mass_expected, report.partial_mass_observed
    );
    Ok(())
}

/// First `take` entries of a seeded Fisher–Yates shuffle of `0..len`.
fn partial_shuffle(len: usize, take: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    for s in 0..take {
        let pick = s + rng.below(len - s);
        idx.swap(s, pick);
    }
    idx.truncate(take);
    idx
}

fn cmd_mp(ctx: &Ctx, a: &MpArgs) -> CliResult<()> {
    let spectrum = if a.input.is_given() {
        let input = a.input.load(ctx.seed)?;
        let (m, n) = input.shape();
        ctx.guard_dense((m, n))?;
        let f = factorize(ctx, &input, m.min(n))?;
        let scale = (m as f64).sqrt();
        Some((n as f64 / m as f64, f.sigma().iter().map(|s| s / scale).collect::<Vec<_>>()))
    } else {
        None
    };
    let alpha = match (a.alpha, &spectrum) {
        (Some(alpha), _) => alpha,
        (None, Some((alpha, _))) => *alpha,
        (None, None) => 1.0,
    };
    let mp = MarcenkoPastur::new(alpha)?;
    if a.points < 2 {
        return Err("--points must be at least 2".into());
    }
    let (lo, hi) = mp.support();
    let mut density = String::from("x,pdf\n");
    for p in 0..a.points {
        let x = lo + (hi - lo) * p as f64 / (a.points - 1) as f64;
        let _ = writeln!(density, "{x},{}", mp.pdf(x));
    }
    ctx.write("mp_density.csv", &density)?;
    let mut line = format!("alpha={alpha} support={lo},{hi} mass={}", mp.total_mass(1e-10));
    if let Some((_, values)) = spectrum {
        let mut csv = String::from("index,scaled_sigma\n");
        for (i, v) in values.iter().enumerate() {
            let _ = writeln!(csv, "{i},{v}");
        }
        ctx.write("mp_spectrum.csv", &csv)?;
        let _ = write!(line, " inside={}", mp.fraction_inside(&values, a.inflate));
    }
    println!("{line}");
    Ok(())
}

fn cmd_dp_params(ctx: &Ctx, a: &DpParamsArgs) -> CliResult<()> {
    let b = dp_params(a.m, a.n, a.k, a.eta, a.gamma)?;
    ctx.write(
        "dp_params.csv",
        &format!(
            "m,n,k,eta,gamma,gamma_tilde,epsilon,delta\n{},{},{},{},{},{},{},{}\n",
            b.m, b.n, b.k, b.eta, b.gamma, b.gamma_tilde, b.epsilon, b.delta
        ),
    )?;
    println!("epsilon={} delta={} gamma_tilde={}", b.epsilon, b.delta, b.gamma_tilde);
    Ok(())
}

fn cmd_dp_check(ctx: &Ctx, a: &DpCheckArgs) -> CliResult<()> {
    let loaded = load_for_trials(ctx, &a.input)?;
    let source = a.input.trial_source(&loaded, ctx.seed);
    let mut config = DpCheckConfig::new(a.k, a.gamma, a.trials, ctx.seed);
    config.direction = a.direction.into();
    config.apply_flip = !a.control;
    let report = dp_check(source, &config)?;
    ctx.write("dp_violations.csv", &report.to_csv())?;
    println!(
        "violation_rate={} violated_pairs={}/{} violated_trials={}/{} worst_ratio={}",
        report.violation_rate(),
        report.violation_count,
        report.checked_pairs,
        report.violated_trials,
        report.trials,
        report.worst_ratio
    );
    Ok(())
}

fn cmd_fkv(ctx: &Ctx, a: &FkvArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let matrix = row_access(&input);
    let sketch = modfkv(matrix, &a.fkv.params()?, &mut ctx.rng(1))?;
    ctx.write("fkv.csv", &sketch.to_csv())?;
    println!("q={} rank={} k_budget={}", sketch.q, sketch.rank(), sketch.k_budget);
    if let Some(k) = a.quality_k {
        ctx.guard_dense(input.shape())?;
        let exact = factorize(ctx, &input, k)?;
        let q = fkv_quality(&sketch, &exact, k)?;
        let largest = q.principal_angles.last().copied().unwrap_or(0.0);
        ctx.write(
            "fkv_quality.csv",
            &format!(
                "k,projector_residual,span_residual,max_principal_angle\n{k},{},{},{largest}\n",
                q.projector_residual, q.span_residual
            ),
        )?;
        println!("projector_residual={} span_residual={}", q.projector_residual, q.span_residual);
    }
    Ok(())
}

fn cmd_typicalize(ctx: &Ctx, a: &GammaArgs) -> CliResult<()> {
    let input = a.input.load(ctx.seed)?;
    let t = input.binary("typicalize")?;
    let result = typicalize(t, a.gamma, &mut ctx.rng(3))?;
    ctx.write("typicalized.csv", &result.matrix.to_csv_triplets())?;
    // Audit against the frozen input η the pass targeted.
    let mut audit = String::from("user,row_norm_sq,is_typical\n");
    let mut typical = 0;
    for (i, count) in result.matrix.row_counts().into_iter().enumerate() {
        let ok = is_typical(count as f64, result.eta, a.gamma);
        typical += usize::from(ok);
        let _ = writeln!(audit, "{i},{count},{}", u8::from(ok));
    }
    ctx.write("typicality.csv", &audit)?;
    println!(
        "eta={} added={} removed={} typical_after={typical}/{}",
        result.eta,
        result.added,
        result.removed,
        result.matrix.m()
    );
    Ok(())
}
