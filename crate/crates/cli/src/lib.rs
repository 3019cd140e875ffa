//! The `psma` command line: simulate → fit → summarize → optimal-time →
//! waic → serve, plus single-patient what-if queries.

use std::fmt::Write as _;
use std::io::Write;
use std::net::SocketAddr;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use psma_core::ModelError;
use psma_io::report::{patient_report, rank_waic, summary_report, to_json, waic_entry, whatif_report};
use psma_io::{
    read_checkpoint, write_checkpoint, CohortFile, DecisionRequest, IoError, ModelConfig, OptimalTimeReport, PsaPoint,
    SampleStore, SummaryReport, WhatIfRequest,
};
use psma_sampler::{ChainConfig, Sampler, SamplerError};
use psma_simgen::{simulate_cohort, SimDesign, SimError};

#[derive(Debug, Parser)]
#[command(name = "psma", version, about = "PSA growth and PET-PSMA positivity: fitting and exam-time decisions")]
pub struct Cli {
    /// Base directory for relative file paths.
    #[arg(long, global = true, env = "PSMA_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort with known parameters.
    Simulate(SimulateArgs),
    /// Run the MCMC sampler and write a sample store.
    Fit(FitArgs),
    /// Posterior intervals, with coverage when the truth is known.
    Summarize(SummarizeArgs),
    /// Assurance curve and optimal exam time for one patient.
    OptimalTime(OptimalTimeArgs),
    /// Decision under hypothetical future PSA values.
    Whatif(WhatIfArgs),
    /// WAIC of one or more stores, best first.
    Waic(WaicArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 80)]
    pub m: usize,
    /// Extra pure-noise covariates (named noise1, noise2, ...).
    #[arg(long, default_value_t = 0)]
    pub noise: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    /// TOML model configuration; defaults to the simulation layout.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 150_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 100_000)]
    pub burnin: u64,
    #[arg(long, default_value_t = 10)]
    pub thin: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Update patients one after another instead of in parallel.
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint file, rewritten every `--checkpoint-every` sweeps.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub checkpoint_every: u64,
    /// Continue from the checkpoint file if it exists.
    #[arg(long, requires = "checkpoint")]
    pub resume: bool,
    /// No progress lines on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub samples: PathBuf,
    /// Cohort file with a truth section.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Also write every interval as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DecisionArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub patient: String,
    /// Positivity thresholds.
    #[arg(long = "pi-star", value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9])]
    pub pi_star: Vec<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub rho: f64,
    /// Grid step in months.
    #[arg(long, default_value_t = 0.5)]
    pub grid: f64,
    /// Search window after the last observation, in months.
    #[arg(long, default_value_t = 60.0)]
    pub horizon: f64,
    /// Assurance curves as CSV (pi_star, t, assurance, count).
    #[arg(long)]
    pub curve_csv: Option<PathBuf>,
    /// Trajectory band as CSV (pi_star, t, lo, median, hi).
    #[arg(long)]
    pub band_csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct OptimalTimeArgs {
    #[command(flatten)]
    pub decision: DecisionArgs,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[command(flatten)]
    pub decision: DecisionArgs,
    /// Hypothetical PSA value as `t:y` (months : ng/mL); repeatable.
    #[arg(long = "psa", value_parser = parse_point)]
    pub psa: Vec<PsaPoint>,
    /// Stored draws to condition on (K).
    #[arg(long, default_value_t = 200)]
    pub draws: usize,
    /// Sweeps per draw (L).
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct WaicArgs {
    /// Sample stores to compare; repeatable.
    #[arg(long, required = true)]
    pub samples: Vec<PathBuf>,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "PSMA_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

fn parse_point(s: &str) -> Result<PsaPoint, String> {
    let (t, y) = s.split_once(':').ok_or_else(|| format!("expected t:y, got {s:?}"))?;
    let t = t.trim().parse().map_err(|e| format!("bad time {t:?}: {e}"))?;
    let y = y.trim().parse().map_err(|e| format!("bad PSA {y:?}: {e}"))?;
    Ok(PsaPoint { t, y })
}

/// Failure class, which fixes the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Io,
    Numerical,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into() }
    }

    /// 2 validation, 3 I/O, 4 numerical fault.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Io => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn model_kind(e: &ModelError) -> ErrorKind {
    match e {
        ModelError::NonFinite { .. } => ErrorKind::Numerical,
        _ => ErrorKind::Validation,
    }
}

fn sampler_kind(e: &SamplerError) -> ErrorKind {
    match e {
        SamplerError::InvalidConfig(_) | SamplerError::Cancelled(_) => ErrorKind::Validation,
        SamplerError::Model(m) => model_kind(m),
        SamplerError::Initialization(_) | SamplerError::Numerical(_) => ErrorKind::Numerical,
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let kind = match &e {
            IoError::Io { .. } => ErrorKind::Io,
            IoError::Model(m) => model_kind(m),
            IoError::Sampler(s) => sampler_kind(s),
            _ => ErrorKind::Validation,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        Self { kind: sampler_kind(&e), message: e.to_string() }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self { kind: model_kind(&e), message: e.to_string() }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        Self::validation(e.to_string())
    }
}

fn write_err(e: std::io::Error) -> CliError {
    CliError { kind: ErrorKind::Io, message: format!("writing output: {e}") }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

struct Ctx {
    data_dir: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn write_text(&self, p: &Path, text: &str) -> Result<()> {
        let p = self.path(p);
        psma_io::fs::write_atomic(&p, text.as_bytes())?;
        Ok(())
    }
}

/// Runs one command, writing its report to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let ctx = Ctx { data_dir: cli.data_dir };
    match cli.command {
        Command::Simulate(a) => simulate(&ctx, a, out),
        Command::Fit(a) => fit(&ctx, a, out),
        Command::Summarize(a) => summarize(&ctx, a, out),
        Command::OptimalTime(a) => optimal_time(&ctx, a.decision, out),
        Command::Whatif(a) => whatif(&ctx, a, out),
        Command::Waic(a) => waic(&ctx, a, out),
        Command::Serve(a) => serve(&ctx, a),
    }
}

fn simulate(ctx: &Ctx, a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let design = SimDesign { m: a.m, noise_covariates: a.noise, ..SimDesign::with_seed(a.seed) };
    let file = simulate_cohort(&design)?.to_file();
    let path = ctx.path(&a.out);
    file.write(&path)?;
    writeln!(out, "wrote {} patients to {}", file.patients.len(), path.display()).map_err(write_err)
}

fn fit(ctx: &Ctx, a: FitArgs, out: &mut dyn Write) -> Result<()> {
    let cohort = CohortFile::read(&ctx.path(&a.cohort))?;
    let model = match &a.model {
        Some(p) => ModelConfig::read(&ctx.path(p))?,
        None => ModelConfig::default(),
    };
    let records = cohort.records(&model)?;
    let cfg = ChainConfig { parallel: !a.serial, ..ChainConfig::new(a.iters, a.burnin, a.thin, a.seed) };
    cfg.validate()?;
    let ckpt_path = a.checkpoint.as_ref().map(|p| ctx.path(p));

    let mut sampler = match &ckpt_path {
        Some(p) if a.resume && p.exists() => {
            let ckpt = read_checkpoint(p)?;
            if ckpt.config != cfg || ckpt.spec != model.spec() {
                return Err(CliError::validation(format!(
                    "{} was written for a different chain or model configuration",
                    p.display()
                )));
            }
            Sampler::resume(ckpt, &records)?
        }
        _ => Sampler::new(cfg, &records, model.spec())?,
    };
    let every = if ckpt_path.is_some() { a.checkpoint_every.max(1) } else { (cfg.iterations / 10).max(1) };
    let mut ckpt_err = None;
    sampler.run(every, |s| {
        if !a.quiet {
            eprintln!("iteration {}/{}  log posterior {:.3}", s.iteration(), cfg.iterations, s.log_posterior());
        }
        if let Some(p) = &ckpt_path {
            if let Err(e) = write_checkpoint(p, &s.checkpoint()) {
                ckpt_err = Some(e);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })
    .map_err(|e| match ckpt_err.take() {
        Some(io) => CliError::from(io),
        None => CliError::from(e),
    })?;

    let store = SampleStore::from_sampler(sampler, model)?;
    let path = ctx.path(&a.out);
    store.write(&path)?;
    let mut text = format!("wrote {} draws to {}\n", store.samples.len(), path.display());
    text.push_str(&acceptance_table(&store));
    out.write_all(text.as_bytes()).map_err(write_err)
}

fn rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn acceptance_table(store: &SampleStore) -> String {
    let mut s = String::from("acceptance        late burn-in  sampling\n");
    for r in &store.header.acceptance {
        let note = if r.adaptive { "" } else { "  (fixed proposal)" };
        let _ = writeln!(s, "{:<16}  {:>12}  {:>8}{note}", r.name, rate(r.late_burn_in), rate(r.sampling));
    }
    s
}

fn read_store(ctx: &Ctx, p: &Path) -> Result<SampleStore> {
    Ok(SampleStore::read(&ctx.path(p))?)
}

/// `2.5\%`-style column label for a tail probability.
fn pct_label(p: f64) -> String {
    let s = format!("{:.3}", 100.0 * p);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}\\%")
}

fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn summary_text(rep: &SummaryReport) -> String {
    let mut s = String::new();
    let lo = pct_label((1.0 - rep.level) / 2.0);
    let hi = pct_label((1.0 + rep.level) / 2.0);
    let _ = writeln!(s, "draws: {}", rep.draws);
    if let Some(cov) = &rep.coverage {
        let _ = writeln!(s, "\nResults on individual parameters ({} credible intervals)", pct_label(rep.level));
        let _ = writeln!(s, "Parameter & Coverage \\\\");
        for c in cov {
            let _ = writeln!(s, "{} & {:.2}\\% \\\\", c.name, c.percent);
        }
    }
    let _ = writeln!(s, "\nGlobal parameters");
    let _ = writeln!(s, "Parameter & {lo} & Mean & {hi} & Real \\\\");
    for g in &rep.globals {
        let real = g.truth.map_or_else(|| "-".to_string(), num);
        let _ = writeln!(s, "{} & {} & {} & {} & {real} \\\\", g.name, num(g.lo), num(g.mean), num(g.hi));
    }
    if let Some(n) = rep.globals_covered {
        let _ = writeln!(s, "\n{n} of {} true global values inside their intervals", rep.globals.len());
    }
    s
}

fn summary_csv(rep: &SummaryReport) -> String {
    let mut s = String::from("parameter,lo,mean,hi,real\n");
    let real = |t: Option<f64>| t.map_or_else(String::new, |v| v.to_string());
    for g in &rep.globals {
        let _ = writeln!(s, "{},{},{},{},{}", g.name, g.lo, g.mean, g.hi, real(g.truth));
    }
    for p in &rep.subjects {
        let _ = writeln!(s, "{}.{},{},{},{},{}", p.patient, p.field, p.lo, p.mean, p.hi, real(p.truth));
    }
    s
}

fn summarize(ctx: &Ctx, a: SummarizeArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::validation(format!("--level must lie in (0,1), got {}", a.level)));
    }
    let store = read_store(ctx, &a.samples)?;
    let truth = match &a.truth {
        Some(p) => {
            let file = CohortFile::read(&ctx.path(p))?;
            let section = file.truth.as_ref().ok_or_else(|| CliError::validation(format!("{} has no truth section", p.display())))?;
            if section.model != store.header.model {
                return Err(CliError::validation("truth was generated under a different model configuration than the store"));
            }
            file.truth_for(&store.header.patient_ids)?
        }
        None => None,
    };
    let rep = summary_report(&store.samples, truth.as_ref(), a.level)?;
    if let Some(p) = &a.csv {
        ctx.write_text(p, &summary_csv(&rep))?;
    }
    let text = if a.json { to_json(&rep) } else { summary_text(&rep) };
    out.write_all(text.as_bytes()).map_err(write_err)
}

fn decision_requests(a: &DecisionArgs) -> Vec<DecisionRequest> {
    a.pi_star
        .iter()
        .map(|&p| DecisionRequest { pi_star: p, rho: Some(a.rho), grid_step: Some(a.grid), horizon: Some(a.horizon) })
        .collect()
}

fn decision_text(reports: &[OptimalTimeReport]) -> String {
    let mut s = String::new();
    let Some(first) = reports.first() else { return s };
    let _ = writeln!(s, "patient {}", first.patient);
    let _ = writeln!(s, "draws {}, last observation at {} months", first.draws, first.earliest);
    let [lo, hi] = first.tau_interval;
    let _ = writeln!(s, "change point 95% interval [{lo:.2}, {hi:.2}] months");
    for r in reports {
        match (r.t_star, r.assurance_at_t_star) {
            (Some(t), Some(p)) => {
                let _ = writeln!(s, "pi* {:.2}  rho {:.2}  t* {t:.2} months (assurance {p:.4})", r.pi_star, r.rho);
            }
            _ => {
                let _ = writeln!(s, "pi* {:.2}  rho {:.2}  t* none within {} months", r.pi_star, r.rho, r.horizon);
            }
        }
    }
    s
}

fn write_decision_outputs(ctx: &Ctx, a: &DecisionArgs, reports: &[OptimalTimeReport], out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &a.curve_csv {
        let mut s = String::from("pi_star,t,assurance,count\n");
        for r in reports {
            for c in &r.curve {
                let _ = writeln!(s, "{},{},{},{}", r.pi_star, c.t, c.assurance, c.count);
            }
        }
        ctx.write_text(p, &s)?;
    }
    if let Some(p) = &a.band_csv {
        let mut s = String::from("pi_star,t,lo,median,hi\n");
        for r in reports {
            for b in &r.band {
                let _ = writeln!(s, "{},{},{},{},{}", r.pi_star, b.t, b.lo, b.median, b.hi);
            }
        }
        ctx.write_text(p, &s)?;
    }
    let text = match (a.json, reports) {
        (true, [one]) => to_json(one),
        (true, many) => to_json(&many),
        (false, _) => decision_text(reports),
    };
    out.write_all(text.as_bytes()).map_err(write_err)
}

fn optimal_time(ctx: &Ctx, a: DecisionArgs, out: &mut dyn Write) -> Result<()> {
    let store = read_store(ctx, &a.samples)?;
    let cohort = CohortFile::read(&ctx.path(&a.cohort))?;
    let reports = decision_requests(&a)
        .iter()
        .map(|d| Ok(patient_report(&store, &cohort, &a.patient, &d.config()?)?))
        .collect::<Result<Vec<_>>>()?;
    write_decision_outputs(ctx, &a, &reports, out)
}

fn whatif(ctx: &Ctx, a: WhatIfArgs, out: &mut dyn Write) -> Result<()> {
    let store = read_store(ctx, &a.decision.samples)?;
    let cohort = CohortFile::read(&ctx.path(&a.decision.cohort))?;
    let mut reports = Vec::new();
    for decision in decision_requests(&a.decision) {
        let req = WhatIfRequest {
            decision,
            psa: a.psa.clone(),
            draws: Some(a.draws),
            sweeps: Some(a.sweeps),
            seed: Some(a.seed),
        };
        reports.push(whatif_report(&store, &cohort, &a.decision.patient, &req)?);
    }
    if a.decision.json {
        let text = match reports.as_slice() {
            [one] => to_json(one),
            many => to_json(&many),
        };
        return out.write_all(text.as_bytes()).map_err(write_err);
    }
    let plain: Vec<OptimalTimeReport> = reports.into_iter().map(|r| r.report).collect();
    write_decision_outputs(ctx, &a.decision, &plain, out)
}

fn waic(ctx: &Ctx, a: WaicArgs, out: &mut dyn Write) -> Result<()> {
    let cohort = CohortFile::read(&ctx.path(&a.cohort))?;
    let mut entries = Vec::new();
    for p in &a.samples {
        let store = read_store(ctx, p)?;
        entries.push(waic_entry(&p.display().to_string(), &store, &cohort)?);
    }
    let ranked = rank_waic(entries);
    let text = if a.json {
        to_json(&ranked)
    } else {
        let mut s = String::from("rank  waic  lppd  p_waic  store\n");
        for (k, e) in ranked.iter().enumerate() {
            let _ = writeln!(s, "{}  {:.6}  {:.6}  {:.6}  {}", k + 1, e.waic, e.lppd, e.p_waic, e.label);
        }
        s
    };
    out.write_all(text.as_bytes()).map_err(write_err)
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError { kind: ErrorKind::Io, message: e.to_string() })?;
    rt.block_on(psma_service::serve(a.bind, ctx.data_dir.clone()))
        .map_err(|e| CliError { kind: ErrorKind::Io, message: e.to_string() })
}
