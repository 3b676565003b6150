//! `fraccount` — scriptable front end for the counting-process library.
//!
//! Every subcommand emits CSV (17 significant digits) or JSON with an
//! embedded metadata block, so seeded invocations are byte-reproducible.
//! Parameter precedence: values from a `--config` JSON file override flags,
//! and flags override built-in defaults.
//!
//! Exit codes: 0 success, 2 domain/usage error, 3 numeric failure,
//! 4 statistical check failure (`validate` only).

use std::fmt::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use fraccount::montecarlo::{compare_pmf, sample_clock_paths, simulate_model, McConfig};
use fraccount::processes::{pmf_table, GcpParams, PmfModel, TableOpts, TimeChange};
use fraccount::risk::{phi_curve, simulate_ruin, RiskModel};
use fraccount::specialfn::{ml, MlSpec, SeriesControl};
use fraccount::{Error as LibError, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "fraccount",
    version,
    about = "Counting processes on random clocks: pmf tables, generating \
             functions, simulation, and ruin probabilities",
    after_help = "Parameter precedence: --config JSON overrides flags; flags \
                  override defaults. FRACCOUNT_THREADS sets the worker pool \
                  when --threads is absent."
)]
struct Cli {
    /// Worker threads for simulate/validate/ruin (default: logical cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a (multi-parameter) Mittag-Leffler function
    Ml(MlArgs),
    /// Tabulate P(process = n) for a model
    Pmf(PmfArgs),
    /// Probability generating function of the pair-clock process
    Pgf(PgfArgs),
    /// Simulate the process and emit the empirical pmf
    Simulate(SimulateArgs),
    /// Simulate, compare against the analytic pmf, and gate on TV/χ²
    Validate(ValidateArgs),
    /// Non-ruin probability curve, optionally with a Monte Carlo column
    Ruin(RuinArgs),
    /// Dump discretized clock paths
    Paths(PathsArgs),
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct OutputArgs {
    /// JSON parameter file; its values override command-line flags
    #[arg(long, value_name = "FILE")]
    #[serde(skip)]
    config: Option<String>,
    /// Output file (default: stdout)
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct ModelArgs {
    /// gcp | frac-poisson | frac-gcp | tc-poisson | tc-gcp | general | tempered
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated jump rates λ_1,…,λ_k
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    rates: Option<String>,
    /// Single-stream rate (shorthand for --rates with one entry)
    #[arg(long = "Lambda", value_name = "RATE")]
    #[serde(rename = "Lambda")]
    big_lambda: Option<f64>,
    /// Stability order of the clock
    #[arg(long)]
    nu: Option<f64>,
    /// Pair-clock tilt λ
    #[arg(long)]
    lam: Option<f64>,
    /// Tempered clock order
    #[arg(long)]
    alpha: Option<f64>,
    /// Tempering rate
    #[arg(long)]
    rho: Option<f64>,
    /// General clock exponent terms "mu:order,mu:order"
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    terms: Option<String>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct McArgs {
    /// Number of simulated paths
    #[arg(long)]
    paths: Option<u64>,
    /// RNG seed (every path derives its own stream)
    #[arg(long)]
    seed: Option<u64>,
    /// Initial clock-path horizon as a multiple of t
    #[arg(long)]
    horizon_factor: Option<f64>,
    /// Clock-path grid spacing relative to the horizon
    #[arg(long)]
    dt_rel: Option<f64>,
}

impl McArgs {
    fn to_config(&self) -> McConfig {
        let d = McConfig::default();
        McConfig {
            n_paths: self.paths.unwrap_or(d.n_paths),
            seed: self.seed.unwrap_or(d.seed),
            horizon_factor: self.horizon_factor.unwrap_or(d.horizon_factor),
            dt_rel: self.dt_rel.unwrap_or(d.dt_rel),
        }
    }

    fn describe(&self) -> String {
        let cfg = self.to_config();
        format!(
            "paths={} seed={} horizon_factor={} dt_rel={}",
            cfg.n_paths, cfg.seed, cfg.horizon_factor, cfg.dt_rel
        )
    }
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct MlArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    #[arg(long)]
    alpha: Option<f64>,
    /// Second parameter (default 1)
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated upper parameters (default: all ones)
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    gammas: Option<String>,
    /// Comma-separated arguments, one per upper parameter
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    z: Option<String>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct PmfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[arg(long)]
    t: Option<f64>,
    /// Tabulate exactly n = 0..=nmax instead of adapting to the mass target
    #[arg(long)]
    nmax: Option<usize>,
    /// Adaptive truncation target (default 1 − 1e-5)
    #[arg(long)]
    target_mass: Option<f64>,
    /// Adaptive truncation cap (default 200)
    #[arg(long)]
    n_cap: Option<usize>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct PgfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    /// Comma-separated jump rates
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    rates: Option<String>,
    #[arg(long = "Lambda", value_name = "RATE")]
    #[serde(rename = "Lambda")]
    big_lambda: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    lam: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    /// Comma-separated evaluation points in [−1, 1]
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    u: Option<String>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    mc: McArgs,
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct ValidateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    mc: McArgs,
    #[arg(long)]
    t: Option<f64>,
    /// Fail (exit 4) if total variation reaches this (default 0.01)
    #[arg(long)]
    tv_max: Option<f64>,
    /// Fail (exit 4) if the χ² p-value falls to this (default 0.01)
    #[arg(long)]
    p_min: Option<f64>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct RuinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    /// Premium rate
    #[arg(long)]
    c: Option<f64>,
    /// Comma-separated jump rates
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    rates: Option<String>,
    /// Gamma claim shape per unit jump
    #[arg(long)]
    claim_r: Option<f64>,
    /// Gamma claim rate parameter
    #[arg(long)]
    claim_a: Option<f64>,
    #[arg(long)]
    umax: Option<f64>,
    /// Grid step (must satisfy h ≤ 0.01·min(1, 1/a))
    #[arg(long)]
    h: Option<f64>,
    /// Convolution series term cap (default 64)
    #[arg(long)]
    series_cap: Option<usize>,
    /// If set, add simulated columns at the --mc-at capitals
    #[arg(long)]
    mc_paths: Option<u64>,
    /// Comma-separated u values for the Monte Carlo column (default 0,1,2,5)
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    mc_at: Option<String>,
    /// Simulation horizon (default 500)
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Deserialize, Default, Clone)]
#[serde(default, rename_all = "kebab-case")]
struct PathsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
    /// stable-pair | tempered-pair | general
    #[arg(long)]
    clock: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    lam: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_name = "LIST")]
    terms: Option<String>,
    /// Operational-time horizon (default 10)
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid spacing relative to the horizon (default 1e-3)
    #[arg(long)]
    dt_rel: Option<f64>,
    #[arg(long)]
    n_paths: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

enum CliError {
    Usage(String),
    Lib(LibError),
    Stat(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) if e.is_domain() => 2,
            CliError::Lib(_) => 3,
            CliError::Stat(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Lib(e) => e.to_string(),
            CliError::Stat(m) => m.clone(),
        }
    }
}

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        CliError::Lib(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Copy every present field of `src` over `dst` — config beats flags.
macro_rules! overlay {
    ($dst:expr, $src:expr; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Option<String>) -> Result<Option<T>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {path}: {e}")))?;
    let cfg = serde_json::from_str(&text)
        .map_err(|e| usage(format!("config {path} is not valid JSON for this subcommand: {e}")))?;
    Ok(Some(cfg))
}

fn overlay_output(dst: &mut OutputArgs, src: &OutputArgs) {
    overlay!(dst, src; out, format);
}

fn overlay_model(dst: &mut ModelArgs, src: &ModelArgs) {
    overlay!(dst, src; model, rates, big_lambda, nu, lam, alpha, rho, terms);
}

fn overlay_mc(dst: &mut McArgs, src: &McArgs) {
    overlay!(dst, src; paths, seed, horizon_factor, dt_rel);
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{what}: cannot parse '{p}' as a number")))
        })
        .collect()
}

fn parse_terms(text: &str) -> Result<Vec<(f64, f64)>, CliError> {
    text.split(',')
        .map(|pair| {
            let mut it = pair.split(':');
            let (Some(mu), Some(order), None) = (it.next(), it.next(), it.next()) else {
                return Err(usage(format!("--terms: expected 'mu:order', got '{pair}'")));
            };
            let mu = mu
                .trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--terms: bad weight '{mu}'")))?;
            let order = order
                .trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--terms: bad order '{order}'")))?;
            Ok((mu, order))
        })
        .collect()
}

impl ModelArgs {
    fn jump_rates(&self) -> Result<Vec<f64>, CliError> {
        match (&self.rates, self.big_lambda) {
            (Some(_), Some(_)) => Err(usage("give either --rates or --Lambda, not both")),
            (Some(list), None) => parse_f64_list(list, "--rates"),
            (None, Some(lam)) => Ok(vec![lam]),
            (None, None) => Err(usage("need jump rates: --rates LIST or --Lambda RATE")),
        }
    }

    fn forbid(&self, field: bool, name: &str, kind: &str) -> Result<(), CliError> {
        if field {
            Err(usage(format!("--{name} does not apply to --model {kind}")))
        } else {
            Ok(())
        }
    }

    fn need(&self, v: Option<f64>, name: &str, kind: &str) -> Result<f64, CliError> {
        v.ok_or_else(|| usage(format!("--model {kind} requires --{name}")))
    }

    fn build(&self) -> Result<PmfModel, CliError> {
        let kind = self
            .model
            .as_deref()
            .ok_or_else(|| usage("--model is required"))?;
        let params = GcpParams::new(self.jump_rates()?)?;
        let clock = match kind {
            "gcp" => {
                self.forbid(self.nu.is_some(), "nu", kind)?;
                self.forbid(self.lam.is_some(), "lam", kind)?;
                self.forbid(self.alpha.is_some(), "alpha", kind)?;
                self.forbid(self.rho.is_some(), "rho", kind)?;
                self.forbid(self.terms.is_some(), "terms", kind)?;
                None
            }
            "frac-poisson" | "frac-gcp" => {
                self.forbid(self.lam.is_some(), "lam", kind)?;
                self.forbid(self.alpha.is_some(), "alpha", kind)?;
                self.forbid(self.rho.is_some(), "rho", kind)?;
                self.forbid(self.terms.is_some(), "terms", kind)?;
                let nu = self.need(self.nu, "nu", kind)?;
                if !(nu > 0.0 && nu <= 1.0) {
                    return Err(usage(format!("--model {kind} needs ν ∈ (0, 1], got {nu}")));
                }
                // a single ν-stable clock is the λ = 0 degenerate pair clock
                // of half the order
                Some(TimeChange::StablePair { nu: nu / 2.0, lambda: 0.0 })
            }
            "tc-poisson" | "tc-gcp" => {
                self.forbid(self.alpha.is_some(), "alpha", kind)?;
                self.forbid(self.rho.is_some(), "rho", kind)?;
                self.forbid(self.terms.is_some(), "terms", kind)?;
                Some(TimeChange::StablePair {
                    nu: self.need(self.nu, "nu", kind)?,
                    lambda: self.need(self.lam, "lam", kind)?,
                })
            }
            "tempered" => {
                self.forbid(self.nu.is_some(), "nu", kind)?;
                self.forbid(self.lam.is_some(), "lam", kind)?;
                self.forbid(self.terms.is_some(), "terms", kind)?;
                Some(TimeChange::TemperedPair {
                    alpha: self.need(self.alpha, "alpha", kind)?,
                    rho: self.need(self.rho, "rho", kind)?,
                })
            }
            "general" => {
                self.forbid(self.nu.is_some(), "nu", kind)?;
                self.forbid(self.lam.is_some(), "lam", kind)?;
                self.forbid(self.alpha.is_some(), "alpha", kind)?;
                self.forbid(self.rho.is_some(), "rho", kind)?;
                let terms = self
                    .terms
                    .as_deref()
                    .ok_or_else(|| usage("--model general requires --terms"))?;
                Some(TimeChange::General { terms: parse_terms(terms)? })
            }
            other => {
                return Err(usage(format!(
                    "unknown model '{other}' (expected gcp, frac-poisson, frac-gcp, \
                     tc-poisson, tc-gcp, general, or tempered)"
                )))
            }
        };
        let model = PmfModel { params, clock };
        if let Some(tc) = &model.clock {
            tc.validate()?;
        }
        Ok(model)
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.model {
            let _ = write!(s, "model={m}");
        }
        if let Some(r) = &self.rates {
            let _ = write!(s, " rates={r}");
        }
        if let Some(l) = self.big_lambda {
            let _ = write!(s, " Lambda={l}");
        }
        for (name, v) in [
            ("nu", self.nu),
            ("lam", self.lam),
            ("alpha", self.alpha),
            ("rho", self.rho),
        ] {
            if let Some(v) = v {
                let _ = write!(s, " {name}={v}");
            }
        }
        if let Some(t) = &self.terms {
            let _ = write!(s, " terms={t}");
        }
        s
    }
}

/// 17 significant digits — enough that equal doubles print equal bytes and
/// different doubles print different bytes.
fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

impl OutputArgs {
    fn resolve_format(&self) -> Result<Format, CliError> {
        match self.format.as_deref() {
            None | Some("csv") => Ok(Format::Csv),
            Some("json") => Ok(Format::Json),
            Some(other) => Err(usage(format!("unknown format '{other}' (csv or json)"))),
        }
    }

    fn write(&self, content: &str) -> Result<(), CliError> {
        match &self.out {
            None => {
                use std::io::Write;
                match std::io::stdout().write_all(content.as_bytes()) {
                    Ok(()) => Ok(()),
                    // downstream consumer (head, etc.) closed the pipe
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                    Err(e) => Err(usage(format!("cannot write to stdout: {e}"))),
                }
            }
            Some(path) => std::fs::write(path, content)
                .map_err(|e| usage(format!("cannot write {path}: {e}"))),
        }
    }
}

fn meta_line(detail: &str) -> String {
    format!(
        "# fraccount {} schema_version={SCHEMA_VERSION}\n# {detail}\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn run_ml(mut a: MlArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<MlArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay!(a, cfg; alpha, beta, gammas, z);
    }
    let alpha = a.alpha.ok_or_else(|| usage("--alpha is required"))?;
    let beta = a.beta.unwrap_or(1.0);
    let args = parse_f64_list(
        a.z.as_deref().ok_or_else(|| usage("--z is required"))?,
        "--z",
    )?;
    let gammas = match &a.gammas {
        Some(list) => parse_f64_list(list, "--gammas")?,
        None => vec![1.0; args.len()],
    };
    if gammas.len() != args.len() {
        return Err(usage(format!(
            "--gammas has {} entries but --z has {}",
            gammas.len(),
            args.len()
        )));
    }
    let spec = MlSpec { alpha, beta, gammas, args };
    let v = ml(&spec, SeriesControl::default())?;
    if !v.converged || v.low_confidence {
        return Err(CliError::Lib(LibError::NonConvergence {
            terms: SeriesControl::default().max_terms,
            rel_err: v.err_estimate / v.value.abs().max(1e-290),
        }));
    }
    let content = match a.output.resolve_format()? {
        Format::Csv => format!("{:.10}\n# err_estimate={:.3e}\n", v.value, v.err_estimate),
        Format::Json => format!(
            "{}\n",
            json!({
                "schema_version": SCHEMA_VERSION,
                "value": v.value,
                "err_estimate": v.err_estimate,
            })
        ),
    };
    a.output.write(&content)
}

fn run_pmf(mut a: PmfArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<PmfArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay_model(&mut a.model, &cfg.model);
        overlay!(a, cfg; t, nmax, target_mass, n_cap);
    }
    let model = a.model.build()?;
    let t = a.t.ok_or_else(|| usage("--t is required"))?;
    let defaults = TableOpts::default();
    let opts = TableOpts {
        target_mass: a.target_mass.unwrap_or(defaults.target_mass),
        n_cap: a.n_cap.unwrap_or(defaults.n_cap),
        fixed_n: a.nmax,
    };
    let table = pmf_table(&model, t, &opts)?;
    let content = match a.output.resolve_format()? {
        Format::Csv => {
            let mut s = meta_line(&format!("{} t={t}", a.model.describe()));
            s.push_str(&format!(
                "# truncation_n={} mass_covered={}\n",
                table.truncation_n,
                g17(table.mass_covered)
            ));
            s.push_str("n,p\n");
            for (n, &p) in table.probs.iter().enumerate() {
                let _ = writeln!(s, "{n},{}", g17(p));
            }
            s
        }
        Format::Json => format!(
            "{}\n",
            json!({
                "schema_version": SCHEMA_VERSION,
                "params": model,
                "t": table.t,
                "probs": table.probs,
                "truncation_n": table.truncation_n,
                "mass_covered": table.mass_covered,
            })
        ),
    };
    a.output.write(&content)
}

fn run_pgf(mut a: PgfArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<PgfArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay!(a, cfg; rates, big_lambda, nu, lam, t, u);
    }
    let rates = match (&a.rates, a.big_lambda) {
        (Some(_), Some(_)) => return Err(usage("give either --rates or --Lambda, not both")),
        (Some(list), None) => parse_f64_list(list, "--rates")?,
        (None, Some(lam)) => vec![lam],
        (None, None) => return Err(usage("need jump rates: --rates LIST or --Lambda RATE")),
    };
    let params = GcpParams::new(rates)?;
    let nu = a.nu.ok_or_else(|| usage("--nu is required"))?;
    let lam = a.lam.ok_or_else(|| usage("--lam is required"))?;
    let t = a.t.ok_or_else(|| usage("--t is required"))?;
    let us = parse_f64_list(
        a.u.as_deref().ok_or_else(|| usage("--u is required"))?,
        "--u",
    )?;
    let values: Vec<f64> = us
        .iter()
        .map(|&u| fraccount::processes::pgf(&params, nu, lam, u, t))
        .collect::<Result<_, _>>()?;
    let content = match a.output.resolve_format()? {
        Format::Csv => {
            let mut s = meta_line(&format!(
                "pgf rates={} nu={nu} lam={lam} t={t}",
                a.rates.clone().unwrap_or_else(|| a.big_lambda.unwrap().to_string())
            ));
            s.push_str("u,pgf\n");
            for (u, g) in us.iter().zip(&values) {
                let _ = writeln!(s, "{},{}", g17(*u), g17(*g));
            }
            s
        }
        Format::Json => format!(
            "{}\n",
            json!({
                "schema_version": SCHEMA_VERSION,
                "params": params,
                "nu": nu,
                "lam": lam,
                "t": t,
                "u": us,
                "pgf": values,
            })
        ),
    };
    a.output.write(&content)
}

fn run_simulate(mut a: SimulateArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<SimulateArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay_model(&mut a.model, &cfg.model);
        overlay_mc(&mut a.mc, &cfg.mc);
        overlay!(a, cfg; t);
    }
    let model = a.model.build()?;
    let t = a.t.ok_or_else(|| usage("--t is required"))?;
    let cfg = a.mc.to_config();
    let emp = simulate_model(&model, t, &cfg)?;
    let content = match a.output.resolve_format()? {
        Format::Csv => {
            let mut s = meta_line(&format!(
                "{} t={t} {}",
                a.model.describe(),
                a.mc.describe()
            ));
            s.push_str("n,count,freq\n");
            for (n, &c) in emp.counts.iter().enumerate() {
                let _ = writeln!(s, "{n},{c},{}", g17(c as f64 / emp.n_paths as f64));
            }
            s
        }
        Format::Json => format!(
            "{}\n",
            json!({
                "schema_version": SCHEMA_VERSION,
                "params": model,
                "t": t,
                "empirical": emp,
            })
        ),
    };
    a.output.write(&content)
}

fn run_validate(mut a: ValidateArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<ValidateArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay_model(&mut a.model, &cfg.model);
        overlay_mc(&mut a.mc, &cfg.mc);
        overlay!(a, cfg; t, tv_max, p_min);
    }
    let model = a.model.build()?;
    let t = a.t.ok_or_else(|| usage("--t is required"))?;
    let tv_max = a.tv_max.unwrap_or(0.01);
    let p_min = a.p_min.unwrap_or(0.01);
    let cfg = a.mc.to_config();
    let emp = simulate_model(&model, t, &cfg)?;
    let table = pmf_table(&model, t, &TableOpts::default())?;
    let report = compare_pmf(&emp, &table)?;
    let pass = report.tv < tv_max && report.chi2_pvalue > p_min;
    let payload = json!({
        "schema_version": SCHEMA_VERSION,
        "params": model,
        "t": t,
        "tv": report.tv,
        "chi2_stat": report.chi2_stat,
        "chi2_df": report.chi2_df,
        "chi2_pvalue": report.chi2_pvalue,
        "n_paths": report.n_paths,
        "seed": report.seed,
        "tv_max": tv_max,
        "p_min": p_min,
        "pass": pass,
    });
    let content = match a.output.resolve_format()? {
        Format::Json => format!("{payload}\n"),
        Format::Csv => {
            let mut s = meta_line(&format!("{} t={t} {}", a.model.describe(), a.mc.describe()));
            s.push_str("tv,chi2_stat,chi2_df,chi2_pvalue,n_paths,seed,pass\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                g17(report.tv),
                g17(report.chi2_stat),
                report.chi2_df,
                g17(report.chi2_pvalue),
                report.n_paths,
                report.seed,
                pass
            );
            s
        }
    };
    a.output.write(&content)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Stat(format!(
            "law mismatch: tv = {:.4e} (max {tv_max}), χ² p = {:.4e} (min {p_min})",
            report.tv, report.chi2_pvalue
        )))
    }
}

fn run_ruin(mut a: RuinArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<RuinArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay!(a, cfg; c, rates, claim_r, claim_a, umax, h, series_cap, mc_paths, mc_at, horizon, seed);
    }
    let c = a.c.ok_or_else(|| usage("--c is required"))?;
    let rates = parse_f64_list(
        a.rates.as_deref().ok_or_else(|| usage("--rates is required"))?,
        "--rates",
    )?;
    let r = a.claim_r.ok_or_else(|| usage("--claim-r is required"))?;
    let claim_a = a.claim_a.ok_or_else(|| usage("--claim-a is required"))?;
    let umax = a.umax.ok_or_else(|| usage("--umax is required"))?;
    let h = a.h.ok_or_else(|| usage("--h is required"))?;
    let model = RiskModel::new(c, GcpParams::new(rates)?, r, claim_a)?;
    let curve = phi_curve(&model, h, umax, a.series_cap.unwrap_or(64))?;

    let mc = match a.mc_paths {
        Some(n_paths) if n_paths > 0 => {
            let us = parse_f64_list(a.mc_at.as_deref().unwrap_or("0,1,2,5"), "--mc-at")?;
            let horizon = a.horizon.unwrap_or(500.0);
            let seed = a.seed.unwrap_or(1);
            let mut rows = Vec::new();
            for &u in &us {
                let psi = simulate_ruin(&model, u, horizon, n_paths, seed)?;
                let phi_mc = 1.0 - psi;
                let stderr = (phi_mc * (1.0 - phi_mc) / n_paths as f64).sqrt();
                rows.push((u, phi_mc, stderr));
            }
            Some(rows)
        }
        _ => None,
    };

    let detail = format!(
        "ruin c={c} rates={} claim_r={r} claim_a={claim_a} h={} u_max={} series_terms={} seed={}",
        a.rates.as_deref().unwrap_or(""),
        curve.h,
        curve.u_max,
        curve.series_terms_used,
        a.seed.unwrap_or(1)
    );
    let content = match a.output.resolve_format()? {
        Format::Csv => {
            let mut s = meta_line(&detail);
            match &mc {
                None => {
                    s.push_str("u,phi_analytic\n");
                    for (i, &v) in curve.values.iter().enumerate() {
                        let _ = writeln!(s, "{},{}", g17(i as f64 * curve.h), g17(v));
                    }
                }
                Some(rows) => {
                    s.push_str("u,phi_analytic,phi_mc,mc_stderr\n");
                    for &(u, phi_mc, stderr) in rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{}",
                            g17(u),
                            g17(curve.at(u)?),
                            g17(phi_mc),
                            g17(stderr)
                        );
                    }
                }
            }
            s
        }
        Format::Json => {
            let mc_json = mc.as_ref().map(|rows| {
                rows.iter()
                    .map(|&(u, phi_mc, stderr)| {
                        json!({"u": u, "phi_mc": phi_mc, "mc_stderr": stderr})
                    })
                    .collect::<Vec<_>>()
            });
            format!(
                "{}\n",
                json!({
                    "schema_version": SCHEMA_VERSION,
                    "model": model,
                    "h": curve.h,
                    "u_max": curve.u_max,
                    "series_terms_used": curve.series_terms_used,
                    "phi": curve.values,
                    "mc": mc_json,
                })
            )
        }
    };
    a.output.write(&content)
}

fn run_paths(mut a: PathsArgs) -> Result<(), CliError> {
    if let Some(cfg) = read_config::<PathsArgs>(&a.output.config)? {
        overlay_output(&mut a.output, &cfg.output);
        overlay!(a, cfg; clock, nu, lam, alpha, rho, terms, horizon, dt_rel, n_paths, seed);
    }
    let kind = a.clock.as_deref().ok_or_else(|| usage("--clock is required"))?;
    let tc = match kind {
        "stable-pair" => TimeChange::StablePair {
            nu: a.nu.ok_or_else(|| usage("--clock stable-pair requires --nu"))?,
            lambda: a.lam.unwrap_or(0.0),
        },
        "tempered-pair" => TimeChange::TemperedPair {
            alpha: a.alpha.ok_or_else(|| usage("--clock tempered-pair requires --alpha"))?,
            rho: a.rho.ok_or_else(|| usage("--clock tempered-pair requires --rho"))?,
        },
        "general" => TimeChange::General {
            terms: parse_terms(
                a.terms.as_deref().ok_or_else(|| usage("--clock general requires --terms"))?,
            )?,
        },
        other => {
            return Err(usage(format!(
                "unknown clock '{other}' (stable-pair, tempered-pair, or general)"
            )))
        }
    };
    let horizon = a.horizon.unwrap_or(10.0);
    let dt_rel = a.dt_rel.unwrap_or(1e-3);
    let n_paths = a.n_paths.unwrap_or(1);
    let seed = a.seed.unwrap_or(1);
    let paths = sample_clock_paths(&tc, horizon, dt_rel, n_paths, seed)?;
    let content = match a.output.resolve_format()? {
        Format::Csv => {
            let mut s = meta_line(&format!(
                "paths clock={kind} horizon={horizon} dt_rel={dt_rel} n_paths={n_paths} seed={seed}"
            ));
            s.push_str("path,step,u,value\n");
            for (pid, path) in paths.iter().enumerate() {
                for (step, &v) in path.values.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        "{pid},{step},{},{}",
                        g17(step as f64 * path.dt),
                        g17(v)
                    );
                }
            }
            s
        }
        Format::Json => {
            let arr: Vec<_> = paths
                .iter()
                .map(|p| json!({"dt": p.dt, "values": p.values}))
                .collect();
            format!(
                "{}\n",
                json!({
                    "schema_version": SCHEMA_VERSION,
                    "clock": tc,
                    "seed": seed,
                    "paths": arr,
                })
            )
        }
    };
    a.output.write(&content)
}

fn init_threads(explicit: Option<usize>) {
    let n = explicit
        .or_else(|| {
            std::env::var("FRACCOUNT_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0); // 0 = rayon default (logical cores)
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let result = match cli.cmd {
        Cmd::Ml(a) => run_ml(a),
        Cmd::Pmf(a) => run_pmf(a),
        Cmd::Pgf(a) => run_pgf(a),
        Cmd::Simulate(a) => run_simulate(a),
        Cmd::Validate(a) => run_validate(a),
        Cmd::Ruin(a) => run_ruin(a),
        Cmd::Paths(a) => run_paths(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
