//! Configuration and subcommand entry points for the `nctheat` binary.
//!
//! Four subcommands expose the engine:
//!
//! * `v2` writes the second-order heat term in one of its four shapes
//!   (grouped, component, diagonal, conformal) as pretty text or JSON;
//! * `eval-h` evaluates one Γ-weighted simplex function at a point;
//! * `verify` runs the verification suites and exits nonzero when any
//!   check fails;
//! * `heat-xcheck` produces the lattice-fit versus closed-form table.
//!
//! Settings come from built-in defaults, then an optional `key=value`
//! configuration file (`--config`), then flag overrides, in that order.
//! Config keys mirror the long flags: `m`, `alpha`, `z`, `j`, `tol`,
//! `tol_abs`, `tol_rel`, `norm`, `L`, `leg_radius`, `theta`, `eps`, `weyl`,
//! `out`, `format`, `threads`, `seed`, `grid`, `max_warn_fraction`.
//! Randomized checks draw from a ChaCha stream seeded by `--seed`, so
//! outputs are deterministic for a fixed configuration.
//!
//! Exit codes: 0 success, 1 runtime or verification failure, 2 usage error.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    self, recurrences, relation_i_residual, relation_ii_residual, tau1, tau2,
    transformed_relation_residuals, v_i_expr, v_i_reflected_expr, ConformalOp, EvalPoint,
    Evaluator, HArg, SpectralExpr, YMono,
};
use crate::heat2;
use crate::nc_torus::{
    heat_cross_check, heat_trace_fit, v2_formula_eval, FourierElement, HeatFitConfig, Theta,
    WeylFactor,
};
use crate::rearrange::{
    contour_g, gaussian_moment, h_alpha_with_diag, simplex_g, MomentRoute, MultiIndex,
    Normalization, Tol, XiPoly,
};

/// Schema version stamped into every JSON document this module writes.
pub const SCHEMA_VERSION: u32 = 1;

/// CLI failure: usage errors exit with 2, runtime errors with 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Run(m) => write!(f, "{m}"),
        }
    }
}

fn run_err(e: impl fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn usage_err(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

// ---------------------------------------------------------------------------
// Flag value enums.

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatChoice {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormChoice {
    /// π^{m/2}
    Pi,
    /// (2π)^{m/2}
    #[value(name = "2pi")]
    TwoPi,
    /// 1
    One,
}

impl NormChoice {
    fn to_normalization(self) -> Normalization {
        match self {
            NormChoice::Pi => Normalization::GaussPi,
            NormChoice::TwoPi => Normalization::GaussTwoPi,
            NormChoice::One => Normalization::One,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GridChoice {
    /// The full verification grids.
    Default,
    /// Reduced grids for quick runs.
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum V2Form {
    General,
    Components,
    Diagonal,
    Conformal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OpChoice {
    #[value(name = "delta_k")]
    DeltaK,
    #[value(name = "delta_phi")]
    DeltaPhi,
    /// Reserved for user-supplied weight tables; not built in.
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteChoice {
    All,
    Relations,
    Recurrences,
    Oracles,
    Torus,
}

// ---------------------------------------------------------------------------
// Run configuration.

/// Resolved settings for one invocation: defaults, overlaid by the config
/// file, overlaid by flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub m: usize,
    pub alpha: Vec<u32>,
    pub z: Vec<f64>,
    pub j: u32,
    pub norm: Normalization,
    pub tol: Tol,
    /// Lattice truncation radius L for heat-trace fits.
    pub radius: i64,
    /// Block radius for the modular calculus in the closed-form route.
    pub leg_radius: i64,
    /// Upper-triangular deformation entries θ_{ls}, l < s, row by row.
    pub theta_upper: Vec<f64>,
    pub eps: Vec<f64>,
    pub weyl: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub format: FormatChoice,
    pub threads: usize,
    pub seed: u64,
    pub grid: GridChoice,
    /// Fraction of quadrature warnings a suite tolerates before failing.
    pub max_warn_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            m: 2,
            alpha: vec![1, 1],
            z: vec![0.0],
            j: 0,
            norm: Normalization::default(),
            tol: Tol::default(),
            radius: 12,
            leg_radius: 4,
            theta_upper: vec![0.3],
            eps: vec![0.1, 0.2],
            weyl: None,
            out: None,
            format: FormatChoice::Text,
            threads: 0,
            seed: 17,
            grid: GridChoice::Default,
            max_warn_fraction: 0.05,
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| CliError::Usage(format!("bad {what} entry {p:?}: {e}")))
        })
        .collect()
}

fn parse_scalar<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    s.trim()
        .parse::<T>()
        .map_err(|e| CliError::Usage(format!("bad {what} value {s:?}: {e}")))
}

impl RunConfig {
    /// Apply one `key=value` line from a configuration file.
    fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "m" => self.m = parse_scalar(value, "m")?,
            "alpha" => self.alpha = parse_list(value, "alpha")?,
            "z" => self.z = parse_list(value, "z")?,
            "j" => self.j = parse_scalar(value, "j")?,
            "tol" => {
                let t: f64 = parse_scalar(value, "tol")?;
                self.tol = Tol::new(t, t);
            }
            "tol_abs" => self.tol.abs = parse_scalar(value, "tol_abs")?,
            "tol_rel" => self.tol.rel = parse_scalar(value, "tol_rel")?,
            "norm" => {
                self.norm = match value.trim() {
                    "pi" => Normalization::GaussPi,
                    "2pi" => Normalization::GaussTwoPi,
                    "one" => Normalization::One,
                    other => {
                        return Err(CliError::Usage(format!(
                            "bad norm value {other:?}: expected pi, 2pi or one"
                        )));
                    }
                }
            }
            "L" => self.radius = parse_scalar(value, "L")?,
            "leg_radius" => self.leg_radius = parse_scalar(value, "leg_radius")?,
            "theta" => self.theta_upper = parse_list(value, "theta")?,
            "eps" => self.eps = parse_list(value, "eps")?,
            "weyl" => self.weyl = Some(PathBuf::from(value.trim())),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "format" => {
                self.format = match value.trim() {
                    "text" => FormatChoice::Text,
                    "json" => FormatChoice::Json,
                    "csv" => FormatChoice::Csv,
                    other => {
                        return Err(CliError::Usage(format!(
                            "bad format value {other:?}: expected text, json or csv"
                        )));
                    }
                }
            }
            "threads" => self.threads = parse_scalar(value, "threads")?,
            "seed" => self.seed = parse_scalar(value, "seed")?,
            "grid" => {
                self.grid = match value.trim() {
                    "default" => GridChoice::Default,
                    "fast" => GridChoice::Fast,
                    other => {
                        return Err(CliError::Usage(format!(
                            "bad grid value {other:?}: expected default or fast"
                        )));
                    }
                }
            }
            "max_warn_fraction" => self.max_warn_fraction = parse_scalar(value, "max_warn_fraction")?,
            other => {
                return Err(CliError::Usage(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    fn apply_config_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            self.apply_kv(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("{origin}:{}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &PathBuf) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_config_text(&text, &path.display().to_string())
    }

    fn apply_flags(&mut self, cli: &Cli) -> Result<(), CliError> {
        if let Some(m) = cli.m {
            self.m = m;
        }
        if let Some(s) = &cli.alpha {
            self.alpha = parse_list(s, "alpha")?;
        }
        if let Some(s) = &cli.z {
            self.z = parse_list(s, "z")?;
        }
        if let Some(j) = cli.j {
            self.j = j;
        }
        if let Some(t) = cli.tol {
            self.tol = Tol::new(t, t);
        }
        if let Some(n) = cli.norm {
            self.norm = n.to_normalization();
        }
        if let Some(l) = cli.radius {
            self.radius = l;
        }
        if let Some(l) = cli.leg_radius {
            self.leg_radius = l;
        }
        if let Some(s) = &cli.theta {
            self.theta_upper = parse_list(s, "theta")?;
        }
        if let Some(s) = &cli.eps {
            self.eps = parse_list(s, "eps")?;
        }
        if let Some(p) = &cli.weyl {
            self.weyl = Some(p.clone());
        }
        if let Some(p) = &cli.out {
            self.out = Some(p.clone());
        }
        if let Some(f) = cli.format {
            self.format = f;
        }
        if let Some(t) = cli.threads {
            self.threads = t;
        }
        if let Some(s) = cli.seed {
            self.seed = s;
        }
        if let Some(g) = cli.grid {
            self.grid = g;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.tol.abs > 0.0 && self.tol.rel > 0.0) {
            return Err(CliError::Usage(format!(
                "tolerances must be positive, got abs = {}, rel = {}",
                self.tol.abs, self.tol.rel
            )));
        }
        if self.alpha.is_empty() || self.z.is_empty() || self.eps.is_empty() {
            return Err(CliError::Usage(
                "alpha, z and eps lists must be nonempty".into(),
            ));
        }
        if self.m == 0 {
            return Err(CliError::Usage("dimension m must be at least 1".into()));
        }
        if self.radius < 1 || self.leg_radius < 1 {
            return Err(CliError::Usage(
                "truncation radii must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.max_warn_fraction) {
            return Err(CliError::Usage(
                "max_warn_fraction must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Deformation matrix assembled from the upper-triangular entries.
    fn theta(&self) -> Result<Theta, CliError> {
        let m = self.m;
        let need = m * (m - 1) / 2;
        if self.theta_upper.len() != need {
            return Err(CliError::Usage(format!(
                "theta needs {need} upper-triangular entries for m = {m}, got {}",
                self.theta_upper.len()
            )));
        }
        let mut entries = vec![0.0; m * m];
        let mut it = self.theta_upper.iter();
        for l in 0..m {
            for s in (l + 1)..m {
                let t = *it.next().expect("length checked");
                entries[l * m + s] = t;
                entries[s * m + l] = -t;
            }
        }
        Theta::new(m, entries).map_err(run_err)
    }

    fn theta12(&self) -> Result<f64, CliError> {
        if self.m != 2 {
            return Err(CliError::Usage(format!(
                "this command runs on the two-dimensional torus; got m = {}",
                self.m
            )));
        }
        self.theta().map(|t| t.get(0, 1))
    }
}

// ---------------------------------------------------------------------------
// Argument parsing.

#[derive(Parser, Debug)]
#[command(
    name = "nctheat",
    version,
    about = "Heat coefficients of conformally deformed noncommutative tori"
)]
pub struct Cli {
    /// key=value configuration file applied before flag overrides
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Dimension of the torus
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Comma-separated multi-index entries, e.g. 2,1
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Comma-separated argument values (one value broadcasts)
    #[arg(long, global = true)]
    pub z: Option<String>,
    /// Symbol order of the Gaussian part
    #[arg(long, global = true)]
    pub j: Option<u32>,
    /// Quadrature tolerance (sets both absolute and relative)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Gaussian normalization constant
    #[arg(long, global = true, value_enum)]
    pub norm: Option<NormChoice>,
    /// Lattice truncation radius for heat-trace fits
    #[arg(long = "L", global = true, value_name = "L")]
    pub radius: Option<i64>,
    /// Block radius for the modular calculus
    #[arg(long, global = true)]
    pub leg_radius: Option<i64>,
    /// Comma-separated upper-triangular deformation entries
    #[arg(long, global = true)]
    pub theta: Option<String>,
    /// Comma-separated deformation strengths for cross-checks
    #[arg(long, global = true)]
    pub eps: Option<String>,
    /// JSON file with the Weyl-factor logarithm
    #[arg(long, global = true, value_name = "FILE")]
    pub weyl: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatChoice>,
    /// Worker threads (0 = library default)
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Seed for randomized checks
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Verification grid size
    #[arg(long, global = true, value_enum)]
    pub grid: Option<GridChoice>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the second-order heat term in the chosen form
    V2 {
        #[arg(long, value_enum)]
        form: V2Form,
        #[arg(long, value_enum, default_value = "delta_k")]
        op: OpChoice,
    },
    /// Evaluate one Γ-weighted simplex function at a point
    EvalH,
    /// Run verification suites; exits 1 when any check fails
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteChoice,
    },
    /// Lattice-fit versus closed-form cross-check table
    HeatXcheck,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Run(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

/// Resolve the configuration and dispatch one subcommand.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_flags(&cli)?;
    cfg.validate()?;
    if cfg.threads > 0 {
        // A second initialization in the same process keeps the first pool;
        // that is fine for our use.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match &cli.command {
        Command::V2 { form, op } => {
            let text = cmd_v2(&cfg, *form, *op)?;
            write_output(&cfg, &text)?;
            Ok(0)
        }
        Command::EvalH => {
            let text = cmd_eval_h(&cfg)?;
            write_output(&cfg, &text)?;
            Ok(0)
        }
        Command::Verify { suite } => {
            let (text, code) = cmd_verify(&cfg, *suite)?;
            write_output(&cfg, &text)?;
            Ok(code)
        }
        Command::HeatXcheck => {
            let text = cmd_heat_xcheck(&cfg)?;
            write_output(&cfg, &text)?;
            Ok(0)
        }
    }
}

fn write_output(cfg: &RunConfig, content: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display()))),
        None => {
            if content.ends_with('\n') {
                print!("{content}");
            } else {
                println!("{content}");
            }
            Ok(())
        }
    }
}

fn to_json_pretty<T: Serialize>(doc: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(doc)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(run_err)
}

// ---------------------------------------------------------------------------
// v2 term lists.

fn conformal_op(op: OpChoice) -> Result<ConformalOp, CliError> {
    match op {
        OpChoice::DeltaK => Ok(ConformalOp::DeltaK),
        OpChoice::DeltaPhi => Ok(ConformalOp::DeltaPhi),
        OpChoice::Custom => Err(CliError::Usage(
            "no custom weight tables are built in; use delta_k or delta_phi".into(),
        )),
    }
}

#[derive(Serialize)]
struct GeneralTermDoc {
    part: &'static str,
    coeff: String,
    alpha: Vec<u32>,
    free_axes: usize,
    display: String,
}

#[derive(Serialize)]
struct GeneralDoc {
    schema_version: u32,
    form: &'static str,
    terms: Vec<GeneralTermDoc>,
}

#[derive(Serialize)]
struct ConformalDoc {
    schema_version: u32,
    form: &'static str,
    op: &'static str,
    g_i: String,
    g_ii: String,
}

fn op_name(op: ConformalOp) -> &'static str {
    match op {
        ConformalOp::DeltaK => "delta_k",
        ConformalOp::DeltaPhi => "delta_phi",
    }
}

fn cmd_v2(cfg: &RunConfig, form: V2Form, op: OpChoice) -> Result<String, CliError> {
    match form {
        V2Form::General => {
            let terms = heat2::v2_general();
            match cfg.format {
                FormatChoice::Text => {
                    let mut out = String::new();
                    for (part, header) in [
                        (heat2::V2Part::I, "# one-slot families"),
                        (heat2::V2Part::II, "# two-slot families"),
                    ] {
                        out.push_str(header);
                        out.push('\n');
                        for t in terms.iter().filter(|t| t.part == part) {
                            out.push_str(&t.to_string());
                            out.push('\n');
                        }
                    }
                    Ok(out)
                }
                FormatChoice::Json => {
                    let docs = terms
                        .iter()
                        .map(|t| GeneralTermDoc {
                            part: match t.part {
                                heat2::V2Part::I => "I",
                                heat2::V2Part::II => "II",
                            },
                            coeff: t.coeff.to_string(),
                            alpha: t.alpha.to_vec(),
                            free_axes: t.free_axes,
                            display: t.to_string(),
                        })
                        .collect();
                    to_json_pretty(&GeneralDoc {
                        schema_version: SCHEMA_VERSION,
                        form: "general",
                        terms: docs,
                    })
                }
                FormatChoice::Csv => Err(CliError::Usage(
                    "term lists are emitted as text or json, not csv".into(),
                )),
            }
        }
        V2Form::Components => {
            let expansion = heat2::v2_components_engine(cfg.m).map_err(run_err)?;
            match cfg.format {
                FormatChoice::Text => Ok(expansion.sum.pretty()),
                FormatChoice::Json => Ok(expansion.sum.to_json()),
                FormatChoice::Csv => Err(CliError::Usage(
                    "term lists are emitted as text or json, not csv".into(),
                )),
            }
        }
        V2Form::Diagonal => {
            let sum = heat2::diagonal::v2_diagonal(cfg.m).map_err(run_err)?;
            match cfg.format {
                FormatChoice::Text => Ok(sum.pretty()),
                FormatChoice::Json => Ok(sum.to_json()),
                FormatChoice::Csv => Err(CliError::Usage(
                    "term lists are emitted as text or json, not csv".into(),
                )),
            }
        }
        V2Form::Conformal => {
            let op = conformal_op(op)?;
            let (gi, gii) = heat2::conformal::v2_conformal(op).map_err(run_err)?;
            match cfg.format {
                FormatChoice::Text => Ok(format!(
                    "G_I[{}]  = {gi}\nG_II[{}] = {gii}\n",
                    op_name(op),
                    op_name(op)
                )),
                FormatChoice::Json => to_json_pretty(&ConformalDoc {
                    schema_version: SCHEMA_VERSION,
                    form: "conformal",
                    op: op_name(op),
                    g_i: gi.to_string(),
                    g_ii: gii.to_string(),
                }),
                FormatChoice::Csv => Err(CliError::Usage(
                    "term lists are emitted as text or json, not csv".into(),
                )),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// eval-h.

#[derive(Serialize)]
struct EvalHDoc {
    schema_version: u32,
    alpha: Vec<u32>,
    z: Vec<f64>,
    m: u32,
    j: u32,
    norm: String,
    value: f64,
    quad_error: f64,
}

fn norm_name(n: Normalization) -> &'static str {
    match n {
        Normalization::GaussPi => "pi",
        Normalization::GaussTwoPi => "2pi",
        Normalization::One => "one",
    }
}

fn cmd_eval_h(cfg: &RunConfig) -> Result<String, CliError> {
    let alpha = MultiIndex::new(cfg.alpha.clone()).map_err(usage_err)?;
    let n = alpha.n();
    let z = if cfg.z.len() == n {
        cfg.z.clone()
    } else if cfg.z.len() == 1 {
        vec![cfg.z[0]; n]
    } else {
        return Err(CliError::Usage(format!(
            "alpha = {:?} needs {n} argument values, got {}",
            cfg.alpha,
            cfg.z.len()
        )));
    };
    let res = h_alpha_with_diag(&alpha, &z, cfg.m as u32, cfg.j, cfg.norm, cfg.tol)
        .map_err(run_err)?;
    match cfg.format {
        FormatChoice::Text => {
            let idx: Vec<String> = cfg.alpha.iter().map(u32::to_string).collect();
            let zs: Vec<String> = z.iter().map(f64::to_string).collect();
            Ok(format!(
                "H_{{{}}}({}) [m={}, j={}, norm={}] = {:.12e}   quadrature error {:.3e}\n",
                idx.join(","),
                zs.join(","),
                cfg.m,
                cfg.j,
                norm_name(cfg.norm),
                res.value,
                res.error
            ))
        }
        FormatChoice::Json => to_json_pretty(&EvalHDoc {
            schema_version: SCHEMA_VERSION,
            alpha: cfg.alpha.clone(),
            z,
            m: cfg.m as u32,
            j: cfg.j,
            norm: norm_name(cfg.norm).into(),
            value: res.value,
            quad_error: res.error,
        }),
        FormatChoice::Csv => Err(CliError::Usage(
            "eval-h emits text or json, not csv".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Verification suites.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

/// One verification check: machine-readable pass/fail with its residual.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub name: String,
    pub status: CheckStatus,
    pub residual: f64,
    pub bound: f64,
    pub detail: String,
}

impl CheckRow {
    fn judged(suite: &'static str, name: String, residual: f64, bound: f64, detail: String) -> Self {
        let status = if residual <= bound {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        CheckRow {
            suite,
            name,
            status,
            residual,
            bound,
            detail,
        }
    }

    fn warned(suite: &'static str, name: String, bound: f64, detail: String) -> Self {
        CheckRow {
            suite,
            name,
            status: CheckStatus::Warn,
            residual: f64::NAN,
            bound,
            detail,
        }
    }
}

/// Quadrature warnings are tolerated only up to the configured fraction of
/// a suite; beyond it a synthetic failure row is appended.
fn apply_warn_policy(rows: &mut Vec<CheckRow>, max_fraction: f64) {
    let mut suites: Vec<&'static str> = rows.iter().map(|r| r.suite).collect();
    suites.dedup();
    for suite in suites {
        let total = rows.iter().filter(|r| r.suite == suite).count();
        let warned = rows
            .iter()
            .filter(|r| r.suite == suite && r.status == CheckStatus::Warn)
            .count();
        if total > 0 && (warned as f64) / (total as f64) > max_fraction {
            rows.push(CheckRow {
                suite,
                name: "quadrature-warning-fraction".into(),
                status: CheckStatus::Fail,
                residual: (warned as f64) / (total as f64),
                bound: max_fraction,
                detail: format!("{warned} of {total} checks could not be evaluated"),
            });
        }
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn relation_rows(cfg: &RunConfig) -> Vec<CheckRow> {
    let (ys, ms) = match cfg.grid {
        GridChoice::Default => (vec![0.25, 0.5, 0.8, 1.25, 2.0, 4.0], vec![2u32, 3, 4, 5]),
        GridChoice::Fast => conformal::default_relation_i_grid(),
    };
    let (pairs, ms2) = match cfg.grid {
        GridChoice::Default => {
            let vals = [0.5, 0.8, 1.25, 2.0];
            let mut pairs = Vec::new();
            for &a in &vals {
                for &b in &vals {
                    pairs.push((a, b));
                }
            }
            (pairs, vec![2u32, 4])
        }
        GridChoice::Fast => conformal::default_relation_ii_grid(),
    };

    let mut rows = Vec::new();
    for &y in &ys {
        for &m in &ms {
            let name = format!("relation-i y={y} m={m}");
            match relation_i_residual(y, m, Normalization::One, cfg.tol) {
                Ok(r) => rows.push(CheckRow::judged(
                    "relations",
                    name,
                    r.residual,
                    1e-8,
                    format!("lhs={:.6e} rhs={:.6e}", r.lhs, r.rhs),
                )),
                Err(e) => rows.push(CheckRow::warned("relations", name, 1e-8, e.to_string())),
            }
        }
    }
    for &(y1, y2) in &pairs {
        for &m in &ms2 {
            let name = format!("relation-ii y1={y1} y2={y2} m={m}");
            match relation_ii_residual(y1, y2, m, Normalization::One, cfg.tol) {
                Ok(r) => rows.push(CheckRow::judged(
                    "relations",
                    name,
                    r.residual,
                    1e-6,
                    format!("lhs={:.6e} rhs={:.6e}", r.lhs, r.rhs),
                )),
                Err(e) => rows.push(CheckRow::warned("relations", name, 1e-6, e.to_string())),
            }
        }
    }
    rows
}

fn recurrence_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>, CliError> {
    let bound = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = [2u32, 3, 4, 5];
    let mut points = Vec::with_capacity(20);
    for i in 0..20 {
        let y1 = log_uniform(&mut rng, 0.3, 3.0);
        let y2 = log_uniform(&mut rng, 0.3, 3.0);
        points.push(EvalPoint::new(y1, y2, dims[i % dims.len()]).map_err(run_err)?);
    }

    let mut rows = Vec::new();
    for rule in recurrences() {
        let mut worst = 0.0_f64;
        let mut at = String::new();
        let mut warns = 0usize;
        for p in &points {
            match rule.residual_robust(*p, Normalization::One, cfg.tol) {
                Ok(r) => {
                    if r.residual > worst {
                        worst = r.residual;
                        at = format!("y1={:.4} y2={:.4} m={}", p.y1, p.y2, p.m);
                    }
                }
                Err(_) => warns += 1,
            }
        }
        let detail = if warns > 0 {
            format!("worst at {at}; {warns} of 20 points skipped")
        } else {
            format!("worst at {at}")
        };
        if warns == points.len() {
            rows.push(CheckRow::warned(
                "recurrences",
                rule.name.into(),
                bound,
                "no point could be evaluated".into(),
            ));
        } else {
            rows.push(CheckRow::judged(
                "recurrences",
                rule.name.into(),
                worst,
                bound,
                detail,
            ));
        }
    }

    // Transform orders: the reflection squares and the rotation cubes to
    // the identity.
    let mut worst1 = 0.0_f64;
    let mut worst2 = 0.0_f64;
    for i in 0..20 {
        let a = rng.random_range(1..=3u32);
        let b = rng.random_range(1..=3u32);
        let m = dims[i % dims.len()];
        let e1 = SpectralExpr::h(&[a, b], HArg::Z1).map_err(run_err)?;
        let p1 = EvalPoint::single(log_uniform(&mut rng, 0.3, 3.0), m).map_err(run_err)?;
        let ev1 = Evaluator::with(p1, Normalization::One, cfg.tol);
        let twice = tau1(&tau1(&e1).map_err(run_err)?).map_err(run_err)?;
        let d1 = rel_diff(
            ev1.eval(&e1).map_err(run_err)?.value,
            ev1.eval(&twice).map_err(run_err)?.value,
        );
        worst1 = worst1.max(d1);

        let c = rng.random_range(1..=2u32);
        let e2 = SpectralExpr::h(&[a.min(2), b.min(2), c], HArg::Z12).map_err(run_err)?;
        let p2 = EvalPoint::new(
            log_uniform(&mut rng, 0.3, 3.0),
            log_uniform(&mut rng, 0.3, 3.0),
            m,
        )
        .map_err(run_err)?;
        let ev2 = Evaluator::with(p2, Normalization::One, cfg.tol);
        let thrice = tau2(&tau2(&tau2(&e2)));
        let d2 = rel_diff(
            ev2.eval(&e2).map_err(run_err)?.value,
            ev2.eval(&thrice).map_err(run_err)?.value,
        );
        worst2 = worst2.max(d2);
    }
    rows.push(CheckRow::judged(
        "recurrences",
        "tau1-involution".into(),
        worst1,
        bound,
        "20 random one-variable atoms".into(),
    ));
    rows.push(CheckRow::judged(
        "recurrences",
        "tau2-order-three".into(),
        worst2,
        bound,
        "20 random two-variable atoms".into(),
    ));

    // Substitution covariance: rewriting with τ must equal evaluating at
    // the transformed point.
    let cases = [
        SpectralExpr::h(&[3, 1], HArg::Z1).map_err(run_err)?,
        SpectralExpr::h(&[1, 2], HArg::Z2).map_err(run_err)?,
        SpectralExpr::h(&[2, 1], HArg::Y2Bar).map_err(run_err)?,
        SpectralExpr::GPow11(YMono::y1(), YMono::y2()),
    ];
    let mut worst_sub2 = 0.0_f64;
    for i in 0..20 {
        let m = dims[i % dims.len()];
        let y1 = log_uniform(&mut rng, 0.4, 2.5);
        let y2 = log_uniform(&mut rng, 0.4, 2.5);
        let here = EvalPoint::new(y1, y2, m).map_err(run_err)?;
        let rotated = EvalPoint::new(1.0 / (y1 * y2), y1, m).map_err(run_err)?;
        for c in &cases {
            let direct = Evaluator::with(rotated, Normalization::One, cfg.tol)
                .eval(c)
                .map_err(run_err)?
                .value;
            let rewritten = Evaluator::with(here, Normalization::One, cfg.tol)
                .eval(&tau2(c))
                .map_err(run_err)?
                .value;
            worst_sub2 = worst_sub2.max(rel_diff(direct, rewritten));
        }
    }
    rows.push(CheckRow::judged(
        "recurrences",
        "tau2-substitution".into(),
        worst_sub2,
        bound,
        "4 atoms at 20 random points".into(),
    ));
    let mut worst_sub1 = 0.0_f64;
    for _ in 0..20 {
        let a = rng.random_range(1..=3u32);
        let b = rng.random_range(1..=3u32);
        let m = dims[rng.random_range(0..dims.len())];
        let y = log_uniform(&mut rng, 0.4, 2.5);
        let e = SpectralExpr::h(&[a, b], HArg::Z1).map_err(run_err)?;
        let direct = Evaluator::with(
            EvalPoint::single(1.0 / y, m).map_err(run_err)?,
            Normalization::One,
            cfg.tol,
        )
        .eval(&e)
        .map_err(run_err)?
        .value;
        let rewritten = Evaluator::with(
            EvalPoint::single(y, m).map_err(run_err)?,
            Normalization::One,
            cfg.tol,
        )
        .eval(&tau1(&e).map_err(run_err)?)
        .map_err(run_err)?
        .value;
        worst_sub1 = worst_sub1.max(rel_diff(direct, rewritten));
    }
    rows.push(CheckRow::judged(
        "recurrences",
        "tau1-substitution".into(),
        worst_sub1,
        bound,
        "20 random one-variable atoms".into(),
    ));

    // The hypergeometric differential equation satisfied by the basic
    // one-variable atom, in both the direct and the reflected form.
    for (name, expr) in [
        ("hypergeometric-ode", v_i_expr()),
        ("hypergeometric-ode-reflected", v_i_reflected_expr()),
    ] {
        let mut worst = 0.0_f64;
        let mut at = String::new();
        let scale_atom = SpectralExpr::h(&[1, 1], HArg::Z1).map_err(run_err)?;
        for i in 0..20 {
            let m = dims[i % dims.len()];
            let y = log_uniform(&mut rng, 0.3, 3.0);
            let p = EvalPoint::single(y, m).map_err(run_err)?;
            let ev = Evaluator::with(p, Normalization::One, cfg.tol);
            let v = ev.eval(&expr).map_err(run_err)?.value;
            let s = ev.eval(&scale_atom).map_err(run_err)?.value;
            let r = v.abs() / 1.0_f64.max(s.abs());
            if r > worst {
                worst = r;
                at = format!("y={y:.4} m={m}");
            }
        }
        rows.push(CheckRow::judged(
            "recurrences",
            name.into(),
            worst,
            bound,
            format!("worst at {at}"),
        ));
    }

    // The doubly rotated, weight-pulled form of the two-variable relation,
    // reduced against the three-atom basis.
    let mut worst_diff = 0.0_f64;
    let mut worst_prod = 0.0_f64;
    let mut warns = 0usize;
    for i in 0..20 {
        let m = dims[i % dims.len()];
        let y1 = log_uniform(&mut rng, 0.4, 2.5);
        let y2 = log_uniform(&mut rng, 0.4, 2.5);
        let p = EvalPoint::new(y1, y2, m).map_err(run_err)?;
        match transformed_relation_residuals(p, cfg.tol) {
            Ok((d, pr)) => {
                worst_diff = worst_diff.max(d);
                worst_prod = worst_prod.max(pr);
            }
            Err(_) => warns += 1,
        }
    }
    let detail = if warns > 0 {
        format!("{warns} of 20 points skipped")
    } else {
        "20 random points".into()
    };
    rows.push(CheckRow::judged(
        "recurrences",
        "transformed-difference-reduction".into(),
        worst_diff,
        bound,
        detail.clone(),
    ));
    rows.push(CheckRow::judged(
        "recurrences",
        "transformed-product-reduction".into(),
        worst_prod,
        bound,
        detail,
    ));
    Ok(rows)
}

fn oracle_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rows = Vec::new();

    // Two independent routes to the spectral component function: adaptive
    // simplex quadrature against the contour integral.
    for i in 0..50 {
        let n = rng.random_range(1..=3usize);
        let l: Vec<u32> = loop {
            let c: Vec<u32> = (0..=n).map(|_| rng.random_range(1..=3u32)).collect();
            if c.iter().sum::<u32>() <= 6 {
                break c;
            }
        };
        let a: Vec<f64> = (0..=n).map(|_| rng.random_range(0.5..4.0)).collect();
        let name = format!("g-dual-route {i:02} l={l:?}");
        let mi = MultiIndex::new(l.clone()).map_err(run_err)?;
        match (simplex_g(&mi, &a, cfg.tol), contour_g(&l, &a, 1e-9)) {
            (Ok(s), Ok(c)) => rows.push(CheckRow::judged(
                "oracles",
                name,
                rel_diff(s, c),
                1e-6,
                format!("simplex={s:.9e} contour={c:.9e}"),
            )),
            (Err(e), _) | (_, Err(e)) => {
                rows.push(CheckRow::warned("oracles", name, 1e-6, e.to_string()));
            }
        }
    }

    // Two independent routes to Gaussian moments: the derivative operator
    // series against the Wick pairing sum.
    for i in 0..50 {
        let m = rng.random_range(1..=4usize);
        let q = DMatrix::<f64>::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let b = q.transpose() * &q + DMatrix::<f64>::identity(m, m) * 0.5;
        let mut f = XiPoly::zero(m);
        for _ in 0..rng.random_range(1..=4usize) {
            let e: Vec<u32> = loop {
                let c: Vec<u32> = (0..m).map(|_| rng.random_range(0..=3u32)).collect();
                if c.iter().sum::<u32>() <= 6 {
                    break c;
                }
            };
            f.add_term(&e, rng.random_range(-2.0..2.0));
        }
        f.add_term(&vec![0; m], 1.0);
        let name = format!("wick-dual-route {i:02} m={m}");
        match (
            gaussian_moment(&b, &f, MomentRoute::OperatorSeries),
            gaussian_moment(&b, &f, MomentRoute::WickPairing),
        ) {
            (Ok(v1), Ok(v2)) => rows.push(CheckRow::judged(
                "oracles",
                name,
                rel_diff(v1, v2),
                1e-12,
                format!("series={v1:.12e} wick={v2:.12e}"),
            )),
            (Err(e), _) | (_, Err(e)) => {
                rows.push(CheckRow::warned("oracles", name, 1e-12, e.to_string()));
            }
        }
    }
    Ok(rows)
}

fn torus_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>, CliError> {
    let theta12 = cfg.theta12()?;
    let fit_cfg = HeatFitConfig {
        radius: cfg.radius,
        ..HeatFitConfig::default()
    };
    let mut rows = Vec::new();
    let xrows = heat_cross_check(theta12, &cfg.eps, &fit_cfg, cfg.leg_radius).map_err(run_err)?;
    for r in &xrows {
        rows.push(CheckRow::judged(
            "torus",
            format!("fit-vs-formula eps={}", r.eps),
            r.rel_gap,
            0.05,
            format!(
                "formula={:.6e} fit={:.6e} v0_gap={:.3e}",
                r.v2_formula,
                r.v2_fit,
                (r.v0_fit - r.v0_closed_form).abs()
            ),
        ));
    }
    // The fit noise floor scales with the truncation radius; below the
    // default radius only a relaxed bound is meaningful.
    let flat_bound = if cfg.radius >= 12 { 1e-6 } else { 1e-4 };
    let flat = WeylFactor::flat(Theta::two_d(theta12));
    let fit = heat_trace_fit(&flat, &fit_cfg).map_err(run_err)?;
    rows.push(CheckRow::judged(
        "torus",
        "flat-curvature-vanishes".into(),
        fit.v2().abs(),
        flat_bound,
        format!("v0={:.9} residual={:.3e}", fit.v0(), fit.residual),
    ));
    Ok(rows)
}

#[derive(Serialize)]
struct VerifyDoc<'a> {
    schema_version: u32,
    suite: &'static str,
    passed: bool,
    failures: usize,
    warnings: usize,
    checks: &'a [CheckRow],
}

fn suite_name(s: SuiteChoice) -> &'static str {
    match s {
        SuiteChoice::All => "all",
        SuiteChoice::Relations => "relations",
        SuiteChoice::Recurrences => "recurrences",
        SuiteChoice::Oracles => "oracles",
        SuiteChoice::Torus => "torus",
    }
}

fn cmd_verify(cfg: &RunConfig, suite: SuiteChoice) -> Result<(String, i32), CliError> {
    let mut rows = Vec::new();
    if matches!(suite, SuiteChoice::All | SuiteChoice::Relations) {
        rows.extend(relation_rows(cfg));
    }
    if matches!(suite, SuiteChoice::All | SuiteChoice::Recurrences) {
        rows.extend(recurrence_rows(cfg)?);
    }
    if matches!(suite, SuiteChoice::All | SuiteChoice::Oracles) {
        rows.extend(oracle_rows(cfg)?);
    }
    if matches!(suite, SuiteChoice::All | SuiteChoice::Torus) {
        rows.extend(torus_rows(cfg)?);
    }
    apply_warn_policy(&mut rows, cfg.max_warn_fraction);

    let failures = rows
        .iter()
        .filter(|r| r.status == CheckStatus::Fail)
        .count();
    let warnings = rows
        .iter()
        .filter(|r| r.status == CheckStatus::Warn)
        .count();

    let text = match cfg.format {
        FormatChoice::Text => {
            let mut out = String::new();
            for r in &rows {
                let status = match r.status {
                    CheckStatus::Pass => "PASS",
                    CheckStatus::Warn => "WARN",
                    CheckStatus::Fail => "FAIL",
                };
                out.push_str(&format!(
                    "{status} [{}] {}: residual {:.3e} (bound {:.1e}) {}\n",
                    r.suite, r.name, r.residual, r.bound, r.detail
                ));
            }
            out.push_str(&format!(
                "{} checks, {} failed, {} warnings\n",
                rows.len(),
                failures,
                warnings
            ));
            out
        }
        FormatChoice::Json => to_json_pretty(&VerifyDoc {
            schema_version: SCHEMA_VERSION,
            suite: suite_name(suite),
            passed: failures == 0,
            failures,
            warnings,
            checks: &rows,
        })?,
        FormatChoice::Csv => {
            let mut out = String::from("suite,name,status,residual,bound,detail\n");
            for r in &rows {
                let status = match r.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Warn => "warn",
                    CheckStatus::Fail => "fail",
                };
                out.push_str(&format!(
                    "{},{},{},{:e},{:e},\"{}\"\n",
                    r.suite, r.name, status, r.residual, r.bound, r.detail
                ));
            }
            out
        }
    };
    Ok((text, if failures == 0 { 0 } else { 1 }))
}

// ---------------------------------------------------------------------------
// heat-xcheck.

#[derive(Clone, Debug, Serialize)]
struct XcheckRow {
    label: String,
    v2_formula: f64,
    v2_fit: f64,
    v0_fit: f64,
    v0_closed_form: f64,
    rel_gap: f64,
    fit_residual: f64,
    fit_condition: f64,
}

#[derive(Serialize)]
struct XcheckDoc<'a> {
    schema_version: u32,
    theta: &'a [f64],
    radius: i64,
    leg_radius: i64,
    rows: &'a [XcheckRow],
}

#[derive(Deserialize)]
struct WeylTermFile {
    index: Vec<i64>,
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Deserialize)]
struct WeylFile {
    schema_version: u32,
    m: usize,
    #[serde(default)]
    theta: Option<Vec<f64>>,
    terms: Vec<WeylTermFile>,
}

fn load_weyl(cfg: &RunConfig, path: &PathBuf) -> Result<WeylFactor, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let file: WeylFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::Usage(format!(
            "{}: schema_version {} is not supported",
            path.display(),
            file.schema_version
        )));
    }
    let theta = match file.theta {
        Some(entries) => Theta::new(file.m, entries).map_err(usage_err)?,
        None => {
            let mut sub = cfg.clone();
            sub.m = file.m;
            sub.theta()?
        }
    };
    let terms: Vec<(Vec<i64>, Complex64)> = file
        .terms
        .iter()
        .map(|t| (t.index.clone(), Complex64::new(t.re, t.im)))
        .collect();
    let h = FourierElement::from_terms(file.m, &terms).map_err(usage_err)?;
    WeylFactor::new(h, theta).map_err(usage_err)
}

fn xcheck_single(
    cfg: &RunConfig,
    weyl: &WeylFactor,
    label: String,
    fit_cfg: &HeatFitConfig,
) -> Result<XcheckRow, CliError> {
    let m = weyl.theta().m();
    let fit = heat_trace_fit(weyl, fit_cfg).map_err(run_err)?;
    let formula = v2_formula_eval(
        weyl,
        &FourierElement::one(m),
        ConformalOp::DeltaK,
        cfg.leg_radius,
        cfg.tol,
    )
    .map_err(run_err)?;
    let v2f = formula.value.re;
    let kpow = weyl.power(-(m as f64) / 2.0).map_err(run_err)?;
    let v0_closed = std::f64::consts::PI.powf(m as f64 / 2.0) * kpow.trace0().re;
    let scale = weyl.h().l2_norm().powi(2);
    Ok(XcheckRow {
        label,
        v2_formula: v2f,
        v2_fit: fit.v2(),
        v0_fit: fit.v0(),
        v0_closed_form: v0_closed,
        rel_gap: (v2f - fit.v2()).abs() / v2f.abs().max(scale).max(1e-300),
        fit_residual: fit.residual,
        fit_condition: fit.condition,
    })
}

fn cmd_heat_xcheck(cfg: &RunConfig) -> Result<String, CliError> {
    let fit_cfg = HeatFitConfig {
        radius: cfg.radius,
        ..HeatFitConfig::default()
    };
    let rows: Vec<XcheckRow> = match &cfg.weyl {
        Some(path) => {
            let weyl = load_weyl(cfg, path)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "weyl".into());
            vec![xcheck_single(cfg, &weyl, label, &fit_cfg)?]
        }
        None => {
            let theta12 = cfg.theta12()?;
            heat_cross_check(theta12, &cfg.eps, &fit_cfg, cfg.leg_radius)
                .map_err(run_err)?
                .into_iter()
                .map(|r| XcheckRow {
                    label: format!("eps={}", r.eps),
                    v2_formula: r.v2_formula,
                    v2_fit: r.v2_fit,
                    v0_fit: r.v0_fit,
                    v0_closed_form: r.v0_closed_form,
                    rel_gap: r.rel_gap,
                    fit_residual: r.fit_residual,
                    fit_condition: r.fit_condition,
                })
                .collect()
        }
    };

    match cfg.format {
        FormatChoice::Text => {
            let mut out = String::new();
            for r in &rows {
                out.push_str(&format!(
                    "{}: v2_formula={:+.6e} v2_fit={:+.6e} rel_gap={:.3e} v0_fit={:.9} v0_closed={:.9}\n",
                    r.label, r.v2_formula, r.v2_fit, r.rel_gap, r.v0_fit, r.v0_closed_form
                ));
            }
            Ok(out)
        }
        FormatChoice::Json => to_json_pretty(&XcheckDoc {
            schema_version: SCHEMA_VERSION,
            theta: &cfg.theta_upper,
            radius: cfg.radius,
            leg_radius: cfg.leg_radius,
            rows: &rows,
        }),
        FormatChoice::Csv => {
            let mut out = String::from(
                "label,v2_formula,v2_fit,v0_fit,v0_closed_form,rel_gap,fit_residual,fit_condition\n",
            );
            for r in &rows {
                out.push_str(&format!(
                    "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                    r.label,
                    r.v2_formula,
                    r.v2_fit,
                    r.v0_fit,
                    r.v0_closed_form,
                    r.rel_gap,
                    r.fit_residual,
                    r.fit_condition
                ));
            }
            Ok(out)
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_overrides_defaults_and_rejects_unknown_keys() {
        let mut cfg = RunConfig::default();
        cfg.apply_config_text(
            "# comment\nm = 3\nalpha = 2,1\ntol = 1e-9\nnorm = pi\nL = 8\ntheta = 0.1,0.2,0.3\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.m, 3);
        assert_eq!(cfg.alpha, vec![2, 1]);
        assert_eq!(cfg.tol.abs, 1e-9);
        assert_eq!(cfg.norm, Normalization::GaussPi);
        assert_eq!(cfg.radius, 8);
        assert_eq!(cfg.theta_upper, vec![0.1, 0.2, 0.3]);

        let err = cfg.apply_config_text("nonsense = 1\n", "test").unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
        let err = cfg.apply_config_text("just a line\n", "test").unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn validation_rejects_bad_tolerances_and_grids() {
        let mut cfg = RunConfig::default();
        cfg.tol = Tol::new(0.0, 1e-10);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.eps.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.max_warn_fraction = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn theta_assembly_respects_the_upper_triangle() {
        let mut cfg = RunConfig::default();
        cfg.m = 3;
        cfg.theta_upper = vec![0.1, 0.2, 0.3];
        let theta = cfg.theta().unwrap();
        assert_eq!(theta.get(0, 1), 0.1);
        assert_eq!(theta.get(0, 2), 0.2);
        assert_eq!(theta.get(1, 2), 0.3);
        assert_eq!(theta.get(2, 1), -0.3);

        cfg.theta_upper = vec![0.1];
        assert!(cfg.theta().is_err());
    }

    #[test]
    fn eval_h_reproduces_the_constant_integrand_anchor() {
        let cfg = RunConfig::default();
        let text = cmd_eval_h(&cfg).unwrap();
        // α = (1,1) at z = 0 in dimension two integrates the constant and
        // carries the full Gaussian normalization 2π.
        let expected = 2.0 * std::f64::consts::PI;
        let value: f64 = text
            .split('=')
            .nth(1)
            .unwrap()
            .split_whitespace()
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!((value - expected).abs() < 1e-8);
    }

    #[test]
    fn eval_h_broadcasts_single_arguments_and_rejects_mismatches() {
        let mut cfg = RunConfig::default();
        cfg.alpha = vec![1, 1, 1];
        cfg.z = vec![0.25];
        assert!(cmd_eval_h(&cfg).is_ok());
        cfg.z = vec![0.25, 0.5];
        assert!(matches!(cmd_eval_h(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn custom_weight_tables_are_a_usage_error() {
        let cfg = RunConfig::default();
        let err = cmd_v2(&cfg, V2Form::Conformal, OpChoice::Custom).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }

    #[test]
    fn conformal_term_list_prints_both_tables() {
        let cfg = RunConfig::default();
        let text = cmd_v2(&cfg, V2Form::Conformal, OpChoice::DeltaK).unwrap();
        assert!(text.contains("Hg_{3,1}(z1)"), "{text}");
        assert!(text.contains("Hg_{2,1}(z1)"), "{text}");
        assert!(text.contains("m + 2"), "{text}");

        let mut cfg = RunConfig::default();
        cfg.format = FormatChoice::Json;
        let json = cmd_v2(&cfg, V2Form::Conformal, OpChoice::DeltaK).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["op"], "delta_k");
    }

    #[test]
    fn weyl_files_round_trip_into_factors() {
        let cfg = RunConfig::default();
        let dir = std::env::temp_dir().join("nctheat-cli-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weyl.json");
        fs::write(
            &path,
            r#"{
                "schema_version": 1,
                "m": 2,
                "theta": [0.0, 0.3, -0.3, 0.0],
                "terms": [
                    {"index": [1, 0], "re": 0.05},
                    {"index": [-1, 0], "re": 0.05}
                ]
            }"#,
        )
        .unwrap();
        let weyl = load_weyl(&cfg, &path).unwrap();
        assert_eq!(weyl.theta().m(), 2);
        assert!((weyl.h().l2_norm() - (2.0_f64 * 0.05 * 0.05).sqrt()).abs() < 1e-15);
        fs::remove_file(&path).unwrap();
    }

    #[test]
    fn warn_policy_fails_suites_with_too_many_skipped_points() {
        let mut rows = vec![
            CheckRow::judged("relations", "a".into(), 0.0, 1e-8, String::new()),
            CheckRow::warned("relations", "b".into(), 1e-8, "skipped".into()),
        ];
        apply_warn_policy(&mut rows, 0.05);
        assert!(rows.iter().any(|r| r.status == CheckStatus::Fail));

        let mut rows = vec![
            CheckRow::judged("relations", "a".into(), 0.0, 1e-8, String::new()),
            CheckRow::warned("relations", "b".into(), 1e-8, "skipped".into()),
        ];
        apply_warn_policy(&mut rows, 0.5);
        assert!(rows.iter().all(|r| r.status != CheckStatus::Fail));
    }
}
