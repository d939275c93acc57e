//! Batch scenario runner: parse a scenario file, dispatch to the module
//! operations, write results atomically, and replay prior results
//! bit-exactly.
//!
//! Scenario files are JSON with a `command` discriminator, a mandatory
//! `seed` (wall-clock seeding would break the replay contract), a
//! sample/path `budget`, a command-specific `payload`, and an `output`
//! spec. Result files embed the fully resolved scenario plus a config
//! hash over everything except the seed, so replay can distinguish a
//! tampered configuration (exit 2) from divergent estimates (exit 4).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimate::EstimateCI;
use crate::large_deviations::{
    dependence_condition_scan, ldp_ratio_fixed_n, ldp_ratio_random_sum, weak_equivalence_check,
    LdpScenario,
};
use crate::mixtures::{breiman_constant, sbj_sum_ratio, verify_breiman, MixturePair};
use crate::rare_sets::{RareSet, RuinSet, RuinSetKind};
use crate::risk_model::{
    constant_c0, constant_c0_oracle, constant_cr, constant_cr_oracle, ruin_ratio_scan, RiskConfig,
};
use crate::rng::McRunner;
use crate::tails::{class_profile, matuszewska_estimate, TailModel};
use crate::vectors::{Ray, VectorModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    /// Sample or path budget, depending on the command.
    #[serde(alias = "n_samples", alias = "n_paths")]
    pub budget: u64,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: String,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "payload", rename_all = "snake_case")]
pub enum Command {
    Classify(ClassifyPayload),
    Tailprob(TailprobPayload),
    Breiman(BreimanPayload),
    Sbj(SbjPayload),
    Constants(ConstantsPayload),
    Ruin(RuinPayload),
    Ldp(LdpPayload),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify(_) => "classify",
            Command::Tailprob(_) => "tailprob",
            Command::Breiman(_) => "breiman",
            Command::Sbj(_) => "sbj",
            Command::Constants(_) => "constants",
            Command::Ruin(_) => "ruin",
            Command::Ldp(_) => "ldp",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifyPayload {
    pub model: TailModel,
    pub b_grid: Vec<f64>,
    pub x_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailprobPayload {
    pub model: VectorModel,
    pub set: RareSet,
    pub x_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreimanPayload {
    pub model: VectorModel,
    pub set: RareSet,
    pub coupling: crate::mixtures::FgmCoupling,
    pub alpha: f64,
    pub x_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbjPayload {
    pub pairs: Vec<MixturePair>,
    pub x_grid: Vec<f64>,
    /// Use the per-pair weighted constants in the denominator instead of
    /// the pair mixture tails.
    #[serde(default)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsPayload {
    pub lambda: f64,
    pub t: f64,
    pub r: f64,
    #[serde(default)]
    pub fgm_theta: f64,
    /// Claim tail index; required when `r > 0`.
    #[serde(default)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuinPayload {
    pub config: RiskConfig,
    pub alpha: f64,
    pub x_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdpPayload {
    pub models: Vec<VectorModel>,
    pub set: RareSet,
    pub gamma: f64,
    #[serde(default)]
    pub shift_c: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(flatten)]
    pub mode: LdpMode,
    pub x_grid: Vec<f64>,
    /// Optional summand-count grid for the dependence-condition scan.
    #[serde(default)]
    pub n_grid: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LdpMode {
    FixedN { n: usize },
    RandomSum { t: f64 },
}

/// Result file layout: resolved scenario, seed-independent config hash,
/// and the command results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub scenario: Scenario,
    pub config_hash: String,
    pub results: serde_json::Value,
}

#[derive(Debug)]
pub enum RunError {
    /// Schema or parameter problem (exit 2).
    Validation(String),
    /// Statistically meaningless request (exit 3).
    Infeasible(String),
    /// Replay divergence (exit 4).
    Mismatch(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Infeasible(_) => 3,
            RunError::Mismatch(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            RunError::Validation(m) | RunError::Infeasible(m) | RunError::Mismatch(m) => m,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e.exit_code() {
            3 => RunError::Infeasible(e.to_string()),
            _ => RunError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Validation(format!("io error: {e}"))
    }
}

pub struct RunSummary {
    pub command: &'static str,
    pub headline: String,
    pub out_path: PathBuf,
    pub wall_seconds: f64,
}

/// Parses a scenario file, reporting schema violations with a JSON
/// pointer to the offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario, RunError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let pointer = path_to_pointer(&e.path().to_string());
        RunError::Validation(format!("schema violation at {pointer}: {}", e.inner()))
    })?;
    if scenario.budget < 1 {
        return Err(RunError::Validation(
            "schema violation at /budget: budget must be at least 1".into(),
        ));
    }
    Ok(scenario)
}

fn path_to_pointer(dotted: &str) -> String {
    if dotted == "." {
        return "/".into();
    }
    let mut out = String::new();
    for seg in dotted.split('.') {
        out.push('/');
        out.push_str(seg);
    }
    out
}

/// Hash over the scenario with the seed zeroed: replays must re-run the
/// identical configuration but may legitimately differ in seed only by
/// tampering, which the estimate comparison catches instead.
pub fn config_hash(scenario: &Scenario) -> String {
    let mut stripped = scenario.clone();
    stripped.seed = 0;
    let json = serde_json::to_string(&stripped).expect("scenario serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Runs a scenario file and writes the result atomically. `threads = 1`
/// selects the single-threaded reduction mode; the chunked streams make
/// both modes produce identical estimates.
pub fn run_scenario_file(
    path: &Path,
    threads: usize,
    out_override: Option<&Path>,
    expected_command: Option<&str>,
) -> Result<RunSummary, RunError> {
    let text = fs::read_to_string(path)?;
    let mut scenario = parse_scenario(&text)?;
    if let Some(expect) = expected_command {
        if scenario.command.name() != expect {
            return Err(RunError::Validation(format!(
                "scenario file holds a '{}' command, invoked as '{expect}'",
                scenario.command.name()
            )));
        }
    }
    if let Some(out) = out_override {
        scenario.output.path = out.to_string_lossy().into_owned();
    }
    let start = Instant::now();
    let (results, table, headline) = execute(&scenario, threads > 1)?;
    let wall = start.elapsed().as_secs_f64();

    let result_file = ResultFile {
        config_hash: config_hash(&scenario),
        scenario,
        results,
    };
    let out_path = PathBuf::from(&result_file.scenario.output.path);
    match result_file.scenario.output.format {
        OutputFormat::Json => {
            let body = serde_json::to_string_pretty(&result_file)
                .map_err(|e| RunError::Validation(format!("serialize results: {e}")))?;
            atomic_write(&out_path, body.as_bytes())?;
        }
        OutputFormat::Csv => {
            let mut body = String::new();
            body.push_str(&table.header.join(","));
            body.push('\n');
            for row in &table.rows {
                body.push_str(&row.join(","));
                body.push('\n');
            }
            atomic_write(&out_path, body.as_bytes())?;
            // sidecar with full provenance so CSV runs stay replayable
            let meta = out_path.with_extension("meta.json");
            let body = serde_json::to_string_pretty(&result_file)
                .map_err(|e| RunError::Validation(format!("serialize results: {e}")))?;
            atomic_write(&meta, body.as_bytes())?;
        }
    }
    Ok(RunSummary {
        command: result_file.scenario.command.name(),
        headline,
        out_path,
        wall_seconds: wall,
    })
}

/// Re-runs the scenario embedded in a result file (single-threaded
/// reduction mode) and demands bit-identical results.
pub fn replay_result_file(path: &Path) -> Result<RunSummary, RunError> {
    let text = fs::read_to_string(path)?;
    let stored: ResultFile = serde_json::from_str(&text)
        .map_err(|e| RunError::Validation(format!("result file does not parse: {e}")))?;
    let recomputed = config_hash(&stored.scenario);
    if recomputed != stored.config_hash {
        return Err(RunError::Validation(format!(
            "config hash mismatch: stored {}, recomputed {recomputed}",
            stored.config_hash
        )));
    }
    let start = Instant::now();
    let (results, _, headline) = execute(&stored.scenario, false)?;
    let wall = start.elapsed().as_secs_f64();
    if let Some(divergence) = first_divergence("/results", &stored.results, &results) {
        return Err(RunError::Mismatch(format!(
            "replay diverged at {divergence}"
        )));
    }
    Ok(RunSummary {
        command: stored.scenario.command.name(),
        headline: format!("replay identical; {headline}"),
        out_path: path.to_path_buf(),
        wall_seconds: wall,
    })
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// First path where two result trees differ, if any.
pub fn first_divergence(
    prefix: &str,
    a: &serde_json::Value,
    b: &serde_json::Value,
) -> Option<String> {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            for (k, va) in ma {
                match mb.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_divergence(&format!("{prefix}/{k}"), va, vb) {
                            return Some(d);
                        }
                    }
                    None => return Some(format!("{prefix}/{k} (missing)")),
                }
            }
            for k in mb.keys() {
                if !ma.contains_key(k) {
                    return Some(format!("{prefix}/{k} (extra)"));
                }
            }
            None
        }
        (Value::Array(va), Value::Array(vb)) => {
            if va.len() != vb.len() {
                return Some(format!("{prefix} (length {} vs {})", va.len(), vb.len()));
            }
            for (i, (x, y)) in va.iter().zip(vb).enumerate() {
                if let Some(d) = first_divergence(&format!("{prefix}/{i}"), x, y) {
                    return Some(d);
                }
            }
            None
        }
        _ => {
            if a == b {
                None
            } else {
                Some(format!("{prefix} ({a} vs {b})"))
            }
        }
    }
}

pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("result serializes")
}

/// Dispatches a scenario to the module operations.
pub fn execute(
    scenario: &Scenario,
    parallel: bool,
) -> Result<(serde_json::Value, CsvTable, String), RunError> {
    let runner = McRunner {
        seed: scenario.seed,
        parallel,
    };
    let budget = scenario.budget;
    match &scenario.command {
        Command::Classify(p) => {
            p.model.validate()?;
            let (j_minus, j_plus) = matuszewska_estimate(&p.model, &p.b_grid, p.x_max)?;
            let profile = class_profile(&p.model);
            let results = serde_json::json!({
                "profile": json(&profile),
                "j_minus_hat": j_minus,
                "j_plus_hat": j_plus,
            });
            let table = CsvTable {
                header: vec!["j_minus_hat", "j_plus_hat", "in_d", "in_pd"],
                rows: vec![vec![
                    j_minus.to_string(),
                    j_plus.to_string(),
                    profile.in_d.to_string(),
                    profile.in_pd.to_string(),
                ]],
            };
            let headline = format!("j_minus_hat={j_minus:.6} j_plus_hat={j_plus:.6}");
            Ok((results, table, headline))
        }
        Command::Tailprob(p) => {
            p.model.validate()?;
            let mut rows = Vec::new();
            let mut csv = Vec::new();
            let mut last: Option<EstimateCI> = None;
            for &x in &p.x_grid {
                let exact = p.model.fa_tail_exact(&p.set, x);
                let estimate = p.model.fa_tail_mc(&p.set, x, &runner, budget)?;
                rows.push(serde_json::json!({
                    "x": x,
                    "exact": exact,
                    "estimate": json(&estimate),
                }));
                csv.push(vec![
                    x.to_string(),
                    exact.map_or(String::new(), |v| v.to_string()),
                    estimate.value.to_string(),
                    estimate.std_error.to_string(),
                ]);
                last = Some(estimate);
            }
            let headline = match last {
                Some(e) => format!("estimate={} std_error={}", e.value, e.std_error),
                None => "empty grid".into(),
            };
            Ok((
                serde_json::json!({ "rows": rows }),
                CsvTable {
                    header: vec!["x", "exact", "estimate", "std_error"],
                    rows: csv,
                },
                headline,
            ))
        }
        Command::Breiman(p) => {
            let pair = MixturePair::new(p.model.clone(), p.set.clone(), p.coupling.clone())?;
            let constant = breiman_constant(&p.coupling, p.alpha)?;
            let rows = verify_breiman(&pair, p.alpha, &p.x_grid, &runner, budget)?;
            let csv = rows
                .iter()
                .map(|(x, est)| {
                    vec![
                        x.to_string(),
                        est.value.to_string(),
                        est.std_error.to_string(),
                    ]
                })
                .collect();
            let last = rows.last().map(|(_, e)| *e);
            let results = serde_json::json!({
                "constant": constant,
                "rows": rows.iter().map(|(x, est)| serde_json::json!({
                    "x": x, "ratio": json(est),
                })).collect::<Vec<_>>(),
            });
            let headline = match last {
                Some(e) => format!(
                    "constant={constant:.9} ratio_at_xmax={} std_error={}",
                    e.value, e.std_error
                ),
                None => format!("constant={constant:.9}"),
            };
            Ok((
                results,
                CsvTable {
                    header: vec!["x", "ratio", "std_error"],
                    rows: csv,
                },
                headline,
            ))
        }
        Command::Sbj(p) => {
            let rows = if p.weighted {
                crate::mixtures::mrv_weighted_sum_check(&p.pairs, &p.x_grid, &runner, budget)?
            } else {
                sbj_sum_ratio(&p.pairs, &p.x_grid, &runner, budget)?
            };
            let csv = rows
                .iter()
                .map(|r| {
                    vec![
                        r.x.to_string(),
                        r.ratio.to_string(),
                        r.ratio_se.to_string(),
                        r.denominator.to_string(),
                        r.subadditivity_violations.to_string(),
                    ]
                })
                .collect();
            let headline = rows
                .last()
                .map(|r| {
                    format!(
                        "ratio_at_xmax={} std_error={} subadd_violations={}",
                        r.ratio, r.ratio_se, r.subadditivity_violations
                    )
                })
                .unwrap_or_else(|| "empty grid".into());
            Ok((
                serde_json::json!({ "rows": json(&rows) }),
                CsvTable {
                    header: vec!["x", "ratio", "std_error", "denominator", "subadd_violations"],
                    rows: csv,
                },
                headline,
            ))
        }
        Command::Constants(p) => {
            let cfg = constants_config(p)?;
            let (mc, oracle, closed_form) = if p.r > 0.0 {
                let alpha = p.alpha.ok_or_else(|| {
                    RunError::Validation("discounted constant needs alpha".into())
                })?;
                let mc = constant_cr(&cfg, &runner, budget)?;
                let oracle = constant_cr_oracle(&cfg, alpha)?;
                let closed = (p.fgm_theta == 0.0).then(|| {
                    p.lambda * (1.0 - (-alpha * p.r * p.t).exp()) / (alpha * p.r)
                });
                (mc, oracle, closed)
            } else {
                let mc = constant_c0(&cfg, &runner, budget)?;
                let oracle = constant_c0_oracle(&cfg)?;
                let closed = (p.fgm_theta == 0.0).then(|| p.lambda * p.t);
                (mc, oracle, closed)
            };
            let results = serde_json::json!({
                "estimate": json(&mc),
                "oracle": json(&oracle),
                "closed_form": closed_form,
            });
            let table = CsvTable {
                header: vec!["estimate", "std_error", "oracle", "closed_form"],
                rows: vec![vec![
                    mc.value.to_string(),
                    mc.std_error.to_string(),
                    oracle.value.to_string(),
                    closed_form.map_or(String::new(), |v| v.to_string()),
                ]],
            };
            let headline = format!(
                "estimate={} std_error={} oracle={}",
                mc.value, mc.std_error, oracle.value
            );
            Ok((results, table, headline))
        }
        Command::Ruin(p) => {
            let rows = ruin_ratio_scan(&p.config, p.alpha, &p.x_grid, &runner, budget)?;
            let constant = if p.config.interest == 0.0 {
                constant_c0_oracle(&p.config)?
            } else {
                constant_cr_oracle(&p.config, p.alpha)?
            };
            let csv = rows
                .iter()
                .map(|r| {
                    vec![
                        r.x.to_string(),
                        r.psi.value.to_string(),
                        r.psi.std_error.to_string(),
                        r.prediction.to_string(),
                        r.ratio.to_string(),
                    ]
                })
                .collect();
            let headline = rows
                .last()
                .map(|r| {
                    format!(
                        "psi_at_xmax={} prediction={} ratio={}",
                        r.psi.value, r.prediction, r.ratio
                    )
                })
                .unwrap_or_else(|| "empty grid".into());
            Ok((
                serde_json::json!({
                    "constant": json(&constant),
                    "rows": json(&rows),
                }),
                CsvTable {
                    header: vec!["x", "psi_hat", "std_error", "prediction", "ratio"],
                    rows: csv,
                },
                headline,
            ))
        }
        Command::Ldp(p) => {
            let ldp = LdpScenario {
                models: p.models.clone(),
                set: p.set.clone(),
                gamma: p.gamma,
                shift_c: p.shift_c,
                lambda: p.lambda,
            };
            let (scan, mode_label, mode_value) = match p.mode {
                LdpMode::FixedN { n } => (
                    ldp_ratio_fixed_n(&ldp, n, &p.x_grid, &runner, budget)?,
                    "n",
                    n as f64,
                ),
                LdpMode::RandomSum { t } => (
                    ldp_ratio_random_sum(&ldp, t, &p.x_grid, &runner, budget)?,
                    "t",
                    t,
                ),
            };
            let dependence = match &p.n_grid {
                Some(n_grid) => Some(dependence_condition_scan(&ldp, n_grid, &runner, budget)?),
                None => None,
            };
            let probe_x = p.x_grid.first().copied().unwrap_or(1.0);
            let weak = if p
                .models
                .iter()
                .all(|m| m.fa_tail_exact(&p.set, probe_x).is_some())
            {
                Some(weak_equivalence_check(&p.models, &p.set, &p.x_grid)?)
            } else {
                None
            };
            let csv = scan
                .rows
                .iter()
                .map(|r| {
                    vec![
                        mode_value.to_string(),
                        r.x.to_string(),
                        r.ratio.to_string(),
                        r.ratio_se.to_string(),
                        match r.bonferroni_ok {
                            Some(true) => "ok".into(),
                            Some(false) => "bonferroni_violated".into(),
                            None => String::new(),
                        },
                    ]
                })
                .collect();
            let headline = format!("min_ratio={} over {} grid points", scan.min_ratio, scan.rows.len());
            Ok((
                serde_json::json!({
                    "mode": mode_label,
                    "scan": json(&scan),
                    "dependence": dependence.as_ref().map(json),
                    "weak_equivalence": weak.as_ref().map(json),
                }),
                CsvTable {
                    header: vec!["n_or_t", "x", "ratio", "std_error", "flag"],
                    rows: csv,
                },
                headline,
            ))
        }
    }
}

/// Minimal risk configuration carrying only what the limiting-constant
/// estimators read: intensity, horizon, interest, coupling and (for the
/// discounted constant) the claim tail index.
fn constants_config(p: &ConstantsPayload) -> Result<RiskConfig, RunError> {
    let alpha = p.alpha.unwrap_or(1.0);
    if p.r > 0.0 && p.alpha.is_none() {
        return Err(RunError::Validation(
            "discounted constant needs alpha".into(),
        ));
    }
    let cfg = RiskConfig {
        lambda: p.lambda,
        horizon: p.t,
        interest: p.r,
        claim_model: VectorModel::MrvRay {
            alpha,
            radius: TailModel::Pareto { alpha, scale: 1.0 },
            rays: vec![Ray {
                w: 1.0,
                dir: vec![1.0],
            }],
        },
        fgm_theta: p.fgm_theta,
        premium_rates: vec![0.0],
        allocation: vec![1.0],
        ruin_set: RuinSet {
            kind: RuinSetKind::TotalSum,
            dim: 1,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}
