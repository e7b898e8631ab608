//! Run configuration, command implementations and CSV output.
//!
//! Every CSV starts with a `# schema: cbdi.<command> v1` line followed by the column header.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary_params::{estimate_rho, estimate_theta, xi_of_pair, LimitEstimate};
use crate::classifier::{classify_infinity, classify_zero, BoundaryReport, ClassifierConfig, Flag, Verdict};
use crate::duality_lab::{duality_check, DualityConfig, DualityGrid, DualityReport};
use crate::mechanisms::{JumpMeasure, Mechanism, PhiPart, SigmaPart};
use crate::simulator::{
    hitting_statistics, simulate_dual_killed, simulate_minimal, simulate_truncated, NoiseBundle, Path, SimConfig,
    SimError, State,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSpec {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub eta: JumpMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub nu: JumpMeasure,
}

/// A mechanism as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    Zero,
    /// Σ coef·x^index
    PowerSum { terms: Vec<[f64; 2]> },
    /// a x² − γ x − λ + ∫(e^{−ux} − 1 + ux 1_{u≤1}) π(du)
    Levy {
        #[serde(default)]
        diffusion: f64,
        #[serde(default)]
        drift: f64,
        #[serde(default)]
        killing: f64,
        #[serde(default)]
        jumps: JumpMeasure,
    },
    /// Σ − Φ from explicit parts
    Parts { sigma: SigmaSpec, phi: PhiSpec },
}

impl Default for MechanismSpec {
    fn default() -> Self {
        MechanismSpec::Zero
    }
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Validation { key: key.to_string(), message: message.to_string() }
}

impl MechanismSpec {
    pub fn build(&self, key: &str) -> Result<Mechanism, ConfigError> {
        let nonneg = |v: f64, field: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&format!("{key}.{field}"), format!("must be finite and ≥ 0, got {v}")))
            }
        };
        let m = match self {
            MechanismSpec::Zero => Ok(Mechanism::zero()),
            MechanismSpec::PowerSum { terms } => {
                let t: Vec<(f64, f64)> = terms.iter().map(|p| (p[0], p[1])).collect();
                Mechanism::power_sum(&t)
            }
            MechanismSpec::Levy { diffusion, drift, killing, jumps } => {
                nonneg(*diffusion, "diffusion")?;
                nonneg(*killing, "killing")?;
                Mechanism::new(jumps.clone(), *diffusion, *drift, *killing)
            }
            MechanismSpec::Parts { sigma, phi } => {
                nonneg(sigma.a, "sigma.a")?;
                nonneg(sigma.d, "sigma.d")?;
                nonneg(phi.beta, "phi.beta")?;
                nonneg(phi.lambda, "phi.lambda")?;
                let s = SigmaPart::new(sigma.a, sigma.d, sigma.eta.clone()).map_err(|e| invalid(&format!("{key}.sigma"), e))?;
                let p = PhiPart::new(phi.beta, phi.nu.clone(), phi.lambda).map_err(|e| invalid(&format!("{key}.phi"), e))?;
                Mechanism::from_parts(s, p)
            }
        };
        m.map_err(|e| invalid(key, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulateKind {
    Minimal,
    Truncated,
    DualKilled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    pub kind: SimulateKind,
    pub x0: f64,
    /// truncation level for `truncated`
    pub n: f64,
    /// killing rate for `dual_killed`
    pub lambda_n: f64,
    /// first-passage levels; a non-empty list adds a hitting summary
    pub levels: Vec<f64>,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock { kind: SimulateKind::Minimal, x0: 1.0, n: 1e4, lambda_n: 1.0, levels: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualityBlock {
    pub grid: DualityGrid,
    pub k: f64,
    pub recheck: bool,
    /// smallest passing fraction of cells for exit code 0
    pub min_pass_fraction: f64,
}

impl Default for DualityBlock {
    fn default() -> Self {
        DualityBlock { grid: DualityGrid::default(), k: 3.0, recheck: false, min_pass_fraction: 17.0 / 18.0 }
    }
}

/// Sweep of the stable pair Ψ(y) = −c y^α, Ψ̂(x) = Ĉ x^{2−α} over α and c/Ĉ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseBlock {
    pub alphas: Vec<f64>,
    pub ratio_from: f64,
    pub ratio_to: f64,
    pub points: usize,
    pub c_hat: f64,
}

impl Default for PhaseBlock {
    fn default() -> Self {
        PhaseBlock { alphas: vec![0.5], ratio_from: 0.3, ratio_to: 1.2, points: 64, c_hat: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// overrides `sim.seed` when present
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub psi: MechanismSpec,
    #[serde(default)]
    pub psi_hat: MechanismSpec,
    #[serde(default)]
    pub classify: ClassifierConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub duality: DualityBlock,
    #[serde(default)]
    pub phase: PhaseBlock,
}

impl RunConfig {
    pub fn mechanisms(&self) -> Result<(Mechanism, Mechanism), ConfigError> {
        Ok((self.psi.build("psi")?, self.psi_hat.build("psi_hat")?))
    }

    pub fn sim_config(&self) -> SimConfig {
        let mut s = self.sim.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        if let Some(rest) = msg.strip_prefix("unknown field `") {
            let key = rest.split('`').next().unwrap_or("").to_string();
            return ConfigError::Validation { key, message: msg };
        }
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse { line, column, message: msg }
    })?;
    cfg.mechanisms()?;
    cfg.sim_config().validate().map_err(|e| invalid("sim", e))?;
    if !(cfg.classify.tau >= 0.0 && cfg.classify.tau < 1.0) {
        return Err(invalid("classify.tau", "must lie in [0, 1)"));
    }
    for &a in &cfg.phase.alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid("phase.alphas", format!("α = {a} outside (0, 1)")));
        }
    }
    if !(cfg.phase.c_hat > 0.0) {
        return Err(invalid("phase.c_hat", "must be positive"));
    }
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config(&text)
}

/// Result of one command: CSV text, an optional human-readable table and the exit code.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub csv: String,
    pub table: Option<String>,
    /// gnuplot data blocks separated by two blank lines
    pub gnuplot: Option<String>,
    pub exit_code: i32,
}

struct Csv {
    w: csv::Writer<Vec<u8>>,
    schema: String,
}

impl Csv {
    fn new(name: &str, header: &[&str]) -> Csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory csv");
        Csv { w, schema: format!("# schema: cbdi.{name} v1\n") }
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, r: I) {
        self.w.write_record(r.into_iter().collect::<Vec<_>>()).expect("in-memory csv");
    }

    fn finish(self) -> String {
        let body = String::from_utf8(self.w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
        self.schema + &body
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn bounds(e: &Option<LimitEstimate>) -> [String; 2] {
    match e {
        Some(e) => [num(e.liminf_est), num(e.limsup_est)],
        None => [String::new(), String::new()],
    }
}

fn flag(f: Flag) -> String {
    format!("{f:?}")
}

fn tri(b: Option<bool>) -> String {
    b.map_or("unknown".into(), |v| v.to_string())
}

/// ∞ of the extension of CBDI(Ψ, Ψ̂) and 0 of the extension of CBDI(Ψ̂, Ψ).
pub fn classify_pair(psi: &Mechanism, psi_hat: &Mechanism, cfg: &ClassifierConfig) -> (BoundaryReport, BoundaryReport) {
    (classify_infinity(psi, psi_hat, cfg), classify_zero(psi_hat, psi, cfg))
}

pub fn cmd_classify(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (psi, psi_hat) = cfg.mechanisms()?;
    let (inf, zero) = classify_pair(&psi, &psi_hat, &cfg.classify);
    let mut csv = Csv::new(
        "classify",
        &[
            "process", "boundary", "verdict", "accessible", "absorbing", "theta_lower", "theta_upper", "rho_lower",
            "rho_upper", "regular_for_itself", "non_sticky", "rationale", "missing",
        ],
    );
    let mut table = String::new();
    for (proc_name, r) in [("X", &inf), ("Y", &zero)] {
        let b = if r.boundary == crate::classifier::Boundary::Infinity { "inf" } else { "0" };
        let [tl, tu] = bounds(&r.theta);
        let [rl, ru] = bounds(&r.rho);
        csv.row([
            proc_name.to_string(),
            b.to_string(),
            r.verdict.to_string(),
            tri(r.accessible),
            tri(r.absorbing),
            tl,
            tu,
            rl,
            ru,
            flag(r.regular_for_itself),
            flag(r.non_sticky),
            r.rationale.join("; "),
            r.missing.join("; "),
        ]);
        let sym = if b == "inf" { "∞" } else { "0" };
        table.push_str(&format!("{sym}: {} ({proc_name})\n", r.verdict));
        for line in &r.rationale {
            table.push_str(&format!("    {line}\n"));
        }
        for line in &r.missing {
            table.push_str(&format!("    missing: {line}\n"));
        }
    }
    let indeterminate = inf.verdict == Verdict::Indeterminate || zero.verdict == Verdict::Indeterminate;
    Ok(Outcome {
        name: "classify",
        csv: csv.finish(),
        table: Some(table),
        gnuplot: None,
        exit_code: if indeterminate { 2 } else { 0 },
    })
}

pub fn cmd_params(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (psi, psi_hat) = cfg.mechanisms()?;
    let d = psi.decomposition();
    let dh = psi_hat.decomposition();
    let g = &cfg.classify.grid;
    let rows = [
        ("theta_phi_sigmahat", estimate_theta(&d.phi, &dh.sigma, g)),
        ("rho_sigmahat_phi", estimate_rho(&dh.sigma, &d.phi, g)),
        ("theta_phihat_sigma", estimate_theta(&dh.phi, &d.sigma, g)),
        ("rho_sigma_phihat", estimate_rho(&d.sigma, &dh.phi, g)),
        ("xi_phi_sigmahat", xi_of_pair(&d.phi, &dh.sigma, g)),
    ];
    let mut csv = Csv::new("params", &["parameter", "lower", "upper", "method", "converged", "rule", "error"]);
    for (name, r) in rows {
        match r {
            Ok(e) => csv.row([
                name.to_string(),
                num(e.liminf_est),
                num(e.limsup_est),
                format!("{:?}", e.method),
                e.converged.to_string(),
                e.rule.clone(),
                String::new(),
            ]),
            Err(err) => csv.row([
                name.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                err.to_string(),
            ]),
        }
    }
    Ok(Outcome { name: "params", csv: csv.finish(), table: None, gnuplot: None, exit_code: 0 })
}

pub fn cmd_phase(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let p = &cfg.phase;
    let mut csv = Csv::new(
        "phase",
        &[
            "alpha", "ratio", "c", "c_hat", "theta_lower", "theta_upper", "rho_lower", "rho_upper", "verdict_inf",
            "verdict_zero",
        ],
    );
    let mut blocks = Vec::new();
    for &alpha in &p.alphas {
        let mut block = String::from("# ratio theta_lower theta_upper rho_lower rho_upper\n");
        for i in 0..p.points {
            let ratio = if p.points == 1 {
                p.ratio_from
            } else {
                p.ratio_from + (p.ratio_to - p.ratio_from) * i as f64 / (p.points - 1) as f64
            };
            let c = ratio * p.c_hat;
            let psi = Mechanism::power_sum(&[(-c, alpha)]).map_err(|e| invalid("phase", e))?;
            let psi_hat = Mechanism::power_sum(&[(p.c_hat, 2.0 - alpha)]).map_err(|e| invalid("phase", e))?;
            let (inf, zero) = classify_pair(&psi, &psi_hat, &cfg.classify);
            let [tl, tu] = bounds(&inf.theta);
            let [rl, ru] = bounds(&inf.rho);
            block.push_str(&format!("{ratio} {tl} {tu} {rl} {ru}\n"));
            csv.row([
                num(alpha),
                num(ratio),
                num(c),
                num(p.c_hat),
                tl,
                tu,
                rl,
                ru,
                inf.verdict.to_string(),
                zero.verdict.to_string(),
            ]);
        }
        blocks.push(block);
    }
    Ok(Outcome { name: "phase", csv: csv.finish(), table: None, gnuplot: Some(blocks.join("\n\n")), exit_code: 0 })
}

fn state_name(s: &State) -> String {
    match s {
        State::Value(x) => num(*x),
        State::AtZero => "at_zero".into(),
        State::AtInfinity => "at_infinity".into(),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (psi, psi_hat) = cfg.mechanisms()?;
    let sim = cfg.sim_config();
    let b = &cfg.simulate;
    let mut csv = Csv::new(
        "simulate",
        &["path", "x0", "final_time", "final_state", "max_state", "n_jumps", "extinct_at", "exploded_at", "killed_at"],
    );
    for i in 0..sim.n_paths {
        let noise = NoiseBundle::new(sim.seed, i as u64);
        let path: Path = match b.kind {
            SimulateKind::Minimal => simulate_minimal(&psi, &psi_hat, b.x0, &sim, &noise)?,
            SimulateKind::Truncated => simulate_truncated(&psi, &psi_hat, b.n, b.x0, &sim, &noise)?,
            SimulateKind::DualKilled => simulate_dual_killed(&psi_hat, &psi, b.lambda_n, b.x0, &sim, &noise)?,
        };
        let last = path.states.last().copied().unwrap_or(State::from_start(b.x0));
        let max = path.states.iter().map(|s| s.as_f64()).fold(0.0, f64::max);
        csv.row([
            i.to_string(),
            num(b.x0),
            num(path.times.last().copied().unwrap_or(0.0)),
            state_name(&last),
            num(max),
            path.jumps.len().to_string(),
            opt(path.extinct_at),
            opt(path.exploded_at),
            opt(path.killed_at),
        ]);
    }
    let table = if !b.levels.is_empty() && sim.n_paths > 0 {
        let h = hitting_statistics(&psi, &psi_hat, b.x0, &b.levels, &sim)?;
        let mut t = String::new();
        for l in &h.levels {
            t.push_str(&format!("level {} {:?}: hit fraction {}\n", l.level, l.direction, l.fraction_hit));
        }
        if let Some(ts) = &h.two_sided {
            t.push_str(&format!(
                "P(below {} before above {}) = {} ± {} (scale ratio {})\n",
                ts.lower,
                ts.upper,
                ts.probability,
                ts.standard_error,
                opt(ts.scale_ratio)
            ));
        }
        Some(t)
    } else {
        None
    };
    Ok(Outcome { name: "simulate", csv: csv.finish(), table, gnuplot: None, exit_code: 0 })
}

pub fn duality_csv(r: &DualityReport) -> String {
    let mut csv = Csv::new("duality", &["x", "y", "t", "lhs", "lhs_se", "rhs", "rhs_se", "pass", "mismatch"]);
    for c in &r.cells {
        csv.row([
            num(c.x),
            num(c.y),
            num(c.t),
            num(c.lhs),
            num(c.lhs_se),
            num(c.rhs),
            num(c.rhs_se),
            c.pass.to_string(),
            c.mismatch.map(|m| format!("{m:?}")).unwrap_or_default(),
        ]);
    }
    csv.finish()
}

pub fn cmd_duality(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let (psi, psi_hat) = cfg.mechanisms()?;
    let b = &cfg.duality;
    let dcfg = DualityConfig { sim: cfg.sim_config(), k: b.k, recheck: b.recheck };
    let r = duality_check(&psi, &psi_hat, &b.grid, &dcfg)?;
    let mut table = format!("{}/{} cells pass\n", r.passed(), r.cells.len());
    if let Some(tag) = &r.tag {
        table.push_str(&format!("{tag}\n"));
    }
    Ok(Outcome {
        name: "duality",
        csv: duality_csv(&r),
        table: Some(table),
        gnuplot: None,
        exit_code: if r.pass_fraction >= b.min_pass_fraction { 0 } else { 1 },
    })
}

/// Writes `<name>.csv` (and `<name>.dat` for gnuplot blocks) into `dir`.
pub fn write_outputs(o: &Outcome, dir: &std::path::Path) -> Result<Vec<PathBuf>, ConfigError> {
    let io = |p: &std::path::Path, e: std::io::Error| ConfigError::Io { path: p.display().to_string(), message: e.to_string() };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    let p = dir.join(format!("{}.csv", o.name));
    std::fs::write(&p, &o.csv).map_err(|e| io(&p, e))?;
    written.push(p);
    if let Some(g) = &o.gnuplot {
        let p = dir.join(format!("{}.dat", o.name));
        std::fs::write(&p, g).map_err(|e| io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FELLER_LOGISTIC: &str = r#"
seed = 3
[psi]
family = "power_sum"
terms = [[1.0, 2.0]]
[psi_hat]
family = "power_sum"
terms = [[1.0, 2.0]]
"#;

    #[test]
    fn minimal_config_round_trips() {
        let cfg = parse_config(FELLER_LOGISTIC).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = "[psi]\nfamily = \"levy\"\ndifusion = 1.0\n";
        match parse_config(text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "difusion"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_killing_is_rejected() {
        let text = "[psi]\nfamily = \"levy\"\nkilling = -1.0\n";
        match parse_config(text) {
            Err(ConfigError::Validation { key, .. }) => assert_eq!(key, "psi.killing"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_config("seed = \n") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn classify_matched_stable_pair() {
        let text = r#"
[psi]
family = "power_sum"
terms = [[-0.7, 0.5]]
[psi_hat]
family = "power_sum"
terms = [[1.0, 1.5]]
"#;
        let o = cmd_classify(&parse_config(text).unwrap()).unwrap();
        assert_eq!(o.exit_code, 0);
        let t = o.table.unwrap();
        assert!(t.contains("∞: Regular") && t.contains("0: Regular"), "{t}");
    }

    #[test]
    fn phase_edge_cases() {
        let mut cfg = parse_config(FELLER_LOGISTIC).unwrap();
        cfg.phase.points = 0;
        let o = cmd_phase(&cfg).unwrap();
        assert_eq!(o.csv.lines().count(), 2);
        cfg.phase.points = 1;
        assert_eq!(cmd_phase(&cfg).unwrap().csv.lines().count(), 3);
    }

    #[test]
    fn simulate_is_replayable() {
        let mut cfg = parse_config(FELLER_LOGISTIC).unwrap();
        cfg.sim.n_paths = 5;
        cfg.sim.horizon = 0.1;
        let a = cmd_simulate(&cfg).unwrap().csv;
        assert_eq!(a, cmd_simulate(&cfg).unwrap().csv);
        cfg.sim.n_paths = 0;
        assert_eq!(cmd_simulate(&cfg).unwrap().csv.lines().count(), 2);
    }
}
