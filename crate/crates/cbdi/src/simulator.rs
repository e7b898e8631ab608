//! Euler scheme for the minimal CBDI equation, its truncated and killed variants,
//! hitting times and pathwise couplings.
//!
//! The process CBDI(Ψ, Ψ̂) started at x solves
//! `dX = γX dt − Ψ̂(X) dt + √(2aX) dB + jumps thinned from a Poisson random measure`.
//! Large jumps are realised as points (s, r, u) with `r ≤ X_{s−}`; the r-axis is cut into
//! dyadic layers and each (step, layer) cell draws from its own stream so that two runs on
//! the same [`NoiseBundle`] see the same points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanisms::{JumpSampler, Mechanism, MechanismError};
use crate::potential_theory::ScaleFunction;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("step at t = {time} from x = {state} needs more than the allowed drift substeps; reduce dt")]
    UnstableStep { time: f64, state: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmallJumpMode {
    Drop,
    GaussianCorrection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// jumps of size ≤ epsilon are not simulated individually
    pub epsilon: f64,
    pub small_jump_mode: SmallJumpMode,
    pub horizon: f64,
    pub x_floor: f64,
    pub x_ceil: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// largest drift move per substep relative to max(X, 1)
    pub max_step_factor: f64,
    pub max_substeps: usize,
    /// raise the jump cutoff while a step would carry more jumps than this (0 disables)
    pub max_jumps_per_step: usize,
    /// keep every k-th step in a recorded [`Path`]
    pub record_every: usize,
    /// Brownian-bridge correction for crossings of 0 and of hitting levels
    pub bridge: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            epsilon: 1e-3,
            small_jump_mode: SmallJumpMode::GaussianCorrection,
            horizon: 1.0,
            x_floor: 1e-8,
            x_ceil: 1e12,
            n_paths: 10_000,
            seed: 0,
            max_step_factor: 0.5,
            max_substeps: 4096,
            max_jumps_per_step: 256,
            record_every: 1,
            bridge: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.dt > 0.0) || !(self.horizon > 0.0) || self.dt > self.horizon {
            return bad(format!("need 0 < dt ≤ horizon (dt = {}, horizon = {})", self.dt, self.horizon));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon = {} outside (0, 1]", self.epsilon));
        }
        if !(self.x_floor > 0.0) || !(self.x_ceil > self.x_floor) {
            return bad(format!("need 0 < x_floor < x_ceil ({}, {})", self.x_floor, self.x_ceil));
        }
        if !(self.max_step_factor > 0.0) || self.max_substeps == 0 || self.record_every == 0 {
            return bad("max_step_factor, max_substeps and record_every must be positive".into());
        }
        Ok(())
    }

    fn steps(&self, horizon: f64) -> (usize, f64) {
        let n = ((horizon / self.dt) - 1e-9).ceil().max(1.0) as usize;
        (n, horizon / n as f64)
    }
}

/// A state of the minimal process, cemeteries included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Value(f64),
    AtZero,
    AtInfinity,
}

impl State {
    pub fn from_start(x: f64) -> State {
        if x <= 0.0 {
            State::AtZero
        } else if x == f64::INFINITY {
            State::AtInfinity
        } else {
            State::Value(x)
        }
    }

    /// position on [0, ∞]
    pub fn as_f64(&self) -> f64 {
        match *self {
            State::Value(x) => x,
            State::AtZero => 0.0,
            State::AtInfinity => f64::INFINITY,
        }
    }

    /// e^{−X y} with 0·∞ = 0 at both cemeteries
    pub fn laplace(&self, y: f64) -> f64 {
        match *self {
            State::Value(x) => (-x * y).exp(),
            State::AtZero => 1.0,
            State::AtInfinity => {
                if y > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Below,
    Above,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub level: f64,
    pub direction: Direction,
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// (time, size) of every simulated jump above epsilon
    pub jumps: Vec<(f64, f64)>,
    pub hits: Vec<Hit>,
    pub extinct_at: Option<f64>,
    pub exploded_at: Option<f64>,
    pub killed_at: Option<f64>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random inputs of one path, fixed by (seed, path index).
#[derive(Clone, Debug)]
pub struct NoiseBundle {
    key: u64,
    /// independent Exp(1) mark for killing by an additive functional
    pub exp_mark: f64,
}

const CH_GAUSS: u64 = 1;
const CH_EXP: u64 = 2;
const CH_CELL: u64 = 3;

impl NoiseBundle {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let key = mix(mix(seed) ^ path_index.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut r = ChaCha8Rng::seed_from_u64(key);
        r.set_stream(CH_EXP);
        let exp_mark: f64 = Exp1.sample(&mut r);
        NoiseBundle { key, exp_mark }
    }

    fn gauss_stream(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.key);
        r.set_stream(CH_GAUSS);
        r
    }

    fn cell(&self, step: usize, layer: u32) -> SplitMix64 {
        SplitMix64::seed_from_u64(mix(self.key ^ CH_CELL ^ mix((step as u64) << 6 | layer as u64)))
    }
}

/// Per-step draws with fixed consumption so coupled runs stay aligned.
struct StepNoise {
    z: f64,
    u_zero: f64,
    u_level: f64,
}

fn step_noise(r: &mut ChaCha8Rng) -> StepNoise {
    let u1 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    StepNoise { z, u_zero: r.random(), u_level: r.random() }
}

/// Jump cutoff with the matching compensator and Gaussian variance.
#[derive(Clone, Debug)]
struct Cutoff {
    eps: f64,
    /// γ − ∫_(ε,1] u π(du) (signed when ε > 1)
    drift_lin: f64,
    /// variance per unit state and time of the Gaussian part
    gauss_var: f64,
    sampler: Option<JumpSampler>,
    jump_rate: f64,
}

/// Coefficients of the scheme for one mechanism pair. The cutoff is raised along a
/// geometric ladder when a step would otherwise carry more than `max_jumps_per_step` jumps.
#[derive(Clone, Debug)]
struct Scheme {
    a: f64,
    ladder: Vec<Cutoff>,
    kill_rate: f64,
    psi_hat: Mechanism,
}

impl Scheme {
    fn new(psi: &Mechanism, psi_hat: &Mechanism, cfg: &SimConfig) -> Scheme {
        let spec = psi.spectrum();
        let eps0 = cfg.epsilon;
        let small = match cfg.small_jump_mode {
            SmallJumpMode::GaussianCorrection => spec.moment(2.0, 0.0, eps0),
            SmallJumpMode::Drop => 0.0,
        };
        let mut ladder = Vec::new();
        let mut eps = eps0;
        loop {
            let sampler = spec.sampler_above(eps);
            let jump_rate = sampler.rate();
            let m1 = if eps <= 1.0 { spec.moment(1.0, eps, 1.0) } else { -spec.moment(1.0, 1.0, eps) };
            ladder.push(Cutoff {
                eps,
                drift_lin: psi.gamma - m1,
                gauss_var: 2.0 * psi.a + small + if eps > eps0 { spec.moment(2.0, eps0, eps) } else { 0.0 },
                sampler: (jump_rate > 0.0).then_some(sampler),
                jump_rate,
            });
            if cfg.max_jumps_per_step == 0 || jump_rate == 0.0 || eps > 1e12 {
                break;
            }
            eps *= 4.0;
        }
        Scheme { a: psi.a, ladder, kill_rate: psi.lambda, psi_hat: psi_hat.clone() }
    }

    fn cutoff(&self, x: f64, dt: f64, cfg: &SimConfig, trunc: Option<f64>) -> &Cutoff {
        let cap = cfg.max_jumps_per_step as f64;
        let top = trunc.unwrap_or(f64::INFINITY);
        let mut pick = &self.ladder[0];
        for c in &self.ladder {
            if c.eps > top {
                break;
            }
            pick = c;
            if cap == 0.0 || x * c.jump_rate * dt <= cap {
                break;
            }
        }
        pick
    }

    fn drift(&self, c: &Cutoff, x: f64) -> f64 {
        c.drift_lin * x - self.psi_hat.evaluate(x)
    }

    /// ordering slack for coupled runs: a few one-step Gaussian fluctuations near 0
    fn slack(&self, dt: f64) -> f64 {
        12.5 * self.ladder[0].gauss_var * dt
    }
}

#[derive(Clone, Debug, Default)]
struct Options {
    trunc: Option<f64>,
    /// (λₙ, exponential mark)
    kill_integral: Option<(f64, f64)>,
    levels: Vec<(f64, Direction)>,
    stop_when_levels_hit: bool,
}

struct StepCtx {
    k: usize,
    t: f64,
    state: State,
}

fn run<F: FnMut(StepCtx) -> bool>(
    scheme: &Scheme,
    cfg: &SimConfig,
    opts: &Options,
    x0: State,
    horizon: f64,
    noise: &NoiseBundle,
    path: &mut Path,
    mut observe: F,
) -> Result<(), SimError> {
    let (n, dt) = cfg.steps(horizon);
    let mut gauss = noise.gauss_stream();
    let mut state = x0;
    let mut integral = 0.0;
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    let mut pending: Vec<bool> = vec![true; opts.levels.len()];
    if let State::Value(x) = state {
        for (i, &(lvl, dir)) in opts.levels.iter().enumerate() {
            if (dir == Direction::Below && x <= lvl) || (dir == Direction::Above && x >= lvl) {
                pending[i] = false;
                path.hits.push(Hit { level: lvl, direction: dir, time: 0.0 });
            }
        }
    }
    if !observe(StepCtx { k: 0, t: 0.0, state }) {
        return Ok(());
    }
    for k in 0..n {
        let t = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        let sn = step_noise(&mut gauss);
        jumps.clear();
        if let State::Value(x) = state {
            let cut = scheme.cutoff(x, dt, cfg, opts.trunc);
            let total_rate = cut.jump_rate + scheme.kill_rate;
            // drift with substeps when the move is too large for one step
            let scale = cfg.max_step_factor * x.max(1.0);
            let mut b = scheme.drift(cut, x);
            let mut xn = x;
            if (b * dt).abs() <= scale {
                xn += b * dt;
            } else {
                let mut left = dt;
                let mut subs = 0;
                while left > 0.0 {
                    let h = (cfg.max_step_factor * xn.max(1.0) / b.abs()).min(left);
                    xn += b * h;
                    left -= h;
                    subs += 1;
                    if subs > cfg.max_substeps || !xn.is_finite() {
                        return Err(SimError::UnstableStep { time: t, state: x });
                    }
                    if xn <= 0.0 {
                        break;
                    }
                    b = scheme.drift(cut, xn);
                }
            }
            if cut.gauss_var > 0.0 {
                xn += (cut.gauss_var * x * dt).sqrt() * sn.z;
            }
            let mut killed = false;
            if total_rate > 0.0 {
                let mut layer = 0u32;
                let mut lo = 0.0;
                while lo < x {
                    let width = if layer == 0 { 1.0 } else { lo };
                    let mut rng = noise.cell(k, layer);
                    let mean = total_rate * width * dt;
                    let count = Poisson::new(mean).map(|p| p.sample(&mut rng) as u64).unwrap_or(0);
                    for _ in 0..count {
                        let r = lo + width * rng.random::<f64>();
                        let s = t + dt * rng.random::<f64>();
                        let which: f64 = rng.random();
                        let (w, v): (f64, f64) = (rng.random(), rng.random());
                        if r >= x {
                            continue;
                        }
                        let is_kill = which * total_rate < scheme.kill_rate;
                        let u = if is_kill {
                            match opts.trunc {
                                Some(nn) => nn,
                                None => {
                                    killed = true;
                                    continue;
                                }
                            }
                        } else {
                            let u = cut.sampler.as_ref().map_or(0.0, |sm| sm.sample(w, v));
                            opts.trunc.map_or(u, |nn| u.min(nn))
                        };
                        jumps.push((s, u));
                    }
                    lo += width;
                    layer += 1;
                }
                jumps.sort_by(|p, q| p.0.total_cmp(&q.0));
                xn += jumps.iter().map(|j| j.1).sum::<f64>();
            }
            path.jumps.extend_from_slice(&jumps);

            let var = cut.gauss_var * x * dt;
            state = if killed {
                path.killed_at = Some(t1);
                State::AtInfinity
            } else if xn <= 0.0
                || (scheme.a == 0.0 && xn <= cfg.x_floor)
                || (cfg.bridge && scheme.a > 0.0 && jumps.is_empty() && sn.u_zero < (-2.0 * x * xn / var).exp())
            {
                path.extinct_at = Some(t1);
                State::AtZero
            } else if xn >= cfg.x_ceil {
                path.exploded_at = Some(t1);
                State::AtInfinity
            } else {
                State::Value(xn)
            };
            if let Some((lam, mark)) = opts.kill_integral {
                if let State::Value(xv) = state {
                    integral += lam * 0.5 * (x + xv) * dt;
                    if integral > mark {
                        path.killed_at = Some(t1);
                        state = State::AtInfinity;
                    }
                }
            }
            for (i, &(lvl, dir)) in opts.levels.iter().enumerate() {
                if !pending[i] {
                    continue;
                }
                let xs = state.as_f64();
                let crossed = match dir {
                    Direction::Below => xs <= lvl,
                    Direction::Above => xs >= lvl,
                };
                let bridged = !crossed
                    && cfg.bridge
                    && var > 0.0
                    && xs.is_finite()
                    && sn.u_level < (-2.0 * (x - lvl).abs() * (xs - lvl).abs() / var).exp()
                    && (x - lvl).signum() == (xs - lvl).signum();
                if crossed || bridged {
                    pending[i] = false;
                    path.hits.push(Hit { level: lvl, direction: dir, time: t1 });
                }
            }
        }
        if !observe(StepCtx { k: k + 1, t: t1, state }) {
            break;
        }
        if opts.stop_when_levels_hit && pending.iter().all(|p| !p) {
            break;
        }
        if !matches!(state, State::Value(_)) && !opts.stop_when_levels_hit {
            // cemeteries are absorbing; report the frozen state for the remaining grid
            for j in k + 1..n {
                if !observe(StepCtx { k: j + 1, t: (j + 1) as f64 * dt, state }) {
                    break;
                }
            }
            break;
        }
        if opts.stop_when_levels_hit && !matches!(state, State::Value(_)) {
            break;
        }
    }
    Ok(())
}

fn record(
    scheme: &Scheme,
    cfg: &SimConfig,
    opts: &Options,
    x0: f64,
    noise: &NoiseBundle,
) -> Result<Path, SimError> {
    cfg.validate()?;
    let mut path = Path::default();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let every = cfg.record_every;
    let (n, _) = cfg.steps(cfg.horizon);
    run(scheme, cfg, opts, State::from_start(x0), cfg.horizon, noise, &mut path, |c| {
        if c.k % every == 0 || c.k == n {
            times.push(c.t);
            states.push(c.state);
        }
        true
    })?;
    path.times = times;
    path.states = states;
    Ok(path)
}

/// One path of the minimal CBDI(Ψ, Ψ̂) from `x0` over `[0, cfg.horizon]`.
pub fn simulate_minimal(
    psi: &Mechanism,
    psi_hat: &Mechanism,
    x0: f64,
    cfg: &SimConfig,
    noise: &NoiseBundle,
) -> Result<Path, SimError> {
    record(&Scheme::new(psi, psi_hat, cfg), cfg, &Options::default(), x0, noise)
}

/// Same noise as [`simulate_minimal`] with every jump mark u replaced by u ∧ n
/// and killing replaced by a jump of size n.
pub fn simulate_truncated(
    psi: &Mechanism,
    psi_hat: &Mechanism,
    n: f64,
    x0: f64,
    cfg: &SimConfig,
    noise: &NoiseBundle,
) -> Result<Path, SimError> {
    if !(n >= 1.0) {
        return Err(SimError::InvalidConfig(format!("truncation level n = {n} < 1")));
    }
    let opts = Options { trunc: Some(n), ..Options::default() };
    record(&Scheme::new(psi, psi_hat, cfg), cfg, &opts, x0, noise)
}

/// The minimal CBDI(Ψ̂, Ψ) from `y0`, sent to ∞ once λₙ∫₀ᵗ Y ds exceeds the exponential mark.
pub fn simulate_dual_killed(
    psi_hat: &Mechanism,
    psi: &Mechanism,
    lambda_n: f64,
    y0: f64,
    cfg: &SimConfig,
    noise: &NoiseBundle,
) -> Result<Path, SimError> {
    if !(lambda_n > 0.0) {
        return Err(SimError::InvalidConfig(format!("killing rate λₙ = {lambda_n} must be positive")));
    }
    let opts = Options { kill_integral: Some((lambda_n, noise.exp_mark)), ..Options::default() };
    record(&Scheme::new(psi_hat, psi, cfg), cfg, &opts, y0, noise)
}

/// States at the requested times for each path, in path order.
pub fn sample_states(
    psi: &Mechanism,
    psi_hat: &Mechanism,
    x0: f64,
    times: &[f64],
    cfg: &SimConfig,
    trunc: Option<f64>,
) -> Result<Vec<Vec<State>>, SimError> {
    cfg.validate()?;
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    if horizon == 0.0 {
        return Ok(vec![vec![State::from_start(x0); times.len()]; cfg.n_paths]);
    }
    let scheme = Scheme::new(psi, psi_hat, cfg);
    let (_, dt) = cfg.steps(horizon);
    let idx: Vec<usize> = times.iter().map(|t| (t / dt).round() as usize).collect();
    let opts = Options { trunc, ..Options::default() };
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::new(cfg.seed, i as u64);
            let mut out = vec![State::from_start(x0); times.len()];
            let mut path = Path::default();
            let last = *idx.iter().max().unwrap_or(&0);
            run(&scheme, cfg, &opts, State::from_start(x0), horizon, &noise, &mut path, |c| {
                for (j, &ix) in idx.iter().enumerate() {
                    if ix == c.k {
                        out[j] = c.state;
                    }
                }
                c.k < last
            })?;
            Ok(out)
        })
        .collect()
}

/// Neumaier-compensated mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let sum = |it: &mut dyn Iterator<Item = f64>| {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for v in it {
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
        }
        s + c
    };
    let m = sum(&mut xs.iter().copied()) / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let var = sum(&mut xs.iter().map(|v| (v - m) * (v - m))) / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub n_paths: usize,
}

/// Monte Carlo estimate of E_x[e^{−X_t y}] with e^{−∞·y} = 0 for y > 0 and e^{−∞·0} = 1.
pub fn estimate_laplace(
    psi: &Mechanism,
    psi_hat: &Mechanism,
    x: f64,
    y: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<LaplaceEstimate, SimError> {
    let states = sample_states(psi, psi_hat, x, &[t], cfg, None)?;
    let vals: Vec<f64> = states.iter().map(|s| s[0].laplace(y)).collect();
    let (m, se) = mean_se(&vals);
    Ok(LaplaceEstimate { estimate: m, standard_error: se, n_paths: vals.len() })
}

/// Inputs of a pathwise comparison and the claimed order.
#[derive(Clone, Debug)]
pub enum CompareSpec {
    /// X(x) ≤ X(y) for x ≤ y
    InitialValues { psi: Mechanism, psi_hat: Mechanism, x: f64, y: f64 },
    /// X under `lower` competition dominates X under `upper` when lower ≤ upper pointwise
    Drifts { psi: Mechanism, lower: Mechanism, upper: Mechanism, x0: f64 },
    /// X⁽ⁿ⁾ ≤ X⁽ⁿ′⁾ for n < n′
    Truncations { psi: Mechanism, psi_hat: Mechanism, n: f64, n_prime: f64, x0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub n_paths: usize,
    pub checks: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub max_excess: f64,
    /// allowed reversal from the discretised Gaussian part near 0
    pub slack: f64,
    pub identical_paths: usize,
}

/// Runs both sides of `spec` on the same noise for `cfg.n_paths` paths.
pub fn coupled_compare(spec: &CompareSpec, cfg: &SimConfig) -> Result<OrderingReport, SimError> {
    cfg.validate()?;
    let (lo_scheme, hi_scheme, lo_opts, hi_opts, x_lo, x_hi) = match spec {
        CompareSpec::InitialValues { psi, psi_hat, x, y } => {
            let s = Scheme::new(psi, psi_hat, cfg);
            (s.clone(), s, Options::default(), Options::default(), *x, *y)
        }
        CompareSpec::Drifts { psi, lower, upper, x0 } => (
            Scheme::new(psi, upper, cfg),
            Scheme::new(psi, lower, cfg),
            Options::default(),
            Options::default(),
            *x0,
            *x0,
        ),
        CompareSpec::Truncations { psi, psi_hat, n, n_prime, x0 } => {
            let s = Scheme::new(psi, psi_hat, cfg);
            (
                s.clone(),
                s,
                Options { trunc: Some(*n), ..Options::default() },
                Options { trunc: Some(*n_prime), ..Options::default() },
                *x0,
                *x0,
            )
        }
    };
    let (_, dt) = cfg.steps(cfg.horizon);
    let slack = lo_scheme.slack(dt).max(hi_scheme.slack(dt));
    let per_path: Vec<(usize, usize, f64, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::new(cfg.seed, i as u64);
            let lo = record(&lo_scheme, cfg, &lo_opts, x_lo, &noise)?;
            let hi = record(&hi_scheme, cfg, &hi_opts, x_hi, &noise)?;
            let (mut checks, mut bad, mut worst) = (0, 0, 0.0f64);
            for (a, b) in lo.states.iter().zip(&hi.states) {
                let (a, b) = (a.as_f64(), b.as_f64());
                checks += 1;
                if a.is_finite() && b.is_finite() {
                    let excess = a - b - slack - 1e-12 * (1.0 + b.abs());
                    if excess > 0.0 {
                        bad += 1;
                        worst = worst.max(excess);
                    }
                } else if a == f64::INFINITY && b.is_finite() {
                    bad += 1;
                    worst = f64::INFINITY;
                }
            }
            Ok((checks, bad, worst, lo.states == hi.states))
        })
        .collect::<Result<_, SimError>>()?;
    let checks: usize = per_path.iter().map(|p| p.0).sum();
    let violations: usize = per_path.iter().map(|p| p.1).sum();
    Ok(OrderingReport {
        n_paths: cfg.n_paths,
        checks,
        violations,
        violation_fraction: if checks > 0 { violations as f64 / checks as f64 } else { 0.0 },
        max_excess: per_path.iter().map(|p| p.2).fold(0.0, f64::max),
        slack,
        identical_paths: per_path.iter().filter(|p| p.3).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: f64,
    pub direction: Direction,
    /// first-passage times of the paths that reached the level
    pub times: Vec<f64>,
    pub fraction_hit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedExit {
    pub lower: f64,
    pub upper: f64,
    /// P(σ_lower⁻ < σ_upper⁺)
    pub probability: f64,
    pub standard_error: f64,
    pub unresolved: usize,
    /// W(upper − x)/W(upper) for a pure CB(Σ) with lower = 0
    pub scale_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub levels: Vec<LevelStats>,
    pub extinct_fraction: f64,
    pub exploded_fraction: f64,
    pub killed_fraction: f64,
    pub two_sided: Option<TwoSidedExit>,
}

/// First passages below levels under `x0` and above levels over `x0`, run until every
/// level is decided or the horizon ends. Level 0 means extinction.
pub fn hitting_statistics(
    psi: &Mechanism,
    psi_hat: &Mechanism,
    x0: f64,
    levels: &[f64],
    cfg: &SimConfig,
) -> Result<HittingStats, SimError> {
    cfg.validate()?;
    let scheme = Scheme::new(psi, psi_hat, cfg);
    let dirs: Vec<(f64, Direction)> = levels
        .iter()
        .map(|&l| (l, if l < x0 { Direction::Below } else { Direction::Above }))
        .collect();
    let lower = dirs.iter().filter(|d| d.1 == Direction::Below).map(|d| d.0).fold(f64::NAN, f64::max);
    let upper = dirs.iter().filter(|d| d.1 == Direction::Above).map(|d| d.0).fold(f64::NAN, f64::min);
    // a path stops once the innermost pair is decided
    let inner: Vec<(f64, Direction)> = dirs.iter().copied().filter(|d| d.0 == lower || d.0 == upper).collect();
    let opts = Options { levels: dirs.clone(), stop_when_levels_hit: false, ..Options::default() };
    let paths: Vec<Path> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::new(cfg.seed, i as u64);
            let mut path = Path::default();
            let mut stop_opts = opts.clone();
            stop_opts.stop_when_levels_hit = inner.len() == dirs.len();
            run(&scheme, cfg, &stop_opts, State::from_start(x0), cfg.horizon, &noise, &mut path, |_| true)?;
            if let Some(t) = path.extinct_at {
                for &(l, d) in &dirs {
                    if d == Direction::Below && !path.hits.iter().any(|h| h.level == l) {
                        path.hits.push(Hit { level: l, direction: d, time: t });
                    }
                }
            }
            if let Some(t) = path.exploded_at.or(path.killed_at) {
                for &(l, d) in &dirs {
                    if d == Direction::Above && !path.hits.iter().any(|h| h.level == l) {
                        path.hits.push(Hit { level: l, direction: d, time: t });
                    }
                }
            }
            Ok(path)
        })
        .collect::<Result<_, SimError>>()?;
    let n = paths.len().max(1) as f64;
    let stats = dirs
        .iter()
        .map(|&(l, d)| {
            let times: Vec<f64> =
                paths.iter().filter_map(|p| p.hits.iter().find(|h| h.level == l).map(|h| h.time)).collect();
            LevelStats { level: l, direction: d, fraction_hit: times.len() as f64 / n, times }
        })
        .collect();
    let two_sided = (lower.is_finite() && upper.is_finite()).then(|| {
        let first = |p: &Path, l: f64| p.hits.iter().find(|h| h.level == l).map(|h| h.time);
        let mut vals = Vec::new();
        let mut unresolved = 0;
        for p in &paths {
            match (first(p, lower), first(p, upper)) {
                (Some(a), Some(b)) => vals.push(if a < b { 1.0 } else { 0.0 }),
                (Some(_), None) => vals.push(1.0),
                (None, Some(_)) => vals.push(0.0),
                (None, None) => unresolved += 1,
            }
        }
        let (m, se) = mean_se(&vals);
        let d = psi.decomposition();
        let scale_ratio = (lower == 0.0 && d.phi.is_zero() && psi_hat.evaluate(1.0) == 0.0 && psi_hat.evaluate(2.0) == 0.0)
            .then(|| {
                let w = ScaleFunction::new(&d.sigma).ok()?;
                Some(w.value(upper - x0).ok()? / w.value(upper).ok()?)
            })
            .flatten();
        TwoSidedExit { lower, upper, probability: m, standard_error: se, unresolved, scale_ratio }
    });
    Ok(HittingStats {
        levels: stats,
        extinct_fraction: paths.iter().filter(|p| p.extinct_at.is_some()).count() as f64 / n,
        exploded_fraction: paths.iter().filter(|p| p.exploded_at.is_some()).count() as f64 / n,
        killed_fraction: paths.iter().filter(|p| p.killed_at.is_some()).count() as f64 / n,
        two_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(terms: &[(f64, f64)]) -> Mechanism {
        Mechanism::power_sum(terms).unwrap()
    }

    #[test]
    fn deterministic_flows() {
        let cfg = SimConfig { dt: 1e-5, ..SimConfig::default() };
        let noise = NoiseBundle::new(1, 0);
        let p = simulate_minimal(&Mechanism::zero(), &m(&[(1.0, 1.0)]), 1.0, &cfg, &noise).unwrap();
        let last = p.states.last().unwrap().as_f64();
        assert!((last - (-1.0f64).exp()).abs() < 1e-4);
        let p = simulate_minimal(&Mechanism::zero(), &m(&[(1.0, 2.0)]), 1.0, &cfg, &noise).unwrap();
        assert!((p.states.last().unwrap().as_f64() - 0.5).abs() < 1e-4);
    }

    #[test]
    fn cemetery_starts_are_constant() {
        let cfg = SimConfig { horizon: 0.1, ..SimConfig::default() };
        let noise = NoiseBundle::new(3, 7);
        let p = simulate_minimal(&m(&[(1.0, 2.0)]), &Mechanism::zero(), 0.0, &cfg, &noise).unwrap();
        assert!(p.states.iter().all(|s| *s == State::AtZero));
        let p = simulate_minimal(&m(&[(1.0, 2.0)]), &Mechanism::zero(), f64::INFINITY, &cfg, &noise).unwrap();
        assert!(p.states.iter().all(|s| *s == State::AtInfinity));
    }

    #[test]
    fn killed_dual_with_constant_state() {
        let cfg = SimConfig { dt: 1e-4, horizon: 50.0, record_every: 1000, ..SimConfig::default() };
        let noise = NoiseBundle::new(5, 2);
        let p = simulate_dual_killed(&Mechanism::zero(), &Mechanism::zero(), 0.5, 2.0, &cfg, &noise).unwrap();
        let want = noise.exp_mark / (0.5 * 2.0);
        assert!((p.killed_at.unwrap() - want).abs() <= 1e-4 + 1e-12);
    }

    #[test]
    fn equal_inputs_give_identical_paths() {
        let psi = m(&[(1.0, 1.5)]);
        let cfg = SimConfig { n_paths: 20, horizon: 0.2, epsilon: 0.05, ..SimConfig::default() };
        let r = coupled_compare(
            &CompareSpec::InitialValues { psi: psi.clone(), psi_hat: m(&[(1.0, 2.0)]), x: 1.0, y: 1.0 },
            &cfg,
        )
        .unwrap();
        assert_eq!(r.identical_paths, 20);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn jumps_are_nonnegative() {
        let cfg = SimConfig { horizon: 0.5, epsilon: 0.05, ..SimConfig::default() };
        let p = simulate_minimal(&m(&[(1.0, 1.5)]), &Mechanism::zero(), 1.0, &cfg, &NoiseBundle::new(9, 1)).unwrap();
        assert!(!p.jumps.is_empty());
        assert!(p.jumps.iter().all(|j| j.1 >= 0.0));
    }
}
