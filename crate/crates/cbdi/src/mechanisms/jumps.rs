//! Jump measures on (0, ∞): parametric descriptors and their compiled form.
//!
//! Every descriptor compiles to a list of components (power-law density
//! pieces `c·u^{-1-p}` on `(lo, hi]`, log-type pieces and atoms). Tails,
//! partial moments, Laplace-type kernel integrals and restricted samplers are
//! computed per component.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::quad::integrate_log;

use super::MechanismError;

/// Descriptor of a jump measure π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpMeasure {
    Null,
    /// density `intensity · u^{-1-index}` on (0, ∞)
    StableTail { intensity: f64, index: f64 },
    /// list of `[location, mass]`
    FiniteAtoms { atoms: Vec<[f64; 2]> },
    /// tail values `π̄(grid[k]) = tail[k]`, log-log interpolated, with power
    /// extrapolation below the grid (`exponent_at_zero`) and above it
    /// (`exponent_at_infinity`; an infinite exponent puts the remaining mass
    /// in an atom at the last grid point)
    TabulatedTail {
        grid: Vec<f64>,
        tail: Vec<f64>,
        exponent_at_zero: f64,
        exponent_at_infinity: f64,
    },
    /// mass on [level, ∞) plus `extra_mass` folded into an atom at `level`
    Truncated {
        inner: Box<JumpMeasure>,
        level: f64,
        #[serde(default)]
        extra_mass: f64,
    },
    /// restriction to (lo, hi]
    Restricted { inner: Box<JumpMeasure>, lo: f64, hi: f64 },
    /// density `u^{-1} (ln(1/u))^{-exponent}` on (0, upper], upper < 1
    LogTail { exponent: f64, upper: f64 },
    /// tail `(ln u)^{-exponent}` above `lower` > 1, a slowly varying tail at ∞
    LogTailAtInfinity { exponent: f64, lower: f64 },
    Sum { parts: Vec<JumpMeasure> },
}

impl Default for JumpMeasure {
    fn default() -> Self {
        JumpMeasure::Null
    }
}

impl JumpMeasure {
    pub fn stable(intensity: f64, index: f64) -> Self {
        JumpMeasure::StableTail { intensity, index }
    }

    pub fn atoms(list: &[(f64, f64)]) -> Self {
        JumpMeasure::FiniteAtoms {
            atoms: list.iter().map(|&(u, m)| [u, m]).collect(),
        }
    }

    pub fn restricted(self, lo: f64, hi: f64) -> Self {
        JumpMeasure::Restricted { inner: Box::new(self), lo, hi }
    }

    pub fn truncated(self, level: f64, extra_mass: f64) -> Self {
        JumpMeasure::Truncated { inner: Box::new(self), level, extra_mass }
    }

    pub fn plus(self, other: JumpMeasure) -> Self {
        match (self, other) {
            (JumpMeasure::Null, o) | (o, JumpMeasure::Null) => o,
            (a, b) => JumpMeasure::Sum { parts: vec![a, b] },
        }
    }

    pub fn compile(&self) -> Result<Spectrum, MechanismError> {
        let mut comps = Vec::new();
        self.push_components(&mut comps)?;
        comps.retain(|c| !c.is_empty());
        let s = Spectrum { comps };
        s.validate()?;
        Ok(s)
    }

    fn push_components(&self, out: &mut Vec<Comp>) -> Result<(), MechanismError> {
        match self {
            JumpMeasure::Null => {}
            JumpMeasure::StableTail { intensity, index } => {
                if !(*intensity > 0.0) || !(*index > 0.0 && *index < 2.0) {
                    return Err(MechanismError::InvalidLevyMeasure(format!(
                        "stable tail needs intensity > 0 and index in (0,2), got ({intensity}, {index})"
                    )));
                }
                out.push(Comp::Power { c: *intensity, p: *index, lo: 0.0, hi: f64::INFINITY });
            }
            JumpMeasure::FiniteAtoms { atoms } => {
                for [u, m] in atoms {
                    if !(*u > 0.0 && u.is_finite()) || !(*m >= 0.0 && m.is_finite()) {
                        return Err(MechanismError::InvalidLevyMeasure(format!(
                            "atom ({u}, {m}) must have positive location and nonnegative mass"
                        )));
                    }
                    out.push(Comp::Atom { at: *u, mass: *m });
                }
            }
            JumpMeasure::TabulatedTail { grid, tail, exponent_at_zero, exponent_at_infinity } => {
                tabulated_components(grid, tail, *exponent_at_zero, *exponent_at_infinity, out)?;
            }
            JumpMeasure::Truncated { inner, level, extra_mass } => {
                if !(*level > 0.0) || !(*extra_mass >= 0.0) {
                    return Err(MechanismError::NegativeParameter("truncation level / extra mass".into()));
                }
                let spec = inner.compile()?;
                let at_level = spec.tail(*level);
                for c in spec.comps {
                    if let Some(c) = c.clip(0.0, *level) {
                        out.push(c);
                    }
                }
                // the clip keeps (0, level]; mass strictly above level moves to the atom
                out.push(Comp::Atom { at: *level, mass: at_level + extra_mass });
            }
            JumpMeasure::Restricted { inner, lo, hi } => {
                if !(*lo >= 0.0) || !(*hi > *lo) {
                    return Err(MechanismError::InvalidLevyMeasure(format!("bad restriction ({lo}, {hi}]")));
                }
                for c in inner.compile()?.comps {
                    if let Some(c) = c.clip(*lo, *hi) {
                        out.push(c);
                    }
                }
            }
            JumpMeasure::LogTail { exponent, upper } => {
                if !(*upper > 0.0 && *upper < 1.0) || !exponent.is_finite() {
                    return Err(MechanismError::InvalidLevyMeasure("log tail needs upper in (0,1)".into()));
                }
                out.push(Comp::Log { beta: *exponent, lo: 0.0, hi: *upper });
            }
            JumpMeasure::LogTailAtInfinity { exponent, lower } => {
                if !(*lower > 1.0) || !(*exponent > 0.0 && exponent.is_finite()) {
                    return Err(MechanismError::InvalidLevyMeasure(
                        "log tail at infinity needs lower > 1 and exponent > 0".into(),
                    ));
                }
                out.push(Comp::LogInf { beta: *exponent, lo: *lower, hi: f64::INFINITY });
            }
            JumpMeasure::Sum { parts } => {
                for p in parts {
                    p.push_components(out)?;
                }
            }
        }
        Ok(())
    }
}

fn tabulated_components(
    grid: &[f64],
    tail: &[f64],
    p0: f64,
    pinf: f64,
    out: &mut Vec<Comp>,
) -> Result<(), MechanismError> {
    let bad = |m: &str| Err(MechanismError::InvalidLevyMeasure(format!("tabulated tail: {m}")));
    if grid.len() != tail.len() || grid.is_empty() {
        return bad("grid and tail lengths differ or are empty");
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) || grid[0] <= 0.0 {
        return bad("grid must be positive and increasing");
    }
    if tail.iter().any(|t| !(*t > 0.0 && t.is_finite())) || tail.windows(2).any(|w| w[1] > w[0]) {
        return bad("tail must be positive and nonincreasing");
    }
    if !(0.0..2.0).contains(&p0) {
        return bad("exponent at zero must lie in [0,2)");
    }
    if !(pinf > 0.0) {
        return bad("exponent at infinity must be positive");
    }
    if p0 > 0.0 {
        out.push(Comp::Power { c: p0 * tail[0] * grid[0].powf(p0), p: p0, lo: 0.0, hi: grid[0] });
    }
    for k in 0..grid.len() - 1 {
        let (u0, u1, t0, t1) = (grid[k], grid[k + 1], tail[k], tail[k + 1]);
        let p = -(t1 / t0).ln() / (u1 / u0).ln();
        if p > 0.0 {
            out.push(Comp::Power { c: p * t0 * u0.powf(p), p, lo: u0, hi: u1 });
        }
    }
    let (uk, tk) = (grid[grid.len() - 1], tail[tail.len() - 1]);
    if pinf.is_finite() {
        out.push(Comp::Power { c: pinf * tk * uk.powf(pinf), p: pinf, lo: uk, hi: f64::INFINITY });
    } else {
        out.push(Comp::Atom { at: uk, mass: tk });
    }
    Ok(())
}

/// Kernels integrated against the jump measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    /// e^{-ux} − 1 + ux
    Comp,
    /// 1 − e^{-ux}
    Bern,
    /// u (1 − e^{-ux}), x-derivative of `Comp`
    CompD,
    /// u e^{-ux}, x-derivative of `Bern`
    BernD,
    /// u² e^{-ux}
    Second,
}

impl Kernel {
    fn at(self, u: f64, x: f64) -> f64 {
        let ux = u * x;
        match self {
            Kernel::Comp => (-ux).exp_m1() + ux,
            Kernel::Bern => -(-ux).exp_m1(),
            Kernel::CompD => -u * (-ux).exp_m1(),
            Kernel::BernD => u * (-ux).exp(),
            Kernel::Second => u * u * (-ux).exp(),
        }
    }

    fn at_c(self, u: f64, s: Complex64) -> Complex64 {
        let us = s * u;
        let e = (-us).exp();
        match self {
            Kernel::Comp => e - 1.0 + us,
            Kernel::Bern => 1.0 - e,
            Kernel::CompD => (1.0 - e) * u,
            Kernel::BernD => e * u,
            Kernel::Second => e * (u * u),
        }
    }

    /// exponent m and coefficient sign of the series `Σ coef_m (−x)^m u^{m+shift} / m!`
    fn series_shift(self) -> (usize, i32, f64) {
        // (first m, power shift of u, overall sign)
        match self {
            Kernel::Comp => (2, 0, 1.0),
            Kernel::Bern => (1, 0, -1.0),
            Kernel::CompD => (1, 1, -1.0),
            Kernel::BernD => (0, 1, 1.0),
            Kernel::Second => (0, 2, 1.0),
        }
    }

    /// power of u near zero (the kernel behaves like u^k)
    fn small_order(self) -> f64 {
        match self {
            Kernel::Comp | Kernel::CompD => 2.0,
            Kernel::Bern | Kernel::BernD => 1.0,
            Kernel::Second => 2.0,
        }
    }

    /// growth power of the kernel as u → ∞ (kernel ~ u^k)
    fn large_order(self) -> f64 {
        match self {
            Kernel::Comp | Kernel::CompD => 1.0,
            Kernel::Bern => 0.0,
            Kernel::BernD | Kernel::Second => f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Comp {
    Power { c: f64, p: f64, lo: f64, hi: f64 },
    Log { beta: f64, lo: f64, hi: f64 },
    LogInf { beta: f64, lo: f64, hi: f64 },
    Atom { at: f64, mass: f64 },
}

impl Comp {
    fn is_empty(&self) -> bool {
        match *self {
            Comp::Power { c, lo, hi, .. } => c == 0.0 || hi <= lo,
            Comp::Log { lo, hi, .. } | Comp::LogInf { lo, hi, .. } => hi <= lo,
            Comp::Atom { mass, .. } => mass == 0.0,
        }
    }

    fn clip(self, a: f64, b: f64) -> Option<Comp> {
        let c = match self {
            Comp::Power { c, p, lo, hi } => Comp::Power { c, p, lo: lo.max(a), hi: hi.min(b) },
            Comp::Log { beta, lo, hi } => Comp::Log { beta, lo: lo.max(a), hi: hi.min(b) },
            Comp::LogInf { beta, lo, hi } => Comp::LogInf { beta, lo: lo.max(a), hi: hi.min(b) },
            Comp::Atom { at, mass } => {
                if at > a && at <= b {
                    Comp::Atom { at, mass }
                } else {
                    return None;
                }
            }
        };
        if c.is_empty() {
            None
        } else {
            Some(c)
        }
    }

    fn support(&self) -> (f64, f64) {
        match *self {
            Comp::Power { lo, hi, .. } | Comp::Log { lo, hi, .. } | Comp::LogInf { lo, hi, .. } => (lo, hi),
            Comp::Atom { at, .. } => (at, at),
        }
    }

    /// mass of (u, ∞)
    fn tail(&self, u: f64) -> f64 {
        match *self {
            Comp::Power { c, p, lo, hi } => {
                if u >= hi {
                    return 0.0;
                }
                power_mass(c, p, u.max(lo), hi)
            }
            Comp::Log { beta, lo, hi } => {
                if u >= hi {
                    return 0.0;
                }
                let l = u.max(lo);
                if l <= 0.0 {
                    return if beta > 1.0 { log_mass(beta, 0.0, hi) } else { f64::INFINITY };
                }
                log_mass(beta, l, hi)
            }
            Comp::LogInf { beta, lo, hi } => {
                if u >= hi {
                    return 0.0;
                }
                log_inf_tail(beta, u.max(lo), hi)
            }
            Comp::Atom { at, mass } => {
                if at > u {
                    mass
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫_{(a,b]} u^k μ(du)
    fn moment(&self, k: f64, a: f64, b: f64) -> f64 {
        match *self {
            Comp::Power { c, p, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                power_moment(c, p, k, l, h)
            }
            Comp::Log { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                integrate_log(|u| u.powf(k) * log_density(beta, u), l.max(1e-300), h, &[])
            }
            Comp::LogInf { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                if k == 0.0 {
                    return log_inf_tail(beta, l, hi) - log_inf_tail(beta, h, hi);
                }
                if k > 0.0 && h == f64::INFINITY {
                    return f64::INFINITY;
                }
                integrate_log(|u| u.powf(k) * log_inf_density(beta, u), l, h, &[])
            }
            Comp::Atom { at, mass } => {
                if at > a && at <= b {
                    mass * at.powf(k)
                } else {
                    0.0
                }
            }
        }
    }

    fn kernel(&self, kern: Kernel, x: f64, a: f64, b: f64) -> f64 {
        match *self {
            Comp::Atom { at, mass } => {
                if at > a && at <= b {
                    mass * kern.at(at, x)
                } else {
                    0.0
                }
            }
            Comp::Power { c, p, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                if l == 0.0 && h == f64::INFINITY {
                    if let Some(v) = stable_closed(kern, c, p, x) {
                        return v;
                    }
                }
                power_kernel_numeric(kern, c, p, l, h, x)
            }
            Comp::Log { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                let piv = if x > 0.0 { vec![1.0 / x] } else { vec![] };
                integrate_log(|u| kern.at(u, x) * log_density(beta, u), l.max(1e-300), h, &piv)
            }
            Comp::LogInf { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return 0.0;
                }
                if x == 0.0 {
                    return 0.0;
                }
                let far = (FAR_SCALE / x).max(l);
                let mut acc = integrate_log(|u| kern.at(u, x) * log_inf_density(beta, u), l, h.min(far), &[1.0 / x]);
                if h > far {
                    let m = log_inf_tail(beta, far, hi) - log_inf_tail(beta, h, hi);
                    acc += match kern {
                        Kernel::Bern => m,
                        Kernel::Comp => -m + if h.is_finite() { x * self.moment(1.0, far, h) } else { f64::INFINITY },
                        Kernel::CompD => if h.is_finite() { self.moment(1.0, far, h) } else { f64::INFINITY },
                        Kernel::BernD | Kernel::Second => 0.0,
                    };
                }
                acc
            }
        }
    }

    fn kernel_c(&self, kern: Kernel, s: Complex64, a: f64, b: f64) -> Complex64 {
        match *self {
            Comp::Atom { at, mass } => {
                if at > a && at <= b {
                    kern.at_c(at, s) * mass
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            Comp::Power { c, p, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return Complex64::new(0.0, 0.0);
                }
                if l == 0.0 && h == f64::INFINITY {
                    if let Some(v) = stable_closed_c(kern, c, p, s) {
                        return v;
                    }
                }
                power_kernel_numeric_c(kern, c, p, l, h, s)
            }
            Comp::Log { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return Complex64::new(0.0, 0.0);
                }
                let piv = [1.0 / s.norm()];
                let re = integrate_log(|u| kern.at_c(u, s).re * log_density(beta, u), l.max(1e-300), h, &piv);
                let im = integrate_log(|u| kern.at_c(u, s).im * log_density(beta, u), l.max(1e-300), h, &piv);
                Complex64::new(re, im)
            }
            Comp::LogInf { beta, lo, hi } => {
                let (l, h) = (lo.max(a), hi.min(b));
                if h <= l {
                    return Complex64::new(0.0, 0.0);
                }
                let far = if s.re > 0.0 { (FAR_SCALE / s.re).max(l) } else { h };
                let mid = h.min(far);
                let piv = [1.0 / s.norm()];
                let re = integrate_log(|u| kern.at_c(u, s).re * log_inf_density(beta, u), l, mid, &piv);
                let im = integrate_log(|u| kern.at_c(u, s).im * log_inf_density(beta, u), l, mid, &piv);
                let mut acc = Complex64::new(re, im);
                if h > far {
                    let m = log_inf_tail(beta, far, hi) - log_inf_tail(beta, h, hi);
                    acc += match kern {
                        Kernel::Bern => Complex64::new(m, 0.0),
                        Kernel::BernD | Kernel::Second => Complex64::new(0.0, 0.0),
                        Kernel::Comp | Kernel::CompD => Complex64::new(f64::INFINITY, 0.0),
                    };
                }
                acc
            }
        }
    }
}

fn power_mass(c: f64, p: f64, l: f64, h: f64) -> f64 {
    if p == 0.0 {
        return c * (h / l).ln();
    }
    let hp = if h.is_finite() { h.powf(-p) } else if p > 0.0 { 0.0 } else { f64::INFINITY };
    let lp = if l > 0.0 { l.powf(-p) } else if p > 0.0 { f64::INFINITY } else { 0.0 };
    c / p * (lp - hp)
}

fn power_moment(c: f64, p: f64, k: f64, l: f64, h: f64) -> f64 {
    let e = k - p;
    if e == 0.0 {
        return c * (h / l).ln();
    }
    let hv = if h.is_finite() { h.powf(e) } else if e < 0.0 { 0.0 } else { f64::INFINITY };
    let lv = if l > 0.0 { l.powf(e) } else if e > 0.0 { 0.0 } else { f64::INFINITY };
    c * (hv - lv) / e
}

fn log_density(beta: f64, u: f64) -> f64 {
    1.0 / (u * (-u.ln()).powf(beta))
}

fn log_inf_density(beta: f64, u: f64) -> f64 {
    beta / (u * u.ln().powf(beta + 1.0))
}

/// mass of (u, hi] for the tail `(ln u)^{-β}`
fn log_inf_tail(beta: f64, u: f64, hi: f64) -> f64 {
    let top = if hi.is_finite() { hi.ln().powf(-beta) } else { 0.0 };
    u.ln().powf(-beta) - top
}

fn log_mass(beta: f64, l: f64, h: f64) -> f64 {
    let lh = -h.ln();
    if l <= 0.0 {
        return if beta > 1.0 { lh.powf(1.0 - beta) / (beta - 1.0) } else { f64::INFINITY };
    }
    let ll = -l.ln();
    if beta == 1.0 {
        (ll / lh).ln()
    } else {
        (ll.powf(1.0 - beta) - lh.powf(1.0 - beta)) / (1.0 - beta)
    }
}

fn stable_closed(kern: Kernel, c: f64, p: f64, x: f64) -> Option<f64> {
    match kern {
        Kernel::Comp if p > 1.0 && p < 2.0 => Some(c * gamma(2.0 - p) / (p * (p - 1.0)) * x.powf(p)),
        Kernel::CompD if p > 1.0 && p < 2.0 => Some(c * gamma(2.0 - p) / (p - 1.0) * x.powf(p - 1.0)),
        Kernel::Bern if p > 0.0 && p < 1.0 => Some(c * gamma(1.0 - p) / p * x.powf(p)),
        Kernel::BernD if p > 0.0 && p < 1.0 => Some(c * gamma(1.0 - p) * x.powf(p - 1.0)),
        Kernel::Second if p > 0.0 && p < 2.0 => Some(c * gamma(2.0 - p) * x.powf(p - 2.0)),
        _ => None,
    }
}

fn stable_closed_c(kern: Kernel, c: f64, p: f64, s: Complex64) -> Option<Complex64> {
    match kern {
        Kernel::Comp if p > 1.0 && p < 2.0 => Some(s.powf(p) * (c * gamma(2.0 - p) / (p * (p - 1.0)))),
        Kernel::Bern if p > 0.0 && p < 1.0 => Some(s.powf(p) * (c * gamma(1.0 - p) / p)),
        _ => None,
    }
}

const SERIES_TERMS: usize = 8;
const SERIES_SCALE: f64 = 1e-3;
const FAR_SCALE: f64 = 40.0;

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// ∫_0^{u0} kernel(u) c u^{-1-p} du from the power series of the kernel.
fn small_series(kern: Kernel, c: f64, p: f64, u0: f64, x: f64) -> f64 {
    if p >= kern.small_order() {
        return f64::INFINITY;
    }
    let (m0, shift, sign) = kern.series_shift();
    let mut acc = 0.0;
    for m in m0..m0 + SERIES_TERMS {
        let e = m as f64 + shift as f64 - p;
        acc += (-x).powi(m as i32) / factorial(m) * u0.powf(e) / e;
    }
    sign * c * acc
}

fn small_series_c(kern: Kernel, c: f64, p: f64, u0: f64, s: Complex64) -> Complex64 {
    if p >= kern.small_order() {
        return Complex64::new(f64::INFINITY, 0.0);
    }
    let (m0, shift, sign) = kern.series_shift();
    let mut acc = Complex64::new(0.0, 0.0);
    for m in m0..m0 + SERIES_TERMS {
        let e = m as f64 + shift as f64 - p;
        acc += (-s).powi(m as i32) / factorial(m) * (u0.powf(e) / e);
    }
    acc * (sign * c)
}

fn power_kernel_numeric(kern: Kernel, c: f64, p: f64, l: f64, h: f64, x: f64) -> f64 {
    if h == f64::INFINITY && p <= kern.large_order() {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    let mut lo = l;
    if x > 0.0 {
        let u0 = (SERIES_SCALE / x).min(h);
        if lo < u0 {
            acc += small_series(kern, c, p, u0, x) - small_series(kern, c, p, lo, x);
            lo = u0;
        }
    } else {
        return 0.0;
    }
    let far = (FAR_SCALE / x).max(lo);
    let mid = h.min(far);
    if mid > lo {
        acc += integrate_log(|u| kern.at(u, x) * c * u.powf(-1.0 - p), lo, mid, &[1.0 / x]);
    }
    if h > far {
        // e^{-ux} is below e^{-40} here
        acc += match kern {
            Kernel::Comp => x * power_moment(c, p, 1.0, far, h) - power_mass(c, p, far, h),
            Kernel::Bern => power_mass(c, p, far, h),
            Kernel::CompD => power_moment(c, p, 1.0, far, h),
            Kernel::BernD | Kernel::Second => 0.0,
        };
    }
    acc
}

fn power_kernel_numeric_c(kern: Kernel, c: f64, p: f64, l: f64, h: f64, s: Complex64) -> Complex64 {
    if h == f64::INFINITY && p <= kern.large_order() {
        return Complex64::new(f64::INFINITY, 0.0);
    }
    let r = s.norm();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut lo = l;
    let u0 = (SERIES_SCALE / r).min(h);
    if lo < u0 {
        acc += small_series_c(kern, c, p, u0, s) - small_series_c(kern, c, p, lo, s);
        lo = u0;
    }
    let far = if s.re > 0.0 { (FAR_SCALE / s.re).max(lo) } else { h };
    let mid = h.min(far);
    if mid > lo {
        let re = integrate_log(|u| kern.at_c(u, s).re * c * u.powf(-1.0 - p), lo, mid, &[1.0 / r]);
        let im = integrate_log(|u| kern.at_c(u, s).im * c * u.powf(-1.0 - p), lo, mid, &[1.0 / r]);
        acc += Complex64::new(re, im);
    }
    if h > far {
        acc += match kern {
            Kernel::Comp => s * power_moment(c, p, 1.0, far, h) - power_mass(c, p, far, h),
            Kernel::Bern => Complex64::new(power_mass(c, p, far, h), 0.0),
            Kernel::CompD => Complex64::new(power_moment(c, p, 1.0, far, h), 0.0),
            Kernel::BernD | Kernel::Second => Complex64::new(0.0, 0.0),
        };
    }
    acc
}

/// Compiled jump measure.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Spectrum {
    pub(crate) comps: Vec<Comp>,
}

impl Spectrum {
    pub fn is_null(&self) -> bool {
        self.comps.is_empty()
    }

    fn validate(&self) -> Result<(), MechanismError> {
        let small = self.moment(2.0, 0.0, 1.0);
        let large = self.mass_between(1.0, f64::INFINITY);
        if !small.is_finite() || !large.is_finite() {
            return Err(MechanismError::InvalidLevyMeasure(
                "∫(1∧u²)π(du) diverges".into(),
            ));
        }
        Ok(())
    }

    /// π̄(u) = π((u, ∞))
    pub fn tail(&self, u: f64) -> f64 {
        self.comps.iter().map(|c| c.tail(u)).sum()
    }

    /// π((a, b])
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.comps
            .iter()
            .map(|c| {
                let t = c.tail(a);
                if b.is_finite() {
                    t - c.tail(b)
                } else {
                    t
                }
            })
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.tail(0.0)
    }

    /// ∫_{(a,b]} u^k π(du)
    pub fn moment(&self, k: f64, a: f64, b: f64) -> f64 {
        self.comps.iter().map(|c| c.moment(k, a, b)).sum()
    }

    pub fn kernel(&self, kern: Kernel, x: f64, a: f64, b: f64) -> f64 {
        if x == 0.0 {
            return match kern {
                Kernel::BernD => self.moment(1.0, a, b),
                Kernel::Second => self.moment(2.0, a, b),
                _ => 0.0,
            };
        }
        self.comps.iter().map(|c| c.kernel(kern, x, a, b)).sum()
    }

    pub fn kernel_c(&self, kern: Kernel, s: Complex64, a: f64, b: f64) -> Complex64 {
        self.comps.iter().map(|c| c.kernel_c(kern, s, a, b)).sum()
    }

    /// `∫(e^{-ux} − 1 + ux·1_{u≤1}) π(du)`
    pub fn lk(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        self.comps
            .iter()
            .map(|c| match *c {
                Comp::Power { p, lo: 0.0, hi, .. } if hi == f64::INFINITY && p != 1.0 => {
                    if p > 1.0 {
                        c.kernel(Kernel::Comp, x, 0.0, f64::INFINITY) - x * c.moment(1.0, 1.0, f64::INFINITY)
                    } else {
                        -c.kernel(Kernel::Bern, x, 0.0, f64::INFINITY) + x * c.moment(1.0, 0.0, 1.0)
                    }
                }
                _ => c.kernel(Kernel::Comp, x, 0.0, 1.0) - c.kernel(Kernel::Bern, x, 1.0, f64::INFINITY),
            })
            .sum()
    }

    /// x-derivative of [`Spectrum::lk`]
    pub fn lk_d(&self, x: f64) -> f64 {
        self.comps
            .iter()
            .map(|c| match *c {
                Comp::Power { p, lo: 0.0, hi, .. } if hi == f64::INFINITY && p != 1.0 && x > 0.0 => {
                    if p > 1.0 {
                        c.kernel(Kernel::CompD, x, 0.0, f64::INFINITY) - c.moment(1.0, 1.0, f64::INFINITY)
                    } else {
                        -c.kernel(Kernel::BernD, x, 0.0, f64::INFINITY) + c.moment(1.0, 0.0, 1.0)
                    }
                }
                _ => {
                    if x == 0.0 {
                        -c.moment(1.0, 1.0, f64::INFINITY)
                    } else {
                        c.kernel(Kernel::CompD, x, 0.0, 1.0) - c.kernel(Kernel::BernD, x, 1.0, f64::INFINITY)
                    }
                }
            })
            .sum()
    }

    pub fn lk_dd(&self, x: f64) -> f64 {
        self.kernel(Kernel::Second, x, 0.0, f64::INFINITY)
    }

    pub fn lk_c(&self, s: Complex64) -> Complex64 {
        self.comps
            .iter()
            .map(|c| match *c {
                Comp::Power { p, lo: 0.0, hi, .. } if hi == f64::INFINITY && p != 1.0 => {
                    if p > 1.0 {
                        c.kernel_c(Kernel::Comp, s, 0.0, f64::INFINITY) - s * c.moment(1.0, 1.0, f64::INFINITY)
                    } else {
                        -c.kernel_c(Kernel::Bern, s, 0.0, f64::INFINITY) + s * c.moment(1.0, 0.0, 1.0)
                    }
                }
                _ => c.kernel_c(Kernel::Comp, s, 0.0, 1.0) - c.kernel_c(Kernel::Bern, s, 1.0, f64::INFINITY),
            })
            .sum()
    }

    /// Power-law exponent of the density near 0 (0 for finite mass near 0).
    pub fn exponent_at_zero(&self) -> f64 {
        let mut e: f64 = 0.0;
        for c in &self.comps {
            match *c {
                Comp::Power { p, lo, .. } if lo == 0.0 => e = e.max(p),
                _ => {}
            }
        }
        e
    }

    /// Power-law exponent of the tail at ∞ (∞ for bounded support).
    pub fn exponent_at_infinity(&self) -> f64 {
        let mut e = f64::INFINITY;
        for c in &self.comps {
            match *c {
                Comp::Power { p, hi, .. } if hi == f64::INFINITY => e = e.min(p),
                Comp::LogInf { hi, .. } if hi == f64::INFINITY => e = 0.0,
                _ => {}
            }
        }
        e
    }

    /// Log-type correction exponent near 0, if present.
    pub fn log_exponent_at_zero(&self) -> Option<f64> {
        self.comps.iter().find_map(|c| match *c {
            Comp::Log { beta, lo, .. } if lo == 0.0 => Some(beta),
            _ => None,
        })
    }

    /// `∫_{(a,b]} g(u) π(du)`; `g` must make the integral converge at 0.
    pub fn integrate_against<F: Fn(f64) -> f64>(&self, g: F, a: f64, b: f64, pivots: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in &self.comps {
            match *c {
                Comp::Atom { at, mass } => {
                    if at > a && at <= b {
                        acc += mass * g(at);
                    }
                }
                Comp::Power { c, p, lo, hi } => {
                    let (l, h) = (lo.max(a), hi.min(b));
                    if h > l {
                        acc += integrate_log(|u| g(u) * c * u.powf(-1.0 - p), l.max(1e-300), h, pivots);
                    }
                }
                Comp::Log { beta, lo, hi } => {
                    let (l, h) = (lo.max(a), hi.min(b));
                    if h > l {
                        acc += integrate_log(|u| g(u) * log_density(beta, u), l.max(1e-300), h, pivots);
                    }
                }
                Comp::LogInf { beta, lo, hi } => {
                    let (l, h) = (lo.max(a), hi.min(b));
                    if h > l {
                        acc += integrate_log(|u| g(u) * log_inf_density(beta, u), l, h, pivots);
                    }
                }
            }
        }
        acc
    }

    /// Finite support endpoints and atom locations, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .comps
            .iter()
            .flat_map(|c| {
                let (l, h) = c.support();
                [l, h]
            })
            .filter(|u| *u > 0.0 && u.is_finite())
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// True when every component is a power density on all of (0, ∞).
    pub fn is_full_range_power(&self) -> bool {
        !self.comps.is_empty()
            && self.comps.iter().all(|c| matches!(*c, Comp::Power { lo, hi, .. } if lo == 0.0 && hi == f64::INFINITY))
    }

    pub fn support_upper(&self) -> f64 {
        self.comps.iter().map(|c| c.support().1).fold(0.0, f64::max)
    }

    /// Sampler for jumps of size larger than `eps`.
    pub fn sampler_above(&self, eps: f64) -> JumpSampler {
        let mut parts = Vec::new();
        let mut cum = Vec::new();
        let mut total = 0.0;
        for c in &self.comps {
            if let Some(cl) = c.clip(eps, f64::INFINITY) {
                let m = cl.tail(0.0_f64.max(eps));
                if m > 0.0 && m.is_finite() {
                    total += m;
                    parts.push(cl);
                    cum.push(total);
                }
            }
        }
        JumpSampler { parts, cum, total }
    }
}

/// Inverse-tail sampler of π restricted to (ε, ∞).
#[derive(Clone, Debug)]
pub struct JumpSampler {
    parts: Vec<Comp>,
    cum: Vec<f64>,
    total: f64,
}

impl JumpSampler {
    /// π̄(ε)
    pub fn rate(&self) -> f64 {
        self.total
    }

    /// Maps two uniforms in (0,1) to a jump size. Within a component the map
    /// is increasing in `v`.
    pub fn sample(&self, w: f64, v: f64) -> f64 {
        let target = w * self.total;
        let i = self.cum.partition_point(|c| *c < target).min(self.parts.len() - 1);
        let comp = self.parts[i];
        let m = comp.tail(0.0);
        // mass strictly above the returned point is (1 − v)·m
        let r = ((1.0 - v) * m).max(0.0);
        match comp {
            Comp::Atom { at, .. } => at,
            Comp::Power { c, p, lo, hi } => {
                let u = if p == 0.0 {
                    hi * (-r / c).exp()
                } else {
                    let hp = if hi.is_finite() { hi.powf(-p) } else { 0.0 };
                    (r * p / c + hp).powf(-1.0 / p)
                };
                u.clamp(lo, hi)
            }
            Comp::Log { beta, lo, hi } => {
                let lh = -hi.ln();
                let l = if beta == 1.0 {
                    lh * r.exp()
                } else {
                    (r * (1.0 - beta) + lh.powf(1.0 - beta)).powf(1.0 / (1.0 - beta))
                };
                (-l).exp().clamp(lo, hi)
            }
            Comp::LogInf { beta, lo, hi } => {
                let top = if hi.is_finite() { hi.ln().powf(-beta) } else { 0.0 };
                (r + top).powf(-1.0 / beta).exp().clamp(lo, hi)
            }
        }
    }
}
