//! Lévy–Khintchine mechanisms
//! `Ψ(x) = a x² − γ x − λ + ∫(e^{−ux} − 1 + ux·1_{u≤1}) π(du)`
//! and their decompositions `Ψ = Σ − Φ`.

mod conditions;
mod jumps;

pub use conditions::{dynkin, grey, h1, h2, integral_condition, ji, ConditionKind, Trichotomy};
pub use jumps::{JumpMeasure, JumpSampler, Kernel, Spectrum};

use num_complex::Complex64;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::quad::bisect;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MechanismError {
    #[error("invalid Lévy measure: {0}")]
    InvalidLevyMeasure(String),
    #[error("negative parameter: {0}")]
    NegativeParameter(String),
    #[error("invalid power term: {0}")]
    InvalidTerm(String),
    #[error("mechanism is not convex: {0}")]
    NotConvex(String),
    #[error("degenerate mechanism: {0}")]
    DegenerateMechanism(String),
}

/// `Σ(x) = a x² + d x + ∫(e^{−ux} − 1 + ux) η(du)`
#[derive(Clone, Debug)]
pub struct SigmaPart {
    pub a: f64,
    pub d: f64,
    pub eta: JumpMeasure,
    spec: Spectrum,
    power: Option<Vec<(f64, f64)>>,
}

/// `Φ(x) = λ + β x + ∫(1 − e^{−ux}) ν(du)`
#[derive(Clone, Debug)]
pub struct PhiPart {
    pub beta: f64,
    pub nu: JumpMeasure,
    pub lambda: f64,
    spec: Spectrum,
    power: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub sigma: SigmaPart,
    pub phi: PhiPart,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MechanismClass {
    Subcritical,
    Critical,
    SupercriticalChangingSign,
    Immortal,
}

fn eval_power(terms: &[(f64, f64)], x: f64) -> f64 {
    terms.iter().map(|&(c, e)| if e == 0.0 { c } else { c * x.powf(e) }).sum()
}

fn eval_power_d(terms: &[(f64, f64)], x: f64) -> f64 {
    terms.iter().filter(|t| t.1 != 0.0).map(|&(c, e)| c * e * x.powf(e - 1.0)).sum()
}

fn eval_power_dd(terms: &[(f64, f64)], x: f64) -> f64 {
    terms
        .iter()
        .filter(|t| t.1 != 0.0 && t.1 != 1.0)
        .map(|&(c, e)| c * e * (e - 1.0) * x.powf(e - 2.0))
        .sum()
}

fn eval_power_c(terms: &[(f64, f64)], s: Complex64) -> Complex64 {
    terms
        .iter()
        .map(|&(c, e)| if e == 0.0 { Complex64::new(c, 0.0) } else { s.powf(e) * c })
        .sum()
}

/// Full-range stable pieces as `(coefficient, exponent)` terms of the chosen kernel.
fn stable_terms(spec: &Spectrum, kern: Kernel) -> Option<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for c in &spec.comps {
        match *c {
            jumps::Comp::Power { c, p, lo, hi } if lo == 0.0 && hi == f64::INFINITY => match kern {
                Kernel::Comp if p > 1.0 && p < 2.0 => out.push((c * gamma(2.0 - p) / (p * (p - 1.0)), p)),
                Kernel::Bern if p > 0.0 && p < 1.0 => out.push((c * gamma(1.0 - p) / p, p)),
                _ => return None,
            },
            _ => return None,
        }
    }
    Some(out)
}

impl SigmaPart {
    pub fn new(a: f64, d: f64, eta: JumpMeasure) -> Result<Self, MechanismError> {
        if !(a >= 0.0) || !(d >= 0.0) {
            return Err(MechanismError::NegativeParameter(format!("sigma part needs a, d ≥ 0 (a={a}, d={d})")));
        }
        let spec = eta.compile()?;
        if !spec.moment(1.0, 1.0, f64::INFINITY).is_finite() {
            return Err(MechanismError::InvalidLevyMeasure("∫(u∧u²)η(du) diverges".into()));
        }
        let power = stable_terms(&spec, Kernel::Comp).map(|mut t| {
            if a > 0.0 {
                t.push((a, 2.0));
            }
            if d > 0.0 {
                t.push((d, 1.0));
            }
            t
        });
        Ok(SigmaPart { a, d, eta, spec, power })
    }

    pub fn zero() -> Self {
        SigmaPart::new(0.0, 0.0, JumpMeasure::Null).expect("zero part")
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.d == 0.0 && self.spec.is_null()
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power(p, x);
        }
        self.a * x * x + self.d * x + self.spec.kernel(Kernel::Comp, x, 0.0, f64::INFINITY)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_d(p, x);
        }
        2.0 * self.a * x + self.d + self.spec.kernel(Kernel::CompD, x, 0.0, f64::INFINITY)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_dd(p, x);
        }
        2.0 * self.a + self.spec.kernel(Kernel::Second, x, 0.0, f64::INFINITY)
    }

    pub fn evaluate_complex(&self, s: Complex64) -> Complex64 {
        if let Some(p) = &self.power {
            return eval_power_c(p, s);
        }
        s * s * self.a + s * self.d + self.spec.kernel_c(Kernel::Comp, s, 0.0, f64::INFINITY)
    }

    /// `lim Σ(x)/x` as x → ∞
    pub fn slope_at_infinity(&self) -> f64 {
        if self.a > 0.0 {
            return f64::INFINITY;
        }
        self.d + self.spec.moment(1.0, 0.0, f64::INFINITY)
    }

    /// growth index of Σ at ∞ (2 with diffusion, the small-jump exponent in (1,2), else 1)
    pub fn index_at_infinity(&self) -> f64 {
        if self.a > 0.0 {
            2.0
        } else {
            self.spec.exponent_at_zero().max(1.0)
        }
    }

    /// Σ(x) = C x^index exactly
    pub fn pure_power(&self) -> Option<(f64, f64)> {
        match self.power.as_deref() {
            Some([(c, e)]) => Some((*c, *e)),
            _ => None,
        }
    }
}

impl PhiPart {
    pub fn new(beta: f64, nu: JumpMeasure, lambda: f64) -> Result<Self, MechanismError> {
        if !(beta >= 0.0) || !(lambda >= 0.0) {
            return Err(MechanismError::NegativeParameter(format!(
                "phi part needs β, λ ≥ 0 (β={beta}, λ={lambda})"
            )));
        }
        let spec = nu.compile()?;
        if !spec.moment(1.0, 0.0, 1.0).is_finite() {
            return Err(MechanismError::InvalidLevyMeasure("∫(1∧u)ν(du) diverges".into()));
        }
        let power = stable_terms(&spec, Kernel::Bern).map(|mut t| {
            if beta > 0.0 {
                t.push((beta, 1.0));
            }
            if lambda > 0.0 {
                t.push((lambda, 0.0));
            }
            t
        });
        Ok(PhiPart { beta, nu, lambda, spec, power })
    }

    pub fn zero() -> Self {
        PhiPart::new(0.0, JumpMeasure::Null, 0.0).expect("zero part")
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        self.beta == 0.0 && self.lambda == 0.0 && self.spec.is_null()
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power(p, x);
        }
        self.lambda + self.beta * x + self.spec.kernel(Kernel::Bern, x, 0.0, f64::INFINITY)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_d(p, x);
        }
        self.beta + self.spec.kernel(Kernel::BernD, x, 0.0, f64::INFINITY)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_dd(p, x);
        }
        -self.spec.kernel(Kernel::Second, x, 0.0, f64::INFINITY)
    }

    pub fn evaluate_complex(&self, s: Complex64) -> Complex64 {
        if let Some(p) = &self.power {
            return eval_power_c(p, s);
        }
        s * self.beta + self.lambda + self.spec.kernel_c(Kernel::Bern, s, 0.0, f64::INFINITY)
    }

    /// Φ′(0+) = β + ∫ u ν(du), possibly infinite
    pub fn derivative_at_zero(&self) -> f64 {
        self.beta + self.spec.moment(1.0, 0.0, f64::INFINITY)
    }

    /// Φ(x) = c x^index exactly
    pub fn pure_power(&self) -> Option<(f64, f64)> {
        match self.power.as_deref() {
            Some([(c, e)]) => Some((*c, *e)),
            _ => None,
        }
    }
}

impl Decomposition {
    pub fn evaluate(&self, x: f64) -> f64 {
        self.sigma.evaluate(x) - self.phi.evaluate(x)
    }
}

/// A Lévy–Khintchine function given by its quadruplet `(π, a, γ, λ)`.
#[derive(Clone, Debug)]
pub struct Mechanism {
    pub a: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub jumps: JumpMeasure,
    spec: Spectrum,
    power: Option<Vec<(f64, f64)>>,
    parts: Option<Box<Decomposition>>,
}

impl Mechanism {
    pub fn new(jumps: JumpMeasure, a: f64, gamma: f64, lambda: f64) -> Result<Self, MechanismError> {
        if !(a >= 0.0) {
            return Err(MechanismError::NegativeParameter(format!("diffusion a = {a}")));
        }
        if !(lambda >= 0.0) {
            return Err(MechanismError::NegativeParameter(format!("killing λ = {lambda}")));
        }
        if !gamma.is_finite() {
            return Err(MechanismError::NegativeParameter(format!("drift γ = {gamma} is not finite")));
        }
        let spec = jumps.compile()?;
        let power = lk_power_terms(a, gamma, lambda, &spec);
        let m = Mechanism { a, gamma, lambda, jumps, spec, power, parts: None };
        m.check_convex()?;
        Ok(m)
    }

    /// Builds `Ψ = Σ − Φ` and keeps the given split as the preferred decomposition.
    pub fn from_parts(sigma: SigmaPart, phi: PhiPart) -> Result<Self, MechanismError> {
        let gamma = phi.beta + phi.spec.moment(1.0, 0.0, 1.0) - sigma.d - sigma.spec.moment(1.0, 1.0, f64::INFINITY);
        let jumps = sigma.eta.clone().plus(phi.nu.clone());
        let spec = jumps.compile()?;
        let power = match (&sigma.power, &phi.power) {
            (Some(s), Some(p)) => {
                let mut t = s.clone();
                t.extend(p.iter().map(|&(c, e)| (-c, e)));
                Some(t)
            }
            _ => None,
        };
        Ok(Mechanism {
            a: sigma.a,
            gamma,
            lambda: phi.lambda,
            jumps,
            spec,
            power,
            parts: Some(Box::new(Decomposition { sigma, phi })),
        })
    }

    /// `Ψ(x) = Σ coef·x^index` with indices in {0} ∪ (0,1) ∪ {1} ∪ (1,2) ∪ {2}.
    /// Terms with index in (1,2] need coef ≥ 0, terms with index in [0,1) need coef ≤ 0.
    pub fn power_sum(terms: &[(f64, f64)]) -> Result<Self, MechanismError> {
        let (mut a, mut d, mut beta, mut lambda) = (0.0, 0.0, 0.0, 0.0);
        let mut eta = JumpMeasure::Null;
        let mut nu = JumpMeasure::Null;
        for &(coef, idx) in terms {
            if coef == 0.0 {
                continue;
            }
            let bad = || Err(MechanismError::InvalidTerm(format!("{coef}·x^{idx}")));
            if idx == 2.0 {
                if coef < 0.0 {
                    return bad();
                }
                a += coef;
            } else if idx > 1.0 && idx < 2.0 {
                if coef < 0.0 {
                    return bad();
                }
                let c = coef * idx * (idx - 1.0) / gamma(2.0 - idx);
                eta = eta.plus(JumpMeasure::stable(c, idx));
            } else if idx == 1.0 {
                if coef > 0.0 {
                    d += coef;
                } else {
                    beta -= coef;
                }
            } else if idx > 0.0 && idx < 1.0 {
                if coef > 0.0 {
                    return bad();
                }
                let c = -coef * idx / gamma(1.0 - idx);
                nu = nu.plus(JumpMeasure::stable(c, idx));
            } else if idx == 0.0 {
                if coef > 0.0 {
                    return bad();
                }
                lambda -= coef;
            } else {
                return bad();
            }
        }
        Mechanism::from_parts(SigmaPart::new(a, d, eta)?, PhiPart::new(beta, nu, lambda)?)
    }

    pub fn zero() -> Self {
        Mechanism::new(JumpMeasure::Null, 0.0, 0.0, 0.0).expect("zero mechanism")
    }

    /// `Ψ(x) = Σ coef·x^index` when the mechanism is a finite power sum
    pub fn power_terms(&self) -> Option<&[(f64, f64)]> {
        self.power.as_deref()
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spec
    }

    fn check_convex(&self) -> Result<(), MechanismError> {
        let xs = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
        let v: Vec<f64> = xs.iter().map(|&x| self.evaluate(x)).collect();
        for i in 1..xs.len() - 1 {
            let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
            let chord = ((x2 - x1) * v[i - 1] + (x1 - x0) * v[i + 1]) / (x2 - x0);
            if v[i] > chord + 1e-9 * (1.0 + v[i + 1].abs()) {
                return Err(MechanismError::NotConvex(format!("at x = {x1}")));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power(p, x);
        }
        if let Some(d) = &self.parts {
            return d.evaluate(x);
        }
        self.a * x * x - self.gamma * x - self.lambda + self.spec.lk(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_d(p, x);
        }
        if let Some(d) = &self.parts {
            return d.sigma.derivative(x) - d.phi.derivative(x);
        }
        2.0 * self.a * x - self.gamma + self.spec.lk_d(x)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if let Some(p) = &self.power {
            return eval_power_dd(p, x);
        }
        2.0 * self.a + self.spec.lk_dd(x)
    }

    pub fn evaluate_complex(&self, s: Complex64) -> Complex64 {
        if let Some(p) = &self.power {
            return eval_power_c(p, s);
        }
        if let Some(d) = &self.parts {
            return d.sigma.evaluate_complex(s) - d.phi.evaluate_complex(s);
        }
        s * s * self.a - s * self.gamma - self.lambda + self.spec.lk_c(s)
    }

    /// `Ψ′(0+) = −γ − ∫_{(1,∞)} u π(du)`, −∞ when the first moment of large jumps diverges
    pub fn derivative_at_zero(&self) -> f64 {
        let m = self.spec.moment(1.0, 1.0, f64::INFINITY);
        if !m.is_finite() {
            return f64::NEG_INFINITY;
        }
        let v = -self.gamma - m;
        if v.abs() <= 1e-12 * (1.0 + self.gamma.abs() + m) {
            0.0
        } else {
            v
        }
    }

    /// Largest zero ρ = sup{x : Ψ(x) ≤ 0}.
    pub fn largest_zero(&self) -> f64 {
        let d0 = self.derivative_at_zero();
        if self.lambda == 0.0 && d0 >= 0.0 {
            return 0.0;
        }
        let mut lo = 0.0;
        let mut hi = 1e-3;
        while hi <= 1e300 {
            let v = self.evaluate(hi);
            if v > 0.0 {
                return bisect(|x| self.evaluate(x), lo, hi, 1e-14);
            }
            if hi >= 1e12 && self.derivative(hi) <= 0.0 {
                return f64::INFINITY;
            }
            lo = hi;
            hi *= 2.0;
        }
        f64::INFINITY
    }

    pub fn classify(&self) -> (MechanismClass, f64) {
        let rho = self.largest_zero();
        let class = if rho == f64::INFINITY {
            MechanismClass::Immortal
        } else if rho > 0.0 {
            MechanismClass::SupercriticalChangingSign
        } else if self.derivative_at_zero() == 0.0 {
            MechanismClass::Critical
        } else {
            MechanismClass::Subcritical
        };
        (class, rho)
    }

    /// `η = π|(0,1]`, `d = γ⁻`, `ν = π|(1,∞)`, `β = γ⁺`
    pub fn canonical_decomposition(&self) -> Decomposition {
        let eta = self.jumps.clone().restricted(0.0, 1.0);
        let nu = self.jumps.clone().restricted(1.0, f64::INFINITY);
        let sigma = SigmaPart::new(self.a, (-self.gamma).max(0.0), eta).expect("canonical sigma part");
        let phi = PhiPart::new(self.gamma.max(0.0), nu, self.lambda).expect("canonical phi part");
        Decomposition { sigma, phi }
    }

    /// The decomposition the mechanism was built from, else the canonical one.
    pub fn decomposition(&self) -> Decomposition {
        match &self.parts {
            Some(d) => (**d).clone(),
            None => self.canonical_decomposition(),
        }
    }

    /// `Ψⁿ = Σ − Φⁿ` on the canonical split, where `Φⁿ` carries
    /// `ν|(1,n) + (ν̄(n) + λ) δₙ` and no killing.
    pub fn truncate(&self, n: f64) -> Result<Mechanism, MechanismError> {
        if !(n >= 1.0) {
            return Err(MechanismError::NegativeParameter(format!("truncation level n = {n} < 1")));
        }
        if self.lambda == 0.0 && self.spec.tail(n) == 0.0 {
            return Ok(self.clone());
        }
        let can = self.canonical_decomposition();
        let phi = PhiPart::new(can.phi.beta, can.phi.nu.truncated(n, self.lambda), 0.0)?;
        Mechanism::from_parts(can.sigma, phi)
    }

    /// `Ψ(x) − c x`
    pub fn shift(&self, c: f64) -> Mechanism {
        let mut m = self.clone();
        m.gamma += c;
        if let Some(p) = &mut m.power {
            p.push((-c, 1.0));
        }
        if let Some(d) = &self.parts {
            let (sd, pb) = (d.sigma.d - c.min(0.0), d.phi.beta + c.max(0.0));
            let sigma = SigmaPart::new(d.sigma.a, sd, d.sigma.eta.clone()).expect("shift keeps a valid sigma part");
            let phi = PhiPart::new(pb, d.phi.nu.clone(), d.phi.lambda).expect("shift keeps a valid phi part");
            m.parts = Some(Box::new(Decomposition { sigma, phi }));
        }
        m
    }

    /// Ψ(x) = C x^{1+β} with β ∈ (0,1], as `(C, β)`
    pub fn as_stable_power(&self) -> Option<(f64, f64)> {
        let p = self.power.as_ref()?;
        let terms: Vec<_> = p.iter().filter(|t| t.0 != 0.0).collect();
        match terms.as_slice() {
            [(c, e)] if *c > 0.0 && *e > 1.0 && *e <= 2.0 => Some((*c, e - 1.0)),
            _ => None,
        }
    }

    /// Ψ(x) = k x exactly
    pub fn as_linear(&self) -> Option<f64> {
        if self.a == 0.0 && self.lambda == 0.0 && self.spec.is_null() {
            Some(-self.gamma)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.gamma == 0.0 && self.lambda == 0.0 && self.spec.is_null()
    }
}

fn lk_power_terms(a: f64, drift: f64, lambda: f64, spec: &Spectrum) -> Option<Vec<(f64, f64)>> {
    let mut t = Vec::new();
    let mut lin = -drift;
    for c in &spec.comps {
        match *c {
            jumps::Comp::Power { c, p, lo, hi } if lo == 0.0 && hi == f64::INFINITY && p != 1.0 => {
                if p > 1.0 {
                    t.push((c * gamma(2.0 - p) / (p * (p - 1.0)), p));
                    lin -= c / (p - 1.0);
                } else {
                    t.push((-c * gamma(1.0 - p) / p, p));
                    lin += c / (1.0 - p);
                }
            }
            _ => return None,
        }
    }
    if a > 0.0 {
        t.push((a, 2.0));
    }
    if lin.abs() > 1e-13 * (1.0 + drift.abs()) {
        t.push((lin, 1.0));
    }
    if lambda > 0.0 {
        t.push((-lambda, 0.0));
    }
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn pure_diffusion() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(m.evaluate(2.0), 4.0);
        assert_eq!(m.classify(), (MechanismClass::Critical, 0.0));
    }

    #[test]
    fn stable_constant_against_quadrature() {
        let c = 0.8;
        let m = Mechanism::new(JumpMeasure::stable(c, 1.5), 0.0, -c / 0.5, 0.0).unwrap();
        let x: f64 = 3.0;
        let direct = integrate(|u: f64| ((-u * x).exp_m1() + u * x) * c * u.powf(-2.5), 0.0, f64::INFINITY, &[1.0 / x]);
        assert!((m.evaluate(x) - direct).abs() < 1e-9 * direct);
        let cp = c * gamma(0.5) / (1.5 * 0.5);
        assert!((m.evaluate(x) - cp * x.powf(1.5)).abs() < 1e-12 * direct);
    }

    #[test]
    fn killing_and_drift() {
        let m = Mechanism::new(JumpMeasure::Null, 0.0, -1.0, 2.0).unwrap();
        assert_eq!(m.evaluate(0.0), -2.0);
        assert_eq!(m.evaluate(3.0), 1.0);
    }

    #[test]
    fn power_sum_values() {
        let m = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap();
        assert!((m.evaluate(4.0) + 2.0).abs() < 1e-14);
        assert_eq!(m.classify().0, MechanismClass::Immortal);
        let s = Mechanism::power_sum(&[(1.0, 1.5)]).unwrap();
        assert!((s.evaluate(4.0) - 8.0).abs() < 1e-13);
        assert_eq!(s.classify().0, MechanismClass::Critical);
        let lk = Mechanism::new(s.jumps.clone(), s.a, s.gamma, s.lambda).unwrap();
        assert!((lk.evaluate(4.0) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_at_zero_cases() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 1.0, 0.0).unwrap();
        assert_eq!(m.derivative_at_zero(), -1.0);
        let b = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap();
        assert_eq!(b.derivative_at_zero(), f64::NEG_INFINITY);
    }

    #[test]
    fn largest_zero_supercritical() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 1.0, 0.0).unwrap();
        let (class, rho) = m.classify();
        assert_eq!(class, MechanismClass::SupercriticalChangingSign);
        assert!((rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_decomposition_examples() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 1.0, 0.0).unwrap();
        let d = m.canonical_decomposition();
        assert_eq!(d.sigma.evaluate(2.0), 4.0);
        assert_eq!(d.phi.evaluate(2.0), 2.0);
        let m = Mechanism::new(JumpMeasure::Null, 1.0, -1.0, 0.0).unwrap();
        let d = m.canonical_decomposition();
        assert_eq!(d.sigma.evaluate(2.0), 6.0);
        assert!(d.phi.is_zero());
    }

    #[test]
    fn stored_and_canonical_decompositions_agree_on_psi() {
        let m = Mechanism::power_sum(&[(1.0, 1.7), (-1.0, 0.4)]).unwrap();
        let can = m.canonical_decomposition();
        let pref = m.decomposition();
        assert!(pref.sigma.pure_power().is_some());
        for &x in &[0.01, 0.3, 1.0, 7.0, 150.0] {
            let v = m.evaluate(x);
            assert!((can.evaluate(x) - v).abs() < 1e-9 * (1.0 + v.abs()), "x={x}");
        }
    }

    #[test]
    fn truncation_of_unit_atom() {
        let m = Mechanism::new(JumpMeasure::atoms(&[(2.0, 1.0)]), 0.0, 0.0, 0.0).unwrap();
        let t = m.truncate(1.0).unwrap();
        let phi = t.decomposition().phi;
        for &y in &[0.1f64, 0.7, 3.0] {
            assert!((phi.evaluate(y) - (1.0 - (-y).exp())).abs() < 1e-14);
        }
        assert!(t.derivative_at_zero().is_finite());
    }

    #[test]
    fn truncation_sandwich() {
        let m = Mechanism::power_sum(&[(1.0, 1.5), (-1.0, 0.5), (-0.5, 0.0)]).unwrap();
        let phi = m.canonical_decomposition().phi;
        let tail = |n: f64| m.spectrum().tail(n);
        for &n in &[1.0, 4.0, 30.0] {
            let pn = m.truncate(n).unwrap().decomposition().phi;
            let pn1 = m.truncate(n + 1.0).unwrap().decomposition().phi;
            for &x in &[0.01, 0.5, 3.0] {
                let (a, b, c) = (pn.evaluate(x), pn1.evaluate(x), phi.evaluate(x));
                assert!(a <= b + 1e-12 && b <= c + 1e-12, "n={n} x={x}");
                assert!(c - a <= tail(n) + 0.5 * (-x * n).exp() + 1e-12);
            }
        }
    }

    #[test]
    fn shift_is_exact() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(m.shift(1.0).evaluate(1.0), 0.0);
        let p = Mechanism::power_sum(&[(1.0, 1.5), (-0.5, 0.5)]).unwrap();
        let back = p.shift(0.7).shift(-0.7);
        for &x in &[0.5, 2.0, 9.0] {
            assert!((back.evaluate(x) - p.evaluate(x)).abs() < 1e-12);
        }
    }
}
