//! Scale functions `W` (with `∫e^{-xz} W(z) dz = 1/Σ(x)`) and potential
//! densities `u` (with `∫e^{-xz} u(z) dz = 1/Φ(x)`).

use std::sync::OnceLock;

use num_complex::Complex64;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::mechanisms::{Mechanism, MechanismError, PhiPart, SigmaPart, Trichotomy};
use crate::quad::integrate_log;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PotentialError {
    #[error("mechanism is not (sub)critical: largest zero {0}")]
    NotSubcritical(f64),
    #[error("finite variation: lim Σ(x)/x = {0} < ∞")]
    FiniteVariation(f64),
    #[error("no potential density known: {0}")]
    NoDensityKnown(String),
    #[error("numerical inversion did not converge at z = {z}: {a} vs {b}")]
    NoConvergence { z: f64, a: f64, b: f64 },
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

impl From<PotentialError> for MechanismError {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::Mechanism(m) => m,
            other => MechanismError::DegenerateMechanism(other.to_string()),
        }
    }
}

/// Euler-summation Fourier-series inversion on the Bromwich line.
#[derive(Clone, Debug)]
pub struct EulerInversion {
    pub a: f64,
    pub n: usize,
    pub m: usize,
    weights: Vec<f64>,
}

impl EulerInversion {
    pub fn new(a: f64, n: usize, m: usize) -> Self {
        let mut binom = vec![1.0f64; m + 1];
        for k in 1..=m {
            binom[k] = binom[k - 1] * (m + 1 - k) as f64 / k as f64;
        }
        let scale = 0.5f64.powi(m as i32);
        let mut weights = Vec::with_capacity(n + m + 1);
        for k in 0..=n + m {
            let xi = if k <= n { 1.0 } else { binom[k - n..].iter().sum::<f64>() * scale };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let half = if k == 0 { 0.5 } else { 1.0 };
            weights.push(sign * xi * half * (a / 2.0).exp());
        }
        EulerInversion { a, n, m, weights }
    }

    pub fn nodes(&self) -> usize {
        self.weights.len()
    }

    /// f(t) from its transform `fhat`.
    pub fn invert<F: Fn(Complex64) -> Complex64>(&self, fhat: &F, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            let s = Complex64::new(self.a / 2.0, std::f64::consts::PI * k as f64) / t;
            acc += w * fhat(s).re;
        }
        acc / t
    }
}

fn default_tables() -> &'static (EulerInversion, EulerInversion) {
    static T: OnceLock<(EulerInversion, EulerInversion)> = OnceLock::new();
    T.get_or_init(|| (EulerInversion::new(18.4, 20, 11), EulerInversion::new(18.4, 40, 23)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionParams {
    pub tol: f64,
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for InversionParams {
    fn default() -> Self {
        InversionParams { tol: 1e-6, band_lo: 1e-6, band_hi: 1e6 }
    }
}

fn invert_checked<F: Fn(Complex64) -> Complex64>(fhat: &F, z: f64, tol: f64) -> Result<f64, PotentialError> {
    let (coarse, fine) = default_tables();
    let a = coarse.invert(fhat, z);
    let b = fine.invert(fhat, z);
    if (a - b).abs() <= tol * b.abs().max(1e-300) || (a - b).abs() < 1e-14 {
        Ok(b)
    } else {
        Err(PotentialError::NoConvergence { z, a, b })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScaleMode {
    /// Σ(x) = C x^{1+β}
    ClosedFormStable { c: f64, beta: f64 },
    NumericInversion(InversionParams),
}

/// Scale function of a (sub)critical mechanism of infinite variation.
#[derive(Clone, Debug)]
pub struct ScaleFunction {
    sigma: Mechanism,
    pub mode: ScaleMode,
    band: Option<(f64, f64)>,
}

impl ScaleFunction {
    pub fn new(sigma: &SigmaPart) -> Result<Self, PotentialError> {
        let m = Mechanism::from_parts(sigma.clone(), PhiPart::zero())?;
        Self::from_mechanism(&m)
    }

    pub fn from_mechanism(m: &Mechanism) -> Result<Self, PotentialError> {
        let (_, rho) = m.classify();
        if rho > 0.0 {
            return Err(PotentialError::NotSubcritical(rho));
        }
        if m.a == 0.0 && m.spectrum().moment(1.0, 0.0, 1.0).is_finite() {
            return Err(PotentialError::FiniteVariation(m.derivative(1e12)));
        }
        let mut sf = ScaleFunction {
            sigma: m.clone(),
            mode: ScaleMode::NumericInversion(InversionParams::default()),
            band: None,
        };
        if let Some((c, beta)) = m.as_stable_power() {
            sf.mode = ScaleMode::ClosedFormStable { c, beta };
        } else {
            sf.fit_band()?;
        }
        Ok(sf)
    }

    pub fn with_params(mut self, p: InversionParams) -> Result<Self, PotentialError> {
        if let ScaleMode::NumericInversion(_) = self.mode {
            self.mode = ScaleMode::NumericInversion(p);
            self.fit_band()?;
        }
        Ok(self)
    }

    fn params(&self) -> InversionParams {
        match self.mode {
            ScaleMode::NumericInversion(p) => p,
            _ => InversionParams::default(),
        }
    }

    fn asymptote(&self, z: f64) -> f64 {
        1.0 / (z * self.sigma.evaluate(1.0 / z))
    }

    fn fit_band(&mut self) -> Result<(), PotentialError> {
        let p = self.params();
        let lo = self.invert(p.band_lo)? / self.asymptote(p.band_lo);
        let hi = self.invert(p.band_hi)? / self.asymptote(p.band_hi);
        self.band = Some((lo, hi));
        Ok(())
    }

    fn invert(&self, z: f64) -> Result<f64, PotentialError> {
        let f = |s: Complex64| 1.0 / self.sigma.evaluate_complex(s);
        invert_checked(&f, z, self.params().tol)
    }

    pub fn source(&self) -> &Mechanism {
        &self.sigma
    }

    pub fn value(&self, z: f64) -> Result<f64, PotentialError> {
        if z <= 0.0 {
            return Ok(0.0);
        }
        match self.mode {
            ScaleMode::ClosedFormStable { c, beta } => Ok(z.powf(beta) / (gamma(beta + 1.0) * c)),
            ScaleMode::NumericInversion(p) => {
                let (klo, khi) = self.band.unwrap_or((1.0, 1.0));
                if z < p.band_lo {
                    Ok(klo * self.asymptote(z))
                } else if z > p.band_hi {
                    Ok(khi * self.asymptote(z))
                } else {
                    self.invert(z)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialMode {
    /// Φ(q) = c q^α
    ClosedFormStable { c: f64, alpha: f64 },
    /// Φ has drift β > 0
    DriftSeries { beta: f64 },
    NumericInversion(InversionParams),
}

/// Potential density of a Bernstein function.
#[derive(Clone, Debug)]
pub struct PotentialDensity {
    phi: PhiPart,
    pub mode: PotentialMode,
}

const VOLTERRA_STEPS: usize = 2000;

impl PotentialDensity {
    pub fn new(phi: &PhiPart) -> Result<Self, PotentialError> {
        let mode = if let Some((c, alpha)) = phi.pure_power().filter(|p| p.1 > 0.0 && p.1 < 1.0) {
            PotentialMode::ClosedFormStable { c, alpha }
        } else if phi.beta > 0.0 {
            PotentialMode::DriftSeries { beta: phi.beta }
        } else if phi.spectrum().total_mass().is_finite() {
            return Err(PotentialError::NoDensityKnown(
                "no drift and a finite Lévy measure: the potential measure has an atom at 0".into(),
            ));
        } else {
            PotentialMode::NumericInversion(InversionParams::default())
        };
        Ok(PotentialDensity { phi: phi.clone(), mode })
    }

    pub fn source(&self) -> &PhiPart {
        &self.phi
    }

    pub fn value(&self, z: f64) -> Result<f64, PotentialError> {
        if !(z > 0.0) {
            return Err(PotentialError::NoDensityKnown(format!("z = {z} must be positive")));
        }
        match self.mode {
            PotentialMode::ClosedFormStable { c, alpha } => Ok(z.powf(alpha - 1.0) / (c * gamma(alpha))),
            PotentialMode::DriftSeries { beta } => {
                if self.phi.spectrum().is_null() {
                    return Ok((-self.phi.lambda * z / beta).exp() / beta);
                }
                let coarse = self.volterra(z, VOLTERRA_STEPS);
                let fine = self.volterra(z, 2 * VOLTERRA_STEPS);
                Ok((4.0 * fine - coarse) / 3.0)
            }
            PotentialMode::NumericInversion(p) => {
                let f = |s: Complex64| 1.0 / self.phi.evaluate_complex(s);
                invert_checked(&f, z, p.tol)
            }
        }
    }

    /// U([0, z])
    pub fn cumulative(&self, z: f64) -> Result<f64, PotentialError> {
        if let PotentialMode::ClosedFormStable { c, alpha } = self.mode {
            return Ok(z.powf(alpha) / (c * gamma(alpha + 1.0)));
        }
        let f = |s: Complex64| 1.0 / (s * self.phi.evaluate_complex(s));
        invert_checked(&f, z, InversionParams::default().tol)
    }

    /// Solves `β u(z) + λ U(z) + ∫₀^z ν̄(s) u(z−s) ds = 1` by product trapezoid.
    fn volterra(&self, z: f64, n: usize) -> f64 {
        let beta = self.phi.beta;
        let lam = self.phi.lambda;
        let spec = self.phi.spectrum();
        let h = z / n as f64;
        // ∫ over each cell of ν̄ against the two linear hat functions
        let nubar_int = |a: f64, b: f64| -> f64 {
            // ∫_a^b ν̄(s) ds = ∫ (min(v,b) − min(v,a)) ν(dv)
            let part = |c: f64| spec.moment(1.0, 0.0, c) + c * spec.tail(c);
            part(b) - part(a)
        };
        let nubar_first = |a: f64, b: f64| -> f64 {
            // ∫_a^b s ν̄(s) ds = ∫ (min(v,b)² − min(v,a)²)/2 ν(dv)
            let part = |c: f64| 0.5 * (spec.moment(2.0, 0.0, c) + c * c * spec.tail(c));
            part(b) - part(a)
        };
        let mut w0 = Vec::with_capacity(n);
        let mut w1 = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (j as f64 * h, (j + 1) as f64 * h);
            let m0 = nubar_int(a, b);
            let m1 = nubar_first(a, b);
            // hat on the left end: (b − s)/h, on the right end: (s − a)/h
            w0.push((b * m0 - m1) / h);
            w1.push((m1 - a * m0) / h);
        }
        let mut u = vec![0.0; n + 1];
        u[0] = 1.0 / beta;
        let mut cum = 0.0;
        for k in 1..=n {
            // ∫₀^{z_k} ν̄(s) u(z_k − s) ds ≈ Σ_j w0_j u_{k−j} + w1_j u_{k−j−1}
            let mut conv = 0.0;
            for j in 1..k {
                conv += w0[j] * u[k - j];
            }
            for j in 0..k {
                conv += w1[j] * u[k - j - 1];
            }
            cum += 0.5 * h * u[k - 1];
            let rhs = 1.0 - lam * cum - conv;
            u[k] = rhs / (beta + w0[0] + 0.5 * lam * h);
            cum += 0.5 * h * u[k];
        }
        u[n]
    }
}

/// `sup_x |F(x)·∫e^{-xz} w(z) dz − 1|` over the grid, where `F = 1/transform`.
fn laplace_error<W: Fn(f64) -> f64, T: Fn(f64) -> f64>(w: W, transform_inv: T, xs: &[f64]) -> f64 {
    xs.iter()
        .map(|&x| {
            // ∫₀^{z0} w ≈ z0·w(z0)/(p+1) for w ~ z^p near 0
            let z0 = 1e-12 / x;
            let (w0, p) = (w(z0), (w(2.0 * z0) / w(z0)).log2());
            let head = if w0.is_finite() && p > -1.0 { z0 * w0 / (p + 1.0) } else { 0.0 };
            let l = head + integrate_log(|z| (-x * z).exp() * w(z), z0, f64::INFINITY, &[1.0 / x]);
            (transform_inv(x) * l - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

pub fn verify_scale_pair(sf: &ScaleFunction, xs: &[f64]) -> f64 {
    laplace_error(|z| sf.value(z).unwrap_or(f64::NAN), |x| sf.source().evaluate(x), xs)
}

pub fn verify_potential_pair(pd: &PotentialDensity, xs: &[f64]) -> f64 {
    laplace_error(|z| pd.value(z).unwrap_or(f64::NAN), |x| pd.source().evaluate(x), xs)
}

fn log_slope<F: Fn(f64) -> Result<f64, PotentialError>>(f: F, z1: f64, z2: f64) -> Result<f64, PotentialError> {
    Ok((f(z2)? / f(z1)?).ln() / (z2 / z1).ln())
}

/// Decides `∫₀¹ W(z)/z dz < ∞` from the behaviour of W near 0.
pub fn scale_integral_near_zero(sigma: &SigmaPart) -> Result<Trichotomy, PotentialError> {
    if sigma.is_zero() {
        return Err(MechanismError::DegenerateMechanism("Σ ≡ 0 has no scale function".into()).into());
    }
    let sf = match ScaleFunction::new(sigma) {
        Ok(s) => s,
        Err(PotentialError::FiniteVariation(_)) => return Ok(Trichotomy::Infinite),
        Err(e) => return Err(e),
    };
    let k = log_slope(|z| sf.value(z), 1e-5, 1e-4)?;
    Ok(if k > 0.05 {
        Trichotomy::Finite
    } else {
        Trichotomy::Inconclusive(format!("log-slope of W near 0 is {k:.3}"))
    })
}

/// Decides `∫₁^∞ U(dz)/z < ∞` from the growth of U([0,z]) at ∞.
pub fn potential_integral_at_infinity(phi: &PhiPart) -> Result<Trichotomy, PotentialError> {
    if phi.is_zero() {
        return Err(MechanismError::DegenerateMechanism("Φ ≡ 0 has no potential measure".into()).into());
    }
    if phi.lambda > 0.0 {
        return Ok(Trichotomy::Finite);
    }
    if phi.derivative_at_zero().is_finite() {
        return Ok(Trichotomy::Infinite);
    }
    let pd = PotentialDensity::new(phi).unwrap_or_else(|_| PotentialDensity {
        phi: phi.clone(),
        mode: PotentialMode::NumericInversion(InversionParams::default()),
    });
    let k = log_slope(|z| pd.cumulative(z), 1e4, 1e5)?;
    Ok(if k < 0.95 {
        Trichotomy::Finite
    } else {
        Trichotomy::Inconclusive(format!("log-slope of U at ∞ is {k:.3}"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::JumpMeasure;

    #[test]
    fn euler_inverts_exponential() {
        let e = EulerInversion::new(18.4, 20, 11);
        assert_eq!(e.nodes(), 32);
        let f = |s: Complex64| 1.0 / (s + 1.0);
        for &t in &[0.1, 1.0, 5.0] {
            assert!((e.invert(&f, t) - (-t as f64).exp()).abs() < 1e-7);
        }
    }

    #[test]
    fn feller_scale_is_identity() {
        let s = SigmaPart::new(1.0, 0.0, JumpMeasure::Null).unwrap();
        let sf = ScaleFunction::new(&s).unwrap();
        assert_eq!(sf.mode, ScaleMode::ClosedFormStable { c: 1.0, beta: 1.0 });
        assert!((sf.value(3.0).unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn stable_scale_value() {
        let s = Mechanism::power_sum(&[(1.0, 1.5)]).unwrap().decomposition().sigma;
        let sf = ScaleFunction::new(&s).unwrap();
        assert!((sf.value(1.0).unwrap() - 2.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn numeric_scale_quadratic_plus_linear() {
        let s = SigmaPart::new(1.0, 1.0, JumpMeasure::Null).unwrap();
        let sf = ScaleFunction::new(&s).unwrap();
        assert!(matches!(sf.mode, ScaleMode::NumericInversion(_)));
        for &z in &[0.01, 0.5, 2.0, 20.0] {
            let want = 1.0 - (-z as f64).exp();
            assert!((sf.value(z).unwrap() - want).abs() < 1e-7 * want.max(1e-2), "z={z}");
        }
        assert!(verify_scale_pair(&sf, &[0.1, 0.5, 1.0, 5.0, 10.0, 50.0]) < 1e-6);
    }

    #[test]
    fn finite_variation_rejected() {
        let s = SigmaPart::new(0.0, 1.0, JumpMeasure::stable(1.0, 0.5).restricted(0.0, 1.0)).unwrap();
        assert!(matches!(ScaleFunction::new(&s), Err(PotentialError::FiniteVariation(_))));
    }

    #[test]
    fn supercritical_rejected() {
        let m = Mechanism::new(JumpMeasure::Null, 1.0, 1.0, 0.0).unwrap();
        assert!(matches!(ScaleFunction::from_mechanism(&m), Err(PotentialError::NotSubcritical(_))));
    }

    #[test]
    fn stable_potential_density() {
        let p = PhiPart::new(0.0, JumpMeasure::Null, 0.0).unwrap();
        assert!(PotentialDensity::new(&p).is_err());
        let phi = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap().decomposition().phi;
        let pd = PotentialDensity::new(&phi).unwrap();
        assert!((pd.value(1.0).unwrap() - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn drift_potential_density() {
        let phi = PhiPart::new(2.0, JumpMeasure::Null, 0.0).unwrap();
        let pd = PotentialDensity::new(&phi).unwrap();
        assert_eq!(pd.value(7.0).unwrap(), 0.5);
    }

    #[test]
    fn drift_plus_jumps_volterra() {
        // Φ(q) = q + (1 − e^{−q}): forward Laplace check of the Volterra solution
        let phi = PhiPart::new(1.0, JumpMeasure::atoms(&[(1.0, 1.0)]), 0.0).unwrap();
        let pd = PotentialDensity::new(&phi).unwrap();
        let inv = {
            let f = |s: Complex64| 1.0 / phi.evaluate_complex(s);
            invert_checked(&f, 0.7, 1e-6).unwrap()
        };
        assert!((pd.value(0.7).unwrap() - inv).abs() < 1e-6);
    }

    #[test]
    fn numeric_potential_for_two_stable_terms() {
        let phi = Mechanism::power_sum(&[(-1.0, 0.5), (-1.0, 0.3)]).unwrap().decomposition().phi;
        let pd = PotentialDensity::new(&phi).unwrap();
        assert!(matches!(pd.mode, PotentialMode::NumericInversion(_)));
        assert!(verify_potential_pair(&pd, &[0.5, 2.0, 10.0]) < 1e-5);
    }

    #[test]
    fn condition_equivalences() {
        let s = SigmaPart::new(1.0, 0.0, JumpMeasure::Null).unwrap();
        assert_eq!(scale_integral_near_zero(&s).unwrap(), Trichotomy::Finite);
        let phi = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap().decomposition().phi;
        assert_eq!(potential_integral_at_infinity(&phi).unwrap(), Trichotomy::Finite);
        let phi = PhiPart::new(1.0, JumpMeasure::Null, 0.0).unwrap();
        assert_eq!(potential_integral_at_infinity(&phi).unwrap(), Trichotomy::Infinite);
    }
}
