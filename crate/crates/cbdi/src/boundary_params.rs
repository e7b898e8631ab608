//! The functions F and G, Lyapunov functions f and g, the generator of a
//! CBDI on test functions, and the boundary parameters θ, ϱ and ξ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::mechanisms::{h1, h2, Mechanism, MechanismError, PhiPart, SigmaPart, Trichotomy};
use crate::potential_theory::{PotentialDensity, PotentialError, ScaleFunction};
use crate::quad::integrate_log;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BoundaryError {
    #[error("competition too weak: {0}")]
    CompetitionTooWeak(String),
    #[error("cooperation too weak: {0}")]
    CooperationTooWeak(String),
    #[error("not regularly varying: {0}")]
    NotRegularlyVarying(String),
    #[error("divergent integrand: {0}")]
    DivergentIntegrand(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

type Result<T> = std::result::Result<T, BoundaryError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMethod {
    ClosedForm,
    GridEstimate,
}

/// liminf/limsup pair of a ratio along a geometric grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub liminf_est: f64,
    pub limsup_est: f64,
    /// evaluation points, ordered toward the limit point
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// half-open index range of the final window
    pub tail_window: (usize, usize),
    pub converged: bool,
    pub method: EstimateMethod,
    pub rule: String,
}

impl LimitEstimate {
    pub fn closed(v: f64, rule: &str) -> Self {
        LimitEstimate {
            liminf_est: v,
            limsup_est: v,
            grid: Vec::new(),
            values: Vec::new(),
            tail_window: (0, 0),
            converged: true,
            method: EstimateMethod::ClosedForm,
            rule: rule.to_string(),
        }
    }

    /// Common value when the estimate is exact or has settled.
    pub fn value(&self) -> Option<f64> {
        (self.method == EstimateMethod::ClosedForm || self.converged).then(|| 0.5 * (self.liminf_est + self.limsup_est))
    }

    fn band(&self, tau: f64) -> f64 {
        match self.method {
            EstimateMethod::ClosedForm => 1e-12,
            EstimateMethod::GridEstimate => tau,
        }
    }

    /// limsup < level outside the tolerance band
    pub fn surely_below(&self, level: f64, tau: f64) -> bool {
        self.limsup_est < level * (1.0 - self.band(tau))
    }

    /// liminf > level outside the tolerance band
    pub fn surely_above(&self, level: f64, tau: f64) -> bool {
        self.liminf_est > level * (1.0 + self.band(tau))
    }

    fn scaled(mut self, k: f64) -> Self {
        self.liminf_est *= k;
        self.limsup_est *= k;
        for v in &mut self.values {
            *v *= k;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points_per_decade: usize,
    /// x-range for limits at ∞
    pub theta_range: [f64; 2],
    /// x-range for limits at 0
    pub rho_range: [f64; 2],
    pub closed_form: bool,
    /// relative agreement of the last two decades
    pub agree_tol: f64,
    /// a final window whose minimum exceeds this and keeps increasing is reported as ∞
    pub divergence_level: f64,
    /// t = ln(1/z) range for [`estimate_xi_log`]
    pub xi_log_range: [f64; 2],
    pub xi_log_window_decades: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            points_per_decade: 64,
            theta_range: [1.0, 1e8],
            rho_range: [1e-8, 1.0],
            closed_form: true,
            agree_tol: 0.02,
            divergence_level: 1e3,
            xi_log_range: [1.0, 1e8],
            xi_log_window_decades: 3,
        }
    }
}

impl GridConfig {
    pub fn grid_only() -> Self {
        GridConfig { closed_form: false, ..GridConfig::default() }
    }
}

/// Geometric grid from `from` to `to` (either order), endpoints included.
pub fn geometric_grid(from: f64, to: f64, per_decade: usize) -> Vec<f64> {
    let decades = (to / from).log10();
    let n = ((decades.abs() * per_decade as f64).round() as usize).max(1);
    (0..=n).map(|k| from * 10f64.powf(decades * k as f64 / n as f64)).collect()
}

fn summarize(grid: Vec<f64>, values: Vec<f64>, window: usize, cfg: &GridConfig, rule: &str) -> Result<LimitEstimate> {
    if values.iter().any(|v| v.is_nan() || *v < 0.0) {
        return Err(BoundaryError::Numerical(format!("{rule}: invalid grid value")));
    }
    let n = values.len();
    let w = window.clamp(1, (n / 2).max(1));
    let min_max = |s: &[f64]| s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let (lmin, lmax) = min_max(&values[n - w..]);
    let (pmin, pmax) = if n >= 2 * w { min_max(&values[n - 2 * w..n - w]) } else { (lmin, lmax) };
    let close = |a: f64, b: f64| (a - b).abs() <= cfg.agree_tol * a.abs().max(b.abs()) || a.max(b) < 1e-300;
    let (liminf, limsup, converged) = if lmin > cfg.divergence_level && lmin > pmin {
        (f64::INFINITY, f64::INFINITY, true)
    } else {
        (lmin, lmax, close(lmin, pmin) && close(lmax, pmax))
    };
    Ok(LimitEstimate {
        liminf_est: liminf,
        limsup_est: limsup,
        grid,
        values,
        tail_window: (n - w, n),
        converged,
        method: EstimateMethod::GridEstimate,
        rule: rule.to_string(),
    })
}

fn grid_estimate<F>(grid: Vec<f64>, f: F, window: usize, cfg: &GridConfig, rule: &str) -> Result<LimitEstimate>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let values = grid.par_iter().map(|&x| f(x)).collect::<Result<Vec<f64>>>()?;
    summarize(grid, values, window, cfg, rule)
}

fn require_competition(sigma_hat: &SigmaPart) -> Result<()> {
    match h2(sigma_hat) {
        Trichotomy::Finite => Ok(()),
        Trichotomy::Infinite => Err(BoundaryError::CompetitionTooWeak("∫^∞ du/Σ̂ = ∞".into())),
        Trichotomy::Inconclusive(r) => Err(BoundaryError::CompetitionTooWeak(format!("undecided: {r}"))),
    }
}

fn require_cooperation(phi_hat: &PhiPart) -> Result<()> {
    match h1(phi_hat) {
        Trichotomy::Finite => Ok(()),
        Trichotomy::Infinite => Err(BoundaryError::CooperationTooWeak("∫₀ du/Φ̂ = ∞".into())),
        Trichotomy::Inconclusive(r) => Err(BoundaryError::CooperationTooWeak(format!("undecided: {r}"))),
    }
}

fn pivots_with(base: &[f64], extra: Vec<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = base.iter().copied().chain(extra).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// f(x) = ∫ₓ^∞ du/Σ̂(u)
pub fn lyapunov_f(sigma_hat: &SigmaPart, x: f64) -> Result<f64> {
    require_competition(sigma_hat)?;
    if let Some((c, q)) = sigma_hat.pure_power() {
        return Ok(x.powf(1.0 - q) / (c * (q - 1.0)));
    }
    Ok(integrate_log(|u| 1.0 / sigma_hat.evaluate(u), x, f64::INFINITY, &[10.0 * x]))
}

/// g(x) = ∫₀^x du/Φ̂(u)
pub fn lyapunov_g(phi_hat: &PhiPart, x: f64) -> Result<f64> {
    require_cooperation(phi_hat)?;
    if let Some((c, a)) = phi_hat.pure_power() {
        return Ok(if a == 0.0 { x / c } else { x.powf(1.0 - a) / (c * (1.0 - a)) });
    }
    if phi_hat.lambda > 0.0 {
        return Ok(crate::quad::integrate(|u| 1.0 / phi_hat.evaluate(u), 0.0, x, &[]));
    }
    // the piece on (0, lo) is of order lo/Φ̂(lo)
    let lo = x * 1e-12;
    let head = lo / phi_hat.evaluate(lo);
    Ok(head + integrate_log(|u| 1.0 / phi_hat.evaluate(u), lo, x, &[]))
}

/// `f(x+u) − f(x)`
fn f_increment(sigma_hat: &SigmaPart, x: f64, u: f64) -> f64 {
    if let Some((c, q)) = sigma_hat.pure_power() {
        return ((x + u).powf(1.0 - q) - x.powf(1.0 - q)) / (c * (q - 1.0));
    }
    -integrate_log(|v| 1.0 / sigma_hat.evaluate(v), x, x + u, &[])
}

/// `g(x+u) − g(x)`
fn g_increment(phi_hat: &PhiPart, x: f64, u: f64) -> f64 {
    if let Some((c, a)) = phi_hat.pure_power() {
        if a == 0.0 {
            return u / c;
        }
        return ((x + u).powf(1.0 - a) - x.powf(1.0 - a)) / (c * (1.0 - a));
    }
    integrate_log(|v| 1.0 / phi_hat.evaluate(v), x, x + u, &[])
}

/// x·F(x) through the tail form
/// `βx/Σ̂(x) + x∫₀^∞ (ν̄(h) + λ)/Σ̂(x+h) dh`.
pub fn x_f(phi: &PhiPart, sigma_hat: &SigmaPart, x: f64) -> Result<f64> {
    require_competition(sigma_hat)?;
    let s = sigma_hat.evaluate(x);
    let mut acc = phi.beta * x / s;
    if phi.lambda > 0.0 {
        acc += phi.lambda * x * lyapunov_f(sigma_hat, x)?;
    }
    let spec = phi.spectrum();
    if !spec.is_null() {
        let u0 = 1e-8 * x;
        let near = (spec.moment(1.0, 0.0, u0) + u0 * spec.tail(u0)) / s;
        let piv = pivots_with(&[x], spec.breakpoints());
        let far = integrate_log(|h| spec.tail(h) / sigma_hat.evaluate(x + h), u0, f64::INFINITY, &piv);
        acc += x * (near + far);
    }
    Ok(acc)
}

/// F(x) = ∫₀^∞ Φ(z)Ŵ(z)/z e^{−zx} dz
pub fn f_value(phi: &PhiPart, sigma_hat: &SigmaPart, x: f64) -> Result<f64> {
    Ok(x_f(phi, sigma_hat, x)? / x)
}

/// F(x) by direct quadrature against the scale function.
pub fn f_value_direct(phi: &PhiPart, sigma_hat: &SigmaPart, x: f64) -> Result<f64> {
    require_competition(sigma_hat)?;
    let sf = ScaleFunction::new(sigma_hat)?;
    let mut err = None;
    let v = integrate_log(
        |z| match sf.value(z) {
            Ok(w) => phi.evaluate(z) * w / z * (-z * x).exp(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        1e-12 / x,
        60.0 / x,
        &[1.0 / x],
    );
    match err {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

/// x·G(x) through the tail form
/// `x[aΦ̂′/Φ̂² + d/Φ̂ + ∫₀^∞ η̄(u)(1/Φ̂(x) − 1/Φ̂(x+u)) du]`.
pub fn x_g(sigma: &SigmaPart, phi_hat: &PhiPart, x: f64) -> Result<f64> {
    let p = phi_hat.evaluate(x);
    if !(p > 0.0) {
        return Err(BoundaryError::CooperationTooWeak(format!("Φ̂({x}) = 0")));
    }
    let dp = phi_hat.derivative(x);
    let mut acc = sigma.a * dp / (p * p) + sigma.d / p;
    let spec = sigma.spectrum();
    if !spec.is_null() {
        let u0 = 1e-6 * x;
        let near = dp / (p * p) * 0.5 * (spec.moment(2.0, 0.0, u0) + u0 * u0 * spec.tail(u0));
        let piv = pivots_with(&[x, 1.0], spec.breakpoints());
        let far = integrate_log(
            |u| spec.tail(u) * (1.0 / p - 1.0 / phi_hat.evaluate(x + u)),
            u0,
            f64::INFINITY,
            &piv,
        );
        acc += near + far;
    }
    Ok(x * acc)
}

/// G(x) = ∫₀^∞ e^{−xz} Σ(z)/z Û(dz)
pub fn g_value(sigma: &SigmaPart, phi_hat: &PhiPart, x: f64) -> Result<f64> {
    Ok(x_g(sigma, phi_hat, x)? / x)
}

/// G(x) by direct quadrature against the potential density.
pub fn g_value_direct(sigma: &SigmaPart, phi_hat: &PhiPart, x: f64) -> Result<f64> {
    let pd = PotentialDensity::new(phi_hat)?;
    let mut err = None;
    let v = integrate_log(
        |z| match pd.value(z) {
            Ok(u) => sigma.evaluate(z) / z * u * (-z * x).exp(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        1e-14 / x,
        60.0 / x,
        &[1.0 / x],
    );
    match err {
        Some(e) => Err(e.into()),
        None => Ok(v),
    }
}

fn theta_closed(phi: &PhiPart, sigma_hat: &SigmaPart) -> Option<LimitEstimate> {
    if phi.lambda > 0.0 {
        let v = if sigma_hat.a > 0.0 { phi.lambda / sigma_hat.a } else { f64::INFINITY };
        return Some(LimitEstimate::closed(v, "killing against quadratic competition"));
    }
    if sigma_hat.a > 0.0 {
        return Some(LimitEstimate::closed(0.0, "quadratic competition without killing"));
    }
    if let (Some((c, alpha)), Some((ch, q))) = (phi.pure_power(), sigma_hat.pure_power()) {
        if alpha > 0.0 && alpha < 1.0 {
            let gap = q - 2.0 + alpha;
            let v = if gap.abs() < 1e-12 {
                c / (ch * gamma(2.0 - alpha))
            } else if gap < 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            return Some(LimitEstimate::closed(v, "stable pair"));
        }
    }
    if phi.derivative_at_zero().is_finite() {
        return Some(LimitEstimate::closed(0.0, "finite mean cooperation"));
    }
    None
}

/// θ̄, θ̲: limits of xF(x) as x → ∞.
pub fn estimate_theta(phi: &PhiPart, sigma_hat: &SigmaPart, cfg: &GridConfig) -> Result<LimitEstimate> {
    require_competition(sigma_hat)?;
    let [lo, hi] = cfg.theta_range;
    let grid = geometric_grid(lo, hi, cfg.points_per_decade);
    if cfg.closed_form {
        if let Some(e) = theta_closed(phi, sigma_hat) {
            return Ok(e);
        }
        // Σ̂ is regularly varying at ∞ with index q ∈ [1, 2)
        let q = sigma_hat.index_at_infinity();
        let k = 1.0 / gamma(q);
        let e = grid_estimate(
            grid,
            |x| Ok(phi.evaluate(1.0 / x) * x * x / sigma_hat.evaluate(x)),
            cfg.points_per_decade,
            cfg,
            "regular variation",
        )?;
        return Ok(e.scaled(k));
    }
    grid_estimate(grid, |x| x_f(phi, sigma_hat, x), cfg.points_per_decade, cfg, "grid of xF")
}

/// sup of xΦ̂′(x)/Φ̂(x)² near 0 is finite (decided on the last two decades).
fn bounded_near_zero_ratio(phi_hat: &PhiPart, cfg: &GridConfig) -> bool {
    let lo = cfg.rho_range[0];
    let r = |x: f64| {
        let p = phi_hat.evaluate(x);
        x * phi_hat.derivative(x) / (p * p)
    };
    let n = cfg.points_per_decade;
    let last = geometric_grid(lo * 10.0, lo, n);
    let prev = geometric_grid(lo * 100.0, lo * 10.0, n);
    let mx = |g: &[f64]| g.iter().map(|&x| r(x)).fold(0.0f64, f64::max);
    let (a, b) = (mx(&last), mx(&prev));
    a.is_finite() && a <= b * (1.0 + cfg.agree_tol)
}

fn rho_closed(sigma: &SigmaPart, phi_hat: &PhiPart, cfg: &GridConfig) -> Option<LimitEstimate> {
    if phi_hat.lambda > 0.0 {
        return Some(LimitEstimate::closed(0.0, "killing cooperation"));
    }
    if sigma.is_zero() {
        return Some(LimitEstimate::closed(0.0, "no competition"));
    }
    if let (Some((cs, q)), Some((c, alpha))) = (sigma.pure_power(), phi_hat.pure_power()) {
        if alpha > 0.0 && alpha < 1.0 && q > 1.0 {
            let gap = q + alpha - 2.0;
            let v = if gap.abs() < 1e-12 {
                cs / (c * gamma(alpha))
            } else if gap < 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            return Some(LimitEstimate::closed(v, "stable pair"));
        }
    }
    if bounded_near_zero_ratio(phi_hat, cfg) {
        return Some(LimitEstimate::closed(0.0, "bounded xΦ̂′/Φ̂² near 0"));
    }
    None
}

/// ϱ̄, ϱ̲: limits of xG(x) as x → 0.
pub fn estimate_rho(sigma: &SigmaPart, phi_hat: &PhiPart, cfg: &GridConfig) -> Result<LimitEstimate> {
    require_cooperation(phi_hat)?;
    if cfg.closed_form {
        if let Some(e) = rho_closed(sigma, phi_hat, cfg) {
            return Ok(e);
        }
        if phi_hat.beta == 0.0 && phi_hat.spectrum().is_full_range_power() {
            let alpha = phi_hat.spectrum().exponent_at_infinity();
            let [lo, hi] = cfg.theta_range;
            let e = grid_estimate(
                geometric_grid(lo, hi, cfg.points_per_decade),
                |z| Ok(sigma.evaluate(z) / (z * z * phi_hat.evaluate(1.0 / z))),
                cfg.points_per_decade,
                cfg,
                "regular variation",
            )?;
            return Ok(e.scaled(1.0 / gamma(alpha)));
        }
    }
    let [lo, hi] = cfg.rho_range;
    grid_estimate(
        geometric_grid(hi, lo, cfg.points_per_decade),
        |x| x_g(sigma, phi_hat, x),
        cfg.points_per_decade,
        cfg,
        "grid of xG",
    )
}

/// ξ̄, ξ̲: limits of ℓ(z)/L̂(1/z) as z → 0 on the configured range at 0.
pub fn estimate_xi<L, M>(ell: L, lhat: M, cfg: &GridConfig) -> Result<LimitEstimate>
where
    L: Fn(f64) -> f64 + Sync,
    M: Fn(f64) -> f64 + Sync,
{
    let [lo, hi] = cfg.rho_range;
    let ratio = |z: f64| {
        let v = ell(z) / lhat(1.0 / z);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(BoundaryError::NotRegularlyVarying(format!("slowly varying ratio undefined at z = {z}")))
        }
    };
    grid_estimate(geometric_grid(hi, lo, cfg.points_per_decade), ratio, cfg.points_per_decade, cfg, "ξ grid")
}

/// ξ̄, ξ̲ with both factors given in the variable t = ln(1/z), so that very
/// slow oscillations can be followed far beyond floating-point range in z.
pub fn estimate_xi_log<L, M>(ell_t: L, lhat_t: M, cfg: &GridConfig) -> Result<LimitEstimate>
where
    L: Fn(f64) -> f64 + Sync,
    M: Fn(f64) -> f64 + Sync,
{
    let [lo, hi] = cfg.xi_log_range;
    let ratio = |t: f64| {
        let v = ell_t(t) / lhat_t(t);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(BoundaryError::NotRegularlyVarying(format!("slowly varying ratio undefined at t = {t}")))
        }
    };
    let window = cfg.points_per_decade * cfg.xi_log_window_decades;
    grid_estimate(geometric_grid(lo, hi, cfg.points_per_decade), ratio, window, cfg, "ξ log grid")
}

/// ξ for Φ(z) = z^α ℓ(z) and Σ̂(x) = x^{2−α} L̂(x): the ratio Φ(z)/(z²Σ̂(1/z)).
pub fn xi_of_pair(phi: &PhiPart, sigma_hat: &SigmaPart, cfg: &GridConfig) -> Result<LimitEstimate> {
    estimate_xi(|z| phi.evaluate(z) / (z * z), |x| sigma_hat.evaluate(x), cfg)
}

/// Test functions accepted by [`generator_apply`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction {
    /// f built from the competition part of Ψ̂
    F,
    /// g built from the cooperation part of Ψ̂
    G,
    /// x ↦ e^{−xy}
    Exp(f64),
}

/// 𝒳h(x) = x𝓛^Ψ h(x) − Ψ̂(x)h′(x)
pub fn generator_apply(psi: &Mechanism, psi_hat: &Mechanism, h: TestFunction, x: f64) -> Result<f64> {
    if let TestFunction::Exp(y) = h {
        return Ok((x * psi.evaluate(y) + y * psi_hat.evaluate(x)) * (-x * y).exp());
    }
    let dh = psi_hat.decomposition();
    let (d1, d2, at_inf, inc): (f64, f64, f64, Box<dyn Fn(f64) -> f64 + Sync + '_>) = match h {
        TestFunction::F => {
            let sh = dh.sigma.clone();
            require_competition(&sh)?;
            let s = sh.evaluate(x);
            let f = lyapunov_f(&sh, x)?;
            (-1.0 / s, sh.derivative(x) / (s * s), -f, Box::new(move |u| f_increment(&sh, x, u)))
        }
        TestFunction::G => {
            let ph = dh.phi.clone();
            require_cooperation(&ph)?;
            let p = ph.evaluate(x);
            (1.0 / p, -ph.derivative(x) / (p * p), f64::INFINITY, Box::new(move |u| g_increment(&ph, x, u)))
        }
        TestFunction::Exp(_) => unreachable!(),
    };
    let d = psi.decomposition();
    let (sig, phi) = (&d.sigma, &d.phi);
    let u0 = 1e-4 * x;
    let mut l = sig.a * d2 - sig.d * d1 + phi.beta * d1;
    let es = sig.spectrum();
    if !es.is_null() {
        let piv = pivots_with(&[x], es.breakpoints());
        l += 0.5 * d2 * es.moment(2.0, 0.0, u0);
        l += es.integrate_against(|u| inc(u) - u * d1, u0, f64::INFINITY, &piv);
    }
    let ns = phi.spectrum();
    if !ns.is_null() {
        let piv = pivots_with(&[x], ns.breakpoints());
        l += d1 * ns.moment(1.0, 0.0, u0) + 0.5 * d2 * ns.moment(2.0, 0.0, u0);
        l += ns.integrate_against(&inc, u0, f64::INFINITY, &piv);
    }
    if phi.lambda > 0.0 {
        if !at_inf.is_finite() {
            return Err(BoundaryError::DivergentIntegrand("killing term with g(∞) = ∞".into()));
        }
        l += phi.lambda * at_inf;
    }
    let v = x * l - psi_hat.evaluate(x) * d1;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BoundaryError::DivergentIntegrand(format!("generator at x = {x}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::JumpMeasure;

    fn stable_phi(c: f64, alpha: f64) -> PhiPart {
        Mechanism::power_sum(&[(-c, alpha)]).unwrap().decomposition().phi
    }

    fn stable_sigma(c: f64, q: f64) -> SigmaPart {
        Mechanism::power_sum(&[(c, q)]).unwrap().decomposition().sigma
    }

    #[test]
    fn lyapunov_examples() {
        assert!((lyapunov_f(&stable_sigma(1.0, 2.0), 2.0).unwrap() - 0.5).abs() < 1e-14);
        assert!((lyapunov_f(&stable_sigma(1.0, 1.5), 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((lyapunov_g(&stable_phi(1.0, 0.5), 4.0).unwrap() - 4.0).abs() < 1e-12);
        let s = SigmaPart::new(1.0, 1.0, JumpMeasure::Null).unwrap();
        // ∫ₓ^∞ du/(u²+u) = ln(1 + 1/x)
        assert!((lyapunov_f(&s, 1.0).unwrap() - 2f64.ln()).abs() < 1e-9);
        assert!(lyapunov_f(&SigmaPart::new(0.0, 1.0, JumpMeasure::Null).unwrap(), 1.0).is_err());
    }

    #[test]
    fn matched_stable_x_f_is_constant() {
        let phi = stable_phi(1.0, 0.5);
        let sh = stable_sigma(1.0, 1.5);
        for x in [0.1, 1.0, 10.0, 1e4] {
            let v = x_f(&phi, &sh, x).unwrap();
            assert!((v - 1.0 / gamma(1.5)).abs() < 1e-7, "{x} {v}");
        }
    }

    #[test]
    fn tail_form_matches_direct_quadrature() {
        let phi = PhiPart::new(1.0, JumpMeasure::Null, 1.0).unwrap();
        let sh = SigmaPart::new(1.0, 1.0, JumpMeasure::Null).unwrap();
        for x in [0.5, 2.0, 10.0] {
            let a = f_value(&phi, &sh, x).unwrap();
            let b = f_value_direct(&phi, &sh, x).unwrap();
            assert!(((a - b) / a).abs() < 1e-5, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn drift_cooperation_g() {
        let sig = stable_sigma(1.0, 2.0);
        let ph = PhiPart::new(2.0, JumpMeasure::Null, 0.0).unwrap();
        for x in [0.1, 1.0] {
            let a = g_value(&sig, &ph, x).unwrap();
            assert!((a - 0.5 / (x * x)).abs() < 1e-10 * a);
            let b = g_value_direct(&sig, &ph, x).unwrap();
            assert!(((a - b) / a).abs() < 1e-5);
        }
    }

    #[test]
    fn killing_theta() {
        let phi = PhiPart::new(0.0, JumpMeasure::Null, 2.0).unwrap();
        let e = estimate_theta(&phi, &stable_sigma(1.0, 2.0), &GridConfig::default()).unwrap();
        assert_eq!(e.limsup_est, 2.0);
        let g = estimate_theta(&phi, &stable_sigma(1.0, 2.0), &GridConfig::grid_only()).unwrap();
        assert!((g.liminf_est - 2.0).abs() < 0.04 && g.converged);
        let g = estimate_theta(&phi, &stable_sigma(1.0, 1.5), &GridConfig::grid_only()).unwrap();
        assert!(g.liminf_est.is_infinite());
    }

    #[test]
    fn exp_generator_plug_in() {
        let p = Mechanism::power_sum(&[(1.0, 2.0)]).unwrap();
        let v = generator_apply(&p, &p, TestFunction::Exp(1.0), 1.0).unwrap();
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-14, "{v}");
    }

    #[test]
    fn oscillating_xi() {
        let cfg = GridConfig::default();
        let e = estimate_xi_log(|t: f64| t.ln().sin().exp(), |_| 1.0, &cfg).unwrap();
        assert!((e.liminf_est - (-1f64).exp()).abs() < 1e-3);
        assert!((e.limsup_est - 1f64.exp()).abs() < 1e-3);
        let e = estimate_xi_log(|t: f64| t, |_| 1.0, &cfg).unwrap();
        assert!(e.limsup_est.is_infinite());
    }
}
