//! Boundary verdicts for 0 and ∞ from integral tests and the parameters θ, ϱ, ξ.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::boundary_params::{estimate_rho, estimate_theta, xi_of_pair, GridConfig, LimitEstimate};
use crate::mechanisms::{h1, h2, ji, Mechanism, PhiPart, SigmaPart, Trichotomy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Zero,
    Infinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Entrance,
    Exit,
    Regular,
    Natural,
    Indeterminate,
}

impl Verdict {
    fn from_parts(accessible: bool, absorbing: bool) -> Verdict {
        match (accessible, absorbing) {
            (true, true) => Verdict::Exit,
            (true, false) => Verdict::Regular,
            (false, false) => Verdict::Entrance,
            (false, true) => Verdict::Natural,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    Yes,
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConditionValue {
    Integral(Trichotomy),
    Holds(bool),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub grid: GridConfig,
    /// parameters within `tau` of 1 (relative) decide nothing
    pub tau: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { grid: GridConfig::default(), tau: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    pub boundary: Boundary,
    pub verdict: Verdict,
    pub accessible: Option<bool>,
    pub absorbing: Option<bool>,
    /// H1 and Ĥ1 record ∫₀ du/Φ, H2 and Ĥ2 record ∫^∞ du/Σ
    pub conditions: BTreeMap<String, ConditionValue>,
    pub theta: Option<LimitEstimate>,
    pub rho: Option<LimitEstimate>,
    pub regular_for_itself: Flag,
    pub non_sticky: Flag,
    /// rules that fired
    pub rationale: Vec<String>,
    /// hypotheses or estimates that blocked a conclusion
    pub missing: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagPair {
    pub regular_for_itself: Flag,
    pub non_sticky: Flag,
}

impl Default for FlagPair {
    fn default() -> Self {
        FlagPair { regular_for_itself: Flag::Unknown, non_sticky: Flag::Unknown }
    }
}

/// Flags for ∞ of the extension of CBDI(Ψ, Ψ̂) and for 0 of the extension of CBDI(Ψ̂, Ψ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityFlags {
    pub infinity: FlagPair,
    pub dual_zero: FlagPair,
    pub applies: bool,
}

/// Collects one boolean from several rules and notices disagreement.
#[derive(Default)]
struct Decision {
    value: Option<bool>,
    conflict: bool,
}

impl Decision {
    fn set(&mut self, v: bool, why: &str, rationale: &mut Vec<String>) {
        match self.value {
            Some(old) if old != v => self.conflict = true,
            Some(_) => {}
            None => self.value = Some(v),
        }
        rationale.push(why.to_string());
    }

    fn get(&self) -> Option<bool> {
        if self.conflict {
            None
        } else {
            self.value
        }
    }
}

struct Ctx {
    phi: PhiPart,
    sigma: SigmaPart,
    phi_hat: PhiPart,
    sigma_hat: SigmaPart,
    h1: Trichotomy,
    h2: Trichotomy,
    h1_hat: Trichotomy,
    h2_hat: Trichotomy,
    ji: Option<Trichotomy>,
}

impl Ctx {
    fn new(psi: &Mechanism, psi_hat: &Mechanism) -> Ctx {
        let d = psi.decomposition();
        let dh = psi_hat.decomposition();
        Ctx {
            h1: h1(&d.phi),
            h2: h2(&d.sigma),
            h1_hat: h1(&dh.phi),
            h2_hat: h2(&dh.sigma),
            ji: ji(psi, psi_hat).ok(),
            phi: d.phi,
            sigma: d.sigma,
            phi_hat: dh.phi,
            sigma_hat: dh.sigma,
        }
    }

    fn conditions(&self) -> BTreeMap<String, ConditionValue> {
        let mut m = BTreeMap::new();
        m.insert("H1".into(), ConditionValue::Integral(self.h1.clone()));
        m.insert("H2".into(), ConditionValue::Integral(self.h2.clone()));
        m.insert("Ĥ1".into(), ConditionValue::Integral(self.h1_hat.clone()));
        m.insert("Ĥ2".into(), ConditionValue::Integral(self.h2_hat.clone()));
        m.insert("a=0".into(), ConditionValue::Holds(self.sigma.a == 0.0));
        m.insert("â=0".into(), ConditionValue::Holds(self.sigma_hat.a == 0.0));
        if let Some(j) = &self.ji {
            m.insert("JI".into(), ConditionValue::Integral(j.clone()));
        }
        m
    }
}

/// integral = ∞, i.e. the hypothesis named after it holds
fn holds(t: &Trichotomy) -> bool {
    *t == Trichotomy::Infinite
}

fn fails(t: &Trichotomy) -> bool {
    *t == Trichotomy::Finite
}

fn need(ok: bool, name: &str, missing: &mut Vec<String>) -> bool {
    if !ok {
        missing.push(name.to_string());
    }
    ok
}

fn finite_positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn finish(
    boundary: Boundary,
    ctx: &Ctx,
    acc: Decision,
    abs: Decision,
    theta: Option<LimitEstimate>,
    rho: Option<LimitEstimate>,
    flags: FlagPair,
    rationale: Vec<String>,
    mut missing: Vec<String>,
) -> BoundaryReport {
    if acc.conflict {
        missing.push("accessibility rules disagree".into());
    }
    if abs.conflict {
        missing.push("absorption rules disagree".into());
    }
    let (accessible, absorbing) = (acc.get(), abs.get());
    if accessible.is_none() {
        missing.push("accessibility undecided".into());
    }
    if absorbing.is_none() {
        missing.push("absorption undecided".into());
    }
    let verdict = match (accessible, absorbing) {
        (Some(a), Some(b)) => Verdict::from_parts(a, b),
        _ => Verdict::Indeterminate,
    };
    BoundaryReport {
        boundary,
        verdict,
        accessible,
        absorbing,
        conditions: ctx.conditions(),
        theta,
        rho,
        regular_for_itself: flags.regular_for_itself,
        non_sticky: flags.non_sticky,
        rationale,
        missing,
    }
}

/// ∞ for the minimal CBDI(Ψ, Ψ̂) (accessibility) and its extension at ∞ (absorption).
pub fn classify_infinity(psi: &Mechanism, psi_hat: &Mechanism, cfg: &ClassifierConfig) -> BoundaryReport {
    let ctx = Ctx::new(psi, psi_hat);
    let tau = cfg.tau;
    let (mut rationale, mut missing) = (Vec::new(), Vec::new());
    let (mut acc, mut abs) = (Decision::default(), Decision::default());

    if ctx.phi.lambda > 0.0 {
        acc.set(true, "killing sends the process to ∞", &mut rationale);
    }
    if holds(&ctx.h1) {
        acc.set(false, "H1: no explosion", &mut rationale);
    }
    let dphi_hat = ctx.phi_hat.derivative_at_zero();
    if finite_positive(dphi_hat) && !ctx.sigma_hat.is_zero() && ctx.ji == Some(Trichotomy::Finite) {
        acc.set(false, "JI: ∞ entrance", &mut rationale);
        abs.set(false, "JI: ∞ entrance", &mut rationale);
    }
    if finite_positive(dphi_hat) && ctx.phi.derivative_at_zero().is_finite() && fails(&ctx.h2_hat) {
        abs.set(false, "finite means with ¬Ĥ2: ∞ entrance", &mut rationale);
    }

    let mut theta = None;
    let mut m = Vec::new();
    if need(fails(&ctx.h2_hat), "¬Ĥ2 for θ", &mut m) & need(holds(&ctx.h1_hat), "Ĥ1 for θ", &mut m) {
        match estimate_theta(&ctx.phi, &ctx.sigma_hat, &cfg.grid) {
            Ok(e) => {
                if e.surely_below(1.0, tau) {
                    abs.set(false, "θ̄ < 1: ∞ non-absorbing", &mut rationale);
                } else if e.surely_above(1.0, tau) {
                    abs.set(true, "θ̲ > 1: ∞ absorbing", &mut rationale);
                } else {
                    m.push("θ within tolerance of 1".into());
                }
                theta = Some(e);
            }
            Err(err) => m.push(format!("θ: {err}")),
        }
    }
    if holds(&ctx.h2_hat) && holds(&ctx.h1_hat) {
        abs.set(true, "Ĥ1 and Ĥ2: dual cannot reach 0", &mut rationale);
    }
    if abs.value.is_none() {
        missing.extend(m);
    }

    let mut rho = None;
    let mut m = Vec::new();
    let hyp = need(holds(&ctx.h1_hat), "Ĥ1 for ϱ", &mut m)
        & need(ctx.sigma_hat.a == 0.0, "â = 0 for ϱ", &mut m)
        & need(fails(&ctx.h2_hat), "¬Ĥ2 for ϱ", &mut m)
        & need(fails(&ctx.h1), "¬H1 for ϱ", &mut m);
    if hyp {
        match estimate_rho(&ctx.sigma_hat, &ctx.phi, &cfg.grid) {
            Ok(e) => {
                if e.surely_below(1.0, tau) {
                    acc.set(true, "ϱ̄ < 1: ∞ accessible", &mut rationale);
                } else if e.surely_above(1.0, tau) {
                    acc.set(false, "ϱ̲ > 1: ∞ inaccessible", &mut rationale);
                } else {
                    m.push("ϱ within tolerance of 1".into());
                }
                rho = Some(e);
            }
            Err(err) => m.push(format!("ϱ: {err}")),
        }
    }
    if acc.value.is_none() {
        missing.extend(m);
    }

    let flags = regularity_flags(psi, psi_hat, cfg).infinity;
    finish(Boundary::Infinity, &ctx, acc, abs, theta, rho, flags, rationale, missing)
}

/// 0 for the minimal CBDI(Ψ, Ψ̂) (accessibility) and its extension at 0 (absorption).
pub fn classify_zero(psi: &Mechanism, psi_hat: &Mechanism, cfg: &ClassifierConfig) -> BoundaryReport {
    let ctx = Ctx::new(psi, psi_hat);
    let tau = cfg.tau;
    let (mut rationale, mut missing) = (Vec::new(), Vec::new());
    let (mut acc, mut abs) = (Decision::default(), Decision::default());

    if holds(&ctx.h2) {
        acc.set(false, "H2: no extinction", &mut rationale);
    }
    let mut theta = None;
    let mut m = Vec::new();
    if need(fails(&ctx.h2), "¬H2 for θ", &mut m) & need(holds(&ctx.h1), "H1 for θ", &mut m) {
        match estimate_theta(&ctx.phi_hat, &ctx.sigma, &cfg.grid) {
            Ok(e) => {
                if e.surely_below(1.0, tau) {
                    acc.set(true, "θ̄ < 1: 0 accessible", &mut rationale);
                } else if e.surely_above(1.0, tau) {
                    acc.set(false, "θ̲ > 1: 0 inaccessible", &mut rationale);
                    abs.set(false, "θ̲ > 1: 0 entrance", &mut rationale);
                } else {
                    m.push("θ within tolerance of 1".into());
                }
                theta = Some(e);
            }
            Err(err) => m.push(format!("θ: {err}")),
        }
        if ctx.sigma.a == 0.0 && ctx.phi_hat.lambda > 0.0 {
            acc.set(false, "killing cooperation without diffusion: 0 entrance", &mut rationale);
            abs.set(false, "killing cooperation without diffusion: 0 entrance", &mut rationale);
        }
    }
    if acc.value.is_none() {
        missing.extend(m);
    }

    if holds(&ctx.h1_hat) {
        abs.set(true, "Ĥ1: dual cannot explode", &mut rationale);
    }
    let mut rho = None;
    let mut m = Vec::new();
    let hyp = need(holds(&ctx.h1), "H1 for ϱ", &mut m)
        & need(ctx.sigma.a == 0.0, "a = 0 for ϱ", &mut m)
        & need(fails(&ctx.h2), "¬H2 for ϱ", &mut m)
        & need(fails(&ctx.h1_hat), "¬Ĥ1 for ϱ", &mut m);
    if hyp {
        match estimate_rho(&ctx.sigma, &ctx.phi_hat, &cfg.grid) {
            Ok(e) => {
                if e.surely_below(1.0, tau) {
                    abs.set(false, "ϱ̄ < 1: 0 non-absorbing", &mut rationale);
                } else if e.surely_above(1.0, tau) {
                    abs.set(true, "ϱ̲ > 1: 0 absorbing", &mut rationale);
                } else {
                    m.push("ϱ within tolerance of 1".into());
                }
                rho = Some(e);
            }
            Err(err) => m.push(format!("ϱ: {err}")),
        }
    }
    if abs.value.is_none() {
        missing.extend(m);
    }

    let flags = regularity_flags(psi_hat, psi, cfg).dual_zero;
    finish(Boundary::Zero, &ctx, acc, abs, theta, rho, flags, rationale, missing)
}

/// Index α of Φ(y) = y^α ℓ(y) at 0 when it lies in (0, 1).
fn index_at_zero(phi: &PhiPart) -> Option<f64> {
    if phi.lambda > 0.0 || phi.is_zero() {
        return None;
    }
    let s = phi.spectrum().exponent_at_infinity();
    (s > 0.0 && s < 1.0).then_some(s)
}

/// Regular-for-itself and non-sticky flags for ∞ of CBDI(Ψ, Ψ̂) and 0 of CBDI(Ψ̂, Ψ)
/// in the regularly varying regime with 1/Γ(α) < ξ̲ ≤ ξ̄ < Γ(2−α).
pub fn regularity_flags(psi: &Mechanism, psi_hat: &Mechanism, cfg: &ClassifierConfig) -> RegularityFlags {
    let unknown = RegularityFlags { infinity: FlagPair::default(), dual_zero: FlagPair::default(), applies: false };
    let d = psi.decomposition();
    let dh = psi_hat.decomposition();
    let Some(alpha) = index_at_zero(&d.phi) else {
        return unknown;
    };
    if dh.sigma.a > 0.0 || (dh.sigma.index_at_infinity() - (2.0 - alpha)).abs() > 1e-12 {
        return unknown;
    }
    let Ok(xi) = xi_of_pair(&d.phi, &dh.sigma, &cfg.grid) else {
        return unknown;
    };
    if !(xi.surely_above(1.0 / gamma(alpha), cfg.tau) && xi.surely_below(gamma(2.0 - alpha), cfg.tau)) {
        return unknown;
    }
    let mut out = RegularityFlags { applies: true, ..unknown };
    if d.sigma.is_zero() {
        out.infinity.regular_for_itself = Flag::Yes;
        out.dual_zero.non_sticky = Flag::Yes;
    }
    if dh.phi.is_zero() {
        out.dual_zero.regular_for_itself = Flag::Yes;
        out.infinity.non_sticky = Flag::Yes;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(c: f64, alpha: f64, ch: f64) -> (Mechanism, Mechanism) {
        (
            Mechanism::power_sum(&[(-c, alpha)]).unwrap(),
            Mechanism::power_sum(&[(ch, 2.0 - alpha)]).unwrap(),
        )
    }

    #[test]
    fn stable_regimes_at_infinity() {
        let cfg = ClassifierConfig::default();
        for (c, want) in [(0.3, Verdict::Entrance), (0.7, Verdict::Regular), (1.2, Verdict::Exit)] {
            let (p, h) = pair(c, 0.5, 1.0);
            assert_eq!(classify_infinity(&p, &h, &cfg).verdict, want, "c = {c}");
        }
    }

    #[test]
    fn killing_with_quadratic_competition_is_exit() {
        let p = Mechanism::power_sum(&[(-2.0, 0.0)]).unwrap();
        let h = Mechanism::power_sum(&[(1.0, 2.0)]).unwrap();
        let r = classify_infinity(&p, &h, &ClassifierConfig::default());
        assert_eq!(r.verdict, Verdict::Exit);
        assert_eq!(r.theta.unwrap().limsup_est, 2.0);
    }

    #[test]
    fn natural_boundaries() {
        let cfg = ClassifierConfig::default();
        let p = Mechanism::power_sum(&[(-1.0, 1.0)]).unwrap();
        let h = Mechanism::power_sum(&[(1.0, 1.0)]).unwrap();
        assert_eq!(classify_infinity(&p, &h, &cfg).verdict, Verdict::Natural);
        // Ĥ1 (Φ̂ ≡ 0) and H2 (Σ linear)
        assert_eq!(classify_zero(&h, &h, &cfg).verdict, Verdict::Natural);
    }

    #[test]
    fn zero_entrance_cases() {
        let cfg = ClassifierConfig::default();
        let (p, h) = pair(1.0, 0.5, 1.0);
        let r = classify_zero(&h, &p, &cfg);
        assert_eq!(r.verdict, Verdict::Entrance);
        let killing = Mechanism::power_sum(&[(-1.0, 0.0)]).unwrap();
        let sigma = Mechanism::power_sum(&[(1.0, 1.5)]).unwrap();
        assert_eq!(classify_zero(&sigma, &killing, &cfg).verdict, Verdict::Entrance);
    }

    #[test]
    fn regularity_flags_pure_pair() {
        let (p, h) = pair(0.7, 0.5, 1.0);
        let f = regularity_flags(&p, &h, &ClassifierConfig::default());
        assert!(f.applies);
        for fp in [f.infinity, f.dual_zero] {
            assert_eq!(fp.regular_for_itself, Flag::Yes);
            assert_eq!(fp.non_sticky, Flag::Yes);
        }
        let (p, h) = pair(1.2, 0.5, 1.0);
        assert!(!regularity_flags(&p, &h, &ClassifierConfig::default()).applies);
    }

    #[test]
    fn diffusive_competition_blocks_accessibility() {
        let p = Mechanism::power_sum(&[(-0.7, 0.5)]).unwrap();
        let h = Mechanism::power_sum(&[(1.0, 1.5), (1.0, 2.0)]).unwrap();
        let r = classify_infinity(&p, &h, &ClassifierConfig::default());
        assert_eq!(r.verdict, Verdict::Indeterminate);
        assert!(r.missing.iter().any(|m| m.contains("â = 0")));
    }
}
