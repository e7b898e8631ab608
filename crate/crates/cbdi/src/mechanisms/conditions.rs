//! Integral tests decided by endpoint exponents.

use serde::{Deserialize, Serialize};

use super::{Mechanism, MechanismClass, MechanismError, PhiPart, SigmaPart};

/// Whether an improper integral is finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trichotomy {
    Finite,
    Infinite,
    Inconclusive(String),
}

impl Trichotomy {
    pub fn is_finite(&self) -> Option<bool> {
        match self {
            Trichotomy::Finite => Some(true),
            Trichotomy::Infinite => Some(false),
            Trichotomy::Inconclusive(_) => None,
        }
    }

    fn from_exponent(excess: f64, what: &str) -> Trichotomy {
        // integrand ~ u^{-1-excess} at the singular end
        if excess > 1e-12 {
            Trichotomy::Finite
        } else if excess < -1e-12 {
            Trichotomy::Infinite
        } else {
            Trichotomy::Inconclusive(format!("{what}: critical exponent, slowly varying corrections decide"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionKind {
    /// ∫₀¹ du/Φ(u)
    H1,
    /// ∫₁^∞ du/Σ(u)
    H2,
    /// ∫^∞ du/Ψ(u)
    Grey,
    /// ∫₀ du/(−Ψ(u))
    Dynkin,
    /// ∫^∞ (1 + u π̄(u))/Ψ̂(u) du
    JI,
    /// ∫₀¹ W(z)/z dz for the scale function of Σ
    ScaleNearZero,
    /// ∫₁^∞ U(dz)/z for the potential measure of Φ
    PotentialAtInfinity,
}

/// ∫₀¹ du/Φ(u)
pub fn h1(phi: &PhiPart) -> Trichotomy {
    if phi.is_zero() {
        return Trichotomy::Infinite;
    }
    if phi.lambda > 0.0 {
        return Trichotomy::Finite;
    }
    if phi.derivative_at_zero().is_finite() {
        return Trichotomy::Infinite;
    }
    // Φ(u) ~ u^s near 0 where s is the tail exponent of ν at ∞
    let s = phi.spectrum().exponent_at_infinity();
    Trichotomy::from_exponent(1.0 - s, "∫₀ du/Φ")
}

/// ∫₁^∞ du/Σ(u)
pub fn h2(sigma: &SigmaPart) -> Trichotomy {
    if sigma.is_zero() {
        return Trichotomy::Infinite;
    }
    if sigma.a > 0.0 {
        return Trichotomy::Finite;
    }
    let p = sigma.spectrum().exponent_at_zero();
    if sigma.spectrum().log_exponent_at_zero().is_some() && p <= 1.0 {
        return Trichotomy::Infinite;
    }
    Trichotomy::from_exponent(p - 1.0, "∫^∞ du/Σ")
}

pub fn grey(psi: &Mechanism) -> Trichotomy {
    let (class, _) = psi.classify();
    if class == MechanismClass::Immortal {
        return Trichotomy::Infinite;
    }
    h2(&psi.decomposition().sigma)
}

pub fn dynkin(psi: &Mechanism) -> Trichotomy {
    let (_, rho) = psi.classify();
    if rho == 0.0 {
        return Trichotomy::Infinite;
    }
    h1(&psi.decomposition().phi)
}

/// ∫^∞ (1 + u π̄(u))/Ψ̂(u) du where π is the jump measure of `psi`.
pub fn ji(psi: &Mechanism, psi_hat: &Mechanism) -> Result<Trichotomy, MechanismError> {
    let sig = psi_hat.decomposition().sigma;
    if sig.is_zero() {
        return Err(MechanismError::DegenerateMechanism(
            "Ψ̂ has no competition part, the integral is ill-posed".into(),
        ));
    }
    if psi_hat.classify().0 == MechanismClass::Immortal {
        return Err(MechanismError::DegenerateMechanism("Ψ̂ is not eventually positive".into()));
    }
    let q = sig.index_at_infinity();
    if q <= 1.0 {
        return Ok(Trichotomy::Infinite);
    }
    let s = psi.spectrum().exponent_at_infinity();
    let num = (1.0 - s).max(0.0);
    Ok(Trichotomy::from_exponent(q - num - 1.0, "JI"))
}

/// Dispatches on `kind`. The hat mechanism is needed for [`ConditionKind::JI`].
pub fn integral_condition(
    kind: ConditionKind,
    psi: &Mechanism,
    psi_hat: Option<&Mechanism>,
) -> Result<Trichotomy, MechanismError> {
    let d = psi.decomposition();
    Ok(match kind {
        ConditionKind::H1 => h1(&d.phi),
        ConditionKind::H2 => h2(&d.sigma),
        ConditionKind::Grey => grey(psi),
        ConditionKind::Dynkin => dynkin(psi),
        ConditionKind::JI => {
            let hat = psi_hat.ok_or_else(|| MechanismError::DegenerateMechanism("JI needs Ψ̂".into()))?;
            ji(psi, hat)?
        }
        ConditionKind::ScaleNearZero => crate::potential_theory::scale_integral_near_zero(&d.sigma)?,
        ConditionKind::PotentialAtInfinity => crate::potential_theory::potential_integral_at_infinity(&d.phi)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::JumpMeasure;

    #[test]
    fn h2_examples() {
        let s = SigmaPart::new(1.0, 0.0, JumpMeasure::Null).unwrap();
        assert_eq!(h2(&s), Trichotomy::Finite);
        let s = SigmaPart::new(0.0, 2.0, JumpMeasure::Null).unwrap();
        assert_eq!(h2(&s), Trichotomy::Infinite);
        let s = SigmaPart::new(0.0, 0.0, JumpMeasure::stable(1.0, 1.0).restricted(0.0, 1.0)).unwrap();
        assert!(matches!(h2(&s), Trichotomy::Inconclusive(_)));
    }

    #[test]
    fn h1_examples() {
        let p = PhiPart::new(0.0, JumpMeasure::stable(1.0, 0.5), 0.0).unwrap();
        assert_eq!(h1(&p), Trichotomy::Finite);
        let p = PhiPart::new(1.0, JumpMeasure::Null, 0.0).unwrap();
        assert_eq!(h1(&p), Trichotomy::Infinite);
        assert_eq!(h1(&PhiPart::zero()), Trichotomy::Infinite);
    }

    #[test]
    fn grey_and_dynkin() {
        let feller = Mechanism::power_sum(&[(1.0, 2.0)]).unwrap();
        assert_eq!(grey(&feller), Trichotomy::Finite);
        assert_eq!(dynkin(&feller), Trichotomy::Infinite);
        let imm = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap();
        assert_eq!(grey(&imm), Trichotomy::Infinite);
        assert_eq!(dynkin(&imm), Trichotomy::Finite);
    }

    #[test]
    fn ji_examples() {
        let psi = Mechanism::power_sum(&[(-1.0, 0.5)]).unwrap();
        let hat = Mechanism::power_sum(&[(1.0, 2.0)]).unwrap();
        // (1 + u·u^{-1/2})/u² is integrable
        assert_eq!(ji(&psi, &hat).unwrap(), Trichotomy::Finite);
        let hat = Mechanism::power_sum(&[(1.0, 1.5)]).unwrap();
        assert!(matches!(ji(&psi, &hat).unwrap(), Trichotomy::Inconclusive(_)));
        assert!(ji(&psi, &Mechanism::zero()).is_err());
    }
}
