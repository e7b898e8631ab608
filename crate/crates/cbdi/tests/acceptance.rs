use std::process::ExitCode;
use std::time::{Duration, Instant};

use cbdi::boundary_params::{estimate_rho, estimate_theta, f_value, generator_apply, GridConfig, LimitEstimate, TestFunction};
use cbdi::classifier::{classify_infinity, ClassifierConfig, Verdict};
use cbdi::duality_lab::{duality_check, ode_flow, DualityConfig, DualityGrid};
use cbdi::potential_theory::{verify_potential_pair, verify_scale_pair, PotentialDensity, ScaleFunction};
use cbdi::simulator::{coupled_compare, hitting_statistics, mean_se, sample_states, CompareSpec, SimConfig};
use cbdi::{JumpMeasure, Mechanism, PhiPart, SigmaPart};
use statrs::function::gamma::gamma;

type Outcome = Result<String, String>;

fn power(terms: &[(f64, f64)]) -> Mechanism {
    Mechanism::power_sum(terms).expect("valid power sum")
}

fn sigma_of(terms: &[(f64, f64)]) -> SigmaPart {
    power(terms).decomposition().sigma
}

fn phi_of(terms: &[(f64, f64)]) -> PhiPart {
    power(terms).decomposition().phi
}

fn mid(e: &LimitEstimate) -> f64 {
    0.5 * (e.liminf_est + e.limsup_est)
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn laplace_pairs() -> Outcome {
    let xs = [0.1, 1.0, 10.0, 50.0];
    let mut worst: f64 = 0.0;
    for beta in [0.5, 1.0] {
        for c in [0.5, 1.0, 2.0] {
            let sf = ScaleFunction::new(&sigma_of(&[(c, 1.0 + beta)])).map_err(|e| e.to_string())?;
            worst = worst.max(verify_scale_pair(&sf, &xs));
        }
    }
    for alpha in [0.3, 0.5, 0.8] {
        for c in [0.5, 1.0, 2.0] {
            let pd = PotentialDensity::new(&phi_of(&[(-c, alpha)])).map_err(|e| e.to_string())?;
            worst = worst.max(verify_potential_pair(&pd, &xs));
        }
    }
    check(worst < 1e-6, format!("max |transform·integral − 1| = {worst:.2e}"))
}

fn stable_closed_forms() -> Outcome {
    let grid = GridConfig::grid_only();
    let mut worst: f64 = 0.0;
    for ratio in [0.3, 0.7, 1.0, 1.2] {
        let phi = phi_of(&[(-ratio, 0.5)]);
        let sigma_hat = sigma_of(&[(1.0, 1.5)]);
        let theta = estimate_theta(&phi, &sigma_hat, &grid).map_err(|e| e.to_string())?;
        let rho = estimate_rho(&sigma_hat, &phi, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(rel(mid(&theta), ratio / gamma(1.5)));
        worst = worst.max(rel(mid(&rho), 1.0 / (ratio * gamma(0.5))));
    }
    check(worst < 0.02, format!("max relative error of grid θ and ϱ = {worst:.2e}"))
}

fn phase_localization() -> Outcome {
    let cfg = ClassifierConfig { grid: GridConfig::grid_only(), tau: 1e-4 };
    let n = 64;
    let ratios: Vec<f64> = (0..n).map(|i| 0.3 + 0.9 * i as f64 / (n - 1) as f64).collect();
    let verdicts: Vec<Verdict> = ratios
        .iter()
        .map(|&r| classify_infinity(&power(&[(-r, 0.5)]), &power(&[(1.0, 1.5)]), &cfg).verdict)
        .collect();
    let cells: Vec<(f64, f64)> = (1..n)
        .filter(|&i| verdicts[i] != verdicts[i - 1])
        .map(|i| (ratios[i - 1], ratios[i]))
        .collect();
    let brackets = |v: f64| cells.iter().any(|&(a, b)| a <= v && v <= b);
    let (lo, hi) = (1.0 / gamma(0.5), gamma(1.5));
    let ok = cells.len() == 2 && brackets(lo) && brackets(hi);
    check(ok, format!("transitions in cells {cells:.4?}, expected {lo:.4} and {hi:.4}"))
}

fn killing_theta() -> Outcome {
    let grid = GridConfig::grid_only();
    let feller_competition = sigma_of(&[(1.0, 2.0)]);
    let mut worst: f64 = 0.0;
    for lambda in [0.5, 2.0] {
        let phi = PhiPart::new(0.0, JumpMeasure::Null, lambda).map_err(|e| e.to_string())?;
        let e = estimate_theta(&phi, &feller_competition, &grid).map_err(|e| e.to_string())?;
        worst = worst.max(rel(mid(&e), lambda));
    }
    let phi = PhiPart::new(0.0, JumpMeasure::Null, 1.0).map_err(|e| e.to_string())?;
    let e = estimate_theta(&phi, &sigma_of(&[(1.0, 1.5)]), &grid).map_err(|e| e.to_string())?;
    let diverges = e.liminf_est > 1e3;
    check(
        worst < 0.02 && diverges,
        format!("max relative error {worst:.2e}; without diffusion lower estimate = {:.3e}", e.liminf_est),
    )
}

struct OracleCase {
    name: &'static str,
    psi: Mechanism,
    epsilon: f64,
    trunc: Option<f64>,
}

fn discrepancies(case: &OracleCase, ts: &[f64], dt: f64) -> Result<Vec<(f64, f64)>, String> {
    let cfg = SimConfig {
        n_paths: 100_000,
        dt,
        epsilon: case.epsilon,
        horizon: ts[ts.len() - 1],
        seed: 20,
        ..SimConfig::default()
    };
    let states = sample_states(&case.psi, &Mechanism::zero(), 1.0, ts, &cfg, case.trunc).map_err(|e| e.to_string())?;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let vals: Vec<f64> = states.iter().map(|s| s[k].laplace(1.0)).collect();
            let (m, se) = mean_se(&vals);
            (m - (-ode_flow(&case.psi, 1.0, t)).exp(), se)
        })
        .collect())
}

fn semigroup_oracle() -> Outcome {
    let ts = [0.25, 1.0];
    let cases = [
        OracleCase { name: "feller", psi: power(&[(1.0, 2.0)]), epsilon: 1e-3, trunc: None },
        OracleCase { name: "stable", psi: power(&[(1.0, 1.5)]), epsilon: 0.05, trunc: Some(1e4) },
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for case in &cases {
        let full = discrepancies(case, &ts, 1e-3)?;
        let half = discrepancies(case, &ts, 5e-4)?;
        for (k, &t) in ts.iter().enumerate() {
            let (d, se) = full[k];
            let (dh, seh) = half[k];
            let within = d.abs() <= 3.0 * se;
            let structural = dh.abs() > 3.0 * seh && dh.abs() >= d.abs();
            ok &= within && !structural;
            detail.push(format!("{} t={t}: {:+.1} SE, halved dt {:+.1} SE", case.name, d / se, dh / seh));
        }
    }
    check(ok, detail.join("; "))
}

fn laplace_duality() -> Outcome {
    let pairs = [
        (power(&[(1.0, 2.0)]), power(&[(1.0, 2.0)]), 1e-3),
        (power(&[(1.0, 1.5)]), power(&[(1.0, 1.7), (-1.0, 0.4)]), 0.05),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (psi, psi_hat, epsilon) in &pairs {
        let cfg = DualityConfig {
            sim: SimConfig { n_paths: 100_000, epsilon: *epsilon, seed: 1, ..SimConfig::default() },
            k: 3.0,
            recheck: false,
        };
        let r = duality_check(psi, psi_hat, &DualityGrid::default(), &cfg).map_err(|e| e.to_string())?;
        ok &= r.passed() * 18 >= 17 * r.cells.len() && r.cells.len() == 18;
        detail.push(format!("{}/{} cells", r.passed(), r.cells.len()));
    }
    check(ok, detail.join(", "))
}

fn exit_identity() -> Outcome {
    let cfg = SimConfig { n_paths: 100_000, horizon: 50.0, dt: 1e-3, seed: 7, ..SimConfig::default() };
    let h = hitting_statistics(&power(&[(1.0, 2.0)]), &Mechanism::zero(), 1.0, &[0.0, 2.0], &cfg)
        .map_err(|e| e.to_string())?;
    let exit = h.two_sided.ok_or("no two-sided exit estimate")?;
    let ok = (exit.probability - 0.5).abs() <= 3.0 * exit.standard_error;
    check(
        ok,
        format!("P = {:.5} ± {:.5}, unresolved {}", exit.probability, exit.standard_error, exit.unresolved),
    )
}

fn pathwise_comparisons() -> Outcome {
    let sim = SimConfig { n_paths: 1000, horizon: 1.0, epsilon: 0.05, seed: 4, ..SimConfig::default() };
    let diffusive = power(&[(1.0, 2.0)]);
    let jump = power(&[(1.0, 1.5)]);
    let competition = power(&[(1.0, 2.0)]);
    let stronger = power(&[(1.0, 2.0), (1.0, 1.0)]);
    let specs = [
        CompareSpec::InitialValues { psi: diffusive.clone(), psi_hat: competition.clone(), x: 1.0, y: 2.0 },
        CompareSpec::InitialValues { psi: jump.clone(), psi_hat: competition.clone(), x: 1.0, y: 2.0 },
        CompareSpec::Drifts { psi: diffusive, lower: competition.clone(), upper: stronger.clone(), x0: 2.0 },
        CompareSpec::Drifts { psi: jump.clone(), lower: competition.clone(), upper: stronger, x0: 2.0 },
        CompareSpec::Truncations {
            psi: power(&[(1.0, 2.0), (-0.5, 0.0)]),
            psi_hat: competition.clone(),
            n: 2.0,
            n_prime: 10.0,
            x0: 1.0,
        },
        CompareSpec::Truncations { psi: jump, psi_hat: competition, n: 2.0, n_prime: 10.0, x0: 1.0 },
    ];
    let mut violations = 0;
    let mut pairs = 0;
    for s in &specs {
        let r = coupled_compare(s, &sim).map_err(|e| e.to_string())?;
        violations += r.violations;
        pairs += r.n_paths;
    }
    check(violations == 0, format!("{violations} violations over {pairs} coupled pairs"))
}

fn lyapunov_identity() -> Outcome {
    let psi = power(&[(-1.0, 0.5)]);
    let psi_hat = power(&[(1.0, 1.5)]);
    let residual = |psi: &Mechanism, psi_hat: &Mechanism, x: f64| -> Result<f64, String> {
        let gen = generator_apply(psi, psi_hat, TestFunction::F, x).map_err(|e| e.to_string())?;
        let xf = x * f_value(&psi.decomposition().phi, &psi_hat.decomposition().sigma, x).map_err(|e| e.to_string())?;
        Ok(1.0 - xf - gen)
    };
    let mut pure: f64 = 0.0;
    for x in [1.0, 10.0, 100.0] {
        pure = pure.max(residual(&psi, &psi_hat, x)?.abs());
    }
    let mixed = power(&[(-1.0, 0.5), (1.0, 2.0)]);
    let eps: Vec<f64> = [1e2, 1e3, 1e4]
        .iter()
        .map(|&x| residual(&mixed, &psi_hat, x).map(f64::abs))
        .collect::<Result<_, _>>()?;
    let decreasing = eps.windows(2).all(|w| w[1] < w[0]);
    check(pure < 1e-4 && decreasing, format!("pure residual {pure:.2e}; mixed residuals {eps:?}"))
}

fn equivalence_invariance() -> Outcome {
    let grid = GridConfig::grid_only();
    let sigma_hat = sigma_of(&[(1.0, 1.5)]);
    let phi = phi_of(&[(-0.7, 0.5)]);
    let phi_linear = phi_of(&[(-0.7, 0.5), (-1.0, 1.0)]);
    let t0 = estimate_theta(&phi, &sigma_hat, &grid).map_err(|e| e.to_string())?;
    let t1 = estimate_theta(&phi_linear, &sigma_hat, &grid).map_err(|e| e.to_string())?;
    let sigma_perturbed = SigmaPart::new(0.0, 0.0, JumpMeasure::Sum {
        parts: vec![JumpMeasure::StableTail { intensity: 1.0 / gamma(-1.5), index: 1.5 }, JumpMeasure::FiniteAtoms {
            atoms: vec![[1.0, 1.0]],
        }],
    })
    .map_err(|e| e.to_string())?;
    let r0 = estimate_rho(&sigma_hat, &phi, &grid).map_err(|e| e.to_string())?;
    let r1 = estimate_rho(&sigma_perturbed, &phi, &grid).map_err(|e| e.to_string())?;
    let dt = rel(mid(&t1), mid(&t0));
    let dr = rel(mid(&r1), mid(&r0));
    check(dt < 0.02 && dr < 0.02, format!("θ shift {dt:.2e}, ϱ shift {dr:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("laplace pairs of scale and potential densities", laplace_pairs, Duration::from_secs(1)),
        ("stable boundary parameters from the grid", stable_closed_forms, Duration::from_secs(10)),
        ("phase transitions of the stable family", phase_localization, Duration::from_secs(60)),
        ("killing rate over diffusion gives theta", killing_theta, Duration::from_secs(10)),
        ("monte carlo laplace transform against the flow", semigroup_oracle, Duration::from_secs(300)),
        ("laplace duality on an x, y, t grid", laplace_duality, Duration::from_secs(600)),
        ("two-sided exit of feller diffusion", exit_identity, Duration::from_secs(120)),
        ("coupled path comparisons", pathwise_comparisons, Duration::from_secs(120)),
        ("lyapunov generator identity", lyapunov_identity, Duration::from_secs(10)),
        ("boundary parameters under equivalent perturbations", equivalence_invariance, Duration::from_secs(10)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over budget of {}s", budget.as_secs())),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name}: {detail} ({:.1}s)", took.as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
