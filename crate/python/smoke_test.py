"""Smoke test for the cbdi Python bindings.

Build first with `maturin develop -m crates/cbdi-py/Cargo.toml`, then run
`python python/smoke_test.py`.
"""

import math

import cbdi


def main():
    psi = cbdi.Mechanism.power_sum([(-0.7, 0.5)])
    psi_hat = cbdi.Mechanism.power_sum([(1.0, 1.5)])
    assert abs(psi(4.0) + 1.4) < 1e-12

    inf, zero = cbdi.classify(psi, psi_hat)
    assert inf["verdict"] == "Regular", inf
    assert zero["verdict"] == "Regular", zero
    assert inf["theta"]["upper"] < 1.0

    feller = cbdi.Mechanism.from_toml('family = "levy"\ndiffusion = 1.0\n')
    assert abs(feller(2.0) - 4.0) < 1e-12
    assert cbdi.Mechanism.from_toml(feller.to_toml())(3.0) == feller(3.0)

    exact = cbdi.cb_semigroup(feller, 1.0, 1.0, 0.5)
    assert abs(exact - math.exp(-1.0 / 1.5)) < 1e-8

    est, se = cbdi.laplace(feller, cbdi.Mechanism.zero(), 1.0, 1.0, 0.5, n_paths=4000, dt=1e-2, seed=1)
    assert abs(est - exact) < 5 * se + 1e-3, (est, se, exact)

    times, states = cbdi.simulate_path(feller, cbdi.Mechanism.zero(), 1.0, horizon=0.2, dt=1e-2, seed=3)
    again = cbdi.simulate_path(feller, cbdi.Mechanism.zero(), 1.0, horizon=0.2, dt=1e-2, seed=3)
    assert (times, states) == again
    assert all(s >= 0.0 for s in states)

    frac, cells = cbdi.duality_check(feller, feller, xs=[1.0], ys=[1.0], ts=[0.5], n_paths=2000, dt=1e-2, seed=2)
    assert len(cells) == 1 and 0.0 <= frac <= 1.0

    csv, code = cbdi.run_command("phase", "[phase]\npoints = 3\n")
    assert code == 0 and csv.startswith("# schema: cbdi.phase v1")
    assert len(csv.strip().splitlines()) == 5

    try:
        cbdi.run_command("classify", "[psi]\nfamily = \"levy\"\nkilling = -1.0\n")
    except ValueError as e:
        assert "psi.killing" in str(e)
    else:
        raise AssertionError("negative killing accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
