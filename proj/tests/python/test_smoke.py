import math

import numpy as np
import pytest

import copiv

BINARY = {
    "outcome": {"marginal": "gaussian", "rho": 0.4, "loc1": 0.5},
    "selection": {"kind": "binary", "pi": [[0.3, 0.7]]},
}


def test_phi2_arcsine():
    for r in (-0.5, 0.0, 0.7):
        assert copiv.Phi2(0.0, 0.0, r) == pytest.approx(0.25 + math.asin(r) / (2 * math.pi), abs=1e-12)


def test_solve_rho_inverts_copula():
    for fam in ("gaussian", "clayton", "frank"):
        t = copiv.copula(fam, 0.4, 0.6, 0.3)
        rho, boundary = copiv.solve_rho(fam, t, 0.4, 0.6)
        assert rho == pytest.approx(0.3, abs=1e-10)
        assert not boundary


def test_solve_binary_round_trip():
    F, r, pi = 0.45, -0.3, (0.3, 0.7)
    p = [copiv.copula("gaussian", F, q, r) for q in pi]
    s = copiv.solve_binary(1, p, pi)
    assert s["F"] == pytest.approx(F, abs=1e-8)
    assert s["rho"] == pytest.approx(r, abs=1e-8)


def test_continuous_worked_example():
    F, rho = copiv.solve_continuous(0.5, 0.6, 0.4, 0.7)
    assert F == pytest.approx(0.53127, abs=1e-5)
    assert rho == pytest.approx(-0.30973, abs=1e-5)


def test_simulate_and_fit():
    data = copiv.simulate(BINARY, 4000, seed=7)
    assert len(data["y"]) == 4000
    assert set(np.unique(data["d"])) == {0.0, 1.0}
    grid = [-0.5, 0.0, 0.5, 1.0]
    out = copiv.fit("binary", data["y"], data["d"], data["z"], y_grid=grid)
    F = np.asarray(out["F"])
    assert F.shape == (2, len(grid))
    for i, d in enumerate(out["levels"]):
        truth = [copiv.true_cdf(BINARY, d, y) for y in grid]
        assert np.max(np.abs(F[i] - truth)) < 0.08


def test_errors_surface():
    with pytest.raises(copiv.CopivError):
        copiv.solve_binary(1, [0.2, 0.2], [0.5, 0.5])


def test_run_simulate(tmp_path):
    out = copiv.run("simulate", {"dgp": BINARY, "n": 300, "seed": 1, "output_dir": str(tmp_path)})
    assert (tmp_path / "data.csv").exists()
    assert out["command"] == "simulate"
