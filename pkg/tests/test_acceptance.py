"""Acceptance suite. Each test carries the number of the criterion it checks.

A summary line per criterion is printed at the end of the pytest run.
"""

import json
import math

import numpy as np
import pytest
from scipy import stats

from sfsampler import SchrodingerFollmerSampler
from sfsampler.cli import main
from sfsampler.core import AUX_STREAM_BASE, MC_STREAM_BASE, RunConfig, derive_stream
from sfsampler.data import load_csv, synth_moons
from sfsampler.drift import EmpiricalDrift, ExactGMDrift, mc_drift, mc_drift_with_stderr
from sfsampler.integrators import order_conditions, simulate_coupled, simulate_paths
from sfsampler.metrics import ConvergenceTable, fit_order, mean_nn_distance, mode_mass, strong_rmse, w2_sliced
from sfsampler.noise import aggregate, aggregate_increments, pair_from_normals, sample_pair
from sfsampler.targets import EmpiricalDataset, GaussianMixture, gaussian_circle

import mpmath as mp


@pytest.mark.acceptance(1, "strong order: SRK slope in [1.3, 1.7], Euler slope in [0.75, 1.25]")
def test_strong_order_circle(measured):
    h_list = [2.0**-k for k in range(5, 10)]
    config = RunConfig(dim=2, beta=1.0, paths=256, seed=0)
    run = simulate_coupled(config, gaussian_circle(), 2.0**-12, h_list, schemes=["srk", "euler"])
    slopes = {}
    for scheme in ("srk", "euler"):
        table = ConvergenceTable()
        for h in h_list:
            table.add(h, strong_rmse(run.reference[scheme], run.terminals[(scheme, h)]), 256)
        slopes[scheme] = table.fit()[0]
    measured(f"srk={slopes['srk']:.3f} euler={slopes['euler']:.3f}")
    assert 1.3 <= slopes["srk"] <= 1.7
    assert 0.75 <= slopes["euler"] <= 1.25


@pytest.mark.acceptance(2, "Monte-Carlo drift RMSE slope in M is -0.5 +/- 0.15")
def test_mc_drift_error_scaling(measured):
    gm = GaussianMixture([0.4, 0.6], [[-1.0, 0.5], [1.0, -0.5]], [0.5 * np.eye(2), [[0.8, 0.2], [0.2, 0.6]]])
    t, x = 0.3, np.array([0.5, -0.5])
    exact = ExactGMDrift(gm, 1.0)(t, x)
    rows = []
    for M in (10**2, 10**3, 10**4):
        err = np.array([mc_drift(gm, 1.0, t, x, M, derive_stream(2, MC_STREAM_BASE + r)) - exact for r in range(200)])
        rows.append((M, math.sqrt((err * err).sum(axis=1).mean()), 200))
    slope, _ = fit_order(rows)
    measured(f"slope={slope:.3f}")
    assert abs(slope + 0.5) <= 0.15


@pytest.mark.acceptance(3, "order conditions hold exactly")
def test_order_conditions(measured):
    values = order_conditions()
    measured(", ".join(str(v) for v in values))
    assert values == (0.5, 0.5, 1, 0.75)
    assert all(float(v) == e for v, e in zip(values, (0.5, 0.5, 1.0, 0.75)))


@pytest.mark.acceptance(4, "noise-pair moments within 4 standard errors; aggregation exact to 1e-12")
def test_noise_moments(measured):
    h, n = 0.25, 10**6
    z = derive_stream(4, 0).standard_normal((n, 2))
    dW, dZ = pair_from_normals(z[:, 0], z[:, 1], h)
    zs = []
    for sample, expected in ((dW * dW, h), (dZ * dZ, h**3 / 3), (dW * dZ, h**2 / 2)):
        se = sample.std(ddof=1) / math.sqrt(n)
        zs.append(abs(sample.mean() - expected) / se)
    measured("z=" + ",".join(f"{v:.2f}" for v in zs))
    assert max(zs) < 4

    rng = derive_stream(4, 1)
    pairs = [sample_pair(h / 4, 3, rng) for _ in range(4)]
    flat = aggregate(pairs, h)
    nested = aggregate([aggregate(pairs[:2], h / 2), aggregate(pairs[2:], h / 2)], h)
    by_hand_dZ = sum(p.dZ + (3 - k) * (h / 4) * p.dW for k, p in enumerate(pairs))
    for got in (flat, nested):
        assert np.max(np.abs(got.dW - sum(p.dW for p in pairs))) <= 1e-12
        assert np.max(np.abs(got.dZ - by_hand_dZ)) <= 1e-12


@pytest.mark.acceptance(5, "reference Gaussian target: terminal law N(0, beta I)")
@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_exact_law(measured, beta):
    P = 10**4
    gm = GaussianMixture([1.0], [[0.0, 0.0]], [beta * np.eye(2)])
    x = simulate_paths(RunConfig(dim=2, beta=beta, n_steps=20, paths=P, seed=5), gm).samples
    mean, cov = x.mean(axis=0), np.cov(x.T)
    assert np.all(np.abs(mean) < 4 * math.sqrt(beta / P))
    assert np.all(np.abs(np.diag(cov) - beta) < 4 * beta * math.sqrt(2 / P))
    assert abs(cov[0, 1]) < 4 * beta / math.sqrt(P)
    pvals = [stats.kstest(x[:, j], "norm", args=(0, math.sqrt(beta))).pvalue for j in range(2)]
    measured(f"beta={beta:g} KS p=" + ",".join(f"{p:.3f}" for p in pvals))
    assert min(pvals) > 1e-3


@pytest.mark.acceptance(6, "circle coverage: mode mass in [0.095, 0.155], sliced W2 <= 1.5 b0")
def test_circle_coverage(tmp_path, monkeypatch, measured):
    monkeypatch.chdir(tmp_path)
    argv = ["sample", "--target", "circle", "--scheme", "srk", "--drift", "exact", "--steps", "128", "--paths", "5000", "--seed", "1", "--out", "circle.csv"]
    assert main(argv) == 0
    samples = load_csv("circle.csv").samples
    gm = gaussian_circle()
    frac = mode_mass(samples, gm.modes)
    exact = [gm.sample(5000, derive_stream(1, AUX_STREAM_BASE + 100 + k)) for k in range(3)]
    b0 = w2_sliced(exact[0], exact[1], 128, seed=0).value
    w2 = w2_sliced(samples, exact[2], 128, seed=0).value
    measured(f"mass=[{frac.min():.4f}, {frac.max():.4f}] w2={w2:.4f} b0={b0:.4f}")
    assert np.all((frac >= 0.095) & (frac <= 0.155))
    assert w2 <= 1.5 * b0


@pytest.mark.acceptance(7, "moons: mean NN distance to training set <= 3x its own")
def test_data_driven_moons(measured):
    data = synth_moons(1000, 0.05, derive_stream(7, 0)).samples
    sampler = SchrodingerFollmerSampler(drift="empirical", beta=1.0, n_steps=100, random_state=0)
    generated = sampler.fit(data).sample(2000)
    assert generated.shape == (2000, 2)
    gen_nn = mean_nn_distance(generated, data)
    own_nn = mean_nn_distance(data, data, exclude_self=True)
    measured(f"ratio={gen_nn / own_nn:.3f}")
    assert gen_nn <= 3 * own_nn


@pytest.mark.acceptance(8, "drift oracles: empirical to 1e-10 relative, exact vs MC within 4 SE")
def test_empirical_drift_oracle(measured):
    mp.mp.dps = 40
    rng = np.random.default_rng(80)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        beta, t = float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.0, 0.95))
        data, x = rng.normal(0, 1, (n, d)), rng.normal(0, 1, d)
        # Unstabilised weights exp(|eta|^2 / 2b - |eta - x|^2 / (2 (1 - t) b)), in 40 digits.
        w = []
        for eta in data:
            e = [mp.mpf(v) for v in eta]
            a = mp.fsum(v * v for v in e) / (2 * beta)
            b = mp.fsum((v - mp.mpf(xi)) ** 2 for v, xi in zip(e, x)) / (2 * (1 - mp.mpf(t)) * beta)
            w.append(mp.exp(a - b))
        total = mp.fsum(w)
        expected = np.array([
            float(mp.fsum(wj * (mp.mpf(eta[k]) - mp.mpf(x[k])) for wj, eta in zip(w, data)) / total / (1 - mp.mpf(t)))
            for k in range(d)
        ])
        got = EmpiricalDrift(EmpiricalDataset(data), beta)(t, x)
        rel = np.max(np.abs(got - expected)) / max(np.max(np.abs(expected)), 1e-300)
        worst = max(worst, rel)
    measured(f"empirical max rel={worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(8, "drift oracles: empirical to 1e-10 relative, exact vs MC within 4 SE")
def test_exact_drift_mc_oracle(measured):
    # Covariance eigenvalues are kept in [0.3, 1.2] * beta: the Monte-Carlo
    # weights have infinite variance once an eigenvalue reaches 2 * beta, and
    # the standard-error estimate is then meaningless.
    rng = np.random.default_rng(88)
    worst = 0.0
    for i in range(20):
        d, k = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        beta = float(rng.uniform(0.5, 2.0))
        covs = []
        for _ in range(k):
            q, _ = np.linalg.qr(rng.normal(size=(d, d)))
            covs.append(q @ np.diag(rng.uniform(0.3, 1.2, d) * beta) @ q.T)
        w = rng.uniform(0.2, 1.0, k)
        gm = GaussianMixture(w / w.sum(), rng.normal(0, 1.0, (k, d)), np.array(covs))
        t = float(rng.uniform(0.0, 0.9))
        x = rng.normal(0, 1.0, d)
        exact = ExactGMDrift(gm, beta)(t, x)
        est, se = mc_drift_with_stderr(gm, beta, t, x, 10**6, derive_stream(8, MC_STREAM_BASE + i))
        z = np.abs(est - exact) / se
        worst = max(worst, float(z.max()))
        assert np.all(z < 4), (i, est, exact, se)
    measured(f"max |z|={worst:.2f}")


@pytest.mark.acceptance(9, "CLI output byte-identical across 1 and 8 threads")
@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--target", "circle", "--steps", "32", "--paths", "1500", "--seed", "9"],
        ["sample", "--target", "rings", "--drift", "mc", "--mc-samples", "32", "--steps", "8", "--paths", "600"],
        ["sample", "--target", "cross", "--scheme", "euler", "--steps", "16", "--paths", "900"],
    ],
    ids=["exact-srk", "mc-srk", "exact-euler"],
)
def test_thread_determinism(tmp_path, monkeypatch, argv, measured):
    monkeypatch.chdir(tmp_path)
    assert main(argv + ["--threads", "1", "--out", "one.csv"]) == 0
    assert main(["replay", "one.manifest.json", "--threads", "8", "--out", "eight.csv"]) == 0
    assert main(argv + ["--threads", "8", "--out", "direct.csv"]) == 0
    one = (tmp_path / "one.csv").read_bytes()
    assert one == (tmp_path / "eight.csv").read_bytes()
    assert one == (tmp_path / "direct.csv").read_bytes()
    manifest = json.loads((tmp_path / "one.manifest.json").read_text())
    measured(f"{argv[2]}: {len(one)} bytes identical")
    assert manifest["schema_version"] == 1
