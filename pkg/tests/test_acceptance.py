"""Acceptance criteria 1-10.

Each criterion writes its evidence as CSV under a per-run directory and
prints one ``CRITERION k: PASS|FAIL`` line.  Criterion 10 reruns 1-9 into
a second directory and compares the CSV bytes.

Run alone with ``pytest tests/test_acceptance.py -v -s`` or
``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from _oracles import normalized_mass, overlap_quadrature  # noqa: E402

from bmc_lsq import experiments as X  # noqa: E402
from bmc_lsq import theory as T  # noqa: E402
from bmc_lsq.basis import GaussianBasis, overlap_bar  # noqa: E402
from bmc_lsq.kernels import NbarModel, TwoPointModel, simulate_tree  # noqa: E402
from bmc_lsq.records import write_csv  # noqa: E402
from bmc_lsq.rng import derive_seed  # noqa: E402
from bmc_lsq.selection import CvGrid, cross_validate  # noqa: E402
from bmc_lsq.tree import triangles_of_generation  # noqa: E402

MASTER_SEED = 20261016
DELTAS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)

pytestmark = pytest.mark.slow


def _seed(k: int) -> int:
    return derive_seed(MASTER_SEED, 1000 + k)


def _triangles(n: int, seed: int) -> np.ndarray:
    return triangles_of_generation(simulate_tree(NbarModel(), None, n + 1, seed), n)


# --- criteria ---------------------------------------------------------------
# Each returns (passed, detail) and writes criterion_k.csv into `out`.

def criterion_1(out: Path):
    rng = np.random.default_rng(_seed(1))
    centers = _triangles(10, derive_seed(_seed(1), 0))[:1000]
    rows, worst = [], 0.0
    for tau in (0.0316, 31.6228):
        b = GaussianBasis(tau, centers)
        for _ in range(100):
            i = int(rng.integers(b.d))
            dist = np.sum((centers - centers[i]) ** 2, axis=1)
            j = int(rng.choice(np.argsort(dist, kind="stable")[:10]))
            x = float(centers[i, 0] + tau * rng.normal())
            closed = overlap_bar(b, i, j, x)
            quad = overlap_quadrature(centers, tau, i, j, x)
            rel = abs(closed - quad) / quad
            worst = max(worst, rel)
            rows.append([tau, i, j, x, closed, quad, rel])
    write_csv(out / "criterion_1.csv", ["tau", "i", "j", "x", "closed_form", "quadrature", "rel_err"], rows)
    return worst <= 1e-6, f"max relative error {worst:.3e} over {len(rows)} cases (tol 1e-6)"


def criterion_2(out: Path):
    seed = _seed(2)
    tri = _triangles(10, seed)
    lam, tau = cross_validate(tri, CvGrid(d_max=256), derive_seed(seed, 1)).best
    f = X.fit_sample(tri, lam, tau, 256, derive_seed(seed, 2))
    rows, worst = [], 0.0
    for x in (-1.0, -0.5, 0.0, 0.5, 1.0):
        mass = normalized_mass(f, x)
        worst = max(worst, abs(mass - 1.0))
        rows.append([x, mass, mass - 1.0])
    write_csv(out / "criterion_2.csv", ["x", "mass", "deviation"], rows,
              {"lambda": lam, "tau": tau, "d": f.basis.d})
    return worst <= 1e-8, f"lambda={lam} tau={tau}: max |mass - 1| = {worst:.3e} (tol 1e-8)"


def criterion_3(out: Path):
    seed = _seed(3)
    rep = cross_validate(_triangles(10, seed), CvGrid(), derive_seed(seed, 1), check=True)
    rows = [[c["fold"], c["lam"], c["tau"], c["symmetric"], c["min_eig"], c["residual"], c["bound"]]
            for c in rep.checks]
    write_csv(out / "criterion_3.csv",
              ["fold", "lambda", "tau", "symmetric", "min_eigenvalue", "residual", "residual_bound"], rows)
    sym = all(r[3] for r in rows)
    min_eig = min(r[4] for r in rows)
    ratio = max(r[5] / r[6] for r in rows)
    ok = sym and min_eig >= -1e-10 and ratio <= 1.0 and len(rows) == 81 * 5
    return ok, (f"{len(rows)} cells: symmetric={sym}, min eigenvalue {min_eig:.3e} (>= -1e-10), "
                f"max residual/bound {ratio:.3e}")


def _constant_cases():
    r2 = 1 / math.sqrt(2)
    return [
        ("c_alpha", (r2, 1.0), T.c_alpha(r2, 1.0), 16.0),
        ("c_alpha", (0.5, 1.0), T.c_alpha(0.5, 1.0), 16.0),
        ("c_alpha", (0.9, 1.0), T.c_alpha(0.9, 1.0), 8 / 0.62),
        ("c1", (0.5, 1.0, 7, 1.0), T.c1(0.5, 1.0, 7, 1.0), 16.0),
        ("c1", (r2, 1.0, 10, 1.0), T.c1(r2, 1.0, 10, 1.0), 160.0),
        ("c1", (0.9, 1.0, 4, 1.0), T.c1(0.9, 1.0, 4, 1.0), 8 / 0.62 * 1.62 ** 4),
        ("c2", (0.5, 1.0, 1.0, 1.0), T.c2(0.5, 1.0, 1.0, 1.0), 2.0),
        ("c2", (0.8, 1.0, 1.0, 1.0), T.c2(0.8, 1.0, 1.0, 1.0), 1.5),
        ("v_n", (0.5, 4), T.v_n(0.5, 4), 0.25),
        ("v_n", (0.8, 4), T.v_n(0.8, 4), 1.6384),
        ("kappa_n", (0.3, 10), T.kappa_n(0.3, 10), 1.0),
        ("kappa_n", (0.8, 4), T.kappa_n(0.8, 4), 2.56),
        ("e_alpha", (0.3,), T.e_alpha(0.3), 1.0),
        ("e_alpha", (0.75,), T.e_alpha(0.75), math.log(4 / 3) / math.log(2)),
        ("delta_n", (0.5, 1.0, 10), T.delta_n(0.5, 1.0, 10), 2 ** (-10 / 3)),
    ]


def criterion_4(out: Path):
    rows, worst = [], 0.0
    for name, args, got, want in _constant_cases():
        rel = abs(got - want) / abs(want)
        worst = max(worst, rel)
        rows.append([name, " ".join(map(repr, args)), got, want, rel])
    write_csv(out / "criterion_4.csv", ["constant", "arguments", "value", "expected", "rel_err"], rows)
    return worst <= 1e-12, f"{len(rows)} values, max relative error {worst:.3e} (tol 1e-12)"


def criterion_5(out: Path):
    means = []
    for r in range(100):
        tree = simulate_tree(TwoPointModel(0.4), None, 14, derive_seed(_seed(5), r))
        means.append(float(tree.generation(14).mean()))
    hits = sum(abs(m) < 0.02 for m in means)
    write_csv(out / "criterion_5.csv", ["run", "mean", "below_0.02"],
              ([r, m, abs(m) < 0.02] for r, m in enumerate(means)))
    return hits >= 95, f"{hits}/100 runs with |mean| < 0.02 (need >= 95)"


def criterion_6(out: Path):
    rows, ok = [], True
    for g in ("identity", "indicator_plus"):
        res, _ = X.run_concentration(TwoPointModel(0.4), g, 2, 2000, DELTAS, _seed(6))
        exact = X.exact_twopoint_tail(0.4, g, 2, DELTAS)
        for r, p in zip(res, exact):
            se = math.sqrt(p * (1 - p) / 2000)
            good = abs(r["tail"] - p) <= 3 * se + 1e-12
            ok &= good
            rows.append([g, r["delta"], r["tail"], p, se, good])
    write_csv(out / "criterion_6.csv", ["g", "delta", "monte_carlo", "exact", "se", "within_3se"], rows)
    return ok, f"{sum(r[-1] for r in rows)}/{len(rows)} (g, delta) cells within 3 binomial SE"


def criterion_7(out: Path):
    res, C = X.run_concentration(TwoPointModel(0.4), "identity", 10, 2000, DELTAS, _seed(7))
    dom = [r["dominated"] for r in res]
    share = sum(dom) / len(dom)
    write_csv(out / "criterion_7.csv", ["delta", "tail", "shape", "bound", "dominated"],
              ([r["delta"], r["tail"], r["shape"], r["bound"], r["dominated"]] for r in res),
              {"C": C, "c1": res[0]["c1"], "c2": res[0]["c2"], "v_n": res[0]["v_n"]})
    return C >= 1 and share >= 0.95, f"C={C:.4g}, dominated at {sum(dom)}/{len(dom)} grid points"


def criterion_8(out: Path):
    rows, params = X.figure_error_boxplot(NbarModel(), range(8, 14), 50, CvGrid(), _seed(8))
    med = X.medians_by_generation(rows)
    rho = X.spearman_trend(med)
    write_csv(out / "criterion_8.csv", ["n", "rep", "slice_error"], rows)
    write_csv(out / "criterion_8_medians.csv", ["n", "lambda", "tau", "median"],
              ([n, *params[n], med[n]] for n in sorted(med)))
    ns = sorted(med)
    strict = all(med[b] < med[a] for a, b in zip(ns, ns[1:]))
    return rho <= -0.8, f"Spearman rho {rho:.3f} (need <= -0.8), strictly decreasing={strict}"


def criterion_9(out: Path):
    rows, slopes, params = X.run_rate_study([0.25, 0.85], range(8, 14), 50, _seed(9))
    write_csv(out / "criterion_9.csv", ["a", "alpha_proxy", "n", "rep", "error"],
              ([r.a, abs(r.a), r.n, r.rep, r.error] for r in rows))
    write_csv(out / "criterion_9_slopes.csv", ["a", "alpha_proxy", "slope"],
              ([a, abs(a), s] for a, s in slopes.items()))
    ok = slopes[0.25] <= slopes[0.85] + 0.05
    return ok, f"slope(0.25)={slopes[0.25]:.4f}, slope(0.85)={slopes[0.85]:.4f} (need s1 <= s2 + 0.05)"


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}
LIMITS = {1: 10, 2: 30, 3: 300, 4: 1, 5: 60, 6: 10, 7: 120, 8: 1800, 9: 2700}


def run(k: int, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ok, detail = CRITERIA[k](out)
    elapsed = time.perf_counter() - t0
    within = elapsed < LIMITS[k]
    return ok and within, f"{detail}; {elapsed:.1f}s (limit {LIMITS[k]}s)"


def report(k: int, passed: bool, detail: str) -> str:
    return f"CRITERION {k}: {'PASS' if passed else 'FAIL'} - {detail}"


# --- pytest wiring ------------------------------------------------------------

_DONE: dict[int, Path] = {}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _emit(capsys, line: str):
    with capsys.disabled():
        print("\n" + line)


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, workdir, capsys):
    out = workdir / "run1"
    passed, detail = run(k, out)
    _DONE[k] = out
    _emit(capsys, report(k, passed, detail))
    assert passed, detail


def _csv_bytes(d: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


def criterion_10(first: Path, second: Path):
    for k in CRITERIA:
        if not (first / f"criterion_{k}.csv").exists():
            run(k, first)
        run(k, second)
    a, b = _csv_bytes(first), _csv_bytes(second)
    diff = sorted(n for n in a.keys() | b.keys() if a.get(n) != b.get(n))
    return not diff and len(a) > 0, f"{len(a)} CSVs compared, differing: {diff or 'none'}"


def test_criterion_10(workdir, capsys):
    passed, detail = criterion_10(workdir / "run1", workdir / "run2")
    _emit(capsys, report(10, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    import tempfile

    base = Path(tempfile.mkdtemp(prefix="acceptance_"))
    results = []
    for k in sorted(CRITERIA):
        passed, detail = run(k, base / "run1")
        print(report(k, passed, detail), flush=True)
        results.append(passed)
    passed, detail = criterion_10(base / "run1", base / "run2")
    print(report(10, passed, detail), flush=True)
    sys.exit(0 if all(results) and passed else 1)
