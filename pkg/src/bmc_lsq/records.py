"""Deterministic CSV and JSON persistence for fits, centers and experiment output.

Files are UTF-8 with ``'\\n'`` line endings.  Floats are written with
``repr`` (shortest round-trip form), so reruns with the same inputs give
byte-identical files.  A CSV starts with ``# key=value`` metadata lines,
then a header row.
"""
from __future__ import annotations

import csv
import json
import platform
from pathlib import Path

import numpy as np

from .basis import GaussianBasis
from .estimator import DensityFit


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}={_cell(val)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Return ``(meta, header, rows)``; cells stay strings."""
    meta, body = {}, []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, val = line[2:].rstrip("\n").partition("=")
                meta[key] = val
            else:
                body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise ValueError(f"{path}: no header row")
    return meta, rows[0], rows[1:]


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def versions() -> dict[str, str]:
    import joblib
    import scipy

    from . import __version__
    return {"bmc_lsq": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "joblib": joblib.__version__, "python": platform.python_version()}


def write_sidecar(path, payload: dict) -> Path:
    """JSON next to an output file, keys sorted for stable bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path


# --- centers and fits ---------------------------------------------------------

def save_centers(centers, path, meta: dict | None = None) -> Path:
    c = np.asarray(centers, dtype=np.float64)
    return write_csv(path, ["j", "c", "c0", "c1"], ([j, *row] for j, row in enumerate(c)), meta)


def load_centers(path) -> np.ndarray:
    _, header, rows = read_csv(path)
    if header != ["j", "c", "c0", "c1"]:
        raise ValueError(f"{path}: unexpected header {header}")
    return np.array([[float(v) for v in r[1:]] for r in rows]).reshape(-1, 3)


def save_fit(fit: DensityFit, path, n: int, seed: int, config_hash: str) -> Path:
    meta = {"tau": fit.tau, "lambda": fit.lam, "d": fit.basis.d, "n": n, "seed": seed,
            "config_hash": config_hash}
    rows = ([j, *c, b] for j, (c, b) in enumerate(zip(fit.basis.centers, fit.beta)))
    return write_csv(path, ["j", "c", "c0", "c1", "beta"], rows, meta)


def load_fit(path) -> tuple[DensityFit, dict[str, str]]:
    """Rebuild a fit from :func:`save_fit` output (``beta_tilde`` is not stored)."""
    meta, header, rows = read_csv(path)
    if header != ["j", "c", "c0", "c1", "beta"]:
        raise ValueError(f"{path}: unexpected header {header}")
    arr = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(-1, 4)
    basis = GaussianBasis(float(meta["tau"]), arr[:, :3])
    beta = arr[:, 3].copy()
    return DensityFit(basis=basis, beta=beta, lam=float(meta["lambda"]), beta_tilde=beta), meta


# --- CV reports ---------------------------------------------------------------

def save_cv(report, path, meta: dict | None = None) -> Path:
    """Per-fold scores, then ``fold=mean`` rows and a single ``fold=best`` row."""
    g = report.grid
    rows = []
    for li, lam in enumerate(g.lambdas):
        for ti, tau in enumerate(g.taus):
            for k in range(g.folds):
                rows.append([lam, tau, k, float(report.fold_scores[li, ti, k])])
    mean = report.scores
    for li, lam in enumerate(g.lambdas):
        for ti, tau in enumerate(g.taus):
            rows.append([lam, tau, "mean", float(mean[li, ti])])
    li, ti = g.lambdas.index(report.best[0]), g.taus.index(report.best[1])
    rows.append([report.best[0], report.best[1], "best", float(mean[li, ti])])
    meta = dict(meta or {})
    meta.update(criterion=g.criterion, folds=g.folds)
    return write_csv(path, ["lambda", "tau", "fold", "score"], rows, meta)
