"""INI run configuration with whole-file validation.

Every problem found in a file is collected and reported together; the run
never starts on a partially valid configuration.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .selection import DEFAULT_LAMBDAS, DEFAULT_TAUS
from .tree import MAX_DEPTH


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for tok in text.replace(",", " ").split():
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1) if not tok.startswith("-") else (tok, tok)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class KernelSpec:
    name: str
    sigma: float = 1.0
    rho: float = 0.3
    drift: str = "sinc2pi"
    slope: float = 0.0
    a: float = 0.4

    def build(self):
        from .kernels import NbarModel, TwoPointModel
        if self.name == "nbar":
            return NbarModel(self.sigma, self.rho, self.drift, self.slope)
        return TwoPointModel(self.a)


@dataclass(frozen=True)
class RunConfig:
    kernel: KernelSpec
    generation: int = 16
    d_max: int = 1000
    tau: float | None = None
    lam: float | None = None
    lambdas: tuple = DEFAULT_LAMBDAS
    taus: tuple = DEFAULT_TAUS
    folds: int = 5
    criterion: str = "S"
    s_variant: str = "raw"
    per_replication_cv: bool = False
    reps: int = 500
    generations: tuple = (8, 9, 10, 11, 12, 13)
    fig1_generation: int = 13
    fig3_generation: int = 16
    x0: float = 0.5
    point: tuple = (0.5, 0.5, 1.4)
    grid_points: int = 121
    quad_points: int = 16
    quad_panels: int = 12
    deltas: tuple = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    test_function: str = "identity"
    a_values: tuple = (0.25, 0.85)
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    source: dict = field(default_factory=dict, compare=False)

    def cv_grid(self):
        from .selection import CvGrid
        return CvGrid(self.lambdas, self.taus, self.folds, self.criterion, self.s_variant, self.d_max)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source")
        return d

    def hash(self) -> str:
        """Digest of every setting that can change results (not jobs or out)."""
        d = self.canonical()
        del d["jobs"], d["out"]
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# section -> key -> (RunConfig field, parser)
SCHEMA = {
    "kernel": {
        "name": ("kernel.name", str), "sigma": ("kernel.sigma", float), "rho": ("kernel.rho", float),
        "drift": ("kernel.drift", str), "slope": ("kernel.slope", float), "a": ("kernel.a", float),
    },
    "sample": {"generation": ("generation", int)},
    "basis": {"d_max": ("d_max", int), "tau": ("tau", float)},
    "fit": {"lambda": ("lam", float)},
    "cv": {
        "lambdas": ("lambdas", _floats), "taus": ("taus", _floats), "folds": ("folds", int),
        "criterion": ("criterion", str), "s_variant": ("s_variant", str),
        "per_replication": ("per_replication_cv", _bool),
    },
    "experiment": {
        "reps": ("reps", int), "generations": ("generations", _ints),
        "fig1_generation": ("fig1_generation", int), "fig3_generation": ("fig3_generation", int),
        "x0": ("x0", float), "point": ("point", _floats), "grid_points": ("grid_points", int),
        "quad_points": ("quad_points", int), "quad_panels": ("quad_panels", int),
        "deltas": ("deltas", _floats), "test_function": ("test_function", str),
        "a_values": ("a_values", _floats),
    },
    "run": {"seed": ("seed", int), "jobs": ("jobs", int), "out": ("out", str)},
}


def validate(cfg: RunConfig) -> list[str]:
    from .experiments import TEST_FUNCTIONS
    from .kernels import DRIFTS
    p = []
    k = cfg.kernel
    if k.name not in ("nbar", "twopoint"):
        p.append(f"kernel.name: expected 'nbar' or 'twopoint', got {k.name!r}")
    if not k.sigma > 0:
        p.append(f"kernel.sigma: must be positive, got {k.sigma}")
    if not abs(k.rho) < 1:
        p.append(f"kernel.rho: must lie in (-1, 1), got {k.rho}")
    if k.drift not in DRIFTS:
        p.append(f"kernel.drift: expected one of {DRIFTS}, got {k.drift!r}")
    if not abs(k.a) < 1:
        p.append(f"kernel.a: must satisfy |a| < 1, got {k.a}")
    for name, gen in (("sample.generation", cfg.generation),
                      ("experiment.fig1_generation", cfg.fig1_generation),
                      ("experiment.fig3_generation", cfg.fig3_generation)):
        if gen < 0 or gen + 1 > MAX_DEPTH:
            p.append(f"{name}: tree depth {gen + 1} outside [1, {MAX_DEPTH}]")
    if any(g < 1 or g + 1 > MAX_DEPTH for g in cfg.generations):
        p.append(f"experiment.generations: every depth must lie in [2, {MAX_DEPTH}]")
    if list(cfg.generations) != sorted(set(cfg.generations)) or not cfg.generations:
        p.append("experiment.generations: must be nonempty and strictly ascending")
    if cfg.d_max < 1:
        p.append("basis.d_max: must be positive")
    if cfg.tau is not None and not cfg.tau > 0:
        p.append("basis.tau: must be positive")
    if cfg.lam is not None and not cfg.lam > 0:
        p.append("fit.lambda: must be positive")
    for name, vals in (("cv.lambdas", cfg.lambdas), ("cv.taus", cfg.taus)):
        if not vals or any(v <= 0 for v in vals) or list(vals) != sorted(set(vals)):
            p.append(f"{name}: must be nonempty, positive and strictly ascending")
    if cfg.folds < 2:
        p.append("cv.folds: need at least 2")
    elif cfg.folds > 1 << cfg.generation:
        p.append(f"cv.folds: {cfg.folds} folds exceed generation size {1 << cfg.generation}")
    if cfg.criterion not in ("S", "K"):
        p.append(f"cv.criterion: expected 'S' or 'K', got {cfg.criterion!r}")
    if cfg.s_variant not in ("raw", "normalized"):
        p.append(f"cv.s_variant: expected 'raw' or 'normalized', got {cfg.s_variant!r}")
    if cfg.reps < 1:
        p.append("experiment.reps: must be positive")
    if len(cfg.point) != 3:
        p.append("experiment.point: need three coordinates")
    if cfg.grid_points < 2:
        p.append("experiment.grid_points: need at least 2")
    if cfg.quad_points * cfg.quad_panels < 16:
        p.append("experiment.quad_points * quad_panels: need at least 16 nodes")
    if not cfg.deltas or any(dl < 0 for dl in cfg.deltas):
        p.append("experiment.deltas: must be nonempty and nonnegative")
    if cfg.test_function not in TEST_FUNCTIONS:
        p.append(f"experiment.test_function: expected one of {sorted(TEST_FUNCTIONS)}")
    if any(not 0 < abs(a) < 1 for a in cfg.a_values):
        p.append("experiment.a_values: each must satisfy 0 < |a| < 1")
    if cfg.jobs < 1:
        p.append("run.jobs: must be positive")
    return p


def parse_text(text: str, origin: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=origin)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([f"{origin}:{exc.lineno}: syntax error: expected a [section] header"]) from exc
    except configparser.ParsingError as exc:
        lines = ", ".join(str(lineno) for lineno, _ in exc.errors)
        raise ConfigError([f"{origin}: syntax error on line(s) {lines}"]) from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", "?")
        raise ConfigError([f"{origin}:{lineno}: syntax error: {exc.message.splitlines()[0]}"]) from exc

    problems, values, kernel_values = [], {}, {}
    for section in parser.sections():
        keys = SCHEMA.get(section)
        if keys is None:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                problems.append(f"{section}.{key}: unknown key")
                continue
            target, conv = keys[key]
            try:
                val = conv(raw)
            except ValueError as exc:
                problems.append(f"{section}.{key}: cannot parse {raw!r} ({exc})")
                continue
            if target.startswith("kernel."):
                kernel_values[target.split(".", 1)[1]] = val
            else:
                values[target] = val
    missing = "name" not in kernel_values
    if missing:
        problems.append("kernel.name: missing required field")
        kernel_values["name"] = "nbar"  # placeholder so the other fields still get checked
    try:
        cfg = RunConfig(kernel=KernelSpec(**kernel_values), source={"origin": origin}, **values)
    except TypeError as exc:
        raise ConfigError(problems + [str(exc)]) from exc
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    return parse_text(text, str(path))
