"""
Benchmark data: the four synthetic scenarios, CSV ingestion for IHDP/Jobs
style files and seeded train/validation/test splits.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

SCENARIOS = ("A", "B", "C", "D")
GRID_N = (500, 1000)
GRID_D = (6, 12)
GRID_SIGMA = (0.5, 1.0, 2.0, 4.0)


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    t: np.ndarray
    y: np.ndarray
    mu0: np.ndarray | None = None
    mu1: np.ndarray | None = None
    e_true: np.ndarray | None = None
    exp: np.ndarray | None = None
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        n = self.X.shape[0]
        if not self.columns:
            self.columns = tuple(f"x{i + 1}" for i in range(self.X.shape[1]))
        self.columns = tuple(self.columns)
        if len(self.columns) != self.X.shape[1]:
            raise DataError(f"{len(self.columns)} column names for {self.X.shape[1]} columns")
        for name in ("t", "y", "mu0", "mu1", "e_true", "exp"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (n,):
                raise DataError(f"{name} has shape {v.shape}, expected ({n},)")
            setattr(self, name, v)
        if not np.all((self.t == 0) | (self.t == 1)):
            raise DataError("treatment must be binary")
        if self.exp is not None and not np.all((self.exp == 0) | (self.exp == 1)):
            raise DataError("experimental flag must be binary")

    def __len__(self):
        return len(self.t)

    @property
    def ite(self) -> np.ndarray | None:
        if self.mu0 is None or self.mu1 is None:
            return None
        return self.mu1 - self.mu0

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        pick = lambda v: None if v is None else v[idx]
        return Dataset(
            self.X[idx], self.t[idx], self.y[idx], pick(self.mu0), pick(self.mu1),
            pick(self.e_true), pick(self.exp), self.columns,
        )


# synthetic scenarios ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    scenario: str = "A"
    n: int = 500
    d: int = 6
    sigma: float = 0.5
    seed: int = 0
    noise_seed: int | None = None
    allow_off_grid: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.d < 5:
            raise ValueError("scenarios use the first five covariates; need d >= 5")
        if self.n < 1 or self.sigma < 0:
            raise ValueError("n must be positive and sigma non-negative")
        if not self.allow_off_grid:
            for name, grid in (("n", GRID_N), ("d", GRID_D), ("sigma", GRID_SIGMA)):
                if getattr(self, name) not in grid:
                    raise ValueError(f"{name}={getattr(self, name)} is off the grid {grid}; set allow_off_grid")


def scenario_grid(seed: int = 0) -> list[SyntheticConfig]:
    return [
        SyntheticConfig(s, n, d, sigma, seed)
        for s in SCENARIOS for n in GRID_N for d in GRID_D for sigma in GRID_SIGMA
    ]


def _softplus(a):
    return np.logaddexp(0.0, a)


def _expit(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def scenario_functions(scenario: str, x: np.ndarray):
    """Propensity ``e``, baseline ``b`` and effect ``tau`` for covariates ``x``."""
    x1, x2, x3, x4, x5 = (x[:, i] for i in range(5))
    if scenario == "A":
        s = np.sin(np.pi * x1 * x2)
        e = np.clip(s, 0.1, 0.9)
        b = s + 2.0 * (x3 - 0.5) ** 2 + x4 + 0.5 * x5
        tau = (x1 + x2) / 2.0
    elif scenario == "B":
        e = np.full(len(x1), 0.5)
        b = np.maximum.reduce([x1 + x2, x3, np.zeros_like(x1)]) + np.maximum(x4 + x5, 0.0)
        tau = x1 + _softplus(x2)
    elif scenario == "C":
        e = 1.0 / (1.0 + np.exp(x2 + x3))
        b = 2.0 * _softplus(x1 + x2 + x3)
        tau = np.ones(len(x1))
    elif scenario == "D":
        e = 1.0 / (1.0 + np.exp(-x1) + np.exp(-x2))
        b = 0.5 * (np.maximum(x1 + x2 + x3, 0.0) + np.maximum(x4 + x5, 0.0))
        tau = np.maximum(x1 + x2 + x3, 0.0) - np.maximum(x4 + x5, 0.0)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return e, b, tau


def _draw(cfg: SyntheticConfig, rng_struct, rng_noise) -> Dataset:
    n, d = cfg.n, cfg.d
    if cfg.scenario == "A":
        x = rng_struct.uniform(0.0, 1.0, size=(n, d))
    else:
        x = rng_struct.standard_normal((n, d))
    e, b, tau = scenario_functions(cfg.scenario, x)
    t = (rng_struct.uniform(size=n) < e).astype(np.float64)
    mu0 = b - 0.5 * tau
    mu1 = b + 0.5 * tau
    y = np.where(t == 1, mu1, mu0) + cfg.sigma * rng_noise.standard_normal(n)
    return Dataset(x, t, y, mu0, mu1, e)


def generate(cfg: SyntheticConfig) -> tuple[Dataset, Dataset]:
    """
    Draw a train set and an equally sized test set.

    Covariates and treatments come from the structural stream seeded by
    ``cfg.seed``; outcome noise from a separate stream (``cfg.noise_seed``
    when given), so ``mu0``/``mu1`` do not depend on the noise seed.
    """
    struct_ss, noise_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    if cfg.noise_seed is not None:
        noise_ss = np.random.SeedSequence([cfg.noise_seed, 1])
    rs, rn = np.random.default_rng(struct_ss), np.random.default_rng(noise_ss)
    return _draw(cfg, rs, rn), _draw(cfg, rs, rn)


# CSV ---------------------------------------------------------------------------

@dataclass
class CsvSchema:
    covariates: Sequence[str] | None = None  # None: every column not claimed below
    t: str = "t"
    y: str = "y"
    mu0: str | None = None
    mu1: str | None = None
    e_true: str | None = None
    exp: str | None = None

    def optional(self) -> dict[str, str]:
        return {k: getattr(self, k) for k in ("mu0", "mu1", "e_true", "exp") if getattr(self, k)}


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """
    Read a header-row CSV into a :class:`Dataset`.

    Errors name the file, 1-based line number and column of the offending
    cell.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    pos = {h: i for i, h in enumerate(header)}
    claimed = {schema.t, schema.y, *schema.optional().values()}
    covs = list(schema.covariates) if schema.covariates is not None else [h for h in header if h not in claimed]
    for col in [*covs, schema.t, schema.y, *schema.optional().values()]:
        if col not in pos:
            raise DataError(f"{path}: missing column {col!r}")
    wanted = covs + [schema.t, schema.y] + list(schema.optional().values())
    out = np.empty((len(rows), len(wanted)))
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != len(header):
            raise DataError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        for c, col in enumerate(wanted):
            cell = row[pos[col]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {line}, column {col!r}: non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}: line {line}, column {col!r}: non-finite value {cell!r}")
            out[r, c] = v
    k = len(covs)
    t = out[:, k]
    binary = [(k, schema.t)]
    if schema.exp:
        binary.append((k + 2 + list(schema.optional()).index("exp"), schema.exp))
    for col_idx, name in binary:
        bad = np.flatnonzero((out[:, col_idx] != 0) & (out[:, col_idx] != 1))
        if bad.size:
            raise DataError(f"{path}: line {bad[0] + 2}, column {name!r}: expected 0/1, got {out[bad[0], col_idx]:g}")
    extra = {key: out[:, k + 2 + i] for i, key in enumerate(schema.optional())}
    return Dataset(out[:, :k], t, out[:, k + 1], columns=tuple(covs), **extra)


IHDP_COLUMNS = 25


def load_ihdp_csv(path) -> Dataset:
    """
    Read one IHDP replication in the common headerless layout
    ``t, y_factual, y_cfactual, mu0, mu1, x1..x25``.

    The counterfactual column is ignored; effects are scored against
    ``mu1 - mu0``.
    """
    path = Path(path)
    try:
        raw = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if raw.shape[1] != 5 + IHDP_COLUMNS:
        raise DataError(f"{path}: expected {5 + IHDP_COLUMNS} columns, found {raw.shape[1]}")
    if not np.all(np.isfinite(raw)):
        raise DataError(f"{path}: non-finite values")
    return Dataset(raw[:, 5:], raw[:, 0], raw[:, 1], mu0=raw[:, 3], mu1=raw[:, 4])


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(ds: Dataset, path) -> None:
    """Write ``x.., t, y`` plus whichever of ``mu0, mu1, e_true, exp`` exist."""
    cols = list(ds.columns) + ["t", "y"]
    arrays = [ds.X[:, i] for i in range(ds.X.shape[1])] + [ds.t, ds.y]
    for name in ("mu0", "mu1", "e_true", "exp"):
        v = getattr(ds, name)
        if v is not None:
            cols.append(name)
            arrays.append(v)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*arrays):
            w.writerow([_fmt(v) for v in row])


def standard_schema(path) -> CsvSchema:
    """Schema for files written by :func:`write_csv`."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    present = set(header)
    return CsvSchema(
        t="t", y="y",
        **{k: k for k in ("mu0", "mu1", "e_true", "exp") if k in present},
    )


# splits ------------------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    n_val = math.floor(n * ratios[1])
    n_test = math.floor(n * ratios[2])
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split of {n} rows by {ratios} leaves an empty part")
    return n_train, n_val, n_test


def split_indices(n: int, ratios: Sequence[float], seed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_train, n_val, _ = split_sizes(n, ratios)
    perm = np.random.default_rng(seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split(ds: Dataset, ratios: Sequence[float], seed) -> tuple[Dataset, Dataset, Dataset]:
    """Uniform random train/val/test partition; val and test sizes are floored."""
    return tuple(ds.subset(idx) for idx in split_indices(len(ds), ratios, seed))
