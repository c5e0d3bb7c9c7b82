"""Rank-1 lattice rules, random shifts and Monte Carlo sampling over parameter boxes."""

from __future__ import annotations

import csv
import enum
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_Z = (1, 127)
# first components of a published embedded lattice sequence for N = 2^m
EMBEDDED_Z = (1, 182667)
DEFAULT_Q = 16
DEFAULT_SEED = 20240607


class Sampler(enum.Enum):
    MC = "mc"
    LATTICE = "lattice"
    SHIFTED_LATTICE = "shifted_lattice"


@dataclass(frozen=True)
class LatticeRule:
    N: int
    z: tuple

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if len(self.z) < 1:
            raise ValueError("empty generating vector")

    @property
    def s(self) -> int:
        return len(self.z)

    def points(self) -> np.ndarray:
        return lattice_points(self.N, self.z)


def lattice_points(N: int, z: Sequence[int]) -> np.ndarray:
    """``{k z / N}`` for ``k = 0..N-1``, computed in integer arithmetic."""
    if N < 1:
        raise ValueError("N must be positive")
    z = np.asarray(z, dtype=np.int64)
    k = np.arange(N, dtype=np.int64)[:, None]
    return ((k * (z % N)[None, :]) % N) / float(N)


def shift_and_wrap(points, delta) -> np.ndarray:
    """``{t + delta}`` componentwise, kept inside ``[0, 1)``."""
    out = np.mod(np.asarray(points, dtype=float) + np.asarray(delta, dtype=float), 1.0)
    out[out >= 1.0] = 0.0  # rounding of values just below an integer
    return out


def map_to_box(points, box) -> np.ndarray:
    """Affine map of unit-cube points onto ``prod [a_i, b_i]``."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    a, b = box[:, 0], box[:, 1]
    if np.any(b <= a):
        raise ValueError(f"degenerate box {box.tolist()}")
    return a + np.asarray(points, dtype=float) * (b - a)


def mc_points(N: int, seed: int, s: int = 2) -> np.ndarray:
    """Pseudo-random uniform points; the first rows agree for any ``N``."""
    if N < 1:
        raise ValueError("N must be positive")
    return np.random.default_rng(seed).random((N, s))


def random_shifts(q: int, seed: int, s: int = 2) -> np.ndarray:
    return np.random.default_rng(seed).random((q, s))


@dataclass
class Estimate:
    """Per-QoI sample statistics of one sampler run."""

    sampler: Sampler
    N: int
    q: int
    names: list
    mean: np.ndarray
    variance: np.ndarray
    rms: np.ndarray | None = None
    shift_means: np.ndarray | None = None
    n_failed: int = 0
    values: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {}
        for i, n in enumerate(self.names):
            out[n] = {"mean": float(self.mean[i]), "variance": float(self.variance[i])}
            if self.rms is not None:
                out[n]["rms"] = float(self.rms[i])
        return out


def shifted_statistics(shift_means) -> tuple[np.ndarray, np.ndarray]:
    """Grand mean over shifts and ``sqrt(sum_j (Q_j - Q)^2 / (q - 1))``."""
    sm = np.asarray(shift_means, dtype=float)
    if sm.ndim == 1:
        sm = sm[:, None]
    q = sm.shape[0]
    grand = sm.mean(axis=0)
    if q < 2:
        return grand, np.zeros_like(grand)
    return grand, np.sqrt(((sm - grand) ** 2).sum(axis=0) / (q - 1))


def _as_values(res) -> np.ndarray:
    return np.atleast_1d(np.asarray(res, dtype=float))


class Evaluator:
    """Evaluate a QoI function at parameter points with caching.

    Points are keyed by their exact float coordinates, so nested point sets
    (lattices with ``N = 2^m`` and a fixed ``z``, prefixes of a seeded MC
    stream) reuse earlier solves.  Failing samples (exception or non-finite
    value) are stored as NaN.
    """

    def __init__(self, fn: Callable, jobs: int = 1):
        self.fn = fn
        self.jobs = max(1, int(jobs))
        self.cache: dict = {}

    def __call__(self, params: np.ndarray) -> np.ndarray:
        params = np.atleast_2d(np.asarray(params, dtype=float))
        keys = [tuple(p) for p in params]
        todo = list(dict.fromkeys(k for k in keys if k not in self.cache))
        if todo:
            if self.jobs > 1 and len(todo) > 1:
                with ProcessPoolExecutor(self.jobs) as ex:
                    results = list(ex.map(_safe_call, [self.fn] * len(todo), todo, chunksize=4))
            else:
                results = [_safe_call(self.fn, k) for k in todo]
            for k, r in zip(todo, results):
                self.cache[k] = r
        return _stack([self.cache[k] for k in keys])


def _safe_call(fn, point):
    try:
        v = _as_values(fn(np.asarray(point)))
    except Exception:  # noqa: BLE001 - failures are counted, not raised
        return None
    return v


def _stack(results):
    width = next((len(r) for r in results if r is not None), 1)
    out = np.full((len(results), width), np.nan)
    for i, r in enumerate(results):
        if r is not None and np.all(np.isfinite(r)):
            out[i] = r
    return out


def _sample_stats(vals):
    ok = np.all(np.isfinite(vals), axis=1)
    good = vals[ok]
    n_failed = int((~ok).sum())
    if len(good) == 0:
        nan = np.full(vals.shape[1], np.nan)
        return nan, nan, n_failed
    mean = good.mean(axis=0)
    var = good.var(axis=0, ddof=1) if len(good) > 1 else np.zeros(vals.shape[1])
    return mean, var, n_failed


def estimate(fn, sampler: Sampler | str, N: int, box, *, z=DEFAULT_Z, q: int = DEFAULT_Q,
             seed: int = DEFAULT_SEED, names=None, evaluator: Evaluator | None = None,
             jobs: int = 1) -> Estimate:
    """Sample means and variances of ``fn(omega)`` over ``box``.

    ``fn`` maps a parameter point to a scalar or a vector of QoIs.  For
    ``SHIFTED_LATTICE`` the estimate averages ``q`` shifted copies (``q N``
    evaluations) and adds the root-mean-square error estimate; its
    ``variance`` is the per-sample variance pooled over all ``q N`` points.
    """
    sampler = Sampler(sampler)
    ev = evaluator or Evaluator(fn, jobs)
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    s = box.shape[0]

    def evaluate(unit_pts):
        return ev(map_to_box(unit_pts, box))

    if sampler is Sampler.MC:
        vals = evaluate(mc_points(N, seed, s))
    elif sampler is Sampler.LATTICE:
        vals = evaluate(lattice_points(N, z))
    else:
        base = lattice_points(N, z)
        shifts = random_shifts(q, seed, s)
        per = [evaluate(shift_and_wrap(base, d)) for d in shifts]
        vals = np.vstack(per)
        shift_means = []
        for v in per:
            m, _, _ = _sample_stats(v)
            shift_means.append(m)
        shift_means = np.array(shift_means)
        grand, rms = shifted_statistics(shift_means)
        _, var, nf = _sample_stats(vals)
        _warn(nf, len(vals))
        names = names or [f"q{i}" for i in range(vals.shape[1])]
        return Estimate(sampler, N, q, list(names), grand, var, rms, shift_means, nf, vals)

    mean, var, nf = _sample_stats(vals)
    _warn(nf, len(vals))
    names = names or [f"q{i}" for i in range(vals.shape[1])]
    return Estimate(sampler, N, 1, list(names), mean, var, None, None, nf, vals)


def _warn(n_failed, total):
    if n_failed:
        warnings.warn(f"{n_failed} of {total} samples failed and were excluded", RuntimeWarning,
                      stacklevel=3)


@dataclass
class StudyRow:
    sampler: str
    N: int
    q: int
    qoi: str
    mean: float
    variance: float
    abs_error: float
    rel_error: float
    var_abs_error: float
    var_rel_error: float
    rms: float
    n_failed: int


CSV_COLUMNS = ["sampler", "N", "q", "qoi", "mean", "variance", "abs_error", "rel_error",
               "var_abs_error", "var_rel_error", "rms", "n_failed"]


def convergence_study(fn, sampler, N_list, box, *, reference: Estimate | None = None,
                      z=DEFAULT_Z, q: int = DEFAULT_Q, seed: int = DEFAULT_SEED, names=None,
                      evaluator: Evaluator | None = None, jobs: int = 1):
    """Errors of mean and variance estimates against a reference estimate.

    Without ``reference`` the estimate at the largest N of the list is used,
    so its own error is zero.  Returns ``(rows, estimates)``.
    """
    N_list = sorted(int(n) for n in N_list)
    ev = evaluator or Evaluator(fn, jobs)
    ests = [estimate(fn, sampler, N, box, z=z, q=q, seed=seed, names=names, evaluator=ev)
            for N in N_list]
    ref = reference or ests[-1]
    rows = []
    for est in ests:
        for i, name in enumerate(est.names):
            ae = abs(est.mean[i] - ref.mean[i])
            ve = abs(est.variance[i] - ref.variance[i])
            rows.append(StudyRow(
                Sampler(sampler).value, est.N, est.q, name, float(est.mean[i]), float(est.variance[i]),
                float(ae), float(ae / abs(ref.mean[i])) if ref.mean[i] != 0 else float("nan"),
                float(ve), float(ve / abs(ref.variance[i])) if ref.variance[i] != 0 else float("nan"),
                float(est.rms[i]) if est.rms is not None else float("nan"), est.n_failed))
    return rows, ests


def write_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([getattr(r, c) if not isinstance(getattr(r, c), float)
                        else repr(getattr(r, c)) for c in CSV_COLUMNS])


def loglog_slope(N, err) -> float:
    """Least-squares slope of ``log err`` against ``log N`` over positive errors."""
    N = np.asarray(N, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = err > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(N[ok]), np.log(err[ok]), 1)[0])


def product_integrand(t) -> float:
    """``t_1 t_2 ... t_s``; its integral over the unit cube is ``2^-s``."""
    return float(np.prod(np.asarray(t, dtype=float)))
