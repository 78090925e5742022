"""Time-to-solution statistics: posteriors, bootstrap errors, scaling fits, distances."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "P_DESIRED",
    "SuccessPosterior",
    "TtsPoint",
    "ScalingFit",
    "EnvelopePoint",
    "runs_to_solution",
    "tts",
    "hfs_tts",
    "speedup_ratio",
    "percentile",
    "bootstrap_statistic",
    "ratio_error",
    "scaling_fit",
    "slope_difference",
    "euclid_distance",
    "half_instance_distance",
    "pearson",
    "optimal_envelope",
    "format_table",
    "write_table",
    "cell_seed",
]

P_DESIRED = 0.99


@dataclass(frozen=True)
class SuccessPosterior:
    """Beta(x + 1/2, r - x + 1/2) belief about a success probability (Jeffreys prior)."""

    successes: int
    runs: int

    def __post_init__(self):
        if not 0 <= self.successes <= self.runs or self.runs < 0:
            raise ValueError(f"need 0 <= successes <= runs, got {self.successes}/{self.runs}")

    @property
    def a(self) -> float:
        return self.successes + 0.5

    @property
    def b(self) -> float:
        return self.runs - self.successes + 0.5

    @property
    def mean(self) -> float:
        return (self.successes + 0.5) / (self.runs + 1)

    def sample(self, rng, size=None):
        return rng.beta(self.a, self.b, size)


@dataclass(frozen=True)
class TtsPoint:
    L: int
    alpha: float
    q: float
    tts: float
    ci_low: float
    ci_high: float


def runs_to_solution(p, p_d: float = P_DESIRED):
    """Expected runs to see a success with probability ``p_d``: ln(1-p_d)/ln(1-p).

    Not rounded up. Vectorized over ``p``.
    """
    if not 0 < p_d < 1:
        raise ValueError("p_d must lie strictly between 0 and 1")
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise ValueError("p must lie strictly between 0 and 1; use a posterior mean")
    r = math.log1p(-p_d) / np.log1p(-p_arr)
    return float(r) if np.ndim(r) == 0 else r


def tts(r, tau_per_run: float):
    if tau_per_run <= 0:
        raise ValueError("tau_per_run must be positive")
    return r * tau_per_run


def hfs_tts(successes: int, runs: int, mean_time_us: float) -> float:
    """Mean model time to the first success for a repeat-until-success driver.

    With per-execution success probability ``p`` (posterior mean) and mean
    execution time ``t``, executions form a renewal process and the expected
    time to the first success is ``t / p``.
    """
    return mean_time_us / SuccessPosterior(successes, runs).mean


def speedup_ratio(tts_x, tts_ref):
    if np.any(np.asarray(tts_x) <= 0) or np.any(np.asarray(tts_ref) <= 0):
        raise ValueError("TTS values must be positive")
    return np.asarray(tts_x) / np.asarray(tts_ref) if np.ndim(tts_x) else tts_x / tts_ref


def percentile(values, q: float, axis=-1):
    """Quantile with a fixed convention.

    Odd-length samples give an exact order statistic (the ceil(q n)-th
    smallest); even-length samples interpolate linearly between ranks.
    """
    values = np.asarray(values, dtype=float)
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    n = values.shape[axis]
    method = "inverted_cdf" if n % 2 else "linear"
    return np.quantile(values, q, axis=axis, method=method)


def _clip_open(p):
    return np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def bootstrap_statistic(
    posteriors: Sequence[SuccessPosterior],
    q: float = 0.5,
    tau=1.0,
    resamples: int = 1000,
    seed=None,
    p_d: float = P_DESIRED,
    statistic: Callable[[np.ndarray], np.ndarray] | None = None,
):
    """Bootstrap mean and standard deviation of a quantile of per-instance TTS.

    Each resample draws the instances with replacement and one success
    probability per drawn instance from its posterior. By default the
    statistic is the ``q``-quantile of ``r(p) * tau``; ``tau`` may be a
    per-instance array. ``statistic`` overrides this and receives the
    ``(resamples, n)`` probability draws together with the drawn indices.
    """
    n = len(posteriors)
    if n < 2:
        raise ValueError("need at least 2 instances")
    if resamples < 100:
        raise ValueError("need at least 100 resamples")
    rng = np.random.default_rng(seed)
    a = np.array([p.a for p in posteriors])
    b = np.array([p.b for p in posteriors])
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
    idx = rng.integers(n, size=(resamples, n))
    p = _clip_open(rng.beta(a[idx], b[idx]))
    if statistic is not None:
        vals = np.asarray(statistic(p, idx), dtype=float)
    else:
        vals = percentile(math.log1p(-p_d) / np.log1p(-p) * tau[idx], q, axis=1)
    return float(vals.mean()), float(vals.std(ddof=1))


def ratio_error(a, b, samples: int = 1000, seed=None):
    """Mean and spread of ``a / b`` for independent normals ``a=(mu, sigma)``, ``b=(mu, sigma)``."""
    if a[0] <= 0 or b[0] <= 0:
        raise ValueError("means must be positive")
    rng = np.random.default_rng(seed)
    ra = rng.normal(a[0], a[1], samples)
    rb = rng.normal(b[0], b[1], samples)
    ratio = ra / rb
    return float(ratio.mean()), float(ratio.std(ddof=1))


@dataclass(frozen=True)
class ScalingFit:
    """``ln r = a + b L`` fitted over ``L >= L_min``."""

    a: float
    b: float
    covariance: np.ndarray
    residuals: np.ndarray
    L_min: int

    @property
    def sigma_a(self) -> float:
        return float(math.sqrt(self.covariance[0, 0]))

    @property
    def sigma_b(self) -> float:
        return float(math.sqrt(self.covariance[1, 1]))

    def predict(self, L):
        return np.exp(self.a + self.b * np.asarray(L, dtype=float))


def scaling_fit(L, r, sigma_r=None, L_min: int = 4) -> ScalingFit:
    """Least-squares fit of ``ln r`` against ``L``.

    With ``sigma_r`` (standard errors of ``r``) the fit is weighted by
    ``sigma_ln_r = sigma_r / r`` and the covariance uses those errors as
    absolute; otherwise it is scaled by the residual variance.
    """
    L = np.asarray(L, dtype=float)
    r = np.asarray(r, dtype=float)
    if L.shape != r.shape:
        raise ValueError("L and r must have the same length")
    keep = L >= L_min
    L, r = L[keep], r[keep]
    if np.unique(L).size < 3:
        raise ValueError("need at least 3 distinct L values >= L_min")
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    y = np.log(r)
    X = np.column_stack([np.ones_like(L), L])
    if sigma_r is not None:
        s = np.asarray(sigma_r, dtype=float)[keep] / r
        w = 1.0 / s
        coef, *_ = np.linalg.lstsq(X * w[:, None], y * w, rcond=None)
        cov = np.linalg.inv((X * (w**2)[:, None]).T @ X)
    else:
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        dof = len(y) - 2
        s2 = float(resid @ resid) / dof if dof > 0 else 0.0
        cov = s2 * np.linalg.inv(X.T @ X)
    return ScalingFit(
        a=float(coef[0]),
        b=float(coef[1]),
        covariance=cov,
        residuals=y - X @ coef,
        L_min=L_min,
    )


def slope_difference(fit_x: ScalingFit, fit_ref: ScalingFit, samples: int = 1000, seed=None):
    """Mean and standard deviation of ``b_x - b_ref`` from normal draws of each slope."""
    rng = np.random.default_rng(seed)
    d = rng.normal(fit_x.b, fit_x.sigma_b, samples) - rng.normal(fit_ref.b, fit_ref.sigma_b, samples)
    return float(d.mean()), float(d.std(ddof=1))


def euclid_distance(p1, p2, convention: str = "rms") -> float:
    """Distance between two success-probability vectors (same instance order).

    ``"rms"`` divides the norm by sqrt(M), ``"literal"`` by M.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape or p1.ndim != 1 or p1.size == 0:
        raise ValueError("need two non-empty vectors of equal length")
    norm = float(np.linalg.norm(p1 - p2))
    if convention == "rms":
        return norm / math.sqrt(p1.size)
    if convention == "literal":
        return norm / p1.size
    raise ValueError(f"unknown convention {convention!r}")


def half_instance_distance(p1, p2, boots: int = 100, seed=None, convention: str = "rms"):
    """Mean and standard deviation of the distance over random halves of the instances."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise ValueError("length mismatch")
    rng = np.random.default_rng(seed)
    m = max(p1.size // 2, 1)
    d = []
    for _ in range(boots):
        pick = np.sort(rng.choice(p1.size, m, replace=False))
        d.append(euclid_distance(p1[pick], p2[pick], convention))
    return float(np.mean(d)), float(np.std(d, ddof=1))


def pearson(xs, ys) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("zero-variance input")
    x = x - x.mean()
    y = y - y.mean()
    return float(np.clip((x @ y) / math.sqrt((x @ x) * (y @ y)), -1.0, 1.0))


@dataclass(frozen=True)
class EnvelopePoint:
    sweeps: int
    tts: float
    bracketed: bool


def optimal_envelope(tts_by_sweeps: Mapping[int, Mapping]) -> dict:
    """Per key (e.g. ``L``), the sweep count with the lowest TTS.

    ``tts_by_sweeps[sweeps][key]`` is a number or a :class:`TtsPoint`. An
    optimum at the smallest or largest tested sweep count is reported with
    ``bracketed=False``.
    """
    ladder = sorted(tts_by_sweeps)
    keys = sorted({k for s in ladder for k in tts_by_sweeps[s]})
    out = {}
    for k in keys:
        pts = [(s, tts_by_sweeps[s][k]) for s in ladder if k in tts_by_sweeps[s]]
        if len(pts) < 2:
            raise ValueError(f"need at least 2 sweep settings for {k!r}")
        vals = [(s, v.tts if isinstance(v, TtsPoint) else float(v)) for s, v in pts]
        s_best, t_best = min(vals, key=lambda sv: (sv[1], sv[0]))
        out[k] = EnvelopePoint(s_best, t_best, vals[0][0] < s_best < vals[-1][0])
    return out


def cell_seed(master_seed: int, *labels) -> int:
    """Deterministic seed for one analysis cell."""
    words = [int(master_seed)]
    for lab in labels:
        words.append(int.from_bytes(hashlib.sha256(str(lab).encode()).digest()[:4], "little"))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def format_table(columns: Sequence[str], rows, source_hash: str, title: str = "") -> str:
    lines = []
    if title:
        lines.append(f"# {title}")
    lines.append(f"# records-sha256 {source_hash}")
    lines.append("\t".join(columns))
    lines.extend("\t".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_table(path, columns, rows, source_hash: str, title: str = "") -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_table(columns, rows, source_hash, title))
