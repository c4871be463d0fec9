"""Estimate records, error bars, seed streams and CSV/JSON output."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ParameterError

CSV_FIELDS = ("observable", "a", "h", "params", "mean", "stderr", "n", "seed")


def stream_seed(seed: int, *key: int) -> int:
    """Deterministic 32-bit seed for the stream ``key`` of a global seed.

    Streams come from ``numpy.random.SeedSequence`` spawn keys, so the seed
    of a chain depends only on ``(seed, key)``, not on how many chains run.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def batch_stderr(x, n_batches: int = 50) -> float:
    """Standard error of the mean from non-overlapping batch means."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 2:
        return 0.0
    k = min(n_batches, n)
    per = n // k
    means = x[: k * per].reshape(k, per).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(k))


def jackknife(estimator, batches: np.ndarray):
    """Delete-one jackknife over the first axis of ``batches``.

    ``estimator`` maps a boolean batch mask to an array of estimates.
    Returns the bias-corrected estimate and its standard error.
    """
    nb = len(batches)
    full = np.asarray(estimator(np.ones(nb, dtype=bool)))
    jk = np.array([estimator(np.arange(nb) != b) for b in range(nb)])
    mean_jk = jk.mean(axis=0)
    err = np.sqrt((nb - 1) / nb * ((jk - mean_jk) ** 2).sum(axis=0))
    return nb * full - (nb - 1) * mean_jk, err


def _plain(v):
    if isinstance(v, Fraction):
        return str(v) if v.denominator != 1 else int(v)
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


@dataclass
class EstimateRecord:
    """A Monte Carlo (or exact) estimate with its parameters."""

    observable: str
    params: dict
    mean: float
    stderr: float
    n_samples: int
    seed: int
    wall_time: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.stderr >= 0:
            raise ParameterError(f"stderr must be non-negative, got {self.stderr}")
        if self.n_samples < 1:
            raise ParameterError("n_samples must be at least 1")

    def to_row(self) -> list:
        """CSV row; wall time is excluded so that reruns are byte-identical."""
        p = {k: v for k, v in self.params.items() if k not in ("a", "h")}
        return [self.observable, _plain(self.params.get("a", "")), _plain(self.params.get("h", "")),
                json.dumps(_plain(p), sort_keys=True, separators=(",", ":")),
                f"{self.mean:.12g}", f"{self.stderr:.12g}", self.n_samples, self.seed]

    def to_dict(self) -> dict:
        return {"observable": self.observable, "params": _plain(self.params),
                "mean": self.mean, "stderr": self.stderr, "n": self.n_samples,
                "seed": self.seed}


def records_csv(records, header_lines=()) -> str:
    """CSV text with ``#``-prefixed header lines followed by the rows."""
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow(r.to_row())
    return buf.getvalue()


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, fixed float formatting)."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, default=_plain) + "\n"
