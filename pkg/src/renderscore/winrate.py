"""Pairwise preference model over fidelity scores.

Given the metric reports of two candidates for the same reference page,
a logistic model on score differences predicts which one a human
reviewer would prefer.  Ships with a published coefficient set and can
be refit from annotated pairs.

Feature construction: each score dimension is z-normalized with the
model's stored statistics, the candidate-B vector is subtracted from
candidate-A's, and a bias is added.  A wins when the predicted
probability exceeds 0.5; exact ties count as losses for A.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "DEFAULT_DIMS",
    "TEXT_DIMS",
    "AnnotatedPair",
    "SimulationResult",
    "WinRateModel",
    "fit",
    "published_model",
    "sigmoid",
    "simulate_win_rate",
]

DEFAULT_DIMS = ("block_match", "position", "color", "visual")
TEXT_DIMS = ("block_match", "text", "position", "color", "visual")

# Reported four-feature coefficients (text excluded: it was not a
# significant preference driver in that variant).
_PUBLISHED_INTERCEPT = 0.5540
_PUBLISHED_COEFFICIENTS = {
    "block_match": 0.6238,
    "position": 0.7504,
    "color": 0.3443,
    "visual": 0.4630,
}
# Five-feature variant; its intercept was never reported.
_PUBLISHED_TEXT_COEFFICIENTS = {
    "block_match": 0.7429,
    "text": -0.3541,
    "position": 0.7605,
    "color": 0.3461,
    "visual": 0.4929,
}


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _metric_values(report, dims: Sequence[str]) -> np.ndarray:
    if isinstance(report, Mapping):
        return np.array([float(report[d]) for d in dims])
    return np.array([float(getattr(report, d)) for d in dims])


@dataclass(frozen=True)
class AnnotatedPair:
    """One human judgment: which of two candidates is the better copy."""

    a: object  # MetricReport or mapping of dimension -> score
    b: object
    winner: str  # "a" or "b"

    def __post_init__(self):
        if self.winner not in ("a", "b"):
            raise ValueError(f"winner must be 'a' or 'b', got {self.winner!r}")


@dataclass(frozen=True)
class WinRateModel:
    dims: tuple[str, ...]
    coefficients: tuple[float, ...]
    intercept: float
    norm_means: tuple[float, ...]
    norm_stds: tuple[float, ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.dims)
        if not (len(self.coefficients) == len(self.norm_means) == len(self.norm_stds) == n):
            raise ValueError("model arrays must all match the dimension count")
        if any(s <= 0 for s in self.norm_stds):
            raise ValueError("normalization stds must be positive")

    def features(self, report_a, report_b) -> np.ndarray:
        """z-normalized score delta (A minus B)."""
        means = np.array(self.norm_means)
        stds = np.array(self.norm_stds)
        za = (_metric_values(report_a, self.dims) - means) / stds
        zb = (_metric_values(report_b, self.dims) - means) / stds
        return za - zb

    def predict(self, report_a, report_b) -> float:
        """P(candidate A is preferred over candidate B)."""
        x = self.features(report_a, report_b)
        return sigmoid(float(np.dot(np.array(self.coefficients), x)) + self.intercept)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "coefficients": list(self.coefficients),
            "intercept": self.intercept,
            "norm_means": list(self.norm_means),
            "norm_stds": list(self.norm_stds),
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WinRateModel":
        return cls(
            dims=tuple(data["dims"]),
            coefficients=tuple(float(c) for c in data["coefficients"]),
            intercept=float(data["intercept"]),
            norm_means=tuple(float(m) for m in data["norm_means"]),
            norm_stds=tuple(float(s) for s in data["norm_stds"]),
            flags=tuple(data.get("flags", ())),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WinRateModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def published_model(include_text: bool = False) -> WinRateModel:
    """The reported coefficient set.

    The normalization statistics behind those coefficients were never
    released, so this model uses identity normalization and is flagged;
    rankings are meaningful, absolute probabilities less so.  The
    five-feature variant also shipped without an intercept.
    """
    table = _PUBLISHED_TEXT_COEFFICIENTS if include_text else _PUBLISHED_COEFFICIENTS
    dims = TEXT_DIMS if include_text else DEFAULT_DIMS
    flags = ["uncalibrated-normalization"]
    intercept = _PUBLISHED_INTERCEPT
    if include_text:
        intercept = 0.0
        flags.append("no-published-intercept")
    return WinRateModel(
        dims=dims,
        coefficients=tuple(table[d] for d in dims),
        intercept=intercept,
        norm_means=tuple(0.0 for _ in dims),
        norm_stds=tuple(1.0 for _ in dims),
        flags=tuple(flags),
    )


def fit(
    pairs: Sequence[AnnotatedPair],
    dims: Sequence[str] = DEFAULT_DIMS,
    *,
    max_iter: int = 100,
    tol: float = 1e-10,
) -> WinRateModel:
    """Fit a preference model to annotated pairs by Newton-Raphson.

    Normalization statistics are computed over all reports in the
    training set (both sides pooled).  Falls back to a small ridge term
    if the Hessian goes singular, flagging the model.
    """
    if len(pairs) < 2:
        raise ValueError("need at least two annotated pairs to fit")
    labels = {p.winner for p in pairs}
    if len(labels) < 2:
        raise ValueError("annotations are single-class; the fit would diverge")

    dims = tuple(dims)
    all_scores = np.array(
        [_metric_values(p.a, dims) for p in pairs] + [_metric_values(p.b, dims) for p in pairs]
    )
    means = all_scores.mean(axis=0)
    stds = all_scores.std(axis=0)
    stds[stds == 0] = 1.0

    za = (np.array([_metric_values(p.a, dims) for p in pairs]) - means) / stds
    zb = (np.array([_metric_values(p.b, dims) for p in pairs]) - means) / stds
    x = np.hstack([za - zb, np.ones((len(pairs), 1))])
    y = np.array([1.0 if p.winner == "a" else 0.0 for p in pairs])

    w = np.zeros(x.shape[1])
    flags = ["fitted"]
    ridge = 0.0
    converged = False
    for _ in range(max_iter):
        logits = x @ w
        probs = 1.0 / (1.0 + np.exp(-np.clip(logits, -500, 500)))
        gradient = x.T @ (y - probs)
        weights = probs * (1.0 - probs)
        hessian = (x * weights[:, None]).T @ x
        if ridge:
            hessian = hessian + ridge * np.eye(len(w))
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            if not ridge:
                ridge = 1e-8
                if "ridge-regularized" not in flags:
                    flags.append("ridge-regularized")
                continue
            ridge *= 10
            continue
        w = w + step
        if float(np.max(np.abs(step))) < tol:
            converged = True
            break
    if not converged:
        flags.append("not-converged")

    return WinRateModel(
        dims=dims,
        coefficients=tuple(float(c) for c in w[:-1]),
        intercept=float(w[-1]),
        norm_means=tuple(float(m) for m in means),
        norm_stds=tuple(float(s) for s in stds),
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class SimulationResult:
    win_rate: float
    probabilities: tuple[float, ...]
    wins: int
    total: int


def simulate_win_rate(model: WinRateModel, report_pairs: Sequence[tuple]) -> SimulationResult:
    """Fraction of pairs where A beats B (strictly p > 0.5; ties lose)."""
    if not report_pairs:
        raise ValueError("no report pairs to simulate")
    probs = [model.predict(a, b) for a, b in report_pairs]
    wins = sum(1 for p in probs if p > 0.5)
    return SimulationResult(
        win_rate=wins / len(probs),
        probabilities=tuple(probs),
        wins=wins,
        total=len(probs),
    )
