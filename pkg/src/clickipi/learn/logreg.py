"""L2-regularized, optionally cost-sensitive logistic regression.

Binary problems fit one model; more classes are fitted one-vs-rest and their
sigmoid scores are normalized to probabilities. The bias is not penalized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

DEFAULT_LAMBDA = 1.0
MAX_ITER = 500
GRAD_TOL = 1e-6


class LogRegError(ValueError):
    pass


def objective(params: np.ndarray, X, y: np.ndarray, sample_weight: np.ndarray, lam: float, XT=None) -> tuple[float, np.ndarray]:
    """Weighted negative log-likelihood plus ``lam / 2 * ||w||^2`` and its gradient.

    ``params`` is ``[w_1 .. w_d, bias]``; ``y`` holds 0/1 targets. ``XT`` may
    carry a precomputed transpose of ``X``.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    nll = np.logaddexp(0.0, z) - y * z
    f = float(sample_weight @ nll) + 0.5 * lam * float(w @ w)
    r = sample_weight * (expit(z) - y)
    grad = np.empty_like(params)
    grad[:-1] = (X.T if XT is None else XT) @ r + lam * w
    grad[-1] = r.sum()
    return f, grad


@dataclass
class FitTrace:
    objective: list[float] = field(default_factory=list)
    grad_norm: float = float("nan")
    n_iter: int = 0
    converged: bool = False


def fit_binary(X, y: np.ndarray, sample_weight: np.ndarray, lam: float,
               max_iter: int = MAX_ITER, tol: float = GRAD_TOL) -> tuple[np.ndarray, float, FitTrace]:
    """Minimize :func:`objective` with L-BFGS from zero weights."""
    d = X.shape[1]
    XT = X.T.tocsr() if sparse.issparse(X) else X.T
    x0 = np.zeros(d + 1)
    trace = FitTrace()
    last: dict = {}

    def fun(params):
        f, g = objective(params, X, y, sample_weight, lam, XT)
        last["x"], last["f"] = params.copy(), f
        return f, g

    trace.objective.append(fun(x0)[0])

    def record(xk):
        if not np.array_equal(xk, last["x"]):
            fun(xk)
        trace.objective.append(last["f"])

    res = optimize.minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=record,
        # scipy tests the max-norm; scaling keeps the 2-norm under ``tol``
        options={"maxiter": max_iter, "gtol": tol / np.sqrt(d + 1), "ftol": 1e-15, "maxcor": 20},
    )
    grad = objective(res.x, X, y, sample_weight, lam, XT)[1]
    trace.grad_norm = float(np.linalg.norm(grad))
    trace.n_iter = int(res.nit)
    trace.converged = trace.grad_norm <= tol
    return res.x[:-1].copy(), float(res.x[-1]), trace


def class_costs_for(labels: Sequence[str], scheme) -> dict[str, float]:
    """Per-class cost: ``None`` -> 1, ``"balanced"`` -> N / (K * N_k), or an explicit mapping."""
    classes = sorted(set(labels))
    if scheme is None:
        return {c: 1.0 for c in classes}
    if scheme == "balanced":
        counts = {c: 0 for c in classes}
        for lab in labels:
            counts[lab] += 1
        n, k = len(labels), len(classes)
        return {c: n / (k * counts[c]) for c in classes}
    costs = {c: float(scheme.get(c, 1.0)) for c in classes}
    if any(v <= 0 for v in costs.values()):
        raise LogRegError("class costs must be positive")
    return costs


@dataclass
class LogRegModel:
    classes: list[str]
    feature_names: list[str]
    coef: np.ndarray  # (n_models, d); one row for binary problems
    intercept: np.ndarray  # (n_models,)
    lam: float
    class_costs: dict[str, float]
    seed: int = 0
    traces: list[FitTrace] = field(default_factory=list, repr=False)

    @property
    def binary(self) -> bool:
        return len(self.classes) == 2

    def decision(self, X) -> np.ndarray:
        return np.asarray(X @ self.coef.T) + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        scores = self.decision(X)
        if self.binary:
            p1 = expit(scores[:, 0])
            return np.column_stack([1.0 - p1, p1])
        probs = expit(scores)
        total = np.broadcast_to(probs.sum(axis=1, keepdims=True), probs.shape)
        # every sigmoid underflowing to 0 leaves no preference
        uniform = np.full_like(probs, 1.0 / len(self.classes))
        return np.divide(probs, total, out=uniform, where=total > 0)

    def predict(self, X) -> list[str]:
        idx = np.argmax(self.predict_proba(X), axis=1)
        return [self.classes[i] for i in idx]

    def class_weights(self, cls: str) -> dict[str, float]:
        """Signed feature weights pointing toward ``cls``."""
        k = self.classes.index(cls)
        row = (self.coef[0] if k == 1 else -self.coef[0]) if self.binary else self.coef[k]
        return dict(zip(self.feature_names, map(float, row)))

    def class_bias(self, cls: str) -> float:
        k = self.classes.index(cls)
        if self.binary:
            return float(self.intercept[0] if k == 1 else -self.intercept[0])
        return float(self.intercept[k])

    def top_features(self, cls: str, k: int = 10) -> list[tuple[str, float]]:
        weights = self.class_weights(cls)
        return sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:k]

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "lambda": self.lam,
            "class_costs": self.class_costs,
            "seed": self.seed,
            "bias": {c: self.class_bias(c) for c in self.classes},
            "weights": {c: self.class_weights(c) for c in self.classes},
            "feature_names": self.feature_names,
        }

    def save(self, path) -> None:
        from ..tables import write_json

        write_json(path, self.to_dict())

    @classmethod
    def from_dict(cls, payload: Mapping) -> "LogRegModel":
        classes = list(payload["classes"])
        names = list(payload["feature_names"])
        if len(classes) == 2:
            w = payload["weights"][classes[1]]
            coef = np.array([[w[n] for n in names]])
            intercept = np.array([payload["bias"][classes[1]]])
        else:
            coef = np.array([[payload["weights"][c][n] for n in names] for c in classes])
            intercept = np.array([payload["bias"][c] for c in classes])
        return cls(classes, names, coef, intercept, float(payload["lambda"]),
                   dict(payload["class_costs"]), int(payload["seed"]))

    @classmethod
    def load(cls, path) -> "LogRegModel":
        with open(path, encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def train_logreg(
    X,
    y: Sequence[str],
    lam: float = DEFAULT_LAMBDA,
    class_costs=None,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
    max_iter: int = MAX_ITER,
    tol: float = GRAD_TOL,
) -> LogRegModel:
    """Fit the model; deterministic (zero start, batch quasi-Newton)."""
    if lam < 0:
        raise LogRegError("lambda must be >= 0")
    y = [str(v) for v in y]
    classes = sorted(set(y))
    if len(classes) < 2:
        raise LogRegError(f"need at least 2 classes to train, got {classes}")
    X = sparse.csr_matrix(X, dtype=np.float64) if sparse.issparse(X) else np.asarray(X, dtype=np.float64)
    if X.shape[0] != len(y):
        raise LogRegError("X and y have different lengths")
    data = X.data if sparse.issparse(X) else X
    if not np.all(np.isfinite(data)):
        raise LogRegError("features must be finite")
    costs = class_costs_for(y, class_costs)
    sample_weight = np.array([costs[v] for v in y])
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]

    targets = [classes[1]] if len(classes) == 2 else classes
    coef, intercept, traces = [], [], []
    y_arr = np.array(y)
    for cls in targets:
        w, b, trace = fit_binary(X, (y_arr == cls).astype(np.float64), sample_weight, lam, max_iter, tol)
        coef.append(w)
        intercept.append(b)
        traces.append(trace)
    return LogRegModel(classes, names, np.vstack(coef), np.array(intercept), lam, costs, seed, traces)
