"""Weekly dropout survival: person-week records, Cox fit, two-sample z-tests."""

from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from . import kernels
from .binning import HIGH
from .ingest import VideoMeta
from .tables import read_csv, write_csv

DEFAULT_COVARIATES = ("ipi_z", "rewatch", "vpp")
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100


class SurvivalError(ValueError):
    pass


@dataclass
class PersonWeek:
    student_id: str
    week: int
    event: int
    covariates: dict[str, float]


@dataclass
class CoxModel:
    names: list[str]
    beta: np.ndarray
    se: np.ndarray
    hazard_ratio: np.ndarray
    p_value: np.ndarray
    loglik: float
    converged: bool
    n_iter: int
    loglik_path: list[float] = field(default_factory=list)
    n_events: int = 0
    n_records: int = 0

    def rows(self) -> list[tuple]:
        return [
            (name, float(b), float(s), float(hr), float(p))
            for name, b, s, hr, p in zip(self.names, self.beta, self.se, self.hazard_ratio, self.p_value)
        ]


def build_person_weeks(
    records,
    meta: Sequence[VideoMeta],
    final_week: int | None = None,
) -> list[PersonWeek]:
    """One row per student and week from first to last active week.

    ``records`` are per (student, video) engagement records. Weekly covariates
    average the week's records: IPI (later standardized over all rows), the
    Rewatch level as 0/1, and play proportion as a fraction. Weeks with no
    viewing inside the active span carry the previous week's values. The
    event flag is 1 on the last active week unless that week is the course's
    final week.
    """
    week_of = {m.video_id: m.week_index for m in meta}
    if final_week is None:
        final_week = max(week_of.values())
    per_student: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for r in records:
        if r.video_id not in week_of:
            raise SurvivalError(f"video {r.video_id} has no week in the metadata")
        per_student[r.student_id][week_of[r.video_id]].append(r)

    rows: list[PersonWeek] = []
    for student in sorted(per_student):
        weeks = per_student[student]
        first, last = min(weeks), max(weeks)
        prev = None
        for week in range(first, last + 1):
            recs = weeks.get(week)
            if recs:
                cov = {
                    "ipi": float(np.mean([r.ipi for r in recs])),
                    "rewatch": float(np.mean([r.levels["Rewatch"] == HIGH for r in recs])),
                    "vpp": float(np.mean([r.play_proportion_pct for r in recs])) / 100.0,
                }
            else:
                cov = dict(prev)
            prev = cov
            event = int(week == last and last < final_week)
            rows.append(PersonWeek(student, week, event, cov))

    ipi = np.array([r.covariates["ipi"] for r in rows])
    mu, sd = ipi.mean(), ipi.std()
    for r, value in zip(rows, ipi):
        r.covariates["ipi_z"] = float((value - mu) / sd) if sd > 0 else 0.0
    return rows


def person_week_arrays(rows: Sequence[PersonWeek], names: Sequence[str]):
    X = np.array([[r.covariates[n] for n in names] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
    stop = np.array([r.week for r in rows], dtype=np.float64)
    event = np.array([r.event for r in rows], dtype=np.int64)
    return X, stop - 1.0, stop, event


def _check_identifiable(X: np.ndarray, names: Sequence[str]) -> None:
    for j, name in enumerate(names):
        if np.ptp(X[:, j]) == 0:
            raise SurvivalError(f"covariate {name!r} is constant; information matrix is singular")
    centered = X - X.mean(axis=0)
    for j in range(1, X.shape[1] + 1):
        if np.linalg.matrix_rank(centered[:, :j]) < j:
            raise SurvivalError(f"covariate {names[j - 1]!r} is collinear with earlier covariates")


def fit_cox_arrays(
    X,
    start,
    stop,
    event,
    names: Sequence[str] | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> CoxModel:
    """Newton-Raphson with step halving on the Breslow partial likelihood."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    event = np.asarray(event, dtype=np.int64)
    if not event.any():
        raise SurvivalError("no events; the partial likelihood is flat")
    _check_identifiable(X, names)

    beta = np.zeros(X.shape[1])
    ll, grad, hess = kernels.cox_loglik_grad_hess(X, start, stop, event, beta)
    path = [ll]
    n_iter = 0
    while np.linalg.norm(grad) > tol and n_iter < max_iter:
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            raise SurvivalError("information matrix is singular") from None
        # near the optimum the predicted gain drops below the rounding noise of
        # the log likelihood; the full Newton step is then taken as is
        flat = float(grad @ step) <= 1e-12 * (1.0 + abs(ll))
        scale = 1.0
        for _ in range(60):
            cand = beta + scale * step
            ll_new, g_new, h_new = kernels.cox_loglik_grad_hess(X, start, stop, event, cand)
            if ll_new >= ll or flat:
                break
            scale *= 0.5
        else:
            break  # no ascent left at machine precision
        beta, ll, grad, hess = cand, ll_new, g_new, h_new
        path.append(ll)
        n_iter += 1
    converged = bool(np.linalg.norm(grad) <= tol)

    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError:
        raise SurvivalError("information matrix is singular at the optimum") from None
    se = np.sqrt(np.diag(cov))
    z = beta / se
    return CoxModel(
        names=names,
        beta=beta,
        se=se,
        hazard_ratio=np.exp(beta),
        p_value=2.0 * norm.sf(np.abs(z)),
        loglik=ll,
        converged=converged,
        n_iter=n_iter,
        loglik_path=path,
        n_events=int(event.sum()),
        n_records=len(event),
    )


def fit_cox(rows: Sequence[PersonWeek], covariates: Sequence[str] = DEFAULT_COVARIATES) -> CoxModel:
    if not rows:
        raise SurvivalError("no person-week records")
    X, start, stop, event = person_week_arrays(rows, covariates)
    return fit_cox_arrays(X, start, stop, event, covariates)


@dataclass(frozen=True)
class ZTest:
    z: float
    p: float
    n_a: int
    n_b: int
    mean_a: float
    mean_b: float


def two_sample_z(a: Sequence[float], b: Sequence[float]) -> ZTest:
    """Difference of means over its large-sample standard error; two-sided normal p."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise SurvivalError("each sample needs at least 2 values")
    if min(len(a), len(b)) < 30:
        warnings.warn(f"z-test on small samples ({len(a)}, {len(b)}); normal approximation is rough", stacklevel=2)
    diff = a.mean() - b.mean()
    se = math.sqrt(a.var(ddof=1) / len(a) + b.var(ddof=1) / len(b))
    if se == 0:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    p = float(2.0 * norm.sf(abs(z)))
    return ZTest(float(z), p, len(a), len(b), float(a.mean()), float(b.mean()))


# --------------------------------------------------------------------------
# files


def write_person_weeks(path, rows: Sequence[PersonWeek], covariates: Sequence[str] | None = None):
    if covariates is None:
        covariates = sorted(rows[0].covariates) if rows else []
    table = [(r.student_id, r.week, r.event, *[r.covariates[c] for c in covariates]) for r in rows]
    return write_csv(path, ("student_id", "week", "event", *covariates), table)


def read_person_weeks(path) -> list[PersonWeek]:
    rows = []
    for row in read_csv(path):
        cov = {k: float(v) for k, v in row.items() if k not in ("student_id", "week", "event")}
        rows.append(PersonWeek(row["student_id"], int(row["week"]), int(row["event"]), cov))
    return rows


def write_hazards(path, model: CoxModel):
    return write_csv(path, ("covariate", "beta", "se", "hazard_ratio", "p_value"), model.rows())


ZTEST_HEADER = ("partition_a", "partition_b", "n_a", "n_b", "mean_a", "mean_b", "z", "p")


def write_ztests(path, tests: Sequence[tuple[str, str, ZTest]]):
    rows = [(a, b, t.n_a, t.n_b, t.mean_a, t.mean_b, t.z, t.p) for a, b, t in tests]
    return write_csv(path, ZTEST_HEADER, rows)
