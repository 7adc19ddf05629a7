"""Latent-factor regression fitted by alternating score iteration.

One factor at a time, the iteration finds the predictor direction with
maximal covariance to the response, then removes the fitted rank-1 term
from the residuals before extracting the next factor. All diagnostics the
reporting layer needs (variance shares, weights, loadings, importance
scores, coefficients) are derived from the fitted state here.

Conventions
-----------
* ``x_weights`` holds the unit direction used against each deflated
  residual; ``x_rotations`` is ``W (PᵀW)⁻¹``, the basis that maps the
  *original* standardized predictors straight to the scores
  (``scores = X @ x_rotations``).
* The response residual is deflated by regressing it on the predictor
  score: with a single response column the alternative (removing the
  response score outright) would zero the residual after one factor and
  no further factors could be extracted.
* Component signs are canonicalized so the response direction is
  positive; every diagnostic is invariant to joint sign flips anyway.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    NoConvergence,
    ShapeMismatch,
    SingularProjection,
    TooManyComponents,
    ZeroResidual,
)
from .frames import AnalysisFrame

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 500
_RESIDUAL_FLOOR = 1e-12


class Component(NamedTuple):
    """One extracted factor: scores, loadings and weight directions."""

    t: np.ndarray  # predictor score (n,)
    u: np.ndarray  # response score (n,)
    p: np.ndarray  # predictor loading (J,)
    q: np.ndarray  # unit response direction (m,)
    w: np.ndarray  # unit predictor weight (J,)


@dataclass(frozen=True)
class VarianceReport:
    """Per-factor explained-variance bookkeeping."""

    x_shares: np.ndarray
    cumulative_x: np.ndarray
    y_shares: np.ndarray
    cumulative_y: np.ndarray
    adjusted_r2: np.ndarray

    def rows(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("x_variance", self.x_shares),
            ("cumulative_x_variance", self.cumulative_x),
            ("y_variance", self.y_shares),
            ("cumulative_y_variance", self.cumulative_y),
            ("adjusted_r_square", self.adjusted_r2),
        ]


@dataclass(frozen=True)
class CoefficientVector:
    """Regression coefficients in standardized-predictor units."""

    intercept: float
    values: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.intercept) and np.isfinite(self.values).all()):
            raise ValueError("coefficients must be finite")
        self.values.setflags(write=False)


@dataclass(frozen=True)
class PlsModel:
    """Fitted state: scores, loadings, weights, residuals and constants.

    ``n_components`` is the number of factors actually extracted, which can
    fall short of the request when a residual matrix hits zero first.
    """

    x_weights: np.ndarray  # (J, A) unit per-residual weights
    x_rotations: np.ndarray  # (J, A), scores = X @ x_rotations
    x_loadings: np.ndarray  # (J, A)
    x_scores: np.ndarray  # (n, A)
    y_scores: np.ndarray  # (n, A)
    y_weights: np.ndarray  # (m, A) unit response directions
    y_loadings: np.ndarray  # (m, A) regression loadings on the x-scores
    x_residual: np.ndarray  # (n, J)
    y_residual: np.ndarray  # (n, m)
    x_means: np.ndarray  # raw-scale column means of the predictors
    x_stds: np.ndarray  # raw-scale population stds of the predictors
    y_mean: float
    x_total_ss: float
    y_total_ss: float
    n_components: int
    requested_components: int
    tol: float
    max_iter: int
    predictor_names: tuple[str, ...]
    station_ids: tuple[str, ...]
    transition: str

    def __post_init__(self):
        for name in (
            "x_weights", "x_rotations", "x_loadings", "x_scores", "y_scores",
            "y_weights", "y_loadings", "x_residual", "y_residual",
            "x_means", "x_stds",
        ):
            getattr(self, name).setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.x_scores.shape[0] if self.x_scores.size else self.x_residual.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x_residual.shape[1]


def nipals_component(
    E: np.ndarray,
    F: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Component:
    """Extract one factor from the residual pair (E, F).

    Alternates ``w = Eᵀu/‖Eᵀu‖``, ``t = Ew``, ``q = Fᵀt/‖Fᵀt‖``,
    ``u = Fq`` until the change in ``t`` has norm at most ``tol``; the
    loading ``p = Eᵀt/(tᵀt)`` is computed after convergence. With a single
    response column the update map is stationary after the first pass.

    Raises
    ------
    ZeroResidual
        If either residual matrix is numerically zero.
    NoConvergence
        If ``max_iter`` passes elapse with the score still moving.
    """
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if np.linalg.norm(E) <= _RESIDUAL_FLOOR:
        raise ZeroResidual("predictor residual is numerically zero")
    if np.linalg.norm(F) <= _RESIDUAL_FLOOR:
        raise ZeroResidual("response residual is numerically zero")

    u = F[:, 0].copy()
    t_prev = None
    for _ in range(max_iter):
        w = E.T @ u
        w_norm = np.linalg.norm(w)
        if w_norm <= _RESIDUAL_FLOOR:
            raise ZeroResidual("weight direction collapsed to zero")
        w /= w_norm
        t = E @ w
        q = F.T @ t
        q_norm = np.linalg.norm(q)
        if q_norm <= _RESIDUAL_FLOOR:
            raise ZeroResidual("response direction collapsed to zero")
        q /= q_norm
        u = F @ q
        if F.shape[1] == 1:
            break
        if t_prev is not None and np.linalg.norm(t - t_prev) <= tol:
            break
        t_prev = t
    else:
        raise NoConvergence(f"score iteration still moving after {max_iter} passes")

    # Canonical sign: make the dominant response-direction entry positive.
    k = int(np.argmax(np.abs(q)))
    if q[k] < 0:
        w, t, q, u = -w, -t, -q, -u
    p = E.T @ t / (t @ t)
    return Component(t=t, u=u, p=p, q=q, w=w)


def deflate(
    E: np.ndarray,
    F: np.ndarray,
    t: np.ndarray,
    p: np.ndarray,
    u: np.ndarray,
    q: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Remove a fitted factor from both residuals.

    The predictor residual loses its rank-1 reconstruction ``t pᵀ``. The
    response residual is deflated by its regression on ``t`` so that a
    single-column response keeps a usable residual for later factors.
    """
    E = np.asarray(E, dtype=float)
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    E_next = E - np.outer(t, p)
    c = F.T @ t / (t @ t)
    F_next = F - np.outer(t, c)
    return E_next, F_next


def fit(
    frame: AnalysisFrame,
    n_components: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PlsModel:
    """Fit the latent-factor regression on an assembled frame.

    The response is centered internally and its mean stored as the
    intercept. Extraction stops early (with the actual count reported)
    if a residual matrix reaches zero before ``n_components`` factors.

    Raises
    ------
    TooManyComponents
        If more factors are requested than ``min(n_samples - 1,
        n_predictors)``; a centered n-row matrix has rank at most n - 1.
    """
    n, J = frame.x.shape
    limit = min(n - 1, J)
    if n_components < 0:
        raise ValueError("n_components must be >= 0")
    if n_components > limit:
        raise TooManyComponents(
            f"{n_components} factors requested but at most {limit} exist "
            f"for a {n}x{J} frame"
        )
    if tol <= 0:
        raise ValueError("tol must be positive")

    X = np.array(frame.x, dtype=float)
    y_mean = float(frame.y.mean())
    E = X.copy()
    F = (frame.y - y_mean).reshape(-1, 1)
    x_total_ss = float((X * X).sum())
    y_total_ss = float((F * F).sum())

    ws, ts, ps, us, qs, cs = [], [], [], [], [], []
    for _ in range(n_components):
        try:
            comp = nipals_component(E, F, tol=tol, max_iter=max_iter)
        except ZeroResidual:
            break
        c = F.T @ comp.t / (comp.t @ comp.t)
        E, F = deflate(E, F, comp.t, comp.p, comp.u, comp.q)
        ws.append(comp.w)
        ts.append(comp.t)
        ps.append(comp.p)
        us.append(comp.u)
        qs.append(comp.q)
        cs.append(c)

    actual = len(ts)
    W = np.column_stack(ws) if actual else np.zeros((J, 0))
    T = np.column_stack(ts) if actual else np.zeros((n, 0))
    P = np.column_stack(ps) if actual else np.zeros((J, 0))
    U = np.column_stack(us) if actual else np.zeros((n, 0))
    Q = np.column_stack(qs) if actual else np.zeros((1, 0))
    C = np.column_stack(cs) if actual else np.zeros((1, 0))
    R = _rotations(W, P)

    return PlsModel(
        x_weights=W,
        x_rotations=R,
        x_loadings=P,
        x_scores=T,
        y_scores=U,
        y_weights=Q,
        y_loadings=C,
        x_residual=E,
        y_residual=F,
        x_means=np.array(frame.x_source_means, dtype=float),
        x_stds=np.array(frame.x_source_stds, dtype=float),
        y_mean=y_mean,
        x_total_ss=x_total_ss,
        y_total_ss=y_total_ss,
        n_components=actual,
        requested_components=n_components,
        tol=tol,
        max_iter=max_iter,
        predictor_names=frame.predictor_names,
        station_ids=frame.station_ids,
        transition=frame.transition,
    )


def _rotations(W: np.ndarray, P: np.ndarray) -> np.ndarray:
    """``W (PᵀW)⁻¹``: the weights expressed against the original matrix."""
    if W.shape[1] == 0:
        return W.copy()
    try:
        return W @ np.linalg.inv(P.T @ W)
    except np.linalg.LinAlgError as exc:
        raise SingularProjection("loading/weight product is singular") from exc


def _score_ss(model: PlsModel) -> np.ndarray:
    T = model.x_scores
    return (T * T).sum(axis=0)


def _y_share_per_component(model: PlsModel) -> np.ndarray:
    """Share of centered-response variance captured by each factor.

    Scores are mutually orthogonal, so the fitted response decomposes as
    a sum of per-factor terms plus the final residual; each factor's share
    is exactly the increment in R² when that factor joins the prediction.
    """
    if model.n_components == 0:
        return np.zeros(0)
    if model.y_total_ss == 0:
        return np.zeros(model.n_components)
    c = model.y_loadings  # (m, A)
    per_factor = (c * c).sum(axis=0) * _score_ss(model)
    return per_factor / model.y_total_ss


def adjusted_r_square(r2: float, n: int, a: int) -> float:
    """Closed-form sample-size penalty: 1 - (1 - R²)(n - 1)/(n - a - 1).

    Returns 0.0 when the denominator degenerates (n - a - 1 <= 0).
    """
    if not 0.0 <= r2 <= 1.0:
        raise ValueError("r2 must lie in [0, 1]")
    if n < 2 or a < 1:
        raise ValueError("need n >= 2 and a >= 1")
    if n - a - 1 <= 0:
        return 0.0
    return 1.0 - (1.0 - r2) * (n - 1) / (n - a - 1)


def variance_explained(model: PlsModel) -> VarianceReport:
    """Per-factor and cumulative variance shares plus adjusted R²."""
    A = model.n_components
    if A == 0:
        z = np.zeros(0)
        return VarianceReport(z, z, z, z, z)
    P = model.x_loadings
    x_per_factor = _score_ss(model) * (P * P).sum(axis=0)
    x_shares = x_per_factor / model.x_total_ss
    y_shares = _y_share_per_component(model)
    cum_x = np.cumsum(x_shares)
    cum_y = np.cumsum(y_shares)
    n = model.n_samples
    adj = np.array(
        [adjusted_r_square(min(cum_y[a - 1], 1.0), n, a) for a in range(1, A + 1)]
    )
    return VarianceReport(x_shares, cum_x, y_shares, cum_y, adj)


def vip(model: PlsModel, a: int) -> np.ndarray:
    """Importance-in-projection score per predictor using ``a`` factors.

    ``VIP_j = sqrt(J * Σ_k ssy_k (w_jk/‖w_k‖)² / Σ_k ssy_k)`` over factors
    ``k <= a``, where ``ssy_k`` is factor k's share of response variance
    and the weight columns are taken from ``x_rotations`` (the weight
    matrix the score identity holds for) normalized to unit length. The
    squared scores always sum to the number of predictors.
    """
    if not 1 <= a <= model.n_components:
        raise ValueError(f"a must be in 1..{model.n_components}, got {a}")
    ssy = _y_share_per_component(model)[:a]
    total = ssy.sum()
    if total <= 0:
        raise ValueError("no response variance explained; importance undefined")
    Wn = model.x_rotations[:, :a]
    Wn = Wn / np.linalg.norm(Wn, axis=0, keepdims=True)
    J = model.n_predictors
    return np.sqrt(J * (Wn * Wn) @ ssy / total)


def vip_table(model: PlsModel) -> np.ndarray:
    """Stack ``vip(model, a)`` for a = 1..n_components as columns."""
    if model.n_components == 0:
        return np.zeros((model.n_predictors, 0))
    return np.column_stack([vip(model, a) for a in range(1, model.n_components + 1)])


def coefficients(model: PlsModel, a: int | None = None) -> CoefficientVector:
    """Regression coefficients using the first ``a`` factors.

    ``β = W (PᵀW)⁻¹ Qᵀ`` restricted to the leading factors; the intercept
    is the stored response mean (predictors are standardized, so their
    means contribute nothing).
    """
    if a is None:
        a = model.n_components
    if not 0 <= a <= model.n_components:
        raise ValueError(f"a must be in 0..{model.n_components}, got {a}")
    if a == 0:
        return CoefficientVector(model.y_mean, np.zeros(model.n_predictors))
    W = model.x_weights[:, :a]
    P = model.x_loadings[:, :a]
    C = model.y_loadings[:, :a]
    try:
        beta = W @ np.linalg.solve(P.T @ W, C.T)
    except np.linalg.LinAlgError as exc:
        raise SingularProjection(
            f"loading/weight projection singular at {a} factors"
        ) from exc
    return CoefficientVector(model.y_mean, beta[:, 0])


def predict(model: PlsModel, x_new: np.ndarray, a: int | None = None) -> np.ndarray:
    """Predict responses for raw-scale predictor rows.

    New rows are placed on the training scale with the stored means and
    population stds, then pushed through ``coefficients(model, a)``.
    """
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new.reshape(1, -1)
    if x_new.ndim != 2 or x_new.shape[1] != model.n_predictors:
        raise ShapeMismatch(
            f"expected {model.n_predictors} predictor columns, got {x_new.shape}"
        )
    coef = coefficients(model, a)
    x_std = (x_new - model.x_means) / model.x_stds
    return coef.intercept + x_std @ coef.values


# --- serialization -----------------------------------------------------------

_MATRIX_FIELDS = (
    "x_weights", "x_rotations", "x_loadings", "x_scores", "y_scores",
    "y_weights", "y_loadings", "x_residual", "y_residual", "x_means", "x_stds",
)


def matrix_to_doc(arr: np.ndarray) -> dict:
    """Encode an array as shape plus 17-significant-digit decimal strings."""
    return {
        "shape": list(arr.shape),
        "data": [f"{v:.17g}" for v in np.asarray(arr, dtype=float).ravel()],
    }


def matrix_from_doc(obj: dict) -> np.ndarray:
    data = np.array([float(s) for s in obj["data"]], dtype=float)
    return data.reshape(tuple(obj["shape"]))


def model_to_json(model: PlsModel) -> str:
    """Serialize with decimal strings of 17 significant digits (lossless)."""
    doc = {"format": "bikepls-model", "version": 1}
    for name in _MATRIX_FIELDS:
        doc[name] = matrix_to_doc(getattr(model, name))
    doc.update(
        y_mean=f"{model.y_mean:.17g}",
        x_total_ss=f"{model.x_total_ss:.17g}",
        y_total_ss=f"{model.y_total_ss:.17g}",
        tol=f"{model.tol:.17g}",
        max_iter=model.max_iter,
        n_components=model.n_components,
        requested_components=model.requested_components,
        predictor_names=list(model.predictor_names),
        station_ids=list(model.station_ids),
        transition=model.transition,
    )
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> PlsModel:
    doc = json.loads(text)
    if doc.get("format") != "bikepls-model":
        raise ValueError("not a model document")
    kwargs = {name: matrix_from_doc(doc[name]) for name in _MATRIX_FIELDS}
    return PlsModel(
        **kwargs,
        y_mean=float(doc["y_mean"]),
        x_total_ss=float(doc["x_total_ss"]),
        y_total_ss=float(doc["y_total_ss"]),
        n_components=int(doc["n_components"]),
        requested_components=int(doc["requested_components"]),
        tol=float(doc["tol"]),
        max_iter=int(doc["max_iter"]),
        predictor_names=tuple(doc["predictor_names"]),
        station_ids=tuple(doc["station_ids"]),
        transition=doc["transition"],
    )
