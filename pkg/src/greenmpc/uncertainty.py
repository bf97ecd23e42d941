"""Data-driven uncertainty sets from forecast-error samples.

A one-class support vector clustering dual with a weighted generalized
intersection kernel K(u, v) = L - ||Q(u - v)||_1 is trained on error samples;
the surviving support vectors induce the piecewise-linear membership function

    f(w) = sum_i alpha_i ||Q(w - w_i)||_1,

and a separate calibration split sets the level theta = max f over the
calibration samples.  With at least ceil(log beta / log(1 - eps)) calibration
samples the set {f <= theta} covers a fresh error with probability >= 1 - eps,
itself with confidence >= 1 - beta.  The set is exactly representable as a
polytope after lifting the absolute values, which is what the robust MPC
counterpart consumes.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class UncertaintyError(ValueError):
    """Invalid inputs or unusable uncertainty sets."""


class SvcTrainingError(UncertaintyError):
    """Dual QP did not reach the KKT tolerance within the iteration budget."""

    def __init__(self, message: str, kkt_residual: float):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class CalibrationError(UncertaintyError):
    """Calibration set too small for the requested guarantee."""


def required_calibration_count(eps: float, beta: float) -> int:
    """Smallest N with (1 - eps)^N <= beta."""
    if not (0.0 < eps < 1.0) or not (0.0 < beta < 1.0):
        raise UncertaintyError(f"eps and beta must lie in (0, 1), got {eps!r}, {beta!r}")
    value = math.log(beta) / math.log(1.0 - eps)
    return int(math.ceil(value - 1e-9))


def weighting_matrix(samples: np.ndarray) -> np.ndarray:
    """Inverse principal square root of the sample covariance.

    Population covariance (ddof 0), so duplicating every sample leaves the
    whitening unchanged.  Near-singular covariances get a ridge of
    1e-8 * trace / d; a covariance that is identically zero (all samples
    equal) falls back to the identity.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = samples.shape
    if n < 2:
        raise UncertaintyError(f"need at least 2 samples to estimate a covariance, got {n}")
    cov = np.atleast_2d(np.cov(samples, rowvar=False, ddof=0))
    trace = float(np.trace(cov))
    if trace <= 0.0:
        return np.eye(d)
    eigvals = np.linalg.eigvalsh(cov)
    if eigvals[0] <= 1e-12 * eigvals[-1]:
        cov = cov + (1e-8 * trace / d) * np.eye(d)
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * (1.0 / np.sqrt(vals))) @ vecs.T


def _pairwise_l1(points: np.ndarray, Q: np.ndarray) -> np.ndarray:
    proj = points @ Q.T
    return np.abs(proj[:, None, :] - proj[None, :, :]).sum(axis=2)


def kernel_offset(anchors: np.ndarray, Q: np.ndarray) -> float:
    """Offset L >= max pairwise weighted L1 distance, so the kernel is positive."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.shape[0] == 0:
        raise UncertaintyError("kernel offset needs at least one anchor point")
    return float(_pairwise_l1(anchors, np.asarray(Q, dtype=float)).max()) + 1.0


def wgik(u: np.ndarray, v: np.ndarray, Q: np.ndarray, anchors: np.ndarray) -> float:
    """Weighted generalized intersection kernel K(u, v) = L - ||Q(u - v)||_1."""
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    L = kernel_offset(anchors, Q)
    return L - float(np.abs(np.asarray(Q) @ (u - v)).sum())


@dataclass(frozen=True)
class SvcModel:
    """Support vectors, weights and whitening of a trained clustering model.

    theta is None until calibration pins the set level.
    """

    support_vectors: np.ndarray    # (n_sv, d), unique points
    alphas: np.ndarray             # (n_sv,), positive, sums to 1
    Q: np.ndarray                  # (d, d) whitening matrix
    nu: float
    L: float
    theta: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.support_vectors.shape[1])

    @property
    def n_support(self) -> int:
        return int(self.support_vectors.shape[0])


def membership_values(model: SvcModel, points: np.ndarray) -> np.ndarray:
    """f(w) for a batch of points, shape (..., d) -> (...)."""
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != model.dim:
        raise UncertaintyError(f"points have dim {pts.shape[-1]}, model has {model.dim}")
    proj = pts @ model.Q.T
    sv_proj = model.support_vectors @ model.Q.T
    dist = np.abs(proj[:, None, :] - sv_proj[None, :, :]).sum(axis=2)
    vals = dist @ model.alphas
    return float(vals[0]) if squeeze else vals


def membership_value(model: SvcModel, w: np.ndarray) -> float:
    return float(membership_values(model, np.asarray(w, dtype=float).reshape(-1)))


def _smo(dist: np.ndarray, caps: np.ndarray, kkt_tol: float, max_iter: int
         ) -> tuple[np.ndarray, float, int]:
    """Maximize sum_i alpha_i K_ii - alpha' K alpha on the capped simplex.

    Works directly on the pairwise distance matrix: with K = L - dist and
    sum(alpha) = 1 the gradient gap of a pair is L-free.  Classic two-index
    ascent on the maximal violating pair; the KKT residual is the final gap.
    """
    n = dist.shape[0]
    alpha = caps / caps.sum()        # strictly feasible start, sums to 1
    s = dist @ alpha                 # gradient g = 2 s - L up to the constant
    box_tol = 1e-12
    for it in range(max_iter):
        up = alpha < caps - box_tol
        down = alpha > box_tol
        g = 2.0 * s
        g_up = np.where(up, g, -np.inf)
        g_dn = np.where(down, g, np.inf)
        i = int(np.argmax(g_up))
        j = int(np.argmin(g_dn))
        gap = g_up[i] - g_dn[j]
        if gap <= kkt_tol:
            return alpha, float(max(0.0, gap)), it
        eta = 2.0 * dist[i, j]       # curvature along e_i - e_j, > 0 for distinct points
        t_max = min(caps[i] - alpha[i], alpha[j])
        t = t_max if eta <= 0.0 else min(t_max, gap / (2.0 * eta))
        alpha[i] += t
        alpha[j] -= t
        s += t * (dist[:, i] - dist[:, j])
    # one final residual evaluation for the failure report
    g = 2.0 * (dist @ alpha)
    g_up = np.where(alpha < caps - box_tol, g, -np.inf)
    g_dn = np.where(alpha > box_tol, g, np.inf)
    residual = float(max(0.0, g_up.max() - g_dn.min()))
    raise SvcTrainingError(
        f"dual ascent did not converge in {max_iter} iterations "
        f"(KKT residual {residual:.3e} > {kkt_tol:.1e})", residual)


def train_svc(samples: np.ndarray, nu: float, kkt_tol: float = 1e-6,
              max_iter: int = 100_000) -> SvcModel:
    """Train the clustering model on error samples (one row per sample).

    Exact duplicates are merged before the dual solve; a merged point keeps
    the summed box capacity of its copies, which leaves the optimization
    equivalent to the unmerged problem.  Support vectors are the points with
    alpha > 1e-9 after renormalization.  theta is left unset.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise UncertaintyError("samples must be a nonempty (N, d) array")
    if not np.all(np.isfinite(samples)):
        raise UncertaintyError("samples contain non-finite values")
    if not (0.0 < nu <= 1.0):
        raise UncertaintyError(f"nu must lie in (0, 1], got {nu!r}")
    n_total = samples.shape[0]
    Q = weighting_matrix(samples) if n_total >= 2 else np.eye(samples.shape[1])

    unique, counts = np.unique(samples, axis=0, return_counts=True)
    caps = counts.astype(float) / (nu * n_total)
    dist = _pairwise_l1(unique, Q)
    L = float(dist.max()) + 1.0

    if unique.shape[0] == 1:
        alpha = np.array([1.0])
        residual, iters = 0.0, 0
    else:
        alpha, residual, iters = _smo(dist, caps, kkt_tol, max_iter)

    keep = alpha > 1e-9
    sv = unique[keep]
    weights = alpha[keep]
    weights = weights / weights.sum()
    # kernel-form dual objective sum_i alpha_i K_ii - alpha' K alpha collapses
    # to alpha' dist alpha on the simplex, independent of the offset L
    dual_objective = float(alpha @ dist @ alpha)
    metadata = {
        "n_train": int(n_total),
        "n_unique": int(unique.shape[0]),
        "kkt_residual": float(residual),
        "iterations": int(iters),
        "dual_objective": float(dual_objective),
    }
    return SvcModel(support_vectors=np.ascontiguousarray(sv),
                    alphas=np.ascontiguousarray(weights),
                    Q=Q, nu=float(nu), L=L, theta=None, metadata=metadata)


def calibrate_theta(model: SvcModel, calibration_samples: np.ndarray,
                    eps: float, beta: float) -> SvcModel:
    """Set the level theta to the maximum membership over the calibration split."""
    calib = np.atleast_2d(np.asarray(calibration_samples, dtype=float))
    needed = required_calibration_count(eps, beta)
    if calib.shape[0] < needed:
        raise CalibrationError(
            f"calibration needs at least {needed} samples for eps={eps}, beta={beta}; "
            f"got {calib.shape[0]}")
    theta = float(membership_values(model, calib).max())
    metadata = dict(model.metadata)
    metadata.update({"eps": float(eps), "beta": float(beta),
                     "n_calib": int(calib.shape[0])})
    return dataclasses.replace(model, theta=theta, metadata=metadata)


# --- uncertainty sets and their polytope form ---------------------------------

@dataclass(frozen=True)
class PolytopeForm:
    """{(w, z) : E w + F z <= g}; the set itself is the projection onto w."""

    E: np.ndarray
    F: np.ndarray
    g: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.E.shape[1])

    @property
    def n_aux(self) -> int:
        return int(self.F.shape[1])

    def validate(self) -> None:
        rows = self.E.shape[0]
        if self.F.shape[0] != rows or self.g.shape[0] != rows:
            raise UncertaintyError("polytope row counts disagree")
        if not (np.all(np.isfinite(self.E)) and np.all(np.isfinite(self.F))
                and np.all(np.isfinite(self.g))):
            raise UncertaintyError("polytope has non-finite coefficients")


@dataclass(frozen=True)
class UncertaintySet:
    """Tagged union: calibrated SVC set, L1 ball, or a single point."""

    channel: str
    kind: str                      # "svc" | "l1_ball" | "point"
    dim: int
    svc: SvcModel | None = None
    omega: float | None = None
    center: np.ndarray | None = None

    def radius(self) -> float:
        if self.kind == "svc":
            if self.svc is None or self.svc.theta is None:
                raise UncertaintyError("SVC set has no calibrated theta")
            return float(self.svc.theta)
        if self.kind == "l1_ball":
            return float(self.omega)
        return 0.0

    def membership_value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != self.dim:
            raise UncertaintyError(f"point has dim {w.shape[0]}, set has {self.dim}")
        if self.kind == "svc":
            return membership_value(self.svc, w)
        if self.kind == "l1_ball":
            return float(np.abs(w).sum())
        return float(np.abs(w - self.center).sum())

    def contains(self, w: np.ndarray, tol: float = 0.0) -> bool:
        return self.membership_value(w) <= self.radius() + tol

    def singleton(self) -> np.ndarray | None:
        """The single member if the set is degenerate, else None."""
        if self.kind == "point":
            return np.array(self.center, dtype=float)
        if self.kind == "l1_ball" and self.omega == 0.0:
            return np.zeros(self.dim)
        if (self.kind == "svc" and self.svc is not None
                and self.svc.theta == 0.0 and self.svc.n_support == 1):
            return np.array(self.svc.support_vectors[0], dtype=float)
        return None


def svc_set(channel: str, model: SvcModel) -> UncertaintySet:
    return UncertaintySet(channel=channel, kind="svc", dim=model.dim, svc=model)


def l1_ball_set(channel: str, omega: float, dim: int) -> UncertaintySet:
    if not np.isfinite(omega) or omega < 0.0:
        raise UncertaintyError(f"L1 radius must be finite and >= 0, got {omega!r}")
    return UncertaintySet(channel=channel, kind="l1_ball", dim=dim, omega=float(omega))


def point_set(channel: str, center: np.ndarray) -> UncertaintySet:
    center = np.asarray(center, dtype=float).reshape(-1)
    return UncertaintySet(channel=channel, kind="point", dim=center.shape[0], center=center)


def to_polytope(us: UncertaintySet) -> PolytopeForm:
    """Exact lifted H-representation of the set.

    SVC: one auxiliary block z_i per support vector with +/-Q(w - w_i) <= z_i
    and the weighted budget row sum_i alpha_i 1'z_i <= theta.  L1 ball: the
    usual t-lift.  Point: box equality as paired inequalities, no auxiliaries.
    """
    d = us.dim
    if us.kind == "point":
        eye = np.eye(d)
        form = PolytopeForm(E=np.vstack([eye, -eye]),
                            F=np.zeros((2 * d, 0)),
                            g=np.concatenate([us.center, -us.center]))
    elif us.kind == "l1_ball":
        eye = np.eye(d)
        E = np.vstack([eye, -eye, np.zeros((1, d))])
        F = np.vstack([-eye, -eye, np.ones((1, d))])
        g = np.concatenate([np.zeros(2 * d), [us.omega]])
        form = PolytopeForm(E=E, F=F, g=g)
    elif us.kind == "svc":
        model = us.svc
        if model is None or model.theta is None:
            raise UncertaintyError(
                "SVC set must be calibrated (theta set) before conversion")
        n_sv = model.n_support
        rows = 2 * n_sv * d + 1
        E = np.zeros((rows, d))
        F = np.zeros((rows, n_sv * d))
        g = np.zeros(rows)
        for i in range(n_sv):
            base = 2 * i * d
            qwi = model.Q @ model.support_vectors[i]
            E[base:base + d] = model.Q
            F[base:base + d, i * d:(i + 1) * d] = -np.eye(d)
            g[base:base + d] = qwi
            E[base + d:base + 2 * d] = -model.Q
            F[base + d:base + 2 * d, i * d:(i + 1) * d] = -np.eye(d)
            g[base + d:base + 2 * d] = -qwi
        F[-1] = np.repeat(model.alphas, d)
        g[-1] = model.theta
        form = PolytopeForm(E=E, F=F, g=g)
    else:
        raise UncertaintyError(f"unknown set kind {us.kind!r}")
    form.validate()
    return form


# --- serialization -------------------------------------------------------------

def uncertainty_set_to_dict(us: UncertaintySet) -> dict:
    data: dict = {"channel": us.channel, "kind": us.kind, "dim": us.dim}
    if us.kind == "l1_ball":
        data["omega"] = us.omega
    elif us.kind == "point":
        data["center"] = us.center.tolist()
    else:
        model = us.svc
        data["svc"] = {
            "support_vectors": model.support_vectors.tolist(),
            "alphas": model.alphas.tolist(),
            "Q": model.Q.tolist(),
            "nu": model.nu,
            "L": model.L,
            "theta": model.theta,
            "metadata": model.metadata,
        }
    return data


def uncertainty_set_from_dict(data: dict) -> UncertaintySet:
    kind = data["kind"]
    if kind == "l1_ball":
        return l1_ball_set(data["channel"], float(data["omega"]), int(data["dim"]))
    if kind == "point":
        return point_set(data["channel"], np.array(data["center"], dtype=float))
    if kind == "svc":
        raw = data["svc"]
        model = SvcModel(
            support_vectors=np.array(raw["support_vectors"], dtype=float),
            alphas=np.array(raw["alphas"], dtype=float),
            Q=np.array(raw["Q"], dtype=float),
            nu=float(raw["nu"]),
            L=float(raw["L"]),
            theta=None if raw["theta"] is None else float(raw["theta"]),
            metadata=dict(raw.get("metadata", {})),
        )
        return svc_set(data["channel"], model)
    raise UncertaintyError(f"unknown set kind {kind!r}")


def save_uncertainty_set(us: UncertaintySet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(uncertainty_set_to_dict(us), fh, indent=2)
        fh.write("\n")


def load_uncertainty_set(path: str | Path) -> UncertaintySet:
    with open(path, "r", encoding="utf-8") as fh:
        return uncertainty_set_from_dict(json.load(fh))
