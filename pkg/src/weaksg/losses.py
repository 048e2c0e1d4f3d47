"""Loss stack: contrastive alignment, node/edge cross-entropy, total loss,
and a central finite-difference gradient verifier.

The contrastive term is standard one-directional InfoNCE over the K aligned
(node embedding, instance image embedding) pairs at temperature tau. All math
runs in 64-bit floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BadTemperature, EmptyBatch


@dataclass(frozen=True)
class LossReport:
    l_obj: float
    l_rel: float
    l_s: float
    l_total: float
    alpha: float
    tau: float
    gradients: dict[str, np.ndarray] = field(default_factory=dict)


def _logsumexp_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def contrastive_loss(
    v0: np.ndarray, f_img: np.ndarray, tau: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """InfoNCE: L = -(1/K) sum_i log( exp(<v_i,f_i>/tau) / sum_j exp(<v_i,f_j>/tau) ).

    Returns (loss, dL/dv0, dL/df_img).
    """
    if tau <= 0.0:
        raise BadTemperature(f"tau must be > 0, got {tau}")
    v = np.asarray(v0, dtype=np.float64)
    f = np.asarray(f_img, dtype=np.float64)
    if v.shape != f.shape or v.ndim != 2:
        raise ValueError(f"shape mismatch: v0 {v.shape} vs f_img {f.shape}")
    k = v.shape[0]
    s = (v @ f.T) / tau  # K x K similarity logits
    lse = _logsumexp_rows(s)
    loss = float(np.mean(lse - np.diag(s)))
    p = _softmax_rows(s)
    delta = p - np.eye(k)
    dv = (delta @ f) / (k * tau)
    df = (delta.T @ v) / (k * tau)
    return loss, dv, df


def cross_entropy(
    logits: np.ndarray, labels: np.ndarray, ignore: int | None = None
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over rows whose label != ignore.

    Returns (loss, dL/dlogits); ignored rows carry zero gradient.
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError(f"logits {x.shape} incompatible with labels {y.shape}")
    if np.any(y < 0) or np.any(y >= x.shape[1]):
        raise ValueError("labels out of class range")
    keep = np.ones(x.shape[0], dtype=bool) if ignore is None else (y != ignore)
    m_eff = int(keep.sum())
    if m_eff == 0:
        raise EmptyBatch("every row ignored")
    lse = _logsumexp_rows(x)
    row_loss = lse - x[np.arange(x.shape[0]), y]
    loss = float(row_loss[keep].sum() / m_eff)
    grad = np.zeros_like(x)
    p = _softmax_rows(x[keep])
    onehot = np.zeros_like(p)
    onehot[np.arange(m_eff), y[keep]] = 1.0
    grad[keep] = (p - onehot) / m_eff
    return loss, grad


def total_loss(
    node_logits: np.ndarray,
    node_pl: np.ndarray,
    edge_logits: np.ndarray,
    edge_pl: np.ndarray,
    v0: np.ndarray,
    f_img: np.ndarray,
    tau: float = 0.1,
    alpha: float = 10.0,
) -> LossReport:
    """L_total = L_obj + L_rel + alpha * L_s.

    Edge labels include the None class as a real target (never ignored).
    """
    l_obj, d_node = cross_entropy(node_logits, node_pl)
    l_rel, d_edge = cross_entropy(edge_logits, edge_pl)
    l_s, dv, df = contrastive_loss(v0, f_img, tau)
    return LossReport(
        l_obj=l_obj,
        l_rel=l_rel,
        l_s=l_s,
        l_total=l_obj + l_rel + alpha * l_s,
        alpha=alpha,
        tau=tau,
        gradients={
            "node_logits": d_node,
            "edge_logits": d_edge,
            "v0": alpha * dv,
            "f_img": alpha * df,
        },
    )


LossFn = Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]]


def finite_diff_check(
    loss_fn: LossFn,
    inputs: dict[str, np.ndarray],
    eps: float = 1e-6,
    min_coords: int = 200,
    seed: int = 0,
) -> dict:
    """Central-difference check of analytic gradients on a coordinate sample.

    At least min_coords coordinates are drawn across all inputs (all of them
    if fewer exist). The error for a coordinate is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-3); the 1e-3 floor
    compares near-zero gradients absolutely at that scale, which keeps
    finite-difference roundoff (~1e-10 for O(1) losses) from masquerading as
    gradient error. Returns worst error overall and per input.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError("eps must be in (0, 1e-2]")
    base = {k: np.asarray(v, dtype=np.float64).copy() for k, v in inputs.items()}
    _, grads = loss_fn(base)
    coords: list[tuple[str, tuple[int, ...]]] = []
    for name, arr in base.items():
        for idx in np.ndindex(arr.shape):
            coords.append((name, idx))
    rng = np.random.default_rng(seed)
    if len(coords) > min_coords:
        picks = rng.choice(len(coords), size=min_coords, replace=False)
        coords = [coords[i] for i in picks]
    worst = 0.0
    per_input = {name: 0.0 for name in base}
    for name, idx in coords:
        orig = base[name][idx]
        base[name][idx] = orig + eps
        hi, _ = loss_fn(base)
        base[name][idx] = orig - eps
        lo, _ = loss_fn(base)
        base[name][idx] = orig
        numeric = (hi - lo) / (2.0 * eps)
        analytic = float(grads[name][idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-3)
        per_input[name] = max(per_input[name], err)
        worst = max(worst, err)
    return {"worst_rel_err": worst, "per_input": per_input, "coords_checked": len(coords)}
