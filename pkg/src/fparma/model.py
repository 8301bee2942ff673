"""Periodic ARMA model objects and their block companion algebra.

A process with period ``P`` and orders ``p, q < P`` is driven by the
recursion (season-dependent coefficients, all operators on the truncated
basis of :mod:`fparma.hilbert`)

    X_k = sum_i phi[i, s(k)] X_{k-i} + sum_j psi[j, s(k)] eps_{k-j} + eps_k

where ``s(k) = ((k-1) mod P) + 1`` is the season of time ``k``. Stacking
``P`` consecutive values turns one season step into multiplication by a
block companion operator; multiplying the ``P`` companions of one full
period gives the cycle operator whose powers control stationarity. This
module builds those objects and the aggregated noise operators that let a
whole cycle be advanced in a single step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .hilbert import BlockOp, hs_norm

__all__ = [
    "AssumptionViolation",
    "NoiseSpec",
    "FparmaModel",
    "season_of",
    "validate",
    "require_valid",
    "companion_ar",
    "companion_ma",
    "noise_entry_matrix",
    "phi_product",
    "cycle_matrix",
    "recursive_entry",
    "cycle_matrix_recursive",
    "ma_aggregates",
    "closed_form_ma_aggregates",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

# Operators with HS norm at or below this are treated as structurally zero.
ZERO_TOL = 1e-12

DISTRIBUTIONS = ("gaussian", "scaled_uniform")


class AssumptionViolation(RuntimeError):
    """A model-level assumption needed by the requested computation fails."""


def season_of(k, P):
    """Season index in ``1..P`` of absolute time ``k`` (any integer)."""
    return (k - 1) % P + 1


@dataclass(frozen=True)
class NoiseSpec:
    """Per-season innovation law.

    Parameters
    ----------
    covariances : ndarray
        Shape ``(P, d, d)``; entry ``s-1`` is the covariance operator of
        the season-``s`` innovation. Symmetric positive semidefinite.
    distribution : str
        ``"gaussian"`` or ``"scaled_uniform"`` (uniform coordinates in the
        covariance eigenbasis, matched to the same second moments).
    """

    covariances: np.ndarray
    distribution: str = "gaussian"

    def __post_init__(self):
        cov = np.array(self.covariances, dtype=float)
        if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
            raise ValueError(f"covariances must have shape (P, d, d), got {cov.shape}")
        cov.flags.writeable = False
        object.__setattr__(self, "covariances", cov)
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(
                f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}"
            )

    @property
    def P(self):
        return self.covariances.shape[0]

    @property
    def d(self):
        return self.covariances.shape[1]


@dataclass(frozen=True)
class FparmaModel:
    """Periodic ARMA model on the truncated basis.

    Parameters
    ----------
    P : int
        Period (number of seasons).
    p, q : int
        AR and MA orders, both strictly below ``P``.
    phi : ndarray
        Shape ``(p, P, d, d)``; ``phi[i-1, s-1]`` is the lag-``i`` AR
        operator active in season ``s``.
    psi : ndarray
        Shape ``(q, P, d, d)``; ``psi[j-1, s-1]`` is the lag-``j`` MA
        operator active in season ``s``.
    noise : NoiseSpec
    """

    P: int
    p: int
    q: int
    phi: np.ndarray
    psi: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        d = self.noise.d
        phi = np.array(self.phi, dtype=float).reshape(self.p, self.P, d, d)
        psi = np.array(self.psi, dtype=float).reshape(self.q, self.P, d, d)
        phi.flags.writeable = False
        psi.flags.writeable = False
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)

    @property
    def d(self):
        return self.noise.d

    def ar_block(self, lag, season):
        """AR operator at ``lag`` for ``season``; zeros for lag > p."""
        if lag < 1:
            raise ValueError(f"lag must be >= 1, got {lag}")
        if lag > self.p:
            return np.zeros((self.d, self.d))
        return np.array(self.phi[lag - 1, season - 1])

    def ma_block(self, lag, season):
        """MA operator at ``lag`` for ``season``; zeros for lag 0 or lag > q."""
        if lag < 0:
            raise ValueError(f"lag must be >= 0, got {lag}")
        if lag == 0 or lag > self.q:
            return np.zeros((self.d, self.d))
        return np.array(self.psi[lag - 1, season - 1])


def validate(model):
    """Collect structural violations; an empty list means the model is usable.

    Checks the order bounds ``P > max(p, q)``, the presence of a nonzero
    top-lag operator at some season for each declared order, shape
    consistency, and that every innovation covariance is symmetric
    positive semidefinite with at least one season actually noisy.
    """
    out = []
    P, p, q, d = model.P, model.p, model.q, model.d
    if P < 1:
        out.append(f"period P={P} must be a positive integer")
        return out
    if p < 0 or q < 0:
        out.append(f"orders must be nonnegative, got p={p}, q={q}")
        return out
    if P <= max(p, q):
        out.append(f"period P={P} must exceed both orders (p={p}, q={q})")
    if model.phi.shape != (p, P, d, d):
        out.append(f"phi has shape {model.phi.shape}, expected {(p, P, d, d)}")
    if model.psi.shape != (q, P, d, d):
        out.append(f"psi has shape {model.psi.shape}, expected {(q, P, d, d)}")
    if p >= 1 and model.phi.shape == (p, P, d, d):
        if max(hs_norm(model.phi[p - 1, s]) for s in range(P)) <= ZERO_TOL:
            out.append(f"AR order p={p} declared but the lag-{p} operator vanishes at every season")
    if q >= 1 and model.psi.shape == (q, P, d, d):
        if max(hs_norm(model.psi[q - 1, s]) for s in range(P)) <= ZERO_TOL:
            out.append(f"MA order q={q} declared but the lag-{q} operator vanishes at every season")
    cov = model.noise.covariances
    if cov.shape != (P, d, d):
        out.append(f"noise covariances have shape {cov.shape}, expected {(P, d, d)}")
        return out
    traces = []
    for s in range(P):
        c = cov[s]
        scale = max(1.0, float(np.abs(c).max()))
        if np.abs(c - c.T).max() > 1e-10 * scale:
            out.append(f"season {s + 1} covariance is not symmetric")
            continue
        eigs = np.linalg.eigvalsh(0.5 * (c + c.T))
        if eigs.min() < -1e-10 * scale:
            out.append(f"season {s + 1} covariance has a negative eigenvalue ({eigs.min():.3e})")
        traces.append(float(np.trace(c)))
    if traces and max(traces) <= 0.0:
        out.append("all seasons have zero innovation covariance")
    return out


def require_valid(model):
    """Raise :class:`AssumptionViolation` listing every structural defect."""
    problems = validate(model)
    if problems:
        raise AssumptionViolation("invalid model: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# block companion construction
# ---------------------------------------------------------------------------


def companion_ar(model, season):
    """AR companion operator of one season on the stacked space ``H^P``.

    Identity blocks on the superdiagonal shift the stacked window forward;
    the last block row carries the season's AR operators in reversed lag
    order, so row ``P`` of the product with a stacked state reproduces the
    AR part of the scalar recursion.
    """
    P, d = model.P, model.d
    if not 1 <= season <= P:
        raise ValueError(f"season must be in 1..{P}, got {season}")
    blocks = np.zeros((P, P, d, d))
    eye = np.eye(d)
    for i in range(P - 1):
        blocks[i, i + 1] = eye
    for j in range(1, P + 1):
        blocks[P - 1, j - 1] = model.ar_block(P + 1 - j, season)
    return BlockOp(blocks)


def companion_ma(model, season):
    """MA companion operator: only the last block row is nonzero.

    Column ``j`` holds the lag ``P - j`` MA operator; the lag-0 corner
    block is zero, so the stacked product contributes exactly the moving
    average terms and not the innovation itself.
    """
    P, d = model.P, model.d
    if not 1 <= season <= P:
        raise ValueError(f"season must be in 1..{P}, got {season}")
    blocks = np.zeros((P, P, d, d))
    for j in range(1, P + 1):
        blocks[P - 1, j - 1] = model.ma_block(P - j, season)
    return BlockOp(blocks)


def noise_entry_matrix(model, season):
    """MA companion with the identity added in the corner block.

    Applied to the stacked innovation window this yields the moving
    average terms plus the current innovation in the last component, so

        stacked_state(k) = companion_ar @ stacked_state(k-1)
                           + noise_entry_matrix @ stacked_innovations(k)

    is the complete one-step update for both AR and MA parts.
    """
    base = companion_ma(model, season)
    blocks = np.array(base.blocks)
    blocks[model.P - 1, model.P - 1] += np.eye(model.d)
    return BlockOp(blocks)


def phi_product(model, i, k):
    """Product of ``i`` consecutive AR companions ending at time ``k``.

    Returns companion(s(k)) @ companion(s(k-1)) @ ... @ companion(s(k-i+1)),
    the identity for ``i = 0``. Seasons wrap modulo the period.
    """
    if i < 0:
        raise ValueError(f"factor count must be >= 0, got {i}")
    out = BlockOp.identity(model.P, model.d)
    for t in range(i):
        out = out.compose(companion_ar(model, season_of(k - t, model.P)))
    return out


def cycle_matrix(model):
    """Product of the ``P`` AR companions over one full period.

    Powers of this operator propagate the period-subsampled stacked
    process; its norm decay decides stationarity.
    """
    return phi_product(model, model.P, model.P)


def _recursive_rows(model, up_to_row):
    """Rows 1..up_to_row of the cycle matrix from the row recursion.

    Row ``i`` is assembled from season-``i`` AR operators and previously
    computed rows:

        row_i[j] = phi[P+i-j, i] (present for j > i)
                   + sum_{k=1}^{i-1} phi[k, i] @ row_{i-k}[j]

    which mirrors how each extra companion factor rewrites the last block
    row in terms of earlier ones.
    """
    P, d = model.P, model.d
    rows = np.zeros((up_to_row, P, d, d))
    for i in range(1, up_to_row + 1):
        for j in range(1, P + 1):
            acc = np.zeros((d, d))
            if j >= i + 1:
                acc += model.ar_block(P + i - j, i)
            for k in range(1, i):
                phi_k = model.ar_block(k, i)
                if hs_norm(phi_k) > 0.0:
                    acc += phi_k @ rows[i - k - 1, j - 1]
            rows[i - 1, j - 1] = acc
    return rows


def recursive_entry(model, i, j):
    """Block ``(i, j)`` (1-based) of the cycle matrix via the row recursion.

    Independent of :func:`cycle_matrix`, which multiplies companions;
    agreement of the two constructions is a correctness check on both.
    """
    P = model.P
    if not (1 <= i <= P and 1 <= j <= P):
        raise ValueError(f"block indices must be in 1..{P}, got ({i}, {j})")
    return np.array(_recursive_rows(model, i)[i - 1, j - 1])


def cycle_matrix_recursive(model):
    """Full cycle matrix assembled row by row from the entry recursion."""
    return BlockOp(_recursive_rows(model, model.P))


# ---------------------------------------------------------------------------
# one-cycle aggregation of the noise terms
# ---------------------------------------------------------------------------


def ma_aggregates(model):
    """Noise aggregation operators for the one-step-per-cycle form.

    Unrolls the single-season update over one full period and sorts every
    innovation contribution by the cycle it belongs to, giving operators
    ``(current, previous)`` with

        stacked(kP) = cycle_matrix @ stacked((k-1)P)
                      + previous @ innovations(cycle k-1)
                      + current  @ innovations(cycle k)

    where ``innovations(cycle k)`` stacks the ``P`` innovations of that
    cycle in time order. For ``q = 0`` the previous-cycle operator is zero
    and column ``j`` of ``current`` is the last block column of
    ``phi_product(model, P - j, P)``.
    """
    P, d = model.P, model.d
    current = np.zeros((P, P, d, d))
    previous = np.zeros((P, P, d, d))
    for m in range(P):
        # all innovation terms entering at season P - m, propagated to cycle end
        t_flat = phi_product(model, m, P).flat() @ noise_entry_matrix(model, P - m).flat()
        t_blocks = BlockOp.from_flat(t_flat, P, P, d).blocks
        for c in range(P):
            if c - m >= 0:
                current[:, c - m] += t_blocks[:, c]
            else:
                previous[:, P + c - m] += t_blocks[:, c]
    return BlockOp(current), BlockOp(previous)


def closed_form_ma_aggregates(model):
    """Same aggregates assembled from the closed-form block sums.

    current[i, j]  = sum_{l=0}^{P-j} (phi_product(l, P) @ noise_entry(P-l))[i, j+l]
    previous[i, j] = sum_{l=2}^{j}   (phi_product(P+1-l, P) @ companion_ma(l-1))[i, j+1-l]

    Exists as an independent cross-check on :func:`ma_aggregates`; the
    current-cycle sum must route the bare innovation through the corner
    identity block, while the previous-cycle sum never touches the corner
    and uses the plain MA companion.
    """
    P, d = model.P, model.d
    prods = [phi_product(model, l, P).flat() for l in range(P + 1)]
    theta = [None] + [noise_entry_matrix(model, s).flat() for s in range(1, P + 1)]
    psi_c = [None] + [companion_ma(model, s).flat() for s in range(1, P + 1)]

    current = np.zeros((P, P, d, d))
    previous = np.zeros((P, P, d, d))
    for j in range(1, P + 1):
        for l in range(0, P - j + 1):
            t = BlockOp.from_flat(prods[l] @ theta[P - l], P, P, d).blocks
            current[:, j - 1] += t[:, j + l - 1]
        for l in range(2, j + 1):
            t = BlockOp.from_flat(prods[P + 1 - l] @ psi_c[l - 1], P, P, d).blocks
            previous[:, j - 1] += t[:, j - l]
    return BlockOp(current), BlockOp(previous)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _entries(a):
    return [[float(x) for x in row] for row in np.asarray(a, dtype=float)]


def model_to_dict(model):
    """Plain-JSON document for a model; exact float round trip."""
    doc = {
        "P": model.P,
        "p": model.p,
        "q": model.q,
        "d": model.d,
        "phi": [
            {"i": i, "season": s, "entries": _entries(model.phi[i - 1, s - 1])}
            for i in range(1, model.p + 1)
            for s in range(1, model.P + 1)
        ],
        "psi": [
            {"i": j, "season": s, "entries": _entries(model.psi[j - 1, s - 1])}
            for j in range(1, model.q + 1)
            for s in range(1, model.P + 1)
        ],
        "noise": {
            "covariances": [_entries(model.noise.covariances[s]) for s in range(model.P)],
            "distribution": model.noise.distribution,
        },
    }
    return doc


_MODEL_KEYS = {"P", "p", "q", "d", "phi", "psi", "noise"}
_OP_KEYS = {"i", "season", "entries"}
_NOISE_KEYS = {"covariances", "distribution"}


def model_from_dict(doc):
    """Rebuild a model from its JSON document; unknown keys are rejected."""
    if not isinstance(doc, dict):
        raise ValueError("model document must be a JSON object")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ValueError(f"unknown model fields: {sorted(unknown)}")
    missing = _MODEL_KEYS - set(doc)
    if missing:
        raise ValueError(f"missing model fields: {sorted(missing)}")
    P, p, q, d = (int(doc[k]) for k in ("P", "p", "q", "d"))
    if P < 1 or p < 0 or q < 0 or d < 1:
        raise ValueError(f"invalid sizes: P={P}, p={p}, q={q}, d={d}")

    def read_ops(items, order, label):
        out = np.zeros((order, P, d, d))
        for item in items:
            unknown = set(item) - _OP_KEYS
            if unknown:
                raise ValueError(f"unknown {label} fields: {sorted(unknown)}")
            i, s = int(item["i"]), int(item["season"])
            if not (1 <= i <= order and 1 <= s <= P):
                raise ValueError(f"{label} lag/season ({i}, {s}) out of range")
            entries = np.asarray(item["entries"], dtype=float)
            if entries.shape != (d, d):
                raise ValueError(f"{label} entries must be {d}x{d}, got {entries.shape}")
            out[i - 1, s - 1] = entries
        return out

    noise_doc = doc["noise"]
    unknown = set(noise_doc) - _NOISE_KEYS
    if unknown:
        raise ValueError(f"unknown noise fields: {sorted(unknown)}")
    cov = np.asarray(noise_doc["covariances"], dtype=float)
    if cov.shape != (P, d, d):
        raise ValueError(f"noise covariances must have shape {(P, d, d)}, got {cov.shape}")
    noise = NoiseSpec(cov, str(noise_doc["distribution"]))
    return FparmaModel(
        P=P,
        p=p,
        q=q,
        phi=read_ops(doc["phi"], p, "phi"),
        psi=read_ops(doc["psi"], q, "psi"),
        noise=noise,
    )


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
