"""Estimation of the AR operators from one observed path.

Two stages. First the cycle operator of the stacked process is recovered
from the lag-0 and lag-1 empirical covariances through a regularized
inverse (the lag identity makes the lag-1 covariance equal to the cycle
operator applied to the lag-0 one). Second, the season-wise AR operators
are read off the estimated cycle operator: its first row gives the season
1 operators directly, and each further season solves a small block linear
system built from sub-blocks of the estimate, again stabilized by a
regularized inverse plus a spectral projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import (
    BlockOp,
    hs_distance,
    projector_onto_leading,
    spectral_decomp,
    tikhonov_inverse,
)
from .model import AssumptionViolation, cycle_matrix

__all__ = [
    "RegularizationConfig",
    "EstimationResult",
    "empirical_covariances",
    "estimate_cycle_matrix",
    "submatrices",
    "extract_fpar_operators",
    "errors_vs_truth",
    "end_to_end_fit",
    "result_to_dict",
]


@dataclass(frozen=True)
class RegularizationConfig:
    """Damping and rank choices for the two estimation stages.

    Any unset value is resolved adaptively at use time: the damping
    parameter defaults to ``mean eigenvalue of the relevant Gram operator
    / sqrt(n_cycles)`` and the retained rank to the number of Gram
    eigenvalues above the damping parameter (at least one).

    ``theta_m`` and ``K_m`` may be a single value applied to every season
    block, or a dict keyed by the block size ``m`` in ``2..P``.
    """

    theta_yw: float | None = None
    K_yw: int | None = None
    theta_m: object = None
    K_m: object = None
    n_cycles: int | None = None

    def _lookup(self, table, m):
        if table is None:
            return None
        if isinstance(table, dict):
            return table.get(m)
        return table

    def _default_theta(self, eigs, label):
        if self.n_cycles is None:
            raise ValueError(
                f"no damping parameter given for {label} and n_cycles unknown; "
                "set one of them"
            )
        scale = float(np.mean(eigs)) if len(eigs) else 0.0
        theta = scale / math.sqrt(self.n_cycles)
        return theta if theta > 0 else 1e-12

    def resolve_theta(self, m, gram_eigs):
        given = self._lookup(self.theta_m, m)
        theta = float(given) if given is not None else self._default_theta(
            gram_eigs, f"block size m={m}"
        )
        if theta <= 0:
            raise ValueError(f"damping parameter must be positive, got {theta}")
        return theta

    def resolve_K(self, m, gram_eigs, theta):
        given = self._lookup(self.K_m, m)
        dim = len(gram_eigs)
        k = int(given) if given is not None else int(np.sum(np.asarray(gram_eigs) > theta))
        k = max(1, min(k, dim))
        return k

    def resolve_theta_yw(self, gram_eigs):
        theta = (
            float(self.theta_yw)
            if self.theta_yw is not None
            else self._default_theta(gram_eigs, "the cycle operator stage")
        )
        if theta <= 0:
            raise ValueError(f"damping parameter must be positive, got {theta}")
        return theta

    def resolve_K_yw(self, gram_eigs, theta):
        dim = len(gram_eigs)
        k = (
            int(self.K_yw)
            if self.K_yw is not None
            else int(np.sum(np.asarray(gram_eigs) > theta))
        )
        return max(1, min(k, dim))


def empirical_covariances(cycles, P, h_max=1):
    """Centered empirical covariances of the stacked cycle sequence.

    Parameters
    ----------
    cycles : ndarray
        Shape ``(n, P*d)``, one stacked cycle per row in time order.
    P : int
        Number of seasons per cycle.
    h_max : int
        Highest lag; needs at least ``h_max + 2`` cycles.

    Returns
    -------
    dict mapping ``h`` in ``0..h_max`` to a BlockOp. Lag ``h`` pairs each
    cycle with the one ``h`` later, normalizing by the pair count, so the
    lag-0 element is symmetric positive semidefinite by construction.
    """
    x = np.asarray(cycles, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"cycles must be 2-d (n, P*d), got shape {x.shape}")
    n, dim = x.shape
    if dim % P != 0:
        raise ValueError(f"row length {dim} is not a multiple of P={P}")
    d = dim // P
    if n < h_max + 2:
        raise ValueError(f"need at least h_max + 2 = {h_max + 2} cycles, got {n}")
    xc = x - x.mean(axis=0)
    out = {}
    for h in range(h_max + 1):
        mat = xc[h:].T @ xc[: n - h] / (n - h)
        if h == 0:
            mat = 0.5 * (mat + mat.T)
        out[h] = BlockOp.from_flat(mat, P, P, d)
    return out


def estimate_cycle_matrix(c0, c1, config):
    """Cycle operator estimate from lag-0 and lag-1 covariances.

    Computes ``lag1 @ tikhonov_inverse(lag0, theta) @ projector`` where
    the projector keeps the leading eigenspace of the lag-0 Gram. Returns
    the estimate and an info dict with the resolved damping, rank and the
    Gram spectrum.
    """
    if not isinstance(c0, BlockOp) or not isinstance(c1, BlockOp):
        raise TypeError("covariances must be BlockOps")
    P, d = c0.P, c0.d
    m0, m1 = c0.flat(), c1.flat()
    if m0.shape != m1.shape:
        raise ValueError("lag-0 and lag-1 covariances must share shape")
    gram = m0 @ m0.T
    decomp = spectral_decomp(gram)
    eigs = decomp.eigenvalues
    theta = config.resolve_theta_yw(eigs)
    k = config.resolve_K_yw(eigs, theta)
    proj = projector_onto_leading(decomp, k)
    est = m1 @ tikhonov_inverse(m0, theta) @ proj
    info = {
        "theta_yw": theta,
        "K_yw": k,
        "c0_gram_eigenvalues": [float(v) for v in eigs],
    }
    return BlockOp.from_flat(est, P, P, d), info


def submatrices(cycle_est, m):
    """Sub-blocks of the cycle operator used to solve for season ``m``.

    Returns ``(corner, last_row)`` where ``corner`` collects blocks with
    row indices ``1..m-1`` and column indices ``2..m`` (an ``(m-1) x
    (m-1)`` grid) and ``last_row`` is the ``1 x (m-1)`` block row with
    row index ``m`` over the same columns.
    """
    P = cycle_est.P
    if not 2 <= m <= P:
        raise ValueError(f"block size m must be in 2..{P}, got {m}")
    blocks = cycle_est.blocks
    corner = blocks[0 : m - 1, 1:m]
    last_row = blocks[m - 1 : m, 1:m]
    return BlockOp(corner), BlockOp(last_row)


@dataclass(frozen=True)
class EstimationResult:
    """Estimated AR operators plus the evidence used to produce them.

    ``phi_hat[(k, l)]`` is the lag-``k`` season-``l`` estimate for
    ``1 <= k <= P-1``. ``top_lag_residuals[l]`` is the would-be lag-``P``
    operator implied by the cycle estimate, a diagnostic that should
    vanish for true order ``p < P``.
    """

    P: int
    d: int
    phi_hat: dict
    cycle_est: BlockOp
    gram_eigenvalues: dict
    regularization: dict
    top_lag_residuals: dict
    errors: dict | None = None
    info: dict = field(default_factory=dict)


def extract_fpar_operators(cycle_est, config):
    """Read the season AR operators off an estimated cycle operator.

    Season 1 comes straight from the first block row. For each season
    ``l`` from 2 up, the operators below the season's own lag are the
    solution of ``row = unknowns @ corner`` through the damped inverse of
    the corner sub-block, and the remaining lags follow by peeling already
    known terms off the direct entries of row ``l``.

    Returns an :class:`EstimationResult` with empty ``errors``.
    """
    P, d = cycle_est.P, cycle_est.d
    if P < 2:
        raise ValueError("extraction needs at least two seasons")
    blocks = cycle_est.blocks
    phi_hat = {}
    gram_eigenvalues = {}
    regularization = {}

    for k in range(1, P):
        phi_hat[(k, 1)] = np.array(blocks[0, P - k])

    for l in range(2, P + 1):
        corner, last_row = submatrices(cycle_est, l)
        a = corner.flat()
        gram = a @ a.T
        decomp = spectral_decomp(gram)
        eigs = decomp.eigenvalues
        theta = config.resolve_theta(l, eigs)
        k_rank = config.resolve_K(l, eigs, theta)
        proj = projector_onto_leading(decomp, k_rank)
        row = last_row.flat() @ tikhonov_inverse(a, theta) @ proj
        gram_eigenvalues[l] = [float(v) for v in eigs]
        regularization[l] = {"theta": theta, "K": k_rank}
        for c in range(1, l):
            phi_hat[(l - c, l)] = np.array(row[:, (c - 1) * d : c * d])
        for k in range(l, P):
            j = P + l - k  # 1-based column of the direct entry
            acc = np.array(blocks[l - 1, j - 1])
            for mm in range(1, l):
                acc -= phi_hat[(mm, l)] @ blocks[l - mm - 1, j - 1]
            phi_hat[(k, l)] = acc

    top_lag_residuals = {}
    for l in range(1, P + 1):
        acc = np.array(blocks[l - 1, l - 1])
        for mm in range(1, l):
            acc -= phi_hat[(mm, l)] @ blocks[l - mm - 1, l - 1]
        top_lag_residuals[l] = acc

    return EstimationResult(
        P=P,
        d=d,
        phi_hat=phi_hat,
        cycle_est=cycle_est,
        gram_eigenvalues=gram_eigenvalues,
        regularization=regularization,
        top_lag_residuals=top_lag_residuals,
    )


def errors_vs_truth(result, model):
    """HS errors of the estimates against a known generating model.

    The model must be pure AR (no moving average part); its operators are
    zero-padded across lags up to ``P-1``. Reports per-operator errors,
    the maximum over season 1, the maximum over all later seasons, and
    the HS distance between estimated and true cycle operators.
    """
    if model.q != 0:
        raise AssumptionViolation(
            "error accounting against truth is defined for pure AR models only"
        )
    P = result.P
    per_op = {}
    for l in range(1, P + 1):
        for k in range(1, P):
            err = hs_distance(result.phi_hat[(k, l)], model.ar_block(k, l))
            per_op[(k, l)] = err
    max_row1 = max(per_op[(k, 1)] for k in range(1, P))
    rest = [per_op[(k, l)] for l in range(2, P + 1) for k in range(1, P)]
    max_rest = max(rest) if rest else 0.0
    err_cycle = hs_distance(result.cycle_est, cycle_matrix(model))
    return {
        "per_operator": per_op,
        "max_err_row1": max_row1,
        "max_err_rest": max_rest,
        "err_cycle": err_cycle,
    }


def end_to_end_fit(path, config=None, truth=None, P=None):
    """Full pipeline: path to covariances to cycle estimate to operators.

    Parameters
    ----------
    path : SamplePath or ndarray
        A simulated path object, or a raw ``(n, P*d)`` stacked cycle
        array (then ``P`` is required).
    config : RegularizationConfig, optional
        Defaults to fully adaptive choices.
    truth : FparmaModel, optional
        When given, error accounting against it is attached.
    """
    if hasattr(path, "cycles"):
        cycles = path.cycles()
        P = path.P
    else:
        if P is None:
            raise ValueError("P is required when passing a raw cycle array")
        cycles = np.asarray(path, dtype=float)
    if config is None:
        config = RegularizationConfig()
    n = cycles.shape[0]
    if config.n_cycles is None:
        config = replace(config, n_cycles=n)
    covs = empirical_covariances(cycles, P, h_max=1)
    cycle_est, info = estimate_cycle_matrix(covs[0], covs[1], config)
    result = extract_fpar_operators(cycle_est, config)
    errors = errors_vs_truth(result, truth) if truth is not None else None
    return replace(result, errors=errors, info={**result.info, **info, "n_cycles": n})


def result_to_dict(result):
    """JSON document for an estimation result."""
    doc = {
        "P": result.P,
        "d": result.d,
        "phi_hat": [
            {
                "k": k,
                "l": l,
                "entries": [[float(v) for v in row] for row in op],
            }
            for (k, l), op in sorted(result.phi_hat.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        ],
        "gram_eigenvalues": {str(m): v for m, v in result.gram_eigenvalues.items()},
        "regularization": {str(m): v for m, v in result.regularization.items()},
        "top_lag_residual_norms": {
            str(l): float(np.linalg.norm(op)) for l, op in result.top_lag_residuals.items()
        },
    }
    if result.info:
        doc["info"] = {
            k: v for k, v in result.info.items() if isinstance(v, (int, float, str, list))
        }
    if result.errors is not None:
        doc["errors_vs_truth"] = {
            "max_err_row1": result.errors["max_err_row1"],
            "max_err_rest": result.errors["max_err_rest"],
            "err_cycle": result.errors["err_cycle"],
            "per_operator": [
                {"k": k, "l": l, "hs_error": err}
                for (k, l), err in sorted(
                    result.errors["per_operator"].items(), key=lambda kv: (kv[0][1], kv[0][0])
                )
            ],
        }
    return doc
