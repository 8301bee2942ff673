"""Stationarity verification, exact second-order structure, diagnostics.

The cycle operator of a periodic model drives everything here: its norm
decay certifies that a stationary solution exists, fixes how many moving
average terms matter numerically, and yields the covariance of the
stacked cycle process by two independent routes (a truncated series and a
fixed-point iteration) that are required to agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import BlockOp, hs_distance, hs_norm, operator_norm
from .model import (
    AssumptionViolation,
    FparmaModel,
    cycle_matrix,
    ma_aggregates,
)

__all__ = [
    "NumericalFailure",
    "StationarityReport",
    "CovarianceSet",
    "WhitenessReport",
    "DecayReport",
    "check_stationarity",
    "truncation_length",
    "default_burn_in",
    "stacked_noise_covariance",
    "stationary_covariance",
    "lagged_covariances",
    "model_covariances",
    "whiteness_diagnostic",
    "m_approx_decay",
    "season_covariances",
]

SERIES_TAIL_TOL = 1e-13
ROUTE_AGREE_TOL = 1e-10
TRUNCATION_CAP = 10_000
BURN_IN_TOL = 1e-10


class NumericalFailure(RuntimeError):
    """Internal numerical cross-checks disagreed beyond tolerance."""


@dataclass(frozen=True)
class StationarityReport:
    """Norm decay evidence for the cycle operator.

    ``norms[j-1]`` is the operator norm of the j-th power. ``j0`` is the
    first power with norm below one (None if none was found up to
    ``j_max``, in which case the model is treated as non-stationary).
    ``geometric_a, geometric_b`` give an envelope
    ``norm(power j) <= a * b**j`` fitted on the decreasing tail and
    inflated to dominate every computed norm.
    """

    norms: np.ndarray
    j0: int | None
    spectral_radius: float
    geometric_a: float
    geometric_b: float

    @property
    def is_stationary(self):
        return self.j0 is not None

    def to_dict(self):
        return {
            "norms": [float(v) for v in self.norms],
            "j0": self.j0,
            "spectral_radius": self.spectral_radius,
            "geometric_bound": {"a": self.geometric_a, "b": self.geometric_b},
        }


def check_stationarity(op, j_max=64):
    """Compute power norms of the cycle operator and fit their decay.

    Parameters
    ----------
    op : BlockOp or ndarray
        The cycle operator.
    j_max : int
        Highest power examined.

    Returns
    -------
    StationarityReport
    """
    f = op.flat() if isinstance(op, BlockOp) else np.asarray(op, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError(f"expected a square operator, got shape {f.shape}")
    if j_max < 1:
        raise ValueError(f"j_max must be >= 1, got {j_max}")
    norms = np.empty(j_max)
    power = np.eye(f.shape[0])
    for j in range(j_max):
        power = power @ f
        norms[j] = operator_norm(power)
    j0 = None
    below = np.nonzero(norms < 1.0)[0]
    if below.size:
        j0 = int(below[0]) + 1
    radius = float(np.max(np.abs(np.linalg.eigvals(f)))) if f.size else 0.0
    a, b = _fit_geometric(norms, j0)
    return StationarityReport(
        norms=norms, j0=j0, spectral_radius=radius, geometric_a=a, geometric_b=b
    )


def _fit_geometric(norms, j0):
    """Envelope a * b**j over the computed power norms.

    Least squares on log norms over the tail starting at the largest norm,
    then ``a`` is inflated so the envelope dominates every positive norm.
    """
    j_idx = np.arange(1, norms.shape[0] + 1)
    start = int(np.argmax(norms))
    tail = np.nonzero(norms[start:] > 0.0)[0] + start
    if tail.size >= 2:
        slope, intercept = np.polyfit(j_idx[tail], np.log(norms[tail]), 1)
        b = float(np.exp(slope))
    elif j0 is not None:
        b = 0.5
    else:
        # single usable point and no power ever dipped below one: expanding
        b = max(float(norms[-1]) ** (1.0 / norms.shape[0]), 1.0)
    if b >= 1.0 and j0 is not None:
        # transient-dominated fit; fall back to the certified contraction
        b = float(norms[j0 - 1] ** (1.0 / j0))
    if b <= 0.0:
        b = 1e-12
    positive = norms > 0.0
    if positive.any():
        a = float(np.max(norms[positive] / b ** j_idx[positive]))
    else:
        a = 0.0
    return a, b


def truncation_length(report, tol=SERIES_TAIL_TOL, cap=TRUNCATION_CAP):
    """Smallest J with envelope tail ``a * b**J / (1 - b) < tol``, capped."""
    a, b = report.geometric_a, report.geometric_b
    if a == 0.0:
        return 1
    if b >= 1.0:
        raise AssumptionViolation(
            "no geometric decay of cycle operator powers; cannot truncate the "
            "moving average solution"
        )
    j = math.ceil(math.log(tol * (1.0 - b) / a) / math.log(b))
    return int(min(max(j, 1), cap))


def default_burn_in(report, P, tol=BURN_IN_TOL, cap=1_000_000):
    """Smallest whole number of cycles B/P with ``a * b**(B/P) < tol``."""
    a, b = report.geometric_a, report.geometric_b
    if a == 0.0 or a < tol:
        return 0
    if b >= 1.0:
        raise AssumptionViolation("no geometric decay; burn-in length undefined")
    cycles = math.ceil(math.log(tol / a) / math.log(b))
    return int(min(max(cycles, 0) * P, cap))


def stacked_noise_covariance(noise):
    """Covariance of one stacked innovation cycle: block diagonal."""
    P, d = noise.P, noise.d
    blocks = np.zeros((P, P, d, d))
    for s in range(P):
        blocks[s, s] = noise.covariances[s]
    return BlockOp(blocks)


@dataclass(frozen=True)
class CovarianceSet:
    """Zero-lag covariance of the stacked cycle process plus lagged ones."""

    C: BlockOp
    lagged: dict = field(default_factory=dict)

    def lag(self, h):
        if h == 0:
            return self.C
        return self.lagged[h]


def stationary_covariance(cycle_op, ma_current, ma_prev, noise_cov, report=None):
    """Exact covariance of the stacked cycle process, doubly computed.

    Route one sums the moving average series truncated where the fitted
    geometric tail falls below 1e-13; route two iterates the fixed-point
    map ``C -> F C F* + S`` to a relative change below 1e-13. The two
    must agree to 1e-10 in HS norm or a :class:`NumericalFailure` is
    raised. The series result is returned.

    Parameters
    ----------
    cycle_op, ma_current, ma_prev : BlockOp
        Cycle operator and the two noise aggregation operators.
    noise_cov : BlockOp
        Covariance of one stacked innovation cycle.
    report : StationarityReport, optional
        Reused if already computed.
    """
    f = cycle_op.flat()
    d0 = ma_current.flat()
    d1 = ma_prev.flat()
    sig = noise_cov.flat()
    if not (f.shape == d0.shape == d1.shape == sig.shape):
        raise ValueError("cycle operator, aggregates and noise covariance must share shape")
    if report is None:
        report = check_stationarity(cycle_op)
    if report.j0 is None:
        raise AssumptionViolation(
            "cycle operator is not stable: no computed power has operator norm "
            "below 1, so no stationary covariance exists"
        )
    J = truncation_length(report)

    # series route
    series = d0 @ sig @ d0.T
    g = f @ d0 + d1
    term = g @ sig @ g.T
    for _ in range(J):
        series += term
        term = f @ term @ f.T

    # fixed-point route
    cross = (f @ d0) @ sig @ d1.T
    s = cross + cross.T + d1 @ sig @ d1.T + d0 @ sig @ d0.T
    fixed = s.copy()
    for _ in range(100_000):
        nxt = f @ fixed @ f.T + s
        delta = hs_distance(nxt, fixed)
        fixed = nxt
        if delta <= 1e-13 * max(1.0, hs_norm(fixed)):
            break
    else:
        raise NumericalFailure("fixed-point covariance iteration did not converge")

    gap = hs_distance(series, fixed)
    if gap > ROUTE_AGREE_TOL * max(1.0, hs_norm(series)):
        raise NumericalFailure(
            f"covariance routes disagree: HS gap {gap:.3e} exceeds {ROUTE_AGREE_TOL:.1e}"
        )
    P, d = cycle_op.P, cycle_op.d
    out = 0.5 * (series + series.T)
    return BlockOp.from_flat(out, P, P, d)


def lagged_covariances(cycle_op, ma_current, ma_prev, noise_cov, C, h_max):
    """Lagged covariances of the stacked cycle process for |h| <= h_max.

    Lag one adds the cross term from innovations shared by adjacent
    cycles; higher lags are reached by applying the cycle operator, and
    negative lags are adjoints of positive ones.
    """
    if h_max < 0:
        raise ValueError(f"h_max must be >= 0, got {h_max}")
    f = cycle_op.flat()
    P, d = cycle_op.P, cycle_op.d
    out = {0: C}
    if h_max == 0:
        return out
    cur = f @ C.flat() + ma_prev.flat() @ noise_cov.flat() @ ma_current.flat().T
    out[1] = BlockOp.from_flat(cur, P, P, d)
    for h in range(2, h_max + 1):
        cur = f @ cur
        out[h] = BlockOp.from_flat(cur, P, P, d)
    for h in range(1, h_max + 1):
        out[-h] = out[h].adjoint()
    return out


def model_covariances(model, h_max=1, report=None):
    """Stationarity report plus covariance set straight from a model."""
    cyc = cycle_matrix(model)
    if report is None:
        report = check_stationarity(cyc)
    cur, prev = ma_aggregates(model)
    noise_cov = stacked_noise_covariance(model.noise)
    C = stationary_covariance(cyc, cur, prev, noise_cov, report=report)
    lagged = lagged_covariances(cyc, cur, prev, noise_cov, C, h_max)
    return report, CovarianceSet(C=C, lagged=lagged)


# ---------------------------------------------------------------------------
# data diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WhitenessReport:
    """Cross-covariance norms of a vector series against a white threshold.

    A lag is flagged when the HS norm of its empirical cross-covariance
    exceeds ``3 * trace(lag-0 covariance) / sqrt(n)``; for uncorrelated
    data that threshold sits at three times the root mean square of the
    statistic, so flags indicate genuine serial correlation.
    """

    lag_norms: dict
    threshold: float
    trace0: float
    flags: tuple

    @property
    def is_white(self):
        return len(self.flags) == 0

    def to_dict(self):
        return {
            "lag_norms": {str(h): v for h, v in self.lag_norms.items()},
            "threshold": self.threshold,
            "trace0": self.trace0,
            "flags": list(self.flags),
        }


def whiteness_diagnostic(series, max_lag=10):
    """Flag serial correlation in a sequence of stacked vectors.

    Parameters
    ----------
    series : ndarray
        Shape ``(n, dim)``, one observation per row; ``n`` must be at
        least ``10 * max_lag``.
    max_lag : int
        Lags 1..max_lag are examined.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"series must be 2-d (n, dim), got shape {x.shape}")
    n = x.shape[0]
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    if n < 10 * max_lag:
        raise ValueError(
            f"series of length {n} is too short for max_lag={max_lag}; need >= {10 * max_lag}"
        )
    xc = x - x.mean(axis=0)
    c0 = xc.T @ xc / n
    trace0 = float(np.trace(c0))
    threshold = 3.0 * trace0 / math.sqrt(n)
    lag_norms = {}
    flags = []
    for h in range(1, max_lag + 1):
        ch = xc[h:].T @ xc[: n - h] / (n - h)
        norm = float(np.linalg.norm(ch))
        lag_norms[h] = norm
        if norm > threshold:
            flags.append(h)
    return WhitenessReport(
        lag_norms=lag_norms, threshold=threshold, trace0=trace0, flags=tuple(flags)
    )


@dataclass(frozen=True)
class DecayReport:
    """Coupling-distance decay across memory depths, with a log-linear fit."""

    m_values: tuple
    nu_hat: tuple
    tau: int
    slope: float
    intercept: float
    r_squared: float
    n_paths: int

    def to_dict(self):
        return {
            "m_values": list(self.m_values),
            "nu_hat": list(self.nu_hat),
            "tau": self.tau,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_paths": self.n_paths,
        }


def m_approx_decay(model, m_values, n_paths, rng, tau=2, horizon=None):
    """Estimate how fast the process forgets old innovations.

    For each depth ``m`` this draws ``n_paths`` coupled pairs sharing
    innovations up to ``m`` cycles back and computes the moment distance
    ``nu = (mean ||difference||**tau)**(1/tau)``, then fits a line to
    ``log nu`` against ``m``. Geometric forgetting shows as a clean
    negative slope.

    Parameters
    ----------
    model : FparmaModel
        Stationary, with strictly stationary (independent) innovations.
    m_values : sequence of int
        Depths, all >= 1.
    n_paths : int
        Pairs per depth.
    rng : RngStream
        Each depth uses a derived substream keyed by its value.
    tau : int
        2 or 4.
    horizon : int, optional
        Moving average truncation; shared across depths.
    """
    from . import sim  # deferred to keep module imports acyclic

    if tau not in (2, 4):
        raise ValueError(f"tau must be 2 or 4, got {tau}")
    m_values = [int(m) for m in m_values]
    if not m_values or any(m < 1 for m in m_values):
        raise ValueError("m_values must be a nonempty list of integers >= 1")
    if n_paths < 2:
        raise ValueError(f"n_paths must be >= 2, got {n_paths}")
    if horizon is None:
        report = check_stationarity(cycle_matrix(model))
        if report.j0 is None:
            raise AssumptionViolation("cycle operator is not stable")
        horizon = truncation_length(report)

    nu = []
    for m in m_values:
        x, x_coupled = sim.simulate_coupled(
            model, m, rng.substream(m), horizon=horizon, n_pairs=n_paths
        )
        diff = np.linalg.norm(x - x_coupled, axis=1)
        nu.append(float(np.mean(diff**tau) ** (1.0 / tau)))

    nu_arr = np.array(nu)
    mask = nu_arr > 0.0
    if mask.sum() >= 2:
        xs = np.array(m_values, dtype=float)[mask]
        ys = np.log(nu_arr[mask])
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = ys - (slope * xs + intercept)
        total = ys - ys.mean()
        ss_tot = float(total @ total)
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    else:
        slope, intercept, r2 = 0.0, 0.0, 0.0
    return DecayReport(
        m_values=tuple(m_values),
        nu_hat=tuple(nu),
        tau=tau,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        n_paths=int(n_paths),
    )


def season_covariances(values, P):
    """Per-season empirical covariances of a path, shape (P, d, d).

    Season ``s`` uses the observations at times ``s, s+P, s+2P, ...``
    (1-based), centered at the season mean.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"values must be 2-d, got shape {x.shape}")
    if x.shape[0] < 2 * P:
        raise ValueError("need at least two full cycles for per-season covariances")
    d = x.shape[1]
    out = np.zeros((P, d, d))
    for s in range(P):
        block = x[s::P]
        block = block - block.mean(axis=0)
        out[s] = block.T @ block / block.shape[0]
    return out
