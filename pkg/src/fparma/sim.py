"""Path simulation under periodic white noise.

Innovations are drawn per season from a counter-based generator family:
every ``(master_seed, stream_id)`` pair names an independent, reproducible
stream, so Monte Carlo sweeps can hand one stream to each task and obtain
results that do not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .hilbert import hs_norm
from .model import (
    AssumptionViolation,
    FparmaModel,
    NoiseSpec,
    cycle_matrix,
    ma_aggregates,
    require_valid,
    season_of,
)

__all__ = [
    "RngStream",
    "SamplePath",
    "noise_factors",
    "draw_noise",
    "stacked_noise",
    "simulate",
    "simulate_coupled",
    "write_path_csv",
    "read_path_csv",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Named random stream: a (master_seed, stream_id) pair.

    Two streams with different ids are statistically independent, and the
    draw sequence of each is a pure function of the pair, independent of
    any other stream's consumption.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_id < 0:
            raise ValueError("master_seed and stream_id must be nonnegative integers")

    def generator(self):
        """Fresh generator positioned at the start of this stream."""
        key = np.array(
            [self.master_seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64
        )
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset):
        """Derived stream; offsets partition the id space of one master seed."""
        return RngStream(self.master_seed, self.stream_id * 1_000_003 + offset + 1)


def noise_factors(noise):
    """Per-season factors turning standard draws into model innovations.

    Returns ``(factors, eigen)`` where ``factors[s]`` is the symmetric
    square root of the season ``s+1`` covariance (used for gaussian draws)
    and ``eigen[s] = (sqrt_eigs, vecs)`` for the scaled uniform draws.
    Rejects covariances that are not symmetric positive semidefinite.
    """
    P, d = noise.P, noise.d
    factors = np.zeros((P, d, d))
    eigen = []
    for s in range(P):
        c = noise.covariances[s]
        scale = max(1.0, float(np.abs(c).max()))
        if np.abs(c - c.T).max() > 1e-10 * scale:
            raise AssumptionViolation(f"season {s + 1} covariance is not symmetric")
        vals, vecs = np.linalg.eigh(0.5 * (c + c.T))
        if vals.min() < -1e-10 * scale:
            raise AssumptionViolation(
                f"season {s + 1} covariance is not positive semidefinite"
            )
        roots = np.sqrt(np.clip(vals, 0.0, None))
        factors[s] = (vecs * roots) @ vecs.T
        eigen.append((roots, vecs))
    return factors, eigen


def _draw(noise, season_idx, gen, n, factors, eigen):
    """n draws for 0-based season index, shape (n, d)."""
    if noise.distribution == "gaussian":
        z = gen.standard_normal((n, noise.d))
        return z @ factors[season_idx].T
    roots, vecs = eigen[season_idx]
    w = gen.uniform(-1.0, 1.0, (n, noise.d))
    return (w * (math.sqrt(3.0) * roots)) @ vecs.T


def draw_noise(noise, season, rng, size=None):
    """Draw innovation(s) for one season.

    Parameters
    ----------
    noise : NoiseSpec
    season : int
        Season in ``1..P``.
    rng : RngStream or numpy Generator
    size : int, optional
        Number of draws; omitted gives a single coefficient vector.
    """
    if not 1 <= season <= noise.P:
        raise ValueError(f"season must be in 1..{noise.P}, got {season}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    factors, eigen = noise_factors(noise)
    out = _draw(noise, season - 1, gen, 1 if size is None else int(size), factors, eigen)
    return out[0] if size is None else out


def stacked_noise(noise, gen, n, factors=None, eigen=None):
    """n stacked innovation cycles, shape (n, P*d), seasons in time order.

    Row k is the concatenation of one season-1 draw through one season-P
    draw, i.e. one full cycle of innovations.
    """
    if factors is None or eigen is None:
        factors, eigen = noise_factors(noise)
    P, d = noise.P, noise.d
    out = np.empty((n, P * d))
    for s in range(P):
        out[:, s * d : (s + 1) * d] = _draw(noise, s, gen, n, factors, eigen)
    return out


@dataclass(frozen=True)
class SamplePath:
    """Simulated trajectory with everything needed to replay it.

    ``values[t]`` is the coefficient vector of the process at time
    ``t + 1`` (times are 1-based and start in season 1). ``pre_values``
    and ``pre_innovations`` hold the lagged history immediately before
    time 1, oldest first, so the defining recursion can be re-run exactly.
    """

    P: int
    values: np.ndarray
    innovations: np.ndarray | None
    pre_values: np.ndarray
    pre_innovations: np.ndarray
    burn_in: int

    @property
    def n_steps(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def season(self, k):
        return season_of(k, self.P)

    def seasons(self):
        return np.array([season_of(k, self.P) for k in range(1, self.n_steps + 1)])

    def cycles(self):
        """Stacked full cycles, shape (n_cycles, P*d); row k is the window
        (X_{kP+1-P}, ..., X_{kP+P-P}) ... i.e. cycle k in time order."""
        n_full = self.n_steps // self.P
        return self.values[: n_full * self.P].reshape(n_full, self.P * self.d)


def _prepare_step_ops(model):
    """Per-season lists of (lag, matrix) skipping structural zeros."""
    ar, ma = [], []
    for s in range(1, model.P + 1):
        ar.append(
            [(i, model.ar_block(i, s)) for i in range(1, model.p + 1)
             if hs_norm(model.ar_block(i, s)) > 0.0]
        )
        ma.append(
            [(j, model.ma_block(j, s)) for j in range(1, model.q + 1)
             if hs_norm(model.ma_block(j, s)) > 0.0]
        )
    return ar, ma


def simulate(model, n_steps, rng, burn_in=None, keep_innovations=True):
    """Simulate ``n_steps`` values of the process, season 1 first.

    The recursion is started from zeros ``burn_in`` steps before time 1
    (a whole number of cycles) and the transient is discarded. The default
    burn-in is taken from the fitted geometric norm bound of the cycle
    operator so that the initialization error is below 1e-10.

    Parameters
    ----------
    model : FparmaModel
        Must be structurally valid and stationary.
    n_steps : int
        Number of emitted steps, at least ``P``.
    rng : RngStream
    burn_in : int, optional
        Number of discarded leading steps; rounded up to full cycles.
    keep_innovations : bool
        Store the innovation sequence alongside the path.

    Returns
    -------
    SamplePath
    """
    from . import probe  # deferred: probe feeds on sim draws for diagnostics

    require_valid(model)
    P, d = model.P, model.d
    if n_steps < P:
        raise ValueError(f"n_steps={n_steps} must be at least one full period ({P})")
    report = probe.check_stationarity(cycle_matrix(model))
    if report.j0 is None:
        raise AssumptionViolation(
            "cycle operator is not stable: no computed power has operator norm "
            "below 1, so no stationary solution is available"
        )
    if burn_in is None:
        burn_in = probe.default_burn_in(report, P)
    else:
        burn_in = int(math.ceil(burn_in / P)) * P
    gen = rng.generator() if isinstance(rng, RngStream) else rng

    total = burn_in + n_steps
    factors, eigen = noise_factors(model.noise)
    # innovation at array row t is for absolute time t - burn_in + 1;
    # with burn_in a multiple of P that time has season (t mod P) + 1
    eps = np.empty((total, d))
    for s in range(P):
        idx = np.arange(s, total, P)
        eps[idx] = _draw(model.noise, s, gen, idx.shape[0], factors, eigen)

    ar, ma = _prepare_step_ops(model)
    vals = np.zeros((total, d))
    for t in range(total):
        s = t % P
        x = eps[t].copy()
        for lag, op in ar[s]:
            if t - lag >= 0:
                x += op @ vals[t - lag]
        for lag, op in ma[s]:
            if t - lag >= 0:
                x += op @ eps[t - lag]
        vals[t] = x

    hist = max(model.p, 1)
    hist_eps = max(model.q, 1)
    pre_values = np.zeros((hist, d))
    pre_innovations = np.zeros((hist_eps, d))
    if burn_in >= hist:
        pre_values = vals[burn_in - hist : burn_in].copy()
    elif burn_in > 0:
        pre_values[hist - burn_in :] = vals[:burn_in]
    if burn_in >= hist_eps:
        pre_innovations = eps[burn_in - hist_eps : burn_in].copy()
    elif burn_in > 0:
        pre_innovations[hist_eps - burn_in :] = eps[:burn_in]

    return SamplePath(
        P=P,
        values=vals[burn_in:].copy(),
        innovations=eps[burn_in:].copy() if keep_innovations else None,
        pre_values=pre_values,
        pre_innovations=pre_innovations,
        burn_in=burn_in,
    )


def replay(model, path):
    """Re-run the defining recursion on a stored path's innovations.

    Returns the recomputed value array; equality with ``path.values`` is
    the replay correctness check.
    """
    if path.innovations is None:
        raise ValueError("path was simulated without stored innovations")
    P, d = model.P, model.d
    n = path.n_steps
    ar, ma = _prepare_step_ops(model)
    out = np.zeros((n, d))

    def value_at(t):  # t is 1-based absolute time
        if t >= 1:
            return out[t - 1]
        idx = path.pre_values.shape[0] + t - 1
        return path.pre_values[idx] if idx >= 0 else np.zeros(d)

    def eps_at(t):
        if t >= 1:
            return path.innovations[t - 1]
        idx = path.pre_innovations.shape[0] + t - 1
        return path.pre_innovations[idx] if idx >= 0 else np.zeros(d)

    for t in range(1, n + 1):
        s = (t - 1) % P
        x = eps_at(t).copy()
        for lag, op in ar[s]:
            x += op @ value_at(t - lag)
        for lag, op in ma[s]:
            x += op @ eps_at(t - lag)
        out[t - 1] = x
    return out


def simulate_coupled(model, m, rng, horizon=None, n_pairs=1):
    """Coupled pair for the dependence-decay diagnostic.

    Both members are evaluated at cycle index ``m`` through the truncated
    moving average solution of the one-step-per-cycle form. They share the
    innovation cycles at lags ``0 .. m-1``; beyond that the second member
    uses independent copies, so the pair difference measures how much the
    process remembers innovations older than ``m`` cycles.

    Parameters
    ----------
    model : FparmaModel
        Stationary; checked through the cycle operator norm report.
    m : int
        Coupling depth in cycles, at least 1.
    rng : RngStream
    horizon : int, optional
        Truncation length of the moving average solution; defaults to the
        length at which the fitted geometric tail drops below 1e-13.
    n_pairs : int
        Draw this many independent pairs at once (vectorized).

    Returns
    -------
    (x, x_coupled) : ndarray
        Each of shape ``(P*d,)``, or ``(n_pairs, P*d)`` when n_pairs > 1.
    """
    from . import probe

    require_valid(model)
    if m < 1:
        raise ValueError(f"coupling depth m must be >= 1, got {m}")
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    cyc = cycle_matrix(model)
    if horizon is None:
        report = probe.check_stationarity(cyc)
        if report.j0 is None:
            raise AssumptionViolation(
                "cycle operator is not stable: the moving average solution "
                "does not converge"
            )
        horizon = probe.truncation_length(report)
    horizon = int(horizon)

    f = cyc.flat()
    cur, prev = ma_aggregates(model)
    d0, d1 = cur.flat(), prev.flat()
    # weights[j] multiplies the innovation cycle at lag j
    weights = [d0]
    g = f @ d0 + d1
    for _ in range(1, horizon + 1):
        weights.append(g)
        g = f @ g
    n_lags = horizon + 1

    gen = rng.generator() if isinstance(rng, RngStream) else rng
    factors, eigen = noise_factors(model.noise)
    n_shared = min(m, n_lags)
    n_tail = n_lags - n_shared
    shared = np.stack(
        [stacked_noise(model.noise, gen, n_pairs, factors, eigen) for _ in range(n_shared)],
        axis=1,
    )
    if n_tail > 0:
        tail_true = np.stack(
            [stacked_noise(model.noise, gen, n_pairs, factors, eigen) for _ in range(n_tail)],
            axis=1,
        )
        tail_alt = np.stack(
            [stacked_noise(model.noise, gen, n_pairs, factors, eigen) for _ in range(n_tail)],
            axis=1,
        )

    dim = model.P * model.d
    x = np.zeros((n_pairs, dim))
    x_coupled = np.zeros((n_pairs, dim))
    for j in range(n_lags):
        wt = weights[j].T
        if j < n_shared:
            contrib = shared[:, j] @ wt
            x += contrib
            x_coupled += contrib
        else:
            x += tail_true[:, j - n_shared] @ wt
            x_coupled += tail_alt[:, j - n_shared] @ wt
    if n_pairs == 1:
        return x[0], x_coupled[0]
    return x, x_coupled


# ---------------------------------------------------------------------------
# delimited output
# ---------------------------------------------------------------------------


def write_path_csv(path, file):
    """Write a path as CSV rows ``k,season,c_1,...,c_d``.

    Coefficients are printed with 17 significant digits, enough for an
    exact binary round trip.
    """
    d = path.d
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        fh = open(file, "w", newline="")
        close = True
    else:
        fh = file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "season"] + [f"c_{i}" for i in range(1, d + 1)])
        for t in range(path.n_steps):
            k = t + 1
            row = [str(k), str(season_of(k, path.P))]
            row += [f"{v:.17g}" for v in path.values[t]]
            writer.writerow(row)
    finally:
        if close:
            fh.close()


def read_path_csv(file):
    """Read a path CSV back; returns ``(ks, seasons, values)`` arrays."""
    close = False
    if isinstance(file, (str, bytes)) or hasattr(file, "__fspath__"):
        fh = open(file, newline="")
        close = True
    else:
        fh = file
    try:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["k", "season"]:
            raise ValueError("path CSV must start with columns k,season")
        ks, seasons, values = [], [], []
        for row in reader:
            if not row:
                continue
            ks.append(int(row[0]))
            seasons.append(int(row[1]))
            values.append([float(x) for x in row[2:]])
    finally:
        if close:
            fh.close()
    return np.array(ks, dtype=int), np.array(seasons, dtype=int), np.array(values)
