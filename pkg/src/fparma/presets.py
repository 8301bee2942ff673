"""Packaged models for experiments and tests.

The three-season benchmark has two active AR lags whose operators are
scalar multiples of one fixed diagonal operator with polynomially
decaying spectrum; two of the six coefficients are structurally zero.
Its cycle operator has a known closed form, which makes it the standard
target for structure checks and exact-recovery experiments. A random
stationary model factory covers the property tests.
"""

from __future__ import annotations

import numpy as np

from .hilbert import BlockOp
from .model import FparmaModel, NoiseSpec, cycle_matrix

__all__ = [
    "benchmark_spectrum",
    "benchmark_model",
    "benchmark_cycle_closed_form",
    "benchmark_noise",
    "random_stationary_model",
]


def benchmark_spectrum(d, beta=1.0, scale=0.5):
    """Eigenvalues ``scale * j**-(beta + 0.51)`` of the shared operator.

    The exponent keeps the operator inside the smoothness class of index
    ``beta`` with a little room to spare.
    """
    j = np.arange(1, d + 1, dtype=float)
    return scale * j ** -(beta + 0.51)


def benchmark_noise(d, P=3, distribution="gaussian"):
    """Season-varying diagonal innovation covariances, all positive."""
    base = 1.0 / np.arange(1, d + 1, dtype=float)
    cov = np.zeros((P, d, d))
    for s in range(P):
        cov[s] = np.diag((0.6 + 0.2 * s) * base)
    return NoiseSpec(cov, distribution)


def benchmark_model(
    d=8,
    beta=1.0,
    scale=0.5,
    c11=0.6,
    c21=0.6,
    c13=0.5,
    c22=0.6,
    distribution="gaussian",
):
    """Three-season pure AR benchmark with two active lags.

    Lag/season coefficients: ``(1,1) -> c11``, ``(2,1) -> c21``,
    ``(1,3) -> c13``, ``(2,2) -> c22``; the ``(1,2)`` and ``(2,3)``
    operators are zero. All operators share the diagonal spectrum from
    :func:`benchmark_spectrum` scaled by their coefficient.
    """
    op = np.diag(benchmark_spectrum(d, beta, scale))
    P, p = 3, 2
    phi = np.zeros((p, P, d, d))
    phi[0, 0] = c11 * op  # lag 1, season 1
    phi[1, 0] = c21 * op  # lag 2, season 1
    phi[0, 2] = c13 * op  # lag 1, season 3
    phi[1, 1] = c22 * op  # lag 2, season 2
    return FparmaModel(
        P=P,
        p=p,
        q=0,
        phi=phi,
        psi=np.zeros((0, P, d, d)),
        noise=benchmark_noise(d, P, distribution),
    )


def benchmark_cycle_closed_form(d=8, beta=1.0, scale=0.5, c11=0.6, c21=0.6, c13=0.5, c22=0.6):
    """Closed form of the benchmark's cycle operator.

    With the shared diagonal operator ``op``, the cycle operator is

        [ 0   c21*op   c11*op     ]
        [ 0   0        c22*op     ]
        [ 0   0        c13*c22*op^2 ]

    obtained by multiplying the three season companions by hand.
    """
    op = np.diag(benchmark_spectrum(d, beta, scale))
    blocks = np.zeros((3, 3, d, d))
    blocks[0, 1] = c21 * op
    blocks[0, 2] = c11 * op
    blocks[1, 2] = c22 * op
    blocks[2, 2] = c13 * c22 * (op @ op)
    return BlockOp(blocks)


def random_stationary_model(
    gen,
    P=None,
    p=None,
    q=None,
    d=None,
    target_radius=0.8,
    zero_fraction=0.3,
    distribution="gaussian",
):
    """Draw a random stationary model with mixed structure.

    Sizes left as None are drawn uniformly (P in 2..6, d in 1..3, orders
    below P). Random season operators are partially zeroed, the top-lag
    operator is kept alive at one season at least, and the AR family is
    rescaled until the cycle operator's spectral radius is at most
    ``target_radius``.
    """
    if P is None:
        P = int(gen.integers(2, 7))
    if p is None:
        p = int(gen.integers(0, P))
    if q is None:
        q = int(gen.integers(0, P))
    if d is None:
        d = int(gen.integers(1, 4))
    if not (0 <= p < P and 0 <= q < P):
        raise ValueError(f"orders must satisfy p, q < P, got p={p}, q={q}, P={P}")

    def draw_family(order):
        fam = gen.normal(size=(order, P, d, d)) / np.sqrt(d)
        if order:
            mask = gen.random((order, P)) < zero_fraction
            fam[mask] = 0.0
            s_keep = int(gen.integers(0, P))
            if np.linalg.norm(fam[order - 1, s_keep]) < 1e-6:
                fam[order - 1, s_keep] = gen.normal(size=(d, d)) / np.sqrt(d)
        return fam

    phi = draw_family(p)
    psi = draw_family(q)

    cov = np.zeros((P, d, d))
    for s in range(P):
        a = gen.normal(size=(d, d))
        cov[s] = a @ a.T / d + 0.05 * np.eye(d)
    noise = NoiseSpec(cov, distribution)

    model = FparmaModel(P=P, p=p, q=q, phi=phi, psi=psi, noise=noise)
    if p:
        for _ in range(200):
            radius = np.max(np.abs(np.linalg.eigvals(cycle_matrix(model).flat())))
            if radius <= target_radius:
                break
            shrink = 0.8 if radius < 10 else 0.5
            model = FparmaModel(
                P=P, p=p, q=q, phi=model.phi * shrink, psi=psi, noise=noise
            )
    return model
