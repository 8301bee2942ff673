"""Finite basis representations of Hilbert space elements and operators.

Everything in this package works with the first ``d`` coefficients of a
fixed orthonormal basis ``e_1, e_2, ...`` of a separable Hilbert space.
The conventions are:

* a function is a 1-d float array of length ``d`` (its coefficient vector),
* a bounded linear operator ``A`` is a ``(d, d)`` float array whose entry
  ``A[j, i]`` is the coefficient of ``A e_i`` on ``e_j``, so applying the
  operator is the ordinary matrix-vector product ``A @ x``,
* operators on the product space ``H^m`` are :class:`BlockOp` objects, a
  rectangular grid of ``(d, d)`` blocks.

With this layout operator composition is plain matrix multiplication and
the Hilbert-Schmidt norm is the Frobenius norm, so compositions written in
operator notation as left-multiplication translate verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisSpec",
    "BlockOp",
    "SpectralDecomp",
    "tensor_product",
    "apply_block",
    "compose_block",
    "operator_norm",
    "hs_norm",
    "hs_distance",
    "adjoint",
    "tikhonov_inverse",
    "spectral_decomp",
    "projector_onto_leading",
    "kernel_to_operator",
    "fourier_basis_values",
]

# Symmetry / positivity slack used when validating operator inputs.
SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class BasisSpec:
    """Number of retained basis coefficients and the basis family name.

    ``kind`` is only consulted by quadrature helpers; all linear algebra is
    basis-agnostic once coefficients are fixed.
    """

    d: int
    kind: str = "fourier"

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("basis truncation d must be a positive integer")
        if self.kind not in ("fourier", "abstract"):
            raise ValueError(f"unknown basis kind: {self.kind!r}")


def _as_function(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a coefficient vector, got shape {x.shape}")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"coefficient vector has length {x.shape[0]}, expected {d}")
    return x


def _as_operator(a, d=None):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square operator array, got shape {a.shape}")
    if d is not None and a.shape[0] != d:
        raise ValueError(f"operator has dimension {a.shape[0]}, expected {d}")
    return a


class BlockOp:
    """Operator between product spaces, stored as a grid of (d, d) blocks.

    Parameters
    ----------
    blocks : array_like
        Shape ``(rows, cols, d, d)``. ``blocks[i, j]`` maps component ``j``
        of the input tuple into component ``i`` of the output tuple.

    Notes
    -----
    Instances are immutable; all arithmetic returns new objects. The
    flattened ``(rows*d, cols*d)`` matrix acts on stacked coefficient
    vectors by ordinary matrix-vector multiplication.
    """

    __slots__ = ("blocks",)

    def __init__(self, blocks):
        arr = np.array(blocks, dtype=float)
        if arr.ndim != 4 or arr.shape[2] != arr.shape[3]:
            raise ValueError(
                f"blocks must have shape (rows, cols, d, d), got {arr.shape}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "blocks", arr)

    def __setattr__(self, name, value):
        raise AttributeError("BlockOp is immutable")

    # -- structure ---------------------------------------------------------

    @property
    def rows(self):
        return self.blocks.shape[0]

    @property
    def cols(self):
        return self.blocks.shape[1]

    @property
    def d(self):
        return self.blocks.shape[2]

    @property
    def P(self):
        """Block count for a square grid; errors on rectangular grids."""
        if self.rows != self.cols:
            raise ValueError(f"block grid is {self.rows}x{self.cols}, not square")
        return self.rows

    def block(self, i, j):
        """Return block ``(i, j)`` (0-based) as a fresh array."""
        return np.array(self.blocks[i, j])

    @classmethod
    def identity(cls, P, d):
        blocks = np.zeros((P, P, d, d))
        idx = np.arange(P)
        blocks[idx, idx] = np.eye(d)
        return cls(blocks)

    @classmethod
    def zero(cls, rows, cols, d):
        return cls(np.zeros((rows, cols, d, d)))

    @classmethod
    def from_flat(cls, mat, rows, cols, d):
        """Inverse of :meth:`flat`: cut a matrix back into blocks."""
        mat = np.asarray(mat, dtype=float)
        if mat.shape != (rows * d, cols * d):
            raise ValueError(
                f"matrix shape {mat.shape} does not match ({rows * d}, {cols * d})"
            )
        blocks = mat.reshape(rows, d, cols, d).transpose(0, 2, 1, 3)
        return cls(blocks)

    def flat(self):
        """Flattened ``(rows*d, cols*d)`` matrix acting on stacked vectors."""
        r, c, d = self.rows, self.cols, self.d
        return np.ascontiguousarray(
            self.blocks.transpose(0, 2, 1, 3).reshape(r * d, c * d)
        )

    # -- algebra -----------------------------------------------------------

    def apply(self, v):
        """Apply to a stacked vector (or a batch, one vector per row)."""
        v = np.asarray(v, dtype=float)
        n = self.cols * self.d
        if v.shape[-1] != n:
            raise ValueError(f"stacked vector has length {v.shape[-1]}, expected {n}")
        return v @ self.flat().T if v.ndim > 1 else self.flat() @ v

    def compose(self, other):
        """Composition ``self  after  other`` (matrix product of flats)."""
        if not isinstance(other, BlockOp):
            raise TypeError("compose expects another BlockOp")
        if other.rows != self.cols or other.d != self.d:
            raise ValueError(
                f"cannot compose {self.rows}x{self.cols} with {other.rows}x{other.cols}"
            )
        return BlockOp.from_flat(
            self.flat() @ other.flat(), self.rows, other.cols, self.d
        )

    def adjoint(self):
        return BlockOp(self.blocks.transpose(1, 0, 3, 2))

    def __add__(self, other):
        if not isinstance(other, BlockOp) or other.blocks.shape != self.blocks.shape:
            raise ValueError("can only add BlockOps with identical block layout")
        return BlockOp(self.blocks + other.blocks)

    def __sub__(self, other):
        if not isinstance(other, BlockOp) or other.blocks.shape != self.blocks.shape:
            raise ValueError("can only subtract BlockOps with identical block layout")
        return BlockOp(self.blocks - other.blocks)

    def __mul__(self, scalar):
        return BlockOp(self.blocks * float(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return self.compose(other)

    def op_norm(self):
        return operator_norm(self.flat())

    def hs_norm(self):
        return float(np.linalg.norm(self.blocks))

    def __repr__(self):
        return f"BlockOp(rows={self.rows}, cols={self.cols}, d={self.d})"


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigenvalues (non-increasing) and matching orthonormal eigenvectors.

    ``eigenvectors[:, k]`` is the stacked coefficient vector for
    ``eigenvalues[k]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _flat_of(a):
    """Accept a raw operator array or a BlockOp and return the flat matrix."""
    if isinstance(a, BlockOp):
        return a.flat()
    return np.asarray(a, dtype=float)


def tensor_product(x, y):
    """Rank-one operator ``z -> <x, z> y``.

    Entry ``[j, i]`` of the result is ``y[j] * x[i]``, so the operator
    picks up the component of its argument along ``x`` and emits ``y``.
    """
    x = _as_function(x)
    y = _as_function(y, d=x.shape[0])
    return np.outer(y, x)


def apply_block(b, v):
    """Apply a block operator to a stacked coefficient vector."""
    if not isinstance(b, BlockOp):
        raise TypeError("apply_block expects a BlockOp")
    return b.apply(v)


def compose_block(a, b):
    """Composition ``a after b`` of two block operators."""
    if not isinstance(a, BlockOp):
        raise TypeError("compose_block expects BlockOp arguments")
    return a.compose(b)


def operator_norm(a):
    """Largest singular value of the (flattened) operator."""
    m = _flat_of(a)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def hs_norm(a):
    """Hilbert-Schmidt (Frobenius) norm of the (flattened) operator."""
    m = _flat_of(a)
    return float(np.linalg.norm(m))


def hs_distance(a, b):
    """Hilbert-Schmidt norm of the difference of two operators."""
    ma, mb = _flat_of(a), _flat_of(b)
    if ma.shape != mb.shape:
        raise ValueError(f"shape mismatch: {ma.shape} vs {mb.shape}")
    return float(np.linalg.norm(ma - mb))


def adjoint(a):
    """Adjoint of an operator array (transpose in a real orthonormal basis)."""
    return _as_operator(a).T.copy() if not isinstance(a, BlockOp) else a.adjoint()


def tikhonov_inverse(a, theta):
    """Regularized inverse ``A* (A A* + theta I)^{-1}``.

    Damps the contribution of small singular values instead of amplifying
    them: on the singular triple ``(u, s, v)``, the result acts like
    ``s / (s^2 + theta)`` from image back to domain.

    Parameters
    ----------
    a : ndarray or BlockOp
    theta : float
        Strictly positive damping parameter.
    """
    if not theta > 0:
        raise ValueError(f"regularization parameter must be positive, got {theta}")
    m = _flat_of(a)
    gram = m @ m.T
    gram[np.diag_indices_from(gram)] += theta
    inv = m.T @ np.linalg.inv(gram)
    if isinstance(a, BlockOp):
        return BlockOp.from_flat(inv, a.cols, a.rows, a.d)
    return inv


def spectral_decomp(a, assume_self_adjoint=True):
    """Eigendecomposition of a self-adjoint operator, sorted non-increasing.

    Parameters
    ----------
    a : ndarray or BlockOp
    assume_self_adjoint : bool
        When True the input is checked for symmetry (HS tolerance 1e-8)
        and the symmetric eigensolver is used.

    Returns
    -------
    SpectralDecomp
    """
    m = _flat_of(a)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"spectral decomposition needs a square operator, got {m.shape}")
    if assume_self_adjoint:
        if hs_distance(m, m.T) > SYMMETRY_TOL * max(1.0, hs_norm(m)):
            raise ValueError("operator is not self-adjoint within tolerance")
        vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    else:
        vals, vecs = np.linalg.eig(m)
        if np.max(np.abs(vals.imag)) > SYMMETRY_TOL * max(1.0, hs_norm(m)):
            raise ValueError("operator has genuinely complex spectrum")
        vals, vecs = vals.real, vecs.real
    order = np.argsort(vals)[::-1]
    return SpectralDecomp(np.array(vals[order]), np.array(vecs[:, order]))


def projector_onto_leading(decomp, k):
    """Orthogonal projector onto the span of the leading ``k`` eigenvectors."""
    vecs = decomp.eigenvectors
    if not 0 <= k <= vecs.shape[1]:
        raise ValueError(f"k must lie in [0, {vecs.shape[1]}], got {k}")
    lead = vecs[:, :k]
    return lead @ lead.T


def fourier_basis_values(d, t):
    """Values of the first ``d`` real Fourier basis functions on [0, 1].

    Basis order: constant 1, then sqrt(2)cos(2 pi t), sqrt(2)sin(2 pi t),
    sqrt(2)cos(4 pi t), sqrt(2)sin(4 pi t), ...

    Returns an array of shape ``(d, len(t))``.
    """
    t = np.asarray(t, dtype=float)
    out = np.empty((d, t.shape[0]))
    out[0] = 1.0
    for i in range(1, d):
        freq = (i + 1) // 2
        angle = 2.0 * np.pi * freq * t
        out[i] = np.sqrt(2.0) * (np.cos(angle) if i % 2 == 1 else np.sin(angle))
    return out


def kernel_to_operator(kernel, basis, quad_points=256):
    """Project an integral kernel on [0,1]^2 onto the truncated basis.

    The operator sends x to ``t -> integral g(s, t) x(s) ds``; its entry
    ``[j, i]`` is the double integral of ``g(s, t) e_i(s) e_j(t)``,
    computed with the trapezoid rule on a uniform grid.

    Parameters
    ----------
    kernel : callable
        Vectorized ``g(s, t)`` accepting broadcast arrays.
    basis : BasisSpec
        Must have ``kind == "fourier"``.
    quad_points : int
        Grid size; must be at least ``2 * basis.d`` so the top retained
        frequency is resolved.
    """
    if basis.kind != "fourier":
        raise ValueError("quadrature is only defined for the fourier basis")
    if quad_points < 2 * basis.d:
        raise ValueError(
            f"quad_points={quad_points} is too coarse for d={basis.d}; need >= {2 * basis.d}"
        )
    t = np.linspace(0.0, 1.0, quad_points)
    w = np.full(quad_points, 1.0 / (quad_points - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    values = fourier_basis_values(basis.d, t)
    grid = np.asarray(kernel(t[:, None], t[None, :]), dtype=float)
    if grid.shape != (quad_points, quad_points):
        raise ValueError("kernel callable must broadcast to the quadrature grid")
    weighted = values * w
    # B[i, j] = integral g(s,t) e_i(s) e_j(t); operator entry [j, i] = B[i, j]
    return (weighted @ grid @ weighted.T).T
