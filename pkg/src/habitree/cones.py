"""Bid-ask matrices, solvency cones and their polars.

Positions are vectors in ``R^{1+d}`` of physical units, cash first. The
solvency cone at a node is spanned by the unit vectors and the exchange
vectors ``pi^{ij} e^i - e^j``; its polar holds the consistent price vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linprog import LpProblem, solve_lp

CONE_TOL = 1e-9


class ConeError(ValueError):
    pass


@dataclass(frozen=True)
class BidAskMatrix:
    """``pi[i, j]``: units of asset ``i`` paid for one unit of asset ``j``."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
            raise ConeError("bid-ask matrix must be square")
        if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
            raise ConeError("bid-ask entries must be finite and strictly positive")
        if np.any(np.abs(np.diag(pi) - 1.0) > 1e-12):
            raise ConeError("bid-ask diagonal must be 1")
        # pi^{ij} <= pi^{ik} pi^{kj}: no cheaper indirect exchange
        via = pi[:, :, None] * pi[None, :, :]  # via[i, k, j]
        worst = (pi - via.min(axis=1)) / pi
        if worst.max() > 1e-12:
            i, j = np.unravel_index(np.argmax(worst), worst.shape)
            raise ConeError(f"triangle condition fails for pair ({i}, {j})")
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_prices(cls, S, lam) -> "BidAskMatrix":
        """``pi^{ij} = (1 + lam^{ij}) S^j / S^i`` with cash price ``S^0 = 1``.

        ``lam`` is a scalar (the same rate for every ordered pair, cash
        included) or a full ``(1+d, 1+d)`` matrix with zero diagonal.
        """
        S = np.concatenate([[1.0], np.atleast_1d(np.asarray(S, dtype=float))])
        if np.any(S <= 0) or not np.all(np.isfinite(S)):
            raise ConeError("prices must be finite and strictly positive")
        D = S.size
        lam = np.asarray(lam, dtype=float)
        if lam.ndim == 0:
            if lam < 0:
                raise ConeError("transaction cost rate must be nonnegative")
            L = np.full((D, D), float(lam))
            np.fill_diagonal(L, 0.0)
        else:
            L = lam
            if L.shape != (D, D):
                raise ConeError(f"cost matrix must be {D}x{D}")
            if np.any(L < 0) or np.any(np.diag(L) != 0):
                raise ConeError("cost matrix needs nonnegative entries and zero diagonal")
        return cls((1.0 + L) * S[None, :] / S[:, None])

    @property
    def dim(self) -> int:
        return self.pi.shape[0]


class SolvencyCone:
    """Polyhedral cone given by its (unnormalized) generators, one per row."""

    def __init__(self, generators):
        g = np.asarray(generators, dtype=float)
        if g.ndim != 2:
            raise ConeError("generators must form a 2-d array")
        self.generators = g

    @property
    def dim(self) -> int:
        return self.generators.shape[1]

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.generators, axis=1)

    @cached_property
    def lineality(self) -> np.ndarray:
        """True for generators ``g`` whose negative also lies in the cone."""
        return np.array([cone_contains(self, -g) for g in self.generators])

    def margin_matrix(self, eps: float) -> np.ndarray:
        """Rows ``g - eps*|g|*1`` for non-lineality generators, ``g`` otherwise.

        ``rows @ w >= 0`` with ``w >= 0`` implies ``<g, w> >= eps |g| |w|`` for
        every generator outside the lineality space, since ``|w|_1 >= |w|_2``.
        """
        shift = np.where(self.lineality, 0.0, eps * self.norms)
        return self.generators - shift[:, None]


def solvency_generators(pi: BidAskMatrix) -> SolvencyCone:
    """Unit vectors followed by ``pi^{ij} e^i - e^j`` for each ordered pair."""
    D = pi.dim
    rows = [np.eye(D)[i] for i in range(D)]
    for i in range(D):
        for j in range(D):
            if i != j:
                g = np.zeros(D)
                g[i] = pi.pi[i, j]
                g[j] = -1.0
                rows.append(g)
    return SolvencyCone(np.array(rows))


def cone_at(S, lam) -> SolvencyCone:
    return solvency_generators(BidAskMatrix.from_prices(S, lam))


def cone_contains(K: SolvencyCone, v, tol: float = CONE_TOL) -> bool:
    """Is ``v`` a nonnegative combination of the generators?

    Phase-one LP: minimize the total absolute residual of ``G' a = v``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (K.dim,):
        raise ConeError(f"vector has dimension {v.size}, cone has {K.dim}")
    G = K.generators
    m, D = G.shape
    # variables: a (m), r+ (D), r- (D)
    A = np.hstack([G.T, np.eye(D), -np.eye(D)])
    c = np.concatenate([np.zeros(m), np.ones(2 * D)])
    res = solve_lp(LpProblem(c, A, ["="] * D, v))
    if not res.ok:
        return False
    return res.value <= tol * (1.0 + np.abs(v).max())


def polar_contains(K: SolvencyCone, w, eps: float = 0.0, relative: bool = False,
                   tol: float = 1e-12) -> bool:
    """``<g, w> >= eps |g| |w|`` for every generator ``g``.

    With ``relative=True`` the margin is only asked of generators outside the
    lineality space; those inside it get ``<g, w> >= 0`` (hence equality).
    This is the relative-interior reading used for frictionless pairs.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (K.dim,):
        raise ConeError(f"vector has dimension {w.size}, cone has {K.dim}")
    scale = K.norms * np.linalg.norm(w)
    need = eps * scale
    if relative:
        need = np.where(K.lineality, 0.0, need)
    return bool(np.all(K.generators @ w >= need - tol * (1.0 + scale)))


def polar_margin(K: SolvencyCone, w, relative: bool = False) -> float:
    """Smallest ``<g, w> / (|g| |w|)`` over the (non-lineality) generators."""
    w = np.asarray(w, dtype=float)
    r = (K.generators @ w) / (K.norms * max(np.linalg.norm(w), 1e-300))
    if relative:
        lin = K.lineality
        if lin.all():
            return np.inf
        return float(r[~lin].min())
    return float(r.min())


def is_efficient_friction(K: SolvencyCone) -> bool:
    """Pointedness: no convex combination of generators vanishes."""
    G = K.generators
    m, D = G.shape
    A = np.vstack([G.T, np.ones((1, m))])
    b = np.concatenate([np.zeros(D), [1.0]])
    res = solve_lp(LpProblem(np.zeros(m), A, ["="] * (D + 1), b))
    return not res.ok


def polar_interval(S: float, lam) -> tuple[float, float]:
    """Admissible shadow prices ``s`` with ``(1, s)`` in the polar, ``d = 1``."""
    pi = BidAskMatrix.from_prices([S], lam).pi
    return 1.0 / pi[1, 0], pi[0, 1]
