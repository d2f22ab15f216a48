"""Utility families and their conjugates.

The solver only touches a utility through ``U``, ``dU``, ``I = (dU)^{-1}``,
``V(y) = sup_x U(x) - x y`` and ``d2V``. A discount weight ``beta > 0``
turns ``U`` into ``beta U``; then ``I_beta(y) = I(y / beta)`` and
``V_beta(y) = beta V(y / beta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of a utility map."""


def _pos(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be strictly positive")
    return x


@dataclass(frozen=True)
class UtilitySpec:
    """``kind`` is ``"log"`` or ``"power"`` (``U = x^p / p``, ``p < 1``, ``p != 0``).

    ``discount`` holds one weight per grid interval; ``None`` means all ones.
    """

    kind: str = "log"
    p: float | None = None
    discount: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("log", "power"):
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.kind == "power":
            if self.p is None or not self.p < 1 or self.p == 0:
                raise ValueError("power utility needs p < 1 and p != 0")
        elif self.p is not None:
            raise ValueError("log utility takes no exponent")
        if self.discount is not None:
            d = tuple(float(b) for b in self.discount)
            if any(not b > 0 for b in d):
                raise ValueError("discount weights must be positive")
            object.__setattr__(self, "discount", d)

    @classmethod
    def from_dict(cls, d: dict) -> "UtilitySpec":
        disc = d.get("discount")
        return cls(d["kind"], d.get("p"), None if disc is None else tuple(disc))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.p is not None:
            out["p"] = self.p
        if self.discount is not None:
            out["discount"] = list(self.discount)
        return out

    def beta(self, k=None):
        """Discount weight for interval ``k`` (array of indices allowed)."""
        if self.discount is None:
            return 1.0 if k is None or np.ndim(k) == 0 else np.ones(np.shape(k))
        d = np.asarray(self.discount)
        k = np.minimum(np.asarray(k), d.size - 1)
        return d[k]

    # raw maps, no discount -------------------------------------------------

    def _U(self, x):
        return np.log(x) if self.kind == "log" else x ** self.p / self.p

    def _dU(self, x):
        return 1.0 / x if self.kind == "log" else x ** (self.p - 1.0)

    def _I(self, y):
        return 1.0 / y if self.kind == "log" else y ** (1.0 / (self.p - 1.0))

    def _dI(self, y):
        if self.kind == "log":
            return -1.0 / y ** 2
        e = 1.0 / (self.p - 1.0)
        return e * y ** (e - 1.0)

    def _V(self, y):
        if self.kind == "log":
            return -np.log(y) - 1.0
        p = self.p
        return (1.0 - p) / p * y ** (p / (p - 1.0))

    # discounted maps -------------------------------------------------------

    def U(self, x, beta=1.0):
        return beta * self._U(_pos(x, "consumption"))

    def dU(self, x, beta=1.0):
        return beta * self._dU(_pos(x, "consumption"))

    def I(self, y, beta=1.0):
        return self._I(_pos(y, "marginal utility") / beta)

    def V(self, y, beta=1.0):
        return beta * self._V(_pos(y, "dual variable") / beta)

    def dV(self, y, beta=1.0):
        return -self.I(y, beta)

    def d2V(self, y, beta=1.0):
        return -self._dI(_pos(y, "dual variable") / beta) / beta


def evaluate(u: UtilitySpec, k, x=None, y=None) -> dict:
    """``U``, ``U'`` at ``x`` and ``I``, ``V`` at ``y`` with interval-``k`` discount."""
    beta = u.beta(k)
    out = {}
    if x is not None:
        out["U"] = u.U(x, beta)
        out["dU"] = u.dU(x, beta)
    if y is not None:
        out["I"] = u.I(y, beta)
        out["V"] = u.V(y, beta)
    return out


@dataclass
class RaeReport:
    ae_inf: float
    ae_zero: float | None
    passes_inf: bool
    passes_zero: bool | None
    grid: tuple[float, float]

    @property
    def ok(self) -> bool:
        return self.passes_inf and self.passes_zero is not False


def rae_smoke_check(u, x_grid=None, a: float = 0.0, b: float = 1.0) -> RaeReport:
    """Asymptotic elasticity ``x U'(x) / U(x)`` at the ends of a log grid.

    ``u`` is a :class:`UtilitySpec` or a plain callable. The utility is first
    shifted to ``a + b U`` (elasticity is affine invariant, so any shift that
    makes ``U`` positive at the right end works). When ``a`` is the default
    ``0`` and ``U`` is not positive there, ``a`` is chosen as ``1 - U(1)``.
    Conditions: ``AE_inf < 1``; for utilities unbounded below at zero,
    ``AE_0 = lim x U'/|U| <`` infinity is reported as a finite estimate.
    A diagnostic on a finite grid, nothing more.
    """
    if x_grid is None:
        x_grid = np.logspace(-6, 6, 121)
    x = np.asarray(x_grid, dtype=float)
    if isinstance(u, UtilitySpec):
        f, df = u.U, u.dU
    else:
        f = u

        def df(t):
            h = 1e-6 * t
            return (f(t + h) - f(t - h)) / (2 * h)
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = f(1.0)
    if a == 0.0 and np.isfinite(f1) and f1 <= 0:
        a = 1.0 - f1

    def g(t):
        return a + b * f(t)

    # elasticity converges like 1/ln x, so extrapolate linearly in that variable
    hi = x[x >= x[-1] ** 0.6] if x[-1] > 1 else x[-5:]
    ae = hi * b * df(hi) / g(hi)
    s = 1.0 / np.log(hi)
    _, ae_inf = np.polyfit(s, ae, 1)
    ae_inf = float(ae_inf)
    passes_inf = ae_inf < 1.0 - 1e-3
    lo = x[:3]
    flo = f(lo)
    ae_zero = None
    passes_zero = None
    if np.all(np.isfinite(flo)) and flo[0] < 0:
        e0 = lo * df(lo) / np.abs(g(lo))
        ae_zero = float(e0[0])
        passes_zero = bool(np.isfinite(ae_zero))
    return RaeReport(ae_inf, ae_zero, bool(passes_inf), passes_zero, (float(x[0]), float(x[-1])))
