"""Dense two-phase simplex.

Small, deterministic LP kernel used by the cone tests, the price-system
polytope and the superhedging routines. Problems are converted to standard
form ``min c'y, Ay = b, y >= 0`` and solved on a dense tableau with
Dantzig pricing and a Harris ratio test; Bland's rule takes over after a
run of degenerate pivots.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
PERTURB = 1e-7


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LpProblem:
    """``min`` or ``max`` of ``c @ x`` subject to ``A x (<=|=|>=) b`` and bounds.

    ``senses`` holds one of ``"<="``, ``"="``, ``">="`` per row. ``lower`` and
    ``upper`` default to ``0`` and ``+inf``; infinite entries are allowed.
    """

    c: np.ndarray
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.senses = list(self.senses)
        m = self.A.shape[0]
        if self.b.size != m or len(self.senses) != m:
            raise ValueError("row count mismatch between A, b and senses")
        bad = set(self.senses) - {"<=", "=", ">="}
        if bad:
            raise ValueError(f"unknown row senses {sorted(bad)}")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("bounds must match the number of variables")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))):
            raise ValueError("objective, matrix and right-hand side must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class LpResult:
    status: Status
    x: np.ndarray | None = None
    value: float | None = None
    duals: np.ndarray | None = None
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class _Standard:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    # x = offset + recover @ y
    offset: np.ndarray
    recover: np.ndarray
    row_sign: np.ndarray
    n_orig_rows: int


def _to_standard(p: LpProblem) -> _Standard:
    n = p.c.size
    cols = []  # per original variable: list of (y index, coefficient)
    offset = np.zeros(n)
    extra_rows = []  # (y index, ub) rows y <= ub
    ny = 0
    for j in range(n):
        lo, hi = p.lower[j], p.upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append([(ny, 1.0)])
            if np.isfinite(hi):
                extra_rows.append((ny, hi - lo))
            ny += 1
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append([(ny, -1.0)])
            ny += 1
        else:
            cols.append([(ny, 1.0), (ny + 1, -1.0)])
            ny += 2
    recover = np.zeros((n, ny))
    for j, entries in enumerate(cols):
        for k, s in entries:
            recover[j, k] = s

    A = p.A @ recover
    b = p.b - p.A @ offset
    c = p.c @ recover
    senses = list(p.senses)
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        for r, (k, ub) in enumerate(extra_rows):
            E[r, k] = 1.0
        A = np.vstack([A, E])
        b = np.concatenate([b, [ub for _, ub in extra_rows]])
        senses += ["<="] * len(extra_rows)

    m = A.shape[0]
    n_slack = sum(s != "=" for s in senses)
    S = np.zeros((m, n_slack))
    k = 0
    for i, s in enumerate(senses):
        if s == "<=":
            S[i, k] = 1.0
            k += 1
        elif s == ">=":
            S[i, k] = -1.0
            k += 1
    A = np.hstack([A, S])
    c = np.concatenate([c, np.zeros(n_slack)])
    recover = np.hstack([recover, np.zeros((n, n_slack))])
    # zero-rhs ">=" rows are flipped too, so their surplus starts in the basis
    geq = np.array([s == ">=" for s in senses], dtype=bool)
    row_sign = np.where((b < 0) | ((b == 0) & geq), -1.0, 1.0)
    A = A * row_sign[:, None]
    b = b * row_sign
    return _Standard(A, b, c, offset, recover, row_sign, p.A.shape[0])


class _Tableau:
    """Dense simplex tableau; last row holds reduced costs, last column the rhs."""

    def __init__(self, A, b, basis, max_iter):
        m, n = A.shape
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = np.array(basis, dtype=int)
        self.m, self.n = m, n
        self.rows = np.arange(m)
        self.max_iter = max_iter
        self.iterations = 0

    def copy(self, max_iter):
        other = _Tableau.__new__(_Tableau)
        other.T = self.T.copy()
        other.basis = self.basis.copy()
        other.rows = self.rows.copy()
        other.m, other.n = self.m, self.n
        other.max_iter = max_iter
        other.iterations = 0
        return other

    def set_objective(self, c):
        self.T[-1, :-1] = c
        self.T[-1, -1] = 0.0
        cb = c[self.basis]
        self.T[-1] -= cb @ self.T[:-1]

    def pivot(self, r, s):
        T = self.T
        T[r] /= T[r, s]
        col = T[:, s].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = s

    def run(self, allowed):
        """Optimize the current objective; returns a Status."""
        T = self.T
        degenerate_run = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                return Status.NUMERICAL_FAILURE
            d = T[-1, :-1]
            cand = np.flatnonzero((d < -OPT_TOL) & allowed)
            if cand.size == 0:
                return Status.OPTIMAL
            s = cand[0] if bland else cand[np.argmin(d[cand])]
            col = T[:-1, s]
            rhs = T[:-1, -1]
            pos = col > PIVOT_TOL
            if not pos.any():
                return Status.UNBOUNDED
            ratios = np.full(self.m, np.inf)
            ratios[pos] = rhs[pos] / col[pos]
            best = ratios.min()
            if bland:
                ties = np.flatnonzero(ratios <= best + 1e-12 * (1.0 + abs(best)))
                r = ties[np.argmin(self.basis[ties])]
            else:
                # Harris two-pass test: relax by the feasibility tolerance, then
                # take the largest pivot among the rows within that step
                relaxed = np.full(self.m, np.inf)
                relaxed[pos] = (rhs[pos] + FEAS_TOL) / col[pos]
                cand = np.flatnonzero(pos & (ratios <= relaxed.min()))
                r = cand[np.argmax(col[cand])]
            if ratios[r] <= FEAS_TOL:
                degenerate_run += 1
                if degenerate_run > 50:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self.pivot(r, s)
            np.maximum(T[:-1, -1], 0.0, out=T[:-1, -1])
            self.iterations += 1


    def dual_run(self):
        """Dual simplex from a dual feasible basis until the rhs is nonnegative."""
        T = self.T
        while True:
            if self.iterations >= self.max_iter:
                return Status.NUMERICAL_FAILURE
            rhs = T[:-1, -1]
            r = int(np.argmin(rhs))
            if rhs[r] >= -FEAS_TOL:
                np.maximum(T[:-1, -1], 0.0, out=T[:-1, -1])
                return Status.OPTIMAL
            row = T[r, :-1]
            neg = row < -PIVOT_TOL
            if not neg.any():
                return Status.INFEASIBLE
            d = np.maximum(T[-1, :-1], 0.0)
            ratios = np.full(self.n, np.inf)
            ratios[neg] = d[neg] / -row[neg]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + OPT_TOL)
            s = ties[np.argmax(-row[ties])]
            self.pivot(r, s)
            self.iterations += 1


def _simplex(A, b, c_min, max_iter):
    """Two phases on ``min c'y, Ay = b >= 0, y >= 0``; returns (status, tableau)."""
    m, n = A.shape
    # initial basis: unit columns already present, artificials elsewhere
    basis = [-1] * m
    for j in range(n):
        col = A[:, j]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] == -1:
            basis[nz[0]] = j
    art_rows = [i for i in range(m) if basis[i] == -1]
    n_art = len(art_rows)
    Aa = np.hstack([A, np.zeros((m, n_art))])
    for k, i in enumerate(art_rows):
        Aa[i, n + k] = 1.0
        basis[i] = n + k
    tab = _Tableau(Aa, b, basis, max_iter)

    if n_art:
        c1 = np.zeros(n + n_art)
        c1[n:] = 1.0
        tab.set_objective(c1)
        status = tab.run(np.ones(n + n_art, dtype=bool))
        if status is Status.NUMERICAL_FAILURE:
            return status, tab
        if -tab.T[-1, -1] > FEAS_TOL * (1.0 + np.abs(b).max()):
            return Status.INFEASIBLE, tab
        # drive artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n:
                row = tab.T[r, :n]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, nz[0])
                else:
                    keep[r] = False
        if not keep.all():
            T = tab.T
            tab.T = np.vstack([T[:-1][keep], T[-1:]])
            tab.basis = tab.basis[keep]
            tab.rows = tab.rows[keep]
            tab.m = int(keep.sum())
        tab.T = np.delete(tab.T, np.s_[n:n + n_art], axis=1)
        tab.n = n

    tab.set_objective(c_min)
    return tab.run(np.ones(n, dtype=bool)), tab


def _basic_values(A, b, tab):
    B = A[np.ix_(tab.rows, tab.basis)]
    try:
        return np.linalg.solve(B, b[tab.rows])
    except np.linalg.LinAlgError:
        return None


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpResult:
    """Solve ``p`` with the two-phase simplex.

    Returned ``duals`` are shadow prices: the derivative of the optimal value
    (in the problem's own sense) with respect to each row's right-hand side.
    """
    res, _ = _solve_standard(_to_standard(p), p.c, p.maximize, None, max_iter)
    return res


class WarmLp:
    """Fixed constraints, changing objectives.

    Each solve restarts phase two from the last optimal basis, which is
    still primal feasible because only the objective moves.
    """

    def __init__(self, A, senses, b, lower=None, upper=None):
        self._template = LpProblem(np.zeros(np.shape(A)[1]), A, senses, b, lower, upper)
        self._st = _to_standard(self._template)
        self._tab = None

    def solve(self, c, maximize: bool = False, max_iter: int | None = None) -> LpResult:
        c = np.asarray(c, dtype=float).ravel()
        if c.size != self._template.c.size or not np.all(np.isfinite(c)):
            raise ValueError("objective must be finite and match the variable count")
        res, tab = _solve_standard(self._st, c, maximize, self._tab, max_iter)
        if res.ok:
            self._tab = tab
        return res


def _solve_standard(st: _Standard, p_c, maximize, warm, max_iter):
    A, b = st.A, st.b
    m, n = A.shape
    c = p_c @ st.recover
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000
    sign = -1.0 if maximize else 1.0
    c_min = sign * c

    if m == 0:
        if np.any(c_min < -OPT_TOL):
            return LpResult(Status.UNBOUNDED), None
        x = st.offset.copy()
        return LpResult(Status.OPTIMAL, x, float(p_c @ x), np.zeros(0)), None

    # A tiny deterministic rhs perturbation keeps zero-rhs (cone) rows from
    # stalling at a degenerate vertex; the final basis is then re-evaluated
    # with the true rhs and repaired by dual simplex steps if needed, and we
    # fall back to an unperturbed run if that fails.
    scale = 1.0 + np.abs(b).max()
    if warm is not None:
        tab = warm.copy(max_iter)
        tab.set_objective(c_min)
        status = tab.run(np.ones(tab.n, dtype=bool))
    else:
        bump = PERTURB * scale * (1.0 + np.modf(np.arange(m) * 0.6180339887498949)[0])
        status, tab = _simplex(A, b + bump, c_min, max_iter)
    xb = _basic_values(A, b, tab) if status is Status.OPTIMAL else None
    if xb is not None and xb.min() < -FEAS_TOL * scale:
        # the perturbed basis stays dual feasible; repair primal feasibility
        tab.T[:-1, -1] = xb
        status = tab.dual_run()
        xb = _basic_values(A, b, tab) if status is Status.OPTIMAL else None
    iters = tab.iterations
    if status is not Status.OPTIMAL or xb is None or xb.min() < -FEAS_TOL * scale:
        status, tab = _simplex(A, b, c_min, max_iter)
        iters += tab.iterations
        xb = _basic_values(A, b, tab) if status is Status.OPTIMAL else None
    if status is not Status.OPTIMAL:
        return LpResult(status, iterations=iters), None
    if xb is None:
        xb = tab.T[:-1, -1]

    # clean primal and dual values with one direct solve on the final basis
    rows = tab.rows
    B = A[np.ix_(rows, tab.basis)]
    try:
        mult_rows = np.linalg.solve(B.T, c_min[tab.basis])
    except np.linalg.LinAlgError:
        mult_rows = None
    xb = np.where((xb < 0) & (xb > -FEAS_TOL), 0.0, xb)
    y = np.zeros(n)
    y[tab.basis] = xb
    x = st.offset + st.recover @ y

    duals = None
    if mult_rows is not None:
        mult = np.zeros(m)
        mult[rows] = mult_rows
        # mult is d(min value)/d(b_std); undo row flips and the min/max sign
        d_std = mult * st.row_sign * sign
        duals = d_std[: st.n_orig_rows].copy()
    value = float(p_c @ x)
    return LpResult(Status.OPTIMAL, x, value, duals, iters), tab
