"""Linear-program standard form and a deterministic solver backend.

Everything downstream (robust counterparts, MPC steps) funnels into one
canonical shape: minimize c'y subject to G y <= r with free variables.
Equalities are encoded as paired inequality rows and sign constraints as
explicit rows, which keeps the form trivially serializable; the backend's
presolve recovers the structure.  Solves are deterministic for identical
input, which the receding-horizon replay tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_ITERATION_LIMIT = "iteration_limit"

_SCIPY_STATUS = {
    0: STATUS_OPTIMAL,
    1: STATUS_ITERATION_LIMIT,
    2: STATUS_INFEASIBLE,
    3: STATUS_UNBOUNDED,
}


class LpError(RuntimeError):
    """Solver backend failure (numerical breakdown, malformed problem)."""


@dataclass
class LpStandardForm:
    """min c'y  s.t.  G y <= r, y free.

    variable_map names index ranges of y so callers can pull structured
    pieces (inputs, feedback entries, dual multipliers) out of a solution.
    """

    c: np.ndarray
    G: sp.csr_matrix
    r: np.ndarray
    variable_map: dict[str, slice] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])

    @property
    def n_rows(self) -> int:
        return int(self.r.shape[0])

    def validate(self) -> None:
        if self.G.shape != (self.r.shape[0], self.c.shape[0]):
            raise LpError(
                f"inconsistent shapes: G {self.G.shape}, r {self.r.shape}, c {self.c.shape}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.r))
                and np.all(np.isfinite(self.G.data))):
            raise LpError("non-finite coefficient in LP")


@dataclass
class LpSolution:
    status: str
    y: np.ndarray | None
    objective: float | None
    max_violation: float
    comp_slack_residual: float
    iterations: int = 0

    def require_optimal(self) -> np.ndarray:
        if self.status != STATUS_OPTIMAL or self.y is None:
            raise LpError(f"LP not solved to optimality: status={self.status}")
        return self.y


def solve_lp(lp: LpStandardForm, maxiter: int | None = None) -> LpSolution:
    """Solve via the HiGHS backend; single-threaded and deterministic.

    When optimal, the solution is checked against the contract:
    max constraint violation <= 1e-7 * (1 + ||r||_inf) and a scaled
    complementary-slackness residual <= 1e-6.
    """
    lp.validate()
    options = {"presolve": True}
    if maxiter is not None:
        options["maxiter"] = maxiter
    res = linprog(
        lp.c, A_ub=lp.G, b_ub=lp.r, bounds=(None, None),
        method="highs", options=options,
    )
    status = _SCIPY_STATUS.get(res.status)
    if status is None:
        raise LpError(f"backend reported unexpected status {res.status}: {res.message}")
    if status != STATUS_OPTIMAL:
        return LpSolution(status=status, y=None, objective=None,
                          max_violation=np.inf, comp_slack_residual=np.inf,
                          iterations=int(getattr(res, "nit", 0) or 0))

    y = np.asarray(res.x, dtype=float)
    slack = lp.r - lp.G @ y
    max_violation = float(max(0.0, -slack.min())) if slack.size else 0.0
    duals = -np.asarray(res.ineqlin.marginals, dtype=float)
    if slack.size:
        scaled = np.abs(duals * slack) / (1.0 + np.abs(lp.r))
        comp_slack = float(scaled.max())
    else:
        comp_slack = 0.0
    tol_violation = 1e-7 * (1.0 + (float(np.abs(lp.r).max()) if lp.r.size else 0.0))
    if max_violation > tol_violation or comp_slack > 1e-6:
        raise LpError(
            f"optimal solution out of tolerance: violation={max_violation:.3e}, "
            f"comp_slack={comp_slack:.3e}")
    return LpSolution(
        status=STATUS_OPTIMAL, y=y, objective=float(res.fun),
        max_violation=max_violation, comp_slack_residual=comp_slack,
        iterations=int(getattr(res, "nit", 0) or 0),
    )


def export_lp_text(lp: LpStandardForm, path: str | Path) -> None:
    """Plain-text dump for cross-checking against external solvers.

    Format (whitespace separated):
        line 1:  n_vars n_rows
        line 2:  objective coefficients (n_vars floats)
        rows:    one line per constraint, n_vars coefficients then the rhs
    """
    lp.validate()
    dense = lp.G.toarray()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{lp.n_vars} {lp.n_rows}\n")
        fh.write(" ".join(repr(v) for v in lp.c.tolist()) + "\n")
        rhs = lp.r.tolist()
        for i in range(lp.n_rows):
            row = " ".join(repr(v) for v in dense[i].tolist())
            fh.write(f"{row} {rhs[i]!r}\n")


def import_lp_text(path: str | Path) -> LpStandardForm:
    """Inverse of export_lp_text (no variable map)."""
    with open(path, "r", encoding="utf-8") as fh:
        n_vars, n_rows = (int(tok) for tok in fh.readline().split())
        c = np.array([float(tok) for tok in fh.readline().split()])
        rows = np.zeros((n_rows, n_vars))
        r = np.zeros(n_rows)
        for i in range(n_rows):
            vals = [float(tok) for tok in fh.readline().split()]
            rows[i] = vals[:-1]
            r[i] = vals[-1]
    if c.shape[0] != n_vars:
        raise LpError("objective length does not match header")
    return LpStandardForm(c=c, G=sp.csr_matrix(rows), r=r)
