"""Robust counterparts of affine-feedback MPC programs.

Decision variables are an affine disturbance-feedback policy u = h + M w with
strictly causal M (step t feeds back only on errors observed before t).  Every
state/input constraint row must hold for all w in a product of per-channel
polytopes; by LP duality each row "a(y)' w <= b for all w in D" is replaced by
multipliers lam >= 0 per channel with

    g' lam <= b,   E' lam = a_channel(y),   F' lam = 0,

which is exact because the sets are polytopes.  Degenerate single-point
channels are substituted directly (their feedback columns are frozen at zero,
so a deterministic program falls out unchanged), making the zero-uncertainty
robust program literally identical to the certainty-equivalent one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .lp import LpSolution, LpStandardForm, solve_lp
from .thermal import LiftedModel
from .uncertainty import PolytopeForm, UncertaintySet, to_polytope
from .weather import CHANNELS


class RobustError(ValueError):
    """Ill-posed robust program (coverage, dimensions, empty sets)."""


def channel_indices(channel: str, horizon: int, q: int) -> np.ndarray:
    """Stacked-w coordinates owned by a named channel.

    Per-step errors interleave channel-major per step; "joint" claims the
    whole vector (used by the single-ball robust variant).
    """
    if channel == "joint":
        return np.arange(horizon * q)
    if channel not in CHANNELS:
        raise RobustError(f"unknown channel {channel!r}; expected {CHANNELS} or 'joint'")
    offset = CHANNELS.index(channel)
    if offset >= q:
        raise RobustError(f"channel {channel!r} needs error dimension > {offset}")
    return np.arange(horizon) * q + offset


@dataclass(frozen=True)
class AdfPolicy:
    """u = h + M w with strictly lower-block-triangular M."""

    h: np.ndarray            # (H*m,)
    M: np.ndarray            # (H*m, H*q)
    horizon: int
    m: int
    q: int

    def validate(self) -> None:
        H, m, q = self.horizon, self.m, self.q
        if self.h.shape != (H * m,) or self.M.shape != (H * m, H * q):
            raise RobustError("policy dimensions inconsistent with horizon")
        for t in range(H):
            block = self.M[t * m:(t + 1) * m, t * q:]
            if np.any(block != 0.0):
                raise RobustError(f"feedback at step {t} uses unobserved errors")

    def inputs_for(self, w: np.ndarray) -> np.ndarray:
        return self.h + self.M @ np.asarray(w, dtype=float).reshape(-1)

    @property
    def first_input(self) -> np.ndarray:
        return self.h[:self.m]


@dataclass
class RobustProgram:
    """One receding-horizon robust program instance.

    F_x f_x constrain the stacked predicted states, F_u f_u the stacked
    inputs; both hold for every disturbance in the product of channel sets.
    cost prices the nominal input plan h.  With soften=True the state rows
    get slack at slack_penalty per unit per hour.
    """

    lifted: LiftedModel
    F_x: np.ndarray
    f_x: np.ndarray
    F_u: np.ndarray
    f_u: np.ndarray
    sets: list[UncertaintySet]
    v: np.ndarray
    x0: np.ndarray
    cost: np.ndarray
    soften: bool = False
    slack_penalty: float = 1e6

    def validate(self) -> None:
        H, n = self.lifted.horizon, self.lifted.model.n
        m, p, q = self.lifted.model.m, self.lifted.model.p, self.lifted.model.q
        if self.F_x.ndim != 2 or self.F_x.shape[1] != H * n:
            raise RobustError(f"F_x must have {H * n} columns")
        if self.F_u.ndim != 2 or self.F_u.shape[1] != H * m:
            raise RobustError(f"F_u must have {H * m} columns")
        for name, mat, vec in (("state", self.F_x, self.f_x), ("input", self.F_u, self.f_u)):
            if mat.shape[0] != vec.shape[0]:
                raise RobustError(f"{name} constraint rows and bounds disagree")
        if self.v.reshape(-1).shape[0] != H * p:
            raise RobustError(f"nominal forecast must have {H * p} entries")
        if self.x0.reshape(-1).shape[0] != n:
            raise RobustError(f"initial state must have {n} entries")
        if self.cost.reshape(-1).shape[0] != H * m:
            raise RobustError(f"cost vector must have {H * m} entries")


def _check_nonempty(poly: PolytopeForm, channel: str) -> None:
    lp = LpStandardForm(
        c=np.zeros(poly.dim + poly.n_aux),
        G=sp.csr_matrix(np.hstack([poly.E, poly.F])),
        r=poly.g.copy(),
    )
    if solve_lp(lp).status == "infeasible":
        raise RobustError(f"uncertainty polytope for channel {channel!r} is empty")


@dataclass
class _ChannelSpec:
    channel: str
    indices: np.ndarray
    poly: PolytopeForm | None
    singleton: np.ndarray | None


class RobustLpTemplate:
    """Reusable LP structure for one program family.

    The constraint matrix and objective depend only on the model, horizon,
    uncertainty sets and constraint geometry; x0, forecast and bound values
    enter the right-hand side alone, so a receding-horizon controller builds
    the template once and refreshes the rhs each step.
    """

    def __init__(self, program: RobustProgram):
        program.validate()
        lifted = program.lifted
        H, n = lifted.horizon, lifted.model.n
        m, q = lifted.model.m, lifted.model.q
        self.horizon, self.m, self.q = H, m, q
        self.soften = program.soften
        n_xc = program.F_x.shape[0]
        n_uc = program.F_u.shape[0]

        # resolve channels into polytopes / singletons covering every coordinate
        covered = np.zeros(H * q, dtype=bool)
        specs: list[_ChannelSpec] = []
        for us in program.sets:
            idx = channel_indices(us.channel, H, q)
            if us.dim != idx.shape[0]:
                raise RobustError(
                    f"set for channel {us.channel!r} has dim {us.dim}, expected {idx.shape[0]}")
            if covered[idx].any():
                raise RobustError(f"channel {us.channel!r} overlaps another set")
            covered[idx] = True
            single = us.singleton()
            if single is None:
                poly = to_polytope(us)
                _check_nonempty(poly, us.channel)
                specs.append(_ChannelSpec(us.channel, idx, poly, None))
            else:
                specs.append(_ChannelSpec(us.channel, idx, None, single))
        if not covered.all():
            raise RobustError("uncertainty sets do not cover every error coordinate")
        self.specs = specs

        frozen = set()
        for spec in specs:
            if spec.singleton is not None:
                frozen.update(int(i) for i in spec.indices)
        # strictly causal feedback entries, singleton channels frozen at zero
        self.m_entries = [
            (t, j, im, c)
            for t in range(H) for j in range(t)
            for im in range(m) for c in range(q)
            if (j * q + c) not in frozen
        ]
        entry_col = {}
        n_h = H * m
        for e_idx, ent in enumerate(self.m_entries):
            entry_col[ent] = n_h + e_idx
        n_m = len(self.m_entries)
        next_col = n_h + n_m
        self.slack_cols = None
        if program.soften:
            self.slack_cols = slice(next_col, next_col + n_xc)
            next_col += n_xc

        phi_x = program.F_x @ lifted.Bu_bar          # h-coefficients of state rows
        omega_x = program.F_x @ lifted.Bw_bar        # direct w-coefficients
        phi_u = program.F_u
        omega_u = np.zeros((n_uc, H * q))
        rows_phi = np.vstack([phi_x, phi_u]) if n_uc else phi_x
        rows_omega = np.vstack([omega_x, omega_u]) if n_uc else omega_x
        n_rows_total = n_xc + n_uc

        G_rows: list[np.ndarray] = []
        G_cols: list[np.ndarray] = []
        G_vals: list[np.ndarray] = []
        rhs_parts: list[np.ndarray] = []

        def put(rr, cc, vv):
            G_rows.append(np.atleast_1d(np.asarray(rr, dtype=np.int64)))
            G_cols.append(np.atleast_1d(np.asarray(cc, dtype=np.int64)))
            G_vals.append(np.atleast_1d(np.asarray(vv, dtype=float)))

        # per-spec constant pieces, built once and restamped per robust row
        for spec in specs:
            if spec.poly is None:
                continue
            poly = spec.poly
            d_c, aux, R = poly.dim, poly.n_aux, poly.g.shape[0]
            er, ek = np.nonzero(poly.E)
            fr, fk = np.nonzero(poly.F)
            spec.block_rows = 2 * (d_c + aux) + R
            lr = np.concatenate([2 * ek, 2 * ek + 1, 2 * d_c + 2 * fk, 2 * d_c + 2 * fk + 1,
                                 2 * (d_c + aux) + np.arange(R)])
            lc = np.concatenate([er, er, fr, fr, np.arange(R)])
            lv = np.concatenate([poly.E[er, ek], -poly.E[er, ek],
                                 poly.F[fr, fk], -poly.F[fr, fk], -np.ones(R)])
            spec.block_coo = (lr, lc, lv)
            # feedback entries that hit this channel's coordinates
            cols = {int(ci): k for k, ci in enumerate(spec.indices)}
            ent_e, ent_k, ent_phi = [], [], []
            for e_idx, (t, j, im, c) in enumerate(self.m_entries):
                col = j * q + c
                if col in cols:
                    ent_e.append(n_h + e_idx)
                    ent_k.append(cols[col])
                    ent_phi.append(t * m + im)
            spec.ent_e = np.array(ent_e, dtype=np.int64)
            spec.ent_k = np.array(ent_k, dtype=np.int64)
            spec.ent_phi = np.array(ent_phi, dtype=np.int64)

        row_counter = 0
        main_rows = np.zeros(n_rows_total, dtype=np.int64)
        singleton_shift = np.zeros(n_rows_total)
        for r in range(n_rows_total):
            phi, omega = rows_phi[r], rows_omega[r]
            main = row_counter
            row_counter += 1
            main_rows[r] = main
            nz = np.nonzero(phi)[0]
            put(np.full(nz.shape[0], main), nz, phi[nz])
            if program.soften and r < n_xc:
                put(main, self.slack_cols.start + r, -1.0)
            rhs_parts.append(np.zeros(1))  # placeholder, filled via rhs()
            # the M-coupling of singleton channels vanishes (columns frozen),
            # so only the constant part survives
            for spec in specs:
                if spec.singleton is not None:
                    singleton_shift[r] += float(omega[spec.indices] @ spec.singleton)
                    continue
                a_const = omega[spec.indices]
                v = phi[spec.ent_phi] if spec.ent_e.size else np.zeros(0)
                mask = v != 0.0
                if not (a_const.any() or mask.any()):
                    continue  # row cannot see this channel; keep it deterministic
                poly = spec.poly
                d_c, aux, R = poly.dim, poly.n_aux, poly.g.shape[0]
                lam0 = next_col
                next_col += R
                base = row_counter
                row_counter += spec.block_rows
                # budget term on the main row
                put(np.full(R, main), lam0 + np.arange(R), poly.g)
                # E'lam / F'lam rows against lam columns
                lr, lc, lv = spec.block_coo
                put(base + lr, lam0 + lc, lv)
                # feedback coefficients: E'lam - a_M(y) = a_const
                if mask.any():
                    put(base + 2 * spec.ent_k[mask], spec.ent_e[mask], -v[mask])
                    put(base + 2 * spec.ent_k[mask] + 1, spec.ent_e[mask], v[mask])
                block_rhs = np.zeros(spec.block_rows)
                block_rhs[0:2 * d_c:2] = a_const
                block_rhs[1:2 * d_c:2] = -a_const
                rhs_parts.append(block_rhs)

        if program.soften:
            # slack must not subsidize rows with room to spare
            put(row_counter + np.arange(n_xc),
                self.slack_cols.start + np.arange(n_xc), -np.ones(n_xc))
            rhs_parts.append(np.zeros(n_xc))
            row_counter += n_xc

        n_rows = row_counter
        n_cols = next_col
        rhs_const = np.concatenate(rhs_parts) if rhs_parts else np.zeros(0)
        assert rhs_const.shape[0] == n_rows
        rhs_const[main_rows] = -singleton_shift

        G = sp.coo_matrix(
            (np.concatenate(G_vals), (np.concatenate(G_rows), np.concatenate(G_cols))),
            shape=(n_rows, n_cols)).tocsr()

        c = np.zeros(n_cols)
        c[:n_h] = program.cost.reshape(-1)
        if program.soften:
            penalty = program.slack_penalty * lifted.model.dt / 3600.0
            c[self.slack_cols] = penalty

        self.G = G
        self.c = c
        self.n_xc, self.n_uc = n_xc, n_uc
        self.main_rows = main_rows
        self.rhs_const = rhs_const
        self.Cx = program.F_x @ lifted.A_bar
        self.Cv = program.F_x @ lifted.Bv_bar
        self.variable_map = {"h": slice(0, n_h), "M": slice(n_h, n_h + n_m)}
        if program.soften:
            self.variable_map["slack"] = self.slack_cols

    def lp_for(self, x0: np.ndarray, v: np.ndarray, f_x: np.ndarray,
               f_u: np.ndarray) -> LpStandardForm:
        rhs = self.rhs_const.copy()
        bounds = np.concatenate([
            np.asarray(f_x, dtype=float).reshape(-1)
            - self.Cx @ np.asarray(x0, dtype=float).reshape(-1)
            - self.Cv @ np.asarray(v, dtype=float).reshape(-1),
            np.asarray(f_u, dtype=float).reshape(-1),
        ])
        rhs[self.main_rows] += bounds
        return LpStandardForm(c=self.c, G=self.G, r=rhs,
                              variable_map=dict(self.variable_map))

    def extract_policy(self, solution: LpSolution) -> AdfPolicy:
        y = solution.require_optimal()
        H, m, q = self.horizon, self.m, self.q
        h = y[self.variable_map["h"]].copy()
        M = np.zeros((H * m, H * q))
        for e_idx, (t, j, im, c) in enumerate(self.m_entries):
            M[t * m + im, j * q + c] = y[self.variable_map["M"].start + e_idx]
        policy = AdfPolicy(h=h, M=M, horizon=H, m=m, q=q)
        policy.validate()
        return policy

    def slack_total(self, solution: LpSolution) -> float:
        if self.slack_cols is None or solution.y is None:
            return 0.0
        return float(np.abs(solution.y[self.slack_cols]).sum())


def build_ddrmpc_lp(program: RobustProgram) -> LpStandardForm:
    """One-shot robust counterpart construction (template + rhs)."""
    template = RobustLpTemplate(program)
    return template.lp_for(program.x0, program.v, program.f_x, program.f_u)


def solve_robust_program(program: RobustProgram
                         ) -> tuple[AdfPolicy, LpSolution, RobustLpTemplate]:
    template = RobustLpTemplate(program)
    sol = solve_lp(template.lp_for(program.x0, program.v, program.f_x, program.f_u))
    policy = template.extract_policy(sol) if sol.status == "optimal" else None
    return policy, sol, template


def dual_support(poly: PolytopeForm, a: np.ndarray) -> float:
    """Worst-case value max{a'w : (w,z) in poly} via the dual LP.

    This is exactly the robust counterpart applied to a single constant row.
    """
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.shape[0] != poly.dim:
        raise RobustError(f"direction has dim {a.shape[0]}, polytope has {poly.dim}")
    R = poly.g.shape[0]
    G = sp.csr_matrix(np.vstack([poly.E.T, -poly.E.T, poly.F.T, -poly.F.T,
                                 -np.eye(R)]))
    r = np.concatenate([a, -a, np.zeros(2 * poly.n_aux + R)])
    sol = solve_lp(LpStandardForm(c=poly.g.copy(), G=G, r=r))
    if sol.status == "infeasible":
        raise RobustError("support LP infeasible: set is unbounded in this direction")
    if sol.status != "optimal":
        raise RobustError(f"support LP failed with status {sol.status}")
    return float(sol.objective)
