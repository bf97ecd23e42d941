"""Independent oracles for the test suite.

Everything here is deliberately naive: a dense two-phase simplex, brute-force
sign enumeration, fixed-step integrators, an off-the-shelf QP solver on a
reduced problem.  None of it shares code with the package, so agreement is
evidence rather than tautology.
"""

from __future__ import annotations

import itertools

import numpy as np

# --- dense two-phase simplex (Bland's rule) -----------------------------------


def _simplex_phase(T, basis, n_total, tol=1e-9):
    """Run the simplex method on tableau T in place.  Bland's rule, so no
    cycling.  Returns 'optimal' or 'unbounded'."""
    m = T.shape[0] - 1
    while True:
        cost = T[-1, :n_total]
        enter = -1
        for j in range(n_total):
            if cost[j] < -tol:
                enter = j
                break
        if enter < 0:
            return "optimal"
        ratios = []
        for i in range(m):
            if T[i, enter] > tol:
                ratios.append((T[i, -1] / T[i, enter], basis[i], i))
        if not ratios:
            return "unbounded"
        _, _, leave = min(ratios, key=lambda r: (r[0], r[1]))
        piv = T[leave, enter]
        T[leave] /= piv
        for i in range(T.shape[0]):
            if i != leave and abs(T[i, enter]) > 0:
                T[i] -= T[i, enter] * T[leave]
        basis[leave] = enter


def simplex_solve(c, G, r, tol=1e-9):
    """min c @ y  s.t.  G @ y <= r, y free.

    Free variables are split into positive parts; inequalities get slacks.
    Returns (status, y, objective) with status in optimal/infeasible/unbounded.
    """
    c = np.asarray(c, dtype=float)
    G = np.asarray(G, dtype=float)
    r = np.asarray(r, dtype=float)
    m, n = G.shape
    # columns: y+ (n), y- (n), slack (m), artificial (added per negative row)
    A = np.hstack([G, -G, np.eye(m)])
    b = r.copy()
    cc = np.concatenate([c, -c, np.zeros(m)])
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    n_core = A.shape[1]
    art_rows = np.flatnonzero(neg)
    A = np.hstack([A, np.zeros((m, len(art_rows)))])
    basis = [0] * m
    for i in range(m):
        if neg[i]:
            k = np.flatnonzero(art_rows == i)[0]
            A[i, n_core + k] = 1.0
            basis[i] = n_core + k
        else:
            basis[i] = 2 * n + i
    n_total = A.shape[1]

    if len(art_rows):
        # phase 1: minimize artificial sum
        T = np.zeros((m + 1, n_total + 1))
        T[:m, :n_total] = A
        T[:m, -1] = b
        obj = np.zeros(n_total)
        obj[n_core:] = 1.0
        T[-1, :n_total] = obj
        for i in range(m):
            if basis[i] >= n_core:
                T[-1] -= T[i]
        status = _simplex_phase(T, basis, n_total, tol)
        if T[-1, -1] < -tol:
            return "infeasible", None, None
        # drive artificials out of the basis where possible
        for i in range(m):
            if basis[i] >= n_core:
                row = T[i, :n_core]
                js = np.flatnonzero(np.abs(row) > tol)
                if len(js):
                    j = js[0]
                    piv = T[i, j]
                    T[i] /= piv
                    for k in range(m + 1):
                        if k != i and abs(T[k, j]) > 0:
                            T[k] -= T[k, j] * T[i]
                    basis[i] = j
        A = T[:m, :n_core]
        b = T[:m, -1].copy()
        keep = [i for i in range(m) if basis[i] < n_core]
        drop = [i for i in range(m) if basis[i] >= n_core]
        if drop:  # redundant zero rows
            A = A[keep]
            b = b[keep]
            basis = [basis[i] for i in keep]
            m = len(keep)
        n_total = n_core

    T = np.zeros((m + 1, n_total + 1))
    T[:m, :n_total] = A[:, :n_total]
    T[:m, -1] = b
    T[-1, :n_total] = cc[:n_total]
    for i in range(m):
        T[-1] -= T[-1, basis[i]] * T[i]
    status = _simplex_phase(T, basis, n_total, tol)
    if status == "unbounded":
        return "unbounded", None, None
    x = np.zeros(n_total)
    for i in range(m):
        x[basis[i]] = T[i, -1]
    y = x[:n] - x[n:2 * n]
    return "optimal", y, float(c @ y)


# --- fixed-step integrators -----------------------------------------------------


def rk4_integrate(deriv, x0, t0, t1, n_steps):
    x = np.asarray(x0, dtype=float).copy()
    h = (t1 - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        k1 = deriv(t, x)
        k2 = deriv(t + h / 2, x + h / 2 * k1)
        k3 = deriv(t + h / 2, x + h / 2 * k2)
        k4 = deriv(t + h, x + h * k3)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def euler_integrate(deriv, x0, t0, t1, n_steps):
    x = np.asarray(x0, dtype=float).copy()
    h = (t1 - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        x = x + h * deriv(t, x)
        t += h
    return x


# --- reduced-space QP oracle for the clustering dual ----------------------------


def svc_dual_qp(dist, caps):
    """Solve max alpha @ dist @ alpha s.t. sum alpha = 1, 0 <= alpha <= caps,
    by eliminating the equality.  On the zero-sum subspace an L1 distance
    matrix is negative semidefinite, so the reduced problem is a convex QP.

    Returns (alpha, objective).
    """
    from cvxopt import matrix, solvers

    dist = np.asarray(dist, dtype=float)
    caps = np.asarray(caps, dtype=float)
    n = dist.shape[0]
    if n == 1:
        return np.ones(1), 0.0
    # alpha = alpha0 + N z with N spanning {x : sum x = 0}
    alpha0 = caps / caps.sum()
    N = np.zeros((n, n - 1))
    N[:-1, :] = np.eye(n - 1)
    N[-1, :] = -1.0
    P = -2.0 * (N.T @ dist @ N)
    P = 0.5 * (P + P.T)
    # tiny ridge guards rank deficiency at machine precision
    P += 1e-10 * np.eye(n - 1) * max(1.0, np.abs(P).max())
    q = -2.0 * (N.T @ dist @ alpha0)
    Gq = np.vstack([N, -N])
    hq = np.concatenate([caps - alpha0, alpha0])
    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-10
    solvers.options["reltol"] = 1e-10
    solvers.options["feastol"] = 1e-9
    sol = solvers.qp(matrix(P), matrix(q), matrix(Gq), matrix(hq))
    z = np.array(sol["x"]).ravel()
    alpha = alpha0 + N @ z
    return alpha, float(alpha @ dist @ alpha)


# --- polytope support oracles ----------------------------------------------------


def svc_halfspaces(support_vectors, alphas, Q, theta):
    """Exact H-representation of {w : sum_i alpha_i ||Q (w - w_i)||_1 <= theta}
    by enumerating all sign patterns.  Rows (A, b) with A w <= b.

    Exponential in n_sv * d; strictly a small-instance oracle.
    """
    svs = np.asarray(support_vectors, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n_sv, d = svs.shape
    rows_a, rows_b = [], []
    for signs in itertools.product((-1.0, 1.0), repeat=n_sv * d):
        s = np.asarray(signs).reshape(n_sv, d)
        a = np.zeros(d)
        shift = 0.0
        for i in range(n_sv):
            a += alphas[i] * (Q.T @ s[i])
            shift += alphas[i] * float(s[i] @ Q @ svs[i])
        rows_a.append(a)
        rows_b.append(theta + shift)
    return np.asarray(rows_a), np.asarray(rows_b)


def polytope_vertices(A, b, interior_point):
    """Vertices of {x : A x <= b} via scipy's halfspace intersection.

    Qhull refuses dimension 1, so intervals are handled directly: the upper
    endpoint is the tightest a_i x <= b_i with a_i > 0 and symmetrically for
    the lower one.
    """
    from scipy.spatial import HalfspaceIntersection

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape[1] == 1:
        a = A[:, 0]
        hi = np.min(b[a > 0] / a[a > 0])
        lo = np.max(b[a < 0] / a[a < 0])
        return np.array([[lo], [hi]])
    halfspaces = np.hstack([A, -b[:, None]])
    hs = HalfspaceIntersection(halfspaces, np.asarray(interior_point, dtype=float))
    return hs.intersections


def support_by_vertices(A, b, interior_point, direction):
    verts = polytope_vertices(A, b, interior_point)
    return float(np.max(verts @ np.asarray(direction, dtype=float)))


def support_by_boundary_2d(member_fn, interior_point, direction,
                           n_angles=3600, r_hi=1e6):
    """Support of a 2-D convex set given only a membership predicate.

    From an interior point, bisect along rays to the boundary on a dense fan
    of angles, then take the best boundary point; a golden-section pass over
    the angle refines the winner.
    """
    w0 = np.asarray(interior_point, dtype=float)
    a = np.asarray(direction, dtype=float)

    def radius(phi):
        u = np.array([np.cos(phi), np.sin(phi)])
        lo, hi = 0.0, 1.0
        while member_fn(w0 + hi * u) and hi < r_hi:
            lo, hi = hi, hi * 2.0
        if hi >= r_hi:
            raise ValueError("set appears unbounded along a ray")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if member_fn(w0 + mid * u):
                lo = mid
            else:
                hi = mid
        return lo

    def value(phi):
        r = radius(phi)
        return float(a @ (w0 + r * np.array([np.cos(phi), np.sin(phi)])))

    phis = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    vals = [value(p) for p in phis]
    k = int(np.argmax(vals))
    lo = phis[k] - 2.0 * np.pi / n_angles
    hi = phis[k] + 2.0 * np.pi / n_angles
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - golden * (hi - lo)
    d = lo + golden * (hi - lo)
    fc, fd = value(c), value(d)
    for _ in range(60):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - golden * (hi - lo)
            fc = value(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + golden * (hi - lo)
            fd = value(d)
    return max(max(vals), fc, fd)


def l1_ball_vertices(omega, dim):
    if omega == 0.0:
        return np.zeros((1, dim))
    vs = []
    for k in range(dim):
        for s in (1.0, -1.0):
            v = np.zeros(dim)
            v[k] = s * omega
            vs.append(v)
    return np.asarray(vs)


# --- vertex-expansion robust LP ---------------------------------------------------


def robust_lp_by_vertex_expansion(c_h, c_m_entries, rows, vertices, simplex=simplex_solve):
    """Solve an affine-feedback robust LP by writing one constraint per
    uncertainty-set vertex.

    Decision y = [h (m_total), M entries (len(c_m_entries))].
    rows: list of (phi, omega_row, entry_cols, rhs) describing
        phi @ h + sum_e entry_cols[e] picks M entries... see caller; concretely
        each row must satisfy, for every vertex v:
            phi @ h + omega_row @ v + sum_e coef_e(v) * M_e <= rhs
        where coef_e(v) = phi[ent_row_e] * v[ent_col_e] is supplied via
        entry_cols as a callable applied to v.
    This helper keeps the generality minimal: entry_cols is a function
    entry_cols(v) -> coefficient vector over the M entries.
    """
    n_h = len(c_h)
    n_e = len(c_m_entries)
    G_rows, r_rows = [], []
    for phi, omega_row, entry_coeffs, rhs in rows:
        for v in vertices:
            row = np.zeros(n_h + n_e)
            row[:n_h] = phi
            row[n_h:] = entry_coeffs(v)
            G_rows.append(row)
            r_rows.append(rhs - float(omega_row @ v))
    c = np.concatenate([c_h, c_m_entries])
    return simplex(c, np.asarray(G_rows), np.asarray(r_rows))
