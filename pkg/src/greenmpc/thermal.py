"""Lumped RC thermal model of a single-zone greenhouse.

The building shell is reduced to a small resistance-capacitance network:
every node carries a heat capacity, every edge a thermal conductance, and
two fixed boundary temperatures (outdoor air and ground) plus heating power
and transmitted solar radiation drive the network.  The continuous dynamics
are discretized exactly under a zero-order hold, so the hourly control step
does not have to resolve the fast envelope time constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import expm

# Boundary temperatures the network may attach to.  Their ordering fixes the
# disturbance vector: v = (solar W/m^2, ambient degC, ground degC).
AMBIENT = "ambient"
GROUND = "ground"
DISTURBANCE_NAMES = ("solar_wm2", "ambient_c", "ground_c")
# Solar and ambient forecasts carry error; ground temperature is treated as known.
UNCERTAIN_DISTURBANCES = (0, 1)


class NetworkError(ValueError):
    """Structurally invalid RC network."""


@dataclass(frozen=True)
class RcNetwork:
    """Node/edge description of the thermal network.

    nodes           (name, capacitance J/K) in state order
    edges           (end_a, end_b, conductance W/K); ends are node names or
                    the boundary labels "ambient" / "ground"
    heat_input      node -> fraction of heating power delivered there
    solar_aperture  node -> effective collecting area m^2 for transmitted solar
    """

    nodes: tuple[tuple[str, float], ...]
    edges: tuple[tuple[str, str, float], ...]
    heat_input: tuple[tuple[str, float], ...]
    solar_aperture: tuple[tuple[str, float], ...]

    def node_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.nodes)

    def validate(self) -> None:
        names = self.node_names()
        if len(names) != len(set(names)):
            raise NetworkError("duplicate node names")
        if not names:
            raise NetworkError("network has no nodes")
        for name, cap in self.nodes:
            if not np.isfinite(cap) or cap <= 0.0:
                raise NetworkError(f"node {name!r} has non-positive capacitance {cap!r}")
        valid = set(names) | {AMBIENT, GROUND}
        for a, b, g in self.edges:
            if a not in valid or b not in valid:
                bad = a if a not in valid else b
                raise NetworkError(f"edge endpoint {bad!r} is not a node or boundary")
            if a in (AMBIENT, GROUND) and b in (AMBIENT, GROUND):
                raise NetworkError(f"edge ({a!r}, {b!r}) connects two boundaries")
            if not np.isfinite(g) or g < 0.0:
                raise NetworkError(f"edge ({a!r}, {b!r}) has invalid conductance {g!r}")
        for label, table in (("heat_input", self.heat_input), ("solar_aperture", self.solar_aperture)):
            for name, value in table:
                if name not in set(names):
                    raise NetworkError(f"{label} references unknown node {name!r}")
                if not np.isfinite(value) or value < 0.0:
                    raise NetworkError(f"{label} for node {name!r} is invalid: {value!r}")

    def to_dict(self) -> dict:
        return {
            "nodes": [{"name": n, "capacitance_j_per_k": c} for n, c in self.nodes],
            "edges": [{"a": a, "b": b, "conductance_w_per_k": g} for a, b, g in self.edges],
            "heat_input": {n: v for n, v in self.heat_input},
            "solar_aperture": {n: v for n, v in self.solar_aperture},
        }

    @staticmethod
    def from_dict(data: dict) -> "RcNetwork":
        net = RcNetwork(
            nodes=tuple((d["name"], float(d["capacitance_j_per_k"])) for d in data["nodes"]),
            edges=tuple((d["a"], d["b"], float(d["conductance_w_per_k"])) for d in data["edges"]),
            heat_input=tuple((k, float(v)) for k, v in data.get("heat_input", {}).items()),
            solar_aperture=tuple((k, float(v)) for k, v in data.get("solar_aperture", {}).items()),
        )
        net.validate()
        return net


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ThermalModel:
    """Discrete-time model x+ = A x + B_u u + B_v v + B_w w.

    States are node temperatures (degC), u is heating power (W), v stacks the
    nominal disturbances (solar W/m^2, ambient degC, ground degC) and w the
    forecast errors on the uncertain channels (solar, ambient).  B_w is by
    construction the corresponding column pair of B_v.
    """

    A: np.ndarray
    B_u: np.ndarray
    B_v: np.ndarray
    B_w: np.ndarray
    dt: float
    state_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B_u.shape[1]

    @property
    def p(self) -> int:
        return self.B_v.shape[1]

    @property
    def q(self) -> int:
        return self.B_w.shape[1]

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)


def continuous_matrices(network: RcNetwork) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the continuous-time (A_c, B_uc, B_vc) for the network."""
    network.validate()
    names = network.node_names()
    index = {name: i for i, name in enumerate(names)}
    n = len(names)
    caps = np.array([c for _, c in network.nodes], dtype=float)

    A = np.zeros((n, n))
    B_v = np.zeros((n, 3))
    for a, b, g in network.edges:
        for this, other in ((a, b), (b, a)):
            if this in (AMBIENT, GROUND):
                continue
            i = index[this]
            A[i, i] -= g
            if other == AMBIENT:
                B_v[i, 1] += g
            elif other == GROUND:
                B_v[i, 2] += g
            else:
                A[i, index[other]] += g
    B_u = np.zeros((n, 1))
    for name, share in network.heat_input:
        B_u[index[name], 0] += share
    for name, area in network.solar_aperture:
        B_v[index[name], 0] += area

    inv_c = 1.0 / caps
    return A * inv_c[:, None], B_u * inv_c[:, None], B_v * inv_c[:, None]


def build_rc_model(network: RcNetwork, dt: float) -> ThermalModel:
    """Exact zero-order-hold discretization of the RC network at step dt seconds.

    The discrete pair is read off the matrix exponential of the augmented
    matrix [[A_c, B_c], [0, 0]] * dt, which stays stable for arbitrarily stiff
    envelope nodes where forward Euler at dt would diverge.
    """
    if not np.isfinite(dt) or dt <= 0.0:
        raise NetworkError(f"time step must be positive, got {dt!r}")
    A_c, B_uc, B_vc = continuous_matrices(network)
    n = A_c.shape[0]
    B_c = np.hstack([B_uc, B_vc])
    aug = np.zeros((n + B_c.shape[1], n + B_c.shape[1]))
    aug[:n, :n] = A_c
    aug[:n, n:] = B_c
    phi = expm(aug * dt)
    A = phi[:n, :n]
    B = phi[:n, n:]
    B_u = B[:, :1]
    B_v = B[:, 1:]
    return ThermalModel(
        A=_readonly(A),
        B_u=_readonly(B_u),
        B_v=_readonly(B_v),
        B_w=_readonly(B_v[:, list(UNCERTAIN_DISTURBANCES)]),
        dt=float(dt),
        state_names=network.node_names(),
    )


def simulate_step(model: ThermalModel, x: np.ndarray, u: float | np.ndarray,
                  v: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """One dynamics update; w defaults to zero (no forecast error)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u_vec = np.atleast_1d(np.asarray(u, dtype=float)).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    if x.shape[0] != model.n:
        raise ValueError(f"state has {x.shape[0]} entries, model expects {model.n}")
    if u_vec.shape[0] != model.m:
        raise ValueError(f"input has {u_vec.shape[0]} entries, model expects {model.m}")
    if v.shape[0] != model.p:
        raise ValueError(f"disturbance has {v.shape[0]} entries, model expects {model.p}")
    out = model.A @ x + model.B_u @ u_vec + model.B_v @ v
    if w is not None:
        w = np.asarray(w, dtype=float).reshape(-1)
        if w.shape[0] != model.q:
            raise ValueError(f"error vector has {w.shape[0]} entries, model expects {model.q}")
        out = out + model.B_w @ w
    return out


@dataclass(frozen=True)
class LiftedModel:
    """Stacked H-step prediction x_(1..H) = A_bar x0 + Bu_bar u + Bv_bar v + Bw_bar w.

    Inputs/disturbances stack step-major: u = (u_0 .. u_{H-1}), likewise v, w.
    The input and error blocks are block lower triangular, so step k only sees
    inputs and errors up to k-1.
    """

    A_bar: np.ndarray
    Bu_bar: np.ndarray
    Bv_bar: np.ndarray
    Bw_bar: np.ndarray
    horizon: int
    model: ThermalModel


def lift(model: ThermalModel, horizon: int) -> LiftedModel:
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    n, m, p, q = model.n, model.m, model.p, model.q
    H = horizon
    powers = [np.eye(n)]
    for _ in range(H):
        powers.append(model.A @ powers[-1])

    A_bar = np.vstack([powers[k] for k in range(1, H + 1)])
    Bu = np.zeros((H * n, H * m))
    Bv = np.zeros((H * n, H * p))
    Bw = np.zeros((H * n, H * q))
    for k in range(1, H + 1):
        for j in range(k):
            blk = powers[k - 1 - j]
            Bu[(k - 1) * n:k * n, j * m:(j + 1) * m] = blk @ model.B_u
            Bv[(k - 1) * n:k * n, j * p:(j + 1) * p] = blk @ model.B_v
            Bw[(k - 1) * n:k * n, j * q:(j + 1) * q] = blk @ model.B_w
    return LiftedModel(
        A_bar=_readonly(A_bar), Bu_bar=_readonly(Bu), Bv_bar=_readonly(Bv),
        Bw_bar=_readonly(Bw), horizon=H, model=model,
    )


def reference_greenhouse_network() -> RcNetwork:
    """Four-node network for the 40 m x 13 m x 4 m reference greenhouse.

    Air, concrete floor slab, polycarbonate roof and walls.  The 10 mm
    twin-wall envelope (U ~ 3 W/m^2K) is split into equal film/material halves
    around a light envelope node; handbook-magnitude values throughout, all
    overridable through the network JSON.
    """
    floor_area = 40.0 * 13.0                      # m^2
    volume = floor_area * 4.0                     # m^3
    wall_area = 2.0 * (40.0 + 13.0) * 4.0         # m^2
    air_cap = 1.2 * 1005.0 * volume * 10.0        # air + fast interior mass
    floor_cap = floor_area * 0.10 * 2300.0 * 880.0  # 10 cm concrete slab
    sheet_cap = 2000.0                            # J/K per m^2 twin-wall sheet
    half_u = 6.0                                  # W/m^2K, series halves of U=3
    return RcNetwork(
        nodes=(
            ("air", air_cap),
            ("floor", floor_cap),
            ("ceiling", floor_area * sheet_cap),
            ("wall", wall_area * sheet_cap),
        ),
        edges=(
            ("air", "ceiling", half_u * floor_area),
            ("ceiling", AMBIENT, half_u * floor_area),
            ("air", "wall", half_u * wall_area),
            ("wall", AMBIENT, half_u * wall_area),
            ("air", "floor", 6.0 * floor_area),
            ("floor", GROUND, 0.5 * floor_area),
        ),
        heat_input=(("air", 1.0),),
        solar_aperture=(("air", 0.75 * floor_area),),
    )


def load_network_json(path: str | Path) -> RcNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return RcNetwork.from_dict(json.load(fh))


def save_network_json(network: RcNetwork, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network.to_dict(), fh, indent=2)
        fh.write("\n")


def export_matrices(model: ThermalModel, directory: str | Path) -> list[Path]:
    """Dump A, B_u, B_v, B_w as CSV files for inspection; returns paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, mat in (("A", model.A), ("B_u", model.B_u), ("B_v", model.B_v), ("B_w", model.B_w)):
        path = directory / f"{name}.csv"
        np.savetxt(path, mat, delimiter=",")
        written.append(path)
    return written
