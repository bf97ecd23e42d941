"""Shared fixtures and instance generators."""

from __future__ import annotations

import numpy as np
import pytest

from greenmpc.thermal import RcNetwork, build_rc_model
from greenmpc.uncertainty import SvcModel, UncertaintySet, svc_set


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def two_node_network() -> RcNetwork:
    """Small, fast network: heated air node plus one envelope node."""
    return RcNetwork(
        nodes=(("air", 5.0e6), ("shell", 8.0e5)),
        edges=(("air", "shell", 900.0), ("shell", "ambient", 700.0),
               ("air", "ground", 120.0)),
        heat_input=(("air", 1.0),),
        solar_aperture=(("air", 200.0),),
    )


def two_node_model(dt: float = 3600.0):
    return build_rc_model(two_node_network(), dt)


def single_node_network(cap: float = 2.0e6, g_amb: float = 800.0) -> RcNetwork:
    return RcNetwork(
        nodes=(("air", cap),),
        edges=(("air", "ambient", g_amb),),
        heat_input=(("air", 1.0),),
        solar_aperture=(("air", 50.0),),
    )


def random_svc_model(rng: np.random.Generator, d: int, n_sv: int,
                     margin: float | None = None) -> SvcModel:
    """Hand-assembled clustering model with an interior-guaranteeing theta.

    theta is set above the membership value at the weighted centroid, so the
    set always has nonempty interior around it.
    """
    svs = rng.normal(size=(n_sv, d))
    alphas = rng.uniform(0.2, 1.0, size=n_sv)
    alphas = alphas / alphas.sum()
    Q = rng.normal(size=(d, d)) * 0.3 + np.eye(d)
    Q = Q.T @ Q
    center = alphas @ svs
    f_center = float(sum(a * np.abs(Q @ (center - sv)).sum()
                         for a, sv in zip(alphas, svs)))
    if margin is None:
        margin = float(rng.uniform(0.3, 1.2))
    L = float(np.abs(Q @ (svs[:, None, :] - svs[None, :, :]).reshape(-1, d).T).sum(axis=0).max()) + 1.0
    return SvcModel(support_vectors=svs, alphas=alphas, Q=Q, nu=0.1, L=L,
                    theta=f_center + margin)


def random_svc_uncertainty_set(rng: np.random.Generator, d: int, n_sv: int,
                               channel: str = "joint") -> UncertaintySet:
    return svc_set(channel, random_svc_model(rng, d, n_sv))
