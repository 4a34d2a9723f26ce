"""Particle currents, chiral current, vortex counting and (phi, K) sweeps.

Sign conventions follow the continuity equation for the open ladder:

* ``leg_links[d, l-1]`` is the current from ``(d, l)`` to ``(d, l+1)``;
* ``rungs[l-1]`` is the current from ``(L, l)`` to ``(R, l)``.

In ``physical-MHz`` units all currents are angular rates (the same units as
``2 pi g``), so a ladder with ``g/2pi = 3.5 MHz`` reports currents directly
comparable to ``2 pi * 3.5``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .eigensolve import diagonalize
from .model import LadderConfig, angular_scale, build_open_ladder, check_config

DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class CurrentField:
    leg_links: np.ndarray  # shape (2, N-1), rows L and R
    rungs: np.ndarray  # shape (N,)
    densities: np.ndarray  # shape (2, N)

    @property
    def n_rungs(self) -> int:
        return self.rungs.shape[0]

    @property
    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.leg_links), initial=0.0), np.max(np.abs(self.rungs), initial=0.0)))

    def scaled(self, factor: float) -> "CurrentField":
        return CurrentField(self.leg_links * factor, self.rungs * factor, self.densities)

    def divergence(self) -> np.ndarray:
        """Net current flowing into each site, shape (2, N)."""
        n = self.n_rungs
        inflow = np.zeros((2, n))
        inflow[:, 1:] += self.leg_links
        inflow[:, :-1] -= self.leg_links
        inflow[0] -= self.rungs
        inflow[1] += self.rungs
        return inflow


def link_currents(state: np.ndarray, cfg: LadderConfig) -> CurrentField:
    check_config(cfg)
    state = np.asarray(state, dtype=complex)
    n = cfg.n_rungs
    if state.shape != (2 * n,):
        raise ValueError(f"state has shape {state.shape}, expected ({2 * n},)")
    scale = angular_scale(cfg)
    chi = state.reshape(n, 2).T  # rows: L, R
    # i g (a - a*) = -2 g Im(a)
    leg = -2 * cfg.g * scale * np.imag(chi[:, 1:].conj() * chi[:, :-1])
    l = np.arange(1, n + 1)
    rung = -2 * cfg.k * scale * np.imag(chi[1].conj() * chi[0] * np.exp(1j * cfg.phi * l))
    return CurrentField(leg_links=leg, rungs=rung, densities=np.abs(chi) ** 2)


def chiral_current(field: CurrentField) -> float:
    """Difference of the site-averaged L and R leg currents."""
    if field.n_rungs < 2:
        raise ValueError("chiral current needs at least two rungs")
    return float(field.leg_links[0].mean() - field.leg_links[1].mean())


def plaquette_circulations(field: CurrentField) -> np.ndarray:
    """Directed link currents around each plaquette, shape (N-1, 4).

    The loop for plaquette ``l`` runs ``(L,l) -> (L,l+1) -> (R,l+1) -> (R,l) -> (L,l)``.
    """
    return np.column_stack(
        [
            field.leg_links[0],
            field.rungs[1:],
            -field.leg_links[1],
            -field.rungs[:-1],
        ]
    )


def boundary_circulation(field: CurrentField) -> float:
    """Mean current around the outer loop of the ladder, in the plaquette orientation."""
    links = np.concatenate([field.leg_links[0], [field.rungs[-1]], -field.leg_links[1], [-field.rungs[0]]])
    return float(links.mean())


def count_vortices(field: CurrentField, eps: float | None = None) -> tuple[int, float]:
    """Count circulating plaquettes; return ``(N_V, D_V = N_V / N)``.

    A plaquette counts when its four directed link currents share one sign and
    each exceeds ``eps`` in magnitude (default ``1e-6 * max|j|``). A field with
    no qualifying plaquette but a nonzero boundary circulation counts as a
    single edge vortex.
    """
    peak = field.max_abs
    if eps is None:
        eps = 1e-6 * peak
    if eps <= 0:
        if peak == 0:
            return 0, 0.0
        raise ValueError("eps must be > 0")
    loops = plaquette_circulations(field)
    strong = np.all(np.abs(loops) > eps, axis=1)
    same = np.all(loops > 0, axis=1) | np.all(loops < 0, axis=1)
    n_v = int(np.count_nonzero(strong & same))
    if n_v == 0 and abs(boundary_circulation(field)) > eps:
        n_v = 1
    return n_v, n_v / field.n_rungs


@dataclass(frozen=True)
class PhaseDiagram:
    """Ground-state chiral current and vortex density on a ``phi x K`` grid.

    Arrays are indexed ``[i_phi, i_k]``.
    """

    phi: np.ndarray
    k: np.ndarray
    j_chiral: np.ndarray
    vortex_density: np.ndarray
    degenerate: np.ndarray

    def rows(self):
        for i, phi in enumerate(self.phi):
            for j, k in enumerate(self.k):
                yield phi, k, self.j_chiral[i, j], self.vortex_density[i, j], bool(self.degenerate[i, j])


def ground_state_observables(cfg: LadderConfig) -> tuple[float, float, bool]:
    """``(j_C, D_V, degenerate)`` for the lowest eigenstate of ``cfg``."""
    sys = diagonalize(build_open_ladder(cfg))
    field = link_currents(sys.state(1), cfg)
    _, density = count_vortices(field)
    degenerate = sys.gap(1) < DEGENERACY_TOL * cfg.g if cfg.dim > 1 else False
    return chiral_current(field), density, degenerate


def _cell(args):
    template, phi, k = args
    return ground_state_observables(template.with_(phi=float(phi), k=float(k)))


def phase_diagram(template: LadderConfig, phi_grid, k_grid, workers: int | None = 1) -> PhaseDiagram:
    """Sweep ``phi`` and ``K`` around ``template``; results are ordered by grid index."""
    phi_grid = np.asarray(phi_grid, dtype=float)
    k_grid = np.asarray(k_grid, dtype=float)
    if phi_grid.size == 0 or k_grid.size == 0:
        raise ValueError("phase diagram grids must be nonempty")
    tasks = [(template, phi, k) for phi in phi_grid for k in k_grid]
    if workers is not None and workers <= 1:
        results = [_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, tasks, chunksize=max(1, len(tasks) // 64)))
    shape = (phi_grid.size, k_grid.size)
    jc, dv, deg = (np.array(col).reshape(shape) for col in zip(*results))
    return PhaseDiagram(phi=phi_grid, k=k_grid, j_chiral=jc, vortex_density=dv, degenerate=deg.astype(bool))


def critical_flux(k: float, g: float = 1.0) -> float:
    """Flux in ``(0, pi)`` at which ``K`` equals the critical coupling."""
    # 2g tan(x/2) sin(x/2) is increasing on (0, pi); invert by bisection
    lo, hi = 0.0, math.pi - 1e-12
    for _ in range(200):
        mid = (lo + hi) / 2
        if 2 * g * math.tan(mid / 2) * math.sin(mid / 2) < k:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2
