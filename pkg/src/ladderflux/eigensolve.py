"""Open-ladder diagonalization and four-mode expansion of eigenstates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bands import BandParams, CharacteristicRoots, characteristic_roots
from .model import Leg

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class EigenSystem:
    """Ascending energies and unit-norm eigenvectors (columns of ``states``)."""

    energies: np.ndarray
    states: np.ndarray
    gauge: str = "largest-component-real-positive"

    @property
    def n_rungs(self) -> int:
        return self.states.shape[0] // 2

    def state(self, level: int) -> np.ndarray:
        """Eigenvector of the 1-based ``level``."""
        return self.states[:, level - 1]

    def gap(self, level: int = 1) -> float:
        return float(self.energies[level] - self.energies[level - 1])


def diagonalize(h: np.ndarray) -> EigenSystem:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if np.max(np.abs(h - h.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    energies, states = np.linalg.eigh(h)
    order = np.argsort(energies, kind="stable")
    energies, states = energies[order], states[:, order]
    mags = np.abs(states)
    # argmax returns the first index among ties: lowest site wins
    pivot = np.argmax(np.round(mags, 12), axis=0)
    phases = states[pivot, np.arange(states.shape[1])]
    states = states * (np.abs(phases) / phases)
    return EigenSystem(energies=energies, states=states)


def bulk_amplitudes(z: complex, omega: float, p: BandParams) -> tuple[complex, complex]:
    """Amplitudes ``(psi_L0, psi_R0)`` of the plane-wave solution with multiplier ``z``."""
    half = p.phi / 2
    psi_l0 = omega + p.g * (z * np.exp(1j * half) + np.exp(-1j * half) / z)
    return complex(psi_l0), complex(-p.k)


def bulk_wavefunction(z: complex, omega: float, p: BandParams, n_rungs: int) -> np.ndarray:
    """Infinite-ladder solution restricted to rungs ``1..N`` in flat site order."""
    psi_l0, psi_r0 = bulk_amplitudes(z, omega, p)
    l = np.arange(1, n_rungs + 1)
    out = np.empty(2 * n_rungs, dtype=complex)
    # z**l overflows for decay roots on long ladders; go through logs
    log_zl = l * np.log(complex(z))
    out[0::2] = psi_l0 * np.exp(log_zl - 1j * p.phi * l / 2)
    out[1::2] = psi_r0 * np.exp(log_zl + 1j * p.phi * l / 2)
    return out


@dataclass(frozen=True)
class ModeExpansion:
    """Least-squares fit of one eigenstate onto the four bulk solutions.

    ``coefficients[j]`` multiplies the unit-normalized basis column ``j``;
    ``column_norms`` converts back to the raw plane-wave normalization.
    Entries for columns dropped from a rank-deficient fit are zero and
    ``used[j]`` is False.
    """

    level: int
    coefficients: np.ndarray
    roots: CharacteristicRoots
    residual: float
    column_norms: np.ndarray
    used: np.ndarray
    reduced: bool

    def reconstruct(self, p: BandParams, n_rungs: int) -> np.ndarray:
        basis = _normalized_basis(self.roots, p, n_rungs)[0]
        return basis @ self.coefficients


def _normalized_basis(roots: CharacteristicRoots, p: BandParams, n_rungs: int):
    cols = np.column_stack([bulk_wavefunction(z, roots.omega, p, n_rungs) for z in roots.z])
    norms = np.linalg.norm(cols, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return cols / safe, norms


def fit_mode_expansion(sys: EigenSystem, n: int, p: BandParams) -> ModeExpansion:
    """Fit eigenstate ``n`` (1-based) as a combination of the four bulk modes at ``mu_n``."""
    chi = sys.state(n)
    n_rungs = sys.n_rungs
    roots = characteristic_roots(float(sys.energies[n - 1]), p)
    basis, norms = _normalized_basis(roots, p, n_rungs)

    used = norms > 0
    # drop coincident roots (double roots at band edges) and null columns
    for j in range(4):
        for i in range(j):
            if used[i] and used[j] and abs(roots.z[i] - roots.z[j]) < math.sqrt(1e-8):
                used[j] = False
    sub = basis[:, used]
    rank = np.linalg.matrix_rank(sub, tol=1e-10)
    while rank < sub.shape[1]:
        # remove the column best explained by the others
        idx = np.flatnonzero(used)
        worst = min(
            idx,
            key=lambda j: np.linalg.lstsq(basis[:, idx[idx != j]], basis[:, j], rcond=None)[1].sum()
            if len(idx) > 1
            else 0.0,
        )
        used[worst] = False
        sub = basis[:, used]
        rank = np.linalg.matrix_rank(sub, tol=1e-10)

    coeffs_used, *_ = np.linalg.lstsq(sub, chi, rcond=None)
    coefficients = np.zeros(4, dtype=complex)
    coefficients[used] = coeffs_used
    misfit = chi - sub @ coeffs_used
    residual = float(np.sqrt(np.mean(np.abs(misfit) ** 2)))
    return ModeExpansion(
        level=n,
        coefficients=coefficients,
        roots=roots,
        residual=residual,
        column_norms=norms,
        used=used,
        reduced=bool(not used.all()),
    )


@dataclass(frozen=True)
class QuasimomentumMap:
    """Rows of ``(leg, quasimomentum, intensity)`` with intensities rescaled to max 1."""

    legs: tuple[Leg, ...]
    q: np.ndarray
    intensity: np.ndarray
    root_index: np.ndarray

    def __len__(self) -> int:
        return len(self.legs)


def quasimomentum_map(exp: ModeExpansion, sys: EigenSystem, p: BandParams) -> QuasimomentumMap:
    """Weight of each transmission root on each leg.

    Leg L carries quasimomentum ``q_j - phi/2`` and leg R ``q_j + phi/2``;
    the intensity is ``|A_j psi_{d,0}(z_j)|`` in the raw plane-wave normalization.
    """
    legs, qs, weights, index = [], [], [], []
    for j, z in enumerate(exp.roots.z):
        if not (exp.roots.transmission[j] and exp.used[j]):
            continue
        amp = exp.coefficients[j] / exp.column_norms[j]
        psi_l0, psi_r0 = bulk_amplitudes(z, exp.roots.omega, p)
        q = float(np.angle(z))
        legs += [Leg.L, Leg.R]
        qs += [q - p.phi / 2, q + p.phi / 2]
        weights += [abs(amp * psi_l0), abs(amp * psi_r0)]
        index += [j, j]
    weights = np.array(weights, dtype=float)
    if weights.size and weights.max() > 0:
        weights = weights / weights.max()
    return QuasimomentumMap(tuple(legs), np.array(qs, dtype=float), weights, np.array(index, dtype=int))
