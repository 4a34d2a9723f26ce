"""Infinite-ladder band structure.

With the plane-wave ansatz ``psi_{L,l} ~ z^l e^{-i phi l/2}``,
``psi_{R,l} ~ z^l e^{+i phi l/2}`` the bulk equations reduce to

    (w + g(z e^{i phi/2} + e^{-i phi/2}/z)) (w + g(z e^{-i phi/2} + e^{i phi/2}/z)) = K^2

For ``z = e^{iq}`` this gives the two bands
``w_pm(q) = -2g cos q cos(phi/2) pm sqrt(K^2 + 4 g^2 sin^2 q sin^2(phi/2))``.
At fixed energy the four solutions ``z`` come from two quadratics
``z^2 - R z + 1 = 0``, see :func:`characteristic_roots`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import LadderConfig

ROOT_UNIT_TOL = 1e-8
_GOLDEN = (math.sqrt(5) - 1) / 2


class Branch(str, enum.Enum):
    PLUS = "plus"
    MINUS = "minus"


class RootKind(str, enum.Enum):
    TRANSMISSION = "transmission"
    DECAY = "decay"
    STAGGERED_DECAY = "staggered-decay"


@dataclass(frozen=True)
class BandParams:
    g: float
    k: float
    phi: float

    @classmethod
    def from_config(cls, cfg: LadderConfig) -> "BandParams":
        return cls(cfg.g, cfg.k, cfg.phi)


@dataclass(frozen=True)
class CharacteristicRoots:
    """The four degenerate bulk solutions at one energy.

    ``z[0], z[1]`` solve ``z^2 - r_minus z + 1 = 0`` and ``z[2], z[3]`` solve
    ``z^2 - r_plus z + 1 = 0``, ordered as ``(R -/+ sqrt(R^2 - 4))/2``.
    """

    omega: float
    z: np.ndarray
    r_minus: float
    r_plus: float
    kinds: tuple[RootKind, ...]

    @property
    def q(self) -> np.ndarray:
        """Principal arguments of the roots (meaningful for transmission roots)."""
        return np.angle(self.z)

    @property
    def transmission(self) -> np.ndarray:
        return np.array([k is RootKind.TRANSMISSION for k in self.kinds])

    @property
    def degenerate(self) -> bool:
        """True when either quadratic has a double root (band edge)."""
        return bool(
            abs(self.z[0] - self.z[1]) < math.sqrt(ROOT_UNIT_TOL)
            or abs(self.z[2] - self.z[3]) < math.sqrt(ROOT_UNIT_TOL)
        )


def band_energy(q, branch: Branch | str, p: BandParams):
    """Transmission-band energy ``w_plus`` or ``w_minus`` at quasimomentum ``q``."""
    q = np.asarray(q, dtype=float)
    s = math.sin(p.phi / 2)
    root = np.sqrt(p.k**2 + 4 * p.g**2 * np.sin(q) ** 2 * s**2)
    base = -2 * p.g * np.cos(q) * math.cos(p.phi / 2)
    out = base + root if Branch(branch) is Branch.PLUS else base - root
    return float(out) if out.ndim == 0 else out


def _grid(grid_size: int) -> np.ndarray:
    # uniform over (-pi, pi]; contains q = 0 for even sizes
    return -math.pi + 2 * math.pi * np.arange(1, grid_size + 1) / grid_size


def _grid_minima(values: np.ndarray) -> np.ndarray:
    left = np.roll(values, 1)
    right = np.roll(values, -1)
    return np.flatnonzero((values < left) & (values < right))


def minima_count(p: BandParams, grid_size: int = 4096) -> int:
    """Number of strict local minima of the lower band over the Brillouin zone."""
    if grid_size < 512:
        raise ValueError("grid_size must be ≥ 512")
    values = band_energy(_grid(grid_size), Branch.MINUS, p)
    return int(len(_grid_minima(values)))


def golden_section_min(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2


def band_minima(p: BandParams, grid_size: int = 4096) -> np.ndarray:
    """Locations of the lower-band minima, refined by golden-section search."""
    q = _grid(grid_size)
    step = q[1] - q[0]
    values = band_energy(q, Branch.MINUS, p)
    f = lambda x: band_energy(x, Branch.MINUS, p)  # noqa: E731
    return np.array([golden_section_min(f, q[i] - step, q[i] + step) for i in _grid_minima(values)])


def critical_coupling(g: float, phi: float) -> float:
    """Rung coupling at which the two lower-band minima merge: ``2g tan(phi/2) sin(phi/2)``."""
    if abs(phi) >= math.pi:
        raise ValueError("critical coupling diverges at |phi| = pi")
    return 2 * g * math.tan(phi / 2) * math.sin(phi / 2)


def decay_bound_lambda(p: BandParams) -> float:
    """Upper bound on ``|z|`` (and ``1/|z|``) for decay and staggered-decay roots."""
    s = abs(math.sin(p.phi / 2))
    if s == 0:
        raise ValueError("decay bound undefined at phi = 0")
    a = p.k / (2 * p.g * s)
    return a + math.sqrt(a * a + 1)


def _quadratic_roots(r: float) -> tuple[complex, complex]:
    disc = r * r - 4
    if disc < 0:
        im = math.sqrt(-disc) / 2
        return complex(r / 2, -im), complex(r / 2, im)
    sq = math.sqrt(disc)
    # larger-magnitude root first, partner from z z' = 1
    if r >= 0:
        big = (r + sq) / 2
        return complex(1 / big), complex(big)
    big = (r - sq) / 2
    return complex(big), complex(1 / big)


def _classify(z: complex) -> RootKind:
    if abs(abs(z) - 1) < ROOT_UNIT_TOL:
        return RootKind.TRANSMISSION
    return RootKind.DECAY if z.real > 0 else RootKind.STAGGERED_DECAY


def characteristic_roots(omega: float, p: BandParams) -> CharacteristicRoots:
    s2 = math.sin(p.phi / 2) ** 2
    inner = -(omega**2) / p.g**2 * s2 + p.k**2 / p.g**2 + 4 * s2
    if inner < -1e-12:
        raise ValueError(f"energy outside band support: omega={omega!r}")
    sq = math.sqrt(max(inner, 0.0))
    base = -omega / p.g * math.cos(p.phi / 2)
    r_minus, r_plus = base - sq, base + sq
    z = np.array([*_quadratic_roots(r_minus), *_quadratic_roots(r_plus)])
    return CharacteristicRoots(
        omega=float(omega),
        z=z,
        r_minus=r_minus,
        r_plus=r_plus,
        kinds=tuple(_classify(complex(v)) for v in z),
    )
