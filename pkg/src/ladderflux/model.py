"""Ladder configuration, site indexing and the open-ladder Hamiltonian.

Sites are labelled ``(leg, rung)`` with ``leg`` in ``{L, R}`` and ``rung`` in
``1..N``. The flat index interleaves the legs rung by rung::

    (L,1) -> 0, (R,1) -> 1, (L,2) -> 2, ..., (R,N) -> 2N-1

Couplings are stored as ordinary frequencies. In ``physical-MHz`` units a value
``g = 3.5`` means ``g/2pi = 3.5 MHz``; anything that multiplies a time (or is
reported as a rate) is converted with :func:`angular_scale`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class Leg(str, enum.Enum):
    L = "L"
    R = "R"

    @property
    def offset(self) -> int:
        return 0 if self is Leg.L else 1


class Units(str, enum.Enum):
    DIMENSIONLESS = "dimensionless"
    PHYSICAL_MHZ = "physical-MHz"


@dataclass(frozen=True)
class SiteId:
    leg: Leg
    rung: int


@dataclass(frozen=True)
class LadderConfig:
    """Renormalized ladder parameters.

    Attributes
    ----------
    n_rungs : int
        Number of rungs ``N``; the single-excitation space has dimension ``2N``.
    g : float
        Intraleg hopping.
    k : float
        Interleg (rung) hopping ``K``.
    phi : float
        Flux per plaquette in radians.
    units : Units
        ``dimensionless`` (energies in units of ``g``) or ``physical-MHz``.
    """

    n_rungs: int
    g: float = 1.0
    k: float = 0.5
    phi: float = math.pi / 2
    units: Units = Units.DIMENSIONLESS

    @property
    def dim(self) -> int:
        return 2 * self.n_rungs

    def with_(self, **changes) -> "LadderConfig":
        return replace(self, **changes)


def angular_scale(cfg: LadderConfig) -> float:
    """Factor turning a stored frequency into an angular rate (2pi for MHz, else 1)."""
    return 2 * math.pi if Units(cfg.units) is Units.PHYSICAL_MHZ else 1.0


def validate_config(cfg: LadderConfig) -> list[str]:
    """Return every violated invariant of ``cfg``; an empty list means valid."""
    errors = []
    if not isinstance(cfg.n_rungs, (int, np.integer)) or isinstance(cfg.n_rungs, bool):
        errors.append("n_rungs must be an integer")
    elif cfg.n_rungs < 1:
        errors.append("n_rungs must be ≥ 1")
    if not math.isfinite(cfg.g) or cfg.g <= 0:
        errors.append("g must be > 0")
    if not math.isfinite(cfg.k) or cfg.k < 0:
        errors.append("k must be ≥ 0")
    if not math.isfinite(cfg.phi) or abs(cfg.phi) > math.pi:
        errors.append("phi must lie in [-π, π]")
    try:
        Units(cfg.units)
    except ValueError:
        errors.append(f"units must be one of {[u.value for u in Units]}")
    return errors


def check_config(cfg: LadderConfig) -> None:
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(errors)


def site_index(site: SiteId, n_rungs: int) -> int:
    if not 1 <= site.rung <= n_rungs:
        raise ValueError(f"rung {site.rung} outside 1..{n_rungs}")
    return 2 * (site.rung - 1) + Leg(site.leg).offset


def site_from_index(index: int, n_rungs: int) -> SiteId:
    if not 0 <= index < 2 * n_rungs:
        raise ValueError(f"index {index} outside 0..{2 * n_rungs - 1}")
    rung, leg = divmod(index, 2)
    return SiteId(Leg.L if leg == 0 else Leg.R, rung + 1)


def build_open_ladder(cfg: LadderConfig) -> np.ndarray:
    """Dense single-excitation Hamiltonian of the open ladder.

    Intraleg elements are ``-g``; the rung element is
    ``<R,l|H|L,l> = -K exp(i phi l)`` with its conjugate on ``<L,l|H|R,l>``.
    Values carry the units of ``cfg`` (no 2pi factor).
    """
    check_config(cfg)
    n = cfg.n_rungs
    h = np.zeros((2 * n, 2 * n), dtype=complex)
    rungs = np.arange(1, n + 1)
    left = 2 * (rungs - 1)
    right = left + 1
    rung_elem = -cfg.k * np.exp(1j * cfg.phi * rungs)
    h[right, left] = rung_elem
    h[left, right] = rung_elem.conj()
    for legs in (left, right):
        h[legs[1:], legs[:-1]] = -cfg.g
        h[legs[:-1], legs[1:]] = -cfg.g
    return h
