"""Dissipative state generation and current measurement.

Rates and Rabi frequencies are entered as ordinary frequencies (MHz) and times
in microseconds; every exponent uses the angular value ``2 pi f``, so with
``C1/2pi = 1 MHz`` a pi pulse lasts 0.5 us. Measurement functions follow the
ladder's unit convention: site rates share the units of ``g`` and are
converted with the same factor.

The dissipator used throughout acts on a basis whose first state is the
vacuum ``|0>``. An excited state ``s`` relaxes into the vacuum at rate
``gamma_s`` and every coherence ``rho_ab`` is damped at ``(Gamma_a + Gamma_b)/2``
(``Gamma = 0`` for the vacuum). Relaxation does not add to the coherence
damping. This is the generator whose two-level solution is the closed-form
fidelity of :func:`fidelity_exact` and whose strong-coupling Rabi decay is the
four-rate average used by :func:`rabi_population_difference`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .currents import link_currents
from .eigensolve import EigenSystem
from .model import LadderConfig, Leg, SiteId, angular_scale, build_open_ladder, site_index

TWO_PI = 2 * math.pi


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class DissipationSpec:
    """Per-site relaxation ``gamma`` and dephasing ``Gamma`` (MHz), arrays of shape (2, N)."""

    gamma: np.ndarray
    dephasing: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        dephasing = np.asarray(self.dephasing, dtype=float)
        if gamma.shape != dephasing.shape or gamma.ndim != 2 or gamma.shape[0] != 2:
            raise ValueError("gamma and dephasing must both have shape (2, N)")
        if np.any(gamma < 0) or np.any(dephasing < 0):
            raise ValueError("rates must be ≥ 0")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "dephasing", dephasing)

    @classmethod
    def homogeneous(cls, n_rungs: int, gamma: float, dephasing: float) -> "DissipationSpec":
        return cls(np.full((2, n_rungs), gamma), np.full((2, n_rungs), dephasing))

    def site_rates(self, site: SiteId) -> tuple[float, float]:
        leg = Leg(site.leg).offset
        return float(self.gamma[leg, site.rung - 1]), float(self.dephasing[leg, site.rung - 1])

    def collective(self, state: np.ndarray) -> tuple[float, float]:
        """Population-weighted rates ``(gamma_1, Gamma_1)`` of a single-excitation state."""
        weight = (np.abs(np.asarray(state)) ** 2).reshape(-1, 2).T
        return float((weight * self.gamma).sum()), float((weight * self.dephasing).sum())


# --- state generation ---------------------------------------------------------


@dataclass(frozen=True)
class GenerationPlan:
    """Site drive ``B'_{d,l} = chi^(1)_{d,l} C1`` in flat site order."""

    drive: np.ndarray
    c1: float
    detuning: float

    @property
    def t_pi(self) -> float:
        """Pi-pulse duration in microseconds: ``2 pi C1 t = pi``."""
        return 1 / (2 * self.c1)


def generation_plan(sys: EigenSystem, c1: float, gap_tol: float = 1e-8) -> GenerationPlan:
    if c1 <= 0:
        raise ValueError("Rabi frequency c1 must be > 0")
    scale = max(1.0, float(np.max(np.abs(sys.energies))))
    if len(sys.energies) > 1 and sys.gap(1) < gap_tol * scale:
        raise ValueError(f"ground level is degenerate: mu_2 - mu_1 = {sys.gap(1):.3g}")
    return GenerationPlan(drive=sys.state(1) * c1, c1=c1, detuning=float(sys.energies[0]))


def excitation_overlaps(drive: np.ndarray | GenerationPlan, sys: EigenSystem) -> np.ndarray:
    """Collective Rabi frequencies ``C_n = sum chi^(n)* B'`` for every level."""
    b = drive.drive if isinstance(drive, GenerationPlan) else np.asarray(drive)
    if b.shape != (sys.states.shape[0],):
        raise ValueError(f"drive has shape {b.shape}, expected ({sys.states.shape[0]},)")
    return sys.states.conj().T @ b


class DampingRegime(str, enum.Enum):
    UNDERDAMPED = "underdamped"
    CRITICAL = "critical"
    OVERDAMPED = "overdamped"


def damping_regime(c1: float, gamma1: float, dephasing1: float, tol: float = 1e-12) -> DampingRegime:
    square = c1**2 - 0.25 * (gamma1 - dephasing1 / 2) ** 2
    if abs(square) <= tol * max(c1**2, 1e-300):
        return DampingRegime.CRITICAL
    return DampingRegime.UNDERDAMPED if square > 0 else DampingRegime.OVERDAMPED


def fidelity_exact(t, c1: float, gamma1: float, dephasing1: float):
    """Population of ``|mu_1>`` after driving the vacuum for time ``t`` (us).

    Closed-form solution of the two-level master equation; the critically
    damped and overdamped branches are the analytic continuation in ``C1'``.
    """
    if min(gamma1, dephasing1) < 0:
        raise ValueError("rates must be ≥ 0")
    t = np.asarray(t, dtype=float)
    c, g, dp = TWO_PI * c1, TWO_PI * gamma1, TWO_PI * dephasing1
    if c == 0:
        return np.zeros_like(t) if t.ndim else 0.0
    r0 = (c**2 / 2) / (c**2 + g * dp / 2)
    g_eff = g + dp / 2
    square = c**2 - 0.25 * (g - dp / 2) ** 2
    regime = damping_regime(c1, gamma1, dephasing1)
    if regime is DampingRegime.CRITICAL:
        osc = 1 + g_eff * t / 2
    elif regime is DampingRegime.UNDERDAMPED:
        w = math.sqrt(square)
        osc = np.cos(w * t) + g_eff / (2 * w) * np.sin(w * t)
    else:
        kappa = math.sqrt(-square)
        osc = np.cosh(kappa * t) + g_eff / (2 * kappa) * np.sinh(kappa * t)
    out = r0 - r0 * np.exp(-g_eff * t / 2) * osc
    return float(out) if out.ndim == 0 else out


def fidelity_strong_coupling(t, c1: float, gamma1: float, dephasing1: float):
    """``(1/2)[1 - exp(-(gamma1 + Gamma1/2) t/2) cos(C1 t)]`` in angular units."""
    t = np.asarray(t, dtype=float)
    decay = TWO_PI * (gamma1 + dephasing1 / 2) / 2
    out = 0.5 * (1 - np.exp(-decay * t) * np.cos(TWO_PI * c1 * t))
    return float(out) if out.ndim == 0 else out


# --- master-equation integration ----------------------------------------------


def dissipator(rho: np.ndarray, relaxation: np.ndarray, dephasing: np.ndarray) -> np.ndarray:
    """Relaxation into state 0 plus coherence damping (angular rates, index 0 = vacuum)."""
    out = np.zeros_like(rho)
    pops = np.real(np.diag(rho))
    out[np.diag_indices_from(rho)] = -relaxation * pops
    out[0, 0] += np.dot(relaxation, pops)
    damp = 0.5 * (dephasing[:, None] + dephasing[None, :])
    np.fill_diagonal(damp, 0.0)
    out -= damp * rho
    return out


def integrate_master_equation(
    h: np.ndarray,
    rho0: np.ndarray,
    relaxation: np.ndarray,
    dephasing: np.ndarray,
    times: np.ndarray,
    step: float,
    tol: float = 1e-9,
) -> np.ndarray:
    """Fixed-step RK4 for ``drho/dt = -i[H, rho] + D(rho)``; returns ``rho`` at ``times``.

    Trace and populations are checked after every step.
    """
    times = np.asarray(times, dtype=float)
    relaxation = np.asarray(relaxation, dtype=float)
    dephasing = np.asarray(dephasing, dtype=float)

    def rhs(rho):
        return -1j * (h @ rho - rho @ h) + dissipator(rho, relaxation, dephasing)

    rho = np.array(rho0, dtype=complex)
    out = np.empty((times.size, *rho.shape), dtype=complex)
    t = 0.0
    for i, target in enumerate(times):
        span = target - t
        if span < -1e-15:
            raise ValueError("times must be non-decreasing and start at or after 0")
        n = max(0, math.ceil(span / step - 1e-9))
        dt = span / n if n else 0.0
        for _ in range(n):
            k1 = rhs(rho)
            k2 = rhs(rho + dt / 2 * k1)
            k3 = rhs(rho + dt / 2 * k2)
            k4 = rhs(rho + dt * k3)
            rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            trace_err = abs(np.trace(rho).real - 1)
            pops = np.real(np.diag(rho))
            if trace_err > tol or pops.min() < -tol or pops.max() > 1 + tol:
                raise NumericalError(f"master equation lost trace/positivity at t = {t:.6g} us")
        t = max(t, target)
        out[i] = rho
    return out


def lindblad_two_level_numeric(
    c1: float,
    gamma1: float,
    dephasing1: float,
    horizon: float,
    step: float,
    samples: int = 501,
    initial_excited: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Numerically integrated ``rho_11(t)`` on ``{|0>, |mu_1>}`` in the resonant frame."""
    fastest = TWO_PI * max(c1, gamma1, dephasing1, 1e-300)
    if step > 1 / (50 * fastest):
        raise ValueError(f"step {step} too large; need ≤ {1 / (50 * fastest):.3g} us")
    c = TWO_PI * c1
    h = np.array([[0, c / 2], [c / 2, 0]], dtype=complex)
    rho0 = np.diag([1 - initial_excited, initial_excited]).astype(complex)
    times = np.linspace(0.0, horizon, samples)
    rho = integrate_master_equation(
        h, rho0, TWO_PI * np.array([0.0, gamma1]), TWO_PI * np.array([0.0, dephasing1]), times, step
    )
    return times, np.real(rho[:, 1, 1])


# --- current measurement -------------------------------------------------------


class PairKind(str, enum.Enum):
    INTRALEG = "intraleg"
    RUNG = "rung"


@dataclass(frozen=True)
class MeasurementPair:
    """Two decoupled neighbouring sites ``(first, second)``.

    ``P(t) = rho_second - rho_first``: for an intraleg pair ``(d,l) -> (d,l+1)``,
    for a rung pair ``(L,l) -> (R,l)``.
    """

    kind: PairKind
    rung: int
    leg: Leg = Leg.L

    @classmethod
    def intraleg(cls, rung: int, leg: Leg | str = Leg.L) -> "MeasurementPair":
        return cls(PairKind.INTRALEG, rung, Leg(leg))

    @classmethod
    def rung_pair(cls, rung: int) -> "MeasurementPair":
        return cls(PairKind.RUNG, rung)

    def sites(self) -> tuple[SiteId, SiteId]:
        if PairKind(self.kind) is PairKind.INTRALEG:
            return SiteId(self.leg, self.rung), SiteId(self.leg, self.rung + 1)
        return SiteId(Leg.L, self.rung), SiteId(Leg.R, self.rung)

    def coupling(self, cfg: LadderConfig) -> float:
        return cfg.g if PairKind(self.kind) is PairKind.INTRALEG else cfg.k


@dataclass(frozen=True)
class RabiTrace:
    times: np.ndarray
    values: np.ndarray
    seed: int | None = None


def _pair_current(pair: MeasurementPair, state: np.ndarray, cfg: LadderConfig) -> float:
    field = link_currents(state, cfg)
    if PairKind(pair.kind) is PairKind.INTRALEG:
        return float(field.leg_links[Leg(pair.leg).offset, pair.rung - 1])
    return float(field.rungs[pair.rung - 1])


def _pair_decay(pair: MeasurementPair, rates: DissipationSpec, scale: float) -> float:
    (g1, d1), (g2, d2) = (rates.site_rates(s) for s in pair.sites())
    return scale * (g1 + g2 + d1 + d2) / 4


def _check_pair(pair: MeasurementPair, cfg: LadderConfig, state: np.ndarray):
    a, b = (site_index(s, cfg.n_rungs) for s in pair.sites())
    if abs(state[a]) ** 2 + abs(state[b]) ** 2 == 0:
        raise ValueError("state has no weight on the measured pair")
    return a, b


def rabi_population_difference(
    t, pair: MeasurementPair, state: np.ndarray, cfg: LadderConfig, rates: DissipationSpec
):
    """Strong-coupling population difference of a decoupled pair prepared in ``state``.

    ``P(t) = exp(-gt t)[cos(2 c t) P(0) + sin(2 c t) j / c]`` with ``c`` the
    pair coupling and ``gt`` the average of the four site rates.
    """
    state = np.asarray(state, dtype=complex)
    a, b = _check_pair(pair, cfg, state)
    scale = angular_scale(cfg)
    coupling = scale * pair.coupling(cfg)
    p0 = abs(state[b]) ** 2 - abs(state[a]) ** 2
    ratio = _pair_current(pair, state, cfg) / coupling
    t = np.asarray(t, dtype=float)
    out = np.exp(-_pair_decay(pair, rates, scale) * t) * (np.cos(2 * coupling * t) * p0 + np.sin(2 * coupling * t) * ratio)
    return float(out) if out.ndim == 0 else out


def pair_density_matrix(pair: MeasurementPair, state: np.ndarray, cfg: LadderConfig) -> np.ndarray:
    """Truncation of ``|state><state|`` to ``{|0>, first, second}``; the missing weight sits in ``|0>``."""
    a, b = _check_pair(pair, cfg, np.asarray(state))
    amps = np.array([0.0, state[a], state[b]], dtype=complex)
    rho = np.outer(amps, amps.conj())
    rho[0, 0] = 1 - np.sum(np.abs(amps) ** 2)
    return rho


def simulate_measurement(
    pair: MeasurementPair,
    state: np.ndarray,
    cfg: LadderConfig,
    rates: DissipationSpec,
    horizon: float,
    samples: int = 1001,
    noise_sigma: float | None = None,
    seed: int | None = None,
    steps_per_period: int = 400,
) -> RabiTrace:
    """Master-equation trace of the decoupled pair, optionally with Gaussian readout noise."""
    state = np.asarray(state, dtype=complex)
    a, b = _check_pair(pair, cfg, state)
    scale = angular_scale(cfg)
    h_full = scale * build_open_ladder(cfg)
    h = np.zeros((3, 3), dtype=complex)
    h[1:, 1:] = h_full[np.ix_([a, b], [a, b])]
    rho0 = pair_density_matrix(pair, state, cfg)
    (g1, d1), (g2, d2) = (rates.site_rates(s) for s in pair.sites())
    relaxation = scale * np.array([0.0, g1, g2])
    dephasing = scale * np.array([0.0, d1, d2])
    fastest = max(2 * scale * pair.coupling(cfg), float(relaxation.max()), float(dephasing.max()), 1e-300)
    step = 2 * math.pi / fastest / steps_per_period
    times = np.linspace(0.0, horizon, samples)
    rho = integrate_master_equation(h, rho0, relaxation, dephasing, times, step)
    values = np.real(rho[:, 2, 2] - rho[:, 1, 1])
    if noise_sigma:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    return RabiTrace(times=times, values=values, seed=seed)


def analytic_trace(
    pair: MeasurementPair, state: np.ndarray, cfg: LadderConfig, rates: DissipationSpec, horizon: float, samples: int = 1001
) -> RabiTrace:
    times = np.linspace(0.0, horizon, samples)
    return RabiTrace(times, rabi_population_difference(times, pair, state, cfg, rates))


@dataclass(frozen=True)
class CurrentFit:
    j_estimate: float
    p0_estimate: float
    residual: float
    window_periods: float
    samples_used: int


def extract_current(
    trace: RabiTrace,
    coupling: float,
    decay: float,
    window_periods: float = 3.0,
) -> CurrentFit:
    """Fit ``P(t) = exp(-decay t)[A cos(2 c t) + B sin(2 c t)]`` and return ``j = B c``.

    ``coupling`` and ``decay`` are angular rates (1/us) known from calibration;
    only the first ``window_periods`` oscillation periods are used. With both
    rates fixed the model is linear in ``(A, B)``.
    """
    if coupling <= 0:
        raise ValueError("coupling must be > 0")
    freq = 2 * coupling
    period = 2 * math.pi / freq
    times = np.asarray(trace.times, dtype=float)
    values = np.asarray(trace.values, dtype=float)
    if times[-1] - times[0] < period * (1 - 1e-9):
        raise ValueError("trace must cover at least one Rabi period")
    mask = times <= times[0] + window_periods * period * (1 + 1e-12)
    t, y = times[mask], values[mask]
    envelope = np.exp(-decay * t)
    design = np.column_stack([envelope * np.cos(freq * t), envelope * np.sin(freq * t)])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    residual = float(np.sqrt(np.mean((y - design @ np.array([a, b])) ** 2)))
    return CurrentFit(
        j_estimate=float(b * coupling),
        p0_estimate=float(a),
        residual=residual,
        window_periods=window_periods,
        samples_used=int(mask.sum()),
    )


def pair_fit_parameters(pair: MeasurementPair, cfg: LadderConfig, rates: DissipationSpec) -> tuple[float, float]:
    """Calibrated ``(coupling, decay)`` angular rates for :func:`extract_current`."""
    scale = angular_scale(cfg)
    return scale * pair.coupling(cfg), _pair_decay(pair, rates, scale)
