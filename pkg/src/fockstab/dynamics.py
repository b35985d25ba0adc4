"""Three-level Jaynes-Cummings dynamics under a piecewise-constant Stark control.

Joint operators act on atom (x) field with atom levels ordered (g, e, m) and
joint index x*dim + n, so a (3*dim, 3*dim) matrix splits into nine dim x dim
field blocks. The interaction couples only |g,n+1>, |e,n>, |m,n-1|, so every
joint Hamiltonian built here is block-diagonal over those triples (pairs or
singletons at the truncation edges); propagators are computed exactly by
Hermitian eigendecomposition of each small block.

The control u shifts the middle atomic level: u = -delta_g makes the (g, e)
transition resonant, u = +delta_m makes (e, m) resonant. One reservoir cycle
is resonant-(g,e) for theta1, resonant-(e,m) for theta2, resonant-(g,e) for
theta1 again (pulse areas in radians).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .fock import annihilation

G, E, M = 0, 1, 2

UNITARY_TOL = 1e-10


def trapping_theta1(nbar: int) -> float:
    """Pulse area theta1 = pi/sqrt(nbar+1) that freezes the target level."""
    return math.pi / math.sqrt(nbar + 1)


def default_dim(nbar: int) -> int:
    """Default field truncation 9*(nbar+1), one level past the second dark level."""
    return 9 * (nbar + 1)


@dataclass(frozen=True)
class ReservoirParams:
    """Control and interaction parameters for one reservoir cycle.

    omega is the vacuum coupling rate (rad/s); delta_g and delta_m are the
    bare detunings of the two atomic transitions from the field mode (rad/s);
    theta1 and theta2 are the pulse areas of the outer and middle segments;
    phi is the target value of the phase delta_bar * t_s accumulated during
    the middle segment (realized by shifting delta_m, see `phase_adjusted`);
    Ts is the atom repetition period (s).
    """

    nbar: int
    omega: float
    delta_g: float
    delta_m: float
    theta1: float
    theta2: float
    phi: float = 0.0
    Ts: float = 60e-6

    def __post_init__(self) -> None:
        if self.nbar < 1:
            raise ConfigError(f"nbar must be >= 1, got {self.nbar}")
        if self.omega <= 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.theta1 <= 0:
            raise ConfigError(f"theta1 must be positive, got {self.theta1}")
        if self.theta2 < 0:
            raise ConfigError(f"theta2 must be nonnegative, got {self.theta2}")
        if self.interaction_time > self.Ts:
            raise ConfigError(
                f"interaction time {self.interaction_time:.3e} s exceeds period {self.Ts:.3e} s"
            )
        if self.delta_bar < 20 * self.omega:
            warnings.warn(
                f"detuning ratio delta_bar/omega = {self.delta_bar / self.omega:.1f} < 20; "
                "the separate-resonance picture degrades",
                stacklevel=2,
            )

    @property
    def delta_bar(self) -> float:
        return abs(self.delta_g + self.delta_m)

    @property
    def t_s(self) -> float:
        """Duration of the middle (e, m)-resonant segment."""
        return self.theta2 / self.omega

    @property
    def interaction_time(self) -> float:
        """Total duration T = 2*theta1/omega + theta2/omega of one cycle."""
        return (2.0 * self.theta1 + self.theta2) / self.omega


def make_params(
    nbar: int,
    theta2: float,
    theta1: float | None = None,
    omega: float = 2 * math.pi * 50e3,
    delta_ratio: float = 100.0,
    Ts: float = 60e-6,
    phi: float = 0.0,
) -> ReservoirParams:
    """ReservoirParams with the realistic cavity defaults.

    omega/2pi = 50 kHz, delta_bar = delta_ratio * omega split evenly between
    the two transitions, Ts = 60 us. theta1 defaults to the trapping value.
    """
    if theta1 is None:
        theta1 = trapping_theta1(nbar)
    half = 0.5 * delta_ratio * omega
    return ReservoirParams(
        nbar=nbar, omega=omega, delta_g=half, delta_m=half,
        theta1=theta1, theta2=theta2, phi=phi, Ts=Ts,
    )


@dataclass(frozen=True)
class ControlSchedule:
    """Ordered (duration, u) segments covering one interaction of length T."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.segments or any(d <= 0 for d, _ in self.segments):
            raise ConfigError("schedule segments must have positive durations")

    @property
    def total_duration(self) -> float:
        return sum(d for d, _ in self.segments)


def phase_adjusted(params: ReservoirParams) -> ReservoirParams:
    """Shift delta_m so the middle segment accumulates exactly params.phi.

    The shift delta satisfies (delta_bar + delta) * t_s = phi (mod 2pi) with
    the smallest magnitude, mirroring the experimental knob of slightly
    retuning the field mode frequency. With theta2 = 0 there is no middle
    segment and phi must be 0.
    """
    t_s = params.t_s
    if t_s == 0.0:
        if params.phi != 0.0:
            raise ConfigError("phi is not realizable with theta2 = 0 (no middle segment)")
        return params
    mismatch = (params.phi - params.delta_bar * t_s + math.pi) % (2 * math.pi) - math.pi
    return replace(params, delta_m=params.delta_m + mismatch / t_s)


def control_schedule(params: ReservoirParams) -> ControlSchedule:
    """The three-segment Stark control: u = (-delta_g, +delta_m, -delta_g).

    Outer segments last (T - t_s)/2 = theta1/omega each, the middle one t_s.
    theta2 = 0 degenerates to the single resonant segment of the plain
    trapping scheme (warned, since the stabilization argument needs theta2 > 0).
    """
    outer = params.theta1 / params.omega
    if params.theta2 == 0.0:
        warnings.warn(
            "theta2 = 0: schedule degenerates to a single resonant segment "
            "(trapping scheme without the stabilizing middle pulse)",
            stacklevel=2,
        )
        return ControlSchedule(((2.0 * outer, -params.delta_g),))
    return ControlSchedule(
        (
            (outer, -params.delta_g),
            (params.t_s, params.delta_m),
            (outer, -params.delta_g),
        )
    )


def build_hjc(u: float, params: ReservoirParams, field_dim: int) -> np.ndarray:
    """Joint Hamiltonian for control value u on 3*field_dim levels.

    H = (delta_m - u)|m><m| - (delta_g + u)|g><g|
        + i(omega/2) (adag (|g><e| + |e><m|) - a (|e><g| + |m><e|)).
    """
    if field_dim < params.nbar + 2:
        raise ConfigError(f"field_dim {field_dim} too small for nbar {params.nbar}")
    d = field_dim
    a = annihilation(d)
    adag = a.conj().T
    h = np.zeros((3 * d, 3 * d), dtype=np.complex128)
    h[G * d : (G + 1) * d, G * d : (G + 1) * d] = -(params.delta_g + u) * np.eye(d)
    h[M * d : (M + 1) * d, M * d : (M + 1) * d] = (params.delta_m - u) * np.eye(d)
    coup = 0.5j * params.omega * adag
    h[G * d : (G + 1) * d, E * d : (E + 1) * d] = coup
    h[E * d : (E + 1) * d, M * d : (M + 1) * d] = coup
    h[E * d : (E + 1) * d, G * d : (G + 1) * d] = coup.conj().T
    h[M * d : (M + 1) * d, E * d : (E + 1) * d] = coup.conj().T
    return h


def ladder_blocks(field_dim: int) -> list[np.ndarray]:
    """Joint-index groups left invariant by the interaction.

    Block n collects the existing members of (|g,n+1>, |e,n>, |m,n-1>); the
    edges contribute the singletons |g,0> and |m,dim-1> and two pairs.
    """
    d = field_dim
    blocks: list[list[int]] = [[G * d + 0]]
    for n in range(d):
        idx = []
        if n + 1 <= d - 1:
            idx.append(G * d + n + 1)
        idx.append(E * d + n)
        if n - 1 >= 0:
            idx.append(M * d + n - 1)
        blocks.append(idx)
    blocks.append([M * d + d - 1])
    return [np.array(b, dtype=np.intp) for b in blocks]


def propagate(h: np.ndarray, t: float) -> np.ndarray:
    """Exact propagator exp(-i h t) of a ladder-block Hamiltonian.

    Each invariant block (at most 3x3) is exponentiated through its Hermitian
    eigendecomposition, so the result is unitary on the truncated joint space
    to machine precision. Raises if h is not Hermitian or couples levels
    outside the ladder blocks.
    """
    if t < 0:
        raise ConfigError(f"propagation time must be nonnegative, got {t}")
    scale = max(1.0, float(np.abs(h).max()))
    defect = float(np.abs(h - h.conj().T).max())
    if defect > 1e-12 * scale:
        raise ValueError(f"Hamiltonian not Hermitian: relative defect {defect / scale:.3e}")
    if h.shape[0] % 3 != 0:
        raise ConfigError(f"joint dimension {h.shape[0]} is not a multiple of 3")
    d = h.shape[0] // 3
    blocks = ladder_blocks(d)
    mask = np.zeros(h.shape, dtype=bool)
    for idx in blocks:
        mask[np.ix_(idx, idx)] = True
    stray = float(np.abs(h[~mask]).max()) if (~mask).any() else 0.0
    if stray > 1e-9 * scale:
        raise ValueError(f"Hamiltonian couples levels across ladder blocks (max {stray:.3e})")
    u = np.zeros_like(h)
    for idx in blocks:
        hb = h[np.ix_(idx, idx)]
        w, v = np.linalg.eigh(hb)
        u[np.ix_(idx, idx)] = (v * np.exp(-1j * w * t)) @ v.conj().T
    return u


def composite_propagator(params: ReservoirParams, field_dim: int) -> np.ndarray:
    """Propagator of the full three-segment cycle, in time order.

    delta_m is first adjusted so the accumulated middle-segment phase equals
    params.phi; the segment propagators are then multiplied latest-first.
    """
    eff = phase_adjusted(params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        schedule = control_schedule(eff)
    u_total = np.eye(3 * field_dim, dtype=np.complex128)
    for duration, u_val in schedule.segments:
        u_total = propagate(build_hjc(u_val, eff, field_dim), duration) @ u_total
    return u_total


def unitarity_defect(u: np.ndarray) -> float:
    """Max-norm of U^dag U - I."""
    return float(np.abs(u.conj().T @ u - np.eye(u.shape[0])).max())
