"""Concrete system-environment models driving the numerical studies.

Two families are provided. The spin-pair model couples the system qubit to a
single damped environment qubit through an exchange interaction, with the
step channel obtained by exponentiating the joint generator. The dephasing
impurity model couples the qubit to a continuous mode discretized on a grid;
its environment unitary is diagonal, so everything about it is handled with
phase vectors rather than site tensors, and its environment entropy comes
from a binomial mixture of phase-shifted copies of the initial mode state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .channels import (
    ChannelTensor,
    KrausChannel,
    LindbladSpec,
    kraus_to_w,
    lindblad_superoperator,
    superop_to_kraus,
)
from .measures import MeasureSeries
from .tensorops import Spectrum, check_density_matrix, matrix_exp, von_neumann_entropy

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)


# ---------------------------------------------------------------------------
# Damped exchange-coupled spin pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XXChainParams:
    """Spin pair with exchange coupling and a damped environment spin.

    ``gamma`` is the damping strength, ``n`` the excitation fraction of the
    bath the environment spin relaxes towards (its stationary state is
    ``diag(1-n, n)``, reached at rate ``2*gamma``), ``delta`` the step
    duration. ``rho0_system`` is the initial system state; the maximally
    mixed default makes the first slot of the process tensor carry no bias.
    """

    gamma: float
    n: float = 0.0
    delta: float = 0.3
    coupling: float = 1.0
    rho0_system: np.ndarray | None = None

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0.0 <= self.n <= 1.0:
            raise ValueError(f"n must lie in [0, 1], got {self.n}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.rho0_system is not None:
            rho = np.asarray(self.rho0_system, dtype=complex)
            check_density_matrix(rho, name="initial system state")
            object.__setattr__(self, "rho0_system", rho)

    def system_state(self) -> np.ndarray:
        if self.rho0_system is None:
            return np.eye(2, dtype=complex) / 2.0
        return self.rho0_system

    def environment_state(self) -> np.ndarray:
        return np.diag([1.0 - self.n, self.n]).astype(complex)


def xx_chain_hamiltonian(p: XXChainParams) -> np.ndarray:
    return p.coupling * (np.kron(SIGMA_X, SIGMA_X) + np.kron(SIGMA_Y, SIGMA_Y))


def xx_chain_liouvillian(p: XXChainParams) -> np.ndarray:
    """Joint generator: exchange Hamiltonian plus damping of the environment
    spin towards ``diag(1-n, n)``."""
    eye = np.eye(2, dtype=complex)
    jumps = []
    if p.gamma > 0:
        jumps.append((np.kron(eye, SIGMA_MINUS), p.gamma * (1.0 - p.n)))
        jumps.append((np.kron(eye, SIGMA_PLUS), p.gamma * p.n))
    spec = LindbladSpec(xx_chain_hamiltonian(p), tuple(jumps))
    return lindblad_superoperator(spec)


def xx_chain_unitary(p: XXChainParams) -> np.ndarray:
    """Single-step joint unitary of the undamped model."""
    return matrix_exp(xx_chain_hamiltonian(p), -1j * p.delta)


def xx_chain_model(p: XXChainParams) -> tuple[ChannelTensor, np.ndarray]:
    """Step channel and initial joint state.

    The channel is ``exp(L*delta)`` converted to Kraus form through its Choi
    spectrum; the initial state is the system state tensored with the
    stationary environment state.
    """
    if p.gamma == 0:
        channel = KrausChannel((xx_chain_unitary(p),), 2, 2)
    else:
        superop = scipy.linalg.expm(xx_chain_liouvillian(p) * p.delta)
        channel = superop_to_kraus(superop, 2, 2)
    rho0 = np.kron(p.system_state(), p.environment_state())
    return kraus_to_w(channel), rho0


# ---------------------------------------------------------------------------
# Dephasing models
# ---------------------------------------------------------------------------


def ruqdm_channel(gamma: float, delta: float) -> ChannelTensor:
    """Random-unitary dephasing step on the system alone (trivial environment).

    One step multiplies the system coherence by ``exp(-2*gamma*delta)``,
    realized by the Kraus pair ``{sqrt(1-p) I, sqrt(p) sigma_z}`` with
    ``p = (1 - exp(-2*gamma*delta)) / 2``.
    """
    if gamma < 0 or delta <= 0:
        raise ValueError("gamma must be nonnegative and delta positive")
    p = (1.0 - math.exp(-2.0 * gamma * delta)) / 2.0
    ops = (math.sqrt(1.0 - p) * np.eye(2, dtype=complex), math.sqrt(p) * SIGMA_Z)
    return kraus_to_w(KrausChannel(ops, 2, 1))


@dataclass(frozen=True)
class UQDMParams:
    """Qubit dephased by a continuous mode, discretized on a uniform grid.

    The mode starts in a Lorentzian wave packet of width ``gamma`` sampled at
    ``grid_points`` points spanning ``[-halfwidth_factor*gamma,
    +halfwidth_factor*gamma]``; the coupling ``g`` turns one step into the
    diagonal phase ``exp(-i*g*delta*x/2)`` on the mode, conditioned on the
    qubit's z-basis state.
    """

    gamma: float
    delta: float = 0.1
    g: float = 1.0
    grid_points: int = 5000
    halfwidth_factor: float = 100.0

    def __post_init__(self):
        if self.gamma <= 0 or self.delta <= 0 or self.g <= 0:
            raise ValueError("gamma, delta, and g must all be positive")
        if self.grid_points < 2:
            raise ValueError("grid needs at least two points")


@dataclass(frozen=True)
class UQDMModel:
    params: UQDMParams
    x: np.ndarray
    psi: np.ndarray
    phases: np.ndarray = field(repr=False)


def uqdm_model(p: UQDMParams) -> UQDMModel:
    """Sample the wave packet and the one-step phases on the grid.

    The packet amplitude is ``sqrt(gamma/pi)/(x + i*gamma)``, renormalized on
    the grid so that discretization never leaks probability.
    """
    half = p.halfwidth_factor * p.gamma
    x = np.linspace(-half, half, p.grid_points)
    psi = np.sqrt(p.gamma / np.pi) / (x + 1j * p.gamma)
    psi = psi / np.linalg.norm(psi)
    phases = np.exp(-1j * p.g * p.delta * x / 2.0)
    return UQDMModel(p, x, psi, phases)


def uqdm_overlaps(model: UQDMModel, max_power: int) -> np.ndarray:
    """Overlaps ``c(m) = <psi|U^m|psi>`` for ``m = 0..max_power``; negative
    powers follow by conjugation."""
    weights = np.abs(model.psi) ** 2
    out = np.empty(max_power + 1, dtype=complex)
    cur = weights.astype(complex)
    for m in range(max_power + 1):
        out[m] = cur.sum()
        cur = cur * model.phases
    return out


def _binomial_log_weights(j: int) -> np.ndarray:
    t = np.arange(j + 1, dtype=float)
    return (
        scipy.special.gammaln(j + 1)
        - scipy.special.gammaln(t + 1)
        - scipy.special.gammaln(j - t + 1)
        - j * math.log(2.0)
    )


def uqdm_env_entropy(model: UQDMModel, j: int, overlaps: np.ndarray | None = None) -> float:
    """Environment entropy after ``j`` steps, in bits.

    Averaged interventions turn the mode state into the binomial mixture of
    ``U^m|psi>`` over net powers ``m = -j, -j+2, ..., j``, so the entropy is
    that of the ``(j+1) x (j+1)`` weighted Gram matrix; binomial weights are
    evaluated in log space to survive large ``j``.
    """
    if j < 0:
        raise ValueError(f"j must be nonnegative, got {j}")
    if j == 0:
        return 0.0
    if overlaps is None:
        overlaps = uqdm_overlaps(model, 2 * j)
    c2 = overlaps[0 : 2 * j + 1 : 2]  # overlaps at even powers 0, 2, ..., 2j
    w = np.exp(_binomial_log_weights(j))
    gram = scipy.linalg.toeplitz(c2.conj(), c2) * np.sqrt(np.outer(w, w))
    eigs = np.linalg.eigvalsh(gram)
    return von_neumann_entropy(Spectrum.from_values(eigs))


def uqdm_memory_series(p: UQDMParams, j_max: int) -> MeasureSeries:
    """Memory complexity ``C_j`` for ``j = 1..j_max``."""
    model = uqdm_model(p)
    overlaps = uqdm_overlaps(model, 2 * j_max)
    steps = tuple(range(1, j_max + 1))
    values = tuple(uqdm_env_entropy(model, j, overlaps=overlaps) for j in steps)
    return MeasureSeries("memory", steps, values)


def uqdm_coherence(model: UQDMModel, j: int, flip_at: int | None = None) -> complex:
    """System coherence ``rho_01`` after ``j`` steps from ``|+>``, optionally
    with a bit flip inserted after step ``flip_at``.

    Simulated on the two diagonal branches of the joint pure state, which is
    exact for this model; the free value decays with the overlap ``c(2j)``
    and a flip at ``j/2`` refocuses it completely.
    """
    if j < 0:
        raise ValueError(f"j must be nonnegative, got {j}")
    if flip_at is not None and not 0 <= flip_at <= j:
        raise ValueError(f"flip_at must lie in [0, {j}], got {flip_at}")
    up = model.psi.copy()
    down = model.psi.copy()
    for step in range(j):
        if flip_at is not None and step == flip_at:
            up, down = down, up
        up = up * model.phases
        down = down * model.phases.conj()
    if flip_at is not None and flip_at == j:
        up, down = down, up
    return complex(np.vdot(down, up) / 2.0)
