"""Non-Markovianity measures evaluated directly on the MPDO network.

Both measures are entropies in bits. The operational one halves the
entanglement entropy of the vectorized process tensor across a temporal cut;
the environment one is the von Neumann entropy of the effective environment
state propagated by trace-averaged interventions. Neither ever materializes
the multi-time tensor: the first works in the ``D**2``-dimensional bond space
through left/right Gram matrices, the second through a ``D x D`` recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .process_tensor import ProcessTensorMPDO, _env_state_recursion
from .tensorops import (
    Spectrum,
    check_density_matrix,
    check_unitary,
    renyi_entropy,
    von_neumann_entropy,
)

TRACE_TOL = 1e-9


@dataclass(frozen=True)
class EnvState:
    """Effective environment state after a number of steps."""

    rho: np.ndarray
    step: int


def env_state(pt: ProcessTensorMPDO, j: int, trace_tol: float = TRACE_TOL) -> EnvState:
    """Effective environment state ``rho_E_j`` under trace-averaged histories.

    Step zero is the environment marginal of the initial joint state; each
    later step feeds the maximally mixed system through the site tensor and
    keeps the environment, renormalized per step (see
    ``_env_state_recursion`` for the trace bookkeeping).
    """
    return EnvState(_env_state_recursion(pt, j, trace_tol=trace_tol), j)


def _entropy_of_state(rho: np.ndarray, alpha: float | None) -> float:
    w = np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)
    spectrum = Spectrum.from_values(w)
    if alpha is None:
        return von_neumann_entropy(spectrum)
    return renyi_entropy(spectrum, alpha)


def nm_ee(pt: ProcessTensorMPDO, j: int, trace_tol: float = TRACE_TOL) -> float:
    """Environment-entropy measure ``S(rho_E_j)`` in bits, ``1 <= j <= k``."""
    if not 1 <= j <= pt.k:
        raise ValueError(f"j must lie in [1, {pt.k}], got {j}")
    return _entropy_of_state(env_state(pt, j, trace_tol=trace_tol).rho, None)


# ---------------------------------------------------------------------------
# Operational entanglement entropy across a temporal cut
# ---------------------------------------------------------------------------


def _left_grams(pt: ProcessTensorMPDO, up_to: int) -> list[np.ndarray]:
    """Gram matrices of the left blocks at bonds 0..up_to, 4-axis form
    ``[bra_bond, bra_bond', ket_bond, ket_bond']``."""
    l = np.einsum("oOxX,oOyY->xXyY", pt.rho0.conj(), pt.rho0)
    grams = [l]
    for m in range(up_to):
        w = pt.sites[m]
        tmp = np.einsum("xXyY,iIoOyYbB->xXiIoObB", l, w)
        l = np.einsum("xXiIoObB,iIoOxXcC->cCbB", tmp, w.conj())
        grams.append(l)
    return grams


def _right_gram(pt: ProcessTensorMPDO, at_bond: int) -> np.ndarray:
    """Gram matrix of the right block at the given bond (4-axis form); the
    final environment trace is the boundary vector."""
    D = pt.D
    r = np.einsum("xX,yY->xXyY", np.eye(D), np.eye(D)).astype(complex)
    for m in range(pt.k - 1, at_bond - 1, -1):
        w = pt.sites[m]
        tmp = np.einsum("iIoOyYqQ,pPqQ->iIoOyYpP", w, r)
        r = np.einsum("iIoOxXpP,iIoOyYpP->xXyY", w.conj(), tmp)
    return r


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def _cut_spectrum(gram_left: np.ndarray, gram_right: np.ndarray) -> np.ndarray:
    """Normalized Schmidt spectrum across a cut from the two bond Grams.

    The reduced state of the left block is ``L G_R^T L^†`` for left-block
    vectors ``L``, so its nonzero spectrum is that of ``G_R^T G_L``, evaluated
    here in the manifestly Hermitian form ``sqrt(G_L) G_R^T sqrt(G_L)``.
    """
    n = int(round(math.sqrt(gram_left.size)))
    gl = gram_left.reshape(n, n)
    gr = gram_right.reshape(n, n)
    s = _sqrt_psd(gl)
    eigs = np.linalg.eigvalsh(s @ gr.T @ s)
    total = eigs.sum()
    if total <= 0:
        raise ValueError("process tensor has zero norm across the cut")
    return eigs / total


def _split_site(w: np.ndarray):
    """SVD a site tensor between its input pair and output pair, returning
    half-site tensors ``[i, i', a, a', m]`` and ``[m, o, o', b, b']``."""
    d, D = w.shape[0], w.shape[4]
    mat = w.transpose(0, 1, 4, 5, 2, 3, 6, 7).reshape(d * d * D * D, d * d * D * D)
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    keep = s > s[0] * 1e-14 if s[0] > 0 else slice(0, 1)
    u, s, vh = u[:, keep], s[keep], vh[keep]
    left = (u * np.sqrt(s)).reshape(d, d, D, D, s.size)
    right = (np.sqrt(s)[:, None] * vh).reshape(s.size, d, d, D, D)
    return left, right


def osee(
    pt: ProcessTensorMPDO,
    j: int,
    alpha: float | None = None,
    cut: str = "bond",
) -> float:
    """Operational measure: half the entanglement entropy of the vectorized
    process tensor across the temporal cut at step ``j``, in bits.

    ``cut="bond"`` (default) places the cut on the environment bond between
    the step-``j`` and step-``j+1`` site tensors, keeping slots up to ``o_j``
    on the left; ``cut="site"`` instead splits the step-``j`` site between
    its input and output pairs. ``alpha`` switches the entropy to the Renyi
    family.
    """
    if cut == "bond":
        if not 1 <= j <= pt.k - 1:
            raise ValueError(f"bond cut needs 1 <= j <= {pt.k - 1}, got {j}")
        gl = _left_grams(pt, j)[j]
        gr = _right_gram(pt, j)
        spectrum = _cut_spectrum(gl, gr)
    elif cut == "site":
        if not 1 <= j <= pt.k:
            raise ValueError(f"site cut needs 1 <= j <= {pt.k}, got {j}")
        gl4 = _left_grams(pt, j - 1)[j - 1]
        left_half, right_half = _split_site(pt.sites[j - 1])
        gl = np.einsum("iIxXu,xXyY,iIyYv->uv", left_half.conj(), gl4, left_half)
        r4 = _right_gram(pt, j)
        gr = np.einsum("uoOpP,pPqQ,voOqQ->uv", right_half.conj(), r4, right_half)
        spectrum = _cut_spectrum(gl, gr)
    else:
        raise ValueError(f"unknown cut {cut!r}; expected 'bond' or 'site'")
    values = Spectrum.from_values(spectrum)
    if alpha is None:
        return von_neumann_entropy(values) / 2.0
    return renyi_entropy(values, alpha) / 2.0


# ---------------------------------------------------------------------------
# Memory complexity for unitary models
# ---------------------------------------------------------------------------


def memory_complexity(
    u: np.ndarray,
    rho0_se: np.ndarray,
    d: int,
    D: int,
    j: int,
    trace_tol: float = TRACE_TOL,
) -> float:
    """Environment entropy of a unitary system-environment model after ``j``
    steps, in bits, computed on raw matrices.

    This is the same quantity the environment measure assigns to the model's
    process tensor, but evaluated without ever forming a site tensor, which
    makes it an independent check for channels that are unitary conjugations.
    """
    u = np.asarray(u, dtype=complex)
    check_unitary(u, tol=1e-9, name="model unitary")
    if u.shape != (d * D, d * D):
        raise ValueError(f"unitary has shape {u.shape}, expected {(d * D, d * D)}")
    rho0_se = np.asarray(rho0_se, dtype=complex)
    check_density_matrix(rho0_se, name="initial joint state")
    env = np.einsum("sesE->eE", rho0_se.reshape(d, D, d, D))
    for m in range(j):
        joint = np.kron(np.eye(d) / d, env)
        joint = u @ joint @ u.conj().T
        env = np.einsum("sesE->eE", joint.reshape(d, D, d, D))
        trace = float(np.trace(env).real)
        if abs(trace - 1.0) > trace_tol:
            raise ValueError(f"environment trace drifted to {trace!r} at step {m + 1}")
        env = (env + env.conj().T) / (2.0 * trace)
    return _entropy_of_state(env, None)


# ---------------------------------------------------------------------------
# Series over steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureSeries:
    """A measure evaluated over a range of steps.

    ``boundary_flagged`` lists the steps close enough to the final time that
    the operational measure is depressed by the right boundary rather than by
    any loss of memory.
    """

    kind: str
    steps: tuple[int, ...]
    values: tuple[float, ...]
    boundary_flagged: tuple[int, ...] = ()

    def value_at(self, j: int) -> float:
        return self.values[self.steps.index(j)]


def measure_series(
    pt: ProcessTensorMPDO,
    kind: str,
    alpha: float | None = None,
    boundary_margin: float | None = None,
    trace_tol: float = TRACE_TOL,
) -> MeasureSeries:
    """Sweep a measure over all valid steps of the process tensor.

    ``kind`` is ``"osee"`` (steps ``1..k-1``, right-boundary points flagged
    within ``boundary_margin`` of ``k``, default ``k/5``) or ``"ee"``
    (steps ``1..k``).
    """
    if kind == "osee":
        steps = tuple(range(1, pt.k))
        grams = _left_grams(pt, pt.k - 1)
        values = []
        for j in steps:
            spectrum = Spectrum.from_values(_cut_spectrum(grams[j], _right_gram(pt, j)))
            if alpha is None:
                values.append(von_neumann_entropy(spectrum) / 2.0)
            else:
                values.append(renyi_entropy(spectrum, alpha) / 2.0)
        margin = pt.k / 5.0 if boundary_margin is None else float(boundary_margin)
        flagged = tuple(j for j in steps if pt.k - j <= margin)
        return MeasureSeries(kind, steps, tuple(values), flagged)
    if kind == "ee":
        steps = tuple(range(1, pt.k + 1))
        values = []
        env = np.einsum("ooaA->aA", pt.rho0)
        env = (env + env.conj().T) / 2.0
        for m in range(pt.k):
            env = np.einsum("iiooaAbB,aA->bB", pt.sites[m], env) / pt.d
            trace = float(np.trace(env).real)
            if abs(trace - 1.0) > trace_tol:
                raise ValueError(
                    f"environment-state trace drifted to {trace!r} at step {m + 1}"
                )
            env = (env + env.conj().T) / (2.0 * trace)
            values.append(_entropy_of_state(env, alpha))
        return MeasureSeries(kind, steps, tuple(values))
    raise ValueError(f"unknown measure kind {kind!r}; expected 'osee' or 'ee'")
