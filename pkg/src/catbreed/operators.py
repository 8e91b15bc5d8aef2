"""Unitaries and channels on truncated Fock spaces."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.special import gammaln

from .fock_core import (
    TAIL_TOLERANCE,
    DegenerateStateError,
    DensityMatrix,
    FockState,
    TwoModeState,
    as_density,
    padded_dim,
    tensor,
    vacuum,
)


class TruncationWarning(UserWarning):
    pass


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def creation(dim: int) -> np.ndarray:
    return annihilation(dim).T.copy()


def _frozen(arr):
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=256)
def squeeze_matrix(r: float, dim: int) -> np.ndarray:
    """``exp((r/2)(a^2 - a^dag^2))`` built at 25% padding and cropped to ``dim``."""
    big = padded_dim(dim)
    a = annihilation(big)
    gen = 0.5 * r * (a @ a - a.T @ a.T)
    return _frozen(scipy.linalg.expm(gen)[:dim, :dim].astype(complex))


@lru_cache(maxsize=256)
def _displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    big = padded_dim(dim)
    a = annihilation(big)
    gen = alpha * a.T - np.conj(alpha) * a
    return _frozen(scipy.linalg.expm(gen)[:dim, :dim])


def displacement_matrix(alpha: complex, dim: int) -> np.ndarray:
    return _displacement_matrix(complex(alpha), dim)


def squeeze(state: FockState, r: float) -> FockState:
    return FockState.from_vector(squeeze_matrix(r, state.dim) @ state.amplitudes)


def displace(state: FockState, alpha: complex) -> FockState:
    """Apply ``D(alpha) = exp(alpha a^dag - alpha* a)``; ``<X>`` shifts by ``sqrt(2) Re alpha``."""
    out = displacement_matrix(alpha, state.dim) @ state.amplitudes
    lost = 1.0 - np.linalg.norm(out) ** 2
    if lost > 1e-8:
        warnings.warn(f"displacement lost {lost:.2e} of the norm to truncation", TruncationWarning)
    return FockState.from_vector(out)


def phase_rotate(state, theta: float):
    """``exp(i theta n)`` applied to a pure or mixed state."""
    if isinstance(state, FockState):
        ph = np.exp(1j * theta * np.arange(state.dim))
        return FockState.from_vector(ph * state.amplitudes)
    rho = as_density(state).elements
    ph = np.exp(1j * theta * np.arange(rho.shape[0]))
    return DensityMatrix.from_array(ph[:, None] * rho * ph.conj()[None, :])


@dataclass(frozen=True)
class BeamsplitterSpec:
    """Lossless two-mode mixer.

    On coherent inputs (phase 0) it maps
    ``|b>|g> -> |sqrt(t) b + sqrt(1-t) g>|sqrt(1-t) b - sqrt(t) g>``;
    ``phase`` rotates the second input by ``exp(i phase n)`` first.
    """

    transmissivity: float = 0.5
    phase: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValueError(f"transmissivity {self.transmissivity} outside [0, 1]")


def _mixing_block(total: int, theta: float) -> np.ndarray:
    """``exp(theta (a1^dag a2 - a1 a2^dag))`` on the ``n1 + n2 = total`` block, indexed by n1."""
    n1 = np.arange(total)
    # <n1+1, total-n1-1| a1^dag a2 |n1, total-n1>
    hop = np.sqrt((n1 + 1.0) * (total - n1))
    gen = np.zeros((total + 1, total + 1))
    gen[n1 + 1, n1] = hop
    gen[n1, n1 + 1] = -hop
    return scipy.linalg.expm(theta * gen)


@lru_cache(maxsize=32)
def beamsplitter_matrix(spec: BeamsplitterSpec, dim: int) -> sp.csr_matrix:
    """Sparse map on flattened amplitudes ``c[n1*dim + n2]`` with outputs cropped to ``dim``.

    The mixer conserves total photon number, so the generator exponential is
    exact block by block; only outputs with a photon number >= dim are dropped.
    """
    t = spec.transmissivity
    theta = -math.acos(math.sqrt(t))
    rows, cols, vals = [], [], []
    for total in range(0, 2 * dim - 1):
        block = _mixing_block(total, theta)
        n1 = np.arange(total + 1)
        n2 = total - n1
        # input reflection (-1)^n2 combined with the phase on mode 2
        in_phase = (-1.0) ** n2 * np.exp(1j * spec.phase * n2)
        valid = (n1 < dim) & (n2 < dim)
        idx = np.flatnonzero(valid)
        if idx.size == 0:
            continue
        sub = block[np.ix_(idx, idx)] * in_phase[idx][None, :]
        flat = n1[idx] * dim + n2[idx]
        rr, cc = np.meshgrid(flat, flat, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(sub.ravel())
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim * dim, dim * dim),
    )
    mat.eliminate_zeros()
    return mat


def beamsplitter_amplitudes(amps: np.ndarray, spec: BeamsplitterSpec, tail_tol: float = TAIL_TOLERANCE):
    """Mix one (``dim x dim``) or a stack of (``k x dim x dim``) two-mode amplitude arrays.

    Returns the (unrenormalized) cropped output and the norm lost to the cutoff.
    """
    amps = np.asarray(amps, dtype=complex)
    dim = amps.shape[-1]
    flat = amps.reshape(-1, dim * dim).T
    out = beamsplitter_matrix(spec, dim) @ flat
    lost = np.sum(np.abs(flat) ** 2, axis=0) - np.sum(np.abs(out) ** 2, axis=0)
    worst = float(np.max(lost))
    if worst > tail_tol:
        warnings.warn(
            f"beamsplitter output lost {worst:.2e} of the norm above photon number {dim - 1}",
            TruncationWarning,
        )
    return out.T.reshape(amps.shape), lost


def beamsplitter_apply(psi: TwoModeState, spec: BeamsplitterSpec = BeamsplitterSpec()) -> TwoModeState:
    out, _ = beamsplitter_amplitudes(psi.amplitudes, spec)
    return TwoModeState.from_matrix(out)


def annihilate(state: FockState):
    """Return ``(a|s>/||a|s>||, ||a|s>||^2)``."""
    out = annihilation(state.dim) @ state.amplitudes
    weight = float(np.linalg.norm(out) ** 2)
    if weight < 1e-14:
        raise DegenerateStateError("annihilation of the vacuum gives the zero vector")
    return FockState.from_vector(out), weight


def tap_subtract(state: FockState, tap_transmissivity: float):
    """Herald a single photon reflected off a weak tap.

    The state is mixed with vacuum on a beamsplitter of the given
    transmissivity and the tap output is projected on ``|1>``. Returns the
    renormalized transmitted state and the herald probability.
    """
    if not 0.0 < tap_transmissivity < 1.0:
        raise ValueError("tap transmissivity must lie strictly between 0 and 1")
    joint = tensor(state, vacuum(state.dim))
    out, _ = beamsplitter_amplitudes(joint.amplitudes, BeamsplitterSpec(tap_transmissivity))
    kept = out[:, 1]
    prob = float(np.linalg.norm(kept) ** 2)
    if prob < 1e-12:
        raise DegenerateStateError(f"herald probability {prob:.2e} is too small to subtract a photon")
    return FockState.from_vector(kept), prob


@lru_cache(maxsize=64)
def loss_kraus(eta: float, dim: int) -> tuple:
    """Kraus operators ``sqrt((1-eta)^k / k!) eta^(n/2) a^k`` for ``k < dim``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    ops = []
    for k in range(dim):
        m = np.arange(k, dim)
        log_binom = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
        coef = np.exp(0.5 * log_binom) * (1.0 - eta) ** (k / 2.0) * eta ** ((m - k) / 2.0)
        op = np.zeros((dim, dim))
        op[m - k, m] = coef
        ops.append(_frozen(op))
    return tuple(ops)


def _loss_array(rho: np.ndarray, eta: float) -> np.ndarray:
    if eta == 1.0:
        return rho.copy()
    out = np.zeros_like(rho, dtype=complex)
    for op in loss_kraus(float(eta), rho.shape[0]):
        out += op @ rho @ op.T
    return out


def loss_adjoint(op: np.ndarray, eta: float) -> np.ndarray:
    """Heisenberg-picture loss map ``sum_k A_k^dag O A_k``; turns ideal POVM elements into lossy ones."""
    op = np.asarray(op, dtype=complex)
    if eta == 1.0:
        return op.copy()
    out = np.zeros_like(op)
    for kraus in loss_kraus(float(eta), op.shape[0]):
        out += kraus.T @ op @ kraus
    return out


def loss_channel(rho, eta: float) -> DensityMatrix:
    """Pure-loss channel of transmissivity ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    rho = as_density(rho)
    return DensityMatrix.from_array(_loss_array(rho.elements, eta))
