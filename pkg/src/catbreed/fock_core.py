"""Truncated Fock-basis state representations and state functionals.

Conventions used throughout the package:

* quadrature ``X = (a + a^dagger)/sqrt(2)``, so the vacuum variance is 1/2 and a
  real coherent amplitude ``alpha`` puts the position wavefunction at ``sqrt(2)*alpha``;
* squeezing in dB is ``10*log10(exp(2r))`` and positive ``r`` reduces the X variance.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammaln

DEFAULT_DIM = 40
TAIL_TOLERANCE = 1e-8

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
NEGATIVITY_TOL = 1e-8


class TruncationError(ValueError):
    """Raised when a state has too much weight near the Fock cutoff."""


class DegenerateStateError(ValueError):
    """Raised when a construction produces the zero vector."""


class CatParity(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @property
    def sign(self) -> int:
        return 1 if self is CatParity.POSITIVE else -1

    @classmethod
    def parse(cls, value) -> "CatParity":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        if text in ("+", "positive", "even", "plus"):
            return cls.POSITIVE
        if text in ("-", "negative", "odd", "minus"):
            return cls.NEGATIVE
        raise ValueError(f"unknown cat parity {value!r}")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


def _tail_size(dim: int) -> int:
    return max(1, math.ceil(0.1 * dim))


@dataclass(frozen=True, eq=False)
class FockState:
    """Pure single-mode state; ``amplitudes[n]`` multiplies ``|n>``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 1 or amps.size < 1:
            raise ValueError("FockState amplitudes must be a non-empty vector")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"FockState is not normalized (norm={norm:.12g})")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def from_vector(cls, vec, check_tail: bool = False, tail_tol: float = TAIL_TOLERANCE) -> "FockState":
        """Normalize an arbitrary nonzero vector into a state."""
        vec = np.asarray(vec, dtype=complex)
        norm = np.linalg.norm(vec)
        if norm < 1e-300:
            raise DegenerateStateError("cannot normalize the zero vector")
        state = cls(vec / norm)
        if check_tail:
            _check_tail(state, tail_tol)
        return state

    @classmethod
    def basis(cls, n: int, dim: int) -> "FockState":
        if not 0 <= n < dim:
            raise ValueError(f"photon number {n} outside truncation {dim}")
        vec = np.zeros(dim, dtype=complex)
        vec[n] = 1.0
        return cls(vec)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "FockState") -> complex:
        _check_dims(self.dim, other.dim)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.amplitudes.real.tolist(),
            "im": self.amplitudes.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Mixed single-mode state, Hermitian with unit trace."""

    elements: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > NORM_TOL:
            raise ValueError(f"density matrix trace is {tr:.12g}, not 1")
        lam_min = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
        if lam_min < -NEGATIVITY_TOL:
            raise ValueError(f"density matrix has eigenvalue {lam_min:.3g} < 0")
        object.__setattr__(self, "elements", _readonly(rho))

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @classmethod
    def from_array(cls, arr, clip: bool = True) -> "DensityMatrix":
        """Build a density matrix from a numerically noisy PSD array.

        The array is Hermitized and rescaled to unit trace. With ``clip``,
        eigenvalues in ``[-1e-8, 0)`` are set to zero before rescaling; any
        more negative eigenvalue is an error.
        """
        rho = np.asarray(arr, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
        tr = np.trace(rho).real
        if tr <= 0:
            raise DegenerateStateError("density matrix has non-positive trace")
        rho = rho / tr
        if clip:
            lam, vecs = np.linalg.eigh(rho)
            if lam[0] < -NEGATIVITY_TOL:
                raise ValueError(f"density matrix has eigenvalue {lam[0]:.3g} < 0")
            if lam[0] < 0:
                lam = np.clip(lam, 0.0, None)
                rho = (vecs * lam) @ vecs.conj().T
                rho = 0.5 * (rho + rho.conj().T)
                rho /= np.trace(rho).real
        return cls(rho)

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def photon_distribution(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.elements)), 0.0, None)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.elements.real.tolist(),
            "im": self.elements.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class TwoModeState:
    """Pure two-mode state; ``amplitudes[n1, n2]`` multiplies ``|n1>|n2>``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1]:
            raise ValueError("TwoModeState amplitudes must be a square matrix")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"TwoModeState is not normalized (norm={norm:.12g})")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def from_matrix(cls, mat) -> "TwoModeState":
        mat = np.asarray(mat, dtype=complex)
        norm = np.linalg.norm(mat)
        if norm < 1e-300:
            raise DegenerateStateError("cannot normalize the zero two-mode vector")
        return cls(mat / norm)


State = Union[FockState, DensityMatrix]


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise ValueError(f"dimension mismatch: {a} != {b}")


def _check_tail(state: FockState, tol: float) -> None:
    err = truncation_error(state)
    if err > tol:
        raise TruncationError(
            f"tail weight {err:.3g} in the top Fock levels of dim={state.dim} exceeds {tol:.1e}; "
            "increase dim"
        )


def as_density(state: State) -> DensityMatrix:
    if isinstance(state, DensityMatrix):
        return state
    if isinstance(state, FockState):
        return state.to_density()
    raise TypeError(f"expected FockState or DensityMatrix, got {type(state).__name__}")


def truncation_error(state: State) -> float:
    """Population in the top 10% of Fock levels (at least one level)."""
    if isinstance(state, FockState):
        pops = np.abs(state.amplitudes) ** 2
    else:
        pops = as_density(state).photon_distribution()
    return float(np.sum(pops[-_tail_size(pops.size):]))


# -- constructors -----------------------------------------------------------

def vacuum(dim: int = DEFAULT_DIM) -> FockState:
    return FockState.basis(0, dim)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """Untruncated-normalization coherent-state coefficients for ``n < dim``."""
    n = np.arange(dim)
    if alpha == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        return vec
    mag = abs(alpha)
    log_mag = -0.5 * mag**2 + n * math.log(mag) - 0.5 * gammaln(n + 1)
    phase = np.exp(1j * n * np.angle(alpha))
    return np.exp(log_mag) * phase


def coherent_state(alpha: complex, dim: int = DEFAULT_DIM, tail_tol: float = TAIL_TOLERANCE) -> FockState:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return FockState.from_vector(coherent_amplitudes(alpha, dim), check_tail=True, tail_tol=tail_tol)


def squeeze_db_to_r(squeeze_db: float) -> float:
    return squeeze_db * math.log(10.0) / 20.0


def r_to_squeeze_db(r: float) -> float:
    return 20.0 * r / math.log(10.0)


def squeezed_vacuum_amplitudes(r: float, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=complex)
    k = np.arange((dim + 1) // 2)
    t = math.tanh(r)
    # |(-tanh r)^k| * sqrt((2k)!) / (2^k k!) computed in logs
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mag = k * np.log(abs(t)) + 0.5 * gammaln(2 * k + 1) - k * math.log(2.0) - gammaln(k + 1)
    mag = np.exp(log_mag) if t != 0 else (k == 0).astype(float)
    sign = np.where(k % 2 == 1, -np.sign(t), 1.0) if t != 0 else 1.0
    vec[0::2] = sign * mag / math.sqrt(math.cosh(r))
    return vec


def squeezed_vacuum(r: float, dim: int = DEFAULT_DIM, tail_tol: float = TAIL_TOLERANCE) -> FockState:
    """``S(r)|0>``; ``r > 0`` squeezes X, ``r < 0`` squeezes P."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    return FockState.from_vector(squeezed_vacuum_amplitudes(r, dim), check_tail=True, tail_tol=tail_tol)


def cat_normalization(alpha: float, parity: CatParity) -> float:
    """Closed-form ``N`` with ``N**2 = 1/(2(1 +- exp(-2 alpha^2)))``."""
    parity = CatParity.parse(parity)
    return 1.0 / math.sqrt(2.0 * (1.0 + parity.sign * math.exp(-2.0 * alpha**2)))


def cat_amplitudes(alpha: float, parity: CatParity, dim: int) -> np.ndarray:
    parity = CatParity.parse(parity)
    vec = coherent_amplitudes(alpha, dim) + parity.sign * coherent_amplitudes(-alpha, dim)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise DegenerateStateError(f"cat state with alpha={alpha} and {parity.value} parity vanishes")
    return vec / norm


def cat_state(alpha: float, parity: CatParity = CatParity.POSITIVE, dim: int = DEFAULT_DIM,
              tail_tol: float = TAIL_TOLERANCE) -> FockState:
    """``N(|alpha> + sign|-alpha>)`` truncated at ``dim``."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    parity = CatParity.parse(parity)
    if parity is CatParity.NEGATIVE and alpha == 0:
        raise DegenerateStateError("negative cat with alpha=0 is the zero vector")
    return FockState.from_vector(cat_amplitudes(alpha, parity, dim), check_tail=True, tail_tol=tail_tol)


def padded_dim(dim: int) -> int:
    return dim + max(2, math.ceil(0.25 * dim))


def squeezed_cat_amplitudes(alpha: float, parity: CatParity, squeeze_db: float, dim: int) -> np.ndarray:
    """Cropped, normalized ``S(r) |SC(alpha)>`` without the tail check."""
    from .operators import squeeze_matrix

    big = padded_dim(dim)
    vec = cat_amplitudes(alpha, parity, big)
    if squeeze_db != 0:
        vec = squeeze_matrix(squeeze_db_to_r(squeeze_db), big) @ vec
    vec = vec[:dim]
    return vec / np.linalg.norm(vec)


def squeezed_cat(alpha: float, parity: CatParity = CatParity.POSITIVE, squeeze_db: float = 0.0,
                 dim: int = DEFAULT_DIM, tail_tol: float = TAIL_TOLERANCE) -> FockState:
    parity = CatParity.parse(parity)
    if parity is CatParity.NEGATIVE and alpha == 0:
        raise DegenerateStateError("negative cat with alpha=0 is the zero vector")
    if squeeze_db == 0:
        return cat_state(alpha, parity, dim, tail_tol)
    return FockState.from_vector(squeezed_cat_amplitudes(alpha, parity, squeeze_db, dim),
                                 check_tail=True, tail_tol=tail_tol)


# -- functionals -------------------------------------------------------------

def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.conj().T


def _pure_vector(rho: np.ndarray):
    """Dominant eigenvector if ``rho`` is pure to working precision."""
    lam, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if lam[-1] > 1.0 - 1e-12:
        return vecs[:, -1]
    return None


def fidelity(a: State, b: State) -> float:
    """Root fidelity ``Tr sqrt(sqrt(a) b sqrt(a))``; equals ``|<psi|phi>|`` for pure states."""
    if isinstance(a, FockState) and isinstance(b, FockState):
        return float(min(1.0, abs(a.overlap(b))))
    ra, rb = as_density(a), as_density(b)
    _check_dims(ra.dim, rb.dim)
    for pure, other in ((a, rb), (b, ra)):
        vec = pure.amplitudes if isinstance(pure, FockState) else _pure_vector(as_density(pure).elements)
        if vec is not None:
            val = np.real(np.vdot(vec, other.elements @ vec))
            return float(min(1.0, math.sqrt(max(val, 0.0))))
    sa = _psd_sqrt(ra.elements)
    lam = np.linalg.eigvalsh(sa @ rb.elements @ sa)
    lam = lam[lam > 1e-14 * max(lam[-1], 1e-300)]
    return float(min(1.0, np.sum(np.sqrt(lam))))


def tensor(a: FockState, b: FockState) -> TwoModeState:
    _check_dims(a.dim, b.dim)
    return TwoModeState.from_matrix(np.outer(a.amplitudes, b.amplitudes))


def partial_trace(psi: TwoModeState, keep: int) -> DensityMatrix:
    """Reduced state of mode ``keep`` (1 or 2)."""
    c = psi.amplitudes
    if keep == 1:
        rho = c @ c.conj().T
    elif keep == 2:
        rho = c.T @ c.conj()
    else:
        raise ValueError(f"mode index must be 1 or 2, got {keep}")
    return DensityMatrix.from_array(rho)


def mean_photon_number(state: State) -> float:
    if isinstance(state, FockState):
        pops = np.abs(state.amplitudes) ** 2
    else:
        pops = np.real(np.diag(as_density(state).elements))
    return float(np.dot(np.arange(pops.size), pops))


def parity_expectation(state: State) -> float:
    pops = np.real(np.diag(as_density(state).elements))
    return float(np.dot((-1.0) ** np.arange(pops.size), pops))


# -- serialization -----------------------------------------------------------

def state_to_json(state: State) -> str:
    return json.dumps(state.to_dict())


def state_from_dict(doc: dict) -> State:
    dim = int(doc["dim"])
    re = np.asarray(doc["re"], dtype=float)
    im = np.asarray(doc["im"], dtype=float)
    arr = re + 1j * im
    if arr.ndim == 1:
        if arr.size != dim:
            raise ValueError("pure-state vector length does not match dim")
        return FockState(arr)
    if arr.shape != (dim, dim):
        raise ValueError("density matrix shape does not match dim")
    return DensityMatrix(arr)


def state_from_json(text: str) -> State:
    return state_from_dict(json.loads(text))
