"""Quadrature wavefunctions, homodyne statistics, sampling and conditioning."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .fock_core import (
    DegenerateStateError,
    DensityMatrix,
    FockState,
    TwoModeState,
    as_density,
)
from .operators import _loss_array, loss_adjoint

GRID_POINTS = 2048
WINDOW_NODES = 64


@dataclass(frozen=True)
class QuadratureSample:
    theta: float
    x: float

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi:
            raise ValueError(f"phase {self.theta} outside [0, pi)")


@dataclass(frozen=True)
class ConditioningWindow:
    """Accept ``|x - center| <= delta``; ``delta = inf`` accepts everything."""

    delta: float
    center: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("window half-width must be positive")


def position_wavefunctions(x, dim: int) -> np.ndarray:
    """Array of shape ``x.shape + (dim,)`` with ``psi_n(x)`` for ``n < dim``.

    Uses the normalized Hermite-function recursion, which stays finite for
    large ``n`` where the explicit ``H_n / sqrt(2^n n!)`` form overflows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (dim,))
    out[..., 0] = math.pi ** -0.25 * np.exp(-0.5 * x**2)
    if dim > 1:
        out[..., 1] = math.sqrt(2.0) * x * out[..., 0]
    for n in range(1, dim - 1):
        out[..., n + 1] = (math.sqrt(2.0 / (n + 1)) * x * out[..., n]
                           - math.sqrt(n / (n + 1)) * out[..., n - 1])
    return out


def fock_position_wavefunction(n: int, x: float) -> float:
    return float(position_wavefunctions(x, n + 1)[..., n])


def quadrature_vectors(x, theta, dim: int) -> np.ndarray:
    """``<n|x, theta>`` for the rotated quadrature ``X cos(theta) + P sin(theta)``."""
    psi = position_wavefunctions(x, dim)
    return psi * np.exp(1j * np.multiply.outer(np.asarray(theta, dtype=float), np.arange(dim)))


def quadrature_density(rho, theta: float, x, eta: float = 1.0):
    """Homodyne probability density at ``x`` for detection efficiency ``eta``.

    ``Tr[L_eta^dag(|x><x|) rho] = <x|L_eta(rho)|x>``, so the lossy density is
    evaluated on the loss-transformed state.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside (0, 1]")
    mat = _loss_array(as_density(rho).elements, eta)
    scalar = np.ndim(x) == 0
    vecs = quadrature_vectors(np.atleast_1d(x), theta, mat.shape[0])
    dens = np.real(np.einsum("jm,mn,jn->j", vecs.conj(), mat, vecs))
    dens = np.clip(dens, 0.0, None)
    return float(dens[0]) if scalar else dens


def grid_half_width(rho) -> float:
    """Half-width covering both cat lobes plus three sigma: ``sqrt(2)(alpha_max + 3)``."""
    pops = as_density(rho).photon_distribution()
    cum = np.cumsum(pops[::-1])[::-1]
    populated = np.flatnonzero(cum > 1e-12)
    n_hi = int(populated[-1]) if populated.size else 0
    return math.sqrt(2.0) * (math.sqrt(n_hi) + 3.0)


def density_grid(rho, theta: float, eta: float = 1.0, points: int = GRID_POINTS):
    half = grid_half_width(rho)
    xs = np.linspace(-half, half, points)
    return xs, quadrature_density(rho, theta, xs, eta)


def sample_quadrature_values(rho, theta: float, count: int, eta: float = 1.0, seed=None) -> np.ndarray:
    """Draw ``count`` i.i.d. homodyne outcomes by inverse-CDF sampling."""
    if count <= 0:
        raise ValueError("sample count must be positive")
    xs, pdf = density_grid(rho, theta, eta)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 1e-15])
    inverse = PchipInterpolator(cdf[keep], xs[keep])
    rng = np.random.default_rng(seed)
    return inverse(rng.random(count))


def sample_quadratures(rho, theta: float, count: int, eta: float = 1.0, seed=None) -> list:
    theta = float(np.mod(theta, math.pi))
    values = sample_quadrature_values(rho, theta, count, eta, seed)
    return [QuadratureSample(theta, float(v)) for v in values]


def _measured_last(psi: TwoModeState, mode: int) -> np.ndarray:
    if mode == 2:
        return psi.amplitudes
    if mode == 1:
        return psi.amplitudes.T
    raise ValueError(f"mode index must be 1 or 2, got {mode}")


def project_on_x(psi: TwoModeState, mode: int, x: float):
    """Contract ``mode`` with ``<X = x|``.

    Returns the normalized state of the other mode and the joint density at ``x``.
    """
    c = _measured_last(psi, mode)
    vec = c @ position_wavefunctions(x, c.shape[1])
    density = float(np.linalg.norm(vec) ** 2)
    if density < 1e-14:
        raise DegenerateStateError(f"projection on X={x} has vanishing density {density:.2e}")
    return FockState.from_vector(vec), density


def window_povm(window: ConditioningWindow, dim: int, eta: float = 1.0) -> np.ndarray:
    """POVM element for ``|x - center| <= delta`` at homodyne efficiency ``eta``.

    Gauss-Legendre quadrature with 64 nodes per panel of width <= 1, clipped
    to where the truncated wavefunctions have support.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside (0, 1]")
    reach = math.sqrt(2.0 * dim + 1.0) + 8.0
    lo = max(window.center - window.delta, -reach)
    hi = min(window.center + window.delta, reach)
    if hi <= lo:
        return np.zeros((dim, dim))
    if lo == -reach and hi == reach:
        return np.eye(dim)
    nodes, weights = np.polynomial.legendre.leggauss(WINDOW_NODES)
    panels = max(1, math.ceil(hi - lo))
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    xs = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    ws = (half[:, None] * weights[None, :]).ravel()
    psi = position_wavefunctions(xs, dim)
    ideal = (psi * ws[:, None]).T @ psi
    return np.real(loss_adjoint(ideal, eta)) if eta < 1.0 else ideal


def condition_amplitudes(c: np.ndarray, povm: np.ndarray) -> np.ndarray:
    """Unnormalized kept-mode operator ``Tr_2[(1 x Pi) |c><c|]`` for amplitudes ``c[kept, measured]``."""
    return c @ povm.T @ c.conj().T


def project_on_window(psi: TwoModeState, mode: int, window: ConditioningWindow, eta: float = 1.0):
    """Condition ``mode`` on the homodyne outcome falling inside ``window``.

    Returns the normalized state of the other mode and the acceptance probability.
    """
    c = _measured_last(psi, mode)
    rho = condition_amplitudes(c, window_povm(window, c.shape[1], eta))
    prob = float(np.real(np.trace(rho)))
    if prob < 1e-14:
        raise DegenerateStateError(f"window acceptance probability {prob:.2e} vanishes")
    return DensityMatrix.from_array(rho), prob


# -- dataset persistence -----------------------------------------------------

def write_samples_csv(path, thetas, xs, metadata: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "x"])
        for th, x in zip(thetas, xs):
            writer.writerow([repr(float(th)), repr(float(x))])
    if metadata is not None:
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps(metadata, indent=2, sort_keys=True))


def read_samples_csv(path):
    """Read a ``theta,x`` CSV; malformed rows raise ``ValueError`` naming the line."""
    path = Path(path)
    thetas, xs = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["theta", "x"]:
            raise ValueError(f"{path}:1: expected header 'theta,x'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 2:
                    raise ValueError("expected 2 fields")
                th, x = float(row[0]), float(row[1])
                if not (math.isfinite(th) and math.isfinite(x)):
                    raise ValueError("non-finite value")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed sample row {row!r} ({exc})") from None
            thetas.append(th)
            xs.append(x)
    if not xs:
        raise ValueError(f"{path}: no samples")
    return np.asarray(thetas), np.asarray(xs)
