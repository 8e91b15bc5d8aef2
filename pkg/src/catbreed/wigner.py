"""Wigner functions in the ``X = (a + a^dag)/sqrt(2)`` phase-space convention.

``W(x, p)`` integrates to one over ``dx dp``; the vacuum is ``exp(-x^2 - p^2)/pi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gammaln

from .fock_core import as_density
from .operators import displacement_matrix

DEFAULT_EXTENT = 6.0
DEFAULT_POINTS = 201


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    x_min: float
    x_max: float
    p_min: float
    p_max: float
    values: np.ndarray  # values[i, j] = W(x_i, p_j)

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.p_max > self.p_min):
            raise ValueError("phase-space ranges must be nonempty")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or min(vals.shape) < 2:
            raise ValueError("grid needs at least 2 points along each axis")
        object.__setattr__(self, "values", vals)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def np(self) -> int:
        return self.values.shape[1]

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ps(self) -> np.ndarray:
        return np.linspace(self.p_min, self.p_max, self.np)

    def integral(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.ps, axis=1), self.xs))

    def minimum(self) -> float:
        return float(self.values.min())


def wigner_values(rho, x, p) -> np.ndarray:
    """Wigner function at points ``(x, p)`` (broadcast together).

    Sums the Fock-basis kernel diagonal by diagonal: for ``|n+k><n|`` the kernel
    is ``(-1)^n sqrt(n!/(n+k)!) (2 alpha^*)^k exp(-2|alpha|^2) L_n^(k)(4|alpha|^2) / pi``
    with ``alpha = (x + i p)/sqrt(2)``. The prefactors are combined in log
    space, so no factorial overflows at large photon numbers.
    """
    mat = as_density(rho).elements
    dim = mat.shape[0]
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    r2 = x**2 + p**2
    y = 2.0 * r2
    angle = np.arctan2(p, x)
    with np.errstate(divide="ignore"):
        log_rad = 0.5 * np.log(y)  # log |2 alpha|
    total = np.zeros(x.shape)
    for k in range(dim):
        diag = np.diagonal(mat, -k)  # rho[n + k, n]
        acc = np.zeros(x.shape, dtype=complex)
        lag_prev = np.zeros(x.shape)
        lag = np.ones(x.shape)
        for n in range(dim - k):
            if n == 1:
                lag_prev, lag = lag, 1.0 + k - y
            elif n > 1:
                lag_prev, lag = lag, ((2 * n - 1 + k - y) * lag - (n - 1 + k) * lag_prev) / n
            coef = diag[n] * (-1) ** n * math.exp(0.5 * (gammaln(n + 1) - gammaln(n + k + 1)))
            acc += coef * lag
        if k == 0:
            total += np.real(acc) * np.exp(-r2)
        else:
            scale = np.exp(k * log_rad - r2)
            total += 2.0 * np.real(acc * np.exp(-1j * k * angle)) * scale
    return total / math.pi


def wigner_point(rho, x: float, p: float) -> float:
    return float(wigner_values(rho, x, p))


def displaced_parity_wigner(rho, x: float, p: float, pad: int = 40) -> float:
    """``Tr[rho D(alpha) Pi D(alpha)^dag] / pi``, evaluated in an enlarged Fock space."""
    mat = as_density(rho).elements
    dim = mat.shape[0]
    big = 2 * dim + pad
    emb = np.zeros((big, big), dtype=complex)
    emb[:dim, :dim] = mat
    disp = displacement_matrix((x + 1j * p) / math.sqrt(2.0), big)
    parity = (-1.0) ** np.arange(big)
    shifted = disp.conj().T @ emb @ disp
    return float(np.real(np.sum(parity * np.diag(shifted))) / math.pi)


def wigner_grid(rho, x_range=(-DEFAULT_EXTENT, DEFAULT_EXTENT), p_range=(-DEFAULT_EXTENT, DEFAULT_EXTENT),
                nx: int = DEFAULT_POINTS, np_: int = DEFAULT_POINTS) -> PhaseSpaceGrid:
    if nx < 2 or np_ < 2:
        raise ValueError("grid needs at least 2 points along each axis")
    xs = np.linspace(*x_range, nx)
    ps = np.linspace(*p_range, np_)
    xx, pp = np.meshgrid(xs, ps, indexing="ij")
    return PhaseSpaceGrid(x_range[0], x_range[1], p_range[0], p_range[1], wigner_values(rho, xx, pp))


def negativity_volume(grid: PhaseSpaceGrid) -> float:
    """``integral |W| - 1`` by the trapezoidal rule; zero for positive Wigner functions."""
    absint = trapezoid(trapezoid(np.abs(grid.values), grid.ps, axis=1), grid.xs)
    return float(max(absint - 1.0, 0.0))


def write_grid(grid: PhaseSpaceGrid, path, gnuplot: bool = False, metadata: dict | None = None) -> None:
    """CSV matrix (rows = x) with a JSON axes sidecar, or three-column ``x p W`` for gnuplot."""
    path = Path(path)
    if gnuplot:
        with path.open("w") as fh:
            for i, x in enumerate(grid.xs):
                for j, p in enumerate(grid.ps):
                    fh.write(f"{x:.10g} {p:.10g} {grid.values[i, j]:.10g}\n")
                fh.write("\n")
    else:
        np.savetxt(path, grid.values, delimiter=",", fmt="%.12g")
    axes = {
        "x_min": grid.x_min, "x_max": grid.x_max, "nx": grid.nx,
        "p_min": grid.p_min, "p_max": grid.p_max, "np": grid.np,
        "layout": "x p W" if gnuplot else "values[i, j] = W(x_i, p_j)",
    }
    axes.update(metadata or {})
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(axes, indent=2, sort_keys=True))
