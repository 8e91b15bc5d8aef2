"""Homodyne state reconstruction by iterative maximum likelihood, and squeezed-cat fitting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fock_core import (
    CatParity,
    DensityMatrix,
    as_density,
    cat_amplitudes,
    padded_dim,
    squeeze_db_to_r,
)
from .homodyne import (
    position_wavefunctions,
    quadrature_vectors,
    read_samples_csv,
    sample_quadrature_values,
    write_samples_csv,
    QuadratureSample,
)
from .operators import _loss_array, loss_adjoint, squeeze_matrix

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
DEFAULT_PHASES = tuple(np.arange(12) * math.pi / 12)


@dataclass(frozen=True, eq=False)
class TomographyDataset:
    """Phase-tagged homodyne outcomes, stored column-wise."""

    thetas: np.ndarray
    xs: np.ndarray
    eta_assumed: float = 1.0
    dim: int = 20

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float).ravel()
        xs = np.asarray(self.xs, dtype=float).ravel()
        if xs.size == 0 or thetas.size != xs.size:
            raise ValueError("dataset needs equally many (nonzero) phases and values")
        if not 0.0 < self.eta_assumed <= 1.0:
            raise ValueError("eta_assumed must lie in (0, 1]")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "xs", xs)

    def __len__(self):
        return self.xs.size

    @property
    def samples(self) -> list:
        return [QuadratureSample(float(t) % math.pi, float(x)) for t, x in zip(self.thetas, self.xs)]

    def to_csv(self, path, metadata: dict | None = None) -> None:
        meta = {"eta": self.eta_assumed, "dim": self.dim, "count": len(self)}
        meta.update(metadata or {})
        write_samples_csv(path, self.thetas, self.xs, meta)

    @classmethod
    def from_csv(cls, path, eta_assumed: float = 1.0, dim: int = 20) -> "TomographyDataset":
        thetas, xs = read_samples_csv(path)
        return cls(thetas, xs, eta_assumed, dim)


@dataclass(frozen=True)
class FitResult:
    alpha: float
    squeeze_db: float
    parity: CatParity
    fidelity: float
    grid_certified: bool = True

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "squeeze_db": self.squeeze_db,
            "parity": self.parity.value,
            "fidelity": self.fidelity,
            "grid_certified": self.grid_certified,
        }


@dataclass
class MaxLikResult:
    state: DensityMatrix
    converged: bool
    iterations: int
    log_likelihoods: list = field(default_factory=list)


def simulate_dataset(rho, phases=DEFAULT_PHASES, per_phase: int = 5000, eta: float = 1.0,
                     seed: int = 0, dim: int | None = None) -> TomographyDataset:
    rho = as_density(rho)
    seeds = np.random.SeedSequence(seed).spawn(len(phases))
    thetas, xs = [], []
    for theta, child in zip(phases, seeds):
        xs.append(sample_quadrature_values(rho, theta, per_phase, eta, np.random.default_rng(child)))
        thetas.append(np.full(per_phase, float(theta)))
    return TomographyDataset(np.concatenate(thetas), np.concatenate(xs), eta, dim or rho.dim)


class _Projectors:
    """Rank-one quadrature projectors ``|x_j, theta_j><x_j, theta_j|`` grouped by phase.

    Within a phase group ``<n|x, theta> = exp(i n theta) psi_n(x)`` with real
    ``psi_n``, so probabilities and the R-operator reduce to real products.
    With ``bin_width`` the outcomes of each phase are merged into bins of that
    width, each represented by its center and weighted by its count.
    """

    def __init__(self, data: TomographyDataset, bin_width: float | None = None):
        self.dim = data.dim
        order = np.argsort(data.thetas, kind="stable")
        thetas, xs = data.thetas[order], data.xs[order]
        uniq, starts = np.unique(thetas, return_index=True)
        self.grouped = uniq.size <= 256 or bin_width is not None
        if bin_width is not None and not bin_width > 0:
            raise ValueError("bin_width must be positive")
        if not self.grouped:
            self.counts = np.ones(xs.size)
            self.vecs = quadrature_vectors(data.xs, data.thetas, self.dim)
            return
        bounds = np.append(starts, thetas.size)
        self.groups = []
        points, counts = [], []
        offset = 0
        for g, theta in enumerate(uniq):
            x = xs[bounds[g]:bounds[g + 1]]
            if bin_width is not None:
                idx, cnt = np.unique(np.floor(x / bin_width).astype(np.int64), return_counts=True)
                x = (idx + 0.5) * bin_width
            else:
                cnt = np.ones(x.size)
            sl = slice(offset, offset + x.size)
            offset += x.size
            phase = np.exp(1j * theta * np.arange(self.dim))
            self.groups.append((sl, position_wavefunctions(x, self.dim), phase))
            counts.append(cnt)
        self.counts = np.concatenate(counts).astype(float)

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def probabilities(self, mat: np.ndarray) -> np.ndarray:
        """Probability density at each (possibly binned) projector, in internal order."""
        if not self.grouped:
            return np.real(np.einsum("jm,mn,jn->j", self.vecs.conj(), mat, self.vecs))
        out = np.empty(self.counts.size)
        for sl, psi, phase in self.groups:
            rotated = np.ascontiguousarray((phase.conj()[:, None] * mat * phase[None, :]).real)
            out[sl] = np.einsum("jm,jm->j", psi @ rotated, psi)
        return out

    def weighted_sum(self, weights: np.ndarray) -> np.ndarray:
        """``sum_j weights_j |x_j, theta_j><x_j, theta_j|`` with weights in internal order."""
        if not self.grouped:
            return self.vecs.T @ (weights[:, None] * self.vecs.conj())
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for sl, psi, phase in self.groups:
            real = psi.T @ (weights[sl, None] * psi)
            out += phase[:, None] * real * phase.conj()[None, :]
        return out


def _model(mat: np.ndarray, correct_eta) -> np.ndarray:
    return mat if correct_eta is None else _loss_array(mat, correct_eta)


def log_likelihood(data: TomographyDataset, rho, correct_eta: float | None = None,
                   bin_width: float | None = None) -> float:
    mat = as_density(rho).elements
    if mat.shape[0] != data.dim:
        raise ValueError(f"state dim {mat.shape[0]} does not match dataset dim {data.dim}")
    proj = _Projectors(data, bin_width)
    probs = proj.probabilities(_model(mat, correct_eta))
    return float(np.dot(proj.counts, np.log(np.maximum(probs, PROB_FLOOR))))


def _normalize(mat: np.ndarray) -> np.ndarray:
    mat = 0.5 * (mat + mat.conj().T)
    return mat / np.real(np.trace(mat))


def maxlik_reconstruct(data: TomographyDataset, correct_eta: float | None = None,
                       max_iter: int = 2000, tol: float = 1e-10, full_output: bool = False,
                       bin_width: float | None = None):
    """Iterative maximum-likelihood (R rho R) reconstruction.

    With ``correct_eta`` the projectors are replaced by their loss-smeared
    versions, so the returned state is the one before detection loss. If a
    full R rho R step would lower the likelihood, the step is diluted to
    ``(1 + eps R) rho (1 + eps R)`` with halving ``eps`` until it does not;
    accepted iterates therefore have nondecreasing likelihood. ``bin_width``
    trades a small discretization error for speed on large datasets.
    """
    if correct_eta is not None and not 0.0 < correct_eta <= 1.0:
        raise ValueError("correct_eta must lie in (0, 1]")
    dim = data.dim
    proj = _Projectors(data, bin_width)
    ident = np.eye(dim)

    def evaluate(mat):
        probs = np.maximum(proj.probabilities(_model(mat, correct_eta)), PROB_FLOOR)
        return probs, float(np.dot(proj.counts, np.log(probs)))

    rho = ident / dim
    probs, ll = evaluate(rho)
    history = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        r_op = proj.weighted_sum(proj.counts / probs) / proj.total
        if correct_eta is not None:
            r_op = loss_adjoint(r_op, correct_eta)
        eps = math.inf
        while True:
            step = r_op if math.isinf(eps) else ident + eps * r_op
            trial = _normalize(step @ rho @ step.conj().T)
            trial_probs, trial_ll = evaluate(trial)
            if trial_ll >= ll:
                break
            eps = 1.0 if math.isinf(eps) else 0.5 * eps
            if eps < 1e-8:
                trial = None
                break
        if trial is None:
            converged = True
            break
        gain = (trial_ll - ll) / abs(ll) if ll != 0 else trial_ll - ll
        rho, probs, ll = trial, trial_probs, trial_ll
        history.append(ll)
        if gain < tol:
            converged = True
            break
    if not converged:
        log.warning("MaxLik did not converge in %d iterations", max_iter)
    state = DensityMatrix.from_array(rho)
    if full_output:
        return MaxLikResult(state, converged, iterations, history)
    return state


# -- squeezed-cat fitting ----------------------------------------------------

def _axis(lo: float, hi: float, step: float) -> np.ndarray:
    if hi < lo:
        raise ValueError(f"empty range ({lo}, {hi})")
    if hi == lo:
        return np.array([lo])
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    pts = lo + step * np.arange(count)
    if hi - pts[-1] > 1e-9:
        pts = np.append(pts, hi)
    return pts


class _CatFidelity:
    def __init__(self, rho: np.ndarray):
        self.rho = rho
        self.dim = rho.shape[0]
        self.big = padded_dim(self.dim)

    def vectors(self, alphas, squeeze_db: float, parity: CatParity) -> np.ndarray:
        cats = np.stack([cat_amplitudes(a, parity, self.big) for a in alphas], axis=1)
        if squeeze_db != 0:
            cats = squeeze_matrix(squeeze_db_to_r(squeeze_db), self.big) @ cats
        cats = cats[: self.dim]
        return cats / np.linalg.norm(cats, axis=0)

    def __call__(self, alphas, squeeze_db: float, parity: CatParity) -> np.ndarray:
        vecs = self.vectors(np.atleast_1d(alphas), squeeze_db, parity)
        vals = np.real(np.einsum("mk,mn,nk->k", vecs.conj(), self.rho, vecs))
        return np.sqrt(np.clip(vals, 0.0, 1.0))


def _refine(fid: _CatFidelity, parity, a0, d0, ha, hd, a_lim, d_lim, best):
    """Shrinking 3x3 quadratic-model refinement around the grid maximum."""
    fixed_db = d_lim[0] == d_lim[1]
    while ha > 1e-5:
        da = np.array([-ha, 0.0, ha])
        dd = np.array([0.0]) if fixed_db else np.array([-hd, 0.0, hd])
        pts, vals = [], []
        for ddb in dd:
            d = float(np.clip(d0 + ddb, *d_lim))
            alphas = np.clip(a0 + da, *a_lim)
            vals.extend(fid(alphas, d, parity))
            pts.extend((a - a0, d - d0) for a in alphas)
        pts, vals = np.array(pts), np.array(vals)
        if fixed_db:
            lo, mid, hi = vals
            curv = lo - 2.0 * mid + hi
            cand = [(a0 + 0.5 * ha * (lo - hi) / curv, d0)] if curv < 0 else []
        else:
            u, v = pts[:, 0], pts[:, 1]
            design = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v], axis=1)
            c = np.linalg.lstsq(design, vals, rcond=None)[0]
            hess = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
            cand = []
            if np.all(np.linalg.eigvalsh(hess) < 0):
                step = -np.linalg.solve(hess, c[1:3])
                step = np.clip(step, [-ha, -hd], [ha, hd])
                cand = [(a0 + step[0], d0 + step[1])]
        idx = int(np.argmax(vals))
        cand.append((a0 + pts[idx, 0], d0 + pts[idx, 1]))
        for a, d in cand:
            a = float(np.clip(a, *a_lim))
            d = float(np.clip(d, *d_lim))
            f = float(fid([a], d, parity)[0])
            if f > best[0]:
                best = (f, a, d)
        _, a0, d0 = best
        ha *= 0.5
        hd *= 0.5
    return best


def best_fit_squeezed_cat(rho, alpha_range=(0.1, 3.0), db_range=(-6.0, 6.0),
                          parities=(CatParity.POSITIVE, CatParity.NEGATIVE),
                          alpha_step: float = 0.05, db_step: float = 0.1) -> FitResult:
    """Squeezed cat ``S(r)|SC(alpha)>`` of maximal fidelity with ``rho``.

    Coarse grid over amplitude, squeezing and parity, then local quadratic
    refinement. ``db_range=(0, 0)`` fits unsqueezed cats only.
    """
    alphas = _axis(max(alpha_range[0], 1e-3), alpha_range[1], alpha_step)
    dbs = _axis(db_range[0], db_range[1], db_step)
    if not parities:
        raise ValueError("no parities to search")
    fid = _CatFidelity(as_density(rho).elements)
    overall = None
    for parity in parities:
        parity = CatParity.parse(parity)
        table = np.stack([fid(alphas, d, parity) for d in dbs], axis=1)
        i, j = np.unravel_index(int(np.argmax(table)), table.shape)
        neigh = table[max(i - 1, 0): i + 2, max(j - 1, 0): j + 2]
        # a maximum on the edge of the searched range is not a local optimum
        interior = 0 < i < alphas.size - 1 and (dbs.size == 1 or 0 < j < dbs.size - 1)
        certified = bool(interior and np.sum(neigh >= table[i, j]) == 1)
        best = (float(table[i, j]), float(alphas[i]), float(dbs[j]))
        best = _refine(fid, parity, best[1], best[2], alpha_step, db_step,
                       (alphas[0], alphas[-1]), (dbs[0], dbs[-1]), best)
        cand = FitResult(best[1], best[2], parity, best[0], certified)
        if overall is None or cand.fidelity > overall.fidelity:
            overall = cand
    return overall
