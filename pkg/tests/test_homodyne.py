import math

import numpy as np
import pytest
from scipy import integrate, stats

from catbreed.fock_core import (
    DegenerateStateError,
    FockState,
    cat_state,
    fidelity,
    partial_trace,
    tensor,
    vacuum,
)
from catbreed.homodyne import (
    ConditioningWindow,
    QuadratureSample,
    density_grid,
    fock_position_wavefunction,
    position_wavefunctions,
    project_on_window,
    project_on_x,
    quadrature_density,
    read_samples_csv,
    sample_quadrature_values,
    sample_quadratures,
    write_samples_csv,
)
from catbreed.operators import BeamsplitterSpec, beamsplitter_apply

from conftest import random_density, random_vector


def test_wavefunction_values():
    assert fock_position_wavefunction(0, 0.0) == pytest.approx(math.pi ** -0.25)
    assert fock_position_wavefunction(1, 0.0) == pytest.approx(0.0)


def test_wavefunction_orthonormal():
    psi = lambda x: position_wavefunctions(x, 11)
    gram = np.zeros((11, 11))
    for n in range(11):
        for m in range(n, 11):
            val, _ = integrate.quad(lambda x: psi(x)[n] * psi(x)[m], -np.inf, np.inf, epsabs=1e-12)
            gram[n, m] = gram[m, n] = val
    assert np.max(np.abs(gram - np.eye(11))) < 1e-8


def test_wavefunction_stays_finite_at_high_n():
    vals = position_wavefunctions(np.linspace(-12, 12, 101), 200)
    assert np.all(np.isfinite(vals))


def test_vacuum_density():
    assert quadrature_density(vacuum(10), 0.7, 0.0) == pytest.approx(1 / math.sqrt(math.pi))


def test_cat_density_peaks():
    alpha = math.sqrt(2) * 1.25
    xs = np.linspace(-6, 6, 24001)
    dens = quadrature_density(cat_state(alpha, "positive", 40), 0.0, xs)
    right = xs[xs > 0][np.argmax(dens[xs > 0])]
    left = xs[xs < 0][np.argmax(dens[xs < 0])]
    assert right == pytest.approx(2.5, rel=0.02)
    assert left == pytest.approx(-2.5, rel=0.02)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("eta", [1.0, 0.6])
def test_density_normalized(seed, eta):
    rho = random_density(15, seed=seed)
    xs, dens = density_grid(rho, 0.3 * seed, eta)
    assert np.trapezoid(dens, xs) == pytest.approx(1.0, abs=1e-8)


def test_lossy_density_is_gaussian_smearing():
    rho = cat_state(1.0, "negative", 30)
    eta = 0.6
    x0 = 0.4
    kernel = lambda xp: (quadrature_density(rho, 0.0, xp)
                         * stats.norm.pdf(x0, loc=math.sqrt(eta) * xp, scale=math.sqrt((1 - eta) / 2)))
    oracle, _ = integrate.quad(kernel, -10, 10, epsabs=1e-12, limit=200)
    assert quadrature_density(rho, 0.0, x0, eta) == pytest.approx(oracle, abs=1e-9)


def test_density_eta_validation():
    with pytest.raises(ValueError):
        quadrature_density(vacuum(4), 0.0, 0.0, eta=0.0)


def test_sample_variances():
    xs = sample_quadrature_values(vacuum(10), 0.0, 100_000, seed=1)
    assert np.var(xs) == pytest.approx(0.5, abs=0.01)
    xs = sample_quadrature_values(vacuum(10), 0.0, 100_000, eta=0.5, seed=2)
    assert np.var(xs) == pytest.approx(0.5, abs=0.01)
    xs = sample_quadrature_values(FockState.basis(1, 10), 0.0, 100_000, eta=0.5, seed=3)
    assert np.var(xs) == pytest.approx(1.0, abs=0.02)


def test_sampling_deterministic_and_validated():
    a = sample_quadratures(vacuum(5), 0.2, 50, seed=7)
    b = sample_quadratures(vacuum(5), 0.2, 50, seed=7)
    assert a == b
    assert all(isinstance(s, QuadratureSample) for s in a)
    with pytest.raises(ValueError):
        sample_quadratures(vacuum(5), 0.0, 0)
    with pytest.raises(ValueError):
        QuadratureSample(4.0, 0.0)


def test_sampling_histogram_chi_square():
    rho = cat_state(1.2, "negative", 30)
    xs = sample_quadrature_values(rho, 0.0, 100_000, seed=11)
    edges = np.linspace(-4.5, 4.5, 51)
    counts, _ = np.histogram(xs, edges)
    cdf_grid = np.linspace(-4.5, 4.5, 5001)
    dens = quadrature_density(rho, 0.0, cdf_grid)
    cum = np.concatenate([[0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(cdf_grid))])
    expected = np.diff(np.interp(edges, cdf_grid, cum)) * xs.size
    keep = expected > 5
    chi2 = np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep])
    dof = keep.sum()
    assert chi2 < dof + 3 * math.sqrt(2 * dof)


def test_project_on_x_product_state():
    a = FockState(random_vector(12, 1))
    b = FockState(random_vector(12, 2))
    out, dens = project_on_x(tensor(a, b), 2, 0.3)
    assert fidelity(out, a) == pytest.approx(1.0, abs=1e-10)
    assert dens == pytest.approx(quadrature_density(b, 0.0, 0.3), rel=1e-10)
    with pytest.raises(ValueError):
        project_on_x(tensor(a, b), 3, 0.0)


def test_project_on_x_vanishing_density():
    with pytest.raises(DegenerateStateError):
        project_on_x(tensor(vacuum(4), FockState.basis(1, 4)), 2, 0.0)


def test_window_infinite_is_partial_trace():
    cat = cat_state(1.0, "negative", 30)
    psi = beamsplitter_apply(tensor(cat, cat), BeamsplitterSpec(0.5))
    rho, prob = project_on_window(psi, 2, ConditioningWindow(math.inf))
    assert prob == pytest.approx(1.0, abs=1e-8)
    assert np.allclose(rho.elements, partial_trace(psi, keep=1).elements, atol=1e-10)
    # a wide finite window gives the same numbers through the quadrature path
    rho, prob = project_on_window(psi, 2, ConditioningWindow(12.0))
    assert prob == pytest.approx(1.0, abs=1e-8)


def test_window_shrinks_to_point_projection():
    cat = cat_state(1.0, "negative", 30)
    psi = beamsplitter_apply(tensor(cat, cat), BeamsplitterSpec(0.5))
    point, _ = project_on_x(psi, 2, 0.0)
    infid = [1 - fidelity(project_on_window(psi, 2, ConditioningWindow(d))[0], point) for d in (0.3, 0.1, 0.01)]
    assert infid[0] > infid[1] > infid[2]
    assert infid[2] < 1e-6


def _cat_wavefunction(alpha, sign):
    norm = 1.0 / math.sqrt(2 * (1 + sign * math.exp(-2 * alpha**2)))
    g = lambda x, c: math.pi ** -0.25 * np.exp(-0.5 * (x - c) ** 2)
    return lambda x: norm * (g(x, math.sqrt(2) * alpha) + sign * g(x, -math.sqrt(2) * alpha))


def test_window_accept_prob_against_double_integral():
    # oracle: two-mode position density after the 50:50 mixer, integrated over |x2| <= delta
    alpha, delta = 1.25, 0.3
    phi = _cat_wavefunction(alpha, -1)
    joint = lambda u, v: (phi((u + v) / math.sqrt(2)) * phi((u - v) / math.sqrt(2))) ** 2
    oracle, _ = integrate.dblquad(joint, -delta, delta, -12, 12, epsabs=1e-11)
    cat = cat_state(alpha, "negative", 40)
    psi = beamsplitter_apply(tensor(cat, cat), BeamsplitterSpec(0.5))
    _, prob = project_on_window(psi, 2, ConditioningWindow(delta))
    assert prob == pytest.approx(oracle, abs=1e-8)
    assert 0.15 <= prob <= 0.22


def test_window_large_alpha_limit():
    cat = cat_state(3.0, "negative", 60)
    psi = beamsplitter_apply(tensor(cat, cat), BeamsplitterSpec(0.5))
    _, prob = project_on_window(psi, 2, ConditioningWindow(2.0))
    assert prob == pytest.approx(math.erf(2.0) / 2, abs=0.002)


def test_window_efficiency_continuity():
    cat = cat_state(1.0, "negative", 30)
    psi = beamsplitter_apply(tensor(cat, cat), BeamsplitterSpec(0.5))
    w = ConditioningWindow(0.3)
    _, p1 = project_on_window(psi, 2, w, 1.0)
    _, p_near = project_on_window(psi, 2, w, 1 - 1e-7)
    assert p_near == pytest.approx(p1, abs=1e-6)


def test_samples_csv_round_trip(tmp_path):
    path = tmp_path / "s.csv"
    write_samples_csv(path, [0.0, 0.5], [0.25, -1.5], {"seed": 3})
    thetas, xs = read_samples_csv(path)
    assert thetas.tolist() == [0.0, 0.5] and xs.tolist() == [0.25, -1.5]
    assert (tmp_path / "s.csv.json").exists()


def test_samples_csv_malformed_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("theta,x\n0.0,1.0\n0.1,oops\n")
    with pytest.raises(ValueError, match=r"bad.csv:3"):
        read_samples_csv(path)
