"""Cat-state breeding: two cats interfere on a 50:50 beamsplitter and one port is
conditioned on a near-zero homodyne outcome, leaving a larger cat in the other."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fock_core import (
    DEFAULT_DIM,
    CatParity,
    DegenerateStateError,
    DensityMatrix,
    FockState,
    as_density,
    cat_state,
    fidelity,
    mean_photon_number,
    squeeze_db_to_r,
    squeezed_vacuum,
    TwoModeState,
    tensor,
)
from .homodyne import (
    ConditioningWindow,
    condition_amplitudes,
    grid_half_width,
    position_wavefunctions,
    project_on_window,
    window_povm,
)
from .operators import (
    BeamsplitterSpec,
    TruncationWarning,
    beamsplitter_amplitudes,
    loss_adjoint,
    loss_channel,
    tap_subtract,
)
from .tomography import FitResult, best_fit_squeezed_cat
from .wigner import wigner_grid

EXACT = "exact"
ENSEMBLE_CUTOFF = 1e-12
SWEEP_COLUMNS = ("alpha", "delta", "eta", "accept_prob", "fit_alpha", "fit_db", "fidelity")


@dataclass
class StageReport:
    """Outcome of one breeding stage (or of a state preparation step).

    For exact-slice conditioning ``accept_prob`` is the homodyne probability
    density at ``X = 0`` rather than a probability.
    """

    output_state: DensityMatrix
    accept_prob: float
    input_description: str
    best_fit: FitResult | None = None
    diagnostics: dict = field(default_factory=dict)
    measured_state: DensityMatrix | None = None

    def __post_init__(self):
        if not (math.isfinite(self.accept_prob) and self.accept_prob >= 0.0):
            raise ValueError(f"invalid accept_prob {self.accept_prob}")

    def to_dict(self) -> dict:
        doc = {
            "input_description": self.input_description,
            "accept_prob": self.accept_prob,
            "best_fit": self.best_fit.to_dict() if self.best_fit else None,
            "diagnostics": self.diagnostics,
            "output_state": self.output_state.to_dict(),
        }
        if self.measured_state is not None:
            doc["measured_state"] = self.measured_state.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class ExperimentConfig:
    squeeze_db_initial: float = 1.7
    tap_transmissivity: float = 0.9
    prep_mode_match: float = 0.9
    detection_eta: float = 0.62
    window_delta: float = 0.3
    phase_offset: float = 0.0
    dim: int = DEFAULT_DIM
    seed: int = 0
    # "total": undo preparation and detection loss (the 50% budget);
    # "detection": undo only the 62% detection loss
    correction: str = "total"
    source_squeezes_momentum: bool = True
    ideal_cat_alpha: float | None = None
    fit: bool = True

    def __post_init__(self):
        for name in ("prep_mode_match", "detection_eta"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name}={val} outside (0, 1]")
        if self.ideal_cat_alpha is None and not 0.0 < self.tap_transmissivity < 1.0:
            raise ValueError("tap_transmissivity must lie in (0, 1) unless ideal cats are injected")
        if self.ideal_cat_alpha is not None and self.ideal_cat_alpha <= 0:
            raise ValueError("ideal_cat_alpha must be positive")
        if not self.window_delta > 0:
            raise ValueError("window_delta must be positive")
        if self.dim < 4:
            raise ValueError("dim must be at least 4")
        if self.correction not in ("total", "detection"):
            raise ValueError("correction must be 'total' or 'detection'")

    @property
    def prep_efficiency(self) -> float:
        """Efficiency between the heralded source and the beamsplitter."""
        if self.ideal_cat_alpha is not None:
            return self.prep_mode_match
        return self.tap_transmissivity * self.prep_mode_match

    @property
    def total_efficiency(self) -> float:
        return self.prep_efficiency * self.detection_eta


def _wigner_minimum(rho: DensityMatrix, points: int = 61) -> float:
    half = min(grid_half_width(rho), 10.0)
    grid = wigner_grid(rho, (-half, half), (-half, half), points, points)
    return grid.minimum()


def _diagnostics(rho: DensityMatrix, extra: dict | None = None) -> dict:
    diag = {"mean_photon_number": mean_photon_number(rho), "wigner_min": _wigner_minimum(rho)}
    diag.update(extra or {})
    return diag


def _point_povm(x: float, dim: int, eta: float) -> np.ndarray:
    psi = position_wavefunctions(x, dim)
    ideal = np.outer(psi, psi)
    return np.real(loss_adjoint(ideal, eta)) if eta < 1.0 else ideal


def _conditioning_povm(conditioning, dim: int, eta: float) -> np.ndarray:
    if isinstance(conditioning, str):
        if conditioning != EXACT:
            raise ValueError(f"unknown conditioning {conditioning!r}")
        return _point_povm(0.0, dim, eta)
    if isinstance(conditioning, ConditioningWindow):
        return window_povm(conditioning, dim, eta)
    raise TypeError("conditioning must be 'exact' or a ConditioningWindow")


def _describe(conditioning) -> str:
    if isinstance(conditioning, ConditioningWindow):
        return f"|X2 - {conditioning.center:g}| <= {conditioning.delta:g}"
    return "X2 = 0"


def _ensemble(state, cutoff: float = ENSEMBLE_CUTOFF):
    """Weights and vectors of a pure or mixed state (eigen-decomposition)."""
    if isinstance(state, FockState):
        return np.ones(1), state.amplitudes[None, :]
    lam, vecs = np.linalg.eigh(as_density(state).elements)
    keep = lam > cutoff * lam[-1]
    return lam[keep], vecs[:, keep].T


def _fit(rho, fit) -> FitResult | None:
    if not fit:
        return None
    kwargs = fit if isinstance(fit, dict) else {}
    return best_fit_squeezed_cat(rho, **kwargs)


def breed_states(s1, s2, window=EXACT, eta2: float = 1.0, phase_offset: float = 0.0,
                 fit=False, target=None) -> StageReport:
    """General breeding stage for pure or mixed inputs of equal dimension.

    ``phase_offset`` rotates ``s2`` by ``exp(i phase_offset n)`` before the
    beamsplitter. ``eta2`` is the efficiency of the conditioning homodyne.
    ``fit`` may be a bool or keyword arguments for the squeezed-cat search;
    ``target`` adds its fidelity with the output to the diagnostics.
    """
    r1, r2 = as_density(s1), as_density(s2)
    if r1.dim != r2.dim:
        raise ValueError(f"input dims differ: {r1.dim} vs {r2.dim}")
    dim = r1.dim
    w1, v1 = _ensemble(s1)
    w2, v2 = _ensemble(s2)
    weights = np.outer(w1, w2).ravel()
    stack = np.einsum("im,jn->ijmn", v1, v2).reshape(-1, dim, dim)
    out, lost = beamsplitter_amplitudes(stack, BeamsplitterSpec(0.5, phase_offset), tail_tol=math.inf)
    lost_weighted = float(np.dot(weights, lost))
    if lost_weighted > 1e-8:
        warnings.warn(f"breeding lost {lost_weighted:.2e} of the norm to truncation", TruncationWarning)
    povm = _conditioning_povm(window, dim, eta2)
    rho = np.einsum("k,kmn->mn", weights, out @ povm.T @ out.conj().transpose(0, 2, 1))
    prob = float(np.real(np.trace(rho)))
    if prob < 1e-14:
        raise DegenerateStateError(f"acceptance probability {prob:.2e} vanishes")
    state = DensityMatrix.from_array(rho)
    extra = {"truncation_loss": lost_weighted, "eta2": eta2, "phase_offset": phase_offset}
    if target is not None:
        extra["target_fidelity"] = fidelity(state, target)
    return StageReport(
        output_state=state,
        accept_prob=prob,
        input_description=f"two-state breeding, conditioning {_describe(window)}, eta2={eta2:g}",
        best_fit=_fit(state, fit),
        diagnostics=_diagnostics(state, extra),
    )


def breed_ideal(alpha: float, parity=CatParity.NEGATIVE, conditioning=EXACT, dim: int = DEFAULT_DIM,
                eta2: float = 1.0, fit=False) -> StageReport:
    """Breed two identical ideal cats of amplitude ``alpha``.

    The diagnostics carry the fidelity with the target ``SC+(sqrt(2) alpha)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    parity = CatParity.parse(parity)
    cat = cat_state(alpha, parity, dim)
    joint = tensor(cat, cat)
    out, lost = beamsplitter_amplitudes(joint.amplitudes, BeamsplitterSpec(0.5))
    povm = _conditioning_povm(conditioning, dim, eta2)
    rho = condition_amplitudes(out, povm)
    prob = float(np.real(np.trace(rho)))
    if prob < 1e-14:
        raise DegenerateStateError(f"acceptance probability {prob:.2e} vanishes")
    state = DensityMatrix.from_array(rho)
    target = cat_state(math.sqrt(2.0) * alpha, CatParity.POSITIVE, dim)
    extra = {"target_fidelity": fidelity(state, target), "truncation_loss": float(np.max(lost)), "eta2": eta2}
    return StageReport(
        output_state=state,
        accept_prob=prob,
        input_description=f"ideal {parity.value} cats alpha={alpha:g}, conditioning {_describe(conditioning)}",
        best_fit=_fit(state, fit),
        diagnostics=_diagnostics(state, extra),
    )


def vacuum_admixture_weight(alpha: float) -> float:
    """Relative vacuum amplitude ``1/sqrt((1 + exp(4 alpha^2))/2)`` of the exact-slice output.

    The output is proportional to ``SC+(sqrt(2) alpha) + w |0>`` with cat and
    vacuum both normalized.
    """
    return 1.0 / math.sqrt(0.5 * (1.0 + math.exp(4.0 * alpha**2)))


def cat_vacuum_decomposition(state: FockState, alpha_out: float) -> tuple:
    """Least-squares coefficients ``(a, b)`` of ``state`` on ``SC+(alpha_out)`` and ``|0>``."""
    dim = state.dim
    basis = np.stack([cat_state(alpha_out, CatParity.POSITIVE, dim).amplitudes,
                      FockState.basis(0, dim).amplitudes], axis=1)
    coef, *_ = np.linalg.lstsq(basis, state.amplitudes, rcond=None)
    return complex(coef[0]), complex(coef[1])


def iterate_breeding(initial, n_stages: int, window=EXACT, eta2: float = 1.0, fit=True) -> list:
    """Feed each stage output into both arms of the next stage as independent copies.

    Each report's diagnostics carry ``cumulative_accept_prob``, the product of
    the acceptance values of all stages so far.
    """
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    current = initial
    cumulative = 1.0
    reports = []
    for stage in range(1, n_stages + 1):
        report = breed_states(current, current, window, eta2, fit=fit)
        cumulative *= report.accept_prob
        report.diagnostics["stage"] = stage
        report.diagnostics["cumulative_accept_prob"] = cumulative
        report.input_description = f"stage {stage}: " + report.input_description
        reports.append(report)
        current = report.output_state
    return reports


def resource_estimate(alpha_in: float, alpha_target: float, p: float, rel_tol: float = 0.02) -> dict:
    """Stages and copies needed to grow ``alpha_in`` to ``alpha_target`` at success probability ``p``.

    Each stage gains a factor sqrt(2); ``n`` is the fewest stages whose output
    reaches the target to within ``rel_tol`` (1.4 * 2**1.5 = 3.96 counts as 4).
    A stage tree needs ``2^n - 1`` implementations; ``copies_estimate = p^(-2^n)``
    and ``copies_continuous`` uses the unrounded exponent ``ratio^2``.
    """
    if not alpha_target > alpha_in > 0:
        raise ValueError("need alpha_target > alpha_in > 0")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if not 0.0 <= rel_tol < 1.0:
        raise ValueError("rel_tol must lie in [0, 1)")
    ratio = alpha_target / alpha_in
    n = max(1, math.ceil(2.0 * math.log2((1.0 - rel_tol) * ratio) - 1e-9))
    return {
        "n_stages": n,
        "implementations": 2**n - 1,
        "success_prob": p ** (2**n - 1),
        "copies_estimate": p ** (-(2**n)),
        "copies_continuous": p ** (-(ratio**2)),
    }


def _arm_state(cfg: ExperimentConfig):
    """Lossless heralded arm state and its herald probability."""
    if cfg.ideal_cat_alpha is not None:
        return cat_state(cfg.ideal_cat_alpha, CatParity.NEGATIVE, cfg.dim), 1.0
    r = squeeze_db_to_r(cfg.squeeze_db_initial)
    source = squeezed_vacuum(-r if cfg.source_squeezes_momentum else r, cfg.dim)
    return tap_subtract(source, cfg.tap_transmissivity)


def simulate_full_experiment(cfg: ExperimentConfig = ExperimentConfig()) -> dict:
    """Model the two-arm experiment and the reported (loss-corrected) states.

    Each arm is a heralded photon-subtracted squeezed vacuum followed by the
    preparation loss. Equal losses on both inputs commute with the 50:50
    beamsplitter, so the preparation loss moves onto the outputs: the
    conditioning homodyne sees ``eta_prep * eta_det`` and the kept mode gets
    ``L(eta_prep)`` after conditioning. The state corrected for the total
    efficiency is therefore the one conditioned at ``eta_prep * eta_det`` with no
    loss on the kept mode; the detection-only correction keeps ``L(eta_prep)``.
    """
    arm, herald = _arm_state(cfg)
    eta_p, eta_d = cfg.prep_efficiency, cfg.detection_eta
    window = ConditioningWindow(cfg.window_delta)

    arm_physical = loss_channel(arm, eta_p)
    initial_corrected = as_density(arm) if cfg.correction == "total" else arm_physical
    initial = StageReport(
        output_state=initial_corrected,
        accept_prob=herald,
        input_description=_source_description(cfg),
        best_fit=_fit(initial_corrected, cfg.fit),
        diagnostics=_diagnostics(initial_corrected, {"prep_efficiency": eta_p}),
        measured_state=loss_channel(arm_physical, eta_d),
    )

    if cfg.phase_offset == 0:
        rho_total, prob = project_on_window(_bs_pair(arm), 2, window, eta_p * eta_d)
        physical = loss_channel(rho_total, eta_p)
    else:
        # a phase error breaks the shortcut above; use the general mixed-input path
        stage = breed_states(arm_physical, arm_physical, window, eta_d, cfg.phase_offset)
        physical, prob = stage.output_state, stage.accept_prob
        rho_total = breed_states(arm, arm, window, eta_p * eta_d, cfg.phase_offset).output_state
    corrected = rho_total if cfg.correction == "total" else physical
    amplified = StageReport(
        output_state=corrected,
        accept_prob=prob,
        input_description=f"breeding of two heralded arms, |X2| <= {cfg.window_delta:g}, "
                          f"correction={cfg.correction}",
        best_fit=_fit(corrected, cfg.fit),
        diagnostics=_diagnostics(corrected, {
            "prep_efficiency": eta_p,
            "detection_eta": eta_d,
            "total_efficiency": cfg.total_efficiency,
        }),
        measured_state=loss_channel(physical, eta_d),
    )
    return {"initial_report": initial, "amplified_report": amplified}


def _bs_pair(arm: FockState) -> TwoModeState:
    out, _ = beamsplitter_amplitudes(tensor(arm, arm).amplitudes, BeamsplitterSpec(0.5))
    return TwoModeState.from_matrix(out)


def _source_description(cfg: ExperimentConfig) -> str:
    if cfg.ideal_cat_alpha is not None:
        return f"ideal negative cat alpha={cfg.ideal_cat_alpha:g}"
    return (f"photon-subtracted squeezed vacuum {cfg.squeeze_db_initial:g} dB, "
            f"tap {cfg.tap_transmissivity:g}")


# -- parameter sweeps ----------------------------------------------------------

def _sweep_point(args) -> dict:
    alpha, delta, eta, parity, dim, fit_kwargs = args
    report = breed_ideal(alpha, parity, ConditioningWindow(delta), dim, eta, fit=fit_kwargs or False)
    row = {
        "alpha": alpha,
        "delta": delta,
        "eta": eta,
        "accept_prob": report.accept_prob,
        "fit_alpha": report.best_fit.alpha if report.best_fit else math.nan,
        "fit_db": report.best_fit.squeeze_db if report.best_fit else math.nan,
        "fidelity": report.diagnostics["target_fidelity"],
    }
    return row


def sweep(alphas, deltas, etas=(1.0,), parity=CatParity.NEGATIVE, dim: int = DEFAULT_DIM,
          fit=None, workers: int = 1) -> list:
    """Evaluate ideal-cat breeding on the grid ``alphas x deltas x etas``.

    Rows are sorted by ``(alpha, delta, eta)`` regardless of completion order.
    ``fit`` is ``None`` (no fit) or keyword arguments for the squeezed-cat search.
    """
    alphas, deltas, etas = list(alphas), list(deltas), list(etas)
    if not alphas or not deltas or not etas:
        raise ValueError("sweep lists must be nonempty")
    parity = CatParity.parse(parity)
    jobs = [(float(a), float(d), float(e), parity, dim, fit)
            for a in alphas for d in deltas for e in etas]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    return sorted(rows, key=lambda r: (r["alpha"], r["delta"], r["eta"]))


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(cfg, **kwargs)
