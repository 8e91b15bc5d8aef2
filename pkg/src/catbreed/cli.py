"""Command-line front end: ``catbreed {breed,experiment,tomography,sweep,wigner}``.

Parameters come from an optional YAML file with one section per command plus a
``run`` section (``out``, ``seed``, ``dim``, ``format``); command-line flags win
over file values. Artifacts are staged in a temporary directory and moved
under ``--out`` only when the command succeeds.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import shutil
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .breeding import (
    EXACT,
    SWEEP_COLUMNS,
    ExperimentConfig,
    breed_ideal,
    simulate_full_experiment,
    sweep,
)
from .fock_core import (
    CatParity,
    DegenerateStateError,
    FockState,
    TruncationError,
    cat_state,
    coherent_state,
    fidelity,
    squeeze_db_to_r,
    squeezed_cat,
    squeezed_vacuum,
    state_from_json,
    vacuum,
)
from .homodyne import ConditioningWindow
from .operators import TruncationWarning
from .tomography import (
    DEFAULT_PHASES,
    TomographyDataset,
    best_fit_squeezed_cat,
    maxlik_reconstruct,
    simulate_dataset,
)
from .wigner import negativity_volume, wigner_grid, write_grid

log = logging.getLogger("catbreed")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
REQUIRED = object()


class ConfigError(ValueError):
    pass


# -- schema --------------------------------------------------------------------

def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _opt_float(v):
    return None if v is None else _float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _str(v):
    if not isinstance(v, str):
        raise ValueError(f"expected a string, got {v!r}")
    return v


def _floats(v):
    if not isinstance(v, list):
        raise ValueError(f"expected a list, got {v!r}")
    if not v:
        raise ValueError("list must be nonempty")
    return [_float(x) for x in v]


def _range(v):
    vals = _floats(v)
    if len(vals) != 2 or not vals[1] > vals[0]:
        raise ValueError(f"expected [lo, hi] with hi > lo, got {v!r}")
    return vals


def _parity(v):
    return CatParity.parse(_str(v)).value


def _mapping(v):
    if not isinstance(v, dict):
        raise ValueError(f"expected a mapping, got {v!r}")
    return v


def _choice(*options):
    def check(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(map(str, options))}, got {v!r}")
        return v
    return check


SCHEMA = {
    "run": {
        "out": (_str, "out"),
        "seed": (_int, 0),
        "dim": (lambda v: None if v is None else _int(v), None),
        "format": (_choice("csv", "json"), "csv"),
    },
    "breed": {
        "alpha": (_float, REQUIRED),
        "parity": (_parity, "negative"),
        "delta": (_opt_float, None),
        "eta2": (_float, 1.0),
        "fit": (_bool, True),
        "grid_extent": (_float, 5.0),
        "grid_points": (_int, 121),
    },
    "experiment": {
        "squeeze_db_initial": (_float, 1.7),
        "tap_transmissivity": (_float, 0.9),
        "prep_mode_match": (_float, 0.9),
        "detection_eta": (_float, 0.62),
        "window_delta": (_float, 0.3),
        "phase_offset": (_float, 0.0),
        "correction": (_choice("total", "detection"), "total"),
        "source_squeezes_momentum": (_bool, True),
        "ideal_cat_alpha": (_opt_float, None),
        "fit": (_bool, True),
        "grid_extent": (_float, 5.0),
        "grid_points": (_int, 121),
    },
    "tomography": {
        "state": (lambda v: None if v is None else _mapping(v), None),
        "samples": (lambda v: None if v is None else _str(v), None),
        "phases": (_int, len(DEFAULT_PHASES)),
        "per_phase": (_int, 5000),
        "eta": (_float, 1.0),
        "correct_eta": (_opt_float, None),
        "max_iter": (_int, 2000),
        "tol": (_float, 1e-10),
        "bin_width": (_opt_float, None),
        "fit": (_bool, False),
    },
    "sweep": {
        "alphas": (_floats, REQUIRED),
        "deltas": (_floats, REQUIRED),
        "etas": (_floats, [1.0]),
        "parity": (_parity, "negative"),
        "fit": (_bool, False),
        "workers": (_int, 1),
    },
    "wigner": {
        "state": (_mapping, REQUIRED),
        "x_range": (_range, [-5.0, 5.0]),
        "p_range": (_range, [-5.0, 5.0]),
        "nx": (_int, 201),
        "np": (_int, 201),
        "gnuplot": (_bool, False),
    },
}

DEFAULT_DIMS = {"breed": 40, "experiment": 40, "tomography": 20, "sweep": 40, "wigner": 40}

STATE_KEYS = {
    "vacuum": set(),
    "fock": {"n"},
    "coherent": {"alpha"},
    "cat": {"alpha", "parity"},
    "squeezed_cat": {"alpha", "parity", "squeeze_db"},
    "squeezed_vacuum": {"squeeze_db"},
    "file": {"path"},
}


def _validate_section(name: str, raw) -> dict:
    schema = SCHEMA[name]
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                out[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{name}.{key}: {exc}") from None
        elif default is REQUIRED:
            raise ConfigError(f"missing required key '{name}.{key}'")
        else:
            out[key] = default
    return out


def load_config(command: str, path: str | None, overrides: dict) -> dict:
    """Merge file values and flag overrides into a validated ``{run, <command>}`` mapping."""
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must contain a mapping")
    unknown = sorted(set(doc) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    run_raw = dict(doc.get("run") or {})
    run_raw.update({k: v for k, v in overrides.items() if v is not None})
    run = _validate_section("run", run_raw)
    if run["dim"] is None:
        run["dim"] = DEFAULT_DIMS[command]
    if run["dim"] < 4:
        raise ConfigError("run.dim must be at least 4")
    return {"run": run, command: _validate_section(command, doc.get(command))}


def config_hash(cfg: dict) -> str:
    """SHA-256 of the resolved config; the output directory is not part of it."""
    cfg = {**cfg, "run": {k: v for k, v in cfg["run"].items() if k != "out"}}
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def build_state(spec: dict, dim: int):
    """Construct a state from ``{kind: ..., <params>}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in STATE_KEYS:
        raise ConfigError(f"state.kind must be one of {', '.join(sorted(STATE_KEYS))}, got {kind!r}")
    extra = sorted(set(spec) - STATE_KEYS[kind])
    if extra:
        raise ConfigError(f"unknown key(s) for state kind '{kind}': {', '.join(extra)}")
    try:
        if kind == "vacuum":
            return vacuum(dim)
        if kind == "fock":
            return FockState.basis(_int(spec.get("n", 1)), dim)
        if kind == "coherent":
            return coherent_state(_float(spec.get("alpha", 1.0)), dim)
        if kind == "cat":
            return cat_state(_float(spec.get("alpha", 1.0)), _parity(spec.get("parity", "positive")), dim)
        if kind == "squeezed_cat":
            return squeezed_cat(_float(spec.get("alpha", 1.0)), _parity(spec.get("parity", "positive")),
                                _float(spec.get("squeeze_db", 0.0)), dim)
        if kind == "squeezed_vacuum":
            return squeezed_vacuum(squeeze_db_to_r(_float(spec.get("squeeze_db", 3.0))), dim)
        state = state_from_json(Path(_str(spec.get("path"))).read_text())
    except (TruncationError, DegenerateStateError):
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(f"state: {exc}") from None
    if state.dim != dim:
        raise ConfigError(f"state file has dim {state.dim}, run.dim is {dim}")
    return state


# -- artifact writing -------------------------------------------------------------

class Artifacts:
    """Stages files in a scratch directory; ``commit`` moves them to ``out``."""

    def __init__(self, out: Path, cfg: dict, command: str):
        self.out = out
        self.scratch = Path(tempfile.mkdtemp(prefix="catbreed-"))
        self.meta = {
            "command": command,
            "config_hash": config_hash(cfg),
            "seed": cfg["run"]["seed"],
            "version": __version__,
        }
        self.names = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.scratch / name

    def sidecar(self, name: str, extra: dict | None = None) -> None:
        meta = dict(self.meta)
        meta.update(extra or {})
        (self.scratch / (name + ".json")).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def write_text(self, name: str, text: str, extra: dict | None = None) -> None:
        self.path(name).write_text(text)
        self.sidecar(name, extra)

    def write_json(self, name: str, doc, extra: dict | None = None) -> None:
        self.write_text(name, json.dumps(doc, indent=2, sort_keys=True) + "\n", extra)

    def write_table(self, stem: str, rows: list, columns, fmt: str, extra: dict | None = None) -> str:
        if fmt == "json":
            name = stem + ".json"
            self.write_json(name, [{c: r[c] for c in columns} for r in rows], extra)
            return name
        name = stem + ".csv"
        with self.path(name).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns)
            for r in rows:
                writer.writerow([_cell(r[c]) for c in columns])
        self.sidecar(name, extra)
        return name

    def write_grid(self, stem: str, grid, fmt: str, gnuplot: bool = False, extra: dict | None = None) -> str:
        meta = dict(self.meta)
        meta.update(extra or {})
        if fmt == "json":
            name = stem + ".json"
            doc = {"x_min": grid.x_min, "x_max": grid.x_max, "p_min": grid.p_min, "p_max": grid.p_max,
                   "values": np.round(grid.values, 12).tolist()}
            self.write_json(name, doc, extra)
            return name
        name = stem + (".dat" if gnuplot else ".csv")
        write_grid(grid, self.path(name), gnuplot=gnuplot, metadata=meta)
        return name

    def commit(self) -> list:
        self.out.mkdir(parents=True, exist_ok=True)
        for item in sorted(self.scratch.iterdir()):
            shutil.move(str(item), str(self.out / item.name))
        shutil.rmtree(self.scratch, ignore_errors=True)
        return self.names

    def discard(self) -> None:
        shutil.rmtree(self.scratch, ignore_errors=True)


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _fit_text(fit) -> str:
    if fit is None:
        return "not computed"
    return (f"{fit.parity.value} cat alpha={fit.alpha:.4f}, squeeze={fit.squeeze_db:.3f} dB, "
            f"fidelity={fit.fidelity:.4f}")


def _grid_for(state, extent: float, points: int):
    return wigner_grid(state, (-extent, extent), (-extent, extent), points, points)


# -- commands ---------------------------------------------------------------------

def cmd_breed(cfg: dict, art: Artifacts) -> None:
    run, p = cfg["run"], cfg["breed"]
    conditioning = EXACT if p["delta"] is None else ConditioningWindow(p["delta"])
    report = breed_ideal(p["alpha"], p["parity"], conditioning, run["dim"], p["eta2"], fit=p["fit"])
    cat = cat_state(p["alpha"], p["parity"], run["dim"])
    art.write_json("report.json", report.to_dict())
    art.write_grid("wigner_input", _grid_for(cat, p["grid_extent"], p["grid_points"]), run["format"])
    art.write_grid("wigner_output", _grid_for(report.output_state, p["grid_extent"], p["grid_points"]),
                   run["format"])
    lines = [
        f"input: {report.input_description}",
        f"accept_prob: {report.accept_prob:.6f}",
        f"fidelity with SC+(sqrt(2) alpha): {report.diagnostics['target_fidelity']:.6f}",
        f"best fit: {_fit_text(report.best_fit)}",
        f"wigner minimum: {report.diagnostics['wigner_min']:.6f}",
    ]
    art.write_text("summary.txt", "\n".join(lines) + "\n")


def cmd_experiment(cfg: dict, art: Artifacts) -> None:
    run, p = cfg["run"], dict(cfg["experiment"])
    extent, points = p.pop("grid_extent"), p.pop("grid_points")
    exp_cfg = ExperimentConfig(dim=run["dim"], seed=run["seed"], **p)
    result = simulate_full_experiment(exp_cfg)
    rows = []
    for key in ("initial_report", "amplified_report"):
        report = result[key]
        stem = key.replace("_report", "")
        art.write_json(f"{stem}_report.json", report.to_dict())
        art.write_grid(f"wigner_{stem}_corrected", _grid_for(report.output_state, extent, points), run["format"])
        art.write_grid(f"wigner_{stem}_measured", _grid_for(report.measured_state, extent, points), run["format"])
        fit = report.best_fit
        rows.append({
            "state": stem,
            "correction": exp_cfg.correction,
            "accept_prob": report.accept_prob,
            "fit_parity": fit.parity.value if fit else "",
            "fit_alpha": fit.alpha if fit else math.nan,
            "fit_db": fit.squeeze_db if fit else math.nan,
            "fit_fidelity": fit.fidelity if fit else math.nan,
        })
    art.write_table("fits", rows, list(rows[0]), run["format"])
    amp = result["amplified_report"]
    lines = [
        f"prep efficiency: {exp_cfg.prep_efficiency:.4f}, total efficiency: {exp_cfg.total_efficiency:.4f}",
        f"correction: {exp_cfg.correction}",
        f"herald probability per arm: {result['initial_report'].accept_prob:.6f}",
        f"initial best fit: {_fit_text(result['initial_report'].best_fit)}",
        f"accept_prob: {amp.accept_prob:.6f}",
        f"amplified best fit: {_fit_text(amp.best_fit)}",
    ]
    art.write_text("summary.txt", "\n".join(lines) + "\n")


def cmd_tomography(cfg: dict, art: Artifacts) -> None:
    run, p = cfg["run"], cfg["tomography"]
    if (p["state"] is None) == (p["samples"] is None):
        raise ConfigError("tomography needs exactly one of 'state' or 'samples'")
    if p["phases"] < 1 or p["per_phase"] < 1:
        raise ConfigError("tomography.phases and tomography.per_phase must be positive")
    data_seed, = np.random.SeedSequence(run["seed"]).generate_state(1)
    seeds = {"dataset_seed": int(data_seed)}
    truth = None
    if p["samples"] is not None:
        data = TomographyDataset.from_csv(p["samples"], eta_assumed=p["eta"], dim=run["dim"])
    else:
        truth = build_state(p["state"], run["dim"])
        phases = tuple(np.arange(p["phases"]) * math.pi / p["phases"])
        data = simulate_dataset(truth, phases, p["per_phase"], p["eta"], int(data_seed), run["dim"])
        data.to_csv(art.path("samples.csv"), metadata={**art.meta, **seeds})
    result = maxlik_reconstruct(data, p["correct_eta"], p["max_iter"], p["tol"], full_output=True,
                                bin_width=p["bin_width"])
    info = {**seeds, "converged": result.converged, "iterations": result.iterations,
            "log_likelihood": result.log_likelihoods[-1]}
    art.write_json("reconstruction.json", result.state.to_dict(), info)
    lines = [
        f"samples: {len(data)}",
        f"iterations: {result.iterations} (converged: {result.converged})",
        f"log-likelihood: {result.log_likelihoods[-1]:.6f}",
    ]
    if truth is not None:
        lines.append(f"fidelity with truth: {fidelity(truth, result.state):.6f}")
    if p["fit"]:
        fit = best_fit_squeezed_cat(result.state)
        art.write_json("fit.json", fit.to_dict(), seeds)
        lines.append(f"best fit: {_fit_text(fit)}")
    art.write_text("summary.txt", "\n".join(lines) + "\n", seeds)


def cmd_sweep(cfg: dict, art: Artifacts) -> None:
    run, p = cfg["run"], cfg["sweep"]
    if any(d <= 0 for d in p["deltas"]):
        raise ConfigError("sweep.deltas must be positive")
    if any(not 0 < e <= 1 for e in p["etas"]):
        raise ConfigError("sweep.etas must lie in (0, 1]")
    fit = {"db_range": (-6.0, 6.0)} if p["fit"] else None
    rows = sweep(p["alphas"], p["deltas"], p["etas"], p["parity"], run["dim"], fit, p["workers"])
    art.write_table("sweep", rows, SWEEP_COLUMNS, run["format"])


def cmd_wigner(cfg: dict, art: Artifacts) -> None:
    run, p = cfg["run"], cfg["wigner"]
    if p["nx"] < 2 or p["np"] < 2:
        raise ConfigError("wigner.nx and wigner.np must be at least 2")
    state = build_state(p["state"], run["dim"])
    grid = wigner_grid(state, p["x_range"], p["p_range"], p["nx"], p["np"])
    stats = {"integral": grid.integral(), "minimum": grid.minimum(), "negativity_volume": negativity_volume(grid)}
    art.write_grid("wigner", grid, run["format"], gnuplot=p["gnuplot"], extra=stats)
    art.write_text("summary.txt", "".join(f"{k}: {v:.8f}\n" for k, v in sorted(stats.items())))


COMMANDS = {
    "breed": (cmd_breed, "breed two ideal cats and report the output"),
    "experiment": (cmd_experiment, "simulate the full two-arm experiment"),
    "tomography": (cmd_tomography, "simulate or ingest homodyne data and reconstruct"),
    "sweep": (cmd_sweep, "sweep amplitude, window and efficiency"),
    "wigner": (cmd_wigner, "export a Wigner grid for a named state"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="catbreed", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="YAML config file")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--seed", type=int, help="top-level seed")
        cmd.add_argument("--dim", type=int, help="Fock cutoff")
        cmd.add_argument("--format", choices=("csv", "json"), help="format for grids and tables")
        cmd.add_argument("-v", "--verbose", action="store_true")
        if name == "experiment":
            cmd.add_argument("--footnote", action="store_true",
                             help="correct only the detection loss (62%%) instead of the total budget")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"out": args.out, "seed": args.seed, "dim": args.dim, "format": args.format}
    try:
        cfg = load_config(args.command, args.config, overrides)
        if getattr(args, "footnote", False):
            cfg["experiment"]["correction"] = "detection"
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    art = Artifacts(Path(cfg["run"]["out"]), cfg, args.command)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", TruncationWarning)
            COMMANDS[args.command][0](cfg, art)
    except ConfigError as exc:
        art.discard()
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationError, DegenerateStateError, TruncationWarning, np.linalg.LinAlgError) as exc:
        art.discard()
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        art.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BaseException:
        art.discard()
        raise
    for name in art.commit():
        log.info("wrote %s", Path(cfg["run"]["out"]) / name)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
