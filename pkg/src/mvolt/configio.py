"""Structured text configuration files: sections of key = literal lines.

One diffable format serves every subcommand.  A file is a sequence of
``[section]`` headers followed by ``key = value`` lines whose values are
Python literals (numbers, strings, nested lists).  Keys outside any header
land in the "" section.  Writing is canonical (sorted keys are NOT used;
insertion order is kept, floats via repr), so write -> read -> write is
byte-stable.
"""

from __future__ import annotations

import ast
from pathlib import Path

import numpy as np

from .measures import SHAPE_GENERAL, SHAPE_SYMMETRIC, AtomicMatrixMeasure
from .jumps import JumpMeasureSpec
from .heston import HestonModelSpec


class ConfigError(ValueError):
    """Malformed configuration input; carries file and line context."""


def parse_sections(text: str, source: str = "<config>") -> dict[str, dict]:
    sections: dict[str, dict] = {"": {}}
    current = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            parsed = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(
                f"{source}:{lineno}: field {key!r} is not a literal: {exc}"
            ) from exc
        sections[current][key] = parsed
    return sections


def read_sections(path) -> dict[str, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_sections(path.read_text(), source=str(path))


def _format_value(v) -> str:
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if isinstance(v, (bool, int, str)):
        return repr(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    raise ConfigError(f"cannot serialize value of type {type(v)!r}")


def write_sections(path, sections: dict[str, dict]) -> None:
    lines = []
    for name, body in sections.items():
        if name:
            lines.append(f"[{name}]")
        for key, value in body.items():
            lines.append(f"{key} = {_format_value(value)}")
        lines.append("")
    Path(path).write_text("\n".join(lines))


# measure files -------------------------------------------------------------

def measure_to_dict(measure: AtomicMatrixMeasure) -> dict:
    body = {
        "shape": measure.shape,
        "d": measure.d,
        "nodes": measure.nodes.tolist(),
        "weights": measure.weights.tolist(),
    }
    if measure.shape == SHAPE_GENERAL:
        body["n"] = measure.nrows
    return body


def measure_from_dict(body: dict, source: str = "<measure>") -> AtomicMatrixMeasure:
    try:
        shape = body.get("shape", SHAPE_SYMMETRIC)
        nodes = np.asarray(body["nodes"], dtype=float)
        weights = np.asarray(body["weights"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"{source}: missing measure field {exc}") from exc
    d = int(body.get("d", weights.shape[-1] if weights.ndim == 3 else 0))
    if weights.ndim != 3 or weights.shape[-1] != d:
        raise ConfigError(
            f"{source}: weights must be a (k, ., d={d}) nested list, "
            f"got shape {weights.shape}"
        )
    try:
        return AtomicMatrixMeasure(
            nodes, weights, shape=shape, psd_required=bool(body.get("psd_required", False))
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def write_measure(path, measure: AtomicMatrixMeasure) -> None:
    write_sections(path, {"": measure_to_dict(measure)})


def read_measure(path) -> AtomicMatrixMeasure:
    return measure_from_dict(read_sections(path)[""], source=str(path))


# jump model files ----------------------------------------------------------

def read_jump_model(path) -> tuple[AtomicMatrixMeasure, np.ndarray, JumpMeasureSpec]:
    """Model file with [measure], [lambda0] and optional [jumps] sections."""
    sec = read_sections(path)
    if "measure" not in sec:
        raise ConfigError(f"{path}: missing [measure] section")
    measure = measure_from_dict(sec["measure"], source=f"{path}[measure]")
    lam_sec = sec.get("lambda0", {})
    if "weights" not in lam_sec:
        raise ConfigError(f"{path}: missing [lambda0] weights")
    lam0 = np.asarray(lam_sec["weights"], dtype=float)
    if lam0.shape != measure.weights.shape:
        raise ConfigError(
            f"{path}: lambda0 weights shape {lam0.shape} does not match "
            f"measure weights shape {measure.weights.shape}"
        )
    jumps = sec.get("jumps", {})
    d = measure.d
    try:
        spec = JumpMeasureSpec(
            atoms=np.asarray(jumps.get("atoms", np.zeros((0, d, d))), dtype=float),
            weights=np.asarray(jumps.get("weights", np.zeros((0, d, d))), dtype=float),
            epsilon_shift=float(jumps.get("epsilon", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}[jumps]: {exc}") from exc
    return measure, lam0, spec


# price model files ----------------------------------------------------------

def read_heston_model(path) -> HestonModelSpec:
    """Model file with [measure], [gamma0] and [price] sections."""
    sec = read_sections(path)
    for name in ("measure", "gamma0", "price"):
        if name not in sec:
            raise ConfigError(f"{path}: missing [{name}] section")
    measure = measure_from_dict(sec["measure"], source=f"{path}[measure]")
    g_sec = sec["gamma0"]
    if "weights" not in g_sec:
        raise ConfigError(f"{path}: missing [gamma0] weights")
    gamma0 = np.asarray(g_sec["weights"], dtype=float)
    price = sec["price"]
    d = measure.d
    try:
        return HestonModelSpec(
            measure=measure,
            gamma0=gamma0,
            rho=np.asarray(price.get("rho", np.zeros(d)), dtype=float),
            p0=np.asarray(price.get("p0", np.zeros(d)), dtype=float),
            jump_atoms=np.asarray(price["jump_atoms"], dtype=float)
            if "jump_atoms" in price and len(price["jump_atoms"])
            else None,
            jump_weights=np.asarray(price["jump_weights"], dtype=float)
            if "jump_weights" in price and len(price.get("jump_weights", []))
            else None,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def heston_model_to_sections(model: HestonModelSpec) -> dict[str, dict]:
    sec = {
        "measure": measure_to_dict(model.measure),
        "gamma0": {"weights": model.gamma0.tolist()},
        "price": {
            "rho": model.rho.tolist(),
            "p0": model.p0.tolist(),
        },
    }
    if model.n_jumps:
        sec["price"]["jump_atoms"] = model.jump_atoms.tolist()
        sec["price"]["jump_weights"] = model.jump_weights.tolist()
    return sec


# CSV helpers ----------------------------------------------------------------

def format_csv(header: list[str], rows) -> str:
    """CSV with a mandatory header row, '.' decimal separators via repr."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, (float, np.floating)):
                cells.append(repr(float(x)))
            elif isinstance(x, (int, np.integer)):
                cells.append(str(int(x)))
            else:
                cells.append(str(x))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") from exc
