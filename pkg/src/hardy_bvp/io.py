"""Run configuration parsing and file output for the command-line tool."""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .coefficients import (CoefficientField, complex_array, identity, jacobian_coefficients,
                           random_coefficients)
from .errors import ConfigError
from .lattice import FrequencyLattice
from .report import jsonable

WHICH_CHOICES = ("neu", "reg", "dir", "neuperp", "tan", "nor")


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _resolve(base, path):
    p = Path(path)
    return p if p.is_absolute() else Path(base) / p


def parse_coefficients(spec, base="."):
    """Coefficients from an inline dict, a path to a JSON file, or "identity".

    Inline forms: {"kind": "constant", "n", "m", "matrix"},
    {"kind": "grid", "n", "m", "samples"}, {"kind": "jacobian", "g": [...]}
    (grid samples of the graph function), {"kind": "jacobian", "amplitude": a,
    "mode": k, "N": N} for g = a sin(k x), {"kind": "identity", "n", "m"} and
    {"kind": "random", "n", "m", "N", "seed", "structure", "kappa"} for a
    seeded random accretive field (constant when N is omitted).
    Complex entries are [re, im] pairs or plain reals.
    """
    if isinstance(spec, str):
        path = _resolve(base, spec)
        return parse_coefficients(load_json(path), path.parent)
    if not isinstance(spec, dict):
        raise ConfigError("coefficients must be an object or a path")
    if "path" in spec:
        return parse_coefficients(str(spec["path"]), base)
    kind = spec.get("kind", "constant")
    if kind == "identity":
        return identity(int(spec.get("n", 1)), int(spec.get("m", 1)))
    if kind == "jacobian":
        if "g" in spec:
            g = np.asarray(spec["g"], dtype=float)
        else:
            N = int(spec.get("N", 64))
            x = FrequencyLattice(1, N).points.reshape(-1)
            g = float(spec.get("amplitude", 0.3)) * np.sin(int(spec.get("mode", 1)) * x)
        return jacobian_coefficients(g)
    if kind == "random":
        N = spec.get("N")
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return random_coefficients(rng, int(spec.get("n", 1)), int(spec.get("m", 1)),
                                   "grid" if N else "constant", int(N) if N else None,
                                   kappa=float(spec.get("kappa", 0.3)),
                                   structure=spec.get("structure", "general"))
    return CoefficientField.from_dict(spec)


def _grid_points(lattice):
    return lattice.points.reshape(lattice.shape + (lattice.n,))


def parse_data(spec, lattice, components, base="."):
    """Boundary data of shape (components, *grid).

    Accepted forms: {"terms": [{"component": c, "mode": [k...], "amplitude":
    a, "type": "cos" | "sin" | "exp"}]}, {"samples": nested list},
    {"csv": path} in the field-dump layout.
    """
    if spec is None:
        raise ConfigError("boundary data missing")
    shape = (components,) + lattice.shape
    if "samples" in spec:
        return complex_array(spec["samples"], shape)
    if "csv" in spec:
        return read_field_csv(_resolve(base, spec["csv"]), lattice, components)
    if "terms" in spec:
        out = np.zeros(shape, dtype=complex)
        P = _grid_points(lattice)
        for term in spec["terms"]:
            c = int(term.get("component", 0))
            if not 0 <= c < components:
                raise ConfigError(f"data component {c} out of range 0..{components - 1}")
            mode = np.asarray(term.get("mode", [1] + [0] * (lattice.n - 1)), dtype=float)
            if mode.shape != (lattice.n,):
                raise ConfigError(f"mode must have {lattice.n} entries")
            amp = term.get("amplitude", 1.0)
            amp = complex(*amp) if isinstance(amp, list) else complex(amp)
            phase = P @ mode
            kind = term.get("type", "cos")
            if kind not in ("cos", "sin", "exp"):
                raise ConfigError(f"unknown data term type {kind!r}")
            wave = {"cos": np.cos, "sin": np.sin, "exp": lambda p: np.exp(1j * p)}[kind](phase)
            out[c] += amp * wave
        return out
    raise ConfigError("data needs one of 'terms', 'samples' or 'csv'")


def field_csv_header(lattice, components):
    cols = [f"x{i}" for i in range(lattice.n)]
    for c in range(components):
        cols += [f"re_{c}", f"im_{c}"]
    return cols


def write_field_csv(path, values, lattice, digits=9):
    """One row per grid point (C order): coordinates then re/im per component.

    Entries below 1e-13 of the largest magnitude are written as zero so that
    rounding noise does not leak into the files.
    """
    values = np.asarray(values, dtype=complex)
    comps = values.shape[0]
    flat = values.reshape(comps, -1).copy()
    floor = 1e-13 * max(np.abs(flat).max(), 1e-300)
    flat.real[np.abs(flat.real) < floor] = 0.0
    flat.imag[np.abs(flat.imag) < floor] = 0.0
    pts = lattice.points
    fmt = f"{{:.{digits}e}}"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(field_csv_header(lattice, comps))
        for i in range(flat.shape[1]):
            row = [fmt.format(p) for p in pts[i]]
            for c in range(comps):
                v = flat[c, i]
                row += [fmt.format(_clean(v.real)), fmt.format(_clean(v.imag))]
            w.writerow(row)


def _clean(x):
    # avoid "-0.0" style differences between runs
    return 0.0 if x == 0 else float(x)


def read_field_csv(path, lattice, components):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise ConfigError(f"data file not found: {path}") from None
    if len(rows) != lattice.size:
        raise ConfigError(f"{path}: expected {lattice.size} rows, found {len(rows)}")
    out = np.zeros((components, lattice.size), dtype=complex)
    try:
        for i, row in enumerate(rows):
            for c in range(components):
                out[c, i] = complex(float(row[f"re_{c}"]), float(row.get(f"im_{c}", 0.0) or 0.0))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing column {exc}") from None
    return out.reshape((components,) + lattice.shape)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_two_column(path, xs, ys, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{float(x):.10g} {float(y):.10g}\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)


def check_tolerances(cfg):
    tol = cfg.get("tolerances", {})
    for key, val in tol.items():
        if not isinstance(val, (int, float)) or val <= 0:
            raise ConfigError(f"tolerance {key!r} must be positive")
    return tol
