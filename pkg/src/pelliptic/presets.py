"""Named presets for matrix fields, potentials, and boundary masks.

Each preset carries a parameter schema so the CLI can enumerate them.
Extra presets can be dropped into a plugin directory (env var
``PELLIPTIC_PRESET_PATH``); plugin modules call the ``register_*`` hooks
at import time.
"""

from __future__ import annotations

import importlib.util
import os
import sys

import numpy as np

from .ellipticity import MatrixField
from .potentials import Potential, hardy_preset

MATRIX_PRESETS: dict = {}
POTENTIAL_PRESETS: dict = {}
BC_PRESETS: dict = {}


def register_matrix(name: str, schema: dict):
    def deco(fn):
        MATRIX_PRESETS[name] = {"fn": fn, "schema": schema}
        return fn
    return deco


def register_potential(name: str, schema: dict):
    def deco(fn):
        POTENTIAL_PRESETS[name] = {"fn": fn, "schema": schema}
        return fn
    return deco


@register_matrix("identity", {})
def _identity(grid, **kw):
    return MatrixField(np.eye(grid.dim), grid=grid)


@register_matrix("phase", {"gamma": "rotation angle of the scalar factor e^{i gamma} (rad)"})
def _phase(grid, gamma: float = 0.3, **kw):
    return MatrixField(np.exp(1j * gamma) * np.eye(grid.dim), grid=grid)


@register_matrix("rotation", {"kappa": "antisymmetric off-diagonal strength (2D)"})
def _rotation(grid, kappa: float = 0.5, **kw):
    if grid.dim != 2:
        raise ValueError("rotation(kappa) is a 2D preset")
    return MatrixField(np.array([[1.0, kappa], [-kappa, 1.0]]), grid=grid)


@register_matrix("shear", {"s": "shear strength", "phase": "phase of the shear entry (rad)"})
def _shear(grid, s: float = 0.5, phase: float = 0.0, **kw):
    if grid.dim != 2:
        raise ValueError("shear(s, phase) is a 2D preset")
    return MatrixField(np.array([[1.0, s * np.exp(1j * phase)], [0.0, 1.0]]), grid=grid)


@register_matrix("constant", {"entries": "d x d nested list of [re, im] pairs"})
def _constant(grid, entries=None, **kw):
    if entries is None:
        raise ValueError("constant preset requires entries")
    arr = np.asarray(entries, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError("entries must be a d x d list of [re, im] pairs")
    return MatrixField(arr[..., 0] + 1j * arr[..., 1], grid=grid)


@register_potential("zero", {})
def _zero(grid, bc=None, **kw):
    return Potential.zero(grid)


@register_potential("hardy", {"power": "exponent of the inverse distance",
                              "target": "'bc' (the Dirichlet set) or 'full' boundary"})
def _hardy(grid, power: float = 2.0, target: str = "full", bc=None, **kw):
    if target == "bc":
        if bc is None or not np.any(bc.dirichlet_mask):
            raise ValueError("hardy target 'bc' needs a nonempty Dirichlet set")
        D = np.asarray(bc.dirichlet_mask, dtype=bool)
    else:
        D = grid.boundary_nodes()
    return hardy_preset(grid, D, power)


def _box_mask(grid, region):
    region = np.asarray(region, dtype=float).reshape(grid.dim, 2)
    mask = np.ones(grid.nnodes, dtype=bool)
    for ax in range(grid.dim):
        lo, hi = grid.extents[ax]
        a = lo + (hi - lo) * region[ax, 0]
        b = lo + (hi - lo) * region[ax, 1]
        x = grid.coords[:, ax]
        mask &= (x >= a) & (x <= b)
    return mask


@register_potential("well", {"depth": "depth of the negative square well",
                             "region": "per-axis fractional box [[lo, hi], ...]"})
def _well(grid, depth: float = 1.0, region=None, bc=None, **kw):
    region = region if region is not None else [[0.4, 0.6]] * grid.dim
    vminus = depth * _box_mask(grid, region).astype(float)
    return Potential(grid, np.zeros(grid.nnodes), vminus)


@register_potential("ridge", {"height": "height of the positive plateau",
                              "region": "per-axis fractional box [[lo, hi], ...]"})
def _ridge(grid, height: float = 1.0, region=None, bc=None, **kw):
    region = region if region is not None else [[0.1, 0.3]] * grid.dim
    vplus = height * _box_mask(grid, region).astype(float)
    return Potential(grid, vplus, np.zeros(grid.nnodes))


@register_potential("coulomb-like", {"c": "strength", "center": "singularity location",
                                     "cap": "pointwise cap on the value"})
def _coulomb(grid, c: float = 1.0, center=None, cap: float = 1e4, bc=None, **kw):
    center = np.asarray(center if center is not None else
                        [0.5 * (a + b) for a, b in grid.extents], dtype=float)
    r = np.linalg.norm(grid.coords - center[None, :], axis=1)
    vminus = np.minimum(c / np.maximum(r, 1e-300), cap)
    return Potential(grid, np.zeros(grid.nnodes), vminus)


@register_potential("csv", {"path": "CSV file with one node value per row"})
def _csv(grid, path=None, bc=None, **kw):
    if path is None:
        raise ValueError("csv preset requires a path")
    values = np.loadtxt(path, delimiter=",", ndmin=1).ravel()
    return Potential.from_values(grid, values)


BC_PRESETS.update({
    "dirichlet": {"schema": {}},
    "neumann": {"schema": {}},
    "mixed-left-edge": {"schema": {}},
})

_plugins_loaded = False


def load_plugins():
    """Import preset plugins from PELLIPTIC_PRESET_PATH (idempotent)."""
    global _plugins_loaded
    if _plugins_loaded:
        return
    _plugins_loaded = True
    path = os.environ.get("PELLIPTIC_PRESET_PATH")
    if not path or not os.path.isdir(path):
        return
    for fname in sorted(os.listdir(path)):
        if not fname.endswith(".py"):
            continue
        spec = importlib.util.spec_from_file_location(
            f"pelliptic_plugin_{fname[:-3]}", os.path.join(path, fname))
        mod = importlib.util.module_from_spec(spec)
        sys.modules[spec.name] = mod
        spec.loader.exec_module(mod)


def matrix_from_config(grid, cfg: dict) -> MatrixField:
    load_plugins()
    cfg = dict(cfg)
    name = cfg.pop("preset", "identity")
    if name not in MATRIX_PRESETS:
        raise ValueError(f"unknown matrix preset {name!r}")
    return MATRIX_PRESETS[name]["fn"](grid, **cfg)


def potential_from_config(grid, cfg: dict, bc=None) -> Potential:
    load_plugins()
    cfg = dict(cfg)
    terms = cfg.pop("terms", None)
    if terms is not None:
        total = np.zeros(grid.nnodes)
        for term in terms:
            total = total + potential_from_config(grid, term, bc=bc).values
        return Potential.from_values(grid, total)
    name = cfg.pop("preset", "zero")
    if name not in POTENTIAL_PRESETS:
        raise ValueError(f"unknown potential preset {name!r}")
    return POTENTIAL_PRESETS[name]["fn"](grid, bc=bc, **cfg)


def describe_presets() -> str:
    load_plugins()
    lines = ["matrix presets:"]
    for name, entry in sorted(MATRIX_PRESETS.items()):
        args = ", ".join(f"{k}: {v}" for k, v in entry["schema"].items()) or "no parameters"
        lines.append(f"  {name}({args})")
    lines.append("potential presets:")
    for name, entry in sorted(POTENTIAL_PRESETS.items()):
        args = ", ".join(f"{k}: {v}" for k, v in entry["schema"].items()) or "no parameters"
        lines.append(f"  {name}({args})")
    lines.append("boundary presets:")
    for name in sorted(BC_PRESETS):
        lines.append(f"  {name}")
    return "\n".join(lines)
