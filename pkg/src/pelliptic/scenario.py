"""Scenario configuration: a single TOML file describing grid, coefficient
matrix, potential, boundary condition, Bellman parameters, the suites to
run, the seed, and a pass/fail expectation for regression cases."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .bellman import BellmanParams
from .operators import BoundaryCondition, Grid
from .presets import matrix_from_config, potential_from_config

ALL_SUITES = ("ellipticity", "bellman", "subcritical", "semigroup", "bilinear")


@dataclass
class Scenario:
    name: str
    grid: Grid
    A: object
    V: object
    bc: BoundaryCondition
    params: BellmanParams
    suites: tuple
    seed: int
    expect: str = "pass"
    options: dict = dc_field(default_factory=dict)
    raw: dict = dc_field(default_factory=dict)

    @staticmethod
    def from_dict(cfg: dict) -> "Scenario":
        for key in ("grid",):
            if key not in cfg:
                raise ValueError(f"scenario config is missing the [{key}] table")
        gcfg = cfg["grid"]
        grid = Grid(gcfg["shape"], gcfg.get("extents"))
        bc = BoundaryCondition.by_name(cfg.get("bc", {}).get("preset", "dirichlet"), grid)
        A = matrix_from_config(grid, cfg.get("matrix", {}))
        V = potential_from_config(grid, cfg.get("potential", {}), bc=bc)
        bcfg = cfg.get("bellman", {})
        params = BellmanParams(float(bcfg.get("p", 3.0)), float(bcfg.get("delta", 0.05)))
        suites = tuple(cfg.get("suites", {}).get("run", list(ALL_SUITES)))
        unknown = set(suites) - set(ALL_SUITES)
        if unknown:
            raise ValueError(f"unknown suites requested: {sorted(unknown)}")
        expect = cfg.get("expect", "pass")
        if expect not in ("pass", "fail"):
            raise ValueError("expect must be 'pass' or 'fail'")
        return Scenario(
            name=str(cfg.get("name", "scenario")),
            grid=grid, A=A, V=V, bc=bc, params=params, suites=suites,
            seed=int(cfg.get("seed", 0)), expect=expect,
            options=dict(cfg.get("options", {})), raw=cfg,
        )

    @staticmethod
    def load(path) -> "Scenario":
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
        return Scenario.from_dict(cfg)


def override(cfg: dict, dotted_path: str, value):
    """Set cfg['a']['b'] = value for dotted_path 'a.b' (used by sweeps)."""
    parts = dotted_path.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return cfg
