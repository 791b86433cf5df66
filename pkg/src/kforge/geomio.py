"""Run configuration, mesh and field export, deterministic JSON output."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .grid import GridSpec, worker_count
from .immersion import ImmersionMap, gauss_kronecker_field
from .profile import ProfileParams, validate_params

__all__ = [
    "RunConfig",
    "ConfigError",
    "export_obj",
    "read_obj",
    "dump_json",
    "worker_count",
]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    profile: ProfileParams = field(default_factory=ProfileParams)
    # single-ball perturbation
    ball_angle: float = 0.0
    ball_radius: float = 0.15
    l0: float = 1.0
    alpha0: Optional[float] = None
    t_init: Optional[float] = None
    # Cantor plan
    depth: int = 3
    ratio: float = 0.04
    delta0: float = 0.15
    base_arc: Optional[float] = None
    # grids and tolerances
    nu: int = 512
    nv: int = 256
    cantor_nu: int = 1024
    cantor_nv: int = 256
    zero_tol: float = 1e-10
    out_dir: str = "."

    def __post_init__(self):
        if isinstance(self.profile, dict):
            self.profile = ProfileParams(**self.profile)

    @property
    def alpha0_value(self) -> float:
        p = self.profile
        return p.alpha + 0.1 * (p.beta - p.alpha) if self.alpha0 is None else self.alpha0

    def grid(self) -> GridSpec:
        return GridSpec(self.nu, self.nv)

    def cantor_grid(self) -> GridSpec:
        return GridSpec(self.cantor_nu, self.cantor_nv)

    def validate(self) -> list[str]:
        out = validate_params(self.profile)
        p = self.profile
        if not p.alpha < self.alpha0_value < p.beta:
            out.append(f"alpha<alpha0<beta fails (alpha0={self.alpha0_value})")
        if not self.l0 > 0:
            out.append(f"l0>0 fails (l0={self.l0})")
        if not 0 < self.ball_radius <= self.delta0:
            out.append(f"0<radius<=delta0 fails (radius={self.ball_radius}, delta0={self.delta0})")
        if self.depth < 1:
            out.append(f"depth>=1 fails (depth={self.depth})")
        if not 0 < self.ratio < 1:
            out.append(f"0<ratio<1 fails (ratio={self.ratio})")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["profile"] = self.profile.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "profile" in d:
            prof = dict(d["profile"])
            pk = {f.name for f in fields(ProfileParams)}
            bad = set(prof) - pk
            if bad:
                raise ConfigError(f"unknown profile keys: {sorted(bad)}")
            d["profile"] = ProfileParams(**prof)
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def dump_json(obj, path) -> None:
    """Sorted keys and round-trip float repr give byte-identical reruns."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def export_obj(m: ImmersionMap, grid: GridSpec, path, field_path=None) -> tuple[Path, Path]:
    """ASCII OBJ of the grid image (quads wrapped in u) plus a per-vertex H_n CSV."""
    if m.n != 2:
        raise ValueError("mesh export needs a surface in R^3 (n = 2)")
    path = Path(path)
    field_path = Path(field_path) if field_path else path.with_name(path.stem + "_H.csv")
    pts = grid.points()
    X = m.evaluate(pts.reshape(-1, 2))
    H = gauss_kronecker_field(m, pts).reshape(-1)
    nu, nv = grid.nu, grid.nv

    def vid(i, j):
        return i * nv + j + 1

    with open(path, "w") as fh:
        fh.write(f"# {nu}x{nv} chart grid, u wrapped\n")
        for x in X:
            fh.write("v {:.17g} {:.17g} {:.17g}\n".format(*x))
        for i in range(nu):
            i2 = (i + 1) % nu
            for j in range(nv - 1):
                fh.write(f"f {vid(i, j)} {vid(i2, j)} {vid(i2, j + 1)} {vid(i, j + 1)}\n")
    with open(field_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("vertex", "u", "v", "H"))
        for idx, ((u, v), h) in enumerate(zip(pts.reshape(-1, 2), H), start=1):
            w.writerow((idx, format(u, ".17g"), format(v, ".17g"), format(h, ".17g")))
    return path, field_path


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) for x in parts[1:]])
    return np.array(verts), np.array(faces, dtype=int)
