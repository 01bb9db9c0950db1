"""Dataset and checkpoint container: manifest.json plus raw float64 arrays.

Layout: a directory holding ``manifest.json`` (UTF-8, keys in canonical
sorted order) and one file per array, 64-bit IEEE-754 little-endian,
row-major, no header. Round-trips are bit-exact. The same container stores
network checkpoints (parameter and optimizer-state arrays plus a config
echo).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError
from .field import ScalarField, SPDTensorField, TensorGrid
from .problems import ConvDiffProblem, EllipticProblem

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DatasetManifest:
    format_version: int
    family: str
    dim: int
    J: int
    n_samples: int
    master_seed: int
    space_time: bool
    time_extent: float
    arrays: dict          # name -> {"file", "shape", "dtype"}
    provenance: dict

    def validate_files(self, root: str) -> None:
        for name, entry in self.arrays.items():
            path = os.path.join(root, entry["file"])
            if not os.path.exists(path):
                raise FormatError(f"array {name!r}: file {entry['file']} missing")
            expected = 8 * int(np.prod(entry["shape"]))
            actual = os.path.getsize(path)
            if actual != expected:
                raise FormatError(
                    f"array {name!r}: expected {expected} bytes, found {actual}"
                )


def _write_array(root: str, name: str, arr: np.ndarray) -> dict:
    fname = f"{name}.f64"
    data = np.ascontiguousarray(arr, dtype="<f8")
    with open(os.path.join(root, fname), "wb") as fh:
        fh.write(data.tobytes())
    return {"file": fname, "shape": list(arr.shape), "dtype": "float64"}


def _read_array(root: str, name: str, entry: dict) -> np.ndarray:
    path = os.path.join(root, entry["file"])
    expected = 8 * int(np.prod(entry["shape"]))
    if not os.path.exists(path):
        raise FormatError(f"array {name!r}: file {entry['file']} missing")
    if os.path.getsize(path) != expected:
        raise FormatError(
            f"array {name!r}: expected {expected} bytes, found {os.path.getsize(path)}"
        )
    with open(path, "rb") as fh:
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(entry["shape"]).astype(np.float64)


def write_container(path: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write arrays plus metadata as one container directory."""
    os.makedirs(path, exist_ok=True)
    index = {}
    for name, arr in arrays.items():
        index[name] = _write_array(path, name, np.asarray(arr, dtype=np.float64))
    manifest = dict(meta)
    manifest["format_version"] = FORMAT_VERSION
    manifest["arrays"] = index
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_container(path: str) -> tuple[dict[str, np.ndarray], dict]:
    mpath = os.path.join(path, "manifest.json")
    if not os.path.exists(mpath):
        raise FormatError(f"no manifest.json under {path}")
    with open(mpath, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(
            f"unsupported format_version {manifest.get('format_version')!r}"
        )
    arrays = {
        name: _read_array(path, name, entry)
        for name, entry in manifest.get("arrays", {}).items()
    }
    return arrays, manifest


def _problem_arrays(problems) -> dict[str, np.ndarray]:
    if not problems:
        return {}
    first = problems[0]
    arrays: dict[str, np.ndarray] = {}
    if isinstance(first, ConvDiffProblem):
        arrays["f"] = np.stack([p.f.values for p in problems])
        arrays["phi"] = np.stack([p.phi.values for p in problems])
        arrays["exact_solution"] = np.stack([p.exact_solution.values for p in problems])
        arrays["a_speed"] = np.array([p.a for p in problems])
        return arrays
    if first.scalar_diffusion:
        arrays["a"] = np.stack([p.a.values for p in problems])
    else:
        arrays["a11"] = np.stack([p.a.a11.values for p in problems])
        arrays["a12"] = np.stack([p.a.a12.values for p in problems])
        arrays["a22"] = np.stack([p.a.a22.values for p in problems])
    arrays["b_sq"] = np.stack([p.b_sq.values for p in problems])
    arrays["f"] = np.stack([p.f.values for p in problems])
    if all(p.exact_solution is not None for p in problems):
        arrays["exact_solution"] = np.stack([p.exact_solution.values for p in problems])
    return arrays


def write_dataset(path: str, problems: list, master_seed: int = 0, extra_arrays: dict | None = None) -> None:
    """Serialize a list of problems (all from one family, one grid)."""
    if problems:
        grid = problems[0].grid
        family = getattr(problems[0], "family", "convdiff")
        if isinstance(problems[0], ConvDiffProblem):
            family = "convdiff"
        meta = {
            "family": family,
            "dim": grid.dim,
            "J": grid.level,
            "n_samples": len(problems),
            "master_seed": master_seed,
            "space_time": grid.space_time,
            "time_extent": grid.time_extent,
            "provenance": {
                "samples": [p.provenance for p in problems],
            },
        }
    else:
        meta = {
            "family": "empty",
            "dim": 0,
            "J": 0,
            "n_samples": 0,
            "master_seed": master_seed,
            "space_time": False,
            "time_extent": 1.0,
            "provenance": {"samples": []},
        }
    arrays = _problem_arrays(problems)
    if extra_arrays:
        arrays.update(extra_arrays)
    write_container(path, arrays, meta)


def read_dataset(path: str) -> tuple[list, dict[str, np.ndarray], DatasetManifest]:
    """Load problems back; returns (problems, all arrays, manifest)."""
    arrays, raw = read_container(path)
    manifest = DatasetManifest(
        format_version=raw["format_version"],
        family=raw["family"],
        dim=raw["dim"],
        J=raw["J"],
        n_samples=raw["n_samples"],
        master_seed=raw["master_seed"],
        space_time=raw.get("space_time", False),
        time_extent=raw.get("time_extent", 1.0),
        arrays=raw["arrays"],
        provenance=raw.get("provenance", {}),
    )
    problems = []
    if manifest.n_samples == 0:
        return problems, arrays, manifest
    sample_prov = manifest.provenance.get("samples", [{}] * manifest.n_samples)
    if manifest.family == "convdiff":
        grid = TensorGrid(dim=1, level=manifest.J, space_time=True, time_extent=manifest.time_extent)
        sgrid = TensorGrid(dim=1, level=manifest.J)
        for i in range(manifest.n_samples):
            problems.append(
                ConvDiffProblem(
                    grid=grid,
                    a=float(arrays["a_speed"][i]),
                    f=ScalarField(grid, arrays["f"][i]),
                    phi=ScalarField(sgrid, arrays["phi"][i]),
                    exact_solution=ScalarField(grid, arrays["exact_solution"][i]),
                    provenance=sample_prov[i],
                )
            )
        return problems, arrays, manifest
    grid = TensorGrid(dim=manifest.dim, level=manifest.J)
    for i in range(manifest.n_samples):
        if "a" in arrays:
            a = ScalarField(grid, arrays["a"][i])
        else:
            a = SPDTensorField(
                grid,
                ScalarField(grid, arrays["a11"][i]),
                ScalarField(grid, arrays["a12"][i]),
                ScalarField(grid, arrays["a22"][i]),
            )
        exact = None
        if "exact_solution" in arrays:
            exact = ScalarField(grid, arrays["exact_solution"][i])
        problems.append(
            EllipticProblem(
                grid=grid,
                a=a,
                b_sq=ScalarField(grid, arrays["b_sq"][i]),
                f=ScalarField(grid, arrays["f"][i]),
                exact_solution=exact,
                family=manifest.family,
                provenance=sample_prov[i],
            )
        )
    return problems, arrays, manifest


def append_arrays(path: str, new_arrays: dict[str, np.ndarray]) -> None:
    """Add arrays to an existing container, updating its manifest."""
    arrays, raw = read_container(path)
    index = dict(raw["arrays"])
    for name, arr in new_arrays.items():
        index[name] = _write_array(path, name, np.asarray(arr, dtype=np.float64))
    raw["arrays"] = index
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(raw, fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path: str, modules: dict, config_echo: dict, optimizer_arrays: dict | None = None) -> None:
    """Store module parameters (and optional optimizer state) as a container."""
    import torch

    arrays = {}
    shapes = {}
    for mod_name, mod in modules.items():
        if isinstance(mod, torch.Tensor):
            arrays[f"{mod_name}"] = mod.detach().numpy()
            continue
        for pname, p in mod.state_dict().items():
            key = f"{mod_name}.{pname}"
            arrays[key] = p.detach().numpy()
            shapes[key] = list(p.shape)
    if optimizer_arrays:
        for k, arr in optimizer_arrays.items():
            arrays[f"opt.{k}"] = arr
    write_container(path, arrays, {"kind": "checkpoint", "config": config_echo,
                                   "family": "checkpoint", "dim": 0, "J": 0,
                                   "n_samples": 0, "master_seed": 0,
                                   "space_time": False, "time_extent": 1.0,
                                   "provenance": {}})


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    arrays, raw = read_container(path)
    return arrays, raw.get("config", {})
