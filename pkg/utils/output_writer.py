"""CSV and JSON writers for run artifacts."""

import csv
import json
import logging
import os
import platform
from dataclasses import asdict, is_dataclass
from importlib import metadata
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PACKAGE_NAME     = "coagfrag-lab"
FALLBACK_VERSION = "0.1.0"


def artifact_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return FALLBACK_VERSION


def format_float(value: float) -> str:
    return f"{float(value):.17g}"


def _cell(value: Any) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug("wrote %s", path)
    return path


def to_jsonable(value: Any) -> Any:
    """Plain Python types for json; non-finite floats become None."""
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


def write_json(path: str, payload: Any) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as file:
        json.dump(to_jsonable(payload), file, indent=2, sort_keys=False, allow_nan=False)
        file.write("\n")
    logger.debug("wrote %s", path)
    return path


def write_metadata(out_dir: str, command: str, resolved_config: Dict[str, Any],
                   threads: Optional[int], extra: Optional[Dict[str, Any]] = None) -> str:
    payload = {
            "command"  : command,
            "version"  : artifact_version(),
            "threads"  : threads,
            "python"   : platform.python_version(),
            "numpy"    : np.__version__,
            "config"   : resolved_config,
    }
    if extra:
        payload.update(extra)
    return write_json(os.path.join(out_dir, "metadata.json"), payload)


def write_trajectory_csv(traj, path: str, k_export: int = 32) -> str:
    """t, m0, m1, m2, gel_mass, rho_1..rho_K."""
    k = min(k_export, traj.snapshots[0].truncation_n) if len(traj) else k_export
    header = ["t", "m0", "m1", "m2", "gel_mass"] + [f"rho_{l}" for l in range(1, k + 1)]
    rows = (
            [t, mom.m0, mom.m1, mom.m2, snap.gel_mass, *snap.densities[:k]]
            for t, mom, snap in zip(traj.times, traj.moments, traj.snapshots)
    )
    return write_csv(path, header, rows)


def write_moments_csv(traj, path: str) -> str:
    defect = traj.mass_defect()
    header = ["t", "m0", "m1", "m2", "gel_mass", "gel_flux", "mass_defect"]
    rows = (
            [t, mom.m0, mom.m1, mom.m2, snap.gel_mass, flux, err]
            for t, mom, snap, flux, err in zip(traj.times, traj.moments, traj.snapshots,
                                               traj.gel_flux_series, defect)
    )
    return write_csv(path, header, rows)


def write_hj_snapshots_csv(snapshots, path: str) -> str:
    """node, value, time for every snapshot of an HJ run."""
    rows: List[List[float]] = []
    for state in snapshots:
        rows.extend([node, value, state.time] for node, value in zip(state.grid.nodes, state.grid.values))
    return write_csv(path, ["node", "value", "time"], rows)


def write_equilibrium_csv(table, path: str) -> str:
    return write_csv(path, ["l", "rho_tilde"], zip(range(1, table.length_l + 1), table.values))


def write_series_csv(path: str, columns: Dict[str, Sequence[float]]) -> str:
    """Equal-length named columns, e.g. a residual series against time."""
    names = list(columns)
    return write_csv(path, names, zip(*(columns[n] for n in names)))
