"""Command-line case runner for enclosure radiation problems.

Three subcommands cover the workflow. `generate` writes a mesh-plus-grid
file for one of the builtin benchmark enclosures. `run` executes a full
case from a JSON config: assembly, solvability screening, the outer
iteration, the oracle suite, and CSV emission of line profiles, the
convergence history, and the oracle table. `validate` runs the
geometry-level oracle checks on a mesh without solving.

Builtin enclosures:

* cube: unit box, black walls, the floor held hot and every other wall
  cold. The classic pure-scattering benchmark runs on this geometry.
* lshape: a 1 x 3 x 3 box with the top of the far arm notched away,
  leaving an L cross-section (full height over the first meter, height 2
  beyond it). Black walls at 500 K around a 1000 K medium.

Profiles sample the nearest collocation entity (boundary flux node for q,
interior cell center for G) with no interpolation, so rerunning a config
reproduces output byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ritesolver.assembly import (
    Assembler,
    collocation_points,
    write_matrix,
)
from ritesolver.geometry import (
    SurfaceMesh,
    VoxelGrid,
    load_mesh,
    points_in_mesh,
    write_mesh_file,
)
from ritesolver.kernels import RadiativeProperties
from ritesolver.solver import SolverConfig, solvability_margin, solve_rites
from ritesolver.validation import (
    DEFAULT_ORACLE_SEED,
    report_table,
    standard_suite,
    visibility_report_check,
    write_report_csv,
)
from ritesolver.visibility import EARLY_BLOCKED, SubdivisionBudget

__all__ = [
    "BUILTIN_CASES",
    "CaseConfig",
    "ConfigError",
    "LineOutsideDomain",
    "ProfileSpec",
    "RunResult",
    "builtin_case",
    "emit_profile",
    "generate_case",
    "main",
    "run_case",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent case configuration."""


class LineOutsideDomain(ValueError):
    """A profile line leaves the region its quantity is defined on."""


# ---------------------------------------------------------------------------
# Builtin enclosures


def _mesh_panels(panels, resolution: int):
    """Mesh axis-aligned rectangular panels into a conforming quad surface.

    Each panel is (axis, value, a_axis, b_axis, a_lo, a_hi, b_lo, b_hi,
    epsilon, temperature) with the in-plane axes ordered so that
    unit(a) x unit(b) points inward. resolution counts elements per unit
    length; panel extents must be integer multiples of 1/resolution for
    neighboring panels to share nodes exactly.
    """
    nodes: list[tuple] = []
    index: dict[tuple, int] = {}

    def node_id(p):
        key = tuple(round(c, 9) for c in p)
        i = index.get(key)
        if i is None:
            i = len(nodes)
            index[key] = i
            nodes.append(key)
        return i

    records = []
    for ax, val, a, b, a_lo, a_hi, b_lo, b_hi, eps, temp in panels:
        na = max(1, round((a_hi - a_lo) * resolution))
        nb = max(1, round((b_hi - b_lo) * resolution))
        da = (a_hi - a_lo) / na
        db = (b_hi - b_lo) / nb
        for i in range(na):
            for j in range(nb):
                quad = []
                for ii, jj in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
                    p = [0.0, 0.0, 0.0]
                    p[ax] = val
                    p[a] = a_lo + ii * da
                    p[b] = b_lo + jj * db
                    quad.append(node_id(tuple(p)))
                records.append({"nodes": quad, "epsilon": eps, "T": temp})
    return np.array(nodes, dtype=float), records


def _cube_case(resolution: int):
    """Unit cube, black walls, hot floor at 1000 K, everything else cold."""
    hot, cold = 1000.0, 0.0
    panels = [
        (2, 0.0, 0, 1, 0.0, 1.0, 0.0, 1.0, 1.0, hot),   # floor, +z inward
        (2, 1.0, 1, 0, 0.0, 1.0, 0.0, 1.0, 1.0, cold),  # ceiling, -z
        (1, 0.0, 2, 0, 0.0, 1.0, 0.0, 1.0, 1.0, cold),  # y = 0, +y
        (1, 1.0, 0, 2, 0.0, 1.0, 0.0, 1.0, 1.0, cold),  # y = 1, -y
        (0, 0.0, 1, 2, 0.0, 1.0, 0.0, 1.0, 1.0, cold),  # x = 0, +x
        (0, 1.0, 2, 1, 0.0, 1.0, 0.0, 1.0, 1.0, cold),  # x = 1, -x
    ]
    nodes, records = _mesh_panels(panels, resolution)
    n = resolution
    grid = {
        "origin": [0.0, 0.0, 0.0],
        "spacing": [1.0 / n] * 3,
        "dims": [n, n, n],
        "T": [0.0] * n**3,
    }
    return nodes, records, grid


def _lshape_case(resolution: int):
    """The L-shaped enclosure: 1 x 3 x 3 with the far arm capped at height 2.

    Cross-section in (y, z): full height 3 over y in [0, 1], height 2 over
    y in [1, 3]. Ten rectangular panels close the surface. Black walls at
    500 K; the grid covers the bounding box and marks the notch cells by
    lying outside the mesh (they carry no unknowns).
    """
    wall, medium = 500.0, 1000.0
    eps = 1.0
    panels = [
        (0, 0.0, 1, 2, 0.0, 1.0, 0.0, 3.0, eps, wall),  # x = 0 tall strip, +x
        (0, 0.0, 1, 2, 1.0, 3.0, 0.0, 2.0, eps, wall),  # x = 0 long strip, +x
        (0, 1.0, 2, 1, 0.0, 3.0, 0.0, 1.0, eps, wall),  # x = 1 tall strip, -x
        (0, 1.0, 2, 1, 0.0, 2.0, 1.0, 3.0, eps, wall),  # x = 1 long strip, -x
        (2, 0.0, 0, 1, 0.0, 1.0, 0.0, 3.0, eps, wall),  # floor, +z
        (2, 3.0, 1, 0, 0.0, 1.0, 0.0, 1.0, eps, wall),  # high ceiling, -z
        (2, 2.0, 1, 0, 1.0, 3.0, 0.0, 1.0, eps, wall),  # low ceiling, -z
        (1, 0.0, 2, 0, 0.0, 3.0, 0.0, 1.0, eps, wall),  # y = 0 end, +y
        (1, 3.0, 0, 2, 0.0, 1.0, 0.0, 2.0, eps, wall),  # y = 3 end, -y
        (1, 1.0, 0, 2, 0.0, 1.0, 2.0, 3.0, eps, wall),  # notch face, -y
    ]
    nodes, records = _mesh_panels(panels, resolution)
    n = resolution
    dims = [n, 3 * n, 3 * n]
    grid = {
        "origin": [0.0, 0.0, 0.0],
        "spacing": [1.0 / n] * 3,
        "dims": dims,
        "T": [medium] * (dims[0] * dims[1] * dims[2]),
    }
    return nodes, records, grid


BUILTIN_CASES = {"cube": _cube_case, "lshape": _lshape_case}


def builtin_case(kind: str, resolution: int) -> tuple[SurfaceMesh, VoxelGrid]:
    """In-memory mesh and grid for a builtin enclosure.

    Goes through the same construction as the generated file, including the
    node-temperature averaging of the file loader, so library use and file
    use agree exactly.
    """
    import tempfile

    if resolution < 1:
        raise ConfigError(f"resolution must be at least 1, got {resolution}")
    try:
        build = BUILTIN_CASES[kind.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown builtin case {kind!r}; choose from {sorted(BUILTIN_CASES)}"
        ) from None
    nodes, records, grid = build(resolution)
    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        path = fh.name
    try:
        write_mesh_file(path, nodes, records, grid)
        return load_mesh(path)
    finally:
        Path(path).unlink(missing_ok=True)


def generate_case(kind: str, resolution: int, out_dir) -> Path:
    """Write the mesh-plus-grid file for a builtin enclosure; returns its path."""
    if resolution < 1:
        raise ConfigError(f"resolution must be at least 1, got {resolution}")
    try:
        build = BUILTIN_CASES[kind.lower()]
    except KeyError:
        raise ConfigError(
            f"unknown builtin case {kind!r}; choose from {sorted(BUILTIN_CASES)}"
        ) from None
    nodes, records, grid = build(resolution)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{kind.lower()}_r{resolution}.json"
    write_mesh_file(path, nodes, records, grid)
    return path


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ProfileSpec:
    """One sampled line: where it runs, how densely, and what it reads."""

    name: str
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    samples: int
    quantity: str  # "q" or "G"

    def __post_init__(self):
        if self.samples < 2:
            raise ConfigError(f"profile {self.name!r}: need at least 2 samples, got {self.samples}")
        if self.quantity not in ("q", "G"):
            raise ConfigError(f"profile {self.name!r}: quantity must be 'q' or 'G', got {self.quantity!r}")
        if not np.all(np.isfinite(self.start)) or not np.all(np.isfinite(self.end)):
            raise ConfigError(f"profile {self.name!r}: endpoints must be finite")


_CONFIG_KEYS = {
    "mesh", "sigma_a", "sigma_s", "sigma_sb", "tolerance", "max_iterations",
    "min_area_fraction", "max_depth", "min_area", "quad_order", "threads",
    "use_culls", "output", "seed", "dump_matrices", "dump_visibility",
    "reference_temperature", "profiles",
}


@dataclass(frozen=True)
class CaseConfig:
    """Fully resolved case description; the echoed form reruns identically."""

    mesh: str
    sigma_a: float
    sigma_s: float
    sigma_sb: float | None = None
    tolerance: float = 1e-8
    max_iterations: int = 200
    min_area_fraction: float = 1e-4
    max_depth: int = 8
    min_area: float | None = None
    quad_order: int = 2
    threads: int = 1
    use_culls: bool = True
    output: str = "out"
    seed: int = DEFAULT_ORACLE_SEED
    dump_matrices: bool = False
    dump_visibility: bool = False
    reference_temperature: float | None = None
    profiles: tuple[ProfileSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not Path(self.mesh).is_file():
            raise ConfigError(f"mesh file does not exist: {self.mesh}")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "CaseConfig":
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("mesh", "sigma_a", "sigma_s"):
            if key not in data:
                raise ConfigError(f"config is missing required key {key!r}")
        data = dict(data)
        mesh = Path(base_dir) / str(data.pop("mesh"))
        raw_profiles = data.pop("profiles", [])
        profiles = []
        for rec in raw_profiles:
            extra = set(rec) - {"name", "start", "end", "samples", "quantity"}
            if extra:
                raise ConfigError(f"unknown profile keys: {sorted(extra)}")
            try:
                profiles.append(
                    ProfileSpec(
                        name=str(rec["name"]),
                        start=tuple(float(c) for c in rec["start"]),
                        end=tuple(float(c) for c in rec["end"]),
                        samples=int(rec["samples"]),
                        quantity=str(rec["quantity"]),
                    )
                )
            except KeyError as exc:
                raise ConfigError(f"profile record missing key {exc}") from exc
        try:
            return cls(mesh=str(mesh.resolve()), profiles=tuple(profiles), **data)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "CaseConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        out = {
            "mesh": self.mesh,
            "sigma_a": self.sigma_a,
            "sigma_s": self.sigma_s,
            "sigma_sb": self.sigma_sb,
            "tolerance": self.tolerance,
            "max_iterations": self.max_iterations,
            "min_area_fraction": self.min_area_fraction,
            "max_depth": self.max_depth,
            "min_area": self.min_area,
            "quad_order": self.quad_order,
            "threads": self.threads,
            "use_culls": self.use_culls,
            "output": self.output,
            "seed": self.seed,
            "dump_matrices": self.dump_matrices,
            "dump_visibility": self.dump_visibility,
            "reference_temperature": self.reference_temperature,
            "profiles": [
                {
                    "name": p.name,
                    "start": list(p.start),
                    "end": list(p.end),
                    "samples": p.samples,
                    "quantity": p.quantity,
                }
                for p in self.profiles
            ],
        }
        return out


# ---------------------------------------------------------------------------
# Profile emission


def emit_profile(state, collocation, grid: VoxelGrid, mesh: SurfaceMesh, spec: ProfileSpec):
    """Sample a solved quantity along a line at the nearest entities.

    Returns an (n, 5) array of rows (s, x, y, z, value). Wall flux reads the
    nearest boundary collocation node and requires the line to stay on the
    boundary (within one element diameter of its nodes); incident energy
    reads the nearest interior cell center and requires the line inside the
    enclosure.
    """
    start = np.asarray(spec.start, dtype=float)
    end = np.asarray(spec.end, dtype=float)
    s = np.linspace(0.0, float(np.linalg.norm(end - start)), spec.samples)
    direction = end - start
    length = np.linalg.norm(direction)
    pts = start[None, :] + (s / length)[:, None] * direction[None, :] if length > 0 else (
        np.repeat(start[None, :], spec.samples, axis=0)
    )

    if spec.quantity == "q":
        # Restrict to walls whose plane carries the whole line, when any do.
        # Corner samples would otherwise tie between adjacent walls and pick
        # a winner by floating-point noise, breaking profile symmetry.
        arr = mesh.arrays()
        tol = 1e-9 * max(1.0, float(np.abs(arr.plane_offsets).max()))
        coplanar = (np.abs(arr.normals @ start - arr.plane_offsets) <= tol) & (
            np.abs(arr.normals @ end - arr.plane_offsets) <= tol
        )
        if coplanar.any():
            cand = np.nonzero(coplanar[collocation.boundary_element])[0]
        else:
            cand = np.arange(collocation.n_boundary)
        ref = collocation.boundary_points[cand]
        d2 = ((pts[:, None, :] - ref[None, :, :]) ** 2).sum(-1)
        nearest = cand[d2.argmin(axis=1)]
        dist = np.sqrt(d2[np.arange(pts.shape[0]), d2.argmin(axis=1)])
        diam = arr.diameters[collocation.boundary_element[nearest]]
        if np.any(dist > diam):
            worst = int(np.argmax(dist - diam))
            raise LineOutsideDomain(
                f"profile {spec.name!r}: sample {worst} at {pts[worst]} is "
                f"{dist[worst]:.3g} m from the nearest wall flux node"
            )
        values = state.q[nearest]
    else:
        inside = points_in_mesh(mesh, pts)
        if not inside.all():
            worst = int(np.argmin(inside))
            raise LineOutsideDomain(
                f"profile {spec.name!r}: sample {worst} at {pts[worst]} lies outside the enclosure"
            )
        ref = collocation.interior_points
        if ref.shape[0] == 0:
            raise LineOutsideDomain(f"profile {spec.name!r}: the grid has no interior cells")
        d2 = ((pts[:, None, :] - ref[None, :, :]) ** 2).sum(-1)
        nearest = d2.argmin(axis=1)
        dist = np.sqrt(d2[np.arange(pts.shape[0]), nearest])
        reach = float(np.linalg.norm(grid.spacing))
        if np.any(dist > reach):
            worst = int(np.argmax(dist))
            raise LineOutsideDomain(
                f"profile {spec.name!r}: sample {worst} at {pts[worst]} is "
                f"{dist[worst]:.3g} m from the nearest interior cell center"
            )
        values = state.incident[nearest]
    return np.column_stack([s, pts, values])


def _write_profile_csv(path, rows, spec: ProfileSpec, reference_temperature, sigma_sb):
    scale = 1.0
    unit = "W/m^2"
    if reference_temperature is not None:
        scale = sigma_sb * reference_temperature**4
        unit = "-"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["s [m]", "x [m]", "y [m]", "z [m]", f"{spec.quantity} [{unit}]"])
        for s, x, y, z, v in rows:
            writer.writerow([repr(float(c)) for c in (s, x, y, z, v / scale)])


# ---------------------------------------------------------------------------
# Case execution


@dataclass(frozen=True)
class RunResult:
    config: CaseConfig
    state: object
    reports: tuple
    output_dir: Path
    exit_code: int


def _dump_visibility_csv(path, assembler: Assembler) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["point_kind", "point_index", "active_element", "screen", "classification"])
        for (kind, pidx), outcomes in sorted(assembler._screen_cache.items()):
            for k, out in sorted(outcomes.items()):
                if out is EARLY_BLOCKED:
                    screen = "early_blocked"
                else:
                    screen = ";".join(str(i) for i in out) if out else "empty"
                cls = assembler._visibility_cache.get((kind, pidx, k))
                if cls is None:
                    label = "unvisited"
                elif isinstance(cls, str):
                    label = cls
                else:
                    label = f"partial:{cls.fraction:.6f}"
                writer.writerow([kind, pidx, k, screen, label])


def run_case(config: CaseConfig) -> RunResult:
    """Execute one configured case end to end and write all outputs.

    The exit code in the result is zero exactly when the outer iteration
    converged and every mandatory oracle passed.
    """
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)

    mesh, grid = load_mesh(config.mesh)
    sigma_sb = config.sigma_sb
    props_kwargs = {} if sigma_sb is None else {"sigma_sb": sigma_sb}
    props = RadiativeProperties(
        sigma_a=config.sigma_a,
        sigma_s=config.sigma_s,
        domain_diameter=mesh.diameter(),
        **props_kwargs,
    )
    budget = SubdivisionBudget(
        min_area=config.min_area,
        max_depth=config.max_depth,
        min_area_fraction=config.min_area_fraction,
    )
    assembler = Assembler(
        mesh,
        grid,
        budget=budget,
        base_order=config.quad_order,
        threads=config.threads,
        use_culls=config.use_culls,
    )

    eps_min = float(mesh.arrays().emissivities.min())
    margin, solvable = solvability_margin(props, eps_min)
    log.info("solvability margin %.6f (%s)", margin, "ok" if solvable else "NOT GUARANTEED")

    t0 = time.perf_counter()
    surface = assembler.assemble_surface(props)
    volume = assembler.assemble_volume(props)
    log.info("assembled %d wall rows and %d medium rows in %.1f s",
             surface.gmat.shape[0], volume.umat.shape[0], time.perf_counter() - t0)

    state = solve_rites(
        surface, volume, props,
        SolverConfig(tolerance=config.tolerance, max_iterations=config.max_iterations),
    )
    log.info("solver %s after %d iterations",
             "converged" if state.converged else "DID NOT CONVERGE", state.iterations)

    with open(out_dir / "convergence.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "residual"])
        for i, r in enumerate(state.residual_history, start=1):
            writer.writerow([i, repr(float(r))])

    reports = standard_suite(
        mesh, grid, props, state=state, collocation=assembler.collocation
    )
    table = report_table(reports)
    print(table)
    (out_dir / "oracles.txt").write_text(table + "\n", encoding="utf-8")
    write_report_csv(out_dir / "oracles.csv", reports)

    sb = props.sigma_sb
    for spec in config.profiles:
        rows = emit_profile(state, assembler.collocation, grid, mesh, spec)
        _write_profile_csv(
            out_dir / f"profile_{spec.name}.csv",
            rows, spec, config.reference_temperature, sb,
        )

    if config.dump_matrices:
        write_matrix(out_dir / "gmat.bin", surface.gmat)
        write_matrix(out_dir / "fmat.bin", surface.fmat)
        write_matrix(out_dir / "umat.bin", volume.umat)
        write_matrix(out_dir / "vmat.bin", volume.vmat)
        write_matrix(out_dir / "h.bin", surface.h[:, None])
        write_matrix(out_dir / "t.bin", volume.t[:, None])
    if config.dump_visibility:
        _dump_visibility_csv(out_dir / "visibility.csv", assembler)

    (out_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    ok = state.converged and all(r.passed for r in reports)
    return RunResult(
        config=config,
        state=state,
        reports=tuple(reports),
        output_dir=out_dir,
        exit_code=0 if ok else 1,
    )


def validate_case(config: CaseConfig, n_pairs: int = 3) -> int:
    """Geometry-level oracle run: closure identities plus sampled pair checks.

    Picks a few (boundary point, active element) pairs with the configured
    seed and compares the quadtree fraction against the ray oracle; writes
    the report table and CSV to the output directory.
    """
    out_dir = Path(config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh, grid = load_mesh(config.mesh)
    props = RadiativeProperties(
        sigma_a=config.sigma_a, sigma_s=config.sigma_s, domain_diameter=mesh.diameter()
    )
    col = collocation_points(mesh, grid)
    reports = standard_suite(mesh, grid, props, state=None, collocation=col)

    rng = np.random.default_rng(config.seed)
    from ritesolver.visibility import build_active_list

    for _ in range(n_pairs):
        i = int(rng.integers(col.n_boundary))
        p = col.boundary_points[i]
        own = int(col.boundary_element[i])
        active = build_active_list(p, col.boundary_normals[i], mesh, source_element=own)
        if not active.indices:
            continue
        k = int(active.indices[int(rng.integers(len(active.indices)))])
        reports.append(
            visibility_report_check(p, k, mesh, source_element=own, seed=config.seed)
        )

    table = report_table(reports)
    print(table)
    (out_dir / "oracles.txt").write_text(table + "\n", encoding="utf-8")
    write_report_csv(out_dir / "oracles.csv", reports)
    return 0 if all(r.passed for r in reports) else 1


# ---------------------------------------------------------------------------
# Argument parsing


def _apply_overrides(config: CaseConfig, args) -> CaseConfig:
    updates = {}
    if args.out is not None:
        updates["output"] = args.out
    if args.min_subdiv_area is not None:
        updates["min_area_fraction"] = args.min_subdiv_area
    if args.quad_order is not None:
        updates["quad_order"] = args.quad_order
    if args.tol is not None:
        updates["tolerance"] = args.tol
    if args.max_iter is not None:
        updates["max_iterations"] = args.max_iter
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.dump_matrices:
        updates["dump_matrices"] = True
    if args.dump_visibility:
        updates["dump_visibility"] = True
    return replace(config, **updates) if updates else config


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="JSON case configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--min-subdiv-area", type=float, metavar="REL",
                        help="minimum subdivision area as a fraction of the element")
    parser.add_argument("--quad-order", type=int, metavar="N", help="base quadrature order")
    parser.add_argument("--tol", type=float, metavar="X", help="outer iteration tolerance")
    parser.add_argument("--max-iter", type=int, metavar="N", help="outer iteration cap")
    parser.add_argument("--threads", type=int, metavar="N", help="assembly worker threads")
    parser.add_argument("--dump-matrices", action="store_true",
                        help="write the four operator blocks and load vectors")
    parser.add_argument("--dump-visibility", action="store_true",
                        help="write per-pair screening and classification outcomes")
    parser.add_argument("--seed", type=int, metavar="N", help="oracle sampling seed")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ritesolve",
        description="Radiative exchange in gray diffuse enclosures with participating media.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a builtin benchmark mesh")
    gen.add_argument("case", choices=sorted(BUILTIN_CASES), help="builtin enclosure")
    gen.add_argument("--resolution", type=int, default=5, metavar="N",
                     help="elements per meter of wall (default 5)")
    gen.add_argument("--out", default=".", help="directory for the mesh file")

    run = sub.add_parser("run", help="solve a configured case")
    _add_run_flags(run)

    val = sub.add_parser("validate", help="oracle checks on a mesh, no solve")
    _add_run_flags(val)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "generate":
            path = generate_case(args.case, args.resolution, args.out)
            print(path)
            return 0
        config = _apply_overrides(CaseConfig.from_file(args.config), args)
        if args.command == "run":
            result = run_case(config)
            print(f"exit status {result.exit_code} "
                  f"({'ok' if result.exit_code == 0 else 'convergence or oracle failure'})")
            return result.exit_code
        return validate_case(config)
    except (ConfigError, LineOutsideDomain) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
