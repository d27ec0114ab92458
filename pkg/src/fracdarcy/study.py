"""Convergence studies: configuration, per-level solves, CSV and VTK output."""
import csv
import io
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .assembly import SIGMA_MODES, DEFECT_MODES, assemble, eliminate_cells, recover_cells
from .errors import JUMP_SIGNS, NORM_MODES, compute_errors, convergence_orders, face_jumps
from .hfv import HfvScheme
from .mesh import build_bundle
from .model import PARAMETER_SETS, CompatibilityWarning, make_case
from .solver import (DEFAULT_DROP, DEFAULT_TOL, SolveResult, ZeroPivotError, gmres,
                     ilut_factor, warm_up)
from .vag import VagScheme

SCHEMES = ("vag-fe", "vag-cv", "hfv")
MESHES = ("cartesian", "tetrahedral")

CSV_COLUMNS = (
    "key", "n", "scheme", "mesh", "case", "n_cells", "n_dofs", "n_dofs_eliminated",
    "iterations", "cpu_seconds", "converged", "err_sol", "err_grad", "err_jump",
    "alpha_sol", "alpha_grad", "alpha_jump",
)

VTK_HEXAHEDRON = 12
VTK_TETRA = 10
VTK_TRIANGLE = 5
VTK_QUAD = 9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    """One convergence study: a scheme on a sequence of refined meshes.

    ``case`` is a parameter-set name or a mapping with an optional ``base``
    name plus any of ``K_m``, ``K_f``, ``T_f``.
    """

    scheme: str = "vag-fe"
    mesh: str = "cartesian"
    levels: tuple = (8, 16, 32)
    case: object = "isotropic"
    xi: float = 1.0
    t_scale: float = 1.0
    tol: float = DEFAULT_TOL
    ilut_drop: float = DEFAULT_DROP
    sigma_mode: str = "line-source"
    interface_defect: str = "compensate"
    error_mode: str = "nodal"
    jump_sign: str = "plus"
    timing: bool = True
    output: str = None
    vtk_dir: str = None

    def __post_init__(self):
        try:
            levels = tuple(self.levels)
        except TypeError:
            raise ConfigError(f"levels must be a list of integers, got {self.levels!r}") from None
        if not all(isinstance(n, (int, np.integer)) and not isinstance(n, bool) for n in levels):
            raise ConfigError(f"levels must be a list of integers, got {list(levels)}")
        object.__setattr__(self, "levels", tuple(int(n) for n in levels))
        self.validate()

    def validate(self):
        def one_of(name, options):
            if getattr(self, name) not in options:
                raise ConfigError(f"{name} must be one of {options}, got {getattr(self, name)!r}")

        one_of("scheme", SCHEMES)
        one_of("mesh", MESHES)
        one_of("sigma_mode", SIGMA_MODES)
        one_of("interface_defect", DEFECT_MODES)
        one_of("error_mode", NORM_MODES)
        one_of("jump_sign", JUMP_SIGNS)
        if not self.levels:
            raise ConfigError("levels must not be empty")
        if any(n < 2 or n % 2 for n in self.levels):
            # the fracture planes must fall on grid planes
            raise ConfigError(f"levels must be even integers >= 2, got {list(self.levels)}")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {list(self.levels)}")
        if not 0.5 < self.xi <= 1.0:
            raise ConfigError(f"xi must lie in (1/2, 1], got {self.xi}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.ilut_drop < 0:
            raise ConfigError("ilut_drop must be non-negative")
        if self.t_scale <= 0:
            raise ConfigError("t_scale must be positive")
        if isinstance(self.case, str):
            if self.case not in PARAMETER_SETS:
                raise ConfigError(f"unknown case {self.case!r}; "
                                  f"expected one of {sorted(PARAMETER_SETS)} or a mapping")
        elif not isinstance(self.case, dict):
            raise ConfigError("case must be a name or a mapping of parameters")

    @classmethod
    def from_mapping(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_mapping(data)

    def with_overrides(self, pairs):
        """Apply ``key=value`` strings; values are parsed as JSON when possible."""
        data = asdict(self)
        for pair in pairs:
            key, sep, raw = pair.partition("=")
            if not sep:
                raise ConfigError(f"override {pair!r} is not of the form key=value")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            data[key.strip()] = value
        return self.from_mapping(data)

    @property
    def case_label(self):
        if isinstance(self.case, str):
            return self.case
        return self.case.get("base", "custom")

    def build_case(self):
        if isinstance(self.case, str):
            kind, params = self.case, None
        else:
            params = dict(self.case)
            kind = params.pop("base", "custom")
        return make_case(kind, xi=self.xi, params=params, t_scale=self.t_scale)


def make_scheme(name, bundle, data):
    if name == "vag-fe":
        return VagScheme(bundle, data, "fe")
    if name == "vag-cv":
        return VagScheme(bundle, data, "cv")
    if name == "hfv":
        return HfvScheme(bundle, data)
    raise ConfigError(f"unknown scheme {name!r}")


@dataclass
class LevelResult:
    key: int
    n: int
    n_cells: int
    n_dofs: int
    n_dofs_eliminated: int
    iterations: int
    cpu_seconds: float
    converged: bool
    residual: float
    errors: object                  # ErrorReport
    orders: tuple = (None, None, None)
    scheme: object = field(default=None, repr=False)
    solution: np.ndarray = field(default=None, repr=False)
    reduced: object = field(default=None, repr=False)     # ReducedSystem


def solve_level(config, n, case=None, key=1, bundle=None):
    """Assemble, condense, solve and measure one refinement level.

    The timed section covers cell elimination, the ILUT factorization, the
    GMRES iterations and the recovery of the cell values.
    """
    case = config.build_case() if case is None else case
    bundle = build_bundle(config.mesh, n) if bundle is None else bundle
    scheme = make_scheme(config.scheme, bundle, case.data)
    system = assemble(scheme, case, sigma_mode=config.sigma_mode,
                      interface_defect=config.interface_defect)
    start = time.perf_counter()
    reduced = eliminate_cells(system)
    try:
        factors = ilut_factor(reduced.matrix, config.ilut_drop)
    except ZeroPivotError:
        # flagged as non-converged; the study goes on with the next level
        result = SolveResult(np.full(reduced.n_dofs, np.nan), 0, float("nan"), False)
    else:
        result = gmres(reduced.matrix, reduced.rhs, factors, tol=config.tol)
    u = recover_cells(result.x, reduced)
    cpu = time.perf_counter() - start
    report = compute_errors(scheme, u, case, mode=config.error_mode, jump_sign=config.jump_sign)
    return LevelResult(
        key=key, n=n, n_cells=bundle.mesh.n_cells, n_dofs=scheme.layout.n_dofs,
        n_dofs_eliminated=reduced.n_dofs, iterations=result.iterations, cpu_seconds=cpu,
        converged=result.converged, residual=result.residual, errors=report,
        scheme=scheme, solution=u, reduced=reduced,
    )


@dataclass
class StudyResult:
    config: StudyConfig
    levels: list
    warnings: tuple = ()

    @property
    def converged(self):
        return all(level.converged for level in self.levels)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        cfg = self.config
        for lv in self.levels:
            e = lv.errors
            writer.writerow([
                lv.key, lv.n, cfg.scheme, cfg.mesh, cfg.case_label, lv.n_cells, lv.n_dofs,
                lv.n_dofs_eliminated, lv.iterations,
                f"{lv.cpu_seconds:.4f}" if cfg.timing else "",
                int(lv.converged), repr(e.err_sol), repr(e.err_grad), repr(e.err_jump),
                *("" if a is None else repr(a) for a in lv.orders),
            ])
        return buf.getvalue()


def run_study(config, log=None, vtk=False):
    """Run every level of ``config``; levels that fail to converge are
    flagged and the study continues."""
    log = log or (lambda msg: None)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CompatibilityWarning)
        case = config.build_case()
    notes = tuple(str(w.message) for w in caught)
    for note in notes:
        log(f"warning: {note}")
    warm_up()
    levels = []
    for key, n in enumerate(config.levels, start=1):
        lv = solve_level(config, n, case, key=key)
        e = lv.errors
        status = "ok" if lv.converged else "NOT CONVERGED"
        log(f"[{config.scheme} {config.mesh} n={n}] cells={lv.n_cells} dofs={lv.n_dofs} "
            f"iter={lv.iterations} cpu={lv.cpu_seconds:.2f}s err_sol={e.err_sol:.3e} "
            f"err_grad={e.err_grad:.3e} err_jump={e.err_jump:.3e} {status}")
        levels.append(lv)
        if vtk and config.vtk_dir:
            export_fields(lv.scheme, lv.solution, Path(config.vtk_dir) / f"{config.scheme}_n{n}")
    if len(levels) > 1:
        ncells = [lv.n_cells for lv in levels]
        cols = [convergence_orders([getattr(lv.errors, k) for lv in levels], ncells)
                for k in ("err_sol", "err_grad", "err_jump")]
        for lv, orders in zip(levels[1:], zip(*cols)):
            lv.orders = orders
    result = StudyResult(config, levels, notes)
    if config.output:
        path = Path(config.output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(result.to_csv())
    return result


# -- VTK -------------------------------------------------------------------------

def _vtk_grid(points, cells, cell_type, data, title):
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [" ".join(repr(float(c)) for c in p) for p in points]
    size = cells.shape[0] * (cells.shape[1] + 1)
    lines.append(f"CELLS {cells.shape[0]} {size}")
    lines += [" ".join(map(str, (cells.shape[1], *row))) for row in cells]
    lines.append(f"CELL_TYPES {cells.shape[0]}")
    lines += [str(cell_type)] * cells.shape[0]
    lines.append(f"CELL_DATA {cells.shape[0]}")
    for name, values in data.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in values]
    return "\n".join(lines) + "\n"


def export_fields(scheme, u, path):
    """Write ``<path>_matrix.vtk`` (cell pressure) and ``<path>_fracture.vtk``
    (fracture pressure, per-side jumps and jump magnitude per fracture face).

    Returns the two file paths.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path.parent}: {exc}") from exc
    mesh, fr = scheme.bundle.mesh, scheme.bundle.fractures
    hexes = mesh.cell_nodes.shape[1] == 8
    matrix = _vtk_grid(mesh.vertices, mesh.cell_nodes, VTK_HEXAHEDRON if hexes else VTK_TETRA,
                       {"pressure": u[:mesh.n_cells]}, f"{scheme.name} matrix pressure")
    fnodes = mesh.face_nodes[fr.faces]
    jumps = face_jumps(scheme, u)
    uf = u[scheme.layout.fracture_face_offset + np.arange(fr.n_faces)]
    fracture = _vtk_grid(
        mesh.vertices, fnodes, VTK_QUAD if fnodes.shape[1] == 4 else VTK_TRIANGLE,
        {"fracture_pressure": uf,
         "jump_side0": np.nan_to_num(jumps[:, 0]),
         "jump_side1": np.nan_to_num(jumps[:, 1]),
         "jump_magnitude": np.nanmax(np.abs(jumps), axis=1)},
        f"{scheme.name} fracture pressure and interface jump")
    out = (path.with_name(path.name + "_matrix.vtk"), path.with_name(path.name + "_fracture.vtk"))
    out[0].write_text(matrix)
    out[1].write_text(fracture)
    return out


def read_vtk_cell_data(path):
    """Parse the cell-data arrays of a legacy ASCII file written by
    :func:`export_fields` into a dict of arrays."""
    tokens = Path(path).read_text().split("\n")
    data = {}
    i = 0
    ncells = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("CELL_DATA"):
            ncells = int(line.split()[1])
        elif line.startswith("SCALARS"):
            name = line.split()[1]
            data[name] = np.array([float(t) for t in tokens[i + 2:i + 2 + ncells]])
            i += 1 + ncells
        i += 1
    return data
