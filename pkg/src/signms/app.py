"""Experiment orchestration: configs, the three experiment protocols, persistence.

A run sweeps the (H, m) lattice of a config: per coarse size H it builds the
auxiliary space once, then one multiscale solve per oversampling depth m.
The fine reference solve is shared across the whole lattice and cached per
(experiment, n_fine, k, seed). Error tables are written as deterministic CSV
(timings go to a separate file so identical configs give identical bytes).
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import assembly, auxspace, coarse, coeffs, msbasis
from .coarse import SolveReport
from .errors import ConfigurationError, SignmsError
from .mesh import build_mesh

EXPERIMENTS = ("flat_interface", "random_inclusions", "nim_slab", "custom")

# Generator geometry pinned here so experiment runs are reproducible.
RANDOM_CONTRAST = (1.0, 1e3)
RANDOM_INCLUSION_COUNT = 40
RANDOM_INCLUSION_SIZES = (4, 12)
RANDOM_SOURCE_CENTER = (0.5, 0.5)
RANDOM_SOURCE_SPREAD = 0.05
NIM_SOURCE_CENTER = (0.0, 0.5)
NIM_SOURCE_WAIST = 0.05
FLAT_PARAMS = dict(sigma_plus=1.0, sigma_minus_mag=3.0, gamma=0.5)


@dataclass
class ExperimentConfig:
    experiment: str = "flat_interface"
    n_fine: int = 400
    n_coarse: list = field(default_factory=lambda: [20, 40, 80])
    m: list = field(default_factory=lambda: [1, 2, 3, 4])
    l_star: int = 3
    k: float = 0.0  # 0 means "use the experiment default"
    mu_msh: float = 24.0
    correction_weight: str = "signed"
    seed: int = 0
    output_dir: str = "signms_out"
    dump_fields: bool = False
    sigma_path: str = ""
    c_path: str = ""
    f_path: str = ""

    def resolved_k(self):
        if self.k > 0:
            return float(self.k)
        if self.experiment == "nim_slab":
            return float(2.0 * np.pi**2)
        return 4.0


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(text)


def _parse_int_list(text):
    inner = text.strip()
    if inner.startswith("[") and inner.endswith("]"):
        inner = inner[1:-1]
    items = [t for t in inner.replace(",", " ").split() if t]
    return [int(t) for t in items]


_FIELD_PARSERS = {
    "experiment": ("name", str),
    "n_fine": ("integer", int),
    "n_coarse": ("integer list like [20,40,80]", _parse_int_list),
    "m": ("integer list like [1,2,3,4]", _parse_int_list),
    "l_star": ("integer", int),
    "k": ("number", float),
    "mu_msh": ("number", float),
    "correction_weight": ("signed|absolute", str),
    "seed": ("integer", int),
    "output_dir": ("path", str),
    "dump_fields": ("boolean", _parse_bool),
    "sigma_path": ("path", str),
    "c_path": ("path", str),
    "f_path": ("path", str),
}


def parse_config(path=None, overrides=None):
    """Resolve an ExperimentConfig from a file and/or override strings.

    overrides maps key -> string value and wins over the file; remaining
    fields keep their defaults. Returns (config, provenance) where
    provenance maps key -> "default" | "file" | "flag".
    """
    values = {}
    provenance = {key: "default" for key in _FIELD_PARSERS}

    def apply(key, raw, source):
        if key not in _FIELD_PARSERS:
            raise ConfigurationError(
                f"unknown config key(s): {key} (known: {', '.join(_FIELD_PARSERS)})"
            )
        desc, conv = _FIELD_PARSERS[key]
        try:
            values[key] = conv(raw) if isinstance(raw, str) else raw
        except ValueError:
            raise ConfigurationError(
                f"config key {key!r} expects {desc}, got {raw!r}"
            ) from None
        provenance[key] = source

    if path is not None:
        with open(path) as fh:
            unknown = []
            for lineno, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigurationError(
                        f"{path}:{lineno}: expected key = value, got {line.strip()!r}"
                    )
                key, raw = (part.strip() for part in stripped.split("=", 1))
                if key not in _FIELD_PARSERS:
                    unknown.append(key)
                    continue
                apply(key, raw, "file")
            if unknown:
                raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    for key, raw in (overrides or {}).items():
        apply(key, raw, "flag")

    config = ExperimentConfig(**values)
    validate_config(config)
    return config, provenance


def validate_config(config):
    """Reject invalid configs before any solve."""
    if config.experiment not in EXPERIMENTS:
        raise ConfigurationError(
            f"unknown experiment {config.experiment!r}; choose from {EXPERIMENTS}"
        )
    if config.k < 0:
        raise ConfigurationError(f"wavenumber must be positive, got {config.k}")
    if config.l_star < 1:
        raise ConfigurationError(f"l_star must be >= 1, got {config.l_star}")
    if config.correction_weight not in ("signed", "absolute"):
        raise ConfigurationError(
            f"correction_weight must be signed or absolute, got {config.correction_weight!r}"
        )
    if not config.n_coarse:
        raise ConfigurationError("n_coarse list is empty")
    if not config.m:
        raise ConfigurationError("m list is empty")
    for n_c in config.n_coarse:
        if n_c < 1 or config.n_fine % n_c != 0:
            raise ConfigurationError(
                f"n_coarse={n_c} does not divide n_fine={config.n_fine}"
            )
    for m in config.m:
        if m < 0:
            raise ConfigurationError(f"oversampling layers must be >= 0, got {m}")
    if config.experiment == "custom":
        if not config.sigma_path or not config.f_path:
            raise ConfigurationError("custom experiment needs sigma_path and f_path")


def config_echo(config, provenance):
    lines = ["# resolved configuration"]
    for key in _FIELD_PARSERS:
        value = getattr(config, key)
        if key == "k" and config.k == 0.0:
            value = f"{config.resolved_k()} (experiment default)"
        lines.append(f"{key} = {value}  # {provenance.get(key, 'default')}")
    return "\n".join(lines) + "\n"


@dataclass
class Problem:
    """The fine-scale data of one experiment: field, source, optional exact solution."""

    field: object
    source: object
    k: float
    exact_nodal: np.ndarray | None = None


def build_problem(config):
    """Construct the coefficient field and source for the configured experiment."""
    mesh0 = build_mesh(config.n_fine, 1)
    k = config.resolved_k()
    if config.experiment == "flat_interface":
        fld = coeffs.flat_interface(mesh0, **FLAT_PARAMS)
        centers = mesh0.cell_centers()
        _, f_cells = coeffs.flat_interface_exact(
            centers[:, 0], centers[:, 1], k=k, **FLAT_PARAMS
        )
        xy = mesh0.node_coords()
        u_exact, _ = coeffs.flat_interface_exact(xy[:, 0], xy[:, 1], k=k, **FLAT_PARAMS)
        return Problem(fld, coeffs.CellSource(f=f_cells), k, u_exact)
    if config.experiment == "random_inclusions":
        fld = coeffs.random_inclusions(
            mesh0, config.seed, RANDOM_CONTRAST,
            RANDOM_INCLUSION_COUNT, RANDOM_INCLUSION_SIZES,
        )
        src = coeffs.gaussian_source(
            mesh0, RANDOM_SOURCE_CENTER, RANDOM_SOURCE_SPREAD, normalized=True
        )
        return Problem(fld, src, k)
    if config.experiment == "nim_slab":
        fld = coeffs.nim_slab(mesh0)
        src = coeffs.gaussian_source(
            mesh0, NIM_SOURCE_CENTER, NIM_SOURCE_WAIST, normalized=False
        )
        return Problem(fld, src, k)
    # custom
    fld = coeffs.load_field(config.sigma_path, config.c_path or None)
    if fld.num_cells != config.n_fine**2:
        raise ConfigurationError(
            f"{config.sigma_path}: field is {int(np.sqrt(fld.num_cells))}^2 cells "
            f"but config.n_fine={config.n_fine}"
        )
    src = coeffs.load_source(config.f_path)
    return Problem(fld, src, k)


_REFERENCE_CACHE = {}


def clear_reference_cache():
    _REFERENCE_CACHE.clear()


def _reference_solution(config, problem):
    key = (
        config.experiment, config.n_fine, problem.k, config.seed,
        config.sigma_path, config.c_path, config.f_path,
    )
    if key not in _REFERENCE_CACHE:
        mesh0 = build_mesh(config.n_fine, 1)
        start = time.perf_counter()
        u_ref = assembly.solve_reference(mesh0, problem.field, problem.k, problem.source)
        _REFERENCE_CACHE[key] = (u_ref, time.perf_counter() - start)
    return _REFERENCE_CACHE[key]


def run_rows_for_coarse_size(config, problem, n_c, u_ref, reference_seconds):
    """All m-rows of one coarse size; failures are recorded per row."""
    k = problem.k
    mesh = build_mesh(config.n_fine, n_c)
    base = dict(
        experiment=config.experiment, n_fine=config.n_fine, n_coarse=n_c,
        l_star=config.l_star, k=k, mu_msh=config.mu_msh, seed=config.seed,
    )
    try:
        t0 = time.perf_counter()
        aux = auxspace.build_auxiliary_space(mesh, problem.field, config.l_star, config.mu_msh)
        eigen_seconds = time.perf_counter() - t0
    except SignmsError as exc:
        return [
            SolveReport(**base, m=m, error=f"auxiliary space: {exc}") for m in config.m
        ], {}

    a_signed = assembly.assemble_stiffness(mesh, problem.field, "signed")
    m_signed = assembly.assemble_mass(mesh, problem.field, "signed", 1.0)
    fine_system = (a_signed - k**2 * m_signed).tocsr()
    a_abs = assembly.assemble_stiffness(mesh, problem.field, "absolute")
    mass = assembly.unweighted_mass(mesh)
    load = assembly.assemble_load(mesh, problem.source)

    upsilon = coeffs.contrast_ratio(problem.field)
    rho = coarse.resolution_ratio(k, mesh.H, aux.lambda_gap, config.mu_msh)
    rho_ok = coarse.resolution_ok(rho)
    f_sinv = coarse.f_sinv_norm(mesh, problem.field, problem.source, config.mu_msh)

    reports = []
    solutions = {}
    for m in config.m:
        report = SolveReport(
            **base, m=m,
            lambda_gap=aux.lambda_gap, upsilon=upsilon, rho=rho, rho_ok=rho_ok,
            f_sinv=f_sinv,
        )
        try:
            t0 = time.perf_counter()
            basis = msbasis.build_multiscale_basis(
                aux, fine_system, m, config.correction_weight
            )
            t1 = time.perf_counter()
            system = coarse.assemble_coarse_system(basis, fine_system, load)
            u_ms = coarse.solve_ms(system, basis)
            t2 = time.perf_counter()
            report.energy_rel, report.l2_rel = coarse.relative_errors(
                u_ref, u_ms, a_abs, mass
            )
            if problem.exact_nodal is not None:
                report.energy_rel_exact, report.l2_rel_exact = coarse.relative_errors(
                    problem.exact_nodal, u_ms, a_abs, mass
                )
            report.seconds = {
                "eigen": eigen_seconds,
                "basis": t1 - t0,
                "coarse": t2 - t1,
                "reference": reference_seconds,
                "total": eigen_seconds + (t2 - t0) + reference_seconds,
            }
            if config.dump_fields:
                solutions[(n_c, m)] = u_ms
        except SignmsError as exc:
            report.error = str(exc)
        reports.append(report)
    return reports, solutions


def _rows_task(args):
    return run_rows_for_coarse_size(*args)


def q1_baseline(config, n_c):
    """Q1 FEM on the coarse mesh itself, against the exact flat-interface solution."""
    k = config.resolved_k()
    mesh_c = build_mesh(n_c, 1)
    fld = coeffs.flat_interface(mesh_c, **FLAT_PARAMS)
    centers = mesh_c.cell_centers()
    _, f_cells = coeffs.flat_interface_exact(centers[:, 0], centers[:, 1], k=k, **FLAT_PARAMS)
    u_h = assembly.solve_reference(mesh_c, fld, k, coeffs.CellSource(f=f_cells))
    xy = mesh_c.node_coords()
    u_exact, _ = coeffs.flat_interface_exact(xy[:, 0], xy[:, 1], k=k, **FLAT_PARAMS)
    a_abs = assembly.assemble_stiffness(mesh_c, fld, "absolute")
    mass = assembly.unweighted_mass(mesh_c)
    return coarse.relative_errors(u_exact, u_h, a_abs, mass)


def worker_count(n_tasks):
    cap = os.environ.get("SIGNMS_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def run_experiment(config, provenance=None, parallel=False):
    """Run the configured (H, m) lattice and write all output files.

    Returns the list of SolveReports (one per row, in config order); rows
    that failed carry an error message instead of numbers.
    """
    validate_config(config)
    problem = build_problem(config)
    out = config.output_dir
    os.makedirs(out, exist_ok=True)

    u_ref, ref_seconds = _reference_solution(config, problem)

    tasks = [(config, problem, n_c, u_ref, ref_seconds) for n_c in config.n_coarse]
    if parallel and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=worker_count(len(tasks))) as pool:
            results = list(pool.map(_rows_task, tasks))
    else:
        results = [_rows_task(t) for t in tasks]

    reports = []
    solutions = {}
    for rows, sols in results:
        reports.extend(rows)
        solutions.update(sols)

    coarse.write_error_table(os.path.join(out, "errors.csv"), reports)
    coarse.write_error_table(os.path.join(out, "timings.csv"), reports, include_timings=True)
    with open(os.path.join(out, "config_echo.txt"), "w") as fh:
        fh.write(config_echo(config, provenance or {}))

    if config.experiment == "flat_interface":
        lines = ["H,energy_rel,l2_rel"]
        for n_c in config.n_coarse:
            ea, el2 = q1_baseline(config, n_c)
            lines.append(f"{1.0 / n_c:.3e},{ea:.3e},{el2:.3e}")
        with open(os.path.join(out, "q1_baseline.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")

    if config.dump_fields:
        n = config.n_fine
        coeffs.save_grid(os.path.join(out, "sigma.txt"), n, problem.field.sigma, "cell")
        coeffs.save_grid(os.path.join(out, "u_ref.txt"), n, u_ref, "node")
        for (n_c, m), u_ms in sorted(solutions.items()):
            tag = f"H{n_c}_m{m}"
            coeffs.save_grid(os.path.join(out, f"u_ms_{tag}.txt"), n, u_ms, "node")
            coeffs.save_grid(
                os.path.join(out, f"diff_{tag}.txt"), n, np.abs(u_ms - u_ref), "node"
            )
    return reports
