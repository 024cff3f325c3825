"""Coarse multiscale Galerkin solve, error norms, and analysis diagnostics."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_stiffness, mass_from_weights, unweighted_mass
from .errors import ConfigurationError, SolverError

# Coarse systems at or below this dimension are solved densely.
DENSE_COARSE_LIMIT = 1200
COARSE_RESIDUAL_RTOL = 1e-10


def assemble_coarse_system(basis, fine_system, load):
    """Project the fine operator and load onto the multiscale basis.

    Returns (Phi^T (A - k^2 M) Phi, Phi^T b).
    """
    phi = basis.matrix
    if fine_system.shape[0] != phi.shape[0] or load.shape[0] != phi.shape[0]:
        raise ConfigurationError("basis, operator, and load dimensions disagree")
    coarse = (phi.T @ (fine_system @ phi)).tocsr()
    rhs = phi.T @ load
    return coarse, rhs


def solve_ms(coarse_system, basis):
    """Solve the coarse system and prolong; returns the fine-grid u_ms."""
    coarse, rhs = coarse_system
    n = coarse.shape[0]
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0.0:
        return np.zeros(basis.matrix.shape[0])
    try:
        if n <= DENSE_COARSE_LIMIT:
            z = np.linalg.solve(coarse.toarray(), rhs)
        else:
            lu = spla.splu(coarse.tocsc(), permc_spec="MMD_AT_PLUS_A")
            z = lu.solve(rhs)
            # one step of iterative refinement keeps the residual near machine level
            z += lu.solve(rhs - coarse @ z)
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise SolverError(
            f"singular coarse system (dim {n}); consider larger m or l_star: {exc}"
        ) from exc
    resid = np.linalg.norm(coarse @ z - rhs) / rhs_norm
    if not np.isfinite(resid) or resid > COARSE_RESIDUAL_RTOL:
        raise SolverError(
            f"coarse solve residual {resid:.3e} exceeds {COARSE_RESIDUAL_RTOL:.1e}; "
            f"consider larger m or l_star"
        )
    return basis.matrix @ z


def quad_norm(matrix, v):
    """sqrt of the (clipped) quadratic form v^T matrix v."""
    return float(np.sqrt(max(v @ (matrix @ v), 0.0)))


def energy_norm(mesh, field, v):
    """|sigma|-weighted H^1 seminorm of a fine vector."""
    return quad_norm(assemble_stiffness(mesh, field, "absolute"), np.asarray(v))


def l2_norm(mesh, v):
    """Plain L^2 norm of a fine vector."""
    return quad_norm(unweighted_mass(mesh), np.asarray(v))


def relative_errors(u_ref, u, stiffness_abs, mass):
    """(energy, L2) relative errors of u against the reference."""
    ref_a = quad_norm(stiffness_abs, u_ref)
    ref_l2 = quad_norm(mass, u_ref)
    if ref_a == 0.0 or ref_l2 == 0.0:
        raise ConfigurationError("reference solution has zero norm")
    diff = u_ref - u
    return quad_norm(stiffness_abs, diff) / ref_a, quad_norm(mass, diff) / ref_l2


def f_sinv_norm(mesh, field, source, mu_msh=24.0):
    """Weighted L^2 norm of f with weight 1 / |mu|, mu = mu_msh H^-2 c."""
    c = np.asarray(field.c, dtype=float)
    if np.any(c == 0.0):
        raise ConfigurationError("mu vanishes on some cell")
    weights = mesh.H**2 / (mu_msh * np.abs(c))
    f = np.asarray(source.f, dtype=float)
    if f.size == mesh.num_cells:  # cellwise-constant f integrates exactly
        return float(np.sqrt(np.sum(weights * f**2) * mesh.h**2))
    m_w = mass_from_weights(mesh, weights)
    return quad_norm(m_w, f)


def resolution_ratio(k, H, lambda_gap, mu_msh=24.0):
    """rho = k^2 H^2 / (mu_msh * Lambda); small rho signals a resolved wavenumber."""
    if k <= 0 or H <= 0 or lambda_gap <= 0 or mu_msh <= 0:
        raise ConfigurationError("resolution ratio needs positive inputs")
    return (k * H) ** 2 / (mu_msh * lambda_gap)


def resolution_ok(rho, threshold=1.0):
    """Flag the resolution ratio; the analysis constants are unknown, so the
    threshold is a heuristic knob rather than a sharp bound."""
    return rho <= threshold


@dataclass
class SolveReport:
    """One (H, m) run: errors, diagnostics, and stage timings."""

    experiment: str
    n_fine: int
    n_coarse: int
    m: int
    l_star: int
    k: float
    mu_msh: float
    seed: int | None = None
    energy_rel: float | None = None
    l2_rel: float | None = None
    energy_rel_exact: float | None = None
    l2_rel_exact: float | None = None
    lambda_gap: float | None = None
    upsilon: float | None = None
    rho: float | None = None
    rho_ok: bool | None = None
    f_sinv: float | None = None
    theta_hat: float | None = None
    seconds: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def H(self):
        return 1.0 / self.n_coarse


_CSV_COLUMNS = [
    "H", "m", "l_star", "k", "energy_rel", "l2_rel", "lambda", "upsilon", "rho",
    "energy_rel_exact", "l2_rel_exact", "error",
]
_TIMING_STAGES = ["eigen", "basis", "coarse", "reference", "total"]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        if np.isinf(value):
            return "inf"
        return f"{value:.3e}"
    return str(value)


def render_error_table(reports, include_timings=False):
    """Render reports as CSV text (deterministic unless timings are included)."""
    buf = io.StringIO()
    columns = list(_CSV_COLUMNS)
    if include_timings:
        columns += [f"seconds_{s}" for s in _TIMING_STAGES]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in reports:
        row = [
            _fmt(r.H), r.m, r.l_star, _fmt(float(r.k)),
            _fmt(r.energy_rel), _fmt(r.l2_rel), _fmt(r.lambda_gap),
            _fmt(r.upsilon), _fmt(r.rho),
            _fmt(r.energy_rel_exact), _fmt(r.l2_rel_exact),
            r.error or "",
        ]
        if include_timings:
            row += [_fmt(r.seconds.get(s)) for s in _TIMING_STAGES]
        writer.writerow(row)
    return buf.getvalue()


def write_error_table(path, reports, include_timings=False):
    with open(path, "w") as fh:
        fh.write(render_error_table(reports, include_timings))
