"""Q1 fine-scale assembly, submatrix restriction, and the fine reference solve.

All forms use exact integration of bilinear products with cellwise-constant
weights (equivalent to 2x2 Gauss), so the element matrices below are exact.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, SolverError

# Q1 element matrices on a square cell, corner order SW, SE, NE, NW.
# Stiffness is size-independent in 2D; mass scales with the cell area h^2.
STIFFNESS_REF = np.array(
    [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ]
) / 6.0
MASS_REF = np.array(
    [
        [4.0, 2.0, 1.0, 2.0],
        [2.0, 4.0, 2.0, 1.0],
        [1.0, 2.0, 4.0, 2.0],
        [2.0, 1.0, 2.0, 4.0],
    ]
) / 36.0

# Residual requirement for all direct solves against their own right-hand side.
RESIDUAL_RTOL = 1e-8


def _check_field(mesh, values):
    if values.size != mesh.num_cells:
        raise ConfigurationError(
            f"field has {values.size} cells but mesh has {mesh.num_cells}"
        )


def _assemble_global(mesh, cell_weights, ref):
    conn = mesh.cell_nodes()
    data = cell_weights[:, None, None] * ref
    rows = np.broadcast_to(conn[:, :, None], data.shape)
    cols = np.broadcast_to(conn[:, None, :], data.shape)
    n = mesh.num_nodes
    mat = sp.coo_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n))
    return mat.tocsr()


def assemble_stiffness(mesh, field, mode="signed"):
    """Global Q1 stiffness with cellwise weight sigma (signed) or |sigma| (absolute).

    Dirichlet rows are kept; constraints are imposed later by restriction.
    """
    w = np.asarray(field.sigma, dtype=float)
    _check_field(mesh, w)
    if mode == "absolute":
        w = np.abs(w)
    elif mode != "signed":
        raise ConfigurationError(f"unknown weight mode {mode!r}")
    return _assemble_global(mesh, w, STIFFNESS_REF)


def assemble_mass(mesh, field, mode="signed", scale=1.0):
    """Global Q1 consistent mass with cellwise weight scale * c (or scale * |c|).

    Pass scale = mu_msh / H^2 to realize the scaled zeroth-order form.
    """
    if scale <= 0:
        raise ConfigurationError(f"mass scale must be positive, got {scale}")
    w = np.asarray(field.c, dtype=float)
    _check_field(mesh, w)
    if mode == "absolute":
        w = np.abs(w)
    elif mode != "signed":
        raise ConfigurationError(f"unknown weight mode {mode!r}")
    return _assemble_global(mesh, scale * w * mesh.h**2, MASS_REF)


def stiffness_from_weights(mesh, cell_weights):
    """Global Q1 stiffness with an arbitrary cellwise weight array."""
    w = np.asarray(cell_weights, dtype=float)
    _check_field(mesh, w)
    return _assemble_global(mesh, w, STIFFNESS_REF)


def mass_from_weights(mesh, cell_weights):
    """Global Q1 consistent mass with an arbitrary cellwise weight array."""
    w = np.asarray(cell_weights, dtype=float)
    _check_field(mesh, w)
    return _assemble_global(mesh, w * mesh.h**2, MASS_REF)


def unweighted_mass(mesh):
    """Global Q1 mass with unit weight (plain L^2 inner product)."""
    return _assemble_global(mesh, np.full(mesh.num_cells, mesh.h**2), MASS_REF)


def assemble_load(mesh, source):
    """Load vector for a source field.

    Nodal sources use the consistent mass applied to the interpolant of f;
    cell-center sources use the midpoint rule (h^2/4 of the center value to
    each corner).
    """
    f = np.asarray(source.f, dtype=float)
    if f.size == mesh.num_nodes:
        return unweighted_mass(mesh) @ f
    if f.size == mesh.num_cells:
        b = np.zeros(mesh.num_nodes)
        np.add.at(
            b,
            mesh.cell_nodes().ravel(),
            np.repeat(0.25 * mesh.h**2 * f, 4),
        )
        return b
    raise ConfigurationError(
        f"source has {f.size} values; expected {mesh.num_nodes} nodal or "
        f"{mesh.num_cells} cell values"
    )


def assemble_local(mesh, cells, nodes, cell_weights, kind):
    """Dense local matrix over `nodes` from the given cells and weights.

    nodes must be sorted and contain all corners of the cells. kind is
    "stiffness" or "mass"; mass weights are multiplied by the cell area.
    """
    conn = mesh.cell_nodes()[cells]
    loc = np.searchsorted(nodes, conn)
    if kind == "stiffness":
        ref = STIFFNESS_REF
        w = cell_weights
    elif kind == "mass":
        ref = MASS_REF
        w = cell_weights * mesh.h**2
    else:
        raise ConfigurationError(f"unknown local matrix kind {kind!r}")
    out = np.zeros((nodes.size, nodes.size))
    data = w[:, None, None] * ref
    np.add.at(out, (loc[:, :, None], loc[:, None, :]), data)
    return out


def restrict(op, dofs):
    """Principal submatrix (or subvector) on the given dof set."""
    dofs = np.asarray(dofs, dtype=np.int64)
    if sp.issparse(op):
        dim = op.shape[0]
    else:
        op = np.asarray(op)
        dim = op.shape[0]
    if dofs.size:
        if dofs.min() < 0 or dofs.max() >= dim:
            raise IndexError(f"dof indices out of range [0, {dim})")
        if np.unique(dofs).size != dofs.size:
            raise IndexError("duplicate dof indices in restriction")
    if sp.issparse(op):
        return op.tocsr()[dofs, :].tocsc()[:, dofs]
    if op.ndim == 1:
        return op[dofs]
    return op[np.ix_(dofs, dofs)]


def solve_reference(mesh, field, k, source):
    """Fine Q1 solve of the signed system (A - k^2 M) u = b with zero trace.

    Returns the solution on all fine nodes (zeros on the boundary). Raises
    SolverError when the factorization fails or the residual exceeds
    RESIDUAL_RTOL relative to the load.
    """
    if k <= 0:
        raise ConfigurationError(f"wavenumber must be positive, got {k}")
    A = assemble_stiffness(mesh, field, "signed")
    M = assemble_mass(mesh, field, "signed", 1.0)
    system = (A - k**2 * M).tocsr()
    b = assemble_load(mesh, source)
    free = mesh.free_dofs
    sys_ff = restrict(system, free).tocsc()
    b_f = b[free]
    u = np.zeros(mesh.num_nodes)
    bnorm = np.linalg.norm(b_f)
    if bnorm == 0.0:
        return u
    try:
        lu = spla.splu(sys_ff, permc_spec="MMD_AT_PLUS_A")
        x = lu.solve(b_f)
    except RuntimeError as exc:  # singular factorization
        raise SolverError(
            f"fine reference solve failed (singular or ill-posed system): {exc}"
        ) from exc
    resid = np.linalg.norm(sys_ff @ x - b_f) / bnorm
    if not np.isfinite(resid) or resid > RESIDUAL_RTOL:
        raise SolverError(
            f"fine reference solve residual {resid:.3e} exceeds {RESIDUAL_RTOL:.1e} "
            f"(near-singular sign-changing configuration?)"
        )
    u[free] = x
    return u
