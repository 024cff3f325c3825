"""Constraint-energy-minimizing multiscale basis functions.

Each basis column solves, on an oversampled patch with zero trace,

    B(phi, w) + s(pi phi, pi w) = s(psi_i^j, pi w)   for all test w,

where B is the signed Helmholtz form and s the scaled zeroth-order form.
The projection term couples nodes only within each coarse element, so the
patch problem is solved through the sparse bordered system

    [ B   U^T ] [x]   [   0   ]
    [ G U  -I ] [y] = [ G e_ij]

with U the auxiliary-coefficient map on the patch and G the per-element Gram
of the eigenvectors under the correction weight. One factorization per patch
serves all basis targets of that patch.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    RESIDUAL_RTOL,
    assemble_mass,
    assemble_stiffness,
    restrict,
    stiffness_from_weights,
)
from .errors import ConfigurationError, SolverError
from .mesh import oversample_patch, patch_cells


@dataclass(frozen=True)
class Correction:
    """Projection correction restricted to one patch.

    U maps a patch-interior vector to auxiliary coefficients of the patch
    elements; G is the block-diagonal eigenvector Gram under the chosen
    weight. The correction quadratic form is U^T G U.
    """

    elements: np.ndarray
    U: sp.csr_matrix
    G: sp.csr_matrix

    def row_of(self, element, j):
        pos = int(np.searchsorted(self.elements, element))
        if pos >= self.elements.size or self.elements[pos] != element:
            raise ConfigurationError(f"element {element} not inside the patch")
        return pos * (self.U.shape[0] // self.elements.size) + j


@dataclass(frozen=True)
class MultiscaleBasis:
    """Columns phi_(i,j) stacked as a sparse matrix, column index = i * l_star + j."""

    matrix: sp.csc_matrix
    l_star: int
    layers: int | None  # None for the global (unlocalized) basis
    weight: str

    @property
    def mode(self):
        return "global" if self.layers is None else f"localized({self.layers})"

    def column(self, i, j):
        return np.asarray(
            self.matrix[:, i * self.l_star + j].todense()
        ).ravel()


def correction_operator(aux, patch, weight="signed"):
    """Build U and G for a patch; weight selects signed or absolute mu in G."""
    if weight not in ("signed", "absolute"):
        raise ConfigurationError(f"unknown correction weight {weight!r}")
    elems = patch.element_set
    l_star = aux.l_star
    interior = patch.interior_dofs
    rows, cols, vals = [], [], []
    for pos, e in enumerate(elems):
        dofs = aux.local_dofs[e]
        where = np.searchsorted(interior, dofs)
        ok = (where < interior.size) & (interior[np.minimum(where, interior.size - 1)] == dofs)
        for j in range(l_star):
            rows.append(np.full(ok.sum(), pos * l_star + j))
            cols.append(where[ok])
            vals.append(aux.w_cols[e][ok, j])
    U = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(elems.size * l_star, interior.size),
    )
    if weight == "signed":
        G = sp.block_diag([aux.gram_signed[e] for e in elems], format="csr")
    else:
        G = sp.identity(elems.size * l_star, format="csr")
    return Correction(elements=elems, U=U, G=G)


def _patch_solutions(aux, fine_system, patch, targets, weight):
    """Solve the bordered patch system for each (i, j) target.

    Returns (interior_dofs, list of interior solutions).
    """
    idx = patch.interior_dofs
    if idx.size == 0:
        return idx, [np.zeros(0) for _ in targets]
    B = restrict(fine_system, idx).tocsc()
    corr = correction_operator(aux, patch, weight)
    n_int = idx.size
    n_aux = corr.U.shape[0]
    K = sp.bmat(
        [[B, corr.U.T], [corr.G @ corr.U, -sp.identity(n_aux)]], format="csc"
    )
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise SolverError(
            f"singular patch system (element {patch.center_element}, "
            f"m={patch.layers}): {exc}"
        ) from exc
    solutions = []
    for (i, j) in targets:
        g_col = corr.G.getcol(corr.row_of(i, j)).toarray().ravel()
        rhs = np.concatenate([np.zeros(n_int), g_col])
        sol = lu.solve(rhs)
        x = sol[:n_int]
        b_reduced = corr.U.T @ g_col
        resid = B @ x + corr.U.T @ (corr.G @ (corr.U @ x)) - b_reduced
        scale = np.linalg.norm(b_reduced)
        if scale == 0.0:
            if np.linalg.norm(x) > RESIDUAL_RTOL:
                raise SolverError(
                    f"nonzero basis from zero target (i={i}, j={j}, m={patch.layers})"
                )
        elif np.linalg.norm(resid) > RESIDUAL_RTOL * scale:
            raise SolverError(
                f"patch solve residual too large (i={i}, j={j}, m={patch.layers}): "
                f"{np.linalg.norm(resid) / scale:.3e}"
            )
        solutions.append(x)
    return idx, solutions


def _fine_system(mesh, field, k):
    A = assemble_stiffness(mesh, field, "signed")
    M = assemble_mass(mesh, field, "signed", 1.0)
    return (A - k**2 * M).tocsr()


def compute_local_basis(mesh, field, aux, k, i, j, m, weight="signed"):
    """One localized basis column, extended by zero to all fine nodes."""
    patch = oversample_patch(mesh, i, m)
    idx, sols = _patch_solutions(aux, _fine_system(mesh, field, k), patch, [(i, j)], weight)
    out = np.zeros(mesh.num_nodes)
    out[idx] = sols[0]
    return out


def compute_global_basis(mesh, field, aux, k, i, j, weight="signed"):
    """One global basis column (patch = whole domain, test space V)."""
    patch = oversample_patch(mesh, i, mesh.n_coarse)
    idx, sols = _patch_solutions(aux, _fine_system(mesh, field, k), patch, [(i, j)], weight)
    out = np.zeros(mesh.num_nodes)
    out[idx] = sols[0]
    return out


def build_multiscale_basis(aux, fine_system, m, weight="signed"):
    """All N * l_star localized columns for oversampling depth m."""
    mesh = aux.mesh
    l_star = aux.l_star
    rows, cols, vals = [], [], []
    failures = []
    for i in range(mesh.num_coarse):
        patch = oversample_patch(mesh, i, m)
        targets = [(i, j) for j in range(l_star)]
        try:
            idx, sols = _patch_solutions(aux, fine_system, patch, targets, weight)
        except SolverError as exc:
            failures.append(str(exc))
            continue
        for j, x in enumerate(sols):
            rows.append(idx)
            cols.append(np.full(idx.size, i * l_star + j))
            vals.append(x)
    if failures:
        raise SolverError("basis construction failed: " + "; ".join(failures))
    matrix = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_nodes, mesh.num_coarse * l_star),
    )
    return MultiscaleBasis(matrix=matrix, l_star=l_star, layers=m, weight=weight)


def build_global_basis(aux, fine_system, weight="signed", columns=None):
    """Global (unlocalized) basis columns; diagnostic use only.

    columns restricts to a list of (i, j) pairs; the sparse matrix keeps the
    full column layout with absent columns left empty.
    """
    mesh = aux.mesh
    l_star = aux.l_star
    patch = oversample_patch(mesh, 0, mesh.n_coarse)
    if columns is None:
        columns = [(i, j) for i in range(mesh.num_coarse) for j in range(l_star)]
    idx, sols = _patch_solutions(aux, fine_system, patch, columns, weight)
    rows, cols, vals = [], [], []
    for (i, j), x in zip(columns, sols):
        rows.append(idx)
        cols.append(np.full(idx.size, i * l_star + j))
        vals.append(x)
    matrix = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_nodes, mesh.num_coarse * l_star),
    )
    return MultiscaleBasis(matrix=matrix, l_star=l_star, layers=None, weight=weight)


def dump_basis_column(path, mesh, basis, i, j):
    """Write one basis column in the grid text format (node field)."""
    from .coeffs import save_grid

    save_grid(path, mesh.n_fine, basis.column(i, j), kind="node")


@dataclass(frozen=True)
class DecayProfile:
    """Localization error and outside-patch energy of one basis function."""

    element: int
    j: int
    records: list  # (m, ||phi - phi_m||_a, ||phi||_a outside K_i^m)
    theta_hat: float | None


def decay_profile(mesh, field, aux, k, i, j, m_max, weight="signed"):
    """Measure the decay of one global basis column against its localizations.

    theta_hat is the geometric rate fitted to the squared outside-patch
    energies over m = 1..m_max (None when the fit is degenerate).
    """
    fine_system = _fine_system(mesh, field, k)
    a_abs = assemble_stiffness(mesh, field, "absolute")
    phi = np.zeros(mesh.num_nodes)
    patch_glob = oversample_patch(mesh, 0, mesh.n_coarse)
    idx, sols = _patch_solutions(aux, fine_system, patch_glob, [(i, j)], weight)
    phi[idx] = sols[0]

    abs_sigma = np.abs(field.sigma)
    records = []
    for m in range(1, m_max + 1):
        patch = oversample_patch(mesh, i, m)
        pidx, psols = _patch_solutions(aux, fine_system, patch, [(i, j)], weight)
        phi_m = np.zeros(mesh.num_nodes)
        phi_m[pidx] = psols[0]
        diff = phi - phi_m
        diff_a = np.sqrt(max(diff @ (a_abs @ diff), 0.0))
        outside = abs_sigma.copy()
        outside[patch_cells(mesh, patch)] = 0.0
        a_out = stiffness_from_weights(mesh, outside)
        tail_a = np.sqrt(max(phi @ (a_out @ phi), 0.0))
        records.append((m, float(diff_a), float(tail_a)))

    tails2 = np.array([r[2] ** 2 for r in records])
    ms = np.array([r[0] for r in records], dtype=float)
    good = tails2 > 0
    theta = None
    if good.sum() >= 2:
        slope = np.polyfit(ms[good], np.log(tails2[good]), 1)[0]
        theta = float(np.exp(slope))
    return DecayProfile(element=i, j=j, records=records, theta_hat=theta)
