"""Per-element generalized eigenproblems and the auxiliary spectral space.

On each coarse element the pencil uses absolute-value weights: |sigma| in the
stiffness and mu_msh * H^-2 * |c| in the mass, with no boundary conditions.
The smallest-eigenvalue eigenvectors span the local auxiliary space; the
first discarded eigenvalue, minimized over elements, is the spectral gap.

Auxiliary functions are zero-extended element by element, so they are
discontinuous across coarse edges. They are therefore represented in
"broken" form: an (N, n_loc) array holding one nodal patchlet per coarse
element. The projection onto the auxiliary space maps a conforming fine
vector (or a broken array) to a broken array; shared coarse-edge nodes keep
one value per element.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .assembly import assemble_local
from .errors import ConfigurationError, NumericalError
from .mesh import TwoScaleMesh

# Relative threshold for locating the first nonzero eigenvector component.
_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class ElementEigenData:
    """Eigenpairs of one element pencil plus the local forms needed later.

    eigenvalues has l_star + 1 ascending entries (the last one is discarded
    from the space but feeds the spectral gap). vectors is (n_loc, l_star)
    and s-orthonormal. w_cols = S_abs @ vectors gives the weighted inner
    products against the eigenvectors; gram_signed is the signed-mu Gram of
    the eigenvectors (== +/-identity on single-signed elements).
    """

    element: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    local_dofs: np.ndarray
    s_local: sp.csr_matrix
    w_cols: np.ndarray
    gram_signed: np.ndarray


@dataclass(frozen=True)
class AuxiliarySpace:
    """Stacked eigen data for all N coarse elements of one mesh/field pair."""

    mesh: TwoScaleMesh
    l_star: int
    mu_msh: float
    lambda_gap: float
    eigenvalues: np.ndarray  # (N, l_star + 1)
    vectors: np.ndarray  # (N, n_loc, l_star)
    local_dofs: np.ndarray  # (N, n_loc)
    w_cols: np.ndarray  # (N, n_loc, l_star)
    gram_signed: np.ndarray  # (N, l_star, l_star)
    projector: sp.csr_matrix  # (N * l_star, num_nodes), rows = s(psi, .)
    s_block: sp.csr_matrix  # block diagonal |mu|-mass over broken dofs

    @property
    def dim(self):
        return self.mesh.num_coarse * self.l_star

    def element_data(self, i):
        return ElementEigenData(
            element=i,
            eigenvalues=self.eigenvalues[i],
            vectors=self.vectors[i],
            local_dofs=self.local_dofs[i],
            s_local=_local_csr(self.s_block, i, self.local_dofs.shape[1]),
            w_cols=self.w_cols[i],
            gram_signed=self.gram_signed[i],
        )


def _local_csr(s_block, i, n_loc):
    sl = s_block[i * n_loc:(i + 1) * n_loc, :].tocsc()[:, i * n_loc:(i + 1) * n_loc]
    return sl.tocsr()


def _fix_signs(vectors):
    """First component above the relative threshold made positive, per column."""
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        big = np.abs(col) > _SIGN_EPS * np.abs(col).max()
        first = np.flatnonzero(big)[0]
        if col[first] < 0:
            vectors[:, j] = -col
    return vectors


def solve_element_eigens(mesh, field, i, l_star, mu_msh=24.0):
    """Smallest l_star + 1 eigenpairs of the absolute-weight pencil on element i."""
    if l_star < 1:
        raise ConfigurationError(f"l_star must be >= 1, got {l_star}")
    cells = mesh.element_cells(i)
    nodes = mesh.element_nodes(i)
    if l_star + 1 > nodes.size:
        raise ConfigurationError(
            f"l_star={l_star} too large for element with {nodes.size} local dofs"
        )
    mu_scale = mu_msh / mesh.H**2
    sig = np.abs(field.sigma[cells])
    c_signed = field.c[cells]
    a_loc = assemble_local(mesh, cells, nodes, sig, "stiffness")
    s_abs = assemble_local(mesh, cells, nodes, mu_scale * np.abs(c_signed), "mass")
    s_signed = assemble_local(mesh, cells, nodes, mu_scale * c_signed, "mass")
    try:
        vals, vecs = la.eigh(a_loc, s_abs, subset_by_index=(0, l_star))
    except la.LinAlgError as exc:
        raise NumericalError(f"eigensolve failed on coarse element {i}: {exc}") from exc
    vectors = _fix_signs(np.ascontiguousarray(vecs[:, :l_star]))
    return ElementEigenData(
        element=i,
        eigenvalues=vals,
        vectors=vectors,
        local_dofs=nodes,
        s_local=sp.csr_matrix(s_abs),
        w_cols=s_abs @ vectors,
        gram_signed=vectors.T @ s_signed @ vectors,
    )


def build_auxiliary_space(mesh, field, l_star, mu_msh=24.0):
    """Solve all element pencils and assemble the global auxiliary space."""
    n_elem = mesh.num_coarse
    n_loc = (mesh.cells_per_coarse + 1) ** 2
    eigenvalues = np.empty((n_elem, l_star + 1))
    vectors = np.empty((n_elem, n_loc, l_star))
    local_dofs = np.empty((n_elem, n_loc), dtype=np.int64)
    w_cols = np.empty((n_elem, n_loc, l_star))
    gram_signed = np.empty((n_elem, l_star, l_star))
    s_blocks = []
    for i in range(n_elem):
        data = solve_element_eigens(mesh, field, i, l_star, mu_msh)
        eigenvalues[i] = data.eigenvalues
        vectors[i] = data.vectors
        local_dofs[i] = data.local_dofs
        w_cols[i] = data.w_cols
        gram_signed[i] = data.gram_signed
        s_blocks.append(data.s_local)
    lambda_gap = float(eigenvalues[:, l_star].min())

    rows = np.repeat(np.arange(n_elem * l_star), n_loc)
    cols = np.repeat(local_dofs[:, None, :], l_star, axis=1).ravel()
    data = np.swapaxes(w_cols, 1, 2).ravel()  # (N, l_star, n_loc) order
    projector = sp.csr_matrix(
        (data, (rows, cols)), shape=(n_elem * l_star, mesh.num_nodes)
    )
    return AuxiliarySpace(
        mesh=mesh,
        l_star=l_star,
        mu_msh=mu_msh,
        lambda_gap=lambda_gap,
        eigenvalues=eigenvalues,
        vectors=vectors,
        local_dofs=local_dofs,
        w_cols=w_cols,
        gram_signed=gram_signed,
        projector=projector,
        s_block=sp.block_diag(s_blocks, format="csr"),
    )


# ---------------------------------------------------------------------------
# broken-field machinery

def break_vector(aux, v):
    """Gather a conforming fine vector into broken (N, n_loc) form."""
    return np.asarray(v)[aux.local_dofs]


def _as_broken(aux, v):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return break_vector(aux, v)
    return v


def project_coeffs(aux, v):
    """Coefficients of the projection onto the auxiliary space, flat (N * l_star,)."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return aux.projector @ v
    return np.einsum("enl,en->el", aux.w_cols, v).ravel()


def expand_coeffs(aux, coeffs):
    """Broken (N, n_loc) representation of an auxiliary function from coefficients."""
    c = np.asarray(coeffs, dtype=float).reshape(aux.mesh.num_coarse, aux.l_star)
    return np.einsum("enl,el->en", aux.vectors, c)


def apply_pi(aux, v):
    """Project a fine vector (or broken array) onto the auxiliary space.

    Returns the broken (N, n_loc) representation; use broken_to_nodal for a
    plottable nodal vector.
    """
    return expand_coeffs(aux, project_coeffs(aux, v))


def broken_to_nodal(aux, broken, combine="mean"):
    """Scatter a broken array to fine nodes, averaging (or summing) shared nodes."""
    sums = np.zeros(aux.mesh.num_nodes)
    np.add.at(sums, aux.local_dofs.ravel(), np.asarray(broken).ravel())
    if combine == "sum":
        return sums
    counts = np.zeros(aux.mesh.num_nodes)
    np.add.at(counts, aux.local_dofs.ravel(), 1.0)
    counts[counts == 0] = 1.0
    return sums / counts


def stilde_inner(aux, u, v):
    """Elementwise |mu|-weighted L^2 inner product of fine/broken functions."""
    ub = _as_broken(aux, u).ravel()
    vb = _as_broken(aux, v).ravel()
    return float(ub @ (aux.s_block @ vb))


def stilde_norm(aux, v):
    return float(np.sqrt(max(stilde_inner(aux, v, v), 0.0)))
