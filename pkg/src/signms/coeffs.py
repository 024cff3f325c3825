"""Piecewise-constant coefficient fields, harmonic sources, and the grid text format.

Coefficients sigma and c are per-fine-cell constants ("matrix/image"
representation); sources f are per-fine-node values. The three built-in
generators reproduce the flat-interface, random-inclusion, and NIM-slab
experiment profiles.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GenerationError, IngestionError
from .mesh import TwoScaleMesh


@dataclass(frozen=True)
class CoefficientField:
    """Cellwise sigma and c on the fine grid; sign(sigma) == sign(c) everywhere."""

    sigma: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "c", c)
        if sigma.shape != c.shape:
            raise ConfigurationError("sigma and c must have the same cell count")
        if np.any(sigma == 0.0) or np.any(c == 0.0):
            raise ConfigurationError("coefficient fields must be zero-free")
        if np.any(np.sign(sigma) != np.sign(c)):
            raise ConfigurationError("sigma and c must agree in sign cellwise")

    @property
    def num_cells(self):
        return self.sigma.size


@dataclass(frozen=True)
class SourceField:
    """Nodal values of the harmonic source f."""

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "f", f)
        if not np.all(np.isfinite(f)):
            raise ConfigurationError("source field contains non-finite values")


@dataclass(frozen=True)
class CellSource:
    """Cell-center values of f, integrated by the midpoint rule.

    This is the image-style source representation: one value per fine cell,
    matching the coefficient layout.
    """

    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float)
        object.__setattr__(self, "f", f)
        if not np.all(np.isfinite(f)):
            raise ConfigurationError("source field contains non-finite values")


def flat_interface(mesh: TwoScaleMesh, sigma_plus=1.0, sigma_minus_mag=3.0, gamma=0.5):
    """sigma = c = +sigma_plus above the horizontal line y = gamma, else -sigma_minus_mag."""
    if sigma_plus <= 0 or sigma_minus_mag <= 0:
        raise ConfigurationError(
            f"contrast magnitudes must be positive, got ({sigma_plus}, {sigma_minus_mag})"
        )
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"interface height must lie in (0,1), got {gamma}")
    y = mesh.cell_centers()[:, 1]
    sigma = np.where(y > gamma, sigma_plus, -sigma_minus_mag)
    return CoefficientField(sigma=sigma, c=sigma.copy())


def flat_interface_exact(x1, x2, sigma_plus=1.0, sigma_minus_mag=3.0, gamma=0.5, k=4.0):
    """Closed-form solution/source pair for the flat-interface problem.

    u vanishes on the boundary and on the interface x2 = gamma; f is the
    source that makes u solve -div(sigma grad u) - k^2 c u = f with the
    flat_interface coefficients.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    p = x1 * (x1 - 1.0)
    q = x2 * (x2 - 1.0) * (x2 - gamma)
    u = np.where(x2 >= gamma, -sigma_minus_mag * p * q, sigma_plus * p * q)
    f = sigma_plus * sigma_minus_mag * (
        2.0 * q + p * (6.0 * x2 - 2.0 * (gamma + 1.0)) + k**2 * p * q
    )
    return u, f


def random_inclusions(mesh: TwoScaleMesh, seed, contrast=(1.0, 1e3), count=40,
                      size_range=(4, 12)):
    """Positive background with `count` random negative axis-aligned rectangles.

    Rectangle sides are drawn uniformly from size_range (in fine cells);
    placements keep at least one cell away from the boundary. Deterministic
    for a fixed seed.
    """
    sigma_plus, sigma_minus_mag = contrast
    if sigma_plus <= 0 or sigma_minus_mag <= 0:
        raise ConfigurationError(f"contrast magnitudes must be positive, got {contrast}")
    lo, hi = size_range
    nf = mesh.n_fine
    if lo < 1 or hi < lo:
        raise ConfigurationError(f"bad inclusion size range {size_range}")
    if hi > nf - 2:
        raise GenerationError(
            f"inclusions of side {hi} cannot avoid the boundary on a {nf}x{nf} grid"
        )
    rng = np.random.default_rng(seed)
    grid = np.full((nf, nf), sigma_plus)  # [cy, cx]
    for _ in range(count):
        w = int(rng.integers(lo, hi + 1))
        h = int(rng.integers(lo, hi + 1))
        cx = int(rng.integers(1, nf - 1 - w + 1))
        cy = int(rng.integers(1, nf - 1 - h + 1))
        grid[cy:cy + h, cx:cx + w] = -sigma_minus_mag
    sigma = grid.ravel()
    return CoefficientField(sigma=sigma, c=sigma.copy())


def nim_slab(mesh: TwoScaleMesh):
    """Vertical slab 11/24 < x < 13/24 set to -10, background +1 (cell-center test)."""
    x = mesh.cell_centers()[:, 0]
    inside = (x > 11.0 / 24.0) & (x < 13.0 / 24.0)
    sigma = np.where(inside, -10.0, 1.0)
    return CoefficientField(sigma=sigma, c=sigma.copy())


def gaussian_source(mesh: TwoScaleMesh, center=(0.5, 0.5), spread=0.05, normalized=True):
    """Nodal Gaussian source centered at `center` with standard deviation `spread`.

    normalized=True applies the 1/(spread*sqrt(2*pi)) prefactor; False gives
    the plain exp(-r^2 / (2 spread^2)) beam profile.
    """
    if spread <= 0:
        raise ConfigurationError(f"spread must be positive, got {spread}")
    xy = mesh.node_coords()
    r2 = (xy[:, 0] - center[0]) ** 2 + (xy[:, 1] - center[1]) ** 2
    f = np.exp(-r2 / (2.0 * spread**2))
    if normalized:
        f = f / (spread * np.sqrt(2.0 * np.pi))
    return SourceField(f=f)


def contrast_ratio(field: CoefficientField):
    """Upsilon = (min sigma over positive cells) / (max |sigma| over negative cells).

    Returns +inf when there are no negative cells.
    """
    pos = field.sigma[field.sigma > 0]
    neg = field.sigma[field.sigma < 0]
    if pos.size == 0:
        raise ConfigurationError("contrast ratio undefined: no positive cells")
    if neg.size == 0:
        return float("inf")
    return float(pos.min() / np.abs(neg).max())


# ---------------------------------------------------------------------------
# grid text format: header "n n", then one row of values per grid row
# (n rows for cell fields, n+1 rows for node fields)

def save_grid(path, n_fine, values, kind="cell"):
    """Write a cell or node field in the grid text format."""
    rows = n_fine if kind == "cell" else n_fine + 1
    values = np.asarray(values, dtype=float).reshape(rows, rows)
    with open(path, "w") as fh:
        fh.write(f"{n_fine} {n_fine}\n")
        for row in values:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_grid(path, kind="cell"):
    """Read a grid file; returns (n_fine, flat values). Raises on malformed input."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise IngestionError(f"{path}: empty file")
    header = lines[0].split()
    try:
        n_fine = int(header[0])
        if len(header) != 2 or int(header[1]) != n_fine:
            raise ValueError
    except (ValueError, IndexError):
        raise IngestionError(f"{path}:1: malformed header {lines[0].strip()!r}") from None
    rows = n_fine if kind == "cell" else n_fine + 1
    values = []
    count = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: unparsable token {tok!r}") from None
            count += 1
            if count > rows * rows:
                raise IngestionError(
                    f"{path}:{lineno}: too many entries, expected {rows * rows}"
                )
    if count != rows * rows:
        raise IngestionError(f"{path}: expected {rows * rows} entries, found {count}")
    return n_fine, np.asarray(values)


def save_field(field: CoefficientField, sigma_path, c_path=None):
    """Write sigma (and optionally c) of a field in the grid text format."""
    n_fine = int(round(np.sqrt(field.num_cells)))
    save_grid(sigma_path, n_fine, field.sigma, kind="cell")
    if c_path is not None:
        save_grid(c_path, n_fine, field.c, kind="cell")


def load_field(sigma_path, c_path=None):
    """Build a CoefficientField from grid files. c defaults to sigma when omitted."""
    n_sigma, sigma = load_grid(sigma_path, kind="cell")
    if np.any(sigma == 0.0):
        first = int(np.flatnonzero(sigma == 0.0)[0])
        lineno = 2 + first // n_sigma
        raise IngestionError(f"{sigma_path}:{lineno}: zero coefficient entry")
    if c_path is None:
        return CoefficientField(sigma=sigma, c=sigma.copy())
    n_c, c = load_grid(c_path, kind="cell")
    if n_c != n_sigma:
        raise IngestionError(
            f"{c_path}: grid size {n_c} does not match sigma grid size {n_sigma}"
        )
    if np.any(c == 0.0):
        first = int(np.flatnonzero(c == 0.0)[0])
        lineno = 2 + first // n_c
        raise IngestionError(f"{c_path}:{lineno}: zero coefficient entry")
    return CoefficientField(sigma=sigma, c=c)


def load_source(path):
    """Read a nodal source field from a grid file."""
    _, values = load_grid(path, kind="node")
    return SourceField(f=values)
