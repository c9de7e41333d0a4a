"""Angular quadratures, phase functions, and the discrete scattering kernel.

The transport solver discretizes the angular variable with a composite
trapezoid rule on the unit circle (``build_circle_trapezoid``).  A
Gauss-Legendre x equispaced-azimuth product rule on the unit sphere
(``build_sphere_gauss``) is provided for quadrature diagnostics only; the
spatial solver is 2D.

The scattering integral is replaced by its quadrature discretization

    (K u)(x, s_m) = sum_l w_l Phi(s_m . s_l) u(x, s_l),

stored as a dense matrix over the ordinate set (``ScatterKernel``).  The
row masses b_m = sum_l w_l Phi(s_m . s_l) control solvability: source
iteration and coercivity both require the margin sigma_t - sigma_s * max_m
b_m to stay positive.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Direction",
    "AngularQuadrature",
    "HenyeyGreenstein",
    "LinearAnisotropic",
    "Isotropic",
    "ScatterKernel",
    "build_circle_trapezoid",
    "build_sphere_gauss",
    "eval_phase",
    "build_scatter_kernel",
    "apply_scatter",
    "normalization_residual",
]


@dataclass(frozen=True)
class Direction:
    """A single quadrature ordinate.

    Attributes
    ----------
    theta : float or tuple of float
        Angle in radians on [0, 2*pi] for circle rules, or a
        (polar, azimuth) pair for sphere rules.
    unit_vector : ndarray
        Cartesian components; unit length to rounding.
    """

    theta: object
    unit_vector: np.ndarray


@dataclass(frozen=True)
class AngularQuadrature:
    """Ordinate directions and weights for the discrete-ordinate method.

    Attributes
    ----------
    nodes : list of Direction
    weights : ndarray
        Strictly positive; sums to 2*pi (circle) or 4*pi (sphere).
    mode : str
        ``"circle-trapezoid"`` or ``"sphere-gauss"``.
    M : int
        Node index bound (circle: nodes are indexed 0..M).
    h_theta : float or None
        Angular spacing 2*pi/M in circle mode, None otherwise.
    """

    nodes: list
    weights: np.ndarray
    mode: str
    M: int
    h_theta: float | None = None
    vectors: np.ndarray = field(default=None, repr=False)  # (L, dim) row per node

    def __post_init__(self):
        if self.vectors is None:
            vec = np.array([d.unit_vector for d in self.nodes])
            object.__setattr__(self, "vectors", vec)

    def __len__(self):
        return len(self.nodes)

    @property
    def thetas(self):
        return np.array([d.theta for d in self.nodes])


def build_circle_trapezoid(M):
    """Composite trapezoid rule on the unit circle with M panels.

    Returns M+1 nodes theta_m = m*2*pi/M, m = 0..M, with the endpoint
    weights halved: w_0 = w_M = h_theta/2 and w_m = h_theta in the
    interior.  theta_0 = 0 and theta_M = 2*pi carry the same direction
    vector but are kept as distinct ordinates; downstream solves treat
    them separately and their solutions coincide by construction.

    Parameters
    ----------
    M : int
        Number of panels, M >= 2.  The angular spacing is h_theta = 2*pi/M.
    """
    M = int(M)
    if M < 2:
        raise ValueError(f"circle trapezoid rule needs M >= 2, got {M}")
    h = 2.0 * np.pi / M
    thetas = h * np.arange(M + 1)
    vectors = np.column_stack([np.cos(thetas), np.sin(thetas)])
    # snap rounding noise at axis-aligned angles to exact zeros so the
    # s.n = 0 tie rule in edge classification sees true ties
    vectors[np.abs(vectors) < 1e-14] = 0.0
    # pin the duplicated endpoint to the exact same vector as theta=0
    vectors[-1] = vectors[0]
    weights = np.full(M + 1, h)
    weights[0] = weights[-1] = 0.5 * h
    nodes = [Direction(float(t), vectors[i]) for i, t in enumerate(thetas)]
    return AngularQuadrature(nodes, weights, "circle-trapezoid", M, h, vectors)


def build_sphere_gauss(m):
    """Product rule on the unit sphere: Gauss-Legendre in cos(polar),
    equispaced azimuth.

    2*m*m nodes total: m Gauss-Legendre nodes for cos(theta) on [-1, 1]
    crossed with 2*m azimuths phi_j = j*pi/m, each carrying weight
    (pi/m) * w_i.  Weights sum to 4*pi.  Diagnostic use only (quadrature
    and kernel normalization tests); the spatial solver is 2D.
    """
    m = int(m)
    if m < 1:
        raise ValueError(f"sphere rule needs m >= 1, got {m}")
    mu, w = np.polynomial.legendre.leggauss(m)  # cos(polar) nodes
    phi = (np.pi / m) * np.arange(2 * m)
    sin_pol = np.sqrt(1.0 - mu**2)
    nodes = []
    weights = []
    for i in range(m):
        for j in range(2 * m):
            vec = np.array(
                [
                    sin_pol[i] * np.cos(phi[j]),
                    sin_pol[i] * np.sin(phi[j]),
                    mu[i],
                ]
            )
            nodes.append(Direction((float(np.arccos(mu[i])), float(phi[j])), vec))
            weights.append((np.pi / m) * w[i])
    weights = np.array(weights)
    return AngularQuadrature(nodes, weights, "sphere-gauss", len(nodes) - 1, None)


@dataclass(frozen=True)
class HenyeyGreenstein:
    """Henyey-Greenstein phase function with anisotropy eta in (-1, 1).

    Phi(t) = (1 / (2^{d-1} pi)) * (1 - eta^2) / (1 + eta^2 - 2 eta t)^{3/2}.

    The 3/2 exponent is used for both d = 2 and d = 3.  With d = 3 the
    sphere integral is exactly 1; with d = 2 the circle integral is not
    (about 1.418 at eta = 0.5), which is why ``build_scatter_kernel``
    exposes a ``renormalize`` switch.
    """

    eta: float
    d: int = 2

    def __post_init__(self):
        if not -1.0 < self.eta < 1.0:
            raise ValueError(f"anisotropy eta must lie in (-1, 1), got {self.eta}")
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        denom = 2.0 ** (self.d - 1) * np.pi
        return (1.0 - self.eta**2) / (denom * (1.0 + self.eta**2 - 2.0 * self.eta * t) ** 1.5)


@dataclass(frozen=True)
class LinearAnisotropic:
    """Phi(t) = (2 + t) / (4 pi); unit circle integral for any direction."""

    def __call__(self, t):
        return (2.0 + np.asarray(t, dtype=float)) / (4.0 * np.pi)


@dataclass(frozen=True)
class Isotropic:
    """Constant phase function, 1/(2 pi) on the circle, 1/(4 pi) on the sphere."""

    d: int = 2

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        c = 1.0 / (2.0 * np.pi) if self.d == 2 else 1.0 / (4.0 * np.pi)
        return np.full_like(t, c)


def eval_phase(phase, t):
    """Evaluate a phase function at cosine(s) t, enforcing t in [-1, 1].

    Values outside [-1, 1] by more than 1e-12 raise ValueError; smaller
    rounding overshoot is clamped.
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        bad = t[np.abs(t) > 1.0 + 1e-12]
        raise ValueError(f"phase cosine outside [-1, 1]: {bad.flat[0]}")
    t = np.clip(t, -1.0, 1.0)
    return phase(t)


@dataclass(frozen=True)
class ScatterKernel:
    """Discrete scattering kernel over an ordinate set.

    Attributes
    ----------
    matrix : ndarray, shape (L, L)
        Entry [m, l] = Phi(s_m . s_l) (after optional row renormalization).
    row_mass : ndarray, shape (L,)
        b_m = sum_l w_l Phi(s_m . s_l).
    sigma_t, sigma_s : float
        Total and scattering cross-sections, sigma_t > sigma_s >= 0.
    positivity_margin : float
        sigma_t - sigma_s * max_m b_m.  Must be positive for a solvable
        configuration; recorded here either way, callers decide.
    renormalized : bool
        True if each row was divided by its raw mass so b_m = 1.
    """

    matrix: np.ndarray
    row_mass: np.ndarray
    sigma_t: float
    sigma_s: float
    positivity_margin: float
    renormalized: bool = False


def build_scatter_kernel(quad, phase, sigma_t, sigma_s, renormalize=False):
    """Tabulate Phi(s_m . s_l) over a quadrature and record diagnostics.

    Parameters
    ----------
    quad : AngularQuadrature
    phase : callable
        Phase function Phi(t) for cosine t.
    sigma_t, sigma_s : float
        Cross-sections with sigma_t > sigma_s >= 0.
    renormalize : bool, optional
        Divide each row of the phase matrix by its raw row mass so that
        the discrete kernel preserves constants exactly (b_m = 1).
        Default False: the phase formula is used verbatim.
    """
    if not sigma_t > sigma_s >= 0.0:
        raise ValueError(
            f"need sigma_t > sigma_s >= 0, got sigma_t={sigma_t}, sigma_s={sigma_s}"
        )
    cosines = quad.vectors @ quad.vectors.T
    matrix = eval_phase(phase, cosines)
    row_mass = matrix @ quad.weights
    if renormalize:
        matrix = matrix / row_mass[:, None]
        row_mass = matrix @ quad.weights
    margin = sigma_t - sigma_s * float(row_mass.max())
    return ScatterKernel(matrix, row_mass, float(sigma_t), float(sigma_s), margin, renormalize)


def apply_scatter(kernel, quad, values):
    """Apply the discrete scattering operator at a point.

    out[m] = sum_l w_l * Phi[m, l] * values[l].  ``values`` may carry
    trailing axes (e.g. per-cell coefficient blocks); the ordinate axis
    must come first.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(quad):
        raise ValueError(
            f"expected {len(quad)} per-ordinate values, got {values.shape[0]}"
        )
    return np.tensordot(kernel.matrix * quad.weights[None, :], values, axes=(1, 0))


def normalization_residual(kernel):
    """Per-ordinate defect |1 - b_m| of the discrete kernel row masses."""
    return np.abs(1.0 - kernel.row_mass)
