"""Manufactured solutions and the convergence/comparison drivers.

Two smooth cases on the unit square with constant cross sections:

* ``example1``: u = sin(pi x) sin(pi y), direction independent, forward
  peaked scattering.  With consistently normalized kernel rows the
  scattering operator reproduces u, so the source is the plain
  transport balance.
* ``example2``: u = exp(-x/2 - y/2) (1 + c cos theta) with the linearly
  anisotropic phase; the angular convolution has the closed form
  exp(-x/2 - y/2) (1 + (c/4) cos theta) and c = 1/(1 + 6 sigma_s)
  makes the pair consistent.

Errors are measured against the exact solution per ordinate with a
Gauss rule two degrees above the assembly rule, in both the angularly
weighted broken L2 norm (the tabulated quantity) and the triple norm
that adds edge-mismatch and boundary terms.
"""

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .angular import (
    HenyeyGreenstein,
    LinearAnisotropic,
    build_circle_trapezoid,
    build_scatter_kernel,
)
from .assembly import (
    DODG,
    DODSD,
    WG,
    Medium,
    _field_edge_terms,
    assemble_direction,
)
from .elements import (
    ElementQuadrature,
    ElementTables,
    LocalBasis,
    _edge_points,
    gauss_01,
    project_field,
)
from .mesh import build_mesh, classify_edges
from .solver import LinearSolveConfig, SolverFailure, SourceIterationConfig, source_iteration

__all__ = [
    "ManufacturedCase",
    "ConvergenceReport",
    "AngularStudyReport",
    "CaseSolution",
    "build_case",
    "solve_case",
    "measure_error",
    "outer_tolerance",
    "run_convergence",
    "run_comparison",
    "dominance_ratios",
    "run_angular_study",
]


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution, its angular convolution, the matching source,
    and the inflow data, all vectorized over (x, y, theta)."""

    name: str
    u: callable
    scatter_u: callable
    f: callable
    u_in: callable
    phase: object
    medium: Medium
    renormalize: bool = True


def build_case(name, sigma_t=2.0, sigma_s=0.5, eta=0.5):
    """Manufactured case by name; cross sections and the anisotropy
    factor are adjustable, the sources adapt.

    ``renormalize`` defaults to on so the discrete scattering operator
    reproduces the closed forms exactly (for the linearly anisotropic
    phase the row masses are already 1 and the toggle is moot).
    """
    st, ss = float(sigma_t), float(sigma_s)
    medium = Medium(st, ss)
    if name == "example1":

        def u(x, y, th):
            return np.sin(np.pi * x) * np.sin(np.pi * y) + 0.0 * th

        def f(x, y, th):
            adv = np.pi * (
                np.cos(th) * np.cos(np.pi * x) * np.sin(np.pi * y)
                + np.sin(th) * np.sin(np.pi * x) * np.cos(np.pi * y)
            )
            return adv + (st - ss) * np.sin(np.pi * x) * np.sin(np.pi * y)

        return ManufacturedCase(
            name, u, u, f, u, HenyeyGreenstein(eta), medium
        )
    if name == "example2":
        c = 1.0 / (1.0 + 6.0 * ss)

        def u(x, y, th):
            return np.exp(-0.5 * x - 0.5 * y) * (1.0 + c * np.cos(th))

        def ku(x, y, th):
            return np.exp(-0.5 * x - 0.5 * y) * (1.0 + 0.25 * c * np.cos(th))

        def f(x, y, th):
            e = np.exp(-0.5 * x - 0.5 * y)
            adv = -0.5 * (np.cos(th) + np.sin(th)) * e * (1.0 + c * np.cos(th))
            return adv + st * e * (1.0 + c * np.cos(th)) - ss * e * (
                1.0 + 0.25 * c * np.cos(th)
            )

        return ManufacturedCase(name, u, ku, f, u, LinearAnisotropic(), medium)
    raise ValueError(f"unknown manufactured case {name!r}")


@dataclass
class CaseSolution:
    """One solved configuration with everything needed to measure it."""

    case: ManufacturedCase
    scheme: object
    field: np.ndarray
    trace: object
    systems: list
    quad: object
    kernel: object
    mesh: object
    tables: ElementTables


@dataclass
class ConvergenceReport:
    """Per-level errors in the tabulated norm with empirical orders.

    ``rows`` holds (1/h, error, eoc) with eoc = log2 of the successive
    error ratio and None on the first row.  The tabulated error is the
    ordinate-weighted broken L2 norm; the energy-norm errors (volume
    plus |s.n|-weighted jump terms) ride along for diagnostics and
    converge one half order slower (k+1/2 versus k+1).
    """

    case: str
    scheme: str
    k: int
    M: int
    rows: list = dc_field(default_factory=list)
    triple_errors: list = dc_field(default_factory=list)
    walls: list = dc_field(default_factory=list)
    iterations: list = dc_field(default_factory=list)

    @property
    def inv_h(self):
        return [r[0] for r in self.rows]

    @property
    def errors(self):
        return [r[1] for r in self.rows]

    @property
    def eocs(self):
        return [r[2] for r in self.rows[1:]]


@dataclass
class AngularStudyReport:
    """Error versus the number of ordinates at a fixed spatial level.

    Both smooth cases are integrated exactly by the trapezoid rule once
    M exceeds the angular bandwidth, so the total error does not decay
    with M; it converges (from either side -- the ordinate set samples a
    direction-dependent spatial error profile) to the plateau given by
    the finest run.  The angular contribution is therefore measured as
    the distance to that plateau.
    """

    case: str
    scheme: str
    k: int
    level: int
    rows: list = dc_field(default_factory=list)  # (M, error)

    @property
    def errors(self):
        return [r[1] for r in self.rows]

    @property
    def contributions(self):
        """|error(M) - error(M_finest)|; zero for the last row."""
        errs = self.errors
        return [abs(e - errs[-1]) for e in errs]

    @property
    def monotone(self):
        """Angular contribution non-increasing in M (tiny slack for
        roundoff at the plateau)."""
        ref = max(self.errors)
        tol = 1e-12 * ref
        cons = self.contributions
        return all(b <= a + tol for a, b in zip(cons, cons[1:]))

    def plateaued(self, frac=0.02):
        """Last decrement small against the spatial error itself."""
        return self.contributions[-2] <= frac * self.errors[-1]


def outer_tolerance(h, k):
    """Level tolerance for convergence studies: two orders below the
    expected error magnitude h^(k+1/2), capped at the production 1e-3
    and floored at 1e-11."""
    return max(min(1e-3, 1e-2 * h ** (k + 0.5)), 1e-11)


def _build_tables(k):
    return ElementTables(LocalBasis(k), ElementQuadrature.build(k))


def _assemble_all(case, scheme, mesh, tables, quad, kernel):
    return [
        assemble_direction(
            scheme, mesh, tables, quad, kernel, case.medium, m,
            f=case.f, u_in=case.u_in,
        )
        for m in range(len(quad))
    ]


def solve_case(case, scheme=None, k=1, level=3, M=20, cfg=None, renormalize=None):
    """Assemble and source-iterate one configuration.

    ``case`` is a name or a ManufacturedCase; ``cfg`` defaults to the
    production outer tolerance 1e-3.
    """
    if isinstance(case, str):
        case = build_case(case)
    scheme = scheme if scheme is not None else WG()
    quad = build_circle_trapezoid(M)
    ren = case.renormalize if renormalize is None else renormalize
    kernel = build_scatter_kernel(
        quad, case.phase, case.medium.sigma_t, case.medium.sigma_s, renormalize=ren
    )
    mesh = build_mesh(level)
    tables = _build_tables(k)
    systems = _assemble_all(case, scheme, mesh, tables, quad, kernel)
    field, trace = source_iteration(systems, kernel, quad, cfg)
    return CaseSolution(case, scheme, field, trace, systems, quad, kernel, mesh, tables)


def measure_error(field, case, mesh, tables, quad):
    """Both error norms of u - u_h against the case's exact solution.

    Volume terms use a (k+3)-point Gauss rule per axis (degree 2k+5,
    two above assembly).  Interior edge mismatch needs only the native
    edge rule ([u - u_h] = [u_h] for the smooth exact solutions here);
    boundary terms evaluate the exact trace on the finer edge rule.

    Returns (broken-L2 error, triple-norm error), both angularly
    weighted.
    """
    field = np.asarray(field)
    h = mesh.h
    k = tables.basis.k
    thetas = np.array([d.theta for d in quad.nodes])

    p1, w1 = gauss_01(k + 3)
    P = np.stack(np.meshgrid(p1, p1, indexing="ij"), axis=-1).reshape(-1, 2)
    W = np.outer(w1, w1).ravel()
    Vf = tables.basis.eval(P)
    vals = np.einsum("lcd,qd->lcq", field, Vf)
    org = mesh.cell_origins
    X = org[:, 0][None, :, None] + h * P[None, None, :, 0]
    Y = org[:, 1][None, :, None] + h * P[None, None, :, 1]
    exact = case.u(X, Y, thetas[:, None, None])
    vol = h * h * np.einsum("lcq,q->l", (vals - exact) ** 2, W)
    err_dom = float(np.sqrt(np.sum(quad.weights * vol)))

    tf = [tables.basis.eval(_edge_points(b, p1)) for b in range(4)]
    total = 0.0
    for m in range(len(quad)):
        sets = classify_edges(mesh, quad.vectors[m])
        jump, _, _ = _field_edge_terms(mesh, tables, field[m], field[m], sets)
        bdy = 0.0
        for b in range(4):
            sn = sets.side_sn[b]
            if sn == 0.0:
                continue
            cells = np.nonzero(mesh.boundary_side == b)[0]
            bc = mesh.edge_cells[cells, 0]
            ref = _edge_points(b, p1)
            xe = org[bc, 0][:, None] + h * ref[None, :, 0]
            ye = org[bc, 1][:, None] + h * ref[None, :, 1]
            diff = field[m][bc] @ tf[b].T - case.u(xe, ye, thetas[m])
            bdy += abs(sn) * h * np.sum(w1[None, :] * diff**2)
        total += quad.weights[m] * (vol[m] + 0.5 * jump + bdy)
    return err_dom, float(np.sqrt(total))


def project_exact(case, mesh, tables, quad):
    """Elementwise L2 projection of the exact solution, per ordinate."""
    field = np.empty((len(quad), mesh.n_cells, tables.dof))
    for m, node in enumerate(quad.nodes):
        th = node.theta
        field[m] = project_field(mesh, tables, lambda x, y: case.u(x, y, th))
    return field


def run_convergence(case="example1", scheme=None, k=1, levels=range(3, 8), M=20,
                    tol=None, renormalize=None, linear=None):
    """Refine through ``levels`` and tabulate errors and orders.

    The outer tolerance follows ``outer_tolerance`` per level unless a
    fixed ``tol`` is given.  Solver failures are re-raised with the
    offending level attached.
    """
    if isinstance(case, str):
        case = build_case(case)
    scheme = scheme if scheme is not None else WG()
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    quad = build_circle_trapezoid(M)
    ren = case.renormalize if renormalize is None else renormalize
    kernel = build_scatter_kernel(
        quad, case.phase, case.medium.sigma_t, case.medium.sigma_s, renormalize=ren
    )
    tables = _build_tables(k)
    report = ConvergenceReport(case.name, scheme.name, k, M)
    prev = None
    for lv in levels:
        mesh = build_mesh(lv)
        lt = tol if tol is not None else outer_tolerance(mesh.h, k)
        t0 = time.perf_counter()
        systems = _assemble_all(case, scheme, mesh, tables, quad, kernel)
        cfg = SourceIterationConfig(
            tol=lt, linear=linear if linear is not None else LinearSolveConfig()
        )
        try:
            field, trace = source_iteration(systems, kernel, quad, cfg)
        except SolverFailure as err:
            raise SolverFailure(
                f"level {lv} (1/h = {mesh.n}): {err}", err.residual
            ) from err
        wall = time.perf_counter() - t0
        err_dom, err_tri = measure_error(field, case, mesh, tables, quad)
        eoc = None if prev is None else float(np.log2(prev / err_dom))
        prev = err_dom
        report.rows.append((mesh.n, err_dom, eoc))
        report.triple_errors.append(err_tri)
        report.walls.append(wall)
        report.iterations.append(trace.iterations)
    return report


def run_comparison(case="example2", k=1, levels=range(3, 7), M=20, c_p=0.1,
                   sd_c=1.0, tol=None, renormalize=None, linear=None):
    """Same study for the three schemes; returns reports keyed by name."""
    schemes = (WG(), DODG(c_p=c_p), DODSD(c=sd_c))
    return {
        s.name: run_convergence(
            case, scheme=s, k=k, levels=levels, M=M, tol=tol,
            renormalize=renormalize, linear=linear,
        )
        for s in schemes
    }


def dominance_ratios(reports):
    """Per-level ratio of the first scheme's error to the best competing
    one; the recorded closeness metric for scheme comparisons."""
    names = list(reports)
    lead, rest = names[0], names[1:]
    inv_h = reports[lead].inv_h
    for n in rest:
        if reports[n].inv_h != inv_h:
            raise ValueError("comparison reports must share their levels")
    return [
        e / min(reports[n].errors[i] for n in rest)
        for i, e in enumerate(reports[lead].errors)
    ]


def run_angular_study(case="example2", scheme=None, k=2, level=5,
                      Ms=(4, 8, 16, 32), tol=1e-9, renormalize=None,
                      linear=None):
    """Error versus ordinate count at a fixed spatial level.

    Uses a tight outer tolerance by default so the angular variation is
    not masked by iteration noise; both smooth cases are integrated
    exactly by the trapezoid rule once M exceeds the angular bandwidth,
    so the curve plateaus at the spatial error rather than decaying at
    a rate.
    """
    if isinstance(case, str):
        case = build_case(case)
    scheme = scheme if scheme is not None else WG()
    Ms = list(Ms)
    if any(b <= a for a, b in zip(Ms, Ms[1:])):
        raise ValueError("ordinate counts must be strictly increasing")
    mesh = build_mesh(level)
    tables = _build_tables(k)
    ren = case.renormalize if renormalize is None else renormalize
    report = AngularStudyReport(case.name, scheme.name, k, level)
    for M in Ms:
        quad = build_circle_trapezoid(M)
        kernel = build_scatter_kernel(
            quad, case.phase, case.medium.sigma_t, case.medium.sigma_s,
            renormalize=ren,
        )
        systems = _assemble_all(case, scheme, mesh, tables, quad, kernel)
        cfg = SourceIterationConfig(
            tol=tol, linear=linear if linear is not None else LinearSolveConfig()
        )
        field, _ = source_iteration(systems, kernel, quad, cfg)
        err_dom, _ = measure_error(field, case, mesh, tables, quad)
        report.rows.append((M, err_dom))
    return report
