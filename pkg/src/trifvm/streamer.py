"""Electron / ion / potential coupling.

Electrons drift-diffuse in the electric field, ions sit still and grow by
ionization, and the potential comes from a factor-once direct solve of the
charge-driven Poisson equation.  Everything here is per-rank local given a
current (post-solve, post-exchange) state; the multi-rank loop in `runtime`
composes these pieces around its collectives, and `streamer_step` is the
single-rank convenience wrapper of the same cycle.

Closed forms for the transport coefficients are not part of the problem
statement; two config-selected families are supported:

  linear  v_e = -mu_e E, D_e = const, S_e = alpha |v_e| n_e
  table   |E| -> (mu_e, D_e, alpha) piecewise-linear lookup

with dimensionless defaults mu_e = 1, D_e = 0.1, alpha = 1, eps = e = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .direct_solver import LuFactors, solve
from .errors import ConfigError, ZeroDt
from .mesh import DiamondCells, NodeWeights, build_diamonds, node_weights
from .partition import Subdomain
from .poisson import PoissonProblem, assemble_rhs
from .transport import (BoundaryValues, FaceVelocity, Field,
                        apply_boundary_conditions, classify_faces,
                        convective_residual, diffusive_residual,
                        dirichlet_node_data, dirichlet_values, explicit_step,
                        face_gradients, node_values, stable_dt)


@dataclass
class StreamerCoefficients:
    """Dielectric constant, elementary charge, and the v_e/D_e/S_e family."""

    eps: float = 1.0
    q_e: float = 1.0
    model: str = "linear"
    mu_e: float = 1.0
    d_e: float = 0.1
    alpha: float = 1.0
    # table model: columns |E|, mu_e, D_e, alpha with |E| strictly ascending
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.model not in ("linear", "table"):
            raise ConfigError(f"unknown coefficient model '{self.model}'")
        if self.model == "table":
            t = np.asarray(self.table, dtype=np.float64)
            if t.ndim != 2 or t.shape[1] != 4 or t.shape[0] < 2:
                raise ConfigError("coefficient table must be (rows >= 2) x 4")
            if not np.all(np.diff(t[:, 0]) > 0):
                raise ConfigError("table |E| knots must be strictly ascending")
            if not np.all(np.isfinite(t)) or np.any(t[:, 2] < 0):
                raise ConfigError("table entries must be finite with D_e >= 0")
            self.table = t
        elif self.d_e < 0:
            raise ConfigError("D_e must be >= 0")

    def mobility(self, e_mag):
        if self.model == "linear":
            return self.mu_e
        return np.interp(e_mag, self.table[:, 0], self.table[:, 1])

    def diffusion(self, e_mag):
        if self.model == "linear":
            return self.d_e
        return np.interp(e_mag, self.table[:, 0], self.table[:, 2])

    def ionization(self, e_mag):
        if self.model == "linear":
            return self.alpha
        return np.interp(e_mag, self.table[:, 0], self.table[:, 3])


@dataclass
class StreamerState:
    n_e: Field
    n_i: Field
    v_pot: Field
    e_faces: np.ndarray | None = None   # -grad V per face, (n_faces, 2)
    clips: int = 0                      # negative-density clip events so far

    @property
    def time(self) -> float:
        return self.n_e.time


@dataclass
class StreamerSystem:
    """Per-rank geometry + boundary context for the coupled cycle.

    problem/factors are present only where the solve happens (single rank,
    or the host in a multi-rank run); the flux pieces never touch them.
    """

    sub: Subdomain
    diamonds: DiamondCells
    weights: NodeWeights
    kind_ne: np.ndarray
    dirich_ne: np.ndarray
    kind_pot: np.ndarray
    dirich_pot: np.ndarray
    potential_bc: dict
    ndata_ne: tuple = (None, None)
    ndata_pot: tuple = (None, None)
    cfl: float = 0.4
    problem: PoissonProblem | None = None
    factors: LuFactors | None = None


def build_system(sub: Subdomain, species_bc: dict, potential_bc: dict,
                 diamonds: DiamondCells | None = None,
                 weights: NodeWeights | None = None, cfl: float = 0.4,
                 problem: PoissonProblem | None = None,
                 factors: LuFactors | None = None) -> StreamerSystem:
    if diamonds is None:
        diamonds = build_diamonds(sub.local_mesh)
    if weights is None:
        weights = node_weights(sub.local_mesh, cell_order=sub.cells_l2g)
    kind_ne = classify_faces(sub, species_bc)
    kind_pot = classify_faces(sub, potential_bc)
    return StreamerSystem(
        sub=sub, diamonds=diamonds, weights=weights,
        kind_ne=kind_ne, dirich_ne=dirichlet_values(sub, species_bc, kind_ne),
        kind_pot=kind_pot,
        dirich_pot=dirichlet_values(sub, potential_bc, kind_pot),
        potential_bc=potential_bc,
        ndata_ne=dirichlet_node_data(sub, species_bc, kind_ne),
        ndata_pot=dirichlet_node_data(sub, potential_bc, kind_pot),
        cfl=cfl, problem=problem, factors=factors)


def gaussian_seed(sub: Subdomain, center=(0.5, 0.5), sigma=0.1,
                  amplitude=1.0) -> np.ndarray:
    """Gaussian bump sampled at every local centroid (own + halo)."""
    if sigma <= 0:
        raise ConfigError("seed sigma must be positive")
    c = sub.local_mesh.centroids
    r2 = (c[:, 0] - center[0]) ** 2 + (c[:, 1] - center[1]) ** 2
    return amplitude * np.exp(-r2 / (2.0 * sigma ** 2))


def charge_source(state: StreamerState, coeffs: StreamerCoefficients,
                  sub: Subdomain) -> np.ndarray:
    """RHS of -lap V = (e/eps)(n_i - n_e), own cells only."""
    n = sub.n_own
    return (coeffs.q_e / coeffs.eps) * (state.n_i.values[:n]
                                        - state.n_e.values[:n])


def electric_field(sub: Subdomain, v_pot: Field, weights: NodeWeights,
                   diamonds: DiamondCells,
                   bvals_pot: BoundaryValues) -> np.ndarray:
    """E = -grad V on every face, via the diamond-cell gradient."""
    v_node = node_values(sub, v_pot, weights)
    return -face_gradients(sub, v_pot, v_node, diamonds, bvals_pot)


@dataclass
class FluxContext:
    """Everything the explicit update needs, evaluated at the current state."""

    e_faces: np.ndarray
    vel: FaceVelocity
    d_faces: object             # scalar or per-face array
    speed_cell: np.ndarray      # |v_e| per own cell (mean of its 3 faces)
    s_e: np.ndarray             # ionization rate per own cell
    bvals_ne: BoundaryValues
    dt_stable: float


def prepare_fluxes(state: StreamerState, coeffs: StreamerCoefficients,
                   sys: StreamerSystem) -> FluxContext:
    """Field, drift velocity, coefficients, source, and CFL bound.

    Requires v_pot and n_e with fresh halo slots.  The 3-face means below
    use the canonical cell_faces order, so they are identical no matter how
    the mesh was partitioned.
    """
    sub = sys.sub
    lm = sub.local_mesh
    bvals_pot = apply_boundary_conditions(sub, state.v_pot, sys.kind_pot,
                                          sys.dirich_pot, sys.ndata_pot)
    e_faces = electric_field(sub, state.v_pot, sys.weights, sys.diamonds,
                             bvals_pot)
    e_mag = np.hypot(e_faces[:, 0], e_faces[:, 1])
    mu_f = coeffs.mobility(e_mag)
    vel = FaceVelocity(vectors=-np.asarray(mu_f)[..., None] * e_faces)
    speed_f = np.asarray(mu_f) * e_mag
    d_f = coeffs.diffusion(e_mag)

    cf = lm.cell_faces[:sub.n_own]
    speed_cell = (speed_f[cf[:, 0]] + speed_f[cf[:, 1]]
                  + speed_f[cf[:, 2]]) / 3.0
    if coeffs.model == "linear":
        alpha_cell = coeffs.alpha
    else:
        e_cell = (e_mag[cf[:, 0]] + e_mag[cf[:, 1]] + e_mag[cf[:, 2]]) / 3.0
        alpha_cell = coeffs.ionization(e_cell)
    s_e = alpha_cell * speed_cell * state.n_e.values[:sub.n_own]

    bvals_ne = apply_boundary_conditions(sub, state.n_e, sys.kind_ne,
                                         sys.dirich_ne, sys.ndata_ne)
    dt = stable_dt(sub, vel, diffusion=d_f, cfl=sys.cfl)
    return FluxContext(e_faces=e_faces, vel=vel, d_faces=d_f,
                       speed_cell=speed_cell, s_e=s_e, bvals_ne=bvals_ne,
                       dt_stable=dt)


def apply_update(state: StreamerState, sys: StreamerSystem, fc: FluxContext,
                 dt: float, conv: np.ndarray, diss: np.ndarray):
    """Advance n_e (transport + source) and n_i (source only) by dt.

    Returns (n_e, n_i, clip_count).  Negative electron densities are clipped
    to zero and counted; under a CFL-respecting dt on smooth data the count
    stays zero.
    """
    sub = sys.sub
    n_e = explicit_step(sub, state.n_e, conv, diss, dt, source=fc.s_e)
    own = n_e.values[:sub.n_own]
    clip = int(np.count_nonzero(own < 0.0))
    if clip:
        np.maximum(own, 0.0, out=own)

    n_i = state.n_i.copy()
    n_i.values[:sub.n_own] += dt * fc.s_e
    n_i.time += dt
    n_i.halo_stale = sub.n_own < sub.n_local
    return n_e, n_i, clip


def total_charge(sub: Subdomain, state: StreamerState) -> float:
    """Area-weighted net charge sum(mu (n_i - n_e)) over own cells.

    The ionization source feeds both species identically, so with zero
    boundary flux this is conserved by every step.
    """
    n = sub.n_own
    mu = sub.local_mesh.areas[:n]
    return float(np.sum(mu * (state.n_i.values[:n] - state.n_e.values[:n])))


def streamer_step(state: StreamerState, coeffs: StreamerCoefficients,
                  sys: StreamerSystem, dt: float | None = None) -> StreamerState:
    """One coupled cycle on a single rank: solve V, E, fluxes, update.

    dt = None takes the CFL bound of the freshly computed drift field.
    Multi-rank runs use the same pieces through `runtime.run_simulation`,
    which replaces the direct solve/dt lines with collectives.
    """
    if sys.problem is None or sys.factors is None:
        raise ConfigError("streamer_step needs an assembled + factored system")
    sub = sys.sub
    src = charge_source(state, coeffs, sub)
    b = assemble_rhs(sub.local_mesh, src, sys.potential_bc, problem=sys.problem)
    x = solve(sys.factors, b)
    v_pot = Field(values=x, quantity="potential", time=state.time,
                  halo_stale=False)

    fc = prepare_fluxes(replace(state, v_pot=v_pot), coeffs, sys)
    if dt is None:
        dt = fc.dt_stable
        if not np.isfinite(dt):
            raise ZeroDt("nothing moves (E = 0 and D_e = 0); pass dt explicitly")
    conv = convective_residual(sub, state.n_e, fc.vel, fc.bvals_ne)
    diss = diffusive_residual(sub, state.n_e, sys.weights, sys.diamonds,
                              fc.bvals_ne, diffusion=fc.d_faces)
    n_e, n_i, clip = apply_update(state, sys, fc, dt, conv, diss)
    v_pot.time = n_e.time
    return StreamerState(n_e=n_e, n_i=n_i, v_pot=v_pot, e_faces=fc.e_faces,
                         clips=state.clips + clip)
