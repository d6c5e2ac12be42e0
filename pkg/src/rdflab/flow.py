"""Ricci-DeTurck flow against the Euclidean background.

The evolution equation is

    d/dt g_ij = -2 Ric_ij + grad_i W_j + grad_j W_i,
    W^k       = g^{ij} Gamma^k_ij            (flat background connection)

integrated by explicit RK2 (midpoint; RK4 behind a config flag) with the
CFL step dt = cfl * h^2 / lambda_max(g^{-1}).  A Dirichlet ring of
`boundary_width` nodes is held fixed by forcing the right-hand side to
zero there; inputs are expected to be exactly Euclidean near the boundary
(use cutoff_extend).  The Euclidean metric is an exact fixed point of the
discrete right-hand side.

The associated point-tracking ODE  dx/dt = -W(x, t)  is integrated from
trajectory snapshots with W multilinear in space and linear in time.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .curvature import (
    MetricField,
    christoffel_components,
    ricci_components,
    sym_eig_range,
    sym_inverse,
)
from .grid_calculus import (
    GridSpec,
    SymTensorField,
    VectorField,
    _diff1,
    _interp_components,
    sym_component_count,
    sym_index,
    sym_pairs,
)
from .metrics_zoo import CutoffSpec, cutoff


class FlowBlowupError(RuntimeError):
    """Raised when the evolving metric leaves the admissible band."""


@dataclass(frozen=True)
class FlowConfig:
    end_time: float
    cfl: float = 0.1
    eps0: float = 0.1
    boundary_width: int = 3
    snapshots_per_decade: int = 16
    snapshot_times: tuple[float, ...] | None = None
    fixed_dt: float | None = None
    integrator: str = "rk2"
    stencil_scheme: str = "central2"
    max_steps: int = 500_000

    def __post_init__(self):
        if self.end_time <= 0:
            raise ValueError("end_time must be positive")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.boundary_width < 1:
            raise ValueError("boundary ring must be at least 1 node wide")
        if self.integrator not in ("rk2", "rk4"):
            raise ValueError("integrator must be rk2 or rk4")
        if self.stencil_scheme not in ("central2", "central4"):
            raise ValueError("stencil_scheme must be central2 or central4")
        if self.snapshot_times is not None:
            object.__setattr__(self, "snapshot_times",
                               tuple(sorted(float(t) for t in self.snapshot_times)))


@dataclass
class FlowState:
    """One snapshot: time plus raw metric components (MetricField on demand)."""

    time: float
    grid: GridSpec
    components: np.ndarray

    @property
    def metric(self) -> MetricField:
        return MetricField.from_components(self.grid, self.components)


@dataclass
class Trajectory:
    grid: GridSpec
    config: FlowConfig
    states: list[FlowState] = field(default_factory=list)
    tracked_points: np.ndarray | None = None  # (len(states), n), set by psi_track

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def state_at(self, t: float) -> FlowState:
        times = self.times
        i = int(np.argmin(np.abs(times - t)))
        return self.states[i]

    def with_tracked_points(self, path: np.ndarray) -> "Trajectory":
        return Trajectory(self.grid, self.config, self.states, path)


# ---------------------------------------------------------------------------
# pointwise operations


def cutoff_extend(g: MetricField, center: Sequence[float], r_inner: float,
                  r_outer: float) -> MetricField:
    """Blend g into the Euclidean metric: phi*g + (1-phi)*g_euc with the
    quintic radial cutoff phi (1 inside r_inner, 0 outside r_outer).

    Output equals g bit-exactly inside r_inner and g_euc outside r_outer.
    """
    grid = g.grid
    phi = cutoff(CutoffSpec(tuple(center), r_inner, r_outer), grid).values
    n = grid.dimension
    comps = np.empty_like(g.components)
    for (i, j) in sym_pairs(n):
        c = sym_index(i, j)
        eucl = 1.0 if i == j else 0.0
        comps[c] = phi * g.components[c] + (1.0 - phi) * eucl
    return MetricField.from_components(grid, comps)


def _deturck_components(grid: GridSpec, comps: np.ndarray, ginv: np.ndarray,
                        gamma: np.ndarray) -> np.ndarray:
    """W^k = g^{ij} Gamma^k_ij."""
    n = grid.dimension
    w = np.zeros((n,) + grid.shape)
    scratch = np.empty(grid.shape)
    for k in range(n):
        for (i, j) in sym_pairs(n):
            np.multiply(ginv[sym_index(i, j)], gamma[k, sym_index(i, j)], out=scratch)
            if i != j:
                scratch *= 2.0
            w[k] += scratch
    return w


def deturck_vector(g: MetricField) -> VectorField:
    """The flat-background DeTurck vector field of a metric."""
    gamma = christoffel_components(g.grid, g.components, g.inverse_components)
    return VectorField(g.grid, _deturck_components(
        g.grid, g.components, g.inverse_components, gamma))


def _zero_ring(comps: np.ndarray, grid: GridSpec, width: int) -> None:
    for ax in range(grid.dimension):
        sl_lo = (slice(None),) + (slice(None),) * ax + (slice(0, width),)
        sl_hi = (slice(None),) + (slice(None),) * ax + (slice(-width, None),)
        comps[sl_lo] = 0.0
        comps[sl_hi] = 0.0


def _rhs_components(grid: GridSpec, comps: np.ndarray, boundary_width: int,
                    scheme: str = "central2") -> np.ndarray:
    """-2 Ric + sym covariant derivative of the lowered DeTurck vector,
    forced to zero on the boundary ring."""
    n = grid.dimension
    h = grid.spacing
    ginv = sym_inverse(n, comps)
    gamma = christoffel_components(grid, comps, ginv, scheme)
    ric = ricci_components(grid, gamma, scheme)
    w_up = _deturck_components(grid, comps, ginv, gamma)
    scratch = np.empty(grid.shape)
    w_low = np.zeros_like(w_up)
    for j in range(n):
        for k in range(n):
            np.multiply(comps[sym_index(j, k)], w_up[k], out=scratch)
            w_low[j] += scratch
    rhs = ric
    rhs *= -2.0
    for (a, b) in sym_pairs(n):
        c = sym_index(a, b)
        rhs[c] += _diff1(w_low[b], a, h, scheme, out=scratch)
        rhs[c] += _diff1(w_low[a], b, h, scheme, out=scratch)
        for k in range(n):
            np.multiply(gamma[k, c], w_low[k], out=scratch)
            scratch *= 2.0
            rhs[c] -= scratch
    _zero_ring(rhs, grid, boundary_width)
    return rhs


def rdf_rhs(g: MetricField, boundary_width: int = 3,
            scheme: str = "central2") -> SymTensorField:
    """Right-hand side of the flow at a metric (zero on the boundary ring)."""
    return SymTensorField(
        g.grid, _rhs_components(g.grid, g.components, boundary_width, scheme))


# ---------------------------------------------------------------------------
# time stepping


def _check_euclidean_ring(grid: GridSpec, comps: np.ndarray, width: int) -> None:
    n = grid.dimension
    worst = 0.0
    for (i, j) in sym_pairs(n):
        c = comps[sym_index(i, j)].copy()
        if i == j:
            c -= 1.0
        for ax in range(n):
            sl_lo = (slice(None),) * ax + (slice(0, width),)
            sl_hi = (slice(None),) * ax + (slice(-width, None),)
            worst = max(worst, float(np.abs(c[sl_lo]).max()), float(np.abs(c[sl_hi]).max()))
    if worst > 1e-9:
        raise ValueError(
            f"initial metric deviates from Euclidean by {worst:.3g} on the boundary "
            "ring; extend it with cutoff_extend first"
        )


def _eig_band(n: int, comps: np.ndarray) -> tuple[float, float]:
    lam_min, lam_max = sym_eig_range(n, comps)
    return float(lam_min.min()), float(lam_max.max())


class _Stepper:
    """Shared stepping logic for one or two lockstep evolutions."""

    def __init__(self, grid: GridSpec, cfg: FlowConfig, metrics: list[np.ndarray]):
        self.grid = grid
        self.cfg = cfg
        self.comps = [m.copy() for m in metrics]
        self.t = 0.0
        self.h2 = grid.spacing**2
        self.n = grid.dimension
        # an exactly Euclidean member has exactly zero rhs at every step;
        # skipping it is a bit-identical shortcut
        eucl = np.zeros((sym_component_count(self.n),) + grid.shape)
        for i in range(self.n):
            eucl[sym_index(i, i)] = 1.0
        self.static = [bool(np.array_equal(m, eucl)) for m in metrics]

    def _dt(self) -> float:
        if self.cfg.fixed_dt is not None:
            return self.cfg.fixed_dt
        lam_low = np.inf
        for i, comps in enumerate(self.comps):
            if self.static[i]:
                lam_low = min(lam_low, 1.0)
                continue
            lam_min, lam_max = _eig_band(self.n, comps)
            self._band_check(lam_min, lam_max)
            lam_low = min(lam_low, lam_min)
        if lam_low < 1e-6:
            raise FlowBlowupError(f"CFL collapse at t={self.t:.6g}: eigenvalue {lam_low:.3g}")
        # lambda_max(g^{-1}) = 1 / lambda_min(g)
        return self.cfg.cfl * self.h2 * lam_low

    def _band_check(self, lam_min: float, lam_max: float) -> None:
        lo = max(0.1, 1.0 - 2.0 * self.cfg.eps0)
        hi = 1.0 + 2.0 * self.cfg.eps0
        if lam_min < lo or lam_max > hi:
            raise FlowBlowupError(
                f"metric eigenvalues [{lam_min:.4g}, {lam_max:.4g}] left the band "
                f"[{lo:.4g}, {hi:.4g}] at t={self.t:.6g}"
            )

    def step(self, dt: float) -> None:
        bw = self.cfg.boundary_width
        sch = self.cfg.stencil_scheme
        for i, comps in enumerate(self.comps):
            if self.static[i]:
                continue
            if self.cfg.integrator == "rk2":
                k1 = _rhs_components(self.grid, comps, bw, sch)
                k2 = _rhs_components(self.grid, comps + 0.5 * dt * k1, bw, sch)
                self.comps[i] = comps + dt * k2
            else:
                k1 = _rhs_components(self.grid, comps, bw, sch)
                k2 = _rhs_components(self.grid, comps + 0.5 * dt * k1, bw, sch)
                k3 = _rhs_components(self.grid, comps + 0.5 * dt * k2, bw, sch)
                k4 = _rhs_components(self.grid, comps + dt * k3, bw, sch)
                self.comps[i] = comps + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(self.comps[i])):
                raise FlowBlowupError(f"non-finite metric at t={self.t + dt:.6g}")
        self.t += dt


def _snapshot_targets(cfg: FlowConfig, dt0: float) -> list[float]:
    if cfg.snapshot_times is not None:
        return [t for t in cfg.snapshot_times if 0.0 < t <= cfg.end_time]
    ppd = cfg.snapshots_per_decade
    t_hi, t_lo = cfg.end_time, max(dt0, cfg.end_time * 1e-4)
    k_hi = int(np.floor(ppd * np.log10(t_hi)))
    k_lo = int(np.ceil(ppd * np.log10(t_lo)))
    targets = [10.0 ** (k / ppd) for k in range(k_lo, k_hi + 1)]
    return sorted(set(targets + [cfg.end_time]))


def _evolve_multi(metrics: list[MetricField], cfg: FlowConfig) -> list[Trajectory]:
    grid = metrics[0].grid
    for g in metrics:
        if g.grid is not grid and g.grid != grid:
            raise ValueError("pair evolution requires a shared grid")
        dist = g.distance_to_euclidean()
        if dist > cfg.eps0:
            raise ValueError(
                f"initial metric is {dist:.4g} from Euclidean in sup norm, beyond "
                f"eps0={cfg.eps0}; not in the admissible band"
            )
        _check_euclidean_ring(grid, g.components, cfg.boundary_width)

    stepper = _Stepper(grid, cfg, [g.components for g in metrics])
    trajs = [Trajectory(grid, cfg) for _ in metrics]

    def record():
        for traj, comps in zip(trajs, stepper.comps):
            traj.states.append(FlowState(stepper.t, grid, comps.copy()))

    record()  # t = 0
    targets = _snapshot_targets(cfg, stepper._dt())
    next_i = 0
    steps = 0
    while stepper.t < cfg.end_time - 1e-15:
        dt = min(stepper._dt(), cfg.end_time - stepper.t)
        stepper.step(dt)
        steps += 1
        if steps > cfg.max_steps:
            raise FlowBlowupError("exceeded max_steps; CFL step too small for end_time")
        due = False
        while next_i < len(targets) and stepper.t >= targets[next_i] - 1e-12:
            next_i += 1
            due = True
        if due or stepper.t >= cfg.end_time - 1e-15:
            record()
    return trajs


def evolve(g0: MetricField, cfg: FlowConfig) -> Trajectory:
    """Integrate one metric to cfg.end_time, recording geometric-cadence
    snapshots (t = 0 and the final time always included)."""
    return _evolve_multi([g0], cfg)[0]


def pair_evolve(g0: MetricField, gh0: MetricField, cfg: FlowConfig
                ) -> tuple[Trajectory, Trajectory]:
    """Evolve two metrics in lockstep: identical dt sequence (the more
    restrictive CFL of the pair) and aligned snapshot times."""
    trajs = _evolve_multi([g0, gh0], cfg)
    return trajs[0], trajs[1]


# ---------------------------------------------------------------------------
# point tracking


def _snapshot_vector_field(traj: Trajectory, i: int) -> np.ndarray:
    state = traj.states[i]
    ginv = sym_inverse(traj.grid.dimension, state.components)
    gamma = christoffel_components(traj.grid, state.components, ginv)
    return _deturck_components(traj.grid, state.components, ginv, gamma)


def psi_track(traj: Trajectory, x0: Sequence[float], substeps: int = 4) -> np.ndarray:
    """Integrate dx/dt = -W(x, t) from the trajectory snapshots.

    W is the DeTurck vector of the snapshot metrics, interpolated
    multilinearly in space and linearly in time; the integrator is RK2
    (midpoint) with `substeps` steps per snapshot interval.  Returns the
    path sampled at snapshot times, starting at x0.  Only the two
    bracketing snapshot vector fields are held in memory at a time.
    """
    grid = traj.grid
    x = np.array([float(c) for c in x0])
    if not grid.contains_point(x):
        raise ValueError("tracking start point outside the grid box")
    times = traj.times
    path = [x.copy()]
    w_lo = _snapshot_vector_field(traj, 0)
    for i in range(len(times) - 1):
        w_hi = _snapshot_vector_field(traj, i + 1)

        def w_at(tau: float, pt: np.ndarray) -> np.ndarray:
            if not grid.contains_point(pt):
                raise ValueError("tracked path exits the grid box")
            wa = _interp_components(grid, w_lo, pt)
            wb = _interp_components(grid, w_hi, pt)
            return (1.0 - tau) * wa + tau * wb

        dt = (times[i + 1] - times[i]) / substeps
        for s in range(substeps):
            k1 = -w_at(s / substeps, x)
            k2 = -w_at((s + 0.5) / substeps, x + 0.5 * dt * k1)
            x = x + dt * k2
        if not grid.contains_point(x):
            raise ValueError("tracked path exits the grid box")
        path.append(x.copy())
        w_lo = w_hi
    return np.array(path)
