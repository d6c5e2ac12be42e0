"""Experiment layer: exponent fitting, stability and decay reports,
scalar-curvature persistence, pseudolocality probes, the end-to-end
quantitative-bound pipeline, and the sharpness sweep.

Every existential constant of the theory (closeness thresholds, stability
constants, persistence constants) is treated as a measured output, never an
assumed input; reports carry the measured values together with the regions
and grids actually used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import (
    CurvatureReport,
    MetricField,
    _extract_subgrid,
    _subgrid_coords,
    covariant_curvature_norms,
    ricci_components,
    christoffel_components,
    scalar_from_components,
    scalar_curvature,
    sym_inverse,
)
from .flow import (
    FlowConfig,
    Trajectory,
    cutoff_extend,
    pair_evolve,
    psi_track,
)
from .grid_calculus import (
    GridSpec,
    Region,
    ScalarField,
    SymTensorField,
    _diff1,
    _interp_components,
    cube,
    norm,
    sym_component_count,
    sym_index,
    sym_pairs,
    sym_weights,
)
from .metrics_zoo import BumpFamilyParams, sharpness_pair


# ---------------------------------------------------------------------------
# log-log power-law fitting


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    count: int
    log_points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if self.count < 4:
            raise ValueError("fit needs at least 4 samples")
        if not 0.0 <= self.r_squared <= 1.0:
            raise ValueError("R^2 out of range")

    def as_dict(self) -> dict:
        return {
            "count": self.count,
            "intercept": self.intercept,
            "log_points": [list(p) for p in self.log_points],
            "r_squared": self.r_squared,
            "slope": self.slope,
        }


def exponent_fit(samples) -> FitResult:
    """Least squares of ln y against ln x for positive samples with
    strictly increasing x."""
    samples = [(float(x), float(y)) for x, y in samples]
    if len(samples) < 4:
        raise ValueError("need at least 4 samples")
    xs = np.array([s[0] for s in samples])
    ys = np.array([s[1] for s in samples])
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("samples must be positive for a log-log fit")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("x values must be strictly increasing")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-28 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    r2 = min(max(r2, 0.0), 1.0)
    return FitResult(float(slope), float(intercept), r2, len(samples),
                     tuple(zip(lx.tolist(), ly.tolist())))


# ---------------------------------------------------------------------------
# difference norms along trajectories


def _interior_slices(grid: GridSpec, margin: int) -> tuple[slice, ...]:
    return (slice(margin, -margin),) * grid.dimension


def weighted_difference_sups(grid: GridSpec, diff: np.ndarray, margin: int = 3
                             ) -> tuple[float, float, float]:
    """Sup over the interior of |d|, |grad d|, |grad^2 d| in the Euclidean
    Frobenius norm (flat derivatives; k extra rings excluded per order)."""
    n = grid.dimension
    h = grid.spacing
    w = sym_weights(n)
    inner0 = _interior_slices(grid, margin)
    sq = np.tensordot(w, diff**2, axes=(0, 0))
    sup0 = float(np.sqrt(sq[inner0]).max())

    firsts = []
    sq1 = np.zeros(grid.shape)
    for ax in range(n):
        d1 = np.stack([_diff1(diff[c], ax, h, "central2") for c in range(diff.shape[0])])
        firsts.append(d1)
        sq1 += np.tensordot(w, d1**2, axes=(0, 0))
    inner1 = _interior_slices(grid, margin + 1)
    sup1 = float(np.sqrt(sq1[inner1]).max())

    sq2 = np.zeros(grid.shape)
    for ax2 in range(n):
        for ax1 in range(ax2 + 1):
            mult = 1.0 if ax1 == ax2 else 2.0
            d2 = np.stack([_diff1(firsts[ax1][c], ax2, h, "central2")
                           for c in range(diff.shape[0])])
            sq2 += mult * np.tensordot(w, d2**2, axes=(0, 0))
    inner2 = _interior_slices(grid, margin + 2)
    sup2 = float(np.sqrt(sq2[inner2]).max())
    return sup0, sup1, sup2


def _check_aligned(traj_a: Trajectory, traj_b: Trajectory) -> None:
    ta, tb = traj_a.times, traj_b.times
    if len(ta) != len(tb) or not np.allclose(ta, tb, rtol=0, atol=1e-14):
        raise ValueError("trajectories are not snapshot-aligned")


@dataclass
class StabilityReport:
    sigma0: float
    window: tuple[float, float]
    samples: dict[int, list[tuple[float, float]]]  # k -> [(t, ratio)]
    fits: dict[int, FitResult | None]
    measured_c0: float
    trend_tolerance: float
    bounded: bool

    def as_dict(self) -> dict:
        return {
            "bounded": self.bounded,
            "fits": {str(k): (f.as_dict() if f else None) for k, f in self.fits.items()},
            "measured_c0": self.measured_c0,
            "samples": {str(k): [list(s) for s in v] for k, v in self.samples.items()},
            "sigma0": self.sigma0,
            "trend_tolerance": self.trend_tolerance,
            "window": list(self.window),
        }


def stability_check(traj_a: Trajectory, traj_b: Trajectory,
                    t_window: tuple[float, float] | None = None,
                    trend_tolerance: float = 0.15) -> StabilityReport:
    """Weighted-ratio stability report for a lockstep pair.

    For k = 0, 1, 2 and each snapshot time in the window it records

        ratio_k(t) = t^{k/2} sup |grad^k (g - ghat)(t)| / sup |g0 - ghat0|,

    fits the log-log trend of each ratio, and reports the sup ratio (the
    measured stability constant).  `bounded` means every trend slope is
    within the tolerance of zero.
    """
    _check_aligned(traj_a, traj_b)
    grid = traj_a.grid
    margin = traj_a.config.boundary_width
    if t_window is None:
        t_window = (4.0 * grid.spacing**2, traj_a.times[-1])
    d0 = traj_a.states[0].components - traj_b.states[0].components
    w = sym_weights(grid.dimension)
    sigma0 = float(np.sqrt(np.tensordot(w, d0**2, axes=(0, 0))).max())
    samples: dict[int, list[tuple[float, float]]] = {0: [], 1: [], 2: []}
    for sa, sb in zip(traj_a.states, traj_b.states):
        t = sa.time
        if not (t_window[0] - 1e-15 <= t <= t_window[1] + 1e-15) or t <= 0:
            continue
        sups = weighted_difference_sups(grid, sa.components - sb.components, margin)
        for k in range(3):
            ratio = (t ** (k / 2.0)) * sups[k] / sigma0 if sigma0 > 0 else 0.0
            samples[k].append((t, ratio))
    fits: dict[int, FitResult | None] = {}
    for k in range(3):
        pos = [(t, r) for t, r in samples[k] if r > 0]
        fits[k] = exponent_fit(pos) if len(pos) >= 4 else None
    measured_c0 = max((r for v in samples.values() for _, r in v), default=0.0)
    bounded = all(f is None or abs(f.slope) <= trend_tolerance for f in fits.values())
    return StabilityReport(sigma0, t_window, samples, fits, measured_c0,
                           trend_tolerance, bounded)


def lp_decay_check(traj_a: Trajectory, traj_b: Trajectory, p: float,
                   t_window: tuple[float, float] | None = None) -> FitResult:
    """Fit of sup |(g - ghat)(t)| / ||g0 - ghat0||_p against t.

    The expected slope for data saturating the smoothing decay is -n/(2p).
    """
    _check_aligned(traj_a, traj_b)
    grid = traj_a.grid
    margin = traj_a.config.boundary_width
    if t_window is None:
        t_window = (4.0 * grid.spacing**2, traj_a.times[-1])
    d0 = SymTensorField(grid, traj_a.states[0].components - traj_b.states[0].components)
    denom = norm(d0, None, "lp", p=p)
    if denom == 0:
        raise ValueError("identical initial metrics: L^p distance is zero")
    w = sym_weights(grid.dimension)
    inner = _interior_slices(grid, margin)
    samples = []
    for sa, sb in zip(traj_a.states, traj_b.states):
        t = sa.time
        if not (t_window[0] - 1e-15 <= t <= t_window[1] + 1e-15) or t <= 0:
            continue
        d = sa.components - sb.components
        sup = float(np.sqrt(np.tensordot(w, d**2, axes=(0, 0))[inner]).max())
        if sup > 0:
            samples.append((t, sup / denom))
    return exponent_fit(samples)


# ---------------------------------------------------------------------------
# pointwise scalar curvature on sub-boxes


def _sub_metric(g: MetricField, region: Region, margin: int):
    slices, sub_nodes, offsets = _extract_subgrid(g.grid, region, margin)
    h = g.grid.spacing
    spec = GridSpec(g.grid.dimension, sub_nodes,
                    tuple((m - 1) * h / 2.0 for m in sub_nodes))
    coords = _subgrid_coords(g.grid, sub_nodes, offsets)
    centers = [0.5 * (c[0] + c[-1]) for c in coords]
    return g.restrict(slices, spec), coords, centers


def scalar_curvature_at(g: MetricField, point) -> float:
    """Scalar curvature interpolated at a point, computed on a small
    sub-box around it."""
    h = g.grid.spacing
    region = Region(tuple(point), 2.5 * h)
    sub, _, centers = _sub_metric(g, region, margin=4)
    scal = scalar_curvature(sub)
    local = [p - c for p, c in zip(point, centers)]
    return float(_interp_components(sub.grid, scal.values[None], local)[0])


def scalar_stats_over_region(g: MetricField, region: Region) -> tuple[float, float]:
    """(min, max) of the scalar curvature over the region's nodes."""
    sub, coords, _ = _sub_metric(g, region, margin=2)
    n = g.grid.dimension
    r2 = np.zeros(sub.grid.shape)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = sub.grid.nodes[ax]
        r2 = r2 + (coords[ax].reshape(shape) - region.center[ax]) ** 2
    mask = r2 <= region.radius**2
    if not mask.any():
        raise ValueError("region contains no grid nodes")
    scal = scalar_curvature(sub).values
    return float(scal[mask].min()), float(scal[mask].max())


def scalar_difference_min(g_a: MetricField, g_b: MetricField, region: Region) -> float:
    """Min over the region of scal(g_a) - scal(g_b), on a shared sub-box."""
    sub_a, coords, _ = _sub_metric(g_a, region, margin=2)
    sub_b, _, _ = _sub_metric(g_b, region, margin=2)
    n = g_a.grid.dimension
    r2 = np.zeros(sub_a.grid.shape)
    for ax in range(n):
        shape = [1] * n
        shape[ax] = sub_a.grid.nodes[ax]
        r2 = r2 + (coords[ax].reshape(shape) - region.center[ax]) ** 2
    mask = r2 <= region.radius**2
    if not mask.any():
        raise ValueError("region contains no grid nodes")
    diff = scalar_curvature(sub_a).values - scalar_curvature(sub_b).values
    return float(diff[mask].min())


def trace_ricci_at(g_smooth: MetricField, g_hat: MetricField, point) -> float:
    """tr_{g_hat} Ric(g_smooth) at a point: ghat^{ij} Ric_ij interpolated."""
    h = g_smooth.grid.spacing
    region = Region(tuple(point), 2.5 * h)
    sub, _, centers = _sub_metric(g_smooth, region, margin=4)
    gamma = christoffel_components(sub.grid, sub.components, sub.inverse_components)
    ric = ricci_components(sub.grid, gamma)
    local = [p - c for p, c in zip(point, centers)]
    ric_pt = _interp_components(sub.grid, ric, local)
    ghat_pt = _interp_components(g_hat.grid, g_hat.components, point)
    n = g_smooth.grid.dimension
    mat = np.empty((n, n))
    for (i, j) in sym_pairs(n):
        mat[i, j] = mat[j, i] = ghat_pt[sym_index(i, j)]
    inv = np.linalg.inv(mat)
    total = 0.0
    for (i, j) in sym_pairs(n):
        mult = 1.0 if i == j else 2.0
        total += mult * inv[i, j] * ric_pt[sym_index(i, j)]
    return float(total)


# ---------------------------------------------------------------------------
# persistence and pseudolocality


@dataclass
class PersistenceReport:
    kappa: float
    samples: list[tuple[float, float, float]]  # (t, scal at tracked point, deficit ratio)
    min_deficit_ratio: float
    c_persist: float
    passed: bool
    tracked_path: np.ndarray

    def as_dict(self) -> dict:
        return {
            "c_persist": self.c_persist,
            "kappa": self.kappa,
            "min_deficit_ratio": self.min_deficit_ratio,
            "passed": self.passed,
            "samples": [list(s) for s in self.samples],
        }


def persistence_check(traj: Trajectory, region: Region, kappa: float,
                      x0=None, c_persist: float = 10.0,
                      track_substeps: int = 4) -> PersistenceReport:
    """Check that the scalar curvature at the tracked point stays above
    kappa - c_persist * t along the flow.

    Precondition (verified numerically): scal(g(0)) >= kappa on the region.
    The deficit ratio reported is min over snapshot times of
    (scal(x_t, t) - kappa) / t.
    """
    scal_min0, _ = scalar_stats_over_region(traj.states[0].metric, region)
    if scal_min0 < kappa - 1e-9 * max(1.0, abs(kappa)):
        raise ValueError(
            f"precondition failed: initial scal min {scal_min0:.6g} < kappa {kappa:.6g}"
        )
    if traj.tracked_points is not None:
        path = traj.tracked_points
    else:
        start = tuple(x0) if x0 is not None else region.center
        path = psi_track(traj, start, substeps=track_substeps)
    samples = []
    for i, state in enumerate(traj.states):
        if state.time <= 0:
            continue
        s_val = scalar_curvature_at(state.metric, path[i])
        samples.append((state.time, s_val, (s_val - kappa) / state.time))
    min_ratio = min(r for _, _, r in samples)
    return PersistenceReport(kappa, samples, min_ratio, c_persist,
                             min_ratio >= -c_persist, path)


@dataclass
class PseudolocalityReport:
    reports: list[tuple[float, CurvatureReport]]
    growth_factor: float
    offset: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "growth_factor": self.growth_factor,
            "offset": self.offset,
            "passed": self.passed,
            "reports": [
                {"time": t, **rep.as_dict()} for t, rep in self.reports
            ],
        }


def pseudolocality_probe(traj: Trajectory, region: Region, shrink: float = 0.5,
                         growth_factor: float = 4.0, offset: float = 1.0,
                         max_subgrid_nodes: int = 60_000) -> PseudolocalityReport:
    """Covariant curvature norms of g(t) in a neighborhood of the tracked
    point that shrinks linearly from the region radius to `shrink` times it.

    Passes when no snapshot exceeds growth_factor * (t=0 value) + offset for
    each of |Rm|, |grad Rm|, |grad^2 Rm|.
    """
    if traj.tracked_points is not None:
        path = traj.tracked_points
    else:
        path = psi_track(traj, region.center)
    t_end = traj.times[-1]
    reports = []
    for i, state in enumerate(traj.states):
        lam = state.time / t_end if t_end > 0 else 0.0
        radius = region.radius * (1.0 - (1.0 - shrink) * lam)
        reg_t = Region(tuple(path[i]), radius)
        rep = covariant_curvature_norms(state.metric, reg_t, r_scale=radius,
                                        max_subgrid_nodes=max_subgrid_nodes)
        reports.append((state.time, rep))
    base = reports[0][1]
    passed = all(
        rep.sup_rm <= growth_factor * base.sup_rm + offset
        and rep.sup_d_rm <= growth_factor * base.sup_d_rm + offset
        and rep.sup_d2_rm <= growth_factor * base.sup_d2_rm + offset
        for _, rep in reports
    )
    return PseudolocalityReport(reports, growth_factor, offset, passed)


# ---------------------------------------------------------------------------
# quantitative bound pipeline


@dataclass(frozen=True)
class QuantBoundConfig:
    omega_radius: float = 1.0
    r_inner: float = 1.05
    r_outer: float = 1.30
    p: float = 1.0
    eps_n: float = 0.1
    eps0: float = 0.5
    c_persist: float = 10.0
    lambda_cap: float = 50.0
    hypothesis_cap_factor: float = 100.0
    cfl: float = 0.1
    boundary_width: int = 3
    snapshots_per_decade: int = 8
    max_time: float = 1.0
    curvature_max_nodes: int = 40_000
    track_substeps: int = 4


@dataclass
class BoundReport:
    mode: str
    p: float | None
    sigma: float
    sigma_linf: float
    exponent: float
    t_star: float
    t_star_raw: float
    clamped: bool
    kappa: float
    scal_base: float
    stage_persist: float | None
    stage_trace: float | None
    tracked_point: list[float] | None
    term_flow_time: float | None
    term_initial_gap: float | None
    balance_ratio: float | None
    measured: dict
    hypothesis: dict
    verdict: bool
    omega: Region
    effective_hypothesis_region: Region
    grid_nodes: tuple[int, ...]
    grid_half_width: float
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "balance_ratio": self.balance_ratio,
            "clamped": self.clamped,
            "exponent": self.exponent,
            "grid_half_width": self.grid_half_width,
            "grid_nodes": list(self.grid_nodes),
            "hypothesis": self.hypothesis,
            "kappa": self.kappa,
            "measured": self.measured,
            "mode": self.mode,
            "notes": self.notes,
            "omega_center": list(self.omega.center),
            "omega_radius": self.omega.radius,
            "effective_hypothesis_radius": self.effective_hypothesis_region.radius,
            "p": self.p,
            "scal_base": self.scal_base,
            "sigma": self.sigma,
            "sigma_linf": self.sigma_linf,
            "stage_persist": self.stage_persist,
            "stage_trace": self.stage_trace,
            "t_star": self.t_star,
            "t_star_raw": self.t_star_raw,
            "term_flow_time": self.term_flow_time,
            "term_initial_gap": self.term_initial_gap,
            "tracked_point": self.tracked_point,
            "verdict": self.verdict,
        }


def _hypothesis_region(grid: GridSpec, x0, radius: float, max_nodes: int) -> Region:
    """Largest admissible ball around x0 for the widened curvature stencil,
    allowing for the coarsening stride the norms computation may pick."""
    h = grid.spacing
    stride = 1
    while True:
        sub_est = (2.0 * (radius + 5 * stride * h) / (stride * h)) ** grid.dimension
        if sub_est <= max_nodes or stride >= 8:
            break
        stride += 1
        while any((m - 1) % stride for m in grid.nodes) and stride < 8:
            stride += 1
    slack = 4.5 * stride * h
    r_eff = radius
    for c, L in zip(x0, grid.half_widths):
        r_eff = min(r_eff, L - abs(c) - slack)
    if r_eff <= 2 * h:
        raise ValueError("no room for the curvature-hypothesis region")
    return Region(tuple(x0), r_eff)


def quantitative_bound(g0: MetricField, gh0: MetricField, x0,
                       mode: str = "linf",
                       cfg: QuantBoundConfig = QuantBoundConfig()) -> BoundReport:
    """Run the full smoothing pipeline and evaluate the quantitative
    scalar-curvature inequality.

    Steps: measure sigma = ||gh0 - g0|| over the region Omega (sup norm in
    g0, or L^p in mode "lp"); verify the curvature hypothesis on g0;
    cutoff-extend both metrics; evolve the pair to t* = sigma^{1/2}
    (sigma^{1/(2+n/(2p))} in L^p mode, clamped to the resolved flow window
    and flagged); track the reference-flow point from x0; evaluate the
    three proof-stage quantities at (x_{t*}, t*); and report the verdict

        kappa <= scal_{g0}(x0) + Lambda * sigma^exponent

    with the implied constant Lambda measured, plus the stage-wise measured
    constants of the same run.
    """
    if mode not in ("linf", "lp"):
        raise ValueError("mode must be 'linf' or 'lp'")
    grid = g0.grid
    if grid != gh0.grid:
        raise ValueError("metrics must share a grid")
    n = grid.dimension
    omega = Region(tuple(x0), cfg.omega_radius)
    omega.validate(grid)
    notes: list[str] = []

    diff = SymTensorField(grid, gh0.components - g0.components)
    sigma_linf = norm(diff, omega, "linf", reference=g0)
    if mode == "lp":
        sigma = norm(diff, omega, "lp", p=cfg.p, reference=g0)
        exponent = 1.0 / (2.0 + n / (2.0 * cfg.p))
    else:
        sigma = sigma_linf
        exponent = 0.5

    hyp_region = _hypothesis_region(grid, x0, cfg.omega_radius, cfg.curvature_max_nodes)
    hyp = covariant_curvature_norms(g0, hyp_region, r_scale=cfg.omega_radius,
                                    max_subgrid_nodes=cfg.curvature_max_nodes)
    hyp_threshold = cfg.omega_radius**-2
    if hyp.combined_bound > cfg.hypothesis_cap_factor * hyp_threshold:
        raise ValueError(
            f"curvature hypothesis wildly violated: weighted bound "
            f"{hyp.combined_bound:.4g} exceeds {cfg.hypothesis_cap_factor} x "
            f"{hyp_threshold:.4g}"
        )
    hyp_dict = hyp.as_dict()
    hyp_dict["threshold"] = hyp_threshold
    hyp_dict["satisfied_nominal"] = bool(hyp.combined_bound <= hyp_threshold)

    kappa = scalar_stats_over_region(gh0, omega)[0]
    scal_base = scalar_curvature_at(g0, x0)

    if sigma_linf == 0.0:
        verdict = kappa <= scal_base + 1e-9
        return BoundReport(
            mode=mode, p=cfg.p if mode == "lp" else None, sigma=0.0, sigma_linf=0.0,
            exponent=exponent, t_star=0.0, t_star_raw=0.0, clamped=False,
            kappa=kappa, scal_base=scal_base, stage_persist=None, stage_trace=None,
            tracked_point=None, term_flow_time=None, term_initial_gap=None,
            balance_ratio=None,
            measured={"lambda_implied": 0.0},
            hypothesis=hyp_dict, verdict=bool(verdict), omega=omega,
            effective_hypothesis_region=hyp_region,
            grid_nodes=grid.nodes, grid_half_width=grid.half_widths[0],
            notes=["identical metrics: pipeline short-circuited"],
        )

    if sigma_linf > cfg.eps_n:
        raise ValueError(
            f"initial closeness {sigma_linf:.4g} exceeds the admissible eps_n={cfg.eps_n}"
        )

    t_star_raw = sigma**exponent
    h = grid.spacing
    t_min = 4.0 * h**2
    t_max = min(cfg.max_time, ((grid.half_widths[0] - cfg.r_outer) / 6.0) ** 2)
    t_star = min(max(t_star_raw, t_min), t_max)
    clamped = t_star != t_star_raw
    if clamped:
        notes.append(
            f"t* clamped from {t_star_raw:.6g} to {t_star:.6g} "
            f"(resolved flow window [{t_min:.6g}, {t_max:.6g}])"
        )

    ge = cutoff_extend(g0, x0, cfg.r_inner, cfg.r_outer)
    ghe = cutoff_extend(gh0, x0, cfg.r_inner, cfg.r_outer)
    fcfg = FlowConfig(end_time=t_star, cfl=cfg.cfl, eps0=cfg.eps0,
                      boundary_width=cfg.boundary_width,
                      snapshots_per_decade=cfg.snapshots_per_decade)
    traj_g, traj_gh = pair_evolve(ge, ghe, fcfg)
    path = psi_track(traj_g, x0, substeps=cfg.track_substeps)
    x_t = path[-1]

    g_final = traj_g.states[-1].metric
    gh_final = traj_gh.states[-1].metric
    stage_persist = scalar_curvature_at(gh_final, x_t)
    stage_trace = trace_ricci_at(g_final, gh_final, x_t)

    if mode == "lp":
        gap_denom = sigma * t_star ** (-1.0 - n / (2.0 * cfg.p))
    else:
        gap_denom = sigma / t_star
    gap = kappa - scal_base
    measured = {
        "c_persist_measured": max(0.0, (kappa - stage_persist) / t_star),
        "lambda_comparison": max(0.0, (stage_persist - stage_trace) / gap_denom),
        "lambda_claim_upper": max(0.0, (stage_trace - scal_base) / (t_star + sigma)),
        "lambda_implied": max(0.0, gap) / sigma**exponent,
    }
    term_flow_time = t_star
    term_initial_gap = gap_denom
    balance_ratio = term_flow_time / term_initial_gap

    stage1_ok = stage_persist >= kappa - cfg.c_persist * t_star
    final_ok = gap <= cfg.lambda_cap * sigma**exponent
    verdict = bool(stage1_ok and final_ok)

    return BoundReport(
        mode=mode, p=cfg.p if mode == "lp" else None, sigma=sigma,
        sigma_linf=sigma_linf, exponent=exponent, t_star=t_star,
        t_star_raw=t_star_raw, clamped=clamped, kappa=kappa,
        scal_base=scal_base, stage_persist=stage_persist,
        stage_trace=stage_trace, tracked_point=[float(c) for c in x_t],
        term_flow_time=term_flow_time, term_initial_gap=term_initial_gap,
        balance_ratio=balance_ratio, measured=measured, hypothesis=hyp_dict,
        verdict=verdict, omega=omega, effective_hypothesis_region=hyp_region,
        grid_nodes=grid.nodes, grid_half_width=grid.half_widths[0], notes=notes,
    )


def suggest_bound_grid(eps: float, a: float = 0.01, n: int = 3,
                       r_outer: float = 1.30, max_nodes: int = 112) -> GridSpec:
    """Grid sized for one sharpness-family quantitative-bound run: the box
    leaves a 6 sqrt(t*) heat margin beyond the cutoff and the spacing
    resolves the bump width r = eps^{1/4}."""
    sigma_est = 4.0 * math.sqrt(n) * a * eps / (2.0 * n * (n - 2.0))
    t_est = math.sqrt(sigma_est) * 1.3
    half = r_outer + 6.0 * math.sqrt(t_est)
    h_req = eps**0.25 / 8.0
    nodes = int(math.ceil(2.0 * half / h_req)) + 1
    nodes = min(nodes, max_nodes)
    return cube(n, nodes, half)


# ---------------------------------------------------------------------------
# sharpness sweep


@dataclass
class SharpnessRow:
    eps: float
    d_inf: float
    d_p: dict[float, float]
    s_min: float
    s_region_radius: float

    def as_dict(self) -> dict:
        return {
            "d_inf": self.d_inf,
            "d_p": {str(p): v for p, v in self.d_p.items()},
            "eps": self.eps,
            "s_min": self.s_min,
            "s_region_radius": self.s_region_radius,
        }


@dataclass
class SharpnessResult:
    rows: list[SharpnessRow]
    fits: dict[str, FitResult]
    amplitude_used: float
    grid_nodes: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "amplitude_used": self.amplitude_used,
            "fits": {k: f.as_dict() for k, f in self.fits.items()},
            "grid_nodes": list(self.grid_nodes),
            "rows": [r.as_dict() for r in self.rows],
        }


def sharpness_experiment(eps_list, a: float, n: int, p_list, grid: GridSpec,
                         norm_radius: float = 1.0,
                         max_amplitude_halvings: int = 6,
                         task_map=map) -> SharpnessResult:
    """Sweep the bump family over eps and fit the gap exponents.

    Per eps it records D_inf = sup |g_eps - g_0| and D_p = L^p distances
    over the unit ball, and S = min over the inner bump plateau of
    scal(g_eps) - scal(g_0) (difference form, insensitive to the constant
    scalar-curvature offset of the background).  The plateau region is
    shrunk by 3.5 grid spacings so every stencil it uses stays where the
    bump profile is exactly quadratic.

    If any S comes out nonpositive the bump amplitude is halved and the
    sweep restarts (recorded in the result).
    """
    if n != grid.dimension:
        raise ValueError("grid dimension mismatch")
    eps_list = sorted(float(e) for e in eps_list)
    p_list = [float(p) for p in p_list]
    omega = Region((0.0,) * n, norm_radius)
    h = grid.spacing

    amplitude = a
    for attempt in range(max_amplitude_halvings + 1):
        def one(eps: float) -> SharpnessRow:
            params = BumpFamilyParams(eps, amplitude, n)
            s_radius = params.r / 2.0 - 3.5 * h
            if s_radius < 2.0 * h:
                raise ValueError(
                    f"grid too coarse to isolate the bump plateau at eps={eps}: "
                    f"need spacing <= r/11 = {params.r / 11.0:.4g}"
                )
            g0, geps = sharpness_pair(params, grid)
            diff = SymTensorField(grid, geps.components - g0.components)
            d_inf = norm(diff, omega, "linf")
            d_p = {p: norm(diff, omega, "lp", p=p) for p in p_list}
            s_min = scalar_difference_min(geps, g0, Region((0.0,) * n, s_radius))
            return SharpnessRow(eps, d_inf, d_p, s_min, s_radius)

        rows = list(task_map(one, eps_list))
        if all(r.s_min > 0 for r in rows):
            break
        amplitude *= 0.5
    else:
        raise RuntimeError("bump amplitude sweep failed to make the gap positive")

    fits = {
        "S_vs_eps": exponent_fit([(r.eps, r.s_min) for r in rows]),
        "S_vs_Dinf": exponent_fit([(r.d_inf, r.s_min) for r in rows]),
    }
    for p in p_list:
        fits[f"Dp_vs_eps[p={p:g}]"] = exponent_fit([(r.eps, r.d_p[p]) for r in rows])
        fits[f"S_vs_Dp[p={p:g}]"] = exponent_fit([(r.d_p[p], r.s_min) for r in rows])
    return SharpnessResult(rows, fits, amplitude, grid.nodes)
