"""Constructors for the test metric families.

Families:
  * Euclidean and constant metrics (via MetricField / conformal_metric).
  * Stereographic sphere patches with scal = n(n-1)/rho^2.
  * Generic conformal metrics g = phi^{4/(n-2)} g_euc.
  * Seeded random bump perturbations of Euclidean space.
  * The sharpness family: a matched pair of conformal metrics whose
    difference is a bump of height ~ eps and width r = eps^{1/4}, the
    family that realizes the sqrt(sigma) scalar-curvature gap.
  * Rough multiscale pairs and near-extremal decay profiles used by the
    stability and smoothing-decay experiments.

All constructors are pure and deterministic (seeded where random).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import MetricField
from .grid_calculus import (
    GridSpec,
    ScalarField,
    SymTensorField,
    sym_component_count,
    sym_index,
    sym_pairs,
    sym_weights,
)


def smoothstep5(u: np.ndarray) -> np.ndarray:
    """Quintic smoothstep on [0, 1]: C^2 with vanishing first and second
    derivatives at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 + u * (-15.0 + 6.0 * u))


@dataclass(frozen=True)
class CutoffSpec:
    """Radial C^2 profile: 1 inside `inner`, 0 outside `outer`."""

    center: tuple[float, ...]
    inner: float
    outer: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not 0.0 < self.inner < self.outer:
            raise ValueError("need 0 < inner < outer")

    def validate(self, grid: GridSpec) -> None:
        if len(self.center) != grid.dimension:
            raise ValueError("cutoff center has wrong dimension")
        for c, L in zip(self.center, grid.half_widths):
            if abs(c) + self.outer >= L:
                raise ValueError("cutoff outer ball must lie strictly inside the box")

    def profile(self, rho: np.ndarray) -> np.ndarray:
        u = (rho - self.inner) / (self.outer - self.inner)
        return 1.0 - smoothstep5(u)


def cutoff(spec: CutoffSpec, grid: GridSpec) -> ScalarField:
    """Quintic radial cutoff field for the given spec."""
    spec.validate(grid)
    rho = np.sqrt(grid.radius_squared(spec.center))
    return ScalarField(grid, spec.profile(rho))


def cutoff_derivative_constant(spec: CutoffSpec, grid: GridSpec) -> float:
    """Measured sup(|grad eta|^2 + |hess eta|) * (outer - inner)^2.

    Reported rather than assumed; the quintic profile lands well under 60
    for seam widths comparable to the inner radius.
    """
    from .grid_calculus import _diff1, _diff2

    eta = cutoff(spec, grid).values
    h = grid.spacing
    n = grid.dimension
    interior = (slice(2, -2),) * n
    grad2 = np.zeros(grid.shape)
    firsts = []
    for ax in range(n):
        d = _diff1(eta, ax, h, "central2")
        firsts.append(d)
        grad2 += d * d
    hess2 = np.zeros(grid.shape)
    for i in range(n):
        for j in range(i + 1):
            dij = _diff2(eta, i, h, "central2") if i == j else _diff1(firsts[j], i, h, "central2")
            hess2 += (1.0 if i == j else 2.0) * dij**2
    total = grad2[interior] + np.sqrt(hess2[interior])
    return float(total.max() * (spec.outer - spec.inner) ** 2)


def conformal_metric(phi: ScalarField, n: int | None = None) -> MetricField:
    """g_ij = phi^{4/(n-2)} delta_ij for a positive conformal factor."""
    grid = phi.grid
    if n is None:
        n = grid.dimension
    if n != grid.dimension:
        raise ValueError("dimension mismatch between phi and requested n")
    if np.any(phi.values <= 0.0):
        raise ValueError("conformal factor must be positive everywhere")
    factor = phi.values ** (4.0 / (n - 2.0))
    comps = np.zeros((sym_component_count(n),) + grid.shape)
    for i in range(n):
        comps[sym_index(i, i)] = factor
    return MetricField.from_components(grid, comps)


def sphere_patch(rho: float, grid: GridSpec) -> MetricField:
    """Stereographic round-sphere patch: scal = n(n-1)/rho^2 identically."""
    if rho <= 0:
        raise ValueError("sphere radius must be positive")
    n = grid.dimension
    r2 = grid.radius_squared((0.0,) * n)
    psi = 2.0 * rho**2 / (rho**2 + r2)
    phi = ScalarField(grid, psi ** ((n - 2.0) / 2.0))
    return conformal_metric(phi, n)


def sphere_patch_factor(rho: float, grid: GridSpec) -> ScalarField:
    n = grid.dimension
    r2 = grid.radius_squared((0.0,) * n)
    return ScalarField(grid, (2.0 * rho**2 / (rho**2 + r2)) ** ((n - 2.0) / 2.0))


# ---------------------------------------------------------------------------
# sharpness family


@dataclass(frozen=True)
class BumpFamilyParams:
    """Parameters of the sharp-gap conformal bump family.

    eps sets both the bump height (~eps) and its width r = eps^{1/4};
    `amplitude` is the small prefactor of the bump term.
    """

    eps: float
    amplitude: float = 0.01
    dimension: int = 3
    eps_max: float = 0.2

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.eps > self.eps_max:
            raise ValueError(f"eps={self.eps} exceeds the configured cap {self.eps_max}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.r > 0.67:
            raise ValueError(f"bump width r={self.r:.3f} must be <= 0.67 to fit in the unit ball")

    @property
    def r(self) -> float:
        return self.eps**0.25

    def require_resolved(self, grid: GridSpec) -> None:
        if grid.spacing > self.r / 8.0:
            raise ValueError(
                f"under-resolved bump: spacing {grid.spacing:.4f} > r/8 = {self.r / 8.0:.4f}"
            )
        if any(L <= 1.0 for L in grid.half_widths):
            raise ValueError("grid box must contain the unit ball")


def sharpness_profiles(params: BumpFamilyParams, grid: GridSpec
                       ) -> tuple[ScalarField, ScalarField]:
    """Conformal factors (phi_0, phi_eps) of the bump family.

    phi_0   = 1 - |x|^2 / (4(2+n))
    phi_eps = phi_0 + a sqrt(eps) * eta * v,   v = (r^2 - |x|^2) / (2n)

    with eta the quintic cutoff that is 1 on |x| <= r/2 and 0 outside r.
    """
    params.require_resolved(grid)
    n = grid.dimension
    r = params.r
    r2 = grid.radius_squared((0.0,) * n)
    phi0 = 1.0 - r2 / (4.0 * (2.0 + n))
    eta = cutoff(CutoffSpec((0.0,) * n, r / 2.0, r), grid).values
    v = (r**2 - r2) / (2.0 * n)
    phi_eps = phi0 + params.amplitude * np.sqrt(params.eps) * eta * v
    return ScalarField(grid, phi0), ScalarField(grid, phi_eps)


def sharpness_pair(params: BumpFamilyParams, grid: GridSpec
                   ) -> tuple[MetricField, MetricField]:
    """The matched conformal pair (g_0, g_eps) of the sharpness family."""
    phi0, phi_eps = sharpness_profiles(params, grid)
    n = grid.dimension
    return conformal_metric(phi0, n), conformal_metric(phi_eps, n)


# ---------------------------------------------------------------------------
# seeded random perturbations


def _random_sym_direction(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-Frobenius random symmetric matrix, returned in sym storage."""
    mat = rng.standard_normal((n, n))
    mat = 0.5 * (mat + mat.T)
    mat /= np.sqrt(np.sum(mat**2))
    return np.array([mat[i, j] for i, j in sym_pairs(n)])


def _bump_profile(grid: GridSpec, center, sigma: float, support: float) -> np.ndarray:
    """Gaussian of scale sigma, smoothly truncated to compact support."""
    r2 = grid.radius_squared(center)
    taper = CutoffSpec(center, 0.6 * support, support)
    return np.exp(-r2 / (2.0 * sigma**2)) * taper.profile(np.sqrt(r2))


def _normalized_perturbation(grid: GridSpec, pert: np.ndarray, amplitude: float) -> np.ndarray:
    w = sym_weights(grid.dimension)
    sup = np.sqrt(np.tensordot(w, pert**2, axes=(0, 0))).max()
    if sup > 0:
        pert = pert * (amplitude / sup)
    return pert


def random_bump(seed: int, amplitude: float, width: float, grid: GridSpec,
                bumps: int = 3, max_amplitude: float = 0.5) -> MetricField:
    """Euclidean metric plus a compactly supported seeded perturbation.

    The perturbation is a sum of `bumps` Gaussian bumps of the given support
    width with random symmetric directions, rescaled so its sup pointwise
    norm equals `amplitude` exactly.  Deterministic per seed.
    """
    if amplitude < 0 or amplitude > max_amplitude:
        raise ValueError(f"amplitude must lie in [0, {max_amplitude}]")
    if width < 4.0 * grid.spacing:
        raise ValueError("bump width under-resolved: need width >= 4h")
    n = grid.dimension
    if any(width > L - 4.0 * grid.spacing for L in grid.half_widths):
        raise ValueError("bump width too large: support must clear the boundary ring")
    rng = np.random.default_rng(seed)
    pert = np.zeros((sym_component_count(n),) + grid.shape)
    if amplitude > 0:
        for _ in range(bumps):
            lim = [max(L - width - 4.0 * grid.spacing, 0.0) for L in grid.half_widths]
            center = tuple(rng.uniform(-l, l) for l in lim)
            direction = _random_sym_direction(rng, n)
            profile = _bump_profile(grid, center, width / 3.0, width)
            pert += direction[(slice(None),) + (None,) * n] * profile[None]
        pert = _normalized_perturbation(grid, pert, amplitude)
    comps = pert
    for i in range(n):
        comps[sym_index(i, i)] += 1.0
    return MetricField.from_components(grid, comps)


def stability_pair(seed: int, amplitude: float, grid: GridSpec,
                   base_amplitude: float = 0.02, edge_scale: float = 2.5,
                   extra_balls: int = 2) -> tuple[MetricField, MetricField]:
    """A metric pair whose difference is bounded but rough: flat-top balls
    with grid-scale edges.

    A smoothed step is self-similar under heat smoothing, so the evolving
    difference keeps its sup steady while its gradient and Hessian sups
    decay like t^{-1/2} and t^{-1}: the weighted stability ratios are flat
    in t, the regime where the sup-norm stability bound is tight.  The main
    plateau sets the sup; smaller off-center balls (at 3/4 amplitude, so
    they never take over the sup) add generic edge orientations.
    """
    n = grid.dimension
    rng = np.random.default_rng(seed)
    L = grid.half_widths[0]
    g0 = random_bump(seed + 10_000, base_amplitude, 0.45 * L, grid)

    h = grid.spacing
    edge = edge_scale * h
    diff = np.zeros((sym_component_count(n),) + grid.shape)

    def add_ball(center, radius, gain):
        spec = CutoffSpec(center, max(radius - edge, h), radius)
        rho = np.sqrt(grid.radius_squared(center))
        direction = _random_sym_direction(rng, n)
        diff_local = direction[(slice(None),) + (None,) * n] * spec.profile(rho)[None]
        return gain * diff_local

    # big enough that 3-d erosion barely reaches the top over the fit window
    diff += add_ball((0.0,) * n, 0.52 * L, 1.0)
    for _ in range(extra_balls):
        radius = rng.uniform(0.07, 0.085) * L
        c_dist = rng.uniform(0.74, 0.78) * L
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        center = tuple(float(c) for c in c_dist * direction)
        if any(abs(c) + radius > L - 4.0 * h for c in center):
            continue
        diff += add_ball(center, radius, 0.75)

    diff = _normalized_perturbation(grid, diff, amplitude)
    gh = g0.components + diff
    return g0, MetricField.from_components(grid, gh)


def decay_probe_pair(p: float, amplitude: float, grid: GridSpec,
                     core_scale: float = 1.5, support: float = 0.55
                     ) -> tuple[MetricField, MetricField]:
    """Pair whose difference nearly saturates the L^p -> L^inf smoothing
    decay t^{-n/(2p)}.

    For p near 1 the saturating data is concentrated mass: a bump of a few
    grid spacings.  For larger p it is the scale-free profile |x|^{-n/p},
    mollified at the core and cut off smoothly (the smooth cut also limits
    the logarithmic shell divergence of the L^p norm).
    """
    n = grid.dimension
    if p < 1:
        raise ValueError("p must be >= 1")
    alpha = n / p
    r2 = grid.radius_squared((0.0,) * n)
    if alpha >= 2.5:
        sig = 1.2 * grid.spacing
        prof = np.exp(-r2 / (2.0 * sig**2))
        support = min(support, 0.5)
    else:
        core = core_scale * grid.spacing
        prof = (core**2 / (core**2 + r2)) ** (alpha / 2.0)
    taper = CutoffSpec((0.0,) * n, 0.7 * support, support)
    prof = prof * taper.profile(np.sqrt(r2))
    comps = np.zeros((sym_component_count(n),) + grid.shape)
    iso = amplitude / np.sqrt(n)
    for i in range(n):
        comps[sym_index(i, i)] = iso * prof
    g0 = MetricField.euclidean(grid)
    gh = MetricField.from_components(grid, g0.components + comps)
    return g0, gh
