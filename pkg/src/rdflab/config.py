"""Flat key = value run configuration.

One `key = value` per line, `#` starts a comment, blank lines ignored.
Lists are comma-separated.  Unknown keys are an error so that every
config line is load-bearing; the raw text is echoed verbatim into every
report for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in s.split(",") if tok.strip())


@dataclass
class RunConfig:
    # grid
    dimension: int = 3
    nodes: int = 64
    half_width: float = 1.25
    # thresholds
    eps0: float = 0.1
    eps_n: float = 0.1
    # flow
    cfl: float = 0.1
    end_time: float = 0.02
    snapshots_per_decade: int = 16
    boundary_width: int = 3
    integrator: str = "rk2"
    stencil_scheme: str = "central2"
    # metric selection (curvature / flow subcommands)
    metric: str = "euclidean"  # euclidean | sphere | bump_g0 | bump_geps | random
    rho: float = 1.0
    seed: int = 1
    amplitude: float = 0.01
    width: float = 0.5
    # experiment parameters
    eps: float = 0.04
    eps_list: tuple[float, ...] = (0.01, 0.02, 0.04, 0.08, 0.16)
    a: float = 0.01
    p_list: tuple[float, ...] = (1.0, 2.0)
    p: float = 1.0
    mode: str = "linf"
    seeds: tuple[float, ...] = (1, 2, 3, 4, 5)
    pair_amplitude: float = 0.005
    region_radius: float = 1.0
    r_inner: float = 1.05
    r_outer: float = 1.30
    track_x0: tuple[float, ...] = ()
    # expected-slope tolerances for check verdicts
    trend_tolerance: float = 0.15
    slope_tolerance: float = 0.25
    c_persist: float = 10.0
    lambda_cap: float = 50.0
    # execution
    threads: int = 0
    plots: bool = True
    # provenance
    raw_text: str = field(default="", repr=False)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls(raw_text=text)
        known = {f.name: f for f in fields(cls) if f.name != "raw_text"}
        for lineno, line in enumerate(text.splitlines(), start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, val = (part.strip() for part in body.split("=", 1))
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            current = getattr(cfg, key)
            try:
                if isinstance(current, bool):
                    parsed = _parse_bool(val)
                elif isinstance(current, int):
                    parsed = int(val)
                elif isinstance(current, float):
                    parsed = float(val)
                elif isinstance(current, tuple):
                    parsed = _parse_floats(val)
                else:
                    parsed = val
            except ValueError as exc:
                raise ValueError(f"config line {lineno}: {exc}") from exc
            setattr(cfg, key, parsed)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())

    def validate(self) -> None:
        if self.dimension not in (3, 4):
            raise ValueError("dimension must be 3 or 4")
        if self.nodes < 8:
            raise ValueError("need at least 8 nodes per axis")
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.mode not in ("linf", "lp"):
            raise ValueError("mode must be linf or lp")
        if self.metric not in ("euclidean", "sphere", "bump_g0", "bump_geps", "random"):
            raise ValueError(f"unknown metric family {self.metric!r}")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")

    def echo_lines(self) -> list[str]:
        """The effective configuration, one sorted 'key = value' per line."""
        out = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name == "raw_text":
                continue
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ",".join(f"{v:g}" for v in val)
            out.append(f"{f.name} = {val}")
        return out
