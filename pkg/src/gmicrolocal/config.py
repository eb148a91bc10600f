"""Shared numerical thresholds.

Every tolerance used by a classifier or verdict lives here so that the CLI
manifest can echo one dictionary and nothing is hard-coded twice.
"""
from dataclasses import dataclass, asdict, replace


@dataclass(frozen=True)
class Thresholds:
    # nets
    slow_slope: float = 0.1
    negligible_min_slope: float = 8.0
    moderate_max_slope: float = 64.0
    tail_fraction: float = 0.5
    negligible_r2: float = 0.8
    accel_ratio: float = 1.25
    # symbols
    order_tol: float = 0.05
    order_profile_slack: float = 0.10
    order_slope_slack: float = 0.01
    ellip_growth_tol: float = 0.05
    smoothing_slack: float = 0.5
    # wavefront
    tau_dir: float = 0.15
    n_max: float = 40.0
    verdict_r2: float = 0.7
    wf_tail_points: int = 3
    ginf_spread: float = 0.75
    # calculus
    residual_order_tol: float = 0.25
    order_floor: float = -10.0
    # hyperbolic
    richardson_tol: float = 1e-6
    cfl: float = 0.5
    blowup_factor: float = 1e6

    def as_dict(self):
        return asdict(self)

    def updated(self, **kw):
        return replace(self, **kw)


DEFAULT = Thresholds()
