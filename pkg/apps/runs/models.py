from dataclasses import dataclass, field
from typing import Optional
from apps.platoon.models import PlatoonParams
from apps.validation.models import McReport, SimConfig


@dataclass(frozen=True)
class RunConfig:
    """One pipeline run, parsed from the versioned JSON configuration."""

    platoon: PlatoonParams
    budget: int
    epsilon: float
    a_grid: tuple
    sim: SimConfig
    output_dir: str = 'asap_output'
    export_dims: tuple = ()
    fixed_selection: Optional[tuple] = None
    reference_selection: Optional[tuple] = None
    reference_bounds: Optional[tuple] = None
    use_coefficients: bool = False
    version: int = 1


@dataclass
class BoundRow:
    index: int
    selected: bool
    bound: float


@dataclass
class RunReport:
    """
    Everything a run produces, as plain data. Unselected rows of
    `bounds_table` carry bound 0.
    """

    version: int
    n: int
    budget: int
    selection: list
    marginal_gains: list
    objective_trace: list
    reference_selection: Optional[list]
    reference_match: Optional[bool]
    bounds_table: list
    a_star: float
    per_a_trace: list
    safety_distances: list
    original_distances: list
    original_log_volume: float
    final_log_volume: float
    original_intersects: bool
    final_intersects: bool
    spectral_radius: float
    mc: Optional[McReport] = None
    timings: dict = field(default_factory=dict)
    reference_bounds: Optional[list] = None
    reference_bounds_deviation: Optional[float] = None
    reference_bounds_match: Optional[bool] = None
