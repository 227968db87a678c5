from dataclasses import dataclass, field
from typing import Optional
import numpy as np
from django.conf import settings
from core.exceptions import ModelError


STRATEGY_ALIASES = {
    'uniform': 'uniform',
    'bang_bang': 'bang_bang',
    'bang-bang': 'bang_bang',
    'extreme': 'bang_bang',
    'mixed': 'mixed',
}


@dataclass(frozen=True)
class SimConfig:
    """
    Monte Carlo settings. `mixed` alternates uniform and bang-bang
    trajectories (even trajectory index uniform, odd bang-bang).
    """

    horizon: Optional[int] = None
    trajectories: Optional[int] = None
    seed: Optional[int] = None
    strategy: Optional[str] = None
    chunk_size: Optional[int] = None
    reservoir_size: Optional[int] = None
    persist_traces: bool = False

    def __post_init__(self):
        defaults = {
            'horizon': settings.ASAP_MC_HORIZON,
            'trajectories': settings.ASAP_MC_TRAJECTORIES,
            'seed': settings.ASAP_MC_SEED,
            'strategy': settings.ASAP_MC_STRATEGY,
            'chunk_size': settings.ASAP_MC_CHUNK,
            'reservoir_size': settings.ASAP_MC_RESERVOIR,
        }
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)

        if self.horizon < 1:
            raise ModelError(f"Monte Carlo horizon must be >= 1, got {self.horizon}")
        if self.trajectories < 1:
            raise ModelError(f"Monte Carlo trajectory count must be >= 1, got {self.trajectories}")
        if self.chunk_size < 1 or self.reservoir_size < 1:
            raise ModelError("Monte Carlo chunk and reservoir sizes must be >= 1")
        if self.strategy not in STRATEGY_ALIASES:
            raise ModelError(
                f"Unknown sampling strategy '{self.strategy}', expected one of {sorted(STRATEGY_ALIASES)}"
            )
        object.__setattr__(self, 'strategy', STRATEGY_ALIASES[self.strategy])


@dataclass
class McReport:
    """
    Summary of one Monte Carlo run. `samples` is the reservoir of visited
    states kept for plotting and `traces` the full trajectories when
    requested; neither is part of the serialized report.
    """

    states_checked: int
    max_quadratic_form: float
    containment_ratio: float
    danger_hits: int
    extremal_state: list
    rng_algorithm: str = 'Philox'
    strategy: str = 'mixed'
    seed: int = 0
    horizon: int = 0
    trajectories: int = 0
    samples: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    traces: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
