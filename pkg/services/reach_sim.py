"""
Monte Carlo validation of the certified ellipsoid.

Every trajectory owns a Philox stream seeded from (seed, trajectory index),
so chunked, threaded and serial runs draw identical inputs. Trajectories are
simulated a chunk at a time and chunk summaries are reduced in chunk order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
import numpy as np
from django.conf import settings
from apps.validation.models import McReport
from core.exceptions import ModelError, SimulationError

logger = logging.getLogger('asap')

RNG_ALGORITHM = 'Philox'
CONTAINMENT_RTOL = 1e-6


def trajectory_generator(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def _trajectory_strategy(strategy, index):
    if strategy == 'mixed':
        return 'uniform' if index % 2 == 0 else 'bang_bang'
    return strategy


def draw_inputs(cfg, index, amplitudes):
    """
    Inputs (K x m_s) and reservoir keys (K) for one trajectory.

    Uniform draws u_i ~ U[-a_i, a_i]; bang-bang draws u_i = ±a_i with
    equal probability.
    """
    rng = trajectory_generator(cfg.seed, index)
    shape = (cfg.horizon, amplitudes.size)
    if _trajectory_strategy(cfg.strategy, index) == 'uniform':
        unit = rng.uniform(-1.0, 1.0, size=shape)
    else:
        unit = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    keys = rng.random(cfg.horizon)
    return unit * amplitudes, keys


def _run_chunk(A, B_S, amplitudes, cfg, ellipsoid, danger, indices):
    count = len(indices)
    draws = [draw_inputs(cfg, index, amplitudes) for index in indices]
    inputs = np.stack([u for u, _ in draws])
    keys = np.stack([k for _, k in draws])

    dim = A.shape[0]
    x = np.zeros((count, dim))
    visited = np.empty((count, cfg.horizon, dim))
    for step in range(cfg.horizon):
        x = x @ A.T + inputs[:, step, :] @ B_S.T
        if not np.all(np.isfinite(x)):
            bad = int(indices[int(np.flatnonzero(~np.all(np.isfinite(x), axis=1))[0])])
            raise SimulationError(
                f"Non-finite state at step {step + 1} of trajectory {bad}",
                step=step + 1, trajectory=bad,
            )
        visited[:, step, :] = x

    states = visited.reshape(-1, dim)
    forms = ellipsoid.quadratic_form(states)
    extremal = int(np.argmax(forms))
    hits = int(np.count_nonzero(danger.contains(states))) if danger is not None else 0

    flat_keys = keys.ravel()
    keep = min(cfg.reservoir_size, flat_keys.size)
    top = np.argpartition(-flat_keys, keep - 1)[:keep]

    return {
        'max_form': float(forms[extremal]),
        'extremal_state': states[extremal].copy(),
        'contained': int(np.count_nonzero(forms <= ellipsoid.alpha * (1.0 + CONTAINMENT_RTOL))),
        'danger_hits': hits,
        'reservoir_keys': flat_keys[top],
        'reservoir_states': states[top],
        'traces': visited if cfg.persist_traces else None,
    }


def simulate(system, selection, bounds, cfg, ellipsoid, danger=None, max_workers=None) -> McReport:
    """
    Simulate x(k+1) = A x(k) + B_S u(k) from x(0) = 0 for cfg.trajectories
    runs of cfg.horizon steps, with |u_i| <= bounds[i-1].

    Args:
        system: LtiSystem
        selection: 1-based actuator locations driving the system
        bounds: full-length amplitude vector √γ̂ (0 = actuator never acts)
        cfg: SimConfig
        ellipsoid: certified ellipsoid used for the containment check
        danger: DangerSet counted for hits (optional)
        max_workers: threads used across chunks (default ASAP_MAX_WORKERS)

    Returns:
        McReport
    """
    locations = list(getattr(selection, 'selected', selection))
    bounds = np.asarray(bounds, dtype=float).ravel()
    if bounds.size != system.n_inputs:
        raise ModelError(f"Expected {system.n_inputs} bounds, got {bounds.size}")
    if np.any(bounds < 0) or not np.all(np.isfinite(bounds)):
        raise ModelError(f"Bounds must be finite and nonnegative, got {bounds}")
    if ellipsoid.dim != system.dim:
        raise ModelError(f"Ellipsoid dimension {ellipsoid.dim} does not match state dimension {system.dim}")

    if locations:
        B_S = system.input_columns(locations)
        amplitudes = bounds[[location - 1 for location in locations]]
    else:
        B_S = np.zeros((system.dim, 1))
        amplitudes = np.zeros(1)

    max_workers = settings.ASAP_MAX_WORKERS if max_workers is None else max_workers
    chunks = [
        list(range(start, min(start + cfg.chunk_size, cfg.trajectories)))
        for start in range(0, cfg.trajectories, cfg.chunk_size)
    ]

    def run(indices):
        return _run_chunk(system.A, B_S, amplitudes, cfg, ellipsoid, danger, indices)

    if max_workers and max_workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(indices) for indices in chunks]

    best = max(range(len(results)), key=lambda k: (results[k]['max_form'], -k))
    states_checked = cfg.trajectories * cfg.horizon

    reservoir_keys = np.concatenate([result['reservoir_keys'] for result in results])
    reservoir_states = np.concatenate([result['reservoir_states'] for result in results])
    order = np.argsort(-reservoir_keys, kind='stable')[:cfg.reservoir_size]

    report = McReport(
        states_checked=states_checked,
        max_quadratic_form=results[best]['max_form'],
        containment_ratio=sum(result['contained'] for result in results) / states_checked,
        danger_hits=sum(result['danger_hits'] for result in results),
        extremal_state=[float(v) for v in results[best]['extremal_state']],
        rng_algorithm=RNG_ALGORITHM,
        strategy=cfg.strategy,
        seed=cfg.seed,
        horizon=cfg.horizon,
        trajectories=cfg.trajectories,
        samples=reservoir_states[order],
        traces=np.concatenate([result['traces'] for result in results]) if cfg.persist_traces else None,
    )
    logger.info(
        f"[MC] {states_checked} states: max x'Px={report.max_quadratic_form:.6f} "
        f"(alpha={ellipsoid.alpha:g}), containment {report.containment_ratio:.6f}, "
        f"danger hits {report.danger_hits}"
    )
    return report


def empirical_hull_points(report, dims, max_points=10_000):
    """
    Visited states projected on `dims` (2 or 3 coordinates), duplicates
    removed, capped at `max_points`.
    """
    if len(dims) not in (2, 3):
        raise ModelError(f"Scatter export needs 2 or 3 coordinates, got {len(dims)}")
    if report.samples is None or report.samples.size == 0:
        return np.zeros((0, len(dims)))
    projected = report.samples[:, list(dims)]
    _, first = np.unique(projected, axis=0, return_index=True)
    unique = projected[np.sort(first)]
    return unique[:max_points]
