"""
Stage artifacts written to the run's output directory.

JSON is written with sorted keys and a fixed indent and CSV floats with a
fixed format, so two runs with the same config and seed produce identical
files. Timings go to their own file for the same reason.
"""

import json
import logging
from pathlib import Path
import numpy as np
from apps.runs.serializers import RunReportSerializer
from apps.saturation.serializers import LineSearchPointSerializer
from apps.validation.serializers import McReportSerializer

logger = logging.getLogger('asap')

FLOAT_FORMAT = '%.12g'


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n')
    logger.debug(f"[EXPORT] Wrote {path}")
    return path


def write_points_csv(path, labels, points):
    """One point per row under a header of state labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    points = np.asarray(points, dtype=float).reshape(-1, len(labels))
    np.savetxt(path, points, fmt=FLOAT_FORMAT, delimiter=',', header=','.join(labels), comments='')
    logger.debug(f"[EXPORT] Wrote {path} ({points.shape[0]} points)")
    return path


def write_bounds_csv(path, bounds, selection):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chosen = set(selection)
    lines = ['vehicle,selected,bound']
    for index, bound in enumerate(bounds, start=1):
        lines.append(f"{index},{int(index in chosen)},{FLOAT_FORMAT % bound}")
    path.write_text('\n'.join(lines) + '\n')
    logger.debug(f"[EXPORT] Wrote {path}")
    return path


def export_model(out_dir, system, danger, rho):
    return write_json(Path(out_dir) / 'model.json', {
        'A': system.A,
        'B': system.B_full,
        'state_labels': list(system.state_labels),
        'danger_planes': [{'c': plane.c, 'b': plane.b} for plane in danger.planes],
        'spectral_radius': rho,
    })


def export_selection(out_dir, selection, reference=None, reference_match=None):
    return write_json(Path(out_dir) / 'selection.json', {
        'selection': list(selection.selected),
        'marginal_gains': list(selection.marginal_gains),
        'objective_trace': list(selection.objective_trace),
        'epsilon': selection.epsilon,
        'reference_selection': list(reference) if reference is not None else None,
        'reference_match': reference_match,
    })


def export_saturation(out_dir, saturation, selection):
    """saturation.json and bounds.csv from the pipeline's saturation stage."""
    result = saturation['result']
    out_dir = Path(out_dir)
    write_json(out_dir / 'saturation.json', {
        'selection': list(result.selection),
        'a_star': result.a_star,
        'gamma_hat': list(result.gamma_hat.gamma_hat),
        'amplitudes': list(result.gamma_hat.amplitudes),
        'Y': result.Y,
        'log_volume': result.log_volume,
        'original_log_volume': saturation['original'].log_volume(),
        'per_a_trace': LineSearchPointSerializer(result.per_a_trace, many=True).data,
        'safety_distances': list(saturation['final_check'].distances),
        'original_distances': list(saturation['original_check'].distances),
        'final_intersects': saturation['final_check'].intersects,
        'original_intersects': saturation['original_check'].intersects,
        'reference': saturation['reference'],
    })
    return write_bounds_csv(out_dir / 'bounds.csv', saturation['bounds'], selection.selected)


def export_mc_report(out_dir, report):
    out_dir = Path(out_dir)
    path = write_json(out_dir / 'mc_report.json', McReportSerializer(report).data)
    if report.traces is not None:
        np.savez_compressed(out_dir / 'mc_traces.npz', traces=report.traces)
        logger.info(f"[EXPORT] Persisted {report.traces.shape[0]} trajectories to mc_traces.npz")
    return path


def export_projections(out_dir, projections):
    """Boundary and scatter CSVs per projection, named after the state labels."""
    out_dir = Path(out_dir)
    written = []
    for projection in projections:
        labels = projection['labels']
        stem = f"projection_{'-'.join(labels)}"
        for suffix in ('original_boundary', 'final_boundary', 'mc_scatter'):
            written.append(write_points_csv(out_dir / f"{stem}_{suffix}.csv", labels, projection[suffix]))
    return written


def export_report(out_dir, report):
    """report.json (everything but timings) and timings.json."""
    out_dir = Path(out_dir)
    data = dict(RunReportSerializer(report).data)
    timings = data.pop('timings', {})
    write_json(out_dir / 'timings.json', timings)
    return write_json(out_dir / 'report.json', data)
