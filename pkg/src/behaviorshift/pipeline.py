"""File-to-file pipeline stages used by the command line."""

import contextlib
import json
import logging
import os
import tempfile
import zlib
from pathlib import Path

import numpy as np

from . import changepoint, detector, evaluation, features, mixture, synth
from .exceptions import BehaviorShiftError

logger = logging.getLogger(__name__)

_FIT, _DETECT, _SIM_DATA, _SIM_EVENTS = 1, 2, 3, 4


@contextlib.contextmanager
def atomic_write(path):
    """Write to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def patient_seed(seed, patient_id, stage):
    """Stable 32-bit seed per (run seed, patient, stage)."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(patient_id.encode()), stage])
    return int(ss.generate_state(1)[0])


def _select(items, patients):
    if not patients:
        return items
    wanted = set(patients)
    return {k: v for k, v in items.items() if k in wanted}


def _read_features(cfg):
    with open(cfg.paths.features, newline="") as f:
        return _select(features.read_daily_features(f), cfg.patients)


def featurize(cfg):
    """Events file -> daily-feature file (+ ``.errors.tsv`` sidecar).

    Returns the number of line errors.
    """
    if cfg.paths.events is None:
        raise BehaviorShiftError("no events path configured")
    with open(cfg.paths.events, newline="") as f:
        events, errors = features.parse_events(f)
    if cfg.patients:
        events = [e for e in events if e.patient_id in set(cfg.patients)]
    f_cfg = cfg.featurize
    series = features.featurize(events, f_cfg.utc_offset_hours, f_cfg.home_radius_m,
                                f_cfg.home_window_days)
    if errors and not series:
        raise BehaviorShiftError(f"{len(errors)} malformed lines and no valid days")
    with atomic_write(cfg.paths.features) as f:
        features.write_daily_features(list(series.values()), f)
    sidecar = Path(str(cfg.paths.features) + ".errors.tsv")
    if errors:
        with atomic_write(sidecar) as f:
            f.write("line\tmessage\ttext\n")
            for e in errors:
                f.write(f"{e.lineno}\t{e.message}\t{e.line}\n")
    elif sidecar.exists():
        sidecar.unlink()
    logger.info("featurized %d patients, %d line errors", len(series), len(errors))
    return len(errors)


def fit(cfg):
    """Daily-feature file -> per-patient model file (K chosen by BIC)."""
    series = _read_features(cfg)
    m = cfg.mixture
    models = {}
    for pid, s in series.items():
        try:
            model, _ = mixture.select_k(
                s.to_matrix(), range(m.k_min, m.k_max + 1), tol=m.tol,
                max_iter=m.max_iter, n_init=m.restarts,
                random_state=patient_seed(cfg.seed, pid, _FIT))
        except BehaviorShiftError as exc:
            logger.warning("patient %s not fitted: %s", pid, exc)
            continue
        models[pid] = mixture.model_to_dict(model)
        logger.info("patient %s: K=%d", pid, model.n_components)
    if series and not models:
        raise BehaviorShiftError("no patient could be fitted")
    doc = {"format_version": mixture.FORMAT_VERSION, "seed": cfg.seed,
           "patients": models}
    with atomic_write(cfg.paths.model) as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    return models


def _read_models(cfg):
    with open(cfg.paths.model) as f:
        doc = json.load(f)
    return {pid: mixture.model_from_dict(d)
            for pid, d in _select(doc["patients"], cfg.patients).items()}


def detect(cfg):
    """Features + models -> run-length trace file and alarm file."""
    series = _read_features(cfg)
    models = _read_models(cfg)
    c = cfg.cpd
    dcfg = detector.DetectorConfig(cfg.detector.epsilon, cfg.detector.min_drop,
                                   cfg.detector.refractory)
    traces, alarms = {}, {}
    for pid in sorted(models):
        if pid not in series:
            logger.warning("model for %s has no feature series", pid)
            continue
        s = series[pid]
        P = models[pid].predict_proba(s.to_matrix())
        traces[pid] = changepoint.run_detector(
            P, c.samples, c.alpha0, c.hazard, c.prune_threshold, c.max_support,
            patient_seed(cfg.seed, pid, _DETECT), s.dates, c.recent_window)
        alarms[pid] = detector.detect(traces[pid], dcfg)
    with atomic_write(cfg.paths.trace) as f:
        changepoint.write_traces(traces, f)
    with atomic_write(cfg.paths.alarms) as f:
        detector.write_alarms(alarms, f)
    return traces, alarms


def _echo(cfg):
    out = cfg.as_dict()
    base = Path(cfg.paths.report).parent
    out["paths"] = {k: None if v is None else os.path.relpath(v, base)
                    for k, v in out["paths"].items()}
    return out


def evaluate(cfg):
    """Trace + alarms + truth events -> JSON report."""
    with open(cfg.paths.trace, newline="") as f:
        traces = _select(changepoint.read_traces(f, cfg.cpd.recent_window), cfg.patients)
    with open(cfg.paths.alarms, newline="") as f:
        alarms = detector.read_alarms(f)
    with open(cfg.paths.truth, newline="") as f:
        events = evaluation.read_events(f)
    report = evaluation.evaluate(traces, alarms, events, cfg.evaluation.window,
                                 cfg.evaluation.score)
    with atomic_write(cfg.paths.report) as f:
        json.dump(report.as_dict(_echo(cfg)), f, indent=1, sort_keys=True)
        f.write("\n")
    return report


def simulate(cfg):
    """Synthetic cohort -> daily-feature file, truth events and change-points."""
    sim = cfg.simulate
    if not sim.scenario:
        raise BehaviorShiftError("no [simulate] scenario configured")
    presets = synth.default_scenarios(sim.n_days, sim.separation)
    if sim.scenario not in presets:
        raise BehaviorShiftError(f"unknown scenario {sim.scenario!r}; "
                                 f"choose from {sorted(presets)}")
    all_series, events, cps = [], [], []
    for i in range(sim.patients):
        pid = f"S{i + 1:03d}"
        gt = synth.with_seed(presets[sim.scenario],
                             patient_seed(cfg.seed, pid, _SIM_DATA), pid)
        series, cp_dates = synth.generate(gt)
        all_series.append(series)
        cps.extend((pid, d) for d in cp_dates)
        for d in synth.plant_events(cp_dates, patient_seed(cfg.seed, pid, _SIM_EVENTS),
                                    sim.max_event_lag):
            events.append(evaluation.ClinicalEvent(pid, d))
    with atomic_write(cfg.paths.features) as f:
        features.write_daily_features(all_series, f)
    with atomic_write(cfg.paths.truth) as f:
        evaluation.write_events(events, f)
    with atomic_write(Path(str(cfg.paths.truth) + ".changepoints.csv")) as f:
        f.write("patient_id,date\n")
        for pid, d in cps:
            f.write(f"{pid},{d.isoformat()}\n")
    return all_series, events


def run(cfg):
    """All stages in order; the data source is the events file or a simulation."""
    if cfg.paths.events is not None:
        featurize(cfg)
    elif cfg.simulate.scenario:
        simulate(cfg)
    elif not Path(cfg.paths.features).exists():
        raise BehaviorShiftError("no events file, scenario or feature file to start from")
    fit(cfg)
    detect(cfg)
    if Path(cfg.paths.truth).exists():
        evaluate(cfg)
    else:
        logger.info("no truth events at %s; skipping evaluation", cfg.paths.truth)
