"""Experiment runners behind the command line.

Each experiment maps a pure per-draw function over channel realizations
and reduces the results in draw order, so the worker count never changes
the output. Every float is written with ``repr`` so CSVs round-trip.

CSV layouts (one file per curve):

``convergence_traces.csv``
    N, delta, draw, iteration, D_su, D_pu, eta
``convergence.csv``
    iteration, mean_ratio, stderr_ratio  (``D_su / final D_su`` over draws)
``tradeoff.csv``
    delta, then for ``P_s`` and ``P_c``: median, mean, stderr, bound;
    then schemeI_P_s, schemeII_P_s (analytic, RIS-off and pure assistance)
``feasible_prob.csv``
    delta, then per scheme: feasible fraction and its stderr
``error_floor_<scheme>.csv``
    N, mean_P_s, stderr_P_s, bound_P_s, floor_P_s, max_rel_gap, frac_below_conventional
``ambiguity.csv``
    P_t_dbm, mean_P_s, stderr_P_s, bound_P_s, mean_P_c, stderr_P_c, bound_P_c
``ber_vs_power_<receiver>_N<N>_<scheme>.csv``
    P_t_dbm, mean, stderr, bound
``mrtzf_ber_delta<delta>.csv``
    P_t_dbm, mean_P_s, stderr_P_s, bound_P_s, mean_P_c, stderr_P_c, bound_P_c
``mrtzf_alloc_delta<delta>.csv``
    N, mean_alpha, stderr_alpha, mean_beta, stderr_beta, mean_t, frac_zf_feasible
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysis import (
    align_phases,
    min_symbol_distance,
    q_function,
    scheme_I,
    scheme_II,
    union_bound_primary,
    union_bound_secondary,
)
from .channels import cascades, generate
from .config import ExperimentSpec, dump_config
from .core import PhasePair, dbm_to_watt, make_constellation
from .detection import build_composite, simulate_errors
from .mrtzf import build_phase_pair, design
from .optimizer import max_primary_distance, run_algorithm1

__all__ = ["THREADS_ENV", "NumericalFailure", "resolve_threads", "execute"]

THREADS_ENV = "RISSR_THREADS"

# first noise-stream index per experiment keeps Monte Carlo streams disjoint
_STREAM_BASE = {
    "tradeoff": 10,
    "error_floor": 20,
    "ambiguity": 30,
    "ber_vs_power_primary": 40,
    "ber_vs_power_secondary": 50,
    "mrtzf_ber": 60,
}


class NumericalFailure(RuntimeError):
    """A result came out non-finite."""


def resolve_threads(threads=None) -> int:
    """Worker count from the argument, else ``RISSR_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        threads = int(raw) if raw else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _alphabets(spec: ExperimentSpec):
    return (
        make_constellation(spec.primary, spec.labeling),
        make_constellation(spec.secondary, spec.labeling),
    )


def _sigma2(spec: ExperimentSpec) -> float:
    return float(dbm_to_watt(spec.sigma2_dbm))


def _schemes(spec: ExperimentSpec) -> list:
    return ["proposed", "conventional"] if spec.scheme == "both" else [spec.scheme]


def _ber_point(ch, w, pp, A_s, A_c, spec, stream, receivers=("PU", "SU")):
    """Union bounds and Monte Carlo rates at the requested receivers."""
    s2 = _sigma2(spec)
    out = {}
    for rx in receivers:
        cc = build_composite(ch, w, pp, A_s, A_c, rx)
        counts = simulate_errors(cc, s2, spec.trials, stream=stream + (rx == "SU",), seed=spec.seed)
        if rx == "PU":
            out["P_s"] = counts.p_s
            out["bits_s"] = counts.bits_s
            out["bound_P_s"] = union_bound_primary(cc, s2)
        else:
            out["P_c"] = counts.p_c
            out["bits_c"] = counts.bits_c
            out["bound_P_c"] = union_bound_secondary(cc, s2)
    return out


def _primary_only_bound(A_s, gain: float, sigma2: float) -> float:
    """Union bound on the BER of ``s`` alone through a scalar gain."""
    s = A_s.symbols
    d = np.abs(s[:, None] - s[None, :]) ** 2 * gain**2
    pep = q_function(np.sqrt(d / (2.0 * sigma2)))
    ham = A_s.hamming_table()
    return float(np.sum(pep * ham) / (len(s) * np.log2(len(s))))


def _mean_stderr(p, bits) -> tuple:
    """Mean of per-draw rates and its binomial standard error."""
    p = np.asarray(p, float)
    bits = np.asarray(bits, float)
    var = np.sum(p * (1.0 - p) / bits) / len(p) ** 2
    return float(p.mean()), float(np.sqrt(var))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    for row in rows:
        for x in row:
            if isinstance(x, (float, np.floating)) and not np.isfinite(x) and not np.isinf(x):
                raise NumericalFailure(f"{path.name}: non-finite value")
    lines = [",".join(header)] + [",".join(_fmt(x) for x in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _tag(x: float) -> str:
    return repr(float(x)).replace(".", "p")


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Per-draw tasks (top level so worker processes can import them)
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _ao(spec, ch, cfg, conventional=False):
    A_s, A_c = _alphabets(spec)
    return run_algorithm1(
        ch, cfg, A_s, A_c, tol=spec.tol, max_outer=spec.max_outer,
        conventional=conventional, schedule=spec.schedule,
    )


def _task_convergence(item):
    spec, N, delta, draw = item
    cfg = spec.scenario(N=N, delta=delta)
    st = _ao(spec, generate(cfg, draw), cfg)
    return [(float(a), float(b)) for a, b in zip(st.D_su_trace, st.D_pu_trace)], st.eta


def _task_tradeoff(item):
    spec, k, delta, draw = item
    A_s, A_c = _alphabets(spec)
    cfg = spec.scenario(delta=delta)
    ch = generate(cfg, draw)
    st = _ao(spec, ch, cfg, conventional=spec.scheme == "conventional")
    out = _ber_point(ch, st.w, st.pp, A_s, A_c, spec, (_STREAM_BASE["tradeoff"], k, draw, 0))
    s2 = _sigma2(spec)
    sI = scheme_I(ch, cfg.P_t, A_s)
    sII = scheme_II(ch, cfg.P_t, A_s)
    out["schemeI_P_s"] = _primary_only_bound(A_s, np.sqrt(sI.D / min_symbol_distance(A_s)), s2)
    out["schemeII_P_s"] = _primary_only_bound(A_s, sII.gain, s2)
    return out


def _task_feasible(item):
    spec, draw = item
    A_s, A_c = _alphabets(spec)
    cfg = spec.scenario()
    ch = generate(cfg, draw)
    D_I = scheme_I(ch, cfg.P_t, A_s).D
    D_II = scheme_II(ch, cfg.P_t, A_s).D
    best = {}
    for scheme in _schemes(spec):
        pt = max_primary_distance(
            ch, cfg, A_s, A_c, conventional=scheme == "conventional",
            restarts=spec.restarts, stream=draw,
        )
        best[scheme] = pt.D_pu
    return D_I, D_II, best


def error_floor_phases(ch, w) -> PhasePair:
    """Fixed-phase conventional rule: every reflected term at ``pi/4`` to the direct one."""
    Fw = cascades(ch).F_p @ w
    ref = np.angle(np.vdot(ch.h_p, w))
    theta2 = np.exp(1j * (np.pi / 4.0 + ref - np.angle(Fw)))
    return PhasePair(np.zeros(ch.N, complex), theta2)


def _task_error_floor(item):
    spec, k, N, draw = item
    A_s, A_c = _alphabets(spec)
    cfg = spec.scenario(N=N)
    ch = generate(cfg, draw)
    s2 = _sigma2(spec)
    w = scheme_I(ch, cfg.P_t, A_s).w
    mu = np.sqrt(cfg.P_t / (2.0 * s2))
    floor = float(q_function(2.0 * mu * abs(np.vdot(ch.h_p, w / np.linalg.norm(w)))))
    pps = {
        "conventional": error_floor_phases(ch, w),
        "proposed": PhasePair(align_phases(ch, w), np.zeros(ch.N, complex)),
    }
    out = {"floor": floor}
    for j, scheme in enumerate(("proposed", "conventional")):
        stream = (_STREAM_BASE["error_floor"], j, k, draw)
        out[scheme] = _ber_point(ch, w, pps[scheme], A_s, A_c, spec, stream, ("PU",))
    return out


def ambiguity_design(ch, P_t: float):
    """Beamformer on the strongest reflected direction, ``theta2`` co-phased at the PU."""
    F_p = cascades(ch).F_p
    _, _, vh = np.linalg.svd(F_p)
    w = np.sqrt(P_t) * vh[0].conj()
    Fw = F_p @ w
    return w, PhasePair(np.zeros(ch.N, complex), np.exp(-1j * np.angle(Fw)))


def _task_ambiguity(item):
    spec, k, p_dbm, draw = item
    A_s, A_c = _alphabets(spec)
    cfg = spec.scenario(P_t_dbm=p_dbm)
    ch = generate(cfg, draw)
    w, pp = ambiguity_design(ch, cfg.P_t)
    return _ber_point(ch, w, pp, A_s, A_c, spec, (_STREAM_BASE["ambiguity"], k, draw))


def _task_power(item):
    spec, N, scheme, draw = item
    A_s, A_c = _alphabets(spec)
    # the design is homogeneous in P_t: solve at 1 W and rescale w
    cfg = spec.scenario(N=N, P_t_dbm=30.0)
    ch = generate(cfg, draw)
    st = _ao(spec, ch, cfg, conventional=scheme == "conventional")
    rx = "PU" if spec.name == "ber_vs_power_primary" else "SU"
    rows = []
    for k, p_dbm in enumerate(spec.P_t_dbm):
        w = np.sqrt(dbm_to_watt(p_dbm)) * st.w
        stream = (_STREAM_BASE[spec.name], N, scheme == "conventional", k, draw)
        rows.append(_ber_point(ch, w, st.pp, A_s, A_c, spec, stream, (rx,)))
    return rows


def _task_mrtzf(item):
    spec, N, delta, draw = item
    A_s, A_c = _alphabets(spec)
    cfg = spec.scenario(N=N, delta=delta)
    ch = generate(cfg, draw)
    res = design(ch, delta, A_s, A_c)
    if spec.name == "mrtzf_alloc":
        return res.alpha, abs(res.beta), res.t_ratio, res.feasible
    pp = build_phase_pair(res)
    rows = []
    k_delta = spec.delta.index(delta)
    for k, p_dbm in enumerate(spec.P_t_dbm):
        w = np.array([np.sqrt(dbm_to_watt(p_dbm))], complex)
        stream = (_STREAM_BASE["mrtzf_ber"], k_delta, k, draw)
        rows.append(_ber_point(ch, w, pp, A_s, A_c, spec, stream))
    return rows


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Reductions
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _run_convergence(spec, out, threads):
    items = [(spec, N, d, r) for N in spec.N for d in spec.delta for r in range(spec.draws)]
    res = _map(_task_convergence, items, threads)
    rows = []
    ratios = []
    for (_, N, d, r), (trace, eta) in zip(items, res):
        for q, (su, pu) in enumerate(trace):
            rows.append((N, d, r, q, su, pu, eta))
        final = trace[-1][0]
        ratios.append([su / final if final > 0 else 1.0 for su, _ in trace])
    _write_csv(out / "convergence_traces.csv", ("N", "delta", "draw", "iteration", "D_su", "D_pu", "eta"), rows)
    length = max(len(x) for x in ratios)
    padded = np.array([x + [x[-1]] * (length - len(x)) for x in ratios])
    n = padded.shape[0]
    mean_rows = [
        (q, float(padded[:, q].mean()), float(padded[:, q].std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
        for q in range(length)
    ]
    _write_csv(out / "convergence.csv", ("iteration", "mean_ratio", "stderr_ratio"), mean_rows)
    return ["convergence_traces.csv", "convergence.csv"]


def _run_tradeoff(spec, out, threads):
    items = [(spec, k, d, r) for k, d in enumerate(spec.delta) for r in range(spec.draws)]
    res = _map(_task_tradeoff, items, threads)
    rows = []
    for k, d in enumerate(spec.delta):
        block = res[k * spec.draws : (k + 1) * spec.draws]
        row = [d]
        for key, bits in (("P_s", "bits_s"), ("P_c", "bits_c")):
            p = [b[key] for b in block]
            mean, se = _mean_stderr(p, [b[bits] for b in block])
            row += [float(np.median(p)), mean, se, float(np.mean([b["bound_" + key] for b in block]))]
        row += [float(np.mean([b["schemeI_P_s"] for b in block])), float(np.mean([b["schemeII_P_s"] for b in block]))]
        rows.append(row)
    header = (
        "delta",
        "median_P_s", "mean_P_s", "stderr_P_s", "bound_P_s",
        "median_P_c", "mean_P_c", "stderr_P_c", "bound_P_c",
        "schemeI_P_s", "schemeII_P_s",
    )
    _write_csv(out / "tradeoff.csv", header, rows)
    return ["tradeoff.csv"]


def _run_feasible(spec, out, threads):
    from .analysis import eta as eta_value
    from .optimizer import FEAS_RTOL

    res = _map(_task_feasible, [(spec, r) for r in range(spec.draws)], threads)
    schemes = _schemes(spec)
    rows = []
    for d in spec.delta:
        row = [d]
        for scheme in schemes:
            ok = [best[scheme] >= eta_value(D_I, D_II, d) * (1.0 - FEAS_RTOL) for D_I, D_II, best in res]
            frac = float(np.mean(ok))
            row += [frac, float(np.sqrt(frac * (1.0 - frac) / len(ok)))]
        rows.append(row)
    header = ["delta"] + [f"{s}_{c}" for s in schemes for c in ("feasible", "stderr")]
    _write_csv(out / "feasible_prob.csv", header, rows)
    return ["feasible_prob.csv"]


def _run_error_floor(spec, out, threads):
    items = [(spec, k, N, r) for k, N in enumerate(spec.N) for r in range(spec.draws)]
    res = _map(_task_error_floor, items, threads)
    files = []
    header = ("N", "mean_P_s", "stderr_P_s", "bound_P_s", "floor_P_s", "max_rel_gap", "frac_below_conventional")
    for scheme in _schemes(spec):
        rows = []
        for k, N in enumerate(spec.N):
            block = res[k * spec.draws : (k + 1) * spec.draws]
            mean, se = _mean_stderr([b[scheme]["P_s"] for b in block], [b[scheme]["bits_s"] for b in block])
            bounds = np.array([b[scheme]["bound_P_s"] for b in block])
            floors = np.array([b["floor"] for b in block])
            conv = np.array([b["conventional"]["bound_P_s"] for b in block])
            gap = float(np.max(np.abs(bounds - floors) / np.where(floors > 0, floors, 1.0)))
            rows.append((N, mean, se, float(bounds.mean()), float(floors.mean()), gap, float(np.mean(bounds < conv))))
        name = f"error_floor_{scheme}.csv"
        _write_csv(out / name, header, rows)
        files.append(name)
    return files


def _run_ambiguity(spec, out, threads):
    items = [(spec, k, p, r) for k, p in enumerate(spec.P_t_dbm) for r in range(spec.draws)]
    res = _map(_task_ambiguity, items, threads)
    rows = []
    for k, p in enumerate(spec.P_t_dbm):
        block = res[k * spec.draws : (k + 1) * spec.draws]
        row = [p]
        for key, bits in (("P_s", "bits_s"), ("P_c", "bits_c")):
            mean, se = _mean_stderr([b[key] for b in block], [b[bits] for b in block])
            row += [mean, se, float(np.mean([b["bound_" + key] for b in block]))]
        rows.append(row)
    header = ("P_t_dbm", "mean_P_s", "stderr_P_s", "bound_P_s", "mean_P_c", "stderr_P_c", "bound_P_c")
    _write_csv(out / "ambiguity.csv", header, rows)
    return ["ambiguity.csv"]


def _run_power(spec, out, threads):
    schemes = _schemes(spec)
    items = [(spec, N, s, r) for N in spec.N for s in schemes for r in range(spec.draws)]
    res = _map(_task_power, items, threads)
    key, bits = ("P_s", "bits_s") if spec.name == "ber_vs_power_primary" else ("P_c", "bits_c")
    rx = "primary" if key == "P_s" else "secondary"
    files = []
    idx = 0
    for N in spec.N:
        for s in schemes:
            block = res[idx : idx + spec.draws]
            idx += spec.draws
            rows = []
            for k, p in enumerate(spec.P_t_dbm):
                pts = [b[k] for b in block]
                mean, se = _mean_stderr([x[key] for x in pts], [x[bits] for x in pts])
                rows.append((p, mean, se, float(np.mean([x["bound_" + key] for x in pts]))))
            name = f"ber_vs_power_{rx}_N{N}_{s}.csv"
            _write_csv(out / name, ("P_t_dbm", "mean", "stderr", "bound"), rows)
            files.append(name)
    return files


def _run_mrtzf_ber(spec, out, threads):
    N = spec.N[0]
    items = [(spec, N, d, r) for d in spec.delta for r in range(spec.draws)]
    res = _map(_task_mrtzf, items, threads)
    files = []
    header = ("P_t_dbm", "mean_P_s", "stderr_P_s", "bound_P_s", "mean_P_c", "stderr_P_c", "bound_P_c")
    for j, d in enumerate(spec.delta):
        block = res[j * spec.draws : (j + 1) * spec.draws]
        rows = []
        for k, p in enumerate(spec.P_t_dbm):
            pts = [b[k] for b in block]
            row = [p]
            for key, bits in (("P_s", "bits_s"), ("P_c", "bits_c")):
                mean, se = _mean_stderr([x[key] for x in pts], [x[bits] for x in pts])
                row += [mean, se, float(np.mean([x["bound_" + key] for x in pts]))]
            rows.append(row)
        name = f"mrtzf_ber_delta{_tag(d)}.csv"
        _write_csv(out / name, header, rows)
        files.append(name)
    return files


def _run_mrtzf_alloc(spec, out, threads):
    items = [(spec, N, d, r) for d in spec.delta for N in spec.N for r in range(spec.draws)]
    res = _map(_task_mrtzf, items, threads)
    files = []
    header = ("N", "mean_alpha", "stderr_alpha", "mean_beta", "stderr_beta", "mean_t", "frac_zf_feasible")
    idx = 0
    for d in spec.delta:
        rows = []
        for N in spec.N:
            block = np.array(res[idx : idx + spec.draws], float)
            idx += spec.draws
            n = len(block)
            se = (lambda x: float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
            rows.append((
                N, float(block[:, 0].mean()), se(block[:, 0]), float(block[:, 1].mean()),
                se(block[:, 1]), float(block[:, 2].mean()), float(block[:, 3].mean()),
            ))
        name = f"mrtzf_alloc_delta{_tag(d)}.csv"
        _write_csv(out / name, header, rows)
        files.append(name)
    return files


_RUNNERS = {
    "convergence": _run_convergence,
    "tradeoff": _run_tradeoff,
    "feasible_prob": _run_feasible,
    "error_floor": _run_error_floor,
    "ambiguity": _run_ambiguity,
    "ber_vs_power_primary": _run_power,
    "ber_vs_power_secondary": _run_power,
    "mrtzf_ber": _run_mrtzf_ber,
    "mrtzf_alloc": _run_mrtzf_alloc,
}


def execute(spec: ExperimentSpec, out_dir, threads=None) -> list:
    """Run ``spec`` and write its CSVs plus ``manifest.json`` into ``out_dir``.

    Returns the written file names. Raises ``InfeasibleError`` when a
    required subproblem has no solution and :class:`NumericalFailure` on
    non-finite output.
    """
    from . import __version__

    threads = resolve_threads(threads)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with np.errstate(over="ignore", under="ignore"):
        files = _RUNNERS[spec.name](spec, out, threads)
    manifest = {
        "experiment": spec.name,
        "seed": spec.seed,
        "version": __version__,
        "config": dump_config(spec),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files
