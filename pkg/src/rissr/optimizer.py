"""Alternating optimization of the PT beamformer and the RIS phase pair.

The beamformer step is a lifted SDP; the phase step is a tangent-minorant
(SCA) QCQP over ``v``, the diagonals of the two RIS matrices interleaved as
``v[2n] = theta1[n]``, ``v[2n + 1] = theta2[n]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .analysis import align_phases, eta as eta_value, scheme_I, scheme_II
from .channels import ChannelSet, cascades, rng_for
from .convex import (
    QcqpInstance,
    SdpInstance,
    Status,
    extract_rank_one,
    solve_qcqp,
    solve_sdp,
)
from .core import Constellation, PhasePair, ScenarioConfig, make_constellation

__all__ = [
    "InfeasibleError",
    "AoState",
    "primary_pairs",
    "secondary_pairs",
    "pair_rows",
    "pp_to_v",
    "v_to_pp",
    "distances",
    "build_w_subproblem",
    "build_theta_subproblem",
    "pair_quadratics",
    "initial_point",
    "run_algorithm1",
    "max_primary_distance",
    "feasibility_probe",
]

# relative slack allowed on the primary requirement after a solve
FEAS_RTOL = 1e-6


class InfeasibleError(RuntimeError):
    """The primary distance requirement cannot be met; ``stage`` says where."""

    def __init__(self, stage: str, message: str = ""):
        super().__init__(f"infeasible at {stage}" + (f": {message}" if message else ""))
        self.stage = stage


def _default_alphabets(A_s, A_c):
    return (A_s or make_constellation("QPSK"), A_c or make_constellation("BPSK"))


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Pair bookkeeping
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _pairs(A_s: Constellation, A_c: Constellation, by: str) -> list:
    pts = [(i, m) for i in range(len(A_s)) for m in range(len(A_c))]
    out = []
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            (i, m), (j, k) = pts[a], pts[b]
            if (by == "s" and i != j) or (by == "c" and m != k):
                out.append((pts[a], pts[b]))
    return out


def primary_pairs(A_s: Constellation, A_c: Constellation) -> list:
    """Unordered point pairs with different primary symbols."""
    return _pairs(A_s, A_c, "s")


def secondary_pairs(A_s: Constellation, A_c: Constellation) -> list:
    """Unordered point pairs with different secondary symbols."""
    return _pairs(A_s, A_c, "c")


def _symbol_deltas(A_s, A_c, pairs):
    s, c = A_s.symbols, A_c.symbols
    ds = np.array([s[i] - s[j] for (i, _), (j, _) in pairs], complex)
    dsc = np.array([s[i] * c[m] - s[j] * c[k] for (i, m), (j, k) in pairs], complex)
    return ds, dsc


def _receiver_links(ch: ChannelSet, receiver: str):
    casc = cascades(ch)
    return (ch.h_p, casc.F_p) if receiver == "PU" else (ch.h_s, casc.F_s)


def pair_rows(ch, pp: PhasePair, A_s, A_c, receiver: str, pairs) -> np.ndarray:
    """Rows ``r`` with ``x_a - x_b = r @ w`` for each pair."""
    h, F = _receiver_links(ch, receiver)
    ds, dsc = _symbol_deltas(A_s, A_c, pairs)
    base = h.conj()
    t1 = pp.theta1 @ F if ch.N else np.zeros(ch.M, complex)
    t2 = pp.theta2 @ F if ch.N else np.zeros(ch.M, complex)
    return ds[:, None] * (base + t1)[None, :] + dsc[:, None] * t2[None, :]


def distances(ch, w, pp, A_s=None, A_c=None) -> tuple:
    """``(D_pu, D_su)`` straight from the pair rows."""
    A_s, A_c = _default_alphabets(A_s, A_c)
    w = np.asarray(w, complex)
    rp = pair_rows(ch, pp, A_s, A_c, "PU", primary_pairs(A_s, A_c))
    rs = pair_rows(ch, pp, A_s, A_c, "SU", secondary_pairs(A_s, A_c))
    return float(np.min(np.abs(rp @ w) ** 2)), float(np.min(np.abs(rs @ w) ** 2))


def pp_to_v(pp: PhasePair) -> np.ndarray:
    v = np.empty(2 * pp.N, complex)
    v[0::2] = pp.theta1
    v[1::2] = pp.theta2
    return v


def v_to_pp(v) -> PhasePair:
    v = np.asarray(v, complex)
    return PhasePair(v[0::2].copy(), v[1::2].copy())


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Subproblems
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def build_w_subproblem(ch, pp, A_s, A_c, eta: Optional[float], P_t: float) -> SdpInstance:
    """Lifted beamformer problem at fixed phases.

    With ``eta=None`` the primary rows become the objective (max-min D_pu).
    """
    rp = pair_rows(ch, pp, A_s, A_c, "PU", primary_pairs(A_s, A_c))
    if eta is None:
        return SdpInstance(P_t, np.zeros((0, ch.M)), 0.0, rp.conj())
    rs = pair_rows(ch, pp, A_s, A_c, "SU", secondary_pairs(A_s, A_c))
    return SdpInstance(P_t, rp.conj(), float(eta), rs.conj())


def pair_quadratics(ch, w, A_s, A_c, receiver: str, pairs, conventional: bool = False):
    """``(e, alpha)`` with ``x_a - x_b = alpha + e^H v`` for each pair.

    Then ``d = v^H L v + 2 Re(v^H l) + |alpha|^2`` with ``L = e e^H`` and
    ``l = alpha e``.
    """
    h, F = _receiver_links(ch, receiver)
    w = np.asarray(w, complex)
    Fw = F @ w
    ds, dsc = _symbol_deltas(A_s, A_c, pairs)
    alpha = ds * np.vdot(h, w)
    if conventional:
        e = np.conj(dsc[:, None] * Fw[None, :])
    else:
        a = np.stack([ds, dsc], axis=1)
        e = np.conj(np.einsum("n,ra->rna", Fw, a).reshape(len(pairs), -1))
    return e, alpha


def _caps(N: int, A_c: Constellation, conventional: bool) -> np.ndarray:
    if conventional:
        return np.eye(N, dtype=complex)
    caps = np.zeros((N * len(A_c), 2 * N), complex)
    for n in range(N):
        for k, c in enumerate(A_c.symbols):
            caps[n * len(A_c) + k, 2 * n] = 1.0
            caps[n * len(A_c) + k, 2 * n + 1] = np.conj(c)
    return caps


def _sca_rows(e, alpha, z_q):
    u = e.conj() @ z_q
    return e * (alpha + u)[:, None], np.abs(alpha) ** 2 - np.abs(u) ** 2


def build_theta_subproblem(
    ch, w, v_q, A_s, A_c, eta: Optional[float], conventional: bool = False
) -> QcqpInstance:
    """Tangent-minorant phase problem around ``v_q``.

    For the conventional scheme the unknown is ``theta2`` alone. With
    ``eta=None`` the primary rows become the objective.
    """
    v_q = np.asarray(v_q, complex)
    z_q = v_q[1::2] if conventional else v_q
    pp_rows = primary_pairs(A_s, A_c)
    e_p, a_p = pair_quadratics(ch, w, A_s, A_c, "PU", pp_rows, conventional)
    c_p, d_p = _sca_rows(e_p, a_p, z_q)
    caps = _caps(ch.N, A_c, conventional)
    meta = {"conventional": conventional}
    if eta is None:
        n = caps.shape[1]
        return QcqpInstance(np.zeros((0, n)), np.zeros(0), 0.0, c_p, d_p, caps, meta)
    e_s, a_s = pair_quadratics(ch, w, A_s, A_c, "SU", secondary_pairs(A_s, A_c), conventional)
    c_s, d_s = _sca_rows(e_s, a_s, z_q)
    return QcqpInstance(c_p, d_p, float(eta), c_s, d_s, caps, meta)


def _z_to_pp(z, conventional: bool) -> PhasePair:
    z = np.asarray(z, complex)
    if conventional:
        return PhasePair(np.zeros_like(z), z)
    return v_to_pp(z)


def _clip_caps(pp: PhasePair, A_c: Constellation) -> PhasePair:
    # barrier iterates are strictly inside; guard against round-off anyway
    m = pp.max_modulus(A_c)
    if m > 1.0:
        return PhasePair(pp.theta1 / m, pp.theta2 / m)
    return pp


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Algorithm
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass
class AoState:
    q: int
    w: np.ndarray
    pp: PhasePair
    v: np.ndarray
    eta: float
    D_su_trace: list = field(default_factory=list)
    D_pu_trace: list = field(default_factory=list)
    rank_ratios: list = field(default_factory=list)
    events: list = field(default_factory=list)
    converged: bool = False
    D_I: float = 0.0
    D_II: float = 0.0

    @property
    def D_su(self) -> float:
        return self.D_su_trace[-1]

    @property
    def D_pu(self) -> float:
        return self.D_pu_trace[-1]


class _Point(NamedTuple):
    w: np.ndarray
    pp: PhasePair
    D_pu: float
    D_su: float


def _evaluate(ch, w, pp, A_s, A_c) -> _Point:
    d_pu, d_su = distances(ch, w, pp, A_s, A_c)
    return _Point(np.asarray(w, complex), pp, d_pu, d_su)


def _meets(D_pu: float, eta: float) -> bool:
    return D_pu >= eta * (1.0 - FEAS_RTOL)


def su_phases(ch: ChannelSet, w) -> np.ndarray:
    """Unit-modulus diagonal co-phasing the reflected SU terms with the direct one."""
    Fw = cascades(ch).F_s @ np.asarray(w, complex)
    return np.exp(1j * (np.angle(np.vdot(ch.h_s, w)) - np.angle(Fw)))


def initial_point(ch, cfg: ScenarioConfig, A_s=None, A_c=None, conventional=False):
    """Starting ``(w, pp, eta, D_I, D_II)``.

    The nominal start is the RIS-off beamformer with half-amplitude
    primary-aligned and secondary-aligned phases. If it misses ``eta``,
    slide toward the pure-assistance point along
    ``theta1 = lam theta_II``, ``theta2 = (1 - lam) theta_s``.
    """
    A_s, A_c = _default_alphabets(A_s, A_c)
    sI = scheme_I(ch, cfg.P_t, A_s)
    sII = scheme_II(ch, cfg.P_t, A_s)
    target = eta_value(sI.D, sII.D, cfg.delta)
    N = ch.N
    if conventional:
        th_s = su_phases(ch, sI.w)
        for lam in np.linspace(1.0, 0.0, 21):
            pp = PhasePair(np.zeros(N, complex), lam * th_s)
            pt = _evaluate(ch, sI.w, pp, A_s, A_c)
            if _meets(pt.D_pu, target):
                return pt, target, sI.D, sII.D
        found = max_primary_distance(ch, cfg, A_s, A_c, conventional=True, target=target)
        if _meets(found.D_pu, target):
            return found, target, sI.D, sII.D
        raise InfeasibleError("init", f"best D_pu {found.D_pu:.6g} < eta {target:.6g}")
    pp0 = PhasePair(0.5 * align_phases(ch, sI.w), 0.5 * su_phases(ch, sI.w))
    pt = _evaluate(ch, sI.w, pp0, A_s, A_c)
    if _meets(pt.D_pu, target):
        return pt, target, sI.D, sII.D
    th_s = su_phases(ch, sII.w)
    for lam in np.linspace(0.0, 1.0, 41):
        pp = PhasePair(lam * sII.theta, (1.0 - lam) * th_s)
        pt = _evaluate(ch, sII.w, pp, A_s, A_c)
        if _meets(pt.D_pu, target):
            return pt, target, sI.D, sII.D
    raise InfeasibleError("init", "pure-assistance point misses eta")


def _w_step(ch, cur: _Point, A_s, A_c, eta, P_t, state: Optional[AoState]):
    inst = build_w_subproblem(ch, cur.pp, A_s, A_c, eta, P_t)
    res = solve_sdp(inst)
    if res.status is not Status.OPTIMAL:
        if state is not None:
            state.events.append(f"q={state.q}: w-step {res.status.value}")
        return cur
    w, ratio = extract_rank_one(res.W)
    if state is not None:
        state.rank_ratios.append(ratio)
    nw = np.linalg.norm(w)
    if nw == 0:
        return cur
    w = np.sqrt(P_t) * w / nw
    return _evaluate(ch, w, cur.pp, A_s, A_c)


def _theta_step(ch, cur: _Point, A_s, A_c, eta, conventional, state: Optional[AoState]):
    v_q = pp_to_v(cur.pp)
    inst = build_theta_subproblem(ch, cur.w, v_q, A_s, A_c, eta, conventional)
    z_q = v_q[1::2] if conventional else v_q
    res = solve_qcqp(inst, start=0.999 * z_q)
    if res.status is not Status.OPTIMAL:
        if state is not None:
            state.events.append(f"q={state.q}: theta-step {res.status.value}")
        return cur, None
    pp = _clip_caps(_z_to_pp(res.v, conventional), A_c)
    return _evaluate(ch, cur.w, pp, A_s, A_c), res.t


def _accept(cur: _Point, cand: _Point, eta: float) -> bool:
    return _meets(cand.D_pu, eta) and cand.D_su >= cur.D_su


def run_algorithm1(
    ch: ChannelSet,
    cfg: ScenarioConfig,
    A_s: Constellation = None,
    A_c: Constellation = None,
    init=None,
    tol: float = 1e-4,
    max_outer: int = 50,
    conventional: bool = False,
    schedule: str = "interleaved",
    sca_tol: float = 1e-5,
    sca_max: int = 30,
) -> AoState:
    """Maximize ``D_su`` subject to ``D_pu >= eta`` by alternating SDP and SCA steps.

    ``init`` may supply a feasible ``(w, pp)``; otherwise :func:`initial_point`
    is used. A step is kept only if it meets ``eta`` and does not lower
    ``D_su``, so the recorded trace is monotone. Stops when the relative
    change of ``D_su`` drops below ``tol``.
    """
    if schedule not in ("interleaved", "inner"):
        raise ValueError("schedule must be 'interleaved' or 'inner'")
    A_s, A_c = _default_alphabets(A_s, A_c)
    if init is None:
        cur, target, D_I, D_II = initial_point(ch, cfg, A_s, A_c, conventional)
    else:
        sI = scheme_I(ch, cfg.P_t, A_s)
        sII = scheme_II(ch, cfg.P_t, A_s)
        D_I, D_II = sI.D, sII.D
        target = eta_value(D_I, D_II, cfg.delta)
        cur = _evaluate(ch, init[0], init[1], A_s, A_c)
        if not _meets(cur.D_pu, target):
            raise InfeasibleError("init", "supplied start misses eta")
    state = AoState(0, cur.w, cur.pp, pp_to_v(cur.pp), target, D_I=D_I, D_II=D_II)
    state.D_su_trace.append(cur.D_su)
    state.D_pu_trace.append(cur.D_pu)
    if ch.N == 0:
        # nothing to modulate: the secondary distance is identically zero
        state.converged = True
        return state
    for q in range(1, max_outer + 1):
        state.q = q
        cand = _w_step(ch, cur, A_s, A_c, target, cfg.P_t, state)
        if _accept(cur, cand, target):
            cur = cand
        inner = 1 if schedule == "interleaved" else sca_max
        for _ in range(inner):
            cand, t_b = _theta_step(ch, cur, A_s, A_c, target, conventional, state)
            if t_b is None or not _accept(cur, cand, target):
                break
            gain = cand.D_su - cur.D_su
            cur = cand
            if gain <= sca_tol * max(cur.D_su, 1e-300):
                break
        prev = state.D_su_trace[-1]
        state.w, state.pp, state.v = cur.w, cur.pp, pp_to_v(cur.pp)
        state.D_su_trace.append(cur.D_su)
        state.D_pu_trace.append(cur.D_pu)
        if abs(cur.D_su - prev) <= tol * max(cur.D_su, 1e-300):
            state.converged = True
            break
    return state


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Feasibility
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _ascend_primary(ch, start: _Point, A_s, A_c, P_t, conventional, rounds, target):
    """Max-min ascent of ``D_pu`` alternating the two convex steps."""
    cur = start
    for _ in range(rounds):
        if target is not None and _meets(cur.D_pu, target):
            break
        before = cur.D_pu
        inst = build_w_subproblem(ch, cur.pp, A_s, A_c, None, P_t)
        res = solve_sdp(inst)
        if res.status is Status.OPTIMAL:
            w, _ = extract_rank_one(res.W)
            if np.linalg.norm(w) > 0:
                cand = _evaluate(ch, np.sqrt(P_t) * w / np.linalg.norm(w), cur.pp, A_s, A_c)
                if cand.D_pu >= cur.D_pu:
                    cur = cand
        if ch.N:
            v_q = pp_to_v(cur.pp)
            z_q = v_q[1::2] if conventional else v_q
            inst = build_theta_subproblem(ch, cur.w, v_q, A_s, A_c, None, conventional)
            res = solve_qcqp(inst, start=0.999 * z_q)
            if res.status is Status.OPTIMAL:
                pp = _clip_caps(_z_to_pp(res.v, conventional), A_c)
                cand = _evaluate(ch, cur.w, pp, A_s, A_c)
                if cand.D_pu >= cur.D_pu:
                    cur = cand
        if cur.D_pu - before <= 1e-4 * max(cur.D_pu, 1e-300):
            break
    return cur


def max_primary_distance(
    ch,
    cfg: ScenarioConfig,
    A_s=None,
    A_c=None,
    conventional: bool = False,
    restarts: int = 5,
    rounds: int = 10,
    target: Optional[float] = None,
    stream: int = 0,
) -> _Point:
    """Best ``D_pu`` found by max-min ascent over ``restarts`` seeded starts.

    Start 0 is the RIS-off point (and, for the proposed scheme, the
    pure-assistance point); the rest are random. Stops early once
    ``target`` is met.
    """
    A_s, A_c = _default_alphabets(A_s, A_c)
    N, M, P = ch.N, ch.M, cfg.P_t
    sI = scheme_I(ch, P, A_s)
    starts = [_evaluate(ch, sI.w, PhasePair.zeros(N), A_s, A_c)]
    if not conventional:
        sII = scheme_II(ch, P, A_s)
        starts.append(_evaluate(ch, sII.w, PhasePair(sII.theta, np.zeros(N, complex)), A_s, A_c))
    best = max(starts, key=lambda p: p.D_pu)
    if target is not None and _meets(best.D_pu, target):
        return best
    rng = rng_for(cfg.seed, 2, stream)
    for r in range(restarts):
        if r == 0:
            start = best
        else:
            w = rng.standard_normal(M) + 1j * rng.standard_normal(M)
            w = np.sqrt(P) * w / np.linalg.norm(w)
            ph1 = np.exp(2j * np.pi * rng.random(N))
            ph2 = np.exp(2j * np.pi * rng.random(N))
            pp = PhasePair(np.zeros(N, complex) if conventional else 0.5 * ph1, 0.5 * ph2)
            start = _evaluate(ch, w, pp, A_s, A_c)
        found = _ascend_primary(ch, start, A_s, A_c, P, conventional, rounds, target)
        if found.D_pu > best.D_pu:
            best = found
        if target is not None and _meets(best.D_pu, target):
            break
    return best


def feasibility_probe(
    ch,
    cfg: ScenarioConfig,
    delta: Optional[float] = None,
    restarts: int = 5,
    conventional: bool = False,
    A_s=None,
    A_c=None,
    stream: int = 0,
) -> bool:
    """True when some restart reaches ``D_pu >= eta`` under the modulus caps."""
    A_s, A_c = _default_alphabets(A_s, A_c)
    delta = cfg.delta if delta is None else delta
    D_I = scheme_I(ch, cfg.P_t, A_s).D
    D_II = scheme_II(ch, cfg.P_t, A_s).D
    target = eta_value(D_I, D_II, delta)
    best = max_primary_distance(
        ch, cfg, A_s, A_c, conventional, restarts, target=target, stream=stream
    )
    return _meets(best.D_pu, target)
