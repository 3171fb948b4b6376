"""Closed-form BER machinery and the two RIS baselines.

Distances here carry the transmit power through ``w``; the Chernoff-style
bounds accept either that convention or unit-power distances.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erfc

from .channels import ChannelSet, cascades
from .core import Constellation, PhasePair
from .detection import CompositeConstellation, composite_gains

__all__ = [
    "q_function",
    "pairwise_distance",
    "union_bound_primary",
    "union_bound_secondary",
    "DistanceReport",
    "min_distances",
    "min_symbol_distance",
    "CaseLabel",
    "classify_case",
    "case_distance",
    "appendix_bounds",
    "q_form_bounds",
    "SchemeI",
    "SchemeII",
    "scheme_I",
    "scheme_II",
    "eta",
    "align_phases",
]


def q_function(t):
    """Gaussian tail probability ``Q(t) = P(Z > t)``."""
    out = 0.5 * erfc(np.asarray(t, dtype=float) / np.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def pairwise_distance(cc: CompositeConstellation, a: tuple, b: tuple) -> float:
    """``|x(a) - x(b)|^2`` for index pairs ``a = (i, m)``, ``b = (j, k)``."""
    return float(abs(cc.point(*a) - cc.point(*b)) ** 2)


def _union_bound(cc: CompositeConstellation, sigma2: float, which: str) -> float:
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    A_s, A_c = cc.A_s, cc.A_c
    if which == "s":
        ham = A_s.hamming_table()[cc.i[:, None], cc.i[None, :]]
        norm = len(A_s) * len(A_c) * np.log2(len(A_s))
    else:
        ham = A_c.hamming_table()[cc.m[:, None], cc.m[None, :]]
        norm = len(A_s) * len(A_c) * np.log2(len(A_c))
    pep = q_function(np.sqrt(cc.distance_table() / (2.0 * sigma2)))
    # zero Hamming weight removes the i == j (resp. m == k) terms
    return float(np.sum(pep * ham) / norm)


def union_bound_primary(cc: CompositeConstellation, sigma2: float) -> float:
    """Union bound on the BER of ``s`` using Hamming-weighted pairwise errors."""
    return _union_bound(cc, sigma2, "s")


def union_bound_secondary(cc: CompositeConstellation, sigma2: float) -> float:
    """Union bound on the BER of ``c``; mirror of the primary bound."""
    return _union_bound(cc, sigma2, "c")


@dataclass(frozen=True)
class DistanceReport:
    D_pu: float
    D_su: float
    argmin_pu: tuple
    argmin_su: tuple
    table_pu: np.ndarray
    table_su: np.ndarray


def _restricted_min(cc: CompositeConstellation, table: np.ndarray, by: str):
    idx = cc.i if by == "s" else cc.m
    mask = idx[:, None] != idx[None, :]
    masked = np.where(mask, table, np.inf)
    flat = int(np.argmin(masked))
    a, b = divmod(flat, len(cc))
    return float(masked.flat[flat]), ((int(cc.i[a]), int(cc.m[a])), (int(cc.i[b]), int(cc.m[b])))


def min_distances(cc_pu: CompositeConstellation, cc_su: CompositeConstellation) -> DistanceReport:
    """Minimum distances over pairs with ``s_i != s_j`` (PU) and ``c_m != c_k`` (SU)."""
    t_pu = cc_pu.distance_table()
    t_su = cc_su.distance_table()
    d_pu, arg_pu = _restricted_min(cc_pu, t_pu, "s")
    d_su, arg_su = _restricted_min(cc_su, t_su, "c")
    return DistanceReport(d_pu, d_su, arg_pu, arg_su, t_pu, t_su)


def min_symbol_distance(A: Constellation) -> float:
    """``min_{i != j} |s_i - s_j|^2``."""
    s = A.symbols
    d = np.abs(s[:, None] - s[None, :]) ** 2
    return float(d[~np.eye(len(s), dtype=bool)].min())


class CaseLabel(enum.Enum):
    D1 = "d1"  # same primary symbol
    D2 = "d2"  # products coincide: s_i c_m == s_j c_k
    D3 = "d3"


def classify_case(A_s: Constellation, A_c: Constellation, a: tuple, b: tuple) -> CaseLabel:
    (i, m), (j, k) = a, b
    if (i, m) == (j, k):
        raise ValueError("pairs must differ")
    if i == j:
        return CaseLabel.D1
    if abs(A_s.symbols[i] * A_c.symbols[m] - A_s.symbols[j] * A_c.symbols[k]) < 1e-12:
        return CaseLabel.D2
    return CaseLabel.D3


def case_distance(
    ch: ChannelSet,
    w,
    pp: PhasePair,
    A_s: Constellation,
    A_c: Constellation,
    receiver: str,
    a: tuple,
    b: tuple,
):
    """Case label and its closed-form squared distance.

    With ``A = direct + assist`` and ``B = transmit`` gains:
    d1 = |B|^2 |s_i|^2 |c_m - c_k|^2, d2 = |A|^2 |s_i - s_j|^2 and
    d3 = |A + B (s_i c_m - s_j c_k)/(s_i - s_j)|^2 |s_i - s_j|^2.
    """
    direct, assist, trans = composite_gains(ch, w, pp, receiver)
    A = direct + assist
    label = classify_case(A_s, A_c, a, b)
    (i, m), (j, k) = a, b
    si, sj = A_s.symbols[i], A_s.symbols[j]
    cm, ck = A_c.symbols[m], A_c.symbols[k]
    if label is CaseLabel.D1:
        value = abs(trans) ** 2 * abs(si) ** 2 * abs(cm - ck) ** 2
    elif label is CaseLabel.D2:
        value = abs(A) ** 2 * abs(si - sj) ** 2
    else:
        ratio = (si * cm - sj * ck) / (si - sj)
        value = abs(A + trans * ratio) ** 2 * abs(si - sj) ** 2
    return label, float(value)


def appendix_bounds(
    D_pu: float,
    D_su: float,
    P_t: float,
    sigma2_p: float,
    sigma2_s: float,
    card_s: int,
    card_c: int,
    unit_power: bool = True,
) -> tuple:
    """Chernoff-style upper bounds ``(Ps_upper, Pc_upper)``.

    With ``unit_power`` the distances are per unit transmit power and get
    multiplied by ``P_t``; otherwise they already include it.
    """
    if D_pu < 0 or D_su < 0:
        raise ValueError("distances must be non-negative")
    gain = P_t if unit_power else 1.0
    ps = 0.5 * (card_s - 1) * card_c * np.exp(-gain * D_pu / (4.0 * sigma2_p))
    pc = 0.5 * card_s * (card_c - 1) * np.exp(-gain * D_su / (4.0 * sigma2_s))
    return float(ps), float(pc)


def q_form_bounds(D_pu, D_su, P_t, sigma2_p, sigma2_s, card_s, card_c, unit_power=True):
    """The intermediate Q-function form that the Chernoff bounds dominate."""
    gain = P_t if unit_power else 1.0
    ps = (card_s - 1) * card_c * q_function(np.sqrt(gain * D_pu / (2.0 * sigma2_p)))
    pc = card_s * (card_c - 1) * q_function(np.sqrt(gain * D_su / (2.0 * sigma2_s)))
    return float(ps), float(pc)


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Baselines
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
class SchemeI(NamedTuple):
    w: np.ndarray
    D: float
    degenerate: bool


class SchemeII(NamedTuple):
    w: np.ndarray
    theta: np.ndarray
    D: float
    gain: float
    iterations: int
    converged: bool


def scheme_I(ch: ChannelSet, P_t: float, A_s: Constellation) -> SchemeI:
    """RIS off: MRT toward the direct PU link."""
    norm = np.linalg.norm(ch.h_p)
    if norm == 0:
        w = np.zeros(ch.M, complex)
        w[0] = np.sqrt(P_t)
        return SchemeI(w, 0.0, True)
    w = np.sqrt(P_t) * ch.h_p / norm
    D = abs(np.vdot(ch.h_p, w)) ** 2 * min_symbol_distance(A_s)
    return SchemeI(w, float(D), False)


def align_phases(ch: ChannelSet, w) -> np.ndarray:
    """Unit-modulus diagonal co-phasing every reflected PU term with the direct one."""
    w = np.asarray(w, complex)
    Fw = cascades(ch).F_p @ w
    ref = np.angle(np.vdot(ch.h_p, w))
    return np.exp(1j * (ref - np.angle(Fw)))


def scheme_II(
    ch: ChannelSet, P_t: float, A_s: Constellation, tol: float = 1e-8, max_iter: int = 200
) -> SchemeII:
    """RIS purely assists the PU: alternate MRT on the effective channel and
    phase alignment of the reflected terms.

    ``tol`` is relative on the effective gain ``|h_p^H w + theta F_p w|``.
    """
    base = scheme_I(ch, P_t, A_s)
    if ch.N == 0:
        return SchemeII(base.w, np.zeros(0, complex), base.D, float(np.sqrt(base.D / min_symbol_distance(A_s))), 0, True)
    F_p = cascades(ch).F_p
    w = base.w
    if base.degenerate:
        # no direct link: start from the strongest reflected direction
        _, _, vh = np.linalg.svd(F_p)
        w = np.sqrt(P_t) * vh[0].conj()
    gain = abs(np.vdot(ch.h_p, w))
    converged = False
    best = (gain, w, np.ones(ch.N, complex))
    it = 0
    for it in range(1, max_iter + 1):
        theta = align_phases(ch, w)
        r = ch.h_p.conj() + theta @ F_p
        nr = np.linalg.norm(r)
        if nr == 0:
            break
        w = np.sqrt(P_t) * r.conj() / nr
        new_gain = float(np.sqrt(P_t) * nr)
        if new_gain >= best[0]:
            best = (new_gain, w, theta)
        if new_gain - gain <= tol * max(new_gain, np.finfo(float).tiny):
            gain = new_gain
            converged = True
            break
        gain = new_gain
    gain, w, theta = best
    D = gain**2 * min_symbol_distance(A_s)
    if D < base.D:
        warnings.warn("scheme II ended below scheme I; keeping the RIS-off point")
        return SchemeII(base.w, np.zeros(ch.N, complex), base.D, float(np.sqrt(base.D / min_symbol_distance(A_s))), it, converged)
    return SchemeII(w, theta, float(D), float(gain), it, converged)


def eta(D_I: float, D_II: float, delta: float) -> float:
    """Primary distance requirement ``D_I + delta (D_II - D_I)``."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if D_II < D_I or D_I < 0:
        warnings.warn(f"expected 0 <= D_I <= D_II, got D_I={D_I:g}, D_II={D_II:g}")
    return float(D_I + delta * (D_II - D_I))
