"""Small dense convex solvers for the two beamforming subproblems.

Both problems have the shape

    maximize t  s.t.  G_h x >= h_h,  G_s x - t >= h_s,  x in K

where ``x`` is a real parametrization of the complex unknown and ``K`` is
either the Hermitian PSD cone (lifted beamformer ``W``) or an intersection
of quadratic caps ``||R_k z||^2 <= 1`` (stacked phase vector ``z``). A
single primal log-barrier engine with Newton centering handles both; a
phase-I run of the same engine finds a strictly feasible start.

Rows are rescaled internally because physical distances are ~1e-12.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .channels import read_matrices, write_matrix

__all__ = [
    "Status",
    "SdpInstance",
    "QcqpInstance",
    "SdpResult",
    "QcqpResult",
    "BarrierOptions",
    "solve_sdp",
    "solve_qcqp",
    "extract_rank_one",
    "hermitian_basis",
    "dump_instance",
    "load_instance",
]


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAXITER = "maxiter"
    NUMERICAL = "numerical"


@dataclass(frozen=True)
class BarrierOptions:
    """Barrier constants. ``mu`` multiplies the barrier weight each outer step."""

    mu: float = 5.0
    tau0: float = 1.0
    newton_tol: float = 1e-10
    max_newton: int = 80
    feas_tol: float = 1e-9
    # gap floor in the internal (row-normalized) units; lets t* = 0 terminate
    abs_tol: float = 1e-15


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Cones
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def hermitian_basis(M: int) -> np.ndarray:
    """Orthonormal basis of ``M x M`` Hermitian matrices under ``Re Tr(A B)``."""
    basis = []
    for k in range(M):
        E = np.zeros((M, M), complex)
        E[k, k] = 1.0
        basis.append(E)
    r = 1.0 / np.sqrt(2.0)
    for k in range(M):
        for l in range(k + 1, M):
            E = np.zeros((M, M), complex)
            E[k, l] = E[l, k] = r
            basis.append(E)
            E = np.zeros((M, M), complex)
            E[k, l] = 1j * r
            E[l, k] = -1j * r
            basis.append(E)
    return np.array(basis)


class _PsdCone:
    """``-log det W(x)`` with ``W = sum_k x_k B_k``."""

    def __init__(self, M: int):
        self.M = M
        self.B = hermitian_basis(M)
        self.nu = M

    def matrix(self, x):
        return np.tensordot(x, self.B, axes=1)

    def value(self, x) -> float:
        try:
            L = np.linalg.cholesky(self.matrix(x))
        except np.linalg.LinAlgError:
            return np.inf
        return -2.0 * float(np.sum(np.log(np.diag(L).real)))

    def grad_hess(self, x):
        Winv = np.linalg.inv(self.matrix(x))
        C = Winv[None, :, :] @ self.B
        g = -np.trace(C, axis1=1, axis2=2).real
        H = np.einsum("kab,lba->kl", C, C).real
        return g, H

    def vector(self, W) -> np.ndarray:
        return np.einsum("kab,ba->k", self.B, W).real


class _CapCone:
    """``-sum_k log(1 - ||R_k z||^2)`` in the real coordinates ``[Re z, Im z]``."""

    def __init__(self, R: np.ndarray):
        R = np.asarray(R, complex)
        K, r, n = R.shape
        rows = R.reshape(K * r, n)
        self.Ar = np.hstack([rows.real, -rows.imag])
        self.Ai = np.hstack([rows.imag, rows.real])
        self.group = np.repeat(np.arange(K), r)
        self.K = K
        self.nu = K

    def _slack(self, x):
        ur = self.Ar @ x
        ui = self.Ai @ x
        s = 1.0 - np.bincount(self.group, ur * ur + ui * ui, minlength=self.K)
        return ur, ui, s

    def value(self, x) -> float:
        _, _, s = self._slack(x)
        if np.any(s <= 0):
            return np.inf
        return -float(np.sum(np.log(s)))

    def grad_hess(self, x):
        ur, ui, s = self._slack(x)
        per_row = 2.0 * (ur[:, None] * self.Ar + ui[:, None] * self.Ai)
        G = np.zeros((self.K, per_row.shape[1]))
        np.add.at(G, self.group, per_row)
        g = G.T @ (1.0 / s)
        wr = 1.0 / s[self.group]
        H = 2.0 * (self.Ar.T * wr) @ self.Ar + 2.0 * (self.Ai.T * wr) @ self.Ai
        H += (G.T * (1.0 / s**2)) @ G
        return g, H


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Barrier engine
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass
class _EngineResult:
    x: np.ndarray
    t: float
    status: Status
    gap: float
    iterations: int
    degenerate: bool = False
    certificate: float = 0.0


def _newton_step(H, g):
    # regularize only when the plain factorization fails
    for reg in (0.0, 1e-14, 1e-10):
        try:
            L = np.linalg.cholesky(H + reg * np.trace(H) / len(H) * np.eye(len(H)))
            return -np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            continue
    return -np.linalg.lstsq(H, g, rcond=None)[0]


def _center(y, tau, A, b, cone, nx, opts):
    """Newton centering of ``-tau t - sum log(A y - b) + cone(x)``."""

    def fval(z):
        r = A @ z - b
        if np.any(r <= 0):
            return np.inf
        c = cone.value(z[:nx])
        if not np.isfinite(c):
            return np.inf
        return -tau * z[-1] - float(np.sum(np.log(r))) + c

    f = fval(y)
    steps = 0
    for steps in range(1, opts.max_newton + 1):
        r = A @ y - b
        gc, Hc = cone.grad_hess(y[:nx])
        g = -A.T @ (1.0 / r)
        g[:nx] += gc
        g[-1] -= tau
        H = (A.T * (1.0 / r**2)) @ A
        H[:nx, :nx] += Hc
        dy = _newton_step(H, g)
        lam2 = float(-g @ dy)
        if lam2 / 2.0 <= opts.newton_tol:
            return y, steps
        alpha = 1.0
        slope = float(g @ dy)
        while alpha > 1e-16:
            cand = y + alpha * dy
            fc = fval(cand)
            if fc <= f + 0.25 * alpha * slope:
                break
            alpha *= 0.5
        else:
            return y, steps
        y, f = cand, fc
    return y, steps


def _maximize(x0, t0, G_h, h_h, G_s, h_s, cone, tol, max_iter, opts, phase1=False):
    """Barrier method for ``max t`` over the rows and the cone."""
    nx = len(x0)
    rows_h = np.hstack([G_h, np.zeros((len(G_h), 1))])
    rows_s = np.hstack([G_s, -np.ones((len(G_s), 1))])
    A = np.vstack([rows_h, rows_s])
    b = np.concatenate([h_h, h_s])
    m = len(b) + cone.nu
    y = np.concatenate([x0, [t0]])
    tau = opts.tau0
    total = 0
    for outer in range(1, max_iter + 1):
        y, k = _center(y, tau, A, b, cone, nx, opts)
        total += k
        gap = m / tau
        t = float(y[-1])
        if phase1:
            if t > 0:
                return _EngineResult(y[:nx], t, Status.OPTIMAL, gap, total)
            if t + gap < -opts.feas_tol:
                return _EngineResult(y[:nx], t, Status.INFEASIBLE, gap, total, certificate=t + gap)
            if gap <= opts.feas_tol:
                # boundary-feasible set with empty interior
                return _EngineResult(y[:nx], t, Status.OPTIMAL, gap, total, degenerate=True)
        elif gap <= max(tol * abs(t), opts.abs_tol):
            return _EngineResult(y[:nx], t, Status.OPTIMAL, gap, total)
        tau *= opts.mu
    return _EngineResult(y[:nx], float(y[-1]), Status.MAXITER, m / tau, total)


def _solve_rows(x0, G_h, h_h, G_s, h_s, cone, tol, max_iter, opts):
    """Phase I on the hard rows, then phase II on ``t``."""
    degenerate = False
    if len(G_h):
        slack0 = G_h @ x0 - h_h
        if np.min(slack0) <= 0:
            p1 = _maximize(
                x0, float(np.min(slack0)) - 1.0, np.zeros((0, len(x0))), np.zeros(0),
                G_h, h_h, cone, tol, max_iter, opts, phase1=True,
            )
            if p1.status is not Status.OPTIMAL:
                return p1
            x0 = p1.x
            if p1.degenerate:
                t = float(np.min(G_s @ x0 - h_s))
                return _EngineResult(x0, t, Status.OPTIMAL, p1.gap, p1.iterations, degenerate=True)
    t0 = float(np.min(G_s @ x0 - h_s)) - 1.0
    res = _maximize(x0, t0, G_h, h_h, G_s, h_s, cone, tol, max_iter, opts)
    res.degenerate = degenerate
    return res


def _normalize_rows(G, h):
    norms = np.linalg.norm(G, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    return G / norms[:, None], h / norms


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# SDP: lifted beamformer
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def _factors(a: np.ndarray) -> np.ndarray:
    """Rows as ``(R, k, M)`` factor stacks."""
    return a[:, None, :] if a.ndim == 2 else a


@dataclass(frozen=True, eq=False)
class SdpInstance:
    """``max t  s.t.  Tr W <= P_t,  Tr(A_p W) >= eta,  Tr(A_s W) >= t,  W >= 0``.

    Rows are given as vectors ``a`` (shape ``(R, M)``, ``A = a a^H``) or as
    factor stacks (shape ``(R, k, M)``, ``A = sum_k a_k a_k^H``).
    """

    P_t: float
    a_p: np.ndarray
    eta: float
    a_s: np.ndarray

    def __post_init__(self):
        a_s = np.asarray(self.a_s, complex)
        a_s = a_s[None, :] if a_s.ndim == 1 else a_s
        a_p = np.asarray(self.a_p, complex)
        if a_p.size == 0:
            a_p = np.zeros((0, a_s.shape[-1]), complex)
        a_p = a_p[None, :] if a_p.ndim == 1 else a_p
        object.__setattr__(self, "a_p", a_p)
        object.__setattr__(self, "a_s", a_s)
        if a_p.ndim not in (2, 3) or a_s.ndim not in (2, 3):
            raise ValueError("rows must be (R, M) vectors or (R, k, M) factors")
        if a_s.shape[0] == 0:
            raise ValueError("need at least one objective row")
        if a_p.shape[-1] != a_s.shape[-1]:
            raise ValueError("row dimensions disagree")
        if not self.P_t > 0:
            raise ValueError("P_t must be positive")

    @property
    def dim(self) -> int:
        return self.a_s.shape[-1]

    @property
    def A_p(self) -> np.ndarray:
        f = _factors(self.a_p)
        return np.einsum("rka,rkb->rab", f, f.conj())

    @property
    def A_s(self) -> np.ndarray:
        f = _factors(self.a_s)
        return np.einsum("rka,rkb->rab", f, f.conj())

    def row_values(self, W):
        """``(Tr(A_p W), Tr(A_s W))`` for a candidate ``W``."""
        W = np.asarray(W, complex)
        fp, fs = _factors(self.a_p), _factors(self.a_s)
        vp = np.einsum("rka,ab,rkb->r", fp.conj(), W, fp).real
        vs = np.einsum("rka,ab,rkb->r", fs.conj(), W, fs).real
        return vp, vs


@dataclass
class SdpResult:
    W: np.ndarray
    t: float
    status: Status
    gap: float = 0.0
    iterations: int = 0
    degenerate: bool = False
    certificate: float = 0.0

    def __iter__(self):
        return iter((self.W, self.t, self.status))


def solve_sdp(
    inst: SdpInstance, tol: float = 1e-9, max_iter: int = 60, opts: BarrierOptions = BarrierOptions()
) -> SdpResult:
    """Solve the lifted beamforming SDP with the barrier engine.

    Returns ``W`` in physical units, the objective ``t`` and a status. An
    infeasible primary requirement is reported with the negative phase-I
    bound as ``certificate``.
    """
    M = inst.dim
    cone = _PsdCone(M)
    P = float(inst.P_t)
    # rows in the unit-power coordinates W = P * sum x_k B_k
    fp, fs = _factors(inst.a_p), _factors(inst.a_s)
    coef_p = np.einsum("rka,jab,rkb->rj", fp.conj(), cone.B, fp).real * P
    coef_s = np.einsum("rka,jab,rkb->rj", fs.conj(), cone.B, fs).real * P
    trace_row = np.trace(cone.B, axis1=1, axis2=2).real
    G_h = np.vstack([coef_p, -trace_row[None, :]])
    h_h = np.concatenate([np.full(len(coef_p), float(inst.eta)), [-1.0]])
    G_h, h_h = _normalize_rows(G_h, h_h)
    x0 = cone.vector(np.eye(M) / (M + 1.0))
    # measure t in units of its value at the start so that t* is O(1)
    start = coef_s @ x0
    kappa = float(np.min(start)) if np.all(start > 0) else float(np.max(np.linalg.norm(coef_s, axis=1)))
    kappa = kappa if kappa > 0 else 1.0
    G_s = coef_s / kappa
    h_s = np.zeros(len(coef_s))
    res = _solve_rows(x0, G_h, h_h, G_s, h_s, cone, tol, max_iter, opts)
    W = P * cone.matrix(res.x)
    W = 0.5 * (W + W.conj().T)
    if res.status is Status.INFEASIBLE:
        return SdpResult(W, -np.inf, res.status, res.gap, res.iterations, certificate=res.certificate)
    _, vs = inst.row_values(W)
    out = SdpResult(
        W, float(np.min(vs)), res.status, res.gap * kappa, res.iterations, res.degenerate
    )
    return _check_sdp(inst, out)


def _check_sdp(inst: SdpInstance, res: SdpResult, rtol: float = 1e-6) -> SdpResult:
    vp, _ = inst.row_values(res.W)
    eig_min = float(np.linalg.eigvalsh(res.W)[0])
    ok = np.trace(res.W).real <= inst.P_t * (1 + rtol) and eig_min >= -rtol * inst.P_t
    if len(vp):
        ok = ok and np.min(vp) >= inst.eta * (1 - rtol) - rtol * abs(inst.eta)
    if not ok and res.status is Status.OPTIMAL:
        res.status = Status.NUMERICAL
    return res


def extract_rank_one(W) -> tuple:
    """Principal component ``sqrt(s1) u1`` and the ratio ``s2 / s1``."""
    W = np.asarray(W, complex)
    W = 0.5 * (W + W.conj().T)
    vals, vecs = np.linalg.eigh(W)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    s1 = max(float(vals[0]), 0.0)
    w = np.sqrt(s1) * vecs[:, 0]
    # fix the global phase: largest entry real positive
    k = int(np.argmax(np.abs(w)))
    if abs(w[k]) > 0:
        w = w * np.exp(-1j * np.angle(w[k]))
    ratio = float(max(vals[1], 0.0) / s1) if len(vals) > 1 and s1 > 0 else 0.0
    return w, ratio


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# QCQP: linearized phase subproblem
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass(frozen=True, eq=False)
class QcqpInstance:
    """``max t  s.t.  2Re(c_p^H v) + d_p >= eta,  2Re(c_s^H v) + d_s >= t,
    v^H Q_k v <= 1``.

    Each row comes from a tangent minorant ``v^H L v + 2Re(l^H v) + const``
    linearized at an expansion point. ``caps`` holds either vectors ``q_k``
    (shape ``(K, n)``, ``Q_k = q_k q_k^H``) or factors ``R_k`` (shape
    ``(K, r, n)``, ``Q_k = R_k^H R_k``).
    """

    c_p: np.ndarray
    d_p: np.ndarray
    eta: float
    c_s: np.ndarray
    d_s: np.ndarray
    caps: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        caps = np.asarray(self.caps, complex)
        if caps.ndim == 1:
            caps = caps[None, :]
        if caps.ndim == 2:
            caps = caps.conj()[:, None, :]
        if caps.ndim != 3 or caps.shape[0] == 0:
            raise ValueError("caps must be (K, n) vectors or (K, r, n) factors")
        n = caps.shape[2]
        # the barrier needs a bounded feasible set
        if np.linalg.matrix_rank(caps.reshape(-1, n)) < n:
            raise ValueError("caps must bound every direction (stacked factors need full column rank)")
        for name in ("c_p", "c_s"):
            arr = np.asarray(getattr(self, name), complex).reshape(-1, n)
            object.__setattr__(self, name, arr)
        for name in ("d_p", "d_s"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float).reshape(-1))
        object.__setattr__(self, "caps", caps)
        if self.c_s.shape[0] == 0:
            raise ValueError("need at least one objective row")
        if len(self.d_p) != len(self.c_p) or len(self.d_s) != len(self.c_s):
            raise ValueError("one constant per row is required")

    @property
    def dim(self) -> int:
        return self.caps.shape[2]

    @property
    def Q(self) -> np.ndarray:
        return np.einsum("kra,krb->kab", self.caps.conj(), self.caps)

    def row_values(self, v):
        v = np.asarray(v, complex)
        vp = 2.0 * (self.c_p.conj() @ v).real + self.d_p
        vs = 2.0 * (self.c_s.conj() @ v).real + self.d_s
        return vp, vs

    def cap_values(self, v) -> np.ndarray:
        return np.sum(np.abs(self.caps @ np.asarray(v, complex)) ** 2, axis=1)


@dataclass
class QcqpResult:
    v: np.ndarray
    t: float
    status: Status
    gap: float = 0.0
    iterations: int = 0
    degenerate: bool = False
    certificate: float = 0.0

    def __iter__(self):
        return iter((self.v, self.t, self.status))


def solve_qcqp(
    inst: QcqpInstance,
    tol: float = 1e-9,
    max_iter: int = 60,
    start=None,
    opts: BarrierOptions = BarrierOptions(),
) -> QcqpResult:
    """Solve the capped linear program over complex ``v`` with the barrier engine.

    ``start`` must lie strictly inside the caps; the origin is used otherwise.
    """
    n = inst.dim
    cone = _CapCone(inst.caps)

    def real(c):
        return 2.0 * np.hstack([c.real, c.imag])

    G_h, h_h = _normalize_rows(real(inst.c_p), float(inst.eta) - inst.d_p)
    Gs_raw = real(inst.c_s)
    kappa = float(np.max(np.abs(np.concatenate([np.linalg.norm(Gs_raw, axis=1), np.abs(inst.d_s)]))))
    kappa = kappa if kappa > 0 else 1.0
    G_s = Gs_raw / kappa
    h_s = -inst.d_s / kappa
    x0 = np.zeros(2 * n)
    if start is not None:
        s = np.asarray(start, complex)
        if np.all(inst.cap_values(s) < 1.0):
            x0 = np.concatenate([s.real, s.imag])
    res = _solve_rows(x0, G_h, h_h, G_s, h_s, cone, tol, max_iter, opts)
    v = res.x[:n] + 1j * res.x[n:]
    if res.status is Status.INFEASIBLE:
        return QcqpResult(v, -np.inf, res.status, res.gap, res.iterations, certificate=res.certificate)
    _, vs = inst.row_values(v)
    out = QcqpResult(v, float(np.min(vs)), res.status, res.gap * kappa, res.iterations, res.degenerate)
    return _check_qcqp(inst, out)


def _check_qcqp(inst: QcqpInstance, res: QcqpResult, rtol: float = 1e-6) -> QcqpResult:
    vp, _ = inst.row_values(res.v)
    ok = np.max(inst.cap_values(res.v)) <= 1.0 + 1e-9
    if len(vp):
        scale = max(abs(inst.eta), float(np.max(np.abs(inst.d_p))), 1e-300)
        ok = ok and np.min(vp) >= inst.eta - rtol * scale
    if not ok and res.status is Status.OPTIMAL:
        res.status = Status.NUMERICAL
    return res


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Fixtures: flat text dumps
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
def dump_instance(inst, target: Union[str, Path, None] = None) -> str:
    """Write an SDP or QCQP instance in the channel-dump text format."""
    buf = io.StringIO()
    if isinstance(inst, SdpInstance):
        buf.write("# sdp\n")
        write_matrix(buf, "P_t", np.array([[inst.P_t]]))
        write_matrix(buf, "eta", np.array([[inst.eta]]))
        for name in ("a_p", "a_s"):
            f = _factors(getattr(inst, name))
            write_matrix(buf, name + "_rank", np.array([[f.shape[1]]]))
            write_matrix(buf, name, f.reshape(-1, inst.dim))
    elif isinstance(inst, QcqpInstance):
        buf.write("# qcqp\n")
        write_matrix(buf, "eta", np.array([[inst.eta]]))
        write_matrix(buf, "c_p", inst.c_p.reshape(-1, inst.dim))
        write_matrix(buf, "d_p", inst.d_p.reshape(-1, 1))
        write_matrix(buf, "c_s", inst.c_s)
        write_matrix(buf, "d_s", inst.d_s.reshape(-1, 1))
        K, r, n = inst.caps.shape
        write_matrix(buf, "cap_rank", np.array([[r]]))
        write_matrix(buf, "caps", inst.caps.reshape(K * r, n))
    else:
        raise TypeError(f"cannot dump {type(inst).__name__}")
    text = buf.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


def load_instance(source: Union[str, Path]):
    text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else source
    kind = text.lstrip().split("\n", 1)[0].strip("# ").strip()
    mats = read_matrices(io.StringIO(text))
    if kind == "sdp":
        rows = {}
        for name in ("a_p", "a_s"):
            k = int(mats[name + "_rank"][0, 0].real)
            a = mats[name]
            rows[name] = a if k == 1 else a.reshape(-1, k, a.shape[1])
        return SdpInstance(float(mats["P_t"][0, 0].real), rows["a_p"], float(mats["eta"][0, 0].real), rows["a_s"])
    if kind == "qcqp":
        return QcqpInstance(
            mats["c_p"], mats["d_p"].real.reshape(-1), float(mats["eta"][0, 0].real),
            mats["c_s"], mats["d_s"].real.reshape(-1),
            mats["caps"].reshape(-1, int(mats["cap_rank"][0, 0].real), mats["caps"].shape[1]),
        )
    raise ValueError(f"unknown instance kind {kind!r}")
