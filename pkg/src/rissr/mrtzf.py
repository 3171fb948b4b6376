"""Low-complexity assistance/transmission structure for a single-antenna PT.

Vectors here follow the ``h + theta^H f`` convention for a received gain,
where ``h`` is the scalar direct gain and ``f = diag(g^H) H`` the cascade.
:func:`build_phase_pair` converts back to the diagonal convention used
elsewhere (``theta1 = conj(alpha theta_p)``, ``theta2 = conj(beta theta_s_perp)``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .channels import ChannelSet, cascades
from .core import MODULUS_TOL, Constellation, PhasePair, make_constellation

__all__ = [
    "MrtZfResult",
    "mrt_phase",
    "zf_feasible",
    "min_residual",
    "zf_basis",
    "alpha_star",
    "beta_star",
    "su_distance",
    "build_phase_pair",
    "design",
]


@dataclass(frozen=True)
class MrtZfResult:
    theta_p: np.ndarray
    theta_s_perp: np.ndarray
    alpha: float
    beta: complex
    zf_residual: float
    feasible: bool
    t_ratio: float


def _unit(z: np.ndarray) -> np.ndarray:
    mag = np.abs(z)
    return np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 1.0 + 0j)


def mrt_phase(h: complex, f) -> np.ndarray:
    """Unit-modulus ``theta`` with every ``conj(theta_n) f_n`` in phase with ``h``."""
    f = np.asarray(f, complex)
    if np.any(f == 0):
        warnings.warn("zero cascade entries get phase 0")
    theta = np.exp(1j * (np.angle(f) - np.angle(h)))
    theta[f == 0] = 1.0
    return theta


def zf_feasible(f) -> bool:
    """Whether a unit-modulus ``theta`` with ``theta^H f = 0`` exists."""
    a = np.abs(np.asarray(f, complex))
    if a.size == 0:
        raise ValueError("need N >= 1")
    return bool(2.0 * a.max() <= a.sum())


def min_residual(f) -> float:
    """``min |theta^H f|`` over unit-modulus ``theta``: ``max(0, 2||f||_inf - ||f||_1)``."""
    a = np.abs(np.asarray(f, complex))
    return float(max(0.0, 2.0 * a.max() - a.sum()))


def _polish(theta, f, tol, max_steps=60):
    """Gauss-Newton on the element phases to drive ``theta^H f`` to zero."""
    phi = np.angle(theta)
    r = np.sum(np.exp(-1j * phi) * f)
    for _ in range(max_steps):
        if abs(r) <= tol:
            break
        d = -1j * np.exp(-1j * phi) * f
        J = np.vstack([d.real, d.imag])
        step = -np.linalg.lstsq(J, np.array([r.real, r.imag]), rcond=None)[0]
        lam = 1.0
        while lam > 1e-8:
            cand = phi + lam * step
            rc = np.sum(np.exp(-1j * cand) * f)
            if abs(rc) < abs(r):
                break
            lam *= 0.5
        else:
            break
        phi, r = cand, rc
    return np.exp(1j * phi)


def zf_basis(f_p, f_s, tol: float = 1e-10, max_iter: int = 500):
    """Alternate projections onto ``{theta : theta^H f_p = 0}`` and the unit torus.

    Starts from ``f_s``; stops when the residual ``|theta^H f_p|`` changes
    by less than ``tol * ||f_p||``. When a zero-forcing solution exists the
    result is then polished by Gauss-Newton steps on the phases, which fixes
    the slow tail of the projections near the feasibility boundary. Returns
    ``(theta, residual)``.
    """
    f_p = np.asarray(f_p, complex)
    f_s = np.asarray(f_s, complex)
    nrm = np.linalg.norm(f_p)
    theta = _unit(f_s)
    if nrm == 0:
        return theta, 0.0
    u = f_p / nrm
    res = abs(np.vdot(theta, f_p))
    for _ in range(max_iter):
        z = theta - u * np.vdot(u, theta)
        theta = _unit(z)
        new = abs(np.vdot(theta, f_p))
        if abs(res - new) < tol * nrm:
            res = new
            break
        res = new
    if res > tol * nrm and zf_feasible(f_p):
        polished = _polish(theta, f_p, tol * nrm)
        if abs(np.vdot(polished, f_p)) < res:
            theta = polished
            res = abs(np.vdot(theta, f_p))
    return theta, float(res)


def alpha_star(h: complex, f, delta: float) -> tuple:
    """Smallest assistance weight meeting the primary requirement, and ``t``.

    ``alpha0 = sqrt(t^2 + 2 delta t + delta) - t`` with
    ``t = |h| / sum|f_n|``.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    S = float(np.sum(np.abs(np.asarray(f, complex))))
    if S <= 0:
        raise ValueError("the reflected link is identically zero")
    t = abs(h) / S
    # rationalized form avoids cancellation for large t
    num = 2.0 * delta * t + delta
    a0 = num / (np.sqrt(t * t + num) + t) if num > 0 else 0.0
    return float(min(a0, 1.0)), float(t)


def _qualifying(A_s: Constellation, A_c: Constellation):
    s, c = A_s.symbols, A_c.symbols
    rho, ds2 = [], []
    for i in range(len(s)):
        for m in range(len(c)):
            for j in range(len(s)):
                for k in range(len(c)):
                    if i == j or m == k:
                        continue
                    prod = s[i] * c[m] - s[j] * c[k]
                    if abs(prod) < 1e-12:
                        continue
                    rho.append(prod / (s[i] - s[j]))
                    ds2.append(abs(s[i] - s[j]) ** 2)
    return np.array(rho), np.array(ds2)


def su_distance(A: complex, b0: complex, mag: float, phi, A_s, A_c) -> np.ndarray:
    """Minimum mixed-pair SU distance for ``beta = mag * exp(j phi)``.

    SU points are ``s (A + c B)`` with ``B = conj(beta) b0``.
    """
    rho, ds2 = _qualifying(A_s, A_c)
    phi = np.atleast_1d(np.asarray(phi, float))
    B = mag * np.exp(-1j * phi)[:, None] * b0
    d = np.abs(A + B * rho[None, :]) ** 2 * ds2[None, :]
    return d.min(axis=1)


def beta_star(
    h_s: complex,
    f_s,
    theta_p,
    theta_s_perp,
    alpha: float,
    A_s: Constellation = None,
    A_c: Constellation = None,
    grid: int = 1024,
) -> complex:
    """``beta = (1 - alpha) exp(j phi)`` with ``phi`` maximizing the SU distance.

    Grid search over ``[0, 2 pi)`` followed by bounded scalar refinement
    around the best few grid points.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    A_s = A_s or make_constellation("QPSK")
    A_c = A_c or make_constellation("BPSK")
    mag = 1.0 - alpha
    if mag == 0:
        return 0j
    if len(_qualifying(A_s, A_c)[0]) == 0:
        # every mixed pair is ambiguous; the phase cannot matter
        return complex(mag)
    f_s = np.asarray(f_s, complex)
    A = h_s + alpha * np.vdot(theta_p, f_s)
    b0 = np.vdot(theta_s_perp, f_s)
    phis = 2.0 * np.pi * np.arange(grid) / grid
    vals = su_distance(A, b0, mag, phis, A_s, A_c)
    step = 2.0 * np.pi / grid
    best_phi, best_val = phis[int(np.argmax(vals))], float(vals.max())
    for k in np.argsort(vals)[::-1][:4]:
        r = minimize_scalar(
            lambda p: -su_distance(A, b0, mag, p, A_s, A_c)[0],
            bounds=(phis[k] - step, phis[k] + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -r.fun > best_val:
            best_phi, best_val = float(r.x), float(-r.fun)
    return complex(mag * np.exp(1j * (best_phi % (2.0 * np.pi))))


def build_phase_pair(res: MrtZfResult) -> PhasePair:
    """Diagonals ``theta1 = conj(alpha theta_p)``, ``theta2 = conj(beta theta_s_perp)``."""
    if abs(res.alpha) + abs(res.beta) > 1.0 + MODULUS_TOL:
        raise ValueError("|alpha| + |beta| exceeds 1")
    return PhasePair(np.conj(res.alpha * res.theta_p), np.conj(res.beta * res.theta_s_perp))


def design(
    ch: ChannelSet,
    delta: float,
    A_s: Constellation = None,
    A_c: Constellation = None,
    grid: int = 1024,
    zf_tol: float = 1e-10,
    zf_max_iter: int = 500,
) -> MrtZfResult:
    """Full structure for a single-antenna PT."""
    if ch.M != 1:
        raise ValueError("the MRT-ZF structure needs M = 1")
    casc = cascades(ch)
    h_p = complex(np.conj(ch.h_p[0]))
    h_s = complex(np.conj(ch.h_s[0]))
    theta_p = mrt_phase(h_p, casc.f_p)
    feasible = zf_feasible(casc.f_p)
    theta_s, residual = zf_basis(casc.f_p, casc.f_s, zf_tol, zf_max_iter)
    alpha, t = alpha_star(h_p, casc.f_p, delta)
    beta = beta_star(h_s, casc.f_s, theta_p, theta_s, alpha, A_s, A_c, grid)
    return MrtZfResult(theta_p, theta_s, alpha, beta, residual, feasible, t)
