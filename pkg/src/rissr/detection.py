"""Composite constellations and the two-step joint ML detector."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .channels import ChannelSet, cascades, rng_for
from .core import Constellation, PhasePair

__all__ = [
    "CompositeConstellation",
    "build_composite",
    "composite_gains",
    "detect",
    "detect_many",
    "ErrorCounts",
    "simulate_errors",
    "ser_ber_trial",
    "binomial_stderr",
]

RECEIVERS = ("PU", "SU")


@dataclass(frozen=True, eq=False)
class CompositeConstellation:
    """Receiver-side alphabet ``x(s_i, c_m)``, points in ``(i, m)`` order."""

    x: np.ndarray
    i: np.ndarray
    m: np.ndarray
    receiver: str
    A_s: Constellation
    A_c: Constellation

    @property
    def points(self) -> list:
        return [(int(a), int(b), complex(z)) for a, b, z in zip(self.i, self.m, self.x)]

    def __len__(self) -> int:
        return len(self.x)

    def index(self, i: int, m: int) -> int:
        return i * len(self.A_c) + m

    def point(self, i: int, m: int) -> complex:
        return complex(self.x[self.index(i, m)])

    def distance_table(self) -> np.ndarray:
        """Squared distances ``|x_a - x_b|^2`` between all point pairs."""
        return np.abs(self.x[:, None] - self.x[None, :]) ** 2

    def rotated(self, phase: float) -> "CompositeConstellation":
        return CompositeConstellation(
            self.x * np.exp(1j * phase), self.i, self.m, self.receiver, self.A_s, self.A_c
        )


def composite_gains(ch: ChannelSet, w, pp: PhasePair, receiver: str):
    """``(direct, assist, transmit)`` scalar gains seen by ``receiver``.

    ``x(s, c) = s * (direct + assist) + s * c * transmit``.
    """
    if receiver not in RECEIVERS:
        raise ValueError(f"receiver must be one of {RECEIVERS}")
    w = np.asarray(w, complex).reshape(-1)
    if w.shape != (ch.M,):
        raise ValueError(f"w has length {w.shape[0]}, expected M={ch.M}")
    if pp.N != ch.N:
        raise ValueError(f"phase pair has N={pp.N}, channels have N={ch.N}")
    h = ch.h_p if receiver == "PU" else ch.h_s
    casc = cascades(ch)
    Fw = (casc.F_p if receiver == "PU" else casc.F_s) @ w
    direct = complex(np.vdot(h, w))
    return direct, complex(pp.theta1 @ Fw), complex(pp.theta2 @ Fw)


def build_composite(
    ch: ChannelSet,
    w,
    pp: PhasePair,
    A_s: Constellation,
    A_c: Constellation,
    receiver: str = "PU",
) -> CompositeConstellation:
    direct, assist, trans = composite_gains(ch, w, pp, receiver)
    s = np.repeat(A_s.symbols, len(A_c))
    c = np.tile(A_c.symbols, len(A_s))
    x = s * (direct + assist) + (s * c) * trans
    i = np.repeat(np.arange(len(A_s)), len(A_c))
    m = np.tile(np.arange(len(A_c)), len(A_s))
    return CompositeConstellation(x, i, m, receiver, A_s, A_c)


def detect_many(y: np.ndarray, cc: CompositeConstellation) -> np.ndarray:
    """Flat point indices of the ML decisions; ties go to the lowest index."""
    y = np.asarray(y, complex)
    d = np.abs(y[..., None] - cc.x) ** 2
    return np.argmin(d, axis=-1)


def detect(y: complex, cc: CompositeConstellation) -> tuple:
    """Joint decision ``(i, m)`` for one received sample."""
    if len(cc) == 0:
        raise ValueError("empty composite constellation")
    k = int(detect_many(np.array([y]), cc)[0])
    return int(cc.i[k]), int(cc.m[k])


class ErrorCounts(NamedTuple):
    errors_s: int
    bits_s: int
    errors_c: int
    bits_c: int

    @property
    def p_s(self) -> float:
        return self.errors_s / self.bits_s

    @property
    def p_c(self) -> float:
        return self.errors_c / self.bits_c

    def __add__(self, other):
        return ErrorCounts(*(a + b for a, b in zip(self, other)))


def simulate_errors(
    cc: CompositeConstellation,
    noise_var: float,
    trials: int,
    stream=0,
    seed: int = 0,
    batch: int = 1 << 16,
) -> ErrorCounts:
    """Send uniform ``(s, c)`` pairs through AWGN and count bit errors.

    ``stream`` (an int or a tuple of ints) selects an independent noise
    stream under ``seed``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng_for(seed, 1, *np.atleast_1d(stream).tolist())
    ham_s = cc.A_s.hamming_table()
    ham_c = cc.A_c.hamming_table()
    err_s = err_c = 0
    done = 0
    scale = np.sqrt(noise_var / 2.0)
    while done < trials:
        n = min(batch, trials - done)
        k = rng.integers(0, len(cc), size=n)
        z = rng.standard_normal((n, 2))
        y = cc.x[k] + scale * (z[:, 0] + 1j * z[:, 1])
        khat = detect_many(y, cc)
        err_s += int(ham_s[cc.i[k], cc.i[khat]].sum())
        err_c += int(ham_c[cc.m[k], cc.m[khat]].sum())
        done += n
    return ErrorCounts(
        err_s, trials * cc.A_s.bits_per_symbol, err_c, trials * cc.A_c.bits_per_symbol
    )


def ser_ber_trial(
    cc: CompositeConstellation, noise_var: float, trials: int, stream=0, seed: int = 0
) -> tuple:
    """Monte Carlo bit error rates ``(P_s_hat, P_c_hat)`` at one receiver."""
    counts = simulate_errors(cc, noise_var, trials, stream, seed)
    return counts.p_s, counts.p_c


def binomial_stderr(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))
