"""Domain types shared by every module: scenario, constellations, phase pairs.

Phase vectors are stored as the diagonals of the RIS matrices, so the
reflected term toward a receiver with cascade ``F = diag(g^H) H`` is
``theta @ (F @ w)`` (no conjugation).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "MODULUS_TOL",
    "LINKS",
    "ScenarioConfig",
    "Constellation",
    "PhasePair",
    "Beamformer",
    "make_constellation",
    "modulate",
    "hamming",
    "dbm_to_watt",
    "watt_to_dbm",
]

MODULUS_TOL = 1e-9

# link order used for path-loss exponents and blocking flags
LINKS = ("h_p", "h_s", "H", "g_p", "g_s")


def dbm_to_watt(p_dbm):
    """Convert dBm to watts, ``10**((p - 30) / 10)``."""
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watt_to_dbm(p_watt):
    return 10.0 * np.log10(np.asarray(p_watt, dtype=float)) + 30.0


def _frozen(a, dtype=complex) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Scenario
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
_DEFAULT_COORDS = {
    "PT": (0.0, 0.0),
    "ST": (0.0, 30.0),
    "PU": (1000.0, 0.0),
    "SU": (990.0, 100.0),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry, powers and sizes of one RIS-assisted symbiotic radio setup.

    Powers are in watts. ``N = 0`` models a switched-off RIS. ``blocked``
    names links (from ``LINKS``) whose channel is forced to zero.
    """

    M: int = 4
    N: int = 16
    P_t: float = 1.0
    sigma2_p: float = 1e-13
    sigma2_s: float = 1e-13
    delta: float = 0.5
    coords: Mapping[str, tuple] = field(default_factory=lambda: dict(_DEFAULT_COORDS))
    pathloss_exponents: tuple = (2.9, 2.8, 2.1, 2.3, 2.2)
    seed: int = 0
    pl_ref: float = 1e-3
    blocked: frozenset = frozenset()

    def __post_init__(self):
        if int(self.M) < 1:
            raise ValueError("M must be >= 1")
        if int(self.N) < 0:
            raise ValueError("N must be >= 0")
        if not self.P_t > 0:
            raise ValueError("P_t must be positive")
        if not (self.sigma2_p > 0 and self.sigma2_s > 0):
            raise ValueError("noise powers must be positive")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if len(self.pathloss_exponents) != len(LINKS):
            raise ValueError("need one path-loss exponent per link")
        if any(not xi > 0 for xi in self.pathloss_exponents):
            raise ValueError("path-loss exponents must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        missing = {"PT", "ST", "PU", "SU"} - set(self.coords)
        if missing:
            raise ValueError(f"missing coordinates for {sorted(missing)}")
        unknown = set(self.blocked) - set(LINKS)
        if unknown:
            raise ValueError(f"unknown links in blocked: {sorted(unknown)}")
        object.__setattr__(self, "blocked", frozenset(self.blocked))
        object.__setattr__(
            self, "coords", {k: tuple(map(float, v)) for k, v in self.coords.items()}
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def distances(self) -> dict:
        """Link distances in meters, keyed by link name."""
        c = {k: np.asarray(v) for k, v in self.coords.items()}
        ends = {
            "h_p": ("PT", "PU"),
            "h_s": ("PT", "SU"),
            "H": ("PT", "ST"),
            "g_p": ("ST", "PU"),
            "g_s": ("ST", "SU"),
        }
        return {k: float(np.linalg.norm(c[a] - c[b])) for k, (a, b) in ends.items()}


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Constellations
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit average energy alphabet with one bit label per symbol."""

    symbols: np.ndarray
    bit_labels: tuple

    def __post_init__(self):
        symbols = _frozen(self.symbols)
        labels = tuple(str(b) for b in self.bit_labels)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "bit_labels", labels)
        if symbols.ndim != 1 or len(symbols) < 2:
            raise ValueError("a constellation needs at least two symbols")
        if len(labels) != len(symbols):
            raise ValueError("one bit label per symbol is required")
        nbits = int(round(np.log2(len(symbols))))
        if 2**nbits != len(symbols) or any(len(b) != nbits for b in labels):
            raise ValueError("labels must all have log2(size) bits")
        if len(set(labels)) != len(labels):
            raise ValueError("bit labels must be distinct")
        if len(np.unique(np.round(symbols, 12))) != len(symbols):
            raise ValueError("symbols must be distinct")
        if abs(np.mean(np.abs(symbols) ** 2) - 1.0) > 1e-12:
            raise ValueError("average symbol energy must be 1")

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def bits_per_symbol(self) -> int:
        return len(self.bit_labels[0])

    @property
    def bit_matrix(self) -> np.ndarray:
        """``(size, bits)`` integer array of the labels."""
        return np.array([[int(ch) for ch in b] for b in self.bit_labels], dtype=np.int8)

    def hamming_table(self) -> np.ndarray:
        bm = self.bit_matrix
        return (bm[:, None, :] != bm[None, :, :]).sum(axis=2)

    def __repr__(self) -> str:
        return f"Constellation(size={len(self)}, labels={self.bit_labels})"


def make_constellation(kind: str = "QPSK", labeling: str = "Gray") -> Constellation:
    """Build a BPSK or QPSK alphabet.

    QPSK symbols are ``(+-1 +- 1j)/sqrt(2)`` listed counter-clockwise from
    the first quadrant; Gray labels make neighbours differ in one bit.
    """
    kind = kind.upper()
    labeling = labeling.capitalize()
    if labeling not in ("Gray", "Natural"):
        raise ValueError(f"unknown labeling {labeling!r}")
    if kind == "BPSK":
        return Constellation(np.array([1.0 + 0j, -1.0 + 0j]), ("0", "1"))
    if kind == "QPSK":
        symbols = np.exp(1j * np.pi / 4 * np.array([1, 3, 5, 7]))
        # exact values rather than trig round-off
        symbols = (np.sign(symbols.real) + 1j * np.sign(symbols.imag)) / np.sqrt(2)
        labels = ("00", "01", "11", "10") if labeling == "Gray" else ("00", "01", "10", "11")
        return Constellation(symbols, labels)
    raise ValueError(f"unknown constellation {kind!r}")


def hamming(cst: Constellation, i: int, j: int) -> int:
    n = len(cst)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"symbol index out of range for size {n}")
    return sum(a != b for a, b in zip(cst.bit_labels[i], cst.bit_labels[j]))


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Beamforming variables
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
@dataclass(frozen=True, eq=False)
class PhasePair:
    """Assistance (``theta1``) and transmission (``theta2``) RIS diagonals.

    The reflection applied while the RIS sends ``c`` is
    ``theta1 + c * theta2``.
    """

    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        t1 = _frozen(self.theta1).reshape(-1)
        t2 = _frozen(self.theta2).reshape(-1)
        if t1.shape != t2.shape:
            raise ValueError("theta1 and theta2 must have the same length")
        object.__setattr__(self, "theta1", t1)
        object.__setattr__(self, "theta2", t2)

    @property
    def N(self) -> int:
        return len(self.theta1)

    @classmethod
    def zeros(cls, N: int) -> "PhasePair":
        return cls(np.zeros(N, complex), np.zeros(N, complex))

    def max_modulus(self, A_c: Constellation) -> float:
        if self.N == 0:
            return 0.0
        return float(max(np.max(np.abs(self.theta1 + c * self.theta2)) for c in A_c.symbols))

    def is_valid(self, A_c: Constellation, tol: float = MODULUS_TOL) -> bool:
        return self.max_modulus(A_c) <= 1.0 + tol

    def validate(self, A_c: Constellation, tol: float = MODULUS_TOL) -> "PhasePair":
        m = self.max_modulus(A_c)
        if m > 1.0 + tol:
            raise ValueError(f"reflection modulus {m:.12g} exceeds 1")
        return self


@dataclass(frozen=True, eq=False)
class Beamformer:
    """PT beamforming vector; behaves as an array via ``np.asarray``."""

    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _frozen(self.w).reshape(-1))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.w, dtype=dtype)

    @property
    def power(self) -> float:
        return float(np.vdot(self.w, self.w).real)

    def validate(self, P_t: float, tol: float = MODULUS_TOL) -> "Beamformer":
        if self.power > P_t + tol * max(1.0, P_t):
            raise ValueError(f"beamformer power {self.power:.6g} exceeds P_t={P_t:.6g}")
        return self


def modulate(pp: PhasePair, c: complex) -> np.ndarray:
    """RIS reflection diagonal while sending secondary symbol ``c``."""
    return pp.theta1 + c * pp.theta2
