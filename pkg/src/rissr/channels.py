"""Rayleigh channels with distance path loss, cascades, and text dumps."""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TextIO, Union

import numpy as np

from .core import LINKS, ScenarioConfig

__all__ = [
    "ChannelSet",
    "Cascades",
    "pathloss",
    "rng_for",
    "generate",
    "cascades",
    "format_complex",
    "parse_complex",
    "dump_channels",
    "load_channels",
]


def pathloss(d, xi, ref: float = 1e-3):
    """Large-scale power gain ``ref * d**(-xi)``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if np.any(np.asarray(xi) <= 0):
        raise ValueError("path-loss exponent must be positive")
    out = ref * d ** (-np.asarray(xi, dtype=float))
    return float(out) if out.ndim == 0 else out


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *stream)``.

    Distinct stream tuples give statistically independent generators, so
    parallel workers never share state.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """The five links of one realization.

    ``h_p``/``h_s`` are ``(M,)``, ``H`` is ``(N, M)``, ``g_p``/``g_s`` are
    ``(N,)``. Received direct terms are ``h^H w``.
    """

    h_p: np.ndarray
    h_s: np.ndarray
    H: np.ndarray
    g_p: np.ndarray
    g_s: np.ndarray

    def __post_init__(self):
        for name in LINKS:
            arr = np.array(getattr(self, name), dtype=complex)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        M = self.h_p.shape[0]
        N = self.g_p.shape[0]
        if self.h_p.shape != (M,) or self.h_s.shape != (M,):
            raise ValueError("h_p and h_s must be vectors of length M")
        if self.g_p.shape != (N,) or self.g_s.shape != (N,):
            raise ValueError("g_p and g_s must be vectors of length N")
        if self.H.shape != (N, M):
            raise ValueError(f"H must be {N}x{M}, got {self.H.shape}")

    @property
    def M(self) -> int:
        return self.h_p.shape[0]

    @property
    def N(self) -> int:
        return self.g_p.shape[0]

    def replace(self, **links) -> "ChannelSet":
        kw = {k: getattr(self, k) for k in LINKS}
        kw.update(links)
        return ChannelSet(**kw)

    def allclose(self, other: "ChannelSet", **kw) -> bool:
        return all(np.allclose(getattr(self, k), getattr(other, k), **kw) for k in LINKS)

    def identical(self, other: "ChannelSet") -> bool:
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in LINKS)


@dataclass(frozen=True, eq=False)
class Cascades:
    """``F = diag(g^H) H`` toward each receiver; ``f`` set only when M = 1."""

    F_p: np.ndarray
    F_s: np.ndarray
    f_p: Union[np.ndarray, None] = None
    f_s: Union[np.ndarray, None] = None


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    z = rng.standard_normal(shape + (2,))
    return np.sqrt(var / 2.0) * (z[..., 0] + 1j * z[..., 1])


def generate(cfg: ScenarioConfig, draw: int) -> ChannelSet:
    """Draw one channel realization, deterministic in ``(cfg.seed, draw)``.

    Every entry is CN(0, PL) with the link's path loss. Blocked links are
    still drawn (keeping the stream aligned) and then zeroed.
    """
    rng = rng_for(cfg.seed, 0, draw)
    dist = cfg.distances()
    M, N = int(cfg.M), int(cfg.N)
    shapes = {"h_p": (M,), "h_s": (M,), "H": (N, M), "g_p": (N,), "g_s": (N,)}
    links = {}
    for name, xi in zip(LINKS, cfg.pathloss_exponents):
        var = pathloss(dist[name], xi, cfg.pl_ref)
        links[name] = _cn(rng, shapes[name], var)
        if name in cfg.blocked:
            links[name] = np.zeros(shapes[name], complex)
    return ChannelSet(**links)


def cascades(ch: ChannelSet) -> Cascades:
    F_p = ch.g_p.conj()[:, None] * ch.H
    F_s = ch.g_s.conj()[:, None] * ch.H
    if ch.M == 1:
        return Cascades(F_p, F_s, F_p[:, 0].copy(), F_s[:, 0].copy())
    return Cascades(F_p, F_s)


# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
# Flat text format: a header "name rows cols" and then rows of "a+bi" tokens
# xxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxxx
_TOKEN = re.compile(
    r"^([+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf|nan))"
    r"([+-](?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf|nan))i$"
)


def format_complex(z: complex) -> str:
    """Shortest round-trip ``a+bi`` token."""
    z = complex(z)
    return f"{z.real!r}{z.imag:+}i"


def parse_complex(token: str) -> complex:
    m = _TOKEN.match(token.strip())
    if not m:
        raise ValueError(f"bad complex token {token!r}")
    return complex(float(m.group(1)), float(m.group(2)))


def write_matrix(fh: TextIO, name: str, arr: np.ndarray) -> None:
    mat = np.atleast_2d(np.asarray(arr, complex))
    if np.asarray(arr).ndim == 1:
        mat = mat.reshape(-1, 1)
    fh.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        fh.write(" ".join(format_complex(z) for z in row) + "\n")


def read_matrices(fh: TextIO) -> dict:
    """Parse every ``name rows cols`` block; ``#`` lines are comments."""
    lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    out = {}
    pos = 0
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 3:
            raise ValueError(f"bad block header {lines[pos]!r}")
        name, rows, cols = head[0], int(head[1]), int(head[2])
        body = lines[pos + 1 : pos + 1 + rows]
        if len(body) != rows:
            raise ValueError(f"block {name} is truncated")
        mat = np.empty((rows, cols), complex)
        for r, ln in enumerate(body):
            toks = ln.split()
            if len(toks) != cols:
                raise ValueError(f"block {name} row {r} has {len(toks)} entries, expected {cols}")
            mat[r] = [parse_complex(t) for t in toks]
        out[name] = mat
        pos += 1 + rows
    return out


def dump_channels(ch: ChannelSet, target: Union[str, Path, TextIO, None] = None) -> str:
    buf = io.StringIO()
    buf.write(f"# channel set M={ch.M} N={ch.N}\n")
    for name in LINKS:
        write_matrix(buf, name, getattr(ch, name))
    text = buf.getvalue()
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    elif target is not None:
        target.write(text)
    return text


def load_channels(source: Union[str, Path, TextIO]) -> ChannelSet:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        fh = io.StringIO(Path(source).read_text())
    elif isinstance(source, str):
        fh = io.StringIO(source)
    else:
        fh = source
    mats = read_matrices(fh)
    missing = set(LINKS) - set(mats)
    if missing:
        raise ValueError(f"dump is missing {sorted(missing)}")
    M = mats["h_p"].shape[0]
    N = mats["g_p"].shape[0]
    return ChannelSet(
        h_p=mats["h_p"].reshape(M),
        h_s=mats["h_s"].reshape(-1),
        H=mats["H"].reshape(N, M) if N else np.zeros((0, M), complex),
        g_p=mats["g_p"].reshape(N),
        g_s=mats["g_s"].reshape(-1),
    )
