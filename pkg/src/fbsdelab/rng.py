"""Counter-based random source driving every stochastic module.

Each Brownian increment is a pure function of (master_seed, stream, step,
component): the Philox4x64-10 block cipher keyed by (master_seed, stream) is
evaluated at counter (step_block, component), and the resulting 64-bit word
is mapped through the inverse normal CDF.  Streams therefore never share
state, results do not depend on scheduling or ensemble size, and the same
seed reproduces the same paths bit-for-bit on any machine.

The Philox round function is checked in the test suite against numpy's own
``np.random.Philox`` bit generator; the inverse CDF (Wichura's PPND16
rational approximations) is checked against ``scipy.special.ndtri``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import TimeGrid

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def _mul_hi_lo(a, b):
    """Full 64x64 -> 128 bit product as (hi, lo), elementwise on uint64 arrays."""
    al = a & _MASK32
    ah = a >> _SHIFT32
    bl = b & _MASK32
    bh = b >> _SHIFT32
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    mid = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    lo = (ll & _MASK32) | ((mid & _MASK32) << _SHIFT32)
    hi = ah * bh + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (mid >> _SHIFT32)
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds; inputs broadcast elementwise, outputs 4 uint64 arrays."""
    with np.errstate(over="ignore"):
        c0 = np.asarray(c0, dtype=np.uint64)
        c1 = np.asarray(c1, dtype=np.uint64)
        c2 = np.asarray(c2, dtype=np.uint64)
        c3 = np.asarray(c3, dtype=np.uint64)
        k0 = np.asarray(k0, dtype=np.uint64)
        k1 = np.asarray(k1, dtype=np.uint64)
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mul_hi_lo(_M0, c0)
            hi1, lo1 = _mul_hi_lo(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def uniform_from_bits(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles strictly inside (0, 1).

    52 bits are kept so the endpoints 2^-53 and 1 - 2^-53 are exact; using a
    53rd bit would round the top of the range to 1.0 and break the inverse
    CDF.
    """
    return ((words >> np.uint64(12)).astype(np.float64) + 0.5) * (2.0**-52)


# ---------------------------------------------------------------------------
# inverse normal CDF, Wichura's PPND16 (double-precision) approximation

_A = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_B = (
    4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
    2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_C = (
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_D = (
    2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_E = (
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7,
)
_F = (
    5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _rational(r, num_coeffs, den_coeffs):
    num = np.full_like(r, num_coeffs[-1])
    for c in num_coeffs[-2::-1]:
        num = num * r + c
    den = np.full_like(r, den_coeffs[-1])
    for c in den_coeffs[-2::-1]:
        den = den * r + c
    den = den * r + 1.0
    return num / den


def inverse_normal_cdf(p) -> np.ndarray:
    """Quantile function of the standard normal, accurate to ~1e-15 relative."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    r = np.where(central, 0.180625 - q * q, 0.0)
    out = q * _rational(r, _A, _B)
    if not np.all(central):
        tails = ~central
        qt = q[tails]
        rt = np.sqrt(-np.log(np.where(qt < 0.0, p[tails], 1.0 - p[tails])))
        val = np.empty_like(rt)
        near = rt <= 5.0
        val[near] = _rational(rt[near] - 1.6, _C, _D)
        far = ~near
        val[far] = _rational(rt[far] - 5.0, _E, _F)
        out[tails] = np.where(qt < 0.0, -val, val)
    return out


# ---------------------------------------------------------------------------
# the lattice of standard normals and the Brownian increment API


def standard_normal_lattice(master_seed: int, streams, n_steps: int, d: int) -> np.ndarray:
    """Normals indexed by (stream, step, component) as an (n_streams, n_steps, d) array.

    Entry [i, m, j] depends only on (master_seed, streams[i], m, j); four
    consecutive steps share one Philox evaluation (the cipher emits four
    64-bit words per counter).
    """
    streams = np.asarray(streams, dtype=np.uint64)
    n_blocks = (n_steps + 3) // 4
    c0 = np.arange(n_blocks, dtype=np.uint64)[None, :, None]
    c1 = np.arange(d, dtype=np.uint64)[None, None, :]
    k1 = streams[:, None, None]
    k0 = np.uint64(master_seed)
    zero = np.uint64(0)
    w0, w1, w2, w3 = philox4x64(c0, c1, zero, zero, k0, k1)
    words = np.stack([w0, w1, w2, w3], axis=2)  # (n_streams, n_blocks, 4, d)
    words = words.reshape(len(streams), 4 * n_blocks, d)[:, :n_steps, :]
    return inverse_normal_cdf(uniform_from_bits(words))


@dataclass(frozen=True)
class RandomSource:
    """Master seed plus the stream-derivation rule."""

    master_seed: int

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must fit in 64 bits")

    def brownian_increments(self, stream: int, grid: TimeGrid, d: int = 1) -> np.ndarray:
        """Increments of a d-dimensional Brownian motion on the grid, shape (n_steps, d)."""
        return self.brownian_block(stream, 1, grid, d)[0]

    def brownian_block(self, stream_start: int, n_streams: int, grid: TimeGrid, d: int = 1) -> np.ndarray:
        """Increments for consecutive streams, shape (n_streams, n_steps, d).

        Row i is bit-identical to brownian_increments(stream_start + i, ...),
        whatever the block partitioning.
        """
        streams = np.uint64(stream_start) + np.arange(n_streams, dtype=np.uint64)
        normals = standard_normal_lattice(self.master_seed, streams, grid.n_steps, d)
        return normals * np.sqrt(grid.dt)
