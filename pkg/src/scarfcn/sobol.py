"""Natural-order Sobol low-discrepancy sequence.

Dimension 0 is the base-2 radical inverse (van der Corput sequence), so
point ``index`` has first coordinate radical_inverse(index).  Higher
dimensions use the classic primitive-polynomial direction-number
recursion; points are indexed directly by their binary expansion (no
Gray-code reordering), which keeps the index -> point mapping explicit.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_DIM = 32
N_BITS = 32
_SCALE = 2.0 ** -N_BITS


class SobolConfigError(ValueError):
    """Requested dimension outside the supported range."""


# Degrees and interior-coefficient masks of the primitive polynomials for
# dimensions 1..5 (dimension 0 is the hardwired identity matrix), with
# their seed direction values m_1..m_s (odd, m_i < 2^i).
_SEED_DEGREE = [2, 3, 3, 4, 4]
_SEED_POLY = [1, 1, 2, 1, 4]
_SEED_MINIT = [
    [1, 1],
    [1, 3, 7],
    [1, 3, 3],
    [1, 1, 3, 13],
    [1, 1, 5, 9],
]


def _poly_mulmod(a: int, b: int, mod: int, deg: int) -> int:
    """Multiply GF(2) polynomials a*b modulo mod (degree deg)."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> deg & 1:
            a ^= mod
    return r


def _poly_powmod(base: int, exp: int, mod: int, deg: int) -> int:
    r = 1
    while exp:
        if exp & 1:
            r = _poly_mulmod(r, base, mod, deg)
        base = _poly_mulmod(base, base, mod, deg)
        exp >>= 1
    return r


def _prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def _is_primitive(poly: int, deg: int) -> bool:
    """Primitivity of a GF(2) polynomial encoded with its leading bit set."""
    order = (1 << deg) - 1
    if _poly_powmod(2, order, poly, deg) != 1:
        return False
    return all(_poly_powmod(2, order // q, poly, deg) != 1
               for q in _prime_factors(order))


def _primitive_polynomials(count: int) -> list[tuple[int, int]]:
    """First ``count`` primitive polynomials as (degree, interior mask)."""
    found: list[tuple[int, int]] = []
    deg = 2
    while len(found) < count:
        for interior in range(1 << (deg - 1)):
            poly = (1 << deg) | (interior << 1) | 1
            if _is_primitive(poly, deg):
                found.append((deg, interior))
                if len(found) == count:
                    break
        deg += 1
    return found


@lru_cache(maxsize=None)
def _direction_matrix(dim: int) -> np.ndarray:
    """Direction numbers V[d][j] (as N_BITS-bit integers) for all dims < dim."""
    v = np.zeros((dim, N_BITS), dtype=np.uint64)
    # dimension 0: identity matrix -> radical inverse
    for j in range(N_BITS):
        v[0, j] = 1 << (N_BITS - 1 - j)
    if dim == 1:
        return v
    polys = _primitive_polynomials(dim - 1)
    # deterministic odd seeds for dimensions beyond the tabulated five
    rng = np.random.default_rng(0x50B0_1D1F)
    for d in range(1, dim):
        if d - 1 < len(_SEED_MINIT):
            deg, interior = _SEED_DEGREE[d - 1], _SEED_POLY[d - 1]
            minit = _SEED_MINIT[d - 1]
        else:
            deg, interior = polys[d - 1]
            minit = [2 * int(rng.integers(0, 1 << max(i - 1, 0))) + 1
                     for i in range(1, deg + 1)]
        for j in range(min(deg, N_BITS)):
            v[d, j] = minit[j] << (N_BITS - 1 - j)
        for j in range(deg, N_BITS):
            prev = int(v[d, j - deg])
            val = prev ^ (prev >> deg)
            coeffs = interior
            for k in range(deg - 1, 0, -1):
                if coeffs & 1:
                    val ^= int(v[d, j - k])
                coeffs >>= 1
            v[d, j] = val
    return v


def sobol_sample(dim: int, index: int) -> tuple[float, ...]:
    """Point ``index`` (>= 1) of the dim-dimensional Sobol sequence in [0,1)^dim."""
    if not 1 <= dim <= MAX_DIM:
        raise SobolConfigError(f"dim must be in 1..{MAX_DIM}, got {dim}")
    if index < 1:
        raise ValueError(f"index must be >= 1, got {index}")
    if index >= 1 << N_BITS:
        raise ValueError(f"index must be < 2^{N_BITS}")
    v = _direction_matrix(dim)
    acc = np.zeros(dim, dtype=np.uint64)
    i = index
    j = 0
    while i:
        if i & 1:
            acc ^= v[:, j]
        i >>= 1
        j += 1
    return tuple(float(x) * _SCALE for x in acc)


def sobol_points(dim: int, count: int, start: int = 1) -> np.ndarray:
    """Points start..start+count-1 as a (count, dim) array."""
    return np.array([sobol_sample(dim, start + i) for i in range(count)])
