"""Branch-free scalar math kernels that LLVM can vectorize.

numba lowers ``math.exp``/``math.log`` to libm calls, which blocks SIMD
vectorization of the hot tree loops (no SVML in a stock llvmlite).  The
replacements below are fdlibm-style reductions with fixed-degree
polynomials, accurate to a couple of ulp over the ranges we feed them.
All selects are two-way so the loop vectorizer keeps them as blends.
"""

from __future__ import annotations

import math

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

JIT_INLINE = dict(inline="always", error_model="numpy", cache=True)

LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10
INV_LN2 = 1.44269504088896338700e00
QUARTER_PI = 0.7853981633974483
TWO_M53 = 1.0 / 9007199254740992.0


@intrinsic
def f64_bits(typingctx, x):
    sig = types.int64(types.float64)

    def codegen(context, builder, sig, args):
        return builder.bitcast(args[0], ir.IntType(64))

    return sig, codegen


@intrinsic
def bits_f64(typingctx, x):
    sig = types.float64(types.int64)

    def codegen(context, builder, sig, args):
        return builder.bitcast(args[0], ir.DoubleType())

    return sig, codegen


@intrinsic
def fma(typingctx, a, b, c):
    """a * b + c with a single rounding (llvm.fma, vectorizable)."""
    sig = types.float64(types.float64, types.float64, types.float64)

    def codegen(context, builder, sig, args):
        return builder.fma(*args)

    return sig, codegen


@njit(**JIT_INLINE)
def exp_fast(x):
    """exp(x) for x <= 709; returns 0 below -708 (including -inf)."""
    xc = max(x, -708.0)
    k = math.floor(xc * INV_LN2 + 0.5)
    r = fma(-k, LN2_LO, fma(-k, LN2_HI, xc))
    p = 1.0 / 6227020800.0
    p = fma(p, r, 1.0 / 479001600.0)
    p = fma(p, r, 1.0 / 39916800.0)
    p = fma(p, r, 1.0 / 3628800.0)
    p = fma(p, r, 1.0 / 362880.0)
    p = fma(p, r, 1.0 / 40320.0)
    p = fma(p, r, 1.0 / 5040.0)
    p = fma(p, r, 1.0 / 720.0)
    p = fma(p, r, 1.0 / 120.0)
    p = fma(p, r, 1.0 / 24.0)
    p = fma(p, r, 1.0 / 6.0)
    p = fma(p, r, 0.5)
    p = fma(p, r, 1.0)
    p = fma(p, r, 1.0)
    res = p * bits_f64((np.int64(k) + 1023) << 52)
    return res if x >= -708.0 else 0.0


@njit(**JIT_INLINE)
def log_fast(x):
    """Natural log for finite positive normal x."""
    bits = f64_bits(x)
    e = (bits >> 52) - 1023
    m = bits_f64((bits & 0x000FFFFFFFFFFFFF) | 0x3FF0000000000000)
    big = m > 1.4142135623730951
    m = m * 0.5 if big else m
    e = e + 1 if big else e
    f = m - 1.0
    s = f / (2.0 + f)
    z = s * s
    w = z * z
    t1 = w * fma(w, fma(w, 1.531383769920937332e-01, 2.222219843214978396e-01), 3.999999999940941908e-01)
    t2 = z * fma(w, fma(w, fma(w, 1.479819860511658591e-01, 1.818357216161805012e-01),
                        2.857142874366239149e-01), 6.666666666666735130e-01)
    R = t2 + t1
    hfsq = 0.5 * f * f
    dk = float(e)
    return dk * LN2_HI - ((hfsq - (s * (hfsq + R) + dk * LN2_LO)) - f)


@njit(**JIT_INLINE)
def unit_open(bits):
    """Top 53 bits of a uint64 mapped to the open interval (0, 1)."""
    return (float(np.int64(bits >> np.uint64(11))) + 0.5) * TWO_M53


@njit(**JIT_INLINE)
def normal_pair(b1, b2):
    """Two independent N(0,1) variates from two random 64-bit words.

    Box-Muller: the radius uses 53 bits of ``b1``.  The angle is built
    from ``b2`` as a uniform element of the dihedral group of the square
    (top three bits: swap cos/sin, negate each) times an offset uniform
    on [-pi/4, pi/4) from the next 53 bits, so sin/cos only need short
    Taylor polynomials on a small interval.
    """
    r = math.sqrt(-2.0 * log_fast(unit_open(b1)))
    frac = unit_open(b2 << np.uint64(3))
    d = (2.0 * frac - 1.0) * QUARTER_PI
    z = d * d
    s = -1.0 / 1307674368000
    s = fma(s, z, 1.0 / 6227020800)
    s = fma(s, z, -1.0 / 39916800)
    s = fma(s, z, 1.0 / 362880)
    s = fma(s, z, -1.0 / 5040)
    s = fma(s, z, 1.0 / 120)
    s = fma(s, z, -1.0 / 6)
    s = fma(s, z, 1.0)
    s = d * s
    c = 1.0 / 20922789888000
    c = fma(c, z, -1.0 / 87178291200)
    c = fma(c, z, 1.0 / 479001600)
    c = fma(c, z, -1.0 / 3628800)
    c = fma(c, z, 1.0 / 40320)
    c = fma(c, z, -1.0 / 720)
    c = fma(c, z, 1.0 / 24)
    c = fma(c, z, -0.5)
    c = fma(c, z, 1.0)
    swap = (b2 >> np.uint64(63)) != np.uint64(0)
    neg_a = ((b2 >> np.uint64(62)) & np.uint64(1)) != np.uint64(0)
    neg_b = ((b2 >> np.uint64(61)) & np.uint64(1)) != np.uint64(0)
    a = s if swap else c
    b = c if swap else s
    a = -a if neg_a else a
    b = -b if neg_b else b
    return r * a, r * b
