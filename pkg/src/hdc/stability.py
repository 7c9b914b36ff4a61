"""Stability functions, the degree-21 amplification polynomial, and region metrics.

The linear test equation u' = lambda*u turns every stepper into a polynomial
amplification factor in z = lambda*k.  For the corrected midpoint scheme the
factor is

    R(z) = 1 + z + z^2/2 + r(z) + z*s(z),

with r and s built from powers of the RK4 factor q(z/5); R has degree 21.
``expand_coefficients`` produces the exact coefficients of any of the four
methods by rational arithmetic (the degree-21 expansion cancels catastrophically
in floating point, and the RK6 tableau lives in Q(sqrt(21))).
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .steppers import StepperKind

__all__ = [
    "StabilityPolynomial",
    "RegionRaster",
    "BoundaryNotFound",
    "q_rk4",
    "r_correction",
    "s_correction",
    "big_r",
    "expand_coefficients",
    "stability_raster",
    "real_axis_boundary",
    "imaginary_extent",
    "containment_check",
    "raster_to_pgm",
    "boundary_points",
]


class BoundaryNotFound(Exception):
    """The scanned stretch of the negative real axis is entirely unstable."""


def q_rk4(z):
    """Amplification factor of classical RK4: 1 + z + z^2/2 + z^3/6 + z^4/24."""
    return 1.0 + z + z * z / 2.0 + z ** 3 / 6.0 + z ** 4 / 24.0


def r_correction(z):
    """Amplification contribution of the full-step correction stencil."""
    w = q_rk4(z / 5.0)
    return (125.0 / 384.0) * (-3.0 - w + 18.0 * w ** 2 - 18.0 * w ** 3
                              + w ** 4 + 3.0 * w ** 5)


def s_correction(z):
    """Amplification contribution of the half-step correction stencil."""
    w = q_rk4(z / 5.0)
    return (25.0 / 768.0) * (145.0 - 387.0 * w + 402.0 * w ** 2 - 238.0 * w ** 3
                             + 93.0 * w ** 4 - 15.0 * w ** 5)


def big_r(z):
    """Degree-21 amplification factor of the corrected midpoint scheme."""
    return 1.0 + z + z * z / 2.0 + r_correction(z) + z * s_correction(z)


@dataclass(frozen=True)
class StabilityPolynomial:
    """p(z) = sum c_j z^j with real coefficients; c_0 = 1 for consistent methods."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        # Horner; accepts scalars or arrays, real or complex.
        acc = np.zeros_like(np.asarray(z, dtype=complex)) if not np.isscalar(z) \
            else 0.0 + 0.0j
        for c in self.coeffs[::-1]:
            acc = acc * z + c
        return acc


# -- exact expansion ---------------------------------------------------------

def _poly_mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] += a * b
    return out


def _poly_add(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else Fraction(0)) + (q[i] if i < len(q) else Fraction(0))
            for i in range(n)]


def _poly_scale(p, c):
    return [c * a for a in p]


class _Quad:
    """Exact element a + b*sqrt(21) of the quadratic field Q(sqrt(21))."""

    __slots__ = ("a", "b")

    def __init__(self, a, b=0):
        self.a = Fraction(a)
        self.b = Fraction(b)

    def __add__(self, other):
        other = other if isinstance(other, _Quad) else _Quad(other)
        return _Quad(self.a + other.a, self.b + other.b)

    __radd__ = __add__

    def __mul__(self, other):
        other = other if isinstance(other, _Quad) else _Quad(other)
        return _Quad(self.a * other.a + 21 * self.b * other.b,
                     self.a * other.b + self.b * other.a)

    __rmul__ = __mul__

    def rational(self) -> Fraction:
        if self.b != 0:
            raise ValueError("value is irrational")
        return self.a


def _luther_tableau():
    s = _Quad(0, 1)  # sqrt(21)
    q = Fraction
    a = [
        [],
        [_Quad(1)],
        [_Quad(q(3, 8)), _Quad(q(1, 8))],
        [_Quad(q(8, 27)), _Quad(q(2, 27)), _Quad(q(8, 27))],
        [q(3, 392) * (3 * s + _Quad(-7)), q(-8, 392) * (_Quad(7) + -1 * s),
         q(48, 392) * (_Quad(7) + -1 * s), q(-3, 392) * (_Quad(21) + -1 * s)],
        [q(-5, 1960) * (_Quad(231) + 51 * s), q(-40, 1960) * (_Quad(7) + s),
         q(-320, 1960) * s, q(3, 1960) * (_Quad(21) + 121 * s),
         q(392, 1960) * (_Quad(6) + s)],
        [q(15, 180) * (_Quad(22) + 7 * s), _Quad(q(120, 180)),
         q(40, 180) * (7 * s + _Quad(-5)), q(-63, 180) * (3 * s + _Quad(-2)),
         q(-14, 180) * (_Quad(49) + 9 * s), q(70, 180) * (_Quad(7) + -1 * s)],
    ]
    b = [_Quad(q(9, 180)), _Quad(0), _Quad(q(64, 180)), _Quad(0),
         _Quad(q(49, 180)), _Quad(q(49, 180)), _Quad(q(9, 180))]
    return a, b


def _rk6_exact_coeffs():
    # c_j = b^T A^(j-1) 1 for an explicit tableau; the sqrt(21) parts cancel.
    a, b = _luther_tableau()
    n = 7
    vec = [_Quad(1)] * n
    coeffs = [Fraction(1)]
    for _ in range(n):
        coeffs.append(sum((bi * vi for bi, vi in zip(b, vec)), _Quad(0)).rational())
        vec = [sum((a[i][j] * vec[j] for j in range(len(a[i]))), _Quad(0))
               for i in range(n)]
    return coeffs


def _q_poly_fifth():
    """q(z/5) as an exact polynomial in z."""
    return [Fraction(1, 5 ** j * math.factorial(j)) for j in range(5)]


def exact_coefficients(method: StepperKind) -> list[Fraction]:
    """Exact rational stability-polynomial coefficients of ``method``."""
    if method is StepperKind.RK2_MIDPOINT:
        return [Fraction(1), Fraction(1), Fraction(1, 2)]
    if method is StepperKind.RK4:
        return [Fraction(1, math.factorial(j)) for j in range(5)]
    if method is StepperKind.RK6:
        return _rk6_exact_coeffs()

    w = _q_poly_fifth()
    powers = [[Fraction(1)]]
    for _ in range(5):
        powers.append(_poly_mul(powers[-1], w))
    r = [Fraction(0)]
    s = [Fraction(0)]
    for wt_r, wt_s, p in zip((-3, -1, 18, -18, 1, 3),
                             (145, -387, 402, -238, 93, -15), powers):
        r = _poly_add(r, _poly_scale(p, Fraction(wt_r)))
        s = _poly_add(s, _poly_scale(p, Fraction(wt_s)))
    r = _poly_scale(r, Fraction(125, 384))
    s = _poly_scale(s, Fraction(25, 768))
    total = _poly_add([Fraction(1), Fraction(1), Fraction(1, 2)], r)
    total = _poly_add(total, [Fraction(0)] + s)  # + z*s(z)
    return total


def expand_coefficients(method: StepperKind) -> StabilityPolynomial:
    """Stability polynomial with exactly expanded coefficients.

    Degrees: 2 (midpoint), 4 (RK4), 7 (RK6), 21 (DC6RK24).  Rational
    arithmetic throughout; conversion to float happens only here.
    """
    return StabilityPolynomial(np.array([float(c) for c in exact_coefficients(method)]))


# -- region analysis ---------------------------------------------------------

@dataclass(frozen=True)
class RegionRaster:
    """Boolean grid of |p(z)| <= 1 over a rectangle of the complex plane.

    ``inside[j, i]`` corresponds to z = re[i] + 1j*im[j].
    """

    re_range: tuple
    im_range: tuple
    nx: int
    ny: int
    inside: np.ndarray

    @property
    def re(self) -> np.ndarray:
        return np.linspace(self.re_range[0], self.re_range[1], self.nx)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(self.im_range[0], self.im_range[1], self.ny)


def stability_raster(poly, re_range=(-6.0, 1.0), im_range=(-5.0, 5.0),
                     nx: int = 701, ny: int = 1001) -> RegionRaster:
    """Rasterize {z : |p(z)| <= 1} on an nx-by-ny grid."""
    if nx < 2 or ny < 2:
        raise ValueError("nx and ny must be >= 2")
    re = np.linspace(re_range[0], re_range[1], nx)
    im = np.linspace(im_range[0], im_range[1], ny)
    z = re[None, :] + 1j * im[:, None]
    inside = np.abs(poly(z)) <= 1.0
    return RegionRaster(re_range=tuple(re_range), im_range=tuple(im_range),
                        nx=nx, ny=ny, inside=inside)


def real_axis_boundary(poly, scan_step: float = 1e-4, tol: float = 1e-6,
                       x_limit: float = -60.0) -> float:
    """Leftmost x* < 0 with |p(x)| <= 1 on all of [x*, 0].

    Scans leftward at ``scan_step`` and bisects the first unstable bracket
    down to ``tol``.  Raises BoundaryNotFound when even the initial stretch
    [-0.01, 0) is unstable.
    """
    chunk = 4096
    x_hi = 0.0
    start = -scan_step
    while x_hi > x_limit:
        xs = start + np.arange(chunk) * (-scan_step)
        xs = xs[xs > x_limit]
        if xs.size == 0:
            break
        bad = np.abs(poly(xs)) > 1.0
        if bad.any():
            i = int(np.argmax(bad))
            x_bad = xs[i]
            x_ok = xs[i - 1] if i > 0 else x_hi
            if x_ok == 0.0:
                # even the first scanned point is unstable
                raise BoundaryNotFound(
                    "polynomial is unstable immediately left of the origin")
            lo, hi = float(x_bad), float(x_ok)
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                if abs(poly(mid)) <= 1.0:
                    hi = mid
                else:
                    lo = mid
            return hi
        x_hi = xs[-1]
        start = x_hi - scan_step
    raise BoundaryNotFound(f"no boundary found above {x_limit}")


def _column_top(poly, x: float, y_seed: float, y_max: float, tol: float = 1e-6):
    """Largest stable y above y_seed in column x, by expansion plus bisection."""
    if abs(poly(complex(x, y_seed))) > 1.0:
        return None
    lo = y_seed
    hi = y_seed
    step = max(1e-3, tol)
    while hi < y_max and abs(poly(complex(x, hi))) <= 1.0:
        lo = hi
        hi = min(hi + step, y_max)
        step *= 2.0
    if hi >= y_max and abs(poly(complex(x, hi))) <= 1.0:
        return y_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if abs(poly(complex(x, mid))) <= 1.0:
            lo = mid
        else:
            hi = mid
    return lo


def imaginary_extent(poly, re_range=(-6.0, 0.5), im_range=(-5.5, 5.5),
                     n: int = 2001) -> float:
    """Max |Im z| over the stability region inside the given window.

    A coarse n-by-n raster locates the highest stable cell; local bisection
    in y plus a fine sweep in x (with a parabolic refinement of the peak)
    push the estimate well below the reported 1e-3 resolution.
    """
    raster = stability_raster(poly, re_range, (0.0, im_range[1]), n, n)
    ins = raster.inside
    if not ins.any():
        raise BoundaryNotFound("no stable points in the window")
    rows = np.nonzero(ins.any(axis=1))[0]
    j_top = rows[-1]
    i_cols = np.nonzero(ins[j_top])[0]
    re = raster.re
    im = raster.im
    dx = re[1] - re[0]

    best_y = -np.inf
    best_x = None
    for i0 in i_cols:
        x0 = re[i0]
        for x in np.linspace(x0 - 2 * dx, x0 + 2 * dx, 41):
            y = _column_top(poly, x, im[j_top], im_range[1])
            if y is not None and y > best_y:
                best_y, best_x = y, x

    # parabolic refinement of the peak of y(x)
    h = dx / 10.0
    xs = np.array([best_x - h, best_x, best_x + h])
    ys = [_column_top(poly, x, best_y - 1e-3, im_range[1]) for x in xs]
    if all(y is not None for y in ys):
        y0, y1, y2 = ys
        denom = (y0 - 2 * y1 + y2)
        if denom < 0:
            x_vtx = best_x + 0.5 * h * (y0 - y2) / denom
            y_vtx = _column_top(poly, x_vtx, best_y - 1e-3, im_range[1])
            if y_vtx is not None and y_vtx > best_y:
                best_y = y_vtx
    return float(best_y)


def _origin_component(inside: np.ndarray, re: np.ndarray, im: np.ndarray) -> np.ndarray:
    """Connected component of the stable set containing the origin's left edge.

    Explicit stability polynomials can have spurious stable pockets away from
    the origin (Luther's RK6 has two near 0.75 +- 3i); absolute-stability
    claims concern the component a decaying mode actually lives in.
    """
    from scipy import ndimage

    labels, _ = ndimage.label(inside)
    j0 = int(np.argmin(np.abs(im)))
    candidates = np.nonzero((re < 0) & inside[j0])[0]
    if candidates.size == 0:
        return np.zeros_like(inside)
    seed = labels[j0, candidates[-1]]
    return labels == seed


def containment_check(inner, outer, re_range=(-6.0, 1.0), im_range=(-5.0, 5.0),
                      nx: int = 701, ny: int = 1001, eps: float = 1e-9,
                      connected_only: bool = True) -> list[complex]:
    """Grid points where ``inner`` is stable but ``outer`` is not.

    Returns z with |inner(z)| <= 1 - eps and |outer(z)| > 1 + eps; an empty
    list certifies raster-level containment of inner's region in outer's.
    With ``connected_only`` (default) the inner region is restricted to its
    origin-connected component, ignoring disconnected stable pockets.
    """
    re = np.linspace(re_range[0], re_range[1], nx)
    im = np.linspace(im_range[0], im_range[1], ny)
    z = re[None, :] + 1j * im[:, None]
    inner_mask = np.abs(inner(z)) <= 1.0 - eps
    if connected_only:
        inner_mask = _origin_component(inner_mask, re, im)
    viol = inner_mask & (np.abs(outer(z)) > 1.0 + eps)
    jj, ii = np.nonzero(viol)
    return [complex(re[i], im[j]) for j, i in zip(jj, ii)]


# -- export ------------------------------------------------------------------

def raster_to_pgm(raster: RegionRaster) -> bytes:
    """Binary PGM (P5): inside = 0 (black), outside = 255; top row = max Im."""
    img = np.where(raster.inside[::-1], 0, 255).astype(np.uint8)
    header = f"P5\n{raster.nx} {raster.ny}\n255\n".encode("ascii")
    return header + img.tobytes()


def boundary_points(raster: RegionRaster) -> list[complex]:
    """Inside cells with at least one outside 4-neighbour."""
    ins = raster.inside
    pad = np.pad(ins, 1, constant_values=False)
    nb_all = (pad[:-2, 1:-1] & pad[2:, 1:-1] & pad[1:-1, :-2] & pad[1:-1, 2:])
    edge = ins & ~nb_all
    re = raster.re
    im = raster.im
    jj, ii = np.nonzero(edge)
    return [complex(re[i], im[j]) for j, i in zip(jj, ii)]


def boundary_csv(raster: RegionRaster) -> str:
    buf = io.StringIO()
    buf.write("re,im\n")
    for z in boundary_points(raster):
        buf.write(f"{z.real!r},{z.imag!r}\n")
    return buf.getvalue()


def metrics_csv(rows: Sequence[tuple]) -> str:
    """CSV ``method,real_boundary,imag_extent`` from (name, x, y) tuples."""
    buf = io.StringIO()
    buf.write("method,real_boundary,imag_extent\n")
    for name, xb, ye in rows:
        buf.write(f"{name},{float(xb)!r},{float(ye)!r}\n")
    return buf.getvalue()
