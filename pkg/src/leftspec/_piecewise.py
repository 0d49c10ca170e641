"""Piecewise polynomials on a period cell.

Everything downstream (coefficients, quadrature, Fourier tables) is built on
one representation: a list of polynomial pieces in local coordinates on
[0, omega).  Integrals, means, Fourier coefficients and jump lists are all
computed in closed form from the piece coefficients, so the integral criteria
and the Miura algebra stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

__all__ = ["PiecewisePoly", "fit_callable", "ROOT_TOL"]

# tolerance used when deciding whether a polynomial root is real / inside a piece
ROOT_TOL = 1e-9


def _trim(c):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    c = P.polytrim(c, tol=0.0)
    return c if c.size else np.zeros(1)


@dataclass(frozen=True)
class PiecewisePoly:
    """A real piecewise polynomial on the cell [0, omega).

    ``breaks[j]`` is the left endpoint of piece ``j``; ``coeffs[j]`` holds the
    ascending-power coefficients of the piece in the local variable
    ``t = x - breaks[j]``.  The first breakpoint must be 0 and the pieces tile
    the whole cell.  Evaluation is left-continuous: the value at a breakpoint
    is the limit from the left (the value at 0 wraps to the limit at omega).
    """

    omega: float
    breaks: tuple = field(default_factory=tuple)
    coeffs: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("period must be positive")
        breaks = tuple(float(b) for b in self.breaks) or (0.0,)
        coeffs = tuple(_trim(c) for c in self.coeffs) or (np.zeros(1),)
        if len(breaks) != len(coeffs):
            raise ValueError("breaks and coeffs must have equal length")
        if abs(breaks[0]) > 0:
            raise ValueError("first breakpoint must be 0")
        if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if breaks[-1] >= self.omega:
            raise ValueError("breakpoints must lie in [0, omega)")
        object.__setattr__(self, "breaks", breaks)
        object.__setattr__(self, "coeffs", coeffs)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, omega, value=0.0):
        return cls(omega, (0.0,), (np.array([float(value)]),))

    @classmethod
    def zero(cls, omega):
        return cls.constant(omega, 0.0)

    @property
    def npieces(self):
        return len(self.breaks)

    def piece_bounds(self, j):
        lo = self.breaks[j]
        hi = self.breaks[j + 1] if j + 1 < self.npieces else self.omega
        return lo, hi

    # -- evaluation ------------------------------------------------------------

    def _wrap(self, x):
        return np.mod(x, self.omega)

    def _piece_index_right(self, u):
        """Index of the piece whose half-open interval [b_j, b_{j+1}) contains u."""
        j = int(np.searchsorted(self.breaks, u, side="right") - 1)
        return max(j, 0)

    def __call__(self, x, side="left"):
        """Evaluate at x (scalar or array), periodically extended.

        ``side='left'`` gives the left-continuous value (limit from below,
        wrapping 0 to omega); ``side='right'`` gives the limit from above.
        """
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        out = np.empty_like(xs)
        for i, xi in enumerate(xs):
            u = self._wrap(xi)
            if side == "left":
                hit = np.flatnonzero(np.isclose(self.breaks, u, atol=1e-14))
                if np.isclose(u, 0.0, atol=1e-14) or (hit.size and hit[0] == 0):
                    j, u = self.npieces - 1, self.omega
                elif hit.size:
                    j, u = int(hit[0]) - 1, self.breaks[int(hit[0])]
                else:
                    j = self._piece_index_right(u)
            else:
                j = self._piece_index_right(u)
            out[i] = P.polyval(u - self.breaks[j], self.coeffs[j])
        return float(out[0]) if scalar else out

    def value_left(self, x):
        return self(x, side="left")

    def value_right(self, x):
        return self(x, side="right")

    # -- calculus ----------------------------------------------------------------

    def derivative(self):
        """Piecewise derivative (jumps are ignored; they live in `jumps`)."""
        return PiecewisePoly(
            self.omega, self.breaks, tuple(P.polyder(c) for c in self.coeffs)
        )

    def antiderivative(self):
        """The continuous antiderivative F with F(0) = 0, as pieces on the cell."""
        new = []
        acc = 0.0
        for j, c in enumerate(self.coeffs):
            ci = P.polyint(c)
            ci = P.polyadd(ci, [acc])
            lo, hi = self.piece_bounds(j)
            acc = P.polyval(hi - lo, ci)
            new.append(ci)
        return PiecewisePoly(self.omega, self.breaks, tuple(new))

    def integral_cell(self):
        """Integral over one full period."""
        total = 0.0
        for j, c in enumerate(self.coeffs):
            lo, hi = self.piece_bounds(j)
            ci = P.polyint(c)
            total += P.polyval(hi - lo, ci)
        return total

    def mean(self):
        return self.integral_cell() / self.omega

    def integrate(self, a, b):
        """Exact integral over [a, b] of the periodic extension."""
        if b < a:
            return -self.integrate(b, a)
        nper_a, a0 = divmod(a, self.omega)
        nper_b, b0 = divmod(b, self.omega)
        cell = self.integral_cell()
        Fa = self._cell_cdf(a0) + nper_a * cell
        Fb = self._cell_cdf(b0) + nper_b * cell
        return Fb - Fa

    def _cell_cdf(self, u):
        """Integral from 0 to u for u in [0, omega]."""
        if u <= 0:
            return 0.0
        total = 0.0
        for j, c in enumerate(self.coeffs):
            lo, hi = self.piece_bounds(j)
            if u <= lo:
                break
            ci = P.polyint(c)
            total += P.polyval(min(u, hi) - lo, ci)
        return total

    # -- structure ----------------------------------------------------------------

    def jumps(self, tol=0.0):
        """Implied jumps at the breakpoints, as a list of (position, jump).

        The jump at an interior breakpoint x_k is value(x_k+) - value(x_k-);
        the jump at 0 compares the first piece at 0 with the last piece at
        omega.  Entries with |jump| <= tol are dropped.
        """
        out = []
        v_end = P.polyval(self.omega - self.breaks[-1], self.coeffs[-1])
        j0 = P.polyval(0.0, self.coeffs[0]) - v_end
        if abs(j0) > tol:
            out.append((0.0, float(j0)))
        for k in range(1, self.npieces):
            left = P.polyval(self.breaks[k] - self.breaks[k - 1], self.coeffs[k - 1])
            right = P.polyval(0.0, self.coeffs[k])
            if abs(right - left) > tol:
                out.append((self.breaks[k], float(right - left)))
        return out

    def piece_roots(self, j):
        """Real roots of piece j strictly inside its interval (cell coordinates)."""
        lo, hi = self.piece_bounds(j)
        c = self.coeffs[j]
        if c.size <= 1:
            return []
        r = P.polyroots(c)
        if not np.all(np.isfinite(r)):
            raise ArithmeticError(
                f"root finding failed on piece {j} ([{lo}, {hi})): "
                f"degenerate polynomial {c.tolist()}"
            )
        out = []
        for z in r:
            if abs(z.imag) > ROOT_TOL:
                continue
            t = z.real
            if ROOT_TOL < t < (hi - lo) - ROOT_TOL:
                out.append(lo + t)
        return sorted(set(np.round(out, 12)))

    def refine_breaks(self, extra):
        """Insert additional breakpoints (cell coordinates) without changing values."""
        pts = sorted({self._wrap(p) for p in extra} - set(self.breaks))
        breaks = list(self.breaks)
        coeffs = list(self.coeffs)
        for p in pts:
            if any(abs(p - b) <= 1e-13 for b in breaks):
                continue
            j = int(np.searchsorted(breaks, p, side="right") - 1)
            lo = breaks[j]
            # shift local coordinates: piece restarted at p
            shifted = _shift_poly(coeffs[j], p - lo)
            breaks.insert(j + 1, p)
            coeffs.insert(j + 1, shifted)
        return PiecewisePoly(self.omega, tuple(breaks), tuple(coeffs))

    def translate(self, delta):
        """The function x -> f(x - delta), re-cut on [0, omega)."""
        delta = self._wrap(delta)
        if delta == 0.0:
            return self
        new_breaks = sorted(self._wrap(b + delta) for b in self.breaks)
        if not np.isclose(new_breaks[0], 0.0, atol=1e-14):
            new_breaks = [0.0] + new_breaks
        pieces = []
        snap = 1e-12 * max(1.0, self.omega)
        for nb in new_breaks:
            # source point just right of nb - delta, snapped onto breakpoints
            src = self._wrap(nb - delta)
            if src > self.omega - snap:
                src = 0.0
            for b in self.breaks:
                if abs(src - b) < snap:
                    src = b
                    break
            j = self._piece_index_right(src)
            # piece polynomial in t = x - nb: p_j((x - delta) - b_j) with x = nb + t
            pieces.append(_shift_poly(self.coeffs[j], src - self.breaks[j]))
        return PiecewisePoly(self.omega, tuple(np.round(new_breaks, 15)), tuple(pieces))

    # -- algebra ----------------------------------------------------------------

    def _binary(self, other, op):
        if np.isscalar(other):
            other = PiecewisePoly.constant(self.omega, other)
        if not np.isclose(other.omega, self.omega):
            raise ValueError("period mismatch")
        merged = sorted(set(np.round(self.breaks + other.breaks, 15)))
        a = self.refine_breaks(merged)
        b = other.refine_breaks(merged)
        coeffs = tuple(op(ca, cb) for ca, cb in zip(a.coeffs, b.coeffs))
        return PiecewisePoly(self.omega, a.breaks, coeffs)

    def __add__(self, other):
        return self._binary(other, P.polyadd)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, P.polysub)

    def __mul__(self, other):
        if np.isscalar(other):
            return PiecewisePoly(
                self.omega, self.breaks, tuple(c * float(other) for c in self.coeffs)
            )
        return self._binary(other, P.polymul)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def square(self):
        return self * self

    def split_by_sign(self):
        """Split into (positive part, negative part), both nonnegative.

        Pieces are subdivided at their interior sign changes, so the parts are
        again piecewise polynomials and pos - neg reassembles the function.
        """
        cuts = []
        for j in range(self.npieces):
            cuts.extend(self.piece_roots(j))
        ref = self.refine_breaks(cuts)
        pos, neg = [], []
        for j, c in enumerate(ref.coeffs):
            lo, hi = ref.piece_bounds(j)
            mid = ref((lo + hi) / 2.0, side="right")
            if mid >= 0:
                pos.append(c)
                neg.append(np.zeros(1))
            else:
                pos.append(np.zeros(1))
                neg.append(-c)
        return (
            PiecewisePoly(self.omega, ref.breaks, tuple(pos)),
            PiecewisePoly(self.omega, ref.breaks, tuple(neg)),
        )

    def abs(self):
        p, n = self.split_by_sign()
        return p + n

    # -- Fourier ----------------------------------------------------------------

    def fourier_coefficient(self, k):
        """(1/omega) * integral of f(x) exp(-2*pi*i*k*x/omega) over the cell."""
        lam = 2.0 * np.pi * k / self.omega
        total = 0.0 + 0.0j
        for j, c in enumerate(self.coeffs):
            lo, hi = self.piece_bounds(j)
            L = hi - lo
            m = _poly_moments(c.size - 1, lam, L)
            total += np.exp(-1j * lam * lo) * np.dot(c, m)
        return total / self.omega

    def fourier_table(self, kmax):
        """Coefficients for k = -kmax..kmax as an array indexed by k + kmax."""
        lams = 2.0 * np.pi * np.arange(1, kmax + 1) / self.omega
        pos = np.zeros(kmax + 1, dtype=complex)
        pos[0] = self.mean()
        for j, c in enumerate(self.coeffs):
            lo, hi = self.piece_bounds(j)
            m = _poly_moments_vec(c.size - 1, lams, hi - lo)
            pos[1:] += np.exp(-1j * lams * lo) * (c @ m)
        pos[1:] /= self.omega
        return np.concatenate([np.conj(pos[:0:-1]), pos])


def _shift_poly(c, s):
    """Coefficients of p(t + s) given those of p(t)."""
    c = np.asarray(c, dtype=float)
    n = c.size
    out = np.zeros(n)
    # binomial expansion; degrees are tiny so the double loop is fine
    for j in range(n):
        for i in range(j + 1):
            out[i] += c[j] * _binom(j, i) * s ** (j - i)
    return _trim(out)


def _binom(n, k):
    from math import comb

    return comb(n, k)


def _poly_moments(jmax, lam, L):
    """Moments m_j = integral of t^j exp(-i lam t) dt over [0, L], j = 0..jmax."""
    m = np.empty(jmax + 1, dtype=complex)
    if lam == 0.0:
        for j in range(jmax + 1):
            m[j] = L ** (j + 1) / (j + 1)
        return m
    if abs(lam * L) < 1e-3:
        # series to dodge cancellation at small phase
        for j in range(jmax + 1):
            term = 0.0 + 0.0j
            fac = 1.0
            for n in range(24):
                term += ((-1j * lam) ** n / fac) * L ** (j + n + 1) / (j + n + 1)
                fac *= n + 1
            m[j] = term
        return m
    e = np.exp(-1j * lam * L)
    m[0] = (1.0 - e) / (1j * lam)
    for j in range(1, jmax + 1):
        m[j] = (j * m[j - 1] - L**j * e) / (1j * lam)
    return m


def _poly_moments_vec(jmax, lams, L):
    """Moments over [0, L] for an array of nonzero frequencies, shape (jmax+1, nk)."""
    lams = np.asarray(lams, dtype=float)
    m = np.empty((jmax + 1, lams.size), dtype=complex)
    e = np.exp(-1j * lams * L)
    small = np.abs(lams * L) < 1e-3
    m[0] = (1.0 - e) / (1j * lams)
    for j in range(1, jmax + 1):
        m[j] = (j * m[j - 1] - L**j * e) / (1j * lams)
    if small.any():
        ls = lams[small]
        for j in range(jmax + 1):
            term = np.zeros(ls.size, dtype=complex)
            fac = 1.0
            for n in range(24):
                term += ((-1j * ls) ** n / fac) * L ** (j + n + 1) / (j + n + 1)
                fac *= n + 1
            m[j][small] = term
    return m


def fit_callable(f, omega, tol=1e-10, kinks=(), max_pieces=4096):
    """Fit a periodic callable by a cubic-Hermite piecewise polynomial.

    ``kinks`` lists interior cell positions where f is allowed to be
    nonsmooth; each smooth span between consecutive kinks is fitted
    independently with its piece count doubled until the maximum error on a
    dense sample grid drops below ``tol``.  Derivatives at span ends are
    estimated one-sidedly so corners do not contaminate the fit.
    """
    pts = sorted({0.0} | {float(np.mod(p, omega)) for p in kinks})
    spans = list(zip(pts, pts[1:] + [omega]))
    breaks, coeffs = [], []
    for lo, hi in spans:
        bs, cs = _fit_span(f, lo, hi, tol, max_pieces)
        breaks.extend(bs)
        coeffs.extend(cs)
    return PiecewisePoly(omega, tuple(breaks), tuple(coeffs))


def _fit_span(f, lo, hi, tol, max_pieces):
    n = 8
    L = hi - lo
    while True:
        knots = np.linspace(lo, hi, n + 1)
        h = L / n
        # cbrt(eps)-sized step keeps the central difference off the roundoff floor
        d = min(6e-6 * max(1.0, L), h / 8.0)
        vals = np.array([f(x) for x in knots])
        ders = np.empty(n + 1)
        ders[0] = (-3 * f(lo) + 4 * f(lo + d) - f(lo + 2 * d)) / (2 * d)
        ders[-1] = (3 * f(hi) - 4 * f(hi - d) + f(hi - 2 * d)) / (2 * d)
        for j in range(1, n):
            ders[j] = (f(knots[j] + d) - f(knots[j] - d)) / (2 * d)
        coeffs = []
        for j in range(n):
            y0, y1 = vals[j], vals[j + 1]
            d0, d1 = ders[j], ders[j + 1]
            c0 = y0
            c1 = d0
            c2 = (3 * (y1 - y0) / h - 2 * d0 - d1) / h
            c3 = (2 * (y0 - y1) / h + d0 + d1) / h**2
            coeffs.append(np.array([c0, c1, c2, c3]))
        pw_breaks = tuple(knots[:-1])
        xs = np.linspace(lo, hi, 8 * n, endpoint=False) + L / (16 * n)
        err = 0.0
        for x in xs:
            j = min(int((x - lo) / h), n - 1)
            err = max(err, abs(P.polyval(x - knots[j], coeffs[j]) - f(x)))
        if err <= tol or n >= max_pieces:
            return list(pw_breaks), coeffs
        n *= 2
