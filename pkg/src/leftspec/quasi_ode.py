"""First-order quasi-derivative system through measure coefficients.

The state (y, y1) with y1 = y' - Q2*y is propagated with an adaptive
Dormand-Prince 4(5) pair on the smooth pieces.  Densities live in Q1; only
atoms enter Q2, which is therefore a pure left-continuous jump staircase
anchored at the period boundaries.  Crossing an atom leaves the state vector
untouched (the classical derivative jump is absorbed by the definition of
y1); crossing a period boundary re-anchors the staircase, which shows up as
an explicit frame update of y1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from ._piecewise import PiecewisePoly, _shift_poly
from .errors import IntegrationError

__all__ = [
    "QuasiState",
    "SystemSlice",
    "Trajectory",
    "assemble_system",
    "integrate",
    "solution_basis",
    "wronskian",
]

_EDGE = 1e-13


@dataclass(frozen=True)
class QuasiState:
    """Solution data at a point: position, value and quasi-derivative."""

    x: float
    y: complex
    yq: complex


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution: positions, values, quasi-derivatives, staircase values."""

    xs: np.ndarray
    ys: np.ndarray
    yqs: np.ndarray
    q2s: np.ndarray

    def state(self, i):
        return QuasiState(float(self.xs[i]), complex(self.ys[i]), complex(self.yqs[i]))

    def yprime(self, i):
        """Classical derivative, left-limit staircase convention."""
        return complex(self.yqs[i] + self.q2s[i] * self.ys[i])


class SystemSlice:
    """Coefficients of the first-order system at a fixed spectral parameter z.

    On smooth pieces the right-hand side is [[Q2, 1], [Q1 - Q2^2, -Q2]] with
    Q1(x) = q1 + q_density(x) - z*r_density(x) and Q2 the atom staircase of
    q - z*r.  ``breakpoints`` lists every nonsmooth cell position.
    """

    def __init__(self, q, r, z):
        if not np.isclose(q.omega, r.omega):
            raise ValueError("potential and weight periods differ")
        self.omega = float(q.omega)
        pot = q.density
        rho = r.density
        merged = sorted(set(np.round(pot.breaks + rho.breaks, 15)))
        pot = pot.refine_breaks(merged)
        rho = rho.refine_breaks(merged)
        self._breaks = pot.breaks
        self._piece_upper = list(self._breaks[1:]) + [self.omega]
        self._pot_coeffs = pot.coeffs
        self._rho_coeffs = rho.coeffs
        self._q_const = float(q.q1)
        self._q_atoms = tuple(q.atoms)
        self._r_atoms = tuple(r.atoms)
        self._set_z(z)

    def _set_z(self, z):
        self.z = complex(z)
        self.q1 = complex(self._q_const)
        q1_coeffs = []
        for cp, cr in zip(self._pot_coeffs, self._rho_coeffs):
            n = max(cp.size, cr.size)
            cc = np.zeros(n, dtype=complex)
            cc[: cp.size] += cp
            cc[: cr.size] -= self.z * cr
            cc[0] += self._q_const
            q1_coeffs.append(cc)
        self._q1_coeffs = q1_coeffs
        jumps = {}
        for p, w in self._q_atoms:
            jumps[p] = jumps.get(p, 0.0) + w
        for p, w in self._r_atoms:
            jumps[p] = jumps.get(p, 0.0) - self.z * w
        self.atoms = tuple(sorted((p, complex(w)) for p, w in jumps.items()))
        self.total_jump = sum(w for _, w in self.atoms)

    def rebuilt(self, z):
        """A slice of the same pencil at a different spectral parameter."""
        import copy

        other = copy.copy(self)
        other._set_z(z)
        return other

    @property
    def breakpoints(self):
        pts = set(self._breaks) | {p for p, _ in self.atoms}
        return tuple(sorted(pts))

    # -- coefficient evaluation -------------------------------------------------

    def _piece_index(self, u):
        j = int(np.searchsorted(self._breaks, u + _EDGE, side="right") - 1)
        return min(max(j, 0), len(self._breaks) - 1)

    def Q1(self, x):
        """Density coefficient at x (right-continuous at piece boundaries)."""
        u = np.mod(x, self.omega)
        j = self._piece_index(u)
        return P.polyval(u - self._breaks[j], self._q1_coeffs[j])

    def Q2(self, x, side="left"):
        """Atom staircase value, anchored to zero at each period boundary."""
        u = np.mod(x, self.omega)
        if side == "left":
            return sum(w for p, w in self.atoms if p < u - _EDGE)
        return sum(w for p, w in self.atoms if p <= u + _EDGE)

    def rhs_matrix(self, x):
        """The 2x2 system matrix at a smooth point."""
        q2 = self.Q2(x)
        q1 = self.Q1(x)
        return np.array([[q2, 1.0], [q1 - q2 * q2, -q2]], dtype=complex)

    # -- event enumeration --------------------------------------------------------

    def _events_forward(self, a, b):
        """Events in [a, b): (position, kind, payload), kind in {atom, boundary}."""
        out = []
        om = self.omega
        k0 = int(np.floor(a / om + 1e-12))
        k1 = int(np.floor(b / om + 1e-12)) + 1
        for k in range(k0, k1 + 1):
            base = k * om
            if a - _EDGE < base < b - _EDGE and abs(base - a) > _EDGE:
                out.append((base, "boundary", None))
            for p, w in self.atoms:
                e = base + p
                if a - _EDGE <= e < b - _EDGE:
                    out.append((e, "atom", w))
        out.sort(key=lambda t: (t[0], t[1] == "atom"))  # boundary before atom at same x
        return out


def assemble_system(q, r, z):
    """Coefficient slice of the pencil q - z*r in quasi-derivative form."""
    return SystemSlice(q, r, z)


# -- Dormand-Prince 4(5) ----------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_ERR = _B5 - _B4


_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (
    9017 / 3168,
    -355 / 33,
    46732 / 5247,
    49 / 176,
    -5103 / 18656,
)
_B1, _B3, _B4, _B5c, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    35 / 384 - 5179 / 57600,
    500 / 1113 - 7571 / 16695,
    125 / 192 - 393 / 640,
    -2187 / 6784 + 92097 / 339200,
    11 / 84 - 187 / 2100,
    -1 / 40,
)


def _rk45_segment(q1_local, q2c, x0, x1, Y, rtol, atol, record=None):
    """Integrate Y' = M(x) Y over [x0, x1] with Q1 = poly(x - x0), Q2 = q2c.

    Dormand-Prince 4(5) with FSAL, written out on flat python scalars: the
    states here are 2x1 or 2x2, so numpy per-op overhead would dominate.
    """
    span = x1 - x0
    if span <= 0:
        return Y
    Yarr = np.asarray(Y, dtype=complex)
    shape = Yarr.shape
    ncol = 1 if Yarr.ndim == 1 else shape[1]
    v = list(Yarr.reshape(-1, order="F"))  # column-major pairs (y, yq)
    coef = [complex(cc) for cc in q1_local]
    crev = coef[::-1]
    q2sq = q2c * q2c

    def rhs(t, vv):
        q1 = 0.0 + 0.0j
        for cc in crev:
            q1 = q1 * t + cc
        a21 = q1 - q2sq
        out = [0.0j] * (2 * ncol)
        for j in range(ncol):
            y = vv[2 * j]
            w = vv[2 * j + 1]
            out[2 * j] = q2c * y + w
            out[2 * j + 1] = a21 * y - q2c * w
        return out

    t = 0.0
    scale0 = 1.0 + abs(P.polyval(0.5 * span, q1_local)) ** 0.5 + abs(q2c)
    h = min(span, 0.5 / scale0)
    k1 = rhs(t, v)
    nsteps = 0
    nv = 2 * ncol
    while t < span - 1e-15 * max(1.0, span):
        h = min(h, span - t)
        if h < 1e-14 * max(1.0, span):
            raise IntegrationError(f"step-size underflow at x = {x0 + t}")
        k2 = rhs(t + _C[1] * h, [v[i] + h * _A21 * k1[i] for i in range(nv)])
        k3 = rhs(
            t + _C[2] * h, [v[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in range(nv)]
        )
        k4 = rhs(
            t + _C[3] * h,
            [v[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i]) for i in range(nv)],
        )
        k5 = rhs(
            t + _C[4] * h,
            [
                v[i]
                + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
                for i in range(nv)
            ],
        )
        k6 = rhs(
            t + h,
            [
                v[i]
                + h
                * (
                    _A61 * k1[i]
                    + _A62 * k2[i]
                    + _A63 * k3[i]
                    + _A64 * k4[i]
                    + _A65 * k5[i]
                )
                for i in range(nv)
            ],
        )
        v5 = [
            v[i]
            + h
            * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5c * k5[i] + _B6 * k6[i])
            for i in range(nv)
        ]
        k7 = rhs(t + h, v5)
        enorm = 0.0
        ok = True
        for i in range(nv):
            err = h * (
                _E1 * k1[i]
                + _E3 * k3[i]
                + _E4 * k4[i]
                + _E5 * k5[i]
                + _E6 * k6[i]
                + _E7 * k7[i]
            )
            sc = atol + rtol * max(abs(v[i]), abs(v5[i]))
            q = abs(err) / sc
            if q != q or q == float("inf"):
                ok = False
                break
            enorm += q * q
        if not ok:
            raise IntegrationError(
                f"non-finite state near x = {x0 + t} (|z| too large?)"
            )
        enorm = (enorm / nv) ** 0.5
        if enorm <= 1.0:
            t += h
            v = v5
            k1 = k7  # FSAL
            if record is not None:
                record(x0 + t, np.array(v, dtype=complex).reshape(shape, order="F"))
            fac = 0.9 * (enorm + 1e-300) ** -0.2
        else:
            fac = max(0.2, 0.9 * enorm**-0.2)
            fac = min(fac, 1.0)
        h *= min(5.0, max(0.2, fac))
        nsteps += 1
        if nsteps > 500000:
            raise IntegrationError("step budget exhausted (pathological coefficients)")
    return np.array(v, dtype=complex).reshape(shape, order="F")


def _propagate(slice_, x0, Y0, x1, tol, record=None):
    """Propagate a state array from x0 to x1; returns (Y, q2run at x1).

    ``record(x, Y, q2run)`` is invoked at event points and accepted steps.
    """
    if x1 == x0:
        return Y0, slice_.Q2(x0)
    if x1 < x0:
        return _propagate_backward(slice_, x0, Y0, x1, tol, record)
    rtol = tol
    atol = tol * 1e-2
    q2run = slice_.Q2(x0)  # left-continuous: atom exactly at x0 fires ahead
    events = slice_._events_forward(x0, x1) + [(x1, "end", None)]
    Y = np.asarray(Y0, dtype=complex)
    x = x0
    rec = None
    if record is not None:
        rec = lambda xx, YY: record(xx, YY, q2run)
    for pos, kind, payload in events:
        if pos > x + _EDGE:
            u0 = np.mod(x, slice_.omega)
            j = slice_._piece_index(u0)
            # the smooth segment may span several polynomial pieces
            seg_start = x
            while seg_start < pos - _EDGE:
                u = np.mod(seg_start, slice_.omega)
                if abs(u - slice_.omega) < _EDGE:
                    u = 0.0
                j = slice_._piece_index(u)
                upper = slice_._piece_upper[j]
                seg_end = min(pos, seg_start + (upper - u))
                local = _shift_poly_c(slice_._q1_coeffs[j], u - slice_._breaks[j])
                Y = _rk45_segment(local, q2run, seg_start, seg_end, Y, rtol, atol, rec)
                seg_start = seg_end
            x = pos
        if kind == "atom":
            q2run += payload
            if record is not None:
                record(x, Y, q2run)
        elif kind == "boundary":
            Y = Y.copy()
            Y[1] = Y[1] + q2run * Y[0]
            q2run = 0.0
            if record is not None:
                record(x, Y, q2run)
    return Y, q2run


def _propagate_backward(slice_, x0, Y0, x1, tol, record=None):
    """Mirror of the forward pass for x1 < x0.

    Time reversal s = x0 - x maps (y, y1) to (y, -y1) and the system to the
    same quasi-derivative form with Q2 negated, so the forward stepper is
    reused on flipped data.
    """
    rtol = tol
    atol = tol * 1e-2
    q2run = slice_.Q2(x0)
    events = _events_backward(slice_, x1, x0) + [(x1, "end", None)]
    Y = np.asarray(Y0, dtype=complex)
    x = x0
    for pos, kind, payload in events:
        if pos < x - _EDGE:
            seg_start = x
            while seg_start > pos + _EDGE:
                u = np.mod(seg_start, slice_.omega)
                if u < _EDGE:
                    u = slice_.omega
                j = slice_._piece_index(u - 2 * _EDGE)
                lower = slice_._breaks[j]
                seg_end = max(pos, seg_start - (u - lower))
                shifted = _shift_poly_c(slice_._q1_coeffs[j], u - lower)
                signs = np.array([(-1.0) ** n for n in range(shifted.size)])
                Yf = _flip(Y)
                Yf = _rk45_segment(
                    shifted * signs, -q2run, 0.0, seg_start - seg_end, Yf, rtol, atol
                )
                Y = _flip(Yf)
                seg_start = seg_end
            x = pos
        if kind == "atom":
            q2run -= payload
        elif kind == "boundary":
            # undo the forward boundary rule: restore the pre-boundary frame
            q2run = slice_.total_jump
            Y = Y.copy()
            Y[1] = Y[1] - q2run * Y[0]
        if record is not None and kind != "end":
            record(x, Y, q2run)
    return Y, q2run


def _flip(Y):
    """Time reversal x -> -x maps (y, y1) to (y, -y1)."""
    Z = np.array(Y, dtype=complex, copy=True)
    Z[1] = -Z[1]
    return Z


def _events_backward(slice_, lo, hi):
    """Events crossed moving down from hi to lo, in crossing order.

    An atom exactly at the start hi is un-fired immediately (the forward pass
    fires atoms at the start, so the inverse path must revert them); an atom
    exactly at the destination lo is not crossed.  At a period boundary the
    co-located atom (cell position 0) is un-fired before the frame is
    restored.
    """
    out = []
    om = slice_.omega
    k0 = int(np.floor(lo / om - 1e-12))
    k1 = int(np.floor(hi / om + 1e-12)) + 1
    for k in range(k0, k1 + 1):
        base = k * om
        for p, w in slice_.atoms:
            e = base + p
            if lo + _EDGE < e <= hi + _EDGE:
                out.append((e, "atom", w))
        if lo + _EDGE < base < hi - _EDGE:
            out.append((base, "boundary", None))
    # descending positions; at equal position un-fire the atom first
    out.sort(key=lambda t: (-t[0], t[1] == "boundary"))
    return out


def _shift_poly_c(c, s):
    """Complex-coefficient version of the local-coordinate shift."""
    c = np.asarray(c, dtype=complex)
    n = c.size
    out = np.zeros(n, dtype=complex)
    from math import comb

    for j in range(n):
        for i in range(j + 1):
            out[i] += c[j] * comb(j, i) * s ** (j - i)
    return out


def integrate(slice_, state, to_x, tol=1e-10):
    """Propagate a quasi-state to ``to_x``; both directions supported.

    The state is continuous across every breakpoint; only period-boundary
    crossings update the quasi-derivative (staircase re-anchoring).  Raises
    IntegrationError on step-size underflow or non-finite growth.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    Y0 = np.array([state.y, state.yq], dtype=complex)
    Y, _ = _propagate(slice_, state.x, Y0, to_x, tol)
    return QuasiState(float(to_x), complex(Y[0]), complex(Y[1]))


def fundamental_matrix(slice_, c, tol=1e-10, restore_frame=True):
    """Period map on (y, y1) from c to c + omega in the frame anchored at c.

    With ``restore_frame`` the output quasi-derivatives are re-expressed with
    the staircase value at c, making the matrix a bona fide period map.
    """
    Y0 = np.eye(2, dtype=complex)
    q2_init = slice_.Q2(c)
    Y, q2_end = _propagate(slice_, c, Y0, c + slice_.omega, tol)
    if restore_frame:
        Y = Y.copy()
        Y[1, :] = Y[1, :] + (q2_end - q2_init) * Y[0, :]
    return Y


def solution_basis(slice_, c=0.0, tol=1e-10, grid=None):
    """Standard basis u1, u2 on [c, c + omega] as sampled trajectories.

    u1(c) = u2'(c) = 1 and u1'(c) = u2(c) = 0 in the quasi-derivative sense.
    Samples are taken at every accepted step and breakpoint, plus an optional
    user grid.
    """
    xs, Ys, q2s = [], [], []

    def record(x, Y, q2):
        xs.append(x)
        Ys.append(np.array(Y))
        q2s.append(q2)

    Y0 = np.eye(2, dtype=complex)
    record(c, Y0, slice_.Q2(c))
    if grid is not None:
        last = None
        Y = Y0
        x = c
        for g in sorted(set(list(grid) + [c + slice_.omega])):
            if g <= c or g > c + slice_.omega + _EDGE:
                continue
            Y, _ = _propagate(slice_, x, Y, g, tol, record)
            x = g
    else:
        _propagate(slice_, c, Y0, c + slice_.omega, tol, record)
    xs = np.array(xs)
    Ys = np.array(Ys)
    q2s = np.array(q2s)
    u1 = Trajectory(xs, Ys[:, 0, 0], Ys[:, 1, 0], q2s)
    u2 = Trajectory(xs, Ys[:, 0, 1], Ys[:, 1, 1], q2s)
    return u1, u2


def wronskian(f, g):
    """Modified Wronskian f * g1 - f1 * g of two states at the same point."""
    return f.y * g.yq - f.yq * g.y


# -- batched z-sweeps ---------------------------------------------------------
#
# Scans evaluate the same pencil at hundreds of spectral parameters; stepping
# them together with a shared adaptive step turns per-z python overhead into
# a handful of vectorized operations per stage.


def _rk45_batch(comb, q2c, span, S, rtol, atol):
    """Batched segment integrator: S = (y1, w1, y2, w2), each shaped (nz,).

    ``comb`` holds the combined Q1 coefficients, shape (deg + 1, nz); ``q2c``
    the per-z staircase values on this segment.
    """
    if span <= 0:
        return S
    y1, w1, y2, w2 = (s.copy() for s in S)
    q2sq = q2c * q2c
    deg = comb.shape[0]

    def q1_at(t):
        acc = comb[deg - 1].copy()
        for d in range(deg - 2, -1, -1):
            acc *= t
            acc += comb[d]
        return acc

    def rhs(t, st):
        a21 = q1_at(t) - q2sq
        u1, v1, u2, v2 = st
        return (
            q2c * u1 + v1,
            a21 * u1 - q2c * v1,
            q2c * u2 + v2,
            a21 * u2 - q2c * v2,
        )

    t = 0.0
    big = float(np.max(np.abs(q1_at(0.5 * span))))
    h = min(span, 0.5 / (1.0 + big**0.5 + float(np.max(np.abs(q2c)))))
    st = (y1, w1, y2, w2)
    k1 = rhs(t, st)
    guard = 0
    while t < span - 1e-15 * max(1.0, span):
        h = min(h, span - t)
        if h < 1e-14 * max(1.0, span):
            raise IntegrationError(f"batched step-size underflow at t = {t}")
        k2 = rhs(t + _C[1] * h, tuple(st[i] + (h * _A21) * k1[i] for i in range(4)))
        k3 = rhs(
            t + _C[2] * h,
            tuple(st[i] + h * (_A31 * k1[i] + _A32 * k2[i]) for i in range(4)),
        )
        k4 = rhs(
            t + _C[3] * h,
            tuple(
                st[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
                for i in range(4)
            ),
        )
        k5 = rhs(
            t + _C[4] * h,
            tuple(
                st[i]
                + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
                for i in range(4)
            ),
        )
        k6 = rhs(
            t + h,
            tuple(
                st[i]
                + h
                * (
                    _A61 * k1[i]
                    + _A62 * k2[i]
                    + _A63 * k3[i]
                    + _A64 * k4[i]
                    + _A65 * k5[i]
                )
                for i in range(4)
            ),
        )
        st5 = tuple(
            st[i]
            + h
            * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5c * k5[i] + _B6 * k6[i])
            for i in range(4)
        )
        k7 = rhs(t + h, st5)
        enorm = 0.0
        for i in range(4):
            err = h * (
                _E1 * k1[i]
                + _E3 * k3[i]
                + _E4 * k4[i]
                + _E5 * k5[i]
                + _E6 * k6[i]
                + _E7 * k7[i]
            )
            sc = atol + rtol * np.maximum(np.abs(st[i]), np.abs(st5[i]))
            enorm = max(enorm, float(np.max(np.abs(err) / sc)))
        if not np.isfinite(enorm):
            raise IntegrationError("non-finite state in batched sweep")
        if enorm <= 1.0:
            t += h
            st = st5
            k1 = k7
            fac = 0.9 * (enorm + 1e-300) ** -0.2
        else:
            fac = min(1.0, max(0.2, 0.9 * enorm**-0.2))
        h *= min(5.0, max(0.2, fac))
        guard += 1
        if guard > 500000:
            raise IntegrationError("batched step budget exhausted")
    return st


def fundamental_matrix_batch(slice_proto, zs, tol=1e-10, c=0.0):
    """Fixed-frame period maps for an array of spectral parameters.

    Returns an array of shape (nz, 2, 2).  ``slice_proto`` is any SystemSlice
    of the pencil (its z is ignored); the merged pieces are reused across the
    batch and all z values advance with a shared adaptive step.
    """
    zs = np.asarray(zs, dtype=complex)
    nz = zs.size
    om = slice_proto.omega
    rtol, atol = tol, tol * 1e-2
    # per-z atom jumps at each cell position
    qa = dict(slice_proto._q_atoms)
    ra = dict(slice_proto._r_atoms)
    positions = sorted(set(qa) | set(ra))
    jump_of = {
        p: np.full(nz, qa.get(p, 0.0), dtype=complex) - zs * ra.get(p, 0.0)
        for p in positions
    }

    def stair(u):
        acc = np.zeros(nz, dtype=complex)
        for p in positions:
            if p < u - _EDGE:
                acc += jump_of[p]
        return acc

    q2run = stair(np.mod(c, om))
    q2_init = q2run.copy()
    y1 = np.ones(nz, dtype=complex)
    w1 = np.zeros(nz, dtype=complex)
    y2 = np.zeros(nz, dtype=complex)
    w2 = np.ones(nz, dtype=complex)
    st = (y1, w1, y2, w2)

    a, b = c, c + om
    events = []
    k0 = int(np.floor(a / om + 1e-12))
    k1 = int(np.floor(b / om + 1e-12)) + 1
    for k in range(k0, k1 + 1):
        base = k * om
        if a - _EDGE < base < b - _EDGE and abs(base - a) > _EDGE:
            events.append((base, "boundary", None))
        for p in positions:
            e = base + p
            if a - _EDGE <= e < b - _EDGE:
                events.append((e, "atom", jump_of[p]))
    events.sort(key=lambda t: (t[0], t[1] == "atom"))
    events.append((b, "end", None))
    x = c
    for pos, kind, payload in events:
        if pos > x + _EDGE:
            seg_start = x
            while seg_start < pos - _EDGE:
                u = np.mod(seg_start, om)
                if abs(u - om) < _EDGE:
                    u = 0.0
                j = slice_proto._piece_index(u)
                upper = slice_proto._piece_upper[j]
                seg_end = min(pos, seg_start + (upper - u))
                cp = _shift_poly_c(
                    np.asarray(slice_proto._pot_coeffs[j], dtype=complex),
                    u - slice_proto._breaks[j],
                )
                cr = _shift_poly_c(
                    np.asarray(slice_proto._rho_coeffs[j], dtype=complex),
                    u - slice_proto._breaks[j],
                )
                deg = max(cp.size, cr.size)
                comb = np.zeros((deg, nz), dtype=complex)
                comb[: cp.size, :] += cp[:, None]
                comb[: cr.size, :] -= zs[None, :] * cr[:, None]
                comb[0, :] += slice_proto._q_const
                st = _rk45_batch(comb, q2run, seg_end - seg_start, st, rtol, atol)
                seg_start = seg_end
            x = pos
        if kind == "atom":
            q2run = q2run + payload
        elif kind == "boundary":
            st = (st[0], st[1] + q2run * st[0], st[2], st[3] + q2run * st[2])
            q2run = np.zeros(nz, dtype=complex)
    # restore the starting frame
    delta = q2run - q2_init
    st = (st[0], st[1] + delta * st[0], st[2], st[3] + delta * st[2])
    out = np.empty((nz, 2, 2), dtype=complex)
    out[:, 0, 0] = st[0]
    out[:, 1, 0] = st[1]
    out[:, 0, 1] = st[2]
    out[:, 1, 1] = st[3]
    return out
