"""Monodromy, discriminant, conditional stability bands, theta eigenvalues.

Root localization is always scan-plus-bisection; the scan grid is spaced
uniformly in sqrt(|z|) on either side of the origin to track the natural
oscillation scale of the discriminant.  Double roots at band touchings are
pinned through the off-diagonal monodromy entry, which vanishes transversally
there, instead of through the noise-limited extremum of the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import EngineError
from .quasi_ode import SystemSlice, fundamental_matrix, fundamental_matrix_batch

__all__ = [
    "Monodromy",
    "BandSet",
    "ThetaEigenvalues",
    "monodromy",
    "discriminant",
    "stability_intervals",
    "theta_eigenvalues",
]

# tangency is declared when the extremum of |trace -/+ 2| is below this
TANGENCY_TOL = 1e-7
# extremum candidates enter the tangency pipeline below this coarse level
CANDIDATE_WINDOW = 0.05


@dataclass(frozen=True)
class Monodromy:
    """Period map in the (u1, u2) basis with its determinant defect."""

    z: complex
    m11: complex
    m12: complex
    m21: complex
    m22: complex
    det_residual: float

    @property
    def matrix(self):
        return np.array([[self.m11, self.m12], [self.m21, self.m22]])

    @property
    def trace(self):
        return self.m11 + self.m22


@dataclass(frozen=True)
class BandSet:
    """Conditional stability set as closed intervals, plus scan metadata."""

    intervals: tuple
    components: tuple
    scan_range: tuple
    n_scan: int
    warnings: tuple = ()


@dataclass(frozen=True)
class ThetaEigenvalues:
    """Sorted quasi-periodic eigenvalues with multiplicities."""

    theta: float
    values: tuple
    multiplicities: tuple
    unresolved: tuple = ()

    def with_repeats(self):
        out = []
        for v, m in zip(self.values, self.multiplicities):
            out.extend([v] * m)
        return out


class _Pencil:
    """Caches the merged coefficient pieces so z-sweeps assemble slices cheaply."""

    def __init__(self, q, r):
        self.q = q
        self.r = r
        self._proto = SystemSlice(q, r, 0.0)

    def slice(self, z):
        return self._proto.rebuilt(z)

    def trace(self, z, tol, c=0.0):
        M = fundamental_matrix(self.slice(z), c, tol=tol)
        return M[0, 0] + M[1, 1]

    def m12(self, z, tol, c=0.0):
        M = fundamental_matrix(self.slice(z), c, tol=tol)
        return M[0, 1]

    def trace_batch(self, zs, tol, c=0.0):
        M = fundamental_matrix_batch(self._proto, zs, tol=tol, c=c)
        return M[:, 0, 0] + M[:, 1, 1]


def monodromy(q, r, z, tol=1e-10, c=0.0):
    """Monodromy matrix of the pencil at spectral parameter z."""
    M = fundamental_matrix(SystemSlice(q, r, z), c, tol=tol)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return Monodromy(
        z=complex(z),
        m11=complex(M[0, 0]),
        m12=complex(M[0, 1]),
        m21=complex(M[1, 0]),
        m22=complex(M[1, 1]),
        det_residual=float(abs(det - 1.0)),
    )


def discriminant(q, r, z, tol=1e-10, c=0.0):
    """Trace of the monodromy matrix at real z (a real number)."""
    if abs(complex(z).imag) > 0:
        raise ValueError("the discriminant is defined for real z")
    m = monodromy(q, r, float(z), tol=tol, c=c)
    tr = m.trace
    if abs(tr.imag) > 10.0 * tol * (1.0 + abs(tr.real)):
        raise EngineError(
            "floquet", f"imaginary trace residue {tr.imag:.3e} at z = {z}"
        )
    return tr.real


def _sqrt_grid(zmin, zmax, density, n_min=8):
    """Scan grid, uniform in sqrt(|z|) on each side of the origin."""
    pts = []
    if zmin < 0:
        lo = np.sqrt(-zmin)
        hi = np.sqrt(max(-min(zmax, 0.0), 0.0))
        n = max(int(np.ceil((lo - hi) * density)), n_min)
        pts.extend(-np.linspace(lo, hi, n + 1) ** 2)
    if zmax > 0:
        lo = np.sqrt(max(zmin, 0.0))
        hi = np.sqrt(zmax)
        n = max(int(np.ceil((hi - lo) * density)), n_min)
        pts.extend(np.linspace(lo, hi, n + 1) ** 2)
    out = np.unique(np.clip(np.array(sorted(pts)), zmin, zmax))
    return out


def stability_intervals(q, r, z_range, n_scan=None, tol=1e-10, c=0.0, density=40.0):
    """Closed intervals where |trace| <= 2 in the given range.

    Endpoints are refined by bracketed root-finding on trace -/+ 2.  Both the
    merged intervals and the closures of the open components (which may share
    endpoints at band touchings) are returned.
    """
    zmin, zmax = float(z_range[0]), float(z_range[1])
    if not zmin < zmax:
        raise ValueError("empty scan range")
    pen = _Pencil(q, r)
    if n_scan is not None:
        if n_scan < 2:
            raise ValueError("need at least two scan points")
        grid = np.linspace(zmin, zmax, int(n_scan))
    else:
        grid = _sqrt_grid(zmin, zmax, density)
    tr = pen.trace_batch(grid, tol, c).real
    warnings = []
    for i in range(len(grid) - 1):
        if tr[i] > 2.0 and tr[i + 1] < -2.0 or tr[i] < -2.0 and tr[i + 1] > 2.0:
            warnings.append(
                f"scan gap ({grid[i]:.6g}, {grid[i + 1]:.6g}) jumps across both "
                "trace levels; a band may be unresolved at this resolution"
            )
    inside = np.abs(tr) <= 2.0

    def edge(i, j):
        """Refine the band edge between grid[i] (sign f_i) and grid[j]."""
        level = 2.0 if max(tr[i], tr[j]) > 2.0 else -2.0
        f = lambda z: pen.trace(z, tol, c).real - level
        return brentq(f, grid[i], grid[j], xtol=tol)

    intervals = []
    i = 0
    n = len(grid)
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        lo = grid[i] if i == 0 else edge(i - 1, i)
        hi = grid[j] if j == n - 1 else edge(j + 1, j)
        intervals.append((float(lo), float(hi)))
        i = j + 1
    merged = []
    for lo, hi in intervals:
        if merged and lo - merged[-1][1] <= max(10 * tol, 1e-12) * (1 + abs(lo)):
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    components = _split_components(pen, merged, grid, tr, tol, c)
    return BandSet(
        intervals=tuple(merged),
        components=tuple(components),
        scan_range=(zmin, zmax),
        n_scan=len(grid),
        warnings=tuple(warnings),
    )


def _split_components(pen, merged, grid, tr, tol, c):
    """Cut merged intervals at interior band touchings (|trace| reaching 2)."""
    comps = []
    for lo, hi in merged:
        cuts = []
        idx = [i for i, z in enumerate(grid) if lo < z < hi]
        for i in idx:
            if i == 0 or i == len(grid) - 1:
                continue
            f = np.abs(tr) - 2.0
            if f[i] >= f[i - 1] or f[i] >= f[i + 1]:
                continue
            if f[i] < -CANDIDATE_WINDOW:
                continue
            # interior extremum of |trace| close to 2: candidate touching
            g = lambda z: abs(pen.trace(z, tol, c).real) - 2.0
            res = minimize_scalar(
                lambda z: -g(z), bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                options={"xatol": 1e-10},
            )
            if abs(g(res.x)) < TANGENCY_TOL:
                cuts.append(float(res.x))
        pieces = sorted([lo] + cuts + [hi])
        comps.extend((a, b) for a, b in zip(pieces, pieces[1:]))
    return comps


def theta_eigenvalues(
    q, r, theta, z_range, tol=1e-10, c=0.0, density=40.0, n_scan=None
):
    """Roots of trace(M(z)) = 2 cos(theta) in the range, with multiplicities.

    For theta in {0, pi} tangent double roots are located through the zero of
    the off-diagonal entry m12 (the period map is +/-identity there), which
    crosses transversally and is therefore bisectable to full precision.
    """
    theta = float(theta)
    if not 0.0 <= theta < 2.0 * np.pi:
        raise ValueError("theta must lie in [0, 2*pi)")
    target = 2.0 * np.cos(theta)
    at_edge = abs(abs(target) - 2.0) < 1e-13
    zmin, zmax = float(z_range[0]), float(z_range[1])
    pen = _Pencil(q, r)
    grid = (
        np.linspace(zmin, zmax, int(n_scan))
        if n_scan is not None
        else _sqrt_grid(zmin, zmax, density)
    )
    fv = pen.trace_batch(grid, tol, c).real - target

    f = lambda z: pen.trace(z, tol, c).real - target
    simple = []
    for i in range(len(grid) - 1):
        if fv[i] == 0.0:
            simple.append(float(grid[i]))
        elif fv[i] * fv[i + 1] < 0.0:
            simple.append(float(brentq(f, grid[i], grid[i + 1], xtol=tol)))
    if fv[-1] == 0.0:
        simple.append(float(grid[-1]))

    roots = []
    unresolved = []
    if at_edge:
        # merge bisection pairs that are actually one tangency split by noise
        simple_sorted = sorted(simple)
        used = [False] * len(simple_sorted)
        i = 0
        while i < len(simple_sorted):
            if (
                i + 1 < len(simple_sorted)
                and simple_sorted[i + 1] - simple_sorted[i]
                < 1e-4 * (1.0 + abs(simple_sorted[i]))
            ):
                z0, z1 = simple_sorted[i], simple_sorted[i + 1]
                w = max(1e-3 * (1 + abs(z0)), 10 * (z1 - z0))
                zr = _refine_tangency(pen, f, z0 - w, z1 + w, tol, c)
                if zr is not None:
                    roots.append((zr, 2))
                else:
                    roots.append((z0, 1))
                    roots.append((z1, 1))
                i += 2
            else:
                roots.append((simple_sorted[i], 1))
                i += 1
        # extremum candidates that never cross the level
        for i in range(1, len(grid) - 1):
            s = np.sign(fv[i])
            if s == 0 or np.sign(fv[i - 1]) != s or np.sign(fv[i + 1]) != s:
                continue
            if not (abs(fv[i]) <= abs(fv[i - 1]) and abs(fv[i]) <= abs(fv[i + 1])):
                continue
            if abs(fv[i]) > CANDIDATE_WINDOW:
                continue
            lo, hi = grid[i - 1], grid[i + 1]
            # f keeps the sign s near a tangency; push it toward zero
            sgn = 1.0 if s > 0 else -1.0
            res = minimize_scalar(
                lambda z: sgn * f(z), bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12},
            )
            fext = f(res.x)
            if abs(fext) < TANGENCY_TOL:
                zr = _refine_tangency(pen, f, lo, hi, tol, c)
                if zr is not None:
                    roots.append((zr, 2))
                else:
                    unresolved.append((float(lo), float(hi)))
            elif abs(fext) < 10 * TANGENCY_TOL:
                unresolved.append((float(lo), float(hi)))
    else:
        roots = [(z, 1) for z in simple]

    roots.sort()
    return ThetaEigenvalues(
        theta=theta,
        values=tuple(z for z, _ in roots),
        multiplicities=tuple(m for _, m in roots),
        unresolved=tuple(unresolved),
    )


def _refine_tangency(pen, f, lo, hi, tol, c):
    """Pin a double root through the transversal zero of m12; None if absent."""
    g = lambda z: pen.m12(z, tol, c).real
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        return None
    zr = brentq(g, lo, hi, xtol=tol)
    if abs(f(zr)) < 100 * TANGENCY_TOL:
        return float(zr)
    return None
