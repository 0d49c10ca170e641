"""Coefficient classes for the period cell: potentials, weights, Miura fields.

A potential is stored in measure form: a constant, an absolutely continuous
density (piecewise polynomial) and a finite list of atoms.  The equivalent
primitive representation -- the periodic, mean-zero q2 whose distributional
derivative together with the constant reproduces the potential -- is derived
on demand; the free additive constant in that primitive is fixed by the
mean-zero gauge so serialized models are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._piecewise import PiecewisePoly, fit_callable
from .errors import ConfigError, EngineError

__all__ = [
    "PeriodicPotential",
    "SignedWeight",
    "MiuraField",
    "ModelSpec",
    "miura_forward",
    "jordan_decompose",
    "loc_unif_seminorm",
    "yafaev_check",
    "build_model",
    "step_field",
]

_ATOL = 1e-12


def _normalize_atoms(omega, atoms, inside_only=False):
    out = []
    for pos, w in atoms:
        w = float(w)
        if w == 0.0:
            raise ValueError("atom weights must be nonzero")
        p = float(np.mod(pos, omega))
        if inside_only and (p < _ATOL or p > omega - _ATOL):
            raise ValueError("weight atoms must lie strictly inside the cell")
        out.append((p, w))
    out.sort()
    for (p1, _), (p2, _) in zip(out, out[1:]):
        if abs(p1 - p2) <= _ATOL:
            raise ValueError("atom positions must be distinct")
    return tuple(out)


def _primitive_with_atoms(omega, density, atoms):
    """Periodic mean-zero primitive of (density + atoms - their mean)."""
    m_tot = (density.integral_cell() + sum(w for _, w in atoms)) / omega
    ramp = PiecewisePoly(omega, (0.0,), (np.array([0.0, -m_tot]),))
    g = density.antiderivative() + ramp
    if atoms:
        g = g.refine_breaks([p for p, _ in atoms])
        acc = 0.0
        pieces = []
        for j, c in enumerate(g.coeffs):
            b = g.breaks[j]
            acc += sum(w for p, w in atoms if abs(p - b) <= _ATOL)
            cc = c.copy()
            cc[0] += acc
            pieces.append(cc)
        g = PiecewisePoly(omega, g.breaks, tuple(pieces))
    return g - g.mean(), m_tot


@dataclass(frozen=True)
class PeriodicPotential:
    """Distributional potential q1 + density + sum of atoms on a period cell."""

    omega: float
    q1: float = 0.0
    density: PiecewisePoly = None
    atoms: tuple = ()

    def __post_init__(self):
        if self.density is None:
            object.__setattr__(self, "density", PiecewisePoly.zero(self.omega))
        if not np.isclose(self.density.omega, self.omega):
            raise ValueError("density period mismatch")
        object.__setattr__(self, "atoms", _normalize_atoms(self.omega, self.atoms))

    @classmethod
    def constant(cls, omega, q1):
        return cls(omega, q1=float(q1))

    @classmethod
    def from_q2(cls, omega, q1, q2):
        """Build from a primitive: q = q1 + q2'.

        The smooth variation of the pieces becomes the density; the implied
        jumps of q2 (interior mismatches, plus the period-boundary mismatch)
        become atoms.
        """
        jumps = q2.jumps(tol=_ATOL)
        return cls(omega, q1=float(q1), density=q2.derivative(), atoms=tuple(jumps))

    # -- derived views --------------------------------------------------------

    @property
    def q2_canonical(self):
        """The periodic, mean-zero primitive q2 (canonical gauge)."""
        g, _ = _primitive_with_atoms(self.omega, self.density, self.atoms)
        return g

    @property
    def q1_canonical(self):
        """Constant paired with `q2_canonical`: q = q1_canonical + q2_canonical'."""
        _, m_tot = _primitive_with_atoms(self.omega, self.density, self.atoms)
        return self.q1 + m_tot

    @property
    def q2_pieces(self):
        q2 = self.q2_canonical
        return [(b, list(c)) for b, c in zip(q2.breaks, q2.coeffs)]

    @property
    def q2_jumps(self):
        return self.q2_canonical.jumps(tol=1e-10)

    def shifted(self, c):
        """The potential q + c (constant added to q1)."""
        return PeriodicPotential(self.omega, self.q1 + c, self.density, self.atoms)

    def gauge_moved(self, c):
        """Same distribution with constant c moved from q1 into the density."""
        return PeriodicPotential(
            self.omega, self.q1 - c, self.density + float(c), self.atoms
        )


@dataclass(frozen=True)
class SignedWeight:
    """Signed measure on the cell: piecewise-polynomial density plus atoms."""

    omega: float
    density: PiecewisePoly = None
    atoms: tuple = ()

    def __post_init__(self):
        if self.density is None:
            object.__setattr__(self, "density", PiecewisePoly.zero(self.omega))
        if not np.isclose(self.density.omega, self.omega):
            raise ValueError("density period mismatch")
        object.__setattr__(
            self, "atoms", _normalize_atoms(self.omega, self.atoms, inside_only=True)
        )

    @classmethod
    def constant(cls, omega, r1):
        return cls(omega, density=PiecewisePoly.constant(omega, r1))

    def total_variation(self):
        return self.density.abs().integral_cell() + sum(abs(w) for _, w in self.atoms)

    def total_mass(self):
        return self.density.integral_cell() + sum(w for _, w in self.atoms)

    def is_vanishing(self):
        return self.total_variation() <= _ATOL


@dataclass(frozen=True)
class MiuraField:
    """Real field phi of bounded variation with square-integrable pieces."""

    omega: float
    phi: PiecewisePoly

    def __post_init__(self):
        if not np.isclose(self.phi.omega, self.omega):
            raise ValueError("phi period mismatch")

    @classmethod
    def from_callable(cls, omega, f, tol=1e-10):
        return cls(omega, fit_callable(f, omega, tol=tol))

    def mean(self):
        return self.phi.mean()

    def jumps(self):
        return self.phi.jumps(tol=_ATOL)


def step_field(alpha, x0, omega):
    """The circle version of (alpha/2)*sgn(x - x0): -a/2 before x0, +a/2 after."""
    x0 = float(np.mod(x0, omega))
    if x0 <= _ATOL or x0 >= omega - _ATOL:
        raise ValueError("step position must be strictly inside the cell")
    phi = PiecewisePoly(
        omega, (0.0, x0), (np.array([-alpha / 2.0]), np.array([alpha / 2.0]))
    )
    return MiuraField(omega, phi)


def miura_forward(phi, sign="partner1"):
    """Map a field to its partner potential phi^2 -/+ phi'.

    ``partner1`` produces phi**2 - phi' and ``partner2`` produces
    phi**2 + phi'.  The constant part is the cell mean of phi**2; the
    primitive is -/+ phi plus the mean-zero antiderivative of phi**2, so the
    jumps of phi turn into atoms of the potential.
    """
    if sign not in ("partner1", "partner2"):
        raise ValueError("sign must be 'partner1' or 'partner2'")
    s = -1.0 if sign == "partner1" else 1.0
    sq = phi.phi.square()
    q1 = sq.mean()
    wiggle = (sq - q1).antiderivative()
    q2 = s * phi.phi + wiggle
    q2 = q2 - q2.mean()
    return PeriodicPotential.from_q2(phi.omega, q1, q2)


def jordan_decompose(w):
    """Split a signed weight into mutually singular nonnegative parts.

    Returns (positive part, negative part) with w = plus - minus; density
    pieces are subdivided at their sign changes and atoms split by the sign
    of their weight.
    """
    try:
        dpos, dneg = w.density.split_by_sign()
    except ArithmeticError as exc:
        raise EngineError("coefficients", str(exc)) from exc
    apos = tuple((p, v) for p, v in w.atoms if v > 0)
    aneg = tuple((p, -v) for p, v in w.atoms if v < 0)
    return (
        SignedWeight(w.omega, density=dpos, atoms=apos),
        SignedWeight(w.omega, density=dneg, atoms=aneg),
    )


def _window_extremum(g, length, mode):
    """Extremize W(a) = integral of g over [a, a+length], a in [0, omega).

    The candidate set is exact: points where either end of the window crosses
    a piece boundary, plus interior roots of W'(a) = g(a+length) - g(a).
    Returns (value, argument).
    """
    from numpy.polynomial import polynomial as P

    from ._piecewise import _shift_poly

    omega = g.omega
    ell = float(length)
    cand = set()
    for b in g.breaks:
        cand.add(float(np.mod(b, omega)))
        cand.add(float(np.mod(b - ell, omega)))
    cand.add(0.0)
    cand = sorted(cand)
    spans = list(zip(cand, cand[1:] + [omega]))

    best_val, best_arg = None, None

    def consider(a):
        nonlocal best_val, best_arg
        v = g.integrate(a, a + ell)
        if best_val is None or (v > best_val if mode == "max" else v < best_val):
            best_val, best_arg = v, a

    for a1, a2 in spans:
        if a2 - a1 <= 1e-14:
            consider(a1)
            continue
        consider(a1)
        mid = 0.5 * (a1 + a2)
        jr = g._piece_index_right(g._wrap(mid))
        jl = g._piece_index_right(g._wrap(mid + ell))
        # W'(a) as a polynomial in s = a - a1 on this span
        lead = _shift_poly(g.coeffs[jl], g._wrap(a1 + ell) - g.breaks[jl])
        trail = _shift_poly(g.coeffs[jr], g._wrap(a1) - g.breaks[jr])
        dW = P.polysub(lead, trail)
        dW = np.trim_zeros(np.atleast_1d(dW), "b")
        if dW.size > 1:
            for z in P.polyroots(dW):
                if abs(z.imag) < 1e-9 and 0 < z.real < a2 - a1:
                    consider(a1 + z.real)
        consider(min(a2, omega * (1 - 1e-16)))
    return best_val, best_arg


def loc_unif_seminorm(f, p, a_len):
    """sup over window starts of the L^p mass on a window of given length.

    ``f`` may be a PiecewisePoly or a coefficient object exposing a periodic
    piecewise density; p is 1 or 2.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if not a_len > 0:
        raise ValueError("window length must be positive")
    pw = f if isinstance(f, PiecewisePoly) else f.density
    g = pw.abs() if p == 1 else pw.square()
    val, _ = _window_extremum(g, a_len, "max")
    return val


def yafaev_check(q, a, c0):
    """Positivity criterion: inf over x of the window integral of q is >= c0.

    Defined for potentials with integrable density only; atoms are rejected.
    """
    if q.atoms:
        raise ValueError("criterion requires a locally integrable potential (no atoms)")
    if not (a > 0 and c0 > 0):
        raise ValueError("window length and threshold must be positive")
    val, _ = _window_extremum(q.density, a, "min")
    return val + q.q1 * a >= c0


@dataclass(frozen=True)
class ModelSpec:
    """Named preset with parameters, e.g. ModelSpec('constant', {'q1': 1, 'r1': 1})."""

    name: str
    params: dict = field(default_factory=dict)


_PRESETS = {}


def _preset(name):
    def deco(fn):
        _PRESETS[name] = fn
        return fn

    return deco


@_preset("constant")
def _model_constant(q1, r1, omega=1.0):
    if r1 == 0:
        raise ValueError("constant weight r1 must be nonzero")
    return (
        PeriodicPotential.constant(omega, q1),
        SignedWeight.constant(omega, r1),
    )


@_preset("kronig_penney")
def _model_kronig_penney(alpha, omega=2.0 * np.pi):
    if alpha == 0:
        raise ValueError("coupling alpha must be nonzero")
    q = PeriodicPotential(omega, q1=0.0, atoms=((0.0, float(alpha)),))
    return q, SignedWeight.constant(omega, 1.0)


@_preset("step_weight")
def _model_step_weight(omega=2.0 * np.pi, q1=1.0):
    rho = PiecewisePoly(
        omega, (0.0, omega / 2.0), (np.array([1.0]), np.array([-1.0]))
    )
    return (
        PeriodicPotential.constant(omega, q1),
        SignedWeight(omega, density=rho),
    )


@_preset("ch_peakon")
def _model_ch_peakon(omega=2.0, amplitude=1.0, fit_tol=1e-9):
    """Peakon-shaped profile u with one interior corner; weight u'' - 4u.

    u is C^1 at the period boundary and has a corner at omega/2, so the weight
    is the smooth density u'' - 4u = -3u plus a single corner atom of weight
    equal to the derivative jump of u.
    """
    if amplitude == 0:
        raise ValueError("amplitude must be nonzero")
    half = omega / 2.0

    def u(x):
        x = np.mod(x, omega)
        return amplitude * np.cosh(half - abs(x - half))

    density = fit_callable(lambda x: -3.0 * u(x), omega, tol=fit_tol, kinks=(half,))
    corner_jump = -2.0 * amplitude * np.sinh(half)
    weight = SignedWeight(omega, density=density, atoms=((half, corner_jump),))
    return PeriodicPotential.constant(omega, 1.0), weight


@_preset("miura_step")
def _model_miura_step(alpha, x0, omega=2.0 * np.pi, sign="partner2"):
    q = miura_forward(step_field(alpha, x0, omega), sign=sign)
    return q, SignedWeight.constant(omega, 1.0)


def build_model(spec):
    """Instantiate a named preset; returns (PeriodicPotential, SignedWeight)."""
    if spec.name not in _PRESETS:
        raise ConfigError(
            f"unknown model preset {spec.name!r}; "
            f"known presets: {sorted(_PRESETS)}"
        )
    try:
        return _PRESETS[spec.name](**spec.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for preset {spec.name!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid parameters for preset {spec.name!r}: {exc}") from exc
