import numpy as np
import pytest

from leftspec import (
    MiuraField,
    PeriodicPotential,
    PiecewisePoly,
    SignedWeight,
)


@pytest.fixture
def om2pi():
    return 2.0 * np.pi


@pytest.fixture
def constant_11(om2pi):
    """q = 1, r = 1 on a 2*pi cell."""
    return (
        PeriodicPotential.constant(om2pi, 1.0),
        SignedWeight.constant(om2pi, 1.0),
    )


@pytest.fixture
def free(om2pi):
    return (
        PeriodicPotential.constant(om2pi, 0.0),
        SignedWeight.constant(om2pi, 1.0),
    )


@pytest.fixture(scope="session")
def cos_field():
    return MiuraField.from_callable(2.0 * np.pi, np.cos, tol=1e-11)


@pytest.fixture(scope="session")
def half_plus_cos_field():
    return MiuraField.from_callable(2.0 * np.pi, lambda x: 0.5 + np.cos(x), tol=1e-11)


def random_potential(rng, omega=None, positive=True):
    """Small random piecewise potential; positive=True keeps the form definite."""
    omega = omega or float(rng.uniform(1.0, 2 * np.pi))
    npc = int(rng.integers(1, 4))
    breaks = np.sort(rng.uniform(0.05, omega * 0.95, size=npc - 1)) if npc > 1 else []
    breaks = tuple([0.0] + [float(b) for b in breaks])
    coeffs = tuple(rng.uniform(-0.4, 0.4, size=int(rng.integers(1, 4))) for _ in breaks)
    dens = PiecewisePoly(omega, breaks, coeffs)
    atoms = []
    for _ in range(int(rng.integers(0, 3))):
        pos = float(rng.uniform(0.0, omega * 0.999))
        w = float(rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0]))
        if positive:
            w = abs(w)
        if all(abs(pos - p) > 1e-3 for p, _ in atoms):
            atoms.append((pos, w))
    q1 = float(rng.uniform(0.8, 2.0)) if positive else float(rng.uniform(-0.5, 0.5))
    return PeriodicPotential(omega, q1, dens, tuple(atoms))


def random_weight(rng, omega):
    npc = int(rng.integers(1, 4))
    breaks = np.sort(rng.uniform(0.05, omega * 0.95, size=npc - 1)) if npc > 1 else []
    breaks = tuple([0.0] + [float(b) for b in breaks])
    coeffs = tuple(rng.uniform(-1.0, 1.0, size=int(rng.integers(1, 3))) for _ in breaks)
    dens = PiecewisePoly(omega, breaks, coeffs)
    atoms = []
    for _ in range(int(rng.integers(0, 3))):
        pos = float(rng.uniform(omega * 0.05, omega * 0.95))
        w = float(rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0]))
        if all(abs(pos - p) > 1e-3 for p, _ in atoms):
            atoms.append((pos, w))
    return SignedWeight(omega, dens, tuple(atoms))
