"""Test-side oracles kept independent of the library code paths they check."""

import numpy as np

from belfilt.operators import dag


def hermitian_basis(dim):
    """A real basis of Hermitian dim x dim matrices."""
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            s = np.zeros((dim, dim), dtype=complex)
            s[i, j] = s[j, i] = 1.0
            basis.append(s)
            a = np.zeros((dim, dim), dtype=complex)
            a[i, j] = -1j
            a[j, i] = 1j
            basis.append(a)
    return basis


def heisenberg_generator(x, h, ls):
    """Brute-force i[H,X] + sum (L*XL - {L*L,X}/2), written independently."""
    out = 1j * (h @ x - x @ h)
    for l in ls:
        out = out + dag(l) @ x @ l - 0.5 * (dag(l) @ l @ x + x @ dag(l) @ l)
    return out


def heisenberg_zakai_homodyne(sigma_of, h, l, dy, dt, gain=1.0):
    """One functional step of the unnormalized diffusive filter: given the
    functional X -> sigma(X) (as a callable), return the stepped functional
    evaluated lazily.  This mirrors the operator-valued equation with no
    reference to density-matrix propagation."""

    def stepped(x):
        return (
            sigma_of(x)
            + sigma_of(heisenberg_generator(x, h, [l])) * dt
            + gain * sigma_of(dag(l) @ x + x @ l) * dy
        )

    return stepped


def heisenberg_zakai_counting(sigma_of, h, l, dy, dt):
    def stepped(x):
        return (
            sigma_of(x)
            + sigma_of(heisenberg_generator(x, h, [l])) * dt
            + sigma_of(dag(l) @ x @ l - x) * (dy - dt)
        )

    return stepped


def random_commuting_normals(dim, n_generators, rng, integer_spectrum=True):
    """Commuting normal matrices sharing a random orthonormal eigenbasis."""
    u, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    gens = []
    for _ in range(n_generators):
        if integer_spectrum:
            vals = rng.integers(-2, 3, size=dim).astype(complex)
        else:
            vals = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        gens.append(u @ np.diag(vals) @ dag(u))
    return gens, u


def commutant_element(projections, rng):
    """A random operator commuting with every projection: compress a random
    matrix block by block."""
    dim = projections[0].shape[0]
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return sum(p @ m @ p for p in projections)
