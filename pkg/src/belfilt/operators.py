"""Finite-dimensional operator algebra for open quantum systems.

Operators are plain complex ndarrays.  A ``SystemModel`` bundles a Hermitian
Hamiltonian H with coupling channels L_j; the Heisenberg-picture generator is

    L(X) = i[H, X] + sum_j ( L_j* X L_j - (1/2){L_j* L_j, X} )

and ``lindblad_adjoint`` is its trace dual acting on density matrices.  The
reduced semigroup exp(tL') is evaluated through the matrix exponential of the
vectorized generator.

Qubit helpers use the basis ordering (|g>, |e>), so the lowering operator
maps |e> to |g> and sigma_z = diag(-1, +1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch, ValidationError

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-10

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, 1.0j], [-1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
GROUND = np.array([1.0, 0.0], dtype=complex)
EXCITED = np.array([0.0, 1.0], dtype=complex)


def dag(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return m.conj().T


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def as_operator(m, name: str = "operator") -> np.ndarray:
    """Coerce to a square complex matrix, rejecting non-finite entries."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"{name}: expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name}: dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: entries must be finite")
    return arr


def hermiticity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dag(m)))) if m.size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return hermiticity_defect(m) <= tol


def _frozen(m: np.ndarray) -> np.ndarray:
    out = np.array(m, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DensityState:
    """Density matrix: Hermitian, unit trace, positive semidefinite.

    Tolerances are 1e-10 on Hermiticity and trace and -1e-10 on the smallest
    eigenvalue; validation happens at construction and the stored matrix is
    read-only, so instances are safe to share.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = as_operator(self.matrix, "density matrix")
        defect = hermiticity_defect(m)
        if defect > HERMITICITY_TOL:
            raise ValidationError(f"density matrix: not Hermitian (defect {defect:.3e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"density matrix: trace {tr} is not 1 within {TRACE_TOL}")
        lowest = float(np.linalg.eigvalsh(0.5 * (m + dag(m))).min())
        if lowest < EIGENVALUE_FLOOR:
            raise ValidationError(f"density matrix: minimum eigenvalue {lowest:.3e} below {EIGENVALUE_FLOOR}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_vector(cls, psi) -> "DensityState":
        v = np.asarray(psi, dtype=complex).reshape(-1)
        norm2 = float(np.vdot(v, v).real)
        if norm2 <= 0.0:
            raise ValidationError("state vector: zero norm")
        return cls(np.outer(v, v.conj()) / norm2)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityState":
        return cls(np.eye(dim, dtype=complex) / dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expectation(self, x) -> complex:
        x = as_operator(x, "observable")
        if x.shape[0] != self.dim:
            raise DimensionMismatch(f"observable dim {x.shape[0]} != state dim {self.dim}")
        return complex(np.trace(self.matrix @ x))

    def mix_with_identity(self, weight: float) -> "DensityState":
        """Convex blend (1 - weight)*rho + weight*I/n, handy for keeping a
        positivity margin in Euler-discretized trajectory runs."""
        if not 0.0 <= weight <= 1.0:
            raise ValidationError("mixing weight must lie in [0, 1]")
        n = self.dim
        return DensityState((1.0 - weight) * self.matrix + weight * np.eye(n) / n)


@dataclass(frozen=True)
class SystemModel:
    """Hamiltonian plus coupling channels.

    The generator accepts any number of channels; the filtering and
    trajectory code requires exactly one (access it via ``channel``).
    """

    hamiltonian: np.ndarray
    channels: tuple = ()

    def __post_init__(self):
        h = as_operator(self.hamiltonian, "hamiltonian")
        defect = hermiticity_defect(h)
        if defect > HERMITICITY_TOL:
            raise ValidationError(f"hamiltonian: not Hermitian (defect {defect:.3e})")
        chans = tuple(as_operator(c, f"channel {i}") for i, c in enumerate(self.channels))
        for i, c in enumerate(chans):
            if c.shape != h.shape:
                raise DimensionMismatch(f"channel {i} dim {c.shape[0]} != hamiltonian dim {h.shape[0]}")
        object.__setattr__(self, "hamiltonian", _frozen(h))
        object.__setattr__(self, "channels", tuple(_frozen(c) for c in chans))
        object.__setattr__(self, "_derived", {})

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def channel(self) -> np.ndarray:
        if len(self.channels) != 1:
            raise ValidationError(f"this operation requires exactly one channel, model has {len(self.channels)}")
        return self.channels[0]

    def single_channel_parts(self, phase: float = 0.0):
        """(L, L*, L*L) for the single channel, with L rotated by exp(i phase).

        The Grammian L*L is phase invariant.  Results are memoized; the model
        is immutable, so the cache is sound.
        """
        key = float(phase)
        cache = self._derived
        if key not in cache:
            if 0.0 not in cache:
                ch = self.channel
                chd = _frozen(dag(ch))
                cache[0.0] = (ch, chd, _frozen(chd @ ch))
            if key != 0.0:
                base_ch, _, gram = cache[0.0]
                rot = _frozen(np.exp(1j * key) * base_ch)
                cache[key] = (rot, _frozen(dag(rot)), gram)
        return cache[key]


def _check_dim(x: np.ndarray, model: SystemModel, name: str) -> None:
    if x.shape[0] != model.dim:
        raise DimensionMismatch(f"{name} dim {x.shape[0]} != model dim {model.dim}")


def lindblad_heisenberg(x, model: SystemModel) -> np.ndarray:
    """Heisenberg-picture generator i[H,X] + sum_j (Lj* X Lj - {Lj*Lj, X}/2)."""
    x = as_operator(x, "X")
    _check_dim(x, model, "X")
    h = model.hamiltonian
    out = 1j * (h @ x - x @ h)
    for ch in model.channels:
        chd = dag(ch)
        grammian = chd @ ch
        out = out + chd @ x @ ch - 0.5 * (grammian @ x + x @ grammian)
    return out


def lindblad_adjoint(rho_like, model: SystemModel) -> np.ndarray:
    """Schroedinger-picture dual: -i[H,w] + sum_j (Lj w Lj* - {Lj*Lj, w}/2).

    Satisfies trace(L'(w) X) = trace(w L(X)) for every X.
    """
    w = as_operator(rho_like, "rho")
    _check_dim(w, model, "rho")
    h = model.hamiltonian
    out = -1j * (h @ w - w @ h)
    for ch in model.channels:
        chd = dag(ch)
        grammian = chd @ ch
        out = out + ch @ w @ chd - 0.5 * (grammian @ w + w @ grammian)
    return out


def adjoint_superoperator(model: SystemModel) -> np.ndarray:
    """Vectorized (row-major) matrix of the adjoint generator, n^2 x n^2."""
    n = model.dim
    eye = np.eye(n, dtype=complex)
    h = model.hamiltonian
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for ch in model.channels:
        grammian = dag(ch) @ ch
        sup = sup + np.kron(ch, ch.conj()) - 0.5 * (np.kron(grammian, eye) + np.kron(eye, grammian.T))
    return sup


def semigroup_evolve(rho0: DensityState, model: SystemModel, t: float) -> DensityState:
    """Evolve rho0 for time t >= 0 under exp(t L') via the matrix exponential."""
    if not isinstance(rho0, DensityState):
        rho0 = DensityState(rho0)
    t = float(t)
    if not np.isfinite(t):
        raise ValidationError("t must be finite")
    if t < 0.0:
        raise ValidationError("t must be nonnegative")
    _check_dim(rho0.matrix, model, "rho0")
    n = model.dim
    propagator = expm(t * adjoint_superoperator(model))
    out = (propagator @ rho0.matrix.reshape(-1)).reshape(n, n)
    # exact evolution is Hermitian; strip roundoff skew
    return DensityState(0.5 * (out + dag(out)))


def semigroup_path(rho0: DensityState, model: SystemModel, times) -> np.ndarray:
    """Density matrices of exp(t L') rho0 at the given times, shape (m, n, n).

    A uniform grid starting at 0 reuses a single one-step propagator.
    """
    if not isinstance(rho0, DensityState):
        rho0 = DensityState(rho0)
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size == 0:
        raise ValidationError("times must be a nonempty 1-d array")
    if np.any(~np.isfinite(ts)) or np.any(ts < 0.0):
        raise ValidationError("times must be finite and nonnegative")
    n = model.dim
    out = np.empty((ts.size, n, n), dtype=complex)
    diffs = np.diff(ts)
    uniform = ts[0] == 0.0 and ts.size > 1 and diffs.size > 0 and np.allclose(diffs, diffs[0], rtol=1e-12, atol=0.0)
    if uniform:
        step = expm(diffs[0] * adjoint_superoperator(model))
        vec = rho0.matrix.reshape(-1).copy()
        out[0] = rho0.matrix
        for k in range(1, ts.size):
            vec = step @ vec
            m = vec.reshape(n, n)
            out[k] = 0.5 * (m + dag(m))
    else:
        for k, t in enumerate(ts):
            out[k] = semigroup_evolve(rho0, model, t).matrix
    return out


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (m + dag(m))


def random_density(dim: int, rng: np.random.Generator) -> DensityState:
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    g = m @ dag(m) + 1e-6 * np.eye(dim)
    return DensityState(g / np.trace(g))


def random_model(dim: int, rng: np.random.Generator, n_channels: int = 1, scale: float = 1.0) -> SystemModel:
    chans = tuple(
        scale * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2 * dim)
        for _ in range(n_channels)
    )
    return SystemModel(random_hermitian(dim, rng, scale), chans)
