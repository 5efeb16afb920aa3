"""Time-stepping of the Belavkin quantum filters.

The filters propagate a matrix w_t whose pairing trace(w_t X) gives the
conditional expectation functional; this is the trace dual of the
operator-valued filtering equations, validated operationally by per-step
duality tests rather than assumed.  Forward Euler is used throughout (the
unnormalized equation is linear in w), with per-step renormalization for
the normalized variants.

Homodyne (diffusive) schemes, per step of size dt with record increment dY:

    unnormalized:  w <- w + L'(w) dt + eta (L w + w L*) dY
    normalized:    r <- r + L'(r) dt + (L r + r L* - m r)(dY - m dt),
                   m = trace((L + L*) r), then renormalize

where eta = 1 in the vacuum and eta = 1/(1 + kappa^2) under imperfect
observation with corruption strength kappa.  A quadrature phase phi enters
only through L -> exp(i phi) L.

Counting (jump) schemes, with dY in {0, 1}:

    unnormalized:  w <- w + L'(w) dt + (L w L* - w)(dY - dt)
    normalized:    no jump: r <- r + (L'(r) - L r L* + rate r) dt,
                   jump:    r <- L r L* / rate,      rate = trace(L*L r).

Positivity is monitored, not enforced: Euler steps may transiently leave
the state space, and projecting would mask convergence behavior.  Use
`path_health` to audit a finished run.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    CausalityViolation,
    DimensionMismatch,
    FilterCollapse,
    ValidationError,
    ZeroJumpRate,
)
from .operators import (
    HERMITICITY_TOL,
    SystemModel,
    as_operator,
    dag,
    hermiticity_defect,
    DensityState,
)

HOMODYNE = "homodyne"
IMPERFECT = "imperfect"
COUNTING = "counting"
SCHEME_KINDS = (HOMODYNE, IMPERFECT, COUNTING)

TRACE_MONITOR_TOL = 1e-9
EIGENVALUE_MONITOR_FLOOR = -1e-6
COLLAPSE_TRACE = 1e-300
ZERO_RATE = 1e-14


@dataclass(frozen=True)
class MeasurementScheme:
    """Detection scheme: homodyne, imperfect (extra corrupting noise of
    strength kappa), or counting.  The quadrature phase rotates L."""

    kind: str
    kappa: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValidationError(f"scheme: unknown kind {self.kind!r} (expected one of {SCHEME_KINDS})")
        if not np.isfinite(self.kappa) or self.kappa < 0:
            raise ValidationError("scheme: kappa must be a nonnegative real")
        if self.kind != IMPERFECT and self.kappa != 0.0:
            raise ValidationError("scheme: kappa is only meaningful for the imperfect kind")
        if not np.isfinite(self.phase):
            raise ValidationError("scheme: phase must be finite")
        if self.kind == COUNTING and self.phase != 0.0:
            raise ValidationError("scheme: phase is not meaningful for counting")
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "phase", float(self.phase))

    @classmethod
    def homodyne(cls, phase: float = 0.0) -> "MeasurementScheme":
        return cls(HOMODYNE, 0.0, phase)

    @classmethod
    def imperfect(cls, kappa: float, phase: float = 0.0) -> "MeasurementScheme":
        return cls(IMPERFECT, kappa, phase)

    @classmethod
    def counting(cls) -> "MeasurementScheme":
        return cls(COUNTING)

    @property
    def gain(self) -> float:
        """Update gain: 1 in the vacuum, 1/(1+kappa^2) for imperfect records."""
        return 1.0 / (1.0 + self.kappa * self.kappa)

    @property
    def noise_scale(self) -> float:
        """Std dev of the record noise per sqrt(dt): sqrt(1 + kappa^2)."""
        return math.sqrt(1.0 + self.kappa * self.kappa)

    @property
    def is_diffusive(self) -> bool:
        return self.kind in (HOMODYNE, IMPERFECT)


_VACUUM = MeasurementScheme(HOMODYNE)


def effective_channel(channel: np.ndarray, scheme: MeasurementScheme) -> np.ndarray:
    if scheme.phase == 0.0:
        return channel
    return np.exp(1j * scheme.phase) * channel


@dataclass(frozen=True)
class FilterState:
    """Filter matrix plus bookkeeping.

    `likelihood` carries the accumulated trace of unnormalized (Zakai) runs;
    normalized runs leave it at the value set by the last `normalize`.
    Construction performs no validation (steps are the hot path); audit with
    `path_health` or the accessors below.
    """

    matrix: np.ndarray
    normalized: bool = True
    likelihood: float = 1.0

    @classmethod
    def from_density(cls, rho: DensityState, normalized: bool = True) -> "FilterState":
        return cls(np.array(rho.matrix), normalized, 1.0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace_real(self) -> float:
        return float(np.trace(self.matrix).real)

    def expectation(self, x) -> complex:
        return complex(np.trace(self.matrix @ x))

    def min_eigenvalue(self) -> float:
        m = self.matrix
        return float(np.linalg.eigvalsh(0.5 * (m + dag(m))).min())

    def hermiticity_defect(self) -> float:
        return hermiticity_defect(self.matrix)


def _require_dt(dt: float) -> float:
    dt = float(dt)
    if not np.isfinite(dt) or dt <= 0.0:
        raise ValidationError("dt must be positive")
    return dt


def _require_model_state(state: FilterState, model: SystemModel) -> None:
    if state.matrix.shape[0] != model.dim:
        raise DimensionMismatch(f"state dim {state.matrix.shape[0]} != model dim {model.dim}")


def _diffusive_scheme(scheme: MeasurementScheme | None) -> MeasurementScheme:
    scheme = _VACUUM if scheme is None else scheme
    if not scheme.is_diffusive:
        raise ValidationError(f"scheme kind {scheme.kind!r} is not a diffusive (homodyne-type) scheme")
    return scheme


def zakai_step_homodyne(
    state: FilterState, dY: float, model: SystemModel, dt: float, scheme: MeasurementScheme | None = None
) -> FilterState:
    """One Euler step of the unnormalized diffusive filter.

    The state matrix is assumed Hermitian (a FilterState invariant); the
    increment is then Hermitian by construction.
    """
    dt = _require_dt(dt)
    _require_model_state(state, model)
    scheme = _diffusive_scheme(scheme)
    ch, chd, grammian = model.single_channel_parts(scheme.phase)
    h = model.hamiltonian
    w = state.matrix
    lw = ch @ w
    update = lw + lw.conj().T
    drift = -1j * (h @ w - w @ h) + lw @ chd - 0.5 * (grammian @ w + w @ grammian)
    new = w + drift * dt + (scheme.gain * float(dY)) * update
    return FilterState(new, normalized=False, likelihood=float(new.trace().real))


def bks_step_homodyne(
    state: FilterState, dY: float, model: SystemModel, dt: float, scheme: MeasurementScheme | None = None
) -> FilterState:
    """One Euler step of the normalized diffusive filter, renormalized.

    Only vacuum-gain schemes are supported here; the normalized imperfect
    filter is obtained by renormalizing the gain-adjusted unnormalized step
    (see `diffusive_filter_step`).
    """
    dt = _require_dt(dt)
    _require_model_state(state, model)
    if not state.normalized:
        raise ValidationError("bks_step_homodyne requires a normalized state")
    scheme = _diffusive_scheme(scheme)
    if scheme.kind == IMPERFECT:
        raise ValidationError(
            "no closed normalized form for imperfect observation; use diffusive_filter_step"
        )
    ch, chd, grammian = model.single_channel_parts(scheme.phase)
    h = model.hamiltonian
    r = state.matrix
    lr = ch @ r
    update = lr + lr.conj().T
    m = 2.0 * float(lr.trace().real)
    drift = -1j * (h @ r - r @ h) + lr @ chd - 0.5 * (grammian @ r + r @ grammian)
    raw = r + drift * dt + (update - m * r) * (float(dY) - m * dt)
    tr = float(raw.trace().real)
    if tr <= COLLAPSE_TRACE:
        raise FilterCollapse(f"filter trace {tr:.3e} vanished; reduce dt")
    return FilterState(raw / tr, normalized=True, likelihood=state.likelihood)


def zakai_step_counting(state: FilterState, dY: float, model: SystemModel, dt: float) -> FilterState:
    """One Euler step of the unnormalized counting filter; dY in {0, 1}."""
    dt = _require_dt(dt)
    _require_model_state(state, model)
    dy = float(dY)
    if dy not in (0.0, 1.0):
        raise ValidationError(f"counting increment must be 0 or 1, got {dY!r}")
    ch, chd, grammian = model.single_channel_parts()
    h = model.hamiltonian
    w = state.matrix
    jumped = (ch @ w) @ chd
    drift = -1j * (h @ w - w @ h) + jumped - 0.5 * (grammian @ w + w @ grammian)
    new = w + drift * dt + (jumped - w) * (dy - dt)
    return FilterState(new, normalized=False, likelihood=float(new.trace().real))


def bks_step_counting(state: FilterState, dY: float, model: SystemModel, dt: float) -> FilterState:
    """One step of the normalized counting filter: smooth no-jump drift, and
    the collapse r -> L r L*/rate on a registered count."""
    dt = _require_dt(dt)
    _require_model_state(state, model)
    if not state.normalized:
        raise ValidationError("bks_step_counting requires a normalized state")
    dy = float(dY)
    if dy not in (0.0, 1.0):
        raise ValidationError(f"counting increment must be 0 or 1, got {dY!r}")
    ch, chd, grammian = model.single_channel_parts()
    h = model.hamiltonian
    r = state.matrix
    jumped = (ch @ r) @ chd
    rate = float(jumped.trace().real)
    if dy == 1.0:
        if rate <= ZERO_RATE:
            raise ZeroJumpRate(f"jump recorded while trace(L*L rho) = {rate:.3e}; inconsistent record")
        return FilterState(jumped / rate, normalized=True, likelihood=state.likelihood)
    # no-jump drift: L'(r) - L r L* + rate r, with the dissipator's jump part
    # cancelling the subtracted one
    drift = -1j * (h @ r - r @ h) - 0.5 * (grammian @ r + r @ grammian) + rate * r
    raw = r + drift * dt
    tr = float(raw.trace().real)
    if tr <= COLLAPSE_TRACE:
        raise FilterCollapse(f"filter trace {tr:.3e} vanished; reduce dt")
    return FilterState(raw / tr, normalized=True, likelihood=state.likelihood)


def normalize(state: FilterState) -> tuple[FilterState, float]:
    """Split w into its normalized part and its trace (the record likelihood)."""
    tr = state.trace_real()
    if tr <= COLLAPSE_TRACE:
        raise FilterCollapse(f"filter trace {tr:.3e} vanished; step size too large")
    return FilterState(state.matrix / tr, normalized=True, likelihood=tr), tr


def diffusive_filter_step(
    state: FilterState, dY: float, model: SystemModel, dt: float, scheme: MeasurementScheme | None = None
) -> FilterState:
    """Normalized diffusive step for any gain: vacuum homodyne goes through
    the nonlinear normalized equation, imperfect through the gain-adjusted
    unnormalized step plus renormalization.  kappa = 0 takes the vacuum code
    path exactly."""
    scheme = _diffusive_scheme(scheme)
    if scheme.kind == IMPERFECT and scheme.kappa == 0.0:
        scheme = MeasurementScheme(HOMODYNE, 0.0, scheme.phase)
    if scheme.kind == IMPERFECT:
        stepped = zakai_step_homodyne(state, dY, model, dt, scheme)
        out, _ = normalize(stepped)
        return FilterState(out.matrix, normalized=True, likelihood=state.likelihood)
    return bks_step_homodyne(state, dY, model, dt, scheme)


def filter_step(
    state: FilterState, dY: float, model: SystemModel, dt: float, scheme: MeasurementScheme | None = None
) -> FilterState:
    """Scheme dispatch: one step of the filter matching `scheme` and the
    normalization of `state`."""
    scheme = _VACUUM if scheme is None else scheme
    if scheme.kind == COUNTING:
        if state.normalized:
            return bks_step_counting(state, dY, model, dt)
        return zakai_step_counting(state, dY, model, dt)
    if state.normalized:
        return diffusive_filter_step(state, dY, model, dt, scheme)
    return zakai_step_homodyne(state, dY, model, dt, scheme)


# --- feedback -------------------------------------------------------------

_ALLOWED_BINOPS = {ast.Add, ast.Sub, ast.Mult, ast.Div}
_ALLOWED_UNARY = {ast.UAdd, ast.USub}


def _validate_expr(node: ast.AST, expression: str) -> None:
    if isinstance(node, ast.Expression):
        return _validate_expr(node.body, expression)
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        _validate_expr(node.left, expression)
        _validate_expr(node.right, expression)
        return
    if isinstance(node, ast.UnaryOp) and type(node.op) in _ALLOWED_UNARY:
        return _validate_expr(node.operand, expression)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return
    if isinstance(node, ast.Name) and node.id in ("t", "Y"):
        return
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id == "ma"
        and len(node.args) == 2
        and not node.keywords
        and isinstance(node.args[0], ast.Name)
        and node.args[0].id == "Y"
        and isinstance(node.args[1], ast.Constant)
        and isinstance(node.args[1].value, int)
        and node.args[1].value >= 1
    ):
        return
    raise ValidationError(
        f"control expression {expression!r}: unsupported construct {ast.dump(node)};"
        " the grammar allows numbers, t, Y, ma(Y, window), + - * / and parentheses"
    )


def compile_control_expression(expression: str) -> Callable[[float, np.ndarray], float]:
    """Compile the minimal control grammar over t, cumulative Y, and the
    trailing moving average ma(Y, window) into a callable u(t, prefix)."""
    try:
        tree = ast.parse(expression.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"control expression {expression!r}: {exc}") from exc
    _validate_expr(tree, expression)

    def _eval(node, t, cum):
        if isinstance(node, ast.Expression):
            return _eval(node.body, t, cum)
        if isinstance(node, ast.BinOp):
            a = _eval(node.left, t, cum)
            b = _eval(node.right, t, cum)
            if isinstance(node.op, ast.Add):
                return a + b
            if isinstance(node.op, ast.Sub):
                return a - b
            if isinstance(node.op, ast.Mult):
                return a * b
            if b == 0.0:
                raise ValidationError(f"control expression {expression!r}: division by zero")
            return a / b
        if isinstance(node, ast.UnaryOp):
            val = _eval(node.operand, t, cum)
            return val if isinstance(node.op, ast.UAdd) else -val
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "t":
                return t
            return float(cum[-1]) if cum.size else 0.0
        # validated above: ma(Y, window)
        window = node.args[1].value
        if cum.size == 0:
            return 0.0
        return float(np.mean(cum[-window:]))

    def control(t: float, prefix) -> float:
        arr = np.asarray(prefix, dtype=float).reshape(-1)
        cum = np.cumsum(arr)
        return float(_eval(tree.body, float(t), cum))

    return control


@dataclass(frozen=True)
class ControlLaw:
    """Causal feedback law: H_t = H0 + u_t H1 with u_t a function of the
    record strictly before t, optionally with a time/record dependent
    coupling channel."""

    control: Callable[[float, np.ndarray], float]
    h0: np.ndarray
    h1: np.ndarray
    channel_map: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        h0 = as_operator(self.h0, "H0")
        h1 = as_operator(self.h1, "H1")
        if hermiticity_defect(h0) > HERMITICITY_TOL:
            raise ValidationError("H0: not Hermitian")
        if hermiticity_defect(h1) > HERMITICITY_TOL:
            raise ValidationError("H1: not Hermitian")
        if h0.shape != h1.shape:
            raise DimensionMismatch("H0 and H1 must share a dimension")
        object.__setattr__(self, "h0", h0)
        object.__setattr__(self, "h1", h1)

    @classmethod
    def from_expression(cls, expression: str, h0, h1) -> "ControlLaw":
        return cls(compile_control_expression(expression), h0, h1)

    def hamiltonian_at(self, t: float, prefix) -> tuple[np.ndarray, float]:
        u = self.control(float(t), prefix)
        if not np.isfinite(u) or (isinstance(u, complex) and u.imag != 0):
            raise ValidationError(f"control law returned non-real value {u!r} at t = {t}")
        return self.h0 + float(u) * self.h1, float(u)


def feedback_step(
    state: FilterState,
    dY: float,
    law: ControlLaw,
    model: SystemModel,
    record_prefix,
    dt: float,
    scheme: MeasurementScheme | None = None,
    t: float | None = None,
) -> FilterState:
    """One filter step with feedback-frozen coefficients.

    The law sees the time t and the record entries strictly before t (the
    prefix); supplying entries at or after t is a causality violation.  The
    matching scheme step then runs with H_t (and L_t when the law carries a
    channel map) held fixed across the step.
    """
    dt = _require_dt(dt)
    prefix = np.asarray(record_prefix, dtype=float).reshape(-1)
    if t is None:
        t = prefix.size * dt
    t = float(t)
    if prefix.size * dt > t * (1.0 + 1e-12) + 1e-12 * dt:
        raise CausalityViolation(
            f"record prefix extends to {prefix.size * dt:.6g}, at or beyond the current time {t:.6g}"
        )
    h_t, _ = law.hamiltonian_at(t, prefix)
    channels = model.channels
    if law.channel_map is not None:
        channels = (as_operator(law.channel_map(t, prefix), "L_t"),)
    frozen = SystemModel(h_t, channels)
    return filter_step(state, dY, frozen, dt, scheme)


# --- health monitoring ----------------------------------------------------


@dataclass(frozen=True)
class PathHealth:
    """Summary of the invariants monitored along a filter path."""

    max_hermiticity_defect: float
    min_eigenvalue: float
    max_trace_defect: float
    normalized: bool

    @property
    def positivity_ok(self) -> bool:
        return self.min_eigenvalue >= EIGENVALUE_MONITOR_FLOOR

    @property
    def trace_ok(self) -> bool:
        return (not self.normalized) or self.max_trace_defect <= TRACE_MONITOR_TOL

    @property
    def ok(self) -> bool:
        return self.positivity_ok and self.trace_ok


def path_health(matrices, normalized: bool = True) -> PathHealth:
    """Audit a stack of filter matrices, shape (m, n, n)."""
    arr = np.asarray(matrices, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValidationError("expected a stack of square matrices")
    herm = float(np.max(np.abs(arr - np.conj(np.swapaxes(arr, 1, 2)))))
    sym = 0.5 * (arr + np.conj(np.swapaxes(arr, 1, 2)))
    lowest = float(np.linalg.eigvalsh(sym)[:, 0].min())
    traces = np.trace(arr, axis1=1, axis2=2).real
    trace_defect = float(np.max(np.abs(traces - 1.0))) if normalized else 0.0
    return PathHealth(herm, lowest, trace_defect, normalized)
