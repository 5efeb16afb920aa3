"""Self-check suites behind the `verify` CLI subcommand.

Each check is a fast, deterministic exercise of one documented invariant,
at smaller scale than the full test suite.  `run_all` prints one pass/fail
line per check and returns overall success.
"""

from __future__ import annotations

import tempfile
import time
from pathlib import Path

import numpy as np

from . import fock, ito
from .conditioning import (
    classical_representation,
    conditional_expectation,
    joint_spectral_projections,
)
from .filters import (
    ControlLaw,
    FilterState,
    MeasurementScheme,
    bks_step_counting,
    bks_step_homodyne,
    feedback_step,
    normalize,
    zakai_step_counting,
    zakai_step_homodyne,
)
from .operators import (
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Z,
    DensityState,
    SystemModel,
    dag,
    lindblad_adjoint,
    lindblad_heisenberg,
    random_density,
    random_hermitian,
    random_model,
    semigroup_evolve,
)
from .trajectories import ObservationRecord, replay_record, simulate_homodyne


def _assert(cond: bool, message: str) -> None:
    if not cond:
        raise AssertionError(message)


def check_generator_annihilates_identity():
    rng = np.random.default_rng(10)
    for dim in (2, 3, 4):
        model = random_model(dim, rng, n_channels=2)
        defect = np.max(np.abs(lindblad_heisenberg(np.eye(dim), model)))
        _assert(defect <= 1e-12, f"L(I) = {defect:.3e}")


def check_generator_star_and_duality():
    rng = np.random.default_rng(11)
    for dim in (2, 3):
        model = random_model(dim, rng)
        x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        star = np.max(np.abs(lindblad_heisenberg(dag(x), model) - dag(lindblad_heisenberg(x, model))))
        _assert(star <= 1e-12, f"L(X*) != L(X)* by {star:.3e}")
        w = random_density(dim, rng).matrix
        dual = abs(np.trace(lindblad_adjoint(w, model) @ x) - np.trace(w @ lindblad_heisenberg(x, model)))
        _assert(dual <= 1e-12, f"duality defect {dual:.3e}")


def check_semigroup():
    rng = np.random.default_rng(12)
    model = random_model(3, rng)
    rho = random_density(3, rng)
    for t in (0.1, 1.0, 10.0):
        out = semigroup_evolve(rho, model, t)
        _assert(abs(np.trace(out.matrix) - 1) <= 1e-9, "trace drift")
    a = semigroup_evolve(semigroup_evolve(rho, model, 0.4), model, 0.7)
    b = semigroup_evolve(rho, model, 1.1)
    _assert(np.max(np.abs(a.matrix - b.matrix)) <= 1e-8, "semigroup property")


def check_conditional_expectation():
    rng = np.random.default_rng(13)
    dim = 6
    diags = [np.diag(rng.integers(0, 3, size=dim).astype(complex)) for _ in range(2)]
    u, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    gens = [u @ d @ dag(u) for d in diags]
    algebra = joint_spectral_projections(gens)
    rho = random_density(dim, rng)
    a = sum(p @ random_hermitian(dim, rng) @ p for p in algebra.projections)
    est = conditional_expectation(a, algebra, rho)
    for p in algebra.projections:
        lhs = np.trace(rho.matrix @ est @ p)
        rhs = np.trace(rho.matrix @ a @ p)
        _assert(abs(lhs - rhs) <= 1e-10, "defining property")
    base = np.trace(rho.matrix @ dag(a - est) @ (a - est)).real
    for _ in range(50):
        c = algebra.element(rng.normal(size=algebra.n_blocks) + 1j * rng.normal(size=algebra.n_blocks))
        other = np.trace(rho.matrix @ dag(a - c) @ (a - c)).real
        _assert(base <= other + 1e-10, "least squares")
    _assert(
        abs(np.trace(rho.matrix @ est) - np.trace(rho.matrix @ a)) <= 1e-11,
        "state invariance",
    )


def check_classical_representation():
    rng = np.random.default_rng(14)
    dim = 4
    d1 = np.diag(np.array([0.0, 0.0, 1.0, 2.0], dtype=complex))
    d2 = np.diag(np.array([1.0, -1.0, 1.0, 3.0], dtype=complex))
    u, _ = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    g1, g2 = u @ d1 @ dag(u), u @ d2 @ dag(u)
    algebra = joint_spectral_projections([g1, g2])
    rho = random_density(dim, rng)
    rep = classical_representation(algebra, rho)
    lhs = np.trace(rho.matrix @ g1 @ g2)
    _assert(abs(lhs - rep.moment(1, 1)) <= 1e-10, "joint moment")


def check_ito_table():
    D = ito.Differential
    expected = {
        (D.ANNIHILATION, D.GAUGE): D.ANNIHILATION,
        (D.ANNIHILATION, D.CREATION): D.TIME,
        (D.GAUGE, D.GAUGE): D.GAUGE,
        (D.GAUGE, D.CREATION): D.CREATION,
    }
    for a in D:
        for b in D:
            _assert(ito.ito_product(a, b) is expected.get((a, b)), f"table entry {a} {b}")


def check_unitarity():
    rng = np.random.default_rng(15)
    for _ in range(5):
        model = random_model(rng.integers(2, 5), rng)
        _assert(ito.unitarity_defect(model) <= 1e-12, "d(U*U) != 0")


def check_flow_coefficients():
    rng = np.random.default_rng(16)
    model = random_model(2, rng)
    x = random_hermitian(2, rng)
    a = ito.flow_coefficients(x, model)
    b = ito.flow_coefficients_direct(x, model)
    for d in ito.Differential:
        _assert(np.max(np.abs(a.coefficient(d, 2) - b.coefficient(d, 2))) <= 1e-12, f"flow {d}")


def check_weyl_relations():
    f = fock.ModeTruncation(0.4 + 0.2j)
    g = fock.ModeTruncation(-0.3 + 0.35j)
    wf, wg = fock.weyl_matrix(f), fock.weyl_matrix(g)
    wfg = fock.weyl_matrix(fock.ModeTruncation(f.amplitude + g.amplitude))
    phase = np.exp(-1j * np.imag(np.conj(f.amplitude) * g.amplitude))
    low = np.zeros(f.cutoff + 1)
    low[: f.cutoff // 2 + 1] = 1.0
    proj = np.diag(low)
    resid = np.linalg.norm(proj @ (wf @ wg - phase * wfg) @ proj, 2)
    _assert(resid <= 1e-8, f"Weyl relation residual {resid:.3e}")
    adj = np.max(np.abs(dag(wf) - fock.weyl_matrix(fock.ModeTruncation(-f.amplitude))))
    _assert(adj <= 1e-10, f"W(f)* != W(-f) by {adj:.3e}")


def check_quadrature_gaussian():
    mode = fock.ModeTruncation(0.5)
    for x in np.linspace(-2, 2, 9):
        got = fock.quadrature_char_function(mode, x)
        want = np.exp(-(x**2) * abs(mode.amplitude) ** 2 / 2)
        _assert(abs(got - want) <= 1e-8, f"quadrature law at x={x}")


def check_counting_poisson():
    for amp in (0.3, 0.8j, 1.0):
        mode = fock.ModeTruncation(amp)
        for x in np.linspace(-3, 3, 7):
            got = fock.counting_char_function(mode, x)
            want = np.exp(abs(amp) ** 2 * (np.exp(1j * x) - 1))
            _assert(abs(got - want) <= 1e-8, f"Poisson law at x={x}")


def check_weyl_qsde_convergence():
    steps = 200
    dt = 5e-3
    ts = np.arange(steps) * dt
    f = fock.StepFunction(dt, 0.8 * np.exp(1j * ts))
    g = fock.StepFunction(dt, 0.3 * np.cos(3 * ts) + 0.1j)
    h = fock.StepFunction(dt, 0.4 * np.sin(2 * ts))
    report = fock.weyl_qsde_check(f, g, h, halvings=2)
    for ratio in report.ratios:
        _assert(0.35 <= ratio <= 0.65, f"convergence ratio {ratio:.3f}")


def check_filter_duality():
    rng = np.random.default_rng(17)
    model = random_model(2, rng)
    rho = random_density(2, rng)
    dt, dy = 1e-3, 0.02
    w0 = FilterState.from_density(rho)
    w1 = zakai_step_homodyne(w0, dy, model, dt)
    ch = model.channel
    for _ in range(5):
        x = random_hermitian(2, rng)
        direct = (
            np.trace(w0.matrix @ x)
            + np.trace(w0.matrix @ lindblad_heisenberg(x, model)) * dt
            + np.trace(w0.matrix @ (dag(ch) @ x + x @ ch)) * dy
        )
        _assert(abs(np.trace(w1.matrix @ x) - direct) <= 1e-12, "homodyne duality")
    w1 = zakai_step_counting(w0, 1.0, model, dt)
    for _ in range(5):
        x = random_hermitian(2, rng)
        direct = (
            np.trace(w0.matrix @ x)
            + np.trace(w0.matrix @ lindblad_heisenberg(x, model)) * dt
            + np.trace(w0.matrix @ (dag(ch) @ x @ ch - x)) * (1.0 - dt)
        )
        _assert(abs(np.trace(w1.matrix @ x) - direct) <= 1e-12, "counting duality")


def check_ks_consistency():
    model = SystemModel(0.2 * SIGMA_X, (0.4 * SIGMA_MINUS,))
    rho0 = DensityState(np.diag([0.35, 0.65]).astype(complex))
    rec, _ = simulate_homodyne(model, rho0, 1.0, 1e-3, seed=15)
    bks = replay_record(rec, model, rho0, kind="bks")
    zak = replay_record(rec, model, rho0, kind="zakai")
    diff = np.max(np.abs(bks.matrices - zak.normalized_matrices()))
    _assert(diff <= 5e-3, f"normalize(Zakai) vs BKS diverged: {diff:.3e}")


def check_imperfect_limits():
    model = SystemModel(np.zeros((2, 2)), (SIGMA_MINUS,))
    rho0 = DensityState.from_vector([1, 1]).mix_with_identity(0.25)
    rec, path = simulate_homodyne(model, rho0, 0.3, 1e-3, seed=5)
    rec0 = ObservationRecord(MeasurementScheme.imperfect(0.0), rec.dt, rec.increments, rec.seed)
    run0 = replay_record(rec0, model, rho0, kind="bks")
    _assert(np.max(np.abs(run0.matrices - path)) <= 1e-12, "kappa = 0 deviates from vacuum")


def check_feedback_reduction():
    model = SystemModel(0.4 * SIGMA_Z, (SIGMA_MINUS,))
    rho0 = DensityState.from_vector([1, 1]).mix_with_identity(0.25)
    law0 = ControlLaw.from_expression("0", model.hamiltonian, SIGMA_X)
    state = FilterState.from_density(rho0)
    dt = 1e-3
    prefix = np.array([0.01, -0.02])
    via_law = feedback_step(state, 0.015, law0, model, prefix, dt)
    plain = bks_step_homodyne(state, 0.015, model, dt)
    _assert(np.max(np.abs(via_law.matrix - plain.matrix)) <= 1e-15, "u = 0 reduction")


def check_record_roundtrip():
    from .recordio import read_record, write_record

    rng = np.random.default_rng(19)
    rec = ObservationRecord(MeasurementScheme.homodyne(), 1e-3, rng.normal(size=250) * 0.03, seed=9)
    with tempfile.TemporaryDirectory() as tmp:
        target = Path(tmp) / "record.csv"
        write_record(rec, target)
        back = read_record(target)
    _assert(back == rec, "record round-trip changed data")


def check_normalize_scaling():
    rng = np.random.default_rng(20)
    rho = random_density(3, rng)
    for c in (1.0, 0.1, 17.0):
        state = FilterState(c * rho.matrix, normalized=False)
        out, likelihood = normalize(state)
        _assert(abs(likelihood - c) <= 1e-12, "likelihood != trace")
        _assert(np.max(np.abs(out.matrix - rho.matrix)) <= 1e-12, "normalize not scale invariant")


def check_counting_jump():
    model = SystemModel(np.zeros((2, 2)), (SIGMA_MINUS,))
    rng = np.random.default_rng(21)
    for _ in range(3):
        rho = random_density(2, rng)
        state = bks_step_counting(FilterState.from_density(rho), 1.0, model, 1e-3)
        _assert(np.max(np.abs(state.matrix - np.diag([1.0, 0.0]))) <= 1e-12, "jump target")


CHECKS = [
    ("core: generator annihilates identity", check_generator_annihilates_identity),
    ("core: *-compatibility and trace duality", check_generator_star_and_duality),
    ("core: semigroup trace and composition", check_semigroup),
    ("conditioning: defining property and least squares", check_conditional_expectation),
    ("conditioning: classical joint moments", check_classical_representation),
    ("ito: fundamental table", check_ito_table),
    ("ito: d(U*U) = 0", check_unitarity),
    ("ito: flow coefficients", check_flow_coefficients),
    ("fock: Weyl relations", check_weyl_relations),
    ("fock: vacuum quadrature is Gaussian", check_quadrature_gaussian),
    ("fock: coherent counting is Poisson", check_counting_poisson),
    ("fock: Weyl QSDE first-order convergence", check_weyl_qsde_convergence),
    ("filters: per-step duality oracles", check_filter_duality),
    ("filters: Kallianpur-Striebel consistency", check_ks_consistency),
    ("filters: imperfect kappa = 0 reduction", check_imperfect_limits),
    ("filters: feedback u = 0 reduction", check_feedback_reduction),
    ("filters: normalize scale invariance", check_normalize_scaling),
    ("filters: counting jump collapse", check_counting_jump),
    ("io: record round-trip", check_record_roundtrip),
]


def run_all(verbose: bool = True) -> bool:
    ok = True
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            fn()
            status = "PASS"
            detail = ""
        except AssertionError as exc:
            status = "FAIL"
            detail = f"  ({exc})"
            ok = False
        except Exception as exc:  # noqa: BLE001 - verify reports, never crashes
            status = "FAIL"
            detail = f"  ({type(exc).__name__}: {exc})"
            ok = False
        elapsed = time.perf_counter() - start
        if verbose:
            print(f"[{status}] {name}{detail}  [{elapsed:.2f}s]")
    if verbose:
        print("verify:", "all suites passed" if ok else "FAILURES detected")
    return ok
