"""Seeded property suites behind ``cfgmp verify``.

Each check compares an implementation path against an independent
route (finite differences, two-sided algebra, hand-traced iterations,
direct re-evaluation) and reports the measured error next to its
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anderson import AASpec, AAState, aa_step, solve_weights_batch
from .diagnostics import decomposition_check
from .fields import IdealField, PerturbedField, prediction_gap
from .projection import OperatorSpec, apply_operator
from .world import LabeledPointCloud, make_world, potential_f, potential_gradient, ideal_velocity


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    measured: float
    tolerance: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.suite}/{self.name}: measured={self.measured:.3e} tol={self.tolerance:.1e}"


def five_point_cloud(seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, (5, 2))
    return LabeledPointCloud(points=pts, labels=["A", "A", "A", "B", "B"],
                             weights=rng.uniform(0.5, 1.5, 5))


def default_worlds():
    return {
        "five-point": five_point_cloud(),
        "two-clusters": make_world("two-clusters"),
        "two-moons": make_world("two-moons"),
        "ring": make_world("ring"),
    }


def central_difference(fn, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        grad[j] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return grad


def gradient_identity_error(cloud, label, n_probes=100, seed=0, h=1e-5):
    """Max over probes of ``||grad - fd|| / (1 + ||grad||)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    lo, hi = cloud.points.min(0) - 1.0, cloud.points.max(0) + 1.0
    for _ in range(n_probes):
        x = rng.uniform(lo, hi)
        t = rng.uniform(0.05, 0.95)
        g = potential_gradient(cloud, label, x, t)
        fd = central_difference(lambda z: float(potential_f(cloud, label, z, t)), x, h)
        worst = max(worst, float(np.linalg.norm(g - fd) / (1.0 + np.linalg.norm(g))))
    return worst


def suite_gradient_identity(seed=0):
    checks = []
    for name, cloud in default_worlds().items():
        for label in ("A", None):
            err = gradient_identity_error(cloud, label, seed=seed)
            tag = f"{name}[{label or 'uncond'}]"
            checks.append(Check("gradient-identity", tag, err <= 1e-5, err, 1e-5))
    return checks


def random_triples(n, d, rng, min_gap=1e-6):
    c = rng.standard_normal((n, d)) * rng.lognormal(0.0, 1.0, (n, 1))
    u = rng.standard_normal((n, d)) * rng.lognormal(0.0, 1.0, (n, 1))
    ideal = rng.standard_normal((n, d)) * rng.lognormal(0.0, 1.0, (n, 1))
    w = rng.uniform(-2.0, 10.0, n)
    keep = np.linalg.norm(c - u, axis=1) >= min_gap
    return c[keep], u[keep], ideal[keep], w[keep]


def suite_decomposition(seed=0, n=10_000):
    rng = np.random.default_rng(seed)
    c, u, ideal, w = random_triples(n, 4, rng)
    worst = 0.0
    minimal = 0.0
    for ci, ui, vi, wi in zip(c, u, ideal, w):
        diag = decomposition_check(ci, ui, vi, wi)
        worst = max(worst, abs(diag.residual))
        at_star = np.sum((ui + diag.w_star * (ci - ui) - vi) ** 2)
        for delta in (1e-3, 1e-1, 1.0):
            for s in (-delta, delta):
                other = np.sum((ui + (diag.w_star + s) * (ci - ui) - vi) ** 2)
                # relative excess of error(w*) over its neighbour, <= 0 when minimal
                minimal = max(minimal, (at_star - other) / max(other, 1e-300))
    return [
        Check("decomposition", "relative-residual", worst <= 1e-10, worst, 1e-10),
        Check("decomposition", "w-star-minimal", minimal <= 1e-12, minimal, 1e-12),
    ]


def affine_aa_error(d, rng, reg=0.0):
    """Distance to the fixed point after d + 1 AA(d, 1) steps on a random contraction."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = rng.uniform(-0.9, 0.9, d)
    A = q @ np.diag(eig) @ q.T
    b = rng.standard_normal(d)
    fixed = np.linalg.solve(np.eye(d) - A, b)
    state = AAState.start(rng.standard_normal(d))
    spec = AASpec(m=d, beta=1.0, reg=reg)
    for _ in range(d + 1):
        z = aa_step(state, spec, lambda v: A @ v + b)
    return float(np.linalg.norm(z - fixed) / max(1.0, np.linalg.norm(fixed)))


def scalar_aa_trace(reg=1e-10, m=1, beta=1.0, steps=2):
    state = AAState.start(np.array([0.0]))
    spec = AASpec(m=m, beta=beta, reg=reg)
    return [float(aa_step(state, spec, lambda z: 0.5 * z + 1.0)[0]) for _ in range(steps)]


def tikhonov_slack(F, reg):
    """Bound on ``||sum alpha f|| - min_i ||f_i||`` from the Tikhonov shift.

    Concentrating weight on one index is feasible with ``||gamma||^2 <= L - 1``,
    so the regularised optimum obeys
    ``||sum alpha f||^2 <= min ||f_i||^2 + reg (L - 1) ||dF||_F^2``.
    """
    F = np.asarray(F, dtype=float)
    dF = np.diff(F, axis=0)
    return float(np.sqrt(reg * (len(F) - 1)) * np.linalg.norm(dF))


def mixed_residual_slack(rng, n_windows=1000, reg=1e-10):
    """Worst ``(||sum alpha f|| - min_i ||f_i||) / (10 slack)`` over random windows.

    Values <= 1 satisfy the optimality bound with a factor 10 margin.
    """
    worst = -np.inf
    worst_sum = 0.0
    for _ in range(n_windows):
        L = rng.integers(1, 5)
        d = rng.integers(1, 6)
        F = rng.standard_normal((L, d)) * rng.lognormal(0, 1)
        alpha = solve_weights_batch(F[None], reg)[0]
        mixed = np.linalg.norm(alpha @ F)
        best = np.min(np.linalg.norm(F, axis=1))
        allowed = 10.0 * tikhonov_slack(F, reg) + 1e-12 * max(1.0, np.linalg.norm(F))
        worst = max(worst, (mixed - best) / allowed)
        worst_sum = max(worst_sum, abs(alpha.sum() - 1.0))
    return worst, worst_sum


def picard_reduction_error(rng, steps=100):
    worst = 0.0
    for _ in range(10):
        a, b = rng.uniform(-0.9, 0.9), rng.standard_normal()
        beta = rng.uniform(0.1, 1.0)
        state = AAState.start(np.array([rng.standard_normal()]))
        z_ref = float(state.z[0])
        spec = AASpec(m=0, beta=beta)
        for _ in range(steps):
            z = float(aa_step(state, spec, lambda v: a * v + b)[0])
            z_ref = z_ref + beta * ((a * z_ref + b) - z_ref)
            worst = max(worst, abs(z - z_ref))
    return worst


def suite_anderson(seed=0):
    rng = np.random.default_rng(seed)
    checks = []
    exact = scalar_aa_trace(reg=0.0)
    checks.append(Check("anderson", "scalar-z2-exact(reg=0)", exact == [1.0, 2.0],
                        abs(exact[1] - 2.0), 0.0))
    default = scalar_aa_trace()
    err = abs(default[1] - 2.0)
    checks.append(Check("anderson", "scalar-z2(reg=1e-10)", err <= 1e-9, err, 1e-9))
    # exactness is a property of the unregularised solve; the default
    # Tikhonov shift biases ill-conditioned windows by up to ~1e-5
    for d in (1, 2, 3):
        err = max(affine_aa_error(d, rng, reg=0.0) for _ in range(20))
        checks.append(Check("anderson", f"affine-exact-d{d}", err <= 1e-10, err, 1e-10))
    slack, sum_err = mixed_residual_slack(rng)
    checks.append(Check("anderson", "mixed-residual-optimal(excess/slack)", slack <= 1.0, slack, 1.0))
    checks.append(Check("anderson", "weights-sum-to-one", sum_err <= 1e-14, sum_err, 1e-14))
    pic = picard_reduction_error(rng)
    checks.append(Check("anderson", "m0-is-damped-picard", pic <= 1e-15, pic, 1e-15))
    return checks


def suite_operators(seed=0):
    rng = np.random.default_rng(seed)
    world = make_world("two-clusters")
    base = IdealField(world)
    cond, uncond = PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)
    xs = rng.uniform(-4.0, 4.0, (100, 2))
    ts = rng.uniform(0.05, 0.95, 100)
    checks = []

    worst = 0.0
    for variant in ("G", "H", "G-prime", "G-lambda"):
        spec = OperatorSpec(variant=variant, lam=0.3, dt=0.0, w=2.0)
        for x, t in zip(xs, ts):
            worst = max(worst, float(np.max(np.abs(apply_operator(spec, cond, uncond, x, t, "A") - x))))
    checks.append(Check("operators", "identity-at-dt0", worst == 0.0, worst, 0.0))

    dt = 1.0 / 32
    g = OperatorSpec("G", dt=dt)
    lam_err = prime_err = 0.0
    for x, t in zip(xs, ts):
        ref = apply_operator(g, cond, uncond, x, t, "A")
        scale = max(1.0, float(np.max(np.abs(ref))))
        lam_err = max(lam_err, float(np.max(np.abs(
            apply_operator(OperatorSpec("G-lambda", lam=0.5, dt=dt), cond, uncond, x, t, "A") - ref))) / scale)
        prime_err = max(prime_err, float(np.max(np.abs(
            apply_operator(OperatorSpec("G-prime", dt=dt, w=1.0), cond, uncond, x, t, "A") - ref))) / scale)
    checks.append(Check("operators", "G-lambda(0.5)==G", lam_err <= 1e-14, lam_err, 1e-14))
    checks.append(Check("operators", "G-prime(w=1)==G", prime_err <= 1e-14, prime_err, 1e-14))

    # descent of F_t = (f_y - f_empty) / (2t(1-t)) along the G displacement
    # probes with a gap below 1e-3 are treated as stationary: there the
    # O(dt^2) curvature term of the two legs dominates the displacement
    small = OperatorSpec("G", dt=1e-6)
    worst_dd = -np.inf
    for x, t in zip(xs, ts):
        grad_F = -(ideal_velocity(world, "A", x, t) - ideal_velocity(world, None, x, t))
        if np.linalg.norm(grad_F) < 1e-3:
            continue
        disp = apply_operator(small, base, base, x, t, "A") - x
        cosine = float(grad_F @ disp) / (np.linalg.norm(grad_F) * np.linalg.norm(disp))
        worst_dd = max(worst_dd, cosine)
    checks.append(Check("operators", "F_t-descent(cosine)", worst_dd <= 1e-12, worst_dd, 1e-12))

    gap_before = prediction_gap(base, base, 0.5, xs, "A")
    z = xs
    for _ in range(2):
        z = apply_operator(OperatorSpec("G", dt=dt), base, base, z, 0.5, "A")
    gap_after = prediction_gap(base, base, 0.5, z, "A")
    excess = float(np.mean(gap_after) - np.mean(gap_before))
    checks.append(Check("operators", "G-reduces-mean-gap", excess < 0.0, excess, 0.0))
    return checks


SUITES = {
    "gradient-identity": suite_gradient_identity,
    "decomposition": suite_decomposition,
    "anderson": suite_anderson,
    "operators": suite_operators,
}


def run_suite(name, seed=0):
    if name == "all":
        return [c for suite in SUITES.values() for c in suite(seed)]
    return SUITES[name](seed)
