"""Fixed-point solver for thresholding-penalized least squares.

The estimator solves rho*beta = Theta(rho*beta + X'y/rho - X'X beta/rho; lambda)
by iterating the scaled map beta~ <- Theta(beta~ + Xs'(y - Xs beta~); lambda)
with Xs = X/rho.  With rho >= ||X||_2 the scaled design has unit spectral
norm and every iteration decreases the objective

    f(beta) = 0.5*||X beta - y||^2 + sum_j P(rho*|beta_j|; lambda).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import thresholding as th
from . import penalty as pen


class ConfigurationError(ValueError):
    """Invalid problem/solver configuration."""


class SolverError(RuntimeError):
    """Numerical failure during iteration (non-finite iterates)."""


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------

def _frozen_array(x, dtype=float):
    arr = np.array(x, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Problem:
    """Design X (n x p), response y (n,), optional ground truth and noise scale."""

    X: np.ndarray
    y: np.ndarray
    beta_star: np.ndarray | None = None
    sigma: float | None = None

    def __post_init__(self):
        X = _frozen_array(self.X)
        y = _frozen_array(self.y)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("X and y must be finite")
        bs = self.beta_star
        if bs is not None:
            bs = _frozen_array(bs)
            if bs.shape != (X.shape[1],):
                raise ValueError(f"beta_star has shape {bs.shape}, expected ({X.shape[1]},)")
            if not np.all(np.isfinite(bs)):
                raise ValueError("beta_star must be finite")
        if self.sigma is not None and (not math.isfinite(self.sigma) or self.sigma < 0):
            raise ValueError("sigma must be finite and >= 0")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "beta_star", bs)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


# ---------------------------------------------------------------------------
# threshold schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaSchedule:
    """Per-iteration threshold sequence.

    Modes: ``constant`` (lam), ``geometric`` (lam0 * factor^t floored at
    ``floor``), ``explicit`` (listed values, last one held).
    """

    mode: str
    lam: float | None = None
    lam0: float | None = None
    factor: float | None = None
    floor: float | None = None
    values: tuple[float, ...] | None = None

    @classmethod
    def constant(cls, lam: float) -> "LambdaSchedule":
        if not (math.isfinite(lam) and lam >= 0):
            raise ValueError("constant schedule needs lam >= 0")
        return cls(mode="constant", lam=float(lam))

    @classmethod
    def geometric(cls, lam0: float, factor: float, floor: float) -> "LambdaSchedule":
        if not (math.isfinite(lam0) and lam0 >= 0):
            raise ValueError("geometric schedule needs lam0 >= 0")
        if not (0.0 < factor < 1.0):
            raise ValueError("geometric schedule needs factor in (0, 1)")
        if not (math.isfinite(floor) and 0.0 <= floor <= lam0):
            raise ValueError("geometric schedule needs 0 <= floor <= lam0")
        return cls(mode="geometric", lam0=float(lam0), factor=float(factor), floor=float(floor))

    @classmethod
    def explicit(cls, values) -> "LambdaSchedule":
        vals = tuple(float(v) for v in values)
        if not vals or any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError("explicit schedule needs one or more values >= 0")
        return cls(mode="explicit", values=vals)

    def value(self, t: int) -> float:
        """Threshold for iteration t (0-based)."""
        if self.mode == "constant":
            return self.lam
        if self.mode == "geometric":
            return max(self.lam0 * self.factor**t, self.floor)
        return self.values[min(t, len(self.values) - 1)]


def parse_schedule(text: str) -> LambdaSchedule:
    """Parse ``constant:0.5`` / ``geometric:1.0,0.8,0.01`` / ``explicit:0.9,0.5``."""
    mode, _, body = text.partition(":")
    mode = mode.strip()
    try:
        vals = [float(v) for v in body.split(",")] if body.strip() else []
    except ValueError:
        raise ConfigurationError(f"schedule values must be numbers: {body!r}") from None
    if mode == "constant" and len(vals) == 1:
        return LambdaSchedule.constant(vals[0])
    if mode == "geometric" and len(vals) == 3:
        return LambdaSchedule.geometric(*vals)
    if mode == "explicit" and vals:
        return LambdaSchedule.explicit(vals)
    raise ConfigurationError(
        f"cannot parse schedule {text!r}; expected constant:LAM, "
        "geometric:LAM0,FACTOR,FLOOR or explicit:V1,V2,..."
    )


# ---------------------------------------------------------------------------
# solver configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    """How to run the iteration.

    rho is ``"auto"`` for (1 + rho_epsilon) * ||X||_2 or an explicit value
    (must be at least ||X||_2).  alpha in (0, 1] is the stepsize of the
    gradient half of the map; thresholds are adjusted per rule so that the
    fixed points still minimize the alpha-scaled objective.
    """

    rule: th.ThresholdRule
    rho: float | str = "auto"
    rho_epsilon: float = 0.01
    alpha: float = 1.0
    schedule: LambdaSchedule | None = None
    tol: float = 1e-8
    max_iter: int = 10000
    record_every: int = 1
    augmentation: str = "none"

    def __post_init__(self):
        if isinstance(self.rho, str):
            if self.rho != "auto":
                raise ConfigurationError(f"rho must be 'auto' or a number, got {self.rho!r}")
            if not (math.isfinite(self.rho_epsilon) and self.rho_epsilon >= 0):
                raise ConfigurationError("rho_epsilon must be >= 0")
        elif not (math.isfinite(self.rho) and self.rho > 0):
            raise ConfigurationError("rho must be positive and finite")
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigurationError("alpha must lie in (0, 1]")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if self.record_every < 1:
            raise ConfigurationError("record_every must be >= 1")
        if self.schedule is not None and self.rule.kind in ("ridge", "lr"):
            raise ConfigurationError(f"rule {self.rule.kind!r} has no threshold to schedule")
        if self.rule.kind in th.LAMBDA_KINDS and self.rule.lam is None and self.schedule is None:
            raise ConfigurationError(f"rule {self.rule.kind!r} needs lambda or a schedule")
        # validates the augmentation/rule pairing
        pen.PenaltySpec(rule=self.rule, augmentation=self.augmentation)


def stepsize_transform(rule: th.ThresholdRule, alpha: float):
    """Rule whose induced penalty equals alpha times the original one.

    Returns ``(rule_alpha, lam_scale)`` where the transformed threshold is
    ``lam_scale * lam``.  Only rule families closed under this scaling are
    supported; scad and lr reject alpha < 1.
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigurationError("alpha must lie in (0, 1]")
    if alpha == 1.0:
        return rule, 1.0
    kind = rule.kind
    if kind == "soft":
        return rule.with_lambda(alpha * rule.lam), alpha
    if kind == "hard":
        s = math.sqrt(alpha)
        return rule.with_lambda(s * rule.lam), s
    if kind == "mcp":
        out = replace(rule, lam=alpha * rule.lam, gamma=rule.gamma / alpha)
        return out, alpha
    if kind == "ridge":
        return replace(rule, eta=alpha * rule.eta), 1.0
    if kind in ("elastic-net", "berhu"):
        out = replace(rule, lam=alpha * rule.lam, eta=alpha * rule.eta)
        return out, alpha
    if kind == "hard-ridge":
        s = math.sqrt(alpha * (1.0 + alpha * rule.eta) / (1.0 + rule.eta))
        out = replace(rule, lam=s * rule.lam, eta=alpha * rule.eta)
        return out, s
    raise ConfigurationError(f"stepsize alpha < 1 is not supported for rule {kind!r}")


# ---------------------------------------------------------------------------
# spectral norm and scaling
# ---------------------------------------------------------------------------

def spectral_norm(X, tol: float = 1e-6, max_iter: int = 50000, seed: int = 0) -> float:
    """Largest singular value of X by power iteration on the smaller Gram matrix.

    Deterministic: the start vector comes from a fixed-seed generator.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0 or not np.any(X):
        return 0.0
    n, p = X.shape
    A = X.T @ X if p <= n else X @ X.T
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for k in range(max_iter):
        w = A @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if k >= 10 and abs(lam - lam_prev) <= 0.01 * tol * lam:
            break
        lam_prev = lam
    return math.sqrt(lam)


def scale_problem(problem: Problem, rho: float):
    """Return (scaled problem with design X/rho, unscale map for coefficients).

    Refuses rho below ||X||_2: the scaled design must satisfy ||X/rho||_2 <= 1
    for the iteration's objective-descent guarantee.
    """
    norm = spectral_norm(problem.X)
    if not (math.isfinite(rho) and rho > 0):
        raise ConfigurationError("rho must be positive and finite")
    if rho < norm * (1.0 - 1e-9):
        raise ConfigurationError(
            f"rho={rho:.6g} is below the design spectral norm {norm:.6g}; "
            "objective descent requires rho >= ||X||_2"
        )
    bstar = None if problem.beta_star is None else rho * problem.beta_star
    scaled = Problem(problem.X / rho, problem.y, beta_star=bstar, sigma=problem.sigma)

    def unscale(beta_scaled):
        return np.asarray(beta_scaled, dtype=float) / rho

    return scaled, unscale


def tisp_step(beta, scaled_problem: Problem, rule: th.ThresholdRule,
              lam: float | None = None, alpha: float = 1.0) -> np.ndarray:
    """One iteration beta <- Theta(beta + alpha * Xs'(y - Xs beta); lam_alpha).

    Operates in the scaled coordinate system (design Xs with norm <= 1).
    ``lam`` overrides the rule's threshold for this step; the alpha
    adjustment of the threshold is applied internally.
    """
    beta = np.asarray(beta, dtype=float)
    Xs, y = scaled_problem.X, scaled_problem.y
    if beta.shape != (Xs.shape[1],):
        raise ValueError(f"beta has shape {beta.shape}, expected ({Xs.shape[1]},)")
    rule_a, lam_scale = stepsize_transform(rule, alpha)
    override = None if lam is None else lam_scale * float(lam)
    v = beta + alpha * (Xs.T @ (y - Xs @ beta))
    return th.apply_vec(rule_a, v, override)


# ---------------------------------------------------------------------------
# iterate trace
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("iter", "objective", "fp_residual", "support", "pred_err", "est_err", "weighted_err")


@dataclass
class IterateTrace:
    """Per-iteration records of the solve.

    Error columns are present only when the problem carries beta_star.
    ``flagged`` lists iterations whose thresholding argument came within
    1e-12 of a jump discontinuity of the rule.
    """

    has_errors: bool
    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    fp_residual: list = field(default_factory=list)
    support: list = field(default_factory=list)
    pred_err: list = field(default_factory=list)
    est_err: list = field(default_factory=list)
    weighted_err: list = field(default_factory=list)
    flagged: list = field(default_factory=list)

    def record(self, t, obj, res, supp, errs):
        self.iterations.append(int(t))
        self.objective.append(float(obj))
        self.fp_residual.append(float(res))
        self.support.append(int(supp))
        if self.has_errors:
            self.pred_err.append(errs[0])
            self.est_err.append(errs[1])
            self.weighted_err.append(errs[2])

    def write_csv(self, dest) -> None:
        """Write the trace; `dest` is a path or a text file object."""
        if hasattr(dest, "write"):
            self._write(dest)
        else:
            with open(dest, "w", newline="") as f:
                self._write(f)

    def _write(self, f) -> None:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(len(self.iterations)):
            row = [
                self.iterations[i],
                repr(self.objective[i]),
                repr(self.fp_residual[i]),
                self.support[i],
            ]
            if self.has_errors:
                row += [repr(self.pred_err[i]), repr(self.est_err[i]), repr(self.weighted_err[i])]
            else:
                row += ["", "", ""]
            w.writerow(row)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# main solve loop
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    beta: np.ndarray
    trace: IterateTrace
    reason: str
    iterations: int
    rho: float
    theta_residual: float
    final_lambda: float | None
    objective: float

    @property
    def converged(self) -> bool:
        return self.reason == "converged"


def resolve_rho(problem: Problem, config: SolverConfig) -> float:
    """Concrete rho for a config: auto picks (1 + eps) * ||X||_2."""
    if isinstance(config.rho, str):
        return (1.0 + config.rho_epsilon) * spectral_norm(problem.X)
    return float(config.rho)


def solve(problem: Problem, config: SolverConfig, start=None) -> SolveResult:
    """Run the thresholding iteration until the sup-norm of successive
    iterates falls below config.tol.

    `start` is an initial coefficient vector in the original (unscaled)
    coordinate system; default is zero.  Returns the unscaled estimate,
    the iterate trace, and the termination reason ("converged" or
    "max_iter").  Raises SolverError if iterates become non-finite.
    """
    rule = config.rule
    if rule.kind in th.LAMBDA_KINDS and rule.lam is None and config.schedule is None:
        raise ConfigurationError(f"rule {rule.kind!r} needs a concrete lambda")
    rho = resolve_rho(problem, config)
    scaled, unscale = scale_problem(problem, rho)
    Xs, y = scaled.X, scaled.y
    rule_a, lam_scale = stepsize_transform(rule, config.alpha)
    pen_spec = pen.PenaltySpec(rule=rule, augmentation=config.augmentation)

    if start is None:
        beta = np.zeros(problem.p)
    else:
        beta = rho * np.asarray(start, dtype=float)
        if beta.shape != (problem.p,):
            raise ValueError(f"start has shape {beta.shape}, expected ({problem.p},)")

    trace = IterateTrace(has_errors=problem.beta_star is not None)
    bstar = problem.beta_star
    lam_t = None
    reason = "max_iter"
    it = 0

    for it in range(1, config.max_iter + 1):
        if config.schedule is not None:
            lam_t = config.schedule.value(it - 1)
        elif rule.kind in th.LAMBDA_KINDS:
            lam_t = rule.lam
        override = None if lam_t is None else lam_scale * lam_t

        resid = y - Xs @ beta
        v = beta + config.alpha * (Xs.T @ resid)
        jumps = th.discontinuities(rule_a, override)
        if jumps and v.size and np.min(np.abs(np.abs(v)[:, None] - np.array(jumps)[None, :])) < 1e-12:
            trace.flagged.append(it)
        beta_new = th.apply_vec(rule_a, v, override)
        if not np.all(np.isfinite(beta_new)):
            raise SolverError(
                f"non-finite iterate at iteration {it} "
                f"(max |gradient point| = {np.max(np.abs(v)):.3g}); "
                "check the scaling and threshold configuration"
            )
        fp_res = float(np.max(np.abs(beta_new - beta))) if problem.p else 0.0
        beta = beta_new
        done = fp_res <= config.tol or it == config.max_iter

        if it % config.record_every == 0 or done:
            r_new = y - Xs @ beta
            obj = float(0.5 * r_new @ r_new + np.sum(pen.penalty_theta(pen_spec, beta, lam_t)))
            errs = None
            if bstar is not None:
                delta = unscale(beta) - bstar
                xd = problem.X @ delta
                p_err = float(xd @ xd)
                e_err = float(delta @ delta)
                errs = (p_err, e_err, rho**2 * e_err - p_err)
            trace.record(it, obj, fp_res, int(np.count_nonzero(beta)), errs)

        if fp_res <= config.tol:
            reason = "converged"
            break

    # fixed-point residual at the final iterate, at the final threshold
    override = None if lam_t is None else lam_scale * lam_t
    v = beta + config.alpha * (Xs.T @ (y - Xs @ beta))
    theta_res = float(np.max(np.abs(beta - th.apply_vec(rule_a, v, override)))) if problem.p else 0.0

    r_fin = y - Xs @ beta
    obj_fin = float(0.5 * r_fin @ r_fin + np.sum(pen.penalty_theta(pen_spec, beta, lam_t)))
    return SolveResult(
        beta=unscale(beta),
        trace=trace,
        reason=reason,
        iterations=it,
        rho=rho,
        theta_residual=theta_res,
        final_lambda=lam_t,
        objective=obj_fin,
    )


# ---------------------------------------------------------------------------
# diagnostics and helpers
# ---------------------------------------------------------------------------

def theory_threshold(sigma: float, p: int, a_const: float = 1.0) -> float:
    """Noise-calibrated threshold A * sigma * sqrt(log(e*p))."""
    if sigma < 0 or p < 1:
        raise ValueError("need sigma >= 0 and p >= 1")
    return a_const * sigma * math.sqrt(1.0 + math.log(p))


def t_max_estimate(rho: float, beta0_error: float, sigma: float, lam: float,
                   j_star: int, kappa: float, max_iter: int = 10000) -> int:
    """Iterations to bring the geometric error term below the noise floor.

    ceil( log(rho^2 * beta0_error / (sigma^2 lam^2 J*)) / log(1/kappa) ),
    clamped to [1, max_iter].
    """
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    if min(beta0_error, sigma, lam) <= 0 or j_star < 1 or rho <= 0:
        raise ValueError("rho, beta0_error, sigma, lam must be > 0 and j_star >= 1")
    ratio = rho**2 * beta0_error / (sigma**2 * lam**2 * j_star)
    if ratio <= 1.0:
        return 1
    t = math.log(ratio) / math.log(1.0 / kappa)
    return int(min(max(math.ceil(t), 1), max_iter))


def triangle_inequality_check(beta_t, beta_t1, probe, scaled_problem: Problem, spec) -> float:
    """Slack of the iteration triangle inequality at a probe point.

    For one step beta_t -> beta_t1 of the scaled iteration and any probe b:

        (1-L)/2 ||beta_t1 - b||^2 + 1/2 ||beta_t1 - beta_t||_W^2
            <= 1/2 ||beta_t - b||_W^2 + f(b) - f(beta_t1),

    with W = I - Xs'Xs and f the scaled objective.  Returns rhs - lhs
    (nonnegative up to roundoff when ||Xs||_2 <= 1).
    """
    spec = spec if isinstance(spec, pen.PenaltySpec) else pen.PenaltySpec(rule=spec)
    Xs, y = scaled_problem.X, scaled_problem.y
    beta_t = np.asarray(beta_t, dtype=float)
    beta_t1 = np.asarray(beta_t1, dtype=float)
    probe = np.asarray(probe, dtype=float)
    L = spec.rule.contraction

    def wnorm2(v):
        xv = Xs @ v
        return float(v @ v - xv @ xv)

    def f(b):
        r = Xs @ b - y
        return float(0.5 * r @ r + np.sum(pen.penalty_theta(spec, b)))

    lhs = 0.5 * (1.0 - L) * float((beta_t1 - probe) @ (beta_t1 - probe)) + 0.5 * wnorm2(beta_t1 - beta_t)
    rhs = 0.5 * wnorm2(beta_t - probe) + f(probe) - f(beta_t1)
    return rhs - lhs


def gaussian_starts(problem: Problem, n_starts: int, seed: int = 0, spread: float = 1.0):
    """Random starts: Gaussian perturbations of a least-squares pilot."""
    pilot = np.linalg.lstsq(problem.X, problem.y, rcond=None)[0]
    scale = spread * (np.linalg.norm(pilot) / math.sqrt(max(problem.p, 1)) + 1e-2)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    return [pilot + scale * rng.standard_normal(problem.p) for _ in range(n_starts)]
