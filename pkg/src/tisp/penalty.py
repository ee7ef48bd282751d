"""Penalties induced by thresholding rules.

Each rule Theta induces P_Theta(t) = integral_0^{|t|} (Theta^{-1}(u) - u) du.
The objective actually minimized by the fixed-point iteration may add a
nonnegative term q that vanishes on the range of Theta; the `augmentation`
field of `PenaltySpec` selects the classical choices for the hard-type rules
(capped-l1 / l0 for hard, l0+l2 for hard-ridge).

Reference penalties: penalty_hard, penalty_l0, penalty_l1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .thresholding import (
    ThresholdRule,
    _lr_jump,
    _lr_zero_boundary,
    integrand_pieces,
    inverse,
)

AUGMENTATIONS = ("none", "capped-l1", "l0", "l0+l2")


@dataclass(frozen=True)
class PenaltySpec:
    """A thresholding rule together with an optional range-vanishing add-on."""

    rule: ThresholdRule
    augmentation: str = "none"

    def __post_init__(self):
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(f"unknown augmentation {self.augmentation!r}")
        if self.augmentation in ("capped-l1", "l0") and self.rule.kind != "hard":
            raise ValueError(f"augmentation {self.augmentation!r} is only valid for the hard rule")
        if self.augmentation == "l0+l2" and self.rule.kind != "hard-ridge":
            raise ValueError("augmentation 'l0+l2' is only valid for the hard-ridge rule")


def _as_spec(spec) -> PenaltySpec:
    return spec if isinstance(spec, PenaltySpec) else PenaltySpec(rule=spec)


# ---------------------------------------------------------------------------
# reference penalties
# ---------------------------------------------------------------------------

def penalty_hard(t, lam: float):
    """Penalty induced by hard thresholding at lam."""
    z = np.abs(np.asarray(t, dtype=float))
    out = np.where(z < lam, lam * z - 0.5 * z**2, 0.5 * lam**2)
    return out if out.ndim else float(out)


def penalty_l0(t, lam: float):
    """(lam^2/2) per nonzero component."""
    z = np.abs(np.asarray(t, dtype=float))
    out = np.where(z != 0.0, 0.5 * lam**2, 0.0)
    return out if out.ndim else float(out)


def penalty_l1(t, lam: float):
    """lam * |t|."""
    z = np.abs(np.asarray(t, dtype=float))
    out = lam * z
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# induced penalty, closed forms
# ---------------------------------------------------------------------------

def _penalty_theta_closed(rule: ThresholdRule, z: np.ndarray, lam: float | None) -> np.ndarray:
    kind = rule.kind
    if kind == "soft":
        return lam * z
    if kind == "ridge":
        return 0.5 * rule.eta * z**2
    if kind == "hard":
        return np.where(z < lam, lam * z - 0.5 * z**2, 0.5 * lam**2)
    if kind == "elastic-net":
        return lam * z + 0.5 * rule.eta * z**2
    if kind == "berhu":
        eta = rule.eta
        if eta == 0.0:
            return lam * z
        return np.where(z <= lam / eta, lam * z, 0.5 * eta * z**2 + lam**2 / (2.0 * eta))
    if kind == "hard-ridge":
        eta = rule.eta
        knot = lam / (1.0 + eta)
        return np.where(
            z < knot,
            lam * z - 0.5 * z**2,
            0.5 * eta * z**2 + lam**2 / (2.0 * (1.0 + eta)),
        )
    if kind == "scad":
        a = rule.a
        mid = (2.0 * a * lam * z - z**2 - lam**2) / (2.0 * (a - 1.0))
        top = 0.5 * lam**2 * (a + 1.0)
        return np.where(z <= lam, lam * z, np.where(z <= a * lam, mid, top))
    if kind == "mcp":
        g = rule.gamma
        return np.where(z < g * lam, lam * z - z**2 / (2.0 * g), 0.5 * g * lam**2)
    if kind == "lr":
        zeta, r = rule.zeta, rule.r
        if zeta == 0.0:
            return np.zeros_like(z)
        t0 = _lr_zero_boundary(zeta, r)
        jump = _lr_jump(zeta, r)
        low = t0 * z - 0.5 * z**2
        head = t0 * jump - 0.5 * jump**2
        zsafe = np.where(z > 0, z, 1.0)
        high = head + zeta * (zsafe**r - jump**r)
        return np.where(z <= jump, low, high)
    raise AssertionError(kind)


def penalty_theta(spec, t, lam_override: float | None = None):
    """Induced penalty P_Theta plus the configured augmentation, componentwise.

    `spec` may be a `PenaltySpec` or a bare `ThresholdRule`.
    """
    spec = _as_spec(spec)
    rule = spec.rule
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("penalty input must be finite")
    if lam_override is not None and rule.kind in ("ridge", "lr"):
        raise ValueError(f"rule {rule.kind!r} has no threshold parameter to override")
    lam = rule.lam if lam_override is None else float(lam_override)
    z = np.abs(t)
    base = _penalty_theta_closed(rule, z, lam)

    if spec.augmentation == "none":
        out = base
    elif spec.augmentation == "capped-l1":
        out = np.minimum(lam * z, 0.5 * lam**2)
    elif spec.augmentation == "l0":
        out = np.where(z != 0.0, 0.5 * lam**2, 0.0)
    else:  # l0+l2 on hard-ridge
        eta = rule.eta
        out = np.where(z != 0.0, lam**2 / (2.0 * (1.0 + eta)), 0.0) + 0.5 * eta * z**2
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# quadrature route (independent of the closed forms)
# ---------------------------------------------------------------------------

def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 50) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(
            m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
        )

    return recurse(a, b, fa, fm, fb, whole, tol, depth)


def quadrature_kinks(rule: ThresholdRule, lam_override: float | None = None) -> list[float]:
    """Interior u-locations where the penalty integrand changes branch."""
    if rule.kind == "lr":
        jump = _lr_jump(rule.zeta, rule.r)
        return [jump] if jump > 0 else []
    pieces = integrand_pieces(rule, lam_override)
    return [lo for (lo, _, _, _) in pieces if lo > 0.0]


def penalty_theta_quadrature(rule: ThresholdRule, t: float, tol: float = 1e-10,
                             lam_override: float | None = None) -> float:
    """P_Theta(t) by adaptive Simpson quadrature of Theta^{-1}(u) - u.

    The integration domain is split at integrand kinks so each panel is
    smooth.  Serves as the independent cross-check of the closed forms.
    """
    z = abs(float(t))
    if z == 0.0:
        return 0.0
    cuts = [0.0] + [k for k in quadrature_kinks(rule, lam_override) if k < z] + [z]

    def integrand(u):
        return inverse(rule, u, lam_override) - u

    total = 0.0
    per_piece = tol / max(len(cuts) - 1, 1)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        total += _adaptive_simpson(integrand, lo, hi, per_piece)
    return total


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def energy(spec, problem, beta, rho: float, lam_override: float | None = None) -> float:
    """Objective 0.5*||X beta - y||^2 + sum_j P(rho*|beta_j|).

    `problem` is anything with X and y attributes; beta is in the
    unscaled coordinate system.
    """
    spec = _as_spec(spec)
    beta = np.asarray(beta, dtype=float)
    X, y = problem.X, problem.y
    if beta.shape != (X.shape[1],):
        raise ValueError(f"beta has shape {beta.shape}, expected ({X.shape[1]},)")
    resid = X @ beta - y
    pen = penalty_theta(spec, rho * beta, lam_override)
    return float(0.5 * resid @ resid + np.sum(pen))
