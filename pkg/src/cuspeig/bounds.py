"""Closed-form lower bounds on the first nontrivial Neumann (p,q)-eigenvalue.

The composition method transports a Sobolev-Poincare inequality from the
reference cone onto the cusp domain through the map phi_a and yields

    1/lambda  <=  inf_a  K(a)^p * M(a)^p * B^p,

where K(a) bounds the (p,s)-distortion of phi_a, M(a) the L^{r/(r-q)}
Jacobian factor, and B a Sobolev-Poincare constant of the cone.  All three
factors are available in closed form, so the infimum reduces to a smooth
one-dimensional minimization over the admissible window of a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CuspDomain

TWELVE_PI = 12.0 * math.pi

# Open-interval endpoints are shrunk by this margin before optimizing;
# the objective extends continuously to the closure.
_ENDPOINT_MARGIN = 1e-9

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class BoundConfigError(ValueError):
    """Exponent tuple violates an admissibility condition."""


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n (pi for n=2, 4*pi/3 for n=3)."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class ExponentConfig:
    """Admissible exponent tuple (p, q, s, r) for dimension n and cusp gamma.

    Validity requires 1 < s < p < gamma, 1 < q < p*_gamma, q < r, s < n,
    and 0 <= 1/s - 1/r < 1/n, where p*_gamma = gamma p / (gamma - p) is the
    critical embedding exponent.  The last condition is r < ns/(n-s), i.e.
    the reference-cone Poincare pair (r, s) stays subcritical.
    """

    p: float
    q: float
    s: float
    r: float
    n: int
    gamma: float

    def __post_init__(self):
        p, q, s, r, n, gamma = self.p, self.q, self.s, self.r, self.n, self.gamma
        if not (1.0 < s < p < gamma):
            raise BoundConfigError(f"requires 1<s<p<gamma, got s={s}, p={p}, gamma={gamma}")
        if not gamma >= n:
            raise BoundConfigError(f"requires gamma >= n, got gamma={gamma}, n={n}")
        p_star = gamma * p / (gamma - p)
        if not (1.0 < q < p_star):
            raise BoundConfigError(
                f"requires 1<q<p*_gamma={p_star:.6g}, got q={q}"
            )
        if not q < r:
            raise BoundConfigError(f"requires q<r, got q={q}, r={r}")
        if not s < n:
            raise BoundConfigError(f"requires s<n, got s={s}, n={n}")
        delta = 1.0 / s - 1.0 / r
        if not (0.0 <= delta < 1.0 / n):
            raise BoundConfigError(
                f"requires 0 <= 1/s-1/r < 1/n (i.e. s <= r < ns/(n-s)), "
                f"got delta={delta:.6g}"
            )

    @property
    def p_star_gamma(self) -> float:
        return self.gamma * self.p / (self.gamma - self.p)

    @property
    def delta(self) -> float:
        return 1.0 / self.s - 1.0 / self.r

    @classmethod
    def with_defaults(
        cls,
        n: int,
        p: float,
        q: float,
        gamma: float,
        s: float | None = None,
        r: float | None = None,
    ) -> "ExponentConfig":
        """Fill (s, r) when the caller only fixes (p, q).

        s is chosen so that ns/(n-s) exceeds p*_gamma by 5 percent, clamped
        so the mapping-exponent window stays nonempty (for gamma close to p
        the unclamped rule empties it); r sits halfway between q and the
        subcritical ceiling.  Both can be overridden.
        """
        p_star = gamma * p / (gamma - p)
        if s is None:
            target = 1.05 * p_star
            s = n * target / (n + target)
            # Nonempty window needs p(n-s)/(s(gamma-p)) > n/gamma.
            s_window = gamma * p * n / (gamma * p + n * (gamma - p))
            s = min(s, 0.98 * s_window)
        if r is None:
            r = 0.5 * (q + min(p_star, n * s / (n - s)))
        return cls(p=p, q=q, s=s, r=r, n=n, gamma=gamma)

    @classmethod
    def from_domain(
        cls,
        domain: CuspDomain,
        p: float,
        q: float,
        s: float | None = None,
        r: float | None = None,
    ) -> "ExponentConfig":
        return cls.with_defaults(domain.n, p, q, domain.gamma, s=s, r=r)


def k_ps_bound(a: float, p: float, domain: CuspDomain, s: float | None = None) -> float:
    """Distortion bound a**(-1/p) * sqrt(sum (a g_i - 1)^2 + n - 1 + a^2).

    Bounds the (p,s)-distortion of phi_a on the reference cone.  The
    admissible window is (n-p)/(gamma-p) < a < p(n-s)/(s(gamma-p)); the
    upper end is only checked when s is supplied.
    """
    n, gamma = domain.n, domain.gamma
    if gamma < p:
        raise BoundConfigError(f"requires p <= gamma, got p={p}, gamma={gamma}")
    if gamma > p:
        # The admissibility window degenerates at gamma = p (Lipschitz
        # corner); there the formula is evaluated as a continuous limit.
        lo = (n - p) / (gamma - p)
        if not a > lo:
            raise BoundConfigError(f"requires a > (n-p)/(gamma-p)={lo:.6g}, got a={a}")
        if s is not None:
            hi = p * (n - s) / (s * (gamma - p))
            if not a < hi:
                raise BoundConfigError(
                    f"requires a < p(n-s)/(s(gamma-p))={hi:.6g}, got a={a}"
                )
    if not a > 0.0:
        raise BoundConfigError(f"requires a > 0, got a={a}")
    square_sum = sum((a * g - 1.0) ** 2 for g in domain.gamma_exponents)
    return a ** (-1.0 / p) * math.sqrt(square_sum + (n - 1) + a * a)


def m_rq_bound(a: float, q: float, cfg: ExponentConfig) -> float:
    """Jacobian factor bound a**(1/q), valid for a >= n/gamma.

    Below n/gamma the chain a > nq/(gamma r) can fail and the integral may
    diverge; at a = n/gamma (the Lipschitz corner a = 1, gamma = n) the
    integrand exponent vanishes and the bound still holds.
    """
    if not a >= cfg.n / cfg.gamma:
        raise BoundConfigError(
            f"requires a >= n/gamma={cfg.n / cfg.gamma:.6g} for a convergent "
            f"Jacobian integral, got a={a}"
        )
    return a ** (1.0 / q)


def m_rq_exact(a: float, cfg: ExponentConfig, domain: CuspDomain) -> float:
    """Exact Jacobian factor of phi_a on the reference cone.

    Integrating |J|**(r/(r-q)) over the cone reduces to
    int_0^1 x**(E + n - 1) dx with E = (a gamma - n) r / (r - q), giving
    a**(1/q) * (1/(E + n))**((r-q)/(r q)).  Never exceeds a**(1/q).
    """
    n, gamma, r, q = domain.n, domain.gamma, cfg.r, cfg.q
    exponent = (a * gamma - n) * r / (r - q)
    if not exponent + n - 1.0 > -1.0:
        raise BoundConfigError(
            f"divergent Jacobian integral: requires (a*gamma-n)r/(r-q)+n-1 > -1, "
            f"got {exponent + n - 1.0:.6g}"
        )
    return a ** (1.0 / q) * (1.0 / (exponent + n)) ** ((r - q) / (r * q))


def b_rs_estimate(n: int, r: float, s: float) -> float:
    """(r,s)-Sobolev-Poincare constant estimate for the reference cone.

    Evaluates n * ((1-d)/(1/n-d))**(1-d) * w_n**(1-1/n) * (1/(n+1)!)**(1/n-d)
    with d = 1/s - 1/r and w_n the unit-ball volume.  Requires 0 <= d < 1/n.
    """
    delta = 1.0 / s - 1.0 / r
    if not (0.0 <= delta < 1.0 / n):
        raise BoundConfigError(
            f"requires 0 <= 1/s-1/r < 1/n, got delta={delta:.6g} for n={n}"
        )
    omega = unit_ball_volume(n)
    return (
        n
        * ((1.0 - delta) / (1.0 / n - delta)) ** (1.0 - delta)
        * omega ** (1.0 - 1.0 / n)
        * (1.0 / math.factorial(n + 1)) ** (1.0 / n - delta)
    )


def admissible_interval(cfg: ExponentConfig) -> tuple[float, float]:
    """Window (n/gamma, p(n-s)/(s(gamma-p))) of admissible mapping exponents.

    The lower endpoint dominates (n-p)/(gamma-p), so n/gamma is the binding
    constraint.  Raises when the window is empty; pick a smaller s then.
    """
    lo = cfg.n / cfg.gamma
    hi = cfg.p * (cfg.n - cfg.s) / (cfg.s * (cfg.gamma - cfg.p))
    if not lo < hi:
        raise BoundConfigError(
            f"empty admissible interval ({lo:.6g}, {hi:.6g}); decrease s"
        )
    return lo, hi


def _golden_section_min(f, lo: float, hi: float, tol: float = 1e-10):
    """Golden-section search for the minimum of a unimodal scalar function."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    x = 0.5 * (lo + hi)
    return x, f(x)


@dataclass
class BoundReport:
    """Optimized composite bound: lambda >= 1 / upper_on_inverse_lambda."""

    a_star: float
    k_ps: float
    m_rq: float
    b_rs: float
    upper_on_inverse_lambda: float
    lambda_lower: float
    interval: tuple[float, float]
    evaluations: list[tuple[float, float]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "a_star": self.a_star,
            "k_ps": self.k_ps,
            "m_rq": self.m_rq,
            "b_rs": self.b_rs,
            "upper_on_inverse_lambda": self.upper_on_inverse_lambda,
            "lambda_lower": self.lambda_lower,
            "interval": list(self.interval),
        }


def _objective(a: float, cfg: ExponentConfig, domain: CuspDomain, b_const: float) -> float:
    square_sum = sum((a * g - 1.0) ** 2 for g in domain.gamma_exponents)
    return (
        a ** (cfg.p / cfg.q - 1.0)
        * (square_sum + (cfg.n - 1) + a * a) ** (cfg.p / 2.0)
        * b_const**cfg.p
    )


def lambda_lower_bound(
    cfg: ExponentConfig,
    domain: CuspDomain,
    grid: int = 512,
    a_tol: float = 1e-10,
    b_constant: float | None = None,
    fixed_a: float | None = None,
    allow_n2: bool = False,
) -> BoundReport:
    """Minimize the composite bound over the admissible mapping exponent.

    The objective F(a) = a**(p/q-1) (sum (a g_i - 1)^2 + n - 1 + a^2)**(p/2)
    * B**p equals (K M B)**p and is smooth on the window, so a coarse grid
    scan followed by golden-section refinement locates the infimum.  Pass
    ``b_constant`` to replace the Poincare estimate (e.g. by 12*pi) and
    ``fixed_a`` to pin the mapping exponent instead of optimizing.

    The composite estimate is stated for n >= 3; 2-D evaluation is refused
    unless ``allow_n2`` is set.
    """
    if domain.n == 2 and not allow_n2:
        raise BoundConfigError(
            "composite bound is stated for n >= 3; pass allow_n2=True to "
            "evaluate the 2-D formula anyway"
        )
    if domain.n != cfg.n or abs(domain.gamma - cfg.gamma) > 1e-12:
        raise BoundConfigError("config does not match the domain (n, gamma)")
    b_const = b_rs_estimate(cfg.n, cfg.r, cfg.s) if b_constant is None else b_constant
    lo, hi = admissible_interval(cfg)
    lo_c, hi_c = lo + _ENDPOINT_MARGIN, hi - _ENDPOINT_MARGIN

    def f(a: float) -> float:
        val = _objective(a, cfg, domain, b_const)
        if not math.isfinite(val):
            raise BoundConfigError(f"non-finite objective at a={a}")
        return val

    grid_a = np.linspace(lo_c, hi_c, grid)
    grid_f = [f(a) for a in grid_a]
    evaluations = list(zip(grid_a.tolist(), grid_f))
    if fixed_a is not None:
        if not lo - 1e-12 <= fixed_a <= hi + 1e-12:
            raise BoundConfigError(
                f"pinned exponent a={fixed_a} outside admissible interval "
                f"({lo:.6g}, {hi:.6g})"
            )
        a_star, f_star = fixed_a, f(fixed_a)
    else:
        k = int(np.argmin(grid_f))
        blo = grid_a[max(k - 1, 0)]
        bhi = grid_a[min(k + 1, grid - 1)]
        a_star, f_star = _golden_section_min(f, blo, bhi, tol=a_tol)
        if grid_f[k] < f_star:
            a_star, f_star = grid_a[k], grid_f[k]
    return BoundReport(
        a_star=float(a_star),
        k_ps=k_ps_bound(a_star, cfg.p, domain, s=cfg.s),
        m_rq=m_rq_bound(a_star, cfg.q, cfg),
        b_rs=b_const,
        upper_on_inverse_lambda=f_star,
        lambda_lower=1.0 / f_star,
        interval=(lo, hi),
        evaluations=evaluations,
    )


def lipschitz_bound_report(n: int, p: float, q: float, s: float, r: float) -> BoundReport:
    """Degenerate Lipschitz-cone bound through the Poincare constant alone.

    When gamma = n the identity map already carries the cone onto itself
    and both the distortion and Jacobian factors of the identity are
    volume powers <= 1, so 1/lambda <= B**p with a = 1 remains valid.
    Used when the optimization window cannot be formed (e.g. p >= gamma).
    """
    if not q < r:
        raise BoundConfigError(f"requires q<r, got q={q}, r={r}")
    if not s < p:
        raise BoundConfigError(f"requires s<p, got s={s}, p={p}")
    b_const = b_rs_estimate(n, r, s)
    f_star = b_const**p
    return BoundReport(
        a_star=1.0,
        k_ps=1.0,
        m_rq=1.0,
        b_rs=b_const,
        upper_on_inverse_lambda=f_star,
        lambda_lower=1.0 / f_star,
        interval=(1.0, 1.0),
        evaluations=[(1.0, f_star)],
    )


def lambda_32_lower_bound(gamma_1: float, gamma_2: float) -> float:
    """Closed-form lower bound for the first Neumann (3,2)-eigenvalue in 3-D.

    For a 3-D cusp with exponents (g1, g2) and 3 <= gamma < 6 the choice
    a = 1, r = 5/2, s = 3/2 with the rounded Poincare constant 12*pi gives

        lambda >= (12 pi)**-3 * ((g1-1)^2 + (g2-1)^2 + 3)**(-3/2).

    gamma = 3 (the Lipschitz cone) is included as the continuous limit.
    """
    gamma = 1.0 + gamma_1 + gamma_2
    if not (3.0 <= gamma < 6.0):
        raise BoundConfigError(
            f"formula requires 3 <= gamma < 6 (a = 1 admissible), got gamma={gamma}"
        )
    square_sum = (gamma_1 - 1.0) ** 2 + (gamma_2 - 1.0) ** 2 + 3.0
    return TWELVE_PI ** (-3.0) * square_sum ** (-1.5)
