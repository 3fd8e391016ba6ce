"""Branching mechanisms and the scale quantities built from them.

A mechanism is the convex function

    psi(lam) = b*lam + c*lam**2 + sum_i term_i(lam)

where each jump term is either a point mass at z with weight w,

    w * (exp(-lam*z) - 1 + lam*z),

or a Gamma(k, rho) density with weight w,

    w * ((rho/(rho+lam))**k - 1 + k*lam/rho).

Conventions used throughout the package:

* criticality is read off the sign of b = psi'(0): b > 0 subcritical,
  b = 0 critical, b < 0 supercritical;
* eta is the largest nonnegative root of psi; eta > 0 exactly in the
  supercritical case;
* the Grey condition (finite tail integral of 1/psi) holds within this
  parametric class if and only if c > 0, and the height/flow quantities
  below require it;
* v_of(a) solves  integral_{v}^{inf} dr/psi(r) = a  (height tail under
  the excursion normalization) and u_of(a, lam) solves
  integral_{u}^{lam} dr/psi(r) = a  (Laplace flow of the level mass).

Tail integrals are evaluated on two smooth charts: r = eta + e^s near
the root and r = 1/x at infinity, where x**2*psi(1/x) -> c removes the
singularity.  Quadratic mechanisms (no jump part) take closed forms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize, stats


class DomainError(ValueError):
    """Input outside an operation's stated domain."""


class NumericError(RuntimeError):
    """Quadrature or root-finding failed to reach its tolerance."""


_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-12, limit=400)


def _quad(f, lo, hi):
    val, err = integrate.quad(f, lo, hi, **_QUAD_OPTS)
    if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise NumericError(f"quadrature failed on [{lo}, {hi}]: value {val}, err {err}")
    return val


@dataclass(frozen=True)
class PointMass:
    """Jump primitive: atom of weight w at size z."""

    z: float
    w: float

    def validate(self):
        if not (self.z > 0 and self.w >= 0 and math.isfinite(self.z + self.w)):
            raise DomainError(f"point primitive needs z > 0, w >= 0: {self}")

    def term(self, lam):
        x = lam * self.z
        return self.w * (np.expm1(-x) + x)

    def dterm(self, lam):
        # d/dlam = w*z*(1 - e^{-lam z})
        return -self.w * self.z * np.expm1(-lam * self.z)

    def d2term(self, lam):
        return self.w * self.z * self.z * np.exp(-lam * self.z)

    def x2term(self, x):
        # x^2 * term(1/x), stable as x -> 0
        z, w = self.z, self.w
        return w * (x * x * math.exp(-z / x) - x * x + z * x)

    # unit-measure quantities (weight stripped), used by family kernels
    def unit_laplace_defect(self, lam):
        return -np.expm1(-lam * self.z)

    def unit_laplace_defect_dlam(self, lam):
        return self.z * np.exp(-lam * self.z)

    @property
    def unit_first_moment(self):
        return self.z

    @property
    def unit_second_moment(self):
        return self.z * self.z

    def scaled(self, factor):
        return PointMass(self.z, self.w * factor)

    def conjugate(self, theta):
        return PointMass(self.z, self.w * math.exp(-theta * self.z))

    def gw_pmf(self, n, ks):
        """Weighted offspring pmf contribution: w * Poisson(n*z) at ks."""
        return self.w * stats.poisson.pmf(ks, n * self.z)

    def gw_quantile(self, n, q):
        return int(stats.poisson.ppf(q, n * self.z))

    def sample_sizes(self, rng, size):
        return np.full(size, self.z)

    def sample_sizes_biased(self, rng, size):
        return np.full(size, self.z)

    def to_dict(self):
        return {"type": "point", "z": self.z, "w": self.w}


@dataclass(frozen=True)
class GammaDensity:
    """Jump primitive: Gamma(k, rho) density with total weight w."""

    k: float
    rho: float
    w: float

    def validate(self):
        if not (self.k > 0 and self.rho > 0 and self.w >= 0):
            raise DomainError(f"gamma primitive needs k, rho > 0, w >= 0: {self}")

    def term(self, lam):
        r = np.asarray(lam, dtype=float) / self.rho
        return self.w * (np.expm1(-self.k * np.log1p(r)) + self.k * r)

    def dterm(self, lam):
        # d/dlam = w*(k/rho)*(1 - (rho/(rho+lam))^{k+1})
        r = np.asarray(lam, dtype=float) / self.rho
        return -self.w * self.k / self.rho * np.expm1(-(self.k + 1) * np.log1p(r))

    def d2term(self, lam):
        base = self.rho / (self.rho + lam)
        return self.w * self.k * (self.k + 1) / self.rho**2 * base ** (self.k + 2)

    def x2term(self, x):
        k, rho, w = self.k, self.rho, self.w
        s = rho * x
        return w * (x * x * (s / (s + 1.0)) ** k - x * x + k * x / rho)

    def unit_laplace_defect(self, lam):
        r = np.asarray(lam, dtype=float) / self.rho
        return -np.expm1(-self.k * np.log1p(r))

    def unit_laplace_defect_dlam(self, lam):
        base = self.rho / (self.rho + lam)
        return self.k / self.rho * base ** (self.k + 1)

    @property
    def unit_first_moment(self):
        return self.k / self.rho

    @property
    def unit_second_moment(self):
        return self.k * (self.k + 1) / self.rho**2

    def scaled(self, factor):
        return GammaDensity(self.k, self.rho, self.w * factor)

    def conjugate(self, theta):
        if self.rho + theta <= 0:
            raise DomainError(
                f"conjugate shift {theta} leaves gamma rate {self.rho} nonpositive"
            )
        factor = (self.rho / (self.rho + theta)) ** self.k
        return GammaDensity(self.k, self.rho + theta, self.w * factor)

    def gw_pmf(self, n, ks):
        """Weighted offspring pmf: w * NegBinomial(k, rho/(rho+n)) at ks."""
        p = self.rho / (self.rho + n)
        return self.w * stats.nbinom.pmf(ks, self.k, p)

    def gw_quantile(self, n, q):
        return int(stats.nbinom.ppf(q, self.k, self.rho / (self.rho + n)))

    def sample_sizes(self, rng, size):
        return rng.gamma(self.k, 1.0 / self.rho, size)

    def sample_sizes_biased(self, rng, size):
        # z-weighted gamma density is again gamma with shape k+1
        return rng.gamma(self.k + 1.0, 1.0 / self.rho, size)

    def to_dict(self):
        return {"type": "gamma", "k": self.k, "rho": self.rho, "w": self.w}


def primitive_from_dict(d):
    kind = d.get("type")
    if kind == "point":
        return PointMass(float(d["z"]), float(d["w"]))
    if kind == "gamma":
        return GammaDensity(float(d["k"]), float(d["rho"]), float(d["w"]))
    raise DomainError(f"unknown jump primitive type {kind!r}")


@dataclass(frozen=True)
class Mechanism:
    b: float
    c: float
    m: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(self.m))
        if not (math.isfinite(self.b) and math.isfinite(self.c)) or self.c < 0:
            raise DomainError(f"need finite b and c >= 0, got b={self.b}, c={self.c}")
        for p in self.m:
            p.validate()

    # ------------------------------------------------------------ evaluation

    def psi(self, lam):
        lam = np.asarray(lam, dtype=float) if not np.isscalar(lam) else lam
        out = self.b * lam + self.c * lam * lam
        for p in self.m:
            out = out + p.term(lam)
        return out

    def dpsi(self, lam):
        out = self.b + 2.0 * self.c * lam
        for p in self.m:
            out = out + p.dterm(lam)
        return out

    def d2psi(self, lam):
        out = 2.0 * self.c + 0.0 * lam
        for p in self.m:
            out = out + p.d2term(lam)
        return out

    def derivatives(self, lam):
        return self.psi(lam), self.dpsi(lam), self.d2psi(lam)

    def _psi_x2(self, x):
        # x^2 * psi(1/x) on the 1/r chart; smooth down to x = 0 (value c)
        out = self.c + self.b * x
        for p in self.m:
            out += p.x2term(x)
        return out

    def criticality(self):
        if self.b > 0:
            return "subcritical"
        if self.b == 0:
            return "critical"
        return "supercritical"

    @property
    def is_grey(self):
        return self.c > 0

    def _require_grey(self, what):
        if not self.is_grey:
            raise DomainError(f"{what} requires the Grey condition (c > 0 here)")

    # ------------------------------------------------------------- root, inverse

    @cached_property
    def eta(self):
        """Largest root of psi; 0 unless supercritical."""
        if self.b >= 0:
            return 0.0
        if self.c == 0 and not self.m:
            raise DomainError("psi = b*lam with b < 0 has no positive root")
        hi = -self.b / self.c if self.c > 0 else 1.0
        for _ in range(2000):
            if self.psi(hi) >= 0:
                break
            hi *= 2.0
        else:
            raise DomainError("psi stays negative: no largest root")
        if self.psi(hi) == 0.0:
            return hi
        lo = hi * 1e-12
        if self.psi(lo) >= 0:  # pragma: no cover - b < 0 forces psi(lo) < 0
            raise NumericError("failed to bracket the largest root")
        root = optimize.brentq(self.psi, lo, hi, xtol=1e-300, rtol=8.9e-16)
        for _ in range(2):
            d = self.dpsi(root)
            if d > 0:
                root -= self.psi(root) / d
        return float(root)

    def psi_inverse(self, y):
        """Largest lam with psi(lam) = y."""
        if not math.isfinite(y):
            raise DomainError(f"psi_inverse needs finite y, got {y}")
        if y < 0:
            return self._psi_inverse_dip(y)
        if y == 0.0:
            return self.eta
        if not self.m and self.c > 0:
            return (-self.b + math.sqrt(self.b * self.b + 4.0 * self.c * y)) / (
                2.0 * self.c
            )
        eta = self.eta
        hi = max(eta, 1.0)
        for _ in range(2000):
            if self.psi(hi) >= y:
                break
            hi *= 2.0
        else:
            raise DomainError(f"psi never reaches {y}")
        lam = optimize.brentq(
            lambda x: self.psi(x) - y, eta, hi, xtol=1e-300, rtol=8.9e-16
        )
        for _ in range(2):
            lam -= (self.psi(lam) - y) / self.dpsi(lam)
        return float(lam)

    def _psi_inverse_dip(self, y):
        # supercritical psi dips below zero on (0, eta); take the larger branch
        if self.b >= 0:
            raise DomainError(f"psi >= 0 on [0, inf): no solution of psi = {y}")
        eta = self.eta
        lam_min = optimize.brentq(self.dpsi, 0.0, eta, xtol=1e-300, rtol=8.9e-16)
        if y < self.psi(lam_min):
            raise DomainError(f"{y} below the minimum {self.psi(lam_min)} of psi")
        return float(
            optimize.brentq(
                lambda x: self.psi(x) - y, lam_min, eta, xtol=1e-300, rtol=8.9e-16
            )
        )

    # ---------------------------------------------------------- tail integrals

    def tail_time(self, v, power=1):
        """integral_v^inf dr / psi(r)**power; needs v > eta and Grey."""
        self._require_grey("tail_time")
        if power == 1 and not self.m:
            if v <= self.eta:
                raise DomainError(f"tail integral needs v > eta = {self.eta}")
            if self.b == 0.0:
                return 1.0 / (self.c * v)
            return math.log1p(self.b / (self.c * v)) / self.b
        return _tail_time_quad(self, v, power)

    def _invert_tail(self, target):
        # solve tail_time(v) = target for v > eta on the log chart s = ln(v-eta)
        eta = self.eta
        if not self.m:
            if self.b == 0.0:
                return 1.0 / (self.c * target)
            return self.b / (self.c * math.expm1(target * self.b))
        f = lambda s: self.tail_time(eta + math.exp(s)) - target
        proxy = (
            1.0 / (self.c * target)
            if self.b == 0
            else abs(self.b / (self.c * math.expm1(target * self.b)))
        )
        s = math.log(max(proxy - eta, proxy * 1e-3, 1e-290))
        lo = hi = s
        flo = fhi = f(s)
        for _ in range(800):
            if flo > 0:
                break
            lo -= 1.0
            flo = f(lo)
        for _ in range(800):
            if fhi < 0:
                break
            hi += 1.0
            fhi = f(hi)
        if not (flo > 0 > fhi):
            raise NumericError("failed to bracket the tail-time inverse")
        s = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
        v = eta + math.exp(s)
        for _ in range(3):
            step = (self.tail_time(v) - target) * self.psi(v)
            if eta < v + step:
                v += step
            if abs(step) <= 1e-14 * v:
                break
        return v

    def v_of(self, a):
        """Height tail: the unique v > eta with tail_time(v) = a."""
        self._require_grey("v_of")
        if not a > 0:
            raise DomainError(f"v_of needs a > 0, got {a}")
        return self._invert_tail(a)

    def u_of(self, a, lam):
        """Laplace flow: solves integral_u^lam dr/psi(r) = a.

        The flow contracts toward eta from both sides: u lies between lam
        and eta, and u -> v_of(a) as lam -> inf.  Inputs within 1e-12 of
        eta (or lam = 0) are fixed points and returned unchanged.
        """
        self._require_grey("u_of")
        if a < 0 or not math.isfinite(lam) or lam < 0:
            raise DomainError(f"u_of needs a >= 0 and lam >= 0, got a={a}, lam={lam}")
        if a == 0:
            return float(lam)
        eta = self.eta
        if lam == 0.0 or abs(lam - eta) < 1e-12 * max(1.0, eta):
            return float(lam) if lam == 0.0 else eta
        if not self.m:
            b, c = self.b, self.c
            if b == 0.0:
                return lam / (1.0 + c * a * lam)
            # e^{ab}(b + c lam) - c lam, written without the cancelling pair
            return lam * b / (b * math.exp(a * b) + c * lam * math.expm1(a * b))
        if lam > eta:
            return self._invert_tail(a + self.tail_time(lam))
        return self._u_below_root(a, lam)

    def _u_below_root(self, a, lam):
        # supercritical, 0 < lam < eta: chart r = eta - e^t, integrand smooth
        eta = self.eta
        g = lambda t: math.exp(t) / (-self.psi(eta - math.exp(t)))
        t_lam = math.log(eta - lam)

        def f(t):  # integral_u(t)^lam dr/psi - a, decreasing in t
            return _quad(g, t, t_lam) - a

        hi = t_lam
        lo = t_lam - 1.0
        for _ in range(800):
            if f(lo) >= 0:
                break
            lo -= 1.0
        else:
            raise NumericError("failed to bracket u below the root")
        t = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
        u = eta - math.exp(t)
        for _ in range(3):
            h = _quad(g, math.log(eta - u), t_lam) - a
            step = -h * abs(self.psi(u))
            if lam < u + step < eta:
                u += step
            if abs(step) <= 1e-14 * max(u, 1e-30):
                break
        return u

    # ------------------------------------------------------------- conjugation

    def theta_ok(self, theta):
        """Whether psi(theta + .) - psi(theta) is again a valid mechanism."""
        if theta >= 0:
            return True
        return all(
            not isinstance(p, GammaDensity) or p.rho + theta > 0 for p in self.m
        )

    def conjugate(self, theta):
        """Mechanism lam -> psi(theta + lam) - psi(theta), exact in parameters."""
        if not self.theta_ok(theta):
            raise DomainError(f"theta = {theta} outside the conjugation domain")
        return Mechanism(
            b=float(self.dpsi(theta)),
            c=self.c,
            m=tuple(p.conjugate(theta) for p in self.m),
        )

    # ------------------------------------------------------------ serialization

    def to_dict(self):
        return {"b": self.b, "c": self.c, "m": [p.to_dict() for p in self.m]}

    @classmethod
    def from_dict(cls, d):
        return cls(
            b=float(d["b"]),
            c=float(d["c"]),
            m=tuple(primitive_from_dict(p) for p in d.get("m", [])),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _tail_time_quad(mech, v, power=1):
    """Split quadrature for integral_v^inf dr/psi(r)**power (any mechanism)."""
    mech._require_grey("tail_time")
    eta = mech.eta
    if v <= eta:
        raise DomainError(f"tail integral needs v > eta = {eta}")
    lam_big = max(2.0 * eta + 1.0, 10.0)
    c = mech.c

    if power == 1:
        far = lambda x: 1.0 / mech._psi_x2(x) if x > 0 else 1.0 / c
    else:
        far = lambda x: x * x / mech._psi_x2(x) ** 2 if x > 0 else 0.0

    if v >= lam_big:
        return _quad(far, 0.0, 1.0 / v)
    near = lambda s: math.exp(s) / mech.psi(eta + math.exp(s)) ** power
    head = _quad(near, math.log(v - eta), math.log(lam_big - eta))
    return head + _quad(far, 0.0, 1.0 / lam_big)
