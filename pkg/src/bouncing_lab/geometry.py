"""Closed-geodesic model: periodic Gauss curvature, Fermi tube metric, and
the quadratic-in-t metric perturbation family.

A geodesic is represented only by its length and the curvature along it.  The
tube completes the Fermi expansion (1 - K t^2 + O(t^3)) ds^2 + dt^2 with the
concrete coefficient E = (1 - K t^2 / 2)^2, which keeps t = 0 geodesic and
makes the curvature of the patch the closed form K / (1 - K t^2 / 2).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

# Tube admissibility: sup|K| * tau^2 must stay below this bound so the metric
# coefficient E = (1 - K t^2/2)^2 is uniformly >= 0.25 with margin.
TUBE_CONSTRAINT = 0.3
DEFAULT_HALF_WIDTH = 0.4


class Verdict(enum.Enum):
    EXISTS = "Exists"
    CANNOT_EXIST = "CannotExist"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class CurvatureProfile:
    """Periodic Gauss curvature along a closed geodesic of given length.

    K(s) = a0 + sum_k ak[k-1] cos(2 pi k s / L) + bk[k-1] sin(2 pi k s / L).
    """

    length: float
    a0: float
    ak: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bk: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("length must be positive")
        object.__setattr__(self, "ak", np.atleast_1d(np.asarray(self.ak, dtype=float)))
        object.__setattr__(self, "bk", np.atleast_1d(np.asarray(self.bk, dtype=float)))
        if self.ak.size != self.bk.size:
            raise ValueError("ak and bk must have equal length")

    @classmethod
    def constant(cls, length: float, k0: float) -> "CurvatureProfile":
        return cls(length, k0, np.zeros(0), np.zeros(0))

    @classmethod
    def from_samples(cls, length: float, samples) -> "CurvatureProfile":
        """Trigonometric interpolation of uniform samples (first sample at s=0)."""
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        coeff = np.fft.rfft(samples) / n
        a0 = coeff[0].real
        ak = 2.0 * coeff[1:].real
        bk = -2.0 * coeff[1:].imag
        if n % 2 == 0:
            ak[-1] *= 0.5  # Nyquist mode appears once
        return cls(length, float(a0), ak, bk)

    def kappa(self, s):
        """Curvature K(s); vectorized, exactly periodic."""
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.a0, dtype=float)
        if self.ak.size:
            k = np.arange(1, self.ak.size + 1)
            phase = (2.0 * np.pi / self.length) * np.multiply.outer(s, k)
            out = out + np.cos(phase) @ self.ak + np.sin(phase) @ self.bk
        return out if out.shape else float(out)

    def kappa_scalar_fn(self):
        """Scalar fast path for ODE right-hand sides (plain math calls)."""
        a0 = self.a0
        if not self.ak.size:
            return lambda s: a0
        terms = [(k + 1, float(a), float(b))
                 for k, (a, b) in enumerate(zip(self.ak, self.bk))
                 if a != 0.0 or b != 0.0]
        w = 2.0 * math.pi / self.length

        def f(s):
            tot = a0
            for k, a, b in terms:
                ph = w * k * s
                tot += a * math.cos(ph) + b * math.sin(ph)
            return tot

        return f

    @property
    def is_constant(self) -> bool:
        scale = max(abs(self.a0), 1.0)
        return bool(np.all(np.abs(self.ak) <= 1e-13 * scale)
                    and np.all(np.abs(self.bk) <= 1e-13 * scale))

    def sup_inf(self, samples: int = 8192) -> tuple[float, float]:
        """(inf K, sup K) over one period: dense sampling plus local refinement.

        Cached per profile (immutable)."""
        cached = self.__dict__.get("_sup_inf")
        if cached is not None:
            return cached
        if self.is_constant:
            object.__setattr__(self, "_sup_inf", (self.a0, self.a0))
            return self.a0, self.a0
        s = np.linspace(0.0, self.length, samples, endpoint=False)
        vals = self.kappa(s)
        h = self.length / samples

        def refine(idx, sign):
            lo, hi = s[idx] - h, s[idx] + h
            res = minimize_scalar(lambda x: sign * self.kappa(x),
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12})
            return sign * res.fun

        inf_k = min(float(vals.min()), refine(int(np.argmin(vals)), +1.0))
        sup_k = max(float(vals.max()), refine(int(np.argmax(vals)), -1.0))
        object.__setattr__(self, "_sup_inf", (inf_k, sup_k))
        return inf_k, sup_k

    def to_json(self) -> dict:
        return {
            "length": self.length,
            "fourier": {"a0": self.a0, "ak": list(map(float, self.ak)),
                        "bk": list(map(float, self.bk))},
        }

    @classmethod
    def from_json(cls, obj) -> "CurvatureProfile":
        if isinstance(obj, str):
            obj = json.loads(obj)
        f = obj["fourier"]
        return cls(float(obj["length"]), float(f["a0"]),
                   np.asarray(f.get("ak", []), dtype=float),
                   np.asarray(f.get("bk", []), dtype=float))


@dataclass(frozen=True)
class TubeMetric:
    """Fermi-coordinate strip metric E(s,t) ds^2 + dt^2 of half-width tau,
    with E = (1 - K(s) t^2 / 2)^2."""

    profile: CurvatureProfile
    half_width: float = DEFAULT_HALF_WIDTH

    def __post_init__(self):
        inf_k, sup_k = self.profile.sup_inf()
        bound = max(abs(inf_k), abs(sup_k)) * self.half_width ** 2
        if bound > TUBE_CONSTRAINT + 1e-12:
            raise ValueError(
                f"tube too wide: sup|K| * tau^2 = {bound:.4f} > {TUBE_CONSTRAINT}")

    def sqrt_e(self, s, t):
        return 1.0 - 0.5 * self.profile.kappa(s) * np.asarray(t, dtype=float) ** 2

    def e_coeff(self, s, t):
        return self.sqrt_e(s, t) ** 2

    @classmethod
    def widest(cls, profile: CurvatureProfile) -> "TubeMetric":
        """Largest admissible tube for the given profile."""
        inf_k, sup_k = profile.sup_inf()
        kmax = max(abs(inf_k), abs(sup_k), 1e-12)
        return cls(profile, math.sqrt(TUBE_CONSTRAINT / kmax))


def gauss_curvature_of_tube(metric: TubeMetric, s: float, t: float) -> float:
    """Curvature of the tube patch: -d2_t(sqrt E)/sqrt E = K/(1 - K t^2/2).

    Exact for the chosen E; reduces to the profile curvature at t = 0."""
    if abs(t) > metric.half_width + 1e-15:
        raise ValueError(f"|t| = {abs(t)} exceeds tube half-width {metric.half_width}")
    k = metric.profile.kappa(s)
    return k / (1.0 - 0.5 * k * t * t)


@dataclass(frozen=True)
class MetricPerturbation:
    """Quadratic-in-t perturbation direction g -> g + z(s) t^2 ds^2, stored
    through the derivative direction zdot (a periodic callable)."""

    zdot: object

    def __call__(self, s):
        return self.zdot(s)


def curvature_derivative_under_perturbation(perturbation: MetricPerturbation,
                                            s: float) -> float:
    """First variation of the on-geodesic curvature under g + z t^2 ds^2: -zdot(s).

    Follows from K = -d2_t(sqrt E)/sqrt E applied to E = 1 + (z - K) t^2 + ...
    at t = 0."""
    return -float(perturbation.zdot(s))


def existence_precheck(profile: CurvatureProfile, n: int) -> Verdict:
    """Sufficient / necessary screening for an n-minimum bouncing Jacobi field.

    Exists when K > 0 and pi^2 n^2 > L^2 sup K; CannotExist when
    pi^2 n^2 < L^2 inf K; otherwise inconclusive (boundary cases included).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    inf_k, sup_k = profile.sup_inf()
    lhs = math.pi ** 2 * n ** 2
    if inf_k > 0.0 and lhs > profile.length ** 2 * sup_k:
        return Verdict.EXISTS
    if lhs < profile.length ** 2 * inf_k:
        return Verdict.CANNOT_EXIST
    return Verdict.INCONCLUSIVE
