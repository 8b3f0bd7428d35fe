"""Mutual information estimation for discrete-input AWGN channels.

A unit-energy constellation point s_k is sent with effective amplitude a,
so the receiver sees y = a*s_k + z with z ~ N(0, t*I_2) per real/imag
component (t = sigma^2 / 2 for complex noise variance sigma^2). The MI in
bits is

    I(a) = log2(M) - (1/M) sum_k E_z[ log2 sum_j exp(psi_kj) ],
    psi_kj = -||a*D_kj||^2 / (2t) - a*D_kj.(z/sqrt(t)),

with D_kj = s_k - s_j the pairwise difference table. The expectation is
either estimated from standard-normal Monte Carlo draws (`mi_estimate`,
with the matching closed-form derivative `mi_gradient`) or evaluated by
2-D Gauss-Hermite quadrature (`mi_exact`, the deterministic oracle used
for verification and never inside the control loop).

All log-sum-exp reductions subtract the row maximum, all accumulation
happens in natural log, and a single division by ln 2 converts to bits at
the end, so values stay finite for amplitudes up to ~1e3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

if TYPE_CHECKING:
    from .state import ChannelState

_LN2 = math.log(2.0)

# Fixed reduction chunk: bounds memory for large sample sets while keeping
# the summation order (and therefore the result bits) independent of n_mc.
_CHUNK = 1 << 16


@dataclass(frozen=True)
class Constellation:
    """Unit-energy signal set with its precomputed pairwise differences."""

    points: np.ndarray  # (M, 2) real-pair representation

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("constellation needs at least 2 points of shape (M, 2)")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @cached_property
    def diffs(self) -> np.ndarray:
        """Antisymmetric difference table D_kj = s_k - s_j, shape (M, M, 2)."""
        d = self.points[:, None, :] - self.points[None, :, :]
        d.flags.writeable = False
        return d

    @cached_property
    def diff_norms2(self) -> np.ndarray:
        """Squared norms ||D_kj||^2, shape (M, M)."""
        n2 = np.sum(self.diffs**2, axis=-1)
        n2.flags.writeable = False
        return n2


def qpsk() -> Constellation:
    """The four-point set {(+-1 +-1j)/sqrt(2)} in real-pair form."""
    pts = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float) / math.sqrt(2)
    return Constellation(pts)


@dataclass(frozen=True)
class NoiseModel:
    """Complex AWGN with total variance sigma2 (t = sigma2/2 per component)."""

    sigma2: float = 1.0

    def __post_init__(self):
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2}")

    @property
    def t(self) -> float:
        return self.sigma2 / 2.0


@dataclass(frozen=True)
class SampleSet:
    """Immutable batch of 2-D standard-normal draws plus the seed that made it."""

    z: np.ndarray  # (n_mc, 2)
    seed: object

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] < 1:
            raise ValueError("samples must have shape (n_mc, 2) with n_mc >= 1")
        z = z.copy()
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @property
    def n_mc(self) -> int:
        return self.z.shape[0]


def draw_samples(n_mc: int, seed) -> SampleSet:
    """Draw n_mc i.i.d. N(0, I_2) samples from a counter-based generator.

    `seed` may be an int or a sequence of ints; the same seed always
    reproduces the same set bit-exactly, and distinct seeds give
    statistically independent streams.
    """
    if n_mc < 1:
        raise ValueError(f"n_mc must be >= 1, got {n_mc}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return SampleSet(z=rng.standard_normal((int(n_mc), 2)), seed=seed)


def _check_amplitude(a: float) -> float:
    a = float(a)
    if not math.isfinite(a) or a < 0:
        raise ValueError(f"effective amplitude must be finite and >= 0, got {a}")
    return a


class MiEvaluator:
    """Shared-sample evaluator for MI and its amplitude derivative.

    Precomputes the projections D_kj . z_n once per sample set so that
    several amplitudes (one per channel, two points per optimizer step)
    can be evaluated against common random numbers cheaply.
    """

    def __init__(self, constellation: Constellation, noise: NoiseModel, samples: SampleSet):
        self.constellation = constellation
        self.noise = noise
        self.samples = samples
        self._d2 = constellation.diff_norms2
        self._bounds = list(range(0, samples.n_mc, _CHUNK)) + [samples.n_mc]
        self._proj_cache = None
        if samples.n_mc <= _CHUNK:
            self._proj_cache = self._proj(samples.z)

    def _proj(self, z: np.ndarray) -> np.ndarray:
        # (M, M, n) dot products of each difference vector with each sample
        return np.einsum("kjd,nd->kjn", self.constellation.diffs, z)

    def _chunks(self):
        if self._proj_cache is not None:
            yield self._proj_cache
            return
        z = self.samples.z
        for lo, hi in zip(self._bounds[:-1], self._bounds[1:]):
            yield self._proj(z[lo:hi])

    def _reduce(self, a: float, want_grad: bool, want_se: bool):
        a = _check_amplitude(a)
        t = self.noise.t
        c_quad = -(a * a) / (2.0 * t)
        c_lin = -a / math.sqrt(t)
        ln_m = float(np.log(float(self.constellation.size)))
        n = self.samples.n_mc
        v_sum = 0.0
        v_sq = 0.0
        g_sum = 0.0
        for proj in self._chunks():
            psi = c_quad * self._d2[:, :, None] + c_lin * proj
            m = psi.max(axis=1, keepdims=True)
            e = np.exp(psi - m)
            s = e.sum(axis=1)
            # Accumulating ln M - lse (instead of lse itself) makes the
            # a=0 identity exact: psi == 0 gives lse == ln M termwise.
            v = (ln_m - (np.log(s) + m[:, 0, :])).mean(axis=0)  # per sample, nats
            v_sum += v.sum()
            if want_se:
                v_sq += float(v @ v)
            if want_grad:
                dpsi = (-a / t) * self._d2[:, :, None] + (-1.0 / math.sqrt(t)) * proj
                g = ((e * dpsi).sum(axis=1) / s).mean(axis=0)
                g_sum += g.sum()
        mi = float(v_sum / (n * _LN2))
        grad = float(-g_sum / (n * _LN2)) if want_grad else None
        se = None
        if want_se:
            var = max(v_sq / n - (v_sum / n) ** 2, 0.0)
            se = float(math.sqrt(var / n) / _LN2)
        return mi, grad, se

    def estimate(self, a: float) -> float:
        return self._reduce(a, want_grad=False, want_se=False)[0]

    def estimate_with_se(self, a: float) -> tuple[float, float]:
        mi, _, se = self._reduce(a, want_grad=False, want_se=True)
        return mi, se

    def gradient(self, a: float) -> float:
        return self._reduce(a, want_grad=True, want_se=False)[1]

    def estimate_and_gradient(self, a: float) -> tuple[float, float]:
        mi, grad, _ = self._reduce(a, want_grad=True, want_se=False)
        return mi, grad


def mi_estimate(a: float, constellation: Constellation, noise: NoiseModel,
                samples: SampleSet) -> float:
    """Monte Carlo MI estimate in bits; exact 0 at a=0, unbiased for I(a)."""
    return MiEvaluator(constellation, noise, samples).estimate(a)


def mi_estimate_with_se(a: float, constellation: Constellation, noise: NoiseModel,
                        samples: SampleSet) -> tuple[float, float]:
    """MI estimate plus its empirical Monte Carlo standard error (bits)."""
    return MiEvaluator(constellation, noise, samples).estimate_with_se(a)


def mi_gradient(a: float, constellation: Constellation, noise: NoiseModel,
                samples: SampleSet) -> float:
    """Closed-form dI/da of `mi_estimate` on the same sample set.

    Differentiates the sampled objective itself (softmax-weighted sum of
    dpsi/da terms), so it matches central finite differences of
    `mi_estimate` on identical samples to near machine precision.
    """
    return MiEvaluator(constellation, noise, samples).gradient(a)


def mi_and_gradient(a: float, constellation: Constellation, noise: NoiseModel,
                    samples: SampleSet) -> tuple[float, float]:
    return MiEvaluator(constellation, noise, samples).estimate_and_gradient(a)


def mi_exact(a: float, constellation: Constellation, noise: NoiseModel,
             nodes: int = 64) -> float:
    """Deterministic MI via 2-D Gauss-Hermite quadrature (bits).

    Verification oracle: monotone nondecreasing in `a`, bounded by
    [0, log2 M]. `nodes` is the per-axis count; 64 gives ~1e-6 absolute
    accuracy over the amplitudes exercised here.
    """
    a = _check_amplitude(a)
    if nodes < 2:
        raise ValueError("need at least 2 quadrature nodes per axis")
    t = noise.t
    x, w = np.polynomial.hermite.hermgauss(nodes)
    z = math.sqrt(2.0) * x
    z1, z2 = np.meshgrid(z, z, indexing="ij")
    zq = np.stack([z1.ravel(), z2.ravel()], axis=-1)  # (nodes^2, 2)
    wq = (np.outer(w, w) / math.pi).ravel()
    proj = np.einsum("kjd,qd->kjq", constellation.diffs, zq)
    psi = -(a * a) / (2.0 * t) * constellation.diff_norms2[:, :, None] \
        - a / math.sqrt(t) * proj
    m = psi.max(axis=1, keepdims=True)
    lse = np.log(np.exp(psi - m).sum(axis=1)) + m[:, 0, :]  # (M, q)
    inner = (float(np.log(float(constellation.size))) - lse) @ wq
    return float(inner.mean() / _LN2)


class ObjectiveValue(NamedTuple):
    """Weighted objective plus the telemetry-facing unweighted pieces."""

    weighted: float
    total: float
    per_channel: np.ndarray


def weighted_objective(lam: Sequence[float], channels: "ChannelState",
                       w: Sequence[float], samples: SampleSet) -> ObjectiveValue:
    """Evaluate sum_i w_i * I_i at amplitudes a_i = |h_i| * lambda_i.

    Returns the weighted sum, the plain sum (for the "Total MI" readout),
    and the per-channel estimates, all on the one shared sample set.
    """
    lam = np.asarray(lam, dtype=float)
    w = np.asarray(w, dtype=float)
    gains2 = np.asarray(channels.gains2, dtype=float)
    if not (lam.shape == w.shape == gains2.shape):
        raise ValueError(
            f"dimension mismatch: lambda {lam.shape}, w {w.shape}, gains {gains2.shape}")
    ev = MiEvaluator(channels.constellation, channels.noise, samples)
    mis = np.array([ev.estimate(h * l) for h, l in zip(np.sqrt(gains2), lam)])
    return ObjectiveValue(weighted=float(w @ mis), total=float(mis.sum()),
                          per_channel=mis)
