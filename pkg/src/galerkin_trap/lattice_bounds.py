"""Numerical estimation of lattice-sum constants with explicit tail bounds.

Everything here reports a truncated sum together with an integral-comparison
upper bound on the discarded remainder, so every constant can be quoted as
``value + tail_bound`` (a safe overestimate of the truncated quantity's
limit).  No claim of rigor beyond truncation plus integral tail is made;
interval arithmetic is out of scope.

The tail bounds use a cube-shift comparison: unit cubes centered on lattice
points outside radius R are disjoint, lie outside radius R - sqrt(d)/2, and
on each cube a nonincreasing radial summand f(|k|) is dominated by
f(|x| - sqrt(d)/2).  Integrating in polar coordinates gives, for f = r^-g
with g > d,

    sum_{|k| > R} |k|^-g  <=  sigma_d (1 + sqrt(d)/(2 u0))^(d-1) u0^(d-g)/(g-d)

with u0 = R - sqrt(d) and sigma_d the sphere area constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import HypothesisError, ParameterError
from .spectral_core import (
    Mode,
    ModeSet,
    SpectralField,
    _advection_raw,
    _convolution_plan,
    enstrophy,
    random_solenoidal_field,
)

__all__ = [
    "ConstantEstimate",
    "SHIFT_RATIO_BOUND",
    "inverse_power_sum",
    "convolution_lattice_sum",
    "convolution_bound_scan",
    "estimate_convolution_bound",
    "AdvectionBoundReport",
    "advection_bound_check",
    "estimate_advection_constant",
    "uniform_lognorm_bound",
]

# |m| <= 2 |k| |m - k| for nonzero integer m != k: the denominator is at least 1
# when |m| <= 2|k|, and |m|/|m - k| <= 1/(1 - |k|/|m|) <= 2 beyond.
SHIFT_RATIO_BOUND = 2.0

_ESTIMATE_NAMES = {
    "convolution_sum_bound",
    "advection_bound",
    "inverse_power_sum",
    "shift_ratio",
}


@dataclass(frozen=True)
class ConstantEstimate:
    """A numerically estimated constant with its truncation provenance.

    ``value + tail_bound`` is the safe overestimate to use downstream.  Monte
    Carlo estimates (``advection_bound``) carry sample count and seed instead
    of a tail; their value is an empirical supremum, not a proof.
    """

    name: str
    dimension: int
    exponent: float
    value: float
    truncation_radius: float
    tail_bound: float
    epsilon: float | None = None
    mode_of_supremum: Mode | None = None
    samples: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.name not in _ESTIMATE_NAMES:
            raise ParameterError(f"unknown constant name {self.name!r}")
        if self.value <= 0:
            raise ParameterError("estimated constant must be positive")
        if self.tail_bound < 0:
            raise ParameterError("tail bound must be nonnegative")

    @property
    def constant(self) -> float:
        """The reported constant: truncated value plus tail bound."""
        return self.value + self.tail_bound

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "dimension": self.dimension,
            "exponent": self.exponent,
            "value": self.value,
            "truncation_radius": self.truncation_radius,
            "tail_bound": self.tail_bound,
            "constant": self.constant,
        }
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
        if self.mode_of_supremum is not None:
            out["mode_of_supremum"] = list(self.mode_of_supremum)
        if self.samples is not None:
            out["samples"] = self.samples
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ConstantEstimate":
        mode = obj.get("mode_of_supremum")
        return cls(
            name=obj["name"],
            dimension=int(obj["dimension"]),
            exponent=float(obj["exponent"]),
            value=float(obj["value"]),
            truncation_radius=float(obj["truncation_radius"]),
            tail_bound=float(obj["tail_bound"]),
            epsilon=obj.get("epsilon"),
            mode_of_supremum=tuple(int(c) for c in mode) if mode is not None else None,
            samples=obj.get("samples"),
            seed=obj.get("seed"),
        )


# -- lattice point cache -----------------------------------------------------


@lru_cache(maxsize=4)
def _lattice_points(dimension: int, radius_ceil: int) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero lattice points with |k| <= radius_ceil, sorted by (|k|^2, lex).

    Returns (points, norms_sq); prefix slices give every smaller radius.
    """
    r = int(radius_ceil)
    axes = [np.arange(-r, r + 1)] * dimension
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dimension)
    nsq = np.sum(grid * grid, axis=1)
    keep = (nsq > 0) & (nsq <= r * r)
    pts = grid[keep]
    nsq = nsq[keep]
    order = np.lexsort(tuple(pts[:, axis] for axis in reversed(range(dimension))) + (nsq,))
    pts = np.ascontiguousarray(pts[order])
    nsq = np.ascontiguousarray(nsq[order])
    pts.setflags(write=False)
    nsq.setflags(write=False)
    return pts, nsq


def _points_within(dimension: int, radius: float) -> tuple[np.ndarray, np.ndarray]:
    pts, nsq = _lattice_points(dimension, int(math.ceil(radius)))
    cut = int(np.searchsorted(nsq, radius * radius, side="right"))
    return pts[:cut], nsq[:cut]


def _power_tail(dimension: int, exponent: float, radius: float) -> float:
    """Upper bound on sum_{|k| > radius} |k|^-exponent (cube-shift comparison)."""
    if exponent <= dimension:
        raise HypothesisError(
            f"power sum tail diverges: exponent {exponent} <= dimension {dimension}"
        )
    sqrt_d = math.sqrt(dimension)
    u0 = radius - sqrt_d
    if u0 <= 0:
        raise ParameterError(f"truncation radius {radius} too small for a tail bound")
    sigma = 2.0 * math.pi if dimension == 2 else 4.0 * math.pi
    correction = (1.0 + (sqrt_d / 2.0) / u0) ** (dimension - 1)
    return sigma * correction * u0 ** (dimension - exponent) / (exponent - dimension)


@lru_cache(maxsize=128)
def inverse_power_sum(dimension: int, exponent: float, radius: float = 0.0) -> tuple[float, float]:
    """(truncated value, tail bound) of sum over nonzero k of |k|^-exponent.

    The default radius is 400 in 2d and 60 in 3d.  Requires exponent > d.
    """
    if dimension not in (2, 3):
        raise ParameterError("dimension must be 2 or 3")
    if exponent <= dimension:
        raise HypothesisError(
            f"inverse power sum diverges: exponent {exponent} <= dimension {dimension}"
        )
    if radius <= 0.0:
        radius = 400.0 if dimension == 2 else 60.0
    _, nsq = _points_within(dimension, radius)
    value = float(np.sum(nsq.astype(float) ** (-exponent / 2.0)))
    return value, _power_tail(dimension, exponent, radius)


# -- the convolution lattice sum ---------------------------------------------


def convolution_lattice_sum(
    k: Sequence[int], gamma: float, radius: float
) -> tuple[float, float]:
    """Truncated sum over k1 of 1/(|k1|^gamma |k-k1|^gamma) with a tail bound.

    Sums over 0 < |k1| <= radius, k1 != k.  For |k1| > radius >= 2|k| the
    summand is at most 2^gamma |k1|^(-2 gamma) since |k - k1| >= |k1|/2, so
    the remainder is bounded by 2^gamma times the inverse-power tail at
    exponent 2 gamma.  Requires gamma > d.
    """
    kk = tuple(int(c) for c in k)
    d = len(kk)
    if d not in (2, 3):
        raise ParameterError("wave vector must have dimension 2 or 3")
    if gamma <= d:
        raise HypothesisError(f"convolution sum diverges: gamma {gamma} <= dimension {d}")
    k_norm = math.sqrt(sum(c * c for c in kk))
    if k_norm == 0:
        raise ParameterError("wave vector must be nonzero")
    if radius < 2.0 * k_norm:
        raise ParameterError(f"radius {radius} below the required 2|k| = {2 * k_norm:.6g}")
    pts, nsq = _points_within(d, radius)
    diff = pts - np.asarray(kk, dtype=np.int64)
    diff_nsq = np.sum(diff * diff, axis=1)
    keep = diff_nsq > 0
    value = float(
        np.sum(nsq[keep].astype(float) ** (-gamma / 2.0) * diff_nsq[keep].astype(float) ** (-gamma / 2.0))
    )
    tail = (2.0**gamma) * _power_tail(d, 2.0 * gamma, radius)
    return value, tail


@dataclass(frozen=True)
class ScanEntry:
    """One canonical wave vector of the convolution-bound scan."""

    mode: Mode
    norm: float
    value: float
    tail: float
    radius: float


def _canonical_representatives(dimension: int, k_max: float) -> list[Mode]:
    """One wave vector per symmetry orbit (signed permutations), |k| <= k_max.

    The convolution sum is invariant under coordinate permutations and sign
    flips, so scanning representatives covers every mode.
    """
    r = int(math.floor(k_max))
    reps = []
    if dimension == 2:
        for a in range(0, r + 1):
            for b in range(a, r + 1):
                if 0 < a * a + b * b <= k_max * k_max:
                    reps.append((a, b))
    else:
        for a in range(0, r + 1):
            for b in range(a, r + 1):
                for c in range(b, r + 1):
                    if 0 < a * a + b * b + c * c <= k_max * k_max:
                        reps.append((a, b, c))
    return reps


def convolution_bound_scan(
    dimension: int, gamma: float, k_max: float, radius: float | None = None
) -> list[ScanEntry]:
    """Convolution lattice sum at one representative per symmetry orbit.

    Each wave vector is summed to an effective radius max(radius, 2|k|), which
    keeps the per-mode tail bound valid.  The default base radius is 64 in 2d
    and 32 in 3d.
    """
    if dimension not in (2, 3):
        raise ParameterError("dimension must be 2 or 3")
    if gamma <= dimension:
        raise HypothesisError(f"gamma {gamma} <= dimension {dimension}")
    if radius is None:
        radius = 64.0 if dimension == 2 else 32.0
    reps = _canonical_representatives(dimension, k_max)
    top = max(radius, 2.0 * math.ceil(k_max * math.sqrt(dimension)))
    pts, nsq = _lattice_points(dimension, int(math.ceil(top)))
    weights_cache: dict[float, np.ndarray] = {}
    entries = []
    for mode in reps:
        k_norm = math.sqrt(sum(c * c for c in mode))
        eff = max(radius, 2.0 * k_norm)
        cut = int(np.searchsorted(nsq, eff * eff, side="right"))
        if eff not in weights_cache:
            weights_cache[eff] = nsq[:cut].astype(float) ** (-gamma / 2.0)
        w1 = weights_cache[eff]
        diff = pts[:cut] - np.asarray(mode, dtype=np.int64)
        diff_nsq = np.sum(diff * diff, axis=1)
        keep = diff_nsq > 0
        value = float(np.sum(w1[keep] * diff_nsq[keep].astype(float) ** (-gamma / 2.0)))
        tail = (2.0**gamma) * _power_tail(dimension, 2.0 * gamma, eff)
        entries.append(ScanEntry(mode=mode, norm=k_norm, value=value, tail=tail, radius=eff))
    return entries


def estimate_convolution_bound(
    dimension: int, gamma: float, k_max: float, radius: float | None = None
) -> ConstantEstimate:
    """Empirical bound C with |k|^gamma * S(k) <= C for all scanned k.

    ``value`` is the supremum of |k|^gamma times the truncated sum,
    ``tail_bound`` the supremum of |k|^gamma times the per-mode tail, so
    ``value + tail_bound`` dominates the weighted sum at every scanned mode.
    Wave vectors beyond ``k_max`` are not scanned; the decay of the summand
    makes small modes dominant, and the recorded supremum mode documents it.
    """
    entries = convolution_bound_scan(dimension, gamma, k_max, radius)
    if not entries:
        raise ParameterError("empty scan: k_max below 1")
    weighted = [(e.norm**gamma) * e.value for e in entries]
    weighted_tails = [(e.norm**gamma) * e.tail for e in entries]
    best = int(np.argmax(weighted))
    return ConstantEstimate(
        name="convolution_sum_bound",
        dimension=dimension,
        exponent=gamma,
        value=float(weighted[best]),
        truncation_radius=float(entries[best].radius),
        tail_bound=float(max(weighted_tails)),
        mode_of_supremum=entries[best].mode,
    )


# -- empirical advection bound -----------------------------------------------


@dataclass(frozen=True)
class AdvectionBoundReport:
    """Weighted advection magnitudes against the decay-envelope bound.

    ``ratios[i]`` is |N(u)_k| |k|^e / (sqrt(cap) * amplitude) at target mode i,
    where e = gamma - d/2 in 3d and gamma - d/2 - epsilon in 2d; the maximum
    over modes is an empirical constant for the bound.  Case partial sums
    split the convolution at |k1| <= |k|/2 < |k1| <= 2|k| < |k1| (ties go to
    the lower-indexed case); totals do not depend on the tie rule.
    """

    dimension: int
    decay_exponent: float
    epsilon: float | None
    enstrophy_cap: float
    amplitude: float
    target_modes: tuple[Mode, ...]
    ratios: np.ndarray
    case_ratios: np.ndarray  # shape (3,): per-case maxima of the same quantity
    max_ratio: float
    mode_of_max: Mode


def _check_in_envelope_class(
    u: SpectralField, enstrophy_cap: float, amplitude: float, gamma: float
) -> None:
    norms = np.sqrt(u.modeset.norms_sq.astype(float))
    bound = amplitude / norms**gamma
    moduli = u.moduli()
    slack = 1.0 + 1e-9
    if np.any(moduli > bound * slack):
        i = int(np.argmax(moduli / bound))
        raise ParameterError(
            f"field leaves the decay envelope at k={u.modeset.modes[i]}: "
            f"|u_k|={moduli[i]:.6g} > {bound[i]:.6g}"
        )
    v = enstrophy(u)
    if v > enstrophy_cap * slack:
        raise ParameterError(f"field enstrophy {v:.6g} exceeds the cap {enstrophy_cap:.6g}")


def advection_bound_check(
    u: SpectralField,
    enstrophy_cap: float,
    amplitude: float,
    gamma: float,
    epsilon: float | None = None,
    k_max: float | None = None,
) -> AdvectionBoundReport:
    """Measure the decay of the advection term for one admissible field.

    Requires |u_k| <= amplitude/|k|^gamma and enstrophy at most the cap.  The
    per-mode ratio is scale-invariant under u -> c u with amplitude -> c
    amplitude and cap -> c^2 cap.
    """
    d = u.dimension
    if d == 2 and epsilon is None:
        epsilon = 0.5
    if d == 3:
        epsilon = None
    _check_in_envelope_class(u, enstrophy_cap, amplitude, gamma)
    if k_max is None:
        k_max = u.modeset.max_norm
    target = ModeSet.ball(k_max, d)
    plan = _convolution_plan(u.modeset, target)
    exponent = gamma - d / 2.0 - (epsilon or 0.0)
    norms = np.sqrt(target.norms_sq.astype(float))
    denom = math.sqrt(enstrophy_cap) * amplitude
    if denom == 0.0:
        raise ParameterError("zero enstrophy cap or amplitude")

    full = _advection_raw(plan, u.coeffs, u.coeffs)
    ratios = np.sqrt(np.sum(np.abs(full) ** 2, axis=1)) * norms**exponent / denom

    # case split per source mode on each pair; exact integer comparisons
    pair_target_nsq = np.einsum("pd,pd->p", plan.pair_kf, plan.pair_kf)
    src_nsq = plan.pair_src_nsq
    case_masks = [
        4.0 * src_nsq <= pair_target_nsq,
        (4.0 * src_nsq > pair_target_nsq) & (src_nsq <= 4.0 * pair_target_nsq),
        src_nsq > 4.0 * pair_target_nsq,
    ]
    case_ratios = np.zeros(3)
    if len(plan.src):
        dots = np.einsum("pd,pd->p", u.coeffs[plan.src], plan.pair_kf)
        terms = dots[:, None] * u.coeffs[plan.hit]
        kf = plan.target_kf
        for c, mask in enumerate(case_masks):
            part = plan.segment_sums(np.where(mask[:, None], terms, 0.0))
            part -= (np.einsum("td,td->t", part, kf) / plan.target_nsq)[:, None] * kf
            mags = np.sqrt(np.sum(np.abs(part) ** 2, axis=1))
            case_ratios[c] = float(np.max(mags * norms**exponent / denom))
    best = int(np.argmax(ratios)) if len(ratios) else 0
    return AdvectionBoundReport(
        dimension=d,
        decay_exponent=gamma,
        epsilon=epsilon,
        enstrophy_cap=enstrophy_cap,
        amplitude=amplitude,
        target_modes=target.modes,
        ratios=ratios,
        case_ratios=case_ratios,
        max_ratio=float(ratios[best]) if len(ratios) else 0.0,
        mode_of_max=target.modes[best] if len(ratios) else None,
    )


def estimate_advection_constant(
    dimension: int,
    gamma: float,
    epsilon: float | None,
    field_radius: float,
    k_max: float,
    n_fields: int,
    seed: int,
    amplitude: float = 1.0,
) -> ConstantEstimate:
    """Monte Carlo supremum of the advection decay ratio over random fields.

    Draws admissible fields inside the decay envelope, takes each field's own
    enstrophy as its cap (the tightest admissible choice), and records the
    largest ratio seen.  This is a sampled estimate, not a proof; sample count
    and seed are kept as provenance.
    """
    if n_fields < 1:
        raise ParameterError("need at least one field")
    modeset = ModeSet.ball(field_radius, dimension)
    children = np.random.SeedSequence(seed).spawn(n_fields)
    best_ratio = 0.0
    best_mode: Mode | None = None
    for child in children:
        rng = np.random.default_rng(child)
        u = random_solenoidal_field(
            modeset, rng, envelope=lambda n: amplitude / n**gamma
        )
        cap = enstrophy(u)
        if cap == 0.0:
            continue
        report = advection_bound_check(u, cap, amplitude, gamma, epsilon, k_max)
        if report.max_ratio > best_ratio:
            best_ratio = report.max_ratio
            best_mode = report.mode_of_max
    if best_ratio <= 0.0:
        raise ParameterError("all sampled fields degenerate; cannot estimate the constant")
    return ConstantEstimate(
        name="advection_bound",
        dimension=dimension,
        exponent=gamma,
        epsilon=epsilon if dimension == 2 else None,
        value=best_ratio,
        truncation_radius=float(k_max),
        tail_bound=0.0,
        mode_of_supremum=best_mode,
        samples=n_fields,
        seed=seed,
    )


# -- uniform log-norm bound over an envelope class ----------------------------


def uniform_lognorm_bound(
    amplitude: float,
    gamma: float,
    dimension: int,
    viscosity: float,
    k_max: float = 60.0,
    lattice_radius: float | None = None,
) -> float:
    """Uniform bound l on symmetrized Jacobian row sums plus -nu |k|^2.

    Over the envelope class |u_k| <= amplitude/|k|^gamma, each partial
    derivative of the quadratic term is bounded by 2 amplitude |k| / |k-k1|^g,
    giving row sums at most amplitude (C_g + 2 C_{g-1}) |k| with C_g the
    inverse-power lattice sum.  Adding the linear eigenvalue -nu |k|^2 leaves
    a downward parabola in |k|; the maximum over realizable mode norms up to
    ``k_max`` is returned.  Requires gamma > d + 1 so both sums converge.
    """
    if gamma <= dimension + 1:
        raise HypothesisError(
            f"uniform log-norm bound needs gamma > d + 1, got gamma={gamma}, d={dimension}"
        )
    if amplitude <= 0:
        raise ParameterError("amplitude must be positive")
    radius = lattice_radius if lattice_radius is not None else 0.0
    c_g = sum(inverse_power_sum(dimension, gamma, radius))
    c_g1 = sum(inverse_power_sum(dimension, gamma - 1.0, radius))
    coef = amplitude * (c_g + SHIFT_RATIO_BOUND * c_g1)
    vertex = coef / (2.0 * viscosity)
    if vertex > k_max:
        raise ParameterError(
            f"k_max {k_max} is below the bracket vertex {vertex:.3g}; the scan would miss the maximum"
        )
    _, nsq = _points_within(dimension, k_max)
    r = np.sqrt(np.unique(nsq).astype(float))
    return float(np.max(coef * r - viscosity * r * r))
