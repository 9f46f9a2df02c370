"""Forward-invariant coefficient regions and numerical boundary certification.

A region couples an enstrophy cap with per-mode modulus envelopes; on its
boundary the truncated vector field points inward, so trajectories cannot
leave.  Four shapes are provided: a polynomial-decay region (2d, forced), an
exponential-decay refinement, a time-decaying exponential refinement valid on
a finite horizon, and a small-amplitude envelope region (3d, unforced).

Builders instantiate the shapes from measured constants with a safety margin
on every strict inequality; :func:`certify_inward` then samples states on
each boundary facet class and records the worst outward margin.  Sampling
certifies, it does not prove: certificates carry sample counts, seeds and the
provenance of every constant they relied on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CertificationError, HypothesisError, ParameterError
from .lattice_bounds import ConstantEstimate, inverse_power_sum
from .spectral_core import (
    ForceField,
    Mode,
    ModeSet,
    PhysicsParams,
    SpectralField,
    _advection_raw,
    _convolution_plan,
    _representative_data,
    enstrophy,
    force_enstrophy_norm,
)

__all__ = [
    "PolyRegion",
    "ExpRegion",
    "TimeExpRegion",
    "SmallDataRegion",
    "Region",
    "ContainmentReport",
    "contains",
    "build_poly_region",
    "build_exp_region",
    "build_time_exp_region",
    "build_smalldata_region",
    "Certificate",
    "certify_inward",
    "RegionDocument",
    "ConditionsReport",
    "check_compactness_conditions",
    "region_conditions",
    "trajectory_contained",
    "region_to_dict",
    "region_from_dict",
]

FACET_ENSTROPHY = "enstrophy"
FACET_TAIL = "tail_envelope"
FACET_EXP = "exp_envelope"
FACET_TIME = "time_envelope"


@dataclass(frozen=True)
class PolyRegion:
    """Enstrophy cap plus a power-law modulus envelope beyond a cutoff (2d).

    States satisfy V(u) <= enstrophy_cap and |u_k| <= tail_amplitude/|k|^g
    for |k| > tail_cutoff.  Below the cutoff the enstrophy cap already forces
    |u_k| <= sqrt(cap)/|k|, so no modulus constraint is imposed there.
    """

    enstrophy_cap: float
    tail_cutoff: float
    decay_exponent: float
    tail_amplitude: float

    def __post_init__(self):
        if self.enstrophy_cap <= 0:
            raise ParameterError("enstrophy cap must be positive")
        if self.tail_cutoff <= 0:
            raise ParameterError("tail cutoff must be positive")
        if self.decay_exponent < 2.5:
            raise HypothesisError("polynomial region needs decay exponent >= 2.5")
        if self.tail_amplitude <= 0:
            raise ParameterError("tail amplitude must be positive")

    @property
    def dimension(self) -> int:
        return 2


@dataclass(frozen=True)
class ExpRegion:
    """Polynomial region intersected with an exponential modulus envelope.

    Beyond ``exp_cutoff`` the coefficients must additionally satisfy
    |u_k| <= amplitude/|k|^g * exp(-decay_rate |k|).
    """

    base: PolyRegion
    amplitude: float
    exp_cutoff: float
    decay_rate: float

    def __post_init__(self):
        if self.amplitude <= self.base.tail_amplitude:
            raise ParameterError("exponential amplitude must exceed the base amplitude")
        if self.exp_cutoff <= 0:
            raise ParameterError("exponential cutoff must be positive")
        sup = math.log(self.amplitude / self.base.tail_amplitude) / self.exp_cutoff
        if not 0.0 < self.decay_rate < sup:
            raise ParameterError(
                f"decay rate must lie strictly in (0, {sup:.6g}), got {self.decay_rate}"
            )

    @property
    def dimension(self) -> int:
        return 2


@dataclass(frozen=True)
class TimeExpRegion:
    """Polynomial region with a time-decaying exponential envelope on [0, horizon].

    Beyond ``exp_cutoff`` at time t the coefficients must satisfy
    |u_k| <= amplitude/|k|^g * exp(-decay_rate |k| t).
    """

    base: PolyRegion
    amplitude: float
    exp_cutoff: float
    decay_rate: float
    horizon: float

    def __post_init__(self):
        if self.amplitude <= self.base.tail_amplitude:
            raise ParameterError("exponential amplitude must exceed the base amplitude")
        if self.exp_cutoff <= 0:
            raise ParameterError("exponential cutoff must be positive")
        if self.horizon <= 0:
            raise ParameterError("horizon must be positive")
        sup = math.log(self.amplitude / self.base.tail_amplitude) / (self.exp_cutoff * self.horizon)
        if not 0.0 < self.decay_rate < sup:
            raise ParameterError(
                f"time decay rate must lie strictly in (0, {sup:.6g}), got {self.decay_rate}"
            )

    @property
    def dimension(self) -> int:
        return 2


@dataclass(frozen=True)
class SmallDataRegion:
    """Pure power-law envelope on every mode; traps the unforced 3d system."""

    amplitude: float
    decay_exponent: float

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ParameterError("amplitude must be positive")
        if self.decay_exponent <= 3.5:
            raise HypothesisError("small-data region needs decay exponent > 3.5")

    @property
    def dimension(self) -> int:
        return 3


Region = PolyRegion | ExpRegion | TimeExpRegion | SmallDataRegion


def _base_poly(region: Region) -> PolyRegion | None:
    if isinstance(region, PolyRegion):
        return region
    if isinstance(region, (ExpRegion, TimeExpRegion)):
        return region.base
    return None


def _enstrophy_cap(region: Region) -> float | None:
    base = _base_poly(region)
    return base.enstrophy_cap if base is not None else None


def _poly_caps(region: Region, norms: np.ndarray) -> np.ndarray:
    """Power-law part of the envelope; inf where no modulus constraint applies."""
    if isinstance(region, SmallDataRegion):
        return region.amplitude / norms**region.decay_exponent
    base = _base_poly(region)
    caps = np.full(norms.shape, np.inf)
    beyond = norms > base.tail_cutoff
    caps[beyond] = base.tail_amplitude / norms[beyond] ** base.decay_exponent
    return caps


def _exp_caps(region: Region, norms: np.ndarray, t: float) -> np.ndarray:
    """Exponential part of the envelope; inf where it does not apply."""
    caps = np.full(norms.shape, np.inf)
    if isinstance(region, ExpRegion):
        beyond = norms > region.exp_cutoff
        g = region.base.decay_exponent
        caps[beyond] = (
            region.amplitude / norms[beyond] ** g * np.exp(-region.decay_rate * norms[beyond])
        )
    elif isinstance(region, TimeExpRegion):
        beyond = norms > region.exp_cutoff
        g = region.base.decay_exponent
        caps[beyond] = (
            region.amplitude
            / norms[beyond] ** g
            * np.exp(-region.decay_rate * norms[beyond] * t)
        )
    return caps


def _envelope_caps(region: Region, norms: np.ndarray, t: float) -> np.ndarray:
    return np.minimum(_poly_caps(region, norms), _exp_caps(region, norms, t))


@dataclass(frozen=True)
class ContainmentReport:
    """Slack of every region constraint at one state (negative means inside)."""

    contained: bool
    enstrophy_slack: float | None
    modulus_slacks: np.ndarray  # per mode; -inf where unconstrained
    worst_mode: Mode | None


def contains(region: Region, u: SpectralField, t: float = 0.0, tol: float = 0.0) -> ContainmentReport:
    """Whether the state satisfies every region inequality at time ``t``.

    The region is closed: boundary states count as inside.  ``t`` only
    matters for the time-decaying envelope.
    """
    if u.dimension != region.dimension:
        raise ParameterError("state and region have different dimensions")
    norms = np.sqrt(u.modeset.norms_sq.astype(float))
    caps = _envelope_caps(region, norms, t)
    moduli = u.moduli()
    slacks = np.where(np.isfinite(caps), moduli - caps, -np.inf)
    cap = _enstrophy_cap(region)
    enstrophy_slack = (enstrophy(u) - cap) if cap is not None else None
    worst_mode = None
    ok = True
    if len(slacks):
        i = int(np.argmax(slacks))
        if np.isfinite(slacks[i]):
            worst_mode = u.modeset.modes[i]
        ok = bool(np.max(slacks) <= tol)
    if enstrophy_slack is not None:
        ok = ok and enstrophy_slack <= tol * (1.0 + cap)
    return ContainmentReport(
        contained=ok,
        enstrophy_slack=enstrophy_slack,
        modulus_slacks=slacks,
        worst_mode=worst_mode,
    )


def trajectory_contained(region: Region, traj, tol: float = 1e-9) -> tuple[bool, float | None]:
    """Check every recorded state of a trajectory; returns first violation time."""
    for t, state in zip(traj.times, traj.states):
        if not contains(region, state, t=float(t), tol=tol).contained:
            return False, float(t)
    return True, None


# -- builders ------------------------------------------------------------------


def _require_margin(margin: float) -> None:
    if margin <= 0:
        raise ParameterError("builders need a strictly positive margin")


def build_poly_region(
    enstrophy_cap: float,
    decay_exponent: float,
    force: ForceField,
    params: PhysicsParams,
    advection_constant: ConstantEstimate,
    margin: float = 0.1,
) -> PolyRegion:
    """Polynomial-decay trapping region from a measured advection constant.

    The cutoff is the larger of the advection threshold C^2 V0 / nu^2 and the
    force support radius (coefficients beyond the cutoff must be unforced),
    inflated by the margin; the amplitude is sqrt(V0) cutoff^(g-1) inflated
    the same way.
    """
    _require_margin(margin)
    if params.dimension != 2:
        raise ParameterError("polynomial regions are built for dimension 2")
    if force.dimension != 2:
        raise ParameterError("force dimension mismatch")
    if decay_exponent < 2.5:
        raise HypothesisError("polynomial region needs decay exponent >= 2.5")
    if advection_constant.name != "advection_bound":
        raise ParameterError("builder needs an advection_bound constant estimate")
    v_star = (force_enstrophy_norm(force) / params.viscosity) ** 2
    if enstrophy_cap <= v_star:
        raise ParameterError(
            f"enstrophy cap {enstrophy_cap:.6g} must exceed the forcing floor {v_star:.6g}"
        )
    c = advection_constant.constant
    threshold = c * c * enstrophy_cap / params.viscosity**2
    cutoff = max(math.ceil(threshold), force.cutoff, 1.0) * (1.0 + margin)
    amplitude = math.sqrt(enstrophy_cap) * cutoff ** (decay_exponent - 1.0) * (1.0 + margin)
    return PolyRegion(
        enstrophy_cap=enstrophy_cap,
        tail_cutoff=cutoff,
        decay_exponent=decay_exponent,
        tail_amplitude=amplitude,
    )


def build_exp_region(
    base: PolyRegion,
    amplitude: float,
    params: PhysicsParams,
    conv_constant: ConstantEstimate,
    margin: float = 0.1,
) -> ExpRegion:
    """Exponential refinement of a polynomial region."""
    _require_margin(margin)
    if amplitude <= base.tail_amplitude:
        raise ParameterError("exponential amplitude must exceed the base amplitude")
    if conv_constant.name != "convolution_sum_bound":
        raise ParameterError("builder needs a convolution_sum_bound constant estimate")
    cq = conv_constant.constant
    cutoff = math.ceil(cq * amplitude / params.viscosity) * (1.0 + margin)
    rate = (1.0 - margin) * math.log(amplitude / base.tail_amplitude) / cutoff
    if rate <= 0:
        raise ParameterError("margin too large: decay rate collapsed to zero")
    return ExpRegion(base=base, amplitude=amplitude, exp_cutoff=cutoff, decay_rate=rate)


def build_time_exp_region(
    base: PolyRegion,
    amplitude: float,
    horizon: float,
    params: PhysicsParams,
    conv_constant: ConstantEstimate,
    margin: float = 0.1,
) -> TimeExpRegion:
    """Time-decaying exponential refinement, valid on [0, horizon]."""
    _require_margin(margin)
    if amplitude <= base.tail_amplitude:
        raise ParameterError("exponential amplitude must exceed the base amplitude")
    if horizon <= 0:
        raise ParameterError("horizon must be positive")
    if conv_constant.name != "convolution_sum_bound":
        raise ParameterError("builder needs a convolution_sum_bound constant estimate")
    cq = conv_constant.constant
    cutoff = math.ceil(amplitude * cq / params.viscosity) * (1.0 + margin)
    rate = (1.0 - margin) * math.log(amplitude / base.tail_amplitude) / (cutoff * horizon)
    if rate <= 0:
        raise ParameterError("margin too large: decay rate collapsed to zero")
    return TimeExpRegion(
        base=base, amplitude=amplitude, exp_cutoff=cutoff, decay_rate=rate, horizon=horizon
    )


def build_smalldata_region(
    decay_exponent: float,
    params: PhysicsParams,
    conv_constant: ConstantEstimate,
    margin: float = 0.1,
) -> SmallDataRegion:
    """Small-amplitude envelope region for the unforced 3d system."""
    _require_margin(margin)
    if params.dimension != 3:
        raise ParameterError("small-data regions are built for dimension 3")
    if decay_exponent <= 3.5:
        raise HypothesisError("small-data region needs decay exponent > 3.5")
    if conv_constant.name != "convolution_sum_bound" or conv_constant.dimension != 3:
        raise ParameterError("builder needs a 3d convolution_sum_bound constant estimate")
    amplitude = (1.0 - margin) * params.viscosity / conv_constant.constant
    return SmallDataRegion(amplitude=amplitude, decay_exponent=decay_exponent)


# -- serialization ---------------------------------------------------------------


def region_to_dict(region: Region) -> dict:
    if isinstance(region, PolyRegion):
        return {
            "kind": "poly",
            "enstrophy_cap": region.enstrophy_cap,
            "tail_cutoff": region.tail_cutoff,
            "decay_exponent": region.decay_exponent,
            "tail_amplitude": region.tail_amplitude,
        }
    if isinstance(region, ExpRegion):
        return {
            "kind": "exp",
            "base": region_to_dict(region.base),
            "amplitude": region.amplitude,
            "exp_cutoff": region.exp_cutoff,
            "decay_rate": region.decay_rate,
        }
    if isinstance(region, TimeExpRegion):
        return {
            "kind": "time-exp",
            "base": region_to_dict(region.base),
            "amplitude": region.amplitude,
            "exp_cutoff": region.exp_cutoff,
            "decay_rate": region.decay_rate,
            "horizon": region.horizon,
        }
    if isinstance(region, SmallDataRegion):
        return {
            "kind": "small-data-3d",
            "amplitude": region.amplitude,
            "decay_exponent": region.decay_exponent,
        }
    raise ParameterError(f"unknown region type {type(region).__name__}")


def region_from_dict(obj: dict) -> Region:
    kind = obj.get("kind")
    if kind == "poly":
        return PolyRegion(
            enstrophy_cap=float(obj["enstrophy_cap"]),
            tail_cutoff=float(obj["tail_cutoff"]),
            decay_exponent=float(obj["decay_exponent"]),
            tail_amplitude=float(obj["tail_amplitude"]),
        )
    if kind == "exp":
        return ExpRegion(
            base=region_from_dict(obj["base"]),
            amplitude=float(obj["amplitude"]),
            exp_cutoff=float(obj["exp_cutoff"]),
            decay_rate=float(obj["decay_rate"]),
        )
    if kind == "time-exp":
        return TimeExpRegion(
            base=region_from_dict(obj["base"]),
            amplitude=float(obj["amplitude"]),
            exp_cutoff=float(obj["exp_cutoff"]),
            decay_rate=float(obj["decay_rate"]),
            horizon=float(obj["horizon"]),
        )
    if kind == "small-data-3d":
        return SmallDataRegion(
            amplitude=float(obj["amplitude"]),
            decay_exponent=float(obj["decay_exponent"]),
        )
    raise ParameterError(f"unknown region kind {kind!r}")


@dataclass(frozen=True)
class RegionDocument:
    """A region together with the physics and constants that justify it.

    This is the on-disk form consumed by the command line: validation re-runs
    every builder inequality against the embedded constant estimates, so a
    tampered or under-margined document is rejected before certification.
    """

    region: Region
    viscosity: float
    force: ForceField
    constants: tuple[ConstantEstimate, ...]
    margin: float

    def _constant(self, name: str, dimension: int) -> ConstantEstimate:
        for c in self.constants:
            if c.name == name and c.dimension == dimension:
                return c
        raise ParameterError(f"region document is missing a {name} constant for d={dimension}")

    def validate(self) -> None:
        if self.margin <= 0:
            raise ParameterError("region document must carry a positive margin")
        if self.viscosity <= 0:
            raise ParameterError("viscosity must be positive")
        region = self.region
        base = _base_poly(region)
        if base is not None:
            c = self._constant("advection_bound", 2).constant
            v_star = (force_enstrophy_norm(self.force) / self.viscosity) ** 2
            if base.enstrophy_cap <= v_star:
                raise ParameterError("enstrophy cap does not exceed the forcing floor")
            if base.tail_cutoff <= c * c * base.enstrophy_cap / self.viscosity**2:
                raise ParameterError("tail cutoff below the advection threshold")
            if base.tail_cutoff < self.force.cutoff:
                raise ParameterError("force is supported beyond the tail cutoff")
            if base.tail_amplitude <= math.sqrt(base.enstrophy_cap) * base.tail_cutoff ** (
                base.decay_exponent - 1.0
            ):
                raise ParameterError("tail amplitude below sqrt(cap) * cutoff^(g-1)")
        if isinstance(region, (ExpRegion, TimeExpRegion)):
            cq = self._constant("convolution_sum_bound", 2).constant
            if region.exp_cutoff <= cq * region.amplitude / self.viscosity:
                raise ParameterError("exponential cutoff below the convolution threshold")
        if isinstance(region, SmallDataRegion):
            if force_enstrophy_norm(self.force) != 0.0:
                raise ParameterError("small-data regions require zero force")
            cq = self._constant("convolution_sum_bound", 3).constant
            if region.amplitude >= self.viscosity / cq:
                raise ParameterError("amplitude not strictly below viscosity / convolution bound")

    def to_json_dict(self) -> dict:
        return {
            "region": region_to_dict(self.region),
            "viscosity": self.viscosity,
            "force": self.force.field.to_json_dict() if len(self.force.modeset) else None,
            "force_cutoff": self.force.cutoff,
            "constants": [c.to_dict() for c in self.constants],
            "margin": self.margin,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RegionDocument":
        region = region_from_dict(obj["region"])
        if obj.get("force") is None:
            force = ForceField.zero(region.dimension)
        else:
            force = ForceField(
                SpectralField.from_json_dict(obj["force"]), cutoff=obj.get("force_cutoff")
            )
        constants = tuple(ConstantEstimate.from_dict(c) for c in obj.get("constants", []))
        return cls(
            region=region,
            viscosity=float(obj["viscosity"]),
            force=force,
            constants=constants,
            margin=float(obj["margin"]),
        )


# -- boundary certification -------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """Outcome of sampling the boundary facets of a region.

    ``worst_margin`` is the largest observed boundary derivative (enstrophy
    rate on the cap facet, modulus rate minus envelope rate on the others);
    the verdict is pass exactly when it is strictly negative everywhere
    sampled.
    """

    region: dict
    projection: dict
    samples: int
    seed: int
    backoff: float
    worst_margin: float
    worst_class: str
    worst_facet_mode: Mode | None
    worst_time: float
    worst_state_digest: str
    per_class: dict
    constants_used: tuple[ConstantEstimate, ...]
    verdict: str

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json_dict(self) -> dict:
        return {
            "region": self.region,
            "projection": self.projection,
            "samples": self.samples,
            "seed": self.seed,
            "backoff": self.backoff,
            "worst_margin": self.worst_margin,
            "worst_class": self.worst_class,
            "worst_facet_mode": list(self.worst_facet_mode)
            if self.worst_facet_mode is not None
            else None,
            "worst_time": self.worst_time,
            "worst_state_digest": self.worst_state_digest,
            "per_class": self.per_class,
            "constants_used": [c.to_dict() for c in self.constants_used],
            "verdict": self.verdict,
        }


def _facet_classes(region: Region) -> list[str]:
    if isinstance(region, PolyRegion):
        return [FACET_ENSTROPHY, FACET_TAIL]
    if isinstance(region, ExpRegion):
        return [FACET_ENSTROPHY, FACET_TAIL, FACET_EXP]
    if isinstance(region, TimeExpRegion):
        return [FACET_ENSTROPHY, FACET_TAIL, FACET_TIME]
    return [FACET_TAIL]


class _BoundarySampler:
    """Draws admissible states saturating exactly one boundary facet."""

    def __init__(self, region: Region, projection: ModeSet, backoff: float):
        if not 0.0 < backoff < 1.0:
            raise ParameterError("backoff must lie strictly between 0 and 1")
        self.region = region
        self.projection = projection
        self.backoff = backoff
        self.norms = np.sqrt(projection.norms_sq.astype(float))
        self.reps, self.mirrors, self.bases = _representative_data(projection)
        self.rep_norms = self.norms[self.reps]
        self.rep_nsq = projection.norms_sq[self.reps].astype(float)
        self.vcap = _enstrophy_cap(region)

    def _eligible(self, facet_class: str, t: float) -> np.ndarray:
        """Representative indices whose facet of the given class is nonempty."""
        poly = _poly_caps(self.region, self.rep_norms)
        expc = _exp_caps(self.region, self.rep_norms, t)
        if facet_class == FACET_TAIL:
            mask = np.isfinite(poly) & (poly <= expc)
            caps = poly
        else:
            mask = np.isfinite(expc) & (expc < poly)
            caps = expc
        if self.vcap is not None:
            with np.errstate(invalid="ignore"):
                mask &= 2.0 * self.rep_nsq * np.where(mask, caps, 0.0) ** 2 <= 0.9 * self.vcap
        return np.nonzero(mask)[0]

    def _interior(self, rng: np.random.Generator, t: float) -> np.ndarray:
        caps = _envelope_caps(self.region, self.rep_norms, t)
        bound = caps.copy()
        if self.vcap is not None:
            bound = np.minimum(bound, math.sqrt(self.vcap) / self.rep_norms)
        n_r, _, n_tan = self.bases.shape
        c = rng.standard_normal((n_r, n_tan)) + 1j * rng.standard_normal((n_r, n_tan))
        u_rep = np.einsum("rdm,rm->rd", self.bases, c)
        moduli = np.sqrt(np.sum(np.abs(u_rep) ** 2, axis=1))
        moduli[moduli == 0.0] = 1.0
        amps = bound * rng.uniform(0.0, 1.0 - self.backoff, n_r)
        u_rep *= (amps / moduli)[:, None]
        coeffs = np.zeros((len(self.projection), self.projection.dimension), dtype=np.complex128)
        coeffs[self.reps] = u_rep
        coeffs[self.mirrors] = np.conj(u_rep)
        if self.vcap is not None:
            v = self._enstrophy_raw(coeffs)
            limit = (1.0 - self.backoff) * self.vcap
            if v > limit and v > 0.0:
                coeffs *= math.sqrt(limit / v)
        return coeffs

    def _enstrophy_raw(self, coeffs: np.ndarray) -> float:
        return float(
            np.sum(self.projection.norms_sq * np.sum(np.abs(coeffs) ** 2, axis=1))
        )

    def draw(
        self, facet_class: str, rng: np.random.Generator
    ) -> tuple[np.ndarray, int | None, float]:
        """Returns (coefficients, saturated mode index or None, sample time)."""
        t = 0.0
        if isinstance(self.region, TimeExpRegion):
            t = float(rng.uniform(0.0, self.region.horizon))
        coeffs = self._interior(rng, t)
        if facet_class == FACET_ENSTROPHY:
            # rescale only the cap-free head so no modulus envelope can break
            free = ~np.isfinite(_envelope_caps(self.region, self.rep_norms, t))
            pos = np.nonzero(free)[0]
            if not len(pos):
                raise CertificationError("no envelope-free head modes to saturate the cap")
            head = self.reps[pos]
            head_mirror = self.projection.mirror_indices[head]
            both = np.concatenate([head, head_mirror])

            def head_enstrophy() -> float:
                return float(
                    np.sum(
                        self.projection.norms_sq[both]
                        * np.sum(np.abs(coeffs[both]) ** 2, axis=1)
                    )
                )

            v_head = head_enstrophy()
            if v_head <= 0.0:
                # degenerate head draw: seed it with unit tangent coefficients
                n_tan = self.bases.shape[2]
                u_fresh = np.einsum(
                    "rdm,rm->rd", self.bases[pos], np.ones((len(pos), n_tan), dtype=complex)
                )
                u_fresh /= np.sqrt(np.sum(np.abs(u_fresh) ** 2, axis=1))[:, None]
                coeffs[head] = u_fresh / self.norms[head][:, None]
                coeffs[head_mirror] = np.conj(coeffs[head])
                v_head = head_enstrophy()
            v_tail = self._enstrophy_raw(coeffs) - v_head
            scale = math.sqrt((self.vcap - v_tail) / v_head)
            coeffs[head] *= scale
            coeffs[head_mirror] = np.conj(coeffs[head])
            return coeffs, None, t
        eligible = self._eligible(facet_class, t)
        if not len(eligible):
            raise CertificationError(
                f"projection has no boundary facets of class {facet_class!r}; widen the projection"
            )
        pick = int(eligible[rng.integers(len(eligible))])
        rep_idx = int(self.reps[pick])
        mirror_idx = int(self.mirrors[pick])
        caps = _envelope_caps(self.region, self.rep_norms, t)
        env = float(caps[pick])
        current = math.sqrt(float(np.sum(np.abs(coeffs[rep_idx]) ** 2)))
        if current == 0.0:
            n_tan = self.bases.shape[2]
            u_fresh = self.bases[pick] @ np.ones(n_tan, dtype=complex)
            coeffs[rep_idx] = u_fresh / math.sqrt(float(np.sum(np.abs(u_fresh) ** 2)))
            current = 1.0
        coeffs[rep_idx] = coeffs[rep_idx] * (env / current)
        coeffs[mirror_idx] = np.conj(coeffs[rep_idx])
        if self.vcap is not None:
            v = self._enstrophy_raw(coeffs)
            if v > self.vcap:
                v_pair = 2.0 * float(self.rep_nsq[pick]) * env * env
                others = math.sqrt(max(self.vcap - v_pair, 0.0) / (v - v_pair))
                keep = coeffs[rep_idx].copy()
                coeffs *= others
                coeffs[rep_idx] = keep
                coeffs[mirror_idx] = np.conj(keep)
        return coeffs, rep_idx, t

    def facet_margin(
        self,
        coeffs: np.ndarray,
        rate: np.ndarray,
        facet_idx: int | None,
        facet_class: str,
    ) -> float:
        if facet_class == FACET_ENSTROPHY:
            return 2.0 * float(
                np.real(
                    np.einsum(
                        "nd,nd,n->", rate, np.conj(coeffs), self.projection.norms_sq.astype(float)
                    )
                )
            )
        u_f = coeffs[facet_idx]
        modulus = math.sqrt(float(np.sum(np.abs(u_f) ** 2)))
        d_modulus = float(np.real(np.sum(rate[facet_idx] * np.conj(u_f)))) / modulus
        envelope_rate = 0.0
        if facet_class == FACET_TIME:
            envelope_rate = -self.region.decay_rate * self.norms[facet_idx] * modulus
        return d_modulus - envelope_rate


def certify_inward(
    region: Region,
    projection: ModeSet,
    force: ForceField,
    params: PhysicsParams,
    samples: int,
    seed: int,
    backoff: float = 0.1,
    threads: int = 1,
    document: RegionDocument | None = None,
) -> Certificate:
    """Sample boundary states on every facet class and test inwardness.

    For each class, ``samples`` admissible pseudo-random states are drawn on
    that part of the boundary and the outward derivative is evaluated: the
    enstrophy rate on the cap facet, the modulus rate minus the envelope rate
    on the modulus facets.  The verdict is pass iff every margin is strictly
    negative.  Constants provenance is taken from ``document`` when given.
    """
    if samples < 1:
        raise ParameterError("need at least one sample per facet class")
    if projection.dimension != region.dimension or params.dimension != region.dimension:
        raise ParameterError("region, projection and parameters must share one dimension")
    base = _base_poly(region)
    if base is not None and force.cutoff > base.tail_cutoff + 1e-12:
        raise CertificationError("force is supported beyond the tail cutoff")
    if isinstance(region, SmallDataRegion) and force_enstrophy_norm(force) != 0.0:
        raise CertificationError("small-data regions require zero force")

    sampler = _BoundarySampler(region, projection, backoff)
    plan = _convolution_plan(projection, projection)
    lam = (params.viscosity * projection.norms_sq.astype(float))[:, None]
    f_arr = force.projected_onto(projection)
    classes = _facet_classes(region)
    children = np.random.SeedSequence(seed).spawn(len(classes) * samples)

    def evaluate(job: int) -> tuple[float, int | None, float, np.ndarray]:
        facet_class = classes[job // samples]
        rng = np.random.default_rng(children[job])
        coeffs, facet_idx, t = sampler.draw(facet_class, rng)
        rate = _advection_raw(plan, coeffs, coeffs) + f_arr - lam * coeffs
        margin = sampler.facet_margin(coeffs, rate, facet_idx, facet_class)
        return margin, facet_idx, t, coeffs

    jobs = range(len(classes) * samples)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(evaluate, jobs))
    else:
        results = [evaluate(j) for j in jobs]

    per_class: dict[str, dict] = {}
    worst = None
    for job, (margin, facet_idx, t, coeffs) in zip(jobs, results):
        facet_class = classes[job // samples]
        record = per_class.setdefault(
            facet_class, {"samples": 0, "worst_margin": -math.inf}
        )
        record["samples"] += 1
        record["worst_margin"] = max(record["worst_margin"], margin)
        if worst is None or margin > worst[0]:
            worst = (margin, facet_class, facet_idx, t, coeffs)
    margin, facet_class, facet_idx, t, coeffs = worst
    worst_state = SpectralField(projection, coeffs, copy=False)
    constants = document.constants if document is not None else ()
    return Certificate(
        region=region_to_dict(region),
        projection={
            "dimension": projection.dimension,
            "size": len(projection),
            "max_norm": projection.max_norm,
        },
        samples=samples,
        seed=seed,
        backoff=backoff,
        worst_margin=float(margin),
        worst_class=facet_class,
        worst_facet_mode=projection.modes[facet_idx] if facet_idx is not None else None,
        worst_time=float(t),
        worst_state_digest=worst_state.digest(),
        per_class=per_class,
        constants_used=tuple(constants),
        verdict="pass" if margin < 0.0 else "fail",
    )


# -- limit-readiness conditions ---------------------------------------------------


@dataclass(frozen=True)
class ConditionsReport:
    """Which limit-readiness thresholds an envelope class satisfies.

    ``projection_invariance``: restrictions to symmetric mode sets stay in the
    class (true for envelope-plus-cap sets).  ``state_majorant_summable``:
    the per-mode envelope is square-summable (g > d/2), with its norm and a
    tail bound attached.  ``image_majorant_summable``: the vector field of
    states in the class has a square-summable majorant (g - 2 > d/2 and
    g > d).  ``uniform_lognorm``: a dimension-independent growth-rate bound
    exists (g > d + 1).
    """

    dimension: int
    decay_exponent: float
    amplitude: float
    projection_invariance: bool
    state_majorant_summable: bool
    image_majorant_summable: bool
    uniform_lognorm: bool
    majorant_norm: float
    majorant_tail: float

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "decay_exponent": self.decay_exponent,
            "amplitude": self.amplitude,
            "projection_invariance": self.projection_invariance,
            "state_majorant_summable": self.state_majorant_summable,
            "image_majorant_summable": self.image_majorant_summable,
            "uniform_lognorm": self.uniform_lognorm,
            "majorant_norm": self.majorant_norm,
            "majorant_tail": self.majorant_tail,
        }


def check_compactness_conditions(
    decay_exponent: float, amplitude: float, dimension: int, lattice_radius: float | None = None
) -> ConditionsReport:
    """Threshold tests for passing truncated dynamics to the full system."""
    g = decay_exponent
    d = dimension
    state_ok = g > d / 2.0
    image_ok = (g - 2.0 > d / 2.0) and (g > d)
    lognorm_ok = g > d + 1.0
    norm = math.inf
    tail = math.inf
    if state_ok:
        value, tail_sum = inverse_power_sum(d, 2.0 * g, lattice_radius or 0.0)
        norm = amplitude * math.sqrt(value)
        tail = amplitude * math.sqrt(value + tail_sum) - norm
    return ConditionsReport(
        dimension=d,
        decay_exponent=g,
        amplitude=amplitude,
        projection_invariance=True,
        state_majorant_summable=state_ok,
        image_majorant_summable=image_ok,
        uniform_lognorm=lognorm_ok,
        majorant_norm=norm,
        majorant_tail=tail,
    )


def region_conditions(region: Region, lattice_radius: float | None = None) -> ConditionsReport:
    """Condition report for the envelope class containing a region."""
    if isinstance(region, SmallDataRegion):
        return check_compactness_conditions(
            region.decay_exponent, region.amplitude, 3, lattice_radius
        )
    base = _base_poly(region)
    return check_compactness_conditions(
        base.decay_exponent, base.tail_amplitude, 2, lattice_radius
    )
