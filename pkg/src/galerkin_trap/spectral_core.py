"""Divergence-free Fourier velocity fields on symmetric mode sets.

The state of a periodic incompressible flow is a finite map from nonzero
integer wave vectors k to complex velocity coefficients u_k.  Mode sets are
closed under k -> -k so that real-valued velocity fields are representable,
every stored coefficient is orthogonal to its wave vector, and coefficients
at mirrored wave vectors are complex conjugates.

On top of that representation this module provides the mode-wise projection
that removes the pressure gradient, the truncated quadratic advection term
evaluated by two independent routes (direct convolution and an alias-free
collocation grid), the full right-hand side of the truncated mode ODEs, the
recovered pressure coefficients, and the enstrophy-type norms used by the
rest of the package.

All containers are immutable values and all operations are pure, so
everything here is safe to call concurrently.  Reductions run in a fixed
lexicographic mode order, which makes results reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    InvariantViolation,
    ParameterError,
    ResolutionError,
)

Mode = tuple[int, ...]

__all__ = [
    "Mode",
    "ModeSet",
    "SpectralField",
    "ForceField",
    "PhysicsParams",
    "leray_project",
    "nonlinear_term",
    "nonlinear_term_grid",
    "rhs",
    "pressure_coefficients",
    "enstrophy",
    "force_enstrophy_norm",
    "perp_basis",
    "random_solenoidal_field",
    "is_representative",
]


def _as_mode(value: Sequence[int]) -> Mode:
    mode = tuple(int(c) for c in value)
    for c, raw in zip(mode, value):
        if c != raw:
            raise ParameterError(f"non-integer mode component in {tuple(value)!r}")
    return mode


def is_representative(mode: Mode) -> bool:
    """One mode per conjugate pair: the one whose leading nonzero entry is positive."""
    for c in mode:
        if c != 0:
            return c > 0
    return False


class ModeSet:
    """Finite symmetric set of nonzero integer wave vectors.

    Symmetric means ``k in set`` implies ``-k in set``.  The canonical shape
    is the Euclidean ball ``0 < |k| <= radius``; boxes and annuli are also
    constructible.  Modes are stored sorted lexicographically so that every
    reduction over the set has a fixed order.
    """

    __slots__ = ("dimension", "modes", "_index", "_array", "_norms_sq", "_mirror", "_hash")

    def __init__(self, dimension: int, modes: Iterable[Sequence[int]]):
        if dimension not in (2, 3):
            raise ParameterError(f"dimension must be 2 or 3, got {dimension}")
        unique = sorted({_as_mode(m) for m in modes})
        as_set = set(unique)
        for m in unique:
            if len(m) != dimension:
                raise ParameterError(f"mode {m} has wrong dimension (expected {dimension})")
            if not any(m):
                raise ParameterError("the zero wave vector is excluded from mode sets")
            if tuple(-c for c in m) not in as_set:
                raise InvariantViolation(f"mode set is not symmetric: {m} present, {tuple(-c for c in m)} missing")
        self.dimension = dimension
        self.modes: tuple[Mode, ...] = tuple(unique)
        self._index = {m: i for i, m in enumerate(unique)}
        self._array = np.array(unique, dtype=np.int64).reshape(len(unique), dimension)
        self._array.setflags(write=False)
        self._norms_sq = np.sum(self._array * self._array, axis=1)
        self._norms_sq.setflags(write=False)
        self._mirror = np.array([self._index[tuple(-c for c in m)] for m in unique], dtype=np.int64)
        self._mirror.setflags(write=False)
        self._hash = hash((dimension, self.modes))

    @classmethod
    def ball(cls, radius: float, dimension: int = 2) -> "ModeSet":
        """Canonical shape: all nonzero k with Euclidean norm at most ``radius``."""
        if radius < 1:
            raise ParameterError("ball radius must be at least 1")
        r = int(math.floor(radius))
        rng = range(-r, r + 1)
        if dimension == 2:
            candidates = ((i, j) for i in rng for j in rng)
        else:
            candidates = ((i, j, k) for i in rng for j in rng for k in rng)
        rsq = radius * radius
        return cls(dimension, (m for m in candidates if 0 < sum(c * c for c in m) <= rsq))

    @classmethod
    def box(cls, half_width: int, dimension: int = 2) -> "ModeSet":
        """All nonzero k with max-norm at most ``half_width`` (non-canonical)."""
        if half_width < 1:
            raise ParameterError("box half-width must be at least 1")
        rng = range(-half_width, half_width + 1)
        if dimension == 2:
            candidates = ((i, j) for i in rng for j in rng)
        else:
            candidates = ((i, j, k) for i in rng for j in rng for k in rng)
        return cls(dimension, (m for m in candidates if any(m)))

    @classmethod
    def annulus(cls, inner: float, outer: float, dimension: int = 2) -> "ModeSet":
        """All k with ``inner < |k| <= outer`` (non-canonical)."""
        if outer <= inner or inner < 0:
            raise ParameterError("annulus needs 0 <= inner < outer")
        base = cls.ball(outer, dimension)
        isq = inner * inner
        return cls(dimension, (m for m, n in zip(base.modes, base.norms_sq) if n > isq))

    @property
    def array(self) -> np.ndarray:
        """Modes as an (n, d) integer array in lexicographic order (read-only)."""
        return self._array

    @property
    def norms_sq(self) -> np.ndarray:
        """|k|^2 per mode, aligned with :attr:`array` (read-only)."""
        return self._norms_sq

    @property
    def mirror_indices(self) -> np.ndarray:
        """Index of -k for each mode (read-only)."""
        return self._mirror

    @property
    def max_abs_component(self) -> int:
        return int(np.max(np.abs(self._array))) if len(self.modes) else 0

    @property
    def max_norm(self) -> float:
        return math.sqrt(float(np.max(self._norms_sq))) if len(self.modes) else 0.0

    def index(self, mode: Sequence[int]) -> int:
        return self._index[_as_mode(mode)]

    def issubset(self, other: "ModeSet") -> bool:
        return self.dimension == other.dimension and set(self.modes) <= set(other.modes)

    def __contains__(self, mode) -> bool:
        try:
            return _as_mode(mode) in self._index
        except (ParameterError, TypeError):
            return False

    def __iter__(self) -> Iterator[Mode]:
        return iter(self.modes)

    def __len__(self) -> int:
        return len(self.modes)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ModeSet)
            and self.dimension == other.dimension
            and self.modes == other.modes
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"ModeSet(d={self.dimension}, n={len(self.modes)}, max|k|={self.max_norm:.3g})"


@dataclass(frozen=True)
class PhysicsParams:
    """Viscosity and spatial dimension of the flow."""

    viscosity: float
    dimension: int

    def __post_init__(self):
        if self.viscosity <= 0:
            raise ParameterError(f"viscosity must be positive, got {self.viscosity}")
        if self.dimension not in (2, 3):
            raise ParameterError(f"dimension must be 2 or 3, got {self.dimension}")


class SpectralField:
    """Velocity coefficients over a fixed :class:`ModeSet`.

    Coefficients are stored as a complex (n, d) array aligned with
    ``modeset.modes``.  An admissible field has every coefficient orthogonal
    to its wave vector and conjugate symmetry between mirrored modes; use
    :meth:`validate` to check both.
    """

    __slots__ = ("modeset", "coeffs")

    def __init__(self, modeset: ModeSet, coeffs: np.ndarray, copy: bool = True):
        if copy:
            arr = np.array(coeffs, dtype=np.complex128)
        else:
            arr = np.asarray(coeffs, dtype=np.complex128)
        if arr.shape != (len(modeset), modeset.dimension):
            raise ParameterError(
                f"coefficient array shape {arr.shape} does not match mode set "
                f"({len(modeset)}, {modeset.dimension})"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "modeset", modeset)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    @classmethod
    def zero(cls, modeset: ModeSet) -> "SpectralField":
        return cls(modeset, np.zeros((len(modeset), modeset.dimension), dtype=np.complex128), copy=False)

    @classmethod
    def from_coeff_map(
        cls,
        modeset: ModeSet,
        mapping: Mapping[Mode, Sequence[complex]],
        validate: bool = True,
        tol: float = 1e-12,
    ) -> "SpectralField":
        arr = np.zeros((len(modeset), modeset.dimension), dtype=np.complex128)
        for mode, value in mapping.items():
            arr[modeset.index(mode)] = np.asarray(value, dtype=np.complex128)
        field = cls(modeset, arr, copy=False)
        if validate:
            field.validate(tol)
        return field

    @property
    def dimension(self) -> int:
        return self.modeset.dimension

    def __getitem__(self, mode: Sequence[int]) -> np.ndarray:
        return self.coeffs[self.modeset.index(mode)].copy()

    def get(self, mode: Sequence[int]) -> np.ndarray:
        """Coefficient at ``mode``, zero if the mode is outside the set."""
        try:
            return self[mode]
        except KeyError:
            return np.zeros(self.dimension, dtype=np.complex128)

    def coeff_map(self) -> dict[Mode, np.ndarray]:
        return {m: self.coeffs[i].copy() for i, m in enumerate(self.modeset.modes)}

    def moduli(self) -> np.ndarray:
        """Euclidean norm |u_k| of each coefficient vector."""
        return np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=1))

    def l2_norm(self) -> float:
        """sqrt(sum |u_k|^2) over all stored modes."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def validate(self, tol: float = 1e-12) -> None:
        """Raise :class:`InvariantViolation` if any invariant fails.

        Incompressibility ``(u_k, k) = 0`` and conjugate symmetry
        ``conj(u_{-k}) = u_k`` are both checked to ``tol`` relative to the
        coefficient magnitude (absolute for small coefficients).
        """
        bad = _invariant_violations(self.coeffs, self.modeset, tol)
        if bad:
            raise InvariantViolation("; ".join(bad))

    def scaled(self, factor: complex) -> "SpectralField":
        return SpectralField(self.modeset, self.coeffs * factor, copy=False)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.modeset, self.coeffs + other.coeffs, copy=False)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_same(other)
        return SpectralField(self.modeset, self.coeffs - other.coeffs, copy=False)

    def _check_same(self, other: "SpectralField") -> None:
        if self.modeset != other.modeset:
            raise ParameterError("fields live on different mode sets")

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        """JSON form: ``{"dimension": d, "modes": [[k..., re..., im...], ...]}``."""
        rows = []
        for i, m in enumerate(self.modeset.modes):
            c = self.coeffs[i]
            rows.append(list(m) + [float(x) for x in c.real] + [float(x) for x in c.imag])
        return {"dimension": self.dimension, "modes": rows}

    @classmethod
    def from_json_dict(
        cls, obj: Mapping, symmetrize: bool = False, validate: bool = True, tol: float = 1e-12
    ) -> "SpectralField":
        d = int(obj["dimension"])
        mapping: dict[Mode, np.ndarray] = {}
        for row in obj["modes"]:
            if len(row) != 3 * d:
                raise ParameterError(f"mode row of length {len(row)}, expected {3 * d}")
            mode = _as_mode(row[:d])
            vec = np.asarray(row[d : 2 * d], float) + 1j * np.asarray(row[2 * d :], float)
            mapping[mode] = vec
        return cls._from_mapping(d, mapping, symmetrize, validate, tol)

    def to_csv_rows(self) -> list[list]:
        """Flat CSV form: one row per (mode, component): k..., index, re, im."""
        rows = []
        for i, m in enumerate(self.modeset.modes):
            for j in range(self.dimension):
                c = self.coeffs[i, j]
                rows.append(list(m) + [j, float(c.real), float(c.imag)])
        return rows

    @classmethod
    def from_csv_rows(
        cls,
        dimension: int,
        rows: Iterable[Sequence],
        symmetrize: bool = False,
        validate: bool = True,
        tol: float = 1e-12,
    ) -> "SpectralField":
        mapping: dict[Mode, np.ndarray] = {}
        for row in rows:
            mode = _as_mode([int(float(x)) for x in row[:dimension]])
            j = int(float(row[dimension]))
            vec = mapping.setdefault(mode, np.zeros(dimension, dtype=np.complex128))
            vec[j] = float(row[dimension + 1]) + 1j * float(row[dimension + 2])
        return cls._from_mapping(dimension, mapping, symmetrize, validate, tol)

    @classmethod
    def _from_mapping(cls, dimension, mapping, symmetrize, validate, tol) -> "SpectralField":
        if symmetrize:
            for mode in list(mapping):
                mirror = tuple(-c for c in mode)
                if mirror not in mapping:
                    mapping[mirror] = np.conj(mapping[mode])
        missing = [m for m in mapping if tuple(-c for c in m) not in mapping]
        if missing:
            raise InvariantViolation(
                f"missing conjugate modes for {sorted(missing)[:5]}; pass symmetrize to complete them"
            )
        modeset = ModeSet(dimension, mapping.keys())
        return cls.from_coeff_map(modeset, mapping, validate=validate, tol=tol)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON serialization."""
        payload = json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def __repr__(self) -> str:
        return f"SpectralField({self.modeset!r})"


def _invariant_violations(coeffs: np.ndarray, modeset: ModeSet, tol: float) -> list[str]:
    msgs = []
    kf = modeset.array.astype(float)
    moduli = np.sqrt(np.sum(np.abs(coeffs) ** 2, axis=1))
    dots = np.abs(np.einsum("nd,nd->n", coeffs, kf))
    scale = 1.0 + moduli * np.sqrt(modeset.norms_sq)
    bad = np.nonzero(dots > tol * scale)[0]
    for i in bad[:5]:
        msgs.append(f"coefficient at k={modeset.modes[i]} is not orthogonal to k ((u_k,k)={dots[i]:.3e})")
    mismatch = np.sqrt(np.sum(np.abs(np.conj(coeffs[modeset.mirror_indices]) - coeffs) ** 2, axis=1))
    bad = np.nonzero(mismatch > tol * (1.0 + moduli))[0]
    for i in bad[:5]:
        msgs.append(f"conjugate symmetry fails at k={modeset.modes[i]} (|conj(u_-k)-u_k|={mismatch[i]:.3e})")
    return msgs


class ForceField:
    """Finitely supported, divergence-free forcing coefficients.

    The force is stored after mode-wise projection orthogonal to k, so it
    satisfies the same invariants as a velocity field, and it carries a hard
    cutoff radius beyond which every coefficient vanishes.
    """

    __slots__ = ("field", "cutoff")

    def __init__(self, field: SpectralField, cutoff: float | None = None):
        field.validate()
        moduli = field.moduli()
        support = moduli > 0.0
        max_support = (
            math.sqrt(float(np.max(field.modeset.norms_sq[support]))) if np.any(support) else 0.0
        )
        if cutoff is None:
            cutoff = max_support
        elif max_support > cutoff + 1e-12:
            raise ParameterError(
                f"force has nonzero coefficients beyond the cutoff radius {cutoff} (support up to {max_support:.6g})"
            )
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "cutoff", float(cutoff))

    def __setattr__(self, name, value):
        raise AttributeError("ForceField is immutable")

    @classmethod
    def zero(cls, dimension: int) -> "ForceField":
        return cls(SpectralField.zero(ModeSet(dimension, [])), cutoff=0.0)

    @classmethod
    def from_coeff_map(
        cls,
        dimension: int,
        mapping: Mapping[Mode, Sequence[complex]],
        cutoff: float | None = None,
        symmetrize: bool = True,
        project: bool = True,
    ) -> "ForceField":
        work: dict[Mode, np.ndarray] = {
            _as_mode(m): np.asarray(v, dtype=np.complex128) for m, v in mapping.items()
        }
        if symmetrize:
            for mode in list(work):
                mirror = tuple(-c for c in mode)
                if mirror not in work:
                    work[mirror] = np.conj(work[mode])
        if project:
            work = {m: leray_project(m, v) for m, v in work.items()}
        modeset = ModeSet(dimension, work.keys())
        field = SpectralField.from_coeff_map(modeset, work)
        return cls(field, cutoff=cutoff)

    @property
    def dimension(self) -> int:
        return self.field.dimension

    @property
    def modeset(self) -> ModeSet:
        return self.field.modeset

    @property
    def coeffs(self) -> np.ndarray:
        return self.field.coeffs

    def projected_onto(self, modeset: ModeSet) -> np.ndarray:
        """Force coefficients aligned with ``modeset`` (zero outside the support)."""
        out = np.zeros((len(modeset), modeset.dimension), dtype=np.complex128)
        for i, m in enumerate(self.modeset.modes):
            try:
                out[modeset.index(m)] = self.coeffs[i]
            except KeyError:
                continue
        return out

    def __repr__(self) -> str:
        return f"ForceField(n={len(self.modeset)}, cutoff={self.cutoff:.3g})"


# -- mode-wise projection ---------------------------------------------------


def leray_project(k: Sequence[int], v: Sequence[complex]) -> np.ndarray:
    """Project ``v`` onto the hyperplane orthogonal to the wave vector ``k``.

    Uses the unconjugated dot product; the result satisfies (result, k) = 0.
    """
    kv = np.asarray(k, dtype=float)
    vv = np.asarray(v, dtype=np.complex128)
    nsq = float(kv @ kv)
    if nsq == 0.0:
        raise ParameterError("cannot project along the zero wave vector")
    return vv - (vv @ kv / nsq) * kv


# -- direct convolution -----------------------------------------------------


class _ConvPlan:
    """Index plan for the truncated convolution from one mode set onto another.

    Pairs are ordered lexicographically by (target mode, source mode), and
    segment sums run sequentially in that order, so evaluation is
    deterministic.
    """

    __slots__ = (
        "n_target",
        "dimension",
        "src",
        "hit",
        "pair_kf",
        "seg_starts",
        "seg_rows",
        "target_kf",
        "target_nsq",
        "pair_src_nsq",
    )

    def __init__(self, source: ModeSet, target: ModeSet):
        s_arr = source.array
        t_arr = target.array
        d = source.dimension
        self.n_target = len(target)
        self.dimension = d
        self.target_kf = t_arr.astype(float)
        self.target_nsq = target.norms_sq.astype(float)
        if len(source) == 0 or len(target) == 0:
            self.src = np.zeros(0, dtype=np.int64)
            self.hit = np.zeros(0, dtype=np.int64)
            self.pair_kf = np.zeros((0, d))
            self.pair_src_nsq = np.zeros(0)
            self.seg_starts = np.zeros(0, dtype=np.int64)
            self.seg_rows = np.zeros(0, dtype=np.int64)
            return
        bound = source.max_abs_component
        width = 2 * bound + 1
        table = np.full(width**d, -1, dtype=np.int64)
        flat_src = np.zeros(len(source), dtype=np.int64)
        for axis in range(d):
            flat_src = flat_src * width + (s_arr[:, axis] + bound)
        table[flat_src] = np.arange(len(source))
        diffs = t_arr[:, None, :] - s_arr[None, :, :]
        inside = np.all(np.abs(diffs) <= bound, axis=2)
        clipped = np.clip(diffs + bound, 0, width - 1)
        flat = np.zeros(clipped.shape[:2], dtype=np.int64)
        for axis in range(d):
            flat = flat * width + clipped[:, :, axis]
        hits = table[flat]
        mask = inside & (hits >= 0)
        rows, srcs = np.nonzero(mask)
        self.src = srcs.astype(np.int64)
        self.hit = hits[rows, srcs].astype(np.int64)
        self.pair_kf = self.target_kf[rows]
        self.pair_src_nsq = source.norms_sq[self.src].astype(float)
        counts = np.bincount(rows, minlength=self.n_target)
        nonempty = counts > 0
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.seg_starts = starts[nonempty]
        self.seg_rows = np.nonzero(nonempty)[0]

    def segment_sums(self, terms: np.ndarray) -> np.ndarray:
        out = np.zeros((self.n_target, self.dimension), dtype=np.complex128)
        if len(self.src):
            out[self.seg_rows] = np.add.reduceat(terms, self.seg_starts, axis=0)
        return out


@lru_cache(maxsize=64)
def _convolution_plan(source: ModeSet, target: ModeSet) -> _ConvPlan:
    if source.dimension != target.dimension:
        raise ParameterError("source and target mode sets have different dimensions")
    return _ConvPlan(source, target)


def _convolve_sums(plan: _ConvPlan, first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Raw sums over pairs: sum_{k1} (first_{k1}, k) second_{k-k1} per target k."""
    if not len(plan.src):
        return np.zeros((plan.n_target, plan.dimension), dtype=np.complex128)
    dots = np.einsum("pd,pd->p", first[plan.src], plan.pair_kf)
    terms = dots[:, None] * second[plan.hit]
    return plan.segment_sums(terms)


def _advection_raw(plan: _ConvPlan, first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """-i * leray(sum (first_{k1}, k) second_{k-k1}) on the plan's target set."""
    sums = _convolve_sums(plan, first, second)
    kf = plan.target_kf
    if plan.n_target:
        sums -= (np.einsum("td,td->t", sums, kf) / plan.target_nsq)[:, None] * kf
    return -1j * sums


def nonlinear_term(u: SpectralField, target: ModeSet | None = None) -> SpectralField:
    """Truncated advection term by direct convolution.

    For each target mode k sums -i (u_{k1}, k) proj_k u_{k-k1} over all k1
    with both k1 and k-k1 inside ``u.modeset``.  Output coefficients are
    orthogonal to k and conjugate-symmetric whenever the input is.
    """
    target = target if target is not None else u.modeset
    plan = _convolution_plan(u.modeset, target)
    return SpectralField(target, _advection_raw(plan, u.coeffs, u.coeffs), copy=False)


# -- collocation-grid oracle ------------------------------------------------


def grid_resolution_needed(u_modes: ModeSet, target: ModeSet) -> int:
    """Smallest per-axis grid size evaluating the quadratic term alias-free.

    The product of two fields with per-axis frequencies up to A carries
    frequencies up to 2A; a frequency q aliases onto a target mode t on an
    M-point grid iff q = t +/- M.  With target frequencies up to A_t this is
    impossible once M >= 2*A + A_t + 1.
    """
    a_u = u_modes.max_abs_component
    a_t = target.max_abs_component
    return 2 * a_u + a_t + 1


def nonlinear_term_grid(
    u: SpectralField, target: ModeSet | None = None, resolution: int | None = None
) -> SpectralField:
    """Advection term via a uniform collocation grid (independent route).

    Evaluates the velocity and its gradient on a physical grid fine enough to
    resolve every mode product exactly, forms the advective derivative
    pointwise, transforms back, and projects mode-wise.  Agrees with
    :func:`nonlinear_term` up to roundoff.
    """
    target = target if target is not None else u.modeset
    d = u.dimension
    need = grid_resolution_needed(u.modeset, target)
    if resolution is None:
        resolution = need
    elif resolution < need:
        raise ResolutionError(
            f"grid resolution {resolution} below the alias-free requirement {need}"
        )
    m = int(resolution)
    shape = (m,) * d
    spec = np.zeros(shape + (d,), dtype=np.complex128)
    idx = tuple(np.mod(u.modeset.array[:, axis], m) for axis in range(d))
    spec[idx] = u.coeffs
    axes = tuple(range(d))
    # u(x) = sum u_k exp(i k.x); numpy ifft carries 1/m^d, so scale back.
    phys = np.fft.ifftn(spec, axes=axes) * (m**d)
    freqs = np.fft.fftfreq(m, d=1.0 / m)
    adv = np.zeros_like(phys)
    for alpha in range(d):
        shape_alpha = [1] * d
        shape_alpha[alpha] = m
        ik = (1j * freqs).reshape(shape_alpha + [1])
        dphys = np.fft.ifftn(ik * spec, axes=axes) * (m**d)
        adv += phys[..., alpha : alpha + 1] * dphys
    what = np.fft.fftn(adv, axes=axes) / (m**d)
    out_idx = tuple(np.mod(target.array[:, axis], m) for axis in range(d))
    wk = what[out_idx]
    kf = target.array.astype(float)
    nsq = target.norms_sq.astype(float)
    wk -= (np.einsum("td,td->t", wk, kf) / nsq)[:, None] * kf
    return SpectralField(target, -wk, copy=False)


# -- right-hand side and pressure -------------------------------------------


def _aligned_coeffs(u: SpectralField, target: ModeSet) -> np.ndarray:
    if target == u.modeset:
        return u.coeffs
    out = np.zeros((len(target), target.dimension), dtype=np.complex128)
    for i, mode in enumerate(target.modes):
        try:
            out[i] = u.coeffs[u.modeset.index(mode)]
        except KeyError:
            continue
    return out


def rhs(
    u: SpectralField, f: ForceField, p: PhysicsParams, target: ModeSet | None = None
) -> SpectralField:
    """Full right-hand side of the truncated mode ODEs on ``target``.

    rhs_k = nonlinear_term(u)_k - nu |k|^2 u_k + proj_k f_k.
    """
    target = target if target is not None else u.modeset
    if u.dimension != p.dimension or f.dimension != p.dimension:
        raise ParameterError("field, force and parameters must share one dimension")
    plan = _convolution_plan(u.modeset, target)
    out = _advection_raw(plan, u.coeffs, u.coeffs)
    out -= p.viscosity * target.norms_sq[:, None] * _aligned_coeffs(u, target)
    out += f.projected_onto(target)
    return SpectralField(target, out, copy=False)


def pressure_coefficients(
    u: SpectralField, f: ForceField, tol: float = 1e-10
) -> dict[Mode, complex]:
    """Pressure coefficients balancing the non-solenoidal part of the advection.

    Solves i p_k k = -i sum (u_{k1}, k)(I - proj_k) u_{k-k1} + (I - proj_k) f_k
    for every k reachable by a mode sum (plus the force support).  The right
    side is parallel to k by construction; a residual beyond ``tol`` signals a
    broken invariant upstream and raises :class:`ConsistencyError`.
    """
    d = u.dimension
    s_arr = u.modeset.array
    support: set[Mode] = set()
    if len(s_arr):
        sums = (s_arr[:, None, :] + s_arr[None, :, :]).reshape(-1, d)
        support.update(tuple(int(c) for c in row) for row in sums if any(row))
    support.update(f.modeset.modes)
    if not support:
        return {}
    target = ModeSet(d, support)
    plan = _convolution_plan(u.modeset, target)
    sums = _convolve_sums(plan, u.coeffs, u.coeffs)
    kf = target.array.astype(float)
    nsq = target.norms_sq.astype(float)
    f_aligned = f.projected_onto(target)

    def parallel_part(vec: np.ndarray) -> np.ndarray:
        return (np.einsum("td,td->t", vec, kf) / nsq)[:, None] * kf

    rhs_vec = -1j * parallel_part(sums) + parallel_part(f_aligned)
    residual = rhs_vec - parallel_part(rhs_vec)
    scale = 1.0 + np.sqrt(np.sum(np.abs(sums) ** 2, axis=1))
    worst = np.sqrt(np.sum(np.abs(residual) ** 2, axis=1)) / scale
    if np.any(worst > tol):
        i = int(np.argmax(worst))
        raise ConsistencyError(
            f"pressure right side not parallel to k at {target.modes[i]} (residual {worst[i]:.3e})"
        )
    p_vals = np.einsum("td,td->t", rhs_vec, kf) / (1j * nsq)
    return {mode: complex(p_vals[i]) for i, mode in enumerate(target.modes)}


# -- norms -------------------------------------------------------------------


def enstrophy(u: SpectralField) -> float:
    """sum |k|^2 |u_k|^2 over the stored modes."""
    return float(np.sum(u.modeset.norms_sq * np.sum(np.abs(u.coeffs) ** 2, axis=1)))


def force_enstrophy_norm(f: ForceField) -> float:
    """sqrt(sum |k|^2 |f_k|^2); the forcing strength entering decay thresholds."""
    return math.sqrt(float(np.sum(f.modeset.norms_sq * np.sum(np.abs(f.coeffs) ** 2, axis=1))))


# -- tangential bases and random admissible fields ---------------------------


def perp_basis(mode: Sequence[int]) -> np.ndarray:
    """Orthonormal basis of the plane orthogonal to ``mode``, shape (d, d-1).

    Built from integer cross products, so basis vectors are orthogonal to the
    wave vector exactly in floating point.  Deterministic in the mode.
    """
    k = np.asarray(_as_mode(mode), dtype=float)
    d = len(k)
    if d == 2:
        e = np.array([-k[1], k[0]]) / math.sqrt(float(k @ k))
        return e.reshape(2, 1)
    axis = int(np.argmin(np.abs(k)))
    a = np.zeros(3)
    a[axis] = 1.0
    v1 = np.cross(k, a)
    e1 = v1 / math.sqrt(float(v1 @ v1))
    v2 = np.cross(k, e1)
    e2 = v2 / math.sqrt(float(v2 @ v2))
    return np.stack([e1, e2], axis=1)


def _representative_data(modeset: ModeSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rep indices, mirror indices, stacked perp bases) for a mode set."""
    reps = np.array(
        [i for i, m in enumerate(modeset.modes) if is_representative(m)], dtype=np.int64
    )
    mirrors = modeset.mirror_indices[reps]
    if len(reps):
        bases = np.stack([perp_basis(modeset.modes[i]) for i in reps])
    else:
        bases = np.zeros((0, modeset.dimension, modeset.dimension - 1))
    return reps, mirrors, bases


def random_solenoidal_field(
    modeset: ModeSet,
    rng: np.random.Generator,
    envelope: Callable[[np.ndarray], np.ndarray] | None = None,
    target_enstrophy: float | None = None,
) -> SpectralField:
    """Random admissible field: tangential coefficients with conjugate mirrors.

    ``envelope`` maps an array of mode norms |k| to per-mode modulus bounds;
    each drawn modulus is uniform in (0, bound).  Without it, coefficients are
    standard complex Gaussians in the tangent plane.  ``target_enstrophy``
    rescales the whole field at the end.
    """
    reps, mirrors, bases = _representative_data(modeset)
    coeffs = np.zeros((len(modeset), modeset.dimension), dtype=np.complex128)
    if len(reps):
        n_r, _, n_tan = bases.shape
        c = rng.standard_normal((n_r, n_tan)) + 1j * rng.standard_normal((n_r, n_tan))
        u_rep = np.einsum("rdm,rm->rd", bases, c)
        if envelope is not None:
            norms = np.sqrt(modeset.norms_sq[reps].astype(float))
            bound = np.asarray(envelope(norms), dtype=float)
            moduli = np.sqrt(np.sum(np.abs(u_rep) ** 2, axis=1))
            moduli[moduli == 0.0] = 1.0
            u_rep *= (bound * rng.uniform(0.0, 1.0, n_r) / moduli)[:, None]
        coeffs[reps] = u_rep
        coeffs[mirrors] = np.conj(u_rep)
    field = SpectralField(modeset, coeffs, copy=False)
    if target_enstrophy is not None:
        current = enstrophy(field)
        if current > 0.0:
            field = field.scaled(math.sqrt(target_enstrophy / current))
    return field
