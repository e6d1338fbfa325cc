"""
The reactive receiver channel.

A molecule released at a point source diffuses (and degrades while free)
until it reversibly binds one of the receptors covering a spherical
receiver. The functions here give the probability that it is bound at a
later time, and the mean number of bound receptors for a source which
releases molecules at a constant rate.
"""

from __future__ import annotations

from math import pi, sqrt
from typing import TYPE_CHECKING, Any
import logging

from attrs import field
from scipy.spatial.distance import cdist
import numpy as np

from mcdetect import exceptions, numerics
from mcdetect._attrs import (
    ARRAY_EQ,
    frozen,
    non_negative,
    points,
    positive,
    vector3,
)
from mcdetect.numerics import CubicRoots, _unwrap

if TYPE_CHECKING:
    from mcdetect.typing import RealLike, Vector3

logger = logging.getLogger(__name__)

#: Imaginary part (relative to the magnitude of the summed terms) tolerated
#: in quantities which are real by construction.
IMAGINARY_TOLERANCE = 1e-9

#: Distance by which a probability may leave ``[0, 1]`` and still be clamped.
CLAMP_TOLERANCE = 1e-9


@frozen
class ReactionChannelParams:
    """
    Diffusion and reaction constants of one class of link.

    The same record describes the link from the target to a nanosensor
    (``receiver_radius`` is the sensor radius, ``r_receptor`` the receptor
    radius) and the link from a nanosensor to the fusion center.

    Units are μm and s throughout.
    """

    D: float = field(validator=positive)
    kf: float = field(validator=non_negative)
    kb: float = field(validator=non_negative)
    kd: float = field(validator=non_negative)
    receiver_radius: float = field(validator=positive)
    M: float = field(validator=non_negative)
    r_receptor: float = field(validator=non_negative)

    def __attrs_post_init__(self):
        coverage = self.coverage
        if not coverage < 1:
            raise exceptions.OutOfDomain(
                name="coverage",
                value=coverage,
                constraint="M * r_receptor**2 / (4 * receiver_radius**2) < 1",
            )

    @property
    def coverage(self) -> float:
        """
        The fraction λ of the receiver surface covered by receptors.
        """
        return self.M * self.r_receptor**2 / (4 * self.receiver_radius**2)


@frozen
class DerivedChannelConstants:
    """
    Quantities derived once per parameter set.
    """

    lambda_coverage: float
    phi: float
    kf_star: float
    roots: CubicRoots


def derive_constants(p: ReactionChannelParams) -> DerivedChannelConstants:
    """
    Homogenize the receptor-covered surface and solve for the channel roots.

    The receptors are replaced by a uniformly reactive surface with the
    effective forward rate ``kf_star``, and the roots are those of the cubic
    whose elementary symmetric functions the boundary problem fixes.

    A degenerate set of roots is returned rather than rejected; see
    `CubicRoots.degenerate`.
    """
    a, D, kf = p.receiver_radius, p.D, p.kf
    coverage = p.coverage
    captured = p.M * p.r_receptor**2 * (kf * a + 4 * pi * D)
    free = a**2 * (1 - coverage) * (pi * p.r_receptor * kf + 16 * pi * D)
    phi = captured / (free + captured)
    kf_star = 4 * pi * D * kf * phi / (kf * a * (1 - phi) + 4 * pi * D)

    s1 = (1 + kf_star / (4 * pi * a * D)) * sqrt(D) / a
    s2 = p.kb - p.kd
    s3 = p.kb * sqrt(D) / a - p.kd * s1
    roots = numerics.solve_cubic_from_symmetric(s1, s2, s3)
    logger.debug(
        "derived channel constants: coverage=%g phi=%g kf*=%g roots=%r",
        coverage,
        phi,
        kf_star,
        roots,
    )
    return DerivedChannelConstants(
        lambda_coverage=coverage,
        phi=phi,
        kf_star=kf_star,
        roots=roots,
    )


def _check_distances(dist: np.ndarray, p: ReactionChannelParams) -> None:
    if np.any(dist <= p.receiver_radius):
        raise exceptions.InsideReceiver(
            distance=float(np.min(dist)),
            radius=p.receiver_radius,
        )


def _check_times(t: np.ndarray, name: str = "t") -> None:
    if np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise exceptions.OutOfDomain(
            name=name,
            value=float(np.min(t)),
            constraint=f"{name} > 0",
        )


def _residue_weights(roots: np.ndarray) -> np.ndarray:
    """
    ``−x_i / Π_{j≠i}(x_j − x_i)`` for each root.
    """
    alpha, beta, gamma = roots
    return np.array(
        [
            alpha / ((gamma - alpha) * (alpha - beta)),
            beta / ((beta - gamma) * (alpha - beta)),
            gamma / ((beta - gamma) * (gamma - alpha)),
        ],
    )


def _real(total: np.ndarray, scale: np.ndarray) -> np.ndarray:
    tolerance = IMAGINARY_TOLERANCE * np.maximum(1.0, scale)
    bad = np.abs(total.imag) > tolerance
    if np.any(bad):
        index = np.flatnonzero(bad)[0]
        raise exceptions.ImaginaryResidue(
            value=complex(total.flat[index]),
            tolerance=float(tolerance.flat[index]),
        )
    return total.real


def _clamp(probability: np.ndarray) -> np.ndarray:
    outside = (probability < -CLAMP_TOLERANCE) | (
        probability > 1 + CLAMP_TOLERANCE
    )
    if np.any(outside):
        raise exceptions.ProbabilityOutOfRange(
            value=float(probability[outside].flat[0]),
            tolerance=CLAMP_TOLERANCE,
        )
    return np.clip(probability, 0.0, 1.0)


def activation_probability(
    t: RealLike,
    dist: RealLike,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> Any:
    """
    The probability that a molecule released at distance ``dist`` from the
    receiver center at time 0 occupies a receptor at time ``t``.

    Elementwise in ``t`` (s) and ``dist`` (μm).

    Raises:

        `exceptions.DegenerateRoots`

            if two of the channel roots (nearly) coincide

        `exceptions.ImaginaryResidue`

            if the conjugate root terms fail to cancel

        `exceptions.ProbabilityOutOfRange`

            if the result leaves ``[0, 1]`` by more than `CLAMP_TOLERANCE`

    """
    t = np.asarray(t, dtype=float)
    dist = np.asarray(dist, dtype=float)
    _check_times(t)
    _check_distances(dist, p)
    t, dist = np.broadcast_arrays(t, dist)
    if c.kf_star == 0:
        return _unwrap(np.zeros(t.shape))
    c.roots.check()

    roots = c.roots.as_array()
    n = (dist - p.receiver_radius) / np.sqrt(4 * p.D * t)
    w = numerics.w_stable(
        n[..., None],
        roots * np.sqrt(t)[..., None],
        log_scale=-p.kd * t[..., None],
    )
    terms = _residue_weights(roots) * w
    prefactor = c.kf_star / (4 * pi * sqrt(p.D) * p.receiver_radius * dist)
    total = prefactor * terms.sum(axis=-1)
    scale = prefactor * np.abs(terms).sum(axis=-1)
    return _unwrap(_clamp(_real(total, scale)))


def characteristic_times(
    dist: float,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> list[float]:
    """
    Times at which the activation probability changes character.

    These are the diffusion time to the receiver surface (and a few decades
    around it) together with the relaxation times of the reactions and the
    roots. Used as quadrature breakpoints.
    """
    diffusion = (dist - p.receiver_radius) ** 2 / (4 * p.D)
    times = [diffusion * 10.0**k for k in range(-1, 4)]
    times.extend(1 / abs(root) ** 2 for root in c.roots if root != 0)
    times.extend(1 / rate for rate in (p.kb, p.kd) if rate > 0)
    return sorted(each for each in times if each > 0)


def transient_mean(
    t: float,
    mu: float,
    dist: float,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> float:
    """
    The mean number of bound receptors at time ``t`` for a source secreting
    ``mu`` molecules per second since time 0.
    """
    if mu < 0:
        raise exceptions.OutOfDomain(name="mu", value=mu, constraint="mu >= 0")
    _check_times(np.asarray(t))
    _check_distances(np.asarray(dist), p)
    if mu == 0 or c.kf_star == 0:
        return 0.0

    # Integrate in units of a reference mean so that the absolute tolerance
    # of the quadrature is relative to the size of the answer.
    breakpoints = characteristic_times(dist, p, c)
    if p.kd > 0 and p.kb > 0:
        reference = float(_gain(np.asarray(dist), p, c))
    else:
        peak = activation_probability(np.array([*breakpoints, t]), dist, p, c)
        reference = float(np.max(peak)) * t
    if reference == 0:
        return 0.0

    result = numerics.integrate_transient(
        lambda s: activation_probability(s, dist, p, c) / reference,
        t,
        breakpoints=breakpoints,
    )
    return mu * reference * result.value


def _check_steady_state(p: ReactionChannelParams) -> None:
    if p.kd == 0:
        raise exceptions.SteadyStateUndefined(
            reason="free molecules never degrade (kd = 0)",
        )
    if p.kb == 0:
        raise exceptions.SteadyStateUndefined(
            reason="bound molecules are never released (kb = 0)",
        )


def steady_state_mean_g(
    dist: RealLike,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> Any:
    """
    The long-time mean number of bound receptors per unit secretion rate.

    Evaluated from the channel roots; elementwise in ``dist``.
    """
    dist = np.asarray(dist, dtype=float)
    _check_distances(dist, p)
    _check_steady_state(p)
    if c.kf_star == 0:
        return _unwrap(np.zeros(dist.shape))
    c.roots.check()

    roots = c.roots.as_array()
    root_kd = sqrt(p.kd)
    terms = _residue_weights(roots) / (root_kd * (roots + root_kd))
    decay = np.exp(-(dist - p.receiver_radius) * sqrt(p.kd / p.D))
    prefactor = (
        c.kf_star * decay / (4 * pi * sqrt(p.D) * p.receiver_radius * dist)
    )
    total = prefactor * terms.sum()
    scale = prefactor * np.abs(terms).sum()
    return _unwrap(_real(np.asarray(total, dtype=complex), np.asarray(scale)))


def closed_form_gain(
    dist: RealLike,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> Any:
    """
    `steady_state_mean_g` without the roots.

    The cubic's roots enter the steady state only through the product of
    ``sqrt(kd) + root``, which the symmetric functions give directly as
    ``kb·(sqrt(kd) + sqrt(D)/a)``.
    """
    dist = np.asarray(dist, dtype=float)
    _check_distances(dist, p)
    _check_steady_state(p)
    return _unwrap(_gain(dist, p, c))


def _gain(
    dist: np.ndarray,
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
) -> np.ndarray:
    a, D = p.receiver_radius, p.D
    decay = np.exp(-(dist - a) * sqrt(p.kd / D))
    denominator = (
        4 * pi * sqrt(D) * a * dist * p.kb * (sqrt(p.kd) + sqrt(D) / a)
    )
    return c.kf_star * decay / denominator


def fc_activation_probability(
    elapsed: RealLike,
    dist: RealLike,
    fc_params: ReactionChannelParams,
    fc_constants: DerivedChannelConstants,
) -> Any:
    """
    The activation probability at the fusion center ``elapsed`` seconds after
    a sensor's instantaneous release.

    Only the distance between sensor and fusion center matters, so the
    direction of the link is irrelevant.
    """
    _check_times(np.asarray(elapsed, dtype=float), name="elapsed")
    return activation_probability(elapsed, dist, fc_params, fc_constants)


def pairwise_distances(points: Any, centers: Any) -> np.ndarray:
    """
    The ``(len(points), len(centers))`` matrix of Euclidean distances.
    """
    return cdist(
        np.asarray(points, dtype=float).reshape(-1, 3),
        np.asarray(centers, dtype=float).reshape(-1, 3),
    )


@frozen
class ReactiveLink:
    """
    One class of link: its parameters together with their derived constants.
    """

    params: ReactionChannelParams
    constants: DerivedChannelConstants

    @classmethod
    def from_params(cls, params: ReactionChannelParams) -> ReactiveLink:
        """
        Derive the constants for the given parameters.
        """
        return cls(params=params, constants=derive_constants(params))

    @property
    def radius(self) -> float:
        return self.params.receiver_radius

    def activation_probability(self, t: RealLike, dist: RealLike) -> Any:
        return activation_probability(t, dist, self.params, self.constants)

    def transient_mean(self, t: float, mu: float, dist: float) -> float:
        return transient_mean(t, mu, dist, self.params, self.constants)

    def steady_state_gain(self, dist: RealLike) -> Any:
        return steady_state_mean_g(dist, self.params, self.constants)

    def gain(self, dist: RealLike) -> Any:
        """
        The steady-state gain, clamping distances to surface contact.

        Distances within the receiver radius are evaluated at contact. Uses
        the root-free form.
        """
        _check_steady_state(self.params)
        dist = np.maximum(np.asarray(dist, dtype=float), self.radius)
        return _unwrap(_gain(dist, self.params, self.constants))


@frozen
class NetworkLayout:
    """
    Where the target, the sensors and the fusion center are.

    The layout checks that no sensor touches the fusion center, that sensors
    are at least ``min_spacing`` apart (twice the sensor radius unless given)
    and, when ``target_clearance`` is set, that the target lies outside
    every sensor.
    """

    target: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    sensors: np.ndarray = field(converter=points, eq=ARRAY_EQ)
    fusion_center: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    sensor_radius: float = field(validator=positive)
    fusion_center_radius: float = field(validator=positive)
    min_spacing: float | None = field(default=None, kw_only=True)
    target_clearance: bool = field(default=True, kw_only=True)
    target_distances: np.ndarray = field(init=False, eq=False, repr=False)
    fusion_center_distances: np.ndarray = field(
        init=False,
        eq=False,
        repr=False,
    )

    @target_distances.default
    def _target_distances(self) -> np.ndarray:
        return pairwise_distances(self.target, self.sensors)[0]

    @fusion_center_distances.default
    def _fusion_center_distances(self) -> np.ndarray:
        return pairwise_distances(self.fusion_center, self.sensors)[0]

    def __attrs_post_init__(self):
        if len(self.sensors) < 1:
            raise exceptions.OutOfDomain(
                name="sensors",
                value=0,
                constraint="at least one sensor",
            )
        problem = self.violation()
        if problem is not None:
            raise problem

    @property
    def K(self) -> int:
        return len(self.sensors)

    @property
    def spacing(self) -> float:
        if self.min_spacing is None:
            return 2 * self.sensor_radius
        return self.min_spacing

    def violation(self) -> Exception | None:
        """
        The first invariant this layout violates, if any.
        """
        fc = self.fusion_center_distances
        if np.any(fc <= self.fusion_center_radius):
            return exceptions.InsideReceiver(
                distance=float(np.min(fc)),
                radius=self.fusion_center_radius,
            )
        if self.target_clearance and np.any(
            self.target_distances <= self.sensor_radius,
        ):
            return exceptions.InsideReceiver(
                distance=float(np.min(self.target_distances)),
                radius=self.sensor_radius,
            )
        if self.K > 1:
            between = pairwise_distances(self.sensors, self.sensors)
            closest = float(np.min(between[np.triu_indices(self.K, k=1)]))
            if closest < self.spacing:
                return exceptions.OutOfDomain(
                    name="sensor spacing",
                    value=closest,
                    constraint=f">= {self.spacing!r} μm",
                )
        return None

    def with_target(self, target: Vector3) -> NetworkLayout:
        """
        The same sensors and fusion center around a different target.
        """
        return NetworkLayout(
            target=target,
            sensors=self.sensors,
            fusion_center=self.fusion_center,
            sensor_radius=self.sensor_radius,
            fusion_center_radius=self.fusion_center_radius,
            min_spacing=self.min_spacing,
            target_clearance=self.target_clearance,
        )
