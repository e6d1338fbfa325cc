"""
Particle-based simulation of a single reactive receiver.

Molecules are followed individually as they diffuse, degrade while free and
reversibly bind to the receiver surface. The receptors are not placed
individually: the surface is uniformly reactive with the effective forward
rate of the channel model, and can hold at most ``M`` bound molecules.

Many independent trials are advanced together as replicas sharing one set of
arrays, each molecule tagged with the replica it belongs to.
"""

from __future__ import annotations

from functools import partial
from math import ceil, exp, floor, pi, sqrt
from typing import TYPE_CHECKING, Union
import logging

from attrs import evolve, field
import numpy as np

from mcdetect import _parallel, exceptions
from mcdetect._attrs import (
    ARRAY_EQ,
    counts,
    frozen,
    non_negative,
    positive,
    readonly,
    vector3,
)
from mcdetect.channel import ReactiveLink
from mcdetect.numerics import poisson_pmf

if TYPE_CHECKING:
    from collections.abc import Sequence

    from mcdetect.channel import DerivedChannelConstants, ReactionChannelParams
    from mcdetect.typing import Vector3

logger = logging.getLogger(__name__)

#: Released molecules reappear this far (relative to the radius) outside
#: the receiver surface.
RELEASE_OFFSET = 1e-6

#: Replicas simulated together in one batch of an ensemble.
DEFAULT_BATCH_SIZE = 50


@frozen
class ContinuousRelease:
    """
    The source emits Poisson(``mu·dt``) molecules during every step.
    """

    mu: float = field(validator=non_negative)


@frozen
class ImpulsiveRelease:
    """
    The source emits ``molecules`` molecules at time 0 and none afterwards.
    """

    molecules: int = field(validator=non_negative)


ReleaseMode = Union[ContinuousRelease, ImpulsiveRelease]


@frozen
class Receiver:
    """
    A reactive receiver sphere.
    """

    center: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    link: ReactiveLink

    @classmethod
    def from_params(cls, center: Vector3, params: ReactionChannelParams):
        return cls(center=center, link=ReactiveLink.from_params(params))

    @property
    def params(self) -> ReactionChannelParams:
        return self.link.params


def _sample_times_converter(value: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(each) for each in value)


@frozen
class SimConfig:
    """
    Everything a particle simulation run depends on.

    The bound count is recorded at each of the ``sample_times`` (s), which
    default to the ``horizon`` alone.
    """

    dt: float = field(validator=positive)
    horizon: float = field(validator=positive)
    seed: int
    release: ReleaseMode
    source: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    receiver: Receiver
    sample_times: tuple[float, ...] = field(
        default=(),
        converter=_sample_times_converter,
    )
    batch_size: int = field(default=DEFAULT_BATCH_SIZE, validator=positive)

    def __attrs_post_init__(self):
        if self.horizon < self.dt:
            raise exceptions.OutOfDomain(
                name="horizon",
                value=self.horizon,
                constraint=f"horizon >= dt = {self.dt!r}",
            )
        times = self.sample_times or (self.horizon,)
        if any(t < 0 or t > self.horizon for t in times):
            raise exceptions.OutOfDomain(
                name="sample_times",
                value=times,
                constraint=f"each in [0, {self.horizon!r}]",
            )
        distance = float(np.linalg.norm(self.source - self.receiver.center))
        if distance <= self.receiver.params.receiver_radius:
            raise exceptions.InsideReceiver(
                distance=distance,
                radius=self.receiver.params.receiver_radius,
            )

    @property
    def steps(self) -> int:
        return ceil(self.horizon / self.dt - 1e-9)

    @property
    def sample_steps(self) -> list[int]:
        """
        The step after which each sample time is recorded.
        """
        times = self.sample_times or (self.horizon,)
        return [round(t / self.dt) for t in times]


@frozen
class StepCounts:
    """
    What happened to the molecules of each replica during one step.
    """

    degraded: np.ndarray = field(converter=counts, eq=ARRAY_EQ)
    bound: np.ndarray = field(converter=counts, eq=ARRAY_EQ)
    released: np.ndarray = field(converter=counts, eq=ARRAY_EQ)
    injected: np.ndarray = field(converter=counts, eq=ARRAY_EQ)


@frozen
class ParticlePopulation:
    """
    The molecules of one or more replicas.

    Free molecules are stored with their positions (μm) and replica index.
    Bound molecules are stored with the outward unit normal of the surface
    point they bound at, so that they are released where they were caught.
    """

    replicas: int = field(validator=positive)
    positions: np.ndarray = field(converter=readonly, eq=ARRAY_EQ)
    replica: np.ndarray = field(eq=ARRAY_EQ)
    bound_normals: np.ndarray = field(converter=readonly, eq=ARRAY_EQ)
    bound_replica: np.ndarray = field(eq=ARRAY_EQ)
    last_step: StepCounts | None = field(default=None, eq=False)

    @classmethod
    def empty(cls, replicas: int = 1) -> ParticlePopulation:
        return cls(
            replicas=replicas,
            positions=np.empty((0, 3)),
            replica=np.empty(0, dtype=np.intp),
            bound_normals=np.empty((0, 3)),
            bound_replica=np.empty(0, dtype=np.intp),
        )

    @classmethod
    def initial(cls, cfg: SimConfig, replicas: int = 1) -> ParticlePopulation:
        """
        The population at time 0, before any step.
        """
        population = cls.empty(replicas=replicas)
        if isinstance(cfg.release, ImpulsiveRelease):
            each = cfg.release.molecules
            population = evolve(
                population,
                positions=np.repeat(cfg.source[None, :], each * replicas, 0),
                replica=np.repeat(np.arange(replicas), each),
            )
        return population

    @property
    def free(self) -> np.ndarray:
        """
        The number of free molecules in each replica.
        """
        return np.bincount(self.replica, minlength=self.replicas)

    @property
    def bound(self) -> np.ndarray:
        """
        The number of bound receptors in each replica.
        """
        return np.bincount(self.bound_replica, minlength=self.replicas)


def binding_probability(
    p: ReactionChannelParams,
    c: DerivedChannelConstants,
    dt: float,
) -> float:
    """
    The probability that a molecule crossing the surface during one step
    binds rather than being reflected.

    Matching the flux of crossings of a Gaussian step to a partially
    absorbing surface with reactivity ``kf_star / (4πa²)`` gives, to leading
    order in ``dt``, ``reactivity · sqrt(π·dt / D)``.
    """
    reactivity = c.kf_star / (4 * pi * p.receiver_radius**2)
    return min(1.0, reactivity * sqrt(pi * dt / p.D))


def _rank_within(groups: np.ndarray) -> np.ndarray:
    """
    Each element's position among the elements of its group, in order.
    """
    if not len(groups):
        return np.empty(0, dtype=np.intp)
    order = np.argsort(groups, kind="stable")
    ordered = groups[order]
    starts = np.flatnonzero(np.r_[True, ordered[1:] != ordered[:-1]])
    sizes = np.diff(np.r_[starts, len(groups)])
    ranks = np.empty(len(groups), dtype=np.intp)
    ranks[order] = np.arange(len(groups)) - np.repeat(starts, sizes)
    return ranks


def step(
    pop: ParticlePopulation,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> ParticlePopulation:
    """
    Advance every replica by one time step.

    In order, free molecules degrade, free molecules move, those which end
    up inside the receiver bind (capacity permitting) or are reflected, the
    molecules bound before this step are released, and the source injects
    new molecules.
    """
    p, c = cfg.receiver.params, cfg.receiver.link.constants
    a, center, dt = p.receiver_radius, cfg.receiver.center, cfg.dt
    replicas = pop.replicas

    positions, replica = pop.positions, pop.replica
    if p.kd > 0 and len(positions):
        survive = rng.random(len(positions)) >= -np.expm1(-p.kd * dt)
        degraded = np.bincount(replica[~survive], minlength=replicas)
        positions, replica = positions[survive], replica[survive]
    else:
        degraded = np.zeros(replicas, dtype=np.intp)

    positions = positions + rng.normal(
        scale=sqrt(2 * p.D * dt),
        size=positions.shape,
    )

    relative = positions - center
    distance = np.linalg.norm(relative, axis=1)
    inside = np.flatnonzero(distance < a)
    binds = rng.random(len(inside)) < binding_probability(p, c, dt)
    candidates = inside[binds]
    capacity = floor(p.M) - pop.bound
    accepted = (
        _rank_within(replica[candidates]) < capacity[replica[candidates]]
    )
    binding = candidates[accepted]
    reflected = np.setdiff1d(inside, binding, assume_unique=True)

    if len(reflected):
        r = np.maximum(distance[reflected], np.finfo(float).tiny)
        scale = (2 * a - r) / r
        positions[reflected] = center + relative[reflected] * scale[:, None]

    caught = np.maximum(distance[binding], np.finfo(float).tiny)
    new_normals = relative[binding] / caught[:, None]
    new_replica = replica[binding]
    keep = np.ones(len(positions), dtype=bool)
    keep[binding] = False
    positions, replica = positions[keep], replica[keep]

    normals, bound_replica = pop.bound_normals, pop.bound_replica
    if p.kb > 0 and len(normals):
        release = rng.random(len(normals)) < -np.expm1(-p.kb * dt)
        released = np.bincount(bound_replica[release], minlength=replicas)
        placed = center + normals[release] * a * (1 + RELEASE_OFFSET)
        positions = np.concatenate([positions, placed])
        replica = np.concatenate([replica, bound_replica[release]])
        normals, bound_replica = normals[~release], bound_replica[~release]
    else:
        released = np.zeros(replicas, dtype=np.intp)
    normals = np.concatenate([normals, new_normals])
    bound_replica = np.concatenate([bound_replica, new_replica])

    if isinstance(cfg.release, ContinuousRelease) and cfg.release.mu > 0:
        injected = rng.poisson(cfg.release.mu * dt, size=replicas)
        positions = np.concatenate(
            [positions, np.repeat(cfg.source[None, :], injected.sum(), 0)],
        )
        replica = np.concatenate(
            [replica, np.repeat(np.arange(replicas), injected)],
        )
    else:
        injected = np.zeros(replicas, dtype=np.intp)

    return ParticlePopulation(
        replicas=replicas,
        positions=positions,
        replica=replica,
        bound_normals=normals,
        bound_replica=bound_replica,
        last_step=StepCounts(
            degraded=degraded,
            bound=np.bincount(new_replica, minlength=replicas),
            released=released,
            injected=injected,
        ),
    )


def simulate(
    cfg: SimConfig,
    rng: np.random.Generator,
    replicas: int = 1,
) -> np.ndarray:
    """
    Run ``replicas`` independent trials, returning their bound counts.

    The result has one row per replica and one column per sample time.
    """
    population = ParticlePopulation.initial(cfg, replicas=replicas)
    wanted = cfg.sample_steps
    series = np.zeros((replicas, len(wanted)), dtype=np.int64)
    for column, index in enumerate(wanted):
        if index == 0:
            series[:, column] = population.bound
    for index in range(1, max(wanted, default=0) + 1):
        population = step(population, cfg, rng)
        for column, wanted_index in enumerate(wanted):
            if wanted_index == index:
                series[:, column] = population.bound
    return series


def run_trial(cfg: SimConfig) -> np.ndarray:
    """
    The bound receptor count of one trial at each of the sample times.

    Deterministic given ``cfg.seed``.
    """
    rng = _parallel.generator(cfg.seed, _parallel.Stream.PARTICLES)
    return simulate(cfg, rng)[0]


def _simulate_batch(cfg: SimConfig, job: tuple[int, int]) -> np.ndarray:
    index, size = job
    rng = _parallel.generator(cfg.seed, _parallel.Stream.PARTICLES, index)
    return simulate(cfg, rng, replicas=size)


def run_ensemble(
    cfg: SimConfig,
    n_trials: int,
    workers: int = 1,
) -> np.ndarray:
    """
    Bound counts of ``n_trials`` independent trials, one row per trial.

    Trials are simulated in batches of ``cfg.batch_size`` replicas, each batch
    with its own random stream, so the result depends on the seed and the
    batch size but not on ``workers``.
    """
    if n_trials < 1:
        raise exceptions.OutOfDomain(
            name="n_trials",
            value=n_trials,
            constraint="n_trials >= 1",
        )
    jobs = _parallel.batches(n_trials, cfg.batch_size)
    logger.info(
        "simulating %d trials in %d batches of up to %d replicas",
        n_trials,
        len(jobs),
        cfg.batch_size,
    )
    simulate_batch = partial(_simulate_batch, cfg)
    results = _parallel.seeded_map(simulate_batch, jobs, workers)
    return np.concatenate(results)


@frozen
class EmpiricalPMF:
    """
    A histogram of counts, normalized to total mass 1.
    """

    probabilities: np.ndarray = field(converter=readonly, eq=ARRAY_EQ)
    trials: int

    @classmethod
    def from_counts(cls, observed: Sequence[int] | np.ndarray) -> EmpiricalPMF:
        observed = np.asarray(observed, dtype=np.int64)
        histogram = np.bincount(observed)
        return cls(
            probabilities=histogram / len(observed),
            trials=len(observed),
        )

    @property
    def mean(self) -> float:
        return float(np.arange(len(self.probabilities)) @ self.probabilities)

    def total_variation(self, other: Sequence[float] | np.ndarray) -> float:
        """
        Half the L1 distance to ``other``, a PMF over ``0, 1, 2, …``.

        Any mass ``other`` is missing (for a PMF truncated to finite support)
        counts as lying beyond the support of both.
        """
        other = np.asarray(other, dtype=float)
        size = max(len(other), len(self.probabilities))
        mine = np.zeros(size)
        mine[: len(self.probabilities)] = self.probabilities
        theirs = np.zeros(size)
        theirs[: len(other)] = other
        missing = max(0.0, 1.0 - float(theirs.sum()))
        return 0.5 * (float(np.abs(mine - theirs).sum()) + missing)

    def poisson_distance(self, mean: float) -> float:
        """
        The total variation distance to Poisson(``mean``).
        """
        support = np.arange(len(self.probabilities))
        return self.total_variation(poisson_pmf(support, mean))


def ensemble_histogram(
    cfg: SimConfig,
    n_trials: int,
    sample_time: float,
    workers: int = 1,
) -> EmpiricalPMF:
    """
    The distribution of the bound count at ``sample_time`` across trials.
    """
    if n_trials < 100:
        raise exceptions.OutOfDomain(
            name="n_trials",
            value=n_trials,
            constraint="n_trials >= 100",
        )
    cfg = evolve(
        cfg,
        horizon=max(cfg.horizon, sample_time),
        sample_times=(sample_time,),
    )
    observed = run_ensemble(cfg, n_trials, workers=workers)[:, 0]
    return EmpiricalPMF.from_counts(observed)


__all__ = [
    "ContinuousRelease",
    "EmpiricalPMF",
    "ImpulsiveRelease",
    "ParticlePopulation",
    "Receiver",
    "SimConfig",
    "StepCounts",
    "binding_probability",
    "ensemble_histogram",
    "run_ensemble",
    "run_trial",
    "step",
]
