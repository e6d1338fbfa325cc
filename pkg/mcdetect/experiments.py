"""
Monte Carlo experiments.

Four experiments are supported: checking the channel model against the
particle simulator (both its mean and its Poisson approximation), receiver
operating characteristics of the three fusion center detectors, and their
missed detection probability as the number of sensors grows.
"""

from __future__ import annotations

from enum import Enum
from functools import partial
from math import sqrt
from typing import TYPE_CHECKING, Any
import logging

from attrs import evolve, field
import numpy as np

from mcdetect import _parallel, exceptions
from mcdetect._attrs import (
    ARRAY_EQ,
    frozen,
    non_negative,
    positive,
    probability,
    vector3,
)
from mcdetect._parallel import Stream
from mcdetect.channel import NetworkLayout, ReactiveLink
from mcdetect.detection import (
    DecisionVector,
    DetectionContext,
    Detector,
    GridSpec,
    NoiseModel,
    Scenario,
    Thresholds,
    binomial_interval,
    calibrate_from_samples,
    fc_link_decide,
    gad_llr_batch,
    glod_stat_batch,
    glrt_stat_batch,
    ns_decide,
)
from mcdetect.numerics import poisson_pmf
from mcdetect.particlesim import (
    ContinuousRelease,
    EmpiricalPMF,
    Receiver,
    SimConfig,
    ensemble_histogram,
    run_ensemble,
)

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from mcdetect.channel import ReactionChannelParams
    from mcdetect.typing import Vector3

logger = logging.getLogger(__name__)

#: Detectors in the order their statistics are stacked.
DETECTORS = tuple(Detector)


class TopologyMode(str, Enum):
    """
    Whether sensors are redrawn for every trial or placed once per run.
    """

    RESAMPLE = "resample"
    FIXED = "fixed"


class DecisionModel(str, Enum):
    """
    How decision vectors are drawn.

    ``cascade`` simulates both Poisson counting stages of every link,
    ``bernoulli`` draws each bit directly with its transition probability.
    """

    CASCADE = "cascade"
    BERNOULLI = "bernoulli"


def _floats(value: Iterable[float]) -> tuple[float, ...]:
    return tuple(float(each) for each in value)


def _ints(value: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(each) for each in value)


@frozen
class ParticleSettings:
    """
    How the particle simulator is run to check the channel model.

    The receiver sits ``distance`` μm from a source at the origin. The mean
    check releases ``mu`` molecules per second and samples the bound count
    at ``sample_times``; the Poisson check releases ``poisson_mu`` per second
    and samples once, at the end of the signaling period.
    """

    dt: float = field(validator=positive)
    trials: int = field(validator=positive)
    sample_times: tuple[float, ...] = field(converter=_floats)
    mu: float = field(validator=non_negative)
    distance: float = field(validator=positive)
    kb_values: tuple[float, ...] = field(converter=_floats)
    poisson_dt: float = field(validator=positive)
    poisson_mu: float = field(validator=non_negative)
    batch_size: int = field(default=50, validator=positive)


@frozen
class ExperimentConfig:
    """
    Everything an experiment depends on.

    Units are μm, s and molecules throughout.
    """

    ns_link: ReactionChannelParams
    fc_link: ReactionChannelParams
    noise: NoiseModel
    thresholds: Thresholds
    K: int = field(validator=positive)
    edge: float = field(validator=positive)
    x_T: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    fusion_center: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    mus: tuple[float, ...] = field(converter=_floats)
    N: float = field(validator=non_negative)
    T1: float = field(validator=non_negative)
    T2: float = field(validator=positive)
    calibration_trials: int = field(validator=positive)
    evaluation_trials: int = field(validator=positive)
    pfa_targets: tuple[float, ...] = field(converter=_floats)
    grid_per_axis: int = field(validator=positive)
    mu_points: int = field(validator=positive)
    sweep_k: tuple[int, ...] = field(converter=_ints)
    sweep_pfa: float = field(validator=probability)
    sweep_mu: float = field(validator=positive)
    particles: ParticleSettings
    topology: TopologyMode = TopologyMode.RESAMPLE
    decisions: DecisionModel = DecisionModel.CASCADE
    min_spacing: float | None = None
    placement_attempts: int = field(default=100_000, validator=positive)
    seed: int = 0
    workers: int = field(default=1, validator=positive)
    batch_size: int = field(default=100, validator=positive)

    ns: ReactiveLink = field(init=False, eq=False, repr=False)
    fc: ReactiveLink = field(init=False, eq=False, repr=False)

    @ns.default
    def _ns(self) -> ReactiveLink:
        return ReactiveLink.from_params(self.ns_link)

    @fc.default
    def _fc(self) -> ReactiveLink:
        return ReactiveLink.from_params(self.fc_link)

    def __attrs_post_init__(self):
        if not self.T2 > self.T1:
            raise exceptions.OutOfDomain(
                name="T2",
                value=self.T2,
                constraint=f"T2 > T1 = {self.T1!r}",
            )
        if any(mu <= 0 for mu in self.mus) or not self.mus:
            raise exceptions.OutOfDomain(
                name="mus",
                value=self.mus,
                constraint="at least one rate, each > 0",
            )
        if any(not 0 < target < 1 for target in self.pfa_targets):
            raise exceptions.OutOfDomain(
                name="pfa_targets",
                value=self.pfa_targets,
                constraint="each in (0, 1)",
            )

    @property
    def elapsed(self) -> float:
        """
        How long secondary molecules travel before the fusion center
        decides.
        """
        return self.T2 - self.T1

    @property
    def scenarios(self) -> list[Scenario]:
        return [Scenario(x_T=self.x_T, mu=mu) for mu in self.mus]

    def context(self, layout: NetworkLayout) -> DetectionContext:
        return DetectionContext.from_layout(
            layout,
            ns_link=self.ns,
            fc_link=self.fc,
            thresholds=self.thresholds,
            noise=self.noise,
            N=self.N,
            elapsed=self.elapsed,
        )

    def grid(self, scenario: Scenario) -> GridSpec:
        return square_grid(
            edge=self.edge,
            per_axis=self.grid_per_axis,
            mu=scenario.mu,
            mu_points=self.mu_points,
        )


def sample_topology(
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> NetworkLayout:
    """
    Scatter ``cfg.K`` sensors uniformly over the square, in the plane z = 0.

    Positions which would overlap another sensor, the target or the fusion
    center are redrawn, up to ``cfg.placement_attempts`` draws in total.
    """
    a = cfg.ns_link.receiver_radius
    spacing = 2 * a if cfg.min_spacing is None else cfg.min_spacing
    half = cfg.edge / 2
    placed = np.empty((cfg.K, 3))
    count = attempts = 0
    while count < cfg.K:
        if attempts >= cfg.placement_attempts:
            raise exceptions.PlacementFailed(
                placed=count,
                requested=cfg.K,
                attempts=attempts,
            )
        attempts += 1
        x, y = rng.uniform(-half, half, size=2)
        candidate = np.array([x, y, 0.0])
        if (
            np.linalg.norm(candidate - cfg.fusion_center)
            <= cfg.fc_link.receiver_radius
            or np.linalg.norm(candidate - cfg.x_T) <= a
            or (
                count
                and np.min(np.linalg.norm(placed[:count] - candidate, axis=1))
                < spacing
            )
        ):
            continue
        placed[count] = candidate
        count += 1
    return NetworkLayout(
        target=cfg.x_T,
        sensors=placed,
        fusion_center=cfg.fusion_center,
        sensor_radius=a,
        fusion_center_radius=cfg.fc_link.receiver_radius,
        min_spacing=cfg.min_spacing,
    )


def simulate_decisions(
    n: int,
    scenario: Scenario,
    context: DetectionContext,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw ``n`` decision vectors by simulating both counting stages.

    Each sensor counts Poisson bound receptors and decides; each sensor
    that decided for the target releases its secondary molecules, and the
    fusion center counts and decides on each link.
    """
    K = context.K
    mean = np.full(K, context.noise.zeta0)
    if scenario.mu > 0:
        mean = mean + scenario.mu * context.gains(scenario.x_T)
    sensor = ns_decide(rng.poisson(mean, size=(n, K)), context.thresholds.tau1)
    link = context.noise.for_sensors(K) + sensor * context.arriving
    return fc_link_decide(rng.poisson(link), context.thresholds.tau2)


def simulate_decision_vector(
    scenario: Scenario,
    context: DetectionContext,
    rng: np.random.Generator,
) -> DecisionVector:
    return DecisionVector(d=simulate_decisions(1, scenario, context, rng)[0])


def bernoulli_decisions(
    n: int,
    rho: Sequence[float] | np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Draw ``n`` decision vectors whose bits are independent Bernoulli(rho).
    """
    rho = np.asarray(rho, dtype=float)
    return (rng.random((n, len(rho))) < rho).astype(np.int8)


def square_grid(
    edge: float,
    per_axis: int,
    mu: float,
    mu_points: int,
) -> GridSpec:
    """
    Candidate positions at the centers of a ``per_axis`` square lattice of
    cells covering the deployment square, and ``mu_points`` rates evenly
    spaced up to twice ``mu``.
    """
    step = edge / per_axis
    axis = -edge / 2 + step * (np.arange(per_axis) + 0.5)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    positions = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    mus = 2 * mu * np.arange(1, mu_points + 1) / mu_points
    return GridSpec(positions=positions, mus=mus)


def detector_statistics(
    decisions: np.ndarray,
    context: DetectionContext,
    scenario: Scenario,
    grid: GridSpec,
) -> np.ndarray:
    """
    The statistic of every detector for each decision vector.

    One row per decision vector, one column per entry of `DETECTORS`. The
    genie-aided detector is told ``scenario``.
    """
    columns = {
        Detector.GAD: gad_llr_batch(
            decisions,
            context.transition_probs(scenario),
            strict=False,
        ),
        Detector.GLRT: glrt_stat_batch(decisions, grid, context),
        Detector.GLOD: glod_stat_batch(decisions, grid.positions, context),
    }
    return np.column_stack([columns[each] for each in DETECTORS])


def _draw(
    n: int,
    scenario: Scenario,
    context: DetectionContext,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    if cfg.decisions is DecisionModel.BERNOULLI:
        rho = context.rho1(scenario.x_T, scenario.mu)
        return bernoulli_decisions(n, rho, rng)
    return simulate_decisions(n, scenario, context, rng)


@frozen
class _Batch:
    """
    A batch of trials drawn under one scenario, scored for several.
    """

    stream: Stream
    truth: int | None
    index: int
    size: int


def _run_batch(
    cfg: ExperimentConfig,
    layout: NetworkLayout | None,
    batch: _Batch,
) -> np.ndarray:
    key = 0 if batch.truth is None else batch.truth + 1
    rng = _parallel.generator(cfg.seed, batch.stream, key, batch.index)
    if batch.truth is None:
        truth = cfg.scenarios[0].absent()
        scored = cfg.scenarios
    else:
        truth = cfg.scenarios[batch.truth]
        scored = [truth]
    grids = [cfg.grid(each) for each in scored]

    if layout is not None:
        context = cfg.context(layout)
        decisions = _draw(batch.size, truth, context, cfg, rng)
        return np.stack(
            [
                detector_statistics(decisions, context, scenario, grid)
                for scenario, grid in zip(scored, grids)
            ],
            axis=1,
        )

    statistics = np.empty((batch.size, len(scored), len(DETECTORS)))
    for trial in range(batch.size):
        context = cfg.context(sample_topology(cfg, rng))
        decisions = _draw(1, truth, context, cfg, rng)
        for column, (scenario, grid) in enumerate(zip(scored, grids)):
            statistics[trial, column] = detector_statistics(
                decisions,
                context,
                scenario,
                grid,
            )[0]
    return statistics


def _fixed_layout(cfg: ExperimentConfig) -> NetworkLayout | None:
    if cfg.topology is TopologyMode.RESAMPLE:
        return None
    return sample_topology(cfg, _parallel.generator(cfg.seed, Stream.TOPOLOGY))


def _collect(
    cfg: ExperimentConfig,
    layout: NetworkLayout | None,
    stream: Stream,
    truth: int | None,
    trials: int,
) -> np.ndarray:
    """
    Detector statistics of ``trials`` trials, shaped ``(trials, S, D)``.

    ``S`` is the number of scenarios scored (all of them for target-absent
    trials, only the true one otherwise) and ``D`` the number of detectors.
    """
    batches = [
        _Batch(stream=stream, truth=truth, index=index, size=size)
        for index, size in _parallel.batches(trials, cfg.batch_size)
    ]
    logger.info(
        "collecting %d %s trials in %d batches",
        trials,
        stream.name.lower(),
        len(batches),
    )
    results = _parallel.seeded_map(
        partial(_run_batch, cfg, layout),
        batches,
        workers=cfg.workers,
    )
    return np.concatenate(results)


@frozen
class ROCPoint:
    """
    One operating point of one detector.

    Intervals are exact 95% binomial confidence intervals.
    """

    detector: Detector
    mu: float
    target_pfa: float
    tau3: float
    achieved_pfa: float
    pfa_interval: tuple[float, float]
    pm: float
    pm_interval: tuple[float, float]

    @property
    def pfa_half_width(self) -> float:
        low, high = self.pfa_interval
        return (high - low) / 2

    @property
    def pm_half_width(self) -> float:
        low, high = self.pm_interval
        return (high - low) / 2

    def row(self) -> dict[str, Any]:
        return {
            "detector": self.detector.value,
            "mu": self.mu,
            "target_pfa": self.target_pfa,
            "tau3": self.tau3,
            "achieved_pfa": self.achieved_pfa,
            "pfa_ci_low": self.pfa_interval[0],
            "pfa_ci_high": self.pfa_interval[1],
            "pm": self.pm,
            "pm_ci_low": self.pm_interval[0],
            "pm_ci_high": self.pm_interval[1],
        }


@frozen
class ROCResult:
    """
    Operating points of every detector, by scenario and target false alarm
    probability.

    ``excluded`` lists the targets too small to calibrate with the
    configured number of trials.
    """

    points: tuple[ROCPoint, ...]
    excluded: tuple[float, ...] = ()

    def curve(self, detector: Detector, mu: float | None = None):
        """
        The points of one detector, sorted by target false alarm rate.
        """
        return sorted(
            (
                point
                for point in self.points
                if point.detector is detector
                and (mu is None or point.mu == mu)
            ),
            key=lambda point: point.target_pfa,
        )

    def rows(self) -> list[dict[str, Any]]:
        return [point.row() for point in self.points]


def _calibratable(
    cfg: ExperimentConfig,
    targets: Iterable[float],
) -> tuple[list[float], list[float]]:
    usable, excluded = [], []
    for target in sorted(targets):
        if target * cfg.calibration_trials < 1:
            excluded.append(target)
        else:
            usable.append(target)
    if excluded:
        logger.warning(
            "excluding false alarm targets %s: %d calibration trials "
            "cannot resolve them",
            excluded,
            cfg.calibration_trials,
        )
    return usable, excluded


def run_roc(cfg: ExperimentConfig) -> ROCResult:
    """
    Calibrate each detector's threshold on target-absent trials, then
    measure its false alarm and missed detection probabilities on fresh
    trials.
    """
    targets, excluded = _calibratable(cfg, cfg.pfa_targets)
    layout = _fixed_layout(cfg)
    calibration = _collect(
        cfg,
        layout,
        Stream.CALIBRATION,
        None,
        cfg.calibration_trials,
    )
    absent = _collect(
        cfg,
        layout,
        Stream.EVALUATION_H0,
        None,
        cfg.evaluation_trials,
    )

    points: list[ROCPoint] = []
    for truth, scenario in enumerate(cfg.scenarios):
        present = _collect(
            cfg,
            layout,
            Stream.EVALUATION_H1,
            truth,
            cfg.evaluation_trials,
        )[:, 0]
        for column, detector in enumerate(DETECTORS):
            for target in targets:
                tau3 = calibrate_from_samples(
                    calibration[:, truth, column],
                    target,
                ).tau3
                alarms = int(np.count_nonzero(absent[:, truth, column] > tau3))
                misses = int(np.count_nonzero(present[:, column] <= tau3))
                n = cfg.evaluation_trials
                points.append(
                    ROCPoint(
                        detector=detector,
                        mu=scenario.mu,
                        target_pfa=target,
                        tau3=tau3,
                        achieved_pfa=alarms / n,
                        pfa_interval=binomial_interval(alarms, n),
                        pm=misses / n,
                        pm_interval=binomial_interval(misses, n),
                    ),
                )
    return ROCResult(points=tuple(points), excluded=tuple(excluded))


@frozen
class SweepPoint:
    K: int
    detector: Detector
    target_pfa: float
    achieved_pfa: float
    pm: float
    pm_interval: tuple[float, float]

    def row(self) -> dict[str, Any]:
        return {
            "K": self.K,
            "detector": self.detector.value,
            "target_pfa": self.target_pfa,
            "achieved_pfa": self.achieved_pfa,
            "pm": self.pm,
            "pm_ci_low": self.pm_interval[0],
            "pm_ci_high": self.pm_interval[1],
        }


def sweep_k(
    cfg: ExperimentConfig,
    k_values: Sequence[int] | None = None,
) -> list[SweepPoint]:
    """
    Missed detection probability of each detector as the number of sensors
    varies, at the sweep's false alarm target and secretion rate.
    """
    k_values = cfg.sweep_k if k_values is None else k_values
    for K in k_values:
        if K < 1:
            raise exceptions.OutOfDomain(
                name="K",
                value=K,
                constraint="K >= 1",
            )

    points: list[SweepPoint] = []
    for K in k_values:
        logger.info("sweeping K = %d", K)
        roc = run_roc(
            evolve(
                cfg,
                K=K,
                mus=(cfg.sweep_mu,),
                pfa_targets=(cfg.sweep_pfa,),
            ),
        )
        points.extend(
            SweepPoint(
                K=K,
                detector=point.detector,
                target_pfa=point.target_pfa,
                achieved_pfa=point.achieved_pfa,
                pm=point.pm,
                pm_interval=point.pm_interval,
            )
            for point in roc.points
        )
    return points


def _simulation(
    cfg: ExperimentConfig,
    kb: float,
    dt: float,
    mu: float,
    sample_times: Sequence[float],
) -> SimConfig:
    settings = cfg.particles
    params = evolve(cfg.ns_link, kb=kb)
    return SimConfig(
        dt=dt,
        horizon=max(sample_times),
        seed=cfg.seed,
        release=ContinuousRelease(mu=mu),
        source=(0, 0, 0),
        receiver=Receiver.from_params((settings.distance, 0, 0), params),
        sample_times=sample_times,
        batch_size=settings.batch_size,
    )


@frozen
class ChannelValidationRow:
    """
    The simulated and predicted mean bound receptor count at one time.
    """

    kb: float
    t: float
    analytic: float
    simulated: float
    standard_error: float
    asymptote: float

    @property
    def relative_gap(self) -> float:
        if self.analytic == 0:
            return 0.0 if self.simulated == 0 else float("inf")
        return (self.simulated - self.analytic) / self.analytic

    def row(self) -> dict[str, Any]:
        return {
            "kb": self.kb,
            "t": self.t,
            "analytic_mean": self.analytic,
            "simulated_mean": self.simulated,
            "standard_error": self.standard_error,
            "relative_gap": self.relative_gap,
            "asymptote": self.asymptote,
        }


def validate_channel(cfg: ExperimentConfig) -> list[ChannelValidationRow]:
    """
    Compare the simulated mean number of bound receptors with the channel
    model, for each unbinding rate in ``cfg.particles.kb_values``.
    """
    settings = cfg.particles
    rows: list[ChannelValidationRow] = []
    for kb in settings.kb_values:
        simulation = _simulation(
            cfg,
            kb,
            settings.dt,
            settings.mu,
            settings.sample_times,
        )
        link = simulation.receiver.link
        counts = run_ensemble(simulation, settings.trials, cfg.workers)
        asymptote = settings.mu * link.steady_state_gain(settings.distance)
        for column, t in enumerate(settings.sample_times):
            observed = counts[:, column]
            rows.append(
                ChannelValidationRow(
                    kb=kb,
                    t=t,
                    analytic=link.transient_mean(
                        t,
                        settings.mu,
                        settings.distance,
                    ),
                    simulated=float(observed.mean()),
                    standard_error=float(
                        observed.std(ddof=1) / sqrt(len(observed))
                        if len(observed) > 1
                        else 0.0,
                    ),
                    asymptote=float(asymptote),
                ),
            )
    return rows


@frozen
class PoissonValidation:
    """
    The simulated distribution of the bound receptor count at one time,
    against the Poisson distribution with the channel model's mean.
    """

    kb: float
    t: float
    analytic_mean: float
    histogram: EmpiricalPMF

    @property
    def tv_distance(self) -> float:
        return self.histogram.poisson_distance(self.analytic_mean)

    def row(self) -> dict[str, Any]:
        return {
            "kb": self.kb,
            "t": self.t,
            "analytic_mean": self.analytic_mean,
            "empirical_mean": self.histogram.mean,
            "tv_distance": self.tv_distance,
            "trials": self.histogram.trials,
        }

    def histogram_rows(self) -> list[dict[str, Any]]:
        return [
            {
                "kb": self.kb,
                "count": count,
                "frequency": float(frequency),
                "poisson": float(poisson_pmf(count, self.analytic_mean)),
            }
            for count, frequency in enumerate(self.histogram.probabilities)
        ]


def validate_poisson(cfg: ExperimentConfig) -> list[PoissonValidation]:
    """
    Compare the distribution of the bound count at the end of the signaling
    period with its Poisson approximation.
    """
    settings = cfg.particles
    results: list[PoissonValidation] = []
    for kb in settings.kb_values:
        simulation = _simulation(
            cfg,
            kb,
            settings.poisson_dt,
            settings.poisson_mu,
            (cfg.T2,),
        )
        histogram = ensemble_histogram(
            simulation,
            settings.trials,
            cfg.T2,
            workers=cfg.workers,
        )
        analytic = simulation.receiver.link.transient_mean(
            cfg.T2,
            settings.poisson_mu,
            settings.distance,
        )
        results.append(
            PoissonValidation(
                kb=kb,
                t=cfg.T2,
                analytic_mean=analytic,
                histogram=histogram,
            ),
        )
    return results


@frozen
class ThresholdRow:
    detector: Detector
    mu: float
    target_pfa: float
    tau3: float
    achieved_pfa: float
    samples: int

    def row(self) -> dict[str, Any]:
        return {
            "detector": self.detector.value,
            "mu": self.mu,
            "target_pfa": self.target_pfa,
            "tau3": self.tau3,
            "achieved_pfa": self.achieved_pfa,
            "samples": self.samples,
        }


def calibrate(cfg: ExperimentConfig) -> list[ThresholdRow]:
    """
    Each detector's threshold for each scenario and false alarm target.
    """
    targets, _ = _calibratable(cfg, cfg.pfa_targets)
    calibration = _collect(
        cfg,
        _fixed_layout(cfg),
        Stream.CALIBRATION,
        None,
        cfg.calibration_trials,
    )
    rows: list[ThresholdRow] = []
    for truth, scenario in enumerate(cfg.scenarios):
        for column, detector in enumerate(DETECTORS):
            for target in targets:
                result = calibrate_from_samples(
                    calibration[:, truth, column],
                    target,
                )
                rows.append(
                    ThresholdRow(
                        detector=detector,
                        mu=scenario.mu,
                        target_pfa=target,
                        tau3=result.tau3,
                        achieved_pfa=result.achieved_pfa,
                        samples=result.samples,
                    ),
                )
    return rows
