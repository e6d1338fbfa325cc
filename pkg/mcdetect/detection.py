"""
Decisions at the nanosensors and their fusion at the fusion center.

Each sensor counts bound receptors, compares the count against ``tau1`` and,
if it decides the target is present, releases ``N`` secondary molecules. The
fusion center hard-decides each sensor's bit against ``tau2`` and combines
the ``K`` bits with one of three statistics:

* the genie-aided detector (GAD), which knows the target's position and
  secretion rate,
* the generalized likelihood ratio test (G-LRT), which estimates both on a
  grid,
* the generalized locally optimum detector (G-LOD), which needs no rate
  estimate at all.
"""

from __future__ import annotations

from enum import Enum
from itertools import product
from math import ceil, log
from typing import TYPE_CHECKING, Any
import logging
import warnings

from attrs import field
from scipy import special, stats
import numpy as np

from mcdetect import exceptions
from mcdetect._attrs import (
    ARRAY_EQ,
    frozen,
    non_negative,
    points,
    positive,
    probability,
    readonly,
    vector3,
)
from mcdetect.channel import pairwise_distances
from mcdetect.numerics import _unwrap, poisson_pmf, poisson_tail

if TYPE_CHECKING:
    from collections.abc import Sequence

    from mcdetect.channel import NetworkLayout, ReactiveLink
    from mcdetect.typing import BatchStatistic, StatisticSampler, Vector3

logger = logging.getLogger(__name__)

#: The value ``log(0)`` is replaced with when `gad_llr` is not strict.
LOG_ZERO = log(np.finfo(float).tiny)

#: Most sensors whose ``2**K`` decision vectors are enumerated exactly.
MAX_ENUMERATED_SENSORS = 16

#: Decision vectors scored against a candidate grid at a time.
_ROWS_PER_CHUNK = 256


class Hypothesis(Enum):
    H0 = "H0"
    H1 = "H1"


class Detector(str, Enum):
    """
    The fusion center statistics.
    """

    GAD = "gad"
    GLRT = "g-lrt"
    GLOD = "g-lod"


def _flat(value: Any) -> np.ndarray:
    return readonly(np.atleast_1d(np.asarray(value, dtype=float)))


def _all_non_negative(instance: object, attribute: Any, value: np.ndarray):
    if not np.all(np.isfinite(value)) or np.any(value < 0):
        raise ValueError(f"{attribute.name} must be >= 0, got {value!r}")


@frozen
class NoiseModel:
    """
    Mean environmental counts at the sensors and at the fusion center.

    ``zeta_k`` holds one mean per fusion center receptor type (i.e. per
    sensor), or a single mean shared by all of them.
    """

    zeta0: float = field(validator=non_negative)
    zeta_k: np.ndarray = field(
        converter=_flat,
        validator=_all_non_negative,
        eq=ARRAY_EQ,
    )

    def for_sensors(self, K: int) -> np.ndarray:
        """
        ``zeta_k`` broadcast to ``K`` sensors.
        """
        if len(self.zeta_k) not in {1, K}:
            raise exceptions.OutOfDomain(
                name="zeta_k",
                value=len(self.zeta_k),
                constraint=f"one value or {K}",
            )
        return np.broadcast_to(self.zeta_k, (K,))


@frozen
class Thresholds:
    """
    Count thresholds at the sensors (``tau1``) and for the sensor to fusion
    center links (``tau2``), and the fusion center's final threshold.
    """

    tau1: int = field(validator=non_negative)
    tau2: int = field(validator=non_negative)
    tau3: float = 0.0

    @classmethod
    def from_bounds(
        cls,
        omega1: float,
        omega2_link: float,
        noise: NoiseModel,
    ) -> Thresholds:
        """
        The thresholds meeting false alarm bounds on both kinds of link.

        A single ``tau2`` serves every sensor, so it is chosen for the
        noisiest fusion center receptor type.
        """
        return cls(
            tau1=select_tau1(omega1, noise.zeta0),
            tau2=select_tau2(omega2_link, float(np.max(noise.zeta_k))),
        )


@frozen
class Scenario:
    """
    Where the target is and how fast it secretes (s⁻¹).

    A rate of 0 is the target-absent hypothesis.
    """

    x_T: Vector3 = field(converter=vector3, eq=ARRAY_EQ)
    mu: float = field(validator=non_negative)

    @property
    def hypothesis(self) -> Hypothesis:
        return Hypothesis.H0 if self.mu == 0 else Hypothesis.H1

    def absent(self) -> Scenario:
        """
        The target-absent scenario at the same position.
        """
        return Scenario(x_T=self.x_T, mu=0.0)


@frozen
class LinkProbs:
    """
    False alarm and detection probabilities of both stages of every link.
    """

    p_fa_TS: float = field(validator=probability)
    p_d_TS: np.ndarray = field(
        converter=readonly,
        validator=probability,
        eq=ARRAY_EQ,
    )
    p_fa_SF: np.ndarray = field(
        converter=readonly,
        validator=probability,
        eq=ARRAY_EQ,
    )
    p_d_SF: np.ndarray = field(
        converter=readonly,
        validator=probability,
        eq=ARRAY_EQ,
    )
    N: float = field(validator=non_negative)


@frozen
class TransitionProbs:
    """
    The probability that the fusion center receives a 1 from each sensor,
    with the target absent (``rho0``) and present (``rho1``).
    """

    rho0: np.ndarray = field(
        converter=readonly,
        validator=probability,
        eq=ARRAY_EQ,
    )
    rho1: np.ndarray = field(
        converter=readonly,
        validator=probability,
        eq=ARRAY_EQ,
    )

    @property
    def K(self) -> int:
        return len(self.rho0)

    def degenerate(self) -> tuple[int, ...]:
        """
        The sensors with a transition probability of exactly 0 or 1.
        """
        bad = np.zeros(self.K, dtype=bool)
        for rho in self.rho0, self.rho1:
            bad |= (rho == 0) | (rho == 1)
        return tuple(int(each) for each in np.flatnonzero(bad))

    def check(self) -> None:
        """
        Raise if any log-likelihood ratio would be undefined.
        """
        indices = self.degenerate()
        if indices:
            raise exceptions.DegenerateTransitionProbability(indices=indices)


def _bits(value: Any) -> np.ndarray:
    array = np.array(value, dtype=np.int8)
    if np.any((array != 0) & (array != 1)):
        raise ValueError(f"decisions must be 0 or 1, got {value!r}")
    array.flags.writeable = False
    return array


@frozen
class DecisionVector:
    """
    The ``K`` hard decisions received at the fusion center.
    """

    d: np.ndarray = field(converter=_bits, eq=ARRAY_EQ)

    @property
    def K(self) -> int:
        return len(self.d)


def _rows(decisions: Any) -> np.ndarray:
    """
    Decision vectors as a 2-D ``(n, K)`` array.
    """
    if isinstance(decisions, DecisionVector):
        decisions = decisions.d
    return np.atleast_2d(np.asarray(decisions, dtype=np.int8))


@frozen
class GridSpec:
    """
    Candidate target positions (μm) and secretion rates (s⁻¹).

    Candidates are ordered position-major: candidate ``p * len(mus) + l``
    pairs position ``p`` with rate ``l``.
    """

    positions: np.ndarray = field(converter=points, eq=ARRAY_EQ)
    mus: np.ndarray = field(converter=_flat, eq=ARRAY_EQ)

    def __attrs_post_init__(self):
        if not len(self.positions) or not self.mus.size:
            raise exceptions.OutOfDomain(
                name="grid",
                value=(len(self.positions), self.mus.size),
                constraint="at least one position and one rate",
            )
        if np.any(self.mus <= 0):
            raise exceptions.OutOfDomain(
                name="mus",
                value=float(np.min(self.mus)),
                constraint="every candidate rate > 0",
            )

    def __len__(self) -> int:
        return len(self.positions) * self.mus.size

    def candidate(self, index: int) -> tuple[Vector3, float]:
        position, rate = divmod(index, self.mus.size)
        return self.positions[position], float(self.mus[rate])


@frozen
class DetectionContext:
    """
    Everything the fusion center knows about its network.

    The hypothesis-independent link probabilities are computed once, when
    the context is created.
    """

    sensors: np.ndarray = field(converter=points, eq=ARRAY_EQ)
    fusion_center_distances: np.ndarray = field(
        converter=readonly,
        eq=ARRAY_EQ,
    )
    ns_link: ReactiveLink
    fc_link: ReactiveLink
    thresholds: Thresholds
    noise: NoiseModel
    N: float = field(validator=non_negative)
    elapsed: float = field(validator=positive)

    p_fa_TS: float = field(init=False, eq=False)
    arriving: np.ndarray = field(init=False, eq=False, repr=False)
    p_fa_SF: np.ndarray = field(init=False, eq=False, repr=False)
    p_d_SF: np.ndarray = field(init=False, eq=False, repr=False)
    rho0: np.ndarray = field(init=False, eq=False, repr=False)

    @p_fa_TS.default
    def _p_fa_TS(self) -> float:
        return poisson_tail(self.thresholds.tau1, self.noise.zeta0)

    @arriving.default
    def _arriving(self) -> np.ndarray:
        probability = self.fc_link.activation_probability(
            self.elapsed,
            self.fusion_center_distances,
        )
        return readonly(self.N * np.asarray(probability))

    @p_fa_SF.default
    def _p_fa_SF(self) -> np.ndarray:
        zeta_k = self.noise.for_sensors(self.K)
        return readonly(poisson_tail(self.thresholds.tau2, zeta_k))

    @p_d_SF.default
    def _p_d_SF(self) -> np.ndarray:
        zeta_k = self.noise.for_sensors(self.K)
        mean = zeta_k + self.arriving
        return readonly(poisson_tail(self.thresholds.tau2, mean))

    @rho0.default
    def _rho0(self) -> np.ndarray:
        return readonly(self.rho1_from_detection(self.p_fa_TS))

    @classmethod
    def from_layout(
        cls,
        layout: NetworkLayout,
        ns_link: ReactiveLink,
        fc_link: ReactiveLink,
        thresholds: Thresholds,
        noise: NoiseModel,
        N: float,
        elapsed: float,
    ) -> DetectionContext:
        return cls(
            sensors=layout.sensors,
            fusion_center_distances=layout.fusion_center_distances,
            ns_link=ns_link,
            fc_link=fc_link,
            thresholds=thresholds,
            noise=noise,
            N=N,
            elapsed=elapsed,
        )

    @property
    def K(self) -> int:
        return len(self.sensors)

    def gains(self, positions: Any) -> Any:
        """
        Steady-state gains from each of ``positions`` to every sensor.

        A single position gives ``(K,)``, several give ``(P, K)``.
        """
        positions = np.asarray(positions, dtype=float)
        distances = pairwise_distances(positions, self.sensors)
        gains = np.asarray(self.ns_link.gain(distances))
        return gains[0] if positions.ndim == 1 else gains

    def rho1_from_detection(self, p_d_TS: Any) -> np.ndarray:
        """
        The transition probabilities given sensor detection probabilities.

        Broadcasts over any leading axes of ``p_d_TS``.
        """
        p_d_TS = np.asarray(p_d_TS, dtype=float)
        return self.p_d_SF * p_d_TS + self.p_fa_SF * (1 - p_d_TS)

    def rho1(self, x_T: Vector3, mu: float) -> np.ndarray:
        """
        The transition probabilities with a target at ``x_T`` secreting at
        rate ``mu``.
        """
        mean = self.noise.zeta0 + mu * self.gains(x_T)
        return self.rho1_from_detection(
            poisson_tail(self.thresholds.tau1, mean),
        )

    def transition_probs(self, scenario: Scenario) -> TransitionProbs:
        return transition_probs(link_probs(scenario, self))


def ns_llr(
    y: Any,
    mu: float,
    x_T: Vector3,
    x_k: Vector3,
    zeta0: float,
    link: ReactiveLink,
) -> Any:
    """
    The log-likelihood ratio of a sensor's count ``y``.

    Strictly increasing in ``y``, so thresholding it is equivalent to
    thresholding the count itself.
    """
    if not mu > 0:
        raise exceptions.OutOfDomain(name="mu", value=mu, constraint="mu > 0")
    if not zeta0 > 0:
        raise exceptions.OutOfDomain(
            name="zeta0",
            value=zeta0,
            constraint="zeta0 > 0",
        )
    distance = float(np.linalg.norm(vector3(x_T) - vector3(x_k)))
    signal = mu * link.gain(distance)
    y = np.asarray(y, dtype=float)
    return _unwrap(np.log1p(signal / zeta0) * y - signal)


def _exceeds(count: Any, threshold: int, name: str) -> Any:
    count = np.asarray(count)
    if np.any(count < 0):
        raise exceptions.OutOfDomain(
            name=name,
            value=count.tolist(),
            constraint="counts >= 0",
        )
    return _unwrap((count > threshold).astype(np.int8))


def ns_decide(y: Any, tau1: int) -> Any:
    """
    A sensor's hard decision: 1 exactly when its count exceeds ``tau1``.
    """
    return _exceeds(y, tau1, name="y")


def fc_link_decide(z: Any, tau2: int) -> Any:
    """
    The fusion center's hard decision on one sensor's secondary molecules.
    """
    return _exceeds(z, tau2, name="z")


def _smallest_threshold(omega: float, zeta: float, name: str) -> int:
    if not 0 < omega <= 1:
        raise exceptions.OutOfDomain(
            name=name,
            value=omega,
            constraint="0 < omega <= 1",
        )
    if zeta == 0:
        return 0
    guess = stats.poisson.isf(omega, zeta)
    tau = max(0, int(guess) - 1) if np.isfinite(guess) else 0
    while poisson_tail(tau, zeta) > omega:
        tau += 1
    while tau > 0 and poisson_tail(tau - 1, zeta) <= omega:
        tau -= 1
    return tau


def select_tau1(omega1: float, zeta0: float) -> int:
    """
    The smallest sensor threshold whose false alarm probability is at most
    ``omega1``.

    The false alarm probability only decreases as the threshold grows, so
    the smallest compliant threshold is the one detecting most often.
    """
    return _smallest_threshold(omega1, zeta0, name="omega1")


def select_tau2(omega: float, zeta_k: float) -> int:
    """
    The smallest link threshold whose false alarm probability is at most
    ``omega``.
    """
    return _smallest_threshold(omega, zeta_k, name="omega2_link")


def link_probs(scenario: Scenario, context: DetectionContext) -> LinkProbs:
    mean = context.noise.zeta0 + scenario.mu * context.gains(scenario.x_T)
    return LinkProbs(
        p_fa_TS=context.p_fa_TS,
        p_d_TS=poisson_tail(context.thresholds.tau1, mean),
        p_fa_SF=context.p_fa_SF,
        p_d_SF=context.p_d_SF,
        N=context.N,
    )


def transition_probs(lp: LinkProbs) -> TransitionProbs:
    """
    Combine both stages of each link into a binary asymmetric channel.

    Degenerate probabilities are not rejected here; see
    `TransitionProbs.check`.
    """
    return TransitionProbs(
        rho0=lp.p_d_SF * lp.p_fa_TS + lp.p_fa_SF * (1 - lp.p_fa_TS),
        rho1=lp.p_d_SF * lp.p_d_TS + lp.p_fa_SF * (1 - lp.p_d_TS),
    )


def _log(value: Any) -> np.ndarray:
    return np.log(np.maximum(value, np.finfo(float).tiny))


def gad_llr_batch(
    decisions: Any,
    tp: TransitionProbs,
    strict: bool = True,
) -> np.ndarray:
    """
    `gad_llr` of every row of an ``(n, K)`` decision matrix.

    With ``strict=False``, degenerate transition probabilities are given
    the finite log-probability `LOG_ZERO` instead of being rejected.
    """
    if strict:
        tp.check()
    one = _log(tp.rho1) - _log(tp.rho0)
    zero = _log(1 - tp.rho1) - _log(1 - tp.rho0)
    return _rows(decisions) @ (one - zero) + zero.sum()


def gad_llr(d: Any, tp: TransitionProbs, strict: bool = True) -> float:
    """
    The log-likelihood ratio of a decision vector.

    Known transition probabilities under both hypotheses make this the
    optimal fusion rule.
    """
    return float(gad_llr_batch(d, tp, strict=strict)[0])


def enumerate_decisions(K: int) -> np.ndarray:
    """
    All ``2**K`` decision vectors in lexicographic order.
    """
    if not 1 <= K <= MAX_ENUMERATED_SENSORS:
        raise exceptions.OutOfDomain(
            name="K",
            value=K,
            constraint=f"1 <= K <= {MAX_ENUMERATED_SENSORS}",
        )
    return np.array(list(product((0, 1), repeat=K)), dtype=np.int8)


def decision_log_pmf(d: Any, rho: Any) -> Any:
    """
    The log-probability of decision vectors whose bits are independent
    Bernoulli(``rho``) variables.

    One value per row of ``d``; ``-inf`` for impossible vectors.
    """
    rows = _rows(d).astype(float)
    rho = np.asarray(rho, dtype=float)
    log_pmf = special.xlogy(rows, rho) + special.xlogy(1 - rows, 1 - rho)
    return log_pmf.sum(axis=-1)


def exact_error_probabilities(
    statistic: BatchStatistic,
    threshold: float,
    tp: TransitionProbs,
) -> tuple[float, float]:
    """
    The false alarm and missed detection probabilities of deciding for the
    target whenever ``statistic`` exceeds ``threshold``.

    Exact, by enumerating every decision vector.
    """
    decisions = enumerate_decisions(tp.K)
    values = np.asarray(statistic(decisions))
    alarm = values > threshold
    absent = np.exp(decision_log_pmf(decisions, tp.rho0))
    present = np.exp(decision_log_pmf(decisions, tp.rho1))
    return float(absent[alarm].sum()), float(present[~alarm].sum())


def exact_threshold(
    statistic: BatchStatistic,
    tp: TransitionProbs,
    omega2: float,
) -> float:
    """
    The smallest threshold whose exact false alarm probability is at most
    ``omega2``.

    The false alarm probability only changes at values the statistic
    actually takes, so the threshold is always one of them.
    """
    if not 0 < omega2 < 1:
        raise exceptions.OutOfDomain(
            name="omega2",
            value=omega2,
            constraint="0 < omega2 < 1",
        )
    decisions = enumerate_decisions(tp.K)
    values = np.asarray(statistic(decisions))
    absent = np.exp(decision_log_pmf(decisions, tp.rho0))
    distinct, inverse = np.unique(values, return_inverse=True)
    mass = np.bincount(inverse.ravel(), weights=absent)
    above = np.append(np.cumsum(mass[::-1])[::-1][1:], 0.0)
    return float(distinct[np.argmax(above <= omega2)])


def candidate_rho1(grid: GridSpec, context: DetectionContext) -> np.ndarray:
    """
    The ``(len(grid), K)`` transition probabilities of every candidate.
    """
    gains = context.gains(grid.positions)
    means = context.noise.zeta0 + grid.mus[None, :, None] * gains[:, None, :]
    p_d_TS = poisson_tail(context.thresholds.tau1, means)
    return context.rho1_from_detection(p_d_TS).reshape(-1, context.K)


def _best_candidates(
    decisions: np.ndarray,
    rho1: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    The index and log-likelihood of each row's most likely candidate.

    Ties go to the lowest index.

    A candidate with a transition probability of exactly 0 or 1 is never
    clamped. It is excluded for the rows it gives probability zero, and
    its likelihood is exact for every other row. A row which no candidate
    can produce has log-likelihood ``-inf``.
    """
    never, always = rho1 == 0, rho1 == 1
    with np.errstate(divide="ignore"):
        one = np.where(never, 0.0, np.log(rho1))
        zero = np.where(always, 0.0, np.log(1 - rho1))
    weights = (one - zero).T
    offset = zero.sum(axis=1)
    never, always = never.T.astype(np.intp), always.T.astype(np.intp)
    index = np.empty(len(decisions), dtype=np.intp)
    best = np.empty(len(decisions))
    for start in range(0, len(decisions), _ROWS_PER_CHUNK):
        chunk = decisions[start : start + _ROWS_PER_CHUNK]
        likelihood = chunk @ weights + offset
        impossible = (chunk @ never > 0) | ((1 - chunk) @ always > 0)
        likelihood[impossible] = -np.inf
        index[start : start + len(chunk)] = np.argmax(likelihood, axis=1)
        best[start : start + len(chunk)] = np.max(likelihood, axis=1)
    return index, best


def glrt_estimate(
    d: Any,
    grid: GridSpec,
    context: DetectionContext,
) -> tuple[Vector3, float]:
    """
    The maximum likelihood target position and secretion rate on the grid.
    """
    index, _ = _best_candidates(_rows(d), candidate_rho1(grid, context))
    return grid.candidate(int(index[0]))


def glrt_stat_batch(
    decisions: Any,
    grid: GridSpec,
    context: DetectionContext,
) -> np.ndarray:
    """
    `glrt_stat` of every row of an ``(n, K)`` decision matrix.

    Degenerate ``rho0`` is rejected. A candidate with a transition
    probability of exactly 0 or 1 is excluded for the rows it cannot
    produce, and a row which no candidate can produce scores ``-inf``.
    """
    absent = TransitionProbs(rho0=context.rho0, rho1=context.rho0)
    absent.check()
    rows = _rows(decisions)
    _, best = _best_candidates(rows, candidate_rho1(grid, context))
    return 2 * (best - decision_log_pmf(rows, context.rho0))


def glrt_stat(d: Any, grid: GridSpec, context: DetectionContext) -> float:
    """
    Twice the log-likelihood ratio at the grid's maximum likelihood point.
    """
    return float(glrt_stat_batch(d, grid, context)[0])


def _rho1_derivatives(
    x_T: Vector3,
    mu: float,
    context: DetectionContext,
) -> np.ndarray:
    if mu < 0:
        raise exceptions.OutOfDomain(name="mu", value=mu, constraint="mu >= 0")
    gains = context.gains(x_T)
    mean = context.noise.zeta0 + mu * gains
    density = poisson_pmf(context.thresholds.tau1, mean)
    return density * gains * (context.p_d_SF - context.p_fa_SF)


def rho1_derivative(
    k: int,
    x_T: Vector3,
    mu: float,
    context: DetectionContext,
) -> float:
    """
    How fast sensor ``k``'s transition probability grows with the rate.

    A sensor's detection probability is a Poisson tail, whose derivative in
    the mean is the Poisson probability of the threshold itself.
    """
    return float(_rho1_derivatives(x_T, mu, context)[k])


def _checked_rho1(
    x_T: Vector3,
    mu: float,
    context: DetectionContext,
) -> np.ndarray:
    rho1 = context.rho1(x_T, mu)
    bad = np.flatnonzero((rho1 == 0) | (rho1 == 1))
    if len(bad):
        raise exceptions.DegenerateTransitionProbability(
            indices=tuple(int(each) for each in bad),
        )
    return rho1


def fisher_info(x_T: Vector3, mu: float, context: DetectionContext) -> float:
    """
    The Fisher information about the rate carried by the decision vector.
    """
    slope = _rho1_derivatives(x_T, mu, context)
    rho1 = _checked_rho1(x_T, mu, context)
    return float(np.sum(slope**2 / (rho1 * (1 - rho1))))


def score(d: Any, x_T: Vector3, mu: float, context: DetectionContext) -> Any:
    """
    The derivative in the rate of the decision vector's log-likelihood.

    One value per row of ``d``.
    """
    slope = _rho1_derivatives(x_T, mu, context)
    rho1 = _checked_rho1(x_T, mu, context)
    values = _rows(d) @ (slope / rho1 + slope / (1 - rho1)) - np.sum(
        slope / (1 - rho1),
    )
    if isinstance(d, DecisionVector) or np.ndim(d) == 1:
        return float(values[0])
    return values


def glod_weights(positions: Any, context: DetectionContext) -> np.ndarray:
    """
    Each sensor's sensitivity to a vanishing rate, per candidate position.

    One row per position.
    """
    gains = np.atleast_2d(context.gains(np.asarray(positions, dtype=float)))
    density = poisson_pmf(context.thresholds.tau1, context.noise.zeta0)
    return gains * density * (context.p_d_SF - context.p_fa_SF)


def glod_scores(
    decisions: Any,
    positions: Any,
    context: DetectionContext,
) -> np.ndarray:
    """
    The normalized locally optimum score of every row at every informative
    candidate position.

    Positions with no information at all are left out; under the
    target-absent hypothesis each score has mean 0 and variance 1.
    """
    TransitionProbs(rho0=context.rho0, rho1=context.rho0).check()
    rho0 = context.rho0
    weights = glod_weights(positions, context)
    norm = np.sqrt(np.sum(weights**2 / (rho0 * (1 - rho0)), axis=1))
    informative = norm > 0
    if not informative.any():
        raise exceptions.NoSignalGeometry(candidates=len(weights))
    weights, norm = weights[informative], norm[informative]
    slope = (weights / rho0 + weights / (1 - rho0)) / norm[:, None]
    offset = np.sum(weights / (1 - rho0), axis=1) / norm
    return _rows(decisions) @ slope.T - offset


def glod_stat_batch(
    decisions: Any,
    positions: Any,
    context: DetectionContext,
) -> np.ndarray:
    """
    `glod_stat` of every row of an ``(n, K)`` decision matrix.
    """
    return glod_scores(decisions, positions, context).max(axis=1)


def glod_stat(d: Any, positions: Any, context: DetectionContext) -> float:
    """
    The largest normalized locally optimum score over candidate positions.
    """
    return float(glod_stat_batch(d, positions, context)[0])


def binomial_interval(
    successes: int,
    trials: int,
    confidence: float = 0.95,
) -> tuple[float, float]:
    """
    The exact (Clopper-Pearson) confidence interval of a proportion.
    """
    interval = stats.binomtest(successes, trials).proportion_ci(
        confidence_level=confidence,
        method="exact",
    )
    return float(interval.low), float(interval.high)


@frozen
class Calibration:
    """
    A fusion center threshold and the false alarm rate it achieved on the
    samples it was calibrated with.
    """

    tau3: float
    achieved_pfa: float
    interval: tuple[float, float]
    samples: int


def calibrate_from_samples(
    samples: Sequence[float] | np.ndarray,
    omega2: float,
) -> Calibration:
    """
    The empirical ``1 - omega2`` quantile of target-absent statistics.
    """
    if not 0 < omega2 < 1:
        raise exceptions.OutOfDomain(
            name="omega2",
            value=omega2,
            constraint="0 < omega2 < 1",
        )
    ordered = np.sort(np.asarray(samples, dtype=float))
    n = len(ordered)
    if n * omega2 < 20:
        warnings.warn(
            f"only {n * omega2:g} of {n} calibration samples are expected "
            f"above the threshold for a false alarm rate of {omega2:g}",
            exceptions.InsufficientCalibrationSamples,
            stacklevel=2,
        )
    tau3 = float(ordered[max(0, ceil((1 - omega2) * n) - 1)])
    alarms = int(np.count_nonzero(ordered > tau3))
    return Calibration(
        tau3=tau3,
        achieved_pfa=alarms / n,
        interval=binomial_interval(alarms, n),
        samples=n,
    )


def calibrate_threshold(
    sampler: StatisticSampler,
    omega2: float,
    n_cal: int,
    rng: np.random.Generator,
) -> Calibration:
    """
    Calibrate a fusion center threshold by simulating the target-absent
    hypothesis.
    """
    if n_cal < 1:
        raise exceptions.OutOfDomain(
            name="n_cal",
            value=n_cal,
            constraint="n_cal >= 1",
        )
    samples = sampler(rng, n_cal)
    calibration = calibrate_from_samples(samples, omega2)
    logger.debug(
        "calibrated tau3=%r for a false alarm rate of %g from %d samples",
        calibration.tau3,
        omega2,
        n_cal,
    )
    return calibration
