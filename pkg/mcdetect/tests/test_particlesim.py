from math import exp, sqrt

import attrs
import numpy as np
import pytest

from mcdetect import exceptions
from mcdetect.channel import ReactionChannelParams, activation_probability
from mcdetect.particlesim import (
    ContinuousRelease,
    EmpiricalPMF,
    ImpulsiveRelease,
    ParticlePopulation,
    Receiver,
    SimConfig,
    _rank_within,
    binding_probability,
    ensemble_histogram,
    run_ensemble,
    run_trial,
    step,
)

NS = ReactionChannelParams(
    D=5e3,
    kf=1.2e4,
    kb=1.5e-4,
    kd=1e-4,
    receiver_radius=0.5,
    M=5120,
    r_receptor=7e-3,
)
FAST = attrs.evolve(NS, kb=1.5e4, kd=1e4)
INERT = attrs.evolve(NS, kf=0, kb=0, kd=0)


def config(params=FAST, release=ContinuousRelease(mu=1e5), **kwargs):
    kwargs.setdefault("dt", 1e-6)
    kwargs.setdefault("horizon", 1e-4)
    kwargs.setdefault("seed", 12345)
    kwargs.setdefault("source", (1, 0, 0))
    return SimConfig(
        release=release,
        receiver=Receiver.from_params((0, 0, 0), params),
        **kwargs,
    )


class TestSimConfig:
    def test_horizon_shorter_than_step(self):
        with pytest.raises(exceptions.OutOfDomain) as e:
            config(dt=1e-3, horizon=1e-4)
        assert e.value.name == "horizon"

    def test_source_inside_receiver(self):
        with pytest.raises(exceptions.InsideReceiver):
            config(source=(0.2, 0, 0))

    def test_sample_time_beyond_horizon(self):
        with pytest.raises(exceptions.OutOfDomain):
            config(sample_times=[2e-4])

    def test_default_sample_time_is_horizon(self):
        cfg = config(dt=1e-6, horizon=1e-4)
        assert cfg.steps == 100
        assert cfg.sample_steps == [100]

    def test_negative_release_rejected(self):
        with pytest.raises(ValueError, match="mu"):
            ContinuousRelease(mu=-1)


def test_binding_probability():
    constants = Receiver.from_params((0, 0, 0), NS).link.constants
    p = binding_probability(NS, constants, 5e-8)
    assert p == pytest.approx(5.367e-3, rel=1e-3)


def test_binding_probability_saturates():
    params = attrs.evolve(NS, kf=1e12)
    constants = Receiver.from_params((0, 0, 0), params).link.constants
    assert binding_probability(params, constants, 1.0) == 1.0


def test_rank_within():
    groups = np.array([2, 0, 2, 1, 0, 2])
    assert _rank_within(groups).tolist() == [0, 0, 1, 0, 1, 2]


def test_rank_within_empty():
    assert len(_rank_within(np.empty(0, dtype=np.intp))) == 0


class TestStep:
    def test_total_degradation(self):
        cfg = config(
            params=attrs.evolve(FAST, kd=1e12),
            release=ImpulsiveRelease(molecules=100),
        )
        population = step(
            ParticlePopulation.initial(cfg),
            cfg,
            np.random.default_rng(0),
        )
        assert population.free.tolist() == [0]
        assert population.last_step.degraded.tolist() == [100]

    def test_molecules_are_conserved(self):
        cfg = config(release=ContinuousRelease(mu=1e7), dt=1e-7, horizon=1e-5)
        rng = np.random.default_rng(1)
        population = ParticlePopulation.initial(cfg, replicas=3)
        for _ in range(50):
            before = population.free + population.bound
            population = step(population, cfg, rng)
            counts = population.last_step
            after = population.free + population.bound
            assert (after == before - counts.degraded + counts.injected).all()

    def test_capacity_is_never_exceeded(self):
        params = attrs.evolve(
            NS,
            kf=1e9,
            kb=0,
            kd=0,
            M=3,
            r_receptor=0.2,
        )
        cfg = config(
            params=params,
            release=ImpulsiveRelease(molecules=2000),
            source=(0.55, 0, 0),
            dt=1e-7,
            horizon=1e-4,
        )
        rng = np.random.default_rng(2)
        population = ParticlePopulation.initial(cfg, replicas=4)
        for _ in range(300):
            population = step(population, cfg, rng)
            assert population.bound.max() <= 3
        assert population.bound.tolist() == [3, 3, 3, 3]

    def test_free_displacement_variance(self):
        dt, n = 1e-6, 20000
        cfg = attrs.evolve(
            config(params=INERT, release=ImpulsiveRelease(molecules=n), dt=dt),
            receiver=Receiver.from_params((1000, 0, 0), INERT),
        )
        population = step(
            ParticlePopulation.initial(cfg),
            cfg,
            np.random.default_rng(3),
        )
        variance = population.positions.var(axis=0)
        assert variance == pytest.approx([2 * INERT.D * dt] * 3, rel=0.05)

    def test_degradation_rate(self):
        dt, n = 1e-5, 20000
        params = attrs.evolve(INERT, kd=1e4)
        cfg = attrs.evolve(
            config(
                params=params,
                release=ImpulsiveRelease(molecules=n),
                dt=dt,
            ),
            receiver=Receiver.from_params((1000, 0, 0), params),
        )
        population = step(
            ParticlePopulation.initial(cfg),
            cfg,
            np.random.default_rng(4),
        )
        q = 1 - exp(-1e4 * dt)
        sd = sqrt(n * q * (1 - q))
        assert abs(population.last_step.degraded[0] - n * q) < 5 * sd

    def test_no_release_no_molecules(self):
        cfg = config(release=ContinuousRelease(mu=0))
        population = step(
            ParticlePopulation.initial(cfg, replicas=2),
            cfg,
            np.random.default_rng(5),
        )
        assert population.free.tolist() == [0, 0]
        assert population.last_step.injected.tolist() == [0, 0]


class TestRuns:
    def test_trial_is_deterministic(self):
        cfg = config(sample_times=[2e-5, 1e-4])
        first, second = run_trial(cfg), run_trial(cfg)
        assert first.shape == (2,)
        assert (first == second).all()

    def test_ensemble_independent_of_workers(self):
        cfg = config(batch_size=5)
        serial = run_ensemble(cfg, n_trials=12, workers=1)
        parallel = run_ensemble(cfg, n_trials=12, workers=2)
        assert serial.shape == (12, 1)
        assert (serial == parallel).all()

    def test_ensemble_needs_a_trial(self):
        with pytest.raises(exceptions.OutOfDomain):
            run_ensemble(config(), n_trials=0)

    def test_no_release_gives_zeros(self):
        counts = run_ensemble(config(release=ContinuousRelease(mu=0)), 7)
        assert counts.tolist() == [[0]] * 7

    def test_agrees_with_channel_model(self):
        """
        About 20000 molecules bind in all, so the sampling error (under
        1%) is small next to the tolerance.
        """
        molecules, replicas, t = 250_000, 8, 5e-5
        cfg = config(
            params=NS,
            release=ImpulsiveRelease(molecules=molecules),
            dt=5e-8,
            horizon=t,
            batch_size=2,
        )
        counts = run_ensemble(cfg, n_trials=replicas, workers=4)
        expected = molecules * activation_probability(
            t,
            1.0,
            NS,
            cfg.receiver.link.constants,
        )
        assert sqrt(expected / replicas) < 0.015 * expected
        assert counts.mean() == pytest.approx(expected, rel=0.05)


class TestEmpiricalPMF:
    def test_from_counts(self):
        pmf = EmpiricalPMF.from_counts([0, 1, 1, 3])
        assert pmf.probabilities.tolist() == [0.25, 0.5, 0, 0.25]
        assert pmf.trials == 4
        assert pmf.mean == 1.25

    def test_total_variation_identical(self):
        pmf = EmpiricalPMF.from_counts([0, 1, 1, 2])
        assert pmf.total_variation([0.25, 0.5, 0.25]) == 0

    def test_total_variation_counts_missing_tail(self):
        pmf = EmpiricalPMF.from_counts([0, 0])
        assert pmf.total_variation([0.5]) == pytest.approx(0.5)

    def test_total_variation_disjoint(self):
        pmf = EmpiricalPMF.from_counts([2, 2])
        assert pmf.total_variation([1.0]) == 1

    def test_point_mass_against_poisson(self):
        pmf = EmpiricalPMF.from_counts([0] * 10)
        assert pmf.poisson_distance(0.5) == pytest.approx(1 - exp(-0.5))


class TestEnsembleHistogram:
    def test_no_release_is_a_point_mass(self):
        pmf = ensemble_histogram(
            config(release=ContinuousRelease(mu=0)),
            n_trials=100,
            sample_time=1e-5,
        )
        assert pmf.probabilities.tolist() == [1.0]
        assert pmf.trials == 100

    def test_too_few_trials(self):
        with pytest.raises(exceptions.OutOfDomain):
            ensemble_histogram(config(), n_trials=99, sample_time=1e-5)
