from math import exp, pi, sqrt

import attrs
import numpy as np
import pytest

from mcdetect import channel, exceptions
from mcdetect.channel import (
    CLAMP_TOLERANCE,
    NetworkLayout,
    ReactionChannelParams,
    ReactiveLink,
    activation_probability,
    closed_form_gain,
    derive_constants,
    fc_activation_probability,
    pairwise_distances,
    steady_state_mean_g,
    transient_mean,
)
from mcdetect.numerics import CubicRoots

#: The sensor link of the reference network.
NS = ReactionChannelParams(
    D=5e3,
    kf=1.2e4,
    kb=1.5e-4,
    kd=1e-4,
    receiver_radius=0.5,
    M=5120,
    r_receptor=7e-3,
)

#: The fusion center link of the reference network.
FC = ReactionChannelParams(
    D=5e3,
    kf=3.7e4,
    kb=5e-6,
    kd=5e-7,
    receiver_radius=1.0,
    M=5120,
    r_receptor=1.4e-2,
)

#: The sensor link with reaction rates fast enough to settle within ~1 ms.
FAST = attrs.evolve(NS, kb=1.5e4, kd=1e4)


class TestReactionChannelParams:
    def test_coverage(self):
        assert NS.coverage == pytest.approx(0.25088)

    def test_full_coverage_rejected(self):
        with pytest.raises(exceptions.OutOfDomain) as e:
            attrs.evolve(NS, r_receptor=2e-2)
        assert e.value.name == "coverage"

    def test_nonpositive_diffusion_rejected(self):
        with pytest.raises(ValueError, match="D must be > 0"):
            attrs.evolve(NS, D=0)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError, match="kb"):
            attrs.evolve(NS, kb=-1)


class TestDeriveConstants:
    def test_sensor_link(self):
        c = derive_constants(NS)
        assert c.lambda_coverage == pytest.approx(0.25088)
        assert c.phi == pytest.approx(0.2682, rel=1e-3)
        assert c.kf_star == pytest.approx(3008.2, rel=1e-3)

    def test_roots_reproduce_symmetric_functions(self):
        c = derive_constants(NS)
        a, D = NS.receiver_radius, NS.D
        s1 = (1 + c.kf_star / (4 * pi * a * D)) * sqrt(D) / a
        s2 = NS.kb - NS.kd
        s3 = NS.kb * sqrt(D) / a - NS.kd * s1
        assert c.roots.symmetric_functions() == pytest.approx(
            (s1, s2, s3),
            rel=1e-9,
        )
        assert not c.roots.degenerate

    def test_no_receptors(self):
        c = derive_constants(attrs.evolve(NS, M=0))
        assert (c.lambda_coverage, c.phi, c.kf_star) == (0, 0, 0)

    def test_fast_rates(self):
        roots = derive_constants(FAST).roots
        assert roots.alpha.real == pytest.approx(147.3, rel=1e-2)
        assert abs(roots.beta.imag) == pytest.approx(62.2, rel=1e-2)

    def test_fusion_center_link(self):
        c = derive_constants(FC)
        assert 0 < c.phi < 1
        assert 0 < c.kf_star < FC.kf


class TestActivationProbability:
    def test_no_forward_reaction(self):
        p = attrs.evolve(NS, kf=0)
        c = derive_constants(p)
        t = np.geomspace(1e-6, 1, 13)
        assert np.all(activation_probability(t, 1.0, p, c) == 0)

    def test_immediately_after_release(self):
        c = derive_constants(NS)
        assert activation_probability(1e-9, 1.0, NS, c) < 1e-12

    def test_scalar_in_scalar_out(self):
        c = derive_constants(FAST)
        assert isinstance(activation_probability(1e-4, 1.0, FAST, c), float)

    def test_broadcasts(self):
        c = derive_constants(FAST)
        got = activation_probability(
            np.array([[1e-5], [1e-4]]),
            np.array([1.0, 2.0, 3.0]),
            FAST,
            c,
        )
        assert got.shape == (2, 3)

    def test_inside_receiver(self):
        c = derive_constants(NS)
        with pytest.raises(exceptions.InsideReceiver):
            activation_probability(1e-4, 0.5, NS, c)

    def test_nonpositive_time(self):
        c = derive_constants(NS)
        with pytest.raises(exceptions.OutOfDomain):
            activation_probability(0, 1.0, NS, c)

    def test_degenerate_roots(self):
        c = attrs.evolve(
            derive_constants(NS),
            roots=CubicRoots(alpha=1 + 0j, beta=1 + 0j, gamma=2 + 0j),
        )
        with pytest.raises(exceptions.DegenerateRoots):
            activation_probability(1e-4, 1.0, NS, c)

    def test_rounding_outside_unit_interval_is_clipped(self, monkeypatch):
        monkeypatch.setattr(
            channel,
            "_real",
            lambda total, scale: np.array([-1e-12, 0.5, 1 + 1e-12]),
        )
        c = derive_constants(FAST)
        got = activation_probability(1e-4, [1.0, 2.0, 3.0], FAST, c)
        assert got.tolist() == [0.0, 0.5, 1.0]

    def test_residue_outside_unit_interval(self, monkeypatch):
        monkeypatch.setattr(
            channel,
            "_real",
            lambda total, scale: np.array([-1e-12, 0.5, 1.25]),
        )
        c = derive_constants(FAST)
        with pytest.raises(exceptions.ProbabilityOutOfRange) as e:
            activation_probability(1e-4, [1.0, 2.0, 3.0], FAST, c)
        assert e.value == exceptions.ProbabilityOutOfRange(
            value=1.25,
            tolerance=CLAMP_TOLERANCE,
        )

    @pytest.mark.parametrize("params", [NS, FAST], ids=["table", "fast"])
    def test_root_order_does_not_matter(self, params, subtests):
        c = derive_constants(params)
        alpha, beta, gamma = c.roots
        t = np.geomspace(1e-6, 1e-2, 9)
        expected = activation_probability(t, 1.5, params, c)
        for order in [(beta, gamma, alpha), (gamma, alpha, beta)]:
            permuted = attrs.evolve(c, roots=CubicRoots(*order))
            with subtests.test(order=order):
                got = activation_probability(t, 1.5, params, permuted)
                np.testing.assert_allclose(got, expected, rtol=1e-9)

    def test_probability_on_random_parameters(self, subtests):
        rng = np.random.default_rng(7)
        for _ in range(40):
            a = rng.uniform(0.2, 2)
            M = rng.uniform(100, 5000)
            coverage = rng.uniform(0.01, 0.9)
            p = ReactionChannelParams(
                D=10 ** rng.uniform(3, 4),
                kf=10 ** rng.uniform(3, 5),
                kb=10 ** rng.uniform(2, 5),
                kd=10 ** rng.uniform(2, 5),
                receiver_radius=a,
                M=M,
                r_receptor=a * sqrt(4 * coverage / M),
            )
            c = derive_constants(p)
            if c.roots.separation < 1e-3:
                continue
            t = 10 ** rng.uniform(-6, -3, size=8)
            dist = a + rng.uniform(0.01, 20, size=8)
            with subtests.test(params=p):
                got = activation_probability(t, dist, p, c)
                assert np.all((got >= 0) & (got <= 1))


class TestTransientMean:
    def test_no_secretion(self):
        c = derive_constants(FAST)
        assert transient_mean(1e-3, 0, 1.0, FAST, c) == 0

    def test_linear_in_secretion_rate(self):
        c = derive_constants(FAST)
        one = transient_mean(2e-4, 1e3, 1.0, FAST, c)
        two = transient_mean(2e-4, 2e3, 1.0, FAST, c)
        assert two == pytest.approx(2 * one, rel=1e-12)

    def test_non_decreasing_in_time(self):
        c = derive_constants(FAST)
        means = [
            transient_mean(t, 1e3, 1.0, FAST, c)
            for t in [1e-5, 5e-5, 1e-4, 2.5e-4, 1e-3]
        ]
        assert means == sorted(means)

    @pytest.mark.parametrize("dist", [1, 2, 5])
    def test_approaches_steady_state(self, dist):
        c = derive_constants(FAST)
        long_run = transient_mean(1.0, 1.0, dist, FAST, c)
        assert long_run == pytest.approx(
            steady_state_mean_g(dist, FAST, c),
            rel=1e-3,
        )

    def test_negative_secretion(self):
        c = derive_constants(FAST)
        with pytest.raises(exceptions.OutOfDomain):
            transient_mean(1e-3, -1, 1.0, FAST, c)

    def test_without_steady_state(self):
        """
        Without degradation the mean still exists at finite times.
        """
        p = attrs.evolve(FAST, kd=0)
        c = derive_constants(p)
        assert transient_mean(1e-4, 1e3, 1.0, p, c) > 0


class TestSteadyStateMeanG:
    @pytest.mark.parametrize("params", [NS, FAST], ids=["table", "fast"])
    def test_matches_closed_form(self, params):
        c = derive_constants(params)
        dist = np.array([0.6, 1.0, 2.5, 10.0, 40.0])
        np.testing.assert_allclose(
            steady_state_mean_g(dist, params, c),
            closed_form_gain(dist, params, c),
            rtol=1e-7,
        )

    def test_fast_value(self):
        c = derive_constants(FAST)
        expected = (
            c.kf_star
            * exp(-0.5 * sqrt(1e4 / 5e3))
            / (4 * pi * sqrt(5e3) * 0.5 * 1.5e4 * (100 + sqrt(5e3) / 0.5))
        )
        assert steady_state_mean_g(1.0, FAST, c) == pytest.approx(expected)
        assert expected == pytest.approx(9.22e-7, rel=1e-3)

    def test_strictly_decreasing(self):
        c = derive_constants(NS)
        dist = np.linspace(0.51, 50, 200)
        assert np.all(np.diff(steady_state_mean_g(dist, NS, c)) < 0)

    def test_vanishes_far_away(self):
        c = derive_constants(FAST)
        assert steady_state_mean_g(1e3, FAST, c) < 1e-30

    def test_no_forward_reaction(self):
        p = attrs.evolve(NS, kf=0)
        assert steady_state_mean_g(1.0, p, derive_constants(p)) == 0

    def test_no_degradation(self):
        p = attrs.evolve(NS, kd=0)
        with pytest.raises(exceptions.SteadyStateUndefined):
            steady_state_mean_g(1.0, p, derive_constants(p))

    def test_no_release(self):
        p = attrs.evolve(NS, kb=0)
        with pytest.raises(exceptions.SteadyStateUndefined):
            closed_form_gain(1.0, p, derive_constants(p))

    def test_release_rate_lowers_the_asymptote(self):
        slow, fast = FAST, attrs.evolve(FAST, kb=1.5e5)
        assert steady_state_mean_g(
            1.0,
            fast,
            derive_constants(fast),
        ) < steady_state_mean_g(1.0, slow, derive_constants(slow))


class TestFCActivationProbability:
    def test_immediately(self):
        c = derive_constants(FC)
        assert fc_activation_probability(1e-9, 20.0, FC, c) < 1e-12

    def test_no_forward_reaction(self):
        p = attrs.evolve(FC, kf=0)
        c = derive_constants(p)
        assert fc_activation_probability(5e-3, 20.0, p, c) == 0

    def test_reference_network(self):
        c = derive_constants(FC)
        dist = float(np.linalg.norm([-30 - 5.0, -30 - 5.0, 0]))
        value = fc_activation_probability(5e-3, dist, FC, c)
        assert 0 < value < 1e-3

    def test_nonpositive_elapsed(self):
        c = derive_constants(FC)
        with pytest.raises(exceptions.OutOfDomain) as e:
            fc_activation_probability(0, 20.0, FC, c)
        assert e.value.name == "elapsed"


def test_pairwise_distances():
    got = pairwise_distances([[0, 0, 0], [3, 4, 0]], [[0, 0, 0]])
    np.testing.assert_array_equal(got, [[0], [5]])


class TestReactiveLink:
    def test_delegates(self):
        link = ReactiveLink.from_params(FAST)
        c = derive_constants(FAST)
        assert link.constants == c
        assert link.steady_state_gain(2.0) == steady_state_mean_g(2.0, FAST, c)
        assert link.activation_probability(1e-4, 2.0) == (
            activation_probability(1e-4, 2.0, FAST, c)
        )

    def test_gain_clamps_to_contact(self):
        link = ReactiveLink.from_params(FAST)
        at_contact = link.gain(0.5)
        np.testing.assert_array_equal(
            link.gain(np.array([0.0, 0.1, 0.5])),
            [at_contact] * 3,
        )
        assert at_contact == pytest.approx(
            closed_form_gain(0.5 + 1e-12, FAST, link.constants),
            rel=1e-9,
        )

    def test_gain_matches_roots(self):
        link = ReactiveLink.from_params(NS)
        assert link.gain(3.0) == pytest.approx(link.steady_state_gain(3.0))


class TestNetworkLayout:
    def layout(self, **kwargs):
        kwargs = {
            "target": (10, 10, 0),
            "sensors": [(0, 0, 0), (5, 0, 0)],
            "fusion_center": (-30, -30, 0),
            "sensor_radius": 0.5,
            "fusion_center_radius": 1.0,
            **kwargs,
        }
        return NetworkLayout(**kwargs)

    def test_distances(self):
        layout = self.layout()
        assert layout.K == 2
        np.testing.assert_allclose(
            layout.target_distances,
            [sqrt(200), sqrt(125)],
        )
        assert layout.fusion_center_distances[0] == pytest.approx(sqrt(1800))

    def test_arrays_are_read_only(self):
        layout = self.layout()
        with pytest.raises(ValueError, match="read-only"):
            layout.sensors[0, 0] = 1

    def test_sensor_inside_fusion_center(self):
        with pytest.raises(exceptions.InsideReceiver):
            self.layout(sensors=[(-30, -29.5, 0)])

    def test_target_inside_sensor(self):
        with pytest.raises(exceptions.InsideReceiver):
            self.layout(target=(0.2, 0, 0))

    def test_target_clearance_optional(self):
        layout = self.layout(target=(0.2, 0, 0), target_clearance=False)
        assert layout.target_distances[0] == pytest.approx(0.2)

    def test_spacing(self):
        with pytest.raises(exceptions.OutOfDomain):
            self.layout(sensors=[(0, 0, 0), (0.9, 0, 0)])

    def test_custom_spacing(self):
        layout = self.layout(sensors=[(0, 0, 0), (0.9, 0, 0)], min_spacing=0.5)
        assert layout.spacing == 0.5

    def test_with_target(self):
        layout = self.layout()
        moved = layout.with_target((-5, 0, 0))
        np.testing.assert_array_equal(moved.sensors, layout.sensors)
        assert moved.target_distances[0] == pytest.approx(5)

    def test_equality(self):
        assert self.layout() == self.layout()
        assert self.layout() != self.layout(target=(9, 9, 0))
