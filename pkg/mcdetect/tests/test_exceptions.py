import itertools

import pytest

from mcdetect import (
    ExperimentConfig,
    NetworkLayout,
    ReactionChannelParams,
    exceptions,
)


def pairs(choices):
    return itertools.combinations(choices, 2)


thunks = (
    lambda: exceptions.ErfcxOverflow(z=-30 + 0j),
    lambda: exceptions.OutOfDomain(name="t", value=-1.0, constraint="t > 0"),
    lambda: exceptions.DegenerateRoots(roots=(1j, 1j, -2 + 0j), separation=0),
    lambda: exceptions.ImaginaryResidue(value=1 + 1j, tolerance=1e-12),
    lambda: exceptions.ProbabilityOutOfRange(value=1.25, tolerance=1e-9),
    lambda: exceptions.QuadratureDidNotConverge(
        upper=1.0,
        estimate=0.5,
        error=0.1,
        message="roundoff",
    ),
    lambda: exceptions.SteadyStateUndefined(reason="kd = 0"),
    lambda: exceptions.InsideReceiver(distance=0.005, radius=0.01),
    lambda: exceptions.DegenerateTransitionProbability(indices=(0, 2)),
    lambda: exceptions.NoSignalGeometry(candidates=16),
    lambda: exceptions.PlacementFailed(placed=3, requested=4, attempts=10),
    lambda: exceptions.InvalidConfiguration(problems=("noise.zeta0: bad",)),
)


@pytest.mark.parametrize("one, two", pairs(each() for each in thunks))
def test_eq_incompatible_types(one, two):
    assert one != two


@pytest.mark.parametrize("thunk", thunks)
def test_hash(thunk):
    assert thunk() in {thunk()}


@pytest.mark.parametrize("thunk", thunks)
def test_str(thunk):
    assert str(thunk())


def test_eq_compares_fields():
    one = exceptions.PlacementFailed(placed=3, requested=4, attempts=10)
    assert one == exceptions.PlacementFailed(
        placed=3,
        requested=4,
        attempts=10,
    )
    assert one != exceptions.PlacementFailed(
        placed=2,
        requested=4,
        attempts=10,
    )


def test_invalid_configuration_lists_every_problem():
    error = exceptions.InvalidConfiguration(problems=("a: bad", "b: worse"))
    assert str(error) == (
        "invalid configuration (2 problems):\n  - a: bad\n  - b: worse"
    )


def test_placement_failed_is_a_runtime_error():
    with pytest.raises(RuntimeError):
        raise exceptions.PlacementFailed(placed=0, requested=1, attempts=1)


@pytest.mark.parametrize(
    "cls",
    [
        ExperimentConfig,
        NetworkLayout,
        ReactionChannelParams,
        exceptions.OutOfDomain,
        exceptions.PlacementFailed,
    ],
)
def test_nonsubclassable(cls):
    with pytest.raises(Exception, match="(?i)subclassing"):

        class Boom(cls):  # pragma: no cover
            pass
