"""
Experiment configuration files.

Configuration is TOML with one table per concern and one canonical key per
parameter. A file is first flattened into a table keyed by
``"section.key"``, on which command line overrides are applied, and only
then validated, so that every problem can be reported at once.
"""

from __future__ import annotations

from enum import Enum
from importlib import resources
from typing import TYPE_CHECKING, Any
import logging
import tomllib

from attrs import field
from rpds import HashTrieMap

from mcdetect import exceptions
from mcdetect._attrs import frozen
from mcdetect.channel import ReactionChannelParams
from mcdetect.detection import NoiseModel, Thresholds, select_tau1, select_tau2
from mcdetect.experiments import (
    DecisionModel,
    ExperimentConfig,
    ParticleSettings,
    TopologyMode,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping
    from pathlib import Path

logger = logging.getLogger(__name__)

#: A flattened configuration file.
Table = HashTrieMap[str, Any]


class Required(Enum):
    """
    Marks a key which has no default.
    """

    REQUIRED = "required"

    def __repr__(self) -> str:
        return "<required>"


REQUIRED = Required.REQUIRED


def _is_number(value: Any) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_list_of(check: Callable[[Any], bool], value: Any) -> bool:
    return isinstance(value, list) and all(check(each) for each in value)


class Kind(Enum):
    """
    The shapes a configuration value may take.
    """

    FLOAT = "a number"
    INT = "an integer"
    FLOATS = "a list of numbers"
    INTS = "a list of integers"
    VECTOR = "a list of 3 numbers"
    FLOAT_OR_FLOATS = "a number or a list of numbers"
    CHOICE = "a string"

    def accepts(self, value: Any) -> bool:
        match self:
            case Kind.FLOAT:
                return _is_number(value)
            case Kind.INT:
                return _is_int(value)
            case Kind.FLOATS:
                return _is_list_of(_is_number, value) and bool(value)
            case Kind.INTS:
                return _is_list_of(_is_int, value) and bool(value)
            case Kind.VECTOR:
                return _is_list_of(_is_number, value) and len(value) == 3
            case Kind.FLOAT_OR_FLOATS:
                return _is_number(value) or (
                    _is_list_of(_is_number, value) and bool(value)
                )
            case Kind.CHOICE:
                return isinstance(value, str)


class Bound(Enum):
    """
    Ranges a numeric value (or each entry of a list of them) must lie in.
    """

    POSITIVE = "> 0"
    NON_NEGATIVE = ">= 0"
    OPEN_UNIT = "in (0, 1)"
    HALF_OPEN_UNIT = "in (0, 1]"

    def contains(self, value: float) -> bool:
        match self:
            case Bound.POSITIVE:
                return value > 0
            case Bound.NON_NEGATIVE:
                return value >= 0
            case Bound.OPEN_UNIT:
                return 0 < value < 1
            case Bound.HALF_OPEN_UNIT:
                return 0 < value <= 1


@frozen
class Key:
    """
    One configuration key: its shape, unit, default and meaning.

    A default of `None` means the key is optional and has no value unless
    given.
    """

    name: str
    kind: Kind
    unit: str
    description: str
    default: Any = REQUIRED
    bound: Bound | None = None
    choices: tuple[str, ...] = field(default=(), converter=tuple)

    @property
    def section(self) -> str:
        return self.name.partition(".")[0]

    @property
    def short_name(self) -> str:
        return self.name.partition(".")[2]

    @property
    def required(self) -> bool:
        return self.default is REQUIRED

    def problem(self, value: Any) -> str | None:
        """
        What is wrong with ``value`` for this key, if anything.
        """
        if not self.kind.accepts(value):
            return f"{self.name}: expected {self.kind.value}, got {value!r}"
        if self.choices and value not in self.choices:
            return (
                f"{self.name}: expected one of {self.choices}, "
                f"got {value!r}"
            )
        if self.bound is not None:
            entries = value if isinstance(value, list) else [value]
            if not all(self.bound.contains(each) for each in entries):
                return (
                    f"{self.name}: must be {self.bound.value}, got {value!r}"
                )
        return None


def _link_keys(section: str, description: str) -> list[Key]:
    return [
        Key(
            f"{section}.D",
            Kind.FLOAT,
            "μm²/s",
            f"diffusion coefficient ({description})",
            bound=Bound.POSITIVE,
        ),
        Key(
            f"{section}.kf",
            Kind.FLOAT,
            "μm³/s",
            f"receptor binding rate ({description})",
            bound=Bound.NON_NEGATIVE,
        ),
        Key(
            f"{section}.kb",
            Kind.FLOAT,
            "1/s",
            f"receptor unbinding rate ({description})",
            bound=Bound.NON_NEGATIVE,
        ),
        Key(
            f"{section}.kd",
            Kind.FLOAT,
            "1/s",
            f"degradation rate of free molecules ({description})",
            bound=Bound.NON_NEGATIVE,
        ),
        Key(
            f"{section}.receiver_radius",
            Kind.FLOAT,
            "μm",
            f"radius of the receiver ({description})",
            bound=Bound.POSITIVE,
        ),
        Key(
            f"{section}.M",
            Kind.FLOAT,
            "",
            f"number of receptors on the receiver ({description})",
            bound=Bound.NON_NEGATIVE,
        ),
        Key(
            f"{section}.r_receptor",
            Kind.FLOAT,
            "μm",
            f"receptor radius ({description})",
            bound=Bound.NON_NEGATIVE,
        ),
    ]


_KEYS: tuple[Key, ...] = (
    *_link_keys("ns_link", "target to sensor"),
    *_link_keys("fc_link", "sensor to fusion center"),
    Key(
        "noise.zeta0",
        Kind.FLOAT,
        "molecules",
        "mean environmental count at each sensor",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "noise.zeta_k",
        Kind.FLOAT_OR_FLOATS,
        "molecules",
        "mean environmental count per fusion center receptor type",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "thresholds.tau1",
        Kind.INT,
        "molecules",
        "sensor count threshold (or give omega1)",
        default=None,
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "thresholds.tau2",
        Kind.INT,
        "molecules",
        "sensor to fusion center count threshold (or give omega2_link)",
        default=None,
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "thresholds.omega1",
        Kind.FLOAT,
        "",
        "false alarm bound at each sensor, selects tau1",
        default=None,
        bound=Bound.HALF_OPEN_UNIT,
    ),
    Key(
        "thresholds.omega2_link",
        Kind.FLOAT,
        "",
        "false alarm bound on each link to the fusion center, selects tau2",
        default=None,
        bound=Bound.HALF_OPEN_UNIT,
    ),
    Key(
        "network.K",
        Kind.INT,
        "",
        "number of sensors",
        bound=Bound.POSITIVE,
    ),
    Key(
        "network.edge",
        Kind.FLOAT,
        "μm",
        "edge of the square sensors are scattered over",
        bound=Bound.POSITIVE,
    ),
    Key(
        "network.fusion_center",
        Kind.VECTOR,
        "μm",
        "position of the fusion center",
    ),
    Key(
        "network.min_spacing",
        Kind.FLOAT,
        "μm",
        "minimum distance between sensor centers (twice their radius)",
        default=None,
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "network.placement_attempts",
        Kind.INT,
        "",
        "positions drawn before sensor placement gives up",
        default=100_000,
        bound=Bound.POSITIVE,
    ),
    Key(
        "network.topology",
        Kind.CHOICE,
        "",
        "redraw sensors every trial (resample) or once per run (fixed); "
        "resample rebuilds every candidate's transition probabilities "
        "for each trial, so it costs grid.per_axis^2 * grid.mu_points * K "
        "Poisson tails per trial",
        default=TopologyMode.RESAMPLE.value,
        choices=[each.value for each in TopologyMode],
    ),
    Key("scenario.x_T", Kind.VECTOR, "μm", "position of the target"),
    Key(
        "scenario.mu",
        Kind.FLOATS,
        "molecules/s",
        "secretion rates of the target, one scenario each",
        bound=Bound.POSITIVE,
    ),
    Key(
        "signaling.N",
        Kind.FLOAT,
        "molecules",
        "molecules a sensor releases when it detects the target",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "signaling.T1",
        Kind.FLOAT,
        "s",
        "end of the sensing period",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "signaling.T2",
        Kind.FLOAT,
        "s",
        "end of the signaling period, when the fusion center decides",
        bound=Bound.POSITIVE,
    ),
    Key(
        "trials.calibration",
        Kind.INT,
        "",
        "target-absent trials used to calibrate thresholds",
        bound=Bound.POSITIVE,
    ),
    Key(
        "trials.evaluation",
        Kind.INT,
        "",
        "trials per hypothesis used to estimate error probabilities",
        bound=Bound.POSITIVE,
    ),
    Key(
        "trials.batch_size",
        Kind.INT,
        "",
        "trials per independently seeded batch",
        default=100,
        bound=Bound.POSITIVE,
    ),
    Key(
        "trials.decisions",
        Kind.CHOICE,
        "",
        "simulate both counting stages (cascade) or draw bits directly",
        default=DecisionModel.CASCADE.value,
        choices=[each.value for each in DecisionModel],
    ),
    Key(
        "roc.pfa_targets",
        Kind.FLOATS,
        "",
        "false alarm probabilities to calibrate for",
        bound=Bound.OPEN_UNIT,
    ),
    Key(
        "sweep.K",
        Kind.INTS,
        "",
        "numbers of sensors to sweep over",
        bound=Bound.POSITIVE,
    ),
    Key(
        "sweep.pfa",
        Kind.FLOAT,
        "",
        "false alarm probability held fixed while sweeping",
        bound=Bound.OPEN_UNIT,
    ),
    Key(
        "sweep.mu",
        Kind.FLOAT,
        "molecules/s",
        "secretion rate while sweeping",
        bound=Bound.POSITIVE,
    ),
    Key(
        "grid.per_axis",
        Kind.INT,
        "",
        "candidate positions along each side of the square",
        default=16,
        bound=Bound.POSITIVE,
    ),
    Key(
        "grid.mu_points",
        Kind.INT,
        "",
        "candidate secretion rates, up to twice the scenario's",
        default=100,
        bound=Bound.POSITIVE,
    ),
    Key(
        "particles.dt",
        Kind.FLOAT,
        "s",
        "time step when checking the mean",
        bound=Bound.POSITIVE,
    ),
    Key(
        "particles.trials",
        Kind.INT,
        "",
        "independent simulations per unbinding rate",
        bound=Bound.POSITIVE,
    ),
    Key(
        "particles.sample_times",
        Kind.FLOATS,
        "s",
        "times at which the mean is compared",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "particles.mu",
        Kind.FLOAT,
        "molecules/s",
        "release rate when checking the mean",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "particles.distance",
        Kind.FLOAT,
        "μm",
        "distance from the source to the receiver center",
        bound=Bound.POSITIVE,
    ),
    Key(
        "particles.kb_values",
        Kind.FLOATS,
        "1/s",
        "unbinding rates to simulate",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "particles.poisson_dt",
        Kind.FLOAT,
        "s",
        "time step when checking the Poisson approximation",
        bound=Bound.POSITIVE,
    ),
    Key(
        "particles.poisson_mu",
        Kind.FLOAT,
        "molecules/s",
        "release rate when checking the Poisson approximation",
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "particles.batch_size",
        Kind.INT,
        "",
        "simulations run side by side in one batch",
        default=50,
        bound=Bound.POSITIVE,
    ),
    Key(
        "run.seed",
        Kind.INT,
        "",
        "master seed every random stream derives from",
        default=0,
        bound=Bound.NON_NEGATIVE,
    ),
    Key(
        "run.workers",
        Kind.INT,
        "",
        "worker processes",
        default=1,
        bound=Bound.POSITIVE,
    ),
)

_SCHEMA: HashTrieMap[str, Key] = HashTrieMap({key.name: key for key in _KEYS})

#: Keys whose value cannot change any output.
EXECUTION_KEYS = frozenset({"run.workers"})


def config_schema() -> list[Key]:
    """
    Every key a configuration file may set, in file order.
    """
    return list(_KEYS)


def default_text() -> str:
    """
    The bundled default configuration.
    """
    return resources.files("mcdetect").joinpath("default.toml").read_text()


def flatten(document: Mapping[str, Any]) -> tuple[Table, list[str]]:
    """
    Flatten a parsed TOML document into a table keyed by ``section.key``.

    Also returns the structural problems found along the way.
    """
    table: Table = HashTrieMap()
    problems: list[str] = []
    for section, contents in document.items():
        if not isinstance(contents, dict):
            problems.append(f"{section}: key outside of any section")
            continue
        for name, value in contents.items():
            if isinstance(value, dict):
                problems.append(f"{section}.{name}: sections do not nest")
                continue
            table = table.insert(f"{section}.{name}", value)
    return table, problems


def _literal(text: str) -> Any:
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def override(table: Table, assignment: str) -> Table:
    """
    Apply one ``section.key=value`` assignment.

    The value is read as a TOML literal, or as a bare string if it is not
    one.
    """
    name, equals, text = assignment.partition("=")
    name = name.strip()
    if not equals or "." not in name:
        raise exceptions.InvalidConfiguration(
            problems=(f"override {assignment!r} is not section.key=value",),
        )
    return table.insert(name, _literal(text.strip()))


def parse_table(text: str, overrides: Iterable[str] = ()) -> Table:
    """
    Parse and flatten a configuration file, then apply ``overrides``.
    """
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as error:
        raise exceptions.InvalidConfiguration(problems=(f"syntax: {error}",))
    table, problems = flatten(document)
    if problems:
        raise exceptions.InvalidConfiguration(problems=tuple(problems))
    for assignment in overrides:
        table = override(table, assignment)
    return table


def _values(table: Table) -> tuple[dict[str, Any], list[str]]:
    problems = [
        f"{name}: unknown key"
        for name in sorted(table.keys())
        if name not in _SCHEMA
    ]
    values: dict[str, Any] = {}
    for key in _KEYS:
        value = table.get(key.name, key.default)
        if value is REQUIRED:
            problems.append(f"{key.name}: missing ({key.description})")
            continue
        if value is None:
            continue
        problem = key.problem(value)
        if problem is None:
            values[key.name] = value
        else:
            problems.append(problem)
    return values, problems


def _section(values: Mapping[str, Any], section: str) -> dict[str, Any]:
    prefix = f"{section}."
    return {
        name.removeprefix(prefix): value
        for name, value in values.items()
        if name.startswith(prefix)
    }


def _build(problems: list[str], where: str, build: Callable[[], Any]) -> Any:
    try:
        return build()
    except (ValueError, TypeError) as error:
        problems.append(f"{where}: {error}")


def _thresholds(values: Mapping[str, Any], noise: NoiseModel) -> Thresholds:
    given = _section(values, "thresholds")
    chosen: dict[str, int] = {}
    for tau, omega, select, zeta in [
        ("tau1", "omega1", select_tau1, noise.zeta0),
        ("tau2", "omega2_link", select_tau2, float(max(noise.zeta_k))),
    ]:
        if tau in given and omega in given:
            raise ValueError(f"give either {tau} or {omega}, not both")
        if tau in given:
            chosen[tau] = given[tau]
        elif omega in given:
            chosen[tau] = select(given[omega], zeta)
        else:
            raise ValueError(f"missing {tau} (or {omega})")
    return Thresholds(**chosen)


def _failed_sections(table: Table, values: Mapping[str, Any]) -> set[str]:
    return {
        key.section
        for key in _KEYS
        if key.name not in values
        and table.get(key.name, key.default) is not None
    }


def from_table(table: Table) -> ExperimentConfig:
    """
    Validate a flattened configuration.

    Raises `InvalidConfiguration` listing every problem found. Each record
    is built once the keys of its own section are valid, so its problems
    are reported together with those of every other section.
    """
    values, problems = _values(table)
    failed = _failed_sections(table, values)

    def record(section: str, build: Callable[[], Any]) -> Any:
        if section in failed:
            return None
        return _build(problems, section, build)

    ns_link = record(
        "ns_link",
        lambda: ReactionChannelParams(**_section(values, "ns_link")),
    )
    fc_link = record(
        "fc_link",
        lambda: ReactionChannelParams(**_section(values, "fc_link")),
    )
    noise = record("noise", lambda: NoiseModel(**_section(values, "noise")))
    thresholds = None
    if noise is not None:
        thresholds = record("thresholds", lambda: _thresholds(values, noise))
    particles = record(
        "particles",
        lambda: ParticleSettings(**_section(values, "particles")),
    )
    if problems:
        raise exceptions.InvalidConfiguration(problems=tuple(problems))

    config = _build(
        problems,
        "experiment",
        lambda: ExperimentConfig(
            ns_link=ns_link,
            fc_link=fc_link,
            noise=noise,
            thresholds=thresholds,
            K=values["network.K"],
            edge=values["network.edge"],
            x_T=values["scenario.x_T"],
            fusion_center=values["network.fusion_center"],
            min_spacing=values.get("network.min_spacing"),
            placement_attempts=values["network.placement_attempts"],
            topology=TopologyMode(values["network.topology"]),
            mus=values["scenario.mu"],
            N=values["signaling.N"],
            T1=values["signaling.T1"],
            T2=values["signaling.T2"],
            calibration_trials=values["trials.calibration"],
            evaluation_trials=values["trials.evaluation"],
            batch_size=values["trials.batch_size"],
            decisions=DecisionModel(values["trials.decisions"]),
            pfa_targets=values["roc.pfa_targets"],
            sweep_k=values["sweep.K"],
            sweep_pfa=values["sweep.pfa"],
            sweep_mu=values["sweep.mu"],
            grid_per_axis=values["grid.per_axis"],
            mu_points=values["grid.mu_points"],
            particles=particles,
            seed=values["run.seed"],
            workers=values["run.workers"],
        ),
    )
    if config is None:
        raise exceptions.InvalidConfiguration(problems=tuple(problems))
    logger.debug("validated %d configuration keys", len(values))
    return config


def parse_config(
    text: str,
    overrides: Iterable[str] = (),
) -> ExperimentConfig:
    """
    Parse and validate a configuration file.
    """
    return from_table(parse_table(text, overrides))


def load(
    path: Path | None = None,
    overrides: Iterable[str] = (),
) -> ExperimentConfig:
    """
    Load a configuration file, or the bundled defaults.
    """
    text = default_text() if path is None else path.read_text()
    return parse_config(text, overrides)
