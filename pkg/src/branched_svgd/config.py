"""Run configuration: TOML parsing, defaults, validation and named presets.

A config file is a TOML document. Missing keys take the defaults below;
unknown keys are rejected so typos surface as errors. Error messages carry
``path:line`` whenever the offending key can be located in the file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .branching import IntegerLaw, OffspringLaws
from .kernels import GaussianKernel
from .svgd import StepSchedule, SvgdConfig
from .targets import target_from_config


class ConfigError(ValueError):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(message)

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            where = f"{where}:{self.line}"
        return f"{where}: {self.message}"


DEFAULTS: dict = {
    "algorithm": "bsvgd",
    "seed": 0,
    "target": {"preset": "paper-gauss25"},
    "kernel": {"type": "gaussian", "bandwidth": 1.0},
    "svgd": {
        "max_iterations": 2000,
        "threshold": 1e-3,
        "snapshot_every": 0,
        "schedule": {"kind": "sigmoid", "e_start": 1.0, "e_end": 0.01},
        "initial": {"count": 500, "std": 1.0},
    },
    "bsvgd": {
        "max_population": 500,
        "precision": "one_over_ell",
        "final_refine": True,
        "initial": {"count": 1, "std": 1.0},
    },
    "branching": {
        "q_E": [[0, 0.5], [1, 0.2], [2, 0.3]],
        "q_S": [[1, 1 / 3], [2, 1 / 3], [3, 1 / 3]],
        "proposal_std": 2.0,
    },
    "metrics": {"enabled": True, "replicates": 10},
    "timing": {"clock": "wall"},
}

TARGET_KEYS = {"preset", "type", "means", "variance", "weights", "locations", "b", "dof"}

_GAUSS25 = """\
# Mixture of 25 Gaussians on {0,2,4,6,8}^2, variance 5 I.
algorithm = "%s"
seed = 0

[target]
preset = "paper-gauss25"

[kernel]
type = "gaussian"
bandwidth = 1.0

[svgd]
max_iterations = 2000
threshold = 1e-3
snapshot_every = %d

[svgd.schedule]
kind = "sigmoid"
e_start = 1.0
e_end = 0.01

[svgd.initial]
count = 500
std = 1.0

[bsvgd]
max_population = 500
precision = "one_over_ell"

[bsvgd.initial]
count = 1
std = 1.0

[branching]
q_E = [[0, 0.5], [1, 0.2], [2, 0.3]]
q_S = [[1, 0.3333333333333333], [2, 0.3333333333333333], [3, 0.3333333333333333]]
proposal_std = 2.0

[metrics]
enabled = true
replicates = 10
"""

_BANANA3 = """\
# Mixture of 3 banana-shaped t distributions. dof = 7 is a chosen default.
algorithm = "%s"
seed = 0

[target]
preset = "paper-banana3"
dof = 7.0

[kernel]
type = "gaussian"
bandwidth = 1.0

[svgd]
max_iterations = 2000
threshold = 1e-3
snapshot_every = %d

[svgd.schedule]
kind = "sigmoid"
e_start = 10.0
e_end = 1.0

[svgd.initial]
count = 500
std = 1.0

[bsvgd]
max_population = 500
precision = "one_over_ell"

[bsvgd.initial]
count = 1
std = 1.0

[branching]
q_E = [[0, 0.5], [1, 0.2], [2, 0.3]]
q_S = [[1, 0.3333333333333333], [2, 0.3333333333333333], [3, 0.3333333333333333]]
proposal_std = 5.0

[metrics]
enabled = true
replicates = 10
"""

PRESET_CONFIGS = {
    "paper-gauss25-bsvgd": _GAUSS25 % ("bsvgd", 0),
    "paper-gauss25-svgd": _GAUSS25 % ("svgd", 50),
    "paper-banana3-bsvgd": _BANANA3 % ("bsvgd", 0),
    "paper-banana3-svgd": _BANANA3 % ("svgd", 50),
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "target":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _locate(text: str | None, dotted: str) -> int | None:
    """Line number (1-based) where ``dotted`` is assigned, if it can be found."""
    if not text:
        return None
    parts = dotted.split(".")
    table: list[str] = []
    header = re.compile(r"^\s*\[([^\[\]]+)\]\s*(#.*)?$")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        m = header.match(raw)
        if m:
            table = [p.strip().strip('"') for p in m.group(1).split(".")]
            if table == parts:
                return lineno
            continue
        m = re.match(r"^\s*([A-Za-z0-9_.\"-]+)\s*=", raw)
        if m:
            key = [p.strip().strip('"') for p in m.group(1).split(".")]
            full = table + key
            if full == parts or (len(full) < len(parts) and parts[: len(full)] == full):
                return lineno
    return None


@dataclass
class RunConfig:
    """Validated run configuration plus the objects built from it."""

    raw: dict
    source: str | None = None
    text: str | None = None

    def __post_init__(self):
        self.raw = _merge(DEFAULTS, self.raw)
        self._validate()

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{key}: {message}", self.source, _locate(self.text, key))

    def _check_keys(self, given: dict, schema: dict, prefix: str = "") -> None:
        for key, value in given.items():
            dotted = f"{prefix}{key}"
            if key not in schema:
                raise self.error(dotted, "unknown key")
            if isinstance(schema[key], dict) and key != "target":
                if not isinstance(value, dict):
                    raise self.error(dotted, "expected a table")
                self._check_keys(value, schema[key], dotted + ".")

    def _validate(self) -> None:
        raw = self.raw
        self._check_keys(raw, DEFAULTS)
        if raw["algorithm"] not in ("svgd", "bsvgd"):
            raise self.error("algorithm", f"expected 'svgd' or 'bsvgd', got {raw['algorithm']!r}")
        seed = raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise self.error("seed", "must be an unsigned 64-bit integer")
        if not isinstance(raw["target"], dict):
            raise self.error("target", "expected a table")
        extra = set(raw["target"]) - TARGET_KEYS
        if extra:
            key = sorted(extra)[0]
            raise self.error(f"target.{key}", "unknown key")
        if raw["kernel"]["type"] != "gaussian":
            raise self.error("kernel.type", "only 'gaussian' is supported")
        if raw["bsvgd"]["precision"] != "one_over_ell" and not _is_number(raw["bsvgd"]["precision"]):
            raise self.error("bsvgd.precision", "expected 'one_over_ell' or a positive number")
        if raw["timing"]["clock"] not in ("wall", "work"):
            raise self.error("timing.clock", "expected 'wall' or 'work'")
        for key in ("svgd.snapshot_every", "svgd.max_iterations", "svgd.initial.count",
                    "bsvgd.initial.count", "bsvgd.max_population", "metrics.replicates"):
            value = self.get(key)
            if not isinstance(value, int) or isinstance(value, bool):
                raise self.error(key, "expected an integer")
        if self.get("svgd.snapshot_every") < 0:
            raise self.error("svgd.snapshot_every", "must be >= 0")
        if self.get("metrics.replicates") < 1:
            raise self.error("metrics.replicates", "must be >= 1")
        for key in ("svgd.threshold", "svgd.schedule.e_start", "kernel.bandwidth", "branching.proposal_std",
                    "svgd.initial.std", "bsvgd.initial.std"):
            if not _is_number(self.get(key)) or not self.get(key) > 0:
                raise self.error(key, "must be a positive number")
        if "e_end" in self.get("svgd.schedule") and not _is_number(self.get("svgd.schedule.e_end")):
            raise self.error("svgd.schedule.e_end", "must be a number")
        # Build everything once so that value errors surface here with a line.
        for key, build in (("target", lambda: self.target()), ("kernel", lambda: self.kernel()),
                           ("svgd", lambda: self.svgd_config()), ("branching", lambda: self.laws())):
            try:
                build()
            except ConfigError:
                raise
            except (ValueError, TypeError, KeyError, IndexError) as exc:
                raise self.error(key, str(exc)) from None
        if self.algorithm == "bsvgd":
            if self.get("bsvgd.initial.count") < 1:
                raise self.error("bsvgd.initial.count", "must be >= 1")
            if self.get("bsvgd.max_population") < self.get("bsvgd.initial.count"):
                raise self.error("bsvgd.max_population", "must be >= bsvgd.initial.count")
            if _is_number(raw["bsvgd"]["precision"]) and not raw["bsvgd"]["precision"] > 0:
                raise self.error("bsvgd.precision", "must be positive")
        if self.algorithm == "svgd" and self.get("svgd.initial.count") < 1:
            raise self.error("svgd.initial.count", "must be >= 1")

    def get(self, dotted: str):
        node = self.raw
        for part in dotted.split("."):
            node = node[part]
        return node

    @property
    def algorithm(self) -> str:
        return self.raw["algorithm"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def target(self):
        return target_from_config(self.raw["target"])

    def kernel(self) -> GaussianKernel:
        return GaussianKernel(float(self.get("kernel.bandwidth")), self.target().dimension)

    def svgd_config(self) -> SvgdConfig:
        sch = self.get("svgd.schedule")
        m = self.get("svgd.max_iterations")
        extra = set(sch) - {"kind", "e_start", "e_end"}
        if extra:
            raise self.error(f"svgd.schedule.{sorted(extra)[0]}", "unknown key")
        if sch["kind"] == "constant":
            schedule = StepSchedule.constant(float(sch["e_start"]))
        else:
            schedule = StepSchedule(sch["kind"], float(sch["e_start"]), float(sch["e_end"]), m)
        return SvgdConfig(schedule, m, float(self.get("svgd.threshold")), self.kernel())

    def laws(self) -> OffspringLaws:
        b = self.raw["branching"]
        try:
            q_e = IntegerLaw.from_pairs(b["q_E"])
        except (ValueError, TypeError) as exc:
            raise self.error("branching.q_E", str(exc)) from None
        try:
            q_s = IntegerLaw.from_pairs(b["q_S"])
        except (ValueError, TypeError) as exc:
            raise self.error("branching.q_S", str(exc)) from None
        try:
            return OffspringLaws(q_E=q_e, q_S=q_s, proposal_std=float(b["proposal_std"]))
        except ValueError as exc:
            key = "branching.q_S" if "q_S" in str(exc) else "branching.proposal_std"
            raise self.error(key, str(exc)) from None

    def precision(self):
        value = self.get("bsvgd.precision")
        if value == "one_over_ell":
            from .bsvgd import precision_default

            return precision_default
        return lambda ell, _v=float(value): _v

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def with_overrides(self, overrides: dict) -> "RunConfig":
        merged = copy.deepcopy(self.raw)
        for dotted, value in overrides.items():
            node = merged
            parts = dotted.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"{dotted}: cannot override inside a non-table value", "<override>")
            node[parts[-1]] = value
        try:
            return RunConfig(merged, self.source, self.text)
        except ConfigError as exc:
            if exc.line is None and exc.source == self.source:
                exc.source = "<override>"
            raise


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"\(at line (\d+), column \d+\)", msg)
        line = int(m.group(1)) if m else None
        raise ConfigError(re.sub(r"\s*\(at line.*\)", "", msg), source, line) from None
    return RunConfig(raw, source, text)


def load_config(path_or_preset: str) -> RunConfig:
    """Load a config file, or an embedded preset by name (``.toml`` suffix optional)."""
    path = Path(path_or_preset)
    if path.is_file():
        return parse_config_text(path.read_text(), str(path))
    name = path.name[:-5] if path.name.endswith(".toml") else path.name
    if name in PRESET_CONFIGS:
        return parse_config_text(PRESET_CONFIGS[name], f"preset:{name}")
    raise ConfigError(
        f"no such config file or preset; presets are {', '.join(sorted(PRESET_CONFIGS))}",
        str(path_or_preset),
    )


def parse_override(item: str) -> tuple[str, object]:
    """``section.key=value`` with the value read as a TOML value (bare words become strings)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value", "<override>")
    key, value = item.split("=", 1)
    key, value = key.strip(), value.strip()
    try:
        parsed = tomllib.loads(f"v = {value}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value
    return key, parsed
