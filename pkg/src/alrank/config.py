"""Run configuration files (TOML) with explicit defaults.

Sections mirror the config dataclasses: ``[synth]`` (SynthConfig),
``[al]`` (ALConfig scalars), ``[committee]`` (CommitteeConfig) and
``[ranker]`` (TrainConfig of the production ranker).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import tomli
import tomli_w

from .committee import CommitteeConfig
from .dataset import SynthConfig
from .gbrank import TrainConfig
from .simulator import ALConfig, _default_ranker

# Fixed offsets deriving subsystem seeds from the single run seed.
COMMITTEE_SEED_OFFSET = 100
RANKER_SEED_OFFSET = 200

_AL_SCALARS = tuple(
    f.name for f in fields(ALConfig) if f.name not in ("committee", "ranker")
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfigFile:
    synth: SynthConfig = field(default_factory=SynthConfig)
    al: ALConfig = field(default_factory=ALConfig)

    def to_dict(self) -> dict:
        synth = asdict(self.synth)
        synth["bucket_label_profile"] = [list(r) for r in self.synth.bucket_label_profile]
        al = self.al.to_dict()
        committee = al.pop("committee")
        ranker = al.pop("ranker")
        return {"synth": synth, "al": al, "committee": committee, "ranker": ranker}

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def with_seed(self, seed: int) -> "RunConfigFile":
        """Set the run seed and derive committee/ranker seeds from it."""
        al = replace(
            self.al,
            seed=seed,
            committee=replace(self.al.committee, seed=seed + COMMITTEE_SEED_OFFSET),
            ranker=replace(self.al.ranker, seed=seed + RANKER_SEED_OFFSET),
        )
        return replace(self, al=al)


def _check_keys(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def from_dict(d: dict) -> RunConfigFile:
    """Build a config from nested sections; missing keys take defaults."""
    _check_keys("top level", d, ("synth", "al", "committee", "ranker"))
    synth_d = dict(d.get("synth", {}))
    al_d = dict(d.get("al", {}))
    com_d = dict(d.get("committee", {}))
    rank_d = dict(d.get("ranker", {}))
    _check_keys("synth", synth_d, [f.name for f in fields(SynthConfig)])
    _check_keys("al", al_d, _AL_SCALARS)
    _check_keys("committee", com_d, [f.name for f in fields(CommitteeConfig)])
    _check_keys("ranker", rank_d, [f.name for f in fields(TrainConfig)])
    try:
        if "bucket_label_profile" in synth_d:
            synth_d["bucket_label_profile"] = tuple(tuple(r) for r in synth_d["bucket_label_profile"])
        synth = SynthConfig(**synth_d)
        committee = CommitteeConfig(**com_d)
        ranker = TrainConfig(**{**asdict(_default_ranker()), **rank_d})
        al = ALConfig(**al_d, committee=committee, ranker=ranker)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfigFile(synth, al)


def loads(text: str) -> RunConfigFile:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return from_dict(data)


def load(path) -> RunConfigFile:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def merge(base: RunConfigFile, overrides: dict) -> RunConfigFile:
    """Apply ``{section: {key: value}}`` overrides on top of ``base``."""
    d = base.to_dict()
    for section, values in overrides.items():
        d.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})
    return from_dict(d)
