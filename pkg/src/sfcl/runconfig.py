"""Strict JSON run configuration.

One document keys every module config. Unknown keys fail fast, naming the
offending key, so a misspelled hyperparameter can never silently fall back
to its default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import UsageError
from .fusion import FaaeConfig, HcmaConfig
from .local_branch import CnnfConfig, SbcmConfig
from .model import DetectorConfig
from .spatial import BackboneConfig
from .synth import SynthConfig
from .train import TrainConfig

_SECTIONS = {
    "sbcm": SbcmConfig,
    "cnnf": CnnfConfig,
    "backbone": BackboneConfig,
    "faae": FaaeConfig,
    "hcma": HcmaConfig,
    "train": TrainConfig,
    "synth": SynthConfig,
}


@dataclass
class RunConfig:
    sbcm: SbcmConfig = field(default_factory=SbcmConfig)
    cnnf: CnnfConfig = field(default_factory=CnnfConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    faae: FaaeConfig = field(default_factory=FaaeConfig)
    hcma: HcmaConfig = field(default_factory=HcmaConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def detector_config(self, use_sbcm: bool = True, fusion_mode: str = "hierarchical",
                        use_sida_gate: bool = True, precision: str = "single",
                        init_seed: int = 0) -> DetectorConfig:
        return DetectorConfig(backbone=self.backbone, sbcm=self.sbcm, cnnf=self.cnnf,
                              faae=self.faae, hcma=self.hcma, use_sbcm=use_sbcm,
                              fusion_mode=fusion_mode, use_sida_gate=use_sida_gate,
                              precision=precision, init_seed=init_seed)


def _build_section(name: str, cls, doc: dict):
    allowed = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in allowed:
            raise UsageError(f"unknown config key '{name}.{key}' "
                             f"(known: {sorted(allowed)})")
        f = allowed[key]
        if isinstance(value, list) and (f.type == "tuple" or isinstance(f.default, tuple)):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    return cls(**kwargs)


def run_config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise UsageError("run config must be a JSON object")
    sections = {}
    for key, value in doc.items():
        if key not in _SECTIONS:
            raise UsageError(f"unknown config key '{key}' (known: {sorted(_SECTIONS)})")
        if not isinstance(value, dict):
            raise UsageError(f"config section '{key}' must be a JSON object")
        sections[key] = _build_section(key, _SECTIONS[key], value)
    return RunConfig(**sections)


def load_run_config(path: Optional[str]) -> RunConfig:
    """Read a config file; None yields all defaults."""
    if path is None:
        return RunConfig()
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    return run_config_from_dict(doc)
