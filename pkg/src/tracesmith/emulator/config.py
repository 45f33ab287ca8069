"""Emulator configuration: campaign parameters and benign personas."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from .. import ValidationError
from ..cipher.content import ContentMethod
from ..cipher.registry import CipherError, DEFAULT_REGISTRY, canonical_name
from ..config_io import load_mapping, save_mapping
from ..vdev.clock import ClockParams

WORKLOADS = ("ransomware", "benign", "mixed")
ORDERS = ("name", "mtime", "ctime", "size", "random")
WRITE_METHODS = ("overwrite", "shred_then_copy", "copy_then_shred")
DELAY_KINDS = ("none", "static", "random")
DEFAULT_EXCLUDE = (".so", ".dll", ".exe", ".msi", ".log")

PERSONA_KINDS = ("compressor", "converter", "fileserver", "log_appender")
CODECS = ("deflate-zip", "gzip", "bzip2-like", "xz-like", "zstd-like", "lz4-like")
TRANSFORMS = ("recompress", "base64-wrap", "csv-normalize")


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


@dataclass(frozen=True)
class DelaySpec:
    kind: str = "none"
    ms: float = 0.0
    min_ms: float = 0.0
    max_ms: float = 0.0

    def __post_init__(self):
        _check(self.kind in DELAY_KINDS, f"delay kind must be one of {DELAY_KINDS}")
        _check(min(self.ms, self.min_ms, self.max_ms) >= 0, "delays must be non-negative")
        if self.kind == "random":
            _check(self.max_ms >= self.min_ms, "random delay needs max_ms >= min_ms")

    @classmethod
    def none(cls) -> "DelaySpec":
        return cls()

    @classmethod
    def static(cls, ms: float) -> "DelaySpec":
        return cls("static", ms=float(ms))

    @classmethod
    def random(cls, min_ms: float, max_ms: float) -> "DelaySpec":
        return cls("random", min_ms=float(min_ms), max_ms=float(max_ms))

    def draw(self, rng) -> float:
        if self.kind == "static":
            return self.ms
        if self.kind == "random":
            return float(rng.uniform(self.min_ms, self.max_ms))
        return 0.0

    def mean_ms(self) -> float:
        return {"none": 0.0, "static": self.ms,
                "random": (self.min_ms + self.max_ms) / 2}[self.kind]


@dataclass(frozen=True)
class AutoAdjust:
    enabled: bool = False
    target_load_fraction: float = 0.5
    sample_period_ms: float = 1000.0

    def __post_init__(self):
        _check(0 < self.target_load_fraction <= 1, "target_load_fraction must be in (0, 1]")
        _check(self.sample_period_ms > 0, "sample_period_ms must be positive")


@dataclass(frozen=True)
class BenignPersona:
    """A benign workload generator.

    compressor: archives groups of `files_per_archive` corpus files.
    converter: rewrites each file through a byte-level transform.
    fileserver: `op_count` whole-file requests, reads with `read_ratio`.
    log_appender: `op_count` appends of `append_bytes` to one growing log.
    `think_ms` paces consecutive operations.
    """

    kind: str = "fileserver"
    codec: str = "gzip"
    level: int = 6
    files_per_archive: int = 8
    workers: int = 1
    transform: str = "base64-wrap"
    read_ratio: float = 0.9
    op_count: int = 500
    append_bytes: int = 1024
    think_ms: float = 0.0
    think_jitter: float = 0.0
    name: str = ""

    def __post_init__(self):
        _check(self.kind in PERSONA_KINDS, f"persona kind must be one of {PERSONA_KINDS}")
        _check(self.codec in CODECS, f"codec must be one of {CODECS}")
        _check(self.transform in TRANSFORMS, f"transform must be one of {TRANSFORMS}")
        _check(self.op_count >= 1, "op_count must be >= 1")
        _check(self.files_per_archive >= 1, "files_per_archive must be >= 1")
        _check(self.workers >= 1, "persona workers must be >= 1")
        _check(0.0 <= self.read_ratio <= 1.0, "read_ratio must be in [0, 1]")
        _check(self.append_bytes >= 1, "append_bytes must be >= 1")
        _check(self.think_ms >= 0 and 0 <= self.think_jitter <= 1, "bad pacing parameters")

    @property
    def label(self) -> str:
        return self.name or f"benign-{self.kind}"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenignPersona":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad persona: {exc}") from None


@dataclass(frozen=True)
class EmulatorConfig:
    """Full campaign configuration.

    `max_virtual_s` caps the modeled campaign length; files not started
    before the cap are left untouched and counted as not attempted.
    """

    workload: str = "ransomware"
    mix_rate: float = 0.5
    persona: Optional[BenignPersona] = None
    target_dirs: tuple[str, ...] = (".",)
    order: str = "name"
    include: tuple[str, ...] = ()
    exclude: tuple[str, ...] = DEFAULT_EXCLUDE
    cipher_id: str = "AES-256-CBC"
    content_method: ContentMethod = field(default_factory=ContentMethod.full)
    write_method: str = "overwrite"
    delay: DelaySpec = field(default_factory=DelaySpec)
    burst_files: int = 1
    per_file_timeout_ms: Optional[float] = None
    custom_extension: str = ".tsmx"
    workers: int = 1
    auto_adjust: AutoAdjust = field(default_factory=AutoAdjust)
    seed: int = 0
    max_virtual_s: Optional[float] = None
    metadata: bool = True
    label: str = ""
    clock: ClockParams = field(default_factory=ClockParams)

    def __post_init__(self):
        _check(self.workload in WORKLOADS, f"workload must be one of {WORKLOADS}")
        _check(0.0 <= self.mix_rate <= 1.0, "mixed rate must be in [0, 1]")
        _check(self.order in ORDERS, f"order must be one of {ORDERS}")
        _check(self.write_method in WRITE_METHODS, f"write_method must be one of {WRITE_METHODS}")
        _check(self.workers >= 1, "workers must be >= 1")
        _check(self.burst_files >= 1, "burst_files must be >= 1")
        _check(bool(self.target_dirs), "at least one target directory is needed")
        _check(self.per_file_timeout_ms is None or self.per_file_timeout_ms > 0,
               "per_file_timeout_ms must be positive")
        _check(self.max_virtual_s is None or self.max_virtual_s > 0, "max_virtual_s must be positive")
        _check(not self.custom_extension or self.custom_extension.startswith("."),
               "custom_extension must start with '.'")
        _check("/" not in self.custom_extension, "custom_extension cannot contain '/'")
        if self.workload in ("benign", "mixed"):
            _check(self.persona is not None, f"{self.workload} workload needs a persona")
        try:
            name = canonical_name(self.cipher_id)
            DEFAULT_REGISTRY.get(name)
        except CipherError as exc:
            raise ValidationError(str(exc)) from None
        object.__setattr__(self, "cipher_id", name)
        object.__setattr__(self, "target_dirs", tuple(self.target_dirs))
        object.__setattr__(self, "include", tuple(self.include))
        object.__setattr__(self, "exclude", tuple(self.exclude))

    @property
    def class_label(self) -> str:
        if self.label:
            return self.label
        if self.workload == "benign":
            return self.persona.label
        return "ransomware"

    def with_(self, **kw) -> "EmulatorConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = {
            "workload": self.workload, "mix_rate": self.mix_rate,
            "target_dirs": list(self.target_dirs), "order": self.order,
            "include": list(self.include), "exclude": list(self.exclude),
            "cipher_id": self.cipher_id, "content_method": self.content_method.to_dict(),
            "write_method": self.write_method, "delay": asdict(self.delay),
            "burst_files": self.burst_files, "per_file_timeout_ms": self.per_file_timeout_ms,
            "custom_extension": self.custom_extension, "workers": self.workers,
            "auto_adjust": asdict(self.auto_adjust), "seed": self.seed,
            "max_virtual_s": self.max_virtual_s, "metadata": self.metadata, "label": self.label,
            "clock": self.clock.to_dict(),
        }
        if self.persona is not None:
            d["persona"] = self.persona.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EmulatorConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "content_method" in d:
                d["content_method"] = ContentMethod.from_dict(d["content_method"])
            if "delay" in d:
                d["delay"] = DelaySpec(**d["delay"])
            if "auto_adjust" in d:
                d["auto_adjust"] = AutoAdjust(**d["auto_adjust"])
            if d.get("persona") is not None:
                d["persona"] = BenignPersona.from_dict(d["persona"])
            if "clock" in d:
                d["clock"] = ClockParams.from_dict(d["clock"])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"bad emulator config: {exc}") from None


def load_config(path) -> EmulatorConfig:
    data = load_mapping(path)
    return EmulatorConfig.from_dict(data.get("emulator", data))


def save_config(config: EmulatorConfig, path) -> None:
    save_mapping({"emulator": config.to_dict()}, path)
