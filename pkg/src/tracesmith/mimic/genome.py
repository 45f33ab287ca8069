"""Fixed-length integer genome over the emulator configuration space."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import ValidationError
from ..cipher import ContentMethod, MANDATORY_CIPHERS
from ..emulator.config import (BenignPersona, DelaySpec, EmulatorConfig, ORDERS, WRITE_METHODS)

CIPHERS = tuple(MANDATORY_CIPHERS)
CONTENT_KINDS = ("full", "first_n", "last_n", "segments")
SIZE_BINS = (512, 4096, 32768, 262144)          # first/last n, segment k
SKIP_BINS = (512, 4096, 32768, 262144)          # segment l
DELAY_KINDS = ("none", "static", "random")
DELAY_MS_BINS = (0, 50, 100, 250, 500, 1000, 2000)
SPREAD_MS_BINS = (0, 100, 250, 400, 1000)
BURST_BINS = (1, 2, 4, 8, 16)
WORKER_RANGE = tuple(range(1, 17))
MIX_BINS = (1.0, 0.75, 0.5, 0.25)               # share of campaign actions; 1.0 = pure campaign

GENES = (
    ("cipher", CIPHERS),
    ("content_kind", CONTENT_KINDS),
    ("content_size", SIZE_BINS),
    ("skip_size", SKIP_BINS),
    ("write_method", WRITE_METHODS),
    ("order", ORDERS),
    ("delay_kind", DELAY_KINDS),
    ("delay_ms", DELAY_MS_BINS),
    ("delay_spread", SPREAD_MS_BINS),
    ("burst", BURST_BINS),
    ("workers", WORKER_RANGE),
    ("mix_rate", MIX_BINS),
)
GENE_NAMES = tuple(name for name, _ in GENES)
DOMAIN_SIZES = np.array([len(d) for _, d in GENES], dtype=np.int64)
N_GENES = len(GENES)

DEFAULT_MIX_PERSONA = BenignPersona("fileserver", read_ratio=0.9, op_count=400, think_ms=60,
                                    think_jitter=0.8, name="benign-fileserver")

Genome = tuple  # tuple of N_GENES ints


def validate(g: Sequence[int]) -> tuple:
    g = tuple(int(x) for x in g)
    if len(g) != N_GENES:
        raise ValidationError(f"genome must have {N_GENES} genes, got {len(g)}")
    for (name, dom), v in zip(GENES, g):
        if not 0 <= v < len(dom):
            raise ValidationError(f"gene {name}={v} outside 0..{len(dom) - 1}")
    return g


def random_genome(rng: np.random.Generator) -> tuple:
    return tuple(int(rng.integers(n)) for n in DOMAIN_SIZES)


def decode(g: Sequence[int], base: Optional[EmulatorConfig] = None,
           mix_persona: BenignPersona = DEFAULT_MIX_PERSONA) -> EmulatorConfig:
    """Genome -> config, taking every field the genome does not cover from `base`."""
    g = validate(g)
    v = {name: dom[i] for (name, dom), i in zip(GENES, g)}
    base = base or EmulatorConfig(exclude=())
    kind = v["content_kind"]
    if kind == "full":
        method = ContentMethod.full()
    elif kind == "segments":
        method = ContentMethod.segments(v["content_size"], v["skip_size"])
    else:
        method = ContentMethod(kind, n=v["content_size"])
    if v["delay_kind"] == "none":
        delay = DelaySpec()
    elif v["delay_kind"] == "static":
        delay = DelaySpec.static(v["delay_ms"])
    else:
        delay = DelaySpec.random(v["delay_ms"], v["delay_ms"] + v["delay_spread"])
    mix = v["mix_rate"]
    return base.with_(
        cipher_id=v["cipher"], content_method=method, write_method=v["write_method"],
        order=v["order"], delay=delay, burst_files=v["burst"], workers=v["workers"],
        workload="ransomware" if mix == 1.0 else "mixed", mix_rate=mix if mix < 1.0 else base.mix_rate,
        persona=base.persona if mix == 1.0 else (base.persona or mix_persona))


def _index(domain, value, name) -> int:
    try:
        return domain.index(value)
    except ValueError:
        raise ValidationError(f"{name}={value!r} is outside the genome's bins") from None


def encode(config: EmulatorConfig) -> tuple:
    """Config -> genome; fields without a bin raise. Unused genes are set to 0."""
    m = config.content_method
    size = skip = 0
    if m.kind in ("first_n", "last_n"):
        size = _index(SIZE_BINS, m.n, "content n")
    elif m.kind == "segments":
        size = _index(SIZE_BINS, m.k, "segment k")
        skip = _index(SKIP_BINS, m.l, "segment l")
    d = config.delay
    dms = spread = 0
    if d.kind == "static":
        dms = _index(DELAY_MS_BINS, int(d.ms) if d.ms == int(d.ms) else d.ms, "delay ms")
    elif d.kind == "random":
        dms = _index(DELAY_MS_BINS, int(d.min_ms) if d.min_ms == int(d.min_ms) else d.min_ms, "delay min")
        spread = _index(SPREAD_MS_BINS, d.max_ms - d.min_ms, "delay spread")
    mix = 1.0 if config.workload == "ransomware" else config.mix_rate
    if config.workload == "benign":
        raise ValidationError("benign configs are outside the genome")
    return validate((
        _index(CIPHERS, config.cipher_id, "cipher"),
        CONTENT_KINDS.index(m.kind), size, skip,
        WRITE_METHODS.index(config.write_method), ORDERS.index(config.order),
        DELAY_KINDS.index(d.kind), dms, spread,
        _index(BURST_BINS, config.burst_files, "burst_files"),
        _index(WORKER_RANGE, config.workers, "workers"),
        _index(MIX_BINS, mix, "mix_rate"),
    ))


def canonical(g: Sequence[int]) -> tuple:
    """Zero the genes the decoded config ignores, so equal configs share one key."""
    g = list(validate(g))
    kind = CONTENT_KINDS[g[1]]
    if kind == "full":
        g[2] = g[3] = 0
    elif kind != "segments":
        g[3] = 0
    dk = DELAY_KINDS[g[6]]
    if dk == "none":
        g[7] = g[8] = 0
    elif dk == "static":
        g[8] = 0
    return tuple(g)


def mutate(g: Sequence[int], p: float, rng: np.random.Generator) -> tuple:
    """With probability p per gene, move it to a different value drawn uniformly from its domain.

    A hit always changes the gene, so the expected number of changed genes is p * N_GENES.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("mutation probability must be in [0, 1]")
    g = np.array(validate(g), dtype=np.int64)
    hit = rng.random(N_GENES) < p
    step = 1 + rng.integers(0, DOMAIN_SIZES - 1)
    g[hit] = (g[hit] + step[hit]) % DOMAIN_SIZES[hit]
    return tuple(int(x) for x in g)


def mutate_one(g: Sequence[int], rng: np.random.Generator) -> tuple:
    """Change exactly one gene to a different value of its domain."""
    g = list(validate(g))
    i = int(rng.integers(N_GENES))
    n = int(DOMAIN_SIZES[i])
    g[i] = (g[i] + 1 + int(rng.integers(n - 1))) % n
    return tuple(g)


def crossover(a: Sequence[int], b: Sequence[int], rng: np.random.Generator) -> tuple[tuple, tuple]:
    """Uniform crossover: each gene position swaps between the parents with probability 0.5."""
    a, b = validate(a), validate(b)
    swap = rng.random(N_GENES) < 0.5
    c1 = tuple(y if s else x for x, y, s in zip(a, b, swap))
    c2 = tuple(x if s else y for x, y, s in zip(a, b, swap))
    return c1, c2


def describe(g: Sequence[int]) -> dict:
    return {name: dom[i] for (name, dom), i in zip(GENES, validate(g))}
