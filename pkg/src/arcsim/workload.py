"""Deterministic request-trace generation.

The generator is a pure function of (mix, seed). Randomness comes from
splitmix64 used counter-style: draw i of stream (seed, tag) is
splitmix64(seed ^ tag applied to counter i), so any draw is addressable
without sequencing and generation vectorizes cleanly. The algorithm
identifier recorded in reports is "splitmix64".

Key popularity is Zipfian: P(rank k) = k^-s / H(N, s). Keys are fixed-width
ASCII strings, values are deterministic pseudo-random bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import wirecodec as wc

PRNG_ID = "splitmix64"

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output for counter/state value x."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base: int, index: int) -> int:
    """Documented split rule for per-repetition seeds."""
    return splitmix64((base & _MASK) ^ splitmix64(index & _MASK))


def _splitmix_array(seed: int, tag: int, n: int) -> np.ndarray:
    """n independent u64 draws for stream (seed, tag)."""
    base = np.uint64(splitmix64((seed & _MASK) ^ splitmix64(tag & _MASK)))
    with np.errstate(over="ignore"):
        z = base + (np.arange(1, n + 1, dtype=np.uint64)) * np.uint64(_GOLDEN)
        z ^= z >> np.uint64(30)
        z *= np.uint64(0xBF58476D1CE4E5B9)
        z ^= z >> np.uint64(27)
        z *= np.uint64(0x94D049BB133111EB)
        z ^= z >> np.uint64(31)
    return z


def _uniform(seed: int, tag: int, n: int) -> np.ndarray:
    return _splitmix_array(seed, tag, n).astype(np.float64) / float(1 << 64)


def zipf_cdf(n: int, s: float) -> np.ndarray:
    """Cumulative Zipf(s) distribution over ranks 1..n."""
    weights = np.arange(1, n + 1, dtype=np.float64) ** -s
    cdf = np.cumsum(weights)
    return cdf / cdf[-1]


def deterministic_bytes(tag: int, n: int, ascii_only: bool = False) -> bytes:
    """n pseudo-random payload bytes fully determined by tag."""
    nwords = -(-n // 8)
    if nwords <= 32:
        # small payloads dominate; plain ints beat numpy setup cost here
        base = splitmix64((tag & _MASK) ^ splitmix64(0xB17E5))
        raw = b"".join(
            splitmix64((base + i * _GOLDEN) & _MASK).to_bytes(8, "little")
            for i in range(nwords))[:n]
        if ascii_only:
            raw = bytes(b % 64 + 48 for b in raw)
        return raw
    words = _splitmix_array(tag & _MASK, 0xB17E5, nwords)
    raw = words.astype("<u8", copy=False).view(np.uint8)[:n]
    if ascii_only:
        raw = raw % 64 + 48  # printable, digits upward
    return raw.tobytes()


class InvalidMix(ValueError):
    pass


@dataclass(frozen=True)
class WorkloadMix:
    service: str
    ratios: dict            # method name -> fraction, summing to 1
    key_size: int = 16
    value_size: int = 64
    text_size: int = 48     # post text payload
    list_length: int = 10   # posts returned by read_posts
    keyspace_n: int = 100_000
    zipf_s: float = 0.99
    request_count: int = 1000
    seed: int = 1

    def validate(self):
        total = sum(self.ratios.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidMix(f"ratios sum to {total}, not 1.0")
        if self.request_count <= 0:
            raise InvalidMix("request_count must be > 0")
        if min(self.ratios.values()) < 0:
            raise InvalidMix("negative ratio")


# Named presets: memcached SET/GET mixes with Zipfian keys, post storage
# write/read mixes, and the unique-id generator. memc_tiny/memc_small are
# the k8_v8 / k16_v32 size classes used by the throughput comparison
# profile; their SET ratio is set per comparison cell.
PRESETS = {
    "memc_low": WorkloadMix("memcached", {"set": 0.2, "get": 0.8}),
    "memc_mid": WorkloadMix("memcached", {"set": 0.5, "get": 0.5}),
    "memc_high": WorkloadMix("memcached", {"set": 0.8, "get": 0.2}),
    "memc_tiny": WorkloadMix("memcached", {"set": 0.5, "get": 0.5},
                             key_size=8, value_size=8),
    "memc_small": WorkloadMix("memcached", {"set": 0.5, "get": 0.5},
                              key_size=16, value_size=32),
    "post_low": WorkloadMix("post_storage",
                            {"store_post": 0.10, "read_post": 0.50,
                             "read_posts": 0.40}),
    "post_mid": WorkloadMix("post_storage",
                            {"store_post": 1 / 3, "read_post": 1 / 3,
                             "read_posts": 1 / 3}),
    "post_high": WorkloadMix("post_storage",
                             {"store_post": 0.90, "read_post": 0.05,
                              "read_posts": 0.05}),
    "unique_id": WorkloadMix("unique_id", {"compose_unique_id": 1.0}),
}


def preset(name: str, **overrides) -> WorkloadMix:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}")
    return replace(PRESETS[name], **overrides) if overrides else PRESETS[name]


@dataclass(frozen=True)
class RequestTrace:
    mix: WorkloadMix
    messages: tuple        # RpcMessage per request, seq_id == index
    arrival_offsets: tuple  # picoseconds, non-decreasing (0 = on demand)


def _key_string(rank: int, key_size: int) -> bytes:
    s = b"k%d" % rank
    if len(s) < key_size:
        s = s + b"x" * (key_size - len(s))
    return s[:key_size]


def generate(mix: WorkloadMix) -> RequestTrace:
    """Build the full request trace for a mix; bit-reproducible from
    (mix, seed)."""
    mix.validate()
    n = mix.request_count
    seed = mix.seed

    methods = sorted(mix.ratios)
    cum = np.cumsum([mix.ratios[m] for m in methods])
    op_pick = np.searchsorted(cum, _uniform(seed, 0x09, n), side="right")
    op_pick = np.minimum(op_pick, len(methods) - 1)

    zipf = zipf_cdf(mix.keyspace_n, mix.zipf_s)
    ranks = np.searchsorted(zipf, _uniform(seed, 0x11, n), side="right") + 1
    ids = _splitmix_array(seed, 0x22, n) >> np.uint64(1)  # fit in i64

    messages = []
    for i in range(n):
        method = methods[int(op_pick[i])]
        if mix.service == "memcached":
            key = _key_string(int(ranks[i]), mix.key_size)
            if method == "set":
                fields = {"key": key,
                          "value": deterministic_bytes(int(ids[i]), mix.value_size)}
            else:
                fields = {"key": key}
        elif mix.service == "post_storage":
            if method == "store_post":
                fields = {"post_id": int(ids[i]),
                          "text": deterministic_bytes(int(ids[i]) ^ 0x7E,
                                                      mix.text_size, ascii_only=True)}
            elif method == "read_post":
                fields = {"post_id": int(ids[i])}
            else:
                fields = {"user_id": int(ids[i])}
        else:  # unique_id: empty request body
            fields = {}
        messages.append(wc.RpcMessage(seq_id=i, method=method,
                                      direction=wc.DIR_REQUEST, fields=fields))
    return RequestTrace(mix=mix, messages=tuple(messages),
                        arrival_offsets=tuple([0] * n))


def offered_load(trace: RequestTrace, mode: str = "closed_loop",
                 rate_rps: float = 0.0, window: int = 16,
                 stagger_ns: float = 1000.0) -> dict:
    """Arrival schedule for a trace.

    closed_loop: ``window`` requests outstanding; a slot re-arms the moment
    its previous response transmits. fixed_rate: arrivals spaced 1/rate
    regardless of completions.
    """
    if mode == "closed_loop":
        if window < 1:
            raise InvalidMix("window must be >= 1")
        return {"mode": mode, "window": window,
                "stagger_ps": round(stagger_ns * 1000)}
    if mode == "fixed_rate":
        if rate_rps <= 0:
            raise InvalidMix("fixed_rate needs rate_rps > 0")
        spacing = round(1e12 / rate_rps)
        return {"mode": mode, "spacing_ps": spacing}
    raise InvalidMix(f"unknown load mode {mode!r}")
