"""Labeled synthetic measurement campaigns with planted adversaries.

Each VP draws from its own seeded generator, so output depends only on the
config and seed and not on generation order.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import yaml

from .ingest.profiles import KnownSiteList, PatternProfile, default_known_sites, default_profile
from .model import (
    DNS_INTERVAL,
    LETTERS,
    ROOT_LETTERS,
    TRACEROUTE_INTERVAL,
    WINDOW_SECONDS,
    Classification,
    DnsObservation,
    Mechanism,
    Observation,
    Outcome,
    PingObservation,
    TracerouteObservation,
    VantagePoint,
    Verdict,
    check_schedule,
)
from .validate import DEFAULT_QNAME, DEFAULT_QUERY_TYPE, ServerLogRecord

ADVERSARY_KINDS = ("honest", "overt_proxy", "overt_injector", "anycast_hijacker", "covert_delayer", "flapper")
IMPAIRMENT_KINDS = ("timeout_query_lost", "timeout_reply_lost", "stale_prefix")
JITTER_MODELS = ("laplace", "normal", "symmetric", "none")
QUERIES_PER_WINDOW = WINDOW_SECONDS // DNS_INTERVAL

# hostname.bind formats that satisfy the bundled profile
ID_TEMPLATES = {
    "A": "nnn1-{site}{n}",
    "B": "b{n}-{site}",
    "C": "{site}{n}a.c.root-servers.org",
    "D": "{site}{n}a.d.root-servers.org",
    "E": "{n}.{site}.e.root-servers.org",
    "F": "{site}{n}a.f.root-servers.org",
    "G": "groot-{site}{n}",
    "H": "{n:03d}.{site}.h.root-servers.org",
    "I": "s{n}.{site}",
    "J": "rootns-{site}{n}",
    "K": "ns{n}.{site}.k.ripe.net",
    "L": "{site}-{n:02d}.l.root",
    "M": "m-{site}-{n}",
}


class SimulationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Distribution:
    """fixed | uniform | normal | cycle. ``cycle`` hands values out in VP order."""

    kind: str = "fixed"
    params: Mapping[str, Any] = field(default_factory=dict)

    @classmethod
    def parse(cls, raw: Any) -> "Distribution":
        if isinstance(raw, (int, float)):
            return cls("fixed", {"value": float(raw)})
        if not isinstance(raw, Mapping) or "dist" not in raw:
            raise SimulationConfigError(f"bad distribution {raw!r}")
        kind = raw["dist"]
        params = {k: v for k, v in raw.items() if k != "dist"}
        need = {"fixed": ("value",), "uniform": ("low", "high"), "normal": ("mean", "sd"), "cycle": ("values",)}
        if kind not in need:
            raise SimulationConfigError(f"unknown distribution {kind!r}")
        missing = [p for p in need[kind] if p not in params]
        if missing:
            raise SimulationConfigError(f"{kind} distribution needs {missing}")
        if kind == "uniform" and params["low"] > params["high"]:
            raise SimulationConfigError("uniform low > high")
        if kind == "cycle" and not params["values"]:
            raise SimulationConfigError("cycle distribution needs at least one value")
        return cls(kind, params)

    def draw(self, rng: np.random.Generator, index: int = 0) -> float:
        p = self.params
        if self.kind == "fixed":
            return float(p["value"])
        if self.kind == "uniform":
            return float(rng.uniform(p["low"], p["high"]))
        if self.kind == "normal":
            return float(rng.normal(p["mean"], p["sd"]))
        values = p["values"]
        return float(values[index % len(values)])


@dataclass(frozen=True)
class AdversaryModel:
    kind: str
    spoof_server_id: Union[str, tuple[str, ...], None] = None
    added_delay: Optional[Distribution] = None
    affected_letters: frozenset[str] = frozenset(LETTERS)
    drop_query: bool = False
    spoof_rtt: Optional[Distribution] = None
    mimic: bool = False
    flap_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self) -> None:
        if self.kind not in ADVERSARY_KINDS:
            raise SimulationConfigError(f"unknown adversary kind {self.kind!r}")
        if self.kind == "overt_proxy" and not self.drop_query:
            raise SimulationConfigError("overt_proxy drops the query")
        if self.kind in ("overt_injector", "covert_delayer", "anycast_hijacker") and self.drop_query:
            raise SimulationConfigError(f"{self.kind} does not drop the query")
        if self.kind in ("overt_proxy", "overt_injector", "anycast_hijacker", "flapper"):
            if not self.mimic and not self.spoof_server_id:
                raise SimulationConfigError(f"{self.kind} needs spoof_server_id")
        if self.kind == "covert_delayer" and self.added_delay is None:
            raise SimulationConfigError("covert_delayer needs added_delay")
        if not self.affected_letters <= set(LETTERS):
            raise SimulationConfigError("affected_letters must be a subset of A-M")
        if len(self.flap_weights) != 3 or not math.isclose(sum(self.flap_weights), 1.0):
            raise SimulationConfigError("flap_weights (spoof, authentic, timeout) must sum to 1")

    def spoof_id_for(self, index: int) -> Optional[str]:
        if isinstance(self.spoof_server_id, tuple):
            return self.spoof_server_id[index % len(self.spoof_server_id)]
        return self.spoof_server_id

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> "AdversaryModel":
        kind = raw.get("kind")
        sid = raw.get("spoof_server_id")
        if isinstance(sid, list):
            sid = tuple(str(s) for s in sid)
        letters = raw.get("affected_letters")
        return cls(
            kind=kind,
            spoof_server_id=sid,
            added_delay=Distribution.parse(raw["added_delay"]) if "added_delay" in raw else None,
            affected_letters=frozenset(letters) if letters else frozenset(LETTERS),
            drop_query=bool(raw.get("drop_query", kind in ("overt_proxy",))),
            spoof_rtt=Distribution.parse(raw["spoof_rtt"]) if "spoof_rtt" in raw else None,
            mimic=bool(raw.get("mimic", False)),
            flap_weights=tuple(raw.get("flap_weights", (1 / 3, 1 / 3, 1 / 3))),
        )


@dataclass(frozen=True)
class Assignment:
    """One population slice: an adversary model or an impairment, by count or share."""

    model: Optional[AdversaryModel]
    impairment: Optional[str]
    count: Optional[int] = None
    share: Optional[float] = None

    @property
    def label(self) -> str:
        return self.impairment or self.model.kind


@dataclass(frozen=True)
class SiteTopology:
    """Per letter: site codes, penultimate hop per site."""

    sites: Mapping[str, tuple[str, ...]]
    hops: Mapping[str, Mapping[str, str]]

    @classmethod
    def from_known_sites(cls, known: KnownSiteList, max_sites: int = 20) -> "SiteTopology":
        sites, hops = {}, {}
        for li, letter in enumerate(LETTERS):
            codes = tuple(sorted(known.sites[letter]))[:max_sites] or ("xxx",)
            sites[letter] = codes
            hops[letter] = {s: f"198.18.{li}.{si + 1}" for si, s in enumerate(codes)}
        return cls(sites, hops)

    def server_id(self, letter: str, site: str, n: int) -> str:
        return ID_TEMPLATES[letter].format(site=site, n=n)


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    n_vps: int
    schedule: tuple[int, ...]
    letters: tuple[str, ...] = LETTERS
    population: tuple[Assignment, ...] = ()
    base_rtt: Distribution = Distribution("uniform", {"low": 5.0, "high": 80.0})
    jitter_model: str = "symmetric"
    jitter_mad: float = 1.5
    dns_loss: float = 0.0
    ping_loss: float = 0.0
    catchment_change: float = 0.0
    star_hop: float = 0.0
    logged_letters: frozenset[str] = frozenset({"B"})
    countries: Mapping[str, float] = field(default_factory=lambda: {"US": 0.4, "DE": 0.3, "FR": 0.2, "NL": 0.1})
    n_asns: int = 500
    topology: Optional[SiteTopology] = None

    def __post_init__(self) -> None:
        if self.n_vps < 1:
            raise SimulationConfigError("n_vps must be positive")
        if not self.schedule:
            raise SimulationConfigError("schedule is empty")
        check_schedule(self.schedule)
        if not set(self.letters) <= set(LETTERS):
            raise SimulationConfigError("letters must be a subset of A-M")
        if self.jitter_model not in JITTER_MODELS:
            raise SimulationConfigError(f"jitter model must be one of {JITTER_MODELS}")
        if self.jitter_mad < 0:
            raise SimulationConfigError("jitter MAD cannot be negative")
        for name in ("dns_loss", "ping_loss", "catchment_change", "star_hop"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimulationConfigError(f"{name} must be a probability")
        if any(w < 0 for w in self.countries.values()) or not sum(self.countries.values()) > 0:
            raise SimulationConfigError("country weights must be non-negative and not all zero")
        counted = sum(a.count for a in self.population if a.count is not None)
        shares = [a.share for a in self.population if a.share is not None]
        if counted > self.n_vps:
            raise SimulationConfigError(f"explicit counts ({counted}) exceed n_vps ({self.n_vps})")
        if any(s < 0 for s in shares):
            raise SimulationConfigError("shares cannot be negative")
        has_honest = any(a.model is not None and a.model.kind == "honest" and a.share is not None for a in self.population)
        total = sum(shares)
        if total > 1 + 1e-9 or (has_honest and not math.isclose(total, 1.0, abs_tol=1e-9)):
            raise SimulationConfigError(f"assignment probabilities must sum to 1 (got {total:.6f})")

    @property
    def resolved_topology(self) -> SiteTopology:
        return self.topology or SiteTopology.from_known_sites(default_known_sites())


def _parse_schedule(raw: Any) -> tuple[int, ...]:
    if isinstance(raw, list):
        return tuple(int(x) for x in raw)
    if not isinstance(raw, Mapping):
        raise SimulationConfigError("schedule must be a list of hour starts or a mapping")
    start = raw.get("start", 1588500000)
    if isinstance(start, str):
        start = int(datetime.fromisoformat(start.replace("Z", "+00:00")).astimezone(timezone.utc).timestamp())
    elif isinstance(start, datetime):
        start = int(start.replace(tzinfo=start.tzinfo or timezone.utc).timestamp())
    spacing = int(raw.get("spacing_hours", 1)) * WINDOW_SECONDS
    return tuple(int(start) + k * spacing for k in range(int(raw.get("n_hours", 1))))


def config_from_mapping(raw: Mapping[str, Any]) -> ScenarioConfig:
    try:
        population = []
        for entry in raw.get("population", []) or []:
            entry = dict(entry)
            count, share = entry.pop("count", None), entry.pop("share", None)
            if (count is None) == (share is None):
                raise SimulationConfigError(f"population entry needs exactly one of count/share: {entry}")
            if entry.get("kind") in IMPAIRMENT_KINDS:
                assign = Assignment(None, entry["kind"], count, share)
            else:
                assign = Assignment(AdversaryModel.from_mapping(entry), None, count, share)
            population.append(assign)
        jitter = raw.get("jitter", {}) or {}
        topology = None
        if raw.get("max_sites") is not None:
            topology = SiteTopology.from_known_sites(default_known_sites(), int(raw["max_sites"]))
        kwargs = dict(
            seed=int(raw["seed"]),
            n_vps=int(raw["n_vps"]),
            schedule=_parse_schedule(raw.get("schedule", {})),
            letters=tuple(raw.get("letters", LETTERS)),
            population=tuple(population),
            jitter_model=jitter.get("model", "symmetric"),
            jitter_mad=float(jitter.get("mad", 1.5)),
            dns_loss=float(raw.get("dns_loss", 0.0)),
            ping_loss=float(raw.get("ping_loss", 0.0)),
            catchment_change=float(raw.get("catchment_change", 0.0)),
            star_hop=float(raw.get("star_hop", 0.0)),
            logged_letters=frozenset(raw.get("logged_letters", ["B"])),
            n_asns=int(raw.get("n_asns", 500)),
            topology=topology,
        )
        if "base_rtt" in raw:
            kwargs["base_rtt"] = Distribution.parse(raw["base_rtt"])
        if "countries" in raw:
            kwargs["countries"] = {str(k).upper(): float(v) for k, v in raw["countries"].items()}
        return ScenarioConfig(**kwargs)
    except KeyError as exc:
        raise SimulationConfigError(f"missing config field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SimulationConfigError):
            raise
        raise SimulationConfigError(str(exc)) from None


def load_config(source: Union[str, Path]) -> ScenarioConfig:
    raw = yaml.safe_load(Path(source).read_text(encoding="utf-8"))
    if not isinstance(raw, Mapping):
        raise SimulationConfigError("scenario file must hold a mapping")
    return config_from_mapping(raw)


def preset_names() -> list[str]:
    folder = resources.files("spoofwatch").joinpath("data", "presets")
    return sorted(p.name[: -len(".yaml")] for p in folder.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ScenarioConfig:
    text = resources.files("spoofwatch").joinpath("data", "presets", f"{name}.yaml").read_text(encoding="utf-8")
    return config_from_mapping(yaml.safe_load(text))


@dataclass(frozen=True)
class TruthLabel:
    vp_id: str
    letter: str
    window_start: int
    kind: str
    classification: Classification
    mechanism: Optional[Mechanism] = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.vp_id, self.letter, self.window_start)

    def to_record(self) -> dict[str, Any]:
        return {
            "vp_id": self.vp_id,
            "letter": self.letter,
            "window_start": self.window_start,
            "kind": self.kind,
            "classification": self.classification.value,
            "mechanism": self.mechanism.value if self.mechanism else None,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "TruthLabel":
        mech = rec.get("mechanism")
        return cls(
            rec["vp_id"],
            rec["letter"],
            int(rec["window_start"]),
            rec["kind"],
            Classification(rec["classification"]),
            Mechanism(mech) if mech else None,
        )


@dataclass
class Scenario:
    vantage_points: list[VantagePoint]
    observations: list[Observation]
    server_logs: list[ServerLogRecord]
    truth: list[TruthLabel]
    schedule: tuple[int, ...]

    @property
    def vp_index(self) -> dict[str, VantagePoint]:
        return {vp.vp_id: vp for vp in self.vantage_points}


def apportion(config: ScenarioConfig) -> list[Assignment]:
    """Exact slice sizes: explicit counts first, then shares by largest remainder."""
    counted = [a for a in config.population if a.count is not None]
    shared = [a for a in config.population if a.share is not None]
    rest = config.n_vps - sum(a.count for a in counted)
    exact = [a.share * rest for a in shared]
    sizes = [math.floor(x) for x in exact]
    order = sorted(range(len(shared)), key=lambda i: (-(exact[i] - sizes[i]), i))
    leftover = round(sum(exact)) - sum(sizes)
    for i in order[:leftover]:
        sizes[i] += 1
    slots: list[Assignment] = []
    for a in counted:
        slots.extend([a] * a.count)
    for a, n in zip(shared, sizes):
        slots.extend([a] * n)
    honest = Assignment(AdversaryModel("honest"), None)
    slots.extend([honest] * (config.n_vps - len(slots)))
    return slots


def _jitter(config: ScenarioConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    m = config.jitter_mad
    if config.jitter_model == "none" or m == 0:
        return np.zeros(n)
    if config.jitter_model == "symmetric":
        # evenly spread offsets: median exactly 0 and MAD exactly m when n is odd
        half = n // 2
        offs = np.arange(-half, n - half) * (m / 4.0)
        return rng.permutation(offs)
    if config.jitter_model == "laplace":
        return rng.laplace(0.0, m / math.log(2), n)
    return rng.normal(0.0, m / 0.6744897501960817, n)


def _rtt(x: float) -> float:
    return round(max(float(x), 0.1), 3)


def _vp_prefix(i: int, first_octet: int = 10) -> str:
    return f"{first_octet}.{(i >> 8) & 255}.{i & 255}.0/24"


class _Emitter:
    def __init__(self, config: ScenarioConfig, topology: SiteTopology):
        self.config = config
        self.topology = topology
        self.obs: list[Observation] = []
        self.logs: list[ServerLogRecord] = []
        self.truth: list[TruthLabel] = []

    def log(self, letter: str, ts: int, prefix: str, rng: np.random.Generator) -> None:
        if letter in self.config.logged_letters:
            skew = int(rng.integers(0, 3))
            self.logs.append(ServerLogRecord(ts + skew, prefix, DEFAULT_QUERY_TYPE, DEFAULT_QNAME, letter))

    def trace(self, vp_id, letter, ts, vp_i, penultimate, rng) -> TracerouteObservation:
        star = self.config.star_hop
        hops = [
            (1, "192.168.1.1"),
            (2, None if rng.random() < star else f"172.16.{(vp_i >> 8) & 255}.{vp_i & 255}"),
            (3, None if rng.random() < star else f"198.51.100.{LETTERS.index(letter) + 1}"),
            (4, penultimate),
            (5, ROOT_LETTERS[letter].service_address),
        ]
        return TracerouteObservation(vp_id, letter, ts, tuple(hops), True)


def _generate_vp(config, topology, emitter, i, assignment, kind_index, vp: VantagePoint, log_prefix):
    rng = np.random.default_rng([config.seed, i])
    model = assignment.model
    offset = int(rng.integers(0, DNS_INTERVAL))
    trace_offset = int(rng.integers(0, DNS_INTERVAL))
    delay = model.added_delay.draw(rng, kind_index) if model is not None and model.added_delay else 0.0
    spoof_id = model.spoof_id_for(kind_index) if model is not None else None
    hijack_hop = f"203.0.113.{1 + kind_index % 254}"

    for letter in config.letters:
        sites = topology.sites[letter]
        site = sites[int(rng.integers(0, len(sites)))]
        alt_site = sites[int(rng.integers(0, len(sites)))]
        base = round(config.base_rtt.draw(rng), 2)
        alt_base = round(config.base_rtt.draw(rng), 2)
        n_srv = int(rng.integers(1, 9))
        legit_id = topology.server_id(letter, site, n_srv)
        alt_id = topology.server_id(letter, alt_site, n_srv)
        mimic_id = topology.server_id(letter, sites[int(rng.integers(0, len(sites)))], int(rng.integers(1, 9)))
        affected = model is not None and model.kind != "honest" and letter in model.affected_letters
        kind = (assignment.impairment or model.kind) if (affected or assignment.impairment) else "honest"
        spoof_rtt_dist = model.spoof_rtt if model is not None else None
        # a rogue anycast site answers DNS and ICMP alike
        hijack_rtt = round(spoof_rtt_dist.draw(rng) if spoof_rtt_dist else float(rng.uniform(5, 30)), 2)

        for start in config.schedule:
            times = [start + offset + DNS_INTERVAL * k for k in range(QUERIES_PER_WINDOW)]
            dns_jit = _jitter(config, rng, len(times))
            ping_jit = _jitter(config, rng, len(times))
            switch_at = (
                int(rng.integers(1, len(times))) if rng.random() < config.catchment_change else len(times)
            )
            n_spoof = n_answer = n_timeout = 0
            logged_any = False
            for k, ts in enumerate(times):
                on_alt = k >= switch_at
                sid, b = (alt_id, alt_base) if on_alt else (legit_id, base)
                outcome = "authentic"
                if kind == "flapper":
                    outcome = ("spoof", "authentic", "timeout")[int(rng.choice(3, p=model.flap_weights))]
                elif kind in ("overt_proxy", "overt_injector", "anycast_hijacker"):
                    outcome = "spoof"
                elif kind in ("timeout_query_lost", "timeout_reply_lost"):
                    outcome = "timeout"
                lost = outcome != "timeout" and rng.random() < config.dns_loss

                if outcome == "spoof":
                    ident = mimic_id if model.mimic else spoof_id
                    if kind == "anycast_hijacker":
                        rtt = hijack_rtt + dns_jit[k]
                    else:
                        rtt = (spoof_rtt_dist.draw(rng) if spoof_rtt_dist else float(rng.uniform(0.5, 3.0))) + dns_jit[k]
                    reaches = kind == "overt_injector"
                elif outcome == "authentic":
                    ident = sid
                    rtt = b + dns_jit[k] + (delay if kind == "covert_delayer" and delay > 0 else 0.0)
                    reaches = True
                else:
                    ident, rtt = None, None
                    reaches = kind == "timeout_reply_lost"

                if reaches:
                    emitter.log(letter, ts, log_prefix, rng)
                    logged_any = True
                if outcome == "timeout" or lost:
                    emitter.obs.append(DnsObservation(vp.vp_id, letter, ts, Outcome.TIMEOUT))
                    n_timeout += 1
                else:
                    emitter.obs.append(DnsObservation(vp.vp_id, letter, ts, Outcome.ANSWERED, ident, _rtt(rtt)))
                    n_answer += 1
                    n_spoof += outcome == "spoof"

                # ping follows the catchment too
                pb = hijack_rtt if kind == "anycast_hijacker" else b
                if kind == "covert_delayer" and delay < 0:
                    pb = b - delay
                ping = None if rng.random() < config.ping_loss else _rtt(pb + ping_jit[k])
                if ROOT_LETTERS[letter].icmp_responsive:
                    emitter.obs.append(PingObservation(vp.vp_id, letter, ts, ping))

            penult = hijack_hop if kind == "anycast_hijacker" else topology.hops[letter][site]
            for k in range(WINDOW_SECONDS // TRACEROUTE_INTERVAL):
                ts = start + trace_offset + TRACEROUTE_INTERVAL * k
                emitter.obs.append(emitter.trace(vp.vp_id, letter, ts, i, penult, rng))

            mech = None
            if n_spoof:
                cls = Classification.OVERT_SPOOFED
                mech = {
                    "overt_injector": Mechanism.INJECTION,
                    "anycast_hijacker": Mechanism.ANYCAST,
                }.get(kind, Mechanism.PROXY)
            elif n_answer == 0:
                cls = Classification.TIMEOUT
            elif kind == "covert_delayer":
                cls = Classification.COVERT_DELAYED
            else:
                cls = Classification.VALID
            emitter.truth.append(TruthLabel(vp.vp_id, letter, start, kind, cls, mech))


def _obs_order(o: Observation) -> tuple:
    kind = 0 if isinstance(o, DnsObservation) else 1 if isinstance(o, PingObservation) else 2
    return (kind, o.vp_id, o.letter, o.sort_key())


def generate(config: ScenarioConfig, profile: Optional[PatternProfile] = None) -> Scenario:
    """Observations, server logs and per-window ground truth for ``config``."""
    topology = config.resolved_topology
    profile = profile or default_profile()
    for a in config.population:
        m = a.model
        if m is not None and m.kind == "covert_delayer" and m.spoof_server_id:
            for letter in m.affected_letters:
                if not profile.matches(letter, m.spoof_id_for(0)):
                    raise SimulationConfigError("covert_delayer spoof_server_id must match a legitimate pattern")

    slots = apportion(config)
    rng = np.random.default_rng([config.seed])
    order = rng.permutation(len(slots))
    countries = sorted(config.countries)
    weights = np.array([config.countries[c] for c in countries], dtype=float)
    weights /= weights.sum()
    cc_draw = rng.choice(len(countries), size=config.n_vps, p=weights)
    asn_draw = rng.integers(0, config.n_asns, size=config.n_vps)

    emitter = _Emitter(config, topology)
    vps = []
    seen: Counter = Counter()
    for i in range(config.n_vps):
        assignment = slots[order[i]]
        kind_index = seen[id(assignment)]
        seen[id(assignment)] += 1
        vp = VantagePoint(f"vp{i:05d}", _vp_prefix(i), 64512 + int(asn_draw[i]), countries[cc_draw[i]])
        log_prefix = _vp_prefix(i, 11) if assignment.impairment == "stale_prefix" else vp.public_prefix
        vps.append(vp)
        _generate_vp(config, topology, emitter, i, assignment, kind_index, vp, log_prefix)

    emitter.obs.sort(key=_obs_order)
    emitter.logs.sort(key=lambda r: (r.timestamp, r.source_prefix, r.letter))
    emitter.truth.sort(key=lambda t: t.key)
    return Scenario(vps, emitter.obs, emitter.logs, emitter.truth, tuple(config.schedule))


CLASSES = tuple(c.value for c in Classification)


def score(verdicts: Iterable[Verdict], truth: Iterable[TruthLabel]) -> dict[str, Any]:
    """Confusion matrix (truth x predicted) and per-class precision/recall."""
    pred = {v.key: v.classification.value for v in verdicts}
    matrix = {t: {p: 0 for p in CLASSES} for t in CLASSES}
    n = n_missing = 0
    for t in truth:
        p = pred.get(t.key)
        if p is None:
            n_missing += 1
            continue
        n += 1
        matrix[t.classification.value][p] += 1
    per_class = {}
    for c in CLASSES:
        tp = matrix[c][c]
        support = sum(matrix[c].values())
        predicted = sum(matrix[t][c] for t in CLASSES)
        per_class[c] = {
            "support": support,
            "predicted": predicted,
            "precision": tp / predicted if predicted else None,
            "recall": tp / support if support else None,
        }
    sp = Classification.OVERT_SPOOFED.value
    tp = matrix[sp][sp]
    fn = sum(matrix[sp].values()) - tp
    fp = sum(matrix[t][sp] for t in CLASSES if t != sp)
    return {
        "n_windows": n,
        "n_missing": n_missing,
        "confusion": matrix,
        "per_class": per_class,
        "spoof": {
            "tp": tp,
            "fn": fn,
            "fp": fp,
            "recall": tp / (tp + fn) if tp + fn else None,
            "precision": tp / (tp + fp) if tp + fp else None,
        },
    }
