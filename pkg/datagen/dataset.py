# datagen/dataset.py - tagged offline transition datasets

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from config.settings import STOCHASTIC_TOL
from mdp_core.mdp import FiniteMDP, TabularPolicy
from utils.exceptions import DatasetParseError, ValidationError
from utils.seeding import make_rng

logger = logging.getLogger(__name__)

DOMAINS = ("src", "tar")


@dataclass(frozen=True)
class TransitionRecord:
    s: int
    a: int
    r: float
    sp: int
    domain: str

    def to_dict(self) -> Dict:
        return {'s': self.s, 'a': self.a, 'r': self.r, 'sp': self.sp, 'domain': self.domain}


@dataclass(frozen=True)
class TransitionBatch:
    """Column arrays of a transition minibatch; indexes like OfflineDataset without per-record objects"""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    is_src: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def take(self, idx: np.ndarray) -> "TransitionBatch":
        return TransitionBatch(self.states[idx], self.actions[idx], self.rewards[idx],
                               self.next_states[idx], self.is_src[idx])

    @classmethod
    def concat(cls, batches: List["TransitionBatch"]) -> "TransitionBatch":
        return cls(*(np.concatenate([getattr(b, name) for b in batches])
                     for name in ('states', 'actions', 'rewards', 'next_states', 'is_src')))


class OfflineDataset:
    """
    Transition records with cached arrays and visit-count tables

    counts[s, a] and next_counts[s, a, s'] always agree with the records.
    """

    def __init__(self, records: Iterable[TransitionRecord], n_states: int, n_actions: int):
        self.records: List[TransitionRecord] = list(records)
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)

        n = len(self.records)
        self.states = np.fromiter((rec.s for rec in self.records), dtype=int, count=n)
        self.actions = np.fromiter((rec.a for rec in self.records), dtype=int, count=n)
        self.rewards = np.fromiter((rec.r for rec in self.records), dtype=float, count=n)
        self.next_states = np.fromiter((rec.sp for rec in self.records), dtype=int, count=n)
        self.is_src = np.fromiter((rec.domain == "src" for rec in self.records), dtype=bool, count=n)

        bad_domain = [i for i, rec in enumerate(self.records) if rec.domain not in DOMAINS]
        if bad_domain:
            raise ValidationError(f"record {bad_domain[0]} has unknown domain tag '{self.records[bad_domain[0]].domain}'")
        for name, values, bound in (('s', self.states, self.n_states), ('a', self.actions, self.n_actions),
                                    ('sp', self.next_states, self.n_states)):
            out = np.flatnonzero((values < 0) | (values >= bound))
            if len(out):
                raise ValidationError(f"record {int(out[0])} has {name}={int(values[out[0]])} outside [0, {bound})")

        self.counts = np.zeros((self.n_states, self.n_actions), dtype=np.int64)
        np.add.at(self.counts, (self.states, self.actions), 1)
        self.next_counts = np.zeros((self.n_states, self.n_actions, self.n_states), dtype=np.int64)
        np.add.at(self.next_counts, (self.states, self.actions, self.next_states), 1)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (self.records == other.records and self.n_states == other.n_states
                and self.n_actions == other.n_actions)

    def support_mask(self) -> np.ndarray:
        """support(s) = {a : counts[s, a] > 0}"""
        return self.counts > 0

    def behavior_probs(self) -> np.ndarray:
        """Empirical behavior policy; uniform at unvisited states"""
        totals = self.counts.sum(axis=1, keepdims=True)
        uniform = np.full_like(self.counts, 1.0 / max(self.n_actions, 1), dtype=float)
        return np.where(totals > 0, self.counts / np.maximum(totals, 1), uniform)

    def as_batch(self, domain: Optional[str] = None) -> TransitionBatch:
        """Column view of every record; `domain` overrides the per-record tags"""
        if domain is not None and domain not in DOMAINS:
            raise ValidationError(f"unknown domain tag '{domain}'")
        is_src = self.is_src.copy() if domain is None else np.full(len(self), domain == "src")
        return TransitionBatch(self.states.copy(), self.actions.copy(), self.rewards.copy(),
                               self.next_states.copy(), is_src)

    def by_domain(self, domain: str) -> "OfflineDataset":
        return OfflineDataset([rec for rec in self.records if rec.domain == domain], self.n_states, self.n_actions)

    def validate_against(self, mdp: FiniteMDP) -> None:
        if (self.n_states, self.n_actions) != (mdp.n_states, mdp.n_actions):
            raise ValidationError(
                f"dataset sized ({self.n_states}, {self.n_actions}) for an MDP of ({mdp.n_states}, {mdp.n_actions})"
            )
        over = np.flatnonzero(np.abs(self.rewards) > mdp.r_max + STOCHASTIC_TOL)
        if len(over):
            raise ValidationError(f"record {int(over[0])} reward {self.rewards[over[0]]} exceeds r_max={mdp.r_max}")

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec.to_dict()) + "\n" for rec in self.records)

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256(f"{self.n_states}x{self.n_actions}\n".encode("utf-8"))
        digest.update(self.to_jsonl().encode("utf-8"))
        return digest.hexdigest()[:16]

    @classmethod
    def concat(cls, datasets: List["OfflineDataset"]) -> "OfflineDataset":
        if not datasets:
            raise ValidationError("nothing to concatenate")
        n_states, n_actions = datasets[0].n_states, datasets[0].n_actions
        records: List[TransitionRecord] = []
        for ds in datasets:
            if (ds.n_states, ds.n_actions) != (n_states, n_actions):
                raise ValidationError("cannot concatenate datasets over different spaces")
            records.extend(ds.records)
        return cls(records, n_states, n_actions)


def collect(mdp: FiniteMDP, policy: TabularPolicy, n: int, horizon: int, seed: int,
            domain: str = "tar") -> OfflineDataset:
    """
    Roll out `policy` episodically from rho and keep the first n transitions

    Args:
        mdp: Environment
        policy: Behavior policy
        n: Number of transitions
        horizon: Episode length before reset
        seed: Root seed
        domain: Tag stamped on every record

    Returns:
        OfflineDataset with n records
    """
    if n <= 0 or horizon <= 0:
        raise ValidationError(f"n and horizon must be positive, got n={n}, horizon={horizon}")
    if domain not in DOMAINS:
        raise ValidationError(f"unknown domain tag: {domain}")
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(f"policy shape {policy.probs.shape} does not match MDP")

    rng = make_rng(seed, f"collect/{domain}")
    init_cdf = np.cumsum(mdp.init_dist)
    policy_cdf = np.cumsum(policy.probs, axis=1)
    kernel_cdf = np.cumsum(mdp.kernel, axis=2)

    def draw(cdf: np.ndarray) -> int:
        return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side='right')), len(cdf) - 1)

    records = []
    s = draw(init_cdf)
    t = 0
    while len(records) < n:
        a = draw(policy_cdf[s])
        sp = draw(kernel_cdf[s, a])
        records.append(TransitionRecord(s, a, float(mdp.reward[s, a]), sp, domain))
        t += 1
        if t >= horizon:
            s, t = draw(init_cdf), 0
        else:
            s = sp

    logger.debug("Collected %d %s transitions (horizon %d)", n, domain, horizon)
    return OfflineDataset(records, mdp.n_states, mdp.n_actions)


def subsample(ds: OfflineDataset, fraction: float, seed: int) -> OfflineDataset:
    """Uniform subsample without replacement; record order is preserved"""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must lie in (0, 1], got {fraction}")
    if fraction == 1.0 or len(ds) == 0:
        return OfflineDataset(ds.records, ds.n_states, ds.n_actions)
    k = max(1, int(round(fraction * len(ds))))
    keep = np.sort(make_rng(seed, "subsample").choice(len(ds), size=k, replace=False))
    return OfflineDataset([ds.records[i] for i in keep], ds.n_states, ds.n_actions)


def save_dataset(ds: OfflineDataset, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ds.to_jsonl(), encoding="utf-8")
    return str(path)


def _parse_record(line: str, line_number: int) -> TransitionRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetParseError(f"invalid JSON: {e.msg}", line_number)
    if not isinstance(data, dict):
        raise DatasetParseError("record must be a JSON object", line_number)

    missing = [k for k in ('s', 'a', 'r', 'sp', 'domain') if k not in data]
    if missing:
        raise DatasetParseError(f"missing fields: {', '.join(missing)}", line_number)
    for key in ('s', 'a', 'sp'):
        if isinstance(data[key], bool) or not isinstance(data[key], int) or data[key] < 0:
            raise DatasetParseError(f"field '{key}' must be a nonnegative integer", line_number)
    if isinstance(data['r'], bool) or not isinstance(data['r'], (int, float)):
        raise DatasetParseError("field 'r' must be a number", line_number)
    if data['domain'] not in DOMAINS:
        raise DatasetParseError(f"unknown domain tag '{data['domain']}'", line_number)
    return TransitionRecord(data['s'], data['a'], float(data['r']), data['sp'], data['domain'])


def load_dataset(path, n_states: Optional[int] = None, n_actions: Optional[int] = None) -> OfflineDataset:
    """
    Read a JSON-lines dataset

    Args:
        path: File path
        n_states, n_actions: Space sizes; inferred from the records when omitted

    Raises:
        DatasetParseError: on the first malformed line
    """
    records = []
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, 1):
            if not line.strip():
                continue
            record = _parse_record(line, line_number)
            if n_states is not None and (record.s >= n_states or record.sp >= n_states):
                raise DatasetParseError(f"state index outside [0, {n_states})", line_number)
            if n_actions is not None and record.a >= n_actions:
                raise DatasetParseError(f"action index outside [0, {n_actions})", line_number)
            records.append(record)

    if n_states is None:
        n_states = max((max(rec.s, rec.sp) for rec in records), default=-1) + 1
    if n_actions is None:
        n_actions = max((rec.a for rec in records), default=-1) + 1
    return OfflineDataset(records, n_states, n_actions)
