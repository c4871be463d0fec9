"""Exact configuration spaces over ``{0,1}^E`` and events on them.

A configuration is an integer whose bit ``e`` says whether edge ``e`` is
open. Laws over all ``2^|E|`` configurations are plain float vectors
indexed by that integer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from . import _kernels
from .errors import ContractError, SizeError

MAX_EDGES = 22


def subset_zeta(vec: np.ndarray, m: int) -> np.ndarray:
    """``out[S] = sum_{T subset S} vec[T]`` (returns a new array)."""
    out = np.array(vec, dtype=float)
    for e in range(m):
        v = out.reshape(-1, 2, 1 << e)
        v[:, 1, :] += v[:, 0, :]
    return out


def subset_moebius(vec: np.ndarray, m: int) -> np.ndarray:
    """Inverse of :func:`subset_zeta`."""
    out = np.array(vec, dtype=float)
    for e in range(m):
        v = out.reshape(-1, 2, 1 << e)
        v[:, 1, :] -= v[:, 0, :]
    return out


def or_convolve(law_a: np.ndarray, law_b: np.ndarray, m: int) -> np.ndarray:
    """Law of ``A | B`` for independent configurations ``A`` and ``B``."""
    return subset_moebius(subset_zeta(law_a, m) * subset_zeta(law_b, m), m)


def bernoulli_overlay(law: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Law of ``omega | X`` with ``X_e`` independent Bernoulli(``q_e``)."""
    out = np.array(law, dtype=float)
    for e, qe in enumerate(np.asarray(q, dtype=float)):
        v = out.reshape(-1, 2, 1 << e)
        moved = qe * v[:, 0, :]
        v[:, 1, :] += moved
        v[:, 0, :] -= moved
    return out


def edge_bits(m: int) -> np.ndarray:
    """Boolean matrix ``B[c, e]`` = edge ``e`` open in configuration ``c``."""
    c = np.arange(1 << m, dtype=np.int64)
    return ((c[:, None] >> np.arange(m)) & 1).astype(bool)


class ConfigSpace:
    """All bond configurations of a (small) graph, with cached cluster labels.

    ``wiring`` lists vertex groups that are identified (wired boundary).
    """

    def __init__(self, graph, wiring: Iterable[Iterable[int]] = ()):
        self.graph = graph
        self.m = int(graph.n_edges)
        if self.m > MAX_EDGES:
            raise SizeError(f"{self.m} edges exceed the enumeration budget of {MAX_EDGES}")
        self.n = int(graph.n_total_vertices)
        self.size = 1 << self.m
        wu, wv = [], []
        for group in wiring:
            group = [int(v) for v in group]
            wu += group[:-1]
            wv += group[1:]
        self.wire_u = np.array(wu, dtype=np.int64)
        self.wire_v = np.array(wv, dtype=np.int64)
        self._eu = np.ascontiguousarray(graph.edges[:, 0], dtype=np.int64)
        self._ev = np.ascontiguousarray(graph.edges[:, 1], dtype=np.int64)
        self._cache: dict = {}

    def _labels(self, use_ghost: bool, use_wiring: bool):
        key = (use_ghost, use_wiring)
        if key not in self._cache:
            include = np.ones(self.m, dtype=np.uint8)
            if not use_ghost:
                include[self.graph.n_internal:] = 0
            wu = self.wire_u if use_wiring else self.wire_u[:0]
            wv = self.wire_v if use_wiring else self.wire_v[:0]
            self._cache[key] = _kernels.config_labels(self.n, self._eu, self._ev, include, wu, wv)
        return self._cache[key]

    def labels(self, use_ghost: bool = True, use_wiring: bool = True) -> np.ndarray:
        """``labels[c, v]``: cluster representative of ``v`` in configuration ``c``."""
        return self._labels(use_ghost, use_wiring)[0]

    def cluster_counts(self) -> np.ndarray:
        """``k(omega)`` over ``V`` plus the ghost, wired groups counted once."""
        return self._labels(True, True)[1]

    def bits(self) -> np.ndarray:
        if "bits" not in self._cache:
            self._cache["bits"] = edge_bits(self.m)
        return self._cache["bits"]

    def is_increasing(self, ind: np.ndarray) -> bool:
        ind = np.asarray(ind, dtype=bool)
        c = np.arange(self.size)
        return all(np.all(~ind[c] | ind[c | (1 << e)]) for e in range(self.m))


class Event:
    """A subset of configurations, evaluated exactly on a :class:`ConfigSpace`."""

    def indicator(self, space: ConfigSpace) -> np.ndarray:
        raise NotImplementedError

    def __invert__(self):
        return Not(self)

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)


@dataclass(frozen=True)
class Connected(Event):
    """Some vertex of ``A`` is connected to some vertex of ``B``.

    ``via_ghost=False`` restricts paths to internal edges;
    ``via_wiring=False`` ignores the wired identification.
    """

    A: tuple
    B: tuple
    via_ghost: bool = True
    via_wiring: bool = True

    def __init__(self, A, B, via_ghost=True, via_wiring=True):
        object.__setattr__(self, "A", tuple(sorted({int(v) for v in np.atleast_1d(A)})))
        object.__setattr__(self, "B", tuple(sorted({int(v) for v in np.atleast_1d(B)})))
        object.__setattr__(self, "via_ghost", bool(via_ghost))
        object.__setattr__(self, "via_wiring", bool(via_wiring))

    def indicator(self, space: ConfigSpace) -> np.ndarray:
        if set(self.A) & set(self.B):
            return np.ones(space.size, dtype=bool)
        lab = space.labels(self.via_ghost, self.via_wiring)
        la = lab[:, list(self.A)]
        lb = lab[:, list(self.B)]
        return (la[:, :, None] == lb[:, None, :]).any(axis=(1, 2))


@dataclass(frozen=True)
class EdgeOpen(Event):
    edge: int

    def indicator(self, space: ConfigSpace) -> np.ndarray:
        return ((np.arange(space.size) >> int(self.edge)) & 1).astype(bool)


@dataclass(frozen=True)
class Not(Event):
    inner: Event

    def indicator(self, space):
        return ~self.inner.indicator(space)


@dataclass(frozen=True)
class And(Event):
    left: Event
    right: Event

    def indicator(self, space):
        return self.left.indicator(space) & self.right.indicator(space)


@dataclass(frozen=True)
class Or(Event):
    left: Event
    right: Event

    def indicator(self, space):
        return self.left.indicator(space) | self.right.indicator(space)


@dataclass(frozen=True)
class Always(Event):
    def indicator(self, space):
        return np.ones(space.size, dtype=bool)


@dataclass(frozen=True)
class Predicate(Event):
    """Event from a vectorized function of the configuration integers."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "predicate"

    def indicator(self, space):
        out = np.asarray(self.fn(np.arange(space.size, dtype=np.int64)), dtype=bool)
        if out.shape != (space.size,):
            raise ContractError(f"predicate {self.name} returned shape {out.shape}")
        return out


class Law:
    """A probability vector over the configurations of a :class:`ConfigSpace`."""

    def __init__(self, space: ConfigSpace, probs: np.ndarray):
        self.space = space
        self.probs = np.asarray(probs, dtype=float)

    @property
    def m(self) -> int:
        return self.space.m

    def prob(self, event: Event | np.ndarray) -> float:
        ind = event if isinstance(event, np.ndarray) else event.indicator(self.space)
        return float(self.probs[ind].sum())

    def conditional(self, event: Event | np.ndarray) -> "Law":
        ind = event if isinstance(event, np.ndarray) else event.indicator(self.space)
        mass = self.probs[ind].sum()
        if mass <= 0:
            raise ContractError("conditioning event has probability zero")
        out = np.where(ind, self.probs, 0.0) / mass
        return Law(self.space, out)

    def edge_marginals(self) -> np.ndarray:
        """``P(edge e open)`` for every edge."""
        return np.array([self.probs[EdgeOpen(e).indicator(self.space)].sum()
                         for e in range(self.m)])

    def tv(self, other: "Law | np.ndarray") -> float:
        q = other.probs if isinstance(other, Law) else np.asarray(other)
        return 0.5 * float(np.abs(self.probs - q).sum())
