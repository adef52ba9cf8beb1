"""Random-set machinery: set-basis discretization, exploration rules
producing stopping-set pairs, and the Monte Carlo strong-Markov tests.

An exploration rule walks a deterministic nested pair of schedules
(A_0 <= A_1 <= ... and B_0 >= B_1 >= ...) and stops at the first step
where a predicate of the field values on the current annulus
R_k = A_k & thickened_complement(B_k) fires.  Because the schedules are
monotone, the annuli are nested, so everything the rule has read up to
step k is supported in R_k; this makes the realized pair (A_k, B_k) a
stopping-set pair by construction.

Measurability of random-set events cannot be decided from one sample; the
implementable surrogate used throughout is invariance of the event under
conditional resampling of the field given the relevant sigma-field
functionals, which for these finite Gaussian cells is an exact criterion
up to Monte Carlo error.
"""

import dataclasses
import json

import numpy as np

from .field import GaussianField, conditional_resample, sigma_field
from .space import Space, set_index, vertex_set

STAT_NAMES = ("max_abs", "mean")


@dataclasses.dataclass(frozen=True)
class SetBasis:
    """Ordered family of vertex sets used to discretize arbitrary sets."""

    space: Space
    sets: tuple

    def __post_init__(self):
        sets = tuple(self.space.check_subset(s) for s in self.sets)
        if not sets:
            raise ValueError("a set basis needs at least one member")
        object.__setattr__(self, "sets", sets)

    def __len__(self):
        return len(self.sets)

    @property
    def separating(self) -> bool:
        """True iff every singleton occurs in the basis.

        On a finite space with the discrete topology this is what it takes
        for the basis to generate the topology, and it is exactly the
        condition under which discretization recovers every set at full
        depth.
        """
        singles = {s for s in self.sets if len(s) == 1}
        return len(singles) == self.space.n

    @classmethod
    def singletons(cls, space: Space, extra=()):
        sets = [frozenset([x]) for x in range(space.n)]
        sets.extend(vertex_set(s) for s in extra)
        return cls(space, tuple(sets))


def discretize_set(F, basis: SetBasis, n: int) -> frozenset:
    """Outer discretization of F by the first n basis sets.

    Intersects the complements of all among the first n basis sets that
    miss F; with n = 0 this is the whole space.  Decreasing in n, always
    contains F, and equals F at full depth for a separating basis.
    """
    if not 0 <= n <= len(basis):
        raise ValueError(f"depth {n} out of range 0..{len(basis)}")
    F = basis.space.check_subset(F)
    out = set(basis.space.vertices)
    for U in basis.sets[:n]:
        if not (F & U):
            out -= U
    return frozenset(out)


@dataclasses.dataclass(frozen=True)
class ThresholdPredicate:
    """Stop when a statistic of |field values| on the read set reaches theta.

    ``stat`` is one of ``max_abs`` or ``mean``; ``peek`` optionally names
    extra vertices the predicate reads (used to build negative controls
    that violate the annulus-history restriction).
    """

    theta: float
    stat: str = "max_abs"
    peek: tuple = ()

    def __post_init__(self):
        if self.stat not in STAT_NAMES:
            raise ValueError(f"stat must be one of {STAT_NAMES}")
        object.__setattr__(self, "peek", tuple(int(x) for x in self.peek))

    def read_vertices(self, annulus: frozenset) -> frozenset:
        return frozenset(annulus) | frozenset(self.peek)

    def fires(self, values: np.ndarray) -> np.ndarray:
        """Vectorized over rows: values is (n_samples, n_read)."""
        values = np.atleast_2d(values)
        if values.shape[1] == 0:
            stat = np.full(values.shape[0], -np.inf if self.stat == "max_abs" else 0.0)
        elif self.stat == "max_abs":
            stat = np.abs(values).max(axis=1)
        else:
            stat = values.mean(axis=1)
        return stat >= self.theta


@dataclasses.dataclass(eq=False)
class ExplorationRule:
    """Deterministic nested growth schedules with an annulus predicate.

    ``a_schedule`` must be increasing, ``b_schedule`` decreasing, with
    B_0 <= A_0; the predicate at step k may only read field values on the
    annulus A_k & thickened_complement(B_k) (plus declared peek vertices,
    which are rejected unless ``allow_peeking`` is set).
    """

    space: Space
    a_schedule: tuple
    b_schedule: tuple
    predicate: ThresholdPredicate
    allow_peeking: bool = False

    def __post_init__(self):
        a = tuple(self.space.check_subset(s) for s in self.a_schedule)
        b = tuple(self.space.check_subset(s) for s in self.b_schedule)
        if len(a) != len(b) or not a:
            raise ValueError("schedules must be nonempty and equally long")
        for k in range(len(a) - 1):
            if not a[k] <= a[k + 1]:
                raise ValueError(f"A-schedule not increasing at step {k}")
            if not b[k + 1] <= b[k]:
                raise ValueError(f"B-schedule not decreasing at step {k}")
        if not b[0] <= a[0]:
            raise ValueError("need B_0 contained in A_0")
        self.a_schedule = a
        self.b_schedule = b
        annuli = tuple(a[k] & self.space.thickened_complement(b[k])
                       for k in range(len(a)))
        self.annuli = annuli
        bad = [k for k, R in enumerate(annuli)
               if not self.predicate.read_vertices(R) <= R]
        if bad and not self.allow_peeking:
            k = bad[0]
            outside = sorted(self.predicate.read_vertices(annuli[k]) - annuli[k])
            raise ValueError(
                f"predicate reads vertices {outside} outside the step-{k} annulus; "
                "such a rule does not produce stopping sets"
            )

    @property
    def n_steps(self) -> int:
        return len(self.a_schedule)

    def read_set(self, k: int) -> frozenset:
        return self.predicate.read_vertices(self.annuli[k])


@dataclasses.dataclass(frozen=True)
class StoppingSample:
    """Realized stopping pair for one field sample."""

    step: int
    a_set: frozenset
    b_set: frozenset
    sample: np.ndarray
    read_vertices: frozenset

    def __post_init__(self):
        if not self.b_set <= self.a_set:
            raise ValueError("realized B must be contained in realized A")


def run_exploration_batch(field: GaussianField, rule: ExplorationRule,
                          samples: np.ndarray) -> np.ndarray:
    """Realized stopping step per sample row (vectorized over samples)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[1] != field.n:
        raise ValueError(f"samples must have {field.n} columns")
    steps = np.full(samples.shape[0], rule.n_steps - 1, dtype=np.intp)
    undecided = np.ones(samples.shape[0], dtype=bool)
    for k in range(rule.n_steps - 1):
        if not undecided.any():
            break
        idx = set_index(rule.read_set(k))
        fired = rule.predicate.fires(samples[:, idx])
        newly = undecided & fired
        steps[newly] = k
        undecided &= ~fired
    return steps


def run_exploration(field: GaussianField, rule: ExplorationRule,
                    sample: np.ndarray) -> StoppingSample:
    """Run the rule on one sample; deterministic in (rule, sample)."""
    sample = np.asarray(sample, dtype=float).reshape(-1)
    k = int(run_exploration_batch(field, rule, sample[None, :])[0])
    # The predicate is consulted at steps 0..k, except that the final
    # schedule step is forced without a read.
    read = frozenset()
    for j in range(min(k, rule.n_steps - 2) + 1):
        read |= rule.read_set(j)
    return StoppingSample(
        step=k,
        a_set=rule.a_schedule[k],
        b_set=rule.b_schedule[k],
        sample=sample,
        read_vertices=frozenset(read),
    )


@dataclasses.dataclass(frozen=True)
class ResampleReport:
    """Invariance of an event under conditional resampling."""

    name: str
    passed: bool
    n_bases: int
    n_resamples: int
    n_flips: int
    details: tuple = ()

    def to_dict(self):
        return {
            "report": self.name,
            "passed": self.passed,
            "n_bases": self.n_bases,
            "n_resamples": self.n_resamples,
            "n_flips": self.n_flips,
            "details": list(self.details),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _event_indicator(field, rule, A, B, samples):
    steps = run_exploration_batch(field, rule, samples)
    ok = np.empty(len(steps), dtype=bool)
    space = field.form.space
    cache = {}
    for k in np.unique(steps):
        a, b = rule.a_schedule[k], rule.b_schedule[k]
        cache[k] = (a <= A) and (space.thickened_complement(b) <= B)
    for k, val in cache.items():
        ok[steps == k] = val
    return ok


def verify_stopping_hypothesis(field: GaussianField, rule: ExplorationRule,
                               A, B, trials: int = 10_000, seed: int = 0,
                               resamples_per_base: int = 500) -> ResampleReport:
    """Randomized falsification of the stopping-pair joint measurability.

    The event {realized A inside A, thickened complement of realized B
    inside B} must be a function of the field over A & B.  The check draws
    base samples, conditionally resamples everything orthogonal to
    sigma(A & B), and counts indicator flips; any flip falsifies.
    """
    space = field.form.space
    A = space.check_subset(A)
    B = space.check_subset(B)
    W = sigma_field(field, A & B)
    n_bases = max(1, trials // resamples_per_base)
    bases = field.sample_batch(n_bases, seed)
    flips = 0
    details = []
    for i in range(n_bases):
        base = bases[i]
        base_val = bool(_event_indicator(field, rule, A, B, base[None, :])[0])
        redraws = conditional_resample(field, W, base, resamples_per_base,
                                       seed=seed + 1 + i)
        vals = _event_indicator(field, rule, A, B, redraws)
        n_bad = int(np.count_nonzero(vals != base_val))
        flips += n_bad
        details.append((i, base_val, n_bad))
    return ResampleReport(
        name="stopping-hypothesis",
        passed=(flips == 0),
        n_bases=n_bases,
        n_resamples=n_bases * resamples_per_base,
        n_flips=flips,
        details=tuple(details),
    )


def sigma_discrete_equality_check(field: GaussianField, rule: ExplorationRule,
                                  trials: int = 1000, seed: int = 0,
                                  n_bases: int = 50) -> ResampleReport:
    """Cell-measurability of the realized set: for each base sample with
    realized pair (A_k, B_k), the event {realized A equals A_k} must be
    invariant under conditional resampling given sigma(A_k)."""
    n_bases = max(1, n_bases)
    per_base = max(1, trials // n_bases)
    bases = field.sample_batch(n_bases, seed)
    base_steps = run_exploration_batch(field, rule, bases)
    flips = 0
    details = []
    for i in range(n_bases):
        k = int(base_steps[i])
        a_real = rule.a_schedule[k]
        W = sigma_field(field, a_real)
        redraws = conditional_resample(field, W, bases[i], per_base, seed=seed + 1 + i)
        steps = run_exploration_batch(field, rule, redraws)
        realized_same = np.array([rule.a_schedule[int(s)] == a_real for s in steps])
        n_bad = int(np.count_nonzero(~realized_same))
        flips += n_bad
        details.append((i, k, n_bad))
    return ResampleReport(
        name="cell-measurability",
        passed=(flips == 0),
        n_bases=n_bases,
        n_resamples=n_bases * per_base,
        n_flips=flips,
        details=tuple(details),
    )


@dataclasses.dataclass(frozen=True)
class CellStat:
    step: int
    count: int
    max_partial_corr: float
    threshold: float
    asserted: bool
    passed: bool

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class StrongMarkovReport:
    """Per-cell partial-correlation summary of the Monte Carlo strong-Markov test."""

    cells: tuple
    n_samples: int
    n_min: int
    passed: bool

    def to_dict(self):
        return {
            "report": "strong-markov-mc",
            "passed": self.passed,
            "n_samples": self.n_samples,
            "n_min": self.n_min,
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def _residualize(Y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Residuals of the columns of Y after least squares on [1, X]."""
    design = np.hstack([np.ones((Y.shape[0], 1)), X])
    coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    return Y - design @ coef


def strong_markov_mc(field: GaussianField, rule: ExplorationRule, N: int,
                     seed: int = 0, n_min: int = 200,
                     z_factor: float = 4.0) -> StrongMarkovReport:
    """Monte Carlo strong-Markov test over the cells of an exploration rule.

    Buckets N field samples by realized stopping step; within every cell
    of at least ``n_min`` members, regresses the coordinates interior to
    the realized B and the coordinates outside the realized A on the
    annulus coordinates, and requires every cross partial correlation of
    the residuals to stay below ``z_factor / sqrt(cell size)``.  Smaller
    cells are reported but not asserted.
    """
    samples = field.sample_batch(N, seed)
    steps = run_exploration_batch(field, rule, samples)
    space = field.form.space
    cells = []
    all_pass = True
    for k in sorted(np.unique(steps).tolist()):
        members = samples[steps == k]
        count = members.shape[0]
        a, b = rule.a_schedule[k], rule.b_schedule[k]
        annulus = a & space.thickened_complement(b)
        inside = a - annulus
        outside = space.thickened_complement(b) - annulus
        thr = float(z_factor / np.sqrt(max(count, 1)))
        asserted = bool(count >= n_min)
        if not inside or not outside:
            cells.append(CellStat(int(k), int(count), 0.0, thr, asserted, True))
            continue
        Yin = members[:, set_index(inside)]
        Yout = members[:, set_index(outside)]
        Xann = members[:, set_index(annulus)]
        rin = _residualize(Yin, Xann)
        rout = _residualize(Yout, Xann)
        sin = np.linalg.norm(rin, axis=0)
        sout = np.linalg.norm(rout, axis=0)
        sin[sin == 0] = np.inf
        sout[sout == 0] = np.inf
        corr = (rin.T @ rout) / np.outer(sin, sout)
        worst = float(np.abs(corr).max())
        ok = bool(worst <= thr)
        if asserted and not ok:
            all_pass = False
        cells.append(CellStat(int(k), int(count), worst, thr, asserted, ok))
    return StrongMarkovReport(tuple(cells), int(N), n_min, all_pass)


def _schedule_from_config(space: Space, cfg) -> tuple:
    if isinstance(cfg, dict) and "ball" in cfg:
        ball = cfg["ball"]
        center = int(ball["center"])
        return tuple(space.closed_ball(center, int(r)) for r in ball["radii"])
    if isinstance(cfg, dict) and "sets" in cfg:
        return tuple(vertex_set(s) for s in cfg["sets"])
    raise ValueError("schedule config needs a 'ball' or 'sets' entry")


def rule_from_config(space: Space, config: dict) -> ExplorationRule:
    """Build an exploration rule from its JSON-style description.

    Schedules are given either explicitly (``{"sets": [[...], ...]}``) or
    as graph balls (``{"ball": {"center": c, "radii": [r0, r1, ...]}}``);
    the predicate as ``{"threshold": {"theta": t, "stat": "max_abs"}}``.
    """
    pred_cfg = config["predicate"]
    if "threshold" not in pred_cfg:
        raise ValueError("predicate config needs a 'threshold' entry")
    t = pred_cfg["threshold"]
    predicate = ThresholdPredicate(
        theta=float(t["theta"]),
        stat=t.get("stat", "max_abs"),
        peek=tuple(t.get("peek", ())),
    )
    return ExplorationRule(
        space=space,
        a_schedule=_schedule_from_config(space, config["a_schedule"]),
        b_schedule=_schedule_from_config(space, config["b_schedule"]),
        predicate=predicate,
        allow_peeking=bool(config.get("allow_peeking", False)),
    )


def load_rule(path, space: Space) -> ExplorationRule:
    """Read an exploration rule from a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return rule_from_config(space, json.load(fh))
