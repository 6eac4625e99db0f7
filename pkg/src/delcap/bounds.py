"""Bound calculus: certified intervals for C(d), C_n(d), C_{n,k} and the
d -> 1 limit of C(d)/(1-d).

The ingredients, all per input bit and clamped to [0, 1]:

  * trivial erasure sandwich       (1-d^n)/n <= C_n(d) <= 1-d
  * finite-block sandwich          C_n(d) - log2(n+1)/n <= C(d) <= C_n(d)
  * length concentration           the output length of the i.i.d. channel
    (Chernoff transfer)            is within eps*n of (1-d)n except with
                                   probability 2*exp(-2*eps^2*n), which
                                   transfers brackets between C_n(d) and
                                   the exact-deletion capacities C_{n,k}
  * Fertonani-Duman inequality     limsup_{d->1} C(d)/(1-d) <= (n*C_{n,k}+1)/(k+1)
  * limit-equals-infimum           lim_{d->1} C(d)/(1-d) = inf_d C(d)/(1-d),
                                   so any certified upper bound on C(d') gives
                                   the limit bound C(d')/(1-d')

Entropy-like quantities use log base 2 (capacities are per binary symbol);
the concentration exponent stays base e since it bounds a probability.
Solver brackets entering a formula are widened by their solve tolerance
first, so every reported bound stays certified despite finite precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .solver import CapacityBracket, SolveOptions, capacity_cn, capacity_cnk

# Published constants quoted for cross-checking, never used in computation.
REFERENCE_CONSTANTS = (
    (0.1185, "Drinea & Mitzenmacher: achievable rate, lower-bounds lim C(d)/(1-d)"),
    (0.49, "Fertonani & Duman: converse, upper-bounds limsup C(d)/(1-d)"),
    (0.145, "Fertonani & Duman numerics: C_17(0.65) <= 0.145"),
    (0.4143, "0.145/0.35 via the limit-equals-infimum identity at d=0.65"),
)

ACHIEVABILITY_FLOOR = 0.1185


@dataclass(frozen=True)
class BoundBracket:
    """Certified [lower, upper] on a capacity-like quantity, per input bit."""

    target: str  # "C(d)", "C_n(d)", "C_{n,k}" or "limit"
    lower: float
    upper: float
    provenance: str

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(
                f"empty bracket for {self.target}: [{self.lower}, {self.upper}]"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _clamp01(lo: float, hi: float) -> tuple[float, float]:
    return min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)


def _certified(cb: CapacityBracket, n: int) -> tuple[float, float]:
    """Per-bit endpoints widened by the solve tolerance."""
    slack = cb.tol / n
    return cb.normalized_lower - slack, cb.normalized_upper + slack


def chernoff_slack(n: int, eps: float) -> float:
    """Probability that the kept-length deviates more than eps*n from its
    mean, by the Chernoff bound; doubles as a capacity slack in bits."""
    return 2.0 * math.exp(-2.0 * eps * eps * n)


def k_below(n: int, d: float, eps: float) -> int:
    return math.ceil((1.0 - d - eps) * n)


def k_above(n: int, d: float, eps: float) -> int:
    return math.floor((1.0 - d + eps) * n)


def trivial_bracket_cn(n: int, d: float) -> BoundBracket:
    """Erasure-channel sandwich (1-d^n)/n <= C_n(d) <= 1-d."""
    if n < 1:
        raise ValueError(f"n={n} must be >= 1")
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d={d} outside [0, 1]")
    lo, hi = _clamp01((1.0 - d**n) / n, 1.0 - d)
    return BoundBracket("C_n(d)", lo, hi, f"erasure sandwich, n={n}, d={d:g}")


def bracket_c_from_cn(n: int, cn: CapacityBracket) -> BoundBracket:
    """Finite-block sandwich: C_n(d) - log2(n+1)/n <= C(d) <= C_n(d)."""
    if n < 1:
        raise ValueError(f"n={n} must be >= 1")
    lo, hi = _certified(cn, n)
    lo, hi = _clamp01(lo - math.log2(n + 1) / n, hi)
    return BoundBracket("C(d)", lo, hi, f"finite-block sandwich from n={n}")


def bracket_cn_from_exact(
    n: int,
    d: float,
    eps: float,
    cnk_low: CapacityBracket,
    cnk_high: CapacityBracket,
) -> BoundBracket:
    """Bracket C_n(d) between exact-deletion capacities at the kept counts
    k_below(n,d,eps) and k_above(n,d,eps), within the concentration slack.

    cnk_low / cnk_high are solver brackets for those two capacities.
    """
    if eps <= 0:
        raise ValueError(f"eps={eps} must be positive")
    if not eps <= d <= 1.0 - eps:
        raise ValueError(f"d={d} outside [eps, 1-eps] = [{eps}, {1.0 - eps}]")
    slack = chernoff_slack(n, eps)
    lo = _certified(cnk_low, n)[0] - slack
    hi = _certified(cnk_high, n)[1] + slack
    lo, hi = _clamp01(lo, hi)
    return BoundBracket(
        "C_n(d)",
        lo,
        hi,
        f"length concentration, n={n}, d={d:g}, eps={eps:g}, "
        f"k=[{k_below(n, d, eps)}, {k_above(n, d, eps)}]",
    )


def bracket_cnk_from_c(
    n: int,
    k: int,
    eps: float,
    c_plus: BoundBracket,
    c_minus: BoundBracket,
) -> BoundBracket:
    """Bracket C_{n,k} from brackets on C at the shifted deletion rates
    1 - k/n + eps (c_plus) and 1 - k/n - eps (c_minus)."""
    if eps <= 0:
        raise ValueError(f"eps={eps} must be positive")
    base = 1.0 - k / n
    if not (0.0 <= base + eps <= 1.0 and 0.0 <= base - eps <= 1.0):
        raise ValueError(f"shifted rates {base - eps:g}, {base + eps:g} outside [0, 1]")
    slack = chernoff_slack(n, eps)
    lo = c_plus.lower - slack
    hi = c_minus.upper + slack + math.log2(n + 1) / n
    lo, hi = _clamp01(lo, hi)
    return BoundBracket(
        "C_{n,k}",
        lo,
        hi,
        f"length concentration, n={n}, k={k}, eps={eps:g}",
    )


def fertonani_limit_upper(n: int, k: int, cnk_upper: float) -> float:
    """Fertonani-Duman inequality: limsup_{d->1} C(d)/(1-d) <= (n*C+1)/(k+1)
    for any valid per-bit upper bound C on C_{n,k}."""
    if k < 0:
        raise ValueError(f"k={k} must be >= 0")
    if n < 1:
        raise ValueError(f"n={n} must be >= 1")
    return (n * cnk_upper + 1.0) / (k + 1.0)


def limit_upper_from_points(points: list[tuple[float, float]]) -> float:
    """min over (d, upper-bound-on-C(d)) of upper/(1-d).

    Valid because the d -> 1 limit of C(d)/(1-d) exists and equals the
    infimum over d, hence is at most C(d')/(1-d') at every d'.
    """
    if not points:
        raise ValueError("no points given")
    for d, _ in points:
        if not 0.0 < d < 1.0:
            raise ValueError(f"point has d={d} outside (0, 1)")
    return min(upper / (1.0 - d) for d, upper in points)


def default_eps_grid(n: int) -> list[float]:
    """The swept concentration widths {i/n : 1 <= i <= max(1, n//4)}."""
    return [i / n for i in range(1, max(1, n // 4) + 1)]


def sweep_bracket_cn_from_exact(
    n: int,
    d: float,
    cnk_solver,
    eps_values: list[float] | None = None,
) -> BoundBracket:
    """Tightest length-concentration bracket on C_n(d) over an eps grid.

    cnk_solver(k) must return a solver bracket for C_{n,k}.  eps values
    whose preconditions fail are skipped; ties keep the smallest eps.
    """
    if eps_values is None:
        eps_values = default_eps_grid(n)
    best = None
    for eps in eps_values:
        if not (eps > 0 and eps <= d <= 1.0 - eps):
            continue
        b = bracket_cn_from_exact(
            n, d, eps, cnk_solver(k_below(n, d, eps)), cnk_solver(k_above(n, d, eps))
        )
        if best is None or b.width < best.width:
            best = b
    if best is None:
        raise ValueError(f"no admissible eps for n={n}, d={d:g}")
    return best


def sweep_bracket_cnk_from_c(
    n: int,
    k: int,
    c_solver,
    eps_values: list[float] | None = None,
) -> BoundBracket:
    """Tightest length-concentration bracket on C_{n,k} over an eps grid.

    c_solver(d) must return a BoundBracket on C(d)."""
    if eps_values is None:
        eps_values = default_eps_grid(n)
    base = 1.0 - k / n
    best = None
    for eps in eps_values:
        if not (eps > 0 and 0.0 <= base - eps and base + eps <= 1.0):
            continue
        b = bracket_cnk_from_c(n, k, eps, c_solver(base + eps), c_solver(base - eps))
        if best is None or b.width < best.width:
            best = b
    if best is None:
        raise ValueError(f"no admissible eps for n={n}, k={k}")
    return best


@dataclass(frozen=True)
class LimitEntry:
    """One certified upper bound on lim_{d->1} C(d)/(1-d)."""

    kind: str  # "point", "external" or "fertonani"
    value: float
    n: int | None
    k: int | None
    d: float | None
    c_upper: float
    citation: str = ""


@dataclass(frozen=True)
class LimitReport:
    """Aggregated upper bounds on lim_{d->1} C(d)/(1-d)."""

    entries: tuple[LimitEntry, ...]
    best: float
    references: tuple[tuple[float, str], ...] = REFERENCE_CONSTANTS
    suspect_entries: tuple[LimitEntry, ...] = field(default=())

    @property
    def best_entry(self) -> LimitEntry:
        return min(self.entries, key=lambda e: e.value)


def limit_report(
    points: list[tuple[int, float, float]] | None = None,
    fertonani_inputs: list[tuple[int, int, float]] | None = None,
    external_points: list[tuple[float, float, str]] | None = None,
) -> LimitReport:
    """Combine limit bounds from evaluated points and Fertonani-Duman inputs.

    points:           (n, d, certified upper bound on C(d)) computed here
    fertonani_inputs: (n, k, certified upper bound on C_{n,k}) computed here
    external_points:  (d, upper bound on C(d), citation) quoted from the
                      literature, kept apart from reproduced numbers

    Any *computed* bound falling below the published achievability constant
    0.1185 is impossible and flagged as a likely implementation error.
    """
    entries: list[LimitEntry] = []
    for n, d, c_up in points or []:
        value = limit_upper_from_points([(d, c_up)])
        entries.append(LimitEntry("point", value, n, None, d, c_up))
    for d, c_up, cite in external_points or []:
        value = limit_upper_from_points([(d, c_up)])
        entries.append(LimitEntry("external", value, None, None, d, c_up, cite))
    for n, k, c_up in fertonani_inputs or []:
        value = fertonani_limit_upper(n, k, c_up)
        entries.append(LimitEntry("fertonani", value, n, k, None, c_up))
    if not entries:
        raise ValueError("no points or fertonani inputs given")
    suspect = tuple(
        e for e in entries if e.kind != "external" and e.value < ACHIEVABILITY_FLOOR
    )
    best = min(e.value for e in entries)
    return LimitReport(tuple(entries), best, suspect_entries=suspect)


@dataclass(frozen=True)
class DiagnosticRow:
    n: int
    k: int
    cn: CapacityBracket
    cnk: CapacityBracket

    @property
    def gap(self) -> float:
        mid_cn = 0.5 * (cn := self.cn).normalized_lower + 0.5 * cn.normalized_upper
        mid_cnk = 0.5 * (ck := self.cnk).normalized_lower + 0.5 * ck.normalized_upper
        return abs(mid_cn - mid_cnk)


def convergence_diagnostic(
    d: float, n_list: list[int], opts: SolveOptions = SolveOptions()
) -> list[DiagnosticRow]:
    """Per n: C_n(d) versus the matched exact capacity C_{n,round((1-d)n)}.

    Purely illustrative: the two are expected to approach each other as n
    grows (ties in the rounding go up)."""
    rows = []
    for n in n_list:
        k = int(math.floor((1.0 - d) * n + 0.5))
        rows.append(
            DiagnosticRow(n, k, capacity_cn(n, d, opts), capacity_cnk(n, k, opts))
        )
    return rows
