"""Random matrices with k ones per column, plain and row-degree constrained.

Column draws are organised in blocks of ``BLOCK`` columns; block ``b`` of a
run with seed ``s`` draws from ``np.random.default_rng(SeedSequence([s, b]))``.
Any block can therefore be regenerated on its own, in any order or in
parallel, and yields the same columns.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, special, stats

from .gf2 import GF2Matrix

BLOCK = 4096


class NoSolution(ValueError):
    pass


class Timeout(RuntimeError):
    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


@dataclass(frozen=True)
class ModelParams:
    n: int
    m: int
    k: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.k <= self.n:
            raise ValueError(f"need 0 <= k <= n, got k={self.k}, n={self.n}")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def to_json(self) -> dict:
        return {**asdict(self), "model": "A(n,m,k)"}


def random_k_subsets(rng: np.random.Generator, n: int, k: int, count: int) -> np.ndarray:
    """``count`` independent uniform k-subsets of range(n), one per row, sorted.

    Floyd's algorithm vectorised across rows: for j = n-k .. n-1 draw t in
    [0, j]; take t unless already chosen, in which case take j.
    """
    out = np.empty((count, k), dtype=np.int64)
    for i, j in enumerate(range(n - k, n)):
        t = rng.integers(0, j + 1, size=count)
        if i:
            taken = (out[:, :i] == t[:, None]).any(axis=1)
            t = np.where(taken, j, t)
        out[:, i] = t
    out.sort(axis=1)
    return out


def sample_supports(p: ModelParams) -> np.ndarray:
    """Column supports of A(n, m, k) as an (m, k) array of sorted row indices."""
    blocks = []
    for b in range(math.ceil(p.m / BLOCK)):
        rng = np.random.default_rng(np.random.SeedSequence([p.seed, b]))
        blocks.append(random_k_subsets(rng, p.n, p.k, min(BLOCK, p.m - b * BLOCK)))
    return np.concatenate(blocks, axis=0)


def sample_matrix(p: ModelParams) -> GF2Matrix:
    return GF2Matrix.from_column_supports(p.n, sample_supports(p))


def write_sample(p: ModelParams, path: str | Path) -> Path:
    """Write the matrix in column-support format plus a ``.json`` params sidecar."""
    path = Path(path)
    sample_matrix(p).save(path)
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(p.to_json(), indent=2, sort_keys=True) + "\n")
    return side


# truncated Poisson -----------------------------------------------------------


def poisson_upper(lam: float, floor: int) -> float:
    """Pr[Po(lam) >= floor], i.e. e^{-lam} f_floor(lam)."""
    if floor <= 0:
        return 1.0
    return float(special.gammainc(floor, lam))


def truncated_mean(lam: float, floor: int) -> float:
    # lam * f_{B-1}(lam) / f_B(lam)
    if floor <= 0:
        return lam
    upper = poisson_upper(lam, floor)
    if upper > 1e-200:
        return lam * poisson_upper(lam, floor - 1) / upper
    # deep in the lower tail: mean = lam + B / sum_j lam^j B!/(B+j)!
    term, total, j = 1.0, 1.0, 0
    while term > 1e-17 * total:
        j += 1
        term *= lam / (floor + j)
        total += term
    return lam + floor / total


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson(lam) conditioned on being >= floor."""

    lam: float
    floor: int

    @property
    def mean(self) -> float:
        return truncated_mean(self.lam, self.floor)

    @property
    def variance(self) -> float:
        # E[X(X-1)] = lam^2 f_{B-2}/f_B
        tail = poisson_upper(self.lam, self.floor)
        second = self.lam**2 * poisson_upper(self.lam, self.floor - 2) / tail
        mu = self.mean
        return second + mu - mu * mu

    def pmf(self, l: int | np.ndarray) -> np.ndarray:
        l = np.asarray(l)
        p = stats.poisson.pmf(l, self.lam) / poisson_upper(self.lam, self.floor)
        return np.where(l >= self.floor, p, 0.0)

    def sample(self, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
        """Inverse-CDF draws via a table over the admissible range."""
        top = int(self.floor + self.lam + 20 * math.sqrt(self.lam + 1) + 40)
        support = np.arange(self.floor, top + 1)
        cdf = np.cumsum(self.pmf(support))
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return support[np.minimum(idx, len(support) - 1)]


def _solve_lambda(mean: float, floor: int) -> float:
    if floor <= 0:
        return float(mean)
    if mean <= floor:
        raise NoSolution(f"mean {mean} is not above the floor {floor}")
    # truncated mean increases in lam from `floor` (lam -> 0) to lam + O(1)
    lo, hi = 1e-12, float(mean)
    f = lambda lam: truncated_mean(lam, floor) - mean
    return float(optimize.brentq(f, lo, hi, xtol=1e-14 * mean, rtol=4 * np.finfo(float).eps, maxiter=500))


def truncated_poisson_lambda(k: int, sigma: float, gamma: float) -> TruncatedPoisson:
    """Choose lam so that Poisson(lam) conditioned on >= ceil(gamma*k*sigma) has mean k*sigma."""
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    target = k * sigma
    floor = math.ceil(gamma * target - 1e-12)
    return TruncatedPoisson(_solve_lambda(target, floor), floor)


def sample_degree_constrained(
    N: int,
    M: int,
    k: int,
    min_row: int,
    seed: int | np.random.Generator,
    max_attempts: int | None = None,
    method: str = "auto",
) -> GF2Matrix:
    """Uniform N x M matrix with k ones per column and every row sum >= min_row."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sup = sample_degree_constrained_supports(N, M, k, min_row, rng, 1, max_attempts, method=method)[0]
    return GF2Matrix.from_column_supports(N, sup)


def sample_degree_constrained_supports(
    N: int,
    M: int,
    k: int,
    min_row: int,
    rng: np.random.Generator,
    count: int,
    max_attempts: int | None = None,
    batch: int = 65536,
    method: str = "auto",
) -> np.ndarray:
    """``count`` independent draws, returned as a (count, M, k) support array.

    Two exact methods, both uniform over the admissible set:

    ``"poisson"``: row counts are i.i.d. truncated Poisson, accepted when they
    total kM; the kM slot labels are then shuffled into columns and the draw
    is rejected whenever a column repeats a row.  Every rejection restarts
    from fresh row counts.

    ``"plain"``: draw unconstrained k-subset columns and reject unless every
    row reaches ``min_row``.

    ``"auto"`` uses ``"plain"`` when its estimated acceptance rate
    Pr[Po(kM/N) >= min_row]^N is at least 1e-3, else ``"poisson"``.  The
    poisson route only accepts often when M is small, since the chance of no
    repeated row decays exponentially in M.
    """
    total = k * M
    if N * min_row > total:
        raise ValueError("N * min_row exceeds k * M")
    if k > N:
        raise ValueError("k exceeds N")
    if max_attempts is None:
        max_attempts = int(1e4 * math.sqrt(M)) * max(count, 1)
    if method == "auto":
        plain_rate = poisson_upper(total / N, min_row) ** N
        method = "plain" if plain_rate >= 1e-3 else "poisson"
    if method == "plain":
        return _constrained_by_rejection(N, M, k, min_row, rng, count, max_attempts)
    if method != "poisson":
        raise ValueError(f"unknown method {method!r}")
    # N * min_row == total admits only the constant row-count vector
    dist = TruncatedPoisson(_solve_lambda(total / N, min_row), min_row) if N * min_row < total else None

    out = np.empty((count, M, k), dtype=np.int64)
    got = 0
    attempts = 0
    while got < count:
        if attempts >= max_attempts:
            raise Timeout("degree-constrained sampler did not accept enough draws", attempts)
        b = min(batch, max_attempts - attempts)
        attempts += b
        if dist is None:
            rho = np.full((b, N), min_row, dtype=np.int64)
        else:
            rho = dist.sample(rng, (b, N))
            rho = rho[rho.sum(axis=1) == total]
        if not len(rho):
            continue
        slots = np.repeat(np.tile(np.arange(N), len(rho)), rho.ravel()).reshape(len(rho), total)
        slots = np.take_along_axis(slots, rng.random(slots.shape).argsort(axis=1), axis=1)
        cols = np.sort(slots.reshape(len(rho), M, k), axis=2)
        ok = ~(np.diff(cols, axis=2) == 0).any(axis=(1, 2)) if k > 1 else np.ones(len(rho), bool)
        cols = cols[ok][: count - got]
        out[got : got + len(cols)] = cols
        got += len(cols)
    return out


def _constrained_by_rejection(
    N: int, M: int, k: int, min_row: int, rng: np.random.Generator, count: int, max_attempts: int
) -> np.ndarray:
    out = np.empty((count, M, k), dtype=np.int64)
    got = attempts = 0
    b = max(1, min(1024, 2_000_000 // max(M * k, 1)))
    while got < count:
        if attempts >= max_attempts:
            raise Timeout("rejection sampler did not accept enough draws", attempts)
        nb = min(b, max_attempts - attempts)
        attempts += nb
        cols = random_k_subsets(rng, N, k, nb * M).reshape(nb, M, k)
        offs = (np.arange(nb) * N)[:, None, None]
        deg = np.bincount((cols + offs).ravel(), minlength=nb * N).reshape(nb, N)
        cols = cols[(deg >= min_row).all(axis=1)][: count - got]
        out[got : got + len(cols)] = cols
        got += len(cols)
    return out
