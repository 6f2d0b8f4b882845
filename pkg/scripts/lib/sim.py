"""Discrete-event M/G/1 processor-sharing simulation of tagged-customer sojourn times.

Each replication runs one stationary queue. At inspection epochs drawn from an independent
Poisson clock (so the queue is seen in equilibrium), the current population is copied, a tagged
customer is added to the copy, and the copy is run forward with fresh arrivals until the tagged
customer leaves. The main queue itself is never perturbed.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lib import DomainError
from lib.dist import ModelParams, sample
from lib.utils import format_number

logger = logging.getLogger(__name__)

DEFAULT_WARMUP = 100_000
DEFAULT_REPLICATIONS = 8
SPACING_CYCLES = 10.0
SPARSE_BIN = 20
MIN_HISTOGRAM_SAMPLES = 10_000
_DRAW_BATCH = 4096
_TAGGED = -1


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    seed: int
    tagged: int
    warmup: int = DEFAULT_WARMUP
    x: float | None = None
    replications: int = DEFAULT_REPLICATIONS

    def __post_init__(self) -> None:
        if self.tagged < 1:
            raise ValueError(f"Tagged customer count must be >= 1, got {self.tagged}.")
        if self.warmup < 0:
            raise ValueError(f"Warmup must be >= 0, got {self.warmup}.")
        if self.replications < 1:
            raise ValueError(f"Replications must be >= 1, got {self.replications}.")
        if self.x is not None and self.x <= 0:
            raise ValueError(f"Tagged service requirement must be positive, got {self.x}.")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"Seed must fit in 64 bits, got {self.seed}.")

    @property
    def spacing(self) -> float:
        """Mean gap between inspections: ten mean busy cycles 1/(lambda (1 - rho))."""
        return SPACING_CYCLES / (self.params.lam * self.params.eps)


@dataclass
class SimResult:
    config: SimConfig
    sojourns: np.ndarray
    requirements: np.ndarray
    alone: np.ndarray
    in_system_means: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        if len(self.sojourns) != self.config.tagged:
            raise ValueError("Sample count does not match the tagged count.")

    @property
    def atom_count(self) -> int:
        return int(np.count_nonzero(self.alone))

    @property
    def atom_fraction(self) -> float:
        return self.atom_count / len(self.sojourns)

    def mean_sojourn(self) -> tuple[float, float]:
        n = len(self.sojourns)
        stderr = float(np.std(self.sojourns, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return float(np.mean(self.sojourns)), stderr

    def atom_stderr(self) -> float:
        p = self.atom_fraction
        return math.sqrt(p * (1.0 - p) / len(self.sojourns))

    def mean_in_system(self) -> tuple[float, float]:
        """Time-average population of the main queue, with a between-replication standard error."""
        means = self.in_system_means
        if len(means) < 2:
            return float(np.mean(means)), math.inf
        return float(np.mean(means)), float(np.std(means, ddof=1) / math.sqrt(len(means)))


@dataclass(frozen=True)
class HistogramBin:
    t: float
    density: float
    stderr: float
    count: int


class ProcessorSharingServer:
    """Single PS server: each of n customers present drains its remaining work at rate 1/n."""

    def __init__(self) -> None:
        self.ids: list[int] = []
        self.remaining: list[float] = []

    def __len__(self) -> int:
        return len(self.ids)

    def copy(self) -> ProcessorSharingServer:
        clone = ProcessorSharingServer()
        clone.ids = list(self.ids)
        clone.remaining = list(self.remaining)
        return clone

    def arrive(self, customer: int, work: float) -> None:
        if work < 0:
            raise ValueError(f"Work must be non-negative, got {work}.")
        self.ids.append(customer)
        self.remaining.append(work)

    def time_to_next_departure(self) -> float:
        if not self.remaining:
            return math.inf
        return min(self.remaining) * len(self.remaining)

    def advance(self, dt: float) -> None:
        if not self.remaining or dt <= 0.0:
            return
        work = dt / len(self.remaining)
        self.remaining = [rem - work for rem in self.remaining]

    def depart(self) -> int:
        """Remove and return the customer with the least remaining work."""
        if not self.remaining:
            raise ValueError("No customer to depart.")
        idx = min(range(len(self.remaining)), key=self.remaining.__getitem__)
        self.remaining.pop(idx)
        return self.ids.pop(idx)


class ArrivalDraws:
    def __init__(self, params: ModelParams, rng: np.random.Generator) -> None:
        self._params = params
        self._rng = rng
        self._services: list[float] = []
        self._gaps: list[float] = []

    def service(self) -> float:
        if not self._services:
            self._services = sample(self._params.dist, self._rng, _DRAW_BATCH).tolist()
        return self._services.pop()

    def interarrival(self) -> float:
        if not self._gaps:
            self._gaps = self._rng.exponential(1.0 / self._params.lam, _DRAW_BATCH).tolist()
        return self._gaps.pop()


class _Queue:
    """Main stationary queue with time-integrated population."""

    def __init__(self, params: ModelParams, draws: ArrivalDraws) -> None:
        self.server = ProcessorSharingServer()
        self.draws = draws
        self.clock = 0.0
        self.next_arrival = draws.interarrival()
        self.arrivals = 0
        self.area = 0.0
        self._next_id = 0

    def _arrive(self) -> None:
        self.server.arrive(self._next_id, self.draws.service())
        self._next_id += 1
        self.arrivals += 1
        self.next_arrival = self.clock + self.draws.interarrival()

    def _move(self, until: float) -> None:
        dt = until - self.clock
        self.area += len(self.server) * dt
        self.server.advance(dt)
        self.clock = until

    def step(self) -> None:
        departure = self.clock + self.server.time_to_next_departure()
        if self.next_arrival <= departure:
            self._move(self.next_arrival)
            self._arrive()
        else:
            self._move(departure)
            self.server.depart()

    def run_until(self, target: float) -> None:
        while min(self.next_arrival, self.clock + self.server.time_to_next_departure()) <= target:
            self.step()
        self._move(target)


def tagged_sojourn(
    snapshot: ProcessorSharingServer, x: float, draws: ArrivalDraws
) -> tuple[float, bool]:
    """Run a copy of the queue from a tagged arrival with requirement x until it departs."""
    server = snapshot.copy()
    alone = len(server) == 0
    server.arrive(_TAGGED, x)
    clock = 0.0
    next_arrival = draws.interarrival()
    next_id = 0
    while True:
        departure = clock + server.time_to_next_departure()
        if next_arrival < departure:
            server.advance(next_arrival - clock)
            clock = next_arrival
            server.arrive(next_id, draws.service())
            next_id += 1
            next_arrival = clock + draws.interarrival()
            alone = False
            continue
        server.advance(departure - clock)
        clock = departure
        if server.depart() == _TAGGED:
            return clock, alone


def _replication(
    task: tuple[SimConfig, int, np.random.SeedSequence],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    config, count, seed_seq = task
    rng = np.random.default_rng(seed_seq)
    draws = ArrivalDraws(config.params, rng)
    queue = _Queue(config.params, draws)
    while queue.arrivals < config.warmup:
        queue.step()
    start, queue.area = queue.clock, 0.0

    sojourns = np.empty(count)
    requirements = np.empty(count)
    alone = np.zeros(count, dtype=bool)
    for i in range(count):
        queue.run_until(queue.clock + rng.exponential(config.spacing))
        x = config.x if config.x is not None else draws.service()
        sojourns[i], alone[i] = tagged_sojourn(queue.server, x, draws)
        requirements[i] = x
    elapsed = queue.clock - start
    return sojourns, requirements, alone, queue.area / elapsed if elapsed > 0 else 0.0


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def simulate(config: SimConfig, *, workers: int = 1) -> SimResult:
    """Run the replications (in parallel when workers > 1) and merge them in index order."""
    params = config.params
    if params.rho >= 1.0:
        raise DomainError(f"Simulation needs rho < 1, got {params.rho}.")
    parts = min(config.replications, config.tagged)
    seeds = np.random.SeedSequence(config.seed).spawn(parts)
    tasks = list(zip([config] * parts, _split(config.tagged, parts), seeds, strict=True))
    if workers > 1 and params.dist.density_fn is not None:
        logger.warning("Density callbacks are not shipped to worker processes; running serially.")
        workers = 1
    logger.info(
        "Simulating %d tagged customers in %d replications (workers=%d).",
        config.tagged,
        parts,
        workers,
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_replication, tasks))
    else:
        outputs = [_replication(task) for task in tasks]
    return SimResult(
        config=config,
        sojourns=np.concatenate([out[0] for out in outputs]),
        requirements=np.concatenate([out[1] for out in outputs]),
        alone=np.concatenate([out[2] for out in outputs]),
        in_system_means=np.array([out[3] for out in outputs]),
    )


def empirical_density(
    result: SimResult,
    bin_width: float,
    domain: tuple[float, float] | None = None,
    *,
    min_samples: int = MIN_HISTOGRAM_SAMPLES,
) -> list[HistogramBin]:
    """Histogram density of the continuous part; the atom is excluded and reported separately.

    Densities are normalised by the total sample count, so the bin sum times the width plus the
    atom fraction is 1 whenever the domain covers every continuous sample.
    """
    total = len(result.sojourns)
    if total < min_samples:
        raise ValueError(f"Need at least {min_samples} samples for a histogram, got {total}.")
    if bin_width <= 0:
        raise ValueError(f"Bin width must be positive, got {bin_width}.")
    continuous = result.sojourns[~result.alone]
    if domain is None:
        if continuous.size == 0:
            return []
        domain = (float(continuous.min()), float(continuous.max()))
    lo, hi = domain
    if hi <= lo:
        raise ValueError(f"Histogram domain ({lo}, {hi}) is empty.")
    n_bins = max(1, math.ceil((hi - lo) / bin_width - 1e-12))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(continuous, bins=edges)

    bins: list[HistogramBin] = []
    sparse = 0
    for i, count in enumerate(counts.tolist()):
        p = count / total
        if count < SPARSE_BIN:
            sparse += 1
        bins.append(
            HistogramBin(
                t=float(0.5 * (edges[i] + edges[i + 1])),
                density=p / bin_width,
                stderr=math.sqrt(p * (1.0 - p) / total) / bin_width,
                count=int(count),
            )
        )
    if sparse:
        logger.warning(
            "%d of %d histogram bins hold fewer than %d samples.", sparse, n_bins, SPARSE_BIN
        )
    return bins


def export_samples(result: SimResult, path: Path) -> None:
    """Write one sojourn per line as plain decimal text."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [format_number(float(v)) for v in result.sojourns]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
