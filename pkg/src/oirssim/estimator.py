"""Joint space-time sampling (JSTS) channel estimation.

The OIRS is cut into ``s x s`` subarrays. In every training block one
subarray is active and its elements are aimed at distinct LED/PD pairs, so a
short pilot sequence identifies one sample per pair per subarray. The sample
lattice is then interpolated over the array (and over coherence windows in
time) to recover every element's gain for every pair.

Element ``(i, j)`` (0-based row, column) has flat index ``n = i * n_h + j``
and cascaded-channel column ``n_r + n_t * N_r`` holds LED ``n_t`` / PD ``n_r``.
"""

from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .channel import AlignmentConfig, assemble_channel, pair_column
from .errors import DomainError, IncompleteScheduleError, NumericError, ValidationError
from .linalg import numerical_rank, solve_spd

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubarrayPlan:
    n_v: int
    n_h: int
    s: int

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1 or self.s < 1:
            raise DomainError("plan dimensions must be positive")

    @property
    def q_v(self) -> int:
        return -(-self.n_v // self.s)

    @property
    def q_h(self) -> int:
        return -(-self.n_h // self.s)

    @property
    def Q(self) -> int:
        return self.q_v * self.q_h

    @property
    def N(self) -> int:
        return self.n_v * self.n_h

    def element(self, q_v: int, q_h: int, r: int, c: int) -> tuple[int, int] | None:
        """Element at local offset ``(r, c)`` of subarray ``(q_v, q_h)``; None if off the array."""
        i, j = q_v * self.s + r, q_h * self.s + c
        if i >= self.n_v or j >= self.n_h:
            return None
        return i, j

    def flat(self, i: int, j: int) -> int:
        return i * self.n_h + j

    def block_index(self, i: int, j: int) -> int:
        return (i // self.s) * self.q_h + (j // self.s)


def partition_subarrays(n_v: int, n_h: int, d_c: float, b: float) -> SubarrayPlan:
    """Plan with spacing ``s = ceil(d_c / b)``."""
    if d_c <= 0 or b <= 0:
        raise DomainError("coherence distance and element spacing must be positive")
    s = max(1, math.ceil(d_c / b - 1e-12))
    if s > min(n_v, n_h):
        log.warning("spacing %d exceeds the array; using a single subarray", s)
        s = max(n_v, n_h)
    return SubarrayPlan(n_v, n_h, s)


@dataclass(frozen=True)
class Block:
    """One training block: the elements it activates and their pairs."""

    index: int
    subarray: int
    pass_index: int
    elements: tuple[int, ...]
    pairs: tuple[tuple[int, int], ...]  # (n_t, n_r) for each element


@dataclass(frozen=True)
class ReflectionSchedule:
    plan: SubarrayPlan
    n_t: int
    n_r: int
    passes: tuple[dict, ...]  # element -> (n_t, n_r) for each pass
    blocks: tuple[Block, ...]

    def base_alignment(self, pass_index: int = 0) -> AlignmentConfig:
        return AlignmentConfig.from_pairs(self.passes[pass_index], self.plan.N, self.n_t, self.n_r)

    def block_alignment(self, block: Block) -> AlignmentConfig:
        pairs = dict(zip(block.elements, block.pairs))
        return AlignmentConfig.from_pairs(pairs, self.plan.N, self.n_t, self.n_r)

    @property
    def activated(self) -> dict:
        """``(n, n_t, n_r) -> block index`` for every directly estimated entry."""
        out = {}
        for blk in self.blocks:
            for n, (nt, nr) in zip(blk.elements, blk.pairs):
                out[(n, nt, nr)] = blk.index
        return out


def build_schedule(plan: SubarrayPlan, n_t: int, n_r: int) -> ReflectionSchedule:
    """Assign elements to LED/PD pairs and order the training blocks.

    With ``s >= max(n_r, n_t)`` the element at local ``(n_r, n_t)`` of every
    subarray serves PD ``n_r`` and LED ``n_t``. Smaller subarrays cycle the
    pairs over the array (element ``(i, j)`` serves ``(j mod n_t, i mod n_r)``);
    for ``s = 1`` every cyclic shift is scheduled, so each element is
    measured for every pair.
    """
    if n_t < 1 or n_r < 1:
        raise DomainError("need at least one LED and one PD")
    if plan.s >= n_r and plan.s >= n_t:
        shifts = [None]
    elif plan.s == 1:
        shifts = [(pr, pt) for pt in range(n_t) for pr in range(n_r)]
    else:
        shifts = [(0, 0)]
    passes = []
    for shift in shifts:
        assign = {}
        for i in range(plan.n_v):
            for j in range(plan.n_h):
                if shift is None:
                    r, c = i % plan.s, j % plan.s
                    if r < n_r and c < n_t:
                        assign[plan.flat(i, j)] = (c, r)
                else:
                    assign[plan.flat(i, j)] = ((j + shift[1]) % n_t, (i + shift[0]) % n_r)
        passes.append(assign)
    blocks = []
    for p, assign in enumerate(passes):
        by_block: dict[int, list[int]] = {}
        for n in sorted(assign):
            by_block.setdefault(plan.block_index(n // plan.n_h, n % plan.n_h), []).append(n)
        for q in sorted(by_block):
            els = tuple(by_block[q])
            blocks.append(Block(len(blocks), q, p, els, tuple(assign[n] for n in els)))
    return ReflectionSchedule(plan, n_t, n_r, tuple(passes), tuple(blocks))


def pilot_matrix(n_t: int, P: int, amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * [I I I ...]`` truncated to ``P`` columns (one LED per slot)."""
    if P < n_t:
        raise DomainError("need at least one pilot slot per LED")
    reps = -(-P // n_t)
    return amplitude * np.tile(np.eye(n_t), reps)[:, :P]


def mmse_estimate(Y, X, sigma: float) -> np.ndarray:
    """``Y X^T (X X^T + sigma^2 I)^-1`` (ridge-regularized least squares).

    Rows of ``Y`` are independent, so several blocks may be stacked row-wise.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.ndim != 2 or X.ndim != 2 or Y.shape[1] != X.shape[1]:
        raise ValidationError(f"Y {Y.shape} and X {X.shape} disagree on the slot count")
    G = X @ X.T + sigma ** 2 * np.eye(X.shape[0])
    try:
        # solve G Z = X Y^T, then H = Z^T (G is symmetric)
        return solve_spd(G, X @ Y.T).T
    except NumericError as exc:
        raise NumericError("regularized pilot Gram matrix is singular") from exc


def block_channels(H_c, schedule: ReflectionSchedule) -> np.ndarray:
    """True ``N_r x N_t`` channel seen in every block, shape ``(B, N_r, N_t)``."""
    H_c = np.asarray(H_c, dtype=float)
    out = np.zeros((len(schedule.blocks), schedule.n_r, schedule.n_t))
    for blk in schedule.blocks:
        for n, (nt, nr) in zip(blk.elements, blk.pairs):
            out[blk.index, nr, nt] += H_c[n, pair_column(nt, nr, schedule.n_r)]
    return out


def block_channel(H_c, schedule: ReflectionSchedule, block: Block) -> np.ndarray:
    """Same as :func:`block_channels` for one block, via the alignment matrices."""
    return assemble_channel(H_c, schedule.block_alignment(block))


def estimate_blocks(H_blocks, X, sigma: float, rng) -> np.ndarray:
    """Simulate every block's received pilots and estimate it.

    Noise for all blocks is drawn in block order from ``rng``.
    """
    H_blocks = np.asarray(H_blocks, dtype=float)
    B, n_r, n_t = H_blocks.shape
    Y = H_blocks @ X
    if sigma > 0:
        Y = Y + rng.normal(0.0, sigma, size=Y.shape)
    est = mmse_estimate(Y.reshape(B * n_r, -1), X, sigma)
    return est.reshape(B, n_r, n_t)


@dataclass
class ClusterGrid:
    """Samples of one LED/PD pair on a tensor lattice of element positions."""

    pair: tuple[int, int]  # (n_t, n_r)
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray  # len(rows) x len(cols), nan where not sampled
    block_ids: np.ndarray


def collect_clusters(estimates, schedule: ReflectionSchedule) -> dict:
    """Arrange block estimates into per-pair sample grids.

    ``estimates`` is an array ``(B, N_r, N_t)`` or a mapping block index ->
    ``N_r x N_t`` matrix. Raises IncompleteScheduleError if a block is missing.
    """
    if isinstance(estimates, dict):
        missing = [b.index for b in schedule.blocks if b.index not in estimates]
        if missing:
            raise IncompleteScheduleError(f"no estimate for blocks {missing[:5]}")
        get = estimates.__getitem__
    else:
        arr = np.asarray(estimates, dtype=float)
        if arr.shape[0] < len(schedule.blocks):
            raise IncompleteScheduleError("fewer estimates than scheduled blocks")
        get = arr.__getitem__
    samples: dict = {}
    for blk in schedule.blocks:
        H = np.asarray(get(blk.index))
        for n, (nt, nr) in zip(blk.elements, blk.pairs):
            samples.setdefault((nt, nr), {})[divmod(n, schedule.plan.n_h)] = (H[nr, nt], blk.index)
    grids = {}
    for pair, pts in samples.items():
        rows = np.array(sorted({i for i, _ in pts}))
        cols = np.array(sorted({j for _, j in pts}))
        vals = np.full((len(rows), len(cols)), np.nan)
        ids = np.full((len(rows), len(cols)), -1)
        ri = {r: k for k, r in enumerate(rows)}
        ci = {c: k for k, c in enumerate(cols)}
        for (i, j), (v, b) in pts.items():
            vals[ri[i], ci[j]] = v
            ids[ri[i], ci[j]] = b
        grids[pair] = ClusterGrid(pair, rows, cols, vals, ids)
    return grids


def _interp1(xs, ys, xq, extrapolation: str) -> tuple[np.ndarray, int]:
    """Piecewise-linear interpolation ignoring nan samples."""
    ok = np.isfinite(ys)
    xs, ys = np.asarray(xs, float)[ok], np.asarray(ys, float)[ok]
    if xs.size == 0:
        raise IncompleteScheduleError("a sample row is empty")
    out = np.interp(xq, xs, ys)
    outside = (xq < xs[0]) | (xq > xs[-1])
    if extrapolation == "linear" and xs.size >= 2:
        lo = xq < xs[0]
        hi = xq > xs[-1]
        out[lo] = ys[0] + (xq[lo] - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0])
        out[hi] = ys[-1] + (xq[hi] - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    elif extrapolation not in ("hold", "linear"):
        raise DomainError(f"unknown extrapolation policy {extrapolation!r}")
    return out, int(np.sum(outside))


def interpolate_grid(grid: ClusterGrid, n_v: int, n_h: int, method: str = "bilinear",
                     extrapolation: str = "hold") -> tuple[np.ndarray, int]:
    """Spatially interpolate one pair's samples to the full ``n_v x n_h`` array.

    Returns the field and the number of elements outside the sample hull.
    """
    ii = np.arange(n_v, dtype=float)
    jj = np.arange(n_h, dtype=float)
    rows_in = int(np.sum((ii >= grid.rows[0]) & (ii <= grid.rows[-1])))
    cols_in = int(np.sum((jj >= grid.cols[0]) & (jj <= grid.cols[-1])))
    outside = n_v * n_h - rows_in * cols_in
    if (method == "bicubic" and len(grid.rows) >= 4 and len(grid.cols) >= 4
            and np.all(np.isfinite(grid.values))):
        spl = RectBivariateSpline(grid.rows, grid.cols, grid.values, kx=3, ky=3)
        if extrapolation == "hold":
            field = spl(np.clip(ii, grid.rows[0], grid.rows[-1]), np.clip(jj, grid.cols[0], grid.cols[-1]))
        else:
            field = spl(ii, jj)
        return field, outside
    if method not in ("bilinear", "bicubic"):
        raise DomainError(f"unknown interpolation method {method!r}")
    partial = np.empty((len(grid.rows), n_h))
    for k in range(len(grid.rows)):
        partial[k], _ = _interp1(grid.cols, grid.values[k], jj, extrapolation)
    field = np.empty((n_v, n_h))
    for j in range(n_h):
        field[:, j], _ = _interp1(grid.rows, partial[:, j], ii, extrapolation)
    return field, outside


@dataclass
class InterpolationReport:
    extrapolated: int = 0
    clamped: int = 0


def interpolate_full(grids_by_time, plan: SubarrayPlan, n_t: int, n_r: int,
                     target_time: float | None = None, method: str = "bilinear",
                     extrapolation: str = "hold") -> tuple[np.ndarray, InterpolationReport]:
    """Full ``N x (N_t N_r)`` estimate from cluster grids over one or more windows.

    ``grids_by_time`` is a list of ``(t, grids)``; a plain grids dict means a
    single window. Interpolation is separable: space first, then linear in
    time with hold outside the sampled window range. Negative values are
    clamped to zero.
    """
    if isinstance(grids_by_time, dict):
        grids_by_time = [(0.0, grids_by_time)]
    if not grids_by_time:
        raise IncompleteScheduleError("no time windows to interpolate")
    grids_by_time = sorted(grids_by_time, key=lambda tg: tg[0])
    times = np.array([t for t, _ in grids_by_time])
    report = InterpolationReport()
    fields = []
    for _, grids in grids_by_time:
        Hc = np.empty((plan.N, n_t * n_r))
        for nt in range(n_t):
            for nr in range(n_r):
                if (nt, nr) not in grids:
                    raise IncompleteScheduleError(f"no samples for LED {nt}, PD {nr}")
                f, out = interpolate_grid(grids[(nt, nr)], plan.n_v, plan.n_h, method, extrapolation)
                report.extrapolated += out
                Hc[:, pair_column(nt, nr, n_r)] = f.ravel()
        fields.append(Hc)
    t = times[-1] if target_time is None else float(target_time)
    if len(fields) == 1 or t <= times[0]:
        H = fields[0] if t <= times[0] else fields[-1]
    elif t >= times[-1]:
        H = fields[-1]
    else:
        k = int(np.searchsorted(times, t)) - 1
        lam = (t - times[k]) / (times[k + 1] - times[k])
        H = (1 - lam) * fields[k] + lam * fields[k + 1]
    report.clamped = int(np.sum(H < 0))
    return np.maximum(H, 0.0), report


def nmse(H_est, H_true, mask=None) -> float:
    """``||H_est - H_true||_F^2 / ||H_true||_F^2`` (optionally over ``mask``)."""
    A = np.asarray(H_est, dtype=float)
    B = np.asarray(H_true, dtype=float)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    if mask is not None:
        A, B = A[mask], B[mask]
    den = float(np.sum(B * B))
    if den == 0.0:
        raise DomainError("true channel has zero norm")
    return float(np.sum((A - B) ** 2)) / den


@dataclass(frozen=True)
class OverheadReport:
    s: int
    Q: int
    grid: tuple[int, int]
    parameters: int
    baseline_parameters: int
    reduction: float
    flops_per_block: int
    flops: int


def overhead_report(plan: SubarrayPlan, n_t: int, n_r: int, P: int) -> OverheadReport:
    """Parameter count ``Q N_t N_r`` and an ``O(P N_t^2 (N_t + 2 N_r))`` flop model per block."""
    params = plan.Q * n_t * n_r
    base = plan.N * n_t * n_r
    per_block = P * n_t ** 2 * (n_t + 2 * n_r)
    return OverheadReport(plan.s, plan.Q, (plan.q_v, plan.q_h), params, base, base / params,
                          per_block, per_block * plan.Q)


def schedule_rank(schedule: ReflectionSchedule, pass_index: int = 0) -> int:
    return numerical_rank(schedule.base_alignment(pass_index).V)


@dataclass
class JstsDiagnostics:
    nmse: float
    params: int
    swept: int
    s: int
    sigma: float
    seed: int
    block_nmse: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    n_blocks: int = 0
    windows: int = 1
    extrapolated: int = 0
    clamped: int = 0
    coherence_time: float = math.inf
    coherence_distance: float = math.nan

    def summary(self) -> dict:
        return dict(nmse=self.nmse, params=self.params, swept=self.swept, s=self.s,
                    sigma=self.sigma, seed=self.seed)


def estimate_window(H_c, schedule: ReflectionSchedule, X, sigma: float, rng):
    """Run every block of one coherence window; returns block truths and estimates."""
    Hb = block_channels(H_c, schedule)
    return Hb, estimate_blocks(Hb, X, sigma, rng)


@dataclass(frozen=True)
class System:
    """Devices of one estimation scenario; ``k`` scales the Lambertian gain."""

    array: "OirsArray"
    leds: tuple
    pds: tuple
    room: "Room"
    k: float = 1.0

    @property
    def n_t(self) -> int:
        return len(self.leds)

    @property
    def n_r(self) -> int:
        return len(self.pds)


@dataclass(frozen=True)
class JstsConfig:
    s: int | None = None
    xi_c: float = 0.04
    pilots: int = 100
    amplitude: float = 1.0
    method: str = "bilinear"
    extrapolation: str = "hold"
    activated_only: bool = False
    windows: int = 1
    velocity: tuple = (0.0, 0.0, 0.0)
    model: str = "lambertian"
    radius: float = 0.5
    codebook: tuple = (math.radians(1.5), math.radians(15.0))


def lambertian_truth(system: System, pd_shift=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Cascaded channel under ideal alignment from the point-source model."""
    from .channel import lambertian_gains

    R = system.array.positions()
    H = np.empty((len(R), system.n_t * system.n_r))
    shift = np.asarray(pd_shift, dtype=float)
    for nt, led in enumerate(system.leds):
        for nr, pd in enumerate(system.pds):
            H[:, pair_column(nt, nr, system.n_r)] = lambertian_gains(
                R, pd.center + shift, led.center, led.normal, led.m, pd.normal, pd.fov, system.k)
    return H


def physical_truth(system: System, config: JstsConfig, pd_shift=(0.0, 0.0, 0.0),
                   quad=None) -> tuple[np.ndarray, int]:
    """Cascaded channel when every element is aligned by a codebook sweep.

    Each element gets a non-uniform codebook for each LED, sweeps the
    codewords within ``config.radius`` of each PD and keeps the best patch
    gain. Returns the channel and the total number of swept codewords.
    """
    from .channel import QuadratureSpec
    from .codebook import build_nonuniform, sweep_subset
    from .channel import patch_gains

    quad = quad or QuadratureSpec()
    arr = system.array
    R = arr.positions()
    shift = np.asarray(pd_shift, dtype=float)
    H = np.zeros((len(R), system.n_t * system.n_r))
    swept = 0
    for nt, led in enumerate(system.leds):
        for n, Rn in enumerate(R):
            cb = build_nonuniform(led.center, Rn, config.codebook[0], config.codebook[1], system.room)
            for nr, pd in enumerate(system.pds):
                U = pd.center + shift
                subset, _ = sweep_subset(cb, led.center, Rn, U, config.radius, system.room)
                g = patch_gains(Rn, subset[:, 0], subset[:, 1], U, led, pd.moved(U),
                                side=arr.side, reflectivity=arr.reflectivity, quad=quad)
                swept += len(subset)
                H[n, pair_column(nt, nr, system.n_r)] = g.max()
    return H, swept


def jsts_run(system: System, sigma: float, seed: int, config: JstsConfig = JstsConfig(),
             truth=None):
    """Run the full JSTS loop once.

    Parameters
    ----------
    sigma : float
        Absolute noise standard deviation per pilot slot.
    truth : callable, optional
        ``truth(pd_shift) -> (H_c, swept)``; defaults to the model selected in
        ``config``. Pass a cached callable to reuse expensive channels.

    Returns
    -------
    H_est, H_true : ndarray
        Estimated and true cascaded channels at the target time.
    diag : JstsDiagnostics
    """
    from .coherence import CoherenceGeometry, coherence_distance, coherence_time

    arr = system.array
    geom = CoherenceGeometry.from_devices(arr.center, system.leds[0], system.pds[0])
    d_c = coherence_distance(geom, config.xi_c).d_c
    v = np.asarray(config.velocity, dtype=float)
    t_c = coherence_time(geom, v, config.xi_c).length if np.any(v) else math.inf

    plan = (SubarrayPlan(arr.n_v, arr.n_h, config.s) if config.s
            else partition_subarrays(arr.n_v, arr.n_h, d_c, arr.spacing))
    schedule = build_schedule(plan, system.n_t, system.n_r)
    X = pilot_matrix(system.n_t, config.pilots, config.amplitude)
    rng = np.random.default_rng(seed)

    if truth is None:
        if config.model == "lambertian":
            def truth(shift):
                return lambertian_truth(system, shift), 0
        elif config.model == "physical":
            def truth(shift):
                return physical_truth(system, config, shift)
        else:
            raise DomainError(f"unknown channel model {config.model!r}")

    windows = max(1, int(config.windows))
    step = t_c if math.isfinite(t_c) else 0.0
    grids_by_time = []
    swept = 0
    block_err = []
    for w in range(windows):
        t = w * step
        H_c, sw = truth(tuple(v * t))
        swept += sw
        Hb, est = estimate_window(H_c, schedule, X, sigma, rng)
        den = np.sum(Hb ** 2, axis=(1, 2))
        block_err.append(np.where(den > 0, np.sum((est - Hb) ** 2, axis=(1, 2)) / np.where(den > 0, den, 1), np.nan))
        grids_by_time.append((t, collect_clusters(est, schedule)))
    target = (windows - 1) * step
    H_est, rep = interpolate_full(grids_by_time, plan, system.n_t, system.n_r, target,
                                  config.method, config.extrapolation)
    H_true = H_c if windows == 1 else truth(tuple(v * target))[0]
    mask = None
    if config.activated_only:
        mask = np.zeros(H_true.shape, dtype=bool)
        for (n, nt, nr) in schedule.activated:
            mask[n, pair_column(nt, nr, system.n_r)] = True
    err = nmse(H_est, H_true, mask)
    params = len(schedule.blocks) * system.n_t * system.n_r
    diag = JstsDiagnostics(err, params, swept, plan.s, sigma, seed, np.concatenate(block_err),
                           len(schedule.blocks), windows, rep.extrapolated, rep.clamped, t_c, d_c)
    return H_est, H_true, diag
