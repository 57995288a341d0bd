"""Joint frame/power/assignment/phase optimization.

The throughput maximization decomposes into: closed-form frame timing
(slot count, period durations, scheduled/contended split), a water-filling
power allocation over the static users, an exact 0-1 assignment of static
users to RIS slots, and closed-form per-pair phase alignment.  The
assignment and power steps alternate; each step can only improve the sum
rate, so the outer objective is monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import channel as chan
from . import dcf as dcfmod
from .scenario import Scenario, classify_users

POWER_TOL = 1e-12
ALTERNATION_TOL = 1e-12


class InfeasibleError(RuntimeError):
    """A hard constraint cannot be met; message names the binding user."""


class DegenerateFrameError(ValueError):
    pass


@dataclass(frozen=True)
class FrameConfig:
    """Per-frame period durations and the scheduled/contended split."""

    t0_s: float
    t1_s: float
    t2_s: float
    alpha: float
    beta: float
    num_slots: int
    data_slot_s: float

    @property
    def total_s(self) -> float:
        return self.t0_s + self.t1_s + self.t2_s

    @property
    def scheduled_s(self) -> float:
        return self.alpha * self.t2_s

    @property
    def contended_s(self) -> float:
        return self.beta * self.t2_s

    def validate(self, num_static: int, num_channels: int, cascade=None) -> None:
        if abs(self.alpha + self.beta - 1.0) > 1e-12:
            raise ValueError("alpha + beta must equal 1")
        if self.num_slots * num_channels < num_static:
            raise ValueError(
                "slot capacity J*C=%d below static count %d"
                % (self.num_slots * num_channels, num_static)
            )
        if self.alpha > 0:
            if abs(self.scheduled_s - self.num_slots * self.data_slot_s) > 1e-9:
                raise ValueError("alpha*t2 must equal J*t")
            if cascade is not None:
                need = cascade.required_beta_t2_s / (self.num_slots * self.data_slot_s)
                if self.beta / self.alpha < need - 1e-9:
                    raise ValueError("beta/alpha below the fairness feasibility floor")


@dataclass
class AllocationState:
    """Assignment, phase, and power state for every user.

    ris_of_user[k] is -1 for unassigned; slot_of_user likewise (mobile users
    never hold scheduled slots).  Phases are stored per (user, RIS) pair.
    """

    ris_of_user: np.ndarray  # (U,) int
    slot_of_user: np.ndarray  # (U,) int
    psi: np.ndarray  # (U, M, N) float phases
    rho_sq_w: np.ndarray  # (U,) float transmit power

    def a_km(self, num_ris: int) -> np.ndarray:
        u = self.ris_of_user.shape[0]
        a = np.zeros((u, num_ris), dtype=int)
        for k, m in enumerate(self.ris_of_user):
            if m >= 0:
                a[k, m] = 1
        return a

    def t_kj(self, num_slots: int) -> np.ndarray:
        u = self.slot_of_user.shape[0]
        t = np.zeros((u, num_slots), dtype=int)
        for k, j in enumerate(self.slot_of_user):
            if j >= 0:
                t[k, j] = 1
        return t


def empty_allocation(num_users: int, num_ris: int, num_elements: int) -> AllocationState:
    return AllocationState(
        ris_of_user=np.full(num_users, -1, dtype=int),
        slot_of_user=np.full(num_users, -1, dtype=int),
        psi=np.zeros((num_users, num_ris, num_elements)),
        rho_sq_w=np.zeros(num_users),
    )


def check_allocation(
    alloc: AllocationState,
    static_ids,
    mobile_ids,
    num_ris: int,
    num_slots: int,
    p_max_w: float,
) -> list:
    """Standalone feasibility audit; returns a list of violations."""
    bad = []
    a = alloc.a_km(num_ris)
    for k in static_ids:
        if a[k].sum() != 1:
            bad.append("static user %d must hold exactly one RIS" % k)
        if alloc.slot_of_user[k] < 0 or alloc.slot_of_user[k] >= num_slots:
            bad.append("static user %d must hold exactly one data slot" % k)
    for k in mobile_ids:
        if a[k].sum() > 1:
            bad.append("mobile user %d holds more than one RIS" % k)
    per_ris = a[np.asarray(static_ids, dtype=int)].sum(axis=0) if static_ids else np.zeros(num_ris)
    if np.any(per_ris > num_slots):
        bad.append("a RIS exceeds its slot capacity J=%d" % num_slots)
    # distinct slots within one RIS
    for m in range(num_ris):
        slots = [alloc.slot_of_user[k] for k in static_ids if alloc.ris_of_user[k] == m]
        if len(slots) != len(set(slots)):
            bad.append("duplicate slot on RIS %d" % m)
    if static_ids:
        total = float(alloc.rho_sq_w[np.asarray(static_ids, dtype=int)].sum())
        if total > p_max_w + 1e-12:
            bad.append("static power budget exceeded: %.6g > %.6g" % (total, p_max_w))
    return bad


def optimal_frame_timing(
    num_static: int,
    num_mobile: int,
    num_channels: int,
    dcf,
    t1_s: float,
    num_existing=None,
    cascade=None,
) -> FrameConfig:
    """Closed-form frame timing.

    J = ceil(X/C) (the slot capacity bound J*C >= X forces rounding up for
    non-divisible X), t0 = K * t_p, t2 = J*t + N_r * t_r, and the split
    alpha = J*t / t2, beta = N_r*t_r / t2 sits exactly on the fairness
    feasibility boundary.  X = 0 degenerates to the pure contended mode,
    Y = 0 to the pure scheduled mode.
    """
    x, y, c = int(num_static), int(num_mobile), int(num_channels)
    if x == 0 and y == 0:
        raise DegenerateFrameError("no users to serve: X = 0 and Y = 0")
    if c < 1:
        raise ValueError("num_channels must be >= 1")
    k_existing = (x + y) if num_existing is None else int(num_existing)
    j_star = -(-x // c)  # ceil
    if cascade is None:
        cascade = dcfmod.contention_cascade(y, c, dcf)
    sched = j_star * dcf.data_slot_s
    cont = cascade.required_beta_t2_s
    t2 = sched + cont
    alpha = sched / t2
    beta = 1.0 - alpha  # exact complement so alpha + beta == 1 bitwise
    return FrameConfig(
        t0_s=k_existing * dcf.pilot_time_s,
        t1_s=float(t1_s),
        t2_s=t2,
        alpha=alpha,
        beta=beta,
        num_slots=j_star,
        data_slot_s=dcf.data_slot_s,
    )


def rate_floor_power(gain_sq_over_noise: float, rate_min_bps: float, bw_hz: float) -> float:
    """Smallest transmit power meeting the per-user rate floor."""
    if gain_sq_over_noise <= 0:
        return math.inf
    return (2.0 ** (rate_min_bps / bw_hz) - 1.0) / gain_sq_over_noise


def allocate_power(
    gain_sq_over_noise: np.ndarray,
    p_max_w: float,
    rate_min_bps: float,
    bw_hz: float,
    user_ids=None,
) -> np.ndarray:
    """Water-filling with per-user rate floors under a sum-power budget.

    Maximizes sum log2(1 + c_k p_k) subject to sum p_k <= P_max and
    p_k >= floor_k.  The problem is separable and strictly concave, so the
    KKT point is p_k(mu) = max(floor_k, mu - 1/c_k) with the water level mu
    found by bisection on the (monotone) budget constraint; the objective is
    increasing, so the budget binds.
    """
    c = np.asarray(gain_sq_over_noise, dtype=float)
    n = c.size
    if n == 0:
        return np.zeros(0)
    ids = list(user_ids) if user_ids is not None else list(range(n))
    floors = np.array([rate_floor_power(ck, rate_min_bps, bw_hz) for ck in c])
    worst = int(np.argmax(floors))
    if floors[worst] > p_max_w + POWER_TOL:
        raise InfeasibleError(
            "rate floor infeasible for user %s: needs %.6g W, budget %.6g W"
            % (ids[worst], floors[worst], p_max_w)
        )
    if floors.sum() > p_max_w + POWER_TOL:
        raise InfeasibleError(
            "rate floors sum to %.6g W, exceeding the %.6g W budget (binding user %s)"
            % (floors.sum(), p_max_w, ids[worst])
        )

    inv_c = 1.0 / c

    def spend(mu):
        return np.maximum(floors, mu - inv_c).sum()

    lo = 0.0
    hi = p_max_w + inv_c.max()
    while spend(hi) < p_max_w:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(mid) > p_max_w:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-16 * max(1.0, p_max_w):
            break
    p = np.maximum(floors, 0.5 * (lo + hi) - inv_c)
    # remove bisection slack so the budget holds exactly
    slack = p_max_w - p.sum()
    free = p > floors + POWER_TOL
    if not np.any(free):
        free = np.ones_like(p, dtype=bool)
    p[free] += slack / free.sum()
    return np.maximum(p, floors)


def power_kkt_residual(
    p: np.ndarray, gain_sq_over_noise: np.ndarray, p_max_w: float, floors: np.ndarray
) -> float:
    """Max stationarity/complementarity violation of a candidate allocation."""
    c = np.asarray(gain_sq_over_noise, dtype=float)
    grad = c / (1.0 + c * p) / math.log(2.0)
    free = p > floors + 1e-9
    resid = abs(p.sum() - p_max_w)
    if np.any(free):
        lam = grad[free].mean()
        resid = max(resid, float(np.max(np.abs(grad[free] - lam))))
        # floored users must not want more power than the free water level
        if np.any(~free):
            resid = max(resid, float(max(0.0, np.max(grad[~free]) - lam)))
    return resid


def assign_ris_static(rate_matrix: np.ndarray, num_slots: int) -> tuple:
    """Exact 0-1 assignment of static users to (RIS, slot) pairs.

    Expands each RIS into J slot-capacity nodes and solves min-cost
    matching, which is optimal for the linear objective and deterministic.
    Returns (ris_of_user, slot_of_user, objective).
    """
    rates = np.asarray(rate_matrix, dtype=float)
    x, m = rates.shape
    if x == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), 0.0
    if x > m * num_slots:
        raise InfeasibleError(
            "assignment infeasible: %d static users exceed J*C = %d slots"
            % (x, m * num_slots)
        )
    cost = np.repeat(-rates, num_slots, axis=1)  # column m*J + j
    rows, cols = linear_sum_assignment(cost)
    ris_of = np.full(x, -1, dtype=int)
    slot_raw = np.full(x, -1, dtype=int)
    for k, col in zip(rows, cols):
        ris_of[k] = col // num_slots
        slot_raw[k] = col % num_slots
    # compact slot indices per RIS in user-id order; the slot label does not
    # affect the objective, this just keeps 0..count-1 occupied
    slot_of = np.full(x, -1, dtype=int)
    for mm in range(m):
        members = [k for k in range(x) if ris_of[k] == mm]
        for j, k in enumerate(sorted(members)):
            slot_of[k] = j
    objective = float(rates[np.arange(x), ris_of].sum())
    return ris_of, slot_of, objective


def centralized_ris_config(
    channels: chan.ChannelRealization,
    static_ids,
    rho_sq_w: np.ndarray,
    noise_w: float,
    bw_hz: float,
    num_slots: int,
    max_iter: int = 8,
    tol: float = 1e-12,
) -> tuple:
    """Alternate phase alignment and RIS assignment for the static users.

    Phase alignment is closed-form per (user, RIS) pair and independent of
    the assignment, so the alternation reaches its fixed point after the
    first full sweep; the loop keeps the iteration structure and verifies
    the objective is nondecreasing.  Returns (ris_of, slot_of, psi_static,
    objective, iterations).
    """
    ids = list(static_ids)
    rates = chan.aligned_rate_matrix(channels, ids, rho_sq_w, noise_w, bw_hz)
    prev_obj = -math.inf
    prev_assignment = None
    ris_of = slot_of = None
    objective = 0.0
    iterations = 0
    for it in range(1, max_iter + 1):
        ris_of, slot_of, objective = assign_ris_static(rates, num_slots)
        if objective < prev_obj - 1e-9:
            raise RuntimeError("alternation objective decreased")
        if prev_assignment is not None and (
            np.array_equal(ris_of, prev_assignment) or objective - prev_obj < tol
        ):
            break
        iterations = it
        prev_obj = objective
        prev_assignment = ris_of.copy()
    psi = np.zeros((len(ids), channels.num_ris, channels.num_elements))
    for row, k in enumerate(ids):
        for m in range(channels.num_ris):
            psi[row, m] = chan.align_phases(
                channels.r[k], channels.h[k, m], channels.g[k, m]
            ).theta
    return ris_of, slot_of, psi, objective, iterations


def distributed_ris_select(
    channels: chan.ChannelRealization,
    user_id: int,
    idle_ris,
    tx_power_w: float,
    noise_w: float,
    bw_hz: float,
) -> tuple:
    """Best idle surface for one mobile user, with its aligned phases.

    Evaluates the aligned-phase rate on every idle RIS and returns
    (ris_id, PhaseConfig, rate); ties break to the lowest RIS id.
    """
    idle = sorted(int(m) for m in idle_ris)
    if not idle:
        raise InfeasibleError("no RIS available for user %d" % user_id)
    best_m = -1
    best_rate = -1.0
    for m in idle:
        s = chan.aligned_snr(
            channels.r[user_id], channels.h[user_id, m], channels.g[user_id, m],
            tx_power_w, noise_w,
        )
        rate = chan.rate_bps(s, bw_hz)
        if rate > best_rate + 1e-15:
            best_rate = rate
            best_m = m
    theta = chan.align_phases(
        channels.r[user_id], channels.h[user_id, best_m], channels.g[user_id, best_m]
    )
    return best_m, theta, best_rate


def complexity_ops(
    num_users_scheduled: int,
    num_ris: int,
    num_elements: int,
    num_existing: int,
    l1: int,
) -> float:
    """Operation count of the frame's centralized computation,
    K + X^3 L1 + M^2 N^2 L1 + X^2 M^2 L1 with X the scheduled-user count."""
    x, m, n = num_users_scheduled, num_ris, num_elements
    return float(num_existing + (x**3 + m**2 * n**2 + x**2 * m**2) * l1)


@dataclass(frozen=True)
class ComplexityReport:
    mac_ops: float
    centralized_ops: float
    distributed_ops: float
    delta_ops: float
    improvement_ratio: float
    frame_time_s: float


def complexity_report(
    num_static: int,
    num_mobile: int,
    num_ris: int,
    num_idle_ris: int,
    num_elements: int,
    l1: int,
    l2: int,
    l3: int,
    num_existing: int,
    frame_time_s: float,
    kappa_s_per_op: float,
) -> ComplexityReport:
    """Complexity counters plus the relative speedup of scheduling only the
    static users instead of all existing ones.

    delta_ops = K^3 L1 - X^3 L1 is the dominant-term saving; the improvement
    ratio (T + delta)/T expresses it against the frame duration after
    converting operations to seconds with the computing-time coefficient.
    """
    x, y, m, n = num_static, num_mobile, num_ris, num_elements
    mac = complexity_ops(x, m, n, num_existing, l1)
    cent = float((m**2 * n**2 + x**2 * m**2) * l2)
    dist = float((num_idle_ris**2 * n**2 + num_idle_ris**2) * l3)
    delta = float((num_existing**3 - x**3) * l1)
    ratio = (frame_time_s + delta * kappa_s_per_op) / frame_time_s if frame_time_s > 0 else math.inf
    return ComplexityReport(
        mac_ops=mac,
        centralized_ops=cent,
        distributed_ops=dist,
        delta_ops=delta,
        improvement_ratio=ratio,
        frame_time_s=frame_time_s,
    )


def rate_increment_direct(
    r: complex, h: np.ndarray, g: np.ndarray, rho_sq_w: float, noise_w: float, bw_hz: float
) -> float:
    """Per-user rate gain of the aligned reflect path over direct-only,
    B*(log2(1+SNR_aligned) - log2(1+|r|^2 rho^2/sigma^2))."""
    snr_ris = chan.aligned_snr(r, h, g, rho_sq_w, noise_w)
    snr_direct = abs(r) ** 2 * rho_sq_w / noise_w
    return bw_hz * (math.log2(1.0 + snr_ris) - math.log2(1.0 + snr_direct))


def rate_increment_kappa(
    r: complex, h: np.ndarray, g: np.ndarray, rho_sq_w: float, noise_w: float, bw_hz: float
) -> float:
    """Same gain via the kappa form B*log2((kappa+dkappa)/kappa) with
    kappa = sigma^2 + |r|^2 rho^2 and
    dkappa = (|hTg|^2 + 2|r||hTg|) rho^2 at aligned phases."""
    reflect = float(np.sum(np.abs(h) * np.abs(g)))
    kappa = noise_w + abs(r) ** 2 * rho_sq_w
    dkappa = (reflect**2 + 2.0 * abs(r) * reflect) * rho_sq_w
    return bw_hz * math.log2((kappa + dkappa) / kappa)


@dataclass
class OptimizationResult:
    frame: FrameConfig
    allocation: AllocationState
    static_ids: list
    mobile_ids: list
    throughput_scheduled_bps: float
    throughput_contended_bps: float
    throughput_overall_bps: float
    throughput_overall_onefactor_bps: float
    onefactor_mismatch_rel: float
    objective_trace: list
    cascade: dcfmod.ContentionSummary
    complexity: ComplexityReport
    sweeps: int


def analytic_throughput(
    frame: FrameConfig,
    alloc: AllocationState,
    channels: chan.ChannelRealization,
    static_ids,
    mobile_ids,
    radio,
    dcf,
) -> tuple:
    """(S_s, S_c, S_o) from the per-user aligned rates and the frame split.

    S_s sums t * rate over scheduled users normalized by alpha*t2; S_c sums
    t_d * rate over contended users normalized by beta*t2; the overall
    figure weights both by t2/(t0+t1+t2).
    """
    bw = radio.subchannel_bw_hz
    noise = radio.noise_w

    def user_rate(k):
        m = alloc.ris_of_user[k]
        if m < 0:
            return 0.0
        s = chan.aligned_snr(
            channels.r[k], channels.h[k, m], channels.g[k, m],
            alloc.rho_sq_w[k], noise,
        )
        return chan.rate_bps(s, bw)

    sched_bits = sum(dcf.data_slot_s * user_rate(k) for k in static_ids)
    cont_bits = sum(dcf.payload_time_s * user_rate(k) for k in mobile_ids)
    s_s = sched_bits / frame.scheduled_s if frame.scheduled_s > 0 else 0.0
    s_c = cont_bits / frame.contended_s if frame.contended_s > 0 else 0.0
    s_o = frame.t2_s / frame.total_s * (frame.alpha * s_s + frame.beta * s_c)
    return s_s, s_c, s_o


def onefactor_throughput(
    frame: FrameConfig,
    alloc: AllocationState,
    channels: chan.ChannelRealization,
    static_ids,
    mobile_ids,
    radio,
    dcf,
) -> float:
    """Single-prefactor overall-throughput form
    B(t+t_d)/(C*(t0+t1+t2)) * sum of all assigned log terms; blends the two
    slot durations into one factor, so it generally differs from the exact
    composition and is reported alongside it."""
    noise = radio.noise_w
    total = 0.0
    for k in list(static_ids) + list(mobile_ids):
        m = alloc.ris_of_user[k]
        if m < 0:
            continue
        s = chan.aligned_snr(
            channels.r[k], channels.h[k, m], channels.g[k, m],
            alloc.rho_sq_w[k], noise,
        )
        total += math.log2(1.0 + s)
    pref = (
        radio.bandwidth_total_hz
        * (dcf.data_slot_s + dcf.payload_time_s)
        / (radio.num_subchannels * frame.total_s)
    )
    return pref * total


def joint_optimize(
    scenario: Scenario,
    channels: chan.ChannelRealization,
    beta_alpha_override: float = None,
    max_sweeps: int = None,
) -> OptimizationResult:
    """Full decomposition: frame timing, then alternating power and
    centralized assignment/phases for the static users, then distributed
    per-mobile RIS selection.

    beta_alpha_override scales the contended period to the requested
    beta/alpha ratio while holding alpha*t2 = J*t (used by the split
    sweeps); the default sits on the fairness-optimal split.
    """
    radio, dcf, comp = scenario.radio, scenario.dcf, scenario.compute
    static_ids, mobile_ids = classify_users(scenario.population)
    x, y = len(static_ids), len(mobile_ids)
    c = radio.num_subchannels
    cascade = dcfmod.contention_cascade(y, c, dcf)
    ops = complexity_ops(x, scenario.ris.num_ris, scenario.ris.elements_per_ris,
                         scenario.population.num_existing, comp.l1)
    frame = optimal_frame_timing(
        x, y, c, dcf, t1_s=comp.kappa_s_per_op * ops,
        num_existing=scenario.population.num_existing, cascade=cascade,
    )
    if beta_alpha_override is not None:
        if x == 0:
            raise DegenerateFrameError("beta/alpha override needs a scheduled period")
        sched = frame.num_slots * dcf.data_slot_s
        t2 = sched * (1.0 + beta_alpha_override)
        frame = replace(
            frame, t2_s=t2, alpha=sched / t2, beta=1.0 - sched / t2
        )
    else:
        frame.validate(x, c, cascade=cascade if x else None)

    n_users = scenario.population.num_total
    alloc = empty_allocation(n_users, scenario.ris.num_ris, scenario.ris.elements_per_ris)
    alloc.rho_sq_w[mobile_ids] = radio.tx_power_mobile_w

    trace = []
    sweeps = 0
    if x:
        sidx = np.asarray(static_ids, dtype=int)
        rho_static = np.full(x, radio.p_max_w / x)
        prev_obj = -math.inf
        cap = comp.l1 if max_sweeps is None else max_sweeps
        for sweep in range(1, cap + 1):
            sweeps = sweep
            ris_of, slot_of, psi, obj, _ = centralized_ris_config(
                channels, static_ids, rho_static, radio.noise_w,
                radio.subchannel_bw_hz, frame.num_slots, max_iter=comp.l2,
            )
            gains = np.array(
                [
                    chan.aligned_gain_magnitude(
                        channels.r[k], channels.h[k, ris_of[i]], channels.g[k, ris_of[i]]
                    )
                    ** 2
                    / radio.noise_w
                    for i, k in enumerate(static_ids)
                ]
            )
            rho_static = allocate_power(
                gains, radio.p_max_w, radio.rate_min_bps,
                radio.subchannel_bw_hz, user_ids=static_ids,
            )
            obj = float(np.sum(np.log2(1.0 + gains * rho_static)))
            trace.append(obj)
            if obj < prev_obj - 1e-9:
                raise RuntimeError("outer objective decreased")
            if obj - prev_obj < ALTERNATION_TOL:
                break
            prev_obj = obj
        alloc.ris_of_user[sidx] = ris_of
        alloc.slot_of_user[sidx] = slot_of
        alloc.psi[sidx] = psi
        alloc.rho_sq_w[sidx] = rho_static

    for k in mobile_ids:
        m, theta, _ = distributed_ris_select(
            channels, k, range(scenario.ris.num_ris),
            radio.tx_power_mobile_w, radio.noise_w, radio.subchannel_bw_hz,
        )
        alloc.ris_of_user[k] = m
        alloc.psi[k, m] = theta.theta

    bad = check_allocation(
        alloc, static_ids, mobile_ids, scenario.ris.num_ris,
        frame.num_slots, radio.p_max_w,
    )
    if bad:
        raise RuntimeError("allocation failed feasibility audit: %s" % "; ".join(bad))

    s_s, s_c, s_o = analytic_throughput(
        frame, alloc, channels, static_ids, mobile_ids, radio, dcf
    )
    s_one = onefactor_throughput(
        frame, alloc, channels, static_ids, mobile_ids, radio, dcf
    )
    mismatch = abs(s_one - s_o) / s_o if s_o > 0 else math.inf
    report = complexity_report(
        x, y, scenario.ris.num_ris, scenario.ris.num_ris,
        scenario.ris.elements_per_ris, comp.l1, comp.l2, comp.l3,
        scenario.population.num_existing, frame.total_s, comp.kappa_s_per_op,
    )
    return OptimizationResult(
        frame=frame,
        allocation=alloc,
        static_ids=static_ids,
        mobile_ids=mobile_ids,
        throughput_scheduled_bps=s_s,
        throughput_contended_bps=s_c,
        throughput_overall_bps=s_o,
        throughput_overall_onefactor_bps=s_one,
        onefactor_mismatch_rel=mismatch,
        objective_trace=trace,
        cascade=cascade,
        complexity=report,
        sweeps=sweeps,
    )
