"""Closed-form contention analysis for the contended transmission period.

Per contention round i with N_i remaining mobile users:

  tau_i  = 2(1-2p) / ((1-2p)(W+1) + p W (1-(2p)^l))      backoff fixed point
  p_i    = 1 - (1-tau_i)^(N_i - 1)
  P_iC   = sum_V (1-tau)^(V-1) C(N_i,V) V tau (1-tau)^(V-1)
               * (1/C)^V (1-1/C)^(N_i-V)                  per-channel success
  served = floor(C * sum_{l<=i} P_lC)                     cumulative service

The round recursion runs until every one of the Y mobile users has been
served exactly once; the round count N_r sizes the contended period as
N_r * t_r, with t_r the airtime of one successful RTS/CTS handshake plus
payload.

Note the idle-probability weight uses the printed exponent V-1, which makes
P_c go negative for a single contender; slot_probabilities clamps and flags
that case rather than silently correcting the exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .scenario import DcfParams

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAX_ITER = 200
CASCADE_ROUND_CAP = 10_000
STARVATION_GUARD_ROUNDS = 50
# absorbs float accumulation in C * sum(P) right at integer boundaries
FLOOR_EPS = 1e-9


class FixedPointError(RuntimeError):
    pass


class CascadeError(RuntimeError):
    pass


def _tau_of_p(p: float, w: int, l: int) -> float:
    """Transmit probability as a function of the collision probability.

    The expression is 0/0 at p = 1/2; the removable singularity evaluates
    to 4 / (2(W+1) + W*l).
    """
    one_minus_2p = 1.0 - 2.0 * p
    if abs(one_minus_2p) < 1e-9:
        return 4.0 / (2.0 * (w + 1) + w * l)
    denom = one_minus_2p * (w + 1) + p * w * (1.0 - (2.0 * p) ** l)
    return 2.0 * one_minus_2p / denom


def solve_tau(contenders: int, w_min: int, max_stage: int) -> tuple:
    """Joint (tau, p) solution of the backoff/collision fixed point.

    Bisects the composed scalar map g(p) = [1 - (1-tau(p))^(V-1)] - p, which
    is continuous and strictly decreasing on [0, 1), so the root is unique
    and bracketing never fails (plain Picard iteration can oscillate here).
    """
    v = int(contenders)
    if v < 1:
        raise ValueError("contenders must be >= 1")
    if v == 1:
        # no competitor: p = 0 exactly and tau collapses to 2/(W+1)
        return 2.0 / (w_min + 1), 0.0

    def residual(p):
        tau = _tau_of_p(p, w_min, max_stage)
        return (1.0 - (1.0 - tau) ** (v - 1)) - p

    lo, hi = 0.0, 1.0 - 1e-15
    f_lo = residual(lo)
    if f_lo <= 0.0:
        p = lo
    else:
        for _ in range(FIXED_POINT_MAX_ITER):
            mid = 0.5 * (lo + hi)
            if residual(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < FIXED_POINT_TOL:
                break
        p = 0.5 * (lo + hi)
    tau = _tau_of_p(p, w_min, max_stage)
    res_p = abs((1.0 - (1.0 - tau) ** (v - 1)) - p)
    res_tau = abs(tau - _tau_of_p(p, w_min, max_stage))
    if max(res_p, res_tau) > 1e-10:
        raise FixedPointError(
            "fixed point did not converge: residual %.3e after %d iterations"
            % (max(res_p, res_tau), FIXED_POINT_MAX_ITER)
        )
    return tau, p


@dataclass(frozen=True)
class SlotProbabilities:
    """Per-slot outcome probabilities on one channel with V contenders.

    The printed idle exponent V-1 can drive the collision term negative
    (V = 1 gives P_e = 1, P_c = -P_s); the raw value is kept alongside the
    clamped one and flagged.
    """

    p_success: float
    p_idle: float
    p_collision: float
    p_collision_raw: float
    valid: bool


def slot_probabilities(contenders_on_channel: int, tau: float) -> SlotProbabilities:
    v = int(contenders_on_channel)
    if v < 1:
        raise ValueError("contenders_on_channel must be >= 1")
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must be in (0, 1)")
    p_s = v * tau * (1.0 - tau) ** (v - 1)
    p_e = (1.0 - tau) ** (v - 1)
    p_c_raw = 1.0 - p_e - p_s
    valid = p_c_raw >= 0.0
    return SlotProbabilities(
        p_success=p_s,
        p_idle=p_e,
        p_collision=max(p_c_raw, 0.0),
        p_collision_raw=p_c_raw,
        valid=valid,
    )


def channel_success_prob(contenders: int, tau: float, num_channels: int) -> float:
    """Probability of a successful transmission on a given channel in one
    round, with the idle-probability sensing weight applied per term.

    Sums over V, the (binomial) number of the N_i contenders that picked
    this channel: (1-tau)^(V-1) * C(N_i,V) * V tau (1-tau)^(V-1)
    * (1/C)^V (1-1/C)^(N_i-V).
    """
    n = int(contenders)
    c = int(num_channels)
    if n < 1:
        raise ValueError("contenders must be >= 1")
    if c < 1:
        raise ValueError("num_channels must be >= 1")
    if c == 1:
        # (1 - 1/C)^(N-V) collapses every term but V = N
        return float(n * tau * (1.0 - tau) ** (2.0 * (n - 1.0)))
    v = np.arange(1, n + 1, dtype=float)
    log_binom = gammaln(n + 1) - gammaln(v + 1) - gammaln(n - v + 1)
    log_pick = v * math.log(1.0 / c) + (n - v) * math.log(1.0 - 1.0 / c)
    terms = (
        np.exp(log_binom + log_pick)
        * v
        * tau
        * (1.0 - tau) ** (2.0 * (v - 1.0))
    )
    return float(np.sum(terms))


@dataclass(frozen=True)
class ContentionRound:
    round_index: int
    contenders: int
    tau: float
    collision_prob: float
    success_prob_channel: float
    cumulative_served: int
    forced: bool = False


@dataclass(frozen=True)
class ContentionSummary:
    rounds: tuple
    n_r: int
    t_r_s: float
    required_beta_t2_s: float
    starvation_guard_fired: bool = False


class ServiceSchedule:
    """Round-by-round service bookkeeping shared by the closed form and the
    frame engine's contention pacing.

    Each advance() consumes one round for the current remaining-contender
    count and returns how many users the model serves in that round (the
    floor-recursion increment).  A starvation guard force-serves one user
    per subchannel after 50 consecutive zero-increment rounds, since the
    floor can stall when Y*tau/C is tiny; firings are flagged as a model
    deviation.
    """

    def __init__(self, total_users: int, num_channels: int, w_min: int, max_stage: int):
        self.total = int(total_users)
        self.channels = int(num_channels)
        self.w_min = w_min
        self.max_stage = max_stage
        self.served = 0
        self.credit = 0.0
        self.rounds: list = []
        self.zero_streak = 0
        self.guard_fired = False
        self._cache: dict = {}

    @property
    def remaining(self) -> int:
        return self.total - self.served

    def _round_params(self, n: int) -> tuple:
        got = self._cache.get(n)
        if got is None:
            tau, p = solve_tau(n, self.w_min, self.max_stage)
            got = (tau, p, channel_success_prob(n, tau, self.channels))
            self._cache[n] = got
        return got

    def advance(self) -> int:
        """Run one round; returns the number of users served in it."""
        n = self.remaining
        if n <= 0:
            raise CascadeError("advance called with no remaining contenders")
        tau, p, p_ch = self._round_params(n)
        self.credit += self.channels * p_ch
        target = math.floor(self.credit + FLOOR_EPS)
        delta = min(max(target - self.served, 0), n)
        forced = False
        if delta == 0:
            self.zero_streak += 1
            if self.zero_streak >= STARVATION_GUARD_ROUNDS:
                delta = min(self.channels, n)
                forced = True
                self.guard_fired = True
                self.zero_streak = 0
        else:
            self.zero_streak = 0
        self.served += delta
        self.rounds.append(
            ContentionRound(
                round_index=len(self.rounds) + 1,
                contenders=n,
                tau=tau,
                collision_prob=p,
                success_prob_channel=p_ch,
                cumulative_served=self.served,
                forced=forced,
            )
        )
        return delta


def contention_cascade(num_mobile: int, num_channels: int, dcf: DcfParams) -> ContentionSummary:
    """Run the service recursion until all mobile users are served once.

    N_r counts rounds with remaining contenders > 0; a literal reading of
    the stopping indicator (remaining >= 0) never terminates, so the
    recursion stops when the remaining count reaches zero, which is exactly
    the once-per-user fairness target.
    """
    y = int(num_mobile)
    if y < 0:
        raise ValueError("num_mobile must be >= 0")
    t_r = handshake_time(dcf)
    if y == 0:
        return ContentionSummary(rounds=(), n_r=0, t_r_s=t_r, required_beta_t2_s=0.0)
    sched = ServiceSchedule(y, num_channels, dcf.w_min, dcf.max_backoff_stage)
    while sched.remaining > 0:
        if len(sched.rounds) >= CASCADE_ROUND_CAP:
            raise CascadeError(
                "non-terminating cascade: %d rounds, %d of %d served"
                % (len(sched.rounds), sched.served, y)
            )
        sched.advance()
    n_r = len(sched.rounds)
    return ContentionSummary(
        rounds=tuple(sched.rounds),
        n_r=n_r,
        t_r_s=t_r,
        required_beta_t2_s=n_r * t_r,
        starvation_guard_fired=sched.guard_fired,
    )


def handshake_time(dcf: DcfParams) -> float:
    """Airtime of one successful contention cycle:
    RTS + CTS + payload + 2*SIFS + DIFS + 2*delta, control frames at the
    configured basic rate."""
    rts = dcf.rts_bytes * 8 / dcf.control_rate_bps
    cts = dcf.cts_bytes * 8 / dcf.control_rate_bps
    return (
        rts
        + cts
        + dcf.payload_time_s
        + 2.0 * dcf.sifs_s
        + dcf.difs_s
        + 2.0 * dcf.prop_delay_s
    )


def cascade_table(num_mobile: int, num_channels: int, dcf: DcfParams) -> list:
    """Cascade rows as dicts, ready for CSV emission."""
    summary = contention_cascade(num_mobile, num_channels, dcf)
    return [
        {
            "round": rd.round_index,
            "contenders": rd.contenders,
            "tau": rd.tau,
            "collision_prob": rd.collision_prob,
            "channel_success_prob": rd.success_prob_channel,
            "cumulative_served": rd.cumulative_served,
        }
        for rd in summary.rounds
    ]
