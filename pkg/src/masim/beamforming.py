"""Sum-rate beamforming on the equivalent channel after position selection.

Inner products follow the transpose convention throughout: user k at
subcarrier q receives h[k,q]^T w, so matched filtering points along
conj(h). Every emitted solution satisfies the per-subcarrier power
equality ||W[q]||_F^2 = P_t up to machine precision.

The iterative solver alternates a scalar receiver update, a positive
weight update and a regularized beamformer update whose multiplier is
found by bisection on the transmit power; its weighted-MSE surrogate
makes the sum-rate trace non-decreasing in the default all-terms variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .scenario import ChannelTensor
from .selection import EquivalentChannelTensor

WMMSE_VARIANTS = ("standard-all-terms", "strict-excluding-self")

# Relative tolerance of the power bisection; tighter than the emitted
# power contract so the rate trace stays monotone at the 1e-9 level.
POWER_BISECTION_RTOL = 1e-12
POWER_BRACKET_DOUBLINGS = 60


@dataclass(frozen=True)
class BeamformerConfig:
    """Transmit power, noise power and iterative-solver controls."""

    transmit_power: float
    noise_power: float
    max_iterations: int = 100
    rate_tolerance: float = 1e-6
    wmmse_sum_variant: str = "standard-all-terms"

    def __post_init__(self):
        if self.transmit_power <= 0:
            raise ValueError("transmit_power must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.rate_tolerance <= 0:
            raise ValueError("rate_tolerance must be positive")
        if self.wmmse_sum_variant not in WMMSE_VARIANTS:
            raise ValueError(f"wmmse_sum_variant must be one of {WMMSE_VARIANTS}")


@dataclass
class BeamformingSolution:
    """Per-subcarrier beamforming matrices, column k serving user k."""

    matrices: np.ndarray  # (Nc, M, K) complex
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=complex)
        if self.matrices.ndim != 3:
            raise ValueError("beamforming matrices must be shaped (Nc, M, K)")


@dataclass
class WmmseState:
    """Auxiliary variables of the iterative solver at its final iterate."""

    u: np.ndarray          # (Nc, K) complex receiver scalars
    v: np.ndarray          # (Nc, K) real weights
    mu: np.ndarray         # (Nc,) power multipliers
    rate_trace: list       # sum rate after init and after each iteration


@dataclass
class ParametricBeamformer:
    """Closed-form beamformer family parameters a (complex), b, c (nonnegative)."""

    a: np.ndarray  # (Nc, K) complex
    b: np.ndarray  # (Nc,) real >= 0
    c: np.ndarray  # (Nc, K) real >= 0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=complex)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if not (np.isfinite(self.a).all() and np.isfinite(self.b).all() and np.isfinite(self.c).all()):
            raise ValueError("parameters must be finite")
        if (self.b < 0).any():
            raise ValueError("b must be nonnegative")
        if (self.c < 0).any():
            raise ValueError("c must be nonnegative")


def sinr(equiv: EquivalentChannelTensor, solution: BeamformingSolution,
         user: int, subcarrier: int, noise_power: float) -> float:
    """Signal-to-interference-plus-noise ratio of one user at one subcarrier."""
    h = equiv.values[user, subcarrier, :]
    w = solution.matrices[subcarrier]
    gains = np.abs(h @ w) ** 2
    signal = gains[user]
    interference = gains.sum() - signal
    return float(signal / (interference + noise_power))


def sum_rate(equiv: EquivalentChannelTensor, solution: BeamformingSolution,
             noise_power: float) -> float:
    """Average over subcarriers of the per-user log2(1 + SINR) sum, in bits."""
    h = equiv.values                                  # (K, Nc, M)
    w = solution.matrices                             # (Nc, M, K)
    cross = np.einsum("kqm,qmi->qki", h, w)           # cross[q,k,i] = h_k^T w_i
    gains = np.abs(cross) ** 2
    signal = np.einsum("qkk->qk", gains)
    interference = gains.sum(axis=2) - signal
    ratios = signal / (interference + noise_power)
    return float(np.sum(np.log2(1.0 + ratios)) / h.shape[1])


def _rescale_power(matrices: np.ndarray, transmit_power: float) -> np.ndarray:
    out = matrices.copy()
    for q in range(out.shape[0]):
        norm_sq = float(np.sum(np.abs(out[q]) ** 2))
        if norm_sq == 0.0:
            raise ValueError("zero beamforming matrix cannot meet the power constraint")
        out[q] *= np.sqrt(transmit_power / norm_sq)
    return out


def _check_power(matrices: np.ndarray, transmit_power: float, rtol: float = 1e-6):
    powers = np.sum(np.abs(matrices) ** 2, axis=(1, 2))
    if np.max(np.abs(powers - transmit_power)) > rtol * transmit_power:
        raise ValueError("beamforming matrices violate the power constraint")


def mrt(equiv: EquivalentChannelTensor, transmit_power: float) -> BeamformingSolution:
    """Matched-direction beamformer with equal per-user power per subcarrier."""
    h = equiv.values
    k = h.shape[0]
    w = np.conj(np.transpose(h, (1, 2, 0)))           # (Nc, M, K)
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    norms = np.where(norms > 0, norms, 1.0)
    w = w / norms * np.sqrt(transmit_power / k)
    return BeamformingSolution(matrices=_rescale_power(w, transmit_power))


def zf(equiv: EquivalentChannelTensor, transmit_power: float) -> BeamformingSolution:
    """Interference-nulling beamformer with equal per-user column power.

    A rank-deficient per-subcarrier channel falls back to a diagonally
    loaded Gram inverse and is flagged in the solution metadata.
    """
    h = equiv.values
    k, nc, m = h.shape
    matrices = np.empty((nc, m, k), dtype=complex)
    loaded = []
    for q in range(nc):
        hq = h[:, q, :]                               # rows are h_k^T
        gram = hq @ hq.conj().T
        eigvals = np.linalg.eigvalsh(gram)
        if eigvals[0] <= 1e-12 * max(eigvals[-1], 0.0) or k > m:
            gram = gram + 1e-10 * np.trace(gram).real * np.eye(k)
            loaded.append(q)
        raw = hq.conj().T @ np.linalg.solve(gram, np.eye(k, dtype=complex))
        norms = np.linalg.norm(raw, axis=0, keepdims=True)
        norms = np.where(norms > 0, norms, 1.0)
        matrices[q] = raw / norms * np.sqrt(transmit_power / k)
    metadata = {"scheme": "zf", "diag_loaded": loaded}
    return BeamformingSolution(matrices=_rescale_power(matrices, transmit_power), metadata=metadata)


def _power_constrained_solve(gram: np.ndarray, targets: np.ndarray, transmit_power: float):
    """Solve (gram + mu I) W = targets with mu set so ||W||_F^2 = transmit_power.

    ``gram`` must be Hermitian. The Frobenius power of the solution is
    strictly decreasing in mu above -lambda_min, so mu comes from
    bisection. When even the unregularized solution falls below the
    budget, the deficit is taken from the gram's null space when one
    exists (such directions radiate toward no weighted user, so the
    weighted-MSE objective is unchanged); otherwise the bracket extends
    to negative mu above -lambda_min.
    """
    lam, basis = np.linalg.eigh(gram)
    proj = basis.conj().T @ targets                   # (M, K)
    scale = max(float(np.max(np.abs(lam))), 1e-300)
    null = np.abs(lam) <= 1e-14 * scale
    proj = np.where(null[:, None], 0.0, proj)
    lam_eff = np.where(null, 0.0, lam)
    row_energy = np.sum(np.abs(proj) ** 2, axis=1)

    def power_of(mu: float) -> float:
        denom = lam_eff + mu
        terms = np.where(null, 0.0, row_energy / np.where(null, 1.0, denom) ** 2)
        return float(terms.sum())

    def solution_of(mu: float) -> np.ndarray:
        denom = np.where(null, 1.0, lam_eff + mu)
        return basis @ (proj / denom[:, None])

    lam_min = float(np.min(np.where(null, np.inf, lam_eff))) if not null.all() else 0.0
    floor = max(0.0, -lam_min) if np.isfinite(lam_min) else 0.0

    if null.all():
        # Nothing to radiate: put all power on the first null direction.
        w = np.zeros_like(targets)
        w[:, 0] = basis[:, 0] * np.sqrt(transmit_power)
        return w, 0.0

    # Establish a lower bracket edge with power >= transmit_power.
    if floor == 0.0 and power_of(0.0) >= transmit_power:
        lo = 0.0
    elif floor == 0.0:
        if null.any():
            w = solution_of(0.0)
            deficit = transmit_power - power_of(0.0)
            null_dir = basis[:, int(np.argmax(null))]
            w[:, 0] = w[:, 0] + null_dir * np.sqrt(deficit)
            return w, 0.0
        # Full-rank gram with slack power: the equality multiplier is negative.
        lo = None
        step = lam_min / 2.0
        for _ in range(POWER_BRACKET_DOUBLINGS):
            candidate = -lam_min + step
            if power_of(candidate) >= transmit_power:
                lo = candidate
                break
            step /= 2.0
        if lo is None:
            raise RuntimeError("power bisection could not bracket the multiplier from below")
    else:
        # Indefinite gram: approach the pole at -lambda_min from above.
        lo = None
        step = max(scale, 1.0)
        for _ in range(POWER_BRACKET_DOUBLINGS):
            candidate = floor + step
            if power_of(candidate) >= transmit_power:
                lo = candidate
                break
            step /= 2.0
        if lo is None:
            raise RuntimeError("power bisection could not bracket the multiplier from below")

    hi = max(lo, 0.0) + 1.0
    doublings = 0
    while power_of(hi) > transmit_power:
        hi = lo + (hi - lo) * 2.0
        doublings += 1
        if doublings > POWER_BRACKET_DOUBLINGS:
            raise RuntimeError("power bisection could not bracket the multiplier from above")

    mu = lo
    for _ in range(400):
        mu = 0.5 * (lo + hi)
        p = power_of(mu)
        if abs(p - transmit_power) <= POWER_BISECTION_RTOL * transmit_power:
            break
        if p > transmit_power:
            lo = mu
        else:
            hi = mu
    return solution_of(mu), float(mu)


def wmmse(equiv: EquivalentChannelTensor, cfg: BeamformerConfig,
          init: Optional[BeamformingSolution] = None):
    """Alternating sum-rate solver with per-subcarrier power equality.

    Per iteration and subcarrier: the scalar receiver
    u[k,q] = h^T w_k / (sum_p |h^T w_p|^2 + sigma^2), the weight
    v[k,q] = (1 - |h^T w_k|^2 / (same sum))^{-1} = 1 + SINR, then the
    beamformer solve (mu I + sum_p v_p |u_p|^2 conj(h_p) h_p^T) w_k =
    v_k u_k conj(h_k) with mu from power bisection. The
    ``strict-excluding-self`` variant drops the p = k term from both
    denominators; its weights can then turn negative and no monotonicity
    is guaranteed.

    Starts from the matched-direction solution unless ``init`` is given
    (which must already satisfy the power constraint). Stops when the
    rate improves by less than ``cfg.rate_tolerance`` or after
    ``cfg.max_iterations`` iterations. Returns the solution and the
    final auxiliary state including the rate trace.
    """
    h = equiv.values
    k, nc, m = h.shape
    if init is None:
        init = mrt(equiv, cfg.transmit_power)
    _check_power(init.matrices, cfg.transmit_power)
    w = init.matrices.copy()
    hc = np.conj(h)
    u = np.zeros((nc, k), dtype=complex)
    v = np.ones((nc, k), dtype=float)
    mu = np.zeros(nc, dtype=float)
    exclude_self = cfg.wmmse_sum_variant == "strict-excluding-self"
    trace = [sum_rate(equiv, BeamformingSolution(matrices=w), cfg.noise_power)]
    for _ in range(cfg.max_iterations):
        for q in range(nc):
            hq = h[:, q, :]
            cross = hq @ w[q]                          # cross[k,i] = h_k^T w_i
            powers = np.abs(cross) ** 2
            diag = np.diagonal(cross)
            denom = powers.sum(axis=1) + cfg.noise_power
            if exclude_self:
                denom = denom - np.diagonal(powers)
            uq = diag / denom
            err = 1.0 - np.abs(diag) ** 2 / denom
            vq = 1.0 / err
            weights = vq * np.abs(uq) ** 2
            gram = (hc[:, q, :].T * weights) @ hq      # sum_p w_p conj(h_p) h_p^T
            targets = hc[:, q, :].T * (vq * uq)        # columns v_k u_k conj(h_k)
            wq, muq = _power_constrained_solve(gram, targets, cfg.transmit_power)
            norm_sq = float(np.sum(np.abs(wq) ** 2))
            wq *= np.sqrt(cfg.transmit_power / norm_sq)
            w[q] = wq
            u[q] = uq
            v[q] = vq
            mu[q] = muq
        trace.append(sum_rate(equiv, BeamformingSolution(matrices=w), cfg.noise_power))
        if abs(trace[-1] - trace[-2]) < cfg.rate_tolerance:
            break
    solution = BeamformingSolution(matrices=w, metadata={"scheme": "wmmse", "iterations": len(trace) - 1})
    return solution, WmmseState(u=u, v=v, mu=mu, rate_trace=trace)


def extract_params(state: WmmseState) -> ParametricBeamformer:
    """Closed-form parameters from a solver state: a = u v, c = v |u|^2, b = mu."""
    return ParametricBeamformer(
        a=state.u * state.v,
        b=state.mu.copy(),
        c=state.v * np.abs(state.u) ** 2,
    )


def build_parametric_w(params: ParametricBeamformer, equiv: EquivalentChannelTensor,
                       transmit_power: float) -> BeamformingSolution:
    """Beamformers from the regularized channel-Gram family.

    Per subcarrier and user,
    w_k = (b[q] I + sum_p c[p,q] conj(h_p) h_p^T)^{-1} a[k,q] conj(h_k),
    then W[q] is rescaled by sqrt(P_t)/||W[q]||_F so the power equality
    holds exactly. The channel enters conjugated so the family pairs with
    the transpose-form SINR: c = 0, b = 1 reduces to matched filtering.
    """
    h = equiv.values
    k, nc, m = h.shape
    if params.a.shape != (nc, k) or params.b.shape != (nc,) or params.c.shape != (nc, k):
        raise ValueError("parameter shapes do not match the equivalent channel")
    matrices = np.empty((nc, m, k), dtype=complex)
    eye = np.eye(m, dtype=complex)
    for q in range(nc):
        hq = h[:, q, :]
        hcq = np.conj(hq)
        gram = (hcq.T * params.c[q]) @ hq
        system = params.b[q] * eye + gram
        targets = hcq.T * params.a[q]
        try:
            wq = np.linalg.solve(system, targets)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular parametric system: need b > 0 or a full-rank channel gram") from exc
        if not np.isfinite(wq).all():
            raise ValueError("singular parametric system: need b > 0 or a full-rank channel gram")
        matrices[q] = wq
    return BeamformingSolution(
        matrices=_rescale_power(matrices, transmit_power),
        metadata={"scheme": "parametric"},
    )


def refine_params(params: ParametricBeamformer, equiv: EquivalentChannelTensor,
                  cfg: BeamformerConfig, budget: int) -> ParametricBeamformer:
    """Coordinate ascent on the sum rate over (Re a, Im a, log c, log b).

    Central finite differences with a 1e-4 relative step propose a move
    per coordinate and a move is kept only when it improves the rate, so
    the returned parameters are never worse than the input. Every rate
    evaluation counts against ``budget``.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    nc, k = params.a.shape
    log_floor = 1e-30

    def pack(p: ParametricBeamformer) -> np.ndarray:
        return np.concatenate([
            np.log(np.maximum(p.b, log_floor)),
            np.log(np.maximum(p.c, log_floor)).ravel(),
            p.a.real.ravel(),
            p.a.imag.ravel(),
        ])

    def unpack(x: np.ndarray) -> ParametricBeamformer:
        b = np.exp(x[:nc])
        c = np.exp(x[nc:nc + nc * k]).reshape(nc, k)
        re = x[nc + nc * k:nc + 2 * nc * k].reshape(nc, k)
        im = x[nc + 2 * nc * k:].reshape(nc, k)
        return ParametricBeamformer(a=re + 1j * im, b=b, c=c)

    evaluations = 0

    def rate_of(x: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        solution = build_parametric_w(unpack(x), equiv, cfg.transmit_power)
        return sum_rate(equiv, solution, cfg.noise_power)

    x = pack(params)
    if budget < 1:
        return unpack(x)
    current = rate_of(x)
    num_coords = x.size
    # Log coordinates move in absolute (e-fold) steps, the beamformer
    # coefficients relative to their magnitude.
    is_log = np.zeros(num_coords, dtype=bool)
    is_log[:nc + nc * k] = True
    step_scale = np.where(is_log, 0.7, 0.3)
    fd_step = 1e-4
    improved = True
    while improved and evaluations + 3 <= budget:
        improved = False
        for i in range(num_coords):
            if evaluations + 3 > budget:
                break
            h_i = fd_step * max(abs(x[i]), 1.0)
            x[i] += h_i
            f_plus = rate_of(x)
            x[i] -= 2.0 * h_i
            f_minus = rate_of(x)
            x[i] += h_i
            grad = (f_plus - f_minus) / (2.0 * h_i)
            if grad == 0.0:
                continue
            unit = 1.0 if is_log[i] else max(abs(x[i]), 1.0)
            accepted = False
            trial_step = step_scale[i]
            for _ in range(3):
                if evaluations >= budget:
                    break
                delta = trial_step * np.sign(grad) * unit
                x[i] += delta
                candidate = rate_of(x)
                if candidate > current:
                    current = candidate
                    step_scale[i] = min(trial_step * 2.0, 2.0)
                    improved = True
                    accepted = True
                    break
                x[i] -= delta
                trial_step *= 0.25
            if not accepted:
                step_scale[i] = max(trial_step, 1e-3)
    return unpack(x)


def evaluation_subcarriers(num_subcarriers: int, requested: Optional[Sequence[int]] = None) -> np.ndarray:
    """Subcarrier subset used by selection-time rate oracles (default: 4 evenly spaced)."""
    if requested is not None:
        idx = np.asarray(requested, dtype=int)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= num_subcarriers:
            raise ValueError("requested subcarriers out of range")
        return np.unique(idx)
    if num_subcarriers <= 4:
        return np.arange(num_subcarriers)
    return np.unique(np.round(np.linspace(0, num_subcarriers - 1, 4)).astype(int))


def zf_rate_evaluator(tensor: ChannelTensor, transmit_power: float, noise_power: float,
                      subcarriers: Optional[Sequence[int]] = None) -> Callable[[np.ndarray], float]:
    """Rate oracle for position search: ZF sum rate on a subcarrier subset."""
    values = tensor.values
    sel = evaluation_subcarriers(values.shape[2], subcarriers)

    def evaluate(indices: np.ndarray) -> float:
        sub = np.transpose(values[np.asarray(indices, dtype=int), :, :][:, :, sel], (1, 2, 0))
        equiv = EquivalentChannelTensor(values=sub)
        return sum_rate(equiv, zf(equiv, transmit_power), noise_power)

    return evaluate


def wmmse_rate_evaluator(tensor: ChannelTensor, cfg: BeamformerConfig,
                         subcarriers: Optional[Sequence[int]] = None) -> Callable[[np.ndarray], float]:
    """Rate oracle for position search: converged iterative sum rate."""
    values = tensor.values
    sel = (np.arange(values.shape[2]) if subcarriers is None
           else evaluation_subcarriers(values.shape[2], subcarriers))

    def evaluate(indices: np.ndarray) -> float:
        sub = np.transpose(values[np.asarray(indices, dtype=int), :, :][:, :, sel], (1, 2, 0))
        equiv = EquivalentChannelTensor(values=sub)
        solution, _ = wmmse(equiv, cfg)
        return sum_rate(equiv, solution, cfg.noise_power)

    return evaluate
