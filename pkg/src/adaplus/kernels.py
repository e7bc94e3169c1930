"""Stateful optimizer kernels operating on flat float64 parameter vectors.

Six update rules from one adaptive family:

- ``adaplus_step``: belief-style stepsize adjustment + Nesterov-readjusted
  numerator + decoupled weight decay, all in a single step.
- ``adam_step`` / ``adamw_step`` / ``nadam_step`` / ``adabelief_step``: the
  ancestor baselines, each differing from ``adaplus_step`` in exactly one or
  two of those ingredients.
- ``sgdm_step``: classical momentum, with an optional Nesterov form.

Each step call validates its inputs, computes every intermediate, and only
then commits the new state, parameters, and step counter; a failed call
leaves everything untouched.  The returned ``StepTranscript`` records all
intermediates so trajectories can be diffed against the independent scalar
reference in ``adaplus.oracle``.

One step of the full kernel, elementwise, with hyper-parameters
``(lr, b1, b2, eps, wd)`` and scheduled rate ``lr_t``::

    t     <- t + 1
    theta <- theta * (1 - lr_t * wd)                  # decoupled decay
    m     <- b1 * m + (1 - b1) * g
    s     <- b2 * s + (1 - b2) * (g - m)^2 + eps      # belief term
    mbar  <- b1 * m + (1 - b1) * g                    # Nesterov readjustment
    mhat  <- mbar / (1 - b1^t)                        # bias correction
    shat  <- s / (1 - b2^t)
    theta <- theta - lr_t * mhat / (sqrt(shat) + eps)

The baselines drop or swap individual lines: the classical numerator uses
``m`` instead of ``mbar``, the variance denominator uses the EMA of ``g^2``
without the in-recursion ``eps``, and kernels without decoupled decay skip
the first parameter line.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue
from .transcript import FIELD_ORDER, StepTranscript


@dataclass(frozen=True)
class HyperParams:
    """Hyper-parameters shared by all kernels.

    ``use_nesterov`` and ``use_belief`` toggle the numerator readjustment and
    the belief denominator in the kernels where those are configurable;
    ``decoupled_decay`` enables decay in the belief baseline, which runs
    without decay by default.  Weight decay in ``adaplus_step`` and
    ``adamw_step`` is structural and controlled by ``weight_decay`` alone.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2
    use_nesterov: bool = True
    use_belief: bool = True
    decoupled_decay: bool = False

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


class OptimizerState:
    """Mutable per-vector optimizer state: step counter and the two EMAs.

    ``second_moment`` holds the belief EMA or the squared-gradient EMA
    depending on the kernel driving the state.  States are independent; one
    state must only ever be fed to one kernel.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be a positive integer, got {dim}")
        self.dim = int(dim)
        self.t = 0
        self.m = np.zeros(self.dim)
        self.second_moment = np.zeros(self.dim)


class ParamVector:
    """Flat float64 parameter vector; non-finite writes are rejected."""

    __slots__ = ("_values",)

    def __init__(self, values):
        self._values = None
        self.values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @values.setter
    def values(self, new):
        arr = np.array(new, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("parameter vector must be a non-empty 1-D array")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise NonFiniteValue("parameter", index=int(bad[0]))
        self._values = arr

    @property
    def dim(self) -> int:
        return self._values.size


@dataclass(frozen=True)
class LrSchedule:
    """Step-decay schedule: multiply the rate by ``decay_factor`` at each milestone epoch."""

    milestones: tuple[int, ...] = ()
    decay_factor: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        if any(m <= 0 for m in self.milestones):
            raise ValueError("milestones must be positive epoch indices")
        if any(b >= a for a, b in zip(self.milestones[1:], self.milestones)):
            raise ValueError("milestones must be strictly increasing")
        if not self.decay_factor > 0:
            raise ValueError(f"decay_factor must be positive, got {self.decay_factor}")


def lr_at(schedule: LrSchedule, base_lr: float, epoch: int) -> float:
    """Effective rate at ``epoch``: ``base_lr * decay_factor ** (#milestones <= epoch)``."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    passed = sum(1 for m in schedule.milestones if m <= epoch)
    return base_lr * schedule.decay_factor**passed


def _checked_gradient(state: OptimizerState, params: ParamVector, grads, lr_t: float) -> np.ndarray:
    g = np.array(grads, dtype=np.float64)
    if g.ndim != 1 or g.size != params.dim:
        raise DimensionMismatch("gradient", params.dim, g.size)
    if state.dim != params.dim:
        raise DimensionMismatch("state", params.dim, state.dim)
    if not np.isfinite(g).all():
        index = int(np.flatnonzero(~np.isfinite(g))[0])
        raise NonFiniteValue("gradient", index=index, step=state.t + 1)
    if not (np.isfinite(lr_t) and lr_t > 0):
        raise ValueError(f"lr_t must be a positive finite real, got {lr_t}")
    return g


def _checked_transcript(t: int, **arrays) -> StepTranscript:
    # a non-finite second moment is the only failure the final parameter can
    # hide (inf denominator turns the update into -0), so checking these two
    # covers every field; the slow path then attributes the earliest stage
    if not (np.isfinite(arrays["theta_after"]).all() and np.isfinite(arrays["second_moment"]).all()):
        for name in FIELD_ORDER:
            bad = np.flatnonzero(~np.isfinite(arrays[name]))
            if bad.size:
                raise NonFiniteValue(name, index=int(bad[0]), step=t)
    return StepTranscript(t=t, **arrays)


def _adam_family_step(
    state: OptimizerState,
    params: ParamVector,
    grads,
    hp: HyperParams,
    lr_t: float,
    *,
    apply_decay: bool,
    use_belief: bool,
    recursion_eps: float,
    use_nesterov: bool,
) -> StepTranscript:
    g = _checked_gradient(state, params, grads, lr_t)
    t = state.t + 1
    theta = params.values

    # non-finite intermediates are detected below and raised as structured
    # errors; numpy's own warnings would only duplicate that
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        if apply_decay:
            decay_applied = (lr_t * hp.weight_decay) * theta
            theta = theta * (1.0 - lr_t * hp.weight_decay)
        else:
            decay_applied = np.zeros_like(theta)

        m = hp.beta1 * state.m + (1.0 - hp.beta1) * g
        if use_belief:
            residual = g - m
            second_moment = hp.beta2 * state.second_moment + (1.0 - hp.beta2) * residual * residual
        else:
            second_moment = hp.beta2 * state.second_moment + (1.0 - hp.beta2) * g * g
        if recursion_eps:
            second_moment = second_moment + recursion_eps

        m_bar = hp.beta1 * m + (1.0 - hp.beta1) * g if use_nesterov else m
        m_hat = m_bar / (1.0 - hp.beta1**t)
        s_hat = second_moment / (1.0 - hp.beta2**t)
        delta_theta = -(lr_t * m_hat) / (np.sqrt(s_hat) + hp.eps)
        theta_after = theta + delta_theta

    transcript = _checked_transcript(
        t,
        g=g,
        m=m,
        second_moment=second_moment,
        m_bar=m_bar,
        m_hat=m_hat,
        s_hat=s_hat,
        decay_applied=decay_applied,
        delta_theta=delta_theta,
        theta_after=theta_after,
    )
    state.t = t
    state.m = m.copy()
    state.second_moment = second_moment.copy()
    params.values = theta_after
    return transcript


def adaplus_step(
    state: OptimizerState,
    params: ParamVector,
    grads,
    hp: HyperParams,
    lr_t: float,
    *,
    suppress_recursion_eps: bool = False,
) -> StepTranscript:
    """Full kernel: decoupled decay, belief denominator, Nesterov numerator.

    ``hp.use_belief`` and ``hp.use_nesterov`` toggle the respective
    ingredients for reduction checks against the baselines.
    ``suppress_recursion_eps`` is a test-only switch that drops the ``eps``
    added inside the second-moment recursion, enabling exact equality with
    the variance-denominator baselines.
    """
    return _adam_family_step(
        state,
        params,
        grads,
        hp,
        lr_t,
        apply_decay=True,
        use_belief=hp.use_belief,
        recursion_eps=0.0 if suppress_recursion_eps else hp.eps,
        use_nesterov=hp.use_nesterov,
    )


def adam_step(state, params, grads, hp: HyperParams, lr_t: float) -> StepTranscript:
    """Classical adaptive baseline: variance denominator, no decay."""
    return _adam_family_step(
        state, params, grads, hp, lr_t,
        apply_decay=False, use_belief=False, recursion_eps=0.0, use_nesterov=False,
    )


def adamw_step(state, params, grads, hp: HyperParams, lr_t: float) -> StepTranscript:
    """Adam preceded by decoupled weight decay ``theta *= 1 - lr_t * weight_decay``."""
    return _adam_family_step(
        state, params, grads, hp, lr_t,
        apply_decay=True, use_belief=False, recursion_eps=0.0, use_nesterov=False,
    )


def nadam_step(state, params, grads, hp: HyperParams, lr_t: float) -> StepTranscript:
    """Adam with the Nesterov-readjusted numerator (toggled by ``hp.use_nesterov``)."""
    return _adam_family_step(
        state, params, grads, hp, lr_t,
        apply_decay=False, use_belief=False, recursion_eps=0.0, use_nesterov=hp.use_nesterov,
    )


def adabelief_step(state, params, grads, hp: HyperParams, lr_t: float) -> StepTranscript:
    """Belief denominator with the classical numerator; decay only if ``hp.decoupled_decay``."""
    return _adam_family_step(
        state, params, grads, hp, lr_t,
        apply_decay=hp.decoupled_decay, use_belief=True, recursion_eps=hp.eps, use_nesterov=False,
    )


def sgdm_step(state, params, grads, hp: HyperParams, lr_t: float) -> StepTranscript:
    """Momentum baseline; ``hp.beta1`` doubles as the momentum coefficient.

    Classical form::

        m <- mu * m + g
        theta <- theta - lr_t * m

    Nesterov form (``hp.use_nesterov``), with the rate folded into the
    velocity::

        m <- mu * m + lr_t * g
        theta <- theta - (mu * m + lr_t * g)

    No second moment, no bias correction, no decay; the transcript's
    second-moment fields are zero and ``m_bar``/``m_hat`` hold the applied
    update direction.
    """
    g = _checked_gradient(state, params, grads, lr_t)
    t = state.t + 1
    theta = params.values

    with np.errstate(invalid="ignore", over="ignore"):
        if hp.use_nesterov:
            m = hp.beta1 * state.m + lr_t * g
            m_bar = hp.beta1 * m + lr_t * g
            delta_theta = -m_bar
        else:
            m = hp.beta1 * state.m + g
            m_bar = m
            delta_theta = -(lr_t * m_bar)
        theta_after = theta + delta_theta

    transcript = _checked_transcript(
        t,
        g=g,
        m=m,
        second_moment=np.zeros_like(theta),
        m_bar=m_bar,
        m_hat=m_bar.copy(),
        s_hat=np.zeros_like(theta),
        decay_applied=np.zeros_like(theta),
        delta_theta=delta_theta,
        theta_after=theta_after,
    )
    state.t = t
    state.m = m.copy()
    params.values = theta_after
    return transcript


# Kernel registry used by the bench harness and the oracle dispatcher.
KERNEL_IDS = ("adaplus", "adam", "adamw", "nadam", "adabelief", "sgdm")

KERNEL_STEPS = {
    "adaplus": adaplus_step,
    "adam": adam_step,
    "adamw": adamw_step,
    "nadam": nadam_step,
    "adabelief": adabelief_step,
    "sgdm": sgdm_step,
}


def drive_stream(kernel_id: str, stream, theta0, hp: HyperParams, lrs) -> list[StepTranscript]:
    """Feed a whole gradient stream through a fresh state and collect transcripts.

    Convenience harness for differential testing against ``oracle.replay``,
    which takes the same arguments.
    """
    if kernel_id not in KERNEL_STEPS:
        raise ValueError(f"unknown kernel id {kernel_id!r}; expected one of {KERNEL_IDS}")
    if len(lrs) != len(stream):
        raise ValueError(f"lrs has length {len(lrs)}, stream has length {len(stream)}")
    params = ParamVector(theta0)
    state = OptimizerState(params.dim)
    step = KERNEL_STEPS[kernel_id]
    return [step(state, params, g, hp, lr) for g, lr in zip(stream, lrs)]
