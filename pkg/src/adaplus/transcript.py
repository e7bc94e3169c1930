"""Per-step transcripts of optimizer intermediates, plus their plain-text fixture format.

A transcript records every quantity an update rule computes on the way from
``theta_{t-1}`` to ``theta_t``, one value per parameter element.  Both the
vectorized kernels and the scalar oracle emit the same record type so that
trajectories can be diffed field by field.
"""

from dataclasses import dataclass, fields

import numpy as np

# Pipeline order of the computed fields; used both for serialization and for
# reporting the earliest stage at which a non-finite value appeared.
FIELD_ORDER = (
    "g",
    "m",
    "second_moment",
    "m_bar",
    "m_hat",
    "s_hat",
    "delta_theta",
    "theta_after",
)

# Every per-element field, including the decay amount (which the fixture
# format does not carry).
ALL_FIELDS = FIELD_ORDER + ("decay_applied",)

# Column names of the fixture format, aligned with FIELD_ORDER.
_FIXTURE_COLUMNS = ("g", "m", "s", "mbar", "mhat", "shat", "dtheta", "theta")


@dataclass(frozen=True)
class StepTranscript:
    """All intermediates of one optimizer step, per parameter element.

    Field semantics follow the adaptive-family update: ``m`` is the gradient
    EMA after the step, ``second_moment`` the belief/variance EMA, ``m_bar``
    the (possibly Nesterov-readjusted) numerator before bias correction,
    ``m_hat``/``s_hat`` the bias-corrected numerator and denominator, and
    ``delta_theta`` the adaptive update actually added to the (already
    decayed) parameter.  ``decay_applied`` is the amount subtracted by
    decoupled weight decay, zero when the kernel has no decay.

    For the momentum kernel ``m`` holds the velocity, ``m_bar``/``m_hat``
    hold the applied update direction, and the second-moment fields are zero.
    """

    t: int
    g: np.ndarray
    m: np.ndarray
    second_moment: np.ndarray
    m_bar: np.ndarray
    m_hat: np.ndarray
    s_hat: np.ndarray
    decay_applied: np.ndarray
    delta_theta: np.ndarray
    theta_after: np.ndarray

    @property
    def dim(self) -> int:
        return self.theta_after.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, StepTranscript):
            return NotImplemented
        if self.t != other.t:
            return False
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name))
            for f in fields(self)
            if f.name != "t"
        )


def trajectory_scales(transcripts) -> dict[str, float]:
    """Largest absolute value each field reaches over a transcript sequence."""
    scales = {}
    for field in ALL_FIELDS:
        stacked = np.stack([getattr(tr, field) for tr in transcripts])
        scales[field] = float(np.abs(stacked).max(initial=0.0))
    return scales


def scaled_deviation(got, want) -> float:
    """Worst per-element deviation between two transcript sequences.

    Measured as ``|a - b| / (|b| + S)`` where ``S`` is the largest magnitude
    the field reaches over the reference trajectory.  For elements of
    ordinary size this is the relative error up to a factor of two; elements
    passing through zero are measured against the field's working scale,
    which is the finest comparison float64 arithmetic supports there.
    Returns ``inf`` on mismatched lengths, steps, or shapes.
    """
    got, want = list(got), list(want)
    if len(got) != len(want):
        return float("inf")
    if any(a.t != b.t or a.dim != b.dim for a, b in zip(got, want)):
        return float("inf")
    worst = 0.0
    for field in ALL_FIELDS:
        x = np.stack([getattr(tr, field) for tr in got])
        y = np.stack([getattr(tr, field) for tr in want])
        scale = float(np.abs(y).max(initial=0.0))
        diff = np.abs(x - y)
        if scale == 0.0:
            if diff.any():
                return float("inf")
            continue
        worst = max(worst, float((diff / (np.abs(y) + scale)).max()))
    return worst


def format_transcripts(transcripts) -> str:
    """Render transcripts in the line-oriented fixture format.

    One record per parameter element per step::

        t idx g m s mbar mhat shat dtheta theta

    with every real number printed to 17 significant digits.
    """
    lines = []
    for tr in transcripts:
        for i in range(tr.dim):
            values = " ".join(f"{float(getattr(tr, f)[i]):.17g}" for f in FIELD_ORDER)
            lines.append(f"{tr.t} {i} {values}")
    return "\n".join(lines) + "\n"


def parse_transcripts(text: str) -> list[StepTranscript]:
    """Parse the fixture format back into transcripts.

    The fixture format does not carry the decay column; parsed transcripts
    get an all-zero ``decay_applied``.
    """
    per_step: dict[int, list[list[float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 2 + len(FIELD_ORDER):
            raise ValueError(f"fixture line {lineno}: expected {2 + len(FIELD_ORDER)} columns, got {len(tokens)}")
        t, idx = int(tokens[0]), int(tokens[1])
        rows = per_step.setdefault(t, [])
        if idx != len(rows):
            raise ValueError(f"fixture line {lineno}: element index {idx} out of order")
        rows.append([float(tok) for tok in tokens[2:]])

    transcripts = []
    for t in sorted(per_step):
        cols = np.array(per_step[t], dtype=np.float64)
        arrays = {name: cols[:, j].copy() for j, name in enumerate(FIELD_ORDER)}
        if not np.isfinite(arrays["theta_after"]).all():
            raise ValueError(f"fixture step {t}: non-finite theta")
        transcripts.append(
            StepTranscript(t=t, decay_applied=np.zeros(cols.shape[0]), **arrays)
        )
    return transcripts
