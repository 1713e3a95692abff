"""The forecasting model: Haar compression, scaled DCT features, linear head.

A model maps (batch, channels, L) inputs to (batch, channels, H) forecasts.
The head (low-rank P@Q factors or a dense matrix, plus optional bias) is
shared by every channel; the transforms carry no trainable state, so the
head parameters are the only parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import OddLengthError, ShapeMismatchError, WrongHeadError
from .transforms import dct2_raw, dct2_scaled, haar_batch

HEAD_LOW_RANK = "low_rank"
HEAD_DENSE = "dense"


@dataclass(eq=False)
class HadlModel:
    """Trainable state plus the variant flags that define the pipeline.

    Low-rank head: P (d_in x r) and Q (r x H). Dense head: W (d_in x H).
    bias is (H,) or None. d_in is L/2 when the Haar stage is on, else L.
    """

    lookback: int
    horizon: int
    use_haar: bool = True
    use_dct: bool = True
    head: str = HEAD_LOW_RANK
    P: np.ndarray | None = None
    Q: np.ndarray | None = None
    W: np.ndarray | None = None
    bias: np.ndarray | None = None
    seed: int = 0

    @property
    def d_in(self) -> int:
        return self.lookback // 2 if self.use_haar else self.lookback

    @property
    def rank(self) -> int | None:
        return None if self.P is None else int(self.P.shape[1])

    @property
    def with_bias(self) -> bool:
        return self.bias is not None


@dataclass(frozen=True)
class ParamCount:
    """Total trainable parameters with a per-component breakdown."""

    total: int
    breakdown: dict[str, int] = field(default_factory=dict)


def init_model(
    lookback: int,
    horizon: int,
    rank: int,
    seed: int,
    use_haar: bool = True,
    use_dct: bool = True,
    head: str = HEAD_LOW_RANK,
    with_bias: bool = True,
) -> HadlModel:
    """Build a model with fan-in-scaled uniform weights and zero bias.

    Weights are i.i.d. uniform on [-1/sqrt(d_in), +1/sqrt(d_in)], drawn from
    a generator seeded with `seed`, so identical arguments give bit-identical
    models. The scheme is recorded via `seed` for run metadata.
    """
    if lookback < 1 or horizon < 1:
        raise ShapeMismatchError(
            f"lookback and horizon must be positive, got {lookback}, {horizon}"
        )
    if use_haar and lookback % 2 != 0:
        raise OddLengthError(f"lookback must be even with the Haar stage on, got {lookback}")
    if head not in (HEAD_LOW_RANK, HEAD_DENSE):
        raise ShapeMismatchError(f"unknown head kind {head!r}")
    if head == HEAD_LOW_RANK and rank < 1:
        raise ShapeMismatchError(f"rank must be >= 1, got {rank}")

    d_in = lookback // 2 if use_haar else lookback
    bound = 1.0 / math.sqrt(d_in)
    rng = np.random.default_rng(seed)
    model = HadlModel(
        lookback=lookback,
        horizon=horizon,
        use_haar=use_haar,
        use_dct=use_dct,
        head=head,
        seed=seed,
    )
    if head == HEAD_LOW_RANK:
        model.P = rng.uniform(-bound, bound, size=(d_in, rank))
        model.Q = rng.uniform(-bound, bound, size=(rank, horizon))
    else:
        model.W = rng.uniform(-bound, bound, size=(d_in, horizon))
    if with_bias:
        model.bias = np.zeros(horizon, dtype=np.float64)
    return model


def transform_inputs(model: HadlModel, X) -> np.ndarray:
    """Apply the configured Haar/DCT stages along the last axis.

    Input shape (..., L), output (..., d_in). With Haar off and DCT on, the
    DCT runs on the full length-L row but keeps the same 2/L factor, so the
    constant is identical across ablation variants.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != model.lookback:
        raise ShapeMismatchError(
            f"last axis has length {X.shape[-1]}, model lookback is {model.lookback}"
        )
    A = X
    if model.use_haar:
        A = haar_batch(A)
    if model.use_dct:
        if model.use_haar:
            A = dct2_scaled(A, model.lookback)
        else:
            A = (2.0 / model.lookback) * dct2_raw(A)
    return A


def head_apply(model: HadlModel, A) -> np.ndarray:
    """Apply the shared linear head to already-transformed rows (..., d_in)."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[-1] != model.d_in:
        raise ShapeMismatchError(
            f"last axis has length {A.shape[-1]}, head expects {model.d_in}"
        )
    if model.head == HEAD_LOW_RANK:
        out = (A @ model.P) @ model.Q
    else:
        out = A @ model.W
    if model.bias is not None:
        out = out + model.bias
    return out


def forward(model: HadlModel, X) -> np.ndarray:
    """Full pipeline: transforms then head. (batch, channels, L) -> (..., H)."""
    return head_apply(model, transform_inputs(model, X))


def effective_weight(model: HadlModel) -> np.ndarray:
    """The dense matrix P@Q realized by a low-rank head (for export/plots)."""
    if model.head != HEAD_LOW_RANK:
        raise WrongHeadError("effective_weight requires a low-rank head")
    return model.P @ model.Q


def param_count(
    lookback: int,
    horizon: int,
    rank: int,
    with_bias: bool,
    use_haar: bool,
    head: str = HEAD_LOW_RANK,
) -> ParamCount:
    """Trainable-parameter arithmetic for any variant.

    d_in = L/2 if the Haar stage is on else L. Low-rank: d_in*r + r*H
    (+ H for bias); dense: d_in*H (+ H).
    """
    d_in = lookback // 2 if use_haar else lookback
    breakdown: dict[str, int] = {}
    if head == HEAD_LOW_RANK:
        breakdown["P"] = d_in * rank
        breakdown["Q"] = rank * horizon
    elif head == HEAD_DENSE:
        breakdown["W"] = d_in * horizon
    else:
        raise ShapeMismatchError(f"unknown head kind {head!r}")
    if with_bias:
        breakdown["bias"] = horizon
    return ParamCount(total=sum(breakdown.values()), breakdown=breakdown)


def kilo_display(total: int, decimals: int = 2, floor: bool = False) -> str:
    """Format a parameter count in thousands, e.g. 14176 -> '14.18K'.

    Rounds to `decimals` places and trims trailing zeros down to one decimal
    (39040 -> '39.04K' but 50000 -> '50.0K'). With floor=True the value is
    truncated instead of rounded, the convention some summary tables use at
    one decimal.
    """
    k = total / 1000.0
    if floor:
        factor = 10**decimals
        k = math.floor(k * factor) / factor
    text = f"{k:.{decimals}f}"
    if "." in text:
        text = text.rstrip("0")
        if text.endswith("."):
            text += "0"
    return text + "K"


def flop_estimate(model: HadlModel, batch: int, channels: int) -> int:
    """Rough forward-pass cost under a fixed convention: 2 FLOPs per
    multiply-add. Haar costs 2 per output sample (one add, one scale), the
    DCT a full N^2 matrix product, the head its two factor products. Only
    meaningful for comparisons between variants under the same convention.
    """
    L = model.lookback
    n_dct = L // 2 if model.use_haar else L
    per_channel = 0
    if model.use_haar:
        # two-tap filter: 2 multiply-adds per output sample, L/2 outputs
        per_channel += 2 * 2 * (L // 2)
    if model.use_dct:
        per_channel += 2 * n_dct * n_dct
    if model.head == HEAD_LOW_RANK:
        per_channel += 2 * (model.d_in * model.rank + model.rank * model.horizon)
    else:
        per_channel += 2 * model.d_in * model.horizon
    return batch * channels * per_channel


def model_params(model: HadlModel) -> dict[str, np.ndarray]:
    """The trainable arrays by name, in a fixed order."""
    params: dict[str, np.ndarray] = {}
    if model.head == HEAD_LOW_RANK:
        params["P"] = model.P
        params["Q"] = model.Q
    else:
        params["W"] = model.W
    if model.bias is not None:
        params["bias"] = model.bias
    return params


def replace_params(model: HadlModel, params: dict[str, np.ndarray]) -> HadlModel:
    """A copy of `model` with the given parameter arrays swapped in."""
    return replace(
        model,
        P=params.get("P", model.P),
        Q=params.get("Q", model.Q),
        W=params.get("W", model.W),
        bias=params.get("bias", model.bias),
    )


def models_equal(a: HadlModel, b: HadlModel) -> bool:
    """Bit-exact equality of flags, shapes and parameters."""
    if (a.lookback, a.horizon, a.use_haar, a.use_dct, a.head, a.seed) != (
        b.lookback,
        b.horizon,
        b.use_haar,
        b.use_dct,
        b.head,
        b.seed,
    ):
        return False
    for pa, pb in ((a.P, b.P), (a.Q, b.Q), (a.W, b.W), (a.bias, b.bias)):
        if (pa is None) != (pb is None):
            return False
        if pa is not None and not np.array_equal(pa, pb, equal_nan=True):
            return False
    return True


# Checkpoint layout: a single .npz archive. Key "meta" holds a JSON string
# with lookback, horizon, use_haar, use_dct, head, seed and which arrays are
# present; keys "P", "Q", "W", "bias" hold the float64 parameter matrices in
# row-major order. float64 survives the round trip bit-exactly.

def save_checkpoint(model: HadlModel, path) -> None:
    meta = {
        "lookback": model.lookback,
        "horizon": model.horizon,
        "use_haar": model.use_haar,
        "use_dct": model.use_dct,
        "head": model.head,
        "seed": model.seed,
        "arrays": sorted(model_params(model).keys()),
    }
    arrays = {k: np.ascontiguousarray(v) for k, v in model_params(model).items()}
    np.savez(path, meta=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path) -> HadlModel:
    with np.load(path, allow_pickle=False) as archive:
        meta = json.loads(str(archive["meta"]))
        arrays = {k: archive[k] for k in meta["arrays"]}
    model = HadlModel(
        lookback=int(meta["lookback"]),
        horizon=int(meta["horizon"]),
        use_haar=bool(meta["use_haar"]),
        use_dct=bool(meta["use_dct"]),
        head=str(meta["head"]),
        seed=int(meta["seed"]),
    )
    return replace_params(model, arrays)
