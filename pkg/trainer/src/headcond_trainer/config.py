"""Trainer configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


STYLE_DIM = 512
COND_VECTOR_DIM = 236  # shape 100 + expression 50 + pose 6 + appearance 50 + lighting 27 + camera 3


def default_channels(resolution: int) -> dict:
    # reduced widths, capped well under 128: the full-scale recipe is out of
    # reach here and small nets train stably on small synthetic sets
    table = {4: 64, 8: 64, 16: 48, 32: 32, 64: 24}
    return {res: table[res] for res in _resolutions(resolution)}


def _resolutions(resolution: int):
    res, out = 4, []
    while res <= resolution:
        out.append(res)
        res *= 2
    return out


@dataclass
class TrainerConfig:
    resolution: int = 32                 # 32 or 64
    style_dim: int = STYLE_DIM
    mapping_depth: int = 8
    channels: dict = field(default_factory=dict)
    conditioning: str = "render"         # "render" (stack injection) or "vector"
    lambda_tex: float = 1.0
    tex_every: int = 4                   # texture-consistency step cadence
    steal_resolution: int = 64
    lr: float = 1e-3
    lr_d: float | None = 5e-4            # None: same as lr
    betas: tuple = (0.0, 0.99)
    style_lr: float = 0.1                # plain SGD on the per-record style table
    r1_gamma: float = 10.0
    r1_every: int = 1
    d_channel_scale: float = 1.0         # shrink the discriminator relative to G
    batch_size: int = 8
    steps: int = 1500
    seed: int = 0
    normalize_condition: bool = True     # feed stacks as 2x - 1

    def __post_init__(self):
        if self.resolution not in (32, 64):
            raise ValueError(f"resolution must be 32 or 64, got {self.resolution}")
        if self.style_dim != STYLE_DIM:
            raise ValueError(f"style_dim is fixed at {STYLE_DIM}")
        if self.mapping_depth != 8:
            raise ValueError("mapping network has 8 layers")
        if self.conditioning not in ("render", "vector"):
            raise ValueError(f"unknown conditioning mode {self.conditioning!r}")
        if self.lambda_tex < 0:
            raise ValueError("lambda_tex must be >= 0")
        if not self.channels:
            self.channels = default_channels(self.resolution)
        missing = [r for r in _resolutions(self.resolution) if r not in self.channels]
        if missing:
            raise ValueError(f"channels missing resolutions {missing}")
        if self.lr_d is None:
            self.lr_d = self.lr

    @property
    def d_channels(self) -> dict:
        return {r: max(8, int(c * self.d_channel_scale)) for r, c in self.channels.items()}

    @property
    def resolutions(self):
        return _resolutions(self.resolution)

    @property
    def levels(self) -> int:
        return len(self.resolutions)
