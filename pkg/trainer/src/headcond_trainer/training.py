"""Training: non-saturating GAN with R1, per-record style table, and the
texture-consistency step wired through the primary component."""

from __future__ import annotations

import json
import os

import numpy as np
import torch
import torch.nn.functional as F
from torch import autograd, nn

from headcond import interpolate_params

from .config import COND_VECTOR_DIM, TrainerConfig
from .data import TrainData
from .networks import Discriminator, Generator, StyleTable
from .sampling import masked_l2, sample_image_at


class Trainer:
    def __init__(self, cfg: TrainerConfig, data: TrainData, out_dir=None):
        if data.resolution != cfg.resolution:
            raise ValueError(
                f"config resolution {cfg.resolution} != dataset {data.resolution}")
        self.cfg = cfg
        self.data = data
        self.out_dir = os.fspath(out_dir) if out_dir is not None else None
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)

        torch.manual_seed(cfg.seed)
        self.vector_mode = cfg.conditioning == "vector"
        # vector mode: the 236 condition values ride in the style input, the
        # trainable per-record part fills the remaining dimensions
        table_dim = cfg.style_dim - COND_VECTOR_DIM if self.vector_mode else cfg.style_dim
        self.generator = Generator(cfg)
        self.style_table = StyleTable(len(data), table_dim)
        d_in = 3 if self.vector_mode else 9
        self.discriminator = Discriminator(cfg, in_channels=d_in)

        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.lr,
                                      betas=cfg.betas)
        # plain SGD: rows absent from a batch receive zero gradient and stay
        # bitwise untouched (the StyleTable invariant)
        self.opt_style = torch.optim.SGD(self.style_table.parameters(), lr=cfg.style_lr)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.lr_d,
                                      betas=cfg.betas)

        self._shuffle_rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([cfg.seed, 0x5A])))
        self.history = []
        self.step_count = 0
        self._zero_overlap_pairs = 0

    # ----- forward paths ---------------------------------------------------

    def _style_input(self, idx: torch.Tensor) -> torch.Tensor:
        rows = self.style_table(idx)
        if self.vector_mode:
            return torch.cat([self.data.cond_vectors[idx], rows], dim=1)
        return rows

    def generator_forward(self, idx: torch.Tensor,
                          pyramid: dict | None = None) -> torch.Tensor:
        """Images in [-1, 1] for dataset records (or an override pyramid)."""
        style = self._style_input(idx)
        if self.vector_mode:
            return self.generator(style)
        if pyramid is None:
            pyramid = self.data.pyramid_batch(idx, self.cfg.normalize_condition)
        return self.generator(style, pyramid)

    def discriminator_forward(self, image: torch.Tensor,
                              idx: torch.Tensor) -> torch.Tensor:
        if self.vector_mode:
            return self.discriminator(image, cond_vec=self.data.cond_vectors[idx])
        stack = self.data.pyramids[self.cfg.resolution][idx]
        if self.cfg.normalize_condition:
            stack = stack * 2.0 - 1.0
        return self.discriminator(image, stack=stack)

    # ----- losses ----------------------------------------------------------

    def gan_step(self, idx: torch.Tensor) -> dict:
        cfg = self.cfg
        real = self.data.targets[idx]

        with torch.no_grad():
            fake = self.generator_forward(idx)
        d_fake = self.discriminator_forward(fake, idx)
        run_r1 = self.step_count % cfg.r1_every == 0
        if run_r1:
            real_req = real.detach().requires_grad_(True)
            d_real = self.discriminator_forward(real_req, idx)
            grad = autograd.grad(d_real.sum(), real_req, create_graph=True)[0]
            r1 = grad.pow(2).sum(dim=(1, 2, 3)).mean()
        else:
            d_real = self.discriminator_forward(real, idx)
            r1 = real.new_zeros(())
        d_loss = F.softplus(d_fake).mean() + F.softplus(-d_real).mean()
        d_total = d_loss + 0.5 * cfg.r1_gamma * r1
        self.opt_d.zero_grad(set_to_none=True)
        d_total.backward()
        self.opt_d.step()

        fake = self.generator_forward(idx)
        g_loss = F.softplus(-self.discriminator_forward(fake, idx)).mean()
        tex_loss = fake.new_zeros(())
        overlap = 0
        if cfg.lambda_tex > 0 and self.step_count % cfg.tex_every == 0:
            tex_loss, overlap = self.texture_consistency_step(idx, self.step_count)
        g_total = g_loss + cfg.lambda_tex * tex_loss
        self.opt_g.zero_grad(set_to_none=True)
        self.opt_style.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()
        self.opt_style.step()

        losses = {
            "d_loss": float(d_loss.detach()),
            "g_loss": float(g_loss.detach()),
            "r1": float(r1.detach()),
            "tex_loss": float(tex_loss.detach()),
            "tex_overlap": int(overlap),
        }
        if not all(np.isfinite(v) for v in losses.values()):
            raise RuntimeError(f"non-finite loss at step {self.step_count}: {losses}")
        self.step_count += 1
        return losses

    def texture_consistency_step(self, idx: torch.Tensor, step: int):
        """Interpolate head parameters within the batch, render the new
        conditions through the primary component, generate both images, steal
        both textures differentiably, and return the count-weighted masked L2.
        """
        ids = [int(i) for i in idx]
        batch_params = [self.data.params[i] for i in ids]
        seed = np.random.SeedSequence([self.cfg.seed, 0x7E0, step])
        interp = interpolate_params(batch_params, seed)

        new_pyr = []
        new_corr = []
        new_mask = []
        for fp in interp:
            pyr, corr, mask = self.data.condition_for_params(fp)
            new_pyr.append(pyr)
            new_corr.append(corr)
            new_mask.append(mask)

        if self.vector_mode:
            img_orig = self.generator_forward(idx)
            style = self.style_table(idx)
            vecs = torch.stack([self.data.standardize_vector(fp) for fp in interp])
            img_new = self.generator(torch.cat([vecs, style], dim=1))
        else:
            img_orig = self.generator_forward(idx)
            pyramid = {
                res: torch.stack([p[res] for p in new_pyr])
                for res in self.cfg.resolutions
            }
            if self.cfg.normalize_condition:
                pyramid = {r: lvl * 2.0 - 1.0 for r, lvl in pyramid.items()}
            img_new = self.generator(self._style_input(idx), pyramid)

        total = img_orig.new_zeros(())
        counts = 0
        zero_overlap_pairs = 0
        for k, rec in enumerate(ids):
            corr_a, mask_a = self.data.correspondences(rec)
            corr_b, mask_b = new_corr[k], new_mask[k]
            joint = corr_a.visible & corr_b.visible
            n = int(joint.sum())
            if n == 0:
                zero_overlap_pairs += 1
                continue
            xy_a = torch.from_numpy(corr_a.img_xy[joint]).to(img_orig.dtype)
            xy_b = torch.from_numpy(corr_b.img_xy[joint]).to(img_orig.dtype)
            tex_a = sample_image_at((img_orig[k] + 1.0) / 2.0, xy_a, mask_a)
            tex_b = sample_image_at((img_new[k] + 1.0) / 2.0, xy_b, mask_b)
            total = total + n * masked_l2(tex_a, tex_b)
            counts += n
        self._zero_overlap_pairs = zero_overlap_pairs
        if counts == 0:
            return img_orig.new_zeros(()), 0
        return total / counts, counts

    # ----- evaluation / driving -------------------------------------------

    def eval_texture_loss(self, n_pairs: int = 10, seed: int = 0xE7A1) -> float:
        """Texture-consistency loss over fixed eval pairs, no updates."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
        idx = torch.tensor(rng.choice(len(self.data), size=min(n_pairs, len(self.data)),
                                      replace=False))
        with torch.no_grad():
            loss, _ = self.texture_consistency_step(idx, step=seed)
        return float(loss)

    def adherence(self, idx=None) -> float:
        """Mean over records of 1 - MAE(generated, target) inside the mask."""
        if idx is None:
            idx = torch.arange(len(self.data))
        idx = torch.as_tensor(idx, dtype=torch.long)
        if idx.numel() == 0:
            raise ValueError("adherence needs a non-empty evaluation set")
        scores = []
        with torch.no_grad():
            for start in range(0, len(idx), 16):
                part = idx[start:start + 16]
                gen = ((self.generator_forward(part) + 1.0) / 2.0).clamp(0.0, 1.0)
                tgt = (self.data.targets[part] + 1.0) / 2.0
                for k in range(len(part)):
                    m = self.data.masks[part[k]]
                    mae = (gen[k] - tgt[k]).abs().mean(dim=0)[m].mean()
                    scores.append(1.0 - float(mae))
        return float(np.mean(scores))

    def train(self, steps: int | None = None) -> list:
        steps = self.cfg.steps if steps is None else steps
        n = len(self.data)
        batch = min(self.cfg.batch_size, n)
        order = []
        log = open(os.path.join(self.out_dir, "losses.jsonl"), "a") if self.out_dir else None
        try:
            for _ in range(steps):
                if len(order) < batch:
                    order = list(self._shuffle_rng.permutation(n))
                idx = torch.tensor([order.pop() for _ in range(batch)], dtype=torch.long)
                losses = self.gan_step(idx)
                self.history.append(losses)
                if log:
                    log.write(json.dumps({"step": self.step_count, **losses}) + "\n")
        finally:
            if log:
                log.close()
        return self.history

    def save_checkpoint(self, path) -> None:
        torch.save({
            "config": self.cfg.__dict__,
            "generator": self.generator.state_dict(),
            "style_table": self.style_table.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "step": self.step_count,
        }, path)

    def load_checkpoint(self, path) -> None:
        state = torch.load(path, weights_only=True)
        self.generator.load_state_dict(state["generator"])
        self.style_table.load_state_dict(state["style_table"])
        self.discriminator.load_state_dict(state["discriminator"])
        self.step_count = state["step"]

    def sample_grid(self, path, idx=None, cols: int = 4) -> None:
        from PIL import Image as PILImage

        if idx is None:
            idx = torch.arange(min(8, len(self.data)))
        with torch.no_grad():
            gen = (self.generator_forward(idx) + 1.0) / 2.0
        imgs = (gen.clamp(0, 1).permute(0, 2, 3, 1).numpy() * 255).astype(np.uint8)
        rows = int(np.ceil(len(imgs) / cols))
        p = self.cfg.resolution
        grid = np.zeros((rows * p, cols * p, 3), np.uint8)
        for k, im in enumerate(imgs):
            r, c = divmod(k, cols)
            grid[r * p:(r + 1) * p, c * p:(c + 1) * p] = im
        PILImage.fromarray(grid).save(path)
