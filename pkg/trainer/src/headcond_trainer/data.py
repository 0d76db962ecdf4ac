"""Dataset access: loads a headcond manifest into tensors and exposes the
primary-component operations the trainer drives (interpolation, condition
rendering, correspondence maps)."""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image as PILImage

from headcond import (
    ImageSpec,
    evaluate,
    load_assets,
    load_manifest,
    load_stack,
    texel_correspondences,
    validate_manifest,
)
from headcond.pipeline import load_params
from headcond.raster import mask_from_stack, render_condition
from headcond.shading import albedo_from_appearance


class TrainData:
    """All records of a dataset, preloaded.

    pyramids: dict resolution -> (N, 6, res, res) float32 tensor (raw [0, 1])
    targets:  (N, 3, P, P) float32 in [-1, 1]
    masks:    (N, P, P) bool, recovered from the stacks' normal channels
    cond_vectors: (N, 236) float32, per-dimension standardized
    """

    def __init__(self, root, steal_resolution: int = 64):
        self.root = os.fspath(root)
        self.manifest = load_manifest(self.root)
        validate_manifest(self.manifest, check_hashes=False)
        self.assets = load_assets(os.path.join(self.root, "assets.fcnd"))
        self.resolution = self.manifest.resolution
        self.image = ImageSpec(self.resolution)
        self.steal_resolution = steal_resolution

        params = []
        stacks = []
        targets = []
        for rec in self.manifest.records:
            fp, _ = load_params(os.path.join(self.root, rec.params_file))
            params.append(fp)
            stacks.append(load_stack(os.path.join(self.root, rec.conditioning_file)))
            with PILImage.open(os.path.join(self.root, rec.target_file)) as im:
                targets.append(np.asarray(im, dtype=np.float32) / 255.0)
        self.params = params
        self.levels = stacks[0].levels

        self.pyramids = {}
        for k in range(self.levels):
            res = stacks[0].pyramid[k].shape[0]
            arr = np.stack([s.pyramid[k] for s in stacks])          # (N, L, L, 6)
            self.pyramids[res] = torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()
        masks = np.stack([mask_from_stack(s.channels) for s in stacks])
        self.masks = torch.from_numpy(masks)
        tgt = torch.from_numpy(np.stack(targets)).permute(0, 3, 1, 2).contiguous()
        self.targets = tgt * 2.0 - 1.0

        vecs = np.stack([fp.to_vector() for fp in params]).astype(np.float32)
        self._vec_mean = vecs.mean(axis=0)
        self._vec_std = np.maximum(vecs.std(axis=0), 1e-6)
        self.cond_vectors = torch.from_numpy((vecs - self._vec_mean) / self._vec_std)

        self._corr_cache = {}

    def __len__(self):
        return len(self.params)

    def standardize_vector(self, fp) -> torch.Tensor:
        """Per-dimension standardized 236-vector (same stats as the dataset)."""
        v = (fp.to_vector().astype(np.float32) - self._vec_mean) / self._vec_std
        return torch.from_numpy(v)

    def pyramid_batch(self, idx: torch.Tensor, normalize: bool) -> dict:
        out = {res: lvl[idx] for res, lvl in self.pyramids.items()}
        if normalize:
            out = {res: lvl * 2.0 - 1.0 for res, lvl in out.items()}
        return out

    def correspondences(self, record_id: int):
        """Correspondence map + render mask for one record (cached)."""
        if record_id not in self._corr_cache:
            self._corr_cache[record_id] = self.condition_for_params(
                self.params[record_id], need_stack=False)
        return self._corr_cache[record_id]

    def condition_for_params(self, fp, need_stack: bool = True):
        """Drive the primary component for arbitrary parameters: conditioning
        pyramid (as tensors), render mask, and correspondence map."""
        mesh = evaluate(self.assets, fp.head)
        albedo = albedo_from_appearance(self.assets, fp.appearance)
        buffers, stack = render_condition(self.assets, mesh, fp.cam, self.image,
                                          albedo, fp.lighting, levels=self.levels)
        corr = texel_correspondences(mesh, fp.cam, self.assets, self.image,
                                     t_s=self.steal_resolution)
        mask = torch.from_numpy(buffers.mask)
        if not need_stack:
            return corr, mask
        pyramid = {
            lvl.shape[0]: torch.from_numpy(np.ascontiguousarray(lvl)).permute(2, 0, 1)
            for lvl in stack.pyramid
        }
        return pyramid, corr, mask
