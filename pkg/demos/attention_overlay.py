"""Visualize self-attention patch selection on a PatchChase frame.

Renders one frame, scores all 10x10 patches with a random Key/Query
projection, and writes a PPM image with the top-10 windows outlined in
white.  With random parameters the selection is arbitrary; after training
(see `seesaw-neat play --dump-frames`) the windows lock onto the target.

Usage: python demos/attention_overlay.py [out.ppm]
"""

import sys

import numpy as np

from seesaw_neat import attention as att
from seesaw_neat.envs import PatchChase


def main():
    out_path = sys.argv[1] if len(sys.argv) > 1 else "attention_overlay.ppm"
    cfg = att.AttentionConfig()          # 10x10 patches, stride 5, top-10
    rng = np.random.default_rng(0)

    env = PatchChase()
    frame = env.reset(seed=7)
    print(f"frame: {frame.height}x{frame.width}, "
          f"agent at {tuple(env.agent)}, target at {tuple(env.target)}")

    grid = att.extract_patches(frame.data, cfg)
    print(f"extracted {grid.patches.shape[0]} patches "
          f"({grid.rows}x{grid.cols} grid, {grid.patches.shape[1]} values each)")

    rows = cfg.patch_len + 1             # flattened patch + bias column
    params = att.AttentionParams(rng.normal(scale=0.1, size=(rows, cfg.d)),
                                 rng.normal(scale=0.1, size=(rows, cfg.d)))
    print(f"attention parameters: {att.param_count(cfg)} "
          f"(two {rows}x{cfg.d} projections)")

    ranking = att.score_patches(grid, params, cfg)
    print("top-10 patch centers (pixel coordinates):")
    for idx in ranking.top_k:
        cy, cx = grid.centers[idx]
        print(f"  patch {idx:3d} at ({cy:5.1f}, {cx:5.1f}) "
              f"importance {ranking.scores[idx]:.3f}")

    obs = att.patch_centers(ranking, grid, (frame.height, frame.width))
    print(f"observation vector ({obs.size} values in [0, 1]):")
    print("  " + " ".join(f"{v:.3f}" for v in obs))

    overlay = att.draw_topk_overlay(frame.data, ranking, grid, cfg)
    att.write_ppm(out_path, overlay)
    print(f"wrote {out_path}")


if __name__ == "__main__":
    main()
