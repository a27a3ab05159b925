"""Class-wise residual medians on the two-class scene over several seeds.

    python3 scripts/class_ranking.py [--config PATH] [--seeds N]
"""

import argparse

from supportcal.analysis import SCENE_STREAM, class_stats
from supportcal.config import bundled_config_path, load_config
from supportcal.scene_sim import derive_seed, generate_scene, oracle_residuals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(bundled_config_path("experiment3.yaml")))
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    cfg = load_config(args.config)
    print(f"{'seed':>4}  " + "  ".join(f"{c.cls.name:>18}" for c in cfg.scene.classes))
    for seed in range(args.seeds):
        scene = generate_scene(cfg.scene, derive_seed(seed, SCENE_STREAM))
        rows = {s.class_id: s for s in class_stats(oracle_residuals(scene, scene.reference_extrinsics, seed))}
        cells = []
        for spec in cfg.scene.classes:
            s = rows.get(spec.cls.id)
            cells.append(f"{'-':>18}" if s is None else f"{s.summary:>9.3f} px {'above' if s.above_average else 'below':>5}")
        print(f"{seed:>4}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
