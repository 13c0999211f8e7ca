"""Regenerate the environment manifests shipped under src/geocert/assets.

Run from the repository root after changing any environment builder:

    python3 scripts/build_assets.py [--size 25]
"""

import argparse

from geocert.envs import ENV_BUILDERS, assets_dir, save_env


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=25, help="square image size in pixels")
    args = ap.parse_args()

    out = assets_dir()
    out.mkdir(parents=True, exist_ok=True)
    for name, builder in sorted(ENV_BUILDERS.items()):
        env = builder(args.size)
        path = save_env(env, out / f"{name}_{args.size}.json")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
