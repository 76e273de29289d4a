"""Regenerate the pinned golden fixtures under tests/golden/.

Run from the repository root after an intentional convention change:

    python3 tests/make_goldens.py

The resize fixture is cross-checked against Pillow's float bilinear resize
at generation time; regeneration fails if the two implementations drift.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from replaylab.augment import resize_bilinear, save_tensor

GOLDEN_DIR = Path(__file__).parent / "golden"


def main() -> None:
    GOLDEN_DIR.mkdir(exist_ok=True)
    rng = np.random.default_rng(20240612)
    src = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
    out = resize_bilinear(src, 224, 224)

    from PIL import Image

    for c in range(3):
        ref = Image.fromarray(src[:, :, c].astype(np.float32), mode="F")
        ref = np.asarray(ref.resize((224, 224), Image.BILINEAR), dtype=np.float64)
        mine = resize_bilinear(src.astype(np.float64), 224, 224)[:, :, c]
        worst = np.abs(ref - mine).max()
        if worst > 1e-3:
            raise AssertionError(f"resize drifted from the Pillow reference: {worst}")

    save_tensor(GOLDEN_DIR / "resize_8x8_input.bin", src)
    save_tensor(GOLDEN_DIR / "resize_224x224_expected.bin", out)
    print(f"wrote {GOLDEN_DIR}/resize_8x8_input.bin and resize_224x224_expected.bin")


if __name__ == "__main__":
    main()
