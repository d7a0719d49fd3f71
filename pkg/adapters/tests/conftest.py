import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

PRIMARY = [sys.executable, "-m", "semsplat.cli"]
ADAPTER = [sys.executable, "-m", "semsplat_adapters.cli"]


def run_cli(base, args, check=True):
    result = subprocess.run(base + args, capture_output=True, text=True)
    if check and result.returncode != 0:
        raise AssertionError(
            f"{' '.join(base + args)} failed ({result.returncode}):\n"
            f"{result.stdout}\n{result.stderr}")
    return result


@pytest.fixture
def rng():
    return np.random.default_rng(99)


@pytest.fixture
def sample_images(tmp_path, rng):
    """Three small RGB images with colored blobs on gray."""
    paths = []
    for i in range(3):
        img = np.full((40, 48, 3), 0.5)
        img[5:20, 5 + 4 * i:25 + 4 * i] = (0.9, 0.1, 0.1)
        img[22:36, 10:30] = (0.1, 0.2, 0.9)
        noise = rng.uniform(-0.03, 0.03, size=img.shape)
        arr = (np.clip(img + noise, 0, 1) * 255).astype(np.uint8)
        path = tmp_path / f"img_{i}.png"
        Image.fromarray(arr).save(path)
        paths.append(path)
    return paths
