# Copyright 2026 The mmdnet Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Regenerates pipeline_tree/: 12 small images with a fixed seed."""
import os

import numpy as np
from PIL import Image

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "pipeline_tree")
rng = np.random.default_rng(7)


def save(domain, label, name, arr, mode):
    d = os.path.join(ROOT, domain, label)
    os.makedirs(d, exist_ok=True)
    img = Image.fromarray(arr.astype(np.uint8), mode)
    if name.endswith(".jpg"):
        img.save(os.path.join(d, name), quality=90)
    else:
        img.save(os.path.join(d, name))


def blocky(h, w, *ch):
    # coarse random blocks plus a ramp; compresses well, still non-trivial
    coarse = rng.integers(0, 200, size=(h // 8 + 1, w // 8 + 1, *ch))
    big = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)[:h, :w]
    ramp = (np.arange(w)[None, :] * 55 // max(w - 1, 1))
    return big + (ramp[..., None] if ch else ramp)


def rgb(h, w):
    return blocky(h, w, 3)


for label in ("diseased", "healthy"):
    for i in range(5):
        name = f"{label[0]}{i}.png"
        if label == "diseased" and i == 0:
            save("source", label, name, blocky(224, 224), "L")  # grayscale
        elif label == "diseased" and i == 1:
            save("source", label, name, rgb(80, 100), "RGB")  # non-224
        else:
            save("source", label, name, rgb(224, 224), "RGB")

save("target", "diseased", "t0.jpg", rgb(224, 224), "RGB")
save("target", "healthy", "t1.png", rgb(224, 224), "RGB")
