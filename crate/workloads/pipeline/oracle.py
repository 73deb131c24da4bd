"""Reference model for the pipeline workload."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "checksum_lib"))
from oracle import adler_words  # noqa: E402


def predict(left, up, corner):
    p = left + up - corner
    pa, pb, pc = abs(p - left), abs(p - up), abs(p - corner)
    if pa <= pb and pa <= pc:
        return left
    if pb <= pc:
        return up
    return corner


rows = cols = 256
img = [(r * r + 3 * c * r + c) % 251 for r in range(rows) for c in range(cols)]
for r in range(rows - 1, -1, -1):
    for c in range(cols - 1, -1, -1):
        left = img[r * cols + c - 1] if c > 0 else 0
        up = img[(r - 1) * cols + c] if r > 0 else 0
        corner = img[(r - 1) * cols + c - 1] if r > 0 and c > 0 else 0
        img[r * cols + c] = (img[r * cols + c] - predict(left, up, corner)) & 255
print(f"filtered corner={img[rows * cols - 1]} centre={img[128 * cols + 128]}")
print(f"checksum={adler_words(img)}")
