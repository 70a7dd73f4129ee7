#!/usr/bin/env python3
"""Regenerates the binary fixtures under tests/data/.

The fixtures are committed; this script documents where they came from and
lets them be rebuilt. Requires scipy and Pillow.
"""

import os

import numpy as np
import scipy.io
from PIL import Image

OUT = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                   "tests", "data")


def mat_fixtures():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    scipy.io.savemat(os.path.join(OUT, "simple.mat"), {"A": a}, do_compression=False)
    scipy.io.savemat(os.path.join(OUT, "simple_compressed.mat"), {"A": a},
                     do_compression=True)

    # Same shape as the segmentation benchmark files: a 1xN cell of structs,
    # each carrying a Segmentation matrix (here 4x6, two annotators).
    seg1 = np.array([[1, 1, 2, 2, 3, 3]] * 4, dtype=np.uint16)
    seg2 = np.array([[1, 1, 1, 2, 2, 2]] * 4, dtype=np.uint16)
    gt = np.empty((1, 2), dtype=object)
    gt[0, 0] = {"Segmentation": seg1, "Boundaries": np.zeros((4, 6), dtype=np.uint8)}
    gt[0, 1] = {"Segmentation": seg2, "Boundaries": np.zeros((4, 6), dtype=np.uint8)}
    scipy.io.savemat(os.path.join(OUT, "bsdlike.mat"), {"groundTruth": gt},
                     do_compression=True)


def png_fixtures():
    # Palette-indexed labels, like the VOC class annotations. Pixel values are
    # the indices 0/1/15/255; the palette colors are irrelevant to the loader.
    idx = np.zeros((4, 6), dtype=np.uint8)
    idx[0, :] = 0
    idx[1, :] = 1
    idx[2, :] = 15
    idx[3, :] = 255
    pal_img = Image.fromarray(idx, mode="P")
    palette = []
    for i in range(256):
        palette += [i, (i * 7) % 256, (i * 13) % 256]
    pal_img.putpalette(palette)
    pal_img.save(os.path.join(OUT, "voc_palette.png"))

    # 8-bit grayscale fine labels, like the stuff annotations: person (0),
    # banner (91), window-other (180), unlabeled (255).
    g8 = np.zeros((4, 6), dtype=np.uint8)
    g8[0, :] = 0
    g8[1, :] = 91
    g8[2, :] = 180
    g8[3, :] = 255
    Image.fromarray(g8, mode="L").save(os.path.join(OUT, "coco_gray8.png"))

    # 16-bit grayscale with values beyond one byte.
    g16 = np.array([[0, 1, 2], [300, 40000, 65535]], dtype=np.uint16)
    Image.fromarray(g16, mode="I;16").save(os.path.join(OUT, "gray16.png"))

    # RGB content must be refused by the label loader.
    rgb = np.zeros((4, 4, 3), dtype=np.uint8)
    rgb[:, :, 0] = 200
    Image.fromarray(rgb, mode="RGB").save(os.path.join(OUT, "rgb.png"))

    # A small photo-like JPEG for the image loader.
    h, w = 6, 8
    photo = np.zeros((h, w, 3), dtype=np.uint8)
    for i in range(h):
        for j in range(w):
            photo[i, j] = (i * 40, j * 30, 128)
    Image.fromarray(photo, mode="RGB").save(os.path.join(OUT, "tiny.jpg"), quality=95)


def main():
    os.makedirs(OUT, exist_ok=True)
    mat_fixtures()
    png_fixtures()
    print("fixtures written to", OUT)


if __name__ == "__main__":
    main()
