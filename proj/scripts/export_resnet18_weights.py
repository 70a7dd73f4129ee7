#!/usr/bin/env python3
"""Exports a torchvision resnet18 state dict to the trunk weight format.

The file layout is the little-endian "DSWT" container the C++ side reads:
magic, u32 version, u32 tensor count, then per tensor a u32-length name,
u32 ndim, u64 dims, and float64 data. Tensor names keep the torchvision
state-dict keys; running statistics are exported but ignored by the loader,
which recomputes batch statistics per image.

  python3 scripts/export_resnet18_weights.py out.dswt             # random init
  python3 scripts/export_resnet18_weights.py out.dswt --pretrained

--pretrained needs the torchvision download cache or network access.
"""

import argparse
import struct
import sys


def write_tensor_file(path, tensors):
    with open(path, "wb") as f:
        f.write(b"DSWT")
        f.write(struct.pack("<II", 1, len(tensors)))
        for name, arr in tensors.items():
            enc = name.encode("utf-8")
            f.write(struct.pack("<I", len(enc)))
            f.write(enc)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.astype("<f8").tobytes(order="C"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", help="output weight file")
    ap.add_argument("--pretrained", action="store_true",
                    help="export the ImageNet-pretrained weights instead of random init")
    ap.add_argument("--seed", type=int, default=0, help="seed for random init")
    args = ap.parse_args()

    try:
        import torch
        import torchvision
    except ImportError as e:
        print(f"torch/torchvision required: {e}", file=sys.stderr)
        return 1

    torch.manual_seed(args.seed)
    weights = torchvision.models.ResNet18_Weights.IMAGENET1K_V1 if args.pretrained else None
    model = torchvision.models.resnet18(weights=weights)

    tensors = {}
    for name, value in model.state_dict().items():
        if name.startswith("fc."):
            continue  # classifier head is not part of the trunk
        if value.dtype.is_floating_point:
            tensors[name] = value.detach().numpy()
    write_tensor_file(args.out, tensors)
    print(f"wrote {len(tensors)} tensors to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
