#!/usr/bin/env python3
"""Fill a VGG-16 backbone checkpoint with torchvision ImageNet weights.

    gpgan vgg-template --out vgg16
    python3 tools/convert_vgg16.py vgg16 [--weights vgg16-397923af.pth]

The resulting directory is what the `vgg_weights` training key expects.
"""
import argparse
import json
import os

import torch

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def load_state(path):
    if path:
        return torch.load(path, map_location="cpu")
    import torchvision

    return torchvision.models.vgg16(weights="IMAGENET1K_V1").state_dict()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("checkpoint", help="directory written by `gpgan vgg-template`")
    ap.add_argument("--weights", help="torchvision vgg16 .pth; downloaded when omitted")
    args = ap.parse_args()

    manifest_path = os.path.join(args.checkpoint, "manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    state = load_state(args.weights)
    convs = sorted(
        {int(k.split(".")[1]) for k in state if k.startswith("features.") and k.endswith(".weight")}
    )
    source = []
    for i in convs:
        source.append(state[f"features.{i}.weight"])
        source.append(state[f"features.{i}.bias"])

    entries = manifest["tensors"]
    if len(entries) != len(source):
        raise SystemExit(f"template has {len(entries)} tensors, vgg16 has {len(source)}")
    blob = bytearray()
    for entry, t in zip(entries, source):
        if list(t.shape) != entry["shape"]:
            raise SystemExit(f"{entry['name']}: shape {list(t.shape)} != {entry['shape']}")
        data = t.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
        entry["offset"] = len(blob)
        entry["nbytes"] = len(data)
        entry["dtype"] = "float32"
        blob += data
    manifest["content_digest"] = "%016x" % fnv1a64(bytes(blob))

    with open(os.path.join(args.checkpoint, "tensors.bin.tmp"), "wb") as f:
        f.write(blob)
    os.replace(os.path.join(args.checkpoint, "tensors.bin.tmp"), os.path.join(args.checkpoint, "tensors.bin"))
    with open(manifest_path + ".tmp", "w") as f:
        json.dump(manifest, f, indent=1)
    os.replace(manifest_path + ".tmp", manifest_path)
    print(json.dumps({"checkpoint": args.checkpoint, "tensors": len(entries)}))


if __name__ == "__main__":
    main()
