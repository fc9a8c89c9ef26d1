"""Per-layer weight counts of CIFAR VGG-16 from a plain shape walk.

Configuration D, 3x3 convs with padding 1, 2x2 max pools, then a
512-512-10 classifier on the 1x1x512 feature map.
"""
import json
import sys

CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"]


def walk():
    channels, side = 3, 32
    counts = []
    for item in CFG:
        if item == "M":
            side //= 2
            continue
        counts.append(channels * item * 3 * 3)
        channels = item
    features = channels * side * side
    for width in (512, 512, 10):
        counts.append(features * width)
        features = width
    return counts


if __name__ == "__main__":
    counts = walk()
    doc = {"arch": "vgg16", "param_counts": counts, "total": sum(counts)}
    text = json.dumps(doc, indent=1) + "\n"
    if len(sys.argv) > 1:
        with open(sys.argv[1], "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
