#!/usr/bin/env python3
"""Print the parameter/FLOP accounting for the three reference
teacher -> student compression pairs at 128x128."""

import sys

from skdistill.models import ModelConfig, compress_config, count_params_flops


PAIRS = [
    ("restormer-shaped", ModelConfig([4, 6, 6, 8], 48, 48, 3), [1, 2, 2, 4], 32),
    ("uformer-shaped", ModelConfig([1, 2, 8, 8], 32, 32, 3), [1, 2, 4, 4], 16),
    ("drsformer-shaped", ModelConfig([4, 4, 6, 6, 8], 48, 48, 3), [2, 2, 2, 2, 4], 32),
]


def main() -> int:
    size = int(sys.argv[1]) if len(sys.argv) > 1 else 128
    print(f"{'pair':18} {'params T':>12} {'params S':>12} {'cut':>7} "
          f"{'flops T':>16} {'flops S':>15} {'cut':>7}")
    for name, teacher, scale, channels in PAIRS:
        student = compress_config(teacher, scale, channels)
        tp, tf = count_params_flops(teacher, size, size)
        sp, sf = count_params_flops(student, size, size)
        print(f"{name:18} {tp:12,} {sp:12,} {100*(1-sp/tp):6.1f}% "
              f"{tf:16,} {sf:15,} {100*(1-sf/tf):6.1f}%")
    return 0


if __name__ == "__main__":
    sys.exit(main())
