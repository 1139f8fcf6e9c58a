"""Regenerate tests/fixtures/packet_vectors.txt.

The expected bit strings are built by formatting each field as a fixed-width
binary string and concatenating them in struct order; this deliberately
shares no code with ``PacketFormat.encode``.

    python3 scripts/gen_packet_vectors.py > tests/fixtures/packet_vectors.txt
"""

import random

ORDER = ("addr", "op", "op_ex", "data", "src_y", "src_x", "y", "x")


def widths(xw, yw, aw, dw):
    return {"addr": aw, "op": 2, "op_ex": dw // 8, "data": dw, "src_y": yw, "src_x": xw, "y": yw, "x": xw}


def bits_of(values, w):
    return "".join(format(values[name], f"0{w[name]}b") for name in ORDER)


def random_fields(rng, w):
    op = rng.randrange(4)
    v = {name: rng.randrange(1 << w[name]) for name in ORDER}
    v["op"] = op
    if op == 0:  # loads carry no mask or data
        v["op_ex"] = v["data"] = 0
    elif v["op_ex"] == 0:
        v["op_ex"] = 1
    return v


def main():
    rng = random.Random(20240401)
    shapes = [(2, 2, 4, 8), (3, 3, 20, 32), (1, 1, 2, 8), (4, 5, 28, 64), (3, 4, 20, 32)]
    print("# xw yw aw dw addr op op_ex data src_y src_x y x bits")
    for xw, yw, aw, dw in shapes:
        w = widths(xw, yw, aw, dw)
        for _ in range(40):
            v = random_fields(rng, w)
            cols = " ".join(str(v[n]) for n in ORDER)
            print(f"{xw} {yw} {aw} {dw} {cols} {bits_of(v, w)}")


if __name__ == "__main__":
    main()
