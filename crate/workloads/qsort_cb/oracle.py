"""Reference model for qsort_cb.ml64. Both comparators are total orders, so
any correct sort gives the same array."""

MASK = (1 << 64) - 1


def signed(x):
    x &= MASK
    return x - (1 << 64) if x >> 63 else x


def rem(x, y):
    r = abs(x) % y
    return r if x >= 0 else -r


def fill(n, seed):
    x, out = seed, []
    for _ in range(n):
        x = rem(signed(x * 6364136223846793005 + 1442695040888963407), 1000003)
        if x < 0:
            x = -x
        out.append(x)
    return out


def checksum(d):
    h = 0
    for v in d:
        h = (h * 1000003 + v) % 2147483647
    return h


n = 1500
d = sorted(fill(n, 7))
print(f"by_value first={d[0]} last={d[-1]} sum={checksum(d)}")
d = sorted(fill(n, 11), key=lambda v: (-(v % 10), v))
print(f"by_digits first={d[0]} last={d[-1]} sum={checksum(d)}")
