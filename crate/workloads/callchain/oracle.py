"""Reference model for callchain.ml64."""


def rem(x, y):
    r = abs(x) % y
    return r if x >= 0 else -r


def wrap(x):
    x &= (1 << 64) - 1
    return x - (1 << 64) if x >> 63 else x


def scramble(x):
    y = wrap(x * 1103515245 + 12345)
    y = rem(y, 2147483648)
    if y < 0:
        y = -y
    return y ^ (y >> 7)


def mix(acc, k):
    v = scramble(acc + k * 31)
    return v + k if rem(v, 3) == 0 else v - k


N = 50000
acc = 1
for i in range(N):
    acc = rem(mix(acc, i), 1000000007)
print(f"chain n={N} result={acc}")
