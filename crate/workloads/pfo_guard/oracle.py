"""Reference model for pfo_guard.ml64."""


def rem(x, y):
    r = abs(x) % y
    return r if x >= 0 else -r


N, ROUNDS = 2048, 6
samples = []
x = 12345
for _ in range(N):
    x = rem(x * 1103515245 + 12345, 2147483648)
    if x < 0:
        x = -x
    samples.append(rem(x, 1000))
total = 0
for r in range(ROUNDS):
    for v in samples:
        s = sum(rem(v * j + r, 97) for j in range(12))
        total = rem(total + s, 1000000007)
print(f"pfo_guard total={total}")
