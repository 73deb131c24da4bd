"""Reference model for matpowsum.ml64; prints the expected output."""

N, M, ITERS = 64, 1000003, 50


def rem(x, y):
    # Truncating remainder, as the guest's 64-bit signed `%`.
    r = abs(x) % y
    return r if x >= 0 else -r


a = [[(i * 7 + j * 13 + 5) % 17 - 8 for j in range(N)] for i in range(N)]
p = [row[:] for row in a]
s = [row[:] for row in a]
for _ in range(1, ITERS):
    t = [[rem(sum(p[i][k] * a[k][j] for k in range(N)), M) for j in range(N)] for i in range(N)]
    p = t
    s = [[rem(s[i][j] + t[i][j], M) for j in range(N)] for i in range(N)]
h = 0
for i in range(N):
    for j in range(N):
        h = rem(h * 31 + s[i][j], M)
print(f"matpowsum n={N} iters={ITERS} hash={h}")
print(f"corner {s[0][0]} {s[N - 1][N - 1]}")
