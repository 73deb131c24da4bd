"""Reference model for cjson_like.ml64."""

import sys

sys.setrecursionlimit(100000)
N = 10000
kind = [(i * 7 + 3) % 5 for i in range(N)]
for i in range(N // 4):
    kind[i] = i % 2
value = [(i * 2654435761) % 100003 for i in range(N)]
first = [-1] * N
nxt = [-1] * N
for c in range(N - 1, 0, -1):
    p = (c - 1) // 4
    nxt[c] = first[p]
    first[p] = c


def children(n):
    c = first[n]
    while c >= 0:
        yield c
        c = nxt[c]


def digest(n, depth):
    h = kind[n] * 131 + value[n] + depth
    if kind[n] < 2:
        for c in children(n):
            h = (h * 31 + digest(c, depth + 1)) % 1000000007
    return h


def count_kind(n, k):
    return (kind[n] == k) + sum(count_kind(c, k) for c in children(n))


print(f'{{"nodes":{N},"digest":{digest(0, 0)},"objects":{count_kind(0, 0)},"numbers":{count_kind(0, 2)}}}')
