"""Reference model for mutual_rec.ml64."""


def guest_walk(n, acc):
    while n > 0:
        acc, n = acc * 3 + n, n - 1
        a = acc % 1000003
        for k in range(4):
            a = (a * 17 + k) % 1000003
        acc = a
    return acc


total = 0
for i in range(400):
    total = (total + guest_walk(24 + i % 16, i)) % 1000000007
print(f"mutual_rec total={total}")
