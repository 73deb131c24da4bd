"""Reference model for the checksum_lib workload."""

MASK = (1 << 64) - 1


def signed(x):
    x &= MASK
    return x - (1 << 64) if x >> 63 else x


def adler_words(words):
    a, b = 1, 0
    for w in words:
        for k in range(0, 64, 8):
            a = (a + ((w >> k) & 255)) % 65521
            b = (b + a) % 65521
    return b * 65536 + a


if __name__ == "__main__":
    n = 1048576
    x = 88172645463325252
    buf = []
    for _ in range(n):
        x = signed(x ^ (x << 13))
        x = signed(x ^ (x >> 7))
        x = signed(x ^ (x << 17))
        buf.append(x)
    print(f"checksum of {n * 8} bytes = {adler_words(buf)}")
