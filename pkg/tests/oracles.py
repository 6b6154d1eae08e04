"""Reference models written from the definitions, sharing no code with the package."""

PARITY = (1, 2, 4, 8, 16, 32)
DATA_POS = [p for p in range(1, 39) if p not in PARITY]


def hamming_encode(word):
    """Extended Hamming (39,32): bit 0 overall parity, powers of two are checks."""
    bits = [0] * 39
    for k, p in enumerate(DATA_POS):
        bits[p] = (word >> k) & 1
    for p in PARITY:
        bits[p] = sum(bits[i] for i in range(1, 39) if i & p and i != p) & 1
    bits[0] = sum(bits[1:]) & 1
    return sum(b << i for i, b in enumerate(bits))


def hamming_decode(cw):
    """-> (data, 'ok' | 'corrected' | 'uncorrectable')"""
    bits = [(cw >> i) & 1 for i in range(39)]
    syn = 0
    for i in range(1, 39):
        if bits[i]:
            syn ^= i
    overall = sum(bits) & 1
    status = "ok"
    if syn and overall:
        if syn >= 39:
            return None, "uncorrectable"
        bits[syn] ^= 1
        status = "corrected"
    elif syn and not overall:
        return None, "uncorrectable"
    elif overall:
        bits[0] ^= 1
        status = "corrected"
    return sum(bits[p] << k for k, p in enumerate(DATA_POS)), status


def dma_triple_loop(mem, src, dst, inner, reps1, reps2, ss1, ss2, ds1, ds2, base=0):
    for i2 in range(reps2):
        for i1 in range(reps1):
            for k in range(inner):
                mem[dst + i2 * ds2 + i1 * ds1 + k - base] = mem[src + i2 * ss2 + i1 * ss1 + k - base]
