static unsigned fold_bits(unsigned x)
{
    x ^= x >> 16;
    x ^= x >> 8;
    x ^= x >> 4;
    return x;
}

unsigned bo_popcount(unsigned x)
{
    unsigned n = 0;
    while (x) {
        x &= x - 1;
        n++;
    }
    return n;
}

unsigned bo_parity(unsigned x)
{
    return (0x6996u >> (fold_bits(x) & 0xfu)) & 1u;
}

unsigned bo_reverse(unsigned x)
{
    unsigned r = 0;
    int i;
    for (i = 0; i < 32; i++) {
        r = (r << 1) | (x & 1u);
        x >>= 1;
    }
    return r;
}

unsigned bo_clz(unsigned x)
{
    unsigned n = 0;
    if (!x)
        return 32;
    while (!(x & 0x80000000u)) {
        x <<= 1;
        n++;
    }
    return n;
}

unsigned bo_hash(unsigned x)
{
    return fold_bits(x * 2654435761u) ^ bo_popcount(x);
}
