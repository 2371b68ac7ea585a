static unsigned mod_adler(unsigned x)
{
    return x % 65521u;
}

static unsigned mod_fletcher(unsigned x)
{
    return x % 255u;
}

unsigned ck_adler32(const unsigned char *p, unsigned long n)
{
    unsigned a = 1, b = 0;
    unsigned long i;
    for (i = 0; i < n; i++) {
        a = mod_adler(a + p[i]);
        b = mod_adler(b + a);
    }
    return (b << 16) | a;
}

unsigned ck_fletcher16(const unsigned char *p, unsigned long n)
{
    unsigned s1 = 0, s2 = 0;
    unsigned long i;
    for (i = 0; i < n; i++) {
        s1 = mod_fletcher(s1 + p[i]);
        s2 = mod_fletcher(s2 + s1);
    }
    return (s2 << 8) | s1;
}

unsigned char ck_xor8(const unsigned char *p, unsigned long n)
{
    unsigned char x = 0;
    unsigned long i;
    for (i = 0; i < n; i++)
        x ^= p[i];
    return x;
}

unsigned ck_combined(const unsigned char *p, unsigned long n)
{
    return ck_adler32(p, n) ^ ck_fletcher16(p, n);
}
