extern int wu_missing_external(int);

static int wu_clamp(int x, int lo, int hi)
{
    return x < lo ? lo : (x > hi ? hi : x);
}

int wu_abs(int x)
{
    return x < 0 ? -x : x;
}

int wu_max(int a, int b)
{
    return a > b ? a : b;
}

int wu_min(int a, int b)
{
    return a < b ? a : b;
}

int wu_saturate(int x)
{
    return wu_clamp(x, -127, 127);
}

int broken_fn(int x)
{
    return wu_missing_external(x) + wu_abs(x);
}
