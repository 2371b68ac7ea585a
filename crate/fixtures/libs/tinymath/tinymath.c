static int helper_internal(int x)
{
    return x * 2 + 1;
}

int tm_add(int a, int b)
{
    return helper_internal(a) + b;
}

int tm_mul(int a, int b)
{
    return a * b;
}
