static void swap_ints(int *a, int *b)
{
    int t = *a;
    *a = *b;
    *b = t;
}

void sk_bubble(int *v, int n)
{
    int i, j;
    for (i = 0; i < n; i++)
        for (j = 0; j + 1 < n - i; j++)
            if (v[j] > v[j + 1])
                swap_ints(&v[j], &v[j + 1]);
}

void sk_insertion(int *v, int n)
{
    int i, j;
    for (i = 1; i < n; i++)
        for (j = i; j > 0 && v[j - 1] > v[j]; j--)
            swap_ints(&v[j - 1], &v[j]);
}

int sk_is_sorted(const int *v, int n)
{
    int i;
    for (i = 1; i < n; i++)
        if (v[i - 1] > v[i])
            return 0;
    return 1;
}

int sk_min(const int *v, int n)
{
    int i, m = v[0];
    for (i = 1; i < n; i++)
        if (v[i] < m)
            m = v[i];
    return m;
}
