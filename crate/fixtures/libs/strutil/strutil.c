static void swap_chars(char *a, char *b)
{
    char t = *a;
    *a = *b;
    *b = t;
}

unsigned long su_len(const char *s)
{
    unsigned long n = 0;
    while (s[n])
        n++;
    return n;
}

void su_copy(char *dst, const char *src)
{
    while ((*dst++ = *src++))
        ;
}

void su_reverse(char *s)
{
    unsigned long n = su_len(s);
    unsigned long i;
    for (i = 0; i < n / 2; i++)
        swap_chars(&s[i], &s[n - 1 - i]);
}

void su_upper(char *s)
{
    for (; *s; s++)
        if (*s >= 'a' && *s <= 'z')
            *s -= 32;
}
