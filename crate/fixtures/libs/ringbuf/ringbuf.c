#define RB_CAP 64

static unsigned char rb_data[RB_CAP];
static unsigned rb_head;
static unsigned rb_tail;

static unsigned rb_next(unsigned i)
{
    return (i + 1) % RB_CAP;
}

void init(void)
{
    rb_head = 0;
    rb_tail = 0;
}

int rb_push(unsigned char c)
{
    unsigned n = rb_next(rb_head);
    if (n == rb_tail)
        return -1;
    rb_data[rb_head] = c;
    rb_head = n;
    return 0;
}

int rb_pop(void)
{
    int c;
    if (rb_head == rb_tail)
        return -1;
    c = rb_data[rb_tail];
    rb_tail = rb_next(rb_tail);
    return c;
}

unsigned rb_size(void)
{
    return (rb_head + RB_CAP - rb_tail) % RB_CAP;
}
