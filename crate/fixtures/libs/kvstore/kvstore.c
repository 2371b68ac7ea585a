#define KV_SLOTS 32

static int kv_keys[KV_SLOTS];
static int kv_vals[KV_SLOTS];
static int kv_used[KV_SLOTS];

static unsigned kv_slot(int key)
{
    unsigned h = (unsigned)key * 2654435761u;
    return h % KV_SLOTS;
}

void init(void)
{
    int i;
    for (i = 0; i < KV_SLOTS; i++)
        kv_used[i] = 0;
}

int kv_put(int key, int val)
{
    unsigned s = kv_slot(key);
    unsigned i;
    for (i = 0; i < KV_SLOTS; i++) {
        unsigned j = (s + i) % KV_SLOTS;
        if (!kv_used[j] || kv_keys[j] == key) {
            kv_used[j] = 1;
            kv_keys[j] = key;
            kv_vals[j] = val;
            return 0;
        }
    }
    return -1;
}

int kv_get(int key, int *out)
{
    unsigned s = kv_slot(key);
    unsigned i;
    for (i = 0; i < KV_SLOTS; i++) {
        unsigned j = (s + i) % KV_SLOTS;
        if (!kv_used[j])
            return -1;
        if (kv_keys[j] == key) {
            *out = kv_vals[j];
            return 0;
        }
    }
    return -1;
}
