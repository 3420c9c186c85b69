#include "util.h"

int min2(int a, int b) {
    return a < b ? a : b;
}

int clamp(int x, int lo, int hi) {
    return max2(lo, min2(x, hi));
}

/* Euclid, recursive on purpose */
int gcd(int a, int b) {
    if (b == 0)
        return a;
    return gcd(b, a % b);
}
