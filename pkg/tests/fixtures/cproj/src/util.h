#ifndef UTIL_H
#define UTIL_H

static inline int max2(int a, int b) { return a > b ? a : b; }

int min2(int a, int b);
int clamp(int x, int lo, int hi);
int gcd(int a, int b);

#endif
