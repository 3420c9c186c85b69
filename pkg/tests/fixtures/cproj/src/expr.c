#include <ctype.h>
#include <stdlib.h>
#include "expr.h"

static int parse_expr(const char **s);

static void skip_ws(const char **s) {
    while (**s == ' ' || **s == '\t')
        (*s)++;
}

static int parse_factor(const char **s) {
    skip_ws(s);
    if (**s == '-') {
        (*s)++;
        return -parse_factor(s);
    }
    if (**s == '(') {
        (*s)++;
        int v = parse_expr(s);
        skip_ws(s);
        if (**s == ')')
            (*s)++;
        return v;
    }
    int v = 0;
    while (isdigit((unsigned char)**s)) {
        v = v * 10 + (**s - '0');
        (*s)++;
    }
    return v;
}

static int parse_term(const char **s) {
    int v = parse_factor(s);
    for (;;) {
        skip_ws(s);
        if (**s == '*') {
            (*s)++;
            v *= parse_factor(s);
        } else if (**s == '/') {
            (*s)++;
            int d = parse_factor(s);
            v = d ? v / d : 0;
        } else {
            return v;
        }
    }
}

static int parse_expr(const char **s) {
    int v = parse_term(s);
    for (;;) {
        skip_ws(s);
        if (**s == '+') {
            (*s)++;
            v += parse_term(s);
        } else if (**s == '-') {
            (*s)++;
            v -= parse_term(s);
        } else {
            return v;
        }
    }
}

int eval(const char *text) {
    const char *p = text;
    return parse_expr(&p);
}
