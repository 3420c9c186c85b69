#include <assert.h>
#include "../src/util.h"
#include "../src/stack.h"
#include "../src/expr.h"

void test_gcd(void) {
    assert(gcd(12, 18) == 6);
    assert(gcd(7, 0) == 7);
}

void test_clamp(void) {
    assert(clamp(5, 0, 3) == 3);
    assert(clamp(-2, 0, 3) == 0);
    assert(max2(2, 9) == 9);
}

void test_stack(void) {
    Stack s;
    int v = 0;
    stack_init(&s);
    stack_push(&s, 4);
    stack_push(&s, 9);
    assert(stack_size(&s) == 2);
    assert(stack_pop(&s, &v) && v == 9);
}

void test_eval(void) {
    assert(eval("2 + 3 * (4 - 1)") == 11);
    assert(eval("-(2+2)*3") == -12);
}
