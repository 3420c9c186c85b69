pub struct Node {
    next: *mut Node,
    val: i32,
}

pub unsafe fn read(p: *const i32) -> i32 {
    // trust the caller
    *p
}

pub fn cast(x: &i32) -> *const i32 {
    x as *const i32
}

unsafe fn bump(n: *mut Node) {
    (*n).val += 1;

    let m = (*n).next;
    if !m.is_null() { (*m).val = (*m).val * 2; }
}
