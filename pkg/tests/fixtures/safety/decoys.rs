// unsafe { *p } is not code
/* block: unsafe fn f(p: *const u8) { *p } */
pub fn msg() -> &'static str {
    "unsafe { *mut i32 }"
}

pub fn raw() -> &'static str {
    r#"*const u8 and unsafe"#
}

pub fn mul(a: i32, b: i32) -> i32 {
    a * b // not a deref; *mut in comment
}
