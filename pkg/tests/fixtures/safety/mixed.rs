use std::ptr;

pub fn swap_raw(a: &mut i32, b: &mut i32) {
    let pa: *mut i32 = a;
    let pb: *mut i32 = b;
    unsafe { ptr::swap(pa, pb) }
}

pub fn first(v: &[u8]) -> u8 {
    let p = v.as_ptr();
    let r = unsafe {
        let x = *p;
        x + 1 };
    r
}

pub fn deref_ref(r: &Box<i32>) -> i32 {
    **r + *r.as_ref()
}

#[cfg(test)]
mod tests {
    #[test]
    fn t() {
        let s = "unsafe";
        assert_eq!(s.len(), 6);
    }
}
