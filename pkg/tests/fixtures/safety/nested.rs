pub struct Buf {
    data: Vec<*const u8>,
}

pub unsafe fn walk(p: *const *const u8, n: usize) -> usize {
    let mut total = 0;
    for i in 0..n {
        let inner = *p.add(i);
        unsafe {
            total += *inner as usize;
        }
    }
    total
}
