pub fn zero(p: *mut u8, n: usize) {
    let q = p;
    unsafe {
        *q = 0;
        *q.add(1) = 0;
        let _x = n * 2;
    }
}
