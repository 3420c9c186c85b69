//! Safe module.
use std::collections::HashMap;

/// Counts words.
pub fn count(s: &str) -> usize {
    let mut m = HashMap::new();
    for w in s.split_whitespace() {
        *m.entry(w).or_insert(0) += 1;
    }
    m.len()
}
