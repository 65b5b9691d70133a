//! Top-k selection without sorting the whole input.

use std::cmp::Ordering;

/// Buffers up to this many entries are kept sorted by insertion; larger ones
/// collect everything and select once at the end.
const INSERTION_LIMIT: usize = 48;

/// Streaming collector of the `k` largest keys, each paired with a payload.
///
/// Keys compare with `f64::total_cmp`. For small `k` the earlier of two equal
/// keys is kept; above the insertion limit ties are broken arbitrarily.
#[derive(Debug, Clone)]
pub struct TopK<T> {
    k: usize,
    items: Vec<(f64, T)>,
    sorted: bool,
}

impl<T: Copy> TopK<T> {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(if k <= INSERTION_LIMIT { k + 1 } else { 0 }),
            sorted: true,
        }
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.sorted = true;
    }

    /// The smallest key a new entry must exceed to be kept, once the buffer is full.
    #[inline]
    fn floor(&self) -> Option<f64> {
        if self.items.len() == self.k {
            self.items.last().map(|e| e.0)
        } else {
            None
        }
    }

    #[inline]
    pub fn push(&mut self, key: f64, payload: T) {
        if self.k == 0 {
            return;
        }
        if self.k > INSERTION_LIMIT {
            self.items.push((key, payload));
            self.sorted = false;
            return;
        }
        if let Some(floor) = self.floor() {
            if key.total_cmp(&floor) != Ordering::Greater {
                return;
            }
            self.items.pop();
        }
        // Insert after every entry with key >= the new key.
        let pos = self
            .items
            .partition_point(|e| e.0.total_cmp(&key) != Ordering::Less);
        self.items.insert(pos, (key, payload));
    }

    /// The retained entries, largest key first.
    pub fn finish(&mut self) -> &[(f64, T)] {
        if !self.sorted {
            top_k_desc(&mut self.items, self.k);
            self.items.truncate(self.k);
            self.sorted = true;
        }
        &self.items
    }
}

/// Reorders `items` so the first `min(k, len)` entries are the largest keys in
/// descending order. Uses `select_nth_unstable_by`, then sorts only the prefix.
pub fn top_k_desc<T>(items: &mut [(f64, T)], k: usize) {
    let k = k.min(items.len());
    if k == 0 {
        return;
    }
    let desc = |a: &(f64, T), b: &(f64, T)| b.0.total_cmp(&a.0);
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, desc);
    }
    items[..k].sort_by(desc);
}
