//! Deterministic chunked reductions.
//!
//! Items are split into one contiguous chunk per worker thread and the partial
//! results are merged in chunk order, so a fixed thread count always gives the
//! same floating-point result.

pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads().max(1)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn chunked_reduce<T, M, W, R>(items: usize, make: M, work: W, mut merge: R) -> T
where
    T: Send,
    M: Fn() -> T + Sync,
    W: Fn(&mut T, usize) + Sync,
    R: FnMut(&mut T, T),
{
    let chunks = threads().min(items.max(1));
    if chunks <= 1 {
        let mut acc = make();
        for i in 0..items {
            work(&mut acc, i);
        }
        return acc;
    }
    let size = items.div_ceil(chunks);
    let ranges: Vec<(usize, usize)> =
        (0..chunks).map(|c| (c * size, ((c + 1) * size).min(items))).collect();
    #[cfg(feature = "parallel")]
    let mut parts: Vec<T> = {
        use rayon::prelude::*;
        ranges
            .par_iter()
            .map(|&(a, b)| {
                let mut acc = make();
                for i in a..b {
                    work(&mut acc, i);
                }
                acc
            })
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut parts: Vec<T> = ranges
        .iter()
        .map(|&(a, b)| {
            let mut acc = make();
            for i in a..b {
                work(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut acc = parts.remove(0);
    for p in parts {
        merge(&mut acc, p);
    }
    acc
}

/// Order-preserving parallel map.
pub fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(items: usize, f: F) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..items).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..items).map(f).collect()
    }
}

pub fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
