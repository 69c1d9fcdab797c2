//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature (on by default) work is spread over the rayon
//! pool; without it every helper runs sequentially. Results are always
//! returned in input order, so outputs are identical in both modes as long
//! as each item's computation is self-contained (own seed, no shared state).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Execution mode for the helpers in this module.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

impl Mode {
    /// `Parallel` when the crate is built with the `parallel` feature.
    pub fn default_mode() -> Self {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

impl Default for Mode {
    fn default() -> Self {
        Mode::default_mode()
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_with(Mode::default_mode(), items, f)
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    map_range_with(Mode::default_mode(), n, f)
}

pub fn map_with<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

pub fn map_range_with<R, F>(mode: Mode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_with(Mode::Sequential, &xs, |x| x * x);
        let par = map_with(Mode::Parallel, &xs, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[31], 961);
        assert_eq!(map_range(4, |i| i + 1), vec![1, 2, 3, 4]);
    }
}
