//! Execution policy for the data-parallel inner loops.
//!
//! With the `parallel` feature the [`ExecPolicy::Parallel`] policy dispatches
//! to rayon; without it every policy runs sequentially. Results are always
//! collected in index order and reduced sequentially, so the output does not
//! depend on the policy.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// Whether this policy actually runs on the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }

    /// Maps `f` over `0..n` and collects the results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Runs `f` on each chunk of `data` of length `chunk` with its chunk index.
    pub fn for_each_chunk<F>(self, data: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree() {
        let f = |i: usize| (i as f64).sqrt();
        let a = ExecPolicy::Sequential.map_range(1000, f);
        let b = ExecPolicy::Parallel.map_range(1000, f);
        assert_eq!(a, b);

        let mut x = vec![1.0; 64];
        let mut y = vec![1.0; 64];
        ExecPolicy::Sequential.for_each_chunk(&mut x, 8, |i, c| c.iter_mut().for_each(|v| *v *= i as f64));
        ExecPolicy::Parallel.for_each_chunk(&mut y, 8, |i, c| c.iter_mut().for_each(|v| *v *= i as f64));
        assert_eq!(x, y);
    }
}
