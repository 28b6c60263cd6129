//! Execution strategy for data-parallel loops.
//!
//! Work is always cut into the same fixed-size chunks and reduced in chunk
//! order, so serial and parallel runs produce bit-identical floating-point
//! results regardless of thread count.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Serial,
    /// Uses rayon when the `parallel` feature is enabled, otherwise serial.
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this strategy actually runs on the rayon pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Order-preserving map.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `chunk`-sized slices.
    pub fn map_chunks<T, R, F>(self, items: &[T], chunk: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &[T]) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            use rayon::prelude::*;
            return items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i * chunk, c))
                .collect();
        }
        items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_and_parallel_agree() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let sum = |e: Execution| -> f64 {
            e.map_chunks(&xs, 7, |_, c| c.iter().sum::<f64>())
                .into_iter()
                .sum()
        };
        assert_eq!(sum(Execution::Serial).to_bits(), sum(Execution::Parallel).to_bits());
        assert_eq!(
            Execution::Serial.map(&xs, |x| x * 2.0),
            Execution::Parallel.map(&xs, |x| x * 2.0)
        );
    }
}
