//! Online feature aggregation over the last `W` frames.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Element-wise mean of the given `(logits, features)` pairs.
pub fn online_aggregate<'a, I>(frames: I) -> Result<(Vec<f64>, Vec<f64>)>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
{
    let mut iter = frames.into_iter();
    let (z0, f0) = iter
        .next()
        .ok_or_else(|| Error::InsufficientData("empty aggregation buffer".into()))?;
    let mut z = z0.to_vec();
    let mut f = f0.to_vec();
    let mut n = 1usize;
    for (zi, fi) in iter {
        if zi.len() != z.len() || fi.len() != f.len() {
            return Err(Error::Dimension(format!(
                "aggregating ({}, {}) with ({}, {})",
                z.len(),
                f.len(),
                zi.len(),
                fi.len()
            )));
        }
        z.iter_mut().zip(zi).for_each(|(a, b)| *a += b);
        f.iter_mut().zip(fi).for_each(|(a, b)| *a += b);
        n += 1;
    }
    if n > 1 {
        let inv = n as f64;
        z.iter_mut().for_each(|a| *a /= inv);
        f.iter_mut().for_each(|a| *a /= inv);
    }
    Ok((z, f))
}

/// Sliding buffer of the last `W` task frames.
#[derive(Debug, Clone)]
pub struct AggregationBuffer {
    window: usize,
    frames: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl AggregationBuffer {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter("aggregation window must be at least 1".into()));
        }
        Ok(Self {
            window,
            frames: VecDeque::with_capacity(window),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Appends a frame and returns the aggregate of the buffer.
    pub fn push(&mut self, logits: &[f64], features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if let Some((z, f)) = self.frames.back() {
            if z.len() != logits.len() || f.len() != features.len() {
                return Err(Error::Dimension(format!(
                    "aggregating ({}, {}) with ({}, {})",
                    z.len(),
                    f.len(),
                    logits.len(),
                    features.len()
                )));
            }
        }
        if self.frames.len() == self.window {
            self.frames.pop_front();
        }
        self.frames.push_back((logits.to_vec(), features.to_vec()));
        online_aggregate(self.frames.iter().map(|(z, f)| (z.as_slice(), f.as_slice())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_is_identity() {
        let z = [0.3, -1.7];
        let f = [1.0, 2.0, 3.0];
        assert_eq!(online_aggregate([(&z[..], &f[..])]).unwrap(), (z.to_vec(), f.to_vec()));
    }

    #[test]
    fn two_frame_mean() {
        let a = ([0.0, 0.0], [0.0]);
        let b = ([2.0, 4.0], [2.0]);
        let (z, f) = online_aggregate([(&a.0[..], &a.1[..]), (&b.0[..], &b.1[..])]).unwrap();
        assert_eq!(f, vec![1.0]);
        assert_eq!(z, vec![1.0, 2.0]);
    }

    #[test]
    fn contract_errors() {
        assert!(online_aggregate(std::iter::empty()).is_err());
        let z = [0.0, 0.0];
        assert!(online_aggregate([(&z[..], &[0.0][..]), (&z[..], &[0.0, 1.0][..])]).is_err());
        assert!(AggregationBuffer::new(0).is_err());
    }

    #[test]
    fn buffer_slides() {
        let mut b = AggregationBuffer::new(3).unwrap();
        let z = [0.0, 0.0];
        for x in [3.0, 6.0, 9.0, 12.0] {
            b.push(&z, &[x]).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.push(&z, &[15.0]).unwrap().1, vec![12.0]);
        assert!(b.push(&z, &[1.0, 2.0]).is_err());
        assert_eq!(b.len(), 3);
    }
}
