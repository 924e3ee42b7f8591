//! Uniformly sampled multivariate time series and sliding windows over them.

use alloc::vec::Vec;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::WindowSet;

/// `T × d` samples at spacing `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub data: Array2<f64>,
    pub dt: f64,
}

impl TimeSeries {
    pub fn new(data: Array2<f64>, dt: f64) -> Self {
        Self { data, dt }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }
}

/// Sliding windows and, when the series extends past them, the frame that
/// follows each window.
#[derive(Debug, Clone, PartialEq)]
pub struct Windowed {
    pub windows: WindowSet,
    /// Row `k` is the frame right after window `k`; `None` only when `T = τ`.
    pub targets: Option<Array2<f64>>,
}

/// Windows `[e − τ + 1 ..= e]` ending at `e = τ − 1 + k·stride`.
///
/// The count is `⌊(T − τ)/stride⌋`, but at least one: a series exactly one
/// window long (or a stride too large to fit a second window) still yields
/// its first window. Whenever `T > τ` every window has a target frame.
pub fn windowize(series: ArrayView2<'_, f64>, tau: usize, stride: usize) -> Result<Windowed> {
    let t = series.nrows();
    if tau == 0 || stride == 0 {
        return Err(Error::InvalidParameter("window length and stride must be positive"));
    }
    if tau > t {
        return Err(Error::Dimension {
            context: "windowize (window longer than series)",
            expected: t,
            found: tau,
        });
    }
    let count = ((t - tau) / stride).max(1);
    let ends: Vec<usize> = (0..count).map(|k| tau - 1 + k * stride).collect();
    let targets = (t > tau).then(|| {
        let mut out = Array2::zeros((count, series.ncols()));
        for (k, &e) in ends.iter().enumerate() {
            out.row_mut(k).assign(&series.row(e + 1));
        }
        out
    });
    Ok(Windowed {
        windows: WindowSet::new(series.to_owned(), ends, tau)?,
        targets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize) -> Array2<f64> {
        Array2::from_shape_fn((t, 2), |(i, j)| (10 * i + j) as f64)
    }

    #[test]
    fn single_window_cases() {
        let w = windowize(ramp(5).view(), 5, 1).unwrap();
        assert_eq!(w.windows.len(), 1);
        assert!(w.targets.is_none());
        let w = windowize(ramp(7).view(), 3, 7).unwrap();
        assert_eq!(w.windows.len(), 1);
        assert_eq!(w.targets.unwrap().row(0).to_vec(), vec![30.0, 31.0]);
    }

    #[test]
    fn index_arithmetic() {
        let w = windowize(ramp(12).view(), 3, 1).unwrap();
        assert_eq!(w.windows.len(), 9);
        let targets = w.targets.unwrap();
        for k in 0..9 {
            // window k covers frames k, k+1, k+2 and targets frame k+3
            assert_eq!(w.windows.gather(0).row(k).to_vec(), vec![(10 * k) as f64, (10 * k + 1) as f64]);
            assert_eq!(w.windows.last_frames()[[k, 0]], (10 * (k + 2)) as f64);
            assert_eq!(targets[[k, 0]], (10 * (k + 3)) as f64);
        }
    }

    #[test]
    fn too_long_window_is_rejected() {
        assert!(matches!(windowize(ramp(3).view(), 4, 1), Err(Error::Dimension { .. })));
    }
}
