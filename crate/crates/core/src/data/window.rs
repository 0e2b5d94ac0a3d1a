use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// One training/evaluation instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleWindow {
    /// `[time_steps, features]`.
    pub features: Tensor,
    /// Normalized run time of the window's last step.
    pub run_time: f64,
    /// Remaining useful life at the window's last step, in original units.
    pub rul: f64,
}

impl SampleWindow {
    pub fn time_steps(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn num_features(&self) -> usize {
        self.features.shape()[1]
    }
}

/// Stacked windows ready for a forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[N, T, F]`
    pub x: Tensor,
    /// `[N, 1]`
    pub t: Tensor,
    /// `[N, 1]`, original units.
    pub u: Tensor,
}

impl Batch {
    pub fn new<'a>(windows: impl IntoIterator<Item = &'a SampleWindow>) -> Result<Self> {
        let windows: Vec<&SampleWindow> = windows.into_iter().collect();
        let first = windows.first().ok_or(Error::Empty("batch"))?;
        let shape = first.features.shape().to_vec();
        let mut x = Vec::with_capacity(windows.len() * first.features.numel());
        let mut t = Vec::with_capacity(windows.len());
        let mut u = Vec::with_capacity(windows.len());
        for w in &windows {
            if w.features.shape() != shape.as_slice() {
                return Err(Error::shape(
                    "batch",
                    format!("window {:?} vs {shape:?}", w.features.shape()),
                ));
            }
            x.extend_from_slice(w.features.data());
            t.push(w.run_time);
            u.push(w.rul);
        }
        let n = windows.len();
        Ok(Self {
            x: Tensor::new(vec![n, shape[0], shape[1]], x)?,
            t: Tensor::new(vec![n, 1], t)?,
            u: Tensor::new(vec![n, 1], u)?,
        })
    }

    pub fn len(&self) -> usize {
        self.t.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Window geometry of a dataset profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowShape {
    pub time_steps: usize,
    pub features: usize,
}
