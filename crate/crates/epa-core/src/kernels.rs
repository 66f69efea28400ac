//! Time and space kernel functions with their bandwidths.
//!
//! Both kernels map into [0,1], equal 1 at 0, vanish outside the unit
//! interval of their scaled argument and are symmetric. The product
//! space-time kernel inherits these properties.

use nalgebra::DMatrix;

/// Kernel shape applied to scaled time lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeKernel {
    Bartlett,
    Truncated,
}

/// Kernel shape applied to scaled distances. `Unit` weighs every pair by one,
/// which turns the spatial HAC estimator into the cross-sectional-average one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKernel {
    Bartlett,
    Truncated,
    Unit,
}

/// Time kernel + bandwidth and space kernel + threshold distance.
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub time_kernel: TimeKernel,
    /// Time bandwidth `l_T`.
    pub l_t: usize,
    pub space_kernel: SpaceKernel,
    /// Threshold distance `d_n`, must be positive.
    pub d_n: f64,
}

impl KernelSpec {
    /// Bartlett kernels in both dimensions, the configuration used throughout
    /// the simulation experiments.
    pub fn bartlett(l_t: usize, d_n: f64) -> Self {
        Self { time_kernel: TimeKernel::Bartlett, l_t, space_kernel: SpaceKernel::Bartlett, d_n }
    }

    /// Weight of a time lag, in [0,1].
    pub fn time_weight(&self, lag: usize) -> f64 {
        let x = lag as f64 / (self.l_t + 1) as f64;
        match self.time_kernel {
            TimeKernel::Bartlett => (1.0 - x).max(0.0),
            TimeKernel::Truncated => {
                if lag <= self.l_t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Weight of a distance, in [0,1].
    pub fn space_weight(&self, distance: f64) -> f64 {
        debug_assert!(distance >= 0.0);
        match self.space_kernel {
            SpaceKernel::Bartlett => (1.0 - distance / self.d_n).max(0.0),
            SpaceKernel::Truncated => {
                if distance <= self.d_n {
                    1.0
                } else {
                    0.0
                }
            }
            SpaceKernel::Unit => 1.0,
        }
    }

    /// Largest lag with a possibly nonzero time weight.
    pub fn max_lag(&self) -> usize {
        self.l_t
    }

    /// T x T matrix of time weights `k_T(|t-s|/(l_T+1))`.
    pub fn time_weight_matrix(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(t, t, |a, b| self.time_weight(a.abs_diff(b)))
    }
}

/// Spatial bandwidth rule `ceil(n^(1/4))`.
pub fn default_space_bandwidth(n: usize) -> f64 {
    (n as f64).powf(0.25).ceil()
}

/// Time bandwidth rule `floor(T^(1/3))`, standard HAC practice when the
/// forecast horizon does not pin the bandwidth.
pub fn default_time_bandwidth(t: usize) -> usize {
    (t as f64).powf(1.0 / 3.0).floor() as usize
}
