//! The per-bin linear observation model `y = H x + z` and the projections
//! between measurement, spectral and source coordinates.
//!
//! `H` maps `N` sources to `M` measurement channels and acts identically on
//! every time-frequency bin (and on real and imaginary parts alike).

mod svd;

pub use svd::{rank_tolerance, svd, Svd};

use nalgebra::DMatrix;
use ndarray::{Array3, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Complex tensor indexed `[channel, frequency, frame]`.
pub type Tensor = Array3<Complex64>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    /// `H = I`: each estimate observes its own source.
    Isolated,
    /// Mixture row of ones on top of the identity.
    #[default]
    Shared,
    /// Any other user-supplied matrix.
    Custom,
}

#[derive(Debug, Clone)]
pub struct DegradationModel {
    design: Design,
    h: DMatrix<f64>,
    svd: Svd,
    rank: usize,
    /// `Sigma^+ U^T`, `N x M`. Rows of unobserved components are zero.
    spectral_op: DMatrix<f64>,
}

impl DegradationModel {
    pub fn new(h: DMatrix<f64>, design: Design) -> Result<Self> {
        let svd = svd(&h)?;
        let (m, n) = h.shape();
        let tol = rank_tolerance(&svd.singular_values);
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let mut spectral_op = DMatrix::zeros(n, m);
        for i in 0..rank {
            let s = svd.singular_values[i];
            for j in 0..m {
                spectral_op[(i, j)] = svd.u[(j, i)] / s;
            }
        }
        Ok(Self {
            design,
            h,
            svd,
            rank,
            spectral_op,
        })
    }

    pub fn isolated(n_sources: usize) -> Result<Self> {
        if n_sources < 1 {
            return Err(Error::InvalidInput("need at least one source".into()));
        }
        Self::new(DMatrix::identity(n_sources, n_sources), Design::Isolated)
    }

    pub fn shared(n_sources: usize) -> Result<Self> {
        if n_sources < 1 {
            return Err(Error::InvalidInput("need at least one source".into()));
        }
        let h = DMatrix::from_fn(n_sources + 1, n_sources, |r, c| {
            if r == 0 || r == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        Self::new(h, Design::Shared)
    }

    pub fn for_design(design: Design, n_sources: usize) -> Result<Self> {
        match design {
            Design::Isolated => Self::isolated(n_sources),
            Design::Shared => Self::shared(n_sources),
            Design::Custom => Err(Error::InvalidInput(
                "custom designs are built from an explicit matrix".into(),
            )),
        }
    }

    pub fn design(&self) -> Design {
        self.design
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.svd.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.svd.v
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.singular_values
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn measurements(&self) -> usize {
        self.h.nrows()
    }

    pub fn sources(&self) -> usize {
        self.h.ncols()
    }

    /// Whether spectral component `i` carries measurement information.
    pub fn is_observed(&self, i: usize) -> bool {
        i < self.rank
    }

    pub fn spectral_operator(&self) -> &DMatrix<f64> {
        &self.spectral_op
    }

    /// Per-bin `y = H x`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_channels(x, self.sources(), "source tensor")?;
        Ok(mix_channels(&self.h, x))
    }

    /// Per-bin `x = V xbar`.
    pub fn from_spectral(&self, xbar: &Tensor) -> Result<Tensor> {
        check_channels(xbar, self.sources(), "spectral tensor")?;
        Ok(mix_channels(&self.svd.v, xbar))
    }

    /// Per-bin `xbar = V^T x`.
    pub fn to_spectral_state(&self, x: &Tensor) -> Result<Tensor> {
        check_channels(x, self.sources(), "source tensor")?;
        Ok(mix_channels(&self.svd.v.transpose(), x))
    }

    /// Projects measurements onto the spectral space, `ybar = Sigma^+ U^T y`,
    /// and propagates the measurement noise to each spectral component.
    ///
    /// The spectral noise variance is the diagonal of the propagated
    /// covariance, `sum_j (Sigma^+ U^T)_{ij}^2 sigma_j^2`, which is exact for
    /// equal channel variances. Unobserved components get `ybar = 0` and an
    /// infinite noise std.
    pub fn to_spectral(&self, y: &MeasurementSet) -> Result<SpectralMeasurements> {
        check_channels(&y.data, self.measurements(), "measurement set")?;
        let ybar = mix_channels(&self.spectral_op, &y.data);
        let (_, k, l) = y.data.dim();
        let n = self.sources();
        let mut sigma_bar = Array3::zeros((n, k, l));
        for i in 0..n {
            let mut out = sigma_bar.index_axis_mut(Axis(0), i);
            if !self.is_observed(i) {
                out.fill(f64::INFINITY);
                continue;
            }
            match &y.sigma_y {
                NoiseStd::PerChannel(sig) => {
                    let var: f64 = (0..self.measurements())
                        .map(|j| self.spectral_op[(i, j)].powi(2) * sig[j] * sig[j])
                        .sum();
                    out.fill(var.sqrt());
                }
                NoiseStd::PerBin(field) => {
                    for j in 0..self.measurements() {
                        let w = self.spectral_op[(i, j)].powi(2);
                        Zip::from(&mut out)
                            .and(field.index_axis(Axis(0), j))
                            .for_each(|o, &s| *o += w * s * s);
                    }
                    out.mapv_inplace(f64::sqrt);
                }
            }
        }
        Ok(SpectralMeasurements {
            ybar,
            sigma_bar,
            observed: (0..n).map(|i| self.is_observed(i)).collect(),
        })
    }
}

/// Measurement-noise std, per channel or per bin.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseStd {
    PerChannel(Vec<f64>),
    /// Indexed `[channel, frequency, frame]` like the measurements.
    PerBin(Array3<f64>),
}

impl NoiseStd {
    pub fn uniform(value: f64, channels: usize) -> Self {
        NoiseStd::PerChannel(vec![value; channels])
    }

    pub fn channels(&self) -> usize {
        match self {
            NoiseStd::PerChannel(v) => v.len(),
            NoiseStd::PerBin(a) => a.dim().0,
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            NoiseStd::PerChannel(v) => v.iter().copied().fold(0.0, f64::max),
            NoiseStd::PerBin(a) => a.iter().copied().fold(0.0, f64::max),
        }
    }

    fn values(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            NoiseStd::PerChannel(v) => Box::new(v.iter().copied()),
            NoiseStd::PerBin(a) => Box::new(a.iter().copied()),
        }
    }
}

/// Stacked observation channels `y` and their noise std. Channel order is the
/// row order of `H`: mixture first when present, then sources `1..N`.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub data: Tensor,
    pub sigma_y: NoiseStd,
    pub design: Design,
}

impl MeasurementSet {
    pub fn new(data: Tensor, sigma_y: NoiseStd, design: Design) -> Result<Self> {
        let (m, k, l) = data.dim();
        if sigma_y.channels() != m {
            return Err(Error::Shape(format!(
                "{} noise channels for {m} measurement channels",
                sigma_y.channels()
            )));
        }
        if let NoiseStd::PerBin(field) = &sigma_y {
            if field.dim() != (m, k, l) {
                return Err(Error::Shape(format!(
                    "noise field {:?} does not match measurements {:?}",
                    field.dim(),
                    (m, k, l)
                )));
            }
        }
        if sigma_y.values().any(|s| !(s.is_finite() && s >= 0.0)) {
            return Err(Error::InvalidInput(
                "measurement noise std must be finite and non-negative".into(),
            ));
        }
        if data.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidInput("measurements must be finite".into()));
        }
        Ok(Self {
            data,
            sigma_y,
            design,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }
}

/// Output of [`DegradationModel::to_spectral`].
#[derive(Debug, Clone)]
pub struct SpectralMeasurements {
    /// `[N, K, L]`.
    pub ybar: Tensor,
    /// Effective spectral noise std, `[N, K, L]`; infinite when unobserved.
    pub sigma_bar: Array3<f64>,
    pub observed: Vec<bool>,
}

impl SpectralMeasurements {
    /// Largest finite spectral noise std.
    pub fn max_sigma_bar(&self) -> f64 {
        self.sigma_bar
            .iter()
            .copied()
            .filter(|s| s.is_finite())
            .fold(0.0, f64::max)
    }
}

fn check_channels(x: &Tensor, expected: usize, what: &str) -> Result<()> {
    let got = x.dim().0;
    if got != expected {
        return Err(Error::Shape(format!(
            "{what} has {got} channels, expected {expected}"
        )));
    }
    Ok(())
}

/// `out[r, k, l] = sum_c mat[r, c] * x[c, k, l]`.
pub(crate) fn mix_channels(mat: &DMatrix<f64>, x: &Tensor) -> Tensor {
    let (_, k, l) = x.dim();
    let mut out = Array3::zeros((mat.nrows(), k, l));
    for (r, mut row) in out.outer_iter_mut().enumerate() {
        for (c, xc) in x.outer_iter().enumerate() {
            let w = mat[(r, c)];
            if w != 0.0 {
                Zip::from(&mut row).and(&xc).for_each(|o, &v| *o += v * w);
            }
        }
    }
    out
}
