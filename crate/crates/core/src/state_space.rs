//! Continuous and discrete state-space forms of a spectral mixture.
//!
//! Every Matérn-ν component has an exact linear SDE of order `m = ν + ½` in
//! companion form. The cosine factor is the deterministic rotation generator
//! `F_cos = [[0, -ω], [ω, 0]]`, and the product kernel is realised by the
//! Kronecker sum `F_cos ⊕ F_base = F_cos ⊗ I_m + I_2 ⊗ F_base`. The channel
//! state is ordered `(real part: m states, quadrature part: m states)`.
//!
//! Because the two terms of the Kronecker sum commute, the transition matrix
//! of a channel factors as `R(ωΔt) ⊗ exp(F_base Δt)`; only the small
//! baseband block ever goes through a matrix exponential.

use nalgebra::{DMatrix, Matrix2, RowDVector};

use crate::error::{domain, Result};
use crate::kernel::{MaternOrder, SpectralMixtureModel};
use crate::linalg::{self, Block};

/// Placement of one channel inside the full state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLayout {
    /// Index of the channel's first state.
    pub offset: usize,
    /// Channel block size, `2m`.
    pub size: usize,
}

impl ChannelLayout {
    pub fn base_dim(&self) -> usize {
        self.size / 2
    }

    /// Index of the in-phase (real part) coordinate.
    pub fn real_index(&self) -> usize {
        self.offset
    }

    /// Index of the quadrature (imaginary part) coordinate.
    pub fn imag_index(&self) -> usize {
        self.offset + self.base_dim()
    }
}

/// `df = F f dt + L dβ`, `y = H f + noise`, with `E[dβ dβᵀ] = Qc dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSde {
    pub f: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub qc: DMatrix<f64>,
    pub h: RowDVector<f64>,
    pub pinf: DMatrix<f64>,
    pub channels: Vec<ChannelLayout>,
}

impl LtiSde {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    /// `F P∞ + P∞ Fᵀ + L Qc Lᵀ`, zero for a correct stationary covariance.
    pub fn lyapunov_residual(&self) -> DMatrix<f64> {
        &self.f * &self.pinf + &self.pinf * self.f.transpose() + &self.l * &self.qc * self.l.transpose()
    }

    /// `H exp(F τ) P∞ Hᵀ` for `τ ≥ 0`, computed with a dense exponential.
    pub fn covariance_at(&self, tau: f64) -> f64 {
        let phi = linalg::expm(&(&self.f * tau));
        (&self.h * phi * &self.pinf * self.h.transpose())[(0, 0)]
    }
}

/// Companion-form SDE for an unshifted Matérn kernel.
pub fn matern_baseband_sde(order: MaternOrder, variance: f64, lengthscale: f64) -> Result<LtiSde> {
    if !(variance.is_finite() && variance > 0.0) {
        return domain(format!("variance must be positive, got {variance}"));
    }
    if !(lengthscale.is_finite() && lengthscale > 0.0) {
        return domain(format!("lengthscale must be positive, got {lengthscale}"));
    }
    let lam = order.rate(lengthscale);
    let s2 = variance;
    let (f, pinf) = match order {
        MaternOrder::Half => (
            DMatrix::from_element(1, 1, -lam),
            DMatrix::from_element(1, 1, s2),
        ),
        MaternOrder::ThreeHalves => (
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -lam * lam, -2.0 * lam]),
            DMatrix::from_row_slice(2, 2, &[s2, 0.0, 0.0, lam * lam * s2]),
        ),
        MaternOrder::FiveHalves => {
            let kappa = lam * lam * s2 / 3.0;
            (
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -lam.powi(3), -3.0 * lam * lam, -3.0 * lam],
                ),
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[s2, 0.0, -kappa, 0.0, kappa, 0.0, -kappa, 0.0, lam.powi(4) * s2],
                ),
            )
        }
    };
    let m = order.state_dim();
    let mut l = DMatrix::zeros(m, 1);
    l[(m - 1, 0)] = 1.0;
    let qc = DMatrix::from_element(
        1,
        1,
        order.density_constant() * s2 * lam.powi(2 * m as i32 - 1),
    );
    let mut h = RowDVector::zeros(m);
    h[0] = 1.0;
    Ok(LtiSde {
        f,
        l,
        qc,
        h,
        pinf,
        channels: vec![ChannelLayout { offset: 0, size: m }],
    })
}

/// Rotation generator `F_cos = [[0, -ω], [ω, 0]]`.
pub fn rotation_generator(omega: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -omega, omega, 0.0])
}

/// `[[cos θ, -sin θ], [sin θ, cos θ]]`.
pub fn rotation_matrix(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Multiplies a baseband block by the cosine kernel at `omega`.
pub fn apply_frequency_shift(baseband: &LtiSde, omega: f64) -> Result<LtiSde> {
    if !(omega.is_finite() && omega >= 0.0) {
        return domain(format!("center frequency must be finite and non-negative, got {omega}"));
    }
    let m = baseband.state_dim();
    let i2 = DMatrix::<f64>::identity(2, 2);
    let im = DMatrix::<f64>::identity(m, m);
    let f = linalg::kron(&rotation_generator(omega), &im) + linalg::kron(&i2, &baseband.f);
    let l = linalg::kron(&i2, &baseband.l);
    let qc = linalg::kron(&i2, &baseband.qc);
    let pinf = linalg::kron(&i2, &baseband.pinf);
    let h_cos = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let h_base = DMatrix::from_row_slice(1, m, baseband.h.as_slice());
    let h = RowDVector::from_row_slice(linalg::kron(&h_cos, &h_base).as_slice());
    Ok(LtiSde {
        f,
        l,
        qc,
        h,
        pinf,
        channels: vec![ChannelLayout { offset: 0, size: 2 * m }],
    })
}

fn block_diag(mats: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = mats.iter().map(|m| m.nrows()).sum();
    let cols = mats.iter().map(|m| m.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for m in mats {
        out.view_mut((r, c), m.shape()).copy_from(*m);
        r += m.nrows();
        c += m.ncols();
    }
    out
}

/// Stacks the frequency-shifted channels of a model into one SDE.
pub fn assemble_model_sde(model: &SpectralMixtureModel) -> Result<LtiSde> {
    model.validate()?;
    let channels = model
        .components()
        .iter()
        .map(|c| {
            let base = matern_baseband_sde(c.order, c.variance, c.lengthscale)?;
            apply_frequency_shift(&base, c.center_freq)
        })
        .collect::<Result<Vec<_>>>()?;

    let fs: Vec<_> = channels.iter().map(|c| &c.f).collect();
    let ls: Vec<_> = channels.iter().map(|c| &c.l).collect();
    let qcs: Vec<_> = channels.iter().map(|c| &c.qc).collect();
    let ps: Vec<_> = channels.iter().map(|c| &c.pinf).collect();
    let mut layout = Vec::with_capacity(channels.len());
    let mut offset = 0;
    let mut h = Vec::new();
    for c in &channels {
        layout.push(ChannelLayout {
            offset,
            size: c.state_dim(),
        });
        offset += c.state_dim();
        h.extend(c.h.iter());
    }
    Ok(LtiSde {
        f: block_diag(&fs),
        l: block_diag(&ls),
        qc: block_diag(&qcs),
        h: RowDVector::from_vec(h),
        pinf: block_diag(&ps),
        channels: layout,
    })
}

/// Exact discretisation of an [`LtiSde`] at a fixed step.
///
/// The discrete states are rescaled copies of the SDE states: coordinate
/// `i` of each Matérn block is divided by `√(P∞_ii / P∞_00)`. Derivative
/// coordinates of short-lengthscale kernels otherwise carry variances like
/// `λ⁴σ²`, and forming `Q̃` by subtraction at that scale destroys the
/// precision of the observed coordinate. The first coordinate of every
/// block is unscaled, so `H`, the subbands and all likelihoods are the same
/// in either basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: RowDVector<f64>,
    pub pinf: DMatrix<f64>,
    pub dt: f64,
    pub channels: Vec<ChannelLayout>,
    /// SDE state `i` equals `state_scale[i]` times discrete state `i`.
    pub state_scale: Vec<f64>,
    /// Largest Frobenius-norm change made while clamping `Q` blocks to PSD,
    /// relative to the block norm.
    pub q_clamp_adjustment: f64,
    pub(crate) a_blocks: Vec<Block>,
    pub(crate) q_blocks: Vec<Block>,
    pub(crate) h_support: Vec<(usize, f64)>,
}

/// `Ã = exp(F Δt)` and `Q̃ = P∞ − Ã P∞ Ãᵀ`, channel by channel.
pub fn discretize(sde: &LtiSde, dt: f64) -> Result<DiscreteStateSpace> {
    if !(dt.is_finite() && dt > 0.0) {
        return domain(format!("time step must be positive, got {dt}"));
    }
    let dim = sde.state_dim();
    let mut a_blocks = Vec::with_capacity(sde.channels.len());
    let mut q_blocks = Vec::with_capacity(sde.channels.len());
    let mut state_scale = vec![1.0; dim];
    let mut pinf = DMatrix::zeros(dim, dim);
    let mut worst = 0.0f64;
    for ch in &sde.channels {
        let m = ch.base_dim();
        let p_base = sde.pinf.view((ch.offset, ch.offset), (m, m));
        let scale: Vec<f64> = (0..m)
            .map(|i| {
                let r = (p_base[(i, i)] / p_base[(0, 0)]).sqrt();
                if r.is_finite() && r > 0.0 {
                    r
                } else {
                    1.0
                }
            })
            .collect();
        for i in 0..ch.size {
            state_scale[ch.offset + i] = scale[i % m];
        }

        let f_ch = sde.f.view((ch.offset, ch.offset), (ch.size, ch.size));
        let mut f_base = f_ch.view((0, 0), (m, m)).into_owned();
        for j in 0..m {
            for i in 0..m {
                f_base[(i, j)] *= scale[j] / scale[i];
            }
        }
        let omega = f_ch[(m, 0)];
        let rot = rotation_matrix(omega * dt);
        let rot = DMatrix::from_row_slice(2, 2, &[rot[(0, 0)], rot[(0, 1)], rot[(1, 0)], rot[(1, 1)]]);
        let a = linalg::kron(&rot, &linalg::expm(&(f_base * dt)));

        let mut p = sde.pinf.view((ch.offset, ch.offset), (ch.size, ch.size)).into_owned();
        for j in 0..ch.size {
            for i in 0..ch.size {
                p[(i, j)] /= scale[i % m] * scale[j % m];
            }
        }
        let mut q = &p - &a * &p * a.transpose();
        let norm = q.norm();
        let change = linalg::clamp_psd(&mut q);
        if norm > 0.0 {
            worst = worst.max(change / norm);
        }
        pinf.view_mut((ch.offset, ch.offset), (ch.size, ch.size)).copy_from(&p);
        a_blocks.push(Block {
            offset: ch.offset,
            mat: a,
        });
        q_blocks.push(Block {
            offset: ch.offset,
            mat: q,
        });
    }
    let h = RowDVector::from_iterator(dim, sde.h.iter().zip(&state_scale).map(|(h, s)| h * s));
    let h_support = h
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    Ok(DiscreteStateSpace {
        a: linalg::assemble_block_diag(&a_blocks, dim),
        q: linalg::assemble_block_diag(&q_blocks, dim),
        h,
        pinf,
        dt,
        channels: sde.channels.clone(),
        state_scale,
        q_clamp_adjustment: worst,
        a_blocks,
        q_blocks,
        h_support,
    })
}

impl DiscreteStateSpace {
    /// Assembles and discretises a model at its own sample rate.
    pub fn from_model(model: &SpectralMixtureModel) -> Result<Self> {
        discretize(&assemble_model_sde(model)?, model.dt())
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// `H Ãᵏ P∞ Hᵀ`, the model autocovariance at lag `k Δt`.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        let mut x = self.pinf.clone() * self.h.transpose();
        let mut tmp = x.clone();
        for _ in 0..lag {
            linalg::block_mul_vec(&self.a_blocks, &x, &mut tmp);
            std::mem::swap(&mut x, &mut tmp);
        }
        (&self.h * x)[(0, 0)]
    }

    /// `H x` using the sparsity of `H`.
    pub(crate) fn observe(&self, x: &nalgebra::DVector<f64>) -> f64 {
        self.h_support.iter().map(|&(i, v)| v * x[i]).sum()
    }
}
