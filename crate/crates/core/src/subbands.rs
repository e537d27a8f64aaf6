//! Complex subband tracks read off a smoothed posterior.

use crate::error::{Error, Result};
use crate::kalman::PosteriorSummary;
use crate::state_space::DiscreteStateSpace;

/// One channel's posterior subband `z_k = re_k + i im_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandTrack {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// Posterior marginal variance of `re_k`.
    pub real_var: Vec<f64>,
}

impl SubbandTrack {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn amplitude(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }

    pub fn phase(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| i.atan2(*r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subbands {
    pub channels: Vec<SubbandTrack>,
}

impl Subbands {
    /// `Σ_d Re z_{d,k}`, the noise-free signal estimate.
    pub fn real_sum(&self) -> Vec<f64> {
        let n = self.channels.first().map_or(0, SubbandTrack::len);
        (0..n).map(|k| self.channels.iter().map(|c| c.re[k]).sum()).collect()
    }
}

/// Reads the in-phase and quadrature coordinates of each channel.
pub fn extract_subbands(dss: &DiscreteStateSpace, posterior: &PosteriorSummary) -> Result<Subbands> {
    if posterior.means.first().is_some_and(|m| m.len() != dss.state_dim()) {
        return Err(Error::Domain("posterior does not match the state-space dimension".into()));
    }
    let channels = dss
        .channels
        .iter()
        .enumerate()
        .map(|(d, ch)| SubbandTrack {
            re: posterior.means.iter().map(|m| m[ch.real_index()]).collect(),
            im: posterior.means.iter().map(|m| m[ch.imag_index()]).collect(),
            real_var: posterior.channel_real_var[d].clone(),
        })
        .collect();
    Ok(Subbands { channels })
}
