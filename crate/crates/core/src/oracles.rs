//! Closed-form reference solutions, profile error metrics and a crack-tip
//! stress intensity estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::jump_displacement;
use crate::elasticity::MaterialParams;
use crate::mesh::Mesh;
use crate::solver::SolutionState;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("coordinate {eta} outside [{lo}, {hi}]")]
    OutOfRange { eta: f64, lo: f64, hi: f64 },
    #[error("profile window [{0}, {1}] holds fewer than 3 samples")]
    EmptyWindow(f64, f64),
    #[error("window bounds must satisfy 0 <= lo < hi <= 1, got [{0}, {1}]")]
    InvalidWindow(f64, f64),
    #[error("fracture {0} has no contact pair to evaluate at the tip")]
    NoTipPair(usize),
    #[error("unknown fracture {0}")]
    UnknownFracture(usize),
}

/// Single straight crack of length `2 l` inclined at `alpha` to a remote
/// uniaxial compression `sigma_inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InclinedCrackCase {
    /// Angle between the crack and the loading direction (radians).
    pub alpha: f64,
    /// Magnitude of the remote compression (Pa).
    pub sigma_inf: f64,
    pub half_length: f64,
    pub material: MaterialParams,
    pub cohesion: f64,
    pub friction_angle: f64,
}

/// Shear stress drop and normal traction on the crack: `(t_T, t_N)`.
pub fn inclined_crack_traction(case: &InclinedCrackCase) -> (f64, f64) {
    let (s, c) = case.alpha.sin_cos();
    let sig = case.sigma_inf;
    let t_t = sig * s * c - sig * s * s * case.friction_angle.tan() - case.cohesion;
    (t_t, -sig * s * s)
}

/// Slip at arc coordinate `eta` in `[0, 2 l]`.
pub fn inclined_crack_slip(eta: f64, case: &InclinedCrackCase) -> Result<f64, OracleError> {
    let l = case.half_length;
    if !(0.0..=2.0 * l).contains(&eta) {
        return Err(OracleError::OutOfRange { eta, lo: 0.0, hi: 2.0 * l });
    }
    let (t_t, _) = inclined_crack_traction(case);
    let nu = case.material.nu;
    let r = (l * l - (eta - l) * (eta - l)).max(0.0);
    Ok(4.0 * t_t * (1.0 - nu * nu) / case.material.e * r.sqrt())
}

/// Opening of a pressurized crack of half-length `l` at `eta` from its centre.
pub fn sneddon_opening(eta: f64, pressure: f64, l: f64, mat: &MaterialParams) -> Result<f64, OracleError> {
    if eta.abs() > l {
        return Err(OracleError::OutOfRange { eta, lo: -l, hi: l });
    }
    let g = mat.shear_modulus();
    Ok(2.0 * l * pressure * (1.0 - mat.nu) / g * (1.0 - (eta / l).powi(2)).max(0.0).sqrt())
}

/// Uniform slip of the through-going shear benchmark (m).
pub fn constant_slip_reference() -> f64 {
    0.1414
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileError {
    pub rel_l2: f64,
    /// Window as fractions of the fracture length.
    pub window: [f64; 2],
    pub samples: usize,
}

/// Relative discrete L2 error of `(eta, value)` samples against `exact`,
/// using samples with `eta` inside `window * length`.
pub fn profile_error(
    samples: &[(f64, f64)],
    exact: impl Fn(f64) -> f64,
    length: f64,
    window: [f64; 2],
) -> Result<ProfileError, OracleError> {
    let [lo, hi] = window;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(OracleError::InvalidWindow(lo, hi));
    }
    let (a, b) = (lo * length, hi * length);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0;
    for &(eta, v) in samples {
        if eta >= a - 1e-12 * length && eta <= b + 1e-12 * length {
            let e = exact(eta);
            num += (v - e) * (v - e);
            den += e * e;
            count += 1;
        }
    }
    if count < 3 {
        return Err(OracleError::EmptyWindow(lo, hi));
    }
    let rel_l2 = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    Ok(ProfileError { rel_l2, window, samples: count })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TipEnd {
    /// The first node of the fracture path.
    Start,
    /// The last node of the fracture path.
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SifEstimate {
    pub k_i: f64,
    pub k_ii: f64,
    /// Distance from the tip to the sampled pair (m).
    pub r: f64,
    /// `(2 / pi) atan(K_I / K_II)`.
    pub ratio: f64,
}

/// Normalized mode ratio `(2 / pi) atan(K_I / K_II)`, with `K_I` clamped at
/// zero (a closed tip has no mode I) and `K_II = 0` mapped to 1.
pub fn normalized_sif_ratio(k_i: f64, k_ii: f64) -> f64 {
    let k_i = k_i.max(0.0);
    let k_ii = k_ii.abs();
    if k_ii == 0.0 {
        1.0
    } else {
        2.0 / std::f64::consts::PI * (k_i / k_ii).atan()
    }
}

/// Displacement-correlation estimate at the pair nearest to a crack tip.
pub fn sif_ratio(
    mesh: &Mesh,
    state: &SolutionState,
    fracture: usize,
    tip: TipEnd,
    mat: &MaterialParams,
) -> Result<SifEstimate, OracleError> {
    if fracture >= mesh.fractures.len() {
        return Err(OracleError::UnknownFracture(fracture));
    }
    let tip_eta = match tip {
        TipEnd::Start => 0.0,
        TipEnd::End => mesh.fracture_length(fracture),
    };
    let pair = mesh
        .fracture_pairs(fracture)
        .into_iter()
        .filter(|p| (p.arc_coord - tip_eta).abs() > 0.0)
        .min_by(|a, b| (a.arc_coord - tip_eta).abs().total_cmp(&(b.arc_coord - tip_eta).abs()))
        .ok_or(OracleError::NoTipPair(fracture))?;
    let r = (pair.arc_coord - tip_eta).abs();
    let kin = jump_displacement(pair, &state.u);
    let factor = mat.shear_modulus() / (mat.kolosov() + 1.0) * (2.0 * std::f64::consts::PI / r).sqrt();
    let k_i = factor * kin.jump_local[0];
    let k_ii = factor * kin.jump_local[1];
    Ok(SifEstimate { k_i, k_ii, r, ratio: normalized_sif_ratio(k_i, k_ii) })
}
