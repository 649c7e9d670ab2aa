use serde::{Deserialize, Serialize};

use super::{ConsistencyCertificate, Property, RhoModel};
use crate::error::{Error, Result};

/// EPC constants implied by an StLC model, an StL law and an StC pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Prediction {
    #[serde(rename = "K_bar")]
    pub k_bar: f64,
    /// `ρ(s) = K·ρ̃(s)`.
    pub rho_c: f64,
    pub rho_p: u32,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    /// Input-ball radius the model certificate has to cover.
    #[serde(rename = "E")]
    pub e: f64,
}

impl Theorem2Prediction {
    pub fn rho(&self, s: f64) -> f64 {
        self.rho_c * s.powi(self.rho_p as i32)
    }
}

fn expect(cert: &ConsistencyCertificate, property: Property) -> Result<()> {
    if cert.property != property {
        return Err(Error::invalid(format!("expected a {property} certificate, got {}", cert.property)));
    }
    if !cert.status.is_certified() {
        return Err(Error::invalid(format!("{property} premise {} is {}", cert.subject, cert.status)));
    }
    Ok(())
}

fn rho_of(cert: &ConsistencyCertificate) -> Result<&RhoModel> {
    cert.rho.as_ref().ok_or_else(|| Error::invalid("StC certificate carries no ρ"))
}

/// `E = ρ̃(T^V)·M + K_U·M`, the input radius reached by `V` on the `M` ball
/// when `U` is `K_U`-Lipschitz and `(U, V)` is `ρ̃`-close.
pub fn required_input_radius(stl: &ConsistencyCertificate, stc: &ConsistencyCertificate) -> Result<f64> {
    expect(stl, Property::Stl)?;
    expect(stc, Property::Stc)?;
    let t_v = stc.t_star.ok_or_else(|| Error::invalid("StC certificate has no validated period"))?;
    let k_u = stl.k.unwrap_or(0.0);
    Ok(rho_of(stc)?.eval(t_v) * stc.m + k_u * stl.m)
}

pub fn predict_epc_from_theorem2(stlc: &ConsistencyCertificate, stl: &ConsistencyCertificate, stc: &ConsistencyCertificate) -> Result<Theorem2Prediction> {
    expect(stlc, Property::Stlc)?;
    let e = required_input_radius(stl, stc)?;
    if (stl.m - stc.m).abs() > 1e-12 * stl.m.max(1.0) || stlc.m < stl.m {
        return Err(Error::invalid(format!(
            "incompatible balls: StL M = {}, StC M = {}, StLC M = {}",
            stl.m, stc.m, stlc.m
        )));
    }
    let stlc_e = stlc.e.unwrap_or(0.0);
    if stlc_e + 1e-12 < e {
        return Err(Error::invalid(format!("incompatible balls: StLC input radius {stlc_e} < required {e}")));
    }
    let k = stlc.k.unwrap_or(0.0);
    let k_u = stl.k.unwrap_or(0.0);
    let rho = rho_of(stc)?;
    let t_star = [stlc.t_star, stl.t_star, stc.t_star]
        .into_iter()
        .map(|t| t.ok_or_else(|| Error::invalid("premise without a validated period")))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok(Theorem2Prediction { k_bar: k * (1.0 + k_u), rho_c: k * rho.c, rho_p: rho.p, t_star, e })
}
