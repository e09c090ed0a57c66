use alloc::vec;
use alloc::vec::Vec;

use super::EmbedError;

/// `||s·M + c − o·M||² + α·||c − r||²` for a row-vector convention
/// (`(s·M)_j = Σ_i s_i M_ij`, `M` row-major `d × d`).
pub fn energy(
    s: &[f64],
    r: &[f64],
    proto: &[f64],
    o: &[f64],
    m: &[f64],
    alpha: f64,
) -> Result<f64, EmbedError> {
    let d = s.len();
    for v in [r, proto, o] {
        if v.len() != d {
            return Err(EmbedError::Dimension {
                expected: d,
                found: v.len(),
            });
        }
    }
    if m.len() != d * d {
        return Err(EmbedError::Dimension {
            expected: d * d,
            found: m.len(),
        });
    }
    Ok(energy_raw(s, r, proto, o, m, alpha))
}

/// Translation residual `u = (s − o)·M + c`.
fn residual(s: &[f64], proto: &[f64], o: &[f64], m: &[f64]) -> Vec<f64> {
    let d = s.len();
    let mut u = proto.to_vec();
    for i in 0..d {
        let diff = s[i] - o[i];
        if diff == 0.0 {
            continue;
        }
        let row = &m[i * d..(i + 1) * d];
        for (uj, mij) in u.iter_mut().zip(row) {
            *uj += diff * mij;
        }
    }
    u
}

pub(crate) fn energy_raw(s: &[f64], r: &[f64], proto: &[f64], o: &[f64], m: &[f64], alpha: f64) -> f64 {
    let u = residual(s, proto, o, m);
    let translation: f64 = u.iter().map(|x| x * x).sum();
    let anchor: f64 = proto.iter().zip(r).map(|(c, r)| (c - r) * (c - r)).sum();
    translation + alpha * anchor
}

/// Gradient of the energy with respect to each argument.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrad {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub proto: Vec<f64>,
    pub o: Vec<f64>,
    pub m: Vec<f64>,
}

pub fn energy_and_grad(
    s: &[f64],
    r: &[f64],
    proto: &[f64],
    o: &[f64],
    m: &[f64],
    alpha: f64,
) -> (f64, EnergyGrad) {
    let d = s.len();
    let u = residual(s, proto, o, m);
    let mut gs = vec![0.0; d];
    let mut gm = vec![0.0; d * d];
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        gs[i] = 2.0 * row.iter().zip(&u).map(|(mij, uj)| mij * uj).sum::<f64>();
        let diff = s[i] - o[i];
        for j in 0..d {
            gm[i * d + j] = 2.0 * diff * u[j];
        }
    }
    let go = gs.iter().map(|g| -g).collect();
    let gap: Vec<f64> = proto.iter().zip(r).map(|(c, r)| c - r).collect();
    let gproto = u.iter().zip(&gap).map(|(u, g)| 2.0 * u + 2.0 * alpha * g).collect();
    let gr = gap.iter().map(|g| -2.0 * alpha * g).collect();
    let e = u.iter().map(|x| x * x).sum::<f64>() + alpha * gap.iter().map(|x| x * x).sum::<f64>();
    (
        e,
        EnergyGrad {
            s: gs,
            r: gr,
            proto: gproto,
            o: go,
            m: gm,
        },
    )
}
