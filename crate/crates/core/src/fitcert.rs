//! Containing zonotopes fitted to point clouds, and certificate-driven
//! directional contraction of data-driven sets into training labels.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{dot, svd, DenseMatrix};
use crate::setalg::Zonotope;
use crate::sysim::Trajectory;

/// Default number of radii probed along each ray.
pub const DEFAULT_N_RAY: usize = 201;

/// PCA-oriented zonotope containing every point.
///
/// Center is the sample mean; generator `i` is `ρᵢ uᵢ` with `uᵢ` the `i`-th
/// right singular vector of the centered cloud and `ρᵢ = max_t |uᵢᵀ(p_t − c)|`.
/// Always returns `n` generators; zero radii stay as zero generators.
pub fn pca_fit<P: AsRef<[f64]>>(points: &[P]) -> Result<Zonotope> {
    let first = points
        .first()
        .ok_or(Error::EmptyInput("pca_fit needs at least one point"))?;
    let n = first.as_ref().len();
    if let Some(bad) = points.iter().find(|p| p.as_ref().len() != n) {
        return Err(Error::DimensionMismatch {
            op: "pca_fit",
            left: format!("dimension {n}"),
            right: format!("point of dimension {}", bad.as_ref().len()),
        });
    }
    let m = points.len() as f64;
    let mut mean = vec![0.0; n];
    for p in points {
        for (c, v) in mean.iter_mut().zip(p.as_ref()) {
            *c += v;
        }
    }
    mean.iter_mut().for_each(|c| *c /= m);

    let mut rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_ref().iter().zip(&mean).map(|(v, c)| v - c).collect())
        .collect();
    // pad so the thin SVD always yields n right singular vectors
    while rows.len() < n {
        rows.push(vec![0.0; n]);
    }
    let centered = DenseMatrix::from_rows(&rows)?;
    let f = svd(&centered)?;
    let dirs = canonical_directions(&f.v, &f.singular_values);

    let gens: Vec<Vec<f64>> = dirs
        .iter()
        .map(|u| {
            let rho = rows[..points.len()].iter().map(|r| dot(u, r).abs()).fold(0.0, f64::max);
            u.iter().map(|ui| rho * ui).collect()
        })
        .collect();
    Zonotope::new(mean, &gens)
}

/// Right singular vectors as columns of `v`, ordered by descending singular
/// value; ties broken by the larger first component, and each vector signed
/// so its largest-magnitude entry is positive.
fn canonical_directions(v: &DenseMatrix, sv: &[f64]) -> Vec<Vec<f64>> {
    let mut dirs: Vec<(f64, Vec<f64>)> = (0..v.cols())
        .map(|j| {
            let mut u = v.column(j);
            let lead = u
                .iter()
                .copied()
                .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if lead < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
            }
            (sv[j], u)
        })
        .collect();
    let scale = sv.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    dirs.sort_by(|(sa, ua), (sb, ub)| {
        if (sa - sb).abs() <= 1e-12 * scale {
            ub[0].total_cmp(&ua[0])
        } else {
            sb.total_cmp(sa)
        }
    });
    dirs.into_iter().map(|(_, u)| u).collect()
}

/// Per-dimension strip `|y_d − c_d| ≤ r_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl Strip {
    pub fn outside(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(&self.center)
            .zip(&self.radius)
            .any(|((v, c), r)| (v - c).abs() > *r)
    }
}

pub type CertFn = dyn Fn(usize, &[f64]) -> bool + Send + Sync;

/// Exterior certificate: returns true only for points claimed to lie outside
/// the true reachable set at a given step.
#[derive(Clone)]
pub enum Certificate {
    Strip(Strip),
    /// One strip per step; steps beyond the list use the last entry.
    StripPerStep(Vec<Strip>),
    Callback(Arc<CertFn>),
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::Strip(s) => f.debug_tuple("Strip").field(s).finish(),
            Certificate::StripPerStep(s) => f.debug_tuple("StripPerStep").field(s).finish(),
            Certificate::Callback(_) => f.write_str("Callback(..)"),
        }
    }
}

impl Certificate {
    pub fn never() -> Self {
        Certificate::Callback(Arc::new(|_, _| false))
    }

    pub fn outside(&self, step: usize, y: &[f64]) -> bool {
        match self {
            Certificate::Strip(s) => s.outside(y),
            Certificate::StripPerStep(list) => list.get(step).or(list.last()).is_some_and(|s| s.outside(y)),
            Certificate::Callback(f) => f(step, y),
        }
    }
}

/// Midrange and half-range of every historical output, widened by
/// `(1 + inflation)`.
pub fn strip_cert_from_history(trajs: &[Trajectory], inflation: f64) -> Result<Certificate> {
    Ok(Certificate::Strip(strip_from_points(
        trajs.iter().flat_map(|t| t.outputs.iter().map(Vec::as_slice)),
        inflation,
    )?))
}

/// Per-step variant: step `k` uses only the outputs observed at step `k`.
pub fn strip_cert_per_step(trajs: &[Trajectory], horizon: usize, inflation: f64) -> Result<Certificate> {
    let strips = (0..=horizon)
        .map(|k| {
            strip_from_points(
                trajs.iter().filter(|t| t.len() > k).map(|t| t.outputs[k].as_slice()),
                inflation,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Certificate::StripPerStep(strips))
}

fn strip_from_points<'a>(points: impl IntoIterator<Item = &'a [f64]>, inflation: f64) -> Result<Strip> {
    if !(inflation >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "strip inflation must be ≥ 0, got {inflation}"
        )));
    }
    let hull = crate::setalg::IntervalBox::hull_of_points(points)?;
    let center = hull
        .lower()
        .iter()
        .zip(hull.upper())
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let radius = hull
        .lower()
        .iter()
        .zip(hull.upper())
        .map(|(l, u)| 0.5 * (u - l) * (1.0 + inflation))
        .collect();
    Ok(Strip { center, radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub step: usize,
    pub rho_dd: Vec<f64>,
    pub rho_cert: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub tightened: Zonotope,
}

/// Shrinks each generator of `ydd` by the first radius along `±qⱼ` at which
/// the certificate fires, probing `n_ray` evenly spaced radii in
/// `[0, ρ_DD]` with `qⱼ = gⱼ/‖gⱼ‖` and `ρ_DD = Σ_ℓ |qⱼᵀ g_ℓ|`.
pub fn directional_contract(
    ydd: &Zonotope,
    cert: &Certificate,
    step: usize,
    n_ray: usize,
) -> Result<ContractionReport> {
    if n_ray < 2 {
        return Err(Error::InvalidArgument(format!("n_ray must be at least 2, got {n_ray}")));
    }
    let c = ydd.center();
    let gamma = ydd.num_generators();
    let mut rho_dd = vec![0.0; gamma];
    let mut rho_cert = vec![0.0; gamma];
    let mut lambdas = vec![1.0; gamma];
    let mut gens = Vec::with_capacity(ydd.generators_flat().len());
    let mut probe = vec![0.0; c.len()];
    for (j, g) in ydd.generators().enumerate() {
        let nrm = dot(g, g).sqrt();
        if nrm == 0.0 {
            gens.extend_from_slice(g);
            continue;
        }
        let q: Vec<f64> = g.iter().map(|x| x / nrm).collect();
        let width: f64 = ydd.generators().map(|gl| dot(&q, gl).abs()).sum();
        rho_dd[j] = width;
        let mut first_hit = |sign: f64| {
            for i in 0..n_ray {
                let r = width * i as f64 / (n_ray - 1) as f64;
                for ((p, ci), qi) in probe.iter_mut().zip(c).zip(&q) {
                    *p = ci + sign * r * qi;
                }
                if cert.outside(step, &probe) {
                    return r;
                }
            }
            width
        };
        let r_plus = first_hit(1.0);
        let r_minus = first_hit(-1.0);
        let rc = r_plus.min(r_minus);
        rho_cert[j] = rc;
        let lambda = if width > 0.0 { (rc / width).clamp(0.0, 1.0) } else { 1.0 };
        lambdas[j] = lambda;
        gens.extend(g.iter().map(|x| lambda * x));
    }
    Ok(ContractionReport {
        step,
        rho_dd,
        rho_cert,
        lambdas,
        tightened: Zonotope::from_flat(c.to_vec(), gens)?,
    })
}
