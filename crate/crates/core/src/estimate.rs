//! Maximum-likelihood estimation of the pooled model, with boundary
//! detection, the two-digit status taxonomy, and a Moore-Penrose
//! variance-covariance matrix.
//!
//! The optimizer is a quasi-Newton (BFGS) ascent with the analytic gradient
//! and a backtracking line search; if the gradient tolerance is unmet it
//! restarts once from a perturbed origin. Estimation never aborts on
//! numerical trouble: every structurally valid input yields a [`FitResult`]
//! whose [`StatusCode`] classifies what happened.
//!
//! Boundary handling: a coordinate whose pooled observed statistic sits at
//! the pooled extremum of its support is replaced by the matching `+/-inf`
//! after optimization. If every coordinate diverges the fit is status 30 and
//! no usable variance-covariance exists. If only some diverge, the Hessian
//! and log-likelihood are recomputed (in log space, so nothing overflows)
//! with those coordinates at `sign * 1e5`; rows and columns of the Hessian
//! touching a diverged coordinate are zeroed, which propagates zero
//! variance-covariance entries through the pseudo-inverse. The same min/max
//! rule applies to transformed statistic columns, noted in result metadata.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::likelihood::{gradient_pooled, hessian_pooled, loglik_pooled, PooledData};
use crate::table::TableCache;
use crate::terms::ModelSpec;

/// Optimizer and post-processing configuration.
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Starting point; zero vector when unset.
    pub init: Option<Vec<f64>>,
    /// Gradient sup-norm tolerance.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Finite stand-in for diverged coordinates when recomputing.
    pub boundary_substitute: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            init: None,
            grad_tol: 1e-8,
            max_iter: 200,
            boundary_substitute: 1e5,
        }
    }
}

/// Where a coordinate's pooled observed statistic sits in its support.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryFlag {
    Interior,
    AtMin,
    AtMax,
}

/// Two-digit fit classification. First digit: 0 converged, 1 not converged,
/// 2 some estimates replaced by +/-inf, 3 all replaced. Second digit:
/// 1 when the (sub)Hessian is not positive semidefinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StatusCode {
    #[serde(rename = "00")]
    Ok,
    #[serde(rename = "01")]
    OkNotPsd,
    #[serde(rename = "10")]
    NoConverge,
    #[serde(rename = "11")]
    NoConvergeNotPsd,
    #[serde(rename = "20")]
    PartBoundary,
    #[serde(rename = "21")]
    PartBoundaryNotPsd,
    #[serde(rename = "30")]
    AllBoundary,
}

impl StatusCode {
    pub fn code(self) -> &'static str {
        match self {
            StatusCode::Ok => "00",
            StatusCode::OkNotPsd => "01",
            StatusCode::NoConverge => "10",
            StatusCode::NoConvergeNotPsd => "11",
            StatusCode::PartBoundary => "20",
            StatusCode::PartBoundaryNotPsd => "21",
            StatusCode::AllBoundary => "30",
        }
    }

    pub fn message(self) -> &'static str {
        match self {
            StatusCode::Ok => "optimizer converged; no issues detected",
            StatusCode::OkNotPsd => {
                "optimizer converged, but the Hessian is not positive semidefinite"
            }
            StatusCode::NoConverge => "optimizer did not converge; estimates look usable",
            StatusCode::NoConvergeNotPsd => {
                "optimizer did not converge, and the Hessian is not positive semidefinite"
            }
            StatusCode::PartBoundary => "a subset of the estimates was replaced with +/-inf",
            StatusCode::PartBoundaryNotPsd => {
                "a subset of the estimates was replaced with +/-inf, and the Hessian is not \
                 positive semidefinite"
            }
            StatusCode::AllBoundary => {
                "all estimates went to +/-inf; the MLE may not exist"
            }
        }
    }

    /// Codes that leave no finite estimate to resample around.
    pub fn is_failure(self) -> bool {
        matches!(
            self,
            StatusCode::PartBoundary | StatusCode::PartBoundaryNotPsd | StatusCode::AllBoundary
        )
    }
}

/// The structured outcome of a fit. `theta` may contain `+/-inf`; those
/// coordinates have zero variance-covariance rows and columns.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub term_names: Vec<String>,
    pub theta: DVector<f64>,
    pub vcov: DMatrix<f64>,
    pub loglik: f64,
    /// Gradient at the solution (diverged coordinates held at the finite
    /// substitute).
    pub gradient: DVector<f64>,
    pub boundary: Vec<BoundaryFlag>,
    pub status: StatusCode,
    pub iterations: usize,
    pub converged: bool,
    pub num_networks: usize,
    pub num_dyads: u64,
    pub model_fingerprint: String,
    pub data_fingerprint: String,
}

impl FitResult {
    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.vcov[(i, i)].sqrt()).collect()
    }

    /// Wald z per coordinate; none for boundary coordinates.
    pub fn z_values(&self) -> Vec<Option<f64>> {
        let se = self.standard_errors();
        (0..self.k())
            .map(|i| {
                if self.boundary[i] != BoundaryFlag::Interior || se[i] == 0.0 {
                    None
                } else {
                    Some(self.theta[i] / se[i])
                }
            })
            .collect()
    }

    /// Two-sided normal p-values; none for boundary coordinates.
    pub fn p_values(&self) -> Vec<Option<f64>> {
        let normal = Normal::standard();
        self.z_values()
            .into_iter()
            .map(|z| z.map(|z| 2.0 * (1.0 - normal.cdf(z.abs()))))
            .collect()
    }

    /// Content hash of the full result; identical inputs and options give an
    /// identical fingerprint.
    pub fn fingerprint(&self) -> String {
        use sha2::Digest;
        let mut h = sha2::Sha256::new();
        for name in &self.term_names {
            h.update(name.as_bytes());
        }
        for v in self.theta.iter().chain(self.vcov.iter()) {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(self.loglik.to_bits().to_le_bytes());
        h.update(self.status.code().as_bytes());
        h.update(self.model_fingerprint.as_bytes());
        h.update(self.data_fingerprint.as_bytes());
        let out = h.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Flags each coordinate whose pooled observed statistic equals the pooled
/// support extremum. Every network must sit at its own extremum for the
/// pooled sums to touch, so the check compares per network, exactly.
pub fn check_boundary(data: &PooledData) -> Vec<BoundaryFlag> {
    let k = data.num_terms();
    (0..k)
        .map(|j| {
            let at_max = data
                .networks()
                .iter()
                .all(|net| net.stats[j] == net.table.bounds()[j].1);
            let at_min = data
                .networks()
                .iter()
                .all(|net| net.stats[j] == net.table.bounds()[j].0);
            if at_max && at_min {
                // Degenerate column (single support value): treat as at-max.
                BoundaryFlag::AtMax
            } else if at_max {
                BoundaryFlag::AtMax
            } else if at_min {
                BoundaryFlag::AtMin
            } else {
                BoundaryFlag::Interior
            }
        })
        .collect()
}

struct BfgsOutcome {
    x: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    iterations: usize,
    converged: bool,
}

/// Maximizes the pooled log-likelihood by BFGS with backtracking Armijo
/// line search on the negated objective.
fn bfgs_maximize(
    data: &PooledData,
    x0: &DVector<f64>,
    grad_tol: f64,
    max_iter: usize,
) -> Result<BfgsOutcome> {
    let k = x0.len();
    let mut x = x0.clone();
    let mut f = -loglik_pooled(&x, data)?;
    let mut g = -gradient_pooled(&x, data)?;
    let mut h_inv = DMatrix::<f64>::identity(k, k);
    let mut iterations = 0;
    let mut first_update = true;

    while iterations < max_iter {
        if g.amax() < grad_tol {
            return Ok(BfgsOutcome {
                x,
                value: -f,
                grad: -&g,
                iterations,
                converged: true,
            });
        }
        iterations += 1;

        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            // Not a descent direction; reset to steepest descent.
            h_inv = DMatrix::identity(k, k);
            dir = -g.clone();
        }

        // Backtracking Armijo search.
        let slope = g.dot(&dir);
        let mut alpha = 1.0;
        let mut x_new;
        let mut f_new;
        let mut ok = false;
        loop {
            x_new = &x + &dir * alpha;
            f_new = -loglik_pooled(&x_new, data)?;
            if f_new <= f + 1e-4 * alpha * slope {
                ok = true;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break;
            }
        }
        if !ok {
            let converged = g.amax() < grad_tol;
            return Ok(BfgsOutcome {
                x,
                value: -f,
                grad: -g,
                iterations,
                converged,
            });
        }

        let g_new = -gradient_pooled(&x_new, data)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                // Standard initial scaling of the inverse Hessian.
                let yy = y.dot(&y);
                if yy > 0.0 {
                    h_inv = DMatrix::identity(k, k) * (sy / yy);
                }
                first_update = false;
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h_inv = h_inv - (&hys + hys.transpose()) * rho + ss * (rho * rho * yhy + rho);
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }

    Ok(BfgsOutcome {
        converged: g.amax() < grad_tol,
        x,
        value: -f,
        grad: -g,
        iterations,
    })
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix via eigendecomposition;
/// eigenvalues with magnitude below `rel_cutoff * max|lambda|` are treated as
/// zero. Also reports whether the matrix is positive definite beyond the
/// cutoff.
pub(crate) fn pinv_symmetric(m: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, bool) {
    let k = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = rel_cutoff * max_abs;
    let mut pinv = DMatrix::zeros(k, k);
    let mut pd = max_abs > 0.0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff && lambda.abs() > 0.0 {
            let v = eig.eigenvectors.column(i);
            pinv += (&v * v.transpose()) / lambda;
            if lambda <= 0.0 {
                pd = false;
            }
        } else {
            pd = false;
        }
    }
    (pinv, pd)
}

const PINV_CUTOFF: f64 = 1e-10;

/// Fits the pooled model to a sample, building support tables through the
/// cache.
pub fn fit_mle(
    sample: &[Network],
    model: &ModelSpec,
    opts: &FitOptions,
    cache: &TableCache,
) -> Result<FitResult> {
    let data = PooledData::build(sample, model, cache)?;
    let mut fit = fit_mle_data(&data, opts)?;
    fit.term_names = model.term_names();
    fit.model_fingerprint = model_fingerprint(model);
    Ok(fit)
}

pub(crate) fn model_fingerprint(model: &ModelSpec) -> String {
    use sha2::Digest;
    let mut h = sha2::Sha256::new();
    h.update(model.formula().as_bytes());
    h.update([model.directed() as u8]);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fits on prepared pooled data (bootstrap and simulation reuse tables this
/// way).
pub fn fit_mle_data(data: &PooledData, opts: &FitOptions) -> Result<FitResult> {
    let k = data.num_terms();
    let x0 = match &opts.init {
        Some(v) => {
            if v.len() != k {
                return Err(Error::Dimension {
                    expected: k,
                    got: v.len(),
                });
            }
            DVector::from_vec(v.clone())
        }
        None => DVector::zeros(k),
    };

    let mut out = bfgs_maximize(data, &x0, opts.grad_tol, opts.max_iter)?;
    if !out.converged {
        // One restart from a deterministic perturbed origin.
        let perturbed = DVector::from_iterator(
            k,
            (0..k).map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                x0[j] + sign * 0.25 * (j as f64 + 1.0) / k as f64
            }),
        );
        let retry = bfgs_maximize(data, &perturbed, opts.grad_tol, opts.max_iter)?;
        if retry.converged || retry.value > out.value {
            out = retry;
        }
    }

    let boundary = check_boundary(data);
    let diverged: Vec<usize> = (0..k)
        .filter(|&j| boundary[j] != BoundaryFlag::Interior)
        .collect();
    let l = opts.boundary_substitute;

    let substitute = |base: &DVector<f64>| {
        let mut t = base.clone();
        for &j in &diverged {
            t[j] = match boundary[j] {
                BoundaryFlag::AtMax => l,
                BoundaryFlag::AtMin => -l,
                BoundaryFlag::Interior => unreachable!(),
            };
        }
        t
    };
    let infinities = |base: &DVector<f64>| {
        let mut t = base.clone();
        for &j in &diverged {
            t[j] = match boundary[j] {
                BoundaryFlag::AtMax => f64::INFINITY,
                BoundaryFlag::AtMin => f64::NEG_INFINITY,
                BoundaryFlag::Interior => unreachable!(),
            };
        }
        t
    };

    let (theta, vcov, loglik, gradient, status) = if diverged.len() == k {
        // Every coordinate diverged: report without a usable vcov.
        let sub = substitute(&out.x);
        let ll = loglik_pooled(&sub, data)?;
        let grad = gradient_pooled(&sub, data)?;
        (
            infinities(&out.x),
            DMatrix::zeros(k, k),
            ll,
            grad,
            StatusCode::AllBoundary,
        )
    } else if !diverged.is_empty() {
        // Recompute at the finite substitutes, zero the diverged rows/cols,
        // and invert the rest.
        let sub = substitute(&out.x);
        let ll = loglik_pooled(&sub, data)?;
        let grad = gradient_pooled(&sub, data)?;
        let mut h = hessian_pooled(&sub, data)?;
        for &j in &diverged {
            for i in 0..k {
                h[(i, j)] = 0.0;
                h[(j, i)] = 0.0;
            }
        }
        let neg_h = -&h;
        let (vcov, _) = pinv_symmetric(&neg_h, PINV_CUTOFF);
        // Positive-definiteness judged on the free block only; the zeroed
        // rows are singular by construction.
        let free: Vec<usize> = (0..k).filter(|j| !diverged.contains(j)).collect();
        let sub_h = DMatrix::from_fn(free.len(), free.len(), |a, b| neg_h[(free[a], free[b])]);
        let (_, pd) = pinv_symmetric(&sub_h, PINV_CUTOFF);
        let status = if pd {
            StatusCode::PartBoundary
        } else {
            StatusCode::PartBoundaryNotPsd
        };
        (infinities(&out.x), vcov, ll, grad, status)
    } else {
        let h = hessian_pooled(&out.x, data)?;
        let neg_h = -&h;
        let (vcov, pd) = pinv_symmetric(&neg_h, PINV_CUTOFF);
        let status = match (out.converged, pd) {
            (true, true) => StatusCode::Ok,
            (true, false) => StatusCode::OkNotPsd,
            (false, true) => StatusCode::NoConverge,
            (false, false) => StatusCode::NoConvergeNotPsd,
        };
        (out.x.clone(), vcov, out.value, out.grad.clone(), status)
    };

    Ok(FitResult {
        term_names: (0..k).map(|i| format!("term{i}")).collect(),
        theta,
        vcov,
        loglik,
        gradient,
        boundary,
        status,
        iterations: out.iterations,
        converged: out.converged,
        num_networks: data.num_networks(),
        num_dyads: data.num_dyads(),
        model_fingerprint: String::new(),
        data_fingerprint: data.fingerprint().to_string(),
    })
}

/// Variance-covariance plus per-coordinate standard errors, Wald z, and
/// two-sided p-values. Rejected for status 30 fits, which carry no usable
/// variance-covariance.
pub struct CoefficientTable {
    pub vcov: DMatrix<f64>,
    pub se: Vec<f64>,
    pub z: Vec<Option<f64>>,
    pub p: Vec<Option<f64>>,
}

pub fn vcov_of(fit: &FitResult) -> Result<CoefficientTable> {
    if fit.status == StatusCode::AllBoundary {
        return Err(Error::Inference(
            "all estimates diverged (status 30); no variance-covariance is available".to_string(),
        ));
    }
    Ok(CoefficientTable {
        vcov: fit.vcov.clone(),
        se: fit.standard_errors(),
        z: fit.z_values(),
        p: fit.p_values(),
    })
}
