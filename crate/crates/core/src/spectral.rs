//! Grid Laplacian construction, slow eigenmodes (Fiedler analysis) and the
//! closed-form frequency / RoCoF response for homogeneous parameters.
//!
//! Sign convention: an abrupt power *loss* of `delta_p > 0` at the faulted
//! bus produces negative frequency deviations. The analytic responses below
//! carry that sign so they can be compared directly against simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::GridModel;

/// Weighted graph Laplacian with entries -B_ij V_i V_j off the diagonal,
/// stored as sparse off-diagonal triplets plus the diagonal.
#[derive(Debug, Clone)]
pub struct Laplacian {
    n: usize,
    /// Upper-triangle coupling weights (i < j, weight > 0).
    off_diag: Vec<(usize, usize, f64)>,
    diag: Vec<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.off_diag
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            m[(i, i)] = self.diag[i];
        }
        for &(i, j, w) in &self.off_diag {
            m[(i, j)] -= w;
            m[(j, i)] -= w;
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let d = self.to_dense();
        (0..self.n).map(|i| d.row(i).sum()).collect()
    }
}

/// Laplacian of a connected grid, weights B_ij V_i^(0) V_j^(0).
pub fn build_laplacian(grid: &GridModel) -> Result<Laplacian> {
    let n = grid.n();
    let mut diag = vec![0.0; n];
    let mut off = Vec::with_capacity(grid.lines.len());
    for (i, j, w) in grid.line_weights()? {
        if i == j {
            continue;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        off.push((a, b, w));
        diag[i] += w;
        diag[j] += w;
    }
    Ok(Laplacian {
        n,
        off_diag: off,
        diag,
    })
}

/// The k smallest eigenpairs of a Laplacian, orthonormal, with a fixed sign
/// convention (first component of significant magnitude is positive).
#[derive(Debug, Clone)]
pub struct SpectralModes {
    pub eigenvalues: Vec<f64>,
    /// n x k matrix; column alpha holds u_{alpha+1}.
    pub vectors: DMatrix<f64>,
    pub n: usize,
}

impl SpectralModes {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mode(&self, alpha: usize) -> DVector<f64> {
        self.vectors.column(alpha).into_owned()
    }

    /// Squared Fiedler component u_{2i}^2 at bus index i.
    pub fn fiedler_sq(&self, i: usize) -> f64 {
        let u = self.vectors[(i, 1)];
        u * u
    }
}

fn fix_sign(col: &mut DVector<f64>) {
    let max = col.amax();
    let lead = col.iter().find(|x| x.abs() > 1e-12 * max.max(1e-300));
    if let Some(&x) = lead {
        if x < 0.0 {
            *col *= -1.0;
        }
    }
}

/// The k smallest eigenpairs. Dense symmetric eigendecomposition; acceptance
/// is the residual ||L u - lambda u||, not solver identity.
pub fn slow_modes(laplacian: &Laplacian, k: usize) -> Result<SpectralModes> {
    let n = laplacian.n();
    if !(2..=n).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "requested k = {k} eigenpairs of an {n}-bus Laplacian"
        )));
    }
    let dense = laplacian.to_dense();
    let eig = dense
        .clone()
        .try_symmetric_eigen(1e-13, 10_000)
        .ok_or_else(|| Error::EigenFailure("symmetric QR iteration did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(k);
    let mut vectors = DMatrix::zeros(n, k);
    for (col, &src) in order.iter().take(k).enumerate() {
        eigenvalues.push(eig.eigenvalues[src]);
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut v);
        vectors.set_column(col, &v);
    }
    Ok(SpectralModes {
        eigenvalues,
        vectors,
        n,
    })
}

/// Second-smallest eigenpair (Fiedler value and vector).
pub fn fiedler(laplacian: &Laplacian) -> Result<(f64, DVector<f64>)> {
    let modes = slow_modes(laplacian, 2)?;
    Ok((modes.eigenvalues[1], modes.mode(1)))
}

/// Common inertia and damping of the homogeneous closed-form response.
#[derive(Debug, Clone, Copy)]
pub struct HomogeneousParams {
    pub m: f64,
    pub d: f64,
}

impl HomogeneousParams {
    pub fn new(m: f64, d: f64) -> Result<Self> {
        if m <= 0.0 || d <= 0.0 {
            return Err(Error::InvalidArgument(
                "homogeneous m and d must be > 0".into(),
            ));
        }
        Ok(Self { m, d })
    }

    pub fn gamma(&self) -> f64 {
        self.d / self.m
    }
}

/// Oscillation frequency sqrt(lambda/m - gamma^2/4) for mode alpha (0-based
/// column index). The zero mode (alpha = 0) is handled separately by the
/// response formulas; all others must be underdamped.
fn mode_frequency(lambda: f64, params: &HomogeneousParams, alpha: usize) -> Result<f64> {
    let g = params.gamma();
    let arg = lambda / params.m - g * g / 4.0;
    if arg <= 0.0 {
        return Err(Error::OverdampedMode { alpha: alpha + 1 });
    }
    Ok(arg.sqrt())
}

/// Per-bus frequency deviation delta-omega_i(t) (rad/s) after losing
/// `delta_p` at bus `fault_idx`, as a spectral sum over the supplied modes.
/// Exact when all N modes are supplied.
pub fn analytic_delta_omega(
    modes: &SpectralModes,
    params: &HomogeneousParams,
    fault_idx: usize,
    delta_p: f64,
    t: f64,
) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidArgument("t must be >= 0".into()));
    }
    let g = params.gamma();
    let n = modes.n;
    let mut out = vec![0.0; n];

    for alpha in 0..modes.k() {
        let ub = modes.vectors[(fault_idx, alpha)];
        // Modal velocity response, so that delta-omega_i = sum_a u_ai * cdot_a.
        let cdot = if alpha == 0 {
            // Zero mode: the oscillatory form degenerates into
            // (1 - e^{-gamma t}) / gamma, the network-drift term.
            -(delta_p * ub / params.m) * (1.0 - (-g * t).exp()) / g
        } else {
            let f = mode_frequency(modes.eigenvalues[alpha], params, alpha)?;
            -(delta_p * ub / params.m) * (-g * t / 2.0).exp() * (f * t).sin() / f
        };
        for i in 0..n {
            out[i] += modes.vectors[(i, alpha)] * cdot;
        }
    }
    Ok(out)
}

/// Per-bus RoCoF r_i(t) in Hz/s, closed form: algebraically the finite
/// difference of [`analytic_delta_omega`] over the window `dt`.
pub fn analytic_rocof(
    modes: &SpectralModes,
    params: &HomogeneousParams,
    fault_idx: usize,
    delta_p: f64,
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if dt <= 0.0 {
        return Err(Error::InvalidArgument("dt must be > 0".into()));
    }
    let g = params.gamma();
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = modes.n;
    let mut out = vec![0.0; n];

    for alpha in 0..modes.k() {
        let ub = modes.vectors[(fault_idx, alpha)];
        let modal = if alpha == 0 {
            -(delta_p * ub / (params.m * g)) * (-g * t).exp() * (1.0 - (-g * dt).exp())
                / (two_pi * dt)
        } else {
            let f = mode_frequency(modes.eigenvalues[alpha], params, alpha)?;
            let bracket =
                (-g * dt / 2.0).exp() * (f * (t + dt)).sin() - (f * t).sin();
            -(delta_p * ub / params.m) * (-g * t / 2.0).exp() * bracket / (f * two_pi * dt)
        };
        for i in 0..n {
            out[i] += modes.vectors[(i, alpha)] * modal;
        }
    }
    Ok(out)
}

/// Dimensionless products sqrt(lambda_a/m - gamma^2/4) * dt for all modes
/// alpha >= 2, sorted ascending. Diagnoses which modes matter over a RoCoF
/// measurement window.
pub fn mode_timescale_report(
    modes: &SpectralModes,
    params: &HomogeneousParams,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(modes.k().saturating_sub(1));
    for alpha in 1..modes.k() {
        out.push(mode_frequency(modes.eigenvalues[alpha], params, alpha)? * dt);
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}
