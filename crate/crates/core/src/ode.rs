//! Adaptive explicit Runge-Kutta integration (Dormand-Prince 5(4)) with
//! output at caller-supplied sample times.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on the step size.
    pub h_max: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_init: 1e-4,
            max_steps: 50_000_000,
        }
    }
}

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates dy/dt = f(t, y) from the first to the last sample time,
/// returning the state at every sample time (the first sample must equal
/// the initial time and is returned verbatim).
pub fn integrate<F>(
    mut f: F,
    y0: &[f64],
    sample_times: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if sample_times.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two sample times".into(),
        ));
    }
    let dim = y0.len();
    let mut t = sample_times[0];
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(sample_times.len());
    out.push(y.clone());

    let mut k = vec![vec![0.0; dim]; 7];
    let mut y_stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut h = opts.h_init.min(opts.h_max);
    let mut steps = 0usize;

    f(t, &y, &mut k[0]);

    for &t_target in &sample_times[1..] {
        while t < t_target - 1e-14 * t_target.abs().max(1.0) {
            if steps >= opts.max_steps {
                return Err(Error::IntegrationFailure {
                    t,
                    msg: "maximum step count exceeded".into(),
                });
            }
            steps += 1;
            let h_step = h.min(t_target - t);
            if h_step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegrationFailure {
                    t,
                    msg: "step size underflow".into(),
                });
            }

            // k[0] is the derivative at (t, y): seeded before the loop,
            // maintained by the FSAL swap on accepted steps, untouched on
            // rejected ones.
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    y_stage[i] = y[i] + h_step * acc;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                f(t + C[s] * h_step, &y_stage, &mut tail[0]);
            }

            let mut err_norm: f64 = 0.0;
            for i in 0..dim {
                let mut y5 = 0.0;
                let mut y4 = 0.0;
                for s in 0..7 {
                    y5 += B5[s] * k[s][i];
                    y4 += B4[s] * k[s][i];
                }
                y_new[i] = y[i] + h_step * y5;
                let e = h_step * (y5 - y4);
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err_norm = err_norm.max((e / scale).abs());
            }

            if err_norm <= 1.0 {
                t += h_step;
                std::mem::swap(&mut y, &mut y_new);
                // FSAL: stage 7 is the derivative at the new point.
                k.swap(0, 6);
            }

            let factor = if err_norm > 0.0 {
                0.9 * err_norm.powf(-0.2)
            } else {
                5.0
            };
            h = (h_step * factor.clamp(0.2, 5.0)).min(opts.h_max);
        }
        t = t_target;
        out.push(y.clone());
    }
    Ok(out)
}
