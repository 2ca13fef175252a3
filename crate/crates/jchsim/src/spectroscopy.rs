//! Two-point correlations by the quantum regression theorem and absorption
//! spectra, numeric (from the Liouvillian spectral decomposition) and the
//! closed-form three-level lineshape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{build_h_jch, SystemParams};
use crate::lindblad::{
    build_liouvillian, standard_channels, steady_state, vectorize, Liouvillian, SpectralSolution,
    ZERO_MODE_TOL,
};
use crate::operator_core::{site_annihilation, DensityMatrix, Operator};
use crate::polariton_basis::{mixing_angle, polariton_energy, PolaritonLabel};
use crate::C64;

const STATIONARITY_TOL: f64 = 1e-6;
const NEGATIVE_FLOOR: f64 = -1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub params: Option<SystemParams>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>, params: Option<SystemParams>) -> Result<Self> {
        check_grid(&frequencies)?;
        if values.len() != frequencies.len() {
            return Err(Error::DimensionMismatch {
                op: "Spectrum::new",
                expected: frequencies.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v >= NEGATIVE_FLOOR)) {
            return Err(Error::InvalidState(format!("spectrum value {v:e} below floor")));
        }
        Ok(Self {
            frequencies,
            values,
            params,
        })
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.frequencies
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(w, v)| 0.5 * (w[1] - w[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid("non-finite frequency".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("frequencies must be strictly increasing".into()));
    }
    Ok(())
}

/// 2001 points over omega^c +/- 4g, widened by 2|J| for two cavities.
pub fn default_frequency_grid(params: &SystemParams) -> Vec<f64> {
    let mut half = 4.0 * params.g;
    if params.n_cavities == 2 {
        half += 2.0 * params.j.abs();
    }
    let n = 2001;
    (0..n)
        .map(|k| params.omega_c - half + 2.0 * half * k as f64 / (n - 1) as f64)
        .collect()
}

/// One decaying mode of the regression function: amplitude * exp(lambda tau).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMode {
    pub eigenvalue: C64,
    pub amplitude: C64,
}

/// Tr[a f(tau)] = limit + sum_k amplitude_k exp(lambda_k tau), f(0) = a^dagger rho_ss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModes {
    pub modes: Vec<CorrelationMode>,
    pub limit: C64,
}

impl CorrelationModes {
    pub fn evaluate(&self, tau: f64) -> C64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * (m.eigenvalue * tau).exp())
            .sum()
    }

    /// 2 Re of the half-line Fourier integral at omega.
    pub fn spectrum_at(&self, omega: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| 2.0 * (m.amplitude / (-m.eigenvalue - C64::new(0.0, omega))).re)
            .sum()
    }
}

pub fn correlation_modes(
    l: &Liouvillian,
    rho_ss: &DensityMatrix,
    a_op: &Operator,
) -> Result<CorrelationModes> {
    if !l.is_dissipative() {
        return Err(Error::NotDissipative);
    }
    if a_op.dims() != l.dims() || rho_ss.dims() != l.dims() {
        return Err(Error::DimensionMismatch {
            op: "correlation_modes",
            expected: l.dims().total_dim(),
            found: a_op.dims().total_dim(),
        });
    }
    let residual = l.residual(rho_ss);
    if residual >= STATIONARITY_TOL {
        return Err(Error::NotStationary { residual });
    }
    let d = l.dims().total_dim();
    let f0 = a_op.adjoint().data().dot(rho_ss.data());
    let sol = SpectralSolution::new(l.data(), &vectorize(&f0))?;
    let a = a_op.data();
    // Tr[a X] = sum_{i,j} a[j, i] X[i, j]
    let weights: Vec<C64> = sol.indices.iter().map(|&p| a[[p / d, p % d]]).collect();
    let mut modes = Vec::new();
    let mut limit = C64::new(0.0, 0.0);
    let mut scale: f64 = 0.0;
    let raw: Vec<(C64, C64)> = (0..sol.eigenvalues.len())
        .map(|k| {
            let proj: C64 = weights
                .iter()
                .enumerate()
                .map(|(r, w)| w * sol.vectors[[r, k]])
                .sum();
            let amp = sol.coefficients[k] * proj;
            scale = scale.max(amp.norm());
            (sol.eigenvalues[k], amp)
        })
        .collect();
    for (lambda, amp) in raw {
        if lambda.norm() < ZERO_MODE_TOL {
            limit += amp;
        } else if amp.norm() > 1e-14 * scale {
            modes.push(CorrelationMode {
                eigenvalue: lambda,
                amplitude: amp,
            });
        }
    }
    Ok(CorrelationModes { modes, limit })
}

/// G(tau) = Tr[a f(tau)] minus its long-time limit.
pub fn correlation_function(
    l: &Liouvillian,
    rho_ss: &DensityMatrix,
    a_op: &Operator,
    t_grid: &[f64],
) -> Result<Vec<C64>> {
    let modes = correlation_modes(l, rho_ss, a_op)?;
    Ok(t_grid.iter().map(|&t| modes.evaluate(t)).collect())
}

/// S(omega) = 2 Re int_0^inf G(tau) e^{i omega tau} d tau in closed form.
pub fn absorption_spectrum_numeric(
    l: &Liouvillian,
    rho_ss: &DensityMatrix,
    a_op: &Operator,
    freq_grid: &[f64],
) -> Result<Spectrum> {
    check_grid(freq_grid)?;
    let modes = correlation_modes(l, rho_ss, a_op)?;
    if let Some(m) = modes.modes.iter().find(|m| m.eigenvalue.re >= 0.0) {
        return Err(Error::Divergent { re: m.eigenvalue.re });
    }
    let values = freq_grid.iter().map(|&w| modes.spectrum_at(w)).collect();
    Spectrum::new(freq_grid.to_vec(), values, None)
}

/// Three-level lineshape: Lorentzians at E_{1+-} weighted by sin^2/cos^2 theta_1.
pub fn absorption_spectrum_analytic(params: &SystemParams, freq_grid: &[f64]) -> Result<Spectrum> {
    params.validate()?;
    check_grid(freq_grid)?;
    if params.n_cavities != 1 {
        return Err(Error::Unsupported("analytic lineshape is single-cavity".into()));
    }
    let th = mixing_angle(1, params.g, params.delta)?.theta;
    let (s2, c2) = (th.sin().powi(2), th.cos().powi(2));
    let gp = 0.5 * (s2 * params.gamma + c2 * params.kappa);
    let gm = 0.5 * (c2 * params.gamma + s2 * params.kappa);
    let ep = polariton_energy(PolaritonLabel::plus(1), params)?;
    let em = polariton_energy(PolaritonLabel::minus(1), params)?;
    let values = freq_grid
        .iter()
        .map(|&w| {
            2.0 * s2 * gp / ((w - ep).powi(2) + gp * gp) + 2.0 * c2 * gm / ((w - em).powi(2) + gm * gm)
        })
        .collect();
    Spectrum::new(freq_grid.to_vec(), values, Some(params.clone()))
}

/// Generator, steady state and probe operator a_0 for the undriven open
/// system (JC, plus hopping for two cavities) with decay on every site.
pub fn spectrum_setup(params: &SystemParams) -> Result<(Liouvillian, DensityMatrix, Operator)> {
    params.validate()?;
    let l = build_liouvillian(&build_h_jch(params)?, &standard_channels(params)?)?;
    let ss = steady_state(&l)?;
    let a = site_annihilation(params.dims()?, 0)?;
    Ok((l, ss, a))
}

/// Numeric absorption spectrum of the first cavity.
pub fn numeric_spectrum(params: &SystemParams, freq_grid: &[f64]) -> Result<Spectrum> {
    let (l, ss, a) = spectrum_setup(params)?;
    let mut s = absorption_spectrum_numeric(&l, &ss, &a, freq_grid)?;
    s.params = Some(params.clone());
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: f64,
    pub height: f64,
    /// Full width at half maximum; `None` if the half-height crossing falls
    /// outside the grid on either side.
    pub width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    /// Ascending in position.
    pub peaks: Vec<Peak>,
    /// The two tallest peaks, lower frequency first.
    pub dominant: Option<(Peak, Peak)>,
    /// |h_A - h_B| / (h_A + h_B) of the dominant pair.
    pub asymmetry: Option<f64>,
}

impl PeakReport {
    pub fn positions(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.position).collect()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.height).collect()
    }
}

/// Vertex of the parabola through three points, in coordinates centred on
/// the middle one to avoid cancellation at large omega.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (u0, u2) = (x[0] - x[1], x[2] - x[1]);
    let d1 = (y[1] - y[0]) / -u0;
    let d2 = (y[2] - y[1]) / u2;
    let a = (d2 - d1) / (u2 - u0);
    if a >= 0.0 || !a.is_finite() {
        return (x[1], y[1]);
    }
    // y = y1 + b u + a u^2 through (u0, y0) and (u2, y2)
    let b = d1 - a * u0;
    let uv = -b / (2.0 * a);
    (x[1] + uv, y[1] + b * uv + a * uv * uv)
}

fn half_crossing(x: &[f64], y: &[f64], i: usize, half: f64, step: isize) -> Option<f64> {
    let mut k = i as isize;
    loop {
        let next = k + step;
        if next < 0 || next as usize >= y.len() {
            return None;
        }
        let (a, b) = (k as usize, next as usize);
        if y[b] < half {
            let f = (y[a] - half) / (y[a] - y[b]);
            return Some(x[a] + f * (x[b] - x[a]));
        }
        k = next;
    }
}

/// Local maxima above 1% of the global maximum, refined by quadratic
/// interpolation.
pub fn find_peaks(spectrum: &Spectrum) -> Result<PeakReport> {
    let x = &spectrum.frequencies;
    let y = &spectrum.values;
    if x.len() < 3 {
        return Err(Error::InvalidGrid("need at least 3 points".into()));
    }
    let top = spectrum.max_value();
    if !(top > 0.0) {
        return Err(Error::NoPeaks);
    }
    let mut peaks = Vec::new();
    for i in 1..y.len() - 1 {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] && y[i] > 0.01 * top {
            let (pos, h) = parabola_vertex([x[i - 1], x[i], x[i + 1]], [y[i - 1], y[i], y[i + 1]]);
            let half = 0.5 * h;
            let width = match (half_crossing(x, y, i, half, -1), half_crossing(x, y, i, half, 1)) {
                (Some(l), Some(r)) => Some(r - l),
                _ => None,
            };
            peaks.push(Peak {
                position: pos,
                height: h,
                width,
            });
        }
    }
    if peaks.is_empty() {
        return Err(Error::NoPeaks);
    }
    let mut order: Vec<usize> = (0..peaks.len()).collect();
    order.sort_by(|&a, &b| peaks[b].height.total_cmp(&peaks[a].height));
    let dominant = (peaks.len() >= 2).then(|| {
        let (p, q) = (peaks[order[0]], peaks[order[1]]);
        if p.position <= q.position {
            (p, q)
        } else {
            (q, p)
        }
    });
    let asymmetry = dominant.map(|(a, b)| (a.height - b.height).abs() / (a.height + b.height));
    Ok(PeakReport {
        peaks,
        dominant,
        asymmetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::build_liouvillian;
    use crate::hamiltonians::build_h_jc;
    use approx::assert_abs_diff_eq;

    fn cavity(delta: f64) -> SystemParams {
        SystemParams {
            omega_c: 100.0,
            delta,
            gamma: 0.5,
            kappa: 0.5,
            n_fock: 3,
            ..SystemParams::single_cavity()
        }
    }

    #[test]
    fn analytic_peak_height_at_resonance() {
        let p = cavity(0.0);
        let s = absorption_spectrum_analytic(&p, &[99.0, 101.0]).unwrap();
        // 4/g from each Lorentzian plus the other one's tail 2(1/2)(1/4)/(4 + 1/16)
        let tail = 0.25 / (4.0 + 0.0625);
        assert_abs_diff_eq!(s.values[0], 4.0 + tail, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[1], 4.0 + tail, epsilon = 1e-12);
    }

    #[test]
    fn numeric_matches_analytic_single_cavity() {
        for delta in [0.0, 1.0, -0.7] {
            let p = cavity(delta);
            let grid = default_frequency_grid(&p);
            let num = numeric_spectrum(&p, &grid).unwrap();
            let ana = absorption_spectrum_analytic(&p, &grid).unwrap();
            let scale = ana.max_value();
            let err = num.values.iter().zip(&ana.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err / scale < 1e-9, "relative error {}", err / scale);
        }
    }

    #[test]
    fn correlation_at_zero_is_real() {
        let p = cavity(0.6);
        let (l, ss, a) = spectrum_setup(&p).unwrap();
        let g = correlation_function(&l, &ss, &a, &[0.0, 1.0]).unwrap();
        // <a a^dagger> = 1 in the vacuum, and the limit |<a>|^2 vanishes
        assert_abs_diff_eq!(g[0].re, 1.0, epsilon = 1e-10);
        assert!(g[0].im.abs() < 1e-10);
        let modes = correlation_modes(&l, &ss, &a).unwrap();
        assert_eq!(modes.modes.len(), 2);
    }

    #[test]
    fn closed_system_rejected() {
        let p = SystemParams { gamma: 0.0, kappa: 0.0, ..cavity(0.0) };
        let l = build_liouvillian(&build_h_jc(&p).unwrap(), &[]).unwrap();
        let ss = DensityMatrix::pure(&crate::operator_core::Ket::fock(p.dims().unwrap(), 0, false).unwrap());
        let a = site_annihilation(p.dims().unwrap(), 0).unwrap();
        assert!(matches!(correlation_function(&l, &ss, &a, &[0.0]), Err(Error::NotDissipative)));
    }

    #[test]
    fn non_stationary_state_rejected() {
        let p = cavity(0.0);
        let (l, _, a) = spectrum_setup(&p).unwrap();
        let excited = DensityMatrix::pure(&crate::operator_core::Ket::fock(p.dims().unwrap(), 1, false).unwrap());
        assert!(matches!(correlation_function(&l, &excited, &a, &[0.0]), Err(Error::NotStationary { .. })));
    }

    #[test]
    fn peaks_of_two_lorentzians() {
        let grid: Vec<f64> = (0..801).map(|k| -4.0 + 0.01 * k as f64).collect();
        let vals = grid
            .iter()
            .map(|w| 1.0 / ((w + 1.3f64).powi(2) + 0.04) + 0.5 / ((w - 0.7f64).powi(2) + 0.04))
            .collect();
        let s = Spectrum::new(grid, vals, None).unwrap();
        let r = find_peaks(&s).unwrap();
        assert_eq!(r.peaks.len(), 2);
        assert!((r.peaks[0].position + 1.3).abs() < 0.01);
        assert!((r.peaks[1].position - 0.7).abs() < 0.01);
        let w = r.peaks[0].width.unwrap();
        assert!((w - 0.4).abs() < 0.01);
        assert_abs_diff_eq!(r.asymmetry.unwrap(), 1.0 / 3.0, epsilon = 0.01);
        let flat = Spectrum::new(vec![0.0, 1.0, 2.0], vec![0.0; 3], None).unwrap();
        assert!(matches!(find_peaks(&flat), Err(Error::NoPeaks)));
    }

    #[test]
    fn large_detuning_favours_lower_polariton() {
        let p = cavity(30.0);
        let grid = vec![polariton_energy(PolaritonLabel::minus(1), &p).unwrap(), polariton_energy(PolaritonLabel::plus(1), &p).unwrap()];
        let s = absorption_spectrum_analytic(&p, &grid).unwrap();
        assert!(s.values[0] > 100.0 * s.values[1]);
    }
}
