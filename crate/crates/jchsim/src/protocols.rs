//! Composite experiments: hopping-induced branch interchange, the driven
//! second-order oscillation, coherence and the mechanism table, the
//! detuning ramp with its order parameter, and the effective two-level
//! model of the two-excitation manifold.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    build_h_driven, build_h_hop, build_h_jc, build_h_jch, build_stroboscopic_vi, rabi_frequency,
    RabiEstimate, SystemParams,
};
use crate::linalg::{eigh, expm_hermitian};
use crate::lindblad::{build_liouvillian, evolve, standard_channels, Liouvillian, Trajectory};
use crate::operator_core::{
    expectation, number_operator, partial_trace, DensityMatrix, HilbertDims, Ket, Operator,
};
use crate::polariton_basis::{Branch, CoefficientTable, PolaritonBasis, PolaritonLabel};
use crate::C64;

/// A product of polariton labels, one per site, written `1-,0` or `2-`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProductState(pub Vec<PolaritonLabel>);

impl ProductState {
    pub fn pair(a: PolaritonLabel, b: PolaritonLabel) -> Self {
        Self(vec![a, b])
    }

    pub fn labels(&self) -> &[PolaritonLabel] {
        &self.0
    }

    /// The ket in the polariton basis of `basis`, on as many sites as labels.
    pub fn ket(&self, basis: &PolaritonBasis) -> Result<Ket> {
        let mut ket = basis.ket(self.0[0])?;
        for &l in &self.0[1..] {
            ket = ket.kron(&basis.ket(l)?)?;
        }
        Ok(ket)
    }

    /// Index in the product polariton basis (site 0 most significant).
    pub fn index(&self, n_fock: usize) -> Result<usize> {
        let d = 2 * (n_fock + 1);
        self.0
            .iter()
            .try_fold(0, |acc, l| Ok(acc * d + l.index(n_fock)?))
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|l| match l {
                PolaritonLabel::Ground => "0".to_string(),
                other => other.to_string(),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for ProductState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split(',')
            .map(|p| p.trim().parse::<PolaritonLabel>())
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::UnknownState(s.to_string()))?;
        if labels.is_empty() || labels.len() > 2 {
            return Err(Error::UnknownState(s.to_string()));
        }
        Ok(Self(labels))
    }
}

fn state(s: &str) -> ProductState {
    s.parse().expect("built-in state name")
}

/// Closed-system evolution of a ket in the eigenbasis of H.
pub(crate) struct PureEvolution {
    energies: Array1<f64>,
    vectors: Array2<C64>,
    coefficients: Array1<C64>,
}

impl PureEvolution {
    pub fn new(h: &Operator, psi0: &Array1<C64>) -> Result<Self> {
        let (energies, vectors) = eigh(&h.data().view())?;
        let coefficients = crate::linalg::adjoint(&vectors.view()).dot(psi0);
        Ok(Self {
            energies,
            vectors,
            coefficients,
        })
    }

    pub fn at(&self, t: f64) -> Array1<C64> {
        let w = Array1::from_iter(
            self.coefficients
                .iter()
                .zip(self.energies.iter())
                .map(|(c, e)| c * C64::from_polar(1.0, -e * t)),
        );
        self.vectors.dot(&w)
    }
}

fn overlap_sq(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

fn uniform_grid(t_max: f64, samples: usize) -> Vec<f64> {
    (0..samples)
        .map(|k| t_max * k as f64 / (samples - 1) as f64)
        .collect()
}

fn require_closed(params: &SystemParams) -> Result<()> {
    if params.gamma != 0.0 || params.kappa != 0.0 {
        return Err(Error::InvalidParameter(
            "protocol requires a closed system (gamma = kappa = 0)".into(),
        ));
    }
    Ok(())
}

fn require_two(params: &SystemParams, op: &'static str) -> Result<()> {
    if params.n_cavities != 2 {
        return Err(Error::RequiresTwoCavities(op));
    }
    Ok(())
}

/// g = 10J, Delta = 0, omega^c = 10^4 g, closed.
pub fn probe_params() -> SystemParams {
    SystemParams {
        j: 0.1,
        ..SystemParams::two_cavity()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub initial: ProductState,
    pub target: ProductState,
    pub max_probability: f64,
    pub time_of_max: f64,
    pub window: f64,
}

pub const PROBE_SAMPLES: usize = 20001;

/// Max over t in [0, 10/J] of |<target|psi(t)>|^2 under H_JC + H_hp.
pub fn hopping_interchange_probe(
    params: &SystemParams,
    initial: &str,
    target: &str,
) -> Result<ProbeResult> {
    params.validate()?;
    require_two(params, "hopping_interchange_probe")?;
    require_closed(params)?;
    let (initial, target): (ProductState, ProductState) = (initial.parse()?, target.parse()?);
    if initial.0.len() != 2 || target.0.len() != 2 {
        return Err(Error::UnknownState(format!("{initial} / {target}")));
    }
    let basis = PolaritonBasis::from_params(params)?;
    let psi0 = initial.ket(&basis)?;
    let tgt = target.ket(&basis)?;
    let h = build_h_jch(params)?;
    let run = PureEvolution::new(&h, psi0.amplitudes())?;
    // amplitude onto the target decomposes over the same eigenbasis
    let ct = crate::linalg::adjoint(&run.vectors.view()).dot(tgt.amplitudes());
    let weights: Vec<C64> = run
        .coefficients
        .iter()
        .zip(ct.iter())
        .map(|(c, t)| c * t.conj())
        .collect();
    let window = if params.j != 0.0 {
        10.0 / params.j.abs()
    } else {
        10.0 / params.g.abs().max(f64::MIN_POSITIVE)
    };
    let (mut best, mut t_best) = (0.0, 0.0);
    for t in uniform_grid(window, PROBE_SAMPLES) {
        let amp: C64 = weights
            .iter()
            .zip(run.energies.iter())
            .map(|(w, e)| w * C64::from_polar(1.0, -e * t))
            .sum();
        if amp.norm_sqr() > best {
            best = amp.norm_sqr();
            t_best = t;
        }
    }
    Ok(ProbeResult {
        initial,
        target,
        max_probability: best,
        time_of_max: t_best,
        window,
    })
}

/// C = |rho_{1+,1-}| + |rho_{1-,1+}| in the single-site polariton basis; two
/// site states are reduced to site 0 first.
pub fn coherence(rho: &DensityMatrix, basis: &PolaritonBasis) -> Result<f64> {
    let reduced;
    let site = if rho.dims().n_cavities() == 2 {
        reduced = partial_trace(rho, 0)?;
        &reduced
    } else {
        rho
    };
    let up = basis.ket(PolaritonLabel::plus(1))?;
    let lo = basis.ket(PolaritonLabel::minus(1))?;
    let op = site.as_operator();
    Ok(op.matrix_element(&up, &lo)?.norm() + op.matrix_element(&lo, &up)?.norm())
}

fn pure_coherence(psi: &Array1<C64>, dims: HilbertDims, basis: &PolaritonBasis) -> Result<f64> {
    let ket = Ket::new(dims, psi.clone())?;
    coherence(&DensityMatrix::pure(&ket), basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Hopping,
    Driving,
    Relaxation,
    Modulation,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [
        Mechanism::Hopping,
        Mechanism::Driving,
        Mechanism::Relaxation,
        Mechanism::Modulation,
    ];

    /// Reference (C, P) for the mechanism.
    pub fn reference(self) -> (f64, f64) {
        match self {
            Mechanism::Hopping => (0.4, 0.2),
            Mechanism::Driving => (1.0, 1.0),
            Mechanism::Relaxation => (0.1, 0.0),
            Mechanism::Modulation => (1.0, 1.0),
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mechanism::Hopping => "hopping",
            Mechanism::Driving => "driving",
            Mechanism::Relaxation => "relaxation",
            Mechanism::Modulation => "modulation",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismRow {
    pub mechanism: Mechanism,
    pub control: String,
    pub initial: ProductState,
    /// Interchange target whose population is reported.
    pub target: ProductState,
    pub coherence: f64,
    pub interchange: f64,
    pub reference_coherence: f64,
    pub reference_interchange: f64,
}

/// Parameters of the driven second-order oscillation: Omega = 50g,
/// Delta_a = Delta_c = 500g, alpha = 0, Delta = 0, kappa = 0.
pub fn driven_params(gamma: f64) -> SystemParams {
    SystemParams {
        omega_drive: 50.0,
        alpha: 0.0,
        delta: 0.0,
        gamma,
        kappa: 0.0,
        ..SystemParams::single_cavity()
    }
    .with_drive_detunings(500.0, 500.0)
}

/// One configuration of the mechanism table.
pub fn mechanism_row(mechanism: Mechanism) -> Result<MechanismRow> {
    let (reference_coherence, reference_interchange) = mechanism.reference();
    let (control, initial, target, coherence, interchange) = match mechanism {
        Mechanism::Hopping => {
            let p = SystemParams {
                j: 1.0,
                ..SystemParams::two_cavity()
            };
            let (initial, target) = (state("1-,1-"), state("1+,1-"));
            let basis = PolaritonBasis::from_params(&p)?;
            let dims = p.dims()?;
            let tgt = target.ket(&basis)?;
            let run = PureEvolution::new(&build_h_jch(&p)?, initial.ket(&basis)?.amplitudes())?;
            let (mut c, mut pmax) = (0.0f64, 0.0f64);
            for t in uniform_grid(20.0 / p.g, 4001) {
                let psi = run.at(t);
                pmax = pmax.max(overlap_sq(tgt.amplitudes(), &psi));
                c = c.max(pure_coherence(&psi, dims, &basis)?);
            }
            ("J = g, two cavities".to_string(), initial, target, c, pmax)
        }
        Mechanism::Driving => {
            let p = driven_params(0.0);
            let (initial, target) = (state("1-"), state("1+"));
            let basis = PolaritonBasis::from_params(&p)?;
            let dims = p.dims()?;
            let tgt = target.ket(&basis)?;
            let run = PureEvolution::new(&build_h_driven(&p)?, initial.ket(&basis)?.amplitudes())?;
            let (mut c, mut pmax) = (0.0f64, 0.0f64);
            for t in uniform_grid(3.0 / p.g, 6001) {
                let psi = run.at(t);
                pmax = pmax.max(overlap_sq(tgt.amplitudes(), &psi));
                c = c.max(pure_coherence(&psi, dims, &basis)?);
            }
            ("Omega = 50g, Delta_c = 500g".to_string(), initial, target, c, pmax)
        }
        Mechanism::Relaxation => {
            let p = SystemParams {
                gamma: 1.0,
                kappa: 0.0,
                ..SystemParams::single_cavity()
            };
            let (initial, target) = (state("2-"), state("1+"));
            let basis = PolaritonBasis::from_params(&p)?;
            let tgt = target.ket(&basis)?;
            let l = build_liouvillian(&build_h_jc(&p)?, &standard_channels(&p)?)?;
            let rho0 = DensityMatrix::pure(&initial.ket(&basis)?);
            let traj = evolve(&l, &rho0, &uniform_grid(10.0 / p.g, 2001))?;
            let (mut c, mut pmax) = (0.0f64, 0.0f64);
            for r in &traj.states {
                pmax = pmax.max(r.population(&tgt)?);
                c = c.max(coherence(r, &basis)?);
            }
            ("gamma = g, kappa = 0".to_string(), initial, target, c, pmax)
        }
        Mechanism::Modulation => {
            let p = SystemParams::single_cavity();
            let (initial, target) = (state("1-"), state("1+"));
            let basis = PolaritonBasis::from_params(&p)?;
            let dims = p.dims()?;
            let tgt = target.ket(&basis)?;
            let v = build_stroboscopic_vi(&p, 0)?;
            let run = PureEvolution::new(&v, initial.ket(&basis)?.amplitudes())?;
            let (mut c, mut pmax) = (0.0f64, 0.0f64);
            for t in uniform_grid(PI / (2.0 * p.g), 501) {
                let psi = run.at(t);
                pmax = pmax.max(overlap_sq(tgt.amplitudes(), &psi));
                c = c.max(pure_coherence(&psi, dims, &basis)?);
            }
            ("Delta t = pi/2, g t = pi/2".to_string(), initial, target, c, pmax)
        }
    };
    Ok(MechanismRow {
        mechanism,
        control,
        initial,
        target,
        coherence,
        interchange,
        reference_coherence,
        reference_interchange,
    })
}

/// The four mechanism rows, computed in parallel, in table order.
pub fn mechanism_table() -> Result<Vec<MechanismRow>> {
    Mechanism::ALL.par_iter().map(|&m| mechanism_row(m)).collect()
}

pub const MIN_ORDER_SAMPLES: usize = 200;

/// (1/tau) int_0^tau sum_i Var(N_i) dt by the trapezoid rule on the samples
/// inside [t_0, t_0 + tau].
pub fn order_parameter_series(times: &[f64], variance: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau = {tau}")));
    }
    if times.len() != variance.len() || times.is_empty() {
        return Err(Error::TrajectoryTooShort("empty or mismatched series".into()));
    }
    let t0 = times[0];
    let end = t0 + tau;
    let slack = 1e-9 * tau.max(1.0);
    let last = *times.last().expect("non-empty");
    if last < end - slack {
        return Err(Error::TrajectoryTooShort(format!(
            "spans {} of tau = {tau}",
            last - t0
        )));
    }
    let n = times.iter().take_while(|&&t| t <= end + slack).count();
    if n < MIN_ORDER_SAMPLES {
        return Err(Error::TrajectoryTooShort(format!(
            "{n} samples in [0, tau], need {MIN_ORDER_SAMPLES}"
        )));
    }
    let integral: f64 = (1..n)
        .map(|k| 0.5 * (times[k] - times[k - 1]) * (variance[k] + variance[k - 1]))
        .sum();
    Ok(integral / tau)
}

fn site_variance_ops(dims: HilbertDims) -> Result<Vec<(Operator, Operator)>> {
    (0..dims.n_cavities())
        .map(|i| {
            let n = number_operator(dims, i)?;
            let n2 = &n * &n;
            Ok((n, n2))
        })
        .collect()
}

/// var(tau) of a trajectory starting at the time origin of the hold.
pub fn order_parameter(traj: &Trajectory, tau: f64) -> Result<f64> {
    let Some(first) = traj.states.first() else {
        return Err(Error::TrajectoryTooShort("empty trajectory".into()));
    };
    let ops = site_variance_ops(first.dims())?;
    let variance = traj
        .states
        .iter()
        .map(|r| {
            ops.iter().try_fold(0.0, |acc, (n, n2)| {
                let m = expectation(n, r)?.value;
                Ok(acc + expectation(n2, r)?.value - m * m)
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    order_parameter_series(&traj.times, &variance, tau)
}

/// Ramp control sequence: detunings Delta_i with stroboscopic pulse instants
/// t_i = pi(2m+1)/(2 Delta_i), pulse length t1 and hold tau per point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub m: u32,
    pub delta_values: Vec<f64>,
    pub pulse_times: Vec<f64>,
    pub t1: f64,
    pub tau: f64,
}

pub const RAMP_POINTS: usize = 40;
pub const RAMP_DELTA_MAX: f64 = 60.0;
pub const RAMP_DELTA_MIN: f64 = 0.1;
pub const HOLD_SAMPLES: usize = 401;

impl RampSchedule {
    /// `points` log-spaced detunings from `delta_start` down to `delta_min`
    /// (units of g), g t1 = pi/2 and tau = 1/J.
    pub fn log_grid(
        m: u32,
        delta_start: f64,
        delta_min: f64,
        points: usize,
        g: f64,
        j: f64,
    ) -> Result<Self> {
        if points < 2 || !(delta_start > delta_min) || !(delta_min > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "need points >= 2 and delta_start > delta_min > 0, got {points}, {delta_start}, {delta_min}"
            )));
        }
        if !(j > 0.0) || !(g > 0.0) {
            return Err(Error::InvalidSchedule("g and J must be positive".into()));
        }
        let (a, b) = (delta_start.ln(), delta_min.ln());
        let delta_values: Vec<f64> = (0..points)
            .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
            .collect();
        let law = PI * (2 * m + 1) as f64 / 2.0;
        let pulse_times = delta_values.iter().map(|d| law / d).collect();
        let s = Self {
            m,
            delta_values,
            pulse_times,
            t1: PI / (2.0 * g),
            tau: 1.0 / j,
        };
        s.validate()?;
        Ok(s)
    }

    /// 40 points over [0.1g, 60g].
    pub fn standard(m: u32, params: &SystemParams) -> Result<Self> {
        Self::log_grid(m, RAMP_DELTA_MAX, RAMP_DELTA_MIN, RAMP_POINTS, params.g, params.j)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.delta_values.len();
        if n == 0 || self.pulse_times.len() != n {
            return Err(Error::InvalidSchedule("empty or mismatched schedule".into()));
        }
        if self.delta_values.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidSchedule("detunings must be positive".into()));
        }
        if self.delta_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSchedule("detunings must strictly decrease".into()));
        }
        let law = PI * (2 * self.m + 1) as f64 / 2.0;
        for (d, t) in self.delta_values.iter().zip(&self.pulse_times) {
            if (d * t - law).abs() > 1e-9 * law {
                return Err(Error::InvalidSchedule(format!(
                    "Delta t = {} violates pi(2m+1)/2 = {law}",
                    d * t
                )));
            }
        }
        if !(self.t1 > 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidSchedule("t1 and tau must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPopulations {
    /// Fraction of the dressed-site weight in the lower branch.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterPoint {
    pub delta: f64,
    pub var_tau: f64,
    /// At the end of the hold.
    pub branch_populations: BranchPopulations,
    /// At the end of the hold, keyed by product-state name.
    pub state_probabilities: BTreeMap<String, f64>,
    /// Largest deviation of <N_total> from its initial value during the hold.
    pub excitation_drift: f64,
}

pub const KEY_STATES: [&str; 8] = ["1-,1-", "1+,1+", "2-,0", "0,2-", "2+,0", "0,2+", "1-,1+", "1+,1-"];

fn branch_populations(amps: &Array1<C64>, n_fock: usize) -> BranchPopulations {
    let d = 2 * (n_fock + 1);
    let (mut lower, mut upper) = (0.0, 0.0);
    for (k, a) in amps.iter().enumerate() {
        let w = a.norm_sqr();
        for idx in [k / d, k % d] {
            match PolaritonLabel::from_index(idx, n_fock).ok().and_then(|l| l.branch()) {
                Some(Branch::Minus) => lower += w,
                Some(Branch::Plus) => upper += w,
                None => {}
            }
        }
    }
    let total = lower + upper;
    if total > 0.0 {
        BranchPopulations {
            lower: lower / total,
            upper: upper / total,
        }
    } else {
        BranchPopulations { lower: 0.0, upper: 0.0 }
    }
}

/// Holds a two-site polariton-amplitude vector at detuning `delta` under
/// H_JC + H_hp for `tau`.
fn hold(params: &SystemParams, delta: f64, amps: &Array1<C64>, tau: f64) -> Result<OrderParameterPoint> {
    let p = SystemParams {
        delta,
        ..params.clone()
    };
    let dims = p.dims()?;
    let nf = p.n_fock;
    let basis = PolaritonBasis::from_params(&p)?;
    let u = basis.change_of_basis(dims)?;
    let psi0 = u.data().dot(amps);
    let run = PureEvolution::new(&build_h_jch(&p)?, &psi0)?;
    let ops: Vec<(Array2<C64>, Array2<C64>)> = site_variance_ops(dims)?
        .into_iter()
        .map(|(n, n2)| (n.into_data(), n2.into_data()))
        .collect();
    let ev = |op: &Array2<C64>, psi: &Array1<C64>| -> f64 {
        psi.iter().zip(op.dot(psi).iter()).map(|(a, b)| (a.conj() * b).re).sum()
    };
    let times = uniform_grid(tau, HOLD_SAMPLES);
    let mut variance = Vec::with_capacity(times.len());
    let (mut n_first, mut drift) = (None, 0.0f64);
    let mut last = psi0.clone();
    for &t in &times {
        let psi = run.at(t);
        let (mut var, mut ntot) = (0.0, 0.0);
        for (n, n2) in &ops {
            let m = ev(n, &psi);
            var += ev(n2, &psi) - m * m;
            ntot += m;
        }
        let n0 = *n_first.get_or_insert(ntot);
        drift = drift.max((ntot - n0).abs());
        variance.push(var);
        last = psi;
    }
    let var_tau = order_parameter_series(&times, &variance, tau)?;
    let final_amps = crate::linalg::adjoint(&u.data().view()).dot(&last);
    let state_probabilities = KEY_STATES
        .iter()
        .map(|name| {
            let s = state(name);
            Ok((name.to_string(), final_amps[s.index(nf)?].norm_sqr()))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(OrderParameterPoint {
        delta,
        var_tau,
        branch_populations: branch_populations(&final_amps, nf),
        state_probabilities,
        excitation_drift: drift,
    })
}

/// Detuning ramp. The state is carried as amplitudes in the instantaneous
/// polariton basis (the detuning changes adiabatically between points). If
/// `time_dependent`, each point is preceded by the pulse exp(-i V_I(m) t1) on
/// both sites, with hopping only in `strict` mode. Each point then holds the
/// state under the full two-cavity Hamiltonian for tau.
pub fn ramp_experiment(
    schedule: &RampSchedule,
    params: &SystemParams,
    initial: &ProductState,
    time_dependent: bool,
    strict: bool,
) -> Result<Vec<OrderParameterPoint>> {
    params.validate()?;
    schedule.validate()?;
    require_two(params, "ramp_experiment")?;
    require_closed(params)?;
    if initial.0.len() != 2 {
        return Err(Error::UnknownState(initial.to_string()));
    }
    let dims = params.dims()?;
    let nf = params.n_fock;
    let mut amps = Array1::<C64>::zeros(dims.total_dim());
    amps[initial.index(nf)?] = C64::new(1.0, 0.0);
    let mut prepared = Vec::with_capacity(schedule.delta_values.len());
    if time_dependent {
        let v = build_stroboscopic_vi(params, schedule.m as i64)?;
        let generator = if strict {
            &v + &build_h_hop(params)?
        } else {
            v
        };
        let pulse = expm_hermitian(&generator.data().view(), schedule.t1)?;
        for &delta in &schedule.delta_values {
            let p = SystemParams {
                delta,
                ..params.clone()
            };
            let u = PolaritonBasis::from_params(&p)?.change_of_basis(dims)?;
            let bare = pulse.dot(&u.data().dot(&amps));
            amps = crate::linalg::adjoint(&u.data().view()).dot(&bare);
            prepared.push(amps.clone());
        }
    } else {
        prepared = vec![amps; schedule.delta_values.len()];
    }
    schedule
        .delta_values
        .par_iter()
        .zip(prepared.par_iter())
        .map(|(&delta, a)| hold(params, delta, a, schedule.tau))
        .collect()
}

/// Time-independent sweeps from |1-,1-> (LP) and |1+,1+> (UP).
pub fn reference_curves(
    schedule: &RampSchedule,
    params: &SystemParams,
) -> Result<(Vec<OrderParameterPoint>, Vec<OrderParameterPoint>)> {
    let lp = ramp_experiment(schedule, params, &state("1-,1-"), false, false)?;
    let up = ramp_experiment(schedule, params, &state("1+,1+"), false, false)?;
    Ok((lp, up))
}

/// Diagonal entries of the effective two-level model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalForm {
    /// a = 2E_{1+-}, c = 2E_{2+-}, both diagonal entries doubled.
    Doubled,
    /// a = 2E_{1+-}, c = E_{2+-}, the JC energy of |2+-,0> + |0,2+->.
    #[default]
    EnergyConsistent,
}

/// H_eff = [[a, b], [b, c]] on {|1h,1h>, (|2h,0> + |0,2h>)/sqrt 2}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub omega0: f64,
    pub branch: Branch,
    pub form: DiagonalForm,
}

/// b = -sqrt 2 J c_{1h} c_{2h}; a and c per `form`.
pub fn effective_model(params: &SystemParams, branch: Branch, form: DiagonalForm) -> Result<EffectiveModel> {
    params.validate()?;
    let p = SystemParams {
        n_fock: params.n_fock.max(2),
        n_cavities: 1,
        ..params.clone()
    };
    let table = CoefficientTable::new(&PolaritonBasis::from_params(&p)?)?;
    let (c1, c2) = (table.get(1)?, table.get(2)?);
    let product = match branch {
        Branch::Minus => c1.c_minus * c2.c_minus,
        Branch::Plus => c1.c_plus * c2.c_plus,
    };
    let b = -(2f64).sqrt() * params.j * product;
    let e = |n| crate::polariton_basis::dressed_energy(n, branch, params.omega_c, params.g, params.delta);
    let a = 2.0 * e(1);
    let c = match form {
        DiagonalForm::Doubled => 2.0 * e(2),
        DiagonalForm::EnergyConsistent => e(2),
    };
    let omega0 = (4.0 * b * b + (a - c).powi(2)).sqrt();
    Ok(EffectiveModel {
        a,
        b,
        c,
        omega0,
        branch,
        form,
    })
}

/// var(tau = 1/J) = (4b^2/Omega0^2)[1 - (J/Omega0) sin(Omega0/J)].
pub fn analytic_variance(model: &EffectiveModel, j: f64) -> Result<f64> {
    if model.omega0 == 0.0 {
        return Err(Error::DegenerateEffectiveModel);
    }
    let weight = 4.0 * model.b * model.b / (model.omega0 * model.omega0);
    if j == 0.0 {
        return Ok(weight);
    }
    let x = model.omega0 / j.abs();
    let bracket = if x < 1e-4 {
        x * x / 6.0 - x.powi(4) / 120.0
    } else {
        1.0 - x.sin() / x
    };
    Ok(weight * bracket)
}

/// Full two-cavity var(tau = 1/J) from |1h,1h> without pulses.
pub fn numeric_variance(params: &SystemParams, branch: Branch) -> Result<f64> {
    params.validate()?;
    require_two(params, "numeric_variance")?;
    require_closed(params)?;
    if !(params.j > 0.0) {
        return Err(Error::InvalidParameter("J must be positive".into()));
    }
    let l = PolaritonLabel::Dressed { n: 1, branch };
    let s = ProductState::pair(l, l);
    let mut amps = Array1::<C64>::zeros(params.dims()?.total_dim());
    amps[s.index(params.n_fock)?] = C64::new(1.0, 0.0);
    Ok(hold(params, params.delta, &amps, 1.0 / params.j)?.var_tau)
}

/// Largest total opposite-branch weight reached from a one-branch product
/// state without pulses, over `t_max` in `samples` steps.
pub fn branch_leakage(
    params: &SystemParams,
    initial: &ProductState,
    t_max: f64,
    samples: usize,
) -> Result<f64> {
    params.validate()?;
    require_closed(params)?;
    let branches: Vec<Branch> = initial.0.iter().filter_map(|l| l.branch()).collect();
    let Some(&own) = branches.first() else {
        return Err(Error::InvalidState("initial state has no dressed site".into()));
    };
    if branches.iter().any(|&b| b != own) {
        return Err(Error::InvalidState(format!("{initial} mixes branches")));
    }
    let dims = params.dims()?;
    let nf = params.n_fock;
    let basis = PolaritonBasis::from_params(params)?;
    let u = basis.change_of_basis(dims)?;
    let run = PureEvolution::new(&build_h_jch(params)?, initial.ket(&basis)?.amplitudes())?;
    let other = own.opposite();
    let mask: Vec<bool> = (0..dims.total_dim())
        .map(|k| {
            dims.split_index(k)
                .iter()
                .any(|&i| PolaritonLabel::from_index(i, nf).ok().and_then(|l| l.branch()) == Some(other))
        })
        .collect();
    let ud = crate::linalg::adjoint(&u.data().view());
    let mut worst = 0.0f64;
    for t in uniform_grid(t_max, samples.max(2)) {
        let a = ud.dot(&run.at(t));
        let w: f64 = a.iter().zip(&mask).filter(|(_, m)| **m).map(|(z, _)| z.norm_sqr()).sum();
        worst = worst.max(w);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Maximum {
    pub time: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrivenRun {
    pub params: SystemParams,
    pub times: Vec<f64>,
    pub upper_population: Vec<f64>,
    pub coherence: Vec<f64>,
    pub maxima: Vec<Maximum>,
    /// Mean spacing of successive maxima.
    pub period: f64,
    pub analytic: Option<RabiEstimate>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

pub const DRIVEN_WINDOW: f64 = 3.0;
pub const DRIVEN_SAMPLES: usize = 6001;

/// Maxima of the slow oscillation: each excursion above the midpoint of the
/// signal's range contributes its highest sample, refined by a parabola
/// through the neighbours. Excursions touching either end are dropped.
pub fn oscillation_maxima(times: &[f64], values: &[f64]) -> Vec<Maximum> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mid = 0.5 * (hi + lo);
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        if values[k] <= mid {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && values[k] > mid {
            k += 1;
        }
        if start == 0 || k == n {
            continue;
        }
        let i = (start..k)
            .max_by(|&a, &b| values[a].total_cmp(&values[b]))
            .expect("non-empty excursion");
        let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
        let den = y0 - 2.0 * y1 + y2;
        let (time, value) = if den < 0.0 {
            let s = 0.5 * (y0 - y2) / den;
            let h = if s >= 0.0 { times[i + 1] - times[i] } else { times[i] - times[i - 1] };
            (times[i] + s * h, y1 - 0.25 * (y0 - y2) * s)
        } else {
            (times[i], y1)
        };
        out.push(Maximum { time, value });
    }
    out
}

/// P_{1+}(t) from |1-> under the driven model, with its oscillation period.
pub fn driven_oscillation_run(params: &SystemParams, t_max: f64, samples: usize) -> Result<DrivenRun> {
    params.validate()?;
    if params.n_cavities != 1 {
        return Err(Error::Unsupported("driven run is single-cavity".into()));
    }
    let h = build_h_driven(params)?;
    let l = if params.gamma == 0.0 && params.kappa == 0.0 {
        Liouvillian::from_hamiltonian(&h)
    } else {
        build_liouvillian(&h, &standard_channels(params)?)?
    };
    let basis = PolaritonBasis::from_params(params)?;
    let rho0 = DensityMatrix::pure(&basis.ket(PolaritonLabel::minus(1))?);
    let times = uniform_grid(t_max, samples);
    let mut traj = evolve(&l, &rho0, &times)?;
    let up = basis.ket(PolaritonLabel::plus(1))?;
    let upper_population = traj.add_observable("P_1+", &up.projector())?.to_vec();
    let coherence = traj
        .states
        .iter()
        .map(|r| coherence(r, &basis))
        .collect::<Result<Vec<_>>>()?;
    let maxima = oscillation_maxima(&times, &upper_population);
    if maxima.len() < 3 {
        return Err(Error::TooFewMaxima { found: maxima.len() });
    }
    let period = (maxima.last().expect("3 maxima").time - maxima[0].time) / (maxima.len() - 1) as f64;
    Ok(DrivenRun {
        params: params.clone(),
        times,
        upper_population,
        coherence,
        maxima,
        period,
        analytic: rabi_frequency(params).ok(),
        trajectory: Some(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn two(delta: f64, j: f64) -> SystemParams {
        SystemParams {
            delta,
            j,
            ..SystemParams::two_cavity()
        }
    }

    #[test]
    fn state_names_round_trip() {
        for s in ["1-,0", "0,1+", "2-,0", "1-,1+", "1-"] {
            assert_eq!(state(s).to_string(), s);
        }
        assert!(matches!("3x,0".parse::<ProductState>(), Err(Error::UnknownState(_))));
        assert!(matches!("1-,1-,1-".parse::<ProductState>(), Err(Error::UnknownState(_))));
        let p = probe_params();
        assert!(matches!(
            hopping_interchange_probe(&p, "bogus", "0,1+"),
            Err(Error::UnknownState(_))
        ));
    }

    #[test]
    fn product_index_matches_change_of_basis() {
        let p = two(0.7, 0.1);
        let basis = PolaritonBasis::from_params(&p).unwrap();
        let u = basis.change_of_basis(p.dims().unwrap()).unwrap();
        for name in KEY_STATES {
            let s = state(name);
            let col = u.data().column(s.index(p.n_fock).unwrap()).to_owned();
            assert!(overlap_sq(&col, s.ket(&basis).unwrap().amplitudes()) > 1.0 - 1e-14);
        }
    }

    #[test]
    fn probe_vanishes_without_hopping() {
        let p = SystemParams { j: 0.0, ..probe_params() };
        let r = hopping_interchange_probe(&p, "1-,0", "0,1+").unwrap();
        assert!(r.max_probability < 1e-20);
        let open = SystemParams { gamma: 0.1, ..probe_params() };
        assert!(hopping_interchange_probe(&open, "1-,0", "0,1+").is_err());
    }

    #[test]
    fn coherence_limits() {
        let p = SystemParams::single_cavity();
        let b = PolaritonBasis::from_params(&p).unwrap();
        let lo = b.ket(PolaritonLabel::minus(1)).unwrap();
        assert_eq!(coherence(&DensityMatrix::pure(&lo), &b).unwrap(), 0.0);
        let up = b.ket(PolaritonLabel::plus(1)).unwrap();
        let sup = Ket::normalized(p.dims().unwrap(), lo.amplitudes() + up.amplitudes()).unwrap();
        assert_abs_diff_eq!(coherence(&DensityMatrix::pure(&sup), &b).unwrap(), 1.0, epsilon = 1e-14);
        // two-site product: reduced to site 0
        let q = two(0.0, 0.1);
        let b2 = PolaritonBasis::from_params(&q).unwrap();
        let s0 = Ket::normalized(
            q.dims().unwrap().single_site(),
            b2.ket(PolaritonLabel::minus(1)).unwrap().amplitudes() + b2.ket(PolaritonLabel::plus(1)).unwrap().amplitudes(),
        )
        .unwrap();
        let prod = s0.kron(&b2.ket(PolaritonLabel::Ground).unwrap()).unwrap();
        assert_abs_diff_eq!(coherence(&DensityMatrix::pure(&prod), &b2).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn order_parameter_rejects_short_runs() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let v = vec![1.0; 100];
        assert!(matches!(order_parameter_series(&t, &v, 20.0), Err(Error::TrajectoryTooShort(_))));
        assert!(matches!(order_parameter_series(&t, &v, 9.9), Err(Error::TrajectoryTooShort(_))));
        let t: Vec<f64> = (0..=400).map(|k| k as f64 * 0.025).collect();
        let v: Vec<f64> = t.iter().map(|x| x * x).collect();
        assert_abs_diff_eq!(order_parameter_series(&t, &v, 10.0).unwrap(), 100.0 / 3.0, epsilon = 1e-3);
    }

    #[test]
    fn order_parameter_from_trajectory() {
        let p = two(0.0, 0.1);
        let b = PolaritonBasis::from_params(&p).unwrap();
        let rho0 = DensityMatrix::pure(&state("1-,1-").ket(&b).unwrap());
        let l = Liouvillian::from_hamiltonian(&build_h_jch(&p).unwrap());
        let traj = evolve(&l, &rho0, &uniform_grid(10.0, 401)).unwrap();
        let from_traj = order_parameter(&traj, 10.0).unwrap();
        let from_hold = numeric_variance(&p, Branch::Minus).unwrap();
        assert_abs_diff_eq!(from_traj, from_hold, epsilon = 1e-9);
    }

    #[test]
    fn effective_model_values() {
        let p = two(0.0, 0.1);
        let m = effective_model(&p, Branch::Minus, DiagonalForm::EnergyConsistent).unwrap();
        assert_abs_diff_eq!(m.b, -0.120710678, epsilon = 1e-8);
        assert_abs_diff_eq!(m.a - m.c, -(2.0 - 2f64.sqrt()), epsilon = 1e-10);
        let var = analytic_variance(&m, 0.1).unwrap();
        assert_abs_diff_eq!(var, 0.144, epsilon = 1e-3);
        // |b| equals the hopping matrix element between the two model states
        let q = two(0.0, 0.1);
        let basis = PolaritonBasis::from_params(&q).unwrap();
        let psi0 = state("1-,1-").ket(&basis).unwrap();
        let a = state("2-,0").ket(&basis).unwrap();
        let c = state("0,2-").ket(&basis).unwrap();
        let psi1 = Ket::normalized(q.dims().unwrap(), a.amplitudes() + c.amplitudes()).unwrap();
        let elem = build_h_hop(&q).unwrap().matrix_element(&psi1, &psi0).unwrap();
        assert_abs_diff_eq!(elem.norm(), m.b.abs(), epsilon = 1e-12);
        let zero = effective_model(&SystemParams { j: 0.0, ..p }, Branch::Minus, DiagonalForm::EnergyConsistent).unwrap();
        assert_eq!(zero.b, 0.0);
        assert_abs_diff_eq!(zero.omega0, (zero.a - zero.c).abs(), epsilon = 1e-12);
        assert_eq!(analytic_variance(&zero, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn analytic_variance_edge_cases() {
        let degenerate = EffectiveModel {
            a: 1.0,
            b: 0.0,
            c: 1.0,
            omega0: 0.0,
            branch: Branch::Minus,
            form: DiagonalForm::EnergyConsistent,
        };
        assert!(matches!(analytic_variance(&degenerate, 0.1), Err(Error::DegenerateEffectiveModel)));
        let tiny = EffectiveModel { b: 1e-7, omega0: 2e-7, ..degenerate };
        let x: f64 = 2e-7 / 0.1;
        assert_abs_diff_eq!(analytic_variance(&tiny, 0.1).unwrap(), x * x / 6.0, epsilon = 1e-20);
        let near = EffectiveModel { b: 1e-3, omega0: 2e-3 * 1.0001, ..degenerate };
        let direct = (4e-6 / near.omega0.powi(2)) * (1.0 - (0.1 / near.omega0) * (near.omega0 / 0.1).sin());
        assert_abs_diff_eq!(analytic_variance(&near, 0.1).unwrap(), direct, epsilon = 1e-12);
    }

    #[test]
    fn analytic_matches_numeric_deep_mott() {
        for branch in [Branch::Minus, Branch::Plus] {
            let p = two(0.0, 0.1);
            let m = effective_model(&p, branch, DiagonalForm::EnergyConsistent).unwrap();
            let a = analytic_variance(&m, p.j).unwrap();
            let n = numeric_variance(&p, branch).unwrap();
            assert!((a - n).abs() < 0.05 * n, "{branch:?}: {a} vs {n}");
        }
    }

    #[test]
    fn schedule_validation() {
        let p = two(0.0, 0.1);
        let s = RampSchedule::standard(1, &p).unwrap();
        assert_eq!(s.delta_values.len(), 40);
        assert_abs_diff_eq!(s.delta_values[0], 60.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.delta_values[39], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.tau, 10.0, epsilon = 1e-12);
        let mut bad = s.clone();
        bad.pulse_times[3] *= 1.01;
        assert!(matches!(bad.validate(), Err(Error::InvalidSchedule(_))));
        let mut rising = s.clone();
        rising.delta_values.swap(0, 1);
        assert!(rising.validate().is_err());
    }

    #[test]
    fn ramp_points_sit_on_reference_curves() {
        let p = two(0.0, 0.1);
        let s = RampSchedule::log_grid(1, 60.0, 0.1, 6, p.g, p.j).unwrap();
        let (lp, up) = reference_curves(&s, &p).unwrap();
        let ramp = ramp_experiment(&s, &p, &state("1-,1-"), true, false).unwrap();
        for (i, pt) in ramp.iter().enumerate() {
            let reference = if i % 2 == 0 { &up[i] } else { &lp[i] };
            assert_abs_diff_eq!(pt.var_tau, reference.var_tau, epsilon = 1e-9);
            assert!(pt.excitation_drift < 1e-8);
        }
    }

    #[test]
    fn strict_ramp_keeps_branch_pattern() {
        // hopping during the pulses shifts var(tau) but not the branch reached
        let p = two(0.0, 0.1);
        let s = RampSchedule::log_grid(1, 60.0, 0.1, 4, p.g, p.j).unwrap();
        let a = ramp_experiment(&s, &p, &state("1-,1-"), true, false).unwrap();
        let b = ramp_experiment(&s, &p, &state("1-,1-"), true, true).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let dominant = |q: &OrderParameterPoint| q.branch_populations.upper > 0.5;
            assert_eq!(dominant(x), dominant(y));
            assert!(y.excitation_drift < 1e-8);
        }
        assert!(a.iter().zip(&b).any(|(x, y)| (x.var_tau - y.var_tau).abs() > 1e-6));
    }

    #[test]
    fn full_rabi_cycle_returns_to_branch() {
        let p = SystemParams::single_cavity();
        let b = PolaritonBasis::from_params(&p).unwrap();
        let lo = b.ket(PolaritonLabel::minus(1)).unwrap();
        let u = expm_hermitian(&build_stroboscopic_vi(&p, 0).unwrap().data().view(), PI / p.g).unwrap();
        assert_abs_diff_eq!(overlap_sq(lo.amplitudes(), &u.dot(lo.amplitudes())), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn maxima_of_sampled_cosine() {
        let t = uniform_grid(10.0, 2001);
        let v: Vec<f64> = t.iter().map(|x| (0.5 - 0.5 * (2.0 * PI * x / 2.3).cos()) + 0.01 * (97.0 * x).sin()).collect();
        let m = oscillation_maxima(&t, &v);
        assert_eq!(m.len(), 4);
        let period = (m[3].time - m[0].time) / 3.0;
        assert!((period - 2.3).abs() < 0.02, "{period}");
    }

    #[test]
    fn branch_leakage_small_in_mott_regime() {
        let p = two(0.0, 0.1);
        let w = branch_leakage(&p, &state("1-,1-"), 100.0, 2001).unwrap();
        assert!(w < 0.1, "{w}");
        assert!(branch_leakage(&p, &state("1-,1+"), 1.0, 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn variance_nonnegative_and_vanishes_without_hopping(delta in 0.0f64..5.0, j in 0.01f64..0.1) {
            let p = two(delta, j);
            for branch in [Branch::Minus, Branch::Plus] {
                prop_assert!(numeric_variance(&p, branch).unwrap() >= -1e-8);
            }
            let q = two(delta, 1e-9);
            prop_assert!(numeric_variance(&q, Branch::Minus).unwrap().abs() < 1e-8);
        }
    }
}
