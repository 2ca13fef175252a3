//! Lindblad master-equation machinery on column-major vectorized density
//! matrices: vec(rho)[i + j D] = rho[i, j].

use std::collections::{BTreeMap, VecDeque};

use log::warn;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::SystemParams;
use crate::linalg::{self, re};
use crate::operator_core::{
    expectation, site_annihilation, site_lowering, DensityMatrix, HilbertDims, Operator,
};
use crate::polariton_basis::{decompose_creation, embed_site_families};
use crate::C64;

/// Eigenvalues closer to zero than this count as zero modes.
pub const ZERO_MODE_TOL: f64 = 1e-8;
/// Eigenvector matrices with a larger 1-norm condition number are treated as
/// defective and trigger the Runge-Kutta fallback.
const MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Debug)]
pub struct Liouvillian {
    dims: HilbertDims,
    data: Array2<C64>,
    /// Set when the generator is purely Hamiltonian.
    hamiltonian: Option<Operator>,
}

pub fn vectorize(rho: &Array2<C64>) -> Array1<C64> {
    let d = rho.nrows();
    let mut v = Array1::zeros(d * d);
    for j in 0..d {
        for i in 0..d {
            v[i + j * d] = rho[[i, j]];
        }
    }
    v
}

pub fn unvectorize(v: &Array1<C64>, d: usize) -> Array2<C64> {
    let mut m = Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            m[[i, j]] = v[i + j * d];
        }
    }
    m
}

impl Liouvillian {
    pub fn zeros(dims: HilbertDims) -> Self {
        let n = dims.total_dim().pow(2);
        Self {
            dims,
            data: Array2::zeros((n, n)),
            hamiltonian: None,
        }
    }

    /// -i [H, .] as -i (I (x) H - H^T (x) I).
    pub fn from_hamiltonian(h: &Operator) -> Self {
        let dims = h.dims();
        let d = dims.total_dim();
        let mut l = Self::zeros(dims);
        let hd = h.data();
        let minus_i = C64::new(0.0, -1.0);
        for k in 0..d {
            for i in 0..d {
                let hik = hd[[i, k]];
                if hik.norm() == 0.0 {
                    continue;
                }
                for j in 0..d {
                    // (I (x) H): rho[k, j] -> rho[i, j]
                    l.data[[i + j * d, k + j * d]] += minus_i * hik;
                    // -(H^T (x) I): rho[j, i] -> rho[j, k] with weight H[i, k]
                    l.data[[j + k * d, j + i * d]] -= minus_i * hik;
                }
            }
        }
        l.hamiltonian = Some(h.clone());
        l
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn hamiltonian(&self) -> Option<&Operator> {
        self.hamiltonian.as_ref()
    }

    pub fn is_dissipative(&self) -> bool {
        self.hamiltonian.is_none()
    }

    pub fn try_add(&self, other: &Liouvillian) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                op: "Liouvillian::add",
                expected: self.dims.total_dim(),
                found: other.dims.total_dim(),
            });
        }
        Ok(Self {
            dims: self.dims,
            data: &self.data + &other.data,
            hamiltonian: None,
        })
    }

    /// L[rho] as a matrix.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = self.dims.total_dim();
        unvectorize(&self.data.dot(&vectorize(rho)), d)
    }

    pub fn eigenvalues(&self) -> Result<Vec<C64>> {
        let mut out = Vec::new();
        for comp in components(&self.data) {
            let block = submatrix(&self.data, &comp);
            out.extend(linalg::eigvals(&block.view())?.iter().copied());
        }
        Ok(out)
    }

    /// max |L[rho]|.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        linalg::max_abs(&self.apply(rho.data()).view())
    }
}

/// (rate/2)(2 L rho L^dagger - {L^dagger L, rho}).
pub fn dissipator(jump: &Operator, rate: f64) -> Result<Liouvillian> {
    if rate < 0.0 || !rate.is_finite() {
        return Err(Error::NegativeRate(rate));
    }
    let dims = jump.dims();
    let d = dims.total_dim();
    let mut out = Liouvillian::zeros(dims);
    if rate == 0.0 {
        return Ok(out);
    }
    let l = jump.data();
    let m = linalg::adjoint(&l.view()).dot(l);
    let nz: Vec<(usize, usize, C64)> = l
        .indexed_iter()
        .filter(|(_, z)| z.norm() != 0.0)
        .map(|((i, k), z)| (i, k, *z))
        .collect();
    let r = re(rate);
    for &(i, k, lik) in &nz {
        for &(j, l_, ljl) in &nz {
            out.data[[i + j * d, k + l_ * d]] += r * lik * ljl.conj();
        }
    }
    let half = re(0.5 * rate);
    for k in 0..d {
        for i in 0..d {
            let mik = m[[i, k]];
            if mik.norm() == 0.0 {
                continue;
            }
            for j in 0..d {
                // M rho
                out.data[[i + j * d, k + j * d]] -= half * mik;
                // rho M: rho[j, i] M[i, k] -> (j, k)
                out.data[[j + k * d, j + i * d]] -= half * mik;
            }
        }
    }
    Ok(out)
}

/// -i[H, .] plus every channel's dissipator. Channels with zero rate are
/// dropped, so a list of only such channels yields a Hamiltonian generator.
pub fn build_liouvillian(h: &Operator, channels: &[(Operator, f64)]) -> Result<Liouvillian> {
    let mut l = Liouvillian::from_hamiltonian(h);
    for (jump, rate) in channels {
        if jump.dims() != h.dims() {
            return Err(Error::DimensionMismatch {
                op: "build_liouvillian",
                expected: h.dims().total_dim(),
                found: jump.dims().total_dim(),
            });
        }
        if *rate < 0.0 {
            return Err(Error::NegativeRate(*rate));
        }
        if *rate == 0.0 || jump.frobenius_norm() == 0.0 {
            continue;
        }
        l = l.try_add(&dissipator(jump, *rate)?)?;
    }
    Ok(l)
}

/// Cavity decay a_j at rate gamma and atomic decay sigma_j at rate kappa on
/// every site.
pub fn standard_channels(params: &SystemParams) -> Result<Vec<(Operator, f64)>> {
    params.validate()?;
    let dims = params.dims()?;
    let mut out = Vec::new();
    for site in 0..dims.n_cavities() {
        out.push((site_annihilation(dims, site)?, params.gamma));
        out.push((site_lowering(dims, site)?, params.kappa));
    }
    Ok(out)
}

/// Lindblad generator with jumps P_+ and P_- (photonic lowering families) at
/// rate gamma on every site.
pub fn branch_decoupled_dissipator(params: &SystemParams) -> Result<Liouvillian> {
    params.validate()?;
    let dims = params.dims()?;
    let fam = decompose_creation(dims, params)?.lowering();
    let mut l = Liouvillian::zeros(dims);
    for site in 0..dims.n_cavities() {
        let embedded = embed_site_families(&fam, site, dims)?;
        l = l.try_add(&dissipator(&embedded.plus, params.gamma)?)?;
        l = l.try_add(&dissipator(&embedded.minus, params.gamma)?)?;
    }
    Ok(l)
}

/// Connected components of the undirected sparsity graph of `m`.
pub(crate) fn components(m: &Array2<C64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for ((i, j), z) in m.indexed_iter() {
        if i != j && z.norm() != 0.0 {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Indices reachable from `start` along nonzero entries m[i, j] (j -> i).
pub(crate) fn reachable(m: &Array2<C64>, start: &[usize]) -> Vec<usize> {
    let n = m.nrows();
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in start {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !seen[i] && m[[i, j]].norm() != 0.0 {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    (0..n).filter(|&i| seen[i]).collect()
}

pub(crate) fn submatrix(m: &Array2<C64>, idx: &[usize]) -> Array2<C64> {
    Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| m[[idx[a], idx[b]]])
}

/// Eigen-decomposition of the generator restricted to the indices reachable
/// from an initial vector, with the initial vector's mode coefficients.
pub(crate) struct SpectralSolution {
    pub indices: Vec<usize>,
    pub eigenvalues: Array1<C64>,
    pub vectors: Array2<C64>,
    pub coefficients: Array1<C64>,
}

impl SpectralSolution {
    pub fn new(l: &Array2<C64>, x0: &Array1<C64>) -> Result<Self> {
        let support: Vec<usize> = (0..x0.len()).filter(|&i| x0[i].norm() != 0.0).collect();
        let indices = reachable(l, &support);
        let block = submatrix(l, &indices);
        let (eigenvalues, vectors) = linalg::eig(&block.view())?;
        let inverse = linalg::inv(&vectors.view())
            .map_err(|_| Error::Linalg("singular eigenvector matrix".into()))?;
        let cond = linalg::norm1(&vectors.view()) * linalg::norm1(&inverse.view());
        if !cond.is_finite() || cond > MAX_CONDITION {
            return Err(Error::Linalg(format!(
                "eigenvector matrix condition number {cond:e}"
            )));
        }
        let x0r = Array1::from_iter(indices.iter().map(|&i| x0[i]));
        let coefficients = inverse.dot(&x0r);
        Ok(Self {
            indices,
            eigenvalues,
            vectors,
            coefficients,
        })
    }

    /// Full-length vector at time t.
    pub fn at(&self, t: f64, n: usize) -> Array1<C64> {
        let w = Array1::from_iter(
            self.coefficients
                .iter()
                .zip(self.eigenvalues.iter())
                .map(|(c, l)| c * (l * t).exp()),
        );
        let xr = self.vectors.dot(&w);
        let mut out = Array1::zeros(n);
        for (k, &i) in self.indices.iter().enumerate() {
            out[i] = xr[k];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationMethod {
    Unitary,
    Spectral,
    RungeKutta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionDiagnostics {
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
    pub methods: Vec<PropagationMethod>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: BTreeMap<String, Vec<f64>>,
    /// Index of the last snapshot of every segment.
    pub segment_boundaries: Vec<usize>,
    pub diagnostics: EvolutionDiagnostics,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            observables: BTreeMap::new(),
            segment_boundaries: Vec::new(),
            diagnostics: EvolutionDiagnostics {
                max_trace_drift: 0.0,
                max_hermiticity_drift: 0.0,
                methods: Vec::new(),
            },
        }
    }

    fn push(&mut self, t: f64, data: Array2<C64>, dims: HilbertDims) {
        let tr = linalg::trace(&data.view());
        let drift = (tr - re(1.0)).norm();
        let herm = linalg::hermiticity_defect(&data.view());
        let d = &mut self.diagnostics;
        d.max_trace_drift = d.max_trace_drift.max(drift);
        d.max_hermiticity_drift = d.max_hermiticity_drift.max(herm);
        self.times.push(t);
        self.states.push(DensityMatrix::new_unchecked(dims, data));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// Records Re Tr(op rho(t)) under `name`.
    pub fn add_observable(&mut self, name: &str, op: &Operator) -> Result<&[f64]> {
        let series = self
            .states
            .iter()
            .map(|r| expectation(op, r).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        self.observables.insert(name.to_string(), series);
        Ok(&self.observables[name])
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(|v| v.as_slice())
    }

    /// Smallest eigenvalue over all snapshots.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = f64::INFINITY;
        for s in &self.states {
            m = m.min(s.min_eigenvalue()?);
        }
        Ok(m)
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidGrid("empty time grid".into()));
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidGrid("non-finite time".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_state(l: &Liouvillian, rho0: &DensityMatrix) -> Result<()> {
    if l.dims != rho0.dims() {
        return Err(Error::InvalidState(format!(
            "initial state dimension {} does not match generator dimension {}",
            rho0.dims().total_dim(),
            l.dims.total_dim()
        )));
    }
    Ok(())
}

/// Propagates `rho0`, given at `t_grid[0]`, to every time of the grid.
/// Hamiltonian generators use the eigenbasis of H; dissipative ones use the
/// eigen-decomposition of the reachable block of L, with a fixed-step RK4
/// fallback when that block is numerically defective.
pub fn evolve(l: &Liouvillian, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Trajectory> {
    check_grid(t_grid)?;
    check_state(l, rho0)?;
    let mut traj = Trajectory::new();
    propagate_into(&mut traj, Generator::Liouvillian(l), rho0.data(), t_grid)?;
    traj.segment_boundaries.push(traj.len() - 1);
    Ok(traj)
}

/// Either kind of generator for `evolve_piecewise`.
#[derive(Clone, Copy, Debug)]
pub enum Generator<'a> {
    Liouvillian(&'a Liouvillian),
    Hamiltonian(&'a Operator),
}

impl Generator<'_> {
    fn dims(&self) -> HilbertDims {
        match self {
            Generator::Liouvillian(l) => l.dims,
            Generator::Hamiltonian(h) => h.dims(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Segment<'a> {
    pub generator: Generator<'a>,
    pub duration: f64,
    /// Snapshots recorded inside the segment (the segment end included).
    pub samples: usize,
}

/// Sequential propagation through segments; the first snapshot is `rho0`
/// at t = 0 and each segment contributes `samples` evenly spaced snapshots.
pub fn evolve_piecewise(segments: &[Segment<'_>], rho0: &DensityMatrix) -> Result<Trajectory> {
    let mut traj = Trajectory::new();
    traj.push(0.0, rho0.data().clone(), rho0.dims());
    let mut t0 = 0.0;
    let mut current = rho0.data().clone();
    for seg in segments {
        if seg.generator.dims() != rho0.dims() {
            return Err(Error::DimensionMismatch {
                op: "evolve_piecewise",
                expected: rho0.dims().total_dim(),
                found: seg.generator.dims().total_dim(),
            });
        }
        if !(seg.duration > 0.0) || seg.samples == 0 {
            return Err(Error::InvalidGrid(
                "segment durations and sample counts must be positive".into(),
            ));
        }
        let mut grid = vec![t0];
        grid.extend((1..=seg.samples).map(|k| t0 + seg.duration * k as f64 / seg.samples as f64));
        let mut part = Trajectory::new();
        propagate_into(&mut part, seg.generator, &current, &grid)?;
        current = part.states.last().expect("nonempty").data().clone();
        let dims = rho0.dims();
        for (t, s) in part.times.into_iter().zip(part.states).skip(1) {
            traj.push(t, s.data().clone(), dims);
        }
        traj.diagnostics.methods.extend(part.diagnostics.methods);
        traj.segment_boundaries.push(traj.len() - 1);
        t0 += seg.duration;
    }
    Ok(traj)
}

fn propagate_into(
    traj: &mut Trajectory,
    generator: Generator<'_>,
    rho0: &Array2<C64>,
    t_grid: &[f64],
) -> Result<()> {
    let (dims, ham) = match generator {
        Generator::Hamiltonian(h) => (h.dims(), Some(h)),
        Generator::Liouvillian(l) => (l.dims, l.hamiltonian.as_ref()),
    };
    let t0 = t_grid[0];
    if let Some(h) = ham {
        let (e, v) = linalg::eigh(&h.data().view())?;
        let vd = linalg::adjoint(&v.view());
        let rt = vd.dot(rho0).dot(&v);
        for &t in t_grid {
            let dt = t - t0;
            let rot = Array2::from_shape_fn(rt.raw_dim(), |(k, l)| {
                rt[[k, l]] * C64::from_polar(1.0, -(e[k] - e[l]) * dt)
            });
            traj.push(t, v.dot(&rot).dot(&vd), dims);
        }
        traj.diagnostics.methods.push(PropagationMethod::Unitary);
        return Ok(());
    }
    let l = match generator {
        Generator::Liouvillian(l) => l,
        Generator::Hamiltonian(_) => unreachable!(),
    };
    let d = dims.total_dim();
    let x0 = vectorize(rho0);
    match SpectralSolution::new(&l.data, &x0) {
        Ok(sol) => {
            for &t in t_grid {
                traj.push(t, unvectorize(&sol.at(t - t0, d * d), d), dims);
            }
            traj.diagnostics.methods.push(PropagationMethod::Spectral);
        }
        Err(e) => {
            warn!("spectral propagation unavailable ({e}); using fixed-step RK4");
            rk4_into(traj, l, rho0, t_grid, None)?;
        }
    }
    Ok(())
}

/// Default fallback step: min(1e-3, T_fastest / 20), T_fastest from the
/// 1-norm bound on the generator's spectral radius.
pub fn default_rk4_step(l: &Liouvillian) -> f64 {
    let radius = linalg::norm1(&l.data.view());
    let t_fastest = if radius > 0.0 {
        2.0 * std::f64::consts::PI / radius
    } else {
        f64::INFINITY
    };
    (1e-3f64).min(t_fastest / 20.0)
}

/// Fixed-step fourth-order Runge-Kutta propagation on the reachable block.
pub fn evolve_rk4(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    step: Option<f64>,
) -> Result<Trajectory> {
    check_grid(t_grid)?;
    check_state(l, rho0)?;
    let mut traj = Trajectory::new();
    rk4_into(&mut traj, l, rho0.data(), t_grid, step)?;
    traj.segment_boundaries.push(traj.len() - 1);
    Ok(traj)
}

fn rk4_into(
    traj: &mut Trajectory,
    l: &Liouvillian,
    rho0: &Array2<C64>,
    t_grid: &[f64],
    step: Option<f64>,
) -> Result<()> {
    let dims = l.dims;
    let d = dims.total_dim();
    let x0 = vectorize(rho0);
    let support: Vec<usize> = (0..x0.len()).filter(|&i| x0[i].norm() != 0.0).collect();
    let idx = reachable(&l.data, &support);
    let block = submatrix(&l.data, &idx);
    let h_max = step.unwrap_or_else(|| default_rk4_step(l));
    if !(h_max > 0.0) {
        return Err(Error::InvalidGrid("RK4 step must be positive".into()));
    }
    let mut x = Array1::from_iter(idx.iter().map(|&i| x0[i]));
    let embed = |x: &Array1<C64>| {
        let mut full = Array1::zeros(d * d);
        for (k, &i) in idx.iter().enumerate() {
            full[i] = x[k];
        }
        unvectorize(&full, d)
    };
    traj.push(t_grid[0], embed(&x), dims);
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let n = (span / h_max).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            let k1 = block.dot(&x);
            let k2 = block.dot(&(&x + &k1.mapv(|z| z * (0.5 * h))));
            let k3 = block.dot(&(&x + &k2.mapv(|z| z * (0.5 * h))));
            let k4 = block.dot(&(&x + &k3.mapv(|z| z * h)));
            x = &x + &((&k1 + &k2.mapv(|z| z * 2.0) + &k3.mapv(|z| z * 2.0) + &k4)
                .mapv(|z| z * (h / 6.0)));
        }
        traj.push(w[1], embed(&x), dims);
    }
    traj.diagnostics.methods.push(PropagationMethod::RungeKutta);
    Ok(())
}

/// The unique zero mode of L as a density matrix.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    let dims = l.dims;
    let d = dims.total_dim();
    let mut zero_blocks = Vec::new();
    let mut zeros = Vec::new();
    let mut smallest = f64::INFINITY;
    for comp in components(&l.data) {
        let block = submatrix(&l.data, &comp);
        let ev = linalg::eigvals(&block.view())?;
        let mut hit = false;
        for z in ev.iter() {
            smallest = smallest.min(z.norm());
            if z.norm() < ZERO_MODE_TOL {
                zeros.push(*z);
                hit = true;
            }
        }
        if hit {
            zero_blocks.push(comp);
        }
    }
    if zeros.is_empty() {
        return Err(Error::NoZeroMode { smallest });
    }
    if zeros.len() > 1 {
        return Err(Error::DegenerateZeroMode {
            count: zeros.len(),
            eigenvalues: format!("{zeros:?}"),
        });
    }
    let comp = &zero_blocks[0];
    let block = submatrix(&l.data, comp);
    let (ev, vecs) = linalg::eig(&block.view())?;
    let k = (0..ev.len())
        .min_by(|&a, &b| ev[a].norm().total_cmp(&ev[b].norm()))
        .expect("nonempty block");
    let mut full = Array1::zeros(d * d);
    for (r, &i) in comp.iter().enumerate() {
        full[i] = vecs[[r, k]];
    }
    let m = unvectorize(&full, d);
    let tr = linalg::trace(&m.view());
    if tr.norm() < 1e-12 {
        return Err(Error::InvalidState("zero mode is traceless".into()));
    }
    let rho = linalg::hermitize(&m.mapv(|z| z / tr).view());
    DensityMatrix::new(dims, rho)
}
