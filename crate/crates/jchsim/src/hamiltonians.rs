//! Hamiltonian builders: bare Jaynes-Cummings, photon hopping, the diagonal
//! polariton form, the driven model in the multi-rotating frame and the
//! stroboscopic branch-rotation generator.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{im, re};
use crate::operator_core::{
    atomic_lowering, embed_site, fock_annihilation, site_annihilation, HilbertDims, Operator,
};
use crate::polariton_basis::{
    dressed_energy, ladder_families, Branch, CoefficientTable, LadderKind, PolaritonBasis,
    PolaritonLabel,
};
use crate::C64;

/// Physical parameters in units of g. The atomic frequency and all drive
/// detunings are derived, so the identities between them hold by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Cavity frequency omega^c.
    pub omega_c: f64,
    /// Atom-cavity detuning omega^a - omega^c.
    pub delta: f64,
    /// Atom-field coupling.
    pub g: f64,
    /// Photon hopping between the two cavities.
    pub j: f64,
    /// Cavity decay rate.
    pub gamma: f64,
    /// Atomic decay rate.
    pub kappa: f64,
    /// Atomic drive amplitude Omega.
    pub omega_drive: f64,
    /// Cavity drive amplitude alpha.
    pub alpha: f64,
    /// Atomic drive frequency omega^l.
    pub omega_l: f64,
    /// Cavity drive frequency omega^p.
    pub omega_p: f64,
    pub n_fock: usize,
    pub n_cavities: usize,
}

impl SystemParams {
    /// One cavity, resonant, undriven, lossless, Nf = 4.
    pub fn single_cavity() -> Self {
        let omega_c = 1.0e4;
        Self {
            omega_c,
            delta: 0.0,
            g: 1.0,
            j: 0.0,
            gamma: 0.0,
            kappa: 0.0,
            omega_drive: 0.0,
            alpha: 0.0,
            omega_l: omega_c,
            omega_p: omega_c,
            n_fock: 4,
            n_cavities: 1,
        }
    }

    /// Two cavities, Nf = 3.
    pub fn two_cavity() -> Self {
        Self {
            n_fock: 3,
            n_cavities: 2,
            ..Self::single_cavity()
        }
    }

    pub fn omega_a(&self) -> f64 {
        self.omega_c + self.delta
    }

    pub fn delta_a(&self) -> f64 {
        self.omega_a() - self.omega_l
    }

    pub fn delta_c(&self) -> f64 {
        self.omega_c - self.omega_p
    }

    pub fn delta_1(&self) -> f64 {
        self.omega_p - self.omega_l
    }

    /// Chooses the drive frequencies so that the atom and cavity detunings
    /// from their drives are `delta_a` and `delta_c`.
    pub fn with_drive_detunings(mut self, delta_a: f64, delta_c: f64) -> Self {
        self.omega_l = self.omega_a() - delta_a;
        self.omega_p = self.omega_c - delta_c;
        self
    }

    /// Drive frequencies with Delta_1 = 0 and cavity detuning `delta_c`.
    pub fn with_cavity_detuning(self, delta_c: f64) -> Self {
        let delta_a = delta_c + self.delta;
        self.with_drive_detunings(delta_a, delta_c)
    }

    pub fn dims(&self) -> Result<HilbertDims> {
        HilbertDims::new(self.n_fock, self.n_cavities)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        let all = [
            ("omega_c", self.omega_c),
            ("delta", self.delta),
            ("g", self.g),
            ("j", self.j),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("omega_drive", self.omega_drive),
            ("alpha", self.alpha),
            ("omega_l", self.omega_l),
            ("omega_p", self.omega_p),
        ];
        if let Some((name, _)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} is not finite")));
        }
        if !(self.g > 0.0) {
            return Err(Error::InvalidParameter(format!("g = {} must be positive", self.g)));
        }
        if self.gamma < 0.0 {
            return Err(Error::NegativeRate(self.gamma));
        }
        if self.kappa < 0.0 {
            return Err(Error::NegativeRate(self.kappa));
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::single_cavity()
    }
}

/// Per-site JC term with the given photon and atom frequencies.
fn site_jc(dims: HilbertDims, omega_photon: f64, omega_atom: f64, g: f64) -> Operator {
    let a = fock_annihilation(dims);
    let s = atomic_lowering(dims);
    let ad = a.adjoint();
    let sp = s.adjoint();
    let free = &(&sp * &s).scale(re(omega_atom)) + &(&ad * &a).scale(re(omega_photon));
    let coupling = (&(&ad * &s) + &(&sp * &a)).scale(re(g));
    &free + &coupling
}

fn sum_over_sites(local: &Operator, dims: HilbertDims) -> Result<Operator> {
    let mut total = Operator::zeros(dims);
    for site in 0..dims.n_cavities() {
        total = &total + &embed_site(local, site, dims)?;
    }
    Ok(total)
}

/// Sum over sites of omega^a s+s- + omega^c a^dagger a + g(a^dagger s- + s+ a).
pub fn build_h_jc(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    let dims = params.dims()?;
    sum_over_sites(&site_jc(dims, params.omega_c, params.omega_a(), params.g), dims)
}

/// J (a_0^dagger a_1 + a_1^dagger a_0).
pub fn build_h_hop(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    let dims = params.dims()?;
    if dims.n_cavities() != 2 {
        return Err(Error::RequiresTwoCavities("build_h_hop"));
    }
    let a0 = site_annihilation(dims, 0)?;
    let a1 = site_annihilation(dims, 1)?;
    Ok((&(&a0.adjoint() * &a1) + &(&a1.adjoint() * &a0)).scale(re(params.j)))
}

/// H_JC, plus H_hop when there are two cavities.
pub fn build_h_jch(params: &SystemParams) -> Result<Operator> {
    let h = build_h_jc(params)?;
    if params.n_cavities == 2 {
        Ok(&h + &build_h_hop(params)?)
    } else {
        Ok(h)
    }
}

/// Per-site polariton energies (polariton order) with cavity frequency `omega`
/// and atomic frequency `omega + delta`.
fn site_polariton_energies(n_fock: usize, omega: f64, g: f64, delta: f64) -> Vec<f64> {
    PolaritonLabel::all(n_fock)
        .into_iter()
        .map(|l| match l {
            PolaritonLabel::Ground => 0.0,
            PolaritonLabel::Dressed { n, branch } => dressed_energy(n, branch, omega, g, delta),
            PolaritonLabel::Top => n_fock as f64 * omega + omega + delta,
        })
        .collect()
}

fn diagonal_sum(dims: HilbertDims, site_energies: &[f64]) -> Result<Operator> {
    let n = dims.total_dim();
    let mut data = Array2::zeros((n, n));
    for i in 0..n {
        let e: f64 = dims.split_index(i).iter().map(|&s| site_energies[s]).sum();
        data[[i, i]] = re(e);
    }
    Operator::new(dims, data)
}

/// Diagonal JC Hamiltonian in the polariton product basis.
pub fn build_h_jc_polariton(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    let e = site_polariton_energies(params.n_fock, params.omega_c, params.g, params.delta);
    diagonal_sum(params.dims()?, &e)
}

/// Hopping assembled from the polariton ladder families, expressed in the
/// polariton basis. Agrees with the bare hopping below the cutoff.
pub fn build_h_hop_polariton(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    let dims = params.dims()?;
    if dims.n_cavities() != 2 {
        return Err(Error::RequiresTwoCavities("build_h_hop_polariton"));
    }
    let basis = PolaritonBasis::from_params(params)?;
    let table = CoefficientTable::new(&basis)?;
    let create = ladder_families(&basis, &table, LadderKind::Photonic)?.sum();
    let c0 = embed_site(&create, 0, dims)?;
    let c1 = embed_site(&create, 1, dims)?;
    let hop = (&(&c0 * &c1.adjoint()) + &(&c1 * &c0.adjoint())).scale(re(params.j));
    basis.to_polariton(&hop)
}

fn check_rotating_frame(params: &SystemParams) -> Result<()> {
    if params.delta_1().abs() > 1e-12 * params.omega_c.abs().max(1.0) {
        return Err(Error::Unsupported(format!(
            "driven model needs omega_p = omega_l (Delta_1 = {})",
            params.delta_1()
        )));
    }
    Ok(())
}

/// Driven JC in the frame rotating with the drives (Delta_1 = 0):
/// Delta_a s+s- + Delta_c a^dagger a + g(a^dagger s- + s+ a) plus
/// i Omega (s+ - s-) + i alpha (a^dagger - a), summed over sites, with
/// hopping for two cavities.
pub fn build_h_driven(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    check_rotating_frame(params)?;
    let dims = params.dims()?;
    let a = fock_annihilation(dims);
    let s = atomic_lowering(dims);
    let drive = &(&s.adjoint() - &s).scale(im(params.omega_drive))
        + &(&a.adjoint() - &a).scale(im(params.alpha));
    let local = &site_jc(dims, params.delta_c(), params.delta_a(), params.g) + &drive;
    let h = sum_over_sites(&local, dims)?;
    if dims.n_cavities() == 2 {
        Ok(&h + &build_h_hop(params)?)
    } else {
        Ok(h)
    }
}

/// Drive amplitudes beta_{n+-}, xi_{n pm}, xi_{n mp} of one manifold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDrive {
    pub n: usize,
    pub beta_plus: C64,
    pub beta_minus: C64,
    /// Absent for n = 1.
    pub xi_pm: Option<C64>,
    /// Absent for n = 1.
    pub xi_mp: Option<C64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivenPolaritonCoefficients {
    pub manifolds: Vec<ManifoldDrive>,
}

impl DrivenPolaritonCoefficients {
    pub fn get(&self, n: usize) -> Result<&ManifoldDrive> {
        if n == 0 {
            return Err(Error::ZeroManifold);
        }
        self.manifolds.get(n - 1).ok_or(Error::ManifoldAboveCutoff {
            n,
            n_fock: self.manifolds.len(),
        })
    }

    pub fn beta(&self, n: usize, branch: Branch) -> Result<C64> {
        let m = self.get(n)?;
        Ok(match branch {
            Branch::Plus => m.beta_plus,
            Branch::Minus => m.beta_minus,
        })
    }

    /// xi_{n pm} (into |n+> from |(n-1)->), zero for n = 1.
    pub fn xi_pm(&self, n: usize) -> Result<C64> {
        Ok(self.get(n)?.xi_pm.unwrap_or_default())
    }

    /// xi_{n mp} (into |n-> from |(n-1)+>), zero for n = 1.
    pub fn xi_mp(&self, n: usize) -> Result<C64> {
        Ok(self.get(n)?.xi_mp.unwrap_or_default())
    }
}

/// beta = i Omega c^a + i alpha c, xi = i Omega k^a + i alpha k per manifold.
pub fn drive_coefficients(params: &SystemParams) -> Result<DrivenPolaritonCoefficients> {
    params.validate()?;
    let basis = PolaritonBasis::from_params(params)?;
    let table = CoefficientTable::new(&basis)?;
    let (om, al) = (params.omega_drive, params.alpha);
    let manifolds = table
        .entries()
        .iter()
        .map(|c| ManifoldDrive {
            n: c.n,
            beta_plus: im(om * c.ca_plus + al * c.c_plus),
            beta_minus: im(om * c.ca_minus + al * c.c_minus),
            xi_pm: (c.n >= 2).then(|| im(om * c.ka_pm + al * c.k_pm)),
            xi_mp: (c.n >= 2).then(|| im(om * c.ka_mp + al * c.k_mp)),
        })
        .collect();
    Ok(DrivenPolaritonCoefficients { manifolds })
}

/// Single-site driven Hamiltonian assembled term by term in the polariton
/// basis: diagonal rotating-frame energies plus beta (L^dagger - L) and
/// xi (L^dagger - L) drive terms. The truncation leaves `Top` uncoupled.
pub fn build_h_driven_polariton(params: &SystemParams) -> Result<Operator> {
    params.validate()?;
    check_rotating_frame(params)?;
    if params.n_cavities != 1 {
        return Err(Error::Unsupported(
            "polariton-form driven Hamiltonian is single-cavity".into(),
        ));
    }
    let dims = params.dims()?;
    let nf = params.n_fock;
    let energies = site_polariton_energies(nf, params.delta_c(), params.g, params.delta);
    let mut h = diagonal_sum(dims, &energies)?.into_data();
    let coef = drive_coefficients(params)?;
    let idx = |l: PolaritonLabel| l.index(nf).expect("label within cutoff");
    let prev = |n: usize, b: Branch| {
        if n == 1 {
            PolaritonLabel::Ground
        } else {
            PolaritonLabel::Dressed { n: n - 1, branch: b }
        }
    };
    let mut put = |to: PolaritonLabel, from: PolaritonLabel, amp: C64| {
        h[[idx(to), idx(from)]] += amp;
        h[[idx(from), idx(to)]] -= amp;
    };
    for m in &coef.manifolds {
        let n = m.n;
        put(PolaritonLabel::plus(n), prev(n, Branch::Plus), m.beta_plus);
        put(PolaritonLabel::minus(n), prev(n, Branch::Minus), m.beta_minus);
        if let Some(x) = m.xi_pm {
            put(PolaritonLabel::plus(n), prev(n, Branch::Minus), x);
        }
        if let Some(x) = m.xi_mp {
            put(PolaritonLabel::minus(n), prev(n, Branch::Plus), x);
        }
    }
    Operator::new(dims, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RabiEstimate {
    pub omega_r: f64,
    pub period: f64,
}

/// Omega_R = 2 sqrt(g^2 + (Omega^2 / Delta_c)^2), T = 2 pi / Omega_R.
pub fn rabi_frequency(params: &SystemParams) -> Result<RabiEstimate> {
    let dc = params.delta_c();
    if dc == 0.0 {
        return Err(Error::FormulaInapplicable(
            "Rabi estimate needs a nonzero cavity detuning".into(),
        ));
    }
    let shift = params.omega_drive * params.omega_drive / dc;
    let omega_r = 2.0 * (params.g * params.g + shift * shift).sqrt();
    Ok(RabiEstimate {
        omega_r,
        period: 2.0 * std::f64::consts::PI / omega_r,
    })
}

/// 2x2 action of V_I(m) on manifold `n` in the bare basis (|n,g>, |n-1,e>).
pub fn stroboscopic_block(g: f64, m: i64, n: usize) -> Result<[[C64; 2]; 2]> {
    if n == 0 {
        return Err(Error::ZeroManifold);
    }
    let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let v = sign * g * (n as f64).sqrt();
    Ok([[re(0.0), im(v)], [im(-v), re(0.0)]])
}

/// V_I(m) = 2g(-1)^m S_y with S_y = (s+ a - a^dagger s-)/(2i), summed over
/// sites. exp(-i V_I t)|n-> = cos(g sqrt(n) t)|n-> - sin(g sqrt(n) t)|n+> for
/// even m; odd m reverses the rotation.
pub fn build_stroboscopic_vi(params: &SystemParams, m: i64) -> Result<Operator> {
    params.validate()?;
    let dims = params.dims()?;
    let a = fock_annihilation(dims);
    let s = atomic_lowering(dims);
    let sy = (&(&s.adjoint() * &a) - &(&a.adjoint() * &s)).scale(C64::new(0.0, -0.5));
    let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sum_over_sites(&sy.scale(re(2.0 * params.g * sign)), dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{self, expm_hermitian};
    use crate::operator_core::{total_excitation, Ket};
    use crate::polariton_basis::polariton_energy;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn one(delta: f64) -> SystemParams {
        SystemParams {
            delta,
            omega_c: 100.0,
            ..SystemParams::single_cavity()
        }
    }

    fn two(delta: f64, j: f64) -> SystemParams {
        SystemParams {
            delta,
            j,
            omega_c: 100.0,
            ..SystemParams::two_cavity()
        }
    }

    #[test]
    fn derived_detunings() {
        let p = SystemParams {
            delta: 0.5,
            ..SystemParams::single_cavity()
        }
        .with_drive_detunings(3.0, 2.0);
        assert_abs_diff_eq!(p.delta_a(), 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.delta_c(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.delta_1(), 0.5, epsilon = 1e-9);
        let q = p.with_cavity_detuning(0.3);
        assert_abs_diff_eq!(q.delta_1(), 0.0, epsilon = 1e-9);
        assert!(SystemParams { g: 0.0, ..one(0.0) }.validate().is_err());
        assert!(SystemParams { gamma: -1.0, ..one(0.0) }.validate().is_err());
    }

    #[test]
    fn jc_spectrum_matches_polariton_energies() {
        for delta in [0.0, 1.7] {
            let p = one(delta);
            let h = build_h_jc(&p).unwrap();
            let mut got = linalg::eigvalsh(&h.data().view()).unwrap().to_vec();
            let mut want: Vec<f64> = PolaritonLabel::all(p.n_fock)
                .into_iter()
                .map(|l| polariton_energy(l, &p).unwrap())
                .collect();
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            for (a, b) in got.iter().zip(&want) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn uncoupled_jc_is_diagonal() {
        let p = SystemParams { g: 1e-300, ..one(0.3) };
        let h = build_h_jc(&p).unwrap();
        let mut off = h.into_data();
        for i in 0..off.nrows() {
            off[[i, i]] = re(0.0);
        }
        assert!(linalg::max_abs(&off.view()) < 1e-290);
    }

    #[test]
    fn hopping_elements() {
        let p = two(0.0, 0.37);
        let d = p.dims().unwrap();
        let h = build_h_hop(&p).unwrap();
        let g1 = HilbertDims::site_index(1, false);
        let g0 = HilbertDims::site_index(0, false);
        let from = Ket::basis(d, d.product_index(&[g1, g0]).unwrap()).unwrap();
        let to = Ket::basis(d, d.product_index(&[g0, g1]).unwrap()).unwrap();
        assert_abs_diff_eq!(h.matrix_element(&to, &from).unwrap().re, 0.37);
        assert_eq!(build_h_hop(&two(0.0, 0.0)).unwrap().frobenius_norm(), 0.0);
        assert!(matches!(build_h_hop(&one(0.0)), Err(Error::RequiresTwoCavities(_))));
    }

    #[test]
    fn hamiltonians_conserve_excitations() {
        let p = two(0.8, 0.3);
        let n = total_excitation(p.dims().unwrap());
        for h in [build_h_jc(&p).unwrap(), build_h_hop(&p).unwrap()] {
            assert!(h.is_hermitian(1e-12));
            assert!(h.commutator(&n).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn polariton_form_is_unitarily_equivalent() {
        for p in [one(0.0), one(-2.0), two(1.5, 0.2)] {
            let b = PolaritonBasis::from_params(&p).unwrap();
            let diag = build_h_jc_polariton(&p).unwrap();
            let bare = b.to_bare(&diag).unwrap();
            let h = build_h_jc(&p).unwrap();
            assert!(linalg::max_abs(&(bare.data() - h.data()).view()) < 1e-10);
            assert!((diag.trace() - h.trace()).norm() < 1e-9);
            assert_eq!(diag.data()[[0, 0]], re(0.0));
        }
    }

    #[test]
    fn polariton_hopping_matches_bare_below_cutoff() {
        let p = two(0.6, 0.25);
        let b = PolaritonBasis::from_params(&p).unwrap();
        let exact = b.to_polariton(&build_h_hop(&p).unwrap()).unwrap();
        let fam = build_h_hop_polariton(&p).unwrap();
        let d = p.dims().unwrap();
        let top = PolaritonLabel::Top.index(p.n_fock).unwrap();
        for i in 0..d.total_dim() {
            for j in 0..d.total_dim() {
                let touches_top = d.split_index(i).contains(&top) || d.split_index(j).contains(&top);
                if !touches_top {
                    assert!((exact.data()[[i, j]] - fam.data()[[i, j]]).norm() < 1e-12);
                }
            }
        }
    }

    fn driven(omega: f64, alpha: f64, delta: f64, delta_c: f64) -> SystemParams {
        SystemParams {
            omega_drive: omega,
            alpha,
            ..one(delta)
        }
        .with_cavity_detuning(delta_c)
    }

    #[test]
    fn driven_hamiltonian_limits() {
        let p = driven(0.0, 0.0, 0.4, 2.0);
        let h = build_h_driven(&p).unwrap();
        let jc = build_h_jc(&SystemParams { omega_c: 2.0, ..one(0.4) }).unwrap();
        assert!(linalg::max_abs(&(h.data() - jc.data()).view()) < 1e-12);
        let pd = driven(0.3, 0.2, 0.4, 2.0);
        assert!(build_h_driven(&pd).unwrap().is_hermitian(1e-12));
        let bad = SystemParams { omega_l: 0.0, ..pd };
        assert!(matches!(build_h_driven(&bad), Err(Error::Unsupported(_))));
    }

    #[test]
    fn driven_polariton_assembly_matches_transform() {
        for (om, al, delta) in [(0.3, 0.2, 0.0), (1.1, -0.4, 0.9), (0.0, 0.5, -1.2)] {
            let p = driven(om, al, delta, 0.7);
            let b = PolaritonBasis::from_params(&p).unwrap();
            let rotated = b.to_polariton(&build_h_driven(&p).unwrap()).unwrap();
            let assembled = build_h_driven_polariton(&p).unwrap();
            let top = PolaritonLabel::Top.index(p.n_fock).unwrap();
            for i in 0..rotated.data().nrows() {
                for j in 0..rotated.data().ncols() {
                    if i != top && j != top {
                        let diff = (rotated.data()[[i, j]] - assembled.data()[[i, j]]).norm();
                        assert!(diff < 1e-12, "entry ({i},{j}) differs by {diff}");
                    }
                }
            }
            let e1 = linalg::eigvalsh(&rotated.data().view()).unwrap();
            let e2 = linalg::eigvalsh(&build_h_driven(&p).unwrap().data().view()).unwrap();
            for (x, y) in e1.iter().zip(e2.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn drive_coefficients_are_imaginary() {
        let p = driven(0.7, 0.0, 0.0, 0.3);
        let c = drive_coefficients(&p).unwrap();
        let th1 = std::f64::consts::FRAC_PI_4;
        assert_abs_diff_eq!(c.beta(1, Branch::Minus).unwrap().im, -0.7 * th1.sin(), epsilon = 1e-15);
        assert!(c.get(1).unwrap().xi_pm.is_none());
        for m in &c.manifolds {
            assert_eq!(m.beta_plus.re, 0.0);
            assert_eq!(m.beta_minus.re, 0.0);
        }
        let off = drive_coefficients(&driven(0.0, 0.0, 0.0, 0.3)).unwrap();
        assert!(off.manifolds.iter().all(|m| m.beta_plus.norm() == 0.0 && m.xi_mp.unwrap_or_default().norm() == 0.0));
    }

    #[test]
    fn rabi_estimate() {
        let p = SystemParams {
            omega_drive: 50.0,
            ..SystemParams::single_cavity()
        }
        .with_drive_detunings(500.0, 500.0);
        let r = rabi_frequency(&p).unwrap();
        assert_abs_diff_eq!(r.omega_r, 2.0 * 26f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.period, PI / 26f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.period, 0.616, epsilon = 1e-3);
        let weak = SystemParams { omega_drive: 1e-6, ..p.clone() };
        assert_abs_diff_eq!(rabi_frequency(&weak).unwrap().omega_r, 2.0, epsilon = 1e-12);
        let res = p.with_drive_detunings(0.0, 0.0);
        assert!(matches!(rabi_frequency(&res), Err(Error::FormulaInapplicable(_))));
    }

    #[test]
    fn stroboscopic_quarter_period_lands_on_upper_branch() {
        let p = one(1.3);
        let b = PolaritonBasis::from_params(&p).unwrap();
        let v = build_stroboscopic_vi(&p, 0).unwrap();
        let u = expm_hermitian(&v.data().view(), PI / 2.0).unwrap();
        let psi = u.dot(b.ket(PolaritonLabel::minus(1)).unwrap().amplitudes());
        let up = b.ket(PolaritonLabel::plus(1)).unwrap();
        let overlap: C64 = up.amplitudes().iter().zip(psi.iter()).map(|(a, x)| a.conj() * x).sum();
        assert!((overlap + re(1.0)).norm() < 1e-12);
    }

    #[test]
    fn stroboscopic_block_matches_full_operator() {
        let p = one(0.0);
        let v = build_stroboscopic_vi(&p, 3).unwrap();
        for n in 1..=p.n_fock {
            let blk = stroboscopic_block(p.g, 3, n).unwrap();
            let ig = HilbertDims::site_index(n, false);
            let ie = HilbertDims::site_index(n - 1, true);
            let idx = [ig, ie];
            for r in 0..2 {
                for c in 0..2 {
                    assert!((v.data()[[idx[r], idx[c]]] - blk[r][c]).norm() < 1e-15);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn stroboscopic_rotation_every_manifold(
            gt in -6.0f64..6.0, delta in -5.0f64..5.0, m in -3i64..4,
        ) {
            let p = one(delta);
            let b = PolaritonBasis::from_params(&p).unwrap();
            let u = expm_hermitian(&build_stroboscopic_vi(&p, m).unwrap().data().view(), gt).unwrap();
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            for n in 1..=p.n_fock {
                let lo = b.ket(PolaritonLabel::minus(n)).unwrap();
                let hi = b.ket(PolaritonLabel::plus(n)).unwrap();
                let phi = sign * gt * (n as f64).sqrt();
                let got = u.dot(lo.amplitudes());
                let want = lo.amplitudes().mapv(|z| z * phi.cos()) - hi.amplitudes().mapv(|z| z * phi.sin());
                let err = got.iter().zip(want.iter()).map(|(a, w)| (a - w).norm()).fold(0.0, f64::max);
                prop_assert!(err < 1e-10);
            }
        }

        #[test]
        fn builders_are_hermitian(delta in -3.0f64..3.0, j in -0.5f64..0.5, om in -2.0f64..2.0, al in -2.0f64..2.0) {
            let p = SystemParams { omega_drive: om, alpha: al, ..two(delta, j) }.with_cavity_detuning(0.4);
            for h in [build_h_jc(&p).unwrap(), build_h_hop(&p).unwrap(), build_h_driven(&p).unwrap(), build_stroboscopic_vi(&p, 1).unwrap()] {
                prop_assert!(h.is_hermitian(1e-12));
            }
        }
    }
}
