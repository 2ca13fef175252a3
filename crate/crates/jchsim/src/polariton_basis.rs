//! Dressed-state machinery: mixing angles, polariton kets and energies, the
//! ladder coefficient tables and the decomposition of `a^dagger` and
//! `sigma^+` into the four polariton ladder families.
//!
//! Per site the polariton ordering is `G, 1-, 1+, 2-, 2+, ..., Nf-, Nf+, Top`
//! where `Top` is the uncoupled bare state |Nf, e>. Manifold `n` occupies the
//! same two indices (`2n-1`, `2n`) as its bare states |n-1,e>, |n,g>.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::SystemParams;
use crate::linalg::re;
use crate::operator_core::{
    atomic_lowering, embed_site, fock_annihilation, HilbertDims, Ket, Operator,
};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Minus,
    Plus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Minus => -1.0,
            Branch::Plus => 1.0,
        }
    }

    pub fn opposite(self) -> Branch {
        match self {
            Branch::Minus => Branch::Plus,
            Branch::Plus => Branch::Minus,
        }
    }

    fn symbol(self) -> char {
        match self {
            Branch::Minus => '-',
            Branch::Plus => '+',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolaritonLabel {
    /// |0 g>
    Ground,
    /// |n +/->
    Dressed { n: usize, branch: Branch },
    /// The uncoupled |Nf, e> left over by the truncation.
    Top,
}

impl PolaritonLabel {
    pub fn minus(n: usize) -> Self {
        PolaritonLabel::Dressed {
            n,
            branch: Branch::Minus,
        }
    }

    pub fn plus(n: usize) -> Self {
        PolaritonLabel::Dressed {
            n,
            branch: Branch::Plus,
        }
    }

    /// Excitation number; `Top` carries `n_fock + 1`.
    pub fn manifold(&self, n_fock: usize) -> usize {
        match self {
            PolaritonLabel::Ground => 0,
            PolaritonLabel::Dressed { n, .. } => *n,
            PolaritonLabel::Top => n_fock + 1,
        }
    }

    pub fn branch(&self) -> Option<Branch> {
        match self {
            PolaritonLabel::Dressed { branch, .. } => Some(*branch),
            _ => None,
        }
    }

    /// Position in the per-site polariton ordering.
    pub fn index(&self, n_fock: usize) -> Result<usize> {
        match *self {
            PolaritonLabel::Ground => Ok(0),
            PolaritonLabel::Dressed { n, branch } => {
                if n == 0 {
                    return Err(Error::ZeroManifold);
                }
                if n > n_fock {
                    return Err(Error::ManifoldAboveCutoff { n, n_fock });
                }
                Ok(match branch {
                    Branch::Minus => 2 * n - 1,
                    Branch::Plus => 2 * n,
                })
            }
            PolaritonLabel::Top => Ok(2 * n_fock + 1),
        }
    }

    pub fn from_index(index: usize, n_fock: usize) -> Result<Self> {
        match index {
            0 => Ok(PolaritonLabel::Ground),
            i if i == 2 * n_fock + 1 => Ok(PolaritonLabel::Top),
            i if i < 2 * n_fock + 1 => Ok(PolaritonLabel::Dressed {
                n: i.div_ceil(2),
                branch: if i % 2 == 1 { Branch::Minus } else { Branch::Plus },
            }),
            i => Err(Error::InvalidState(format!("polariton index {i} out of range"))),
        }
    }

    /// All labels of one site in polariton order.
    pub fn all(n_fock: usize) -> Vec<Self> {
        (0..2 * (n_fock + 1))
            .map(|i| Self::from_index(i, n_fock).expect("in range"))
            .collect()
    }
}

impl fmt::Display for PolaritonLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolaritonLabel::Ground => write!(f, "G"),
            PolaritonLabel::Dressed { n, branch } => write!(f, "{n}{}", branch.symbol()),
            PolaritonLabel::Top => write!(f, "top"),
        }
    }
}

impl FromStr for PolaritonLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t {
            "G" | "g" | "0" => return Ok(PolaritonLabel::Ground),
            "top" => return Ok(PolaritonLabel::Top),
            _ => {}
        }
        let (num, last) = t.split_at(t.len().saturating_sub(1));
        let branch = match last {
            "-" => Branch::Minus,
            "+" => Branch::Plus,
            _ => return Err(Error::UnknownState(s.to_string())),
        };
        let n: usize = num.parse().map_err(|_| Error::UnknownState(s.to_string()))?;
        if n == 0 {
            return Err(Error::UnknownState(s.to_string()));
        }
        Ok(PolaritonLabel::Dressed { n, branch })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingAngle {
    pub n: usize,
    pub theta: f64,
}

/// theta_n = 1/2 atan2(g sqrt(n), Delta/2).
pub fn mixing_angle(n: usize, g: f64, delta: f64) -> Result<MixingAngle> {
    if n == 0 {
        return Err(Error::ZeroManifold);
    }
    if !(g > 0.0) {
        return Err(Error::InvalidParameter(format!("g = {g} must be positive")));
    }
    Ok(MixingAngle {
        n,
        theta: 0.5 * (g * (n as f64).sqrt()).atan2(0.5 * delta),
    })
}

/// R_n = sqrt(Delta^2 + 4 g^2 n), the splitting E_{n+} - E_{n-}. R_0 = |Delta|.
pub fn splitting(n: usize, g: f64, delta: f64) -> f64 {
    (delta * delta + 4.0 * g * g * n as f64).sqrt()
}

/// E_{n,branch} = omega n + Delta/2 +/- R_n/2 with `omega` the cavity
/// frequency (or the cavity detuning in a rotating frame).
pub fn dressed_energy(n: usize, branch: Branch, omega: f64, g: f64, delta: f64) -> f64 {
    omega * n as f64 + 0.5 * delta + 0.5 * branch.sign() * splitting(n, g, delta)
}

/// Energy of a polariton level; `Top` is the bare energy of |Nf, e>.
pub fn polariton_energy(label: PolaritonLabel, params: &SystemParams) -> Result<f64> {
    Ok(match label {
        PolaritonLabel::Ground => 0.0,
        PolaritonLabel::Dressed { n, branch } => {
            if n == 0 {
                return Err(Error::ZeroManifold);
            }
            dressed_energy(n, branch, params.omega_c, params.g, params.delta)
        }
        PolaritonLabel::Top => params.n_fock as f64 * params.omega_c + params.omega_a(),
    })
}

/// Single-site polariton ket at mixing angle `theta` (ignored for G and Top).
pub fn polariton_ket(label: PolaritonLabel, theta: f64, dims: HilbertDims) -> Result<Ket> {
    let site = dims.single_site();
    let nf = dims.n_fock();
    let mut amps = ndarray::Array1::zeros(site.total_dim());
    match label {
        PolaritonLabel::Ground => amps[HilbertDims::site_index(0, false)] = re(1.0),
        PolaritonLabel::Top => amps[HilbertDims::site_index(nf, true)] = re(1.0),
        PolaritonLabel::Dressed { n, branch } => {
            label.index(nf)?;
            let (ng, ne) = (
                HilbertDims::site_index(n, false),
                HilbertDims::site_index(n - 1, true),
            );
            let (c, s) = (theta.cos(), theta.sin());
            match branch {
                Branch::Minus => {
                    amps[ng] = re(c);
                    amps[ne] = re(-s);
                }
                Branch::Plus => {
                    amps[ng] = re(s);
                    amps[ne] = re(c);
                }
            }
        }
    }
    Ket::new(site, amps)
}

/// Mixing angles and change-of-basis matrix for one site.
#[derive(Clone, Debug)]
pub struct PolaritonBasis {
    dims: HilbertDims,
    g: f64,
    delta: f64,
    thetas: Vec<f64>,
    unitary: Array2<C64>,
}

impl PolaritonBasis {
    pub fn new(dims: HilbertDims, g: f64, delta: f64) -> Result<Self> {
        let site = dims.single_site();
        let nf = dims.n_fock();
        let thetas = (1..=nf)
            .map(|n| mixing_angle(n, g, delta).map(|m| m.theta))
            .collect::<Result<Vec<_>>>()?;
        let d = site.total_dim();
        let mut unitary = Array2::zeros((d, d));
        for (col, label) in PolaritonLabel::all(nf).into_iter().enumerate() {
            let theta = match label {
                PolaritonLabel::Dressed { n, .. } => thetas[n - 1],
                _ => 0.0,
            };
            let ket = polariton_ket(label, theta, site)?;
            unitary.column_mut(col).assign(ket.amplitudes());
        }
        Ok(Self {
            dims: site,
            g,
            delta,
            thetas,
            unitary,
        })
    }

    pub fn from_params(params: &SystemParams) -> Result<Self> {
        Self::new(params.dims()?, params.g, params.delta)
    }

    pub fn dims(&self) -> HilbertDims {
        self.dims
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_fock(&self) -> usize {
        self.dims.n_fock()
    }

    pub fn theta(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::ZeroManifold);
        }
        self.thetas
            .get(n - 1)
            .copied()
            .ok_or(Error::ManifoldAboveCutoff {
                n,
                n_fock: self.n_fock(),
            })
    }

    pub fn labels(&self) -> Vec<PolaritonLabel> {
        PolaritonLabel::all(self.n_fock())
    }

    pub fn ket(&self, label: PolaritonLabel) -> Result<Ket> {
        let theta = match label {
            PolaritonLabel::Dressed { n, .. } => self.theta(n)?,
            _ => 0.0,
        };
        polariton_ket(label, theta, self.dims)
    }

    /// |l0> (x) |l1> on two sites.
    pub fn two_site_ket(&self, l0: PolaritonLabel, l1: PolaritonLabel) -> Result<Ket> {
        self.ket(l0)?.kron(&self.ket(l1)?)
    }

    /// Columns are the polariton kets in polariton order.
    pub fn unitary(&self) -> &Array2<C64> {
        &self.unitary
    }

    /// Change of basis on `dims` (one factor per site).
    pub fn change_of_basis(&self, dims: HilbertDims) -> Result<Operator> {
        if dims.single_site() != self.dims {
            return Err(Error::DimensionMismatch {
                op: "change_of_basis",
                expected: self.dims.total_dim(),
                found: dims.site_dim(),
            });
        }
        let mut u: Array2<C64> = Array2::eye(1);
        for _ in 0..dims.n_cavities() {
            u = ndarray::linalg::kron(&u, &self.unitary);
        }
        Operator::new(dims, u)
    }

    /// Expresses a bare-basis operator in the polariton basis: U^dagger O U.
    pub fn to_polariton(&self, op: &Operator) -> Result<Operator> {
        let u = self.change_of_basis(op.dims())?;
        Ok(&(&u.adjoint() * op) * &u)
    }

    /// Inverse of `to_polariton`.
    pub fn to_bare(&self, op: &Operator) -> Result<Operator> {
        let u = self.change_of_basis(op.dims())?;
        Ok(&(&u * op) * &u.adjoint())
    }
}

/// The eight ladder coefficients of manifold `n` (creation direction n-1 -> n).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolaritonCoefficients {
    pub n: usize,
    pub c_plus: f64,
    pub c_minus: f64,
    pub k_pm: f64,
    pub k_mp: f64,
    pub ca_plus: f64,
    pub ca_minus: f64,
    pub ka_pm: f64,
    pub ka_mp: f64,
}

/// Coefficients for manifold `n`; `theta_prev` is ignored for n = 1.
pub fn coefficients(n: usize, theta_n: f64, theta_prev: f64) -> Result<PolaritonCoefficients> {
    if n == 0 {
        return Err(Error::ZeroManifold);
    }
    let (s, c) = theta_n.sin_cos();
    if n == 1 {
        return Ok(PolaritonCoefficients {
            n,
            c_plus: s,
            c_minus: c,
            k_pm: 0.0,
            k_mp: 0.0,
            ca_plus: c,
            ca_minus: -s,
            ka_pm: 0.0,
            ka_mp: 0.0,
        });
    }
    let (sp, cp) = theta_prev.sin_cos();
    let rn = (n as f64).sqrt();
    let rm = ((n - 1) as f64).sqrt();
    Ok(PolaritonCoefficients {
        n,
        c_plus: rn * s * sp + rm * c * cp,
        c_minus: rn * c * cp + rm * s * sp,
        k_pm: rn * s * cp - rm * c * sp,
        k_mp: rn * c * sp - rm * s * cp,
        ca_plus: c * sp,
        ca_minus: -s * cp,
        ka_pm: c * cp,
        ka_mp: -s * sp,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    entries: Vec<PolaritonCoefficients>,
}

impl CoefficientTable {
    pub fn new(basis: &PolaritonBasis) -> Result<Self> {
        let entries = (1..=basis.n_fock())
            .map(|n| {
                let prev = if n > 1 { basis.theta(n - 1)? } else { 0.0 };
                coefficients(n, basis.theta(n)?, prev)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn from_entries(entries: Vec<PolaritonCoefficients>) -> Self {
        Self { entries }
    }

    pub fn get(&self, n: usize) -> Result<&PolaritonCoefficients> {
        if n == 0 {
            return Err(Error::ZeroManifold);
        }
        self.entries.get(n - 1).ok_or(Error::ManifoldAboveCutoff {
            n,
            n_fock: self.entries.len(),
        })
    }

    pub fn entries(&self) -> &[PolaritonCoefficients] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [PolaritonCoefficients] {
        &mut self.entries
    }
}

/// The four creation-type ladder families on a single site, bare basis.
#[derive(Clone, Debug)]
pub struct LadderFamilies {
    pub plus: Operator,
    pub minus: Operator,
    pub pm: Operator,
    pub mp: Operator,
}

impl LadderFamilies {
    pub fn sum(&self) -> Operator {
        &(&(&self.plus + &self.minus) + &self.pm) + &self.mp
    }

    /// The lowering families (adjoints).
    pub fn lowering(&self) -> LadderFamilies {
        LadderFamilies {
            plus: self.plus.adjoint(),
            minus: self.minus.adjoint(),
            pm: self.pm.adjoint(),
            mp: self.mp.adjoint(),
        }
    }
}

/// Places every family of a single-site set on `site` of `dims`.
pub fn embed_site_families(
    fam: &LadderFamilies,
    site: usize,
    dims: HilbertDims,
) -> Result<LadderFamilies> {
    Ok(LadderFamilies {
        plus: embed_site(&fam.plus, site, dims)?,
        minus: embed_site(&fam.minus, site, dims)?,
        pm: embed_site(&fam.pm, site, dims)?,
        mp: embed_site(&fam.mp, site, dims)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderKind {
    Photonic,
    Atomic,
}

/// Builds the families from a coefficient table, so corrupted tables can be
/// fed through the same path.
pub fn ladder_families(
    basis: &PolaritonBasis,
    table: &CoefficientTable,
    kind: LadderKind,
) -> Result<LadderFamilies> {
    let site = basis.dims();
    let mut fam = LadderFamilies {
        plus: Operator::zeros(site),
        minus: Operator::zeros(site),
        pm: Operator::zeros(site),
        mp: Operator::zeros(site),
    };
    let prev = |n: usize, b: Branch| {
        if n == 1 {
            PolaritonLabel::Ground
        } else {
            PolaritonLabel::Dressed { n: n - 1, branch: b }
        }
    };
    let term = |to: PolaritonLabel, from: PolaritonLabel, coef: f64| -> Result<Operator> {
        Ok(Operator::outer(&basis.ket(to)?, &basis.ket(from)?)?.scale(re(coef)))
    };
    for n in 1..=basis.n_fock() {
        let c = table.get(n)?;
        let (cp, cm, kpm, kmp) = match kind {
            LadderKind::Photonic => (c.c_plus, c.c_minus, c.k_pm, c.k_mp),
            LadderKind::Atomic => (c.ca_plus, c.ca_minus, c.ka_pm, c.ka_mp),
        };
        let up = PolaritonLabel::plus(n);
        let lo = PolaritonLabel::minus(n);
        fam.plus = &fam.plus + &term(up, prev(n, Branch::Plus), cp)?;
        fam.minus = &fam.minus + &term(lo, prev(n, Branch::Minus), cm)?;
        if n >= 2 {
            fam.pm = &fam.pm + &term(up, prev(n, Branch::Minus), kpm)?;
            fam.mp = &fam.mp + &term(lo, prev(n, Branch::Plus), kmp)?;
        }
    }
    Ok(fam)
}

/// P_+^dagger, P_-^dagger, P_pm^dagger, P_mp^dagger such that their sum is
/// `a^dagger` on manifolds below the cutoff.
pub fn decompose_creation(dims: HilbertDims, params: &SystemParams) -> Result<LadderFamilies> {
    let basis = PolaritonBasis::new(dims, params.g, params.delta)?;
    ladder_families(&basis, &CoefficientTable::new(&basis)?, LadderKind::Photonic)
}

/// Same as `decompose_creation` for `sigma^+`.
pub fn decompose_atomic_raising(
    dims: HilbertDims,
    params: &SystemParams,
) -> Result<LadderFamilies> {
    let basis = PolaritonBasis::new(dims, params.g, params.delta)?;
    ladder_families(&basis, &CoefficientTable::new(&basis)?, LadderKind::Atomic)
}

/// Largest deviation between the family sum and the bare raising operator on
/// manifolds `<= n_fock - 1`.
pub fn reconstruction_residual(families: &LadderFamilies, kind: LadderKind) -> f64 {
    let dims = families.plus.dims();
    let bare = match kind {
        LadderKind::Photonic => fock_annihilation(dims).adjoint(),
        LadderKind::Atomic => atomic_lowering(dims).adjoint(),
    };
    let diff = (&families.sum() - &bare).into_data();
    // columns 0..2Nf-1 span manifolds 0..Nf-1
    let cols = 2 * dims.n_fock() - 1;
    diff.slice(s![.., ..cols])
        .iter()
        .fold(0.0, |m, z| m.max(z.norm()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProductFamily {
    /// P_+^dagger P_+
    PlusPlus,
    /// P_-^dagger P_-
    MinusMinus,
    /// P_+^dagger P_-
    PlusMinus,
    /// P_+^dagger P_pm
    PlusPm,
    /// P_+^dagger P_mp
    PlusMp,
}

impl ProductFamily {
    pub const ALL: [ProductFamily; 5] = [
        ProductFamily::PlusPlus,
        ProductFamily::MinusMinus,
        ProductFamily::PlusMinus,
        ProductFamily::PlusPm,
        ProductFamily::PlusMp,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub family: ProductFamily,
    pub n: usize,
    pub n_prime: usize,
    /// Exponent frequency of the interaction-picture product.
    pub frequency: f64,
    /// Product of the two ladder coefficients.
    pub amplitude: f64,
    /// The product is identically zero (k_1 = 0).
    pub vanishes: bool,
    /// |frequency| >= 4J and nonzero amplitude.
    pub eliminable: bool,
}

/// Exponent frequency and RWA eligibility of a hopping product
/// `P_{x,j}^dagger P_{y,j+1}` in the interaction picture of H_JC.
/// R_0 is taken as zero in the differences R_n - R_{n-1}.
pub fn interaction_picture_phase(
    family: ProductFamily,
    n: usize,
    n_prime: usize,
    params: &SystemParams,
) -> Result<PhaseReport> {
    if n == 0 || n_prime == 0 {
        return Err(Error::ZeroManifold);
    }
    let r = |m: usize| {
        if m == 0 {
            0.0
        } else {
            splitting(m, params.g, params.delta)
        }
    };
    let step = |m: usize| r(m) - r(m - 1);
    let sum = |m: usize| r(m) + r(m - 1);
    let frequency = match family {
        ProductFamily::PlusPlus => step(n) - step(n_prime),
        ProductFamily::MinusMinus => -(step(n) - step(n_prime)),
        ProductFamily::PlusMinus => step(n) + step(n_prime),
        ProductFamily::PlusPm => step(n) + sum(n_prime),
        ProductFamily::PlusMp => step(n) - sum(n_prime),
    };
    let coef = |m: usize| -> Result<PolaritonCoefficients> {
        let t = mixing_angle(m, params.g, params.delta)?.theta;
        let tp = if m > 1 {
            mixing_angle(m - 1, params.g, params.delta)?.theta
        } else {
            0.0
        };
        coefficients(m, t, tp)
    };
    let (cn, cm) = (coef(n)?, coef(n_prime)?);
    let amplitude = match family {
        ProductFamily::PlusPlus => cn.c_plus * cm.c_plus,
        ProductFamily::MinusMinus => cn.c_minus * cm.c_minus,
        ProductFamily::PlusMinus => cn.c_plus * cm.c_minus,
        ProductFamily::PlusPm => cn.c_plus * cm.k_pm,
        ProductFamily::PlusMp => cn.c_plus * cm.k_mp,
    };
    let vanishes = amplitude == 0.0;
    Ok(PhaseReport {
        family,
        n,
        n_prime,
        frequency,
        amplitude,
        vanishes,
        eliminable: !vanishes && frequency.abs() >= 4.0 * params.j.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::build_h_jc;
    use crate::linalg;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

    fn dims1(nf: usize) -> HilbertDims {
        HilbertDims::new(nf, 1).unwrap()
    }

    fn params(delta: f64, nf: usize) -> SystemParams {
        SystemParams {
            delta,
            n_fock: nf,
            omega_c: 100.0,
            ..SystemParams::single_cavity()
        }
    }

    #[test]
    fn mixing_angle_values() {
        assert_eq!(mixing_angle(1, 1.0, 0.0).unwrap().theta, FRAC_PI_4);
        assert_abs_diff_eq!(mixing_angle(1, 1.0, 2.0).unwrap().theta, FRAC_PI_8, epsilon = 1e-15);
        // independent route: 1/2 arctan(g sqrt(n) / (Delta/2)) for Delta > 0
        let oracle = 0.5 * (1.0f64 / 30.0).atan();
        let theta = mixing_angle(1, 1.0, 60.0).unwrap().theta;
        assert_abs_diff_eq!(theta, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(theta, 0.016_660_5, epsilon = 1e-7);
        assert!(matches!(mixing_angle(0, 1.0, 0.0), Err(Error::ZeroManifold)));
        let neg = mixing_angle(2, 1.0, -3.0).unwrap().theta;
        assert!(neg > FRAC_PI_4 && neg < std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn kets_limits_and_orthogonality() {
        let d = dims1(3);
        let th = mixing_angle(2, 1.0, 0.0).unwrap().theta;
        let minus = polariton_ket(PolaritonLabel::minus(2), th, d).unwrap();
        let plus = polariton_ket(PolaritonLabel::plus(2), th, d).unwrap();
        assert!(minus.inner(&plus).unwrap().norm() < 1e-15);
        let bare = Ket::fock(d, 2, false).unwrap();
        assert_abs_diff_eq!(bare.inner(&minus).unwrap().re, 1.0 / SQRT_2, epsilon = 1e-15);
        let th_far = mixing_angle(2, 1.0, 1e6).unwrap().theta;
        let far_minus = polariton_ket(PolaritonLabel::minus(2), th_far, d).unwrap();
        let far_plus = polariton_ket(PolaritonLabel::plus(2), th_far, d).unwrap();
        assert!(bare.inner(&far_minus).unwrap().norm() > 1.0 - 1e-10);
        let atomic = Ket::fock(d, 1, true).unwrap();
        assert!(atomic.inner(&far_plus).unwrap().norm() > 1.0 - 1e-10);
        assert!(matches!(
            polariton_ket(PolaritonLabel::minus(4), th, d),
            Err(Error::ManifoldAboveCutoff { .. })
        ));
    }

    #[test]
    fn energies() {
        let p = params(0.0, 4);
        assert_abs_diff_eq!(polariton_energy(PolaritonLabel::plus(1), &p).unwrap(), 101.0);
        assert_abs_diff_eq!(polariton_energy(PolaritonLabel::minus(1), &p).unwrap(), 99.0);
        let p = params(1.0, 4);
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(
            polariton_energy(PolaritonLabel::minus(1), &p).unwrap(),
            100.0 + (1.0 - s5) / 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(splitting(2, 1.0, 0.0), 2.0 * SQRT_2);
    }

    #[test]
    fn label_roundtrip() {
        for l in PolaritonLabel::all(4) {
            let i = l.index(4).unwrap();
            assert_eq!(PolaritonLabel::from_index(i, 4).unwrap(), l);
            assert_eq!(l.to_string().parse::<PolaritonLabel>().unwrap(), l);
        }
        assert!("3x".parse::<PolaritonLabel>().is_err());
        assert!("0-".parse::<PolaritonLabel>().is_err());
    }

    /// Matrix-element oracle: <to| a^dagger |from> with kets built directly.
    fn creation_element(to: PolaritonLabel, from: PolaritonLabel, delta: f64, atomic: bool) -> f64 {
        let d = dims1(4);
        let b = PolaritonBasis::new(d, 1.0, delta).unwrap();
        let op = if atomic {
            atomic_lowering(d).adjoint()
        } else {
            fock_annihilation(d).adjoint()
        };
        let v = op.matrix_element(&b.ket(to).unwrap(), &b.ket(from).unwrap()).unwrap();
        assert!(v.im.abs() < 1e-15);
        v.re
    }

    #[test]
    fn coefficients_match_matrix_elements() {
        for &delta in &[0.0, 0.7, 5.0, -2.0] {
            let b = PolaritonBasis::new(dims1(4), 1.0, delta).unwrap();
            let table = CoefficientTable::new(&b).unwrap();
            for n in 1..=4 {
                let c = table.get(n).unwrap();
                let pp = if n == 1 { PolaritonLabel::Ground } else { PolaritonLabel::plus(n - 1) };
                let pm = if n == 1 { PolaritonLabel::Ground } else { PolaritonLabel::minus(n - 1) };
                let up = PolaritonLabel::plus(n);
                let lo = PolaritonLabel::minus(n);
                for (atomic, vals) in [
                    (false, [c.c_plus, c.c_minus, c.k_pm, c.k_mp]),
                    (true, [c.ca_plus, c.ca_minus, c.ka_pm, c.ka_mp]),
                ] {
                    assert_abs_diff_eq!(vals[0], creation_element(up, pp, delta, atomic), epsilon = 1e-13);
                    assert_abs_diff_eq!(vals[1], creation_element(lo, pm, delta, atomic), epsilon = 1e-13);
                    if n >= 2 {
                        assert_abs_diff_eq!(vals[2], creation_element(up, pm, delta, atomic), epsilon = 1e-13);
                        assert_abs_diff_eq!(vals[3], creation_element(lo, pp, delta, atomic), epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn coefficient_values_at_resonance() {
        let q = FRAC_PI_4;
        let c2 = coefficients(2, q, q).unwrap();
        assert_abs_diff_eq!(c2.c_minus, 1.207_106_781_186_547_5, epsilon = 1e-15);
        assert_abs_diff_eq!(c2.k_pm, 0.207_106_781_186_547_5, epsilon = 1e-15);
        assert_abs_diff_eq!(c2.k_mp, c2.k_pm, epsilon = 1e-15);
        assert_abs_diff_eq!(c2.ka_pm, 0.5, epsilon = 1e-15);
        let c1 = coefficients(1, 0.3, 99.0).unwrap();
        assert_eq!((c1.k_pm, c1.k_mp), (0.0, 0.0));
        assert_eq!(c1.ca_minus, -(0.3f64).sin());
    }

    #[test]
    fn large_detuning_favours_k_pm() {
        let b = PolaritonBasis::new(dims1(3), 1.0, 20.0).unwrap();
        let c = *CoefficientTable::new(&b).unwrap().get(2).unwrap();
        assert!(c.k_pm > c.k_mp);
        assert!(c.k_pm > 0.0);
    }

    #[test]
    fn decomposition_reconstructs_raising_operators() {
        for &delta in &[0.0, 1.3, -0.4] {
            let p = params(delta, 4);
            let d = dims1(4);
            let fam = decompose_creation(d, &p).unwrap();
            assert!(reconstruction_residual(&fam, LadderKind::Photonic) < 1e-10);
            let fam_a = decompose_atomic_raising(d, &p).unwrap();
            assert!(reconstruction_residual(&fam_a, LadderKind::Atomic) < 1e-10);
        }
    }

    #[test]
    fn reconstruction_via_change_of_basis() {
        let p = params(0.9, 3);
        let b = PolaritonBasis::from_params(&p).unwrap();
        let table = CoefficientTable::new(&b).unwrap();
        let adag = b.to_polariton(&fock_annihilation(b.dims()).adjoint()).unwrap();
        for n in 2..=3 {
            let c = table.get(n).unwrap();
            let i = |l: PolaritonLabel| l.index(3).unwrap();
            let m = adag.data();
            assert_abs_diff_eq!(m[[i(PolaritonLabel::plus(n)), i(PolaritonLabel::minus(n - 1))]].re, c.k_pm, epsilon = 1e-13);
            assert_abs_diff_eq!(m[[i(PolaritonLabel::minus(n)), i(PolaritonLabel::plus(n - 1))]].re, c.k_mp, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_family_action() {
        let p = params(0.0, 3);
        let d = dims1(3);
        let fam = decompose_creation(d, &p).unwrap();
        let b = PolaritonBasis::from_params(&p).unwrap();
        let out = fam.pm.apply(&b.ket(PolaritonLabel::minus(1)).unwrap()).unwrap();
        let k2 = CoefficientTable::new(&b).unwrap().get(2).unwrap().k_pm;
        let expect = b.ket(PolaritonLabel::plus(2)).unwrap().amplitudes().mapv(|z| z * k2);
        assert!(out.iter().zip(expect.iter()).all(|(a, e)| (a - e).norm() < 1e-14));
    }

    #[test]
    fn interchanging_families_small_at_large_detuning() {
        let d = dims1(4);
        let near = decompose_creation(d, &params(0.0, 4)).unwrap();
        let far = decompose_creation(d, &params(50.0, 4)).unwrap();
        let ratio = |f: &LadderFamilies| (f.pm.frobenius_norm() + f.mp.frobenius_norm()) / f.plus.frobenius_norm();
        assert!(ratio(&far) < 0.05);
        assert!(ratio(&far) < ratio(&near));
    }

    #[test]
    fn diagonalizes_jc() {
        for &delta in &[0.0, 2.5, -1.0] {
            let p = params(delta, 4);
            let b = PolaritonBasis::from_params(&p).unwrap();
            let hp = b.to_polariton(&build_h_jc(&p).unwrap()).unwrap();
            for (i, l) in b.labels().into_iter().enumerate() {
                let e = polariton_energy(l, &p).unwrap();
                assert_abs_diff_eq!(hp.data()[[i, i]].re, e, epsilon = 1e-10);
            }
            let mut off = hp.into_data();
            for i in 0..off.nrows() {
                off[[i, i]] = re(0.0);
            }
            assert!(linalg::max_abs(&off.view()) < 1e-10);
        }
    }

    #[test]
    fn phase_report_examples() {
        let p = SystemParams { j: 0.1, ..params(0.0, 4) };
        let pp = interaction_picture_phase(ProductFamily::PlusPlus, 1, 1, &p).unwrap();
        assert_eq!(pp.frequency, 0.0);
        assert!(!pp.eliminable);
        let p3 = SystemParams { j: 0.1, ..params(3.0, 4) };
        let pm = interaction_picture_phase(ProductFamily::PlusMinus, 1, 1, &p3).unwrap();
        assert_abs_diff_eq!(pm.frequency, 2.0 * (9.0f64 + 4.0).sqrt(), epsilon = 1e-12);
        assert!(pm.eliminable);
        let v = interaction_picture_phase(ProductFamily::PlusPm, 2, 1, &p).unwrap();
        assert!(v.vanishes && !v.eliminable);
        let w = interaction_picture_phase(ProductFamily::PlusMp, 1, 2, &p).unwrap();
        assert!(!w.vanishes);
    }

    proptest! {
        #[test]
        fn completeness_and_unitarity(delta in -10.0f64..10.0, g in 0.1f64..3.0) {
            let b = PolaritonBasis::new(dims1(4), g, delta).unwrap();
            let u = b.unitary();
            let uu = linalg::adjoint(&u.view()).dot(u);
            let eye: Array2<C64> = Array2::eye(u.nrows());
            prop_assert!(linalg::max_abs(&(&uu - &eye).view()) < 1e-13);
            let mut sum = Array2::<C64>::zeros(u.raw_dim());
            for l in b.labels() {
                sum = sum + b.ket(l).unwrap().projector().into_data();
            }
            prop_assert!(linalg::max_abs(&(&sum - &eye).view()) < 1e-13);
        }

        #[test]
        fn k_symmetry_under_detuning_flip(delta in 0.0f64..10.0, n in 2usize..5) {
            let tab = |d: f64| {
                let b = PolaritonBasis::new(dims1(4), 1.0, d).unwrap();
                *CoefficientTable::new(&b).unwrap().get(n).unwrap()
            };
            let (pos, neg) = (tab(delta), tab(-delta));
            prop_assert!((pos.k_pm - neg.k_mp).abs() < 1e-12);
            if delta == 0.0 {
                prop_assert!((pos.k_pm - pos.k_mp).abs() < 1e-12);
            }
        }

        #[test]
        fn k_decreases_with_manifold(delta in 0.0f64..50.0) {
            // k_mp grows with n once delta exceeds about 1.48 g, so it is only
            // checked below that
            let b = PolaritonBasis::new(dims1(6), 1.0, delta).unwrap();
            let t = CoefficientTable::new(&b).unwrap();
            for n in 2..6 {
                prop_assert!(t.get(n + 1).unwrap().k_pm <= t.get(n).unwrap().k_pm + 1e-12);
                if delta < 1.4 {
                    prop_assert!(t.get(n + 1).unwrap().k_mp <= t.get(n).unwrap().k_mp + 1e-12);
                }
            }
        }

        #[test]
        fn theta_decreases_with_detuning(d1 in 0.0f64..50.0, step in 0.01f64..5.0, n in 1usize..5) {
            let a = mixing_angle(n, 1.0, d1).unwrap().theta;
            let b = mixing_angle(n, 1.0, d1 + step).unwrap().theta;
            prop_assert!(b < a);
            prop_assert!(a > 0.0 && a < std::f64::consts::FRAC_PI_2);
        }
    }
}
