//! Weak-drive Rayleigh-Schroedinger series in the single-cavity polariton
//! basis. Drive matrix elements are the beta/xi coefficients; every expanded
//! term is recorded with its symbolic form so the sign conventions can be
//! audited term by term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{build_h_driven_polariton, drive_coefficients, SystemParams};
use crate::linalg::eigh;
use crate::polariton_basis::{dressed_energy, Branch, PolaritonLabel};
use crate::C64;

/// Labels whose perturbative corrections are reported.
pub const REPORTED: [PolaritonLabel; 5] = [
    PolaritonLabel::Ground,
    PolaritonLabel::Dressed { n: 1, branch: Branch::Minus },
    PolaritonLabel::Dressed { n: 1, branch: Branch::Plus },
    PolaritonLabel::Dressed { n: 2, branch: Branch::Minus },
    PolaritonLabel::Dressed { n: 2, branch: Branch::Plus },
];

/// Smallest admissible gap between coupled unperturbed levels, in units of g.
pub const MIN_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationOptions {
    /// Keep state-correction amplitudes on |3+-> targets. Off by default.
    pub include_third_manifold: bool,
}

/// E^(0) in the drive frame: E_G = 0, E_{n+-} = Delta_c n + Delta/2 +- R_n/2.
/// Only meaningful when Delta_1 = 0.
pub fn unperturbed_energies(params: &SystemParams) -> BTreeMap<PolaritonLabel, f64> {
    coupled_labels(params.n_fock)
        .into_iter()
        .map(|l| (l, energy0(l, params)))
        .collect()
}

fn energy0(label: PolaritonLabel, params: &SystemParams) -> f64 {
    match label {
        PolaritonLabel::Dressed { n, branch } => {
            dressed_energy(n, branch, params.delta_c(), params.g, params.delta)
        }
        _ => 0.0,
    }
}

/// Pairs of coupled labels whose unperturbed gap is below `tol * g`.
pub fn degeneracies(params: &SystemParams, tol: f64) -> Vec<(PolaritonLabel, PolaritonLabel, f64)> {
    let e = unperturbed_energies(params);
    let labels: Vec<_> = e.keys().copied().collect();
    let mut out = Vec::new();
    for (i, &a) in labels.iter().enumerate() {
        for &b in &labels[i + 1..] {
            let gap = (e[&a] - e[&b]).abs();
            if gap < tol * params.g.abs().max(f64::MIN_POSITIVE) {
                out.push((a, b, gap));
            }
        }
    }
    out
}

/// Every label the drive couples: G and both branches of each manifold.
fn coupled_labels(n_fock: usize) -> Vec<PolaritonLabel> {
    PolaritonLabel::all(n_fock)
        .into_iter()
        .filter(|l| *l != PolaritonLabel::Top)
        .collect()
}

/// Drive matrix element <to|V|from> with its symbol. Non-zero only between
/// neighbouring manifolds.
fn coupling(
    to: PolaritonLabel,
    from: PolaritonLabel,
    coef: &crate::hamiltonians::DrivenPolaritonCoefficients,
) -> Result<Option<(C64, String)>> {
    let (mt, mf) = (to.manifold(0), from.manifold(0));
    if mf == mt + 1 {
        return Ok(coupling(from, to, coef)?.map(|(v, s)| (v.conj(), format!("conj({s})"))));
    }
    if mt != mf + 1 {
        return Ok(None);
    }
    let n = mt;
    let m = coef.get(n)?;
    let bt = to.branch().expect("dressed");
    let bf = from.branch().unwrap_or(bt);
    Ok(match (bt, bf) {
        (Branch::Plus, Branch::Plus) => Some((m.beta_plus, format!("β_{{{n}+}}"))),
        (Branch::Minus, Branch::Minus) => Some((m.beta_minus, format!("β_{{{n}-}}"))),
        (Branch::Plus, Branch::Minus) => m.xi_pm.map(|x| (x, format!("ξ_{{{n}±}}"))),
        (Branch::Minus, Branch::Plus) => m.xi_mp.map(|x| (x, format!("ξ_{{{n}∓}}"))),
    })
}

/// One expanded term of the series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    /// `E2[1-]`, `psi1[1-]->2+` or `psi2[1-]->1+`.
    pub quantity: String,
    pub expression: String,
    pub value: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub target: PolaritonLabel,
    pub amplitude: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: PolaritonLabel,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub first_order: Vec<Correction>,
    pub second_order: Vec<Correction>,
}

impl LabelReport {
    pub fn first(&self, target: PolaritonLabel) -> C64 {
        lookup(&self.first_order, target)
    }

    pub fn second(&self, target: PolaritonLabel) -> C64 {
        lookup(&self.second_order, target)
    }
}

fn lookup(list: &[Correction], target: PolaritonLabel) -> C64 {
    list.iter()
        .find(|c| c.target == target)
        .map_or(C64::new(0.0, 0.0), |c| c.amplitude)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub params: SystemParams,
    pub options: PerturbationOptions,
    pub labels: Vec<LabelReport>,
    pub terms: Vec<Term>,
}

impl PerturbationReport {
    pub fn get(&self, label: PolaritonLabel) -> Option<&LabelReport> {
        self.labels.iter().find(|r| r.label == label)
    }
}

struct Expansion {
    labels: Vec<PolaritonLabel>,
    e0: Vec<f64>,
    /// v[k][l] = <k|V|l> with its symbol.
    v: Vec<Vec<Option<(C64, String)>>>,
}

impl Expansion {
    fn new(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        if params.n_cavities != 1 {
            return Err(Error::Unsupported("perturbation series is single-cavity".into()));
        }
        if params.delta_1().abs() > 1e-12 * params.omega_c.abs().max(1.0) {
            return Err(Error::FormulaInapplicable(
                "perturbation series needs Delta_1 = 0".into(),
            ));
        }
        let coef = drive_coefficients(params)?;
        let labels = coupled_labels(params.n_fock);
        let e0 = labels.iter().map(|&l| energy0(l, params)).collect();
        let v = labels
            .iter()
            .map(|&k| labels.iter().map(|&l| coupling(k, l, &coef)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, e0, v })
    }

    fn pos(&self, l: PolaritonLabel) -> usize {
        self.labels.iter().position(|&x| x == l).expect("reported label is coupled")
    }

    fn gap(&self, n: usize, k: usize, g: f64) -> Result<f64> {
        let d = self.e0[n] - self.e0[k];
        if d.abs() < MIN_GAP * g.abs() {
            return Err(Error::NearDegenerate {
                a: self.labels[n].to_string(),
                b: self.labels[k].to_string(),
                gap: d.abs(),
            });
        }
        Ok(d)
    }

    fn den(&self, n: usize, k: usize) -> String {
        match self.labels[k] {
            PolaritonLabel::Ground => format!("E_{{{}}}", self.labels[n]),
            _ => format!("(E_{{{}}} - E_{{{}}})", self.labels[n], self.labels[k]),
        }
    }
}

fn keep(target: PolaritonLabel, opts: PerturbationOptions) -> bool {
    opts.include_third_manifold || target.manifold(0) != 3
}

/// Energies to second order and state corrections to the requested order for
/// G, 1+-, 2+-.
pub fn perturbation_report(
    params: &SystemParams,
    options: PerturbationOptions,
) -> Result<PerturbationReport> {
    if params.n_fock < 3 {
        return Err(Error::ManifoldAboveCutoff { n: 3, n_fock: params.n_fock });
    }
    let x = Expansion::new(params)?;
    let g = params.g;
    let mut terms = Vec::new();
    let mut labels = Vec::new();
    for label in REPORTED {
        let n = x.pos(label);
        let name = label.to_string();
        let mut e2 = 0.0;
        let mut first = BTreeMap::<usize, C64>::new();
        let mut norm2 = 0.0;
        for k in 0..x.labels.len() {
            let Some((vkn, skn)) = &x.v[k][n] else { continue };
            let d = x.gap(n, k, g)?;
            let e = vkn.norm_sqr() / d;
            e2 += e;
            terms.push(Term {
                quantity: format!("E2[{name}]"),
                expression: format!("|{skn}|^2 / {}", x.den(n, k)),
                value: C64::new(e, 0.0),
            });
            let a = vkn / d;
            norm2 += a.norm_sqr();
            *first.entry(k).or_default() += a;
            terms.push(Term {
                quantity: format!("psi1[{name}]->{}", x.labels[k]),
                expression: format!("{skn} / {}", x.den(n, k)),
                value: a,
            });
        }
        let mut second = BTreeMap::<usize, C64>::new();
        for k in 0..x.labels.len() {
            if k == n {
                continue;
            }
            for (l, row) in x.v[k].iter().enumerate() {
                let (Some((vkl, skl)), Some((vln, sln))) = (row, &x.v[l][n]) else { continue };
                if l == n {
                    continue;
                }
                let (dk, dl) = (x.gap(n, k, g)?, x.gap(n, l, g)?);
                let a = vkl * vln / (dk * dl);
                *second.entry(k).or_default() += a;
                terms.push(Term {
                    quantity: format!("psi2[{name}]->{}", x.labels[k]),
                    expression: format!("{skl} {sln} / ({} {})", x.den(n, k), x.den(n, l)),
                    value: a,
                });
            }
        }
        second.insert(n, C64::new(-0.5 * norm2, 0.0));
        terms.push(Term {
            quantity: format!("psi2[{name}]->{name}"),
            expression: "-1/2 sum_k |psi1_k|^2".into(),
            value: C64::new(-0.5 * norm2, 0.0),
        });
        let collect = |m: BTreeMap<usize, C64>| {
            m.into_iter()
                .filter(|(k, _)| keep(x.labels[*k], options))
                .map(|(k, amplitude)| Correction { target: x.labels[k], amplitude })
                .collect()
        };
        labels.push(LabelReport {
            label,
            e0: x.e0[n],
            e1: 0.0,
            e2,
            first_order: collect(first),
            second_order: collect(second),
        });
    }
    Ok(PerturbationReport { params: params.clone(), options, labels, terms })
}

/// E^(2) for G, 1+-, 2+-.
pub fn second_order_energies(params: &SystemParams) -> Result<BTreeMap<PolaritonLabel, f64>> {
    let r = perturbation_report(params, PerturbationOptions::default())?;
    Ok(r.labels.iter().map(|l| (l.label, l.e2)).collect())
}

/// Correction kets in the polariton basis (indices as `PolaritonLabel::index`)
/// at exactly the requested order.
pub fn corrected_states(
    params: &SystemParams,
    order: usize,
    options: PerturbationOptions,
) -> Result<BTreeMap<PolaritonLabel, Vec<Correction>>> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidParameter(format!("order {order} not in {{1, 2}}")));
    }
    let r = perturbation_report(params, options)?;
    Ok(r.labels
        .into_iter()
        .map(|l| (l.label, if order == 1 { l.first_order } else { l.second_order }))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactComparison {
    pub label: PolaritonLabel,
    pub e_exact: f64,
    pub e_perturbative: f64,
    pub residual: f64,
    /// |<exact|psi0 + psi1 + psi2>| with the perturbative ket normalized.
    pub overlap: f64,
}

/// Dense diagonalization of the driven polariton Hamiltonian; each reported
/// label is matched to the eigenvector with the largest weight on it.
pub fn exact_comparison(
    params: &SystemParams,
    options: PerturbationOptions,
) -> Result<Vec<ExactComparison>> {
    let r = perturbation_report(params, options)?;
    let h = build_h_driven_polariton(params)?;
    let (e, v) = eigh(&h.data().view())?;
    let nf = params.n_fock;
    r.labels
        .iter()
        .map(|lr| {
            let i = lr.label.index(nf)?;
            let col = (0..e.len())
                .max_by(|&a, &b| v[[i, a]].norm_sqr().total_cmp(&v[[i, b]].norm_sqr()))
                .expect("non-empty");
            let mut psi = vec![C64::new(0.0, 0.0); e.len()];
            psi[i] += 1.0;
            for c in lr.first_order.iter().chain(&lr.second_order) {
                psi[c.target.index(nf)?] += c.amplitude;
            }
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let overlap = psi
                .iter()
                .enumerate()
                .map(|(k, z)| v[[k, col]].conj() * z)
                .sum::<C64>()
                .norm()
                / norm;
            let e_pert = lr.e0 + lr.e1 + lr.e2;
            Ok(ExactComparison {
                label: lr.label,
                e_exact: e[col],
                e_perturbative: e_pert,
                residual: (e[col] - e_pert).abs(),
                overlap,
            })
        })
        .collect()
}

/// Least-squares slope of log(residual) against log(epsilon).
pub fn log_log_slope(eps: &[f64], residuals: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
