//! Truncated-Fock Lindblad engine.
//!
//! The generator is
//!
//! ```text
//! L(ρ) = −i[H, ρ] + Σ_J ( J ρ J† − ½{J†J, ρ} )
//!      = −i(H_eff ρ − ρ H_eff†) + Σ_J J ρ J†,     H_eff = H − (i/2) Σ_J J†J
//! ```
//!
//! with jump operators `√(n_th Γ₀)·a₀†`, `√((n_th+1) Γ₀)·a₀` (thermal injection),
//! `√(2Γ_det)·a_k` (absorption at the detection site) and `√(2γ_i)·n_i`
//! (dephasing). Vectorization is column-stacking: `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
//!
//! Every operator shifts the total photon number `N` by a fixed amount, so the
//! generator maps the block `ρ[N, N']` of a density matrix to blocks with the
//! same `N − N'`. Evolution and the steady-state solve work on those blocks;
//! the steady state lives entirely in the balanced (`N = N'`) blocks.

use std::cell::RefCell;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{build_basis, hamiltonian_matrix, number_operator, site_annihilator, site_creator, FockBasis};
use crate::linalg::{gmres, matmul, norm2, triangular_sylvester, CMat, Op, Schur};
use crate::network::ValidatedNetwork;
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::sparse::{spmm_left_acc, spmm_right_adj_acc, SparseOperator};
use crate::trajectory::{sample_run, Trajectory};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Largest Liouvillian side for which [`Superoperator::to_sparse`] will build
/// the explicit matrix.
pub const MAX_EXPLICIT_SIDE: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: CMat,
}

impl DensityMatrix {
    /// Wrap a square matrix without checking the density-matrix invariants.
    pub fn from_matrix(data: CMat) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "density matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(DensityMatrix { data })
    }

    pub fn vacuum(basis: &FockBasis) -> Self {
        let mut data = CMat::zeros(basis.dim(), basis.dim());
        data[(0, 0)] = ONE;
        DensityMatrix { data }
    }

    pub fn fock_state(basis: &FockBasis, occupations: &[usize]) -> Result<Self> {
        if occupations.len() != basis.n_sites() {
            return Err(Error::DimensionMismatch(format!(
                "{} occupations for {} sites",
                occupations.len(),
                basis.n_sites()
            )));
        }
        if let Some(&n) = occupations.iter().find(|&&n| n > basis.cutoff()) {
            return Err(Error::IndexOutOfRange {
                what: "occupation",
                index: n,
                limit: basis.cutoff() + 1,
            });
        }
        let k = basis.index(occupations);
        let mut data = CMat::zeros(basis.dim(), basis.dim());
        data[(k, k)] = ONE;
        Ok(DensityMatrix { data })
    }

    pub fn maximally_mixed(basis: &FockBasis) -> Self {
        let d = basis.dim();
        DensityMatrix {
            data: CMat::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn into_data(self) -> CMat {
        self.data
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// Largest entry of `|ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut e = 0.0f64;
        for j in 0..n {
            for i in 0..=j {
                e = e.max((self.data[(i, j)] - self.data[(j, i)].conj()).norm());
            }
        }
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.data + self.data.adjoint()) * Complex64::new(0.5, 0.0);
        crate::linalg::hermitian_eigenvalues(&h).first().copied().unwrap_or(0.0)
    }

    /// Hermiticity and unit trace within `tol`.
    pub fn check(&self, tol: f64) -> Result<()> {
        let h = self.hermiticity_error();
        if h > tol {
            return Err(Error::InvariantViolation(format!(
                "density matrix not Hermitian (error {h:e})"
            )));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::InvariantViolation(format!(
                "density matrix trace {tr} differs from 1"
            )));
        }
        Ok(())
    }

    /// ⟨n_site⟩ = Tr(ρ n_site).
    pub fn occupation(&self, basis: &FockBasis, site: usize) -> f64 {
        (0..self.dim())
            .map(|k| basis.occupation(k, site) as f64 * self.data[(k, k)].re)
            .sum()
    }

    /// Column-stacked `vec(ρ)`.
    pub fn vectorize(&self) -> Vec<Complex64> {
        self.data.as_slice().to_vec()
    }

    pub fn from_vector(dim: usize, v: &[Complex64]) -> Result<Self> {
        if v.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for dim {dim}",
                v.len()
            )));
        }
        Ok(DensityMatrix {
            data: CMat::from_column_slice(dim, dim, v),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperator {
    pub label: String,
    pub op: SparseOperator,
}

/// Total-photon-number sectors of a basis.
#[derive(Debug, Clone)]
struct Sectors {
    members: Vec<Vec<usize>>,
    sector_of: Vec<usize>,
}

impl Sectors {
    fn new(basis: &FockBasis) -> Self {
        let max_n = basis.n_sites() * basis.cutoff();
        let mut members = vec![Vec::new(); max_n + 1];
        let mut sector_of = vec![0; basis.dim()];
        for k in 0..basis.dim() {
            let n = basis.total_number(k);
            members[n].push(k);
            sector_of[k] = n;
        }
        Sectors { members, sector_of }
    }

    fn count(&self) -> usize {
        self.members.len()
    }

    fn size(&self, a: usize) -> usize {
        self.members[a].len()
    }
}

/// Number shift of an operator, if every entry changes `N` by the same amount.
fn sector_shift(op: &SparseOperator, sectors: &Sectors) -> Option<Option<isize>> {
    let mut shift = None;
    for (r, c, _) in op.entries() {
        let s = sectors.sector_of[r] as isize - sectors.sector_of[c] as isize;
        match shift {
            None => shift = Some(s),
            Some(t) if t != s => return None,
            _ => {}
        }
    }
    Some(shift)
}

#[derive(Debug, Clone)]
struct JumpBlocks {
    shift: isize,
    /// Block `a` maps sector `a` to sector `a + shift`.
    blocks: Vec<Option<SparseOperator>>,
}

/// Lindblad generator on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct Superoperator {
    basis: FockBasis,
    hamiltonian: SparseOperator,
    jumps: Vec<JumpOperator>,
    heff: SparseOperator,
    detection: Option<(usize, f64)>,
    sectors: Sectors,
    heff_blocks: Vec<SparseOperator>,
    jump_blocks: Vec<JumpBlocks>,
}

impl Superoperator {
    /// Generator from a Hamiltonian and jump operators on `basis`.
    ///
    /// Every operator must change the total photon number by a fixed amount.
    /// `detection` is `(site, Γ_det)` and is used for `E_tr`.
    pub fn from_parts(
        basis: FockBasis,
        hamiltonian: SparseOperator,
        jumps: Vec<JumpOperator>,
        detection: Option<(usize, f64)>,
    ) -> Result<Self> {
        let d = basis.dim();
        let square = |op: &SparseOperator, what: &str| {
            if op.nrows() != d || op.ncols() != d {
                Err(Error::DimensionMismatch(format!(
                    "{what} is {}x{}, basis dimension {d}",
                    op.nrows(),
                    op.ncols()
                )))
            } else {
                Ok(())
            }
        };
        square(&hamiltonian, "Hamiltonian")?;
        for j in &jumps {
            square(&j.op, &j.label)?;
        }
        if let Some((site, _)) = detection {
            if site >= basis.n_sites() {
                return Err(Error::IndexOutOfRange {
                    what: "detection site",
                    index: site,
                    limit: basis.n_sites(),
                });
            }
        }
        let sectors = Sectors::new(&basis);
        match sector_shift(&hamiltonian, &sectors) {
            Some(None) | Some(Some(0)) => {}
            _ => {
                return Err(Error::invalid("hamiltonian", "must conserve the total photon number"));
            }
        }

        let mut heff = hamiltonian.clone();
        let mut jump_blocks = Vec::with_capacity(jumps.len());
        for j in &jumps {
            let shift = match sector_shift(&j.op, &sectors) {
                Some(s) => s.unwrap_or(0),
                None => {
                    return Err(Error::invalid(
                        j.label.clone(),
                        "jump operator must shift the total photon number uniformly",
                    ))
                }
            };
            let jdj = j.op.adjoint().matmul(&j.op);
            heff = heff.add(&jdj.scale(Complex64::new(0.0, -0.5)));
            let blocks = (0..sectors.count())
                .map(|a| {
                    let target = a as isize + shift;
                    if target < 0 || target as usize >= sectors.count() {
                        return None;
                    }
                    let blk = j.op.submatrix(&sectors.members[target as usize], &sectors.members[a]);
                    (blk.nnz() > 0).then_some(blk)
                })
                .collect();
            jump_blocks.push(JumpBlocks { shift, blocks });
        }
        let heff_blocks = sectors.members.iter().map(|m| heff.submatrix(m, m)).collect();
        Ok(Superoperator {
            basis,
            hamiltonian,
            jumps,
            heff,
            detection,
            sectors,
            heff_blocks,
            jump_blocks,
        })
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    /// `H − (i/2) Σ J†J`.
    pub fn effective_hamiltonian(&self) -> &SparseOperator {
        &self.heff
    }

    pub fn detection(&self) -> Option<(usize, f64)> {
        self.detection
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Side of the vectorized generator, `dim²`.
    pub fn dim2(&self) -> usize {
        self.dim() * self.dim()
    }

    /// `L(ρ)` for a dense `dim × dim` matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let d = self.dim();
        assert_eq!((rho.nrows(), rho.ncols()), (d, d));
        let x = rho.as_slice();
        let mut out = vec![ZERO; d * d];
        spmm_left_acc(&self.heff, x, d, -I, &mut out);
        spmm_right_adj_acc(x, d, &self.heff, I, &mut out);
        let mut tmp = vec![ZERO; d * d];
        for j in &self.jumps {
            tmp.iter_mut().for_each(|v| *v = ZERO);
            spmm_left_acc(&j.op, x, d, ONE, &mut tmp);
            spmm_right_adj_acc(&tmp, d, &j.op, ONE, &mut out);
        }
        CMat::from_vec(d, d, out)
    }

    /// Explicit column-stacked generator matrix (`dim² × dim²`).
    pub fn to_sparse(&self) -> Result<SparseOperator> {
        let d = self.dim();
        let d2 = self.dim2();
        if d2 > MAX_EXPLICIT_SIDE {
            return Err(Error::invalid(
                "dim2",
                format!("explicit generator of side {d2} exceeds {MAX_EXPLICIT_SIDE}"),
            ));
        }
        // vec index of X[r, c] is r + c·d
        let mut t = Vec::new();
        // −i (I ⊗ H_eff)
        for c in 0..d {
            for (r, k, v) in self.heff.entries() {
                t.push((r + c * d, k + c * d, -I * v));
            }
        }
        // +i (conj(H_eff) ⊗ I): X H_eff† has column c = Σ_k X[:, k] conj(H_eff[c, k])
        for (c, k, v) in self.heff.entries() {
            for r in 0..d {
                t.push((r + c * d, r + k * d, I * v.conj()));
            }
        }
        // conj(J) ⊗ J
        for j in &self.jumps {
            let e: Vec<_> = j.op.entries().collect();
            for &(c, k, w) in &e {
                for &(r, l, v) in &e {
                    t.push((r + c * d, l + k * d, v * w.conj()));
                }
            }
        }
        Ok(SparseOperator::from_triplets(d2, d2, t))
    }

    /// Upper bound on the induced Frobenius norm of the generator.
    pub fn norm_estimate(&self) -> f64 {
        fn spectral_bound(a: &SparseOperator) -> f64 {
            let mut row = vec![0.0f64; a.nrows()];
            let mut col = vec![0.0f64; a.ncols()];
            for (r, c, v) in a.entries() {
                row[r] += v.norm();
                col[c] += v.norm();
            }
            let r = row.into_iter().fold(0.0, f64::max);
            let c = col.into_iter().fold(0.0, f64::max);
            (r * c).sqrt()
        }
        2.0 * spectral_bound(&self.heff) + self.jumps.iter().map(|j| spectral_bound(&j.op).powi(2)).sum::<f64>()
    }
}

/// Build the generator for a validated network.
pub fn build_liouvillian(network: &ValidatedNetwork, basis: &FockBasis) -> Result<Superoperator> {
    let h = hamiltonian_matrix(network, basis)?;
    let inj = network.injection();
    let det = network.detection();
    let real = |x: f64| Complex64::new(x, 0.0);
    let mut jumps = Vec::new();
    let gain = inj.n_thermal * inj.rate_gamma0;
    let loss = (inj.n_thermal + 1.0) * inj.rate_gamma0;
    if gain > 0.0 {
        jumps.push(JumpOperator {
            label: format!("injection gain a_{}†", inj.site),
            op: site_creator(basis, inj.site)?.scale(real(gain.sqrt())),
        });
    }
    if loss > 0.0 {
        jumps.push(JumpOperator {
            label: format!("injection loss a_{}", inj.site),
            op: site_annihilator(basis, inj.site)?.scale(real(loss.sqrt())),
        });
    }
    if det.rate_gamma_det > 0.0 {
        jumps.push(JumpOperator {
            label: format!("detection a_{}", det.site),
            op: site_annihilator(basis, det.site)?.scale(real((2.0 * det.rate_gamma_det).sqrt())),
        });
    }
    for (i, &g) in network.gamma_deph().iter().enumerate() {
        if g > 0.0 {
            jumps.push(JumpOperator {
                label: format!("dephasing n_{i}"),
                op: number_operator(basis, i)?.scale(real((2.0 * g).sqrt())),
            });
        }
    }
    Superoperator::from_parts(basis.clone(), h, jumps, Some((det.site, det.rate_gamma_det)))
}

/// Flattened storage of the sector blocks `ρ[a, b]` (column-major each).
#[derive(Debug, Clone)]
struct BlockLayout {
    pairs: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    lookup: Vec<Vec<Option<usize>>>,
    len: usize,
}

impl BlockLayout {
    fn new(sectors: &Sectors, deltas: &[isize]) -> Self {
        let s = sectors.count();
        let mut pairs = Vec::new();
        let mut offsets = Vec::new();
        let mut lookup = vec![vec![None; s]; s];
        let mut len = 0;
        for b in 0..s {
            for a in 0..s {
                if deltas.contains(&(a as isize - b as isize)) {
                    lookup[a][b] = Some(pairs.len());
                    pairs.push((a, b));
                    offsets.push(len);
                    len += sectors.size(a) * sectors.size(b);
                }
            }
        }
        BlockLayout {
            pairs,
            offsets,
            lookup,
            len,
        }
    }

    fn span(&self, p: usize, sectors: &Sectors) -> std::ops::Range<usize> {
        let (a, b) = self.pairs[p];
        self.offsets[p]..self.offsets[p] + sectors.size(a) * sectors.size(b)
    }

    fn gather(&self, rho: &CMat, sectors: &Sectors) -> Vec<Complex64> {
        let mut x = vec![ZERO; self.len];
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let (ra, rb) = (&sectors.members[a], &sectors.members[b]);
            let off = self.offsets[p];
            for (lc, &c) in rb.iter().enumerate() {
                for (lr, &r) in ra.iter().enumerate() {
                    x[off + lr + lc * ra.len()] = rho[(r, c)];
                }
            }
        }
        x
    }

    fn scatter(&self, x: &[Complex64], dim: usize, sectors: &Sectors) -> CMat {
        let mut rho = CMat::zeros(dim, dim);
        for (p, &(a, b)) in self.pairs.iter().enumerate() {
            let (ra, rb) = (&sectors.members[a], &sectors.members[b]);
            let off = self.offsets[p];
            for (lc, &c) in rb.iter().enumerate() {
                for (lr, &r) in ra.iter().enumerate() {
                    rho[(r, c)] = x[off + lr + lc * ra.len()];
                }
            }
        }
        rho
    }
}

/// The generator restricted to a block layout.
struct BlockGenerator<'a> {
    sup: &'a Superoperator,
    layout: BlockLayout,
    tmp: RefCell<Vec<Complex64>>,
    /// (flat index of ρ_kk, global state k) for every diagonal entry held.
    diagonal: Vec<(usize, usize)>,
}

impl<'a> BlockGenerator<'a> {
    fn new(sup: &'a Superoperator, deltas: &[isize]) -> Self {
        let sectors = &sup.sectors;
        let layout = BlockLayout::new(sectors, deltas);
        let max = (0..sectors.count()).map(|a| sectors.size(a)).max().unwrap_or(0);
        let mut diagonal = Vec::new();
        for a in 0..sectors.count() {
            if let Some(p) = layout.lookup[a][a] {
                let c = sectors.size(a);
                for (l, &k) in sectors.members[a].iter().enumerate() {
                    diagonal.push((layout.offsets[p] + l + l * c, k));
                }
            }
        }
        BlockGenerator {
            sup,
            layout,
            tmp: RefCell::new(vec![ZERO; max * max]),
            diagonal,
        }
    }

    fn len(&self) -> usize {
        self.layout.len
    }

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let sectors = &self.sup.sectors;
        let layout = &self.layout;
        out.iter_mut().for_each(|v| *v = ZERO);
        let mut tmp = self.tmp.borrow_mut();
        for (p, &(a, b)) in layout.pairs.iter().enumerate() {
            let span = layout.span(p, sectors);
            let (ca, cb) = (sectors.size(a), sectors.size(b));
            let xp = &x[span.clone()];
            {
                let op = &mut out[span];
                spmm_left_acc(&self.sup.heff_blocks[a], xp, cb, -I, op);
                spmm_right_adj_acc(xp, ca, &self.sup.heff_blocks[b], I, op);
            }
            for jb in &self.sup.jump_blocks {
                let (Some(ja), Some(jbb)) = (&jb.blocks[a], &jb.blocks[b]) else {
                    continue;
                };
                let (ta, tb) = ((a as isize + jb.shift) as usize, (b as isize + jb.shift) as usize);
                let Some(q) = layout.lookup[ta][tb] else {
                    continue;
                };
                let cta = sectors.size(ta);
                let t = &mut tmp[..cta * cb];
                t.iter_mut().for_each(|v| *v = ZERO);
                spmm_left_acc(ja, xp, cb, ONE, t);
                let span_q = layout.span(q, sectors);
                spmm_right_adj_acc(t, cta, jbb, ONE, &mut out[span_q]);
            }
        }
    }

    fn trace(&self, x: &[Complex64]) -> Complex64 {
        self.diagonal.iter().map(|&(i, _)| x[i]).sum()
    }

    /// `[n_0, …, n_{N−1}, Tr ρ]` (real parts).
    fn observables(&self, x: &[Complex64]) -> Vec<f64> {
        let basis = &self.sup.basis;
        let n = basis.n_sites();
        let mut obs = vec![0.0; n + 1];
        for &(i, k) in &self.diagonal {
            let p = x[i].re;
            for (s, o) in obs.iter_mut().enumerate().take(n) {
                *o += basis.occupation(k, s) as f64 * p;
            }
            obs[n] += p;
        }
        obs
    }
}

impl OdeSystem for BlockGenerator<'_> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        self.apply(y, dy);
    }
}

/// Observables sampled along an evolution, plus the final state.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

/// Integrate `dρ/dt = L(ρ)` from `rho0` to `t_final` with the adaptive
/// Dormand–Prince 5(4) pair (relative tolerance `tol`).
pub fn evolve(liouvillian: &Superoperator, rho0: &DensityMatrix, t_final: f64, tol: f64) -> Result<Evolution> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid(
            "t_final",
            format!("must be positive and finite, got {t_final}"),
        ));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid("tol", format!("must lie in (0, 1), got {tol}")));
    }
    let d = liouvillian.dim();
    if rho0.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "rho0 has dim {}, basis {d}",
            rho0.dim()
        )));
    }
    rho0.check(1e-10)?;

    let sectors = &liouvillian.sectors;
    let mut deltas: Vec<isize> = Vec::new();
    for c in 0..d {
        for r in 0..d {
            if rho0.data[(r, c)] != ZERO {
                let delta = sectors.sector_of[r] as isize - sectors.sector_of[c] as isize;
                if !deltas.contains(&delta) {
                    deltas.push(delta);
                }
            }
        }
    }
    if deltas.is_empty() {
        deltas.push(0);
    }
    let gen = BlockGenerator::new(liouvillian, &deltas);
    let y0 = gen.layout.gather(&rho0.data, sectors);
    let opts = OdeOptions::with_tol(tol);
    let run = integrate(&gen, y0, t_final, &opts, |x| gen.observables(x), &[], |_, _, _| {})?;

    let n = liouvillian.basis.n_sites();
    let (det_site, gamma_det) = liouvillian.detection.unwrap_or((0, 0.0));
    let trajectory = sample_run(&run, t_final, tol, n, det_site, gamma_det, true);
    let tr0 = trajectory.trace.as_ref().unwrap()[0];
    let drift = trajectory
        .trace
        .as_ref()
        .unwrap()
        .iter()
        .map(|t| (t - tr0).abs())
        .fold(0.0, f64::max);
    if drift > 10.0 * tol {
        return Err(Error::InvariantViolation(format!(
            "trace drifted by {drift:e} (limit {:e})",
            10.0 * tol
        )));
    }
    let final_state = DensityMatrix {
        data: gen.layout.scatter(&run.final_state, d, sectors),
    };
    Ok(Evolution {
        trajectory,
        final_state,
        steps_accepted: run.accepted,
        steps_rejected: run.rejected,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    /// Relative residual target of the bordered solve.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    /// Re-solve from the maximally mixed state and compare.
    pub check_uniqueness: bool,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            tol: 1e-12,
            restart: 60,
            max_iter: 3000,
            check_uniqueness: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub rho: DensityMatrix,
    pub iterations: usize,
    /// ‖L(ρ)‖_F / ‖L‖.
    pub residual: f64,
}

/// Per-sector inverse of `X ↦ −i(K X − X K†)`, where `K` is `H_eff` without
/// the number-conserving jump terms.
struct NoJumpInverse {
    schur: Vec<Schur>,
    scale: Vec<f64>,
}

impl NoJumpInverse {
    fn new(sup: &Superoperator) -> Self {
        let mut schur = Vec::new();
        let mut scale = Vec::new();
        for (a, blk) in sup.heff_blocks.iter().enumerate() {
            // number-conserving jumps (dephasing) leave populations undamped;
            // dropping their J†J here keeps the preconditioner from damping them
            let mut h = blk.to_dense();
            for jb in sup.jump_blocks.iter().filter(|jb| jb.shift == 0) {
                if let Some(j) = &jb.blocks[a] {
                    let jd = j.to_dense();
                    h += jd.adjoint() * jd * Complex64::new(0.0, 0.5);
                }
            }
            let s = Schur::new(h);
            scale.push(s.t.iter().map(|v| v.norm()).fold(1.0f64, f64::max));
            schur.push(s);
        }
        NoJumpInverse { schur, scale }
    }

    fn apply(&self, gen: &BlockGenerator, y: &[Complex64], out: &mut [Complex64]) {
        let sectors = &gen.sup.sectors;
        for (p, &(a, b)) in gen.layout.pairs.iter().enumerate() {
            debug_assert_eq!(a, b);
            let span = gen.layout.span(p, sectors);
            let c = sectors.size(a);
            let s = &self.schur[a];
            let yb = CMat::from_column_slice(c, c, &y[span.clone()]);
            // T Z − Z T† = i Q† Y Q,  X = Q Z Q†
            let mut f = matmul(&matmul(&s.q, Op::H, &yb, Op::N), Op::N, &s.q, Op::N) * I;
            // undamped pivots (e.g. a lossless vacuum) are replaced by −i·scale
            let sub = Complex64::new(0.0, -self.scale[a]);
            let _ = triangular_sylvester(&s.t, -1.0, &mut f, 1e-12 * self.scale[a], Some(sub));
            let x = matmul(&matmul(&s.q, Op::N, &f, Op::N), Op::N, &s.q, Op::H);
            out[span].copy_from_slice(x.as_slice());
        }
    }
}

/// Steady state with default options.
pub fn steady_state(liouvillian: &Superoperator) -> Result<DensityMatrix> {
    steady_state_with(liouvillian, &SteadyStateOptions::default()).map(|r| r.rho)
}

/// Solve `L(ρ) = 0`, `Tr ρ = 1` on the balanced blocks.
///
/// The trace condition is imposed by bordering: `L(x) + u·Tr(x) = u` with `u`
/// the vacuum projector, which is nonsingular exactly when the steady state is
/// unique. The system is solved with restarted GMRES, right-preconditioned by
/// the exact inverse of the no-jump generator.
pub fn steady_state_with(liouvillian: &Superoperator, opts: &SteadyStateOptions) -> Result<SteadyStateReport> {
    if liouvillian.jumps.is_empty() {
        return Err(Error::DegenerateSteadyState(
            "no dissipative channel: every state commuting with H is stationary".into(),
        ));
    }
    let d = liouvillian.dim();
    let sectors = &liouvillian.sectors;
    let gen = BlockGenerator::new(liouvillian, &[0]);
    let n = gen.len();
    let pre = NoJumpInverse::new(liouvillian);
    let norm_l = liouvillian.norm_estimate().max(f64::MIN_POSITIVE);

    // vacuum is the single state of sector 0, stored first
    let mut u = vec![ZERO; n];
    u[0] = ONE;
    let bordered = |x: &[Complex64], out: &mut [Complex64]| {
        gen.apply(x, out);
        out[0] += gen.trace(x);
    };
    let residual_of = |x: &[Complex64]| {
        let mut r = vec![ZERO; n];
        gen.apply(x, &mut r);
        norm2(&r) / norm2(x).max(f64::MIN_POSITIVE) / norm_l
    };
    let normalize = |x: Vec<Complex64>| -> Vec<Complex64> {
        let rho = gen.layout.scatter(&x, d, sectors);
        let h = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        let tr = h.trace();
        let h = h / tr;
        gen.layout.gather(&h, sectors)
    };

    let solve = |x0: Vec<Complex64>, tol: f64, target: f64| {
        let mut x = x0;
        let mut iterations = 0;
        for _ in 0..4 {
            let out = gmres(
                &bordered,
                |v: &[Complex64], o: &mut [Complex64]| pre.apply(&gen, v, o),
                &u,
                x,
                tol,
                opts.restart,
                opts.max_iter,
            );
            iterations += out.iterations;
            x = out.x;
            if out.converged && residual_of(&x) <= target {
                break;
            }
        }
        (x, iterations)
    };

    let (x, iterations) = solve(vec![ZERO; n], opts.tol, 1e-10);
    let tr = gen.trace(&x);
    if !tr.re.is_finite() || tr.norm() < 1e-12 {
        return Err(Error::SingularSolve(format!("bordered system gave trace {tr}")));
    }
    let x = normalize(x);
    let residual = residual_of(&x);
    if !(residual <= 1e-10) {
        return Err(Error::SingularSolve(format!(
            "residual {residual:e} above 1e-10 after {iterations} iterations"
        )));
    }

    if opts.check_uniqueness {
        let mixed = DensityMatrix::maximally_mixed(&liouvillian.basis);
        // a degenerate kernel keeps an O(1) part of the start vector, so a
        // loose solve is enough to tell the two answers apart
        let (x2, _) = solve(gen.layout.gather(&mixed.data, sectors), 1e-7, 1e-6);
        let tr2 = gen.trace(&x2);
        let diff = if tr2.norm() < 1e-12 || !tr2.re.is_finite() {
            f64::INFINITY
        } else {
            let x2 = normalize(x2);
            norm2(&x.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>())
        };
        if !(diff <= 1e-4 * norm2(&x)) {
            return Err(Error::DegenerateSteadyState(format!(
                "solutions from vacuum and maximally mixed starts differ by {diff:e}"
            )));
        }
    }

    Ok(SteadyStateReport {
        rho: DensityMatrix {
            data: gen.layout.scatter(&x, d, sectors),
        },
        iterations,
        residual,
    })
}

/// `2Γ_det · Tr(ρ n_k)` at the network's detection site.
pub fn transmission(rho_ss: &DensityMatrix, network: &ValidatedNetwork, basis: &FockBasis) -> f64 {
    let det = network.detection();
    (2.0 * det.rate_gamma_det * rho_ss.occupation(basis, det.site)).max(0.0)
}

/// Steady-state transmission of `network` at the given Fock cutoff.
pub fn fock_transmission(network: &ValidatedNetwork, cutoff: usize) -> Result<f64> {
    let basis = build_basis(network.n_sites(), cutoff)?;
    let l = build_liouvillian(network, &basis)?;
    let rho = steady_state(&l)?;
    Ok(transmission(&rho, network, &basis))
}
