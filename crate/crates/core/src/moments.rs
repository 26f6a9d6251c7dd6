//! Second-moment engine.
//!
//! For a number-conserving quadratic Hamiltonian `H = Σ M_ij a_i† a_j` with
//! linear gain/loss and number dephasing, the moments `C_ij = ⟨a_i† a_j⟩` obey
//! the closed linear system
//!
//! ```text
//! dC/dt = i(Mᵀ C − C Mᵀ) − ½{D, C} − G ∘ C + P
//! ```
//!
//! with `D` the diagonal loss (Γ₀ at the injection site, 2Γ_det at the
//! detection site), `G_ij = γ_i + γ_j` off the diagonal and zero on it, and `P`
//! the diagonal pump (n_th Γ₀ at the injection site). See `docs/moment-closure.md`
//! for the derivation. First moments and anomalous moments `⟨a_i a_j⟩` start at
//! zero from the vacuum and stay there, so they are not tracked.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{hermitian_eigenvalues, matmul, triangular_sylvester, CMat, Op, Schur};
use crate::lindblad::DensityMatrix;
use crate::network::ValidatedNetwork;
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::trajectory::{sample_run, uniform_grid, Trajectory, MIN_INTERVALS};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Hermitian positive-semidefinite matrix of moments `C_ij = ⟨a_i† a_j⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentMatrix {
    #[serde(serialize_with = "serialize_cmat")]
    c: CMat,
}

fn serialize_cmat<S: serde::Serializer>(c: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..c.nrows())
        .map(|i| (0..c.ncols()).map(|j| [c[(i, j)].re, c[(i, j)].im]).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

impl MomentMatrix {
    pub fn zeros(n_sites: usize) -> Self {
        MomentMatrix {
            c: CMat::zeros(n_sites, n_sites),
        }
    }

    /// Wrap a square matrix; invariants are checked by [`check`](Self::check).
    pub fn from_matrix(c: CMat) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "moment matrix must be square, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(MomentMatrix { c })
    }

    pub fn n_sites(&self) -> usize {
        self.c.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.c
    }

    pub fn occupation(&self, site: usize) -> f64 {
        self.c[(site, site)].re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.c - self.c.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.c + self.c.adjoint()) * Complex64::new(0.5, 0.0);
        hermitian_eigenvalues(&h).first().copied().unwrap_or(0.0)
    }

    /// Hermitian within 1e-12, PSD within −1e-10, real nonnegative diagonal.
    pub fn check(&self) -> Result<()> {
        let h = self.hermiticity_error();
        if h > 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "moment matrix not Hermitian (error {h:e})"
            )));
        }
        for i in 0..self.n_sites() {
            let d = self.c[(i, i)];
            if d.im.abs() > 1e-12 || d.re < -1e-10 {
                return Err(Error::InvariantViolation(format!("diagonal entry C[{i}][{i}] = {d}")));
            }
        }
        let m = self.min_eigenvalue();
        if m < -1e-10 {
            return Err(Error::InvariantViolation(format!(
                "moment matrix not PSD (min eigenvalue {m:e})"
            )));
        }
        Ok(())
    }
}

/// `C_ij = Tr(ρ a_i† a_j)` for a Fock-space density matrix.
pub fn moments_from_density(rho: &DensityMatrix, basis: &FockBasis) -> Result<MomentMatrix> {
    let n = basis.n_sites();
    let r = rho.data();
    if r.nrows() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "density matrix is {}x{}, basis dimension {}",
            r.nrows(),
            r.ncols(),
            basis.dim()
        )));
    }
    let top = basis.cutoff();
    let mut c = CMat::zeros(n, n);
    // Tr(ρ a_i† a_j) = Σ_s √n_j(s) √(n_i(s − e_j) + 1) ρ[s, s − e_j + e_i]
    for s in 0..basis.dim() {
        for j in 0..n {
            let nj = basis.occupation(s, j);
            if nj == 0 {
                continue;
            }
            let lowered = s - basis.stride(j);
            for i in 0..n {
                let ni = basis.occupation(lowered, i);
                if ni == top {
                    continue;
                }
                let amp = ((nj * (ni + 1)) as f64).sqrt();
                c[(i, j)] += r[(s, lowered + basis.stride(i))] * amp;
            }
        }
    }
    MomentMatrix::from_matrix(c)
}

/// Generator of the moment dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGenerator {
    m: CMat,
    loss: Vec<f64>,
    pump: Vec<f64>,
    deph: Vec<f64>,
    detection: Option<(usize, f64)>,
}

impl MomentGenerator {
    pub fn new(m: CMat, loss: Vec<f64>, pump: Vec<f64>, deph: Vec<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n || loss.len() != n || pump.len() != n || deph.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "M is {}x{}, loss/pump/deph have lengths {}/{}/{}",
                m.nrows(),
                m.ncols(),
                loss.len(),
                pump.len(),
                deph.len()
            )));
        }
        if (&m - m.adjoint()).iter().any(|v| v.norm() > 0.0) {
            return Err(Error::invalid("M", "must be Hermitian"));
        }
        for (name, v) in [("loss", &loss), ("pump", &pump), ("deph", &deph)] {
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::invalid(format!("{name}[{i}]"), "must be finite and nonnegative"));
            }
        }
        Ok(MomentGenerator {
            m,
            loss,
            pump,
            deph,
            detection: None,
        })
    }

    pub fn with_detection(mut self, site: usize, gamma_det: f64) -> Self {
        self.detection = Some((site, gamma_det));
        self
    }

    pub fn n_sites(&self) -> usize {
        self.m.nrows()
    }

    pub fn m(&self) -> &CMat {
        &self.m
    }

    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    pub fn pump(&self) -> &[f64] {
        &self.pump
    }

    pub fn deph(&self) -> &[f64] {
        &self.deph
    }

    pub fn detection(&self) -> Option<(usize, f64)> {
        self.detection
    }

    /// `A = i Mᵀ − ½ D − Γ`, so that the linear part is `A C + C A† + 2 Γ diag(C)`.
    fn drift(&self) -> CMat {
        let n = self.n_sites();
        let mut a = self.m.transpose() * I;
        for i in 0..n {
            a[(i, i)] -= Complex64::new(0.5 * self.loss[i] + self.deph[i], 0.0);
        }
        a
    }

    /// Linear part of the generator (everything except the pump).
    pub fn apply_linear(&self, c: &CMat) -> CMat {
        let n = self.n_sites();
        let mt = self.m.transpose();
        let mut out = (&mt * c - c * &mt) * I;
        for i in 0..n {
            for j in 0..n {
                let mut rate = 0.5 * (self.loss[i] + self.loss[j]);
                if i != j {
                    rate += self.deph[i] + self.deph[j];
                }
                out[(i, j)] -= c[(i, j)] * rate;
            }
        }
        out
    }

    /// `dC/dt` at `C`.
    pub fn apply(&self, c: &CMat) -> CMat {
        let mut out = self.apply_linear(c);
        for i in 0..self.n_sites() {
            out[(i, i)] += Complex64::new(self.pump[i], 0.0);
        }
        out
    }

    fn pump_matrix(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            self.n_sites(),
            self.pump.iter().map(|&p| Complex64::new(p, 0.0)),
        ))
    }

    /// Sites of a coupling-connected component that has no loss channel.
    fn lossless_component(&self) -> Option<Vec<usize>> {
        let n = self.n_sites();
        let mut comp = vec![usize::MAX; n];
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut members = vec![start];
            comp[start] = start;
            let mut k = 0;
            while k < members.len() {
                let i = members[k];
                for j in 0..n {
                    if j != i && comp[j] == usize::MAX && self.m[(i, j)] != ZERO {
                        comp[j] = start;
                        members.push(j);
                    }
                }
                k += 1;
            }
            if members.iter().all(|&i| self.loss[i] == 0.0) {
                members.sort_unstable();
                return Some(members);
            }
        }
        None
    }
}

/// Moment generator for a validated network.
pub fn build_moment_generator(network: &ValidatedNetwork) -> MomentGenerator {
    let n = network.n_sites();
    let mut m = CMat::zeros(n, n);
    for (i, &w) in network.omega().iter().enumerate() {
        m[(i, i)] = Complex64::new(w, 0.0);
    }
    for &(i, j, g) in network.edges() {
        m[(i, j)] = Complex64::new(g, 0.0);
        m[(j, i)] = Complex64::new(g, 0.0);
    }
    let inj = network.injection();
    let det = network.detection();
    let mut loss = vec![0.0; n];
    let mut pump = vec![0.0; n];
    loss[inj.site] += inj.rate_gamma0;
    pump[inj.site] += inj.n_thermal * inj.rate_gamma0;
    loss[det.site] += 2.0 * det.rate_gamma_det;
    MomentGenerator {
        m,
        loss,
        pump,
        deph: network.gamma_deph().to_vec(),
        detection: Some((det.site, det.rate_gamma_det)),
    }
}

/// Solver for `A C + C A† + 2 Γ diag(C) = R`.
///
/// The Lyapunov part is inverted through the Schur form of `A`; the diagonal
/// dephasing correction is a rank-|S| update over the dephased sites `S`.
struct LinearSolver {
    schur: Schur,
    dephased: Vec<usize>,
    gammas: Vec<f64>,
    /// `W_m = Λ⁻¹(E_mm)` for `m ∈ S`.
    w: Vec<CMat>,
    /// LU of `I + K`, `K_im = 2 γ_m W_m[i, i]`.
    correction: Option<nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl LinearSolver {
    fn new(gen: &MomentGenerator) -> Result<Self> {
        let n = gen.n_sites();
        let schur = Schur::new(gen.drift());
        let scale = schur.t.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-300);
        for (i, ev) in schur.eigenvalues().iter().enumerate() {
            if ev.re > -1e-10 * scale {
                return Err(Error::SingularSystem(format!(
                    "normal mode {i} (frequency {:.6}) has decay rate {:.3e}: a dark mode decoupled from every loss channel",
                    -ev.im, -ev.re
                )));
            }
        }
        let mut s = LinearSolver {
            schur,
            dephased: (0..n).filter(|&i| gen.deph[i] > 0.0).collect(),
            gammas: Vec::new(),
            w: Vec::new(),
            correction: None,
        };
        s.gammas = s.dephased.iter().map(|&m| gen.deph[m]).collect();
        for &m in &s.dephased.clone() {
            let mut e = CMat::zeros(n, n);
            e[(m, m)] = Complex64::new(1.0, 0.0);
            s.w.push(s.lyapunov(&e)?);
        }
        if !s.dephased.is_empty() {
            let k = s.dephased.len();
            let mut mat = DMatrix::<Complex64>::identity(k, k);
            for (col, wm) in s.w.iter().enumerate() {
                for (row, &i) in s.dephased.iter().enumerate() {
                    mat[(row, col)] += wm[(i, i)] * (2.0 * s.gammas[col]);
                }
            }
            let lu = mat.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularSystem("dephasing correction is singular".into()));
            }
            s.correction = Some(lu);
        }
        Ok(s)
    }

    /// `Λ⁻¹(R)` with `Λ(C) = A C + C A†`.
    fn lyapunov(&self, r: &CMat) -> Result<CMat> {
        let q = &self.schur.q;
        let mut f = matmul(&matmul(q, Op::H, r, Op::N), Op::N, q, Op::N);
        let scale = self.schur.t.iter().map(|v| v.norm()).fold(0.0f64, f64::max).max(1e-300);
        triangular_sylvester(&self.schur.t, 1.0, &mut f, 1e-13 * scale, None)
            .map_err(|(i, j)| Error::SingularSystem(format!("Lyapunov operator singular at mode pair ({i}, {j})")))?;
        Ok(matmul(&matmul(q, Op::N, &f, Op::N), Op::N, q, Op::H))
    }

    fn solve(&self, r: &CMat) -> Result<CMat> {
        let mut c = self.lyapunov(r)?;
        if let Some(lu) = &self.correction {
            let rhs = nalgebra::DVector::from_iterator(self.dephased.len(), self.dephased.iter().map(|&i| c[(i, i)]));
            let diag = lu
                .solve(&rhs)
                .ok_or_else(|| Error::SingularSystem("dephasing correction is singular".into()))?;
            for (k, wm) in self.w.iter().enumerate() {
                c -= wm * (diag[k] * (2.0 * self.gammas[k]));
            }
        }
        Ok(c)
    }
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn hermitize(c: CMat) -> CMat {
    (&c + c.adjoint()) * Complex64::new(0.5, 0.0)
}

fn structural_check(gen: &MomentGenerator) -> Result<()> {
    if let Some(sites) = gen.lossless_component() {
        return Err(Error::SingularSystem(format!(
            "sites {sites:?} have no path to a loss channel"
        )));
    }
    Ok(())
}

/// Steady state `dC/dt = 0`, residual ≤ 1e-12.
///
/// Cost is O(|S| n³) for |S| dephased sites: one Schur factorization of the
/// drift matrix, one Lyapunov solve per dephased site, and a small dense solve
/// for the dephased populations.
pub fn steady_moments(gen: &MomentGenerator) -> Result<MomentMatrix> {
    structural_check(gen)?;
    let solver = LinearSolver::new(gen)?;
    let p = gen.pump_matrix();
    let target = -p.clone();
    let mut c = solver.solve(&target)?;
    let tol = 1e-12;
    for _ in 0..3 {
        let res = gen.apply(&c);
        if max_abs(&res) <= tol {
            break;
        }
        // apply(C) = lin(C) + P, so the correction solves lin(δ) = −apply(C)
        c += solver.solve(&(-res))?;
    }
    let c = hermitize(c);
    let res = max_abs(&gen.apply(&c));
    if res > tol {
        return Err(Error::SingularSystem(format!(
            "ill-conditioned moment system: residual {res:e}"
        )));
    }
    MomentMatrix::from_matrix(c)
}

/// Steady state by a dense LU solve of the n²-unknown system; reference
/// implementation for small `n`.
pub fn steady_moments_dense(gen: &MomentGenerator) -> Result<MomentMatrix> {
    structural_check(gen)?;
    let n = gen.n_sites();
    let n2 = n * n;
    let mut k = DMatrix::<Complex64>::zeros(n2, n2);
    let mut e = CMat::zeros(n, n);
    for col in 0..n2 {
        let (r, c) = (col % n, col / n);
        e[(r, c)] = Complex64::new(1.0, 0.0);
        let img = gen.apply_linear(&e);
        e[(r, c)] = ZERO;
        for (row, v) in img.iter().enumerate() {
            k[(row, col)] = *v;
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n2, gen.pump_matrix().iter().map(|v| -v));
    let lu = k.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("moment system matrix is singular".into()))?;
    let c = hermitize(CMat::from_column_slice(n, n, sol.as_slice()));
    let res = max_abs(&gen.apply(&c));
    if !(res <= 1e-10) {
        return Err(Error::SingularSystem(format!(
            "ill-conditioned moment system: residual {res:e}"
        )));
    }
    MomentMatrix::from_matrix(c)
}

/// `2Γ_det · C_kk` at the detection site.
pub fn transmission_from_moments(c_ss: &MomentMatrix, network: &ValidatedNetwork) -> f64 {
    let det = network.detection();
    (2.0 * det.rate_gamma_det * c_ss.occupation(det.site)).max(0.0)
}

/// Steady-state transmission of `network` from the moment engine.
pub fn moment_transmission(network: &ValidatedNetwork) -> Result<f64> {
    let gen = build_moment_generator(network);
    Ok(transmission_from_moments(&steady_moments(&gen)?, network))
}

struct MomentOde<'a> {
    gen: &'a MomentGenerator,
}

impl OdeSystem for MomentOde<'_> {
    fn dim(&self) -> usize {
        self.gen.n_sites().pow(2)
    }

    fn rhs(&self, _t: f64, y: &[Complex64], dy: &mut [Complex64]) {
        let n = self.gen.n_sites();
        let c = CMat::from_column_slice(n, n, y);
        dy.copy_from_slice(self.gen.apply(&c).as_slice());
    }
}

#[derive(Debug, Clone)]
pub struct MomentEvolution {
    /// Occupations and `E_tr` on the dense sampling grid.
    pub trajectory: Trajectory,
    /// Full moment matrices on a uniform grid of [`MIN_INTERVALS`] + 1 points.
    pub sample_times: Vec<f64>,
    pub samples: Vec<MomentMatrix>,
}

impl MomentEvolution {
    pub fn final_moments(&self) -> &MomentMatrix {
        self.samples.last().expect("evolution has samples")
    }
}

/// Integrate the moment equations from `c0` to `t_final`.
pub fn evolve_moments(gen: &MomentGenerator, c0: &MomentMatrix, t_final: f64, tol: f64) -> Result<MomentEvolution> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::invalid(
            "t_final",
            format!("must be positive and finite, got {t_final}"),
        ));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::invalid("tol", format!("must lie in (0, 1), got {tol}")));
    }
    let n = gen.n_sites();
    if c0.n_sites() != n {
        return Err(Error::DimensionMismatch(format!(
            "C0 has {} sites, generator {n}",
            c0.n_sites()
        )));
    }
    c0.check()?;
    let sys = MomentOde { gen };
    let sample_times = uniform_grid(t_final, MIN_INTERVALS);
    let mut samples = Vec::with_capacity(sample_times.len());
    let run = integrate(
        &sys,
        c0.c.as_slice().to_vec(),
        t_final,
        &OdeOptions::with_tol(tol),
        |y| (0..n).map(|i| y[i + i * n].re).collect(),
        &sample_times,
        |_, _, y| {
            samples.push(MomentMatrix {
                c: CMat::from_column_slice(n, n, y),
            })
        },
    )?;
    let (det_site, gamma_det) = gen.detection.unwrap_or((0, 0.0));
    let trajectory = sample_run(&run, t_final, tol, n, det_site, gamma_det, false);
    Ok(MomentEvolution {
        trajectory,
        sample_times,
        samples,
    })
}
