//! Truncated multi-mode Fock space and the bosonic operators on it.
//!
//! Product states |n_0 n_1 … n_{N-1}⟩ with 0 ≤ n_i ≤ cutoff are enumerated
//! with site 0 slowest-varying:
//! `index = Σ_i n_i (cutoff+1)^(N-1-i)`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::ValidatedNetwork;
use crate::sparse::SparseOperator;

/// Default cap on the Liouvillian side `dim²` (so `dim ≤ 1024`).
pub const DEFAULT_MAX_LIOUVILLIAN_SIDE: u128 = 1 << 20;
/// Environment variable overriding [`DEFAULT_MAX_LIOUVILLIAN_SIDE`].
pub const MAX_DIM_ENV: &str = "NAT_SIM_MAX_DIM";
pub const DEFAULT_CUTOFF: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FockBasis {
    n_sites: usize,
    cutoff: usize,
    dim: usize,
    strides: Vec<usize>,
}

impl FockBasis {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn levels(&self) -> usize {
        self.cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stride(&self, site: usize) -> usize {
        self.strides[site]
    }

    pub fn occupation(&self, state: usize, site: usize) -> usize {
        (state / self.strides[site]) % self.levels()
    }

    pub fn occupations(&self, state: usize) -> Vec<usize> {
        (0..self.n_sites).map(|i| self.occupation(state, i)).collect()
    }

    pub fn total_number(&self, state: usize) -> usize {
        (0..self.n_sites).map(|i| self.occupation(state, i)).sum()
    }

    pub fn index(&self, occupations: &[usize]) -> usize {
        assert_eq!(occupations.len(), self.n_sites);
        occupations
            .iter()
            .zip(&self.strides)
            .map(|(&n, &s)| {
                assert!(n <= self.cutoff);
                n * s
            })
            .sum()
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return Err(Error::IndexOutOfRange {
                what: "site",
                index: site,
                limit: self.n_sites,
            });
        }
        Ok(())
    }
}

/// Cap on `dim²` from `NAT_SIM_MAX_DIM`, falling back to the default.
pub fn max_side_from_env() -> u128 {
    std::env::var(MAX_DIM_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u128>().ok())
        .unwrap_or(DEFAULT_MAX_LIOUVILLIAN_SIDE)
}

/// Uniform-cutoff basis, capped by [`max_side_from_env`].
pub fn build_basis(n_sites: usize, cutoff: usize) -> Result<FockBasis> {
    build_basis_with_cap(n_sites, cutoff, max_side_from_env())
}

pub fn build_basis_with_cap(n_sites: usize, cutoff: usize, max_side: u128) -> Result<FockBasis> {
    if n_sites == 0 {
        return Err(Error::invalid("n_sites", "must be >= 1"));
    }
    if cutoff == 0 {
        return Err(Error::invalid("cutoff", "must be >= 1"));
    }
    let levels = cutoff as u128 + 1;
    let side = (0..2 * n_sites).try_fold(1u128, |acc, _| acc.checked_mul(levels));
    match side {
        Some(side) if side <= max_side => {}
        side => {
            return Err(Error::Overflow {
                n_sites,
                cutoff,
                side: side.unwrap_or(u128::MAX),
                cap: max_side,
            })
        }
    }
    let dim = (cutoff + 1).pow(n_sites as u32);
    let mut strides = vec![1usize; n_sites];
    for i in (0..n_sites.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * (cutoff + 1);
    }
    Ok(FockBasis {
        n_sites,
        cutoff,
        dim,
        strides,
    })
}

/// â_site: ⟨n−1|â|n⟩ = √n on the site's factor, identity elsewhere.
pub fn site_annihilator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    basis.check_site(site)?;
    let stride = basis.stride(site);
    let entries = (0..basis.dim()).filter_map(|s| {
        let n = basis.occupation(s, site);
        (n > 0).then(|| (s - stride, s, Complex64::new((n as f64).sqrt(), 0.0)))
    });
    Ok(SparseOperator::from_triplets(basis.dim(), basis.dim(), entries))
}

pub fn site_creator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    Ok(site_annihilator(basis, site)?.adjoint())
}

pub fn number_operator(basis: &FockBasis, site: usize) -> Result<SparseOperator> {
    basis.check_site(site)?;
    Ok(SparseOperator::diagonal(
        (0..basis.dim()).map(|s| basis.occupation(s, site) as f64),
    ))
}

pub fn total_number_operator(basis: &FockBasis) -> SparseOperator {
    SparseOperator::diagonal((0..basis.dim()).map(|s| basis.total_number(s) as f64))
}

/// H = Σ ω_i n_i + Σ_edges g_ij (a_i† a_j + a_i a_j†), built directly on the
/// product basis.
pub fn hamiltonian_matrix(network: &ValidatedNetwork, basis: &FockBasis) -> Result<SparseOperator> {
    if network.n_sites() != basis.n_sites() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} sites, basis has {}",
            network.n_sites(),
            basis.n_sites()
        )));
    }
    let cutoff = basis.cutoff();
    let mut t = Vec::new();
    for s in 0..basis.dim() {
        let occ = basis.occupations(s);
        let diag: f64 = network.omega().iter().zip(&occ).map(|(w, &n)| w * n as f64).sum();
        if diag != 0.0 {
            t.push((s, s, Complex64::new(diag, 0.0)));
        }
        for &(i, j, g) in network.edges() {
            // photon hops j -> i and i -> j
            for (to, from) in [(i, j), (j, i)] {
                let (n_to, n_from) = (occ[to], occ[from]);
                if n_from == 0 || n_to == cutoff {
                    continue;
                }
                let target = s - basis.stride(from) + basis.stride(to);
                let amp = g * ((n_from * (n_to + 1)) as f64).sqrt();
                t.push((target, s, Complex64::new(amp, 0.0)));
            }
        }
    }
    Ok(SparseOperator::from_triplets(basis.dim(), basis.dim(), t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{standard_four_site, validate_network, Coupling, InterferenceMode, NetworkSpec};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(build_basis(1, 3).unwrap().dim(), 4);
        assert_eq!(build_basis(4, 3).unwrap().dim(), 256);
        assert_eq!(
            build_basis_with_cap(4, 4, DEFAULT_MAX_LIOUVILLIAN_SIDE).unwrap().dim(),
            625
        );
        assert_eq!(
            build_basis_with_cap(5, 3, DEFAULT_MAX_LIOUVILLIAN_SIDE).unwrap().dim(),
            1024
        );
    }

    #[test]
    fn eight_sites_overflow_default_cap() {
        let err = build_basis_with_cap(8, 3, DEFAULT_MAX_LIOUVILLIAN_SIDE).unwrap_err();
        match err {
            Error::Overflow { side, .. } => assert_eq!(side, 65536u128 * 65536),
            e => panic!("unexpected {e:?}"),
        }
        assert!(build_basis_with_cap(0, 3, 1 << 20).is_err());
        assert!(build_basis_with_cap(2, 0, 1 << 20).is_err());
    }

    #[test]
    fn enumeration_is_site_zero_slowest() {
        let b = build_basis(3, 2).unwrap();
        assert_eq!(b.occupations(1), vec![0, 0, 1]);
        assert_eq!(b.occupations(3), vec![0, 1, 0]);
        assert_eq!(b.occupations(9), vec![1, 0, 0]);
        for s in 0..b.dim() {
            assert_eq!(b.index(&b.occupations(s)), s);
        }
    }

    #[test]
    fn single_mode_annihilator() {
        let b = build_basis(1, 1).unwrap();
        let a = site_annihilator(&b, 0).unwrap();
        let e: Vec<_> = a.entries().collect();
        assert_eq!(e, vec![(0, 1, c(1.0))]);

        let b = build_basis(1, 4).unwrap();
        let a = site_annihilator(&b, 0).unwrap();
        for n in 0..=4 {
            for m in 0..=4 {
                let want = if m >= 1 && n == m - 1 { (m as f64).sqrt() } else { 0.0 };
                assert_eq!(a.get(n, m), c(want));
            }
        }
        assert!(site_annihilator(&b, 1).is_err());
    }

    #[test]
    fn canonical_commutator_except_at_cutoff() {
        let cutoff = 3;
        let b = build_basis(1, cutoff).unwrap();
        let a = site_annihilator(&b, 0).unwrap();
        let ad = a.adjoint();
        let comm = a.matmul(&ad).sub(&ad.matmul(&a));
        for n in 0..cutoff {
            assert!((comm.get(n, n) - c(1.0)).norm() < 1e-14, "n={n}");
        }
        assert!((comm.get(cutoff, cutoff) - c(-(cutoff as f64))).norm() < 1e-14);
    }

    #[test]
    fn different_sites_commute() {
        let b = build_basis(3, 2).unwrap();
        let ops: Vec<_> = (0..3).map(|i| site_annihilator(&b, i).unwrap()).collect();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(ops[i].commutator(&ops[j]).nnz(), 0);
                    assert_eq!(ops[i].commutator(&ops[j].adjoint()).nnz(), 0);
                }
            }
        }
    }

    fn two_site(g: f64) -> ValidatedNetwork {
        validate_network(NetworkSpec {
            n_sites: 2,
            omega: vec![0.0, 0.0],
            couplings: vec![Coupling { i: 0, j: 1, g }, Coupling { i: 1, j: 0, g }],
            gamma_deph: vec![0.0, 0.0],
            injection: Some(crate::network::InjectionSpec {
                site: 0,
                rate_gamma0: 0.0,
                n_thermal: 0.0,
            }),
            detection: Some(crate::network::DetectionSpec {
                site: 1,
                rate_gamma_det: 0.0,
            }),
        })
        .unwrap()
    }

    #[test]
    fn zero_network_gives_zero_hamiltonian() {
        let b = build_basis(2, 2).unwrap();
        let h = hamiltonian_matrix(&two_site(0.0), &b).unwrap();
        assert_eq!(h.nnz(), 0);
    }

    #[test]
    fn two_site_single_excitation_block() {
        let g = 0.37;
        let b = build_basis(2, 1).unwrap();
        let h = hamiltonian_matrix(&two_site(g), &b).unwrap();
        let s10 = b.index(&[1, 0]);
        let s01 = b.index(&[0, 1]);
        assert_eq!(h.get(s10, s10), c(0.0));
        assert_eq!(h.get(s01, s01), c(0.0));
        assert_eq!(h.get(s10, s01), c(g));
        assert_eq!(h.get(s01, s10), c(g));
    }

    fn product_route(net: &ValidatedNetwork, b: &FockBasis) -> SparseOperator {
        let a: Vec<_> = (0..b.n_sites()).map(|i| site_annihilator(b, i).unwrap()).collect();
        let mut h = SparseOperator::zeros(b.dim(), b.dim());
        for (i, w) in net.omega().iter().enumerate() {
            h = h.add(&a[i].adjoint().matmul(&a[i]).scale(c(*w)));
        }
        for &(i, j, g) in net.edges() {
            let hop = a[i].adjoint().matmul(&a[j]).add(&a[i].matmul(&a[j].adjoint()));
            h = h.add(&hop.scale(c(g)));
        }
        h
    }

    #[test]
    fn direct_construction_matches_operator_products() {
        let b = build_basis(4, 3).unwrap();
        for mode in [InterferenceMode::Constructive, InterferenceMode::Destructive] {
            let net = validate_network(standard_four_site(mode, 1.3, 0.4, None).unwrap()).unwrap();
            let h = hamiltonian_matrix(&net, &b).unwrap();
            let h2 = product_route(&net, &b);
            assert_eq!(h.nnz(), h2.nnz());
            for (r, col, v) in h.entries() {
                assert!((v - h2.get(r, col)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn four_site_hamiltonian_hermitian_and_number_conserving() {
        let b = build_basis(4, 3).unwrap();
        let net =
            validate_network(standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap()).unwrap();
        let h = hamiltonian_matrix(&net, &b).unwrap();
        assert!(h.is_hermitian());
        let n = total_number_operator(&b);
        assert_eq!(h.commutator(&n).max_abs(), 0.0);
    }

    #[test]
    fn sign_flip_touches_only_site01_hops() {
        let b = build_basis(4, 3).unwrap();
        let hc = hamiltonian_matrix(
            &validate_network(standard_four_site(InterferenceMode::Constructive, 0.5, 0.0, None).unwrap()).unwrap(),
            &b,
        )
        .unwrap();
        let hd = hamiltonian_matrix(
            &validate_network(standard_four_site(InterferenceMode::Destructive, 0.5, 0.0, None).unwrap()).unwrap(),
            &b,
        )
        .unwrap();
        let diff = hc.sub(&hd);
        assert!(diff.nnz() > 0);
        for (r, col, _) in diff.entries() {
            let (x, y) = (b.occupations(r), b.occupations(col));
            let moved_01 =
                (x[0] as i64 - y[0] as i64).abs() == 1 && x[0] + x[1] == y[0] + y[1] && x[2] == y[2] && x[3] == y[3];
            assert!(moved_01, "{x:?} vs {y:?}");
        }
    }

    #[test]
    fn mismatched_basis_rejected() {
        let b = build_basis(3, 2).unwrap();
        assert!(matches!(
            hamiltonian_matrix(&two_site(0.1), &b),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
