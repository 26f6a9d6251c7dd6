//! Network specifications: site frequencies, hopping couplings, dephasing
//! rates, and the single injection / detection attachment.
//!
//! All frequencies and rates are in units of a reference coupling rate with
//! ħ = 1; times are in inverse coupling units.
//!
//! JSON schema (also accepted by the CLI `--network` flag):
//!
//! ```json
//! {
//!   "n_sites": 4,
//!   "omega": [0.0, 0.0, 0.0, 0.0],
//!   "couplings": [{"i": 0, "j": 1, "g": 0.5}, {"i": 1, "j": 0, "g": 0.5}],
//!   "gamma_deph": [0.0, 0.0, 0.0, 0.0],
//!   "injection": {"site": 0, "gamma0": 0.5, "n_th": 0.1},
//!   "detection": {"site": 3, "gamma_det": 0.5}
//! }
//! ```
//!
//! The coupling list stores both directions of every edge.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Injection rate Γ_0 of the four-site network.
pub const GAMMA0: f64 = 0.5;
/// Thermal occupation of the injecting bath.
pub const N_THERMAL: f64 = 0.1;
/// Detection rate Γ_det of the four-site network.
pub const GAMMA_DET: f64 = 0.5;
/// Hopping strength used for the open-chain benchmark topology.
pub const CHAIN_COUPLING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub i: usize,
    pub j: usize,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub site: usize,
    #[serde(rename = "gamma0")]
    pub rate_gamma0: f64,
    #[serde(rename = "n_th")]
    pub n_thermal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSpec {
    pub site: usize,
    #[serde(rename = "gamma_det")]
    pub rate_gamma_det: f64,
}

/// Raw, unvalidated network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_sites: usize,
    pub omega: Vec<f64>,
    pub couplings: Vec<Coupling>,
    pub gamma_deph: Vec<f64>,
    pub injection: Option<InjectionSpec>,
    pub detection: Option<DetectionSpec>,
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn validate(self) -> Result<ValidatedNetwork> {
        validate_network(self)
    }
}

/// Relative phase of the two arms of the diamond network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterferenceMode {
    Constructive,
    Destructive,
}

impl InterferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InterferenceMode::Constructive => "constructive",
            InterferenceMode::Destructive => "destructive",
        }
    }
}

impl fmt::Display for InterferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "constructive" | "c" => Ok(InterferenceMode::Constructive),
            "destructive" | "d" => Ok(InterferenceMode::Destructive),
            other => Err(Error::invalid("mode", format!("unknown interference mode `{other}`"))),
        }
    }
}

/// Hopping strengths of the four diamond edges (0,1), (0,2), (1,3), (2,3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourSiteCouplings {
    pub g01: f64,
    pub g02: f64,
    pub g13: f64,
    pub g23: f64,
}

impl Default for FourSiteCouplings {
    /// Repository default, inside the [0.2, 0.5] range with unequal arms.
    fn default() -> Self {
        FourSiteCouplings {
            g01: 0.5,
            g02: 0.45,
            g13: 0.2,
            g23: 0.4,
        }
    }
}

impl FourSiteCouplings {
    pub fn as_array(&self) -> [f64; 4] {
        [self.g01, self.g02, self.g13, self.g23]
    }

    /// Bit pattern key, for caches.
    pub fn key(&self) -> [u64; 4] {
        self.as_array().map(f64::to_bits)
    }
}

/// The diamond network 0 → {1, 2} → 3 with disorder and dephasing on site 2.
///
/// Destructive mode flips the sign of g_01 (and its mirror g_10); nothing else
/// changes.
pub fn standard_four_site(
    mode: InterferenceMode,
    omega2: f64,
    gamma2: f64,
    couplings: Option<FourSiteCouplings>,
) -> Result<NetworkSpec> {
    if !omega2.is_finite() {
        return Err(Error::invalid("omega2", "must be finite"));
    }
    if !gamma2.is_finite() || gamma2 < 0.0 {
        return Err(Error::invalid(
            "gamma2",
            format!("must be finite and >= 0, got {gamma2}"),
        ));
    }
    let c = couplings.unwrap_or_default();
    let g01 = match mode {
        InterferenceMode::Constructive => c.g01,
        InterferenceMode::Destructive => -c.g01,
    };
    let mut couplings = Vec::with_capacity(8);
    for (i, j, g) in [(0, 1, g01), (0, 2, c.g02), (1, 3, c.g13), (2, 3, c.g23)] {
        couplings.push(Coupling { i, j, g });
        couplings.push(Coupling { i: j, j: i, g });
    }
    Ok(NetworkSpec {
        n_sites: 4,
        omega: vec![0.0, 0.0, omega2, 0.0],
        couplings,
        gamma_deph: vec![0.0, 0.0, gamma2, 0.0],
        injection: Some(InjectionSpec {
            site: 0,
            rate_gamma0: GAMMA0,
            n_thermal: N_THERMAL,
        }),
        detection: Some(DetectionSpec {
            site: 3,
            rate_gamma_det: GAMMA_DET,
        }),
    })
}

/// Open chain 0 - 1 - ... - (n-1), injection at 0, detection at n-1.
pub fn chain(n_sites: usize, coupling: f64) -> Result<NetworkSpec> {
    if n_sites < 2 {
        return Err(Error::invalid("n_sites", "a chain needs at least 2 sites"));
    }
    let mut couplings = Vec::with_capacity(2 * (n_sites - 1));
    for i in 0..n_sites - 1 {
        couplings.push(Coupling {
            i,
            j: i + 1,
            g: coupling,
        });
        couplings.push(Coupling {
            i: i + 1,
            j: i,
            g: coupling,
        });
    }
    Ok(NetworkSpec {
        n_sites,
        omega: vec![0.0; n_sites],
        couplings,
        gamma_deph: vec![0.0; n_sites],
        injection: Some(InjectionSpec {
            site: 0,
            rate_gamma0: GAMMA0,
            n_thermal: N_THERMAL,
        }),
        detection: Some(DetectionSpec {
            site: n_sites - 1,
            rate_gamma_det: GAMMA_DET,
        }),
    })
}

/// A network whose invariants have been checked. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedNetwork {
    spec: NetworkSpec,
    edges: Vec<(usize, usize, f64)>,
    injection: InjectionSpec,
    detection: DetectionSpec,
}

impl ValidatedNetwork {
    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    pub fn omega(&self) -> &[f64] {
        &self.spec.omega
    }

    pub fn gamma_deph(&self) -> &[f64] {
        &self.spec.gamma_deph
    }

    /// Undirected edges `(i, j, g)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn injection(&self) -> &InjectionSpec {
        &self.injection
    }

    pub fn detection(&self) -> &DetectionSpec {
        &self.detection
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn into_spec(self) -> NetworkSpec {
        self.spec
    }
}

fn check_rate(value: f64, field: String, out: &mut Vec<Violation>) {
    if !value.is_finite() {
        out.push(Violation::NonFinite(field));
    } else if value < 0.0 {
        out.push(Violation::NegativeRate(field));
    }
}

/// Check every [`NetworkSpec`] invariant, collecting all violations.
pub fn validate_network(spec: NetworkSpec) -> Result<ValidatedNetwork> {
    let mut v = Vec::new();
    let n = spec.n_sites;
    if n == 0 {
        v.push(Violation::IndexOutOfRange("n_sites".into()));
    }
    if spec.omega.len() != n {
        v.push(Violation::LengthMismatch("omega".into()));
    }
    if spec.gamma_deph.len() != n {
        v.push(Violation::LengthMismatch("gamma_deph".into()));
    }
    for (i, w) in spec.omega.iter().enumerate() {
        if !w.is_finite() {
            v.push(Violation::NonFinite(format!("omega[{i}]")));
        }
    }
    for (i, &g) in spec.gamma_deph.iter().enumerate() {
        check_rate(g, format!("gamma_deph[{i}]"), &mut v);
    }

    let mut stored: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (k, c) in spec.couplings.iter().enumerate() {
        if c.i >= n || c.j >= n {
            v.push(Violation::IndexOutOfRange(format!("couplings[{k}]")));
            continue;
        }
        if c.i == c.j {
            v.push(Violation::SelfCoupling(c.i));
            continue;
        }
        if !c.g.is_finite() {
            v.push(Violation::NonFinite(format!("couplings[{k}].g")));
            continue;
        }
        if stored.insert((c.i, c.j), c.g).is_some() {
            v.push(Violation::DuplicateCoupling((c.i, c.j)));
        }
    }
    let mut edges = Vec::new();
    for (&(i, j), &g) in &stored {
        match stored.get(&(j, i)) {
            Some(&back) if back == g => {
                if i < j {
                    edges.push((i, j, g));
                }
            }
            _ => {
                // report each broken pair once, from the side that is present
                if i < j || !stored.contains_key(&(j, i)) {
                    v.push(Violation::AsymmetricCoupling((i, j)));
                }
            }
        }
    }

    match &spec.injection {
        None => v.push(Violation::MissingAttachment("injection".into())),
        Some(inj) => {
            if inj.site >= n {
                v.push(Violation::IndexOutOfRange("injection.site".into()));
            }
            check_rate(inj.rate_gamma0, "injection.gamma0".into(), &mut v);
            check_rate(inj.n_thermal, "injection.n_th".into(), &mut v);
        }
    }
    match &spec.detection {
        None => v.push(Violation::MissingAttachment("detection".into())),
        Some(det) => {
            if det.site >= n {
                v.push(Violation::IndexOutOfRange("detection.site".into()));
            }
            check_rate(det.rate_gamma_det, "detection.gamma_det".into(), &mut v);
        }
    }

    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let injection = spec.injection.expect("checked above");
    let detection = spec.detection.expect("checked above");
    Ok(ValidatedNetwork {
        spec,
        edges,
        injection,
        detection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn violations(spec: NetworkSpec) -> Vec<Violation> {
        match validate_network(spec) {
            Err(Error::Validation(v)) => v,
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn well_formed_four_site_validates() {
        let spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        let net = validate_network(spec).unwrap();
        assert_eq!(net.n_sites(), 4);
        assert_eq!(net.edges().len(), 4);
    }

    #[test]
    fn negative_dephasing_is_named() {
        let mut spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        spec.gamma_deph[2] = -0.1;
        assert_eq!(violations(spec), vec![Violation::NegativeRate("gamma_deph[2]".into())]);
    }

    #[test]
    fn missing_mirror_coupling() {
        let mut spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        spec.couplings.retain(|c| !(c.i == 1 && c.j == 0));
        assert_eq!(violations(spec), vec![Violation::AsymmetricCoupling((0, 1))]);
    }

    #[test]
    fn mismatched_mirror_value() {
        let mut spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        for c in spec.couplings.iter_mut() {
            if c.i == 3 && c.j == 2 {
                c.g = 0.1;
            }
        }
        assert_eq!(violations(spec), vec![Violation::AsymmetricCoupling((2, 3))]);
    }

    #[test]
    fn missing_attachments_and_bad_indices() {
        let mut spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        spec.injection = None;
        spec.detection.as_mut().unwrap().site = 7;
        spec.couplings.push(Coupling { i: 2, j: 2, g: 0.1 });
        let v = violations(spec);
        assert!(v.contains(&Violation::MissingAttachment("injection".into())));
        assert!(v.contains(&Violation::IndexOutOfRange("detection.site".into())));
        assert!(v.contains(&Violation::SelfCoupling(2)));
    }

    #[test]
    fn four_site_defaults() {
        let spec = standard_four_site(InterferenceMode::Constructive, 0.0, 0.0, None).unwrap();
        assert_eq!(spec.omega, vec![0.0; 4]);
        assert_eq!(spec.gamma_deph, vec![0.0; 4]);
        let inj = spec.injection.unwrap();
        let det = spec.detection.unwrap();
        assert_eq!((inj.site, inj.rate_gamma0, inj.n_thermal), (0, 0.5, 0.1));
        assert_eq!((det.site, det.rate_gamma_det), (3, 0.5));
        let g01 = spec.couplings.iter().find(|c| c.i == 0 && c.j == 1).unwrap().g;
        assert_eq!(g01, 0.5);
        for g in FourSiteCouplings::default().as_array() {
            assert!((0.2..=0.5).contains(&g));
        }
    }

    #[test]
    fn destructive_flips_only_g01() {
        let c = standard_four_site(InterferenceMode::Constructive, 0.7, 0.3, None).unwrap();
        let d = standard_four_site(InterferenceMode::Destructive, 0.7, 0.3, None).unwrap();
        let diff: Vec<_> = c
            .couplings
            .iter()
            .zip(&d.couplings)
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.i, a.j, a.g, b.g))
            .collect();
        assert_eq!(diff, vec![(0, 1, 0.5, -0.5), (1, 0, 0.5, -0.5)]);
        assert_eq!(c.omega, d.omega);
        assert_eq!(c.gamma_deph, d.gamma_deph);
    }

    #[test]
    fn sweep_range_endpoints() {
        let spec = standard_four_site(InterferenceMode::Constructive, 2.0, 1.0, None).unwrap();
        assert_eq!(spec.omega[2], 2.0);
        assert_eq!(spec.gamma_deph[2], 1.0);
        assert!(validate_network(spec).is_ok());
    }

    #[test]
    fn negative_gamma2_rejected() {
        let err = standard_four_site(InterferenceMode::Constructive, 0.0, -0.5, None).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn json_round_trip_uses_documented_keys() {
        let spec = standard_four_site(InterferenceMode::Destructive, 1.0, 0.2, None).unwrap();
        let text = spec.to_json();
        for key in [
            "n_sites",
            "omega",
            "couplings",
            "gamma_deph",
            "gamma0",
            "n_th",
            "gamma_det",
        ] {
            assert!(text.contains(key), "missing key {key}");
        }
        assert_eq!(NetworkSpec::from_json(&text).unwrap(), spec);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mode() -> impl Strategy<Value = InterferenceMode> {
            prop_oneof![
                Just(InterferenceMode::Constructive),
                Just(InterferenceMode::Destructive)
            ]
        }

        proptest! {
            #[test]
            fn standard_network_always_validates(
                m in mode(),
                w in -5.0f64..5.0,
                g in 0.0f64..3.0,
                c in proptest::array::uniform4(0.2f64..0.5),
            ) {
                let cpl = FourSiteCouplings { g01: c[0], g02: c[1], g13: c[2], g23: c[3] };
                let spec = standard_four_site(m, w, g, Some(cpl)).unwrap();
                prop_assert!(validate_network(spec).is_ok());
            }
        }
    }
}
