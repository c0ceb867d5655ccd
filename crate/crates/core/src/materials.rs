//! Multigroup macroscopic cross sections.
//!
//! The scattering matrix is stored source-group major: `sigma_s[from][to]`
//! is the cross section for scattering out of group `from` into group `to`.
//! Non-fissile materials carry all-zero `nu_sigma_f` and `chi`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHI_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionSet {
    pub name: String,
    /// Total cross section per group, 1/cm.
    pub sigma_t: Vec<f64>,
    /// `sigma_s[from][to]`, 1/cm.
    pub sigma_s: Vec<Vec<f64>>,
    pub nu_sigma_f: Vec<f64>,
    pub chi: Vec<f64>,
}

/// A single broken invariant of a [`CrossSectionSet`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoGroups,
    ShapeMismatch { field: &'static str, expected: usize, found: usize },
    NonPositiveTotal { group: usize, value: f64 },
    NegativeScattering { from: usize, to: usize, value: f64 },
    NonPositiveRemoval { group: usize, value: f64 },
    NegativeFission { group: usize, value: f64 },
    NegativeChi { group: usize, value: f64 },
    ChiNotNormalized { sum: f64 },
    NonFinite { field: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoGroups => write!(f, "no energy groups"),
            Violation::ShapeMismatch { field, expected, found } => {
                write!(f, "{field} has length {found}, expected {expected}")
            }
            Violation::NonPositiveTotal { group, value } => {
                write!(f, "non-positive total cross section in group {group} ({value})")
            }
            Violation::NegativeScattering { from, to, value } => {
                write!(f, "negative scattering cross section {from}->{to} ({value})")
            }
            Violation::NonPositiveRemoval { group, value } => {
                write!(f, "non-positive removal cross section in group {group} ({value})")
            }
            Violation::NegativeFission { group, value } => {
                write!(f, "negative nu-sigma-f in group {group} ({value})")
            }
            Violation::NegativeChi { group, value } => {
                write!(f, "negative chi in group {group} ({value})")
            }
            Violation::ChiNotNormalized { sum } => write!(f, "chi not normalized (sum = {sum})"),
            Violation::NonFinite { field } => write!(f, "{field} contains a non-finite value"),
        }
    }
}

impl CrossSectionSet {
    pub fn num_groups(&self) -> usize {
        self.sigma_t.len()
    }

    pub fn is_fissile(&self) -> bool {
        self.nu_sigma_f.iter().any(|&v| v > 0.0)
    }

    /// Group removal cross section `sigma_t[g] - sigma_s[g][g]`.
    pub fn removal_xs(&self, g: usize) -> Result<f64> {
        let removal = self.sigma_t[g] - self.sigma_s[g][g];
        if removal > 0.0 {
            Ok(removal)
        } else {
            Err(Error::InvalidMaterial {
                material: self.name.clone(),
                group: g,
                reason: format!("non-positive removal cross section {removal}"),
            })
        }
    }

    /// Checks every invariant and reports all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let g = self.sigma_t.len();
        if g == 0 {
            out.push(Violation::NoGroups);
            return out;
        }
        let mut shape_ok = true;
        for (field, len) in
            [("sigma_s", self.sigma_s.len()), ("nu_sigma_f", self.nu_sigma_f.len()), ("chi", self.chi.len())]
        {
            if len != g {
                out.push(Violation::ShapeMismatch { field, expected: g, found: len });
                shape_ok = false;
            }
        }
        for row in &self.sigma_s {
            if row.len() != g {
                out.push(Violation::ShapeMismatch { field: "sigma_s row", expected: g, found: row.len() });
                shape_ok = false;
            }
        }
        let all_finite = self.sigma_t.iter().all(|v| v.is_finite())
            && self.sigma_s.iter().flatten().all(|v| v.is_finite())
            && self.nu_sigma_f.iter().all(|v| v.is_finite())
            && self.chi.iter().all(|v| v.is_finite());
        if !all_finite {
            out.push(Violation::NonFinite { field: "cross sections" });
        }
        if !shape_ok {
            return out;
        }

        for (group, &value) in self.sigma_t.iter().enumerate() {
            if value <= 0.0 {
                out.push(Violation::NonPositiveTotal { group, value });
            }
        }
        for (from, row) in self.sigma_s.iter().enumerate() {
            for (to, &value) in row.iter().enumerate() {
                if value < 0.0 {
                    out.push(Violation::NegativeScattering { from, to, value });
                }
            }
        }
        for group in 0..g {
            let value = self.sigma_t[group] - self.sigma_s[group][group];
            // a zero total is already reported above
            if self.sigma_t[group] > 0.0 && value <= 0.0 {
                out.push(Violation::NonPositiveRemoval { group, value });
            }
        }
        for (group, &value) in self.nu_sigma_f.iter().enumerate() {
            if value < 0.0 {
                out.push(Violation::NegativeFission { group, value });
            }
        }
        for (group, &value) in self.chi.iter().enumerate() {
            if value < 0.0 {
                out.push(Violation::NegativeChi { group, value });
            }
        }
        if self.is_fissile() {
            let sum: f64 = self.chi.iter().sum();
            if (sum - 1.0).abs() > CHI_SUM_TOL {
                out.push(Violation::ChiNotNormalized { sum });
            }
        }
        out
    }

    /// Validates and converts the violation list into an error.
    pub fn check(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::MaterialViolations { name: self.name.clone(), violations })
        }
    }
}

/// Two-group fuel and moderator data of the two-region slab benchmark.
/// The fission spectrum is not tabulated for this problem; all fission
/// neutrons are born in the fast group.
pub mod benchmark {
    use super::CrossSectionSet;

    pub fn fuel() -> CrossSectionSet {
        CrossSectionSet {
            name: "fuel".into(),
            sigma_t: vec![0.4241, 0.7377],
            sigma_s: vec![vec![0.3944, 0.0007568], vec![0.001266, 0.4021]],
            nu_sigma_f: vec![0.02615, 0.6285],
            chi: vec![1.0, 0.0],
        }
    }

    pub fn moderator() -> CrossSectionSet {
        CrossSectionSet {
            name: "moderator".into(),
            sigma_t: vec![0.6823, 1.8690],
            sigma_s: vec![vec![0.6531, 0.0288], vec![0.002143, 1.857]],
            nu_sigma_f: vec![0.0, 0.0],
            chi: vec![0.0, 0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_group(sigma_t: f64, sigma_s: f64, nu_sigma_f: f64) -> CrossSectionSet {
        CrossSectionSet {
            name: "m".into(),
            sigma_t: vec![sigma_t],
            sigma_s: vec![vec![sigma_s]],
            nu_sigma_f: vec![nu_sigma_f],
            chi: vec![if nu_sigma_f > 0.0 { 1.0 } else { 0.0 }],
        }
    }

    #[test]
    fn removal_matches_table_values() {
        let fuel = benchmark::fuel();
        assert_abs_diff_eq!(fuel.removal_xs(0).unwrap(), 0.0297, epsilon = 1e-12);
        let moderator = benchmark::moderator();
        assert_abs_diff_eq!(moderator.removal_xs(1).unwrap(), 0.0120, epsilon = 1e-12);
    }

    #[test]
    fn removal_without_self_scatter_is_total() {
        let m = one_group(1.3, 0.0, 0.0);
        assert_eq!(m.removal_xs(0).unwrap(), 1.3);
    }

    #[test]
    fn removal_rejects_non_positive() {
        let m = one_group(1.0, 1.0, 0.0);
        assert!(matches!(m.removal_xs(0), Err(Error::InvalidMaterial { group: 0, .. })));
    }

    #[test]
    fn removal_plus_self_scatter_is_total() {
        for m in [benchmark::fuel(), benchmark::moderator()] {
            for g in 0..2 {
                assert_eq!(m.removal_xs(g).unwrap() + m.sigma_s[g][g], m.sigma_t[g]);
            }
        }
    }

    #[test]
    fn benchmark_materials_validate() {
        assert!(benchmark::fuel().validate().is_empty());
        assert!(benchmark::moderator().validate().is_empty());
    }

    #[test]
    fn chi_must_sum_to_one_when_fissile() {
        let mut m = benchmark::fuel();
        m.chi = vec![0.9, 0.2];
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("chi not normalized"));
    }

    #[test]
    fn void_is_reported() {
        let mut m = benchmark::moderator();
        m.sigma_t[0] = 0.0;
        let v = m.validate();
        assert!(v.iter().any(|x| x.to_string().contains("non-positive total cross section")));
    }

    #[test]
    fn all_violations_are_reported() {
        let mut m = benchmark::fuel();
        m.sigma_t[0] = -1.0;
        m.sigma_s[1][0] = -0.1;
        m.chi = vec![0.5, 0.1];
        let v = m.validate();
        assert!(v.len() >= 3, "{v:?}");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut m = benchmark::fuel();
        m.chi.pop();
        assert!(matches!(m.validate()[0], Violation::ShapeMismatch { field: "chi", .. }));
    }
}
