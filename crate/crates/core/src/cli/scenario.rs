//! Scenario configuration: a single JSON document, or the name of a bundled preset.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::isotopy::QuadraticHamiltonian;
use crate::linalg::RMat;
use crate::metaplectic::{GridWavefunction, WaveGrid, MIN_GRID};
use crate::symplectic::HamiltonianField;

pub const PRESETS: &[(&str, &str)] = &[
    ("identity", include_str!("../../presets/identity.json")),
    ("harmonic-quarter-period", include_str!("../../presets/harmonic-quarter-period.json")),
    ("harmonic-full-period", include_str!("../../presets/harmonic-full-period.json")),
    ("free-spreading", include_str!("../../presets/free-spreading.json")),
    ("driven-oscillator", include_str!("../../presets/driven-oscillator.json")),
    ("cos-kick", include_str!("../../presets/cos-kick.json")),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub hamiltonian: HamiltonianSpec,
    pub grid: GridSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadraticPreset {
    Zero,
    Harmonic,
    Free,
    PositionSquare,
}

/// `H = 1/2 M(t) z.z + m(t).z + V(x)` with `z = (x, p)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<QuadraticPreset>,
    /// `M(t) = sum_k t^k M_k`, rows `[[xx, xp], [px, pp]]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_coeffs: Vec<[[f64; 2]; 2]>,
    /// `m(t) = sum_k t^k m_k`, entries `[x, p]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Potential::is_empty")]
    pub potential: Potential,
    /// Also run the split-step reference solver.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reference: bool,
}

/// `V(x) = sum_k c_k x^k + sum a cos(k x + phase)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polynomial: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cosines: Vec<CosineTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub wavenumber: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub dx: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_final: f64,
    pub steps: usize,
    /// Intermediate free time for quadratic runs ending at a non-free time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<f64>,
}

/// Coherent state `(pi hbar)^{-1/4} exp(-(x - x0)^2 / 2 hbar + i p0 x / hbar)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub p0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    State,
    Report,
    Wigner,
}

fn one() -> f64 {
    1.0
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::State, OutputKind::Report]
}

impl Potential {
    pub fn is_empty(&self) -> bool {
        self.polynomial.iter().all(|c| *c == 0.0) && self.cosines.iter().all(|c| c.amplitude == 0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        let poly = self.polynomial.iter().rev().fold(0.0, |acc, c| acc * x + c);
        poly + self
            .cosines
            .iter()
            .map(|c| c.amplitude * (c.wavenumber * x + c.phase).cos())
            .sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let poly = self
            .polynomial
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c);
        poly - self
            .cosines
            .iter()
            .map(|c| c.amplitude * c.wavenumber * (c.wavenumber * x + c.phase).sin())
            .sum::<f64>()
    }
}

fn poly_eval<const K: usize>(coeffs: &[[f64; K]], t: f64) -> [f64; K] {
    coeffs.iter().rev().fold([0.0; K], |mut acc, c| {
        for (a, ci) in acc.iter_mut().zip(c) {
            *a = *a * t + ci;
        }
        acc
    })
}

fn finite(what: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} must be finite"), Some(what)))
    }
}

fn positive(what: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(format!("{what} must be finite and positive"), Some(what)))
    }
}

/// Field name out of a serde message such as "missing field `dx`".
fn serde_field(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

impl Scenario {
    /// Parses a scenario document; `{"preset": NAME}` loads a bundled preset.
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}"), None))?;
        if let Some(obj) = value.as_object() {
            if obj.len() == 1 {
                if let Some(name) = obj.get("preset") {
                    let name = name
                        .as_str()
                        .ok_or_else(|| CliError::config("preset must be a string", Some("preset")))?;
                    return Scenario::preset(name);
                }
            }
        }
        let scenario: Scenario = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let field = serde_field(&msg);
            CliError::Config { message: msg, field }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn preset(name: &str) -> Result<Scenario, CliError> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CliError::config(format!("unknown preset {name}"), Some("preset")))?;
        Scenario::parse(text)
    }

    pub fn emit(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.grid;
        if g.n < MIN_GRID {
            return Err(CliError::config(format!("grid.n must be at least {MIN_GRID}"), Some("n")));
        }
        finite("x_min", g.x_min)?;
        positive("dx", g.dx)?;
        positive("hbar", g.hbar)?;
        finite("t_final", self.time.t_final)?;
        if self.time.steps == 0 {
            return Err(CliError::config("time.steps must be positive", Some("steps")));
        }
        finite("x0", self.initial.x0)?;
        finite("p0", self.initial.p0)?;
        let h = &self.hamiltonian;
        if h.preset.is_some() && !h.m_coeffs.is_empty() {
            return Err(CliError::config(
                "give either hamiltonian.preset or hamiltonian.m_coeffs, not both",
                Some("m_coeffs"),
            ));
        }
        for m in &h.m_coeffs {
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(CliError::config("m_coeffs must be finite", Some("m_coeffs")));
            }
            if m[0][1] != m[1][0] {
                return Err(CliError::config("each M_k must be symmetric", Some("m_coeffs")));
            }
        }
        if h.linear.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::config("linear must be finite", Some("linear")));
        }
        let pot = &h.potential;
        if pot.polynomial.iter().any(|v| !v.is_finite())
            || pot
                .cosines
                .iter()
                .any(|c| !(c.amplitude.is_finite() && c.wavenumber.is_finite() && c.phase.is_finite()))
        {
            return Err(CliError::config("potential coefficients must be finite", Some("potential")));
        }
        if !pot.is_empty() && self.time.t_final <= 0.0 {
            return Err(CliError::config(
                "runs with a potential need t_final > 0",
                Some("t_final"),
            ));
        }
        if let Some(b) = self.time.bracket {
            finite("bracket", b)?;
            let t = self.time.t_final;
            if !(b > 0.0 && b < t) {
                return Err(CliError::config("bracket must lie strictly inside (0, t_final)", Some("bracket")));
            }
            if !h.linear.is_empty() || !pot.is_empty() {
                return Err(CliError::config(
                    "bracket applies to homogeneous quadratic Hamiltonians",
                    Some("bracket"),
                ));
            }
        }
        if h.reference && self.split_step_parts().is_none() {
            return Err(CliError::config(
                "reference solver needs H = c p^2/2 + V(x, t)",
                Some("reference"),
            ));
        }
        Ok(())
    }

    /// `M(t)` coefficients after resolving the preset.
    pub fn quadratic_coeffs(&self) -> Vec<[[f64; 2]; 2]> {
        match self.hamiltonian.preset {
            Some(QuadraticPreset::Zero) => vec![],
            Some(QuadraticPreset::Harmonic) => vec![[[1.0, 0.0], [0.0, 1.0]]],
            Some(QuadraticPreset::Free) => vec![[[0.0, 0.0], [0.0, 1.0]]],
            Some(QuadraticPreset::PositionSquare) => vec![[[1.0, 0.0], [0.0, 0.0]]],
            None => self.hamiltonian.m_coeffs.clone(),
        }
    }

    pub fn has_quadratic(&self) -> bool {
        self.quadratic_coeffs().iter().flatten().flatten().any(|v| *v != 0.0)
    }

    pub fn has_linear(&self) -> bool {
        self.hamiltonian.linear.iter().flatten().any(|v| *v != 0.0)
    }

    pub fn has_potential(&self) -> bool {
        !self.hamiltonian.potential.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        !self.has_quadratic() && !self.has_linear() && !self.has_potential()
    }

    /// Quadratic and linear part.
    pub fn quadratic(&self) -> QuadraticHamiltonian {
        let coeffs = self.quadratic_coeffs();
        let h = QuadraticHamiltonian::new(1, move |t| {
            let m = poly_eval(&coeffs.iter().map(|c| [c[0][0], c[0][1], c[1][1]]).collect::<Vec<_>>(), t);
            RMat::from_row_slice(2, 2, &[m[0], m[1], m[1], m[2]])
        });
        if self.has_linear() {
            let lin = self.hamiltonian.linear.clone();
            h.with_linear(move |t| DVector::from_vec(poly_eval(&lin, t).to_vec()))
        } else {
            h
        }
    }

    /// `V(x) + m(t).z` as a phase-space field.
    pub fn perturbation(&self) -> HamiltonianField {
        let pot = Arc::new(self.hamiltonian.potential.clone());
        let lin = self.hamiltonian.linear.clone();
        let (pv, pg, lv, lg) = (pot.clone(), pot, lin.clone(), lin);
        HamiltonianField::from_fn(2, move |z, t| {
            let m = poly_eval(&lv, t);
            pv.value(z[0]) + m[0] * z[0] + m[1] * z[1]
        })
        .with_gradient(move |z, t| {
            let m = poly_eval(&lg, t);
            vec![pg.derivative(z[0]) + m[0], m[1]]
        })
    }

    /// Full Hamiltonian as a phase-space field.
    pub fn field(&self) -> HamiltonianField {
        let q = self.quadratic().homogeneous();
        let (qv, qg) = (q.clone(), q);
        let pert = Arc::new(self.perturbation());
        let (pv, pg) = (pert.clone(), pert);
        HamiltonianField::from_fn(2, move |z, t| {
            let m = qv.matrix(t);
            let zv = DVector::from_column_slice(z);
            0.5 * zv.dot(&(&m * &zv)) + pv.value(z, t)
        })
        .with_gradient(move |z, t| {
            let zv = DVector::from_column_slice(z);
            let mz = qg.matrix(t) * &zv;
            let g = pg.gradient(z, t);
            vec![mz[0] + g[0], mz[1] + g[1]]
        })
    }

    /// `(c, V(x, t))` when `H = c p^2 / 2 + V(x, t)`.
    #[allow(clippy::type_complexity)]
    pub fn split_step_parts(&self) -> Option<(f64, Box<dyn Fn(f64, f64) -> f64 + Send + Sync>)> {
        let coeffs = self.quadratic_coeffs();
        if coeffs.iter().any(|c| c[0][1] != 0.0 || c[1][0] != 0.0) {
            return None;
        }
        if coeffs.iter().skip(1).any(|c| c[1][1] != 0.0) {
            return None;
        }
        if self.hamiltonian.linear.iter().any(|m| m[1] != 0.0) {
            return None;
        }
        let c = coeffs.first().map_or(0.0, |m| m[1][1]);
        let xx: Vec<[f64; 1]> = coeffs.iter().map(|m| [m[0][0]]).collect();
        let lin: Vec<[f64; 1]> = self.hamiltonian.linear.iter().map(|m| [m[0]]).collect();
        let pot = self.hamiltonian.potential.clone();
        Some((
            c,
            Box::new(move |x, t| 0.5 * poly_eval(&xx, t)[0] * x * x + poly_eval(&lin, t)[0] * x + pot.value(x)),
        ))
    }

    pub fn wave_grid(&self) -> Result<WaveGrid, CliError> {
        let g = &self.grid;
        WaveGrid::new(g.n, g.x_min, g.dx, g.hbar).map_err(|e| CliError::config(e.to_string(), Some("grid")))
    }

    pub fn initial_state(&self) -> Result<GridWavefunction, CliError> {
        let wave = self.wave_grid()?;
        let (x0, p0, hbar) = (self.initial.x0, self.initial.p0, wave.hbar);
        let c = (PI * hbar).powf(-0.25);
        wave.sample(|x| Complex64::from_polar(c * (-(x - x0).powi(2) / (2.0 * hbar)).exp(), p0 * x / hbar))
            .map_err(|e| CliError::config(e.to_string(), Some("grid")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn presets_parse_and_round_trip() {
        for (name, _) in PRESETS {
            let s = Scenario::preset(name).unwrap();
            assert_eq!(&s.name, name);
            let text = s.emit();
            let back = Scenario::parse(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.emit(), text);
        }
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"name": "x", "hamiltonian": {}, "grid": {"n": 64, "x_min": -5},
                       "time": {"t_final": 1, "steps": 10}}"#;
        match Scenario::parse(text) {
            Err(CliError::Config { field, .. }) => assert_eq!(field.as_deref(), Some("dx")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let base = Scenario::preset("harmonic-quarter-period").unwrap();
        let mut s = base.clone();
        s.grid.dx = -0.1;
        assert!(matches!(s.validate(), Err(CliError::Config { field: Some(f), .. }) if f == "dx"));
        let mut s = base.clone();
        s.hamiltonian.m_coeffs = vec![[[1.0, 0.5], [0.0, 1.0]]];
        s.hamiltonian.preset = None;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.time.bracket = Some(5.0);
        assert!(s.validate().is_err());
        let mut s = base;
        s.hamiltonian.m_coeffs = vec![[[1.0, 0.5], [0.5, 1.0]]];
        s.hamiltonian.preset = None;
        s.hamiltonian.reference = true;
        assert!(s.validate().is_err());
        assert!(Scenario::parse(r#"{"preset": "nope"}"#).is_err());
        assert!(Scenario::parse("{").is_err());
    }

    #[test]
    fn potential_derivative_matches_difference_quotient() {
        let pot = Potential {
            polynomial: vec![0.3, -1.0, 0.5, 0.25],
            cosines: vec![CosineTerm {
                amplitude: 0.7,
                wavenumber: 1.3,
                phase: 0.2,
            }],
        };
        for x in [-2.0, -0.3, 0.0, 1.7] {
            let h = 1e-6;
            let fd = (pot.value(x + h) - pot.value(x - h)) / (2.0 * h);
            assert!((fd - pot.derivative(x)).abs() < 1e-8);
        }
        assert_eq!(pot.value(0.0), 0.3 + 0.7 * 0.2f64.cos());
    }

    #[test]
    fn field_matches_quadratic_plus_perturbation() {
        let mut s = Scenario::preset("driven-oscillator").unwrap();
        s.hamiltonian.potential.cosines.push(CosineTerm {
            amplitude: 0.4,
            wavenumber: 2.0,
            phase: 0.0,
        });
        let f = s.field();
        let z = [0.7_f64, -0.4];
        let t = 0.3;
        let want = 0.5 * (z[0] * z[0] + z[1] * z[1]) + z[0] + 0.4 * (2.0 * z[0]).cos();
        assert!((f.value(&z, t) - want).abs() < 1e-14);
        let fd = f.fd_gradient(&z, t);
        let g = f.gradient(&z, t);
        assert!((fd[0] - g[0]).abs() < 1e-6 && (fd[1] - g[1]).abs() < 1e-6);
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        (
            8usize..300,
            -20.0f64..-1.0,
            1e-3f64..0.5,
            0.1f64..3.0,
            -5.0f64..5.0,
            1usize..5000,
            proptest::collection::vec(-3.0f64..3.0, 0..4),
            proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 0..3),
        )
            .prop_map(|(n, x_min, dx, hbar, t, steps, poly, lin)| Scenario {
                name: "prop".into(),
                hamiltonian: HamiltonianSpec {
                    preset: None,
                    m_coeffs: vec![[[1.0, 0.25], [0.25, 2.0]]],
                    linear: lin.into_iter().map(|(a, b)| [a, b]).collect(),
                    potential: Potential {
                        polynomial: poly,
                        cosines: vec![],
                    },
                    reference: false,
                },
                grid: GridSpec { n, x_min, dx, hbar },
                time: TimeSpec {
                    t_final: t,
                    steps,
                    bracket: None,
                },
                initial: InitialSpec { x0: 0.1, p0: -0.2 },
                outputs: default_outputs(),
            })
    }

    proptest! {
        #[test]
        fn emit_parse_emit_is_stable(s in arb_scenario()) {
            let text = s.emit();
            let parsed: Scenario = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&parsed, &s);
            prop_assert_eq!(parsed.emit(), text);
        }
    }
}
