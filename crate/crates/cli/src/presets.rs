//! Canned experiments with their original grids and path counts.

use wtrap_core::{Functional, SchemeChoice};

/// Path counts are divided by `--scale`; this default keeps the canned
/// runs in desk territory (tens of seconds). The finest grid points sit
/// within a factor of a few of the |error| ≥ 2·stderr gate even at
/// scale 1, so desk-scale runs can end with exit code 1 and data rows
/// but no fit; `--scale 1` reproduces the original experiments.
pub const DEFAULT_SCALE: f64 = 5.0;

pub struct PresetStudy {
    pub scheme_name: &'static str,
    /// θ for the trapezoidal scheme, None otherwise.
    pub theta: Option<f64>,
    pub h_list: Vec<f64>,
    /// Path count at scale 1.
    pub full_paths: u64,
}

pub struct Preset {
    pub name: &'static str,
    pub system: &'static str,
    pub functional: Functional,
    pub t_final: f64,
    pub studies: Vec<PresetStudy>,
}

impl PresetStudy {
    pub fn paths_at(&self, scale: f64) -> u64 {
        ((self.full_paths as f64 / scale).round() as u64).max(2)
    }

    pub fn scheme(&self) -> SchemeChoice {
        match self.scheme_name {
            "wt" => SchemeChoice::WeakTrapezoidal(
                wtrap_core::make_theta_scheme(self.theta.expect("wt preset carries theta"))
                    .expect("preset theta is valid"),
            ),
            "euler" => SchemeChoice::Euler,
            "midpoint-drift" => SchemeChoice::MidpointDrift,
            other => unreachable!("unknown preset scheme {other}"),
        }
    }
}

pub fn lookup_preset(name: &str) -> Option<Preset> {
    match name {
        // planar system with multiplicative + constant noise, X₂² at t=1:
        // trapezoidal on h = 1/(4k), the two first-order schemes on 1/3ᵏ
        "fig2a" => Some(Preset {
            name: "fig2a",
            system: "ou",
            functional: Functional::X2Sq,
            t_final: 1.0,
            studies: vec![
                PresetStudy {
                    scheme_name: "wt",
                    theta: Some(0.5),
                    h_list: (1..=4).map(|k| 1.0 / (4.0 * k as f64)).collect(),
                    full_paths: 10_000_000,
                },
                PresetStudy {
                    scheme_name: "euler",
                    theta: None,
                    h_list: (1..=5).map(|k| 3.0f64.powi(-k)).collect(),
                    full_paths: 500_000,
                },
                PresetStudy {
                    scheme_name: "midpoint-drift",
                    theta: None,
                    h_list: (1..=5).map(|k| 3.0f64.powi(-k)).collect(),
                    full_paths: 500_000,
                },
            ],
        }),
        // time-augmented rotation with decaying trig rates, |X|² at t=1:
        // all three schemes on h = 1/(2k)
        "fig2b" => Some(Preset {
            name: "fig2b",
            system: "talay",
            functional: Functional::NormSq,
            t_final: 1.0,
            studies: ["wt", "euler", "midpoint-drift"]
                .into_iter()
                .map(|scheme_name| PresetStudy {
                    scheme_name,
                    theta: (scheme_name == "wt").then_some(0.5),
                    h_list: (1..=8).map(|k| 1.0 / (2.0 * k as f64)).collect(),
                    full_paths: 5_000_000,
                })
                .collect(),
        }),
        _ => None,
    }
}
