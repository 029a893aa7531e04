use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use super::controller::ControllerParams;
use super::genrou::GenrouParams;

#[derive(Debug, Error)]
pub enum ParamFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bench file parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bench file invalid: {0}")]
    Invalid(String),
}

/// Bus, line and solver settings shared by every unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemSpec {
    pub mva_base: f64,
    pub freq_hz: f64,
    pub line_r: f64,
    pub line_x: f64,
    /// scheduled bus voltage magnitude at t = 0; the infinite-bus phasor is
    /// derived so this is an exact equilibrium
    pub v_bus: f64,
    pub ts: f64,
    pub bus: String,
    pub remote_bus: String,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            mva_base: 100.0,
            freq_hz: 60.0,
            line_r: 0.0,
            line_x: 0.05,
            v_bus: 1.0,
            ts: 1e-3,
            bus: "6132".to_string(),
            remote_bus: "6102".to_string(),
        }
    }
}

/// One `[[unit]]` section. Synchronous units carry the full GENROU constant
/// set plus optional exciter / governor sections; renewables reduce to a
/// lagged current source.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum UnitSpec {
    #[serde(rename = "GENROU")]
    Genrou {
        id: String,
        p_mw: f64,
        q_mvar: f64,
        #[serde(flatten)]
        params: GenrouParams,
        exciter: Option<ControllerParams>,
        governor: Option<ControllerParams>,
    },
    #[serde(rename = "RENEW")]
    Renew {
        id: String,
        p_mw: f64,
        q_mvar: f64,
        mva_base: f64,
        #[serde(rename = "T_lag", default = "default_t_lag")]
        t_lag: f64,
    },
}

fn default_t_lag() -> f64 {
    0.02
}

impl UnitSpec {
    pub fn id(&self) -> &str {
        match self {
            UnitSpec::Genrou { id, .. } | UnitSpec::Renew { id, .. } => id,
        }
    }

    pub fn dispatch_mw_mvar(&self) -> (f64, f64) {
        match self {
            UnitSpec::Genrou { p_mw, q_mvar, .. } | UnitSpec::Renew { p_mw, q_mvar, .. } => {
                (*p_mw, *q_mvar)
            }
        }
    }

    pub fn is_synchronous(&self) -> bool {
        matches!(self, UnitSpec::Genrou { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSpec {
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(rename = "unit")]
    pub units: Vec<UnitSpec>,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), ParamFileError> {
        if self.units.is_empty() {
            return Err(ParamFileError::Invalid("bench declares no units".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for u in &self.units {
            if !seen.insert(u.id().to_string()) {
                return Err(ParamFileError::Invalid(format!("duplicate unit id '{}'", u.id())));
            }
            if let UnitSpec::Genrou { params, .. } = u {
                params
                    .validate()
                    .map_err(|e| ParamFileError::Invalid(format!("unit '{}': {}", u.id(), e)))?;
            }
        }
        if self.system.ts <= 0.0 {
            return Err(ParamFileError::Invalid("Ts must be > 0".into()));
        }
        if self.system.line_x == 0.0 && self.system.line_r == 0.0 {
            return Err(ParamFileError::Invalid("line impedance must be nonzero".into()));
        }
        Ok(())
    }
}

pub fn parse_bench_str(text: &str) -> Result<BenchSpec, ParamFileError> {
    let mut spec: BenchSpec = toml::from_str(text)?;
    // the system frequency is authoritative for every unit
    for u in &mut spec.units {
        if let UnitSpec::Genrou { params, .. } = u {
            params.freq_base = spec.system.freq_hz;
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn read_bench_file(path: &Path) -> Result<BenchSpec, ParamFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParamFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_bench_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_bench() {
        let text = r#"
[system]
line_x = 0.05

[[unit]]
model = "GENROU"
id = "H"
p_mw = 57.85
q_mvar = 17.38
mva_base = 100.0
Xd = 1.9
Xq = 1.8
Xd_p = 0.3
Xq_p = 0.55
Xd_pp = 0.25
Xq_pp = 0.25
Xl = 0.15
Td0_p = 6.5
Tq0_p = 1.0
Td0_pp = 0.035
Tq0_pp = 0.06
H = 4.0
D = 0.0
S_1_0 = 0.1
S_1_2 = 0.4

[unit.exciter]
model = "SEXS"
K = 100.0

[unit.governor]
model = "HYGOV"
qNL = 0.02

[[unit]]
model = "RENEW"
id = "W"
p_mw = 60.0
q_mvar = 5.0
mva_base = 75.0
"#;
        let spec = parse_bench_str(text).unwrap();
        assert_eq!(spec.units.len(), 2);
        let UnitSpec::Genrou { params, exciter, governor, .. } = &spec.units[0] else {
            panic!("first unit is GENROU");
        };
        assert_eq!(params.freq_base, 60.0);
        assert_eq!(params.xd, 1.9);
        assert!(matches!(exciter, Some(ControllerParams::Sexs(_))));
        match governor {
            Some(ControllerParams::Hygov(h)) => assert_eq!(h.q_nl, 0.02),
            other => panic!("expected HYGOV, got {other:?}"),
        }
        assert!(!spec.units[1].is_synchronous());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"
[[unit]]
model = "RENEW"
id = "W"
p_mw = 1.0
q_mvar = 0.0
mva_base = 10.0

[[unit]]
model = "RENEW"
id = "W"
p_mw = 1.0
q_mvar = 0.0
mva_base = 10.0
"#;
        assert!(parse_bench_str(text).is_err());
    }
}
