//! Shipped scenarios. The documents live in `data/` and are embedded at
//! compile time; table paths resolve against that directory.

use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};
use crate::io::{parse_scenario, Scenario};

const PRESETS: &[(&str, &str)] = &[
    ("sellers_linf", include_str!("../data/sellers_linf.json")),
    ("budyko_crossing", include_str!("../data/budyko_crossing.json")),
    ("inversion", include_str!("../data/inversion.json")),
    ("sellers_table", include_str!("../data/sellers_table.json")),
];

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn load(name: &str) -> Result<Scenario> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| invalid(format!("unknown preset {name:?}")))?;
    parse_scenario(text, &data_dir())
}

/// Unit forcing and emissivity with `u0 = 0`, so the sup-norm bound is 1.
pub fn sellers_linf() -> Scenario {
    load("sellers_linf").expect("shipped preset is valid")
}

/// Budyko model whose ice line crosses the threshold within the run.
pub fn budyko_crossing() -> Scenario {
    load("budyko_crossing").expect("shipped preset is valid")
}

/// Smooth Sellers model with a dead-zone kernel for the reconstruction
/// experiments.
pub fn inversion() -> Scenario {
    load("inversion").expect("shipped preset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_names_itself() {
        for name in names() {
            let s = load(name).unwrap();
            assert_eq!(s.name(), name);
        }
        assert!(load("nope").is_err());
    }

    #[test]
    fn sellers_bound_is_one() {
        let s = sellers_linf();
        let m = s.params.linf_bound(0.0).unwrap();
        assert!((m - 1.0).abs() < 1e-12, "{m}");
    }
}
