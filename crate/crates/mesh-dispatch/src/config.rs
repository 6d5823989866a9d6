//! CLI configuration: a single JSON document selecting the case, the run
//! parameters, and the output layout.
//!
//! ```json
//! {
//!   "case": "ieee14",
//!   "run": { "rho": 0.1, "epsilon": 0.05, "n_min": 300, "n_max": 1000,
//!            "seed": 42, "inner_tol": 1e-8 },
//!   "output": { "directory": "out", "emit_per_node": false }
//! }
//! ```
//!
//! Instead of the name, `case` may carry an inline scenario with a
//! topology (`nodes` plus a 1-based edge list), a full per-hub parameter
//! table, and the settlement price. Every section tolerates omitted
//! fields (falling back to the documented defaults) but rejects unknown
//! keys outright, so typos fail loudly before any computation starts.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::admm::RunConfig;
use crate::casegen::{ieee14_case, CaseStudy};
use crate::error::Error;
use crate::hub::{HubParameters, TradePrice};
use crate::network::Topology;

/// Fully validated configuration, ready to execute.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub case: CaseStudy,
    pub run: RunConfig,
    pub output: OutputOptions,
}

#[derive(Debug, Clone)]
pub struct OutputOptions {
    pub directory: PathBuf,
    pub emit_per_node: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    case: CaseSection,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CaseSection {
    Named(String),
    Inline(InlineCase),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineCase {
    topology: TopologySection,
    hubs: Vec<HubParameters>,
    zeta: TradePrice,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    rho: Option<f64>,
    epsilon: Option<f64>,
    n_min: Option<usize>,
    n_max: Option<usize>,
    seed: Option<u64>,
    inner_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    directory: Option<PathBuf>,
    emit_per_node: Option<bool>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: None,
            emit_per_node: None,
        }
    }
}

impl RunSection {
    fn merge_into(&self, base: RunConfig) -> RunConfig {
        RunConfig {
            rho: self.rho.unwrap_or(base.rho),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            n_min: self.n_min.unwrap_or(base.n_min),
            n_max: self.n_max.unwrap_or(base.n_max),
            seed: self.seed.unwrap_or(base.seed),
            inner_tol: self.inner_tol.unwrap_or(base.inner_tol),
        }
    }
}

/// Parses and validates a configuration document.
pub fn load(path: &Path) -> Result<LoadedConfig, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|err| Error::config(format!("cannot read {}: {err}", path.display())))?;
    parse(&text).map_err(|err| match err {
        Error::InvalidConfig(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Parses a configuration document from its text.
pub fn parse(text: &str) -> Result<LoadedConfig, Error> {
    let file: ConfigFile =
        serde_json::from_str(text).map_err(|err| Error::config(err.to_string()))?;

    let case = match file.case {
        CaseSection::Named(name) => match name.as_str() {
            "ieee14" => ieee14_case(),
            other => {
                return Err(Error::config(format!(
                    "unknown case name {other:?}; expected \"ieee14\" or an inline case object"
                )))
            }
        },
        CaseSection::Inline(inline) => {
            let topology = Topology::new(inline.topology.nodes, &inline.topology.edges)?;
            if inline.hubs.is_empty() {
                return Err(Error::config("inline case must define at least one hub"));
            }
            if inline.hubs.len() != topology.node_count() {
                return Err(Error::config(format!(
                    "inline case defines {} hubs for a {}-node topology",
                    inline.hubs.len(),
                    topology.node_count()
                )));
            }
            for (i, hub) in inline.hubs.iter().enumerate() {
                hub.validate()
                    .map_err(|err| Error::config(format!("hub {} invalid: {err}", i + 1)))?;
            }
            let zeta = TradePrice::new(inline.zeta.zeta_e, inline.zeta.zeta_g)?;
            CaseStudy {
                topology,
                hubs: inline.hubs,
                zeta,
                defaults: RunConfig::default(),
            }
        }
    };

    let run = file.run.merge_into(case.defaults);
    run.validate()?;

    let output = OutputOptions {
        directory: file
            .output
            .directory
            .unwrap_or_else(|| PathBuf::from("out")),
        emit_per_node: file.output.emit_per_node.unwrap_or(false),
    };

    Ok(LoadedConfig { case, run, output })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_case_with_overrides() {
        let cfg = parse(
            r#"{
                "case": "ieee14",
                "run": { "rho": 0.5, "seed": 7 },
                "output": { "directory": "results", "emit_per_node": true }
            }"#,
        )
        .unwrap();
        assert_eq!(cfg.case.hubs.len(), 14);
        assert_eq!(cfg.run.rho, 0.5);
        assert_eq!(cfg.run.seed, 7);
        // Untouched fields keep the case defaults.
        assert_eq!(cfg.run.epsilon, 0.05);
        assert_eq!(cfg.run.n_min, 300);
        assert_eq!(cfg.output.directory, PathBuf::from("results"));
        assert!(cfg.output.emit_per_node);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse(r#"{ "case": "ieee14" }"#).unwrap();
        assert_eq!(cfg.run, RunConfig::default());
        assert_eq!(cfg.output.directory, PathBuf::from("out"));
        assert!(!cfg.output.emit_per_node);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = parse(r#"{ "case": "ieee14", "runs": {} }"#);
        assert!(matches!(bad, Err(Error::InvalidConfig(_))));
        let bad_nested = parse(r#"{ "case": "ieee14", "run": { "rh": 0.1 } }"#);
        assert!(matches!(bad_nested, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unknown_case_name_is_rejected() {
        let bad = parse(r#"{ "case": "ieee15" }"#);
        match bad {
            Err(Error::InvalidConfig(msg)) => assert!(msg.contains("ieee15")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_run_values_are_rejected() {
        let bad = parse(r#"{ "case": "ieee14", "run": { "rho": -1.0 } }"#);
        assert!(matches!(bad, Err(Error::InvalidConfig(_))));
    }

    fn inline_snippet(edges: &str, hub_count: usize) -> String {
        let hub = r#"{
            "efficiencies": { "eta_ee": 0.9, "eta_ce": 0.7, "eta_ch": 0.5, "eta_gh": 0.4 },
            "r_lo": { "e": 0.0, "g": 0.0 }, "r_hi": { "e": 100.0, "g": 100.0 },
            "s_lo": { "e": 0.0, "g": 0.0 }, "s_hi": { "e": 100.0, "g": 100.0 },
            "d_lo": { "e": 0.0, "g": 0.0 }, "d_hi": { "e": 100.0, "g": 100.0 },
            "cost_e": { "c2": 0.1, "c1": 12.0 }, "cost_g": { "c2": 0.03, "c1": 5.5 },
            "util_e": { "c2": 0.1, "c1": 7.5 }, "util_g": { "c2": 0.02, "c1": 3.5 }
        }"#;
        let hubs = vec![hub; hub_count].join(",");
        format!(
            r#"{{
                "case": {{
                    "topology": {{ "nodes": {hub_count}, "edges": {edges} }},
                    "hubs": [{hubs}],
                    "zeta": {{ "zeta_e": 1.1, "zeta_g": 0.6 }}
                }}
            }}"#
        )
    }

    #[test]
    fn inline_case_parses_and_validates() {
        let cfg = parse(&inline_snippet("[[1,2],[2,3]]", 3)).unwrap();
        assert_eq!(cfg.case.hubs.len(), 3);
        assert_eq!(cfg.case.topology.node_count(), 3);
        // Optional hub fields defaulted.
        assert_eq!(cfg.case.hubs[0].taguchi_theta, 0.0);
        assert_eq!(cfg.case.hubs[0].welfare_constant, 0.0);
    }

    #[test]
    fn disconnected_inline_topology_is_rejected() {
        let bad = parse(&inline_snippet("[[1,2]]", 3));
        assert!(matches!(bad, Err(Error::InvalidTopology(_))));
    }

    #[test]
    fn hub_count_mismatch_is_rejected() {
        // Keep the 3-node triangle but drop the hub list to two entries.
        let snippet = inline_snippet("[[1,2],[2,3],[1,3]]", 3);
        let start = snippet.find("\"hubs\": [").unwrap();
        let hubs_open = start + "\"hubs\": [".len();
        let hubs_close = snippet[hubs_open..].find(']').unwrap() + hubs_open;
        let hubs = &snippet[hubs_open..hubs_close];
        let boundary = hubs.rfind("},{").unwrap();
        let trimmed = format!(
            "{}{}{}",
            &snippet[..hubs_open],
            &hubs[..boundary + 1],
            &snippet[hubs_close..]
        );
        match parse(&trimmed) {
            Err(Error::InvalidConfig(msg)) => assert!(msg.contains("2 hubs")),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
