//! Case-file and configuration parsing.

pub mod matpower;
pub mod yaml;

use std::path::Path;

pub use matpower::{case_to_network, matpower_parse, MatpowerCase, MatpowerError};
pub use yaml::{
    expand_document, expand_document_with, expand_entries, loop_expand, ParseContext, ParserRegistry, PluginResult, YamlError, YamlScope,
};

use crate::network::{network_dump, Network};

/// Reads a Matpower file into a network.
pub fn load_matpower(path: impl AsRef<Path>) -> Result<Network, Box<dyn std::error::Error + Send + Sync>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let case = matpower_parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(case_to_network(&case)?)
}

/// Canonical JSON text for a parsed case: the case tables and the network
/// built from them.
pub fn canonical_case_json(case: &MatpowerCase) -> Result<String, MatpowerError> {
    let net = case_to_network(case)?;
    let value = serde_json::json!({
        "case": serde_json::to_value(case).expect("case serializes"),
        "network": network_dump(&net)?,
    });
    Ok(serde_json::to_string_pretty(&value).expect("value serializes") + "\n")
}

/// Reads the case tables back from canonical JSON text.
pub fn case_from_canonical_json(text: &str) -> Result<MatpowerCase, serde_json::Error> {
    #[derive(serde::Deserialize)]
    struct Canonical {
        case: MatpowerCase,
    }
    Ok(serde_json::from_str::<Canonical>(text)?.case)
}

/// Registry for building a bare network: only the `matpower` keyword.
pub fn network_registry() -> ParserRegistry<Network> {
    let mut reg = ParserRegistry::new();
    reg.register("matpower", |v, net: &mut Network, ctx| {
        let file = v
            .get("input_file")
            .and_then(|f| f.as_str())
            .ok_or("matpower needs input_file")?;
        *net = load_matpower(ctx.resolve(file))?;
        Ok(())
    });
    reg
}
