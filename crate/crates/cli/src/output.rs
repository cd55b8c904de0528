//! Artifact writing. Every file embeds the resolved config and seed, and no
//! file records wall-clock data, so a rerun of the manifest reproduces each
//! byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::commands::Artifacts;
use crate::config::Settings;
use crate::{CliError, Command};

pub const TOOL: &str = "risid";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

fn config_json(s: &Settings) -> Value {
    serde_json::to_value(s).expect("settings serialize to JSON")
}

/// CSV with a `#` preamble naming the tool, seed and config.
pub fn csv_document(cmd: Command, s: &Settings, body: &str) -> String {
    let config = serde_json::to_string(&config_json(s)).expect("settings serialize to JSON");
    format!("# {TOOL} {VERSION} {cmd}\n# seed = {}\n# config = {config}\n{body}", s.seed)
}

pub fn json_document(cmd: Command, s: &Settings, results: Value) -> String {
    let doc = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": cmd.name(),
        "seed": s.seed,
        "config": config_json(s),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("JSON document serializes");
    text.push('\n');
    text
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { context: format!("writing {}", path.display()), source })
}

/// Writes the artifacts of `cmd` into `dir` and returns the paths written,
/// manifest last.
pub fn write_all(dir: &Path, cmd: Command, s: &Settings, artifacts: &Artifacts) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|source| CliError::Io { context: format!("creating {}", dir.display()), source })?;
    let mut files = Vec::new();
    if let Some(body) = &artifacts.csv {
        files.push((format!("{cmd}.csv"), csv_document(cmd, s, body)));
    }
    if let Some(results) = &artifacts.json {
        files.push((format!("{cmd}.json"), json_document(cmd, s, results.clone())));
    }
    files.push((CONFIG_FILE.to_string(), s.to_toml()));

    let mut written = Vec::with_capacity(files.len() + 1);
    for (name, contents) in &files {
        let path = dir.join(name);
        write(&path, contents)?;
        written.push(path);
    }
    let manifest = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": cmd.name(),
        "seed": s.seed,
        "config": config_json(s),
        "files": files.iter().map(|(name, _)| name.as_str()).collect::<Vec<_>>(),
        "rerun": format!("{TOOL} {cmd} --config {CONFIG_FILE} --out ."),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    write(&path, &text)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::defaults;

    #[test]
    fn csv_preamble_precedes_header() {
        let s = defaults(Command::Design);
        let doc = csv_document(Command::Design, &s, "a,b\n1,2\n");
        let lines: Vec<&str> = doc.lines().collect();
        assert_eq!(lines[0], format!("# risid {VERSION} design"));
        assert_eq!(lines[1], "# seed = 1");
        assert!(lines[2].starts_with("# config = {"));
        assert_eq!(lines[3], "a,b");
    }

    #[test]
    fn embedded_config_parses_back() {
        let s = defaults(Command::Confusion);
        let doc: Value = serde_json::from_str(&json_document(Command::Confusion, &s, json!(null))).unwrap();
        assert_eq!(doc["config"], config_json(&s));
        assert_eq!(doc["seed"], 1);
    }
}
