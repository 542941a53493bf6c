//! `key=value` configuration files.
//!
//! Keys are long flag names (`split-threshold` or `split_threshold`). The
//! file is spliced into the argument list right after the subcommand, so
//! later command-line flags override it.

use std::path::Path;

use crate::CliError;

const SUBCOMMANDS: [&str; 4] = ["offline", "online", "eval", "synth"];

/// Parses config-file text into `(key, value)` pairs.
pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::usage(format!("{}:{}: expected key=value, got `{line}`", origin.display(), i + 1)));
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" {
            return Err(CliError::usage(format!("{}:{}: invalid key `{key}`", origin.display(), i + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn config_path(rest: &[String]) -> Option<String> {
    let mut it = rest.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Rewrites `argv` with the contents of any `--config` file inserted before
/// the user's own flags.
pub fn expand_config(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    if argv.len() < 2 || !SUBCOMMANDS.contains(&argv[1].as_str()) {
        return Ok(argv);
    }
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::missing("config file", path),
        _ => CliError::usage(format!("cannot read config file {}: {e}", path.display())),
    })?;
    let mut out = argv[..2].to_vec();
    for (key, value) in parse_config(&text, path)? {
        match value.as_str() {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    out.extend_from_slice(&argv[2..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn parses_comments_and_underscores() {
        let kv = parse_config("# c\n\ncr = 25\nsplit_threshold=12\n", Path::new("x")).unwrap();
        assert_eq!(kv, vec![("cr".into(), "25".into()), ("split-threshold".into(), "12".into())]);
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = parse_config("cr 25\n", Path::new("run.cfg")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("run.cfg:1"));
    }

    #[test]
    fn file_values_come_before_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("a.cfg");
        std::fs::write(&cfg, "cr=30\nroundabout=true\ntopo=false\n").unwrap();
        let argv = args(&["mapinfer", "synth", "--config", cfg.to_str().unwrap(), "--cr", "10"]);
        let out = expand_config(argv).unwrap();
        assert_eq!(&out[2..4], &["--cr=30".to_string(), "--roundabout".to_string()]);
        assert_eq!(out.last().unwrap(), "10");
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let err = expand_config(args(&["mapinfer", "offline", "--config=/nonexistent/x.cfg"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/x.cfg"));
    }
}
