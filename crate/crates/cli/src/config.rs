//! `--config` files: flat `key = value` lines whose keys are long flag names.
//!
//! Config entries are turned into flag tokens and spliced in right after the
//! subcommand, skipping any key the user already passed on the command line.

use std::ffi::OsString;
use std::path::Path;

/// Global flags that take a value, so the subcommand search can skip them.
const VALUED_GLOBALS: [&str; 4] = ["--seed", "--threads", "--out", "--config"];

/// Flags that exclude each other: setting one on the command line drops the
/// others from the config.
const EXCLUSIVE: [&[&str]; 3] = [
    &["parry", "ergodic"],
    &["beta", "beta-k"],
    &["jumps", "init"],
];

#[derive(Debug, PartialEq)]
pub struct ConfigError(pub String);

pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(ConfigError(format!(
                "line {}: invalid key '{key}'",
                lineno + 1
            )));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Path given by `--config` / `--config=`, if any.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = s.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn given_on_command_line(args: &[OsString], key: &str) -> bool {
    let flag = format!("--{key}");
    let with_value = format!("--{key}=");
    args.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag.as_str() || s.starts_with(&with_value)
    })
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if VALUED_GLOBALS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// `args` with the config entries inserted after the subcommand. Boolean
/// entries become bare flags when `true` and are dropped when `false`.
pub fn merge(args: &[OsString], entries: &[(String, String)]) -> Vec<OsString> {
    let Some(at) = subcommand_index(args) else {
        return args.to_vec();
    };
    let mut tokens: Vec<OsString> = Vec::new();
    for (key, value) in entries {
        let blocked = given_on_command_line(args, key)
            || EXCLUSIVE
                .iter()
                .filter(|group| group.contains(&key.as_str()))
                .any(|group| group.iter().any(|k| given_on_command_line(args, k)));
        if blocked {
            continue;
        }
        match value.to_ascii_lowercase().as_str() {
            "true" => tokens.push(format!("--{key}").into()),
            "false" => {}
            _ => tokens.push(format!("--{key}={value}").into()),
        }
    }
    let mut merged = args[..=at].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&args[at + 1..]);
    merged
}

pub fn load_and_merge(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(Path::new(&path)).map_err(|e| {
        ConfigError(format!(
            "cannot read config {}: {e}",
            path.to_string_lossy()
        ))
    })?;
    Ok(merge(&args, &parse(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_flat_key_values() {
        let entries = parse("# comment\neps = 0.2\n\nf=x2  # trailing\n--steps = 5\n").unwrap();
        assert_eq!(
            entries,
            vec![
                ("eps".into(), "0.2".into()),
                ("f".into(), "x2".into()),
                ("steps".into(), "5".into())
            ]
        );
        assert!(parse("eps 0.2").is_err());
        assert!(parse("config = other.cfg").is_err());
    }

    #[test]
    fn command_line_wins_over_config() {
        let args = os(&["betalab", "--seed", "3", "stability", "--eps", "0.3"]);
        let entries = parse("eps = 0.2\nseed = 9\nsteps = 50\nparry = false").unwrap();
        let merged = merge(&args, &entries);
        assert_eq!(
            merged,
            os(&[
                "betalab",
                "--seed",
                "3",
                "stability",
                "--steps=50",
                "--eps",
                "0.3"
            ])
        );
    }

    #[test]
    fn exclusive_flags_block_each_other() {
        let args = os(&["betalab", "psi-curve", "--parry"]);
        let merged = merge(&args, &parse("ergodic = true\nn = 1e6").unwrap());
        assert_eq!(merged, os(&["betalab", "psi-curve", "--n=1e6", "--parry"]));
    }

    #[test]
    fn finds_config_path_in_both_spellings() {
        assert_eq!(
            config_path(&os(&["b", "parry", "--config", "a.cfg"])),
            Some("a.cfg".into())
        );
        assert_eq!(
            config_path(&os(&["b", "--config=b.cfg", "parry"])),
            Some("b.cfg".into())
        );
        assert_eq!(config_path(&os(&["b", "parry"])), None);
    }
}
