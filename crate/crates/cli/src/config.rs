//! `--config FILE`: a JSON object whose keys are flag names without the
//! leading dashes. Its entries are spliced into the argument list after the
//! subcommand unless the same flag already appears on the command line.

use std::fs;

use serde_json::Value;

pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(pos) = args
        .iter()
        .position(|a| a == "--config" || a.starts_with("--config="))
    else {
        return Ok(args);
    };
    let (path, consumed) = match args[pos].strip_prefix("--config=") {
        Some(p) => (p.to_owned(), 1),
        None => match args.get(pos + 1) {
            Some(p) => (p.clone(), 2),
            None => return Err("--config needs a file path".into()),
        },
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
    let Value::Object(map) = value else {
        return Err(format!("{path}: config must be a JSON object"));
    };

    let mut rest: Vec<String> = args[..pos].to_vec();
    rest.extend_from_slice(&args[pos + consumed..]);
    let present = |flag: &str| {
        rest.iter().any(|a| {
            a == flag
                || a.strip_prefix(flag)
                    .is_some_and(|tail| tail.starts_with('='))
        })
    };

    let mut injected = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            return Err(format!("{path}: config files cannot nest"));
        }
        if present(&flag) {
            continue;
        }
        match value {
            Value::Bool(true) => injected.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    injected.push(flag.clone());
                    injected.push(
                        scalar(&item)
                            .ok_or_else(|| format!("{path}: `{key}` has a nested value"))?,
                    );
                }
            }
            other => {
                injected.push(flag);
                injected.push(
                    scalar(&other).ok_or_else(|| format!("{path}: `{key}` has a nested value"))?,
                );
            }
        }
    }
    // argv[0] and the subcommand come first.
    let at = rest.len().min(2);
    rest.splice(at..at, injected);
    Ok(rest)
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn flags_win_over_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(
            &cfg,
            r#"{"lambda": 3, "n_way": 5, "center": true, "text": ["a.cmv", "b.cmv"]}"#,
        )
        .unwrap();
        let out = expand(argv(&format!(
            "visalign eval --lambda 7 --config {}",
            cfg.display()
        )))
        .unwrap();
        assert_eq!(out[..2], argv("visalign eval")[..]);
        assert!(out.windows(2).any(|w| w == ["--lambda", "7"]));
        assert!(!out.iter().any(|a| a == "3"));
        assert!(out.windows(2).any(|w| w == ["--n-way", "5"]));
        assert!(out.iter().any(|a| a == "--center"));
        assert_eq!(out.iter().filter(|a| *a == "--text").count(), 2);
    }

    #[test]
    fn no_config_is_identity() {
        assert_eq!(
            expand(argv("visalign eval --lambda 1")).unwrap(),
            argv("visalign eval --lambda 1")
        );
    }

    #[test]
    fn bad_config() {
        assert!(expand(argv("visalign eval --config")).is_err());
        assert!(expand(argv("visalign eval --config /nonexistent/x.json")).is_err());
    }
}
