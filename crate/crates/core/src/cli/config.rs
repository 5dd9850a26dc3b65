//! Flat `key=value` config files.
//!
//! Keys are long flag names without the leading dashes. Blank lines and
//! text after `#` are ignored. A value of `true` turns into a bare switch,
//! `false` drops the key.

use std::path::Path;

use super::CliError;

/// Parses config text into `(key, value)` pairs, in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
        let key = k.trim().trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(CliError::Validation(format!("config line {}: invalid key `{}`", i + 1, k.trim())));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

/// Turns config pairs into command-line tokens.
pub fn to_args(pairs: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let pairs = parse("# header\n\ndir = rr  # trailing\nt1=0.5\n--beta=0.9\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("dir".to_string(), "rr".to_string()),
                ("t1".to_string(), "0.5".to_string()),
                ("beta".to_string(), "0.9".to_string()),
            ]
        );
        assert_eq!(to_args(&pairs)[0], "--dir=rr");
    }

    #[test]
    fn switches() {
        let pairs = parse("estimated-recast=true\nquiet=false").unwrap();
        assert_eq!(to_args(&pairs), vec!["--estimated-recast".to_string()]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("no equals sign").is_err());
        assert!(parse("= 3").is_err());
        assert!(parse("two words = 3").is_err());
    }
}
