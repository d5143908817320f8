//! `key = value` config files. Values from the file are spliced into the
//! argument list as flags, but only for keys the command line does not
//! already set, so explicit flags always win.

use std::ffi::OsString;
use std::path::Path;

use clap::{ArgAction, Command};
use foldkit_core::{FoldError, Result};

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(FoldError::parse(
                i + 1,
                format!("expected `key = value`, got {line:?}"),
            ));
        };
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(FoldError::parse(i + 1, "empty key"));
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((key, v.to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn sets_flag(argv: &[OsString], long: &str) -> bool {
    let eq = format!("--{long}=");
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == format!("--{long}") || s.starts_with(&eq)
    })
}

/// Returns `argv` with the config file's entries appended as flags.
pub fn expand_argv(cmd: &Command, argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let Some(sub_name) = argv.get(1).map(|s| s.to_string_lossy().into_owned()) else {
        return Ok(argv);
    };
    let Some(sub) = cmd.find_subcommand(&sub_name) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).map_err(|e| {
        FoldError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut extra = Vec::new();
    for (key, value) in parse_config(&text)? {
        let long = key.replace('_', "-");
        let Some(arg) = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()))
        else {
            return Err(FoldError::configuration(format!(
                "`{sub_name}` has no option {key:?}"
            )));
        };
        if long == "config" || sets_flag(&argv, &long) {
            continue;
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value.as_str() {
                "true" => extra.push(format!("--{long}").into()),
                "false" => {}
                other => {
                    return Err(FoldError::configuration(format!(
                        "{key} must be true or false, got {other:?}"
                    )))
                }
            },
            _ => {
                extra.push(format!("--{long}").into());
                extra.push(value.into());
            }
        }
    }
    let mut out = argv;
    out.extend(extra);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines() {
        let cfg = parse_config("# c\n seed = 9\nratios = 0.25,0.5\nname = \"x y\"\n\n").unwrap();
        assert_eq!(
            cfg,
            vec![
                ("seed".into(), "9".into()),
                ("ratios".into(), "0.25,0.5".into()),
                ("name".into(), "x y".into())
            ]
        );
    }

    #[test]
    fn reports_bad_line_number() {
        match parse_config("a = 1\nnonsense\n") {
            Err(FoldError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
