use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Object roles extracted from a segmentation model's task analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRoles {
    pub target: String,
    pub destination: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse task roles: {0}")]
pub struct ParseError(pub String);

/// Parses `target: X, destination: Y` or `target: X`. Keys are
/// case-insensitive and whitespace is ignored around keys and values; a
/// comma not followed by a known key stays part of the current value.
pub fn parse_task_roles(text: &str) -> Result<TaskRoles, ParseError> {
    let mut target: Option<String> = None;
    let mut destination: Option<String> = None;
    let mut current: Option<&mut Option<String>> = None;
    for piece in text.split(',') {
        let keyed = piece.split_once(':').and_then(|(k, v)| {
            match k.trim().to_ascii_lowercase().as_str() {
                "target" => Some((true, v)),
                "destination" => Some((false, v)),
                _ => None,
            }
        });
        match keyed {
            Some((is_target, value)) => {
                let slot = if is_target { &mut target } else { &mut destination };
                if slot.is_some() {
                    return Err(ParseError(format!("repeated key in {text:?}")));
                }
                *slot = Some(value.trim().to_string());
                current = Some(slot);
            }
            None => match current.as_deref_mut() {
                Some(Some(value)) => {
                    value.push(',');
                    value.push_str(piece.trim_end());
                }
                _ => return Err(ParseError(format!("unexpected text {:?}", piece.trim()))),
            },
        }
    }
    let target = target
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ParseError(format!("no target in {text:?}")))?;
    Ok(TaskRoles { target, destination: destination.filter(|d| !d.is_empty()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_roles() {
        let r = parse_task_roles("target: sauce pan, destination: cloth").unwrap();
        assert_eq!(r, TaskRoles { target: "sauce pan".into(), destination: Some("cloth".into()) });
    }

    #[test]
    fn target_only_and_loose_formatting() {
        assert_eq!(parse_task_roles("target: carrot").unwrap().destination, None);
        let r = parse_task_roles("  TARGET :  red cup ,Destination:blue bowl \n").unwrap();
        assert_eq!(r.target, "red cup");
        assert_eq!(r.destination.as_deref(), Some("blue bowl"));
    }

    #[test]
    fn commas_inside_values() {
        let r = parse_task_roles("target: salt, pepper shaker, destination: tray").unwrap();
        assert_eq!(r.target, "salt, pepper shaker");
    }

    #[test]
    fn missing_target_fails() {
        assert!(parse_task_roles("destination: cloth").is_err());
        assert!(parse_task_roles("").is_err());
        assert!(parse_task_roles("target: ").is_err());
        assert!(parse_task_roles("target: a, target: b").is_err());
    }
}
