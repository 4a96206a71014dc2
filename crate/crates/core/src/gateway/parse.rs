//! Parsing of model responses: numbered/bulleted lists and actor replies.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unparseable list: no numbered or bulleted items found")]
    UnparseableList,
    #[error("empty response")]
    Empty,
}

/// Strips a list marker ("1.", "1)", "-", "*", "•") from the start of a line.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = t.strip_prefix(bullet) {
            return Some(rest);
        }
    }
    if matches!(t, "-" | "*" | "•") {
        return Some("");
    }
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return None;
    }
    let rest = &t[digits..];
    let rest = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')'))?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

/// Extracts list items in order. Text before the first marker is ignored;
/// unmarked lines after an item continue it. Empty items are dropped and the
/// result is truncated to `max_items`.
pub fn parse_numbered_list(text: &str, max_items: usize) -> Result<Vec<String>, ParseError> {
    assert!(max_items >= 1, "max_items must be at least 1");
    let mut items: Vec<String> = Vec::new();
    let mut in_item = false;
    for line in text.lines() {
        if let Some(rest) = strip_marker(line) {
            items.push(rest.trim().to_owned());
            in_item = true;
        } else if in_item {
            let cont = line.trim();
            if cont.is_empty() {
                in_item = false;
            } else if let Some(last) = items.last_mut() {
                if !last.is_empty() {
                    last.push(' ');
                }
                last.push_str(cont);
            }
        }
    }
    items.retain(|i| !i.is_empty());
    if items.is_empty() {
        return Err(ParseError::UnparseableList);
    }
    items.truncate(max_items);
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAction {
    pub thought: Option<String>,
    pub action: String,
}

/// Splits an actor reply into an optional thought and one action line.
///
/// Lines starting with `think:` form the thought. The first other non-empty
/// line is the action, with an optional `Action:` or `>` prefix removed. A
/// reply with only a thought yields its first line as the action, which the
/// environment will reject.
pub fn parse_action(text: &str) -> Result<ParsedAction, ParseError> {
    let mut thoughts = Vec::new();
    let mut action = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("think:") {
            if action.is_none() {
                thoughts.push(line[6..].trim().to_owned());
            }
            continue;
        }
        if action.is_none() {
            let mut a = line;
            if lower.starts_with("action:") {
                a = line[7..].trim();
            }
            if let Some(rest) = a.strip_prefix('>') {
                a = rest.trim();
            }
            if !a.is_empty() {
                action = Some(a.to_owned());
            }
        }
    }
    let thought = (!thoughts.is_empty()).then(|| thoughts.join(" "));
    match action {
        Some(action) => Ok(ParsedAction { thought, action }),
        None => {
            let first = text
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .ok_or(ParseError::Empty)?;
            Ok(ParsedAction {
                thought,
                action: first.to_owned(),
            })
        }
    }
}
