//! Extraction of a JSON object embedded in surrounding prose.
//!
//! Model output routinely wraps the requested JSON in extra text or a
//! code fence. This scans for the first balanced top-level object,
//! string-aware so braces inside string values do not confuse it.

/// Returns the first balanced `{...}` block, or `None` when no
/// complete object is present.
pub(crate) fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, ch) in raw[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + offset + ch.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}
