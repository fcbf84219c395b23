use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no JSON value found in model output")]
    NoJsonFound,
}

/// Pulls the first balanced, parseable top-level JSON object out of model
/// output, ignoring code fences and surrounding prose.
pub fn extract_json(output: &str) -> Result<&str, ExtractError> {
    extract_balanced(output, b'{', b'}')
}

/// Same as [`extract_json`] for a top-level array.
pub fn extract_json_array(output: &str) -> Result<&str, ExtractError> {
    extract_balanced(output, b'[', b']')
}

fn extract_balanced(output: &str, open: u8, close: u8) -> Result<&str, ExtractError> {
    let bytes = output.as_bytes();
    let mut from = 0;
    while let Some(rel) = bytes[from..].iter().position(|&b| b == open) {
        let start = from + rel;
        if let Some(end) = balanced_end(bytes, start, open, close) {
            let candidate = &output[start..=end];
            if serde_json::from_str::<serde_json::Value>(candidate).is_ok() {
                return Ok(candidate);
            }
        }
        from = start + 1;
    }
    Err(ExtractError::NoJsonFound)
}

/// Index of the bracket closing the one at `start`, honoring JSON strings.
fn balanced_end(bytes: &[u8], start: usize, open: u8, close: u8) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            _ if b == open => depth += 1,
            _ if b == close => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}
