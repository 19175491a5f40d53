/// Splits an identifier-like run into lowercase parts on `_` and camelCase
/// boundaries (`HTTPServer` -> `http`, `server`).
fn split_identifier(run: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for piece in run.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                parts.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    parts
}

/// Retrieval tokenizer.
///
/// Lowercases and splits on non-alphanumeric characters. Identifiers are
/// emitted intact (e.g. `quantumcircuit`, `create_quantum_circuit`) followed
/// by their snake_case / camelCase parts.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    for run in text.split(|c: char| !is_word(c)).filter(|r| !r.is_empty()) {
        let parts = split_identifier(run);
        if parts.is_empty() {
            continue;
        }
        let whole = run.trim_matches('_').to_lowercase();
        if parts.len() > 1 {
            tokens.push(whole);
        }
        tokens.extend(parts);
    }
    tokens
}

/// Case-preserving code tokens: identifier/number runs and single
/// punctuation characters. Whitespace is dropped.
pub fn code_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let word = c.is_alphanumeric() || c == '_';
        if word {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        out.push(&text[s..]);
    }
    out
}
