use super::{ExecStatus, ExecutionResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("feedback requested for a passing execution")]
    PassingResult,
}

/// Keeps at most `limit` characters from the end of `text`, starting at a
/// line boundary whenever the cut lands inside a line that is not the last.
pub fn truncate_tail(text: &str, limit: usize) -> String {
    let count = text.chars().count();
    if count <= limit {
        return text.to_string();
    }
    let cut = text
        .char_indices()
        .nth(count - limit)
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let tail = &text[cut..];
    let at_boundary = cut == 0 || text.as_bytes()[cut - 1] == b'\n';
    if at_boundary {
        return tail.to_string();
    }
    match tail.find('\n') {
        Some(nl) if nl + 1 < tail.len() => tail[nl + 1..].to_string(),
        _ => tail.to_string(),
    }
}

fn render_seconds(seconds: f64) -> String {
    if seconds.fract() == 0.0 {
        format!("{}", seconds as i64)
    } else {
        format!("{seconds}")
    }
}

/// Produces the repair feedback for a non-passing result: the tail of the
/// interpreter traceback, which ends in the error class and message.
pub fn extract_feedback(result: &ExecutionResult, limit: usize) -> Result<String, FeedbackError> {
    let text = match result.status {
        ExecStatus::Pass => return Err(FeedbackError::PassingResult),
        ExecStatus::Timeout => format!("execution timed out after {} seconds", render_seconds(result.timeout)),
        ExecStatus::Fail | ExecStatus::Error | ExecStatus::HarnessError => {
            if !result.diagnostic.trim().is_empty() {
                result.diagnostic.trim_end().to_string()
            } else if !result.raw_stderr_tail.trim().is_empty() {
                result.raw_stderr_tail.trim_end().to_string()
            } else {
                result.error_class.clone().unwrap_or_else(|| result.status.to_string())
            }
        }
    };
    Ok(truncate_tail(&text, limit))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(status: ExecStatus, diagnostic: &str) -> ExecutionResult {
        ExecutionResult {
            status,
            error_class: Some("AssertionError".into()),
            feedback: String::new(),
            wall_time: 0.1,
            raw_stdout_tail: String::new(),
            raw_stderr_tail: String::new(),
            diagnostic: diagnostic.into(),
            timeout: 600.0,
        }
    }

    #[test]
    fn short_traceback_verbatim() {
        let tb = "Traceback (most recent call last):\n  File \"<test>\", line 3, in check\nAssertionError";
        assert_eq!(extract_feedback(&result(ExecStatus::Fail, tb), 4000).unwrap(), tb);
    }

    #[test]
    fn long_traceback_keeps_tail_from_line_boundary() {
        let tb: String = (0..500).map(|i| format!("frame line number {i:05}\n")).collect::<String>() + "NameError: name 'x' is not defined";
        assert!(tb.len() > 10_000);
        let fb = extract_feedback(&result(ExecStatus::Error, &tb), 4000).unwrap();
        assert!(fb.chars().count() <= 4000);
        assert!(fb.ends_with("NameError: name 'x' is not defined"));
        assert!(fb.starts_with("frame line number"));
        assert!(tb.contains(&format!("\n{fb}")));
    }

    #[test]
    fn timeout_message_renders_configured_limit() {
        let r = result(ExecStatus::Timeout, "");
        assert_eq!(extract_feedback(&r, 4000).unwrap(), "execution timed out after 600 seconds");
        let mut r2 = r.clone();
        r2.timeout = 2.5;
        assert_eq!(extract_feedback(&r2, 4000).unwrap(), "execution timed out after 2.5 seconds");
    }

    #[test]
    fn pass_is_contract_violation() {
        assert_eq!(extract_feedback(&result(ExecStatus::Pass, ""), 10), Err(FeedbackError::PassingResult));
    }

    #[test]
    fn single_overlong_line_is_cut_hard() {
        let line = "x".repeat(50);
        assert_eq!(truncate_tail(&line, 10), "x".repeat(10));
    }
}
