use std::sync::Arc;

use coderag_core::gateway::{
    CallLogEntry, Gateway, GatewayError, GenerationRequest, Message, MockProvider, MockRule, MockScript, RetryPolicy,
};

#[test]
fn every_call_lands_in_the_call_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("logs/calls.jsonl");
    let script = MockScript::default().with_rule(MockRule {
        prompt_contains: Some("known".into()),
        completion: "def f():\n    return 1\n".into(),
        ..Default::default()
    });
    let gw = Gateway::new(RetryPolicy::none()).register(Arc::new(MockProvider::new(script))).with_call_log(&log).unwrap();
    let ok = gw.generate(&GenerationRequest::new("mock:a", vec![Message::user("a known prompt")])).unwrap();
    let err = gw.generate(&GenerationRequest::new("mock:a", vec![Message::user("something else")])).unwrap_err();
    assert!(matches!(err, GatewayError::Mock(_)), "{err}");
    gw.embed(&["x".to_string(), "y".to_string()], "mock:emb").ok();

    let lines: Vec<CallLogEntry> = std::fs::read_to_string(&log)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines.len() >= 2);
    assert_eq!(lines[0].kind, "generate");
    assert_eq!(lines[0].model_id, "mock:a");
    assert_eq!(lines[0].model_version.as_deref(), Some(ok.model_version_reported.as_str()));
    assert_eq!(lines[0].tokens_out, ok.tokens_out);
    assert!(lines[0].error.is_none());
    assert!(lines[1].error.is_some());
    assert!(lines[1].model_version.is_none());
    assert!(lines.iter().all(|e| chrono_like(&e.timestamp)));
}

fn chrono_like(ts: &str) -> bool {
    ts.len() >= 20 && ts.ends_with('Z') && ts.as_bytes()[4] == b'-' && ts.contains('T')
}

#[test]
fn unknown_provider_and_empty_messages_are_rejected_before_any_call() {
    let gw = Gateway::new(RetryPolicy::none()).register(Arc::new(MockProvider::new(MockScript::default().with_default("x"))));
    assert!(gw.generate(&GenerationRequest::new("nowhere:m", vec![Message::user("hi")])).is_err());
    assert!(gw.generate(&GenerationRequest::new("mock:m", vec![])).is_err());
    assert!(gw.generate(&GenerationRequest::new("no-provider-prefix", vec![Message::user("hi")])).is_err());
}
