//! Text and JSON renderings of typing results and theorem violations.

use caps_core::meta::MetaViolation;
use caps_core::typeck::{Judgment, Rule, TypeError};
use serde::Serialize;

#[derive(Serialize)]
struct ViolationRecord<'a> {
    theorem: &'a str,
    step: usize,
    binder: Option<&'a str>,
    message: &'a str,
    term: &'a str,
}

/// One JSON object per violation, no trailing newline.
pub fn violation_json(v: &MetaViolation) -> String {
    let r = ViolationRecord {
        theorem: v.theorem.as_str(),
        step: v.step,
        binder: v.binder.as_ref().map(|b| b.as_str()),
        message: &v.message,
        term: &v.term,
    };
    serde_json::to_string(&r).expect("violation records serialize")
}

fn join(rules: impl Iterator<Item = Rule>) -> String {
    rules.map(Rule::name).collect::<Vec<_>>().join(", ")
}

/// `who: ok <type>` plus the recovery rules and the full rule path.
pub fn judgment_lines(who: &str, j: &Judgment) -> Vec<String> {
    let recovery: Vec<Rule> =
        j.rule_path.iter().copied().filter(|r| !r.is_structural() && *r != Rule::Sub).collect();
    let mut out = vec![format!("{who}: ok {}", j.result)];
    if recovery.is_empty() {
        out.push("  recovery: none".to_string());
    } else {
        out.push(format!("  recovery: {}", join(recovery.into_iter())));
    }
    out.push(format!("  rule path: {}", join(j.rule_path.iter().copied())));
    out
}

pub fn error_lines(who: &str, e: &TypeError) -> Vec<String> {
    let mut out = vec![format!("{who}: rejected at {e}")];
    if let Some(b) = &e.blocking {
        out.push(format!("  blocking variable: {b}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use caps_core::meta::Theorem;
    use caps_core::Name;

    #[test]
    fn violation_json_round_trips() {
        let v = MetaViolation {
            theorem: Theorem::Capsule,
            step: 3,
            binder: Some(Name::new("z")),
            message: "not \"closed\"".into(),
            term: "{x}".into(),
        };
        let back: serde_json::Value = serde_json::from_str(&violation_json(&v)).unwrap();
        assert_eq!(back["theorem"], "capsule");
        assert_eq!(back["step"], 3);
        assert_eq!(back["binder"], "z");
        assert_eq!(back["message"], "not \"closed\"");
    }
}
