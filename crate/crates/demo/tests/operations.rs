use medeval_demo::{adjust_json, score_json, segment_json};
use serde_json::Value;

#[test]
fn segment_reports_blocks_in_document_coordinates() {
    let v: Value = serde_json::from_str(&segment_json("patient took advil for pain", 14).unwrap()).unwrap();
    let blocks = v.as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[1]["text"], "advil for pain");
    assert_eq!(blocks[1]["base_offset"], 13);
    assert!(segment_json("x", 0).is_err());
}

#[test]
fn score_tylenol_against_full_name() {
    let text = "MEDICATIONS: Lipitor, Tylenol with Codeine";
    let gold = r#"[{"field":"NAME","begin":13,"end":20},{"field":"NAME","begin":22,"end":42}]"#;
    let pred = r#"[{"field":"NAME","begin":13,"end":20},{"field":"NAME","begin":22,"end":29}]"#;
    let v: Value = serde_json::from_str(&score_json(text, gold, pred).unwrap()).unwrap();
    let by_mode = |m: &str| v.as_array().unwrap().iter().find(|r| r["mode"] == m).unwrap().clone();
    assert_eq!(by_mode("exact")["counts"]["tp"], 1);
    assert_eq!(by_mode("lenient-span")["counts"]["tp"], 2);
    // Tokens: Lipitor, + Tylenol with Codeine; "with" and "Codeine" stay uncovered.
    let token = by_mode("lenient-token");
    assert_eq!((token["counts"]["tp"].as_u64(), token["counts"]["fn"].as_u64()), (Some(2), Some(2)));
    assert!(score_json(text, r#"[{"field":"NAME","begin":5,"end":99}]"#, "[]").is_err());
    assert!(score_json(text, "not json", "[]").is_err());
}

#[test]
fn adjust_reproduces_published_reason_row() {
    let input = r#"{"precision":0.801,"recall":0.737,"baseline_gold":20699,"field_gold":1342,
        "scenarios":[{"kind":"precision-recall","precision":0.668,"recall":0.331},{"kind":"perfect"},
                     {"kind":"f-at-recall","f_score":0.9,"recall":0.45}]}"#;
    let v: Value = serde_json::from_str(&adjust_json(input).unwrap()).unwrap();
    let f = v["rows"][0]["metrics"]["f_score"].as_f64().unwrap();
    assert!((f - 0.752).abs() < 0.001, "{f}");
    assert_eq!(v["rows"][1]["field_counts"]["tp"], 1342);
    assert!(v["rows"][2]["error"].as_str().unwrap().contains("recall"));
}
