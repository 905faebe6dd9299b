//! Span extraction and the evaluation report on hand-written predictions.

use coguiding::metrics::{extract_spans, per_label_counts, EvalReport, Labelled};

fn row(intents: &[&str], slots: &[&str]) -> Labelled {
    Labelled {
        intents: intents.iter().map(|s| s.to_string()).collect(),
        slots: slots.iter().map(|s| s.to_string()).collect(),
    }
}

fn main() {
    let golds = vec![
        row(&["flight", "fare"], &["O", "B-city", "I-city", "O", "B-day"]),
        row(&["airline"], &["O", "O", "B-code"]),
    ];
    let preds = vec![
        row(&["fare", "flight"], &["O", "B-city", "I-city", "O", "B-day"]),
        row(&["airline"], &["O", "I-code", "I-code"]),
    ];
    for p in &preds {
        println!("{:?}", extract_spans(&p.slots));
    }
    let report = EvalReport::compute(&preds, &golds, false);
    println!("{report}");
    println!("{}", report.to_json());

    let ps: Vec<_> = preds.iter().map(|p| p.slots.clone()).collect();
    let gs: Vec<_> = golds.iter().map(|g| g.slots.clone()).collect();
    let mut per_label: Vec<_> = per_label_counts(&ps, &gs).into_iter().collect();
    per_label.sort_by(|a, b| a.0.cmp(&b.0));
    for (label, s) in per_label {
        println!("{label:<6} p {:.2} r {:.2} f1 {:.2}", s.precision, s.recall, s.f1);
    }
}
