use serde::Serialize;

use tagatar_core::eval::EvalReport;
use tagatar_core::schema::ValidationReport;
use tagatar_core::{Fraction, MatchResult, Session, SessionReport};

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text
}

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                s.push_str(&format!("{cell:<w$}  "));
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn opt(value: &Option<Fraction>) -> String {
    value
        .as_ref()
        .map(Fraction::to_decimal)
        .unwrap_or_else(|| "-".into())
}

pub fn validation_table(report: &ValidationReport) -> String {
    let mut out = String::new();
    for issue in &report.issues {
        out.push_str(&format!("{issue}\n"));
    }
    out.push_str(if report.ok { "schema ok\n" } else { "schema invalid\n" });
    out
}

#[derive(Debug, Serialize)]
pub struct FilterSummary {
    pub total: usize,
    pub kept: usize,
    pub threshold: f64,
}

impl FilterSummary {
    pub fn line(&self) -> String {
        format!(
            "kept {} of {} entries at threshold {}\n",
            self.kept, self.total, self.threshold
        )
    }
}

pub fn session_line(session: &Session) -> String {
    format!(
        "session {} ({}, {} images, seed {})\n",
        session.session_id,
        if session.is_open() { "open" } else { "closed" },
        session.batch.len(),
        session.seed
    )
}

pub fn sessions_table(sessions: &[Session]) -> String {
    let rows: Vec<Vec<String>> = sessions
        .iter()
        .map(|s| {
            vec![
                s.session_id.clone(),
                if s.is_open() { "open" } else { "closed" }.to_string(),
                s.batch.len().to_string(),
                s.annotator_ids.len().to_string(),
                s.schema_version.clone(),
            ]
        })
        .collect();
    table(&["session", "status", "images", "annotators", "schema"], &rows)
}

pub fn report_table(report: &SessionReport) -> String {
    let mut out = format!(
        "session {} (schema {})\n\n",
        report.session_id, report.schema_version
    );
    match &report.summary {
        Some(s) => out.push_str(&table(
            &["highest", "lowest", "average", "images"],
            &[vec![
                s.highest_image_agreement.to_decimal(),
                s.lowest_image_agreement.to_decimal(),
                s.average_image_agreement.to_decimal(),
                s.images_counted.to_string(),
            ]],
        )),
        None => out.push_str("no image has an agreed tag yet\n"),
    }
    if !report.excluded_images.is_empty() {
        out.push_str(&format!(
            "excluded (no agreed tag): {}\n",
            report.excluded_images.join(", ")
        ));
    }
    out.push('\n');
    let mut rows = Vec::new();
    for category in &report.per_tag {
        for tag in &category.tags {
            rows.push(vec![
                category.category_id.clone(),
                tag.option_id.clone(),
                tag.a.to_string(),
                opt(&tag.mean),
            ]);
        }
    }
    out.push_str(&table(&["category", "option", "a", "agreement"], &rows));
    out.push('\n');
    let rows: Vec<Vec<String>> = report
        .per_image
        .iter()
        .map(|i| vec![i.image_id.clone(), i.t.to_string(), opt(&i.mean)])
        .collect();
    out.push_str(&table(&["image", "t", "agreement"], &rows));
    out
}

pub fn match_table(result: &MatchResult) -> String {
    let rows: Vec<Vec<String>> = result
        .ranked
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                (i + 1).to_string(),
                r.asset_id.clone(),
                r.score.to_exact_string(),
                r.score.to_decimal(),
            ]
        })
        .collect();
    let mut out = table(&["rank", "asset_id", "score", "decimal"], &rows);
    out.push_str(&format!(
        "best: {}{}\n",
        result.best.join(", "),
        if result.tie { " (tie)" } else { "" }
    ));
    out
}

pub fn eval_table(report: &EvalReport) -> String {
    let mut out = String::new();
    for category in &report.categories {
        out.push_str(&format!(
            "{}: accuracy {} ({}/{})\n",
            category.category_id,
            category.accuracy.to_decimal(),
            category.correct,
            category.total
        ));
        let rows: Vec<Vec<String>> = category
            .tags
            .iter()
            .map(|t| {
                vec![
                    t.option_id.clone(),
                    t.precision.to_decimal(),
                    t.recall.to_decimal(),
                    t.support.to_string(),
                    t.predicted_count.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(
            &["option", "precision", "recall", "support", "predicted"],
            &rows,
        ));
        out.push('\n');
    }
    out
}
