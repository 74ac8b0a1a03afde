//! Per-character evidence rendering and machine-readable attribution
//! reports.
//!
//! Every character covered by a matched discriminative n-gram is shaded in
//! the hue of the class its weight points to — red family for the positive
//! author, gray family for the negative — with intensity proportional to
//! |weight|. The darker the shade, the stronger the evidence.

use crate::corpus::{Chunk, Document, MASK, PARAGRAPH_SEP};
use crate::density::{stylome_density, z_test, DensityError, ReferenceDistribution};
use crate::features::{vectorize, FeatureError};
use crate::model::{ModelError, TrainedModel, EPS_P};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// Shading decision for one character of the input text.
#[derive(Debug, Clone, PartialEq)]
pub struct CharAnnotation {
    /// Index into the text's character (not byte) sequence.
    pub position: usize,
    pub ch: char,
    /// Signed weight of the strongest covering feature; 0.0 when no feature
    /// covers this character.
    pub weight: f64,
    /// The covering n-gram, when any matched.
    pub feature: Option<String>,
}

/// Computes one annotation per character. Every occurrence of every lexicon
/// n-gram covers its characters (a bigram covers both); a character under
/// several occurrences takes the weight of the largest |weight|, with ties
/// resolved toward the earlier lexicon entry. Masks and paragraph
/// separators are never part of a feature, so they always carry weight 0.
pub fn annotate_text(text: &str, model: &TrainedModel) -> Vec<CharAnnotation> {
    let chars: Vec<char> = text.chars().collect();
    let mut best: Vec<Option<(f64, usize)>> = vec![None; chars.len()];
    let mut cover = |pos: usize, weight: f64, feature_idx: usize| {
        let replace = match best[pos] {
            None => true,
            Some((w, _)) => weight.abs() > w.abs(),
        };
        if replace {
            best[pos] = Some((weight, feature_idx));
        }
    };
    for (fi, ngram) in model.lexicon.ngrams().iter().enumerate() {
        let weight = model.weights[fi];
        let mut git = ngram.chars();
        let first = git.next().expect("lexicon entries are non-empty");
        match git.next() {
            None => {
                for (pos, &c) in chars.iter().enumerate() {
                    if c == first {
                        cover(pos, weight, fi);
                    }
                }
            }
            Some(second) => {
                for pos in 1..chars.len() {
                    if chars[pos - 1] == first && chars[pos] == second {
                        cover(pos - 1, weight, fi);
                        cover(pos, weight, fi);
                    }
                }
            }
        }
    }
    chars
        .iter()
        .enumerate()
        .map(|(pos, &ch)| match best[pos] {
            Some((weight, fi)) => CharAnnotation {
                position: pos,
                ch,
                weight,
                feature: Some(model.lexicon.ngrams()[fi].clone()),
            },
            None => CharAnnotation {
                position: pos,
                ch,
                weight: 0.0,
                feature: None,
            },
        })
        .collect()
}

/// Everything the HTML page shows besides the annotated text itself.
#[derive(Debug, Clone)]
pub struct RenderMetadata {
    pub doc_id: String,
    pub title: String,
    pub positive_label: String,
    pub negative_label: String,
    pub probability_positive: f64,
    /// Color-ramp normalizer; normally the model's max |weight|.
    pub max_abs_weight: f64,
    /// Hash of the model file the shading came from, for traceability.
    pub model_sha256: Option<String>,
    /// Extra provenance lines embedded as HTML comments (e.g. config hash).
    pub provenance: Vec<String>,
}

const POSITIVE_RGB: (u8, u8, u8) = (0xc0, 0x39, 0x2b); // red family
const NEGATIVE_RGB: (u8, u8, u8) = (0x55, 0x5f, 0x66); // gray family

fn lerp_channel(full: u8, t: f64) -> u8 {
    // Neutral is white; t = 1 reaches the full hue.
    (255.0 + (full as f64 - 255.0) * t).round() as u8
}

/// Background color for a signed weight under the given normalizer.
fn weight_color(weight: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 {
        (weight.abs() / max_abs).min(1.0)
    } else {
        0.0
    };
    let (r, g, b) = if weight >= 0.0 {
        POSITIVE_RGB
    } else {
        NEGATIVE_RGB
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp_channel(r, t),
        lerp_channel(g, t),
        lerp_channel(b, t)
    )
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Renders the annotated text as a self-contained static HTML page: inline
/// styles only, no scripts, no external resources. Between the
/// `<!-- text-begin -->` and `<!-- text-end -->` markers, stripping tags and
/// decoding entities recovers the input text character-for-character
/// (paragraph separators appear as literal newlines between `<p>` blocks).
/// Output is byte-deterministic for identical inputs.
pub fn render_html(annotations: &[CharAnnotation], meta: &RenderMetadata) -> String {
    let mut out = String::new();
    let title = escape_html(&meta.title);
    let pos_label = escape_html(&meta.positive_label);
    let neg_label = escape_html(&meta.negative_label);
    out.push_str("<!DOCTYPE html>\n<html lang=\"zh\">\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str(&format!("<title>{title}</title>\n"));
    out.push_str("</head>\n");
    out.push_str(
        "<body style=\"font-family:serif;max-width:42em;margin:2em auto;color:#1a1a1a;\">\n",
    );
    out.push_str(&format!("<h1 style=\"font-size:1.3em;\">{title}</h1>\n"));
    out.push_str(&format!(
        "<p style=\"font-size:0.9em;\">Document <code>{}</code> &middot; P({}) = {:.3}</p>\n",
        escape_html(&meta.doc_id),
        pos_label,
        meta.probability_positive,
    ));
    out.push_str(&format!(
        "<p style=\"font-size:0.9em;\">Legend: <span style=\"background-color:{};padding:0 0.3em;\">{}</span> \
         <span style=\"background-color:{};color:#ffffff;padding:0 0.3em;\">{}</span> \
         &mdash; darker shades mark larger absolute weights (ramp normalized to max |w| = {:.4}).</p>\n",
        weight_color(1.0, 2.0),
        pos_label,
        weight_color(-1.0, 1.0),
        neg_label,
        meta.max_abs_weight,
    ));
    out.push_str("<div style=\"line-height:1.9;font-size:1.15em;\">\n");
    out.push_str("<!-- text-begin -->");
    let mut at_paragraph_start = true;
    for ann in annotations {
        if at_paragraph_start {
            out.push_str("<p style=\"margin:0.6em 0;\">");
            at_paragraph_start = false;
        }
        if ann.ch == PARAGRAPH_SEP {
            out.push_str("</p>");
            out.push(PARAGRAPH_SEP);
            at_paragraph_start = true;
            continue;
        }
        if ann.weight != 0.0 && ann.ch != MASK {
            let color = weight_color(ann.weight, meta.max_abs_weight);
            let fg = if ann.weight < 0.0 && ann.weight.abs() / meta.max_abs_weight.max(f64::MIN_POSITIVE) > 0.55 {
                "color:#ffffff;"
            } else {
                ""
            };
            let feature = ann.feature.as_deref().unwrap_or("");
            out.push_str(&format!(
                "<span style=\"background-color:{color};{fg}\" title=\"{} {:+.4}\">",
                escape_html(feature),
                ann.weight,
            ));
            let mut buf = [0u8; 4];
            out.push_str(&escape_html(ann.ch.encode_utf8(&mut buf)));
            out.push_str("</span>");
        } else {
            let mut buf = [0u8; 4];
            out.push_str(&escape_html(ann.ch.encode_utf8(&mut buf)));
        }
    }
    if !at_paragraph_start {
        out.push_str("</p>");
    }
    out.push_str("<!-- text-end -->\n");
    out.push_str("</div>\n");
    if let Some(hash) = &meta.model_sha256 {
        out.push_str(&format!("<!-- model-sha256: {hash} -->\n"));
    }
    for line in &meta.provenance {
        out.push_str(&format!("<!-- {} -->\n", escape_html(line)));
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// One lexicon entry's raw occurrence count in a document, with its weight.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureCount {
    pub ngram: String,
    pub count: usize,
    pub weight: f64,
}

/// Machine-readable attribution verdict for one document.
#[derive(Debug, Clone, Serialize)]
pub struct AttributionReport {
    pub id: String,
    pub title: String,
    pub positive_label: String,
    pub negative_label: String,
    pub probability_positive: f64,
    /// probability/(1 − probability), clamped away from 0 and infinity.
    pub odds: f64,
    pub predicted_author: String,
    pub stylome_density: f64,
    pub z: f64,
    pub p_two_sided: f64,
    pub reject_at_0_05: bool,
    pub feature_counts: Vec<FeatureCount>,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_sha256: Option<String>,
}

impl AttributionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Scores a whole document: classifier probability and odds, stylome
/// density with its z-test against the reference, per-feature occurrence
/// counts, and a one-line verdict.
pub fn attribution_report(
    model: &TrainedModel,
    reference: &ReferenceDistribution,
    doc: &Document,
    model_sha256: Option<String>,
) -> Result<AttributionReport, ReportError> {
    let chunk = Chunk::new(doc.id.clone(), 0, doc.text.clone());
    let v = vectorize(&chunk, &model.lexicon)?;
    let p = model.predict_proba_raw(&v)?;
    let p_clamped = p.clamp(EPS_P, 1.0 - EPS_P);
    let odds = p_clamped / (1.0 - p_clamped);
    let density = stylome_density(&chunk, &model.lexicon)?;
    let test = z_test(density, reference);
    let feature_counts = model
        .lexicon
        .ngrams()
        .iter()
        .zip(&model.weights)
        .map(|(g, &w)| FeatureCount {
            ngram: g.clone(),
            count: crate::features::count_ngram(&chunk.text, g),
            weight: w,
        })
        .collect();
    let predicted_author = if p > 0.5 {
        model.positive_label.clone()
    } else if p < 0.5 {
        model.negative_label.clone()
    } else {
        format!("undecided: {} / {}", model.positive_label, model.negative_label)
    };
    let density_clause = if test.reject_at_0_05 {
        "density departs from the single-authored reference at the 0.05 level"
    } else {
        "density is consistent with the single-authored reference at the 0.05 level"
    };
    let verdict = format!(
        "attributed to {} with probability {:.3} (odds {:.1}:1); {}",
        predicted_author, p, odds, density_clause,
    );
    Ok(AttributionReport {
        id: doc.id.clone(),
        title: doc.title.clone(),
        positive_label: model.positive_label.clone(),
        negative_label: model.negative_label.clone(),
        probability_positive: p,
        odds,
        predicted_author,
        stylome_density: density,
        z: test.z,
        p_two_sided: test.p_two_sided,
        reject_at_0_05: test.reject_at_0_05,
        feature_counts,
        verdict,
        model_sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Lexicon, Standardizer};
    use crate::model::MODEL_FORMAT_VERSION;

    fn toy_model(entries: &[(&str, f64)]) -> TrainedModel {
        let lexicon =
            Lexicon::new(entries.iter().map(|(g, _)| g.to_string()).collect()).unwrap();
        let n = entries.len();
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            positive_label: "A".into(),
            negative_label: "B".into(),
            lambda: 1.0,
            bias: 0.0,
            lexicon,
            weights: entries.iter().map(|(_, w)| *w).collect(),
            standardizer: Standardizer {
                means: vec![0.0; n],
                sds: vec![1.0; n],
                constant: vec![false; n],
                variance_convention: "population".into(),
            },
            notes: None,
        }
    }

    #[test]
    fn annotates_single_character() {
        let model = toy_model(&[("之", 0.4)]);
        let anns = annotate_text("之", &model);
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].weight, 0.4);
        assert_eq!(anns[0].feature.as_deref(), Some("之"));
    }

    #[test]
    fn masks_never_annotated() {
        let model = toy_model(&[("之", 0.4)]);
        let anns = annotate_text("☒☒", &model);
        assert_eq!(anns.len(), 2);
        for a in &anns {
            assert_eq!(a.weight, 0.0);
            assert_eq!(a.ch, MASK);
            assert!(a.feature.is_none());
        }
    }

    #[test]
    fn covering_takes_max_abs_weight() {
        let model = toy_model(&[("于", 0.22), ("是", 0.26), ("于是", 0.26)]);
        let anns = annotate_text("于是", &model);
        assert_eq!(anns[0].weight, 0.26);
        assert_eq!(anns[1].weight, 0.26);
        // 于 is upgraded by the bigram; 是 ties with it and the earlier
        // lexicon entry (the unigram) wins.
        assert_eq!(anns[0].feature.as_deref(), Some("于是"));
        assert_eq!(anns[1].feature.as_deref(), Some("是"));
    }

    #[test]
    fn negative_weights_keep_sign() {
        let model = toy_model(&[("也", -0.31)]);
        let anns = annotate_text("也哉", &model);
        assert_eq!(anns[0].weight, -0.31);
        assert_eq!(anns[1].weight, 0.0);
    }

    fn strip_text_region(html: &str) -> String {
        let begin = html.find("<!-- text-begin -->").expect("begin sentinel") + "<!-- text-begin -->".len();
        let end = html.find("<!-- text-end -->").expect("end sentinel");
        let region = &html[begin..end];
        let mut out = String::new();
        let mut in_tag = false;
        for c in region.chars() {
            match c {
                '<' => in_tag = true,
                '>' => in_tag = false,
                _ if !in_tag => out.push(c),
                _ => {}
            }
        }
        out.replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&#39;", "'")
            .replace("&amp;", "&")
    }

    fn meta() -> RenderMetadata {
        RenderMetadata {
            doc_id: "doc-1".into(),
            title: "試".into(),
            positive_label: "A".into(),
            negative_label: "B".into(),
            probability_positive: 0.75,
            max_abs_weight: 0.4,
            model_sha256: Some("abc123".into()),
            provenance: vec!["config-sha256: 00ff".into()],
        }
    }

    #[test]
    fn html_roundtrips_text() {
        let model = toy_model(&[("之", 0.4), ("也", -0.2)]);
        let text = "之乎者也☒\n又一段之";
        let anns = annotate_text(text, &model);
        let html = render_html(&anns, &meta());
        assert_eq!(strip_text_region(&html), text);
        assert!(html.contains("model-sha256: abc123"));
        assert!(!html.contains("<script"));
        assert!(!html.contains("http://"));
        assert!(!html.contains("https://"));
    }

    #[test]
    fn html_is_deterministic() {
        let model = toy_model(&[("之", 0.4)]);
        let anns = annotate_text("之乎", &model);
        let a = render_html(&anns, &meta());
        let b = render_html(&anns, &meta());
        assert_eq!(a, b);
    }

    #[test]
    fn hue_swaps_with_weight_sign_at_same_intensity() {
        let pos = weight_color(0.3, 0.4);
        let neg = weight_color(-0.3, 0.4);
        assert_ne!(pos, neg);
        // Same |w| on the positive side reproduces the same color.
        assert_eq!(pos, weight_color(0.3, 0.4));
        // Intensity is monotone: weaker weight is lighter (closer to white).
        let weak = weight_color(0.1, 0.4);
        assert_ne!(weak, pos);
    }

    #[test]
    fn odds_from_probability() {
        assert!((0.833f64 / (1.0 - 0.833) - 4.988).abs() < 0.01);
        let model = toy_model(&[("之", 0.5)]);
        let reference = ReferenceDistribution::from_params(0.12, 0.02).unwrap();
        let doc = Document::new(
            "d1",
            "A",
            crate::corpus::Split::Test,
            "t",
            "之乎者也之乎者也",
            None,
        )
        .unwrap();
        let report = attribution_report(&model, &reference, &doc, None).unwrap();
        let expect_odds = report.probability_positive / (1.0 - report.probability_positive);
        assert!((report.odds - expect_odds).abs() < 1e-9);
        assert_eq!(report.feature_counts[0].count, 2);
        assert!((report.stylome_density - 0.25).abs() < 1e-12);
    }
}
