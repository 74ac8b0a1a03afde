//! Property-based tests of the structural invariants: masking, chunking,
//! counting, vectorization, standardization, density, and rendering.

use proptest::prelude::*;
use xuci_core::corpus::{
    apply_masks, chunk_document, non_separator_len, Chunk, Document, Split, MASK, PARAGRAPH_SEP,
};
use xuci_core::density::{stylome_density, z_test, ReferenceDistribution};
use xuci_core::features::{
    count_ngram, fit_standardizer, vectorize, FeatureMatrix, Lexicon, Standardizer,
};
use xuci_core::model::{sigmoid, TrainedModel, MODEL_FORMAT_VERSION};
use xuci_core::report::{annotate_text, render_html, RenderMetadata};

/// A small inventory so collisions (and hence feature matches) are common.
const POOL: &[char] = &['之', '乎', '者', '也', '矣', '山', '水', '风', '月', '☒'];

fn char_pool() -> impl Strategy<Value = char> {
    proptest::sample::select(POOL.to_vec())
}

fn paragraph(min_len: usize) -> impl Strategy<Value = String> {
    proptest::collection::vec(char_pool(), min_len..60)
        .prop_map(|cs| cs.into_iter().collect::<String>())
}

fn document_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(paragraph(1), 1..8).prop_map(|ps| ps.join("\n"))
}

proptest! {
    /// Masking never changes the character count, masks exactly the
    /// requested positions, and leaves everything else untouched.
    #[test]
    fn masking_is_positionally_exact(
        text in paragraph(1),
        raw_spans in proptest::collection::vec((0usize..40, 1usize..6), 0..4),
    ) {
        let chars: Vec<char> = text.chars().collect();
        // Build non-overlapping in-bounds spans from the raw pairs.
        let mut spans: Vec<(usize, usize)> = Vec::new();
        let mut cursor = 0usize;
        for (gap, len) in raw_spans {
            let start = cursor + gap % 7;
            let end = start + len;
            if end > chars.len() {
                break;
            }
            spans.push((start, end));
            cursor = end;
        }
        let masked = apply_masks(&text, &spans).unwrap();
        let masked_chars: Vec<char> = masked.chars().collect();
        prop_assert_eq!(masked_chars.len(), chars.len());
        for (i, (&orig, &got)) in chars.iter().zip(&masked_chars).enumerate() {
            let inside = spans.iter().any(|&(s, e)| s <= i && i < e);
            if inside {
                prop_assert_eq!(got, MASK);
            } else {
                prop_assert_eq!(got, orig);
            }
        }
    }

    /// Chunking partitions the document: joining chunk texts with the
    /// separator reconstructs the document, and every chunk's recorded
    /// length is its non-separator character count.
    #[test]
    fn chunking_partitions_the_document(text in document_text(), target in 1usize..80) {
        let doc = Document::new("d", "A", Split::Train, "t", text.clone(), None).unwrap();
        let chunks = chunk_document(&doc, target);
        let rejoined: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        prop_assert_eq!(rejoined.join("\n"), text.clone());
        let max_para = text.split(PARAGRAPH_SEP).map(|p| p.chars().count()).max().unwrap();
        for c in &chunks {
            prop_assert_eq!(c.length, non_separator_len(&c.text));
            prop_assert!(c.length <= target.max(max_para));
        }
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
        }
    }

    /// Unigram counts are exactly additive over concatenation; bigram counts
    /// differ only by the possible match spanning the join point.
    #[test]
    fn counting_respects_concatenation(a in paragraph(1), b in paragraph(1)) {
        let joined = format!("{a}{b}");
        let uni = count_ngram(&joined, "之");
        prop_assert_eq!(uni, count_ngram(&a, "之") + count_ngram(&b, "之"));
        let bi = count_ngram(&joined, "之乎");
        let parts = count_ngram(&a, "之乎") + count_ngram(&b, "之乎");
        prop_assert!(bi >= parts && bi <= parts + 1);
    }

    /// Frequencies are bounded and use the non-separator denominator.
    #[test]
    fn vector_entries_are_frequencies(text in document_text()) {
        let lex = Lexicon::new(vec!["之".into(), "乎".into(), "之乎".into()]).unwrap();
        let chunk = Chunk::new("d", 0, text.clone());
        prop_assume!(chunk.length > 0);
        let v = vectorize(&chunk, &lex).unwrap();
        for (g, &f) in lex.ngrams().iter().zip(&v) {
            prop_assert!((0.0..=1.0).contains(&f), "freq({g}) = {f}");
            let count = count_ngram(&text, g);
            prop_assert_eq!(f, count as f64 / chunk.length as f64);
        }
    }

    /// Standardized training columns have mean ≈ 0 and population variance
    /// ≈ 1; constant columns map to exactly 0 whatever the input value.
    #[test]
    fn standardizer_normalizes_training_columns(
        seed_rows in proptest::collection::vec(
            proptest::collection::vec(0.0f64..0.2, 3), 2..20),
        constant_value in 0.0f64..0.5,
        probe in 0.0f64..1.0,
    ) {
        // Three varying columns plus one deliberately constant column.
        let rows: Vec<Vec<f64>> = seed_rows
            .iter()
            .map(|r| vec![r[0], r[1], r[2], constant_value])
            .collect();
        let m = rows.len();
        let labels = vec![0u8; m];
        let lex = Lexicon::new(vec!["一".into(), "二".into(), "三".into(), "四".into()]).unwrap();
        let x = FeatureMatrix::new(rows.clone(), labels, lex).unwrap();
        let std = fit_standardizer(&x).unwrap();
        let standardized = std.apply_rows(&x.rows).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = standardized.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / m as f64;
            prop_assert!(mean.abs() < 1e-9, "col {j} mean {mean}");
            let all_equal = rows.iter().all(|r| r[j].to_bits() == rows[0][j].to_bits());
            if !all_equal {
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
                prop_assert!((var - 1.0).abs() < 1e-9, "col {j} var {var}");
            }
        }
        prop_assert!(std.constant[3]);
        let mut probe_row = vec![0.05, 0.05, 0.05, probe];
        let out = std.apply(&probe_row).unwrap();
        prop_assert_eq!(out[3], 0.0);
        probe_row[3] = f64::NAN;
        prop_assert_eq!(std.apply(&probe_row).unwrap()[3], 0.0);
    }

    /// The logistic link is monotone and symmetric.
    #[test]
    fn sigmoid_shape(z in -700.0f64..700.0, dz in 0.0f64..10.0) {
        let p = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(sigmoid(z + dz) >= p);
        prop_assert!((sigmoid(-z) - (1.0 - p)).abs() < 1e-15);
    }

    /// Density is additive over disjoint lexicon splits.
    #[test]
    fn density_additive(text in document_text(), split_at in 1usize..3) {
        let chunk = Chunk::new("d", 0, text);
        prop_assume!(chunk.length > 0);
        let all = ["之", "乎", "者"];
        let lex_all = Lexicon::new(all.iter().map(|s| s.to_string()).collect()).unwrap();
        let lex_a = Lexicon::new(all[..split_at].iter().map(|s| s.to_string()).collect()).unwrap();
        let lex_b = Lexicon::new(all[split_at..].iter().map(|s| s.to_string()).collect()).unwrap();
        let whole = stylome_density(&chunk, &lex_all).unwrap();
        let a = stylome_density(&chunk, &lex_a).unwrap();
        let b = stylome_density(&chunk, &lex_b).unwrap();
        prop_assert!((whole - (a + b)).abs() <= 1e-12 * (1.0 + whole.abs()));
    }

    /// The z-test is exactly affine-invariant under a common positive scale.
    #[test]
    fn z_test_affine_invariance(
        density in 0.0f64..1.0,
        mu in 0.01f64..0.5,
        sigma in 0.001f64..0.1,
        scale in 0.1f64..50.0,
    ) {
        let r1 = ReferenceDistribution::from_params(mu, sigma).unwrap();
        let r2 = ReferenceDistribution::from_params(mu * scale, sigma * scale).unwrap();
        let t1 = z_test(density, &r1);
        let t2 = z_test(density * scale, &r2);
        prop_assert!((t1.z - t2.z).abs() < 1e-9 * (1.0 + t1.z.abs()));
        prop_assert!((t1.p_two_sided - t2.p_two_sided).abs() < 1e-9);
        prop_assert_eq!(t1.reject_at_0_05, t2.reject_at_0_05);
    }

    /// Stripping markup from the rendered page recovers the text exactly,
    /// and negating every weight swaps hues without moving intensities.
    #[test]
    fn render_roundtrip_and_hue_swap(text in document_text()) {
        let model = toy_model(&[("之", 0.4), ("乎", -0.25), ("之乎", 0.3)]);
        let annotations = annotate_text(&text, &model);
        let html = render_html(&annotations, &metadata());
        prop_assert_eq!(strip_text_region(&html), text.clone());

        let mut negated = model.clone();
        for w in &mut negated.weights {
            *w = -*w;
        }
        let flipped = annotate_text(&text, &negated);
        for (a, b) in annotations.iter().zip(&flipped) {
            prop_assert_eq!(a.ch, b.ch);
            prop_assert!((a.weight + b.weight).abs() < 1e-15);
        }
    }
}

fn toy_model(entries: &[(&str, f64)]) -> TrainedModel {
    let lexicon = Lexicon::new(entries.iter().map(|(g, _)| g.to_string()).collect()).unwrap();
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

fn metadata() -> RenderMetadata {
    RenderMetadata {
        doc_id: "prop-doc".into(),
        title: "property".into(),
        positive_label: "A".into(),
        negative_label: "B".into(),
        probability_positive: 0.5,
        max_abs_weight: 0.4,
        model_sha256: None,
        provenance: Vec::new(),
    }
}

fn strip_text_region(html: &str) -> String {
    let begin = html.find("<!-- text-begin -->").expect("begin sentinel")
        + "<!-- text-begin -->".len();
    let end = html.find("<!-- text-end -->").expect("end sentinel");
    let mut out = String::new();
    let mut in_tag = false;
    for c in html[begin..end].chars() {
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
