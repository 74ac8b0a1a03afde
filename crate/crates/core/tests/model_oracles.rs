//! Trainer correctness against an independent optimizer and against the
//! mathematical structure of the objective (gradient, convexity, symmetry).

use xuci_core::features::{fit_standardizer, FeatureMatrix, Lexicon};
use xuci_core::model::{loss, train};

fn lex(n: usize) -> Lexicon {
    Lexicon::new(
        (0..n)
            .map(|i| char::from_u32(0x4E00 + i as u32).unwrap().to_string())
            .collect(),
    )
    .unwrap()
}

/// Deterministic frequency-like dataset (24 × 4) with an informative first
/// column; the optimum below was computed by an independent quasi-Newton
/// minimizer of the identical objective (mean NLL + λ/(2m)·Σw², population
/// standardization) and is accurate to about 1e-8.
fn reference_dataset() -> FeatureMatrix {
    let rows = vec![
        vec![0.0237, 0.0053, 0.0144, 0.012],
        vec![0.0456, 0.0267, 0.0064, 0.046],
        vec![0.0068, 0.0482, 0.0161, 0.0448],
        vec![0.0388, 0.0154, 0.0354, 0.0361],
        vec![0.0003, 0.0186, 0.0027, 0.0108],
        vec![0.0132, 0.0012, 0.003, 0.0398],
        vec![0.0129, 0.0308, 0.0172, 0.0026],
        vec![0.0222, 0.0336, 0.0249, 0.0004],
        vec![0.0171, 0.0274, 0.0279, 0.0002],
        vec![0.0393, 0.0413, 0.0027, 0.0314],
        vec![0.0373, 0.0397, 0.0109, 0.0293],
        vec![0.0405, 0.0438, 0.0082, 0.047],
        vec![0.0464, 0.0073, 0.0118, 0.0207],
        vec![0.0177, 0.0343, 0.0159, 0.001],
        vec![0.0432, 0.0098, 0.0429, 0.0212],
        vec![0.0262, 0.0076, 0.0337, 0.0391],
        vec![0.0125, 0.0178, 0.0221, 0.0441],
        vec![0.0353, 0.0323, 0.0359, 0.0005],
        vec![0.0264, 0.0129, 0.0485, 0.0176],
        vec![0.0437, 0.0146, 0.0127, 0.0375],
        vec![0.0032, 0.0402, 0.034, 0.0071],
        vec![0.0552, 0.0111, 0.0089, 0.0296],
        vec![0.0163, 0.0391, 0.0176, 0.0064],
        vec![0.0109, 0.0304, 0.0049, 0.0284],
    ];
    let labels: Vec<u8> = (0..24).map(|i| (i % 2) as u8).collect();
    FeatureMatrix::new(rows, labels, lex(4)).unwrap()
}

const REFERENCE_W: [f64; 4] = [
    0.6820231804329756,
    0.10260330404607662,
    -0.360896770990674,
    0.31988010809349143,
];
const REFERENCE_W0: f64 = 0.02683704564122974;
const REFERENCE_LOSS: f64 = 0.5880973740633457;

#[test]
fn trainer_matches_independent_optimizer() {
    let x = reference_dataset();
    let model = train(&x, 1.0, "A", "B").unwrap();
    for (j, (&got, &want)) in model.weights.iter().zip(&REFERENCE_W).enumerate() {
        assert!(
            (got - want).abs() < 1e-6,
            "w[{j}]: got {got}, reference {want}"
        );
    }
    assert!(
        (model.bias - REFERENCE_W0).abs() < 1e-6,
        "bias: got {}, reference {REFERENCE_W0}",
        model.bias
    );

    let std = fit_standardizer(&x).unwrap();
    let xs = FeatureMatrix::new(
        std.apply_rows(&x.rows).unwrap(),
        x.labels.clone(),
        x.lexicon.clone(),
    )
    .unwrap();
    let got_loss = loss(&model.weights, model.bias, &xs, 1.0);
    assert!(
        (got_loss - REFERENCE_LOSS).abs() < 1e-9,
        "loss: got {got_loss}, reference {REFERENCE_LOSS}"
    );
}

/// Central finite differences of the objective around a generic point must
/// match the closed-form gradient the trainer drives to zero — verified
/// indirectly: at the trained optimum, every directional derivative of the
/// loss is ~0.
#[test]
fn loss_is_stationary_at_the_trained_optimum() {
    let x = reference_dataset();
    let model = train(&x, 1.0, "A", "B").unwrap();
    let std = fit_standardizer(&x).unwrap();
    let xs = FeatureMatrix::new(
        std.apply_rows(&x.rows).unwrap(),
        x.labels.clone(),
        x.lexicon.clone(),
    )
    .unwrap();
    let h = 1e-6;
    let base = loss(&model.weights, model.bias, &xs, 1.0);
    for j in 0..model.weights.len() {
        let mut plus = model.weights.clone();
        let mut minus = model.weights.clone();
        plus[j] += h;
        minus[j] -= h;
        let d = (loss(&plus, model.bias, &xs, 1.0) - loss(&minus, model.bias, &xs, 1.0)) / (2.0 * h);
        assert!(d.abs() < 1e-7, "df/dw[{j}] = {d:e}");
        // Convexity spot check: stepping away in either direction increases
        // the objective beyond rounding.
        let mut far = model.weights.clone();
        far[j] += 0.05;
        assert!(loss(&far, model.bias, &xs, 1.0) > base - 1e-12);
        far[j] -= 0.10;
        assert!(loss(&far, model.bias, &xs, 1.0) > base - 1e-12);
    }
    let d0 = (loss(&model.weights, model.bias + h, &xs, 1.0)
        - loss(&model.weights, model.bias - h, &xs, 1.0))
        / (2.0 * h);
    assert!(d0.abs() < 1e-7, "df/dw0 = {d0:e}");
}

/// Relabeling the classes negates the decision function: predictions must
/// complement each other.
#[test]
fn label_swap_complements_predictions() {
    let x = reference_dataset();
    let swapped_labels: Vec<u8> = x.labels.iter().map(|&y| 1 - y).collect();
    let x_swapped =
        FeatureMatrix::new(x.rows.clone(), swapped_labels, x.lexicon.clone()).unwrap();
    let a = train(&x, 1.0, "A", "B").unwrap();
    let b = train(&x_swapped, 1.0, "B", "A").unwrap();
    for row in &x.rows {
        let pa = a.predict_proba_raw(row).unwrap();
        let pb = b.predict_proba_raw(row).unwrap();
        assert!((pa + pb - 1.0).abs() < 1e-7, "p + p' = {}", pa + pb);
    }
}

/// Crushing regularization drives the weights to zero and every prediction
/// to the class prior (the bias stays unpenalized).
#[test]
fn huge_lambda_reduces_to_the_prior() {
    let x = reference_dataset();
    let model = train(&x, 1e6, "A", "B").unwrap();
    let prior = x.labels.iter().map(|&y| y as f64).sum::<f64>() / x.m() as f64;
    for &w in &model.weights {
        assert!(w.abs() < 1e-4, "weight survived the penalty: {w}");
    }
    for row in &x.rows {
        let p = model.predict_proba_raw(row).unwrap();
        assert!((p - prior).abs() < 1e-3, "p = {p}, prior = {prior}");
    }
}

/// Training twice on the same matrix is bit-identical (full determinism of
/// the optimizer, including its line search).
#[test]
fn training_is_bit_deterministic() {
    let x = reference_dataset();
    let a = train(&x, 1.0, "A", "B").unwrap();
    let b = train(&x, 1.0, "A", "B").unwrap();
    assert_eq!(a.to_json(), b.to_json());
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        assert_eq!(wa.to_bits(), wb.to_bits());
    }
    assert_eq!(a.bias.to_bits(), b.bias.to_bits());
}
