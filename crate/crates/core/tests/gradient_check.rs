mod common;

use common::gradcheck::{end_to_end_error, layer_errors};
use pitchflow::model::Head;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[test]
fn layers_f64() {
    for s in SEEDS {
        for (name, e) in layer_errors::<f64>(s) {
            assert!(e < 1e-6, "{name} seed {s}: {e:e}");
        }
    }
}

#[test]
fn layers_f32() {
    for s in SEEDS {
        for (name, e) in layer_errors::<f32>(s) {
            assert!(e < 1e-3, "{name} seed {s}: {e:e}");
        }
    }
}

#[test]
fn network_f64() {
    for head in [Head::SigmoidBinary, Head::Softmax { classes: 3 }] {
        for s in SEEDS {
            let e = end_to_end_error::<f64>(head, s);
            assert!(e < 1e-6, "{head:?} seed {s}: {e:e}");
        }
    }
}

#[test]
fn network_f32() {
    for head in [Head::SigmoidBinary, Head::Softmax { classes: 3 }] {
        for s in SEEDS {
            let e = end_to_end_error::<f32>(head, s);
            assert!(e < 1e-3, "{head:?} seed {s}: {e:e}");
        }
    }
}
