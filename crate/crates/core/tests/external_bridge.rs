use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use mmprobe::data::{GrayImage, Label, Meme};
use mmprobe::predictor::external::BridgeConnection;
use mmprobe::predictor::{external_predictor, lexicon_predictor, ExternalConfig, ExternalError, PredictError, PredictorHandle};
use mmprobe::segment::{MaskVector, MaskingPolicy, SegmentedMeme};
use mmprobe::shapley::{exact_shapley, modality_score};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bridge(args: &str) -> String {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bridge.py");
    format!("python3 {} {args}", script.display())
}

fn open(args: &str) -> Result<BridgeConnection, ExternalError> {
    BridgeConnection::open(&bridge(args), Duration::from_secs(10))
}

fn image() -> GrayImage {
    GrayImage::new(2, 2, vec![0, 64, 128, 255]).unwrap()
}

#[test]
fn echo_bridge_scores_half() {
    let mut c = open("echo").unwrap();
    assert_eq!(c.name(), "fixture-echo");
    for text in ["a b", "[MASK]", "x"] {
        assert_eq!(c.predict(text, &image()).unwrap(), 0.5);
    }
    c.shutdown().unwrap();
}

#[test]
fn contract_violations_are_typed() {
    assert_eq!(open("range").unwrap().predict("a", &image()), Err(ExternalError::ScoreOutOfRange(1.7)));
    assert_eq!(open("range 2.0").unwrap().predict("a", &image()), Err(ExternalError::ScoreOutOfRange(2.0)));
    let mut c = open("noreqid").unwrap();
    assert!(matches!(c.predict("a", &image()), Err(ExternalError::MalformedResponse(_))));
    // pairing is lost after a malformed reply
    assert_eq!(c.predict("a", &image()), Err(ExternalError::Broken));
    assert!(matches!(open("badhello"), Err(ExternalError::HandshakeFailed(_))));
    assert!(matches!(BridgeConnection::open("exit 3", Duration::from_secs(5)), Err(ExternalError::HandshakeFailed(_))));
}

#[test]
fn silent_bridge_times_out() {
    let mut c = BridgeConnection::open(&bridge("silent"), Duration::from_millis(300)).unwrap();
    assert_eq!(c.predict("a", &image()), Err(ExternalError::Timeout(Duration::from_millis(300))));
}

#[test]
fn unknown_message_type_gets_error_reply() {
    let mut c = open("echo").unwrap();
    let reply = c.exchange_raw(r#"{"type":"bogus","req_id":9}"#).unwrap();
    let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
    assert_eq!(v["type"], "error");
    assert_eq!(v["req_id"], 9);
}

#[test]
fn thousand_requests_stay_in_order() {
    let mut c = open("echo").unwrap();
    // decode_score rejects any reply whose req_id does not echo the request
    for i in 0..1000 {
        assert_eq!(c.predict(&format!("w{i}"), &image()).unwrap(), 0.5);
    }
}

#[test]
fn predictor_error_surfaces_through_handle() {
    let h = external_predictor(ExternalConfig::new(bridge("range"))).unwrap();
    let meme = random_meme(&mut ChaCha8Rng::seed_from_u64(0), 0);
    let masked = SegmentedMeme::new(&meme).unwrap().materialize(&MaskVector::all(meme_entities(&meme)), &MaskingPolicy::default()).unwrap();
    assert!(matches!(h.predict(&masked), Err(PredictError::ExternalPredictorFailure(ExternalError::ScoreOutOfRange(_)))));
}

const VOCAB: &[&str] = &["virus", "vote", "women", "cat", "sunny", "Hello,", "(friend)", "tax!", "it's", "go-team"];

fn lexicon_file() -> (tempfile::TempDir, PathBuf, PredictorHandle) {
    let weights: Vec<(&str, f64)> = vec![("virus", 2.0), ("vote", -1.25), ("women", 0.75), ("hello", 0.5), ("friend", -0.3), ("tax", 1.1), ("it's", 0.2), ("go-team", -0.9)];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lex.json");
    let map: serde_json::Map<String, serde_json::Value> = weights.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
    std::fs::write(&path, serde_json::Value::Object(map).to_string()).unwrap();
    (dir, path, lexicon_predictor(weights))
}

fn random_meme(rng: &mut ChaCha8Rng, i: usize) -> Meme {
    let k = rng.random_range(1..=6);
    let text: Vec<&str> = (0..k).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect();
    let side = rng.random_range(3..=8);
    let pixels = (0..side * side).map(|_| rng.random()).collect();
    Meme { id: format!("m{i}"), text: text.join(" "), image: GrayImage::new(side, side, pixels).unwrap(), caption: None, celebrities: None, label: Label::Hateful }
}

fn meme_entities(m: &Meme) -> usize {
    SegmentedMeme::new(m).unwrap().entity_index().total()
}

#[test]
fn bridged_lexicon_matches_native_on_random_masks() {
    let (_dir, path, native) = lexicon_file();
    let bridged = external_predictor(ExternalConfig::new(bridge(&format!("lexicon {}", path.display())))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let policy = MaskingPolicy::default();
    for i in 0..100 {
        let meme = random_meme(&mut rng, i);
        let seg = SegmentedMeme::new(&meme).unwrap();
        let mask = MaskVector((0..seg.entity_index().total()).map(|_| rng.random_bool(0.5)).collect());
        let masked = seg.materialize(&mask, &policy).unwrap();
        let (a, b) = (native.predict(&masked).unwrap(), bridged.predict(&masked).unwrap());
        assert!((a - b).abs() <= 1e-9, "mask {i}: native {a} bridged {b} text {:?}", masked.text);
    }
}

#[test]
fn bridged_lexicon_reproduces_native_text_share() {
    let (_dir, path, native) = lexicon_file();
    let cfg = ExternalConfig { connections: 3, ..ExternalConfig::new(bridge(&format!("lexicon {}", path.display()))) };
    let bridged = Arc::new(external_predictor(cfg).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let policy = MaskingPolicy::default();
    let mut compared = 0;
    while compared < 20 {
        let meme = random_meme(&mut rng, compared);
        if meme_entities(&meme) > 10 {
            continue;
        }
        let a = exact_shapley(&native, &meme, &policy).unwrap();
        let b = exact_shapley(&bridged, &meme, &policy).unwrap();
        match (modality_score(&a), modality_score(&b)) {
            (Ok(x), Ok(y)) => assert!((x.ts_magnitude - y.ts_magnitude).abs() <= 1e-9),
            (Err(_), Err(_)) => {}
            other => panic!("native and bridged disagree: {other:?}"),
        }
        compared += 1;
    }
}
